#pragma once

#include <cstdint>

#include "tidal/env.h"
#include "tidal/mlp.h"

namespace tidal {

// Stand-in for the language instruction: a 2-way one-hot.
enum class TaskTag { kDynamic = 0, kStatic = 1 };
inline constexpr int kTaskTagDim = 2;

inline TaskTag TaskTagFor(Tier tier) {
  return tier == Tier::kStatic ? TaskTag::kStatic : TaskTag::kDynamic;
}

// Cached macro-tick embedding, frozen for the duration of a macro-cycle.
struct IntentEmbedding {
  Vector values;
  int born_step = 0;  // world time step of the source observation

  std::uint64_t Checksum() const;
};

// Network input row: the flattened grid followed by the task one-hot.
Vector IntentInput(const GridObs& obs, TaskTag tag);
void WriteIntentInput(const GridObs& obs, TaskTag tag, double* row);

IntentEmbedding EncodeIntent(const MlpNetwork& net, const GridObs& obs, TaskTag tag);

}  // namespace tidal
