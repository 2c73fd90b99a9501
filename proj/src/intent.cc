#include "tidal/intent.h"

#include <algorithm>

#include "tidal/errors.h"

namespace tidal {

std::uint64_t IntentEmbedding::Checksum() const {
  return Fnv1a(values.data(), static_cast<std::size_t>(values.size()) * sizeof(double));
}

void WriteIntentInput(const GridObs& obs, TaskTag tag, double* row) {
  std::copy(obs.cells.begin(), obs.cells.end(), row);
  const std::size_t n = obs.cells.size();
  row[n] = tag == TaskTag::kDynamic ? 1.0 : 0.0;
  row[n + 1] = tag == TaskTag::kStatic ? 1.0 : 0.0;
}

Vector IntentInput(const GridObs& obs, TaskTag tag) {
  Vector v(static_cast<Eigen::Index>(obs.cells.size()) + kTaskTagDim);
  WriteIntentInput(obs, tag, v.data());
  return v;
}

IntentEmbedding EncodeIntent(const MlpNetwork& net, const GridObs& obs, TaskTag tag) {
  const auto expected = static_cast<int>(obs.cells.size()) + kTaskTagDim;
  if (net.input_dim() != expected) {
    throw ConfigError("encode_intent: network expects " + std::to_string(net.input_dim()) +
                      " inputs, observation provides " + std::to_string(expected));
  }
  IntentEmbedding e;
  e.values = net.Forward(IntentInput(obs, tag));
  return e;
}

}  // namespace tidal
