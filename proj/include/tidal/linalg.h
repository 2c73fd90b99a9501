#pragma once

#include <Eigen/Dense>

namespace tidal {

// Row-major dense matrix; batched network inputs put one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;

}  // namespace tidal
