#pragma once

#include <Eigen/Dense>

namespace mmcl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;
using MatRef = Eigen::Ref<const Eigen::MatrixXd>;
using Index = Eigen::Index;

}  // namespace mmcl
