#pragma once

#include <Eigen/Core>

namespace negrasp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Grasp state vector: [omega(3), tau(3), width], the layout used by the
// forward/reverse diffusion arithmetic and by all file formats.
using Vec7 = Eigen::Matrix<double, 7, 1>;

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

}  // namespace negrasp
