#pragma once

#include <array>

#include "ttm/tensor.hpp"

namespace ttm::pose {

using Vec3 = std::array<double, 3>;

struct Rotation6D {
  Vec3 a1{};
  Vec3 a2{};
};

// Column-major storage of the three basis columns b1, b2, b3.
struct RotationMatrix {
  // m[r][c], columns are the basis vectors
  std::array<std::array<double, 3>, 3> m{};

  static RotationMatrix identity();
  Vec3 col(int c) const { return {m[0][c], m[1][c], m[2][c]}; }
  double orthonormality_error() const;  // max |R^T R - I|
  double det() const;
};

struct EulerAngles {
  double yaw = 0.0;    // about z
  double pitch = 0.0;  // about y
  double roll = 0.0;   // about x
};

inline constexpr double kGramSchmidtEps = 1e-8;

// Orthonormalizes the two 6D columns into a right-handed rotation matrix:
// b1 = a1/|a1|, b2 = Norm(a2 - (b1.a2) b1), b3 = b1 x b2.
// Throws SingularityError naming the collapsed vector when |a1| or the
// projected residual falls below kGramSchmidtEps.
RotationMatrix gram_schmidt_6d(const Rotation6D& r);

// ZYX-intrinsic decomposition: R = Rz(yaw) Ry(pitch) Rx(roll).
// Gimbal lock (|R[2][0]| > 1 - 1e-9) reports roll = 0 and folds the
// remaining rotation into yaw. Input checked orthonormal within 1e-6.
EulerAngles euler_from_rotation(const RotationMatrix& r);
RotationMatrix euler_to_rotation(const EulerAngles& e);

// Differentiable Gram-Schmidt: input rank-1 tensor of 6 values (a1 | a2),
// output rank-1 tensor of 9 values, the columns b1, b2, b3 concatenated.
Tensor gram_schmidt_6d_t(const Tensor& six);

}  // namespace ttm::pose
