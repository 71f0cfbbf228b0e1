#include "ttm/rotation.hpp"

#include <cmath>

namespace ttm::pose {

RotationMatrix RotationMatrix::identity() {
  RotationMatrix r;
  r.m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  return r;
}

double RotationMatrix::orthonormality_error() const {
  double err = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[k][i] * m[k][j];
      err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  }
  return err;
}

double RotationMatrix::det() const {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

namespace {
double norm3(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}
}  // namespace

RotationMatrix gram_schmidt_6d(const Rotation6D& r) {
  const double n1 = norm3(r.a1);
  if (n1 <= kGramSchmidtEps)
    throw SingularityError("gram_schmidt_6d: a1 is numerically zero (|a1|=" +
                           std::to_string(n1) + ")");
  Vec3 b1 = {r.a1[0] / n1, r.a1[1] / n1, r.a1[2] / n1};
  const double d = b1[0] * r.a2[0] + b1[1] * r.a2[1] + b1[2] * r.a2[2];
  Vec3 u2 = {r.a2[0] - d * b1[0], r.a2[1] - d * b1[1], r.a2[2] - d * b1[2]};
  const double n2 = norm3(u2);
  if (n2 <= kGramSchmidtEps)
    throw SingularityError(
        "gram_schmidt_6d: a2 collapsed after projection, a1 and a2 are "
        "near-parallel (|u2|=" + std::to_string(n2) + ")");
  Vec3 b2 = {u2[0] / n2, u2[1] / n2, u2[2] / n2};
  Vec3 b3 = {b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2],
             b1[0] * b2[1] - b1[1] * b2[0]};
  RotationMatrix out;
  for (int i = 0; i < 3; ++i) {
    out.m[i][0] = b1[i];
    out.m[i][1] = b2[i];
    out.m[i][2] = b3[i];
  }
  return out;
}

EulerAngles euler_from_rotation(const RotationMatrix& r) {
  if (r.orthonormality_error() > 1e-6)
    throw ContractError("euler_from_rotation: matrix not orthonormal");
  EulerAngles e;
  const double s = -r.m[2][0];  // sin(pitch)
  if (std::abs(r.m[2][0]) > 1.0 - 1e-9) {
    // Gimbal lock: yaw and roll are degenerate; report roll = 0 and put
    // the whole residual rotation into yaw.
    e.pitch = s > 0 ? M_PI / 2 : -M_PI / 2;
    e.roll = 0.0;
    e.yaw = std::atan2(-r.m[0][1], r.m[1][1]);
  } else {
    e.pitch = std::asin(std::clamp(s, -1.0, 1.0));
    e.yaw = std::atan2(r.m[1][0], r.m[0][0]);
    e.roll = std::atan2(r.m[2][1], r.m[2][2]);
  }
  return e;
}

RotationMatrix euler_to_rotation(const EulerAngles& e) {
  const double ca = std::cos(e.yaw), sa = std::sin(e.yaw);
  const double cb = std::cos(e.pitch), sb = std::sin(e.pitch);
  const double cg = std::cos(e.roll), sg = std::sin(e.roll);
  RotationMatrix r;
  // Rz(yaw) * Ry(pitch) * Rx(roll)
  r.m[0][0] = ca * cb;
  r.m[0][1] = ca * sb * sg - sa * cg;
  r.m[0][2] = ca * sb * cg + sa * sg;
  r.m[1][0] = sa * cb;
  r.m[1][1] = sa * sb * sg + ca * cg;
  r.m[1][2] = sa * sb * cg - ca * sg;
  r.m[2][0] = -sb;
  r.m[2][1] = cb * sg;
  r.m[2][2] = cb * cg;
  return r;
}

Tensor gram_schmidt_6d_t(const Tensor& six) {
  if (six.shape() != Shape{6})
    throw DimensionError("gram_schmidt_6d_t: expected 6-vector, got " +
                         shape_str(six.shape()));
  Tensor a1 = slice_vec(six, 0, 3);
  Tensor a2 = slice_vec(six, 3, 6);
  const double n1v = std::sqrt(a1.at(0) * a1.at(0) + a1.at(1) * a1.at(1) +
                               a1.at(2) * a1.at(2));
  if (n1v <= kGramSchmidtEps)
    throw SingularityError("gram_schmidt_6d_t: a1 is numerically zero");
  Tensor n1 = vsqrt(dot(a1, a1));
  Tensor b1 = scale_by(a1, pow_const(n1, -1.0));
  Tensor proj = dot(b1, a2);
  Tensor u2 = sub(a2, scale_by(b1, proj));
  const double n2v = std::sqrt(u2.at(0) * u2.at(0) + u2.at(1) * u2.at(1) +
                               u2.at(2) * u2.at(2));
  if (n2v <= kGramSchmidtEps)
    throw SingularityError(
        "gram_schmidt_6d_t: a2 collapsed after projection onto b1");
  Tensor b2 = scale_by(u2, pow_const(vsqrt(dot(u2, u2)), -1.0));
  Tensor b3 = cross3(b1, b2);
  // vec(B): columns concatenated.
  return reshape(concat_rows(concat_rows(reshape(b1, {1, 3}),
                                         reshape(b2, {1, 3})),
                             reshape(b3, {1, 3})),
                 {9});
}

}  // namespace ttm::pose
