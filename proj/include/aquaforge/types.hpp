#pragma once

#include <Eigen/Core>

#include <array>
#include <stdexcept>
#include <string>

namespace aquaforge {

using Index = Eigen::Index;

// Dense row-major plane of scalars. All image math runs on these.
template <class Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Plane = PlaneT<double>;

// Per-pixel scene distance in meters.
using DepthMap = Plane;

// Channel order is (R, G, B) everywhere, including serialized files.
enum Channel : int { kRed = 0, kGreen = 1, kBlue = 2 };

// Three aligned planes in (R, G, B) order. Carries both images (values in
// [0,1]) and per-channel physical fields such as transmission, illumination
// or background light.
template <class Scalar>
struct Field3T {
  std::array<PlaneT<Scalar>, 3> ch;

  Field3T() = default;
  Field3T(Index rows, Index cols) {
    for (auto& c : ch) c.setZero(rows, cols);
  }

  static Field3T constant(Index rows, Index cols, Scalar r, Scalar g, Scalar b) {
    Field3T f;
    f.ch[kRed].setConstant(rows, cols, r);
    f.ch[kGreen].setConstant(rows, cols, g);
    f.ch[kBlue].setConstant(rows, cols, b);
    return f;
  }
  static Field3T constant(Index rows, Index cols, Scalar v) {
    return constant(rows, cols, v, v, v);
  }

  Index rows() const { return ch[0].rows(); }
  Index cols() const { return ch[0].cols(); }
  Index size() const { return 3 * rows() * cols(); }

  Scalar& operator()(int c, Index y, Index x) { return ch[c](y, x); }
  Scalar operator()(int c, Index y, Index x) const { return ch[c](y, x); }
};

using Field3 = Field3T<double>;
// Image semantics: a Field3 whose values lie in [0,1] after any public output.
using ImageRgb = Field3;

inline bool same_shape(const Field3& a, const Field3& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}
inline bool same_shape(const Field3& a, const Plane& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

inline void require_same_shape(const Field3& a, const Field3& b, const char* what) {
  if (!same_shape(a, b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}
inline void require_same_shape(const Field3& a, const Plane& b, const char* what) {
  if (!same_shape(a, b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

// Throws naming the first offending pixel if any value is non-finite.
void require_finite(const Field3& f, const char* what);
void require_finite(const Plane& p, const char* what);

// min(max(v,0),1) per value. Errors on non-finite input; idempotent.
ImageRgb clamp01(const ImageRgb& img);
Plane clamp01(const Plane& p);

// Per-channel per-meter decay factors e^{-c_lambda}, strictly inside (0,1).
struct Attenuation {
  Eigen::Array3d factor;  // (R, G, B)

  explicit Attenuation(const Eigen::Array3d& f) : factor(f) {
    for (int c = 0; c < 3; ++c) {
      if (!(f[c] > 0.0 && f[c] < 1.0))
        throw std::invalid_argument("Attenuation: factor must lie in (0,1), got " +
                                    std::to_string(f[c]) + " for channel " + std::to_string(c));
    }
  }
  Attenuation(double r, double g, double b) : Attenuation(Eigen::Array3d{r, g, b}) {}

  // c_lambda = -ln(e^{-c_lambda}), in 1/m.
  Eigen::Array3d coeff() const { return -factor.log(); }
};

}  // namespace aquaforge
