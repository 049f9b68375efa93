#include "aquaforge/types.hpp"

#include <cmath>

namespace aquaforge {

void require_finite(const Plane& p, const char* what) {
  for (Index y = 0; y < p.rows(); ++y)
    for (Index x = 0; x < p.cols(); ++x)
      if (!std::isfinite(p(y, x)))
        throw std::domain_error(std::string(what) + ": non-finite value at pixel (" +
                                std::to_string(y) + "," + std::to_string(x) + ")");
}

void require_finite(const Field3& f, const char* what) {
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < f.rows(); ++y)
      for (Index x = 0; x < f.cols(); ++x)
        if (!std::isfinite(f(c, y, x)))
          throw std::domain_error(std::string(what) + ": non-finite value at pixel (" +
                                  std::to_string(y) + "," + std::to_string(x) + ") channel " +
                                  std::to_string(c));
}

Plane clamp01(const Plane& p) {
  require_finite(p, "clamp01");
  return p.cwiseMax(0.0).cwiseMin(1.0);
}

ImageRgb clamp01(const ImageRgb& img) {
  require_finite(img, "clamp01");
  ImageRgb out;
  for (int c = 0; c < 3; ++c) out.ch[c] = img.ch[c].cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

}  // namespace aquaforge
