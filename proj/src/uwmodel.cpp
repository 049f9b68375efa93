#include "aquaforge/uwmodel.hpp"

namespace aquaforge {

Field3 transmission_from_depth(const DepthMap& depth, const Attenuation& a) {
  require_finite(depth, "transmission_from_depth");
  if ((depth < 0.0).any())
    throw std::invalid_argument("transmission_from_depth: negative depth");
  Field3 t;
  for (int c = 0; c < 3; ++c)
    t.ch[c] = Eigen::pow(a.factor[c], depth);
  return t;
}

namespace {

// Shared blend of the forward model, t*J + B*(1-t), without clamping.
Field3 blend(const Field3& J, const Field3& t, const Field3& B) {
  Field3 out;
  for (int c = 0; c < 3; ++c) out.ch[c] = J.ch[c] * t.ch[c] + B.ch[c] * (1.0 - t.ch[c]);
  return out;
}

}  // namespace

ImageRgb compose_underwater(const ImageRgb& J, const Field3& t, const Field3& B) {
  require_same_shape(J, t, "compose_underwater");
  require_same_shape(J, B, "compose_underwater");
  return clamp01(blend(J, t, B));
}

ImageRgb invert_underwater(const ImageRgb& I, const Field3& t, const Field3& B) {
  require_same_shape(I, t, "invert_underwater");
  require_same_shape(I, B, "invert_underwater");
  Field3 out;
  for (int c = 0; c < 3; ++c) {
    Plane tf = t.ch[c].cwiseMax(kTransmissionFloor);
    out.ch[c] = (I.ch[c] - B.ch[c] * (1.0 - t.ch[c])) / tf;
  }
  return clamp01(out);
}

}  // namespace aquaforge
