#pragma once

#include "aquaforge/types.hpp"

namespace aquaforge {

// Transmission below this is floored before dividing in invert_underwater;
// the forward model is singular as t -> 0.
inline constexpr double kTransmissionFloor = 0.05;

// t_lambda(x) = (e^{-c_lambda})^{d(x)} per channel. Depth must be finite and
// >= 0; outputs lie in (0,1].
Field3 transmission_from_depth(const DepthMap& depth, const Attenuation& a);

// I = J*t + B*(1-t) per pixel and channel, then clamp01. With J,B in [0,1]
// and t in (0,1] the unclamped value is already a convex combination.
ImageRgb compose_underwater(const ImageRgb& J, const Field3& t, const Field3& B);

// Algebraic inverse of the forward model, J = (I - B*(1-t)) / max(t, floor),
// then clamp01. Used as the round-trip oracle.
ImageRgb invert_underwater(const ImageRgb& I, const Field3& t, const Field3& B);

}  // namespace aquaforge
