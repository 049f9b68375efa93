#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aquaforge/corpus.hpp"
#include "aquaforge/rng.hpp"
#include "aquaforge/types.hpp"
#include "aquaforge/uwmodel.hpp"

namespace aquaforge {

// Jerlov-style water type with its per-channel decay factors e^{-c_lambda}.
struct WaterType {
  std::string name;
  Attenuation attenuation;
};

// The nine named water types (I, II, III, B, 3, G, 5, 7, Y) in table order.
const std::array<WaterType, 9>& water_types();
const WaterType& water_type(std::string_view name);

// One sampled distortion configuration. The light center is kept in unit
// coordinates so a configuration applies to corpus images of any size;
// pixel-space values come from the accessors below.
struct SynthParams {
  std::string water_type;          // name key into water_types()
  double depth_m = 10.0;           // water depth D
  Eigen::Array3d surface_light;    // E^S per channel
  Eigen::Array3d artificial_peak;  // E^art per channel
  double center_u = 0.5;           // light source, unit coords in [0,1]
  double center_v = 0.5;
  double sigma_rate = 0.5;         // Gaussian spread as a fraction of width
  double omega_a = 0.5;            // surface-light weight
  double omega_b = 0.5;            // artificial-light weight, 1 - omega_a
  double kappa = 0.9;              // camera scalar

  double center_x(Index cols) const { return center_u * double(cols - 1); }
  double center_y(Index rows) const { return center_v * double(rows - 1); }
  double sigma_px(Index cols) const { return sigma_rate * double(cols); }

  const Attenuation& attenuation() const { return water_type_ref().attenuation; }
  const WaterType& water_type_ref() const { return aquaforge::water_type(water_type); }

  // Checks the sampled-parameter ranges (depth in [5,20], lights in [0.7,1],
  // sigma rate in [0.2,1.1], omega_a+omega_b == 1, kappa in [0.7,1.1]).
  void validate() const;
};

// Draw order is fixed: D, E^S (R,G,B), E^art (R,G,B), center u, center v,
// sigma rate, omega_a, kappa. Every field comes from its table range.
SynthParams sample_params(Rng& rng, const WaterType& wt, Index rows, Index cols);

// E^A(x) = E^art * exp(-|x - center|^2 / (2 sigma_px^2)), peak at the center.
Field3 artificial_light_field(const SynthParams& p, Index rows, Index cols);

// E(x) = omega_a E^S e^{-c D} + omega_b E^A(x) e^{-c d(x)} per channel.
Field3 illumination(const SynthParams& p, const DepthMap& depth);

// B(x) = clamp01(kappa * E(x) / c_lambda). Clear water (small c) can push
// kappa*E/c above 1; clamping keeps the composition convex.
Field3 background_light(const Field3& illum, const Attenuation& a, double kappa);

struct SynthSample {
  ImageRgb degraded;     // I
  ImageRgb clean;        // J^gt (the corpus image)
  Field3 transmission;   // t^gt
  Field3 background;     // B^gt
  SynthParams params;
  std::string source_id;
};

// Full simulation: t from depth, illumination, background light, then
// I = clamp01(t * J^gt * E/E^S + B * (1-t)).
SynthSample synthesize(const ImageRgb& clean, const DepthMap& depth, const SynthParams& p);

// Corpus depths are rescaled into this range when their native range
// exceeds it, so transmissions stay away from underflow.
inline constexpr double kDepthRescaleMin = 0.5;
inline constexpr double kDepthRescaleMax = 10.0;

struct DepthRescale {
  bool applied = false;
  double native_min = 0.0;
  double native_max = 0.0;
};

DepthMap rescale_depth(const DepthMap& d, DepthRescale& info);

struct BuildOptions {
  std::uint64_t seed = 0;
  int draws_per_type = 3;
  std::vector<std::string> types;  // empty = all nine
  int threads = 0;                 // <=0 = all cores
  std::string effective_config_json;  // echoed verbatim into the manifest
};

struct BuildResult {
  std::filesystem::path manifest_path;
  int distortion_count = 0;
  int image_count = 0;     // degraded images written
  std::vector<std::string> warnings;
};

// Renders every corpus image under every sampled distortion configuration
// (9 x draws_per_type of them) into out_dir/<distortion-id>/<id>.png plus
// .t.aqf / .b.aqf, and writes manifest.json.
BuildResult build_dataset(const CorpusIndex& corpus, const std::filesystem::path& out_dir,
                          const BuildOptions& opts);

}  // namespace aquaforge
