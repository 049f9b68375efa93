#include "aquaforge/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "aquaforge/io.hpp"
#include "aquaforge/jsonconv.hpp"
#include "aquaforge/parallel.hpp"

namespace aquaforge {

using json = nlohmann::ordered_json;

// Decay factors e^{-c_lambda} per water type, stored in (R, G, B) order.
const std::array<WaterType, 9>& water_types() {
  static const std::array<WaterType, 9> table = {{
      {"I", Attenuation(0.805, 0.961, 0.982)},
      {"II", Attenuation(0.800, 0.925, 0.940)},
      {"III", Attenuation(0.750, 0.885, 0.890)},
      {"B", Attenuation(0.700, 0.800, 0.880)},
      {"3", Attenuation(0.710, 0.820, 0.800)},
      {"G", Attenuation(0.690, 0.790, 0.750)},
      {"5", Attenuation(0.670, 0.730, 0.670)},
      {"7", Attenuation(0.620, 0.610, 0.500)},
      {"Y", Attenuation(0.610, 0.600, 0.400)},
  }};
  return table;
}

const WaterType& water_type(std::string_view name) {
  for (const auto& wt : water_types())
    if (wt.name == name) return wt;
  throw std::invalid_argument("unknown water type: " + std::string(name));
}

void SynthParams::validate() const {
  water_type_ref();  // throws on unknown name
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(depth_m, 5.0, 20.0)) throw std::invalid_argument("SynthParams: D outside [5,20]");
  for (int c = 0; c < 3; ++c) {
    if (!in(surface_light[c], 0.7, 1.0))
      throw std::invalid_argument("SynthParams: E^S outside [0.7,1]");
    if (!in(artificial_peak[c], 0.7, 1.0))
      throw std::invalid_argument("SynthParams: E^art outside [0.7,1]");
  }
  if (!in(center_u, 0.0, 1.0) || !in(center_v, 0.0, 1.0))
    throw std::invalid_argument("SynthParams: light center outside the image");
  if (!in(sigma_rate, 0.2, 1.1)) throw std::invalid_argument("SynthParams: sigma outside [0.2,1.1]");
  if (!in(omega_a, 0.0, 1.0)) throw std::invalid_argument("SynthParams: omega_a outside [0,1]");
  if (omega_a + omega_b != 1.0) throw std::invalid_argument("SynthParams: omega_a+omega_b != 1");
  if (!in(kappa, 0.7, 1.1)) throw std::invalid_argument("SynthParams: kappa outside [0.7,1.1]");
}

SynthParams sample_params(Rng& rng, const WaterType& wt, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("sample_params: empty shape");
  SynthParams p;
  p.water_type = wt.name;
  p.depth_m = rng.uniform(5.0, 20.0);
  for (int c = 0; c < 3; ++c) p.surface_light[c] = rng.uniform(0.7, 1.0);
  for (int c = 0; c < 3; ++c) p.artificial_peak[c] = rng.uniform(0.7, 1.0);
  p.center_u = rng.uniform(0.0, 1.0);
  p.center_v = rng.uniform(0.0, 1.0);
  p.sigma_rate = rng.uniform(0.2, 1.1);
  p.omega_a = rng.uniform(0.0, 1.0);
  p.omega_b = 1.0 - p.omega_a;
  p.kappa = rng.uniform(0.7, 1.1);
  return p;
}

Field3 artificial_light_field(const SynthParams& p, Index rows, Index cols) {
  double sigma = p.sigma_px(cols);
  if (!(sigma > 0)) throw std::invalid_argument("artificial_light_field: sigma must be > 0");
  const double cx = p.center_x(cols);
  const double cy = p.center_y(rows);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  Plane profile(rows, cols);
  for (Index y = 0; y < rows; ++y)
    for (Index x = 0; x < cols; ++x) {
      double dy = double(y) - cy, dx = double(x) - cx;
      profile(y, x) = std::exp(-(dx * dx + dy * dy) * inv2s2);
    }
  Field3 out;
  for (int c = 0; c < 3; ++c) out.ch[c] = p.artificial_peak[c] * profile;
  return out;
}

Field3 illumination(const SynthParams& p, const DepthMap& depth) {
  require_finite(depth, "illumination");
  const Attenuation& a = p.attenuation();
  Field3 art = artificial_light_field(p, depth.rows(), depth.cols());
  Field3 out;
  for (int c = 0; c < 3; ++c) {
    // First term is constant per channel; the second varies with d(x).
    double surface = p.omega_a * p.surface_light[c] * std::pow(a.factor[c], p.depth_m);
    out.ch[c] = surface + p.omega_b * art.ch[c] * Eigen::pow(a.factor[c], depth);
  }
  return out;
}

Field3 background_light(const Field3& illum, const Attenuation& a, double kappa) {
  Eigen::Array3d c = a.coeff();
  Field3 out;
  for (int ch = 0; ch < 3; ++ch) out.ch[ch] = kappa * illum.ch[ch] / c[ch];
  return clamp01(out);
}

SynthSample synthesize(const ImageRgb& clean, const DepthMap& depth, const SynthParams& p) {
  require_same_shape(clean, depth, "synthesize");
  if ((p.surface_light < 0.7).any())
    throw std::invalid_argument("synthesize: E^S must be >= 0.7");
  if (!(p.depth_m >= 0.0) || !std::isfinite(p.depth_m))
    throw std::invalid_argument("synthesize: D must be finite and >= 0");

  SynthSample s;
  s.params = p;
  s.clean = clean;
  s.transmission = transmission_from_depth(depth, p.attenuation());
  Field3 illum = illumination(p, depth);
  s.background = background_light(illum, p.attenuation(), p.kappa);
  Field3 blended;
  for (int c = 0; c < 3; ++c) {
    // Relit scene, then the forward model with the background field.
    Plane relit = clean.ch[c] * illum.ch[c] / p.surface_light[c];
    blended.ch[c] =
        relit * s.transmission.ch[c] + s.background.ch[c] * (1.0 - s.transmission.ch[c]);
  }
  s.degraded = clamp01(blended);
  return s;
}

DepthMap rescale_depth(const DepthMap& d, DepthRescale& info) {
  info.native_min = d.minCoeff();
  info.native_max = d.maxCoeff();
  info.applied = info.native_min < kDepthRescaleMin || info.native_max > kDepthRescaleMax;
  if (!info.applied) return d;
  double range = info.native_max - info.native_min;
  if (range == 0.0)
    return d.cwiseMax(kDepthRescaleMin).cwiseMin(kDepthRescaleMax);
  double scale = (kDepthRescaleMax - kDepthRescaleMin) / range;
  return kDepthRescaleMin + (d - info.native_min) * scale;
}

BuildResult build_dataset(const CorpusIndex& corpus, const std::filesystem::path& out_dir,
                          const BuildOptions& opts) {
  namespace fs = std::filesystem;
  if (corpus.entries.empty()) throw std::runtime_error("build_dataset: empty corpus");
  if (opts.draws_per_type < 1) throw std::runtime_error("build_dataset: draws_per_type must be >= 1");

  std::vector<const WaterType*> types;
  if (opts.types.empty()) {
    for (const auto& wt : water_types()) types.push_back(&wt);
  } else {
    for (const auto& name : opts.types) types.push_back(&water_type(name));
  }

  // One configuration per (type, draw); the RNG stream is keyed by the
  // configuration index so builds are order-independent.
  struct Distortion {
    std::string id;
    SynthParams params;
  };
  std::vector<Distortion> distortions;
  Rng param_root = Rng(opts.seed).split(0x5941);
  // Shape passed to sample_params is only used for validation of the unit
  // coordinates; use the first corpus entry's.
  Index rows0 = corpus.entries.front().rows, cols0 = corpus.entries.front().cols;
  for (std::size_t ti = 0; ti < types.size(); ++ti) {
    for (std::size_t tj = ti + 1; tj < types.size(); ++tj)
      if (types[ti]->name == types[tj]->name)
        throw std::runtime_error("build_dataset: duplicate water type " + types[ti]->name);
    for (int draw = 0; draw < opts.draws_per_type; ++draw) {
      Rng r = param_root.split(ti).split(std::uint64_t(draw));
      Distortion d;
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "%02d", draw);
      d.id = types[ti]->name + "-" + suffix;
      d.params = sample_params(r, *types[ti], rows0, cols0);
      distortions.push_back(std::move(d));
    }
  }

  fs::create_directories(out_dir);
  for (const auto& d : distortions) fs::create_directories(out_dir / d.id);

  struct LoadedEntry {
    const CorpusEntry* entry;
    ImageRgb rgb;
    DepthMap depth;
    DepthRescale rescale;
    bool ok = false;
    std::string error;
  };
  std::vector<LoadedEntry> loaded(corpus.entries.size());
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    loaded[i].entry = &corpus.entries[i];
    try {
      loaded[i].rgb = read_png(corpus.entries[i].rgb_path);
      DepthMap native = read_aqf_plane(corpus.entries[i].depth_path);
      require_finite(native, "corpus depth");
      if ((native < 0.0).any()) throw std::runtime_error("negative depth values");
      loaded[i].depth = rescale_depth(native, loaded[i].rescale);
      loaded[i].ok = true;
    } catch (const std::exception& e) {
      loaded[i].error = e.what();
    }
  }

  BuildResult result;
  for (const auto& le : loaded)
    if (!le.ok)
      result.warnings.push_back("skipped " + le.entry->id + ": " + le.error);
  std::size_t usable = 0;
  for (const auto& le : loaded) usable += le.ok ? 1 : 0;
  if (usable == 0) throw std::runtime_error("build_dataset: no readable corpus entries");

  // Render all (distortion, image) pairs; each pair writes only its own
  // files, so the schedule does not affect the outputs.
  struct Job {
    std::size_t di, ii;
  };
  std::vector<Job> jobs;
  for (std::size_t di = 0; di < distortions.size(); ++di)
    for (std::size_t ii = 0; ii < loaded.size(); ++ii)
      if (loaded[ii].ok) jobs.push_back({di, ii});

  parallel_for(jobs.size(), opts.threads, [&](std::size_t j) {
    const auto& d = distortions[jobs[j].di];
    const auto& le = loaded[jobs[j].ii];
    SynthSample s = synthesize(le.rgb, le.depth, d.params);
    s.source_id = le.entry->id;
    const std::string stem = le.entry->id;
    write_png(out_dir / d.id / (stem + ".png"), s.degraded);
    write_aqf(out_dir / d.id / (stem + ".t.aqf"), s.transmission);
    write_aqf(out_dir / d.id / (stem + ".b.aqf"), s.background);
  });

  json manifest;
  manifest["format"] = "aquaforge-synth-manifest/1";
  manifest["seed"] = opts.seed;
  manifest["draws_per_type"] = opts.draws_per_type;
  if (!opts.effective_config_json.empty())
    manifest["effective_config"] = json::parse(opts.effective_config_json);
  json jdist = json::array();
  for (const auto& d : distortions)
    jdist.push_back(json{{"id", d.id}, {"params", json(d.params)}});
  manifest["distortions"] = std::move(jdist);
  json jimages = json::array();
  for (const auto& le : loaded) {
    if (!le.ok) continue;
    jimages.push_back(json{{"id", le.entry->id},
                           {"clean", le.entry->rgb_path.string()},
                           {"depth", le.entry->depth_path.string()},
                           {"depth_rescaled", le.rescale.applied},
                           {"native_depth_range", {le.rescale.native_min, le.rescale.native_max}}});
  }
  manifest["images"] = std::move(jimages);
  json jsamples = json::array();
  for (const auto& d : distortions)
    for (const auto& le : loaded) {
      if (!le.ok) continue;
      const std::string stem = le.entry->id;
      jsamples.push_back(json{{"image", stem},
                              {"distortion", d.id},
                              {"degraded", d.id + "/" + stem + ".png"},
                              {"transmission", d.id + "/" + stem + ".t.aqf"},
                              {"background", d.id + "/" + stem + ".b.aqf"}});
      }
  manifest["samples"] = std::move(jsamples);
  manifest["warnings"] = result.warnings;

  result.manifest_path = out_dir / "manifest.json";
  std::ofstream out(result.manifest_path);
  if (!out) throw std::runtime_error("cannot write " + result.manifest_path.string());
  out << manifest.dump(2) << "\n";
  result.distortion_count = int(distortions.size());
  result.image_count = int(jobs.size());
  return result;
}

}  // namespace aquaforge
