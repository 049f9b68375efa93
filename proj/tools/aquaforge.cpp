#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "aquaforge/io.hpp"
#include "aquaforge/jsonconv.hpp"
#include "aquaforge/metatrain.hpp"
#include "aquaforge/metrics.hpp"
#include "aquaforge/parallel.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace aquaforge;

#ifndef AQUAFORGE_BUILD_HASH
#define AQUAFORGE_BUILD_HASH "unknown"
#endif

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 usage error, 2 data error.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  ArchConfig arch;
  MetaConfig meta;
  std::map<std::string, std::string> paths;  // optional path keys from the file
};

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      // ArchConfig
      "num_enc_blocks", "num_dec_blocks", "base_channels", "max_channels", "use_skip",
      "use_shortcut", "patch_size",
      // MetaConfig
      "inner_lr", "outer_lr", "finetune_lr", "task_batch", "data_batch", "pretrain_epochs",
      "finetune_epochs", "lr_decay_factor", "lr_decay_every_pretrain", "lr_decay_every_finetune",
      "iters_per_epoch", "seed",
      // paths
      "data", "out", "ck", "pairs", "in"};
  return keys;
}

CliConfig load_config(const fs::path& path, CliConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config parse error in " + path.string() + ": " + e.what());
  }
  std::vector<std::string> unknown;
  for (const auto& [key, _] : j.items())
    if (!known_config_keys().count(key)) unknown.push_back(key);
  if (!unknown.empty()) {
    std::string msg = "unknown config keys in " + path.string() + ":";
    for (const auto& k : unknown) msg += " " + k;
    throw DataError(msg);
  }

  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("num_enc_blocks", cfg.arch.num_enc_blocks);
    get("num_dec_blocks", cfg.arch.num_dec_blocks);
    get("base_channels", cfg.arch.base_channels);
    get("max_channels", cfg.arch.max_channels);
    get("use_skip", cfg.arch.use_skip);
    get("use_shortcut", cfg.arch.use_shortcut);
    get("patch_size", cfg.arch.patch_size);
    get("inner_lr", cfg.meta.inner_lr);
    get("outer_lr", cfg.meta.outer_lr);
    get("finetune_lr", cfg.meta.finetune_lr);
    get("task_batch", cfg.meta.task_batch);
    get("data_batch", cfg.meta.data_batch);
    get("pretrain_epochs", cfg.meta.pretrain_epochs);
    get("finetune_epochs", cfg.meta.finetune_epochs);
    get("lr_decay_factor", cfg.meta.lr_decay_factor);
    get("lr_decay_every_pretrain", cfg.meta.lr_decay_every_pretrain);
    get("lr_decay_every_finetune", cfg.meta.lr_decay_every_finetune);
    get("iters_per_epoch", cfg.meta.iters_per_epoch);
    get("seed", cfg.meta.seed);
    for (const char* key : {"data", "out", "ck", "pairs", "in"})
      if (j.contains(key)) cfg.paths[key] = j.at(key).get<std::string>();
  } catch (const json::exception& e) {
    throw DataError("config value error in " + path.string() + ": " + e.what());
  }
  return cfg;
}

// The thread cap never changes results, so it stays out of the echoed
// config; outputs are reproducible from config + seed alone.
json effective_config(const ArchConfig& arch, const MetaConfig& meta) {
  json j;
  json ja, jm;
  to_json(ja, arch);
  to_json(jm, meta);
  for (auto& [k, v] : ja.items()) j[k] = v;
  for (auto& [k, v] : jm.items()) j[k] = v;
  return j;
}

void write_train_log(const fs::path& path, const json& config, const TrainResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write training log: " + path.string());
  json header;
  header["effective_config"] = config;
  header["initial_val_loss"] = result.initial_val_loss;
  header["initial_val_psnr"] = result.initial_val_psnr;
  out << header.dump() << "\n";
  for (const EpochLog& e : result.log) {
    json rec{{"epoch", e.epoch},
             {"lr", e.lr},
             {"meta_loss", e.meta_loss},
             {"val_loss", e.val_loss},
             {"val_psnr", e.val_psnr}};
    out << rec.dump() << "\n";
  }
}

int run_synth(const std::string& corpus, const std::string& out, std::uint64_t seed,
              int draws_per_type, const std::vector<std::string>& types, int threads) {
  CorpusIndex corpus_index = index_corpus(corpus);
  for (const auto& warning : corpus_index.warnings)
    std::cerr << "warning: " << warning << "\n";

  json config{{"corpus", corpus},
              {"out", out},
              {"seed", seed},
              {"draws_per_type", draws_per_type},
              {"types", types}};
  BuildOptions opts;
  opts.seed = seed;
  opts.draws_per_type = draws_per_type;
  opts.types = types;
  opts.threads = threads;
  opts.effective_config_json = config.dump();
  BuildResult result = build_dataset(corpus_index, out, opts);
  for (const auto& warning : result.warnings) std::cerr << "warning: " << warning << "\n";
  std::cout << "wrote " << result.image_count << " degraded images under "
            << result.distortion_count << " distortion types; manifest at "
            << result.manifest_path.string() << "\n";
  return 0;
}

fs::path manifest_path_for(const fs::path& data) {
  if (fs::is_directory(data)) return data / "manifest.json";
  return data;
}

int run_meta_train(const fs::path& data, const fs::path& out, const CliConfig& cfg,
                   int threads) {
  MetaDataset ds = MetaDataset::load(manifest_path_for(data));
  TrainResult result = meta_train(ds, cfg.arch, cfg.meta, threads);
  save_checkpoint(out, result.params);
  json config = effective_config(cfg.arch, cfg.meta);
  config["data"] = data.string();
  config["out"] = out.string();
  write_train_log(out.string() + ".log.jsonl", config, result);
  double final_val = result.log.empty() ? result.initial_val_loss : result.log.back().val_loss;
  std::cout << "meta-trained " << cfg.meta.pretrain_epochs << " epochs; val loss "
            << result.initial_val_loss << " -> " << final_val << "; checkpoint at "
            << out.string() << "\n";
  return 0;
}

int run_finetune(const fs::path& ck, const fs::path& pairs_dir, const fs::path& out,
                 const CliConfig& cfg, int threads) {
  ModelParams start = load_checkpoint(ck);
  PairedDataset pairs = load_pairs(pairs_dir);
  for (const auto& warning : pairs.warnings) std::cerr << "warning: " << warning << "\n";
  TrainResult result = fine_tune(start, pairs, cfg.meta);
  save_checkpoint(out, result.params);
  json config = effective_config(start.arch, cfg.meta);
  config["ck"] = ck.string();
  config["pairs"] = pairs_dir.string();
  config["out"] = out.string();
  write_train_log(out.string() + ".log.jsonl", config, result);
  double final_psnr = result.log.empty() ? result.initial_val_psnr : result.log.back().val_psnr;
  std::cout << "fine-tuned " << cfg.meta.finetune_epochs << " epochs on " << pairs.pairs.size()
            << " pairs; psnr " << result.initial_val_psnr << " -> " << final_psnr
            << "; checkpoint at " << out.string() << "\n";
  return 0;
}

int run_enhance(const fs::path& ck, const fs::path& in, const fs::path& out, bool emit_tb) {
  ModelParams params = load_checkpoint(ck);
  ImageRgb input = read_png(in);
  Prediction pred = enhance_full(params, input);
  write_png(out, pred.J);
  if (emit_tb) {
    write_aqf(out.string() + ".t.aqf", pred.t);
    write_aqf(out.string() + ".b.aqf", pred.B);
  }
  std::cout << "enhanced " << in.string() << " -> " << out.string() << "\n";
  return 0;
}

json report_for_image(const ImageRgb& pred, const ImageRgb* ref) {
  json j;
  if (ref) {
    double m = mse(pred, *ref);
    j["mse"] = m;
    double p = psnr(pred, *ref);
    j["psnr"] = std::isinf(p) ? json("inf") : json(p);
    j["ssim"] = ssim(pred, *ref);
  }
  UciqeReport uc = uciqe(pred);
  j["uciqe"] = json{{"sigma_c", uc.sigma_c}, {"con_l", uc.con_l}, {"mu_s", uc.mu_s},
                    {"score", uc.score}};
  UiqmReport um = uiqm(pred);
  j["uiqm"] = json{{"uicm", um.uicm}, {"uism", um.uism}, {"uiconm", um.uiconm},
                   {"score", um.score}};
  return j;
}

int run_eval(const fs::path& pred_dir, const std::optional<fs::path>& ref_dir,
             const fs::path& out, int threads) {
  if (!fs::is_directory(pred_dir)) throw DataError("not a directory: " + pred_dir.string());
  std::vector<fs::path> preds;
  for (const auto& entry : fs::directory_iterator(pred_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      preds.push_back(entry.path());
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw DataError("no .png files in " + pred_dir.string());

  std::vector<std::string> errors;
  struct Entry {
    std::string name;
    json report;
    bool ok = false;
  };
  std::vector<Entry> entries(preds.size());
  parallel_for(preds.size(), threads, [&](std::size_t i) {
    Entry& e = entries[i];
    e.name = preds[i].filename().string();
    try {
      ImageRgb pred = read_png(preds[i]);
      if (ref_dir) {
        fs::path ref_path = *ref_dir / preds[i].filename();
        if (!fs::exists(ref_path)) throw std::runtime_error("missing reference " + ref_path.string());
        ImageRgb ref = read_png(ref_path);
        if (!same_shape(pred, ref))
          throw std::runtime_error("size mismatch: pred " + std::to_string(pred.rows()) + "x" +
                                   std::to_string(pred.cols()) + " vs ref " +
                                   std::to_string(ref.rows()) + "x" + std::to_string(ref.cols()));
        e.report = report_for_image(pred, &ref);
      } else {
        e.report = report_for_image(pred, nullptr);
      }
      e.ok = true;
    } catch (const std::exception& ex) {
      e.report = json{{"error", ex.what()}};
    }
  });

  json images = json::object();
  int ok_count = 0;
  double sum_mse = 0, sum_psnr = 0, sum_ssim = 0, sum_uciqe = 0, sum_uiqm = 0;
  bool psnr_finite = true;
  for (const Entry& e : entries) {
    images[e.name] = e.report;
    if (!e.ok) {
      errors.push_back(e.name + ": " + e.report["error"].get<std::string>());
      continue;
    }
    ++ok_count;
    sum_uciqe += e.report["uciqe"]["score"].get<double>();
    sum_uiqm += e.report["uiqm"]["score"].get<double>();
    if (ref_dir) {
      sum_mse += e.report["mse"].get<double>();
      sum_ssim += e.report["ssim"].get<double>();
      if (e.report["psnr"].is_string())
        psnr_finite = false;
      else
        sum_psnr += e.report["psnr"].get<double>();
    }
  }

  json report;
  report["effective_config"] =
      json{{"pred", pred_dir.string()},
           {"ref", ref_dir ? json(ref_dir->string()) : json(nullptr)},
           {"out", out.string()}};
  report["images"] = images;
  json mean;
  if (ok_count > 0) {
    mean["uciqe"] = sum_uciqe / ok_count;
    mean["uiqm"] = sum_uiqm / ok_count;
    if (ref_dir) {
      mean["mse"] = sum_mse / ok_count;
      mean["ssim"] = sum_ssim / ok_count;
      mean["psnr"] = psnr_finite ? json(sum_psnr / ok_count) : json("inf");
    }
  }
  report["mean"] = mean;

  std::ofstream outfile(out, std::ios::trunc);
  if (!outfile) throw DataError("cannot write report: " + out.string());
  outfile << report.dump(2) << "\n";

  if (!errors.empty()) {
    json err{{"error", {{"type", "eval"}, {"message", "some images failed"}, {"files", errors}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  std::cout << "evaluated " << ok_count << " images; report at " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aquaforge: underwater image synthesis, meta-training, and evaluation"};
  app.set_version_flag("--version", std::string("aquaforge ") + kVersion + " (" +
                                        AQUAFORGE_BUILD_HASH + ")");
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default: all cores)");
  app.fallthrough();  // let --threads appear after the subcommand too
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "render a synthetic underwater dataset");
  std::string synth_corpus, synth_out;
  std::uint64_t synth_seed = 0;
  int draws_per_type = 3;
  std::vector<std::string> synth_types;
  synth->add_option("--corpus", synth_corpus, "directory of <id>.png + <id>.depth.aqf pairs")
      ->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "global seed")->required();
  synth->add_option("--draws-per-type", draws_per_type, "parameter draws per water type");
  synth->add_option("--types", synth_types, "subset of water types (default: all nine)")
      ->delimiter(',');

  auto* mt = app.add_subcommand("meta-train", "meta-train on a synthetic dataset");
  std::string mt_data, mt_out, mt_config;
  bool full_scale = false;
  mt->add_option("--data", mt_data, "synth output directory (or manifest path)");
  mt->add_option("--out", mt_out, "checkpoint to write");
  mt->add_option("--config", mt_config, "JSON config file");
  mt->add_flag("--full-scale", full_scale,
               "start from full-scale dimensions (256px patches, 64..512 channels)");

  auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on paired images");
  std::string ft_ck, ft_pairs, ft_out, ft_config;
  ft->add_option("--ck", ft_ck, "input checkpoint");
  ft->add_option("--pairs", ft_pairs, "directory of <id>.png + <id>.ref.png pairs");
  ft->add_option("--out", ft_out, "checkpoint to write");
  ft->add_option("--config", ft_config, "JSON config file");

  auto* en = app.add_subcommand("enhance", "restore one image with a checkpoint");
  std::string en_ck, en_in, en_out;
  bool emit_tb = false;
  en->add_option("--ck", en_ck, "checkpoint")->required();
  en->add_option("--in", en_in, "input image")->required();
  en->add_option("--out", en_out, "output image")->required();
  en->add_flag("--emit-tb", emit_tb, "also write .t.aqf and .b.aqf fields");

  auto* ev = app.add_subcommand("eval", "score images with full- and no-reference metrics");
  std::string ev_pred, ev_ref, ev_out;
  ev->add_option("--pred", ev_pred, "directory of images to score")->required();
  ev->add_option("--ref", ev_ref, "directory of reference images");
  ev->add_option("--out", ev_out, "JSON report path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 prints usage/help; normalize usage errors to exit code 1
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      if (draws_per_type < 1) throw DataError("--draws-per-type must be >= 1");
      return run_synth(synth_corpus, synth_out, synth_seed, draws_per_type, synth_types,
                       threads);
    }
    if (*mt) {
      CliConfig cfg;
      if (full_scale) cfg.arch = ArchConfig::full_scale();
      if (!mt_config.empty()) cfg = load_config(mt_config, cfg);
      if (mt_data.empty() && cfg.paths.count("data")) mt_data = cfg.paths["data"];
      if (mt_out.empty() && cfg.paths.count("out")) mt_out = cfg.paths["out"];
      if (mt_data.empty() || mt_out.empty())
        throw CLI::ValidationError("meta-train", "--data and --out are required");
      return run_meta_train(mt_data, mt_out, cfg, threads);
    }
    if (*ft) {
      CliConfig cfg;
      if (!ft_config.empty()) cfg = load_config(ft_config);
      if (ft_ck.empty() && cfg.paths.count("ck")) ft_ck = cfg.paths["ck"];
      if (ft_pairs.empty() && cfg.paths.count("pairs")) ft_pairs = cfg.paths["pairs"];
      if (ft_out.empty() && cfg.paths.count("out")) ft_out = cfg.paths["out"];
      if (ft_ck.empty() || ft_pairs.empty() || ft_out.empty())
        throw CLI::ValidationError("finetune", "--ck, --pairs and --out are required");
      return run_finetune(ft_ck, ft_pairs, ft_out, cfg, threads);
    }
    if (*en) return run_enhance(en_ck, en_in, en_out, emit_tb);
    if (*ev)
      return run_eval(ev_pred, ev_ref.empty() ? std::nullopt : std::optional<fs::path>(ev_ref),
                      ev_out, threads);
  } catch (const CLI::Error& e) {
    json err{{"error", {{"type", "usage"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err{{"error", {{"type", "data"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 1;
}
