#include "aquaforge/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "aquaforge/io.hpp"
#include "aquaforge/jsonconv.hpp"

namespace aquaforge {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n;
  i = ((i % period) + period) % period;
  return i < n ? i : period - 1 - i;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return path;
  fs::path rel = base / path;
  if (fs::exists(rel)) return rel;
  return path;
}

}  // namespace

ImageRgb reflect_pad(const ImageRgb& f, Index rows, Index cols) {
  if (f.rows() == rows && f.cols() == cols) return f;
  ImageRgb out(rows, cols);
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < rows; ++y)
      for (Index x = 0; x < cols; ++x)
        out(c, y, x) = f(c, reflect_index(y, f.rows()), reflect_index(x, f.cols()));
  return out;
}

ImageRgb crop_field(const ImageRgb& f, Index y0, Index x0, int patch) {
  ImageRgb out(patch, patch);
  for (int c = 0; c < 3; ++c) out.ch[c] = f.ch[c].block(y0, x0, patch, patch);
  return out;
}

namespace {

TrainExample crop_example(const TrainExample& ex, Index y0, Index x0, int patch) {
  TrainExample out;
  out.has_tb = ex.has_tb;
  out.input = crop_field(ex.input, y0, x0, patch);
  out.clean = crop_field(ex.clean, y0, x0, patch);
  if (ex.has_tb) {
    out.transmission = crop_field(ex.transmission, y0, x0, patch);
    out.background = crop_field(ex.background, y0, x0, patch);
  }
  return out;
}

TrainExample pad_example(const TrainExample& ex, Index rows, Index cols) {
  if (ex.input.rows() >= rows && ex.input.cols() >= cols) return ex;
  Index r = std::max(rows, ex.input.rows()), c = std::max(cols, ex.input.cols());
  TrainExample out;
  out.has_tb = ex.has_tb;
  out.input = reflect_pad(ex.input, r, c);
  out.clean = reflect_pad(ex.clean, r, c);
  if (ex.has_tb) {
    out.transmission = reflect_pad(ex.transmission, r, c);
    out.background = reflect_pad(ex.background, r, c);
  }
  return out;
}

}  // namespace

TrainExample random_crop(const TrainExample& ex, int patch, Rng& rng) {
  TrainExample padded = pad_example(ex, patch, patch);
  if (padded.input.rows() == patch && padded.input.cols() == patch) return padded;
  Index y0 = Index(rng.uniform_index(std::uint64_t(padded.input.rows() - patch + 1)));
  Index x0 = Index(rng.uniform_index(std::uint64_t(padded.input.cols() - patch + 1)));
  return crop_example(padded, y0, x0, patch);
}

TrainExample center_crop(const TrainExample& ex, int patch) {
  TrainExample padded = pad_example(ex, patch, patch);
  Index y0 = (padded.input.rows() - patch) / 2;
  Index x0 = (padded.input.cols() - patch) / 2;
  if (y0 == 0 && x0 == 0 && padded.input.rows() == patch && padded.input.cols() == patch)
    return padded;
  return crop_example(padded, y0, x0, patch);
}

MetaDataset MetaDataset::load(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  json manifest = json::parse(in);
  const fs::path base = manifest_path.parent_path();

  MetaDataset ds;
  std::map<std::string, std::size_t> group_of;
  for (const auto& jd : manifest.at("distortions")) {
    DistortionGroup g;
    g.id = jd.at("id").get<std::string>();
    g.params = jd.at("params").get<SynthParams>();
    group_of[g.id] = ds.groups.size();
    ds.groups.push_back(std::move(g));
  }

  std::map<std::string, fs::path> clean_paths;
  for (const auto& ji : manifest.at("images"))
    clean_paths[ji.at("id").get<std::string>()] =
        resolve(base, ji.at("clean").get<std::string>());

  for (const auto& js : manifest.at("samples")) {
    const std::string image_id = js.at("image").get<std::string>();
    const std::string dist_id = js.at("distortion").get<std::string>();
    auto git = group_of.find(dist_id);
    if (git == group_of.end())
      throw std::runtime_error("manifest sample references unknown distortion " + dist_id);
    TrainExample ex;
    ex.input = read_png(resolve(base, js.at("degraded").get<std::string>()));
    ex.clean = read_png(clean_paths.at(image_id));
    ex.transmission = read_aqf_field3(resolve(base, js.at("transmission").get<std::string>()));
    ex.background = read_aqf_field3(resolve(base, js.at("background").get<std::string>()));
    ex.has_tb = true;
    ds.groups[git->second].samples.push_back(std::move(ex));
    ds.groups[git->second].sample_ids.push_back(image_id);
  }

  std::sort(ds.groups.begin(), ds.groups.end(),
            [](const DistortionGroup& a, const DistortionGroup& b) { return a.id < b.id; });

  // Hold out the last ceil(5%) configurations by id; needs at least two
  // configurations to leave anything to train on.
  const int n = int(ds.groups.size());
  const int n_val = n >= 2 ? std::max(1, (n + 19) / 20) : 0;
  for (int i = 0; i < n; ++i)
    (i < n - n_val ? ds.train_groups : ds.val_groups).push_back(i);
  return ds;
}

std::size_t MetaDataset::train_sample_count() const {
  std::size_t total = 0;
  for (int gi : train_groups) total += groups[std::size_t(gi)].samples.size();
  return total;
}

TaskBatch sample_tasks(const MetaDataset& ds, Rng& rng, int k, int support_n, int query_n,
                       int patch) {
  if (k < 1) throw std::invalid_argument("sample_tasks: k must be >= 1");
  if (support_n < 1 || query_n < 1)
    throw std::invalid_argument("sample_tasks: support and query sizes must be >= 1");
  if (int(ds.train_groups.size()) < k)
    throw std::runtime_error("sample_tasks: need " + std::to_string(k) +
                             " train distortion types, have " +
                             std::to_string(ds.train_groups.size()));

  // Partial Fisher-Yates over the train group list for k distinct picks.
  std::vector<int> pool = ds.train_groups;
  TaskBatch batch;
  const int need = support_n + query_n;
  for (int i = 0; i < k; ++i) {
    std::size_t j = std::size_t(i) + rng.uniform_index(pool.size() - std::size_t(i));
    std::swap(pool[std::size_t(i)], pool[j]);
    const DistortionGroup& g = ds.groups[std::size_t(pool[std::size_t(i)])];
    if (int(g.samples.size()) < need)
      throw std::runtime_error("sample_tasks: distortion " + g.id + " has " +
                               std::to_string(g.samples.size()) + " samples, need " +
                               std::to_string(need));

    std::vector<std::size_t> idx(g.samples.size());
    for (std::size_t s = 0; s < idx.size(); ++s) idx[s] = s;
    for (int s = 0; s < need; ++s) {
      std::size_t r = std::size_t(s) + rng.uniform_index(idx.size() - std::size_t(s));
      std::swap(idx[std::size_t(s)], idx[r]);
    }

    Task task;
    task.distortion_id = g.id;
    for (int s = 0; s < support_n; ++s)
      task.support.push_back(random_crop(g.samples[idx[std::size_t(s)]], patch, rng));
    for (int s = 0; s < query_n; ++s)
      task.query.push_back(
          random_crop(g.samples[idx[std::size_t(support_n + s)]], patch, rng));
    batch.push_back(std::move(task));
  }
  return batch;
}

}  // namespace aquaforge
