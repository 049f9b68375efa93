#include "aquaforge/corpus.hpp"

#include <algorithm>
#include <map>

#include "aquaforge/io.hpp"

namespace aquaforge {

namespace fs = std::filesystem;

CorpusIndex index_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("index_corpus: not a directory: " + dir.string());

  std::map<std::string, fs::path> rgbs, depths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    std::string name = p.filename().string();
    if (name.ends_with(".depth.aqf"))
      depths[name.substr(0, name.size() - 10)] = p;
    else if (name.ends_with(".png") && !name.ends_with(".ref.png"))
      rgbs[name.substr(0, name.size() - 4)] = p;
  }

  CorpusIndex index;
  for (const auto& [id, rgb_path] : rgbs) {
    auto it = depths.find(id);
    if (it == depths.end()) {
      index.warnings.push_back("orphan rgb without depth: " + rgb_path.filename().string());
      continue;
    }
    try {
      ImageRgb rgb = read_png(rgb_path);
      Plane depth = read_aqf_plane(it->second);
      if (rgb.rows() != depth.rows() || rgb.cols() != depth.cols()) {
        index.warnings.push_back("rejected " + id + ": rgb " + std::to_string(rgb.rows()) + "x" +
                                 std::to_string(rgb.cols()) + " vs depth " +
                                 std::to_string(depth.rows()) + "x" +
                                 std::to_string(depth.cols()));
        continue;
      }
      CorpusEntry e;
      e.id = id;
      e.rgb_path = rgb_path;
      e.depth_path = it->second;
      e.rows = rgb.rows();
      e.cols = rgb.cols();
      e.rgb_crc32 = crc32_file(rgb_path);
      e.depth_crc32 = crc32_file(it->second);
      index.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      index.warnings.push_back("rejected " + id + ": " + ex.what());
    }
  }
  for (const auto& [id, depth_path] : depths)
    if (!rgbs.count(id))
      index.warnings.push_back("orphan depth without rgb: " + depth_path.filename().string());

  // map iteration is already id-sorted
  if (index.entries.empty())
    throw std::runtime_error("index_corpus: no valid rgb/depth pairs in " + dir.string());
  return index;
}

PairedDataset load_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("load_pairs: not a directory: " + dir.string());

  std::map<std::string, fs::path> inputs, refs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.ends_with(".ref.png"))
      refs[name.substr(0, name.size() - 8)] = entry.path();
    else if (name.ends_with(".png"))
      inputs[name.substr(0, name.size() - 4)] = entry.path();
  }

  PairedDataset ds;
  for (const auto& [id, in_path] : inputs) {
    auto it = refs.find(id);
    if (it == refs.end()) {
      ds.warnings.push_back("missing reference for " + id + ", skipped");
      continue;
    }
    try {
      RealPair pair;
      pair.id = id;
      pair.degraded = read_png(in_path);
      pair.reference = read_png(it->second);
      if (!same_shape(pair.degraded, pair.reference)) {
        ds.warnings.push_back("rejected " + id + ": dimension mismatch between pair files");
        continue;
      }
      ds.pairs.push_back(std::move(pair));
    } catch (const std::exception& ex) {
      ds.warnings.push_back("rejected " + id + ": " + ex.what());
    }
  }
  if (ds.pairs.empty()) throw std::runtime_error("load_pairs: no usable pairs in " + dir.string());
  return ds;
}

}  // namespace aquaforge
