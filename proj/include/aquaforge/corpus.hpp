#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aquaforge/types.hpp"

namespace aquaforge {

// One validated RGB-D pair: `<id>.png` + `<id>.depth.aqf`.
struct CorpusEntry {
  std::string id;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  std::uint32_t rgb_crc32 = 0;
  std::uint32_t depth_crc32 = 0;
  Index rows = 0;
  Index cols = 0;
};

struct CorpusIndex {
  std::vector<CorpusEntry> entries;  // sorted by id
  std::vector<std::string> warnings; // orphan or rejected files, with reasons
};

// Scans a directory for RGB-D pairs. Orphans and dimension-mismatched pairs
// land in warnings; zero valid pairs is an error.
CorpusIndex index_corpus(const std::filesystem::path& dir);

// One paired real example: `<id>.png` + `<id>.ref.png`.
struct RealPair {
  std::string id;
  ImageRgb degraded;
  ImageRgb reference;
};

struct PairedDataset {
  std::vector<RealPair> pairs;       // sorted by id
  std::vector<std::string> warnings;
};

// Loads paired (degraded, reference) images; missing references are skipped
// with a warning, dimension mismatches are rejected.
PairedDataset load_pairs(const std::filesystem::path& dir);

}  // namespace aquaforge
