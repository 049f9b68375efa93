#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aquaforge/types.hpp"

namespace aquaforge {

// Encoder-decoder shape shared by the three sub-networks. Channels double
// per encoder block, capped at max_channels; spatial dims halve per block.
struct ArchConfig {
  int num_enc_blocks = 4;
  int num_dec_blocks = 4;
  int base_channels = 8;
  int max_channels = 64;
  bool use_skip = true;      // concat mirrored encoder activations
  bool use_shortcut = true;  // 1x1 projection shortcut across each block
  int patch_size = 32;

  // Full-scale dimensions (256x256 patches, 64..512 channels).
  static ArchConfig full_scale() {
    ArchConfig c;
    c.base_channels = 64;
    c.max_channels = 512;
    c.patch_size = 256;
    return c;
  }

  void validate() const;
  int spatial_divisor() const { return 1 << num_enc_blocks; }

  bool operator==(const ArchConfig&) const = default;
};

// Flat (channels, rows, cols) tensor backing the network activations.
struct Tensor {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  Eigen::ArrayXd data;

  Tensor() = default;
  Tensor(int c, int r, int w) : channels(c), rows(r), cols(w), data(Eigen::ArrayXd::Zero(std::ptrdiff_t(c) * r * w)) {}

  double& at(int c, int y, int x) { return data[(std::ptrdiff_t(c) * rows + y) * cols + x]; }
  double at(int c, int y, int x) const { return data[(std::ptrdiff_t(c) * rows + y) * cols + x]; }
  std::ptrdiff_t plane_size() const { return std::ptrdiff_t(rows) * cols; }
};

Tensor tensor_from_field(const Field3& f);
Field3 field_from_tensor(const Tensor& t);

enum Head : int { kHeadJ = 0, kHeadB = 1, kHeadT = 2 };

// The three flat parameter vectors (theta_J, theta_B, theta_T) plus the
// architecture that fixes their layer layout.
struct ModelParams {
  ArchConfig arch;
  std::uint64_t init_seed = 0;
  std::array<Eigen::VectorXd, 3> theta;

  ModelParams scaled_add(const std::array<Eigen::VectorXd, 3>& dir, double scale) const {
    ModelParams out = *this;
    for (int h = 0; h < 3; ++h) out.theta[h] += scale * dir[h];
    return out;
  }
};

// Parameter count of one sub-network under the given architecture.
std::size_t param_count(const ArchConfig& cfg);

// Deterministic fan-in-scaled uniform weights, zero biases. Draws land on
// the float32 grid so checkpoints reproduce fresh params exactly.
ModelParams init_params(const ArchConfig& cfg, std::uint64_t seed);

struct Prediction {
  ImageRgb J;     // sigmoid head, in [0,1]
  Field3 B;       // sigmoid head, in [0,1]
  Field3 t;       // sigmoid rescaled into [kTransmissionFloor, 1]
};

// Runs all three sub-networks. Input dims must be divisible by
// 2^num_enc_blocks.
Prediction forward(const ModelParams& p, const ImageRgb& input);

// One training example. Fine-tuning pairs carry no transmission/background
// targets (has_tb = false); those loss terms read as zero.
struct TrainExample {
  ImageRgb input;       // degraded image I
  ImageRgb clean;       // J^gt
  Field3 transmission;  // t^gt
  Field3 background;    // B^gt
  bool has_tb = true;
};

struct LossWeights {
  double c_j = 1.0;
  double c_b = 1.0;
  double c_t = 1.0;
  double c_i = 0.5;

  static LossWeights pretrain() { return {1.0, 1.0, 1.0, 0.5}; }
  static LossWeights finetune() { return {1.0, 0.0, 0.0, 1.0}; }
};

struct LossTerms {
  double l_j = 0;
  double l_b = 0;
  double l_t = 0;
  double l_i = 0;
};

// Each term is the mean absolute difference over all pixels and channels;
// l_i compares the input against the recomposition J*t + B*(1-t).
LossTerms loss_components(const Prediction& pred, const TrainExample& target);

// c_j*l_j + c_b*l_b + c_t*l_t + c_i*l_i.
double total_loss(const LossTerms& terms, const LossWeights& w);

struct BackwardResult {
  double loss = 0;        // batch mean of the weighted loss
  LossTerms mean_terms;   // batch means of the individual terms
  std::array<Eigen::VectorXd, 3> grad;
};

// Loss and exact reverse-mode gradient of the batch-mean weighted loss with
// respect to all three parameter vectors (l_i couples them).
BackwardResult forward_backward(const ModelParams& p, std::span<const TrainExample> batch,
                                const LossWeights& w);

// Checkpoint file: magic "AQCK", u32 version, the ArchConfig fields, the
// init seed, then the three parameter vectors as little-endian float32,
// and a trailing CRC32 of everything before it.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& p);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace aquaforge
