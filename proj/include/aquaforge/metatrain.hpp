#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aquaforge/corpus.hpp"
#include "aquaforge/dataset.hpp"
#include "aquaforge/model.hpp"

namespace aquaforge {

struct MetaConfig {
  double inner_lr = 1e-4;    // alpha, the two inner gradient steps
  double outer_lr = 5e-5;    // beta, the cross-task interpolation
  double finetune_lr = 1e-5; // alpha_f
  int task_batch = 5;        // k
  int data_batch = 8;        // split 4 support + 4 query per task
  int pretrain_epochs = 40;
  int finetune_epochs = 30;
  double lr_decay_factor = 0.8;
  int lr_decay_every_pretrain = 5;
  int lr_decay_every_finetune = 2;
  int iters_per_epoch = 0;   // 0 = derived from dataset size
  std::uint64_t seed = 0;

  void validate() const;
  int support_size() const { return data_batch / 2; }
  int query_size() const { return data_batch - data_batch / 2; }
};

// base * factor^floor(epoch / every), epoch counted from 0.
double lr_at_epoch(double base, double factor, int every, int epoch);

// Loss and gradient of some objective at given parameters.
using Objective =
    std::function<std::pair<double, std::array<Eigen::VectorXd, 3>>(const ModelParams&)>;

// Two plain gradient steps at the same rate: one on the support objective,
// one on the query objective evaluated at the intermediate point.
ModelParams inner_adapt(const ModelParams& theta, const Objective& support,
                        const Objective& query, double alpha);
ModelParams inner_adapt(const ModelParams& theta, const Task& task, double alpha,
                        const LossWeights& w);

// theta <- (1-beta)*theta + beta*mean(adapted), the mean accumulated in task
// order. Identical to theta - beta*(1/k)*sum(theta - theta_i); this form is
// exact at k=1, beta=1.
ModelParams outer_update(const ModelParams& theta, std::span<const ModelParams> adapted,
                         double beta);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double meta_loss = 0;
  double val_loss = 0;
  double val_psnr = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  double initial_val_loss = 0;
  double initial_val_psnr = 0;
};

// Algorithm: per outer iteration, sample k tasks, adapt each with the
// two-step rule, then interpolate. Learning rates decay by lr_decay_factor
// every lr_decay_every_pretrain epochs. Deterministic given the seed,
// regardless of the thread count.
TrainResult meta_train(const MetaDataset& ds, const ArchConfig& arch, const MetaConfig& cfg,
                       int threads = 0);

// Adam state for one parameter vector.
struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init(Eigen::Index n);
  void update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr);
};

// First-order fine-tuning with Adam on weights (1,0,0,1); B and T still
// receive gradient through the recomposition term.
TrainResult fine_tune(const ModelParams& start, const PairedDataset& pairs,
                      const MetaConfig& cfg);

// Clean-image head at full resolution: reflect-pads to the required
// multiple, runs the network, crops back.
ImageRgb enhance(const ModelParams& p, const ImageRgb& input);
// Same, returning all three heads (for emitting t and B alongside J).
Prediction enhance_full(const ModelParams& p, const ImageRgb& input);

}  // namespace aquaforge
