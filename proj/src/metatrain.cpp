#include "aquaforge/metatrain.hpp"

#include <cmath>
#include <limits>

#include "aquaforge/metrics.hpp"
#include "aquaforge/parallel.hpp"

namespace aquaforge {

void MetaConfig::validate() const {
  // Zero rates are allowed; they express the documented degenerate cases.
  if (inner_lr < 0 || outer_lr < 0 || finetune_lr < 0)
    throw std::invalid_argument("MetaConfig: learning rates must be >= 0");
  if (task_batch < 1) throw std::invalid_argument("MetaConfig: task_batch must be >= 1");
  if (data_batch < 2) throw std::invalid_argument("MetaConfig: data_batch must be >= 2");
  if (pretrain_epochs < 0 || finetune_epochs < 0)
    throw std::invalid_argument("MetaConfig: epoch counts must be >= 0");
  if (!(lr_decay_factor > 0 && lr_decay_factor <= 1))
    throw std::invalid_argument("MetaConfig: lr_decay_factor must be in (0,1]");
  if (lr_decay_every_pretrain < 1 || lr_decay_every_finetune < 1)
    throw std::invalid_argument("MetaConfig: decay intervals must be >= 1");
  if (iters_per_epoch < 0)
    throw std::invalid_argument("MetaConfig: iters_per_epoch must be >= 0");
}

double lr_at_epoch(double base, double factor, int every, int epoch) {
  return base * std::pow(factor, epoch / every);
}

ModelParams inner_adapt(const ModelParams& theta, const Objective& support,
                        const Objective& query, double alpha) {
  auto [loss_s, grad_s] = support(theta);
  ModelParams mid = theta.scaled_add(grad_s, -alpha);
  auto [loss_q, grad_q] = query(mid);
  (void)loss_s;
  (void)loss_q;
  return mid.scaled_add(grad_q, -alpha);
}

namespace {

struct InnerResult {
  ModelParams params;
  double support_loss = 0;
};

InnerResult inner_adapt_traced(const ModelParams& theta, const Task& task, double alpha,
                               const LossWeights& w) {
  if (task.support.empty() || task.query.empty())
    throw std::invalid_argument("inner_adapt: task needs non-empty support and query sets");
  BackwardResult s = forward_backward(theta, task.support, w);
  ModelParams mid = theta.scaled_add(s.grad, -alpha);
  BackwardResult q = forward_backward(mid, task.query, w);
  return {mid.scaled_add(q.grad, -alpha), s.loss};
}

}  // namespace

ModelParams inner_adapt(const ModelParams& theta, const Task& task, double alpha,
                        const LossWeights& w) {
  return inner_adapt_traced(theta, task, alpha, w).params;
}

ModelParams outer_update(const ModelParams& theta, std::span<const ModelParams> adapted,
                         double beta) {
  if (adapted.empty()) throw std::invalid_argument("outer_update: no adapted parameters");
  ModelParams out = theta;
  for (int h = 0; h < 3; ++h) {
    // Mean accumulated in task order; the interpolation form keeps
    // beta = 1, k = 1 exact.
    Eigen::VectorXd mean = adapted[0].theta[std::size_t(h)];
    for (std::size_t i = 1; i < adapted.size(); ++i) mean += adapted[i].theta[std::size_t(h)];
    mean /= double(adapted.size());
    out.theta[std::size_t(h)] = (1.0 - beta) * theta.theta[std::size_t(h)] + beta * mean;
  }
  return out;
}

namespace {

struct ValSet {
  std::vector<TrainExample> examples;
};

ValSet make_val_set(const MetaDataset& ds, int patch) {
  ValSet v;
  for (int gi : ds.val_groups)
    for (const TrainExample& ex : ds.groups[std::size_t(gi)].samples)
      v.examples.push_back(center_crop(ex, patch));
  return v;
}

std::pair<double, double> eval_examples(const ModelParams& p,
                                        std::span<const TrainExample> examples,
                                        const LossWeights& w) {
  if (examples.empty())
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double loss = 0, psnr_sum = 0;
  for (const TrainExample& ex : examples) {
    Prediction pred = forward(p, ex.input);
    loss += total_loss(loss_components(pred, ex), w);
    psnr_sum += psnr(pred.J, ex.clean);
  }
  return {loss / double(examples.size()), psnr_sum / double(examples.size())};
}

}  // namespace

TrainResult meta_train(const MetaDataset& ds, const ArchConfig& arch, const MetaConfig& cfg,
                       int threads) {
  cfg.validate();
  arch.validate();
  if (int(ds.train_groups.size()) < cfg.task_batch)
    throw std::runtime_error("meta_train: dataset too small: need at least " +
                             std::to_string(cfg.task_batch) + " train distortion types, have " +
                             std::to_string(ds.train_groups.size()));

  const LossWeights w = LossWeights::pretrain();
  const int support_n = cfg.support_size();
  const int query_n = cfg.query_size();

  TrainResult result;
  result.params = init_params(arch, cfg.seed);
  Rng rng = Rng(cfg.seed).split(0x6D657461);

  ValSet val = make_val_set(ds, arch.patch_size);
  std::tie(result.initial_val_loss, result.initial_val_psnr) =
      eval_examples(result.params, val.examples, w);

  int iters = cfg.iters_per_epoch;
  if (iters <= 0) {
    double per_iter = double(cfg.task_batch) * cfg.data_batch;
    iters = std::max(1, int(std::llround(double(ds.train_sample_count()) / per_iter)));
  }

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const double alpha = lr_at_epoch(cfg.inner_lr, cfg.lr_decay_factor,
                                     cfg.lr_decay_every_pretrain, epoch);
    const double beta = lr_at_epoch(cfg.outer_lr, cfg.lr_decay_factor,
                                    cfg.lr_decay_every_pretrain, epoch);
    double loss_sum = 0;
    for (int it = 0; it < iters; ++it) {
      TaskBatch tasks =
          sample_tasks(ds, rng, cfg.task_batch, support_n, query_n, arch.patch_size);
      std::vector<ModelParams> adapted(tasks.size());
      std::vector<double> support_loss(tasks.size());
      const ModelParams& theta = result.params;
      parallel_for(tasks.size(), threads, [&](std::size_t i) {
        InnerResult r = inner_adapt_traced(theta, tasks[i], alpha, w);
        adapted[i] = std::move(r.params);
        support_loss[i] = r.support_loss;
      });
      result.params = outer_update(result.params, adapted, beta);
      for (double l : support_loss) loss_sum += l;
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = alpha;
    log.meta_loss = loss_sum / (double(iters) * double(cfg.task_batch));
    std::tie(log.val_loss, log.val_psnr) = eval_examples(result.params, val.examples, w);
    result.log.push_back(log);
  }
  return result;
}

void AdamState::init(Eigen::Index n) {
  m = Eigen::VectorXd::Zero(n);
  v = Eigen::VectorXd::Zero(n);
  step = 0;
}

void AdamState::update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
  if (m.size() != grad.size()) init(grad.size());
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v.array() = beta2 * v.array() + (1.0 - beta2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(beta1, double(step));
  const double bc2 = 1.0 - std::pow(beta2, double(step));
  theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

TrainResult fine_tune(const ModelParams& start, const PairedDataset& pairs,
                      const MetaConfig& cfg) {
  cfg.validate();
  if (pairs.pairs.empty()) throw std::runtime_error("fine_tune: empty dataset");

  const LossWeights w = LossWeights::finetune();
  const int patch = start.arch.patch_size;

  std::vector<TrainExample> full;
  for (const RealPair& pr : pairs.pairs) {
    TrainExample ex;
    ex.input = pr.degraded;
    ex.clean = pr.reference;
    ex.has_tb = false;
    full.push_back(std::move(ex));
  }
  std::vector<TrainExample> val;
  val.reserve(full.size());
  for (const TrainExample& ex : full) val.push_back(center_crop(ex, patch));

  TrainResult result;
  result.params = start;
  std::tie(result.initial_val_loss, result.initial_val_psnr) =
      eval_examples(result.params, val, w);

  Rng rng = Rng(cfg.seed).split(0x66696E65);
  std::array<AdamState, 3> adam;

  for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.finetune_lr, cfg.lr_decay_factor,
                                  cfg.lr_decay_every_finetune, epoch);
    std::vector<std::size_t> order(full.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::size_t j = i + rng.uniform_index(order.size() - i);
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.data_batch)) {
      std::vector<TrainExample> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + std::size_t(cfg.data_batch)); ++i)
        batch.push_back(random_crop(full[order[i]], patch, rng));
      BackwardResult fb = forward_backward(result.params, batch, w);
      for (int h = 0; h < 3; ++h)
        adam[std::size_t(h)].update(result.params.theta[std::size_t(h)], fb.grad[std::size_t(h)],
                                    lr);
      loss_sum += fb.loss;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.meta_loss = loss_sum / double(batches);
    std::tie(log.val_loss, log.val_psnr) = eval_examples(result.params, val, w);
    result.log.push_back(log);
  }
  return result;
}

Prediction enhance_full(const ModelParams& p, const ImageRgb& input) {
  const int div = p.arch.spatial_divisor();
  const Index rows = input.rows(), cols = input.cols();
  const Index pr = (rows + div - 1) / div * div;
  const Index pc = (cols + div - 1) / div * div;
  ImageRgb padded = reflect_pad(input, pr, pc);
  Prediction pred = forward(p, padded);
  if (pr == rows && pc == cols) return pred;
  Prediction cropped;
  cropped.J = ImageRgb(rows, cols);
  cropped.B = Field3(rows, cols);
  cropped.t = Field3(rows, cols);
  for (int c = 0; c < 3; ++c) {
    cropped.J.ch[c] = pred.J.ch[c].block(0, 0, rows, cols);
    cropped.B.ch[c] = pred.B.ch[c].block(0, 0, rows, cols);
    cropped.t.ch[c] = pred.t.ch[c].block(0, 0, rows, cols);
  }
  return cropped;
}

ImageRgb enhance(const ModelParams& p, const ImageRgb& input) {
  return enhance_full(p, input).J;
}

}  // namespace aquaforge
