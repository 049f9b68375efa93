#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "aquaforge/metatrain.hpp"
#include "aquaforge/uwmodel.hpp"

using namespace aquaforge;

namespace {

ModelParams scalar_params(double v) {
  ModelParams p;
  p.arch = ArchConfig{};
  for (int h = 0; h < 3; ++h) p.theta[std::size_t(h)] = Eigen::VectorXd::Constant(1, v);
  return p;
}

bool same_vec(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

ArchConfig smoke_arch() {
  ArchConfig cfg;
  cfg.num_enc_blocks = 2;
  cfg.num_dec_blocks = 2;
  cfg.base_channels = 4;
  cfg.patch_size = 16;
  return cfg;
}

TrainExample constant_example(Index rows, Index cols, double v, bool with_tb = true) {
  TrainExample ex;
  ex.input = ImageRgb::constant(rows, cols, std::min(1.0, v));
  ex.clean = ImageRgb::constant(rows, cols, std::min(1.0, 0.5 * v));
  if (with_tb) {
    ex.transmission = Field3::constant(rows, cols, 0.8);
    ex.background = Field3::constant(rows, cols, std::min(1.0, 0.3 * v + 0.1));
  }
  ex.has_tb = with_tb;
  return ex;
}

MetaDataset single_group_dataset(int samples, Index size) {
  MetaDataset ds;
  DistortionGroup g;
  g.id = "X-00";
  g.params.water_type = "G";
  for (int i = 0; i < samples; ++i) {
    g.samples.push_back(constant_example(size, size, 0.9));
    g.sample_ids.push_back("s" + std::to_string(i));
  }
  ds.groups.push_back(std::move(g));
  ds.train_groups = {0};
  return ds;
}

}  // namespace

TEST_SUITE_BEGIN("metatrain");

TEST_CASE("inner_adapt with alpha=0 is the identity") {
  ModelParams theta = scalar_params(3.0);
  Objective obj = [](const ModelParams& p) {
    std::array<Eigen::VectorXd, 3> g;
    for (int h = 0; h < 3; ++h) g[std::size_t(h)] = p.theta[std::size_t(h)];
    return std::make_pair(0.5 * p.theta[0].squaredNorm(), g);
  };
  ModelParams out = inner_adapt(theta, obj, obj, 0.0);
  for (int h = 0; h < 3; ++h) CHECK(same_vec(out.theta[h], theta.theta[h]));
}

TEST_CASE("inner_adapt on the quadratic surrogate matches the closed form") {
  // L = theta^2/2 on both sets, so two plain steps give theta*(1-alpha)^2.
  Objective obj = [](const ModelParams& p) {
    std::array<Eigen::VectorXd, 3> g;
    for (int h = 0; h < 3; ++h) g[std::size_t(h)] = p.theta[std::size_t(h)];
    return std::make_pair(0.5 * p.theta[0].squaredNorm(), g);
  };
  for (double alpha : {1e-4, 0.01, 0.3}) {
    ModelParams theta = scalar_params(2.0);
    ModelParams out = inner_adapt(theta, obj, obj, alpha);
    double expected = 2.0 * (1.0 - alpha) * (1.0 - alpha);
    for (int h = 0; h < 3; ++h)
      CHECK(out.theta[h][0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("inner_adapt at a stationary point stays put") {
  Objective flat = [](const ModelParams& p) {
    std::array<Eigen::VectorXd, 3> g;
    for (int h = 0; h < 3; ++h) g[std::size_t(h)] = Eigen::VectorXd::Zero(p.theta[0].size());
    return std::make_pair(1.0, g);
  };
  ModelParams theta = scalar_params(5.0);
  ModelParams out = inner_adapt(theta, flat, flat, 0.7);
  for (int h = 0; h < 3; ++h) CHECK(same_vec(out.theta[h], theta.theta[h]));
}

TEST_CASE("inner_adapt rejects empty support or query sets") {
  ModelParams p = init_params(smoke_arch(), 1);
  Task task;
  task.query.push_back(constant_example(16, 16, 0.5));
  CHECK_THROWS(inner_adapt(p, task, 1e-4, LossWeights::pretrain()));
}

TEST_CASE("outer_update with k=1, beta=1 returns theta_1 exactly") {
  Rng rng(9);
  ModelParams theta = scalar_params(0.0);
  ModelParams adapted = scalar_params(0.0);
  for (int h = 0; h < 3; ++h) {
    theta.theta[std::size_t(h)] = Eigen::VectorXd::Random(64);
    adapted.theta[std::size_t(h)] = Eigen::VectorXd::Random(64);
  }
  std::vector<ModelParams> list{adapted};
  ModelParams out = outer_update(theta, list, 1.0);
  for (int h = 0; h < 3; ++h) CHECK(same_vec(out.theta[h], adapted.theta[h]));
  (void)rng;
}

TEST_CASE("outer_update reproduces the scalar example") {
  ModelParams theta = scalar_params(0.0);
  std::vector<ModelParams> adapted{scalar_params(2.0), scalar_params(4.0)};
  ModelParams out = outer_update(theta, adapted, 0.5);
  for (int h = 0; h < 3; ++h) CHECK(out.theta[h][0] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("outer_update is a fixed point when nothing adapted") {
  ModelParams theta = scalar_params(1.7);
  std::vector<ModelParams> adapted{theta, theta, theta};
  ModelParams out = outer_update(theta, adapted, 0.3);
  for (int h = 0; h < 3; ++h)
    CHECK(out.theta[h][0] == doctest::Approx(1.7).epsilon(1e-15));
}

TEST_CASE("outer_update requires at least one adapted parameter set") {
  ModelParams theta = scalar_params(1.0);
  std::vector<ModelParams> none;
  CHECK_THROWS(outer_update(theta, none, 0.5));
}

TEST_CASE("the learning rate schedule decays stepwise") {
  CHECK(lr_at_epoch(1.0, 0.8, 5, 0) == 1.0);
  CHECK(lr_at_epoch(1.0, 0.8, 5, 4) == 1.0);
  CHECK(lr_at_epoch(1.0, 0.8, 5, 5) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(lr_at_epoch(1.0, 0.8, 5, 10) == doctest::Approx(0.64).epsilon(1e-12));
  CHECK(lr_at_epoch(1e-5, 0.8, 2, 4) == doctest::Approx(0.64e-5).epsilon(1e-12));
}

TEST_CASE("meta_train with zero epochs returns the initialization") {
  MetaDataset ds = single_group_dataset(8, 16);
  MetaConfig cfg;
  cfg.task_batch = 1;
  cfg.pretrain_epochs = 0;
  cfg.seed = 3;
  TrainResult r = meta_train(ds, smoke_arch(), cfg, 1);
  ModelParams fresh = init_params(smoke_arch(), 3);
  for (int h = 0; h < 3; ++h) CHECK(same_vec(r.params.theta[h], fresh.theta[h]));
  CHECK(r.log.empty());
}

TEST_CASE("meta_train errors when fewer train distortions than tasks") {
  MetaDataset ds = single_group_dataset(8, 16);
  MetaConfig cfg;
  cfg.task_batch = 5;
  CHECK_THROWS_WITH_AS(meta_train(ds, smoke_arch(), cfg, 1), doctest::Contains("too small"),
                       std::runtime_error);
}

TEST_CASE("single-distortion smoke run decreases monotonically at default rates") {
  // One distortion, identical support and query content, fixed batch data.
  MetaDataset ds = single_group_dataset(8, 16);
  MetaConfig cfg;  // alpha 1e-4, beta 5e-5 defaults
  cfg.task_batch = 1;
  cfg.pretrain_epochs = 10;
  cfg.iters_per_epoch = 1;
  cfg.seed = 0;
  TrainResult r = meta_train(ds, smoke_arch(), cfg, 1);
  REQUIRE(r.log.size() == 10);
  for (std::size_t i = 1; i < r.log.size(); ++i)
    CHECK(r.log[i].meta_loss <= r.log[i - 1].meta_loss + 1e-14);
  CHECK(r.log.back().meta_loss < r.log.front().meta_loss);
}

TEST_CASE("meta_train is deterministic and thread-count independent") {
  MetaDataset ds = single_group_dataset(10, 16);
  // add a second group so sampling has a choice to make
  DistortionGroup g2 = ds.groups[0];
  g2.id = "Y-00";
  for (auto& ex : g2.samples)
    for (int c = 0; c < 3; ++c) ex.input.ch[c] *= 0.7;
  ds.groups.push_back(g2);
  ds.train_groups = {0, 1};
  MetaConfig cfg;
  cfg.task_batch = 2;
  cfg.pretrain_epochs = 2;
  cfg.iters_per_epoch = 2;
  cfg.inner_lr = 1e-3;
  cfg.outer_lr = 0.5;
  cfg.seed = 11;
  TrainResult a = meta_train(ds, smoke_arch(), cfg, 1);
  TrainResult b = meta_train(ds, smoke_arch(), cfg, 4);
  for (int h = 0; h < 3; ++h) CHECK(same_vec(a.params.theta[h], b.params.theta[h]));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].meta_loss == b.log[i].meta_loss);
    CHECK(a.log[i].lr == b.log[i].lr);
  }
}

TEST_CASE("finetune weights route gradient through the recomposition only") {
  ModelParams p = init_params(smoke_arch(), 21);
  TrainExample ex = constant_example(16, 16, 0.8);
  TrainExample no_tb = ex;
  no_tb.has_tb = false;
  std::vector<TrainExample> a{ex}, b{no_tb};
  // with c_b = c_t = 0 the B/T supervision paths must contribute nothing,
  // so garbage targets and missing targets give identical gradients
  BackwardResult ga = forward_backward(p, a, LossWeights::finetune());
  BackwardResult gb = forward_backward(p, b, LossWeights::finetune());
  for (int h = 0; h < 3; ++h) CHECK(same_vec(ga.grad[h], gb.grad[h]));
  // ...while B and T parameters still receive gradient through L_I
  CHECK(ga.grad[kHeadB].cwiseAbs().maxCoeff() > 0.0);
  CHECK(ga.grad[kHeadT].cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("adam does not move parameters on a zero gradient") {
  AdamState adam;
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(16, 0.25);
  Eigen::VectorXd before = theta;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(16);
  for (int i = 0; i < 10; ++i) adam.update(theta, zero, 1e-3);
  CHECK(same_vec(theta, before));
}

TEST_CASE("fine_tune with zero learning rate returns the input checkpoint") {
  ModelParams start = init_params(smoke_arch(), 31);
  PairedDataset pairs;
  RealPair pr;
  pr.id = "a";
  pr.degraded = ImageRgb::constant(16, 16, 0.6);
  pr.reference = ImageRgb::constant(16, 16, 0.5);
  pairs.pairs.push_back(pr);
  MetaConfig cfg;
  cfg.finetune_lr = 0.0;
  cfg.finetune_epochs = 3;
  TrainResult r = fine_tune(start, pairs, cfg);
  for (int h = 0; h < 3; ++h) CHECK(same_vec(r.params.theta[h], start.theta[h]));
}

TEST_CASE("fine_tune reduces the training loss on a toy pair set") {
  ModelParams start = init_params(smoke_arch(), 32);
  PairedDataset pairs;
  Rng rng(5);
  for (int i = 0; i < 2; ++i) {
    RealPair pr;
    pr.id = "p" + std::to_string(i);
    pr.degraded = ImageRgb(16, 16);
    for (int c = 0; c < 3; ++c)
      for (Index y = 0; y < 16; ++y)
        for (Index x = 0; x < 16; ++x) pr.degraded(c, y, x) = rng.uniform(0.2, 0.9);
    pr.reference = pr.degraded;
    pairs.pairs.push_back(std::move(pr));
  }
  MetaConfig cfg;
  cfg.finetune_lr = 1e-3;
  cfg.finetune_epochs = 30;
  cfg.seed = 2;
  TrainResult r = fine_tune(start, pairs, cfg);
  REQUIRE(!r.log.empty());
  CHECK(r.log.back().meta_loss < r.log.front().meta_loss);
  CHECK(r.log.back().val_loss < r.initial_val_loss);
}

TEST_CASE("fine_tune rejects an empty dataset") {
  ModelParams start = init_params(smoke_arch(), 33);
  PairedDataset empty;
  MetaConfig cfg;
  CHECK_THROWS_WITH_AS(fine_tune(start, empty, cfg), doctest::Contains("empty"),
                       std::runtime_error);
}

TEST_CASE("enhance keeps the input shape even when padding is needed") {
  ModelParams p = init_params(smoke_arch(), 41);
  ImageRgb input = ImageRgb::constant(10, 13, 0.4);  // divisor is 4
  ImageRgb out = enhance(p, input);
  CHECK(out.rows() == 10);
  CHECK(out.cols() == 13);
  ImageRgb out2 = enhance(p, input);
  for (int c = 0; c < 3; ++c) CHECK((out.ch[c] == out2.ch[c]).all());
}

TEST_CASE("enhance_full returns all three heads at the input size") {
  ModelParams p = init_params(smoke_arch(), 42);
  ImageRgb input = ImageRgb::constant(9, 7, 0.3);
  Prediction pred = enhance_full(p, input);
  CHECK(pred.J.rows() == 9);
  CHECK(pred.B.rows() == 9);
  CHECK(pred.t.cols() == 7);
  for (int c = 0; c < 3; ++c) {
    CHECK(pred.t.ch[c].minCoeff() >= kTransmissionFloor);
    CHECK(pred.t.ch[c].maxCoeff() <= 1.0);
  }
}

TEST_SUITE_END();
