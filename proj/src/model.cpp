#include "aquaforge/model.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "aquaforge/io.hpp"
#include "aquaforge/rng.hpp"
#include "aquaforge/uwmodel.hpp"

namespace aquaforge {

namespace {

// Smooth leaky unit: f(x) = 0.1 x + 0.9 softplus(kx)/k. Slopes match a
// 0.1-leak rectifier away from zero, but f is C-infinity, which keeps
// central differences at h = 1e-4 faithful to the exact gradient.
constexpr double kLeakSlope = 0.1;
constexpr double kActSharpness = 4.0;

inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

using PlaneMap = Eigen::Map<Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstPlaneMap =
    Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

PlaneMap plane(Tensor& t, int c) {
  return PlaneMap(t.data.data() + c * t.plane_size(), t.rows, t.cols);
}
ConstPlaneMap plane(const Tensor& t, int c) {
  return ConstPlaneMap(t.data.data() + c * t.plane_size(), t.rows, t.cols);
}

struct ConvSpec {
  int in_ch = 0, out_ch = 0, k = 3;
  std::ptrdiff_t w_off = 0, b_off = 0;
};

struct BlockSpec {
  ConvSpec c1, c2, proj;
  bool has_proj = false;
  int in_ch = 0, out_ch = 0;
};

// Fixed layer layout for one sub-network under a config. Offsets index the
// flat parameter vector; the three sub-networks share the layout but never
// the parameters.
struct NetPlan {
  ArchConfig cfg;
  std::vector<int> enc_ch;
  std::vector<BlockSpec> enc, dec;
  ConvSpec head;
  std::ptrdiff_t total = 0;

  static NetPlan build(const ArchConfig& cfg) {
    cfg.validate();
    NetPlan plan;
    plan.cfg = cfg;
    const int E = cfg.num_enc_blocks;
    plan.enc_ch.resize(std::size_t(E));
    for (int i = 0; i < E; ++i)
      plan.enc_ch[std::size_t(i)] = std::min(cfg.base_channels << i, cfg.max_channels);

    std::ptrdiff_t off = 0;
    auto conv = [&off](int in_ch, int out_ch, int k) {
      ConvSpec cs{in_ch, out_ch, k, 0, 0};
      cs.w_off = off;
      off += std::ptrdiff_t(out_ch) * in_ch * k * k;
      cs.b_off = off;
      off += out_ch;
      return cs;
    };
    auto block = [&](int in_ch, int out_ch) {
      BlockSpec b;
      b.in_ch = in_ch;
      b.out_ch = out_ch;
      b.c1 = conv(in_ch, out_ch, 3);
      b.c2 = conv(out_ch, out_ch, 3);
      b.has_proj = cfg.use_shortcut;
      if (b.has_proj) b.proj = conv(in_ch, out_ch, 1);
      return b;
    };

    int ch = 3;
    for (int i = 0; i < E; ++i) {
      plan.enc.push_back(block(ch, plan.enc_ch[std::size_t(i)]));
      ch = plan.enc_ch[std::size_t(i)];
    }
    for (int j = 0; j < E; ++j) {
      int skip_ch = cfg.use_skip ? plan.enc_ch[std::size_t(E - 1 - j)] : 0;
      int out_ch = j <= E - 2 ? plan.enc_ch[std::size_t(E - 2 - j)] : plan.enc_ch[0];
      plan.dec.push_back(block(ch + skip_ch, out_ch));
      ch = out_ch;
    }
    plan.head = conv(ch, 3, 1);
    plan.total = off;
    return plan;
  }
};

void conv_forward(const ConvSpec& cs, const Eigen::VectorXd& theta, const Tensor& in,
                  Tensor& out) {
  const int pad = cs.k / 2;
  out = Tensor(cs.out_ch, in.rows, in.cols);
  const double* W = theta.data() + cs.w_off;
  const double* B = theta.data() + cs.b_off;
  for (int co = 0; co < cs.out_ch; ++co) {
    PlaneMap op = plane(out, co);
    op.setConstant(B[co]);
    for (int ci = 0; ci < cs.in_ch; ++ci) {
      ConstPlaneMap ip = plane(in, ci);
      const double* w = W + (std::ptrdiff_t(co) * cs.in_ch + ci) * cs.k * cs.k;
      for (int ky = 0; ky < cs.k; ++ky)
        for (int kx = 0; kx < cs.k; ++kx) {
          const double wv = w[ky * cs.k + kx];
          const int dy = ky - pad, dx = kx - pad;
          const int y0 = std::max(0, -dy), y1 = std::min(in.rows, in.rows - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(in.cols, in.cols - dx);
          if (y1 <= y0 || x1 <= x0) continue;
          op.block(y0, x0, y1 - y0, x1 - x0) += wv * ip.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0);
        }
    }
  }
}

void conv_backward(const ConvSpec& cs, const Eigen::VectorXd& theta, const Tensor& in,
                   const Tensor& d_out, Eigen::VectorXd& d_theta, Tensor* d_in) {
  const int pad = cs.k / 2;
  const double* W = theta.data() + cs.w_off;
  double* dW = d_theta.data() + cs.w_off;
  double* dB = d_theta.data() + cs.b_off;
  for (int co = 0; co < cs.out_ch; ++co) {
    ConstPlaneMap dop = plane(d_out, co);
    dB[co] += dop.sum();
    for (int ci = 0; ci < cs.in_ch; ++ci) {
      ConstPlaneMap ip = plane(in, ci);
      const double* w = W + (std::ptrdiff_t(co) * cs.in_ch + ci) * cs.k * cs.k;
      double* dw = dW + (std::ptrdiff_t(co) * cs.in_ch + ci) * cs.k * cs.k;
      for (int ky = 0; ky < cs.k; ++ky)
        for (int kx = 0; kx < cs.k; ++kx) {
          const int dy = ky - pad, dx = kx - pad;
          const int y0 = std::max(0, -dy), y1 = std::min(in.rows, in.rows - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(in.cols, in.cols - dx);
          if (y1 <= y0 || x1 <= x0) continue;
          auto dob = dop.block(y0, x0, y1 - y0, x1 - x0);
          dw[ky * cs.k + kx] += (dob * ip.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0)).sum();
          if (d_in) {
            PlaneMap dip = plane(*d_in, ci);
            dip.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0) += w[ky * cs.k + kx] * dob;
          }
        }
    }
  }
}

Tensor leaky_act(const Tensor& pre) {
  Tensor act = pre;
  for (Eigen::Index i = 0; i < pre.data.size(); ++i) {
    const double x = pre.data[i];
    act.data[i] = kLeakSlope * x + (1.0 - kLeakSlope) * softplus(kActSharpness * x) / kActSharpness;
  }
  return act;
}

Tensor leaky_act_backward(const Tensor& pre, const Tensor& d_act) {
  Tensor d_pre = d_act;
  for (Eigen::Index i = 0; i < pre.data.size(); ++i) {
    const double s = sigmoid(kActSharpness * pre.data[i]);
    d_pre.data[i] = d_act.data[i] * (kLeakSlope + (1.0 - kLeakSlope) * s);
  }
  return d_pre;
}

Tensor avgpool2(const Tensor& in) {
  Tensor out(in.channels, in.rows / 2, in.cols / 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.rows; ++y)
      for (int x = 0; x < out.cols; ++x)
        out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                  in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
  return out;
}

Tensor avgpool2_backward(const Tensor& d_out, int in_rows, int in_cols) {
  Tensor d_in(d_out.channels, in_rows, in_cols);
  for (int c = 0; c < d_out.channels; ++c)
    for (int y = 0; y < in_rows; ++y)
      for (int x = 0; x < in_cols; ++x)
        d_in.at(c, y, x) = 0.25 * d_out.at(c, y / 2, x / 2);
  return d_in;
}

// Bilinear x2, half-pixel centers (align_corners = false).
struct LinTable {
  std::vector<int> i0, i1;
  std::vector<double> w;
};

LinTable up_table(int n_in) {
  LinTable t;
  const int n_out = 2 * n_in;
  t.i0.resize(std::size_t(n_out));
  t.i1.resize(std::size_t(n_out));
  t.w.resize(std::size_t(n_out));
  for (int o = 0; o < n_out; ++o) {
    double src = 0.5 * (o + 0.5) - 0.5;
    double f = std::floor(src);
    t.w[std::size_t(o)] = src - f;
    t.i0[std::size_t(o)] = std::clamp(int(f), 0, n_in - 1);
    t.i1[std::size_t(o)] = std::clamp(int(f) + 1, 0, n_in - 1);
  }
  return t;
}

Tensor upsample2(const Tensor& in) {
  LinTable ty = up_table(in.rows), tx = up_table(in.cols);
  Tensor out(in.channels, 2 * in.rows, 2 * in.cols);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.rows; ++y) {
      const double wy = ty.w[std::size_t(y)];
      const int y0 = ty.i0[std::size_t(y)], y1 = ty.i1[std::size_t(y)];
      for (int x = 0; x < out.cols; ++x) {
        const double wx = tx.w[std::size_t(x)];
        const int x0 = tx.i0[std::size_t(x)], x1 = tx.i1[std::size_t(x)];
        out.at(c, y, x) = (1 - wy) * ((1 - wx) * in.at(c, y0, x0) + wx * in.at(c, y0, x1)) +
                          wy * ((1 - wx) * in.at(c, y1, x0) + wx * in.at(c, y1, x1));
      }
    }
  return out;
}

Tensor upsample2_backward(const Tensor& d_out, int in_rows, int in_cols) {
  LinTable ty = up_table(in_rows), tx = up_table(in_cols);
  Tensor d_in(d_out.channels, in_rows, in_cols);
  for (int c = 0; c < d_out.channels; ++c)
    for (int y = 0; y < d_out.rows; ++y) {
      const double wy = ty.w[std::size_t(y)];
      const int y0 = ty.i0[std::size_t(y)], y1 = ty.i1[std::size_t(y)];
      for (int x = 0; x < d_out.cols; ++x) {
        const double wx = tx.w[std::size_t(x)];
        const int x0 = tx.i0[std::size_t(x)], x1 = tx.i1[std::size_t(x)];
        const double g = d_out.at(c, y, x);
        d_in.at(c, y0, x0) += (1 - wy) * (1 - wx) * g;
        d_in.at(c, y0, x1) += (1 - wy) * wx * g;
        d_in.at(c, y1, x0) += wy * (1 - wx) * g;
        d_in.at(c, y1, x1) += wy * wx * g;
      }
    }
  return d_in;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels + b.channels, a.rows, a.cols);
  out.data.head(a.data.size()) = a.data;
  out.data.tail(b.data.size()) = b.data;
  return out;
}

struct BlockTrace {
  Tensor in, pre1, act1, pre2, sum;
};

// Two 3x3 convolutions with leaky rectification plus a 1x1 projection
// shortcut across the block.
Tensor block_forward(const BlockSpec& b, const Eigen::VectorXd& theta, Tensor in,
                     BlockTrace& trace) {
  trace.in = std::move(in);
  conv_forward(b.c1, theta, trace.in, trace.pre1);
  trace.act1 = leaky_act(trace.pre1);
  conv_forward(b.c2, theta, trace.act1, trace.pre2);
  Tensor act2 = leaky_act(trace.pre2);
  if (b.has_proj) {
    Tensor shortcut;
    conv_forward(b.proj, theta, trace.in, shortcut);
    act2.data += shortcut.data;
  }
  trace.sum = std::move(act2);
  return trace.sum;
}

// Returns d(in); accumulates parameter gradients.
Tensor block_backward(const BlockSpec& b, const Eigen::VectorXd& theta, const BlockTrace& trace,
                      const Tensor& d_sum, Eigen::VectorXd& d_theta) {
  Tensor d_in(trace.in.channels, trace.in.rows, trace.in.cols);
  if (b.has_proj) conv_backward(b.proj, theta, trace.in, d_sum, d_theta, &d_in);
  Tensor d_pre2 = leaky_act_backward(trace.pre2, d_sum);
  Tensor d_act1(trace.act1.channels, trace.act1.rows, trace.act1.cols);
  conv_backward(b.c2, theta, trace.act1, d_pre2, d_theta, &d_act1);
  Tensor d_pre1 = leaky_act_backward(trace.pre1, d_act1);
  conv_backward(b.c1, theta, trace.in, d_pre1, d_theta, &d_in);
  return d_in;
}

struct NetTrace {
  std::vector<BlockTrace> enc, dec;
  std::vector<std::pair<int, int>> pooled_dims;  // y_i dims for pool backward
  Tensor out;                                    // squashed head output
};

// Head squash. J and B use a plain sigmoid; the transmission head lands in
// [kTransmissionFloor, 1] so the recomposition stays well-conditioned.
void squash(Head head, Tensor& t) {
  if (head == kHeadT) {
    t.data = kTransmissionFloor + (1.0 - kTransmissionFloor) / (1.0 + (-t.data).exp());
  } else {
    t.data = 1.0 / (1.0 + (-t.data).exp());
  }
}

Tensor squash_backward(Head head, const Tensor& out, const Tensor& d_out) {
  Tensor d_pre = d_out;
  if (head == kHeadT) {
    Eigen::ArrayXd s = (out.data - kTransmissionFloor) / (1.0 - kTransmissionFloor);
    d_pre.data = d_out.data * (1.0 - kTransmissionFloor) * s * (1.0 - s);
  } else {
    d_pre.data = d_out.data * out.data * (1.0 - out.data);
  }
  return d_pre;
}

Tensor net_forward(const NetPlan& plan, const Eigen::VectorXd& theta, Head head,
                   const Tensor& input, NetTrace& trace) {
  const int E = plan.cfg.num_enc_blocks;
  trace.enc.resize(std::size_t(E));
  trace.dec.resize(std::size_t(E));
  trace.pooled_dims.resize(std::size_t(E));

  Tensor a = input;
  for (int i = 0; i < E; ++i) {
    Tensor y = block_forward(plan.enc[std::size_t(i)], theta, std::move(a), trace.enc[std::size_t(i)]);
    trace.pooled_dims[std::size_t(i)] = {y.rows, y.cols};
    a = avgpool2(y);
  }
  Tensor z = std::move(a);
  for (int j = 0; j < E; ++j) {
    Tensor u = upsample2(z);
    Tensor cat = plan.cfg.use_skip ? concat(u, trace.enc[std::size_t(E - 1 - j)].sum)
                                   : std::move(u);
    z = block_forward(plan.dec[std::size_t(j)], theta, std::move(cat), trace.dec[std::size_t(j)]);
  }
  Tensor hpre;
  conv_forward(plan.head, theta, z, hpre);
  squash(head, hpre);
  trace.out = std::move(hpre);
  return trace.out;
}

void net_backward(const NetPlan& plan, const Eigen::VectorXd& theta, Head head,
                  const NetTrace& trace, const Tensor& d_out, Eigen::VectorXd& d_theta) {
  const int E = plan.cfg.num_enc_blocks;
  Tensor d_pre = squash_backward(head, trace.out, d_out);
  const Tensor& z_last = trace.dec[std::size_t(E - 1)].sum;
  Tensor d_z(z_last.channels, z_last.rows, z_last.cols);
  conv_backward(plan.head, theta, z_last, d_pre, d_theta, &d_z);

  // Skip gradients accumulate onto the encoder pre-pool activations.
  std::vector<Tensor> d_y(static_cast<std::size_t>(E));
  for (int i = 0; i < E; ++i) {
    const Tensor& y = trace.enc[std::size_t(i)].sum;
    d_y[std::size_t(i)] = Tensor(y.channels, y.rows, y.cols);
  }

  for (int j = E - 1; j >= 0; --j) {
    const BlockTrace& bt = trace.dec[std::size_t(j)];
    Tensor d_cat = block_backward(plan.dec[std::size_t(j)], theta, bt, d_z, d_theta);
    const int mirror = E - 1 - j;
    Tensor d_u;
    if (plan.cfg.use_skip) {
      const Tensor& y = trace.enc[std::size_t(mirror)].sum;
      d_u = Tensor(d_cat.channels - y.channels, d_cat.rows, d_cat.cols);
      d_u.data = d_cat.data.head(d_u.data.size());
      d_y[std::size_t(mirror)].data += d_cat.data.tail(y.data.size());
    } else {
      d_u = std::move(d_cat);
    }
    // d_z for the previous decoder block (or the bottleneck at j == 0)
    d_z = upsample2_backward(d_u, d_u.rows / 2, d_u.cols / 2);
  }

  // d_z now holds the gradient at the bottleneck a_E = pool(y_{E-1}).
  for (int i = E - 1; i >= 0; --i) {
    auto [yr, yc] = trace.pooled_dims[std::size_t(i)];
    d_y[std::size_t(i)].data += avgpool2_backward(d_z, yr, yc).data;
    d_z = block_backward(plan.enc[std::size_t(i)], theta, trace.enc[std::size_t(i)],
                         d_y[std::size_t(i)], d_theta);
  }
}

}  // namespace

void ArchConfig::validate() const {
  if (num_enc_blocks < 1 || num_dec_blocks < 1)
    throw std::invalid_argument("ArchConfig: block counts must be >= 1");
  if (num_enc_blocks != num_dec_blocks)
    throw std::invalid_argument("ArchConfig: encoder and decoder block counts must match");
  if (base_channels < 1) throw std::invalid_argument("ArchConfig: base_channels must be >= 1");
  if (max_channels < base_channels)
    throw std::invalid_argument("ArchConfig: max_channels must be >= base_channels");
  if (patch_size < 1) throw std::invalid_argument("ArchConfig: patch_size must be >= 1");
}

Tensor tensor_from_field(const Field3& f) {
  Tensor t(3, int(f.rows()), int(f.cols()));
  for (int c = 0; c < 3; ++c) plane(t, c) = f.ch[c];
  return t;
}

Field3 field_from_tensor(const Tensor& t) {
  Field3 f(t.rows, t.cols);
  for (int c = 0; c < 3; ++c) f.ch[c] = plane(t, c);
  return f;
}

std::size_t param_count(const ArchConfig& cfg) {
  return std::size_t(NetPlan::build(cfg).total);
}

ModelParams init_params(const ArchConfig& cfg, std::uint64_t seed) {
  NetPlan plan = NetPlan::build(cfg);
  ModelParams p;
  p.arch = cfg;
  p.init_seed = seed;
  Rng root(seed);
  for (int h = 0; h < 3; ++h) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(plan.total);
    Rng net_rng = root.split(std::uint64_t(h));
    int layer = 0;
    auto fill = [&](const ConvSpec& cs) {
      Rng r = net_rng.split(std::uint64_t(layer++));
      const double scale = 1.0 / std::sqrt(double(cs.in_ch) * cs.k * cs.k);
      // Weights land on the float32 grid so fresh params survive the
      // float32 checkpoint round trip exactly; biases stay zero.
      for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(cs.out_ch) * cs.in_ch * cs.k * cs.k; ++i)
        theta[cs.w_off + i] = double(float(r.uniform(-scale, scale)));
    };
    for (const auto& b : plan.enc) {
      fill(b.c1);
      fill(b.c2);
      if (b.has_proj) fill(b.proj);
    }
    for (const auto& b : plan.dec) {
      fill(b.c1);
      fill(b.c2);
      if (b.has_proj) fill(b.proj);
    }
    fill(plan.head);
    p.theta[std::size_t(h)] = std::move(theta);
  }
  return p;
}

namespace {

void check_forward_input(const ArchConfig& cfg, const Field3& input) {
  const int div = cfg.spatial_divisor();
  if (input.rows() % div != 0 || input.cols() % div != 0)
    throw std::invalid_argument(
        "forward: input dims " + std::to_string(input.rows()) + "x" +
        std::to_string(input.cols()) + " must be divisible by " + std::to_string(div));
  if (input.rows() < div || input.cols() < div)
    throw std::invalid_argument("forward: input smaller than 2^num_enc_blocks");
}

}  // namespace

Prediction forward(const ModelParams& p, const ImageRgb& input) {
  check_forward_input(p.arch, input);
  NetPlan plan = NetPlan::build(p.arch);
  Tensor in = tensor_from_field(input);
  Prediction pred;
  NetTrace trace;
  pred.J = field_from_tensor(net_forward(plan, p.theta[kHeadJ], kHeadJ, in, trace));
  trace = NetTrace{};
  pred.B = field_from_tensor(net_forward(plan, p.theta[kHeadB], kHeadB, in, trace));
  trace = NetTrace{};
  pred.t = field_from_tensor(net_forward(plan, p.theta[kHeadT], kHeadT, in, trace));
  return pred;
}

LossTerms loss_components(const Prediction& pred, const TrainExample& target) {
  require_same_shape(pred.J, target.input, "loss_components");
  require_same_shape(pred.J, target.clean, "loss_components");
  const double n = double(pred.J.size());
  LossTerms terms;
  for (int c = 0; c < 3; ++c) {
    terms.l_j += (pred.J.ch[c] - target.clean.ch[c]).abs().sum();
    if (target.has_tb) {
      terms.l_b += (pred.B.ch[c] - target.background.ch[c]).abs().sum();
      terms.l_t += (pred.t.ch[c] - target.transmission.ch[c]).abs().sum();
    }
    Plane recon = pred.J.ch[c] * pred.t.ch[c] + pred.B.ch[c] * (1.0 - pred.t.ch[c]);
    terms.l_i += (recon - target.input.ch[c]).abs().sum();
  }
  terms.l_j /= n;
  terms.l_b /= n;
  terms.l_t /= n;
  terms.l_i /= n;
  return terms;
}

double total_loss(const LossTerms& terms, const LossWeights& w) {
  return w.c_j * terms.l_j + w.c_b * terms.l_b + w.c_t * terms.l_t + w.c_i * terms.l_i;
}

BackwardResult forward_backward(const ModelParams& p, std::span<const TrainExample> batch,
                                const LossWeights& w) {
  if (batch.empty()) throw std::invalid_argument("forward_backward: empty batch");
  NetPlan plan = NetPlan::build(p.arch);
  BackwardResult res;
  for (int h = 0; h < 3; ++h) res.grad[std::size_t(h)] = Eigen::VectorXd::Zero(plan.total);

  for (const TrainExample& ex : batch) {
    check_forward_input(p.arch, ex.input);
    require_same_shape(ex.input, ex.clean, "forward_backward");
    Tensor in = tensor_from_field(ex.input);
    NetTrace trJ, trB, trT;
    Tensor J = net_forward(plan, p.theta[kHeadJ], kHeadJ, in, trJ);
    Tensor B = net_forward(plan, p.theta[kHeadB], kHeadB, in, trB);
    Tensor T = net_forward(plan, p.theta[kHeadT], kHeadT, in, trT);

    const double n = double(J.data.size());
    Tensor jgt = tensor_from_field(ex.clean);
    Eigen::ArrayXd r_j = J.data - jgt.data;
    Eigen::ArrayXd recon = J.data * T.data + B.data * (1.0 - T.data);
    Eigen::ArrayXd r_i = recon - in.data;

    LossTerms terms;
    terms.l_j = r_j.abs().sum() / n;
    terms.l_i = r_i.abs().sum() / n;
    Eigen::ArrayXd r_b, r_t;
    if (ex.has_tb) {
      require_same_shape(ex.input, ex.background, "forward_backward");
      require_same_shape(ex.input, ex.transmission, "forward_backward");
      r_b = B.data - tensor_from_field(ex.background).data;
      r_t = T.data - tensor_from_field(ex.transmission).data;
      terms.l_b = r_b.abs().sum() / n;
      terms.l_t = r_t.abs().sum() / n;
    }

    const double ex_loss = total_loss(terms, w);
    if (!std::isfinite(terms.l_j)) throw std::runtime_error("forward_backward: L_J is non-finite");
    if (!std::isfinite(terms.l_b)) throw std::runtime_error("forward_backward: L_B is non-finite");
    if (!std::isfinite(terms.l_t)) throw std::runtime_error("forward_backward: L_T is non-finite");
    if (!std::isfinite(terms.l_i)) throw std::runtime_error("forward_backward: L_I is non-finite");

    res.loss += ex_loss;
    res.mean_terms.l_j += terms.l_j;
    res.mean_terms.l_b += terms.l_b;
    res.mean_terms.l_t += terms.l_t;
    res.mean_terms.l_i += terms.l_i;

    // d loss / d outputs; sign(0) = 0 is the subgradient choice.
    Eigen::ArrayXd sign_i = r_i.sign();
    Tensor dJ = J, dB = B, dT = T;
    dJ.data = (w.c_j * r_j.sign() + w.c_i * sign_i * T.data) / n;
    dB.data = (w.c_i * sign_i * (1.0 - T.data)) / n;
    dT.data = (w.c_i * sign_i * (J.data - B.data)) / n;
    if (ex.has_tb) {
      dB.data += (w.c_b / n) * r_b.sign();
      dT.data += (w.c_t / n) * r_t.sign();
    }

    net_backward(plan, p.theta[kHeadJ], kHeadJ, trJ, dJ, res.grad[kHeadJ]);
    net_backward(plan, p.theta[kHeadB], kHeadB, trB, dB, res.grad[kHeadB]);
    net_backward(plan, p.theta[kHeadT], kHeadT, trT, dT, res.grad[kHeadT]);
  }

  const double inv = 1.0 / double(batch.size());
  res.loss *= inv;
  res.mean_terms.l_j *= inv;
  res.mean_terms.l_b *= inv;
  res.mean_terms.l_t *= inv;
  res.mean_terms.l_i *= inv;
  for (int h = 0; h < 3; ++h) res.grad[std::size_t(h)] *= inv;
  return res;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}
std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p) {
  std::string buf;
  buf += "AQCK";
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, std::uint32_t(p.arch.num_enc_blocks));
  put_u32(buf, std::uint32_t(p.arch.num_dec_blocks));
  put_u32(buf, std::uint32_t(p.arch.base_channels));
  put_u32(buf, std::uint32_t(p.arch.max_channels));
  put_u32(buf, p.arch.use_skip ? 1 : 0);
  put_u32(buf, p.arch.use_shortcut ? 1 : 0);
  put_u32(buf, std::uint32_t(p.arch.patch_size));
  put_u64(buf, p.init_seed);
  for (const auto& theta : p.theta) {
    put_u64(buf, std::uint64_t(theta.size()));
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      float f = float(theta[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(buf, bits);
    }
  }
  std::uint32_t crc =
      std::uint32_t(::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw std::runtime_error("short write: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 48 || std::memcmp(bytes.data(), "AQCK", 4) != 0)
    throw std::runtime_error(path.string() + ": not an AQCK checkpoint");
  std::uint32_t stored_crc = get_u32(bytes.data() + bytes.size() - 4);
  std::uint32_t crc =
      std::uint32_t(::crc32(0, bytes.data(), uInt(bytes.size() - 4)));
  if (crc != stored_crc) throw std::runtime_error(path.string() + ": checkpoint CRC mismatch");

  const unsigned char* p = bytes.data() + 4;
  std::uint32_t version = get_u32(p);
  p += 4;
  if (version != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
  ModelParams mp;
  mp.arch.num_enc_blocks = int(get_u32(p)); p += 4;
  mp.arch.num_dec_blocks = int(get_u32(p)); p += 4;
  mp.arch.base_channels = int(get_u32(p)); p += 4;
  mp.arch.max_channels = int(get_u32(p)); p += 4;
  mp.arch.use_skip = get_u32(p) != 0; p += 4;
  mp.arch.use_shortcut = get_u32(p) != 0; p += 4;
  mp.arch.patch_size = int(get_u32(p)); p += 4;
  mp.init_seed = get_u64(p); p += 8;

  const unsigned char* end = bytes.data() + bytes.size() - 4;
  const std::size_t expect = param_count(mp.arch);
  for (int h = 0; h < 3; ++h) {
    if (p + 8 > end) throw std::runtime_error(path.string() + ": truncated checkpoint");
    std::uint64_t count = get_u64(p);
    p += 8;
    if (count != expect)
      throw std::runtime_error(path.string() + ": parameter count mismatch for head " +
                               std::to_string(h));
    if (p + 4 * count > end) throw std::runtime_error(path.string() + ": truncated checkpoint");
    Eigen::VectorXd theta(static_cast<Eigen::Index>(count));
    for (std::uint64_t i = 0; i < count; ++i, p += 4) {
      std::uint32_t bits = get_u32(p);
      float f;
      std::memcpy(&f, &bits, 4);
      theta[Eigen::Index(i)] = double(f);
    }
    mp.theta[std::size_t(h)] = std::move(theta);
  }
  if (p != end) throw std::runtime_error(path.string() + ": trailing bytes in checkpoint");
  return mp;
}

}  // namespace aquaforge
