#include "aquaforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace aquaforge {

double mse(const ImageRgb& a, const ImageRgb& b) {
  require_same_shape(a, b, "mse");
  double acc = 0;
  for (int c = 0; c < 3; ++c) acc += (a.ch[c] - b.ch[c]).square().sum();
  return acc / double(a.size());
}

double psnr(const ImageRgb& a, const ImageRgb& b) {
  double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

double ssim(const ImageRgb& a, const ImageRgb& b) {
  require_same_shape(a, b, "ssim");
  const Index H = a.rows(), W = a.cols();
  const int w = kSsimWindow;
  if (H < w || W < w)
    throw std::invalid_argument("ssim: image smaller than the 8x8 window");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const double n = double(w) * double(w);
  double channel_sum = 0;
  for (int c = 0; c < 3; ++c) {
    const Plane& x = a.ch[c];
    const Plane& y = b.ch[c];
    double acc = 0;
    std::size_t windows = 0;
    for (Index i = 0; i + w <= H; ++i)
      for (Index j = 0; j + w <= W; ++j) {
        auto bx = x.block(i, j, w, w);
        auto by = y.block(i, j, w, w);
        double mx = bx.sum() / n, my = by.sum() / n;
        double vx = (bx - mx).square().sum() / n;
        double vy = (by - my).square().sum() / n;
        double cov = ((bx - mx) * (by - my)).sum() / n;
        acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    channel_sum += acc / double(windows);
  }
  return channel_sum / 3.0;
}

double uciqe_score(double sigma_c, double con_l, double mu_s) {
  return kUciqeC1 * sigma_c + kUciqeC2 * con_l + kUciqeC3 * mu_s;
}

double uiqm_score(double uicm, double uism, double uiconm) {
  return kUiqmC1 * uicm + kUiqmC2 * uism + kUiqmC3 * uiconm;
}

namespace {

struct Lab {
  double l, a, b;
};

double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

Lab rgb_to_lab(double r, double g, double b) {
  double rl = srgb_to_linear(r), gl = srgb_to_linear(g), bl = srgb_to_linear(b);
  double X = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  double Y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  double Z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  auto f = [](double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  double fx = f(X / 0.95047), fy = f(Y / 1.0), fz = f(Z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

// Asymmetric alpha-trimmed mean (alpha = 0.1 off each end) and the second
// moment about it taken over all values, per the metric's source definition.
void trimmed_stats(std::vector<double>& v, double& mu, double& var) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  std::size_t t = std::size_t(std::floor(0.1 * double(n)));
  std::size_t kept = n - 2 * t;
  mu = std::accumulate(v.begin() + std::ptrdiff_t(t), v.end() - std::ptrdiff_t(t), 0.0) /
       double(kept);
  var = 0;
  for (double x : v) var += (x - mu) * (x - mu);
  var /= double(n);
}

// EME over fixed 8x8 blocks: (2/K) * sum ln(max/min). Blocks are skipped
// when their minimum falls below the smallest nonzero Sobel-weighted
// product an 8-bit pipeline can produce (unit gradient times unit level);
// without that floor, float minima near zero explode the log ratio.
constexpr double kEmeFloor = 1.0 / (255.0 * 255.0);

double eme8(const Plane& p) {
  const int w = 8;
  Index by = p.rows() / w, bx = p.cols() / w;
  if (by == 0 || bx == 0) return 0;
  double acc = 0;
  for (Index i = 0; i < by; ++i)
    for (Index j = 0; j < bx; ++j) {
      auto blk = p.block(i * w, j * w, w, w);
      double mx = blk.maxCoeff(), mn = blk.minCoeff();
      if (mn >= kEmeFloor) acc += std::log(mx / mn);
    }
  return 2.0 * acc / double(by * bx);
}

// logAMEE over fixed 8x8 blocks: -(1/K) * sum r*ln(r), r = (max-min)/(max+min).
double log_amee8(const Plane& p) {
  const int w = 8;
  Index by = p.rows() / w, bx = p.cols() / w;
  if (by == 0 || bx == 0) return 0;
  double acc = 0;
  for (Index i = 0; i < by; ++i)
    for (Index j = 0; j < bx; ++j) {
      auto blk = p.block(i * w, j * w, w, w);
      double mx = blk.maxCoeff(), mn = blk.minCoeff();
      double top = mx - mn, bot = mx + mn;
      if (top > 0 && bot > 0) {
        double r = top / bot;
        if (r > 0 && r < 1) acc += r * std::log(r);
        // r == 1 contributes ln(1) = 0
      }
    }
  return -acc / double(by * bx);
}

Plane sobel_magnitude(const Plane& p) {
  const Index H = p.rows(), W = p.cols();
  Plane out(H, W);
  auto px = [&](Index y, Index x) {
    // replicate border
    y = std::clamp<Index>(y, 0, H - 1);
    x = std::clamp<Index>(x, 0, W - 1);
    return p(y, x);
  };
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      double gx = -px(y - 1, x - 1) - 2 * px(y, x - 1) - px(y + 1, x - 1) +
                  px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1);
      double gy = -px(y - 1, x - 1) - 2 * px(y - 1, x) - px(y - 1, x + 1) +
                  px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1);
      out(y, x) = std::hypot(gx, gy);
    }
  return out;
}

}  // namespace

double srgb_max_chroma() {
  // The sRGB gamut's chroma maximum sits at the blue primary.
  static const double value = [] {
    Lab blue = rgb_to_lab(0.0, 0.0, 1.0);
    return std::hypot(blue.a, blue.b);
  }();
  return value;
}

UciqeReport uciqe(const ImageRgb& img) {
  require_finite(img, "uciqe");
  const Index H = img.rows(), W = img.cols();
  const std::size_t n = std::size_t(H) * std::size_t(W);
  std::vector<double> lum(n), chroma(n);
  double sat_sum = 0;
  std::size_t i = 0;
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x, ++i) {
      double r = img(kRed, y, x), g = img(kGreen, y, x), b = img(kBlue, y, x);
      Lab lab = rgb_to_lab(r, g, b);
      lum[i] = lab.l;
      chroma[i] = std::hypot(lab.a, lab.b);
      double mx = std::max({r, g, b});
      double mn = std::min({r, g, b});
      sat_sum += mx > 0 ? (mx - mn) / mx : 0.0;
    }

  double cmean = std::accumulate(chroma.begin(), chroma.end(), 0.0) / double(n);
  double cvar = 0;
  for (double c : chroma) cvar += (c - cmean) * (c - cmean);
  cvar /= double(n);

  std::sort(lum.begin(), lum.end());
  std::size_t tail = std::max<std::size_t>(1, std::size_t(std::llround(0.01 * double(n))));
  double bottom = std::accumulate(lum.begin(), lum.begin() + std::ptrdiff_t(tail), 0.0) /
                  double(tail);
  double top = std::accumulate(lum.end() - std::ptrdiff_t(tail), lum.end(), 0.0) / double(tail);

  UciqeReport rep;
  rep.sigma_c = std::sqrt(cvar) / srgb_max_chroma();
  rep.con_l = (top - bottom) / 100.0;
  rep.mu_s = sat_sum / double(n);
  rep.score = uciqe_score(rep.sigma_c, rep.con_l, rep.mu_s);
  return rep;
}

UiqmReport uiqm(const ImageRgb& img) {
  require_finite(img, "uiqm");
  const Index H = img.rows(), W = img.cols();
  const std::size_t n = std::size_t(H) * std::size_t(W);

  // Opponent channels on the 0..255 scale, where the published UIQM
  // coefficients were calibrated.
  constexpr double kOpponentScale = 255.0;
  std::vector<double> rg(n), yb(n);
  std::size_t i = 0;
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x, ++i) {
      double r = img(kRed, y, x), g = img(kGreen, y, x), b = img(kBlue, y, x);
      rg[i] = kOpponentScale * (r - g);
      yb[i] = kOpponentScale * (0.5 * (r + g) - b);
    }
  double mu_rg, var_rg, mu_yb, var_yb;
  trimmed_stats(rg, mu_rg, var_rg);
  trimmed_stats(yb, mu_yb, var_yb);

  UiqmReport rep;
  rep.uicm = -0.0268 * std::hypot(mu_rg, mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);

  // Sharpness: Sobel-weighted EME per channel, luma-weighted combination.
  constexpr double lw[3] = {0.299, 0.587, 0.114};
  rep.uism = 0;
  for (int c = 0; c < 3; ++c) {
    Plane weighted = sobel_magnitude(img.ch[c]) * img.ch[c];
    rep.uism += lw[c] * eme8(weighted);
  }

  Plane gray = lw[0] * img.ch[kRed] + lw[1] * img.ch[kGreen] + lw[2] * img.ch[kBlue];
  rep.uiconm = log_amee8(gray);

  rep.score = uiqm_score(rep.uicm, rep.uism, rep.uiconm);
  return rep;
}

}  // namespace aquaforge
