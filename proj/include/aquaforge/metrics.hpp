#pragma once

#include "aquaforge/types.hpp"

namespace aquaforge {

// Mean squared difference over all pixels and channels, on the [0,1] scale.
double mse(const ImageRgb& a, const ImageRgb& b);

// 10*log10(1/mse) with peak 1.0; +infinity when mse == 0.
double psnr(const ImageRgb& a, const ImageRgb& b);

// Single-scale SSIM: 8x8 uniform sliding window (stride 1), C1 = 0.01^2 and
// C2 = 0.03^2 on the [0,1] range, averaged over windows and channels.
// Requires min(height, width) >= 8.
double ssim(const ImageRgb& a, const ImageRgb& b);

inline constexpr int kSsimWindow = 8;

// UCIQE = 0.4680*sigma_c + 0.2745*con_l + 0.2575*mu_s.
inline constexpr double kUciqeC1 = 0.4680;
inline constexpr double kUciqeC2 = 0.2745;
inline constexpr double kUciqeC3 = 0.2575;

// UIQM = 0.0282*UICM + 0.2953*UISM + 3.5753*UIConM.
inline constexpr double kUiqmC1 = 0.0282;
inline constexpr double kUiqmC2 = 0.2953;
inline constexpr double kUiqmC3 = 3.5753;

struct UciqeReport {
  double sigma_c = 0;  // CIELab chroma std, normalized by the sRGB max chroma
  double con_l = 0;    // (mean top 1% L - mean bottom 1% L) / 100
  double mu_s = 0;     // mean HSV saturation
  double score = 0;
};

struct UiqmReport {
  double uicm = 0;    // alpha-trimmed opponent-channel colorfulness
  double uism = 0;    // Sobel-weighted EME sharpness over 8x8 blocks
  double uiconm = 0;  // logAMEE contrast over 8x8 blocks
  double score = 0;
};

// The linear functionals alone; the metric extractors call these, and tests
// inject components through them directly.
double uciqe_score(double sigma_c, double con_l, double mu_s);
double uiqm_score(double uicm, double uism, double uiconm);

UciqeReport uciqe(const ImageRgb& img);
UiqmReport uiqm(const ImageRgb& img);

// Max CIELab chroma over the sRGB gamut (attained at the blue primary);
// normalizes sigma_c. Computed from the same Lab conversion the metric uses.
double srgb_max_chroma();

}  // namespace aquaforge
