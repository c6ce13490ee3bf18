#ifndef ILIC_METRICS_H_
#define ILIC_METRICS_H_

#include <string>
#include <vector>

#include "ilic/image.h"

namespace ilic {

constexpr double kPsnrCap = 100.0;

double mse(const Image& a, const Image& b);
// 10 log10(1 / MSE) for [0, 1] images, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

struct MsSsim {
  double value = 0.0;
  int scales = 0;  // fewer than 5 for small images
};
// 11x11 Gaussian window (sigma 1.5), standard scale weights renormalised
// over the scales used, per channel then averaged.
MsSsim ms_ssim(const Image& a, const Image& b);

struct RdPoint {
  double bpp = 0.0;
  double psnr = 0.0;
  double ms_ssim = 0.0;
};

// Bjontegaard rate difference of `test` against `anchor` in percent, with
// PSNR as the quality axis.
double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test);

// CSV with a header naming at least bpp and psnr columns.
std::vector<RdPoint> read_rd_csv(const std::string& path);

}  // namespace ilic

#endif  // ILIC_METRICS_H_
