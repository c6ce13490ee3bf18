#include "ilic/metrics.h"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ilic/tensor.h"

namespace ilic {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(std::string(what) + ": image extents differ (" + std::to_string(a.height) + "x" +
                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                std::to_string(b.width) + ")");
  }
  if (a.data.empty()) throw Error(std::string(what) + ": empty image");
}

constexpr std::array<double, 5> kScaleWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double s = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    s += g[std::size_t(i)] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
  }
  for (auto& v : g) v /= s;
  return g;
}

// Separable valid-mode filtering.
Plane filter(const Plane& p) {
  static const auto g = gaussian_window();
  Plane tmp{p.h, p.w - kWindow + 1, {}};
  tmp.v.assign(tmp.h * tmp.w, 0.0);
  for (std::size_t y = 0; y < tmp.h; ++y)
    for (std::size_t x = 0; x < tmp.w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[std::size_t(k)] * p.at(y, x + std::size_t(k));
      tmp.v[y * tmp.w + x] = acc;
    }
  Plane out{p.h - kWindow + 1, tmp.w, {}};
  out.v.assign(out.h * out.w, 0.0);
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[std::size_t(k)] * tmp.at(y + std::size_t(k), x);
      out.v[y * out.w + x] = acc;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane o{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) o.v[i] = a.v[i] * b.v[i];
  return o;
}

// 2x2 average; odd edges average the pixels present.
Plane downsample(const Plane& p) {
  Plane o{(p.h + 1) / 2, (p.w + 1) / 2, {}};
  o.v.assign(o.h * o.w, 0.0);
  for (std::size_t y = 0; y < o.h; ++y)
    for (std::size_t x = 0; x < o.w; ++x) {
      double s = 0.0;
      int n = 0;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const std::size_t yy = 2 * y + dy, xx = 2 * x + dx;
          if (yy < p.h && xx < p.w) {
            s += p.at(yy, xx);
            ++n;
          }
        }
      o.v[y * o.w + x] = s / n;
    }
  return o;
}

// Mean SSIM and mean contrast-structure term for one scale.
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b) {
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Plane ma = filter(a), mb = filter(b);
  const Plane saa = filter(product(a, a)), sbb = filter(product(b, b)), sab = filter(product(a, b));
  double ssim = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < ma.v.size(); ++i) {
    const double mua = ma.v[i], mub = mb.v[i];
    const double va = saa.v[i] - mua * mua, vb = sbb.v[i] - mub * mub, cov = sab.v[i] - mua * mub;
    const double csi = (2.0 * cov + c2) / (va + vb + c2);
    cs += csi;
    ssim += (2.0 * mua * mub + c1) / (mua * mua + mub * mub + c1) * csi;
  }
  const double n = double(ma.v.size());
  return {ssim / n, cs / n};
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / double(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

MsSsim ms_ssim(const Image& a, const Image& b) {
  check_same(a, b, "ms_ssim");
  std::size_t side = std::min(a.height, a.width);
  if (side < std::size_t(kWindow)) {
    throw Error("ms_ssim: images must be at least 11 pixels on each side");
  }
  int scales = 1;
  while (scales < 5 && (side + 1) / 2 >= std::size_t(kWindow)) {
    side = (side + 1) / 2;
    ++scales;
  }
  double wsum = 0.0;
  for (int s = 0; s < scales; ++s) wsum += kScaleWeights[std::size_t(s)];

  MsSsim out;
  out.scales = scales;
  for (std::size_t c = 0; c < 3; ++c) {
    Plane pa{a.height, a.width, {}}, pb{a.height, a.width, {}};
    const std::size_t n = a.pixels();
    pa.v.assign(a.data.begin() + long(c * n), a.data.begin() + long((c + 1) * n));
    pb.v.assign(b.data.begin() + long(c * n), b.data.begin() + long((c + 1) * n));
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
      const auto [ssim, cs] = ssim_terms(pa, pb);
      const double term = s == scales - 1 ? ssim : cs;
      value *= std::pow(std::max(term, 0.0), kScaleWeights[std::size_t(s)] / wsum);
      if (s + 1 < scales) {
        pa = downsample(pa);
        pb = downsample(pb);
      }
    }
    out.value += value / 3.0;
  }
  return out;
}

namespace {

// Least-squares cubic fit of log10(rate) against quality, in a normalised
// quality variable u = (q - shift) / span.
struct Cubic {
  Eigen::Vector4d c;
  double shift = 0.0, span = 1.0;
  // Integral of the fit over quality in [lo, hi].
  double integral(double lo, double hi) const {
    auto prim = [&](double q) {
      const double u = (q - shift) / span;
      return span * (c[0] * u + c[1] * u * u / 2 + c[2] * u * u * u / 3 + c[3] * u * u * u * u / 4);
    };
    return prim(hi) - prim(lo);
  }
};

Cubic fit(const std::vector<RdPoint>& pts, double shift, double span) {
  Eigen::MatrixXd A(long(pts.size()), 4);
  Eigen::VectorXd y(long(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].bpp > 0.0) || !std::isfinite(pts[i].psnr)) {
      throw Error("bd_rate: points need positive rate and finite quality");
    }
    const double u = (pts[i].psnr - shift) / span;
    A(long(i), 0) = 1.0;
    A(long(i), 1) = u;
    A(long(i), 2) = u * u;
    A(long(i), 3) = u * u * u;
    y[long(i)] = std::log10(pts[i].bpp);
  }
  Cubic c;
  c.c = A.colPivHouseholderQr().solve(y);
  c.shift = shift;
  c.span = span;
  return c;
}

}  // namespace

double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test) {
  if (anchor.size() < 4 || test.size() < 4) throw Error("bd_rate: need at least 4 points per curve");
  auto range = [](const std::vector<RdPoint>& p) {
    auto [mn, mx] = std::minmax_element(p.begin(), p.end(), [](const RdPoint& a, const RdPoint& b) {
      return a.psnr < b.psnr;
    });
    return std::pair{mn->psnr, mx->psnr};
  };
  const auto [alo, ahi] = range(anchor);
  const auto [tlo, thi] = range(test);
  const double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
  if (!(hi > lo)) throw Error("bd_rate: quality ranges do not overlap");
  const double shift = 0.5 * (lo + hi), span = std::max(0.5 * (hi - lo), 1e-9);
  const Cubic fa = fit(anchor, shift, span), ft = fit(test, shift, span);
  const double avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

std::vector<RdPoint> read_rd_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw Error(path + ": empty CSV");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      out.push_back(cell);
    }
    return out;
  };
  const auto header = split(line);
  long ib = -1, ip = -1, im = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "bpp") ib = long(i);
    if (header[i] == "psnr") ip = long(i);
    if (header[i] == "ms_ssim") im = long(i);
  }
  if (ib < 0 || ip < 0) throw Error(path + ": header must contain bpp and psnr columns");
  std::vector<RdPoint> pts;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    auto num = [&](long i) {
      if (std::size_t(i) >= cells.size()) {
        throw Error(path + ":" + std::to_string(lineno) + ": missing column");
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[std::size_t(i)], &used);
        if (used != cells[std::size_t(i)].size()) throw std::invalid_argument("");
        return v;
      } catch (const std::exception&) {
        throw Error(path + ":" + std::to_string(lineno) + ": not a number: '" +
                    cells[std::size_t(i)] + "'");
      }
    };
    RdPoint p;
    p.bpp = num(ib);
    p.psnr = num(ip);
    if (im >= 0) p.ms_ssim = num(im);
    pts.push_back(p);
  }
  return pts;
}

}  // namespace ilic
