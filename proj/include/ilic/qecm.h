#ifndef ILIC_QECM_H_
#define ILIC_QECM_H_

#include <functional>
#include <vector>

#include "ilic/nn.h"

namespace ilic {

// Fourier approximation of the period-1 sawtooth y - round(y):
// s(y) = (1/pi) sum_{n=1..N} (-1)^(n+1)/n sin(2 pi n y).
double sawtooth_series(double y, int harmonics);
double sawtooth_series_derivative(double y, int harmonics);
// The exact sawtooth y - round(y) (half away from zero).
double sawtooth_exact(double y);

Tensor sawtooth_fourier(const Tensor& y, int harmonics);

// Encoder side: y - s(y).
Tensor qc_forward(const Tensor& y, int harmonics);
// Decoder side during training: t + s(t).
Tensor iqc_train(const Tensor& t, int harmonics);

struct LaplaceParams {
  double mu = 0.0;
  double b = 0.15;
};

constexpr double kLaplaceScaleMin = 1e-6;

// Throws unless the parameters are finite, b >= 1e-6 and the mass on
// (-0.5, 0.5) is at least 1e-6.
void validate(const LaplaceParams& lp);
double laplace_sample(const LaplaceParams& lp, Rng& rng);
// Rejection sampling restricted to (-0.5, 0.5).
double truncated_laplace_sample(const LaplaceParams& lp, Rng& rng);

// Decoder side at test time: t + s(t + dn), dn truncated Laplace.
Tensor iqc_test(const Tensor& t, int harmonics, const LaplaceParams& lp, Rng& rng);

// Scalar forms with a pluggable sawtooth.
using SawtoothFn = std::function<double(double)>;
inline double qc_value(double y, const SawtoothFn& s) { return y - s(y); }
inline double iqc_value(double t, double noise, const SawtoothFn& s) { return t + s(t + noise); }

// Median and mean absolute deviation from it (scale floored at 1e-6).
LaplaceParams fit_laplace(std::vector<double> samples);

struct QuantErrorStats {
  std::size_t count = 0;
  std::vector<double> bin_edges;  // bins + 1 edges spanning [-0.5, 0.5]
  std::vector<double> histogram;  // normalised mass per bin
  LaplaceParams fit;
};

// Histogram and Laplace fit of v - round(v) over the given values.
QuantErrorStats quant_error_stats(const std::vector<double>& values, int bins = 50);

}  // namespace ilic

#endif  // ILIC_QECM_H_
