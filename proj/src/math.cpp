#include "absgd/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "absgd/errors.hpp"

namespace absgd {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw ValidationError("log_sum_exp: empty input");
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) {
    if (std::isnan(m)) throw NumericError("log_sum_exp: NaN input");
    return m;  // +inf dominates, -inf means all entries are -inf
  }
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

void stable_softmax(std::span<const double> values, std::span<double> out) {
  if (values.empty()) throw ValidationError("stable_softmax: empty input");
  const double m = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - m);
    sum += out[i];
  }
  for (std::size_t i = 0; i < values.size(); ++i) out[i] /= sum;
}

std::vector<double> stable_softmax(std::span<const double> values) {
  std::vector<double> out(values.size());
  stable_softmax(values, out);
  return out;
}

}  // namespace absgd
