#pragma once

#include <span>
#include <vector>

namespace absgd {

// log(sum_i exp(v_i)) with max-shifting; never overflows for finite input.
double log_sum_exp(std::span<const double> values);

// log(exp(a) + exp(b)).
double log_add_exp(double a, double b);

// Shift-invariant softmax; output sums to 1.
void stable_softmax(std::span<const double> values, std::span<double> out);
std::vector<double> stable_softmax(std::span<const double> values);

}  // namespace absgd
