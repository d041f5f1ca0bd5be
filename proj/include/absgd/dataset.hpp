#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "absgd/matrix.hpp"
#include "absgd/rng.hpp"

namespace absgd {

struct Dataset {
  Matrix features;               // n x d
  std::vector<int> labels;       // each in [0, C)
  std::vector<long> class_counts;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  std::size_t num_classes() const { return class_counts.size(); }
};

enum class ImbalanceKind { LongTailed, Step };

struct ImbalanceSpec {
  ImbalanceKind kind = ImbalanceKind::LongTailed;
  double rho = 1.0;   // most-frequent / least-frequent class size
  long n0 = 0;        // most-frequent class size
  int num_classes = 2;
};

struct NoiseSpec {
  double flip_probability = 0.0;  // in [0, 1)
};

// Recompute class_counts from labels; throws on out-of-range labels.
std::vector<long> tally_labels(const std::vector<int>& labels, int num_classes);

// Exponentially decayed per-class counts: counts[i] = floor(n0 * rho^(-i/(C-1))),
// with counts[0] = n0 and counts[C-1] = round(n0/rho) pinned exactly.
std::vector<long> lt_counts(int num_classes, long n0, double rho);

// Two-level counts: first ceil(C/2) classes get n_major, the rest floor(n_major/rho).
std::vector<long> st_counts(int num_classes, long n_major, double rho);

// Isotropic 2-D Gaussian per class.
Dataset gaussian_mixture_2d(const std::vector<long>& counts,
                            const std::vector<std::array<double, 2>>& means,
                            const std::vector<double>& stddevs, Rng& rng);

// General d-dimensional blobs; class means are drawn once from the rng with
// stddev class_sep, then counts[k] points are sampled around mean k.
Dataset gaussian_blobs(const std::vector<long>& counts, std::size_t dim,
                       double class_sep, double stddev, Rng& rng);

// Sample without replacement down to target_counts per class.
Dataset subsample_to_counts(const Dataset& dataset, const std::vector<long>& target_counts,
                            Rng& rng);

// Symmetric uniform label flip; returns the new dataset and the flipped indices.
std::pair<Dataset, std::vector<std::size_t>> inject_label_noise(const Dataset& dataset,
                                                                const NoiseSpec& spec,
                                                                Rng& rng);

// CSV layout: header "f0,...,f{d-1},label", one sample per line.
void write_csv(const std::string& path, const Dataset& dataset);
Dataset read_csv(const std::string& path);

}  // namespace absgd
