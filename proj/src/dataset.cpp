#include "absgd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "absgd/errors.hpp"

namespace absgd {

std::vector<long> tally_labels(const std::vector<int>& labels, int num_classes) {
  std::vector<long> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes)
      throw ValidationError("label " + std::to_string(y) + " outside 0.." +
                            std::to_string(num_classes - 1));
    ++counts[y];
  }
  return counts;
}

std::vector<long> lt_counts(int num_classes, long n0, double rho) {
  if (num_classes < 2) throw ValidationError("lt_counts: need at least 2 classes");
  if (rho < 1.0) throw ValidationError("lt_counts: rho must be >= 1");
  if (static_cast<double>(n0) < rho)
    throw ValidationError("lt_counts: n0 < rho leaves the rarest class empty");
  std::vector<long> counts(num_classes);
  counts.front() = n0;
  counts.back() = std::lround(static_cast<double>(n0) / rho);
  for (int i = 1; i + 1 < num_classes; ++i) {
    const double e = -static_cast<double>(i) / (num_classes - 1);
    counts[i] = static_cast<long>(std::floor(static_cast<double>(n0) * std::pow(rho, e)));
  }
  for (int i = 1; i < num_classes; ++i) counts[i] = std::min(counts[i], counts[i - 1]);
  return counts;
}

std::vector<long> st_counts(int num_classes, long n_major, double rho) {
  if (num_classes < 2) throw ValidationError("st_counts: need at least 2 classes");
  if (rho < 1.0) throw ValidationError("st_counts: rho must be >= 1");
  if (static_cast<double>(n_major) < rho)
    throw ValidationError("st_counts: n_major < rho leaves minority classes empty");
  const int majors = (num_classes + 1) / 2;
  const long minor = static_cast<long>(std::floor(static_cast<double>(n_major) / rho));
  std::vector<long> counts(num_classes, minor);
  std::fill(counts.begin(), counts.begin() + majors, n_major);
  return counts;
}

Dataset gaussian_mixture_2d(const std::vector<long>& counts,
                            const std::vector<std::array<double, 2>>& means,
                            const std::vector<double>& stddevs, Rng& rng) {
  if (counts.size() != means.size() || counts.size() != stddevs.size())
    throw ValidationError("gaussian_mixture_2d: counts/means/stddevs size mismatch");
  long n = 0;
  for (long c : counts) {
    if (c < 1) throw ValidationError("gaussian_mixture_2d: counts must be >= 1");
    n += c;
  }
  Dataset ds;
  ds.features = Matrix(static_cast<std::size_t>(n), 2);
  ds.labels.reserve(n);
  std::size_t row = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (long j = 0; j < counts[k]; ++j, ++row) {
      ds.features(row, 0) = means[k][0] + stddevs[k] * rng.next_gaussian();
      ds.features(row, 1) = means[k][1] + stddevs[k] * rng.next_gaussian();
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  ds.class_counts.assign(counts.begin(), counts.end());
  return ds;
}

Dataset gaussian_blobs(const std::vector<long>& counts, std::size_t dim, double class_sep,
                       double stddev, Rng& rng) {
  const std::size_t num_classes = counts.size();
  Matrix means(num_classes, dim);
  for (std::size_t k = 0; k < num_classes; ++k)
    for (std::size_t j = 0; j < dim; ++j) means(k, j) = class_sep * rng.next_gaussian();
  long n = 0;
  for (long c : counts) {
    if (c < 1) throw ValidationError("gaussian_blobs: counts must be >= 1");
    n += c;
  }
  Dataset ds;
  ds.features = Matrix(static_cast<std::size_t>(n), dim);
  ds.labels.reserve(n);
  std::size_t row = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (long j = 0; j < counts[k]; ++j, ++row) {
      for (std::size_t c = 0; c < dim; ++c)
        ds.features(row, c) = means(k, c) + stddev * rng.next_gaussian();
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  ds.class_counts.assign(counts.begin(), counts.end());
  return ds;
}

Dataset subsample_to_counts(const Dataset& dataset, const std::vector<long>& target_counts,
                            Rng& rng) {
  if (target_counts.size() != dataset.class_counts.size())
    throw ValidationError("subsample_to_counts: class count size mismatch");
  for (std::size_t k = 0; k < target_counts.size(); ++k)
    if (target_counts[k] > dataset.class_counts[k])
      throw ValidationError("subsample_to_counts: class " + std::to_string(k) +
                            " has only " + std::to_string(dataset.class_counts[k]) +
                            " samples, requested " + std::to_string(target_counts[k]));

  std::vector<std::vector<std::size_t>> by_class(target_counts.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_class[dataset.labels[i]].push_back(i);

  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    // partial Fisher-Yates, keeps only target_counts[k] of the class
    for (long j = 0; j < target_counts[k]; ++j) {
      const std::size_t pick = j + rng.next_index(idx.size() - j);
      std::swap(idx[j], idx[pick]);
      picked.push_back(idx[j]);
    }
  }

  Dataset out;
  out.features = Matrix(picked.size(), dataset.dim());
  out.labels.reserve(picked.size());
  for (std::size_t r = 0; r < picked.size(); ++r) {
    const auto src = dataset.features.row(picked[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(dataset.labels[picked[r]]);
  }
  out.class_counts.assign(target_counts.begin(), target_counts.end());
  return out;
}

std::pair<Dataset, std::vector<std::size_t>> inject_label_noise(const Dataset& dataset,
                                                                const NoiseSpec& spec,
                                                                Rng& rng) {
  if (spec.flip_probability < 0.0 || spec.flip_probability >= 1.0)
    throw ValidationError("inject_label_noise: flip_probability must be in [0, 1)");
  Dataset out = dataset;
  std::vector<std::size_t> flipped;
  const int num_classes = static_cast<int>(dataset.num_classes());
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (rng.next_double() < spec.flip_probability) {
      const int offset = 1 + static_cast<int>(rng.next_index(num_classes - 1));
      out.labels[i] = (out.labels[i] + offset) % num_classes;
      flipped.push_back(i);
    }
  }
  out.class_counts = tally_labels(out.labels, num_classes);
  return {std::move(out), std::move(flipped)};
}

void write_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.precision(17);
  for (std::size_t j = 0; j < dataset.dim(); ++j) f << 'f' << j << ',';
  f << "label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset.dim(); ++j) f << dataset.features(i, j) << ',';
    f << dataset.labels[i] << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

Dataset read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError("empty file: " + path, 1);
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));

  Dataset ds;
  std::vector<double> values;
  std::vector<int> labels;
  long line_no = 1;
  int max_label = -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    std::vector<double> feats(dim);
    while (std::getline(ss, cell, ',')) {
      const char* b = cell.data();
      const char* e = b + cell.size();
      if (col < dim) {
        double v;
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e)
          throw ParseError("non-numeric feature cell '" + cell + "'", line_no);
        feats[col] = v;
      } else if (col == dim) {
        int y;
        auto [p, ec] = std::from_chars(b, e, y);
        if (ec != std::errc() || p != e)
          throw ParseError("bad label cell '" + cell + "'", line_no);
        labels.push_back(y);
        max_label = std::max(max_label, y);
      }
      ++col;
    }
    if (col != dim + 1)
      throw ParseError("expected " + std::to_string(dim + 1) + " columns, got " +
                           std::to_string(col),
                       line_no);
    values.insert(values.end(), feats.begin(), feats.end());
  }
  const std::size_t n = labels.size();
  ds.features = Matrix(n, dim);
  std::copy(values.begin(), values.end(), ds.features.data().begin());
  ds.labels = std::move(labels);
  ds.class_counts = tally_labels(ds.labels, max_label + 1);
  return ds;
}

}  // namespace absgd
