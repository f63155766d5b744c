#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "parsnet/stream.hpp"

namespace parsnet {

// Reads a CSV with a header row. The column named "label" holds non-negative
// integer classes; every other column is a numeric feature. Rows are split
// into batches of batch_size in file order; the last batch may be short.
// All labels are marked visible.
std::vector<Batch> load_csv(const std::string& path, std::size_t batch_size);

// Number of classes implied by the largest label (at least 2).
std::size_t infer_num_classes(const std::vector<Batch>& batches);

std::vector<Batch> split_batches(const Eigen::MatrixXd& features, const std::vector<std::size_t>& labels,
                                 std::size_t batch_size);

struct SeaOptions {
  std::size_t batch_size = 1000;
  double label_noise = 0.0;
};

// Three features uniform in [0, 10]. Class 1 iff f1 + f2 <= theta, where theta
// steps through 8, 9, 7, 9.5 at the quartile boundaries of the stream.
std::vector<Batch> gen_sea(std::size_t n, std::uint64_t seed, const SeaOptions& options = {});

double sea_threshold(std::size_t index, std::size_t n);

struct HyperplaneOptions {
  std::size_t batch_size = 1000;
  // Change of each weight per sample; the direction of each weight is drawn once.
  double drift = 1e-4;
};

// Four features uniform in [0, 1]. Class 1 iff sum_j w_j f_j >= sum_j w_j / 2,
// with the weights drifting linearly from a random start.
std::vector<Batch> gen_hyperplane(std::size_t n, std::uint64_t seed, const HyperplaneOptions& options = {});

} // namespace parsnet
