#include "parsnet/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "parsnet/error.hpp"
#include "parsnet/rng.hpp"

namespace parsnet {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto first = field.find_first_not_of(" \t\r");
    const auto last = field.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? std::string() : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) {
    return false;
  }
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size() && std::isfinite(out);
}

bool parse_label(const std::string& s, std::size_t& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec == std::errc() && ptr == end) {
    return true;
  }
  double v = 0.0;
  if (parse_double(s, v) && v >= 0.0 && v == std::floor(v)) {
    out = static_cast<std::size_t>(v);
    return true;
  }
  return false;
}

} // namespace

std::vector<Batch> split_batches(const Eigen::MatrixXd& features, const std::vector<std::size_t>& labels,
                                 std::size_t batch_size) {
  if (batch_size == 0) {
    throw ConfigError("batch size must be positive");
  }
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ValidationError("split_batches: feature and label counts differ");
  }
  std::vector<Batch> batches;
  const std::size_t n = labels.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    Batch b;
    b.features = features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
    b.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                    labels.begin() + static_cast<std::ptrdiff_t>(start + len));
    b.visible.assign(len, 1);
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<Batch> load_csv(const std::string& path, std::size_t batch_size) {
  if (batch_size == 0) {
    throw ConfigError("batch size must be positive");
  }
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path + ": empty file");
  }
  const std::vector<std::string> header = split_fields(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) {
    throw ConfigError(path + ": no column named \"label\"");
  }
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t width = header.size();
  if (width < 2) {
    throw ConfigError(path + ": no feature columns");
  }

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != width) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                        " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < width; ++j) {
      if (j == label_col) {
        std::size_t y = 0;
        if (!parse_label(fields[j], y)) {
          throw FormatError(path + ":" + std::to_string(line_no) + ": bad label '" + fields[j] + "'");
        }
        labels.push_back(y);
      } else {
        double v = 0.0;
        if (!parse_double(fields[j], v)) {
          throw FormatError(path + ":" + std::to_string(line_no) + ": bad value '" + fields[j] +
                            "' in column " + header[j]);
        }
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) {
    throw FormatError(path + ": no data rows");
  }
  const auto rows = static_cast<Eigen::Index>(labels.size());
  const auto cols = static_cast<Eigen::Index>(width - 1);
  const Eigen::MatrixXd features =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(),
                                                                                              rows, cols);
  return split_batches(features, labels, batch_size);
}

std::size_t infer_num_classes(const std::vector<Batch>& batches) {
  std::size_t top = 1;
  for (const Batch& b : batches) {
    for (std::size_t y : b.labels) {
      top = std::max(top, y);
    }
  }
  return top + 1;
}

double sea_threshold(std::size_t index, std::size_t n) {
  static constexpr double kThresholds[] = {8.0, 9.0, 7.0, 9.5};
  const std::size_t quarter = std::min<std::size_t>(4 * index / std::max<std::size_t>(n, 1), 3);
  return kThresholds[quarter];
}

std::vector<Batch> gen_sea(std::size_t n, std::uint64_t seed, const SeaOptions& options) {
  if (n == 0) {
    throw ValidationError("gen_sea: n must be positive");
  }
  Rng rng = make_rng(seed, 101);
  std::uniform_real_distribution<double> feature(0.0, 10.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 3);
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < 3; ++j) {
      x(r, j) = feature(rng);
    }
    std::size_t label = x(r, 0) + x(r, 1) <= sea_threshold(i, n) ? 1 : 0;
    if (options.label_noise > 0.0 && coin(rng) < options.label_noise) {
      label = 1 - label;
    }
    y[i] = label;
  }
  return split_batches(x, y, options.batch_size);
}

std::vector<Batch> gen_hyperplane(std::size_t n, std::uint64_t seed, const HyperplaneOptions& options) {
  if (n == 0) {
    throw ValidationError("gen_hyperplane: n must be positive");
  }
  constexpr Eigen::Index kDim = 4;
  Rng rng = make_rng(seed, 102);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd w(kDim);
  Eigen::VectorXd direction(kDim);
  for (Eigen::Index j = 0; j < kDim; ++j) {
    w[j] = unit(rng);
    direction[j] = unit(rng) < 0.5 ? -1.0 : 1.0;
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), kDim);
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < kDim; ++j) {
      x(r, j) = unit(rng);
    }
    y[i] = x.row(r).dot(w) >= 0.5 * w.sum() ? 1 : 0;
    w += options.drift * direction;
  }
  return split_batches(x, y, options.batch_size);
}

} // namespace parsnet
