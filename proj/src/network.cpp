#include "parsnet/network.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <string>

#include "parsnet/detail/binary_io.hpp"
#include "parsnet/error.hpp"

namespace parsnet {

namespace {

constexpr std::string_view kMagic = "PNET1";
constexpr double kPreactivationClamp = 30.0;

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Eigen::MatrixXd xavier_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill order so that appended units draw the same sequence
  // regardless of the existing width.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = dist(rng);
    }
  }
  return m;
}

void check_finite(const Eigen::VectorXd& v, const char* layer) {
  if (!v.allFinite()) {
    throw NumericError(std::string("network: non-finite values in ") + layer);
  }
}

void check_dims(const NetworkParams& params, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != params.input_dim()) {
    throw ValidationError("network: expected " + std::to_string(params.input_dim()) +
                          " features, got " + std::to_string(x.size()));
  }
}

void check_target(const NetworkParams& params, const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != params.num_classes()) {
    throw ValidationError("network: target length does not match class count");
  }
}

template <typename Derived>
Derived remove_rows(const Derived& m, const std::vector<bool>& drop, Eigen::Index kept) {
  Derived out(kept, m.cols());
  Eigen::Index row = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!drop[static_cast<std::size_t>(r)]) {
      out.row(row++) = m.row(r);
    }
  }
  return out;
}

std::vector<bool> drop_mask(std::size_t rows, std::span<const std::size_t> indices) {
  std::vector<bool> drop(rows, false);
  for (std::size_t i : indices) {
    if (i >= rows) {
      throw ValidationError("prune: unit index " + std::to_string(i) + " out of range");
    }
    drop[i] = true;
  }
  return drop;
}

} // namespace

// ---------------------------------------------------------------- Theta

Theta Theta::zeros(std::size_t hidden, std::size_t input_dim, std::size_t num_classes) {
  const auto r = static_cast<Eigen::Index>(hidden);
  const auto u = static_cast<Eigen::Index>(input_dim);
  const auto c = static_cast<Eigen::Index>(num_classes);
  return Theta{Eigen::MatrixXd::Zero(r, u), Eigen::VectorXd::Zero(r), Eigen::MatrixXd::Zero(r, c),
               Eigen::VectorXd::Zero(c)};
}

Theta Theta::zeros_like(const Theta& other) {
  return zeros(static_cast<std::size_t>(other.w_in.rows()), static_cast<std::size_t>(other.w_in.cols()),
               static_cast<std::size_t>(other.w_out.cols()));
}

Theta Theta::of(const NetworkParams& params) {
  return Theta{params.w_in, params.b_in, params.w_out, params.c_out};
}

bool Theta::same_shape(const Theta& o) const {
  return w_in.rows() == o.w_in.rows() && w_in.cols() == o.w_in.cols() &&
         b_in.size() == o.b_in.size() && w_out.rows() == o.w_out.rows() &&
         w_out.cols() == o.w_out.cols() && c_out.size() == o.c_out.size();
}

bool Theta::same_shape(const NetworkParams& p) const {
  return w_in.rows() == p.w_in.rows() && w_in.cols() == p.w_in.cols() &&
         b_in.size() == p.b_in.size() && w_out.rows() == p.w_out.rows() &&
         w_out.cols() == p.w_out.cols() && c_out.size() == p.c_out.size();
}

std::size_t Theta::parameter_count() const {
  return static_cast<std::size_t>(w_in.size() + b_in.size() + w_out.size() + c_out.size());
}

double Theta::squared_norm() const {
  return w_in.squaredNorm() + b_in.squaredNorm() + w_out.squaredNorm() + c_out.squaredNorm();
}

double Theta::sum() const { return w_in.sum() + b_in.sum() + w_out.sum() + c_out.sum(); }

bool Theta::all_zero() const {
  return w_in.isZero(0.0) && b_in.isZero(0.0) && w_out.isZero(0.0) && c_out.isZero(0.0);
}

Theta& Theta::operator+=(const Theta& rhs) {
  w_in += rhs.w_in;
  b_in += rhs.b_in;
  w_out += rhs.w_out;
  c_out += rhs.c_out;
  return *this;
}

Theta& Theta::operator-=(const Theta& rhs) {
  w_in -= rhs.w_in;
  b_in -= rhs.b_in;
  w_out -= rhs.w_out;
  c_out -= rhs.c_out;
  return *this;
}

Theta& Theta::operator*=(double s) {
  w_in *= s;
  b_in *= s;
  w_out *= s;
  c_out *= s;
  return *this;
}

Theta Theta::cwise_product(const Theta& rhs) const {
  return Theta{w_in.cwiseProduct(rhs.w_in), b_in.cwiseProduct(rhs.b_in),
               w_out.cwiseProduct(rhs.w_out), c_out.cwiseProduct(rhs.c_out)};
}

Theta Theta::cwise_abs() const {
  return Theta{w_in.cwiseAbs(), b_in.cwiseAbs(), w_out.cwiseAbs(), c_out.cwiseAbs()};
}

Theta Theta::cwise_square() const {
  return Theta{w_in.array().square().matrix(), b_in.array().square().matrix(),
               w_out.array().square().matrix(), c_out.array().square().matrix()};
}

Theta Theta::cwise_quotient(const Theta& rhs, double eps) const {
  return Theta{(w_in.array() / (rhs.w_in.array() + eps)).matrix(),
               (b_in.array() / (rhs.b_in.array() + eps)).matrix(),
               (w_out.array() / (rhs.w_out.array() + eps)).matrix(),
               (c_out.array() / (rhs.c_out.array() + eps)).matrix()};
}

void Theta::append_units(const Theta& src, std::size_t first_row) {
  const auto start = static_cast<Eigen::Index>(first_row);
  const Eigen::Index added = src.w_in.rows() - start;
  if (added <= 0) {
    return;
  }
  const Eigen::Index old_rows = w_in.rows();
  w_in.conservativeResize(old_rows + added, Eigen::NoChange);
  w_in.bottomRows(added) = src.w_in.bottomRows(added);
  b_in.conservativeResize(old_rows + added);
  b_in.tail(added) = src.b_in.tail(added);
  w_out.conservativeResize(old_rows + added, Eigen::NoChange);
  w_out.bottomRows(added) = src.w_out.bottomRows(added);
}

void Theta::remove_units(std::span<const std::size_t> indices) {
  const auto drop = drop_mask(hidden(), indices);
  const auto kept = static_cast<Eigen::Index>(std::count(drop.begin(), drop.end(), false));
  w_in = remove_rows(w_in, drop, kept);
  b_in = remove_rows(Eigen::MatrixXd(b_in), drop, kept).col(0);
  w_out = remove_rows(w_out, drop, kept);
}

Theta operator+(Theta lhs, const Theta& rhs) { return lhs += rhs; }
Theta operator-(Theta lhs, const Theta& rhs) { return lhs -= rhs; }
Theta operator*(double s, Theta rhs) { return rhs *= s; }

// ---------------------------------------------------------------- params

bool NetworkParams::all_finite() const {
  return w_in.allFinite() && b_in.allFinite() && d.allFinite() && w_out.allFinite() &&
         c_out.allFinite();
}

void NetworkParams::save(std::ostream& out) const {
  using namespace detail;
  write_magic(out, kMagic);
  write_matrix(out, w_in);
  write_vector(out, b_in);
  write_vector(out, d);
  write_matrix(out, w_out);
  write_vector(out, c_out);
}

NetworkParams NetworkParams::load(std::istream& in) {
  using namespace detail;
  expect_magic(in, kMagic);
  NetworkParams p;
  p.w_in = read_matrix(in);
  p.b_in = read_vector(in);
  p.d = read_vector(in);
  p.w_out = read_matrix(in);
  p.c_out = read_vector(in);
  if (p.b_in.size() != p.w_in.rows() || p.d.size() != p.w_in.cols() ||
      p.w_out.rows() != p.w_in.rows() || p.c_out.size() != p.w_out.cols()) {
    throw FormatError("network snapshot: inconsistent shapes");
  }
  return p;
}

// ---------------------------------------------------------------- activations

double sigmoid(double z) {
  z = std::clamp(z, -kPreactivationClamp, kPreactivationClamp);
  return 1.0 / (1.0 + std::exp(-z));
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

NetworkParams init_network(std::size_t input_dim, std::size_t num_classes, std::size_t hidden,
                           Rng& rng) {
  if (input_dim < 1 || num_classes < 2 || hidden < 1) {
    throw ValidationError("init_network: requires u >= 1, C >= 2, R >= 1");
  }
  const auto r = static_cast<Eigen::Index>(hidden);
  const auto u = static_cast<Eigen::Index>(input_dim);
  const auto c = static_cast<Eigen::Index>(num_classes);
  NetworkParams p;
  p.w_in = xavier_matrix(r, u, xavier_bound(input_dim, hidden), rng);
  p.b_in = Eigen::VectorXd::Zero(r);
  p.d = Eigen::VectorXd::Zero(u);
  p.w_out = xavier_matrix(r, c, xavier_bound(hidden, num_classes), rng);
  p.c_out = Eigen::VectorXd::Zero(c);
  return p;
}

Eigen::VectorXd mask(const Eigen::VectorXd& x, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ValidationError("mask: fraction must lie in [0, 1)");
  }
  const auto u = static_cast<std::size_t>(x.size());
  const auto blanks = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(u)));
  Eigen::VectorXd out = x;
  if (blanks == 0) {
    return out;
  }
  std::vector<std::size_t> idx(u);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `blanks` slots are a uniform subset.
  for (std::size_t i = 0; i < blanks; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, u - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out[static_cast<Eigen::Index>(idx[i])] = 0.0;
  }
  return out;
}

Eigen::VectorXd encode(const NetworkParams& params, const Eigen::VectorXd& x) {
  return sigmoid(params.w_in * x + params.b_in);
}

Eigen::VectorXd decode(const NetworkParams& params, const Eigen::VectorXd& hidden) {
  return sigmoid(params.w_in.transpose() * hidden + params.d);
}

Eigen::VectorXd classify_hidden(const NetworkParams& params, const Eigen::VectorXd& hidden) {
  return softmax(params.w_out.transpose() * hidden + params.c_out);
}

Eigen::VectorXd predict_proba(const NetworkParams& params, const Eigen::VectorXd& x) {
  check_dims(params, x);
  Eigen::VectorXd probs = classify_hidden(params, encode(params, x));
  check_finite(probs, "classifier output");
  return probs;
}

std::size_t predict(const NetworkParams& params, const Eigen::VectorXd& x) {
  Eigen::Index best = 0;
  predict_proba(params, x).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

ForwardCache forward(const NetworkParams& params, const Eigen::VectorXd& x, double mask_fraction,
                     Rng& rng) {
  check_dims(params, x);
  ForwardCache cache;
  cache.masked = mask(x, mask_fraction, rng);
  cache.hidden = encode(params, cache.masked);
  check_finite(cache.hidden, "encoder");
  cache.recon = decode(params, cache.hidden);
  check_finite(cache.recon, "decoder");
  cache.probs = classify_hidden(params, encode(params, x));
  check_finite(cache.probs, "classifier output");
  return cache;
}

double reconstruction_loss(const NetworkParams& params, const Eigen::VectorXd& target,
                           const Eigen::VectorXd& input) {
  const Eigen::VectorXd recon = decode(params, encode(params, input));
  return 0.5 * (target - recon).squaredNorm();
}

double classification_loss(const NetworkParams& params, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y_onehot) {
  return 0.5 * (y_onehot - predict_proba(params, x)).squaredNorm();
}

GenerativeGradient generative_gradient(const NetworkParams& params, const Eigen::VectorXd& target,
                                       const Eigen::VectorXd& input) {
  check_dims(params, target);
  check_dims(params, input);
  const Eigen::VectorXd h = encode(params, input);
  const Eigen::VectorXd recon = decode(params, h);
  check_finite(recon, "decoder");

  const Eigen::VectorXd err = recon - target;
  const Eigen::VectorXd delta_out = err.cwiseProduct(recon.cwiseProduct((1.0 - recon.array()).matrix()));
  const Eigen::VectorXd delta_hidden =
      (params.w_in * delta_out).cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));

  GenerativeGradient g;
  g.loss = 0.5 * err.squaredNorm();
  g.d = delta_out;
  g.b_in = delta_hidden;
  // decoder use of W_in (x_hat = s(W_in^T h + d)) plus encoder use
  g.w_in = h * delta_out.transpose() + delta_hidden * input.transpose();
  return g;
}

DiscriminativeGradient discriminative_gradient(const NetworkParams& params,
                                               const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& y_onehot) {
  check_dims(params, x);
  check_target(params, y_onehot);
  const Eigen::VectorXd h = encode(params, x);
  const Eigen::VectorXd probs = classify_hidden(params, h);
  check_finite(probs, "classifier output");

  const Eigen::VectorXd err = probs - y_onehot;
  // softmax Jacobian applied to dL/dy_hat
  const Eigen::VectorXd delta_logits = probs.cwiseProduct((err.array() - err.dot(probs)).matrix());
  const Eigen::VectorXd delta_hidden =
      (params.w_out * delta_logits).cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));

  DiscriminativeGradient g;
  g.loss = 0.5 * err.squaredNorm();
  g.grad.c_out = delta_logits;
  g.grad.w_out = h * delta_logits.transpose();
  g.grad.b_in = delta_hidden;
  g.grad.w_in = delta_hidden * x.transpose();
  return g;
}

double generative_step(NetworkParams& params, const Eigen::VectorXd& x, double lr,
                       double mask_fraction, Rng& rng) {
  if (lr < 0.0) {
    throw ValidationError("generative_step: learning rate must be non-negative");
  }
  check_dims(params, x);
  const Eigen::VectorXd input = mask(x, mask_fraction, rng);
  const GenerativeGradient g = generative_gradient(params, x, input);
  params.w_in -= lr * g.w_in;
  params.b_in -= lr * g.b_in;
  params.d -= lr * g.d;
  assert(params.all_finite());
  return g.loss;
}

DiscriminativeStep discriminative_step(NetworkParams& params, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y_onehot, double lr,
                                       const Theta* hedge) {
  if (lr < 0.0) {
    throw ValidationError("discriminative_step: learning rate must be non-negative");
  }
  DiscriminativeGradient g = discriminative_gradient(params, x, y_onehot);
  Theta total = g.grad;
  if (hedge != nullptr) {
    if (!hedge->same_shape(params)) {
      throw ValidationError("discriminative_step: hedge addend shape does not match network");
    }
    total += *hedge;
  }
  Theta before = Theta::of(params);
  params.w_in -= lr * total.w_in;
  params.b_in -= lr * total.b_in;
  params.w_out -= lr * total.w_out;
  params.c_out -= lr * total.c_out;
  assert(params.all_finite());

  DiscriminativeStep step;
  step.loss = g.loss;
  step.grad = std::move(g.grad);
  step.delta = Theta::of(params) - before;
  return step;
}

void add_nodes(NetworkParams& params, std::size_t count, Rng& rng) {
  if (count < 1) {
    throw ValidationError("add_nodes: count must be positive");
  }
  const Eigen::Index old_rows = params.w_in.rows();
  const auto added = static_cast<Eigen::Index>(count);
  const std::size_t new_width = params.hidden() + count;

  const Eigen::MatrixXd new_in =
      xavier_matrix(added, params.w_in.cols(), xavier_bound(params.input_dim(), new_width), rng);
  const Eigen::MatrixXd new_out =
      xavier_matrix(added, params.w_out.cols(), xavier_bound(new_width, params.num_classes()), rng);

  params.w_in.conservativeResize(old_rows + added, Eigen::NoChange);
  params.w_in.bottomRows(added) = new_in;
  params.b_in.conservativeResize(old_rows + added);
  params.b_in.tail(added).setZero();
  params.w_out.conservativeResize(old_rows + added, Eigen::NoChange);
  params.w_out.bottomRows(added) = new_out;
}

void prune_nodes(NetworkParams& params, std::span<const std::size_t> indices) {
  const auto drop = drop_mask(params.hidden(), indices);
  const auto kept = static_cast<Eigen::Index>(std::count(drop.begin(), drop.end(), false));
  if (kept < 1) {
    throw ValidationError("prune_nodes: cannot remove every hidden unit");
  }
  params.w_in = remove_rows(params.w_in, drop, kept);
  params.b_in = remove_rows(Eigen::MatrixXd(params.b_in), drop, kept).col(0);
  params.w_out = remove_rows(params.w_out, drop, kept);
}

double normalized_top2(const Eigen::VectorXd& probs) {
  if (probs.size() < 2) {
    throw ValidationError("normalized_top2: needs at least two classes");
  }
  double first = -1.0;
  double second = -1.0;
  for (double p : probs) {
    if (p > first) {
      second = first;
      first = p;
    } else if (p > second) {
      second = p;
    }
  }
  const double denom = first + second;
  return denom > 0.0 ? first / denom : 0.5;
}

Eigen::VectorXd one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw ValidationError("one_hot: label " + std::to_string(label) + " out of range");
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_classes));
  y[static_cast<Eigen::Index>(label)] = 1.0;
  return y;
}

} // namespace parsnet
