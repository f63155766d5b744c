#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "parsnet/rng.hpp"

namespace parsnet {

// Single hidden layer shared by a tied-weight denoising autoencoder and a
// softmax classifier.
//
//   h     = s(W_in x + b_in)         encoder (shared)
//   x_hat = s(W_in^T h + d)          decoder, weight tied to the encoder
//   y_hat = softmax(W_out^T h + c)   classifier head
struct NetworkParams {
  Eigen::MatrixXd w_in;   // R x u
  Eigen::VectorXd b_in;   // R
  Eigen::VectorXd d;      // u, decoder bias
  Eigen::MatrixXd w_out;  // R x C
  Eigen::VectorXd c_out;  // C

  std::size_t hidden() const { return static_cast<std::size_t>(w_in.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(w_in.cols()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(w_out.cols()); }

  bool all_finite() const;
  void save(std::ostream& out) const;
  static NetworkParams load(std::istream& in);
};

// The discriminative parameter set (W_in, b_in, W_out, c). Used for
// gradients, the hedge anchor and importance accumulators, so every block
// mirrors the network's shapes.
struct Theta {
  Eigen::MatrixXd w_in;
  Eigen::VectorXd b_in;
  Eigen::MatrixXd w_out;
  Eigen::VectorXd c_out;

  static Theta zeros(std::size_t hidden, std::size_t input_dim, std::size_t num_classes);
  static Theta zeros_like(const Theta& other);
  static Theta of(const NetworkParams& params);

  std::size_t hidden() const { return static_cast<std::size_t>(w_in.rows()); }
  bool same_shape(const Theta& other) const;
  bool same_shape(const NetworkParams& params) const;
  std::size_t parameter_count() const;

  double squared_norm() const;
  double sum() const;
  bool all_zero() const;

  Theta& operator+=(const Theta& rhs);
  Theta& operator-=(const Theta& rhs);
  Theta& operator*=(double s);
  Theta cwise_product(const Theta& rhs) const;
  Theta cwise_abs() const;
  Theta cwise_square() const;
  // Elementwise quotient by (rhs + eps).
  Theta cwise_quotient(const Theta& rhs, double eps) const;

  // Structural edits mirroring add_nodes/prune_nodes on the network.
  void append_units(const Theta& rows_from, std::size_t first_row);
  void remove_units(std::span<const std::size_t> indices);
};

Theta operator+(Theta lhs, const Theta& rhs);
Theta operator-(Theta lhs, const Theta& rhs);
Theta operator*(double s, Theta rhs);

struct ForwardCache {
  Eigen::VectorXd masked;  // x with the masked coordinates zeroed
  Eigen::VectorXd hidden;  // encoder response to the masked input
  Eigen::VectorXd recon;
  Eigen::VectorXd probs;   // classifier output on the clean input
};

double sigmoid(double z);
Eigen::VectorXd sigmoid(const Eigen::VectorXd& z);
Eigen::VectorXd softmax(const Eigen::VectorXd& z);

NetworkParams init_network(std::size_t input_dim, std::size_t num_classes, std::size_t hidden,
                           Rng& rng);

// Zeroes a uniformly chosen floor(fraction * u)-subset of coordinates.
Eigen::VectorXd mask(const Eigen::VectorXd& x, double fraction, Rng& rng);

ForwardCache forward(const NetworkParams& params, const Eigen::VectorXd& x, double mask_fraction,
                     Rng& rng);

Eigen::VectorXd encode(const NetworkParams& params, const Eigen::VectorXd& x);
Eigen::VectorXd decode(const NetworkParams& params, const Eigen::VectorXd& hidden);
Eigen::VectorXd classify_hidden(const NetworkParams& params, const Eigen::VectorXd& hidden);
Eigen::VectorXd predict_proba(const NetworkParams& params, const Eigen::VectorXd& x);
std::size_t predict(const NetworkParams& params, const Eigen::VectorXd& x);

// 1/2 ||x - x_hat||^2 with x_hat computed from `input` (the corrupted copy).
double reconstruction_loss(const NetworkParams& params, const Eigen::VectorXd& target,
                           const Eigen::VectorXd& input);
// 1/2 ||y - y_hat||^2
double classification_loss(const NetworkParams& params, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y_onehot);

struct GenerativeGradient {
  Eigen::MatrixXd w_in;  // encoder and decoder contributions summed
  Eigen::VectorXd b_in;
  Eigen::VectorXd d;
  double loss = 0.0;
};
GenerativeGradient generative_gradient(const NetworkParams& params, const Eigen::VectorXd& target,
                                       const Eigen::VectorXd& input);

struct DiscriminativeGradient {
  Theta grad;
  double loss = 0.0;
};
DiscriminativeGradient discriminative_gradient(const NetworkParams& params,
                                               const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& y_onehot);

// One SGD step on the reconstruction loss of a masked copy of x. Returns the
// loss before the update.
double generative_step(NetworkParams& params, const Eigen::VectorXd& x, double lr,
                       double mask_fraction, Rng& rng);

struct DiscriminativeStep {
  double loss = 0.0;  // before the update
  Theta grad;         // data-loss gradient, excluding the hedge addend
  Theta delta;        // parameter movement applied
};
// One SGD step on 1/2 ||y - y_hat||^2. When `hedge` is given it is added to the
// gradient before the step.
DiscriminativeStep discriminative_step(NetworkParams& params, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y_onehot, double lr,
                                       const Theta* hedge = nullptr);

void add_nodes(NetworkParams& params, std::size_t count, Rng& rng);
void prune_nodes(NetworkParams& params, std::span<const std::size_t> indices);

// y1 / (y1 + y2) over the two largest entries; 0.5 means maximally unsure.
double normalized_top2(const Eigen::VectorXd& probs);

Eigen::VectorXd one_hot(std::size_t label, std::size_t num_classes);

} // namespace parsnet
