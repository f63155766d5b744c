#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace parsnet {

// One diagonal Gaussian of the evolving mixture.
struct GaussianComponent {
  Eigen::VectorXd center;
  Eigen::VectorXd spread;  // per-dimension standard deviation, strictly positive
  std::int64_t support = 1;
  std::int64_t lifespan = 0;  // samples observed since insertion
  double activity_sum = 0.0;
  double activity_sq_sum = 0.0;
  std::vector<std::int64_t> class_counts;

  // Mean activation over the lifespan; 0 before the first observation.
  double activity() const {
    return lifespan > 0 ? activity_sum / static_cast<double>(lifespan) : 0.0;
  }
  // Coverage span used by the vigilance test: mean per-dimension spread.
  double coverage() const { return spread.mean(); }
  std::int64_t labelled_count() const;
};

struct AgmmOptions {
  double initial_spread = 0.1;  // alpha4
  std::int64_t prune_grace = 20;
  double variance_floor = 1e-8;
};

// Autonomous Gaussian mixture: single-pass density estimate of p(X) whose
// components are inserted, tuned and pruned as samples arrive.
//
// Not thread-safe for mutation. Const member functions may run concurrently
// when no writer is active.
class Agmm {
public:
  Agmm(std::size_t input_dim, std::size_t num_classes, AgmmOptions options = {});

  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return components_.size(); }
  bool empty() const { return components_.empty(); }
  const AgmmOptions& options() const { return options_; }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& component(std::size_t m) const { return components_.at(m); }

  std::size_t winner(const Eigen::VectorXd& x) const;
  bool vigilance_passes(std::size_t win) const;
  bool should_insert(const Eigen::VectorXd& x, double kappa) const;

  void insert_component(const Eigen::VectorXd& x);
  void tune_winner(std::size_t win, const Eigen::VectorXd& x);

  // Posterior responsibility of each component for x (sums to one).
  Eigen::VectorXd mixing_coefficients(const Eigen::VectorXd& x) const;
  // Relative supports Sup_m / sum Sup.
  Eigen::VectorXd prior_weights() const;

  bool has_labels() const;
  // Throws UninitializedError when no labelled sample has been observed.
  Eigen::VectorXd class_posterior(const Eigen::VectorXd& x) const;
  void observe_label(const Eigen::VectorXd& x, std::size_t label);

  std::vector<std::size_t> prune_inactive();

  struct UpdateReport {
    bool inserted = false;
    std::size_t winner = 0;
    std::vector<std::size_t> pruned;
  };
  UpdateReport update(const Eigen::VectorXd& x, double kappa,
                      std::optional<std::size_t> label = std::nullopt);

  // Direct access for tests and snapshot restore.
  std::vector<GaussianComponent>& mutable_components() { return components_; }

  void save(std::ostream& out) const;
  static Agmm load(std::istream& in);

private:
  void check_input(const Eigen::VectorXd& x) const;
  void require_components() const;

  std::size_t input_dim_;
  std::size_t num_classes_;
  AgmmOptions options_;
  std::vector<GaussianComponent> components_;
};

// min_j exp(-(x_j - c_j)^2 / (2 sigma_j^2)), in (0, 1].
double activation(const GaussianComponent& comp, const Eigen::VectorXd& x);
// log of activation(); stays finite where the activation underflows.
double log_activation(const GaussianComponent& comp, const Eigen::VectorXd& x);

// Proximity threshold a sample's best activation must fall below before a
// new component is considered: exp(-u*kappa / (4 - 2 exp(-u/20))).
double grow_threshold(std::size_t input_dim, double kappa);
double log_grow_threshold(std::size_t input_dim, double kappa);

// Log-density of the diagonal Gaussian N(x; center, spread^2).
double log_likelihood(const GaussianComponent& comp, const Eigen::VectorXd& x);

} // namespace parsnet
