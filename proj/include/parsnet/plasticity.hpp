#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "parsnet/agmm.hpp"
#include "parsnet/network.hpp"

namespace parsnet {

// Welford mean/std plus a resettable "best so far" snapshot, as used by
// statistical-process-control drift detectors.
class RunningStat {
public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double stddev() const;  // population

  bool has_min() const { return has_min_; }
  double min_mean() const { return min_mean_; }
  double min_std() const { return min_std_; }

  // Records the current mean/std when the mean is the lowest seen since the
  // last reset.
  void update_min();
  void reset_min();

private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  bool has_min_ = false;
  double min_mean_ = std::numeric_limits<double>::infinity();
  double min_std_ = 0.0;
};

enum class Phase { generative, discriminative };

struct NsState {
  explicit NsState(Phase p = Phase::generative) : phase(p) {}

  RunningStat bias_stat;
  RunningStat var_stat;
  Phase phase;
  double last_kappa = 2.0;
  double last_xi = 2.0;
};

// Confidence factors of the grow and prune rules. Both lie in (0.8, 2].
inline double kappa_factor(double bias_sq) { return 1.2 * std::exp(-bias_sq) + 0.8; }
inline double xi_factor(double variance) { return 1.2 * std::exp(-variance) + 0.8; }

// Expected hidden response E[s] under a mixture, using the probit
// approximation of the sigmoid-Gaussian integral:
//   E[s] = sum_m w_m s(W_in (c_m / sqrt(1 + pi sigma_m^2 / 8)) + b_in)
Eigen::VectorXd expected_activation(const NetworkParams& net,
                                    const std::vector<GaussianComponent>& components,
                                    const Eigen::VectorXd& weights);
// Same, weighting each component by its relative support.
Eigen::VectorXd expected_activation(const NetworkParams& net, const Agmm& agmm);

struct NsDecomposition {
  double bias_sq = 0.0;
  double variance = 0.0;
  Eigen::VectorXd expected_output;
};

// Network significance split into bias^2 and variance. The output map is the
// decoder for the generative phase and the softmax head for the
// discriminative phase; E[y^2] is taken through E[s]*E[s]. Both terms are
// averaged over the outputs, so with targets in [0, 1] bias_sq <= 1 and kappa
// stays within [1.24, 2].
NsDecomposition ns_decompose(const Eigen::VectorXd& expected_hidden, const Eigen::VectorXd& target,
                             const NetworkParams& net, Phase phase);

// High-bias test. Feeds bias_sq into the running statistics and fires when
// mean + std >= min_mean + kappa * min_std; the minima reset on firing.
bool check_grow(NsState& ns, double bias_sq);

// High-variance test, same shape with factor 2*xi.
bool check_prune_trigger(NsState& ns, double variance);

// Records a variance observation without evaluating the trigger (used for the
// sample on which units were just added).
void observe_variance(NsState& ns, double variance);

// Units with E[s]_r <= mean - std/2. Never returns every unit.
std::vector<std::size_t> select_prune_candidates(const Eigen::VectorXd& expected_hidden);

} // namespace parsnet
