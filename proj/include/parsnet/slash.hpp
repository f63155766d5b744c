#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <Eigen/Dense>

#include "parsnet/network.hpp"
#include "parsnet/rng.hpp"

namespace parsnet {

// Parameter-importance bookkeeping for the hedge term
//   1/2 * alpha3 * Gamma * (theta - theta_star)^2
// Accumulators only move on truly labelled and augmented samples.
struct HedgeState {
  Theta gamma;
  Theta theta_star;
  Theta path_integral;   // sum of delta_theta * dL/dtheta
  Theta total_movement;  // sum of |delta_theta|
  std::size_t step_count = 0;
  double epsilon = 1e-8;

  static HedgeState for_network(const NetworkParams& net);

  bool matches(const NetworkParams& net) const;
  // New units enter theta_star at their initial values with zero importance.
  void on_units_added(const NetworkParams& net, std::size_t first_new_unit);
  void on_units_removed(std::span<const std::size_t> indices);
};

// Running extrema of the reconstruction error, mapping an error to [0, 1].
class ReconScaler {
public:
  void observe(double error);
  // (e - e_min) / (e_max - e_min), clamped to [0, 1]; 0 when the range is empty.
  double alpha3(double error) const;

  bool empty() const { return !seen_; }
  double min() const { return min_; }
  double max() const { return max_; }

private:
  bool seen_ = false;
  double min_ = 0.0;
  double max_ = 0.0;
};

struct PseudoLabel {
  std::size_t label = 0;
  double agmm_confidence = 0.0;
  double net_confidence = 0.0;
};

enum class PseudoOutcome {
  accepted,
  low_confidence,
  disagreement,
  no_agmm_posterior,
};

struct PseudoDecision {
  PseudoOutcome outcome = PseudoOutcome::no_agmm_posterior;
  std::optional<PseudoLabel> label;
  double agmm_confidence = 0.0;
  double net_confidence = 0.0;
};

// Accepts a pseudo label when both scorers are confident (top-2 normalized
// score above their thresholds) and agree on the class.
PseudoDecision try_pseudo_label(const Eigen::VectorXd& net_probs,
                                const std::optional<Eigen::VectorXd>& agmm_posterior,
                                double alpha1, double alpha2);

// Gradient of the hedge term: alpha3 * Gamma (.) (theta - theta_star).
Theta hedge_addend(const NetworkParams& net, const HedgeState& hedge, double alpha3);

void accumulate_importance(HedgeState& hedge, const Theta& delta, const Theta& grad);

// Gamma = -path / (movement^2 + eps), then L2-normalized jointly. The sign
// flip makes Gamma the (non-negative) loss decrease attributed to each
// parameter, since SGD moves against the gradient.
void finalize_gamma(HedgeState& hedge);

void snapshot_optimal(HedgeState& hedge, const NetworkParams& net);

enum class AugmentMode { tabular, image };

struct FeatureRange {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static FeatureRange unit(std::size_t dim);
};

// Noise std used by augment(): sqrt(0.001) for tabular data, 33 gray levels
// out of 255 (scaled to the feature range) for images.
double augment_stddev(AugmentMode mode, double range_width);

// x + N(0, sigma^2), clipped to the valid feature range.
Eigen::VectorXd augment(const Eigen::VectorXd& x, AugmentMode mode, Rng& rng,
                        const FeatureRange& range);

} // namespace parsnet
