#include "parsnet/slash.hpp"

#include <algorithm>
#include <cmath>

#include "parsnet/error.hpp"

namespace parsnet {

HedgeState HedgeState::for_network(const NetworkParams& net) {
  HedgeState h;
  h.theta_star = Theta::of(net);
  h.gamma = Theta::zeros_like(h.theta_star);
  h.path_integral = h.gamma;
  h.total_movement = h.gamma;
  return h;
}

bool HedgeState::matches(const NetworkParams& net) const {
  return theta_star.same_shape(net) && gamma.same_shape(net) && path_integral.same_shape(net) &&
         total_movement.same_shape(net);
}

void HedgeState::on_units_added(const NetworkParams& net, std::size_t first_new_unit) {
  const Theta current = Theta::of(net);
  theta_star.append_units(current, first_new_unit);
  const Theta zero = Theta::zeros_like(current);
  gamma.append_units(zero, first_new_unit);
  path_integral.append_units(zero, first_new_unit);
  total_movement.append_units(zero, first_new_unit);
}

void HedgeState::on_units_removed(std::span<const std::size_t> indices) {
  theta_star.remove_units(indices);
  gamma.remove_units(indices);
  path_integral.remove_units(indices);
  total_movement.remove_units(indices);
}

void ReconScaler::observe(double error) {
  if (!seen_) {
    min_ = max_ = error;
    seen_ = true;
    return;
  }
  min_ = std::min(min_, error);
  max_ = std::max(max_, error);
}

double ReconScaler::alpha3(double error) const {
  if (!seen_ || !(max_ > min_)) {
    return 0.0;
  }
  return std::clamp((error - min_) / (max_ - min_), 0.0, 1.0);
}

PseudoDecision try_pseudo_label(const Eigen::VectorXd& net_probs,
                                const std::optional<Eigen::VectorXd>& agmm_posterior,
                                double alpha1, double alpha2) {
  PseudoDecision d;
  d.net_confidence = normalized_top2(net_probs);
  if (!agmm_posterior) {
    d.outcome = PseudoOutcome::no_agmm_posterior;
    return d;
  }
  if (agmm_posterior->size() != net_probs.size()) {
    throw ValidationError("try_pseudo_label: class count mismatch between scorers");
  }
  d.agmm_confidence = normalized_top2(*agmm_posterior);

  Eigen::Index net_class = 0;
  Eigen::Index agmm_class = 0;
  net_probs.maxCoeff(&net_class);
  agmm_posterior->maxCoeff(&agmm_class);

  if (d.agmm_confidence < alpha1 || d.net_confidence < alpha2) {
    d.outcome = PseudoOutcome::low_confidence;
    return d;
  }
  if (net_class != agmm_class) {
    d.outcome = PseudoOutcome::disagreement;
    return d;
  }
  d.outcome = PseudoOutcome::accepted;
  d.label = PseudoLabel{static_cast<std::size_t>(net_class), d.agmm_confidence, d.net_confidence};
  return d;
}

Theta hedge_addend(const NetworkParams& net, const HedgeState& hedge, double alpha3) {
  if (!hedge.matches(net)) {
    throw ValidationError("hedge_addend: hedge state must be resized after structural changes");
  }
  Theta diff = Theta::of(net) - hedge.theta_star;
  Theta out = hedge.gamma.cwise_product(diff);
  out *= alpha3;
  return out;
}

void accumulate_importance(HedgeState& hedge, const Theta& delta, const Theta& grad) {
  if (!delta.same_shape(hedge.path_integral) || !grad.same_shape(hedge.path_integral)) {
    throw ValidationError("accumulate_importance: shape mismatch");
  }
  hedge.path_integral += delta.cwise_product(grad);
  hedge.total_movement += delta.cwise_abs();
  ++hedge.step_count;
}

void finalize_gamma(HedgeState& hedge) {
  Theta raw = hedge.path_integral.cwise_quotient(hedge.total_movement.cwise_square(), hedge.epsilon);
  raw *= -1.0;
  const double norm = std::sqrt(raw.squared_norm());
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    hedge.gamma = Theta::zeros_like(raw);
    return;
  }
  raw *= 1.0 / norm;
  hedge.gamma = std::move(raw);
}

void snapshot_optimal(HedgeState& hedge, const NetworkParams& net) {
  hedge.theta_star = Theta::of(net);
}

FeatureRange FeatureRange::unit(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return FeatureRange{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

double augment_stddev(AugmentMode mode, double range_width) {
  if (mode == AugmentMode::image) {
    return 33.0 / 255.0 * range_width;
  }
  return std::sqrt(0.001);
}

Eigen::VectorXd augment(const Eigen::VectorXd& x, AugmentMode mode, Rng& rng,
                        const FeatureRange& range) {
  if (range.lo.size() != x.size() || range.hi.size() != x.size()) {
    throw ValidationError("augment: feature range does not match input dimension");
  }
  Eigen::VectorXd out(x.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double sd = augment_stddev(mode, range.hi[j] - range.lo[j]);
    out[j] = std::clamp(x[j] + sd * noise(rng), range.lo[j], range.hi[j]);
  }
  return out;
}

} // namespace parsnet
