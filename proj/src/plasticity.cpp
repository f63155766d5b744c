#include "parsnet/plasticity.hpp"

#include <cmath>
#include <numbers>

#include "parsnet/error.hpp"

namespace parsnet {

double RunningStat::stddev() const {
  return n_ > 0 ? std::sqrt(std::max(m2_ / static_cast<double>(n_), 0.0)) : 0.0;
}

void RunningStat::update_min() {
  if (!has_min_ || mean_ < min_mean_) {
    min_mean_ = mean_;
    min_std_ = stddev();
    has_min_ = true;
  }
}

void RunningStat::reset_min() {
  min_mean_ = mean_;
  min_std_ = stddev();
  has_min_ = true;
}

Eigen::VectorXd expected_activation(const NetworkParams& net,
                                    const std::vector<GaussianComponent>& components,
                                    const Eigen::VectorXd& weights) {
  if (components.empty()) {
    throw UninitializedError("expected_activation: mixture has no components");
  }
  if (static_cast<std::size_t>(weights.size()) != components.size()) {
    throw ValidationError("expected_activation: one weight per component required");
  }
  constexpr double kProbit = std::numbers::pi / 8.0;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(net.w_in.rows());
  for (std::size_t m = 0; m < components.size(); ++m) {
    const GaussianComponent& comp = components[m];
    const Eigen::VectorXd scaled =
        (comp.center.array() / (1.0 + kProbit * comp.spread.array().square()).sqrt()).matrix();
    out += weights[static_cast<Eigen::Index>(m)] * sigmoid(net.w_in * scaled + net.b_in);
  }
  return out;
}

Eigen::VectorXd expected_activation(const NetworkParams& net, const Agmm& agmm) {
  return expected_activation(net, agmm.components(), agmm.prior_weights());
}

NsDecomposition ns_decompose(const Eigen::VectorXd& expected_hidden, const Eigen::VectorXd& target,
                             const NetworkParams& net, Phase phase) {
  const Eigen::VectorXd second_moment_hidden = expected_hidden.cwiseProduct(expected_hidden);
  Eigen::VectorXd mean_out;
  Eigen::VectorXd second_out;
  if (phase == Phase::generative) {
    mean_out = decode(net, expected_hidden);
    second_out = decode(net, second_moment_hidden);
  } else {
    mean_out = classify_hidden(net, expected_hidden);
    second_out = classify_hidden(net, second_moment_hidden);
  }
  if (target.size() != mean_out.size()) {
    throw ValidationError("ns_decompose: target size does not match the output map");
  }
  NsDecomposition ns;
  const auto outputs = static_cast<double>(mean_out.size());
  ns.bias_sq = (mean_out - target).squaredNorm() / outputs;
  ns.variance = (second_out - mean_out.cwiseProduct(mean_out)).sum() / outputs;
  ns.expected_output = std::move(mean_out);
  return ns;
}

bool check_grow(NsState& ns, double bias_sq) {
  ns.bias_stat.add(bias_sq);
  ns.bias_stat.update_min();
  ns.last_kappa = kappa_factor(bias_sq);
  if (ns.bias_stat.count() < 2) {
    return false;
  }
  const RunningStat& s = ns.bias_stat;
  const bool fire = s.mean() + s.stddev() >= s.min_mean() + ns.last_kappa * s.min_std();
  if (fire) {
    ns.bias_stat.reset_min();
  }
  return fire;
}

void observe_variance(NsState& ns, double variance) {
  ns.var_stat.add(variance);
  ns.var_stat.update_min();
  ns.last_xi = xi_factor(variance);
}

bool check_prune_trigger(NsState& ns, double variance) {
  observe_variance(ns, variance);
  if (ns.var_stat.count() < 2) {
    return false;
  }
  const RunningStat& s = ns.var_stat;
  const bool fire = s.mean() + s.stddev() >= s.min_mean() + 2.0 * ns.last_xi * s.min_std();
  if (fire) {
    ns.var_stat.reset_min();
  }
  return fire;
}

std::vector<std::size_t> select_prune_candidates(const Eigen::VectorXd& expected_hidden) {
  std::vector<std::size_t> out;
  const Eigen::Index r = expected_hidden.size();
  if (r < 2) {
    return out;
  }
  const double mean = expected_hidden.mean();
  const double sd = std::sqrt((expected_hidden.array() - mean).square().mean());
  const double threshold = mean - 0.5 * sd;
  for (Eigen::Index i = 0; i < r; ++i) {
    if (expected_hidden[i] <= threshold) {
      out.push_back(static_cast<std::size_t>(i));
    }
  }
  if (out.size() == static_cast<std::size_t>(r)) {
    Eigen::Index keep = 0;
    expected_hidden.maxCoeff(&keep);
    std::erase(out, static_cast<std::size_t>(keep));
  }
  return out;
}

} // namespace parsnet
