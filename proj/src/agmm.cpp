#include "parsnet/agmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "parsnet/detail/binary_io.hpp"
#include "parsnet/error.hpp"

namespace parsnet {

namespace {

constexpr std::string_view kMagic = "AGMM1";

void require_finite(const Eigen::VectorXd& x) {
  if (!x.allFinite()) {
    throw ValidationError("agmm: input contains non-finite values");
  }
}

} // namespace

std::int64_t GaussianComponent::labelled_count() const {
  return std::accumulate(class_counts.begin(), class_counts.end(), std::int64_t{0});
}

double log_activation(const GaussianComponent& comp, const Eigen::VectorXd& x) {
  require_finite(x);
  if (x.size() != comp.center.size()) {
    throw ValidationError("agmm: dimension mismatch in activation");
  }
  // min_j exp(-d_j) == exp(-max_j d_j)
  const Eigen::ArrayXd diff = x.array() - comp.center.array();
  const Eigen::ArrayXd d = diff.square() / (2.0 * comp.spread.array().square());
  return -d.maxCoeff();
}

double activation(const GaussianComponent& comp, const Eigen::VectorXd& x) {
  return std::exp(log_activation(comp, x));
}

double log_grow_threshold(std::size_t input_dim, double kappa) {
  if (input_dim < 1 || !(kappa > 0.0)) {
    throw ValidationError("grow_threshold: requires u >= 1 and kappa > 0");
  }
  const double u = static_cast<double>(input_dim);
  return -(u * kappa) / (4.0 - 2.0 * std::exp(-u / 20.0));
}

double grow_threshold(std::size_t input_dim, double kappa) {
  return std::exp(log_grow_threshold(input_dim, kappa));
}

double log_likelihood(const GaussianComponent& comp, const Eigen::VectorXd& x) {
  const Eigen::ArrayXd var = comp.spread.array().square();
  const Eigen::ArrayXd diff = x.array() - comp.center.array();
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * ((diff.square() / var).sum() + var.log().sum() +
                 static_cast<double>(x.size()) * log_two_pi);
}

Agmm::Agmm(std::size_t input_dim, std::size_t num_classes, AgmmOptions options)
    : input_dim_(input_dim), num_classes_(num_classes), options_(options) {
  if (input_dim_ < 1) {
    throw ValidationError("agmm: input dimension must be positive");
  }
  if (!(options_.initial_spread > 0.0)) {
    throw ValidationError("agmm: initial spread must be positive");
  }
}

void Agmm::check_input(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim_) {
    throw ValidationError("agmm: expected " + std::to_string(input_dim_) + " features, got " +
                          std::to_string(x.size()));
  }
  require_finite(x);
}

void Agmm::require_components() const {
  if (components_.empty()) {
    throw UninitializedError("agmm: model has no components yet");
  }
}

std::size_t Agmm::winner(const Eigen::VectorXd& x) const {
  require_components();
  check_input(x);
  std::size_t best = 0;
  double best_act = log_activation(components_[0], x);
  for (std::size_t m = 1; m < components_.size(); ++m) {
    const double act = log_activation(components_[m], x);
    if (act > best_act) {
      best_act = act;
      best = m;
    }
  }
  return best;
}

bool Agmm::vigilance_passes(std::size_t win) const {
  require_components();
  if (win >= components_.size()) {
    throw ValidationError("agmm: winner index out of range");
  }
  const std::size_t count = components_.size();
  if (count == 1) {
    return true;
  }
  const GaussianComponent& w = components_[win];
  const Eigen::ArrayXd lo = w.center.array() - w.spread.array();
  const Eigen::ArrayXd hi = w.center.array() + w.spread.array();

  double outside = 0.0;
  double others_coverage = 0.0;
  for (std::size_t m = 0; m < count; ++m) {
    if (m == win) {
      continue;
    }
    const Eigen::ArrayXd c = components_[m].center.array();
    outside += static_cast<double>(((c < lo) || (c > hi)).count());
    others_coverage += components_[m].coverage();
  }
  const double rho = outside / (static_cast<double>(count - 1) * static_cast<double>(input_dim_));
  return w.coverage() >= rho * others_coverage;
}

bool Agmm::should_insert(const Eigen::VectorXd& x, double kappa) const {
  const std::size_t win = winner(x);
  const bool far = log_activation(components_[win], x) < log_grow_threshold(input_dim_, kappa);
  return far && vigilance_passes(win);
}

void Agmm::insert_component(const Eigen::VectorXd& x) {
  check_input(x);
  GaussianComponent comp;
  comp.center = x;
  comp.spread = Eigen::VectorXd::Constant(x.size(), options_.initial_spread);
  comp.support = 1;
  comp.lifespan = 0;
  comp.class_counts.assign(num_classes_, 0);
  components_.push_back(std::move(comp));
}

void Agmm::tune_winner(std::size_t win, const Eigen::VectorXd& x) {
  check_input(x);
  if (win >= components_.size()) {
    throw ValidationError("agmm: winner index out of range");
  }
  GaussianComponent& comp = components_[win];
  const double rate = 1.0 / static_cast<double>(comp.support + 1);
  comp.center += (x - comp.center) * rate;
  Eigen::ArrayXd var = comp.spread.array().square();
  var += ((x - comp.center).array().square() - var) * rate;
  var = var.max(options_.variance_floor);
  comp.spread = var.sqrt().matrix();
  ++comp.support;
}

Eigen::VectorXd Agmm::prior_weights() const {
  require_components();
  Eigen::VectorXd w(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t m = 0; m < components_.size(); ++m) {
    w[static_cast<Eigen::Index>(m)] = static_cast<double>(components_[m].support);
  }
  return w / w.sum();
}

Eigen::VectorXd Agmm::mixing_coefficients(const Eigen::VectorXd& x) const {
  require_components();
  check_input(x);
  const Eigen::VectorXd prior = prior_weights();
  const auto count = static_cast<Eigen::Index>(components_.size());
  Eigen::VectorXd log_joint(count);
  for (Eigen::Index m = 0; m < count; ++m) {
    log_joint[m] = std::log(prior[m]) + log_likelihood(components_[static_cast<std::size_t>(m)], x);
  }
  // Normalizing in the log domain keeps high-dimensional likelihoods from
  // underflowing; the prior fallback remains for the all -inf case.
  const double top = log_joint.maxCoeff();
  if (!std::isfinite(top)) {
    return prior;
  }
  Eigen::VectorXd w = (log_joint.array() - top).exp().matrix();
  return w / w.sum();
}

bool Agmm::has_labels() const {
  return std::any_of(components_.begin(), components_.end(),
                     [](const GaussianComponent& c) { return c.labelled_count() > 0; });
}

Eigen::VectorXd Agmm::class_posterior(const Eigen::VectorXd& x) const {
  require_components();
  if (!has_labels()) {
    throw UninitializedError("agmm: no labelled observations, class posterior unavailable");
  }
  const Eigen::VectorXd resp = mixing_coefficients(x);
  const auto classes = static_cast<Eigen::Index>(num_classes_);
  Eigen::VectorXd post = Eigen::VectorXd::Zero(classes);
  for (std::size_t m = 0; m < components_.size(); ++m) {
    const GaussianComponent& comp = components_[m];
    const std::int64_t total = comp.labelled_count();
    const double r = resp[static_cast<Eigen::Index>(m)];
    for (Eigen::Index o = 0; o < classes; ++o) {
      const double cond = total > 0 ? static_cast<double>(comp.class_counts[static_cast<std::size_t>(o)]) /
                                          static_cast<double>(total)
                                    : 1.0 / static_cast<double>(num_classes_);
      post[o] += cond * r;
    }
  }
  return post / post.sum();
}

void Agmm::observe_label(const Eigen::VectorXd& x, std::size_t label) {
  if (label >= num_classes_) {
    throw ValidationError("agmm: label " + std::to_string(label) + " out of range");
  }
  components_[winner(x)].class_counts[label] += 1;
}

std::vector<std::size_t> Agmm::prune_inactive() {
  std::vector<std::size_t> pruned;
  const std::size_t count = components_.size();
  if (count < 2) {
    return pruned;
  }

  std::vector<std::size_t> mature;
  for (std::size_t m = 0; m < count; ++m) {
    if (components_[m].lifespan >= options_.prune_grace) {
      mature.push_back(m);
    }
  }
  if (mature.empty()) {
    return pruned;
  }

  std::vector<bool> remove(count, false);

  // Dormancy: half-sigma rule on the component's own activation history.
  for (std::size_t m : mature) {
    const GaussianComponent& c = components_[m];
    const double n = static_cast<double>(c.lifespan);
    const double mean = c.activity_sum / n;
    const double sd = std::sqrt(std::max(c.activity_sq_sum / n - mean * mean, 0.0));
    // mean <= |mean - sd/2| restricted to its negative branch; the positive
    // branch only holds for a constant history, which is not dormancy.
    if (0.5 * sd - mean >= mean) {
      remove[m] = true;
    }
  }

  // Relevance: half-sigma rule across mature components. With two mature
  // components this would always drop the weaker one, so it needs three.
  if (mature.size() >= 3) {
    double mean = 0.0;
    for (std::size_t m : mature) {
      mean += components_[m].activity();
    }
    mean /= static_cast<double>(mature.size());
    double var = 0.0;
    for (std::size_t m : mature) {
      const double d = components_[m].activity() - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(mature.size()));
    const double threshold = std::abs(mean - 0.5 * sd);
    for (std::size_t m : mature) {
      if (components_[m].activity() <= threshold) {
        remove[m] = true;
      }
    }
  }

  if (std::all_of(remove.begin(), remove.end(), [](bool r) { return r; })) {
    std::size_t keep = 0;
    for (std::size_t m = 1; m < count; ++m) {
      if (components_[m].activity() > components_[keep].activity()) {
        keep = m;
      }
    }
    remove[keep] = false;
  }

  std::vector<GaussianComponent> survivors;
  survivors.reserve(count);
  for (std::size_t m = 0; m < count; ++m) {
    if (remove[m]) {
      pruned.push_back(m);
    } else {
      survivors.push_back(std::move(components_[m]));
    }
  }
  components_ = std::move(survivors);
  return pruned;
}

Agmm::UpdateReport Agmm::update(const Eigen::VectorXd& x, double kappa,
                                std::optional<std::size_t> label) {
  check_input(x);
  if (label && *label >= num_classes_) {
    throw ValidationError("agmm: label " + std::to_string(*label) + " out of range");
  }
  UpdateReport report;
  if (components_.empty()) {
    insert_component(x);
    report.inserted = true;
  } else {
    std::size_t win = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < components_.size(); ++m) {
      GaussianComponent& comp = components_[m];
      const double log_act = log_activation(comp, x);
      const double act = std::exp(log_act);
      ++comp.lifespan;
      comp.activity_sum += act;
      comp.activity_sq_sum += act * act;
      if (log_act > best) {
        best = log_act;
        win = m;
      }
    }
    report.winner = win;
    if (best < log_grow_threshold(input_dim_, kappa) && vigilance_passes(win)) {
      insert_component(x);
      report.inserted = true;
    } else {
      tune_winner(win, x);
    }
    report.pruned = prune_inactive();
  }
  if (label) {
    observe_label(x, *label);
  }
  return report;
}

void Agmm::save(std::ostream& out) const {
  using namespace detail;
  write_magic(out, kMagic);
  write_pod<std::uint64_t>(out, input_dim_);
  write_pod<std::uint64_t>(out, num_classes_);
  write_pod<double>(out, options_.initial_spread);
  write_pod<std::int64_t>(out, options_.prune_grace);
  write_pod<double>(out, options_.variance_floor);
  write_pod<std::uint64_t>(out, components_.size());
  for (const GaussianComponent& c : components_) {
    write_vector(out, c.center);
    write_vector(out, c.spread);
    write_pod<std::int64_t>(out, c.support);
    write_pod<std::int64_t>(out, c.lifespan);
    write_pod<double>(out, c.activity_sum);
    write_pod<double>(out, c.activity_sq_sum);
    for (std::int64_t n : c.class_counts) {
      write_pod<std::int64_t>(out, n);
    }
  }
}

Agmm Agmm::load(std::istream& in) {
  using namespace detail;
  expect_magic(in, kMagic);
  const auto input_dim = read_pod<std::uint64_t>(in);
  const auto num_classes = read_pod<std::uint64_t>(in);
  AgmmOptions options;
  options.initial_spread = read_pod<double>(in);
  options.prune_grace = read_pod<std::int64_t>(in);
  options.variance_floor = read_pod<double>(in);
  Agmm model(input_dim, num_classes, options);
  const auto count = read_pod<std::uint64_t>(in);
  for (std::uint64_t m = 0; m < count; ++m) {
    GaussianComponent c;
    c.center = read_vector(in);
    c.spread = read_vector(in);
    if (static_cast<std::uint64_t>(c.center.size()) != input_dim ||
        c.spread.size() != c.center.size()) {
      throw FormatError("agmm snapshot: component dimension mismatch");
    }
    c.support = read_pod<std::int64_t>(in);
    c.lifespan = read_pod<std::int64_t>(in);
    c.activity_sum = read_pod<double>(in);
    c.activity_sq_sum = read_pod<double>(in);
    c.class_counts.resize(num_classes);
    for (auto& n : c.class_counts) {
      n = read_pod<std::int64_t>(in);
    }
    model.components_.push_back(std::move(c));
  }
  return model;
}

} // namespace parsnet
