#include "parsnet/stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "parsnet/error.hpp"

namespace parsnet {

namespace {

constexpr double kUnityTolerance = 1e-9;

void check_unity(const Eigen::VectorXd& v, const char* what) {
  if (std::abs(v.sum() - 1.0) > kUnityTolerance) {
    throw NumericError(std::string(what) + " does not sum to one");
  }
}

const char* outcome_name(PseudoOutcome o) {
  switch (o) {
    case PseudoOutcome::accepted: return "accepted";
    case PseudoOutcome::low_confidence: return "low_confidence";
    case PseudoOutcome::disagreement: return "disagreement";
    case PseudoOutcome::no_agmm_posterior: return "no_agmm_posterior";
  }
  return "unknown";
}

std::vector<Batch> with_visibility(std::vector<Batch> batches, bool visible) {
  for (Batch& b : batches) {
    b.visible.assign(b.size(), visible ? 1 : 0);
  }
  return batches;
}

} // namespace

std::size_t Batch::labelled_count() const {
  return static_cast<std::size_t>(std::count(visible.begin(), visible.end(), char{1}));
}

std::size_t StreamScenario::sample_count() const {
  std::size_t n = 0;
  for (const Batch& b : batches) {
    n += b.size();
  }
  return n;
}

std::size_t StreamScenario::labelled_count() const {
  std::size_t n = 0;
  for (const Batch& b : batches) {
    n += b.labelled_count();
  }
  return n;
}

StreamScenario make_sporadic(std::vector<Batch> batches, std::size_t num_classes, double p,
                             Rng& rng) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("make_sporadic: label fraction must lie in (0, 1]");
  }
  for (Batch& b : batches) {
    const std::size_t n = b.size();
    const auto keep = static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    b.visible.assign(n, 0);
    for (std::size_t i = 0; i < keep; ++i) {
      b.visible[order[i]] = 1;
    }
  }
  return StreamScenario{std::move(batches), LabelPolicy::sporadic, p, num_classes};
}

StreamScenario make_infinite_delay(std::vector<Batch> batches, std::size_t num_classes) {
  if (batches.size() < 2) {
    throw ValidationError("make_infinite_delay: needs at least two batches");
  }
  batches = with_visibility(std::move(batches), false);
  batches.front().visible.assign(batches.front().size(), 1);
  StreamScenario s{std::move(batches), LabelPolicy::infinite_delay, 0.0, num_classes};
  s.label_fraction = static_cast<double>(s.labelled_count()) / static_cast<double>(s.sample_count());
  return s;
}

StreamScenario make_fully_labelled(std::vector<Batch> batches, std::size_t num_classes) {
  return StreamScenario{with_visibility(std::move(batches), true), LabelPolicy::full, 1.0,
                        num_classes};
}

StepCounters& StepCounters::operator+=(const StepCounters& rhs) {
  samples += rhs.samples;
  labelled += rhs.labelled;
  generative_steps += rhs.generative_steps;
  true_label_steps += rhs.true_label_steps;
  augmented_steps += rhs.augmented_steps;
  pseudo_steps += rhs.pseudo_steps;
  skipped += rhs.skipped;
  grow_events += rhs.grow_events;
  prune_events += rhs.prune_events;
  nodes_added += rhs.nodes_added;
  nodes_pruned += rhs.nodes_pruned;
  agmm_insertions += rhs.agmm_insertions;
  agmm_prunes += rhs.agmm_prunes;
  return *this;
}

// ---------------------------------------------------------------- Learner

Learner::Learner(std::size_t input_dim, std::size_t num_classes, LearnerConfig config)
    : input_dim_(input_dim),
      num_classes_(num_classes),
      config_(config),
      init_rng_(make_rng(config.seed, 1)),
      noise_rng_(make_rng(config.seed, 2)),
      agmm_(input_dim, num_classes,
            AgmmOptions{config.alpha4, config.prune_grace, AgmmOptions{}.variance_floor}),
      range_(FeatureRange::unit(input_dim)) {
  const std::size_t width = config_.evolution_off ? config_.static_hidden : config_.initial_hidden;
  net_ = init_network(input_dim, num_classes, width, init_rng_);
  hedge_ = HedgeState::for_network(net_);
  hedge_.epsilon = config_.epsilon;

  GaussianComponent unit;
  unit.center = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(input_dim));
  unit.spread = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(input_dim));
  unit.class_counts.assign(num_classes, 0);
  fallback_mixture_.push_back(std::move(unit));
}

void Learner::set_trace(std::ostream* out) {
  trace_ = out;
  if (trace_ != nullptr) {
    *trace_ << "sample,phase,bias_sq,variance,kappa,xi,hidden,components\n";
  }
}

void Learner::set_audit(std::ostream* out) {
  audit_ = out;
  if (audit_ != nullptr) {
    *audit_ << "sample,decision,agmm_confidence,net_confidence,label,alpha3\n";
  }
}

std::size_t Learner::mixture_size() const {
  return config_.agmm_off ? 1 : std::max<std::size_t>(agmm_.size(), 1);
}

Eigen::VectorXd Learner::predict_proba(const Eigen::VectorXd& x) const {
  Eigen::VectorXd p = parsnet::predict_proba(net_, x);
  if (config_.check_invariants) {
    check_unity(p, "softmax output");
  }
  return p;
}

std::size_t Learner::predict(const Eigen::VectorXd& x) const {
  Eigen::Index best = 0;
  predict_proba(x).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

Eigen::VectorXd Learner::expected_hidden() const {
  if (config_.agmm_off) {
    return expected_activation(net_, fallback_mixture_, Eigen::VectorXd::Ones(1));
  }
  return expected_activation(net_, agmm_);
}

void Learner::grow(std::size_t count, StepCounters& c) {
  const std::size_t first = net_.hidden();
  add_nodes(net_, count, init_rng_);
  hedge_.on_units_added(net_, first);
  ++c.grow_events;
  c.nodes_added += count;
}

void Learner::prune(const std::vector<std::size_t>& indices, StepCounters& c) {
  if (indices.empty()) {
    return;
  }
  prune_nodes(net_, indices);
  hedge_.on_units_removed(indices);
  ++c.prune_events;
  c.nodes_pruned += indices.size();
}

bool Learner::structural_update(NsState& ns, const Eigen::VectorXd& target, StepCounters& c) {
  const Eigen::VectorXd e_s = expected_hidden();
  const NsDecomposition d = ns_decompose(e_s, target, net_, ns.phase);
  const bool grow_fired = check_grow(ns, d.bias_sq);
  bool changed = false;
  if (grow_fired) {
    observe_variance(ns, d.variance);
    if (!config_.evolution_off) {
      grow(mixture_size(), c);
      changed = true;
    }
  } else if (check_prune_trigger(ns, d.variance) && !config_.evolution_off && net_.hidden() >= 2) {
    const auto candidates = select_prune_candidates(e_s);
    prune(candidates, c);
    changed = !candidates.empty();
  }
  if (trace_ != nullptr) {
    *trace_ << sample_index_ << ',' << (ns.phase == Phase::generative ? "generative" : "discriminative")
            << ',' << d.bias_sq << ',' << d.variance << ',' << ns.last_kappa << ',' << ns.last_xi << ','
            << net_.hidden() << ',' << (config_.agmm_off ? 0 : agmm_.size()) << '\n';
  }
  return changed;
}

void Learner::labelled_step(const Eigen::VectorXd& x, const Eigen::VectorXd& y, StepCounters& c,
                            SampleOrigin origin) {
  const DiscriminativeStep step = discriminative_step(net_, x, y, config_.lr_disc);
  if (!config_.slash_off) {
    accumulate_importance(hedge_, step.delta, step.grad);
  }
  if (origin == SampleOrigin::true_label) {
    ++c.true_label_steps;
  } else {
    ++c.augmented_steps;
  }
}

void Learner::train_sample(const Eigen::VectorXd& x, std::optional<std::size_t> label,
                           StepCounters& c) {
  // Generative phase on every sample.
  const double recon_error = generative_step(net_, x, config_.lr_gen, config_.mask_fraction, noise_rng_);
  ++c.generative_steps;
  scaler_.observe(recon_error);
  if (config_.agmm_off || !agmm_.empty()) {
    structural_update(gen_ns_, x, c);
  }

  if (!config_.agmm_off) {
    const Agmm::UpdateReport r = agmm_.update(x, gen_ns_.last_kappa, label);
    c.agmm_insertions += r.inserted ? 1 : 0;
    c.agmm_prunes += r.pruned.size();
    if (config_.check_invariants) {
      check_unity(agmm_.mixing_coefficients(x), "mixing coefficients");
    }
  }

  if (label) {
    ++c.labelled;
    const Eigen::VectorXd y = one_hot(*label, num_classes_);
    labelled_step(x, y, c, SampleOrigin::true_label);
    if (!config_.slash_off) {
      labelled_step(augment(x, config_.augment_mode, noise_rng_, range_), y, c, SampleOrigin::augmented);
      snapshot_optimal(hedge_, net_);
    }
    structural_update(disc_ns_, y, c);
    return;
  }

  if (config_.slash_off) {
    return;
  }
  finalize_gamma(hedge_);
  const Eigen::VectorXd probs = predict_proba(x);
  std::optional<Eigen::VectorXd> posterior;
  if (!config_.agmm_off && agmm_.has_labels()) {
    posterior = agmm_.class_posterior(x);
    if (config_.check_invariants) {
      check_unity(*posterior, "class posterior");
    }
  }
  const PseudoDecision decision = try_pseudo_label(probs, posterior, config_.alpha1, config_.alpha2);
  const double alpha3 = scaler_.alpha3(recon_error);
  if (audit_ != nullptr) {
    *audit_ << sample_index_ << ',' << outcome_name(decision.outcome) << ',' << decision.agmm_confidence
            << ',' << decision.net_confidence << ',';
    if (decision.label) {
      *audit_ << decision.label->label;
    }
    *audit_ << ',' << alpha3 << '\n';
  }
  if (decision.label) {
    const Theta addend = hedge_addend(net_, hedge_, alpha3);
    discriminative_step(net_, x, one_hot(decision.label->label, num_classes_), config_.lr_disc, &addend);
    ++c.pseudo_steps;
  }
}

StepCounters Learner::train_on_batch(const Batch& batch) {
  if (batch.input_dim() != input_dim_) {
    throw ValidationError("train_on_batch: batch has " + std::to_string(batch.input_dim()) +
                          " features, learner expects " + std::to_string(input_dim_));
  }
  StepCounters c;
  const bool frozen = config_.freeze_after && batches_trained_ >= *config_.freeze_after;
  if (!frozen) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ++sample_index_;
      const Eigen::VectorXd x = batch.features.row(static_cast<Eigen::Index>(i)).transpose();
      std::optional<std::size_t> label;
      if (!batch.visible.empty() && batch.visible[i] != 0) {
        label = batch.labels[i];
      }
      if (!x.allFinite() || (label && *label >= num_classes_)) {
        ++c.skipped;
        continue;
      }
      ++c.samples;
      train_sample(x, label, c);
    }
  }
  ++batches_trained_;
  return c;
}

// ---------------------------------------------------------------- Normalizer

Normalizer Normalizer::fit(const Eigen::MatrixXd& features) {
  Normalizer n;
  n.lo_ = features.colwise().minCoeff().transpose();
  n.hi_ = features.colwise().maxCoeff().transpose();
  for (Eigen::Index j = 0; j < n.lo_.size(); ++j) {
    if (!(n.hi_[j] > n.lo_[j])) {
      n.hi_[j] = n.lo_[j] + 1.0;
    }
  }
  return n;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd out = features;
  const Eigen::RowVectorXd lo = lo_.transpose();
  const Eigen::RowVectorXd width = (hi_ - lo_).transpose();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r) = ((out.row(r) - lo).array() / width.array()).cwiseMax(0.0).cwiseMin(1.0).matrix();
  }
  return out;
}

// ---------------------------------------------------------------- metrics

ClassMetrics compute_class_metrics(const Confusion& confusion) {
  const std::size_t classes = confusion.size();
  ClassMetrics m;
  m.precision.resize(classes);
  m.recall.resize(classes);
  for (std::size_t o = 0; o < classes; ++o) {
    const std::size_t tp = confusion[o][o];
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      predicted += confusion[k][o];
      actual += confusion[o][k];
    }
    if (predicted > 0) {
      m.precision[o] = static_cast<double>(tp) / static_cast<double>(predicted);
    }
    if (actual > 0) {
      m.recall[o] = static_cast<double>(tp) / static_cast<double>(actual);
    }
  }
  return m;
}

RunMetrics compute_metrics(const Confusion& confusion, std::vector<double> batch_accuracy) {
  RunMetrics m;
  m.confusion = confusion;
  m.class_metrics = compute_class_metrics(confusion);
  m.batch_accuracy = std::move(batch_accuracy);
  if (!m.batch_accuracy.empty()) {
    m.classification_rate = std::accumulate(m.batch_accuracy.begin(), m.batch_accuracy.end(), 0.0) /
                            static_cast<double>(m.batch_accuracy.size());
  }
  return m;
}

RunMetrics prequential_run(const LearnerConfig& config, const StreamScenario& scenario,
                           const RunOptions& options) {
  if (scenario.batches.empty()) {
    throw ValidationError("prequential_run: scenario has no batches");
  }
  const std::size_t dim = scenario.input_dim();
  const std::size_t classes = scenario.num_classes;
  for (std::size_t k = 0; k < scenario.batches.size(); ++k) {
    const Batch& b = scenario.batches[k];
    if (b.input_dim() != dim) {
      throw ValidationError("prequential_run: batch " + std::to_string(k + 1) + " has " +
                            std::to_string(b.input_dim()) + " features, expected " +
                            std::to_string(dim));
    }
    if (static_cast<std::size_t>(b.features.rows()) != b.size()) {
      throw ValidationError("prequential_run: batch " + std::to_string(k + 1) +
                            " has mismatched feature and label counts");
    }
    for (std::size_t y : b.labels) {
      if (y >= classes) {
        throw ValidationError("prequential_run: label " + std::to_string(y) + " in batch " +
                              std::to_string(k + 1) + " exceeds class count");
      }
    }
  }

  std::optional<Normalizer> normalizer;
  if (options.normalize) {
    normalizer = Normalizer::fit(scenario.batches.front().features);
  }

  Learner learner(dim, classes, config);
  learner.set_trace(options.trace);
  learner.set_audit(options.audit);

  Confusion confusion(classes, std::vector<std::size_t>(classes, 0));
  std::vector<double> accuracy;
  RunMetrics run;
  double elapsed = 0.0;

  for (std::size_t k = 0; k < scenario.batches.size(); ++k) {
    const Batch& raw = scenario.batches[k];
    Batch batch = raw;
    if (normalizer) {
      batch.features = normalizer->apply(raw.features);
    }

    // Test: the model must have consumed exactly batches 1..k-1.
    if (learner.batches_trained() != k) {
      throw std::logic_error("prequential_run: test-then-train ordering violated");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t guess =
          learner.predict(batch.features.row(static_cast<Eigen::Index>(i)).transpose());
      confusion[batch.labels[i]][guess] += 1;
      correct += guess == batch.labels[i] ? 1 : 0;
    }
    accuracy.push_back(batch.size() > 0 ? static_cast<double>(correct) / static_cast<double>(batch.size())
                                        : 0.0);

    // Train.
    const auto start = std::chrono::steady_clock::now();
    const StepCounters c = learner.train_on_batch(batch);
    elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    // Single-pass accounting: one generative step per sample, one true and at
    // most one augmented step per labelled sample, at most one pseudo step per
    // unlabelled sample.
    if (c.samples + c.skipped > batch.size() && c.samples > 0) {
      throw std::logic_error("prequential_run: sample visited more than once");
    }
    if (c.generative_steps != c.samples || c.true_label_steps != c.labelled ||
        c.augmented_steps > c.labelled || c.pseudo_steps > c.samples - c.labelled) {
      throw std::logic_error("prequential_run: single-pass step accounting violated");
    }

    run.totals += c;
    run.hidden_trajectory.push_back(learner.hidden_units());
    run.agmm_trajectory.push_back(config.agmm_off ? 0 : learner.agmm().size());
    run.pseudo_per_batch.push_back(c.pseudo_steps);
    run.pseudo_total += c.pseudo_steps;
    run.cumulative_seconds.push_back(elapsed);
  }

  RunMetrics summary = compute_metrics(confusion, std::move(accuracy));
  summary.hidden_trajectory = std::move(run.hidden_trajectory);
  summary.agmm_trajectory = std::move(run.agmm_trajectory);
  summary.pseudo_per_batch = std::move(run.pseudo_per_batch);
  summary.cumulative_seconds = std::move(run.cumulative_seconds);
  summary.pseudo_total = run.pseudo_total;
  summary.training_seconds = elapsed;
  summary.totals = run.totals;
  return summary;
}

} // namespace parsnet
