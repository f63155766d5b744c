#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "parsnet/agmm.hpp"
#include "parsnet/network.hpp"
#include "parsnet/plasticity.hpp"
#include "parsnet/rng.hpp"
#include "parsnet/slash.hpp"

namespace parsnet {

// One chunk of the stream. Ground truth is always stored so the evaluator can
// score predictions; `visible` says whether the learner may see it.
struct Batch {
  Eigen::MatrixXd features;  // N x u, one sample per row
  std::vector<std::size_t> labels;
  std::vector<char> visible;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t labelled_count() const;
};

enum class LabelPolicy { full, sporadic, infinite_delay };

struct StreamScenario {
  std::vector<Batch> batches;
  LabelPolicy policy = LabelPolicy::full;
  double label_fraction = 1.0;
  std::size_t num_classes = 2;

  std::size_t input_dim() const { return batches.empty() ? 0 : batches.front().input_dim(); }
  std::size_t sample_count() const;
  std::size_t labelled_count() const;
};

// Keeps floor(p * N) uniformly chosen labels in every batch, ignoring class
// balance.
StreamScenario make_sporadic(std::vector<Batch> batches, std::size_t num_classes, double p, Rng& rng);
// Labels survive only in the first batch.
StreamScenario make_infinite_delay(std::vector<Batch> batches, std::size_t num_classes);
StreamScenario make_fully_labelled(std::vector<Batch> batches, std::size_t num_classes);

enum class SampleOrigin { true_label, augmented, pseudo, unlabelled };

struct LearnerConfig {
  double alpha1 = 0.55;
  double alpha2 = 0.6;
  double alpha4 = 0.1;
  double lr_gen = 0.01;
  double lr_disc = 0.001;
  double mask_fraction = 0.1;
  std::int64_t prune_grace = 20;
  double epsilon = 1e-8;
  std::size_t initial_hidden = 1;
  // Width used when structural evolution is disabled.
  std::size_t static_hidden = 10;
  AugmentMode augment_mode = AugmentMode::tabular;

  bool agmm_off = false;
  bool evolution_off = false;
  bool slash_off = false;
  // Stop all learning once this many batches have been trained on.
  std::optional<std::size_t> freeze_after;

  // Partition-of-unity checks on every sample.
  bool check_invariants = true;
  std::uint64_t seed = 1;
};

struct StepCounters {
  std::size_t samples = 0;
  std::size_t labelled = 0;
  std::size_t generative_steps = 0;
  std::size_t true_label_steps = 0;
  std::size_t augmented_steps = 0;
  std::size_t pseudo_steps = 0;
  std::size_t skipped = 0;
  std::size_t grow_events = 0;
  std::size_t prune_events = 0;
  std::size_t nodes_added = 0;
  std::size_t nodes_pruned = 0;
  std::size_t agmm_insertions = 0;
  std::size_t agmm_prunes = 0;

  StepCounters& operator+=(const StepCounters& rhs);
};

// The model bundle: network, mixture, significance trackers, hedge state and
// reconstruction scaler, trained one sample at a time.
class Learner {
public:
  Learner(std::size_t input_dim, std::size_t num_classes, LearnerConfig config);

  StepCounters train_on_batch(const Batch& batch);

  Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const;
  std::size_t predict(const Eigen::VectorXd& x) const;

  const NetworkParams& network() const { return net_; }
  const Agmm& agmm() const { return agmm_; }
  const HedgeState& hedge() const { return hedge_; }
  const NsState& generative_ns() const { return gen_ns_; }
  const NsState& discriminative_ns() const { return disc_ns_; }
  const LearnerConfig& config() const { return config_; }
  std::size_t batches_trained() const { return batches_trained_; }
  std::size_t hidden_units() const { return net_.hidden(); }
  // Mixture size driving node addition (1 when the mixture is disabled).
  std::size_t mixture_size() const;

  // Optional CSV sinks. Trace: per-sample bias, variance, kappa, xi, R, M.
  // Audit: per unlabelled sample pseudo-label decision.
  void set_trace(std::ostream* out);
  void set_audit(std::ostream* out);

private:
  void train_sample(const Eigen::VectorXd& x, std::optional<std::size_t> label, StepCounters& c);
  Eigen::VectorXd expected_hidden() const;
  bool structural_update(NsState& ns, const Eigen::VectorXd& target, StepCounters& c);
  void grow(std::size_t count, StepCounters& c);
  void prune(const std::vector<std::size_t>& indices, StepCounters& c);
  void labelled_step(const Eigen::VectorXd& x, const Eigen::VectorXd& y, StepCounters& c,
                     SampleOrigin origin);

  std::size_t input_dim_;
  std::size_t num_classes_;
  LearnerConfig config_;
  Rng init_rng_;
  Rng noise_rng_;
  NetworkParams net_;
  Agmm agmm_;
  NsState gen_ns_{Phase::generative};
  NsState disc_ns_{Phase::discriminative};
  HedgeState hedge_;
  ReconScaler scaler_;
  FeatureRange range_;
  std::vector<GaussianComponent> fallback_mixture_;
  std::size_t batches_trained_ = 0;
  std::uint64_t sample_index_ = 0;
  std::ostream* trace_ = nullptr;
  std::ostream* audit_ = nullptr;
};

// Min-max scaling fitted on the first batch; later values are clipped.
class Normalizer {
public:
  static Normalizer fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;

  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }

private:
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
};

struct ClassMetrics {
  std::vector<std::optional<double>> precision;  // nullopt when undefined
  std::vector<std::optional<double>> recall;
};

using Confusion = std::vector<std::vector<std::size_t>>;  // [truth][predicted]

ClassMetrics compute_class_metrics(const Confusion& confusion);

struct RunMetrics {
  std::vector<double> batch_accuracy;
  double classification_rate = 0.0;  // mean of batch accuracies, in [0, 1]
  Confusion confusion;
  ClassMetrics class_metrics;
  std::vector<std::size_t> hidden_trajectory;  // after each batch
  std::vector<std::size_t> agmm_trajectory;
  std::vector<std::size_t> pseudo_per_batch;
  std::vector<double> cumulative_seconds;
  std::size_t pseudo_total = 0;
  double training_seconds = 0.0;
  StepCounters totals;
};

RunMetrics compute_metrics(const Confusion& confusion, std::vector<double> batch_accuracy);

struct RunOptions {
  bool normalize = true;
  std::ostream* trace = nullptr;
  std::ostream* audit = nullptr;
};

// Test-then-train over every batch exactly once.
RunMetrics prequential_run(const LearnerConfig& config, const StreamScenario& scenario,
                           const RunOptions& options = {});

} // namespace parsnet
