#pragma once

#include "ptocluster/aoi_data.hpp"
#include "ptocluster/cluster_layer.hpp"
#include "ptocluster/metrics.hpp"
#include "ptocluster/predictor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ptoc {

// Every knob of a run. Defaults are the 35-AOI column of the reference
// configuration.
struct RunConfig {
  int window = 10;
  int clusters = 5;
  int gcn_width = 10;
  int filters = 8;
  int fc1 = 1024;
  int fc2 = 512;
  double pretrain_lr = 1e-3;
  double pto_lr = 1e-5;
  double pto_fallback_lr = 1e-6;
  double lower_mult = 0.7;
  double upper_mult = 1.3;
  double threshold_km = 2.0;
  int max_iter = 5;
  double lp_tol = kDefaultLpTol;
  SplitRatios splits;
  int pretrain_epochs = 500;
  int pretrain_patience = 20;
  int pto_epochs = 100;
  int pto_divergence_patience = 10;
  // Stop fine-tuning after this many epochs without a new best validation
  // loss; 0 disables.
  int pto_patience = 0;
  std::uint64_t seed = 1;

  void validate() const;
  PredictorShape shape(int aois) const;
  LayerSettings layer() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_text(const RunConfig& config);

// Everything derived once from (graph, series, config).
struct Experiment {
  AoiGraph graph;
  Eigen::MatrixXd a_hat;
  Eigen::MatrixXd points;  // n x 2 km
  ModularityMatrix modularity;
  WindowedDataset dataset;
  double train_mean = 0.0;  // mean order count over training targets
};

Experiment prepare_experiment(const AoiGraph& graph, const OrderSeries& series,
                              const RunConfig& config);

// Per-sample seed for center initialization, shared by every regime so
// that two-stage and fine-tuned evaluations start from the same draw.
std::uint64_t sample_seed(std::uint64_t run_seed, int sample_index);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  int failures = 0;
};

struct SampleOutcome {
  int index = 0;
  double soft_q = 0.0;
  double hard_q = 0.0;
  double fractional_share = 0.0;
  int iterations = 0;
  bool bound_violation = false;
  int monotonicity_violations = 0;
  std::vector<int> labels;
};

struct EvalSummary {
  std::vector<SampleOutcome> samples;
  std::vector<int> failed;  // sample indices whose layer solve failed
  double mean_soft_q = 0.0;
  double mean_hard_q = 0.0;
  double fractional_share = 0.0;
  int monotonicity_violations = 0;
  RegressionReport regression;
};

// Predict, cluster, and score every sample of `which`.
EvalSummary evaluate(const PredictorParams& params, const Experiment& exp,
                     const RunConfig& config, Split which);

struct RunReport {
  std::string regime;  // "pretrain", "two_stage" or "ptocluster"
  std::vector<EpochRecord> curves;
  int best_epoch = 0;
  double final_lr = 0.0;
  bool fell_back = false;
  std::optional<EvalSummary> baseline;  // two-stage evaluation of the initial params
  EvalSummary test;
  double seconds = 0.0;  // wall time, kept out of the serialized report

  std::optional<double> improvement_pct() const;
};

struct PretrainResult {
  PredictorParams params;
  RunReport report;
};

// Full-batch Adam on MSE with early stopping on validation MSE. Returns the
// best-validation parameters.
PretrainResult pretrain(const Experiment& exp, const RunConfig& config);

// Frozen predictor followed by the clustering layer on the test split.
RunReport run_two_stage(const PredictorParams& params, const Experiment& exp,
                        const RunConfig& config);

struct PtoResult {
  PredictorParams params;
  RunReport report;
};

// Per-sample Adam on -Q(soft Z) through the clustering layer, starting from
// `initial`. Epoch 0 (the initial parameters) competes for best validation
// loss.
PtoResult train_ptocluster(const PredictorParams& initial, const Experiment& exp,
                           const RunConfig& config);

// (q_pto - q_two) / q_two * 100. Throws NonpositiveBaseline when q_two <= 0.
double improvement(double q_two, double q_pto);

}  // namespace ptoc
