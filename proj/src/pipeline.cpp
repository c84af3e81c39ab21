#include "ptocluster/pipeline.hpp"

#include "ptocluster/errors.hpp"
#include "ptocluster/kv_config.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ptoc {

namespace {

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(std::numeric_limits<double>::max_digits10);
  ss << v;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<Eigen::MatrixXd> gather_inputs(const WindowedDataset& ds, const std::vector<int>& idx) {
  std::vector<Eigen::MatrixXd> xs;
  xs.reserve(idx.size());
  for (int i : idx) xs.push_back(ds.inputs[i]);
  return xs;
}

Eigen::MatrixXd gather_targets(const WindowedDataset& ds, const std::vector<int>& idx) {
  Eigen::MatrixXd t(ds.targets.front().size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) t.col(static_cast<Eigen::Index>(j)) = ds.targets[idx[j]];
  return t;
}

double mean_squared(const Eigen::MatrixXd& y, const Eigen::MatrixXd& t) {
  return (y - t).squaredNorm() / static_cast<double>(y.size());
}

int count_monotonicity_violations(const std::vector<double>& objectives) {
  int violations = 0;
  for (std::size_t k = 1; k < objectives.size(); ++k) {
    const double prev = objectives[k - 1];
    if (objectives[k] > prev + 1e-6 * (1.0 + std::abs(prev))) ++violations;
  }
  return violations;
}

}  // namespace

void RunConfig::validate() const {
  if (window < 1) throw ValidationError("window must be >= 1");
  if (clusters < 1) throw ValidationError("clusters must be >= 1");
  if (gcn_width < 1 || filters < 1 || fc1 < 1 || fc2 < 1) {
    throw ValidationError("layer widths must be >= 1");
  }
  if (!(pretrain_lr >= 0.0) || !(pto_lr >= 0.0) || !(pto_fallback_lr >= 0.0)) {
    throw ValidationError("learning rates must be >= 0");
  }
  if (!(lower_mult >= 0.0) || !(lower_mult <= 1.0) || !(upper_mult >= 1.0)) {
    throw ValidationError("bound multipliers must satisfy 0 <= lower <= 1 <= upper");
  }
  if (!(threshold_km > 0.0)) throw ValidationError("threshold_km must be positive");
  if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
  if (!(lp_tol > 0.0)) throw ValidationError("lp_tol must be positive");
  if (!(splits.train > 0.0) || !(splits.val > 0.0) || !(splits.test > 0.0) ||
      std::abs(splits.train + splits.val + splits.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be positive and sum to 1");
  }
  if (pretrain_epochs < 0 || pto_epochs < 0) throw ValidationError("epoch counts must be >= 0");
  if (pretrain_patience < 1 || pto_divergence_patience < 1 || pto_patience < 0) {
    throw ValidationError("patience values out of range");
  }
}

PredictorShape RunConfig::shape(int aois) const {
  PredictorShape s;
  s.n = aois;
  s.window = window;
  s.gcn_width = gcn_width;
  s.filters = filters;
  s.fc1 = fc1;
  s.fc2 = fc2;
  return s;
}

LayerSettings RunConfig::layer() const {
  LayerSettings s;
  s.clusters = clusters;
  s.lower_mult = lower_mult;
  s.upper_mult = upper_mult;
  s.threshold_km = threshold_km;
  s.max_iter = max_iter;
  s.lp_tol = lp_tol;
  return s;
}

RunConfig parse_run_config(const std::string& text) {
  auto kv = KvConfig::parse(text);
  RunConfig c;
  c.window = kv.get_int("window", c.window);
  c.clusters = kv.get_int("clusters", c.clusters);
  c.gcn_width = kv.get_int("gcn_width", c.gcn_width);
  c.filters = kv.get_int("filters", c.filters);
  c.fc1 = kv.get_int("fc1", c.fc1);
  c.fc2 = kv.get_int("fc2", c.fc2);
  c.pretrain_lr = kv.get_double("pretrain_lr", c.pretrain_lr);
  c.pto_lr = kv.get_double("pto_lr", c.pto_lr);
  c.pto_fallback_lr = kv.get_double("pto_fallback_lr", c.pto_fallback_lr);
  c.lower_mult = kv.get_double("lower_mult", c.lower_mult);
  c.upper_mult = kv.get_double("upper_mult", c.upper_mult);
  c.threshold_km = kv.get_double("threshold_km", c.threshold_km);
  c.max_iter = kv.get_int("max_iter", c.max_iter);
  c.lp_tol = kv.get_double("lp_tol", c.lp_tol);
  c.splits.train = kv.get_double("train_ratio", c.splits.train);
  c.splits.val = kv.get_double("val_ratio", c.splits.val);
  c.splits.test = kv.get_double("test_ratio", c.splits.test);
  c.pretrain_epochs = kv.get_int("pretrain_epochs", c.pretrain_epochs);
  c.pretrain_patience = kv.get_int("pretrain_patience", c.pretrain_patience);
  c.pto_epochs = kv.get_int("pto_epochs", c.pto_epochs);
  c.pto_divergence_patience = kv.get_int("pto_divergence_patience", c.pto_divergence_patience);
  c.pto_patience = kv.get_int("pto_patience", c.pto_patience);
  c.seed = kv.get_u64("seed", c.seed);
  kv.reject_unknown();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_text(const RunConfig& c) {
  std::ostringstream out;
  out << "window = " << c.window << "\n"
      << "clusters = " << c.clusters << "\n"
      << "gcn_width = " << c.gcn_width << "\n"
      << "filters = " << c.filters << "\n"
      << "fc1 = " << c.fc1 << "\n"
      << "fc2 = " << c.fc2 << "\n"
      << "pretrain_lr = " << format_double(c.pretrain_lr) << "\n"
      << "pto_lr = " << format_double(c.pto_lr) << "\n"
      << "pto_fallback_lr = " << format_double(c.pto_fallback_lr) << "\n"
      << "lower_mult = " << format_double(c.lower_mult) << "\n"
      << "upper_mult = " << format_double(c.upper_mult) << "\n"
      << "threshold_km = " << format_double(c.threshold_km) << "\n"
      << "max_iter = " << c.max_iter << "\n"
      << "lp_tol = " << format_double(c.lp_tol) << "\n"
      << "train_ratio = " << format_double(c.splits.train) << "\n"
      << "val_ratio = " << format_double(c.splits.val) << "\n"
      << "test_ratio = " << format_double(c.splits.test) << "\n"
      << "pretrain_epochs = " << c.pretrain_epochs << "\n"
      << "pretrain_patience = " << c.pretrain_patience << "\n"
      << "pto_epochs = " << c.pto_epochs << "\n"
      << "pto_divergence_patience = " << c.pto_divergence_patience << "\n"
      << "pto_patience = " << c.pto_patience << "\n"
      << "seed = " << c.seed << "\n";
  return out.str();
}

Experiment prepare_experiment(const AoiGraph& graph, const OrderSeries& series,
                              const RunConfig& config) {
  config.validate();
  series.validate(graph.size());
  if (config.clusters > graph.size()) throw ValidationError("more clusters than AOIs");
  Experiment exp{graph,
                 normalized_adjacency(graph),
                 project_to_km(graph),
                 modularity_matrix(graph),
                 split(make_windows(series, config.window), config.splits),
                 0.0};
  const auto train = exp.dataset.indices(Split::Train);
  double total = 0.0;
  for (int i : train) total += exp.dataset.targets[i].sum();
  exp.train_mean = total / (static_cast<double>(train.size()) * graph.size());
  return exp;
}

std::uint64_t sample_seed(std::uint64_t run_seed, int sample_index) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(sample_index) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

EvalSummary evaluate(const PredictorParams& params, const Experiment& exp,
                     const RunConfig& config, Split which) {
  const auto idx = exp.dataset.indices(which);
  const auto xs = gather_inputs(exp.dataset, idx);
  const Eigen::MatrixXd Y = predict_batch(params, exp.a_hat, xs);
  const LayerSettings layer = config.layer();

  EvalSummary out;
  std::vector<Eigen::VectorXd> truths;
  std::vector<Eigen::VectorXd> preds;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Eigen::VectorXd y = Y.col(static_cast<Eigen::Index>(j));
    truths.push_back(exp.dataset.targets[idx[j]]);
    preds.push_back(y);
    try {
      const LayerForward lf = layer_forward(exp.points, y, layer, sample_seed(config.seed, idx[j]));
      const HardAssignment hard = harden(lf.result.soft, lf.weights, lf.config);
      SampleOutcome s;
      s.index = idx[j];
      s.soft_q = modularity(lf.result.soft.Z, exp.modularity);
      s.hard_q = modularity(one_hot(hard.labels, config.clusters), exp.modularity);
      s.fractional_share = fractional_row_share(lf.result.soft);
      s.iterations = lf.result.iterations;
      s.bound_violation = hard.violates_bounds();
      s.monotonicity_violations = count_monotonicity_violations(lf.result.objectives);
      s.labels = hard.labels;
      out.samples.push_back(std::move(s));
    } catch (const NumericalError& e) {
      spdlog::warn("{} sample {}: {}", split_name(which), idx[j], e.what());
      out.failed.push_back(idx[j]);
    }
  }
  if (out.samples.empty()) {
    throw NumericalFailure(std::string("every ") + split_name(which) + " sample failed to cluster");
  }
  for (const auto& s : out.samples) {
    out.mean_soft_q += s.soft_q;
    out.mean_hard_q += s.hard_q;
    out.fractional_share += s.fractional_share;
    out.monotonicity_violations += s.monotonicity_violations;
  }
  const double count = static_cast<double>(out.samples.size());
  out.mean_soft_q /= count;
  out.mean_hard_q /= count;
  out.fractional_share /= count;
  out.regression = regression_report(truths, preds);
  return out;
}

std::optional<double> RunReport::improvement_pct() const {
  if (!baseline || !(baseline->mean_hard_q > 0.0)) return std::nullopt;
  return improvement(baseline->mean_hard_q, test.mean_hard_q);
}

PretrainResult pretrain(const Experiment& exp, const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  PredictorParams params = init_params(config.shape(exp.graph.size()), config.seed);
  params.input_scale = exp.train_mean > 0.0 ? exp.train_mean : 1.0;

  const auto train_idx = exp.dataset.indices(Split::Train);
  const auto val_idx = exp.dataset.indices(Split::Val);
  const auto train_x = gather_inputs(exp.dataset, train_idx);
  const auto val_x = gather_inputs(exp.dataset, val_idx);
  const Eigen::MatrixXd train_t = gather_targets(exp.dataset, train_idx);
  const Eigen::MatrixXd val_t = gather_targets(exp.dataset, val_idx);

  RunReport report;
  report.regime = "pretrain";
  report.final_lr = config.pretrain_lr;
  AdamState adam = AdamState::for_params(params, config.pretrain_lr);
  ParamTensors best = params.value;
  double best_val = mean_squared(predict_batch(params, exp.a_hat, val_x), val_t);
  report.curves.push_back(
      {0, mean_squared(predict_batch(params, exp.a_hat, train_x), train_t), best_val, 0.0, 0});
  int since_best = 0;

  for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    params.zero_grad();
    BatchForward fwd = forward_batch(params, exp.a_hat, train_x);
    const double train_loss = mean_squared(fwd.y, train_t);
    const Eigen::MatrixXd g = (fwd.y - train_t) * (2.0 / static_cast<double>(train_t.size()));
    backward(params, fwd.tape, g);
    adam_step(params, adam);

    const double val_loss = mean_squared(predict_batch(params, exp.a_hat, val_x), val_t);
    report.curves.push_back({epoch, train_loss, val_loss, config.pretrain_lr, 0});
    spdlog::debug("pretrain epoch {} train {:.6g} val {:.6g}", epoch, train_loss, val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = params.value;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.pretrain_patience) {
      break;
    }
  }
  params.value = std::move(best);
  params.zero_grad();
  spdlog::info("pretrain: best epoch {} of {}, val mse {:.6g}", report.best_epoch,
               report.curves.back().epoch, best_val);
  report.test = evaluate(params, exp, config, Split::Test);
  report.seconds = seconds_since(start);
  return {std::move(params), std::move(report)};
}

RunReport run_two_stage(const PredictorParams& params, const Experiment& exp,
                        const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.regime = "two_stage";
  report.test = evaluate(params, exp, config, Split::Test);
  report.seconds = seconds_since(start);
  return report;
}

PtoResult train_ptocluster(const PredictorParams& initial, const Experiment& exp,
                           const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  if (!(initial.shape == config.shape(exp.graph.size()))) {
    throw ShapeMismatch("initial parameters do not match the run configuration");
  }
  PredictorParams params = initial;
  params.zero_grad();
  const LayerSettings layer = config.layer();
  const auto train_idx = exp.dataset.indices(Split::Train);

  RunReport report;
  report.regime = "ptocluster";
  report.baseline = evaluate(initial, exp, config, Split::Test);

  const double val0 = -evaluate(params, exp, config, Split::Val).mean_soft_q;
  report.curves.push_back(
      {0, -evaluate(params, exp, config, Split::Train).mean_soft_q, val0, 0.0, 0});
  ParamTensors best = params.value;
  double best_val = val0;
  double prev_val = val0;
  int worsening = 0;
  int since_best = 0;
  double lr = config.pto_lr;
  AdamState adam = AdamState::for_params(params, lr);

  for (int epoch = 1; epoch <= config.pto_epochs; ++epoch) {
    double loss_sum = 0.0;
    int failures = 0;
    for (int i : train_idx) {
      params.zero_grad();
      SampleForward fwd = forward(params, exp.a_hat, exp.dataset.inputs[i]);
      Eigen::VectorXd g_y;
      double q = 0.0;
      try {
        const LayerForward lf = layer_forward(exp.points, fwd.y, layer, sample_seed(config.seed, i));
        q = modularity(lf.result.soft.Z, exp.modularity);
        g_y = layer_backward(lf, -modularity_grad(lf.result.soft.Z, exp.modularity));
      } catch (const NumericalError& e) {
        spdlog::warn("epoch {} sample {} skipped: {}", epoch, i, e.what());
        ++failures;
        continue;
      }
      backward(params, fwd.tape, g_y);
      adam_step(params, adam);
      loss_sum += -q;
    }
    if (failures * 5 > static_cast<int>(train_idx.size())) {
      throw NumericalFailure("more than 20% of training samples failed in epoch " +
                             std::to_string(epoch));
    }
    const double train_loss = loss_sum / static_cast<double>(train_idx.size() - failures);
    const double val_loss = -evaluate(params, exp, config, Split::Val).mean_soft_q;
    report.curves.push_back({epoch, train_loss, val_loss, lr, failures});
    spdlog::info("pto epoch {} lr {:g} train {:.6f} val {:.6f}", epoch, lr, train_loss, val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      best = params.value;
      report.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    worsening = val_loss > prev_val ? worsening + 1 : 0;
    prev_val = val_loss;

    if (!report.fell_back && worsening >= config.pto_divergence_patience) {
      spdlog::info("validation loss rose {} epochs in a row; restarting at lr {:g}", worsening,
                   config.pto_fallback_lr);
      params.value = initial.value;
      lr = config.pto_fallback_lr;
      adam = AdamState::for_params(params, lr);
      report.fell_back = true;
      worsening = 0;
      prev_val = val0;
    }
    if (config.pto_patience > 0 && since_best >= config.pto_patience) break;
  }

  params.value = std::move(best);
  params.zero_grad();
  report.final_lr = lr;
  report.test = evaluate(params, exp, config, Split::Test);
  report.seconds = seconds_since(start);
  return {std::move(params), std::move(report)};
}

double improvement(double q_two, double q_pto) {
  if (!(q_two > 0.0)) throw NonpositiveBaseline("improvement needs a positive baseline modularity");
  return (q_pto - q_two) / q_two * 100.0;
}

}  // namespace ptoc
