#include "oracles.hpp"

#include "ptocluster/errors.hpp"
#include "ptocluster/pipeline.hpp"
#include "ptocluster/report_io.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace ptoc;

namespace {

struct Small {
  SyntheticData data;
  RunConfig config;
};

Small small_setup(double noise = 0.1, double seasonal = 0.3) {
  SyntheticConfig sc;
  sc.n = 10;
  sc.weeks = 40;
  sc.community_count = 2;
  sc.noise_std = noise;
  sc.seasonal_amp = seasonal;
  sc.seed = 3;
  RunConfig rc;
  rc.window = 4;
  rc.clusters = 2;
  rc.gcn_width = 4;
  rc.fc1 = 32;
  rc.fc2 = 16;
  rc.pretrain_epochs = 60;
  rc.pto_epochs = 3;
  rc.seed = 2;
  return {generate_synthetic(sc), rc};
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("improvement arithmetic") {
  CHECK(improvement(0.539, 0.580) == doctest::Approx(7.6066).epsilon(1e-4));
  CHECK(improvement(0.5, 0.5) == 0.0);
  CHECK(improvement(0.596, 0.623) == doctest::Approx(4.5302).epsilon(1e-4));
  CHECK_THROWS_AS(improvement(0.0, 0.1), NonpositiveBaseline);
  CHECK_THROWS_AS(improvement(-0.2, 0.1), NonpositiveBaseline);
}

TEST_CASE("run config text") {
  RunConfig c;
  c.pto_lr = 3e-5;
  c.clusters = 4;
  c.splits = {0.6, 0.2, 0.2};
  const RunConfig back = parse_run_config(run_config_to_text(c));
  CHECK(back.pto_lr == 3e-5);
  CHECK(back.clusters == 4);
  CHECK(back.splits.val == 0.2);
  CHECK(run_config_to_text(back) == run_config_to_text(c));
  CHECK_THROWS_AS(parse_run_config("clustres = 4\n"), ParseError);
  CHECK_THROWS_AS(parse_run_config("upper_mult = 0.5\n"), ValidationError);
  CHECK(RunConfig{}.shape(35).flat() == 8 * 35 * 10);
}

TEST_CASE("per-sample seeds") {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 200; ++i) seen.insert(sample_seed(1, i));
  CHECK(seen.size() == 200);
  CHECK(sample_seed(1, 5) == sample_seed(1, 5));
  CHECK(sample_seed(1, 5) != sample_seed(2, 5));
}

TEST_CASE("experiment preparation") {
  const Small s = small_setup();
  const Experiment exp = prepare_experiment(s.data.graph, s.data.series, s.config);
  CHECK(exp.dataset.size() == 36);
  CHECK(exp.points.rows() == 10);
  CHECK(exp.train_mean > 0.0);
  OrderSeries wrong = s.data.series;
  wrong.values.conservativeResize(Eigen::NoChange, 9);
  CHECK_THROWS_AS(prepare_experiment(s.data.graph, wrong, s.config), ValidationError);
}

TEST_CASE("pretraining learns a constant series") {
  Small s = small_setup(0.0, 0.0);
  s.config.pretrain_epochs = 500;
  const Experiment exp = prepare_experiment(s.data.graph, s.data.series, s.config);
  const PretrainResult r = pretrain(exp, s.config);
  const auto& reg = r.report.test.regression;
  CHECK(reg.rmse < 0.05 * exp.train_mean);
  CHECK(reg.r2_value() > 0.95);
}

TEST_CASE("pretraining bookkeeping and determinism") {
  const Small s = small_setup();
  const Experiment exp = prepare_experiment(s.data.graph, s.data.series, s.config);
  const PretrainResult a = pretrain(exp, s.config);
  const PretrainResult b = pretrain(exp, s.config);
  CHECK(run_report_to_json(a.report) == run_report_to_json(b.report));
  CHECK(a.params.value == b.params.value);

  double best = 1e300;
  int best_epoch = -1;
  for (const auto& e : a.report.curves) {
    CHECK(std::isfinite(e.train_loss));
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
    }
  }
  CHECK(a.report.best_epoch == best_epoch);
  CHECK(a.report.regime == "pretrain");
}

TEST_CASE("fine-tuning") {
  const Small s = small_setup();
  const Experiment exp = prepare_experiment(s.data.graph, s.data.series, s.config);
  const PretrainResult pre = pretrain(exp, s.config);

  SUBCASE("zero learning rate is a no-op") {
    RunConfig frozen = s.config;
    frozen.pto_lr = 0.0;
    const PtoResult r = train_ptocluster(pre.params, exp, frozen);
    CHECK(r.params.value == pre.params.value);
    CHECK(r.params.input_scale == pre.params.input_scale);
    const RunReport two = run_two_stage(pre.params, exp, frozen);
    CHECK(eval_summary_to_json(r.report.test) == eval_summary_to_json(two.test));
    CHECK(r.report.improvement_pct().value() == 0.0);
  }
  SUBCASE("curves stay within the modularity range and runs repeat") {
    const PtoResult a = train_ptocluster(pre.params, exp, s.config);
    const PtoResult b = train_ptocluster(pre.params, exp, s.config);
    CHECK(run_report_to_json(a.report) == run_report_to_json(b.report));
    CHECK(a.report.curves.size() == 4);
    for (const auto& e : a.report.curves) {
      CHECK(e.train_loss >= -1.0);
      CHECK(e.train_loss <= 1.0);
      CHECK(e.val_loss >= -1.0);
      CHECK(e.val_loss <= 1.0);
    }
    REQUIRE(a.report.baseline.has_value());
    const double q_two = a.report.baseline->mean_hard_q;
    const double q_pto = a.report.test.mean_hard_q;
    CHECK(a.report.improvement_pct().value() == (q_pto - q_two) / q_two * 100.0);
  }
}

TEST_CASE("two-stage evaluation") {
  Small s = small_setup();
  const Experiment exp = prepare_experiment(s.data.graph, s.data.series, s.config);
  PredictorParams p = init_params(s.config.shape(10), 1);
  p.input_scale = exp.train_mean;
  p.value.fc3_b.setConstant(1.0);

  const RunReport a = run_two_stage(p, exp, s.config);
  CHECK(run_report_to_json(a) == run_report_to_json(run_two_stage(p, exp, s.config)));
  CHECK(a.test.samples.size() == exp.dataset.indices(Split::Test).size());
  CHECK(a.test.failed.empty());

  RunConfig one = s.config;
  one.clusters = 1;
  const RunReport single = run_two_stage(p, exp, one);
  for (const auto& o : single.test.samples) {
    CHECK(std::abs(o.hard_q) <= 1e-15);
    CHECK(std::abs(o.soft_q) <= 1e-9);
  }
}

}
