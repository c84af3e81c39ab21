#include "oracles.hpp"

#include "ptocluster/assignment_export.hpp"
#include "ptocluster/checkpoint.hpp"
#include "ptocluster/errors.hpp"
#include "ptocluster/kv_config.hpp"
#include "ptocluster/metrics.hpp"
#include "ptocluster/report_io.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>

using namespace ptoc;
using nlohmann::json;

TEST_SUITE("io") {

TEST_CASE("checkpoint round trip") {
  PredictorShape shape;
  shape.n = 7;
  shape.window = 5;
  shape.gcn_width = 4;
  shape.fc1 = 16;
  shape.fc2 = 8;
  PredictorParams p = init_params(shape, 4);
  p.input_scale = 123.25;
  p.value.fc1_b.setConstant(-0.125);
  const std::string bytes = encode_checkpoint(p);
  CHECK(bytes.substr(0, 8) == "PTOCCKPT");
  const PredictorParams back = decode_checkpoint(bytes);
  CHECK(back.shape == shape);
  CHECK(back.input_scale == 123.25);
  CHECK(back.value == p.value);
  CHECK(encode_checkpoint(back) == bytes);

  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), ParseError);

  const auto path = std::filesystem::temp_directory_path() / "ptoc_io_test.ckpt";
  save_checkpoint(p, path);
  CHECK(load_checkpoint(path).value == p.value);
  std::filesystem::remove(path);
}

TEST_CASE("key-value config") {
  KvConfig kv = KvConfig::parse("# comment\nalpha = 3\n  beta=0.5  # trailing\n\nname = x y\n");
  CHECK(kv.get_int("alpha", 0) == 3);
  CHECK(kv.get_double("beta", 0.0) == 0.5);
  CHECK(kv.get_string("name", "") == "x y");
  CHECK(kv.get_int("missing", 7) == 7);
  CHECK_NOTHROW(kv.reject_unknown());

  KvConfig extra = KvConfig::parse("alpha = 1\ngamma = 2\n");
  extra.get_int("alpha", 0);
  CHECK_THROWS_AS(extra.reject_unknown(), ParseError);

  CHECK_THROWS_AS(KvConfig::parse("no equals sign\n"), ParseError);
  CHECK_THROWS_AS(KvConfig::parse("a = 1\na = 2\n"), ParseError);
  KvConfig typed = KvConfig::parse("a = 1.5\n");
  CHECK_THROWS_AS(typed.get_int("a", 0), ParseError);

  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("assignment export") {
  const AoiGraph g = oracle::example_graph();
  HardAssignment hard;
  hard.labels = {0, 0, 0, 1, 1, 1, 1};
  hard.loads = {{3.0, 0.0, 0.5}, {4.0, 0.5, 0.0}};
  Centers centers{Eigen::MatrixXd(2, 2)};
  centers.xy << 0.5, 0.25, 1.0, 2.0;
  ClusterConfig cfg;
  cfg.clusters = 2;
  cfg.lower = 3.5;
  cfg.upper = 3.5;
  SoftAssignment soft{one_hot(hard.labels, 2)};

  const json doc = json::parse(assignment_to_json(hard, centers, &soft, cfg));
  CHECK(doc["labels"] == json(hard.labels));
  CHECK(doc["centers"][1][1] == 2.0);
  CHECK(doc["soft"][4][1] == 1.0);
  CHECK(doc["violations"][0]["deficit"] == 0.5);
  CHECK(doc["violations"][1]["excess"] == 0.5);
  CHECK(!json::parse(assignment_to_json(hard, centers, nullptr, cfg)).contains("soft"));

  const Eigen::VectorXd pred = Eigen::VectorXd::LinSpaced(7, 10.0, 70.0);
  const json geo = json::parse(assignment_to_geojson(g, hard, pred));
  CHECK(geo["type"] == "FeatureCollection");
  REQUIRE(geo["features"].size() == 7);
  const json& f = geo["features"][3];
  CHECK(f["geometry"]["type"] == "Point");
  CHECK(f["geometry"]["coordinates"][0] == g.nodes()[3].lon);
  CHECK(f["properties"]["cluster"] == 1);
  CHECK(f["properties"]["predicted_orders"] == 40.0);
  CHECK_THROWS_AS(assignment_to_geojson(g, hard, pred.head(3)), ShapeMismatch);
}

TEST_CASE("report serialization") {
  RunReport r;
  r.regime = "ptocluster";
  r.curves = {{0, -0.3, -0.31, 1e-5, 0}, {1, -0.32, -0.33, 1e-5, 1}};
  r.best_epoch = 1;
  r.seconds = 12.5;
  EvalSummary base;
  base.mean_hard_q = 0.4;
  r.baseline = base;
  r.test.mean_hard_q = 0.42;
  r.test.regression.rmse = 3.0;
  r.test.regression.mae = 2.0;

  const json doc = json::parse(run_report_to_json(r));
  CHECK(doc["regime"] == "ptocluster");
  CHECK(doc.dump().find("seconds") == std::string::npos);
  CHECK(doc["improvement_pct"].get<double>() == doctest::Approx(5.0));

  const std::string csv = curves_to_csv(r.curves);
  CHECK(csv.rfind("epoch,train_loss,val_loss,lr,failures\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const json m = json::parse(metrics_to_json(r));
  CHECK(m.contains("train/epoch_1/loss"));
  CHECK(m["test/rmse"] == 3.0);

  const auto path = std::filesystem::temp_directory_path() / "ptoc_io_test" / "nested" / "r.json";
  write_text_file(path, "abc");
  CHECK(read_text_file(path) == "abc");
  std::filesystem::remove_all(path.parent_path().parent_path());
}

}
