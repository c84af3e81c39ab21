#include "oracles.hpp"

#include "ptocluster/aoi_data.hpp"
#include "ptocluster/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ptoc;

namespace {

std::filesystem::path data_file(const char* name) { return std::filesystem::path(PTOC_TEST_DATA) / name; }

AoiGraph two_nodes() { return AoiGraph::from_edges({{0, 114.0, 22.5}, {1, 114.01, 22.5}}, {{0, 1}}); }

OrderSeries ramp(int weeks, int n) {
  OrderSeries s;
  s.values.resize(weeks, n);
  for (int t = 0; t < weeks; ++t)
    for (int i = 0; i < n; ++i) s.values(t, i) = 100.0 * t + i;
  return s;
}

}  // namespace

TEST_SUITE("aoi_data") {

TEST_CASE("graph file reproduces the example adjacency") {
  const AoiGraph g = load_graph(data_file("example_graph.json"));
  CHECK(g.size() == 7);
  CHECK(g.adjacency() == oracle::example_adjacency());
  CHECK(g.edge_count() == 9);
  CHECK(g.connected());
}

TEST_CASE("single edge") {
  const AoiGraph g = two_nodes();
  Eigen::MatrixXd expect(2, 2);
  expect << 0, 1, 1, 0;
  CHECK(g.adjacency() == expect);
}

TEST_CASE("asymmetric adjacency is rejected") {
  CHECK_THROWS_AS(load_graph(data_file("asymmetric_graph.json")), ValidationError);
}

TEST_CASE("malformed graph json") {
  CHECK_THROWS_AS(parse_graph_json("{"), ParseError);
  CHECK_THROWS_AS(parse_graph_json(R"({"nodes": []})"), ParseError);
  CHECK_THROWS_AS(parse_graph_json(R"({"nodes": [{"id": 0, "lon": 0, "lat": 0}], "edges": [[0, 0]]})"),
                  ValidationError);
  CHECK_THROWS_AS(load_graph(data_file("missing.json")), ParseError);
}

TEST_CASE("graph json round trip") {
  const AoiGraph g = oracle::example_graph();
  const AoiGraph back = parse_graph_json(graph_to_json(g));
  CHECK(back.adjacency() == g.adjacency());
  for (int i = 0; i < g.size(); ++i) {
    CHECK(back.nodes()[i].lon == g.nodes()[i].lon);
    CHECK(back.nodes()[i].lat == g.nodes()[i].lat);
  }
}

TEST_CASE("normalized adjacency") {
  SUBCASE("no edges gives the identity") {
    // AoiGraph insists on an edge, so go through the matrix directly.
    const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
    const Eigen::MatrixXd at = a + Eigen::MatrixXd::Identity(3, 3);
    const Eigen::VectorXd d = at.rowwise().sum().cwiseSqrt().cwiseInverse();
    CHECK((d.asDiagonal() * at * d.asDiagonal()).isIdentity(0.0));
  }
  SUBCASE("two nodes") {
    const Eigen::MatrixXd a_hat = normalized_adjacency(two_nodes());
    CHECK((a_hat.array() - 0.5).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("example graph") {
    const Eigen::MatrixXd a_hat = normalized_adjacency(oracle::example_graph());
    CHECK(a_hat(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    // nodes 0 and 1 have degrees 2 and 3
    CHECK(a_hat(0, 1) == doctest::Approx(1.0 / std::sqrt(12.0)).epsilon(1e-15));
  }
}

TEST_CASE("normalized adjacency is symmetric with spectral radius at most one") {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 8;
    const Eigen::MatrixXd adj = oracle::random_adjacency(rng, n, 0.4);
    std::vector<AoiNode> nodes;
    for (int i = 0; i < n; ++i) nodes.push_back({i, 114.0 + 0.01 * i, 22.5});
    const Eigen::MatrixXd a_hat = normalized_adjacency(AoiGraph(nodes, adj));
    CHECK((a_hat - a_hat.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0) + oracle::uniform(rng, n, 1, 0, 0.1);
    double rho = 0.0;
    for (int it = 0; it < 500; ++it) {
      const Eigen::VectorXd next = a_hat * v;
      rho = next.norm() / v.norm();
      v = next / next.norm();
    }
    CHECK(rho <= 1.0 + 1e-9);
  }
}

TEST_CASE("projection to km") {
  std::vector<AoiNode> nodes{{0, 114.0, 22.49}, {1, 114.0, 22.50}, {2, 114.0, 22.51}};
  const AoiGraph g = AoiGraph::from_edges(nodes, {{0, 1}, {1, 2}});
  const Eigen::MatrixXd xy = project_to_km(g);
  CHECK(xy(1, 0) == doctest::Approx(0.0));
  CHECK(xy(1, 1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(xy(2, 1) == doctest::Approx(6371.0 * 0.01 * std::numbers::pi / 180.0).epsilon(1e-6));
  CHECK(xy(2, 1) == doctest::Approx(1.112).epsilon(1e-3));

  const AoiGraph twin = AoiGraph::from_edges({{0, 114.0, 22.5}, {1, 114.0, 22.5}}, {{0, 1}});
  const Eigen::MatrixXd p = project_to_km(twin);
  CHECK(p.row(0) == p.row(1));
}

TEST_CASE("windows") {
  CHECK(make_windows(ramp(116, 3), 10).size() == 106);
  CHECK(make_windows(ramp(117, 3), 10).size() == 107);
  CHECK_THROWS_AS(make_windows(ramp(10, 3), 10), WindowTooLong);

  const OrderSeries s = ramp(30, 4);
  const WindowedDataset d = make_windows(s, 5);
  // Reassemble the series from the first column of every input plus the
  // tail of the last sample.
  Eigen::MatrixXd rebuilt(s.weeks(), s.aois());
  for (int k = 0; k < d.size(); ++k) rebuilt.row(k) = d.inputs[k].col(0).transpose();
  for (int t = 1; t < d.window; ++t) rebuilt.row(d.size() - 1 + t) = d.inputs.back().col(t).transpose();
  rebuilt.row(s.weeks() - 1) = d.targets.back().transpose();
  CHECK(rebuilt == s.values);
  for (int k = 0; k < d.size(); ++k) CHECK(d.targets[k] == s.values.row(k + d.window).transpose());
}

TEST_CASE("chronological split") {
  auto counts = [](const WindowedDataset& d) {
    return std::array<std::size_t, 3>{d.indices(Split::Train).size(), d.indices(Split::Val).size(),
                                      d.indices(Split::Test).size()};
  };
  CHECK(counts(split(make_windows(ramp(116, 2), 10))) == std::array<std::size_t, 3>{74, 10, 22});
  CHECK(counts(split(make_windows(ramp(20, 2), 10))) == std::array<std::size_t, 3>{7, 1, 2});
  CHECK_THROWS_AS(split(make_windows(ramp(12, 2), 10)), EmptySplit);

  const WindowedDataset d = split(make_windows(ramp(117, 2), 10));
  int last = -1;
  for (Split which : {Split::Train, Split::Val, Split::Test}) {
    for (int k : d.indices(which)) {
      CHECK(k == last + 1);
      last = k;
    }
  }
  CHECK(last == d.size() - 1);
}

TEST_CASE("series csv") {
  const OrderSeries s = ramp(4, 3);
  const OrderSeries back = parse_series_csv(series_to_csv(s));
  CHECK(back.values == s.values);
  CHECK_THROWS_AS(parse_series_csv("0,1\n1,x\n"), ParseError);
  CHECK_THROWS_AS(parse_series_csv("0,1\n1\n"), ParseError);
  CHECK_THROWS_AS(parse_series_csv("a,b\n1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_series_csv("0,1\n1,-2\n"), ValidationError);
  CHECK_THROWS_AS(back.validate(4), ValidationError);
}

TEST_CASE("synthetic generator") {
  SyntheticConfig cfg;
  cfg.n = 12;
  cfg.weeks = 24;
  cfg.community_count = 3;
  cfg.seed = 5;
  const SyntheticData a = generate_synthetic(cfg);
  const SyntheticData b = generate_synthetic(cfg);
  CHECK(graph_to_json(a.graph) == graph_to_json(b.graph));
  CHECK(series_to_csv(a.series) == series_to_csv(b.series));
  CHECK(a.seed_used == b.seed_used);

  cfg.noise_std = 0.0;
  cfg.seasonal_amp = 0.0;
  const SyntheticData flat = generate_synthetic(cfg);
  for (int i = 0; i < cfg.n; ++i) {
    const auto col = flat.series.values.col(i);
    CHECK(col.maxCoeff() == col.minCoeff());
    CHECK(col(0) >= cfg.base_min);
    CHECK(col(0) <= cfg.base_max);
  }

  const SyntheticData full = generate_synthetic(SyntheticConfig{});
  CHECK(full.graph.size() == 35);
  CHECK(full.series.weeks() == 117);
  CHECK(full.graph.connected());
}

TEST_CASE("synthetic config text") {
  SyntheticConfig cfg;
  cfg.n = 9;
  cfg.noise_std = 0.25;
  const SyntheticConfig back = parse_synthetic_config(synthetic_config_to_text(cfg));
  CHECK(back.n == 9);
  CHECK(back.noise_std == 0.25);
  CHECK_THROWS_AS(parse_synthetic_config("n = 10\nbogus = 1\n"), ParseError);
  CHECK_THROWS_AS(parse_synthetic_config("n = 2\n"), ValidationError);
  CHECK_THROWS_AS(parse_synthetic_config("n = ten\n"), ParseError);
}

}
