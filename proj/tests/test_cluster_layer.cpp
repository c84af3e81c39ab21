#include "oracles.hpp"

#include "ptocluster/cluster_layer.hpp"
#include "ptocluster/errors.hpp"
#include "ptocluster/gradcheck.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace ptoc;

namespace {

ClusterConfig bounds(int k, double lower, double upper) {
  ClusterConfig c;
  c.clusters = k;
  c.lower = lower;
  c.upper = upper;
  return c;
}

// Unit square: (0,0), (0,1) on the left; (1,0), (1,1) on the right.
Eigen::MatrixXd square() {
  Eigen::MatrixXd pts(4, 2);
  pts << 0, 0, 0, 1, 1, 0, 1, 1;
  return pts;
}

Eigen::MatrixXd clustered_points(oracle::Rng& rng, int n, int k) {
  Eigen::MatrixXd hubs = oracle::uniform(rng, k, 2, 0.0, 20.0);
  Eigen::MatrixXd pts = oracle::uniform(rng, n, 2, -2.0, 2.0);
  for (int i = 0; i < n; ++i) pts.row(i) += hubs.row(i % k);
  return pts;
}

}  // namespace

TEST_SUITE("cluster_layer") {

TEST_CASE("feasibility") {
  const Eigen::VectorXd four = Eigen::VectorXd::Constant(4, 10.0);
  CHECK_NOTHROW(feasibility_check(four, bounds(2, 15, 25)));
  CHECK_THROWS_AS(feasibility_check(Eigen::VectorXd::Constant(2, 10.0), bounds(2, 15, 25)), InfeasibleBounds);
  Eigen::VectorXd heavy = four;
  heavy << 30, 1, 1, 1;
  CHECK_THROWS_AS(feasibility_check(heavy, bounds(2, 15, 25)), InfeasibleBounds);
  CHECK_THROWS_AS(feasibility_check(four, bounds(2, 30, 25)), ValidationError);
}

TEST_CASE("bounds from weights") {
  Eigen::VectorXd y(4);
  y << 10, 20, 30, 40;
  const ClusterConfig c = ClusterConfig::for_weights(y, 2, 0.7, 1.3);
  CHECK(c.lower == doctest::Approx(35.0));
  CHECK(c.upper == doctest::Approx(65.0));
  y << 1, 1, 1, 97;
  CHECK(ClusterConfig::for_weights(y, 5, 0.7, 1.3).upper == 97.0);
}

TEST_CASE("seeding") {
  oracle::Rng rng(2);
  const Eigen::MatrixXd pts = oracle::uniform(rng, 8, 2, 0.0, 10.0);
  const Eigen::VectorXd y = oracle::uniform(rng, 8, 1, 1.0, 5.0);

  const Centers all = init_centers(pts, y, 8, 3);
  std::set<std::pair<double, double>> picked;
  for (int p = 0; p < 8; ++p) picked.insert({all.xy(p, 0), all.xy(p, 1)});
  CHECK(picked.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(picked.count({pts(i, 0), pts(i, 1)}) == 1);

  Eigen::VectorXd solo = Eigen::VectorXd::Zero(8);
  solo(5) = y.sum();
  CHECK(init_centers(pts, solo, 1, 9).xy.row(0) == pts.row(5));

  CHECK(init_centers(pts, y, 3, 17).xy == init_centers(pts, y, 3, 17).xy);
  CHECK_THROWS_AS(init_centers(pts, y, 9, 1), ValidationError);
}

TEST_CASE("distances") {
  Centers c{Eigen::MatrixXd(2, 2)};
  c.xy << 0, 0, 1, 0;
  Eigen::MatrixXd pts(2, 2);
  pts << 0, 0, 3, 4;
  const Eigen::MatrixXd D = distance_matrix(pts, c);
  CHECK(D(0, 0) == 0.0);
  CHECK(D(0, 1) == 1.0);
  CHECK(D(1, 0) == 5.0);
}

TEST_CASE("assignment LP layout") {
  const Eigen::MatrixXd D = Eigen::MatrixXd::Ones(2, 2);
  const Eigen::VectorXd y = Eigen::Vector2d(1.0, 2.0);
  const LpProblem lp = build_lp(D, y, bounds(2, 0.5, 3.0));
  CHECK(lp.G.rows() == 8);
  CHECK(lp.G.cols() == 4);
  Eigen::MatrixXd A(2, 4);
  A << 1, 1, 0, 0, 0, 0, 1, 1;
  CHECK(lp.A == A);
  CHECK(lp.b == Eigen::VectorXd::Ones(2));
  CHECK(lp.c == Eigen::Vector4d(1, 1, 2, 2));
  // capacity row for cluster 1 picks z_01 and z_11
  CHECK(lp.G.row(1) == Eigen::RowVector4d(0, 1, 0, 2));
  CHECK(lp.G.row(3) == Eigen::RowVector4d(0, -1, 0, -2));
  CHECK(lp.h.head(4) == Eigen::Vector4d(3.0, 3.0, -0.5, -0.5));

  const LpProblem zero = build_lp(D, Eigen::VectorXd::Zero(2), bounds(2, 0.0, 1.0));
  CHECK(zero.c.isZero(0.0));
  const AssignStep s = assign_step(D, Eigen::VectorXd::Zero(2), bounds(2, 0.0, 1.0));
  CHECK((s.soft.Z.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("single cluster") {
  oracle::Rng rng(5);
  const Eigen::MatrixXd D = oracle::uniform(rng, 5, 1, 0.0, 4.0);
  const Eigen::VectorXd y = oracle::uniform(rng, 5, 1, 1.0, 3.0);
  const AssignStep s = assign_step(D, y, bounds(1, 0.0, y.sum()));
  CHECK((s.soft.Z.array() - 1.0).abs().maxCoeff() < 1e-7);
  CHECK(s.solution.objective == doctest::Approx(y.dot(D.col(0))).epsilon(1e-8));
}

TEST_CASE("square corners split left and right") {
  const Eigen::MatrixXd pts = square();
  Centers c{Eigen::MatrixXd(2, 2)};
  c.xy << 0, 0.5, 1, 0.5;
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
  const Eigen::MatrixXd D = distance_matrix(pts, c);
  const AssignStep s = assign_step(D, y, bounds(2, 0.0, 4.0));

  double best = 1e300;
  int best_mask = -1;
  for (int mask = 0; mask < 16; ++mask) {
    double obj = 0.0;
    for (int i = 0; i < 4; ++i) obj += D(i, (mask >> i) & 1);
    if (obj < best - 1e-12) {
      best = obj;
      best_mask = mask;
    }
  }
  CHECK(best_mask == 0b1100);
  CHECK(s.solution.objective == doctest::Approx(best).epsilon(1e-8));
  const HardAssignment h = harden(s.soft, y, bounds(2, 0.0, 4.0));
  CHECK(h.labels == std::vector<int>{0, 0, 1, 1});
  CHECK(fractional_row_share(s.soft) == 0.0);
  CHECK(!h.violates_bounds());
}

TEST_CASE("tight bounds force a fractional row") {
  const Eigen::MatrixXd D = Eigen::MatrixXd::Ones(3, 2);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(3);
  const ClusterConfig cfg = bounds(2, 1.5, 1.95);
  const AssignStep s = assign_step(D, y, cfg);
  const Eigen::VectorXd load = (s.soft.Z.array().colwise() * y.array()).colwise().sum();
  CHECK(load(0) == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(fractional_row_share(s.soft) > 0.0);

  const HardAssignment h = harden(s.soft, y, cfg);
  std::vector<double> loads(2, 0.0);
  for (int i = 0; i < 3; ++i) loads[h.labels[i]] += y(i);
  CHECK(h.violates_bounds());
  for (int p = 0; p < 2; ++p) {
    CHECK(h.loads[p].load == loads[p]);
    CHECK(h.loads[p].excess == doctest::Approx(std::max(0.0, loads[p] - 1.95)));
    CHECK(h.loads[p].deficit == doctest::Approx(std::max(0.0, 1.5 - loads[p])));
  }
}

TEST_CASE("centroid update") {
  oracle::Rng rng(8);
  const Eigen::MatrixXd pts = oracle::uniform(rng, 5, 2, -3.0, 3.0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(5);

  SoftAssignment one{Eigen::MatrixXd::Ones(5, 1)};
  const Centers mean = update_centers(one, ones, pts);
  CHECK((mean.xy.row(0) - pts.colwise().mean()).norm() < 1e-12);

  SoftAssignment pin{Eigen::MatrixXd::Zero(5, 2)};
  pin.Z.col(0).setOnes();
  pin.Z(3, 0) = 0.0;
  pin.Z(3, 1) = 1.0;
  CHECK(update_centers(pin, ones, pts).xy.row(1) == pts.row(3));

  Eigen::MatrixXd two(2, 2);
  two << 0, 0, 2, 0;
  const Centers mid = update_centers(SoftAssignment{Eigen::MatrixXd::Ones(2, 1)}, Eigen::VectorXd::Ones(2), two);
  CHECK(mid.xy.row(0) == Eigen::RowVector2d(1, 0));

  SUBCASE("an empty cluster moves to the farthest weighted point") {
    SoftAssignment lonely{Eigen::MatrixXd::Zero(5, 2)};
    lonely.Z.col(0).setOnes();
    const Centers c = update_centers(lonely, ones, pts);
    const Eigen::RowVector2d centroid = pts.colwise().mean();
    Eigen::Index far = 0;
    (pts.rowwise() - centroid).rowwise().norm().maxCoeff(&far);
    CHECK(c.xy.row(1) == pts.row(far));
  }
}

TEST_CASE("constrained k-means") {
  SUBCASE("fixed point stops after one pass") {
    const Eigen::MatrixXd pts = square();
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
    ClusterConfig cfg = bounds(1, 0.0, 4.0);
    const KMeansResult r = constrained_kmeans(pts, y, cfg);
    CHECK(r.iterations <= 2);
    cfg.threshold_km = 10.0;
    CHECK(constrained_kmeans(pts, y, cfg).iterations == 1);
  }
  SUBCASE("square corners from adjacent seeds") {
    const Eigen::MatrixXd pts = square();
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
    int adjacent = 0;
    int diagonal = 0;
    std::vector<double> objective;
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
      ClusterConfig cfg = bounds(2, 1.5, 2.5);
      cfg.seed = seed;
      const Centers start = init_centers(pts, y, 2, seed);
      const KMeansResult r = constrained_kmeans(pts, y, cfg);
      if ((start.xy.row(0) - start.xy.row(1)).norm() > 1.01) {
        // Opposite corners leave the other two points equidistant: the LP
        // splits them evenly and the iteration settles on a fractional
        // fixed point with a worse objective.
        ++diagonal;
        CHECK(fractional_row_share(r.soft) == doctest::Approx(0.5));
        CHECK(r.objectives.back() > 2.0 + 1e-6);
        continue;
      }
      ++adjacent;
      const HardAssignment h = harden(r.soft, y, cfg);
      const bool left_right = h.labels[0] == h.labels[1] && h.labels[2] == h.labels[3];
      const bool top_bottom = h.labels[0] == h.labels[2] && h.labels[1] == h.labels[3];
      CHECK((left_right || top_bottom));
      CHECK(h.labels[0] != h.labels[3]);
      CHECK(r.iterations <= 2);
      objective.push_back(r.objectives.back());
    }
    CHECK(adjacent > 0);
    for (double o : objective) CHECK(std::abs(o - objective.front()) <= 1e-9);
    CHECK(objective.front() == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(diagonal > 0);
  }
  SUBCASE("iteration cap") {
    oracle::Rng rng(14);
    const Eigen::MatrixXd pts = oracle::uniform(rng, 12, 2, 0.0, 30.0);
    const Eigen::VectorXd y = oracle::uniform(rng, 12, 1, 1.0, 9.0);
    ClusterConfig cfg = ClusterConfig::for_weights(y, 3, 0.7, 1.3);
    cfg.threshold_km = 1e-12;
    cfg.max_iter = 5;
    const KMeansResult r = constrained_kmeans(pts, y, cfg);
    CHECK(r.iterations <= 5);
    CHECK(r.objectives.size() == static_cast<std::size_t>(r.iterations) + 1);
    CHECK(r.movements.size() == static_cast<std::size_t>(r.iterations));
    CHECK(r.context.distances == distance_matrix(pts, r.centers));
  }
}

TEST_CASE("loose bounds reproduce weighted Lloyd") {
  oracle::Rng rng(23);
  int compared = 0;
  for (int trial = 0; trial < 30 && compared < 8; ++trial) {
    const int k = 2 + trial % 2;
    const int n = 6 + trial % 5;
    const Eigen::MatrixXd pts = clustered_points(rng, n, k);
    const Eigen::VectorXd y = oracle::uniform(rng, n, 1, 1.0, 8.0);
    ClusterConfig cfg = bounds(k, 0.0, y.sum());
    cfg.seed = 100 + trial;
    const auto ref = oracle::weighted_lloyd(pts, y, init_centers(pts, y, k, cfg.seed).xy, cfg.threshold_km,
                                            cfg.max_iter);
    if (!ref) continue;
    ++compared;
    const KMeansResult r = constrained_kmeans(pts, y, cfg);
    CHECK(harden(r.soft, y, cfg).labels == *ref);
  }
  CHECK(compared >= 5);
}

TEST_CASE("binding bounds keep soft loads inside the band") {
  oracle::Rng rng(29);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 8 + trial;
    const Eigen::MatrixXd pts = clustered_points(rng, n, 3);
    Eigen::VectorXd y = oracle::uniform(rng, n, 1, 1.0, 10.0);
    ClusterConfig cfg = ClusterConfig::for_weights(y, 3, 0.9, 1.1);
    cfg.seed = trial;
    const KMeansResult r = constrained_kmeans(pts, y, cfg);
    const Eigen::VectorXd load = (r.soft.Z.array().colwise() * y.array()).colwise().sum();
    const double slack = 1e-4 * y.sum();
    CHECK(load.minCoeff() >= cfg.lower - slack);
    CHECK(load.maxCoeff() <= cfg.upper + slack);
    CHECK((r.soft.Z.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-6);
    CHECK(r.soft.Z.minCoeff() >= -1e-8);
  }
}

TEST_CASE("hardening") {
  SoftAssignment s{Eigen::MatrixXd(3, 2)};
  s.Z << 0.5, 0.5, 0.2, 0.8, 1, 0;
  const HardAssignment h = harden(s, Eigen::VectorXd::Ones(3), bounds(2, 1.0, 2.0));
  CHECK(h.labels == std::vector<int>{0, 1, 0});
  CHECK(!h.violates_bounds());
  CHECK(fractional_row_share(s) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("vector-jacobian product") {
  oracle::Rng rng(37);
  const Eigen::MatrixXd pts = clustered_points(rng, 7, 2);
  const Eigen::VectorXd y = oracle::uniform(rng, 7, 1, 1.0, 6.0);

  SUBCASE("zero upstream") {
    ClusterConfig cfg = ClusterConfig::for_weights(y, 2, 0.7, 1.3);
    const KMeansResult r = constrained_kmeans(pts, y, cfg);
    CHECK(backward_vjp(r.context, Eigen::MatrixXd::Zero(7, 2)).isZero(0.0));
  }
  SUBCASE("single cluster") {
    const KMeansResult r = constrained_kmeans(pts, y, bounds(1, 0.0, y.sum()));
    CHECK(backward_vjp(r.context, oracle::uniform(rng, 7, 1, -1, 1)).isZero(0.0));
  }
  SUBCASE("linear in the upstream gradient") {
    for (int k : {2, 3}) {
      ClusterConfig cfg = ClusterConfig::for_weights(y, k, 0.7, 1.3);
      const KMeansResult r = constrained_kmeans(pts, y, cfg);
      const Eigen::MatrixXd g1 = oracle::uniform(rng, 7, k, -1, 1);
      const Eigen::MatrixXd g2 = oracle::uniform(rng, 7, k, -1, 1);
      const double a = 0.7, b = -1.9;
      const Eigen::VectorXd lhs = backward_vjp(r.context, a * g1 + b * g2);
      const Eigen::VectorXd rhs = a * backward_vjp(r.context, g1) + b * backward_vjp(r.context, g2);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
    }
  }
  SUBCASE("shape mismatch") {
    const KMeansResult r = constrained_kmeans(pts, y, ClusterConfig::for_weights(y, 2, 0.7, 1.3));
    CHECK_THROWS_AS(backward_vjp(r.context, Eigen::MatrixXd::Zero(7, 3)), ShapeMismatch);
  }
}

TEST_CASE("finite-difference checks of the solver sensitivities") {
  for (const auto& r : gradcheck_lp(3)) {
    INFO(r.item << " err " << r.max_error << " checked " << r.checked);
    CHECK(r.passed());
  }
  for (const auto& r : gradcheck_end_to_end(3)) {
    INFO(r.item << " err " << r.max_error);
    CHECK(r.passed());
  }
}

TEST_CASE("layer clamps nonpositive predictions") {
  oracle::Rng rng(43);
  const Eigen::MatrixXd pts = clustered_points(rng, 8, 2);
  Eigen::VectorXd y = oracle::uniform(rng, 8, 1, 1.0, 6.0);
  y(2) = -4.0;
  y(5) = 0.0;
  LayerSettings settings;
  settings.clusters = 2;
  const LayerForward fw = layer_forward(pts, y, settings, 7);
  CHECK(fw.weights(2) == kMinLayerWeight);
  CHECK(fw.weights(5) == kMinLayerWeight);
  CHECK(fw.clamped[2]);
  CHECK(!fw.clamped[0]);
  const Eigen::VectorXd g = layer_backward(fw, oracle::uniform(rng, 8, 2, -1, 1));
  CHECK(g(2) == 0.0);
  CHECK(g(5) == 0.0);
  CHECK(fw.config.lower == doctest::Approx(0.7 * fw.weights.sum() / 2));
}

}
