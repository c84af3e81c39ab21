#include "ptocluster/aoi_data.hpp"

#include "ptocluster/errors.hpp"
#include "ptocluster/kv_config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

namespace ptoc {

using json = nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

AoiGraph::AoiGraph(std::vector<AoiNode> nodes, Eigen::MatrixXd adjacency)
    : nodes_(std::move(nodes)), adjacency_(std::move(adjacency)) {
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  if (n == 0) throw ValidationError("graph has no nodes");
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& node = nodes_[i];
    if (node.id != i) throw ValidationError("node ids must be dense 0..n-1 in order");
    if (!(node.lat >= -90.0 && node.lat <= 90.0)) {
      throw ValidationError("node " + std::to_string(i) + ": latitude out of [-90, 90]");
    }
    if (!(node.lon >= -180.0 && node.lon <= 180.0)) {
      throw ValidationError("node " + std::to_string(i) + ": longitude out of [-180, 180]");
    }
  }
  if (adjacency_.rows() != n || adjacency_.cols() != n) {
    throw ValidationError("adjacency must be square with one row per node");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adjacency_(i, i) != 0.0) throw ValidationError("adjacency diagonal must be zero");
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = adjacency_(i, j);
      if (a != 0.0 && a != 1.0) throw ValidationError("adjacency must be binary");
      if (a != adjacency_(j, i)) throw ValidationError("adjacency must be symmetric");
    }
  }
  if (adjacency_.sum() == 0.0) throw ValidationError("graph must have at least one edge");
}

AoiGraph AoiGraph::from_edges(std::vector<AoiNode> nodes,
                              const std::vector<std::pair<int, int>>& edges) {
  const int n = static_cast<int>(nodes.size());
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw ValidationError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                            ") references a missing node");
    }
    if (i == j) throw ValidationError("self-loop on node " + std::to_string(i));
    adj(i, j) = 1.0;
    adj(j, i) = 1.0;
  }
  return AoiGraph(std::move(nodes), std::move(adj));
}

int AoiGraph::edge_count() const { return static_cast<int>(adjacency_.sum() / 2.0); }

bool AoiGraph::connected() const {
  const int n = size();
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int visited = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < n; ++v) {
      if (adjacency_(u, v) != 0.0 && !seen[v]) {
        seen[v] = 1;
        ++visited;
        q.push(v);
      }
    }
  }
  return visited == n;
}

std::vector<std::pair<int, int>> AoiGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < size(); ++i) {
    for (int j = i + 1; j < size(); ++j) {
      if (adjacency_(i, j) != 0.0) out.emplace_back(i, j);
    }
  }
  return out;
}

AoiGraph parse_graph_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("graph json: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw ParseError("graph json: expected an object with a \"nodes\" array");
  }
  std::vector<AoiNode> nodes;
  try {
    for (const auto& jn : doc["nodes"]) {
      nodes.push_back({jn.at("id").get<int>(), jn.at("lon").get<double>(),
                       jn.at("lat").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph json node: ") + e.what());
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const AoiNode& a, const AoiNode& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != static_cast<int>(i)) {
      throw ValidationError("node ids must be unique and dense 0..n-1");
    }
  }

  if (doc.contains("adjacency")) {
    const auto& rows = doc["adjacency"];
    const auto n = static_cast<Eigen::Index>(nodes.size());
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n) {
      throw ValidationError("adjacency must be square with one row per node");
    }
    Eigen::MatrixXd adj(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!rows[i].is_array() || static_cast<Eigen::Index>(rows[i].size()) != n) {
        throw ValidationError("adjacency must be square with one row per node");
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!rows[i][j].is_number()) throw ParseError("adjacency entries must be numbers");
        adj(i, j) = rows[i][j].get<double>();
      }
    }
    return AoiGraph(std::move(nodes), std::move(adj));
  }

  if (!doc.contains("edges") || !doc["edges"].is_array()) {
    throw ParseError("graph json: expected an \"edges\" array or an \"adjacency\" matrix");
  }
  std::vector<std::pair<int, int>> edges;
  try {
    for (const auto& e : doc["edges"]) {
      if (!e.is_array() || e.size() != 2) throw ParseError("edges must be [i, j] pairs");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph json edge: ") + e.what());
  }
  return AoiGraph::from_edges(std::move(nodes), edges);
}

AoiGraph load_graph(const std::filesystem::path& path) {
  return parse_graph_json(read_file(path));
}

std::string graph_to_json(const AoiGraph& graph) {
  json doc;
  doc["nodes"] = json::array();
  for (const auto& node : graph.nodes()) {
    doc["nodes"].push_back({{"id", node.id}, {"lon", node.lon}, {"lat", node.lat}});
  }
  doc["edges"] = json::array();
  for (auto [i, j] : graph.edges()) doc["edges"].push_back({i, j});
  return doc.dump(1) + "\n";
}

void save_graph(const AoiGraph& graph, const std::filesystem::path& path) {
  write_file(path, graph_to_json(graph));
}

Eigen::MatrixXd normalized_adjacency(const AoiGraph& graph) {
  const int n = graph.size();
  Eigen::MatrixXd a_tilde = graph.adjacency() + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd inv_sqrt_deg = a_tilde.rowwise().sum().array().rsqrt();
  return inv_sqrt_deg.asDiagonal() * a_tilde * inv_sqrt_deg.asDiagonal();
}

Eigen::MatrixXd project_to_km(const AoiGraph& graph) {
  const int n = graph.size();
  double lon0 = 0.0;
  double lat0 = 0.0;
  for (const auto& node : graph.nodes()) {
    lon0 += node.lon;
    lat0 += node.lat;
  }
  lon0 /= n;
  lat0 /= n;
  constexpr double deg = std::numbers::pi / 180.0;
  const double cos_lat0 = std::cos(lat0 * deg);
  Eigen::MatrixXd out(n, 2);
  for (int i = 0; i < n; ++i) {
    const auto& node = graph.nodes()[i];
    out(i, 0) = kEarthRadiusKm * (node.lon - lon0) * cos_lat0 * deg;
    out(i, 1) = kEarthRadiusKm * (node.lat - lat0) * deg;
  }
  return out;
}

void OrderSeries::validate(int expected_aois) const {
  if (aois() != expected_aois) {
    throw ValidationError("series has " + std::to_string(aois()) + " columns, graph has " +
                          std::to_string(expected_aois) + " nodes");
  }
  if (weeks() == 0) throw ValidationError("series has no rows");
  if (!values.allFinite() || values.minCoeff() < 0.0) {
    throw ValidationError("series entries must be finite and nonnegative");
  }
}

OrderSeries parse_series_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("series csv: missing header");

  auto split_line = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(std::remove_if(cell.begin(), cell.end(),
                                [](char c) { return c == '\r' || c == ' ' || c == '"'; }),
                 cell.end());
      cells.push_back(cell);
    }
    return cells;
  };

  const auto header = split_line(line);
  const auto n = static_cast<int>(header.size());
  std::vector<int> column_of(n, -1);
  for (int c = 0; c < n; ++c) {
    int id = -1;
    try {
      std::size_t used = 0;
      id = std::stoi(header[c], &used);
      if (used != header[c].size()) id = -1;
    } catch (const std::exception&) {
      id = -1;
    }
    if (id < 0 || id >= n || column_of[id] != -1) {
      throw ParseError("series csv: header must be the AOI ids 0..n-1");
    }
    column_of[id] = c;
  }

  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != n) {
      throw ParseError("series csv line " + std::to_string(lineno) + ": expected " +
                       std::to_string(n) + " values");
    }
    std::vector<double> row(n);
    for (int c = 0; c < n; ++c) {
      try {
        std::size_t used = 0;
        row[c] = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument(cells[c]);
      } catch (const std::exception&) {
        throw ParseError("series csv line " + std::to_string(lineno) + ": bad number '" +
                         cells[c] + "'");
      }
    }
    rows.push_back(std::move(row));
  }

  OrderSeries series;
  series.values.resize(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (int id = 0; id < n; ++id) series.values(t, id) = rows[t][column_of[id]];
  }
  series.validate(n);
  return series;
}

OrderSeries load_series(const std::filesystem::path& path) {
  return parse_series_csv(read_file(path));
}

std::string series_to_csv(const OrderSeries& series) {
  std::ostringstream out;
  for (int i = 0; i < series.aois(); ++i) out << (i ? "," : "") << i;
  out << "\n";
  for (int t = 0; t < series.weeks(); ++t) {
    for (int i = 0; i < series.aois(); ++i) {
      out << (i ? "," : "") << format_double(series.values(t, i));
    }
    out << "\n";
  }
  return out.str();
}

void save_series(const OrderSeries& series, const std::filesystem::path& path) {
  write_file(path, series_to_csv(series));
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "unassigned";
}

std::vector<int> WindowedDataset::indices(Split which) const {
  std::vector<int> out;
  for (int s = 0; s < size(); ++s) {
    if (tags[s] == which) out.push_back(s);
  }
  return out;
}

WindowedDataset make_windows(const OrderSeries& series, int window) {
  if (window < 1) throw ValidationError("window length must be positive");
  if (window >= series.weeks()) {
    throw WindowTooLong("window " + std::to_string(window) + " needs more than " +
                        std::to_string(series.weeks()) + " weeks");
  }
  WindowedDataset ds;
  ds.window = window;
  const int samples = series.weeks() - window;
  for (int s = 0; s < samples; ++s) {
    ds.inputs.push_back(series.values.middleRows(s, window).transpose());
    ds.targets.push_back(series.values.row(s + window).transpose());
    ds.tags.push_back(Split::Unassigned);
  }
  return ds;
}

WindowedDataset split(WindowedDataset dataset, const SplitRatios& ratios) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be nonnegative and sum to 1");
  }
  const int s = dataset.size();
  // The small epsilon keeps products such as 0.7 * 10 from flooring to 6.
  const int n_train = static_cast<int>(std::floor(ratios.train * s + 1e-9));
  const int n_val = static_cast<int>(std::floor(ratios.val * s + 1e-9));
  const int n_test = s - n_train - n_val;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    throw EmptySplit("cannot split " + std::to_string(s) + " samples into nonempty parts");
  }
  for (int i = 0; i < s; ++i) {
    dataset.tags[i] = i < n_train ? Split::Train
                      : i < n_train + n_val ? Split::Val
                                            : Split::Test;
  }
  return dataset;
}

void SyntheticConfig::validate() const {
  if (n < 4) throw ValidationError("synthetic n must be >= 4");
  if (weeks < 20) throw ValidationError("synthetic weeks must be >= 20");
  if (!(base_min > 0.0) || !(base_max >= base_min)) {
    throw ValidationError("synthetic base range must be positive with min <= max");
  }
  if (seasonal_amp < 0.0 || seasonal_amp >= 1.0) {
    throw ValidationError("seasonal_amp must lie in [0, 1)");
  }
  if (noise_std < 0.0) throw ValidationError("noise_std must be >= 0");
  if (community_count < 1 || community_count > n) {
    throw ValidationError("community_count must lie in [1, n]");
  }
  if (!(spacing_km > 0.0)) throw ValidationError("spacing_km must be positive");
}

SyntheticConfig parse_synthetic_config(const std::string& text) {
  auto kv = KvConfig::parse(text);
  SyntheticConfig cfg;
  cfg.n = kv.get_int("n", cfg.n);
  cfg.weeks = kv.get_int("weeks", cfg.weeks);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.base_min = kv.get_double("base_min", cfg.base_min);
  cfg.base_max = kv.get_double("base_max", cfg.base_max);
  cfg.seasonal_amp = kv.get_double("seasonal_amp", cfg.seasonal_amp);
  cfg.noise_std = kv.get_double("noise_std", cfg.noise_std);
  cfg.community_count = kv.get_int("community_count", cfg.community_count);
  cfg.spacing_km = kv.get_double("spacing_km", cfg.spacing_km);
  cfg.origin_lon = kv.get_double("origin_lon", cfg.origin_lon);
  cfg.origin_lat = kv.get_double("origin_lat", cfg.origin_lat);
  kv.reject_unknown();
  cfg.validate();
  return cfg;
}

SyntheticConfig load_synthetic_config(const std::filesystem::path& path) {
  return parse_synthetic_config(read_file(path));
}

std::string synthetic_config_to_text(const SyntheticConfig& cfg) {
  std::ostringstream out;
  out << "n = " << cfg.n << "\n"
      << "weeks = " << cfg.weeks << "\n"
      << "seed = " << cfg.seed << "\n"
      << "base_min = " << format_double(cfg.base_min) << "\n"
      << "base_max = " << format_double(cfg.base_max) << "\n"
      << "seasonal_amp = " << format_double(cfg.seasonal_amp) << "\n"
      << "noise_std = " << format_double(cfg.noise_std) << "\n"
      << "community_count = " << cfg.community_count << "\n"
      << "spacing_km = " << format_double(cfg.spacing_km) << "\n"
      << "origin_lon = " << format_double(cfg.origin_lon) << "\n"
      << "origin_lat = " << format_double(cfg.origin_lat) << "\n";
  return out.str();
}

namespace {

SyntheticData generate_once(const SyntheticConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int n = cfg.n;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  Eigen::MatrixXd xy(n, 2);
  for (int i = 0; i < n; ++i) {
    const double jx = (unit(rng) - 0.5) * 0.7;
    const double jy = (unit(rng) - 0.5) * 0.7;
    xy(i, 0) = ((i % cols) + jx) * cfg.spacing_km;
    xy(i, 1) = ((i / cols) + jy) * cfg.spacing_km;
  }

  // Community seeds by farthest-point traversal from a random start, then
  // Voronoi labels: compact planar blobs.
  std::vector<int> seeds{static_cast<int>(unit(rng) * n) % n};
  Eigen::VectorXd nearest = (xy.rowwise() - xy.row(seeds[0])).rowwise().norm();
  while (static_cast<int>(seeds.size()) < cfg.community_count) {
    Eigen::Index far = 0;
    nearest.maxCoeff(&far);
    seeds.push_back(static_cast<int>(far));
    nearest = nearest.cwiseMin((xy.rowwise() - xy.row(far)).rowwise().norm());
  }
  std::vector<int> community(n, 0);
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < cfg.community_count; ++c) {
      const double d = (xy.row(i) - xy.row(seeds[c])).norm();
      if (d < best) {
        best = d;
        community[i] = c;
      }
    }
  }

  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  const int neighbors = std::min(4, n - 1);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> by_dist;
    for (int j = 0; j < n; ++j) {
      if (j != i) by_dist.emplace_back((xy.row(i) - xy.row(j)).norm(), j);
    }
    std::partial_sort(by_dist.begin(), by_dist.begin() + neighbors, by_dist.end());
    for (int r = 0; r < neighbors; ++r) {
      adj(i, by_dist[r].second) = 1.0;
      adj(by_dist[r].second, i) = 1.0;
    }
  }

  constexpr double deg = std::numbers::pi / 180.0;
  const double cos_lat = std::cos(cfg.origin_lat * deg);
  std::vector<AoiNode> nodes(n);
  for (int i = 0; i < n; ++i) {
    nodes[i].id = i;
    nodes[i].lon = cfg.origin_lon + xy(i, 0) / (kEarthRadiusKm * cos_lat * deg);
    nodes[i].lat = cfg.origin_lat + xy(i, 1) / (kEarthRadiusKm * deg);
  }

  std::vector<double> community_phase(cfg.community_count);
  for (auto& p : community_phase) p = unit(rng) * 2.0 * std::numbers::pi;
  Eigen::VectorXd base(n);
  Eigen::VectorXd phase(n);
  for (int i = 0; i < n; ++i) {
    base(i) = cfg.base_min + (cfg.base_max - cfg.base_min) * unit(rng);
    phase(i) = community_phase[community[i]] + 0.3 * gauss(rng);
  }

  OrderSeries series;
  series.values.resize(cfg.weeks, n);
  for (int t = 0; t < cfg.weeks; ++t) {
    for (int i = 0; i < n; ++i) {
      const double seasonal =
          1.0 + cfg.seasonal_amp * std::sin(2.0 * std::numbers::pi * t / 52.0 + phase(i));
      const double eps = cfg.noise_std * gauss(rng);
      series.values(t, i) = std::max(0.0, base(i) * seasonal * (1.0 + eps));
    }
  }

  return SyntheticData{AoiGraph(std::move(nodes), std::move(adj)), std::move(series),
                       std::move(community), seed, 0};
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  constexpr int kMaxRegenerations = 100;
  for (int attempt = 0; attempt <= kMaxRegenerations; ++attempt) {
    auto data = generate_once(cfg, cfg.seed + attempt);
    if (data.graph.connected()) {
      data.regenerations = attempt;
      return data;
    }
  }
  throw ValidationError("synthetic generator could not produce a connected graph");
}

}  // namespace ptoc
