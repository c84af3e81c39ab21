#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ptoc {

struct AoiNode {
  int id = 0;
  double lon = 0.0;
  double lat = 0.0;
};

// AOI centers plus a symmetric 0/1 adjacency with zero diagonal and at least
// one edge. Construction validates; instances are immutable afterwards.
class AoiGraph {
 public:
  AoiGraph(std::vector<AoiNode> nodes, Eigen::MatrixXd adjacency);

  static AoiGraph from_edges(std::vector<AoiNode> nodes,
                             const std::vector<std::pair<int, int>>& edges);

  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<AoiNode>& nodes() const { return nodes_; }
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  int edge_count() const;
  Eigen::VectorXd degrees() const { return adjacency_.rowwise().sum(); }
  bool connected() const;
  std::vector<std::pair<int, int>> edges() const;

 private:
  std::vector<AoiNode> nodes_;
  Eigen::MatrixXd adjacency_;
};

AoiGraph load_graph(const std::filesystem::path& path);
AoiGraph parse_graph_json(const std::string& text);
std::string graph_to_json(const AoiGraph& graph);
void save_graph(const AoiGraph& graph, const std::filesystem::path& path);

// D^-1/2 (A + I) D^-1/2, the first-order graph convolution propagator.
Eigen::MatrixXd normalized_adjacency(const AoiGraph& graph);

// Equirectangular projection about the node centroid, n x 2 in km.
Eigen::MatrixXd project_to_km(const AoiGraph& graph);

inline constexpr double kEarthRadiusKm = 6371.0;

// Weekly order counts: T rows (weeks) by n columns (AOIs), all >= 0.
struct OrderSeries {
  Eigen::MatrixXd values;

  int weeks() const { return static_cast<int>(values.rows()); }
  int aois() const { return static_cast<int>(values.cols()); }
  void validate(int expected_aois) const;
};

OrderSeries load_series(const std::filesystem::path& path);
OrderSeries parse_series_csv(const std::string& text);
std::string series_to_csv(const OrderSeries& series);
void save_series(const OrderSeries& series, const std::filesystem::path& path);

enum class Split { Unassigned, Train, Val, Test };

const char* split_name(Split s);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

// Sample s pairs input = series rows s..s+w-1 (as n x w, oldest first) with
// target = row s+w.
struct WindowedDataset {
  int window = 0;
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::VectorXd> targets;
  std::vector<Split> tags;

  int size() const { return static_cast<int>(inputs.size()); }
  std::vector<int> indices(Split which) const;
};

WindowedDataset make_windows(const OrderSeries& series, int window);
WindowedDataset split(WindowedDataset dataset, const SplitRatios& ratios = {});

struct SyntheticConfig {
  int n = 35;
  int weeks = 117;
  std::uint64_t seed = 1;
  double base_min = 60.0;
  double base_max = 360.0;
  double seasonal_amp = 0.3;
  double noise_std = 0.1;
  int community_count = 5;
  double spacing_km = 1.2;
  double origin_lon = 114.06;
  double origin_lat = 22.54;

  void validate() const;
};

SyntheticConfig parse_synthetic_config(const std::string& text);
SyntheticConfig load_synthetic_config(const std::filesystem::path& path);
std::string synthetic_config_to_text(const SyntheticConfig& cfg);

struct SyntheticData {
  AoiGraph graph;
  OrderSeries series;
  std::vector<int> community;
  std::uint64_t seed_used = 0;
  int regenerations = 0;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace ptoc
