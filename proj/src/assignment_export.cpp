#include "ptocluster/assignment_export.hpp"

#include "ptocluster/errors.hpp"

#include <nlohmann/json.hpp>

namespace ptoc {

using json = nlohmann::json;

std::string assignment_to_json(const HardAssignment& hard, const Centers& centers,
                               const SoftAssignment* soft, const ClusterConfig& config) {
  json doc;
  doc["labels"] = hard.labels;
  json c = json::array();
  for (int p = 0; p < centers.count(); ++p) c.push_back({centers.xy(p, 0), centers.xy(p, 1)});
  doc["centers"] = std::move(c);
  if (soft != nullptr) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < soft->Z.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index p = 0; p < soft->Z.cols(); ++p) row.push_back(soft->Z(i, p));
      rows.push_back(std::move(row));
    }
    doc["soft"] = std::move(rows);
  }
  doc["bounds"] = {{"lower", config.lower}, {"upper", config.upper}};
  json violations = json::array();
  for (std::size_t p = 0; p < hard.loads.size(); ++p) {
    const ClusterLoad& l = hard.loads[p];
    violations.push_back(
        {{"cluster", p}, {"load", l.load}, {"excess", l.excess}, {"deficit", l.deficit}});
  }
  doc["violations"] = std::move(violations);
  return doc.dump(1) + "\n";
}

std::string assignment_to_geojson(const AoiGraph& graph, const HardAssignment& hard,
                                  const Eigen::VectorXd& predicted) {
  const auto n = static_cast<std::size_t>(graph.size());
  if (hard.labels.size() != n || static_cast<std::size_t>(predicted.size()) != n) {
    throw ShapeMismatch("geojson export needs one label and one prediction per AOI");
  }
  json features = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const AoiNode& node = graph.nodes()[i];
    features.push_back({
        {"type", "Feature"},
        {"geometry", {{"type", "Point"}, {"coordinates", {node.lon, node.lat}}}},
        {"properties",
         {{"aoi", node.id},
          {"cluster", hard.labels[i]},
          {"predicted_orders", predicted(static_cast<Eigen::Index>(i))}}},
    });
  }
  json doc = {{"type", "FeatureCollection"}, {"features", std::move(features)}};
  return doc.dump(1) + "\n";
}

}  // namespace ptoc
