#pragma once

#include "ptocluster/aoi_data.hpp"
#include "ptocluster/cluster_layer.hpp"

#include <Eigen/Dense>

#include <string>

namespace ptoc {

// {"labels": [...], "centers": [[x, y], ...], "soft": [[...], ...],
//  "violations": [{"cluster", "load", "excess", "deficit"}, ...]}
// "soft" is omitted when `soft` is null. Centers are in projected km.
std::string assignment_to_json(const HardAssignment& hard, const Centers& centers,
                               const SoftAssignment* soft, const ClusterConfig& config);

// FeatureCollection of AOI points with "aoi", "cluster" and
// "predicted_orders" properties.
std::string assignment_to_geojson(const AoiGraph& graph, const HardAssignment& hard,
                                  const Eigen::VectorXd& predicted);

}  // namespace ptoc
