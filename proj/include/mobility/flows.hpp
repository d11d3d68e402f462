#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mobility/geo.hpp"
#include "mobility/ingest.hpp"

namespace mobility::flows {

using PairKey = std::pair<std::string, std::string>;

/// Sparse directed OD matrix. Diagonals are never stored and every stored
/// weight is strictly positive; zero means "absent".
class FlowMatrix {
public:
    FlowMatrix() = default;
    explicit FlowMatrix(std::map<PairKey, double> entries, bool symmetric = false);
    FlowMatrix(std::vector<std::string> node_ids, std::map<PairKey, double> entries,
               bool symmetric = false);

    const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
    const std::map<PairKey, double>& entries() const noexcept { return entries_; }
    bool symmetric_flag() const noexcept { return symmetric_; }

    /// 0.0 for absent entries.
    double value(const std::string& origin, const std::string& destination) const;
    bool contains(const PairKey& key) const { return entries_.count(key) > 0; }

    bool empty() const noexcept { return entries_.empty(); }
    std::size_t size() const noexcept { return entries_.size(); }
    double total() const;

    bool operator==(const FlowMatrix&) const = default;

private:
    std::vector<std::string> node_ids_;  // sorted, unique
    std::map<PairKey, double> entries_;
    bool symmetric_ = false;
};

/// Pairwise great-circle distances derived from node representative points.
class DistanceTable {
public:
    DistanceTable() = default;
    explicit DistanceTable(std::map<std::string, geo::GeoPoint> points);

    /// Symmetric; exactly 0 for i == j. Throws when a node is unknown.
    double distance(const std::string& i, const std::string& j) const;
    bool has(const std::string& node) const { return points_.count(node) > 0; }
    const std::map<std::string, geo::GeoPoint>& points() const noexcept { return points_; }

private:
    std::map<std::string, geo::GeoPoint> points_;
};

/// Maps a trace location to a node id; nullopt drops the point.
using AssignFn = std::function<std::optional<std::string>(const geo::GeoPoint&)>;

struct TraceFlowResult {
    FlowMatrix flows;
    std::size_t dropped_points = 0;
};

/// Per user, orders pictures by timestamp (file order breaks ties) and adds
/// one trip per consecutive pair landing in different nodes.
TraceFlowResult build_trace_flows(const std::vector<ingest::TraceRecord>& traces,
                                  const AssignFn& assign);

/// Flattens each itinerary to its trip-break destination list, with the first
/// coupon's origin in front, and sums passengers over consecutive pairs. The
/// stopover airports disappear from the flows.
FlowMatrix build_air_truth(const std::vector<ingest::Itinerary>& itineraries);

/// Sums workers per (home, work) pair; home == work records are dropped.
FlowMatrix build_commute_truth(const std::vector<ingest::CommuteRecord>& records);

/// Keeps entries with min_km <= d(i,j) <= max_km (closed on both ends; an
/// absent bound is unbounded). A stored entry without a distance is an error.
FlowMatrix filter_by_distance(const FlowMatrix& m, const DistanceTable& d,
                              std::optional<double> min_km, std::optional<double> max_km);

enum class ThresholdMode { min_threshold, max_threshold };

struct CalibrationPoint {
    double threshold_km = 0.0;
    double pearson = 0.0;  // NaN when the filtered pair is degenerate
};

struct CalibrationResult {
    double best_threshold_km = 0.0;
    double best_pearson = 0.0;
    std::vector<CalibrationPoint> curve;  // one point per candidate
};

/// Scans candidate distance thresholds for the one maximizing the Pearson
/// correlation between the filtered flows and the truth, computed over the
/// union of their supports with absent entries read as zero. Ties go to the
/// smallest threshold.
CalibrationResult calibrate_threshold(const FlowMatrix& f, const FlowMatrix& truth,
                                      const DistanceTable& d,
                                      const std::vector<double>& candidates, ThresholdMode mode);

}  // namespace mobility::flows
