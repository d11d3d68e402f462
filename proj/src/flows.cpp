#include "mobility/flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "mobility/stats.hpp"

namespace mobility::flows {

namespace {

std::vector<std::string> nodes_from_entries(const std::map<PairKey, double>& entries) {
    std::set<std::string> nodes;
    for (const auto& [key, weight] : entries) {
        nodes.insert(key.first);
        nodes.insert(key.second);
    }
    return {nodes.begin(), nodes.end()};
}

void validate_entries(const std::map<PairKey, double>& entries,
                      const std::vector<std::string>& node_ids) {
    const std::set<std::string> known(node_ids.begin(), node_ids.end());
    for (const auto& [key, weight] : entries) {
        if (key.first == key.second)
            throw std::invalid_argument("FlowMatrix: diagonal entry for node '" + key.first + "'");
        if (!(weight > 0.0) || !std::isfinite(weight))
            throw std::invalid_argument("FlowMatrix: weight for (" + key.first + ", " +
                                        key.second + ") must be positive and finite");
        if (!known.count(key.first) || !known.count(key.second))
            throw std::invalid_argument("FlowMatrix: entry (" + key.first + ", " + key.second +
                                        ") references a node outside node_ids");
    }
}

}  // namespace

FlowMatrix::FlowMatrix(std::map<PairKey, double> entries, bool symmetric)
    : node_ids_(nodes_from_entries(entries)), entries_(std::move(entries)),
      symmetric_(symmetric) {
    validate_entries(entries_, node_ids_);
}

FlowMatrix::FlowMatrix(std::vector<std::string> node_ids, std::map<PairKey, double> entries,
                       bool symmetric)
    : node_ids_(std::move(node_ids)), entries_(std::move(entries)), symmetric_(symmetric) {
    std::sort(node_ids_.begin(), node_ids_.end());
    node_ids_.erase(std::unique(node_ids_.begin(), node_ids_.end()), node_ids_.end());
    validate_entries(entries_, node_ids_);
}

double FlowMatrix::value(const std::string& origin, const std::string& destination) const {
    auto it = entries_.find(PairKey{origin, destination});
    return it == entries_.end() ? 0.0 : it->second;
}

double FlowMatrix::total() const {
    double sum = 0.0;
    for (const auto& [key, weight] : entries_) sum += weight;
    return sum;
}

DistanceTable::DistanceTable(std::map<std::string, geo::GeoPoint> points)
    : points_(std::move(points)) {}

double DistanceTable::distance(const std::string& i, const std::string& j) const {
    if (i == j) {
        if (!has(i)) throw std::runtime_error("DistanceTable: unknown node '" + i + "'");
        return 0.0;
    }
    auto it_i = points_.find(i);
    auto it_j = points_.find(j);
    if (it_i == points_.end()) throw std::runtime_error("DistanceTable: unknown node '" + i + "'");
    if (it_j == points_.end()) throw std::runtime_error("DistanceTable: unknown node '" + j + "'");
    return geo::haversine_distance(it_i->second, it_j->second);
}

TraceFlowResult build_trace_flows(const std::vector<ingest::TraceRecord>& traces,
                                  const AssignFn& assign) {
    struct Visit {
        std::int64_t timestamp;
        std::string node;
    };

    // Group per user in file order; dropped points leave the sequence before
    // pairs are formed.
    std::map<std::string, std::vector<Visit>> per_user;
    std::size_t dropped = 0;
    for (const auto& record : traces) {
        auto node = assign(record.location);
        if (!node) {
            ++dropped;
            continue;
        }
        per_user[record.user_id].push_back(Visit{record.timestamp, std::move(*node)});
    }

    std::map<PairKey, double> entries;
    for (auto& [user, visits] : per_user) {
        std::stable_sort(visits.begin(), visits.end(),
                         [](const Visit& a, const Visit& b) { return a.timestamp < b.timestamp; });
        for (std::size_t i = 1; i < visits.size(); ++i) {
            if (visits[i - 1].node == visits[i].node) continue;
            entries[PairKey{visits[i - 1].node, visits[i].node}] += 1.0;
        }
    }
    return TraceFlowResult{FlowMatrix(std::move(entries)), dropped};
}

FlowMatrix build_air_truth(const std::vector<ingest::Itinerary>& itineraries) {
    std::map<PairKey, double> entries;
    for (const auto& itinerary : itineraries) {
        std::vector<std::string> destinations;
        destinations.push_back(itinerary.coupons().front().origin);
        for (const auto& coupon : itinerary.coupons())
            if (coupon.trip_break) destinations.push_back(coupon.destination);
        for (std::size_t i = 1; i < destinations.size(); ++i) {
            if (destinations[i - 1] == destinations[i]) continue;
            entries[PairKey{destinations[i - 1], destinations[i]}] +=
                static_cast<double>(itinerary.passengers());
        }
    }
    return FlowMatrix(std::move(entries));
}

FlowMatrix build_commute_truth(const std::vector<ingest::CommuteRecord>& records) {
    std::map<PairKey, double> entries;
    for (const auto& record : records) {
        if (record.home_region_id == record.work_region_id) continue;
        entries[PairKey{record.home_region_id, record.work_region_id}] +=
            static_cast<double>(record.workers);
    }
    return FlowMatrix(std::move(entries));
}

FlowMatrix filter_by_distance(const FlowMatrix& m, const DistanceTable& d,
                              std::optional<double> min_km, std::optional<double> max_km) {
    if (min_km && max_km && *min_km > *max_km)
        throw std::invalid_argument("filter_by_distance: min_km > max_km");
    const double lo = min_km.value_or(-std::numeric_limits<double>::infinity());
    const double hi = max_km.value_or(std::numeric_limits<double>::infinity());

    std::map<PairKey, double> kept;
    for (const auto& [key, weight] : m.entries()) {
        const double km = d.distance(key.first, key.second);
        if (km >= lo && km <= hi) kept.emplace(key, weight);
    }
    return FlowMatrix(m.node_ids(), std::move(kept), m.symmetric_flag());
}

CalibrationResult calibrate_threshold(const FlowMatrix& f, const FlowMatrix& truth,
                                      const DistanceTable& d,
                                      const std::vector<double>& candidates, ThresholdMode mode) {
    if (candidates.empty())
        throw std::invalid_argument("calibrate_threshold: no candidate thresholds");

    CalibrationResult result;
    bool found = false;
    for (const double t : candidates) {
        const FlowMatrix filtered =
            mode == ThresholdMode::min_threshold
                ? filter_by_distance(f, d, t, std::nullopt)
                : filter_by_distance(f, d, std::nullopt, t);

        std::set<PairKey> support;
        for (const auto& [key, weight] : filtered.entries()) support.insert(key);
        for (const auto& [key, weight] : truth.entries()) support.insert(key);

        double rho = std::numeric_limits<double>::quiet_NaN();
        if (support.size() >= 2) {
            std::vector<double> xs, ys;
            xs.reserve(support.size());
            ys.reserve(support.size());
            for (const auto& key : support) {
                xs.push_back(filtered.value(key.first, key.second));
                ys.push_back(truth.value(key.first, key.second));
            }
            try {
                rho = stats::pearson(xs, ys);
            } catch (const std::invalid_argument&) {
                // degenerate candidate; stays NaN
            }
        }
        result.curve.push_back(CalibrationPoint{t, rho});
        if (!std::isnan(rho) &&
            (!found || rho > result.best_pearson ||
             (rho == result.best_pearson && t < result.best_threshold_km))) {
            found = true;
            result.best_threshold_km = t;
            result.best_pearson = rho;
        }
    }
    if (!found)
        throw std::runtime_error(
            "calibrate_threshold: every candidate produced a degenerate correlation");
    return result;
}

}  // namespace mobility::flows
