#include "mobility/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace mobility::geo {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

// Union-find over airport indices.
struct DisjointSet {
    std::vector<std::size_t> parent;

    explicit DisjointSet(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

bool point_on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
    const double cross = (b.lon() - a.lon()) * (p.lat() - a.lat()) -
                         (b.lat() - a.lat()) * (p.lon() - a.lon());
    if (cross != 0.0) return false;
    return p.lon() >= std::min(a.lon(), b.lon()) && p.lon() <= std::max(a.lon(), b.lon()) &&
           p.lat() >= std::min(a.lat(), b.lat()) && p.lat() <= std::max(a.lat(), b.lat());
}

enum class Containment { outside, inside, boundary };

// Even-odd ray casting over all rings of a region, lon as x and lat as y.
// Rings may close explicitly (first vertex repeated) or implicitly.
Containment region_containment(const GeoPoint& p, const Region& region) {
    bool inside = false;
    for (const auto& ring : region.rings) {
        std::size_t n = ring.size();
        if (n > 1 && ring.front() == ring.back()) --n;  // drop explicit closure
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const GeoPoint& a = ring[j];
            const GeoPoint& b = ring[i];
            if (point_on_segment(p, a, b)) return Containment::boundary;
            const bool crosses = (a.lat() > p.lat()) != (b.lat() > p.lat());
            if (crosses) {
                const double x_at = a.lon() + (b.lon() - a.lon()) * (p.lat() - a.lat()) /
                                                  (b.lat() - a.lat());
                if (p.lon() < x_at) inside = !inside;
            }
        }
    }
    return inside ? Containment::inside : Containment::outside;
}

}  // namespace

GeoPoint::GeoPoint(double lat_deg, double lon_deg) : lat_(lat_deg), lon_(lon_deg) {
    if (!(lat_deg >= -90.0 && lat_deg <= 90.0))
        throw std::invalid_argument("GeoPoint: latitude out of [-90, 90]");
    if (!(lon_deg >= -180.0 && lon_deg <= 180.0))
        throw std::invalid_argument("GeoPoint: longitude out of [-180, 180]");
}

double haversine_distance(const GeoPoint& a, const GeoPoint& b) {
    const double lat1 = a.lat() * kDegToRad;
    const double lat2 = b.lat() * kDegToRad;
    const double dlat = (b.lat() - a.lat()) * kDegToRad;
    const double dlon = (b.lon() - a.lon()) * kDegToRad;

    const double sin_dlat = std::sin(dlat / 2.0);
    const double sin_dlon = std::sin(dlon / 2.0);
    const double h = sin_dlat * sin_dlat + std::cos(lat1) * std::cos(lat2) * sin_dlon * sin_dlon;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

BasinSet::BasinSet(std::vector<Basin> basins, Mode mode) : basins_(std::move(basins)), mode_(mode) {
    std::sort(basins_.begin(), basins_.end(),
              [](const Basin& a, const Basin& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < basins_.size(); ++i) {
        if (i > 0 && basins_[i].id == basins_[i - 1].id)
            throw std::invalid_argument("BasinSet: duplicate basin id '" + basins_[i].id + "'");
        for (const auto& member : basins_[i].members) {
            if (!member_to_basin_.emplace(member, i).second)
                throw std::invalid_argument("BasinSet: airport '" + member +
                                            "' appears in more than one basin");
        }
    }
}

const Basin* BasinSet::find(const std::string& basin_id) const {
    auto it = std::lower_bound(basins_.begin(), basins_.end(), basin_id,
                               [](const Basin& b, const std::string& id) { return b.id < id; });
    if (it == basins_.end() || it->id != basin_id) return nullptr;
    return &*it;
}

std::optional<std::string> BasinSet::basin_of_member(const std::string& airport_id) const {
    auto it = member_to_basin_.find(airport_id);
    if (it == member_to_basin_.end()) return std::nullopt;
    return basins_[it->second].id;
}

BasinSet merge_airports(const std::vector<Airport>& airports, double threshold_km) {
    if (!(threshold_km > 0.0)) throw std::invalid_argument("merge_airports: threshold must be > 0");
    {
        std::set<std::string> seen;
        for (const auto& a : airports)
            if (!seen.insert(a.id).second)
                throw std::invalid_argument("merge_airports: duplicate airport id '" + a.id + "'");
    }
    if (airports.empty()) return BasinSet{};

    // Sort by id so component membership and centroids are independent of
    // the input ordering.
    std::vector<std::size_t> order(airports.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return airports[a].id < airports[b].id;
    });

    DisjointSet components(airports.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = i + 1; j < order.size(); ++j)
            if (haversine_distance(airports[order[i]].location, airports[order[j]].location) <
                threshold_km)
                components.unite(i, j);

    std::map<std::size_t, std::vector<std::size_t>> groups;  // root -> sorted positions
    for (std::size_t i = 0; i < order.size(); ++i) groups[components.find(i)].push_back(i);

    std::vector<Basin> basins;
    basins.reserve(groups.size());
    for (const auto& [root, positions] : groups) {
        std::vector<std::string> members;
        double lat_sum = 0.0;
        double lon_sum = 0.0;
        for (std::size_t pos : positions) {
            const Airport& airport = airports[order[pos]];
            members.push_back(airport.id);
            lat_sum += airport.location.lat();
            lon_sum += airport.location.lon();
        }
        const auto n = static_cast<double>(positions.size());
        basins.push_back(Basin{members.front(), GeoPoint(lat_sum / n, lon_sum / n),
                               std::move(members)});
    }
    return BasinSet(std::move(basins), BasinSet::Mode::nearest_point);
}

std::string assign_basin(const GeoPoint& p, const BasinSet& basins) {
    if (basins.empty()) throw std::runtime_error("assign_basin: empty basin set");
    if (basins.mode() != BasinSet::Mode::nearest_point)
        throw std::invalid_argument("assign_basin: basin set is not in nearest-point mode");

    // Basins are sorted by id, so a strict comparison resolves ties in favor
    // of the smallest basin id.
    const Basin* best = nullptr;
    double best_dist = 0.0;
    for (const auto& basin : basins.basins()) {
        const double dist = haversine_distance(p, basin.representative);
        if (best == nullptr || dist < best_dist) {
            best = &basin;
            best_dist = dist;
        }
    }
    return best->id;
}

RegionPolygons::RegionPolygons(std::vector<Region> regions) : regions_(std::move(regions)) {
    std::sort(regions_.begin(), regions_.end(),
              [](const Region& a, const Region& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < regions_.size(); ++i) {
        if (i > 0 && regions_[i].id == regions_[i - 1].id)
            throw std::invalid_argument("RegionPolygons: duplicate region id '" + regions_[i].id +
                                        "'");
        if (regions_[i].rings.empty())
            throw std::invalid_argument("RegionPolygons: region '" + regions_[i].id +
                                        "' has no rings");
        for (const auto& ring : regions_[i].rings) {
            std::size_t n = ring.size();
            if (n > 1 && ring.front() == ring.back()) --n;
            if (n < 3)
                throw std::invalid_argument("RegionPolygons: region '" + regions_[i].id +
                                            "' has a ring with fewer than 3 vertices");
        }
    }
}

std::optional<std::string> assign_region(const GeoPoint& p, const RegionPolygons& regions) {
    // Regions are sorted by id; the first hit is the smallest id. Boundary
    // points count as contained, so they follow the same rule.
    for (const auto& region : regions.regions()) {
        if (region_containment(p, region) != Containment::outside) return region.id;
    }
    return std::nullopt;
}

}  // namespace mobility::geo
