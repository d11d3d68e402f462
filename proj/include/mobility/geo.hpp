#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mobility::geo {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Geographic coordinate in degrees. Construction rejects out-of-range values.
class GeoPoint {
public:
    GeoPoint(double lat_deg, double lon_deg);

    double lat() const noexcept { return lat_; }
    double lon() const noexcept { return lon_; }

    bool operator==(const GeoPoint&) const = default;

private:
    double lat_;
    double lon_;
};

/// Great-circle distance in kilometers on a sphere of radius 6371 km.
double haversine_distance(const GeoPoint& a, const GeoPoint& b);

struct Airport {
    std::string id;
    GeoPoint location;
};

struct Basin {
    std::string id;               // lexicographically smallest member id
    GeoPoint representative;      // centroid of member coordinates
    std::vector<std::string> members;  // sorted airport ids
};

class BasinSet {
public:
    enum class Mode { nearest_point, polygon };

    BasinSet() = default;
    BasinSet(std::vector<Basin> basins, Mode mode);

    const std::vector<Basin>& basins() const noexcept { return basins_; }
    Mode mode() const noexcept { return mode_; }
    bool empty() const noexcept { return basins_.empty(); }
    std::size_t size() const noexcept { return basins_.size(); }

    const Basin* find(const std::string& basin_id) const;
    std::optional<std::string> basin_of_member(const std::string& airport_id) const;

private:
    std::vector<Basin> basins_;  // sorted by id
    Mode mode_ = Mode::nearest_point;
    std::map<std::string, std::size_t> member_to_basin_;
};

/// Groups airports into basins: connected components of the graph joining
/// pairs closer than threshold_km. Each basin keeps the centroid of its
/// members as representative and the smallest member id as basin id.
BasinSet merge_airports(const std::vector<Airport>& airports, double threshold_km = 30.0);

/// Nearest-representative basin for p. Ties go to the smallest basin id.
/// Throws on an empty set or a polygon-mode set.
std::string assign_basin(const GeoPoint& p, const BasinSet& basins);

struct Region {
    std::string id;
    std::vector<std::vector<GeoPoint>> rings;  // each ring has >= 3 vertices
};

class RegionPolygons {
public:
    RegionPolygons() = default;
    explicit RegionPolygons(std::vector<Region> regions);

    const std::vector<Region>& regions() const noexcept { return regions_; }
    bool empty() const noexcept { return regions_.empty(); }

private:
    std::vector<Region> regions_;  // sorted by id
};

/// Even-odd containment in plain lat/lon space. A point on an edge counts as
/// inside; when several regions contain p the smallest region id wins.
std::optional<std::string> assign_region(const GeoPoint& p, const RegionPolygons& regions);

}  // namespace mobility::geo
