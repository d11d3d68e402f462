#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mobility/geo.hpp"

namespace mobility::ingest {

/// A rejected input row (or ticket). Row-level problems become diagnostics
/// instead of exceptions; only a missing or wrong header is fatal.
struct Diagnostic {
    std::size_t line = 0;  // 1-based file line (the header is line 1)
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

struct TraceRecord {
    std::string user_id;
    std::int64_t timestamp = 0;  // seconds since epoch, UTC
    geo::GeoPoint location;

    bool operator==(const TraceRecord&) const = default;
};

struct Coupon {
    std::string origin;
    std::string destination;
    bool trip_break = false;

    bool operator==(const Coupon&) const = default;
};

/// An air ticket: a continuous coupon chain ending in a trip break.
class Itinerary {
public:
    Itinerary(std::string ticket_id, std::int64_t passengers, std::vector<Coupon> coupons);

    const std::string& ticket_id() const noexcept { return ticket_id_; }
    std::int64_t passengers() const noexcept { return passengers_; }
    const std::vector<Coupon>& coupons() const noexcept { return coupons_; }

    bool operator==(const Itinerary&) const = default;

private:
    std::string ticket_id_;
    std::int64_t passengers_;
    std::vector<Coupon> coupons_;
};

struct CommuteRecord {
    std::string home_region_id;
    std::string work_region_id;
    std::int64_t workers = 0;

    bool operator==(const CommuteRecord&) const = default;
};

/// Node populations. Strictly positive so the gravity fit can take logs.
class PopulationTable {
public:
    PopulationTable() = default;

    /// Adds population to node_id, summing with any earlier contribution.
    void add(const std::string& node_id, double population);

    std::optional<double> get(const std::string& node_id) const;
    const std::map<std::string, double>& values() const noexcept { return values_; }
    bool empty() const noexcept { return values_.empty(); }
    std::size_t size() const noexcept { return values_.size(); }

    bool operator==(const PopulationTable&) const = default;

private:
    std::map<std::string, double> values_;
};

struct TraceParse {
    std::vector<TraceRecord> records;
    std::vector<Diagnostic> diagnostics;
};

struct ItineraryParse {
    std::vector<Itinerary> itineraries;
    std::vector<Diagnostic> diagnostics;  // one per rejected ticket
};

struct CommuteParse {
    std::vector<CommuteRecord> records;
    std::vector<Diagnostic> diagnostics;
};

struct PopulationParse {
    PopulationTable table;
    std::vector<Diagnostic> diagnostics;
};

// CSV parsers. Comma-separated, UTF-8, \n or \r\n, header row mandatory.
// A missing or wrong header throws std::runtime_error; every data row either
// becomes (part of) a record or a diagnostic.

/// Header: user_id,timestamp,lat,lon
TraceParse parse_traces(std::istream& in);

/// Header: ticket_id,passengers,coupon_index,origin,destination,trip_break
/// Rows of one ticket must be contiguous and ordered by coupon_index.
ItineraryParse parse_itineraries(std::istream& in);

/// Header: home_region,work_region,workers
CommuteParse parse_commutes(std::istream& in);

/// Header: node_id,population — duplicate node ids are summed.
PopulationParse parse_population(std::istream& in);

// Serializers for the same schemas, used for artifact output and round-trip
// checks. Rows come out sorted where the parser does not dictate an order.
std::string traces_to_csv(const std::vector<TraceRecord>& records);
std::string itineraries_to_csv(const std::vector<Itinerary>& itineraries);
std::string commutes_to_csv(const std::vector<CommuteRecord>& records);
std::string population_to_csv(const PopulationTable& table);

}  // namespace mobility::ingest
