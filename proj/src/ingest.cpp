#include "mobility/ingest.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "mobility/csv.hpp"

namespace mobility::ingest {

namespace {

// Reads and checks the mandatory header row; line 1 of the file.
void require_header(std::istream& in, const std::string& expected, const char* what) {
    std::string line;
    if (!csv::read_line(in, line))
        throw std::runtime_error(std::string(what) + ": missing header, expected \"" + expected +
                                 "\"");
    if (line != expected)
        throw std::runtime_error(std::string(what) + ": bad header \"" + line + "\", expected \"" +
                                 expected + "\"");
}

// One raw itinerary row, already syntactically valid.
struct CouponRow {
    std::size_t line;
    std::int64_t passengers;
    std::int64_t coupon_index;
    Coupon coupon;
};

struct TicketRun {
    std::string ticket_id;
    std::size_t first_line;
    std::vector<CouponRow> rows;
    std::optional<Diagnostic> failure;  // first problem seen inside the run
};

}  // namespace

Itinerary::Itinerary(std::string ticket_id, std::int64_t passengers, std::vector<Coupon> coupons)
    : ticket_id_(std::move(ticket_id)), passengers_(passengers), coupons_(std::move(coupons)) {
    if (passengers_ < 1) throw std::invalid_argument("Itinerary: passengers must be >= 1");
    if (coupons_.empty()) throw std::invalid_argument("Itinerary: needs at least one coupon");
    for (std::size_t i = 1; i < coupons_.size(); ++i)
        if (coupons_[i].origin != coupons_[i - 1].destination)
            throw std::invalid_argument("Itinerary: discontinuous coupon chain");
    if (!coupons_.back().trip_break)
        throw std::invalid_argument("Itinerary: does not end in a trip break");
}

void PopulationTable::add(const std::string& node_id, double population) {
    if (!(population > 0.0) || !std::isfinite(population))
        throw std::invalid_argument("PopulationTable: population must be positive and finite");
    values_[node_id] += population;
}

std::optional<double> PopulationTable::get(const std::string& node_id) const {
    auto it = values_.find(node_id);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

TraceParse parse_traces(std::istream& in) {
    require_header(in, "user_id,timestamp,lat,lon", "traces");
    TraceParse out;
    std::string line;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split(line);
        if (fields.size() != 4) {
            out.diagnostics.push_back({line_no, "expected 4 fields, got " +
                                                    std::to_string(fields.size())});
            continue;
        }
        if (fields[0].empty()) {
            out.diagnostics.push_back({line_no, "empty user_id"});
            continue;
        }
        const auto ts = csv::parse_int(fields[1]);
        if (!ts || *ts < 0) {
            out.diagnostics.push_back({line_no, "bad timestamp \"" + fields[1] + "\""});
            continue;
        }
        const auto lat = csv::parse_double(fields[2]);
        if (!lat || !std::isfinite(*lat) || *lat < -90.0 || *lat > 90.0) {
            out.diagnostics.push_back({line_no, "lat out of range, line " +
                                                    std::to_string(line_no)});
            continue;
        }
        const auto lon = csv::parse_double(fields[3]);
        if (!lon || !std::isfinite(*lon) || *lon < -180.0 || *lon > 180.0) {
            out.diagnostics.push_back({line_no, "lon out of range, line " +
                                                    std::to_string(line_no)});
            continue;
        }
        out.records.push_back(TraceRecord{fields[0], *ts, geo::GeoPoint(*lat, *lon)});
    }
    return out;
}

ItineraryParse parse_itineraries(std::istream& in) {
    require_header(in, "ticket_id,passengers,coupon_index,origin,destination,trip_break",
                   "itineraries");

    // First pass: group rows into contiguous runs per ticket id, recording
    // the first row-level problem of each run.
    std::vector<TicketRun> runs;
    std::string line;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split(line);
        const std::string ticket_id = fields.empty() ? std::string{} : fields[0];
        if (runs.empty() || runs.back().ticket_id != ticket_id)
            runs.push_back(TicketRun{ticket_id, line_no, {}, std::nullopt});
        TicketRun& run = runs.back();
        run.rows.push_back({});  // row counts toward the run even when malformed
        CouponRow& row = run.rows.back();
        row.line = line_no;
        if (run.failure) continue;

        if (fields.size() != 6) {
            run.failure = Diagnostic{line_no, "ticket \"" + ticket_id + "\": expected 6 fields"};
            continue;
        }
        if (ticket_id.empty()) {
            run.failure = Diagnostic{line_no, "empty ticket_id"};
            continue;
        }
        const auto passengers = csv::parse_int(fields[1]);
        const auto coupon_index = csv::parse_int(fields[2]);
        if (!passengers || *passengers < 1) {
            run.failure = Diagnostic{line_no, "ticket \"" + ticket_id + "\": bad passengers \"" +
                                                  fields[1] + "\""};
            continue;
        }
        if (!coupon_index) {
            run.failure = Diagnostic{line_no, "ticket \"" + ticket_id + "\": bad coupon_index \"" +
                                                  fields[2] + "\""};
            continue;
        }
        if (fields[3].empty() || fields[4].empty()) {
            run.failure = Diagnostic{line_no, "ticket \"" + ticket_id + "\": empty airport id"};
            continue;
        }
        if (fields[5] != "0" && fields[5] != "1") {
            run.failure = Diagnostic{line_no, "ticket \"" + ticket_id + "\": trip_break must be " +
                                                  "0 or 1, got \"" + fields[5] + "\""};
            continue;
        }
        row.passengers = *passengers;
        row.coupon_index = *coupon_index;
        row.coupon = Coupon{fields[3], fields[4], fields[5] == "1"};
    }

    // Second pass: tickets whose rows are split across runs are rejected as a
    // whole, then each surviving run is validated as an itinerary.
    std::map<std::string, int> run_count;
    for (const auto& run : runs) ++run_count[run.ticket_id];

    ItineraryParse out;
    std::map<std::string, bool> reported_split;
    for (const auto& run : runs) {
        if (run_count[run.ticket_id] > 1) {
            if (!reported_split[run.ticket_id]) {
                reported_split[run.ticket_id] = true;
                out.diagnostics.push_back({run.first_line, "ticket \"" + run.ticket_id +
                                                               "\": rows are not contiguous"});
            }
            continue;
        }
        if (run.failure) {
            out.diagnostics.push_back(*run.failure);
            continue;
        }
        bool ordered = true;
        for (std::size_t i = 1; i < run.rows.size(); ++i)
            if (run.rows[i].coupon_index <= run.rows[i - 1].coupon_index) ordered = false;
        if (!ordered) {
            out.diagnostics.push_back({run.first_line, "ticket \"" + run.ticket_id +
                                                           "\": coupon_index out of order"});
            continue;
        }
        bool same_passengers = true;
        for (const auto& row : run.rows)
            if (row.passengers != run.rows.front().passengers) same_passengers = false;
        if (!same_passengers) {
            out.diagnostics.push_back({run.first_line, "ticket \"" + run.ticket_id +
                                                           "\": passenger count varies across " +
                                                           "coupons"});
            continue;
        }
        std::vector<Coupon> coupons;
        coupons.reserve(run.rows.size());
        for (const auto& row : run.rows) coupons.push_back(row.coupon);
        bool continuous = true;
        for (std::size_t i = 1; i < coupons.size(); ++i)
            if (coupons[i].origin != coupons[i - 1].destination) continuous = false;
        if (!continuous) {
            out.diagnostics.push_back({run.first_line, "ticket \"" + run.ticket_id +
                                                           "\": discontinuous chain"});
            continue;
        }
        if (!coupons.back().trip_break) {
            out.diagnostics.push_back({run.first_line,
                                       "ticket \"" + run.ticket_id +
                                           "\": itinerary does not end in trip break"});
            continue;
        }
        out.itineraries.emplace_back(run.ticket_id, run.rows.front().passengers,
                                     std::move(coupons));
    }
    return out;
}

CommuteParse parse_commutes(std::istream& in) {
    require_header(in, "home_region,work_region,workers", "commutes");
    CommuteParse out;
    std::string line;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split(line);
        if (fields.size() != 3) {
            out.diagnostics.push_back({line_no, "expected 3 fields, got " +
                                                    std::to_string(fields.size())});
            continue;
        }
        if (fields[0].empty() || fields[1].empty()) {
            out.diagnostics.push_back({line_no, "empty region id"});
            continue;
        }
        const auto workers = csv::parse_int(fields[2]);
        if (!workers || *workers < 1) {
            out.diagnostics.push_back({line_no, "workers must be a positive integer, got \"" +
                                                    fields[2] + "\""});
            continue;
        }
        out.records.push_back(CommuteRecord{fields[0], fields[1], *workers});
    }
    return out;
}

PopulationParse parse_population(std::istream& in) {
    require_header(in, "node_id,population", "population");
    PopulationParse out;
    std::string line;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split(line);
        if (fields.size() != 2) {
            out.diagnostics.push_back({line_no, "expected 2 fields, got " +
                                                    std::to_string(fields.size())});
            continue;
        }
        if (fields[0].empty()) {
            out.diagnostics.push_back({line_no, "empty node_id"});
            continue;
        }
        const auto population = csv::parse_double(fields[1]);
        if (!population || !std::isfinite(*population) || *population <= 0.0) {
            out.diagnostics.push_back({line_no, "population must be positive, got \"" + fields[1] +
                                                    "\""});
            continue;
        }
        out.table.add(fields[0], *population);
    }
    return out;
}

std::string traces_to_csv(const std::vector<TraceRecord>& records) {
    std::string out = "user_id,timestamp,lat,lon\n";
    for (const auto& r : records) {
        out += r.user_id;
        out += ',';
        out += csv::format_int(r.timestamp);
        out += ',';
        out += csv::format_double(r.location.lat());
        out += ',';
        out += csv::format_double(r.location.lon());
        out += '\n';
    }
    return out;
}

std::string itineraries_to_csv(const std::vector<Itinerary>& itineraries) {
    std::string out = "ticket_id,passengers,coupon_index,origin,destination,trip_break\n";
    for (const auto& itinerary : itineraries) {
        std::int64_t index = 1;
        for (const auto& coupon : itinerary.coupons()) {
            out += itinerary.ticket_id();
            out += ',';
            out += csv::format_int(itinerary.passengers());
            out += ',';
            out += csv::format_int(index++);
            out += ',';
            out += coupon.origin;
            out += ',';
            out += coupon.destination;
            out += ',';
            out += coupon.trip_break ? '1' : '0';
            out += '\n';
        }
    }
    return out;
}

std::string commutes_to_csv(const std::vector<CommuteRecord>& records) {
    std::string out = "home_region,work_region,workers\n";
    for (const auto& r : records) {
        out += r.home_region_id;
        out += ',';
        out += r.work_region_id;
        out += ',';
        out += csv::format_int(r.workers);
        out += '\n';
    }
    return out;
}

std::string population_to_csv(const PopulationTable& table) {
    std::string out = "node_id,population\n";
    for (const auto& [node, population] : table.values()) {
        out += node;
        out += ',';
        out += csv::format_double(population);
        out += '\n';
    }
    return out;
}

}  // namespace mobility::ingest
