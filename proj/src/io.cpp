#include "mobility/io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mobility/csv.hpp"

namespace mobility::io {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

ordered_json parse_json_file(const std::string& path) {
    const std::string text = read_text_file(path);
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(path, e.what());
    }
}

const ordered_json& field(const ordered_json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) fail(path, std::string("missing field \"") + key + "\"");
    return *it;
}

double number_field(const ordered_json& j, const char* key, const std::string& path) {
    const ordered_json& v = field(j, key, path);
    if (!v.is_number()) fail(path, std::string("field \"") + key + "\" is not a number");
    return v.get<double>();
}

std::string string_field(const ordered_json& j, const char* key, const std::string& path) {
    const ordered_json& v = field(j, key, path);
    if (!v.is_string()) fail(path, std::string("field \"") + key + "\" is not a string");
    return v.get<std::string>();
}

ordered_json gravity_to_json(const models::GravityParams& params) {
    ordered_json j;
    j["K"] = params.K;
    j["alpha"] = params.alpha;
    j["gamma"] = params.gamma;
    j["beta"] = params.beta;
    j["deterrence"] = models::to_string(params.kind);
    return j;
}

models::GravityParams gravity_from_json(const ordered_json& j, const std::string& path) {
    models::GravityParams p;
    p.K = number_field(j, "K", path);
    p.alpha = number_field(j, "alpha", path);
    p.gamma = number_field(j, "gamma", path);
    p.beta = number_field(j, "beta", path);
    try {
        p.kind = models::deterrence_from_string(string_field(j, "deterrence", path));
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
    return p;
}

ordered_json metrics_to_json(const eval::ModelMetrics& m) {
    ordered_json j;
    j["pearson"] = m.pearson;
    j["r_squared"] = m.r_squared;
    j["cpc"] = m.cpc;
    return j;
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw IoError(path + ": read error");
    return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw IoError(path + ": write error");
}

void save_flows_csv(const std::string& path, const flows::FlowMatrix& m) {
    std::string text = "origin,destination,weight\n";
    for (const auto& [key, value] : m.entries()) {
        text += key.first;
        text += ',';
        text += key.second;
        text += ',';
        text += csv::format_double(value);
        text += '\n';
    }
    write_text_file(path, text);
}

flows::FlowMatrix load_flows_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!csv::read_line(in, line) || line != "origin,destination,weight")
        fail(path, "expected header origin,destination,weight");

    std::map<flows::PairKey, double> entries;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = csv::split(line);
        if (fields.size() != 3) fail(path, "line " + std::to_string(line_no) + ": expected 3 fields");
        const auto weight = csv::parse_double(fields[2]);
        if (!weight) fail(path, "line " + std::to_string(line_no) + ": bad weight");
        const auto [it, inserted] = entries.emplace(flows::PairKey(fields[0], fields[1]), *weight);
        if (!inserted) fail(path, "line " + std::to_string(line_no) + ": duplicate pair");
    }
    try {
        return flows::FlowMatrix(std::move(entries));
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

void save_distances_csv(const std::string& path, const flows::DistanceTable& d) {
    std::string text = "node_i,node_j,km\n";
    for (auto it = d.points().begin(); it != d.points().end(); ++it)
        for (auto jt = std::next(it); jt != d.points().end(); ++jt) {
            text += it->first;
            text += ',';
            text += jt->first;
            text += ',';
            text += csv::format_double(d.distance(it->first, jt->first));
            text += '\n';
        }
    write_text_file(path, text);
}

std::vector<geo::Airport> load_airports_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!csv::read_line(in, line) || line != "id,lat,lon")
        fail(path, "expected header id,lat,lon");

    std::vector<geo::Airport> airports;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = csv::split(line);
        if (fields.size() != 3) fail(path, "line " + std::to_string(line_no) + ": expected 3 fields");
        if (fields[0].empty()) fail(path, "line " + std::to_string(line_no) + ": empty airport id");
        const auto lat = csv::parse_double(fields[1]);
        const auto lon = csv::parse_double(fields[2]);
        if (!lat || !lon) fail(path, "line " + std::to_string(line_no) + ": bad coordinate");
        try {
            airports.push_back({fields[0], geo::GeoPoint(*lat, *lon)});
        } catch (const std::invalid_argument& e) {
            fail(path, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return airports;
}

std::vector<geo::Region> load_regions_json(const std::string& path) {
    const ordered_json doc = parse_json_file(path);
    if (!doc.is_array()) fail(path, "expected a top-level array of regions");

    std::vector<geo::Region> regions;
    for (const ordered_json& entry : doc) {
        geo::Region region;
        region.id = string_field(entry, "id", path);
        const ordered_json& rings = field(entry, "rings", path);
        if (!rings.is_array() || rings.empty())
            fail(path, "region " + region.id + ": \"rings\" must be a non-empty array");
        for (const ordered_json& ring : rings) {
            if (!ring.is_array()) fail(path, "region " + region.id + ": ring is not an array");
            std::vector<geo::GeoPoint> vertices;
            for (const ordered_json& vertex : ring) {
                if (!vertex.is_array() || vertex.size() != 2 || !vertex[0].is_number() ||
                    !vertex[1].is_number())
                    fail(path, "region " + region.id + ": vertex is not a [lat, lon] pair");
                try {
                    vertices.emplace_back(vertex[0].get<double>(), vertex[1].get<double>());
                } catch (const std::invalid_argument& e) {
                    fail(path, "region " + region.id + ": " + e.what());
                }
            }
            region.rings.push_back(std::move(vertices));
        }
        regions.push_back(std::move(region));
    }
    return regions;
}

void save_basins_json(const std::string& path, const geo::BasinSet& basins) {
    ordered_json doc;
    doc["mode"] = basins.mode() == geo::BasinSet::Mode::polygon ? "polygon" : "nearest_point";
    doc["basins"] = ordered_json::array();
    for (const geo::Basin& basin : basins.basins()) {
        ordered_json b;
        b["id"] = basin.id;
        b["lat"] = basin.representative.lat();
        b["lon"] = basin.representative.lon();
        b["members"] = basin.members;
        doc["basins"].push_back(std::move(b));
    }
    write_text_file(path, doc.dump(2) + "\n");
}

geo::BasinSet load_basins_json(const std::string& path) {
    const ordered_json doc = parse_json_file(path);
    const std::string mode_name = string_field(doc, "mode", path);
    geo::BasinSet::Mode mode;
    if (mode_name == "polygon")
        mode = geo::BasinSet::Mode::polygon;
    else if (mode_name == "nearest_point")
        mode = geo::BasinSet::Mode::nearest_point;
    else
        fail(path, "unknown mode \"" + mode_name + "\"");

    const ordered_json& array = field(doc, "basins", path);
    if (!array.is_array()) fail(path, "\"basins\" is not an array");
    std::vector<geo::Basin> basins;
    for (const ordered_json& entry : array) {
        const std::string id = string_field(entry, "id", path);
        const double lat = number_field(entry, "lat", path);
        const double lon = number_field(entry, "lon", path);
        const ordered_json& members = field(entry, "members", path);
        if (!members.is_array()) fail(path, "basin " + id + ": \"members\" is not an array");
        std::vector<std::string> member_ids;
        for (const ordered_json& member : members) {
            if (!member.is_string()) fail(path, "basin " + id + ": member id is not a string");
            member_ids.push_back(member.get<std::string>());
        }
        try {
            basins.push_back({id, geo::GeoPoint(lat, lon), std::move(member_ids)});
        } catch (const std::invalid_argument& e) {
            fail(path, "basin " + id + ": " + e.what());
        }
    }
    try {
        return geo::BasinSet(std::move(basins), mode);
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

void save_gravity_json(const std::string& path, const models::GravityParams& params) {
    write_text_file(path, gravity_to_json(params).dump(2) + "\n");
}

models::GravityParams load_gravity_json(const std::string& path) {
    return gravity_from_json(parse_json_file(path), path);
}

void save_hybrid_json(const std::string& path, const models::HybridParams& params) {
    ordered_json doc;
    doc["A"] = params.A;
    doc["B"] = params.B;
    doc["gravity"] = gravity_to_json(params.gravity);
    write_text_file(path, doc.dump(2) + "\n");
}

models::HybridParams load_hybrid_json(const std::string& path) {
    const ordered_json doc = parse_json_file(path);
    models::HybridParams p;
    p.A = number_field(doc, "A", path);
    p.B = number_field(doc, "B", path);
    p.gravity = gravity_from_json(field(doc, "gravity", path), path);
    return p;
}

std::string report_to_json(const eval::EvalReport& report) {
    ordered_json doc;
    doc["scheme"] = report.scheme;
    doc["seed"] = report.seed;

    doc["models"] = ordered_json::object();
    for (const auto& [name, metrics] : report.models) doc["models"][name] = metrics_to_json(metrics);

    doc["folds"] = ordered_json::array();
    for (const eval::FoldDetail& fold : report.folds) {
        ordered_json f;
        f["label"] = fold.label;
        f["gravity"] = gravity_to_json(fold.gravity);
        f["hybrid_a"] = fold.hybrid_a;
        f["hybrid_b"] = fold.hybrid_b;
        f["trace_scale"] = fold.trace_scale;
        f["train_loss"] = {{"gravity", fold.train_loss_gravity},
                           {"trace", fold.train_loss_trace},
                           {"hybrid", fold.train_loss_hybrid}};
        f["train_size"] = fold.train_size;
        f["test_size"] = fold.test_size;
        f["test_metrics"] = ordered_json::object();
        for (const auto& [name, metrics] : fold.test_metrics)
            f["test_metrics"][name] = metrics_to_json(metrics);
        doc["folds"].push_back(std::move(f));
    }

    doc["curves"] = ordered_json::object();
    for (const auto& [name, curve] : report.curves) {
        ordered_json c;
        c["columns"] = curve.columns;
        c["rows"] = curve.rows;
        doc["curves"][name] = std::move(c);
    }

    doc["grids"] = ordered_json::object();
    for (const auto& [name, grid] : report.grids) {
        ordered_json g;
        g["distance_edges"] = grid.distance_edges;
        g["population_edges"] = grid.population_edges;
        g["values"] = grid.values;
        doc["grids"][name] = std::move(g);
    }

    doc["notes"] = report.notes;
    return doc.dump(2) + "\n";
}

void save_report_json(const std::string& path, const eval::EvalReport& report) {
    write_text_file(path, report_to_json(report));
}

void save_curve_csv(const std::string& path, const eval::Curve& curve) {
    std::string text;
    for (std::size_t i = 0; i < curve.columns.size(); ++i) {
        if (i > 0) text += ',';
        text += curve.columns[i];
    }
    text += '\n';
    for (const std::vector<double>& row : curve.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) text += ',';
            text += csv::format_double(row[i]);
        }
        text += '\n';
    }
    write_text_file(path, text);
}

}  // namespace mobility::io
