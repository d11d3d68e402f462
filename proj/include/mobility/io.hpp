#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mobility/eval.hpp"
#include "mobility/flows.hpp"
#include "mobility/geo.hpp"
#include "mobility/models.hpp"

namespace mobility::io {

/// Filesystem-level failure (cannot open, read or write). Content problems
/// in a file that did open stay plain std::runtime_error, so callers can
/// treat the two differently.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File-backed artifacts. Every writer produces byte-stable output for equal
// inputs (sorted keys, locale-independent number formatting); every loader
// throws naming the file on missing files or bad content.

/// origin,destination,weight rows sorted by key.
void save_flows_csv(const std::string& path, const flows::FlowMatrix& m);
flows::FlowMatrix load_flows_csv(const std::string& path);

/// node_i,node_j,km for every unordered pair, one direction (node_i < node_j).
void save_distances_csv(const std::string& path, const flows::DistanceTable& d);

/// id,lat,lon
std::vector<geo::Airport> load_airports_csv(const std::string& path);

/// JSON array of {"id": ..., "rings": [[[lat, lon], ...], ...]}.
std::vector<geo::Region> load_regions_json(const std::string& path);

/// {"mode": ..., "basins": [{"id", "lat", "lon", "members"}]}.
void save_basins_json(const std::string& path, const geo::BasinSet& basins);
geo::BasinSet load_basins_json(const std::string& path);

void save_gravity_json(const std::string& path, const models::GravityParams& params);
models::GravityParams load_gravity_json(const std::string& path);

void save_hybrid_json(const std::string& path, const models::HybridParams& params);
models::HybridParams load_hybrid_json(const std::string& path);

/// Full report serialization; NaN cells come out as JSON null.
std::string report_to_json(const eval::EvalReport& report);
void save_report_json(const std::string& path, const eval::EvalReport& report);

/// One CSV per curve, header from Curve::columns, NaN cells left empty.
void save_curve_csv(const std::string& path, const eval::Curve& curve);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace mobility::io
