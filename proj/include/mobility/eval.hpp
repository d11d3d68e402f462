#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mobility/flows.hpp"
#include "mobility/geo.hpp"
#include "mobility/ingest.hpp"
#include "mobility/models.hpp"

namespace mobility::eval {

/// Aligned (truth, predicted) values over a common key set.
struct PairedSeries {
    std::vector<double> truth;
    std::vector<double> predicted;
};

/// Series over the union of both supports, absent entries read as zero.
PairedSeries paired_on_union(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred);

/// Series over the truth support only, predictions read with implicit zeros.
PairedSeries paired_on_support(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred);

/// Sample Pearson correlation; throws on degenerate (constant) series.
double pearson(const PairedSeries& s);

/// Coefficient of determination 1 - SSres/SStot on raw flows; may be
/// negative. Throws when the truth series is constant.
double r_squared(const PairedSeries& s);

/// Common part of commuters: 2 sum min(h, y) / (sum h + sum y) over the
/// union of supports. Throws when both matrices are empty.
double cpc(const flows::FlowMatrix& h, const flows::FlowMatrix& y);

/// Everything the fitting stages need, fixed across folds.
struct ModelInputs {
    ingest::PopulationTable population;
    flows::DistanceTable distances;
    flows::FlowMatrix trace_flows;
    models::DeterrenceKind kind = models::DeterrenceKind::power;
};

struct ModelMetrics {
    double pearson = 0.0;
    double r_squared = 0.0;
    double cpc = 0.0;
};

struct FoldDetail {
    std::string label;
    models::GravityParams gravity;
    double hybrid_a = 0.0;
    double hybrid_b = 0.0;
    double trace_scale = 0.0;  // best least-squares c in y ~ c * f
    double train_loss_gravity = 0.0;
    double train_loss_trace = 0.0;
    double train_loss_hybrid = 0.0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    // Per-fold metrics are informational; NaN marks a degenerate fold series.
    std::map<std::string, ModelMetrics> test_metrics;
};

struct Curve {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // NaN cells mark empty slots
};

struct GridData {
    std::vector<double> distance_edges;
    std::vector<double> population_edges;
    std::vector<std::vector<double>> values;  // [distance bin][population bin], NaN = empty
};

struct EvalReport {
    std::string scheme;
    std::uint64_t seed = 0;
    std::map<std::string, ModelMetrics> models;  // pooled metrics per model
    std::vector<FoldDetail> folds;
    std::vector<std::pair<std::string, Curve>> curves;
    std::vector<std::pair<std::string, GridData>> grids;
    std::vector<std::string> notes;
};

inline constexpr const char* kModelGravity = "gravity";
inline constexpr const char* kModelTrace = "trace";
inline constexpr const char* kModelHybrid = "hybrid";

/// All three comparison models fitted on the full truth, with their
/// in-sample predictions over the truth support. The trace model is the best
/// single scale c applied to the trace flows.
struct FullFit {
    models::GravityParams gravity;
    double trace_scale = 0.0;
    models::HybridParams hybrid;
    flows::FlowMatrix gravity_pred;
    flows::FlowMatrix trace_pred;
    flows::FlowMatrix hybrid_pred;
    double loss_gravity = 0.0;
    double loss_trace = 0.0;
    double loss_hybrid = 0.0;
};

FullFit fit_full(const flows::FlowMatrix& truth, const ModelInputs& inputs);

/// Seeded k-fold cross-validation over the positive entries of truth. Every
/// entry is predicted exactly once; pooled predictions are scored for the
/// gravity-alone, best-scalar-trace and hybrid models.
EvalReport kfold_cv(const flows::FlowMatrix& truth, const ModelInputs& inputs, int k,
                    std::uint64_t seed);

/// Two-direction geographic cross-validation: nodes split at a meridian,
/// flows crossing it discarded, each half trained and tested against the
/// other. Metrics are reported per direction (folds) and pooled (models).
EvalReport spatial_cv(const flows::FlowMatrix& truth,
                      const std::map<std::string, geo::GeoPoint>& node_locations,
                      const ModelInputs& inputs, double meridian_lon);

/// Repeated random subsampling: for each training fraction, `repeats` seeded
/// subsamples are fitted and scored (r^2) on their complements. Curves carry
/// [fraction, mean_r2, q1, q3] per model.
EvalReport learning_curve(const flows::FlowMatrix& truth, const ModelInputs& inputs,
                          const std::vector<double>& fractions, int repeats, std::uint64_t seed);

/// r^2 restricted to entries with truth > threshold, per model. Thresholds
/// where fewer than 3 entries survive are omitted and noted.
EvalReport thresholded_r2(const flows::FlowMatrix& truth,
                          const std::vector<std::pair<std::string, flows::FlowMatrix>>& preds,
                          const std::vector<double>& thresholds);

/// Median and quartiles of pred/truth over entries with truth > min_flow,
/// bucketed by distance. Bins are [lo, hi) over consecutive edges; rows are
/// [bin_mid, median, q1, q3] with NaN statistics for empty bins.
Curve ratio_vs_distance(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred,
                        const flows::DistanceTable& d, double min_flow,
                        const std::vector<double>& bin_edges_km);

/// CPC per (distance, destination population) cell for each named model,
/// plus difference grids of every model against the first one.
EvalReport cpc_grid(const flows::FlowMatrix& truth,
                    const std::vector<std::pair<std::string, flows::FlowMatrix>>& preds,
                    const flows::DistanceTable& d, const ingest::PopulationTable& pop,
                    const std::vector<double>& distance_edges_km,
                    const std::vector<double>& population_edges);

}  // namespace mobility::eval
