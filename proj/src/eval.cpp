#include "mobility/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mobility/stats.hpp"

namespace mobility::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<flows::PairKey> support_keys(const flows::FlowMatrix& m) {
    std::vector<flows::PairKey> keys;
    keys.reserve(m.size());
    for (const auto& [key, value] : m.entries()) keys.push_back(key);
    return keys;
}

flows::FlowMatrix subset(const flows::FlowMatrix& m, const std::vector<flows::PairKey>& keys) {
    std::map<flows::PairKey, double> entries;
    for (const auto& key : keys) entries.emplace(key, m.value(key.first, key.second));
    return flows::FlowMatrix(m.node_ids(), std::move(entries), m.symmetric_flag());
}

/// One training pass: all three models fitted on the same split, plus their
/// in-sample losses for the stacking comparison.
struct Fitted {
    models::GravityParams gravity;
    double trace_scale = 0.0;
    models::HybridParams hybrid;
    double loss_gravity = 0.0;
    double loss_trace = 0.0;
    double loss_hybrid = 0.0;
};

Fitted fit_all(const flows::FlowMatrix& train, const ModelInputs& in) {
    Fitted out;
    out.gravity = models::fit_gravity(train, in.population, in.distances, in.kind);

    const std::vector<flows::PairKey> keys = support_keys(train);
    const flows::FlowMatrix g = models::predict_gravity(out.gravity, in.population, in.distances, keys);

    // Best single scale for the trace flows alone: c = <y,f> / <f,f>.
    long double syf = 0.0L;
    long double sff = 0.0L;
    for (const auto& [key, y] : train.entries()) {
        const long double f = in.trace_flows.value(key.first, key.second);
        syf += y * f;
        sff += f * f;
    }
    out.trace_scale = sff > 0.0L ? static_cast<double>(syf / sff) : 0.0;

    out.hybrid = models::fit_hybrid(train, g, in.trace_flows, out.gravity);
    const flows::FlowMatrix h = models::predict_hybrid(out.hybrid, g, in.trace_flows, keys);

    std::map<flows::PairKey, double> scaled;
    for (const auto& key : keys) {
        const double v = out.trace_scale * in.trace_flows.value(key.first, key.second);
        if (v > 0.0) scaled.emplace(key, v);
    }
    const flows::FlowMatrix t(train.node_ids(), std::move(scaled), train.symmetric_flag());

    out.loss_gravity = models::loss(train, g);
    out.loss_trace = models::loss(train, t);
    out.loss_hybrid = models::loss(train, h);
    return out;
}

/// Out-of-sample values for the held-out keys, one map per model. The maps
/// keep explicit zeros so pooled series stay aligned with the truth.
struct TestPredictions {
    std::map<flows::PairKey, double> gravity;
    std::map<flows::PairKey, double> trace;
    std::map<flows::PairKey, double> hybrid;
};

TestPredictions predict_on(const Fitted& fit, const std::vector<flows::PairKey>& keys,
                           const ModelInputs& in) {
    TestPredictions out;
    const flows::FlowMatrix g = models::predict_gravity(fit.gravity, in.population, in.distances, keys);
    const flows::FlowMatrix h = models::predict_hybrid(fit.hybrid, g, in.trace_flows, keys);
    for (const auto& key : keys) {
        out.gravity[key] = g.value(key.first, key.second);
        out.trace[key] = fit.trace_scale * in.trace_flows.value(key.first, key.second);
        out.hybrid[key] = h.value(key.first, key.second);
    }
    return out;
}

/// Metrics of one prediction map against the truth restricted to the tested
/// keys. With allow_degenerate, an undefined correlation becomes NaN instead
/// of an error (used for per-fold reporting on tiny splits).
ModelMetrics score(const flows::FlowMatrix& truth_subset,
                   const std::map<flows::PairKey, double>& pred, bool allow_degenerate) {
    PairedSeries series;
    std::map<flows::PairKey, double> positive;
    for (const auto& [key, y] : truth_subset.entries()) {
        const double p = pred.at(key);
        series.truth.push_back(y);
        series.predicted.push_back(p);
        if (p > 0.0) positive.emplace(key, p);
    }
    ModelMetrics m;
    try {
        m.pearson = pearson(series);
        m.r_squared = r_squared(series);
    } catch (const std::invalid_argument&) {
        if (!allow_degenerate) throw;
        m.pearson = kNaN;
        m.r_squared = kNaN;
    }
    const flows::FlowMatrix pred_fm(truth_subset.node_ids(), std::move(positive),
                                    truth_subset.symmetric_flag());
    m.cpc = cpc(pred_fm, truth_subset);
    return m;
}

std::map<std::string, ModelMetrics> score_all(const flows::FlowMatrix& truth_subset,
                                              const TestPredictions& preds,
                                              bool allow_degenerate) {
    std::map<std::string, ModelMetrics> out;
    out.emplace(kModelGravity, score(truth_subset, preds.gravity, allow_degenerate));
    out.emplace(kModelTrace, score(truth_subset, preds.trace, allow_degenerate));
    out.emplace(kModelHybrid, score(truth_subset, preds.hybrid, allow_degenerate));
    return out;
}

void merge_into(TestPredictions& pooled, const TestPredictions& fold) {
    pooled.gravity.insert(fold.gravity.begin(), fold.gravity.end());
    pooled.trace.insert(fold.trace.begin(), fold.trace.end());
    pooled.hybrid.insert(fold.hybrid.begin(), fold.hybrid.end());
}

FoldDetail detail_of(std::string label, const Fitted& fit, std::size_t train_size,
                     std::size_t test_size) {
    FoldDetail d;
    d.label = std::move(label);
    d.gravity = fit.gravity;
    d.hybrid_a = fit.hybrid.A;
    d.hybrid_b = fit.hybrid.B;
    d.trace_scale = fit.trace_scale;
    d.train_loss_gravity = fit.loss_gravity;
    d.train_loss_trace = fit.loss_trace;
    d.train_loss_hybrid = fit.loss_hybrid;
    d.train_size = train_size;
    d.test_size = test_size;
    return d;
}

void check_edges(const std::vector<double>& edges, const char* what) {
    if (edges.size() < 2)
        throw std::invalid_argument(std::string(what) + ": need at least two bin edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw std::invalid_argument(std::string(what) + ": bin edges must be strictly increasing");
}

/// Index of the half-open bin [edges[b], edges[b+1]) holding x, or npos.
std::size_t bin_of(double x, const std::vector<double>& edges) {
    if (!(x >= edges.front()) || !(x < edges.back())) return std::string::npos;
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    return static_cast<std::size_t>(it - edges.begin()) - 1;
}

}  // namespace

FullFit fit_full(const flows::FlowMatrix& truth, const ModelInputs& inputs) {
    const Fitted fit = fit_all(truth, inputs);
    const std::vector<flows::PairKey> keys = support_keys(truth);

    FullFit out;
    out.gravity = fit.gravity;
    out.trace_scale = fit.trace_scale;
    out.hybrid = fit.hybrid;
    out.gravity_pred = models::predict_gravity(fit.gravity, inputs.population, inputs.distances, keys);
    out.hybrid_pred = models::predict_hybrid(fit.hybrid, out.gravity_pred, inputs.trace_flows, keys);
    std::map<flows::PairKey, double> scaled;
    for (const auto& key : keys) {
        const double v = fit.trace_scale * inputs.trace_flows.value(key.first, key.second);
        if (v > 0.0) scaled.emplace(key, v);
    }
    out.trace_pred = flows::FlowMatrix(truth.node_ids(), std::move(scaled), truth.symmetric_flag());
    out.loss_gravity = fit.loss_gravity;
    out.loss_trace = fit.loss_trace;
    out.loss_hybrid = fit.loss_hybrid;
    return out;
}

PairedSeries paired_on_union(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred) {
    PairedSeries s;
    for (const auto& [key, y] : truth.entries()) {
        s.truth.push_back(y);
        s.predicted.push_back(pred.value(key.first, key.second));
    }
    for (const auto& [key, p] : pred.entries()) {
        if (truth.contains(key)) continue;
        s.truth.push_back(0.0);
        s.predicted.push_back(p);
    }
    return s;
}

PairedSeries paired_on_support(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred) {
    PairedSeries s;
    for (const auto& [key, y] : truth.entries()) {
        s.truth.push_back(y);
        s.predicted.push_back(pred.value(key.first, key.second));
    }
    return s;
}

double pearson(const PairedSeries& s) { return stats::pearson(s.truth, s.predicted); }

double r_squared(const PairedSeries& s) { return stats::r_squared(s.truth, s.predicted); }

double cpc(const flows::FlowMatrix& h, const flows::FlowMatrix& y) {
    long double common = 0.0L;
    long double total_h = 0.0L;
    long double total_y = 0.0L;
    for (const auto& [key, hv] : h.entries()) {
        total_h += hv;
        common += std::min(hv, y.value(key.first, key.second));
    }
    for (const auto& [key, yv] : y.entries()) total_y += yv;
    const long double denom = total_h + total_y;
    if (denom <= 0.0L) throw std::invalid_argument("cpc: both matrices are empty");
    return static_cast<double>(2.0L * common / denom);
}

EvalReport kfold_cv(const flows::FlowMatrix& truth, const ModelInputs& inputs, int k,
                    std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_cv: k must be at least 2");
    const std::size_t n = truth.size();
    if (n < static_cast<std::size_t>(k))
        throw std::invalid_argument("kfold_cv: fewer positive entries than folds");

    std::vector<flows::PairKey> keys = support_keys(truth);
    stats::Rng rng(seed);
    stats::shuffle(keys, rng);

    EvalReport report;
    report.scheme = "kfold";
    report.seed = seed;

    TestPredictions pooled;
    for (int fold = 0; fold < k; ++fold) {
        const std::size_t lo = n * static_cast<std::size_t>(fold) / static_cast<std::size_t>(k);
        const std::size_t hi = n * static_cast<std::size_t>(fold + 1) / static_cast<std::size_t>(k);
        std::vector<flows::PairKey> test_keys(keys.begin() + lo, keys.begin() + hi);
        std::vector<flows::PairKey> train_keys;
        train_keys.reserve(n - test_keys.size());
        train_keys.insert(train_keys.end(), keys.begin(), keys.begin() + lo);
        train_keys.insert(train_keys.end(), keys.begin() + hi, keys.end());

        const std::string label = "fold-" + std::to_string(fold);
        try {
            const flows::FlowMatrix train = subset(truth, train_keys);
            const Fitted fit = fit_all(train, inputs);
            const TestPredictions preds = predict_on(fit, test_keys, inputs);
            merge_into(pooled, preds);

            FoldDetail detail = detail_of(label, fit, train_keys.size(), test_keys.size());
            detail.test_metrics = score_all(subset(truth, test_keys), preds, true);
            report.folds.push_back(std::move(detail));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("kfold_cv: " + label + ": " + e.what());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("kfold_cv: " + label + ": " + e.what());
        }
    }

    report.models = score_all(truth, pooled, false);
    return report;
}

EvalReport spatial_cv(const flows::FlowMatrix& truth,
                      const std::map<std::string, geo::GeoPoint>& node_locations,
                      const ModelInputs& inputs, double meridian_lon) {
    const auto side_of = [&](const std::string& node) {
        const auto it = node_locations.find(node);
        if (it == node_locations.end())
            throw std::runtime_error("spatial_cv: no location for node " + node);
        return it->second.lon() < meridian_lon;  // true = west
    };

    std::vector<flows::PairKey> west_keys;
    std::vector<flows::PairKey> east_keys;
    std::size_t crossing = 0;
    for (const auto& [key, value] : truth.entries()) {
        const bool origin_west = side_of(key.first);
        const bool dest_west = side_of(key.second);
        if (origin_west != dest_west) {
            ++crossing;
            continue;
        }
        (origin_west ? west_keys : east_keys).push_back(key);
    }

    EvalReport report;
    report.scheme = "spatial";
    report.seed = 0;
    report.notes.push_back("meridian " + std::to_string(meridian_lon) + ": west flows " +
                           std::to_string(west_keys.size()) + ", east flows " +
                           std::to_string(east_keys.size()) + ", discarded crossing flows " +
                           std::to_string(crossing));

    struct Direction {
        const char* label;
        const std::vector<flows::PairKey>* train;
        const std::vector<flows::PairKey>* test;
    };
    const Direction directions[] = {{"west-to-east", &west_keys, &east_keys},
                                    {"east-to-west", &east_keys, &west_keys}};

    TestPredictions pooled;
    std::vector<flows::PairKey> tested;
    for (const Direction& dir : directions) {
        try {
            if (dir.test->empty())
                throw std::runtime_error("no flows on the held-out side of the meridian");
            const flows::FlowMatrix train = subset(truth, *dir.train);
            const Fitted fit = fit_all(train, inputs);
            const TestPredictions preds = predict_on(fit, *dir.test, inputs);
            merge_into(pooled, preds);
            tested.insert(tested.end(), dir.test->begin(), dir.test->end());

            FoldDetail detail = detail_of(dir.label, fit, dir.train->size(), dir.test->size());
            detail.test_metrics = score_all(subset(truth, *dir.test), preds, true);
            report.folds.push_back(std::move(detail));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("spatial_cv: " + std::string(dir.label) + ": " + e.what());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("spatial_cv: " + std::string(dir.label) + ": " + e.what());
        }
    }

    report.models = score_all(subset(truth, tested), pooled, false);
    return report;
}

EvalReport learning_curve(const flows::FlowMatrix& truth, const ModelInputs& inputs,
                          const std::vector<double>& fractions, int repeats,
                          std::uint64_t seed) {
    if (repeats < 1) throw std::invalid_argument("learning_curve: repeats must be at least 1");
    if (fractions.empty()) throw std::invalid_argument("learning_curve: no training fractions");
    const std::size_t n = truth.size();

    EvalReport report;
    report.scheme = "learning-curve";
    report.seed = seed;

    const std::vector<std::string> names = {kModelGravity, kModelTrace, kModelHybrid};
    std::map<std::string, Curve> curves;
    for (const auto& name : names)
        curves[name].columns = {"fraction", "mean_r2", "q1", "q3"};

    std::vector<flows::PairKey> keys = support_keys(truth);
    stats::Rng rng(seed);

    for (const double fraction : fractions) {
        const std::string tag = "learning_curve: fraction " + std::to_string(fraction);
        if (!(fraction > 0.0) || !(fraction < 1.0))
            throw std::invalid_argument(tag + ": must lie strictly between 0 and 1");
        const auto train_size = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
        if (train_size < 1) throw std::invalid_argument(tag + ": empty training split");
        if (train_size >= n) throw std::invalid_argument(tag + ": empty test split");

        std::map<std::string, std::vector<double>> samples;
        for (int rep = 0; rep < repeats; ++rep) {
            stats::shuffle(keys, rng);
            const std::vector<flows::PairKey> train_keys(keys.begin(), keys.begin() + train_size);
            std::vector<flows::PairKey> test_keys(keys.begin() + train_size, keys.end());
            std::sort(test_keys.begin(), test_keys.end());

            TestPredictions preds;
            flows::FlowMatrix held_out;
            try {
                const Fitted fit = fit_all(subset(truth, train_keys), inputs);
                preds = predict_on(fit, test_keys, inputs);
                held_out = subset(truth, test_keys);
            } catch (const std::exception& e) {
                throw std::runtime_error(tag + ", repeat " + std::to_string(rep) + ": " + e.what());
            }
            const std::map<std::string, ModelMetrics> metrics = score_all(held_out, preds, true);
            for (const auto& name : names) {
                const double r2 = metrics.at(name).r_squared;
                if (std::isfinite(r2)) samples[name].push_back(r2);
            }
        }

        for (const auto& name : names) {
            const std::vector<double>& valid = samples[name];
            std::vector<double> row = {fraction, kNaN, kNaN, kNaN};
            if (valid.empty()) {
                report.notes.push_back("fraction " + std::to_string(fraction) + ": every repeat had a degenerate test series for " + name);
            } else {
                row[1] = stats::mean(valid);
                row[2] = stats::quantile(valid, 0.25);
                row[3] = stats::quantile(valid, 0.75);
            }
            curves[name].rows.push_back(std::move(row));
        }
    }

    for (const auto& name : names) report.curves.emplace_back(name, std::move(curves[name]));
    return report;
}

EvalReport thresholded_r2(const flows::FlowMatrix& truth,
                          const std::vector<std::pair<std::string, flows::FlowMatrix>>& preds,
                          const std::vector<double>& thresholds) {
    if (preds.empty()) throw std::invalid_argument("thresholded_r2: no models to score");
    if (thresholds.empty()) throw std::invalid_argument("thresholded_r2: no thresholds");

    EvalReport report;
    report.scheme = "thresholded-r2";
    report.seed = 0;

    std::vector<Curve> curves(preds.size());
    for (Curve& c : curves) c.columns = {"threshold", "r_squared"};

    for (const double t : thresholds) {
        std::vector<flows::PairKey> surviving;
        for (const auto& [key, y] : truth.entries())
            if (y > t) surviving.push_back(key);
        if (surviving.size() < 3) {
            report.notes.push_back("threshold " + std::to_string(t) + ": only " +
                                   std::to_string(surviving.size()) +
                                   " entries above it, point omitted");
            continue;
        }
        std::vector<double> y_values;
        y_values.reserve(surviving.size());
        for (const auto& key : surviving) y_values.push_back(truth.value(key.first, key.second));

        for (std::size_t m = 0; m < preds.size(); ++m) {
            std::vector<double> p_values;
            p_values.reserve(surviving.size());
            for (const auto& key : surviving)
                p_values.push_back(preds[m].second.value(key.first, key.second));
            double r2 = kNaN;
            try {
                r2 = stats::r_squared(y_values, p_values);
            } catch (const std::invalid_argument&) {
                report.notes.push_back("threshold " + std::to_string(t) +
                                       ": degenerate truth series for " + preds[m].first);
            }
            curves[m].rows.push_back({t, r2});
        }
    }

    for (std::size_t m = 0; m < preds.size(); ++m)
        report.curves.emplace_back(preds[m].first, std::move(curves[m]));
    return report;
}

Curve ratio_vs_distance(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred,
                        const flows::DistanceTable& d, double min_flow,
                        const std::vector<double>& bin_edges_km) {
    check_edges(bin_edges_km, "ratio_vs_distance");

    std::vector<std::vector<double>> ratios(bin_edges_km.size() - 1);
    for (const auto& [key, y] : truth.entries()) {
        if (!(y > min_flow)) continue;
        const std::size_t bin = bin_of(d.distance(key.first, key.second), bin_edges_km);
        if (bin == std::string::npos) continue;
        ratios[bin].push_back(pred.value(key.first, key.second) / y);
    }

    Curve curve;
    curve.columns = {"bin_mid_km", "median_ratio", "q1", "q3"};
    for (std::size_t b = 0; b + 1 < bin_edges_km.size(); ++b) {
        std::vector<double> row = {(bin_edges_km[b] + bin_edges_km[b + 1]) / 2.0, kNaN, kNaN, kNaN};
        if (!ratios[b].empty()) {
            row[1] = stats::quantile(ratios[b], 0.5);
            row[2] = stats::quantile(ratios[b], 0.25);
            row[3] = stats::quantile(ratios[b], 0.75);
        }
        curve.rows.push_back(std::move(row));
    }
    return curve;
}

EvalReport cpc_grid(const flows::FlowMatrix& truth,
                    const std::vector<std::pair<std::string, flows::FlowMatrix>>& preds,
                    const flows::DistanceTable& d, const ingest::PopulationTable& pop,
                    const std::vector<double>& distance_edges_km,
                    const std::vector<double>& population_edges) {
    if (preds.empty()) throw std::invalid_argument("cpc_grid: no models to score");
    check_edges(distance_edges_km, "cpc_grid distance");
    check_edges(population_edges, "cpc_grid population");

    const std::size_t rows = distance_edges_km.size() - 1;
    const std::size_t cols = population_edges.size() - 1;

    // Cell of a pair, keyed by distance and destination population; npos/npos
    // when it falls outside the grid. Memoized so that a pair shared by
    // several models is classified (and counted as out of range) once.
    std::size_t out_of_range = 0;
    std::map<flows::PairKey, std::pair<std::size_t, std::size_t>> cell_cache;
    const auto cell_of = [&](const flows::PairKey& key) {
        const auto it = cell_cache.find(key);
        if (it != cell_cache.end()) return it->second;
        const auto pj = pop.get(key.second);
        if (!pj) throw std::runtime_error("cpc_grid: no population for node " + key.second);
        std::pair<std::size_t, std::size_t> cell{
            bin_of(d.distance(key.first, key.second), distance_edges_km),
            bin_of(*pj, population_edges)};
        if (cell.first == std::string::npos || cell.second == std::string::npos) {
            ++out_of_range;
            cell = {std::string::npos, std::string::npos};
        }
        cell_cache.emplace(key, cell);
        return cell;
    };

    EvalReport report;
    report.scheme = "cpc-grid";
    report.seed = 0;

    std::vector<GridData> grids(preds.size());
    for (std::size_t m = 0; m < preds.size(); ++m) {
        const flows::FlowMatrix& pred = preds[m].second;

        struct CellSums {
            long double common = 0.0L;
            long double total = 0.0L;  // sum of h plus sum of y
            bool any = false;
        };
        std::vector<std::vector<CellSums>> cells(rows, std::vector<CellSums>(cols));

        // Union of supports: prediction-only entries contribute mass with a
        // zero truth counterpart, truth-only entries the reverse.
        for (const auto& [key, y] : truth.entries()) {
            const auto [r, c] = cell_of(key);
            if (r == std::string::npos) continue;
            const double h = pred.value(key.first, key.second);
            cells[r][c].common += std::min(h, y);
            cells[r][c].total += h + y;
            cells[r][c].any = true;
        }
        for (const auto& [key, h] : pred.entries()) {
            if (truth.contains(key)) continue;
            const auto [r, c] = cell_of(key);
            if (r == std::string::npos) continue;
            cells[r][c].total += h;
            cells[r][c].any = true;
        }

        GridData& grid = grids[m];
        grid.distance_edges = distance_edges_km;
        grid.population_edges = population_edges;
        grid.values.assign(rows, std::vector<double>(cols, kNaN));
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const CellSums& s = cells[r][c];
                if (s.any && s.total > 0.0L)
                    grid.values[r][c] = static_cast<double>(2.0L * s.common / s.total);
            }
    }

    if (out_of_range > 0)
        report.notes.push_back(std::to_string(out_of_range) +
                               " pair lookups fell outside the grid and were ignored");

    for (std::size_t m = 0; m < preds.size(); ++m)
        report.grids.emplace_back("cpc/" + preds[m].first, grids[m]);
    for (std::size_t m = 1; m < preds.size(); ++m) {
        GridData diff = grids[m];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                diff.values[r][c] = grids[m].values[r][c] - grids[0].values[r][c];
        report.grids.emplace_back("cpc_diff/" + preds[m].first + "-minus-" + preds[0].first,
                                  std::move(diff));
    }
    return report;
}

}  // namespace mobility::eval
