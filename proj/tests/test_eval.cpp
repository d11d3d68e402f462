#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobility/eval.hpp"
#include "mobility/flows.hpp"
#include "mobility/io.hpp"
#include "mobility/models.hpp"
#include "mobility/stats.hpp"
#include "oracles.hpp"

using namespace mobility;
using flows::PairKey;

namespace {

struct Synthetic {
    eval::ModelInputs inputs;
    flows::FlowMatrix truth;
    std::map<std::string, geo::GeoPoint> locations;
};

// A fully-connected world. noise = 0 makes the truth an exact gravity law;
// otherwise the truth mixes a jittered gravity term with the trace flows.
Synthetic make_synthetic(int n_nodes, std::uint64_t seed, double noise) {
    oracle::Rand rng(seed);
    Synthetic s;
    for (int i = 0; i < n_nodes; ++i) {
        const std::string id = (i < 10 ? "n0" : "n") + std::to_string(i);
        s.locations.emplace(id, geo::GeoPoint(rng.uniform(28.0, 47.0),
                                              rng.uniform(-123.0, -70.0)));
        s.inputs.population.add(id, rng.uniform(5e4, 5e6));
    }
    s.inputs.distances = flows::DistanceTable(s.locations);
    s.inputs.kind = models::DeterrenceKind::power;

    std::vector<PairKey> pairs;
    for (const auto& [a, pa] : s.locations)
        for (const auto& [b, pb] : s.locations)
            if (a != b) pairs.push_back({a, b});

    const models::GravityParams base{3.0, 0.8, 0.6, 2.0, models::DeterrenceKind::power};
    const flows::FlowMatrix g =
        models::predict_gravity(base, s.inputs.population, s.inputs.distances, pairs);

    std::map<PairKey, double> f_entries, y_entries;
    for (const auto& pair : pairs) {
        const double fv = rng.uniform(0.5, 30.0);
        f_entries.emplace(pair, fv);
        const double gv = g.value(pair.first, pair.second);
        const double yv = noise == 0.0
                              ? gv
                              : gv * (1.0 + rng.uniform(-noise, noise)) +
                                    fv * rng.uniform(0.0, noise);
        y_entries.emplace(pair, yv);
    }
    s.inputs.trace_flows = flows::FlowMatrix(f_entries);
    s.truth = flows::FlowMatrix(y_entries);
    return s;
}

flows::FlowMatrix from_values(const std::map<PairKey, double>& entries) {
    return flows::FlowMatrix(entries);
}

}  // namespace

TEST_CASE("paired series: union vs support alignment") {
    const flows::FlowMatrix truth = from_values({{{"a", "b"}, 4.0}, {{"b", "c"}, 2.0}});
    const flows::FlowMatrix pred = from_values({{{"a", "b"}, 3.0}, {{"c", "a"}, 9.0}});

    const eval::PairedSeries u = eval::paired_on_union(truth, pred);
    REQUIRE(u.truth.size() == 3);  // (a,b), (b,c), plus prediction-only (c,a)
    CHECK(u.truth == std::vector<double>{4.0, 2.0, 0.0});
    CHECK(u.predicted == std::vector<double>{3.0, 0.0, 9.0});

    const eval::PairedSeries s = eval::paired_on_support(truth, pred);
    CHECK(s.truth == std::vector<double>{4.0, 2.0});
    CHECK(s.predicted == std::vector<double>{3.0, 0.0});
}

TEST_CASE("pearson identities and affine invariance") {
    eval::PairedSeries same;
    same.truth = {1.0, 5.0, 2.0, 8.0};
    same.predicted = same.truth;
    CHECK(eval::pearson(same) == doctest::Approx(1.0).epsilon(1e-12));

    eval::PairedSeries anti;
    anti.truth = {1.0, 5.0, 2.0, 8.0};
    anti.predicted = {-1.0, -5.0, -2.0, -8.0};
    CHECK(eval::pearson(anti) == doctest::Approx(-1.0).epsilon(1e-12));

    eval::PairedSeries scaled;
    scaled.truth = {1.0, 5.0, 2.0, 8.0};
    scaled.predicted = {7.0, 3.0, 4.0, 1.0};
    eval::PairedSeries affine = scaled;
    for (double& v : affine.predicted) v = 2.0 * v + 3.0;
    CHECK(eval::pearson(affine) == doctest::Approx(eval::pearson(scaled)).epsilon(1e-12));

    eval::PairedSeries constant;
    constant.truth = {1.0, 2.0, 3.0};
    constant.predicted = {4.0, 4.0, 4.0};
    CHECK_THROWS_AS(eval::pearson(constant), std::invalid_argument);
}

TEST_CASE("pearson and r_squared match textbook oracles within 1e-12") {
    oracle::Rand rng(61);
    for (int round = 0; round < 5; ++round) {
        eval::PairedSeries s;
        for (int i = 0; i < 100; ++i) {
            s.truth.push_back(rng.uniform(0.0, 1000.0));
            s.predicted.push_back(rng.uniform(0.0, 1000.0));
        }
        CHECK(eval::pearson(s) ==
              doctest::Approx(oracle::pearson(s.truth, s.predicted)).epsilon(1e-12));
        CHECK(eval::r_squared(s) ==
              doctest::Approx(oracle::r_squared(s.truth, s.predicted)).epsilon(1e-12));
    }
}

TEST_CASE("r_squared: mean predictor and worse-than-mean predictors") {
    eval::PairedSeries s;
    s.truth = {2.0, 6.0, 7.0, 9.0};
    const double mean = stats::mean(s.truth);

    s.predicted.assign(s.truth.size(), mean);
    CHECK(eval::r_squared(s) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));

    // pred = mean + 2(y - mean) leaves |residual| = |y - mean|: still 0.
    for (std::size_t i = 0; i < s.truth.size(); ++i)
        s.predicted[i] = mean + 2.0 * (s.truth[i] - mean);
    CHECK(eval::r_squared(s) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

    // pred = mean + 3(y - mean) doubles the residual: 1 - 4 = -3.
    for (std::size_t i = 0; i < s.truth.size(); ++i)
        s.predicted[i] = mean + 3.0 * (s.truth[i] - mean);
    CHECK(eval::r_squared(s) == doctest::Approx(-3.0).epsilon(1e-12));

    eval::PairedSeries flat;
    flat.truth = {5.0, 5.0, 5.0};
    flat.predicted = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(eval::r_squared(flat), std::invalid_argument);
}

TEST_CASE("cpc identities") {
    const flows::FlowMatrix y = from_values({{{"a", "b"}, 1.0}, {{"b", "c"}, 2.0}});
    CHECK(eval::cpc(y, y) == 1.0);

    const flows::FlowMatrix elsewhere = from_values({{{"x", "y"}, 5.0}});
    CHECK(eval::cpc(elsewhere, y) == 0.0);
    CHECK(eval::cpc(flows::FlowMatrix{}, y) == 0.0);

    const flows::FlowMatrix doubled = from_values({{{"a", "b"}, 2.0}, {{"b", "c"}, 4.0}});
    CHECK(eval::cpc(doubled, y) == 2.0 / 3.0);  // min(2y,y)=y forces 2Σy/3Σy

    CHECK_THROWS_AS(eval::cpc(flows::FlowMatrix{}, flows::FlowMatrix{}), std::invalid_argument);
}

TEST_CASE("cpc is symmetric, bounded, and 1 only for identical matrices") {
    oracle::Rand rng(67);
    for (int round = 0; round < 30; ++round) {
        std::map<PairKey, double> am, bm;
        for (int i = 0; i < 12; ++i) {
            const PairKey key{"p" + std::to_string(rng.below(5)),
                              "q" + std::to_string(rng.below(5))};
            if (rng.below(2) == 0) am[key] += rng.uniform(0.1, 20.0);
            if (rng.below(2) == 0) bm[key] += rng.uniform(0.1, 20.0);
        }
        if (am.empty() && bm.empty()) continue;
        const flows::FlowMatrix a = from_values(am);
        const flows::FlowMatrix b = from_values(bm);
        const double ab = eval::cpc(a, b);
        CHECK(ab == doctest::Approx(eval::cpc(b, a)).epsilon(1e-15));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
    }

    const flows::FlowMatrix y = from_values({{{"a", "b"}, 3.0}, {{"b", "c"}, 5.0}});
    const flows::FlowMatrix nudged = from_values({{{"a", "b"}, 3.0}, {{"b", "c"}, 5.05}});
    CHECK(eval::cpc(nudged, y) < 1.0);
    const flows::FlowMatrix missing = from_values({{{"a", "b"}, 3.0}});
    CHECK(eval::cpc(missing, y) < 1.0);
}

TEST_CASE("fit_full: losses, trace scale and stacking dominance in-sample") {
    const Synthetic s = make_synthetic(8, 71, 0.4);
    const eval::FullFit fit = eval::fit_full(s.truth, s.inputs);

    // The trace scale has a closed form.
    long double syf = 0.0L, sff = 0.0L;
    for (const auto& [key, y] : s.truth.entries()) {
        const long double f = s.inputs.trace_flows.value(key.first, key.second);
        syf += y * f;
        sff += f * f;
    }
    CHECK(fit.trace_scale == doctest::Approx(static_cast<double>(syf / sff)).epsilon(1e-12));

    CHECK(fit.loss_gravity == models::loss(s.truth, fit.gravity_pred));
    CHECK(fit.loss_trace == models::loss(s.truth, fit.trace_pred));
    CHECK(fit.loss_hybrid == models::loss(s.truth, fit.hybrid_pred));

    // Least-squares optimality: the stack can never lose to its corners on
    // the data it was fitted on.
    CHECK(fit.loss_hybrid <= fit.loss_gravity);
    CHECK(fit.loss_hybrid <= fit.loss_trace);

    CHECK(fit.gravity_pred.size() == s.truth.size());
    CHECK(fit.hybrid.gravity.K == fit.gravity.K);
}

TEST_CASE("fit_full on an exact gravity law reproduces the truth") {
    const Synthetic s = make_synthetic(8, 73, 0.0);
    const eval::FullFit fit = eval::fit_full(s.truth, s.inputs);
    CHECK(fit.loss_gravity == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
    CHECK(fit.loss_hybrid <= fit.loss_gravity);
    CHECK(fit.hybrid.A == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.hybrid.B == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("kfold_cv: exact recovery on noiseless gravity truth") {
    const Synthetic s = make_synthetic(10, 79, 0.0);
    const eval::EvalReport report = eval::kfold_cv(s.truth, s.inputs, 10, 4242);

    CHECK(report.scheme == "kfold");
    CHECK(report.seed == 4242);
    CHECK(report.models.at(eval::kModelGravity).r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.models.at(eval::kModelHybrid).r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.models.at(eval::kModelGravity).pearson == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.models.at(eval::kModelGravity).cpc == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(report.folds.size() == 10);

    // Fold sizes follow the contiguous-chunk rule over the shuffled support,
    // and together the chunks cover every entry exactly once.
    const std::size_t n = s.truth.size();
    std::size_t tested_total = 0;
    for (std::size_t f = 0; f < 10; ++f) {
        const std::size_t lo = n * f / 10;
        const std::size_t hi = n * (f + 1) / 10;
        CHECK(report.folds[f].label == "fold-" + std::to_string(f));
        CHECK(report.folds[f].test_size == hi - lo);
        CHECK(report.folds[f].train_size == n - (hi - lo));
        tested_total += report.folds[f].test_size;
    }
    CHECK(tested_total == n);
}

TEST_CASE("kfold_cv: stacking dominance holds in every fold") {
    const Synthetic s = make_synthetic(9, 83, 0.5);
    const eval::EvalReport report = eval::kfold_cv(s.truth, s.inputs, 4, 7);
    REQUIRE(report.folds.size() == 4);
    for (const eval::FoldDetail& fold : report.folds) {
        CHECK(fold.train_loss_hybrid <= fold.train_loss_gravity);
        CHECK(fold.train_loss_hybrid <= fold.train_loss_trace);
        CHECK(fold.trace_scale > 0.0);
    }
}

TEST_CASE("kfold_cv: leave-one-out boundary") {
    const Synthetic s = make_synthetic(4, 89, 0.3);  // 12 support entries
    const std::size_t n = s.truth.size();
    const eval::EvalReport report =
        eval::kfold_cv(s.truth, s.inputs, static_cast<int>(n), 1);
    REQUIRE(report.folds.size() == n);
    for (const eval::FoldDetail& fold : report.folds) {
        CHECK(fold.test_size == 1);
        // Single-point test series have no correlation; NaN marks that.
        CHECK(std::isnan(fold.test_metrics.at(eval::kModelGravity).r_squared));
    }
    CHECK(std::isfinite(report.models.at(eval::kModelHybrid).r_squared));
}

TEST_CASE("kfold_cv: determinism and seed sensitivity") {
    const Synthetic s = make_synthetic(8, 97, 0.5);
    const std::string a = io::report_to_json(eval::kfold_cv(s.truth, s.inputs, 5, 123));
    const std::string b = io::report_to_json(eval::kfold_cv(s.truth, s.inputs, 5, 123));
    const std::string c = io::report_to_json(eval::kfold_cv(s.truth, s.inputs, 5, 124));
    CHECK(a == b);
    CHECK(a != c);  // different seed shuffles different folds
}

TEST_CASE("kfold_cv: parameter validation and fold errors name the fold") {
    const Synthetic s = make_synthetic(8, 101, 0.2);
    CHECK_THROWS_AS(eval::kfold_cv(s.truth, s.inputs, 1, 0), std::invalid_argument);

    std::map<PairKey, double> five;
    int taken = 0;
    for (const auto& [key, y] : s.truth.entries()) {
        if (taken++ == 5) break;
        five.emplace(key, y);
    }
    const flows::FlowMatrix tiny(five);
    CHECK_THROWS_AS(eval::kfold_cv(tiny, s.inputs, 6, 0), std::invalid_argument);
    try {
        eval::kfold_cv(tiny, s.inputs, 2, 0);  // trains on 2-3 entries: too few
        FAIL("expected a fold failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("fold-0") != std::string::npos);
    }
}

TEST_CASE("spatial_cv: noiseless recovery and crossing-flow bookkeeping") {
    const Synthetic s = make_synthetic(12, 103, 0.0);
    // Split at the median longitude so both sides hold enough nodes to fit.
    std::vector<double> lons;
    for (const auto& [id, p] : s.locations) lons.push_back(p.lon());
    std::sort(lons.begin(), lons.end());
    const double meridian = (lons[5] + lons[6]) / 2.0;
    const eval::EvalReport report =
        eval::spatial_cv(s.truth, s.locations, s.inputs, meridian);

    CHECK(report.scheme == "spatial");
    CHECK(report.models.at(eval::kModelGravity).r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.models.at(eval::kModelHybrid).r_squared == doctest::Approx(1.0).epsilon(1e-9));

    // Count the side of every flow ourselves.
    std::size_t west = 0, east = 0, crossing = 0;
    for (const auto& [key, y] : s.truth.entries()) {
        const bool ow = s.locations.at(key.first).lon() < meridian;
        const bool dw = s.locations.at(key.second).lon() < meridian;
        if (ow != dw)
            ++crossing;
        else
            (ow ? west : east)++;
    }
    REQUIRE(report.folds.size() == 2);
    CHECK(report.folds[0].label == "west-to-east");
    CHECK(report.folds[0].train_size == west);
    CHECK(report.folds[0].test_size == east);
    CHECK(report.folds[1].label == "east-to-west");
    CHECK(report.folds[1].train_size == east);
    CHECK(report.folds[1].test_size == west);
    CHECK(crossing > 0);  // the fixture really exercises the discard rule
    REQUIRE(report.notes.size() == 1);
    CHECK(report.notes[0].find("discarded crossing flows " + std::to_string(crossing)) !=
          std::string::npos);
}

TEST_CASE("spatial_cv: everything on one side is an error") {
    Synthetic s = make_synthetic(8, 107, 0.0);
    try {
        eval::spatial_cv(s.truth, s.locations, s.inputs, -60.0);  // nothing east
        FAIL("expected a degenerate-split failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("held-out side") != std::string::npos);
    }

    std::map<std::string, geo::GeoPoint> missing = s.locations;
    missing.erase(missing.begin());
    CHECK_THROWS_AS(eval::spatial_cv(s.truth, missing, s.inputs, -102.0), std::runtime_error);
}

TEST_CASE("learning_curve: one point per fraction, noiseless gravity stays at 1") {
    const Synthetic s = make_synthetic(30, 109, 0.0);  // 870 support entries
    const std::vector<double> fractions = {0.01, 0.03, 0.1, 0.5};
    const eval::EvalReport report = eval::learning_curve(s.truth, s.inputs, fractions, 3, 99);

    CHECK(report.scheme == "learning-curve");
    REQUIRE(report.curves.size() == 3);
    for (const auto& [name, curve] : report.curves) {
        CHECK(curve.columns ==
              std::vector<std::string>{"fraction", "mean_r2", "q1", "q3"});
        REQUIRE(curve.rows.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) CHECK(curve.rows[i][0] == fractions[i]);
    }
    for (const auto& [name, curve] : report.curves) {
        if (name != eval::kModelGravity && name != eval::kModelHybrid) continue;
        for (const auto& row : curve.rows)
            CHECK(row[1] == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("learning_curve: determinism and input validation") {
    const Synthetic s = make_synthetic(8, 113, 0.4);
    const eval::EvalReport a = eval::learning_curve(s.truth, s.inputs, {0.5}, 1, 5);
    const eval::EvalReport b = eval::learning_curve(s.truth, s.inputs, {0.5}, 1, 5);
    CHECK(io::report_to_json(a) == io::report_to_json(b));

    CHECK_THROWS_AS(eval::learning_curve(s.truth, s.inputs, {0.5}, 0, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(eval::learning_curve(s.truth, s.inputs, {}, 1, 5), std::invalid_argument);
    CHECK_THROWS_AS(eval::learning_curve(s.truth, s.inputs, {1.0}, 1, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(eval::learning_curve(s.truth, s.inputs, {0.0}, 1, 5),
                    std::invalid_argument);

    // A fraction too small to train on names itself and the repeat.
    const Synthetic big = make_synthetic(30, 127, 0.0);  // 0.003 * 870 -> 3 entries
    try {
        eval::learning_curve(big.truth, big.inputs, {0.003}, 1, 5);
        FAIL("expected a too-small-fraction failure");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("fraction 0.003") != std::string::npos);
        CHECK(msg.find("repeat 0") != std::string::npos);
    }
}

TEST_CASE("thresholded_r2: threshold 0 equals the full-support r_squared") {
    const Synthetic s = make_synthetic(7, 131, 0.5);
    const eval::FullFit fit = eval::fit_full(s.truth, s.inputs);
    const eval::EvalReport report = eval::thresholded_r2(
        s.truth,
        {{eval::kModelGravity, fit.gravity_pred}, {eval::kModelHybrid, fit.hybrid_pred}},
        {0.0});

    CHECK(report.scheme == "thresholded-r2");
    REQUIRE(report.curves.size() == 2);
    const double full_gravity =
        eval::r_squared(eval::paired_on_support(s.truth, fit.gravity_pred));
    REQUIRE(report.curves[0].second.rows.size() == 1);
    CHECK(report.curves[0].first == eval::kModelGravity);
    CHECK(report.curves[0].second.rows[0][0] == 0.0);
    CHECK(report.curves[0].second.rows[0][1] == doctest::Approx(full_gravity).epsilon(1e-12));
    CHECK(report.curves[0].second.columns ==
          std::vector<std::string>{"threshold", "r_squared"});
}

TEST_CASE("thresholded_r2: sparse thresholds are omitted with a note") {
    const flows::FlowMatrix truth = from_values(
        {{{"a", "b"}, 1.0}, {{"b", "c"}, 2.0}, {{"c", "d"}, 7.0}, {{"d", "a"}, 7.0},
         {{"a", "c"}, 7.0}});
    const flows::FlowMatrix pred = from_values(
        {{{"a", "b"}, 1.5}, {{"b", "c"}, 2.5}, {{"c", "d"}, 6.0}, {{"d", "a"}, 8.0},
         {{"a", "c"}, 7.5}});

    const eval::EvalReport report =
        eval::thresholded_r2(truth, {{"m", pred}}, {0.0, 3.0, 100.0});
    REQUIRE(report.curves.size() == 1);
    const eval::Curve& curve = report.curves[0].second;
    REQUIRE(curve.rows.size() == 2);  // the 100.0 point is gone
    CHECK(curve.rows[0][0] == 0.0);
    CHECK(curve.rows[1][0] == 3.0);
    // Above 3 the surviving truth values are {7,7,7}: constant, so r² is NaN
    // and a note explains it.
    CHECK(std::isnan(curve.rows[1][1]));
    REQUIRE(report.notes.size() == 2);
    CHECK(report.notes[0].find("degenerate truth series") != std::string::npos);
    CHECK(report.notes[1].find("point omitted") != std::string::npos);

    CHECK_THROWS_AS(eval::thresholded_r2(truth, {}, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(eval::thresholded_r2(truth, {{"m", pred}}, {}), std::invalid_argument);
}

TEST_CASE("ratio_vs_distance: unit and scaled ratios land on the median") {
    // Distances: a-b ~111 km, a-c ~333 km, a-d ~555 km along a meridian.
    const flows::DistanceTable d({{"a", geo::GeoPoint(0.0, 10.0)},
                                  {"b", geo::GeoPoint(1.0, 10.0)},
                                  {"c", geo::GeoPoint(3.0, 10.0)},
                                  {"d", geo::GeoPoint(5.0, 10.0)}});
    const flows::FlowMatrix truth = from_values(
        {{{"a", "b"}, 200.0}, {{"a", "c"}, 150.0}, {{"a", "d"}, 300.0}, {{"b", "c"}, 120.0}});

    const std::vector<double> edges = {0.0, 250.0, 700.0};
    const eval::Curve unit = eval::ratio_vs_distance(truth, truth, d, 0.0, edges);
    CHECK(unit.columns ==
          std::vector<std::string>{"bin_mid_km", "median_ratio", "q1", "q3"});
    REQUIRE(unit.rows.size() == 2);
    CHECK(unit.rows[0][0] == 125.0);
    CHECK(unit.rows[1][0] == 475.0);
    CHECK(unit.rows[0][1] == 1.0);
    CHECK(unit.rows[1][1] == 1.0);

    std::map<PairKey, double> half;
    for (const auto& [key, y] : truth.entries()) half.emplace(key, 0.5 * y);
    const eval::Curve scaled = eval::ratio_vs_distance(truth, from_values(half), d, 0.0, edges);
    CHECK(scaled.rows[0][1] == 0.5);
    CHECK(scaled.rows[1][1] == 0.5);
    CHECK(scaled.rows[0][2] == 0.5);  // quartiles of a constant sample
    CHECK(scaled.rows[1][3] == 0.5);
}

TEST_CASE("ratio_vs_distance: min_flow is strict and empty bins are NaN") {
    const flows::DistanceTable d({{"a", geo::GeoPoint(0.0, 10.0)},
                                  {"b", geo::GeoPoint(1.0, 10.0)},
                                  {"c", geo::GeoPoint(5.0, 10.0)}});
    // y = 100 exactly must NOT survive a min_flow of 100 ("above 100").
    const flows::FlowMatrix truth = from_values({{{"a", "b"}, 100.0}, {{"a", "c"}, 101.0}});
    const eval::Curve curve =
        eval::ratio_vs_distance(truth, truth, d, 100.0, {0.0, 250.0, 700.0});
    REQUIRE(curve.rows.size() == 2);
    CHECK(std::isnan(curve.rows[0][1]));  // the 111 km bin lost its only entry
    CHECK(curve.rows[1][1] == 1.0);

    // Entries beyond the last edge fall out of every bin (half-open top).
    const eval::Curve clipped =
        eval::ratio_vs_distance(truth, truth, d, 0.0, {0.0, 250.0});
    REQUIRE(clipped.rows.size() == 1);
    CHECK(clipped.rows[0][1] == 1.0);

    CHECK_THROWS_AS(eval::ratio_vs_distance(truth, truth, d, 0.0, {100.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(eval::ratio_vs_distance(truth, truth, d, 0.0, {100.0, 100.0}),
                    std::invalid_argument);
}

TEST_CASE("cpc_grid: single cell equals global cpc, identical models diff to zero") {
    const Synthetic s = make_synthetic(6, 137, 0.5);
    const eval::FullFit fit = eval::fit_full(s.truth, s.inputs);

    const std::vector<double> d_edges = {0.0, 1e5};
    const std::vector<double> p_edges = {0.0, 1e9};
    const eval::EvalReport report = eval::cpc_grid(
        s.truth,
        {{eval::kModelGravity, fit.gravity_pred}, {eval::kModelHybrid, fit.hybrid_pred}},
        s.inputs.distances, s.inputs.population, d_edges, p_edges);

    CHECK(report.scheme == "cpc-grid");
    REQUIRE(report.grids.size() == 3);  // two cpc grids plus one difference
    CHECK(report.grids[0].first == "cpc/gravity");
    CHECK(report.grids[1].first == "cpc/hybrid");
    CHECK(report.grids[2].first == "cpc_diff/hybrid-minus-gravity");

    const double global = eval::cpc(fit.gravity_pred, s.truth);
    REQUIRE(report.grids[0].second.values.size() == 1);
    CHECK(report.grids[0].second.values[0][0] == doctest::Approx(global).epsilon(1e-12));

    const eval::EvalReport same = eval::cpc_grid(
        s.truth, {{"a", fit.gravity_pred}, {"b", fit.gravity_pred}},
        s.inputs.distances, s.inputs.population, d_edges, p_edges);
    CHECK(same.grids[2].second.values[0][0] == 0.0);
}

TEST_CASE("cpc_grid: in-cell identity, out-of-range pairs, validation") {
    // Two nodes 111 km apart and a third ~1000 km away; populations pick the
    // destination column.
    ingest::PopulationTable pop;
    pop.add("a", 1000.0);
    pop.add("b", 5000.0);   // column 0: population < 10000
    pop.add("c", 20000.0);  // column 1
    const flows::DistanceTable d({{"a", geo::GeoPoint(0.0, 10.0)},
                                  {"b", geo::GeoPoint(1.0, 10.0)},
                                  {"c", geo::GeoPoint(9.0, 10.0)}});
    const flows::FlowMatrix truth =
        from_values({{{"a", "b"}, 10.0}, {{"a", "c"}, 20.0}, {{"b", "c"}, 5.0}});

    const std::vector<double> d_edges = {0.0, 500.0, 2000.0};
    const std::vector<double> p_edges = {0.0, 10000.0, 1e6};
    const eval::EvalReport report = eval::cpc_grid(truth, {{"m", truth}}, d, pop,
                                                   d_edges, p_edges);
    const eval::GridData& grid = report.grids[0].second;
    REQUIRE(grid.values.size() == 2);
    REQUIRE(grid.values[0].size() == 2);
    CHECK(grid.values[0][0] == 1.0);          // (a,b): short distance, small dest
    CHECK(grid.values[1][1] == 1.0);          // (a,c) and (b,c): far, large dest
    CHECK(std::isnan(grid.values[0][1]));     // empty cells stay NaN
    CHECK(std::isnan(grid.values[1][0]));
    CHECK(grid.distance_edges == d_edges);
    CHECK(grid.population_edges == p_edges);
    CHECK(report.notes.empty());

    // Shrink the grid so (a,c) and (b,c) fall outside: noted once, even with
    // several models sharing the pairs.
    const eval::EvalReport clipped = eval::cpc_grid(truth, {{"m", truth}, {"n", truth}}, d,
                                                    pop, {0.0, 500.0}, p_edges);
    REQUIRE(clipped.notes.size() == 1);
    CHECK(clipped.notes[0] == "2 pair lookups fell outside the grid and were ignored");

    CHECK_THROWS_AS(eval::cpc_grid(truth, {}, d, pop, d_edges, p_edges),
                    std::invalid_argument);
    CHECK_THROWS_AS(eval::cpc_grid(truth, {{"m", truth}}, d, pop, {1.0}, p_edges),
                    std::invalid_argument);

    ingest::PopulationTable partial;
    partial.add("a", 1000.0);
    partial.add("b", 5000.0);
    CHECK_THROWS_AS(eval::cpc_grid(truth, {{"m", truth}}, d, partial, d_edges, p_edges),
                    std::runtime_error);
}
