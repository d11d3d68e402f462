#include "mobility/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mobility::stats {

double mean(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty sample");
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");

    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: zero variance in a series");
    return sxy / std::sqrt(sxx * syy);
}

double r_squared(const std::vector<double>& truth, const std::vector<double>& predicted) {
    if (truth.size() != predicted.size())
        throw std::invalid_argument("r_squared: length mismatch");
    if (truth.size() < 2) throw std::invalid_argument("r_squared: need at least 2 points");

    const double my = mean(truth);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double res = truth[i] - predicted[i];
        const double dev = truth[i] - my;
        ss_res += res * res;
        ss_tot += dev * dev;
    }
    if (ss_tot == 0.0) throw std::invalid_argument("r_squared: zero variance in the truth series");
    return 1.0 - ss_res / ss_tot;
}

double quantile(std::vector<double> sample, double q) {
    if (sample.empty()) throw std::invalid_argument("quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0, 1]");
    std::sort(sample.begin(), sample.end());
    const double pos = q * static_cast<double>(sample.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sample.size()) return sample.back();
    const double frac = pos - static_cast<double>(lo);
    return sample[lo] + (sample[lo + 1] - sample[lo]) * frac;
}

}  // namespace mobility::stats
