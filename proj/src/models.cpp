#include "mobility/models.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mobility::models {

namespace {

constexpr double kMaxCondition = 1e12;

const char* kColumnNames[4] = {"intercept", "log_origin_population", "log_dest_population",
                               "distance_term"};

using Matrix4 = std::array<std::array<long double, 4>, 4>;
using Vector4 = std::array<long double, 4>;

// Jacobi eigenvalue sweep for the symmetric 4x4 normal matrix. Returns the
// eigenvalues and fills `small_direction` with the eigenvector of the
// smallest one, which points along the collinear combination.
Vector4 symmetric_eigenvalues(Matrix4 m, Vector4& small_direction) {
    Matrix4 v{};
    for (int i = 0; i < 4; ++i) v[i][i] = 1.0L;

    for (int sweep = 0; sweep < 64; ++sweep) {
        long double off = 0.0L;
        for (int p = 0; p < 4; ++p)
            for (int q = p + 1; q < 4; ++q) off += m[p][q] * m[p][q];
        if (off < 1e-30L) break;
        for (int p = 0; p < 4; ++p) {
            for (int q = p + 1; q < 4; ++q) {
                if (m[p][q] == 0.0L) continue;
                const long double theta = (m[q][q] - m[p][p]) / (2.0L * m[p][q]);
                const long double t =
                    (theta >= 0 ? 1.0L : -1.0L) /
                    (std::abs(theta) + std::sqrt(theta * theta + 1.0L));
                const long double c = 1.0L / std::sqrt(t * t + 1.0L);
                const long double s = t * c;
                for (int k = 0; k < 4; ++k) {
                    const long double mkp = m[k][p];
                    const long double mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < 4; ++k) {
                    const long double mpk = m[p][k];
                    const long double mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for (int k = 0; k < 4; ++k) {
                    const long double vkp = v[k][p];
                    const long double vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    Vector4 eig{};
    int smallest = 0;
    for (int i = 0; i < 4; ++i) {
        eig[i] = m[i][i];
        if (std::abs(eig[i]) < std::abs(eig[smallest])) smallest = i;
    }
    for (int i = 0; i < 4; ++i) small_direction[i] = v[i][smallest];
    return eig;
}

// Gaussian elimination with partial pivoting; the system is tiny.
Vector4 solve4(Matrix4 a, Vector4 b) {
    for (int col = 0; col < 4; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 4; ++row)
            if (std::abs(a[row][col]) > std::abs(a[pivot][col])) pivot = row;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        if (a[col][col] == 0.0L)
            throw std::runtime_error("fit_gravity: singular normal equations");
        for (int row = col + 1; row < 4; ++row) {
            const long double factor = a[row][col] / a[col][col];
            for (int k = col; k < 4; ++k) a[row][k] -= factor * a[col][k];
            b[row] -= factor * b[col];
        }
    }
    Vector4 x{};
    for (int row = 3; row >= 0; --row) {
        long double sum = b[row];
        for (int k = row + 1; k < 4; ++k) sum -= a[row][k] * x[k];
        x[row] = sum / a[row][row];
    }
    return x;
}

double deterrence(DeterrenceKind kind, double beta, double distance_km) {
    return kind == DeterrenceKind::power ? std::pow(distance_km, -beta)
                                         : std::exp(-beta * distance_km);
}

double population_or_throw(const ingest::PopulationTable& pop, const std::string& node,
                           const flows::PairKey& pair) {
    const auto p = pop.get(node);
    if (!p)
        throw std::runtime_error("missing population for node '" + node + "' (pair " +
                                 pair.first + " -> " + pair.second + ")");
    return *p;
}

}  // namespace

std::string to_string(DeterrenceKind kind) {
    return kind == DeterrenceKind::power ? "power" : "exponential";
}

DeterrenceKind deterrence_from_string(const std::string& name) {
    if (name == "power") return DeterrenceKind::power;
    if (name == "exponential") return DeterrenceKind::exponential;
    throw std::invalid_argument("unknown deterrence kind \"" + name +
                                "\" (expected \"power\" or \"exponential\")");
}

flows::FlowMatrix predict_gravity(const GravityParams& params,
                                  const ingest::PopulationTable& pop,
                                  const flows::DistanceTable& d,
                                  const std::vector<flows::PairKey>& pairs) {
    if (!(params.K > 0.0)) throw std::invalid_argument("predict_gravity: K must be > 0");

    std::map<flows::PairKey, double> entries;
    for (const auto& pair : pairs) {
        if (pair.first == pair.second)
            throw std::invalid_argument("predict_gravity: diagonal pair (" + pair.first + ", " +
                                        pair.second + ")");
        const double pi = population_or_throw(pop, pair.first, pair);
        const double pj = population_or_throw(pop, pair.second, pair);
        const double km = d.distance(pair.first, pair.second);
        if (!(km > 0.0))
            throw std::runtime_error("predict_gravity: non-positive distance for pair " +
                                     pair.first + " -> " + pair.second);
        const double value = params.K * std::pow(pi, params.alpha) * std::pow(pj, params.gamma) *
                             deterrence(params.kind, params.beta, km);
        if (!std::isfinite(value) || value <= 0.0)
            throw std::runtime_error("predict_gravity: prediction under- or overflowed for pair " +
                                     pair.first + " -> " + pair.second);
        entries.emplace(pair, value);
    }
    return flows::FlowMatrix(std::move(entries));
}

GravityParams fit_gravity(const flows::FlowMatrix& truth, const ingest::PopulationTable& pop,
                          const flows::DistanceTable& d, DeterrenceKind kind,
                          FitDiagnostics* diag) {
    // Gather regression rows: [1, log P_i, log P_j, x] -> log y
    std::vector<std::array<double, 4>> rows;
    std::vector<double> targets;
    rows.reserve(truth.size());
    targets.reserve(truth.size());
    for (const auto& [key, weight] : truth.entries()) {
        const double pi = population_or_throw(pop, key.first, key);
        const double pj = population_or_throw(pop, key.second, key);
        const double km = d.distance(key.first, key.second);
        if (km == 0.0) {
            if (diag) diag->excluded_zero_distance.push_back(key);
            continue;
        }
        const double x = kind == DeterrenceKind::power ? std::log(km) : km;
        rows.push_back({1.0, std::log(pi), std::log(pj), x});
        targets.push_back(std::log(weight));
    }
    if (rows.size() < 4)
        throw std::runtime_error("fit_gravity: need at least 4 usable entries, have " +
                                 std::to_string(rows.size()));

    Matrix4 xtx{};
    Vector4 xty{};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int i = 0; i < 4; ++i) {
            xty[i] += static_cast<long double>(rows[r][i]) * targets[r];
            for (int j = 0; j < 4; ++j)
                xtx[i][j] += static_cast<long double>(rows[r][i]) * rows[r][j];
        }
    }

    // Condition check on the scaled normal matrix; scaling makes the check
    // insensitive to the units of the columns.
    Matrix4 scaled = xtx;
    Vector4 norms{};
    for (int i = 0; i < 4; ++i) norms[i] = std::sqrt(xtx[i][i]);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            scaled[i][j] = norms[i] > 0.0L && norms[j] > 0.0L
                               ? xtx[i][j] / (norms[i] * norms[j])
                               : 0.0L;
    Vector4 small_direction{};
    const Vector4 eig = symmetric_eigenvalues(scaled, small_direction);
    long double eig_max = 0.0L, eig_min = std::numeric_limits<long double>::infinity();
    for (int i = 0; i < 4; ++i) {
        eig_max = std::max(eig_max, std::abs(eig[i]));
        eig_min = std::min(eig_min, std::abs(eig[i]));
    }
    if (!(eig_min > 0.0L) || eig_max / eig_min > kMaxCondition) {
        long double largest = 0.0L;
        for (int i = 0; i < 4; ++i) largest = std::max(largest, std::abs(small_direction[i]));
        std::string columns;
        for (int i = 0; i < 4; ++i) {
            if (std::abs(small_direction[i]) >= 0.5L * largest) {
                if (!columns.empty()) columns += ", ";
                columns += kColumnNames[i];
            }
        }
        throw std::runtime_error("fit_gravity: collinear design columns: " + columns);
    }

    const Vector4 solution = solve4(xtx, xty);
    GravityParams params;
    params.K = std::exp(static_cast<double>(solution[0]));
    params.alpha = static_cast<double>(solution[1]);
    params.gamma = static_cast<double>(solution[2]);
    params.beta = -static_cast<double>(solution[3]);
    params.kind = kind;
    if (!std::isfinite(params.K) || !std::isfinite(params.alpha) ||
        !std::isfinite(params.gamma) || !std::isfinite(params.beta))
        throw std::runtime_error("fit_gravity: fit produced non-finite parameters");
    return params;
}

HybridParams fit_hybrid(const flows::FlowMatrix& truth, const flows::FlowMatrix& g,
                        const flows::FlowMatrix& f, const GravityParams& gravity) {
    if (truth.size() < 2)
        throw std::runtime_error("fit_hybrid: need at least 2 support entries, have " +
                                 std::to_string(truth.size()));

    long double sgg = 0.0L, sgf = 0.0L, sff = 0.0L, sgy = 0.0L, sfy = 0.0L;
    for (const auto& [key, y] : truth.entries()) {
        if (!g.contains(key))
            throw std::runtime_error("fit_hybrid: gravity prediction missing for pair " +
                                     key.first + " -> " + key.second);
        const long double gv = g.value(key.first, key.second);
        const long double fv = f.value(key.first, key.second);
        sgg += gv * gv;
        sgf += gv * fv;
        sff += fv * fv;
        sgy += gv * y;
        sfy += fv * y;
    }

    const long double det = sgg * sff - sgf * sgf;
    if (!(det > 1e-12L * sgg * sff) || sgg == 0.0L || sff == 0.0L)
        throw std::runtime_error(
            "fit_hybrid: gravity and trace flows are collinear on the support");

    HybridParams params;
    params.A = static_cast<double>((sgy * sff - sfy * sgf) / det);
    params.B = static_cast<double>((sgg * sfy - sgf * sgy) / det);
    params.gravity = gravity;
    if (!std::isfinite(params.A) || !std::isfinite(params.B))
        throw std::runtime_error("fit_hybrid: fit produced non-finite coefficients");
    return params;
}

flows::FlowMatrix predict_hybrid(const HybridParams& params, const flows::FlowMatrix& g,
                                 const flows::FlowMatrix& f,
                                 const std::vector<flows::PairKey>& pairs) {
    std::map<flows::PairKey, double> entries;
    for (const auto& pair : pairs) {
        if (!g.contains(pair))
            throw std::runtime_error("predict_hybrid: gravity prediction missing for pair " +
                                     pair.first + " -> " + pair.second);
        const double value = params.A * g.value(pair.first, pair.second) +
                             params.B * f.value(pair.first, pair.second);
        if (value > 0.0) entries.emplace(pair, value);  // negatives clamp to zero
    }
    return flows::FlowMatrix(std::move(entries));
}

double loss(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred) {
    long double sum = 0.0L;
    for (const auto& [key, y] : truth.entries()) {
        const long double res = y - pred.value(key.first, key.second);
        sum += res * res;
    }
    return static_cast<double>(std::sqrt(sum));
}

}  // namespace mobility::models
