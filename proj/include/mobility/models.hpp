#pragma once

#include <string>
#include <vector>

#include "mobility/flows.hpp"
#include "mobility/ingest.hpp"

namespace mobility::models {

enum class DeterrenceKind { power, exponential };

std::string to_string(DeterrenceKind kind);
DeterrenceKind deterrence_from_string(const std::string& name);

/// g_ij = K * P_i^alpha * P_j^gamma * f(d_ij) with f(d) = d^-beta (power) or
/// exp(-beta * d) (exponential).
struct GravityParams {
    double K = 1.0;
    double alpha = 0.0;
    double gamma = 0.0;
    double beta = 0.0;
    DeterrenceKind kind = DeterrenceKind::power;
};

/// h_ij = A * g_ij + B * f_ij
struct HybridParams {
    double A = 1.0;
    double B = 0.0;
    GravityParams gravity;
};

/// Pairs excluded or flagged while fitting.
struct FitDiagnostics {
    std::vector<flows::PairKey> excluded_zero_distance;
};

/// Gravity predictions for exactly the requested pairs. Missing populations
/// or distances, non-positive distances and diagonal pairs are errors naming
/// the pair.
flows::FlowMatrix predict_gravity(const GravityParams& params,
                                  const ingest::PopulationTable& pop,
                                  const flows::DistanceTable& d,
                                  const std::vector<flows::PairKey>& pairs);

/// Log-space OLS over the positive entries of truth:
///   log y = log K + alpha log P_i + gamma log P_j - beta * x,
/// x = log d (power) or d (exponential). Normal equations with a condition
/// check; cond > 1e12 fails naming the collinear columns. Pairs at zero
/// distance are excluded and reported through diag.
GravityParams fit_gravity(const flows::FlowMatrix& truth, const ingest::PopulationTable& pop,
                          const flows::DistanceTable& d, DeterrenceKind kind,
                          FitDiagnostics* diag = nullptr);

/// Stacked combination weights: least squares for y ~ A*g + B*f over the
/// positive entries of truth, no intercept. f is read with implicit zeros;
/// g must cover the support. gravity is passed through untouched.
HybridParams fit_hybrid(const flows::FlowMatrix& truth, const flows::FlowMatrix& g,
                        const flows::FlowMatrix& f, const GravityParams& gravity = {});

/// A*g + B*f on the requested pairs; negative values clamp to zero and zero
/// values are left out of the sparse result.
flows::FlowMatrix predict_hybrid(const HybridParams& params, const flows::FlowMatrix& g,
                                 const flows::FlowMatrix& f,
                                 const std::vector<flows::PairKey>& pairs);

/// Frobenius-style loss restricted to the positive entries of truth:
/// sqrt(sum (y_ij - pred_ij)^2), absent predictions read as zero.
double loss(const flows::FlowMatrix& truth, const flows::FlowMatrix& pred);

}  // namespace mobility::models
