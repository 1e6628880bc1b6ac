#pragma once

#include <cstdint>
#include <vector>

#include "noisemap/common.hpp"
#include "noisemap/operators.hpp"
#include "noisemap/phantom.hpp"

namespace noisemap::solve {

using op::Matrix;
using op::RealizedSystem;
using op::Vector;

/// Diagonal whitening weights in the realized (2K') space,
/// w_j = min_k std(eta_k) / std(eta_j), so all entries lie in (0, 1].
struct WhiteningMatrix {
    Vector diag;
};

struct SolverConfig {
    enum class RowOrder { sequential, shuffled };

    double alpha = 0.0;
    int sweeps = 1;
    RowOrder row_order = RowOrder::sequential;
    std::uint64_t shuffle_seed = 0;
    double tolerance = 0.0;  // early stop on relative iterate change per sweep; 0 disables
};

/// Unique minimizer of ||y - Bx||^2 + alpha ||x||^2 via the normal equations.
Vector tikhonov_solve(const RealizedSystem& sys, const Vector& y_real, double alpha);

/// Regularized Kaczmarz sweeps over the augmented system [B  sqrt(alpha) I];
/// converges to the Tikhonov minimizer as the sweep count grows.
Vector kaczmarz_regularized(const RealizedSystem& sys, const Vector& y_real, const SolverConfig& cfg);

/// Whitening weights from per-component sample standard deviations of
/// realized noise vectors (any fixed dimension, at least two samples).
WhiteningMatrix whitening_from_realized(const std::vector<Vector>& samples);

/// Same, from complex noise samples realized as interleaved (Re, Im).
WhiteningMatrix whitening_matrix(const std::vector<phantom::NoiseSample>& noise);

/// Whitened regularized Kaczmarz: RK on the row-scaled system W B and data W y.
Vector wrk_solve(const RealizedSystem& sys, const Vector& y_real, const WhiteningMatrix& w,
                 const SolverConfig& cfg);

}  // namespace noisemap::solve
