#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace noisemap::op {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Spatial grid of the operator's image domain, width * height = N pixels.
struct Grid {
    int width = 0;
    int height = 0;

    int pixels() const { return width * height; }
    bool operator==(const Grid&) const = default;
};

/// Per-channel complex system tensor, channels x K x N.
struct RawOperator {
    std::vector<CMatrix> channels;  // each K x N
    Grid grid;

    int channel_count() const { return static_cast<int>(channels.size()); }
    int frequency_count() const { return channels.empty() ? 0 : static_cast<int>(channels.front().rows()); }
    int pixel_count() const { return channels.empty() ? 0 : static_cast<int>(channels.front().cols()); }
};

/// Frequency-selected operator with the retained bands of all channels
/// stacked along the row dimension (channel-major).
struct ForwardOperator {
    CMatrix entries;              // K' x N
    std::vector<int> freq_index_set;  // strictly increasing, per channel
    int channels = 0;
    Grid grid;

    int stacked_rows() const { return static_cast<int>(entries.rows()); }
    int pixel_count() const { return static_cast<int>(entries.cols()); }
};

/// Real-stacked form used by every solver: complex row r contributes real
/// rows 2r (real part) and 2r+1 (imaginary part).
struct RealizedSystem {
    Matrix rows;          // 2K' x N
    Vector row_norms_sq;  // cached squared euclidean norms per real row

    int row_count() const { return static_cast<int>(rows.rows()); }
    int pixel_count() const { return static_cast<int>(rows.cols()); }
};

/// Nonnegative least-squares fit of a candidate combination to a reference.
struct MixtureFit {
    Vector weights;      // one nonnegative weight per candidate
    double objective;    // squared Frobenius residual at the returned weights
    int iterations;      // projected-gradient iterations used
};

/// Contiguous frequency band [first, last], inclusive on both ends.
struct Band {
    int first = 0;
    int last = 0;

    int size() const { return last - first + 1; }
};

/// Stack the band of every channel into a K' x N operator, K' = channels * |band|.
ForwardOperator select_frequencies(const RawOperator& raw, const Band& band);

/// Same, with an explicit strictly increasing index set.
ForwardOperator select_frequencies(const RawOperator& raw, const std::vector<int>& indices);

/// Complex matrix-vector product A x for a real concentration vector x.
CVector apply(const ForwardOperator& fwd, const Vector& x);

/// Real-stacked solver form with cached squared row norms.
RealizedSystem realize(const ForwardOperator& fwd);

/// Interleave (Re, Im) of a complex vector to the realized row order.
Vector realize_vector(const CVector& v);

/// Entrywise sum; the original operator is left untouched.
ForwardOperator add_operator_noise(const ForwardOperator& fwd, const CMatrix& pixel_noise);

/// epsilon(x) = A~ x - A_rec x, the deviation between two reconstruction operators.
CVector operator_deviation(const ForwardOperator& a_tilde, const ForwardOperator& a_rec, const Vector& x);

/// Nonnegative weights minimizing || reference - sum_i w_i candidate_i ||_F^2.
/// Projected gradient on the normal equations, fixed step 1/lambda_max(Gram).
MixtureFit fit_operator_mixture(const std::vector<ForwardOperator>& candidates, const ForwardOperator& reference);

/// Deterministic pseudo-random operator with per-frequency magnitude
/// envelope (1 + k)^(-decay); a desk-scale stand-in for simulated system
/// matrices.
RawOperator synth_operator(std::uint64_t seed, int channels, int frequencies, const Grid& grid, double decay);

}  // namespace noisemap::op
