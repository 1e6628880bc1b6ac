#include "noisemap/operators.hpp"

#include <cmath>
#include <stdexcept>

#include "noisemap/rng.hpp"

namespace noisemap::op {

ForwardOperator select_frequencies(const RawOperator& raw, const Band& band) {
    if (band.last < band.first) throw std::invalid_argument("select_frequencies: empty band");
    std::vector<int> indices(static_cast<std::size_t>(band.size()));
    for (int i = 0; i < band.size(); ++i) indices[static_cast<std::size_t>(i)] = band.first + i;
    return select_frequencies(raw, indices);
}

ForwardOperator select_frequencies(const RawOperator& raw, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("select_frequencies: empty index set");
    const int k = raw.frequency_count();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= k)
            throw std::out_of_range("select_frequencies: frequency index outside [0, K)");
        if (i > 0 && indices[i] <= indices[i - 1])
            throw std::invalid_argument("select_frequencies: index set must be strictly increasing");
    }

    const int per_channel = static_cast<int>(indices.size());
    ForwardOperator fwd;
    fwd.freq_index_set = indices;
    fwd.channels = raw.channel_count();
    fwd.grid = raw.grid;
    fwd.entries.resize(static_cast<Eigen::Index>(fwd.channels) * per_channel, raw.pixel_count());
    for (int c = 0; c < fwd.channels; ++c)
        for (int i = 0; i < per_channel; ++i)
            fwd.entries.row(static_cast<Eigen::Index>(c) * per_channel + i) =
                raw.channels[static_cast<std::size_t>(c)].row(indices[static_cast<std::size_t>(i)]);
    return fwd;
}

CVector apply(const ForwardOperator& fwd, const Vector& x) {
    if (x.size() != fwd.entries.cols())
        throw std::invalid_argument("apply: vector length does not match operator pixel count");
    return fwd.entries * x.cast<Complex>();
}

RealizedSystem realize(const ForwardOperator& fwd) {
    RealizedSystem sys;
    sys.rows.resize(2 * fwd.entries.rows(), fwd.entries.cols());
    for (Eigen::Index r = 0; r < fwd.entries.rows(); ++r) {
        sys.rows.row(2 * r) = fwd.entries.row(r).real();
        sys.rows.row(2 * r + 1) = fwd.entries.row(r).imag();
    }
    sys.row_norms_sq = sys.rows.rowwise().squaredNorm();
    return sys;
}

Vector realize_vector(const CVector& v) {
    Vector out(2 * v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out[2 * i] = v[i].real();
        out[2 * i + 1] = v[i].imag();
    }
    return out;
}

ForwardOperator add_operator_noise(const ForwardOperator& fwd, const CMatrix& pixel_noise) {
    if (pixel_noise.rows() != fwd.entries.rows() || pixel_noise.cols() != fwd.entries.cols())
        throw std::invalid_argument("add_operator_noise: noise shape does not match operator");
    ForwardOperator out = fwd;
    out.entries += pixel_noise;
    return out;
}

CVector operator_deviation(const ForwardOperator& a_tilde, const ForwardOperator& a_rec, const Vector& x) {
    if (a_tilde.entries.rows() != a_rec.entries.rows() || a_tilde.entries.cols() != a_rec.entries.cols())
        throw std::invalid_argument("operator_deviation: operator shapes differ");
    return apply(a_tilde, x) - apply(a_rec, x);
}

namespace {

double real_frobenius_inner(const CMatrix& a, const CMatrix& b) {
    return (a.conjugate().cwiseProduct(b)).sum().real();
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double largest_eigenvalue(const Matrix& g) {
    const Eigen::Index n = g.rows();
    Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        Vector w = g * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        w /= norm;
        const double next = w.dot(g * w);
        const bool settled = std::abs(next - lambda) <= 1e-14 * std::max(1.0, std::abs(next));
        lambda = next;
        v = w;
        if (settled) break;
    }
    return lambda;
}

}  // namespace

MixtureFit fit_operator_mixture(const std::vector<ForwardOperator>& candidates, const ForwardOperator& reference) {
    if (candidates.empty()) throw std::invalid_argument("fit_operator_mixture: no candidates");
    for (const auto& c : candidates)
        if (c.entries.rows() != reference.entries.rows() || c.entries.cols() != reference.entries.cols())
            throw std::invalid_argument("fit_operator_mixture: candidate shape differs from reference");

    const int n = static_cast<int>(candidates.size());
    Matrix gram(n, n);
    Vector rhs(n);
    for (int i = 0; i < n; ++i) {
        rhs[i] = real_frobenius_inner(candidates[static_cast<std::size_t>(i)].entries, reference.entries);
        for (int j = i; j < n; ++j) {
            gram(i, j) = real_frobenius_inner(candidates[static_cast<std::size_t>(i)].entries,
                                              candidates[static_cast<std::size_t>(j)].entries);
            gram(j, i) = gram(i, j);
        }
    }
    const double ref_sq = real_frobenius_inner(reference.entries, reference.entries);

    MixtureFit fit;
    fit.weights = Vector::Zero(n);
    fit.iterations = 0;

    const double lambda = largest_eigenvalue(gram);
    if (lambda > 0.0) {
        const double step = 1.0 / lambda;
        constexpr int max_iterations = 100000;
        for (; fit.iterations < max_iterations; ++fit.iterations) {
            const Vector grad = gram * fit.weights - rhs;
            // projected gradient: free components use grad, active bounds only
            // count when the gradient pushes into the feasible set
            double pg_sq = 0.0;
            for (int i = 0; i < n; ++i) {
                const double pg = fit.weights[i] > 0.0 ? grad[i] : std::min(grad[i], 0.0);
                pg_sq += pg * pg;
            }
            if (std::sqrt(pg_sq) < 1e-10) break;
            fit.weights = (fit.weights - step * grad).cwiseMax(0.0);
        }
    }

    fit.objective = ref_sq - 2.0 * rhs.dot(fit.weights) + fit.weights.dot(gram * fit.weights);
    if (fit.objective < 0.0) fit.objective = 0.0;  // cancellation guard near exact fits
    return fit;
}

RawOperator synth_operator(std::uint64_t seed, int channels, int frequencies, const Grid& grid, double decay) {
    if (channels < 1 || frequencies < 1 || grid.width < 1 || grid.height < 1)
        throw std::invalid_argument("synth_operator: dimensions must be positive");
    if (decay < 0.0) throw std::invalid_argument("synth_operator: decay must be >= 0");

    Rng rng(seed);
    RawOperator raw;
    raw.grid = grid;
    raw.channels.resize(static_cast<std::size_t>(channels));
    const int n = grid.pixels();
    for (int c = 0; c < channels; ++c) {
        CMatrix& m = raw.channels[static_cast<std::size_t>(c)];
        m.resize(frequencies, n);
        for (int k = 0; k < frequencies; ++k) {
            const double envelope = std::pow(1.0 + k, -decay);
            for (int j = 0; j < n; ++j)
                m(k, j) = Complex(envelope * rng.gaussian(), envelope * rng.gaussian());
        }
    }
    return raw;
}

}  // namespace noisemap::op
