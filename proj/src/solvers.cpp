#include "noisemap/solvers.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "noisemap/common.hpp"
#include "noisemap/rng.hpp"

namespace noisemap::solve {

Vector tikhonov_solve(const RealizedSystem& sys, const Vector& y_real, double alpha) {
    if (y_real.size() != sys.rows.rows())
        throw std::invalid_argument("tikhonov_solve: data length does not match system rows");
    if (alpha < 0.0) throw std::invalid_argument("tikhonov_solve: alpha must be >= 0");

    const Eigen::Index n = sys.rows.cols();
    Matrix normal = sys.rows.transpose() * sys.rows;
    normal.diagonal().array() += alpha;
    const Vector rhs = sys.rows.transpose() * y_real;

    const auto ldlt = normal.ldlt();
    const Vector pivots = ldlt.vectorD();
    const double pivot_floor = static_cast<double>(n) * std::numeric_limits<double>::epsilon() *
                               std::max(pivots.cwiseAbs().maxCoeff(), 1e-300);
    if (ldlt.info() != Eigen::Success || pivots.minCoeff() <= pivot_floor)
        throw numerical_error("tikhonov_solve: normal equations are numerically singular");

    const Vector x = ldlt.solve(rhs);
    const double scale = std::max({rhs.norm(), normal.norm() * x.norm(), 1e-300});
    if (!x.allFinite() || (normal * x - rhs).norm() > 1e-8 * scale)
        throw numerical_error("tikhonov_solve: normal-equation solve failed");
    return x;
}

Vector kaczmarz_regularized(const RealizedSystem& sys, const Vector& y_real, const SolverConfig& cfg) {
    if (y_real.size() != sys.rows.rows())
        throw std::invalid_argument("kaczmarz_regularized: data length does not match system rows");
    if (cfg.alpha < 0.0) throw std::invalid_argument("kaczmarz_regularized: alpha must be >= 0");
    if (cfg.sweeps < 1) throw std::invalid_argument("kaczmarz_regularized: sweep count must be >= 1");

    const Eigen::Index rows = sys.rows.rows();
    const double sqrt_alpha = std::sqrt(cfg.alpha);

    std::vector<int> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), 0);
    if (cfg.row_order == SolverConfig::RowOrder::shuffled) {
        Rng rng(cfg.shuffle_seed);
        std::shuffle(order.begin(), order.end(), rng.engine());
    }

    Vector x = Vector::Zero(sys.rows.cols());
    Vector v = Vector::Zero(rows);  // auxiliary residual of the augmented system
    Vector x_prev;

    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
        if (cfg.tolerance > 0.0) x_prev = x;
        for (int i : order) {
            const double norm_sq = sys.row_norms_sq[i];
            if (norm_sq == 0.0) continue;
            const double beta = (y_real[i] - sys.rows.row(i).dot(x) - sqrt_alpha * v[i]) / (norm_sq + cfg.alpha);
            x += beta * sys.rows.row(i).transpose();
            v[i] += beta * sqrt_alpha;
        }
        if (cfg.tolerance > 0.0) {
            const double change = (x - x_prev).norm();
            if (change <= cfg.tolerance * std::max(x.norm(), 1e-300)) break;
        }
    }
    return x;
}

WhiteningMatrix whitening_from_realized(const std::vector<Vector>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("whitening: need at least two noise samples");
    const Eigen::Index dim = samples.front().size();
    for (const Vector& s : samples)
        if (s.size() != dim) throw std::invalid_argument("whitening: noise samples differ in length");

    const double n = static_cast<double>(samples.size());
    Vector mean = Vector::Zero(dim);
    for (const Vector& s : samples) mean += s;
    mean /= n;

    Vector var = Vector::Zero(dim);
    for (const Vector& s : samples) var += (s - mean).cwiseAbs2();
    var /= n - 1.0;

    constexpr double kStdFloor = 1e-12;
    Vector std_dev = var.cwiseSqrt().cwiseMax(kStdFloor);
    const double smallest = std_dev.minCoeff();

    WhiteningMatrix w;
    w.diag = (smallest / std_dev.array()).matrix();
    return w;
}

WhiteningMatrix whitening_matrix(const std::vector<phantom::NoiseSample>& noise) {
    std::vector<Vector> realized;
    realized.reserve(noise.size());
    for (const auto& sample : noise) realized.push_back(op::realize_vector(sample.values));
    return whitening_from_realized(realized);
}

Vector wrk_solve(const RealizedSystem& sys, const Vector& y_real, const WhiteningMatrix& w,
                 const SolverConfig& cfg) {
    if (w.diag.size() != sys.rows.rows())
        throw std::invalid_argument("wrk_solve: whitening dimension does not match system rows");

    RealizedSystem scaled;
    scaled.rows = w.diag.asDiagonal() * sys.rows;
    scaled.row_norms_sq = scaled.rows.rowwise().squaredNorm();
    return kaczmarz_regularized(scaled, w.diag.cwiseProduct(y_real), cfg);
}

}  // namespace noisemap::solve
