#include "noisemap/lda.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "noisemap/common.hpp"

namespace noisemap::lda {

namespace {

void check_shapes(const FlowModel& model, const RealizedSystem& sys, const Vector& x, const Vector& y_real) {
    if (x.size() != sys.rows.cols())
        throw std::invalid_argument("lda: unknown length does not match system columns");
    if (y_real.size() != sys.rows.rows())
        throw std::invalid_argument("lda: data length does not match system rows");
    if (model.input_channels() != 2 || 2 * model.input_positions() != sys.rows.rows())
        throw std::invalid_argument("lda: flow input shape must be [2, K'] with 2K' system rows");
}

// largest eigenvalue of B^T B by power iteration, for the step-size scale
double operator_curvature(const RealizedSystem& sys) {
    const Eigen::Index n = sys.rows.cols();
    Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    double lambda = 0.0;
    for (int it = 0; it < 100; ++it) {
        Vector w = sys.rows.transpose() * (sys.rows * v);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        w /= norm;
        const double next = w.dot(sys.rows.transpose() * (sys.rows * w));
        const bool settled = std::abs(next - lambda) <= 1e-12 * std::max(1.0, std::abs(next));
        lambda = next;
        v = w;
        if (settled) break;
    }
    return lambda;
}

}  // namespace

ChannelTensor realized_to_flow(const Vector& realized) {
    if (realized.size() % 2 != 0) throw std::invalid_argument("realized_to_flow: length must be even");
    const int k = static_cast<int>(realized.size() / 2);
    ChannelTensor t(2, k);
    for (int j = 0; j < k; ++j) {
        t.data(0, j) = realized[2 * j];
        t.data(1, j) = realized[2 * j + 1];
    }
    return t;
}

Vector flow_to_realized(const ChannelTensor& t) {
    if (t.channels() != 2) throw std::invalid_argument("flow_to_realized: tensor must have two channels");
    Vector v(2 * t.positions());
    for (int j = 0; j < t.positions(); ++j) {
        v[2 * j] = t.data(0, j);
        v[2 * j + 1] = t.data(1, j);
    }
    return v;
}

double lda_discrepancy(const FlowModel& model, const RealizedSystem& sys, const Vector& x,
                       const Vector& y_real) {
    check_shapes(model, sys, x, y_real);
    const Vector residual = y_real - sys.rows * x;
    const flow::ForwardResult fr = model.forward(realized_to_flow(residual));
    return 0.5 * fr.output.data.squaredNorm() - fr.logdet;
}

double lda_objective(const FlowModel& model, const RealizedSystem& sys, const Vector& x,
                     const Vector& y_real, double alpha) {
    return lda_discrepancy(model, sys, x, y_real) + 0.5 * alpha * x.squaredNorm();
}

Vector lda_gradient(const FlowModel& model, const RealizedSystem& sys, const Vector& x,
                    const Vector& y_real, double alpha) {
    check_shapes(model, sys, x, y_real);
    const Vector residual = y_real - sys.rows * x;
    const flow::InputGradients g = model.grad_input(realized_to_flow(residual));
    const Vector d_residual = flow_to_realized(ChannelTensor(g.latent_half_sq.data - g.logdet.data));
    return -(sys.rows.transpose() * d_residual) + alpha * x;
}

LdaResult lda_reconstruct(const FlowModel& model, const RealizedSystem& sys, const Vector& y_real,
                          const LdaConfig& cfg) {
    if (cfg.max_iterations < 1) throw std::invalid_argument("lda_reconstruct: max_iterations must be >= 1");
    if (!(cfg.step_size > 0.0)) throw std::invalid_argument("lda_reconstruct: step size must be > 0");
    if (cfg.alpha < 0.0) throw std::invalid_argument("lda_reconstruct: alpha must be >= 0");

    Vector x;
    switch (cfg.init) {
        case LdaConfig::Init::rk:
            x = solve::kaczmarz_regularized(sys, y_real, cfg.rk);
            break;
        case LdaConfig::Init::zero:
            x = Vector::Zero(sys.rows.cols());
            break;
        case LdaConfig::Init::given:
            if (cfg.init_value.size() != sys.rows.cols())
                throw std::invalid_argument("lda_reconstruct: init vector length does not match system columns");
            x = cfg.init_value;
            break;
    }
    check_shapes(model, sys, x, y_real);

    const double curvature = operator_curvature(sys) + cfg.alpha;
    const double base_step = curvature > 0.0 ? cfg.step_size / curvature : cfg.step_size;
    constexpr double kGradTolerance = 1e-9;   // sup-norm early exit
    constexpr double kArmijoSlope = 1e-4;

    LdaResult result;
    double objective = lda_objective(model, sys, x, y_real, cfg.alpha);
    result.objective_trace.push_back(objective);

    for (int it = 0; it < cfg.max_iterations; ++it) {
        if (!std::isfinite(objective)) {
            std::ostringstream msg;
            msg << "lda_reconstruct: objective became non-finite at iteration " << it;
            throw numerical_error(msg.str());
        }
        const Vector grad = lda_gradient(model, sys, x, y_real, cfg.alpha);
        if (grad.lpNorm<Eigen::Infinity>() < kGradTolerance) break;

        if (cfg.backtracking) {
            const double grad_sq = grad.squaredNorm();
            double step = base_step;
            bool accepted = false;
            for (int half = 0; half < 60; ++half) {
                const Vector candidate = x - step * grad;
                const double next = lda_objective(model, sys, candidate, y_real, cfg.alpha);
                if (std::isfinite(next) && next <= objective - kArmijoSlope * step * grad_sq) {
                    x = candidate;
                    objective = next;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;  // no representable step decreases the objective
        } else {
            x -= base_step * grad;
            objective = lda_objective(model, sys, x, y_real, cfg.alpha);
            if (!std::isfinite(objective)) {
                std::ostringstream msg;
                msg << "lda_reconstruct: objective became non-finite at iteration " << it + 1;
                throw numerical_error(msg.str());
            }
        }
        result.objective_trace.push_back(objective);
        result.iterations = it + 1;
    }

    result.x = std::move(x);
    return result;
}

}  // namespace noisemap::lda
