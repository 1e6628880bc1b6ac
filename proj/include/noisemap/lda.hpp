#pragma once

#include <vector>

#include "noisemap/flow.hpp"
#include "noisemap/operators.hpp"
#include "noisemap/solvers.hpp"

namespace noisemap::lda {

using flow::ChannelTensor;
using flow::FlowModel;
using op::RealizedSystem;
using op::Vector;

struct LdaConfig {
    enum class Init { rk, zero, given };

    double alpha = 0.0;
    /// Step size relative to the inverse curvature scale 1 / (||B||^2 + alpha)
    /// estimated by power iteration.
    double step_size = 1e-2;
    int max_iterations = 2000;
    bool backtracking = true;
    Init init = Init::rk;
    Vector init_value;        // used by Init::given
    solve::SolverConfig rk;   // sub-config of the RK initializer
};

struct LdaResult {
    Vector x;
    std::vector<double> objective_trace;  // objective at every visited iterate
    int iterations = 0;
};

/// View a realized residual (interleaved Re, Im) as the flow's [2, K'] input:
/// channel 0 carries real parts, channel 1 imaginary parts.
ChannelTensor realized_to_flow(const Vector& realized);
Vector flow_to_realized(const ChannelTensor& t);

/// Learned discrepancy D(x) = 0.5 ||phi(r)||^2 - log|det J(r)| at r = y - Bx.
double lda_discrepancy(const FlowModel& model, const RealizedSystem& sys, const Vector& x,
                       const Vector& y_real);

/// D(x) + (alpha/2) ||x||^2.
double lda_objective(const FlowModel& model, const RealizedSystem& sys, const Vector& x,
                     const Vector& y_real, double alpha);

/// Gradient of lda_objective w.r.t. x, assembled through the flow and -B^T.
Vector lda_gradient(const FlowModel& model, const RealizedSystem& sys, const Vector& x,
                    const Vector& y_real, double alpha);

/// Gradient descent on the LDA objective, by default initialized from a
/// regularized Kaczmarz reconstruction and with Armijo backtracking.
LdaResult lda_reconstruct(const FlowModel& model, const RealizedSystem& sys, const Vector& y_real,
                          const LdaConfig& cfg);

}  // namespace noisemap::lda
