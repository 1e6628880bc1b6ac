#pragma once

#include <span>

#include "noisemap/flow.hpp"
#include "noisemap/operators.hpp"

namespace noisemap::prob {

using flow::ChannelTensor;
using flow::FlowModel;
using op::Vector;

/// Zero-mean Gaussian with diagonal covariance; the standard form backs the
/// flow's latent distribution, the diagonal form backs test oracles.
struct GaussianDensity {
    Vector variances;

    static GaussianDensity standard(int dimension);
    static GaussianDensity diagonal(Vector variances);

    int dimension() const { return static_cast<int>(variances.size()); }
    double log_pdf(const Vector& x) const;
};

/// log p_theta(y - Bx) + log p_X(x) with the Gaussian prior N(0, I/alpha);
/// the evidence term is dropped, so this is the log-posterior up to an
/// additive constant.
double log_posterior_unnormalized(const FlowModel& model, const op::RealizedSystem& sys, const Vector& x,
                                  const Vector& y_real, double alpha);

/// Cross-entropy estimate (mean NLL) of the model on samples from the true
/// noise distribution; equals KL(p_H || p_theta) plus the unknown entropy
/// of p_H.
double kl_estimate(const FlowModel& model, std::span<const ChannelTensor> samples);

}  // namespace noisemap::prob
