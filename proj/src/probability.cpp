#include "noisemap/probability.hpp"

#include <cmath>
#include <stdexcept>

#include "noisemap/lda.hpp"

namespace noisemap::prob {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

GaussianDensity GaussianDensity::standard(int dimension) {
    if (dimension < 1) throw std::invalid_argument("GaussianDensity: dimension must be >= 1");
    return GaussianDensity{Vector::Ones(dimension)};
}

GaussianDensity GaussianDensity::diagonal(Vector variances) {
    if (variances.size() < 1) throw std::invalid_argument("GaussianDensity: dimension must be >= 1");
    if ((variances.array() <= 0.0).any())
        throw std::invalid_argument("GaussianDensity: variances must be > 0");
    return GaussianDensity{std::move(variances)};
}

double GaussianDensity::log_pdf(const Vector& x) const {
    if (x.size() != variances.size())
        throw std::invalid_argument("GaussianDensity: argument dimension mismatch");
    const double quad = (x.array().square() / variances.array()).sum();
    const double logdet = variances.array().log().sum();
    return -0.5 * (static_cast<double>(dimension()) * kLog2Pi + logdet + quad);
}

double log_posterior_unnormalized(const FlowModel& model, const op::RealizedSystem& sys, const Vector& x,
                                  const Vector& y_real, double alpha) {
    if (!(alpha > 0.0))
        throw std::invalid_argument("log_posterior_unnormalized: the Gaussian prior needs alpha > 0");
    if (x.size() != sys.rows.cols())
        throw std::invalid_argument("log_posterior_unnormalized: unknown length does not match system");
    if (y_real.size() != sys.rows.rows())
        throw std::invalid_argument("log_posterior_unnormalized: data length does not match system");

    const Vector residual = y_real - sys.rows * x;
    const double log_likelihood = model.log_prob(lda::realized_to_flow(residual));
    const double n = static_cast<double>(x.size());
    const double log_prior = 0.5 * n * std::log(alpha) - 0.5 * n * kLog2Pi - 0.5 * alpha * x.squaredNorm();
    return log_likelihood + log_prior;
}

double kl_estimate(const FlowModel& model, std::span<const ChannelTensor> samples) {
    if (samples.empty()) throw std::invalid_argument("kl_estimate: empty sample set");
    return model.nll(samples);
}

}  // namespace noisemap::prob
