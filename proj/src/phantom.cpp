#include "noisemap/phantom.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "noisemap/rng.hpp"

namespace noisemap::phantom {

namespace {

constexpr int kInputSize = 28;
constexpr int kDownsampled = 11;
constexpr int kCoarseWidth = 17;
constexpr int kCoarseHeight = 15;

Resolution resolution_for(int width, int height, Resolution fallback) {
    if (width == 17 && height == 15) return Resolution::coarse;
    if (width == 51 && height == 45) return Resolution::intermediate;
    if (width == 85 && height == 75) return Resolution::fine;
    return fallback;
}

}  // namespace

NoiseModel NoiseModel::iid_gaussian(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("iid_gaussian: sigma must be > 0");
    NoiseModel m;
    m.kind = Kind::iid_gaussian;
    m.sigma = sigma;
    return m;
}

NoiseModel NoiseModel::diag_gaussian(std::vector<double> sigmas) {
    if (sigmas.empty()) throw std::invalid_argument("diag_gaussian: empty sigma vector");
    for (double s : sigmas)
        if (!(s > 0.0)) throw std::invalid_argument("diag_gaussian: sigmas must be > 0");
    NoiseModel m;
    m.kind = Kind::diag_gaussian;
    m.sigmas = std::move(sigmas);
    return m;
}

NoiseModel NoiseModel::ar1(double rho, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("ar1: sigma must be > 0");
    if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("ar1: |rho| must be < 1");
    NoiseModel m;
    m.kind = Kind::ar1;
    m.rho = rho;
    m.sigma = sigma;
    return m;
}

NoiseModel NoiseModel::gaussian_mixture(std::vector<double> weights, std::vector<double> means,
                                        std::vector<double> sigmas) {
    if (weights.empty() || weights.size() != means.size() || weights.size() != sigmas.size())
        throw std::invalid_argument("gaussian_mixture: weights/means/sigmas must be nonempty and equally sized");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("gaussian_mixture: weights must be >= 0");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("gaussian_mixture: weights must sum to 1");
    for (double s : sigmas)
        if (!(s > 0.0)) throw std::invalid_argument("gaussian_mixture: sigmas must be > 0");
    NoiseModel m;
    m.kind = Kind::gaussian_mixture;
    m.mix_weights = std::move(weights);
    m.mix_means = std::move(means);
    m.mix_sigmas = std::move(sigmas);
    return m;
}

NoiseModel NoiseModel::ar1_mixture(double rho, std::vector<double> weights, std::vector<double> means,
                                   std::vector<double> sigmas) {
    if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("ar1_mixture: |rho| must be < 1");
    NoiseModel m = gaussian_mixture(std::move(weights), std::move(means), std::move(sigmas));
    m.kind = Kind::ar1_mixture;
    m.rho = rho;
    return m;
}

std::string NoiseModel::describe() const {
    std::ostringstream out;
    switch (kind) {
        case Kind::iid_gaussian:
            out << "iid_gaussian(" << sigma << ")";
            break;
        case Kind::diag_gaussian:
            out << "diag_gaussian[" << sigmas.size() << "]";
            break;
        case Kind::ar1:
            out << "ar1(" << rho << "," << sigma << ")";
            break;
        case Kind::gaussian_mixture:
            out << "gaussian_mixture[" << mix_weights.size() << "]";
            break;
        case Kind::ar1_mixture:
            out << "ar1_mixture(" << rho << ")[" << mix_weights.size() << "]";
            break;
    }
    return out.str();
}

Phantom preprocess_phantom(const Matrix& img, double c) {
    if (img.rows() != kInputSize || img.cols() != kInputSize)
        throw std::invalid_argument("preprocess_phantom: input must be 28x28");
    if (!img.allFinite()) throw std::invalid_argument("preprocess_phantom: input has non-finite entries");
    if ((img.array() < 0.0).any()) throw std::invalid_argument("preprocess_phantom: negative input entries");
    if (!(c > 0.0)) throw std::invalid_argument("preprocess_phantom: concentration must be > 0");

    // nearest-neighbour sample points round(i * 28 / 11)
    Matrix small(kDownsampled, kDownsampled);
    for (int r = 0; r < kDownsampled; ++r) {
        const int sr = static_cast<int>(std::lround(r * static_cast<double>(kInputSize) / kDownsampled));
        for (int col = 0; col < kDownsampled; ++col) {
            const int sc = static_cast<int>(std::lround(col * static_cast<double>(kInputSize) / kDownsampled));
            small(r, col) = img(std::min(sr, kInputSize - 1), std::min(sc, kInputSize - 1));
        }
    }

    const double peak = small.maxCoeff();
    if (peak > 0.0) small *= c / peak;

    Phantom ph;
    ph.concentration = c;
    ph.resolution = Resolution::coarse;
    ph.pixels = Matrix::Zero(kCoarseHeight, kCoarseWidth);
    const int row0 = (kCoarseHeight - kDownsampled) / 2;  // 2
    const int col0 = (kCoarseWidth - kDownsampled) / 2;   // 3
    ph.pixels.block(row0, col0, kDownsampled, kDownsampled) = small;
    return ph;
}

Phantom upsample(const Phantom& ph, int s) {
    if (s < 1) throw std::invalid_argument("upsample: factor must be >= 1");
    Phantom out;
    out.concentration = ph.concentration;
    out.pixels.resize(ph.pixels.rows() * s, ph.pixels.cols() * s);
    for (Eigen::Index r = 0; r < ph.pixels.rows(); ++r)
        for (Eigen::Index col = 0; col < ph.pixels.cols(); ++col)
            out.pixels.block(r * s, col * s, s, s).setConstant(ph.pixels(r, col));
    out.resolution = resolution_for(out.width(), out.height(), ph.resolution);
    return out;
}

Vector flatten(const Phantom& ph) {
    Vector v(ph.pixels.size());
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < ph.pixels.rows(); ++r)
        for (Eigen::Index col = 0; col < ph.pixels.cols(); ++col) v[i++] = ph.pixels(r, col);
    return v;
}

Phantom unflatten(const Vector& v, const Grid& grid, double concentration, Resolution resolution) {
    if (v.size() != grid.pixels()) throw std::invalid_argument("unflatten: length does not match grid");
    Phantom ph;
    ph.concentration = concentration;
    ph.resolution = resolution;
    ph.pixels.resize(grid.height, grid.width);
    Eigen::Index i = 0;
    for (int r = 0; r < grid.height; ++r)
        for (int col = 0; col < grid.width; ++col) ph.pixels(r, col) = v[i++];
    return ph;
}

MeasurementTuple simulate_measurement(const op::ForwardOperator& op_fine, const Phantom& ph_coarse,
                                      const NoiseSample& noise, int s) {
    if (s < 1) throw std::invalid_argument("simulate_measurement: upsampling factor must be >= 1");
    const Phantom fine = upsample(ph_coarse, s);
    if (op_fine.grid != fine.grid())
        throw std::invalid_argument("simulate_measurement: operator grid does not match upsampled phantom");
    if (noise.values.size() != op_fine.stacked_rows())
        throw std::invalid_argument("simulate_measurement: noise length does not match operator rows");

    MeasurementTuple t;
    t.x = flatten(ph_coarse);
    t.y = op::apply(op_fine, flatten(fine));
    t.eta = noise.values;
    t.concentration = ph_coarse.concentration;
    return t;
}

std::vector<NoiseSample> average_noise_frames(const std::vector<NoiseSample>& frames, int window) {
    if (window < 1) throw std::invalid_argument("average_noise_frames: window must be >= 1");
    if (frames.empty() || frames.size() % static_cast<std::size_t>(window) != 0)
        throw std::invalid_argument("average_noise_frames: frame count must be a positive multiple of window");
    const Eigen::Index len = frames.front().values.size();
    for (const auto& f : frames)
        if (f.values.size() != len) throw std::invalid_argument("average_noise_frames: frames differ in length");

    std::vector<NoiseSample> out(frames.size() / static_cast<std::size_t>(window));
    for (std::size_t i = 0; i < out.size(); ++i) {
        CVector sum = CVector::Zero(len);
        for (int j = 0; j < window; ++j) sum += frames[i * static_cast<std::size_t>(window) + static_cast<std::size_t>(j)].values;
        out[i].values = sum / static_cast<double>(window);
        out[i].provenance = "averaged";
    }
    return out;
}

MeasurementTuple rescale_concentration(const MeasurementTuple& t, double c_new) {
    if (!(c_new > 0.0)) throw std::invalid_argument("rescale_concentration: target concentration must be > 0");
    if (!(t.concentration > 0.0)) throw std::invalid_argument("rescale_concentration: tuple concentration must be > 0");
    const double factor = c_new / t.concentration;
    MeasurementTuple out;
    out.x = t.x * factor;
    out.y = t.y * factor;
    out.eta = t.eta;
    out.concentration = c_new;
    return out;
}

std::vector<NoiseSample> synth_noise(const NoiseModel& model, int length, int count, std::uint64_t seed) {
    if (length < 1) throw std::invalid_argument("synth_noise: length must be >= 1");
    if (count < 1) throw std::invalid_argument("synth_noise: count must be >= 1");
    if (model.kind == NoiseModel::Kind::diag_gaussian && model.sigmas.size() != static_cast<std::size_t>(length))
        throw std::invalid_argument("synth_noise: diag_gaussian sigma vector must have one entry per component");

    const std::string tag = "synthetic:" + model.describe();
    const auto mixture_draw = [&model](Rng& rng) {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t pick = model.mix_weights.size() - 1;
        for (std::size_t k = 0; k < model.mix_weights.size(); ++k) {
            acc += model.mix_weights[k];
            if (u < acc) {
                pick = k;
                break;
            }
        }
        return model.mix_means[pick] + model.mix_sigmas[pick] * rng.gaussian();
    };

    std::vector<NoiseSample> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(seed + static_cast<std::uint64_t>(i));
        CVector v(length);
        switch (model.kind) {
            case NoiseModel::Kind::iid_gaussian:
                for (int j = 0; j < length; ++j)
                    v[j] = {model.sigma * rng.gaussian(), model.sigma * rng.gaussian()};
                break;
            case NoiseModel::Kind::diag_gaussian:
                for (int j = 0; j < length; ++j) {
                    const double s = model.sigmas[static_cast<std::size_t>(j)];
                    v[j] = {s * rng.gaussian(), s * rng.gaussian()};
                }
                break;
            case NoiseModel::Kind::ar1: {
                // stationary start, independent chains on the real and
                // imaginary tracks
                const double stationary = model.sigma / std::sqrt(1.0 - model.rho * model.rho);
                double re = stationary * rng.gaussian();
                double im = stationary * rng.gaussian();
                v[0] = {re, im};
                for (int j = 1; j < length; ++j) {
                    re = model.rho * re + model.sigma * rng.gaussian();
                    im = model.rho * im + model.sigma * rng.gaussian();
                    v[j] = {re, im};
                }
                break;
            }
            case NoiseModel::Kind::gaussian_mixture:
                for (int j = 0; j < length; ++j) {
                    const double re = mixture_draw(rng);
                    const double im = mixture_draw(rng);
                    v[j] = {re, im};
                }
                break;
            case NoiseModel::Kind::ar1_mixture: {
                const double boost = 1.0 / std::sqrt(1.0 - model.rho * model.rho);
                double re = boost * mixture_draw(rng);
                double im = boost * mixture_draw(rng);
                v[0] = {re, im};
                for (int j = 1; j < length; ++j) {
                    re = model.rho * re + mixture_draw(rng);
                    im = model.rho * im + mixture_draw(rng);
                    v[j] = {re, im};
                }
                break;
            }
        }
        out[static_cast<std::size_t>(i)].values = std::move(v);
        out[static_cast<std::size_t>(i)].provenance = tag;
    }
    return out;
}

Matrix synth_image(std::uint64_t seed) {
    Rng rng(seed);
    Matrix img = Matrix::Zero(28, 28);

    // two to four gaussian blobs along a random polyline, stroke-like
    const int blobs = 2 + static_cast<int>(rng.below(3));
    double cx = rng.uniform(8.0, 20.0);
    double cy = rng.uniform(8.0, 20.0);
    for (int b = 0; b < blobs; ++b) {
        const double amp = rng.uniform(0.6, 1.0);
        const double sx = rng.uniform(1.5, 3.5);
        const double sy = rng.uniform(1.5, 3.5);
        for (int r = 0; r < 28; ++r)
            for (int col = 0; col < 28; ++col) {
                const double dr = (r - cy) / sy;
                const double dc = (col - cx) / sx;
                img(r, col) += amp * std::exp(-0.5 * (dr * dr + dc * dc));
            }
        cx += rng.uniform(-6.0, 6.0);
        cy += rng.uniform(-6.0, 6.0);
        cx = std::min(23.0, std::max(4.0, cx));
        cy = std::min(23.0, std::max(4.0, cy));
    }

    const double peak = img.maxCoeff();
    if (peak > 0.0) img /= peak;
    // sparsify faint tails so phantoms keep the sparse structure of digits
    img = (img.array() < 0.15).select(Matrix::Zero(28, 28), img);
    return img;
}

}  // namespace noisemap::phantom
