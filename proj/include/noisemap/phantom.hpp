#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "noisemap/operators.hpp"

namespace noisemap::phantom {

using op::CVector;
using op::Grid;
using op::Matrix;
using op::Vector;

enum class Resolution { coarse, intermediate, fine };

/// Ground-truth concentration image. Pixels are stored as height x width
/// (matrix row = height axis), values in [0, concentration] mg_Fe/mL.
struct Phantom {
    Matrix pixels;                  // height rows x width cols
    double concentration = 0.0;
    Resolution resolution = Resolution::coarse;

    int width() const { return static_cast<int>(pixels.cols()); }
    int height() const { return static_cast<int>(pixels.rows()); }
    Grid grid() const { return Grid{width(), height()}; }
};

/// One noise realization, complex frequency components.
struct NoiseSample {
    CVector values;
    std::string provenance;  // "measured", "synthetic:<model>", "averaged"
};

/// Ground truth plus its clean/noisy measurement pair. The noisy measurement
/// is always recomputed from the stored parts, so y_delta == y + eta holds
/// bit for bit.
struct MeasurementTuple {
    Vector x;       // flattened coarse phantom
    CVector y;      // clean measurement
    CVector eta;    // additive noise
    double concentration = 0.0;

    CVector y_delta() const { return y + eta; }
};

/// Synthetic noise generator configuration. Per-component parameters act on
/// complex components (the same sigma drives the real and imaginary draws).
struct NoiseModel {
    enum class Kind { iid_gaussian, diag_gaussian, ar1, gaussian_mixture, ar1_mixture };

    Kind kind = Kind::iid_gaussian;
    double sigma = 1.0;                  // iid_gaussian, ar1 (innovation std)
    double rho = 0.0;                    // ar1, ar1_mixture
    std::vector<double> sigmas;          // diag_gaussian, one per complex component
    std::vector<double> mix_weights;     // gaussian_mixture, ar1_mixture
    std::vector<double> mix_means;
    std::vector<double> mix_sigmas;

    static NoiseModel iid_gaussian(double sigma);
    static NoiseModel diag_gaussian(std::vector<double> sigmas);
    static NoiseModel ar1(double rho, double sigma);
    static NoiseModel gaussian_mixture(std::vector<double> weights, std::vector<double> means,
                                       std::vector<double> sigmas);
    /// AR(1) chain over the frequency index with mixture-distributed
    /// innovations: correlated and non-Gaussian.
    static NoiseModel ar1_mixture(double rho, std::vector<double> weights, std::vector<double> means,
                                  std::vector<double> sigmas);

    std::string describe() const;
};

/// 28x28 [0,1] image -> 17x15 coarse phantom: 11x11 nearest-neighbour
/// downsample, zero frame, per-image max scaled to c.
Phantom preprocess_phantom(const Matrix& img, double c);

/// Block replication by integer factor s per spatial dimension.
Phantom upsample(const Phantom& ph, int s);

/// Row-major flatten (height axis outer, width axis inner).
Vector flatten(const Phantom& ph);

/// Inverse of flatten for a known grid.
Phantom unflatten(const Vector& v, const Grid& grid, double concentration, Resolution resolution);

/// y = A_fine (upsampled flattened phantom), x = flattened phantom,
/// eta = the given noise sample.
MeasurementTuple simulate_measurement(const op::ForwardOperator& op_fine, const Phantom& ph_coarse,
                                      const NoiseSample& noise, int s);

/// Arithmetic mean of consecutive windows of frames; len(frames) must be a
/// multiple of window.
std::vector<NoiseSample> average_noise_frames(const std::vector<NoiseSample>& frames, int window);

/// Rescale ground truth and clean measurement to a new concentration; noise
/// stays fixed, so the effective noise level changes with it.
MeasurementTuple rescale_concentration(const MeasurementTuple& t, double c_new);

/// Deterministic synthetic noise bank; sample i uses stream seed + i.
std::vector<NoiseSample> synth_noise(const NoiseModel& model, int length, int count, std::uint64_t seed);

/// Deterministic synthetic 28x28 test image in [0,1] (a few smooth blobs and
/// a stroke, loosely digit-like). Stand-in for real handwritten inputs.
Matrix synth_image(std::uint64_t seed);

}  // namespace noisemap::phantom
