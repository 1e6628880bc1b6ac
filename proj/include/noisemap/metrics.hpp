#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "noisemap/operators.hpp"
#include "noisemap/phantom.hpp"

namespace noisemap::metrics {

using op::Grid;
using op::Matrix;
using op::Vector;

struct MetricConfig {
    double data_range = 1.0;  // maximum possible pixel value (phantom concentration)
    int window = 7;           // odd, at most min(image dims)
    double sigma = 1.5;       // gaussian window std
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Gaussian-weighted SSIM (Wang et al. 2004), averaged over all window
/// positions fully inside the image. Symmetric in its arguments.
double ssim(const Matrix& a, const Matrix& b, const MetricConfig& cfg);

/// 10 log10(data_range^2 / MSE) in dB; +infinity for identical images.
double psnr(const Matrix& a, const Matrix& b, double data_range);

struct ReconstructionReport {
    std::string method;
    std::map<std::string, double> parameters;
    double concentration = 0.0;

    std::vector<double> ssim_values;
    std::vector<double> psnr_values;
    double ssim_mean = 0.0;
    double ssim_std = 0.0;
    double psnr_mean = 0.0;         // over finite PSNR samples only
    double psnr_std = 0.0;
    int psnr_finite_count = 0;
    std::vector<double> seconds_per_reconstruction;
};

/// Per-sample metrics plus means and (n-1) standard deviations; a single
/// sample reports std 0, infinite PSNR samples are excluded from the PSNR
/// mean and counted.
ReconstructionReport evaluate_set(const std::vector<Matrix>& reconstructions,
                                  const std::vector<Matrix>& ground_truths, const MetricConfig& cfg);

struct GridPoint {
    double alpha = 0.0;
    int iterations = 1;
};

struct GridScore {
    GridPoint point;
    double mean_ssim = 0.0;
};

struct GridSearchResult {
    GridPoint best;
    double best_mean_ssim = 0.0;
    std::vector<GridScore> table;
};

using ReconstructionMethod = std::function<Vector(const phantom::MeasurementTuple&, const GridPoint&)>;

/// Mean-SSIM grid search over parameter points on a tuple subset; ties break
/// toward smaller alpha, then fewer iterations.
GridSearchResult grid_search(const ReconstructionMethod& method, const std::vector<GridPoint>& grid,
                             const std::vector<phantom::MeasurementTuple>& subset, const Grid& image_grid,
                             const MetricConfig& cfg);

}  // namespace noisemap::metrics
