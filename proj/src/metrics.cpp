#include "noisemap/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace noisemap::metrics {

namespace {

Matrix gaussian_window(int window, double sigma) {
    Matrix w(window, window);
    const double center = (window - 1) / 2.0;
    for (int r = 0; r < window; ++r)
        for (int c = 0; c < window; ++c) {
            const double dr = r - center;
            const double dc = c - center;
            w(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
    return w / w.sum();
}

void check_pair(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("metrics: image shapes differ");
    if (a.size() == 0) throw std::invalid_argument("metrics: empty images");
}

double sample_std(const std::vector<double>& values, double mean) {
    if (values.size() < 2) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / (static_cast<double>(values.size()) - 1.0));
}

}  // namespace

double ssim(const Matrix& a, const Matrix& b, const MetricConfig& cfg) {
    check_pair(a, b);
    if (cfg.window % 2 == 0 || cfg.window < 1) throw std::invalid_argument("ssim: window must be odd");
    if (cfg.window > a.rows() || cfg.window > a.cols())
        throw std::invalid_argument("ssim: window exceeds image size");
    if (!(cfg.data_range > 0.0)) throw std::invalid_argument("ssim: data_range must be > 0");
    if (!(cfg.sigma > 0.0)) throw std::invalid_argument("ssim: sigma must be > 0");

    const Matrix w = gaussian_window(cfg.window, cfg.sigma);
    const double c1 = (cfg.k1 * cfg.data_range) * (cfg.k1 * cfg.data_range);
    const double c2 = (cfg.k2 * cfg.data_range) * (cfg.k2 * cfg.data_range);

    const int row_stops = static_cast<int>(a.rows()) - cfg.window + 1;
    const int col_stops = static_cast<int>(a.cols()) - cfg.window + 1;
    double total = 0.0;
    for (int r0 = 0; r0 < row_stops; ++r0)
        for (int c0 = 0; c0 < col_stops; ++c0) {
            const auto pa = a.block(r0, c0, cfg.window, cfg.window).array();
            const auto pb = b.block(r0, c0, cfg.window, cfg.window).array();
            const auto wa = w.array();

            const double mu_a = (wa * pa).sum();
            const double mu_b = (wa * pb).sum();
            const double var_a = (wa * pa * pa).sum() - mu_a * mu_a;
            const double var_b = (wa * pb * pb).sum() - mu_b * mu_b;
            // the elementwise product goes first so the result is symmetric
            // in the arguments down to the last bit
            const double cov = (wa * (pa * pb)).sum() - mu_a * mu_b;

            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
        }
    return total / (static_cast<double>(row_stops) * col_stops);
}

double psnr(const Matrix& a, const Matrix& b, double data_range) {
    check_pair(a, b);
    if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be > 0");
    const double mse = (a - b).squaredNorm() / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

ReconstructionReport evaluate_set(const std::vector<Matrix>& reconstructions,
                                  const std::vector<Matrix>& ground_truths, const MetricConfig& cfg) {
    if (reconstructions.size() != ground_truths.size())
        throw std::invalid_argument("evaluate_set: reconstruction and ground-truth counts differ");
    if (reconstructions.empty()) throw std::invalid_argument("evaluate_set: empty input");

    ReconstructionReport report;
    report.ssim_values.reserve(reconstructions.size());
    report.psnr_values.reserve(reconstructions.size());
    for (std::size_t i = 0; i < reconstructions.size(); ++i) {
        report.ssim_values.push_back(ssim(ground_truths[i], reconstructions[i], cfg));
        report.psnr_values.push_back(psnr(ground_truths[i], reconstructions[i], cfg.data_range));
    }

    double ssim_sum = 0.0;
    for (double v : report.ssim_values) ssim_sum += v;
    report.ssim_mean = ssim_sum / static_cast<double>(report.ssim_values.size());
    report.ssim_std = sample_std(report.ssim_values, report.ssim_mean);

    std::vector<double> finite;
    for (double v : report.psnr_values)
        if (std::isfinite(v)) finite.push_back(v);
    report.psnr_finite_count = static_cast<int>(finite.size());
    if (finite.empty()) {
        report.psnr_mean = std::numeric_limits<double>::infinity();
        report.psnr_std = 0.0;
    } else {
        double psnr_sum = 0.0;
        for (double v : finite) psnr_sum += v;
        report.psnr_mean = psnr_sum / static_cast<double>(finite.size());
        report.psnr_std = sample_std(finite, report.psnr_mean);
    }
    return report;
}

GridSearchResult grid_search(const ReconstructionMethod& method, const std::vector<GridPoint>& grid,
                             const std::vector<phantom::MeasurementTuple>& subset, const Grid& image_grid,
                             const MetricConfig& cfg) {
    if (grid.empty()) throw std::invalid_argument("grid_search: empty parameter grid");
    if (subset.empty()) throw std::invalid_argument("grid_search: empty tuple subset");

    std::vector<Matrix> gt;
    gt.reserve(subset.size());
    for (const auto& t : subset)
        gt.push_back(phantom::unflatten(t.x, image_grid, t.concentration, phantom::Resolution::coarse).pixels);

    GridSearchResult result;
    bool have_best = false;
    for (const GridPoint& point : grid) {
        double total = 0.0;
        for (std::size_t i = 0; i < subset.size(); ++i) {
            const Vector recon = method(subset[i], point);
            const Matrix img =
                phantom::unflatten(recon, image_grid, subset[i].concentration, phantom::Resolution::coarse)
                    .pixels;
            total += ssim(gt[i], img, cfg);
        }
        const double mean_ssim = total / static_cast<double>(subset.size());
        result.table.push_back({point, mean_ssim});

        const bool better =
            !have_best || mean_ssim > result.best_mean_ssim ||
            (mean_ssim == result.best_mean_ssim &&
             (point.alpha < result.best.alpha ||
              (point.alpha == result.best.alpha && point.iterations < result.best.iterations)));
        if (better) {
            result.best = point;
            result.best_mean_ssim = mean_ssim;
            have_best = true;
        }
    }
    return result;
}

}  // namespace noisemap::metrics
