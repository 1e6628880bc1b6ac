// noisemap command line: synthetic dataset generation, discrepancy-network
// training, reconstruction, evaluation, grid search and image rendering.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "noisemap/common.hpp"
#include "noisemap/container.hpp"
#include "noisemap/dataset.hpp"
#include "noisemap/lda.hpp"
#include "noisemap/metrics.hpp"
#include "noisemap/operators.hpp"
#include "noisemap/phantom.hpp"
#include "noisemap/probability.hpp"
#include "noisemap/rng.hpp"
#include "noisemap/solvers.hpp"

namespace {

using namespace noisemap;
using nlohmann::json;

std::string format_concentration(double c) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%g", c);
    return buffer;
}

std::string tuple_prefix(double c) { return "c" + format_concentration(c); }

struct SynthConfig {
    std::uint64_t seed = 0;
    int count = 10;
    std::vector<double> concentrations = {2, 5, 10, 20, 50};
    int channels = 3;
    int frequencies = 64;
    int band_lo = 8;
    int band_hi = 51;
    int coarse_width = 17;
    int coarse_height = 15;
    int upsample = 5;
    double decay = 0.5;
    std::string noise_model = "ar1";
    double noise_sigma = 1.0;
    double noise_rho = 0.8;
    std::vector<double> noise_sigmas;
    std::vector<double> mix_weights = {0.85, 0.15};
    std::vector<double> mix_means = {0.0, 0.0};
    std::vector<double> mix_sigmas = {0.6, 3.0};
    int bank_count = 2000;
    double op_noise_sigma = 0.0;
    std::string operator_container;  // optional: read op_fine/op_rec instead of synthesizing
    std::string image_container;     // optional: read 28x28 images instead of synthesizing

    void load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file " + path.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw config_error("malformed config file " + path.string() + ": " + e.what());
        }
        const auto get = [&](const char* key, auto& slot) {
            if (j.contains(key)) {
                try {
                    slot = j.at(key).get<std::decay_t<decltype(slot)>>();
                } catch (const json::exception&) {
                    throw config_error(std::string("config field '") + key + "' has the wrong type");
                }
            }
        };
        get("seed", seed);
        get("count", count);
        get("concentrations", concentrations);
        get("channels", channels);
        get("frequencies", frequencies);
        get("band_lo", band_lo);
        get("band_hi", band_hi);
        get("coarse_width", coarse_width);
        get("coarse_height", coarse_height);
        get("upsample", upsample);
        get("decay", decay);
        get("noise_model", noise_model);
        get("noise_sigma", noise_sigma);
        get("noise_rho", noise_rho);
        get("noise_sigmas", noise_sigmas);
        get("mix_weights", mix_weights);
        get("mix_means", mix_means);
        get("mix_sigmas", mix_sigmas);
        get("bank_count", bank_count);
        get("op_noise_sigma", op_noise_sigma);
        get("operator_container", operator_container);
        get("image_container", image_container);
    }

    phantom::NoiseModel make_noise_model(int kprime) const {
        if (noise_model == "iid_gaussian") return phantom::NoiseModel::iid_gaussian(noise_sigma);
        if (noise_model == "diag_gaussian") {
            std::vector<double> sigmas = noise_sigmas;
            if (sigmas.empty()) throw config_error("diag_gaussian needs noise_sigmas");
            if (static_cast<int>(sigmas.size()) != kprime) {
                // tile the given pattern across the K' components
                std::vector<double> tiled(static_cast<std::size_t>(kprime));
                for (int i = 0; i < kprime; ++i) tiled[static_cast<std::size_t>(i)] = sigmas[static_cast<std::size_t>(i) % sigmas.size()];
                sigmas = std::move(tiled);
            }
            return phantom::NoiseModel::diag_gaussian(sigmas);
        }
        if (noise_model == "ar1") return phantom::NoiseModel::ar1(noise_rho, noise_sigma);
        if (noise_model == "gaussian_mixture")
            return phantom::NoiseModel::gaussian_mixture(mix_weights, mix_means, mix_sigmas);
        if (noise_model == "ar1_mixture")
            return phantom::NoiseModel::ar1_mixture(noise_rho, mix_weights, mix_means, mix_sigmas);
        throw config_error("unknown noise model '" + noise_model + "'");
    }
};

// exact coarse operator: columns summed over the s x s fine-pixel blocks so
// that A_coarse x_coarse == A_fine upsample(x_coarse)
op::ForwardOperator block_sum_columns(const op::ForwardOperator& fine, const op::Grid& coarse, int s) {
    op::ForwardOperator rec;
    rec.freq_index_set = fine.freq_index_set;
    rec.channels = fine.channels;
    rec.grid = coarse;
    rec.entries = op::CMatrix::Zero(fine.entries.rows(), coarse.pixels());
    const int fine_width = coarse.width * s;
    for (int r = 0; r < coarse.height; ++r)
        for (int c = 0; c < coarse.width; ++c) {
            const int coarse_index = r * coarse.width + c;
            for (int dr = 0; dr < s; ++dr)
                for (int dc = 0; dc < s; ++dc) {
                    const int fine_index = (r * s + dr) * fine_width + (c * s + dc);
                    rec.entries.col(coarse_index) += fine.entries.col(fine_index);
                }
        }
    return rec;
}

int run_synth_data(const SynthConfig& cfg, const std::filesystem::path& out) {
    if (cfg.count < 1) throw config_error("count must be >= 1");
    if (cfg.concentrations.empty()) throw config_error("concentrations must be nonempty");
    for (double c : cfg.concentrations)
        if (!(c > 0.0)) throw config_error("concentrations must be positive");
    if (cfg.upsample < 1) throw config_error("upsample must be >= 1");

    const op::Grid coarse{cfg.coarse_width, cfg.coarse_height};
    const op::Grid fine{cfg.coarse_width * cfg.upsample, cfg.coarse_height * cfg.upsample};

    op::ForwardOperator op_fine, op_rec;
    if (cfg.operator_container.empty()) {
        const op::RawOperator raw =
            op::synth_operator(stream_seed(cfg.seed, 4), cfg.channels, cfg.frequencies, fine, cfg.decay);
        op_fine = op::select_frequencies(raw, op::Band{cfg.band_lo, cfg.band_hi});
        op_rec = block_sum_columns(op_fine, coarse, cfg.upsample);
    } else {
        const io::Container source = io::Container::open(cfg.operator_container);
        op_fine = io::read_operator(source, "op_fine");
        op_rec = io::read_operator(source, "op_rec");
        if (op_fine.grid != fine || op_rec.grid != coarse)
            throw data_error("operator container grids do not match the requested geometry");
    }
    const int kprime = op_fine.stacked_rows();

    io::Container out_c = io::Container::create(out);
    io::write_operator(out_c, "op_fine", op_fine);
    io::write_operator(out_c, "op_rec", op_rec);

    if (cfg.op_noise_sigma > 0.0) {
        Rng rng(stream_seed(cfg.seed, 5));
        op::CMatrix pixel_noise(kprime, coarse.pixels());
        for (Eigen::Index r = 0; r < pixel_noise.rows(); ++r)
            for (Eigen::Index c = 0; c < pixel_noise.cols(); ++c)
                pixel_noise(r, c) = {cfg.op_noise_sigma * rng.gaussian(), cfg.op_noise_sigma * rng.gaussian()};
        io::write_operator(out_c, "op_rec_noisy", op::add_operator_noise(op_rec, pixel_noise));
    }

    // phantoms from 28x28 images, either read from a container or synthesized
    std::vector<phantom::Phantom> phantoms(static_cast<std::size_t>(cfg.count));
    std::vector<double> image_payload(static_cast<std::size_t>(cfg.count) * 28 * 28);
    if (!cfg.image_container.empty()) {
        const io::Container source = io::Container::open(cfg.image_container);
        const std::string key = source.has_array("phantom_images") ? "phantom_images" : "images";
        const auto info = source.array_info(key);
        if (info.shape.size() != 3 || info.shape[1] != 28 || info.shape[2] != 28)
            throw data_error("image array '" + key + "' must have shape [n, 28, 28]");
        if (info.shape[0] < static_cast<std::uint64_t>(cfg.count))
            throw data_error("image container holds fewer images than --count");
        const auto values = source.read_f64(key);
        std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(image_payload.size()),
                  image_payload.begin());
    } else {
        parallel_for(cfg.count, [&](int i) {
            const op::Matrix img = phantom::synth_image(stream_seed(cfg.seed, 1) + static_cast<std::uint64_t>(i));
            for (int r = 0; r < 28; ++r)
                for (int c = 0; c < 28; ++c)
                    image_payload[static_cast<std::size_t>(i) * 784 + static_cast<std::size_t>(r) * 28 +
                                  static_cast<std::size_t>(c)] = img(r, c);
        });
    }
    parallel_for(cfg.count, [&](int i) {
        op::Matrix img(28, 28);
        for (int r = 0; r < 28; ++r)
            for (int c = 0; c < 28; ++c)
                img(r, c) = image_payload[static_cast<std::size_t>(i) * 784 + static_cast<std::size_t>(r) * 28 +
                                          static_cast<std::size_t>(c)];
        phantoms[static_cast<std::size_t>(i)] = phantom::preprocess_phantom(img, 1.0);
    });
    out_c.write_f64("phantom_images", {static_cast<std::uint64_t>(cfg.count), 28, 28}, image_payload,
                    "seed=" + std::to_string(cfg.seed));

    // measurement noise, shared across all concentrations
    const phantom::NoiseModel noise_model = cfg.make_noise_model(kprime);
    const auto tuple_noise = phantom::synth_noise(noise_model, kprime, cfg.count, stream_seed(cfg.seed, 2));

    // unit-concentration tuples, rescaled per concentration
    std::vector<phantom::MeasurementTuple> unit_tuples(static_cast<std::size_t>(cfg.count));
    parallel_for(cfg.count, [&](int i) {
        unit_tuples[static_cast<std::size_t>(i)] = phantom::simulate_measurement(
            op_fine, phantoms[static_cast<std::size_t>(i)], tuple_noise[static_cast<std::size_t>(i)], cfg.upsample);
    });

    for (double c : cfg.concentrations) {
        std::vector<phantom::MeasurementTuple> tuples(unit_tuples.size());
        for (std::size_t i = 0; i < unit_tuples.size(); ++i)
            tuples[i] = phantom::rescale_concentration(unit_tuples[i], c);
        io::write_tuples(out_c, tuple_prefix(c), tuples, "seed=" + std::to_string(cfg.seed));
    }

    const auto bank = phantom::synth_noise(noise_model, kprime, cfg.bank_count, stream_seed(cfg.seed, 3));
    io::write_noise_bank(out_c, "noise_bank", bank, "seed=" + std::to_string(cfg.seed));

    out_c.meta()["seed"] = cfg.seed;
    out_c.meta()["count"] = cfg.count;
    out_c.meta()["concentrations"] = cfg.concentrations;
    out_c.meta()["grid_coarse"] = {coarse.width, coarse.height};
    out_c.meta()["grid_fine"] = {fine.width, fine.height};
    out_c.meta()["upsample"] = cfg.upsample;
    out_c.meta()["kprime"] = kprime;
    out_c.meta()["band"] = {cfg.band_lo, cfg.band_hi};
    out_c.meta()["noise"] = noise_model.describe();
    out_c.save();

    std::cout << "wrote " << cfg.count << " tuples x " << cfg.concentrations.size() << " concentrations, K'="
              << kprime << " to " << out.string() << "\n";
    return 0;
}

std::vector<double> list_concentrations(const io::Container& c) {
    if (!c.meta().contains("concentrations")) throw data_error("container metadata lacks 'concentrations'");
    return c.meta().at("concentrations").get<std::vector<double>>();
}

op::Grid coarse_grid_of(const io::Container& c) {
    if (!c.meta().contains("grid_coarse")) throw data_error("container metadata lacks 'grid_coarse'");
    const auto dims = c.meta().at("grid_coarse").get<std::vector<int>>();
    if (dims.size() != 2) throw data_error("grid_coarse must have two entries");
    return op::Grid{dims[0], dims[1]};
}

struct MethodContext {
    std::string method;
    op::RealizedSystem sys;
    double alpha = 0.0;
    int iterations = 1;
    double step_size = 1.0;
    bool backtracking = true;
    int rk_sweeps = 10;
    solve::WhiteningMatrix whitening;
    std::unique_ptr<flow::FlowModel> model;

    // thread-safe: every member is read-only during reconstruction
    op::Vector reconstruct_with(const op::CVector& y_delta, double a, int iters) const {
        const op::Vector y = op::realize_vector(y_delta);
        if (method == "tikhonov") return solve::tikhonov_solve(sys, y, a);
        if (method == "rk") {
            solve::SolverConfig cfg;
            cfg.alpha = a;
            cfg.sweeps = iters;
            return solve::kaczmarz_regularized(sys, y, cfg);
        }
        if (method == "wrk") {
            solve::SolverConfig cfg;
            cfg.alpha = a;
            cfg.sweeps = iters;
            return solve::wrk_solve(sys, y, whitening, cfg);
        }
        lda::LdaConfig cfg;
        cfg.alpha = a;
        cfg.max_iterations = iters;
        cfg.step_size = step_size;
        cfg.backtracking = backtracking;
        cfg.rk.alpha = a;
        cfg.rk.sweeps = rk_sweeps;
        return lda::lda_reconstruct(*model, sys, y, cfg).x;
    }

    op::Vector reconstruct(const op::CVector& y_delta) const { return reconstruct_with(y_delta, alpha, iterations); }
};

MethodContext make_context(const io::Container& data, const std::string& method, const std::string& operator_name,
                           double alpha, int iterations, double step_size, bool backtracking, int rk_sweeps,
                           const std::string& checkpoint) {
    MethodContext ctx;
    ctx.method = method;
    ctx.alpha = alpha;
    ctx.iterations = iterations;
    ctx.step_size = step_size;
    ctx.backtracking = backtracking;
    ctx.rk_sweeps = rk_sweeps;

    const op::ForwardOperator fwd = io::read_operator(data, operator_name);
    ctx.sys = op::realize(fwd);

    if (method == "wrk") {
        if (!data.has_array("noise_bank"))
            throw data_error("method wrk needs a 'noise_bank' array for whitening");
        ctx.whitening = solve::whitening_matrix(io::read_noise_bank(data, "noise_bank"));
    } else if (method == "lda") {
        if (checkpoint.empty()) throw config_error("method lda needs --checkpoint");
        ctx.model = std::make_unique<flow::FlowModel>(io::load_flow(checkpoint));
        if (ctx.model->input_channels() != 2 || 2 * ctx.model->input_positions() != ctx.sys.rows.rows())
            throw data_error("checkpoint input shape does not match the operator's K'");
    } else if (method != "tikhonov" && method != "rk") {
        throw config_error("unknown method '" + method + "'");
    }
    return ctx;
}

int run_reconstruct(const std::filesystem::path& data_dir, const std::filesystem::path& out,
                    const std::string& method, const std::string& operator_name, double alpha, int iterations,
                    double step_size, bool backtracking, int rk_sweeps, const std::string& checkpoint,
                    std::vector<double> concentrations) {
    const io::Container data = io::Container::open(data_dir);
    const MethodContext ctx = make_context(data, method, operator_name, alpha, iterations, step_size,
                                           backtracking, rk_sweeps, checkpoint);
    if (concentrations.empty()) concentrations = list_concentrations(data);

    io::Container out_c = io::Container::create(out);
    for (double c : concentrations) {
        const auto tuples = io::read_tuples(data, tuple_prefix(c));
        const int n = static_cast<int>(tuples.size());
        const int pixels = static_cast<int>(tuples.front().x.size());
        std::vector<double> recon(static_cast<std::size_t>(n) * static_cast<std::size_t>(pixels));
        std::vector<double> seconds(static_cast<std::size_t>(n));

        parallel_for(n, [&](int i) {
            const auto start = std::chrono::steady_clock::now();
            const op::Vector x = ctx.reconstruct(tuples[static_cast<std::size_t>(i)].y_delta());
            seconds[static_cast<std::size_t>(i)] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            for (int j = 0; j < pixels; ++j)
                recon[static_cast<std::size_t>(i) * static_cast<std::size_t>(pixels) + static_cast<std::size_t>(j)] =
                    x[j];
        });

        const std::string prefix = tuple_prefix(c);
        out_c.write_f64(prefix + "/recon", {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(pixels)},
                        recon);
        out_c.write_f64(prefix + "/seconds", {static_cast<std::uint64_t>(n)}, seconds);
        out_c.meta()[prefix] = {{"concentration", c}, {"count", n}};
    }
    out_c.meta()["method"] = method;
    out_c.meta()["alpha"] = alpha;
    out_c.meta()["iterations"] = iterations;
    out_c.meta()["operator"] = operator_name;
    out_c.meta()["data"] = data_dir.string();
    if (data.meta().contains("grid_coarse")) out_c.meta()["grid_coarse"] = data.meta().at("grid_coarse");
    json clist = json::array();
    for (double c : concentrations) clist.push_back(c);
    out_c.meta()["concentrations"] = clist;
    out_c.save();
    std::cout << method << " reconstructions written to " << out.string() << "\n";
    return 0;
}

int run_train_flow(const std::filesystem::path& data_dir, const std::filesystem::path& out,
                   const std::string& arch, std::vector<int> widths, int couplings, int width, int epochs,
                   int batch_size, double lr, std::uint64_t seed, double val_fraction) {
    const io::Container data = io::Container::open(data_dir);
    if (!data.has_array("noise_bank")) throw data_error("missing array 'noise_bank' in " + data_dir.string());
    const auto bank = io::read_noise_bank(data, "noise_bank");
    const int kprime = static_cast<int>(bank.front().values.size());

    std::vector<flow::ChannelTensor> samples;
    samples.reserve(bank.size());
    for (const auto& s : bank) samples.push_back(lda::realized_to_flow(op::realize_vector(s.values)));

    flow::FlowModel model = [&]() {
        if (arch == "multi-scale") {
            if (kprime % 4 != 0 || kprime < 8)
                throw config_error("multi-scale flow needs K' to be a multiple of 4 and at least 8; got " +
                                   std::to_string(kprime));
            if (widths.size() != 3) throw config_error("--widths needs three entries");
            return flow::FlowModel::multi_scale(kprime, {widths[0], widths[1], widths[2]}, seed);
        }
        if (arch == "stack") return flow::FlowModel::coupling_stack(2, kprime, couplings, width, seed);
        throw config_error("unknown architecture '" + arch + "' (use multi-scale or stack)");
    }();

    flow::TrainConfig cfg;
    cfg.batch_size = batch_size;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.seed = seed;
    cfg.validation_fraction = val_fraction;

    flow::TrainResult result;
    try {
        result = flow::train(model, samples, cfg);
    } catch (const flow::training_error& e) {
        std::cerr << e.what() << "\n";
        for (std::size_t i = 0; i < e.partial_result.history.size(); ++i)
            std::cerr << "epoch " << i << ": train " << e.partial_result.history[i].train_nll << " val "
                      << e.partial_result.history[i].validation_nll << "\n";
        throw;
    }

    io::save_flow(out, model, result.history);
    std::ofstream table(out / "loss_history.txt", std::ios::trunc);
    table << "epoch  train_nll  val_nll\n";
    for (std::size_t i = 0; i < result.history.size(); ++i)
        table << i << "  " << result.history[i].train_nll << "  " << result.history[i].validation_nll << "\n";

    std::cout << "trained " << model.parameter_count() << " parameters for " << epochs << " epochs; final val nll "
              << result.history.back().validation_nll << "\n";
    return 0;
}

int run_evaluate(const std::filesystem::path& recon_dir, const std::filesystem::path& data_dir,
                 const std::filesystem::path& out, int window, double sigma) {
    const io::Container recon = io::Container::open(recon_dir);
    const io::Container data = io::Container::open(data_dir);
    const op::Grid grid = coarse_grid_of(data);
    const auto concentrations = list_concentrations(recon);
    const std::string method =
        recon.meta().contains("method") ? recon.meta().at("method").get<std::string>() : "unknown";

    for (double c : concentrations) {
        const std::string prefix = tuple_prefix(c);
        const auto tuples = io::read_tuples(data, prefix);
        const auto payload = recon.read_f64(prefix + "/recon");
        const auto info = recon.array_info(prefix + "/recon");
        if (info.shape.size() != 2 || info.shape[0] != tuples.size() ||
            info.shape[1] != static_cast<std::uint64_t>(grid.pixels()))
            throw data_error("reconstruction array shape does not match the dataset for " + prefix);

        std::vector<op::Matrix> recon_images, gt_images;
        for (std::size_t i = 0; i < tuples.size(); ++i) {
            op::Vector x(grid.pixels());
            for (int j = 0; j < grid.pixels(); ++j)
                x[j] = payload[i * static_cast<std::size_t>(grid.pixels()) + static_cast<std::size_t>(j)];
            recon_images.push_back(phantom::unflatten(x, grid, c, phantom::Resolution::coarse).pixels);
            gt_images.push_back(phantom::unflatten(tuples[i].x, grid, c, phantom::Resolution::coarse).pixels);
        }

        metrics::MetricConfig cfg;
        cfg.data_range = c;
        cfg.window = window;
        cfg.sigma = sigma;
        metrics::ReconstructionReport report = metrics::evaluate_set(recon_images, gt_images, cfg);
        report.method = method;
        report.concentration = c;
        if (recon.meta().contains("alpha")) report.parameters["alpha"] = recon.meta().at("alpha").get<double>();
        if (recon.meta().contains("iterations"))
            report.parameters["iterations"] = recon.meta().at("iterations").get<double>();
        if (recon.has_array(prefix + "/seconds"))
            report.seconds_per_reconstruction = recon.read_f64(prefix + "/seconds");

        io::write_report(out / prefix, report, cfg);
        std::cout << prefix << ": ssim " << report.ssim_mean << " +- " << report.ssim_std << ", psnr "
                  << report.psnr_mean << "\n";
    }
    return 0;
}

int run_grid_search(const std::filesystem::path& data_dir, const std::filesystem::path& out,
                    const std::string& method, const std::string& operator_name, std::vector<double> alphas,
                    std::vector<int> iteration_grid, int subset_count, double concentration,
                    double step_size, bool backtracking, int rk_sweeps, const std::string& checkpoint,
                    int window, double sigma) {
    if (alphas.empty()) throw config_error("--alphas must be nonempty");
    if (iteration_grid.empty()) iteration_grid = {1};

    const io::Container data = io::Container::open(data_dir);
    const op::Grid grid = coarse_grid_of(data);
    double c = concentration;
    if (!(c > 0.0)) c = list_concentrations(data).front();

    auto tuples = io::read_tuples(data, tuple_prefix(c));
    if (subset_count < 1 || subset_count > static_cast<int>(tuples.size()))
        throw config_error("--subset must lie in [1, tuple count]");
    tuples.resize(static_cast<std::size_t>(subset_count));

    std::vector<metrics::GridPoint> grid_points;
    for (double a : alphas)
        for (int it : iteration_grid) grid_points.push_back({a, it});

    const MethodContext base = make_context(data, method, operator_name, alphas.front(), iteration_grid.front(),
                                            step_size, backtracking, rk_sweeps, checkpoint);
    const metrics::ReconstructionMethod handle = [&base](const phantom::MeasurementTuple& t,
                                                         const metrics::GridPoint& p) {
        return base.reconstruct_with(t.y_delta(), p.alpha, p.iterations);
    };

    metrics::MetricConfig cfg;
    cfg.data_range = c;
    cfg.window = window;
    cfg.sigma = sigma;
    const auto result = metrics::grid_search(handle, grid_points, tuples, grid, cfg);

    io::Container out_c = io::Container::create(out);
    std::vector<double> table(result.table.size() * 3);
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        table[3 * i] = result.table[i].point.alpha;
        table[3 * i + 1] = result.table[i].point.iterations;
        table[3 * i + 2] = result.table[i].mean_ssim;
    }
    out_c.write_f64("scores", {result.table.size(), 3}, table);
    out_c.meta() = {{"method", method},
                    {"concentration", c},
                    {"subset", subset_count},
                    {"best_alpha", result.best.alpha},
                    {"best_iterations", result.best.iterations},
                    {"best_mean_ssim", result.best_mean_ssim}};
    out_c.save();

    std::ofstream txt(out / "grid.txt", std::ios::trunc);
    txt << "alpha  iterations  mean_ssim\n";
    for (const auto& row : result.table)
        txt << row.point.alpha << "  " << row.point.iterations << "  " << row.mean_ssim << "\n";
    txt << "best: alpha=" << result.best.alpha << " iterations=" << result.best.iterations
        << " mean_ssim=" << result.best_mean_ssim << "\n";

    std::cout << "best alpha " << result.best.alpha << ", iterations " << result.best.iterations
              << ", mean ssim " << result.best_mean_ssim << "\n";
    return 0;
}

int run_render(const std::filesystem::path& in_dir, const std::filesystem::path& out,
               const std::string& array_name, double data_range, int grid_w, int grid_h) {
    const io::Container c = io::Container::open(in_dir);
    const auto info = c.array_info(array_name);
    const auto payload = c.read_f64(array_name);

    int width = grid_w, height = grid_h;
    if (info.shape.size() == 3) {
        height = static_cast<int>(info.shape[1]);
        width = static_cast<int>(info.shape[2]);
    } else if (info.shape.size() == 2 && width <= 0) {
        const op::Grid grid = coarse_grid_of(c);
        width = grid.width;
        height = grid.height;
    }
    if (width <= 0 || height <= 0) throw config_error("render needs --grid WxH for this array");
    if (info.shape.size() < 2 || info.shape.size() > 3)
        throw data_error("render expects a rank-2 or rank-3 f64 array");
    const std::size_t pixels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (info.shape.size() == 2 && info.shape[1] != pixels)
        throw data_error("array row length does not match the grid");

    double range = data_range;
    if (!(range > 0.0)) {
        range = 0.0;
        for (double v : payload) range = std::max(range, v);
        if (range <= 0.0) range = 1.0;
    }

    std::filesystem::create_directories(out);
    const std::size_t count = info.shape[0];
    for (std::size_t i = 0; i < count; ++i) {
        op::Matrix img(height, width);
        for (int r = 0; r < height; ++r)
            for (int col = 0; col < width; ++col)
                img(r, col) = payload[i * pixels + static_cast<std::size_t>(r) * static_cast<std::size_t>(width) +
                                      static_cast<std::size_t>(col)];
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.pgm", i);
        io::write_pgm(out / name, img, range);
    }
    std::cout << "rendered " << count << " images to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"linear inverse problems with learned noise discrepancies"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset container");
    SynthConfig scfg;
    std::string synth_out, synth_config;
    synth->add_option("--out", synth_out, "output container directory")->required();
    synth->add_option("--config", synth_config, "JSON config file (flags override)");
    synth->add_option("--seed", scfg.seed, "master seed");
    synth->add_option("--count", scfg.count, "number of phantoms");
    synth->add_option("--concentration", scfg.concentrations, "concentration list")->delimiter(',');
    synth->add_option("--channels", scfg.channels, "receive channels");
    synth->add_option("--frequencies", scfg.frequencies, "raw frequency count K");
    synth->add_option("--band-lo", scfg.band_lo, "first retained frequency");
    synth->add_option("--band-hi", scfg.band_hi, "last retained frequency");
    synth->add_option("--upsample", scfg.upsample, "fine-grid upsampling factor");
    synth->add_option("--decay", scfg.decay, "operator frequency decay exponent");
    synth->add_option("--noise-model", scfg.noise_model, "iid_gaussian|diag_gaussian|ar1|gaussian_mixture");
    synth->add_option("--noise-sigma", scfg.noise_sigma, "noise scale");
    synth->add_option("--noise-rho", scfg.noise_rho, "ar1 correlation");
    synth->add_option("--noise-sigmas", scfg.noise_sigmas, "per-component stds (diag_gaussian)")->delimiter(',');
    synth->add_option("--bank-count", scfg.bank_count, "noise bank size");
    synth->add_option("--op-noise-sigma", scfg.op_noise_sigma, "pixelwise operator noise std");
    synth->add_option("--images", scfg.image_container, "container with [n,28,28] input images");
    synth->add_option("--operators", scfg.operator_container, "container with op_fine/op_rec to reuse");

    // train-flow
    auto* train = app.add_subcommand("train-flow", "train the discrepancy network on a noise bank");
    std::string train_data, train_out, train_arch = "multi-scale";
    std::vector<int> train_widths = {512, 256, 128};
    int train_couplings = 2, train_width = 32, train_epochs = 25, train_batch = 256;
    double train_lr = 1e-3, train_val = 0.1;
    std::uint64_t train_seed = 0;
    train->add_option("--data", train_data, "dataset container with a noise_bank")->required();
    train->add_option("--out", train_out, "checkpoint directory")->required();
    train->add_option("--arch", train_arch, "multi-scale|stack");
    train->add_option("--widths", train_widths, "multi-scale hidden widths (three values)")->delimiter(',');
    train->add_option("--couplings", train_couplings, "stack: coupling count");
    train->add_option("--width", train_width, "stack: hidden width");
    train->add_option("--epochs", train_epochs, "training epochs");
    train->add_option("--batch-size", train_batch, "minibatch size");
    train->add_option("--lr", train_lr, "Adam learning rate");
    train->add_option("--seed", train_seed, "training seed");
    train->add_option("--val-fraction", train_val, "validation fraction");

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "reconstruct phantoms from noisy measurements");
    std::string rec_data, rec_out, rec_method, rec_checkpoint, rec_operator = "op_rec";
    double rec_alpha = 0.1, rec_step = 1.0;
    int rec_iterations = 50, rec_rk_sweeps = 10;
    bool rec_no_backtracking = false;
    std::vector<double> rec_concentrations;
    rec->add_option("--data", rec_data, "dataset container")->required();
    rec->add_option("--out", rec_out, "output container directory")->required();
    rec->add_option("--method", rec_method, "tikhonov|rk|wrk|lda")->required();
    rec->add_option("--alpha", rec_alpha, "regularization weight");
    rec->add_option("--iterations", rec_iterations, "sweeps (rk/wrk) or descent steps (lda)");
    rec->add_option("--concentration", rec_concentrations, "concentrations to reconstruct (default: all)")
        ->delimiter(',');
    rec->add_option("--checkpoint", rec_checkpoint, "flow checkpoint (lda)");
    rec->add_option("--operator", rec_operator, "operator array prefix (default op_rec)");
    rec->add_option("--step-size", rec_step, "lda step size relative to the curvature scale");
    rec->add_option("--rk-sweeps", rec_rk_sweeps, "lda: sweeps of the RK initializer");
    rec->add_flag("--no-backtracking", rec_no_backtracking, "lda: disable Armijo backtracking");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "ssim/psnr reports for a reconstruction container");
    std::string eval_recon, eval_data, eval_out;
    int eval_window = 7;
    double eval_sigma = 1.5;
    eval->add_option("--recon", eval_recon, "reconstruction container")->required();
    eval->add_option("--data", eval_data, "dataset container")->required();
    eval->add_option("--out", eval_out, "report directory")->required();
    eval->add_option("--window", eval_window, "ssim window (odd)");
    eval->add_option("--sigma", eval_sigma, "ssim gaussian sigma");

    // grid-search
    auto* gs = app.add_subcommand("grid-search", "pick parameters by mean ssim on a tuple subset");
    std::string gs_data, gs_out, gs_method, gs_checkpoint, gs_operator = "op_rec";
    std::vector<double> gs_alphas;
    std::vector<int> gs_iterations;
    int gs_subset = 5, gs_window = 7, gs_rk_sweeps = 10;
    double gs_concentration = 0.0, gs_sigma = 1.5, gs_step = 1.0;
    bool gs_no_backtracking = false;
    gs->add_option("--data", gs_data, "dataset container")->required();
    gs->add_option("--out", gs_out, "output directory")->required();
    gs->add_option("--method", gs_method, "tikhonov|rk|wrk|lda")->required();
    gs->add_option("--alphas", gs_alphas, "alpha grid")->required()->delimiter(',');
    gs->add_option("--iterations", gs_iterations, "iteration grid")->delimiter(',');
    gs->add_option("--subset", gs_subset, "number of leading tuples to score");
    gs->add_option("--concentration", gs_concentration, "concentration (default: first)");
    gs->add_option("--checkpoint", gs_checkpoint, "flow checkpoint (lda)");
    gs->add_option("--operator", gs_operator, "operator array prefix");
    gs->add_option("--step-size", gs_step, "lda step size");
    gs->add_option("--rk-sweeps", gs_rk_sweeps, "lda RK initializer sweeps");
    gs->add_option("--window", gs_window, "ssim window");
    gs->add_option("--sigma", gs_sigma, "ssim gaussian sigma");
    gs->add_flag("--no-backtracking", gs_no_backtracking, "lda: disable backtracking");

    // render
    auto* render = app.add_subcommand("render", "write arrays as 8-bit portable graymaps");
    std::string render_in, render_out, render_array;
    double render_range = 0.0;
    int render_w = 0, render_h = 0;
    render->add_option("--in", render_in, "container directory")->required();
    render->add_option("--out", render_out, "output directory")->required();
    render->add_option("--array", render_array, "array name")->required();
    render->add_option("--data-range", render_range, "pixel value mapped to white (default: array max)");
    render->add_option("--grid-width", render_w, "image width for rank-2 arrays");
    render->add_option("--grid-height", render_h, "image height for rank-2 arrays");

    try {
        app.parse(argc, argv);

        if (synth->parsed()) {
            SynthConfig cfg;
            if (!synth_config.empty()) cfg.load(synth_config);
            // flags override config-file values
            if (synth->count("--seed")) cfg.seed = scfg.seed;
            if (synth->count("--count")) cfg.count = scfg.count;
            if (synth->count("--concentration")) cfg.concentrations = scfg.concentrations;
            if (synth->count("--channels")) cfg.channels = scfg.channels;
            if (synth->count("--frequencies")) cfg.frequencies = scfg.frequencies;
            if (synth->count("--band-lo")) cfg.band_lo = scfg.band_lo;
            if (synth->count("--band-hi")) cfg.band_hi = scfg.band_hi;
            if (synth->count("--upsample")) cfg.upsample = scfg.upsample;
            if (synth->count("--decay")) cfg.decay = scfg.decay;
            if (synth->count("--noise-model")) cfg.noise_model = scfg.noise_model;
            if (synth->count("--noise-sigma")) cfg.noise_sigma = scfg.noise_sigma;
            if (synth->count("--noise-rho")) cfg.noise_rho = scfg.noise_rho;
            if (synth->count("--noise-sigmas")) cfg.noise_sigmas = scfg.noise_sigmas;
            if (synth->count("--bank-count")) cfg.bank_count = scfg.bank_count;
            if (synth->count("--op-noise-sigma")) cfg.op_noise_sigma = scfg.op_noise_sigma;
            if (synth->count("--images")) cfg.image_container = scfg.image_container;
            if (synth->count("--operators")) cfg.operator_container = scfg.operator_container;
            return run_synth_data(cfg, synth_out);
        }
        if (train->parsed())
            return run_train_flow(train_data, train_out, train_arch, train_widths, train_couplings, train_width,
                                  train_epochs, train_batch, train_lr, train_seed, train_val);
        if (rec->parsed())
            return run_reconstruct(rec_data, rec_out, rec_method, rec_operator, rec_alpha, rec_iterations,
                                   rec_step, !rec_no_backtracking, rec_rk_sweeps, rec_checkpoint,
                                   rec_concentrations);
        if (eval->parsed()) return run_evaluate(eval_recon, eval_data, eval_out, eval_window, eval_sigma);
        if (gs->parsed())
            return run_grid_search(gs_data, gs_out, gs_method, gs_operator, gs_alphas, gs_iterations, gs_subset,
                                   gs_concentration, gs_step, !gs_no_backtracking, gs_rk_sweeps, gs_checkpoint,
                                   gs_window, gs_sigma);
        if (render->parsed())
            return run_render(render_in, render_out, render_array, render_range, render_w, render_h);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
