// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "noisemap/container.hpp"
#include "noisemap/dataset.hpp"
#include "noisemap/lda.hpp"
#include "noisemap/metrics.hpp"
#include "noisemap/operators.hpp"
#include "noisemap/phantom.hpp"
#include "noisemap/probability.hpp"
#include "noisemap/rng.hpp"
#include "noisemap/solvers.hpp"

#ifndef NOISEMAP_CLI_PATH
#define NOISEMAP_CLI_PATH "noisemap"
#endif

namespace {

using namespace noisemap;
using flow::ChannelTensor;
using flow::FlowModel;
using op::Band;
using op::Grid;
using op::Matrix;
using op::RealizedSystem;
using op::Vector;

struct Checker {
    bool all_passed = true;

    void run(int id, const std::string& label, const std::function<void(std::ostringstream&)>& body) {
        const auto start = std::chrono::steady_clock::now();
        std::ostringstream detail;
        bool ok = true;
        try {
            body(detail);
        } catch (const std::exception& e) {
            ok = false;
            detail << " exception: " << e.what();
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %2d: %s (%s) [%.1fs]\n", ok ? "PASS" : "FAIL", id, label.c_str(),
                    detail.str().c_str(), seconds);
        std::fflush(stdout);
        all_passed = all_passed && ok;
    }
};

#define REQUIRE_MSG(cond, stream_expr)                                    \
    do {                                                                  \
        if (!(cond)) {                                                    \
            std::ostringstream os_;                                       \
            os_ << stream_expr;                                           \
            throw std::runtime_error(os_.str() + " [" #cond "]");         \
        }                                                                 \
    } while (0)

RealizedSystem random_system(std::uint64_t seed, int complex_rows, int n) {
    return op::realize(
        op::select_frequencies(op::synth_operator(seed, 1, complex_rows, Grid{n, 1}, 0.0), Band{0, complex_rows - 1}));
}

Vector random_vector(Rng& rng, int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.gaussian();
    return v;
}

Vector weighted_normal_oracle(const RealizedSystem& sys, const Vector& y, const Vector& weights, double alpha) {
    const Matrix wb = weights.asDiagonal() * sys.rows;
    Matrix normal = wb.transpose() * wb;
    normal.diagonal().array() += alpha;
    return normal.fullPivLu().solve(wb.transpose() * (weights.asDiagonal() * y));
}

double numeric_logdet(const FlowModel& model, const ChannelTensor& x, double h = 1e-6) {
    const int total = x.size();
    Matrix jac(total, total);
    for (int i = 0; i < total; ++i) {
        ChannelTensor plus = x, minus = x;
        plus.data(i / x.positions(), i % x.positions()) += h;
        minus.data(i / x.positions(), i % x.positions()) -= h;
        const Matrix fp = model.forward(plus).output.data;
        const Matrix fm = model.forward(minus).output.data;
        for (int o = 0; o < total; ++o)
            jac(o, i) =
                (fp(o / x.positions(), o % x.positions()) - fm(o / x.positions(), o % x.positions())) / (2.0 * h);
    }
    return std::log(std::abs(jac.determinant()));
}

// ---------------------------------------------------------------- criteria

void criterion_1(std::ostringstream& out) {
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const RealizedSystem sys = random_system(1000 + seed, 10, 12);  // 20 x 12 realized
        Rng rng(2000 + seed);
        const Vector y = random_vector(rng, 20);
        const double alpha = 0.2;
        solve::SolverConfig cfg;
        cfg.alpha = alpha;
        cfg.sweeps = 10000;
        const Vector rk = solve::kaczmarz_regularized(sys, y, cfg);
        const Vector analytic = solve::tikhonov_solve(sys, y, alpha);
        worst = std::max(worst, (rk - analytic).norm() / analytic.norm());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << "worst rel err " << worst << ", " << seconds << "s";
    REQUIRE_MSG(worst < 1e-6, "RK vs Tikhonov rel err " << worst);
    REQUIRE_MSG(seconds < 5.0, "runtime " << seconds << "s exceeds 5s");
}

void criterion_2(std::ostringstream& out) {
    int identical = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const RealizedSystem sys = random_system(3000 + seed, 7, 5);
        Rng rng(4000 + seed);
        const Vector y = random_vector(rng, 14);
        solve::SolverConfig cfg;
        cfg.alpha = 0.1 + 0.05 * static_cast<double>(seed);
        cfg.sweeps = 25;
        solve::WhiteningMatrix identity;
        identity.diag = Vector::Ones(14);
        const Vector a = solve::wrk_solve(sys, y, identity, cfg);
        const Vector b = solve::kaczmarz_regularized(sys, y, cfg);
        REQUIRE_MSG(a == b, "WRK with identity whitening differs from RK at seed " << seed);
        ++identical;
    }
    out << identical << "/10 instances bitwise equal";
}

void criterion_3(std::ostringstream& out) {
    // invertibility on 50 random parameterizations of the desk-scale model
    double worst_roundtrip = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        FlowModel model = FlowModel::multi_scale(16, {16, 8, 8}, seed);
        model.randomize_parameters(seed + 900, 0.6);
        Rng rng(seed + 500);
        ChannelTensor x(2, 16);
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < 16; ++j) x.data(c, j) = 1.5 * rng.gaussian();
        const auto fr = model.forward(x);
        worst_roundtrip =
            std::max(worst_roundtrip, (model.inverse(fr.output).data - x.data).cwiseAbs().maxCoeff());
    }
    REQUIRE_MSG(worst_roundtrip < 1e-10, "round-trip error " << worst_roundtrip);

    // analytic vs numerical Jacobian log-det for M <= 8
    double worst_logdet = 0.0;
    const auto check_logdet = [&](FlowModel&& model, int channels, int positions, std::uint64_t seed) {
        model.randomize_parameters(seed, 0.4);
        Rng rng(seed + 1);
        ChannelTensor x(channels, positions);
        for (int c = 0; c < channels; ++c)
            for (int j = 0; j < positions; ++j) x.data(c, j) = rng.gaussian();
        const double analytic = model.forward(x).logdet;
        worst_logdet = std::max(worst_logdet, std::abs(analytic - numeric_logdet(model, x)));
    };
    check_logdet(FlowModel::coupling_stack(1, 4, 2, 6, 11), 1, 4, 600);
    check_logdet(FlowModel::coupling_stack(2, 4, 3, 6, 12), 2, 4, 601);
    check_logdet(FlowModel::coupling_stack(2, 2, 2, 8, 13), 2, 2, 602);
    REQUIRE_MSG(worst_logdet < 1e-4, "log-det deviation " << worst_logdet);

    // density normalization in M = 2
    FlowModel density = FlowModel::coupling_stack(1, 2, 2, 4, 19);
    density.randomize_parameters(77, 0.5);
    const double h = 0.01;
    const int steps = 1601;
    double integral = 0.0;
    ChannelTensor x(1, 2);
    for (int i = 0; i < steps; ++i) {
        const double wi = (i == 0 || i == steps - 1) ? 0.5 : 1.0;
        x.data(0, 0) = -8.0 + i * h;
        double row = 0.0;
        for (int j = 0; j < steps; ++j) {
            const double wj = (j == 0 || j == steps - 1) ? 0.5 : 1.0;
            x.data(0, 1) = -8.0 + j * h;
            row += wj * std::exp(density.log_prob(x));
        }
        integral += wi * row;
    }
    integral *= h * h;
    REQUIRE_MSG(std::abs(integral - 1.0) < 1e-3, "density integral " << integral);
    out << "roundtrip " << worst_roundtrip << ", logdet dev " << worst_logdet << ", integral " << integral;
}

void criterion_4(std::ostringstream& out) {
    const RealizedSystem sys = random_system(5000, 6, 4);
    FlowModel identity = FlowModel::coupling_stack(2, 6, 2, 8, 5001);  // zero-initialized couplings
    Rng rng(5002);
    const Vector y = random_vector(rng, 12);
    const double alpha = 0.35;

    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = random_vector(rng, 4);
        const double tik = 0.5 * (y - sys.rows * x).squaredNorm() + 0.5 * alpha * x.squaredNorm();
        const double obj = lda::lda_objective(identity, sys, x, y, alpha);
        worst = std::max(worst, std::abs(obj - tik) / std::max(1.0, std::abs(tik)));
    }
    REQUIRE_MSG(worst <= 1e-12, "objective mismatch " << worst);

    lda::LdaConfig cfg;
    cfg.alpha = alpha;
    cfg.step_size = 1.0;
    cfg.max_iterations = 2000;
    cfg.rk.alpha = alpha;
    cfg.rk.sweeps = 5;
    const auto rec = lda::lda_reconstruct(identity, sys, y, cfg);
    const Vector analytic = solve::tikhonov_solve(sys, y, alpha);
    const double rel = (rec.x - analytic).norm() / analytic.norm();
    REQUIRE_MSG(rel < 1e-6, "reconstruction rel err " << rel);
    out << "objective dev " << worst << ", reconstruction rel err " << rel;
}

void criterion_5(std::ostringstream& out) {
    const auto start = std::chrono::steady_clock::now();
    const int kprime = 16, n = 6;
    const RealizedSystem sys = random_system(500, kprime, n);
    // realized std pattern (0.2, 0.2, 2.0, 2.0, ...): complex stds alternate
    std::vector<double> stds(static_cast<std::size_t>(kprime));
    for (int j = 0; j < kprime; ++j) stds[static_cast<std::size_t>(j)] = (j % 2 == 0) ? 0.2 : 2.0;

    const auto bank = phantom::synth_noise(phantom::NoiseModel::diag_gaussian(stds), kprime, 20000, 501);
    std::vector<ChannelTensor> train_set;
    train_set.reserve(bank.size());
    for (const auto& s : bank) train_set.push_back(lda::realized_to_flow(op::realize_vector(s.values)));

    FlowModel model = FlowModel::coupling_stack(2, kprime, 2, 8, 502);
    flow::TrainConfig tc;
    tc.batch_size = 128;
    tc.epochs = 16;  // 140 steps per epoch -> 2240 Adam steps
    tc.learning_rate = 3e-3;
    tc.seed = 503;
    tc.validation_fraction = 0.1;
    flow::train(model, train_set, tc);

    Rng rng(504);
    Vector x_true(n);
    for (int i = 0; i < n; ++i) x_true[i] = rng.uniform(0.5, 2.0);
    Vector inv_std(2 * kprime);
    for (int j = 0; j < kprime; ++j) inv_std[2 * j] = inv_std[2 * j + 1] = 1.0 / stds[static_cast<std::size_t>(j)];

    double worst_rel = 0.0;
    for (std::uint64_t draw_seed = 5000000; draw_seed < 5000005; ++draw_seed) {
        Vector y = sys.rows * x_true;
        const auto draw = phantom::synth_noise(phantom::NoiseModel::diag_gaussian(stds), kprime, 1, draw_seed);
        y += op::realize_vector(draw[0].values);

        lda::LdaConfig cfg;
        cfg.alpha = 0.05;
        cfg.step_size = 1.0;
        cfg.max_iterations = 4000;
        cfg.rk.alpha = cfg.alpha;
        cfg.rk.sweeps = 20;
        const auto rec = lda::lda_reconstruct(model, sys, y, cfg);

        const Vector oracle = weighted_normal_oracle(sys, y, inv_std, cfg.alpha);
        const Vector plain = solve::tikhonov_solve(sys, y, cfg.alpha);
        const double lda_dist = (rec.x - oracle).norm();
        const double plain_dist = (plain - oracle).norm();
        worst_rel = std::max(worst_rel, lda_dist / oracle.norm());
        REQUIRE_MSG(lda_dist <= 0.05 * oracle.norm(),
                    "LDA " << lda_dist / oracle.norm() << " from the weighted oracle at draw " << draw_seed);
        REQUIRE_MSG(lda_dist < plain_dist, "LDA not closer than Tikhonov at draw " << draw_seed);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE_MSG(seconds < 120.0, "runtime " << seconds << "s exceeds 2min");
    out << "worst rel distance " << worst_rel << ", " << seconds << "s";
}

void criterion_6(std::ostringstream& out) {
    double worst_input = 0.0, worst_params = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        // lda_gradient against central differences
        const RealizedSystem sys = random_system(6000 + seed, 4, 6);
        FlowModel model = FlowModel::coupling_stack(2, 4, 2, 6, 6100 + seed);
        model.randomize_parameters(6200 + seed, 0.4);
        Rng rng(6300 + seed);
        const Vector x = random_vector(rng, 6);
        const Vector y = random_vector(rng, 8);
        const double alpha = 0.2;
        const Vector grad = lda::lda_gradient(model, sys, x, y, alpha);
        const double h = 1e-5;
        Vector fd(6);
        for (int i = 0; i < 6; ++i) {
            Vector xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (lda::lda_objective(model, sys, xp, y, alpha) -
                     lda::lda_objective(model, sys, xm, y, alpha)) /
                    (2 * h);
        }
        worst_input = std::max(worst_input, (grad - fd).norm() / std::max(1.0, fd.norm()));

        // grad_params against central differences on a small model
        FlowModel small = FlowModel::coupling_stack(1, 4, 2, 3, 6400 + seed);
        small.randomize_parameters(6500 + seed, 0.3);
        std::vector<ChannelTensor> batch;
        for (int i = 0; i < 3; ++i) {
            ChannelTensor t(1, 4);
            for (int j = 0; j < 4; ++j) t.data(0, j) = rng.gaussian();
            batch.push_back(std::move(t));
        }
        const Vector pgrad = small.grad_params(batch);
        Vector pfd(small.parameter_count());
        for (int i = 0; i < small.parameter_count(); ++i) {
            const double saved = small.parameters()[i];
            small.parameters()[i] = saved + h;
            const double up = small.nll(batch);
            small.parameters()[i] = saved - h;
            const double down = small.nll(batch);
            small.parameters()[i] = saved;
            pfd[i] = (up - down) / (2 * h);
        }
        worst_params = std::max(worst_params, (pgrad - pfd).norm() / std::max(1.0, pfd.norm()));
    }
    REQUIRE_MSG(worst_input < 1e-5, "lda_gradient rel err " << worst_input);
    REQUIRE_MSG(worst_params < 1e-4, "grad_params rel err " << worst_params);
    out << "lda_gradient " << worst_input << ", grad_params " << worst_params;
}

void criterion_7(std::ostringstream& out) {
    const auto start = std::chrono::steady_clock::now();
    const Grid grid{17, 15};
    const auto fwd = op::select_frequencies(op::synth_operator(700, 3, 64, grid, 0.5), Band{0, 63});
    const RealizedSystem sys = op::realize(fwd);
    const int kprime = fwd.stacked_rows();
    // correlated, heavy-tailed scanner-noise stand-in
    const auto noise_model =
        phantom::NoiseModel::ar1_mixture(0.9, {0.85, 0.15}, {0.0, 0.0}, {0.18, 0.9});

    std::vector<phantom::MeasurementTuple> unit(100);
    const auto tuple_noise = phantom::synth_noise(noise_model, kprime, 100, 50000000);
    for (int i = 0; i < 100; ++i) {
        const auto ph = phantom::preprocess_phantom(phantom::synth_image(7000 + static_cast<std::uint64_t>(i)), 1.0);
        unit[static_cast<std::size_t>(i)] =
            phantom::simulate_measurement(fwd, ph, tuple_noise[static_cast<std::size_t>(i)], 1);
    }

    const auto bank = phantom::synth_noise(noise_model, kprime, 20000, 702);
    std::vector<ChannelTensor> train_set;
    train_set.reserve(bank.size());
    for (const auto& s : bank) train_set.push_back(lda::realized_to_flow(op::realize_vector(s.values)));
    FlowModel model = FlowModel::multi_scale(kprime, {24, 16, 8}, 703);
    flow::TrainConfig tc;
    tc.batch_size = 128;
    tc.epochs = 8;
    tc.learning_rate = 2e-3;
    tc.seed = 704;
    tc.validation_fraction = 0.05;
    flow::train(model, train_set, tc);

    std::vector<Vector> realized_bank;
    realized_bank.reserve(bank.size());
    for (const auto& s : bank) realized_bank.push_back(op::realize_vector(s.values));
    const solve::WhiteningMatrix whitening = solve::whitening_from_realized(realized_bank);

    const auto reconstruct = [&](const std::string& m, const phantom::MeasurementTuple& t, double a, int iters) {
        const Vector y = op::realize_vector(t.y_delta());
        if (m == "tikhonov") return solve::tikhonov_solve(sys, y, a);
        if (m == "rk") {
            solve::SolverConfig c;
            c.alpha = a;
            c.sweeps = iters;
            return solve::kaczmarz_regularized(sys, y, c);
        }
        if (m == "wrk") {
            solve::SolverConfig c;
            c.alpha = a;
            c.sweeps = iters;
            return solve::wrk_solve(sys, y, whitening, c);
        }
        lda::LdaConfig c;
        c.alpha = a;
        c.max_iterations = iters;
        c.step_size = 1.0;
        c.rk.alpha = a;
        c.rk.sweeps = 20;
        return lda::lda_reconstruct(model, sys, y, c).x;
    };

    metrics::MetricConfig mcfg;
    const auto mean_ssim = [&](const std::string& m, const std::vector<phantom::MeasurementTuple>& tuples,
                               double a, int iters) {
        double total = 0.0;
        for (const auto& t : tuples) {
            const Vector x = reconstruct(m, t, a, iters);
            total += metrics::ssim(
                phantom::unflatten(t.x, grid, t.concentration, phantom::Resolution::coarse).pixels,
                phantom::unflatten(x, grid, t.concentration, phantom::Resolution::coarse).pixels, mcfg);
        }
        return total / static_cast<double>(tuples.size());
    };

    const std::vector<std::string> methods = {"tikhonov", "rk", "wrk", "lda"};
    std::map<std::string, std::vector<double>> curve;
    double lda_at_low = 0.0, rk_at_low = 0.0;

    const std::vector<double> concentrations = {2.0, 10.0, 50.0};
    for (double c : concentrations) {
        mcfg.data_range = c;
        std::vector<phantom::MeasurementTuple> tuples(100);
        for (int i = 0; i < 100; ++i)
            tuples[static_cast<std::size_t>(i)] = phantom::rescale_concentration(unit[static_cast<std::size_t>(i)], c);
        const std::vector<phantom::MeasurementTuple> probe_classical(tuples.begin(), tuples.begin() + 20);
        const std::vector<phantom::MeasurementTuple> probe_lda(tuples.begin(), tuples.begin() + 5);

        for (const std::string& m : methods) {
            const std::vector<double> alphas = {0.03, 0.1, 0.3, 1.0, 3.0, 10.0};
            const std::vector<int> iter_grid = m == "tikhonov" ? std::vector<int>{1}
                                               : m == "lda"    ? std::vector<int>{400}
                                                               : std::vector<int>{5, 20, 50};
            const auto& probe = m == "lda" ? probe_lda : probe_classical;
            double best_ssim = -2.0, best_alpha = alphas.front();
            int best_iters = iter_grid.front();
            for (double a : alphas)
                for (int it : iter_grid) {
                    const double s = mean_ssim(m, probe, a, it);
                    if (s > best_ssim) {
                        best_ssim = s;
                        best_alpha = a;
                        best_iters = it;
                    }
                }
            const double full = mean_ssim(m, tuples, best_alpha, best_iters);
            curve[m].push_back(full);
            if (c == concentrations.front()) {
                if (m == "lda") lda_at_low = full;
                if (m == "rk") rk_at_low = full;
            }
        }
    }

    for (const std::string& m : methods) {
        const auto& values = curve[m];
        for (std::size_t i = 0; i + 1 < values.size(); ++i)
            REQUIRE_MSG(values[i + 1] >= values[i],
                        m << " mean SSIM not non-decreasing: " << values[i] << " -> " << values[i + 1]);
    }
    REQUIRE_MSG(lda_at_low >= rk_at_low,
                "LDA " << lda_at_low << " below RK " << rk_at_low << " at the lowest concentration");

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE_MSG(seconds < 900.0, "runtime " << seconds << "s exceeds 15min");
    out << "ssim(c) ";
    for (const std::string& m : methods) {
        out << m << "=[";
        for (std::size_t i = 0; i < curve[m].size(); ++i) out << (i ? "," : "") << curve[m][i];
        out << "] ";
    }
    out << seconds << "s";
}

void criterion_8(std::ostringstream& out) {
    const Matrix img = phantom::synth_image(42);
    REQUIRE_MSG(img.rows() == 28 && img.cols() == 28, "input image is not 28x28");
    const phantom::Phantom coarse = phantom::preprocess_phantom(img, 10.0);
    REQUIRE_MSG(coarse.width() == 17 && coarse.height() == 15, "coarse phantom is not 17x15");
    REQUIRE_MSG(phantom::flatten(coarse).size() == 255, "coarse flatten is not 255");
    const phantom::Phantom fine = phantom::upsample(coarse, 5);
    REQUIRE_MSG(fine.width() == 85 && fine.height() == 75, "fine phantom is not 85x75");
    REQUIRE_MSG(phantom::flatten(fine).size() == 6375, "fine flatten is not 6375");

    const op::RawOperator raw = op::synth_operator(43, 3, 817, Grid{2, 2}, 0.0);
    const auto selected = op::select_frequencies(raw, Band{50, 813});
    REQUIRE_MSG(selected.stacked_rows() == 2292, "K' is " << selected.stacked_rows() << ", not 2292");
    out << "28x28 -> 11x11 -> 17x15 -> 85x75, N=255/6375, K'=2292";
}

void criterion_9(std::ostringstream& out) {
    const auto a1 = op::select_frequencies(op::synth_operator(59, 1, 4, Grid{5, 1}, 0.0), Band{0, 3});
    const auto a2 = op::select_frequencies(op::synth_operator(61, 1, 4, Grid{5, 1}, 0.0), Band{0, 3});
    op::ForwardOperator reference = a1;
    reference.entries = 0.3 * a1.entries + 0.7 * a2.entries;
    const auto fit = op::fit_operator_mixture({a1, a2}, reference);
    REQUIRE_MSG(std::abs(fit.weights[0] - 0.3) <= 1e-8, "weight 0 is " << fit.weights[0]);
    REQUIRE_MSG(std::abs(fit.weights[1] - 0.7) <= 1e-8, "weight 1 is " << fit.weights[1]);

    op::ForwardOperator negated = a1;
    negated.entries = -a1.entries;
    const auto adversarial = op::fit_operator_mixture({a1}, negated);
    REQUIRE_MSG(adversarial.weights[0] == 0.0, "adversarial weight is " << adversarial.weights[0]);
    out << "weights (" << fit.weights[0] << ", " << fit.weights[1] << "), adversarial weight 0";
}

// -------- criterion 10: CLI determinism ------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string(NOISEMAP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// compare every regular file of two directory trees byte for byte
void require_identical_trees(const std::filesystem::path& a, const std::filesystem::path& b,
                             const std::string& what) {
    std::vector<std::filesystem::path> rel;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a))
        if (entry.is_regular_file()) rel.push_back(std::filesystem::relative(entry.path(), a));
    REQUIRE_MSG(!rel.empty(), what << ": no files produced");
    std::size_t checked = 0;
    for (const auto& r : rel) {
        REQUIRE_MSG(std::filesystem::exists(b / r), what << ": second run lacks " << r.string());
        REQUIRE_MSG(slurp(a / r) == slurp(b / r), what << ": file " << r.string() << " differs between runs");
        ++checked;
    }
    std::size_t count_b = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(b))
        if (entry.is_regular_file()) ++count_b;
    REQUIRE_MSG(count_b == checked, what << ": file counts differ");
}

void criterion_10(std::ostringstream& out) {
    const auto base = std::filesystem::temp_directory_path() / "noisemap_acceptance_cli";
    std::filesystem::remove_all(base);
    std::filesystem::create_directories(base);
    const std::string root = base.string();

    const std::string synth_args =
        " --seed 11 --count 6 --concentration 2,10 --frequencies 24 --band-lo 4 --band-hi 19 --upsample 3"
        " --bank-count 300 --noise-model ar1_mixture --noise-rho 0.8";
    for (int run = 1; run <= 2; ++run) {
        const std::string dir = root + "/data" + std::to_string(run);
        REQUIRE_MSG(run_cli("synth-data --out " + dir + synth_args) == 0, "synth-data failed");
    }
    require_identical_trees(root + "/data1", root + "/data2", "synth-data");

    for (int run = 1; run <= 2; ++run) {
        const std::string dir = root + "/ckpt" + std::to_string(run);
        REQUIRE_MSG(run_cli("train-flow --data " + root + "/data1 --out " + dir +
                            " --arch multi-scale --widths 12,8,8 --epochs 2 --batch-size 64 --lr 2e-3 --seed 5") == 0,
                    "train-flow failed");
    }
    require_identical_trees(root + "/ckpt1", root + "/ckpt2", "train-flow");

    for (int run = 1; run <= 2; ++run) {
        REQUIRE_MSG(run_cli("reconstruct --data " + root + "/data1 --out " + root + "/rk" + std::to_string(run) +
                            " --method rk --alpha 0.1 --iterations 10") == 0,
                    "reconstruct rk failed");
        REQUIRE_MSG(run_cli("reconstruct --data " + root + "/data1 --out " + root + "/lda" + std::to_string(run) +
                            " --method lda --alpha 0.1 --iterations 40 --checkpoint " + root + "/ckpt1") == 0,
                    "reconstruct lda failed");
    }
    // timing arrays legitimately differ between runs; compare the payloads
    for (const std::string method : {"rk", "lda"}) {
        for (const std::string prefix : {"c2", "c10"}) {
            const io::Container run1 = io::Container::open(root + "/" + method + "1");
            const io::Container run2 = io::Container::open(root + "/" + method + "2");
            const auto file1 = run1.array_info(prefix + "/recon").file;
            const auto file2 = run2.array_info(prefix + "/recon").file;
            REQUIRE_MSG(slurp(root + "/" + method + "1/" + file1) == slurp(root + "/" + method + "2/" + file2),
                        method << " " << prefix << " payload differs between runs");
        }
    }

    for (int run = 1; run <= 2; ++run) {
        REQUIRE_MSG(run_cli("evaluate --recon " + root + "/rk1 --data " + root + "/data1 --out " + root + "/eval" +
                            std::to_string(run)) == 0,
                    "evaluate failed");
        REQUIRE_MSG(run_cli("grid-search --data " + root + "/data1 --method rk --alphas 0.03,0.3,3"
                            " --iterations 5,10 --subset 4 --out " +
                            root + "/gs" + std::to_string(run)) == 0,
                    "grid-search failed");
        REQUIRE_MSG(run_cli("render --in " + root + "/data1 --array phantom_images --out " + root + "/render" +
                            std::to_string(run)) == 0,
                    "render failed");
    }
    // evaluate reports embed timing values read from the reconstruction
    // container, which is fixed here, so whole trees must match
    require_identical_trees(root + "/eval1", root + "/eval2", "evaluate");
    require_identical_trees(root + "/gs1", root + "/gs2", "grid-search");
    require_identical_trees(root + "/render1", root + "/render2", "render");

    std::filesystem::remove_all(base);
    out << "synth-data, train-flow, reconstruct, evaluate, grid-search, render reproduce byte-identically";
}

}  // namespace

int main() {
    Checker checker;
    checker.run(1, "regularized Kaczmarz reaches the analytic Tikhonov minimizer", criterion_1);
    checker.run(2, "whitened RK with identity weights reduces to RK bitwise", criterion_2);
    checker.run(3, "flow invertibility, log-det exactness, density normalization", criterion_3);
    checker.run(4, "identity-initialized LDA reduces to Tikhonov", criterion_4);
    checker.run(5, "trained LDA matches the generalized Tikhonov oracle", criterion_5);
    checker.run(6, "input and parameter gradients match finite differences", criterion_6);
    checker.run(7, "mini-benchmark SSIM trends across concentrations", criterion_7);
    checker.run(8, "pipeline shape chain and stacked frequency count", criterion_8);
    checker.run(9, "operator mixture fit recovers weights under nonnegativity", criterion_9);
    checker.run(10, "CLI commands reproduce byte-identical payloads", criterion_10);

    if (!checker.all_passed) {
        std::printf("acceptance: FAILURES PRESENT\n");
        return 1;
    }
    std::printf("acceptance: all criteria passed\n");
    return 0;
}
