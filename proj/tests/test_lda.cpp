#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "noisemap/lda.hpp"
#include "noisemap/rng.hpp"

using namespace noisemap;
using flow::ChannelTensor;
using flow::FlowModel;
using lda::LdaConfig;
using op::Band;
using op::Grid;
using op::Matrix;
using op::RealizedSystem;
using op::Vector;

namespace {

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

// two couplings whose constant scale whitens per-position stds; requires
// 1/sigma inside the tanh range
FlowModel constant_scaling_flow(int kprime, const Vector& position_sigmas, int seed) {
    FlowModel model = FlowModel::coupling_stack(2, kprime, 2, 4, seed);
    Vector s_odd(kprime / 2), s_even((kprime + 1) / 2);
    int odd = 0, even = 0;
    for (int j = 0; j < kprime; ++j) {
        const double s = -std::log(position_sigmas[j]);
        if (j % 2 == 1)
            s_odd[odd++] = s;
        else
            s_even[even++] = s;
    }
    model.set_coupling_constants(0, s_odd, Vector::Zero(s_odd.size()));
    model.set_coupling_constants(1, s_even, Vector::Zero(s_even.size()));
    return model;
}

}  // namespace

TEST_CASE("realized/flow reshape round trip") {
    Rng rng(1);
    const Vector v = random_vector(rng, 12);
    const ChannelTensor t = lda::realized_to_flow(v);
    REQUIRE(t.channels() == 2);
    REQUIRE(t.positions() == 6);
    for (int j = 0; j < 6; ++j) {
        CHECK(t.data(0, j) == v[2 * j]);
        CHECK(t.data(1, j) == v[2 * j + 1]);
    }
    CHECK(lda::flow_to_realized(t) == v);
    CHECK_THROWS_AS(lda::realized_to_flow(Vector::Zero(5)), std::invalid_argument);
}

TEST_CASE("identity-flow discrepancy is the Gaussian data fit") {
    const RealizedSystem sys = random_system(2, 4, 3);  // K' = 4, rows 8
    FlowModel model = FlowModel::coupling_stack(2, 4, 2, 6, 3);
    Rng rng(4);
    const Vector x = random_vector(rng, 3);
    const Vector y = random_vector(rng, 8);

    const double want = 0.5 * (y - sys.rows * x).squaredNorm();
    CHECK(lda::lda_discrepancy(model, sys, x, y) == doctest::Approx(want).epsilon(1e-12));

    // a consistent right-hand side gives zero discrepancy
    const Vector y_fit = sys.rows * x;
    CHECK(lda::lda_discrepancy(model, sys, x, y_fit) == 0.0);
}

TEST_CASE("constant-scaling flow realizes the weighted Gaussian discrepancy") {
    const int kprime = 4;
    const RealizedSystem sys = random_system(5, kprime, 3);
    Vector sigmas(kprime);
    sigmas << 0.7, 1.8, 1.2, 0.5;  // all 1/sigma inside (1/e, e)
    FlowModel model = constant_scaling_flow(kprime, sigmas, 6);

    Rng rng(7);
    const Vector x = random_vector(rng, 3);
    const Vector y = random_vector(rng, 2 * kprime);
    const Vector r = y - sys.rows * x;

    // effective constants after the tanh(atanh(.)) round trip
    double weighted = 0.0, logdet = 0.0;
    for (int j = 0; j < kprime; ++j) {
        const double s = std::tanh(std::atanh(-std::log(sigmas[j])));
        const double scale = std::exp(s);
        weighted += 0.5 * scale * scale * (r[2 * j] * r[2 * j] + r[2 * j + 1] * r[2 * j + 1]);
        logdet += 2.0 * s;  // both channels
    }
    CHECK(lda::lda_discrepancy(model, sys, x, y) == doctest::Approx(weighted - logdet).epsilon(1e-12));
}

TEST_CASE("objective composition and edge cases") {
    const RealizedSystem sys = random_system(8, 4, 3);
    FlowModel model = FlowModel::coupling_stack(2, 4, 2, 6, 9);
    model.randomize_parameters(10, 0.4);
    Rng rng(11);
    const Vector x = random_vector(rng, 3);
    const Vector y = random_vector(rng, 8);

    CHECK(lda::lda_objective(model, sys, x, y, 0.0) == lda::lda_discrepancy(model, sys, x, y));
    const double alpha = 0.8;
    CHECK(lda::lda_objective(model, sys, x, y, alpha) ==
          doctest::Approx(lda::lda_discrepancy(model, sys, x, y) + 0.5 * alpha * x.squaredNorm())
              .epsilon(1e-14));

    FlowModel identity = FlowModel::coupling_stack(2, 4, 2, 6, 12);
    CHECK(lda::lda_objective(identity, sys, Vector::Zero(3), y, 1.0) ==
          doctest::Approx(0.5 * y.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("identity-flow objective equals the Tikhonov objective everywhere") {
    const RealizedSystem sys = random_system(13, 5, 4);
    FlowModel model = FlowModel::coupling_stack(2, 5, 2, 6, 14);
    Rng rng(15);
    const Vector y = random_vector(rng, 10);
    const double alpha = 0.3;
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = random_vector(rng, 4);
        const double tik = 0.5 * (y - sys.rows * x).squaredNorm() + 0.5 * alpha * x.squaredNorm();
        CHECK(lda::lda_objective(model, sys, x, y, alpha) == doctest::Approx(tik).epsilon(1e-12));
    }
}

TEST_CASE("identity-flow gradient is the quadratic gradient") {
    const RealizedSystem sys = random_system(16, 4, 3);
    FlowModel model = FlowModel::coupling_stack(2, 4, 2, 6, 17);
    Rng rng(18);
    const Vector x = random_vector(rng, 3);
    const Vector y = random_vector(rng, 8);
    const double alpha = 0.45;
    const Vector want = -(sys.rows.transpose() * (y - sys.rows * x)) + alpha * x;
    const Vector got = lda::lda_gradient(model, sys, x, y, alpha);
    CHECK((got - want).norm() <= 1e-12 * std::max(1.0, want.norm()));
}

TEST_CASE("lda gradient matches central finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RealizedSystem sys = random_system(20 + seed, 4, 6);  // 6-pixel problem
        FlowModel model = FlowModel::coupling_stack(2, 4, 2, 6, 30 + seed);
        model.randomize_parameters(40 + seed, 0.4);
        Rng rng(50 + seed);
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
            fd[i] = (lda::lda_objective(model, sys, xp, y, alpha) - lda::lda_objective(model, sys, xm, y, alpha)) /
                    (2 * h);
        }
        CHECK((grad - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
}

TEST_CASE("gradient vanishes at the identity-flow minimizer") {
    const RealizedSystem sys = random_system(60, 5, 4);
    FlowModel model = FlowModel::coupling_stack(2, 5, 2, 6, 61);
    Rng rng(62);
    const Vector y = random_vector(rng, 10);
    const double alpha = 0.5;
    const Vector x_star = solve::tikhonov_solve(sys, y, alpha);
    CHECK(lda::lda_gradient(model, sys, x_star, y, alpha).norm() < 1e-8);
}

TEST_CASE("identity-flow reconstruction converges to the Tikhonov solution") {
    const RealizedSystem sys = random_system(63, 6, 4);
    FlowModel model = FlowModel::coupling_stack(2, 6, 2, 6, 64);
    Rng rng(65);
    const Vector y = random_vector(rng, 12);

    LdaConfig cfg;
    cfg.alpha = 0.4;
    cfg.step_size = 1.0;
    cfg.max_iterations = 2000;
    cfg.rk.alpha = cfg.alpha;
    cfg.rk.sweeps = 5;
    const auto result = lda::lda_reconstruct(model, sys, y, cfg);
    const Vector analytic = solve::tikhonov_solve(sys, y, cfg.alpha);
    CHECK((result.x - analytic).norm() <= 1e-6 * analytic.norm());

    // descent property with backtracking enabled
    for (std::size_t i = 0; i + 1 < result.objective_trace.size(); ++i)
        CHECK(result.objective_trace[i + 1] <= result.objective_trace[i]);
}

TEST_CASE("zero and rk initializations agree on the convex problem") {
    const RealizedSystem sys = random_system(66, 6, 4);
    FlowModel model = FlowModel::coupling_stack(2, 6, 2, 6, 67);
    Rng rng(68);
    const Vector y = random_vector(rng, 12);

    LdaConfig cfg;
    cfg.alpha = 0.3;
    cfg.step_size = 1.0;
    cfg.max_iterations = 4000;
    cfg.rk.alpha = cfg.alpha;
    cfg.rk.sweeps = 10;
    const auto from_rk = lda::lda_reconstruct(model, sys, y, cfg);
    cfg.init = LdaConfig::Init::zero;
    const auto from_zero = lda::lda_reconstruct(model, sys, y, cfg);
    CHECK((from_rk.x - from_zero.x).norm() <= 1e-6 * std::max(1.0, from_rk.x.norm()));
}

TEST_CASE("a flow trained on diagonal noise reproduces weighted Tikhonov") {
    const int kprime = 12;
    const int n = 4;
    const RealizedSystem sys = random_system(70, kprime, n);

    // per-complex-component stds, all whitenable within the tanh range
    Vector sigmas(kprime);
    sigmas << 0.5, 2.0, 0.8, 1.5, 0.6, 1.8, 1.0, 0.7, 1.3, 0.9, 0.55, 1.9;
    std::vector<double> sig_list(sigmas.data(), sigmas.data() + kprime);
    const auto bank = phantom::synth_noise(phantom::NoiseModel::diag_gaussian(sig_list), kprime, 20000, 71);
    std::vector<ChannelTensor> train_set;
    train_set.reserve(bank.size());
    for (const auto& s : bank) train_set.push_back(lda::realized_to_flow(op::realize_vector(s.values)));

    FlowModel model = FlowModel::coupling_stack(2, kprime, 2, 8, 72);
    flow::TrainConfig tc;
    tc.batch_size = 128;
    tc.epochs = 15;  // ~2100 Adam steps
    tc.learning_rate = 3e-3;
    tc.seed = 73;
    tc.validation_fraction = 0.1;
    flow::train(model, train_set, tc);

    // measurement of a known image under that noise
    Rng rng(74);
    Vector x_true(n);
    for (int i = 0; i < n; ++i) x_true[i] = rng.uniform(0.0, 2.0);
    Vector y = sys.rows * x_true;
    const auto draw = phantom::synth_noise(phantom::NoiseModel::diag_gaussian(sig_list), kprime, 1, 5000000);
    y += op::realize_vector(draw[0].values);

    LdaConfig cfg;
    cfg.alpha = 0.05;
    cfg.step_size = 1.0;
    cfg.max_iterations = 4000;
    cfg.rk.alpha = cfg.alpha;
    cfg.rk.sweeps = 20;
    const auto result = lda::lda_reconstruct(model, sys, y, cfg);

    // realized per-component variances pair up (re, im) per complex component
    Vector inv_std(2 * kprime);
    for (int j = 0; j < kprime; ++j) inv_std[2 * j] = inv_std[2 * j + 1] = 1.0 / sigmas[j];
    const Vector oracle = weighted_normal_oracle(sys, y, inv_std, cfg.alpha);
    CHECK((result.x - oracle).norm() <= 0.05 * oracle.norm());
}

TEST_CASE("reconstruction contract checks") {
    const RealizedSystem sys = random_system(80, 4, 3);
    FlowModel model = FlowModel::coupling_stack(2, 4, 2, 6, 81);
    Rng rng(82);
    const Vector y = random_vector(rng, 8);

    LdaConfig cfg;
    cfg.max_iterations = 0;
    CHECK_THROWS_AS(lda::lda_reconstruct(model, sys, y, cfg), std::invalid_argument);

    cfg.max_iterations = 1;
    cfg.rk.sweeps = 3;
    const auto one = lda::lda_reconstruct(model, sys, y, cfg);
    CHECK(one.iterations == 1);
    CHECK(one.objective_trace.size() == 2);
    const Vector rk_init = solve::kaczmarz_regularized(sys, y, cfg.rk);
    CHECK((one.x - rk_init).norm() > 0.0);

    cfg.init = LdaConfig::Init::given;
    cfg.init_value = Vector::Zero(2);
    CHECK_THROWS_AS(lda::lda_reconstruct(model, sys, y, cfg), std::invalid_argument);

    FlowModel wrong_shape = FlowModel::coupling_stack(2, 6, 2, 6, 83);
    cfg.init = LdaConfig::Init::zero;
    CHECK_THROWS_AS(lda::lda_reconstruct(wrong_shape, sys, y, cfg), std::invalid_argument);
}
