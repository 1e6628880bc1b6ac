#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "noisemap/common.hpp"

namespace noisemap::flow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Real tensor of shape [channels, positions].
struct ChannelTensor {
    Matrix data;  // channels rows x positions cols

    ChannelTensor() = default;
    ChannelTensor(int channels, int positions) : data(Matrix::Zero(channels, positions)) {}
    explicit ChannelTensor(Matrix m) : data(std::move(m)) {}

    int channels() const { return static_cast<int>(data.rows()); }
    int positions() const { return static_cast<int>(data.cols()); }
    int size() const { return static_cast<int>(data.size()); }
};

/// Layer descriptor; the model is an ordered list of these. Split stashes the
/// lower channel half while the upper half continues, Concat pops the stash
/// and re-appends it below the current channels.
struct LayerSpec {
    enum class Kind { coupling, squeeze, unsqueeze, split, concat };

    Kind kind = Kind::coupling;
    bool transform_odd = true;  // coupling only: odd positions transformed, even condition
    int width = 0;              // coupling only: hidden width of the s and t networks

    static LayerSpec coupling(bool transform_odd, int width) { return {Kind::coupling, transform_odd, width}; }
    static LayerSpec squeeze() { return {Kind::squeeze, false, 0}; }
    static LayerSpec unsqueeze() { return {Kind::unsqueeze, false, 0}; }
    static LayerSpec split() { return {Kind::split, false, 0}; }
    static LayerSpec concat() { return {Kind::concat, false, 0}; }
};

struct TrainConfig {
    int batch_size = 256;
    int epochs = 25;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double validation_fraction = 0.1;
};

struct EpochStats {
    double train_nll = 0.0;
    double validation_nll = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
};

/// Raised when the training loss leaves the finite range; carries the part of
/// the loss history that was still finite.
class training_error : public numerical_error {
public:
    training_error(const std::string& what, TrainResult partial)
        : numerical_error(what), partial_result(std::move(partial)) {}

    TrainResult partial_result;
};

struct ForwardResult {
    ChannelTensor output;
    double logdet = 0.0;
};

struct InputGradients {
    ChannelTensor latent_half_sq;  // gradient of 0.5 * ||phi(x)||^2 w.r.t. x
    ChannelTensor logdet;          // gradient of the log-determinant w.r.t. x
};

/// Invertible multi-scale normalizing flow built from affine coupling layers
/// and shape-transforming layers, with exact log-determinant and manual
/// reverse-mode gradients for inputs and parameters.
///
/// Each coupling applies, per channel, the map
///   y_j = x_j                                   for conditioning positions,
///   y_j = x_j * exp(s(x_cond)) + t(x_cond)      for transformed positions,
/// where s and t are 7-block fully connected networks (6x FC+LayerNorm+ReLU,
/// final FC+tanh) shared across channels. Final affine blocks start at zero,
/// so a freshly built model is the exact standard Gaussian density.
class FlowModel {
public:
    FlowModel(int channels, int positions, std::vector<LayerSpec> layout, std::uint64_t seed);

    /// Standard wiring: 2 couplings, squeeze, 2 couplings, split, then the
    /// continuing half passes squeeze + 4 couplings before recombination.
    /// Positions must be a multiple of 4 and at least 8. Default widths are
    /// the full-scale (512, 256, 128) configuration; tests use smaller ones.
    static FlowModel multi_scale(int positions, const std::array<int, 3>& widths = {512, 256, 128},
                                 std::uint64_t seed = 0);

    /// Plain stack of couplings with alternating index sets on [channels, positions].
    static FlowModel coupling_stack(int channels, int positions, int couplings, int width, std::uint64_t seed);

    ForwardResult forward(const ChannelTensor& input) const;
    ChannelTensor inverse(const ChannelTensor& output) const;

    /// log p(x) under the model with a standard normal latent.
    double log_prob(const ChannelTensor& input) const;

    /// Mean negative log-likelihood over a nonempty batch.
    double nll(std::span<const ChannelTensor> batch) const;

    /// nll(batch) and its parameter gradient in one pass.
    double nll_with_grad(std::span<const ChannelTensor> batch, Vector& grad) const;

    /// Gradients of the two terms of -log p (up to the constant) w.r.t. the input.
    InputGradients grad_input(const ChannelTensor& input) const;

    /// Gradient of nll(batch) w.r.t. the parameter vector.
    Vector grad_params(std::span<const ChannelTensor> batch) const;

    int input_channels() const { return channels_; }
    int input_positions() const { return positions_; }
    int parameter_count() const { return static_cast<int>(params_.size()); }
    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }
    const std::vector<LayerSpec>& layout() const { return layout_; }

    /// Overwrite all parameters with scale * N(0,1) draws (layer-norm gains
    /// centered at 1). Used to probe invertibility away from the identity.
    void randomize_parameters(std::uint64_t seed, double scale);

    /// Turn coupling number `coupling_index` (in layout order) into the map
    /// x -> x * exp(s_value[i]) + t_value[i] with constant networks; values
    /// must lie inside the tanh range (-1, 1).
    void set_coupling_constants(int coupling_index, const Vector& s_values, const Vector& t_values);

private:
    struct AffineView {
        int in = 0;
        int out = 0;
        Eigen::Index weights = 0;  // offset into params_, row-major out x in
        Eigen::Index bias = 0;
    };
    struct NormView {
        int dim = 0;
        Eigen::Index gamma = 0;
        Eigen::Index beta = 0;
    };
    struct CouplingNet {
        int in_dim = 0;
        int out_dim = 0;
        int width = 0;
        std::array<AffineView, 7> affine;
        std::array<NormView, 6> norm;
    };
    struct Coupling {
        bool transform_odd = true;
        int positions = 0;
        CouplingNet scale_net;
        CouplingNet shift_net;
    };
    struct Shape {
        int channels = 0;
        int positions = 0;
    };
    struct LayerTrace {
        Shape in;
        Shape out;
        int stash_channels = 0;  // split: channels pushed; concat: channels popped
    };

    struct NetTape;
    struct CouplingTape;
    struct Tape;

    CouplingNet allocate_net(int in_dim, int out_dim, int width);
    AffineView allocate_affine(int in, int out);
    NormView allocate_norm(int dim);
    void initialize_parameters(std::uint64_t seed);

    Vector net_eval(const CouplingNet& net, const Vector& input, NetTape* tape) const;
    Vector net_backward(const CouplingNet& net, const NetTape& tape, const Vector& out_bar,
                        Vector* param_grad) const;

    ChannelTensor run_forward(const ChannelTensor& input, double& logdet, Tape* tape) const;
    ChannelTensor run_backward(const Tape& tape, ChannelTensor out_bar, double logdet_bar,
                               Vector* param_grad) const;
    double nll_term(const ChannelTensor& input, double cotangent_scale, Vector* param_grad) const;

    int channels_ = 0;
    int positions_ = 0;
    std::vector<LayerSpec> layout_;
    std::vector<Coupling> couplings_;   // one entry per coupling layer, in layout order
    std::vector<LayerTrace> trace_;     // one entry per layout entry
    Vector params_;
    Eigen::Index alloc_cursor_ = 0;     // used only while building parameter views
};

/// Maximum-likelihood training with Adam; deterministic for a fixed config.
/// The model is updated in place and the per-epoch train/validation NLL is
/// returned. Throws training_error if the loss leaves the finite range.
TrainResult train(FlowModel& model, const std::vector<ChannelTensor>& samples, const TrainConfig& cfg);

}  // namespace noisemap::flow
