#include "noisemap/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "noisemap/rng.hpp"

namespace noisemap::flow {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeightMap = Eigen::Map<const RowMajorMatrix>;
using WeightMap = Eigen::Map<RowMajorMatrix>;
using ConstVectorMap = Eigen::Map<const Vector>;
using VectorMap = Eigen::Map<Vector>;

// conditioning positions first, transformed positions second
void partition_positions(int positions, bool transform_odd, std::vector<int>& pass, std::vector<int>& trans) {
    pass.clear();
    trans.clear();
    for (int j = 0; j < positions; ++j) {
        const bool odd = (j % 2) == 1;
        (odd == transform_odd ? trans : pass).push_back(j);
    }
}

}  // namespace

struct FlowModel::NetTape {
    Vector input;
    std::array<Vector, 6> xhat;
    std::array<double, 6> inv_std;
    std::array<Vector, 6> relu;
    Vector out;
};

struct FlowModel::CouplingTape {
    std::vector<Vector> trans_vals;  // untransformed values per channel
    std::vector<Vector> s;           // scale-net outputs per channel
    std::vector<NetTape> s_tape;
    std::vector<NetTape> t_tape;
};

struct FlowModel::Tape {
    std::vector<CouplingTape> couplings;
};

FlowModel::AffineView FlowModel::allocate_affine(int in, int out) {
    AffineView v;
    v.in = in;
    v.out = out;
    v.weights = alloc_cursor_;
    alloc_cursor_ += static_cast<Eigen::Index>(in) * out;
    v.bias = alloc_cursor_;
    alloc_cursor_ += out;
    return v;
}

FlowModel::NormView FlowModel::allocate_norm(int dim) {
    NormView v;
    v.dim = dim;
    v.gamma = alloc_cursor_;
    alloc_cursor_ += dim;
    v.beta = alloc_cursor_;
    alloc_cursor_ += dim;
    return v;
}

FlowModel::CouplingNet FlowModel::allocate_net(int in_dim, int out_dim, int width) {
    CouplingNet net;
    net.in_dim = in_dim;
    net.out_dim = out_dim;
    net.width = width;
    net.affine[0] = allocate_affine(in_dim, width);
    net.norm[0] = allocate_norm(width);
    for (int b = 1; b < 6; ++b) {
        net.affine[b] = allocate_affine(width, width);
        net.norm[b] = allocate_norm(width);
    }
    net.affine[6] = allocate_affine(width, out_dim);
    return net;
}

FlowModel::FlowModel(int channels, int positions, std::vector<LayerSpec> layout, std::uint64_t seed)
    : channels_(channels), positions_(positions), layout_(std::move(layout)) {
    if (channels < 1 || positions < 1) throw std::invalid_argument("FlowModel: input shape must be positive");
    if (layout_.empty()) throw std::invalid_argument("FlowModel: empty layout");

    Shape cur{channels, positions};
    std::vector<Shape> stash;
    trace_.reserve(layout_.size());
    for (const LayerSpec& spec : layout_) {
        LayerTrace t;
        t.in = cur;
        switch (spec.kind) {
            case LayerSpec::Kind::coupling: {
                if (spec.width < 1) throw std::invalid_argument("FlowModel: coupling width must be >= 1");
                std::vector<int> pass, trans;
                partition_positions(cur.positions, spec.transform_odd, pass, trans);
                Coupling c;
                c.transform_odd = spec.transform_odd;
                c.positions = cur.positions;
                c.scale_net = allocate_net(static_cast<int>(pass.size()), static_cast<int>(trans.size()), spec.width);
                c.shift_net = allocate_net(static_cast<int>(pass.size()), static_cast<int>(trans.size()), spec.width);
                couplings_.push_back(c);
                t.out = cur;
                break;
            }
            case LayerSpec::Kind::squeeze:
                if (cur.positions % 2 != 0)
                    throw std::invalid_argument("FlowModel: squeeze needs an even position count");
                cur = Shape{2 * cur.channels, cur.positions / 2};
                t.out = cur;
                break;
            case LayerSpec::Kind::unsqueeze:
                if (cur.channels % 2 != 0)
                    throw std::invalid_argument("FlowModel: unsqueeze needs an even channel count");
                cur = Shape{cur.channels / 2, 2 * cur.positions};
                t.out = cur;
                break;
            case LayerSpec::Kind::split:
                if (cur.channels % 2 != 0)
                    throw std::invalid_argument("FlowModel: split needs an even channel count");
                stash.push_back(Shape{cur.channels / 2, cur.positions});
                cur = Shape{cur.channels / 2, cur.positions};
                t.out = cur;
                t.stash_channels = cur.channels;
                break;
            case LayerSpec::Kind::concat: {
                if (stash.empty()) throw std::invalid_argument("FlowModel: concat without a stashed split half");
                const Shape bottom = stash.back();
                stash.pop_back();
                if (bottom.positions != cur.positions)
                    throw std::invalid_argument("FlowModel: concat position counts differ");
                t.stash_channels = bottom.channels;
                cur = Shape{cur.channels + bottom.channels, cur.positions};
                t.out = cur;
                break;
            }
        }
        trace_.push_back(t);
    }
    if (!stash.empty()) throw std::invalid_argument("FlowModel: split without matching concat");

    params_ = Vector::Zero(alloc_cursor_);
    initialize_parameters(seed);
}

void FlowModel::initialize_parameters(std::uint64_t seed) {
    Rng rng(seed);
    for (const Coupling& c : couplings_) {
        for (const CouplingNet* net : {&c.scale_net, &c.shift_net}) {
            for (int b = 0; b < 6; ++b) {
                const AffineView& a = net->affine[b];
                const double scale = std::sqrt(2.0 / std::max(1, a.in));
                for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(a.in) * a.out; ++i)
                    params_[a.weights + i] = scale * rng.gaussian();
                params_.segment(a.bias, a.out).setZero();
                const NormView& n = net->norm[b];
                params_.segment(n.gamma, n.dim).setOnes();
                params_.segment(n.beta, n.dim).setZero();
            }
            // zero final affine: the fresh model is the exact Gaussian density
            const AffineView& last = net->affine[6];
            params_.segment(last.weights, static_cast<Eigen::Index>(last.in) * last.out).setZero();
            params_.segment(last.bias, last.out).setZero();
        }
    }
}

FlowModel FlowModel::multi_scale(int positions, const std::array<int, 3>& widths, std::uint64_t seed) {
    if (positions < 8 || positions % 4 != 0)
        throw std::invalid_argument("multi_scale: positions must be a multiple of 4 and at least 8");
    std::vector<LayerSpec> layout = {
        LayerSpec::coupling(true, widths[0]),  LayerSpec::coupling(false, widths[0]),
        LayerSpec::squeeze(),
        LayerSpec::coupling(true, widths[1]),  LayerSpec::coupling(false, widths[1]),
        LayerSpec::split(),
        LayerSpec::squeeze(),
        LayerSpec::coupling(true, widths[2]),  LayerSpec::coupling(false, widths[2]),
        LayerSpec::coupling(true, widths[2]),  LayerSpec::coupling(false, widths[2]),
        LayerSpec::unsqueeze(),
        LayerSpec::concat(),
        LayerSpec::unsqueeze(),
    };
    return FlowModel(2, positions, std::move(layout), seed);
}

FlowModel FlowModel::coupling_stack(int channels, int positions, int couplings, int width, std::uint64_t seed) {
    if (couplings < 1) throw std::invalid_argument("coupling_stack: need at least one coupling");
    std::vector<LayerSpec> layout;
    layout.reserve(static_cast<std::size_t>(couplings));
    for (int i = 0; i < couplings; ++i) layout.push_back(LayerSpec::coupling(i % 2 == 0, width));
    return FlowModel(channels, positions, std::move(layout), seed);
}

Vector FlowModel::net_eval(const CouplingNet& net, const Vector& input, NetTape* tape) const {
    if (tape) tape->input = input;
    Vector h = input;
    for (int b = 0; b < 6; ++b) {
        const AffineView& a = net.affine[b];
        ConstWeightMap w(params_.data() + a.weights, a.out, a.in);
        ConstVectorMap bias(params_.data() + a.bias, a.out);
        Vector z = w * h + bias;

        const NormView& n = net.norm[b];
        ConstVectorMap gamma(params_.data() + n.gamma, n.dim);
        ConstVectorMap beta(params_.data() + n.beta, n.dim);
        const double mean = z.mean();
        const double var = (z.array() - mean).square().sum() / n.dim;
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        Vector xhat = (z.array() - mean).matrix() * inv_std;
        Vector activated = (gamma.cwiseProduct(xhat) + beta).cwiseMax(0.0);
        if (tape) {
            tape->xhat[b] = xhat;
            tape->inv_std[b] = inv_std;
            tape->relu[b] = activated;
        }
        h = std::move(activated);
    }
    const AffineView& last = net.affine[6];
    ConstWeightMap w(params_.data() + last.weights, last.out, last.in);
    ConstVectorMap bias(params_.data() + last.bias, last.out);
    Vector out = (w * h + bias).array().tanh().matrix();
    if (tape) tape->out = out;
    return out;
}

Vector FlowModel::net_backward(const CouplingNet& net, const NetTape& tape, const Vector& out_bar,
                               Vector* param_grad) const {
    const AffineView& last = net.affine[6];
    ConstWeightMap w_last(params_.data() + last.weights, last.out, last.in);
    Vector dz = out_bar.cwiseProduct((1.0 - tape.out.array().square()).matrix());
    const Vector& h5 = tape.relu[5];
    if (param_grad) {
        WeightMap gw(param_grad->data() + last.weights, last.out, last.in);
        gw.noalias() += dz * h5.transpose();
        VectorMap gb(param_grad->data() + last.bias, last.out);
        gb += dz;
    }
    Vector dh = w_last.transpose() * dz;

    for (int b = 5; b >= 0; --b) {
        const NormView& n = net.norm[b];
        ConstVectorMap gamma(params_.data() + n.gamma, n.dim);
        // through ReLU
        Vector dy = (tape.relu[b].array() > 0.0).select(dh, Vector::Zero(n.dim));
        if (param_grad) {
            VectorMap ggamma(param_grad->data() + n.gamma, n.dim);
            ggamma += dy.cwiseProduct(tape.xhat[b]);
            VectorMap gbeta(param_grad->data() + n.beta, n.dim);
            gbeta += dy;
        }
        // through layer norm
        Vector dxhat = dy.cwiseProduct(gamma);
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(tape.xhat[b]).mean();
        Vector dz1 = tape.inv_std[b] * (dxhat.array() - m1 - tape.xhat[b].array() * m2).matrix();
        // through the affine block
        const AffineView& a = net.affine[b];
        const Vector& block_in = b == 0 ? tape.input : tape.relu[b - 1];
        if (param_grad) {
            WeightMap gw(param_grad->data() + a.weights, a.out, a.in);
            gw.noalias() += dz1 * block_in.transpose();
            VectorMap gb(param_grad->data() + a.bias, a.out);
            gb += dz1;
        }
        ConstWeightMap w(params_.data() + a.weights, a.out, a.in);
        dh = w.transpose() * dz1;
    }
    return dh;
}

ChannelTensor FlowModel::run_forward(const ChannelTensor& input, double& logdet, Tape* tape) const {
    if (input.channels() != channels_ || input.positions() != positions_)
        throw std::invalid_argument("FlowModel: input shape does not match the model");

    Matrix cur = input.data;
    std::vector<Matrix> stash;
    logdet = 0.0;
    std::size_t coupling_idx = 0;

    for (std::size_t li = 0; li < layout_.size(); ++li) {
        const LayerSpec& spec = layout_[li];
        const LayerTrace& tr = trace_[li];
        switch (spec.kind) {
            case LayerSpec::Kind::coupling: {
                const Coupling& c = couplings_[coupling_idx++];
                std::vector<int> pass, trans;
                partition_positions(tr.in.positions, c.transform_odd, pass, trans);
                CouplingTape* ct = nullptr;
                if (tape) {
                    tape->couplings.emplace_back();
                    ct = &tape->couplings.back();
                    ct->trans_vals.resize(static_cast<std::size_t>(tr.in.channels));
                    ct->s.resize(static_cast<std::size_t>(tr.in.channels));
                    ct->s_tape.resize(static_cast<std::size_t>(tr.in.channels));
                    ct->t_tape.resize(static_cast<std::size_t>(tr.in.channels));
                }
                for (int ch = 0; ch < tr.in.channels; ++ch) {
                    Vector u(pass.size());
                    for (std::size_t i = 0; i < pass.size(); ++i) u[static_cast<Eigen::Index>(i)] = cur(ch, pass[i]);
                    Vector s = net_eval(c.scale_net, u, ct ? &ct->s_tape[static_cast<std::size_t>(ch)] : nullptr);
                    Vector t = net_eval(c.shift_net, u, ct ? &ct->t_tape[static_cast<std::size_t>(ch)] : nullptr);
                    if (ct) {
                        Vector orig(trans.size());
                        for (std::size_t i = 0; i < trans.size(); ++i)
                            orig[static_cast<Eigen::Index>(i)] = cur(ch, trans[i]);
                        ct->trans_vals[static_cast<std::size_t>(ch)] = std::move(orig);
                        ct->s[static_cast<std::size_t>(ch)] = s;
                    }
                    for (std::size_t i = 0; i < trans.size(); ++i) {
                        const Eigen::Index ii = static_cast<Eigen::Index>(i);
                        cur(ch, trans[i]) = cur(ch, trans[i]) * std::exp(s[ii]) + t[ii];
                    }
                    logdet += s.sum();
                }
                break;
            }
            case LayerSpec::Kind::squeeze: {
                Matrix out(tr.out.channels, tr.out.positions);
                for (int ch = 0; ch < tr.in.channels; ++ch)
                    for (int k = 0; k < tr.out.positions; ++k) {
                        out(2 * ch, k) = cur(ch, 2 * k);
                        out(2 * ch + 1, k) = cur(ch, 2 * k + 1);
                    }
                cur = std::move(out);
                break;
            }
            case LayerSpec::Kind::unsqueeze: {
                Matrix out(tr.out.channels, tr.out.positions);
                for (int ch = 0; ch < tr.out.channels; ++ch)
                    for (int k = 0; k < tr.in.positions; ++k) {
                        out(ch, 2 * k) = cur(2 * ch, k);
                        out(ch, 2 * k + 1) = cur(2 * ch + 1, k);
                    }
                cur = std::move(out);
                break;
            }
            case LayerSpec::Kind::split: {
                stash.push_back(cur.bottomRows(tr.stash_channels));
                cur = Matrix(cur.topRows(tr.out.channels));
                break;
            }
            case LayerSpec::Kind::concat: {
                Matrix out(tr.out.channels, tr.out.positions);
                out.topRows(tr.in.channels) = cur;
                out.bottomRows(tr.stash_channels) = stash.back();
                stash.pop_back();
                cur = std::move(out);
                break;
            }
        }
    }
    return ChannelTensor(std::move(cur));
}

ChannelTensor FlowModel::run_backward(const Tape& tape, ChannelTensor out_bar, double logdet_bar,
                                      Vector* param_grad) const {
    Matrix cur = std::move(out_bar.data);
    std::vector<Matrix> stash;
    std::size_t coupling_idx = couplings_.size();

    for (std::size_t li = layout_.size(); li-- > 0;) {
        const LayerSpec& spec = layout_[li];
        const LayerTrace& tr = trace_[li];
        switch (spec.kind) {
            case LayerSpec::Kind::coupling: {
                const Coupling& c = couplings_[--coupling_idx];
                const CouplingTape& ct = tape.couplings[coupling_idx];
                std::vector<int> pass, trans;
                partition_positions(tr.in.positions, c.transform_odd, pass, trans);
                Matrix in_bar(tr.in.channels, tr.in.positions);
                for (int ch = 0; ch < tr.in.channels; ++ch) {
                    const Vector& s = ct.s[static_cast<std::size_t>(ch)];
                    const Vector& x_trans = ct.trans_vals[static_cast<std::size_t>(ch)];
                    Vector y_bar_trans(trans.size());
                    for (std::size_t i = 0; i < trans.size(); ++i)
                        y_bar_trans[static_cast<Eigen::Index>(i)] = cur(ch, trans[i]);

                    Vector exp_s = s.array().exp().matrix();
                    Vector x_bar_trans = y_bar_trans.cwiseProduct(exp_s);
                    Vector s_bar = y_bar_trans.cwiseProduct(x_trans).cwiseProduct(exp_s);
                    s_bar.array() += logdet_bar;
                    const Vector& t_bar = y_bar_trans;

                    Vector u_bar =
                        net_backward(c.scale_net, ct.s_tape[static_cast<std::size_t>(ch)], s_bar, param_grad) +
                        net_backward(c.shift_net, ct.t_tape[static_cast<std::size_t>(ch)], t_bar, param_grad);
                    for (std::size_t i = 0; i < pass.size(); ++i)
                        in_bar(ch, pass[i]) = cur(ch, pass[i]) + u_bar[static_cast<Eigen::Index>(i)];
                    for (std::size_t i = 0; i < trans.size(); ++i)
                        in_bar(ch, trans[i]) = x_bar_trans[static_cast<Eigen::Index>(i)];
                }
                cur = std::move(in_bar);
                break;
            }
            case LayerSpec::Kind::squeeze: {
                Matrix in_bar(tr.in.channels, tr.in.positions);
                for (int ch = 0; ch < tr.in.channels; ++ch)
                    for (int k = 0; k < tr.out.positions; ++k) {
                        in_bar(ch, 2 * k) = cur(2 * ch, k);
                        in_bar(ch, 2 * k + 1) = cur(2 * ch + 1, k);
                    }
                cur = std::move(in_bar);
                break;
            }
            case LayerSpec::Kind::unsqueeze: {
                Matrix in_bar(tr.in.channels, tr.in.positions);
                for (int ch = 0; ch < tr.out.channels; ++ch)
                    for (int k = 0; k < tr.in.positions; ++k) {
                        in_bar(2 * ch, k) = cur(ch, 2 * k);
                        in_bar(2 * ch + 1, k) = cur(ch, 2 * k + 1);
                    }
                cur = std::move(in_bar);
                break;
            }
            case LayerSpec::Kind::split: {
                // forward kept the top half and stashed the bottom half
                Matrix in_bar(tr.in.channels, tr.in.positions);
                in_bar.topRows(tr.out.channels) = cur;
                in_bar.bottomRows(tr.stash_channels) = stash.back();
                stash.pop_back();
                cur = std::move(in_bar);
                break;
            }
            case LayerSpec::Kind::concat: {
                stash.push_back(cur.bottomRows(tr.stash_channels));
                cur = Matrix(cur.topRows(tr.in.channels));
                break;
            }
        }
    }
    return ChannelTensor(std::move(cur));
}

ForwardResult FlowModel::forward(const ChannelTensor& input) const {
    ForwardResult r;
    r.output = run_forward(input, r.logdet, nullptr);
    return r;
}

ChannelTensor FlowModel::inverse(const ChannelTensor& output) const {
    const LayerTrace& final_trace = trace_.back();
    if (output.channels() != final_trace.out.channels || output.positions() != final_trace.out.positions)
        throw std::invalid_argument("FlowModel: output shape does not match the model");

    Matrix cur = output.data;
    std::vector<Matrix> stash;
    std::size_t coupling_idx = couplings_.size();

    for (std::size_t li = layout_.size(); li-- > 0;) {
        const LayerSpec& spec = layout_[li];
        const LayerTrace& tr = trace_[li];
        switch (spec.kind) {
            case LayerSpec::Kind::coupling: {
                const Coupling& c = couplings_[--coupling_idx];
                std::vector<int> pass, trans;
                partition_positions(tr.in.positions, c.transform_odd, pass, trans);
                for (int ch = 0; ch < tr.in.channels; ++ch) {
                    Vector u(pass.size());
                    for (std::size_t i = 0; i < pass.size(); ++i) u[static_cast<Eigen::Index>(i)] = cur(ch, pass[i]);
                    Vector s = net_eval(c.scale_net, u, nullptr);
                    Vector t = net_eval(c.shift_net, u, nullptr);
                    for (std::size_t i = 0; i < trans.size(); ++i) {
                        const Eigen::Index ii = static_cast<Eigen::Index>(i);
                        cur(ch, trans[i]) = (cur(ch, trans[i]) - t[ii]) * std::exp(-s[ii]);
                    }
                }
                break;
            }
            case LayerSpec::Kind::squeeze: {
                Matrix in(tr.in.channels, tr.in.positions);
                for (int ch = 0; ch < tr.in.channels; ++ch)
                    for (int k = 0; k < tr.out.positions; ++k) {
                        in(ch, 2 * k) = cur(2 * ch, k);
                        in(ch, 2 * k + 1) = cur(2 * ch + 1, k);
                    }
                cur = std::move(in);
                break;
            }
            case LayerSpec::Kind::unsqueeze: {
                Matrix in(tr.in.channels, tr.in.positions);
                for (int ch = 0; ch < tr.out.channels; ++ch)
                    for (int k = 0; k < tr.in.positions; ++k) {
                        in(2 * ch, k) = cur(ch, 2 * k);
                        in(2 * ch + 1, k) = cur(ch, 2 * k + 1);
                    }
                cur = std::move(in);
                break;
            }
            case LayerSpec::Kind::split: {
                Matrix in(tr.in.channels, tr.in.positions);
                in.topRows(tr.out.channels) = cur;
                in.bottomRows(tr.stash_channels) = stash.back();
                stash.pop_back();
                cur = std::move(in);
                break;
            }
            case LayerSpec::Kind::concat: {
                stash.push_back(cur.bottomRows(tr.stash_channels));
                cur = Matrix(cur.topRows(tr.in.channels));
                break;
            }
        }
    }
    return ChannelTensor(std::move(cur));
}

double FlowModel::log_prob(const ChannelTensor& input) const {
    double logdet = 0.0;
    const ChannelTensor z = run_forward(input, logdet, nullptr);
    const double m = static_cast<double>(z.size());
    return -0.5 * m * kLog2Pi - 0.5 * z.data.squaredNorm() + logdet;
}

double FlowModel::nll_term(const ChannelTensor& input, double cotangent_scale, Vector* param_grad) const {
    Tape tape;
    double logdet = 0.0;
    ChannelTensor z = param_grad ? run_forward(input, logdet, &tape) : run_forward(input, logdet, nullptr);
    const double m = static_cast<double>(z.size());
    const double value = 0.5 * m * kLog2Pi + 0.5 * z.data.squaredNorm() - logdet;
    if (param_grad) {
        ChannelTensor z_bar(std::move(z));
        z_bar.data *= cotangent_scale;
        run_backward(tape, std::move(z_bar), -cotangent_scale, param_grad);
    }
    return value;
}

double FlowModel::nll(std::span<const ChannelTensor> batch) const {
    if (batch.empty()) throw std::invalid_argument("nll: empty batch");
    double total = 0.0;
    for (const ChannelTensor& x : batch) total += nll_term(x, 0.0, nullptr);
    return total / static_cast<double>(batch.size());
}

double FlowModel::nll_with_grad(std::span<const ChannelTensor> batch, Vector& grad) const {
    if (batch.empty()) throw std::invalid_argument("nll_with_grad: empty batch");
    grad = Vector::Zero(params_.size());
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    // per-sample gradients are finished before the 1/L weighting so that the
    // batch gradient is exactly the mean of the singleton gradients
    Vector sample_grad(params_.size());
    for (const ChannelTensor& x : batch) {
        sample_grad.setZero();
        total += nll_term(x, 1.0, &sample_grad);
        grad += inv * sample_grad;
    }
    return total * inv;
}

Vector FlowModel::grad_params(std::span<const ChannelTensor> batch) const {
    Vector grad;
    nll_with_grad(batch, grad);
    return grad;
}

InputGradients FlowModel::grad_input(const ChannelTensor& input) const {
    Tape tape;
    double logdet = 0.0;
    ChannelTensor z = run_forward(input, logdet, &tape);

    InputGradients g;
    g.latent_half_sq = run_backward(tape, z, 0.0, nullptr);
    ChannelTensor zero(z.channels(), z.positions());
    g.logdet = run_backward(tape, std::move(zero), 1.0, nullptr);
    return g;
}

void FlowModel::randomize_parameters(std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (Eigen::Index i = 0; i < params_.size(); ++i) params_[i] = scale * rng.gaussian();
    // keep layer-norm gains near one so the nets stay well scaled
    for (const Coupling& c : couplings_)
        for (const CouplingNet* net : {&c.scale_net, &c.shift_net})
            for (const NormView& n : net->norm)
                for (Eigen::Index i = 0; i < n.dim; ++i) params_[n.gamma + i] = 1.0 + scale * rng.gaussian();
}

void FlowModel::set_coupling_constants(int coupling_index, const Vector& s_values, const Vector& t_values) {
    if (coupling_index < 0 || static_cast<std::size_t>(coupling_index) >= couplings_.size())
        throw std::invalid_argument("set_coupling_constants: coupling index out of range");
    Coupling& c = couplings_[static_cast<std::size_t>(coupling_index)];
    if (s_values.size() != c.scale_net.out_dim || t_values.size() != c.shift_net.out_dim)
        throw std::invalid_argument("set_coupling_constants: value count must match transformed positions");

    const auto apply = [&](const CouplingNet& net, const Vector& values) {
        const AffineView& last = net.affine[6];
        params_.segment(last.weights, static_cast<Eigen::Index>(last.in) * last.out).setZero();
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            if (!(std::abs(values[i]) < 1.0))
                throw std::invalid_argument("set_coupling_constants: values must lie in (-1, 1)");
            params_[last.bias + i] = std::atanh(values[i]);
        }
    };
    apply(c.scale_net, s_values);
    apply(c.shift_net, t_values);
}

TrainResult train(FlowModel& model, const std::vector<ChannelTensor>& samples, const TrainConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("train: no samples");
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw std::invalid_argument("train: batch size and epochs must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
    if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0)
        throw std::invalid_argument("train: validation fraction must lie in [0, 1)");
    for (const ChannelTensor& x : samples)
        if (x.channels() != model.input_channels() || x.positions() != model.input_positions())
            throw std::invalid_argument("train: sample shape does not match the model");

    Rng rng(cfg.seed);
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());

    const int n_val = static_cast<int>(cfg.validation_fraction * static_cast<double>(samples.size()));
    const int n_train = static_cast<int>(samples.size()) - n_val;
    if (n_train < 1) throw std::invalid_argument("train: validation split leaves no training samples");
    std::vector<int> train_idx(order.begin(), order.begin() + n_train);
    std::vector<ChannelTensor> val_samples;
    val_samples.reserve(static_cast<std::size_t>(n_val));
    for (auto it = order.begin() + n_train; it != order.end(); ++it)
        val_samples.push_back(samples[static_cast<std::size_t>(*it)]);

    const Eigen::Index p = model.parameters().size();
    Vector adam_m = Vector::Zero(p);
    Vector adam_v = Vector::Zero(p);
    Vector grad = Vector::Zero(p);
    long step = 0;

    TrainResult result;
    std::vector<ChannelTensor> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng.engine());

        double epoch_loss = 0.0;
        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int len = std::min(cfg.batch_size, n_train - start);
            batch.clear();
            for (int i = 0; i < len; ++i) batch.push_back(samples[static_cast<std::size_t>(train_idx[static_cast<std::size_t>(start + i)])]);

            const double loss = model.nll_with_grad(std::span<const ChannelTensor>(batch), grad);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "train: loss became non-finite in epoch " << epoch << "; last finite epoch "
                    << static_cast<int>(result.history.size()) - 1;
                throw training_error(msg.str(), result);
            }
            epoch_loss += loss * len;

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            adam_m = cfg.adam_beta1 * adam_m + (1.0 - cfg.adam_beta1) * grad;
            adam_v = cfg.adam_beta2 * adam_v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
            model.parameters() -=
                (cfg.learning_rate * (adam_m / bc1).array() / ((adam_v / bc2).array().sqrt() + cfg.adam_eps))
                    .matrix();
        }

        EpochStats stats;
        stats.train_nll = epoch_loss / static_cast<double>(n_train);
        stats.validation_nll =
            val_samples.empty() ? stats.train_nll : model.nll(std::span<const ChannelTensor>(val_samples));
        if (!std::isfinite(stats.validation_nll)) {
            std::ostringstream msg;
            msg << "train: validation loss became non-finite after epoch " << epoch;
            throw training_error(msg.str(), result);
        }
        result.history.push_back(stats);
    }
    return result;
}

}  // namespace noisemap::flow
