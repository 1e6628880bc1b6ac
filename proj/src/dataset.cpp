#include "noisemap/dataset.hpp"

#include <fstream>

#include "noisemap/common.hpp"

namespace noisemap::io {

namespace {

using Complex = std::complex<double>;

}  // namespace

void write_operator(Container& c, const std::string& prefix, const op::ForwardOperator& fwd) {
    // row-major entries so rows stay contiguous in the payload
    std::vector<Complex> entries(static_cast<std::size_t>(fwd.entries.size()));
    for (Eigen::Index r = 0; r < fwd.entries.rows(); ++r)
        for (Eigen::Index col = 0; col < fwd.entries.cols(); ++col)
            entries[static_cast<std::size_t>(r) * static_cast<std::size_t>(fwd.entries.cols()) +
                    static_cast<std::size_t>(col)] = fwd.entries(r, col);
    c.write_c128(prefix + "/entries",
                 {static_cast<std::uint64_t>(fwd.entries.rows()), static_cast<std::uint64_t>(fwd.entries.cols())},
                 entries);
    c.meta()[prefix] = {{"channels", fwd.channels},
                        {"grid", {fwd.grid.width, fwd.grid.height}},
                        {"freq_index_set", fwd.freq_index_set}};
}

op::ForwardOperator read_operator(const Container& c, const std::string& prefix) {
    const auto info = c.array_info(prefix + "/entries");
    if (info.shape.size() != 2) throw data_error("read_operator: '" + prefix + "/entries' must be rank 2");
    const auto values = c.read_c128(prefix + "/entries");
    if (!c.meta().contains(prefix)) throw data_error("read_operator: missing metadata for '" + prefix + "'");
    const nlohmann::json& meta = c.meta().at(prefix);

    op::ForwardOperator fwd;
    fwd.channels = meta.at("channels").get<int>();
    fwd.grid.width = meta.at("grid").at(0).get<int>();
    fwd.grid.height = meta.at("grid").at(1).get<int>();
    fwd.freq_index_set = meta.at("freq_index_set").get<std::vector<int>>();
    fwd.entries.resize(static_cast<Eigen::Index>(info.shape[0]), static_cast<Eigen::Index>(info.shape[1]));
    for (Eigen::Index r = 0; r < fwd.entries.rows(); ++r)
        for (Eigen::Index col = 0; col < fwd.entries.cols(); ++col)
            fwd.entries(r, col) = values[static_cast<std::size_t>(r) * static_cast<std::size_t>(fwd.entries.cols()) +
                                         static_cast<std::size_t>(col)];
    return fwd;
}

void write_tuples(Container& c, const std::string& prefix, const std::vector<phantom::MeasurementTuple>& tuples,
                  const std::string& seed_note) {
    if (tuples.empty()) throw std::invalid_argument("write_tuples: empty batch");
    const std::size_t n = tuples.size();
    const std::size_t x_len = static_cast<std::size_t>(tuples.front().x.size());
    const std::size_t y_len = static_cast<std::size_t>(tuples.front().y.size());
    const double concentration = tuples.front().concentration;

    std::vector<double> xs(n * x_len);
    std::vector<Complex> ys(n * y_len), etas(n * y_len), deltas(n * y_len);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = tuples[i];
        if (static_cast<std::size_t>(t.x.size()) != x_len || static_cast<std::size_t>(t.y.size()) != y_len ||
            t.eta.size() != t.y.size())
            throw std::invalid_argument("write_tuples: tuples differ in shape");
        if (t.concentration != concentration)
            throw std::invalid_argument("write_tuples: tuples differ in concentration");
        for (std::size_t j = 0; j < x_len; ++j) xs[i * x_len + j] = t.x[static_cast<Eigen::Index>(j)];
        const op::CVector delta = t.y_delta();
        for (std::size_t j = 0; j < y_len; ++j) {
            ys[i * y_len + j] = t.y[static_cast<Eigen::Index>(j)];
            etas[i * y_len + j] = t.eta[static_cast<Eigen::Index>(j)];
            deltas[i * y_len + j] = delta[static_cast<Eigen::Index>(j)];
        }
    }

    const std::vector<std::uint64_t> x_shape = {n, x_len};
    const std::vector<std::uint64_t> y_shape = {n, y_len};
    c.write_f64(prefix + "/x", x_shape, xs, seed_note);
    c.write_c128(prefix + "/y", y_shape, ys, seed_note);
    c.write_c128(prefix + "/eta", y_shape, etas, seed_note);
    c.write_c128(prefix + "/y_delta", y_shape, deltas, seed_note);
    c.meta()[prefix] = {{"concentration", concentration}, {"count", n}};
}

std::vector<phantom::MeasurementTuple> read_tuples(const Container& c, const std::string& prefix) {
    const auto x_info = c.array_info(prefix + "/x");
    const auto y_info = c.array_info(prefix + "/y");
    if (x_info.shape.size() != 2 || y_info.shape.size() != 2 || x_info.shape[0] != y_info.shape[0])
        throw data_error("read_tuples: inconsistent tuple arrays under '" + prefix + "'");
    if (!c.meta().contains(prefix)) throw data_error("read_tuples: missing metadata for '" + prefix + "'");
    const double concentration = c.meta().at(prefix).at("concentration").get<double>();

    const auto xs = c.read_f64(prefix + "/x");
    const auto ys = c.read_c128(prefix + "/y");
    const auto etas = c.read_c128(prefix + "/eta");

    const std::size_t n = x_info.shape[0];
    const std::size_t x_len = x_info.shape[1];
    const std::size_t y_len = y_info.shape[1];
    std::vector<phantom::MeasurementTuple> tuples(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& t = tuples[i];
        t.concentration = concentration;
        t.x.resize(static_cast<Eigen::Index>(x_len));
        t.y.resize(static_cast<Eigen::Index>(y_len));
        t.eta.resize(static_cast<Eigen::Index>(y_len));
        for (std::size_t j = 0; j < x_len; ++j) t.x[static_cast<Eigen::Index>(j)] = xs[i * x_len + j];
        for (std::size_t j = 0; j < y_len; ++j) {
            t.y[static_cast<Eigen::Index>(j)] = ys[i * y_len + j];
            t.eta[static_cast<Eigen::Index>(j)] = etas[i * y_len + j];
        }
    }
    return tuples;
}

void write_noise_bank(Container& c, const std::string& name, const std::vector<phantom::NoiseSample>& bank,
                      const std::string& seed_note) {
    if (bank.empty()) throw std::invalid_argument("write_noise_bank: empty bank");
    const std::size_t len = static_cast<std::size_t>(bank.front().values.size());
    std::vector<Complex> values(bank.size() * len);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        if (static_cast<std::size_t>(bank[i].values.size()) != len)
            throw std::invalid_argument("write_noise_bank: samples differ in length");
        for (std::size_t j = 0; j < len; ++j) values[i * len + j] = bank[i].values[static_cast<Eigen::Index>(j)];
    }
    c.write_c128(name, {bank.size(), len}, values, seed_note);
    c.meta()[name] = {{"provenance", bank.front().provenance}};
}

std::vector<phantom::NoiseSample> read_noise_bank(const Container& c, const std::string& name) {
    const auto info = c.array_info(name);
    if (info.shape.size() != 2) throw data_error("read_noise_bank: '" + name + "' must be rank 2");
    const auto values = c.read_c128(name);
    std::string provenance = "measured";
    if (c.meta().contains(name) && c.meta().at(name).contains("provenance"))
        provenance = c.meta().at(name).at("provenance").get<std::string>();

    std::vector<phantom::NoiseSample> bank(info.shape[0]);
    const std::size_t len = info.shape[1];
    for (std::size_t i = 0; i < bank.size(); ++i) {
        bank[i].values.resize(static_cast<Eigen::Index>(len));
        for (std::size_t j = 0; j < len; ++j) bank[i].values[static_cast<Eigen::Index>(j)] = values[i * len + j];
        bank[i].provenance = provenance;
    }
    return bank;
}

void save_flow(const std::filesystem::path& dir, const flow::FlowModel& model,
               const std::vector<flow::EpochStats>& history) {
    Container c = Container::create(dir);
    nlohmann::json layout = nlohmann::json::array();
    for (const flow::LayerSpec& spec : model.layout()) {
        switch (spec.kind) {
            case flow::LayerSpec::Kind::coupling:
                layout.push_back({{"kind", "coupling"}, {"transform_odd", spec.transform_odd}, {"width", spec.width}});
                break;
            case flow::LayerSpec::Kind::squeeze:
                layout.push_back({{"kind", "squeeze"}});
                break;
            case flow::LayerSpec::Kind::unsqueeze:
                layout.push_back({{"kind", "unsqueeze"}});
                break;
            case flow::LayerSpec::Kind::split:
                layout.push_back({{"kind", "split"}});
                break;
            case flow::LayerSpec::Kind::concat:
                layout.push_back({{"kind", "concat"}});
                break;
        }
    }
    c.meta()["flow_format"] = 1;
    c.meta()["channels"] = model.input_channels();
    c.meta()["positions"] = model.input_positions();
    c.meta()["layout"] = std::move(layout);

    const flow::Vector& p = model.parameters();
    c.write_f64("params", {static_cast<std::uint64_t>(p.size())},
                std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));

    if (!history.empty()) {
        std::vector<double> hist(history.size() * 2);
        for (std::size_t i = 0; i < history.size(); ++i) {
            hist[2 * i] = history[i].train_nll;
            hist[2 * i + 1] = history[i].validation_nll;
        }
        c.write_f64("loss_history", {history.size(), 2}, hist);
    }
    c.save();
}

flow::FlowModel load_flow(const std::filesystem::path& dir) {
    const Container c = Container::open(dir);
    if (!c.meta().contains("flow_format") || c.meta().at("flow_format").get<int>() != 1)
        throw data_error("load_flow: missing or unsupported flow_format");

    std::vector<flow::LayerSpec> layout;
    for (const nlohmann::json& e : c.meta().at("layout")) {
        const std::string kind = e.at("kind").get<std::string>();
        if (kind == "coupling")
            layout.push_back(flow::LayerSpec::coupling(e.at("transform_odd").get<bool>(), e.at("width").get<int>()));
        else if (kind == "squeeze")
            layout.push_back(flow::LayerSpec::squeeze());
        else if (kind == "unsqueeze")
            layout.push_back(flow::LayerSpec::unsqueeze());
        else if (kind == "split")
            layout.push_back(flow::LayerSpec::split());
        else if (kind == "concat")
            layout.push_back(flow::LayerSpec::concat());
        else
            throw data_error("load_flow: unknown layer kind '" + kind + "'");
    }

    flow::FlowModel model(c.meta().at("channels").get<int>(), c.meta().at("positions").get<int>(),
                          std::move(layout), 0);
    const std::vector<double> params = c.read_f64("params");
    if (static_cast<Eigen::Index>(params.size()) != model.parameters().size())
        throw data_error("load_flow: parameter count does not match the stored layout");
    for (std::size_t i = 0; i < params.size(); ++i) model.parameters()[static_cast<Eigen::Index>(i)] = params[i];
    return model;
}

void write_report(const std::filesystem::path& dir, const metrics::ReconstructionReport& report,
                  const metrics::MetricConfig& cfg) {
    Container c = Container::create(dir);
    c.write_f64("ssim", {report.ssim_values.size()}, report.ssim_values);
    c.write_f64("psnr", {report.psnr_values.size()}, report.psnr_values);
    if (!report.seconds_per_reconstruction.empty())
        c.write_f64("seconds", {report.seconds_per_reconstruction.size()}, report.seconds_per_reconstruction);

    nlohmann::json params = nlohmann::json::object();
    for (const auto& [key, value] : report.parameters) params[key] = value;
    c.meta() = {{"method", report.method},
                {"parameters", params},
                {"concentration", report.concentration},
                {"ssim_mean", report.ssim_mean},
                {"ssim_std", report.ssim_std},
                {"psnr_mean", report.psnr_mean},
                {"psnr_std", report.psnr_std},
                {"psnr_finite_count", report.psnr_finite_count},
                {"metric",
                 {{"data_range", cfg.data_range},
                  {"window", cfg.window},
                  {"sigma", cfg.sigma},
                  {"k1", cfg.k1},
                  {"k2", cfg.k2}}}};
    c.save();

    std::ofstream txt(dir / "report.txt", std::ios::trunc);
    if (!txt) throw data_error("write_report: cannot write " + (dir / "report.txt").string());
    txt << "method: " << report.method << "\n";
    txt << "concentration: " << report.concentration << "\n";
    for (const auto& [key, value] : report.parameters) txt << key << ": " << value << "\n";
    txt << "ssim_mean: " << report.ssim_mean << " +- " << report.ssim_std << "\n";
    txt << "psnr_mean: " << report.psnr_mean << " +- " << report.psnr_std << " (finite "
        << report.psnr_finite_count << "/" << report.psnr_values.size() << ")\n";
    txt << "metric: window=" << cfg.window << " sigma=" << cfg.sigma << " k1=" << cfg.k1 << " k2=" << cfg.k2
        << " data_range=" << cfg.data_range << "\n";
    txt << "\nsample  ssim      psnr";
    if (!report.seconds_per_reconstruction.empty()) txt << "      seconds";
    txt << "\n";
    for (std::size_t i = 0; i < report.ssim_values.size(); ++i) {
        txt << i << "  " << report.ssim_values[i] << "  " << report.psnr_values[i];
        if (i < report.seconds_per_reconstruction.size()) txt << "  " << report.seconds_per_reconstruction[i];
        txt << "\n";
    }
}

}  // namespace noisemap::io
