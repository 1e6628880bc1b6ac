#include "noisemap/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "noisemap/common.hpp"

namespace noisemap::io {

namespace {

constexpr const char* kManifestName = "manifest.json";

void encode_le(std::span<const double> values, std::vector<std::byte>& out) {
    out.resize(values.size() * sizeof(double));
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), values.data(), out.size());
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            auto bits = std::bit_cast<std::uint64_t>(values[i]);
            for (int b = 0; b < 8; ++b)
                out[i * 8 + static_cast<std::size_t>(b)] = static_cast<std::byte>((bits >> (8 * b)) & 0xff);
        }
    }
}

void decode_le(std::span<const std::byte> bytes, double* values, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(values, bytes.data(), count * sizeof(double));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            for (int b = 7; b >= 0; --b)
                bits = (bits << 8) | static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]);
            values[i] = std::bit_cast<double>(bits);
        }
    }
}

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
    std::uint64_t n = 1;
    for (std::uint64_t d : shape) n *= d;
    return n;
}

}  // namespace

Container Container::create(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    Container c;
    c.dir_ = dir;
    c.manifest_ = {{"format", 1}, {"arrays", nlohmann::json::object()}, {"meta", nlohmann::json::object()}};
    return c;
}

Container Container::open(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / kManifestName;
    std::ifstream in(manifest_path);
    if (!in) throw data_error("container: cannot open " + manifest_path.string());
    Container c;
    c.dir_ = dir;
    try {
        in >> c.manifest_;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("container: malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (!c.manifest_.contains("format") || !c.manifest_.contains("arrays"))
        throw data_error("container: manifest lacks format/arrays fields: " + manifest_path.string());
    return c;
}

bool Container::has_array(const std::string& name) const { return manifest_["arrays"].contains(name); }

Container::ArrayInfo Container::array_info(const std::string& name) const {
    if (!has_array(name)) throw data_error("container: missing array '" + name + "'");
    const nlohmann::json& e = manifest_["arrays"][name];
    ArrayInfo info;
    info.dtype = e.at("dtype").get<std::string>();
    info.shape = e.at("shape").get<std::vector<std::uint64_t>>();
    info.file = e.at("file").get<std::string>();
    info.offset = e.at("offset").get<std::uint64_t>();
    if (e.contains("seed")) info.seed = e.at("seed").get<std::string>();
    return info;
}

std::vector<std::string> Container::array_names() const {
    std::vector<std::string> names;
    for (const auto& item : manifest_["arrays"].items()) names.push_back(item.key());
    return names;
}

std::string Container::payload_name(const std::string& array_name) const {
    std::string file;
    file.reserve(array_name.size() + 4);
    for (char ch : array_name) {
        const bool plain = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                           ch == '.' || ch == '-' || ch == '_';
        file += plain ? ch : '_';
    }
    file += ".bin";
    // the manifest's file entry is authoritative; avoid collisions between
    // distinct array names mapping to the same sanitized file
    std::string candidate = file;
    int suffix = 2;
    while (true) {
        bool taken = false;
        for (const auto& item : manifest_["arrays"].items()) {
            if (item.key() != array_name && item.value().at("file").get<std::string>() == candidate) {
                taken = true;
                break;
            }
        }
        if (!taken) return candidate;
        candidate = file.substr(0, file.size() - 4) + "." + std::to_string(suffix++) + ".bin";
    }
}

void Container::register_array(const std::string& name, const std::string& dtype,
                               const std::vector<std::uint64_t>& shape, const std::string& file,
                               const std::string& seed_note) {
    nlohmann::json entry = {{"dtype", dtype}, {"shape", shape}, {"file", file}, {"offset", 0}};
    if (!seed_note.empty()) entry["seed"] = seed_note;
    manifest_["arrays"][name] = std::move(entry);
}

void Container::write_f64(const std::string& name, const std::vector<std::uint64_t>& shape,
                          std::span<const double> values, const std::string& seed_note) {
    if (element_count(shape) != values.size())
        throw std::invalid_argument("container: shape does not match value count for '" + name + "'");
    const std::string file = payload_name(name);
    std::vector<std::byte> bytes;
    encode_le(values, bytes);
    std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("container: cannot write " + (dir_ / file).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw data_error("container: short write to " + (dir_ / file).string());
    register_array(name, "f64", shape, file, seed_note);
}

void Container::write_c128(const std::string& name, const std::vector<std::uint64_t>& shape,
                           std::span<const std::complex<double>> values, const std::string& seed_note) {
    if (element_count(shape) != values.size())
        throw std::invalid_argument("container: shape does not match value count for '" + name + "'");
    const std::string file = payload_name(name);
    std::vector<std::byte> bytes;
    // std::complex<double> is laid out as (re, im); interleave explicitly
    std::vector<double> interleaved(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
        interleaved[2 * i] = values[i].real();
        interleaved[2 * i + 1] = values[i].imag();
    }
    encode_le(interleaved, bytes);
    std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("container: cannot write " + (dir_ / file).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw data_error("container: short write to " + (dir_ / file).string());
    register_array(name, "c128", shape, file, seed_note);
}

std::vector<std::byte> Container::read_payload(const std::string& name, const std::string& expected_dtype,
                                               std::size_t element_bytes) const {
    const ArrayInfo info = array_info(name);
    if (info.dtype != expected_dtype)
        throw data_error("container: array '" + name + "' has dtype " + info.dtype + ", expected " +
                         expected_dtype);
    const std::uint64_t count = element_count(info.shape);
    const std::uint64_t byte_count = count * element_bytes;

    const std::filesystem::path path = dir_ / info.file;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("container: cannot open payload " + path.string());
    in.seekg(static_cast<std::streamoff>(info.offset));
    std::vector<std::byte> bytes(byte_count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(byte_count));
    if (in.gcount() != static_cast<std::streamsize>(byte_count))
        throw data_error("container: payload of '" + name + "' is shorter than its declared shape");
    return bytes;
}

std::vector<double> Container::read_f64(const std::string& name) const {
    const std::vector<std::byte> bytes = read_payload(name, "f64", sizeof(double));
    std::vector<double> values(bytes.size() / sizeof(double));
    decode_le(bytes, values.data(), values.size());
    return values;
}

std::vector<std::complex<double>> Container::read_c128(const std::string& name) const {
    const std::vector<std::byte> bytes = read_payload(name, "c128", 2 * sizeof(double));
    std::vector<double> interleaved(bytes.size() / sizeof(double));
    decode_le(bytes, interleaved.data(), interleaved.size());
    std::vector<std::complex<double>> values(interleaved.size() / 2);
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = {interleaved[2 * i], interleaved[2 * i + 1]};
    return values;
}

nlohmann::json& Container::meta() { return manifest_["meta"]; }
const nlohmann::json& Container::meta() const { return manifest_.at("meta"); }

void Container::save() const {
    const std::filesystem::path path = dir_ / kManifestName;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("container: cannot write manifest " + path.string());
    out << manifest_.dump(2) << '\n';
}

void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& image, double data_range) {
    if (!(data_range > 0.0)) throw std::invalid_argument("write_pgm: data_range must be > 0");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("write_pgm: cannot write " + path.string());
    out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
    for (Eigen::Index r = 0; r < image.rows(); ++r)
        for (Eigen::Index c = 0; c < image.cols(); ++c) {
            long v = std::lround(255.0 * image(r, c) / data_range);
            v = std::clamp(v, 0L, 255L);
            out.put(static_cast<char>(static_cast<unsigned char>(v)));
        }
    if (!out) throw data_error("write_pgm: short write to " + path.string());
}

}  // namespace noisemap::io
