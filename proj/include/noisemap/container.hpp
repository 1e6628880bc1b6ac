#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <Eigen/Dense>

namespace noisemap::io {

/// Directory-backed array store: a `manifest.json` registry plus raw
/// little-endian binary payload files. Complex arrays are stored as
/// interleaved (re, im) f64 pairs.
class Container {
public:
    struct ArrayInfo {
        std::string dtype;  // "f64" or "c128"
        std::vector<std::uint64_t> shape;
        std::string file;
        std::uint64_t offset = 0;
        std::string seed;  // provenance note
    };

    /// Start an empty container; the directory is created if needed.
    static Container create(const std::filesystem::path& dir);

    /// Open an existing container; throws data_error when the manifest is
    /// missing or malformed.
    static Container open(const std::filesystem::path& dir);

    bool has_array(const std::string& name) const;
    ArrayInfo array_info(const std::string& name) const;
    std::vector<std::string> array_names() const;

    void write_f64(const std::string& name, const std::vector<std::uint64_t>& shape,
                   std::span<const double> values, const std::string& seed_note = "");
    void write_c128(const std::string& name, const std::vector<std::uint64_t>& shape,
                    std::span<const std::complex<double>> values, const std::string& seed_note = "");

    std::vector<double> read_f64(const std::string& name) const;
    std::vector<std::complex<double>> read_c128(const std::string& name) const;

    nlohmann::json& meta();
    const nlohmann::json& meta() const;

    /// Persist the manifest (payloads are written eagerly).
    void save() const;

    const std::filesystem::path& directory() const { return dir_; }

private:
    Container() = default;

    std::string payload_name(const std::string& array_name) const;
    void register_array(const std::string& name, const std::string& dtype,
                        const std::vector<std::uint64_t>& shape, const std::string& file,
                        const std::string& seed_note);
    std::vector<std::byte> read_payload(const std::string& name, const std::string& expected_dtype,
                                        std::size_t element_bytes) const;

    std::filesystem::path dir_;
    nlohmann::json manifest_;
};

/// 8-bit grayscale binary portable graymap, pixel = round(255 * v / data_range)
/// clamped to [0, 255].
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& image, double data_range);

}  // namespace noisemap::io
