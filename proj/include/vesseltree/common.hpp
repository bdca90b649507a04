// Shared primitives: error taxonomy, 3-vectors, deterministic RNG,
// content hashing and number formatting used by every module.
#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vesseltree {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Errors. Categories map 1:1 onto CLI exit codes (io=3, validation=4,
// numeric=5); keep messages one-line so the CLI contract holds.

class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& msg)
        : std::runtime_error(msg), category_(std::move(category)) {}
    const std::string& category() const { return category_; }

private:
    std::string category_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

// ---------------------------------------------------------------------------
// Small 3-vector in voxel coordinates.

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    bool operator==(const Vec3& o) const = default;

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        if (n <= 0.0)
            throw ValidationError("cannot normalize zero-length vector");
        return {x / n, y / n, z / n};
    }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is bit-stable across platforms; the
// distribution mappings are written out here because the std ones are not.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection-free modulo bias is negligible for the n used here,
        // but stay exact: Lemire-style rejection.
        if (n == 0)
            throw ValidationError("uniform_index: empty range");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller with a cached spare.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so the log is finite.
        const double u1 = static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit content hash (manifest integrity, not security).

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline std::string to_hex(std::uint64_t v) {
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[v & 0xf];
        v >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Number formatting: shortest round-trip decimal, used by every CSV writer
// so reruns are byte-identical.

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, decimals);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw IoError("malformed number '" + std::string(s) + "' in " + context);
    return v;
}

inline long long parse_int(std::string_view s, const std::string& context) {
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw IoError("malformed integer '" + std::string(s) + "' in " + context);
    return v;
}

// ---------------------------------------------------------------------------
// Text file helpers.

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw IoError("write failed for " + path.string());
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Strips one trailing '\r' (tolerate CRLF inputs) and returns lines.
inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            if (start < text.size())
                lines.emplace_back(text.substr(start));
            break;
        }
        std::string_view line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        lines.emplace_back(line);
        start = pos + 1;
    }
    return lines;
}

}  // namespace vesseltree
