// Dense 3D voxel grids, the exact Euclidean distance transform and the
// header + raw-payload volume file format.
//
// Layout is x-fastest: linear index = x + nx*(y + ny*z). Spacing is carried
// in file headers but never enters any computation; all distances are in
// voxel units.
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <type_traits>

#include "vesseltree/common.hpp"

#include "json.hpp"

namespace vesseltree {

struct GridDims {
    int nx = 0, ny = 0, nz = 0;

    bool operator==(const GridDims&) const = default;

    std::size_t count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    bool contains(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
    }
    std::array<int, 3> coords(std::size_t linear) const {
        const auto sx = static_cast<std::size_t>(nx);
        const auto sy = static_cast<std::size_t>(ny);
        return {static_cast<int>(linear % sx), static_cast<int>((linear / sx) % sy),
                static_cast<int>(linear / (sx * sy))};
    }

    void validate() const {
        if (nx < 1 || ny < 1 || nz < 1)
            throw ValidationError("grid dims must be positive");
        const std::size_t limit = std::numeric_limits<std::size_t>::max() / 8;
        if (static_cast<std::size_t>(nx) > limit / static_cast<std::size_t>(ny) ||
            count() > limit)
            throw ValidationError("grid dims exceed addressable range");
    }
};

template <typename T>
struct Grid {
    GridDims dims;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<T> data;

    Grid() = default;
    Grid(GridDims d, T fill = T{}) : dims(d) {
        dims.validate();
        data.assign(dims.count(), fill);
    }

    T& operator()(int x, int y, int z) { return data[dims.index(x, y, z)]; }
    const T& operator()(int x, int y, int z) const { return data[dims.index(x, y, z)]; }

    bool operator==(const Grid&) const = default;
};

using ScalarVolume = Grid<float>;
using LabelVolume = Grid<std::uint16_t>;
using BinaryMask = Grid<std::uint8_t>;

// ---------------------------------------------------------------------------
// Exact Euclidean distance transform (separable squared-distance method,
// lower envelope of parabolas per axis). Squared distances are integers so
// the result is exact up to the final sqrt.

namespace detail {

// 1D squared-distance transform of sampled function f, written into d.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& zbound) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    zbound[0] = -std::numeric_limits<double>::infinity();
    zbound[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
                (2.0 * (q - p));
            if (s <= zbound[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        zbound[k] = s;
        zbound[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (zbound[k + 1] < q)
            ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace detail

/// Distance (voxel units) from every voxel to the nearest true voxel.
/// True voxels map to exactly 0. Throws if the mask has no foreground.
inline ScalarVolume euclidean_distance_transform(const BinaryMask& mask) {
    const GridDims d = mask.dims;
    d.validate();
    const double inf = 1e30;
    bool any = false;
    std::vector<double> sq(d.count());
    for (std::size_t i = 0; i < sq.size(); ++i) {
        sq[i] = mask.data[i] ? 0.0 : inf;
        any |= (mask.data[i] != 0);
    }
    if (!any)
        throw ValidationError("no foreground");

    const int nmax = std::max({d.nx, d.ny, d.nz});
    std::vector<double> f(nmax), out(nmax), zbound(nmax + 1);
    std::vector<int> v(nmax);

    // Pass along x.
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y) {
            const std::size_t base = d.index(0, y, z);
            for (int x = 0; x < d.nx; ++x)
                f[x] = sq[base + x];
            f.resize(d.nx);
            detail::edt_1d(f, out, v, zbound);
            for (int x = 0; x < d.nx; ++x)
                sq[base + x] = out[x];
            f.resize(nmax);
        }
    // Pass along y.
    for (int z = 0; z < d.nz; ++z)
        for (int x = 0; x < d.nx; ++x) {
            for (int y = 0; y < d.ny; ++y)
                f[y] = sq[d.index(x, y, z)];
            f.resize(d.ny);
            detail::edt_1d(f, out, v, zbound);
            for (int y = 0; y < d.ny; ++y)
                sq[d.index(x, y, z)] = out[y];
            f.resize(nmax);
        }
    // Pass along z.
    for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
            for (int z = 0; z < d.nz; ++z)
                f[z] = sq[d.index(x, y, z)];
            f.resize(d.nz);
            detail::edt_1d(f, out, v, zbound);
            for (int z = 0; z < d.nz; ++z)
                sq[d.index(x, y, z)] = out[z];
            f.resize(nmax);
        }

    ScalarVolume result(d);
    result.spacing = mask.spacing;
    for (std::size_t i = 0; i < sq.size(); ++i)
        result.data[i] = static_cast<float>(std::sqrt(sq[i]));
    return result;
}

// ---------------------------------------------------------------------------
// Masked selection: voxels of `vol` whose label satisfies `pred`, in
// ascending linear-index order.

template <typename Pred>
std::vector<std::pair<std::size_t, float>> masked_values(const ScalarVolume& vol,
                                                         const LabelVolume& mask, Pred&& pred) {
    if (vol.dims != mask.dims)
        throw ValidationError("masked_values: dims mismatch");
    std::vector<std::pair<std::size_t, float>> out;
    for (std::size_t i = 0; i < vol.data.size(); ++i)
        if (pred(mask.data[i]))
            out.emplace_back(i, vol.data[i]);
    return out;
}

// ---------------------------------------------------------------------------
// File format: <name>.json header {dims, spacing, dtype, order} plus a
// sibling <name>.raw little-endian payload. payload bytes = count * sizeof.

namespace detail {

template <typename T>
const char* dtype_name() {
    if constexpr (std::is_same_v<T, float>)
        return "f32";
    else if constexpr (std::is_same_v<T, std::uint8_t>)
        return "u8";
    else
        return "u16";
}

inline std::filesystem::path payload_path(const std::filesystem::path& header) {
    std::filesystem::path p = header;
    p.replace_extension(".raw");
    return p;
}

template <typename T>
void encode_le(const std::vector<T>& values, std::string& out) {
    out.resize(values.size() * sizeof(T));
    for (std::size_t i = 0; i < values.size(); ++i) {
        if constexpr (std::is_same_v<T, float>) {
            const auto bits = std::bit_cast<std::uint32_t>(values[i]);
            out[4 * i + 0] = static_cast<char>(bits & 0xff);
            out[4 * i + 1] = static_cast<char>((bits >> 8) & 0xff);
            out[4 * i + 2] = static_cast<char>((bits >> 16) & 0xff);
            out[4 * i + 3] = static_cast<char>((bits >> 24) & 0xff);
        } else if constexpr (sizeof(T) == 2) {
            out[2 * i + 0] = static_cast<char>(values[i] & 0xff);
            out[2 * i + 1] = static_cast<char>((values[i] >> 8) & 0xff);
        } else {
            out[i] = static_cast<char>(values[i]);
        }
    }
}

template <typename T>
void decode_le(const std::string& bytes, std::vector<T>& values) {
    values.resize(bytes.size() / sizeof(T));
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if constexpr (std::is_same_v<T, float>) {
            const std::uint32_t bits = static_cast<std::uint32_t>(p[4 * i]) |
                                       (static_cast<std::uint32_t>(p[4 * i + 1]) << 8) |
                                       (static_cast<std::uint32_t>(p[4 * i + 2]) << 16) |
                                       (static_cast<std::uint32_t>(p[4 * i + 3]) << 24);
            values[i] = std::bit_cast<float>(bits);
        } else if constexpr (sizeof(T) == 2) {
            values[i] = static_cast<T>(static_cast<std::uint16_t>(p[2 * i]) |
                                       (static_cast<std::uint16_t>(p[2 * i + 1]) << 8));
        } else {
            values[i] = static_cast<T>(p[i]);
        }
    }
}

}  // namespace detail

template <typename T>
void write_volume(const Grid<T>& vol, const std::filesystem::path& header_path) {
    vol.dims.validate();
    if (vol.data.size() != vol.dims.count())
        throw ValidationError("volume data length does not match dims");
    nlohmann::json header;
    header["dims"] = {vol.dims.nx, vol.dims.ny, vol.dims.nz};
    header["spacing"] = {vol.spacing[0], vol.spacing[1], vol.spacing[2]};
    header["dtype"] = detail::dtype_name<T>();
    header["order"] = "x-fastest";
    write_text_file(header_path, header.dump(2) + "\n");
    std::string payload;
    detail::encode_le(vol.data, payload);
    write_text_file(detail::payload_path(header_path), payload);
}

namespace detail {

struct VolumeHeader {
    GridDims dims;
    std::array<double, 3> spacing;
    std::string dtype;
};

inline VolumeHeader read_volume_header(const std::filesystem::path& header_path) {
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(read_text_file(header_path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed volume header " + header_path.string() + ": " + e.what());
    }
    VolumeHeader h;
    try {
        const auto& dims = header.at("dims");
        h.dims = GridDims{dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>()};
        const auto& sp = header.at("spacing");
        h.spacing = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
        h.dtype = header.at("dtype").get<std::string>();
        if (header.at("order").get<std::string>() != "x-fastest")
            throw IoError("unsupported order in " + header_path.string());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed volume header " + header_path.string() + ": " + e.what());
    }
    if (h.dtype != "f32" && h.dtype != "u8" && h.dtype != "u16")
        throw IoError("unknown dtype '" + h.dtype + "' in " + header_path.string());
    h.dims.validate();
    return h;
}

template <typename T>
Grid<T> read_volume_as(const std::filesystem::path& header_path) {
    const VolumeHeader h = read_volume_header(header_path);
    if (h.dtype != dtype_name<T>())
        throw IoError("dtype mismatch in " + header_path.string() + ": header says " + h.dtype +
                      ", expected " + dtype_name<T>());
    const std::string payload = read_text_file(payload_path(header_path));
    if (payload.size() != h.dims.count() * sizeof(T))
        throw IoError("payload size mismatch for " + header_path.string() + ": expected " +
                      std::to_string(h.dims.count() * sizeof(T)) + " bytes, got " +
                      std::to_string(payload.size()));
    Grid<T> vol(h.dims);
    vol.spacing = h.spacing;
    decode_le(payload, vol.data);
    return vol;
}

}  // namespace detail

inline ScalarVolume read_scalar_volume(const std::filesystem::path& p) {
    return detail::read_volume_as<float>(p);
}

inline LabelVolume read_label_volume(const std::filesystem::path& p) {
    // Labels are stored as u16; accept u8 files as well.
    const auto h = detail::read_volume_header(p);
    if (h.dtype == "u8") {
        const auto small = detail::read_volume_as<std::uint8_t>(p);
        LabelVolume vol(small.dims);
        vol.spacing = small.spacing;
        std::copy(small.data.begin(), small.data.end(), vol.data.begin());
        return vol;
    }
    return detail::read_volume_as<std::uint16_t>(p);
}

inline BinaryMask read_binary_mask(const std::filesystem::path& p) {
    BinaryMask mask = detail::read_volume_as<std::uint8_t>(p);
    for (const auto v : mask.data)
        if (v > 1)
            throw ValidationError("binary mask " + p.string() + " holds values outside {0,1}");
    return mask;
}

}  // namespace vesseltree
