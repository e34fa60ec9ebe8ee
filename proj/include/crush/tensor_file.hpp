#pragma once
// Bit-exact tensor container used by the CLI. Layout, all little-endian:
//   "CRSH" | version=1 | dtype=0 (float32) | ndim | reserved=0 |
//   ndim x uint32 dims | row-major float32 payload
// Writes are atomic (temp file + rename) and refuse non-finite values; that
// refusal carries its own exception type so callers can map it to a distinct
// exit code.

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "crush/common.hpp"

namespace crush {

struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

// Serialize without touching the filesystem; used by the writer and by tests.
inline std::string tensor_bytes(const Tensor& t) {
    if (t.dims.empty() || t.dims.size() > 255)
        throw std::invalid_argument("tensor_bytes: need 1..255 dims");
    for (auto d : t.dims)
        if (d == 0) throw std::invalid_argument("tensor_bytes: zero-sized dimension");
    if (t.data.size() != t.count()) throw std::invalid_argument("tensor_bytes: payload size");
    std::string out = "CRSH";
    out.push_back(1);  // version
    out.push_back(0);  // dtype float32
    out.push_back(static_cast<char>(t.dims.size()));
    out.push_back(0);  // reserved
    for (auto d : t.dims) detail::put_u32(out, d);
    for (float v : t.data) {
        if (!std::isfinite(v)) throw NonFiniteError("tensor_bytes: non-finite value");
        detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& body) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string());
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    write_text_atomic(path, tensor_bytes(t));
}

inline Tensor parse_tensor(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8 || bytes.compare(0, 4, "CRSH") != 0)
        throw std::runtime_error("parse_tensor: bad magic");
    if (p[4] != 1) throw std::runtime_error("parse_tensor: unsupported version");
    if (p[5] != 0) throw std::runtime_error("parse_tensor: unsupported dtype");
    const std::size_t ndim = p[6];
    if (p[7] != 0) throw std::runtime_error("parse_tensor: reserved byte not zero");
    if (ndim == 0 || bytes.size() < 8 + 4 * ndim)
        throw std::runtime_error("parse_tensor: truncated header");
    Tensor t;
    t.dims.resize(ndim);
    for (std::size_t i = 0; i < ndim; ++i) t.dims[i] = detail::get_u32(p + 8 + 4 * i);
    const std::size_t n = t.count();
    if (bytes.size() != 8 + 4 * ndim + 4 * n)
        throw std::runtime_error("parse_tensor: payload length mismatch");
    t.data.resize(n);
    const unsigned char* q = p + 8 + 4 * ndim;
    for (std::size_t i = 0; i < n; ++i)
        t.data[i] = std::bit_cast<float>(detail::get_u32(q + 4 * i));
    return t;
}

inline Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_tensor(bytes);
}

// Row-major bridges between the double-precision core and float32 files.
inline Tensor tensor_from_rows(const std::vector<Vec>& rows) {
    if (rows.empty()) throw std::invalid_argument("tensor_from_rows: no rows");
    const std::size_t d = rows.front().size();
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(rows.size()), static_cast<std::uint32_t>(d)};
    t.data.reserve(rows.size() * d);
    for (const auto& r : rows) {
        if (r.size() != d) throw std::invalid_argument("tensor_from_rows: ragged rows");
        for (double v : r) t.data.push_back(static_cast<float>(v));
    }
    return t;
}

inline std::vector<Vec> rows_from_tensor(const Tensor& t) {
    if (t.dims.size() != 2) throw std::runtime_error("rows_from_tensor: need a 2-D tensor");
    std::vector<Vec> rows(t.dims[0], Vec(t.dims[1]));
    for (std::size_t i = 0; i < t.dims[0]; ++i)
        for (std::size_t j = 0; j < t.dims[1]; ++j)
            rows[i][j] = static_cast<double>(t.data[i * t.dims[1] + j]);
    return rows;
}

inline Tensor tensor_from_flat(const Vec& v) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(v.size())};
    t.data.reserve(v.size());
    for (double x : v) t.data.push_back(static_cast<float>(x));
    return t;
}

}  // namespace crush
