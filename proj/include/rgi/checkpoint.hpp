#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "rgi/error.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

// Flat binary parameter container:
//   "RGI1" | u64 matrix count | repeated { u32 name length | name bytes |
//   u64 rows | u64 cols | rows*cols float64, row-major }
// All integers and doubles little-endian. Matrices keep their write order.
using NamedMatrices = std::vector<std::pair<std::string, Tensor<double>>>;

namespace detail {

template <typename U>
void write_le(std::ofstream& out, U v) {
    // Library targets little-endian hosts; bytes are written as stored.
    out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_le(std::ifstream& in) {
    U v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (!in) throw CheckpointError("truncated checkpoint");
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const NamedMatrices& mats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out.write("RGI1", 4);
    detail::write_le<uint64_t>(out, mats.size());
    for (const auto& [name, m] : mats) {
        detail::write_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le<uint64_t>(out, static_cast<uint64_t>(m.rows()));
        detail::write_le<uint64_t>(out, static_cast<uint64_t>(m.cols()));
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw CheckpointError("write failed: " + path);
}

inline NamedMatrices load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RGI1", 4) != 0) {
        throw CheckpointError("bad checkpoint header: " + path);
    }
    const uint64_t count = detail::read_le<uint64_t>(in);
    NamedMatrices mats;
    mats.reserve(count);
    for (uint64_t k = 0; k < count; ++k) {
        const uint32_t name_len = detail::read_le<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const uint64_t rows = detail::read_le<uint64_t>(in);
        const uint64_t cols = detail::read_le<uint64_t>(in);
        std::vector<double> vals(rows * cols);
        in.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
        if (!in) throw CheckpointError("truncated checkpoint: " + path);
        mats.emplace_back(std::move(name), Tensor<double>(static_cast<int64_t>(rows),
                                                          static_cast<int64_t>(cols),
                                                          std::move(vals)));
    }
    return mats;
}

}  // namespace rgi
