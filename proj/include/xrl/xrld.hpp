#pragma once

// XRLD binary container.
//
//   bytes 0..3    "XRLD"
//   bytes 4..7    u32 LE version (1)
//   bytes 8..15   u64 LE header length H
//   bytes 16..    UTF-8 JSON header {"arrays": [...], "meta": {...}}
//   payload       arrays, row-major little-endian, offsets relative to the
//                 payload start, each 8-byte aligned with zero padding
//
// The header is padded with trailing spaces so the payload itself starts on an
// 8-byte boundary of the file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xrl/matrix.hpp"

namespace xrl::xrld {

inline constexpr char kMagic[4] = {'X', 'R', 'L', 'D'};
inline constexpr std::uint32_t kVersion = 1;

enum class DType { f32, i32, u8 };

std::string to_string(DType dtype);
DType dtype_from_string(const std::string& tag);  // throws VersionError
std::size_t dtype_size(DType dtype) noexcept;

struct Array {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::vector<std::byte> bytes;  // little-endian element data

    std::uint64_t element_count() const noexcept;
};

struct Container {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<Array> arrays;

    const Array* find(const std::string& name) const noexcept;
    const Array& at(const std::string& name) const;  // throws FormatError
};

std::vector<std::byte> encode(const Container& container);
Container decode(std::span<const std::byte> bytes);

// Parses only the JSON header (no payload validation); used by `info`.
nlohmann::json read_header(const std::filesystem::path& path);

void write_file(const Container& container, const std::filesystem::path& path);
Container read_file(const std::filesystem::path& path);

Array make_array(std::string name, std::span<const float> values, std::vector<std::uint64_t> shape);
Array make_array(std::string name, std::span<const std::int32_t> values, std::vector<std::uint64_t> shape);
Array make_array(std::string name, std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape);

std::vector<float> as_f32(const Array& array);
std::vector<std::int32_t> as_i32(const Array& array);
std::vector<std::uint8_t> as_u8(const Array& array);

Array make_matrix(std::string name, const Matrix<float>& m);
Matrix<float> as_matrix(const Array& array);

}  // namespace xrl::xrld
