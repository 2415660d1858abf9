#include "xrl/xrld.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "xrl/errors.hpp"

namespace xrl::xrld {
namespace {

constexpr std::size_t kPrefixBytes = 16;

std::uint64_t align8(std::uint64_t n) noexcept { return (n + 7u) & ~std::uint64_t{7}; }

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu));
    }
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t at) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<std::uint64_t>(std::to_integer<unsigned>(in[at + i])) << (8 * i);
    }
    return static_cast<T>(v);
}

// Element-wise little-endian copy for 4-byte types.
template <typename T>
std::vector<std::byte> to_le_bytes(std::span<const T> values) {
    std::vector<std::byte> out(values.size() * sizeof(T));
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        if (!values.empty()) {
            std::memcpy(out.data(), values.data(), out.size());
        }
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::uint32_t raw;
            std::memcpy(&raw, &values[i], sizeof(T));
            for (std::size_t b = 0; b < sizeof(T); ++b) {
                out[i * sizeof(T) + b] = static_cast<std::byte>((raw >> (8 * b)) & 0xffu);
            }
        }
    }
    return out;
}

template <typename T>
std::vector<T> from_le_bytes(const Array& array, DType expected) {
    if (array.dtype != expected) {
        throw FormatError("array '" + array.name + "' has dtype " + to_string(array.dtype) + ", expected " +
                          to_string(expected));
    }
    std::vector<T> out(array.bytes.size() / sizeof(T));
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        if (!out.empty()) {
            std::memcpy(out.data(), array.bytes.data(), out.size() * sizeof(T));
        }
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::uint32_t raw = 0;
            for (std::size_t b = 0; b < sizeof(T); ++b) {
                raw |= static_cast<std::uint32_t>(std::to_integer<unsigned>(array.bytes[i * sizeof(T) + b])) << (8 * b);
            }
            std::memcpy(&out[i], &raw, sizeof(T));
        }
    }
    return out;
}

std::uint64_t checked_product(const std::vector<std::uint64_t>& shape) {
    std::uint64_t n = 1;
    for (auto d : shape) {
        if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
            throw CorruptionError("array shape overflows");
        }
        n *= d;
    }
    return n;
}

nlohmann::json parse_header(std::span<const std::byte> bytes, std::uint64_t& header_len) {
    if (bytes.size() < kPrefixBytes) {
        if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
            throw FormatError("bad magic: not an XRLD container");
        }
        throw CorruptionError("file shorter than the XRLD prefix");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic: not an XRLD container");
    }
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kVersion) {
        throw VersionError("unsupported XRLD version " + std::to_string(version));
    }
    header_len = get_le<std::uint64_t>(bytes, 8);
    if (header_len > bytes.size() - kPrefixBytes) {
        throw CorruptionError("header length exceeds file size");
    }
    const auto* first = reinterpret_cast<const char*>(bytes.data() + kPrefixBytes);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(first, first + header_len);
    } catch (const nlohmann::json::parse_error& e) {
        throw CorruptionError(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object() || !header.contains("arrays") || !header["arrays"].is_array()) {
        throw FormatError("header lacks an 'arrays' list");
    }
    return header;
}

std::vector<std::byte> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    if (!raw.empty()) {
        std::memcpy(out.data(), raw.data(), raw.size());
    }
    return out;
}

}  // namespace

std::string to_string(DType dtype) {
    switch (dtype) {
        case DType::f32:
            return "f32";
        case DType::i32:
            return "i32";
        case DType::u8:
            return "u8";
    }
    return "?";
}

DType dtype_from_string(const std::string& tag) {
    if (tag == "f32") return DType::f32;
    if (tag == "i32") return DType::i32;
    if (tag == "u8") return DType::u8;
    throw VersionError("unknown dtype tag '" + tag + "'");
}

std::size_t dtype_size(DType dtype) noexcept { return dtype == DType::u8 ? 1 : 4; }

std::uint64_t Array::element_count() const noexcept {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

const Array* Container::find(const std::string& name) const noexcept {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

const Array& Container::at(const std::string& name) const {
    if (const auto* a = find(name)) return *a;
    throw FormatError("container has no array named '" + name + "'");
}

std::vector<std::byte> encode(const Container& container) {
    nlohmann::json header;
    header["meta"] = container.meta;
    header["arrays"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& a : container.arrays) {
        const std::uint64_t expected = a.element_count() * dtype_size(a.dtype);
        if (expected != a.bytes.size()) {
            throw InputError("array '" + a.name + "' byte size does not match its shape");
        }
        header["arrays"].push_back({{"name", a.name},
                                    {"dtype", to_string(a.dtype)},
                                    {"shape", a.shape},
                                    {"offset", offset},
                                    {"nbytes", a.bytes.size()}});
        offset = align8(offset + a.bytes.size());
    }
    std::string text = header.dump();
    text.append(align8(kPrefixBytes + text.size()) - kPrefixBytes - text.size(), ' ');

    std::vector<std::byte> out;
    out.reserve(kPrefixBytes + text.size() + offset);
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, text.size());
    for (char c : text) out.push_back(static_cast<std::byte>(c));
    for (const auto& a : container.arrays) {
        out.insert(out.end(), a.bytes.begin(), a.bytes.end());
        out.resize(kPrefixBytes + text.size() + align8(out.size() - kPrefixBytes - text.size()), std::byte{0});
    }
    return out;
}

Container decode(std::span<const std::byte> bytes) {
    std::uint64_t header_len = 0;
    const nlohmann::json header = parse_header(bytes, header_len);
    const std::uint64_t payload_start = kPrefixBytes + header_len;
    const std::uint64_t payload_size = bytes.size() - payload_start;

    Container c;
    c.meta = header.value("meta", nlohmann::json::object());
    std::uint64_t payload_end = 0;
    try {
        for (const auto& entry : header["arrays"]) {
            Array a;
            a.name = entry.at("name").get<std::string>();
            a.dtype = dtype_from_string(entry.at("dtype").get<std::string>());
            a.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
            if (checked_product(a.shape) * dtype_size(a.dtype) != nbytes) {
                throw CorruptionError("array '" + a.name + "' nbytes disagrees with its shape");
            }
            if (offset % 8 != 0) {
                throw CorruptionError("array '" + a.name + "' offset is not 8-byte aligned");
            }
            if (offset > payload_size || nbytes > payload_size - offset) {
                throw CorruptionError("array '" + a.name + "' extends past the end of the payload");
            }
            const auto* first = bytes.data() + payload_start + offset;
            a.bytes.assign(first, first + nbytes);
            payload_end = std::max(payload_end, align8(offset + nbytes));
            c.arrays.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed array table: ") + e.what());
    }
    if (payload_end != payload_size) {
        throw CorruptionError("payload size " + std::to_string(payload_size) + " does not match header (" +
                              std::to_string(payload_end) + " bytes)");
    }
    return c;
}

nlohmann::json read_header(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    std::uint64_t header_len = 0;
    return parse_header(bytes, header_len);
}

void write_file(const Container& container, const std::filesystem::path& path) {
    const auto bytes = encode(container);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

Container read_file(const std::filesystem::path& path) { return decode(slurp(path)); }

Array make_array(std::string name, std::span<const float> values, std::vector<std::uint64_t> shape) {
    return {std::move(name), DType::f32, std::move(shape), to_le_bytes(values)};
}

Array make_array(std::string name, std::span<const std::int32_t> values, std::vector<std::uint64_t> shape) {
    return {std::move(name), DType::i32, std::move(shape), to_le_bytes(values)};
}

Array make_array(std::string name, std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape) {
    return {std::move(name), DType::u8, std::move(shape), to_le_bytes(values)};
}

std::vector<float> as_f32(const Array& array) { return from_le_bytes<float>(array, DType::f32); }
std::vector<std::int32_t> as_i32(const Array& array) { return from_le_bytes<std::int32_t>(array, DType::i32); }
std::vector<std::uint8_t> as_u8(const Array& array) { return from_le_bytes<std::uint8_t>(array, DType::u8); }

Array make_matrix(std::string name, const Matrix<float>& m) {
    return make_array(std::move(name), std::span<const float>(m.values()), {m.rows(), m.cols()});
}

Matrix<float> as_matrix(const Array& array) {
    if (array.shape.size() != 2) {
        throw FormatError("array '" + array.name + "' is not two-dimensional");
    }
    return Matrix<float>(array.shape[0], array.shape[1], as_f32(array));
}

}  // namespace xrl::xrld
