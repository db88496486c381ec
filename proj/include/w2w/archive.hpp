#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2w/errors.hpp"

namespace w2w {

/// Tensor-archive container, byte-compatible with the safetensors layout:
/// an 8-byte little-endian header length, a UTF-8 JSON header mapping tensor
/// names to {dtype, shape, data_offsets}, then the raw payload.
struct TensorInfo {
    std::string dtype;               // "F32", "F16", ...
    std::vector<std::size_t> shape;  // empty = scalar
    std::size_t begin = 0;           // byte offsets into payload
    std::size_t end = 0;
};

inline std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "F64" || dtype == "I64" || dtype == "U64") return 8;
    if (dtype == "F32" || dtype == "I32" || dtype == "U32") return 4;
    if (dtype == "F16" || dtype == "BF16" || dtype == "I16" || dtype == "U16") return 2;
    if (dtype == "I8" || dtype == "U8" || dtype == "BOOL") return 1;
    throw MalformedHeader("unknown dtype tag '" + dtype + "'");
}

struct TensorArchive {
    std::map<std::string, TensorInfo> tensors;
    std::vector<std::uint8_t> payload;
    std::map<std::string, std::string> metadata;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    const TensorInfo& info(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw MalformedHeader("no tensor named '" + name + "'");
        return it->second;
    }

    const std::uint8_t* bytes(const std::string& name) const { return payload.data() + info(name).begin; }
    std::size_t byte_size(const std::string& name) const {
        const auto& t = info(name);
        return t.end - t.begin;
    }

    /// Appends a float32 tensor. Offsets are assigned in call order; write_archive
    /// re-canonicalizes to lexicographic name order.
    void add_f32(const std::string& name, std::vector<std::size_t> shape, const std::vector<float>& values) {
        std::size_t count = 1;
        for (auto s : shape) count *= s;
        if (count != values.size()) throw ShapeMismatch("tensor '" + name + "': shape does not match value count");
        if (tensors.count(name)) throw MalformedHeader("duplicate tensor name '" + name + "'");
        TensorInfo t;
        t.dtype = "F32";
        t.shape = std::move(shape);
        t.begin = payload.size();
        t.end = t.begin + count * sizeof(float);
        payload.resize(t.end);
        std::memcpy(payload.data() + t.begin, values.data(), count * sizeof(float));
        tensors.emplace(name, std::move(t));
    }

    std::vector<float> f32_values(const std::string& name) const {
        const auto& t = info(name);
        std::vector<float> out;
        if (t.dtype == "F32") {
            out.resize((t.end - t.begin) / 4);
            std::memcpy(out.data(), payload.data() + t.begin, t.end - t.begin);
        } else if (t.dtype == "F16") {
            std::size_t n = (t.end - t.begin) / 2;
            out.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t h;
                std::memcpy(&h, payload.data() + t.begin + 2 * i, 2);
                out[i] = half_to_float(h);
            }
        } else {
            throw DtypeUnsupported("tensor '" + name + "' has dtype " + t.dtype + "; only F32/F16 supported");
        }
        return out;
    }

    static float half_to_float(std::uint16_t h) {
        std::uint32_t sign = std::uint32_t(h >> 15) << 31;
        std::uint32_t exp = (h >> 10) & 0x1f;
        std::uint32_t mant = h & 0x3ff;
        std::uint32_t bits;
        if (exp == 0) {
            if (mant == 0) {
                bits = sign;
            } else {
                // subnormal half: renormalize
                int e = -1;
                do {
                    mant <<= 1;
                    ++e;
                } while ((mant & 0x400) == 0);
                bits = sign | ((127 - 15 - e) << 23) | ((mant & 0x3ff) << 13);
            }
        } else if (exp == 31) {
            bits = sign | 0x7f800000 | (mant << 13);
        } else {
            bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
        }
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
};

namespace detail {

inline void validate_tiling(const TensorArchive& a) {
    // offsets must be ascending, non-overlapping and exactly tile the payload
    std::vector<const TensorInfo*> by_offset;
    for (const auto& [name, t] : a.tensors) {
        std::size_t count = 1;
        for (auto s : t.shape) count *= s;
        if (t.end < t.begin || t.end - t.begin != count * dtype_size(t.dtype))
            throw MalformedHeader("tensor '" + name + "': offset length disagrees with shape");
        by_offset.push_back(&t);
    }
    std::sort(by_offset.begin(), by_offset.end(),
              [](const TensorInfo* x, const TensorInfo* y) { return x->begin < y->begin; });
    std::size_t cursor = 0;
    for (const auto* t : by_offset) {
        if (t->begin != cursor) throw MalformedHeader("tensor offsets overlap or leave gaps");
        cursor = t->end;
    }
    if (cursor != a.payload.size()) throw MalformedHeader("payload length does not match declared offsets");
}

}  // namespace detail

inline TensorArchive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path.string() + "'");
    std::uint8_t len_bytes[8];
    in.read(reinterpret_cast<char*>(len_bytes), 8);
    if (!in) throw MalformedHeader("file too short for header length");
    std::uint64_t header_len = 0;
    for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
    if (header_len == 0 || header_len > (1ull << 31)) throw MalformedHeader("implausible header length");

    std::string header(header_len, '\0');
    in.read(header.data(), std::streamsize(header_len));
    if (!in) throw MalformedHeader("file too short for declared header");

    nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw MalformedHeader("header is not a JSON object");

    TensorArchive a;
    for (auto& [name, entry] : j.items()) {
        if (name == "__metadata__") {
            for (auto& [k, v] : entry.items()) a.metadata[k] = v.get<std::string>();
            continue;
        }
        if (!entry.contains("dtype") || !entry.contains("shape") || !entry.contains("data_offsets"))
            throw MalformedHeader("tensor '" + name + "': missing dtype/shape/data_offsets");
        TensorInfo t;
        t.dtype = entry["dtype"].get<std::string>();
        dtype_size(t.dtype);  // reject unknown tags early
        for (auto& s : entry["shape"]) t.shape.push_back(s.get<std::size_t>());
        t.begin = entry["data_offsets"][0].get<std::size_t>();
        t.end = entry["data_offsets"][1].get<std::size_t>();
        a.tensors.emplace(name, std::move(t));
    }

    a.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    detail::validate_tiling(a);
    return a;
}

/// Writes the archive with tensors laid out in lexicographic name order.
/// The write is atomic: a temp file is renamed into place.
inline void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
    nlohmann::json header = nlohmann::json::object();
    if (!archive.metadata.empty()) {
        nlohmann::json meta = nlohmann::json::object();
        for (const auto& [k, v] : archive.metadata) meta[k] = v;
        header["__metadata__"] = meta;
    }

    // std::map iterates lexicographically; recompute canonical offsets
    std::vector<std::uint8_t> payload;
    for (const auto& [name, t] : archive.tensors) {
        std::size_t begin = payload.size();
        std::size_t len = t.end - t.begin;
        payload.resize(begin + len);
        std::memcpy(payload.data() + begin, archive.payload.data() + t.begin, len);
        header[name] = {{"dtype", t.dtype}, {"shape", t.shape}, {"data_offsets", {begin, begin + len}}};
    }

    std::string header_str = header.dump();
    std::uint64_t header_len = header_str.size();

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoFailure("cannot open '" + tmp.string() + "' for writing");
        std::uint8_t len_bytes[8];
        for (int i = 0; i < 8; ++i) len_bytes[i] = std::uint8_t((header_len >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(len_bytes), 8);
        out.write(header_str.data(), std::streamsize(header_str.size()));
        out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
        if (!out) throw IoFailure("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace w2w
