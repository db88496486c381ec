#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "w2w/archive.hpp"
#include "w2w/errors.hpp"
#include "w2w/matrix.hpp"

namespace w2w {

/// One low-rank layer: ΔW = (alpha/r)·B·A with A r×k (down projection) and
/// B d×r (up projection).
struct LoraLayer {
    Matrix a;  // r×k
    Matrix b;  // d×r
};

struct AdapterBundle {
    std::map<std::string, LoraLayer> layers;
    float network_alpha = 0.0f;
    std::size_t rank = 0;
    std::string base_model;
    std::string adapter_id;
    std::map<std::string, std::string> metadata;  // archive metadata, preserved across save/load
};

/// Tensor naming convention for pairing A/B factors. Community exports differ;
/// these defaults match the common kohya-style naming.
struct NamingPatterns {
    std::string down_suffix = ".lora_down.weight";
    std::string up_suffix = ".lora_up.weight";
};

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline Matrix tensor_as_matrix(const TensorArchive& a, const std::string& name) {
    const auto& t = a.info(name);
    if (t.dtype != "F32" && t.dtype != "F16")
        throw DtypeUnsupported("tensor '" + name + "': dtype " + t.dtype);
    // LoRA convs show up as d×r×1×1; collapse trailing singleton dims
    std::vector<std::size_t> shape = t.shape;
    while (shape.size() > 2 && shape.back() == 1) shape.pop_back();
    if (shape.size() != 2)
        throw ShapeMismatch("tensor '" + name + "' is not a matrix");
    Matrix m(shape[0], shape[1]);
    m.data() = a.f32_values(name);
    return m;
}

}  // namespace detail

inline AdapterBundle load_adapter(const std::filesystem::path& path, const NamingPatterns& patterns = {}) {
    TensorArchive archive = read_archive(path);

    AdapterBundle bundle;
    bundle.metadata = archive.metadata;
    bundle.adapter_id = path.stem().string();
    if (auto it = archive.metadata.find("adapter_id"); it != archive.metadata.end()) bundle.adapter_id = it->second;
    if (auto it = archive.metadata.find("base_model"); it != archive.metadata.end()) bundle.base_model = it->second;

    std::map<std::string, std::pair<bool, bool>> seen;  // prefix -> (has A, has B)
    for (const auto& [name, info] : archive.tensors) {
        if (detail::ends_with(name, patterns.down_suffix)) {
            std::string prefix = name.substr(0, name.size() - patterns.down_suffix.size());
            bundle.layers[prefix].a = detail::tensor_as_matrix(archive, name);
            seen[prefix].first = true;
        } else if (detail::ends_with(name, patterns.up_suffix)) {
            std::string prefix = name.substr(0, name.size() - patterns.up_suffix.size());
            bundle.layers[prefix].b = detail::tensor_as_matrix(archive, name);
            seen[prefix].second = true;
        }
        // tensors matching neither pattern (e.g. per-layer alpha scalars) are ignored
    }
    if (bundle.layers.empty()) throw UnpairedTensor("no tensors match the A/B naming patterns");
    for (const auto& [prefix, flags] : seen) {
        if (!flags.first) throw UnpairedTensor("layer '" + prefix + "': B present without A");
        if (!flags.second) throw UnpairedTensor("layer '" + prefix + "': A present without B");
    }

    bundle.rank = bundle.layers.begin()->second.a.rows();
    for (const auto& [name, layer] : bundle.layers) {
        if (layer.a.rows() != bundle.rank || layer.b.cols() != bundle.rank)
            throw RankMismatch("layer '" + name + "': rank " + std::to_string(layer.a.rows()) +
                               "/" + std::to_string(layer.b.cols()) + " vs bundle rank " +
                               std::to_string(bundle.rank));
        if (layer.a.cols() < 1 || layer.b.rows() < 1)
            throw ShapeMismatch("layer '" + name + "': empty dimension");
    }

    if (auto it = archive.metadata.find("alpha"); it != archive.metadata.end())
        bundle.network_alpha = std::stof(it->second);
    else
        bundle.network_alpha = float(bundle.rank);  // convention: missing alpha means scale 1

    return bundle;
}

inline void save_adapter(const AdapterBundle& bundle, const std::filesystem::path& path,
                         const NamingPatterns& patterns = {}) {
    if (bundle.layers.empty()) throw EmptyBundle("refusing to save bundle with no layers");
    TensorArchive archive;
    archive.metadata = bundle.metadata;
    char alpha_buf[32];
    std::snprintf(alpha_buf, sizeof(alpha_buf), "%.9g", double(bundle.network_alpha));
    archive.metadata["alpha"] = alpha_buf;
    if (!bundle.base_model.empty()) archive.metadata["base_model"] = bundle.base_model;
    for (const auto& [name, layer] : bundle.layers) {
        archive.add_f32(name + patterns.down_suffix, {layer.a.rows(), layer.a.cols()}, layer.a.data());
        archive.add_f32(name + patterns.up_suffix, {layer.b.rows(), layer.b.cols()}, layer.b.data());
    }
    write_archive(archive, path);
}

/// Dense composition ΔW = (alpha/r)·B·A.
inline Matrix compose_delta(const LoraLayer& layer, float alpha, std::size_t r) {
    if (r == 0) throw ShapeMismatch("rank must be positive");
    if (layer.b.cols() != layer.a.rows())
        throw ShapeMismatch("B has " + std::to_string(layer.b.cols()) + " cols but A has " +
                            std::to_string(layer.a.rows()) + " rows");
    Matrix delta = matmul(layer.b, layer.a);
    double scale = double(alpha) / double(r);
    for (float& x : delta.data()) x = float(double(x) * scale);
    return delta;
}

}  // namespace w2w
