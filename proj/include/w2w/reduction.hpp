#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2w/adapter.hpp"
#include "w2w/digest.hpp"
#include "w2w/errors.hpp"
#include "w2w/linalg.hpp"

namespace w2w {

/// Canonical flattening order: (layer, d, k) segments sorted by layer name.
/// Each segment occupies d+k entries of the flattened vector.
struct LayoutDescriptor {
    struct Segment {
        std::string layer;
        std::size_t d = 0;  // rows of ΔW (u length)
        std::size_t k = 0;  // cols of ΔW (v length)
    };
    std::vector<Segment> segments;
    std::size_t total_dim = 0;
    std::string hash;
};

struct ReducedAdapter {
    std::string adapter_id;
    std::map<std::string, SingularTriplet> triplets;  // σ of composed ΔW, alpha/r included
    std::string layout_hash;
};

struct WeightVector {
    std::vector<float> theta;
    std::string adapter_id;
    std::string layout_hash;
};

struct ManifestEntry {
    std::string adapter_id;
    std::string path;
    std::size_t rank = 0;
    std::string base_model;
    std::vector<std::string> tags;
};

/// A pattern matches a layer name when every '+'-separated token is a
/// substring; e.g. "attn+to_v" matches "...attn2.to_v...".
inline bool layer_matches(const std::string& layer_name, const std::string& pattern) {
    std::size_t start = 0;
    while (start <= pattern.size()) {
        std::size_t sep = pattern.find('+', start);
        std::string token = pattern.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
        if (!token.empty() && layer_name.find(token) == std::string::npos) return false;
        if (sep == std::string::npos) break;
        start = sep + 1;
    }
    return true;
}

inline bool layer_matches_any(const std::string& layer_name, const std::vector<std::string>& patterns) {
    if (patterns.empty()) return true;
    for (const auto& p : patterns)
        if (layer_matches(layer_name, p)) return true;
    return false;
}

/// Layer-selection defaults mirroring the two studied reductions: feed-forward
/// layers and attention value projections.
inline std::vector<std::string> default_layer_patterns() { return {"ff", "attn+to_v"}; }

inline std::vector<ManifestEntry> filter_corpus(const std::vector<ManifestEntry>& manifest,
                                                std::optional<std::size_t> rank = std::nullopt,
                                                std::optional<std::string> base_model = std::nullopt) {
    std::vector<ManifestEntry> out;
    for (const auto& e : manifest) {
        if (rank && e.rank != *rank) continue;
        if (base_model && e.base_model != *base_model) continue;
        out.push_back(e);
    }
    if (out.empty()) throw EmptySelection("no adapters satisfy the given filters");
    return out;
}

namespace detail {

inline std::string layout_digest(const std::vector<LayoutDescriptor::Segment>& segments) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& s : segments) {
        h = fnv1a64(s.layer, h);
        std::uint64_t dims[2] = {s.d, s.k};
        h = fnv1a64(dims, sizeof(dims), h);
    }
    return to_hex(h);
}

inline std::vector<LayoutDescriptor::Segment> segments_of(const ReducedAdapter& r) {
    std::vector<LayoutDescriptor::Segment> segs;
    for (const auto& [name, t] : r.triplets) segs.push_back({name, t.u.size(), t.v.size()});
    return segs;  // std::map iteration is already lexicographic
}

}  // namespace detail

/// Rank-1 reduction of every layer matching the patterns. The SVD runs on the
/// factored form, applying A then B, so ΔW is never materialized.
inline ReducedAdapter reduce_adapter(const AdapterBundle& bundle,
                                     const std::vector<std::string>& layer_patterns = {},
                                     double tol = 1e-7, std::size_t max_iter = 10000,
                                     std::uint64_t seed = 0) {
    ReducedAdapter out;
    out.adapter_id = bundle.adapter_id;
    double scale = double(bundle.network_alpha) / double(bundle.rank);
    for (const auto& [name, layer] : bundle.layers) {
        if (!layer_matches_any(name, layer_patterns)) continue;
        try {
            out.triplets[name] = top1_svd_factored(layer.a, layer.b, scale, tol, max_iter, seed);
        } catch (const SvdNotConverged& e) {
            throw SvdNotConverged("layer '" + name + "': " + e.what(), e.best);
        }
    }
    if (out.triplets.empty()) throw NoMatchingLayers("no layers match the given patterns");
    out.layout_hash = detail::layout_digest(detail::segments_of(out));
    return out;
}

inline LayoutDescriptor make_layout(const std::vector<ReducedAdapter>& corpus) {
    if (corpus.empty()) throw EmptySelection("cannot build a layout from an empty corpus");
    LayoutDescriptor layout;
    layout.segments = detail::segments_of(corpus.front());
    for (std::size_t i = 1; i < corpus.size(); ++i) {
        if (corpus[i].layout_hash != corpus.front().layout_hash) {
            std::set<std::string> a, b;
            for (const auto& s : layout.segments) a.insert(s.layer);
            for (const auto& [name, t] : corpus[i].triplets) b.insert(name);
            std::vector<std::string> diff;
            std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
            std::ostringstream msg;
            msg << "adapter '" << corpus[i].adapter_id << "' disagrees with '" << corpus.front().adapter_id
                << "' on layer set; symmetric difference:";
            for (const auto& l : diff) msg << " " << l;
            if (diff.empty()) msg << " (same layers, differing shapes)";
            throw HeterogeneousCorpus(msg.str());
        }
    }
    for (const auto& s : layout.segments) layout.total_dim += s.d + s.k;
    layout.hash = detail::layout_digest(layout.segments);
    return layout;
}

/// Flattens to θ with per-layer segment [√σ·u ; √σ·v].
inline WeightVector flatten(const ReducedAdapter& reduced, const LayoutDescriptor& layout) {
    if (reduced.layout_hash != layout.hash)
        throw LayoutMismatch("adapter '" + reduced.adapter_id + "' was reduced under a different layout");
    WeightVector wv;
    wv.adapter_id = reduced.adapter_id;
    wv.layout_hash = layout.hash;
    wv.theta.reserve(layout.total_dim);
    for (const auto& seg : layout.segments) {
        const SingularTriplet& t = reduced.triplets.at(seg.layer);
        float s = std::sqrt(t.sigma);
        for (float x : t.u) wv.theta.push_back(s * x);
        for (float x : t.v) wv.theta.push_back(s * x);
    }
    return wv;
}

inline ReducedAdapter unflatten(const WeightVector& wv, const LayoutDescriptor& layout) {
    if (wv.theta.size() != layout.total_dim)
        throw LayoutMismatch("theta length " + std::to_string(wv.theta.size()) + " vs layout D " +
                             std::to_string(layout.total_dim));
    ReducedAdapter out;
    out.adapter_id = wv.adapter_id;
    out.layout_hash = layout.hash;
    std::size_t pos = 0;
    for (const auto& seg : layout.segments) {
        std::vector<float> a(wv.theta.begin() + pos, wv.theta.begin() + pos + seg.d);
        std::vector<float> b(wv.theta.begin() + pos + seg.d, wv.theta.begin() + pos + seg.d + seg.k);
        pos += seg.d + seg.k;
        double na = norm2(a), nb = norm2(b);
        SingularTriplet t;
        if (na < 1e-12 || nb < 1e-12) {
            t.sigma = 0.0f;
            t.u.assign(seg.d, 0.0f);
            t.u[0] = 1.0f;
            t.v.assign(seg.k, 0.0f);
            t.v[0] = 1.0f;
        } else {
            t.sigma = float(na * nb);
            t.u = a;
            scale_inplace(t.u, 1.0 / na);
            t.v = b;
            scale_inplace(t.v, 1.0 / nb);
            detail::apply_sign_convention(t.u, t.v);
        }
        out.triplets[seg.layer] = std::move(t);
    }
    return out;
}

/// Realizes a reduced adapter as a rank-1 LoRA bundle: B' = √σ·u, A' = √σ·vᵀ,
/// alpha = r = 1, so composition reproduces σ·u·vᵀ.
inline AdapterBundle export_rank1(const ReducedAdapter& reduced) {
    AdapterBundle bundle;
    bundle.adapter_id = reduced.adapter_id;
    bundle.rank = 1;
    bundle.network_alpha = 1.0f;
    bundle.metadata["adapter_id"] = reduced.adapter_id;
    for (const auto& [name, t] : reduced.triplets) {
        float s = std::sqrt(t.sigma);
        LoraLayer layer;
        layer.a = Matrix(1, t.v.size());
        for (std::size_t j = 0; j < t.v.size(); ++j) layer.a(0, j) = s * t.v[j];
        layer.b = Matrix(t.u.size(), 1);
        for (std::size_t i = 0; i < t.u.size(); ++i) layer.b(i, 0) = s * t.u[i];
        bundle.layers[name] = std::move(layer);
    }
    return bundle;
}

// --- corpus manifest (JSON lines) ---

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open manifest '" + path.string() + "'");
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoFailure("manifest '" + path.string() + "': bad JSON line");
        ManifestEntry e;
        e.adapter_id = j.at("adapter_id").get<std::string>();
        e.path = j.at("path").get<std::string>();
        e.rank = j.value("rank", std::size_t(0));
        e.base_model = j.value("base_model", std::string());
        if (j.contains("tags"))
            for (const auto& t : j["tags"]) e.tags.push_back(t.get<std::string>());
        out.push_back(std::move(e));
    }
    return out;
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoFailure("cannot open '" + tmp.string() + "' for writing");
        for (const auto& e : entries) {
            nlohmann::json j{{"adapter_id", e.adapter_id}, {"path", e.path}, {"rank", e.rank},
                             {"base_model", e.base_model}, {"tags", e.tags}};
            out << j.dump() << "\n";
        }
    }
    std::filesystem::rename(tmp, path);
}

// --- reduced-corpus serialization (one archive of θ vectors + layout metadata) ---

inline void write_weight_vectors(const std::vector<WeightVector>& corpus, const LayoutDescriptor& layout,
                                 const std::filesystem::path& path) {
    TensorArchive a;
    for (const auto& wv : corpus) a.add_f32(wv.adapter_id, {wv.theta.size()}, wv.theta);
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : layout.segments) segs.push_back({{"layer", s.layer}, {"d", s.d}, {"k", s.k}});
    a.metadata["layout"] = segs.dump();
    a.metadata["layout_hash"] = layout.hash;
    write_archive(a, path);
}

inline std::pair<std::vector<WeightVector>, LayoutDescriptor> read_weight_vectors(
    const std::filesystem::path& path) {
    TensorArchive a = read_archive(path);
    LayoutDescriptor layout;
    auto it = a.metadata.find("layout");
    if (it == a.metadata.end()) throw MalformedHeader("weight-vector archive lacks layout metadata");
    for (const auto& s : nlohmann::json::parse(it->second))
        layout.segments.push_back({s.at("layer").get<std::string>(), s.at("d").get<std::size_t>(),
                                   s.at("k").get<std::size_t>()});
    for (const auto& s : layout.segments) layout.total_dim += s.d + s.k;
    layout.hash = detail::layout_digest(layout.segments);
    std::vector<WeightVector> corpus;
    for (const auto& [name, info] : a.tensors) {
        WeightVector wv;
        wv.adapter_id = name;
        wv.theta = a.f32_values(name);
        wv.layout_hash = layout.hash;
        if (wv.theta.size() != layout.total_dim)
            throw LayoutMismatch("vector '" + name + "' does not match the stored layout");
        corpus.push_back(std::move(wv));
    }
    return {std::move(corpus), std::move(layout)};
}

}  // namespace w2w
