#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2w/archive.hpp"
#include "w2w/errors.hpp"
#include "w2w/matrix.hpp"

namespace w2w {

/// Embeddings keyed by item id. Vectors are unit-normalized on ingest.
struct EmbeddingTable {
    std::map<std::string, std::vector<float>> items;
    std::size_t dim = 0;
    std::string modality;  // "image" | "text"
    std::string source;

    void insert(const std::string& id, std::vector<float> v) {
        if (items.empty())
            dim = v.size();
        else if (v.size() != dim)
            throw DimensionDrift("item '" + id + "': dimension " + std::to_string(v.size()) +
                                 " vs table dimension " + std::to_string(dim));
        double n = norm2(v);
        if (n == 0.0) throw DegenerateMatrix("item '" + id + "': zero embedding");
        scale_inplace(v, 1.0 / n);
        items[id] = std::move(v);
    }
};

constexpr int kNoise = -1;

struct ClusterResult {
    std::map<std::string, int> assignment;   // item_id → cluster id, kNoise for outliers
    std::vector<std::vector<float>> means;   // unit-renormalized, indexed by cluster id
    std::vector<std::size_t> sizes;
    int representative = -1;                 // largest cluster, lowest id on ties
};

/// Density clustering in the HDBSCAN* family: mutual-reachability distances
/// from core distances (k = min_samples), a minimum spanning tree, and cluster
/// extraction at the persistence-maximizing edge-pruning scale. Components
/// below min_cluster_size at that scale are noise.
inline ClusterResult cluster_embeddings(const EmbeddingTable& table, std::size_t min_cluster_size = 10,
                                        std::size_t min_samples = 5) {
    std::size_t n = table.items.size();
    if (n < min_cluster_size)
        throw TooFewItems(std::to_string(n) + " items but min_cluster_size is " +
                          std::to_string(min_cluster_size));

    std::vector<std::string> ids;  // lexicographic: the deterministic tie rule
    ids.reserve(n);
    for (const auto& [id, v] : table.items) ids.push_back(id);

    auto dist = [&](std::size_t i, std::size_t j) {
        const auto& a = table.items.at(ids[i]);
        const auto& b = table.items.at(ids[j]);
        double s = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) {
            double e = double(a[c]) - double(b[c]);
            s += e * e;
        }
        return std::sqrt(s);
    };

    // core distance: distance to the min_samples-th nearest neighbour (self excluded)
    std::vector<double> core(n, 0.0);
    std::size_t k = std::min(min_samples, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d;
        d.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back(dist(i, j));
        std::nth_element(d.begin(), d.begin() + std::ptrdiff_t(k - 1), d.end());
        core[i] = d[k - 1];
    }
    auto mreach = [&](std::size_t i, std::size_t j) { return std::max({core[i], core[j], dist(i, j)}); };

    // Prim MST over mutual reachability
    struct Edge {
        std::size_t a, b;
        double w;
    };
    std::vector<Edge> mst;
    std::vector<bool> in_tree(n, false);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n, 0);
    in_tree[0] = true;
    for (std::size_t j = 1; j < n; ++j) {
        best[j] = mreach(0, j);
        from[j] = 0;
    }
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        for (std::size_t j = 0; j < n; ++j)
            if (!in_tree[j] && (next == n || best[j] < best[next])) next = j;
        mst.push_back({from[next], next, best[next]});
        in_tree[next] = true;
        for (std::size_t j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            double w = mreach(next, j);
            if (w < best[j]) {
                best[j] = w;
                from[j] = next;
            }
        }
    }
    std::stable_sort(mst.begin(), mst.end(), [](const Edge& x, const Edge& y) {
        if (x.w != y.w) return x.w < y.w;
        return std::minmax(x.a, x.b) < std::minmax(y.a, y.b);
    });

    // Scan prune scales: after each merged edge, record how many components
    // reach min_cluster_size and how long (in edge weight) that state persists.
    std::vector<std::size_t> parent(n), rank_uf(n, 0), size_uf(n, 1);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    std::size_t valid_now = 0;  // components of size ≥ min_cluster_size
    if (min_cluster_size <= 1) valid_now = n;
    double best_persistence = -1.0;
    std::size_t best_prefix = 0, best_count = 0;
    bool found = false;
    // state after merging edges [0, i); persists until edge i's weight
    auto consider = [&](std::size_t prefix, double persistence) {
        if (valid_now == 0) return;
        // ties prefer the coarser scale so duplicate-heavy inputs collapse
        // into one cluster instead of an arbitrary split
        bool better = !found || persistence > best_persistence ||
                      (persistence == best_persistence && prefix > best_prefix) ||
                      (persistence == best_persistence && prefix == best_prefix && valid_now > best_count);
        if (better) {
            found = true;
            best_persistence = persistence;
            best_prefix = prefix;
            best_count = valid_now;
        }
    };
    consider(0, mst.empty() ? 0.0 : mst.front().w - 0.0);
    for (std::size_t i = 0; i < mst.size(); ++i) {
        std::size_t ra = find(mst[i].a), rb = find(mst[i].b);
        if (ra != rb) {
            bool a_valid = size_uf[ra] >= min_cluster_size, b_valid = size_uf[rb] >= min_cluster_size;
            std::size_t merged = size_uf[ra] + size_uf[rb];
            if (rank_uf[ra] < rank_uf[rb]) std::swap(ra, rb);
            parent[rb] = ra;
            if (rank_uf[ra] == rank_uf[rb]) ++rank_uf[ra];
            size_uf[ra] = merged;
            valid_now -= std::size_t(a_valid) + std::size_t(b_valid);
            if (merged >= min_cluster_size) ++valid_now;
        }
        double persistence = (i + 1 < mst.size()) ? mst[i + 1].w - mst[i].w : 0.0;
        consider(i + 1, persistence);
    }
    if (!found) throw AllNoise("no component ever reaches min_cluster_size");

    // rebuild the chosen state
    std::iota(parent.begin(), parent.end(), 0);
    std::fill(rank_uf.begin(), rank_uf.end(), 0);
    std::fill(size_uf.begin(), size_uf.end(), 1);
    for (std::size_t i = 0; i < best_prefix; ++i) {
        std::size_t ra = find(mst[i].a), rb = find(mst[i].b);
        if (ra == rb) continue;
        std::size_t merged = size_uf[ra] + size_uf[rb];
        if (rank_uf[ra] < rank_uf[rb]) std::swap(ra, rb);
        parent[rb] = ra;
        if (rank_uf[ra] == rank_uf[rb]) ++rank_uf[ra];
        size_uf[ra] = merged;
    }

    // assign cluster ids in order of each component's lexicographically smallest member
    std::map<std::size_t, int> root_to_cluster;
    ClusterResult result;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = find(i);
        if (size_uf[r] < min_cluster_size) {
            result.assignment[ids[i]] = kNoise;
            continue;
        }
        auto it = root_to_cluster.find(r);
        int cid;
        if (it == root_to_cluster.end()) {
            cid = int(result.sizes.size());
            root_to_cluster.emplace(r, cid);
            result.sizes.push_back(0);
            result.means.emplace_back(table.dim, 0.0f);
        } else {
            cid = it->second;
        }
        result.assignment[ids[i]] = cid;
        result.sizes[std::size_t(cid)]++;
        const auto& v = table.items.at(ids[i]);
        for (std::size_t c = 0; c < table.dim; ++c) result.means[std::size_t(cid)][c] += v[c];
    }
    for (auto& mean : result.means) {
        double nm = norm2(mean);
        if (nm > 0.0) scale_inplace(mean, 1.0 / nm);
    }
    for (std::size_t c = 0; c < result.sizes.size(); ++c)
        if (result.representative < 0 || result.sizes[c] > result.sizes[std::size_t(result.representative)])
            result.representative = int(c);
    return result;
}

/// Top-k members of the representative cluster by cosine to its mean,
/// descending; ties broken by item id. Returns the whole cluster when it has
/// fewer than k members.
inline std::vector<std::string> select_representatives(const ClusterResult& result,
                                                       const EmbeddingTable& table, std::size_t k = 9) {
    std::vector<std::pair<double, std::string>> scored;
    const auto& mean = result.means.at(std::size_t(result.representative));
    for (const auto& [id, cid] : result.assignment) {
        if (cid != result.representative) continue;
        scored.emplace_back(dot(table.items.at(id), mean), id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(scored[i].second);
    return out;
}

/// Mean cosine between an adapter's example-image embeddings and a reference
/// embedding (a text description or a preference-cluster mean).
inline double score_adapter(const std::vector<std::vector<float>>& examples,
                            const std::vector<float>& reference) {
    if (examples.empty()) throw NoExamples("adapter has no example embeddings");
    double s = 0.0;
    for (const auto& e : examples) s += cosine(e, reference);
    return s / double(examples.size());
}

enum class Label { Positive, Negative, Excluded };

inline const char* label_name(Label l) {
    switch (l) {
        case Label::Positive: return "+1";
        case Label::Negative: return "-1";
        default: return "excluded";
    }
}

struct PreferenceLabelSet {
    std::map<std::string, Label> labels;
    double tau_gate = 0.2, tau_pos = 0.26, tau_neg = 0.24;
    std::map<std::string, double> gate_scores, pos_scores, neg_scores;
    std::string user_id;
};

/// Threshold labeling. Gate first, then the ambiguity rule (both scores above
/// their own thresholds → excluded), then +1 / −1 / excluded.
inline PreferenceLabelSet label_corpus(const std::map<std::string, double>& gate,
                                       const std::map<std::string, double>& pos,
                                       const std::map<std::string, double>& neg,
                                       double tau_gate = 0.2, double tau_pos = 0.26, double tau_neg = 0.24,
                                       const std::string& user_id = "") {
    auto same_keys = [](const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
        if (a.size() != b.size()) return false;
        auto ia = a.begin();
        for (auto ib = b.begin(); ib != b.end(); ++ia, ++ib)
            if (ia->first != ib->first) return false;
        return true;
    };
    if (!same_keys(gate, pos) || !same_keys(gate, neg))
        throw IdSetMismatch("gate/pos/neg score maps cover different adapter ids");

    PreferenceLabelSet set;
    set.tau_gate = tau_gate;
    set.tau_pos = tau_pos;
    set.tau_neg = tau_neg;
    set.gate_scores = gate;
    set.pos_scores = pos;
    set.neg_scores = neg;
    set.user_id = user_id;
    for (const auto& [id, g] : gate) {
        double p = pos.at(id), q = neg.at(id);
        Label l = Label::Excluded;
        if (g >= tau_gate) {
            if (p >= tau_pos && q >= tau_neg)
                l = Label::Excluded;  // high in both: ambiguous
            else if (p >= tau_pos)
                l = Label::Positive;
            else if (q >= tau_neg)
                l = Label::Negative;
        }
        set.labels[id] = l;
    }
    return set;
}

/// Per-user fallback when no absolute thresholds exist: the q-th upper and
/// lower quantiles of a score distribution.
inline std::pair<double, double> quantile_thresholds(const std::map<std::string, double>& scores,
                                                     double q = 0.2) {
    if (scores.empty()) throw NoExamples("empty score map");
    std::vector<double> v;
    for (const auto& [id, s] : scores) v.push_back(s);
    std::sort(v.begin(), v.end());
    auto at_quantile = [&](double frac) {
        double pos = frac * double(v.size() - 1);
        std::size_t lo = std::size_t(pos);
        std::size_t hi = std::min(lo + 1, v.size() - 1);
        double t = pos - double(lo);
        return v[lo] * (1.0 - t) + v[hi] * t;
    };
    return {at_quantile(1.0 - q), at_quantile(q)};  // (τ_pos, τ_neg)
}

// --- embedding table I/O: JSON lines {"id": ..., "v": [...]} ---

inline EmbeddingTable read_embedding_table(const std::filesystem::path& path,
                                           const std::string& modality = "image") {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open embedding table '" + path.string() + "'");
    EmbeddingTable t;
    t.modality = modality;
    t.source = path.string();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoFailure("bad JSON line in '" + path.string() + "'");
        std::vector<float> v;
        for (const auto& x : j.at("v")) v.push_back(x.get<float>());
        t.insert(j.at("id").get<std::string>(), std::move(v));
    }
    return t;
}

inline void write_embedding_table(const EmbeddingTable& t, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoFailure("cannot write '" + tmp.string() + "'");
        for (const auto& [id, v] : t.items) {
            nlohmann::json j{{"id", id}, {"v", v}};
            out << j.dump() << "\n";
        }
    }
    std::filesystem::rename(tmp, path);
}

/// Binary cache of an embedding table in the tensor-archive format.
inline void write_embedding_cache(const EmbeddingTable& t, const std::filesystem::path& path) {
    TensorArchive a;
    for (const auto& [id, v] : t.items) a.add_f32(id, {v.size()}, v);
    a.metadata["modality"] = t.modality;
    write_archive(a, path);
}

inline EmbeddingTable read_embedding_cache(const std::filesystem::path& path) {
    TensorArchive a = read_archive(path);
    EmbeddingTable t;
    if (auto it = a.metadata.find("modality"); it != a.metadata.end()) t.modality = it->second;
    t.source = path.string();
    for (const auto& [name, info] : a.tensors) t.insert(name, a.f32_values(name));
    return t;
}

}  // namespace w2w
