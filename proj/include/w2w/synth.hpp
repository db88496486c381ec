#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2w/direction.hpp"
#include "w2w/errors.hpp"
#include "w2w/preference.hpp"
#include "w2w/reduction.hpp"
#include "w2w/rng.hpp"
#include "w2w/space.hpp"

namespace w2w {

/// Planted-structure corpus generator. Every draw comes from the explicit
/// seed, so corpora are byte-identical across runs and platforms.
struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::size_t layer_count = 8;
    std::size_t layer_d = 16;
    std::size_t layer_k = 16;
    std::size_t corpus_size = 200;   // N
    std::size_t m_true = 5;
    double scale = 1.0;              // latent coefficient stddev
    double separation = 2.0;         // class shift s along the planted direction
    double noise = 0.0;              // η
};

struct GroundTruth {
    std::vector<float> mu_star;   // length D
    Matrix basis;                 // m_true×D, row-orthonormal
    std::vector<float> g_coeff;   // unit, length m_true
    std::vector<float> g_full;    // unit, length D
};

struct SyntheticCorpus {
    std::vector<WeightVector> corpus;
    std::vector<int> labels;  // ±1, aligned with corpus
    GroundTruth truth;
    LayoutDescriptor layout;
};

/// θ_i = μ* + B*ᵀc_i + η·ε_i with Gaussian c_i; labels by sign⟨c_i, g⟩ and
/// class means shifted ±(s/2)·g. The planted basis is built from per-layer
/// balanced factor pairs, so noise-free corpus members survive the
/// unflatten → export → load → reduce → flatten round trip exactly.
inline SyntheticCorpus gen_corpus(const SyntheticSpec& spec) {
    std::size_t L = spec.layer_count;
    if (L < 1 || spec.layer_d < 1 || spec.layer_k < 1) throw InvalidSpec("layer dimensions must be positive");
    if (spec.m_true < 1 || spec.m_true > L)
        throw InvalidSpec("m_true must be in [1, layer_count] for the balanced planted basis");
    if (spec.corpus_size < 2 || spec.m_true > spec.corpus_size - 1)
        throw InvalidSpec("corpus_size must exceed m_true");
    if (spec.scale <= 0.0 || spec.separation < 0.0 || spec.noise < 0.0)
        throw InvalidSpec("scale must be positive; separation and noise non-negative");

    Rng rng(spec.seed);
    SyntheticCorpus out;

    char name[32];
    for (std::size_t l = 0; l < L; ++l) {
        std::snprintf(name, sizeof(name), "layer_%03zu", l);
        out.layout.segments.push_back({name, spec.layer_d, spec.layer_k});
    }
    for (const auto& s : out.layout.segments) out.layout.total_dim += s.d + s.k;
    out.layout.hash = detail::layout_digest(out.layout.segments);
    std::size_t dim = out.layout.total_dim;

    // per-layer unit factor pair; e_l = [û_l ; v̂_l]/√2 are orthonormal in R^D
    std::vector<std::vector<double>> e(L, std::vector<double>(dim, 0.0));
    std::size_t offset = 0;
    for (std::size_t l = 0; l < L; ++l) {
        auto unit = [&](std::size_t len) {
            std::vector<double> v(len);
            double n = 0.0;
            for (auto& x : v) {
                x = rng.gaussian();
                n += x * x;
            }
            n = std::sqrt(n);
            for (auto& x : v) x /= n;
            return v;
        };
        auto u_hat = unit(spec.layer_d);
        auto v_hat = unit(spec.layer_k);
        // match the SVD sign convention (largest-|u| entry positive) so that
        // flatten/unflatten round trips leave these segments untouched
        std::size_t big = 0;
        for (std::size_t i = 1; i < u_hat.size(); ++i)
            if (std::abs(u_hat[i]) > std::abs(u_hat[big])) big = i;
        if (u_hat[big] < 0.0) {
            for (auto& x : u_hat) x = -x;
            for (auto& x : v_hat) x = -x;
        }
        const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
        for (std::size_t i = 0; i < spec.layer_d; ++i) e[l][offset + i] = u_hat[i] * inv_sqrt2;
        for (std::size_t i = 0; i < spec.layer_k; ++i) e[l][offset + spec.layer_d + i] = v_hat[i] * inv_sqrt2;
        offset += spec.layer_d + spec.layer_k;
    }

    // orthonormal columns P (L×m_true) via Gram-Schmidt
    std::vector<std::vector<double>> p(spec.m_true, std::vector<double>(L));
    for (std::size_t j = 0; j < spec.m_true; ++j) {
        for (auto& x : p[j]) x = rng.gaussian();
        for (std::size_t prev = 0; prev < j; ++prev) {
            double d = 0.0;
            for (std::size_t l = 0; l < L; ++l) d += p[j][l] * p[prev][l];
            for (std::size_t l = 0; l < L; ++l) p[j][l] -= d * p[prev][l];
        }
        double n = 0.0;
        for (double x : p[j]) n += x * x;
        n = std::sqrt(n);
        if (n < 1e-9) throw InvalidSpec("degenerate planted basis draw");
        for (auto& x : p[j]) x /= n;
    }

    std::vector<double> g(spec.m_true);
    {
        double n = 0.0;
        for (auto& x : g) {
            x = rng.gaussian();
            n += x * x;
        }
        n = std::sqrt(n);
        for (auto& x : g) x /= n;
    }

    // layer coefficient offset keeps every layer's factor scale positive
    double tau = 6.0 * spec.scale + spec.separation;

    out.truth.mu_star.assign(dim, 0.0f);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < dim; ++c)
            out.truth.mu_star[c] += float(tau * e[l][c]);

    out.truth.basis = Matrix(spec.m_true, dim);
    for (std::size_t j = 0; j < spec.m_true; ++j) {
        std::vector<double> row(dim, 0.0);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t c = 0; c < dim; ++c) row[c] += p[j][l] * e[l][c];
        for (std::size_t c = 0; c < dim; ++c) out.truth.basis(j, c) = float(row[c]);
    }
    out.truth.g_coeff.resize(spec.m_true);
    for (std::size_t j = 0; j < spec.m_true; ++j) out.truth.g_coeff[j] = float(g[j]);
    out.truth.g_full = matvec_t(out.truth.basis, out.truth.g_coeff);
    {
        double n = norm2(out.truth.g_full);
        scale_inplace(out.truth.g_full, 1.0 / n);
    }

    for (std::size_t i = 0; i < spec.corpus_size; ++i) {
        std::vector<double> z(spec.m_true);
        for (auto& x : z) x = rng.gaussian() * spec.scale;
        double along = 0.0;
        for (std::size_t j = 0; j < spec.m_true; ++j) along += z[j] * g[j];
        int y = along >= 0.0 ? 1 : -1;
        std::vector<double> c(spec.m_true);
        for (std::size_t j = 0; j < spec.m_true; ++j) c[j] = z[j] + double(y) * 0.5 * spec.separation * g[j];

        std::vector<double> t(L, tau);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t j = 0; j < spec.m_true; ++j) t[l] += p[j][l] * c[j];

        WeightVector wv;
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%05zu", i);
        wv.adapter_id = id;
        wv.layout_hash = out.layout.hash;
        wv.theta.resize(dim);
        for (std::size_t col = 0; col < dim; ++col) {
            double s = 0.0;
            for (std::size_t l = 0; l < L; ++l) s += t[l] * e[l][col];
            wv.theta[col] = float(s);
        }
        if (spec.noise > 0.0)
            for (std::size_t col = 0; col < dim; ++col)
                wv.theta[col] = float(double(wv.theta[col]) + spec.noise * rng.gaussian());
        out.corpus.push_back(std::move(wv));
        out.labels.push_back(y);
    }
    return out;
}

/// Planted ±1 labels packaged for train_direction.
inline PreferenceLabelSet synthetic_labels(const SyntheticCorpus& synth) {
    PreferenceLabelSet set;
    set.user_id = "synthetic";
    for (std::size_t i = 0; i < synth.corpus.size(); ++i) {
        set.labels[synth.corpus[i].adapter_id] =
            synth.labels[i] > 0 ? Label::Positive : Label::Negative;
    }
    return set;
}

struct RecoveryReport {
    double max_principal_angle = 0.0;  // radians, planted vs recovered basis
    double direction_cosine = 0.0;     // |cos(v_full, planted g_full)|
    double holdout_accuracy = 0.0;
    double reconstruction_rmse = 0.0;

    nlohmann::json to_json() const {
        return {{"max_principal_angle_rad", max_principal_angle},
                {"direction_cosine", direction_cosine},
                {"holdout_accuracy", holdout_accuracy},
                {"reconstruction_rmse", reconstruction_rmse}};
    }
};

inline RecoveryReport recovery_report(const W2WSpace& space, const EditDirection& dir,
                                      const SyntheticCorpus& synth) {
    RecoveryReport rep;
    std::size_t m_true = synth.truth.basis.rows();
    Matrix recovered(std::min<std::size_t>(m_true, space.components()), space.dim());
    for (std::size_t r = 0; r < recovered.rows(); ++r)
        for (std::size_t c = 0; c < space.dim(); ++c) recovered(r, c) = space.basis(r, c);
    auto angles = principal_angles(synth.truth.basis, recovered);
    rep.max_principal_angle = angles.empty() ? 0.0 : angles.back();
    rep.direction_cosine = std::abs(cosine(dir.v_full, synth.truth.g_full));
    rep.holdout_accuracy = dir.metrics.holdout_accuracy;

    double sq = 0.0;
    for (const auto& wv : synth.corpus) {
        WeightVector back = reconstruct(space, project(space, wv), wv.adapter_id);
        for (std::size_t j = 0; j < wv.theta.size(); ++j) {
            double e = double(wv.theta[j]) - double(back.theta[j]);
            sq += e * e;
        }
    }
    rep.reconstruction_rmse = std::sqrt(sq / (double(synth.corpus.size()) * double(space.dim())));
    return rep;
}

/// Descending cosine to the reference; ties by item id.
inline std::vector<std::pair<std::string, double>> rank_by_similarity(const EmbeddingTable& candidates,
                                                                      const std::vector<float>& reference) {
    if (candidates.items.empty()) throw NoExamples("no candidates to rank");
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [id, v] : candidates.items) out.emplace_back(id, cosine(v, reference));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

/// Mean ± std of per-item cosines between a base table and two comparison
/// tables (full-rank and rank-1 reduced generations of the same prompts).
struct FidelityReport {
    double full_mean = 0.0, full_std = 0.0;
    double rank1_mean = 0.0, rank1_std = 0.0;
    std::size_t count = 0;

    nlohmann::json to_json() const {
        return {{"base_vs_full", {{"mean", full_mean}, {"std", full_std}}},
                {"base_vs_rank1", {{"mean", rank1_mean}, {"std", rank1_std}}},
                {"count", count}};
    }
};

inline FidelityReport fidelity_report(const EmbeddingTable& base, const EmbeddingTable& full,
                                      const EmbeddingTable& rank1) {
    auto ids_of = [](const EmbeddingTable& t) {
        std::vector<std::string> ids;
        for (const auto& [id, v] : t.items) ids.push_back(id);
        return ids;
    };
    if (ids_of(base) != ids_of(full) || ids_of(base) != ids_of(rank1))
        throw IdSetMismatch("fidelity tables must share the same id set");
    if (base.items.empty()) throw NoExamples("empty fidelity tables");

    auto stats = [&](const EmbeddingTable& other, double& mean, double& stddev) {
        std::vector<double> cos;
        for (const auto& [id, v] : base.items) cos.push_back(cosine(v, other.items.at(id)));
        double m = 0.0;
        for (double c : cos) m += c;
        m /= double(cos.size());
        double var = 0.0;
        for (double c : cos) var += (c - m) * (c - m);
        mean = m;
        stddev = std::sqrt(var / double(cos.size()));
    };
    FidelityReport rep;
    rep.count = base.items.size();
    stats(full, rep.full_mean, rep.full_std);
    stats(rank1, rep.rank1_mean, rep.rank1_std);
    return rep;
}

}  // namespace w2w
