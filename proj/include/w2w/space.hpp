#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2w/archive.hpp"
#include "w2w/digest.hpp"
#include "w2w/errors.hpp"
#include "w2w/linalg.hpp"
#include "w2w/reduction.hpp"

namespace w2w {

/// PCA latent space over flattened adapter weight vectors. Rows of `basis`
/// are the top-m principal components; eigenvalues use the 1/(N−1) convention.
struct W2WSpace {
    std::vector<float> mean;     // length D
    Matrix basis;                // m×D, row-orthonormal
    std::vector<float> eigenvalues;  // descending, length m
    std::string layout_hash;
    std::size_t corpus_size = 0;
    std::vector<std::string> corpus_ids;
    bool rank_deficient = false;  // requested m exceeded the nonzero spectrum

    std::size_t dim() const { return mean.size(); }
    std::size_t components() const { return basis.rows(); }

    std::string digest() const {
        std::uint64_t h = fnv1a64(mean.data(), mean.size() * sizeof(float));
        h = fnv1a64(basis.data().data(), basis.data().size() * sizeof(float), h);
        return to_hex(h);
    }
};

/// Auto picks the Gram trick when D > N; the explicit values exist so the two
/// algebraic routes can be checked against each other.
enum class PcaMethod { Auto, Direct, Gram };

inline W2WSpace build_space(const std::vector<WeightVector>& corpus, std::size_t m,
                            PcaMethod method = PcaMethod::Auto) {
    std::size_t n = corpus.size();
    if (n < 2) throw CorpusTooSmall("PCA needs at least 2 corpus members, got " + std::to_string(n));
    std::size_t dim = corpus.front().theta.size();
    for (const auto& wv : corpus) {
        if (wv.layout_hash != corpus.front().layout_hash || wv.theta.size() != dim)
            throw LayoutMismatch("corpus member '" + wv.adapter_id + "' has a different layout");
    }
    std::size_t m_max = std::min(n - 1, dim);
    if (m < 1 || m > m_max)
        throw DimensionMismatch("m must be in [1, " + std::to_string(m_max) + "], got " + std::to_string(m));

    W2WSpace space;
    space.layout_hash = corpus.front().layout_hash;
    space.corpus_size = n;
    for (const auto& wv : corpus) space.corpus_ids.push_back(wv.adapter_id);

    // mean and centered data, double precision throughout
    std::vector<double> mean(dim, 0.0);
    for (const auto& wv : corpus)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += double(wv.theta[j]);
    for (auto& x : mean) x /= double(n);
    std::vector<double> centered(n * dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) centered[i * dim + j] = double(corpus[i].theta[j]) - mean[j];

    std::vector<double> eigvals;                 // covariance eigenvalues, descending
    std::vector<std::vector<double>> components;  // unit rows, length dim

    bool use_gram = method == PcaMethod::Gram || (method == PcaMethod::Auto && dim > n);
    if (use_gram) {
        // Gram trick: eigendecompose the N×N matrix of centered inner products
        std::vector<double> gram(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dim; ++c) s += centered[i * dim + c] * centered[j * dim + c];
                gram[i * n + j] = s;
                gram[j * n + i] = s;
            }
        }
        auto [nu, avecs] = detail::sym_eig_desc_d(std::move(gram), n);
        for (std::size_t j = 0; j < m; ++j) {
            double val = std::max(nu[j], 0.0);
            eigvals.push_back(val / double(n - 1));
            std::vector<double> w(dim, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double a = avecs[i * n + j];
                for (std::size_t c = 0; c < dim; ++c) w[c] += a * centered[i * dim + c];
            }
            double nw = 0.0;
            for (double x : w) nw += x * x;
            nw = std::sqrt(nw);
            if (nw > 0.0)
                for (double& x : w) x /= nw;
            components.push_back(std::move(w));
        }
    } else {
        std::vector<double> cov(dim * dim, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < dim; ++a)
                for (std::size_t b = a; b < dim; ++b)
                    cov[a * dim + b] += centered[i * dim + a] * centered[i * dim + b];
        for (std::size_t a = 0; a < dim; ++a)
            for (std::size_t b = a; b < dim; ++b) {
                cov[a * dim + b] /= double(n - 1);
                cov[b * dim + a] = cov[a * dim + b];
            }
        auto [lam, vecs] = detail::sym_eig_desc_d(std::move(cov), dim);
        for (std::size_t j = 0; j < m; ++j) {
            eigvals.push_back(std::max(lam[j], 0.0));
            std::vector<double> w(dim);
            for (std::size_t c = 0; c < dim; ++c) w[c] = vecs[c * dim + j];
            components.push_back(std::move(w));
        }
    }

    // drop numerically-zero components rather than letting noise into the basis
    std::size_t m_kept = m;
    if (!eigvals.empty() && eigvals[0] > 0.0) {
        while (m_kept > 1 && eigvals[m_kept - 1] < 1e-10 * eigvals[0]) --m_kept;
    }
    if (m_kept < m) space.rank_deficient = true;

    space.mean.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) space.mean[j] = float(mean[j]);
    space.basis = Matrix(m_kept, dim);
    space.eigenvalues.resize(m_kept);
    for (std::size_t r = 0; r < m_kept; ++r) {
        space.eigenvalues[r] = float(eigvals[r]);
        // SingularTriplet sign convention: largest-|entry| coordinate positive
        std::size_t best = 0;
        for (std::size_t c = 1; c < dim; ++c)
            if (std::abs(components[r][c]) > std::abs(components[r][best])) best = c;
        double sign = components[r][best] < 0.0 ? -1.0 : 1.0;
        for (std::size_t c = 0; c < dim; ++c) space.basis(r, c) = float(sign * components[r][c]);
    }
    return space;
}

inline std::vector<float> project(const W2WSpace& space, const WeightVector& wv) {
    if (wv.layout_hash != space.layout_hash || wv.theta.size() != space.dim())
        throw LayoutMismatch("weight vector does not match the space layout");
    std::vector<float> c(space.components());
    for (std::size_t r = 0; r < space.components(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < space.dim(); ++j)
            s += double(space.basis(r, j)) * (double(wv.theta[j]) - double(space.mean[j]));
        c[r] = float(s);
    }
    return c;
}

inline WeightVector reconstruct(const W2WSpace& space, const std::vector<float>& coeffs,
                                const std::string& adapter_id = "reconstructed") {
    if (coeffs.size() != space.components())
        throw DimensionMismatch("expected " + std::to_string(space.components()) + " coefficients, got " +
                                std::to_string(coeffs.size()));
    WeightVector wv;
    wv.adapter_id = adapter_id;
    wv.layout_hash = space.layout_hash;
    wv.theta.resize(space.dim());
    for (std::size_t j = 0; j < space.dim(); ++j) {
        double s = double(space.mean[j]);
        for (std::size_t r = 0; r < space.components(); ++r)
            s += double(space.basis(r, j)) * double(coeffs[r]);
        wv.theta[j] = float(s);
    }
    return wv;
}

/// Space serialization: tensor archive with reserved names plus a JSON sidecar
/// carrying the layout and corpus ids. `base` gets ".st" / ".json" appended.
inline void save_space(const W2WSpace& space, const LayoutDescriptor& layout,
                       const std::filesystem::path& base) {
    TensorArchive a;
    a.add_f32("__mean__", {space.dim()}, space.mean);
    a.add_f32("__basis__", {space.components(), space.dim()}, space.basis.data());
    a.add_f32("__eigenvalues__", {space.components()}, space.eigenvalues);
    a.metadata["layout_hash"] = space.layout_hash;
    a.metadata["corpus_size"] = std::to_string(space.corpus_size);
    a.metadata["rank_deficient"] = space.rank_deficient ? "1" : "0";
    std::filesystem::path st = base;
    st += ".st";
    write_archive(a, st);

    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : layout.segments) segs.push_back({{"layer", s.layer}, {"d", s.d}, {"k", s.k}});
    nlohmann::json sidecar{{"layout", segs}, {"layout_hash", space.layout_hash},
                           {"corpus_ids", space.corpus_ids}};
    std::filesystem::path js = base;
    js += ".json";
    std::filesystem::path tmp = js;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoFailure("cannot write '" + tmp.string() + "'");
        out << sidecar.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, js);
}

inline std::pair<W2WSpace, LayoutDescriptor> load_space(const std::filesystem::path& base) {
    std::filesystem::path st = base;
    st += ".st";
    TensorArchive a = read_archive(st);
    W2WSpace space;
    space.mean = a.f32_values("__mean__");
    const auto& binfo = a.info("__basis__");
    space.basis = Matrix(binfo.shape.at(0), binfo.shape.at(1));
    space.basis.data() = a.f32_values("__basis__");
    space.eigenvalues = a.f32_values("__eigenvalues__");
    space.layout_hash = a.metadata.at("layout_hash");
    space.corpus_size = std::stoul(a.metadata.at("corpus_size"));
    space.rank_deficient = a.metadata.at("rank_deficient") == "1";

    std::filesystem::path js = base;
    js += ".json";
    std::ifstream in(js);
    if (!in) throw IoFailure("cannot open sidecar '" + js.string() + "'");
    nlohmann::json sidecar = nlohmann::json::parse(in);
    LayoutDescriptor layout;
    for (const auto& s : sidecar.at("layout"))
        layout.segments.push_back({s.at("layer").get<std::string>(), s.at("d").get<std::size_t>(),
                                   s.at("k").get<std::size_t>()});
    for (const auto& s : layout.segments) layout.total_dim += s.d + s.k;
    layout.hash = detail::layout_digest(layout.segments);
    for (const auto& id : sidecar.at("corpus_ids")) space.corpus_ids.push_back(id.get<std::string>());
    return {std::move(space), std::move(layout)};
}

}  // namespace w2w
