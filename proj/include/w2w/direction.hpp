#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2w/digest.hpp"
#include "w2w/errors.hpp"
#include "w2w/preference.hpp"
#include "w2w/reduction.hpp"
#include "w2w/space.hpp"

namespace w2w {

struct TrainMetrics {
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    double margin = 0.0;  // min signed margin on the training split, post-normalization
    bool converged = false;
    std::size_t iterations = 0;
};

/// Unit normal of a preference hyperplane in PCA coefficient space, with its
/// image in full weight space. θ_edit = θ + α·v_full.
struct EditDirection {
    std::vector<float> v_coeff;  // length m, unit
    std::vector<float> v_full;   // length D = Wᵀ·v_coeff, unit
    double bias = 0.0;
    TrainMetrics metrics;
    std::string label_provenance;
    std::string layout_hash;
    std::string space_digest;

    double score(const std::vector<float>& coeffs) const {
        return dot(v_coeff, coeffs) + bias;
    }
};

/// Builds a direction from an explicit coefficient-space normal (used for
/// planted synthetic directions and for loading).
inline EditDirection direction_from_coeff(const W2WSpace& space, std::vector<float> v_coeff, double bias) {
    if (v_coeff.size() != space.components())
        throw DimensionMismatch("direction has " + std::to_string(v_coeff.size()) +
                                " coefficients, space has " + std::to_string(space.components()));
    EditDirection dir;
    double n = norm2(v_coeff);
    if (n == 0.0) throw DegenerateMatrix("zero direction");
    scale_inplace(v_coeff, 1.0 / n);
    dir.bias = bias / n;
    dir.v_coeff = std::move(v_coeff);
    dir.v_full = matvec_t(space.basis, dir.v_coeff);
    double nf = norm2(dir.v_full);
    if (nf > 0.0) scale_inplace(dir.v_full, 1.0 / nf);
    dir.layout_hash = space.layout_hash;
    dir.space_digest = space.digest();
    return dir;
}

/// Logistic regression on PCA coefficients: full-batch gradient descent with
/// backtracking line search, L2 penalty λ_reg, stopping at gradient norm 1e-6
/// or 10000 iterations. The weight vector is unit-normalized afterwards and
/// oriented so the positive-class mean scores higher.
inline EditDirection train_direction(const W2WSpace& space, const PreferenceLabelSet& labels,
                                     const std::vector<WeightVector>& corpus, double lambda_reg = 1e-3,
                                     std::uint64_t seed = 0) {
    std::vector<std::vector<float>> feats;
    std::vector<int> ys;
    std::vector<std::string> ex_ids;
    for (const auto& wv : corpus) {
        auto it = labels.labels.find(wv.adapter_id);
        if (it == labels.labels.end() || it->second == Label::Excluded) continue;
        feats.push_back(project(space, wv));
        ys.push_back(it->second == Label::Positive ? 1 : -1);
        ex_ids.push_back(wv.adapter_id);
    }
    std::size_t n_pos = std::size_t(std::count(ys.begin(), ys.end(), 1));
    std::size_t n_neg = ys.size() - n_pos;
    if (n_pos < 2 || n_neg < 2)
        throw SingleClass("need at least 2 examples per class, got +" + std::to_string(n_pos) + "/-" +
                          std::to_string(n_neg));

    // 80/20 stratified held-out split. Each class shuffles with a seed mixed
    // from its member ids, so the split survives a global label flip intact.
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < ys.size(); ++i) (ys[i] == 1 ? pos_idx : neg_idx).push_back(i);
    std::vector<std::size_t> train_idx, hold_idx;
    auto split = [&](std::vector<std::size_t>& idx) {
        std::uint64_t class_seed = seed;
        for (std::size_t i : idx) class_seed = fnv1a64(ex_ids[i], class_seed);
        std::mt19937_64 gen(class_seed);
        std::shuffle(idx.begin(), idx.end(), gen);
        std::size_t n_train = std::max<std::size_t>(1, idx.size() * 4 / 5);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? train_idx : hold_idx).push_back(idx[i]);
    };
    split(pos_idx);
    split(neg_idx);

    std::size_t m = feats.front().size();
    std::vector<double> w(m, 0.0);
    double b = 0.0;

    auto loss_grad = [&](const std::vector<double>& wv, double bv, std::vector<double>& gw, double& gb) {
        double loss = 0.0;
        gw.assign(m, 0.0);
        gb = 0.0;
        for (std::size_t t : train_idx) {
            double z = bv;
            for (std::size_t j = 0; j < m; ++j) z += wv[j] * double(feats[t][j]);
            double yz = double(ys[t]) * z;
            // numerically stable log(1+exp(-yz))
            loss += (yz > 0) ? std::log1p(std::exp(-yz)) : -yz + std::log1p(std::exp(yz));
            double p = 1.0 / (1.0 + std::exp(yz));  // σ(-yz)
            double g = -double(ys[t]) * p;
            for (std::size_t j = 0; j < m; ++j) gw[j] += g * double(feats[t][j]);
            gb += g;
        }
        double inv = 1.0 / double(train_idx.size());
        loss *= inv;
        gb *= inv;
        for (std::size_t j = 0; j < m; ++j) {
            gw[j] = gw[j] * inv + lambda_reg * wv[j];
            loss += 0.5 * lambda_reg * wv[j] * wv[j];
        }
        return loss;
    };

    std::vector<double> gw;
    double gb = 0.0;
    double loss = loss_grad(w, b, gw, gb);
    double step = 1.0;
    TrainMetrics metrics;
    const std::size_t max_iter = 10000;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        double gnorm = gb * gb;
        for (double g : gw) gnorm += g * g;
        gnorm = std::sqrt(gnorm);
        metrics.iterations = iter;
        if (gnorm <= 1e-6) {
            metrics.converged = true;
            break;
        }
        // backtracking on the full-batch objective
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            std::vector<double> w_try(m);
            for (std::size_t j = 0; j < m; ++j) w_try[j] = w[j] - step * gw[j];
            double b_try = b - step * gb;
            std::vector<double> gw_try;
            double gb_try;
            double loss_try = loss_grad(w_try, b_try, gw_try, gb_try);
            if (loss_try <= loss - 0.5 * step * gnorm * gnorm) {
                w = std::move(w_try);
                b = b_try;
                gw = std::move(gw_try);
                gb = gb_try;
                loss = loss_try;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // stalled at float resolution
    }

    // orientation: positive-class training mean must score higher
    double mean_pos = 0.0, mean_neg = 0.0;
    std::size_t ct_pos = 0, ct_neg = 0;
    for (std::size_t t : train_idx) {
        double z = b;
        for (std::size_t j = 0; j < m; ++j) z += w[j] * double(feats[t][j]);
        if (ys[t] == 1) {
            mean_pos += z;
            ++ct_pos;
        } else {
            mean_neg += z;
            ++ct_neg;
        }
    }
    mean_pos /= double(ct_pos);
    mean_neg /= double(ct_neg);
    if (mean_pos < mean_neg) {
        for (double& x : w) x = -x;
        b = -b;
    }

    double wnorm = 0.0;
    for (double x : w) wnorm += x * x;
    wnorm = std::sqrt(wnorm);
    if (wnorm == 0.0) throw SingleClass("classifier collapsed to the zero vector");

    std::vector<float> v_coeff(m);
    for (std::size_t j = 0; j < m; ++j) v_coeff[j] = float(w[j] / wnorm);
    EditDirection dir = direction_from_coeff(space, v_coeff, b / wnorm);
    dir.metrics = metrics;
    dir.label_provenance = labels.user_id;

    auto accuracy = [&](const std::vector<std::size_t>& idx) {
        if (idx.empty()) return 0.0;
        std::size_t hits = 0;
        for (std::size_t t : idx) {
            double z = dir.score(feats[t]);
            if ((z >= 0 ? 1 : -1) == ys[t]) ++hits;
        }
        return double(hits) / double(idx.size());
    };
    dir.metrics.train_accuracy = accuracy(train_idx);
    dir.metrics.holdout_accuracy = accuracy(hold_idx);
    double min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t t : train_idx) min_margin = std::min(min_margin, double(ys[t]) * dir.score(feats[t]));
    dir.metrics.margin = min_margin;
    return dir;
}

inline void check_space(const EditDirection& dir, const W2WSpace& space) {
    if (dir.layout_hash != space.layout_hash || dir.space_digest != space.digest())
        throw SpaceMismatch("direction was trained in a different space");
}

/// θ_edit = θ + α·v_full.
inline WeightVector edit_theta(const WeightVector& theta, const EditDirection& dir, double alpha) {
    if (theta.layout_hash != dir.layout_hash || theta.theta.size() != dir.v_full.size())
        throw SpaceMismatch("weight vector does not match the direction's layout");
    WeightVector out = theta;
    for (std::size_t j = 0; j < out.theta.size(); ++j)
        out.theta[j] = float(double(out.theta[j]) + alpha * double(dir.v_full[j]));
    return out;
}

/// One edit per (direction, α) pair, independently from the same base point.
inline std::vector<WeightVector> multi_direction_edit(const WeightVector& theta,
                                                      const std::vector<EditDirection>& dirs,
                                                      const std::vector<double>& alphas) {
    if (dirs.size() != alphas.size()) throw DimensionMismatch("one α per direction required");
    for (const auto& d : dirs)
        if (d.layout_hash != theta.layout_hash) throw SpaceMismatch("directions disagree on layout");
    std::vector<WeightVector> out;
    out.reserve(dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) out.push_back(edit_theta(theta, dirs[i], alphas[i]));
    return out;
}

/// Exports one rank-1 adapter per α; filenames embed the strength.
inline std::vector<std::filesystem::path> edit_sweep(const WeightVector& theta, const EditDirection& dir,
                                                     const std::vector<double>& alphas,
                                                     const LayoutDescriptor& layout,
                                                     const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> paths;
    for (double alpha : alphas) {
        WeightVector edited = edit_theta(theta, dir, alpha);
        char suffix[48];
        std::snprintf(suffix, sizeof(suffix), "%.6g", alpha);
        edited.adapter_id = theta.adapter_id + "_alpha_" + suffix;
        AdapterBundle bundle = export_rank1(unflatten(edited, layout));
        std::filesystem::path p = out_dir / (edited.adapter_id + ".safetensors");
        save_adapter(bundle, p);
        paths.push_back(std::move(p));
    }
    return paths;
}

// --- direction serialization: JSON + tensor archive ---

inline void save_direction(const EditDirection& dir, const std::filesystem::path& base) {
    TensorArchive a;
    a.add_f32("__v_coeff__", {dir.v_coeff.size()}, dir.v_coeff);
    a.add_f32("__v_full__", {dir.v_full.size()}, dir.v_full);
    std::filesystem::path st = base;
    st += ".st";
    write_archive(a, st);

    nlohmann::json j{{"bias", dir.bias},
                     {"layout_hash", dir.layout_hash},
                     {"space_digest", dir.space_digest},
                     {"label_provenance", dir.label_provenance},
                     {"metrics",
                      {{"train_accuracy", dir.metrics.train_accuracy},
                       {"holdout_accuracy", dir.metrics.holdout_accuracy},
                       {"margin", dir.metrics.margin},
                       {"converged", dir.metrics.converged},
                       {"iterations", dir.metrics.iterations}}}};
    std::filesystem::path js = base;
    js += ".json";
    std::filesystem::path tmp = js;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoFailure("cannot write '" + tmp.string() + "'");
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, js);
}

inline EditDirection load_direction(const std::filesystem::path& base) {
    std::filesystem::path st = base;
    st += ".st";
    TensorArchive a = read_archive(st);
    EditDirection dir;
    dir.v_coeff = a.f32_values("__v_coeff__");
    dir.v_full = a.f32_values("__v_full__");
    std::filesystem::path js = base;
    js += ".json";
    std::ifstream in(js);
    if (!in) throw IoFailure("cannot open '" + js.string() + "'");
    nlohmann::json j = nlohmann::json::parse(in);
    dir.bias = j.at("bias").get<double>();
    dir.layout_hash = j.at("layout_hash").get<std::string>();
    dir.space_digest = j.at("space_digest").get<std::string>();
    dir.label_provenance = j.value("label_provenance", std::string());
    const auto& m = j.at("metrics");
    dir.metrics.train_accuracy = m.at("train_accuracy").get<double>();
    dir.metrics.holdout_accuracy = m.at("holdout_accuracy").get<double>();
    dir.metrics.margin = m.at("margin").get<double>();
    dir.metrics.converged = m.at("converged").get<bool>();
    dir.metrics.iterations = m.at("iterations").get<std::size_t>();
    return dir;
}

}  // namespace w2w
