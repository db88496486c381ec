// Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "w2w/w2w.hpp"

namespace fs = std::filesystem;
using namespace w2w;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& title, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << title;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Independent one-sided Jacobi SVD oracle (columns rotated to orthogonality).
struct OracleSvd {
    double sigma1 = 0.0;
    std::vector<double> u1, v1;
};

OracleSvd jacobi_top1(const Matrix& m_in) {
    bool transposed = m_in.rows() < m_in.cols();
    Matrix m = transposed ? m_in.transposed() : m_in;
    std::size_t d = m.rows(), k = m.cols();
    std::vector<std::vector<double>> a(k, std::vector<double>(d));
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < d; ++i) a[j][i] = double(m(i, j));
    std::vector<std::vector<double>> v(k, std::vector<double>(k, 0.0));
    for (std::size_t j = 0; j < k; ++j) v[j][j] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < k; ++p)
            for (std::size_t q = p + 1; q < k; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    app += a[p][i] * a[p][i];
                    aqq += a[q][i] * a[q][i];
                    apq += a[p][i] * a[q][i];
                }
                off = std::max(off, std::abs(apq));
                if (std::abs(apq) < 1e-30) continue;
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                for (std::size_t i = 0; i < d; ++i) {
                    double xp = a[p][i], xq = a[q][i];
                    a[p][i] = c * xp - s * xq;
                    a[q][i] = s * xp + c * xq;
                }
                for (std::size_t i = 0; i < k; ++i) {
                    double xp = v[p][i], xq = v[q][i];
                    v[p][i] = c * xp - s * xq;
                    v[q][i] = s * xp + c * xq;
                }
            }
        if (off <= 1e-15 * m.frobenius_norm()) break;
    }
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t j = 0; j < k; ++j) {
        double n = 0.0;
        for (double x : a[j]) n += x * x;
        n = std::sqrt(n);
        if (n > best_norm) {
            best_norm = n;
            best = j;
        }
    }
    OracleSvd out;
    out.sigma1 = best_norm;
    out.u1.assign(d, 0.0);
    if (best_norm > 0.0)
        for (std::size_t i = 0; i < d; ++i) out.u1[i] = a[best][i] / best_norm;
    out.v1 = v[best];
    if (transposed) std::swap(out.u1, out.v1);
    return out;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& x : m.data()) x = float(rng.gaussian());
    return m;
}

double abs_dot_fd(const std::vector<float>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
    return std::abs(s);
}

fs::path work_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "w2w_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

// ---- criteria ----

void criterion_1() {
    auto t0 = Clock::now();
    Rng size_rng(1001);
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 500 && ok; ++trial) {
        std::size_t rows = 2 + std::size_t(size_rng.uniform() * 31.0);
        std::size_t cols = 2 + std::size_t(size_rng.uniform() * 31.0);
        rows = std::min<std::size_t>(rows, 32);
        cols = std::min<std::size_t>(cols, 32);
        Rng rng(2000 + std::uint64_t(trial));
        Matrix m = random_matrix(rows, cols, rng);
        SingularTriplet t = top1_svd(m, 1e-7, 10000, std::uint64_t(trial));
        OracleSvd o = jacobi_top1(m);
        double fro = m.frobenius_norm();
        if (std::abs(double(t.sigma) - o.sigma1) > 1e-6 * fro) {
            ok = false;
            detail = "sigma mismatch at trial " + std::to_string(trial);
        }
        if (ok && abs_dot_fd(t.u, o.u1) < 1.0 - 1e-6) {
            ok = false;
            detail = "u misaligned at trial " + std::to_string(trial);
        }
    }
    double secs = seconds_since(t0);
    if (secs >= 10.0) {
        ok = false;
        detail = "runtime " + std::to_string(secs) + "s";
    }
    std::ostringstream d;
    d << "500 matrices, " << secs << "s";
    report(1, "top1_svd matches the Jacobi oracle on 500 seeded matrices", ok,
           detail.empty() ? d.str() : detail);
}

void criterion_2() {
    auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    Rng rng(3001);
    for (int mat = 0; mat < 5 && ok; ++mat) {
        std::size_t d = 6 + std::size_t(mat), k = 5 + std::size_t(mat);
        Matrix m = random_matrix(d, k, rng);
        SingularTriplet t = top1_svd(m, 1e-7, 10000, 3);
        auto err_of = [&](double sigma, const std::vector<float>& u, const std::vector<float>& v) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < k; ++j) {
                    double e = double(m(i, j)) - sigma * double(u[i]) * double(v[j]);
                    s += e * e;
                }
            return s;
        };
        double ours = err_of(t.sigma, t.u, t.v);
        for (int trial = 0; trial < 100 && ok; ++trial) {
            auto u = normalized(rng.gaussian_vector(d));
            auto v = normalized(rng.gaussian_vector(k));
            double sigma = 0.0;  // the optimal scale for this candidate pair
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < k; ++j) sigma += double(m(i, j)) * u[i] * v[j];
            if (ours > err_of(sigma, u, v) + 1e-6) {
                ok = false;
                detail = "beaten by random competitor, matrix " + std::to_string(mat);
            }
        }
    }
    double secs = seconds_since(t0);
    if (secs >= 5.0) {
        ok = false;
        detail = "runtime " + std::to_string(secs) + "s";
    }
    report(2, "rank-1 reduction beats 100 random rank-1 competitors", ok, detail);
}

void criterion_3() {
    bool ok = true;
    std::string detail;
    fs::path dir = work_dir("roundtrip");

    // adapter file I/O bit-exact
    Rng rng(4001);
    AdapterBundle b;
    b.rank = 4;
    b.network_alpha = 8.0f;
    b.adapter_id = "rt";
    b.metadata["note"] = "acceptance";
    for (int l = 0; l < 3; ++l) {
        LoraLayer layer;
        layer.a = random_matrix(4, 9, rng);
        layer.b = random_matrix(11, 4, rng);
        b.layers["layer_" + std::to_string(l)] = std::move(layer);
    }
    save_adapter(b, dir / "a1.safetensors");
    AdapterBundle b2 = load_adapter(dir / "a1.safetensors");
    save_adapter(b2, dir / "a2.safetensors");
    if (read_file(dir / "a1.safetensors") != read_file(dir / "a2.safetensors")) {
        ok = false;
        detail = "adapter save/load/save not byte-identical";
    }

    // flatten/unflatten identity within 1e-6
    ReducedAdapter r = reduce_adapter(b2);
    LayoutDescriptor layout = make_layout({r});
    WeightVector theta = flatten(r, layout);
    WeightVector theta2 = flatten(unflatten(theta, layout), layout);
    for (std::size_t j = 0; j < theta.theta.size() && ok; ++j)
        if (std::abs(theta2.theta[j] - theta.theta[j]) > 1e-6f * (1.0f + std::abs(theta.theta[j]))) {
            ok = false;
            detail = "flatten/unflatten drift";
        }

    // project/reconstruct/project identity within 1e-6
    SyntheticSpec spec;
    spec.seed = 4002;
    spec.layer_count = 5;
    spec.layer_d = 6;
    spec.layer_k = 6;
    spec.corpus_size = 40;
    spec.m_true = 3;
    SyntheticCorpus synth = gen_corpus(spec);
    W2WSpace space = build_space(synth.corpus, 3);
    for (std::size_t i = 0; i < 5 && ok; ++i) {
        auto c = project(space, synth.corpus[i]);
        auto c2 = project(space, reconstruct(space, c));
        for (std::size_t j = 0; j < c.size(); ++j)
            if (std::abs(double(c2[j]) - double(c[j])) > 1e-6 * (1.0 + std::abs(double(c[j])))) {
                ok = false;
                detail = "project/reconstruct/project drift";
            }
    }

    // export_rank1 fixpoint within 1e-6
    ReducedAdapter again = reduce_adapter(export_rank1(r));
    for (const auto& [name, t] : r.triplets) {
        const SingularTriplet& t2 = again.triplets.at(name);
        if (std::abs(t2.sigma - t.sigma) > 1e-6f * t.sigma) {
            ok = false;
            detail = "export_rank1 sigma drift on " + name;
        }
        for (std::size_t i = 0; i < t.u.size() && ok; ++i)
            if (std::abs(t2.u[i] - t.u[i]) > 1e-5f) {
                ok = false;
                detail = "export_rank1 u drift on " + name;
            }
    }
    report(3, "file, flatten, projection, and export round trips hold", ok, detail);
}

void criterion_4() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {5001ull, 5002ull, 5003ull}) {
        SyntheticSpec spec;
        spec.seed = seed;
        spec.layer_count = 4;
        spec.layer_d = 8;
        spec.layer_k = 8;  // D = 64
        spec.corpus_size = 40;
        spec.m_true = 4;
        spec.noise = 0.1;
        SyntheticCorpus synth = gen_corpus(spec);
        W2WSpace direct = build_space(synth.corpus, 4, PcaMethod::Direct);
        W2WSpace gram = build_space(synth.corpus, 4, PcaMethod::Gram);
        for (std::size_t r = 0; r < 4 && ok; ++r) {
            double rel = std::abs(double(gram.eigenvalues[r]) - double(direct.eigenvalues[r])) /
                         double(direct.eigenvalues[r]);
            if (rel > 1e-6) {
                ok = false;
                detail = "eigenvalue " + std::to_string(r) + " rel err " + std::to_string(rel);
            }
            double dp = 0.0;
            for (std::size_t c = 0; c < direct.dim(); ++c)
                dp += double(direct.basis(r, c)) * double(gram.basis(r, c));
            if (std::abs(dp) < 1.0 - 1e-6) {
                ok = false;
                detail = "component " + std::to_string(r) + " |cos| " + std::to_string(std::abs(dp));
            }
        }
        if (!ok) break;
    }
    report(4, "Gram-trick and direct-covariance PCA agree (D<=64, N<=40)", ok, detail);
}

void criterion_5() {
    auto t0 = Clock::now();
    bool ok = true;
    std::string detail;

    SyntheticSpec spec;
    spec.seed = 6001;
    spec.layer_count = 8;
    spec.layer_d = 5;
    spec.layer_k = 5;
    spec.corpus_size = 200;
    spec.m_true = 5;
    spec.separation = 2.0;
    spec.noise = 0.1;
    SyntheticCorpus synth = gen_corpus(spec);
    W2WSpace space = build_space(synth.corpus, 5);
    EditDirection dir = train_direction(space, synthetic_labels(synth), synth.corpus);
    RecoveryReport rep = recovery_report(space, dir, synth);

    double max_deg = rep.max_principal_angle * 180.0 / 3.14159265358979;
    if (max_deg > 5.0) {
        ok = false;
        detail = "max principal angle " + std::to_string(max_deg) + " deg";
    }
    if (ok && rep.direction_cosine < 0.95) {
        ok = false;
        detail = "direction cosine " + std::to_string(rep.direction_cosine);
    }
    if (ok && rep.holdout_accuracy < 0.95) {
        ok = false;
        detail = "holdout accuracy " + std::to_string(rep.holdout_accuracy);
    }

    // score strictly increasing along an alpha sweep, analytic slope 1
    if (ok) {
        const WeightVector& base = synth.corpus[0];
        double prev = -1e300;
        for (double alpha : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
            double s = dir.score(project(space, edit_theta(base, dir, alpha)));
            if (s <= prev) {
                ok = false;
                detail = "score not increasing along alpha";
            }
            prev = s;
        }
        double s0 = dir.score(project(space, base));
        double s1 = dir.score(project(space, edit_theta(base, dir, 1.0)));
        double slope = s1 - s0;
        if (ok && std::abs(slope - 1.0) > 1e-4) {
            ok = false;
            detail = "slope " + std::to_string(slope);
        }
    }
    double secs = seconds_since(t0);
    if (secs >= 60.0) {
        ok = false;
        detail = "runtime " + std::to_string(secs) + "s";
    }
    std::ostringstream d;
    d << "angle " << max_deg << " deg, |cos| " << rep.direction_cosine << ", holdout "
      << rep.holdout_accuracy << ", " << secs << "s";
    report(5, "end-to-end planted recovery (N=200, m=5, s=2, eta=0.1)", ok,
           detail.empty() ? d.str() : detail);
}

void criterion_6() {
    std::map<std::string, double> gate = {{"a", 0.25}, {"b", 0.25}, {"c", 0.10}};
    std::map<std::string, double> pos = {{"a", 0.30}, {"b", 0.27}, {"c", 0.90}};
    std::map<std::string, double> neg = {{"a", 0.10}, {"b", 0.26}, {"c", 0.00}};
    PreferenceLabelSet set = label_corpus(gate, pos, neg, 0.2, 0.26, 0.24);
    bool ok = set.labels.at("a") == Label::Positive && set.labels.at("b") == Label::Excluded &&
              set.labels.at("c") == Label::Excluded;
    report(6, "threshold labeling yields +1 / excluded / excluded on the example triples", ok);
}

void criterion_7() {
    bool ok = true;
    std::string detail;
    SyntheticSpec spec;
    spec.seed = 7001;
    spec.layer_count = 6;
    spec.layer_d = 8;
    spec.layer_k = 8;
    spec.corpus_size = 60;
    spec.m_true = 4;
    SyntheticCorpus synth = gen_corpus(spec);
    W2WSpace space = build_space(synth.corpus, 4);

    // three users with mutually orthogonal planted preference normals
    std::vector<EditDirection> users = {
        direction_from_coeff(space, {1, 0, 0, 0}, 0.3),
        direction_from_coeff(space, {0, 1, 0, 0}, -0.2),
        direction_from_coeff(space, {0, 0, 1, 0}, 0.1),
    };
    const WeightVector& base = synth.corpus[0];
    for (std::size_t u = 0; u < users.size() && ok; ++u) {
        double s0 = users[u].score(project(space, base));
        double alpha = -s0;  // analytic crossing
        WeightVector edited = edit_theta(base, users[u], alpha);
        double after = users[u].score(project(space, edited));
        if (std::abs(after) > 1e-4 * (1.0 + std::abs(alpha))) {
            ok = false;
            detail = "user " + std::to_string(u) + " crossing residual " + std::to_string(after);
        }
        for (std::size_t o = 0; o < users.size() && ok; ++o) {
            if (o == u) continue;
            double before = users[o].score(project(space, base));
            double other = users[o].score(project(space, edited));
            if (std::abs(other - before) > 1e-6 * (1.0 + std::abs(before))) {
                ok = false;
                detail = "user " + std::to_string(o) + " moved by " +
                         std::to_string(other - before);
            }
        }
    }
    report(7, "multi-user edits cross at alpha = -score and leave orthogonal users fixed", ok, detail);
}

void criterion_8() {
    bool ok = true;
    std::string detail;
    Rng rng(8001);
    EmbeddingTable t;
    std::map<std::string, int> truth;
    for (int blob = 0; blob < 2; ++blob) {
        for (int i = 0; i < 40; ++i) {
            std::vector<float> v(6, 0.0f);
            v[std::size_t(blob)] = 1.0f;
            for (auto& x : v) x += float(rng.gaussian() * 0.02);
            char id[32];
            std::snprintf(id, sizeof id, "blob%d_%03d", blob, i);
            t.insert(id, std::move(v));
            truth[id] = blob;
        }
    }
    ClusterResult r = cluster_embeddings(t, 10, 5);
    if (r.sizes.size() != 2) {
        ok = false;
        detail = std::to_string(r.sizes.size()) + " clusters";
    }
    for (const auto& [id, cid] : r.assignment)
        if (ok && cid != truth.at(id)) {
            ok = false;
            detail = "misassigned " + id;
        }

    if (ok) {
        auto top = select_representatives(r, t, 9);
        std::vector<std::pair<double, std::string>> all;
        for (const auto& [id, cid] : r.assignment)
            if (cid == r.representative)
                all.emplace_back(dot(t.items.at(id), r.means.at(std::size_t(r.representative))), id);
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < top.size(); ++i)
            if (top[i] != all[i].second) {
                ok = false;
                detail = "representative order differs from exhaustive sort at " + std::to_string(i);
            }
    }
    report(8, "two-blob clustering recovers generator labels; representatives match", ok, detail);
}

void criterion_9() {
    bool ok = true;
    std::string detail;
    const std::string cli = W2W_CLI_PATH;
    auto pipeline = [&](const fs::path& dir) {
        std::string d = dir.string();
        std::vector<std::string> cmds = {
            cli + " gen-synthetic --seed 23 --n 80 --layers 5 --d 6 --k 6 --m-true 3"
                  " --separation 2 --emit-adapters --out " + d + "/synth",
            cli + " reduce --manifest " + d + "/synth/manifest.jsonl --out " + d + "/red",
            cli + " build-space --reduced " + d + "/red/reduced.st --m 3 --out " + d + "/space",
            cli + " learn-direction --space " + d + "/space --labels " + d +
                "/synth/labels.json --reduced " + d + "/red/reduced.st --out " + d + "/dir",
        };
        for (const auto& c : cmds) {
            int status = std::system((c + " >/dev/null 2>&1").c_str());
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return false;
        }
        return true;
    };
    // same config means the same paths: snapshot the first run's artifacts,
    // wipe the directory, run again, and byte-compare. Provenance sidecars
    // are excluded; they carry the only timestamps in the system.
    auto snapshot = [](const fs::path& dir) {
        std::map<std::string, std::string> files;
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            std::string name = entry.path().filename().string();
            if (name.size() > 16 && name.substr(name.size() - 16) == ".provenance.json") continue;
            files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
        }
        return files;
    };
    fs::path dir = work_dir("det");
    if (!pipeline(dir)) {
        ok = false;
        detail = "pipeline run failed";
    }
    if (ok) {
        auto first = snapshot(dir);
        fs::remove_all(dir);
        fs::create_directories(dir);
        if (!pipeline(dir)) {
            ok = false;
            detail = "second pipeline run failed";
        } else {
            auto second = snapshot(dir);
            if (first.empty()) {
                ok = false;
                detail = "no artifacts produced";
            } else if (first.size() != second.size()) {
                ok = false;
                detail = "artifact sets differ";
            } else {
                for (const auto& [rel, bytes] : first) {
                    auto it = second.find(rel);
                    if (it == second.end() || it->second != bytes) {
                        ok = false;
                        detail = "artifact differs: " + rel;
                        break;
                    }
                }
            }
        }
    }
    report(9, "repeated pipeline runs produce byte-identical artifacts", ok, detail);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    if (g_failures > 0) {
        std::cout << g_failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all 9 criteria passed\n";
    return 0;
}
