// w2w: build a latent weight space from LoRA adapter corpora and edit
// adapters along learned preference directions.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <cxxabi.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "w2w/w2w.hpp"

#ifndef W2W_NO_HTTP
#include <httplib.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string file_digest(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw w2w::IoFailure("cannot open '" + p.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return w2w::digest_hex(bytes);
}

std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

/// Every artifact gets a sidecar recording inputs' digests and parameters.
/// The timestamp lives only here; artifacts themselves are deterministic.
void write_provenance(const fs::path& artifact, const std::string& subcommand, const json& params,
                      const std::vector<fs::path>& inputs) {
    json prov{{"tool_version", kToolVersion},
              {"subcommand", subcommand},
              {"params", params},
              {"timestamp", timestamp_utc()}};
    json in = json::object();
    for (const auto& p : inputs) in[p.string()] = file_digest(p);
    prov["inputs"] = in;
    fs::path out = artifact;
    out += ".provenance.json";
    fs::path tmp = out;
    tmp += ".tmp";
    {
        std::ofstream o(tmp, std::ios::trunc);
        o << prov.dump(2) << "\n";
    }
    fs::rename(tmp, out);
}

void atomic_write_text(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream o(tmp, std::ios::trunc);
        if (!o) throw w2w::IoFailure("cannot write '" + tmp.string() + "'");
        o << text;
    }
    fs::rename(tmp, path);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t sep = s.find(',', start);
        std::string tok = s.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
        if (!tok.empty()) out.push_back(tok);
        if (sep == std::string::npos) break;
        start = sep + 1;
    }
    return out;
}

fs::path strip_st(fs::path p) {
    if (p.extension() == ".st") p.replace_extension();
    return p;
}

/// Groups an examples table by adapter id (the part before '#', or the whole
/// id) and scores each group against a reference embedding.
std::map<std::string, double> score_groups(const w2w::EmbeddingTable& examples,
                                           const std::vector<float>& reference) {
    std::map<std::string, std::vector<std::vector<float>>> groups;
    for (const auto& [id, v] : examples.items) {
        std::string adapter_id = id.substr(0, id.find('#'));
        groups[adapter_id].push_back(v);
    }
    std::map<std::string, double> scores;
    for (const auto& [id, vs] : groups) scores[id] = w2w::score_adapter(vs, reference);
    return scores;
}

std::vector<float> table_mean(const w2w::EmbeddingTable& t) {
    std::vector<double> acc(t.dim, 0.0);
    for (const auto& [id, v] : t.items)
        for (std::size_t i = 0; i < t.dim; ++i) acc[i] += v[i];
    std::vector<float> mean(t.dim);
    for (std::size_t i = 0; i < t.dim; ++i) mean[i] = float(acc[i]);
    double n = w2w::norm2(mean);
    if (n == 0.0) throw w2w::DegenerateMatrix("reference table mean is zero");
    w2w::scale_inplace(mean, 1.0 / n);
    return mean;
}

json labels_to_json(const w2w::PreferenceLabelSet& set) {
    json labels = json::object(), gate = json::object(), pos = json::object(), neg = json::object();
    for (const auto& [id, l] : set.labels) labels[id] = w2w::label_name(l);
    for (const auto& [id, s] : set.gate_scores) gate[id] = s;
    for (const auto& [id, s] : set.pos_scores) pos[id] = s;
    for (const auto& [id, s] : set.neg_scores) neg[id] = s;
    return json{{"user_id", set.user_id},
                {"thresholds", {{"gate", set.tau_gate}, {"pos", set.tau_pos}, {"neg", set.tau_neg}}},
                {"labels", labels},
                {"scores", {{"gate", gate}, {"pos", pos}, {"neg", neg}}}};
}

w2w::PreferenceLabelSet labels_from_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw w2w::IoFailure("cannot open labels '" + path.string() + "'");
    json j = json::parse(in);
    w2w::PreferenceLabelSet set;
    set.user_id = j.value("user_id", std::string());
    if (j.contains("thresholds")) {
        set.tau_gate = j["thresholds"].value("gate", 0.2);
        set.tau_pos = j["thresholds"].value("pos", 0.26);
        set.tau_neg = j["thresholds"].value("neg", 0.24);
    }
    for (const auto& [id, v] : j.at("labels").items()) {
        std::string s = v.get<std::string>();
        set.labels[id] = s == "+1" ? w2w::Label::Positive
                         : s == "-1" ? w2w::Label::Negative
                                     : w2w::Label::Excluded;
    }
    return set;
}

#ifndef W2W_NO_HTTP
struct HttpTransport : w2w::Transport {
    std::string auth_token;
    std::pair<int, std::string> post(const std::string& url, const std::string& body) override {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw w2w::EndpointError("endpoint URL lacks a scheme");
        auto path_start = url.find('/', scheme_end + 3);
        std::string host = url.substr(0, path_start == std::string::npos ? url.size() : path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
        httplib::Client client(host);
        client.set_read_timeout(30, 0);
        httplib::Headers headers;
        if (!auth_token.empty()) headers.emplace("Authorization", "Bearer " + auth_token);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) return {0, ""};
        return {res->status, res->body};
    }
};
#endif

}  // namespace

int run(CLI::App& app);

int main(int argc, char** argv) {
    CLI::App app{"weights-to-weights latent space toolkit"};
    app.set_config("--config", "", "declarative config file; flags override");
    app.require_subcommand(1);

    // ---- inspect / validate ----
    auto* inspect = app.add_subcommand("inspect", "print a tensor-archive header");
    std::string inspect_file;
    inspect->add_option("file", inspect_file, "archive path")->required();

    auto* validate = app.add_subcommand("validate", "validate a tensor archive");
    std::string validate_file;
    validate->add_option("file", validate_file, "archive path")->required();

    // ---- reduce ----
    auto* reduce = app.add_subcommand("reduce", "rank-1 reduce an adapter corpus to weight vectors");
    std::string red_manifest, red_layers, red_base_model, red_out;
    std::size_t red_rank = 0;
    std::uint64_t red_seed = 0;
    reduce->add_option("--manifest", red_manifest, "JSONL corpus manifest")->required();
    reduce->add_option("--layers", red_layers, "comma-separated layer patterns ('+' joins required substrings)");
    reduce->add_option("--rank", red_rank, "keep only adapters of this rank");
    reduce->add_option("--base-model", red_base_model, "keep only adapters with this base-model tag");
    reduce->add_option("--seed", red_seed, "SVD start-vector seed");
    reduce->add_option("--out", red_out, "output directory")->required();

    // ---- build-space ----
    auto* build = app.add_subcommand("build-space", "PCA over reduced weight vectors");
    std::string bs_reduced, bs_out;
    std::size_t bs_m = 0;
    build->add_option("--reduced", bs_reduced, "reduced corpus archive (reduced.st)")->required();
    build->add_option("--m", bs_m, "number of principal components (default min(N-1, 100))");
    build->add_option("--out", bs_out, "output base path (writes .st and .json)")->required();

    // ---- label ----
    auto* label = app.add_subcommand("label", "produce preference labels from embedding tables");
    std::string lb_examples, lb_user, lb_gate_ref, lb_pos_ref, lb_neg_ref, lb_out, lb_user_id;
    double lb_tau_gate = 0.2, lb_tau_pos = 0.26, lb_tau_neg = 0.24, lb_quantile = 0.2;
    std::size_t lb_mcs = 10, lb_ms = 5;
    bool lb_fixed = false;
    label->add_option("--adapter-examples", lb_examples, "JSONL table, ids 'adapter#n'")->required();
    label->add_option("--user-embeds", lb_user, "JSONL table of the user's image embeddings");
    label->add_option("--gate-ref", lb_gate_ref, "JSONL table; mean is the gate reference");
    label->add_option("--pos-ref", lb_pos_ref, "JSONL table; mean is the positive reference");
    label->add_option("--neg-ref", lb_neg_ref, "JSONL table; mean is the negative reference");
    label->add_option("--tau-gate", lb_tau_gate, "gate threshold");
    label->add_option("--tau-pos", lb_tau_pos, "positive threshold");
    label->add_option("--tau-neg", lb_tau_neg, "negative threshold");
    label->add_flag("--fixed-thresholds", lb_fixed, "use the τ constants in per-user mode too");
    label->add_option("--quantile", lb_quantile, "per-user quantile for τ_pos/τ_neg");
    label->add_option("--min-cluster-size", lb_mcs, "clustering: minimum cluster size");
    label->add_option("--min-samples", lb_ms, "clustering: core-distance neighbour count");
    label->add_option("--user-id", lb_user_id, "user id recorded in the label set");
    label->add_option("--out", lb_out, "output labels JSON")->required();

    // ---- learn-direction ----
    auto* learn = app.add_subcommand("learn-direction", "train a preference hyperplane");
    std::string ld_space, ld_labels, ld_reduced, ld_out;
    double ld_lambda = 1e-3;
    std::uint64_t ld_seed = 0;
    learn->add_option("--space", ld_space, "space base path (without .st)")->required();
    learn->add_option("--labels", ld_labels, "labels JSON")->required();
    learn->add_option("--reduced", ld_reduced, "reduced corpus archive")->required();
    learn->add_option("--lambda", ld_lambda, "L2 penalty");
    learn->add_option("--seed", ld_seed, "split seed");
    learn->add_option("--out", ld_out, "output base path (writes .st and .json)")->required();

    // ---- edit / sweep ----
    auto* edit = app.add_subcommand("edit", "apply θ + αv and export a rank-1 adapter");
    auto* sweep = app.add_subcommand("sweep", "edit at several strengths");
    std::string ed_space, ed_dir, ed_reduced, ed_id, ed_adapter, ed_layers, ed_out;
    double ed_alpha = 0.0;
    std::string ed_alphas;
    for (auto* cmd : {edit, sweep}) {
        cmd->add_option("--space", ed_space, "space base path")->required();
        cmd->add_option("--direction", ed_dir, "direction base path")->required();
        cmd->add_option("--reduced", ed_reduced, "reduced corpus archive holding the base θ");
        cmd->add_option("--id", ed_id, "adapter id of the base θ within --reduced");
        cmd->add_option("--adapter", ed_adapter, "adapter file to reduce and edit");
        cmd->add_option("--layers", ed_layers, "layer patterns when using --adapter");
    }
    edit->add_option("--alpha", ed_alpha, "edit strength")->required();
    edit->add_option("--out", ed_out, "output adapter file")->required();
    sweep->add_option("--alphas", ed_alphas, "comma-separated strengths")->required();
    sweep->add_option("--out", ed_out, "output directory")->required();

    // ---- gen-synthetic ----
    auto* gen = app.add_subcommand("gen-synthetic", "generate a planted-structure corpus");
    w2w::SyntheticSpec spec;
    std::string gen_out;
    bool gen_adapters = false;
    gen->add_option("--seed", spec.seed, "corpus seed");
    gen->add_option("--n", spec.corpus_size, "corpus size");
    gen->add_option("--layers", spec.layer_count, "layer count");
    gen->add_option("--d", spec.layer_d, "rows per layer");
    gen->add_option("--k", spec.layer_k, "cols per layer");
    gen->add_option("--m-true", spec.m_true, "planted subspace dimension");
    gen->add_option("--scale", spec.scale, "latent coefficient stddev");
    gen->add_option("--separation", spec.separation, "class separation");
    gen->add_option("--noise", spec.noise, "isotropic noise level");
    gen->add_flag("--emit-adapters", gen_adapters, "also write rank-1 adapter files + manifest");
    gen->add_option("--out", gen_out, "output directory")->required();

    // ---- report ----
    auto* report = app.add_subcommand("report", "recovery / fidelity / ranking reports");
    std::string rp_space, rp_dir, rp_synth, rp_out;
    std::string rp_base, rp_full, rp_rank1;
    report->add_option("--space", rp_space, "space base path (recovery)");
    report->add_option("--direction", rp_dir, "direction base path (recovery)");
    report->add_option("--synthetic", rp_synth, "gen-synthetic output directory (recovery)");
    report->add_option("--fidelity-base", rp_base, "base embeddings JSONL (fidelity)");
    report->add_option("--fidelity-full", rp_full, "full-rank embeddings JSONL (fidelity)");
    report->add_option("--fidelity-rank1", rp_rank1, "rank-1 embeddings JSONL (fidelity)");
    report->add_option("--out", rp_out, "report JSON output")->required();

    // ---- fetch-embeds ----
    auto* fetch = app.add_subcommand("fetch-embeds", "fetch embeddings over HTTP with a disk cache");
    std::string fe_endpoint, fe_inputs, fe_modality = "text", fe_cache, fe_out;
    std::size_t fe_batch = 32, fe_attempts = 3;
    fetch->add_option("--endpoint", fe_endpoint, "POST /embed endpoint URL (or $W2W_EMBED_ENDPOINT)");
    fetch->add_option("--inputs", fe_inputs, "JSONL of {id, text} or {id, path}")->required();
    fetch->add_option("--modality", fe_modality, "image | text");
    fetch->add_option("--cache", fe_cache, "cache directory");
    fetch->add_option("--batch-size", fe_batch, "items per request");
    fetch->add_option("--max-attempts", fe_attempts, "retries per batch");
    fetch->add_option("--out", fe_out, "output JSONL table")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*inspect) {
            w2w::TensorArchive a = w2w::read_archive(inspect_file);
            json j = json::object();
            json tensors = json::object();
            for (const auto& [name, t] : a.tensors)
                tensors[name] = {{"dtype", t.dtype}, {"shape", t.shape}, {"data_offsets", {t.begin, t.end}}};
            j["tensors"] = tensors;
            j["metadata"] = a.metadata;
            j["payload_bytes"] = a.payload.size();
            std::cout << j.dump(2) << "\n";
        } else if (*validate) {
            w2w::read_archive(validate_file);  // throws on any violation
            std::cerr << "ok: " << validate_file << "\n";
        } else if (*reduce) {
            auto manifest = w2w::read_manifest(red_manifest);
            auto filtered = w2w::filter_corpus(
                manifest, red_rank ? std::optional<std::size_t>(red_rank) : std::nullopt,
                red_base_model.empty() ? std::nullopt : std::optional<std::string>(red_base_model));
            std::vector<std::string> patterns = split_csv(red_layers);
            std::vector<w2w::ReducedAdapter> reduced;
            for (const auto& e : filtered) {
                w2w::AdapterBundle b = w2w::load_adapter(e.path);
                b.adapter_id = e.adapter_id;
                reduced.push_back(w2w::reduce_adapter(b, patterns, 1e-7, 10000, red_seed));
                std::cerr << "reduced " << e.adapter_id << " (" << reduced.back().triplets.size()
                          << " layers)\n";
            }
            w2w::LayoutDescriptor layout = w2w::make_layout(reduced);
            std::vector<w2w::WeightVector> corpus;
            for (const auto& r : reduced) corpus.push_back(w2w::flatten(r, layout));
            fs::create_directories(red_out);
            fs::path out = fs::path(red_out) / "reduced.st";
            w2w::write_weight_vectors(corpus, layout, out);
            write_provenance(out, "reduce",
                             json{{"manifest", red_manifest}, {"layers", red_layers}, {"rank", red_rank},
                                  {"base_model", red_base_model}, {"seed", red_seed}},
                             {red_manifest});
            std::cerr << "wrote " << out.string() << " (N=" << corpus.size()
                      << ", D=" << layout.total_dim << ")\n";
        } else if (*build) {
            auto [corpus, layout] = w2w::read_weight_vectors(bs_reduced);
            std::size_t m = bs_m ? bs_m : std::min<std::size_t>(corpus.size() - 1, 100);
            m = std::min(m, std::min(corpus.size() - 1, layout.total_dim));
            w2w::W2WSpace space = w2w::build_space(corpus, m);
            fs::path base = strip_st(bs_out);
            w2w::save_space(space, layout, base);
            fs::path st = base;
            st += ".st";
            write_provenance(st, "build-space", json{{"reduced", bs_reduced}, {"m", m}}, {bs_reduced});
            if (space.rank_deficient)
                std::cerr << "warning: corpus is rank deficient; kept m=" << space.components() << "\n";
            std::cerr << "wrote " << st.string() << " (m=" << space.components()
                      << ", D=" << space.dim() << ")\n";
        } else if (*label) {
            w2w::EmbeddingTable examples = w2w::read_embedding_table(lb_examples);
            w2w::PreferenceLabelSet set;
            if (!lb_gate_ref.empty() || !lb_pos_ref.empty() || !lb_neg_ref.empty()) {
                if (lb_gate_ref.empty() || lb_pos_ref.empty() || lb_neg_ref.empty())
                    throw w2w::IdSetMismatch("need all three of --gate-ref/--pos-ref/--neg-ref");
                auto gate = score_groups(examples, table_mean(w2w::read_embedding_table(lb_gate_ref, "text")));
                auto pos = score_groups(examples, table_mean(w2w::read_embedding_table(lb_pos_ref, "text")));
                auto neg = score_groups(examples, table_mean(w2w::read_embedding_table(lb_neg_ref, "text")));
                set = w2w::label_corpus(gate, pos, neg, lb_tau_gate, lb_tau_pos, lb_tau_neg, lb_user_id);
            } else if (!lb_user.empty()) {
                w2w::EmbeddingTable user = w2w::read_embedding_table(lb_user);
                auto clusters = w2w::cluster_embeddings(user, lb_mcs, lb_ms);
                auto reps = w2w::select_representatives(clusters, user);
                const auto& ref = clusters.means.at(std::size_t(clusters.representative));
                auto scores = score_groups(examples, ref);
                double tau_pos = lb_tau_pos, tau_neg = lb_tau_neg;
                if (!lb_fixed) std::tie(tau_pos, tau_neg) = w2w::quantile_thresholds(scores, lb_quantile);
                // one score against the cluster mean: gate passes everything,
                // above τ_pos → +1, below τ_neg → −1
                std::map<std::string, double> gate;
                std::map<std::string, double> neg;
                for (const auto& [id, s] : scores) {
                    gate[id] = 1.0;
                    neg[id] = -s;
                }
                set = w2w::label_corpus(gate, scores, neg, 0.0, tau_pos, -tau_neg, lb_user_id);
                set.tau_gate = 0.0;
                json out = labels_to_json(set);
                out["representatives"] = reps;
                atomic_write_text(lb_out, out.dump(2) + "\n");
                write_provenance(lb_out, "label",
                                 json{{"adapter_examples", lb_examples}, {"user_embeds", lb_user},
                                      {"quantile", lb_quantile}},
                                 {fs::path(lb_examples), fs::path(lb_user)});
                std::cerr << "wrote " << lb_out << "\n";
                return 0;
            } else {
                throw w2w::IdSetMismatch("need --user-embeds or the three reference tables");
            }
            atomic_write_text(lb_out, labels_to_json(set).dump(2) + "\n");
            write_provenance(lb_out, "label", json{{"adapter_examples", lb_examples}},
                             {fs::path(lb_examples)});
            std::cerr << "wrote " << lb_out << "\n";
        } else if (*learn) {
            auto [space, layout] = w2w::load_space(strip_st(ld_space));
            auto [corpus, corpus_layout] = w2w::read_weight_vectors(ld_reduced);
            w2w::PreferenceLabelSet labels = labels_from_json(ld_labels);
            w2w::EditDirection dir = w2w::train_direction(space, labels, corpus, ld_lambda, ld_seed);
            fs::path base = strip_st(ld_out);
            w2w::save_direction(dir, base);
            fs::path st = base;
            st += ".st";
            write_provenance(st, "learn-direction",
                             json{{"space", ld_space}, {"labels", ld_labels}, {"reduced", ld_reduced},
                                  {"lambda", ld_lambda}, {"seed", ld_seed}},
                             {fs::path(ld_labels), fs::path(ld_reduced)});
            std::cerr << "trained direction: holdout accuracy " << dir.metrics.holdout_accuracy
                      << (dir.metrics.converged ? "" : " (not fully converged)") << "\n";
        } else if (*edit || *sweep) {
            auto [space, layout] = w2w::load_space(strip_st(ed_space));
            w2w::EditDirection dir = w2w::load_direction(strip_st(ed_dir));
            w2w::check_space(dir, space);
            w2w::WeightVector theta;
            if (!ed_adapter.empty()) {
                w2w::AdapterBundle b = w2w::load_adapter(ed_adapter);
                theta = w2w::flatten(w2w::reduce_adapter(b, split_csv(ed_layers)), layout);
            } else if (!ed_reduced.empty() && !ed_id.empty()) {
                auto [corpus, corpus_layout] = w2w::read_weight_vectors(ed_reduced);
                bool found = false;
                for (auto& wv : corpus)
                    if (wv.adapter_id == ed_id) {
                        theta = wv;
                        found = true;
                    }
                if (!found) throw w2w::EmptySelection("no θ with id '" + ed_id + "' in " + ed_reduced);
            } else {
                throw w2w::EmptySelection("need --adapter or (--reduced and --id)");
            }
            if (*edit) {
                w2w::WeightVector edited = w2w::edit_theta(theta, dir, ed_alpha);
                edited.adapter_id = theta.adapter_id + "_edited";
                w2w::save_adapter(w2w::export_rank1(w2w::unflatten(edited, layout)), ed_out);
                write_provenance(ed_out, "edit", json{{"alpha", ed_alpha}, {"id", theta.adapter_id}}, {});
                std::cerr << "wrote " << ed_out << "\n";
            } else {
                std::vector<double> alphas;
                for (const auto& tok : split_csv(ed_alphas)) alphas.push_back(std::stod(tok));
                auto paths = w2w::edit_sweep(theta, dir, alphas, layout, ed_out);
                for (const auto& p : paths) {
                    write_provenance(p, "sweep", json{{"alphas", ed_alphas}, {"id", theta.adapter_id}}, {});
                    std::cerr << "wrote " << p.string() << "\n";
                }
            }
        } else if (*gen) {
            w2w::SyntheticCorpus synth = w2w::gen_corpus(spec);
            fs::create_directories(gen_out);
            fs::path out_dir(gen_out);
            w2w::write_weight_vectors(synth.corpus, synth.layout, out_dir / "corpus.st");

            w2w::TensorArchive truth;
            truth.add_f32("__mu_star__", {synth.truth.mu_star.size()}, synth.truth.mu_star);
            truth.add_f32("__basis__", {synth.truth.basis.rows(), synth.truth.basis.cols()},
                          synth.truth.basis.data());
            truth.add_f32("__g_coeff__", {synth.truth.g_coeff.size()}, synth.truth.g_coeff);
            truth.add_f32("__g_full__", {synth.truth.g_full.size()}, synth.truth.g_full);
            w2w::write_archive(truth, out_dir / "truth.st");

            json labels = json::object();
            for (std::size_t i = 0; i < synth.corpus.size(); ++i)
                labels[synth.corpus[i].adapter_id] = synth.labels[i] > 0 ? "+1" : "-1";
            atomic_write_text(out_dir / "labels.json",
                              json{{"user_id", "synthetic"}, {"labels", labels}}.dump(2) + "\n");

            if (gen_adapters) {
                fs::path adapters = out_dir / "adapters";
                fs::create_directories(adapters);
                std::vector<w2w::ManifestEntry> manifest;
                for (const auto& wv : synth.corpus) {
                    w2w::AdapterBundle b = w2w::export_rank1(w2w::unflatten(wv, synth.layout));
                    fs::path p = adapters / (wv.adapter_id + ".safetensors");
                    w2w::save_adapter(b, p);
                    manifest.push_back({wv.adapter_id, p.string(), 1, "synthetic", {}});
                }
                w2w::write_manifest(manifest, out_dir / "manifest.jsonl");
            }
            write_provenance(out_dir / "corpus.st", "gen-synthetic",
                             json{{"seed", spec.seed}, {"n", spec.corpus_size}, {"layers", spec.layer_count},
                                  {"d", spec.layer_d}, {"k", spec.layer_k}, {"m_true", spec.m_true},
                                  {"scale", spec.scale}, {"separation", spec.separation},
                                  {"noise", spec.noise}},
                             {});
            std::cerr << "wrote synthetic corpus to " << gen_out << "\n";
        } else if (*report) {
            json out;
            if (!rp_base.empty()) {
                auto rep = w2w::fidelity_report(w2w::read_embedding_table(rp_base),
                                                w2w::read_embedding_table(rp_full),
                                                w2w::read_embedding_table(rp_rank1));
                out["fidelity"] = rep.to_json();
                std::cerr << "base-vs-full  " << rep.full_mean << " ± " << rep.full_std << "\n";
                std::cerr << "base-vs-rank1 " << rep.rank1_mean << " ± " << rep.rank1_std << "\n";
            }
            if (!rp_synth.empty()) {
                auto [space, layout] = w2w::load_space(strip_st(rp_space));
                w2w::EditDirection dir = w2w::load_direction(strip_st(rp_dir));
                fs::path synth_dir(rp_synth);
                auto [corpus, corpus_layout] = w2w::read_weight_vectors(synth_dir / "corpus.st");
                w2w::TensorArchive truth_a = w2w::read_archive(synth_dir / "truth.st");
                w2w::SyntheticCorpus synth;
                synth.corpus = corpus;
                synth.layout = corpus_layout;
                synth.truth.mu_star = truth_a.f32_values("__mu_star__");
                const auto& binfo = truth_a.info("__basis__");
                synth.truth.basis = w2w::Matrix(binfo.shape.at(0), binfo.shape.at(1));
                synth.truth.basis.data() = truth_a.f32_values("__basis__");
                synth.truth.g_coeff = truth_a.f32_values("__g_coeff__");
                synth.truth.g_full = truth_a.f32_values("__g_full__");
                auto rep = w2w::recovery_report(space, dir, synth);
                out["recovery"] = rep.to_json();
                std::cerr << "max principal angle (rad): " << rep.max_principal_angle << "\n"
                          << "direction |cos|:           " << rep.direction_cosine << "\n"
                          << "holdout accuracy:          " << rep.holdout_accuracy << "\n"
                          << "reconstruction RMSE:       " << rep.reconstruction_rmse << "\n";
            }
            if (out.empty()) throw w2w::EmptySelection("report: nothing to do; pass recovery or fidelity inputs");
            atomic_write_text(rp_out, out.dump(2) + "\n");
            std::cout << out.dump(2) << "\n";
        } else if (*fetch) {
            if (fe_endpoint.empty()) {
                const char* env = std::getenv("W2W_EMBED_ENDPOINT");
                if (env) fe_endpoint = env;
            }
            if (fe_endpoint.empty())
                throw w2w::EndpointError("no endpoint: pass --endpoint or set W2W_EMBED_ENDPOINT");
            w2w::EmbedRequest req;
            req.endpoint = fe_endpoint;
            req.modality = fe_modality;
            req.batch_size = fe_batch;
            req.max_attempts = fe_attempts;
            req.cache_dir = fe_cache;
            std::ifstream in(fe_inputs);
            if (!in) throw w2w::IoFailure("cannot open '" + fe_inputs + "'");
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                json j = json::parse(line);
                w2w::EmbedItem item;
                item.item_id = j.at("id").get<std::string>();
                if (j.contains("path")) {
                    item.payload = j["path"].get<std::string>();
                    item.is_path = true;
                } else {
                    item.payload = j.at("text").get<std::string>();
                }
                req.items.push_back(std::move(item));
            }
#ifndef W2W_NO_HTTP
            HttpTransport transport;
            if (const char* tok = std::getenv("W2W_EMBED_TOKEN")) transport.auth_token = tok;
            w2w::EmbeddingTable table = w2w::fetch_embeddings(req, transport);
#else
            throw w2w::EndpointError("built without HTTP support");
#endif
            w2w::write_embedding_table(table, fe_out);
            write_provenance(fe_out, "fetch-embeds",
                             json{{"endpoint", fe_endpoint}, {"modality", fe_modality}}, {fs::path(fe_inputs)});
            std::cerr << "wrote " << fe_out << " (" << table.items.size() << " items)\n";
        }
    } catch (const w2w::Error& e) {
        int status = 0;
        char* demangled = abi::__cxa_demangle(typeid(e).name(), nullptr, nullptr, &status);
        std::string name = status == 0 && demangled ? demangled : typeid(e).name();
        std::free(demangled);
        json err{{"error", name}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json err{{"error", "unexpected"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
