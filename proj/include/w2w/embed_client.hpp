#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "w2w/digest.hpp"
#include "w2w/errors.hpp"
#include "w2w/preference.hpp"

namespace w2w {

/// Transport abstraction so tests run against a mock; the HTTP implementation
/// lives in the CLI where cpp-httplib is linked.
struct Transport {
    virtual ~Transport() = default;
    /// POSTs a JSON body, returns (status, response body).
    virtual std::pair<int, std::string> post(const std::string& url, const std::string& body) = 0;
};

struct EmbedItem {
    std::string item_id;
    std::string payload;   // raw text, or a file path whose contents are sent
    bool is_path = false;
};

struct EmbedRequest {
    std::vector<EmbedItem> items;
    std::string modality = "text";  // "image" | "text"
    std::string endpoint;
    std::size_t batch_size = 32;
    std::size_t max_attempts = 3;
    std::filesystem::path cache_dir;
};

namespace detail {

inline std::string content_of(const EmbedItem& item) {
    if (!item.is_path) return item.payload;
    std::ifstream in(item.payload, std::ios::binary);
    if (!in) throw IoFailure("cannot read payload file '" + item.payload + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Cache key: endpoint digest + content digest; one archive per content digest.
inline std::filesystem::path cache_path(const EmbedRequest& req, const std::string& content) {
    std::string key = to_hex(fnv1a64(req.endpoint)) + "_" + to_hex(fnv1a64(content));
    return req.cache_dir / (key + ".st");
}

inline bool cache_lookup(const EmbedRequest& req, const std::string& content, std::vector<float>& out) {
    if (req.cache_dir.empty()) return false;
    auto p = cache_path(req, content);
    if (!std::filesystem::exists(p)) return false;
    try {
        TensorArchive a = read_archive(p);
        if (a.metadata.at("content_digest") != to_hex(fnv1a64(content))) return false;  // corrupt: refetch
        out = a.f32_values("__embedding__");
        return true;
    } catch (const Error&) {
        return false;  // unreadable cache entries are treated as misses
    }
}

inline void cache_store(const EmbedRequest& req, const std::string& content, const std::vector<float>& v) {
    if (req.cache_dir.empty()) return;
    std::filesystem::create_directories(req.cache_dir);
    TensorArchive a;
    a.add_f32("__embedding__", {v.size()}, v);
    a.metadata["content_digest"] = to_hex(fnv1a64(content));
    write_archive(a, cache_path(req, content));
}

}  // namespace detail

/// Fetches embeddings for all items, serving cached ids without network
/// traffic and writing new results through to the cache. Wire format:
/// POST {"modality": ..., "inputs": [...]} → {"embeddings": [[...], ...]}.
inline EmbeddingTable fetch_embeddings(const EmbedRequest& req, Transport& transport) {
    if (req.items.empty()) throw NoExamples("empty embed request");
    if (req.batch_size < 1) throw InvalidSpec("batch size must be ≥ 1");
    {
        std::set<std::string> ids;
        for (const auto& it : req.items)
            if (!ids.insert(it.item_id).second)
                throw IdSetMismatch("duplicate item id '" + it.item_id + "' in request");
    }

    EmbeddingTable table;
    table.modality = req.modality;
    table.source = req.endpoint;

    struct Pending {
        const EmbedItem* item;
        std::string content;
    };
    std::vector<Pending> pending;
    for (const auto& item : req.items) {
        std::string content = detail::content_of(item);
        std::vector<float> cached;
        if (detail::cache_lookup(req, content, cached))
            table.insert(item.item_id, std::move(cached));
        else
            pending.push_back({&item, std::move(content)});
    }

    for (std::size_t start = 0; start < pending.size(); start += req.batch_size) {
        std::size_t end = std::min(pending.size(), start + req.batch_size);
        nlohmann::json inputs = nlohmann::json::array();
        for (std::size_t i = start; i < end; ++i) inputs.push_back(pending[i].content);
        nlohmann::json body{{"modality", req.modality}, {"inputs", inputs}};
        std::string body_str = body.dump();

        std::string failed_ids;
        for (std::size_t i = start; i < end; ++i) failed_ids += (i > start ? "," : "") + pending[i].item->item_id;

        nlohmann::json reply;
        bool ok = false;
        std::string last_error;
        for (std::size_t attempt = 0; attempt < req.max_attempts && !ok; ++attempt) {
            auto [status, resp] = transport.post(req.endpoint, body_str);
            if (status != 200) {
                last_error = "HTTP " + std::to_string(status);
                continue;
            }
            reply = nlohmann::json::parse(resp, nullptr, false);
            if (reply.is_discarded() || !reply.contains("embeddings")) {
                last_error = "unparseable response";
                continue;
            }
            ok = true;
        }
        if (!ok) throw EndpointError("batch [" + failed_ids + "] failed: " + last_error);
        const auto& embs = reply["embeddings"];
        if (embs.size() != end - start)
            throw EndpointError("batch [" + failed_ids + "]: expected " + std::to_string(end - start) +
                                " embeddings, got " + std::to_string(embs.size()));
        for (std::size_t i = start; i < end; ++i) {
            std::vector<float> v;
            for (const auto& x : embs[i - start]) v.push_back(x.get<float>());
            if (table.dim != 0 && v.size() != table.dim)
                throw DimensionDrift("endpoint returned dimension " + std::to_string(v.size()) +
                                     " after establishing " + std::to_string(table.dim));
            double n = norm2(v);
            if (n == 0.0) throw EndpointError("zero embedding for '" + pending[i].item->item_id + "'");
            scale_inplace(v, 1.0 / n);
            detail::cache_store(req, pending[i].content, v);
            table.insert(pending[i].item->item_id, std::move(v));
        }
    }
    return table;
}

}  // namespace w2w
