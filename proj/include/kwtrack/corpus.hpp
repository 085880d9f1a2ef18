#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "time.hpp"
#include "tokenize.hpp"

namespace kwtrack {

struct Document {
    std::string id;
    Instant timestamp;
    std::string text;

    friend bool operator==(const Document&, const Document&) = default;
};

// Distinct token surfaces of a document, sorted.
inline std::vector<std::string> token_set(std::string_view text) {
    std::vector<std::string> out;
    for (auto& t : tokenize(text)) out.push_back(std::move(t.surface));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Documents collected over [start, end), ascending by timestamp (stable on id
// for equal timestamps).
struct CorpusWindow {
    Instant start;
    Instant end;
    Duration bucket_width{std::chrono::hours{1}};
    std::vector<Document> documents;

    TimeRange range() const { return {start, end}; }
    std::size_t size() const { return documents.size(); }
    bool empty() const { return documents.empty(); }
};

inline void sort_documents(std::vector<Document>& docs) {
    std::stable_sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) {
        return a.timestamp < b.timestamp;
    });
}

// Builds a window from arbitrary documents, keeping the ones inside `range`.
inline CorpusWindow make_window(std::vector<Document> docs, TimeRange range,
                                Duration bucket_width = std::chrono::hours{1}) {
    if (!(range.start < range.end)) throw std::invalid_argument("window start must precede end");
    if (bucket_width <= Duration::zero()) throw std::invalid_argument("bucket width must be positive");
    std::erase_if(docs, [&](const Document& d) { return !range.contains(d.timestamp); });
    sort_documents(docs);
    return CorpusWindow{range.start, range.end, bucket_width, std::move(docs)};
}

// ---------------------------------------------------------------------------
// NDJSON records: {"id": "...", "created_at": "<ISO-8601 UTC>", "text": "..."}

inline std::optional<Document> parse_document(std::string_view line) {
    auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    auto id = j.find("id");
    auto ts = j.find("created_at");
    auto text = j.find("text");
    if (id == j.end() || ts == j.end() || text == j.end()) return std::nullopt;
    if (!ts->is_string() || !text->is_string()) return std::nullopt;
    std::string id_str;
    if (id->is_string()) {
        id_str = id->get<std::string>();
    } else if (id->is_number_integer()) {
        id_str = id->dump();
    } else {
        return std::nullopt;
    }
    if (id_str.empty()) return std::nullopt;
    auto when = parse_iso8601(ts->get_ref<const std::string&>());
    if (!when) return std::nullopt;
    return Document{std::move(id_str), *when, text->get<std::string>()};
}

inline std::string to_ndjson(const Document& d) {
    nlohmann::json j = {{"id", d.id}, {"created_at", format_iso8601(d.timestamp)}, {"text", d.text}};
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline void write_documents(std::ostream& out, const std::vector<Document>& docs) {
    for (const auto& d : docs) out << to_ndjson(d) << '\n';
}

inline void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path.string());
    write_documents(out, docs);
}

struct IngestStats {
    std::size_t lines = 0;
    std::size_t accepted = 0;
    std::size_t malformed = 0;
    std::size_t out_of_range = 0;
    std::size_t duplicate_id = 0;
};

struct IngestResult {
    CorpusWindow window;
    IngestStats stats;
};

// Reads NDJSON documents, keeping those inside `range`. Malformed lines and
// repeated ids are counted and skipped. Blank lines are ignored.
inline IngestResult ingest(std::istream& in, TimeRange range,
                           Duration bucket_width = std::chrono::hours{1}) {
    IngestResult res;
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++res.stats.lines;
        auto doc = parse_document(line);
        if (!doc) {
            ++res.stats.malformed;
            continue;
        }
        if (!range.contains(doc->timestamp)) {
            ++res.stats.out_of_range;
            continue;
        }
        if (!seen.insert(doc->id).second) {
            ++res.stats.duplicate_id;
            continue;
        }
        docs.push_back(std::move(*doc));
    }
    if (in.bad()) throw IngestError("read failure");
    res.stats.accepted = docs.size();
    res.window = make_window(std::move(docs), range, bucket_width);
    return res;
}

inline IngestResult ingest_file(const std::filesystem::path& path, TimeRange range,
                                Duration bucket_width = std::chrono::hours{1}) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open " + path.string());
    return ingest(in, range, bucket_width);
}

// Every record of a file regardless of time; window bounds are derived from
// the data (end is one second past the last document).
inline IngestResult ingest_all(const std::filesystem::path& path,
                               Duration bucket_width = std::chrono::hours{1}) {
    TimeRange everything{from_epoch_seconds(-(std::int64_t{1} << 40)),
                         from_epoch_seconds(std::int64_t{1} << 40)};
    auto res = ingest_file(path, everything, bucket_width);
    if (!res.window.empty()) {
        res.window.start = res.window.documents.front().timestamp;
        res.window.end = res.window.documents.back().timestamp + Duration{1};
    }
    return res;
}

// ---------------------------------------------------------------------------

inline bool contains_any(const std::vector<std::string>& sorted_tokens,
                         const std::set<std::string>& keywords) {
    for (const auto& t : sorted_tokens)
        if (keywords.count(t)) return true;
    return false;
}

// Documents whose token set intersects `keywords` (exact normalized match).
inline CorpusWindow filter(const CorpusWindow& window, const std::set<std::string>& keywords) {
    if (keywords.empty()) throw std::invalid_argument("filter requires at least one keyword");
    CorpusWindow out{window.start, window.end, window.bucket_width, {}};
    for (const auto& d : window.documents)
        if (contains_any(token_set(d.text), keywords)) out.documents.push_back(d);
    return out;
}

inline CorpusWindow filter(const CorpusWindow& window, const std::vector<std::string>& keywords) {
    return filter(window, std::set<std::string>(keywords.begin(), keywords.end()));
}

// Per-bucket document frequency of one token over a window.
struct FrequencySeries {
    Token token;
    Instant origin;
    Duration bucket_width{std::chrono::hours{1}};
    std::vector<std::int64_t> counts;

    std::size_t size() const { return counts.size(); }
    Instant bucket_start(std::size_t i) const {
        return origin + bucket_width * static_cast<std::int64_t>(i);
    }
    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
    std::int64_t last() const { return counts.empty() ? 0 : counts.back(); }
};

inline std::size_t bucket_count(TimeRange range, Duration bucket_width) {
    auto span = (range.end - range.start).count();
    auto w = bucket_width.count();
    return static_cast<std::size_t>((span + w - 1) / w);
}

// Series for many tokens in one pass over the window. Tokens absent from the
// window get an all-zero series spanning it.
inline std::map<std::string, FrequencySeries> frequency_table(const CorpusWindow& window,
                                                              const std::vector<std::string>& tokens,
                                                              Duration bucket_width) {
    if (bucket_width <= Duration::zero()) throw std::invalid_argument("bucket width must be positive");
    const std::size_t n = bucket_count(window.range(), bucket_width);
    std::map<std::string, FrequencySeries> table;
    for (const auto& t : tokens)
        table.emplace(t, FrequencySeries{make_token(t), window.start, bucket_width,
                                         std::vector<std::int64_t>(n, 0)});
    for (const auto& d : window.documents) {
        if (!window.range().contains(d.timestamp)) continue;
        auto b = static_cast<std::size_t>((d.timestamp - window.start) / bucket_width);
        for (const auto& t : token_set(d.text)) {
            auto it = table.find(t);
            if (it != table.end()) ++it->second.counts[b];
        }
    }
    return table;
}

inline FrequencySeries frequency_series(const CorpusWindow& window, const std::string& token,
                                        Duration bucket_width) {
    return frequency_table(window, {token}, bucket_width).at(token);
}

// Document frequency of every token over the whole window.
inline std::map<std::string, std::int64_t> document_frequencies(const CorpusWindow& window) {
    std::map<std::string, std::int64_t> df;
    for (const auto& d : window.documents)
        for (auto& t : token_set(d.text)) ++df[t];
    return df;
}

// The `n` hashtags with the highest document frequency, ties broken
// lexicographically.
inline std::vector<std::string> top_hashtags(const CorpusWindow& window, std::size_t n) {
    std::vector<std::pair<std::string, std::int64_t>> tags;
    for (auto& [tok, c] : document_frequencies(window))
        if (kind_of(tok) == TokenKind::hashtag) tags.emplace_back(tok, c);
    std::sort(tags.begin(), tags.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tags.size() && i < n; ++i) out.push_back(tags[i].first);
    return out;
}

// ---------------------------------------------------------------------------
// Document sources.

class Fetcher {
public:
    virtual ~Fetcher() = default;

    // Documents inside `range` matching at least one keyword (all documents in
    // range when `keywords` is empty).
    virtual std::vector<Document> pull(const std::vector<std::string>& keywords, TimeRange range) = 0;
};

// Serves documents from an NDJSON archive, standing in for a platform client.
class ReplayFetcher : public Fetcher {
public:
    explicit ReplayFetcher(std::vector<Document> archive) : archive_(std::move(archive)) {
        sort_documents(archive_);
    }

    explicit ReplayFetcher(const std::filesystem::path& path)
        : ReplayFetcher(ingest_all(path).window.documents) {}

    std::vector<Document> pull(const std::vector<std::string>& keywords, TimeRange range) override {
        std::set<std::string> kw(keywords.begin(), keywords.end());
        std::vector<Document> out;
        auto lo = std::lower_bound(archive_.begin(), archive_.end(), range.start,
                                   [](const Document& d, Instant t) { return d.timestamp < t; });
        for (auto it = lo; it != archive_.end() && it->timestamp < range.end; ++it)
            if (kw.empty() || contains_any(token_set(it->text), kw)) out.push_back(*it);
        return out;
    }

    const std::vector<Document>& archive() const { return archive_; }

private:
    std::vector<Document> archive_;
};

}  // namespace kwtrack
