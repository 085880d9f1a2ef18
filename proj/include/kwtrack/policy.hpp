#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "embedding.hpp"
#include "error.hpp"
#include "forecast.hpp"
#include "time.hpp"
#include "tokenize.hpp"

namespace kwtrack {

// Canonical form of a user-supplied keyword: exactly one token after
// tokenization, e.g. "#MeToo" -> "#metoo".
inline std::string normalize_keyword(std::string_view raw) {
    auto toks = tokenize(raw);
    if (toks.size() != 1 || toks.front().surface.size() != raw.size())
        throw ValidationError("invalid_token", {std::string(raw)});
    return toks.front().surface;
}

// Tracked keywords, kept sorted. `added` remembers the round each keyword
// entered the set, so age = round - added.
class KeywordSet {
public:
    KeywordSet() = default;
    explicit KeywordSet(int round, std::size_t cap = 15) : round_(round), cap_(cap) {}

    static KeywordSet seeded(const std::vector<std::string>& tokens, int round = 0, std::size_t cap = 15) {
        KeywordSet s(round, cap);
        for (const auto& t : tokens) s.add(t, round);
        return s;
    }

    int round() const { return round_; }
    std::size_t cap() const { return cap_; }
    std::size_t size() const { return added_.size(); }
    bool empty() const { return added_.empty(); }
    bool contains(const std::string& tok) const { return added_.count(tok) != 0; }

    std::vector<std::string> tokens() const {
        std::vector<std::string> out;
        for (const auto& [t, _] : added_) out.push_back(t);
        return out;
    }

    int added_round(const std::string& tok) const {
        auto it = added_.find(tok);
        if (it == added_.end()) throw NotFound(tok);
        return it->second;
    }
    int age(const std::string& tok) const { return round_ - added_round(tok); }

    void add(const std::string& tok, int added_round) {
        if (contains(tok)) throw ValidationError("duplicate", {tok});
        if (added_.size() >= cap_) throw ValidationError("cap_exceeded", {tok});
        added_.emplace(tok, added_round);
    }
    void remove(const std::string& tok) {
        if (!added_.erase(tok)) throw NotFound(tok);
    }
    void set_round(int r) { round_ = r; }
    void set_cap(std::size_t c) { cap_ = c; }

    friend bool operator==(const KeywordSet&, const KeywordSet&) = default;

private:
    int round_ = 0;
    std::size_t cap_ = 15;
    std::map<std::string, int> added_;
};

inline void to_json(nlohmann::json& j, const KeywordSet& s) {
    auto kws = nlohmann::json::array();
    for (const auto& t : s.tokens()) kws.push_back({{"token", t}, {"added_round", s.added_round(t)}});
    j = {{"round", s.round()}, {"cap", s.cap()}, {"keywords", kws}};
}

inline void from_json(const nlohmann::json& j, KeywordSet& s) {
    s = KeywordSet(j.at("round").get<int>(), j.at("cap").get<std::size_t>());
    for (const auto& k : j.at("keywords")) s.add(k.at("token").get<std::string>(), k.at("added_round").get<int>());
}

struct PolicyWeights {
    double alpha = 1.0;  // forecast slope
    double beta = 1.0;   // mean cosine distance to tracked keywords
    double gamma = 1.0;  // normalized frequency
    double delta = 0.0;  // normalized trend-line residual variance

    void validate() const {
        for (double x : {alpha, beta, gamma, delta})
            if (!std::isfinite(x)) throw std::invalid_argument("policy weights must be finite");
        if (alpha == 0 && beta == 0 && gamma == 0 && delta == 0)
            throw std::invalid_argument("at least one policy weight must be nonzero");
    }
};

struct CandidateKeyword {
    Token token;
    double m = 0.0;
    double dbar = 0.0;
    double f = 0.0;
    double v = 0.0;
    double score = 0.0;
    std::int64_t frequency = 0;  // raw document count behind f
    bool unforecast = false;
    std::optional<Trend> trend;
};

inline void to_json(nlohmann::json& j, const CandidateKeyword& c) {
    j = {{"token", c.token.surface}, {"kind", to_string(c.token.kind)}, {"m", c.m}, {"dbar", c.dbar},
         {"f", c.f}, {"v", c.v}, {"score", c.score}, {"frequency", c.frequency},
         {"unforecast", c.unforecast}};
    if (c.trend) j["trend"] = to_string(*c.trend);
}

inline std::optional<Trend> trend_from_string(std::string_view s) {
    if (s == "rising") return Trend::rising;
    if (s == "declining") return Trend::declining;
    if (s == "flat") return Trend::flat;
    return std::nullopt;
}

inline void from_json(const nlohmann::json& j, CandidateKeyword& c) {
    c.token = make_token(j.at("token").get<std::string>());
    c.m = j.at("m").get<double>();
    c.dbar = j.at("dbar").get<double>();
    c.f = j.at("f").get<double>();
    c.v = j.at("v").get<double>();
    c.score = j.at("score").get<double>();
    c.frequency = j.at("frequency").get<std::int64_t>();
    c.unforecast = j.at("unforecast").get<bool>();
    c.trend = j.contains("trend") ? trend_from_string(j["trend"].get<std::string>()) : std::nullopt;
}

enum class RemovalReason { declining, low_frequency, stale };

inline std::string_view to_string(RemovalReason r) {
    switch (r) {
        case RemovalReason::declining: return "declining";
        case RemovalReason::low_frequency: return "low_frequency";
        case RemovalReason::stale: return "stale";
    }
    return "stale";
}

inline RemovalReason removal_reason_from_string(std::string_view s) {
    if (s == "declining") return RemovalReason::declining;
    if (s == "low_frequency") return RemovalReason::low_frequency;
    if (s == "stale") return RemovalReason::stale;
    throw std::invalid_argument("unknown removal reason: " + std::string(s));
}

struct Removal {
    std::string token;
    RemovalReason reason;

    friend bool operator==(const Removal&, const Removal&) = default;
};

enum class ProposalStatus { pending, approved, amended, auto_applied };

inline std::string_view to_string(ProposalStatus s) {
    switch (s) {
        case ProposalStatus::pending: return "pending";
        case ProposalStatus::approved: return "approved";
        case ProposalStatus::amended: return "amended";
        case ProposalStatus::auto_applied: return "auto_applied";
    }
    return "pending";
}

inline ProposalStatus proposal_status_from_string(std::string_view s) {
    if (s == "pending") return ProposalStatus::pending;
    if (s == "approved") return ProposalStatus::approved;
    if (s == "amended") return ProposalStatus::amended;
    if (s == "auto_applied") return ProposalStatus::auto_applied;
    throw std::invalid_argument("unknown proposal status: " + std::string(s));
}

struct Proposal {
    int round = 0;
    std::vector<CandidateKeyword> additions;  // best first
    std::vector<Removal> removals;
    ProposalStatus status = ProposalStatus::pending;

    std::vector<std::string> addition_tokens() const {
        std::vector<std::string> out;
        for (const auto& c : additions) out.push_back(c.token.surface);
        return out;
    }
    std::vector<std::string> removal_tokens() const {
        std::vector<std::string> out;
        for (const auto& r : removals) out.push_back(r.token);
        return out;
    }
};

inline void to_json(nlohmann::json& j, const Proposal& p) {
    auto rem = nlohmann::json::array();
    for (const auto& r : p.removals) rem.push_back({{"token", r.token}, {"reason", to_string(r.reason)}});
    j = {{"round", p.round}, {"additions", p.additions}, {"removals", rem}, {"status", to_string(p.status)}};
}

inline void from_json(const nlohmann::json& j, Proposal& p) {
    p.round = j.at("round").get<int>();
    p.additions = j.at("additions").get<std::vector<CandidateKeyword>>();
    p.removals.clear();
    for (const auto& r : j.at("removals"))
        p.removals.push_back({r.at("token").get<std::string>(), removal_reason_from_string(r.at("reason").get<std::string>())});
    p.status = proposal_status_from_string(j.at("status").get<std::string>());
}

// ---------------------------------------------------------------------------
// Candidate expansion and scoring

struct Expansion {
    std::vector<std::string> candidates;  // sorted, incumbents excluded
    std::vector<std::string> skipped;     // tracked keywords missing from the vocabulary
};

// Union of each tracked keyword's k nearest neighbors, keeping hashtags and
// mentions only. Throws NotFound when no tracked keyword is in the vocabulary.
inline Expansion expand_candidates(const KeywordSet& keywords, const EmbeddingModel& model, std::size_t k = 30) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    Expansion out;
    std::set<std::string> pool;
    bool any = false;
    for (const auto& kw : keywords.tokens()) {
        if (!model.vocabulary().contains(kw)) {
            out.skipped.push_back(kw);
            continue;
        }
        any = true;
        for (const auto& n : nearest_neighbors(model, kw, k).neighbors) {
            auto kind = kind_of(n.token);
            if (kind == TokenKind::word || keywords.contains(n.token)) continue;
            pool.insert(n.token);
        }
    }
    if (!any) throw NotFound(keywords.empty() ? std::string("<empty keyword set>") : keywords.tokens().front());
    out.candidates.assign(pool.begin(), pool.end());
    return out;
}

// Mean of (1 - cos) between `token` and every tracked keyword in the
// vocabulary (other than `token` itself).
inline double mean_cosine_distance(const std::string& token, const KeywordSet& keywords, const EmbeddingModel& model) {
    const auto& unit = model.unit_vectors();
    const auto ti = model.vocabulary().index_of(token);
    double sum = 0.0;
    int n = 0;
    for (const auto& kw : keywords.tokens()) {
        if (kw == token) continue;
        auto ki = model.vocabulary().find(kw);
        if (!ki) continue;
        double cos = std::clamp(unit.row(static_cast<Eigen::Index>(ti)).dot(unit.row(static_cast<Eigen::Index>(*ki))), -1.0, 1.0);
        sum += 1.0 - cos;
        ++n;
    }
    return n == 0 ? 0.0 : sum / n;
}

// Everything the policy reads for one round. Forecasts are keyed by token; a
// missing entry means the keyword could not be forecast.
struct RoundInputs {
    KeywordSet keywords;
    const EmbeddingModel* model = nullptr;
    std::map<std::string, Forecast> forecasts;
    std::map<std::string, std::int64_t> frequencies;  // document counts in the round window

    std::int64_t frequency(const std::string& tok) const {
        auto it = frequencies.find(tok);
        return it == frequencies.end() ? 0 : it->second;
    }
    const Forecast* forecast(const std::string& tok) const {
        auto it = forecasts.find(tok);
        return it == forecasts.end() ? nullptr : &it->second;
    }
};

// Score one token given the pool maxima used to normalize f and v.
inline CandidateKeyword score(const std::string& token, const KeywordSet& keywords, const EmbeddingModel& model,
                              const Forecast* fc, std::int64_t frequency, double max_frequency, double max_variance,
                              const PolicyWeights& w) {
    CandidateKeyword c;
    c.token = make_token(token);
    c.frequency = frequency;
    c.dbar = mean_cosine_distance(token, keywords, model);
    c.f = max_frequency > 0 ? static_cast<double>(frequency) / max_frequency : 0.0;
    if (fc) {
        c.m = ls_slope(fc->points);
        double raw_v = trend_residual_variance(fc->points);
        c.v = max_variance > 0 ? raw_v / max_variance : 0.0;
        c.trend = fc->trend;
    } else {
        c.unforecast = true;
    }
    c.score = w.alpha * c.m + w.beta * c.dbar + w.gamma * c.f + w.delta * c.v;
    return c;
}

// Scores a pool of tokens, normalizing f and v by the pool maxima.
inline std::vector<CandidateKeyword> score_pool(const std::vector<std::string>& tokens, const RoundInputs& in,
                                                const PolicyWeights& w) {
    double max_f = 0.0, max_v = 0.0;
    for (const auto& t : tokens) {
        max_f = std::max(max_f, static_cast<double>(in.frequency(t)));
        if (auto* fc = in.forecast(t)) max_v = std::max(max_v, trend_residual_variance(fc->points));
    }
    std::vector<CandidateKeyword> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens)
        out.push_back(score(t, in.keywords, *in.model, in.forecast(t), in.frequency(t), max_f, max_v, w));
    return out;
}

// Higher score first, then higher raw frequency, then lexicographic.
inline bool ranks_before(const CandidateKeyword& a, const CandidateKeyword& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.token.surface < b.token.surface;
}

inline std::vector<CandidateKeyword> select_top(std::vector<CandidateKeyword> pool, std::size_t take) {
    std::sort(pool.begin(), pool.end(), ranks_before);
    if (pool.size() > take) pool.resize(take);
    return pool;
}

struct PolicyOptions {
    std::size_t add_limit = 5;
    std::int64_t min_count = 10;
    std::size_t neighbors = 30;
    int removal_age = 3;
    // Replace the whole set with the selected candidates instead of editing it.
    bool literal_replacement = false;
};

// Builds the proposal for the round described by `in` (steps shared by the
// automatic and semi-automatic paths).
inline Proposal build_proposal(const RoundInputs& in, const PolicyWeights& w, const PolicyOptions& opt) {
    if (!in.model) throw std::invalid_argument("round inputs carry no embedding model");
    w.validate();
    const auto& kws = in.keywords;
    auto expansion = expand_candidates(kws, *in.model, opt.neighbors);

    std::vector<std::string> survivors;
    for (const auto& c : expansion.candidates) {
        const Forecast* fc = in.forecast(c);
        if (fc && fc->trend == Trend::declining) continue;
        if (in.frequency(c) < opt.min_count) continue;
        survivors.push_back(c);
    }
    auto scored = score_pool(survivors, in, w);

    Proposal p;
    p.round = kws.round();

    if (opt.literal_replacement) {
        if (scored.empty()) return p;
        for (const auto& t : kws.tokens()) p.removals.push_back({t, RemovalReason::stale});
        p.additions = select_top(std::move(scored), kws.cap());
        return p;
    }

    // Old incumbents leave when their forecast declines or their usage has
    // dropped below min_count (stale when they vanished from the corpus).
    std::set<std::string> removed;
    for (const auto& t : kws.tokens()) {
        if (kws.age(t) < opt.removal_age) continue;
        const Forecast* fc = in.forecast(t);
        std::optional<RemovalReason> why;
        if (fc && fc->trend == Trend::declining) why = RemovalReason::declining;
        else if (!in.model->vocabulary().contains(t)) why = RemovalReason::stale;
        else if (in.frequency(t) < opt.min_count) why = RemovalReason::low_frequency;
        if (why) {
            p.removals.push_back({t, *why});
            removed.insert(t);
        }
    }

    std::vector<std::string> kept;
    for (const auto& t : kws.tokens())
        if (!removed.count(t)) kept.push_back(t);
    if (kept.size() > kws.cap()) {
        // Out-of-vocabulary incumbents go first, then the lowest scored.
        std::vector<std::string> in_vocab;
        std::vector<std::string> stale;
        for (const auto& t : kept) (in.model->vocabulary().contains(t) ? in_vocab : stale).push_back(t);
        auto inc = score_pool(in_vocab, in, w);
        std::sort(inc.begin(), inc.end(), [](const auto& a, const auto& b) { return ranks_before(b, a); });
        std::size_t excess = kept.size() - kws.cap();
        for (std::size_t i = 0; i < stale.size() && excess > 0; ++i, --excess) {
            p.removals.push_back({stale[i], RemovalReason::stale});
            removed.insert(stale[i]);
        }
        for (std::size_t i = 0; i < inc.size() && excess > 0; ++i, --excess) {
            p.removals.push_back({inc[i].token.surface, RemovalReason::low_frequency});
            removed.insert(inc[i].token.surface);
        }
        kept.erase(std::remove_if(kept.begin(), kept.end(), [&](const auto& t) { return removed.count(t) != 0; }),
                   kept.end());
    }

    const std::size_t slots = kws.cap() - kept.size();
    p.additions = select_top(std::move(scored), std::min(opt.add_limit, slots));
    return p;
}

// Applies additions/removals to `before`, producing the set for the next round.
inline KeywordSet apply_delta(const KeywordSet& before, const std::vector<std::string>& additions,
                              const std::vector<std::string>& removals) {
    KeywordSet next = before;
    next.set_round(before.round() + 1);
    for (const auto& t : removals) next.remove(t);
    for (const auto& t : additions) next.add(t, next.round());
    return next;
}

enum class DecidedBy { auto_policy, human };

inline std::string_view to_string(DecidedBy d) { return d == DecidedBy::human ? "human" : "auto"; }

// One persisted keyword-set transition. Round transitions advance the round;
// manual edits between rounds keep it.
struct RoundRecord {
    int round = 0;
    KeywordSet before;
    KeywordSet after;
    std::optional<Proposal> proposal;
    std::vector<std::string> added;
    std::vector<std::string> removed;
    DecidedBy decided_by = DecidedBy::auto_policy;
    Instant timestamp{};
};

inline void to_json(nlohmann::json& j, const RoundRecord& r) {
    j = {{"round", r.round},
         {"keyword_set_before", r.before},
         {"keyword_set_after", r.after},
         {"proposal", r.proposal ? nlohmann::json(*r.proposal) : nlohmann::json(nullptr)},
         {"added", r.added},
         {"removed", r.removed},
         {"decided_by", to_string(r.decided_by)},
         {"timestamp", format_iso8601(r.timestamp)}};
}

inline void from_json(const nlohmann::json& j, RoundRecord& r) {
    r.round = j.at("round").get<int>();
    r.before = j.at("keyword_set_before").get<KeywordSet>();
    r.after = j.at("keyword_set_after").get<KeywordSet>();
    r.proposal = j.at("proposal").is_null() ? std::nullopt : std::optional<Proposal>(j["proposal"].get<Proposal>());
    r.added = j.at("added").get<std::vector<std::string>>();
    r.removed = j.at("removed").get<std::vector<std::string>>();
    r.decided_by = j.at("decided_by").get<std::string>() == "human" ? DecidedBy::human : DecidedBy::auto_policy;
    auto ts = parse_iso8601(j.at("timestamp").get<std::string>());
    if (!ts) throw std::invalid_argument("bad record timestamp");
    r.timestamp = *ts;
}

struct AutoResult {
    KeywordSet keywords;
    Proposal proposal;
    RoundRecord record;
};

inline AutoResult next_keywords_auto(const RoundInputs& in, const PolicyWeights& w = {}, const PolicyOptions& opt = {},
                                     Instant timestamp = {}) {
    auto p = build_proposal(in, w, opt);
    p.status = ProposalStatus::auto_applied;
    auto next = apply_delta(in.keywords, p.addition_tokens(), p.removal_tokens());
    RoundRecord rec{in.keywords.round(), in.keywords, next, p, p.addition_tokens(), p.removal_tokens(),
                    DecidedBy::auto_policy, timestamp};
    return {std::move(next), std::move(p), std::move(rec)};
}

inline Proposal next_keywords_semi(const RoundInputs& in, const PolicyWeights& w = {}, const PolicyOptions& opt = {}) {
    auto p = build_proposal(in, w, opt);
    p.status = ProposalStatus::pending;
    return p;
}

// The human's final answer to a proposal: the additions and removals to apply
// (any subset of the proposal plus free-form tokens). Tokens in `forced` may
// be added even when the embedding has never seen them.
struct HumanDecision {
    std::vector<std::string> additions;
    std::vector<std::string> removals;
    std::vector<std::string> forced;
};

inline void from_json(const nlohmann::json& j, HumanDecision& d) {
    d.additions = j.value("additions", std::vector<std::string>{});
    d.removals = j.value("removals", std::vector<std::string>{});
    d.forced = j.value("forced", std::vector<std::string>{});
}

inline void to_json(nlohmann::json& j, const HumanDecision& d) {
    j = {{"additions", d.additions}, {"removals", d.removals}, {"forced", d.forced}};
}

// Accepting the proposal as-is.
inline HumanDecision accept_all(const Proposal& p) { return {p.addition_tokens(), p.removal_tokens(), {}}; }

// Validates and applies a human decision. `proposal` is marked approved or
// amended; the returned record advances the round.
inline RoundRecord apply_decision(Proposal& proposal, const KeywordSet& current, const HumanDecision& decision,
                                  const Vocabulary& vocab, Instant timestamp = {}) {
    if (proposal.status != ProposalStatus::pending || proposal.round != current.round())
        throw StaleProposal("proposal for round " + std::to_string(proposal.round) + " is no longer pending");

    std::vector<std::string> adds, rems, bad;
    for (const auto& raw : decision.additions) adds.push_back(normalize_keyword(raw));
    for (const auto& raw : decision.removals) rems.push_back(normalize_keyword(raw));
    std::set<std::string> forced;
    for (const auto& raw : decision.forced) forced.insert(normalize_keyword(raw));

    std::set<std::string> rem_set;
    for (const auto& t : rems) {
        if (!current.contains(t)) bad.push_back(t);
        if (!rem_set.insert(t).second) bad.push_back(t);
    }
    if (!bad.empty()) throw ValidationError("not_tracked", bad);

    std::set<std::string> seen;
    for (const auto& t : adds) {
        bool tracked = current.contains(t) && !rem_set.count(t);
        if (tracked || !seen.insert(t).second) bad.push_back(t);
    }
    if (!bad.empty()) throw ValidationError("duplicate", bad);

    for (const auto& t : adds)
        if (!vocab.contains(t) && !forced.count(t)) bad.push_back(t);
    if (!bad.empty()) throw ValidationError("out_of_vocabulary", bad);

    if (current.size() - rem_set.size() + adds.size() > current.cap()) throw ValidationError("cap_exceeded", adds);

    auto next = apply_delta(current, adds, rems);
    bool unchanged = adds == proposal.addition_tokens() && rems == proposal.removal_tokens();
    proposal.status = unchanged ? ProposalStatus::approved : ProposalStatus::amended;
    return RoundRecord{current.round(), current, next, proposal, adds, rems, DecidedBy::human, timestamp};
}

// ---------------------------------------------------------------------------
// Baselines

inline KeywordSet baseline_static(const KeywordSet& seed, int round) {
    KeywordSet s = seed;
    s.set_round(round);
    return s;
}

inline KeywordSet baseline_last_top(const CorpusWindow& window, std::size_t n, int round = 0) {
    if (window.empty()) throw std::invalid_argument("last-top baseline needs a non-empty window");
    return KeywordSet::seeded(top_hashtags(window, n), round, std::max<std::size_t>(n, 1));
}

// ---------------------------------------------------------------------------
// Append-only record log

inline void append_record(const std::filesystem::path& path, const RoundRecord& rec) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw IngestError("cannot append to " + path.string());
    out << nlohmann::json(rec).dump() << '\n';
    out.flush();
    if (!out) throw IngestError("write failed for " + path.string());
}

inline std::vector<RoundRecord> read_records(const std::filesystem::path& path) {
    std::vector<RoundRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(nlohmann::json::parse(line).get<RoundRecord>());
    }
    return out;
}

// Re-applies every recorded delta starting from the first record's "before"
// set and checks each result against the recorded "after". Returns the
// sequence of sets (initial set first).
inline std::vector<KeywordSet> replay(const std::vector<RoundRecord>& records) {
    std::vector<KeywordSet> seq;
    if (records.empty()) return seq;
    KeywordSet state = records.front().before;
    seq.push_back(state);
    for (const auto& r : records) {
        if (!(state == r.before)) throw std::runtime_error("record log is inconsistent at round " + std::to_string(r.round));
        KeywordSet next = state;
        for (const auto& t : r.removed) next.remove(t);
        next.set_round(r.after.round());
        for (const auto& t : r.added) next.add(t, next.round());
        if (!(next == r.after)) throw std::runtime_error("replayed set differs at round " + std::to_string(r.round));
        state = next;
        seq.push_back(state);
    }
    return seq;
}

}  // namespace kwtrack
