#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "pipeline.hpp"
#include "policy.hpp"

namespace kwtrack {

using TokenSet = std::set<std::string>;

inline std::size_t intersection_size(const TokenSet& a, const TokenSet& b) {
    std::size_t n = 0;
    for (const auto& x : a) n += b.count(x);
    return n;
}

// |R & G| / |R | G|; undefined (throws) when both are empty.
inline double jaccard(const TokenSet& retrieved, const TokenSet& truth) {
    if (retrieved.empty() && truth.empty()) throw std::invalid_argument("jaccard of two empty sets");
    const auto inter = intersection_size(retrieved, truth);
    const auto uni = retrieved.size() + truth.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Harmonic mean of precision |R & G|/|R| and recall |R & G|/|G|. Zero when
// either set is empty or they do not overlap.
inline double f1(const TokenSet& retrieved, const TokenSet& truth) {
    const auto inter = intersection_size(retrieved, truth);
    if (inter == 0) return 0.0;
    // 2PR/(P+R) with P = i/|R|, R = i/|G| simplifies to 2i/(|R|+|G|)
    return 2.0 * static_cast<double>(inter) / static_cast<double>(retrieved.size() + truth.size());
}

enum class MonitorKind { dynamic, static_set, last_top };

inline std::string_view to_string(MonitorKind k) {
    switch (k) {
        case MonitorKind::dynamic: return "dynamic";
        case MonitorKind::static_set: return "static";
        case MonitorKind::last_top: return "last-top";
    }
    return "dynamic";
}

inline MonitorKind monitor_from_string(std::string_view s) {
    if (s == "dynamic") return MonitorKind::dynamic;
    if (s == "static") return MonitorKind::static_set;
    if (s == "last-top" || s == "last_top") return MonitorKind::last_top;
    throw std::invalid_argument("unknown monitor: " + std::string(s));
}

struct GroundTruth {
    int round = 0;
    std::vector<std::string> top_hashtags;
};

inline GroundTruth ground_truth(const CorpusWindow& unfiltered, int round, std::size_t m = 20) {
    return {round, top_hashtags(unfiltered, m)};
}

struct RoundScore {
    int round = 0;
    double jaccard = 0.0;
    double f1 = 0.0;
    std::vector<std::string> retrieved;
    std::vector<std::string> truth;
    std::vector<std::string> keywords;
    std::size_t corpus_size = 0;
    std::size_t filtered_size = 0;
};

struct EvaluationReport {
    std::string monitor;
    std::vector<RoundScore> per_round;
    std::vector<double> weights;
    double weighted_f1 = 0.0;
    double unweighted_f1 = 0.0;
    double global_jaccard = 0.0;  // corpus-size weighted
    double unweighted_jaccard = 0.0;
    std::vector<RoundRecord> records;  // dynamic monitor only
};

// Fills the aggregate fields from per_round.
inline void summarize(EvaluationReport& r) {
    std::size_t total = 0;
    for (const auto& s : r.per_round) total += s.corpus_size;
    r.weights.clear();
    r.weighted_f1 = r.unweighted_f1 = r.global_jaccard = r.unweighted_jaccard = 0.0;
    if (r.per_round.empty()) return;
    const double n = static_cast<double>(r.per_round.size());
    for (const auto& s : r.per_round) {
        double w = total > 0 ? static_cast<double>(s.corpus_size) / static_cast<double>(total) : 1.0 / n;
        r.weights.push_back(w);
        r.weighted_f1 += w * s.f1;
        r.global_jaccard += w * s.jaccard;
        r.unweighted_f1 += s.f1 / n;
        r.unweighted_jaccard += s.jaccard / n;
    }
}

struct SimulationConfig {
    std::size_t m = 20;  // ground-truth / retrieved size
    std::size_t n = 15;  // keyword cap
    std::vector<MonitorKind> monitors{MonitorKind::dynamic, MonitorKind::static_set, MonitorKind::last_top};
    PipelineConfig pipeline;
    std::uint64_t seed = 1;
    bool parallel = true;
};

namespace detail {

inline RoundScore score_round(const CorpusWindow& unfiltered, const CorpusWindow& filtered, const KeywordSet& kws,
                              int round, std::size_t m) {
    RoundScore s;
    s.round = round;
    s.keywords = kws.tokens();
    s.corpus_size = unfiltered.size();
    s.filtered_size = filtered.size();
    s.truth = top_hashtags(unfiltered, m);
    s.retrieved = filtered.empty() ? std::vector<std::string>{} : top_hashtags(filtered, m);
    std::sort(s.truth.begin(), s.truth.end());
    std::sort(s.retrieved.begin(), s.retrieved.end());
    TokenSet r(s.retrieved.begin(), s.retrieved.end()), g(s.truth.begin(), s.truth.end());
    if (!filtered.empty() && !(r.empty() && g.empty())) {
        s.jaccard = jaccard(r, g);
        s.f1 = f1(r, g);
    }
    return s;
}

}  // namespace detail

// Replays `rounds` (unfiltered windows, in order) for one monitor starting
// from `seed_set`.
inline EvaluationReport simulate_monitor(const std::vector<CorpusWindow>& rounds, const KeywordSet& seed_set,
                                         MonitorKind kind, const SimulationConfig& cfg) {
    EvaluationReport rep;
    rep.monitor = std::string(to_string(kind));
    KeywordSet kws = seed_set;
    for (std::size_t t = 0; t < rounds.size(); ++t) {
        const int round = static_cast<int>(t);
        kws.set_round(round);
        CorpusWindow filtered = kws.empty() ? make_window({}, rounds[t].range(), rounds[t].bucket_width)
                                            : filter(rounds[t], kws.tokens());
        rep.per_round.push_back(detail::score_round(rounds[t], filtered, kws, round, cfg.m));

        switch (kind) {
            case MonitorKind::static_set:
                kws = baseline_static(seed_set, round + 1);
                break;
            case MonitorKind::last_top:
                if (!filtered.empty()) {
                    auto next = top_hashtags(filtered, cfg.n);
                    if (!next.empty()) kws = KeywordSet::seeded(next, round + 1, cfg.n);
                }
                break;
            case MonitorKind::dynamic: {
                if (filtered.empty()) break;
                try {
                    auto art = build_round(filtered, kws, cfg.pipeline, cfg.seed + t);
                    auto res = next_keywords_auto(art.inputs(kws), cfg.pipeline.weights, cfg.pipeline.policy,
                                                  rounds[t].end);
                    rep.records.push_back(res.record);
                    kws = res.keywords;
                } catch (const InsufficientData&) {
                } catch (const NotFound&) {
                }
                break;
            }
        }
    }
    summarize(rep);
    return rep;
}

// Every monitor starts from the top-n hashtags of round 0.
inline std::vector<EvaluationReport> simulate(const std::vector<CorpusWindow>& rounds, const SimulationConfig& cfg) {
    if (rounds.size() < 2) throw std::invalid_argument("simulation needs at least two rounds");
    KeywordSet seed = KeywordSet::seeded(top_hashtags(rounds.front(), cfg.n), 0, cfg.n);
    if (seed.empty()) throw InsufficientData("round 0 has no hashtags to seed the monitors");
    std::vector<EvaluationReport> out(cfg.monitors.size());
    if (cfg.parallel && cfg.monitors.size() > 1) {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < cfg.monitors.size(); ++i)
            pool.emplace_back([&, i] { out[i] = simulate_monitor(rounds, seed, cfg.monitors[i], cfg); });
        for (auto& th : pool) th.join();
    } else {
        for (std::size_t i = 0; i < cfg.monitors.size(); ++i) out[i] = simulate_monitor(rounds, seed, cfg.monitors[i], cfg);
    }
    return out;
}

// Cuts `window` into `count` consecutive rounds of `round_length`.
inline std::vector<CorpusWindow> split_rounds(const CorpusWindow& window, Duration round_length, std::size_t count,
                                              Duration bucket_width) {
    std::vector<CorpusWindow> out;
    for (std::size_t i = 0; i < count; ++i) {
        TimeRange r{window.start + round_length * static_cast<std::int64_t>(i),
                    window.start + round_length * static_cast<std::int64_t>(i + 1)};
        std::vector<Document> docs;
        for (const auto& d : window.documents)
            if (r.contains(d.timestamp)) docs.push_back(d);
        out.push_back(make_window(std::move(docs), r, bucket_width));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json report_json(const std::vector<EvaluationReport>& reports) {
    auto arr = nlohmann::json::array();
    for (const auto& r : reports) {
        auto rounds = nlohmann::json::array();
        for (const auto& s : r.per_round)
            rounds.push_back({{"round", s.round},
                              {"jaccard", s.jaccard},
                              {"f1", s.f1},
                              {"retrieved", s.retrieved},
                              {"truth", s.truth},
                              {"keywords", s.keywords},
                              {"corpus_size", s.corpus_size},
                              {"filtered_size", s.filtered_size}});
        arr.push_back({{"monitor", r.monitor},
                       {"jaccard", r.global_jaccard},
                       {"unweighted_jaccard", r.unweighted_jaccard},
                       {"weighted_f1", r.weighted_f1},
                       {"unweighted_f1", r.unweighted_f1},
                       {"weights", r.weights},
                       {"per_round", rounds}});
    }
    return arr;
}

// Aligned text table: Jaccard, weighted and unweighted average F1.
inline std::string report_table(const std::vector<EvaluationReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(10) << "monitor" << std::right << std::setw(10) << "Jaccard" << std::setw(14)
       << "F1 weighted" << std::setw(16) << "F1 unweighted" << '\n';
    os << std::fixed << std::setprecision(4);
    for (const auto& r : reports)
        os << std::left << std::setw(10) << r.monitor << std::right << std::setw(10) << r.global_jaccard
           << std::setw(14) << r.weighted_f1 << std::setw(16) << r.unweighted_f1 << '\n';
    return os.str();
}

inline std::string report_csv(const std::vector<EvaluationReport>& reports) {
    std::ostringstream os;
    os << "monitor,round,jaccard,f1,corpus_size,filtered_size\n";
    os << std::setprecision(17);
    for (const auto& r : reports)
        for (const auto& s : r.per_round)
            os << r.monitor << ',' << s.round << ',' << s.jaccard << ',' << s.f1 << ',' << s.corpus_size << ','
               << s.filtered_size << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Synthetic drift corpus
//
// `active` hashtag slots are live each round. Between rounds a `rotation`
// fraction of slots hands over to a successor tag: during the `bridge_rounds`
// before the handover the successor appears in the slot's documents with a
// rising share, often next to the tag it replaces, while the old tag fades.
// Documents mention their slot tag, sometimes a neighbouring slot's tag, topic
// words and generic filler; a long tail of rare background hashtags adds
// noise.

struct DriftConfig {
    std::size_t rounds = 12;
    std::size_t active = 20;
    double rotation = 0.2;
    int bridge_rounds = 1;
    std::size_t docs_per_round = 1500;
    Duration round_length{std::chrono::hours{24 * 7}};
    double neighbour_share = 0.3;  // chance a document also carries the next slot's tag
    double successor_overlap = 0.5;  // chance a successor mention also carries the old tag
    std::size_t background_tags = 200;
    double background_share = 0.3;
    std::size_t topic_words = 5;
    std::size_t generic_words = 300;
    std::uint64_t seed = 2017;
    Instant start = Instant{std::chrono::seconds{1483228800}};  // 2017-01-01T00:00:00Z
};

inline void to_json(nlohmann::json& j, const DriftConfig& c) {
    j = {{"rounds", c.rounds},
         {"active", c.active},
         {"rotation", c.rotation},
         {"bridge_rounds", c.bridge_rounds},
         {"docs_per_round", c.docs_per_round},
         {"round_length_seconds", c.round_length.count()},
         {"neighbour_share", c.neighbour_share},
         {"successor_overlap", c.successor_overlap},
         {"background_tags", c.background_tags},
         {"background_share", c.background_share},
         {"topic_words", c.topic_words},
         {"generic_words", c.generic_words},
         {"seed", c.seed},
         {"start", format_iso8601(c.start)}};
}

inline void from_json(const nlohmann::json& j, DriftConfig& c) {
    c.rounds = j.value("rounds", c.rounds);
    c.active = j.value("active", c.active);
    c.rotation = j.value("rotation", c.rotation);
    c.bridge_rounds = j.value("bridge_rounds", c.bridge_rounds);
    c.docs_per_round = j.value("docs_per_round", c.docs_per_round);
    c.round_length = Duration{j.value("round_length_seconds", c.round_length.count())};
    c.neighbour_share = j.value("neighbour_share", c.neighbour_share);
    c.successor_overlap = j.value("successor_overlap", c.successor_overlap);
    c.background_tags = j.value("background_tags", c.background_tags);
    c.background_share = j.value("background_share", c.background_share);
    c.topic_words = j.value("topic_words", c.topic_words);
    c.generic_words = j.value("generic_words", c.generic_words);
    c.seed = j.value("seed", c.seed);
    if (j.contains("start")) {
        auto t = parse_iso8601(j["start"].get<std::string>());
        if (!t) throw std::invalid_argument("bad drift start time");
        c.start = *t;
    }
}

struct DriftCorpus {
    std::vector<Document> documents;
    // slot_tags[r][s]: tag owning slot s in round r
    std::vector<std::vector<std::string>> slot_tags;
    TimeRange range;
};

inline DriftCorpus generate_drift_corpus(const DriftConfig& cfg) {
    if (cfg.active < 2 || cfg.rounds < 1) throw std::invalid_argument("drift corpus needs >= 2 slots and >= 1 round");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Slot ownership per round; handovers pick random slots.
    int next_tag = 0;
    auto fresh = [&] { return "#topic" + std::to_string(next_tag++); };
    std::vector<std::vector<std::string>> owners(cfg.rounds);
    std::vector<std::vector<int>> topic_of(cfg.rounds, std::vector<int>(cfg.active));
    for (std::size_t s = 0; s < cfg.active; ++s) {
        owners[0].push_back(fresh());
        topic_of[0][s] = next_tag - 1;
    }
    const auto per_round = static_cast<std::size_t>(std::lround(cfg.rotation * static_cast<double>(cfg.active)));
    for (std::size_t r = 1; r < cfg.rounds; ++r) {
        owners[r] = owners[r - 1];
        topic_of[r] = topic_of[r - 1];
        std::vector<std::size_t> slots(cfg.active);
        for (std::size_t s = 0; s < cfg.active; ++s) slots[s] = s;
        std::shuffle(slots.begin(), slots.end(), rng);
        for (std::size_t i = 0; i < per_round; ++i) {
            owners[r][slots[i]] = fresh();
            topic_of[r][slots[i]] = next_tag - 1;
        }
    }

    DriftCorpus out;
    out.slot_tags = owners;
    out.range = {cfg.start, cfg.start + cfg.round_length * static_cast<std::int64_t>(cfg.rounds)};
    std::size_t id = 0;
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        // successor of each slot that changes hands within bridge_rounds
        std::vector<std::optional<std::pair<std::string, std::size_t>>> successor(cfg.active);
        for (std::size_t s = 0; s < cfg.active; ++s)
            for (int b = 1; b <= cfg.bridge_rounds && r + static_cast<std::size_t>(b) < cfg.rounds; ++b)
                if (owners[r + static_cast<std::size_t>(b)][s] != owners[r][s]) {
                    successor[s] = {owners[r + static_cast<std::size_t>(b)][s], static_cast<std::size_t>(b)};
                    break;
                }

        for (std::size_t k = 0; k < cfg.docs_per_round; ++k) {
            const double u = unit(rng);  // position inside the round
            const auto ts = cfg.start + cfg.round_length * static_cast<std::int64_t>(r) +
                            Duration{static_cast<std::int64_t>(u * static_cast<double>(cfg.round_length.count()))};
            const std::size_t slot = rng() % cfg.active;
            std::vector<std::string> words;

            std::string tag = owners[r][slot];
            int topic = topic_of[r][slot];
            bool with_old = true;
            if (successor[slot]) {
                // share of the successor ramps up towards the handover
                const double b = static_cast<double>(successor[slot]->second);
                const double share = std::clamp((static_cast<double>(cfg.bridge_rounds) - b + u) /
                                                    static_cast<double>(cfg.bridge_rounds),
                                                0.0, 1.0);
                if (unit(rng) < share) {
                    words.push_back(successor[slot]->first);
                    with_old = unit(rng) < cfg.successor_overlap;
                    topic = -1;
                }
            }
            if (with_old) words.push_back(tag);
            if (unit(rng) < cfg.neighbour_share) words.push_back(owners[r][(slot + 1) % cfg.active]);
            if (cfg.background_tags > 0 && unit(rng) < cfg.background_share)
                words.push_back("#tail" + std::to_string(rng() % cfg.background_tags));

            const std::string topic_prefix = topic >= 0 ? "t" + std::to_string(topic) : "t" + words.front().substr(6);
            for (std::size_t w = 0; w < 3 && cfg.topic_words > 0; ++w)
                words.push_back(topic_prefix + "w" + std::to_string(rng() % cfg.topic_words));
            const std::size_t filler = 4 + rng() % 5;
            for (std::size_t w = 0; w < filler && cfg.generic_words > 0; ++w)
                words.push_back("g" + std::to_string(rng() % cfg.generic_words));
            std::shuffle(words.begin(), words.end(), rng);

            std::string text;
            for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
            out.documents.push_back({std::to_string(id++), ts, std::move(text)});
        }
    }
    sort_documents(out.documents);
    return out;
}

inline std::vector<CorpusWindow> drift_rounds(const DriftCorpus& corpus, const DriftConfig& cfg, Duration bucket_width) {
    return split_rounds(make_window(corpus.documents, corpus.range, bucket_width), cfg.round_length, cfg.rounds,
                        bucket_width);
}

}  // namespace kwtrack
