#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "embedding.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "policy.hpp"
#include "time.hpp"

namespace kwtrack {

// The fetcher could not deliver the next window.
class FetchFailed : public Error {
public:
    using Error::Error;
};

// Live-mode advance requested before the refresh interval elapsed.
class RefreshTooSoon : public Error {
public:
    using Error::Error;
};

enum class MonitorMode { manual, semi, automatic };
enum class RunMode { replay, live };

inline std::string_view to_string(MonitorMode m) {
    switch (m) {
        case MonitorMode::manual: return "manual";
        case MonitorMode::semi: return "semi";
        case MonitorMode::automatic: return "auto";
    }
    return "semi";
}

inline MonitorMode monitor_mode_from_string(std::string_view s) {
    if (s == "manual") return MonitorMode::manual;
    if (s == "semi") return MonitorMode::semi;
    if (s == "auto") return MonitorMode::automatic;
    throw std::invalid_argument("unknown mode: " + std::string(s));
}

inline std::string_view to_string(RunMode m) { return m == RunMode::live ? "live" : "replay"; }

inline RunMode run_mode_from_string(std::string_view s) {
    if (s == "replay") return RunMode::replay;
    if (s == "live") return RunMode::live;
    throw std::invalid_argument("unknown run mode: " + std::string(s));
}

inline constexpr Duration kLiveRefreshFloor{std::chrono::minutes{15}};

struct ServiceConfig {
    std::string run_id = "run";
    std::filesystem::path run_dir = "run";
    MonitorMode mode = MonitorMode::semi;
    RunMode run_mode = RunMode::replay;
    Duration refresh_interval{std::chrono::minutes{15}};
    Duration window_length{std::chrono::hours{24 * 7}};
    Instant start{};
    std::size_t cap = 15;
    std::vector<std::string> seed_keywords;  // empty: top hashtags of the first window
    std::uint64_t seed = 1;
    std::string fetcher = "replay";
    std::filesystem::path archive;
    PipelineConfig pipeline;

    void validate() const {
        if (window_length <= Duration::zero()) throw std::invalid_argument("window length must be positive");
        if (cap == 0) throw std::invalid_argument("keyword cap must be positive");
        if (run_mode == RunMode::live && refresh_interval < kLiveRefreshFloor)
            throw std::invalid_argument("live refresh interval must be at least 15 minutes");
        pipeline.weights.validate();
    }
};

inline void to_json(nlohmann::json& j, const ServiceConfig& c) {
    j = {{"run_id", c.run_id},
         {"run_dir", c.run_dir.string()},
         {"mode", to_string(c.mode)},
         {"run_mode", to_string(c.run_mode)},
         {"refresh_interval_seconds", c.refresh_interval.count()},
         {"window_seconds", c.window_length.count()},
         {"start", format_iso8601(c.start)},
         {"cap", c.cap},
         {"seed_keywords", c.seed_keywords},
         {"seed", c.seed},
         {"fetcher", {{"type", c.fetcher}, {"archive", c.archive.string()}}},
         {"pipeline", c.pipeline}};
}

// Every key is optional.
inline void from_json(const nlohmann::json& j, ServiceConfig& c) {
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("run_dir")) c.run_dir = j["run_dir"].get<std::string>();
    if (j.contains("mode")) c.mode = monitor_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("run_mode")) c.run_mode = run_mode_from_string(j["run_mode"].get<std::string>());
    c.refresh_interval = Duration{j.value("refresh_interval_seconds", c.refresh_interval.count())};
    c.window_length = Duration{j.value("window_seconds", c.window_length.count())};
    if (j.contains("start")) {
        auto t = parse_iso8601(j["start"].get<std::string>());
        if (!t) throw std::invalid_argument("bad start time");
        c.start = *t;
    }
    c.cap = j.value("cap", c.cap);
    c.seed_keywords = j.value("seed_keywords", c.seed_keywords);
    c.seed = j.value("seed", c.seed);
    if (auto f = j.find("fetcher"); f != j.end()) {
        c.fetcher = f->value("type", c.fetcher);
        if (f->contains("archive")) c.archive = (*f)["archive"].get<std::string>();
    }
    if (j.contains("pipeline")) c.pipeline = j["pipeline"].get<PipelineConfig>();
}

// ---------------------------------------------------------------------------
// Run storage. Only the local filesystem is implemented; the interface is
// kept narrow so another backend can slot in.

class RunStore {
public:
    virtual ~RunStore() = default;
    virtual void save_config(const nlohmann::json& config) = 0;
    virtual void save_window(int round, const CorpusWindow& window) = 0;
    virtual void save_embedding(int round, const EmbeddingModel& model) = 0;
    virtual void append(const RoundRecord& record) = 0;
    virtual std::vector<RoundRecord> records() const = 0;
};

// <dir>/config.json, <dir>/windows/round-NNNN.ndjson,
// <dir>/embeddings/round-NNNN.txt, <dir>/records.ndjson
class DirectoryStore : public RunStore {
public:
    explicit DirectoryStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_ / "windows");
        std::filesystem::create_directories(dir_ / "embeddings");
    }

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path records_path() const { return dir_ / "records.ndjson"; }
    std::filesystem::path window_path(int round) const { return dir_ / "windows" / (stem(round) + ".ndjson"); }
    std::filesystem::path embedding_path(int round) const { return dir_ / "embeddings" / (stem(round) + ".txt"); }

    void save_config(const nlohmann::json& config) override {
        std::ofstream out(dir_ / "config.json");
        if (!out) throw Error("cannot write config snapshot in " + dir_.string());
        out << config.dump(2) << '\n';
    }
    void save_window(int round, const CorpusWindow& window) override {
        write_documents(window_path(round), window.documents);
    }
    void save_embedding(int round, const EmbeddingModel& model) override {
        kwtrack::save_embedding(model, embedding_path(round));
    }
    void append(const RoundRecord& record) override { append_record(records_path(), record); }
    std::vector<RoundRecord> records() const override { return read_records(records_path()); }

private:
    static std::string stem(int round) {
        std::ostringstream os;
        os << "round-" << std::setw(4) << std::setfill('0') << round;
        return os.str();
    }

    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------

struct MonitorState {
    std::string run_id;
    int current_round = 0;  // windows consumed so far
    KeywordSet keywords;
    std::optional<Instant> last_refresh;
    Duration refresh_interval{};
    MonitorMode mode = MonitorMode::semi;
    RunMode run_mode = RunMode::replay;
};

// Immutable view published after every state change. Everything a reader
// needs for one response comes from a single snapshot.
struct Snapshot {
    MonitorState state;
    std::optional<int> window_round;  // round whose window produced `artifacts`
    std::optional<TimeRange> window;
    std::shared_ptr<const RoundArtifacts> artifacts;
    std::optional<Proposal> pending;
    std::optional<int> failed_round;
    std::string last_error;
};

using Clock = std::function<Instant()>;

inline Instant system_now() { return std::chrono::time_point_cast<Duration>(std::chrono::system_clock::now()); }

// Single owner of the monitor state. Writes serialize on one mutex; readers
// copy the published snapshot pointer.
class Monitor {
public:
    Monitor(ServiceConfig cfg, std::unique_ptr<Fetcher> fetcher, std::unique_ptr<RunStore> store,
            Clock clock = system_now)
        : cfg_(std::move(cfg)), fetcher_(std::move(fetcher)), store_(std::move(store)), clock_(std::move(clock)) {
        cfg_.validate();
        store_->save_config(nlohmann::json(cfg_));
        MonitorState st;
        st.run_id = cfg_.run_id;
        st.refresh_interval = cfg_.refresh_interval;
        st.mode = cfg_.mode;
        st.run_mode = cfg_.run_mode;
        st.keywords = KeywordSet(0, cfg_.cap);

        // crash recovery: the record log is the source of truth
        auto log = store_->records();
        if (!log.empty()) {
            st.keywords = replay(log).back();
            st.current_round = st.keywords.round();
            st.last_refresh = log.back().timestamp;
        } else {
            for (const auto& raw : cfg_.seed_keywords) st.keywords.add(normalize_keyword(raw), 0);
        }
        auto snap = std::make_shared<Snapshot>();
        snap->state = std::move(st);
        publish(std::move(snap));
    }

    const ServiceConfig& config() const { return cfg_; }

    std::shared_ptr<const Snapshot> snapshot() const {
        std::lock_guard lock(snap_mutex_);
        return snapshot_;
    }

    bool refresh_due() const {
        if (cfg_.run_mode == RunMode::replay) return true;
        auto s = snapshot();
        return !s->state.last_refresh || clock_() - *s->state.last_refresh >= cfg_.refresh_interval;
    }

    // Pulls the next window, retrains, refits and proposes (auto mode also
    // applies). On failure the previous snapshot stays published, marked with
    // the failed round, and the error is rethrown.
    std::shared_ptr<const Snapshot> refresh_round() {
        std::lock_guard lock(write_mutex_);
        auto prev = snapshot();
        if (!refresh_due()) throw RefreshTooSoon("refresh interval has not elapsed");
        const int r = prev->state.current_round;
        const Instant now = clock_();
        TimeRange range = window_range(r, now);

        KeywordSet kws = prev->state.keywords;
        std::vector<Document> docs;
        try {
            docs = fetcher_->pull(kws.tokens(), range);
        } catch (const std::exception& e) {
            fail(*prev, r, std::string("fetch failed: ") + e.what());
            throw FetchFailed(e.what());
        }
        if (kws.empty()) {
            // no seed configured: start from the window's own top hashtags
            auto seed_window = make_window(docs, range, cfg_.pipeline.bucket_width);
            kws = KeywordSet::seeded(top_hashtags(seed_window, cfg_.cap), r, cfg_.cap);
            if (kws.empty()) {
                fail(*prev, r, "window has no hashtags to seed from");
                throw InsufficientData("window has no hashtags to seed from");
            }
        }
        CorpusWindow filtered = filter(make_window(std::move(docs), range, cfg_.pipeline.bucket_width), kws.tokens());
        std::shared_ptr<const RoundArtifacts> art;
        try {
            art = std::make_shared<const RoundArtifacts>(build_round(filtered, kws, cfg_.pipeline, cfg_.seed + static_cast<std::uint64_t>(r)));
        } catch (const Error& e) {
            fail(*prev, r, e.what());
            throw;
        }
        store_->save_window(r, filtered);
        store_->save_embedding(r, *art->model);

        const Instant stamp = cfg_.run_mode == RunMode::replay ? range.end : now;
        if (prev->pending) {
            // nobody decided in time: the keywords carry over unchanged
            KeywordSet carried = apply_delta(kws, {}, {});
            store_->append({kws.round(), kws, carried, prev->pending, {}, {}, DecidedBy::auto_policy, stamp});
            kws = carried;
        }
        if (kws.round() != r) throw std::logic_error("keyword set is out of step with the window counter");

        auto snap = std::make_shared<Snapshot>();
        snap->state = prev->state;
        snap->window_round = r;
        snap->window = range;
        snap->artifacts = art;
        switch (cfg_.mode) {
            case MonitorMode::automatic: {
                auto res = next_keywords_auto(art->inputs(kws), cfg_.pipeline.weights, cfg_.pipeline.policy, stamp);
                store_->append(res.record);
                kws = res.keywords;
                break;
            }
            case MonitorMode::semi:
                snap->pending = next_keywords_semi(art->inputs(kws), cfg_.pipeline.weights, cfg_.pipeline.policy);
                break;
            case MonitorMode::manual: {
                KeywordSet next = apply_delta(kws, {}, {});
                store_->append({r, kws, next, std::nullopt, {}, {}, DecidedBy::human, stamp});
                kws = next;
                break;
            }
        }
        snap->state.keywords = kws;
        snap->state.current_round = r + 1;
        snap->state.last_refresh = now;
        publish(snap);
        return snap;
    }

    // Applies a human decision to the pending proposal. `round`, when given,
    // must match the proposal's round.
    RoundRecord decide(const HumanDecision& decision, std::optional<int> round = std::nullopt) {
        std::lock_guard lock(write_mutex_);
        auto prev = snapshot();
        if (!prev->pending) throw StaleProposal("no pending proposal");
        if (round && *round != prev->pending->round)
            throw StaleProposal("decision targets round " + std::to_string(*round) + ", pending proposal is for round " +
                                std::to_string(prev->pending->round));
        Proposal p = *prev->pending;
        const Instant stamp = cfg_.run_mode == RunMode::replay && prev->window ? prev->window->end : clock_();
        auto rec = apply_decision(p, prev->state.keywords, decision, prev->artifacts->model->vocabulary(), stamp);
        store_->append(rec);
        auto snap = std::make_shared<Snapshot>(*prev);
        snap->pending.reset();
        snap->state.keywords = rec.after;
        publish(std::move(snap));
        return rec;
    }

    // Manual edits between rounds; each is persisted as its own record.
    RoundRecord add_keyword(const std::string& raw) {
        std::lock_guard lock(write_mutex_);
        const auto tok = normalize_keyword(raw);
        auto prev = snapshot();
        KeywordSet next = prev->state.keywords;
        next.add(tok, next.round());
        return commit_edit(*prev, next, {tok}, {});
    }

    RoundRecord remove_keyword(const std::string& raw) {
        std::lock_guard lock(write_mutex_);
        const auto tok = normalize_keyword(raw);
        auto prev = snapshot();
        KeywordSet next = prev->state.keywords;
        next.remove(tok);
        return commit_edit(*prev, next, {}, {tok});
    }

    std::vector<RoundRecord> records() const { return store_->records(); }

private:
    // Replay: consecutive disjoint windows from the configured start. Live:
    // the trailing window ending now, so refreshes overlap.
    TimeRange window_range(int r, Instant now) const {
        if (cfg_.run_mode == RunMode::replay)
            return {cfg_.start + cfg_.window_length * r, cfg_.start + cfg_.window_length * (r + 1)};
        return {now - cfg_.window_length, now};
    }

    RoundRecord commit_edit(const Snapshot& prev, const KeywordSet& next, std::vector<std::string> added,
                            std::vector<std::string> removed) {
        RoundRecord rec{prev.state.keywords.round(), prev.state.keywords, next, std::nullopt,
                        std::move(added), std::move(removed), DecidedBy::human, edit_stamp(prev)};
        store_->append(rec);
        auto snap = std::make_shared<Snapshot>(prev);
        snap->state.keywords = next;
        publish(std::move(snap));
        return rec;
    }

    Instant edit_stamp(const Snapshot& prev) const {
        if (cfg_.run_mode == RunMode::replay) return prev.window ? prev.window->end : cfg_.start;
        return clock_();
    }

    void fail(const Snapshot& prev, int round, std::string why) {
        auto snap = std::make_shared<Snapshot>(prev);
        snap->failed_round = round;
        snap->last_error = std::move(why);
        publish(std::move(snap));
    }

    void publish(std::shared_ptr<const Snapshot> s) {
        std::lock_guard lock(snap_mutex_);
        snapshot_ = std::move(s);
    }

    ServiceConfig cfg_;
    std::unique_ptr<Fetcher> fetcher_;
    std::unique_ptr<RunStore> store_;
    Clock clock_;
    std::mutex write_mutex_;
    mutable std::mutex snap_mutex_;
    std::shared_ptr<const Snapshot> snapshot_;
};

inline std::unique_ptr<Fetcher> make_fetcher(const ServiceConfig& cfg) {
    if (cfg.fetcher == "replay") {
        if (cfg.archive.empty()) throw std::invalid_argument("replay fetcher needs an archive path");
        return std::make_unique<ReplayFetcher>(cfg.archive);
    }
    throw std::invalid_argument("unknown fetcher: " + cfg.fetcher);
}

inline std::unique_ptr<Monitor> open_monitor(const ServiceConfig& cfg, Clock clock = system_now) {
    return std::make_unique<Monitor>(cfg, make_fetcher(cfg), std::make_unique<DirectoryStore>(cfg.run_dir),
                                     std::move(clock));
}

}  // namespace kwtrack
