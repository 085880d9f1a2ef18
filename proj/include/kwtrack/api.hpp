#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "embedding.hpp"
#include "forecast.hpp"
#include "policy.hpp"
#include "projection.hpp"
#include "service.hpp"

// after Eigen: <resolv.h>, pulled in by httplib, defines a _res macro that
// collides with Eigen parameter names
#include <httplib.h>

namespace kwtrack {

// Thrown inside handlers to produce {code, reason, detail}.
struct HttpError {
    int status;
    std::string reason;
    std::string detail;
    std::vector<std::string> tokens;
};

namespace api_detail {

using nlohmann::json;

inline json error_body(const HttpError& e) {
    json j = {{"code", e.status}, {"reason", e.reason}, {"detail", e.detail}};
    if (!e.tokens.empty()) j["tokens"] = e.tokens;
    return j;
}

inline void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

inline std::string normalized(const std::string& raw) {
    try {
        return normalize_keyword(raw);
    } catch (const ValidationError& e) {
        throw HttpError{400, e.reason(), e.what(), {raw}};
    }
}

inline const RoundArtifacts& artifacts_of(const Snapshot& s) {
    if (!s.artifacts) throw HttpError{404, "no_round", "no round has been processed yet", {}};
    return *s.artifacts;
}

inline double number_param(const httplib::Request& req, const std::string& key, double fallback) {
    if (!req.has_param(key)) return fallback;
    try {
        std::size_t used = 0;
        auto s = req.get_param_value(key);
        double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw HttpError{400, "bad_parameter", "parameter " + key + " is not a number", {}};
    }
}

inline int int_param(const httplib::Request& req, const std::string& key, int fallback, int lo, int hi) {
    double v = number_param(req, key, fallback);
    if (v != std::floor(v) || v < lo || v > hi)
        throw HttpError{400, "bad_parameter",
                        "parameter " + key + " must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]",
                        {}};
    return static_cast<int>(v);
}

inline json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw HttpError{400, "bad_json", e.what(), {}};
    }
}

inline std::int64_t frequency_in(const RoundArtifacts* a, const std::string& tok) {
    if (!a) return 0;
    auto it = a->frequencies.find(tok);
    return it == a->frequencies.end() ? 0 : it->second;
}

inline json state_json(const Snapshot& s) {
    const auto& st = s.state;
    json j = {{"run_id", st.run_id},
              {"current_round", st.current_round},
              {"keyword_set", st.keywords},
              {"last_refresh", st.last_refresh ? json(format_iso8601(*st.last_refresh)) : json(nullptr)},
              {"refresh_interval_seconds", st.refresh_interval.count()},
              {"mode", to_string(st.mode)},
              {"run_mode", to_string(st.run_mode)}};
    json snap = {{"window_round", s.window_round ? json(*s.window_round) : json(nullptr)},
                 {"pending_proposal", s.pending.has_value()},
                 {"failed_round", s.failed_round ? json(*s.failed_round) : json(nullptr)},
                 {"last_error", s.last_error}};
    if (s.window) snap["window"] = {{"start", format_iso8601(s.window->start)}, {"end", format_iso8601(s.window->end)}};
    if (s.artifacts) {
        snap["documents"] = s.artifacts->window.size();
        snap["vocabulary_size"] = s.artifacts->model->vocabulary().size();
        snap["candidates"] = s.artifacts->expansion.candidates.size();
        snap["forecasts"] = s.artifacts->forecasts.size();
    }
    j["snapshot"] = snap;
    return j;
}

inline json keywords_json(const Snapshot& s) {
    const auto& kws = s.state.keywords;
    json rows = json::array();
    for (const auto& t : kws.tokens())
        rows.push_back({{"token", t},
                        {"added_round", kws.added_round(t)},
                        {"age", kws.age(t)},
                        {"frequency", frequency_in(s.artifacts.get(), t)}});
    return {{"round", kws.round()}, {"cap", kws.cap()}, {"keywords", rows}};
}

// Neighbor table rows ordered by w_dist * distance - w_freq * (freq / max freq),
// ascending; ties by token.
inline json neighbors_json(const Snapshot& s, const std::string& token, int k, double w_dist, double w_freq) {
    const auto& a = artifacts_of(s);
    NeighborList nl;
    try {
        nl = nearest_neighbors(*a.model, token, static_cast<std::size_t>(k));
    } catch (const NotFound&) {
        throw HttpError{404, "not_found", token + " is not in the current embedding", {token}};
    }
    std::int64_t max_f = 0;
    for (const auto& n : nl.neighbors) max_f = std::max(max_f, frequency_in(&a, n.token));
    struct Row {
        std::string token;
        double similarity, distance, combined;
        std::int64_t frequency;
    };
    std::vector<Row> rows;
    for (const auto& n : nl.neighbors) {
        auto f = frequency_in(&a, n.token);
        double fn = max_f > 0 ? static_cast<double>(f) / static_cast<double>(max_f) : 0.0;
        rows.push_back({n.token, n.similarity, 1.0 - n.similarity, w_dist * (1.0 - n.similarity) - w_freq * fn, f});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
        return x.combined != y.combined ? x.combined < y.combined : x.token < y.token;
    });
    json jn = json::array(), jr = json::array();
    for (const auto& n : nl.neighbors) jn.push_back({{"token", n.token}, {"similarity", n.similarity}});
    for (const auto& r : rows)
        jr.push_back({{"token", r.token},
                      {"similarity", r.similarity},
                      {"distance", r.distance},
                      {"frequency", r.frequency},
                      {"tracked", s.state.keywords.contains(r.token)},
                      {"combined", r.combined}});
    return {{"query", token},
            {"round", *s.window_round},
            {"k", k},
            {"w_dist", w_dist},
            {"w_freq", w_freq},
            {"neighbors", jn},
            {"rows", jr}};
}

inline json projection_json(const Snapshot& s, std::vector<std::string> tokens, int k, ProjectionMethod method,
                            std::uint64_t seed) {
    const auto& a = artifacts_of(s);
    const auto& vocab = a.model->vocabulary();
    if (tokens.empty()) {
        // tracked keywords plus their neighborhoods
        std::set<std::string> pick;
        for (const auto& t : s.state.keywords.tokens()) {
            if (!vocab.contains(t)) continue;
            pick.insert(t);
            for (const auto& n : nearest_neighbors(*a.model, t, static_cast<std::size_t>(k)).neighbors) pick.insert(n.token);
        }
        tokens.assign(pick.begin(), pick.end());
    } else {
        std::vector<std::string> missing;
        for (const auto& t : tokens)
            if (!vocab.contains(t)) missing.push_back(t);
        if (!missing.empty()) throw HttpError{404, "not_found", "tokens are not in the current embedding", missing};
        std::sort(tokens.begin(), tokens.end());
        tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    }
    if (tokens.size() < 2) throw HttpError{400, "too_few_tokens", "projection needs at least two tokens", tokens};
    auto pts = project_2d(*a.model, tokens, seed, method);
    json out = json::array();
    for (const auto& p : pts)
        out.push_back({{"token", p.token},
                       {"x", p.x},
                       {"y", p.y},
                       {"frequency", frequency_in(&a, p.token)},
                       {"tracked", s.state.keywords.contains(p.token)}});
    return {{"round", *s.window_round}, {"method", method == ProjectionMethod::pca ? "pca" : "tsne"}, {"points", out}};
}

inline json forecast_json(const Snapshot& s, const std::string& token, int h, double level) {
    const auto& a = artifacts_of(s);
    auto series = a.series.find(token);
    if (series == a.series.end())
        throw HttpError{404, "not_found", token + " has no series in the current round", {token}};
    auto kf = a.forecasts.find(token);
    if (kf == a.forecasts.end()) {
        std::vector<double> history;
        for (auto c : series->second.counts) history.push_back(std::log1p(static_cast<double>(c)));
        return forecast_record(token, series->second.origin, series->second.bucket_width, history, nullptr, nullptr);
    }
    const auto& f = kf->second;
    Forecast fc = h == f.forecast.horizon ? f.forecast : forecast(f.fit, f.series, h, level);
    return forecast_record(token, f.series.origin, f.series.bucket_width, f.series.values, &f.fit, &fc);
}

}  // namespace api_detail

// Routes the HTTP API onto a monitor. Errors carry {code, reason, detail}.
class ApiServer {
public:
    explicit ApiServer(Monitor& monitor) : monitor_(monitor) { routes(); }
    ~ApiServer() { stop(); }

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Binds and serves on a background thread; port 0 picks a free port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        int bound = port;
        if (port == 0) {
            bound = server_.bind_to_any_port(host);
        } else if (!server_.bind_to_port(host, port)) {
            bound = -1;
        }
        if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    // Blocks until stop() is called from elsewhere.
    void run(const std::string& host, int port) {
        if (!server_.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    httplib::Server& server() { return server_; }

private:
    template <class Fn>
    auto guarded(Fn fn) {
        return [this, fn](const httplib::Request& req, httplib::Response& res) {
            using api_detail::send;
            try {
                fn(req, res);
            } catch (const HttpError& e) {
                send(res, e.status, api_detail::error_body(e));
            } catch (const StaleProposal& e) {
                send(res, 409, api_detail::error_body({409, "stale_proposal", e.what(), {}}));
            } catch (const ValidationError& e) {
                send(res, 400, api_detail::error_body({400, e.reason(), e.what(), e.tokens()}));
            } catch (const NotFound& e) {
                send(res, 404, api_detail::error_body({404, "not_found", e.what(), {e.token()}}));
            } catch (const RefreshTooSoon& e) {
                send(res, 403, api_detail::error_body({403, "too_soon", e.what(), {}}));
            } catch (const FetchFailed& e) {
                send(res, 502, api_detail::error_body({502, "fetch_failed", e.what(), {}}));
            } catch (const InsufficientData& e) {
                send(res, 422, api_detail::error_body({422, "insufficient_data", e.what(), {}}));
            } catch (const std::exception& e) {
                send(res, 500, api_detail::error_body({500, "internal", e.what(), {}}));
            }
        };
    }

    void routes() {
        using namespace api_detail;
        auto& s = server_;
        s.Get("/state", guarded([this](const httplib::Request&, httplib::Response& res) {
            send(res, 200, state_json(*monitor_.snapshot()));
        }));
        s.Get("/keywords", guarded([this](const httplib::Request&, httplib::Response& res) {
            send(res, 200, keywords_json(*monitor_.snapshot()));
        }));
        s.Get(R"(/neighbors/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto snap = monitor_.snapshot();
            send(res, 200,
                 neighbors_json(*snap, normalized(req.matches[1]), int_param(req, "k", 30, 1, 1000),
                                number_param(req, "w_dist", 1.0), number_param(req, "w_freq", 0.0)));
        }));
        s.Get("/projection", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto snap = monitor_.snapshot();
            std::vector<std::string> tokens;
            if (req.has_param("tokens")) {
                std::stringstream ss(req.get_param_value("tokens"));
                std::string t;
                while (std::getline(ss, t, ','))
                    if (!t.empty()) tokens.push_back(normalized(t));
            }
            auto method = req.get_param_value("method") == "pca" ? ProjectionMethod::pca : ProjectionMethod::tsne;
            std::uint64_t seed = monitor_.config().seed + static_cast<std::uint64_t>(snap->window_round.value_or(0));
            send(res, 200, projection_json(*snap, tokens, int_param(req, "k", 10, 1, 100), method, seed));
        }));
        s.Get(R"(/forecast/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto snap = monitor_.snapshot();
            send(res, 200,
                 forecast_json(*snap, normalized(req.matches[1]), int_param(req, "h", monitor_.config().pipeline.forecast.horizon, 1, 1000),
                               monitor_.config().pipeline.forecast.level));
        }));
        s.Get("/proposal", guarded([this](const httplib::Request&, httplib::Response& res) {
            auto snap = monitor_.snapshot();
            send(res, 200, {{"proposal", snap->pending ? json(*snap->pending) : json(nullptr)}});
        }));
        s.Post("/proposal/decision", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req);
            HumanDecision d;
            std::optional<int> round;
            try {
                d = body.get<HumanDecision>();
                if (body.contains("round")) round = body["round"].get<int>();
            } catch (const json::exception& e) {
                throw HttpError{400, "bad_request", e.what(), {}};
            }
            auto rec = monitor_.decide(d, round);
            send(res, 200, {{"record", rec}, {"keywords", keywords_json(*monitor_.snapshot())}});
        }));
        s.Post("/keywords", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req);
            if (!body.contains("token") || !body["token"].is_string())
                throw HttpError{400, "bad_request", "body must be {\"token\": \"...\"}", {}};
            auto raw = body["token"].get<std::string>();
            normalized(raw);
            auto rec = monitor_.add_keyword(raw);
            send(res, 200, {{"record", rec}, {"keywords", keywords_json(*monitor_.snapshot())}});
        }));
        s.Delete(R"(/keywords/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto rec = monitor_.remove_keyword(normalized(req.matches[1]));
            send(res, 200, {{"record", rec}, {"keywords", keywords_json(*monitor_.snapshot())}});
        }));
        s.Post("/round/advance", guarded([this](const httplib::Request&, httplib::Response& res) {
            auto snap = monitor_.refresh_round();
            send(res, 200, state_json(*snap));
        }));
    }

    Monitor& monitor_;
    httplib::Server server_;
    std::thread thread_;
};

}  // namespace kwtrack
