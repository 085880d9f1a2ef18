#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "embedding.hpp"
#include "forecast.hpp"
#include "policy.hpp"

namespace kwtrack {

// Model settings for one refresh: embedding, forecasting and policy.
struct PipelineConfig {
    GloveParams glove;
    std::int64_t vocab_min_count = 1;
    int context_window = 10;
    Duration bucket_width{std::chrono::hours{1}};
    ForecastConfig forecast;
    PolicyWeights weights;
    PolicyOptions policy;
    unsigned threads = 0;  // 0 = hardware concurrency
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = {{"glove",
          {{"dimension", c.glove.dimension},
           {"epochs", c.glove.epochs},
           {"x_max", c.glove.x_max},
           {"alpha", c.glove.alpha},
           {"learning_rate", c.glove.learning_rate},
           {"seed", c.glove.seed},
           {"threads", c.glove.threads}}},
         {"vocab_min_count", c.vocab_min_count},
         {"context_window", c.context_window},
         {"bucket_width_seconds", c.bucket_width.count()},
         {"forecast",
          {{"max_p", c.forecast.max_p},
           {"max_d", c.forecast.max_d},
           {"max_q", c.forecast.max_q},
           {"split_fraction", c.forecast.split_fraction},
           {"horizon", c.forecast.horizon},
           {"level", c.forecast.level}}},
         {"weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gamma", c.weights.gamma}, {"delta", c.weights.delta}}},
         {"policy",
          {{"add_limit", c.policy.add_limit},
           {"min_count", c.policy.min_count},
           {"neighbors", c.policy.neighbors},
           {"removal_age", c.policy.removal_age},
           {"literal_replacement", c.policy.literal_replacement}}},
         {"threads", c.threads}};
}

// Every key is optional; missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
    if (auto g = j.find("glove"); g != j.end()) {
        c.glove.dimension = g->value("dimension", c.glove.dimension);
        c.glove.epochs = g->value("epochs", c.glove.epochs);
        c.glove.x_max = g->value("x_max", c.glove.x_max);
        c.glove.alpha = g->value("alpha", c.glove.alpha);
        c.glove.learning_rate = g->value("learning_rate", c.glove.learning_rate);
        c.glove.seed = g->value("seed", c.glove.seed);
        c.glove.threads = g->value("threads", c.glove.threads);
    }
    c.vocab_min_count = j.value("vocab_min_count", c.vocab_min_count);
    c.context_window = j.value("context_window", c.context_window);
    c.bucket_width = Duration{j.value("bucket_width_seconds", c.bucket_width.count())};
    if (auto f = j.find("forecast"); f != j.end()) {
        c.forecast.max_p = f->value("max_p", c.forecast.max_p);
        c.forecast.max_d = f->value("max_d", c.forecast.max_d);
        c.forecast.max_q = f->value("max_q", c.forecast.max_q);
        c.forecast.split_fraction = f->value("split_fraction", c.forecast.split_fraction);
        c.forecast.horizon = f->value("horizon", c.forecast.horizon);
        c.forecast.level = f->value("level", c.forecast.level);
    }
    if (auto w = j.find("weights"); w != j.end()) {
        c.weights.alpha = w->value("alpha", c.weights.alpha);
        c.weights.beta = w->value("beta", c.weights.beta);
        c.weights.gamma = w->value("gamma", c.weights.gamma);
        c.weights.delta = w->value("delta", c.weights.delta);
    }
    if (auto p = j.find("policy"); p != j.end()) {
        c.policy.add_limit = p->value("add_limit", c.policy.add_limit);
        c.policy.min_count = p->value("min_count", c.policy.min_count);
        c.policy.neighbors = p->value("neighbors", c.policy.neighbors);
        c.policy.removal_age = p->value("removal_age", c.policy.removal_age);
        c.policy.literal_replacement = p->value("literal_replacement", c.policy.literal_replacement);
    }
    c.threads = j.value("threads", c.threads);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

// Artifacts of one refresh, all derived from the same filtered window.
struct RoundArtifacts {
    CorpusWindow window;
    std::shared_ptr<const EmbeddingModel> model;
    Expansion expansion;
    std::map<std::string, FrequencySeries> series;
    std::map<std::string, KeywordForecast> forecasts;
    std::map<std::string, std::int64_t> frequencies;

    RoundInputs inputs(const KeywordSet& keywords) const {
        RoundInputs in;
        in.keywords = keywords;
        in.model = model.get();
        for (const auto& [tok, kf] : forecasts) in.forecasts.emplace(tok, kf.forecast);
        in.frequencies = frequencies;
        return in;
    }
};

// Trains the embedding on `filtered`, expands candidates around `keywords`
// and forecasts every candidate and incumbent. Throws InsufficientData when
// the window holds no usable text.
inline RoundArtifacts build_round(const CorpusWindow& filtered, const KeywordSet& keywords, const PipelineConfig& cfg,
                                  std::uint64_t seed, const EmbeddingModel* warm_start = nullptr) {
    RoundArtifacts a;
    a.window = filtered;
    auto cooc = build_cooccurrence(filtered, cfg.vocab_min_count, cfg.context_window);
    GloveParams gp = cfg.glove;
    gp.seed = seed;
    a.model = std::make_shared<const EmbeddingModel>(train_glove(cooc.vocabulary, cooc.matrix, gp, warm_start));
    a.frequencies = document_frequencies(filtered);

    std::set<std::string> wanted;
    for (const auto& t : keywords.tokens()) wanted.insert(t);
    try {
        a.expansion = expand_candidates(keywords, *a.model, cfg.policy.neighbors);
        // candidates under min_count are discarded before scoring, so their
        // forecasts are never read
        for (const auto& c : a.expansion.candidates) {
            auto it = a.frequencies.find(c);
            if (it != a.frequencies.end() && it->second >= cfg.policy.min_count) wanted.insert(c);
        }
    } catch (const NotFound&) {
        a.expansion.skipped = keywords.tokens();
    }

    std::vector<std::string> tokens(wanted.begin(), wanted.end());
    a.series = frequency_table(filtered, tokens, cfg.bucket_width);
    std::vector<std::optional<KeywordForecast>> results(tokens.size());
    parallel_for(tokens.size(), cfg.threads, [&](std::size_t i) {
        results[i] = forecast_keyword(a.series.at(tokens[i]), cfg.forecast);
    });
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (results[i]) a.forecasts.emplace(tokens[i], std::move(*results[i]));
    return a;
}

}  // namespace kwtrack
