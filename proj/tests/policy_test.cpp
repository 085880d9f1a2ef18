#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "kwtrack/policy.hpp"
#include "policy_support.hpp"
#include "test_support.hpp"

using namespace kwtrack;
using namespace kwtrack::testing;

namespace {

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

// Tracked keyword "#kw" at the origin direction plus candidates at chosen
// angles, all hashtags.
struct Fixture {
    std::vector<ModelEntry> entries;
    std::shared_ptr<EmbeddingModel> model;
    RoundInputs in;

    void add(const std::string& tok, double angle, std::int64_t count = 10) {
        entries.push_back({tok, count, {std::cos(angle), std::sin(angle)}});
    }
    void finish(KeywordSet kws) {
        model = model_from(entries);
        in.keywords = std::move(kws);
        in.model = model.get();
    }
};

std::filesystem::path temp_file(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("kwtrack_policy_" + name);
    std::filesystem::remove(p);
    return p;
}

}  // namespace

TEST(KeywordSet, CapDuplicatesAndAge) {
    KeywordSet s(4, 2);
    s.add("#aa", 1);
    EXPECT_THROW(s.add("#aa", 4), ValidationError);
    s.add("#bb", 4);
    try {
        s.add("#cc", 4);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.reason(), "cap_exceeded");
        EXPECT_EQ(e.tokens(), std::vector<std::string>{"#cc"});
    }
    EXPECT_EQ(s.age("#aa"), 3);
    EXPECT_EQ(s.age("#bb"), 0);
    EXPECT_THROW(s.remove("#zz"), NotFound);
    auto back = nlohmann::json(s).get<KeywordSet>();
    EXPECT_EQ(back, s);
}

TEST(KeywordSet, Normalization) {
    EXPECT_EQ(normalize_keyword("#MeToo"), "#metoo");
    EXPECT_EQ(normalize_keyword("@POTUS"), "@potus");
    EXPECT_THROW(normalize_keyword("two words"), ValidationError);
    EXPECT_THROW(normalize_keyword("#metoo!"), ValidationError);
    EXPECT_THROW(normalize_keyword(""), ValidationError);
}

TEST(ExpandCandidates, SmallVocabularyTruncates) {
    Fixture fx;
    for (int i = 0; i < 10; ++i) fx.add("#h" + std::to_string(i), 0.1 * i);
    fx.finish(KeywordSet::seeded({"#h0"}));
    auto e = expand_candidates(fx.in.keywords, *fx.model, 30);
    EXPECT_EQ(e.candidates.size(), 9u);
    EXPECT_EQ(std::count(e.candidates.begin(), e.candidates.end(), "#h0"), 0);
}

TEST(ExpandCandidates, UnionHasNoDuplicates) {
    Fixture fx;
    for (int i = 0; i < 10; ++i) fx.add("#h" + std::to_string(i), 0.1 * i);
    fx.finish(KeywordSet::seeded({"#h0", "#h1"}));
    auto e = expand_candidates(fx.in.keywords, *fx.model, 4);
    EXPECT_EQ(as_set(e.candidates).size(), e.candidates.size());
    // h0 -> h1 h2 h3 h4, h1 -> h0 h2 h3 h4 (incumbents dropped)
    EXPECT_EQ(e.candidates, (std::vector<std::string>{"#h2", "#h3", "#h4"}));
}

TEST(ExpandCandidates, KindFilterAndOutOfVocabulary) {
    Fixture fx;
    fx.add("#kw", 0.0);
    fx.add("word", 0.01);
    fx.add("@someone", 0.02);
    fx.add("#tag", 0.03);
    fx.finish(KeywordSet::seeded({"#kw", "#gone"}));
    auto e = expand_candidates(fx.in.keywords, *fx.model, 30);
    EXPECT_EQ(e.candidates, (std::vector<std::string>{"#tag", "@someone"}));
    EXPECT_EQ(e.skipped, (std::vector<std::string>{"#gone"}));
    EXPECT_THROW(expand_candidates(KeywordSet::seeded({"#gone"}), *fx.model, 30), NotFound);
}

TEST(ExpandCandidates, MatchesBruteForceScan) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<ModelEntry> entries;
    for (int i = 0; i < 200; ++i) {
        std::string prefix = i % 3 == 0 ? "#" : (i % 3 == 1 ? "@" : "");
        ModelEntry e{prefix + "w" + std::to_string(i), 1 + static_cast<std::int64_t>(rng() % 100), {}};
        for (int k = 0; k < 8; ++k) e.vec.push_back(u(rng));
        entries.push_back(e);
    }
    auto model = model_from(entries);
    KeywordSet kws = KeywordSet::seeded({"#w0", "@w1", "w2"});
    const std::size_t k = 30;
    std::set<std::string> expected;
    for (const auto& kw : kws.tokens()) {
        const auto& q = *std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.token == kw; });
        std::vector<std::pair<double, std::string>> sims;
        for (const auto& e : entries)
            if (e.token != kw) sims.emplace_back(raw_cosine(q.vec, e.vec), e.token);
        std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = 0; i < k; ++i)
            if (sims[i].second[0] == '#' || sims[i].second[0] == '@')
                if (!kws.contains(sims[i].second)) expected.insert(sims[i].second);
    }
    auto e = expand_candidates(kws, *model, k);
    EXPECT_EQ(as_set(e.candidates), expected);
}

TEST(Score, WeightIsolation) {
    Fixture fx;
    fx.add("#kw", 0.0);
    fx.add("#aa", 0.5, 10);
    fx.add("#bb", 1.0, 30);
    fx.add("#cc", 1.5, 20);
    fx.finish(KeywordSet::seeded({"#kw"}));
    fx.in.forecasts["#aa"] = line_forecast(0.30);
    fx.in.forecasts["#bb"] = line_forecast(0.10);
    fx.in.forecasts["#cc"] = line_forecast(0.20);
    fx.in.frequencies = {{"#aa", 10}, {"#bb", 30}, {"#cc", 20}};
    std::vector<std::string> pool = {"#aa", "#bb", "#cc"};

    auto order = [&](PolicyWeights w) {
        auto s = select_top(score_pool(pool, fx.in, w), 3);
        std::vector<std::string> out;
        for (const auto& c : s) out.push_back(c.token.surface);
        return out;
    };
    EXPECT_EQ(order({1, 0, 0, 0}), (std::vector<std::string>{"#aa", "#cc", "#bb"}));
    EXPECT_EQ(order({0, 0, 1, 0}), (std::vector<std::string>{"#bb", "#cc", "#aa"}));
    EXPECT_EQ(order({0, 1, 0, 0}), (std::vector<std::string>{"#cc", "#bb", "#aa"}));

    auto scored = score_pool(pool, fx.in, {});
    for (const auto& c : scored) {
        EXPECT_GE(c.dbar, 0.0);
        EXPECT_LE(c.dbar, 2.0);
        EXPECT_GE(c.f, 0.0);
        EXPECT_LE(c.f, 1.0);
        EXPECT_GE(c.v, 0.0);
        EXPECT_TRUE(std::isfinite(c.score));
    }
    EXPECT_DOUBLE_EQ(scored[1].f, 1.0);
}

TEST(Score, IdenticalVectorHasZeroDistanceAndMissingForecastIsFlagged) {
    Fixture fx;
    fx.add("#kw", 0.7);
    fx.add("#twin", 0.7);
    fx.finish(KeywordSet::seeded({"#kw"}));
    auto c = score("#twin", fx.in.keywords, *fx.model, nullptr, 5, 5.0, 0.0, {});
    EXPECT_NEAR(c.dbar, 0.0, 1e-12);
    EXPECT_TRUE(c.unforecast);
    EXPECT_EQ(c.m, 0.0);
    EXPECT_EQ(c.v, 0.0);
    EXPECT_FALSE(c.trend.has_value());
}

TEST(Weights, AllZeroRejected) {
    EXPECT_THROW(PolicyWeights({0, 0, 0, 0}).validate(), std::invalid_argument);
    EXPECT_NO_THROW(PolicyWeights({0, -1, 0, 0}).validate());
}

TEST(NextKeywordsAuto, AllDecliningAddsNothing) {
    Fixture fx;
    fx.add("#kw", 0.0);
    for (int i = 1; i <= 5; ++i) {
        fx.add("#c" + std::to_string(i), 0.1 * i);
        fx.in.forecasts["#c" + std::to_string(i)] = line_forecast(-0.2);
        fx.in.frequencies["#c" + std::to_string(i)] = 50;
    }
    fx.finish(KeywordSet::seeded({"#kw"}, 2));
    auto r = next_keywords_auto(fx.in);
    EXPECT_TRUE(r.proposal.additions.empty());
    EXPECT_TRUE(r.proposal.removals.empty());
    EXPECT_EQ(r.keywords.tokens(), fx.in.keywords.tokens());
    EXPECT_EQ(r.keywords.round(), 3);
    EXPECT_EQ(r.proposal.status, ProposalStatus::auto_applied);
}

TEST(NextKeywordsAuto, ThreeRisingAllAdded) {
    Fixture fx;
    fx.add("#kw", 0.0);
    for (int i = 1; i <= 3; ++i) {
        fx.add("#c" + std::to_string(i), 0.1 * i);
        fx.in.forecasts["#c" + std::to_string(i)] = line_forecast(0.1 * i);
        fx.in.frequencies["#c" + std::to_string(i)] = 20;
    }
    fx.finish(KeywordSet::seeded({"#kw"}));
    auto r = next_keywords_auto(fx.in);
    EXPECT_EQ(r.keywords.tokens(), (std::vector<std::string>{"#c1", "#c2", "#c3", "#kw"}));
    ASSERT_EQ(r.proposal.additions.size(), 3u);
    for (std::size_t i = 1; i < 3; ++i) EXPECT_GE(r.proposal.additions[i - 1].score, r.proposal.additions[i].score);
    EXPECT_EQ(r.keywords.added_round("#c1"), 1);
}

TEST(NextKeywordsAuto, LowCountDiscarded) {
    Fixture fx;
    fx.add("#kw", 0.0);
    fx.add("#rare", 0.1);
    fx.add("#common", 0.2);
    fx.finish(KeywordSet::seeded({"#kw"}));
    fx.in.frequencies = {{"#rare", 9}, {"#common", 10}};
    auto r = next_keywords_auto(fx.in);
    EXPECT_EQ(r.proposal.addition_tokens(), std::vector<std::string>{"#common"});
}

TEST(NextKeywordsAuto, CapAllowsExactlyOneAdditionAndPicksArgmax) {
    Fixture fx;
    std::vector<std::string> incumbents;
    for (int i = 0; i < 14; ++i) {
        fx.add("#in" + std::to_string(i), 0.01 * i);
        incumbents.push_back("#in" + std::to_string(i));
    }
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
        std::string t = "#new" + std::to_string(i);
        fx.add(t, 0.2 + 0.01 * i);
        fx.in.forecasts[t] = line_forecast(0.02 + 0.01 * static_cast<double>(rng() % 20));
        fx.in.frequencies[t] = 10 + static_cast<std::int64_t>(rng() % 50);
    }
    fx.finish(KeywordSet::seeded(incumbents, 0, 15));
    PolicyOptions opt;
    opt.neighbors = 40;
    auto r = next_keywords_auto(fx.in, {}, opt);
    ASSERT_EQ(r.proposal.additions.size(), 1u);
    EXPECT_EQ(r.keywords.size(), 15u);

    PolicyInstance inst{fx.model, fx.entries, fx.in, {}, opt};
    auto oracle = brute_force_auto(inst);
    EXPECT_EQ(as_set(r.proposal.addition_tokens()), oracle.additions);
}

TEST(NextKeywordsAuto, DecliningOldIncumbentsRemoved) {
    Fixture fx;
    fx.add("#old", 0.0);
    fx.add("#young", 0.1);
    fx.add("#steady", 0.2);
    KeywordSet kws(5);
    kws.add("#old", 2);
    kws.add("#young", 3);
    kws.add("#steady", 0);
    fx.finish(kws);
    fx.in.forecasts["#old"] = line_forecast(-0.1);
    fx.in.forecasts["#young"] = line_forecast(-0.1);
    fx.in.forecasts["#steady"] = line_forecast(0.0);
    fx.in.frequencies = {{"#old", 50}, {"#young", 50}, {"#steady", 50}};
    auto r = next_keywords_auto(fx.in);
    ASSERT_EQ(r.proposal.removals.size(), 1u);
    EXPECT_EQ(r.proposal.removals[0], (Removal{"#old", RemovalReason::declining}));
    EXPECT_EQ(r.keywords.tokens(), (std::vector<std::string>{"#steady", "#young"}));
}

TEST(NextKeywordsAuto, OldUnusedIncumbentsRemoved) {
    Fixture fx;
    fx.add("#quiet", 0.0);
    fx.add("#fresh", 0.1);
    fx.add("#busy", 0.2);
    KeywordSet kws(6);
    kws.add("#quiet", 1);
    kws.add("#fresh", 5);
    kws.add("#busy", 1);
    kws.add("#vanished", 2);
    fx.finish(kws);
    fx.in.frequencies = {{"#quiet", 3}, {"#fresh", 0}, {"#busy", 40}};
    auto r = next_keywords_auto(fx.in);
    EXPECT_EQ(r.proposal.removals, (std::vector<Removal>{{"#quiet", RemovalReason::low_frequency},
                                                         {"#vanished", RemovalReason::stale}}));
    EXPECT_EQ(r.keywords.tokens(), (std::vector<std::string>{"#busy", "#fresh"}));
}

TEST(NextKeywordsAuto, OverCapIncumbentsTrimmedLowestFirst) {
    Fixture fx;
    KeywordSet kws(1, 6);
    for (int i = 0; i < 5; ++i) {
        fx.add("#in" + std::to_string(i), 0.1 * i);
        kws.add("#in" + std::to_string(i), 0);
        fx.in.frequencies["#in" + std::to_string(i)] = 10 * (i + 1);
    }
    kws.add("#zz_unseen", 1);
    kws.set_cap(4);  // e.g. the cap was lowered in the config
    fx.finish(kws);
    PolicyWeights w{0, 0, 1, 0};
    auto r = next_keywords_auto(fx.in, w);
    EXPECT_EQ(r.proposal.removals,
              (std::vector<Removal>{{"#zz_unseen", RemovalReason::stale}, {"#in0", RemovalReason::low_frequency}}));
    EXPECT_EQ(r.keywords.size(), 4u);
}

TEST(NextKeywordsAuto, FrequencyOnlyWeightsReduceToFrequencyHeuristic) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        Fixture fx;
        fx.add("#kw", 0.0);
        std::vector<std::pair<std::int64_t, std::string>> pool;
        for (int i = 0; i < 12; ++i) {
            std::string t = "#c" + std::to_string(i);
            fx.add(t, 0.05 * (i + 1));
            auto f = static_cast<std::int64_t>(rng() % 100);
            fx.in.frequencies[t] = f;
            pool.emplace_back(f, t);
        }
        fx.finish(KeywordSet::seeded({"#kw"}));
        PolicyOptions opt;
        opt.min_count = 0;
        opt.add_limit = 1 + rng() % 6;
        auto r = next_keywords_auto(fx.in, {0, 0, 1, 0}, opt);
        std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        std::vector<std::string> expected;
        for (std::size_t i = 0; i < opt.add_limit; ++i) expected.push_back(pool[i].second);
        EXPECT_EQ(r.proposal.addition_tokens(), expected);
    }
}

TEST(NextKeywordsAuto, MatchesBruteForceOnRandomInstances) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto inst = random_policy_instance(seed);
        bool any_in_vocab = false;
        for (const auto& t : inst.inputs.keywords.tokens()) any_in_vocab |= inst.model->vocabulary().contains(t);
        if (!any_in_vocab) {
            EXPECT_THROW(next_keywords_auto(inst.inputs, inst.weights, inst.options), NotFound);
            continue;
        }
        auto r = next_keywords_auto(inst.inputs, inst.weights, inst.options);
        auto oracle = brute_force_auto(inst);
        EXPECT_EQ(as_set(r.proposal.addition_tokens()), oracle.additions) << "seed " << seed;
        EXPECT_EQ(as_set(r.proposal.removal_tokens()), oracle.removals) << "seed " << seed;
        for (const auto& c : r.proposal.additions) EXPECT_NEAR(c.score, oracle.scores.at(c.token.surface), 1e-9);

        EXPECT_LE(r.keywords.size(), r.keywords.cap());
        for (const auto& c : r.proposal.additions) {
            EXPECT_NE(c.trend, Trend::declining);
            EXPECT_GE(c.frequency, inst.options.min_count);
        }

        // affine rescaling of all candidate scores keeps the chosen set
        std::vector<std::string> pool;
        for (const auto& [t, _] : oracle.scores) pool.push_back(t);
        auto scored = score_pool(pool, inst.inputs, inst.weights);
        auto chosen = select_top(scored, r.proposal.additions.size());
        for (double a : {0.5, 3.0, 1e3})
            for (double b : {-7.0, 0.0, 2.5}) {
                auto moved = scored;
                for (auto& c : moved) c.score = a * c.score + b;
                auto again = select_top(moved, r.proposal.additions.size());
                ASSERT_EQ(again.size(), chosen.size());
                for (std::size_t i = 0; i < chosen.size(); ++i) EXPECT_EQ(again[i].token, chosen[i].token);
            }
        PolicyWeights scaled{4 * inst.weights.alpha, 4 * inst.weights.beta, 4 * inst.weights.gamma,
                             4 * inst.weights.delta};
        EXPECT_EQ(next_keywords_auto(inst.inputs, scaled, inst.options).proposal.addition_tokens(),
                  r.proposal.addition_tokens());
    }
}

TEST(NextKeywordsAuto, LiteralReplacementFlag) {
    Fixture fx;
    fx.add("#kw", 0.0);
    fx.add("#aa", 0.1);
    fx.add("#bb", 0.2);
    fx.finish(KeywordSet::seeded({"#kw"}));
    fx.in.frequencies = {{"#aa", 20}, {"#bb", 20}};
    PolicyOptions opt;
    opt.literal_replacement = true;
    auto r = next_keywords_auto(fx.in, {}, opt);
    EXPECT_EQ(r.keywords.tokens(), (std::vector<std::string>{"#aa", "#bb"}));
}

namespace {

Fixture semi_fixture() {
    Fixture fx;
    fx.add("#kw", 0.0);
    fx.add("#old", 0.05);
    for (int i = 1; i <= 4; ++i) {
        fx.add("#c" + std::to_string(i), 0.1 * i);
        fx.in.forecasts["#c" + std::to_string(i)] = line_forecast(0.05 * i);
        fx.in.frequencies["#c" + std::to_string(i)] = 15;
    }
    fx.add("#free", 2.0);
    KeywordSet kws(4);
    kws.add("#kw", 0);
    kws.add("#old", 0);
    fx.in.forecasts["#old"] = line_forecast(-0.3);
    fx.finish(kws);
    return fx;
}

}  // namespace

TEST(Semi, AcceptUnchangedEqualsAuto) {
    auto fx = semi_fixture();
    auto p = next_keywords_semi(fx.in);
    EXPECT_EQ(p.status, ProposalStatus::pending);
    auto rec = apply_decision(p, fx.in.keywords, accept_all(p), fx.model->vocabulary());
    EXPECT_EQ(p.status, ProposalStatus::approved);
    EXPECT_EQ(rec.after, next_keywords_auto(fx.in).keywords);
    EXPECT_EQ(rec.decided_by, DecidedBy::human);
}

TEST(Semi, StrikingEverythingLeavesSetUnchanged) {
    auto fx = semi_fixture();
    auto p = next_keywords_semi(fx.in);
    ASSERT_FALSE(p.additions.empty());
    auto rec = apply_decision(p, fx.in.keywords, {}, fx.model->vocabulary());
    EXPECT_EQ(p.status, ProposalStatus::amended);
    EXPECT_EQ(rec.after.tokens(), fx.in.keywords.tokens());
}

TEST(Semi, FreeFormAdditionsAndValidation) {
    auto fx = semi_fixture();
    const auto& vocab = fx.model->vocabulary();
    auto p = next_keywords_semi(fx.in);

    auto reason = [&](HumanDecision d) {
        auto copy = p;
        try {
            apply_decision(copy, fx.in.keywords, d, vocab);
        } catch (const ValidationError& e) {
            EXPECT_EQ(copy.status, ProposalStatus::pending);
            return e.reason() + ":" + (e.tokens().empty() ? "" : e.tokens().front());
        }
        return std::string("ok");
    };
    EXPECT_EQ(reason({{"#kw"}, {}, {}}), "duplicate:#kw");
    EXPECT_EQ(reason({{"#c1", "#C1"}, {}, {}}), "duplicate:#c1");
    EXPECT_EQ(reason({{"#never"}, {}, {}}), "out_of_vocabulary:#never");
    EXPECT_EQ(reason({{"#never"}, {}, {"#never"}}), "ok");
    EXPECT_EQ(reason({{}, {"#nope"}, {}}), "not_tracked:#nope");
    EXPECT_EQ(reason({{"bad token"}, {}, {}}), "invalid_token:bad token");

    KeywordSet tight = fx.in.keywords;
    tight.set_cap(3);
    auto p2 = p;
    try {
        apply_decision(p2, tight, {{"#c1", "#c2"}, {}, {}}, vocab);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.reason(), "cap_exceeded");
        EXPECT_EQ(e.tokens(), (std::vector<std::string>{"#c1", "#c2"}));
    }

    auto log = temp_file("free.ndjson");
    auto rec = apply_decision(p, fx.in.keywords, {{"#free"}, {}, {}}, vocab, at_hour(5));
    append_record(log, rec);
    auto back = read_records(log);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].decided_by, DecidedBy::human);
    EXPECT_TRUE(back[0].after.contains("#free"));
    EXPECT_EQ(back[0].timestamp, at_hour(5));
    EXPECT_EQ(back[0].proposal->status, ProposalStatus::amended);
    EXPECT_EQ(nlohmann::json(back[0]), nlohmann::json(rec));
}

TEST(Semi, SecondDecisionIsStale) {
    auto fx = semi_fixture();
    auto p = next_keywords_semi(fx.in);
    apply_decision(p, fx.in.keywords, accept_all(p), fx.model->vocabulary());
    EXPECT_THROW(apply_decision(p, fx.in.keywords, accept_all(p), fx.model->vocabulary()), StaleProposal);
}

TEST(Baselines, StaticNeverChanges) {
    auto seed = KeywordSet::seeded({"#aa", "#bb"});
    for (int r = 1; r <= 12; ++r) EXPECT_EQ(baseline_static(seed, r).tokens(), seed.tokens());
}

TEST(Baselines, LastTopCounts) {
    std::vector<Document> docs;
    int id = 0;
    auto push = [&](const std::string& text, int times) {
        for (int i = 0; i < times; ++i) docs.push_back(doc(std::to_string(id++), 1, text).document());
    };
    push("#aa", 5);
    push("#bb", 3);
    push("#cc", 1);
    auto w = make_window(docs, {at_hour(0), at_hour(2)});
    EXPECT_EQ(baseline_last_top(w, 2).tokens(), (std::vector<std::string>{"#aa", "#bb"}));
    EXPECT_THROW(baseline_last_top(make_window({}, {at_hour(0), at_hour(1)}), 2), std::invalid_argument);
}

TEST(Baselines, LastTopMatchesCountAndSort) {
    std::mt19937_64 rng(4);
    std::vector<Document> docs;
    for (int i = 0; i < 1000; ++i) {
        std::string text = "chatter";
        for (int k = 0; k < 3; ++k) text += " #t" + std::to_string(rng() % 40) + " @m" + std::to_string(rng() % 5);
        docs.push_back(doc(std::to_string(i), static_cast<int>(rng() % 24), text).document());
    }
    std::map<std::string, int> count;
    for (const auto& d : docs) {
        std::set<std::string> seen;
        std::string word;
        std::istringstream in(d.text);
        while (in >> word)
            if (word[0] == '#' && seen.insert(word).second) ++count[word];
    }
    std::vector<std::pair<int, std::string>> ranked;
    for (auto& [t, c] : count) ranked.emplace_back(-c, t);
    std::sort(ranked.begin(), ranked.end());
    std::vector<std::string> expected;
    for (int i = 0; i < 15; ++i) expected.push_back(ranked[static_cast<std::size_t>(i)].second);
    std::sort(expected.begin(), expected.end());
    auto got = baseline_last_top(make_window(docs, {at_hour(0), at_hour(24)}), 15);
    EXPECT_EQ(got.tokens(), expected);
}

TEST(RecordLog, ReplayReproducesSequence) {
    auto inst = random_policy_instance(3);
    auto log = temp_file("replay.ndjson");
    std::vector<KeywordSet> direct{inst.inputs.keywords};
    RoundInputs in = inst.inputs;
    for (int r = 0; r < 6; ++r) {
        auto res = next_keywords_auto(in, inst.weights, inst.options, at_hour(r));
        append_record(log, res.record);
        direct.push_back(res.keywords);
        in.keywords = res.keywords;
    }
    auto seq = replay(read_records(log));
    ASSERT_EQ(seq.size(), direct.size());
    for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(nlohmann::json(seq[i]).dump(), nlohmann::json(direct[i]).dump());

    auto records = read_records(log);
    records[2].added.push_back("#tampered");
    EXPECT_THROW(replay(records), std::runtime_error);
}
