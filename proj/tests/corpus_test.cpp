#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "kwtrack/corpus.hpp"
#include "test_support.hpp"

using namespace kwtrack;
using kwtrack::testing::at_hour;
using kwtrack::testing::doc;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& toks) {
    std::vector<std::string> out;
    for (const auto& t : toks) out.push_back(t.surface);
    return out;
}

TimeRange day_range() { return {at_hour(0), at_hour(24)}; }

}  // namespace

TEST(Tokenize, MixedKinds) {
    auto toks = tokenize("Watch the #Inauguration LIVE");
    ASSERT_EQ(toks.size(), 4u);
    EXPECT_EQ(toks[0], (Token{"watch", TokenKind::word}));
    EXPECT_EQ(toks[1], (Token{"the", TokenKind::word}));
    EXPECT_EQ(toks[2], (Token{"#inauguration", TokenKind::hashtag}));
    EXPECT_EQ(toks[3], (Token{"live", TokenKind::word}));
}

TEST(Tokenize, UrlRemoved) {
    auto toks = tokenize("@POTUS https://t.co/x");
    ASSERT_EQ(toks.size(), 1u);
    EXPECT_EQ(toks[0], (Token{"@potus", TokenKind::mention}));
}

TEST(Tokenize, PunctuationAndCase) {
    auto toks = tokenize("#MeToo. #metoo!");
    ASSERT_EQ(toks.size(), 2u);
    EXPECT_EQ(toks[0], (Token{"#metoo", TokenKind::hashtag}));
    EXPECT_EQ(toks[1], (Token{"#metoo", TokenKind::hashtag}));
}

TEST(Tokenize, ApostrophesShortTokensAndEmoji) {
    EXPECT_EQ(surfaces(tokenize("don't stop")), (std::vector<std::string>{"don't", "stop"}));
    EXPECT_EQ(surfaces(tokenize("'quoted' a b cc")), (std::vector<std::string>{"quoted", "cc"}));
    EXPECT_EQ(surfaces(tokenize("#a #bb @c")), (std::vector<std::string>{"#bb"}));
    EXPECT_EQ(surfaces(tokenize("fire\xF0\x9F\x94\xA5works \xE2\x9D\xA4\xEF\xB8\x8F")),
              (std::vector<std::string>{"fire", "works"}));
    EXPECT_EQ(surfaces(tokenize("Caf\xC3\x89 na\xC3\xAFve")),
              (std::vector<std::string>{"caf\xC3\xA9", "na\xC3\xAFve"}));
    EXPECT_EQ(surfaces(tokenize("see (www.example.com/a) now")), (std::vector<std::string>{"see", "now"}));
    EXPECT_EQ(surfaces(tokenize("end-to-end #x_y")), (std::vector<std::string>{"end", "to", "end", "#x_y"}));
    EXPECT_TRUE(tokenize("").empty());
}

TEST(Tokenize, InvariantsHoldOnRandomText) {
    std::mt19937_64 rng(7);
    const std::string alphabet = "ab#@ '.,!\t\nXY\xC3\xA9:/";
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        int len = static_cast<int>(rng() % 40);
        for (int i = 0; i < len; ++i) text.push_back(alphabet[rng() % alphabet.size()]);
        auto toks = tokenize(text);
        EXPECT_EQ(toks, tokenize(text));
        for (const auto& t : toks) {
            EXPECT_EQ(t.kind, kind_of(t.surface));
            EXPECT_EQ(t.surface.find_first_of(" \t\n"), std::string::npos);
            EXPECT_EQ(std::count_if(t.surface.begin(), t.surface.end(), [](char c) { return c >= 'A' && c <= 'Z'; }), 0);
        }
    }
}

TEST(Ingest, AllInsideRange) {
    std::istringstream in(doc("1", 1, "hello world").line() + "\n" + doc("2", 2, "#tag").line() + "\n" +
                          doc("3", 3, "more").line() + "\n");
    auto res = ingest(in, day_range());
    EXPECT_EQ(res.window.size(), 3u);
    EXPECT_EQ(res.stats.malformed, 0u);
    EXPECT_EQ(res.stats.out_of_range, 0u);
}

TEST(Ingest, OutOfRangeSkipped) {
    std::istringstream in(doc("1", 1, "a").line() + "\n" + doc("2", 30, "b").line() + "\n" +
                          doc("3", 3, "c").line() + "\n");
    auto res = ingest(in, day_range());
    EXPECT_EQ(res.window.size(), 2u);
    EXPECT_EQ(res.stats.out_of_range, 1u);
}

TEST(Ingest, MalformedLineCounted) {
    std::string lines = doc("1", 5, "a").line() + "\n" + doc("2", 1, "b").line() + "\n" +
                        R"({"id": "3", "created_at": "not a date", "text": "c"})" + "\n" +
                        doc("4", 3, "d").line() + "\n" + doc("5", 2, "e").line() + "\n";
    std::istringstream in(lines);
    auto res = ingest(in, day_range());
    EXPECT_EQ(res.window.size(), 4u);
    EXPECT_EQ(res.stats.malformed, 1u);
    // sorted ascending
    for (std::size_t i = 1; i < res.window.size(); ++i)
        EXPECT_LE(res.window.documents[i - 1].timestamp, res.window.documents[i].timestamp);
}

TEST(Ingest, OtherMalformedShapesAndDuplicates) {
    std::string lines = "{not json\n"
                        R"({"id": "", "created_at": "2021-01-11T00:00:00Z", "text": "x"})" "\n"
                        R"({"id": "9", "text": "no time"})" "\n"
                        R"([1,2,3])" "\n" +
                        doc("7", 1, "a").line() + "\n" + doc("7", 2, "again").line() + "\n\n";
    std::istringstream in(lines);
    auto res = ingest(in, day_range());
    EXPECT_EQ(res.window.size(), 1u);
    EXPECT_EQ(res.stats.malformed, 4u);
    EXPECT_EQ(res.stats.duplicate_id, 1u);
}

TEST(Ingest, EmptySourceIsEmptyWindow) {
    std::istringstream in("");
    auto res = ingest(in, day_range());
    EXPECT_TRUE(res.window.empty());
}

TEST(Ingest, UnreadableFileThrows) {
    EXPECT_THROW(ingest_file("/nonexistent/nowhere.ndjson", day_range()), IngestError);
}

TEST(Ingest, TimestampFormats) {
    EXPECT_EQ(parse_iso8601("2021-01-11T10:40:44Z"), parse_iso8601("2021-01-11T02:40:44-08:00"));
    EXPECT_EQ(parse_iso8601("2021-01-11 10:40:44.123Z"), parse_iso8601("2021-01-11T10:40:44Z"));
    EXPECT_FALSE(parse_iso8601("2021-02-30T00:00:00Z"));
    EXPECT_FALSE(parse_iso8601("2021-01-11T10:40"));
    EXPECT_EQ(format_iso8601(*parse_iso8601("2017-10-15T23:59:01Z")), "2017-10-15T23:59:01Z");
}

TEST(Filter, SetIntersection) {
    auto w = make_window({doc("1", 0, "#aa").document(), doc("2", 1, "#bb").document(),
                          doc("3", 2, "#aa #bb").document()},
                         day_range());
    auto f = filter(w, std::set<std::string>{"#aa"});
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f.documents[0].id, "1");
    EXPECT_EQ(f.documents[1].id, "3");
    EXPECT_TRUE(filter(w, std::set<std::string>{"#zzz"}).empty());
    EXPECT_EQ(filter(f, std::set<std::string>{"#aa"}).documents, f.documents);
    EXPECT_THROW(filter(w, std::set<std::string>{}), std::invalid_argument);
}

TEST(Filter, ExactTokenMatchOnly) {
    auto w = make_window({doc("1", 0, "#biden rally").document()}, day_range());
    EXPECT_TRUE(filter(w, std::set<std::string>{"#bide"}).empty());
    EXPECT_TRUE(filter(w, std::set<std::string>{"biden"}).empty());
    EXPECT_EQ(filter(w, std::set<std::string>{"rally"}).size(), 1u);
}

TEST(Filter, BruteForceOnRandomFixtures) {
    std::mt19937_64 rng(11);
    const std::vector<std::string> vocab = {"#aa", "#bb", "#cc", "@dd", "ee", "ff"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Document> docs;
        for (int i = 0; i < 30; ++i) {
            std::string text;
            for (int k = 0; k < 4; ++k) text += vocab[rng() % vocab.size()] + " ";
            docs.push_back(doc(std::to_string(i), static_cast<int>(rng() % 24), text).document());
        }
        auto w = make_window(docs, day_range());
        std::set<std::string> kw{vocab[rng() % vocab.size()], vocab[rng() % vocab.size()]};
        auto f = filter(w, kw);
        std::size_t kept = 0;
        for (const auto& d : w.documents) {
            bool hit = false;
            for (const auto& t : tokenize(d.text)) hit = hit || kw.count(t.surface);
            if (hit) {
                ASSERT_LT(kept, f.size());
                EXPECT_EQ(f.documents[kept].id, d.id);
                ++kept;
            }
        }
        EXPECT_EQ(kept, f.size());
    }
}

TEST(FrequencySeries, HourlyCounts) {
    auto w = make_window({doc("1", 0, "#xx").document(), doc("2", 0, "#xx hi").document(),
                          doc("3", 1, "#xx").document(), doc("4", 3, "#xx").document(),
                          doc("5", 2, "#yy").document()},
                         {at_hour(0), at_hour(4)});
    auto s = frequency_series(w, "#xx", std::chrono::hours{1});
    EXPECT_EQ(s.counts, (std::vector<std::int64_t>{2, 1, 0, 1}));
    EXPECT_EQ(s.bucket_start(2), at_hour(2));
    auto absent = frequency_series(w, "#nope", std::chrono::hours{1});
    EXPECT_EQ(absent.counts, (std::vector<std::int64_t>{0, 0, 0, 0}));
}

TEST(FrequencySeries, DocumentFrequencyNotTermFrequency) {
    auto w = make_window({doc("1", 0, "#xx and #xx again").document()}, {at_hour(0), at_hour(2)});
    EXPECT_EQ(frequency_series(w, "#xx", std::chrono::hours{1}).counts, (std::vector<std::int64_t>{1, 0}));
}

TEST(FrequencySeries, PermutationInvariantTotals) {
    std::mt19937_64 rng(3);
    std::vector<Document> docs;
    for (int i = 0; i < 100; ++i)
        docs.push_back(doc(std::to_string(i), static_cast<int>(rng() % 24), rng() % 2 ? "#xx" : "#yy #xx").document());
    auto a = frequency_series(make_window(docs, day_range()), "#xx", std::chrono::hours{3});
    std::shuffle(docs.begin(), docs.end(), rng);
    auto b = frequency_series(make_window(docs, day_range()), "#xx", std::chrono::hours{3});
    EXPECT_EQ(a.counts, b.counts);
    EXPECT_LE(a.total(), 100);
}

TEST(Corpus, TopHashtagsTieBreak) {
    auto w = make_window({doc("1", 0, "#bb #aa").document(), doc("2", 1, "#aa #cc").document(),
                          doc("3", 2, "#bb #dd").document()},
                         day_range());
    EXPECT_EQ(top_hashtags(w, 3), (std::vector<std::string>{"#aa", "#bb", "#cc"}));
}

TEST(ReplayFetcher, PullsRangeAndKeywords) {
    ReplayFetcher f({doc("1", 0, "#aa").document(), doc("2", 5, "#bb").document(), doc("3", 30, "#aa").document()});
    EXPECT_EQ(f.pull({"#aa"}, day_range()).size(), 1u);
    EXPECT_EQ(f.pull({}, day_range()).size(), 2u);
}
