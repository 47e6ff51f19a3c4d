#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include <pragcheck/scoring_client.hpp>
#include <pragcheck/testing/fake_completions.hpp>

using namespace pragcheck;
using namespace pragcheck::scoring;
using pragcheck::testing::FakeCompletionsServer;

namespace {

class ScoringTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("pragcheck-scoring-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::remove_all(dir_);
        std::filesystem::create_directories(dir_);
        server_.start();
    }
    void TearDown() override {
        server_.stop();
        std::filesystem::remove_all(dir_);
    }

    ScoringConfig config(const std::string& cache = "cache.jsonl") const {
        ScoringConfig c;
        c.base_url = server_.base_url();
        c.cache_path = (dir_ / cache).string();
        c.retry.max_attempts = 2;
        c.retry.initial_backoff = std::chrono::milliseconds(1);
        c.timeout = std::chrono::seconds(10);
        return c;
    }

    std::vector<refgame::Item> items(Condition c, int n) const {
        std::vector<refgame::Item> out;
        for (int i = 0; i < n; ++i) out.push_back(refgame::generate_item(static_cast<std::uint64_t>(40 + i), c));
        return out;
    }

    std::filesystem::path dir_;
    FakeCompletionsServer server_;
};

} // namespace

TEST(ScoringHelpers, CacheKeySeparatesInputs) {
    EXPECT_EQ(cache_key("m", "p", "o"), cache_key("m", "p", "o"));
    EXPECT_NE(cache_key("m", "p", "o"), cache_key("m2", "p", "o"));
    EXPECT_NE(cache_key("m", "p", "o"), cache_key("m", "p2", "o"));
    EXPECT_NE(cache_key("m", "p", "o"), cache_key("m", "p", "o2"));
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ScoringHelpers, RecordJsonRoundTrip) {
    RawScoreRecord r{"k", "i", "blue", {{" blue", -1.5}}, "m", "2024-01-01T00:00:00Z"};
    EXPECT_EQ(record_from_json(to_json(r)), r);
}

TEST(ScoringHelpers, ExtractOptionTokens) {
    FakeCompletionsServer fake;
    fake.scripted[" circle"] = {{" cir", -1.0}, {"cle", -3.0}};
    const auto toks = detail::extract_option_tokens(fake.completion_for("Pick one: circle"), "Pick one:", " circle");
    ASSERT_EQ(toks.size(), 2u);
    EXPECT_EQ(toks[0].token, " cir");
    EXPECT_DOUBLE_EQ(toks[1].logprob, -3.0);
    fake.straddling.insert(" circle");
    EXPECT_THROW(detail::extract_option_tokens(fake.completion_for("Pick one: circle"), "Pick one:", " circle"),
                 BoundaryError);
}

TEST_F(ScoringTest, ScriptedTokensGiveMeanScore) {
    server_.scripted[" circle"] = {{" cir", -1.0}, {"cle", -3.0}};
    Scorer scorer(config());
    const auto rec = scorer.score_option("x", "Which word?", "circle");
    EXPECT_EQ(rec.logprobs(), (std::vector<double>{-1.0, -3.0}));
    EXPECT_DOUBLE_EQ(llm::item_score(rec.logprobs()), -2.0);
    EXPECT_EQ(scorer.network_calls(), 1u);
}

TEST_F(ScoringTest, CacheHitMakesNoRequest) {
    Scorer scorer(config());
    const auto a = scorer.score_option("x", "prompt", "blue");
    const auto b = scorer.score_option("x", "prompt", "blue");
    EXPECT_EQ(a, b);
    EXPECT_EQ(server_.requests(), 1u);
    // a second scorer reads the file
    Scorer again(config());
    EXPECT_EQ(again.score_option("x", "prompt", "blue"), a);
    EXPECT_EQ(again.network_calls(), 0u);
    EXPECT_EQ(server_.requests(), 1u);
}

TEST_F(ScoringTest, WarmCacheMeansZeroCalls) {
    const auto set = items(Condition::Production, 5);
    ScoringResult cold;
    {
        Scorer scorer(config());
        cold = scorer.score_item_set(set);
        EXPECT_EQ(scorer.network_calls(), 20u);
        EXPECT_TRUE(cold.table.complete);
    }
    const auto before = server_.requests();
    server_.stop();
    ScoringConfig offline = config();
    offline.base_url.clear();
    Scorer warm(offline);
    const auto again = warm.score_item_set(set);
    EXPECT_EQ(warm.network_calls(), 0u);
    EXPECT_EQ(server_.requests(), before);
    ASSERT_EQ(again.table.items.size(), cold.table.items.size());
    for (std::size_t i = 0; i < again.table.items.size(); ++i)
        for (std::size_t o = 0; o < 4; ++o)
            EXPECT_EQ(again.table.items[i].options[o].score, cold.table.items[i].options[o].score);
}

TEST_F(ScoringTest, OutputOrderFollowsInput) {
    const auto set = items(Condition::Interpretation, 8);
    ScoringConfig c = config();
    c.max_concurrent_requests = 6;
    Scorer scorer(c);
    const auto r = scorer.score_item_set(set);
    ASSERT_EQ(r.table.items.size(), set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        EXPECT_EQ(r.table.items[i].item_id, set[i].id);
        const auto opts = refgame::option_texts(set[i]);
        for (std::size_t o = 0; o < opts.size(); ++o) {
            EXPECT_EQ(r.table.items[i].options[o].option_text, opts[o]);
            EXPECT_EQ(r.table.items[i].options[o].category, set[i].categories[o]);
        }
    }
    ScoringConfig serial = config("serial.jsonl");
    serial.max_concurrent_requests = 1;
    Scorer one(serial);
    const auto s = one.score_item_set(set);
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t o = 0; o < 3; ++o)
            EXPECT_EQ(s.table.items[i].options[o].score, r.table.items[i].options[o].score);
}

TEST_F(ScoringTest, FailingOptionMakesTableIncomplete) {
    const auto set = items(Condition::Production, 3);
    const auto bad = refgame::option_texts(set[1])[2];
    server_.failing.insert(" " + bad);
    {
        Scorer scorer(config());
        EXPECT_THROW(scorer.score_item_set(set), IncompleteTableError);
    }
    Scorer scorer(config("partial.jsonl"));
    const auto r = scorer.score_item_set(set, {}, true);
    EXPECT_FALSE(r.table.complete);
    // every item sharing that word fails too
    EXPECT_FALSE(r.table.missing.empty());
    EXPECT_NE(std::find(r.table.missing.begin(), r.table.missing.end(), set[1].id), r.table.missing.end());
    EXPECT_EQ(r.table.items.size() + r.table.missing.size(), set.size());
    EXPECT_FALSE(r.failures.empty());
}

TEST_F(ScoringTest, StraddlingTokenIsRejected) {
    Scorer scorer(config());
    server_.straddling.insert(" zebra");
    EXPECT_THROW(scorer.score_option("x", "Say", "zebra"), BoundaryError);
    EXPECT_EQ(scorer.cache().size(), 0u);
}

TEST_F(ScoringTest, MissingKeyIsUnauthorized) {
    server_.required_key = "sekrit";
    Scorer anonymous(config());
    try {
        anonymous.score_option("x", "p", "blue");
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_NE(std::string(e.what()).find("401"), std::string::npos);
    }
    EXPECT_EQ(anonymous.network_calls(), 1u); // 4xx is not retried
    ScoringConfig c = config();
    c.api_key = "sekrit";
    Scorer keyed(c);
    EXPECT_NO_THROW(keyed.score_option("x", "p", "blue"));
}

TEST_F(ScoringTest, NoEndpointAndColdCache) {
    ScoringConfig c = config();
    c.base_url.clear();
    Scorer scorer(c);
    EXPECT_THROW(scorer.score_option("x", "p", "blue"), TransportError);
}

TEST_F(ScoringTest, ServerErrorsAreRetried) {
    server_.failing.insert(" red");
    Scorer scorer(config());
    EXPECT_THROW(scorer.score_option("x", "p", "red"), TransportError);
    EXPECT_EQ(server_.requests(), 2u);
}
