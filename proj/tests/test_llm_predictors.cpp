#include <gtest/gtest.h>

#include <sstream>

#include <pragcheck/llm_predictors.hpp>
#include <pragcheck/random.hpp>

using namespace pragcheck;
using namespace pragcheck::llm;

namespace {

ItemScores three(const std::string& id, double t, double c, double d) {
    return {id,
            {{ResponseCategory::Target, "t", {}, t, 1},
             {ResponseCategory::Competitor, "c", {}, c, 1},
             {ResponseCategory::Distractor, "d", {}, d, 1}}};
}

ItemScores four(const std::string& id, double t, double c, double d1, double d2) {
    return {id,
            {{ResponseCategory::Distractor, "d1", {}, d1, 1},
             {ResponseCategory::Target, "t", {}, t, 1},
             {ResponseCategory::Distractor, "d2", {}, d2, 1},
             {ResponseCategory::Competitor, "c", {}, c, 1}}};
}

ScoreTable table_of(std::vector<ItemScores> items, Condition c = Condition::Interpretation) {
    ScoreTable t;
    t.condition = c;
    t.items = std::move(items);
    return t;
}

ScoreTable random_table(Rng& rng, int n, bool production) {
    std::vector<ItemScores> items;
    for (int i = 0; i < n; ++i) {
        auto u = [&] { return -8.0 * uniform01(rng); };
        items.push_back(production ? four("i" + std::to_string(i), u(), u(), u(), u())
                                   : three("i" + std::to_string(i), u(), u(), u()));
    }
    return table_of(items, production ? Condition::Production : Condition::Interpretation);
}

void expect_close(const Categorical3& a, const Categorical3& b, double tol) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], tol) << "category " << k;
}

} // namespace

TEST(ItemScore, MeanAndSum) {
    const std::vector<double> one{-0.5}, two{-1.0, -3.0};
    EXPECT_DOUBLE_EQ(item_score(one), -0.5);
    EXPECT_DOUBLE_EQ(item_score(two, LengthCorrection::Mean), -2.0);
    EXPECT_DOUBLE_EQ(item_score(two, LengthCorrection::Sum), -4.0);
    EXPECT_THROW(item_score(std::vector<double>{}), InvalidArgument);
    EXPECT_THROW(item_score(std::vector<double>{0.1}), DomainError);
}

TEST(ItemScore, MeanAndSumAgreeAfterRescalingForEqualLengths) {
    Rng rng = make_rng(12, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 5);
        std::array<double, 3> mean{}, sum{};
        for (std::size_t k = 0; k < 3; ++k) {
            std::vector<double> lps(n);
            for (auto& lp : lps) lp = -5.0 * uniform01(rng);
            mean[k] = item_score(lps, LengthCorrection::Mean);
            sum[k] = item_score(lps, LengthCorrection::Sum);
        }
        const double alpha = 0.1 + 3.0 * uniform01(rng);
        expect_close(item_predictor(mean, {alpha, 0.0}), item_predictor(sum, {alpha / static_cast<double>(n), 0.0}),
                     1e-12);
    }
}

TEST(Lumping, LogMeanExpOfDistractors) {
    const auto a = lump_distractors(four("x", -1, -2, std::log(0.2), std::log(0.2)));
    EXPECT_NEAR(a[2], std::log(0.2), 1e-15);
    const auto b = lump_distractors(four("x", -1, -2, std::log(0.4), std::log(0.1)));
    EXPECT_NEAR(b[2], std::log(0.25), 1e-15);
    EXPECT_DOUBLE_EQ(b[0], -1);
    EXPECT_DOUBLE_EQ(b[1], -2);
    const auto c = lump_distractors(three("y", -1, -2, -3));
    EXPECT_EQ(c, (std::array<double, 3>{-1, -2, -3}));
    auto broken = three("z", -1, -2, -3);
    broken.options[1].category = ResponseCategory::Target;
    EXPECT_THROW(lump_distractors(broken), InvalidArgument);
}

TEST(ItemPredictor, Examples) {
    const auto p = item_predictor({0.0, -std::log(2.0), -20.0}, {1.0, 0.0});
    const double z = 1.0 + 0.5 + std::exp(-20.0);
    EXPECT_NEAR(p[0], 1.0 / z, 1e-15);
    EXPECT_NEAR(p[1], 0.5 / z, 1e-15);
    EXPECT_NEAR(p[2], 1.4e-9 * 1.0, 1e-10);
    expect_close(item_predictor({-3, -1, -7}, {0.0, 0.0}), Categorical3::uniform(), 1e-15);
    expect_close(item_predictor({-2, -2, -2}, {5.0, 0.4}), Categorical3::uniform(), 1e-15);
    EXPECT_THROW(item_predictor({0.0, kNegInf, 0.0}, {1.0, 0.0}), DomainError);
}

TEST(Wta, TiesSplitUniformly) {
    expect_close(wta_item_prediction({-1, -2, -3}), Categorical3({1, 0, 0}), 0);
    expect_close(wta_item_prediction({-1, -1, -3}), Categorical3({0.5, 0.5, 0}), 0);
    expect_close(wta_item_prediction({-1, -1, -1}), Categorical3::uniform(), 1e-15);
}

TEST(Wta, IsLimitOfSoftmax) {
    Rng rng = make_rng(13, 0);
    for (int trial = 0; trial < 200; ++trial) {
        std::array<double, 3> s{};
        for (auto& v : s) v = -6.0 * uniform01(rng);
        expect_close(item_predictor(s, {1e4, 0.0}), wta_item_prediction(s), 1e-6);
    }
}

TEST(Wta, PermutationEquivariant) {
    const std::array<double, 3> s{-2.0, -1.0, -1.0};
    const auto p = wta_item_prediction(s);
    const auto q = wta_item_prediction({s[2], s[0], s[1]});
    EXPECT_EQ(q[0], p[2]);
    EXPECT_EQ(q[1], p[0]);
    EXPECT_EQ(q[2], p[1]);
}

TEST(AvgScores, Examples) {
    const auto t = table_of({three("a", 0, -1, -9), three("b", -1, 0, -9)});
    const auto p = avg_scores_predictor(t, 1.0);
    const double z = 2 * std::exp(-0.5) + std::exp(-9.0);
    EXPECT_NEAR(p[0], std::exp(-0.5) / z, 1e-15);
    EXPECT_NEAR(p[0], 0.49995, 1e-5);
    EXPECT_NEAR(p[2], 1.017e-4, 1e-6);
    expect_close(avg_scores_predictor(t, 0.0), Categorical3::uniform(), 1e-15);
    EXPECT_THROW(avg_scores_predictor(ScoreTable{}, 1.0), InvalidArgument);
}

TEST(AvgProb, Examples) {
    const auto item = three("a", -0.3, -1.2, -4.0);
    const auto t = table_of({item, item, item});
    expect_close(avg_prob_predictor(t, 1.7), item_predictor(lump_distractors(item), {1.7, 0.0}), 1e-15);
    EXPECT_THROW(avg_prob_predictor(ScoreTable{}, 1.0), InvalidArgument);
}

TEST(AvgWta, Examples) {
    // frequencies <0.8, 0.2, 0>
    std::vector<ItemScores> items;
    for (int i = 0; i < 8; ++i) items.push_back(three("t" + std::to_string(i), 0, -1, -2));
    for (int i = 0; i < 2; ++i) items.push_back(three("c" + std::to_string(i), -1, 0, -2));
    const auto t = table_of(items);
    const auto p1 = avg_wta_predictor(t, 1.0);
    EXPECT_EQ(p1[0], wta_frequencies(t)[0]);
    EXPECT_EQ(p1[1], wta_frequencies(t)[1]);
    EXPECT_EQ(p1[2], 0.0);
    const auto p2 = avg_wta_predictor(t, 2.0);
    EXPECT_NEAR(p2[0], 0.64 / 0.68, 1e-15);
    EXPECT_NEAR(p2[1], 0.04 / 0.68, 1e-15);
    EXPECT_NEAR(p2[0], 0.9412, 1e-4);
    const auto degenerate = table_of({three("a", 0, -1, -2)});
    for (double a : {0.01, 1.0, 50.0, 1e4}) expect_close(avg_wta_predictor(degenerate, a), Categorical3({1, 0, 0}), 0);
    EXPECT_THROW(power_law({0, 0, 0}, 1.0), DomainError);
    // huge exponents stay finite
    const auto big = power_law({3, 1, 0}, 5000.0);
    EXPECT_EQ(big[0], 1.0);
}

TEST(Identities, SingleItemTablesCoincide) {
    Rng rng = make_rng(14, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto t = random_table(rng, 1, trial % 2 == 0);
        const double alpha = 0.05 + 6.0 * uniform01(rng);
        expect_close(avg_scores_predictor(t, alpha), avg_prob_predictor(t, alpha), 1e-9);
        expect_close(avg_wta_predictor(t, 1.0), item_wta(t.items[0]), 0);
    }
}

TEST(Identities, AvgWtaAtOneIsFrequencies) {
    Rng rng = make_rng(15, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto t = random_table(rng, 1 + static_cast<int>(uniform_index(rng, 30)), trial % 2 == 0);
        const auto p = avg_wta_predictor(t, 1.0);
        const auto f = wta_frequencies(t);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(p[k], f[k]);
    }
}

TEST(Identities, AvgProbAtLargeAlphaIsAvgWta) {
    Rng rng = make_rng(16, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto t = random_table(rng, 1 + static_cast<int>(uniform_index(rng, 30)), trial % 2 == 0);
        expect_close(avg_prob_predictor(t, 1e4), avg_wta_predictor(t, 1.0), 1e-6);
    }
}

TEST(Identities, ShiftInvariance) {
    Rng rng = make_rng(17, 0);
    for (int trial = 0; trial < 50; ++trial) {
        auto t = random_table(rng, 5, false);
        auto shifted = t;
        for (auto& item : shifted.items) {
            const double c = 10.0 * uniform01(rng) - 5.0;
            for (auto& o : item.options) o.score += c;
        }
        const double alpha = 0.3 + 2.0 * uniform01(rng);
        for (std::size_t i = 0; i < t.items.size(); ++i)
            expect_close(item_probabilities(t.items[i], alpha), item_probabilities(shifted.items[i], alpha), 1e-12);
        expect_close(avg_prob_predictor(t, alpha), avg_prob_predictor(shifted, alpha), 1e-12);
        expect_close(avg_wta_predictor(t, alpha), avg_wta_predictor(shifted, alpha), 1e-12);
        expect_close(avg_scores_predictor(t, alpha), avg_scores_predictor(shifted, alpha), 1e-12);
        EXPECT_NEAR(softmax_accuracy(t, alpha), softmax_accuracy(shifted, alpha), 1e-12);
        EXPECT_NEAR(wta_accuracy(t), wta_accuracy(shifted), 1e-12);
    }
}

TEST(LumpModes, SumProbabilities) {
    const auto item = four("p", std::log(0.5), std::log(0.3), std::log(0.1), std::log(0.1));
    const auto p = item_probabilities(item, 1.0, LumpMode::SumProbabilities);
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_NEAR(p[1], 0.3, 1e-15);
    EXPECT_NEAR(p[2], 0.2, 1e-15);
    const auto q = item_probabilities(item, 1.0, LumpMode::LogMeanExp);
    EXPECT_NEAR(q[2], 0.1 / 0.9, 1e-15);
    // WTA under sum mode looks at the four words separately
    const auto tie = four("w", -1.0, -2.0, -1.0, -5.0);
    expect_close(item_wta(tie, LumpMode::SumProbabilities), Categorical3({0.5, 0.0, 0.5}), 0);
    EXPECT_EQ(lump_mode_from_string("sum"), LumpMode::SumProbabilities);
    EXPECT_EQ(lump_mode_from_string(to_string(LumpMode::LogMeanExp)), LumpMode::LogMeanExp);
}

TEST(Accuracy, TwoOptionExample) {
    std::vector<OptionScores> items;
    for (int i = 0; i < 8; ++i) items.push_back({0.0, -1e-9});
    for (int i = 0; i < 2; ++i) items.push_back({-1000.0, 0.0});
    EXPECT_EQ(wta_accuracy(items), 0.8);
    EXPECT_NEAR(softmax_accuracy(items, 1.0), 0.4, 1e-3);
    EXPECT_DOUBLE_EQ(softmax_accuracy(items, 0.0), 0.5);
    std::vector<OptionScores> all_target(5, OptionScores{0.0, -1.0, -2.0});
    EXPECT_EQ(wta_accuracy(all_target), 1.0);
}

TEST(Accuracy, LargeAlphaMatchesWta) {
    Rng rng = make_rng(18, 0);
    std::vector<OptionScores> items;
    for (int i = 0; i < 40; ++i) {
        OptionScores s(2 + uniform_index(rng, 3));
        for (auto& v : s) v = -5.0 * uniform01(rng);
        items.push_back(s);
    }
    EXPECT_NEAR(softmax_accuracy(items, 1e4), wta_accuracy(items), 1e-6);
    const auto t = random_table(rng, 20, true);
    EXPECT_NEAR(softmax_accuracy(t, 1e4), wta_accuracy(t), 1e-6);
}

TEST(Multiset, WithMultiplicities) {
    const auto t = table_of({three("a", 0, -1, -2), three("b", -1, 0, -2)});
    const auto m = with_multiplicities(t, {{"a", 3}, {"b", 1}});
    ASSERT_EQ(m.items.size(), 4u);
    EXPECT_NEAR(wta_frequencies(m)[0], 0.75, 1e-15);
    EXPECT_THROW(with_multiplicities(t, {{"zzz", 1}}), InvalidArgument);
    const auto only_a = with_multiplicities(t, {{"a", 2}});
    EXPECT_EQ(only_a.items.size(), 2u);
}

TEST(ScoresCsv, RoundTripAndErrors) {
    Rng rng = make_rng(19, 0);
    auto t = random_table(rng, 6, true);
    std::ostringstream out;
    write_scores_csv(out, t);
    std::istringstream in(out.str());
    const auto back = read_scores_csv(in, Condition::Production);
    ASSERT_EQ(back.items.size(), t.items.size());
    for (std::size_t i = 0; i < t.items.size(); ++i)
        for (std::size_t o = 0; o < 4; ++o) {
            EXPECT_EQ(back.items[i].options[o].score, t.items[i].options[o].score);
            EXPECT_EQ(back.items[i].options[o].category, t.items[i].options[o].category);
        }
    std::istringstream other(out.str());
    EXPECT_TRUE(read_scores_csv(other, Condition::Interpretation).empty());

    std::istringstream bad("item_id,condition,category,option_text,score,n_tokens\n"
                           "a,production,target,x,-1,1\n"
                           "a,production,competitor,y,abc,1\n");
    try {
        read_scores_csv(bad, Condition::Production);
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    std::istringstream missing("item_id,condition,category,option_text,score,n_tokens\n"
                               "a,production,target,x,-1,1\n");
    EXPECT_THROW(read_scores_csv(missing, Condition::Production), InvalidArgument);
}

TEST(ScoresCsv, Sidecar) {
    auto t = table_of({three("a", -1, -1, -1)});
    attach_token_logprobs(t, nlohmann::json::array({{{"item_id", "a"}, {"option_text", "t"}, {"token_logprobs", {-1.0, -3.0}}}}));
    EXPECT_DOUBLE_EQ(t.items[0].options[0].score, -2.0);
    EXPECT_EQ(t.items[0].options[0].n_tokens, 2);
    EXPECT_THROW(attach_token_logprobs(t, nlohmann::json::array({{{"item_id", "a"}, {"option_text", "zz"},
                                                                  {"token_logprobs", {-1.0}}}})),
                 InvalidArgument);
}
