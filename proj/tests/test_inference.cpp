#include <gtest/gtest.h>

#include <algorithm>

#include <pragcheck/inference.hpp>

using namespace pragcheck;
using namespace pragcheck::inference;

namespace {

double log_factorial(int n) { return std::lgamma(n + 1.0); }

llm::ItemScores three(const std::string& id, double t, double c, double d) {
    return {id,
            {{ResponseCategory::Target, "t", {}, t, 1},
             {ResponseCategory::Competitor, "c", {}, c, 1},
             {ResponseCategory::Distractor, "d", {}, d, 1}}};
}

ModelSpec rsa_spec(Condition c, DataLevel l = DataLevel::Condition) {
    ModelSpec s;
    s.predictor = Predictor::Rsa;
    s.condition = c;
    s.level = l;
    return s;
}

ModelSpec llm_spec(Predictor p, DataLevel l) {
    ModelSpec s;
    s.predictor = p;
    s.condition = Condition::Interpretation;
    s.level = l;
    s.scores.condition = Condition::Interpretation;
    s.scores.items = {three("a", -0.5, -1.5, -4.0), three("b", -1.2, -0.4, -3.0), three("c", -0.2, -2.0, -2.5)};
    return s;
}

McmcConfig small_mcmc(std::uint64_t seed = 5) {
    McmcConfig c;
    c.warmup = 500;
    c.draws = 1000;
    c.seed = seed;
    return c;
}

} // namespace

TEST(Prior, Examples) {
    // LogNormal(1,1) at alpha = e: 1/(e sqrt(2 pi)); Beta(1,15) at 0: 15
    EXPECT_NEAR(log_prior({std::exp(1.0), 0.0}), -1.0 - 0.5 * std::log(2 * M_PI) + std::log(15.0), 1e-12);
    EXPECT_NEAR(log_prior({1.0, 0.5}), -0.5 * std::log(2 * M_PI) - 0.5 + std::log(15.0) + 14 * std::log(0.5), 1e-12);
    EXPECT_EQ(log_prior({0.0, 0.1}), kNegInf);
    EXPECT_EQ(log_prior({-1.0, 0.1}), kNegInf);
    EXPECT_EQ(log_prior({1.0, 1.0}), kNegInf);
    EXPECT_EQ(log_prior({1.0, -0.1}), kNegInf);
}

TEST(Likelihood, ConditionExamples) {
    const Categorical3 p({0.5, 0.3, 0.2});
    const double want = log_factorial(6) - log_factorial(3) - log_factorial(2) - log_factorial(1) + 3 * std::log(0.5) +
                        2 * std::log(0.3) + std::log(0.2);
    EXPECT_NEAR(condition_loglik({3, 2, 1}, p), want, 1e-12);
    EXPECT_NEAR(condition_loglik({3, 2, 1}, p, false), 3 * std::log(0.5) + 2 * std::log(0.3) + std::log(0.2), 1e-12);
    EXPECT_EQ(condition_loglik({0, 0, 0}, p), 0.0);
    EXPECT_EQ(condition_loglik({1, 0, 2}, Categorical3({1.0, 0.0, 0.0})), kNegInf);
    EXPECT_EQ(condition_loglik({4, 0, 0}, Categorical3({1.0, 0.0, 0.0})), 0.0);
}

TEST(Likelihood, ItemLevel) {
    CountData d{Condition::Production, DataLevel::Item, {"x", "y"}, {{2, 1, 0}, {0, 1, 1}}};
    const Categorical3 px({0.6, 0.3, 0.1}), py({0.2, 0.5, 0.3});
    const double hand = std::log(3.0 * 0.6 * 0.6 * 0.3) + std::log(2.0 * 0.5 * 0.3);
    EXPECT_NEAR(item_loglik(d, {{"x", px}, {"y", py}}), hand, 1e-12);
    EXPECT_THROW(item_loglik(d, {{"x", px}}), InvalidArgument);

    CountData one{Condition::Production, DataLevel::Item, {"x"}, {{4, 2, 1}}};
    EXPECT_NEAR(item_loglik(one, {{"x", px}}), condition_loglik({4, 2, 1}, px), 1e-15);

    // RSA at item level with identical rows: m times the single-row value
    CountData many{Condition::Production, DataLevel::Item, {"a", "b", "c", "d"}, std::vector<CategoryCounts>(4, {5, 2, 1})};
    const Model m(rsa_spec(Condition::Production, DataLevel::Item), many);
    const Model single(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {5, 2, 1}));
    EXPECT_NEAR(m.loglik({2.0, 0.1}), 4 * single.loglik({2.0, 0.1}), 1e-10);
}

TEST(Model, RsaMatchesHandPrediction) {
    const Model m(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {10, 5, 1}));
    const auto p = m.predict({1.0, 0.12})[0];
    EXPECT_NEAR(p[0], 0.88 * 2.0 / 3.0 + 0.04, 1e-12);
    EXPECT_NEAR(m.loglik({1.0, 0.12}), condition_loglik({10, 5, 1}, p), 1e-15);
}

TEST(Model, LevelValidation) {
    const auto item_data = CountData{Condition::Interpretation, DataLevel::Item, {"a", "b"}, {{3, 1, 0}, {2, 2, 0}}};
    const auto cond_data = CountData::pooled(Condition::Interpretation, {5, 3, 0});
    EXPECT_NO_THROW(Model(llm_spec(Predictor::LlmItem, DataLevel::Item), item_data));
    EXPECT_THROW(Model(llm_spec(Predictor::LlmItem, DataLevel::Condition), cond_data), InvalidArgument);
    EXPECT_THROW(Model(llm_spec(Predictor::LlmAvgProb, DataLevel::Item), item_data), InvalidArgument);
    EXPECT_THROW(Model(llm_spec(Predictor::LlmAvgProb, DataLevel::Condition), item_data), InvalidArgument);
    EXPECT_THROW(Model(rsa_spec(Condition::Production), cond_data), InvalidArgument);

    auto missing = item_data;
    missing.item_ids[1] = "zzz";
    EXPECT_THROW(Model(llm_spec(Predictor::LlmItem, DataLevel::Item), missing), InvalidArgument);

    auto incomplete = llm_spec(Predictor::LlmAvgScores, DataLevel::Condition);
    incomplete.scores.complete = false;
    EXPECT_THROW(Model(incomplete, cond_data), InvalidArgument);
}

TEST(Model, AggregatePredictorsMatchLibraryFunctions) {
    const auto cond = CountData::pooled(Condition::Interpretation, {5, 3, 1});
    const auto spec = llm_spec(Predictor::LlmAvgScores, DataLevel::Condition);
    for (double alpha : {0.3, 1.0, 4.0}) {
        const PredictorParams p{alpha, 0.05};
        auto s = spec;
        const auto a = Model(s, cond).predict(p)[0];
        EXPECT_NEAR(a[0], llm::avg_scores_predictor(spec.scores, alpha).mixed(0.05)[0], 1e-12);
        s.predictor = Predictor::LlmAvgProb;
        const auto b = Model(s, cond).predict(p)[0];
        EXPECT_NEAR(b[1], llm::avg_prob_predictor(spec.scores, alpha).mixed(0.05)[1], 1e-12);
        s.predictor = Predictor::LlmAvgWta;
        const auto c = Model(s, cond).predict(p)[0];
        EXPECT_NEAR(c[0], llm::avg_wta_predictor(spec.scores, alpha).mixed(0.05)[0], 1e-12);
    }
}

TEST(Model, DuplicateItemsWeightTheAverage) {
    auto spec = llm_spec(Predictor::LlmAvgProb, DataLevel::Condition);
    const auto base = spec.scores;
    spec.scores = llm::with_multiplicities(base, {{"a", 3}, {"b", 1}, {"c", 2}});
    const Model m(spec, CountData::pooled(Condition::Interpretation, {5, 3, 1}));
    const auto want = llm::avg_prob_predictor(spec.scores, 1.3);
    const auto got = m.predict({1.3, 0.0})[0];
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
}

TEST(Sampler, DeterministicUnderSeed) {
    const Model m(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {180, 90, 30}));
    const auto a = sample_posterior(m, small_mcmc(7));
    const auto b = sample_posterior(m, small_mcmc(7));
    EXPECT_EQ(a.chains, b.chains);
    auto serial = small_mcmc(7);
    serial.parallel = false;
    EXPECT_EQ(sample_posterior(m, serial).chains, a.chains);
    const auto c = sample_posterior(m, small_mcmc(8));
    EXPECT_NE(a.chains, c.chains);
    ASSERT_EQ(a.n_chains(), 4u);
    EXPECT_EQ(a.kept(), 1000u);
    for (double acc : a.acceptance) {
        EXPECT_GT(acc, 0.1);
        EXPECT_LT(acc, 0.7);
    }
}

TEST(Sampler, AgreesWithGrid) {
    Rng rng = make_rng(31, 0);
    const Model shape(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {200, 200, 200}));
    const auto data = simulate(shape, {3.0, 0.12}, rng);
    const Model m(rsa_spec(Condition::Production), data);
    const auto mc = summarize(sample_posterior(m));
    const auto grid = grid_posterior(m);
    EXPECT_NEAR(mc.alpha.mean / grid.alpha.mean, 1.0, 0.02);
    EXPECT_NEAR(mc.epsilon.mean, grid.epsilon.mean, 0.02);
    EXPECT_LT(*mc.alpha.rhat, 1.01);
    EXPECT_LT(*mc.epsilon.rhat, 1.01);
}

TEST(Sampler, IntervalsCoverGeneratingValue) {
    const Model shape(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {200, 200, 200}));
    GridConfig g;
    g.n_log_alpha = g.n_logit_epsilon = 200;
    int covered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = make_rng(32, seed);
        const auto s = grid_posterior(Model(rsa_spec(Condition::Production), simulate(shape, {3.0, 0.12}, rng)), g);
        covered += s.alpha.lo < 3.0 && 3.0 < s.alpha.hi;
    }
    EXPECT_GE(covered, 16);
}

TEST(Sampler, EpsilonOnlyData) {
    // uniform counts: epsilon is pulled towards 1 relative to the Beta(1,15) prior
    const Model m(rsa_spec(Condition::Interpretation), CountData::pooled(Condition::Interpretation, {200, 200, 200}));
    const auto grid = grid_posterior(m);
    EXPECT_GT(grid.epsilon.mean, 0.75);
    EXPECT_GT(grid.epsilon.lo, 0.5);
    const auto mc = summarize(sample_posterior(m, small_mcmc()));
    EXPECT_NEAR(mc.epsilon.mean, grid.epsilon.mean, 0.02);
}

TEST(Sampler, InitializationFailure) {
    // impossible counts under every parameter: nothing is ever finite
    ModelSpec s = llm_spec(Predictor::LlmItem, DataLevel::Item);
    CountData d{Condition::Interpretation, DataLevel::Item, {"a"}, {{1, 1, 1}}};
    const Model m(s, d);
    EXPECT_NO_THROW(sample_posterior(m, small_mcmc()));
    McmcConfig bad = small_mcmc();
    bad.chains = 1;
    EXPECT_THROW(sample_posterior(m, bad), InvalidArgument);
}

TEST(Grid, PriorOnly) {
    const Model m(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {0, 0, 0}));
    const auto g = grid_posterior(m);
    EXPECT_NEAR(g.alpha.mean / std::exp(1.5), 1.0, 0.01);
    EXPECT_NEAR(g.epsilon.mean / 0.0625, 1.0, 0.005);
    // LogNormal(1,1) quantiles: exp(1 -/+ 1.959964)
    EXPECT_NEAR(g.alpha.lo, std::exp(1.0 - 1.959964), 0.01);
    EXPECT_NEAR(g.alpha.hi / std::exp(1.0 + 1.959964), 1.0, 0.01);
    // Beta(1,15): 1 - (1-q)^(1/15)
    EXPECT_NEAR(g.epsilon.hi, 1.0 - std::pow(0.025, 1.0 / 15.0), 1e-3);
}

TEST(Grid, UnderflowAsksForWiderGrid) {
    const Model m(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {0, 0, 50}));
    GridConfig g;
    g.n_log_alpha = g.n_logit_epsilon = 20;
    g.logit_epsilon_lo = -900.0;
    g.logit_epsilon_hi = -800.0;
    EXPECT_THROW(grid_posterior(m, g), DomainError);
}

TEST(Rhat, ConstantChains) {
    const std::vector<std::vector<double>> c(4, std::vector<double>(200, 1.5));
    const auto r = split_rhat(c);
    EXPECT_EQ(r.value, 1.0);
    EXPECT_TRUE(r.zero_variance);
}

TEST(Rhat, WellMixedAndOffset) {
    Rng rng = make_rng(3, 3);
    std::vector<std::vector<double>> mixed(4);
    for (auto& c : mixed)
        for (int i = 0; i < 2000; ++i) c.push_back(standard_normal(rng));
    EXPECT_LT(split_rhat(mixed).value, 1.01);
    std::vector<std::vector<double>> apart(2);
    for (int i = 0; i < 500; ++i) {
        apart[0].push_back(standard_normal(rng));
        apart[1].push_back(5.0 + standard_normal(rng));
    }
    EXPECT_GT(split_rhat(apart).value, 1.5);
    EXPECT_THROW(split_rhat({mixed[0]}), InvalidArgument);
    EXPECT_THROW(split_rhat({std::vector<double>(99, 0.0), std::vector<double>(99, 1.0)}), InvalidArgument);
}

TEST(Summary, Examples) {
    const auto s = summarize_values({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.lo, 1.075);
    EXPECT_DOUBLE_EQ(s.hi, 3.925);
    EXPECT_THROW(summarize_values({}), InvalidArgument);
    // short chains: no R-hat
    PosteriorChains pc;
    pc.chains = {{{1, 0.1}, {2, 0.2}}, {{3, 0.3}, {4, 0.4}}};
    const auto sum = summarize(pc);
    EXPECT_FALSE(sum.alpha.rhat.has_value());
    EXPECT_DOUBLE_EQ(sum.alpha.mean, 2.5);
}

TEST(Summary, QuantilesMatchSortOracle) {
    Rng rng = make_rng(4, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> xs(1 + uniform_index(rng, 300));
        for (auto& x : xs) x = standard_normal(rng);
        auto sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        const auto oracle = [&](double q) {
            const double h = (static_cast<double>(sorted.size()) - 1) * q;
            const auto lo = static_cast<std::size_t>(std::floor(h));
            const auto hi = std::min(lo + 1, sorted.size() - 1);
            return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
        };
        const auto s = summarize_values(xs);
        EXPECT_NEAR(s.lo, oracle(0.025), 1e-12);
        EXPECT_NEAR(s.hi, oracle(0.975), 1e-12);
    }
}

TEST(Summary, InvariantUnderChainRelabeling) {
    const Model m(rsa_spec(Condition::Interpretation), CountData::pooled(Condition::Interpretation, {60, 35, 5}));
    auto pc = sample_posterior(m, small_mcmc(11));
    const auto before = summarize(pc);
    std::reverse(pc.chains.begin(), pc.chains.end());
    const auto after = summarize(pc);
    EXPECT_DOUBLE_EQ(before.alpha.lo, after.alpha.lo);
    EXPECT_DOUBLE_EQ(before.epsilon.hi, after.epsilon.hi);
    EXPECT_NEAR(before.alpha.mean, after.alpha.mean, 1e-12);
    EXPECT_NEAR(*before.alpha.rhat, *after.alpha.rhat, 1e-12);
}

TEST(Factorization, ConditionsAreIndependent) {
    // a joint target over two condition-specific parameter pairs is the sum of
    // the two separate targets, so each marginal equals its separate posterior
    const Model prd(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {250, 35, 3}));
    const Model itp(rsa_spec(Condition::Interpretation), CountData::pooled(Condition::Interpretation, {200, 80, 8}));
    const auto alone = sample_posterior(prd, small_mcmc(21));
    const auto again = sample_posterior(prd, small_mcmc(21));
    (void)sample_posterior(itp, small_mcmc(22));
    EXPECT_EQ(alone.chains, again.chains);
    Rng rng = make_rng(9, 0);
    for (int i = 0; i < 100; ++i) {
        const double a1 = standard_normal(rng), e1 = standard_normal(rng) - 2;
        const double a2 = standard_normal(rng), e2 = standard_normal(rng) - 2;
        const double joint = prd.log_target(a1, e1) + itp.log_target(a2, e2);
        const double shifted = prd.log_target(a1, e1) + itp.log_target(a2 + 0.1, e2);
        // changing the interpretation parameters never moves the production term
        EXPECT_NEAR(joint - itp.log_target(a2, e2), shifted - itp.log_target(a2 + 0.1, e2), 1e-12);
    }
}

TEST(Simulation, PreservesShape) {
    const CountData d{Condition::Interpretation, DataLevel::Item, {"a", "b", "c"}, {{3, 1, 0}, {0, 0, 7}, {2, 2, 2}}};
    const Model m(llm_spec(Predictor::LlmItem, DataLevel::Item), d);
    Rng rng = make_rng(1, 1);
    for (int i = 0; i < 50; ++i) {
        const auto s = simulate(m, {1.5, 0.2}, rng);
        ASSERT_EQ(s.counts.size(), 3u);
        EXPECT_EQ(s.item_ids, d.item_ids);
        for (std::size_t r = 0; r < 3; ++r)
            EXPECT_EQ(s.counts[r][0] + s.counts[r][1] + s.counts[r][2], d.counts[r][0] + d.counts[r][1] + d.counts[r][2]);
    }
}

TEST(Json, DrawsRoundTrip) {
    const Model m(rsa_spec(Condition::Production), CountData::pooled(Condition::Production, {30, 10, 2}));
    McmcConfig c = small_mcmc(2);
    c.draws = 120;
    const auto pc = sample_posterior(m, c);
    const auto back = draws_from_json(nlohmann::json::parse(draws_to_json(pc).dump()));
    EXPECT_EQ(back.chains, pc.chains);
    EXPECT_EQ(back.config.seed, pc.config.seed);
    EXPECT_EQ(back.config.warmup, pc.config.warmup);
    const auto s = summarize(pc).alpha;
    const auto j = to_json(s);
    const auto r = param_summary_from_json(j);
    EXPECT_EQ(r.mean, s.mean);
    EXPECT_EQ(r.rhat, s.rhat);
    EXPECT_TRUE(to_json(ParamSummary{}).at("rhat").is_null());
}

TEST(Names, RoundTrip) {
    for (auto p : {Predictor::Rsa, Predictor::LlmItem, Predictor::LlmAvgScores, Predictor::LlmAvgProb,
                   Predictor::LlmAvgWta})
        EXPECT_EQ(predictor_from_string(to_string(p)), p);
    EXPECT_EQ(data_level_from_string("cond."), DataLevel::Condition);
    EXPECT_EQ(data_level_from_string("item"), DataLevel::Item);
    EXPECT_EQ(method_label(Predictor::LlmAvgWta), "avg. WTA");
    EXPECT_THROW(predictor_from_string("gpt"), InvalidArgument);
}
