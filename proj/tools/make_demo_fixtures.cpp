// Writes the bundled offline demo: items, a warm score cache produced by the
// local fake completions server, synthetic trials and a run configuration.
//
// usage: make_demo_fixtures [output-dir]   (default data/demo)

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include <pragcheck/pipeline.hpp>
#include <pragcheck/testing/fake_completions.hpp>

namespace fs = std::filesystem;
using namespace pragcheck;

namespace {

constexpr int kItemsPerCondition = 12;
constexpr int kParticipants = 36;
constexpr int kTrialsPerCondition = 8; // per participant

// Choice proportions (target, competitor, distractor) of the synthetic participants.
const std::array<double, 3> kProduction{0.86, 0.11, 0.03};
const std::array<double, 3> kInterpretation{0.62, 0.33, 0.05};

std::string option_for(const refgame::Item& item, ResponseCategory cat, Rng& rng) {
    const auto opts = refgame::option_texts(item);
    std::vector<std::size_t> matches;
    for (std::size_t o = 0; o < opts.size(); ++o)
        if (item.categories[o] == cat) matches.push_back(o);
    return opts[matches[uniform_index(rng, matches.size())]];
}

} // namespace

int main(int argc, char** argv) {
    const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("data/demo");
    fs::create_directories(dir);
    const auto items = pipeline::generate_items(kItemsPerCondition, 2024);
    pipeline::write_json(dir / "items.json", pipeline::items_to_json(items, {}));

    const auto cache = dir / "scores-cache.jsonl";
    fs::remove(cache);
    {
        testing::FakeCompletionsServer server;
        server.start();
        scoring::ScoringConfig sc;
        sc.base_url = server.base_url();
        sc.model_name = "fake-completions";
        sc.cache_path = cache.string();
        scoring::Scorer scorer(sc);
        for (auto c : {Condition::Production, Condition::Interpretation})
            scorer.score_item_set(pipeline::of_condition(items, c));
        std::cout << "scored " << scorer.network_calls() << " options\n";
        server.stop();
    }
    // stable file content regardless of completion order
    {
        std::ifstream in(cache);
        std::vector<nlohmann::json> lines;
        for (std::string line; std::getline(in, line);) {
            auto j = nlohmann::json::parse(line);
            j["timestamp"] = "2024-01-01T00:00:00Z";
            lines.push_back(j);
        }
        std::sort(lines.begin(), lines.end(),
                  [](const auto& a, const auto& b) { return a.at("key").template get<std::string>() < b.at("key").template get<std::string>(); });
        std::ofstream out(cache, std::ios::trunc);
        for (const auto& j : lines) out << j.dump() << "\n";
    }

    Rng rng = make_rng(2024, 1);
    std::ofstream trials(dir / "trials.csv");
    csv::write_row(trials, {"participant_id", "item_id", "condition", "chosen_option"});
    for (int p = 0; p < kParticipants; ++p)
        for (auto c : {Condition::Production, Condition::Interpretation}) {
            const auto pool = pipeline::of_condition(items, c);
            const auto& probs = c == Condition::Production ? kProduction : kInterpretation;
            for (int t = 0; t < kTrialsPerCondition; ++t) {
                const auto& item = pool[uniform_index(rng, pool.size())];
                const auto k = sample_multinomial(rng, 1, probs);
                const auto cat = k[0] ? ResponseCategory::Target
                                      : (k[1] ? ResponseCategory::Competitor : ResponseCategory::Distractor);
                csv::write_row(trials, {"p" + std::to_string(p + 1), item.id, to_string(c), option_for(item, cat, rng)});
            }
        }

    const nlohmann::json cfg = {
        {"seed", 20240101},
        {"mcmc", {{"chains", 4}, {"warmup", 1000}, {"draws", 2000}}},
        {"llm_label", "fake-LM"},
        {"paths", {{"items", "items.json"}, {"trials", "trials.csv"}, {"output_dir", "out"}}},
        {"scoring", {{"model_name", "fake-completions"}, {"cache", "scores-cache.jsonl"}}},
        {"fits",
         {{{"model", "rsa"}, {"level", "condition"}},
          {{"model", "llm"}, {"level", "item"}},
          {{"model", "llm"}, {"level", "condition"}, {"aggregation", "scores"}},
          {{"model", "llm"}, {"level", "condition"}, {"aggregation", "prob"}},
          {{"model", "llm"}, {"level", "condition"}, {"aggregation", "wta"}}}}};
    pipeline::write_json(dir / "config.json", cfg);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}
