#pragma once

/// Run configuration: one JSON document, every field optional, command-line
/// flags layered on top.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "inference.hpp"
#include "llm_predictors.hpp"
#include "scoring_client.hpp"

namespace pragcheck::config {

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

/// One requested table row family: model x level x aggregation over conditions.
struct FitRequest {
    std::string model = "rsa";       // rsa | llm
    std::string level = "condition"; // condition | item
    std::string aggregation;         // scores | prob | wta (llm, condition level)
    std::vector<Condition> conditions = {Condition::Production, Condition::Interpretation};

    inference::Predictor predictor() const {
        if (model == "rsa") {
            if (!aggregation.empty()) throw ConfigError("aggregation applies to llm fits only");
            return inference::Predictor::Rsa;
        }
        if (model != "llm") throw ConfigError("unknown model '" + model + "' (rsa or llm)");
        if (level == "item") {
            if (!aggregation.empty()) throw ConfigError("item-level llm fits take no aggregation");
            return inference::Predictor::LlmItem;
        }
        if (aggregation == "scores") return inference::Predictor::LlmAvgScores;
        if (aggregation == "prob") return inference::Predictor::LlmAvgProb;
        if (aggregation == "wta") return inference::Predictor::LlmAvgWta;
        throw ConfigError("condition-level llm fits need an aggregation (scores, prob or wta)");
    }
    inference::DataLevel data_level() const { return inference::data_level_from_string(level); }
};

inline std::vector<Condition> conditions_from_string(std::string_view s) {
    if (s == "both") return {Condition::Production, Condition::Interpretation};
    return {condition_from_string(s)};
}

struct RunConfig {
    std::uint64_t seed = 20240101;
    inference::McmcConfig mcmc;
    llm::LengthCorrection length_correction = llm::LengthCorrection::Mean;
    llm::LumpMode lump_mode = llm::LumpMode::LogMeanExp;
    /// Name shown in the model column for LLM fits.
    std::string llm_label = "LLM";

    // gen-items: when count > 0 items are generated instead of read
    int generate_count = 0;
    std::uint64_t generate_seed = 1;

    std::string items_path;
    std::string trials_path;
    std::string scores_production_path;
    std::string scores_interpretation_path;
    std::string templates_path;
    std::string output_dir = "out";

    scoring::ScoringConfig scoring;

    std::vector<FitRequest> fits;

    std::string scores_path(Condition c) const {
        return c == Condition::Production ? scores_production_path : scores_interpretation_path;
    }
};

inline nlohmann::json to_json(const FitRequest& f) {
    nlohmann::json conds = nlohmann::json::array();
    for (auto c : f.conditions) conds.push_back(to_string(c));
    nlohmann::json j = {{"model", f.model}, {"level", f.level}, {"conditions", conds}};
    if (!f.aggregation.empty()) j["aggregation"] = f.aggregation;
    return j;
}

inline FitRequest fit_request_from_json(const nlohmann::json& j) {
    FitRequest f;
    if (j.contains("model")) j.at("model").get_to(f.model);
    if (j.contains("level")) j.at("level").get_to(f.level);
    if (j.contains("aggregation")) j.at("aggregation").get_to(f.aggregation);
    if (j.contains("condition")) f.conditions = conditions_from_string(j.at("condition").get<std::string>());
    if (j.contains("conditions")) {
        f.conditions.clear();
        for (const auto& c : j.at("conditions")) f.conditions.push_back(condition_from_string(c.get<std::string>()));
    }
    f.predictor(); // validates the combination
    return f;
}

/// Canonical form; also the input of the configuration hash. Secrets are left out.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : c.fits) fits.push_back(to_json(f));
    return {{"seed", c.seed},
            {"mcmc",
             {{"chains", c.mcmc.chains},
              {"warmup", c.mcmc.warmup},
              {"draws", c.mcmc.draws},
              {"target_acceptance", c.mcmc.target_acceptance}}},
            {"length_correction", llm::to_string(c.length_correction)},
            {"lump_mode", llm::to_string(c.lump_mode)},
            {"llm_label", c.llm_label},
            {"generate", {{"count", c.generate_count}, {"seed", c.generate_seed}}},
            {"paths",
             {{"items", c.items_path},
              {"trials", c.trials_path},
              {"scores_production", c.scores_production_path},
              {"scores_interpretation", c.scores_interpretation_path},
              {"templates", c.templates_path},
              {"output_dir", c.output_dir}}},
            {"scoring",
             {{"base_url", c.scoring.base_url},
              {"model_name", c.scoring.model_name},
              {"max_concurrent_requests", c.scoring.max_concurrent_requests},
              {"cache", c.scoring.cache_path}}},
            {"fits", fits}};
}

namespace detail {
template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(out);
}
} // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        detail::get_if(j, "seed", c.seed);
        if (j.contains("mcmc")) {
            const auto& m = j.at("mcmc");
            detail::get_if(m, "chains", c.mcmc.chains);
            detail::get_if(m, "warmup", c.mcmc.warmup);
            detail::get_if(m, "draws", c.mcmc.draws);
            detail::get_if(m, "target_acceptance", c.mcmc.target_acceptance);
        }
        if (j.contains("length_correction"))
            c.length_correction = llm::length_correction_from_string(j.at("length_correction").get<std::string>());
        if (j.contains("lump_mode")) c.lump_mode = llm::lump_mode_from_string(j.at("lump_mode").get<std::string>());
        detail::get_if(j, "llm_label", c.llm_label);
        if (j.contains("generate")) {
            detail::get_if(j.at("generate"), "count", c.generate_count);
            detail::get_if(j.at("generate"), "seed", c.generate_seed);
        }
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            detail::get_if(p, "items", c.items_path);
            detail::get_if(p, "trials", c.trials_path);
            detail::get_if(p, "scores_production", c.scores_production_path);
            detail::get_if(p, "scores_interpretation", c.scores_interpretation_path);
            detail::get_if(p, "templates", c.templates_path);
            detail::get_if(p, "output_dir", c.output_dir);
        }
        if (j.contains("scoring")) {
            const auto& s = j.at("scoring");
            detail::get_if(s, "base_url", c.scoring.base_url);
            detail::get_if(s, "model_name", c.scoring.model_name);
            detail::get_if(s, "max_concurrent_requests", c.scoring.max_concurrent_requests);
            detail::get_if(s, "cache", c.scoring.cache_path);
        }
        if (j.contains("fits"))
            for (const auto& f : j.at("fits")) c.fits.push_back(fit_request_from_json(f));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.mcmc.seed = c.seed;
    c.mcmc.check();
    return c;
}

inline RunConfig read_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
        return run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

/// Paths inside a config file are taken relative to the file's directory.
inline void resolve_relative_paths(RunConfig& c, const std::string& config_path) {
    const auto base = std::filesystem::path(config_path).parent_path();
    auto fix = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    for (auto* p : {&c.items_path, &c.trials_path, &c.scores_production_path, &c.scores_interpretation_path,
                    &c.templates_path, &c.scoring.cache_path})
        fix(*p);
}

inline std::string config_hash(const RunConfig& c) { return scoring::sha256_hex(to_json(c).dump()); }

inline refgame::PromptTemplates read_templates(const std::string& path) {
    refgame::PromptTemplates t;
    if (path.empty()) return t;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open templates file '" + path + "'");
    const auto j = nlohmann::json::parse(in);
    detail::get_if(j, "production", t.production);
    detail::get_if(j, "interpretation", t.interpretation);
    return t;
}

} // namespace pragcheck::config
