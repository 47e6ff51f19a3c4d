#pragma once

/// End-to-end runs: items -> prompts -> scores -> counts -> fits -> checks -> report.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "criticism.hpp"
#include "inference.hpp"
#include "ingest.hpp"
#include "llm_predictors.hpp"
#include "refgame.hpp"
#include "scoring_client.hpp"

namespace pragcheck::pipeline {

namespace fs = std::filesystem;

struct PipelineError : Error {
    PipelineError(const std::string& stage, const std::string& cause)
        : Error("pipeline_error", "stage '" + stage + "': " + cause), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// First 64 bits of a SHA-256 digest; stable across platforms.
inline std::uint64_t stable_hash(const std::string& s) { return std::stoull(scoring::sha256_hex(s).substr(0, 16), nullptr, 16); }

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write '" + path.string() + "'");
    out << text;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Items and prompts

/// `count` items per condition; ids stay unique because they embed the seed.
inline std::vector<refgame::Item> generate_items(int count, std::uint64_t seed) {
    std::vector<refgame::Item> items;
    for (auto c : {Condition::Production, Condition::Interpretation})
        for (int i = 0; i < count; ++i)
            items.push_back(refgame::generate_item(derive_seed(seed, static_cast<std::uint64_t>(i)) % 1000000007ULL, c));
    return items;
}

inline nlohmann::json items_to_json(const std::vector<refgame::Item>& items, const refgame::PromptTemplates& t) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& it : items) j.push_back(refgame::item_to_json(it, true, t));
    return j;
}

inline void render_prompts(const std::vector<refgame::Item>& items, const refgame::PromptTemplates& t,
                           const fs::path& dir) {
    for (const auto& it : items) write_text(dir / (it.id + ".txt"), refgame::render_prompt(it, t));
}

inline std::vector<refgame::Item> of_condition(const std::vector<refgame::Item>& items, Condition c) {
    std::vector<refgame::Item> out;
    for (const auto& it : items)
        if (it.condition == c) out.push_back(it);
    return out;
}

// ---------------------------------------------------------------------------
// Fitting

struct FitInputs {
    inference::ModelSpec spec;
    inference::CountData data;
};

/// Binds a request to counts and (for LLM fits) a score table. Aggregate
/// LLM predictors average over the items as often as participants saw them.
inline FitInputs bind_fit(const config::FitRequest& req, Condition c, const ingest::IngestResult& counts,
                          const llm::ScoreTable* scores, const config::RunConfig& cfg) {
    if (!counts.has(c)) throw InvalidArgument("no trials for condition " + to_string(c));
    FitInputs in;
    in.spec.predictor = req.predictor();
    in.spec.condition = c;
    in.spec.level = req.data_level();
    in.spec.lump = cfg.lump_mode;
    in.spec.label = in.spec.is_llm() ? cfg.llm_label : "RSA";
    in.data = in.spec.level == inference::DataLevel::Item ? counts.item_level.at(c) : counts.condition_level.at(c);
    if (in.spec.is_llm()) {
        if (!scores) throw InvalidArgument("llm fit requested but no scores are available for " + to_string(c));
        if (in.spec.predictor == inference::Predictor::LlmItem)
            in.spec.scores = *scores;
        else
            in.spec.scores = llm::with_multiplicities(*scores, counts.item_level.at(c).item_multiplicities());
    }
    return in;
}

inline std::string fit_name(const inference::ModelSpec& spec) {
    std::string n = spec.is_llm() ? "llm" : "rsa";
    n += "-" + inference::to_string(spec.level);
    if (spec.is_llm() && spec.predictor != inference::Predictor::LlmItem) {
        const auto p = inference::to_string(spec.predictor);
        n += "-" + p.substr(p.rfind('-') + 1);
    }
    return n + "-" + to_string(spec.condition);
}

struct FitOutcome {
    std::string name;
    inference::PosteriorChains chains;
    inference::PosteriorSummary summary;
    criticism::PpcSummary ppc;
    criticism::BpppResult bppp;
    criticism::FitRow row;
};

inline FitOutcome run_fit(const FitInputs& in, const inference::McmcConfig& mcmc_base, std::uint64_t master_seed) {
    FitOutcome out;
    out.name = fit_name(in.spec);
    const inference::Model model(in.spec, in.data);
    auto mcmc = mcmc_base;
    mcmc.seed = derive_seed(master_seed, stable_hash(out.name));
    out.chains = inference::sample_posterior(model, mcmc);
    out.summary = inference::summarize(out.chains);
    const auto check_seed = derive_seed(mcmc.seed, 7);
    out.ppc = criticism::ppc_summary(criticism::posterior_predictive(model, out.chains, check_seed));
    out.bppp = criticism::bppp(model, out.chains, check_seed);
    out.row.model = in.spec.label;
    out.row.level = criticism::level_label(in.spec.level);
    out.row.method = inference::method_label(in.spec.predictor);
    out.row.condition = in.spec.condition;
    out.row.posterior = out.summary;
    out.row.bppp = out.bppp.value;
    return out;
}

/// Fit record: model, level, method, condition, parameter summaries and sampler settings.
inline nlohmann::json fit_json(const FitOutcome& f, const inference::ModelSpec& spec, const criticism::Stamp& stamp) {
    return {{"model", f.row.model},
            {"predictor", inference::to_string(spec.predictor)},
            {"level", inference::to_string(spec.level)},
            {"method", f.row.method},
            {"condition", to_string(spec.condition)},
            {"alpha", inference::to_json(f.summary.alpha)},
            {"epsilon", inference::to_json(f.summary.epsilon)},
            {"bppp", f.bppp.value},
            {"bppp_se", f.bppp.std_error},
            {"visual_ppc_pass", f.ppc.visual_pass()},
            {"seed", f.chains.config.seed},
            {"n_chains", f.chains.config.chains},
            {"warmup", f.chains.config.warmup},
            {"kept", f.chains.config.draws},
            {"stamp", criticism::to_json(stamp)}};
}

// ---------------------------------------------------------------------------
// Whole run

struct PipelineResult {
    std::vector<criticism::FitRow> rows;
    nlohmann::json report;
    std::string report_text;
    std::vector<std::string> written;
};

/// Runs every stage named in the configuration and writes into
/// `cfg.output_dir`. `hash` is the configuration hash stamped on outputs.
inline PipelineResult run_pipeline(const config::RunConfig& cfg, const std::string& hash,
                                   std::ostream* log = nullptr) {
    const criticism::Stamp stamp{std::string(kVersion), hash, cfg.seed};
    const fs::path out_dir(cfg.output_dir);
    PipelineResult result;
    auto note = [&](const std::string& s) {
        if (log) *log << s << "\n";
    };
    auto stage = [&](const char* name, auto&& fn) {
        try {
            return fn();
        } catch (const PipelineError&) {
            throw;
        } catch (const std::exception& e) {
            throw PipelineError(name, e.what());
        }
    };

    const auto templates = stage("render", [&] { return config::read_templates(cfg.templates_path); });

    const auto items = stage("gen-items", [&] {
        if (cfg.generate_count > 0) {
            auto gen = generate_items(cfg.generate_count, cfg.generate_seed);
            write_json(out_dir / "items.json", items_to_json(gen, templates));
            result.written.push_back((out_dir / "items.json").string());
            return gen;
        }
        if (cfg.items_path.empty()) throw InvalidArgument("no items: set paths.items or generate.count");
        return ingest::read_items_file(cfg.items_path);
    });
    note("items: " + std::to_string(items.size()));

    stage("render", [&] {
        render_prompts(items, templates, out_dir / "prompts");
        return 0;
    });

    bool need_scores = false;
    for (const auto& f : cfg.fits) need_scores = need_scores || f.model == "llm";

    std::map<Condition, llm::ScoreTable> scores;
    if (need_scores)
        stage("score", [&] {
            for (auto c : {Condition::Production, Condition::Interpretation}) {
                bool wanted = false;
                for (const auto& f : cfg.fits)
                    for (auto fc : f.conditions) wanted = wanted || (f.model == "llm" && fc == c);
                if (!wanted) continue;
                llm::ScoreTable table;
                if (!cfg.scores_path(c).empty()) {
                    std::ifstream in(cfg.scores_path(c));
                    if (!in) throw InvalidArgument("cannot open scores file '" + cfg.scores_path(c) + "'");
                    table = llm::read_scores_csv(in, c, cfg.length_correction);
                } else {
                    scoring::Scorer scorer(scoring::ScoringConfig::from_env(cfg.scoring));
                    table = scorer.score_item_set(of_condition(items, c), templates, false, cfg.length_correction).table;
                    note("scored " + to_string(c) + ": " + std::to_string(scorer.network_calls()) + " network calls");
                }
                std::ostringstream csv_out;
                csv_out << "# pragcheck " << stamp.version << " config_hash=" << stamp.config_hash
                        << " seed=" << stamp.seed << "\n";
                llm::write_scores_csv(csv_out, table);
                const auto path = out_dir / ("scores-" + to_string(c) + ".csv");
                write_text(path, csv_out.str());
                result.written.push_back(path.string());
                scores[c] = std::move(table);
            }
            return 0;
        });

    const auto counts = stage("ingest", [&] {
        if (cfg.trials_path.empty()) throw InvalidArgument("no trials file configured");
        auto r = ingest::ingest_trials_file(cfg.trials_path, items);
        nlohmann::json j = {{"stamp", criticism::to_json(stamp)}, {"conditions", nlohmann::json::array()}};
        for (const auto& [c, d] : r.item_level)
            j["conditions"].push_back({{"condition", to_string(c)},
                                       {"condition_level", ingest::counts_to_json(r.condition_level.at(c))},
                                       {"item_level", ingest::counts_to_json(d)}});
        write_json(out_dir / "counts.json", j);
        result.written.push_back((out_dir / "counts.json").string());
        return r;
    });

    stage("fit", [&] {
        for (const auto& req : cfg.fits)
            for (auto c : req.conditions) {
                const auto it = scores.find(c);
                const auto in = bind_fit(req, c, counts, it == scores.end() ? nullptr : &it->second, cfg);
                auto f = run_fit(in, cfg.mcmc, cfg.seed);
                note("fit " + f.name + ": alpha=" + math::format_double(f.summary.alpha.mean) +
                     " epsilon=" + math::format_double(f.summary.epsilon.mean) +
                     " bppp=" + math::format_double(f.bppp.value));
                const auto fit_path = out_dir / "fits" / (f.name + ".json");
                write_json(fit_path, fit_json(f, in.spec, stamp));
                std::ostringstream ppc_out;
                criticism::write_ppc_csv(ppc_out, {f.ppc}, stamp);
                const auto ppc_path = out_dir / "ppc" / (f.name + ".csv");
                write_text(ppc_path, ppc_out.str());
                result.written.push_back(fit_path.string());
                result.written.push_back(ppc_path.string());
                result.rows.push_back(f.row);
            }
        return 0;
    });

    stage("report", [&] {
        result.report = criticism::report_json(result.rows, stamp);
        result.report_text = criticism::report_text(result.rows, stamp);
        write_json(out_dir / "report.json", result.report);
        write_text(out_dir / "report.txt", result.report_text);
        result.written.push_back((out_dir / "report.json").string());
        result.written.push_back((out_dir / "report.txt").string());
        return 0;
    });
    return result;
}

} // namespace pragcheck::pipeline
