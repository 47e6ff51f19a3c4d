// pragcheck command-line front end.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <pragcheck/config.hpp>
#include <pragcheck/criticism.hpp>
#include <pragcheck/ingest.hpp>
#include <pragcheck/pipeline.hpp>

namespace fs = std::filesystem;
using namespace pragcheck;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir, items, trials, scores_prd, scores_int, templates;
    // fit selection
    std::optional<std::string> model, level, aggregation, condition, label;
    std::optional<int> chains, warmup, draws;
    std::optional<std::string> lump_mode, length_correction;
    // scoring
    std::optional<std::string> base_url, model_name, cache;
    std::optional<int> concurrency;
    // gen-items
    std::optional<int> count;
    std::optional<std::uint64_t> gen_seed;
};

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON run configuration; flags override it");
    app->add_option("--seed", f.seed, "master seed");
    app->add_option("--out-dir", f.out_dir, "output directory");
    app->add_option("--items", f.items, "items.json");
    app->add_option("--trials", f.trials, "trials.csv");
    app->add_option("--scores-production", f.scores_prd, "scores.csv for production items");
    app->add_option("--scores-interpretation", f.scores_int, "scores.csv for interpretation items");
    app->add_option("--templates", f.templates, "prompt templates JSON");
    app->add_option("--length-correction", f.length_correction, "mean or sum")
        ->check(CLI::IsMember({"mean", "sum"}));
    app->add_option("--lump-mode", f.lump_mode, "log-mean-exp or sum-probabilities")
        ->check(CLI::IsMember({"log-mean-exp", "sum-probabilities", "sum"}));
}

void add_fit_selection(CLI::App* app, Flags& f) {
    app->add_option("--model", f.model, "rsa or llm")->check(CLI::IsMember({"rsa", "llm"}));
    app->add_option("--level", f.level, "condition or item")->check(CLI::IsMember({"condition", "item"}));
    app->add_option("--aggregation", f.aggregation, "scores, prob or wta (llm, condition level)")
        ->check(CLI::IsMember({"scores", "prob", "wta"}));
    app->add_option("--condition", f.condition, "production, interpretation or both")
        ->check(CLI::IsMember({"production", "interpretation", "both"}));
    app->add_option("--label", f.label, "model column label for llm fits");
    app->add_option("--chains", f.chains, "MCMC chains");
    app->add_option("--warmup", f.warmup, "warm-up iterations per chain");
    app->add_option("--draws", f.draws, "kept draws per chain");
}

void add_scoring(CLI::App* app, Flags& f) {
    app->add_option("--base-url", f.base_url, "completions endpoint base URL (e.g. http://host/v1)");
    app->add_option("--model-name", f.model_name, "scored model name");
    app->add_option("--cache", f.cache, "JSON-lines score cache");
    app->add_option("--concurrency", f.concurrency, "maximum concurrent requests");
}

config::RunConfig load(const Flags& f) {
    config::RunConfig c;
    if (!f.config.empty()) {
        c = config::read_run_config(f.config);
        config::resolve_relative_paths(c, f.config);
    }
    if (f.seed) c.seed = *f.seed;
    if (f.out_dir) c.output_dir = *f.out_dir;
    if (f.items) c.items_path = *f.items;
    if (f.trials) c.trials_path = *f.trials;
    if (f.scores_prd) c.scores_production_path = *f.scores_prd;
    if (f.scores_int) c.scores_interpretation_path = *f.scores_int;
    if (f.templates) c.templates_path = *f.templates;
    if (f.chains) c.mcmc.chains = *f.chains;
    if (f.warmup) c.mcmc.warmup = *f.warmup;
    if (f.draws) c.mcmc.draws = *f.draws;
    if (f.lump_mode) c.lump_mode = llm::lump_mode_from_string(*f.lump_mode);
    if (f.length_correction) c.length_correction = llm::length_correction_from_string(*f.length_correction);
    if (f.label) c.llm_label = *f.label;
    if (f.base_url) c.scoring.base_url = *f.base_url;
    if (f.model_name) c.scoring.model_name = *f.model_name;
    if (f.cache) c.scoring.cache_path = *f.cache;
    if (f.concurrency) c.scoring.max_concurrent_requests = *f.concurrency;
    if (f.count) c.generate_count = *f.count;
    if (f.gen_seed) c.generate_seed = *f.gen_seed;
    if (f.model) {
        config::FitRequest r;
        r.model = *f.model;
        if (f.level) r.level = *f.level;
        if (f.aggregation) r.aggregation = *f.aggregation;
        if (f.condition) r.conditions = config::conditions_from_string(*f.condition);
        r.predictor();
        c.fits = {r};
    } else if (f.level || f.aggregation) {
        throw config::ConfigError("--level/--aggregation need --model");
    } else if (f.condition) {
        for (auto& r : c.fits) r.conditions = config::conditions_from_string(*f.condition);
    }
    c.mcmc.seed = c.seed;
    c.mcmc.check();
    return c;
}

criticism::Stamp stamp_of(const config::RunConfig& c) { return {std::string(kVersion), config::config_hash(c), c.seed}; }

std::vector<Condition> selected_conditions(const Flags& f) {
    return f.condition ? config::conditions_from_string(*f.condition)
                       : std::vector<Condition>{Condition::Production, Condition::Interpretation};
}

std::vector<refgame::Item> load_items(const config::RunConfig& c) {
    if (c.items_path.empty()) throw InvalidArgument("--items is required");
    return ingest::read_items_file(c.items_path);
}

llm::ScoreTable load_scores(const config::RunConfig& c, Condition cond) {
    const auto path = c.scores_path(cond);
    if (path.empty()) throw InvalidArgument("no scores file for " + to_string(cond));
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open scores file '" + path + "'");
    return llm::read_scores_csv(in, cond, c.length_correction);
}

void say(const fs::path& p) { std::cout << p.string() << "\n"; }

int cmd_gen_items(const Flags& f) {
    auto c = load(f);
    if (c.generate_count <= 0) c.generate_count = 10;
    const auto items = pipeline::generate_items(c.generate_count, c.generate_seed);
    const auto path = fs::path(c.output_dir) / "items.json";
    pipeline::write_json(path, pipeline::items_to_json(items, config::read_templates(c.templates_path)));
    say(path);
    return 0;
}

int cmd_render(const Flags& f) {
    const auto c = load(f);
    const auto items = load_items(c);
    const auto dir = fs::path(c.output_dir) / "prompts";
    pipeline::render_prompts(items, config::read_templates(c.templates_path), dir);
    say(dir);
    return 0;
}

int cmd_score(const Flags& f, bool allow_partial) {
    const auto c = load(f);
    const auto items = load_items(c);
    const auto templates = config::read_templates(c.templates_path);
    scoring::Scorer scorer(scoring::ScoringConfig::from_env(c.scoring));
    const auto st = stamp_of(c);
    int status = 0;
    for (auto cond : selected_conditions(f)) {
        const auto subset = pipeline::of_condition(items, cond);
        if (subset.empty()) continue;
        const auto r = scorer.score_item_set(subset, templates, allow_partial, c.length_correction);
        std::ostringstream out;
        out << "# pragcheck " << st.version << " config_hash=" << st.config_hash << " seed=" << st.seed << "\n";
        llm::write_scores_csv(out, r.table);
        const auto path = fs::path(c.output_dir) / ("scores-" + to_string(cond) + ".csv");
        pipeline::write_text(path, out.str());
        say(path);
        for (const auto& fail : r.failures) std::cerr << "warning: " << fail << "\n";
        if (!r.table.complete) status = 3;
    }
    std::cerr << "network calls: " << scorer.network_calls() << "\n";
    return status;
}

ingest::IngestResult do_ingest(const config::RunConfig& c, const std::vector<refgame::Item>& items,
                               const std::string& mapping, bool lenient) {
    if (c.trials_path.empty()) throw InvalidArgument("--trials is required");
    std::ifstream in(c.trials_path);
    if (!in) throw ingest::IngestError("cannot open trials file '" + c.trials_path + "'");
    auto table = csv::read(in);
    if (!mapping.empty()) {
        std::ifstream m(mapping);
        if (!m) throw ingest::IngestError("cannot open column mapping '" + mapping + "'");
        table = ingest::adapt_external_trials(table, ingest::column_mapping_from_json(nlohmann::json::parse(m)));
    }
    return ingest::ingest_trials(table, items, !lenient);
}

int cmd_ingest(const Flags& f, const std::string& mapping, bool lenient) {
    const auto c = load(f);
    const auto items = load_items(c);
    const auto r = do_ingest(c, items, mapping, lenient);
    nlohmann::json j = {{"stamp", criticism::to_json(stamp_of(c))},
                        {"rows", r.rows},
                        {"counted", r.trials.size()},
                        {"errors", nlohmann::json::array()},
                        {"conditions", nlohmann::json::array()}};
    for (const auto& e : r.errors) j["errors"].push_back({{"line", e.line}, {"message", e.message}});
    for (const auto& [cond, d] : r.item_level)
        j["conditions"].push_back({{"condition", to_string(cond)},
                                   {"condition_level", ingest::counts_to_json(r.condition_level.at(cond))},
                                   {"item_level", ingest::counts_to_json(d)}});
    const auto path = fs::path(c.output_dir) / "counts.json";
    pipeline::write_json(path, j);
    say(path);
    // accepted trials in the native layout, usable as paths.trials of a pipeline run
    std::ostringstream trials;
    ingest::write_trials_csv(trials, r.trials);
    pipeline::write_text(fs::path(c.output_dir) / "trials.csv", trials.str());
    say(fs::path(c.output_dir) / "trials.csv");
    for (const auto& e : r.errors) std::cerr << "line " << e.line << ": " << e.message << "\n";
    return 0;
}

/// Model inputs for every requested (fit, condition) pair.
std::vector<pipeline::FitInputs> fit_inputs(const config::RunConfig& c) {
    if (c.fits.empty()) throw InvalidArgument("no fit requested: pass --model or list fits in the config");
    const auto items = load_items(c);
    const auto counts = do_ingest(c, items, "", false);
    std::map<Condition, llm::ScoreTable> scores;
    std::vector<pipeline::FitInputs> out;
    for (const auto& req : c.fits)
        for (auto cond : req.conditions) {
            const llm::ScoreTable* table = nullptr;
            if (req.model == "llm") {
                if (!scores.count(cond)) scores[cond] = load_scores(c, cond);
                table = &scores.at(cond);
            }
            out.push_back(pipeline::bind_fit(req, cond, counts, table, c));
        }
    return out;
}

int cmd_fit(const Flags& f) {
    const auto c = load(f);
    const auto st = stamp_of(c);
    std::vector<criticism::FitRow> rows;
    for (const auto& in : fit_inputs(c)) {
        const auto out = pipeline::run_fit(in, c.mcmc, c.seed);
        const fs::path dir(c.output_dir);
        pipeline::write_json(dir / "fits" / (out.name + ".json"), pipeline::fit_json(out, in.spec, st));
        auto draws = inference::draws_to_json(out.chains);
        draws["stamp"] = criticism::to_json(st);
        pipeline::write_json(dir / "draws" / (out.name + ".json"), draws);
        say(dir / "fits" / (out.name + ".json"));
        rows.push_back(out.row);
    }
    std::cerr << criticism::report_text(rows, st);
    return 0;
}

int cmd_ppc(const Flags& f, const std::string& draws_path) {
    const auto c = load(f);
    const auto inputs = fit_inputs(c);
    if (inputs.size() != 1) throw InvalidArgument("ppc checks one fit: give --model and a single --condition");
    const auto& in = inputs.front();
    std::ifstream d(draws_path);
    if (!d) throw InvalidArgument("cannot open draws file '" + draws_path + "'");
    const auto chains = inference::draws_from_json(nlohmann::json::parse(d));
    const inference::Model model(in.spec, in.data);
    const auto seed = derive_seed(chains.config.seed, 7);
    const auto ppc = criticism::ppc_summary(criticism::posterior_predictive(model, chains, seed));
    const auto b = criticism::bppp(model, chains, seed);
    const auto st = stamp_of(c);
    std::ostringstream csv_out;
    criticism::write_ppc_csv(csv_out, {ppc}, st);
    const auto path = fs::path(c.output_dir) / "ppc" / (pipeline::fit_name(in.spec) + ".csv");
    pipeline::write_text(path, csv_out.str());
    std::cout << nlohmann::json{{"ppc", path.string()},
                                {"bppp", b.value},
                                {"bppp_se", b.std_error},
                                {"pass", b.value >= criticism::kBpppThreshold},
                                {"visual_ppc_pass", ppc.visual_pass()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_accuracy(const Flags& f, std::optional<double> alpha) {
    const auto c = load(f);
    nlohmann::json out = nlohmann::json::array();
    for (auto cond : selected_conditions(f)) {
        if (c.scores_path(cond).empty()) continue;
        const auto t = load_scores(c, cond);
        nlohmann::json j = {{"condition", to_string(cond)},
                            {"items", t.items.size()},
                            {"wta_accuracy", llm::wta_accuracy(t, c.lump_mode)}};
        if (alpha) {
            j["alpha"] = *alpha;
            j["softmax_accuracy"] = llm::softmax_accuracy(t, *alpha, c.lump_mode);
        }
        out.push_back(j);
    }
    if (out.empty()) throw InvalidArgument("no scores given: pass --scores-production and/or --scores-interpretation");
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_report(const Flags& f, const std::string& fits_dir) {
    const auto c = load(f);
    const fs::path dir = fits_dir.empty() ? fs::path(c.output_dir) / "fits" : fs::path(fits_dir);
    if (!fs::is_directory(dir)) throw InvalidArgument("no fits directory '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<criticism::FitRow> rows;
    for (const auto& p : files) {
        std::ifstream in(p);
        const auto j = nlohmann::json::parse(in);
        criticism::FitRow r;
        r.model = j.at("model").get<std::string>();
        r.level = criticism::level_label(inference::data_level_from_string(j.at("level").get<std::string>()));
        r.method = j.at("method").get<std::string>();
        r.condition = condition_from_string(j.at("condition").get<std::string>());
        r.posterior.alpha = inference::param_summary_from_json(j.at("alpha"));
        r.posterior.epsilon = inference::param_summary_from_json(j.at("epsilon"));
        r.bppp = j.at("bppp").get<double>();
        rows.push_back(r);
    }
    const auto st = stamp_of(c);
    pipeline::write_json(fs::path(c.output_dir) / "report.json", criticism::report_json(rows, st));
    const auto text = criticism::report_text(rows, st);
    pipeline::write_text(fs::path(c.output_dir) / "report.txt", text);
    std::cout << text;
    return 0;
}

int cmd_pipeline(const Flags& f) {
    const auto c = load(f);
    const auto r = pipeline::run_pipeline(c, config::config_hash(c), &std::cerr);
    std::cout << r.report_text;
    return 0;
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pragcheck: pragmatic reference-game models, LLM scoring and Bayesian model criticism"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    Flags f;
    std::string mapping, draws_path, fits_dir;
    bool lenient = false, allow_partial = false;
    std::optional<double> alpha;

    auto* gen = app.add_subcommand("gen-items", "generate reference-game items");
    add_common(gen, f);
    gen->add_option("--count", f.count, "items per condition");
    gen->add_option("--gen-seed", f.gen_seed, "item generation seed");

    auto* render = app.add_subcommand("render", "render prompts for items");
    add_common(render, f);

    auto* score = app.add_subcommand("score", "score item options with a completions endpoint");
    add_common(score, f);
    add_scoring(score, f);
    score->add_option("--condition", f.condition)->check(CLI::IsMember({"production", "interpretation", "both"}));
    score->add_flag("--allow-partial", allow_partial, "write incomplete tables instead of failing");

    auto* ing = app.add_subcommand("ingest", "count trials per category and item");
    add_common(ing, f);
    ing->add_option("--osf-mapping", mapping, "column mapping JSON for an external trial file");
    ing->add_flag("--lenient", lenient, "report bad rows instead of failing");

    auto* fit = app.add_subcommand("fit", "fit models by MCMC");
    add_common(fit, f);
    add_fit_selection(fit, f);

    auto* ppc = app.add_subcommand("ppc", "posterior predictive check from saved draws");
    add_common(ppc, f);
    add_fit_selection(ppc, f);
    ppc->add_option("--draws-file", draws_path, "draws JSON written by fit")->required();

    auto* acc = app.add_subcommand("accuracy", "WTA and softmax accuracy of scored items");
    add_common(acc, f);
    acc->add_option("--condition", f.condition)->check(CLI::IsMember({"production", "interpretation", "both"}));
    acc->add_option("--alpha", alpha, "softmax scaling for softmax accuracy");

    auto* rep = app.add_subcommand("report", "collect fit files into a table");
    add_common(rep, f);
    rep->add_option("--fits", fits_dir, "directory of fit JSON files");

    auto* pipe = app.add_subcommand("pipeline", "run every stage from a configuration");
    add_common(pipe, f);
    add_fit_selection(pipe, f);
    add_scoring(pipe, f);
    pipe->add_option("--count", f.count, "generate this many items per condition");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage_error", e.what(), 2);
    }

    try {
        if (*gen) return cmd_gen_items(f);
        if (*render) return cmd_render(f);
        if (*score) return cmd_score(f, allow_partial);
        if (*ing) return cmd_ingest(f, mapping, lenient);
        if (*fit) return cmd_fit(f);
        if (*ppc) return cmd_ppc(f, draws_path);
        if (*acc) return cmd_accuracy(f, alpha);
        if (*rep) return cmd_report(f, fits_dir);
        if (*pipe) return cmd_pipeline(f);
    } catch (const pipeline::PipelineError& e) {
        std::cerr << nlohmann::json{{"error", e.kind()}, {"stage", e.stage()}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), 1);
    } catch (const nlohmann::json::exception& e) {
        return fail("json_error", e.what(), 1);
    } catch (const std::exception& e) {
        return fail("error", e.what(), 1);
    }
    return 0;
}
