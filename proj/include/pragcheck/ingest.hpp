#pragma once

/// Trial files to choice counts.
///
/// trials.csv columns: participant_id, item_id, condition, and either
/// chosen_category (target / competitor / distractor) or chosen_option (the
/// option text as listed for the item). When both are present and nonempty
/// they must agree.

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "csv.hpp"
#include "inference.hpp"
#include "refgame.hpp"

namespace pragcheck::ingest {

struct IngestError : Error {
    explicit IngestError(const std::string& what) : Error("ingest_error", what) {}
};

struct TrialRecord {
    std::string participant_id;
    std::string item_id;
    Condition condition = Condition::Production;
    ResponseCategory chosen = ResponseCategory::Target;
};

struct RowError {
    std::size_t line = 0;
    std::string message;
};

/// Counts per condition at both levels plus every rejected row.
struct IngestResult {
    std::map<Condition, inference::CountData> condition_level;
    std::map<Condition, inference::CountData> item_level;
    std::vector<TrialRecord> trials;
    std::vector<RowError> errors;
    std::size_t rows = 0;

    bool has(Condition c) const { return item_level.count(c) > 0; }
};

inline std::vector<refgame::Item> read_items_json(const nlohmann::json& j) {
    if (!j.is_array()) throw IngestError("items file: expected a JSON array");
    std::vector<refgame::Item> items;
    for (std::size_t i = 0; i < j.size(); ++i) {
        try {
            items.push_back(refgame::item_from_json(j[i]));
        } catch (const std::exception& e) {
            throw IngestError("items file entry " + std::to_string(i) + ": " + e.what());
        }
    }
    return items;
}

inline std::vector<refgame::Item> read_items_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open items file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw IngestError("items file '" + path + "': " + e.what());
    }
    return read_items_json(j);
}

namespace detail {

/// Option text -> category. Production distractor words both map to Distractor.
inline ResponseCategory category_of_option(const refgame::Item& item, std::string text) {
    const auto opts = refgame::option_texts(item);
    for (std::size_t o = 0; o < opts.size(); ++o)
        if (opts[o] == text) return item.categories[o];
    if (item.condition == Condition::Interpretation) {
        const std::string with_article = "the " + text;
        for (std::size_t o = 0; o < opts.size(); ++o)
            if (opts[o] == with_article) return item.categories[o];
    }
    throw InvalidArgument("option '" + text + "' is not an option of item '" + item.id + "'");
}

} // namespace detail

/// Parses a trials table against `items`. Rejected rows are listed with their
/// line numbers; with `strict` any rejection throws.
inline IngestResult ingest_trials(const csv::Table& table, const std::vector<refgame::Item>& items, bool strict = true) {
    std::map<std::string, const refgame::Item*> by_id;
    for (const auto& it : items) by_id[it.id] = &it;

    for (const char* col : {"item_id", "condition"})
        if (!table.has_column(col)) throw IngestError(std::string("trials file: missing column '") + col + "'");
    const bool has_cat = table.has_column("chosen_category");
    const bool has_opt = table.has_column("chosen_option");
    if (!has_cat && !has_opt) throw IngestError("trials file: need a chosen_category or chosen_option column");
    const auto c_item = table.column("item_id");
    const auto c_cond = table.column("condition");
    const auto c_part = table.has_column("participant_id") ? std::optional(table.column("participant_id")) : std::nullopt;
    const auto c_cat = has_cat ? std::optional(table.column("chosen_category")) : std::nullopt;
    const auto c_opt = has_opt ? std::optional(table.column("chosen_option")) : std::nullopt;

    IngestResult res;
    // item order: first appearance in the trial file
    std::map<Condition, std::vector<std::string>> order;
    std::map<Condition, std::map<std::string, CategoryCounts>> per_item;

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        ++res.rows;
        try {
            if (row.size() != table.header.size())
                throw InvalidArgument("expected " + std::to_string(table.header.size()) + " fields, got " +
                                      std::to_string(row.size()));
            TrialRecord t;
            t.item_id = row[c_item];
            if (c_part) t.participant_id = row[*c_part];
            t.condition = condition_from_string(row[c_cond]);
            auto it = by_id.find(t.item_id);
            if (it == by_id.end()) throw InvalidArgument("unknown item '" + t.item_id + "'");
            const auto& item = *it->second;
            if (item.condition != t.condition)
                throw InvalidArgument("condition '" + row[c_cond] + "' does not match item '" + t.item_id + "'");
            std::optional<ResponseCategory> by_cat, by_opt;
            if (c_cat && !row[*c_cat].empty()) by_cat = category_from_string(row[*c_cat]);
            if (c_opt && !row[*c_opt].empty()) by_opt = detail::category_of_option(item, row[*c_opt]);
            if (!by_cat && !by_opt) throw InvalidArgument("no response recorded");
            if (by_cat && by_opt && *by_cat != *by_opt)
                throw InvalidArgument("chosen_category and chosen_option disagree");
            t.chosen = by_cat ? *by_cat : *by_opt;

            auto& counts = per_item[t.condition];
            if (!counts.count(t.item_id)) {
                counts[t.item_id] = {0, 0, 0};
                order[t.condition].push_back(t.item_id);
            }
            ++counts[t.item_id][index_of(t.chosen)];
            res.trials.push_back(std::move(t));
        } catch (const std::exception& e) {
            res.errors.push_back({line, e.what()});
        }
    }

    if (strict && !res.errors.empty()) {
        std::string msg = "trials file: " + std::to_string(res.errors.size()) + " rejected row(s)";
        for (std::size_t i = 0; i < std::min<std::size_t>(res.errors.size(), 10); ++i)
            msg += "; line " + std::to_string(res.errors[i].line) + ": " + res.errors[i].message;
        throw IngestError(msg);
    }

    for (const auto& [cond, ids] : order) {
        inference::CountData d{cond, inference::DataLevel::Item, {}, {}};
        for (const auto& id : ids) {
            d.item_ids.push_back(id);
            d.counts.push_back(per_item[cond][id]);
        }
        res.condition_level[cond] = d.aggregated();
        res.item_level[cond] = std::move(d);
    }
    return res;
}

inline IngestResult ingest_trials_file(const std::string& path, const std::vector<refgame::Item>& items,
                                       bool strict = true) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open trials file '" + path + "'");
    return ingest_trials(csv::read(in), items, strict);
}

inline void write_trials_csv(std::ostream& out, const std::vector<TrialRecord>& trials) {
    csv::write_row(out, {"participant_id", "item_id", "condition", "chosen_category"});
    for (const auto& t : trials)
        csv::write_row(out, {t.participant_id, t.item_id, to_string(t.condition), to_string(t.chosen)});
}

inline nlohmann::json counts_to_json(const inference::CountData& d) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < d.counts.size(); ++i)
        rows.push_back({{"item_id", d.item_ids[i]}, {"counts", d.counts[i]}});
    return {{"condition", to_string(d.condition)}, {"level", inference::to_string(d.level)}, {"N", d.total()},
            {"rows", rows}};
}

inline inference::CountData counts_from_json(const nlohmann::json& j) {
    inference::CountData d;
    d.condition = condition_from_string(j.at("condition").get<std::string>());
    d.level = inference::data_level_from_string(j.at("level").get<std::string>());
    for (const auto& r : j.at("rows")) {
        d.item_ids.push_back(r.at("item_id").get<std::string>());
        d.counts.push_back(r.at("counts").get<CategoryCounts>());
    }
    d.check();
    return d;
}

// ---------------------------------------------------------------------------
// OSF adapter

/// Column names of an externally published trial file. Condition values are
/// matched through `condition_values`; responses are category names after
/// `response_values` translation, or option texts otherwise.
struct ColumnMapping {
    std::string participant = "submission_id";
    std::string item = "item_id";
    std::string condition = "condition";
    std::string response = "response";
    std::map<std::string, std::string> condition_values = {{"production", "production"},
                                                           {"interpretation", "interpretation"}};
    std::map<std::string, std::string> response_values;
    /// Optional filter: keep rows where `filter_column` equals `filter_value`.
    std::string filter_column;
    std::string filter_value;
};

inline ColumnMapping column_mapping_from_json(const nlohmann::json& j) {
    ColumnMapping m;
    if (j.contains("participant")) j.at("participant").get_to(m.participant);
    if (j.contains("item")) j.at("item").get_to(m.item);
    if (j.contains("condition")) j.at("condition").get_to(m.condition);
    if (j.contains("response")) j.at("response").get_to(m.response);
    if (j.contains("condition_values")) j.at("condition_values").get_to(m.condition_values);
    if (j.contains("response_values")) j.at("response_values").get_to(m.response_values);
    if (j.contains("filter_column")) j.at("filter_column").get_to(m.filter_column);
    if (j.contains("filter_value")) j.at("filter_value").get_to(m.filter_value);
    return m;
}

/// Rewrites an external trial table into the trials.csv layout. This is the
/// only place that knows foreign column names.
inline csv::Table adapt_external_trials(const csv::Table& in, const ColumnMapping& m) {
    for (const auto& col : {m.item, m.condition, m.response})
        if (!in.has_column(col)) throw IngestError("external trials: missing column '" + col + "'");
    const auto ci = in.column(m.item), cc = in.column(m.condition), cr = in.column(m.response);
    const auto cp = in.has_column(m.participant) ? std::optional(in.column(m.participant)) : std::nullopt;
    const auto cf = m.filter_column.empty() ? std::nullopt : std::optional(in.column(m.filter_column));

    csv::Table out;
    out.header = {"participant_id", "item_id", "condition", "chosen_category", "chosen_option"};
    for (std::size_t r = 0; r < in.rows.size(); ++r) {
        const auto& row = in.rows[r];
        if (row.size() != in.header.size()) throw IngestError("external trials line " + std::to_string(in.lines[r]) +
                                                              ": wrong field count");
        if (cf && row[*cf] != m.filter_value) continue;
        auto cond = m.condition_values.find(row[cc]);
        if (cond == m.condition_values.end())
            throw IngestError("external trials line " + std::to_string(in.lines[r]) + ": unmapped condition '" +
                              row[cc] + "'");
        std::string cat, opt;
        if (auto rv = m.response_values.find(row[cr]); rv != m.response_values.end())
            cat = rv->second;
        else if (row[cr] == "target" || row[cr] == "competitor" || row[cr] == "distractor")
            cat = row[cr];
        else
            opt = row[cr];
        out.rows.push_back({cp ? row[*cp] : "", row[ci], cond->second, cat, opt});
        out.lines.push_back(in.lines[r]);
    }
    return out;
}

} // namespace pragcheck::ingest
