#pragma once

/// Per-option token log-probabilities from an OpenAI-compatible completions
/// endpoint, with an append-only JSON-lines cache.
///
/// Each option is scored by echoing prompt + " " + option with max_tokens = 0
/// and reading back the per-token log-probabilities. Tokens whose character
/// span starts at or after the prompt length belong to the option. Production
/// prompts end in "I would choose the word" with no trailing space, so the
/// option's first token starts cleanly with a leading space; a token crossing
/// the prompt boundary is reported as an error rather than guessed at.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "core.hpp"
#include "llm_predictors.hpp"
#include "refgame.hpp"

namespace pragcheck::scoring {

struct TransportError : Error {
    explicit TransportError(const std::string& what) : Error("transport_error", what) {}
};
struct BoundaryError : Error {
    explicit BoundaryError(const std::string& what) : Error("boundary_error", what) {}
};
struct IncompleteTableError : Error {
    explicit IncompleteTableError(const std::string& what) : Error("incomplete_table", what) {}
};

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("internal", "sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds initial_backoff{250};
    double multiplier = 2.0;
};

struct ScoringConfig {
    std::string base_url;
    std::string api_key;
    std::string model_name = "text-davinci-003";
    int max_concurrent_requests = 4;
    RetryPolicy retry;
    std::string cache_path;
    std::chrono::seconds timeout{60};

    /// PRAGCHECK_BASE_URL / PRAGCHECK_API_KEY fill in whatever is unset.
    static ScoringConfig from_env(ScoringConfig c) {
        if (c.base_url.empty())
            if (const char* v = std::getenv("PRAGCHECK_BASE_URL")) c.base_url = v;
        if (c.api_key.empty())
            if (const char* v = std::getenv("PRAGCHECK_API_KEY")) c.api_key = v;
        return c;
    }
    static ScoringConfig from_env() { return from_env(ScoringConfig{}); }

    void check() const {
        if (max_concurrent_requests < 1) throw InvalidArgument("max_concurrent_requests must be >= 1");
        if (retry.max_attempts < 1) throw InvalidArgument("retry.max_attempts must be >= 1");
    }
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
    bool operator==(const TokenLogprob&) const = default;
};

struct RawScoreRecord {
    std::string key;
    std::string item_id;
    std::string option_text;
    std::vector<TokenLogprob> tokens;
    std::string model_name;
    std::string timestamp;

    std::vector<double> logprobs() const {
        std::vector<double> out;
        for (const auto& t : tokens) out.push_back(t.logprob);
        return out;
    }
    bool operator==(const RawScoreRecord&) const = default;
};

inline nlohmann::json to_json(const RawScoreRecord& r) {
    nlohmann::json toks = nlohmann::json::array();
    for (const auto& t : r.tokens) toks.push_back({t.token, t.logprob});
    return {{"key", r.key},           {"item_id", r.item_id},       {"option_text", r.option_text},
            {"tokens", toks},         {"model_name", r.model_name}, {"timestamp", r.timestamp}};
}

inline RawScoreRecord record_from_json(const nlohmann::json& j) {
    RawScoreRecord r;
    j.at("key").get_to(r.key);
    j.at("item_id").get_to(r.item_id);
    j.at("option_text").get_to(r.option_text);
    j.at("model_name").get_to(r.model_name);
    if (j.contains("timestamp")) j.at("timestamp").get_to(r.timestamp);
    for (const auto& t : j.at("tokens")) r.tokens.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
    return r;
}

/// Cache key over (model, prompt, option).
inline std::string cache_key(const std::string& model, const std::string& prompt, const std::string& option) {
    std::string blob = model;
    blob += '\0';
    blob += sha256_hex(prompt);
    blob += '\0';
    blob += option;
    return sha256_hex(blob);
}

/// Append-only JSON-lines cache. The first record for a key wins.
class ScoreCache {
public:
    ScoreCache() = default;
    explicit ScoreCache(std::string path) : path_(std::move(path)) {
        if (path_.empty()) return;
        std::ifstream in(path_);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            try {
                auto r = record_from_json(nlohmann::json::parse(line));
                records_.try_emplace(r.key, std::move(r));
            } catch (const std::exception& e) {
                throw InvalidArgument("cache " + path_ + " line " + std::to_string(n) + ": " + e.what());
            }
        }
    }

    std::optional<RawScoreRecord> lookup(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = records_.find(key);
        if (it == records_.end()) return std::nullopt;
        return it->second;
    }

    void append(const RawScoreRecord& r) {
        std::lock_guard lock(mu_);
        if (!records_.try_emplace(r.key, r).second) return;
        if (path_.empty()) return;
        std::ofstream out(path_, std::ios::app);
        out << to_json(r).dump() << '\n';
        if (!out) throw Error("io_error", "cannot append to cache " + path_);
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return records_.size();
    }

private:
    std::string path_;
    mutable std::mutex mu_;
    std::map<std::string, RawScoreRecord> records_;
};

namespace detail {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // prefix + /completions
};

inline Endpoint parse_endpoint(const std::string& base_url) {
    const auto scheme = base_url.find("://");
    if (scheme == std::string::npos) throw InvalidArgument("base_url needs a scheme: '" + base_url + "'");
    const auto slash = base_url.find('/', scheme + 3);
    Endpoint e;
    e.origin = base_url.substr(0, slash);
    std::string prefix = slash == std::string::npos ? "" : base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    e.path = prefix + "/completions";
    return e;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Picks the option's tokens out of an echoed completion.
inline std::vector<TokenLogprob> extract_option_tokens(const nlohmann::json& response, const std::string& prompt,
                                                       const std::string& continuation) {
    const auto& lp = response.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    if (tokens.size() != logprobs.size()) throw BoundaryError("tokens and token_logprobs differ in length");
    std::vector<std::size_t> offsets;
    if (lp.contains("text_offset") && !lp.at("text_offset").is_null()) {
        offsets = lp.at("text_offset").get<std::vector<std::size_t>>();
    } else {
        std::size_t pos = 0;
        for (const auto& t : tokens) {
            offsets.push_back(pos);
            pos += t.get<std::string>().size();
        }
    }
    if (offsets.size() != tokens.size()) throw BoundaryError("text_offset and tokens differ in length");

    const std::size_t boundary = prompt.size();
    std::vector<TokenLogprob> out;
    std::string spelled;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto tok = tokens[i].get<std::string>();
        const std::size_t start = offsets[i], end = start + tok.size();
        if (start < boundary && end > boundary)
            throw BoundaryError("token '" + tok + "' at offset " + std::to_string(start) +
                                " straddles the prompt/option boundary at " + std::to_string(boundary));
        if (start < boundary) continue;
        if (logprobs[i].is_null()) throw BoundaryError("option token '" + tok + "' has no log-probability");
        out.push_back({tok, logprobs[i].get<double>()});
        spelled += tok;
    }
    if (spelled != continuation)
        throw BoundaryError("option tokens spell '" + spelled + "', expected '" + continuation + "'");
    if (out.empty()) throw BoundaryError("no option tokens in echoed text");
    return out;
}

} // namespace detail

struct ScoringResult {
    llm::ScoreTable table;
    std::vector<RawScoreRecord> records;
    std::vector<std::string> failures;
};

class Scorer {
public:
    explicit Scorer(ScoringConfig config) : config_(std::move(config)), cache_(config_.cache_path) { config_.check(); }

    /// Score one option continuation. Cache first, then the endpoint.
    RawScoreRecord score_option(const std::string& item_id, const std::string& prompt, const std::string& option) {
        const auto key = cache_key(config_.model_name, prompt, option);
        if (auto hit = cache_.lookup(key)) return *hit;
        if (config_.base_url.empty())
            throw TransportError("no endpoint configured and no cached score for item '" + item_id + "' option '" +
                                 option + "'");

        const std::string continuation = " " + option;
        const nlohmann::json body = {{"model", config_.model_name}, {"prompt", prompt + continuation},
                                     {"max_tokens", 0},             {"echo", true},
                                     {"logprobs", 1}};
        const auto response = post_with_retry(body.dump());
        RawScoreRecord rec;
        rec.key = key;
        rec.item_id = item_id;
        rec.option_text = option;
        rec.tokens = detail::extract_option_tokens(response, prompt, continuation);
        rec.model_name = config_.model_name;
        rec.timestamp = detail::utc_timestamp();
        cache_.append(rec);
        return rec;
    }

    /// Scores every option of every item (all of one condition). Output order
    /// follows the input regardless of request scheduling.
    ScoringResult score_item_set(const std::vector<refgame::Item>& items, const refgame::PromptTemplates& templates = {},
                                 bool allow_partial = false,
                                 llm::LengthCorrection correction = llm::LengthCorrection::Mean) {
        ScoringResult result;
        result.table.correction = correction;
        if (items.empty()) return result;
        const Condition condition = items.front().condition;
        for (const auto& it : items) {
            if (it.condition != condition) throw InvalidArgument("score_item_set: items mix conditions");
            refgame::require_valid(it);
        }
        result.table.condition = condition;

        struct Task {
            std::size_t item, option;
            std::string prompt, text;
        };
        std::vector<Task> tasks;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto prompt = refgame::render_prompt(items[i], templates);
            const auto opts = refgame::option_texts(items[i]);
            for (std::size_t o = 0; o < opts.size(); ++o) tasks.push_back({i, o, prompt, opts[o]});
        }
        std::vector<std::optional<RawScoreRecord>> slots(tasks.size());
        std::vector<std::string> errors(tasks.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t t = next++; t < tasks.size(); t = next++) {
                try {
                    slots[t] = score_option(items[tasks[t].item].id, tasks[t].prompt, tasks[t].text);
                } catch (const std::exception& e) {
                    errors[t] = e.what();
                }
            }
        };
        const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config_.max_concurrent_requests), tasks.size());
        std::vector<std::thread> pool;
        for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();

        std::size_t t = 0;
        for (const auto& item : items) {
            llm::ItemScores scores{item.id, {}};
            bool ok = true;
            for (std::size_t o = 0; o < item.option_count(); ++o, ++t) {
                if (!slots[t]) {
                    ok = false;
                    result.failures.push_back("item '" + item.id + "' option '" + tasks[t].text + "': " + errors[t]);
                    continue;
                }
                llm::ScoredOption opt;
                opt.category = item.categories[o];
                opt.option_text = tasks[t].text;
                opt.token_logprobs = slots[t]->logprobs();
                opt.n_tokens = static_cast<int>(opt.token_logprobs.size());
                opt.score = llm::item_score(opt.token_logprobs, correction);
                scores.options.push_back(std::move(opt));
                result.records.push_back(*slots[t]);
            }
            if (ok)
                result.table.items.push_back(std::move(scores));
            else
                result.table.missing.push_back(item.id);
        }
        result.table.complete = result.table.missing.empty();
        if (!result.table.complete && !allow_partial) {
            std::string ids;
            for (const auto& id : result.table.missing) ids += (ids.empty() ? "" : ", ") + id;
            throw IncompleteTableError("unscored options for item(s) " + ids + "; first failure: " +
                                       result.failures.front());
        }
        return result;
    }

    std::size_t network_calls() const { return calls_.load(); }
    const ScoreCache& cache() const { return cache_; }

private:
    nlohmann::json post_with_retry(const std::string& body) {
        const auto ep = detail::parse_endpoint(config_.base_url);
        auto backoff = config_.retry.initial_backoff;
        std::string last;
        for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
            if (attempt > 1) {
                std::this_thread::sleep_for(backoff);
                backoff = std::chrono::milliseconds(
                    static_cast<long long>(static_cast<double>(backoff.count()) * config_.retry.multiplier));
            }
            httplib::Client cli(ep.origin);
            cli.set_connection_timeout(config_.timeout);
            cli.set_read_timeout(config_.timeout);
            httplib::Headers headers;
            if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
            ++calls_;
            auto res = cli.Post(ep.path, headers, body, "application/json");
            if (!res) {
                last = "request failed: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) {
                try {
                    return nlohmann::json::parse(res->body);
                } catch (const std::exception& e) {
                    throw TransportError(std::string("malformed response body: ") + e.what());
                }
            }
            last = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            if (res->status != 429 && res->status < 500) throw TransportError(last);
        }
        throw TransportError("giving up after " + std::to_string(config_.retry.max_attempts) + " attempts: " + last);
    }

    ScoringConfig config_;
    ScoreCache cache_;
    std::atomic<std::size_t> calls_{0};
};

} // namespace pragcheck::scoring
