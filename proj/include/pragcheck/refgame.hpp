#pragma once

/// Reference-game items: generation, structural validation, truth-value
/// semantics and prompt rendering.
///
/// Every item has the same logical shape. One feature dimension is constant
/// across the three objects; the other two dimensions take two values each.
/// One "middle" object shares each of its varying features with one other
/// object, and each remaining object carries exactly one unique feature:
///
///     middle = (a1, b1),  left = (a2, b1),  right = (a1, b2)
///
/// The four words are a1, a2, b1, b2.

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "random.hpp"

namespace pragcheck::refgame {

enum class Dimension { Color = 0, Shape = 1, Texture = 2 };
inline constexpr std::array<Dimension, 3> kDimensions = {Dimension::Color, Dimension::Shape, Dimension::Texture};

inline std::string to_string(Dimension d) {
    switch (d) {
    case Dimension::Color: return "color";
    case Dimension::Shape: return "shape";
    case Dimension::Texture: return "texture";
    }
    return "?";
}

inline Dimension dimension_from_string(std::string_view s) {
    for (auto d : kDimensions)
        if (to_string(d) == s) return d;
    throw InvalidArgument("unknown feature dimension '" + std::string(s) + "'");
}

/// Four admissible values per dimension.
struct Vocabulary {
    std::array<std::array<std::string, 4>, 3> values = {{
        {"blue", "green", "red", "orange"},
        {"square", "circle", "triangle", "star"},
        {"stripes", "spades", "dots", "checkers"},
    }};

    const std::array<std::string, 4>& of(Dimension d) const { return values[static_cast<std::size_t>(d)]; }

    bool contains(Dimension d, const std::string& v) const {
        const auto& vs = of(d);
        return std::find(vs.begin(), vs.end(), v) != vs.end();
    }

    /// Empty when the vocabulary is usable: 4 distinct values per dimension,
    /// no value shared between dimensions.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        std::set<std::string> all;
        for (auto d : kDimensions) {
            std::set<std::string> seen(of(d).begin(), of(d).end());
            if (seen.size() != 4) out.push_back(to_string(d) + " vocabulary needs 4 distinct values");
            for (const auto& v : of(d)) {
                if (v.empty()) out.push_back(to_string(d) + " vocabulary has an empty value");
                if (!all.insert(v).second) out.push_back("value '" + v + "' appears in more than one dimension");
            }
        }
        return out;
    }
};

struct GameObject {
    std::string color;
    std::string shape;
    std::string texture;

    const std::string& feature(Dimension d) const {
        switch (d) {
        case Dimension::Color: return color;
        case Dimension::Shape: return shape;
        default: return texture;
        }
    }
    std::string& feature(Dimension d) {
        return const_cast<std::string&>(static_cast<const GameObject&>(*this).feature(d));
    }

    bool has_value(const std::string& word) const { return color == word || shape == word || texture == word; }

    /// "blue circle with stripes"
    std::string describe() const { return color + " " + shape + " with " + texture; }

    bool operator==(const GameObject&) const = default;
};

struct Item {
    std::string id;
    Condition condition = Condition::Production;
    std::array<GameObject, 3> objects;
    Dimension constant_dimension = Dimension::Texture;
    std::array<std::string, 4> words;
    /// Object index (production) or word index (interpretation).
    std::size_t trigger = 0;
    /// Category of each option: words for production, objects for interpretation.
    std::vector<ResponseCategory> categories;

    std::size_t option_count() const { return condition == Condition::Production ? 4 : 3; }
};

/// Option strings as a chooser sees them: words, or "the <object>".
inline std::vector<std::string> option_texts(const Item& item) {
    std::vector<std::string> out;
    if (item.condition == Condition::Production) {
        out.assign(item.words.begin(), item.words.end());
    } else {
        for (const auto& o : item.objects) out.push_back("the " + o.describe());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Semantics

/// truth[s][u] = 1 iff word u names a feature value of object s.
struct SemanticsMatrix {
    std::array<std::array<int, 4>, 3> truth{};

    int operator()(std::size_t s, std::size_t u) const { return truth[s][u]; }
    int column_sum(std::size_t u) const { return truth[0][u] + truth[1][u] + truth[2][u]; }
    int row_sum(std::size_t s) const { return truth[s][0] + truth[s][1] + truth[s][2] + truth[s][3]; }
    bool operator==(const SemanticsMatrix&) const = default;
};

inline SemanticsMatrix raw_semantics(const std::array<GameObject, 3>& objects, const std::array<std::string, 4>& words) {
    SemanticsMatrix m;
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t u = 0; u < 4; ++u) m.truth[s][u] = objects[s].has_value(words[u]) ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// Structure

namespace detail {

inline std::vector<Dimension> constant_dimensions(const std::array<GameObject, 3>& objs) {
    std::vector<Dimension> out;
    for (auto d : kDimensions)
        if (objs[0].feature(d) == objs[1].feature(d) && objs[1].feature(d) == objs[2].feature(d)) out.push_back(d);
    return out;
}

inline std::size_t distinct_values(const std::array<GameObject, 3>& objs, Dimension d) {
    std::set<std::string> s;
    for (const auto& o : objs) s.insert(o.feature(d));
    return s.size();
}

/// Number of varying features of object i that some other object shares.
inline int shared_features(const std::array<GameObject, 3>& objs, std::size_t i, Dimension constant) {
    int n = 0;
    for (auto d : kDimensions) {
        if (d == constant) continue;
        for (std::size_t j = 0; j < 3; ++j)
            if (j != i && objs[j].feature(d) == objs[i].feature(d)) {
                ++n;
                break;
            }
    }
    return n;
}

} // namespace detail

/// Index of the object sharing both varying features, or 3 if the structure is off.
inline std::size_t middle_object(const std::array<GameObject, 3>& objs, Dimension constant) {
    std::size_t found = 3;
    for (std::size_t i = 0; i < 3; ++i) {
        if (detail::shared_features(objs, i, constant) == 2) {
            if (found != 3) return 3;
            found = i;
        }
    }
    return found;
}

/// Categories implied by the item structure and trigger, aligned with options.
/// Throws DomainError if the trigger is not a critical one.
inline std::vector<ResponseCategory> derive_categories(const Item& item) {
    const auto sem = raw_semantics(item.objects, item.words);
    std::vector<ResponseCategory> out;
    if (item.condition == Condition::Production) {
        const std::size_t s = item.trigger;
        if (s >= 3) throw DomainError("production trigger must be an object index < 3");
        int targets = 0, competitors = 0;
        for (std::size_t u = 0; u < 4; ++u) {
            if (!sem(s, u)) {
                out.push_back(ResponseCategory::Distractor);
            } else if (sem.column_sum(u) == 1) {
                out.push_back(ResponseCategory::Target);
                ++targets;
            } else if (sem.column_sum(u) == 2) {
                out.push_back(ResponseCategory::Competitor);
                ++competitors;
            } else {
                throw DomainError("word '" + item.words[u] + "' is true of all three objects");
            }
        }
        if (targets != 1 || competitors != 1)
            throw DomainError("production trigger needs exactly one unique and one shared true word");
    } else {
        const std::size_t u = item.trigger;
        if (u >= 4) throw DomainError("interpretation trigger must be a word index < 4");
        if (sem.column_sum(u) != 2) throw DomainError("interpretation trigger word must be true of exactly two objects");
        const std::size_t mid = middle_object(item.objects, item.constant_dimension);
        if (mid == 3 || !sem(mid, u)) throw DomainError("interpretation trigger word must be true of the middle object");
        for (std::size_t s = 0; s < 3; ++s) {
            if (s == mid)
                out.push_back(ResponseCategory::Target);
            else if (sem(s, u))
                out.push_back(ResponseCategory::Competitor);
            else
                out.push_back(ResponseCategory::Distractor);
        }
    }
    return out;
}

/// Empty iff every structural invariant holds.
inline std::vector<std::string> validate_item(const Item& item, const Vocabulary& vocab = {}) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < 3; ++i)
        for (auto d : kDimensions)
            if (!vocab.contains(d, item.objects[i].feature(d)))
                v.push_back("object " + std::to_string(i) + " has " + to_string(d) + " '" +
                            item.objects[i].feature(d) + "' outside the vocabulary");

    const auto constants = detail::constant_dimensions(item.objects);
    if (constants.size() != 1) {
        v.push_back("expected exactly one constant dimension, found " + std::to_string(constants.size()));
        return v;
    }
    if (constants.front() != item.constant_dimension)
        v.push_back("declared constant dimension " + to_string(item.constant_dimension) + " but " +
                    to_string(constants.front()) + " is constant");
    const Dimension constant = constants.front();
    for (auto d : kDimensions)
        if (d != constant && detail::distinct_values(item.objects, d) != 2)
            v.push_back(to_string(d) + " must take exactly 2 values");
    if (!v.empty()) return v;

    int unique_holders = 0;
    for (std::size_t i = 0; i < 3; ++i)
        if (detail::shared_features(item.objects, i, constant) == 1) ++unique_holders;
    if (middle_object(item.objects, constant) == 3 || unique_holders != 2)
        v.push_back("objects do not form the middle/unique-feature configuration");

    std::multiset<std::string> expected, got(item.words.begin(), item.words.end());
    for (auto d : kDimensions) {
        if (d == constant) continue;
        std::set<std::string> vals;
        for (const auto& o : item.objects) vals.insert(o.feature(d));
        expected.insert(vals.begin(), vals.end());
    }
    if (expected != got) v.push_back("words must be exactly the four varying feature values");
    if (!v.empty()) return v;

    try {
        const auto cats = derive_categories(item);
        if (item.categories != cats) v.push_back("category labels disagree with the item structure");
    } catch (const DomainError& e) {
        v.push_back(e.what());
    }
    return v;
}

inline void require_valid(const Item& item, const Vocabulary& vocab = {}) {
    const auto problems = validate_item(item, vocab);
    if (!problems.empty()) throw DomainError("invalid item '" + item.id + "': " + problems.front());
}

inline SemanticsMatrix semantics(const Item& item) {
    require_valid(item);
    return raw_semantics(item.objects, item.words);
}

// ---------------------------------------------------------------------------
// Generation

/// Feature content comes from one RNG stream and presentation order from
/// another, so reshuffling orders never changes which objects appear.
inline Item generate_item(std::uint64_t seed, Condition condition, const Vocabulary& vocab = {}) {
    Rng features = make_rng(seed, 1);
    Rng order = make_rng(seed, 2);

    const Dimension constant = kDimensions[uniform_index(features, 3)];
    std::array<Dimension, 2> varying{};
    {
        std::size_t k = 0;
        for (auto d : kDimensions)
            if (d != constant) varying[k++] = d;
    }
    auto pick_two = [&](Dimension d) {
        std::array<std::size_t, 4> idx = {0, 1, 2, 3};
        shuffle(std::span<std::size_t>(idx), features);
        return std::pair{vocab.of(d)[idx[0]], vocab.of(d)[idx[1]]};
    };
    const std::string c = vocab.of(constant)[uniform_index(features, 4)];
    const auto [a1, a2] = pick_two(varying[0]);
    const auto [b1, b2] = pick_two(varying[1]);

    auto make = [&](const std::string& a, const std::string& b) {
        GameObject o;
        o.feature(constant) = c;
        o.feature(varying[0]) = a;
        o.feature(varying[1]) = b;
        return o;
    };
    // middle, left (unique a2), right (unique b2)
    std::array<GameObject, 3> canonical = {make(a1, b1), make(a2, b1), make(a1, b2)};
    const bool trigger_left = uniform_index(features, 2) == 0;
    const std::string shared_word = uniform_index(features, 2) == 0 ? a1 : b1;
    const GameObject trigger_object = trigger_left ? canonical[1] : canonical[2];

    Item item;
    item.id = std::string(condition == Condition::Production ? "prd-" : "int-") + std::to_string(seed);
    item.condition = condition;
    item.constant_dimension = constant;
    item.objects = canonical;
    item.words = {a1, a2, b1, b2};
    shuffle(std::span<GameObject>(item.objects), order);
    shuffle(std::span<std::string>(item.words), order);

    if (condition == Condition::Production) {
        item.trigger = static_cast<std::size_t>(
            std::find(item.objects.begin(), item.objects.end(), trigger_object) - item.objects.begin());
    } else {
        item.trigger = static_cast<std::size_t>(
            std::find(item.words.begin(), item.words.end(), shared_word) - item.words.begin());
    }
    item.categories = derive_categories(item);
    return item;
}

/// The running example: green square, blue square, blue circle (all with stripes).
inline Item example_item(Condition condition) {
    Item item;
    item.id = condition == Condition::Production ? "example-prd" : "example-int";
    item.condition = condition;
    item.objects = {GameObject{"green", "square", "stripes"}, GameObject{"blue", "square", "stripes"},
                    GameObject{"blue", "circle", "stripes"}};
    item.constant_dimension = Dimension::Texture;
    item.words = {"green", "blue", "square", "circle"};
    item.trigger = condition == Condition::Production ? 2 : 1; // blue circle / "blue"
    item.categories = derive_categories(item);
    return item;
}

// ---------------------------------------------------------------------------
// Prompt rendering

/// Placeholders: {objects}, {trigger}, {options}.
struct PromptTemplates {
    std::string production =
        "Your task is to play a conversation game. There are three objects that you and your friend can see. "
        "You have to choose a single word to identify one of the three objects for your friend.\n"
        "\n"
        "The three objects are:\n"
        "\n"
        "{objects}\n"
        "\n"
        "Your task is to make your friend pick out the following target object:\n"
        "\n"
        "{trigger}\n"
        "\n"
        "Which of the following words would you choose:\n"
        "\n"
        "{options}\n"
        "\n"
        "Your answer:\n"
        "\n"
        "I would choose the word";

    // Not taken from a published listing; mirrors the production wording.
    std::string interpretation =
        "Your task is to play a conversation game. There are three objects that you and your friend can see. "
        "Your friend wants you to pick out one of the three objects and uses a single word to identify it.\n"
        "\n"
        "The three objects are:\n"
        "\n"
        "{objects}\n"
        "\n"
        "Your friend uses the word:\n"
        "\n"
        "{trigger}\n"
        "\n"
        "Which of the following objects would you pick:\n"
        "\n"
        "{options}\n"
        "\n"
        "Your answer:\n"
        "\n"
        "I would pick";
};

namespace detail {
inline std::string join_lines(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += '\n';
        out += xs[i];
    }
    return out;
}

inline void replace_all(std::string& s, std::string_view key, const std::string& value) {
    for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
        s.replace(pos, key.size(), value);
}
} // namespace detail

inline std::string render_prompt(const Item& item, const PromptTemplates& templates = {}) {
    require_valid(item);
    std::vector<std::string> objects;
    for (const auto& o : item.objects) objects.push_back("a " + o.describe());
    std::string out;
    std::string trigger;
    if (item.condition == Condition::Production) {
        out = templates.production;
        trigger = "the " + item.objects[item.trigger].describe();
    } else {
        out = templates.interpretation;
        trigger = item.words[item.trigger];
    }
    // {options} goes last so option text can never be re-substituted.
    detail::replace_all(out, "{objects}", detail::join_lines(objects));
    detail::replace_all(out, "{trigger}", trigger);
    detail::replace_all(out, "{options}", detail::join_lines(option_texts(item)));
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const GameObject& o) {
    j = {{"color", o.color}, {"shape", o.shape}, {"texture", o.texture}};
}
inline void from_json(const nlohmann::json& j, GameObject& o) {
    j.at("color").get_to(o.color);
    j.at("shape").get_to(o.shape);
    j.at("texture").get_to(o.texture);
}

inline nlohmann::json categories_json(const Item& item) {
    const auto opts = option_texts(item);
    nlohmann::json j = {{"distractor", nlohmann::json::array()}};
    for (std::size_t i = 0; i < item.categories.size() && i < opts.size(); ++i) {
        if (item.categories[i] == ResponseCategory::Distractor)
            j["distractor"].push_back(opts[i]);
        else
            j[to_string(item.categories[i])] = opts[i];
    }
    return j;
}

inline nlohmann::json item_to_json(const Item& item, bool with_prompt = false, const PromptTemplates& templates = {}) {
    nlohmann::json j;
    j["id"] = item.id;
    j["condition"] = to_string(item.condition);
    j["objects"] = item.objects;
    j["constant_dimension"] = to_string(item.constant_dimension);
    j["words"] = item.words;
    j["trigger"] = item.trigger;
    j["categories"] = categories_json(item);
    if (with_prompt) j["prompt"] = render_prompt(item, templates);
    return j;
}

inline Item item_from_json(const nlohmann::json& j) {
    Item item;
    j.at("id").get_to(item.id);
    item.condition = condition_from_string(j.at("condition").get<std::string>());
    item.objects = j.at("objects").get<std::array<GameObject, 3>>();
    item.constant_dimension = dimension_from_string(j.at("constant_dimension").get<std::string>());
    item.words = j.at("words").get<std::array<std::string, 4>>();
    item.trigger = j.at("trigger").get<std::size_t>();

    const auto opts = option_texts(item);
    item.categories.assign(opts.size(), ResponseCategory::Distractor);
    const auto& cats = j.at("categories");
    auto mark = [&](const std::string& text, ResponseCategory c) {
        auto it = std::find(opts.begin(), opts.end(), text);
        if (it == opts.end()) throw InvalidArgument("item '" + item.id + "': category option '" + text + "' unknown");
        item.categories[static_cast<std::size_t>(it - opts.begin())] = c;
    };
    mark(cats.at("target").get<std::string>(), ResponseCategory::Target);
    mark(cats.at("competitor").get<std::string>(), ResponseCategory::Competitor);
    return item;
}

inline nlohmann::json vocabulary_to_json(const Vocabulary& v) {
    return {{"colors", v.of(Dimension::Color)}, {"shapes", v.of(Dimension::Shape)}, {"textures", v.of(Dimension::Texture)}};
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
    Vocabulary v;
    if (j.contains("colors")) v.values[0] = j.at("colors").get<std::array<std::string, 4>>();
    if (j.contains("shapes")) v.values[1] = j.at("shapes").get<std::array<std::string, 4>>();
    if (j.contains("textures")) v.values[2] = j.at("textures").get<std::array<std::string, 4>>();
    const auto problems = v.problems();
    if (!problems.empty()) throw InvalidArgument("vocabulary: " + problems.front());
    return v;
}

} // namespace pragcheck::refgame
