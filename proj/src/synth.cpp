#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "defdis/corpus.hpp"
#include "defdis/rng.hpp"

namespace defdis::corpus {

using nlohmann::json;

namespace {

json template_to_json(const SynthTemplate& t) {
    json obj;
    obj["tokens"] = t.tokens;
    json roles = json::array();
    for (Role r : t.roles) roles.push_back(role_name(r));
    obj["roles"] = std::move(roles);
    return obj;
}

SynthTemplate template_from_json(const json& obj) {
    SynthTemplate t;
    t.tokens = obj.at("tokens").get<std::vector<std::string>>();
    for (const auto& r : obj.at("roles")) {
        t.roles.push_back(parse_role(r.get<std::string>()));
    }
    if (t.roles.size() != t.tokens.size()) {
        throw ConfigError("synthetic template: roles/tokens length mismatch");
    }
    return t;
}

bool contains_role(const SynthTemplate& t, const std::vector<Role>& subset) {
    for (Role r : t.roles) {
        for (Role s : subset) {
            if (r == s) return true;
        }
    }
    return false;
}

}  // namespace

void SynthSpec::validate() const {
    if (count == 0) throw ConfigError("synthetic spec: count must be positive");
    if (definienda.empty()) {
        throw ConfigError("synthetic spec: definienda pool is empty");
    }
    std::size_t n_factors = 0;
    std::array<int, kNumRoles> owner;
    owner.fill(-1);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const SynthSlot& slot = slots[s];
        if (!slot.is_factor()) continue;
        ++n_factors;
        if (slot.roles.empty()) {
            throw ConfigError("factor \"" + slot.factor_name + "\" has no roles");
        }
        if (slot.value_templates.size() < 2) {
            throw ConfigError("factor \"" + slot.factor_name +
                              "\" is degenerate: needs at least 2 values");
        }
        for (Role r : slot.roles) {
            if (owner[static_cast<std::size_t>(r)] >= 0) {
                throw ConfigError("role " + role_name(r) +
                                  " appears in more than one factor");
            }
            owner[static_cast<std::size_t>(r)] = static_cast<int>(s);
        }
    }
    if (n_factors == 0) {
        throw ConfigError("synthetic spec: no factor slots");
    }
    bool some_slot_always_emits = false;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const SynthSlot& slot = slots[s];
        bool always_emits = !slot.value_templates.empty();
        for (std::size_t v = 0; v < slot.value_templates.size(); ++v) {
            const auto& templates = slot.value_templates[v];
            if (templates.empty()) {
                throw ConfigError("slot " + std::to_string(s) +
                                  ": empty template set for value " +
                                  std::to_string(v));
            }
            for (const SynthTemplate& t : templates) {
                if (t.tokens.size() != t.roles.size()) {
                    throw ConfigError("slot " + std::to_string(s) +
                                      ": roles/tokens length mismatch");
                }
                if (t.tokens.empty()) always_emits = false;
                // A template may only carry roles of its own factor; value 0
                // must carry none of them. Otherwise the returned truth
                // matrix would not be reproducible from the records.
                for (Role r : t.roles) {
                    const int own = owner[static_cast<std::size_t>(r)];
                    if (own < 0) continue;
                    if (own != static_cast<int>(s)) {
                        throw ConfigError(
                            "slot " + std::to_string(s) + ": role " + role_name(r) +
                            " belongs to factor \"" +
                            slots[static_cast<std::size_t>(own)].factor_name +
                            "\"");
                    }
                    if (v == 0) {
                        throw ConfigError("factor \"" + slot.factor_name +
                                          "\": value 0 template carries role " +
                                          role_name(r));
                    }
                }
                if (v > 0 && slot.is_factor() && !contains_role(t, slot.roles)) {
                    throw ConfigError("factor \"" + slot.factor_name + "\" value " +
                                      std::to_string(v) +
                                      ": template carries none of the factor roles");
                }
            }
        }
        if (always_emits) some_slot_always_emits = true;
    }
    if (!some_slot_always_emits) {
        throw ConfigError("synthetic spec: no slot guarantees a non-empty sentence");
    }
}

FactorGrouping SynthSpec::induced_grouping() const {
    FactorGrouping g;
    g.name = "synthetic";
    for (const SynthSlot& slot : slots) {
        if (slot.is_factor()) g.factors.push_back({slot.factor_name, slot.roles});
    }
    return g;
}

SynthSpec SynthSpec::from_json_text(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("synthetic spec JSON: ") + e.what());
    }
    SynthSpec spec;
    try {
        spec.count = obj.at("count").get<std::size_t>();
        spec.definienda = obj.at("definienda").get<std::vector<std::string>>();
        for (const auto& jslot : obj.at("slots")) {
            SynthSlot slot;
            if (jslot.contains("factor")) {
                slot.factor_name = jslot.at("factor").get<std::string>();
                for (const auto& r : jslot.at("roles")) {
                    slot.roles.push_back(parse_role(r.get<std::string>()));
                }
                for (const auto& value : jslot.at("values")) {
                    std::vector<SynthTemplate> templates;
                    for (const auto& t : value) {
                        templates.push_back(template_from_json(t));
                    }
                    slot.value_templates.push_back(std::move(templates));
                }
            } else {
                std::vector<SynthTemplate> templates;
                for (const auto& t : jslot.at("templates")) {
                    templates.push_back(template_from_json(t));
                }
                slot.value_templates.push_back(std::move(templates));
            }
            spec.slots.push_back(std::move(slot));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("synthetic spec JSON: ") + e.what());
    }
    spec.validate();
    return spec;
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open synthetic spec " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string SynthSpec::to_json_text() const {
    json obj;
    obj["count"] = count;
    obj["definienda"] = definienda;
    json slots_json = json::array();
    for (const SynthSlot& slot : slots) {
        json jslot;
        if (slot.is_factor()) {
            jslot["factor"] = slot.factor_name;
            json roles = json::array();
            for (Role r : slot.roles) roles.push_back(role_name(r));
            jslot["roles"] = std::move(roles);
            json values = json::array();
            for (const auto& templates : slot.value_templates) {
                json jtemplates = json::array();
                for (const SynthTemplate& t : templates) {
                    jtemplates.push_back(template_to_json(t));
                }
                values.push_back(std::move(jtemplates));
            }
            jslot["values"] = std::move(values);
        } else {
            json jtemplates = json::array();
            for (const SynthTemplate& t : slot.value_templates.at(0)) {
                jtemplates.push_back(template_to_json(t));
            }
            jslot["templates"] = std::move(jtemplates);
        }
        slots_json.push_back(std::move(jslot));
    }
    obj["slots"] = std::move(slots_json);
    return obj.dump(2);
}

SynthResult synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    SynthResult out;
    const std::size_t n_factors = spec.induced_grouping().factors.size();
    out.truth.n = spec.count;
    for (const SynthSlot& slot : spec.slots) {
        if (slot.is_factor()) {
            out.truth.factor_names.push_back(slot.factor_name);
            out.truth.cardinalities.push_back(
                static_cast<int>(slot.value_templates.size()));
        }
    }
    out.truth.values.assign(spec.count * n_factors, 0);

    for (std::size_t i = 0; i < spec.count; ++i) {
        DefinitionRecord rec;
        rec.definiendum = spec.definienda[rng.below(spec.definienda.size())];
        rec.source = "synthetic";
        std::size_t f = 0;
        for (const SynthSlot& slot : spec.slots) {
            std::size_t v = 0;
            if (slot.is_factor()) {
                v = rng.below(slot.value_templates.size());
                out.truth.values[i * n_factors + f] = static_cast<int>(v);
                ++f;
            }
            const auto& templates = slot.value_templates[v];
            const SynthTemplate& t = templates[rng.below(templates.size())];
            rec.tokens.insert(rec.tokens.end(), t.tokens.begin(), t.tokens.end());
            rec.roles.insert(rec.roles.end(), t.roles.begin(), t.roles.end());
        }
        out.records.push_back(std::move(rec));
    }

    out.truth.degenerate.assign(n_factors, false);
    for (std::size_t f = 0; f < n_factors; ++f) {
        bool any_diff = false;
        const int first = out.truth.at(0, f);
        for (std::size_t i = 1; i < spec.count; ++i) {
            if (out.truth.at(i, f) != first) {
                any_diff = true;
                break;
            }
        }
        out.truth.degenerate[f] = !any_diff;
    }
    return out;
}

SynthSpec definitional_synth_spec(std::size_t count) {
    auto tmpl = [](std::vector<std::string> tokens, std::vector<Role> roles) {
        return SynthTemplate{std::move(tokens), std::move(roles)};
    };
    const Role dq = Role::kDifferentiaQuality;
    const Role de = Role::kDifferentiaEvent;
    const Role el = Role::kEventLocation;
    const Role pu = Role::kPurpose;
    const Role no = Role::kNone;

    SynthSpec spec;
    spec.count = count;
    spec.definienda = {"swan",  "carp",   "fern",  "lathe",  "flute", "resin",
                       "heron", "trout",  "moss",  "chisel", "viola", "amber",
                       "crane", "perch",  "ivy",   "awl",    "cello", "quartz",
                       "stork", "minnow", "reed",  "plane",  "drum",  "salt"};

    SynthSlot article;
    article.value_templates.push_back({tmpl({"a"}, {no})});
    spec.slots.push_back(article);

    // Absence values re-emit some surface forms unannotated, so the factor
    // (role presence) is not recoverable from tokens alone and supervision
    // genuinely adds information.
    SynthSlot quality;
    quality.factor_name = "qualification";
    quality.roles = {dq};
    quality.value_templates.push_back({
        tmpl({}, {}),
        tmpl({}, {}),
        tmpl({"migratory"}, {no}),
        tmpl({"small"}, {no}),
    });
    quality.value_templates.push_back({
        tmpl({"migratory"}, {dq}),
        tmpl({"aquatic"}, {dq}),
        tmpl({"small"}, {dq}),
        tmpl({"ancient"}, {dq}),
    });
    spec.slots.push_back(quality);

    SynthSlot noun;
    noun.value_templates.push_back({
        tmpl({"bird"}, {Role::kSupertype}),
        tmpl({"fish"}, {Role::kSupertype}),
        tmpl({"plant"}, {Role::kSupertype}),
        tmpl({"device"}, {Role::kSupertype}),
        tmpl({"mineral"}, {Role::kSupertype}),
        tmpl({"instrument"}, {Role::kSupertype}),
    });
    spec.slots.push_back(noun);

    SynthSlot event;
    event.factor_name = "event";
    event.roles = {de};
    event.value_templates.push_back({
        tmpl({}, {}),
        tmpl({}, {}),
        tmpl({"that", "flies"}, {no, no}),
        tmpl({"that", "grows"}, {no, no}),
    });
    event.value_templates.push_back({
        tmpl({"that", "flies"}, {no, de}),
        tmpl({"that", "swims"}, {no, de}),
        tmpl({"that", "grows"}, {no, de}),
        tmpl({"that", "spins"}, {no, de}),
    });
    spec.slots.push_back(event);

    SynthSlot location;
    location.factor_name = "location";
    location.roles = {el};
    location.value_templates.push_back({
        tmpl({}, {}),
        tmpl({}, {}),
        tmpl({"in", "water"}, {no, no}),
        tmpl({"in", "cities"}, {no, no}),
    });
    location.value_templates.push_back({
        tmpl({"in", "water"}, {no, el}),
        tmpl({"in", "forests"}, {no, el}),
        tmpl({"in", "cities"}, {no, el}),
        tmpl({"on", "coasts"}, {no, el}),
    });
    spec.slots.push_back(location);

    SynthSlot purpose;
    purpose.factor_name = "declaration";
    purpose.roles = {pu};
    purpose.value_templates.push_back({
        tmpl({}, {}),
        tmpl({}, {}),
        tmpl({"used", "for", "food"}, {no, no, no}),
        tmpl({"made", "for", "work"}, {no, no, no}),
    });
    purpose.value_templates.push_back({
        tmpl({"used", "for", "food"}, {pu, pu, pu}),
        tmpl({"used", "for", "music"}, {pu, pu, pu}),
        tmpl({"kept", "for", "study"}, {pu, pu, pu}),
        tmpl({"made", "for", "work"}, {pu, pu, pu}),
    });
    spec.slots.push_back(purpose);

    return spec;
}

SplitResult split(const std::vector<DefinitionRecord>& records,
                  const std::array<double, 3>& fractions, std::uint64_t seed) {
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw ConfigError("split fractions must be non-negative");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1, got " +
                          std::to_string(sum));
    }
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    const auto n = static_cast<double>(records.size());
    const auto b1 = static_cast<std::size_t>(std::llround(n * fractions[0]));
    const auto b2 = static_cast<std::size_t>(
        std::llround(n * (fractions[0] + fractions[1])));

    SplitResult out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const DefinitionRecord& rec = records[order[i]];
        if (i < b1) {
            out.train.push_back(rec);
        } else if (i < b2) {
            out.valid.push_back(rec);
        } else {
            out.test.push_back(rec);
        }
    }
    return out;
}

}  // namespace defdis::corpus
