#include "defdis/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace defdis::corpus {

using nlohmann::json;

namespace {

const std::array<std::string, kNumRoles> kRoleNames = {
    "SUPERTYPE",
    "DIFFERENTIA_QUALITY",
    "DIFFERENTIA_EVENT",
    "EVENT_LOCATION",
    "EVENT_TIME",
    "ORIGIN_LOCATION",
    "QUALITY_MODIFIER",
    "PURPOSE",
    "ASSOCIATED_FACT",
    "ACCESSORY_DETERMINER",
    "ACCESSORY_QUALITY",
    "ROLE_PARTICLE",
    "NONE",
};

}  // namespace

const std::string& role_name(Role r) {
    return kRoleNames[static_cast<std::size_t>(r)];
}

Role parse_role(const std::string& name) {
    for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
        if (kRoleNames[i] == name) return static_cast<Role>(i);
    }
    throw ParseError("unknown role \"" + name + "\"");
}

std::vector<DefinitionRecord> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file " + path.string());
    }
    std::vector<DefinitionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" +
                                  std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + ": malformed JSON: " + e.what());
        }
        try {
            DefinitionRecord rec;
            rec.definiendum = obj.at("definiendum").get<std::string>();
            rec.tokens = obj.at("tokens").get<std::vector<std::string>>();
            for (const auto& r : obj.at("roles")) {
                rec.roles.push_back(parse_role(r.get<std::string>()));
            }
            if (obj.contains("source")) {
                rec.source = obj.at("source").get<std::string>();
            }
            if (rec.tokens.empty()) {
                throw ParseError("tokens must be non-empty");
            }
            if (rec.definiendum.empty()) {
                throw ParseError("definiendum must be non-empty");
            }
            if (rec.roles.size() != rec.tokens.size()) {
                throw ParseError(std::to_string(rec.roles.size()) + " roles for " +
                                 std::to_string(rec.tokens.size()) + " tokens");
            }
            records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return records;
}

void save_jsonl(const std::vector<DefinitionRecord>& records,
                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write corpus file " + path.string());
    }
    for (const DefinitionRecord& rec : records) {
        json obj;
        obj["definiendum"] = rec.definiendum;
        obj["tokens"] = rec.tokens;
        json roles = json::array();
        for (Role r : rec.roles) roles.push_back(role_name(r));
        obj["roles"] = std::move(roles);
        if (!rec.source.empty()) obj["source"] = rec.source;
        out << obj.dump() << "\n";
    }
}

Vocab Vocab::build(const std::vector<DefinitionRecord>& records, int min_freq) {
    if (min_freq < 1) {
        throw ConfigError("min_freq must be >= 1, got " + std::to_string(min_freq));
    }
    std::map<std::string, std::size_t> freq;
    for (const DefinitionRecord& rec : records) {
        for (const std::string& tok : rec.tokens) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : freq) {
        if (n >= static_cast<std::size_t>(min_freq)) kept.emplace_back(tok, n);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    v.id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (auto& [tok, n] : kept) v.id_to_token_.push_back(tok);
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        v.token_to_id_[v.id_to_token_[i]] = static_cast<int>(i);
    }
    return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    v.id_to_token_ = tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        v.token_to_id_[tokens[i]] = static_cast<int>(i);
    }
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw IndexError("token id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::pair<std::vector<int>, std::vector<int>> encode_record(
    const DefinitionRecord& record, const Vocab& vocab) {
    std::vector<int> token_ids;
    std::vector<int> role_ids;
    token_ids.reserve(record.tokens.size() + 2);
    role_ids.reserve(record.tokens.size() + 2);
    token_ids.push_back(Vocab::kBos);
    role_ids.push_back(static_cast<int>(Role::kNone));
    for (std::size_t i = 0; i < record.tokens.size(); ++i) {
        token_ids.push_back(vocab.id(record.tokens[i]));
        role_ids.push_back(static_cast<int>(record.roles[i]));
    }
    token_ids.push_back(Vocab::kEos);
    role_ids.push_back(static_cast<int>(Role::kNone));
    return {std::move(token_ids), std::move(role_ids)};
}

std::vector<std::string> decode_tokens(const std::vector<int>& ids,
                                       const Vocab& vocab) {
    std::vector<std::string> out;
    for (int id : ids) {
        if (id == Vocab::kBos || id == Vocab::kEos || id == Vocab::kPad) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

void FactorGrouping::validate() const {
    if (factors.size() < 2) {
        throw ConfigError("grouping \"" + name + "\" needs at least 2 factors");
    }
    std::array<int, kNumRoles> seen{};
    for (const Factor& f : factors) {
        if (f.roles.empty()) {
            throw ConfigError("factor \"" + f.name + "\" has no roles");
        }
        for (Role r : f.roles) {
            if (r == Role::kNone) {
                throw ConfigError("factor \"" + f.name + "\" may not contain NONE");
            }
            if (seen[static_cast<std::size_t>(r)]++) {
                throw ConfigError("grouping \"" + name + "\": role " +
                                  role_name(r) + " appears in more than one factor");
            }
        }
    }
}

FactorGrouping FactorGrouping::from_json_text(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("grouping JSON: ") + e.what());
    }
    FactorGrouping g;
    try {
        g.name = obj.at("name").get<std::string>();
        for (const auto& f : obj.at("factors")) {
            Factor factor;
            factor.name = f.at("name").get<std::string>();
            for (const auto& r : f.at("roles")) {
                factor.roles.push_back(parse_role(r.get<std::string>()));
            }
            g.factors.push_back(std::move(factor));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("grouping JSON: ") + e.what());
    }
    g.validate();
    return g;
}

FactorGrouping FactorGrouping::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open grouping file " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string FactorGrouping::to_json_text() const {
    json obj;
    obj["name"] = name;
    json fs = json::array();
    for (const Factor& f : factors) {
        json jf;
        jf["name"] = f.name;
        json roles = json::array();
        for (Role r : f.roles) roles.push_back(role_name(r));
        jf["roles"] = std::move(roles);
        fs.push_back(std::move(jf));
    }
    obj["factors"] = std::move(fs);
    return obj.dump(2);
}

namespace {

// The groupings are configuration data; these are the same JSON documents
// that ship under data/groupings/.
constexpr const char* kGroup1 = R"({
  "name": "group1",
  "factors": [
    {"name": "supertype", "roles": ["SUPERTYPE"]},
    {"name": "qualification", "roles": ["DIFFERENTIA_QUALITY"]},
    {"name": "location", "roles": ["EVENT_LOCATION", "ORIGIN_LOCATION"]},
    {"name": "event", "roles": ["DIFFERENTIA_EVENT", "EVENT_TIME"]},
    {"name": "modification", "roles": ["QUALITY_MODIFIER", "ACCESSORY_QUALITY"]},
    {"name": "declaration", "roles": ["PURPOSE", "ASSOCIATED_FACT"]},
    {"name": "supplementation", "roles": ["ACCESSORY_DETERMINER", "ROLE_PARTICLE"]}
  ]
})";

constexpr const char* kGroup2 = R"({
  "name": "group2",
  "factors": [
    {"name": "supertype", "roles": ["SUPERTYPE"]},
    {"name": "qualification", "roles": ["DIFFERENTIA_QUALITY", "QUALITY_MODIFIER", "ACCESSORY_QUALITY"]},
    {"name": "location", "roles": ["EVENT_LOCATION"]},
    {"name": "event", "roles": ["DIFFERENTIA_EVENT", "EVENT_TIME"]},
    {"name": "declaration", "roles": ["PURPOSE", "ASSOCIATED_FACT"]}
  ]
})";

constexpr const char* kGroup3 = R"({
  "name": "group3",
  "factors": [
    {"name": "qualification", "roles": ["DIFFERENTIA_QUALITY", "QUALITY_MODIFIER", "ACCESSORY_QUALITY"]},
    {"name": "event", "roles": ["DIFFERENTIA_EVENT", "EVENT_TIME"]},
    {"name": "location", "roles": ["EVENT_LOCATION", "ORIGIN_LOCATION"]},
    {"name": "declaration", "roles": ["PURPOSE", "ASSOCIATED_FACT", "ACCESSORY_DETERMINER"]}
  ]
})";

constexpr const char* kGroup4 = R"({
  "name": "group4",
  "factors": [
    {"name": "qualification", "roles": ["DIFFERENTIA_QUALITY", "QUALITY_MODIFIER", "ACCESSORY_QUALITY"]},
    {"name": "location", "roles": ["EVENT_LOCATION"]},
    {"name": "event", "roles": ["DIFFERENTIA_EVENT", "EVENT_TIME"]},
    {"name": "declaration", "roles": ["PURPOSE", "ASSOCIATED_FACT"]}
  ]
})";

}  // namespace

const std::vector<FactorGrouping>& builtin_groupings() {
    static const std::vector<FactorGrouping> groupings = {
        FactorGrouping::from_json_text(kGroup1),
        FactorGrouping::from_json_text(kGroup2),
        FactorGrouping::from_json_text(kGroup3),
        FactorGrouping::from_json_text(kGroup4),
    };
    return groupings;
}

const FactorGrouping& builtin_grouping(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    for (const FactorGrouping& g : builtin_groupings()) {
        if (g.name == lower) return g;
    }
    throw ConfigError("unknown builtin grouping \"" + name +
                      "\" (expected group1..group4)");
}

std::vector<int> FactorMatrix::column(std::size_t k) const {
    std::vector<int> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = at(i, k);
    return col;
}

FactorMatrix factor_matrix(const std::vector<DefinitionRecord>& records,
                           const FactorGrouping& grouping,
                           FactorEncoding encoding) {
    grouping.validate();
    const std::size_t k = grouping.factors.size();
    // role -> factor index, or -1.
    std::array<int, kNumRoles> owner;
    owner.fill(-1);
    for (std::size_t f = 0; f < k; ++f) {
        for (Role r : grouping.factors[f].roles) {
            owner[static_cast<std::size_t>(r)] = static_cast<int>(f);
        }
    }
    FactorMatrix m;
    m.n = records.size();
    for (const Factor& f : grouping.factors) m.factor_names.push_back(f.name);
    m.values.assign(m.n * k, 0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const DefinitionRecord& rec = records[i];
        if (rec.roles.size() != rec.tokens.size()) {
            throw DataError("record " + std::to_string(i) +
                            ": roles/tokens length mismatch");
        }
        for (Role r : rec.roles) {
            const int f = owner[static_cast<std::size_t>(r)];
            if (f < 0) continue;
            int& cell = m.values[i * k + static_cast<std::size_t>(f)];
            cell = encoding == FactorEncoding::kPresence ? 1 : cell + 1;
        }
    }
    m.cardinalities.assign(k, 0);
    m.degenerate.assign(k, false);
    for (std::size_t f = 0; f < k; ++f) {
        int max_v = 0;
        bool any_diff = false;
        const int first = m.n ? m.at(0, f) : 0;
        for (std::size_t i = 0; i < m.n; ++i) {
            max_v = std::max(max_v, m.at(i, f));
            if (m.at(i, f) != first) any_diff = true;
        }
        m.cardinalities[f] =
            encoding == FactorEncoding::kPresence ? 2 : max_v + 1;
        m.degenerate[f] = !any_diff;
        if (m.degenerate[f]) m.cardinalities[f] = max_v + 1;
    }
    return m;
}

}  // namespace defdis::corpus
