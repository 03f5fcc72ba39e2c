#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "defdis/error.hpp"

namespace defdis::corpus {

// The 12 Definition Semantic Roles plus None for unannotated tokens.
enum class Role : std::uint8_t {
    kSupertype,
    kDifferentiaQuality,
    kDifferentiaEvent,
    kEventLocation,
    kEventTime,
    kOriginLocation,
    kQualityModifier,
    kPurpose,
    kAssociatedFact,
    kAccessoryDeterminer,
    kAccessoryQuality,
    kRoleParticle,
    kNone,
};

inline constexpr std::size_t kNumRoles = 13;

const std::string& role_name(Role r);
// Throws ParseError for anything outside the closed role set.
Role parse_role(const std::string& name);

// One role-annotated definition sentence.
struct DefinitionRecord {
    std::string definiendum;
    std::vector<std::string> tokens;
    std::vector<Role> roles;
    std::string source;
};

// JSON-lines corpus I/O. Each line: {"definiendum": str, "tokens": [str],
// "roles": [str], "source"?: str}. Parse failures name the line.
std::vector<DefinitionRecord> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::vector<DefinitionRecord>& records,
                const std::filesystem::path& path);

// Token vocabulary with fixed reserved ids.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    // Tokens with frequency < min_freq map to UNK. Ids are assigned by
    // (frequency desc, token asc), so two builds over the same corpus agree.
    static Vocab build(const std::vector<DefinitionRecord>& records,
                       int min_freq);
    static Vocab from_tokens(const std::vector<std::string>& tokens);

    int id(const std::string& token) const;
    const std::string& token(int id) const;
    std::size_t size() const { return id_to_token_.size(); }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// BOS/EOS-framed token ids plus aligned role ids (None on the frame).
std::pair<std::vector<int>, std::vector<int>> encode_record(
    const DefinitionRecord& record, const Vocab& vocab);
std::vector<std::string> decode_tokens(const std::vector<int>& ids,
                                       const Vocab& vocab);

// A named set of generative factors, each a disjoint subset of roles.
struct Factor {
    std::string name;
    std::vector<Role> roles;
};

struct FactorGrouping {
    std::string name;
    std::vector<Factor> factors;

    // Disjointness and the >= 2 factors floor.
    void validate() const;

    static FactorGrouping from_json_text(const std::string& text);
    static FactorGrouping load(const std::filesystem::path& path);
    std::string to_json_text() const;
};

// The four groupings shipped with the library, factor counts 7/5/4/4.
const std::vector<FactorGrouping>& builtin_groupings();
// name is "group1" .. "group4" (case-insensitive); throws ConfigError.
const FactorGrouping& builtin_grouping(const std::string& name);

enum class FactorEncoding {
    kPresence,  // 1 if any token carries a role from the subset
    kCount,     // number of such tokens
};

struct FactorMatrix {
    std::vector<std::string> factor_names;
    std::vector<int> cardinalities;
    std::vector<bool> degenerate;  // < 2 distinct values over the corpus
    std::size_t n = 0;
    std::vector<int> values;  // n x K row-major

    int at(std::size_t i, std::size_t k) const {
        return values[i * factor_names.size() + k];
    }
    std::size_t factor_count() const { return factor_names.size(); }
    std::vector<int> column(std::size_t k) const;
};

FactorMatrix factor_matrix(const std::vector<DefinitionRecord>& records,
                           const FactorGrouping& grouping,
                           FactorEncoding encoding = FactorEncoding::kPresence);

// --- Synthetic corpora with known factors -------------------------------

struct SynthTemplate {
    std::vector<std::string> tokens;
    std::vector<Role> roles;
};

// One slot of the sentence. A factor slot samples a value and then one of
// that value's templates; a filler slot (factor_name empty) just samples a
// template and is not recorded as a factor.
struct SynthSlot {
    std::string factor_name;
    std::vector<Role> roles;
    std::vector<std::vector<SynthTemplate>> value_templates;

    bool is_factor() const { return !factor_name.empty(); }
};

struct SynthSpec {
    std::vector<SynthSlot> slots;
    std::vector<std::string> definienda;
    std::size_t count = 0;

    void validate() const;
    // Grouping mapping each factor to its declared role subset.
    FactorGrouping induced_grouping() const;

    static SynthSpec from_json_text(const std::string& text);
    static SynthSpec load(const std::filesystem::path& path);
    std::string to_json_text() const;
};

struct SynthResult {
    std::vector<DefinitionRecord> records;
    FactorMatrix truth;
};

SynthResult synth_corpus(const SynthSpec& spec, std::uint64_t seed);

// 4 binary factors over definition-style templates; the stock corpus used
// by the smoke and evaluation suites.
SynthSpec definitional_synth_spec(std::size_t count);

struct SplitResult {
    std::vector<DefinitionRecord> train;
    std::vector<DefinitionRecord> valid;
    std::vector<DefinitionRecord> test;
};

// Deterministic shuffled partition; fractions must be non-negative and sum
// to 1 within 1e-9.
SplitResult split(const std::vector<DefinitionRecord>& records,
                  const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace defdis::corpus
