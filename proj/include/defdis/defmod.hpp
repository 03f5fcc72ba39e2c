#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defdis/corpus.hpp"
#include "defdis/vae.hpp"

namespace defdis::defmod {

// Separator between the definiendum prefix and the definition body.
inline constexpr const char* kSepToken = "<sep>";

// Rewrites each record into the seed form [definiendum, <sep>, tokens...]
// with NONE roles over the prefix. Empty definienda are rejected.
std::vector<corpus::DefinitionRecord> seeded_records(
    const std::vector<corpus::DefinitionRecord>& records);

// Vocabulary over the seeded form of the corpus (so definienda and the
// separator are first-class tokens).
corpus::Vocab build_seeded_vocab(
    const std::vector<corpus::DefinitionRecord>& records, int min_freq);

// Trains a u or s variant on the seed setup; c is rejected.
std::pair<vae::VaeModel, vae::TrainLog> train_seeded(
    const vae::VaeConfig& cfg,
    const std::vector<corpus::DefinitionRecord>& train_records,
    const std::vector<corpus::DefinitionRecord>& valid_records,
    corpus::Vocab vocab);

enum class GenMode { kSample, kGreedy };
GenMode parse_gen_mode(const std::string& name);

struct GenerationConfig {
    int max_len = 24;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    GenMode mode = GenMode::kSample;

    void validate() const;
};

// Encodes [BOS, word, <sep>] to its posterior mean, then decodes by
// temperature-scaled sampling (or argmax) until EOS or max_len. Output
// never contains PAD or BOS. Deterministic given the seed.
std::vector<std::string> generate_definition(const vae::VaeModel& model,
                                             const std::string& word,
                                             const GenerationConfig& cfg);

// exp(mean per-token NLL) under teacher forcing at the posterior mean.
// BOS is never a target; EOS is included. On seeded records only the
// positions after the separator are averaged.
double perplexity(const vae::VaeModel& model,
                  const std::vector<corpus::DefinitionRecord>& records);

// Corpus-level BLEU-4, one reference per candidate, brevity penalty, and
// add-one smoothing on n-gram orders with zero matches.
double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references);

struct EvalScores {
    double perplexity = 0.0;
    double bleu = 0.0;

    std::string to_json_text() const;  // records the smoothing choice
};

// Perplexity over the records plus BLEU of generated definitions against
// the reference definition bodies.
EvalScores evaluate(const vae::VaeModel& model,
                    const std::vector<corpus::DefinitionRecord>& records,
                    const GenerationConfig& cfg);

}  // namespace defdis::defmod
