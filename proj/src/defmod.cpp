#include "defdis/defmod.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include <nlohmann/json.hpp>

#include "defdis/rng.hpp"

namespace defdis::defmod {

using corpus::DefinitionRecord;
using corpus::Role;
using corpus::Vocab;
using nlohmann::json;
using vae::VaeModel;
using vae::Variant;

std::vector<DefinitionRecord> seeded_records(
    const std::vector<DefinitionRecord>& records) {
    std::vector<DefinitionRecord> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const DefinitionRecord& rec = records[i];
        if (rec.definiendum.empty()) {
            throw DataError("record " + std::to_string(i) +
                            " has no definiendum");
        }
        DefinitionRecord seeded;
        seeded.definiendum = rec.definiendum;
        seeded.source = rec.source;
        seeded.tokens.reserve(rec.tokens.size() + 2);
        seeded.roles.reserve(rec.tokens.size() + 2);
        seeded.tokens.push_back(rec.definiendum);
        seeded.roles.push_back(Role::kNone);
        seeded.tokens.push_back(kSepToken);
        seeded.roles.push_back(Role::kNone);
        seeded.tokens.insert(seeded.tokens.end(), rec.tokens.begin(),
                             rec.tokens.end());
        seeded.roles.insert(seeded.roles.end(), rec.roles.begin(),
                            rec.roles.end());
        out.push_back(std::move(seeded));
    }
    return out;
}

corpus::Vocab build_seeded_vocab(const std::vector<DefinitionRecord>& records,
                                 int min_freq) {
    return Vocab::build(seeded_records(records), min_freq);
}

std::pair<VaeModel, vae::TrainLog> train_seeded(
    const vae::VaeConfig& cfg, const std::vector<DefinitionRecord>& train_records,
    const std::vector<DefinitionRecord>& valid_records, corpus::Vocab vocab) {
    if (cfg.variant == Variant::kC) {
        throw UsageError("the seed setup trains variants u and s only");
    }
    return vae::train(cfg, seeded_records(train_records),
                      seeded_records(valid_records), std::move(vocab));
}

GenMode parse_gen_mode(const std::string& name) {
    if (name == "sample" || name == "SAMPLE") return GenMode::kSample;
    if (name == "greedy" || name == "GREEDY") return GenMode::kGreedy;
    throw ConfigError("unknown generation mode \"" + name + "\"");
}

void GenerationConfig::validate() const {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
}

std::vector<std::string> generate_definition(const VaeModel& model,
                                             const std::string& word,
                                             const GenerationConfig& cfg) {
    cfg.validate();
    const Vocab& vocab = model.vocab();
    const int word_id = vocab.id(word);
    if (word_id == Vocab::kUnk) {
        std::cerr << "defdis: definiendum \"" << word
                  << "\" is out of vocabulary, using <unk>\n";
    }
    const int sep_id = vocab.id(kSepToken);

    const std::vector<int> prefix = {Vocab::kBos, word_id, sep_id};
    const auto [mu, lv] = model.encode(prefix);

    Rng rng(cfg.seed);
    const auto ids = model.decode_tokens(
        mu, nullptr, prefix, cfg.max_len, cfg.temperature,
        cfg.mode == GenMode::kGreedy, &rng);
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

double perplexity(const VaeModel& model,
                  const std::vector<DefinitionRecord>& records) {
    if (records.empty()) throw UsageError("perplexity needs records");
    const int sep_id = model.vocab().id(kSepToken);
    const auto encoded = vae::encode_records(records, model.vocab());
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const vae::EncodedRecord& rec : encoded) {
        // On seeded sequences, average only the definition body: targets
        // strictly after the separator.
        std::size_t from = 0;
        if (sep_id != Vocab::kUnk) {
            for (std::size_t t = 1; t + 1 < rec.token_ids.size(); ++t) {
                if (rec.token_ids[t] == sep_id) {
                    from = t;  // target index t is token_ids[t+1]
                    break;
                }
            }
        }
        const auto [sum, count] = model.teacher_forced_nll(rec, from);
        nll += sum;
        tokens += count;
    }
    if (tokens == 0) throw DataError("perplexity: no scored tokens");
    return std::exp(nll / static_cast<double>(tokens));
}

namespace {

std::map<std::vector<std::string>, long long> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
    std::map<std::vector<std::string>, long long> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references) {
    if (candidates.size() != references.size()) {
        throw DimensionError("bleu: candidate/reference counts disagree");
    }
    if (candidates.empty()) throw UsageError("bleu needs at least one pair");

    long long cand_len = 0, ref_len = 0;
    std::array<long long, 4> matches{};
    std::array<long long, 4> totals{};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_len += static_cast<long long>(candidates[i].size());
        ref_len += static_cast<long long>(references[i].size());
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto cand = ngram_counts(candidates[i], n);
            const auto ref = ngram_counts(references[i], n);
            for (const auto& [gram, count] : cand) {
                totals[n - 1] += count;
                const auto it = ref.find(gram);
                if (it != ref.end()) {
                    matches[n - 1] += std::min(count, it->second);
                }
            }
        }
    }

    double log_precision = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        double p;
        if (matches[n] > 0) {
            p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        } else {
            // add-one smoothing on orders with zero matches
            p = 1.0 / static_cast<double>(totals[n] + 1);
        }
        log_precision += 0.25 * std::log(p);
    }
    if (cand_len == 0) return 0.0;
    const double bp =
        cand_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) /
                                 static_cast<double>(cand_len));
    return bp * std::exp(log_precision);
}

std::string EvalScores::to_json_text() const {
    json obj;
    obj["perplexity"] = perplexity;
    obj["bleu"] = bleu;
    obj["smoothing"] = "add-one";
    return obj.dump(2);
}

EvalScores evaluate(const VaeModel& model,
                    const std::vector<DefinitionRecord>& records,
                    const GenerationConfig& cfg) {
    EvalScores scores;
    const auto seeded = seeded_records(records);
    scores.perplexity = perplexity(model, seeded);

    std::vector<std::vector<std::string>> candidates, refs;
    candidates.reserve(records.size());
    refs.reserve(records.size());
    GenerationConfig gen = cfg;
    for (std::size_t i = 0; i < records.size(); ++i) {
        gen.seed = cfg.seed + i;
        candidates.push_back(
            generate_definition(model, records[i].definiendum, gen));
        refs.push_back(records[i].tokens);
    }
    scores.bleu = bleu(candidates, refs);
    return scores;
}

}  // namespace defdis::defmod
