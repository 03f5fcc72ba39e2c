#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "defdis/corpus.hpp"
#include "defdis/graph.hpp"
#include "defdis/rng.hpp"

namespace defdis::vae {

// Training frameworks: unsupervised, role-supervised dual reconstruction,
// and conditional on roles.
enum class Variant : std::uint8_t { kU, kS, kC };

char variant_letter(Variant v);
Variant parse_variant(const std::string& s);

// Sentences longer than this are truncated before training/encoding.
inline constexpr std::size_t kMaxSentenceTokens = 32;

struct VaeConfig {
    Variant variant = Variant::kU;
    int z_dim = 4;
    int hidden_dim = 512;
    int embed_dim = 128;
    double kl_weight = 0.1;
    int epochs = 20;
    int batch_size = 64;
    double dropout = 0.2;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json_text() const;
    static VaeConfig from_json_text(const std::string& text);
};

struct TrainLogEntry {
    double recon_loss = 0.0;
    double role_loss = 0.0;
    double kl = 0.0;
    double total = 0.0;
    double valid_total = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> epochs;
    std::size_t truncated_records = 0;

    // seconds are wall clock and are kept out of any determinism contract.
    std::string to_json_text() const;
};

// BOS/EOS-framed ids ready for the recurrent nets.
struct EncodedRecord {
    std::vector<int> token_ids;
    std::vector<int> role_ids;
};

std::vector<EncodedRecord> encode_records(
    const std::vector<corpus::DefinitionRecord>& records,
    const corpus::Vocab& vocab, std::size_t* truncated = nullptr);

struct ElboParts {
    double recon = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

// Posterior-mean rows, one per record.
using Representations = Tensor;

// Single-layer GRU sequence VAE. Parameters are plain tensors; every
// forward runs through the autodiff graph, trained or not, so the train
// and eval paths cannot drift apart. Immutable after training; encode,
// represent and decode are const and safe to call from several threads.
class VaeModel {
public:
    static VaeModel init(const VaeConfig& cfg, corpus::Vocab vocab);

    const VaeConfig& config() const { return cfg_; }
    const corpus::Vocab& vocab() const { return vocab_; }
    const std::vector<NamedTensor>& params() const { return params_; }
    std::vector<NamedTensor>& params() { return params_; }
    std::size_t param_count() const;
    std::size_t param_index(const std::string& name) const;

    // Posterior (mu, logvar), each [1, z]. role_ids are required for the
    // conditional variant and rejected otherwise.
    std::pair<Tensor, Tensor> encode(const std::vector<int>& token_ids,
                                     const std::vector<int>* role_ids = nullptr) const;

    // Role-conditioning summary vector [1, hidden]; conditional variant only.
    Tensor role_summary(const std::vector<int>& role_ids) const;

    // Deterministic argmax decoding until EOS or max_len; ties resolve to
    // the lowest token id, and PAD/BOS are never emitted.
    std::vector<int> decode_greedy(const Tensor& z, int max_len) const;
    std::vector<int> decode_greedy(const Tensor& z, const Tensor& condition,
                                   int max_len) const;

    // Shared decoding core: teacher-force `prefix` (must start with BOS),
    // then run free until EOS or max_len new tokens. rng required unless
    // greedy.
    std::vector<int> decode_tokens(const Tensor& z, const Tensor* condition,
                                   const std::vector<int>& prefix, int max_len,
                                   double temperature, bool greedy,
                                   Rng* rng) const;

    Representations represent(
        const std::vector<corpus::DefinitionRecord>& records) const;
    Representations represent_encoded(
        const std::vector<EncodedRecord>& records) const;

    // Negative token ELBO and components, averaged over the batch.
    // noise is [B, z]. Variants U and S only.
    ElboParts elbo_tokens(const std::vector<EncodedRecord>& batch,
                          const Tensor& noise) const;
    // Role-reconstruction ELBO; variant S only.
    ElboParts elbo_roles(const std::vector<EncodedRecord>& batch,
                         const Tensor& noise) const;
    // Full training objective for the configured variant. noise is [B, z]
    // for U/C and [B, 2z] for S (token columns first).
    double loss_step(const std::vector<EncodedRecord>& batch,
                     const Tensor& noise) const;

    // Objective as a graph builder over the bound parameter list, for
    // gradient checking. Same function loss_step evaluates.
    GraphBuilder loss_builder(std::vector<EncodedRecord> batch,
                              Tensor noise) const;

    // Mean per-token negative log-likelihood of the targets under teacher
    // forcing with z fixed to the posterior mean. Positions with target id
    // PAD or before `from_target` are excluded. Returns (nll sum, tokens).
    std::pair<double, std::size_t> teacher_forced_nll(
        const EncodedRecord& rec, std::size_t from_target = 0) const;

private:
    friend struct ModelOps;

    VaeConfig cfg_;
    corpus::Vocab vocab_;
    std::vector<NamedTensor> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Deterministic training; returns the best-validation checkpoint (training
// loss stands in when no validation records are given).
std::pair<VaeModel, TrainLog> train(
    const VaeConfig& cfg, const std::vector<corpus::DefinitionRecord>& train_records,
    const std::vector<corpus::DefinitionRecord>& valid_records,
    corpus::Vocab vocab);

// Versioned binary container: magic "DEFDIS1", embedded JSON (config +
// vocabulary), then little-endian f64 tensors with a shape manifest.
void save_checkpoint(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_checkpoint(const std::filesystem::path& path,
                         std::optional<Variant> expected_variant = std::nullopt);

}  // namespace defdis::vae
