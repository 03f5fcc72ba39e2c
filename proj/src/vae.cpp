#include "defdis/vae.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace defdis::vae {

using corpus::Vocab;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

char variant_letter(Variant v) {
    switch (v) {
        case Variant::kU: return 'u';
        case Variant::kS: return 's';
        case Variant::kC: return 'c';
    }
    return '?';
}

Variant parse_variant(const std::string& s) {
    if (s == "u" || s == "U") return Variant::kU;
    if (s == "s" || s == "S") return Variant::kS;
    if (s == "c" || s == "C") return Variant::kC;
    throw ConfigError("unknown variant \"" + s + "\" (expected u, s or c)");
}

void VaeConfig::validate() const {
    if (z_dim < 1) throw ConfigError("z_dim must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) {
        throw ConfigError("dropout must be in [0, 1)");
    }
    if (kl_weight < 0.0) throw ConfigError("kl_weight must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

std::string VaeConfig::to_json_text() const {
    json obj;
    obj["variant"] = std::string(1, variant_letter(variant));
    obj["z_dim"] = z_dim;
    obj["hidden_dim"] = hidden_dim;
    obj["embed_dim"] = embed_dim;
    obj["kl_weight"] = kl_weight;
    obj["epochs"] = epochs;
    obj["batch_size"] = batch_size;
    obj["dropout"] = dropout;
    obj["learning_rate"] = learning_rate;
    obj["seed"] = seed;
    return obj.dump();
}

VaeConfig VaeConfig::from_json_text(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("vae config JSON: ") + e.what());
    }
    VaeConfig cfg;
    try {
        cfg.variant = parse_variant(obj.at("variant").get<std::string>());
        cfg.z_dim = obj.at("z_dim").get<int>();
        cfg.hidden_dim = obj.value("hidden_dim", cfg.hidden_dim);
        cfg.embed_dim = obj.value("embed_dim", cfg.embed_dim);
        cfg.kl_weight = obj.value("kl_weight", cfg.kl_weight);
        cfg.epochs = obj.value("epochs", cfg.epochs);
        cfg.batch_size = obj.value("batch_size", cfg.batch_size);
        cfg.dropout = obj.value("dropout", cfg.dropout);
        cfg.learning_rate = obj.value("learning_rate", cfg.learning_rate);
        cfg.seed = obj.value("seed", cfg.seed);
    } catch (const json::exception& e) {
        throw ParseError(std::string("vae config JSON: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string TrainLog::to_json_text() const {
    json arr = json::array();
    for (const TrainLogEntry& e : epochs) {
        json obj;
        obj["recon_loss"] = e.recon_loss;
        obj["role_loss"] = e.role_loss;
        obj["kl"] = e.kl;
        obj["total"] = e.total;
        obj["valid_total"] = e.valid_total;
        obj["seconds"] = e.seconds;
        arr.push_back(std::move(obj));
    }
    json out;
    out["epochs"] = std::move(arr);
    out["truncated_records"] = truncated_records;
    return out.dump(2);
}

std::vector<EncodedRecord> encode_records(
    const std::vector<corpus::DefinitionRecord>& records, const Vocab& vocab,
    std::size_t* truncated) {
    std::vector<EncodedRecord> out;
    out.reserve(records.size());
    std::size_t cut = 0;
    for (const corpus::DefinitionRecord& rec : records) {
        auto [tok, rol] = corpus::encode_record(rec, vocab);
        // Framed length is content + 2; trim content beyond the cap and
        // keep the EOS.
        if (tok.size() > kMaxSentenceTokens + 2) {
            tok.resize(kMaxSentenceTokens + 1);
            rol.resize(kMaxSentenceTokens + 1);
            tok.push_back(Vocab::kEos);
            rol.push_back(static_cast<int>(corpus::Role::kNone));
            ++cut;
        }
        out.push_back({std::move(tok), std::move(rol)});
    }
    if (truncated) *truncated = cut;
    return out;
}

namespace {

enum class Init { kZero, kWeight, kEmbed };

struct DropoutMasks {
    std::optional<Tensor> enc, dec, role_enc, role_dec;
};

struct RecordLossNodes {
    Graph::NodeId recon{};
    Graph::NodeId kl{};
    Graph::NodeId role_recon{};
    Graph::NodeId role_kl{};
    Graph::NodeId total{};
    bool has_role = false;
};

Tensor noise_row(const Tensor& noise, std::size_t r, std::size_t offset,
                 std::size_t z) {
    Tensor out({1, z});
    for (std::size_t j = 0; j < z; ++j) out[j] = noise.at(r, offset + j);
    return out;
}

int pick_token(const Tensor& logits, double temperature, bool greedy, Rng* rng) {
    const std::size_t v = logits.size();
    // PAD and BOS are structural and never emitted.
    auto masked = [&](std::size_t j) {
        return j == static_cast<std::size_t>(Vocab::kPad) ||
               j == static_cast<std::size_t>(Vocab::kBos);
    };
    if (greedy) {
        int best = -1;
        double best_v = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            if (masked(j)) continue;
            if (best < 0 || logits[j] > best_v) {
                best = static_cast<int>(j);
                best_v = logits[j];
            }
        }
        return best;
    }
    double mx = -1e300;
    for (std::size_t j = 0; j < v; ++j) {
        if (!masked(j)) mx = std::max(mx, logits[j] / temperature);
    }
    std::vector<double> probs(v, 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
        if (masked(j)) continue;
        probs[j] = std::exp(logits[j] / temperature - mx);
        sum += probs[j];
    }
    const double u = rng->uniform() * sum;
    double acc = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
        if (masked(j)) continue;
        acc += probs[j];
        if (u < acc) return static_cast<int>(j);
    }
    for (std::size_t j = v; j-- > 0;) {
        if (!masked(j)) return static_cast<int>(j);
    }
    return Vocab::kEos;
}

}  // namespace

// All graph construction for one model lives here; VaeModel methods bind
// parameters and delegate.
struct ModelOps {
    const VaeModel& m;
    Graph& g;
    std::vector<Graph::NodeId> p;

    ModelOps(const VaeModel& model, Graph& graph, bool with_grad)
        : m(model), g(graph) {
        p.reserve(m.params_.size());
        for (const NamedTensor& nt : m.params_) {
            Tensor t = nt.value;
            t.requires_grad = with_grad;
            p.push_back(g.leaf(std::move(t)));
        }
    }

    ModelOps(const VaeModel& model, Graph& graph,
             const std::vector<Graph::NodeId>& bound)
        : m(model), g(graph), p(bound) {}

    Graph::NodeId pid(const std::string& name) const {
        return p[m.param_index(name)];
    }

    std::size_t hidden() const {
        return static_cast<std::size_t>(m.cfg_.hidden_dim);
    }
    std::size_t zdim() const { return static_cast<std::size_t>(m.cfg_.z_dim); }

    Graph::NodeId gru_step(const std::string& prefix, Graph::NodeId x,
                           Graph::NodeId h) const {
        const std::size_t H = hidden();
        auto gx = g.add(g.matmul(x, pid(prefix + ".wx")), pid(prefix + ".bx"));
        auto gh = g.add(g.matmul(h, pid(prefix + ".wh")), pid(prefix + ".bh"));
        auto reset = g.sigmoid(g.add(g.slice_cols(gx, 0, H), g.slice_cols(gh, 0, H)));
        auto update =
            g.sigmoid(g.add(g.slice_cols(gx, H, H), g.slice_cols(gh, H, H)));
        auto cand = g.tanh(g.add(g.slice_cols(gx, 2 * H, H),
                                 g.mul(reset, g.slice_cols(gh, 2 * H, H))));
        return g.add(g.mul(update, h), g.mul(g.affine(update, -1.0, 1.0), cand));
    }

    // Final hidden state of a GRU run over the rows of `inputs` [T, D].
    Graph::NodeId run_gru(const std::string& prefix, Graph::NodeId inputs) const {
        auto h = g.constant(Tensor({1, hidden()}));
        const std::size_t steps = g.value(inputs).rows();
        for (std::size_t t = 0; t < steps; ++t) {
            h = gru_step(prefix, g.row(inputs, t), h);
        }
        return h;
    }

    Graph::NodeId embed(const std::string& table, const std::vector<int>& ids,
                        const std::optional<Tensor>& mask) const {
        auto e = g.lookup_rows(pid(table), ids);
        if (mask) e = g.dropout(e, *mask);
        return e;
    }

    Graph::NodeId token_encoder_state(const EncodedRecord& rec,
                                      const std::optional<Tensor>& mask) const {
        return run_gru("enc", embed("tok_embed", rec.token_ids, mask));
    }

    Graph::NodeId role_encoder_state(const std::vector<int>& role_ids,
                                     const std::optional<Tensor>& mask) const {
        return run_gru("renc", embed("role_embed", role_ids, mask));
    }

    std::pair<Graph::NodeId, Graph::NodeId> heads(const std::string& mu,
                                                  const std::string& lv,
                                                  Graph::NodeId h) const {
        auto mu_n = g.add(g.matmul(h, pid(mu + ".w")), pid(mu + ".b"));
        auto lv_n = g.add(g.matmul(h, pid(lv + ".w")), pid(lv + ".b"));
        return {mu_n, lv_n};
    }

    // Posterior for the configured variant. `summary` must be the role
    // summary for variant C and null otherwise.
    std::pair<Graph::NodeId, Graph::NodeId> posterior(
        const EncodedRecord& rec, const std::optional<Tensor>& mask,
        std::optional<Graph::NodeId> summary) const {
        auto h = token_encoder_state(rec, mask);
        if (m.cfg_.variant == Variant::kC) {
            h = g.concat_cols(h, *summary);
        }
        return heads("mu", "lv", h);
    }

    // Teacher-forced decoder logits [T-1, V] over the framed id sequence.
    Graph::NodeId decoder_logits(const std::string& prefix,
                                 const std::string& table,
                                 const std::string& out_head,
                                 const std::vector<int>& ids, Graph::NodeId z,
                                 std::optional<Graph::NodeId> cond,
                                 const std::optional<Tensor>& mask) const {
        const std::vector<int> inputs(ids.begin(), ids.end() - 1);
        auto emb = embed(table, inputs, mask);
        auto h = g.tanh(g.add(g.matmul(z, pid(prefix + "_init.w")),
                              pid(prefix + "_init.b")));
        std::vector<Graph::NodeId> rows;
        rows.reserve(inputs.size());
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            auto x = g.concat_cols(g.row(emb, t), z);
            if (cond) x = g.concat_cols(x, *cond);
            h = gru_step(prefix, x, h);
            rows.push_back(
                g.add(g.matmul(h, pid(out_head + ".w")), pid(out_head + ".b")));
        }
        return g.stack_rows(rows);
    }

    Graph::NodeId decoder_nll(const std::string& prefix, const std::string& table,
                              const std::string& out_head,
                              const std::vector<int>& ids, Graph::NodeId z,
                              std::optional<Graph::NodeId> cond,
                              const std::optional<Tensor>& mask) const {
        auto logits = decoder_logits(prefix, table, out_head, ids, z, cond, mask);
        const std::vector<int> targets(ids.begin() + 1, ids.end());
        return g.softmax_cross_entropy(logits, targets);
    }

    RecordLossNodes record_loss(const EncodedRecord& rec, const Tensor& tok_noise,
                                const Tensor* role_noise,
                                const DropoutMasks& masks) const {
        const double lambda = m.cfg_.kl_weight;
        RecordLossNodes out;
        switch (m.cfg_.variant) {
            case Variant::kU: {
                auto [mu, lv] = posterior(rec, masks.enc, std::nullopt);
                auto z = g.reparameterize(mu, lv, tok_noise);
                out.recon = decoder_nll("dec", "tok_embed", "out", rec.token_ids,
                                        z, std::nullopt, masks.dec);
                out.kl = g.gaussian_kl(mu, lv);
                out.total = g.add_weighted(out.recon, 1.0, out.kl, lambda);
                return out;
            }
            case Variant::kS: {
                auto [mu, lv] = posterior(rec, masks.enc, std::nullopt);
                auto z = g.reparameterize(mu, lv, tok_noise);
                out.recon = decoder_nll("dec", "tok_embed", "out", rec.token_ids,
                                        z, std::nullopt, masks.dec);
                out.kl = g.gaussian_kl(mu, lv);
                auto token_total = g.add_weighted(out.recon, 1.0, out.kl, lambda);

                auto rh = role_encoder_state(rec.role_ids, masks.role_enc);
                auto [rmu, rlv] = heads("rmu", "rlv", rh);
                auto zr = g.reparameterize(rmu, rlv, *role_noise);
                out.role_recon =
                    decoder_nll("rdec", "role_embed", "rout", rec.role_ids, zr,
                                std::nullopt, masks.role_dec);
                out.role_kl = g.gaussian_kl(rmu, rlv);
                auto role_total =
                    g.add_weighted(out.role_recon, 1.0, out.role_kl, lambda);
                out.has_role = true;
                out.total = g.add_weighted(token_total, 1.0, role_total, 1.0);
                return out;
            }
            case Variant::kC: {
                auto summary = role_encoder_state(rec.role_ids, masks.role_enc);
                auto [mu, lv] = posterior(rec, masks.enc, summary);
                auto z = g.reparameterize(mu, lv, tok_noise);
                auto [pmu, plv] = heads("prior_mu", "prior_lv", summary);
                out.recon = decoder_nll("dec", "tok_embed", "out", rec.token_ids,
                                        z, summary, masks.dec);
                out.kl = g.gaussian_kl_between(mu, lv, pmu, plv);
                out.total = g.add_weighted(out.recon, 1.0, out.kl, lambda);
                return out;
            }
        }
        throw UsageError("unreachable variant");
    }
};

VaeModel VaeModel::init(const VaeConfig& cfg, Vocab vocab) {
    cfg.validate();
    VaeModel m;
    m.cfg_ = cfg;
    m.vocab_ = std::move(vocab);

    Rng rng(cfg.seed);
    const std::size_t v = m.vocab_.size();
    const std::size_t e = static_cast<std::size_t>(cfg.embed_dim);
    const std::size_t h = static_cast<std::size_t>(cfg.hidden_dim);
    const std::size_t z = static_cast<std::size_t>(cfg.z_dim);
    const std::size_t r = corpus::kNumRoles;

    auto add = [&](const std::string& name, std::size_t rows, std::size_t cols,
                   Init kind) {
        Tensor t({rows, cols});
        if (kind == Init::kEmbed) {
            for (double& x : t.data()) x = 0.2 * rng.uniform() - 0.1;
        } else if (kind == Init::kWeight) {
            const double s = 1.0 / std::sqrt(static_cast<double>(rows));
            for (double& x : t.data()) x = s * (2.0 * rng.uniform() - 1.0);
        }
        m.index_[name] = m.params_.size();
        m.params_.push_back({name, std::move(t)});
    };
    auto add_gru = [&](const std::string& prefix, std::size_t in_dim) {
        add(prefix + ".wx", in_dim, 3 * h, Init::kWeight);
        add(prefix + ".wh", h, 3 * h, Init::kWeight);
        add(prefix + ".bx", 1, 3 * h, Init::kZero);
        add(prefix + ".bh", 1, 3 * h, Init::kZero);
    };

    const bool conditional = cfg.variant == Variant::kC;
    const std::size_t head_in = conditional ? 2 * h : h;
    const std::size_t dec_in = e + z + (conditional ? h : 0);

    add("tok_embed", v, e, Init::kEmbed);
    add_gru("enc", e);
    add("mu.w", head_in, z, Init::kWeight);
    add("mu.b", 1, z, Init::kZero);
    add("lv.w", head_in, z, Init::kWeight);
    add("lv.b", 1, z, Init::kZero);
    add("dec_init.w", z, h, Init::kWeight);
    add("dec_init.b", 1, h, Init::kZero);
    add_gru("dec", dec_in);
    add("out.w", h, v, Init::kWeight);
    add("out.b", 1, v, Init::kZero);

    if (cfg.variant == Variant::kS || conditional) {
        add("role_embed", r, e, Init::kEmbed);
        add_gru("renc", e);
    }
    if (cfg.variant == Variant::kS) {
        add("rmu.w", h, z, Init::kWeight);
        add("rmu.b", 1, z, Init::kZero);
        add("rlv.w", h, z, Init::kWeight);
        add("rlv.b", 1, z, Init::kZero);
        add("rdec_init.w", z, h, Init::kWeight);
        add("rdec_init.b", 1, h, Init::kZero);
        add_gru("rdec", e + z);
        add("rout.w", h, r, Init::kWeight);
        add("rout.b", 1, r, Init::kZero);
    }
    if (conditional) {
        add("prior_mu.w", h, z, Init::kWeight);
        add("prior_mu.b", 1, z, Init::kZero);
        add("prior_lv.w", h, z, Init::kWeight);
        add("prior_lv.b", 1, z, Init::kZero);
    }
    return m;
}

std::size_t VaeModel::param_count() const {
    std::size_t n = 0;
    for (const NamedTensor& p : params_) n += p.value.size();
    return n;
}

std::size_t VaeModel::param_index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter \"" + name + "\"");
    }
    return it->second;
}

std::pair<Tensor, Tensor> VaeModel::encode(
    const std::vector<int>& token_ids, const std::vector<int>* role_ids) const {
    const bool conditional = cfg_.variant == Variant::kC;
    if (conditional && !role_ids) {
        throw UsageError("conditional variant requires role ids to encode");
    }
    if (!conditional && role_ids) {
        throw UsageError("role ids are only accepted by the conditional variant");
    }
    Graph g;
    ModelOps ops(*this, g, false);
    EncodedRecord rec{token_ids, {}};
    std::optional<Graph::NodeId> summary;
    if (conditional) {
        summary = ops.role_encoder_state(*role_ids, std::nullopt);
    }
    auto [mu, lv] = ops.posterior(rec, std::nullopt, summary);
    return {g.value(mu), g.value(lv)};
}

Tensor VaeModel::role_summary(const std::vector<int>& role_ids) const {
    if (cfg_.variant != Variant::kC) {
        throw UsageError("role_summary applies to the conditional variant only");
    }
    Graph g;
    ModelOps ops(*this, g, false);
    return g.value(ops.role_encoder_state(role_ids, std::nullopt));
}

std::vector<int> VaeModel::decode_greedy(const Tensor& z, int max_len) const {
    if (cfg_.variant == Variant::kC) {
        throw UsageError("conditional variant requires a role condition to decode");
    }
    return decode_tokens(z, nullptr, {Vocab::kBos}, max_len, 1.0, true, nullptr);
}

std::vector<int> VaeModel::decode_greedy(const Tensor& z, const Tensor& condition,
                                         int max_len) const {
    if (cfg_.variant != Variant::kC) {
        throw UsageError("only the conditional variant takes a decode condition");
    }
    return decode_tokens(z, &condition, {Vocab::kBos}, max_len, 1.0, true,
                         nullptr);
}

std::vector<int> VaeModel::decode_tokens(const Tensor& z, const Tensor* condition,
                                         const std::vector<int>& prefix,
                                         int max_len, double temperature,
                                         bool greedy, Rng* rng) const {
    if (z.size() != static_cast<std::size_t>(cfg_.z_dim)) {
        throw DimensionError("latent size " + std::to_string(z.size()) +
                             " does not match z_dim " + std::to_string(cfg_.z_dim));
    }
    if (prefix.empty() || prefix.front() != Vocab::kBos) {
        throw UsageError("decode prefix must start with BOS");
    }
    if (!greedy && !rng) {
        throw UsageError("sampled decoding requires a random source");
    }
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    const bool conditional = cfg_.variant == Variant::kC;
    if (conditional != (condition != nullptr)) {
        throw UsageError("decode condition must be given iff variant is c");
    }

    Tensor zrow({1, static_cast<std::size_t>(cfg_.z_dim)}, z.data());

    Graph g;
    ModelOps ops(*this, g, false);
    auto zn = g.constant(zrow);
    std::optional<Graph::NodeId> cond;
    if (condition) cond = g.constant(*condition);
    auto h = g.tanh(g.add(g.matmul(zn, ops.pid("dec_init.w")),
                          ops.pid("dec_init.b")));

    std::vector<int> out;
    int prev = prefix[0];
    std::size_t prefix_pos = 1;
    for (int produced = 0; produced < max_len;) {
        auto x = g.concat_cols(g.row(g.lookup_rows(ops.pid("tok_embed"), {prev}), 0),
                               zn);
        if (cond) x = g.concat_cols(x, *cond);
        h = ops.gru_step("dec", x, h);
        auto logits =
            g.add(g.matmul(h, ops.pid("out.w")), ops.pid("out.b"));
        const Tensor& lv = g.value(logits);

        int next;
        if (prefix_pos < prefix.size()) {
            next = prefix[prefix_pos++];
        } else {
            next = pick_token(lv, temperature, greedy, rng);
            ++produced;
            if (next == Vocab::kEos) break;
            out.push_back(next);
        }
        prev = next;
    }
    return out;
}

Representations VaeModel::represent(
    const std::vector<corpus::DefinitionRecord>& records) const {
    return represent_encoded(encode_records(records, vocab_));
}

Representations VaeModel::represent_encoded(
    const std::vector<EncodedRecord>& records) const {
    const std::size_t z = static_cast<std::size_t>(cfg_.z_dim);
    Tensor out({records.size(), z});
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [mu, lv] =
            cfg_.variant == Variant::kC
                ? encode(records[i].token_ids, &records[i].role_ids)
                : encode(records[i].token_ids);
        for (std::size_t j = 0; j < z; ++j) out.at(i, j) = mu[j];
    }
    return out;
}

namespace {

void check_noise(const Tensor& noise, std::size_t batch, std::size_t cols) {
    if (noise.rows() != batch || noise.cols() != cols) {
        throw DimensionError("noise must be [" + std::to_string(batch) + "x" +
                             std::to_string(cols) + "], got " +
                             noise.shape_str());
    }
}

}  // namespace

ElboParts VaeModel::elbo_tokens(const std::vector<EncodedRecord>& batch,
                                const Tensor& noise) const {
    if (cfg_.variant == Variant::kC) {
        throw UsageError("elbo_tokens applies to variants u and s");
    }
    if (batch.empty()) throw UsageError("empty batch");
    check_noise(noise, batch.size(), static_cast<std::size_t>(cfg_.z_dim));
    Graph g;
    ModelOps ops(*this, g, false);
    ElboParts parts;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor tn =
            noise_row(noise, i, 0, static_cast<std::size_t>(cfg_.z_dim));
        auto [mu, lv] = ops.posterior(batch[i], std::nullopt, std::nullopt);
        auto z = g.reparameterize(mu, lv, tn);
        auto recon = ops.decoder_nll("dec", "tok_embed", "out",
                                     batch[i].token_ids, z, std::nullopt,
                                     std::nullopt);
        auto kl = g.gaussian_kl(mu, lv);
        parts.recon += g.value(recon)[0];
        parts.kl += g.value(kl)[0];
        parts.total +=
            g.value(g.add_weighted(recon, 1.0, kl, cfg_.kl_weight))[0];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    parts.recon *= inv;
    parts.kl *= inv;
    parts.total *= inv;
    return parts;
}

ElboParts VaeModel::elbo_roles(const std::vector<EncodedRecord>& batch,
                               const Tensor& noise) const {
    if (cfg_.variant != Variant::kS) {
        throw UsageError("elbo_roles applies to variant s only");
    }
    if (batch.empty()) throw UsageError("empty batch");
    check_noise(noise, batch.size(), static_cast<std::size_t>(cfg_.z_dim));
    Graph g;
    ModelOps ops(*this, g, false);
    ElboParts parts;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor rn =
            noise_row(noise, i, 0, static_cast<std::size_t>(cfg_.z_dim));
        auto rh = ops.role_encoder_state(batch[i].role_ids, std::nullopt);
        auto [rmu, rlv] = ops.heads("rmu", "rlv", rh);
        auto zr = g.reparameterize(rmu, rlv, rn);
        auto recon = ops.decoder_nll("rdec", "role_embed", "rout",
                                     batch[i].role_ids, zr, std::nullopt,
                                     std::nullopt);
        auto kl = g.gaussian_kl(rmu, rlv);
        parts.recon += g.value(recon)[0];
        parts.kl += g.value(kl)[0];
        parts.total +=
            g.value(g.add_weighted(recon, 1.0, kl, cfg_.kl_weight))[0];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    parts.recon *= inv;
    parts.kl *= inv;
    parts.total *= inv;
    return parts;
}

double VaeModel::loss_step(const std::vector<EncodedRecord>& batch,
                           const Tensor& noise) const {
    if (batch.empty()) throw UsageError("empty batch");
    for (const EncodedRecord& rec : batch) {
        if ((cfg_.variant != Variant::kU) &&
            rec.role_ids.size() != rec.token_ids.size()) {
            throw UsageError("variant requires role ids aligned to tokens");
        }
    }
    const std::size_t z = static_cast<std::size_t>(cfg_.z_dim);
    const std::size_t cols = cfg_.variant == Variant::kS ? 2 * z : z;
    check_noise(noise, batch.size(), cols);
    Graph g;
    ModelOps ops(*this, g, false);
    std::vector<Graph::NodeId> totals;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor tn = noise_row(noise, i, 0, z);
        Tensor rn;
        if (cfg_.variant == Variant::kS) rn = noise_row(noise, i, z, z);
        auto nodes = ops.record_loss(batch[i], tn,
                                     cfg_.variant == Variant::kS ? &rn : nullptr,
                                     {});
        totals.push_back(nodes.total);
    }
    return g.value(g.mean_of(totals))[0];
}

GraphBuilder VaeModel::loss_builder(std::vector<EncodedRecord> batch,
                                    Tensor noise) const {
    if (batch.empty()) throw UsageError("empty batch");
    const std::size_t z = static_cast<std::size_t>(cfg_.z_dim);
    const std::size_t cols = cfg_.variant == Variant::kS ? 2 * z : z;
    check_noise(noise, batch.size(), cols);
    const VaeModel* self = this;
    return [self, batch = std::move(batch), noise = std::move(noise),
            z](Graph& g, const std::vector<Graph::NodeId>& bound) {
        ModelOps ops(*self, g, bound);
        std::vector<Graph::NodeId> totals;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const Tensor tn = noise_row(noise, i, 0, z);
            Tensor rn;
            if (self->cfg_.variant == Variant::kS) rn = noise_row(noise, i, z, z);
            auto nodes = ops.record_loss(
                batch[i], tn, self->cfg_.variant == Variant::kS ? &rn : nullptr,
                {});
            totals.push_back(nodes.total);
        }
        return g.mean_of(totals);
    };
}

std::pair<double, std::size_t> VaeModel::teacher_forced_nll(
    const EncodedRecord& rec, std::size_t from_target) const {
    Graph g;
    ModelOps ops(*this, g, false);
    std::optional<Graph::NodeId> summary;
    if (cfg_.variant == Variant::kC) {
        summary = ops.role_encoder_state(rec.role_ids, std::nullopt);
    }
    auto [mu, lv] = ops.posterior(rec, std::nullopt, summary);
    auto logits = ops.decoder_logits("dec", "tok_embed", "out", rec.token_ids,
                                     mu, summary, std::nullopt);
    const Tensor& lt = g.value(logits);
    const std::vector<int> targets(rec.token_ids.begin() + 1,
                                   rec.token_ids.end());
    double nll = 0.0;
    std::size_t count = 0;
    for (std::size_t t = from_target; t < targets.size(); ++t) {
        if (targets[t] == Vocab::kPad) continue;
        double mx = lt.at(t, 0);
        for (std::size_t j = 1; j < lt.cols(); ++j) mx = std::max(mx, lt.at(t, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < lt.cols(); ++j)
            lse += std::exp(lt.at(t, j) - mx);
        nll += mx + std::log(lse) - lt.at(t, static_cast<std::size_t>(targets[t]));
        ++count;
    }
    return {nll, count};
}

namespace {

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

void adam_step(std::vector<NamedTensor>& params, const Graph& g,
               const std::vector<Graph::NodeId>& bound, AdamState& state,
               double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++state.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& grad = g.grad(bound[i]);
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        Tensor& w = params[i].value;
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
            v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
            w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        }
    }
}

std::optional<Tensor> make_mask(std::size_t rows, std::size_t cols, double drop,
                                Rng& rng) {
    if (drop <= 0.0) return std::nullopt;
    Tensor mask({rows, cols});
    const double scale = 1.0 / (1.0 - drop);
    for (double& x : mask.data()) x = rng.uniform() < drop ? 0.0 : scale;
    return mask;
}

}  // namespace

std::pair<VaeModel, TrainLog> train(
    const VaeConfig& cfg,
    const std::vector<corpus::DefinitionRecord>& train_records,
    const std::vector<corpus::DefinitionRecord>& valid_records, Vocab vocab) {
    cfg.validate();
    if (train_records.empty()) {
        throw UsageError("training requires a non-empty train set");
    }

    TrainLog log;
    const auto encoded =
        encode_records(train_records, vocab, &log.truncated_records);
    std::size_t valid_truncated = 0;
    const auto valid_encoded =
        encode_records(valid_records, vocab, &valid_truncated);
    log.truncated_records += valid_truncated;
    if (log.truncated_records > 0) {
        std::cerr << "defdis: truncated " << log.truncated_records
                  << " record(s) to " << kMaxSentenceTokens << " tokens\n";
    }

    VaeModel model = VaeModel::init(cfg, std::move(vocab));
    std::cerr << "defdis: variant " << variant_letter(cfg.variant) << ", "
              << model.param_count() << " parameters, " << encoded.size()
              << " train records\n";

    const std::size_t z = static_cast<std::size_t>(cfg.z_dim);
    const bool dual = cfg.variant == Variant::kS;
    const bool roled = cfg.variant != Variant::kU;

    AdamState adam;
    for (const NamedTensor& p : model.params()) {
        adam.m.emplace_back(p.value.shape());
        adam.v.emplace_back(p.value.shape());
    }

    // Distinct stream from parameter initialisation.
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<NamedTensor> best_params = model.params();
    double best_valid = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        rng.shuffle(order);

        double sum_recon = 0.0, sum_role = 0.0, sum_kl = 0.0, sum_total = 0.0;
        for (std::size_t base = 0; base < order.size();
             base += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(
                order.size(), base + static_cast<std::size_t>(cfg.batch_size));

            Graph g;
            ModelOps ops(model, g, true);
            std::vector<Graph::NodeId> totals;
            for (std::size_t k = base; k < end; ++k) {
                const EncodedRecord& rec = encoded[order[k]];
                Tensor tn({1, z});
                for (double& x : tn.data()) x = rng.normal();
                Tensor rn;
                if (dual) {
                    rn = Tensor({1, z});
                    for (double& x : rn.data()) x = rng.normal();
                }
                DropoutMasks masks;
                const std::size_t e = static_cast<std::size_t>(cfg.embed_dim);
                masks.enc = make_mask(rec.token_ids.size(), e, cfg.dropout, rng);
                masks.dec =
                    make_mask(rec.token_ids.size() - 1, e, cfg.dropout, rng);
                if (roled) {
                    masks.role_enc =
                        make_mask(rec.role_ids.size(), e, cfg.dropout, rng);
                }
                if (dual) {
                    masks.role_dec =
                        make_mask(rec.role_ids.size() - 1, e, cfg.dropout, rng);
                }
                auto nodes = ops.record_loss(rec, tn, dual ? &rn : nullptr, masks);
                totals.push_back(nodes.total);
                sum_recon += g.value(nodes.recon)[0];
                sum_kl += g.value(nodes.kl)[0];
                if (nodes.has_role) {
                    sum_role += g.value(nodes.role_recon)[0];
                    sum_kl += g.value(nodes.role_kl)[0];
                }
                sum_total += g.value(nodes.total)[0];
            }
            auto batch_loss = g.mean_of(totals);
            if (!std::isfinite(g.value(batch_loss)[0])) {
                throw TrainingError("non-finite loss at epoch " +
                                    std::to_string(epoch + 1));
            }
            g.backward(batch_loss);
            adam_step(model.params(), g, ops.p, adam, cfg.learning_rate);
        }

        TrainLogEntry entry;
        const double inv = 1.0 / static_cast<double>(encoded.size());
        entry.recon_loss = sum_recon * inv;
        entry.role_loss = sum_role * inv;
        entry.kl = sum_kl * inv;
        entry.total = sum_total * inv;

        if (!valid_encoded.empty()) {
            const std::size_t cols = dual ? 2 * z : z;
            double vt = 0.0;
            for (const EncodedRecord& rec : valid_encoded) {
                Tensor zero({1, cols});
                vt += model.loss_step({rec}, zero);
            }
            entry.valid_total = vt / static_cast<double>(valid_encoded.size());
        } else {
            entry.valid_total = entry.total;
        }
        if (!std::isfinite(entry.valid_total)) {
            throw TrainingError("non-finite validation loss at epoch " +
                                std::to_string(epoch + 1));
        }
        if (entry.valid_total < best_valid) {
            best_valid = entry.valid_total;
            best_params = model.params();
        }
        entry.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          started)
                .count();
        log.epochs.push_back(entry);
    }

    if (cfg.epochs > 0) {
        model.params() = std::move(best_params);
    }
    return {std::move(model), std::move(log)};
}

// --- checkpoint io --------------------------------------------------------

namespace {

constexpr char kMagic[7] = {'D', 'E', 'F', 'D', 'I', 'S', '1'};

template <typename T>
void write_raw(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError("checkpoint truncated");
    return v;
}

}  // namespace

void save_checkpoint(const VaeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));

    json meta;
    meta["config"] = json::parse(model.config().to_json_text());
    meta["vocab"] = model.vocab().tokens();
    const std::string meta_text = meta.dump();
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(meta_text.size()));
    out.write(meta_text.data(),
              static_cast<std::streamsize>(meta_text.size()));

    write_raw<std::uint32_t>(out,
                             static_cast<std::uint32_t>(model.params().size()));
    for (const NamedTensor& p : model.params()) {
        write_raw<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_raw<std::uint8_t>(out,
                                static_cast<std::uint8_t>(p.value.shape().size()));
        for (std::size_t d : p.value.shape()) {
            write_raw<std::uint64_t>(out, d);
        }
        out.write(reinterpret_cast<const char*>(p.value.data().data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

VaeModel load_checkpoint(const std::filesystem::path& path,
                         std::optional<Variant> expected_variant) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("bad checkpoint magic in " + path.string());
    }

    const auto meta_len = read_raw<std::uint32_t>(in);
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), meta_len);
    if (!in) throw CheckpointError("checkpoint truncated");
    json meta;
    try {
        meta = json::parse(meta_text);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
    }
    const VaeConfig cfg = VaeConfig::from_json_text(meta.at("config").dump());
    if (expected_variant && cfg.variant != *expected_variant) {
        throw CheckpointError(
            std::string("checkpoint holds variant ") +
            variant_letter(cfg.variant) + " but variant " +
            variant_letter(*expected_variant) + " was requested");
    }
    const auto vocab_tokens = meta.at("vocab").get<std::vector<std::string>>();

    VaeModel model = VaeModel::init(cfg, Vocab::from_tokens(vocab_tokens));
    const auto n_tensors = read_raw<std::uint32_t>(in);
    if (n_tensors != model.params().size()) {
        throw CheckpointError("checkpoint tensor count mismatch");
    }
    for (NamedTensor& p : model.params()) {
        const auto name_len = read_raw<std::uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in || name != p.name) {
            throw CheckpointError("checkpoint tensor order mismatch at \"" +
                                  name + "\"");
        }
        const auto rank = read_raw<std::uint8_t>(in);
        std::vector<std::size_t> shape;
        for (std::uint8_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<std::size_t>(read_raw<std::uint64_t>(in)));
        }
        if (shape != p.value.shape()) {
            throw CheckpointError("checkpoint tensor shape mismatch at \"" +
                                  name + "\"");
        }
        in.read(reinterpret_cast<char*>(p.value.data().data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(double)));
        if (!in) throw CheckpointError("checkpoint truncated");
    }
    return model;
}

}  // namespace defdis::vae
