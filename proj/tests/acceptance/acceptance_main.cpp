// Acceptance suite: one check per shipped guarantee, each printed as a
// single PASS/FAIL line. Run all with no arguments or one with
// --criterion N. Exit 0 iff everything selected passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "defdis/cli.hpp"
#include "defdis/corpus.hpp"
#include "defdis/defmod.hpp"
#include "defdis/graph.hpp"
#include "defdis/metrics.hpp"
#include "defdis/probes.hpp"
#include "defdis/rng.hpp"
#include "defdis/vae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace defdis;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void check(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "<missing " + p.string() + ">";
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

std::vector<corpus::DefinitionRecord> two_sentence_batch() {
    using corpus::Role;
    return {
        {"swan",
         {"a", "migratory", "bird"},
         {Role::kNone, Role::kDifferentiaQuality, Role::kSupertype},
         ""},
        {"carp",
         {"a", "fish", "in", "water"},
         {Role::kNone, Role::kSupertype, Role::kNone, Role::kEventLocation},
         ""},
    };
}

// representations = factor value + gaussian noise, one factor per dimension
struct OracleData {
    Tensor reps;
    corpus::FactorMatrix factors;
};

OracleData metric_oracle(std::size_t n, std::size_t k, double sigma,
                         std::uint64_t seed) {
    Rng rng(seed);
    OracleData o;
    o.reps = Tensor({n, k});
    o.factors.n = n;
    o.factors.values.assign(n * k, 0);
    for (std::size_t j = 0; j < k; ++j) {
        o.factors.factor_names.push_back("f" + std::to_string(j));
        o.factors.cardinalities.push_back(2);
        o.factors.degenerate.push_back(false);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const int v = rng.below(2) ? 1 : 0;
            o.factors.values[i * k + j] = v;
            o.reps.at(i, j) = static_cast<double>(v) + sigma * rng.normal();
        }
    }
    return o;
}

// --- criterion 1: gradient integrity ---------------------------------------

Outcome criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    const auto records = two_sentence_batch();
    const corpus::Vocab vocab = corpus::Vocab::build(records, 1);
    Rng rng(101);
    for (vae::Variant variant :
         {vae::Variant::kU, vae::Variant::kS, vae::Variant::kC}) {
        vae::VaeConfig cfg;
        cfg.variant = variant;
        cfg.z_dim = 2;
        cfg.hidden_dim = 5;
        cfg.embed_dim = 4;
        cfg.dropout = 0.0;
        cfg.seed = 7;
        const vae::VaeModel model = vae::VaeModel::init(cfg, vocab);
        const auto enc = vae::encode_records(records, vocab);
        const std::size_t cols = variant == vae::Variant::kS ? 4 : 2;
        Tensor noise({2, cols});
        for (double& x : noise.data()) x = rng.normal();
        const GradCheckReport report =
            grad_check(model.loss_builder(enc, noise), model.params(), 1e-4);
        std::ostringstream msg;
        msg << "variant " << vae::variant_letter(variant) << " max rel dev "
            << report.max_rel_dev;
        out.check(report.max_rel_dev < 1e-3, msg.str());
    }
    const double elapsed = seconds_since(t0);
    out.check(elapsed < 60.0, "runtime " + std::to_string(elapsed) + "s");
    return out;
}

// --- criterion 2: closed-form KL vs Monte-Carlo -----------------------------

Outcome criterion_kl() {
    Outcome out;
    Rng rng(202);
    constexpr std::size_t kSamples = 1000000;
    constexpr std::size_t kDim = 4;

    auto mc_kl = [&](const std::vector<double>& mu_q,
                     const std::vector<double>& lv_q,
                     const std::vector<double>& mu_p,
                     const std::vector<double>& lv_p) {
        double acc = 0.0;
        for (std::size_t s = 0; s < kSamples; ++s) {
            for (std::size_t i = 0; i < kDim; ++i) {
                const double x = mu_q[i] + std::exp(0.5 * lv_q[i]) * rng.normal();
                const double dq = x - mu_q[i];
                const double dp = x - mu_p[i];
                acc += -0.5 * (lv_q[i] + dq * dq * std::exp(-lv_q[i]));
                acc -= -0.5 * (lv_p[i] + dp * dp * std::exp(-lv_p[i]));
            }
        }
        return acc / static_cast<double>(kSamples);
    };
    auto draw = [&](double scale) {
        std::vector<double> v(kDim);
        for (double& x : v) x = scale * rng.normal();
        return v;
    };

    for (int trial = 0; trial < 10; ++trial) {
        const auto mu = draw(1.0);
        const auto lv = draw(0.5);
        const std::vector<double> zero(kDim, 0.0);
        Graph g;
        const double closed =
            g.value(g.gaussian_kl(g.constant(Tensor::row(std::vector<double>(mu))),
                                  g.constant(Tensor::row(std::vector<double>(lv)))))[0];
        const double mc = mc_kl(mu, lv, zero, zero);
        std::ostringstream msg;
        msg << "gaussian_kl draw " << trial << ": closed " << closed << " mc "
            << mc;
        out.check(std::fabs(closed - mc) <= 0.01 * std::max(closed, 0.5),
                  msg.str());
    }
    for (int trial = 0; trial < 10; ++trial) {
        const auto mu_q = draw(1.0);
        const auto lv_q = draw(0.5);
        const auto mu_p = draw(1.0);
        const auto lv_p = draw(0.5);
        Graph g;
        const double closed = g.value(g.gaussian_kl_between(
            g.constant(Tensor::row(std::vector<double>(mu_q))),
            g.constant(Tensor::row(std::vector<double>(lv_q))),
            g.constant(Tensor::row(std::vector<double>(mu_p))),
            g.constant(Tensor::row(std::vector<double>(lv_p)))))[0];
        const double mc = mc_kl(mu_q, lv_q, mu_p, lv_p);
        std::ostringstream msg;
        msg << "gaussian_kl_between draw " << trial << ": closed " << closed
            << " mc " << mc;
        out.check(std::fabs(closed - mc) <= 0.01 * std::max(closed, 0.5),
                  msg.str());
    }
    return out;
}

// --- criteria 3/4: metric oracle and chance suites ---------------------------

Outcome criterion_metric_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    const OracleData o = metric_oracle(2000, 4, 0.05, 303);
    metrics::MetricConfig cfg;
    cfg.seed = 11;
    const metrics::MetricReport r = metrics::evaluate_all(o.reps, o.factors, cfg);

    auto expect = [&](double value, bool cond, const char* name) {
        std::ostringstream msg;
        msg << name << " = " << value;
        out.check(cond, msg.str());
    };
    expect(r.z_diff, r.z_diff >= 0.95, "z_diff");
    expect(r.z_min_var, r.z_min_var <= 0.05, "z_min_var error");
    expect(r.mig, r.mig >= 0.8, "mig");
    expect(r.modularity, r.modularity >= 0.95, "modularity");
    expect(r.explicitness, r.explicitness >= 0.99, "explicitness");
    expect(r.disentanglement, r.disentanglement >= 0.9, "disentanglement");
    expect(r.completeness, r.completeness >= 0.9, "completeness");
    expect(r.informativeness, r.informativeness <= 0.05, "informativeness");
    const double elapsed = seconds_since(t0);
    out.check(elapsed < 300.0, "runtime " + std::to_string(elapsed) + "s");
    return out;
}

Outcome criterion_metric_chance() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    OracleData o = metric_oracle(2000, 4, 0.05, 404);
    // Shuffle each factor column independently of the representations.
    Rng rng(505);
    const std::size_t k = o.factors.factor_count();
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<int> col = o.factors.column(j);
        rng.shuffle(col);
        for (std::size_t i = 0; i < o.factors.n; ++i) {
            o.factors.values[i * k + j] = col[i];
        }
    }
    metrics::MetricConfig cfg;
    cfg.seed = 12;
    const metrics::MetricReport r = metrics::evaluate_all(o.reps, o.factors, cfg);

    auto expect = [&](double value, bool cond, const char* name) {
        std::ostringstream msg;
        msg << name << " = " << value;
        out.check(cond, msg.str());
    };
    expect(r.z_diff, std::fabs(r.z_diff - 0.25) <= 0.1, "z_diff vs chance 1/4");
    expect(r.z_min_var, std::fabs(r.z_min_var - 0.75) <= 0.1,
           "z_min_var error vs chance 3/4");
    expect(r.mig, r.mig <= 0.05, "mig");
    // Binary factors: chance-level held-out error is one half.
    expect(r.informativeness, std::fabs(r.informativeness - 0.5) <= 0.1,
           "informativeness vs chance 1/2");
    const double elapsed = seconds_since(t0);
    out.check(elapsed < 300.0, "runtime " + std::to_string(elapsed) + "s");
    return out;
}

// --- criterion 5: exhaustive MI equivalence ---------------------------------

Outcome criterion_mi_oracle() {
    Outcome out;
    double max_dev = 0.0;
    for (std::size_t n = 1; n <= 6 && out.ok; ++n) {
        std::size_t combos = 1;
        for (std::size_t i = 0; i < n; ++i) combos *= 3;
        for (std::size_t ca = 0; ca < combos; ++ca) {
            for (std::size_t cb = 0; cb < combos; ++cb) {
                std::vector<int> a(n), b(n), ab(n);
                std::size_t ta = ca, tb = cb;
                for (std::size_t i = 0; i < n; ++i) {
                    a[i] = static_cast<int>(ta % 3);
                    b[i] = static_cast<int>(tb % 3);
                    ab[i] = a[i] * 3 + b[i];
                    ta /= 3;
                    tb /= 3;
                }
                const double plug_in = metrics::mutual_information(a, b);
                const double oracle = metrics::entropy(a) + metrics::entropy(b) -
                                      metrics::entropy(ab);
                max_dev = std::max(max_dev, std::fabs(plug_in - oracle));
            }
        }
    }
    std::ostringstream msg;
    msg << "max |plug-in - joint-count| = " << max_dev;
    out.check(max_dev <= 1e-12, msg.str());
    if (out.ok) out.detail = msg.str();
    return out;
}

// --- criterion 6: directional replication -----------------------------------

Outcome criterion_directional() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    const corpus::SynthSpec spec = corpus::definitional_synth_spec(2000);
    const corpus::SynthResult synth = corpus::synth_corpus(spec, 42);
    const corpus::Vocab vocab = corpus::Vocab::build(synth.records, 2);
    const corpus::FactorMatrix factors =
        corpus::factor_matrix(synth.records, spec.induced_grouping());

    auto z_diff_for = [&](vae::Variant variant, std::uint64_t seed) {
        vae::VaeConfig cfg;
        cfg.variant = variant;
        cfg.z_dim = 4;
        cfg.hidden_dim = 32;
        cfg.embed_dim = 16;
        cfg.kl_weight = 0.1;
        cfg.epochs = 30;
        cfg.batch_size = 32;
        cfg.dropout = 0.2;
        cfg.learning_rate = 3e-3;
        cfg.seed = seed;
        auto [model, log] = vae::train(cfg, synth.records, {}, vocab);
        const Tensor reps = model.represent(synth.records);
        metrics::MetricConfig mcfg;
        mcfg.seed = seed;
        return metrics::z_diff_score(reps, factors, mcfg);
    };
    auto median3 = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[1];
    };

    std::vector<double> u_scores, c_scores, s_scores;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        u_scores.push_back(z_diff_for(vae::Variant::kU, seed));
        s_scores.push_back(z_diff_for(vae::Variant::kS, seed));
        c_scores.push_back(z_diff_for(vae::Variant::kC, seed));
    }
    const double med_u = median3(u_scores);
    const double med_s = median3(s_scores);
    const double med_c = median3(c_scores);
    std::ostringstream msg;
    msg << "median z_diff: u " << med_u << ", s " << med_s << ", c " << med_c;
    out.check(med_c >= med_u, msg.str());
    if (out.ok) out.detail = msg.str();
    const double elapsed = seconds_since(t0);
    out.check(elapsed < 1800.0, "runtime " + std::to_string(elapsed) + "s");
    return out;
}

// --- criterion 7: interpolation contract ------------------------------------

Outcome criterion_interpolation() {
    Outcome out;
    const auto records = two_sentence_batch();
    const corpus::Vocab vocab = corpus::Vocab::build(records, 1);
    vae::VaeConfig cfg;
    cfg.variant = vae::Variant::kU;
    cfg.z_dim = 3;
    cfg.hidden_dim = 10;
    cfg.embed_dim = 6;
    cfg.seed = 77;
    const vae::VaeModel model = vae::VaeModel::init(cfg, vocab);

    const probes::TraversalResult r =
        probes::interpolate(model, records[0], records[1]);
    out.check(r.sentences.size() == 9, "nine sentences per interpolation");
    out.check(r.latents.size() == 9, "nine latents per interpolation");

    const probes::TraversalResult same =
        probes::interpolate(model, records[0], records[0]);
    bool identical = same.sentences.size() == 9;
    for (const auto& s : same.sentences) {
        identical = identical && s == same.sentences[0];
    }
    out.check(identical, "identical endpoints decode identically");

    const auto enc = vae::encode_records(records, vocab);
    const auto [mu1, lv1] = model.encode(enc[0].token_ids);
    const auto [mu2, lv2] = model.encode(enc[1].token_ids);
    const Tensor avg = probes::latent_arithmetic(mu1, mu2, probes::ArithOp::kAvg);
    out.check(r.latents[4].data() == avg.data(),
              "t=0.5 equals AVG latent arithmetic");
    return out;
}

// --- criterion 8: definition-modeling sanity ---------------------------------

Outcome criterion_defmod() {
    Outcome out;
    const auto records = two_sentence_batch();
    const corpus::Vocab vocab = defmod::build_seeded_vocab(records, 1);

    vae::VaeConfig cfg;
    cfg.variant = vae::Variant::kU;
    cfg.z_dim = 2;
    cfg.hidden_dim = 12;
    cfg.embed_dim = 8;
    cfg.dropout = 0.0;
    cfg.seed = 88;
    vae::VaeModel uniform = vae::VaeModel::init(cfg, vocab);
    for (NamedTensor& p : uniform.params()) {
        for (double& x : p.value.data()) x = 0.0;
    }
    const double pp_uniform =
        defmod::perplexity(uniform, defmod::seeded_records(records));
    const double v = static_cast<double>(vocab.size());
    std::ostringstream msg1;
    msg1 << "uniform perplexity " << pp_uniform << " vs vocab " << v;
    out.check(std::fabs(pp_uniform - v) <= 1e-9 * v, msg1.str());

    const std::vector<corpus::DefinitionRecord> one = {records[0]};
    const corpus::Vocab v1 = defmod::build_seeded_vocab(one, 1);
    vae::VaeConfig ocfg = cfg;
    ocfg.hidden_dim = 16;
    ocfg.epochs = 250;
    ocfg.batch_size = 1;
    ocfg.learning_rate = 5e-3;
    ocfg.kl_weight = 0.01;
    ocfg.seed = 5;
    auto [overfit, log] = defmod::train_seeded(ocfg, one, {}, v1);
    const double pp_overfit =
        defmod::perplexity(overfit, defmod::seeded_records(one));
    std::ostringstream msg2;
    msg2 << "overfit perplexity " << pp_overfit;
    out.check(pp_overfit <= 1.1, msg2.str());

    const std::vector<std::vector<std::string>> same = {
        {"a", "migratory", "bird"}, {"to", "move", "fast"}};
    out.check(std::fabs(defmod::bleu(same, same) - 1.0) <= 1e-12,
              "bleu of identical corpora is 1");

    const std::vector<std::vector<std::string>> cand = {{"the", "cat", "sat"}};
    const std::vector<std::vector<std::string>> ref = {
        {"the", "cat", "sat", "down"}};
    const double hand = std::exp(1.0 - 4.0 / 3.0);
    const double got = defmod::bleu(cand, ref);
    std::ostringstream msg3;
    msg3 << "hand-computed bleu " << got << " vs " << hand;
    out.check(std::fabs(got - hand) <= 1e-9, msg3.str());
    return out;
}

// --- criterion 9: bit-identical artifacts ------------------------------------

Outcome criterion_determinism() {
    Outcome out;
    const fs::path root =
        fs::temp_directory_path() / "defdis_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);

    json cfg;
    cfg["grouping"] = "group3";
    cfg["seed"] = 17;
    cfg["min_freq"] = 1;
    cfg["split"] = {{"fractions", {1.0, 0.0, 0.0}}};
    cfg["vae"] = {{"variant", "s"},   {"z_dim", 3},
                  {"hidden_dim", 12}, {"embed_dim", 8},
                  {"kl_weight", 0.1}, {"epochs", 2},
                  {"batch_size", 16}, {"dropout", 0.2},
                  {"learning_rate", 0.003}, {"seed", 0}};
    cfg["metrics"] = {{"bins", 8},
                      {"zdiff", {{"pairs", 16},
                                 {"train_batches", 120},
                                 {"test_batches", 40}}},
                      {"zminvar", {{"pairs", 16},
                                   {"train_batches", 120},
                                   {"test_batches", 40}}},
                      {"classifier_iters", 120},
                      {"min_samples", 20}};
    cfg["synth"] = {{"builtin", "definitional"}, {"count", 120}};
    cfg["probe"] = {{"sentence", 0}, {"sentence2", 1}, {"dim", 0},
                    {"low", -2.0},   {"high", 2.0},    {"steps", 3},
                    {"op", "avg"}};
    cfg["generate"] = {{"words", {"swan", "carp"}},
                       {"max_len", 6},
                       {"mode", "sample"}};

    for (const char* side : {"a", "b"}) {
        const fs::path dir = root / side;
        json c = cfg;
        c["corpus"] = (dir / "synth/corpus.jsonl").string();
        const fs::path cfg_path = root / (std::string("cfg_") + side + ".json");
        write_file(cfg_path, c.dump(2));
        auto run = [&](std::vector<std::string> args) {
            args.push_back("--config");
            args.push_back(cfg_path.string());
            const int rc = cli::run(args);
            out.check(rc == 0, args[0] + " exited " + std::to_string(rc));
        };
        run({"synth", "--out", (dir / "synth").string()});
        run({"train", "--out", (dir / "run").string()});
        run({"represent", "--checkpoint", (dir / "run/checkpoint.bin").string(),
             "--out", (dir / "reps").string()});
        run({"eval", "--checkpoint", (dir / "run/checkpoint.bin").string(),
             "--out", (dir / "eval").string()});
        run({"probe", "--checkpoint", (dir / "run/checkpoint.bin").string(),
             "--out", (dir / "probe").string()});
        run({"defmod-train", "--out", (dir / "dm").string()});
        run({"generate", "--checkpoint", (dir / "dm/checkpoint.bin").string(),
             "--out", (dir / "gen").string()});
        run({"defmod-eval", "--checkpoint", (dir / "dm/checkpoint.bin").string(),
             "--out", (dir / "dmeval").string()});
    }

    // train_log.json carries wall-clock seconds and is exempt; everything
    // else must match byte for byte. Manifests embed absolute paths that
    // differ between the two runs, so compare them with the side stripped.
    const std::vector<std::string> artifacts = {
        "synth/corpus.jsonl",   "synth/truth.json",
        "run/checkpoint.bin",   "reps/representations.json",
        "eval/metrics.json",    "eval/metrics.csv",
        "probe/traversal.json", "probe/interpolation.json",
        "probe/arithmetic.json", "probe/plot.json",
        "probe/plot.svg",       "dm/checkpoint.bin",
        "gen/definitions.jsonl", "dmeval/defmod_eval.json",
    };
    for (const std::string& rel : artifacts) {
        const std::string a = slurp(root / "a" / rel);
        const std::string b = slurp(root / "b" / rel);
        out.check(a == b, rel + " differs between identical runs");
    }
    fs::remove_all(root);
    return out;
}

// --- criterion 10: grid shape -------------------------------------------------

Outcome criterion_grid() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    const fs::path root = fs::temp_directory_path() / "defdis_acceptance_grid";
    fs::remove_all(root);
    fs::create_directories(root);

    json cfg;
    cfg["corpus"] = (root / "synth/corpus.jsonl").string();
    cfg["seed"] = 23;
    cfg["min_freq"] = 1;
    cfg["split"] = {{"fractions", {0.9, 0.1, 0.0}}};
    cfg["vae"] = {{"variant", "u"},   {"z_dim", 4},
                  {"hidden_dim", 24}, {"embed_dim", 12},
                  {"kl_weight", 0.1}, {"epochs", 1},
                  {"batch_size", 32}, {"dropout", 0.2},
                  {"learning_rate", 0.003}, {"seed", 0}};
    cfg["metrics"] = {{"min_samples", 100}};
    cfg["synth"] = {{"builtin", "definitional"}, {"count", 200}};
    cfg["grid"] = {{"variants", {"u", "s", "c"}},
                   {"groupings", {"group1", "group2", "group3", "group4"}},
                   {"z_dims", {4, 5, 7, 128}}};
    const fs::path cfg_path = root / "cfg.json";
    write_file(cfg_path, cfg.dump(2));

    int rc = cli::run({"synth", "--config", cfg_path.string(), "--out",
                       (root / "synth").string()});
    out.check(rc == 0, "synth exited " + std::to_string(rc));
    rc = cli::run({"grid", "--config", cfg_path.string(), "--out",
                   (root / "grid").string()});
    out.check(rc == 0, "grid exited " + std::to_string(rc));

    const std::string csv = slurp(root / "grid/grid.csv");
    std::vector<std::string> lines;
    std::istringstream stream(csv);
    for (std::string line; std::getline(stream, line);) {
        if (!line.empty()) lines.push_back(line);
    }
    out.check(!lines.empty() &&
                  lines[0] == "variant,grouping,z_dim,seed," +
                                  metrics::MetricReport::csv_header(),
              "fixed grid csv column order");
    std::ostringstream msg;
    msg << lines.size() - 1 << " data rows";
    out.check(lines.size() == 49, msg.str());
    if (out.ok) out.detail = msg.str();

    const double elapsed = seconds_since(t0);
    out.check(elapsed < 1200.0, "runtime " + std::to_string(elapsed) + "s");
    fs::remove_all(root);
    return out;
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {1, "gradient integrity (u/s/c vs finite differences)", criterion_gradients},
    {2, "closed-form KL vs Monte-Carlo", criterion_kl},
    {3, "metric oracle suite", criterion_metric_oracle},
    {4, "metric chance suite", criterion_metric_chance},
    {5, "mutual-information oracle equivalence", criterion_mi_oracle},
    {6, "directional replication (conditional vs unsupervised)",
     criterion_directional},
    {7, "interpolation contract", criterion_interpolation},
    {8, "definition-modeling sanity", criterion_defmod},
    {9, "bit-identical re-runs", criterion_determinism},
    {10, "grid shape (3 x 4 x 4, 48 rows)", criterion_grid},
};

}  // namespace

int main(int argc, char** argv) {
    int selected = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            selected = std::atoi(argv[++i]);
        }
    }

    bool all_ok = true;
    for (const Criterion& crit : kCriteria) {
        if (selected != 0 && crit.id != selected) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = crit.fn();
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double elapsed = seconds_since(t0);
        std::cout << (outcome.ok ? "PASS" : "FAIL") << " criterion " << crit.id
                  << ": " << crit.name << " [" << elapsed << "s]";
        if (!outcome.detail.empty()) std::cout << " -- " << outcome.detail;
        std::cout << "\n" << std::flush;
        all_ok = all_ok && outcome.ok;
    }
    return all_ok ? 0 : 1;
}
