#include "defdis/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "defdis/corpus.hpp"
#include "defdis/defmod.hpp"
#include "defdis/metrics.hpp"
#include "defdis/probes.hpp"
#include "defdis/vae.hpp"

namespace defdis::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

// --- resolved experiment configuration -----------------------------------

struct ProbeParams {
    std::size_t sentence = 0;
    std::size_t sentence2 = 1;
    probes::TraversalSpec spec{};
    std::string op = "avg";
};

struct GridParams {
    std::vector<std::string> variants = {"u", "s", "c"};
    std::vector<std::string> groupings = {"group1", "group2", "group3",
                                          "group4"};
    std::vector<int> z_dims = {4, 5, 7, 128};
};

struct ExperimentConfig {
    int schema_version = 1;
    std::string corpus;
    std::string grouping = "group1";
    std::string checkpoint;
    std::string out = "out";
    std::uint64_t seed = 0;
    std::string format = "json";
    std::array<double, 3> fractions = {0.8, 0.1, 0.1};
    int min_freq = 2;
    bool paper_scale = false;
    vae::VaeConfig vae{};
    metrics::MetricConfig metrics{};
    json synth;  // empty -> builtin definitional spec
    ProbeParams probe{};
    defmod::GenerationConfig gen{};
    std::vector<std::string> words;
    GridParams grid{};

    json to_json() const;
};

json ExperimentConfig::to_json() const {
    json obj;
    obj["schema_version"] = schema_version;
    obj["corpus"] = corpus;
    obj["grouping"] = grouping;
    obj["checkpoint"] = checkpoint;
    obj["out"] = out;
    obj["seed"] = seed;
    obj["format"] = format;
    obj["split"] = {{"fractions", fractions}};
    obj["min_freq"] = min_freq;
    obj["paper_scale"] = paper_scale;
    obj["vae"] = json::parse(vae.to_json_text());
    obj["metrics"] = json::parse(metrics.to_json_text());
    if (!synth.is_null()) obj["synth"] = synth;
    obj["probe"] = {{"sentence", probe.sentence},
                    {"sentence2", probe.sentence2},
                    {"dim", probe.spec.dim},
                    {"low", probe.spec.low},
                    {"high", probe.spec.high},
                    {"steps", probe.spec.steps},
                    {"op", probe.op}};
    obj["generate"] = {
        {"words", words},
        {"max_len", gen.max_len},
        {"temperature", gen.temperature},
        {"mode", gen.mode == defmod::GenMode::kGreedy ? "greedy" : "sample"}};
    obj["grid"] = {{"variants", grid.variants},
                   {"groupings", grid.groupings},
                   {"z_dims", grid.z_dims}};
    return obj;
}

ExperimentConfig config_from_json(const json& obj) {
    ExperimentConfig cfg;
    try {
        if (obj.contains("schema_version") &&
            obj.at("schema_version").get<int>() != 1) {
            throw UsageError("unsupported config schema_version");
        }
        cfg.corpus = obj.value("corpus", cfg.corpus);
        cfg.grouping = obj.value("grouping", cfg.grouping);
        cfg.checkpoint = obj.value("checkpoint", cfg.checkpoint);
        cfg.out = obj.value("out", cfg.out);
        cfg.seed = obj.value("seed", cfg.seed);
        cfg.format = obj.value("format", cfg.format);
        cfg.min_freq = obj.value("min_freq", cfg.min_freq);
        cfg.paper_scale = obj.value("paper_scale", cfg.paper_scale);
        if (obj.contains("split")) {
            const auto f =
                obj.at("split").at("fractions").get<std::vector<double>>();
            if (f.size() != 3) {
                throw UsageError("split.fractions must have 3 entries");
            }
            cfg.fractions = {f[0], f[1], f[2]};
        }
        if (obj.contains("vae")) {
            cfg.vae = vae::VaeConfig::from_json_text(obj.at("vae").dump());
        }
        if (obj.contains("metrics")) {
            cfg.metrics =
                metrics::MetricConfig::from_json_text(obj.at("metrics").dump());
        }
        if (obj.contains("synth")) cfg.synth = obj.at("synth");
        if (obj.contains("probe")) {
            const json& p = obj.at("probe");
            cfg.probe.sentence = p.value("sentence", cfg.probe.sentence);
            cfg.probe.sentence2 = p.value("sentence2", cfg.probe.sentence2);
            cfg.probe.spec.dim = p.value("dim", cfg.probe.spec.dim);
            cfg.probe.spec.low = p.value("low", cfg.probe.spec.low);
            cfg.probe.spec.high = p.value("high", cfg.probe.spec.high);
            cfg.probe.spec.steps = p.value("steps", cfg.probe.spec.steps);
            cfg.probe.op = p.value("op", cfg.probe.op);
        }
        if (obj.contains("generate")) {
            const json& g = obj.at("generate");
            if (g.contains("words")) {
                cfg.words = g.at("words").get<std::vector<std::string>>();
            }
            cfg.gen.max_len = g.value("max_len", cfg.gen.max_len);
            cfg.gen.temperature = g.value("temperature", cfg.gen.temperature);
            if (g.contains("mode")) {
                cfg.gen.mode =
                    defmod::parse_gen_mode(g.at("mode").get<std::string>());
            }
        }
        if (obj.contains("grid")) {
            const json& g = obj.at("grid");
            if (g.contains("variants")) {
                cfg.grid.variants =
                    g.at("variants").get<std::vector<std::string>>();
            }
            if (g.contains("groupings")) {
                cfg.grid.groupings =
                    g.at("groupings").get<std::vector<std::string>>();
            }
            if (g.contains("z_dims")) {
                cfg.grid.z_dims = g.at("z_dims").get<std::vector<int>>();
            }
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    return cfg;
}

corpus::FactorGrouping resolve_grouping(const std::string& name) {
    try {
        return corpus::builtin_grouping(name);
    } catch (const ConfigError&) {
        if (!fs::exists(name)) {
            throw UsageError("grouping \"" + name +
                             "\" is neither builtin nor an existing file");
        }
        return corpus::FactorGrouping::load(name);
    }
}

std::vector<corpus::DefinitionRecord> load_corpus_checked(
    const std::string& path) {
    if (path.empty()) throw UsageError("--corpus is required");
    if (!fs::exists(path)) throw UsageError("corpus file not found: " + path);
    return corpus::load_jsonl(path);
}

vae::VaeModel load_checkpoint_checked(const std::string& path) {
    if (path.empty()) throw UsageError("--checkpoint is required");
    if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
    return vae::load_checkpoint(path);
}

// Reproducibility manifest: resolved config, seed, version, input digests.
struct Manifest {
    std::string command;
    json config;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> inputs;
    std::vector<std::string> outputs;

    void add_input(const std::string& path) {
        inputs.emplace_back(path, "fnv1a64:" + fnv1a64_hex(read_file(path)));
    }
    void write(const fs::path& outdir) const {
        json obj;
        obj["schema_version"] = 1;
        obj["command"] = command;
        obj["defdis_version"] = kVersion;
        obj["seed"] = seed;
        obj["config"] = config;
        json in = json::object();
        for (const auto& [path, digest] : inputs) in[path] = digest;
        obj["inputs"] = std::move(in);
        obj["outputs"] = outputs;
        write_file(outdir / (command + ".manifest.json"), obj.dump(2) + "\n");
    }
};

fs::path ensure_outdir(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) {
        throw UsageError("cannot create output directory " + out.string());
    }
    return out;
}

// Global seed drives every stage.
vae::VaeConfig vae_config_for(const ExperimentConfig& cfg) {
    vae::VaeConfig v = cfg.vae;
    v.seed = cfg.seed;
    return v;
}

metrics::MetricConfig metric_config_for(const ExperimentConfig& cfg) {
    metrics::MetricConfig m = cfg.metrics;
    m.seed = cfg.seed;
    return m;
}

// --- subcommands ----------------------------------------------------------

int cmd_synth(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    corpus::SynthSpec spec;
    if (cfg.synth.is_null() || (cfg.synth.contains("builtin"))) {
        std::size_t count = 2000;
        if (!cfg.synth.is_null()) {
            count = cfg.synth.value("count", count);
            const std::string builtin =
                cfg.synth.value("builtin", std::string("definitional"));
            if (builtin != "definitional") {
                throw UsageError("unknown builtin synthetic spec \"" + builtin +
                                 "\"");
            }
        }
        spec = corpus::definitional_synth_spec(count);
    } else {
        spec = corpus::SynthSpec::from_json_text(cfg.synth.dump());
    }

    const corpus::SynthResult result = corpus::synth_corpus(spec, cfg.seed);
    corpus::save_jsonl(result.records, out / "corpus.jsonl");

    json truth;
    truth["factor_names"] = result.truth.factor_names;
    truth["cardinalities"] = result.truth.cardinalities;
    json rows = json::array();
    for (std::size_t i = 0; i < result.truth.n; ++i) {
        json row = json::array();
        for (std::size_t k = 0; k < result.truth.factor_count(); ++k) {
            row.push_back(result.truth.at(i, k));
        }
        rows.push_back(std::move(row));
    }
    truth["values"] = std::move(rows);
    truth["grouping"] =
        json::parse(spec.induced_grouping().to_json_text());
    write_file(out / "truth.json", truth.dump(2) + "\n");

    Manifest manifest{"synth", cfg.to_json(), cfg.seed, {}, {}};
    manifest.outputs = {"corpus.jsonl", "truth.json"};
    manifest.write(out);
    std::cerr << "defdis: wrote " << result.records.size() << " records to "
              << (out / "corpus.jsonl").string() << "\n";
    return 0;
}

int train_common(const ExperimentConfig& cfg, bool seeded) {
    const fs::path out = ensure_outdir(cfg);
    const auto records = load_corpus_checked(cfg.corpus);
    const corpus::SplitResult split =
        corpus::split(records, cfg.fractions, cfg.seed);
    if (split.train.empty()) throw UsageError("train split is empty");

    const vae::VaeConfig vcfg = vae_config_for(cfg);
    std::pair<vae::VaeModel, vae::TrainLog> trained =
        seeded ? defmod::train_seeded(
                     vcfg, split.train, split.valid,
                     defmod::build_seeded_vocab(split.train, cfg.min_freq))
               : vae::train(vcfg, split.train, split.valid,
                            corpus::Vocab::build(split.train, cfg.min_freq));

    vae::save_checkpoint(trained.first, out / "checkpoint.bin");
    write_file(out / "train_log.json", trained.second.to_json_text() + "\n");

    Manifest manifest{seeded ? "defmod-train" : "train", cfg.to_json(),
                      cfg.seed, {}, {}};
    manifest.add_input(cfg.corpus);
    manifest.outputs = {"checkpoint.bin", "train_log.json"};
    manifest.write(out);
    return 0;
}

int cmd_represent(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    const auto records = load_corpus_checked(cfg.corpus);
    const vae::VaeModel model = load_checkpoint_checked(cfg.checkpoint);
    const Tensor reps = model.represent(records);

    std::vector<std::string> outputs;
    if (cfg.format == "csv") {
        std::string csv;
        for (std::size_t i = 0; i < reps.rows(); ++i) {
            for (std::size_t j = 0; j < reps.cols(); ++j) {
                if (j) csv += ",";
                csv += json(reps.at(i, j)).dump();
            }
            csv += "\n";
        }
        write_file(out / "representations.csv", csv);
        outputs = {"representations.csv"};
    } else if (cfg.format == "json") {
        json obj;
        obj["shape"] = {reps.rows(), reps.cols()};
        json rows = json::array();
        for (std::size_t i = 0; i < reps.rows(); ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < reps.cols(); ++j) {
                row.push_back(reps.at(i, j));
            }
            rows.push_back(std::move(row));
        }
        obj["data"] = std::move(rows);
        write_file(out / "representations.json", obj.dump() + "\n");
        outputs = {"representations.json"};
    } else {
        throw UsageError("--format must be json or csv");
    }

    Manifest manifest{"represent", cfg.to_json(), cfg.seed, {}, outputs};
    manifest.add_input(cfg.corpus);
    manifest.add_input(cfg.checkpoint);
    manifest.write(out);
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    const auto records = load_corpus_checked(cfg.corpus);
    const vae::VaeModel model = load_checkpoint_checked(cfg.checkpoint);
    const corpus::FactorGrouping grouping = resolve_grouping(cfg.grouping);

    const Tensor reps = model.represent(records);
    const corpus::FactorMatrix factors = corpus::factor_matrix(records, grouping);
    const metrics::MetricReport report =
        metrics::evaluate_all(reps, factors, metric_config_for(cfg));

    write_file(out / "metrics.json", report.to_json_text() + "\n");
    write_file(out / "metrics.csv", metrics::MetricReport::csv_header() + "\n" +
                                        report.csv_row(cfg.paper_scale) + "\n");

    Manifest manifest{"eval", cfg.to_json(), cfg.seed, {}, {}};
    manifest.add_input(cfg.corpus);
    manifest.add_input(cfg.checkpoint);
    manifest.outputs = {"metrics.json", "metrics.csv"};
    manifest.write(out);
    std::cout << metrics::MetricReport::csv_header() << "\n"
              << report.csv_row(cfg.paper_scale) << "\n";
    return 0;
}

int cmd_probe(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    const auto records = load_corpus_checked(cfg.corpus);
    const vae::VaeModel model = load_checkpoint_checked(cfg.checkpoint);
    if (cfg.probe.sentence >= records.size() ||
        cfg.probe.sentence2 >= records.size()) {
        throw UsageError("probe sentence index out of range");
    }
    const corpus::DefinitionRecord& s1 = records[cfg.probe.sentence];
    const corpus::DefinitionRecord& s2 = records[cfg.probe.sentence2];

    auto wrap = [](const json& inputs, const probes::TraversalResult& r) {
        json obj = json::parse(r.to_json_text());
        obj["inputs"] = inputs;
        return obj.dump(2) + "\n";
    };

    const probes::TraversalResult traversal =
        probes::traverse(model, s1, cfg.probe.spec);
    write_file(out / "traversal.json",
               wrap(json{{"sentence", s1.tokens},
                         {"dim", cfg.probe.spec.dim},
                         {"low", cfg.probe.spec.low},
                         {"high", cfg.probe.spec.high},
                         {"steps", cfg.probe.spec.steps}},
                    traversal));

    const probes::TraversalResult interp = probes::interpolate(model, s1, s2);
    write_file(out / "interpolation.json",
               wrap(json{{"sentence1", s1.tokens}, {"sentence2", s2.tokens}},
                    interp));

    // Arithmetic on the two posterior means, then a traversal of the result.
    const auto enc = vae::encode_records({s1, s2}, model.vocab());
    const bool conditional = model.config().variant == vae::Variant::kC;
    const auto [mu1, lv1] = conditional
                                ? model.encode(enc[0].token_ids, &enc[0].role_ids)
                                : model.encode(enc[0].token_ids);
    const auto [mu2, lv2] = conditional
                                ? model.encode(enc[1].token_ids, &enc[1].role_ids)
                                : model.encode(enc[1].token_ids);
    const Tensor zop =
        probes::latent_arithmetic(mu1, mu2, probes::parse_arith_op(cfg.probe.op));
    std::optional<Tensor> cond;
    if (conditional) cond = model.role_summary(enc[0].role_ids);
    const probes::TraversalResult arith = probes::traverse_latent(
        model, zop, cfg.probe.spec, cond ? &*cond : nullptr);
    write_file(out / "arithmetic.json",
               wrap(json{{"sentence1", s1.tokens},
                         {"sentence2", s2.tokens},
                         {"op", cfg.probe.op},
                         {"result_latent", zop.data()}},
                    arith));

    // 2-D projection of the whole corpus, colored by dominant role.
    const Tensor reps = model.represent(records);
    std::vector<std::string> labels;
    labels.reserve(records.size());
    for (const auto& rec : records) {
        labels.push_back(probes::dominant_role(rec));
    }
    const probes::ProjectionPlot plot = probes::project2d(reps, labels);
    write_file(out / "plot.json", plot.to_json_text() + "\n");
    probes::render_svg(plot, out / "plot.svg");

    Manifest manifest{"probe", cfg.to_json(), cfg.seed, {}, {}};
    manifest.add_input(cfg.corpus);
    manifest.add_input(cfg.checkpoint);
    manifest.outputs = {"traversal.json", "interpolation.json",
                        "arithmetic.json", "plot.json", "plot.svg"};
    manifest.write(out);
    return 0;
}

int cmd_generate(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    const vae::VaeModel model = load_checkpoint_checked(cfg.checkpoint);
    if (cfg.words.empty()) {
        throw UsageError("no words to define (pass them as arguments or in "
                         "config generate.words)");
    }
    std::string lines;
    defmod::GenerationConfig gen = cfg.gen;
    for (std::size_t i = 0; i < cfg.words.size(); ++i) {
        gen.seed = cfg.seed + i;
        const auto tokens =
            defmod::generate_definition(model, cfg.words[i], gen);
        json obj;
        obj["word"] = cfg.words[i];
        obj["definition"] = tokens;
        obj["seed"] = gen.seed;
        lines += obj.dump() + "\n";
        std::cout << cfg.words[i] << " ->";
        for (const auto& t : tokens) std::cout << " " << t;
        std::cout << "\n";
    }
    write_file(out / "definitions.jsonl", lines);

    Manifest manifest{"generate", cfg.to_json(), cfg.seed, {}, {}};
    manifest.add_input(cfg.checkpoint);
    manifest.outputs = {"definitions.jsonl"};
    manifest.write(out);
    return 0;
}

int cmd_defmod_eval(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    const auto records = load_corpus_checked(cfg.corpus);
    const vae::VaeModel model = load_checkpoint_checked(cfg.checkpoint);
    defmod::GenerationConfig gen = cfg.gen;
    gen.seed = cfg.seed;
    const defmod::EvalScores scores = defmod::evaluate(model, records, gen);
    write_file(out / "defmod_eval.json", scores.to_json_text() + "\n");

    Manifest manifest{"defmod-eval", cfg.to_json(), cfg.seed, {}, {}};
    manifest.add_input(cfg.corpus);
    manifest.add_input(cfg.checkpoint);
    manifest.outputs = {"defmod_eval.json"};
    manifest.write(out);
    std::cout << scores.to_json_text() << "\n";
    return 0;
}

std::string cell_name(std::size_t index, const std::string& variant,
                      const std::string& grouping, int z_dim) {
    std::string g = fs::path(grouping).stem().string();
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu", index);
    return std::string("cell_") + buf + "_" + variant + "_" + g + "_z" +
           std::to_string(z_dim) + ".json";
}

int cmd_grid(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    const fs::path cells = out / "cells";
    std::error_code ec;
    fs::create_directories(cells, ec);
    const auto records = load_corpus_checked(cfg.corpus);
    const corpus::SplitResult split =
        corpus::split(records, cfg.fractions, cfg.seed);
    if (split.train.empty()) throw UsageError("train split is empty");

    std::size_t computed = 0, cached = 0, failed = 0;
    std::size_t index = 0;
    std::vector<std::string> row_files;
    for (const std::string& variant : cfg.grid.variants) {
        for (const std::string& grouping_name : cfg.grid.groupings) {
            for (const int z_dim : cfg.grid.z_dims) {
                const std::string name =
                    cell_name(index, variant, grouping_name, z_dim);
                const fs::path cell_path = cells / name;
                row_files.push_back(name);
                const std::uint64_t cell_seed = cfg.seed + index;
                ++index;

                if (fs::exists(cell_path)) {
                    try {
                        const json done = json::parse(read_file(cell_path));
                        if (done.contains("metrics")) {
                            ++cached;
                            continue;
                        }
                    } catch (...) {
                        // fall through and recompute
                    }
                }

                json cell;
                cell["variant"] = variant;
                cell["grouping"] = fs::path(grouping_name).stem().string();
                cell["z_dim"] = z_dim;
                cell["seed"] = cell_seed;
                try {
                    const corpus::FactorGrouping grouping =
                        resolve_grouping(grouping_name);
                    vae::VaeConfig vcfg = vae_config_for(cfg);
                    vcfg.variant = vae::parse_variant(variant);
                    vcfg.z_dim = z_dim;
                    vcfg.seed = cell_seed;
                    auto [model, log] =
                        vae::train(vcfg, split.train, split.valid,
                                   corpus::Vocab::build(split.train,
                                                        cfg.min_freq));
                    const Tensor reps = model.represent(records);
                    const corpus::FactorMatrix factors =
                        corpus::factor_matrix(records, grouping);
                    metrics::MetricConfig mcfg = metric_config_for(cfg);
                    mcfg.seed = cell_seed;
                    const metrics::MetricReport report =
                        metrics::evaluate_all(reps, factors, mcfg);
                    cell["metrics"] = json::parse(report.to_json_text());
                    ++computed;
                } catch (const std::exception& e) {
                    cell["error"] = e.what();
                    ++failed;
                    std::cerr << "defdis: grid cell " << name
                              << " failed: " << e.what() << "\n";
                }
                write_file(cell_path, cell.dump(2) + "\n");
            }
        }
    }

    // One CSV row per successful cell, in cell order.
    std::string csv = "variant,grouping,z_dim,seed," +
                      metrics::MetricReport::csv_header() + "\n";
    for (const std::string& name : row_files) {
        const fs::path cell_path = cells / name;
        if (!fs::exists(cell_path)) continue;
        const json cell = json::parse(read_file(cell_path));
        if (!cell.contains("metrics")) continue;
        const metrics::MetricReport report =
            metrics::MetricReport::from_json_text(cell.at("metrics").dump());
        csv += cell.at("variant").get<std::string>() + "," +
               cell.at("grouping").get<std::string>() + "," +
               std::to_string(cell.at("z_dim").get<int>()) + "," +
               std::to_string(cell.at("seed").get<std::uint64_t>()) + "," +
               report.csv_row(cfg.paper_scale) + "\n";
    }
    write_file(out / "grid.csv", csv);

    Manifest manifest{"grid", cfg.to_json(), cfg.seed, {}, {}};
    manifest.add_input(cfg.corpus);
    for (const std::string& name : row_files) {
        manifest.outputs.push_back("cells/" + name);
    }
    manifest.outputs.push_back("grid.csv");
    manifest.write(out);

    std::cerr << "defdis: grid " << computed << " computed, " << cached
              << " cached, " << failed << " failed\n";
    return failed == 0 ? 0 : 1;
}

// Regenerate derived CSV/SVG artifacts from raw JSON without recomputation.
int cmd_report(const ExperimentConfig& cfg) {
    const fs::path out = ensure_outdir(cfg);
    std::size_t regenerated = 0;
    if (fs::exists(out / "metrics.json")) {
        const metrics::MetricReport report = metrics::MetricReport::from_json_text(
            read_file(out / "metrics.json"));
        write_file(out / "metrics.csv",
                   metrics::MetricReport::csv_header() + "\n" +
                       report.csv_row(cfg.paper_scale) + "\n");
        ++regenerated;
    }
    if (fs::exists(out / "plot.json")) {
        const probes::ProjectionPlot plot =
            probes::ProjectionPlot::from_json_text(read_file(out / "plot.json"));
        probes::render_svg(plot, out / "plot.svg");
        ++regenerated;
    }
    if (fs::exists(out / "cells")) {
        std::string csv = "variant,grouping,z_dim,seed," +
                          metrics::MetricReport::csv_header() + "\n";
        std::vector<fs::path> cell_files;
        for (const auto& entry : fs::directory_iterator(out / "cells")) {
            if (entry.path().extension() == ".json") {
                cell_files.push_back(entry.path());
            }
        }
        std::sort(cell_files.begin(), cell_files.end());
        for (const fs::path& cell_path : cell_files) {
            const json cell = json::parse(read_file(cell_path));
            if (!cell.contains("metrics")) continue;
            const metrics::MetricReport report =
                metrics::MetricReport::from_json_text(cell.at("metrics").dump());
            csv += cell.at("variant").get<std::string>() + "," +
                   cell.at("grouping").get<std::string>() + "," +
                   std::to_string(cell.at("z_dim").get<int>()) + "," +
                   std::to_string(cell.at("seed").get<std::uint64_t>()) + "," +
                   report.csv_row(cfg.paper_scale) + "\n";
        }
        write_file(out / "grid.csv", csv);
        ++regenerated;
    }
    if (regenerated == 0) {
        std::cerr << "defdis: nothing to report in " << out.string() << "\n";
    }
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"defdis: disentangled representation laboratory for "
                 "natural-language definitions"};
    app.require_subcommand(1);

    std::string config_path, corpus_path, grouping, checkpoint, out_dir, format,
        variant;
    std::optional<std::uint64_t> seed;
    std::optional<int> z_dim, epochs, bins;
    std::vector<std::string> words;

    auto add_common = [&](CLI::App* sub, bool takes_words = false) {
        sub->add_option("--config", config_path, "experiment config JSON");
        sub->add_option("--corpus", corpus_path, "JSONL corpus file");
        sub->add_option("--grouping", grouping,
                        "builtin grouping name or grouping JSON file");
        sub->add_option("--checkpoint", checkpoint, "model checkpoint");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "global seed");
        sub->add_option("--z-dim", z_dim, "latent dimensionality");
        sub->add_option("--variant", variant, "vae variant: u, s or c");
        sub->add_option("--epochs", epochs, "training epochs");
        sub->add_option("--bins", bins, "discretization bins");
        sub->add_option("--format", format, "output format: json or csv");
        if (takes_words) {
            sub->add_option("words", words, "definienda to define");
        }
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    CLI::App* train = app.add_subcommand("train", "train a definition VAE");
    CLI::App* represent =
        app.add_subcommand("represent", "emit posterior-mean representations");
    CLI::App* eval =
        app.add_subcommand("eval", "run the eight disentanglement metrics");
    CLI::App* probe = app.add_subcommand(
        "probe", "latent traversal, arithmetic, interpolation, projection");
    CLI::App* generate =
        app.add_subcommand("generate", "generate definitions for words");
    CLI::App* defmod_train =
        app.add_subcommand("defmod-train", "train with the seed setup");
    CLI::App* defmod_eval = app.add_subcommand(
        "defmod-eval", "perplexity and BLEU of a seeded model");
    CLI::App* report = app.add_subcommand(
        "report", "regenerate CSV/SVG outputs from stored raw JSON");
    CLI::App* grid = app.add_subcommand(
        "grid", "run the variant x grouping x z_dim cross-product");
    for (CLI::App* sub : {synth, train, represent, eval, probe, defmod_train,
                          defmod_eval, report, grid}) {
        add_common(sub);
    }
    add_common(generate, true);

    if (args.empty()) {
        std::cerr << app.help() << "\n";
        return 2;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            std::cout << app.help() << "\n";
            return 0;
        }
        std::cerr << "defdis: " << e.what() << "\n" << app.help() << "\n";
        return 2;
    }

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) {
            if (!fs::exists(config_path)) {
                throw UsageError("config file not found: " + config_path);
            }
            try {
                cfg = config_from_json(json::parse(read_file(config_path)));
            } catch (const json::exception& e) {
                throw UsageError(std::string("config: ") + e.what());
            }
        }
        // Flags override file values.
        if (!corpus_path.empty()) cfg.corpus = corpus_path;
        if (!grouping.empty()) cfg.grouping = grouping;
        if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
        if (!out_dir.empty()) cfg.out = out_dir;
        if (seed) cfg.seed = *seed;
        if (z_dim) cfg.vae.z_dim = *z_dim;
        if (!variant.empty()) cfg.vae.variant = vae::parse_variant(variant);
        if (epochs) cfg.vae.epochs = *epochs;
        if (bins) cfg.metrics.bins = *bins;
        if (!format.empty()) cfg.format = format;
        if (!words.empty()) cfg.words = words;

        if (synth->parsed()) return cmd_synth(cfg);
        if (train->parsed()) return train_common(cfg, false);
        if (represent->parsed()) return cmd_represent(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        if (probe->parsed()) return cmd_probe(cfg);
        if (generate->parsed()) return cmd_generate(cfg);
        if (defmod_train->parsed()) return train_common(cfg, true);
        if (defmod_eval->parsed()) return cmd_defmod_eval(cfg);
        if (report->parsed()) return cmd_report(cfg);
        if (grid->parsed()) return cmd_grid(cfg);
        std::cerr << app.help() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "defdis: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "defdis: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "defdis: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace defdis::cli
