#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "defdis/cli.hpp"
#include "defdis/corpus.hpp"
#include "defdis/defmod.hpp"
#include "defdis/graph.hpp"
#include "defdis/metrics.hpp"
#include "defdis/probes.hpp"
#include "defdis/vae.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace defdis;

namespace {

py::object json_to_py(const json& j) {
    switch (j.type()) {
        case json::value_t::null: return py::none();
        case json::value_t::boolean: return py::bool_(j.get<bool>());
        case json::value_t::number_integer:
            return py::int_(j.get<std::int64_t>());
        case json::value_t::number_unsigned:
            return py::int_(j.get<std::uint64_t>());
        case json::value_t::number_float: return py::float_(j.get<double>());
        case json::value_t::string: return py::str(j.get<std::string>());
        case json::value_t::array: {
            py::list out;
            for (const json& item : j) out.append(json_to_py(item));
            return out;
        }
        case json::value_t::object: {
            py::dict out;
            for (const auto& [key, value] : j.items()) {
                out[py::str(key)] = json_to_py(value);
            }
            return out;
        }
        default: return py::none();
    }
}

json py_to_json(const py::handle& obj) {
    if (obj.is_none()) return nullptr;
    if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
    if (py::isinstance<py::int_>(obj)) return obj.cast<std::int64_t>();
    if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
    if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
    if (py::isinstance<py::dict>(obj)) {
        json out = json::object();
        for (const auto& item : obj.cast<py::dict>()) {
            out[item.first.cast<std::string>()] = py_to_json(item.second);
        }
        return out;
    }
    if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
        json out = json::array();
        for (const auto& item : obj.cast<py::sequence>()) {
            out.push_back(py_to_json(item));
        }
        return out;
    }
    throw py::type_error("unsupported value in configuration");
}

py::array_t<double> tensor_to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (std::size_t d : t.shape()) {
        shape.push_back(static_cast<py::ssize_t>(d));
    }
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor array_to_tensor(const py::array_t<double, py::array::c_style |
                                                      py::array::forcecast>& a) {
    std::vector<std::size_t> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) {
        shape.push_back(static_cast<std::size_t>(a.shape(i)));
    }
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

Tensor latent_from_array(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& a) {
    // Accept [z] or [1, z].
    Tensor t = array_to_tensor(a);
    if (t.shape().size() == 1) {
        return Tensor({1, t.size()}, t.data());
    }
    return t;
}

std::vector<corpus::Role> roles_from_strings(
    const std::vector<std::string>& names) {
    std::vector<corpus::Role> out;
    out.reserve(names.size());
    for (const std::string& name : names) out.push_back(corpus::parse_role(name));
    return out;
}

std::vector<std::string> roles_to_strings(const std::vector<corpus::Role>& roles) {
    std::vector<std::string> out;
    out.reserve(roles.size());
    for (corpus::Role r : roles) out.push_back(corpus::role_name(r));
    return out;
}

vae::VaeConfig vae_config_from_dict(const py::dict& d) {
    return vae::VaeConfig::from_json_text(py_to_json(d).dump());
}

metrics::MetricConfig metric_config_from(const py::object& obj) {
    if (obj.is_none()) return metrics::MetricConfig{};
    return metrics::MetricConfig::from_json_text(py_to_json(obj).dump());
}

py::array_t<int> factor_values_array(const corpus::FactorMatrix& m) {
    py::array_t<int> out({static_cast<py::ssize_t>(m.n),
                          static_cast<py::ssize_t>(m.factor_count())});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

py::dict traversal_to_dict(const probes::TraversalResult& r) {
    py::list latents;
    for (const Tensor& z : r.latents) latents.append(tensor_to_array(z));
    py::dict out;
    out["latents"] = latents;
    out["sentences"] = py::cast(r.sentences);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Disentangled representation laboratory for natural-language "
              "definitions";
    m.attr("__version__") = "0.1.0";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    static py::exception<Error> base_error(m, "DefdisError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const UsageError&) {
            throw;  // handled by the registered exceptions above
        } catch (const ConfigError&) {
            throw;
        } catch (const ParseError&) {
            throw;
        } catch (const DataError&) {
            throw;
        } catch (const DimensionError&) {
            throw;
        } catch (const Error& e) {
            base_error(e.what());
        }
    });

    // --- corpus -----------------------------------------------------------
    py::class_<corpus::DefinitionRecord>(m, "Record")
        .def(py::init([](const std::string& definiendum,
                         const std::vector<std::string>& tokens,
                         const std::vector<std::string>& roles,
                         const std::string& source) {
                 corpus::DefinitionRecord rec;
                 rec.definiendum = definiendum;
                 rec.tokens = tokens;
                 rec.roles = roles.empty()
                                 ? std::vector<corpus::Role>(
                                       tokens.size(), corpus::Role::kNone)
                                 : roles_from_strings(roles);
                 rec.source = source;
                 if (rec.roles.size() != rec.tokens.size()) {
                     throw UsageError("roles must align with tokens");
                 }
                 return rec;
             }),
             py::arg("definiendum"), py::arg("tokens"),
             py::arg("roles") = std::vector<std::string>{},
             py::arg("source") = "")
        .def_readwrite("definiendum", &corpus::DefinitionRecord::definiendum)
        .def_readwrite("tokens", &corpus::DefinitionRecord::tokens)
        .def_property(
            "roles",
            [](const corpus::DefinitionRecord& r) {
                return roles_to_strings(r.roles);
            },
            [](corpus::DefinitionRecord& r, const std::vector<std::string>& v) {
                r.roles = roles_from_strings(v);
            })
        .def_readwrite("source", &corpus::DefinitionRecord::source)
        .def("__repr__", [](const corpus::DefinitionRecord& r) {
            return "<Record definiendum='" + r.definiendum + "' tokens=" +
                   std::to_string(r.tokens.size()) + ">";
        });

    py::class_<corpus::Vocab>(m, "Vocab")
        .def_static("build", &corpus::Vocab::build, py::arg("records"),
                    py::arg("min_freq") = 2)
        .def("id", &corpus::Vocab::id)
        .def("token", &corpus::Vocab::token)
        .def("__len__", &corpus::Vocab::size)
        .def_property_readonly("tokens", &corpus::Vocab::tokens);

    py::class_<corpus::FactorGrouping>(m, "Grouping")
        .def_property_readonly(
            "name", [](const corpus::FactorGrouping& g) { return g.name; })
        .def_property_readonly(
            "factors",
            [](const corpus::FactorGrouping& g) {
                py::list out;
                for (const corpus::Factor& f : g.factors) {
                    py::dict item;
                    item["name"] = f.name;
                    item["roles"] = roles_to_strings(f.roles);
                    out.append(item);
                }
                return out;
            })
        .def_static("from_json", &corpus::FactorGrouping::from_json_text)
        .def("to_json", &corpus::FactorGrouping::to_json_text);

    py::class_<corpus::FactorMatrix>(m, "FactorMatrix")
        .def_property_readonly("values", &factor_values_array)
        .def_property_readonly(
            "factor_names",
            [](const corpus::FactorMatrix& m_) { return m_.factor_names; })
        .def_property_readonly(
            "cardinalities",
            [](const corpus::FactorMatrix& m_) { return m_.cardinalities; })
        .def_property_readonly(
            "degenerate",
            [](const corpus::FactorMatrix& m_) {
                return std::vector<bool>(m_.degenerate.begin(),
                                         m_.degenerate.end());
            });

    m.def("role_names", [] {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < corpus::kNumRoles; ++i) {
            out.push_back(corpus::role_name(static_cast<corpus::Role>(i)));
        }
        return out;
    });
    m.def("load_jsonl", &corpus::load_jsonl, py::arg("path"));
    m.def("save_jsonl", &corpus::save_jsonl, py::arg("records"),
          py::arg("path"));
    m.def("builtin_groupings", &corpus::builtin_groupings,
          py::return_value_policy::reference);
    m.def("builtin_grouping", &corpus::builtin_grouping, py::arg("name"),
          py::return_value_policy::reference);
    m.def("load_grouping", &corpus::FactorGrouping::load, py::arg("path"));
    m.def(
        "factor_matrix",
        [](const std::vector<corpus::DefinitionRecord>& records,
           const corpus::FactorGrouping& grouping, const std::string& encoding) {
            const corpus::FactorEncoding enc =
                encoding == "count" ? corpus::FactorEncoding::kCount
                                    : corpus::FactorEncoding::kPresence;
            return corpus::factor_matrix(records, grouping, enc);
        },
        py::arg("records"), py::arg("grouping"),
        py::arg("encoding") = "presence");
    m.def(
        "synth_definitional",
        [](std::size_t count, std::uint64_t seed) {
            const corpus::SynthSpec spec = corpus::definitional_synth_spec(count);
            corpus::SynthResult result = corpus::synth_corpus(spec, seed);
            return py::make_tuple(result.records, result.truth,
                                  spec.induced_grouping());
        },
        py::arg("count"), py::arg("seed") = 0);
    m.def(
        "synth_from_json",
        [](const std::string& spec_json, std::uint64_t seed) {
            const corpus::SynthSpec spec =
                corpus::SynthSpec::from_json_text(spec_json);
            corpus::SynthResult result = corpus::synth_corpus(spec, seed);
            return py::make_tuple(result.records, result.truth,
                                  spec.induced_grouping());
        },
        py::arg("spec_json"), py::arg("seed") = 0);
    m.def(
        "split",
        [](const std::vector<corpus::DefinitionRecord>& records, double train,
           double valid, double test, std::uint64_t seed) {
            corpus::SplitResult s =
                corpus::split(records, {train, valid, test}, seed);
            return py::make_tuple(s.train, s.valid, s.test);
        },
        py::arg("records"), py::arg("train") = 0.8, py::arg("valid") = 0.1,
        py::arg("test") = 0.1, py::arg("seed") = 0);

    // --- vae ---------------------------------------------------------------
    py::class_<vae::VaeModel>(m, "VaeModel")
        .def_property_readonly(
            "config",
            [](const vae::VaeModel& model) {
                return json_to_py(json::parse(model.config().to_json_text()));
            })
        .def_property_readonly(
            "vocab", [](const vae::VaeModel& model) { return model.vocab(); })
        .def_property_readonly("param_count", &vae::VaeModel::param_count)
        .def(
            "encode",
            [](const vae::VaeModel& model, const corpus::DefinitionRecord& rec) {
                const auto enc = vae::encode_records({rec}, model.vocab());
                const auto [mu, lv] =
                    model.config().variant == vae::Variant::kC
                        ? model.encode(enc[0].token_ids, &enc[0].role_ids)
                        : model.encode(enc[0].token_ids);
                return py::make_tuple(tensor_to_array(mu), tensor_to_array(lv));
            },
            py::arg("record"))
        .def(
            "represent",
            [](const vae::VaeModel& model,
               const std::vector<corpus::DefinitionRecord>& records) {
                return tensor_to_array(model.represent(records));
            },
            py::arg("records"))
        .def(
            "decode_greedy",
            [](const vae::VaeModel& model,
               const py::array_t<double, py::array::c_style |
                                             py::array::forcecast>& z,
               int max_len, const py::object& roles) {
                const Tensor zt = latent_from_array(z);
                std::vector<int> ids;
                if (roles.is_none()) {
                    ids = model.decode_greedy(zt, max_len);
                } else {
                    const auto role_strings =
                        roles.cast<std::vector<std::string>>();
                    std::vector<int> role_ids;
                    role_ids.push_back(
                        static_cast<int>(corpus::Role::kNone));
                    for (const auto& r :
                         roles_from_strings(role_strings)) {
                        role_ids.push_back(static_cast<int>(r));
                    }
                    role_ids.push_back(static_cast<int>(corpus::Role::kNone));
                    ids = model.decode_greedy(
                        zt, model.role_summary(role_ids), max_len);
                }
                return corpus::decode_tokens(ids, model.vocab());
            },
            py::arg("z"), py::arg("max_len") = 32,
            py::arg("roles") = py::none());

    m.def(
        "train",
        [](const py::dict& config,
           const std::vector<corpus::DefinitionRecord>& train_records,
           const std::vector<corpus::DefinitionRecord>& valid_records,
           const corpus::Vocab& vocab) {
            auto [model, log] = vae::train(vae_config_from_dict(config),
                                           train_records, valid_records, vocab);
            return py::make_tuple(
                std::move(model),
                json_to_py(json::parse(log.to_json_text())));
        },
        py::arg("config"), py::arg("train_records"),
        py::arg("valid_records") = std::vector<corpus::DefinitionRecord>{},
        py::arg("vocab"));
    m.def("save_checkpoint", &vae::save_checkpoint, py::arg("model"),
          py::arg("path"));
    m.def(
        "load_checkpoint",
        [](const std::string& path) { return vae::load_checkpoint(path); },
        py::arg("path"));

    // --- probes -------------------------------------------------------------
    m.def(
        "traverse",
        [](const vae::VaeModel& model, const corpus::DefinitionRecord& seed,
           int dim, double low, double high, int steps) {
            probes::TraversalSpec spec{dim, low, high, steps};
            return traversal_to_dict(probes::traverse(model, seed, spec));
        },
        py::arg("model"), py::arg("seed"), py::arg("dim") = 0,
        py::arg("low") = -3.0, py::arg("high") = 3.0, py::arg("steps") = 7);
    m.def(
        "interpolate",
        [](const vae::VaeModel& model, const corpus::DefinitionRecord& s1,
           const corpus::DefinitionRecord& s2) {
            return traversal_to_dict(probes::interpolate(model, s1, s2));
        },
        py::arg("model"), py::arg("s1"), py::arg("s2"));
    m.def(
        "latent_arithmetic",
        [](const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& z1,
           const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& z2,
           const std::string& op) {
            return tensor_to_array(probes::latent_arithmetic(
                latent_from_array(z1), latent_from_array(z2),
                probes::parse_arith_op(op)));
        },
        py::arg("z1"), py::arg("z2"), py::arg("op"));
    m.def(
        "project2d",
        [](const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& reps,
           const std::vector<std::string>& labels) {
            const probes::ProjectionPlot plot =
                probes::project2d(array_to_tensor(reps), labels);
            return json_to_py(json::parse(plot.to_json_text()));
        },
        py::arg("representations"), py::arg("labels"));
    m.def(
        "render_svg",
        [](const py::dict& plot, const std::string& path) {
            probes::render_svg(
                probes::ProjectionPlot::from_json_text(py_to_json(plot).dump()),
                path);
        },
        py::arg("plot"), py::arg("path"));
    m.def("dominant_role", &probes::dominant_role, py::arg("record"));

    // --- metrics -------------------------------------------------------------
    m.def(
        "mutual_information",
        [](const std::vector<int>& a, const std::vector<int>& b) {
            return metrics::mutual_information(a, b);
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "evaluate_all",
        [](const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& reps,
           const corpus::FactorMatrix& factors, const py::object& config) {
            const metrics::MetricReport report = metrics::evaluate_all(
                array_to_tensor(reps), factors, metric_config_from(config));
            return json_to_py(json::parse(report.to_json_text()));
        },
        py::arg("representations"), py::arg("factors"),
        py::arg("config") = py::none());

    // --- defmod ---------------------------------------------------------------
    m.def("seeded_records", &defmod::seeded_records, py::arg("records"));
    m.def("build_seeded_vocab", &defmod::build_seeded_vocab, py::arg("records"),
          py::arg("min_freq") = 2);
    m.def(
        "train_seeded",
        [](const py::dict& config,
           const std::vector<corpus::DefinitionRecord>& train_records,
           const std::vector<corpus::DefinitionRecord>& valid_records,
           const corpus::Vocab& vocab) {
            auto [model, log] =
                defmod::train_seeded(vae_config_from_dict(config), train_records,
                                     valid_records, vocab);
            return py::make_tuple(
                std::move(model), json_to_py(json::parse(log.to_json_text())));
        },
        py::arg("config"), py::arg("train_records"),
        py::arg("valid_records") = std::vector<corpus::DefinitionRecord>{},
        py::arg("vocab"));
    m.def(
        "generate_definition",
        [](const vae::VaeModel& model, const std::string& word, int max_len,
           double temperature, std::uint64_t seed, const std::string& mode) {
            defmod::GenerationConfig cfg;
            cfg.max_len = max_len;
            cfg.temperature = temperature;
            cfg.seed = seed;
            cfg.mode = defmod::parse_gen_mode(mode);
            return defmod::generate_definition(model, word, cfg);
        },
        py::arg("model"), py::arg("word"), py::arg("max_len") = 24,
        py::arg("temperature") = 1.0, py::arg("seed") = 0,
        py::arg("mode") = "sample");
    m.def("perplexity", &defmod::perplexity, py::arg("model"),
          py::arg("records"));
    m.def("bleu", &defmod::bleu, py::arg("candidates"), py::arg("references"));

    // --- numerics smoke surface -------------------------------------------------
    m.def(
        "matmul",
        [](const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& b) {
            Graph g;
            const auto id =
                g.matmul(g.constant(array_to_tensor(a)),
                         g.constant(array_to_tensor(b)));
            return tensor_to_array(g.value(id));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "gaussian_kl",
        [](const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& mu,
           const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& logvar) {
            Graph g;
            return g.value(g.gaussian_kl(g.constant(latent_from_array(mu)),
                                         g.constant(latent_from_array(logvar))))[0];
        },
        py::arg("mu"), py::arg("logvar"));
    m.def(
        "softmax_cross_entropy",
        [](const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& logits,
           const std::vector<int>& targets) {
            Graph g;
            return g.value(g.softmax_cross_entropy(
                g.constant(array_to_tensor(logits)), targets))[0];
        },
        py::arg("logits"), py::arg("targets"));
    m.def(
        "reparameterize",
        [](const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& mu,
           const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& logvar,
           const py::array_t<double, py::array::c_style |
                                         py::array::forcecast>& noise) {
            Graph g;
            const auto id = g.reparameterize(g.constant(latent_from_array(mu)),
                                             g.constant(latent_from_array(logvar)),
                                             latent_from_array(noise));
            return tensor_to_array(g.value(id));
        },
        py::arg("mu"), py::arg("logvar"), py::arg("noise"));

    // --- cli -----------------------------------------------------------------
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) { return cli::run(args); },
        py::arg("args"),
        "Run a defdis subcommand in-process; returns the exit code.");
}
