#include "defdis/probes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace defdis::probes {

using corpus::DefinitionRecord;
using nlohmann::json;
using vae::VaeModel;
using vae::Variant;

void TraversalSpec::validate(int z_dim) const {
    if (dim < 0 || dim >= z_dim) {
        throw UsageError("traversal dimension " + std::to_string(dim) +
                         " out of range for z_dim " + std::to_string(z_dim));
    }
    if (!(low < high)) {
        throw UsageError("traversal interval must satisfy low < high");
    }
    if (steps < 2) throw UsageError("traversal needs at least 2 steps");
}

namespace {

constexpr int kDecodeMaxLen = 48;

struct EncodedInput {
    std::vector<int> token_ids;
    std::vector<int> role_ids;
};

EncodedInput encode_input(const VaeModel& model, const DefinitionRecord& rec) {
    const auto enc = vae::encode_records({rec}, model.vocab());
    return {enc[0].token_ids, enc[0].role_ids};
}

Tensor posterior_mean(const VaeModel& model, const EncodedInput& in) {
    const auto [mu, lv] =
        model.config().variant == Variant::kC
            ? model.encode(in.token_ids, &in.role_ids)
            : model.encode(in.token_ids);
    return mu;
}

std::vector<std::string> decode_sentence(const VaeModel& model, const Tensor& z,
                                         const Tensor* condition) {
    const auto ids =
        condition ? model.decode_greedy(z, *condition, kDecodeMaxLen)
                  : model.decode_greedy(z, kDecodeMaxLen);
    return corpus::decode_tokens(ids, model.vocab());
}

}  // namespace

TraversalResult traverse_latent(const VaeModel& model, const Tensor& z,
                                const TraversalSpec& spec,
                                const Tensor* condition) {
    spec.validate(model.config().z_dim);
    TraversalResult out;
    for (int s = 0; s < spec.steps; ++s) {
        Tensor zt = z;
        zt[static_cast<std::size_t>(spec.dim)] =
            spec.low + (spec.high - spec.low) * static_cast<double>(s) /
                           static_cast<double>(spec.steps - 1);
        out.sentences.push_back(decode_sentence(model, zt, condition));
        out.latents.push_back(std::move(zt));
    }
    return out;
}

TraversalResult traverse(const VaeModel& model, const DefinitionRecord& seed,
                         const TraversalSpec& spec) {
    spec.validate(model.config().z_dim);
    const EncodedInput in = encode_input(model, seed);
    const Tensor mu = posterior_mean(model, in);
    std::optional<Tensor> cond;
    if (model.config().variant == Variant::kC) {
        cond = model.role_summary(in.role_ids);
    }
    return traverse_latent(model, mu, spec, cond ? &*cond : nullptr);
}

ArithOp parse_arith_op(const std::string& name) {
    if (name == "add" || name == "ADD") return ArithOp::kAdd;
    if (name == "sub" || name == "SUB") return ArithOp::kSub;
    if (name == "avg" || name == "AVG") return ArithOp::kAvg;
    throw ConfigError("unknown latent operation \"" + name + "\"");
}

Tensor latent_arithmetic(const Tensor& z1, const Tensor& z2, ArithOp op) {
    if (!z1.same_shape(z2)) {
        throw DimensionError("latent_arithmetic: shapes " + z1.shape_str() +
                             " and " + z2.shape_str() + " disagree");
    }
    Tensor out = z1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (op) {
            case ArithOp::kAdd: out[i] = z1[i] + z2[i]; break;
            case ArithOp::kSub: out[i] = z1[i] - z2[i]; break;
            case ArithOp::kAvg: out[i] = 0.5 * z1[i] + 0.5 * z2[i]; break;
        }
    }
    return out;
}

TraversalResult interpolate(const VaeModel& model, const DefinitionRecord& s1,
                            const DefinitionRecord& s2) {
    const EncodedInput in1 = encode_input(model, s1);
    const EncodedInput in2 = encode_input(model, s2);
    const Tensor z1 = posterior_mean(model, in1);
    const Tensor z2 = posterior_mean(model, in2);
    std::optional<Tensor> c1, c2;
    if (model.config().variant == Variant::kC) {
        c1 = model.role_summary(in1.role_ids);
        c2 = model.role_summary(in2.role_ids);
    }

    TraversalResult out;
    for (int step = 1; step <= 9; ++step) {
        // Integer-derived weights make the reversed run bit-identical.
        const double w2 = static_cast<double>(step) / 10.0;
        const double w1 = static_cast<double>(10 - step) / 10.0;
        Tensor z = z1;
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = z1[i] * w1 + z2[i] * w2;
        }
        std::optional<Tensor> cond;
        if (c1) {
            cond = *c1;
            for (std::size_t i = 0; i < cond->size(); ++i) {
                (*cond)[i] = (*c1)[i] * w1 + (*c2)[i] * w2;
            }
        }
        out.sentences.push_back(
            decode_sentence(model, z, cond ? &*cond : nullptr));
        out.latents.push_back(std::move(z));
    }
    return out;
}

std::string TraversalResult::to_json_text() const {
    json obj;
    json lat = json::array();
    for (const Tensor& z : latents) lat.push_back(z.data());
    obj["latents"] = std::move(lat);
    obj["sentences"] = sentences;
    return obj.dump(2);
}

// --- 2-D projection ---------------------------------------------------------

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix, deterministic
// sweep order. a is d x d row-major and is destroyed.
void jacobi_eigen(std::vector<double>& a, std::size_t d,
                  std::vector<double>& eigvals, std::vector<double>& eigvecs) {
    eigvecs.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eigvecs[i * d + i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) +
                                  std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < d; ++i) {
                    const double aip = a[i * d + p];
                    const double aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double api = a[p * d + i];
                    const double aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double vip = eigvecs[i * d + p];
                    const double viq = eigvecs[i * d + q];
                    eigvecs[i * d + p] = c * vip - s * viq;
                    eigvecs[i * d + q] = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(d);
    for (std::size_t i = 0; i < d; ++i) eigvals[i] = a[i * d + i];
}

}  // namespace

ProjectionPlot project2d(const Tensor& representations,
                         const std::vector<std::string>& labels) {
    if (representations.shape().size() != 2) {
        throw DimensionError("project2d: representations must be rank-2");
    }
    const std::size_t n = representations.rows();
    const std::size_t d = representations.cols();
    if (n < 3) throw DataError("project2d: needs at least 3 rows");
    if (labels.size() != n) {
        throw DimensionError("project2d: one label per row required");
    }

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += representations.at(i, j);
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            const double va = representations.at(i, a) - mean[a];
            for (std::size_t b = a; b < d; ++b) {
                cov[a * d + b] += va * (representations.at(i, b) - mean[b]);
            }
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            cov[a * d + b] /= static_cast<double>(n);
            cov[b * d + a] = cov[a * d + b];
        }
    }

    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(cov, d, eigvals, eigvecs);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return eigvals[a] > eigvals[b];
    });

    if (eigvals[order[0]] <= 1e-12) {
        throw DataError("project2d: degenerate input (all rows identical)");
    }

    ProjectionPlot plot;
    plot.labels = labels;
    plot.x.resize(n);
    plot.y.resize(n);
    for (int axis = 0; axis < 2; ++axis) {
        std::vector<double> v(d, 0.0);
        if (d == 1) {
            // One input dimension: second axis is identically zero.
            if (axis == 1) break;
            v[0] = 1.0;
        } else {
            const std::size_t col = order[static_cast<std::size_t>(axis)];
            for (std::size_t i = 0; i < d; ++i) v[i] = eigvecs[i * d + col];
        }
        // Largest-magnitude loading made positive.
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i) {
            if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
        }
        if (v[arg] < 0.0) {
            for (double& x : v) x = -x;
        }
        plot.axis_variance[static_cast<std::size_t>(axis)] =
            d == 1 ? eigvals[0] : std::max(eigvals[order[static_cast<std::size_t>(axis)]], 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double proj = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                proj += (representations.at(i, j) - mean[j]) * v[j];
            }
            (axis == 0 ? plot.x : plot.y)[i] = proj;
        }
    }
    return plot;
}

std::string dominant_role(const DefinitionRecord& record) {
    std::array<std::size_t, corpus::kNumRoles> counts{};
    for (corpus::Role r : record.roles) {
        if (r != corpus::Role::kNone) ++counts[static_cast<std::size_t>(r)];
    }
    std::size_t best = corpus::kNumRoles - 1;  // NONE
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < corpus::kNumRoles - 1; ++i) {
        if (counts[i] > best_count) {
            best = i;
            best_count = counts[i];
        }
    }
    return corpus::role_name(static_cast<corpus::Role>(best));
}

std::string ProjectionPlot::to_json_text() const {
    json obj;
    obj["x"] = x;
    obj["y"] = y;
    obj["labels"] = labels;
    obj["axis_variance"] = axis_variance;
    return obj.dump(2);
}

ProjectionPlot ProjectionPlot::from_json_text(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("plot JSON: ") + e.what());
    }
    ProjectionPlot plot;
    try {
        plot.x = obj.at("x").get<std::vector<double>>();
        plot.y = obj.at("y").get<std::vector<double>>();
        plot.labels = obj.at("labels").get<std::vector<std::string>>();
        const auto av = obj.at("axis_variance").get<std::vector<double>>();
        if (av.size() == 2) plot.axis_variance = {av[0], av[1]};
    } catch (const json::exception& e) {
        throw ParseError(std::string("plot JSON: ") + e.what());
    }
    if (plot.y.size() != plot.x.size() || plot.labels.size() != plot.x.size()) {
        throw ParseError("plot JSON: field lengths disagree");
    }
    return plot;
}

// --- svg ---------------------------------------------------------------------

namespace {

constexpr std::array<const char*, 10> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] =
        std::to_chars(buf.data(), buf.data() + buf.size(), v,
                      std::chars_format::fixed, 3);
    return std::string(buf.data(), ptr);
}

}  // namespace

std::string svg_string(const ProjectionPlot& plot) {
    constexpr double width = 640.0, height = 480.0;
    constexpr double left = 50.0, right = 480.0, top = 20.0, bottom = 440.0;

    double lo_x = 0.0, hi_x = 1.0, lo_y = 0.0, hi_y = 1.0;
    if (!plot.x.empty()) {
        lo_x = *std::min_element(plot.x.begin(), plot.x.end());
        hi_x = *std::max_element(plot.x.begin(), plot.x.end());
        lo_y = *std::min_element(plot.y.begin(), plot.y.end());
        hi_y = *std::max_element(plot.y.begin(), plot.y.end());
        if (hi_x == lo_x) hi_x = lo_x + 1.0;
        if (hi_y == lo_y) hi_y = lo_y + 1.0;
        const double pad_x = 0.05 * (hi_x - lo_x);
        const double pad_y = 0.05 * (hi_y - lo_y);
        lo_x -= pad_x;
        hi_x += pad_x;
        lo_y -= pad_y;
        hi_y += pad_y;
    }

    std::vector<std::string> legend;
    for (const std::string& label : plot.labels) {
        if (std::find(legend.begin(), legend.end(), label) == legend.end()) {
            legend.push_back(label);
        }
    }
    std::sort(legend.begin(), legend.end());
    std::map<std::string, std::size_t> color_of;
    for (std::size_t i = 0; i < legend.size(); ++i) {
        color_of[legend[i]] = i % kPalette.size();
    }

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
           "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) +
           " " + fmt(height) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt(width) + "\" height=\"" +
           fmt(height) + "\" fill=\"white\"/>\n";
    svg += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" +
           fmt(right - left) + "\" height=\"" + fmt(bottom - top) +
           "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(left) + "\" y=\"" + fmt(bottom + 24.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\">axis 1 (var " +
           fmt(plot.axis_variance[0]) + ")</text>\n";
    svg += "<text x=\"" + fmt(left - 38.0) + "\" y=\"" + fmt(top - 4.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\">axis 2 (var " +
           fmt(plot.axis_variance[1]) + ")</text>\n";

    for (std::size_t i = 0; i < plot.x.size(); ++i) {
        const double cx =
            left + (plot.x[i] - lo_x) / (hi_x - lo_x) * (right - left);
        const double cy =
            bottom - (plot.y[i] - lo_y) / (hi_y - lo_y) * (bottom - top);
        svg += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) +
               "\" r=\"3\" fill=\"" +
               kPalette[color_of[plot.labels[i]]] + "\" fill-opacity=\"0.8\"/>\n";
    }

    double ly = top + 10.0;
    for (const std::string& label : legend) {
        svg += "<rect x=\"" + fmt(right + 16.0) + "\" y=\"" + fmt(ly - 9.0) +
               "\" width=\"10\" height=\"10\" fill=\"" +
               kPalette[color_of[label]] + "\"/>\n";
        svg += "<text x=\"" + fmt(right + 30.0) + "\" y=\"" + fmt(ly) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + label +
               "</text>\n";
        ly += 16.0;
    }
    svg += "</svg>\n";
    return svg;
}

void render_svg(const ProjectionPlot& plot, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write svg " + path.string());
    out << svg_string(plot);
    if (!out) throw IoError("failed writing svg " + path.string());
}

}  // namespace defdis::probes
