#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "defdis/corpus.hpp"
#include "defdis/tensor.hpp"
#include "defdis/vae.hpp"

namespace defdis::probes {

struct TraversalSpec {
    int dim = 0;
    double low = -3.0;
    double high = 3.0;
    int steps = 7;

    void validate(int z_dim) const;
};

struct TraversalResult {
    std::vector<Tensor> latents;                     // one [1, z] per step
    std::vector<std::vector<std::string>> sentences;

    std::string to_json_text() const;
};

// Encode the seed sentence to its posterior mean, sweep spec.dim over
// `steps` equally spaced values in [low, high] with every other coordinate
// held fixed, and greedy-decode each point.
TraversalResult traverse(const vae::VaeModel& model,
                         const corpus::DefinitionRecord& seed,
                         const TraversalSpec& spec);

// Same sweep starting from an explicit latent vector, e.g. the result of
// latent arithmetic. condition is required for the conditional variant.
TraversalResult traverse_latent(const vae::VaeModel& model, const Tensor& z,
                                const TraversalSpec& spec,
                                const Tensor* condition = nullptr);

enum class ArithOp { kAdd, kSub, kAvg };
ArithOp parse_arith_op(const std::string& name);

Tensor latent_arithmetic(const Tensor& z1, const Tensor& z2, ArithOp op);

// Nine intermediate latents z_t = z1 (1-t) + z2 t for t = 0.1 .. 0.9,
// decoded greedily from the posterior means of the two sentences. For the
// conditional variant the role-summary condition is interpolated along the
// same path, which keeps the probe exactly symmetric under endpoint swap.
TraversalResult interpolate(const vae::VaeModel& model,
                            const corpus::DefinitionRecord& s1,
                            const corpus::DefinitionRecord& s2);

struct ProjectionPlot {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<std::string> labels;
    std::array<double, 2> axis_variance = {0.0, 0.0};

    std::size_t size() const { return x.size(); }
    std::string to_json_text() const;
    static ProjectionPlot from_json_text(const std::string& text);
};

// Deterministic projection onto the top two principal directions of the
// mean-centered representations. Axes are variance-ordered and the sign of
// each axis is fixed by making its largest-magnitude loading positive.
ProjectionPlot project2d(const Tensor& representations,
                         const std::vector<std::string>& labels);

// Most frequent non-NONE role of the record, as a plot color key.
std::string dominant_role(const corpus::DefinitionRecord& record);

// Static scatter rendering; byte-deterministic for fixed input.
std::string svg_string(const ProjectionPlot& plot);
void render_svg(const ProjectionPlot& plot, const std::filesystem::path& path);

}  // namespace defdis::probes
