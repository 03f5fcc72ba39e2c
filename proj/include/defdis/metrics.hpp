#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defdis/corpus.hpp"
#include "defdis/tensor.hpp"

namespace defdis::metrics {

// n x d matrix of posterior means.
using Representations = Tensor;

struct DiscretizedCodes {
    std::size_t n = 0;
    std::size_t d = 0;
    int bins = 0;
    std::vector<int> codes;                 // n x d row-major
    std::vector<std::vector<double>> edges;  // per-dim cut points, increasing
    std::vector<bool> constant_dim;

    int at(std::size_t i, std::size_t j) const { return codes[i * d + j]; }
    std::vector<int> column(std::size_t j) const;
};

// Per-dimension binning; equal-width over [min, max] by default, empirical
// quantile cut points when `quantile` is set. Constant dimensions map to
// code 0 and are flagged.
DiscretizedCodes discretize(const Representations& reps, int bins,
                            bool quantile = false);

// Plug-in mutual information of two discrete columns, in nats.
double mutual_information(const std::vector<int>& a, const std::vector<int>& b);
// Plug-in entropy in nats.
double entropy(const std::vector<int>& a);

// Sampling-based probes (z-diff, z-min-var): pairs per batch and batch
// counts for the classifier's train and test sides.
struct ProbeConfig {
    int pairs = 64;
    int train_batches = 800;
    int test_batches = 200;
};

struct MetricConfig {
    int bins = 20;
    bool quantile_bins = false;
    ProbeConfig zdiff{};
    ProbeConfig zminvar{};   // `pairs` is the per-vote subset size
    int classifier_iters = 500;
    double classifier_lr = 0.5;
    double l2 = 1e-2;  // logistic probes
    double l1 = 1e-2;  // importance probes
    double dci_test_fraction = 0.2;
    std::size_t min_samples = 100;
    std::uint64_t seed = 0;

    std::string to_json_text() const;
    static MetricConfig from_json_text(const std::string& text);
};

struct DciScores {
    double disentanglement = 0.0;
    double completeness = 0.0;
    double informativeness = 0.0;  // held-out error, lower is better
};

struct MetricReport {
    double z_diff = 0.0;
    double z_min_var = 0.0;  // error rate, lower is better
    double mig = 0.0;
    double modularity = 0.0;
    double explicitness = 0.0;
    double disentanglement = 0.0;
    double completeness = 0.0;
    double informativeness = 0.0;  // lower is better
    MetricConfig config;
    std::vector<std::string> flags;

    std::string to_json_text() const;
    static MetricReport from_json_text(const std::string& text);
    static std::string csv_header();
    // paper_scale applies the x10 display convention to disentanglement
    // and completeness; stored values are always unscaled.
    std::string csv_row(bool paper_scale = false) const;
};

// Accuracy of a linear probe that receives batch-averaged |z_a - z_b| for
// pairs sharing one factor's value and predicts which factor was shared.
double z_diff_score(const Representations& reps,
                    const corpus::FactorMatrix& factors,
                    const MetricConfig& cfg,
                    std::vector<std::string>* flags = nullptr);

// Error rate of the majority-vote classifier from the argmin-variance
// dimension (over a value-matched subset, std-normalized) to the factor.
double z_min_var_score(const Representations& reps,
                       const corpus::FactorMatrix& factors,
                       const MetricConfig& cfg,
                       std::vector<std::string>* flags = nullptr);

// Mean over factors of the normalized gap between the two most informative
// dimensions.
double mig(const DiscretizedCodes& codes, const corpus::FactorMatrix& factors,
           std::vector<std::string>* flags = nullptr);

// Mean over dimensions of one minus the deviation from the ideal
// one-factor template.
double modularity(const DiscretizedCodes& codes,
                  const corpus::FactorMatrix& factors,
                  std::vector<std::string>* flags = nullptr);

// Mean one-vs-rest ROC AUC of logistic probes over factor values.
double explicitness(const Representations& reps,
                    const corpus::FactorMatrix& factors,
                    const MetricConfig& cfg,
                    std::vector<std::string>* flags = nullptr);

// Disentanglement / completeness from the L1-probe importance matrix plus
// held-out informativeness error.
DciScores dci(const Representations& reps, const corpus::FactorMatrix& factors,
              const MetricConfig& cfg,
              std::vector<std::string>* flags = nullptr);

// Entropy aggregation used by dci(), exposed for direct verification:
// importance is d x k row-major.
DciScores dci_from_importance(const std::vector<double>& importance,
                              std::size_t d, std::size_t k);

MetricReport evaluate_all(const Representations& reps,
                          const corpus::FactorMatrix& factors,
                          const MetricConfig& cfg);

}  // namespace defdis::metrics
