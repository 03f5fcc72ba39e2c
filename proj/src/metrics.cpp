#include "defdis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "defdis/rng.hpp"

namespace defdis::metrics {

using corpus::FactorMatrix;
using nlohmann::json;

std::vector<int> DiscretizedCodes::column(std::size_t j) const {
    std::vector<int> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = at(i, j);
    return col;
}

DiscretizedCodes discretize(const Representations& reps, int bins,
                            bool quantile) {
    if (bins < 2) throw ConfigError("discretize: bins must be >= 2");
    if (reps.shape().size() != 2) {
        throw DimensionError("discretize: representations must be rank-2");
    }
    DiscretizedCodes out;
    out.n = reps.rows();
    out.d = reps.cols();
    out.bins = bins;
    out.codes.assign(out.n * out.d, 0);
    out.edges.resize(out.d);
    out.constant_dim.assign(out.d, false);

    const std::size_t b = static_cast<std::size_t>(bins);
    std::vector<double> col(out.n);
    for (std::size_t j = 0; j < out.d; ++j) {
        for (std::size_t i = 0; i < out.n; ++i) col[i] = reps.at(i, j);
        const auto [lo_it, hi_it] = std::minmax_element(col.begin(), col.end());
        const double lo = *lo_it, hi = *hi_it;
        if (lo == hi) {
            out.constant_dim[j] = true;
            continue;
        }
        if (!quantile) {
            for (std::size_t e = 1; e < b; ++e) {
                out.edges[j].push_back(lo + (hi - lo) * static_cast<double>(e) /
                                                static_cast<double>(b));
            }
            for (std::size_t i = 0; i < out.n; ++i) {
                const double frac = (col[i] - lo) / (hi - lo);
                auto code = static_cast<long>(frac * static_cast<double>(b));
                code = std::clamp(code, 0L, static_cast<long>(b) - 1L);
                out.codes[i * out.d + j] = static_cast<int>(code);
            }
        } else {
            std::vector<double> sorted = col;
            std::sort(sorted.begin(), sorted.end());
            std::vector<double>& edges = out.edges[j];
            for (std::size_t e = 1; e < b; ++e) {
                edges.push_back(sorted[out.n * e / b]);
            }
            edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
            for (std::size_t i = 0; i < out.n; ++i) {
                // Number of cut points at or below the value; invariant
                // under any strictly increasing per-dimension transform.
                const auto code = std::upper_bound(edges.begin(), edges.end(),
                                                   col[i]) -
                                  edges.begin();
                out.codes[i * out.d + j] = static_cast<int>(code);
            }
        }
    }
    return out;
}

double entropy(const std::vector<int>& a) {
    if (a.empty()) return 0.0;
    const int max_v = *std::max_element(a.begin(), a.end());
    std::vector<std::size_t> counts(static_cast<std::size_t>(max_v) + 1, 0);
    for (int v : a) {
        if (v < 0) throw DataError("entropy: negative code");
        ++counts[static_cast<std::size_t>(v)];
    }
    const double n = static_cast<double>(a.size());
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        throw DimensionError("mutual_information: column lengths disagree");
    }
    if (a.empty()) return 0.0;
    const int max_a = *std::max_element(a.begin(), a.end());
    const int max_b = *std::max_element(b.begin(), b.end());
    if (max_a < 0 || max_b < 0 ||
        *std::min_element(a.begin(), a.end()) < 0 ||
        *std::min_element(b.begin(), b.end()) < 0) {
        throw DataError("mutual_information: negative code");
    }
    const std::size_t ca = static_cast<std::size_t>(max_a) + 1;
    const std::size_t cb = static_cast<std::size_t>(max_b) + 1;
    std::vector<std::size_t> joint(ca * cb, 0), ma(ca, 0), mb(cb, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++joint[static_cast<std::size_t>(a[i]) * cb + static_cast<std::size_t>(b[i])];
        ++ma[static_cast<std::size_t>(a[i])];
        ++mb[static_cast<std::size_t>(b[i])];
    }
    const double n = static_cast<double>(a.size());
    double mi = 0.0;
    for (std::size_t i = 0; i < ca; ++i) {
        for (std::size_t j = 0; j < cb; ++j) {
            const std::size_t c = joint[i * cb + j];
            if (c == 0) continue;
            const double pij = static_cast<double>(c) / n;
            const double pi = static_cast<double>(ma[i]) / n;
            const double pj = static_cast<double>(mb[j]) / n;
            mi += pij * std::log(pij / (pi * pj));
        }
    }
    return std::max(mi, 0.0);
}

// --- shared linear probe ----------------------------------------------------

namespace {

// Full-batch softmax regression on standardized features. Deterministic:
// fixed iteration count, no early stopping. L1 uses a proximal step so
// irrelevant weights reach exact zero.
struct LinearProbe {
    std::size_t d = 0, c = 0;
    std::vector<double> w;  // d x c
    std::vector<double> b;  // c
    std::vector<double> mean, scale;

    void standardize_stats(const std::vector<double>& x, std::size_t n) {
        mean.assign(d, 0.0);
        scale.assign(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j];
        for (double& m : mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double v = x[i * d + j] - mean[j];
                scale[j] += v * v;
            }
        for (std::size_t j = 0; j < d; ++j) {
            scale[j] = std::sqrt(scale[j] / static_cast<double>(n));
            scale[j] = scale[j] > 1e-12 ? 1.0 / scale[j] : 0.0;
        }
    }

    std::vector<double> logits(const double* row) const {
        std::vector<double> out(b);
        for (std::size_t j = 0; j < d; ++j) {
            const double v = (row[j] - mean[j]) * scale[j];
            if (v == 0.0) continue;
            for (std::size_t k = 0; k < c; ++k) out[k] += v * w[j * c + k];
        }
        return out;
    }

    int predict(const double* row) const {
        const auto z = logits(row);
        return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }

    double importance(std::size_t dim) const {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += std::fabs(w[dim * c + k]);
        return s;
    }

    static LinearProbe fit(const std::vector<double>& x, const std::vector<int>& y,
                           std::size_t n, std::size_t d, std::size_t c,
                           int iters, double lr, double l2, double l1) {
        LinearProbe p;
        p.d = d;
        p.c = c;
        p.w.assign(d * c, 0.0);
        p.b.assign(c, 0.0);
        p.standardize_stats(x, n);

        std::vector<double> xs(n * d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                xs[i * d + j] = (x[i * d + j] - p.mean[j]) * p.scale[j];

        std::vector<double> gw(d * c), gb(c), z(c);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (int it = 0; it < iters; ++it) {
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < c; ++k) z[k] = p.b[k];
                for (std::size_t j = 0; j < d; ++j) {
                    const double v = xs[i * d + j];
                    if (v == 0.0) continue;
                    for (std::size_t k = 0; k < c; ++k) z[k] += v * p.w[j * c + k];
                }
                const double mx = *std::max_element(z.begin(), z.end());
                double denom = 0.0;
                for (std::size_t k = 0; k < c; ++k) {
                    z[k] = std::exp(z[k] - mx);
                    denom += z[k];
                }
                for (std::size_t k = 0; k < c; ++k) {
                    const double residual =
                        z[k] / denom -
                        (static_cast<std::size_t>(y[i]) == k ? 1.0 : 0.0);
                    gb[k] += residual;
                    const double scaled = residual;
                    for (std::size_t j = 0; j < d; ++j) {
                        gw[j * c + k] += xs[i * d + j] * scaled;
                    }
                }
            }
            for (std::size_t j = 0; j < d * c; ++j) {
                p.w[j] -= lr * (gw[j] * inv_n + l2 * p.w[j]);
            }
            for (std::size_t k = 0; k < c; ++k) p.b[k] -= lr * gb[k] * inv_n;
            if (l1 > 0.0) {
                const double t = lr * l1;
                for (double& wj : p.w) {
                    if (wj > t) {
                        wj -= t;
                    } else if (wj < -t) {
                        wj += t;
                    } else {
                        wj = 0.0;
                    }
                }
            }
        }
        return p;
    }
};

struct FactorIndex {
    // usable values (>= 2 samples) per kept factor, with sample index lists
    std::vector<std::size_t> kept;                       // factor ids
    std::vector<std::vector<std::vector<std::size_t>>> by_value;  // [kept][value]
    std::vector<std::vector<std::size_t>> pool;          // union per kept factor
};

FactorIndex index_factors(const FactorMatrix& factors, const char* metric,
                          std::vector<std::string>* flags) {
    FactorIndex idx;
    for (std::size_t k = 0; k < factors.factor_count(); ++k) {
        const std::vector<int> col = factors.column(k);
        const int max_v = col.empty() ? 0 : *std::max_element(col.begin(), col.end());
        std::vector<std::vector<std::size_t>> lists(
            static_cast<std::size_t>(max_v) + 1);
        for (std::size_t i = 0; i < col.size(); ++i) {
            lists[static_cast<std::size_t>(col[i])].push_back(i);
        }
        std::vector<std::vector<std::size_t>> usable;
        std::vector<std::size_t> pool;
        for (auto& l : lists) {
            if (l.size() >= 2) {
                pool.insert(pool.end(), l.begin(), l.end());
                usable.push_back(std::move(l));
            }
        }
        if (usable.size() < 2) {
            if (flags) {
                flags->push_back(std::string(metric) + ": factor \"" +
                                 factors.factor_names[k] +
                                 "\" excluded (fewer than 2 usable values)");
            }
            continue;
        }
        idx.kept.push_back(k);
        idx.by_value.push_back(std::move(usable));
        idx.pool.push_back(std::move(pool));
    }
    return idx;
}

}  // namespace

double z_diff_score(const Representations& reps, const FactorMatrix& factors,
                    const MetricConfig& cfg, std::vector<std::string>* flags) {
    const std::size_t n = reps.rows(), d = reps.cols();
    if (n != factors.n) {
        throw DimensionError("z_diff: representation/factor row counts disagree");
    }
    const FactorIndex idx = index_factors(factors, "z_diff", flags);
    const std::size_t kk = idx.kept.size();
    if (kk < 2) throw DataError("z_diff: fewer than 2 usable factors");

    Rng rng(cfg.seed);
    const int total = cfg.zdiff.train_batches + cfg.zdiff.test_batches;
    std::vector<double> features(static_cast<std::size_t>(total) * d);
    std::vector<int> labels(static_cast<std::size_t>(total));
    for (int bi = 0; bi < total; ++bi) {
        const std::size_t k = rng.below(kk);
        labels[static_cast<std::size_t>(bi)] = static_cast<int>(k);
        double* feat = &features[static_cast<std::size_t>(bi) * d];
        for (int pair = 0; pair < cfg.zdiff.pairs; ++pair) {
            // Empirical sampling of a shared value: first element picks it.
            const auto& pool = idx.pool[k];
            const std::size_t a = pool[rng.below(pool.size())];
            const int v = factors.at(a, idx.kept[k]);
            const auto& mates = idx.by_value[k][static_cast<std::size_t>(v)];
            std::size_t b = a;
            while (b == a) b = mates[rng.below(mates.size())];
            for (std::size_t j = 0; j < d; ++j) {
                feat[j] += std::fabs(reps.at(a, j) - reps.at(b, j));
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            feat[j] /= static_cast<double>(cfg.zdiff.pairs);
        }
    }

    const std::size_t n_train = static_cast<std::size_t>(cfg.zdiff.train_batches);
    const std::vector<double> train_x(features.begin(),
                                      features.begin() +
                                          static_cast<std::ptrdiff_t>(n_train * d));
    const std::vector<int> train_y(labels.begin(),
                                   labels.begin() +
                                       static_cast<std::ptrdiff_t>(n_train));
    const LinearProbe probe =
        LinearProbe::fit(train_x, train_y, n_train, d, kk, cfg.classifier_iters,
                         cfg.classifier_lr, cfg.l2, 0.0);
    std::size_t hits = 0;
    for (int bi = cfg.zdiff.train_batches; bi < total; ++bi) {
        const auto i = static_cast<std::size_t>(bi);
        if (probe.predict(&features[i * d]) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) /
           static_cast<double>(cfg.zdiff.test_batches);
}

double z_min_var_score(const Representations& reps, const FactorMatrix& factors,
                       const MetricConfig& cfg,
                       std::vector<std::string>* flags) {
    const std::size_t n = reps.rows(), d = reps.cols();
    if (n != factors.n) {
        throw DimensionError(
            "z_min_var: representation/factor row counts disagree");
    }
    if (factors.factor_count() < 2) {
        throw DataError("z_min_var: needs at least 2 factors");
    }
    const FactorIndex idx = index_factors(factors, "z_min_var", flags);
    const std::size_t kk = idx.kept.size();
    if (kk < 2) throw DataError("z_min_var: fewer than 2 usable factors");

    // Global per-dimension std; zero-variance dimensions are skipped.
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += reps.at(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double v = reps.at(i, j) - mean[j];
            sd[j] += v * v;
        }
    std::vector<std::size_t> dims;
    for (std::size_t j = 0; j < d; ++j) {
        sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
        if (sd[j] > 1e-12) {
            dims.push_back(j);
        } else if (flags) {
            flags->push_back("z_min_var: dimension " + std::to_string(j) +
                             " excluded (zero variance)");
        }
    }
    if (dims.empty()) throw DataError("z_min_var: all dimensions degenerate");

    Rng rng(cfg.seed);
    const int total = cfg.zminvar.train_batches + cfg.zminvar.test_batches;
    std::vector<std::pair<std::size_t, std::size_t>> votes;  // (dim, factor)
    votes.reserve(static_cast<std::size_t>(total));
    std::vector<double> sum(dims.size()), sum2(dims.size());
    for (int bi = 0; bi < total; ++bi) {
        const std::size_t k = rng.below(kk);
        const auto& pool = idx.pool[k];
        const std::size_t anchor = pool[rng.below(pool.size())];
        const int v = factors.at(anchor, idx.kept[k]);
        const auto& subset = idx.by_value[k][static_cast<std::size_t>(v)];
        std::fill(sum.begin(), sum.end(), 0.0);
        std::fill(sum2.begin(), sum2.end(), 0.0);
        const int batch = cfg.zminvar.pairs;
        for (int s = 0; s < batch; ++s) {
            const std::size_t i = subset[rng.below(subset.size())];
            for (std::size_t jj = 0; jj < dims.size(); ++jj) {
                const double x = (reps.at(i, dims[jj]) - mean[dims[jj]]) / sd[dims[jj]];
                sum[jj] += x;
                sum2[jj] += x * x;
            }
        }
        std::size_t best = 0;
        double best_var = 0.0;
        for (std::size_t jj = 0; jj < dims.size(); ++jj) {
            const double m = sum[jj] / batch;
            const double var = sum2[jj] / batch - m * m;
            if (jj == 0 || var < best_var) {
                best = jj;
                best_var = var;
            }
        }
        votes.emplace_back(dims[best], k);
    }

    // Majority vote dim -> factor from the training votes.
    std::vector<std::vector<std::size_t>> table(d,
                                                std::vector<std::size_t>(kk, 0));
    for (int bi = 0; bi < cfg.zminvar.train_batches; ++bi) {
        const auto& [dim, k] = votes[static_cast<std::size_t>(bi)];
        ++table[dim][k];
    }
    std::vector<std::size_t> classify(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        classify[j] = static_cast<std::size_t>(
            std::max_element(table[j].begin(), table[j].end()) -
            table[j].begin());
    }
    std::size_t errors = 0;
    for (int bi = cfg.zminvar.train_batches; bi < total; ++bi) {
        const auto& [dim, k] = votes[static_cast<std::size_t>(bi)];
        if (classify[dim] != k) ++errors;
    }
    return static_cast<double>(errors) /
           static_cast<double>(cfg.zminvar.test_batches);
}

double mig(const DiscretizedCodes& codes, const FactorMatrix& factors,
           std::vector<std::string>* flags) {
    if (codes.n != factors.n) {
        throw DimensionError("mig: code/factor row counts disagree");
    }
    if (codes.d < 2) throw DataError("mig: needs at least 2 dimensions");
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < factors.factor_count(); ++k) {
        const std::vector<int> fk = factors.column(k);
        const double hk = entropy(fk);
        if (hk <= 0.0) {
            if (flags) {
                flags->push_back("mig: factor \"" + factors.factor_names[k] +
                                 "\" excluded (zero entropy)");
            }
            continue;
        }
        double top1 = 0.0, top2 = 0.0;
        for (std::size_t j = 0; j < codes.d; ++j) {
            const double mi = mutual_information(codes.column(j), fk);
            if (mi > top1) {
                top2 = top1;
                top1 = mi;
            } else if (mi > top2) {
                top2 = mi;
            }
        }
        acc += (top1 - top2) / hk;
        ++used;
    }
    if (used == 0) throw DataError("mig: every factor has zero entropy");
    return acc / static_cast<double>(used);
}

double modularity(const DiscretizedCodes& codes, const FactorMatrix& factors,
                  std::vector<std::string>* flags) {
    if (codes.n != factors.n) {
        throw DimensionError("modularity: code/factor row counts disagree");
    }
    const std::size_t kk = factors.factor_count();
    if (kk < 2) throw DataError("modularity: needs at least 2 factors");
    double acc = 0.0;
    for (std::size_t j = 0; j < codes.d; ++j) {
        const std::vector<int> cj = codes.column(j);
        std::vector<double> mi(kk);
        double theta = 0.0;
        std::size_t best = 0;
        for (std::size_t k = 0; k < kk; ++k) {
            mi[k] = mutual_information(cj, factors.column(k));
            if (mi[k] > theta) {
                theta = mi[k];
                best = k;
            }
        }
        if (theta <= 0.0) {
            // No information about any factor: vacuously modular.
            if (flags) {
                flags->push_back("modularity: dimension " + std::to_string(j) +
                                 " carries no factor information (scored 1)");
            }
            acc += 1.0;
            continue;
        }
        double dev = 0.0;
        for (std::size_t k = 0; k < kk; ++k) {
            if (k == best) continue;
            dev += mi[k] * mi[k];
        }
        dev /= theta * theta * static_cast<double>(kk - 1);
        acc += 1.0 - dev;
    }
    return acc / static_cast<double>(codes.d);
}

namespace {

// Mann-Whitney AUC with average ranks over ties.
double rank_auc(const std::vector<double>& scores, const std::vector<char>& pos) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    std::size_t np = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (pos[t]) {
            rank_sum += rank[t];
            ++np;
        }
    }
    const std::size_t nn = n - np;
    if (np == 0 || nn == 0) return 0.5;
    return (rank_sum - 0.5 * static_cast<double>(np) *
                           static_cast<double>(np + 1)) /
           (static_cast<double>(np) * static_cast<double>(nn));
}

}  // namespace

double explicitness(const Representations& reps, const FactorMatrix& factors,
                    const MetricConfig& cfg, std::vector<std::string>* flags) {
    const std::size_t n = reps.rows(), d = reps.cols();
    if (n != factors.n) {
        throw DimensionError(
            "explicitness: representation/factor row counts disagree");
    }
    std::vector<double> x(reps.data());
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < factors.factor_count(); ++k) {
        const std::vector<int> col = factors.column(k);
        const int max_v = *std::max_element(col.begin(), col.end());
        bool factor_used = false;
        for (int v = 0; v <= max_v; ++v) {
            std::vector<char> pos(n, 0);
            std::size_t np = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (col[i] == v) {
                    pos[i] = 1;
                    ++np;
                }
            }
            if (np < 2 || np > n - 2) continue;
            std::vector<int> y(n);
            for (std::size_t i = 0; i < n; ++i) y[i] = pos[i] ? 1 : 0;
            const LinearProbe probe =
                LinearProbe::fit(x, y, n, d, 2, cfg.classifier_iters,
                                 cfg.classifier_lr, cfg.l2, 0.0);
            std::vector<double> scores(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto z = probe.logits(&x[i * d]);
                scores[i] = z[1] - z[0];
            }
            acc += rank_auc(scores, pos);
            ++used;
            factor_used = true;
        }
        if (!factor_used && flags) {
            flags->push_back("explicitness: factor \"" + factors.factor_names[k] +
                             "\" excluded (no usable values)");
        }
    }
    if (used == 0) throw DataError("explicitness: no usable factor values");
    return acc / static_cast<double>(used);
}

DciScores dci_from_importance(const std::vector<double>& importance,
                              std::size_t d, std::size_t k) {
    if (k < 2 || d < 2) {
        throw DataError("dci: needs at least 2 dimensions and 2 factors");
    }
    double total = 0.0;
    for (double v : importance) {
        if (v < 0.0) throw DataError("dci: negative importance");
        total += v;
    }
    DciScores out;
    if (total <= 0.0) {
        return out;  // uninformative representation: D = C = 0
    }
    // Disentanglement: relevance-weighted row entropies.
    for (std::size_t i = 0; i < d; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) row += importance[i * k + j];
        if (row <= 0.0) continue;  // zero relevance, zero weight
        double h = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = importance[i * k + j] / row;
            if (p > 0.0) h -= p * std::log(p);
        }
        h /= std::log(static_cast<double>(k));
        out.disentanglement += (row / total) * (1.0 - h);
    }
    // Completeness: mean over factors of column entropies.
    std::size_t used = 0;
    for (std::size_t j = 0; j < k; ++j) {
        double colsum = 0.0;
        for (std::size_t i = 0; i < d; ++i) colsum += importance[i * k + j];
        if (colsum <= 0.0) continue;
        double h = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double p = importance[i * k + j] / colsum;
            if (p > 0.0) h -= p * std::log(p);
        }
        h /= std::log(static_cast<double>(d));
        out.completeness += 1.0 - h;
        ++used;
    }
    if (used > 0) out.completeness /= static_cast<double>(used);
    return out;
}

DciScores dci(const Representations& reps, const FactorMatrix& factors,
              const MetricConfig& cfg, std::vector<std::string>* flags) {
    const std::size_t n = reps.rows(), d = reps.cols();
    if (n != factors.n) {
        throw DimensionError("dci: representation/factor row counts disagree");
    }
    if (n < 5) throw DataError("dci: too few samples");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);
    rng.shuffle(order);
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * cfg.dci_test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    const std::size_t n_train = n - n_test;

    std::vector<double> train_x(n_train * d), test_x(n_test * d);
    for (std::size_t i = 0; i < n_train; ++i)
        for (std::size_t j = 0; j < d; ++j)
            train_x[i * d + j] = reps.at(order[i], j);
    for (std::size_t i = 0; i < n_test; ++i)
        for (std::size_t j = 0; j < d; ++j)
            test_x[i * d + j] = reps.at(order[n_train + i], j);

    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < factors.factor_count(); ++k) {
        bool varies = false;
        for (std::size_t i = 1; i < n_train && !varies; ++i) {
            varies = factors.at(order[i], k) != factors.at(order[0], k);
        }
        if (varies) {
            kept.push_back(k);
        } else if (flags) {
            flags->push_back("dci: factor \"" + factors.factor_names[k] +
                             "\" excluded (single value)");
        }
    }
    if (kept.size() < 2) throw DataError("dci: fewer than 2 usable factors");

    std::vector<double> importance(d * kept.size(), 0.0);
    double err_sum = 0.0;
    for (std::size_t kk = 0; kk < kept.size(); ++kk) {
        const std::size_t k = kept[kk];
        std::vector<int> train_y(n_train), test_y(n_test);
        int max_v = 0;
        for (std::size_t i = 0; i < n_train; ++i) {
            train_y[i] = factors.at(order[i], k);
            max_v = std::max(max_v, train_y[i]);
        }
        for (std::size_t i = 0; i < n_test; ++i) {
            test_y[i] = factors.at(order[n_train + i], k);
            max_v = std::max(max_v, test_y[i]);
        }
        const std::size_t classes = static_cast<std::size_t>(max_v) + 1;
        const LinearProbe probe =
            LinearProbe::fit(train_x, train_y, n_train, d, classes,
                             cfg.classifier_iters, cfg.classifier_lr, 0.0,
                             cfg.l1);
        for (std::size_t j = 0; j < d; ++j) {
            importance[j * kept.size() + kk] = probe.importance(j);
        }
        std::size_t errors = 0;
        for (std::size_t i = 0; i < n_test; ++i) {
            if (probe.predict(&test_x[i * d]) != test_y[i]) ++errors;
        }
        err_sum += static_cast<double>(errors) / static_cast<double>(n_test);
    }

    if (flags) {
        for (std::size_t j = 0; j < d; ++j) {
            double row = 0.0;
            for (std::size_t kk = 0; kk < kept.size(); ++kk)
                row += importance[j * kept.size() + kk];
            if (row <= 0.0) {
                flags->push_back("dci: dimension " + std::to_string(j) +
                                 " has zero importance");
            }
        }
    }
    DciScores out = dci_from_importance(importance, d, kept.size());
    out.informativeness = err_sum / static_cast<double>(kept.size());
    return out;
}

// --- report and driver -------------------------------------------------------

std::string MetricConfig::to_json_text() const {
    json obj;
    obj["bins"] = bins;
    obj["quantile_bins"] = quantile_bins;
    obj["zdiff"] = {{"pairs", zdiff.pairs},
                    {"train_batches", zdiff.train_batches},
                    {"test_batches", zdiff.test_batches}};
    obj["zminvar"] = {{"pairs", zminvar.pairs},
                      {"train_batches", zminvar.train_batches},
                      {"test_batches", zminvar.test_batches}};
    obj["classifier_iters"] = classifier_iters;
    obj["classifier_lr"] = classifier_lr;
    obj["l2"] = l2;
    obj["l1"] = l1;
    obj["dci_test_fraction"] = dci_test_fraction;
    obj["min_samples"] = min_samples;
    obj["seed"] = seed;
    return obj.dump();
}

MetricConfig MetricConfig::from_json_text(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("metric config JSON: ") + e.what());
    }
    MetricConfig cfg;
    auto probe = [&](const char* key, ProbeConfig& pc) {
        if (!obj.contains(key)) return;
        const json& p = obj.at(key);
        pc.pairs = p.value("pairs", pc.pairs);
        pc.train_batches = p.value("train_batches", pc.train_batches);
        pc.test_batches = p.value("test_batches", pc.test_batches);
    };
    cfg.bins = obj.value("bins", cfg.bins);
    cfg.quantile_bins = obj.value("quantile_bins", cfg.quantile_bins);
    probe("zdiff", cfg.zdiff);
    probe("zminvar", cfg.zminvar);
    cfg.classifier_iters = obj.value("classifier_iters", cfg.classifier_iters);
    cfg.classifier_lr = obj.value("classifier_lr", cfg.classifier_lr);
    cfg.l2 = obj.value("l2", cfg.l2);
    cfg.l1 = obj.value("l1", cfg.l1);
    cfg.dci_test_fraction = obj.value("dci_test_fraction", cfg.dci_test_fraction);
    cfg.min_samples = obj.value("min_samples", cfg.min_samples);
    cfg.seed = obj.value("seed", cfg.seed);
    return cfg;
}

std::string MetricReport::to_json_text() const {
    json obj;
    obj["z_diff"] = z_diff;
    obj["z_min_var"] = z_min_var;
    obj["mig"] = mig;
    obj["modularity"] = modularity;
    obj["explicitness"] = explicitness;
    obj["disentanglement"] = disentanglement;
    obj["completeness"] = completeness;
    obj["informativeness"] = informativeness;
    obj["config"] = json::parse(config.to_json_text());
    obj["flags"] = flags;
    return obj.dump(2);
}

MetricReport MetricReport::from_json_text(const std::string& text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("metric report JSON: ") + e.what());
    }
    MetricReport r;
    try {
        r.z_diff = obj.at("z_diff").get<double>();
        r.z_min_var = obj.at("z_min_var").get<double>();
        r.mig = obj.at("mig").get<double>();
        r.modularity = obj.at("modularity").get<double>();
        r.explicitness = obj.at("explicitness").get<double>();
        r.disentanglement = obj.at("disentanglement").get<double>();
        r.completeness = obj.at("completeness").get<double>();
        r.informativeness = obj.at("informativeness").get<double>();
        if (obj.contains("config")) {
            r.config = MetricConfig::from_json_text(obj.at("config").dump());
        }
        if (obj.contains("flags")) {
            r.flags = obj.at("flags").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("metric report JSON: ") + e.what());
    }
    return r;
}

std::string MetricReport::csv_header() {
    return "z_diff,z_min_var,mig,modularity,explicitness,disentanglement,"
           "completeness,informativeness";
}

namespace {

std::string format_value(double v) {
    json j = v;
    return j.dump();
}

}  // namespace

std::string MetricReport::csv_row(bool paper_scale) const {
    const double scale = paper_scale ? 10.0 : 1.0;
    std::string out;
    out += format_value(z_diff);
    out += "," + format_value(z_min_var);
    out += "," + format_value(mig);
    out += "," + format_value(modularity);
    out += "," + format_value(explicitness);
    out += "," + format_value(disentanglement * scale);
    out += "," + format_value(completeness * scale);
    out += "," + format_value(informativeness);
    return out;
}

MetricReport evaluate_all(const Representations& reps,
                          const FactorMatrix& factors,
                          const MetricConfig& cfg) {
    const std::size_t n = reps.rows();
    if (n != factors.n) {
        throw DimensionError(
            "evaluate_all: representation/factor row counts disagree");
    }
    if (n < cfg.min_samples) {
        throw DataError("evaluate_all: " + std::to_string(n) +
                        " samples, need at least " +
                        std::to_string(cfg.min_samples));
    }

    MetricReport report;
    report.config = cfg;
    for (std::size_t k = 0; k < factors.factor_count(); ++k) {
        if (factors.degenerate[k]) {
            report.flags.push_back("factor \"" + factors.factor_names[k] +
                                   "\" is degenerate over this corpus");
        }
    }

    const DiscretizedCodes codes = discretize(reps, cfg.bins, cfg.quantile_bins);
    for (std::size_t j = 0; j < codes.d; ++j) {
        if (codes.constant_dim[j]) {
            report.flags.push_back("dimension " + std::to_string(j) +
                                   " is constant");
        }
    }

    MetricConfig sub = cfg;
    sub.seed = cfg.seed + 1;
    report.z_diff = z_diff_score(reps, factors, sub, &report.flags);
    sub.seed = cfg.seed + 2;
    report.z_min_var = z_min_var_score(reps, factors, sub, &report.flags);
    report.mig = mig(codes, factors, &report.flags);
    report.modularity = modularity(codes, factors, &report.flags);
    report.explicitness = explicitness(reps, factors, cfg, &report.flags);
    sub.seed = cfg.seed + 3;
    const DciScores scores = dci(reps, factors, sub, &report.flags);
    report.disentanglement = scores.disentanglement;
    report.completeness = scores.completeness;
    report.informativeness = scores.informativeness;
    return report;
}

}  // namespace defdis::metrics
