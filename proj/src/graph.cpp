#include "defdis/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace defdis {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Graph::NodeId Graph::push(Tensor value, std::vector<NodeId> parents,
                          std::function<void(Graph&, NodeId)> back) {
    Node node;
    node.needs_grad = any_needs_grad(parents);
    node.value = std::move(value);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

bool Graph::any_needs_grad(const std::vector<NodeId>& ids) const {
    return std::any_of(ids.begin(), ids.end(),
                       [&](NodeId id) { return nodes_[id].needs_grad; });
}

void Graph::check_rank2(NodeId id, const char* op) const {
    if (nodes_[id].value.shape().size() != 2) {
        throw DimensionError(std::string(op) + ": operand must be rank-2, got " +
                             nodes_[id].value.shape_str());
    }
}

Graph::NodeId Graph::leaf(Tensor value) {
    Node node;
    node.needs_grad = value.requires_grad;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::constant(Tensor value) {
    value.requires_grad = false;
    return leaf(std::move(value));
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    if (va.cols() != vb.rows()) {
        throw DimensionError("matmul: inner dimensions disagree, " +
                             va.shape_str() + " x " + vb.shape_str());
    }
    const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = va.at(i, p);
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                out.at(i, j) += aip * vb.at(p, j);
            }
        }
    }
    return push(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, NodeId self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& va = g.nodes_[a].value;
        const Tensor& vb = g.nodes_[b].value;
        if (g.nodes_[a].needs_grad) {
            Tensor& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double gij = go.at(i, j);
                    if (gij == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p)
                        ga.at(i, p) += gij * vb.at(p, j);
                }
        }
        if (g.nodes_[b].needs_grad) {
            Tensor& gb = g.grad_ref(b);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = va.at(i, p);
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        gb.at(p, j) += aip * go.at(i, j);
                }
        }
    });
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    if (va.same_shape(vb)) {
        Tensor out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
        return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
            const Tensor& go = g.nodes_[self].grad;
            for (NodeId p : {a, b}) {
                if (!g.nodes_[p].needs_grad) continue;
                Tensor& gp = g.grad_ref(p);
                for (std::size_t i = 0; i < go.size(); ++i) gp[i] += go[i];
            }
        });
    }
    // Row broadcast: [B,D] + [1,D].
    if (va.shape().size() == 2 && vb.shape().size() == 2 && vb.rows() == 1 &&
        va.cols() == vb.cols()) {
        Tensor out = va;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += vb[c];
        return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
            const Tensor& go = g.nodes_[self].grad;
            if (g.nodes_[a].needs_grad) {
                Tensor& ga = g.grad_ref(a);
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (g.nodes_[b].needs_grad) {
                Tensor& gb = g.grad_ref(b);
                for (std::size_t r = 0; r < go.rows(); ++r)
                    for (std::size_t c = 0; c < go.cols(); ++c)
                        gb[c] += go.at(r, c);
            }
        });
    }
    throw DimensionError("add: incompatible shapes " + va.shape_str() + " and " +
                         vb.shape_str());
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    if (!va.same_shape(vb)) {
        throw DimensionError("sub: incompatible shapes " + va.shape_str() +
                             " and " + vb.shape_str());
    }
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.nodes_[a].needs_grad) {
            Tensor& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.nodes_[b].needs_grad) {
            Tensor& gb = g.grad_ref(b);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
    });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    if (!va.same_shape(vb)) {
        throw DimensionError("mul: incompatible shapes " + va.shape_str() +
                             " and " + vb.shape_str());
    }
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& va = g.nodes_[a].value;
        const Tensor& vb = g.nodes_[b].value;
        if (g.nodes_[a].needs_grad) {
            Tensor& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
        }
        if (g.nodes_[b].needs_grad) {
            Tensor& gb = g.grad_ref(b);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
    });
}

Graph::NodeId Graph::affine(NodeId a, double scale, double shift) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data()) v = scale * v + shift;
    return push(std::move(out), {a}, [a, scale](Graph& g, NodeId self) {
        if (!g.nodes_[a].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += scale * go[i];
    });
}

Graph::NodeId Graph::sigmoid(NodeId a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data()) v = stable_sigmoid(v);
    return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
        if (!g.nodes_[a].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& vo = g.nodes_[self].value;
        Tensor& ga = g.grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
    });
}

Graph::NodeId Graph::tanh(NodeId a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data()) v = std::tanh(v);
    return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
        if (!g.nodes_[a].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& vo = g.nodes_[self].value;
        Tensor& ga = g.grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga[i] += go[i] * (1.0 - vo[i] * vo[i]);
    });
}

Graph::NodeId Graph::concat_cols(NodeId a, NodeId b) {
    check_rank2(a, "concat_cols");
    check_rank2(b, "concat_cols");
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    if (va.rows() != vb.rows()) {
        throw DimensionError("concat_cols: row counts disagree, " +
                             va.shape_str() + " and " + vb.shape_str());
    }
    const std::size_t r = va.rows(), ca = va.cols(), cb = vb.cols();
    Tensor out({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = va.at(i, j);
        for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = vb.at(i, j);
    }
    return push(std::move(out), {a, b}, [a, b, r, ca, cb](Graph& g, NodeId self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.nodes_[a].needs_grad) {
            Tensor& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) += go.at(i, j);
        }
        if (g.nodes_[b].needs_grad) {
            Tensor& gb = g.grad_ref(b);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < cb; ++j)
                    gb.at(i, j) += go.at(i, ca + j);
        }
    });
}

Graph::NodeId Graph::slice_cols(NodeId a, std::size_t start, std::size_t count) {
    check_rank2(a, "slice_cols");
    const Tensor& va = nodes_[a].value;
    if (start + count > va.cols()) {
        throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") exceeds " +
                             va.shape_str());
    }
    const std::size_t r = va.rows();
    Tensor out({r, count});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out.at(i, j) = va.at(i, start + j);
    return push(std::move(out), {a}, [a, start, count, r](Graph& g, NodeId self) {
        if (!g.nodes_[a].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < count; ++j)
                ga.at(i, start + j) += go.at(i, j);
    });
}

Graph::NodeId Graph::row(NodeId a, std::size_t r) {
    check_rank2(a, "row");
    const Tensor& va = nodes_[a].value;
    if (r >= va.rows()) {
        throw IndexError("row: index " + std::to_string(r) + " out of range for " +
                         va.shape_str());
    }
    const std::size_t c = va.cols();
    Tensor out({1, c});
    for (std::size_t j = 0; j < c; ++j) out[j] = va.at(r, j);
    return push(std::move(out), {a}, [a, r, c](Graph& g, NodeId self) {
        if (!g.nodes_[a].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a);
        for (std::size_t j = 0; j < c; ++j) ga.at(r, j) += go[j];
    });
}

Graph::NodeId Graph::stack_rows(const std::vector<NodeId>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: empty row list");
    const std::size_t c = nodes_[rows[0]].value.cols();
    for (NodeId id : rows) {
        check_rank2(id, "stack_rows");
        if (nodes_[id].value.rows() != 1 || nodes_[id].value.cols() != c) {
            throw DimensionError("stack_rows: expected [1x" + std::to_string(c) +
                                 "], got " + nodes_[id].value.shape_str());
        }
    }
    Tensor out({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = nodes_[rows[i]].value[j];
    auto parents = rows;
    return push(std::move(out), parents, [parents, c](Graph& g, NodeId self) {
        const Tensor& go = g.nodes_[self].grad;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            if (!g.nodes_[parents[i]].needs_grad) continue;
            Tensor& gp = g.grad_ref(parents[i]);
            for (std::size_t j = 0; j < c; ++j) gp[j] += go.at(i, j);
        }
    });
}

Graph::NodeId Graph::lookup_rows(NodeId table, std::vector<int> ids) {
    check_rank2(table, "lookup_rows");
    const Tensor& vt = nodes_[table].value;
    const std::size_t e = vt.cols();
    Tensor out({ids.size(), e});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vt.rows()) {
            throw IndexError("lookup_rows: id " + std::to_string(ids[i]) +
                             " out of range for table " + vt.shape_str());
        }
        for (std::size_t j = 0; j < e; ++j)
            out.at(i, j) = vt.at(static_cast<std::size_t>(ids[i]), j);
    }
    return push(std::move(out), {table},
                [table, ids = std::move(ids), e](Graph& g, NodeId self) {
                    if (!g.nodes_[table].needs_grad) return;
                    const Tensor& go = g.nodes_[self].grad;
                    Tensor& gt = g.grad_ref(table);
                    for (std::size_t i = 0; i < ids.size(); ++i)
                        for (std::size_t j = 0; j < e; ++j)
                            gt.at(static_cast<std::size_t>(ids[i]), j) += go.at(i, j);
                });
}

Graph::NodeId Graph::dropout(NodeId a, Tensor keep_mask) {
    const Tensor& va = nodes_[a].value;
    if (!va.same_shape(keep_mask)) {
        throw DimensionError("dropout: mask shape " + keep_mask.shape_str() +
                             " does not match " + va.shape_str());
    }
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= keep_mask[i];
    return push(std::move(out), {a},
                [a, mask = std::move(keep_mask)](Graph& g, NodeId self) {
                    if (!g.nodes_[a].needs_grad) return;
                    const Tensor& go = g.nodes_[self].grad;
                    Tensor& ga = g.grad_ref(a);
                    for (std::size_t i = 0; i < go.size(); ++i)
                        ga[i] += go[i] * mask[i];
                });
}

Graph::NodeId Graph::reparameterize(NodeId mu, NodeId logvar, Tensor noise) {
    const Tensor& vm = nodes_[mu].value;
    const Tensor& vl = nodes_[logvar].value;
    if (!vm.same_shape(vl) || !vm.same_shape(noise)) {
        throw DimensionError("reparameterize: shapes disagree, mu " +
                             vm.shape_str() + ", logvar " + vl.shape_str() +
                             ", noise " + noise.shape_str());
    }
    Tensor out = vm;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += std::exp(0.5 * vl[i]) * noise[i];
    return push(std::move(out), {mu, logvar},
                [mu, logvar, n = std::move(noise)](Graph& g, NodeId self) {
                    const Tensor& go = g.nodes_[self].grad;
                    const Tensor& vl = g.nodes_[logvar].value;
                    if (g.nodes_[mu].needs_grad) {
                        Tensor& gm = g.grad_ref(mu);
                        for (std::size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
                    }
                    if (g.nodes_[logvar].needs_grad) {
                        Tensor& gl = g.grad_ref(logvar);
                        for (std::size_t i = 0; i < go.size(); ++i)
                            gl[i] += go[i] * 0.5 * std::exp(0.5 * vl[i]) * n[i];
                    }
                });
}

Graph::NodeId Graph::gaussian_kl(NodeId mu, NodeId logvar) {
    const Tensor& vm = nodes_[mu].value;
    const Tensor& vl = nodes_[logvar].value;
    if (!vm.same_shape(vl)) {
        throw DimensionError("gaussian_kl: mu " + vm.shape_str() +
                             " and logvar " + vl.shape_str() + " disagree");
    }
    if (!vm.all_finite() || !vl.all_finite()) {
        throw NumericError("gaussian_kl: non-finite input");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < vm.size(); ++i)
        kl += 0.5 * (vm[i] * vm[i] + std::exp(vl[i]) - 1.0 - vl[i]);
    return push(Tensor::scalar(kl), {mu, logvar},
                [mu, logvar](Graph& g, NodeId self) {
                    const double go = g.nodes_[self].grad[0];
                    const Tensor& vm = g.nodes_[mu].value;
                    const Tensor& vl = g.nodes_[logvar].value;
                    if (g.nodes_[mu].needs_grad) {
                        Tensor& gm = g.grad_ref(mu);
                        for (std::size_t i = 0; i < vm.size(); ++i)
                            gm[i] += go * vm[i];
                    }
                    if (g.nodes_[logvar].needs_grad) {
                        Tensor& gl = g.grad_ref(logvar);
                        for (std::size_t i = 0; i < vl.size(); ++i)
                            gl[i] += go * 0.5 * (std::exp(vl[i]) - 1.0);
                    }
                });
}

Graph::NodeId Graph::gaussian_kl_between(NodeId mu_q, NodeId logvar_q,
                                         NodeId mu_p, NodeId logvar_p) {
    const Tensor& mq = nodes_[mu_q].value;
    const Tensor& lq = nodes_[logvar_q].value;
    const Tensor& mp = nodes_[mu_p].value;
    const Tensor& lp = nodes_[logvar_p].value;
    if (!mq.same_shape(lq) || !mq.same_shape(mp) || !mq.same_shape(lp)) {
        throw DimensionError("gaussian_kl_between: all four tensors must share " +
                             mq.shape_str());
    }
    if (!mq.all_finite() || !lq.all_finite() || !mp.all_finite() ||
        !lp.all_finite()) {
        throw NumericError("gaussian_kl_between: non-finite input");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < mq.size(); ++i) {
        const double d = mq[i] - mp[i];
        kl += 0.5 * (std::exp(lq[i] - lp[i]) + d * d * std::exp(-lp[i]) - 1.0 +
                     lp[i] - lq[i]);
    }
    return push(
        Tensor::scalar(kl), {mu_q, logvar_q, mu_p, logvar_p},
        [mu_q, logvar_q, mu_p, logvar_p](Graph& g, NodeId self) {
            const double go = g.nodes_[self].grad[0];
            const Tensor& mq = g.nodes_[mu_q].value;
            const Tensor& lq = g.nodes_[logvar_q].value;
            const Tensor& mp = g.nodes_[mu_p].value;
            const Tensor& lp = g.nodes_[logvar_p].value;
            for (std::size_t i = 0; i < mq.size(); ++i) {
                const double d = mq[i] - mp[i];
                const double inv_vp = std::exp(-lp[i]);
                const double ratio = std::exp(lq[i] - lp[i]);
                if (g.nodes_[mu_q].needs_grad)
                    g.grad_ref(mu_q)[i] += go * d * inv_vp;
                if (g.nodes_[mu_p].needs_grad)
                    g.grad_ref(mu_p)[i] -= go * d * inv_vp;
                if (g.nodes_[logvar_q].needs_grad)
                    g.grad_ref(logvar_q)[i] += go * 0.5 * (ratio - 1.0);
                if (g.nodes_[logvar_p].needs_grad)
                    g.grad_ref(logvar_p)[i] +=
                        go * 0.5 * (1.0 - ratio - d * d * inv_vp);
            }
        });
}

Graph::NodeId Graph::softmax_cross_entropy(NodeId logits,
                                           std::vector<int> target_ids) {
    check_rank2(logits, "softmax_cross_entropy");
    const Tensor& vl = nodes_[logits].value;
    const std::size_t t = vl.rows(), v = vl.cols();
    if (target_ids.size() != t) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(t) +
                             " logit rows but " + std::to_string(target_ids.size()) +
                             " targets");
    }
    for (int id : target_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw IndexError("softmax_cross_entropy: target id " +
                             std::to_string(id) + " out of range for vocabulary " +
                             std::to_string(v));
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        double mx = vl.at(i, 0);
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, vl.at(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < v; ++j) lse += std::exp(vl.at(i, j) - mx);
        lse = mx + std::log(lse);
        total += lse - vl.at(i, static_cast<std::size_t>(target_ids[i]));
    }
    return push(Tensor::scalar(total / static_cast<double>(t)), {logits},
                [logits, ids = std::move(target_ids), t, v](Graph& g, NodeId self) {
                    if (!g.nodes_[logits].needs_grad) return;
                    const double go =
                        g.nodes_[self].grad[0] / static_cast<double>(t);
                    const Tensor& vl = g.nodes_[logits].value;
                    Tensor& gl = g.grad_ref(logits);
                    for (std::size_t i = 0; i < t; ++i) {
                        double mx = vl.at(i, 0);
                        for (std::size_t j = 1; j < v; ++j)
                            mx = std::max(mx, vl.at(i, j));
                        double denom = 0.0;
                        for (std::size_t j = 0; j < v; ++j)
                            denom += std::exp(vl.at(i, j) - mx);
                        for (std::size_t j = 0; j < v; ++j) {
                            const double p = std::exp(vl.at(i, j) - mx) / denom;
                            gl.at(i, j) += go * p;
                        }
                        gl.at(i, static_cast<std::size_t>(ids[i])) -= go;
                    }
                });
}

Graph::NodeId Graph::sum_all(NodeId a) {
    const Tensor& va = nodes_[a].value;
    double s = 0.0;
    for (double x : va.data()) s += x;
    return push(Tensor::scalar(s), {a}, [a](Graph& g, NodeId self) {
        if (!g.nodes_[a].needs_grad) return;
        const double go = g.nodes_[self].grad[0];
        Tensor& ga = g.grad_ref(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
    });
}

Graph::NodeId Graph::mean_of(const std::vector<NodeId>& scalars) {
    if (scalars.empty()) throw DimensionError("mean_of: empty list");
    double s = 0.0;
    for (NodeId id : scalars) {
        if (nodes_[id].value.size() != 1) {
            throw DimensionError("mean_of: operand is not scalar: " +
                                 nodes_[id].value.shape_str());
        }
        s += nodes_[id].value[0];
    }
    auto parents = scalars;
    const double inv = 1.0 / static_cast<double>(scalars.size());
    return push(Tensor::scalar(s * inv), parents,
                [parents, inv](Graph& g, NodeId self) {
                    const double go = g.nodes_[self].grad[0] * inv;
                    for (NodeId p : parents) {
                        if (g.nodes_[p].needs_grad) g.grad_ref(p)[0] += go;
                    }
                });
}

Graph::NodeId Graph::add_weighted(NodeId a, double wa, NodeId b, double wb) {
    if (nodes_[a].value.size() != 1 || nodes_[b].value.size() != 1) {
        throw DimensionError("add_weighted: operands must be scalar");
    }
    const double out = wa * nodes_[a].value[0] + wb * nodes_[b].value[0];
    return push(Tensor::scalar(out), {a, b}, [a, wa, b, wb](Graph& g, NodeId self) {
        const double go = g.nodes_[self].grad[0];
        if (g.nodes_[a].needs_grad) g.grad_ref(a)[0] += wa * go;
        if (g.nodes_[b].needs_grad) g.grad_ref(b)[0] += wb * go;
    });
}

void Graph::backward(NodeId root) {
    if (nodes_[root].value.size() != 1) {
        throw DimensionError("backward: root must be scalar, got " +
                             nodes_[root].value.shape_str());
    }
    for (Node& n : nodes_) {
        n.grad = Tensor(n.value.shape());
    }
    nodes_[root].grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back && n.needs_grad) {
            n.back(*this, static_cast<NodeId>(i));
        }
    }
}

GradCheckReport grad_check(const GraphBuilder& f,
                           const std::vector<NamedTensor>& params, double eps) {
    // Analytic pass.
    Graph g;
    std::vector<Graph::NodeId> bound;
    bound.reserve(params.size());
    for (const NamedTensor& p : params) {
        Tensor t = p.value;
        t.requires_grad = true;
        bound.push_back(g.leaf(std::move(t)));
    }
    const Graph::NodeId root = f(g, bound);
    g.backward(root);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Graph::NodeId id : bound) analytic.push_back(g.grad(id));

    auto eval = [&](const std::vector<NamedTensor>& perturbed) {
        Graph h;
        std::vector<Graph::NodeId> ids;
        ids.reserve(perturbed.size());
        for (const NamedTensor& p : perturbed) ids.push_back(h.constant(p.value));
        return h.value(f(h, ids))[0];
    };

    GradCheckReport report;
    std::vector<NamedTensor> work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        GradCheckEntry entry{params[pi].name, 0.0};
        for (std::size_t i = 0; i < params[pi].value.size(); ++i) {
            const double orig = work[pi].value[i];
            work[pi].value[i] = orig + eps;
            const double up = eval(work);
            work[pi].value[i] = orig - eps;
            const double down = eval(work);
            work[pi].value[i] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double ad = analytic[pi][i];
            const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-6});
            entry.max_rel_dev = std::max(entry.max_rel_dev,
                                         std::fabs(fd - ad) / denom);
        }
        report.max_rel_dev = std::max(report.max_rel_dev, entry.max_rel_dev);
        report.params.push_back(std::move(entry));
    }
    return report;
}

}  // namespace defdis
