#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "defdis/tensor.hpp"

namespace defdis {

// Reverse-mode automatic differentiation over a tape of tensor operations.
//
// Nodes are appended in construction order, so the tape is topologically
// ordered by construction and backward() is a single reverse sweep that
// visits every node exactly once. A Graph is confined to one thread; the
// parameter tensors it copies in stay untouched.
class Graph {
public:
    using NodeId = std::uint32_t;

    // Leaf holding an externally owned value. Gradients are accumulated for
    // it iff value.requires_grad is set.
    NodeId leaf(Tensor value);
    // Leaf that never receives gradients.
    NodeId constant(Tensor value);

    NodeId matmul(NodeId a, NodeId b);
    // Elementwise when shapes match; [B,D] + [1,D] broadcasts the second
    // operand over the leading batch dimension. No other broadcasting.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    // Elementwise product, equal shapes only.
    NodeId mul(NodeId a, NodeId b);
    // scale * x + shift, elementwise.
    NodeId affine(NodeId a, double scale, double shift);
    NodeId sigmoid(NodeId a);
    NodeId tanh(NodeId a);

    // [B,D1] ++ [B,D2] -> [B,D1+D2].
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId slice_cols(NodeId a, std::size_t start, std::size_t count);
    // Single row r of a rank-2 node, as [1,D].
    NodeId row(NodeId a, std::size_t r);
    // Stack T nodes of shape [1,D] into [T,D].
    NodeId stack_rows(const std::vector<NodeId>& rows);
    // Gather rows of an embedding table: table [R,E], ids in [0,R) -> [T,E].
    NodeId lookup_rows(NodeId table, std::vector<int> ids);
    // Elementwise product with a fixed (non-differentiated) mask.
    NodeId dropout(NodeId a, Tensor keep_mask);

    // mu + exp(0.5 * logvar) * noise, differentiable in mu and logvar.
    NodeId reparameterize(NodeId mu, NodeId logvar, Tensor noise);
    // KL( N(mu, exp(logvar)) || N(0, I) ), summed over elements. Scalar.
    NodeId gaussian_kl(NodeId mu, NodeId logvar);
    // KL between two diagonal Gaussians, summed over elements. Scalar.
    NodeId gaussian_kl_between(NodeId mu_q, NodeId logvar_q,
                               NodeId mu_p, NodeId logvar_p);
    // Mean negative log-likelihood over the rows of logits [T,V]. Scalar.
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> target_ids);

    NodeId sum_all(NodeId a);
    NodeId mean_of(const std::vector<NodeId>& scalars);
    // wa * a + wb * b on scalars.
    NodeId add_weighted(NodeId a, double wa, NodeId b, double wb);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = 1 and propagates to every leaf. root must be
    // a scalar. All forward values must be finite.
    void backward(NodeId root);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Graph&, NodeId)> back;
    };

    NodeId push(Tensor value, std::vector<NodeId> parents,
                std::function<void(Graph&, NodeId)> back);
    bool any_needs_grad(const std::vector<NodeId>& ids) const;
    void check_rank2(NodeId id, const char* op) const;

    Tensor& grad_ref(NodeId id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
};

// Max relative deviation between backward gradients and central finite
// differences, per parameter.
struct GradCheckEntry {
    std::string param;
    double max_rel_dev = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> params;
    double max_rel_dev = 0.0;

    bool passed(double tol) const { return max_rel_dev <= tol; }
};

// Builds a scalar-rooted graph from leaves bound to `params`, in order.
using GraphBuilder =
    std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

// Compares backward gradients of f against central finite differences with
// step eps. f must be deterministic (fix any noise outside the builder).
GradCheckReport grad_check(const GraphBuilder& f,
                           const std::vector<NamedTensor>& params, double eps);

}  // namespace defdis
