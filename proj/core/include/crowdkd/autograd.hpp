#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "crowdkd/tensor.hpp"

namespace crowdkd {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the dynamically built computation tape.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand during backward
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backward;  // scatters node.grad into inputs

    Tensor& grad_buffer();
};

/// Handle to a tape node. Cheap to copy; the tape is kept alive by the
/// shared input edges and torn down when the last handle goes away.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// Leaf-only switch; must be set before the node is used in a graph.
    void set_requires_grad(bool on);
    void zero_grad();

    /// Overwrite the value of a leaf in place (optimizer updates).
    Tensor& mutable_value() { return node_->value; }

    NodePtr node() const { return node_; }
    static Var from_node(NodePtr n);

private:
    NodePtr node_;
};

Var constant(Tensor t);

// Elementwise; shapes must match exactly (scalars are shape {1}).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var relu6(const Var& a);

Var sum(const Var& a);                             // -> scalar
Var sum_sq_diff(const Var& a, const Var& b);       // squared Frobenius distance, -> scalar

struct ConvOpts {
    int stride = 1;
    int pad = 0;
    int dilation = 1;
    int groups = 1;
};
/// x {Ci,H,W}, w {Co,Ci/groups,kh,kw}, optional bias {Co} -> {Co,Ho,Wo}.
Var conv2d(const Var& x, const Var& w, const Var& bias, const ConvOpts& opts);

Var maxpool2x2(const Var& x);

/// Bilinear resample with corner-aligned sampling; channels unchanged.
/// Identity (bit-equal) when the target matches the source shape.
Var resize_bilinear(const Var& x, int out_h, int out_w);

/// Nearest-neighbor resample on the same corner-aligned sample grid.
Var resize_nearest(const Var& x, int out_h, int out_w);

/// x {C,H,W} * m {1,H,W}, the map broadcast across channels.
Var broadcast_mul(const Var& x, const Var& m);

enum class Similarity {
    cosine,        // <t,s> / (|t||s| + eps)
    teacher_norm,  // <t,s> / (|t|^2 + eps), the as-written variant
};
/// Per-location channel-vector similarity of two {C,H,W} features -> {1,H,W}.
Var similarity_map(const Var& t, const Var& s, double eps, Similarity kind);

/// Channel-relation matrix of f1 {m,h,w} and f2 {n,h,w} -> {m,n},
/// entry (p,q) = sum_{x,y} f1(p,y,x) * f2(q,y,x) / (h*w).
Var fsp(const Var& f1, const Var& f2);

/// (x - min) / (max - min + eps), elementwise over the whole tensor.
Var minmax_norm(const Var& x, double eps = 1e-12);

/// Reverse-mode sweep from a scalar root. Accumulates into the grad
/// buffers of every reachable node with requires_grad set.
void backward(const Var& root);

}  // namespace crowdkd
