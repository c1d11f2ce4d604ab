#pragma once

#include <functional>
#include <string>
#include <vector>

#include "telcos/ops.hpp"
#include "telcos/tensor.hpp"

namespace telcos {

class Tape;

// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape. Records every primitive with its inputs and a forward
// closure, so a run can be replayed and checked bit for bit, and gradients
// accumulated from any scalar node. Single writer: one training step owns
// one tape.
class Tape {
  public:
    using ForwardFn = std::function<Tensor(const std::vector<const Tensor*>&)>;
    // Accumulates into parent_grads[i] (pre-sized, zero-initialized) for each parent.
    using BackwardFn = std::function<void(const Tensor& grad_out,
                                          const std::vector<const Tensor*>& parent_vals,
                                          const Tensor& out_val,
                                          std::vector<Tensor*>& parent_grads)>;

    Var leaf(Tensor value, bool needs_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& val(Var v) const;
    int size() const { return static_cast<int>(nodes_.size()); }

    // Primitive ops.
    Var conv2d(Var x, Var k, int stride, int pad);
    Var depthwise(Var x, Var k, int stride, int pad);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_bias(Var x, Var b);
    Var relu(Var x);
    Var slice_c(Var x, int c0, int c1);
    Var concat_c(Var a, Var b);
    Var shuffle_c(Var x, int groups);
    Var avg_pool2(Var x);
    Var upsample2(Var x);
    Var softmax_c(Var x);
    Var logcosh(Var x);
    Var sum_all(Var x);
    Var mean_all(Var x);
    // Fused pixelwise softmax + cross entropy against a fixed per-pixel
    // distribution, averaged over pixels. Gradient is (p - y) / n_pixels.
    Var softmax_ce_c(Var logits, Tensor target);
    // Dense affine on rank-1 vectors: y = W x, W rank-2 (out, in).
    Var dense(Var w, Var x);
    Var add_vec(Var x, Var b);
    Var concat_vec(Var a, Var b);
    // Softmax + CE on a rank-1 logit vector against a fixed distribution.
    Var softmax_ce_vec(Var logits, Tensor target);
    // Per-channel max over horizontal stripes -> rank-1 vector (stripes*channels).
    Var stripe_max(Var x, int n_stripes);
    // Sign bits of plane dot products with a straight-through gradient.
    Var sign_bits_ste(Var x, Tensor planes);

    // Gradients of `loss` (a 1-element node) for every node; zeros where
    // disconnected. Indexed by node id.
    std::vector<Tensor> backward(Var loss);
    Tensor grad_of(const std::vector<Tensor>& grads, Var v) const;

    // Recomputes every recorded forward from its inputs and compares
    // bit for bit with the recorded values.
    bool replay_matches() const;

  private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        ForwardFn forward;    // null for leaves
        BackwardFn backward;  // null for leaves
        bool needs_grad = false;
        const char* opname = "leaf";
    };

    Var record(const char* opname, std::vector<int> parents, ForwardFn fwd, BackwardFn bwd);
    std::vector<const Tensor*> parent_vals(const Node& n) const;

    std::vector<Node> nodes_;
};

}  // namespace telcos
