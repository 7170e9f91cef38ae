// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sonic/mask.hpp"
#include "sonic/matrix.hpp"

namespace sonic::ag {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
    Graph* graph = nullptr;
    int id = -1;

    bool valid() const { return graph != nullptr && id >= 0; }
    const Matrix& value() const;
    double scalar() const;
};

// Tape-based reverse-mode differentiation over dense matrices. Node ids are
// assigned in creation order, which is a topological order of the graph.
class Graph {
public:
    explicit Graph(bool recording = true) : recording_(recording) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return recording_; }

    // Leaf aliasing external storage. `m` must outlive the graph.
    Var param(const Matrix& m, bool requires_grad);
    Var constant(Matrix m);

    const Matrix& value(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.external ? *n.external : n.value;
    }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    // Gradient buffer; allocated on first access.
    Matrix& grad(int id);
    const Matrix* grad_if_any(int id) const;

    // Seeds d(root)/d(root) = 1 and propagates. Clears previous gradients.
    void backward(Var root);

    using Backward = std::function<void(Graph&, int)>;
    Var make(Matrix value, std::initializer_list<Var> parents, Backward back);
    Var make(Matrix value, std::span<const Var> parents, Backward back);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        const Matrix* external = nullptr;
        Matrix grad;
        bool requires_grad = false;
        Backward back;
    };
    std::vector<Node> nodes_;
    bool recording_;
};

// --- elementwise / structural ---
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x m row over a's rows
Var scale(Var a, double s);
Var affine(Var a, double mul, double shift);  // mul * a + shift, elementwise
Var lincomb(std::span<const Var> xs, std::span<const double> weights);  // scalars
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var scatter_rows(Var a, std::span<const std::size_t> rows, std::size_t total_rows);
Var zero_rows(Var a, std::span<const std::size_t> rows);
Var transpose(Var a);

// --- linear algebra ---
Var matmul(Var a, Var b);
// Per-row choice of weights: rows flagged in `alt` use (w_alt, b_alt).
// Bias handles may be invalid (no bias).
Var routed_linear(Var x, Var w, Var b, Var w_alt, Var b_alt, std::span<const unsigned char> alt);

// --- nonlinearities / norms ---
Var gelu(Var a);
Var rmsnorm(Var x, Var gain, double eps);

// --- attention ---
// Softmax over visible keys of head `head`; masked entries are exactly zero.
Var attention_probs(Var q, Var k, const VisibilityMask& mask, std::size_t head, std::size_t heads);
// O[:, head h columns] = P_h V[:, head h columns].
Var attention_mix(std::span<const Var> probs, Var v);

// --- reductions and losses ---
Var sum(Var a);
// Sum of a[r, c] over r in rows, c in cols.
Var block_sum(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols);
// Per-row KL(softmax(teacher_logits / tau) || softmax(logits / tau)); the teacher is constant.
Var kl_rows(Var logits, const Matrix& teacher_logits, double tau);
// Per-row cosine similarity; throws NumericalError on a zero-norm row.
Var cosine_rows(Var a, Var b);
// Softmax over all entries of a column vector.
Var softmax_column(Var a);
// Shannon entropy (natural log) of a probability column vector.
Var entropy(Var p);
// max(0, threshold - a) for a scalar a.
Var hinge_below(Var a, double threshold);
// sum_i w_i a_i for an n x 1 column a.
Var weighted_sum(Var a, std::span<const double> weights);

// Row softmax of logits / tau on plain matrices (no graph).
Matrix softmax_rows(const Matrix& logits, double tau);

}  // namespace sonic::ag
