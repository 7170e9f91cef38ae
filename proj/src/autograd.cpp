// SPDX-License-Identifier: Apache-2.0

#include "sonic/autograd.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "sonic/errors.hpp"

namespace sonic::ag {

const Matrix& Var::value() const { return graph->value(id); }

double Var::scalar() const {
    const Matrix& m = value();
    assert(m.rows == 1 && m.cols == 1);
    return m.data[0];
}

Var Graph::param(const Matrix& m, bool requires_grad) {
    Node n;
    n.external = &m;
    n.requires_grad = recording_ && requires_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix m) {
    Node n;
    n.value = std::move(m);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Graph::grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) {
        const Matrix& v = value(id);
        n.grad = Matrix(v.rows, v.cols, 0.0);
    }
    return n.grad;
}

const Matrix* Graph::grad_if_any(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.grad.size() == 0 ? nullptr : &n.grad;
}

Var Graph::make(Matrix value, std::initializer_list<Var> parents, Backward back) {
    return make(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(back));
}

Var Graph::make(Matrix value, std::span<const Var> parents, Backward back) {
    Node n;
    n.value = std::move(value);
    if (recording_) {
        for (const Var& p : parents) {
            if (p.valid() && requires_grad(p.id)) {
                n.requires_grad = true;
                break;
            }
        }
        if (n.requires_grad) n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

void Graph::backward(Var root) {
    if (!recording_) throw UsageError("backward() called on a graph built without recording");
    if (root.graph != this) throw UsageError("backward(): root belongs to another graph");
    const Matrix& rv = value(root.id);
    if (rv.rows != 1 || rv.cols != 1) throw UsageError("backward(): root must be a scalar");
    for (auto& n : nodes_) n.grad = Matrix();
    if (!requires_grad(root.id)) return;
    grad(root.id).data[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || !n.back || n.grad.size() == 0) continue;
        n.back(*this, i);
    }
}

namespace {

bool needs(Graph& g, Var v) { return v.valid() && g.requires_grad(v.id); }

}  // namespace

Var add(Var a, Var b) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    assert(x.same_shape(y));
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += y.data[i];
    return g.make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        for (Var p : {a, b}) {
            if (!needs(g, p)) continue;
            Matrix& gp = g.grad(p.id);
            for (std::size_t i = 0; i < d.size(); ++i) gp.data[i] += d.data[i];
        }
    });
}

Var add_row(Var a, Var row) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    const Matrix& r = row.value();
    assert(r.rows == 1 && r.cols == x.cols);
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows; ++i) {
        for (std::size_t c = 0; c < out.cols; ++c) out(i, c) += r(0, c);
    }
    return g.make(std::move(out), {a, row}, [a, row](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        if (needs(g, a)) {
            Matrix& ga = g.grad(a.id);
            for (std::size_t i = 0; i < d.size(); ++i) ga.data[i] += d.data[i];
        }
        if (needs(g, row)) {
            Matrix& gr = g.grad(row.id);
            for (std::size_t i = 0; i < d.rows; ++i) {
                for (std::size_t c = 0; c < d.cols; ++c) gr(0, c) += d(i, c);
            }
        }
    });
}

Var scale(Var a, double s) {
    Graph& g = *a.graph;
    Matrix out = a.value();
    for (auto& v : out.data) v *= s;
    return g.make(std::move(out), {a}, [a, s](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        Matrix& ga = g.grad(a.id);
        for (std::size_t i = 0; i < d.size(); ++i) ga.data[i] += s * d.data[i];
    });
}

Var affine(Var a, double mul, double shift) {
    Graph& g = *a.graph;
    Matrix out = a.value();
    for (auto& v : out.data) v = mul * v + shift;
    return g.make(std::move(out), {a}, [a, mul](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        Matrix& ga = g.grad(a.id);
        for (std::size_t i = 0; i < d.size(); ++i) ga.data[i] += mul * d.data[i];
    });
}

Var lincomb(std::span<const Var> xs, std::span<const double> weights) {
    assert(!xs.empty() && xs.size() == weights.size());
    Graph& g = *xs[0].graph;
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) total += weights[i] * xs[i].scalar();
    std::vector<Var> parents(xs.begin(), xs.end());
    std::vector<double> w(weights.begin(), weights.end());
    return g.make(Matrix(1, 1, total), parents, [parents, w](Graph& g, int self) {
        const double d = g.grad(self).data[0];
        for (std::size_t i = 0; i < parents.size(); ++i) {
            if (needs(g, parents[i])) g.grad(parents[i].id).data[0] += w[i] * d;
        }
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    Matrix out(rows.size(), x.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = x.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return g.make(std::move(out), {a}, [a, idx](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        Matrix& ga = g.grad(a.id);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto dst = ga.row(idx[i]);
            const auto src = d.row(i);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
}

Var scatter_rows(Var a, std::span<const std::size_t> rows, std::size_t total_rows) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    assert(rows.size() == x.rows);
    Matrix out(total_rows, x.cols, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = x.row(i);
        std::copy(src.begin(), src.end(), out.row(rows[i]).begin());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return g.make(std::move(out), {a}, [a, idx](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        Matrix& ga = g.grad(a.id);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto dst = ga.row(i);
            const auto src = d.row(idx[i]);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
}

Var zero_rows(Var a, std::span<const std::size_t> rows) {
    Graph& g = *a.graph;
    Matrix out = a.value();
    for (std::size_t r : rows) {
        for (auto& v : out.row(r)) v = 0.0;
    }
    std::vector<unsigned char> dropped(out.rows, 0);
    for (std::size_t r : rows) dropped[r] = 1;
    return g.make(std::move(out), {a}, [a, dropped](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        Matrix& ga = g.grad(a.id);
        for (std::size_t r = 0; r < d.rows; ++r) {
            if (dropped[r]) continue;
            for (std::size_t c = 0; c < d.cols; ++c) ga(r, c) += d(r, c);
        }
    });
}

Var transpose(Var a) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    Matrix out(x.cols, x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) out(c, r) = x(r, c);
    }
    return g.make(std::move(out), {a}, [a](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        Matrix& ga = g.grad(a.id);
        for (std::size_t r = 0; r < ga.rows; ++r) {
            for (std::size_t c = 0; c < ga.cols; ++c) ga(r, c) += d(c, r);
        }
    });
}

namespace {

// out[i, :] += x[i, :] * w for the selected rows.
void gemm_rows(const Matrix& x, const Matrix& w, Matrix& out, std::size_t r) {
    const double* xr = x.data.data() + r * x.cols;
    double* o = out.data.data() + r * out.cols;
    for (std::size_t k = 0; k < x.cols; ++k) {
        const double xv = xr[k];
        if (xv == 0.0) continue;
        const double* wr = w.data.data() + k * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) o[j] += xv * wr[j];
    }
}

// dx[r, :] += d[r, :] * w^T
void gemm_rows_bt(const Matrix& d, const Matrix& w, Matrix& dx, std::size_t r) {
    const double* dr = d.data.data() + r * d.cols;
    double* o = dx.data.data() + r * dx.cols;
    for (std::size_t k = 0; k < w.rows; ++k) {
        const double* wr = w.data.data() + k * w.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) acc += dr[j] * wr[j];
        o[k] += acc;
    }
}

// dw += x[r, :]^T d[r, :]
void gemm_rows_at(const Matrix& x, const Matrix& d, Matrix& dw, std::size_t r) {
    const double* xr = x.data.data() + r * x.cols;
    const double* dr = d.data.data() + r * d.cols;
    for (std::size_t k = 0; k < x.cols; ++k) {
        const double xv = xr[k];
        if (xv == 0.0) continue;
        double* o = dw.data.data() + k * dw.cols;
        for (std::size_t j = 0; j < d.cols; ++j) o[j] += xv * dr[j];
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    const Matrix& w = b.value();
    assert(x.cols == w.rows);
    Matrix out(x.rows, w.cols, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) gemm_rows(x, w, out, r);
    return g.make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        const Matrix& x = g.value(a.id);
        const Matrix& w = g.value(b.id);
        if (needs(g, a)) {
            Matrix& ga = g.grad(a.id);
            for (std::size_t r = 0; r < d.rows; ++r) gemm_rows_bt(d, w, ga, r);
        }
        if (needs(g, b)) {
            Matrix& gb = g.grad(b.id);
            for (std::size_t r = 0; r < d.rows; ++r) gemm_rows_at(x, d, gb, r);
        }
    });
}

Var routed_linear(Var x, Var w, Var b, Var w_alt, Var b_alt, std::span<const unsigned char> alt) {
    Graph& g = *x.graph;
    const Matrix& xv = x.value();
    const Matrix& wv = w.value();
    assert(xv.cols == wv.rows && alt.size() == xv.rows);
    Matrix out(xv.rows, wv.cols, 0.0);
    for (std::size_t r = 0; r < xv.rows; ++r) {
        const bool use_alt = alt[r] != 0;
        const Var& wr = use_alt ? w_alt : w;
        const Var& br = use_alt ? b_alt : b;
        gemm_rows(xv, wr.value(), out, r);
        if (br.valid()) {
            const Matrix& bv = br.value();
            for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += bv(0, c);
        }
    }
    std::vector<unsigned char> flags(alt.begin(), alt.end());
    std::vector<Var> parents{x, w};
    if (b.valid()) parents.push_back(b);
    if (w_alt.valid()) parents.push_back(w_alt);
    if (b_alt.valid()) parents.push_back(b_alt);
    return g.make(std::move(out), parents, [x, w, b, w_alt, b_alt, flags](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        const Matrix& xv = g.value(x.id);
        const bool dx_needed = needs(g, x);
        for (std::size_t r = 0; r < d.rows; ++r) {
            const bool use_alt = flags[r] != 0;
            const Var& wr = use_alt ? w_alt : w;
            const Var& br = use_alt ? b_alt : b;
            if (dx_needed) gemm_rows_bt(d, g.value(wr.id), g.grad(x.id), r);
            if (needs(g, wr)) gemm_rows_at(xv, d, g.grad(wr.id), r);
            if (needs(g, br)) {
                Matrix& gb = g.grad(br.id);
                for (std::size_t c = 0; c < d.cols; ++c) gb(0, c) += d(r, c);
            }
        }
    });
}

Var gelu(Var a) {
    Graph& g = *a.graph;
    constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
    constexpr double kA = 0.044715;
    const Matrix& x = a.value();
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        out.data[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
    }
    return g.make(std::move(out), {a}, [a](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        const Matrix& x = g.value(a.id);
        Matrix& ga = g.grad(a.id);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = x.data[i];
            const double t = std::tanh(kC * (v + kA * v * v * v));
            const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
            ga.data[i] += d.data[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
    });
}

Var rmsnorm(Var x, Var gain, double eps) {
    Graph& g = *x.graph;
    const Matrix& xv = x.value();
    const Matrix& gv = gain.value();
    const std::size_t n = xv.cols;
    Matrix out(xv.rows, n);
    std::vector<double> inv(xv.rows);
    for (std::size_t r = 0; r < xv.rows; ++r) {
        double ms = 0.0;
        for (std::size_t c = 0; c < n; ++c) ms += xv(r, c) * xv(r, c);
        inv[r] = 1.0 / std::sqrt(ms / static_cast<double>(n) + eps);
        for (std::size_t c = 0; c < n; ++c) out(r, c) = gv(0, c) * xv(r, c) * inv[r];
    }
    return g.make(std::move(out), {x, gain}, [x, gain, inv, eps](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        const Matrix& xv = g.value(x.id);
        const Matrix& gv = g.value(gain.id);
        const std::size_t n = xv.cols;
        for (std::size_t r = 0; r < xv.rows; ++r) {
            const double s = inv[r];
            if (needs(g, x)) {
                double dot = 0.0;
                for (std::size_t c = 0; c < n; ++c) dot += gv(0, c) * d(r, c) * xv(r, c);
                Matrix& gx = g.grad(x.id);
                const double k = dot * s * s * s / static_cast<double>(n);
                for (std::size_t c = 0; c < n; ++c) gx(r, c) += gv(0, c) * d(r, c) * s - xv(r, c) * k;
            }
            if (needs(g, gain)) {
                Matrix& gg = g.grad(gain.id);
                for (std::size_t c = 0; c < n; ++c) gg(0, c) += d(r, c) * xv(r, c) * s;
            }
        }
    });
}

Var attention_probs(Var q, Var k, const VisibilityMask& mask, std::size_t head, std::size_t heads) {
    Graph& g = *q.graph;
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const std::size_t n = qv.rows;
    assert(mask.length() == n && kv.rows == n);
    const std::size_t hd = qv.cols / heads;
    const std::size_t off = head * hd;
    const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
    Matrix p(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* vis = mask.row(i);
        const double* qi = qv.data.data() + i * qv.cols + off;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (!vis[j]) continue;
            const double* kj = kv.data.data() + j * kv.cols + off;
            double s = 0.0;
            for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
            s *= sc;
            p(i, j) = s;
            if (s > mx) mx = s;
        }
        // Self-visibility guarantees at least one visible key.
        assert(vis[i]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!vis[j]) continue;
            const double e = std::exp(p(i, j) - mx);
            p(i, j) = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (vis[j]) p(i, j) /= z;
        }
    }
    return g.make(std::move(p), {q, k}, [q, k, off, hd, sc](Graph& g, int self) {
        const Matrix& dp = g.grad(self);
        const Matrix& pv = g.value(self);
        const Matrix& qv = g.value(q.id);
        const Matrix& kv = g.value(k.id);
        const std::size_t n = pv.rows;
        const bool gq = needs(g, q);
        const bool gk = needs(g, k);
        std::vector<double> ds(n);
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += pv(i, j) * dp(i, j);
            for (std::size_t j = 0; j < n; ++j) ds[j] = pv(i, j) * (dp(i, j) - dot) * sc;
            for (std::size_t j = 0; j < n; ++j) {
                if (pv(i, j) == 0.0) continue;
                if (gq) {
                    double* dq = g.grad(q.id).data.data() + i * qv.cols + off;
                    const double* kj = kv.data.data() + j * kv.cols + off;
                    for (std::size_t c = 0; c < hd; ++c) dq[c] += ds[j] * kj[c];
                }
                if (gk) {
                    double* dk = g.grad(k.id).data.data() + j * kv.cols + off;
                    const double* qi = qv.data.data() + i * qv.cols + off;
                    for (std::size_t c = 0; c < hd; ++c) dk[c] += ds[j] * qi[c];
                }
            }
        }
    });
}

Var attention_mix(std::span<const Var> probs, Var v) {
    Graph& g = *v.graph;
    const Matrix& vv = v.value();
    const std::size_t heads = probs.size();
    const std::size_t hd = vv.cols / heads;
    const std::size_t n = vv.rows;
    Matrix out(n, vv.cols, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix& p = probs[h].value();
        for (std::size_t i = 0; i < n; ++i) {
            double* o = out.data.data() + i * out.cols + h * hd;
            for (std::size_t j = 0; j < n; ++j) {
                const double w = p(i, j);
                if (w == 0.0) continue;
                const double* vj = vv.data.data() + j * vv.cols + h * hd;
                for (std::size_t c = 0; c < hd; ++c) o[c] += w * vj[c];
            }
        }
    }
    std::vector<Var> parents(probs.begin(), probs.end());
    parents.push_back(v);
    std::vector<Var> ps(probs.begin(), probs.end());
    return g.make(std::move(out), parents, [ps, v, hd](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        const Matrix& vv = g.value(v.id);
        const std::size_t n = vv.rows;
        const bool gv = needs(g, v);
        for (std::size_t h = 0; h < ps.size(); ++h) {
            const Matrix& p = g.value(ps[h].id);
            const bool gp = needs(g, ps[h]);
            for (std::size_t i = 0; i < n; ++i) {
                const double* di = d.data.data() + i * d.cols + h * hd;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* vj = vv.data.data() + j * vv.cols + h * hd;
                    if (gp) {
                        double acc = 0.0;
                        for (std::size_t c = 0; c < hd; ++c) acc += di[c] * vj[c];
                        g.grad(ps[h].id)(i, j) += acc;
                    }
                    const double w = p(i, j);
                    if (gv && w != 0.0) {
                        double* dv = g.grad(v.id).data.data() + j * vv.cols + h * hd;
                        for (std::size_t c = 0; c < hd; ++c) dv[c] += w * di[c];
                    }
                }
            }
        }
    });
}

Var sum(Var a) {
    Graph& g = *a.graph;
    double s = 0.0;
    for (double v : a.value().data) s += v;
    return g.make(Matrix(1, 1, s), {a}, [a](Graph& g, int self) {
        const double d = g.grad(self).data[0];
        for (auto& v : g.grad(a.id).data) v += d;
    });
}

Var block_sum(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    double s = 0.0;
    for (std::size_t r : rows) {
        for (std::size_t c : cols) s += x(r, c);
    }
    std::vector<std::size_t> rs(rows.begin(), rows.end());
    std::vector<std::size_t> cs(cols.begin(), cols.end());
    return g.make(Matrix(1, 1, s), {a}, [a, rs, cs](Graph& g, int self) {
        const double d = g.grad(self).data[0];
        Matrix& ga = g.grad(a.id);
        for (std::size_t r : rs) {
            for (std::size_t c : cs) ga(r, c) += d;
        }
    });
}

Matrix softmax_rows(const Matrix& logits, double tau) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < logits.cols; ++c) mx = std::max(mx, logits(r, c) / tau);
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            out(r, c) = std::exp(logits(r, c) / tau - mx);
            z += out(r, c);
        }
        for (std::size_t c = 0; c < logits.cols; ++c) out(r, c) /= z;
    }
    return out;
}

namespace {

// Row-wise log-softmax at temperature tau with extended-precision reductions.
std::vector<long double> log_softmax_ext(const Matrix& z, double tau) {
    std::vector<long double> out(z.size());
    for (std::size_t r = 0; r < z.rows; ++r) {
        long double mx = -std::numeric_limits<long double>::infinity();
        for (std::size_t c = 0; c < z.cols; ++c) mx = std::max(mx, static_cast<long double>(z(r, c)) / tau);
        long double sum = 0.0L;
        for (std::size_t c = 0; c < z.cols; ++c) sum += std::exp(static_cast<long double>(z(r, c)) / tau - mx);
        const long double lse = mx + std::log(sum);
        for (std::size_t c = 0; c < z.cols; ++c) out[r * z.cols + c] = static_cast<long double>(z(r, c)) / tau - lse;
    }
    return out;
}

}  // namespace

Var kl_rows(Var logits, const Matrix& teacher_logits, double tau) {
    Graph& g = *logits.graph;
    const Matrix& z = logits.value();
    assert(z.same_shape(teacher_logits));
    // Both sides go through the same log-space routine, so identical logits give
    // exactly zero; summing over the vocabulary in double would leave rounding
    // noise large enough to hide small gradients.
    const auto ls = log_softmax_ext(z, tau);
    const auto lt = log_softmax_ext(teacher_logits, tau);
    Matrix out(z.rows, 1, 0.0);
    Matrix ps(z.rows, z.cols), pt(z.rows, z.cols);
    for (std::size_t r = 0; r < z.rows; ++r) {
        long double kl = 0.0L;
        for (std::size_t c = 0; c < z.cols; ++c) {
            const std::size_t i = r * z.cols + c;
            const long double p = std::exp(lt[i]);
            kl += p * (lt[i] - ls[i]);
            pt(r, c) = static_cast<double>(p);
            ps(r, c) = static_cast<double>(std::exp(ls[i]));
        }
        out(r, 0) = static_cast<double>(kl);
    }
    return g.make(std::move(out), {logits}, [logits, ps = std::move(ps), pt = std::move(pt), tau](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        Matrix& gz = g.grad(logits.id);
        for (std::size_t r = 0; r < gz.rows; ++r) {
            const double k = d(r, 0) / tau;
            for (std::size_t c = 0; c < gz.cols; ++c) gz(r, c) += k * (ps(r, c) - pt(r, c));
        }
    });
}

Var cosine_rows(Var a, Var b) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    assert(x.same_shape(y));
    Matrix out(x.rows, 1);
    std::vector<double> nx(x.rows), ny(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double dot = 0.0, sx = 0.0, sy = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            dot += x(r, c) * y(r, c);
            sx += x(r, c) * x(r, c);
            sy += y(r, c) * y(r, c);
        }
        if (sx == 0.0 || sy == 0.0) {
            throw NumericalError("cosine of a zero-norm vector at row " + std::to_string(r));
        }
        nx[r] = std::sqrt(sx);
        ny[r] = std::sqrt(sy);
        // sqrt(sx * sy) is exactly sx for identical rows, so cos(a, a) == 1.
        out(r, 0) = dot / std::sqrt(sx * sy);
    }
    return g.make(std::move(out), {a, b}, [a, b, nx, ny](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        const Matrix& cv = g.value(self);
        const Matrix& x = g.value(a.id);
        const Matrix& y = g.value(b.id);
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double c = cv(r, 0);
            const double k = d(r, 0);
            if (needs(g, a)) {
                Matrix& gx = g.grad(a.id);
                for (std::size_t j = 0; j < x.cols; ++j) {
                    gx(r, j) += k * (y(r, j) / (nx[r] * ny[r]) - c * x(r, j) / (nx[r] * nx[r]));
                }
            }
            if (needs(g, b)) {
                Matrix& gy = g.grad(b.id);
                for (std::size_t j = 0; j < x.cols; ++j) {
                    gy(r, j) += k * (x(r, j) / (nx[r] * ny[r]) - c * y(r, j) / (ny[r] * ny[r]));
                }
            }
        }
    });
}

Var softmax_column(Var a) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    Matrix out(x.rows, x.cols);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x.data) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.data[i] = std::exp(x.data[i] - mx);
        z += out.data[i];
    }
    for (auto& v : out.data) v /= z;
    return g.make(std::move(out), {a}, [a](Graph& g, int self) {
        const Matrix& d = g.grad(self);
        const Matrix& s = g.value(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) dot += s.data[i] * d.data[i];
        Matrix& ga = g.grad(a.id);
        for (std::size_t i = 0; i < s.size(); ++i) ga.data[i] += s.data[i] * (d.data[i] - dot);
    });
}

Var entropy(Var p) {
    Graph& g = *p.graph;
    double h = 0.0;
    for (double v : p.value().data) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return g.make(Matrix(1, 1, h), {p}, [p](Graph& g, int self) {
        const double d = g.grad(self).data[0];
        const Matrix& pv = g.value(p.id);
        Matrix& gp = g.grad(p.id);
        for (std::size_t i = 0; i < pv.size(); ++i) {
            if (pv.data[i] > 0.0) gp.data[i] += -d * (std::log(pv.data[i]) + 1.0);
        }
    });
}

Var hinge_below(Var a, double threshold) {
    Graph& g = *a.graph;
    const double gap = threshold - a.scalar();
    const bool active = gap > 0.0;
    return g.make(Matrix(1, 1, active ? gap : 0.0), {a}, [a, active](Graph& g, int self) {
        if (active) g.grad(a.id).data[0] -= g.grad(self).data[0];
    });
}

Var weighted_sum(Var a, std::span<const double> weights) {
    Graph& g = *a.graph;
    const Matrix& x = a.value();
    assert(x.cols == 1 && x.rows == weights.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) s += weights[i] * x(i, 0);
    std::vector<double> w(weights.begin(), weights.end());
    return g.make(Matrix(1, 1, s), {a}, [a, w](Graph& g, int self) {
        const double d = g.grad(self).data[0];
        Matrix& ga = g.grad(a.id);
        for (std::size_t i = 0; i < w.size(); ++i) ga(i, 0) += w[i] * d;
    });
}

}  // namespace sonic::ag
