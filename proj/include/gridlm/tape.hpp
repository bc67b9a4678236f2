#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridlm/errors.hpp"
#include "gridlm/kernels.hpp"
#include "gridlm/params.hpp"
#include "gridlm/tensor.hpp"

namespace gridlm {

/// Reverse-mode autodiff over an explicit tape of tensor operations.
///
/// Nodes are created in forward order; backward() walks them in reverse, which
/// is a valid reverse-topological order because every operation only consumes
/// already-created nodes. Parameters enter the graph through param_ref() or
/// gather_rows(); their gradients accumulate into a tape-local buffer that the
/// trainer drains in ParamStore registration order (deterministic reduction).
class Tape {
public:
    explicit Tape(const ParamStore* store) : store_(store) {
        pgrads_.resize(static_cast<size_t>(store->count()));
        ptouched_.assign(static_cast<size_t>(store->count()), 0);
    }

    /// Drops all nodes but keeps allocations for reuse.
    void reset() {
        for (int i : touched_list_) {
            pgrads_[static_cast<size_t>(i)].fill(0.0);
            ptouched_[static_cast<size_t>(i)] = 0;
        }
        touched_list_.clear();
        used_ = 0;
    }

    int size() const { return used_; }

    // ---- graph construction ----

    int leaf(Tensor v) {
        Node& n = alloc(Op::kLeaf);
        n.val = std::move(v);
        return used_ - 1;
    }

    int param_ref(ParamId pid) {
        Node& n = alloc(Op::kParamRef);
        n.pid = pid;
        return used_ - 1;
    }

    /// Rows of a parameter table selected by index; backward scatter-adds.
    int gather_rows(ParamId table, std::vector<int32_t> rows) {
        const Tensor& t = store_->value(table);
        Node& n = alloc(Op::kGather);
        n.pid = table;
        n.idx = std::move(rows);
        n.val.resize_to(static_cast<int>(n.idx.size()), t.cols);
        for (size_t i = 0; i < n.idx.size(); ++i) {
            const int r = n.idx[i];
            if (r < 0 || r >= t.rows) throw ConfigError("gather_rows: index out of range");
            std::copy(t.row(r), t.row(r) + t.cols, n.val.row(static_cast<int>(i)));
        }
        return used_ - 1;
    }

    int add(int a, int b) {
        require(val(a).same_shape(val(b)),
                "add: shape mismatch " + shape_str(val(a)) + " vs " + shape_str(val(b)));
        Node& n = alloc(Op::kAdd, a, b); // alloc may move nodes_: re-read operands after it
        n.val = val(a);
        n.val.add_inplace(val(b));
        return used_ - 1;
    }

    /// Matrix plus a (1, n) row vector broadcast over rows.
    int add_row(int a, int row) {
        require(val(row).rows == 1 && val(row).cols == val(a).cols, "add_row: bad row shape");
        Node& n = alloc(Op::kAddRow, a, row);
        n.val = val(a);
        const Tensor& tr = val(row);
        for (int r = 0; r < n.val.rows; ++r) {
            double* y = n.val.row(r);
            for (int c = 0; c < n.val.cols; ++c) y[c] += tr.data[static_cast<size_t>(c)];
        }
        return used_ - 1;
    }

    int mul(int a, int b) {
        require(val(a).same_shape(val(b)), "mul: shape mismatch");
        Node& n = alloc(Op::kMul, a, b);
        n.val = val(a);
        const Tensor& tb = val(b);
        for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= tb.data[i];
        return used_ - 1;
    }

    int mul_row(int a, int row) {
        require(val(row).rows == 1 && val(row).cols == val(a).cols, "mul_row: bad row shape");
        Node& n = alloc(Op::kMulRow, a, row);
        n.val = val(a);
        const Tensor& tr = val(row);
        for (int r = 0; r < n.val.rows; ++r) {
            double* y = n.val.row(r);
            for (int c = 0; c < n.val.cols; ++c) y[c] *= tr.data[static_cast<size_t>(c)];
        }
        return used_ - 1;
    }

    int scale(int a, double c) {
        Node& n = alloc(Op::kScale, a);
        n.c0 = c;
        n.val = val(a);
        for (double& v : n.val.data) v *= c;
        return used_ - 1;
    }

    int add_const(int a, double c) {
        Node& n = alloc(Op::kAddConst, a);
        n.c0 = c;
        n.val = val(a);
        for (double& v : n.val.data) v += c;
        return used_ - 1;
    }

    /// C = op(A) * op(B) with optional transposes.
    int matmul(int a, int b, bool ta = false, bool tb = false) {
        const int m = ta ? val(a).cols : val(a).rows;
        const int k = ta ? val(a).rows : val(a).cols;
        const int kb = tb ? val(b).cols : val(b).rows;
        const int nn = tb ? val(b).rows : val(b).cols;
        require(k == kb, "matmul: inner dimension mismatch");
        Node& n = alloc(Op::kMatmul, a, b);
        n.i0 = ta ? 1 : 0;
        n.i1 = tb ? 1 : 0;
        n.val.resize_to(m, nn);
        kernels::matmul_acc(val(a).data.data(), val(b).data.data(), n.val.data.data(), m, k, nn,
                            ta, tb);
        return used_ - 1;
    }

    /// Per-row normalization to zero mean / unit variance (no affine part).
    int layer_norm(int a, double eps = 1e-5) {
        Node& n = alloc(Op::kLayerNorm, a);
        n.c0 = eps;
        const Tensor& ta = val(a);
        n.val.resize_to(ta.rows, ta.cols);
        n.aux.resize_to(ta.rows, 1);
        for (int r = 0; r < ta.rows; ++r) {
            n.aux.at(r, 0) = kernels::layer_norm_row(ta.row(r), n.val.row(r), ta.cols, eps);
        }
        return used_ - 1;
    }

    int gelu(int a) {
        Node& n = alloc(Op::kGelu, a);
        const Tensor& ta = val(a);
        n.val.resize_to(ta.rows, ta.cols);
        for (size_t i = 0; i < ta.data.size(); ++i) n.val.data[i] = kernels::gelu(ta.data[i]);
        return used_ - 1;
    }

    /// Fused multi-head attention. q is (Lq, H); k and v are (Lk, H); mask is
    /// (Lq, Lk) with 1 = attend. Masked keys get exactly zero weight, so a
    /// query row is bit-independent of everything it cannot see.
    int mha(int q, int k, int v, std::vector<uint8_t> mask, int heads) {
        const int lq = val(q).rows, lk = val(k).rows, h = val(q).cols;
        require(val(k).cols == h && val(v).cols == h && val(v).rows == lk, "mha: shape mismatch");
        require(h % heads == 0, "mha: width not divisible by head count");
        require(static_cast<int>(mask.size()) == lq * lk, "mha: mask shape mismatch");
        const int hd = h / heads;
        const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
        Node& n = alloc(Op::kMha, q, k, v);
        const Tensor& Q = val(q);
        const Tensor& K = val(k);
        const Tensor& V = val(v);
        n.i0 = heads;
        n.mask = std::move(mask);
        n.val.resize_to(lq, h);
        n.aux.resize_to(heads * lq, lk); // attention probabilities, saved for backward/viz
        std::vector<double> srow(static_cast<size_t>(lk));
        for (int hd_i = 0; hd_i < heads; ++hd_i) {
            const int off = hd_i * hd;
            for (int i = 0; i < lq; ++i) {
                const double* qi = Q.row(i) + off;
                for (int j = 0; j < lk; ++j) {
                    srow[static_cast<size_t>(j)] = kernels::dot(qi, K.row(j) + off, hd) * sc;
                }
                double* prow = n.aux.row(hd_i * lq + i);
                kernels::softmax_masked_row(srow.data(), n.mask.data() + static_cast<size_t>(i) * lk,
                                            prow, lk);
                double* oi = n.val.row(i) + off;
                for (int j = 0; j < lk; ++j) {
                    const double p = prow[j];
                    if (p == 0.0) continue;
                    const double* vj = V.row(j) + off;
                    for (int d = 0; d < hd; ++d) oi[d] += p * vj[d];
                }
            }
        }
        return used_ - 1;
    }

    int concat_rows(int a, int b) {
        require(val(a).cols == val(b).cols, "concat_rows: column mismatch");
        Node& n = alloc(Op::kConcatRows, a, b);
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        n.i0 = ta.rows;
        n.val.resize_to(ta.rows + tb.rows, ta.cols);
        std::copy(ta.data.begin(), ta.data.end(), n.val.data.begin());
        std::copy(tb.data.begin(), tb.data.end(), n.val.data.begin() + ta.data.size());
        return used_ - 1;
    }

    /// Row gather from another node: out[i] = a[rows[i]].
    int permute_rows(int a, std::vector<int32_t> rows) {
        for (int32_t r : rows) {
            require(r >= 0 && r < val(a).rows, "permute_rows: index out of range");
        }
        Node& n = alloc(Op::kPermuteRows, a);
        const Tensor& ta = val(a);
        n.idx = std::move(rows);
        n.val.resize_to(static_cast<int>(n.idx.size()), ta.cols);
        for (size_t i = 0; i < n.idx.size(); ++i) {
            std::copy(ta.row(n.idx[i]), ta.row(n.idx[i]) + ta.cols,
                      n.val.row(static_cast<int>(i)));
        }
        return used_ - 1;
    }

    int slice_rows(int a, int start, int len) {
        require(start >= 0 && len >= 0 && start + len <= val(a).rows, "slice_rows: out of range");
        Node& n = alloc(Op::kSliceRows, a);
        const Tensor& ta = val(a);
        n.i0 = start;
        n.i1 = len;
        n.val.resize_to(len, ta.cols);
        std::copy(ta.row(start), ta.row(start) + static_cast<size_t>(len) * ta.cols,
                  n.val.data.begin());
        return used_ - 1;
    }

    /// Per-row cross-entropy -log softmax(logits)[target]; returns (M, 1).
    int ce_logits(int logits, std::vector<int32_t> targets) {
        require(static_cast<int>(targets.size()) == val(logits).rows,
                "ce_logits: target count mismatch");
        Node& n = alloc(Op::kCeLogits, logits);
        const Tensor& L = val(logits);
        n.idx = std::move(targets);
        n.aux.resize_to(L.rows, L.cols);
        n.val.resize_to(L.rows, 1);
        for (int r = 0; r < L.rows; ++r) {
            const int t = n.idx[static_cast<size_t>(r)];
            require(t >= 0 && t < L.cols, "ce_logits: target id out of vocabulary");
            kernels::softmax_row(L.row(r), n.aux.row(r), L.cols);
            // -log p computed in logsumexp form for stability at sharp logits
            double mx = L.row(r)[0];
            for (int c = 1; c < L.cols; ++c) mx = std::max(mx, L.row(r)[c]);
            double se = 0.0;
            for (int c = 0; c < L.cols; ++c) se += std::exp(L.row(r)[c] - mx);
            n.val.at(r, 0) = mx + std::log(se) - L.row(r)[t];
        }
        return used_ - 1;
    }

    /// Sum of all elements, as a (1, 1) scalar node.
    int sum(int a) {
        Node& n = alloc(Op::kSum, a);
        const Tensor& ta = val(a);
        n.val.resize_to(1, 1);
        double s = 0.0;
        for (double v : ta.data) s += v;
        n.val.data[0] = s;
        return used_ - 1;
    }

    /// Sum of squared differences against a constant target, as (1, 1).
    int sq_err_sum(int a, Tensor target) {
        require(val(a).same_shape(target), "sq_err_sum: shape mismatch");
        Node& n = alloc(Op::kSqErrSum, a);
        const Tensor& ta = val(a);
        n.aux = std::move(target);
        n.val.resize_to(1, 1);
        double s = 0.0;
        for (size_t i = 0; i < ta.data.size(); ++i) {
            const double d = ta.data[i] - n.aux.data[i];
            s += d * d;
        }
        n.val.data[0] = s;
        return used_ - 1;
    }

    // ---- access ----

    const Tensor& val(int id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        if (n.op == Op::kParamRef) return store_->value(n.pid);
        return n.val;
    }

    /// Gradient of the last backward() target w.r.t. this node (empty if unused).
    const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

    /// Saved attention probabilities of an mha node: (heads * Lq, Lk).
    const Tensor& attention_probs(int mha_id) const {
        const Node& n = nodes_[static_cast<size_t>(mha_id)];
        require(n.op == Op::kMha, "attention_probs: not an attention node");
        return n.aux;
    }

    /// Parameter gradient accumulated by backward() on this tape.
    const Tensor& param_grad(ParamId pid) const { return pgrads_[static_cast<size_t>(pid)]; }
    bool param_touched(ParamId pid) const { return ptouched_[static_cast<size_t>(pid)] != 0; }

    /// Adds this tape's parameter gradients into `sink` (index-aligned with the
    /// store); the caller controls summation order across tapes.
    void drain_param_grads_into(std::vector<Tensor>& sink) const {
        for (int pid : touched_list_) {
            Tensor& dst = sink[static_cast<size_t>(pid)];
            const Tensor& src = pgrads_[static_cast<size_t>(pid)];
            if (dst.empty()) {
                dst = src;
            } else {
                dst.add_inplace(src);
            }
        }
    }

    std::vector<int> touched_params_sorted() const {
        std::vector<int> t = touched_list_;
        std::sort(t.begin(), t.end());
        return t;
    }

    // ---- reverse pass ----

    void backward(int target) {
        Tensor& g0 = grad_slot(target);
        for (double& v : g0.data) v = 1.0;
        for (int id = used_ - 1; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.grad.empty()) continue;
            backward_node(n);
        }
    }

private:
    enum class Op : uint8_t {
        kLeaf,
        kParamRef,
        kGather,
        kAdd,
        kAddRow,
        kMul,
        kMulRow,
        kScale,
        kAddConst,
        kMatmul,
        kLayerNorm,
        kGelu,
        kMha,
        kConcatRows,
        kPermuteRows,
        kSliceRows,
        kCeLogits,
        kSum,
        kSqErrSum,
    };

    struct Node {
        Op op = Op::kLeaf;
        int32_t a = -1;
        int32_t b = -1;
        int32_t c = -1;
        ParamId pid = -1;
        int32_t i0 = 0;
        int32_t i1 = 0;
        double c0 = 0.0;
        Tensor val;
        Tensor grad;
        Tensor aux;
        std::vector<int32_t> idx;
        std::vector<uint8_t> mask;
    };

    static void require(bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    }

    Node& alloc(Op op, int a = -1, int b = -1, int c = -1) {
        if (static_cast<size_t>(used_) == nodes_.size()) {
            nodes_.emplace_back();
        }
        Node& n = nodes_[static_cast<size_t>(used_)];
        ++used_;
        n.op = op;
        n.a = a;
        n.b = b;
        n.c = c;
        n.pid = -1;
        n.i0 = n.i1 = 0;
        n.c0 = 0.0;
        n.grad.rows = n.grad.cols = 0;
        n.grad.data.clear();
        n.idx.clear();
        n.mask.clear();
        return n;
    }

    /// Gradient buffer of a node, allocated (zeroed) on first touch. For
    /// param_ref nodes this is the tape-local parameter gradient.
    Tensor& grad_slot(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.op == Op::kParamRef) return param_grad_slot(n.pid);
        if (n.grad.empty()) {
            const Tensor& v = val(id);
            n.grad.resize_to(v.rows, v.cols);
        }
        return n.grad;
    }

    Tensor& param_grad_slot(ParamId pid) {
        Tensor& g = pgrads_[static_cast<size_t>(pid)];
        if (!ptouched_[static_cast<size_t>(pid)]) {
            const Tensor& v = store_->value(pid);
            if (g.empty()) {
                g.resize_to(v.rows, v.cols);
            }
            ptouched_[static_cast<size_t>(pid)] = 1;
            touched_list_.push_back(pid);
        }
        return g;
    }

    void backward_node(Node& n) {
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::kLeaf:
            case Op::kParamRef:
                break;
            case Op::kGather: {
                Tensor& pg = param_grad_slot(n.pid);
                for (size_t i = 0; i < n.idx.size(); ++i) {
                    double* dst = pg.row(n.idx[i]);
                    const double* src = g.row(static_cast<int>(i));
                    for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
                }
                break;
            }
            case Op::kAdd: {
                grad_slot(n.a).add_inplace(g);
                grad_slot(n.b).add_inplace(g);
                break;
            }
            case Op::kAddRow: {
                grad_slot(n.a).add_inplace(g);
                Tensor& gr = grad_slot(n.b);
                for (int r = 0; r < g.rows; ++r) {
                    const double* grow = g.row(r);
                    for (int c = 0; c < g.cols; ++c) gr.data[static_cast<size_t>(c)] += grow[c];
                }
                break;
            }
            case Op::kMul: {
                const Tensor& av = val(n.a);
                const Tensor& bv = val(n.b);
                Tensor& ga = grad_slot(n.a);
                Tensor& gb = grad_slot(n.b);
                for (size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] * bv.data[i];
                    gb.data[i] += g.data[i] * av.data[i];
                }
                break;
            }
            case Op::kMulRow: {
                const Tensor& av = val(n.a);
                const Tensor& rv = val(n.b);
                Tensor& ga = grad_slot(n.a);
                Tensor& gr = grad_slot(n.b);
                for (int r = 0; r < g.rows; ++r) {
                    const double* grow = g.row(r);
                    const double* arow = av.row(r);
                    double* garow = ga.row(r);
                    for (int c = 0; c < g.cols; ++c) {
                        garow[c] += grow[c] * rv.data[static_cast<size_t>(c)];
                        gr.data[static_cast<size_t>(c)] += grow[c] * arow[c];
                    }
                }
                break;
            }
            case Op::kScale: {
                Tensor& ga = grad_slot(n.a);
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += n.c0 * g.data[i];
                break;
            }
            case Op::kAddConst: {
                grad_slot(n.a).add_inplace(g);
                break;
            }
            case Op::kMatmul: {
                const bool ta = n.i0 != 0, tb = n.i1 != 0;
                const Tensor& A = val(n.a);
                const Tensor& B = val(n.b);
                const int m = g.rows, nn = g.cols;
                Tensor& ga = grad_slot(n.a);
                Tensor& gb = grad_slot(n.b);
                if (!ta && !tb) {
                    kernels::matmul_acc(g.data.data(), B.data.data(), ga.data.data(), m, nn, A.cols, false, true);
                    kernels::matmul_acc(A.data.data(), g.data.data(), gb.data.data(), A.cols, m, nn, true, false);
                } else if (!ta && tb) {
                    kernels::matmul_acc(g.data.data(), B.data.data(), ga.data.data(), m, nn, A.cols, false, false);
                    kernels::matmul_acc(g.data.data(), A.data.data(), gb.data.data(), nn, m, A.cols, true, false);
                } else if (ta && !tb) {
                    kernels::matmul_acc(B.data.data(), g.data.data(), ga.data.data(), A.rows, nn, m, false, true);
                    kernels::matmul_acc(A.data.data(), g.data.data(), gb.data.data(), A.rows, m, nn, false, false);
                } else {
                    kernels::matmul_acc(B.data.data(), g.data.data(), ga.data.data(), A.rows, nn, m, true, true);
                    kernels::matmul_acc(g.data.data(), A.data.data(), gb.data.data(), B.rows, m, A.rows, true, true);
                }
                break;
            }
            case Op::kLayerNorm: {
                const Tensor& y = n.val;
                Tensor& ga = grad_slot(n.a);
                const int cols = y.cols;
                for (int r = 0; r < y.rows; ++r) {
                    const double inv_std = n.aux.at(r, 0);
                    const double* gr = g.row(r);
                    const double* yr = y.row(r);
                    double mean_g = 0.0, mean_gy = 0.0;
                    for (int c = 0; c < cols; ++c) {
                        mean_g += gr[c];
                        mean_gy += gr[c] * yr[c];
                    }
                    mean_g /= cols;
                    mean_gy /= cols;
                    double* gar = ga.row(r);
                    for (int c = 0; c < cols; ++c) {
                        gar[c] += inv_std * (gr[c] - mean_g - yr[c] * mean_gy);
                    }
                }
                break;
            }
            case Op::kGelu: {
                const Tensor& x = val(n.a);
                Tensor& ga = grad_slot(n.a);
                for (size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] * kernels::gelu_grad(x.data[i]);
                }
                break;
            }
            case Op::kMha:
                backward_mha(n);
                break;
            case Op::kConcatRows: {
                Tensor& ga = grad_slot(n.a);
                Tensor& gb = grad_slot(n.b);
                const size_t asz = ga.data.size();
                for (size_t i = 0; i < asz; ++i) ga.data[i] += g.data[i];
                for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[asz + i];
                break;
            }
            case Op::kPermuteRows: {
                Tensor& ga = grad_slot(n.a);
                for (size_t i = 0; i < n.idx.size(); ++i) {
                    double* dst = ga.row(n.idx[i]);
                    const double* src = g.row(static_cast<int>(i));
                    for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
                }
                break;
            }
            case Op::kSliceRows: {
                Tensor& ga = grad_slot(n.a);
                for (int r = 0; r < g.rows; ++r) {
                    double* dst = ga.row(n.i0 + r);
                    const double* src = g.row(r);
                    for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
                }
                break;
            }
            case Op::kCeLogits: {
                Tensor& ga = grad_slot(n.a);
                for (int r = 0; r < n.aux.rows; ++r) {
                    const double gr = g.at(r, 0);
                    if (gr == 0.0) continue;
                    const double* p = n.aux.row(r);
                    double* gar = ga.row(r);
                    for (int c = 0; c < n.aux.cols; ++c) gar[c] += gr * p[c];
                    gar[n.idx[static_cast<size_t>(r)]] -= gr;
                }
                break;
            }
            case Op::kSum: {
                Tensor& ga = grad_slot(n.a);
                const double gv = g.data[0];
                for (double& v : ga.data) v += gv;
                break;
            }
            case Op::kSqErrSum: {
                const Tensor& x = val(n.a);
                Tensor& ga = grad_slot(n.a);
                const double gv = g.data[0];
                for (size_t i = 0; i < x.data.size(); ++i) {
                    ga.data[i] += gv * 2.0 * (x.data[i] - n.aux.data[i]);
                }
                break;
            }
        }
    }

    void backward_mha(Node& n) {
        const Tensor& g = n.grad;
        const Tensor& Q = val(n.a);
        const Tensor& K = val(n.b);
        const Tensor& V = val(n.c);
        Tensor& gq = grad_slot(n.a);
        Tensor& gk = grad_slot(n.b);
        Tensor& gv = grad_slot(n.c);
        const int heads = n.i0;
        const int lq = Q.rows, lk = K.rows, h = Q.cols;
        const int hd = h / heads;
        const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
        std::vector<double> dp(static_cast<size_t>(lk));
        std::vector<double> ds(static_cast<size_t>(lk));
        for (int hd_i = 0; hd_i < heads; ++hd_i) {
            const int off = hd_i * hd;
            for (int i = 0; i < lq; ++i) {
                const double* gi = g.row(i) + off;
                const double* p = n.aux.row(hd_i * lq + i);
                double pdot = 0.0;
                for (int j = 0; j < lk; ++j) {
                    if (p[j] == 0.0) {
                        dp[static_cast<size_t>(j)] = 0.0;
                        continue;
                    }
                    const double acc = kernels::dot(gi, V.row(j) + off, hd);
                    dp[static_cast<size_t>(j)] = acc;
                    pdot += acc * p[j];
                }
                const double* qi = Q.row(i) + off;
                double* gqi = gq.row(i) + off;
                for (int j = 0; j < lk; ++j) {
                    const double pj = p[j];
                    if (pj == 0.0) continue;
                    const double dsj = pj * (dp[static_cast<size_t>(j)] - pdot);
                    ds[static_cast<size_t>(j)] = dsj;
                    const double* kj = K.row(j) + off;
                    double* gkj = gk.row(j) + off;
                    double* gvj = gv.row(j) + off;
                    for (int d = 0; d < hd; ++d) {
                        gqi[d] += sc * dsj * kj[d];
                        gkj[d] += sc * dsj * qi[d];
                        gvj[d] += pj * gi[d];
                    }
                }
            }
        }
    }

    const ParamStore* store_;
    std::vector<Node> nodes_;
    int used_ = 0;
    std::vector<Tensor> pgrads_;
    std::vector<uint8_t> ptouched_;
    std::vector<int> touched_list_;
};

} // namespace gridlm
