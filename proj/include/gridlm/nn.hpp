#pragma once

#include <string>
#include <vector>

#include "gridlm/tape.hpp"

namespace gridlm {

/// Builds an (Lq, Lk) attend-everything mask.
inline std::vector<uint8_t> full_mask(int lq, int lk) {
    return std::vector<uint8_t>(static_cast<size_t>(lq) * lk, 1);
}

/// Lower-triangular causal mask (a row attends to itself and earlier rows).
inline std::vector<uint8_t> causal_mask(int len) {
    std::vector<uint8_t> m(static_cast<size_t>(len) * len, 0);
    for (int i = 0; i < len; ++i) {
        for (int j = 0; j <= i; ++j) m[static_cast<size_t>(i) * len + j] = 1;
    }
    return m;
}

/// Standard scaled dot-product multi-head attention on plain tensors.
/// Masked entries contribute exactly zero weight; a fully masked query row is
/// rejected rather than producing NaN.
inline Tensor attention_forward(const Tensor& queries, const Tensor& keys, const Tensor& values,
                                const std::vector<uint8_t>& mask, int head_count) {
    if (queries.cols % head_count != 0) {
        throw ConfigError("attention: width not divisible by head count");
    }
    ParamStore empty;
    Tape tape(&empty);
    const int q = tape.leaf(queries);
    const int k = tape.leaf(keys);
    const int v = tape.leaf(values);
    return tape.val(tape.mha(q, k, v, mask, head_count));
}

struct LinearP {
    ParamId w = -1; // (out, in)
    ParamId b = -1; // (1, out)

    static LinearP create(ParamStore& store, const std::string& name, int out, int in, Rng& rng,
                          double init_std = 0.02) {
        LinearP l;
        Tensor wt(out, in);
        init_normal(wt, rng, init_std);
        l.w = store.add(name + ".w", std::move(wt));
        l.b = store.add(name + ".b", Tensor(1, out));
        return l;
    }

    int apply(Tape& t, int x) const {
        return t.add_row(t.matmul(x, t.param_ref(w), false, true), t.param_ref(b));
    }
};

struct LayerNormP {
    ParamId g = -1;
    ParamId b = -1;

    static LayerNormP create(ParamStore& store, const std::string& name, int dim) {
        LayerNormP ln;
        ln.g = store.add(name + ".g", Tensor(1, dim, 1.0));
        ln.b = store.add(name + ".b", Tensor(1, dim));
        return ln;
    }

    int apply(Tape& t, int x) const {
        return t.add_row(t.mul_row(t.layer_norm(x), t.param_ref(g)), t.param_ref(b));
    }
};

/// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
/// The optional cross-attention sublayer (chunk prediction head) runs before
/// self-attention: x + cross(lnc(x), kv).
struct BlockP {
    std::string name;
    int heads = 0;
    bool has_cross = false;
    LayerNormP lnc;
    LinearP cq, ck, cv, co;
    LayerNormP ln1;
    LinearP wq, wk, wv, wo;
    LayerNormP ln2;
    LinearP fc1, fc2;

    static BlockP create(ParamStore& store, const std::string& name, int hidden, int ffn, int heads,
                         bool with_cross, Rng& rng) {
        BlockP bp;
        bp.name = name;
        bp.heads = heads;
        bp.has_cross = with_cross;
        if (with_cross) {
            bp.lnc = LayerNormP::create(store, name + ".lnc", hidden);
            bp.cq = LinearP::create(store, name + ".cq", hidden, hidden, rng);
            bp.ck = LinearP::create(store, name + ".ck", hidden, hidden, rng);
            bp.cv = LinearP::create(store, name + ".cv", hidden, hidden, rng);
            bp.co = LinearP::create(store, name + ".co", hidden, hidden, rng);
        }
        bp.ln1 = LayerNormP::create(store, name + ".ln1", hidden);
        bp.wq = LinearP::create(store, name + ".wq", hidden, hidden, rng);
        bp.wk = LinearP::create(store, name + ".wk", hidden, hidden, rng);
        bp.wv = LinearP::create(store, name + ".wv", hidden, hidden, rng);
        bp.wo = LinearP::create(store, name + ".wo", hidden, hidden, rng);
        bp.ln2 = LayerNormP::create(store, name + ".ln2", hidden);
        bp.fc1 = LinearP::create(store, name + ".fc1", ffn, hidden, rng);
        bp.fc2 = LinearP::create(store, name + ".fc2", hidden, ffn, rng);
        return bp;
    }

    /// `mask` is the self-attention pattern; `cross_kv` (node id or -1) feeds
    /// the cross sublayer with an all-attend pattern. When `attn_node` is
    /// given it receives the self-attention node id (attention-map export).
    int apply(Tape& t, int x, const std::vector<uint8_t>& mask, int cross_kv = -1,
              int* attn_node = nullptr) const {
        if (!t.val(x).all_finite()) {
            throw NumericError("non-finite input entering block " + name);
        }
        if (has_cross) {
            if (cross_kv < 0) throw ConfigError(name + ": cross-attention block needs context");
            const int xq = lnc.apply(t, x);
            const int q = cq.apply(t, xq);
            const int k = ck.apply(t, cross_kv);
            const int v = cv.apply(t, cross_kv);
            const int at = t.mha(q, k, v, full_mask(t.val(q).rows, t.val(k).rows), heads);
            x = t.add(x, co.apply(t, at));
        }
        const int xn = ln1.apply(t, x);
        const int q = wq.apply(t, xn);
        const int k = wk.apply(t, xn);
        const int v = wv.apply(t, xn);
        const int at = t.mha(q, k, v, mask, heads);
        if (attn_node != nullptr) *attn_node = at;
        x = t.add(x, wo.apply(t, at));
        const int h = fc2.apply(t, t.gelu(fc1.apply(t, ln2.apply(t, x))));
        return t.add(x, h);
    }
};

} // namespace gridlm
