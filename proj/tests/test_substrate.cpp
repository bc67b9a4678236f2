#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gridlm/gradcheck.hpp"
#include "gridlm/nn.hpp"
#include "gridlm/optimizer.hpp"
#include "gridlm/rng.hpp"
#include "gridlm/tape.hpp"

using namespace gridlm;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
    Tensor t(r, c);
    for (double& v : t.data) v = scale * rng.gaussian();
    return t;
}

} // namespace

TEST_CASE("rng determinism and split independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng root(7);
    Rng s1 = root.split(1);
    Rng s2 = root.split(2);
    CHECK(s1.next_u64() != s2.next_u64());

    // state round trip
    Rng c(3);
    c.next_u64();
    c.next_u64();
    Rng d = Rng::from_state(c.key(), c.counter());
    CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("rng below is unbiased enough and in range") {
    Rng rng(11);
    std::vector<int> counts(5, 0);
    const int n = 50000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(rng.below(5))];
    for (int c : counts) {
        CHECK(c > n / 5 - 600);
        CHECK(c < n / 5 + 600);
    }
}

TEST_CASE("attention: single key returns the value") {
    Tensor q(1, 4), k(1, 4), v(1, 4);
    for (int i = 0; i < 4; ++i) {
        q.data[static_cast<size_t>(i)] = 0.3 * i;
        k.data[static_cast<size_t>(i)] = 0.3 * i;
        v.data[static_cast<size_t>(i)] = 1.0 + i;
    }
    const Tensor out = attention_forward(q, k, v, full_mask(1, 1), 2);
    for (int i = 0; i < 4; ++i) CHECK(out.data[static_cast<size_t>(i)] == doctest::Approx(v.data[static_cast<size_t>(i)]));
}

TEST_CASE("attention: zero logits average the values") {
    Tensor q(1, 2, 0.0);
    Tensor k(2, 2);
    k.at(0, 0) = 1.0;
    k.at(1, 1) = 1.0;
    Tensor v(2, 2);
    v.at(0, 0) = 2.0;
    v.at(0, 1) = 4.0;
    v.at(1, 0) = 6.0;
    v.at(1, 1) = 8.0;
    const Tensor out = attention_forward(q, k, v, full_mask(1, 2), 1);
    CHECK(out.at(0, 0) == doctest::Approx(4.0));
    CHECK(out.at(0, 1) == doctest::Approx(6.0));
}

TEST_CASE("attention: causal row 0 is bitwise invariant to later tokens") {
    Rng rng(5);
    Tensor q = random_tensor(4, 8, rng);
    Tensor k = random_tensor(4, 8, rng);
    Tensor v = random_tensor(4, 8, rng);
    const auto mask = causal_mask(4);
    const Tensor out1 = attention_forward(q, k, v, mask, 2);
    k.at(3, 0) += 100.0;
    v.at(3, 5) -= 42.0;
    const Tensor out2 = attention_forward(q, k, v, mask, 2);
    for (int c = 0; c < 8; ++c) {
        CHECK(out1.at(0, c) == out2.at(0, c)); // exact
        CHECK(out1.at(1, c) == out2.at(1, c));
        CHECK(out1.at(2, c) == out2.at(2, c));
    }
}

TEST_CASE("attention: configuration errors") {
    Tensor q(1, 6), k(1, 6), v(1, 6);
    CHECK_THROWS_AS(attention_forward(q, k, v, full_mask(1, 1), 4), ConfigError);
    std::vector<uint8_t> all_masked(1, 0);
    CHECK_THROWS_AS(attention_forward(q, k, v, all_masked, 2), ConfigError);
}

TEST_CASE("attention weights over unmasked keys sum to 1") {
    Rng rng(9);
    ParamStore store;
    Tape tape(&store);
    const int q = tape.leaf(random_tensor(5, 8, rng));
    const int k = tape.leaf(random_tensor(5, 8, rng));
    const int v = tape.leaf(random_tensor(5, 8, rng));
    const int at = tape.mha(q, k, v, causal_mask(5), 4);
    const Tensor& probs = tape.attention_probs(at);
    for (int r = 0; r < probs.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < probs.cols; ++c) s += probs.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

// Finite-difference oracle over every op used by the model graphs.
TEST_CASE("tape gradients match central finite differences") {
    Rng rng(123);
    ParamStore store;
    const ParamId table = store.add("table", random_tensor(5, 6, rng, 0.5));
    const ParamId w = store.add("w", random_tensor(6, 6, rng, 0.3));
    const ParamId bias = store.add("bias", random_tensor(1, 6, rng, 0.2));
    const ParamId gain = store.add("gain", random_tensor(1, 6, rng, 0.1));

    const Tensor x_in = random_tensor(4, 6, rng, 0.7);
    const Tensor target = random_tensor(4, 6, rng, 0.5);

    auto build = [&](Tape& t) -> int {
        const int x = t.leaf(x_in);
        const int g = t.gather_rows(table, {0, 2, 4, 1});
        const int a = t.add(x, g);
        const int mm = t.matmul(a, t.param_ref(w), false, true);
        const int ab = t.add_row(mm, t.param_ref(bias));
        const int ln = t.layer_norm(ab);
        const int sc = t.mul_row(ln, t.param_ref(gain));
        const int ge = t.gelu(t.add_const(sc, 0.05));
        const int at = t.mha(ge, a, a, causal_mask(4), 2);
        const int cat = t.concat_rows(at, t.slice_rows(a, 1, 2));
        const int sl = t.slice_rows(cat, 0, 4);
        const int mu = t.mul(sl, t.scale(x, 0.5));
        const int ce_in = t.matmul(mu, t.param_ref(w));
        const int ce = t.ce_logits(ce_in, {1, 0, 5, 3});
        const int s1 = t.sum(ce);
        const int s2 = t.sq_err_sum(mu, target);
        return t.add(s1, t.scale(s2, 0.25));
    };

    Tape tape(&store);
    auto loss_and_grad = [&]() {
        tape.reset();
        const int loss = build(tape);
        tape.backward(loss);
        std::vector<Tensor> sink(static_cast<size_t>(store.count()));
        tape.drain_param_grads_into(sink);
        for (ParamId pid = 0; pid < store.count(); ++pid) {
            if (!sink[static_cast<size_t>(pid)].empty()) {
                store.grad(pid).add_inplace(sink[static_cast<size_t>(pid)]);
            }
        }
        return tape.val(loss).data[0];
    };
    Tape scratch(&store);
    auto loss_only = [&]() {
        scratch.reset();
        return scratch.val(build(scratch)).data[0];
    };

    const GradCheckReport rep = grad_check(store, loss_and_grad, loss_only, 1e-4);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("adamw: zero gradient with zero weight decay leaves parameters unchanged") {
    ParamStore store;
    Tensor t(2, 2);
    t.at(0, 0) = 1.5;
    t.at(1, 1) = -0.5;
    store.add("p", t);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step(store); // grads are zero
    CHECK(store.value(0).at(0, 0) == 1.5);
    CHECK(store.value(0).at(1, 1) == -0.5);
}

TEST_CASE("adamw: hand-computed first step") {
    // p=1, g=1, lr=0.1, beta1=0.9, beta2=0.95, wd=0, eps=0 -> p' = 0.9
    ParamStore store;
    store.add("p", Tensor(1, 1, 1.0));
    store.grad(0).data[0] = 1.0;
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.95;
    cfg.eps = 0.0;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step(store);
    CHECK(store.value(0).data[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw: identical parameters with identical gradients get identical updates") {
    ParamStore store;
    store.add("a", Tensor(1, 3, 0.7));
    store.add("b", Tensor(1, 3, 0.7));
    for (int i = 0; i < 3; ++i) {
        store.grad(0).data[static_cast<size_t>(i)] = 0.33;
        store.grad(1).data[static_cast<size_t>(i)] = 0.33;
    }
    AdamW opt(AdamWConfig{});
    opt.step(store);
    CHECK(store.value(0).data == store.value(1).data);
}

TEST_CASE("adamw: decoupled weight decay shrinks weights without gradients") {
    ParamStore store;
    store.add("p", Tensor(1, 1, 2.0));
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    AdamW opt(cfg);
    opt.step(store);
    CHECK(store.value(0).data[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("grad_check: linear regression reaches fd accuracy") {
    // loss = sum_i (w*x_i + b - y_i)^2 over 3 points
    ParamStore store;
    store.add("w", Tensor(1, 1, 0.4));
    store.add("b", Tensor(1, 1, -0.2));
    const double xs[3] = {0.5, -1.0, 2.0};
    const double ys[3] = {1.0, 0.0, -1.5};

    auto eval = [&](bool with_grad) {
        const double w = store.value(0).data[0];
        const double b = store.value(1).data[0];
        double loss = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double r = w * xs[i] + b - ys[i];
            loss += r * r;
            if (with_grad) {
                store.grad(0).data[0] += 2.0 * r * xs[i];
                store.grad(1).data[0] += 2.0 * r;
            }
        }
        return loss;
    };

    const GradCheckReport rep = grad_check(
        store, [&]() { return eval(true); }, [&]() { return eval(false); }, 1e-3);
    CHECK(rep.max_rel_err < 1e-6);
    CHECK(rep.per_tensor.size() == 2);
}

TEST_CASE("grad_check: frozen parameter reports exactly zero analytic gradient") {
    ParamStore store;
    store.add("used", Tensor(1, 1, 1.0));
    store.add("frozen", Tensor(1, 1, 3.0));
    Tape tape(&store);
    tape.reset();
    const int x = tape.param_ref(0);
    const int loss = tape.sq_err_sum(x, Tensor::scalar(0.5));
    tape.backward(loss);
    CHECK(tape.param_touched(0));
    CHECK_FALSE(tape.param_touched(1));
    CHECK(tape.param_grad(1).empty());
}

TEST_CASE("transformer block: zero input and zero weights give zero finite output") {
    ParamStore store;
    Rng rng(1);
    BlockP block = BlockP::create(store, "blk", 8, 16, 2, false, rng);
    for (ParamId pid = 0; pid < store.count(); ++pid) store.value(pid).fill(0.0);
    Tape tape(&store);
    const int x = tape.leaf(Tensor(3, 8));
    const int y = block.apply(tape, x, causal_mask(3));
    for (double v : tape.val(y).data) {
        CHECK(v == 0.0);
        CHECK(std::isfinite(v));
    }
}

TEST_CASE("transformer block: output shape equals input shape") {
    ParamStore store;
    Rng rng(2);
    BlockP block = BlockP::create(store, "blk", 64, 256, 4, false, rng);
    Tape tape(&store);
    Rng data_rng(3);
    const int x = tape.leaf(random_tensor(7, 64, data_rng));
    const int y = block.apply(tape, x, causal_mask(7));
    CHECK(tape.val(y).rows == 7);
    CHECK(tape.val(y).cols == 64);
}

TEST_CASE("transformer block: rejects non-finite input with the layer name") {
    ParamStore store;
    Rng rng(2);
    BlockP block = BlockP::create(store, "blk3", 8, 16, 2, false, rng);
    Tape tape(&store);
    Tensor bad(2, 8);
    bad.at(1, 3) = std::numeric_limits<double>::quiet_NaN();
    const int x = tape.leaf(bad);
    try {
        block.apply(tape, x, causal_mask(2));
        CHECK(false);
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("blk3") != std::string::npos);
    }
}

TEST_CASE("transformer block: gradient of mean output matches finite differences") {
    ParamStore store;
    Rng rng(4);
    BlockP block = BlockP::create(store, "blk", 8, 16, 2, false, rng);
    Rng data_rng(5);
    const Tensor x_in = random_tensor(3, 8, data_rng, 0.6);

    Tape tape(&store);
    auto run = [&](Tape& t) {
        const int x = t.leaf(x_in);
        const int y = block.apply(t, x, causal_mask(3));
        return t.scale(t.sum(y), 1.0 / 24.0);
    };
    auto loss_and_grad = [&]() {
        tape.reset();
        const int loss = run(tape);
        tape.backward(loss);
        std::vector<Tensor> sink(static_cast<size_t>(store.count()));
        tape.drain_param_grads_into(sink);
        for (ParamId pid = 0; pid < store.count(); ++pid) {
            if (!sink[static_cast<size_t>(pid)].empty()) {
                store.grad(pid).add_inplace(sink[static_cast<size_t>(pid)]);
            }
        }
        return tape.val(loss).data[0];
    };
    Tape scratch(&store);
    auto loss_only = [&]() {
        scratch.reset();
        return scratch.val(run(scratch)).data[0];
    };
    const GradCheckReport rep = grad_check(store, loss_and_grad, loss_only, 1e-3);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("cross-attention block gradients match finite differences") {
    ParamStore store;
    Rng rng(6);
    BlockP block = BlockP::create(store, "xblk", 8, 16, 2, true, rng);
    Rng data_rng(7);
    const Tensor x_in = random_tensor(2, 8, data_rng, 0.5);
    const Tensor kv_in = random_tensor(3, 8, data_rng, 0.5);

    Tape tape(&store);
    auto run = [&](Tape& t) {
        const int x = t.leaf(x_in);
        const int kv = t.leaf(kv_in);
        const int y = block.apply(t, x, full_mask(2, 2), kv);
        return t.sum(y);
    };
    auto loss_and_grad = [&]() {
        tape.reset();
        const int loss = run(tape);
        tape.backward(loss);
        std::vector<Tensor> sink(static_cast<size_t>(store.count()));
        tape.drain_param_grads_into(sink);
        for (ParamId pid = 0; pid < store.count(); ++pid) {
            if (!sink[static_cast<size_t>(pid)].empty()) {
                store.grad(pid).add_inplace(sink[static_cast<size_t>(pid)]);
            }
        }
        return tape.val(loss).data[0];
    };
    Tape scratch(&store);
    auto loss_only = [&]() {
        scratch.reset();
        return scratch.val(run(scratch)).data[0];
    };
    const GradCheckReport rep = grad_check(store, loss_and_grad, loss_only, 1e-3);
    CHECK(rep.max_rel_err < 1e-3);
}
