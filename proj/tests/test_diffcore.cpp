// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "meshmask/adam.hpp"
#include "meshmask/checkpoint.hpp"
#include "meshmask/tensor.hpp"

using namespace meshmask;
using ad::Tensor;

TEST_CASE("matmul identity and selector rows") {
    auto eye = Tensor<double>::constant({2, 2}, {1, 0, 0, 1});
    auto m = Tensor<double>::constant({2, 2}, {1, 2, 3, 4});
    auto r = ad::matmul(eye, m);
    CHECK(r.values() == std::vector<double>{1, 2, 3, 4});

    auto sel = Tensor<double>::constant({2, 2}, {1, 0, 0, 0});
    auto b = Tensor<double>::constant({2, 2}, {5, 6, 7, 8});
    auto r2 = ad::matmul(sel, b);
    CHECK(r2.values() == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("matmul rejects shape mismatch") {
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({2, 3});
    CHECK_THROWS_AS(ad::matmul(a, b), Error);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(7);
    const auto a0 = testutil::random_vector(12, rng);
    const auto b0 = testutil::random_vector(8, rng);
    const auto wv = testutil::random_vector(6, rng);

    auto a = Tensor<double>::leaf({3, 4}, a0, true);
    auto b = Tensor<double>::leaf({4, 2}, b0, true);
    auto w = Tensor<double>::constant({3, 2}, wv);
    auto loss = ad::sum(ad::mul(ad::matmul(a, b), w));
    loss.backward();

    auto f_a = [&](const std::vector<double>& av) {
        auto aa = Tensor<double>::constant({3, 4}, av);
        auto bb = Tensor<double>::constant({4, 2}, b0);
        auto ww = Tensor<double>::constant({3, 2}, wv);
        return ad::sum(ad::mul(ad::matmul(aa, bb), ww)).values()[0];
    };
    auto f_b = [&](const std::vector<double>& bv) {
        auto aa = Tensor<double>::constant({3, 4}, a0);
        auto bb = Tensor<double>::constant({4, 2}, bv);
        auto ww = Tensor<double>::constant({3, 2}, wv);
        return ad::sum(ad::mul(ad::matmul(aa, bb), ww)).values()[0];
    };
    CHECK(testutil::fd_max_rel_error(f_a, a0, a.grad()) < 1e-5);
    CHECK(testutil::fd_max_rel_error(f_b, b0, b.grad()) < 1e-5);
}

TEST_CASE("scatter_add hand examples") {
    auto msgs = Tensor<double>::constant({3, 1}, {1, 2, 3});
    auto out = ad::scatter_add(msgs, {0, 0, 1}, 3);
    CHECK(out.values() == std::vector<double>{3, 3, 0});

    auto empty = Tensor<double>::constant({0, 2}, {});
    auto z = ad::scatter_add(empty, {}, 2);
    CHECK(z.values() == std::vector<double>{0, 0, 0, 0});

    CHECK_THROWS_AS(ad::scatter_add(msgs, {0, 0, 5}, 3), Error);
}

TEST_CASE("scatter_add equals per-node loop on random graphs") {
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const int e = 50, n = 12, p = 3;
        std::vector<int32_t> targets(e);
        for (auto& t : targets) t = int32_t(rng.uniform_index(n));
        const auto mv = testutil::random_vector(size_t(e * p), rng);
        auto msgs = Tensor<double>::constant({e, p}, mv);
        auto out = ad::scatter_add(msgs, targets, n);
        // naive per-node loop oracle
        std::vector<double> expect(size_t(n * p), 0.0);
        for (int node = 0; node < n; ++node)
            for (int k = 0; k < e; ++k)
                if (targets[size_t(k)] == node)
                    for (int j = 0; j < p; ++j)
                        expect[size_t(node * p + j)] += mv[size_t(k * p + j)];
        CHECK(out.values() == expect);
    }
}

TEST_CASE("scatter_add then gather on disjoint indices is identity") {
    Rng rng(3);
    const auto mv = testutil::random_vector(4 * 3, rng);
    auto msgs = Tensor<double>::constant({4, 3}, mv);
    std::vector<int32_t> targets = {2, 0, 5, 3};  // disjoint
    auto out = ad::scatter_add(msgs, targets, 6);
    auto back = ad::gather_rows(out, targets);
    CHECK(back.values() == mv);
}

TEST_CASE("layer_norm examples") {
    auto gain = Tensor<double>::constant({3}, {1, 1, 1});
    auto bias = Tensor<double>::constant({3}, {0, 0, 0});
    auto x = Tensor<double>::constant({1, 3}, {1, 2, 3});
    auto y = ad::layer_norm(x, gain, bias, 0.0);
    CHECK(y.values()[0] == doctest::Approx(-1.224744871).epsilon(1e-9));
    CHECK(y.values()[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.values()[2] == doctest::Approx(1.224744871).epsilon(1e-9));

    auto c = Tensor<double>::constant({1, 3}, {5, 5, 5});
    auto yc = ad::layer_norm(c, gain, bias, 1e-8);
    for (double v : yc.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("layer_norm gradient vs finite differences") {
    Rng rng(13);
    const int n = 4, p = 8;
    const auto x0 = testutil::random_vector(size_t(n * p), rng);
    const auto g0 = testutil::random_vector(p, rng, 0.5, 1.5);
    const auto b0 = testutil::random_vector(p, rng);
    const auto w0 = testutil::random_vector(size_t(n * p), rng);

    auto x = Tensor<double>::leaf({n, p}, x0, true);
    auto g = Tensor<double>::leaf({p}, g0, true);
    auto b = Tensor<double>::leaf({p}, b0, true);
    auto w = Tensor<double>::constant({n, p}, w0);
    auto loss = ad::sum(ad::mul(ad::layer_norm(x, g, b, 1e-6), w));
    loss.backward();

    auto f = [&](const std::vector<double>& xv) {
        auto xx = Tensor<double>::constant({n, p}, xv);
        auto gg = Tensor<double>::constant({p}, g0);
        auto bb = Tensor<double>::constant({p}, b0);
        auto ww = Tensor<double>::constant({n, p}, w0);
        return ad::sum(ad::mul(ad::layer_norm(xx, gg, bb, 1e-6), ww)).values()[0];
    };
    CHECK(testutil::fd_max_rel_error(f, x0, x.grad()) < 1e-5);
    auto fg = [&](const std::vector<double>& gv) {
        auto xx = Tensor<double>::constant({n, p}, x0);
        auto gg = Tensor<double>::constant({p}, gv);
        auto bb = Tensor<double>::constant({p}, b0);
        auto ww = Tensor<double>::constant({n, p}, w0);
        return ad::sum(ad::mul(ad::layer_norm(xx, gg, bb, 1e-6), ww)).values()[0];
    };
    CHECK(testutil::fd_max_rel_error(fg, g0, g.grad()) < 1e-5);
}

TEST_CASE("activation examples") {
    auto x = Tensor<double>::constant({1, 2}, {-1, 2});
    auto r = ad::relu(x);
    CHECK(r.values() == std::vector<double>{0, 2});

    auto z = Tensor<double>::constant({1, 1}, {0});
    CHECK(ad::gelu(z).values()[0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gelu gradient vs finite differences") {
    Rng rng(17);
    const auto x0 = testutil::random_vector(24, rng, -2.0, 2.0);
    auto x = Tensor<double>::leaf({4, 6}, x0, true);
    auto loss = ad::sum(ad::gelu(x));
    loss.backward();
    auto f = [&](const std::vector<double>& xv) {
        return ad::sum(ad::gelu(Tensor<double>::constant({4, 6}, xv))).values()[0];
    };
    CHECK(testutil::fd_max_rel_error(f, x0, x.grad()) < 1e-4);
}

TEST_CASE("reinsert/gather/concat gradients vs finite differences") {
    Rng rng(23);
    const int nv = 3, p = 4, n = 5;
    const auto e0 = testutil::random_vector(size_t(nv * p), rng);
    const auto t0 = testutil::random_vector(p, rng);
    const std::vector<int32_t> vis = {0, 2, 4};
    const auto w0 = testutil::random_vector(size_t(n * p), rng);

    auto enc = Tensor<double>::leaf({nv, p}, e0, true);
    auto tok = Tensor<double>::leaf({p}, t0, true);
    auto w = Tensor<double>::constant({n, p}, w0);
    auto full = ad::reinsert_rows(enc, tok, vis, n);
    auto loss = ad::sum(ad::mul(ad::gelu(full), w));
    loss.backward();

    auto fe = [&](const std::vector<double>& ev) {
        auto ee = Tensor<double>::constant({nv, p}, ev);
        auto tt = Tensor<double>::constant({p}, t0);
        auto ww = Tensor<double>::constant({n, p}, w0);
        return ad::sum(ad::mul(ad::gelu(ad::reinsert_rows(ee, tt, vis, n)), ww)).values()[0];
    };
    auto ft = [&](const std::vector<double>& tv) {
        auto ee = Tensor<double>::constant({nv, p}, e0);
        auto tt = Tensor<double>::constant({p}, tv);
        auto ww = Tensor<double>::constant({n, p}, w0);
        return ad::sum(ad::mul(ad::gelu(ad::reinsert_rows(ee, tt, vis, n)), ww)).values()[0];
    };
    CHECK(testutil::fd_max_rel_error(fe, e0, enc.grad()) < 1e-5);
    CHECK(testutil::fd_max_rel_error(ft, t0, tok.grad()) < 1e-5);
}

TEST_CASE("backward visits each DAG node exactly once") {
    // diamond: y = relu(x) used by two consumers; counting op at the join
    auto x = Tensor<double>::leaf({2, 2}, {0.5, -1.0, 2.0, 3.0}, true);
    auto h = ad::relu(x);
    auto a = ad::scale(h, 2.0);
    auto b = ad::scale(h, 3.0);
    auto sum_ab = ad::add(a, b);
    int backward_calls = 0;
    auto counted = Tensor<double>::make_op(
        sum_ab.shape(), sum_ab.values(), {sum_ab},
        [sum_ab, &backward_calls](Tensor<double>::Node& self) mutable {
            ++backward_calls;
            auto& g = sum_ab.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        });
    auto loss = ad::sum(counted);
    loss.backward();
    CHECK(backward_calls == 1);
    // d loss / dx = 5 where x > 0
    CHECK(x.grad() == std::vector<double>{5, 0, 5, 5});
}

TEST_CASE("gradient accumulation is additive and zeroed explicitly") {
    auto x = Tensor<double>::leaf({1, 2}, {1.0, 2.0}, true);
    auto l1 = ad::sum(ad::scale(x, 2.0));
    l1.backward();
    auto l2 = ad::sum(ad::scale(x, 3.0));
    l2.backward();
    CHECK(x.grad() == std::vector<double>{5, 5});
    x.zero_grad();
    CHECK(x.grad() == std::vector<double>{0, 0});
}

TEST_CASE("non-finite values are detected") {
    auto x = Tensor<double>::constant({1, 2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(x.check_finite("x"), Error);
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
    std::vector<float> params = {1.5f, -0.5f};
    std::vector<float> grads = {0.0f, 0.0f};
    ad::AdamState<float> st;
    ad::adam_step(params, grads, st, 0.1f);
    CHECK(params[0] == doctest::Approx(1.5f));
    CHECK(params[1] == doctest::Approx(-0.5f));
    CHECK(st.step_count == 1);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
    std::vector<double> params = {1.0};
    std::vector<double> grads = {1.0};
    ad::AdamState<double> st;
    ad::adam_step(params, grads, st, 0.1);
    CHECK(params[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: independent scalars update independently") {
    std::vector<double> params = {1.0, 1.0};
    std::vector<double> grads = {1.0, 0.0};
    ad::AdamState<double> st;
    ad::adam_step(params, grads, st, 0.1);
    CHECK(params[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(params[1] == doctest::Approx(1.0));
}

TEST_CASE("adam: NaN gradient aborts with diagnostic") {
    std::vector<double> params = {1.0};
    std::vector<double> grads = {std::nan("")};
    ad::AdamState<double> st;
    CHECK_THROWS_WITH_AS(ad::adam_step(params, grads, st, 0.1, "w"),
                         doctest::Contains("non-finite gradient"), Error);
}

TEST_CASE("checkpoint container round-trips and rejects corruption") {
    namespace fs = std::filesystem;
    const std::string dir = fs::temp_directory_path() / "mm_ckpt_test";
    fs::create_directories(dir);
    const std::string path = dir + "/test.mmck";

    std::vector<float> w = {1.0f, 2.5f, -3.25f, 0.125f};
    std::vector<double> stats = {0.5, 1.5};
    io::CheckpointWriter writer;
    writer.add_f32("layer.w", {2, 2}, w.data(), w.size());
    writer.add_f64("norm.mean", {2}, stats.data(), stats.size());
    writer.extra()["step"] = 42;
    writer.write(path);

    io::CheckpointReader reader(path);
    CHECK(reader.read_f32("layer.w") == w);
    CHECK(reader.read_f64("norm.mean") == stats);
    CHECK(reader.extra().at("step").get<int>() == 42);
    CHECK(reader.entry("layer.w").shape == std::vector<int64_t>{2, 2});

    // truncated payload
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(dir + "/trunc.mmck", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size() - 8));
    }
    CHECK_THROWS_WITH_AS(io::CheckpointReader(dir + "/trunc.mmck"),
                         doctest::Contains("truncated"), Error);

    // bad magic
    {
        std::ofstream out(dir + "/bad.mmck", std::ios::binary | std::ios::trunc);
        out << "NOPEnope";
    }
    CHECK_THROWS_AS(io::CheckpointReader(dir + "/bad.mmck"), Error);
}

TEST_CASE("leaf views share values but keep private gradients") {
    auto x = Tensor<float>::leaf({2}, {1.0f, 2.0f}, true);
    auto v = x.leaf_view();
    v.values()[0] = 5.0f;
    CHECK(x.values()[0] == 5.0f);  // shared storage
    auto loss = ad::sum(ad::scale(v, 2.0f));
    loss.backward();
    CHECK(v.grad() == std::vector<float>{2, 2});
    CHECK(x.grad() == std::vector<float>{0, 0});  // private gradient buffer
}
