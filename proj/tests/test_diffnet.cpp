#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "driveby/checkpoint.hpp"
#include "driveby/layers.hpp"
#include "driveby/network.hpp"
#include "support/gradcheck.hpp"

using namespace driveby;
using nn::Tensor;
using nn::TensorD;

namespace {

TensorD random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    TensorD t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Fixed random projection turns any output tensor into a scalar loss with a
// known gradient (the projection weights themselves).
struct Projection {
    TensorD w;
    explicit Projection(const std::vector<int>& shape, Rng& rng) : w(random_tensor(shape, rng)) {}
    double apply(const TensorD& x) const {
        double s = 0;
        for (std::size_t i = 0; i < x.numel(); ++i) s += w[i] * x[i];
        return s;
    }
};

} // namespace

TEST_CASE("conv2d forward matches a hand-computed cross-correlation") {
    nn::LayerParams<double> p;
    p.init_shapes({1, 1, 2, 2}, {1});
    p.w.data = {1, 0, 0, 1};  // picks up x[y][x] + x[y+1][x+1]
    p.b.data = {0.5};
    TensorD x({1, 3, 3});
    x.data = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    TensorD col, out;
    nn::conv2d_forward(x, p, col, out);
    REQUIRE(out.shape == std::vector<int>{1, 2, 2});
    REQUIRE(out.data == std::vector<double>{6.5, 8.5, 12.5, 14.5});
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(101);
    nn::LayerParams<double> p;
    p.init_shapes({2, 3, 3, 3}, {2});
    for (auto& v : p.w.data) v = rng.uniform(-0.5, 0.5);
    for (auto& v : p.b.data) v = rng.uniform(-0.5, 0.5);
    TensorD x = random_tensor({3, 6, 7}, rng);
    Projection proj({2, 4, 5}, rng);

    auto loss = [&] {
        TensorD col, out;
        nn::conv2d_forward(x, p, col, out);
        return proj.apply(out);
    };

    TensorD col, out;
    nn::conv2d_forward(x, p, col, out);
    p.zero_grad();
    TensorD gin, gcol;
    nn::conv2d_backward(p, col, proj.w, 6, 7, &gin, gcol);

    REQUIRE(gradcheck::check_tensor(loss, p.w, p.gw) < 1e-6);
    REQUIRE(gradcheck::check_tensor(loss, p.b, p.gb) < 1e-6);
    REQUIRE(gradcheck::check_tensor(loss, x, gin) < 1e-6);
}

TEST_CASE("maxpool2 keeps floor semantics and first-wins tie break") {
    TensorD x({1, 5, 5});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 0.0;
    // window at (0,0) is all sevens: the tie must resolve to the first slot
    x.at(0, 0, 0) = 7;
    x.at(0, 0, 1) = 7;
    x.at(0, 1, 0) = 7;
    x.at(0, 1, 1) = 7;
    x.at(0, 2, 3) = 3;  // row/col 4 must be ignored entirely (floor)
    x.at(0, 4, 4) = 99;
    TensorD out;
    std::vector<std::int32_t> argmax;
    nn::maxpool2_forward(x, out, argmax);
    REQUIRE(out.shape == std::vector<int>{1, 2, 2});
    REQUIRE(out.at(0, 0, 0) == 7);
    REQUIRE(argmax[0] == 0);
    REQUIRE(out.at(0, 1, 1) == 3);

    TensorD g({1, 2, 2});
    g.data = {1, 2, 3, 4};
    TensorD gin;
    nn::maxpool2_backward(g, argmax, x.shape, gin);
    REQUIRE(gin.at(0, 0, 0) == 1);
    REQUIRE(gin.at(0, 0, 1) == 0);
    REQUIRE(gin.at(0, 4, 4) == 0);
}

TEST_CASE("maxpool2 gradient matches finite differences") {
    Rng rng(102);
    TensorD x = random_tensor({2, 6, 6}, rng);
    Projection proj({2, 3, 3}, rng);
    auto loss = [&] {
        TensorD out;
        std::vector<std::int32_t> argmax;
        nn::maxpool2_forward(x, out, argmax);
        return proj.apply(out);
    };
    TensorD out;
    std::vector<std::int32_t> argmax;
    nn::maxpool2_forward(x, out, argmax);
    TensorD gin;
    nn::maxpool2_backward(proj.w, argmax, x.shape, gin);
    REQUIRE(gradcheck::check_tensor(loss, x, gin) < 1e-6);
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(103);
    nn::LayerParams<double> p;
    p.init_shapes({4, 9}, {4});
    for (auto& v : p.w.data) v = rng.uniform(-0.5, 0.5);
    for (auto& v : p.b.data) v = rng.uniform(-0.5, 0.5);
    TensorD x = random_tensor({9}, rng);
    Projection proj({4}, rng);
    auto loss = [&] {
        TensorD out;
        nn::linear_forward(x, p, out);
        return proj.apply(out);
    };
    p.zero_grad();
    TensorD gin;
    nn::linear_backward(p, x, proj.w, &gin);
    REQUIRE(gradcheck::check_tensor(loss, p.w, p.gw) < 1e-6);
    REQUIRE(gradcheck::check_tensor(loss, p.b, p.gb) < 1e-6);
    REQUIRE(gradcheck::check_tensor(loss, x, gin) < 1e-6);
}

TEST_CASE("relu gradient matches finite differences and gates at zero") {
    Rng rng(104);
    TensorD x = random_tensor({40}, rng);
    for (auto& v : x.data)
        if (std::abs(v) < 1e-3) v = 0.1;  // keep FD away from the kink
    Projection proj({40}, rng);
    auto loss = [&] {
        TensorD out;
        nn::relu_forward(x, out);
        return proj.apply(out);
    };
    TensorD gin;
    nn::relu_backward(x, proj.w, gin);
    REQUIRE(gradcheck::check_tensor(loss, x, gin) < 1e-6);

    TensorD zero({1});
    zero[0] = 0.0;
    TensorD g({1});
    g[0] = 5.0;
    TensorD gz;
    nn::relu_backward(zero, g, gz);
    REQUIRE(gz[0] == 0.0);
}

TEST_CASE("softmax cross-entropy agrees with the direct formula and FD") {
    TensorD logits({3});
    logits.data = {0.2, -1.1, 0.7};
    TensorD grad;
    const double loss = nn::softmax_cross_entropy(logits, 2, grad);
    const double z = std::exp(0.2) + std::exp(-1.1) + std::exp(0.7);
    REQUIRE(loss == Catch::Approx(-std::log(std::exp(0.7) / z)).epsilon(1e-12));
    double gsum = 0;
    for (double g : grad.data) gsum += g;
    REQUIRE(gsum == Catch::Approx(0.0).margin(1e-12));

    auto fd_loss = [&] {
        TensorD g2;
        return nn::softmax_cross_entropy(logits, 2, g2);
    };
    REQUIRE(gradcheck::check_tensor(fd_loss, logits, grad) < 1e-8);
}

TEST_CASE("softmax cross-entropy is stable for large logits") {
    TensorD logits({2});
    logits.data = {1000.0, 1000.5};
    TensorD grad;
    const double loss = nn::softmax_cross_entropy(logits, 1, grad);
    REQUIRE(std::isfinite(loss));
    REQUIRE(loss == Catch::Approx(std::log(1 + std::exp(-0.5))).epsilon(1e-9));
    REQUIRE(grad.all_finite());
    REQUIRE_THROWS_AS(nn::softmax_cross_entropy(logits, 2, grad), DataError);
}

TEST_CASE("gradient reversal is identity forward, negated scaled backward") {
    Rng rng(105);
    TensorD x = random_tensor({17}, rng);
    TensorD y;
    nn::grl_forward(x, y);
    REQUIRE(y.data == x.data);
    TensorD g = random_tensor({17}, rng), gin;
    nn::grl_backward(g, 0.37, gin);
    for (std::size_t i = 0; i < g.numel(); ++i) REQUIRE(gin[i] == -0.37 * g[i]);
    nn::grl_backward(g, 0.0, gin);
    for (std::size_t i = 0; i < g.numel(); ++i) REQUIRE(gin[i] == 0.0);
}

TEST_CASE("sgd with momentum follows the hand-traced update") {
    nn::LayerParams<double> p;
    p.init_shapes({1, 1}, {1});
    p.w[0] = 1.0;
    p.b[0] = 2.0;
    p.gw[0] = 0.5;
    p.gb[0] = 0.0;
    nn::sgd_step(p, 0.1, 0.9);
    REQUIRE(p.w[0] == Catch::Approx(0.95));
    REQUIRE(p.vw[0] == Catch::Approx(0.5));
    REQUIRE(p.gw[0] == 0.0);
    p.gw[0] = 0.5;
    nn::sgd_step(p, 0.1, 0.9);
    REQUIRE(p.w[0] == Catch::Approx(0.95 - 0.1 * (0.9 * 0.5 + 0.5)));
    REQUIRE(p.b[0] == 2.0);
}

TEST_CASE("kaiming init is seeded and bounded") {
    nn::LayerParams<float> a, b;
    a.init_shapes({8, 3, 5, 5}, {8});
    b.init_shapes({8, 3, 5, 5}, {8});
    Rng r1(7), r2(7);
    nn::kaiming_init(a, 75, r1);
    nn::kaiming_init(b, 75, r2);
    REQUIRE(a.w.data == b.w.data);
    const float bound = std::sqrt(6.0f / 75.0f);
    float mx = 0;
    for (float v : a.w.data) {
        REQUIRE(std::abs(v) <= bound);
        mx = std::max(mx, std::abs(v));
    }
    REQUIRE(mx > 0.5f * bound);
    for (float v : a.b.data) REQUIRE(v == 0.0f);
}

// ---------------------------------------------------------------------------
// Architecture trace
// ---------------------------------------------------------------------------

TEST_CASE("diagnosis network reproduces the published layer trace") {
    nn::ModelF m;
    m.init(nn::paper_arch(false), "shared_tail", 1);
    // 4x64x64 -> conv5 -> 64x60x60 -> pool -> 64x30x30 -> conv5 -> 50x26x26
    // -> pool -> 50x13x13 -> conv3 -> 50x11x11 -> pool -> 50x5x5
    REQUIRE(m.trunk.layers[0].w.shape == std::vector<int>{64, 4, 5, 5});
    REQUIRE(m.trunk.layers[1].w.shape == std::vector<int>{50, 64, 5, 5});
    REQUIRE(m.trunk.layers[2].w.shape == std::vector<int>{50, 50, 3, 3});
    REQUIRE(m.trunk.out_ch == 50);
    REQUIRE(m.trunk.out_h == 5);
    REQUIRE(m.trunk.out_w == 5);
    REQUIRE(m.loc.flat_dim == 1250);
    REQUIRE(m.loc.fc1.w.shape == std::vector<int>{100, 1250});
    REQUIRE(m.loc.fc2.w.shape == std::vector<int>{4, 100});
    REQUIRE(m.sev.fc2.w.shape == std::vector<int>{4, 100});
    REQUIRE(m.dom.fc2.w.shape == std::vector<int>{2, 100});

    nn::TensorF x({4, 64, 64});
    Rng rng(2);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
    nn::ModelWork<float> wk;
    const auto& feat = m.forward_features(x, wk);
    REQUIRE(feat.shape == std::vector<int>{50, 5, 5});
    // intermediate stage outputs
    REQUIRE(wk.trunk[0].pre.shape == std::vector<int>{64, 60, 60});
    REQUIRE(wk.trunk[0].out.shape == std::vector<int>{64, 30, 30});
    REQUIRE(wk.trunk[1].pre.shape == std::vector<int>{50, 26, 26});
    REQUIRE(wk.trunk[1].out.shape == std::vector<int>{50, 13, 13});
    REQUIRE(wk.trunk[2].pre.shape == std::vector<int>{50, 11, 11});
    REQUIRE(wk.trunk[2].out.shape == std::vector<int>{50, 5, 5});
    REQUIRE(m.loc.forward(feat, wk.loc).shape == std::vector<int>{4});
    REQUIRE(m.sev.forward(feat, wk.sev).shape == std::vector<int>{4});
    REQUIRE(m.dom.forward(feat, wk.dom).shape == std::vector<int>{2});
}

TEST_CASE("per-head-conv variant moves the third block into each head") {
    nn::ModelF m;
    m.init(nn::paper_arch(true), "per_head_conv", 1);
    REQUIRE(m.trunk.layers.size() == 2);
    REQUIRE(m.trunk.out_ch == 50);
    REQUIRE(m.trunk.out_h == 13);
    REQUIRE(m.loc.tail.layers.size() == 1);
    REQUIRE(m.loc.tail.layers[0].w.shape == std::vector<int>{50, 50, 3, 3});
    REQUIRE(m.loc.flat_dim == 1250);
    nn::TensorF x({4, 64, 64});
    for (auto& v : x.data) v = 0.1f;
    nn::ModelWork<float> wk;
    const auto& feat = m.forward_features(x, wk);
    REQUIRE(feat.shape == std::vector<int>{50, 13, 13});
    REQUIRE(m.dom.forward(feat, wk.dom).shape == std::vector<int>{2});
}

// ---------------------------------------------------------------------------
// Composed network gradient check on the tiny replica. Head parameters see
// the true gradient of L_loc + ls*L_sev + ld*L_dom; the trunk sees the
// reversed domain path, i.e. the gradient of L_loc + ls*L_sev - ld*L_dom.
// ---------------------------------------------------------------------------

namespace {

double composed_loss(nn::Model<double>& m, const TensorD& x, int l, int q, int d, double ls,
                     double ld, double dom_sign) {
    nn::ModelWork<double> wk;
    const auto& feat = m.forward_features(x, wk);
    TensorD g;
    double total = nn::softmax_cross_entropy(m.loc.forward(feat, wk.loc), l, g);
    total += ls * nn::softmax_cross_entropy(m.sev.forward(feat, wk.sev), q, g);
    total += dom_sign * ld * nn::softmax_cross_entropy(m.dom.forward(feat, wk.dom), d, g);
    return total;
}

void composed_backward(nn::Model<double>& m, const TensorD& x, int l, int q, int d, double ls,
                       double ld) {
    nn::ModelWork<double> wk;
    const auto& feat = m.forward_features(x, wk);
    TensorD gl, gq, gd;
    nn::softmax_cross_entropy(m.loc.forward(feat, wk.loc), l, gl);
    nn::softmax_cross_entropy(m.sev.forward(feat, wk.sev), q, gq);
    nn::softmax_cross_entropy(m.dom.forward(feat, wk.dom), d, gd);
    for (auto& v : gq.data) v *= ls;
    for (auto& v : gd.data) v *= ld;
    TensorD gfeat(feat.shape), gh;
    m.loc.backward(feat, wk.loc, gl, gh);
    gfeat = gh;
    m.sev.backward(feat, wk.sev, gq, gh);
    gfeat.add_scaled(gh, 1.0);
    m.dom.backward(feat, wk.dom, gd, gh);
    TensorD grev;
    nn::grl_backward(gh, 1.0, grev);  // loss weight ld already folded into gd
    gfeat.add_scaled(grev, 1.0);
    m.trunk.backward(wk.trunk, gfeat, nullptr);
}

} // namespace

TEST_CASE("composed tiny network passes the finite-difference check") {
    nn::Model<double> m;
    m.init(nn::tiny_arch(), "shared_tail", 31);
    Rng rng(32);
    TensorD x = random_tensor({2, 8, 8}, rng);
    const int l = 2, q = 1, d = 1;
    const double ls = 0.8, ld = 0.6;

    m.zero_grad();
    composed_backward(m, x, l, q, d, ls, ld);

    auto head_loss = [&] { return composed_loss(m, x, l, q, d, ls, ld, +1.0); };
    auto trunk_loss = [&] { return composed_loss(m, x, l, q, d, ls, ld, -1.0); };

    double worst = 0;
    for (auto* hd : {&m.loc, &m.sev, &m.dom}) {
        worst = std::max(worst, gradcheck::check_tensor(head_loss, hd->fc1.w, hd->fc1.gw));
        worst = std::max(worst, gradcheck::check_tensor(head_loss, hd->fc1.b, hd->fc1.gb));
        worst = std::max(worst, gradcheck::check_tensor(head_loss, hd->fc2.w, hd->fc2.gw));
        worst = std::max(worst, gradcheck::check_tensor(head_loss, hd->fc2.b, hd->fc2.gb));
    }
    for (auto& layer : m.trunk.layers) {
        worst = std::max(worst, gradcheck::check_tensor(trunk_loss, layer.w, layer.gw));
        worst = std::max(worst, gradcheck::check_tensor(trunk_loss, layer.b, layer.gb));
    }
    INFO("worst relative error " << worst);
    REQUIRE(worst < 1e-3);
    REQUIRE(worst < 1e-6);  // double precision should do much better than the gate
}

TEST_CASE("checkpoint round-trips weights, stats and topology") {
    nn::ModelF m;
    m.init(nn::tiny_arch(), "shared_tail", 77);
    for (int c = 0; c < m.arch.in_ch; ++c) {
        m.input_mean[c] = 0.5f * (c + 1);
        m.input_std[c] = 1.5f + c;
    }
    const std::string path = "ckpt_test.bin";
    nn::save_checkpoint(path, m, 0xabcdef1234ULL);
    std::uint64_t hash = 0;
    nn::ModelF r = nn::load_checkpoint(path, &hash);
    REQUIRE(hash == 0xabcdef1234ULL);
    REQUIRE(r.topology == "shared_tail");
    std::vector<std::pair<std::string, nn::TensorF*>> na, nb;
    m.named_tensors(na);
    r.named_tensors(nb);
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
        REQUIRE(na[i].first == nb[i].first);
        REQUIRE(na[i].second->data == nb[i].second->data);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects foreign and truncated files") {
    {
        io::BinWriter w("not_a_ckpt.bin");
        w.magic("DBT1");
        w.u16(1);
        w.commit();
    }
    REQUIRE_THROWS_AS(nn::load_checkpoint("not_a_ckpt.bin"), DataError);
    std::filesystem::remove("not_a_ckpt.bin");

    nn::ModelF m;
    m.init(nn::tiny_arch(), "shared_tail", 5);
    nn::save_checkpoint("trunc_ckpt.bin", m, 1);
    const auto size = std::filesystem::file_size("trunc_ckpt.bin");
    std::filesystem::resize_file("trunc_ckpt.bin", size / 2);
    REQUIRE_THROWS_AS(nn::load_checkpoint("trunc_ckpt.bin"), DataError);
    std::filesystem::remove("trunc_ckpt.bin");
}
