#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "driveby/mtdann.hpp"

namespace driveby::fd {

// One gradcheck verdict: worst relative error across all checked coordinates
// and seeds, against the layer's tolerance.
struct CheckRow {
    std::string name;
    double max_rel = 0;
    double tolerance = 0;

    bool pass() const { return max_rel <= tolerance; }
};

namespace detail {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline void randomize(nn::TensorD& t, Rng& rng, double scale = 1.0) {
    for (auto& v : t.data) v = rng.normal() * scale;
}

// Central differences against an analytic gradient; `sign` lets the caller
// check stored gradients that are defined as the negative of d(loss)/dx.
template <typename F>
double fd_against(nn::TensorD& x, const nn::TensorD& analytic, double sign, F&& loss,
                  double eps = 1e-6) {
    double worst = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double lp = loss();
        x[i] = keep - eps;
        const double lm = loss();
        x[i] = keep;
        const double fd = sign * (lp - lm) / (2.0 * eps);
        worst = std::max(worst, rel_err(fd, analytic[i]));
    }
    return worst;
}

template <typename F>
double fd_against(nn::TensorD& x, const nn::TensorD& analytic, F&& loss) {
    return fd_against(x, analytic, 1.0, loss);
}

inline double dot(const nn::TensorD& a, const nn::TensorD& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

// --- individual layers: loss = <R, layer(x)> with a fixed random projection

inline double check_conv2d(std::uint64_t seed) {
    Rng rng(seed);
    nn::TensorD x({2, 6, 6});
    randomize(x, rng);
    nn::LayerParams<double> p;
    p.init_shapes({3, 2, 3, 3}, {3});
    randomize(p.w, rng, 0.5);
    randomize(p.b, rng, 0.5);
    nn::TensorD R({3, 4, 4});
    randomize(R, rng);
    auto loss = [&]() {
        nn::TensorD col, out;
        nn::conv2d_forward(x, p, col, out);
        return dot(R, out);
    };
    nn::TensorD col, out;
    nn::conv2d_forward(x, p, col, out);
    p.zero_grad();
    nn::TensorD gin, gcol;
    nn::conv2d_backward(p, col, R, 6, 6, &gin, gcol);
    double worst = fd_against(x, gin, loss);
    worst = std::max(worst, fd_against(p.w, p.gw, loss));
    worst = std::max(worst, fd_against(p.b, p.gb, loss));
    return worst;
}

inline double check_maxpool2(std::uint64_t seed) {
    Rng rng(seed);
    // distinct well-separated values so no FD step can cross an argmax tie
    nn::TensorD x({2, 6, 6});
    std::vector<std::uint32_t> perm(x.numel());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<std::uint32_t>(i);
    rng.shuffle(perm);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 0.37 * perm[i] - 10.0;
    nn::TensorD R({2, 3, 3});
    randomize(R, rng);
    auto loss = [&]() {
        nn::TensorD out;
        std::vector<std::int32_t> arg;
        nn::maxpool2_forward(x, out, arg);
        return dot(R, out);
    };
    nn::TensorD out;
    std::vector<std::int32_t> arg;
    nn::maxpool2_forward(x, out, arg);
    nn::TensorD gin;
    nn::maxpool2_backward(R, arg, x.shape, gin);
    return fd_against(x, gin, loss);
}

inline double check_relu(std::uint64_t seed) {
    Rng rng(seed);
    nn::TensorD x({40});
    randomize(x, rng);
    for (auto& v : x.data)
        if (std::abs(v) < 1e-3) v += v >= 0 ? 0.1 : -0.1;  // stay off the kink
    nn::TensorD R({40});
    randomize(R, rng);
    auto loss = [&]() {
        nn::TensorD out;
        nn::relu_forward(x, out);
        return dot(R, out);
    };
    nn::TensorD gin;
    nn::relu_backward(x, R, gin);
    return fd_against(x, gin, loss);
}

inline double check_linear(std::uint64_t seed) {
    Rng rng(seed);
    nn::TensorD x({7});
    randomize(x, rng);
    nn::LayerParams<double> p;
    p.init_shapes({5, 7}, {5});
    randomize(p.w, rng, 0.5);
    randomize(p.b, rng, 0.5);
    nn::TensorD R({5});
    randomize(R, rng);
    auto loss = [&]() {
        nn::TensorD out;
        nn::linear_forward(x, p, out);
        return dot(R, out);
    };
    p.zero_grad();
    nn::TensorD gin;
    nn::linear_backward(p, x, R, &gin);
    double worst = fd_against(x, gin, loss);
    worst = std::max(worst, fd_against(p.w, p.gw, loss));
    worst = std::max(worst, fd_against(p.b, p.gb, loss));
    return worst;
}

inline double check_softmax_ce(std::uint64_t seed) {
    Rng rng(seed);
    nn::TensorD logits({4});
    randomize(logits, rng, 2.0);
    const int label = static_cast<int>(rng.uniform_index(4));
    nn::TensorD g;
    auto loss = [&]() {
        nn::TensorD tmp;
        return nn::softmax_cross_entropy(logits, label, tmp);
    };
    nn::softmax_cross_entropy(logits, label, g);
    return fd_against(logits, g, loss);
}

// The reversal layer has no finite-difference oracle by construction (its
// backward is deliberately not the derivative of its forward), so it is held
// to its exact contract instead: forward bitwise identity, backward exactly
// -lambda times the upstream gradient.
inline double check_grl(std::uint64_t seed) {
    Rng rng(seed);
    nn::TensorF x({3, 4, 4});
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    nn::TensorF out;
    nn::grl_forward(x, out);
    double worst = 0;
    if (std::memcmp(x.ptr(), out.ptr(), x.numel() * sizeof(float)) != 0) worst = 1.0;
    nn::TensorF up({3, 4, 4});
    for (auto& v : up.data) v = static_cast<float>(rng.normal());
    for (const float lambda : {0.0f, 0.3f, 1.0f}) {
        nn::TensorF gin;
        nn::grl_backward(up, lambda, gin);
        for (std::size_t i = 0; i < up.numel(); ++i)
            if (gin[i] != -lambda * up[i]) worst = 1.0;
    }
    return worst;
}

inline double check_head(std::uint64_t seed, bool with_tail) {
    Rng rng(seed);
    nn::HeadSpec hs;
    hs.hidden = 6;
    hs.out = 4;
    if (with_tail) hs.tail = {{4, 3, true}};
    nn::Head<double> head;
    Rng r_init = rng.split("init");
    head.init(3, 6, 6, hs, r_init);
    nn::TensorD feat({3, 6, 6});
    randomize(feat, rng, 0.5);
    const int label = static_cast<int>(rng.uniform_index(4));
    nn::HeadWork<double> wk;
    auto loss = [&]() {
        nn::TensorD tmp;
        return nn::softmax_cross_entropy(head.forward(feat, wk), label, tmp);
    };
    nn::TensorD g_logits, g_feat;
    nn::softmax_cross_entropy(head.forward(feat, wk), label, g_logits);
    auto zero_all = [&]() {
        head.fc1.zero_grad();
        head.fc2.zero_grad();
        for (auto& l : head.tail.layers) l.zero_grad();
    };
    zero_all();
    head.backward(feat, wk, g_logits, g_feat);
    double worst = fd_against(feat, g_feat, loss);
    worst = std::max(worst, fd_against(head.fc1.w, head.fc1.gw, loss));
    worst = std::max(worst, fd_against(head.fc1.b, head.fc1.gb, loss));
    worst = std::max(worst, fd_against(head.fc2.w, head.fc2.gw, loss));
    worst = std::max(worst, fd_against(head.fc2.b, head.fc2.gb, loss));
    for (auto& l : head.tail.layers) {
        worst = std::max(worst, fd_against(l.w, l.gw, loss));
        worst = std::max(worst, fd_against(l.b, l.gb, loss));
    }
    return worst;
}

inline double check_trunk(std::uint64_t seed) {
    Rng rng(seed);
    nn::ConvStack<double> trunk;
    Rng r_init = rng.split("init");
    trunk.init(2, 8, 8, {{3, 3, true}, {4, 2, false}}, r_init);
    nn::TensorD x({2, 8, 8});
    randomize(x, rng, 0.5);
    nn::TensorD R({trunk.out_ch, trunk.out_h, trunk.out_w});
    randomize(R, rng);
    std::vector<nn::ConvStageWork<double>> wk;
    auto loss = [&]() { return dot(R, trunk.forward(x, wk)); };
    loss();
    for (auto& l : trunk.layers) l.zero_grad();
    nn::TensorD gin;
    trunk.backward(wk, R, &gin);
    double worst = fd_against(x, gin, loss);
    for (auto& l : trunk.layers) {
        worst = std::max(worst, fd_against(l.w, l.gw, loss));
        worst = std::max(worst, fd_against(l.b, l.gb, loss));
    }
    return worst;
}

// Composed objective on the tiny replica. Stored gradients follow the
// reversal convention: the domain head's parameters hold +lambda_d/n times
// the domain-loss gradient, i.e. the negative of d(total)/d(theta_d); every
// other parameter holds d(total)/d(theta) directly.
inline double check_objective(std::uint64_t seed) {
    nn::Model<double> model;
    model.init(nn::tiny_arch(), "shared_tail", seed);
    Rng rng(hash_combine(seed, hash_tag("data")));
    std::vector<nn::TensorD> inputs(5, nn::TensorD({2, 8, 8}));
    for (auto& x : inputs) randomize(x, rng, 0.8);
    const std::vector<mt::LabeledInput<double>> source = {
        {&inputs[0], 0, -1, 0}, {&inputs[1], 1, 2, 0}, {&inputs[2], 3, 0, 0}};
    const std::vector<mt::LabeledInput<double>> target = {{&inputs[3], 0, -1, 1},
                                                          {&inputs[4], 0, -1, 1}};
    mt::LossWeights w;
    w.lambda_s = 0.7;
    w.lambda_d = 0.3;
    w.loc_class = {1.2, 0.9, 1.0, 1.1};
    nn::ModelWork<double> work;
    auto loss = [&]() { return mt::objective(model, source, target, w, work).total; };

    loss();
    struct Snap {
        nn::TensorD gw, gb;
        double sign;
    };
    std::vector<Snap> snaps;
    model.for_each_params([&](const std::string& name, nn::LayerParams<double>& p) {
        snaps.push_back({p.gw, p.gb, name.rfind("dom.", 0) == 0 ? -1.0 : 1.0});
    });
    double worst = 0;
    std::size_t si = 0;
    model.for_each_params([&](const std::string&, nn::LayerParams<double>& p) {
        const Snap& s = snaps[si++];
        worst = std::max(worst, fd_against(p.w, s.gw, s.sign, loss));
        worst = std::max(worst, fd_against(p.b, s.gb, s.sign, loss));
    });
    return worst;
}

} // namespace detail

// Worst relative error per layer over n_seeds seeds. Tolerances: 1e-4 for
// single layers, 1e-3 for the composed objective, exact for the reversal.
inline std::vector<CheckRow> run_gradcheck(int n_seeds = 10, std::uint64_t base_seed = 1) {
    struct Item {
        const char* name;
        double (*fn)(std::uint64_t);
        double tol;
    };
    const Item items[] = {
        {"conv2d", detail::check_conv2d, 1e-4},
        {"maxpool2", detail::check_maxpool2, 1e-4},
        {"relu", detail::check_relu, 1e-4},
        {"linear", detail::check_linear, 1e-4},
        {"softmax_ce", detail::check_softmax_ce, 1e-4},
        {"grl", detail::check_grl, 0.0},
        {"head", [](std::uint64_t s) { return detail::check_head(s, false); }, 1e-4},
        {"head_tail", [](std::uint64_t s) { return detail::check_head(s, true); }, 1e-4},
        {"trunk", detail::check_trunk, 1e-4},
        {"objective", detail::check_objective, 1e-3},
    };
    std::vector<CheckRow> rows;
    for (const auto& it : items) {
        CheckRow row{it.name, 0.0, it.tol};
        for (int s = 0; s < n_seeds; ++s)
            row.max_rel = std::max(
                row.max_rel, it.fn(hash_combine(base_seed, static_cast<std::uint64_t>(s))));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace driveby::fd
