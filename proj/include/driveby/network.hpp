#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "driveby/layers.hpp"

namespace driveby::nn {

// ---------------------------------------------------------------------------
// Architecture description. Stages are conv(k, valid, stride 1) + ReLU with an
// optional 2x2 max pool; heads are an optional conv tail followed by
// Linear -> ReLU -> Linear.
// ---------------------------------------------------------------------------

struct ConvStageSpec {
    int out_ch = 0;
    int k = 0;
    bool pool = false;
};

struct HeadSpec {
    std::vector<ConvStageSpec> tail;  // empty for shared-tail topology
    int hidden = 0;
    int out = 0;
};

struct ArchSpec {
    int in_ch = 0, in_h = 0, in_w = 0;
    std::vector<ConvStageSpec> trunk;
    HeadSpec loc, sev, dom;
};

// Diagnosis network sized for 4x64x64 spectrogram inputs. The default keeps
// the third conv block in the shared extractor (features flatten to 1250);
// per_head_conv instead stops the shared part at 50x13x13 and gives each head
// its own copy of the third block.
inline ArchSpec paper_arch(bool per_head_conv) {
    ArchSpec a;
    a.in_ch = 4;
    a.in_h = a.in_w = 64;
    a.trunk = {{64, 5, true}, {50, 5, true}};
    HeadSpec head;
    head.hidden = 100;
    if (per_head_conv)
        head.tail = {{50, 3, true}};
    else
        a.trunk.push_back({50, 3, true});
    a.loc = a.sev = head;
    a.loc.out = 4;  // healthy + 3 damage zones
    a.sev.out = 4;  // 4 severity levels (healthy masked out upstream)
    a.dom = head;
    a.dom.out = 2;
    return a;
}

// Small replica with the same layer types and three-head topology, cheap
// enough for finite-difference checks (2x8x8 input, 16-dim features).
inline ArchSpec tiny_arch() {
    ArchSpec a;
    a.in_ch = 2;
    a.in_h = a.in_w = 8;
    a.trunk = {{3, 3, true}, {4, 2, false}};
    HeadSpec head;
    head.hidden = 8;
    a.loc = a.sev = head;
    a.loc.out = 4;
    a.sev.out = 4;
    a.dom = head;
    a.dom.out = 2;
    return a;
}

// ---------------------------------------------------------------------------
// Conv stack
// ---------------------------------------------------------------------------

template <typename T>
struct ConvStageWork {
    Tensor<T> col, pre, act, out;
    std::vector<std::int32_t> argmax;
    Tensor<T> g_out, g_act, g_pre, g_col, g_in;
};

template <typename T>
struct ConvStack {
    std::vector<ConvStageSpec> spec;
    std::vector<LayerParams<T>> layers;
    std::vector<int> stage_in;  // flattened (C,H,W) triples per stage
    int out_ch = 0, out_h = 0, out_w = 0;

    void init(int C, int H, int W, const std::vector<ConvStageSpec>& stages, Rng& rng) {
        spec = stages;
        layers.clear();
        stage_in.clear();
        for (const auto& st : stages) {
            stage_in.insert(stage_in.end(), {C, H, W});
            LayerParams<T> p;
            p.init_shapes({st.out_ch, C, st.k, st.k}, {st.out_ch});
            kaiming_init(p, C * st.k * st.k, rng);
            layers.push_back(std::move(p));
            C = st.out_ch;
            H = conv_out_dim(H, st.k);
            W = conv_out_dim(W, st.k);
            if (st.pool) {
                H /= 2;
                W /= 2;
            }
        }
        out_ch = C;
        out_h = H;
        out_w = W;
    }

    const Tensor<T>& forward(const Tensor<T>& x, std::vector<ConvStageWork<T>>& work) const {
        work.resize(spec.size());
        const Tensor<T>* cur = &x;
        for (std::size_t s = 0; s < spec.size(); ++s) {
            auto& wk = work[s];
            conv2d_forward(*cur, layers[s], wk.col, wk.pre);
            relu_forward(wk.pre, wk.act);
            if (spec[s].pool) {
                maxpool2_forward(wk.act, wk.out, wk.argmax);
                cur = &wk.out;
            } else {
                cur = &wk.act;
            }
        }
        return *cur;
    }

    // grad_out has the stack's output shape; input gradient is computed only
    // when input_grad is non-null (skipped at the network input boundary).
    void backward(std::vector<ConvStageWork<T>>& work, const Tensor<T>& grad_out,
                  Tensor<T>* input_grad) {
        const Tensor<T>* g = &grad_out;
        for (int s = static_cast<int>(spec.size()) - 1; s >= 0; --s) {
            auto& wk = work[s];
            if (spec[s].pool) {
                maxpool2_backward(*g, wk.argmax, wk.act.shape, wk.g_act);
                relu_backward(wk.pre, wk.g_act, wk.g_pre);
            } else {
                relu_backward(wk.pre, *g, wk.g_pre);
            }
            const int Hin = stage_in[3 * s + 1], Win = stage_in[3 * s + 2];
            Tensor<T>* gin = (s == 0) ? input_grad : &wk.g_in;
            conv2d_backward(layers[s], wk.col, wk.g_pre, Hin, Win, gin, wk.g_col);
            if (s > 0) g = &wk.g_in;
        }
    }
};

// ---------------------------------------------------------------------------
// Head: optional conv tail, then Linear -> ReLU -> Linear logits.
// ---------------------------------------------------------------------------

template <typename T>
struct HeadWork {
    std::vector<ConvStageWork<T>> tail;
    Tensor<T> flat;  // tail output (or shared features) viewed as a vector
    Tensor<T> pre1, act1, logits;
    Tensor<T> g_logits, g_act1, g_pre1, g_flat, g_tail_out;
};

template <typename T>
struct Head {
    HeadSpec spec;
    ConvStack<T> tail;  // unused when spec.tail is empty
    LayerParams<T> fc1, fc2;
    int feat_ch = 0, feat_h = 0, feat_w = 0;  // input dims (shared features)
    int flat_dim = 0;                         // fc1 input dim after the tail

    void init(int C, int H, int W, const HeadSpec& hs, Rng& rng) {
        spec = hs;
        feat_ch = C;
        feat_h = H;
        feat_w = W;
        if (!hs.tail.empty()) {
            tail.init(C, H, W, hs.tail, rng);
            flat_dim = tail.out_ch * tail.out_h * tail.out_w;
        } else {
            flat_dim = C * H * W;
        }
        fc1.init_shapes({hs.hidden, flat_dim}, {hs.hidden});
        kaiming_init(fc1, flat_dim, rng);
        fc2.init_shapes({hs.out, hs.hidden}, {hs.out});
        kaiming_init(fc2, hs.hidden, rng);
    }

    const Tensor<T>& forward(const Tensor<T>& features, HeadWork<T>& wk) const {
        const Tensor<T>* flat = &features;
        if (!spec.tail.empty()) flat = &tail.forward(features, wk.tail);
        linear_forward(*flat, fc1, wk.pre1);
        relu_forward(wk.pre1, wk.act1);
        linear_forward(wk.act1, fc2, wk.logits);
        return wk.logits;
    }

    // Accumulates parameter grads; writes this head's gradient w.r.t. the
    // shared features into grad_features (overwriting it).
    void backward(const Tensor<T>& features, HeadWork<T>& wk, const Tensor<T>& grad_logits,
                  Tensor<T>& grad_features) {
        linear_backward(fc2, wk.act1, grad_logits, &wk.g_act1);
        relu_backward(wk.pre1, wk.g_act1, wk.g_pre1);
        if (!spec.tail.empty()) {
            const Tensor<T>& tail_out =
                spec.tail.back().pool ? wk.tail.back().out : wk.tail.back().act;
            linear_backward(fc1, tail_out, wk.g_pre1, &wk.g_flat);
            wk.g_tail_out = wk.g_flat;
            wk.g_tail_out.shape = tail_out.shape;
            tail.backward(wk.tail, wk.g_tail_out, &grad_features);
        } else {
            linear_backward(fc1, features, wk.g_pre1, &wk.g_flat);
            grad_features = wk.g_flat;
            grad_features.shape = {feat_ch, feat_h, feat_w};
        }
    }
};

// ---------------------------------------------------------------------------
// Full three-head model. Head ids: 0 location, 1 severity, 2 domain.
// ---------------------------------------------------------------------------

template <typename T>
struct ModelWork {
    std::vector<ConvStageWork<T>> trunk;
    HeadWork<T> loc, sev, dom;
    Tensor<T> g_feat_total, g_feat_head;
};

template <typename T>
struct Model {
    ArchSpec arch;
    std::string topology;  // "shared_tail" or "per_head_conv"
    ConvStack<T> trunk;
    Head<T> loc, sev, dom;
    Tensor<T> input_mean, input_std;  // per-channel standardization constants

    void init(const ArchSpec& a, std::string topo, std::uint64_t seed) {
        arch = a;
        topology = std::move(topo);
        Rng rng(seed);
        Rng r_trunk = rng.split("trunk"), r_loc = rng.split("head_loc"),
            r_sev = rng.split("head_sev"), r_dom = rng.split("head_dom");
        trunk.init(a.in_ch, a.in_h, a.in_w, a.trunk, r_trunk);
        loc.init(trunk.out_ch, trunk.out_h, trunk.out_w, a.loc, r_loc);
        sev.init(trunk.out_ch, trunk.out_h, trunk.out_w, a.sev, r_sev);
        dom.init(trunk.out_ch, trunk.out_h, trunk.out_w, a.dom, r_dom);
        input_mean = Tensor<T>({a.in_ch});
        input_std = Tensor<T>({a.in_ch});
        for (int c = 0; c < a.in_ch; ++c) input_std[c] = T(1);
    }

    const Tensor<T>& forward_features(const Tensor<T>& x, ModelWork<T>& wk) const {
        if (x.shape != std::vector<int>{arch.in_ch, arch.in_h, arch.in_w})
            throw DataError("model: input shape " + shape_str(x.shape) + ", expected " +
                            shape_str({arch.in_ch, arch.in_h, arch.in_w}));
        return trunk.forward(x, wk.trunk);
    }

    Head<T>& head(int id) { return id == 0 ? loc : id == 1 ? sev : dom; }
    const Head<T>& head(int id) const { return id == 0 ? loc : id == 1 ? sev : dom; }
    HeadWork<T>& head_work(ModelWork<T>& wk, int id) const {
        return id == 0 ? wk.loc : id == 1 ? wk.sev : wk.dom;
    }

    void for_each_params(const std::function<void(const std::string&, LayerParams<T>&)>& fn) {
        for (std::size_t s = 0; s < trunk.layers.size(); ++s)
            fn("gf.conv" + std::to_string(s), trunk.layers[s]);
        const char* names[3] = {"loc", "sev", "dom"};
        for (int h = 0; h < 3; ++h) {
            Head<T>& hd = head(h);
            for (std::size_t s = 0; s < hd.tail.layers.size(); ++s)
                fn(std::string(names[h]) + ".conv" + std::to_string(s), hd.tail.layers[s]);
            fn(std::string(names[h]) + ".fc1", hd.fc1);
            fn(std::string(names[h]) + ".fc2", hd.fc2);
        }
    }

    void named_tensors(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
        out.clear();
        for_each_params([&](const std::string& name, LayerParams<T>& p) {
            out.emplace_back(name + ".w", &p.w);
            out.emplace_back(name + ".b", &p.b);
        });
        out.emplace_back("stats.mean", &input_mean);
        out.emplace_back("stats.std", &input_std);
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for_each_params([&](const std::string&, LayerParams<T>& p) { n += p.param_count(); });
        return n;
    }

    void zero_grad() {
        for_each_params([](const std::string&, LayerParams<T>& p) { p.zero_grad(); });
    }

    void sgd_update(T lr, T momentum) {
        for_each_params([&](const std::string&, LayerParams<T>& p) { sgd_step(p, lr, momentum); });
    }

    bool grads_finite() {
        bool ok = true;
        for_each_params([&](const std::string&, LayerParams<T>& p) {
            if (!p.gw.all_finite() || !p.gb.all_finite()) ok = false;
        });
        return ok;
    }

    void standardize(Tensor<T>& x) const {
        const int C = arch.in_ch;
        const std::size_t plane = x.numel() / static_cast<std::size_t>(C);
        for (int c = 0; c < C; ++c) {
            T* p = x.ptr() + static_cast<std::size_t>(c) * plane;
            const T mu = input_mean[c], sd = input_std[c];
            for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mu) / sd;
        }
    }

    template <typename U>
    Model<U> cast() const {
        Model<U> out;
        out.init(arch, topology, 0);
        std::vector<std::pair<std::string, Tensor<U>*>> dst_named;
        out.named_tensors(dst_named);
        auto* self = const_cast<Model<T>*>(this);
        std::vector<std::pair<std::string, Tensor<T>*>> src_named;
        self->named_tensors(src_named);
        for (std::size_t i = 0; i < src_named.size(); ++i)
            *dst_named[i].second = src_named[i].second->template cast<U>();
        return out;
    }
};

using ModelF = Model<float>;
using ModelD = Model<double>;

} // namespace driveby::nn
