#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "driveby/metrics.hpp"
#include "driveby/network.hpp"
#include "driveby/preprocess.hpp"

namespace driveby::mt {

using prep::SpectroSample;

// Adversarial weight schedule on training progress p in [0,1]: 0 at the start
// so the feature extractor first learns the supervised tasks, saturating at
// lambda_max once the domain classifier has something real to push against.
inline double lambda_schedule(double lambda_max, bool ramp, double p) {
    if (!ramp) return lambda_max;
    const double q = std::clamp(p, 0.0, 1.0);
    return lambda_max * (2.0 / (1.0 + std::exp(-10.0 * q)) - 1.0);
}

struct TrainConfig {
    std::string topology = "shared_tail";  // or per_head_conv
    double lambda_s = 1.0;                 // severity-loss weight
    double lambda_d_max = 1.0;             // adversarial weight ceiling
    bool lambda_d_ramp = true;             // ramp vs constant schedule
    double learning_rate = 0.01;
    double momentum = 0.9;
    // Anneal the step size as lr/(1+10p)^0.75 over training progress p,
    // the schedule customary for adversarial domain adaptation. Off by
    // default: plain constant-rate SGD.
    bool lr_anneal = false;
    int batch_size = 32;                   // source half + target half
    int epochs = 60;
    // Location-head class weighting: none, inverse (uniform effective prior)
    // or sqrt (half-strength). The grid has 12 damaged states per healthy one,
    // so an unweighted head inherits a strong damage prior.
    std::string class_balance = "none";
    std::uint64_t seed = 1;
};

inline void validate(const TrainConfig& c) {
    if (c.topology != "shared_tail" && c.topology != "per_head_conv")
        throw ConfigError("train: topology must be shared_tail or per_head_conv, got '" +
                          c.topology + "'");
    if (c.lambda_s < 0) throw ConfigError("train: lambda_s must be >= 0");
    if (c.lambda_d_max < 0) throw ConfigError("train: lambda_d_max must be >= 0");
    if (c.learning_rate <= 0) throw ConfigError("train: learning_rate must be positive");
    if (c.momentum < 0 || c.momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
    if (c.batch_size < 2 || c.batch_size % 2 != 0)
        throw ConfigError("train: batch_size must be even and >= 2");
    if (c.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (c.class_balance != "none" && c.class_balance != "inverse" && c.class_balance != "sqrt")
        throw ConfigError("train: class_balance must be none, inverse or sqrt, got '" +
                          c.class_balance + "'");
}

struct DomainDataset {
    std::vector<SpectroSample> samples;
    int domain = 0;  // 0 source, 1 target
};

// Target-domain view: damage labels stripped so nothing downstream can read
// them, domain tag set. Evaluation keeps its own labeled copies.
inline DomainDataset as_target(std::vector<SpectroSample> samples) {
    for (auto& s : samples) {
        s.location_label = 0;
        s.severity_label = -1;
        s.domain_label = 1;
    }
    return {std::move(samples), 1};
}

struct Diagnosis {
    bool is_damaged = false;
    int location_category = 0;
    int severity_category = -1;  // -1 = absent (healthy diagnosis)
    std::array<float, 4> location_probs{};
    std::array<float, 4> severity_probs{};
};

// Ties break to the lowest index.
template <typename T>
int argmax(const nn::Tensor<T>& t) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(t.numel()); ++i)
        if (t[i] > t[best]) best = i;
    return best;
}

// ---------------------------------------------------------------------------
// Objective. The total is
//   L = (1/n_s) sum_src [w_l * L_l + lambda_s * L_q] - (lambda_d/n) sum_all L_d
// with L_q masked to damaged source samples (the healthy state belongs to the
// location head alone) and w_l the optional class-balance weight, unit by
// default. One call accumulates the full batch gradient into the model.
// ---------------------------------------------------------------------------

struct LossWeights {
    double lambda_s = 1.0;
    double lambda_d = 1.0;
    std::array<double, 4> loc_class = {1.0, 1.0, 1.0, 1.0};
};

// Which supervised heads participate; the 2-step baseline trains single-task
// stages by masking one of them.
struct HeadMask {
    bool loc = true;
    bool sev = true;
};

// Input view for one sample, already standardized by the caller.
template <typename T>
struct LabeledInput {
    const nn::Tensor<T>* input = nullptr;
    int location = 0;
    int severity = -1;
    int domain = 0;
};

struct StepStats {
    double total = 0, loc_mean = 0, sev_mean = 0, dom_mean = 0;
    int n_source = 0, n_target = 0, n_damaged = 0;
    int dom_correct = 0, dom_total = 0;
};

template <typename T>
StepStats objective(nn::Model<T>& model, const std::vector<LabeledInput<T>>& source,
                    const std::vector<LabeledInput<T>>& target, const LossWeights& w,
                    nn::ModelWork<T>& work, HeadMask heads = {}) {
    if (source.empty()) throw DataError("objective: batch has no source samples");
    model.zero_grad();
    StepStats st;
    st.n_source = static_cast<int>(source.size());
    st.n_target = static_cast<int>(target.size());
    const double n_s = st.n_source;
    const double n = st.n_source + st.n_target;
    double loc_sum = 0, sev_sum = 0, dom_sum = 0;

    auto run_sample = [&](const LabeledInput<T>& smp, bool is_source) {
        const bool want_dom = w.lambda_d != 0;
        const bool want_loc = is_source && heads.loc;
        const bool want_sev = is_source && heads.sev && smp.location != 0 && smp.severity >= 0;
        if (!want_dom && !want_loc && !want_sev) return;
        const nn::Tensor<T>& feat = model.forward_features(*smp.input, work);
        if (work.g_feat_total.shape != feat.shape) work.g_feat_total = nn::Tensor<T>(feat.shape);
        work.g_feat_total.zero();
        if (want_loc) {
            const nn::Tensor<T>& logits = model.loc.forward(feat, work.loc);
            const double wc = w.loc_class[static_cast<std::size_t>(smp.location)];
            loc_sum += wc * nn::softmax_cross_entropy(logits, smp.location, work.loc.g_logits);
            const T scale = static_cast<T>(wc / n_s);
            for (auto& g : work.loc.g_logits.data) g *= scale;
            model.loc.backward(feat, work.loc, work.loc.g_logits, work.g_feat_head);
            work.g_feat_total.add_scaled(work.g_feat_head, T(1));
        }
        if (want_sev) {
            const nn::Tensor<T>& logits = model.sev.forward(feat, work.sev);
            sev_sum += nn::softmax_cross_entropy(logits, smp.severity, work.sev.g_logits);
            st.n_damaged += 1;
            if (w.lambda_s != 0) {
                const T scale = static_cast<T>(w.lambda_s / n_s);
                for (auto& g : work.sev.g_logits.data) g *= scale;
                model.sev.backward(feat, work.sev, work.sev.g_logits, work.g_feat_head);
                work.g_feat_total.add_scaled(work.g_feat_head, T(1));
            }
        }
        if (want_dom) {
            // Reversal layer: identity forward, so the domain head reads the
            // features directly. Backward, theta_d accumulates +lambda_d/n
            // times dL_d (Eq. 5 trains the classifier), and the same pathway
            // enters the features sign-flipped, lambda_d already folded into
            // the branch scale, so theta_f ascends the domain loss.
            const nn::Tensor<T>& logits = model.dom.forward(feat, work.dom);
            dom_sum += nn::softmax_cross_entropy(logits, smp.domain, work.dom.g_logits);
            st.dom_correct += argmax(logits) == smp.domain;
            st.dom_total += 1;
            const T scale = static_cast<T>(w.lambda_d / n);
            for (auto& g : work.dom.g_logits.data) g *= scale;
            model.dom.backward(feat, work.dom, work.dom.g_logits, work.g_feat_head);
            work.g_feat_total.add_scaled(work.g_feat_head, T(-1));
        }
        model.trunk.backward(work.trunk, work.g_feat_total, nullptr);
    };

    for (const auto& s : source) run_sample(s, true);
    if (w.lambda_d != 0)
        for (const auto& t : target) run_sample(t, false);

    st.loc_mean = loc_sum / n_s;
    st.sev_mean = sev_sum / n_s;
    st.dom_mean = st.dom_total > 0 ? dom_sum / n : 0.0;
    st.total = st.loc_mean + w.lambda_s * st.sev_mean - w.lambda_d * st.dom_mean;
    return st;
}

// ---------------------------------------------------------------------------
// Prediction: location argmax decides damaged/healthy (label 0 is the healthy
// state); severity is reported only for damaged diagnoses.
// ---------------------------------------------------------------------------

template <typename T>
Diagnosis predict(const nn::Model<T>& model, const nn::Tensor<T>& raw_input,
                  nn::ModelWork<T>& work) {
    nn::Tensor<T> x = raw_input;
    model.standardize(x);
    const nn::Tensor<T>& feat = model.forward_features(x, work);
    Diagnosis d;
    nn::Tensor<T> probs;
    nn::softmax(model.loc.forward(feat, work.loc), probs);
    d.location_category = argmax(probs);
    d.is_damaged = d.location_category != 0;
    for (int i = 0; i < 4 && i < static_cast<int>(probs.numel()); ++i)
        d.location_probs[static_cast<std::size_t>(i)] = static_cast<float>(probs[i]);
    nn::softmax(model.sev.forward(feat, work.sev), probs);
    for (int i = 0; i < 4 && i < static_cast<int>(probs.numel()); ++i)
        d.severity_probs[static_cast<std::size_t>(i)] = static_cast<float>(probs[i]);
    d.severity_category = d.is_damaged ? argmax(probs) : -1;
    return d;
}

inline Diagnosis predict(const nn::ModelF& model, const SpectroSample& sample,
                         nn::ModelWork<float>& work) {
    return predict(model, sample.input, work);
}

inline ev::Outcome outcome_of(const Diagnosis& d, const SpectroSample& truth) {
    return {truth.location_label, truth.severity_label, d.location_category, d.severity_category};
}

inline std::vector<ev::Outcome> evaluate_outcomes(const nn::ModelF& model,
                                                  const std::vector<SpectroSample>& samples) {
    nn::ModelWork<float> work;
    std::vector<ev::Outcome> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(outcome_of(predict(model, s, work), s));
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

inline std::array<double, 4> location_class_weights(const std::vector<SpectroSample>& source,
                                                    const std::string& mode) {
    std::array<double, 4> w = {1.0, 1.0, 1.0, 1.0};
    if (mode == "none") return w;
    std::array<double, 4> count{};
    for (const auto& s : source) count[static_cast<std::size_t>(s.location_label)] += 1;
    int present = 0;
    for (double c : count) present += c > 0;
    const double n = static_cast<double>(source.size());
    double mass = 0;
    for (int c = 0; c < 4; ++c) {
        if (count[c] == 0) continue;
        w[c] = n / (present * count[c]);
        if (mode == "sqrt") w[c] = std::sqrt(w[c]);
        mass += count[c] * w[c];
    }
    // normalize so the weighted sample mean stays 1 and the loss scale is
    // comparable across modes
    for (int c = 0; c < 4; ++c)
        if (count[c] > 0) w[c] *= n / mass;
    return w;
}

struct TrainLogRow {
    int epoch = 0;
    double loss = 0, loss_loc = 0, loss_sev = 0, loss_dom = 0;
    double domain_acc = std::nan("");
    double lambda_d = 0;
    double val_detection = std::nan(""), val_localization = std::nan("");
    double val_quantification = std::nan(""), val_within_one = std::nan("");
};

struct TrainResult {
    nn::ModelF model;
    std::vector<TrainLogRow> log;
    std::vector<std::string> warnings;
};

namespace detail {

// Shuffled index deck that reshuffles in place when exhausted, so every
// sample is consumed once per cycle and the draw order is a pure function of
// the seed.
struct Deck {
    std::vector<std::uint32_t> idx;
    std::size_t pos = 0;
    Rng rng;

    Deck(std::size_t count, Rng r) : rng(r) {
        idx.resize(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = static_cast<std::uint32_t>(i);
        pos = count;  // first draw shuffles
    }

    std::uint32_t next() {
        if (pos >= idx.size()) {
            rng.shuffle(idx);
            pos = 0;
        }
        return idx[pos++];
    }
};

} // namespace detail

// Core minimax loop shared by MT-DANN and both baselines. Target samples feed
// only the domain branch; their label fields are never read. Deterministic:
// the parameter trajectory is a pure function of the datasets and the seed.
inline TrainResult train_adversarial(const std::vector<SpectroSample>& source_train,
                                     const std::vector<SpectroSample>& target_train,
                                     const std::vector<SpectroSample>& source_val,
                                     const TrainConfig& cfg, HeadMask heads = {},
                                     const nn::ArchSpec* arch_override = nullptr) {
    validate(cfg);
    if (source_train.empty()) throw DataError("train: source dataset is empty");
    TrainResult res;
    double lambda_d_max = cfg.lambda_d_max;
    if (target_train.empty() && lambda_d_max != 0) {
        // a single-domain batch makes the adversarial term degenerate
        res.warnings.push_back("no target data; adversarial term disabled");
        lambda_d_max = 0;
    }

    const nn::ArchSpec arch =
        arch_override ? *arch_override : nn::paper_arch(cfg.topology == "per_head_conv");
    res.model.init(arch, cfg.topology, cfg.seed);

    // standardization constants come from the source training split only and
    // are frozen into the model; target inputs go through the same transform
    const auto stats = prep::compute_channel_stats(source_train);
    for (int c = 0; c < arch.in_ch; ++c) {
        res.model.input_mean[c] = static_cast<float>(stats.mean[c]);
        res.model.input_std[c] = static_cast<float>(stats.stddev[c]);
    }

    auto standardized = [&](const std::vector<SpectroSample>& samples) {
        std::vector<nn::TensorF> xs;
        xs.reserve(samples.size());
        for (const auto& s : samples) {
            xs.push_back(s.input);
            res.model.standardize(xs.back());
        }
        return xs;
    };
    const std::vector<nn::TensorF> src_x = standardized(source_train);
    const std::vector<nn::TensorF> tgt_x = standardized(target_train);

    LossWeights weights;
    weights.lambda_s = cfg.lambda_s;
    weights.loc_class = location_class_weights(source_train, cfg.class_balance);

    const Rng root(cfg.seed);
    detail::Deck src_deck(src_x.size(), root.split("batch_src"));
    detail::Deck tgt_deck(tgt_x.size(), root.split("batch_tgt"));

    const std::size_t half = static_cast<std::size_t>(cfg.batch_size) / 2;
    const std::size_t src_per_step = std::min(half, src_x.size());
    const std::size_t tgt_per_step = std::min(half, tgt_x.size());
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, src_x.size() / half);
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);

    nn::ModelWork<float> work;
    std::vector<LabeledInput<float>> src_batch, tgt_batch;
    std::size_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        TrainLogRow row;
        row.epoch = epoch;
        long dom_correct = 0, dom_total = 0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step, ++global_step) {
            const double p =
                total_steps > 1 ? static_cast<double>(global_step) / (total_steps - 1) : 1.0;
            weights.lambda_d = lambda_schedule(lambda_d_max, cfg.lambda_d_ramp, p);
            src_batch.clear();
            for (std::size_t i = 0; i < src_per_step; ++i) {
                const std::uint32_t k = src_deck.next();
                src_batch.push_back({&src_x[k], source_train[k].location_label,
                                     source_train[k].severity_label, 0});
            }
            tgt_batch.clear();
            if (weights.lambda_d != 0)
                for (std::size_t i = 0; i < tgt_per_step; ++i)
                    tgt_batch.push_back({&tgt_x[tgt_deck.next()], 0, -1, 1});
            const StepStats st = objective(res.model, src_batch, tgt_batch, weights, work, heads);
            if (!std::isfinite(st.total))
                throw NumericalError("train: loss diverged at epoch " + std::to_string(epoch) +
                                     " step " + std::to_string(step));
            const double lr = cfg.lr_anneal
                                  ? cfg.learning_rate / std::pow(1.0 + 10.0 * p, 0.75)
                                  : cfg.learning_rate;
            res.model.sgd_update(static_cast<float>(lr), static_cast<float>(cfg.momentum));
            row.loss += st.total;
            row.loss_loc += st.loc_mean;
            row.loss_sev += st.sev_mean;
            row.loss_dom += st.dom_mean;
            dom_correct += st.dom_correct;
            dom_total += st.dom_total;
            row.lambda_d = weights.lambda_d;
        }
        row.loss /= steps_per_epoch;
        row.loss_loc /= steps_per_epoch;
        row.loss_sev /= steps_per_epoch;
        row.loss_dom /= steps_per_epoch;
        if (dom_total > 0) row.domain_acc = static_cast<double>(dom_correct) / dom_total;
        if (!source_val.empty()) {
            const auto rep = ev::compute_metrics(evaluate_outcomes(res.model, source_val));
            row.val_detection = rep.detection;
            row.val_localization = rep.localization;
            row.val_quantification = rep.quantification;
            row.val_within_one = rep.within_one;
        }
        res.log.push_back(row);
    }
    return res;
}

// The Eq. 4/5 trainer: labeled source, unlabeled target, both heads active.
inline TrainResult train(const DomainDataset& source, const DomainDataset& target,
                         const TrainConfig& cfg,
                         const std::vector<SpectroSample>& source_val = {}) {
    return train_adversarial(source.samples, target.samples, source_val, cfg);
}

inline std::string training_log_csv(const std::vector<TrainLogRow>& log) {
    std::string out = "epoch,loss,loss_loc,loss_sev,loss_dom,domain_acc,lambda_d,"
                      "val_detection,val_localization,val_quantification,val_within_one\n";
    char buf[256];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                      r.epoch, r.loss, r.loss_loc, r.loss_sev, r.loss_dom, r.domain_acc,
                      r.lambda_d, r.val_detection, r.val_localization, r.val_quantification,
                      r.val_within_one);
        out += buf;
    }
    return out;
}

} // namespace driveby::mt
