#pragma once

#include <array>
#include <string>
#include <vector>

#include "driveby/checkpoint.hpp"
#include "driveby/mtdann.hpp"

namespace driveby::mt {

// ---------------------------------------------------------------------------
// MT-CNN: the no-adaptation baseline. Definitionally the same trainer with
// the adversarial weight pinned to zero and no target data, so the location
// and severity parameters are bitwise what MT-DANN would produce under those
// settings. The domain head stays at its init values and is never consulted.
// ---------------------------------------------------------------------------

inline TrainResult train_mtcnn(const DomainDataset& source, const TrainConfig& cfg,
                               const std::vector<SpectroSample>& source_val = {}) {
    TrainConfig c = cfg;
    c.lambda_d_max = 0;
    return train_adversarial(source.samples, {}, source_val, c);
}

// ---------------------------------------------------------------------------
// 2-step DANN: stage 1 adapts a location-only DANN, stage 2 trains one
// severity DANN per damaged-location category, each on the source samples
// with that true location plus the target samples stage 1 routed there.
// ---------------------------------------------------------------------------

struct TwoStepModel {
    nn::ModelF stage1;                    // location + domain heads trained
    std::array<nn::ModelF, 3> stage2;     // severity + domain heads, location 1..3
    std::vector<std::string> warnings;
};

struct TwoStepResult {
    TwoStepModel model;
    std::vector<TrainLogRow> stage1_log;
    std::array<std::vector<TrainLogRow>, 3> stage2_log;
};

inline TwoStepResult train_2step(const DomainDataset& source, const DomainDataset& target,
                                 const TrainConfig& cfg) {
    TwoStepResult res;
    TrainConfig c1 = cfg;
    auto s1 = train_adversarial(source.samples, target.samples, {}, c1,
                                HeadMask{.loc = true, .sev = false});
    res.model.stage1 = std::move(s1.model);
    res.stage1_log = std::move(s1.log);
    res.model.warnings = std::move(s1.warnings);

    // route the (unlabeled) target samples by stage-1 predicted location;
    // healthy-predicted samples bypass stage 2 entirely
    std::array<std::vector<SpectroSample>, 3> routed;
    {
        nn::ModelWork<float> work;
        for (const auto& t : target.samples) {
            const int loc = predict(res.model.stage1, t, work).location_category;
            if (loc != 0) routed[static_cast<std::size_t>(loc - 1)].push_back(t);
        }
    }

    for (int c = 1; c <= 3; ++c) {
        std::vector<SpectroSample> src_c;
        for (const auto& s : source.samples)
            if (s.location_label == c) src_c.push_back(s);
        if (src_c.empty())
            throw DataError("train_2step: no source samples with location " + std::to_string(c));
        auto& tgt_c = routed[static_cast<std::size_t>(c - 1)];
        if (tgt_c.empty())
            res.model.warnings.push_back("stage 2 location " + std::to_string(c) +
                                         ": no routed target samples, training source-only");
        TrainConfig c2 = cfg;
        c2.seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(c));
        auto s2 = train_adversarial(src_c, tgt_c, {}, c2, HeadMask{.loc = false, .sev = true});
        res.model.stage2[static_cast<std::size_t>(c - 1)] = std::move(s2.model);
        res.stage2_log[static_cast<std::size_t>(c - 1)] = std::move(s2.log);
        for (auto& w : s2.warnings)
            res.model.warnings.push_back("stage 2 location " + std::to_string(c) + ": " + w);
    }
    return res;
}

inline int argmax_of(const std::array<float, 4>& probs) {
    int best = 0;
    for (int i = 1; i < 4; ++i)
        if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
    return best;
}

inline Diagnosis predict_two_step(const TwoStepModel& m, const SpectroSample& sample,
                                  nn::ModelWork<float>& work) {
    Diagnosis d = predict(m.stage1, sample, work);
    d.severity_category = -1;
    d.severity_probs = {};
    if (!d.is_damaged) return d;
    const auto& second = m.stage2[static_cast<std::size_t>(d.location_category - 1)];
    const Diagnosis q = predict(second, sample, work);
    d.severity_probs = q.severity_probs;
    d.severity_category = argmax_of(q.severity_probs);
    return d;
}

inline std::vector<ev::Outcome> evaluate_outcomes(const TwoStepModel& m,
                                                  const std::vector<SpectroSample>& samples) {
    nn::ModelWork<float> work;
    std::vector<ev::Outcome> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(outcome_of(predict_two_step(m, s, work), s));
    return out;
}

// Bundle checkpoint: the four stage models embedded back to back.
inline void save_two_step(const std::string& path, TwoStepModel& m, std::uint64_t config_hash) {
    io::BinWriter w(path);
    w.magic("DB2S");
    w.u16(kFormatVersion);
    w.u64(config_hash);
    nn::save_checkpoint(w, m.stage1, config_hash);
    for (auto& s : m.stage2) nn::save_checkpoint(w, s, config_hash);
    w.commit();
}

inline TwoStepModel load_two_step(const std::string& path, std::uint64_t* config_hash = nullptr) {
    io::BinReader r(path);
    r.expect_magic("DB2S");
    r.expect_version(kFormatVersion);
    const std::uint64_t hash = r.u64();
    if (config_hash) *config_hash = hash;
    TwoStepModel m;
    m.stage1 = nn::load_checkpoint(r, path);
    for (auto& s : m.stage2) s = nn::load_checkpoint(r, path);
    return m;
}

} // namespace driveby::mt
