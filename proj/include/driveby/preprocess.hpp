#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "driveby/dsp.hpp"
#include "driveby/io.hpp"
#include "driveby/rng.hpp"
#include "driveby/tensor.hpp"
#include "driveby/vbi.hpp"

namespace driveby::prep {

inline constexpr int kChannels = 4;
inline constexpr int kFrames = 64;  // W, time segments
inline constexpr int kBins = 64;    // H, frequency bins
inline constexpr int kWindow = 128;

struct SpectroSample {
    nn::TensorF input;        // kChannels x kFrames x kBins, log(1+|STFT|)
    int location_label = 0;   // 0 = healthy
    int severity_label = -1;  // -1 = absent (healthy only)
    int domain_label = 0;     // 0 = source, 1 = target
    std::uint64_t trial_id = 0;
    std::uint64_t aug_seed = 0;  // 0 = clean copy

    bool healthy() const { return location_label == 0; }
};

inline void validate(const SpectroSample& s) {
    nn::check_shape(s.input, {kChannels, kFrames, kBins}, "spectro sample");
    if (!s.input.all_finite()) throw DataError("spectro sample: non-finite values");
    for (float v : s.input.data)
        if (v < 0) throw DataError("spectro sample: negative log-magnitude");
    if (s.location_label < 0 || s.location_label > 3)
        throw DataError("spectro sample: location label out of range");
    if ((s.location_label == 0) != (s.severity_label < 0))
        throw DataError("spectro sample: healthy iff severity absent violated");
}

struct AugmentConfig {
    bool noise_enabled = true;
    double snr_lo_db = 15.0, snr_hi_db = 30.0;
    double erase_probability = 0.5;
    double erase_lo = 0.02, erase_hi = 0.1;  // span as fraction of trace length
    int augmentations_per_trial = 2;         // extra noisy copies per training trial
};

inline void validate(const AugmentConfig& c) {
    if (c.noise_enabled && (c.snr_lo_db <= 0 || c.snr_hi_db < c.snr_lo_db))
        throw ConfigError("augment: snr range must be positive and ordered");
    if (c.erase_probability < 0 || c.erase_probability > 1)
        throw ConfigError("augment: erase_probability must be in [0,1]");
    if (c.erase_lo <= 0 || c.erase_hi > 0.5 || c.erase_lo > c.erase_hi)
        throw ConfigError("augment: erase span fraction must lie in (0, 0.5]");
    if (c.augmentations_per_trial < 0) throw ConfigError("augment: negative copy count");
}

// ---------------------------------------------------------------------------
// STFT magnitude: Hann window, one-sided with DC kept and Nyquist dropped.
// ---------------------------------------------------------------------------

inline nn::TensorF stft_magnitude(const std::vector<float>& x, int window_len, int hop) {
    const int n = static_cast<int>(x.size());
    if (window_len > n)
        throw DataError("stft: window " + std::to_string(window_len) + " longer than signal " +
                        std::to_string(n));
    if (hop < 1) throw DataError("stft: hop must be >= 1");
    if (!dsp::is_pow2(static_cast<std::size_t>(window_len)))
        throw DataError("stft: window length must be a power of two");
    const int frames = (n - window_len) / hop + 1;
    const int bins = window_len / 2;
    const auto win = dsp::hann_window(window_len);
    nn::TensorF out({frames, bins});
    std::vector<double> re(window_len), im(window_len);
    for (int f = 0; f < frames; ++f) {
        const int off = f * hop;
        for (int i = 0; i < window_len; ++i) {
            re[i] = static_cast<double>(x[off + i]) * win[i];
            im[i] = 0.0;
        }
        dsp::fft_pow2(re, im);
        float* row = out.ptr() + static_cast<std::size_t>(f) * bins;
        for (int k = 0; k < bins; ++k)
            row[k] = static_cast<float>(std::sqrt(re[k] * re[k] + im[k] * im[k]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raw-signal augmentation: white noise at a drawn SNR, then possibly one
// contiguous span zeroed. Labels live elsewhere, so they cannot be touched.
// ---------------------------------------------------------------------------

inline std::vector<float> augment_waveform(const std::vector<float>& x, const AugmentConfig& cfg,
                                           std::uint64_t seed) {
    validate(cfg);
    std::vector<float> y = x;
    if (y.empty()) return y;
    Rng rng(seed);
    if (cfg.noise_enabled) {
        const double snr = rng.uniform(cfg.snr_lo_db, cfg.snr_hi_db);
        double p = 0;
        for (float v : x) p += static_cast<double>(v) * v;
        const double sigma = std::sqrt(p / x.size()) * std::pow(10.0, -snr / 20.0);
        for (auto& v : y) v = static_cast<float>(v + sigma * rng.normal());
    }
    if (rng.uniform() < cfg.erase_probability) {
        const double frac = rng.uniform(cfg.erase_lo, cfg.erase_hi);
        const std::size_t span = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * y.size())));
        const std::size_t start = rng.uniform_index(y.size() - span + 1);
        for (std::size_t i = start; i < start + span; ++i) y[i] = 0.0f;
    }
    return y;
}

// ---------------------------------------------------------------------------
// Trial -> network input. Hop is derived so the trace fills at least 64
// frames; the first 64 frames and 64 bins are kept, then log(1+m).
// ---------------------------------------------------------------------------

inline int derive_hop(int n_samples) {
    const int hop = (n_samples - kWindow) / (kFrames - 1);
    if (hop < 1)
        throw DataError("trial too short for " + std::to_string(kFrames) + " frames: N=" +
                        std::to_string(n_samples));
    return hop;
}

inline SpectroSample make_input(const vbi::Trial& trial,
                                const std::vector<std::vector<float>>& waveforms) {
    if (waveforms.size() != kChannels) throw DataError("make_input: expected 4 channels");
    const int n = static_cast<int>(waveforms[0].size());
    for (const auto& ch : waveforms)
        if (static_cast<int>(ch.size()) != n) throw DataError("make_input: unequal channel lengths");
    const int hop = derive_hop(n);
    SpectroSample s;
    s.input = nn::TensorF({kChannels, kFrames, kBins});
    for (int c = 0; c < kChannels; ++c) {
        const auto mag = stft_magnitude(waveforms[c], kWindow, hop);
        if (mag.shape[0] < kFrames) throw DataError("make_input: trial yields too few frames");
        for (int f = 0; f < kFrames; ++f)
            for (int k = 0; k < kBins; ++k)
                s.input.at(c, f, k) = std::log1p(mag.ptr()[static_cast<std::size_t>(f) * kBins + k]);
    }
    s.location_label = trial.damage.location_category;
    s.severity_label = trial.damage.location_category == 0 ? -1 : trial.damage.severity_category;
    s.trial_id = trial.seed;
    return s;
}

inline SpectroSample make_input(const vbi::Trial& trial) { return make_input(trial, trial.waveforms); }

/// Augmented copy: each channel gets its own derived noise stream.
inline SpectroSample make_augmented_input(const vbi::Trial& trial, const AugmentConfig& cfg,
                                          std::uint64_t aug_seed) {
    std::vector<std::vector<float>> chans(kChannels);
    for (int c = 0; c < kChannels; ++c)
        chans[c] = augment_waveform(trial.waveforms[c], cfg,
                                    hash_combine(aug_seed, static_cast<std::uint64_t>(c)));
    SpectroSample s = make_input(trial, chans);
    s.aug_seed = aug_seed;
    return s;
}

// ---------------------------------------------------------------------------
// Channel statistics (for standardization; computed on the source training
// split only and frozen into the model).
// ---------------------------------------------------------------------------

struct ChannelStats {
    std::vector<double> mean, stddev;
};

inline ChannelStats compute_channel_stats(const std::vector<SpectroSample>& samples) {
    ChannelStats st;
    const int chans = samples.empty() ? kChannels : samples.front().input.shape[0];
    st.mean.assign(chans, 0.0);
    st.stddev.assign(chans, 1.0);
    if (samples.empty()) return st;
    const std::size_t plane = samples.front().input.numel() / static_cast<std::size_t>(chans);
    std::vector<double> sum(chans, 0.0), sum2(chans, 0.0);
    for (const auto& s : samples)
        for (int c = 0; c < chans; ++c) {
            const float* p = s.input.ptr() + static_cast<std::size_t>(c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum[c] += p[i];
                sum2[c] += static_cast<double>(p[i]) * p[i];
            }
        }
    const double n = static_cast<double>(samples.size()) * static_cast<double>(plane);
    for (int c = 0; c < chans; ++c) {
        st.mean[c] = sum[c] / n;
        const double var = std::max(0.0, sum2[c] / n - st.mean[c] * st.mean[c]);
        st.stddev[c] = std::max(1e-8, std::sqrt(var));
    }
    return st;
}

// ---------------------------------------------------------------------------
// DBS1 sample archive + stats sidecar
// ---------------------------------------------------------------------------

inline void save_samples(const std::string& path, const std::vector<SpectroSample>& samples,
                         std::uint64_t config_hash = 0) {
    io::BinWriter w(path);
    w.magic("DBS1");
    w.u16(kFormatVersion);
    w.u64(config_hash);
    w.u32(static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) {
        validate(s);
        w.u8(static_cast<std::uint8_t>(s.location_label));
        w.u8(s.severity_label < 0 ? std::uint8_t{255} : static_cast<std::uint8_t>(s.severity_label));
        w.u8(static_cast<std::uint8_t>(s.domain_label));
        w.u64(s.trial_id);
        w.u64(s.aug_seed);
        w.f32s(s.input.ptr(), s.input.numel());
    }
    w.commit();
    const auto st = compute_channel_stats(samples);
    std::string side = "channels=" + std::to_string(kChannels) + "\n";
    for (int c = 0; c < kChannels; ++c)
        side += "channel" + std::to_string(c) + "=" + std::to_string(st.mean[c]) + " " +
                std::to_string(st.stddev[c]) + "\n";
    io::write_text_atomic(path + ".stats", side);
}

// Header-only read, for cheap staleness checks before loading megabytes.
inline std::uint64_t peek_samples_hash(const std::string& path) {
    io::BinReader r(path);
    r.expect_magic("DBS1");
    r.expect_version(kFormatVersion);
    return r.u64();
}

inline std::vector<SpectroSample> load_samples(const std::string& path,
                                               std::uint64_t* config_hash = nullptr) {
    io::BinReader r(path);
    r.expect_magic("DBS1");
    r.expect_version(kFormatVersion);
    const std::uint64_t h = r.u64();
    if (config_hash) *config_hash = h;
    const std::uint32_t count = r.u32();
    std::vector<SpectroSample> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        SpectroSample s;
        s.location_label = r.u8();
        const std::uint8_t q = r.u8();
        s.severity_label = q == 255 ? -1 : q;
        s.domain_label = r.u8();
        s.trial_id = r.u64();
        s.aug_seed = r.u64();
        s.input = nn::TensorF({kChannels, kFrames, kBins});
        r.f32s(s.input.ptr(), s.input.numel());
        validate(s);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace driveby::prep
