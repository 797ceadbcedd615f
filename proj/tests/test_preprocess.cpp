#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <numbers>

#include "driveby/preprocess.hpp"

using namespace driveby;
using namespace driveby::prep;

namespace {

std::vector<float> sine_wave(double freq, double fs, int n, double amp = 1.0) {
    std::vector<float> x(n);
    for (int i = 0; i < n; ++i)
        x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * i / fs));
    return x;
}

std::vector<float> random_wave(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> x(n);
    for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
    return x;
}

vbi::Trial synthetic_trial(int n, int loc, int sev, std::uint64_t seed = 99) {
    vbi::Trial t;
    t.bridge_id = 1;
    t.vehicle_id = 2;
    t.damage.location_category = loc;
    t.damage.severity_category = sev;
    t.damage.added_mass = loc == 0 ? 0.0 : vbi::kSeverityMass[sev];
    t.seed = seed;
    t.sample_rate = 1600.0;
    t.speed = 0.75;
    for (int c = 0; c < 4; ++c) t.waveforms.push_back(random_wave(n, seed + c));
    return t;
}

} // namespace

TEST_CASE("stft of silence is silent with the right frame count") {
    std::vector<float> x(1000, 0.0f);
    const auto m = stft_magnitude(x, 128, 64);
    REQUIRE(m.shape == std::vector<int>{(1000 - 128) / 64 + 1, 64});
    for (float v : m.data) REQUIRE(v == 0.0f);
}

TEST_CASE("stft rejects windows longer than the signal") {
    std::vector<float> x(100, 1.0f);
    REQUIRE_THROWS_AS(stft_magnitude(x, 128, 32), DataError);
    REQUIRE_THROWS_AS(stft_magnitude(x, 64, 0), DataError);
}

TEST_CASE("bin-centered sinusoid lands on its bin in every frame") {
    // f = k*fs/128 with k=5 is exactly periodic inside the window
    const double fs = 1600.0;
    const auto x = sine_wave(5.0 * fs / 128.0, fs, 1024);
    const auto m = stft_magnitude(x, 128, 32);
    for (int f = 0; f < m.shape[0]; ++f) {
        const float* row = m.ptr() + static_cast<std::size_t>(f) * 64;
        int argmax = 0;
        for (int k = 1; k < 64; ++k)
            if (row[k] > row[argmax]) argmax = k;
        REQUIRE(argmax == 5);
    }
}

TEST_CASE("stft satisfies Parseval frame by frame") {
    const auto x = random_wave(2000, 7);
    const int window = 128, hop = 50;
    const auto m = stft_magnitude(x, window, hop);
    const auto win = dsp::hann_window(window);
    for (int f = 0; f < m.shape[0]; ++f) {
        // sample-wise oracle: full-spectrum energy, DC and Nyquist terms
        double e = 0, x0 = 0, xnyq = 0;
        for (int i = 0; i < window; ++i) {
            const double xw = x[f * hop + i] * win[i];
            e += xw * xw;
            x0 += xw;
            xnyq += (i % 2 == 0) ? xw : -xw;
        }
        const double expected = (window * e + x0 * x0 - xnyq * xnyq) / 2.0;
        const float* row = m.ptr() + static_cast<std::size_t>(f) * 64;
        double got = 0;
        for (int k = 0; k < 64; ++k) got += static_cast<double>(row[k]) * row[k];
        REQUIRE(got == Catch::Approx(expected).epsilon(1e-3));
    }
}

TEST_CASE("augmentation with everything disabled is the identity") {
    AugmentConfig cfg;
    cfg.noise_enabled = false;
    cfg.erase_probability = 0.0;
    const auto x = random_wave(500, 3);
    REQUIRE(augment_waveform(x, cfg, 123) == x);
}

TEST_CASE("injected noise hits the requested snr") {
    AugmentConfig cfg;
    cfg.snr_lo_db = 20.0;
    cfg.snr_hi_db = 20.0;
    cfg.erase_probability = 0.0;
    const auto x = sine_wave(7.7, 1600.0, 20000);
    const auto y = augment_waveform(x, cfg, 5);
    double ps = 0, pn = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ps += static_cast<double>(x[i]) * x[i];
        const double d = static_cast<double>(y[i]) - x[i];
        pn += d * d;
    }
    const double snr = 10.0 * std::log10(ps / pn);
    REQUIRE(snr == Catch::Approx(20.0).margin(1.0));
}

TEST_CASE("erase zeroes one span and leaves the rest untouched") {
    AugmentConfig cfg;
    cfg.noise_enabled = false;
    cfg.erase_probability = 1.0;
    cfg.erase_lo = 0.05;
    cfg.erase_hi = 0.10;
    std::vector<float> x(1000, 1.0f);
    const auto y = augment_waveform(x, cfg, 17);
    std::size_t zeros = 0, first = y.size(), last = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0f) {
            ++zeros;
            first = std::min(first, i);
            last = i;
        } else {
            REQUIRE(y[i] == 1.0f);
        }
    }
    REQUIRE(zeros >= 50);
    REQUIRE(zeros <= 100);
    REQUIRE(last - first + 1 == zeros);  // contiguous
}

TEST_CASE("augmentation is deterministic per seed") {
    AugmentConfig cfg;
    const auto x = random_wave(800, 21);
    REQUIRE(augment_waveform(x, cfg, 9) == augment_waveform(x, cfg, 9));
    REQUIRE(augment_waveform(x, cfg, 9) != augment_waveform(x, cfg, 10));
}

TEST_CASE("augment config validation") {
    AugmentConfig cfg;
    cfg.erase_lo = 0.0;
    REQUIRE_THROWS_AS(validate(cfg), ConfigError);
    cfg = AugmentConfig{};
    cfg.erase_hi = 0.6;
    REQUIRE_THROWS_AS(validate(cfg), ConfigError);
    cfg = AugmentConfig{};
    cfg.snr_lo_db = -5;
    REQUIRE_THROWS_AS(validate(cfg), ConfigError);
    cfg.noise_enabled = false;  // snr range ignored when disabled
    REQUIRE_NOTHROW(validate(cfg));
}

TEST_CASE("make_input emits the 4x64x64 contract") {
    const auto t = synthetic_trial(1000, 2, 1);
    const auto s = make_input(t);
    REQUIRE(s.input.shape == std::vector<int>{4, 64, 64});
    REQUIRE(s.location_label == 2);
    REQUIRE(s.severity_label == 1);
    REQUIRE(s.trial_id == t.seed);
    REQUIRE(s.aug_seed == 0);
    for (float v : s.input.data) {
        REQUIRE(std::isfinite(v));
        REQUIRE(v >= 0.0f);
    }

    const auto healthy = make_input(synthetic_trial(1000, 0, 0));
    REQUIRE(healthy.location_label == 0);
    REQUIRE(healthy.severity_label == -1);
    REQUIRE_NOTHROW(validate(healthy));
}

TEST_CASE("make_input rejects trials too short for 64 frames") {
    REQUIRE_THROWS_AS(make_input(synthetic_trial(150, 0, 0)), DataError);
}

TEST_CASE("a 7.7 Hz channel concentrates near bin 1") {
    auto t = synthetic_trial(5206, 0, 0);
    t.waveforms[0] = sine_wave(7.7, 1600.0, 5206);
    const auto s = make_input(t);
    // average the channel-0 spectrogram over time, argmax over frequency
    std::vector<double> prof(64, 0.0);
    for (int f = 0; f < 64; ++f)
        for (int k = 0; k < 64; ++k) prof[k] += s.input.at(0, f, k);
    int argmax = 0;
    for (int k = 1; k < 64; ++k)
        if (prof[k] > prof[argmax]) argmax = k;
    REQUIRE(std::abs(argmax - 1) <= 1);
}

TEST_CASE("augmented samples keep their labels") {
    const auto t = synthetic_trial(1000, 3, 2);
    AugmentConfig cfg;
    const auto s = make_augmented_input(t, cfg, 41);
    REQUIRE(s.location_label == 3);
    REQUIRE(s.severity_label == 2);
    REQUIRE(s.aug_seed == 41);
    const auto s2 = make_augmented_input(t, cfg, 41);
    REQUIRE(s.input.data == s2.input.data);
}

TEST_CASE("sample validation enforces the invariants") {
    auto s = make_input(synthetic_trial(1000, 1, 0));
    REQUIRE_NOTHROW(validate(s));
    s.severity_label = -1;  // damaged but severity absent
    REQUIRE_THROWS_AS(validate(s), DataError);
    s = make_input(synthetic_trial(1000, 0, 0));
    s.input[0] = -1.0f;
    REQUIRE_THROWS_AS(validate(s), DataError);
}

TEST_CASE("channel stats recover hand-computed moments") {
    std::vector<SpectroSample> samples(2);
    for (auto& s : samples) {
        s.input = nn::TensorF({4, 64, 64});
        s.location_label = 0;
        s.severity_label = -1;
    }
    samples[0].input.zero();
    for (auto& v : samples[1].input.data) v = 2.0f;
    const auto st = compute_channel_stats(samples);
    for (int c = 0; c < 4; ++c) {
        REQUIRE(st.mean[c] == Catch::Approx(1.0));
        REQUIRE(st.stddev[c] == Catch::Approx(1.0));
    }
}

TEST_CASE("dbs1 archive round-trips samples and writes stats") {
    std::vector<SpectroSample> samples;
    samples.push_back(make_input(synthetic_trial(1000, 0, 0, 1)));
    samples.push_back(make_input(synthetic_trial(1000, 2, 3, 2)));
    samples[1].domain_label = 1;
    samples[1].aug_seed = 55;
    const std::string path = "prep_test.dbs";
    save_samples(path, samples);
    const auto loaded = load_samples(path);
    REQUIRE(loaded.size() == 2);
    REQUIRE(loaded[0].severity_label == -1);
    REQUIRE(loaded[1].location_label == 2);
    REQUIRE(loaded[1].severity_label == 3);
    REQUIRE(loaded[1].domain_label == 1);
    REQUIRE(loaded[1].aug_seed == 55);
    for (int i = 0; i < 2; ++i) REQUIRE(loaded[i].input.data == samples[i].input.data);
    REQUIRE(std::filesystem::exists(path + ".stats"));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".stats");
}
