#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "driveby/common.hpp"

namespace driveby::dsp {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT (decimation in time). Sizes here are small
// (128-point STFT frames, zero-padded periodograms), so no fancier plan is
// warranted.
inline void fft_pow2(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    if (!is_pow2(n) || im.size() != n) throw DataError("fft_pow2: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

// Periodic Hann window (DFT-even), the standard choice for STFT analysis.
inline std::vector<double> hann_window(int len) {
    std::vector<double> w(len);
    for (int i = 0; i < len; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / len);
    return w;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Magnitude-squared spectrum of a real signal, zero-padded to a power of two.
// Returns one-sided values; bin spacing fs/nfft via the out parameter.
inline std::vector<double> power_spectrum(const std::vector<float>& x, double fs,
                                          int zero_pad_factor, double* bin_hz) {
    const std::size_t nfft = next_pow2(x.size()) * static_cast<std::size_t>(zero_pad_factor);
    std::vector<double> re(nfft, 0.0), im(nfft, 0.0);
    double mean = 0;
    for (float v : x) mean += v;
    mean /= static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) re[i] = x[i] - mean;
    fft_pow2(re, im);
    std::vector<double> p(nfft / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = re[k] * re[k] + im[k] * im[k];
    if (bin_hz) *bin_hz = fs / static_cast<double>(nfft);
    return p;
}

// Peak frequency of the average power spectrum of several channels inside
// [fmin, fmax], refined by parabolic interpolation on log power. Used as the
// frequency oracle for simulated trials.
inline double dominant_frequency(const std::vector<std::vector<float>>& channels, double fs,
                                 double fmin, double fmax, int zero_pad_factor = 8) {
    if (channels.empty()) throw DataError("dominant_frequency: no channels");
    double bin_hz = 0;
    std::vector<double> acc;
    for (const auto& ch : channels) {
        auto p = power_spectrum(ch, fs, zero_pad_factor, &bin_hz);
        if (acc.empty()) acc.assign(p.size(), 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) acc[k] += p[k];
    }
    const std::size_t k0 = static_cast<std::size_t>(std::ceil(fmin / bin_hz));
    const std::size_t k1 = std::min(acc.size() - 1, static_cast<std::size_t>(fmax / bin_hz));
    if (k0 >= k1) throw DataError("dominant_frequency: empty search band");
    std::size_t kp = k0;
    for (std::size_t k = k0; k <= k1; ++k)
        if (acc[k] > acc[kp]) kp = k;
    if (kp == 0 || kp + 1 >= acc.size()) return bin_hz * static_cast<double>(kp);
    const double eps = 1e-300;
    const double ym = std::log(acc[kp - 1] + eps), y0 = std::log(acc[kp] + eps),
                 yp = std::log(acc[kp + 1] + eps);
    const double denom = ym - 2 * y0 + yp;
    const double delta = (denom == 0) ? 0.0 : 0.5 * (ym - yp) / denom;
    return bin_hz * (static_cast<double>(kp) + std::clamp(delta, -0.5, 0.5));
}

// Power-weighted mean frequency of the averaged channel spectrum inside
// [fmin, fmax]. On short records a resonance shows up as a broad lobe with
// strong realization noise; the centroid averages over that mottle, so it
// tracks shifts of the lobe far more stably than the argmax does.
inline double band_centroid(const std::vector<std::vector<float>>& channels, double fs,
                            double fmin, double fmax, int zero_pad_factor = 8) {
    if (channels.empty()) throw DataError("band_centroid: no channels");
    double bin_hz = 0;
    std::vector<double> acc;
    for (const auto& ch : channels) {
        auto p = power_spectrum(ch, fs, zero_pad_factor, &bin_hz);
        if (acc.empty()) acc.assign(p.size(), 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) acc[k] += p[k];
    }
    const std::size_t k0 = static_cast<std::size_t>(std::ceil(fmin / bin_hz));
    const std::size_t k1 = std::min(acc.size() - 1, static_cast<std::size_t>(fmax / bin_hz));
    if (k0 >= k1) throw DataError("band_centroid: empty band");
    double num = 0, den = 0;
    for (std::size_t k = k0; k <= k1; ++k) {
        num += bin_hz * static_cast<double>(k) * acc[k];
        den += acc[k];
    }
    if (den <= 0) throw DataError("band_centroid: no power in band");
    return num / den;
}

// Fraction of spectral energy above f_cut, excluding the DC bin.
inline double highband_energy_fraction(const std::vector<float>& x, double fs, double f_cut) {
    double bin_hz = 0;
    auto p = power_spectrum(x, fs, 1, &bin_hz);
    double total = 0, high = 0;
    for (std::size_t k = 1; k < p.size(); ++k) {
        total += p[k];
        if (bin_hz * static_cast<double>(k) > f_cut) high += p[k];
    }
    return total > 0 ? high / total : 0.0;
}

} // namespace driveby::dsp
