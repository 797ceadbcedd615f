#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "driveby/common.hpp"
#include "driveby/rng.hpp"

namespace driveby::vbi {

// ---------------------------------------------------------------------------
// Domain specs
// ---------------------------------------------------------------------------

struct BridgeSpec {
    int id = 0;
    double span = 0;           // m
    double dominant_freq = 0;  // Hz, fundamental; mode n sits at n^2 * f1
    double damping_ratio = 0;
    double beam_mass = 0;      // kg, total distributed mass
    int n_modes = 3;
};

struct VehicleSpec {
    int id = 0;
    double mass = 0;                  // kg, whole vehicle
    double axle_spacing = 0;          // m
    double suspension_stiffness = 0;  // N/m per axle
    double suspension_damping = 0;    // N*s/m per axle
    double speed = 0;                 // m/s
};

struct DamageSpec {
    int location_category = 0;  // 0 healthy, 1..3 -> L/4, L/2, 3L/4
    int severity_category = 0;  // 0..3 -> added mass level (meaningless when healthy)
    double added_mass = 0;      // kg
};

inline constexpr std::array<double, 4> kSeverityMass = {0.23, 0.46, 0.68, 0.91};

// Everything the physics needs that the paper never pins down. Values are
// declared defaults, all overridable through the experiment config.
struct SimParams {
    int n_roughness = 480;         // cosine components in the road profile
    double roughness_rms = 2e-4;   // m
    double lambda_min = 0.02;      // m, shortest roughness wavelength
    double lambda_max = 0.8;       // m
    double load_coupling = 12.0;    // roughness-induced inertial axle load factor
    double sprung_fraction = 0.8;  // chassis share of each axle mass
    double tire_freq_hz = 90.0;    // wheel-hop frequency target
    double tire_damping = 0.35;
    double snr_db = 40.0;          // measurement noise
    double preroll_s = 0.5;        // settle on roughness before the bridge
    double ramp_s = 0.2;           // roughness soft-start inside the preroll
    double gravity = 9.81;
    std::uint64_t roughness_seed = 11;  // deck texture seed, mixed with the bridge id
};

struct Trial {
    int bridge_id = 0;
    int vehicle_id = 0;
    DamageSpec damage;
    std::uint64_t seed = 0;
    double sample_rate = 0;
    double speed = 0;
    std::vector<std::vector<float>> waveforms;  // front chassis, back chassis, front wheel, back wheel

    int n_samples() const { return waveforms.empty() ? 0 : static_cast<int>(waveforms[0].size()); }
};

inline void validate(const BridgeSpec& b) {
    if (b.span <= 0) throw ConfigError("bridge " + std::to_string(b.id) + ": span must be > 0");
    if (b.dominant_freq <= 0) throw ConfigError("bridge: dominant_freq must be > 0");
    if (b.damping_ratio <= 0 || b.damping_ratio >= 1)
        throw ConfigError("bridge: damping_ratio must be in (0,1)");
    if (b.beam_mass <= 0) throw ConfigError("bridge: beam_mass must be > 0");
    if (b.n_modes < 1 || b.n_modes > 8)
        throw ConfigError("bridge: n_modes must be in [1,8], got " + std::to_string(b.n_modes));
}

inline void validate(const VehicleSpec& v, const BridgeSpec& b) {
    if (v.mass <= 0) throw ConfigError("vehicle " + std::to_string(v.id) + ": mass must be > 0");
    if (v.speed <= 0) throw ConfigError("vehicle: speed must be > 0");
    if (v.axle_spacing <= 0 || v.axle_spacing >= b.span)
        throw ConfigError("vehicle: axle_spacing must be in (0, span)");
    if (v.suspension_stiffness <= 0 || v.suspension_damping < 0)
        throw ConfigError("vehicle: suspension constants out of range");
}

inline void validate(const DamageSpec& d) {
    if (d.location_category < 0 || d.location_category > 3)
        throw ConfigError("damage: location_category must be in [0,3]");
    if (d.severity_category < 0 || d.severity_category > 3)
        throw ConfigError("damage: severity_category must be in [0,3]");
    const bool healthy = d.location_category == 0;
    if (healthy != (d.added_mass == 0.0))
        throw ConfigError("damage: location 0 requires added_mass 0 and vice versa");
    if (!healthy) {
        bool known = false;
        for (double m : kSeverityMass) known |= std::abs(d.added_mass - m) <= 1e-9;
        if (!known) throw ConfigError("damage: added_mass " + std::to_string(d.added_mass) +
                                      " not a grid severity level");
    }
}

// ---------------------------------------------------------------------------
// Grid defaults from the lab-scale experiment description.
// ---------------------------------------------------------------------------

inline BridgeSpec paper_bridge(int id) {
    BridgeSpec b;
    b.id = id;
    b.span = 2.44;
    b.beam_mass = 10.0;
    b.n_modes = 3;
    if (id == 1) {
        b.dominant_freq = 7.7;
        b.damping_ratio = 0.13;
    } else if (id == 2) {
        b.dominant_freq = 5.9;
        b.damping_ratio = 0.07;
    } else {
        throw ConfigError("paper_bridge: id must be 1 or 2");
    }
    return b;
}

// One suspension build shared by all three vehicles (same hardware, different
// payload): spring rate set for a 2.5 Hz chassis bounce at the middle mass,
// damping at 50% of critical there so the bounce peak stays well below the
// bridge resonance in the spectra.
inline VehicleSpec paper_vehicle(int id) {
    VehicleSpec v;
    v.id = id;
    v.axle_spacing = 0.4;
    v.speed = 0.75;
    const double masses[3] = {4.8, 5.3, 5.7};
    if (id < 1 || id > 3) throw ConfigError("paper_vehicle: id must be 1..3");
    v.mass = masses[id - 1];
    const double ms_ref = 0.8 * (5.3 / 2.0);
    const double wb = 2.0 * std::numbers::pi * 2.5;
    v.suspension_stiffness = ms_ref * wb * wb;
    v.suspension_damping = 2.0 * 0.5 * std::sqrt(v.suspension_stiffness * ms_ref);
    return v;
}

inline DamageSpec healthy_damage() { return DamageSpec{0, 0, 0.0}; }

inline DamageSpec grid_damage(int location_category, int severity_category) {
    DamageSpec d;
    d.location_category = location_category;
    d.severity_category = severity_category;
    d.added_mass = kSeverityMass.at(static_cast<std::size_t>(severity_category));
    return d;
}

// Closed-form frequency shift of mode n under the diagonal modal-mass
// perturbation; the coupled simulation lands very close to this.
inline double damaged_mode_freq(const BridgeSpec& b, const DamageSpec& d, int n) {
    const double f_n = b.dominant_freq * n * n;
    if (d.location_category == 0) return f_n;
    const double x_d = d.location_category * b.span / 4.0;
    const double phi = std::sin(n * std::numbers::pi * x_d / b.span);
    const double m_half = b.beam_mass / 2.0;
    const double m_eff = m_half + d.added_mass * phi * phi;
    return f_n * std::sqrt(m_half / m_eff);
}

// ---------------------------------------------------------------------------
// Simulation internals
// ---------------------------------------------------------------------------

namespace detail {

// Dense solve for the (tiny, SPD) modal mass matrix.
inline void invert_small(std::vector<double>& a, int n) {
    std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i) * n + i] = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<std::size_t>(r) * n + col]) >
                std::abs(a[static_cast<std::size_t>(piv) * n + col]))
                piv = r;
        if (std::abs(a[static_cast<std::size_t>(piv) * n + col]) < 1e-14)
            throw NumericalError("modal mass matrix is singular");
        for (int c = 0; c < n; ++c) {
            std::swap(a[static_cast<std::size_t>(piv) * n + c], a[static_cast<std::size_t>(col) * n + c]);
            std::swap(inv[static_cast<std::size_t>(piv) * n + c], inv[static_cast<std::size_t>(col) * n + c]);
        }
        const double d = a[static_cast<std::size_t>(col) * n + col];
        for (int c = 0; c < n; ++c) {
            a[static_cast<std::size_t>(col) * n + c] /= d;
            inv[static_cast<std::size_t>(col) * n + c] /= d;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[static_cast<std::size_t>(r) * n + col];
            if (f == 0) continue;
            for (int c = 0; c < n; ++c) {
                a[static_cast<std::size_t>(r) * n + c] -= f * a[static_cast<std::size_t>(col) * n + c];
                inv[static_cast<std::size_t>(r) * n + c] -= f * inv[static_cast<std::size_t>(col) * n + c];
            }
        }
    }
    a = std::move(inv);
}

// Road profile as a seeded cosine series. Amplitudes follow A ~ lambda^2,
// attenuating short wavelengths the way worn pavement does; the second
// derivative (what a rolling axle feels as vertical acceleration) then has a
// gently red spectrum that keeps higher bridge modes and wheel hop from
// crowding out the fundamental.
struct RoughnessProfile {
    std::vector<double> k, amp, phase;  // spatial frequency, amplitude, phase
};

inline RoughnessProfile make_profile(int n_comp, double lambda_min, double lambda_max, double rms,
                                     Rng& rng) {
    RoughnessProfile pr;
    pr.k.resize(n_comp);
    pr.amp.resize(n_comp);
    pr.phase.resize(n_comp);
    std::vector<double> lambda(n_comp);
    for (int j = 0; j < n_comp; ++j) {
        const double t = n_comp > 1 ? static_cast<double>(j) / (n_comp - 1) : 0.0;
        lambda[j] = lambda_min * std::pow(lambda_max / lambda_min, t);
        pr.k[j] = 2.0 * std::numbers::pi / lambda[j];
        pr.phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        pr.amp[j] = std::pow(lambda[j], 2.0) * rng.uniform(0.7, 1.3);
    }
    double power = 0;
    for (int j = 0; j < n_comp; ++j) power += 0.5 * pr.amp[j] * pr.amp[j];
    const double scale = power > 0 ? rms / std::sqrt(power) : 0.0;
    for (auto& a : pr.amp) a *= scale;
    return pr;
}

// Profile and its first two spatial derivatives along one axle's path,
// tabulated on the half-step grid the integrator visits.
struct RoughnessTrack {
    std::vector<double> r, rp, rpp;
};

inline RoughnessTrack make_track(const RoughnessProfile& pr, double x0, double dx,
                                 std::size_t nodes) {
    RoughnessTrack tr;
    tr.r.assign(nodes, 0.0);
    tr.rp.assign(nodes, 0.0);
    tr.rpp.assign(nodes, 0.0);
    for (std::size_t j = 0; j < pr.k.size(); ++j) {
        const double a = pr.amp[j], k = pr.k[j];
        double c = std::cos(k * x0 + pr.phase[j]);
        double s = std::sin(k * x0 + pr.phase[j]);
        const double wc = std::cos(k * dx), ws = std::sin(k * dx);
        for (std::size_t i = 0; i < nodes; ++i) {
            tr.r[i] += a * c;
            tr.rp[i] += -a * k * s;
            tr.rpp[i] += -a * k * k * c;
            const double cn = c * wc - s * ws;
            s = c * ws + s * wc;
            c = cn;
        }
    }
    return tr;
}

} // namespace detail

// ---------------------------------------------------------------------------
// simulate_trial: modal bridge + per-axle quarter-car, weakly coupled.
//
// Pass 1 (bridge): coupled modal equations M q'' + C q' + K q = Q(t), where
// M = diag(beam_mass/2) + added_mass * phi_d phi_d^T picks up the attached
// mass (its diagonal is the M_n' of the frequency-shift formula) and Q comes
// from the moving static axle loads plus the roughness-induced inertial load.
// Q never references vehicle state, so the system is block triangular and a
// single RK4 sweep integrates bridge and vehicle together with exact
// mid-step bridge values.
//
// Pass 2 (vehicle): each axle is a 2-DOF sprung/unsprung oscillator riding
// on contact height u(x_a,t) + r(x_a). Channels record mass accelerations.
// ---------------------------------------------------------------------------

inline Trial simulate_trial(const BridgeSpec& bridge, const VehicleSpec& vehicle,
                            const DamageSpec& damage, std::uint64_t seed,
                            const SimParams& sim = {}, double sample_rate = 1600.0) {
    validate(bridge);
    validate(vehicle, bridge);

    const double L = bridge.span, v = vehicle.speed;
    const double fs = sample_rate, h = 1.0 / fs;
    const int n = bridge.n_modes;
    const int N = static_cast<int>(std::ceil(L / v * fs));
    const int preroll_steps = static_cast<int>(std::lround(sim.preroll_s * fs));
    const int total_nodes = preroll_steps + N;
    const double t0 = -static_cast<double>(preroll_steps) * h;

    // modal system: stiffness/damping stay at their healthy values, the
    // attached mass enters the (constant) mass matrix. Damping is
    // stiffness-proportional (Rayleigh beta) anchored so mode 1 has exactly
    // the given ratio; higher modes are progressively more damped, as in a
    // beam whose energy loss grows with curvature rate.
    const double m_half = bridge.beam_mass / 2.0;
    const double w1 = 2.0 * std::numbers::pi * bridge.dominant_freq;
    std::vector<double> kdiag(n), cdiag(n), phi_d(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double w = w1 * (i + 1) * (i + 1);
        kdiag[i] = m_half * w * w;
        cdiag[i] = 2.0 * bridge.damping_ratio * (w / w1) * w * m_half;
    }
    if (damage.location_category != 0) {
        const double x_d = damage.location_category * L / 4.0;
        for (int i = 0; i < n; ++i)
            phi_d[i] = std::sin((i + 1) * std::numbers::pi * x_d / L);
    }
    std::vector<double> minv(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            minv[static_cast<std::size_t>(i) * n + j] =
                (i == j ? m_half : 0.0) + damage.added_mass * phi_d[i] * phi_d[j];
    detail::invert_small(minv, n);

    // vehicle constants (per axle)
    const double m_axle = vehicle.mass / 2.0;
    const double m_s = sim.sprung_fraction * m_axle;
    const double m_u = m_axle - m_s;
    const double k_s = vehicle.suspension_stiffness, c_s = vehicle.suspension_damping;
    const double wt = 2.0 * std::numbers::pi * sim.tire_freq_hz;
    const double k_t = m_u * wt * wt;
    const double c_t = 2.0 * sim.tire_damping * std::sqrt(k_t * m_u);

    // roughness tracks per axle on the half-step grid. The deck texture is a
    // fixed property of the bridge (same surface on every crossing), seeded
    // from roughness_seed + bridge id, never from the trial seed; the trial
    // seed only drives measurement noise. Each axle still draws its own line
    // set: lateral wander decorrelates centimeter wavelengths between wheel
    // passes, and correlated tracks would imprint an axle-spacing
    // interference comb on the bridge forcing that masks the modal peaks the
    // dataset is built around.
    Rng root(seed);
    Rng deck(hash_combine(sim.roughness_seed, static_cast<std::uint64_t>(bridge.id)));
    Rng rough_rng = deck.split("roughness");
    Rng noise_rng = root.split("noise");
    const double dx = v * h / 2.0;
    const std::size_t fine_nodes = 2 * static_cast<std::size_t>(total_nodes) + 2;
    const double offsets[2] = {0.0, vehicle.axle_spacing};
    detail::RoughnessTrack track[2];
    for (int a = 0; a < 2; ++a) {
        const auto profile = detail::make_profile(sim.n_roughness, sim.lambda_min,
                                                  sim.lambda_max, sim.roughness_rms, rough_rng);
        track[a] = detail::make_track(profile, v * t0 - offsets[a], dx, fine_nodes);
    }

    // state: q[0..n), qd[n..2n), then per axle {x_u, v_u, x_c, v_c}
    const int dim = 2 * n + 8;
    std::vector<double> y(dim, 0.0), dy(dim), k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);

    std::vector<std::vector<float>> wave(4, std::vector<float>(N));

    const double pi_over_L = std::numbers::pi / L;
    auto rhs = [&](double t, std::size_t fine_idx, const double* s, double* d,
                   double* accel_out) {
        const double ramp = sim.ramp_s > 0 ? std::clamp((t - t0) / sim.ramp_s, 0.0, 1.0) : 1.0;
        // bridge forcing from both axles
        double q_force[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        double axle_x[2], axle_on[2];
        for (int a = 0; a < 2; ++a) {
            const double x = v * t - offsets[a];
            axle_x[a] = x;
            axle_on[a] = (x >= 0.0 && x <= L) ? 1.0 : 0.0;
            if (axle_on[a] == 0.0) continue;
            const double rpp = ramp * track[a].rpp[fine_idx];
            const double load = -m_axle * (sim.gravity + sim.load_coupling * v * v * rpp);
            const double th = pi_over_L * x;
            double s1 = std::sin(th), c1 = std::cos(th);
            double sn = s1, cn = c1;
            for (int i = 0; i < n; ++i) {
                q_force[i] += sn * load;
                const double sn1 = sn * c1 + cn * s1;
                cn = cn * c1 - sn * s1;
                sn = sn1;
            }
        }
        // modal accelerations
        for (int i = 0; i < n; ++i) {
            d[i] = s[n + i];
            q_force[i] -= cdiag[i] * s[n + i] + kdiag[i] * s[i];
        }
        for (int i = 0; i < n; ++i) {
            double acc = 0;
            for (int j = 0; j < n; ++j) acc += minv[static_cast<std::size_t>(i) * n + j] * q_force[j];
            d[n + i] = acc;
        }
        // axles riding on deflection + roughness
        for (int a = 0; a < 2; ++a) {
            double u = 0, ud = 0;
            if (axle_on[a] != 0.0) {
                const double th = pi_over_L * axle_x[a];
                double s1 = std::sin(th), c1 = std::cos(th);
                double sn = s1, cn = c1;
                for (int i = 0; i < n; ++i) {
                    u += s[i] * sn;
                    ud += s[n + i] * sn + s[i] * v * (i + 1) * pi_over_L * cn;
                    const double sn1 = sn * c1 + cn * s1;
                    cn = cn * c1 - sn * s1;
                    sn = sn1;
                }
            }
            const double zg = u + ramp * track[a].r[fine_idx];
            const double zgd = ud + v * ramp * track[a].rp[fine_idx];
            const int o = 2 * n + 4 * a;
            const double x_u = s[o], v_u = s[o + 1], x_c = s[o + 2], v_c = s[o + 3];
            const double f_tire = k_t * (zg - x_u) + c_t * (zgd - v_u);
            const double f_susp = k_s * (x_c - x_u) + c_s * (v_c - v_u);
            const double a_u = (f_tire + f_susp) / m_u;
            const double a_c = -f_susp / m_s;
            d[o] = v_u;
            d[o + 1] = a_u;
            d[o + 2] = v_c;
            d[o + 3] = a_c;
            if (accel_out) {
                accel_out[a] = a_c;      // chassis channel
                accel_out[2 + a] = a_u;  // wheel channel
            }
        }
    };

    double acc[4];
    for (int step = 0; step < total_nodes; ++step) {
        const double t = t0 + step * h;
        const std::size_t f0 = 2 * static_cast<std::size_t>(step);
        rhs(t, f0, y.data(), k1.data(), acc);
        const int rec = step - preroll_steps;
        if (rec >= 0) {
            wave[0][rec] = static_cast<float>(acc[0]);
            wave[1][rec] = static_cast<float>(acc[1]);
            wave[2][rec] = static_cast<float>(acc[2]);
            wave[3][rec] = static_cast<float>(acc[3]);
        }
        for (int i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, f0 + 1, tmp.data(), k2.data(), nullptr);
        for (int i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(t + 0.5 * h, f0 + 1, tmp.data(), k3.data(), nullptr);
        for (int i = 0; i < dim; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(t + h, f0 + 2, tmp.data(), k4.data(), nullptr);
        double norm2 = 0;
        for (int i = 0; i < dim; ++i) {
            y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
            norm2 += y[i] * y[i];
        }
        if (!std::isfinite(norm2))
            throw NumericalError("simulation diverged at t=" + std::to_string(t) + " s (step size " +
                                 std::to_string(h) + " s, state norm " + std::to_string(std::sqrt(norm2)) +
                                 ")");
    }

    // measurement noise, fixed channel order
    for (auto& ch : wave) {
        double p = 0;
        for (float x : ch) p += static_cast<double>(x) * x;
        const double sigma = std::sqrt(p / ch.size()) * std::pow(10.0, -sim.snr_db / 20.0);
        for (auto& x : ch) x = static_cast<float>(x + sigma * noise_rng.normal());
    }
    for (const auto& ch : wave)
        for (float x : ch)
            if (!std::isfinite(x))
                throw NumericalError("non-finite sample in simulated trial (step size " +
                                     std::to_string(h) + " s)");

    Trial tr;
    tr.bridge_id = bridge.id;
    tr.vehicle_id = vehicle.id;
    tr.damage = damage;
    tr.seed = seed;
    tr.sample_rate = fs;
    tr.speed = v;
    tr.waveforms = std::move(wave);
    return tr;
}

} // namespace driveby::vbi
