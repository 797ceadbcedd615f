#pragma once

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "driveby/io.hpp"
#include "driveby/threadpool.hpp"
#include "driveby/vbi.hpp"

namespace driveby::vbi {

struct GridConfig {
    std::vector<BridgeSpec> bridges;
    std::vector<VehicleSpec> vehicles;
    std::vector<int> locations = {1, 2, 3};   // damaged location categories
    std::vector<int> severities = {0, 1, 2, 3};
    bool include_healthy = true;
    int iterations = 30;
    std::uint64_t base_seed = 1;
    double sample_rate = 1600.0;
    SimParams sim;
};

inline GridConfig paper_grid(std::uint64_t base_seed = 1) {
    GridConfig g;
    g.bridges = {paper_bridge(1), paper_bridge(2)};
    g.vehicles = {paper_vehicle(1), paper_vehicle(2), paper_vehicle(3)};
    g.base_seed = base_seed;
    return g;
}

inline void validate(const GridConfig& g) {
    if (g.iterations < 0) throw ConfigError("grid: iterations must be >= 0");
    std::set<int> ids;
    for (const auto& b : g.bridges) {
        validate(b);
        if (!ids.insert(b.id).second)
            throw ConfigError("grid: duplicate bridge id " + std::to_string(b.id));
    }
    ids.clear();
    for (const auto& v : g.vehicles) {
        if (g.bridges.empty()) break;
        validate(v, g.bridges.front());
        if (!ids.insert(v.id).second)
            throw ConfigError("grid: duplicate vehicle id " + std::to_string(v.id));
    }
    ids.clear();
    for (int l : g.locations) {
        if (l < 1 || l > 3) throw ConfigError("grid: damaged location categories must be 1..3");
        if (!ids.insert(l).second) throw ConfigError("grid: duplicate location category");
    }
    ids.clear();
    for (int s : g.severities) {
        if (s < 0 || s > 3) throw ConfigError("grid: severity categories must be 0..3");
        if (!ids.insert(s).second) throw ConfigError("grid: duplicate severity category");
    }
}

// Damage cells in a fixed order: healthy first, then locations x severities.
inline std::vector<DamageSpec> damage_cells(const GridConfig& g) {
    std::vector<DamageSpec> cells;
    if (g.include_healthy) cells.push_back(healthy_damage());
    for (int l : g.locations)
        for (int s : g.severities) cells.push_back(grid_damage(l, s));
    return cells;
}

inline std::size_t grid_trial_count(const GridConfig& g) {
    return g.bridges.size() * g.vehicles.size() * damage_cells(g).size() *
           static_cast<std::size_t>(g.iterations);
}

inline std::uint64_t trial_seed(std::uint64_t base, int bridge_id, int vehicle_id,
                                const DamageSpec& d, int iteration) {
    std::uint64_t s = mix64(base);
    s = hash_combine(s, static_cast<std::uint64_t>(bridge_id));
    s = hash_combine(s, static_cast<std::uint64_t>(vehicle_id));
    s = hash_combine(s, static_cast<std::uint64_t>(d.location_category));
    s = hash_combine(s, static_cast<std::uint64_t>(d.location_category == 0 ? 255 : d.severity_category));
    s = hash_combine(s, static_cast<std::uint64_t>(iteration));
    return s;
}

inline std::uint64_t grid_hash(const GridConfig& g) {
    std::string repr = "grid|fs=" + std::to_string(g.sample_rate) + "|it=" +
                       std::to_string(g.iterations) + "|seed=" + std::to_string(g.base_seed) +
                       "|healthy=" + std::to_string(g.include_healthy);
    for (const auto& b : g.bridges)
        repr += "|b" + std::to_string(b.id) + ":" + std::to_string(b.span) + "," +
                std::to_string(b.dominant_freq) + "," + std::to_string(b.damping_ratio) + "," +
                std::to_string(b.beam_mass) + "," + std::to_string(b.n_modes);
    for (const auto& v : g.vehicles)
        repr += "|v" + std::to_string(v.id) + ":" + std::to_string(v.mass) + "," +
                std::to_string(v.axle_spacing) + "," + std::to_string(v.suspension_stiffness) + "," +
                std::to_string(v.suspension_damping) + "," + std::to_string(v.speed);
    for (int l : g.locations) repr += "|l" + std::to_string(l);
    for (int s : g.severities) repr += "|s" + std::to_string(s);
    const auto& p = g.sim;
    repr += "|sim:" + std::to_string(p.n_roughness) + "," + std::to_string(p.roughness_rms) + "," +
            std::to_string(p.lambda_min) + "," + std::to_string(p.lambda_max) + "," +
            std::to_string(p.load_coupling) + "," + std::to_string(p.sprung_fraction) + "," +
            std::to_string(p.tire_freq_hz) + "," + std::to_string(p.tire_damping) + "," +
            std::to_string(p.snr_db) + "," + std::to_string(p.preroll_s) + "," +
            std::to_string(p.ramp_s) + "," + std::to_string(p.gravity) + "," +
            std::to_string(p.roughness_seed);
    return io::fnv1a(repr.data(), repr.size());
}

namespace detail {

inline void write_trial(io::BinWriter& w, const Trial& t) {
    w.u8(static_cast<std::uint8_t>(t.bridge_id));
    w.u8(static_cast<std::uint8_t>(t.vehicle_id));
    w.u8(static_cast<std::uint8_t>(t.damage.location_category));
    w.u8(static_cast<std::uint8_t>(t.damage.location_category == 0 ? 0 : t.damage.severity_category));
    w.f32(static_cast<float>(t.damage.added_mass));
    w.f32(static_cast<float>(t.speed));
    w.f32(static_cast<float>(t.sample_rate));
    w.u64(t.seed);
    w.u32(static_cast<std::uint32_t>(t.n_samples()));
    for (const auto& ch : t.waveforms) w.f32s(ch.data(), ch.size());
}

inline Trial read_trial(io::BinReader& r) {
    Trial t;
    t.bridge_id = r.u8();
    t.vehicle_id = r.u8();
    t.damage.location_category = r.u8();
    t.damage.severity_category = r.u8();
    t.damage.added_mass = r.f32();
    t.speed = r.f32();
    t.sample_rate = r.f32();
    t.seed = r.u64();
    const std::uint32_t n = r.u32();
    t.waveforms.assign(4, std::vector<float>(n));
    for (auto& ch : t.waveforms) r.f32s(ch.data(), ch.size());
    return t;
}

} // namespace detail

// Simulates the whole grid and writes the trial archive plus a plain-text
// manifest next to it. Trials are independent, so chunks run on the pool;
// the writer consumes them in grid order, keeping the file bit-identical
// regardless of worker count.
inline void generate_dataset(const GridConfig& cfg, const std::string& path) {
    validate(cfg);
    const auto cells = damage_cells(cfg);
    struct Cell {
        const BridgeSpec* b;
        const VehicleSpec* v;
        DamageSpec d;
        int iter;
    };
    std::vector<Cell> plan;
    plan.reserve(grid_trial_count(cfg));
    for (const auto& b : cfg.bridges)
        for (const auto& v : cfg.vehicles)
            for (const auto& d : cells)
                for (int it = 0; it < cfg.iterations; ++it) plan.push_back({&b, &v, d, it});

    io::BinWriter w(path);
    w.magic("DBT1");
    w.u16(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(plan.size()));
    const std::size_t chunk = 32;
    std::vector<Trial> buf;
    for (std::size_t start = 0; start < plan.size(); start += chunk) {
        const std::size_t count = std::min(chunk, plan.size() - start);
        buf.assign(count, Trial{});
        ThreadPool::global().parallel_for(count, [&](std::size_t i) {
            const Cell& c = plan[start + i];
            const std::uint64_t seed = trial_seed(cfg.base_seed, c.b->id, c.v->id, c.d, c.iter);
            buf[i] = simulate_trial(*c.b, *c.v, c.d, seed, cfg.sim, cfg.sample_rate);
        });
        for (const auto& t : buf) detail::write_trial(w, t);
    }
    w.commit();

    std::string manifest;
    manifest += "format=DBT1\n";
    manifest += "version=" + std::to_string(kFormatVersion) + "\n";
    manifest += "trials=" + std::to_string(plan.size()) + "\n";
    manifest += "records=" + std::to_string(plan.size() * 4) + "\n";
    manifest += "bridges=" + std::to_string(cfg.bridges.size()) + "\n";
    manifest += "vehicles=" + std::to_string(cfg.vehicles.size()) + "\n";
    manifest += "locations=" + std::to_string(cfg.locations.size()) + "\n";
    manifest += "severities=" + std::to_string(cfg.severities.size()) + "\n";
    manifest += "iterations=" + std::to_string(cfg.iterations) + "\n";
    manifest += "base_seed=" + std::to_string(cfg.base_seed) + "\n";
    manifest += "config_hash=" + io::hex64(grid_hash(cfg)) + "\n";
    io::write_text_atomic(path + ".manifest", manifest);
}

inline std::vector<Trial> load_trials(const std::string& path) {
    io::BinReader r(path);
    r.expect_magic("DBT1");
    r.expect_version(kFormatVersion);
    const std::uint32_t count = r.u32();
    std::vector<Trial> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(detail::read_trial(r));
    return out;
}

} // namespace driveby::vbi
