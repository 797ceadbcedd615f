#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "driveby/dataset.hpp"
#include "driveby/dsp.hpp"
#include "driveby/vbi.hpp"

using namespace driveby;
using namespace driveby::vbi;

namespace {

double peak_freq(const Trial& t, double fmin = 1.0, double fmax = 64.0) {
    return dsp::dominant_frequency(t.waveforms, t.sample_rate, fmin, fmax, 8);
}

// Averages the peak estimate across iterations (different roughness draws).
// A single 3.25 s record gives the spectrum only ~0.3 Hz of resolution and a
// lot of realization noise, so single-trial peak positions scatter widely.
double mean_peak(const BridgeSpec& b, const VehicleSpec& v, const DamageSpec& d, int n_seeds,
                 std::uint64_t seed0) {
    double acc = 0;
    for (int i = 0; i < n_seeds; ++i)
        acc += peak_freq(simulate_trial(b, v, d, seed0 + i));
    return acc / n_seeds;
}

// Centroid of the fundamental's band, averaged across iterations. Far less
// scatter than the argmax under the heavy modal damping here, at the cost of
// compressing shifts a little (the band edges stay fixed while the lobe
// moves), so assertions on it use tolerances measured against that behavior.
double mean_centroid(const BridgeSpec& b, const VehicleSpec& v, const DamageSpec& d, int n_seeds,
                     std::uint64_t seed0) {
    double acc = 0;
    for (int i = 0; i < n_seeds; ++i) {
        const auto t = simulate_trial(b, v, d, seed0 + i);
        acc += dsp::band_centroid(t.waveforms, t.sample_rate, 4.5, 10.5, 8);
    }
    return acc / n_seeds;
}

} // namespace

TEST_CASE("trial length and channel layout follow the grid") {
    const auto t = simulate_trial(paper_bridge(1), paper_vehicle(2), healthy_damage(), 9);
    REQUIRE(t.waveforms.size() == 4);
    const int expect_n = static_cast<int>(std::ceil(2.44 / 0.75 * 1600.0));
    REQUIRE(t.n_samples() == expect_n);
    for (const auto& ch : t.waveforms) {
        REQUIRE(static_cast<int>(ch.size()) == expect_n);
        for (float x : ch) REQUIRE(std::isfinite(x));
    }
}

TEST_CASE("same specs and seed give bitwise-identical waveforms") {
    const auto a = simulate_trial(paper_bridge(2), paper_vehicle(3), grid_damage(1, 2), 1234);
    const auto b = simulate_trial(paper_bridge(2), paper_vehicle(3), grid_damage(1, 2), 1234);
    for (int c = 0; c < 4; ++c) REQUIRE(a.waveforms[c] == b.waveforms[c]);
    const auto c = simulate_trial(paper_bridge(2), paper_vehicle(3), grid_damage(1, 2), 1235);
    REQUIRE(a.waveforms[0] != c.waveforms[0]);
}

TEST_CASE("zero added mass reproduces the healthy waveforms exactly") {
    DamageSpec zero_mass;
    zero_mass.location_category = 2;
    zero_mass.severity_category = 3;
    zero_mass.added_mass = 0.0;
    const auto healthy = simulate_trial(paper_bridge(1), paper_vehicle(2), healthy_damage(), 77);
    const auto zeroed = simulate_trial(paper_bridge(1), paper_vehicle(2), zero_mass, 77);
    for (int c = 0; c < 4; ++c) REQUIRE(healthy.waveforms[c] == zeroed.waveforms[c]);
}

TEST_CASE("healthy spectra peak at the bridge dominant frequency") {
    const double f1 = mean_peak(paper_bridge(1), paper_vehicle(2), healthy_damage(), 8, 100);
    REQUIRE(f1 == Catch::Approx(7.7).margin(0.5));
    const double f2 = mean_peak(paper_bridge(2), paper_vehicle(1), healthy_damage(), 8, 200);
    REQUIRE(f2 == Catch::Approx(5.9).margin(0.5));
}

TEST_CASE("midspan mass shifts the peak per the modal-mass formula") {
    const auto b = paper_bridge(1);
    const auto v = paper_vehicle(2);
    const auto d = grid_damage(2, 3);  // 0.91 kg at L/2
    const double expected = b.dominant_freq * std::sqrt(5.0 / 5.91);
    REQUIRE(expected == Catch::Approx(7.083).margin(0.01));
    REQUIRE(damaged_mode_freq(b, d, 1) == Catch::Approx(expected).epsilon(1e-12));
    // the centroid compresses the shift a little (fixed band, moving lobe),
    // so the ratio check gets a tolerance wider than the formula's own error
    const double fh = mean_centroid(b, v, healthy_damage(), 8, 300);
    const double fd = mean_centroid(b, v, d, 8, 300);
    REQUIRE(fd == Catch::Approx(expected).margin(0.45));
    REQUIRE(fd / fh == Catch::Approx(std::sqrt(5.0 / 5.91)).margin(0.035));
}

TEST_CASE("frequency estimate decreases with severity at a fixed location") {
    const auto b = paper_bridge(1);
    const auto v = paper_vehicle(2);
    double prev = mean_centroid(b, v, healthy_damage(), 16, 400);
    for (int sev = 0; sev < 4; ++sev) {
        const double f = mean_centroid(b, v, grid_damage(2, sev), 16, 400);
        REQUIRE(f < prev);
        prev = f;
    }
    // quarter-span placement halves the modal-mass perturbation; check the
    // full healthy-to-worst drop rather than per-step ordering there
    const double q_drop = mean_centroid(b, v, healthy_damage(), 16, 400) -
                          mean_centroid(b, v, grid_damage(1, 3), 16, 400);
    REQUIRE(q_drop > 0.1);
}

TEST_CASE("wheel channels carry more high-frequency energy than chassis") {
    const auto t = simulate_trial(paper_bridge(1), paper_vehicle(2), healthy_damage(), 55);
    double chassis_max = 0, wheel_min = 1;
    for (int c = 0; c < 2; ++c)
        chassis_max = std::max(chassis_max,
                               dsp::highband_energy_fraction(t.waveforms[c], t.sample_rate, 20.0));
    for (int c = 2; c < 4; ++c)
        wheel_min = std::min(wheel_min,
                             dsp::highband_energy_fraction(t.waveforms[c], t.sample_rate, 20.0));
    REQUIRE(wheel_min > chassis_max);
}

TEST_CASE("spec validation rejects out-of-range parameters") {
    auto b = paper_bridge(1);
    b.damping_ratio = 1.5;
    REQUIRE_THROWS_AS(validate(b), ConfigError);
    b = paper_bridge(1);
    b.span = -1;
    REQUIRE_THROWS_AS(validate(b), ConfigError);

    auto v = paper_vehicle(1);
    v.axle_spacing = 3.0;
    REQUIRE_THROWS_AS(validate(v, paper_bridge(1)), ConfigError);

    DamageSpec d;
    d.location_category = 1;
    d.added_mass = 0.0;
    REQUIRE_THROWS_AS(validate(d), ConfigError);
    d.added_mass = 0.5;  // not a grid level
    REQUIRE_THROWS_AS(validate(d), ConfigError);
    REQUIRE_NOTHROW(validate(grid_damage(3, 0)));
    REQUIRE_NOTHROW(validate(healthy_damage()));
}

TEST_CASE("unstable integrator settings raise a divergence error") {
    SimParams sim;
    sim.tire_freq_hz = 4000.0;  // way past the RK4 stability limit at 1600 Hz
    REQUIRE_THROWS_AS(simulate_trial(paper_bridge(1), paper_vehicle(1), healthy_damage(), 1, sim),
                      NumericalError);
}

// ---------------------------------------------------------------------------
// Dataset grid
// ---------------------------------------------------------------------------

namespace {

GridConfig small_grid() {
    GridConfig g;
    g.bridges = {paper_bridge(1)};
    auto v = paper_vehicle(1);
    v.speed = 1.5;  // shorter trials keep the test quick
    g.vehicles = {v};
    g.iterations = 2;
    g.base_seed = 42;
    return g;
}

} // namespace

TEST_CASE("hand-enumerated grid counts") {
    auto g = small_grid();
    REQUIRE(grid_trial_count(g) == 26);  // 1 x 1 x (3*4+1) x 2
    g.iterations = 0;
    REQUIRE(grid_trial_count(g) == 0);
    auto p = paper_grid();
    REQUIRE(grid_trial_count(p) == 2340);  // 2 x 3 x 13 x 30
}

TEST_CASE("generate_dataset writes a loadable archive and manifest") {
    const auto g = small_grid();
    const std::string path = "vbi_small.dbt";
    generate_dataset(g, path);
    const auto trials = load_trials(path);
    REQUIRE(trials.size() == 26);
    int healthy = 0;
    for (const auto& t : trials) {
        REQUIRE(t.waveforms.size() == 4);
        REQUIRE(t.bridge_id == 1);
        if (t.damage.location_category == 0) {
            ++healthy;
            REQUIRE(t.damage.added_mass == 0.0f);
        }
    }
    REQUIRE(healthy == 2);
    const std::string manifest = io::read_text(path + ".manifest");
    REQUIRE(manifest.find("trials=26") != std::string::npos);
    REQUIRE(manifest.find("records=104") != std::string::npos);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".manifest");
}

TEST_CASE("archives are bit-identical across runs") {
    const auto g = small_grid();
    generate_dataset(g, "vbi_a.dbt");
    generate_dataset(g, "vbi_b.dbt");
    REQUIRE(io::file_hash("vbi_a.dbt") == io::file_hash("vbi_b.dbt"));
    for (const auto* p : {"vbi_a.dbt", "vbi_b.dbt"}) {
        std::filesystem::remove(p);
        std::filesystem::remove(std::string(p) + ".manifest");
    }
}

TEST_CASE("empty grid yields a valid empty archive") {
    auto g = small_grid();
    g.iterations = 0;
    generate_dataset(g, "vbi_empty.dbt");
    REQUIRE(load_trials("vbi_empty.dbt").empty());
    std::filesystem::remove("vbi_empty.dbt");
    std::filesystem::remove("vbi_empty.dbt.manifest");
}

TEST_CASE("duplicate grid entries are rejected") {
    auto g = small_grid();
    g.vehicles.push_back(g.vehicles.front());
    REQUIRE_THROWS_AS(validate(g), ConfigError);
    g = small_grid();
    g.locations = {1, 1};
    REQUIRE_THROWS_AS(validate(g), ConfigError);
}

TEST_CASE("trial seeds differ across grid cells") {
    std::set<std::uint64_t> seeds;
    for (int b = 1; b <= 2; ++b)
        for (int l = 0; l <= 3; ++l)
            for (int it = 0; it < 3; ++it) {
                const auto d = l == 0 ? healthy_damage() : grid_damage(l, 1);
                seeds.insert(trial_seed(1, b, 1, d, it));
            }
    REQUIRE(seeds.size() == 2u * 4u * 3u);
}
