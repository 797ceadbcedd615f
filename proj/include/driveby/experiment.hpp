#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "driveby/baselines.hpp"
#include "driveby/config.hpp"
#include "driveby/dataset.hpp"
#include "driveby/eval.hpp"
#include "driveby/preprocess.hpp"

namespace driveby::xp {

// ---------------------------------------------------------------------------
// Artifact layout under the output directory. Every artifact embeds the hash
// of the configuration slice it depends on, so reruns can tell cached files
// from stale ones without trusting timestamps.
// ---------------------------------------------------------------------------

struct Paths {
    std::string root;

    std::string dataset() const { return root + "/dataset.dbt"; }
    std::string manifest() const { return root + "/dataset.dbt.manifest"; }
    std::string samples(int bridge, int vehicle, bool train) const {
        return root + "/samples/b" + std::to_string(bridge) + "v" + std::to_string(vehicle) +
               (train ? "_train.dbs" : "_test.dbs");
    }
    std::string model_file(const std::string& method, int src, int tgt, int vehicle,
                           std::uint64_t seed) const {
        return root + "/models/" + method + "_s" + std::to_string(src) + "t" +
               std::to_string(tgt) + "v" + std::to_string(vehicle) + "_seed" +
               std::to_string(seed) + (method == "dann2step" ? ".db2s" : ".dnw");
    }
    std::string train_log(const std::string& method, int src, int tgt, int vehicle,
                          std::uint64_t seed) const {
        return root + "/logs/" + method + "_s" + std::to_string(src) + "t" + std::to_string(tgt) +
               "v" + std::to_string(vehicle) + "_seed" + std::to_string(seed) + ".csv";
    }
    std::string reports_csv() const { return root + "/reports/reports.csv"; }
    std::string aggregates_csv() const { return root + "/reports/aggregates.csv"; }
    std::string confusion_csv(const std::string& method, int src, int tgt, int vehicle,
                              std::uint64_t seed) const {
        return root + "/reports/confusion_" + method + "_s" + std::to_string(src) + "t" +
               std::to_string(tgt) + "v" + std::to_string(vehicle) + "_seed" +
               std::to_string(seed) + ".csv";
    }
    std::string embeddings_csv() const { return root + "/reports/embeddings.csv"; }
    std::string probe_csv() const { return root + "/reports/probe.csv"; }
    std::string resolved_config() const { return root + "/config.resolved"; }
};

inline Paths make_paths(const cfg::ExperimentConfig& c) { return Paths{c.out_dir}; }

inline void ensure_dirs(const Paths& p) {
    namespace fs = std::filesystem;
    fs::create_directories(p.root);
    fs::create_directories(p.root + "/samples");
    fs::create_directories(p.root + "/models");
    fs::create_directories(p.root + "/logs");
    fs::create_directories(p.root + "/reports");
}

// ---------------------------------------------------------------------------
// Cache keys. Samples depend only on the data sections; a model additionally
// depends on the training section, its method, its transfer cell and seed.
// ---------------------------------------------------------------------------

inline std::uint64_t data_hash(const cfg::ExperimentConfig& c) {
    const std::string s = c.canonical_data_text();
    return io::fnv1a(s.data(), s.size());
}

inline std::uint64_t model_key(const cfg::ExperimentConfig& c, const std::string& method, int src,
                               int tgt, int vehicle, std::uint64_t seed) {
    cfg::ExperimentConfig k = c;
    k.model = method;
    k.train.seed = seed;
    std::string s = k.canonical_data_text() + k.canonical_train_text();
    s += "cell = " + std::to_string(src) + ">" + std::to_string(tgt) + " v" +
         std::to_string(vehicle) + "\n";
    return io::fnv1a(s.data(), s.size());
}

// ---------------------------------------------------------------------------
// Stage 1: simulation. The manifest records the grid hash; a matching
// manifest plus archive means the dataset is current.
// ---------------------------------------------------------------------------

inline bool dataset_current(const cfg::ExperimentConfig& c, const Paths& p) {
    namespace fs = std::filesystem;
    if (!fs::exists(p.dataset()) || !fs::exists(p.manifest())) return false;
    const std::string want = "config_hash=" + io::hex64(vbi::grid_hash(c.grid));
    const std::string text = io::read_text(p.manifest());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string line =
            text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        if (line == want) return true;
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return false;
}

inline void ensure_dataset(const cfg::ExperimentConfig& c, const Paths& p, std::ostream* log) {
    if (dataset_current(c, p)) {
        if (log) *log << "simulate: dataset current, skipping\n";
        return;
    }
    if (log)
        *log << "simulate: generating " << vbi::grid_trial_count(c.grid) << " trials -> "
             << p.dataset() << "\n";
    vbi::generate_dataset(c.grid, p.dataset());
}

// ---------------------------------------------------------------------------
// Stage 2: preprocessing. One train + one test archive per bridge x vehicle.
// The last holdout_iterations iterations of each damage cell are the clean
// test split; the earlier iterations become the (augmented) training split.
// ---------------------------------------------------------------------------

inline bool samples_current(const cfg::ExperimentConfig& c, const Paths& p) {
    namespace fs = std::filesystem;
    const std::uint64_t want = data_hash(c);
    for (const auto& b : c.grid.bridges)
        for (const auto& v : c.grid.vehicles)
            for (bool train : {true, false}) {
                const std::string path = p.samples(b.id, v.id, train);
                if (!fs::exists(path)) return false;
                if (prep::peek_samples_hash(path) != want) return false;
            }
    return true;
}

inline void ensure_samples(const cfg::ExperimentConfig& c, const Paths& p, std::ostream* log) {
    if (samples_current(c, p)) {
        if (log) *log << "preprocess: sample archives current, skipping\n";
        return;
    }
    ensure_dataset(c, p, log);
    const auto trials = vbi::load_trials(p.dataset());
    const std::uint64_t key = data_hash(c);
    const int train_iters = c.grid.iterations - c.holdout_iterations;

    for (const auto& b : c.grid.bridges)
        for (const auto& v : c.grid.vehicles) {
            std::vector<prep::SpectroSample> train, test;
            // Iteration index = position within each (location, severity)
            // block; the archive preserves grid order.
            std::map<std::pair<int, int>, int> iter_of;
            for (const auto& t : trials) {
                if (t.bridge_id != b.id || t.vehicle_id != v.id) continue;
                const int iter =
                    iter_of[{t.damage.location_category, t.damage.severity_category}]++;
                if (iter < train_iters) {
                    if (c.augment.augmentations_per_trial == 0) {
                        train.push_back(prep::make_input(t));
                    } else {
                        const std::uint64_t base = hash_combine(t.seed, hash_tag("augment"));
                        for (int k = 0; k < c.augment.augmentations_per_trial; ++k)
                            train.push_back(prep::make_augmented_input(
                                t, c.augment, hash_combine(base, static_cast<std::uint64_t>(k))));
                    }
                } else {
                    test.push_back(prep::make_input(t));
                }
            }
            if (train.empty() || test.empty())
                throw DataError("preprocess: empty split for bridge " + std::to_string(b.id) +
                                " vehicle " + std::to_string(v.id));
            prep::save_samples(p.samples(b.id, v.id, true), train, key);
            prep::save_samples(p.samples(b.id, v.id, false), test, key);
            if (log)
                *log << "preprocess: b" << b.id << "v" << v.id << " train=" << train.size()
                     << " test=" << test.size() << "\n";
        }
}

inline std::vector<prep::SpectroSample> load_split(const cfg::ExperimentConfig& c, const Paths& p,
                                                   int bridge, int vehicle, bool train) {
    const std::string path = p.samples(bridge, vehicle, train);
    if (!std::filesystem::exists(path))
        throw DataError("missing sample archive " + path + ": run preprocess first");
    std::uint64_t h = 0;
    auto out = prep::load_samples(path, &h);
    if (h != data_hash(c))
        throw DataError("stale sample archive " + path + ": run preprocess again");
    return out;
}

// ---------------------------------------------------------------------------
// Stage 3: training, cached per (method, cell, seed). A checkpoint whose
// stored key matches is trusted; anything else is retrained and replaced.
// ---------------------------------------------------------------------------

namespace detail {

inline mt::TrainConfig cell_train_config(const cfg::ExperimentConfig& c, std::uint64_t seed) {
    mt::TrainConfig tc = c.train;
    tc.seed = seed;
    return tc;
}

inline void write_train_log(const Paths& p, const cfg::ExperimentConfig& c,
                            const std::string& method, int src, int tgt, int vehicle,
                            std::uint64_t seed, const std::vector<mt::TrainLogRow>& log) {
    io::write_text_atomic(p.train_log(method, src, tgt, vehicle, seed),
                          cfg::provenance_comment(c, seed) + "\n" + mt::training_log_csv(log));
}

} // namespace detail

inline bool model_current(const cfg::ExperimentConfig& c, const Paths& p,
                          const std::string& method, int src, int tgt, int vehicle,
                          std::uint64_t seed) {
    namespace fs = std::filesystem;
    const std::string path = p.model_file(method, src, tgt, vehicle, seed);
    if (!fs::exists(path)) return false;
    std::uint64_t stored = 0;
    try {
        if (method == "dann2step") {
            mt::load_two_step(path, &stored);
        } else {
            nn::load_checkpoint(path, &stored);
        }
    } catch (const DataError&) {
        return false;
    }
    return stored == model_key(c, method, src, tgt, vehicle, seed);
}

// Loads an existing, current checkpoint; never trains.
inline nn::ModelF load_single_model(const cfg::ExperimentConfig& c, const Paths& p,
                                    const std::string& method, int src, int tgt, int vehicle,
                                    std::uint64_t seed) {
    const std::string path = p.model_file(method, src, tgt, vehicle, seed);
    if (!std::filesystem::exists(path))
        throw DataError("missing checkpoint " + path + ": run train first");
    std::uint64_t stored = 0;
    auto model = nn::load_checkpoint(path, &stored);
    if (stored != model_key(c, method, src, tgt, vehicle, seed))
        throw DataError("stale checkpoint " + path + ": run train again");
    return model;
}

inline mt::TwoStepModel load_two_step_model(const cfg::ExperimentConfig& c, const Paths& p,
                                            int src, int tgt, int vehicle, std::uint64_t seed) {
    const std::string path = p.model_file("dann2step", src, tgt, vehicle, seed);
    if (!std::filesystem::exists(path))
        throw DataError("missing checkpoint " + path + ": run train first");
    std::uint64_t stored = 0;
    auto model = mt::load_two_step(path, &stored);
    if (stored != model_key(c, "dann2step", src, tgt, vehicle, seed))
        throw DataError("stale checkpoint " + path + ": run train again");
    return model;
}

// Trains (or reuses) one model for one transfer cell and seed.
inline void ensure_model(const cfg::ExperimentConfig& c, const Paths& p, const std::string& method,
                         int src, int tgt, int vehicle, std::uint64_t seed, std::ostream* log) {
    if (model_current(c, p, method, src, tgt, vehicle, seed)) {
        if (log)
            *log << "train: " << method << " " << src << ">" << tgt << " v" << vehicle << " seed "
                 << seed << " current, skipping\n";
        return;
    }
    ensure_samples(c, p, log);
    const auto src_train = load_split(c, p, src, vehicle, true);
    const auto src_test = load_split(c, p, src, vehicle, false);
    const auto tgt_train = load_split(c, p, tgt, vehicle, true);
    const auto tc = detail::cell_train_config(c, seed);
    const std::uint64_t key = model_key(c, method, src, tgt, vehicle, seed);
    const std::string path = p.model_file(method, src, tgt, vehicle, seed);
    if (log)
        *log << "train: " << method << " " << src << ">" << tgt << " v" << vehicle << " seed "
             << seed << " (" << src_train.size() << " source / " << tgt_train.size()
             << " target samples)\n";

    if (method == "mtcnn") {
        auto res = mt::train_mtcnn({src_train, 0}, tc, src_test);
        nn::save_checkpoint(path, res.model, key);
        detail::write_train_log(p, c, method, src, tgt, vehicle, seed, res.log);
        for (const auto& w : res.warnings)
            if (log) *log << "train: warning: " << w << "\n";
    } else if (method == "mtdann") {
        auto res = mt::train({src_train, 0}, mt::as_target(tgt_train), tc, src_test);
        nn::save_checkpoint(path, res.model, key);
        detail::write_train_log(p, c, method, src, tgt, vehicle, seed, res.log);
        for (const auto& w : res.warnings)
            if (log) *log << "train: warning: " << w << "\n";
    } else if (method == "dann2step") {
        auto res = mt::train_2step({src_train, 0}, mt::as_target(tgt_train), tc);
        mt::save_two_step(path, res.model, key);
        detail::write_train_log(p, c, method, src, tgt, vehicle, seed, res.stage1_log);
        for (const auto& w : res.model.warnings)
            if (log) *log << "train: warning: " << w << "\n";
    } else {
        throw ConfigError("train: unknown method '" + method + "'");
    }
}

// ---------------------------------------------------------------------------
// Stage 4: evaluation over the configured grid of directions, vehicles,
// seeds and methods. Requires checkpoints; never trains.
// ---------------------------------------------------------------------------

struct SuiteResult {
    std::vector<ev::EvalReport> reports;
    std::vector<ev::AggregateRow> aggregates;
};

inline SuiteResult run_suite(const cfg::ExperimentConfig& c, const Paths& p, std::ostream* log) {
    SuiteResult out;
    for (const auto& [src, tgt] : c.eval.directions)
        for (int vehicle : c.eval.vehicles) {
            const auto tgt_test = load_split(c, p, tgt, vehicle, false);
            for (std::uint64_t seed : c.eval.seeds)
                for (const auto& method : c.eval.methods) {
                    std::vector<ev::Outcome> outcomes;
                    if (method == "dann2step") {
                        auto model = load_two_step_model(c, p, src, tgt, vehicle, seed);
                        outcomes = mt::evaluate_outcomes(model, tgt_test);
                    } else {
                        auto model = load_single_model(c, p, method, src, tgt, vehicle, seed);
                        outcomes = mt::evaluate_outcomes(model, tgt_test);
                    }
                    ev::EvalReport r = ev::compute_metrics(outcomes);
                    r.method = method;
                    r.source_bridge = src;
                    r.target_bridge = tgt;
                    r.vehicle = vehicle;
                    r.seed = seed;
                    io::write_text_atomic(
                        p.confusion_csv(method, src, tgt, vehicle, seed),
                        ev::confusion_csv(r, cfg::provenance_comment(c, seed)));
                    if (log)
                        *log << "evaluate: " << method << " " << src << ">" << tgt << " v"
                             << vehicle << " seed " << seed << " det=" << r.detection
                             << " loc=" << r.localization << " quant=" << r.quantification
                             << " near=" << r.within_one << "\n";
                    out.reports.push_back(std::move(r));
                }
        }
    out.aggregates = ev::aggregate_reports(out.reports);
    const std::string prov = cfg::provenance_comment(c, c.grid.base_seed);
    io::write_text_atomic(p.reports_csv(), ev::reports_csv(out.reports, prov));
    io::write_text_atomic(p.aggregates_csv(), ev::aggregates_csv(out.aggregates, prov));
    return out;
}

// ---------------------------------------------------------------------------
// Stage 5: embeddings. Adapted vs unadapted features for one transfer cell:
// t-SNE coordinates, the domain-confusion probe, and the cross-domain
// nearest-neighbor agreement.
// ---------------------------------------------------------------------------

struct EmbedRow {
    std::string method;
    double probe_accuracy = 0;
    double nn_agreement = 0;
    double kl_after_exaggeration = 0;
    double kl_final = 0;
};

struct EmbedResult {
    std::vector<EmbedRow> rows; // mtcnn then mtdann
};

inline EmbedResult run_embed(const cfg::ExperimentConfig& c, const Paths& p, std::ostream* log) {
    const auto [src, tgt] = c.eval.embed_direction;
    const int vehicle = c.eval.embed_vehicle;
    const std::uint64_t seed = c.eval.seeds.front();

    auto src_test = load_split(c, p, src, vehicle, false);
    auto tgt_test = load_split(c, p, tgt, vehicle, false);
    for (auto& s : src_test) s.domain_label = 0;
    for (auto& s : tgt_test) s.domain_label = 1;
    std::vector<prep::SpectroSample> both;
    both.reserve(src_test.size() + tgt_test.size());
    for (auto& s : src_test) both.push_back(std::move(s));
    for (auto& s : tgt_test) both.push_back(std::move(s));

    EmbedResult out;
    std::string csv_rows;
    for (const std::string method : {"mtcnn", "mtdann"}) {
        auto model = load_single_model(c, p, method, src, tgt, vehicle, seed);
        const auto emb = ev::extract_embeddings(model, both);

        ev::ProbeConfig pc;
        pc.epochs = c.eval.probe_epochs;
        pc.seed = hash_combine(seed, hash_tag("probe"));
        const double probe = ev::domain_probe_accuracy(emb, pc);

        ev::TsneConfig tc;
        tc.perplexity = c.eval.tsne_perplexity;
        tc.iterations = c.eval.tsne_iterations;
        tc.seed = hash_combine(seed, hash_tag("tsne"));
        const auto ts = ev::tsne(emb.points, tc);
        const double agree = ev::cross_domain_nn_agreement(ts.y, emb.domain, emb.location);

        out.rows.push_back(EmbedRow{method, probe, agree, ts.kl_after_exaggeration, ts.kl_final});
        if (log)
            *log << "embed: " << method << " probe=" << probe << " nn_agreement=" << agree
                 << " kl=" << ts.kl_final << "\n";

        std::string block = ev::embeddings_csv(ts.y, emb, method, "");
        // keep a single header across both methods
        if (!csv_rows.empty()) block = block.substr(block.find('\n') + 1);
        csv_rows += block;
    }
    io::write_text_atomic(p.embeddings_csv(),
                          cfg::provenance_comment(c, seed) + "\n" + csv_rows);
    std::string probe_text = cfg::provenance_comment(c, seed) +
                             "\nmethod,probe_accuracy,nn_agreement,kl_after_exaggeration,kl_final\n";
    for (const auto& r : out.rows)
        probe_text += r.method + ',' + ev::detail::fmt_metric(r.probe_accuracy) + ',' +
                      ev::detail::fmt_metric(r.nn_agreement) + ',' +
                      ev::detail::fmt_metric(r.kl_after_exaggeration) + ',' +
                      ev::detail::fmt_metric(r.kl_final) + '\n';
    io::write_text_atomic(p.probe_csv(), probe_text);
    return out;
}

// Records the exact configuration (canonical form plus hash) an output tree
// was produced from.
inline void write_resolved_config(const cfg::ExperimentConfig& c, const Paths& p) {
    io::write_text_atomic(p.resolved_config(),
                          "# config_hash=" + io::hex64(c.hash()) + "\n" + c.canonical_text());
}

} // namespace driveby::xp
