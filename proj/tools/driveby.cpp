#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "driveby/config.hpp"
#include "driveby/experiment.hpp"
#include "driveby/fdcheck.hpp"

using namespace driveby;

namespace {

struct Options {
    std::string config_path;
    std::string out_dir;
    std::string model;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool dry_run = false;
};

// CLI overrides land before validation and hashing, so every artifact keyed
// by the config hash reflects what actually ran.
cfg::ExperimentConfig load_config(const Options& o) {
    if (o.config_path.empty()) throw ConfigError("--config PATH is required for this command");
    cfg::ExperimentConfig c = cfg::config_from_file(o.config_path);
    if (!o.out_dir.empty()) c.out_dir = o.out_dir;
    if (o.seed_given) {
        c.grid.base_seed = o.seed;
        c.train.seed = o.seed;
    }
    if (!o.model.empty()) c.model = o.model;
    c.validate();
    return c;
}

void print_aggregates(const std::vector<ev::AggregateRow>& rows) {
    std::printf("%-10s %8s %9s %10s %14s %11s\n", "method", "reports", "detection",
                "localization", "quantification", "within_one");
    for (const auto& a : rows)
        std::printf("%-10s %8d %9.4f %10.4f %14.4f %11.4f\n", a.method.c_str(), a.n_reports,
                    a.detection, a.localization, a.quantification, a.within_one);
}

int cmd_simulate(const Options& o) {
    const auto c = load_config(o);
    if (o.dry_run) {
        std::cout << "config ok (hash " << io::hex64(c.hash()) << ")\n";
        return 0;
    }
    const auto p = xp::make_paths(c);
    xp::ensure_dirs(p);
    xp::write_resolved_config(c, p);
    xp::ensure_dataset(c, p, &std::cout);
    std::cout << "dataset: " << p.dataset() << " (" << vbi::grid_trial_count(c.grid)
              << " trials, " << 4 * vbi::grid_trial_count(c.grid) << " records)\n";
    return 0;
}

int cmd_preprocess(const Options& o) {
    const auto c = load_config(o);
    if (o.dry_run) {
        std::cout << "config ok (hash " << io::hex64(c.hash()) << ")\n";
        return 0;
    }
    const auto p = xp::make_paths(c);
    xp::ensure_dirs(p);
    xp::write_resolved_config(c, p);
    xp::ensure_samples(c, p, &std::cout);
    return 0;
}

int cmd_train(const Options& o) {
    const auto c = load_config(o);
    if (o.dry_run) {
        std::cout << "config ok (hash " << io::hex64(c.hash()) << ")\n";
        return 0;
    }
    const auto p = xp::make_paths(c);
    xp::ensure_dirs(p);
    xp::write_resolved_config(c, p);
    for (const auto& [src, tgt] : c.eval.directions)
        for (int vehicle : c.eval.vehicles)
            for (std::uint64_t seed : c.eval.seeds)
                xp::ensure_model(c, p, c.model, src, tgt, vehicle, seed, &std::cout);
    return 0;
}

int cmd_evaluate(const Options& o) {
    const auto c = load_config(o);
    if (o.dry_run) {
        std::cout << "config ok (hash " << io::hex64(c.hash()) << ")\n";
        return 0;
    }
    const auto p = xp::make_paths(c);
    xp::ensure_dirs(p);
    xp::write_resolved_config(c, p);
    const auto suite = xp::run_suite(c, p, &std::cout);
    std::cout << "wrote " << p.reports_csv() << "\n";
    print_aggregates(suite.aggregates);
    return 0;
}

int cmd_embed(const Options& o) {
    const auto c = load_config(o);
    if (o.dry_run) {
        std::cout << "config ok (hash " << io::hex64(c.hash()) << ")\n";
        return 0;
    }
    const auto p = xp::make_paths(c);
    xp::ensure_dirs(p);
    xp::write_resolved_config(c, p);
    xp::run_embed(c, p, &std::cout);
    std::cout << "wrote " << p.embeddings_csv() << " and " << p.probe_csv() << "\n";
    return 0;
}

int cmd_report(const Options& o) {
    const auto c = load_config(o);
    if (o.dry_run) {
        std::cout << "config ok (hash " << io::hex64(c.hash()) << ")\n";
        return 0;
    }
    const auto p = xp::make_paths(c);
    if (!std::filesystem::exists(p.reports_csv()))
        throw DataError("missing " + p.reports_csv() + ": run evaluate first");
    const auto reports = ev::parse_reports_csv(io::read_text(p.reports_csv()));
    const auto aggregates = ev::aggregate_reports(reports);
    const std::string prov = cfg::provenance_comment(c, c.grid.base_seed);
    io::write_text_atomic(p.aggregates_csv(), ev::aggregates_csv(aggregates, prov));
    // long-format copy of the per-cell metrics, one (cell, metric) per row
    std::string plot = prov + "\nmethod,source,target,vehicle,seed,metric,value\n";
    for (const auto& r : reports) {
        const std::pair<const char*, double> metrics[] = {{"detection", r.detection},
                                                          {"localization", r.localization},
                                                          {"quantification", r.quantification},
                                                          {"within_one", r.within_one}};
        for (const auto& [name, value] : metrics) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%llu,%s,%.10g\n", r.method.c_str(),
                          r.source_bridge, r.target_bridge, r.vehicle,
                          static_cast<unsigned long long>(r.seed), name, value);
            plot += buf;
        }
    }
    io::write_text_atomic(p.root + "/reports/plot_metrics.csv", plot);
    print_aggregates(aggregates);
    return 0;
}

int cmd_gradcheck(const Options& o) {
    if (o.dry_run) return 0;
    const auto rows = fd::run_gradcheck();
    bool all_pass = true;
    for (const auto& r : rows) {
        std::printf("%-11s max_rel=%-12.3e tol=%-8.0e %s\n", r.name.c_str(), r.max_rel,
                    r.tolerance, r.pass() ? "pass" : "FAIL");
        all_pass &= r.pass();
    }
    if (!all_pass) throw NumericalError("gradcheck failed");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"drive-by bridge damage diagnosis pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    app.add_option("--config", o.config_path, "experiment config file");
    app.add_option("--out", o.out_dir, "output directory (overrides [paths] out_dir)");
    auto* seed_opt =
        app.add_option("--seed", o.seed, "base seed (overrides [simulate] and [train] seeds)");
    app.add_option("--model", o.model, "model kind: mtdann, mtcnn or dann2step");
    app.add_flag("--dry-run", o.dry_run, "validate config and exit");

    auto* sim = app.add_subcommand("simulate", "generate the trial dataset archive");
    auto* pre = app.add_subcommand("preprocess", "build spectrogram sample archives");
    auto* trn = app.add_subcommand("train", "train the selected model over the evaluation grid");
    auto* evl = app.add_subcommand("evaluate", "score trained models on the target bridges");
    auto* emb = app.add_subcommand("embed", "feature embeddings, t-SNE and domain probe");
    auto* grd = app.add_subcommand("gradcheck", "finite-difference checks per layer");
    auto* rep = app.add_subcommand("report", "aggregate written reports into tables");

    CLI11_PARSE(app, argc, argv);
    o.seed_given = seed_opt->count() > 0;

    try {
        if (sim->parsed()) return cmd_simulate(o);
        if (pre->parsed()) return cmd_preprocess(o);
        if (trn->parsed()) return cmd_train(o);
        if (evl->parsed()) return cmd_evaluate(o);
        if (emb->parsed()) return cmd_embed(o);
        if (grd->parsed()) return cmd_gradcheck(o);
        if (rep->parsed()) return cmd_report(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
