#pragma once

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "driveby/dataset.hpp"
#include "driveby/io.hpp"
#include "driveby/mtdann.hpp"
#include "driveby/preprocess.hpp"

namespace driveby::cfg {

// ---------------------------------------------------------------------------
// Plain-text config: `key = value` lines under [section] headers. Full-line
// comments start with # or ;. Unknown sections or keys are hard errors, as
// are duplicates, so a typo can never silently fall back to a default.
// ---------------------------------------------------------------------------

struct Entry {
    std::string key, value;
    int line = 0;
    mutable bool used = false;
};

struct RawSection {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// List values accept spaces, tabs or commas between items.
inline std::vector<std::string> split_ws(const std::string& s) {
    const auto is_sep = [](char c) { return c == ' ' || c == '\t' || c == ','; };
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_sep(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_sep(s[j])) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace detail

inline std::vector<RawSection> parse_ini(const std::string& text) {
    std::vector<RawSection> sections;
    RawSection* cur = nullptr;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string raw =
            text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line[0] == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header");
            const std::string name = detail::trim(line.substr(1, line.size() - 2));
            if (name.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
            for (const auto& s : sections)
                if (s.name == name)
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": duplicate section [" + name + "]");
            sections.push_back(RawSection{name, line_no, {}});
            cur = &sections.back();
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value");
        if (!cur)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": key outside any [section]");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (value.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": [" + cur->name +
                              "] " + key + ": empty value");
        for (const auto& e : cur->entries)
            if (e.key == key)
                throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " +
                                  key + " in [" + cur->name + "]");
        cur->entries.push_back(Entry{key, value, line_no, false});
    }
    return sections;
}

// Typed access to one section; every read marks the entry consumed so the
// caller can reject leftovers afterwards.
class SectionReader {
public:
    SectionReader(const RawSection* sec) : sec_(sec) {}

    const Entry* find(const std::string& key) const {
        if (!sec_) return nullptr;
        for (const auto& e : sec_->entries)
            if (e.key == key) {
                e.used = true;
                return &e;
            }
        return nullptr;
    }

    std::string where(const std::string& key, const Entry* e) const {
        return "[" + (sec_ ? sec_->name : std::string("?")) + "] " + key +
               (e ? " (line " + std::to_string(e->line) + ")" : "");
    }

    double num(const std::string& key, double dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(e->value.c_str(), &end);
        if (errno != 0 || end != e->value.c_str() + e->value.size())
            throw ConfigError(where(key, e) + ": expected number, got '" + e->value + "'");
        return v;
    }

    long long integer(const std::string& key, long long dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        errno = 0;
        char* end = nullptr;
        const long long v = std::strtoll(e->value.c_str(), &end, 10);
        if (errno != 0 || end != e->value.c_str() + e->value.size())
            throw ConfigError(where(key, e) + ": expected integer, got '" + e->value + "'");
        return v;
    }

    std::uint64_t u64(const std::string& key, std::uint64_t dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        errno = 0;
        char* end = nullptr;
        const unsigned long long v = std::strtoull(e->value.c_str(), &end, 10);
        if (errno != 0 || end != e->value.c_str() + e->value.size() || e->value[0] == '-')
            throw ConfigError(where(key, e) + ": expected unsigned integer, got '" + e->value +
                              "'");
        return v;
    }

    bool boolean(const std::string& key, bool dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        if (e->value == "true") return true;
        if (e->value == "false") return false;
        throw ConfigError(where(key, e) + ": expected true or false, got '" + e->value + "'");
    }

    std::string str(const std::string& key, const std::string& dflt) const {
        const Entry* e = find(key);
        return e ? e->value : dflt;
    }

    std::vector<int> int_list(const std::string& key, std::vector<int> dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        std::vector<int> out;
        for (const auto& tok : detail::split_ws(e->value)) {
            errno = 0;
            char* end = nullptr;
            const long v = std::strtol(tok.c_str(), &end, 10);
            if (errno != 0 || end != tok.c_str() + tok.size())
                throw ConfigError(where(key, e) + ": expected integer list, got '" + e->value +
                                  "'");
            out.push_back(static_cast<int>(v));
        }
        if (out.empty()) throw ConfigError(where(key, e) + ": empty list");
        return out;
    }

    std::vector<std::uint64_t> u64_list(const std::string& key,
                                        std::vector<std::uint64_t> dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        std::vector<std::uint64_t> out;
        for (const auto& tok : detail::split_ws(e->value)) {
            errno = 0;
            char* end = nullptr;
            const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
            if (errno != 0 || end != tok.c_str() + tok.size() || tok[0] == '-')
                throw ConfigError(where(key, e) + ": expected unsigned integer list, got '" +
                                  e->value + "'");
            out.push_back(v);
        }
        if (out.empty()) throw ConfigError(where(key, e) + ": empty list");
        return out;
    }

    std::vector<std::string> str_list(const std::string& key,
                                      std::vector<std::string> dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        auto out = detail::split_ws(e->value);
        if (out.empty()) throw ConfigError(where(key, e) + ": empty list");
        return out;
    }

    // "1>2" style source>target bridge pairs
    std::vector<std::pair<int, int>> direction_list(const std::string& key,
                                                    std::vector<std::pair<int, int>> dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        std::vector<std::pair<int, int>> out;
        for (const auto& tok : detail::split_ws(e->value)) {
            int a = 0, b = 0;
            char extra = 0;
            if (std::sscanf(tok.c_str(), "%d>%d%c", &a, &b, &extra) != 2)
                throw ConfigError(where(key, e) + ": expected directions like 1>2, got '" + tok +
                                  "'");
            out.emplace_back(a, b);
        }
        if (out.empty()) throw ConfigError(where(key, e) + ": empty list");
        return out;
    }

    std::pair<int, int> direction(const std::string& key, std::pair<int, int> dflt) const {
        const Entry* e = find(key);
        if (!e) return dflt;
        int a = 0, b = 0;
        char extra = 0;
        if (std::sscanf(e->value.c_str(), "%d>%d%c", &a, &b, &extra) != 2)
            throw ConfigError(where(key, e) + ": expected a direction like 1>2, got '" + e->value +
                              "'");
        return {a, b};
    }

private:
    const RawSection* sec_;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct EvalPlan {
    std::vector<std::pair<int, int>> directions = {{1, 2}, {2, 1}};
    std::vector<int> vehicles = {1, 2, 3};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<std::string> methods = {"mtcnn", "mtdann", "dann2step"};
    std::pair<int, int> embed_direction = {1, 2};
    int embed_vehicle = 1;
    double tsne_perplexity = 30.0;
    int tsne_iterations = 500;
    int probe_epochs = 100;
};

struct ExperimentConfig {
    vbi::GridConfig grid = vbi::paper_grid();
    prep::AugmentConfig augment;
    int holdout_iterations = 6;
    std::string model = "mtdann";
    mt::TrainConfig train;
    EvalPlan eval;
    std::string out_dir = "out";

    std::string canonical_data_text() const;  // [simulate] + [preprocess]
    std::string canonical_train_text() const; // [train] incl. model kind
    std::string canonical_eval_text() const;  // [evaluate]
    std::string canonical_text() const;
    std::uint64_t hash() const;
    void validate() const;
};

inline ExperimentConfig config_from_text(const std::string& text) {
    const auto sections = parse_ini(text);
    const auto find_section = [&](const std::string& name) -> const RawSection* {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    };
    for (const auto& s : sections)
        if (s.name != "simulate" && s.name != "preprocess" && s.name != "train" &&
            s.name != "evaluate" && s.name != "paths")
            throw ConfigError("config line " + std::to_string(s.line) + ": unknown section [" +
                              s.name + "]");

    ExperimentConfig c;

    {
        SectionReader r(find_section("simulate"));
        const auto bridge_ids = r.int_list("bridges", {1, 2});
        c.grid.bridges.clear();
        for (int id : bridge_ids) c.grid.bridges.push_back(vbi::paper_bridge(id));
        const auto vehicle_ids = r.int_list("vehicles", {1, 2, 3});
        c.grid.vehicles.clear();
        for (int id : vehicle_ids) c.grid.vehicles.push_back(vbi::paper_vehicle(id));
        c.grid.locations = r.int_list("locations", c.grid.locations);
        c.grid.severities = r.int_list("severities", c.grid.severities);
        c.grid.include_healthy = r.boolean("include_healthy", c.grid.include_healthy);
        c.grid.iterations = static_cast<int>(r.integer("iterations", c.grid.iterations));
        c.grid.base_seed = r.u64("base_seed", c.grid.base_seed);
        c.grid.sample_rate = r.num("sample_rate", c.grid.sample_rate);
        auto& p = c.grid.sim;
        p.n_roughness = static_cast<int>(r.integer("n_roughness", p.n_roughness));
        p.roughness_rms = r.num("roughness_rms", p.roughness_rms);
        p.lambda_min = r.num("lambda_min", p.lambda_min);
        p.lambda_max = r.num("lambda_max", p.lambda_max);
        p.load_coupling = r.num("load_coupling", p.load_coupling);
        p.sprung_fraction = r.num("sprung_fraction", p.sprung_fraction);
        p.tire_freq_hz = r.num("tire_freq_hz", p.tire_freq_hz);
        p.tire_damping = r.num("tire_damping", p.tire_damping);
        p.snr_db = r.num("snr_db", p.snr_db);
        p.preroll_s = r.num("preroll_s", p.preroll_s);
        p.ramp_s = r.num("ramp_s", p.ramp_s);
        p.gravity = r.num("gravity", p.gravity);
        p.roughness_seed = r.u64("roughness_seed", p.roughness_seed);
    }
    {
        SectionReader r(find_section("preprocess"));
        auto& a = c.augment;
        a.noise_enabled = r.boolean("noise_enabled", a.noise_enabled);
        a.snr_lo_db = r.num("snr_lo_db", a.snr_lo_db);
        a.snr_hi_db = r.num("snr_hi_db", a.snr_hi_db);
        a.erase_probability = r.num("erase_probability", a.erase_probability);
        a.erase_lo = r.num("erase_lo", a.erase_lo);
        a.erase_hi = r.num("erase_hi", a.erase_hi);
        a.augmentations_per_trial =
            static_cast<int>(r.integer("augmentations_per_trial", a.augmentations_per_trial));
        c.holdout_iterations =
            static_cast<int>(r.integer("holdout_iterations", c.holdout_iterations));
    }
    {
        SectionReader r(find_section("train"));
        c.model = r.str("model", c.model);
        auto& t = c.train;
        t.topology = r.str("topology", t.topology);
        t.lambda_s = r.num("lambda_s", t.lambda_s);
        t.lambda_d_max = r.num("lambda_d_max", t.lambda_d_max);
        t.lambda_d_ramp = r.boolean("lambda_d_ramp", t.lambda_d_ramp);
        t.learning_rate = r.num("learning_rate", t.learning_rate);
        t.momentum = r.num("momentum", t.momentum);
        t.lr_anneal = r.boolean("lr_anneal", t.lr_anneal);
        t.batch_size = static_cast<int>(r.integer("batch_size", t.batch_size));
        t.epochs = static_cast<int>(r.integer("epochs", t.epochs));
        t.class_balance = r.str("class_balance", t.class_balance);
        t.seed = r.u64("seed", t.seed);
    }
    {
        SectionReader r(find_section("evaluate"));
        auto& ev = c.eval;
        ev.directions = r.direction_list("directions", ev.directions);
        ev.vehicles = r.int_list("vehicles", ev.vehicles);
        ev.seeds = r.u64_list("seeds", ev.seeds);
        ev.methods = r.str_list("methods", ev.methods);
        ev.embed_direction = r.direction("embed_direction", ev.directions.front());
        ev.embed_vehicle = static_cast<int>(r.integer("embed_vehicle", ev.vehicles.front()));
        ev.tsne_perplexity = r.num("tsne_perplexity", ev.tsne_perplexity);
        ev.tsne_iterations = static_cast<int>(r.integer("tsne_iterations", ev.tsne_iterations));
        ev.probe_epochs = static_cast<int>(r.integer("probe_epochs", ev.probe_epochs));
    }
    {
        SectionReader r(find_section("paths"));
        c.out_dir = r.str("out_dir", c.out_dir);
    }

    for (const auto& s : sections)
        for (const auto& e : s.entries)
            if (!e.used)
                throw ConfigError("config line " + std::to_string(e.line) + ": unknown key " +
                                  e.key + " in [" + s.name + "]");
    return c;
}

inline ExperimentConfig config_from_file(const std::string& path) {
    return config_from_text(io::read_text(path));
}

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

// Canonical serialization of every semantically relevant field. The [paths]
// section is deliberately excluded so the same experiment written to a
// different directory keeps the same hash (reruns stay comparable).
inline std::string ExperimentConfig::canonical_data_text() const {
    std::string s = "driveby config v" + std::to_string(kFormatVersion) + "\n";
    s += "[simulate]\n";
    s += "bridges =";
    for (const auto& b : grid.bridges) s += ' ' + std::to_string(b.id);
    s += "\nvehicles =";
    for (const auto& v : grid.vehicles) s += ' ' + std::to_string(v.id);
    s += "\nlocations =";
    for (int l : grid.locations) s += ' ' + std::to_string(l);
    s += "\nseverities =";
    for (int q : grid.severities) s += ' ' + std::to_string(q);
    s += "\ninclude_healthy = " + std::string(grid.include_healthy ? "true" : "false");
    s += "\niterations = " + std::to_string(grid.iterations);
    s += "\nbase_seed = " + std::to_string(grid.base_seed);
    s += "\nsample_rate = " + detail::fmt_g17(grid.sample_rate);
    const auto& p = grid.sim;
    s += "\nn_roughness = " + std::to_string(p.n_roughness);
    s += "\nroughness_rms = " + detail::fmt_g17(p.roughness_rms);
    s += "\nlambda_min = " + detail::fmt_g17(p.lambda_min);
    s += "\nlambda_max = " + detail::fmt_g17(p.lambda_max);
    s += "\nload_coupling = " + detail::fmt_g17(p.load_coupling);
    s += "\nsprung_fraction = " + detail::fmt_g17(p.sprung_fraction);
    s += "\ntire_freq_hz = " + detail::fmt_g17(p.tire_freq_hz);
    s += "\ntire_damping = " + detail::fmt_g17(p.tire_damping);
    s += "\nsnr_db = " + detail::fmt_g17(p.snr_db);
    s += "\npreroll_s = " + detail::fmt_g17(p.preroll_s);
    s += "\nramp_s = " + detail::fmt_g17(p.ramp_s);
    s += "\ngravity = " + detail::fmt_g17(p.gravity);
    s += "\nroughness_seed = " + std::to_string(p.roughness_seed);
    s += "\n[preprocess]\n";
    s += "noise_enabled = " + std::string(augment.noise_enabled ? "true" : "false");
    s += "\nsnr_lo_db = " + detail::fmt_g17(augment.snr_lo_db);
    s += "\nsnr_hi_db = " + detail::fmt_g17(augment.snr_hi_db);
    s += "\nerase_probability = " + detail::fmt_g17(augment.erase_probability);
    s += "\nerase_lo = " + detail::fmt_g17(augment.erase_lo);
    s += "\nerase_hi = " + detail::fmt_g17(augment.erase_hi);
    s += "\naugmentations_per_trial = " + std::to_string(augment.augmentations_per_trial);
    s += "\nholdout_iterations = " + std::to_string(holdout_iterations);
    s += "\n";
    return s;
}

inline std::string ExperimentConfig::canonical_train_text() const {
    std::string s = "[train]\n";
    s += "model = " + model;
    s += "\ntopology = " + train.topology;
    s += "\nlambda_s = " + detail::fmt_g17(train.lambda_s);
    s += "\nlambda_d_max = " + detail::fmt_g17(train.lambda_d_max);
    s += "\nlambda_d_ramp = " + std::string(train.lambda_d_ramp ? "true" : "false");
    s += "\nlearning_rate = " + detail::fmt_g17(train.learning_rate);
    s += "\nmomentum = " + detail::fmt_g17(train.momentum);
    s += "\nlr_anneal = " + std::string(train.lr_anneal ? "true" : "false");
    s += "\nbatch_size = " + std::to_string(train.batch_size);
    s += "\nepochs = " + std::to_string(train.epochs);
    s += "\nclass_balance = " + train.class_balance;
    s += "\nseed = " + std::to_string(train.seed);
    s += "\n";
    return s;
}

inline std::string ExperimentConfig::canonical_eval_text() const {
    std::string s = "[evaluate]\n";
    s += "directions =";
    for (const auto& d : eval.directions)
        s += ' ' + std::to_string(d.first) + '>' + std::to_string(d.second);
    s += "\nvehicles =";
    for (int v : eval.vehicles) s += ' ' + std::to_string(v);
    s += "\nseeds =";
    for (auto sd : eval.seeds) s += ' ' + std::to_string(sd);
    s += "\nmethods =";
    for (const auto& m : eval.methods) s += ' ' + m;
    s += "\nembed_direction = " + std::to_string(eval.embed_direction.first) + '>' +
         std::to_string(eval.embed_direction.second);
    s += "\nembed_vehicle = " + std::to_string(eval.embed_vehicle);
    s += "\ntsne_perplexity = " + detail::fmt_g17(eval.tsne_perplexity);
    s += "\ntsne_iterations = " + std::to_string(eval.tsne_iterations);
    s += "\nprobe_epochs = " + std::to_string(eval.probe_epochs);
    s += "\n";
    return s;
}

inline std::string ExperimentConfig::canonical_text() const {
    return canonical_data_text() + canonical_train_text() + canonical_eval_text();
}

inline std::uint64_t ExperimentConfig::hash() const {
    const std::string s = canonical_text();
    return io::fnv1a(s.data(), s.size());
}

inline void ExperimentConfig::validate() const {
    vbi::validate(grid);
    if (grid.iterations < 1) throw ConfigError("[simulate] iterations: must be >= 1");
    mt::validate(train);
    if (model != "mtdann" && model != "mtcnn" && model != "dann2step")
        throw ConfigError("[train] model: must be mtdann, mtcnn or dann2step, got '" + model +
                          "'");
    const auto& a = augment;
    if (a.snr_lo_db > a.snr_hi_db) throw ConfigError("[preprocess] snr_lo_db: exceeds snr_hi_db");
    if (a.erase_probability < 0 || a.erase_probability > 1)
        throw ConfigError("[preprocess] erase_probability: must be in [0,1]");
    if (a.erase_lo < 0 || a.erase_lo > a.erase_hi || a.erase_hi > 1)
        throw ConfigError("[preprocess] erase_lo/erase_hi: need 0 <= lo <= hi <= 1");
    if (a.augmentations_per_trial < 0)
        throw ConfigError("[preprocess] augmentations_per_trial: must be >= 0");
    if (holdout_iterations < 1 || holdout_iterations >= grid.iterations)
        throw ConfigError("[preprocess] holdout_iterations: must be in [1, iterations)");

    auto has_bridge = [&](int id) {
        return std::any_of(grid.bridges.begin(), grid.bridges.end(),
                           [&](const vbi::BridgeSpec& b) { return b.id == id; });
    };
    auto has_vehicle = [&](int id) {
        return std::any_of(grid.vehicles.begin(), grid.vehicles.end(),
                           [&](const vbi::VehicleSpec& v) { return v.id == id; });
    };
    if (eval.directions.empty()) throw ConfigError("[evaluate] directions: must not be empty");
    for (const auto& d : eval.directions) {
        if (d.first == d.second)
            throw ConfigError("[evaluate] directions: source and target bridge must differ");
        if (!has_bridge(d.first) || !has_bridge(d.second))
            throw ConfigError("[evaluate] directions: bridge " +
                              std::to_string(has_bridge(d.first) ? d.second : d.first) +
                              " not in [simulate] bridges");
    }
    if (eval.vehicles.empty()) throw ConfigError("[evaluate] vehicles: must not be empty");
    for (int v : eval.vehicles)
        if (!has_vehicle(v))
            throw ConfigError("[evaluate] vehicles: vehicle " + std::to_string(v) +
                              " not in [simulate] vehicles");
    if (eval.seeds.empty()) throw ConfigError("[evaluate] seeds: must not be empty");
    for (const auto& m : eval.methods)
        if (m != "mtcnn" && m != "mtdann" && m != "dann2step")
            throw ConfigError("[evaluate] methods: unknown method '" + m + "'");
    if (eval.methods.empty()) throw ConfigError("[evaluate] methods: must not be empty");
    if (eval.embed_direction.first == eval.embed_direction.second ||
        !has_bridge(eval.embed_direction.first) || !has_bridge(eval.embed_direction.second))
        throw ConfigError("[evaluate] embed_direction: bridges must be distinct grid bridges");
    if (!has_vehicle(eval.embed_vehicle))
        throw ConfigError("[evaluate] embed_vehicle: not in [simulate] vehicles");
    if (eval.tsne_perplexity < 5.0)
        throw ConfigError("[evaluate] tsne_perplexity: must be >= 5");
    if (eval.tsne_iterations < 1)
        throw ConfigError("[evaluate] tsne_iterations: must be >= 1");
    if (eval.probe_epochs < 1) throw ConfigError("[evaluate] probe_epochs: must be >= 1");
    if (out_dir.empty()) throw ConfigError("[paths] out_dir: must not be empty");
}

// First line of every CSV artifact, tying it to its producing experiment.
inline std::string provenance_comment(const ExperimentConfig& c, std::uint64_t seed) {
    return "# driveby v" + std::to_string(kFormatVersion) + " config=" + io::hex64(c.hash()) +
           " seed=" + std::to_string(seed);
}

} // namespace driveby::cfg
