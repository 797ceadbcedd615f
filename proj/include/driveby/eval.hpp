#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "driveby/metrics.hpp"
#include "driveby/mtdann.hpp"
#include "driveby/tsne.hpp"

namespace driveby::ev {

// ---------------------------------------------------------------------------
// Feature embeddings: flattened trunk activations with ground-truth labels,
// the raw material for the domain-confusion probe and the 2-D scatter.
// ---------------------------------------------------------------------------

struct EmbeddingSet {
    nn::TensorF points;        // M x feat_dim
    std::vector<int> domain;   // 0 source bridge, 1 target bridge
    std::vector<int> location; // true location category, 0 = healthy
};

inline EmbeddingSet extract_embeddings(const nn::ModelF& model,
                                       const std::vector<prep::SpectroSample>& samples) {
    if (samples.empty()) throw DataError("embeddings: no samples");
    nn::ModelWork<float> work;
    EmbeddingSet out;
    const int m = static_cast<int>(samples.size());
    int dim = 0;
    nn::TensorF x;
    for (int i = 0; i < m; ++i) {
        x = samples[i].input;
        model.standardize(x);
        const auto& feat = model.forward_features(x, work);
        if (i == 0) {
            dim = static_cast<int>(feat.numel());
            out.points = nn::TensorF({m, dim});
        }
        std::copy(feat.ptr(), feat.ptr() + dim, out.points.ptr() + static_cast<std::size_t>(i) * dim);
        out.domain.push_back(samples[i].domain_label);
        out.location.push_back(samples[i].location_label);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Domain-confusion probe: a fresh two-layer classifier trained to tell the
// domains apart from frozen features. High held-out accuracy means the
// feature space still separates the bridges; chance level means aligned.
// ---------------------------------------------------------------------------

struct ProbeConfig {
    int hidden = 100;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs = 100;
    double train_fraction = 0.7;
    std::uint64_t seed = 1;
};

inline double domain_probe_accuracy(const EmbeddingSet& e, const ProbeConfig& cfg) {
    const int m = e.points.shape[0], d = e.points.shape[1];
    if (m < 10) throw DataError("probe: need at least 10 points, got " + std::to_string(m));
    if (static_cast<int>(e.domain.size()) != m) throw DataError("probe: domain label count mismatch");
    if (cfg.train_fraction <= 0 || cfg.train_fraction >= 1)
        throw ConfigError("probe: train_fraction must lie in (0, 1)");

    Rng root{cfg.seed};
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    {
        auto r = root.split("probe_split");
        r.shuffle(order);
    }
    const int n_train =
        std::clamp(static_cast<int>(std::lround(cfg.train_fraction * m)), 1, m - 1);

    // Standardize every feature column by the training split's statistics.
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (int t = 0; t < n_train; ++t) {
        const float* row = e.points.ptr() + static_cast<std::size_t>(order[t]) * d;
        for (int k = 0; k < d; ++k) mu[k] += row[k];
    }
    for (int k = 0; k < d; ++k) mu[k] /= n_train;
    for (int t = 0; t < n_train; ++t) {
        const float* row = e.points.ptr() + static_cast<std::size_t>(order[t]) * d;
        for (int k = 0; k < d; ++k) {
            const double c = row[k] - mu[k];
            sd[k] += c * c;
        }
    }
    for (int k = 0; k < d; ++k) sd[k] = std::max(std::sqrt(sd[k] / n_train), 1e-6);
    nn::TensorF z({m, d});
    for (int i = 0; i < m; ++i) {
        const float* src = e.points.ptr() + static_cast<std::size_t>(i) * d;
        float* dst = z.ptr() + static_cast<std::size_t>(i) * d;
        for (int k = 0; k < d; ++k) dst[k] = static_cast<float>((src[k] - mu[k]) / sd[k]);
    }

    nn::LayerParams<float> fc1, fc2;
    fc1.init_shapes({cfg.hidden, d}, {cfg.hidden});
    fc2.init_shapes({2, cfg.hidden}, {2});
    {
        auto r = root.split("probe_fc1");
        nn::kaiming_init(fc1, d, r);
    }
    {
        auto r = root.split("probe_fc2");
        nn::kaiming_init(fc2, cfg.hidden, r);
    }

    std::vector<int> train_idx(order.begin(), order.begin() + n_train);
    auto batch_rng = root.split("probe_batches");
    nn::TensorF x({d}), pre1, act1, logits, g_logits, g_act1, g_pre1;
    const float lr = static_cast<float>(cfg.learning_rate);
    const float mom = static_cast<float>(cfg.momentum);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(train_idx);
        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int bn = std::min(cfg.batch_size, n_train - start);
            for (int b = 0; b < bn; ++b) {
                const int i = train_idx[start + b];
                std::copy(z.ptr() + static_cast<std::size_t>(i) * d,
                          z.ptr() + static_cast<std::size_t>(i + 1) * d, x.ptr());
                nn::linear_forward(x, fc1, pre1);
                nn::relu_forward(pre1, act1);
                nn::linear_forward(act1, fc2, logits);
                nn::softmax_cross_entropy(logits, e.domain[i], g_logits);
                for (auto& g : g_logits.data) g /= static_cast<float>(bn);
                nn::linear_backward(fc2, act1, g_logits, &g_act1);
                nn::relu_backward(pre1, g_act1, g_pre1);
                nn::linear_backward<float>(fc1, x, g_pre1, nullptr);
            }
            nn::sgd_step(fc1, lr, mom);
            nn::sgd_step(fc2, lr, mom);
        }
    }

    int correct = 0;
    for (int t = n_train; t < m; ++t) {
        const int i = order[t];
        std::copy(z.ptr() + static_cast<std::size_t>(i) * d,
                  z.ptr() + static_cast<std::size_t>(i + 1) * d, x.ptr());
        nn::linear_forward(x, fc1, pre1);
        nn::relu_forward(pre1, act1);
        nn::linear_forward(act1, fc2, logits);
        if ((logits[1] > logits[0] ? 1 : 0) == e.domain[i]) ++correct;
    }
    return static_cast<double>(correct) / (m - n_train);
}

// ---------------------------------------------------------------------------
// Scatter diagnostics: for each embedded point, does its nearest neighbor
// from the other domain carry the same location label? Aligned features
// should push this up relative to unadapted ones.
// ---------------------------------------------------------------------------

inline double cross_domain_nn_agreement(const std::vector<std::array<double, 2>>& y,
                                        const std::vector<int>& domain,
                                        const std::vector<int>& location) {
    const std::size_t m = y.size();
    if (domain.size() != m || location.size() != m)
        throw DataError("nn agreement: label count mismatch");
    int counted = 0, agree = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_j = -1;
        for (std::size_t j = 0; j < m; ++j) {
            if (domain[j] == domain[i]) continue;
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            const double dist = dx * dx + dy * dy;
            if (dist < best) {
                best = dist;
                best_j = static_cast<int>(j);
            }
        }
        if (best_j < 0) continue; // single-domain set
        ++counted;
        if (location[best_j] == location[i]) ++agree;
    }
    if (counted == 0) throw DataError("nn agreement: needs points from both domains");
    return static_cast<double>(agree) / counted;
}

// ---------------------------------------------------------------------------
// CSV writers. Every file opens with provenance comment lines so a report
// can be traced back to the exact configuration that produced it.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_metric(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace detail

inline std::string reports_csv(const std::vector<EvalReport>& rows,
                               const std::string& provenance) {
    std::string out = provenance.empty() ? "" : provenance + "\n";
    out += "method,source_bridge,target_bridge,vehicle,seed,n_samples,n_damaged,"
           "detection,localization,quantification,within_one\n";
    for (const auto& r : rows) {
        out += r.method + ',' + std::to_string(r.source_bridge) + ',' +
               std::to_string(r.target_bridge) + ',' + std::to_string(r.vehicle) + ',' +
               std::to_string(r.seed) + ',' + std::to_string(r.n_samples) + ',' +
               std::to_string(r.n_damaged) + ',' + detail::fmt_metric(r.detection) + ',' +
               detail::fmt_metric(r.localization) + ',' + detail::fmt_metric(r.quantification) +
               ',' + detail::fmt_metric(r.within_one) + '\n';
    }
    return out;
}

// Inverse of reports_csv minus the confusion matrices, for re-aggregating
// previously written results. Comment lines are skipped.
inline std::vector<EvalReport> parse_reports_csv(const std::string& text) {
    std::vector<EvalReport> rows;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true; // column header
            continue;
        }
        std::vector<std::string> f;
        std::size_t c = 0;
        while (true) {
            const std::size_t comma = line.find(',', c);
            f.push_back(line.substr(c, comma == std::string::npos ? std::string::npos : comma - c));
            if (comma == std::string::npos) break;
            c = comma + 1;
        }
        if (f.size() != 11) throw DataError("reports csv: expected 11 fields, got " +
                                            std::to_string(f.size()));
        EvalReport r;
        r.method = f[0];
        r.source_bridge = std::atoi(f[1].c_str());
        r.target_bridge = std::atoi(f[2].c_str());
        r.vehicle = std::atoi(f[3].c_str());
        r.seed = std::strtoull(f[4].c_str(), nullptr, 10);
        r.n_samples = std::atoi(f[5].c_str());
        r.n_damaged = std::atoi(f[6].c_str());
        r.detection = std::strtod(f[7].c_str(), nullptr);
        r.localization = std::strtod(f[8].c_str(), nullptr);
        r.quantification = std::strtod(f[9].c_str(), nullptr);
        r.within_one = std::strtod(f[10].c_str(), nullptr);
        rows.push_back(std::move(r));
    }
    if (!header_seen) throw DataError("reports csv: empty file");
    return rows;
}

struct AggregateRow {
    std::string method;
    int n_reports = 0;
    double detection = 0, localization = 0, quantification = 0, within_one = 0;
};

// Mean of each metric over all reports sharing a method, in first-seen
// method order. Reports with no damaged samples cannot appear in our grids,
// so NaNs are rejected rather than silently skipped.
inline std::vector<AggregateRow> aggregate_reports(const std::vector<EvalReport>& rows) {
    std::vector<AggregateRow> agg;
    for (const auto& r : rows) {
        if (!std::isfinite(r.localization) || !std::isfinite(r.quantification) ||
            !std::isfinite(r.within_one))
            throw DataError("aggregate: report for " + r.method + " has undefined metrics");
        auto it = std::find_if(agg.begin(), agg.end(),
                               [&](const AggregateRow& a) { return a.method == r.method; });
        if (it == agg.end()) {
            agg.push_back(AggregateRow{r.method, 0, 0, 0, 0, 0});
            it = std::prev(agg.end());
        }
        ++it->n_reports;
        it->detection += r.detection;
        it->localization += r.localization;
        it->quantification += r.quantification;
        it->within_one += r.within_one;
    }
    for (auto& a : agg) {
        a.detection /= a.n_reports;
        a.localization /= a.n_reports;
        a.quantification /= a.n_reports;
        a.within_one /= a.n_reports;
    }
    return agg;
}

inline std::string aggregates_csv(const std::vector<AggregateRow>& rows,
                                  const std::string& provenance) {
    std::string out = provenance.empty() ? "" : provenance + "\n";
    out += "method,n_reports,detection,localization,quantification,within_one\n";
    for (const auto& a : rows)
        out += a.method + ',' + std::to_string(a.n_reports) + ',' +
               detail::fmt_metric(a.detection) + ',' + detail::fmt_metric(a.localization) + ',' +
               detail::fmt_metric(a.quantification) + ',' + detail::fmt_metric(a.within_one) + '\n';
    return out;
}

inline std::string confusion_csv(const EvalReport& r, const std::string& provenance) {
    std::string out = provenance.empty() ? "" : provenance + "\n";
    out += "matrix,true_category,pred_0,pred_1,pred_2,pred_3\n";
    for (int t = 0; t < 4; ++t) {
        out += "location," + std::to_string(t);
        for (int p = 0; p < 4; ++p) out += ',' + std::to_string(r.loc_confusion[t][p]);
        out += '\n';
    }
    for (int t = 0; t < 4; ++t) {
        out += "severity," + std::to_string(t);
        for (int p = 0; p < 4; ++p) out += ',' + std::to_string(r.sev_confusion[t][p]);
        out += '\n';
    }
    return out;
}

inline std::string embeddings_csv(const std::vector<std::array<double, 2>>& y,
                                  const EmbeddingSet& e, const std::string& method,
                                  const std::string& provenance) {
    if (y.size() != e.domain.size()) throw DataError("embeddings csv: size mismatch");
    std::string out = provenance.empty() ? "" : provenance + "\n";
    out += "x,y,domain,location,method\n";
    for (std::size_t i = 0; i < y.size(); ++i)
        out += detail::fmt_metric(y[i][0]) + ',' + detail::fmt_metric(y[i][1]) + ',' +
               std::to_string(e.domain[i]) + ',' + std::to_string(e.location[i]) + ',' + method +
               '\n';
    return out;
}

} // namespace driveby::ev
