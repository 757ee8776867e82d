#include "cdra/audit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cdra/error.hpp"
#include "cdra/parallel.hpp"
#include "cdra/serialize.hpp"

namespace cdra {

namespace {

// Stream offsets for derive_seed; each consumer gets a disjoint range.
constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kForestStream = 1ULL << 20;
constexpr std::uint64_t kBootstrapStream = 2ULL << 20;
constexpr std::uint64_t kTruthStream = 3ULL << 20;
constexpr std::uint64_t kCellStream = 4ULL << 20;
constexpr std::uint64_t kPairsPerFactor = 64;

std::vector<TreatmentPair> pairs_for(const AuditConfig& config, const FactorId& factor) {
    auto it = config.treatments.find(factor);
    if (it == config.treatments.end() || it->second.empty()) return {config.default_pair};
    return it->second;
}

void check_schema(const ObservationTable& data, const CausalDag& dag) {
    const auto expected = dag.factor_names();
    const std::set<FactorId> have(data.factors().begin(), data.factors().end());
    for (const auto& f : expected)
        if (!have.contains(f))
            throw Error(ErrorCode::SchemaMismatch, "data has no column for factor '" + f + "'");
    const std::set<FactorId> want(expected.begin(), expected.end());
    for (const auto& f : data.factors())
        if (!want.contains(f))
            throw Error(ErrorCode::SchemaMismatch, "column '" + f + "' is not a factor of the assumed graph");
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
}

std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (width.size() <= c) width.push_back(0);
            width[c] = std::max(width[c], r[c].size());
        }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c == 0) {
                line += r[c] + std::string(width[0] - r[c].size(), ' ');
            } else {
                line += "  " + pad(r[c], width[c]);
            }
        }
        out += line + "\n";
    }
    return out;
}

std::string pair_label(TreatmentPair p) {
    return std::to_string(p.from) + "->" + std::to_string(p.to);
}

}  // namespace

std::optional<double> AuditReport::mean_delta() const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : factors)
        for (const auto& r : f.results)
            if (r.delta) {
                sum += *r.delta;
                ++count;
            }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

std::optional<double> AuditReport::max_delta() const {
    std::optional<double> best;
    for (const auto& f : factors)
        for (const auto& r : f.results)
            if (r.delta && (!best || *r.delta > *best)) best = r.delta;
    return best;
}

bool AuditReport::has_failures() const {
    for (const auto& f : factors)
        for (const auto& r : f.results)
            if (r.failure) return true;
    return false;
}

const FactorAudit& AuditReport::factor(std::string_view name) const {
    for (const auto& f : factors)
        if (f.factor == name) return f;
    throw Error(ErrorCode::UnknownNode, "report has no factor '" + std::string(name) + "'");
}

std::string config_hash(const AuditConfig& config) {
    return fnv1a_hex(dump_canonical(to_json(config)));
}

AuditReport run_audit(const ObservationTable& data, const AuditConfig& config) {
    if (config.assumed_dag.size() == 0)
        throw Error(ErrorCode::InvalidArgument, "audit needs an assumed graph");
    if (data.empty()) throw Error(ErrorCode::EmptyData, "observation table has no rows");
    const CausalDag dag = with_metric_sink(config.assumed_dag, data.metric_name());
    check_schema(data, dag);

    const std::size_t sink = *dag.sink();
    const std::string sink_name = dag.name(sink);
    const auto factor_idx = dag.factors();

    for (const auto& [factor, pairs] : config.treatments) {
        const auto col = data.find_column(factor);
        if (!col) throw Error(ErrorCode::UnknownNode, "treatment given for unknown factor '" + factor + "'");
        for (const auto& p : pairs)
            if (!data.domains()[*col].contains(p.from) || !data.domains()[*col].contains(p.to))
                throw Error(ErrorCode::LevelOutOfDomain,
                            "treatment " + pair_label(p) + " outside the domain of '" + factor + "'");
    }
    for (std::size_t c = 0; c < data.columns(); ++c) {
        if (config.treatments.contains(data.factors()[c])) continue;
        const auto& d = data.domains()[c];
        if (!d.contains(config.default_pair.from) || !d.contains(config.default_pair.to))
            throw Error(ErrorCode::LevelOutOfDomain, "default treatment " + pair_label(config.default_pair) +
                                                         " outside the domain of '" + data.factors()[c] + "'");
    }

    AuditReport report;
    report.metric_name = data.metric_name();
    report.mean_metric = data.mean_metric();
    report.rows = data.rows();
    report.estimator = config.estimator;
    report.config_hash = config_hash(config);
    report.seed = config.seed;
    report.source = data.source;
    report.data_seed = data.seed;
    report.factors.resize(factor_idx.size());

    parallel_for(factor_idx.size(), config.workers, [&](std::size_t k) {
        FactorAudit& fa = report.factors[k];
        fa.factor = dag.name(factor_idx[k]);
        fa.adjustment = default_adjustment_set(dag, fa.factor, sink_name);
        fa.causal_path = dag.has_directed_path(factor_idx[k], sink);

        ForestOptions forest = config.forest;
        forest.seed = derive_seed(config.seed, kForestStream + k);
        forest.workers = 1;
        const auto pairs = pairs_for(config, fa.factor);

        std::optional<OutcomeModel> model;
        for (std::size_t j = 0; j < pairs.size(); ++j) {
            FactorEstimate fe;
            fe.pair = pairs[j];
            try {
                if (config.bootstrap > 0) {
                    BootstrapOptions bo;
                    bo.replicates = config.bootstrap;
                    bo.level = config.bootstrap_level;
                    bo.seed = derive_seed(config.seed, kBootstrapStream + k * kPairsPerFactor + j);
                    bo.workers = 1;
                    fe.estimate = bootstrap_ci(data, fa.factor, fa.adjustment, fe.pair.from, fe.pair.to, bo,
                                               config.estimator, forest, config.coverage_floor);
                } else {
                    if (!model)
                        model = fit_outcome_model(data, fa.factor, fa.adjustment, config.estimator, forest);
                    fe.estimate = estimate_ace(data, *model, fe.pair.from, fe.pair.to, config.coverage_floor);
                }
                fe.coverage = fe.estimate->coverage;
            } catch (const SupportError& e) {
                fe.failure = "insufficient support";
                fe.coverage = e.coverage();
            }
            fa.results.push_back(std::move(fe));
        }
    });
    return report;
}

void attach_ground_truth(AuditReport& report, const Gcm& gcm, const AuditConfig& config) {
    struct Job {
        std::size_t factor, result;
    };
    std::vector<Job> jobs;
    for (std::size_t k = 0; k < report.factors.size(); ++k)
        for (std::size_t j = 0; j < report.factors[k].results.size(); ++j) jobs.push_back({k, j});

    parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
        const auto [k, j] = jobs[i];
        auto& fa = report.factors[k];
        auto& fe = fa.results[j];
        TruthOptions opts = config.truth;
        opts.seed = derive_seed(config.seed, kTruthStream + k * kPairsPerFactor + j);
        opts.workers = 1;
        fe.truth = ground_truth_ace(gcm, fa.factor, fe.pair.from, fe.pair.to, opts);
        if (fe.estimate) fe.delta = delta_ace(*fe.estimate, fe.truth->value).delta;
    });
}

ObservationTable simulated_audit_data(const Gcm& gcm, std::size_t n, const AuditConfig& config) {
    if (n == 0) throw Error(ErrorCode::EmptyData, "simulated audit needs at least one row");
    Rng rng(derive_seed(config.seed, kDataStream));
    return sample_observational(gcm, n, rng, config.workers);
}

AuditReport run_simulated_audit(const Gcm& gcm, std::size_t n, const AuditConfig& config) {
    AuditConfig effective = config;
    if (effective.assumed_dag.size() == 0) effective.assumed_dag = gcm.dag();
    const ObservationTable data = simulated_audit_data(gcm, n, effective);
    AuditReport report = run_audit(data, effective);
    attach_ground_truth(report, gcm, effective);
    return report;
}

MisspecReport run_misspec_sweep(const Gcm& gcm, std::size_t n, std::span<const std::size_t> n_errors,
                                std::span<const PerturbMode> modes, std::size_t repeats,
                                const AuditConfig& config) {
    if (repeats == 0) throw Error(ErrorCode::InvalidArgument, "misspecification sweep needs repeats >= 1");
    for (auto ne : n_errors)
        if (ne == 0) throw Error(ErrorCode::InvalidArgument, "edge error counts must be >= 1");

    AuditConfig base = config;
    base.assumed_dag = gcm.dag();
    const ObservationTable data = simulated_audit_data(gcm, n, base);

    MisspecReport out;
    out.baseline = run_audit(data, base);
    attach_ground_truth(out.baseline, gcm, base);
    out.config_hash = out.baseline.config_hash;
    out.seed = config.seed;

    const CausalDag& truth_dag = gcm.dag();
    const std::string& sink = gcm.metric_name();

    for (auto ne : n_errors)
        for (auto mode : modes)
            for (std::size_t r = 0; r < repeats; ++r) {
                MisspecCell cell;
                cell.n_errors = ne;
                cell.mode = mode;
                cell.repeat = r;
                out.cells.push_back(std::move(cell));
            }

    parallel_for(out.cells.size(), config.workers, [&](std::size_t c) {
        MisspecCell& cell = out.cells[c];
        Rng rng(derive_seed(config.seed, kCellStream + c));
        try {
            cell.perturbation = perturb(truth_dag, cell.n_errors, cell.mode, rng);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoEdgesToRemove) throw;
            cell.skipped = "no edge to remove";
            return;
        }
        if (cell.perturbation.empty()) {
            cell.skipped = "no admissible edge to add";
            return;
        }

        AuditConfig cfg = config;
        cfg.assumed_dag = apply(truth_dag, cell.perturbation);
        cfg.workers = 1;
        const AuditReport sweep = run_audit(data, cfg);

        double sum_delta = 0.0;
        double sum_base = 0.0;
        for (std::size_t k = 0; k < sweep.factors.size(); ++k) {
            const FactorAudit& fa = sweep.factors[k];
            const FactorAudit& ba = out.baseline.factor(fa.factor);
            for (std::size_t j = 0; j < fa.results.size(); ++j) {
                const FactorEstimate& fe = fa.results[j];
                const FactorEstimate& be = ba.results[j];
                if (!fe.estimate || !be.delta) {
                    ++cell.excluded;
                    continue;
                }
                FactorResidual res;
                res.factor = fa.factor;
                res.pair = fe.pair;
                res.adjustment = fa.adjustment.variables;
                res.valid_in_true_dag = is_valid_backdoor(truth_dag, fa.factor, sink, res.adjustment);
                res.delta = delta_ace(*fe.estimate, be.truth->value).delta;
                res.baseline_delta = *be.delta;
                res.residual = res.delta - res.baseline_delta;
                sum_delta += res.delta;
                sum_base += res.baseline_delta;
                cell.factors.push_back(std::move(res));
            }
        }
        if (!cell.factors.empty()) {
            const double m = static_cast<double>(cell.factors.size());
            cell.mean_delta = sum_delta / m;
            cell.baseline_delta = sum_base / m;
            cell.residual = cell.mean_delta - cell.baseline_delta;
        }
    });

    out.summary = summarize_misspec(std::span<const MisspecReport>(&out, 1));
    return out;
}

std::vector<MisspecSummary> summarize_misspec(std::span<const MisspecReport> reports) {
    struct Acc {
        MisspecSummary s;
        std::vector<double> residuals;
        double delta_sum = 0.0;
    };
    std::vector<Acc> groups;
    for (const auto& report : reports)
        for (const auto& cell : report.cells) {
            auto it = std::find_if(groups.begin(), groups.end(), [&](const Acc& a) {
                return a.s.n_errors == cell.n_errors && a.s.mode == cell.mode;
            });
            if (it == groups.end()) {
                groups.push_back({});
                it = std::prev(groups.end());
                it->s.n_errors = cell.n_errors;
                it->s.mode = cell.mode;
            }
            if (cell.skipped) continue;
            for (const auto& f : cell.factors) {
                it->residuals.push_back(f.residual);
                it->delta_sum += f.delta;
            }
        }

    std::vector<MisspecSummary> out;
    for (auto& g : groups) {
        const std::size_t n = g.residuals.size();
        g.s.count = n;
        if (n > 0) {
            double sum = 0.0;
            for (double r : g.residuals) sum += r;
            g.s.mean_residual = sum / static_cast<double>(n);
            g.s.mean_delta = g.delta_sum / static_cast<double>(n);
            if (n > 1) {
                double ss = 0.0;
                for (double r : g.residuals) ss += (r - g.s.mean_residual) * (r - g.s.mean_residual);
                g.s.std_residual = std::sqrt(ss / static_cast<double>(n - 1));
            }
        }
        out.push_back(g.s);
    }
    return out;
}

std::vector<FactorComparison> compare_reports(const AuditReport& a, const AuditReport& b) {
    std::set<FactorId> fa, fb;
    for (const auto& f : a.factors) fa.insert(f.factor);
    for (const auto& f : b.factors) fb.insert(f.factor);
    if (fa != fb) throw Error(ErrorCode::SchemaMismatch, "reports cover different factors");

    std::vector<FactorComparison> rows;
    for (const auto& f : a.factors) {
        const FactorAudit& g = b.factor(f.factor);
        for (const auto& ra : f.results) {
            if (!ra.estimate) continue;
            auto rb = std::find_if(g.results.begin(), g.results.end(),
                                   [&](const FactorEstimate& e) { return e.pair == ra.pair && e.estimate; });
            if (rb == g.results.end()) continue;
            FactorComparison row;
            row.factor = f.factor;
            row.pair = ra.pair;
            row.ace_a = ra.estimate->value;
            row.ace_b = rb->estimate->value;
            row.delta = row.ace_a - row.ace_b;
            rows.push_back(row);
        }
    }

    auto rank = [&](auto value, auto assign) {
        std::vector<std::size_t> idx(rows.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
            return std::abs(value(rows[x])) > std::abs(value(rows[y]));
        });
        for (std::size_t r = 0; r < idx.size(); ++r) assign(rows[idx[r]], r + 1);
    };
    rank([](const FactorComparison& c) { return c.ace_a; },
         [](FactorComparison& c, std::size_t r) { c.rank_a = r; });
    rank([](const FactorComparison& c) { return c.ace_b; },
         [](FactorComparison& c, std::size_t r) { c.rank_b = r; });

    std::stable_sort(rows.begin(), rows.end(), [](const FactorComparison& x, const FactorComparison& y) {
        return std::abs(x.delta) > std::abs(y.delta);
    });
    return rows;
}

std::string format_percent(double fraction) {
    const double v = fraction * 100.0;
    if (!std::isfinite(v)) return "nan";
    if (v == 0.0) return "0.0";
    char buf[64];
    if (std::abs(v) >= 1.0) {
        std::snprintf(buf, sizeof buf, "%.1f", v);
    } else {
        std::snprintf(buf, sizeof buf, "%#.2g", v);
    }
    return buf;
}

std::string render_audit_table(const AuditReport& report) {
    std::vector<TreatmentPair> pairs;
    bool truth = false;
    for (const auto& f : report.factors)
        for (const auto& r : f.results) {
            if (std::find(pairs.begin(), pairs.end(), r.pair) == pairs.end()) pairs.push_back(r.pair);
            truth = truth || r.truth.has_value();
        }

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"(%)"};
    for (const auto& f : report.factors) header.push_back(f.factor);
    header.push_back("mean " + report.metric_name);
    rows.push_back(header);

    auto row_for = [&](const std::string& label, TreatmentPair p, auto cell) {
        std::vector<std::string> row{label};
        for (const auto& f : report.factors) {
            auto it = std::find_if(f.results.begin(), f.results.end(),
                                   [&](const FactorEstimate& e) { return e.pair == p; });
            row.push_back(it == f.results.end() ? "" : cell(*it));
        }
        row.push_back(rows.size() == 1 ? format_percent(report.mean_metric) : "");
        rows.push_back(row);
    };
    for (auto p : pairs) {
        row_for("ACE " + pair_label(p), p, [](const FactorEstimate& e) {
            return e.estimate ? format_percent(e.estimate->value) : std::string("n/a");
        });
        if (truth) {
            row_for("true ACE " + pair_label(p), p, [](const FactorEstimate& e) {
                return e.truth ? format_percent(e.truth->value) : std::string("n/a");
            });
            row_for("delta ACE " + pair_label(p), p, [](const FactorEstimate& e) {
                return e.delta ? format_percent(*e.delta) : std::string("n/a");
            });
        }
    }

    std::string out = render_grid(rows);
    if (auto m = report.mean_delta()) out += "mean delta ACE: " + format_percent(*m) + "%\n";
    out += "\n";
    for (const auto& f : report.factors) {
        std::string adj;
        for (const auto& v : f.adjustment.variables) adj += (adj.empty() ? "" : ",") + v;
        for (const auto& r : f.results) {
            std::string line = f.factor + " " + pair_label(r.pair) + ": ";
            if (r.estimate) {
                line += "ace=" + format_double(r.estimate->value);
                if (r.estimate->ci)
                    line += " ci=[" + format_double(r.estimate->ci->lo) + "," + format_double(r.estimate->ci->hi) + "]";
            } else {
                line += *r.failure;
            }
            line += " coverage=" + format_double(r.coverage) + " adjust={" + adj + "}";
            if (!f.causal_path) line += " [no causal path]";
            out += line + "\n";
        }
    }
    return out;
}

std::string render_misspec_table(std::span<const MisspecSummary> summary) {
    std::vector<std::size_t> ne;
    for (const auto& s : summary)
        if (std::find(ne.begin(), ne.end(), s.n_errors) == ne.end()) ne.push_back(s.n_errors);

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"N_E"};
    for (auto n : ne) header.push_back(std::to_string(n));
    rows.push_back(header);
    for (auto mode : {PerturbMode::Remove, PerturbMode::Add}) {
        const std::string name = mode == PerturbMode::Remove ? "Missing Edges" : "Additional Edges";
        bool any = false;
        std::vector<std::string> mean{name + " mean (%)"}, sd{name + " std (%)"};
        for (auto n : ne) {
            auto it = std::find_if(summary.begin(), summary.end(),
                                   [&](const MisspecSummary& s) { return s.n_errors == n && s.mode == mode; });
            if (it == summary.end() || it->count == 0) {
                mean.push_back(it == summary.end() ? "" : "n/a");
                sd.push_back(it == summary.end() ? "" : "n/a");
                any = any || it != summary.end();
                continue;
            }
            any = true;
            mean.push_back(format_percent(it->mean_residual));
            sd.push_back(format_percent(it->std_residual));
        }
        if (!any) continue;
        rows.push_back(mean);
        rows.push_back(sd);
    }
    return render_grid(rows);
}

std::string render_comparison_table(std::span<const FactorComparison> rows) {
    std::vector<std::vector<std::string>> grid{{"factor", "pair", "ACE a (%)", "ACE b (%)", "a-b (%)", "rank a", "rank b"}};
    for (const auto& r : rows)
        grid.push_back({r.factor, pair_label(r.pair), format_percent(r.ace_a), format_percent(r.ace_b),
                        format_percent(r.delta), std::to_string(r.rank_a), std::to_string(r.rank_b)});
    return render_grid(grid);
}

}  // namespace cdra
