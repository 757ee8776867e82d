#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cdra/audit.hpp"
#include "cdra/error.hpp"
#include "cdra/serialize.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cdra;

namespace {

std::optional<ErrorCode> code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

const FactorEstimate& first(const AuditReport& r, const std::string& f) { return r.factor(f).results.front(); }

// Three independent roots feeding the metric.
Gcm independent_roots(const std::vector<double>& b_retention) {
    CausalDag dag({"A", "B", "C", "M"}, {{"A", "M"}, {"B", "M"}, {"C", "M"}}, "M");
    const SeverityDomain d;
    std::vector<Cpd> cpds{{"A", {}, {{0.3, 0.4, 0.3}}}, {"B", {}, {{0.5, 0.25, 0.25}}}, {"C", {}, {{0.2, 0.5, 0.3}}}};
    TaskResponse r;
    r.base = 0.9;
    r.retention["A"] = {1.0, 0.9, 0.8};
    r.retention["B"] = b_retention;
    r.retention["C"] = {1.0, 0.97, 0.95};
    return Gcm(dag, {{"A", d}, {"B", d}, {"C", d}}, cpds, r);
}

}  // namespace

TEST_CASE("audit of the worked model") {
    const Gcm gcm = fixture::worked_model();
    AuditConfig cfg;
    cfg.seed = 3;
    const auto report = run_simulated_audit(gcm, 100000, cfg);
    REQUIRE(report.factors.size() == 2);
    CHECK(std::abs(first(report, "A").estimate->value - (-0.54)) < 0.01);
    CHECK(std::abs(first(report, "B").estimate->value - (-0.40)) < 0.01);
    CHECK(first(report, "B").truth->value == doctest::Approx(-0.40).epsilon(1e-12));
    CHECK(report.factor("B").adjustment.variables == std::vector<FactorId>{"A"});
    CHECK(report.factor("A").adjustment.variables.empty());
    CHECK(*report.max_delta() < 0.01);
    CHECK_FALSE(report.has_failures());
    CHECK(report.rows == 100000);
    CHECK(report.source == TableSource::Simulated);

    // The mean metric is the plain column average.
    const auto data = simulated_audit_data(gcm, 100000, cfg);
    const auto col = data.metric_column();
    CHECK(report.mean_metric == std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size()));

    const auto table = render_audit_table(report);
    CHECK(table.find("delta ACE") != std::string::npos);
    CHECK(table.find("mean M") != std::string::npos);

    CHECK(code_of([&] { run_simulated_audit(gcm, 0, cfg); }) == ErrorCode::EmptyData);
}

TEST_CASE("factors without a path to the metric are flagged") {
    CausalDag dag({"A", "C", "M"}, {{"A", "C"}, {"A", "M"}}, "M");
    Gcm gcm(dag, {{"A", SeverityDomain{}}, {"C", SeverityDomain{}}},
            {{"A", {}, {{0.3, 0.3, 0.4}}},
             {"C", {"A"}, {{0.6, 0.2, 0.2}, {0.2, 0.6, 0.2}, {0.2, 0.2, 0.6}}}},
            TaskResponse{0.9, {{"A", {1.0, 0.8, 0.7}}}, {}, MetricKind::Correctness, 0.0});
    AuditConfig cfg;
    cfg.seed = 1;
    const auto report = run_simulated_audit(gcm, 50000, cfg);
    CHECK_FALSE(report.factor("C").causal_path);
    CHECK(report.factor("A").causal_path);
    CHECK(std::abs(first(report, "C").estimate->value) < 0.01);
    CHECK(first(report, "C").truth->value == 0.0);
    CHECK(render_audit_table(report).find("no causal path") != std::string::npos);
}

TEST_CASE("audit inputs are checked") {
    const Gcm gcm = fixture::worked_model();
    AuditConfig cfg;
    cfg.seed = 2;
    const auto data = simulated_audit_data(gcm, 1000, cfg);

    cfg.assumed_dag = CausalDag({"A", "B", "C"}, {{"A", "B"}});
    CHECK(code_of([&] { run_audit(data, cfg); }) == ErrorCode::SchemaMismatch);

    cfg.assumed_dag = CausalDag({"A", "B"}, {{"A", "B"}});
    CHECK_NOTHROW(run_audit(data, cfg));
    cfg.treatments["A"] = {{0, 5}};
    CHECK(code_of([&] { run_audit(data, cfg); }) == ErrorCode::LevelOutOfDomain);

    // Several treatment pairs per factor.
    cfg.treatments["A"] = {{0, 1}, {1, 0}};
    const auto r = run_audit(data, cfg);
    REQUIRE(r.factor("A").results.size() == 2);
    CHECK(r.factor("A").results[0].estimate->value == doctest::Approx(-r.factor("A").results[1].estimate->value));
}

TEST_CASE("support failures are recorded per factor") {
    // B almost never equals 1 when A = 0.
    CausalDag dag({"A", "B", "M"}, {{"A", "B"}, {"A", "M"}, {"B", "M"}}, "M");
    const SeverityDomain bin(std::vector<int>{0, 1});
    Gcm gcm(dag, {{"A", bin}, {"B", bin}}, {{"A", {}, {{0.5, 0.5}}}, {"B", {"A"}, {{1.0, 0.0}, {0.5, 0.5}}}},
            TaskResponse{0.9, {{"A", {1.0, 0.9}}, {"B", {1.0, 0.8}}}, {}, MetricKind::Correctness, 0.0});
    AuditConfig cfg;
    cfg.seed = 4;
    const auto report = run_simulated_audit(gcm, 5000, cfg);
    CHECK(report.has_failures());
    const auto& b = first(report, "B");
    CHECK_FALSE(b.estimate);
    CHECK(b.failure == std::optional<std::string>("insufficient support"));
    CHECK(b.coverage == doctest::Approx(0.5).epsilon(0.05));
    CHECK(first(report, "A").estimate);
}

TEST_CASE("audits are pure functions of data and config") {
    Rng rng(6);
    const Gcm gcm = random_gcm(random_dag(5, 0.5, rng), SeverityDomain{}, rng);
    AuditConfig cfg;
    cfg.seed = 11;
    cfg.bootstrap = 50;
    const auto a = dump_canonical(to_json(run_simulated_audit(gcm, 20000, cfg)));
    cfg.workers = 8;
    const auto b = dump_canonical(to_json(run_simulated_audit(gcm, 20000, cfg)));
    CHECK(a == b);

    const auto h = config_hash(cfg);
    CHECK(h.size() == 16);
    cfg.workers = 1;
    CHECK(config_hash(cfg) == h);
    cfg.seed = 12;
    CHECK(config_hash(cfg) != h);

    // Stable across serialization.
    const auto j = to_json(run_simulated_audit(gcm, 5000, cfg));
    CHECK(dump_canonical(to_json(report_from_json(j))) == dump_canonical(j));
}

TEST_CASE("removing the only edge of a chain biases the downstream factor") {
    const Gcm gcm = fixture::worked_model();
    AuditConfig cfg;
    cfg.seed = 21;
    const std::size_t errors[] = {1};
    const PerturbMode modes[] = {PerturbMode::Remove, PerturbMode::Add};
    const auto rep = run_misspec_sweep(gcm, 100000, errors, modes, 1, cfg);
    REQUIRE(rep.cells.size() == 2);

    const auto& cell = rep.cells[0];
    REQUIRE(cell.perturbation.removed == std::vector<Edge>{{"A", "B"}});
    const double bias = std::abs(true_ace(gcm, "B", 0, 1) - observational_contrast(gcm, "B", 0, 1));
    CHECK(bias == doctest::Approx(0.18).epsilon(1e-12));
    bool seen = false;
    for (const auto& f : cell.factors) {
        CHECK(f.residual + f.baseline_delta == doctest::Approx(f.delta).epsilon(1e-12));
        if (f.factor != "B") continue;
        seen = true;
        CHECK(f.adjustment.empty());
        CHECK_FALSE(f.valid_in_true_dag);
        CHECK(std::abs(f.delta - bias) < 0.01);
    }
    CHECK(seen);

    // The only missing edge would close a cycle.
    CHECK(rep.cells[1].skipped.has_value());
}

TEST_CASE("added edges between independent factors leave errors unchanged") {
    const Gcm gcm = independent_roots({1.0, 0.8, 0.7});
    AuditConfig cfg;
    cfg.seed = 8;
    const std::size_t errors[] = {1, 2};
    const PerturbMode modes[] = {PerturbMode::Add};
    const auto rep = run_misspec_sweep(gcm, 50000, errors, modes, 5, cfg);
    CHECK(rep.cells.size() == 10);
    for (const auto& cell : rep.cells) {
        CHECK_FALSE(cell.skipped);
        CHECK(cell.perturbation.added.size() == cell.n_errors);
        for (const auto& f : cell.factors) {
            CHECK(f.valid_in_true_dag);
            CHECK(std::abs(f.residual) < 0.01);
            CHECK(f.residual + f.baseline_delta == doctest::Approx(f.delta).epsilon(1e-12));
        }
    }
    const std::vector<MisspecReport> reports{rep};
    const auto summary = summarize_misspec(reports);
    REQUIRE(summary.size() == 2);
    CHECK(summary[0].n_errors == 1);
    CHECK(summary[0].count == 15);
    CHECK(std::abs(summary[0].mean_residual) < 0.005);
    CHECK(render_misspec_table(summary).find("Additional Edges") != std::string::npos);
}

TEST_CASE("misspecification residuals on random models") {
    Rng rng(77);
    for (int g = 0; g < 3; ++g) {
        const Gcm gcm = random_gcm(random_dag(4, 0.5, rng), SeverityDomain{}, rng);
        AuditConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(g);
        const std::size_t errors[] = {1, 2};
        const PerturbMode modes[] = {PerturbMode::Remove, PerturbMode::Add};
        const auto rep = run_misspec_sweep(gcm, 20000, errors, modes, 2, cfg);
        for (const auto& cell : rep.cells)
            for (const auto& f : cell.factors) {
                CHECK(f.residual + f.baseline_delta == doctest::Approx(f.delta).epsilon(1e-12));
                const CausalDag truth = with_metric_sink(gcm.dag(), "M");
                CHECK(f.valid_in_true_dag == is_valid_backdoor(truth, f.factor, "M", f.adjustment));
            }
    }
}

TEST_CASE("comparing reports") {
    AuditConfig cfg;
    cfg.seed = 5;
    const auto a = run_simulated_audit(independent_roots({1.0, 0.8, 0.7}), 100000, cfg);
    const auto self = compare_reports(a, a);
    CHECK(self.size() == 3);
    for (const auto& c : self) CHECK(c.delta == 0.0);

    // Lowering B's retention at level 1 by 0.3 moves only B's effect.
    const auto b = run_simulated_audit(independent_roots({1.0, 0.5, 0.4}), 100000, cfg);
    const auto cmp = compare_reports(a, b);
    REQUIRE(cmp.size() == 3);
    CHECK(cmp[0].factor == "B");
    // base * E[retention A] * E[retention C] * 0.3
    CHECK(std::abs(cmp[0].delta - 0.9 * 0.9 * 0.97 * 0.3) < 0.01);
    CHECK(cmp[0].rank_b == 1);
    CHECK(cmp[0].rank_a == 1);
    // Every factor's difference follows the difference of the true effects.
    for (const auto& c : cmp) {
        const double expected = a.factor(c.factor).results[0].truth->value - b.factor(c.factor).results[0].truth->value;
        CHECK(std::abs(c.delta - expected) < 0.02);
    }
    CHECK(render_comparison_table(cmp).find("B") != std::string::npos);

    AuditReport other = a;
    other.factors.pop_back();
    CHECK(code_of([&] { compare_reports(a, other); }) == ErrorCode::SchemaMismatch);
}

TEST_CASE("percent formatting") {
    CHECK(format_percent(0.0) == "0.0");
    CHECK(format_percent(-0.225) == "-22.5");
    CHECK(format_percent(0.0091) == "0.91");
    CHECK(format_percent(0.00044) == "0.044");
    CHECK(format_percent(0.001) == "0.10");
    CHECK(format_percent(0.05) == "5.0");
}
