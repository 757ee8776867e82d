#ifndef CDRA_AUDIT_HPP
#define CDRA_AUDIT_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdra/estimate.hpp"
#include "cdra/gcm.hpp"
#include "cdra/graph.hpp"
#include "cdra/identify.hpp"
#include "cdra/table.hpp"

namespace cdra {

struct TreatmentPair {
    int from = 0;
    int to = 1;

    bool operator==(const TreatmentPair&) const = default;
};

struct AuditConfig {
    /// Structural hypothesis used for identification. A graph without a sink
    /// is augmented with one fed by every factor. Simulated runs fall back to
    /// the generating graph when this is empty.
    CausalDag assumed_dag;
    /// Per-factor contrasts; factors not listed use `default_pair`.
    std::map<FactorId, std::vector<TreatmentPair>> treatments;
    TreatmentPair default_pair{};
    EstimatorKind estimator = EstimatorKind::Stratified;
    ForestOptions forest{};
    /// Bootstrap replicates per estimate; 0 disables intervals.
    std::size_t bootstrap = 0;
    double bootstrap_level = 0.95;
    std::uint64_t seed = 0;
    double coverage_floor = kDefaultCoverageFloor;
    /// Upper bound on threads; results do not depend on it.
    std::size_t workers = 1;
    TruthOptions truth{};
};

struct FactorEstimate {
    TreatmentPair pair;
    std::optional<AceEstimate> estimate;
    /// Set when the estimate was rejected; coverage is still reported.
    std::optional<std::string> failure;
    double coverage = 0.0;
    std::optional<GroundTruth> truth;
    std::optional<double> delta;
};

struct FactorAudit {
    FactorId factor;
    AdjustmentSet adjustment;
    bool causal_path = true;
    std::vector<FactorEstimate> results;
};

struct AuditReport {
    std::vector<FactorAudit> factors;
    std::string metric_name = "M";
    double mean_metric = 0.0;
    std::size_t rows = 0;
    EstimatorKind estimator = EstimatorKind::Stratified;
    std::string config_hash;
    std::uint64_t seed = 0;
    TableSource source = TableSource::Simulated;
    std::optional<std::uint64_t> data_seed;

    /// Mean and max of the attached deltas, when any exist.
    std::optional<double> mean_delta() const;
    std::optional<double> max_delta() const;
    bool has_failures() const;
    const FactorAudit& factor(std::string_view name) const;
};

/// FNV-1a digest (16 hex digits) of the canonical JSON form of the config.
std::string config_hash(const AuditConfig& config);

/// Per-factor ACE over an observational table. Throws SchemaMismatch when the
/// table's factor columns differ from the assumed graph's factors; support
/// failures are recorded per factor instead of thrown.
AuditReport run_audit(const ObservationTable& data, const AuditConfig& config);

/// Fills truth and delta for every successful estimate of the report.
void attach_ground_truth(AuditReport& report, const Gcm& gcm, const AuditConfig& config);

/// Samples n observational rows from the model, audits them and attaches
/// ground truth. Throws EmptyData when n is 0.
AuditReport run_simulated_audit(const Gcm& gcm, std::size_t n, const AuditConfig& config);

/// Observational data drawn by run_simulated_audit for the same config.
ObservationTable simulated_audit_data(const Gcm& gcm, std::size_t n, const AuditConfig& config);

struct FactorResidual {
    FactorId factor;
    TreatmentPair pair;
    std::vector<FactorId> adjustment;
    /// Whether the misspecified adjustment set is a valid backdoor set in
    /// the generating graph.
    bool valid_in_true_dag = false;
    double delta = 0.0;
    double baseline_delta = 0.0;
    double residual = 0.0;
};

struct MisspecCell {
    std::size_t n_errors = 0;
    PerturbMode mode = PerturbMode::Add;
    std::size_t repeat = 0;
    DagPerturbation perturbation;
    /// Empty when no perturbation could be sampled.
    std::optional<std::string> skipped;
    std::vector<FactorResidual> factors;
    /// Factors left out because either run lacked support.
    std::size_t excluded = 0;
    double mean_delta = 0.0;
    double baseline_delta = 0.0;
    double residual = 0.0;
};

struct MisspecSummary {
    std::size_t n_errors = 0;
    PerturbMode mode = PerturbMode::Add;
    std::size_t count = 0;
    double mean_residual = 0.0;
    double std_residual = 0.0;
    double mean_delta = 0.0;
};

struct MisspecReport {
    AuditReport baseline;
    std::vector<MisspecCell> cells;
    std::vector<MisspecSummary> summary;
    std::string config_hash;
    std::uint64_t seed = 0;
};

/// For every (N_E, mode, repeat) cell, perturbs the generating graph, audits
/// the same observational sample under the perturbed graph and reports the
/// change in ACE error against the correctly specified baseline.
MisspecReport run_misspec_sweep(const Gcm& gcm, std::size_t n, std::span<const std::size_t> n_errors,
                                std::span<const PerturbMode> modes, std::size_t repeats,
                                const AuditConfig& config);

/// Mean and sample std of per-factor residuals grouped by (N_E, mode), pooled
/// across reports. Groups appear in order of first occurrence.
std::vector<MisspecSummary> summarize_misspec(std::span<const MisspecReport> reports);

struct FactorComparison {
    FactorId factor;
    TreatmentPair pair;
    double ace_a = 0.0;
    double ace_b = 0.0;
    double delta = 0.0;  // a - b
    std::size_t rank_a = 0;  // 1 = largest |ACE| within report a
    std::size_t rank_b = 0;
};

/// Per-factor differences sorted by |delta| descending. Throws SchemaMismatch
/// when the reports cover different factors.
std::vector<FactorComparison> compare_reports(const AuditReport& a, const AuditReport& b);

/// Percent with two significant figures below 1%, one decimal above.
std::string format_percent(double fraction);

std::string render_audit_table(const AuditReport& report);
std::string render_misspec_table(std::span<const MisspecSummary> summary);
std::string render_comparison_table(std::span<const FactorComparison> rows);

}  // namespace cdra

#endif  // CDRA_AUDIT_HPP
