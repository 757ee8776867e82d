#ifndef CDRA_GCM_HPP
#define CDRA_GCM_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdra/graph.hpp"
#include "cdra/rng.hpp"
#include "cdra/table.hpp"

namespace cdra {

/// Conditional probability table P(child | parents). Rows are indexed by the
/// parents' level indices in mixed radix, first parent most significant; each
/// row is a distribution over the child's levels.
struct Cpd {
    FactorId child;
    std::vector<FactorId> parents;
    std::vector<std::vector<double>> table;
};

enum class MetricKind { Correctness, Continuous };

std::string_view to_string(MetricKind kind);

/// Multiplier applied when factor `a` sits at `level_a` and `b` at `level_b`.
struct Interaction {
    FactorId a;
    FactorId b;
    int level_a = 0;
    int level_b = 0;
    double multiplier = 1.0;
};

/// Stand-in for the task model: success probability is
///   clamp(base * prod_v retention[v][level_v] * prod_matching multiplier, 0, 1).
/// Correctness metrics are Bernoulli draws of that probability; continuous
/// metrics add Gaussian noise with `noise_sigma`.
struct TaskResponse {
    double base = 0.9;
    std::map<FactorId, std::vector<double>> retention;
    std::vector<Interaction> interactions;
    MetricKind kind = MetricKind::Correctness;
    double noise_sigma = 0.0;
};

/// A causal DAG with a metric sink, one CPD per factor and a task response
/// attached to the sink. Validated on construction (InvalidGcm).
class Gcm {
public:
    Gcm(CausalDag dag, std::map<FactorId, SeverityDomain> domains, std::vector<Cpd> cpds,
        TaskResponse response);

    const CausalDag& dag() const noexcept { return dag_; }
    const TaskResponse& response() const noexcept { return response_; }
    const std::string& metric_name() const { return dag_.name(sink_); }
    std::size_t sink() const noexcept { return sink_; }
    const std::vector<std::size_t>& factors() const noexcept { return factors_; }
    std::vector<FactorId> factor_names() const { return dag_.factor_names(); }

    /// Domain of node i (unused for the sink).
    const SeverityDomain& domain(std::size_t node) const { return domains_.at(node); }
    const SeverityDomain& domain(std::string_view factor) const;
    const Cpd& cpd(std::string_view factor) const;
    const std::vector<Cpd>& cpds() const noexcept { return cpds_; }
    std::map<FactorId, SeverityDomain> domain_map() const;

    /// P(node = code | parents) where `codes` holds level indices for every node.
    double probability(std::size_t node, std::span<const std::uint32_t> codes) const;
    /// Response probability for a full assignment of level indices.
    double success_probability(std::span<const std::uint32_t> codes) const;
    /// Draws node's level index given its parents' codes.
    std::uint32_t draw(std::size_t node, std::span<const std::uint32_t> codes, Rng& rng) const;
    double draw_metric(std::span<const std::uint32_t> codes, Rng& rng) const;

    /// Empty table whose columns are the factors in node order.
    ObservationTable empty_table() const;

private:
    std::size_t row_of(std::size_t node, std::span<const std::uint32_t> codes) const;

    CausalDag dag_;
    std::size_t sink_ = 0;
    std::vector<std::size_t> factors_;
    std::vector<std::size_t> order_;
    std::vector<SeverityDomain> domains_;
    std::vector<Cpd> cpds_;
    std::vector<std::size_t> cpd_slot_;
    TaskResponse response_;
    std::vector<std::vector<double>> retention_;
    struct CompiledInteraction {
        std::size_t a, b;
        std::uint32_t code_a, code_b;
        double multiplier;
    };
    std::vector<CompiledInteraction> interactions_;
};

/// Rows are generated in fixed-size shards; shard k uses the k-th child of a
/// seed drawn from `rng`, so output does not depend on `workers`.
ObservationTable sample_observational(const Gcm& gcm, std::size_t n, Rng& rng,
                                      std::size_t workers = 1);

/// Samples under do(v = value). Throws UnknownNode, LevelOutOfDomain.
ObservationTable sample_interventional(const Gcm& gcm, std::string_view v, int value,
                                       std::size_t n, Rng& rng, std::size_t workers = 1);

inline constexpr std::uint64_t kDefaultStateCap = 10'000'000;

std::uint64_t joint_state_count(const Gcm& gcm);

/// Calls visit(codes, probability, success) for every joint factor assignment
/// of the model with `clamp` = (node, code) fixed (nullopt for the observational
/// model). Assignments with zero probability are still visited.
void enumerate_states(
    const Gcm& gcm, std::optional<std::pair<std::size_t, std::uint32_t>> clamp,
    const std::function<void(std::span<const std::uint32_t>, double, double)>& visit,
    std::uint64_t cap = kDefaultStateCap);

/// E[M | do(v = value)] by enumeration. Throws StateSpaceTooLarge.
double exact_interventional_expectation(const Gcm& gcm, std::string_view v, int value,
                                        std::uint64_t cap = kDefaultStateCap);

/// E[M | do(v = to)] - E[M | do(v = from)] by enumeration.
double true_ace(const Gcm& gcm, std::string_view v, int from, int to,
                std::uint64_t cap = kDefaultStateCap);

/// E[M | v = to] - E[M | v = from]: the unadjusted observational contrast.
double observational_contrast(const Gcm& gcm, std::string_view v, int from, int to,
                              std::uint64_t cap = kDefaultStateCap);

struct TruthOptions {
    std::uint64_t state_cap = kDefaultStateCap;
    std::size_t mc_samples = 1'000'000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct GroundTruth {
    double value = 0.0;
    double std_error = 0.0;
    bool exact = true;
};

/// Exact enumeration when the state space fits under the cap, otherwise
/// Monte-Carlo interventional sampling with its standard error.
GroundTruth ground_truth_ace(const Gcm& gcm, std::string_view v, int from, int to,
                             const TruthOptions& options = {});

struct RandomGcmOptions {
    double base_lo = 0.75;
    double base_hi = 0.9;
    double retention_lo = 0.7;
    double retention_hi = 1.0;
    double dirichlet_alpha = 1.0;
    FactorId sink = "M";
};

/// Dirichlet CPT rows and a monotone retention response over every sink
/// parent. A DAG without a sink gets one fed by every factor.
Gcm random_gcm(const CausalDag& dag, const SeverityDomain& domain, Rng& rng,
               const RandomGcmOptions& options = {});

}  // namespace cdra

#endif  // CDRA_GCM_HPP
