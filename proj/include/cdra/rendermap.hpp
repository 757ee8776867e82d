#ifndef CDRA_RENDERMAP_HPP
#define CDRA_RENDERMAP_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdra/graph.hpp"
#include "cdra/rng.hpp"

namespace cdra {

enum class CorruptionType { Increasing, Decreasing, Centered };

std::string_view to_string(CorruptionType type);
CorruptionType parse_corruption_type(std::string_view name);

enum class Squash { TanhUnit };

std::string_view to_string(Squash squash);
Squash parse_squash(std::string_view name);
/// tanh-unit: (1 + tanh(z)) / 2.
double apply_squash(Squash squash, double z);

struct FactorSpec {
    FactorId id;
    CorruptionType type = CorruptionType::Increasing;
    double min = 0.0;
    double max = 1.0;
    std::optional<double> nominal;
    double a = 1.0;
    double b = 1.0;
    double sigma = 0.0;
    Squash squash = Squash::TanhUnit;
};

/// Throws InvalidArgument for bad ranges or shapes, NominalMissing for a
/// centered factor without a nominal inside [min, max].
void validate(const FactorSpec& spec);

struct WeightedEdge {
    FactorId parent;
    FactorId child;
    double weight = 0.0;
};

/// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// x with I_x(a, b) = q, by safeguarded Newton steps inside a shrinking
/// bisection bracket. q = 0 and q = 1 map to 0 and 1.
double beta_inverse_cdf(double a, double b, double q);

struct Setting {
    double value = 0.0;
    double severity = 0.0;
};

/// Maps a normalized value in [0, 1] to renderer units and a severity in [0, 1].
Setting to_setting(const FactorSpec& spec, double v);

/// Validated latent propagation graph: Z_A = sum(w * V_parent) + U_A and
/// V_A = inverse Beta CDF of squash(Z_A).
class RenderGraph {
public:
    /// Throws MissingSpec, DuplicateNode, CycleDetected, InvalidArgument.
    RenderGraph(std::vector<FactorSpec> specs, std::vector<WeightedEdge> edges);

    const std::vector<FactorSpec>& specs() const noexcept { return specs_; }
    const std::vector<WeightedEdge>& edges() const noexcept { return edges_; }
    const CausalDag& dag() const noexcept { return dag_; }
    std::size_t size() const noexcept { return specs_.size(); }
    std::size_t index_of(std::string_view id) const { return dag_.index_of(id); }

    /// Normalized values, indexed like specs(), for the given exogenous terms.
    std::vector<double> propagate(std::span<const double> noise) const;
    /// Draws U_A ~ Normal(0, sigma_A) in spec order, then propagates.
    std::vector<double> sample_normalized(Rng& rng) const;

private:
    struct Incoming {
        std::size_t parent;
        double weight;
    };

    std::vector<FactorSpec> specs_;
    std::vector<WeightedEdge> edges_;
    CausalDag dag_;
    std::vector<std::size_t> order_;
    std::vector<std::vector<Incoming>> incoming_;
};

/// Convenience wrapper keyed by factor id.
std::map<FactorId, double> sample_normalized(const std::vector<FactorSpec>& specs,
                                             const std::vector<WeightedEdge>& edges, Rng& rng);

/// Replaces every weight with a U(-1, 1) draw, in edge order.
std::vector<WeightedEdge> sample_edge_weights(std::vector<WeightedEdge> edges, Rng& rng);

/// Lighting, exposure, defocus and render-noise factors of the rendering
/// experiment, with their realized edge weights.
RenderGraph default_render_graph();

struct PlanRecord {
    std::size_t index = 0;
    std::vector<double> normalized;
    std::vector<double> settings;
    std::vector<double> severities;
};

struct RenderPlan {
    std::vector<FactorId> factors;
    std::vector<PlanRecord> records;
    std::uint64_t seed = 0;
};

/// Sample i draws from derive_seed(seed, i), so output does not depend on
/// `workers`.
RenderPlan emit_plan(const RenderGraph& graph, std::size_t n, std::uint64_t seed,
                     std::size_t workers = 1);

/// One JSON object per line: {"index", "settings", "severities"}.
void write_plan_jsonl(const RenderPlan& plan, std::ostream& out);

}  // namespace cdra

#endif  // CDRA_RENDERMAP_HPP
