#include "cdra/rendermap.hpp"

#include <cfloat>
#include <cmath>
#include <ostream>
#include <set>

#include <json.hpp>

#include "cdra/error.hpp"
#include "cdra/parallel.hpp"

namespace cdra {

namespace {

double continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

void check_shape(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw Error(ErrorCode::InvalidArgument, "Beta shape parameters must be positive and finite");
}

}  // namespace

std::string_view to_string(CorruptionType type) {
    switch (type) {
        case CorruptionType::Increasing: return "increasing";
        case CorruptionType::Decreasing: return "decreasing";
        case CorruptionType::Centered: return "centered";
    }
    return "?";
}

CorruptionType parse_corruption_type(std::string_view name) {
    if (name == "increasing") return CorruptionType::Increasing;
    if (name == "decreasing") return CorruptionType::Decreasing;
    if (name == "centered") return CorruptionType::Centered;
    throw Error(ErrorCode::InvalidArgument, "unknown corruption type '" + std::string(name) + "'");
}

std::string_view to_string(Squash) { return "tanh-unit"; }

Squash parse_squash(std::string_view name) {
    if (name == "tanh-unit") return Squash::TanhUnit;
    throw Error(ErrorCode::InvalidArgument, "unknown squash '" + std::string(name) + "'");
}

double apply_squash(Squash, double z) { return 0.5 * (1.0 + std::tanh(z)); }

void validate(const FactorSpec& spec) {
    if (spec.id.empty()) throw Error(ErrorCode::InvalidArgument, "factor spec without id");
    const std::string who = "factor '" + spec.id + "': ";
    if (!std::isfinite(spec.min) || !std::isfinite(spec.max) || !(spec.min < spec.max))
        throw Error(ErrorCode::InvalidArgument, who + "min must be below max");
    if (!(spec.a > 0.0) || !(spec.b > 0.0) || !std::isfinite(spec.a) || !std::isfinite(spec.b))
        throw Error(ErrorCode::InvalidArgument, who + "a and b must be positive");
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma))
        throw Error(ErrorCode::InvalidArgument, who + "sigma must be non-negative");
    if (spec.type == CorruptionType::Centered) {
        if (!spec.nominal) throw Error(ErrorCode::NominalMissing, who + "centered factor needs a nominal value");
        if (!(*spec.nominal >= spec.min && *spec.nominal <= spec.max))
            throw Error(ErrorCode::NominalMissing, who + "nominal value outside [min, max]");
    }
}

double regularized_incomplete_beta(double a, double b, double x) {
    check_shape(a, b);
    if (std::isnan(x)) throw Error(ErrorCode::InvalidArgument, "incomplete Beta at NaN");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * continued_fraction(a, b, x) / a;
    return 1.0 - front * continued_fraction(b, a, 1.0 - x) / b;
}

double beta_inverse_cdf(double a, double b, double q) {
    check_shape(a, b);
    if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile must lie in [0, 1]");
    if (q == 0.0) return 0.0;
    if (q == 1.0) return 1.0;

    const double lb = log_beta(a, b);
    double lo = 0.0;
    double hi = 1.0;
    double x = a / (a + b);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = regularized_incomplete_beta(a, b, x) - q;
        if (std::abs(f) < 1e-15) break;
        if (f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo < 4.0 * DBL_EPSILON) break;
        const double pdf = std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lb);
        double next = x - f / pdf;
        if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
        if (std::abs(next - x) < 1e-17) break;
        x = next;
    }
    return x;
}

Setting to_setting(const FactorSpec& spec, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "normalized value must lie in [0, 1]");
    const double span = spec.max - spec.min;
    switch (spec.type) {
        case CorruptionType::Increasing:
            return {spec.min + v * span, v};
        case CorruptionType::Decreasing:
            return {spec.min + (1.0 - v) * span, v};
        case CorruptionType::Centered: {
            if (!spec.nominal)
                throw Error(ErrorCode::NominalMissing, "factor '" + spec.id + "' has no nominal value");
            const double n = *spec.nominal;
            const double value = spec.min + v * span;
            const double reach = std::max(std::abs(spec.min - n), std::abs(spec.max - n));
            return {value, std::abs(value - n) / reach};
        }
    }
    return {};
}

RenderGraph::RenderGraph(std::vector<FactorSpec> specs, std::vector<WeightedEdge> edges)
    : specs_(std::move(specs)), edges_(std::move(edges)) {
    std::set<FactorId> ids;
    std::vector<FactorId> nodes;
    for (const auto& s : specs_) {
        validate(s);
        if (!ids.insert(s.id).second) throw Error(ErrorCode::DuplicateNode, "duplicate factor spec '" + s.id + "'");
        nodes.push_back(s.id);
    }
    std::vector<Edge> plain;
    for (const auto& e : edges_) {
        for (const auto* end : {&e.parent, &e.child})
            if (!ids.contains(*end))
                throw Error(ErrorCode::MissingSpec, "edge endpoint '" + *end + "' has no factor spec");
        if (!std::isfinite(e.weight))
            throw Error(ErrorCode::InvalidArgument, "edge " + e.parent + " -> " + e.child + " has a non-finite weight");
        plain.push_back({e.parent, e.child});
    }
    dag_ = CausalDag(DagDescription{nodes, plain, std::nullopt});
    order_ = topological_indices(dag_);
    incoming_.resize(specs_.size());
    for (const auto& e : edges_)
        incoming_[dag_.index_of(e.child)].push_back({dag_.index_of(e.parent), e.weight});
}

std::vector<double> RenderGraph::propagate(std::span<const double> noise) const {
    if (noise.size() != specs_.size())
        throw Error(ErrorCode::InvalidArgument, "one exogenous term per factor is required");
    std::vector<double> v(specs_.size(), 0.0);
    for (auto i : order_) {
        double z = noise[i];
        for (const auto& in : incoming_[i]) z += in.weight * v[in.parent];
        const auto& s = specs_[i];
        v[i] = beta_inverse_cdf(s.a, s.b, apply_squash(s.squash, z));
    }
    return v;
}

std::vector<double> RenderGraph::sample_normalized(Rng& rng) const {
    std::vector<double> noise(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) noise[i] = specs_[i].sigma * rng.normal();
    return propagate(noise);
}

std::map<FactorId, double> sample_normalized(const std::vector<FactorSpec>& specs,
                                             const std::vector<WeightedEdge>& edges, Rng& rng) {
    const RenderGraph graph(specs, edges);
    const auto v = graph.sample_normalized(rng);
    std::map<FactorId, double> out;
    for (std::size_t i = 0; i < specs.size(); ++i) out[specs[i].id] = v[i];
    return out;
}

std::vector<WeightedEdge> sample_edge_weights(std::vector<WeightedEdge> edges, Rng& rng) {
    for (auto& e : edges) e.weight = rng.uniform(-1.0, 1.0);
    return edges;
}

RenderGraph default_render_graph() {
    std::vector<FactorSpec> specs{
        {"L", CorruptionType::Centered, 0.25, 1.5, 1.0, 2.0, 2.0, 1.0, Squash::TanhUnit},
        {"E", CorruptionType::Centered, -2.0, 2.0, 0.0, 3.0, 3.0, 0.1, Squash::TanhUnit},
        {"D", CorruptionType::Decreasing, 0.01, 0.2, std::nullopt, 2.0, 5.0, 0.1, Squash::TanhUnit},
        {"N", CorruptionType::Decreasing, 10.0, 300.0, std::nullopt, 1.0, 1.0, 0.1, Squash::TanhUnit},
    };
    std::vector<WeightedEdge> edges{
        {"L", "E", -0.223}, {"L", "D", -0.800}, {"E", "D", 0.800}, {"E", "N", -0.322}, {"D", "N", -0.909},
    };
    return RenderGraph(std::move(specs), std::move(edges));
}

RenderPlan emit_plan(const RenderGraph& graph, std::size_t n, std::uint64_t seed, std::size_t workers) {
    RenderPlan plan;
    plan.seed = seed;
    for (const auto& s : graph.specs()) plan.factors.push_back(s.id);
    plan.records.resize(n);
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        PlanRecord& rec = plan.records[i];
        rec.index = i;
        rec.normalized = graph.sample_normalized(rng);
        for (std::size_t k = 0; k < graph.size(); ++k) {
            const Setting s = to_setting(graph.specs()[k], rec.normalized[k]);
            rec.settings.push_back(s.value);
            rec.severities.push_back(s.severity);
        }
    });
    return plan;
}

void write_plan_jsonl(const RenderPlan& plan, std::ostream& out) {
    for (const auto& rec : plan.records) {
        nlohmann::json j;
        j["index"] = rec.index;
        j["settings"] = nlohmann::json::object();
        j["severities"] = nlohmann::json::object();
        for (std::size_t k = 0; k < plan.factors.size(); ++k) {
            j["settings"][plan.factors[k]] = rec.settings[k];
            j["severities"][plan.factors[k]] = rec.severities[k];
        }
        out << j.dump() << '\n';
    }
}

}  // namespace cdra
