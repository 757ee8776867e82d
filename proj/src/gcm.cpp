#include "cdra/gcm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdra/error.hpp"
#include "cdra/parallel.hpp"

namespace cdra {

namespace {

constexpr std::size_t kShardRows = 4096;
constexpr double kSimplexTolerance = 1e-12;

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::InvalidGcm, message); }

}  // namespace

std::string_view to_string(MetricKind kind) {
    return kind == MetricKind::Correctness ? "correctness" : "continuous";
}

Gcm::Gcm(CausalDag dag, std::map<FactorId, SeverityDomain> domains, std::vector<Cpd> cpds,
         TaskResponse response)
    : dag_(std::move(dag)), response_(std::move(response)) {
    if (!dag_.sink()) invalid("causal graph has no metric sink");
    sink_ = *dag_.sink();
    if (!dag_.children(sink_).empty()) invalid("metric sink " + dag_.name(sink_) + " has children");
    factors_ = dag_.factors();
    for (auto i : topological_indices(dag_))
        if (i != sink_) order_.push_back(i);

    domains_.resize(dag_.size());
    for (const auto& [name, dom] : domains) {
        if (!dag_.contains(name)) invalid("domain given for unknown factor " + name);
        if (dag_.index_of(name) == sink_) invalid("the metric sink takes no severity domain");
    }
    for (auto f : factors_) {
        auto it = domains.find(dag_.name(f));
        if (it == domains.end()) invalid("no domain for factor " + dag_.name(f));
        domains_[f] = it->second;
    }

    cpd_slot_.assign(dag_.size(), std::numeric_limits<std::size_t>::max());
    cpds_.resize(factors_.size());
    for (auto& c : cpds) {
        if (!dag_.contains(c.child)) invalid("CPD for unknown factor " + c.child);
        const std::size_t node = dag_.index_of(c.child);
        if (node == sink_) invalid("the metric sink " + c.child + " must not have a CPD");
        const std::size_t slot =
            static_cast<std::size_t>(std::find(factors_.begin(), factors_.end(), node) - factors_.begin());
        if (cpd_slot_[node] != std::numeric_limits<std::size_t>::max())
            invalid("duplicate CPD for " + c.child);
        cpd_slot_[node] = slot;
        if (c.parents != dag_.parent_names(c.child))
            invalid("CPD parents of " + c.child + " do not match the graph");
        std::size_t rows = 1;
        for (auto p : dag_.parents(node)) rows *= domains_[p].size();
        if (c.table.size() != rows)
            invalid("CPD of " + c.child + " has " + std::to_string(c.table.size()) + " rows, expected " +
                    std::to_string(rows));
        for (std::size_t r = 0; r < rows; ++r) {
            const auto& row = c.table[r];
            if (row.size() != domains_[node].size())
                invalid("CPD row " + std::to_string(r) + " of " + c.child + " has wrong width");
            double sum = 0.0;
            for (double p : row) {
                if (!(p >= 0.0) || !std::isfinite(p))
                    invalid("CPD row " + std::to_string(r) + " of " + c.child + " has a negative entry");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kSimplexTolerance)
                invalid("CPD row " + std::to_string(r) + " of " + c.child + " sums to " +
                        std::to_string(sum) + ", not 1");
        }
        cpds_[slot] = std::move(c);
    }
    for (auto f : factors_)
        if (cpd_slot_[f] == std::numeric_limits<std::size_t>::max())
            invalid("no CPD for factor " + dag_.name(f));

    if (!(response_.base >= 0.0 && response_.base <= 1.0)) invalid("response base must lie in [0, 1]");
    if (!(response_.noise_sigma >= 0.0)) invalid("response noise_sigma must be non-negative");
    const auto& sink_parents = dag_.parents(sink_);
    auto require_sink_parent = [&](const FactorId& name) {
        if (!dag_.contains(name)) invalid("response references unknown factor " + name);
        const std::size_t node = dag_.index_of(name);
        if (!std::binary_search(sink_parents.begin(), sink_parents.end(), node))
            invalid("response depends on " + name + ", which has no edge into " + dag_.name(sink_));
        return node;
    };
    retention_.assign(dag_.size(), {});
    for (const auto& [name, mult] : response_.retention) {
        const std::size_t node = require_sink_parent(name);
        if (mult.size() != domains_[node].size())
            invalid("retention of " + name + " needs one multiplier per level");
        for (double m : mult)
            if (!(m > 0.0 && m <= 1.0)) invalid("retention multipliers of " + name + " must lie in (0, 1]");
        if (mult.front() != 1.0) invalid("retention of " + name + " at its lowest level must be 1");
        retention_[node] = mult;
    }
    for (const auto& ix : response_.interactions) {
        const std::size_t a = require_sink_parent(ix.a);
        const std::size_t b = require_sink_parent(ix.b);
        auto ca = domains_[a].index_of(ix.level_a);
        auto cb = domains_[b].index_of(ix.level_b);
        if (!ca || !cb) invalid("interaction level outside domain for " + ix.a + "/" + ix.b);
        if (!(ix.multiplier >= 0.0) || !std::isfinite(ix.multiplier))
            invalid("interaction multiplier must be finite and non-negative");
        interactions_.push_back({a, b, static_cast<std::uint32_t>(*ca),
                                 static_cast<std::uint32_t>(*cb), ix.multiplier});
    }
}

const SeverityDomain& Gcm::domain(std::string_view factor) const {
    const std::size_t node = dag_.index_of(factor);
    if (node == sink_) throw Error(ErrorCode::InvalidArgument, "the metric sink has no domain");
    return domains_[node];
}

const Cpd& Gcm::cpd(std::string_view factor) const {
    const std::size_t node = dag_.index_of(factor);
    if (node == sink_) throw Error(ErrorCode::InvalidArgument, "the metric sink has no CPD");
    return cpds_[cpd_slot_[node]];
}

std::map<FactorId, SeverityDomain> Gcm::domain_map() const {
    std::map<FactorId, SeverityDomain> out;
    for (auto f : factors_) out.emplace(dag_.name(f), domains_[f]);
    return out;
}

std::size_t Gcm::row_of(std::size_t node, std::span<const std::uint32_t> codes) const {
    std::size_t row = 0;
    for (auto p : dag_.parents(node)) row = row * domains_[p].size() + codes[p];
    return row;
}

double Gcm::probability(std::size_t node, std::span<const std::uint32_t> codes) const {
    return cpds_[cpd_slot_[node]].table[row_of(node, codes)][codes[node]];
}

double Gcm::success_probability(std::span<const std::uint32_t> codes) const {
    double p = response_.base;
    for (auto f : factors_)
        if (!retention_[f].empty()) p *= retention_[f][codes[f]];
    for (const auto& ix : interactions_)
        if (codes[ix.a] == ix.code_a && codes[ix.b] == ix.code_b) p *= ix.multiplier;
    return std::clamp(p, 0.0, 1.0);
}

std::uint32_t Gcm::draw(std::size_t node, std::span<const std::uint32_t> codes, Rng& rng) const {
    const auto& row = cpds_[cpd_slot_[node]].table[row_of(node, codes)];
    const double u = rng.uniform();
    double acc = 0.0;
    std::uint32_t last_positive = 0;
    for (std::uint32_t k = 0; k < row.size(); ++k) {
        if (row[k] <= 0.0) continue;
        acc += row[k];
        last_positive = k;
        if (u < acc) return k;
    }
    return last_positive;
}

double Gcm::draw_metric(std::span<const std::uint32_t> codes, Rng& rng) const {
    const double p = success_probability(codes);
    if (response_.kind == MetricKind::Correctness) return rng.bernoulli(p) ? 1.0 : 0.0;
    return p + (response_.noise_sigma > 0.0 ? rng.normal(0.0, response_.noise_sigma) : 0.0);
}

ObservationTable Gcm::empty_table() const {
    std::vector<SeverityDomain> doms;
    for (auto f : factors_) doms.push_back(domains_[f]);
    return ObservationTable(dag_.factor_names(), std::move(doms), metric_name());
}

namespace {

ObservationTable sample_rows(const Gcm& gcm, std::optional<std::pair<std::size_t, std::uint32_t>> clamp,
                             std::size_t n, Rng& rng, std::size_t workers) {
    const std::uint64_t base = rng.next_u64();
    const std::size_t shards = (n + kShardRows - 1) / kShardRows;
    std::vector<ObservationTable> parts(shards);
    std::vector<std::size_t> order;
    for (auto i : topological_indices(gcm.dag()))
        if (i != gcm.sink()) order.push_back(i);

    parallel_for(shards, workers, [&](std::size_t k) {
        Rng shard_rng(derive_seed(base, k));
        const std::size_t rows = std::min(kShardRows, n - k * kShardRows);
        ObservationTable part = gcm.empty_table();
        part.reserve(rows);
        std::vector<std::uint32_t> codes(gcm.dag().size(), 0);
        std::vector<std::uint32_t> row(gcm.factors().size());
        for (std::size_t r = 0; r < rows; ++r) {
            for (auto node : order) {
                codes[node] = (clamp && clamp->first == node) ? clamp->second
                                                              : gcm.draw(node, codes, shard_rng);
            }
            for (std::size_t j = 0; j < row.size(); ++j) row[j] = codes[gcm.factors()[j]];
            part.add_row_codes(row, gcm.draw_metric(codes, shard_rng));
        }
        parts[k] = std::move(part);
    });

    ObservationTable out = gcm.empty_table();
    out.reserve(n);
    for (const auto& p : parts) out.append(p);
    out.seed = rng.seed();
    out.source = TableSource::Simulated;
    return out;
}

std::pair<std::size_t, std::uint32_t> resolve_level(const Gcm& gcm, std::string_view v, int value) {
    const std::size_t node = gcm.dag().index_of(v);
    if (node == gcm.sink()) throw Error(ErrorCode::InvalidArgument, "cannot intervene on the metric sink");
    auto code = gcm.domain(node).index_of(value);
    if (!code)
        throw Error(ErrorCode::LevelOutOfDomain,
                    "level " + std::to_string(value) + " outside domain of " + std::string(v));
    return {node, static_cast<std::uint32_t>(*code)};
}

}  // namespace

ObservationTable sample_observational(const Gcm& gcm, std::size_t n, Rng& rng, std::size_t workers) {
    return sample_rows(gcm, std::nullopt, n, rng, workers);
}

ObservationTable sample_interventional(const Gcm& gcm, std::string_view v, int value, std::size_t n,
                                       Rng& rng, std::size_t workers) {
    return sample_rows(gcm, resolve_level(gcm, v, value), n, rng, workers);
}

std::uint64_t joint_state_count(const Gcm& gcm) {
    std::uint64_t total = 1;
    for (auto f : gcm.factors()) {
        const std::uint64_t k = gcm.domain(f).size();
        if (total > std::numeric_limits<std::uint64_t>::max() / k)
            return std::numeric_limits<std::uint64_t>::max();
        total *= k;
    }
    return total;
}

void enumerate_states(
    const Gcm& gcm, std::optional<std::pair<std::size_t, std::uint32_t>> clamp,
    const std::function<void(std::span<const std::uint32_t>, double, double)>& visit,
    std::uint64_t cap) {
    const std::uint64_t states = joint_state_count(gcm);
    if (states > cap)
        throw Error(ErrorCode::StateSpaceTooLarge,
                    "joint state space " + std::to_string(states) + " exceeds cap " + std::to_string(cap));
    std::vector<std::size_t> free;
    for (auto f : gcm.factors())
        if (!clamp || clamp->first != f) free.push_back(f);
    std::vector<std::uint32_t> codes(gcm.dag().size(), 0);
    if (clamp) codes[clamp->first] = clamp->second;

    while (true) {
        double prob = 1.0;
        for (auto f : gcm.factors())
            if (!clamp || clamp->first != f) prob *= gcm.probability(f, codes);
        visit(codes, prob, gcm.success_probability(codes));
        std::size_t i = 0;
        for (; i < free.size(); ++i) {
            if (++codes[free[i]] < gcm.domain(free[i]).size()) break;
            codes[free[i]] = 0;
        }
        if (i == free.size()) break;
    }
}

double exact_interventional_expectation(const Gcm& gcm, std::string_view v, int value,
                                        std::uint64_t cap) {
    double total = 0.0;
    enumerate_states(gcm, resolve_level(gcm, v, value),
                     [&](std::span<const std::uint32_t>, double p, double s) { total += p * s; }, cap);
    return total;
}

double true_ace(const Gcm& gcm, std::string_view v, int from, int to, std::uint64_t cap) {
    if (from == to) {
        resolve_level(gcm, v, from);
        return 0.0;
    }
    return exact_interventional_expectation(gcm, v, to, cap) -
           exact_interventional_expectation(gcm, v, from, cap);
}

double observational_contrast(const Gcm& gcm, std::string_view v, int from, int to,
                              std::uint64_t cap) {
    const auto [node, code_from] = resolve_level(gcm, v, from);
    const auto code_to = resolve_level(gcm, v, to).second;
    double mass_from = 0.0, mass_to = 0.0, sum_from = 0.0, sum_to = 0.0;
    enumerate_states(
        gcm, std::nullopt,
        [&](std::span<const std::uint32_t> codes, double p, double s) {
            if (codes[node] == code_from) {
                mass_from += p;
                sum_from += p * s;
            }
            if (codes[node] == code_to) {
                mass_to += p;
                sum_to += p * s;
            }
        },
        cap);
    if (mass_from <= 0.0 || mass_to <= 0.0)
        throw Error(ErrorCode::InvalidArgument,
                    "conditioning level of " + std::string(v) + " has zero probability");
    return sum_to / mass_to - sum_from / mass_from;
}

GroundTruth ground_truth_ace(const Gcm& gcm, std::string_view v, int from, int to,
                             const TruthOptions& options) {
    if (joint_state_count(gcm) <= options.state_cap)
        return {true_ace(gcm, v, from, to, options.state_cap), 0.0, true};
    if (options.mc_samples < 2)
        throw Error(ErrorCode::InvalidArgument, "Monte-Carlo fallback needs at least 2 samples");
    Rng rng(options.seed);
    auto moments = [&](int level) {
        const auto table = sample_interventional(gcm, v, level, options.mc_samples, rng, options.workers);
        const double mean = table.mean_metric();
        double ss = 0.0;
        for (double m : table.metric_column()) ss += (m - mean) * (m - mean);
        return std::pair{mean, ss / static_cast<double>(table.rows() - 1)};
    };
    const auto [m_from, var_from] = moments(from);
    const auto [m_to, var_to] = moments(to);
    const double n = static_cast<double>(options.mc_samples);
    return {m_to - m_from, std::sqrt(var_from / n + var_to / n), false};
}

Gcm random_gcm(const CausalDag& dag, const SeverityDomain& domain, Rng& rng,
               const RandomGcmOptions& options) {
    if (!(options.dirichlet_alpha > 0.0))
        throw Error(ErrorCode::InvalidArgument, "Dirichlet concentration must be positive");
    const CausalDag full = with_metric_sink(dag, options.sink);
    const std::size_t sink = *full.sink();
    std::map<FactorId, SeverityDomain> domains;
    std::vector<Cpd> cpds;
    for (auto f : full.factors()) {
        domains.emplace(full.name(f), domain);
        Cpd cpd{full.name(f), full.parent_names(full.name(f)), {}};
        std::size_t rows = 1;
        for (std::size_t i = 0; i < full.parents(f).size(); ++i) rows *= domain.size();
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> row(domain.size());
            double total = 0.0;
            for (auto& x : row) total += (x = rng.gamma(options.dirichlet_alpha));
            for (auto& x : row) x /= total;
            cpd.table.push_back(std::move(row));
        }
        cpds.push_back(std::move(cpd));
    }
    TaskResponse response;
    response.base = rng.uniform(options.base_lo, options.base_hi);
    for (auto p : full.parents(sink)) {
        std::vector<double> mult(domain.size(), 1.0);
        for (std::size_t k = 1; k < mult.size(); ++k)
            mult[k] = rng.uniform(options.retention_lo, options.retention_hi);
        std::sort(mult.begin() + 1, mult.end(), std::greater<>());
        for (auto& m : mult) m = std::min(m, 1.0);
        response.retention.emplace(full.name(p), std::move(mult));
    }
    return Gcm(full, std::move(domains), std::move(cpds), std::move(response));
}

}  // namespace cdra
