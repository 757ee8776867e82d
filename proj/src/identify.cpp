#include "cdra/identify.hpp"

#include <algorithm>
#include <functional>

#include "cdra/error.hpp"

namespace cdra {

namespace {

std::vector<std::size_t> indices(const CausalDag& dag, std::span<const FactorId> names) {
    std::vector<std::size_t> out;
    for (const auto& n : names) out.push_back(dag.index_of(n));
    return out;
}

std::vector<FactorId> sorted_names(const CausalDag& dag, std::span<const std::size_t> idx) {
    std::vector<FactorId> out;
    for (auto i : idx) out.push_back(dag.name(i));
    std::sort(out.begin(), out.end());
    return out;
}

// Visits subsets of `pool` in order of size, then lexicographically by position.
// Stops when visit returns false.
void for_each_subset(std::size_t pool, std::size_t min_size,
                     const std::function<bool(const std::vector<std::size_t>&)>& visit) {
    for (std::size_t k = min_size; k <= pool; ++k) {
        std::vector<std::size_t> pick(k);
        for (std::size_t i = 0; i < k; ++i) pick[i] = i;
        while (true) {
            if (!visit(pick)) return;
            std::size_t i = k;
            while (i > 0 && pick[i - 1] == pool - k + i - 1) --i;
            if (i == 0) break;
            ++pick[i - 1];
            for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
        }
    }
}

bool backdoor_ok(const CausalDag& cut, std::size_t v, std::size_t sink,
                 const std::vector<bool>& desc, std::span<const std::size_t> w) {
    for (auto x : w)
        if (desc[x]) return false;
    const std::size_t a[] = {v};
    const std::size_t b[] = {sink};
    return d_separated(cut, a, b, w);
}

}  // namespace

std::string_view to_string(AdjustmentMethod method) {
    return method == AdjustmentMethod::Backdoor ? "backdoor" : "frontdoor-check-only";
}

bool is_valid_backdoor(const CausalDag& dag, std::string_view v, std::string_view sink,
                       std::span<const FactorId> w) {
    const std::size_t vi = dag.index_of(v);
    const std::size_t si = dag.index_of(sink);
    const auto wi = indices(dag, w);
    for (auto x : wi)
        if (x == vi || x == si)
            throw Error(ErrorCode::InvalidArgument, "adjustment set must exclude target and sink");
    const CausalDag cut = remove_outgoing(dag, v);
    return backdoor_ok(cut, vi, si, dag.descendants(vi), wi);
}

AdjustmentSet default_adjustment_set(const CausalDag& dag, std::string_view v, std::string_view sink) {
    const std::size_t vi = dag.index_of(v);
    const std::size_t si = dag.index_of(sink);
    std::vector<std::size_t> parents;
    for (auto p : dag.parents(vi))
        if (p != si) parents.push_back(p);
    return {std::string(v), sorted_names(dag, parents), AdjustmentMethod::Backdoor, false};
}

std::vector<AdjustmentSet> minimal_adjustment_sets(const CausalDag& dag, std::string_view v,
                                                   std::string_view sink, std::size_t cap) {
    if (dag.size() > kEnumerationNodeBound)
        throw Error(ErrorCode::EnumerationBoundExceeded,
                    "minimal adjustment search supports at most " +
                        std::to_string(kEnumerationNodeBound) + " nodes");
    const std::size_t vi = dag.index_of(v);
    const std::size_t si = dag.index_of(sink);
    const auto desc = dag.descendants(vi);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < dag.size(); ++i)
        if (i != vi && i != si && !desc[i]) pool.push_back(i);
    const CausalDag cut = remove_outgoing(dag, v);

    std::vector<std::vector<std::size_t>> found;
    std::vector<AdjustmentSet> out;
    if (cap == 0) return out;
    for_each_subset(pool.size(), 0, [&](const std::vector<std::size_t>& pick) {
        std::vector<std::size_t> w;
        for (auto p : pick) w.push_back(pool[p]);
        for (const auto& f : found)
            if (std::includes(w.begin(), w.end(), f.begin(), f.end())) return true;
        if (!backdoor_ok(cut, vi, si, desc, w)) return true;
        found.push_back(w);
        out.push_back({std::string(v), sorted_names(dag, w), AdjustmentMethod::Backdoor, true});
        return out.size() < cap;
    });
    return out;
}

bool satisfies_frontdoor(const CausalDag& dag, std::string_view v, std::string_view sink,
                         std::span<const FactorId> z) {
    const std::size_t vi = dag.index_of(v);
    const std::size_t si = dag.index_of(sink);
    const auto zi = indices(dag, z);
    std::vector<bool> in_z(dag.size(), false);
    for (auto x : zi) {
        if (x == vi || x == si) return false;
        in_z[x] = true;
    }

    // Every directed path v -> sink passes through z.
    std::vector<bool> seen(dag.size(), false);
    std::vector<std::size_t> stack{vi};
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        if (u == si) return false;
        if (seen[u]) continue;
        seen[u] = true;
        for (auto c : dag.children(u))
            if (!in_z[c]) stack.push_back(c);
    }

    // No open backdoor path from v to any mediator.
    const CausalDag v_cut = remove_outgoing(dag, v);
    const std::size_t va[] = {vi};
    for (auto x : zi) {
        const std::size_t b[] = {x};
        if (!d_separated(v_cut, va, b, std::span<const std::size_t>{})) return false;
    }

    // Every backdoor path from the mediators to the sink is blocked by v.
    auto d = dag.description();
    std::erase_if(d.edges, [&](const Edge& e) { return in_z[dag.index_of(e.parent)]; });
    const CausalDag z_cut(d);
    const std::size_t sb[] = {si};
    return d_separated(z_cut, zi, sb, va);
}

FrontdoorResult frontdoor_applicable(const CausalDag& dag, std::string_view v, std::string_view sink) {
    if (dag.size() > kEnumerationNodeBound)
        throw Error(ErrorCode::EnumerationBoundExceeded,
                    "frontdoor search supports at most " + std::to_string(kEnumerationNodeBound) + " nodes");
    const std::size_t vi = dag.index_of(v);
    const std::size_t si = dag.index_of(sink);
    std::vector<FactorId> pool;
    for (std::size_t i = 0; i < dag.size(); ++i)
        if (i != vi && i != si) pool.push_back(dag.name(i));

    FrontdoorResult result;
    for_each_subset(pool.size(), 1, [&](const std::vector<std::size_t>& pick) {
        std::vector<FactorId> z;
        for (auto p : pick) z.push_back(pool[p]);
        if (!satisfies_frontdoor(dag, v, sink, z)) return true;
        std::sort(z.begin(), z.end());
        result = {true, std::move(z)};
        return false;
    });
    return result;
}

}  // namespace cdra
