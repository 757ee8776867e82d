#include "cdra/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <unordered_set>
#include <utility>

#include "cdra/error.hpp"

namespace cdra {

namespace {

// Iterative DFS; returns one directed cycle (first node repeated at the end)
// or an empty vector.
std::vector<std::size_t> find_cycle(const std::vector<std::vector<std::size_t>>& children) {
    const std::size_t n = children.size();
    enum class Mark { White, Grey, Black };
    std::vector<Mark> mark(n, Mark::White);
    std::vector<std::size_t> via(n, n);
    for (std::size_t root = 0; root < n; ++root) {
        if (mark[root] != Mark::White) continue;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
        mark[root] = Mark::Grey;
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            if (next == children[u].size()) {
                mark[u] = Mark::Black;
                stack.pop_back();
                continue;
            }
            const std::size_t v = children[u][next++];
            if (mark[v] == Mark::Grey) {
                std::vector<std::size_t> cycle{v};
                for (std::size_t w = u; w != v; w = via[w]) cycle.push_back(w);
                cycle.push_back(v);
                std::reverse(cycle.begin(), cycle.end());
                return cycle;
            }
            if (mark[v] == Mark::White) {
                mark[v] = Mark::Grey;
                via[v] = u;
                stack.emplace_back(v, 0);
            }
        }
    }
    return {};
}

std::vector<std::size_t> resolve(const CausalDag& dag, std::span<const FactorId> names) {
    std::vector<std::size_t> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(dag.index_of(n));
    return out;
}

}  // namespace

void validate(const DagDescription& description) {
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < description.nodes.size(); ++i) {
        const auto& name = description.nodes[i];
        if (name.empty()) throw Error(ErrorCode::InvalidArgument, "node names must be non-empty");
        if (!index.emplace(name, i).second)
            throw Error(ErrorCode::DuplicateNode, "duplicate node: " + name);
    }
    std::vector<std::vector<std::size_t>> children(description.nodes.size());
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : description.edges) {
        auto p = index.find(e.parent);
        auto c = index.find(e.child);
        if (p == index.end() || c == index.end()) {
            throw Error(ErrorCode::DanglingEdge, "edge " + e.parent + " -> " + e.child +
                                                     " references unknown node " +
                                                     (p == index.end() ? e.parent : e.child));
        }
        if (p->second == c->second)
            throw Error(ErrorCode::SelfEdge, "self edge on " + e.parent);
        if (!seen.emplace(p->second, c->second).second)
            throw Error(ErrorCode::DuplicateEdge, "duplicate edge " + e.parent + " -> " + e.child);
        children[p->second].push_back(c->second);
    }
    if (description.sink && !index.contains(*description.sink))
        throw Error(ErrorCode::UnknownNode, "sink is not a node: " + *description.sink);
    if (auto cycle = find_cycle(children); !cycle.empty()) {
        std::vector<std::string> names;
        for (auto i : cycle) names.push_back(description.nodes[i]);
        throw CycleError(std::move(names));
    }
}

CausalDag::CausalDag(const DagDescription& description) {
    validate(description);
    nodes_ = description.nodes;
    parents_.resize(nodes_.size());
    children_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i], i);
    for (const auto& e : description.edges) {
        const std::size_t p = index_.at(e.parent);
        const std::size_t c = index_.at(e.child);
        parents_[c].push_back(p);
        children_[p].push_back(c);
    }
    for (auto& v : parents_) std::sort(v.begin(), v.end());
    for (auto& v : children_) std::sort(v.begin(), v.end());
    edge_count_ = description.edges.size();
    if (description.sink) sink_ = index_.at(*description.sink);
}

CausalDag::CausalDag(std::vector<FactorId> nodes, std::vector<Edge> edges,
                     std::optional<FactorId> sink)
    : CausalDag(DagDescription{std::move(nodes), std::move(edges), std::move(sink)}) {}

bool CausalDag::contains(std::string_view name) const {
    return index_.contains(std::string(name));
}

std::size_t CausalDag::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw Error(ErrorCode::UnknownNode, "unknown node: " + std::string(name));
    return it->second;
}

std::vector<FactorId> CausalDag::parent_names(std::string_view name) const {
    std::vector<FactorId> out;
    for (auto p : parents_[index_of(name)]) out.push_back(nodes_[p]);
    return out;
}

bool CausalDag::has_edge(std::size_t parent, std::size_t child) const {
    const auto& ps = parents_.at(child);
    return std::binary_search(ps.begin(), ps.end(), parent);
}

std::vector<Edge> CausalDag::edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count_);
    for (std::size_t c = 0; c < nodes_.size(); ++c)
        for (auto p : parents_[c]) out.push_back({nodes_[p], nodes_[c]});
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<FactorId> CausalDag::sink_name() const {
    if (!sink_) return std::nullopt;
    return nodes_[*sink_];
}

std::vector<std::size_t> CausalDag::factors() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!sink_ || *sink_ != i) out.push_back(i);
    return out;
}

std::vector<FactorId> CausalDag::factor_names() const {
    std::vector<FactorId> out;
    for (auto i : factors()) out.push_back(nodes_[i]);
    return out;
}

std::vector<bool> CausalDag::descendants(std::size_t from) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<std::size_t> stack(children_.at(from).begin(), children_.at(from).end());
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        if (seen[u]) continue;
        seen[u] = true;
        for (auto c : children_[u])
            if (!seen[c]) stack.push_back(c);
    }
    return seen;
}

std::vector<bool> CausalDag::ancestors_of(std::span<const std::size_t> targets) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<std::size_t> stack(targets.begin(), targets.end());
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        if (seen[u]) continue;
        seen[u] = true;
        for (auto p : parents_[u])
            if (!seen[p]) stack.push_back(p);
    }
    return seen;
}

bool CausalDag::has_directed_path(std::size_t from, std::size_t to) const {
    return descendants(from)[to];
}

DagDescription CausalDag::description() const {
    return DagDescription{nodes_, edges(), sink_name()};
}

bool operator==(const CausalDag& a, const CausalDag& b) {
    return a.nodes_ == b.nodes_ && a.parents_ == b.parents_ && a.sink_ == b.sink_;
}

void validate(const CausalDag& dag) { validate(dag.description()); }

std::vector<std::size_t> topological_indices(const CausalDag& dag) {
    const std::size_t n = dag.size();
    std::vector<std::size_t> pending(n);
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        pending[i] = dag.parents(i).size();
        if (pending[i] == 0) queue.push_back(i);
    }
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        order.push_back(u);
        for (auto c : dag.children(u))
            if (--pending[c] == 0) queue.push_back(c);
    }
    if (order.size() != n) validate(dag);  // unreachable for a constructed dag
    return order;
}

std::vector<FactorId> topological_order(const CausalDag& dag) {
    std::vector<FactorId> out;
    for (auto i : topological_indices(dag)) out.push_back(dag.name(i));
    return out;
}

bool d_separated(const CausalDag& dag, std::span<const std::size_t> a,
                 std::span<const std::size_t> b, std::span<const std::size_t> z) {
    const std::size_t n = dag.size();
    std::vector<char> role(n, 0);  // 1 = a, 2 = b, 4 = z
    auto tag = [&](std::span<const std::size_t> set, char bit) {
        for (auto i : set) {
            if (i >= n) throw Error(ErrorCode::UnknownNode, "node index out of range");
            if (role[i] & ~bit)
                throw Error(ErrorCode::InvalidArgument,
                            "d-separation sets must be disjoint (" + dag.name(i) + ")");
            role[i] |= bit;
        }
    };
    tag(a, 1);
    tag(b, 2);
    tag(z, 4);

    const std::vector<bool> z_anc = dag.ancestors_of(z);

    // Reachability over (node, direction) states. `up` means the trail
    // arrived from a child, `down` means it arrived from a parent.
    std::vector<char> visited_up(n, 0), visited_down(n, 0);
    std::vector<std::pair<std::size_t, bool>> stack;
    for (auto s : a) stack.emplace_back(s, true);
    while (!stack.empty()) {
        auto [y, up] = stack.back();
        stack.pop_back();
        auto& visited = up ? visited_up : visited_down;
        if (visited[y]) continue;
        visited[y] = 1;
        const bool in_z = role[y] & 4;
        if (!in_z && (role[y] & 2)) return false;
        if (up) {
            if (in_z) continue;
            for (auto p : dag.parents(y)) stack.emplace_back(p, true);
            for (auto c : dag.children(y)) stack.emplace_back(c, false);
        } else {
            if (!in_z)
                for (auto c : dag.children(y)) stack.emplace_back(c, false);
            if (z_anc[y])
                for (auto p : dag.parents(y)) stack.emplace_back(p, true);
        }
    }
    return true;
}

bool d_separated(const CausalDag& dag, std::span<const FactorId> a, std::span<const FactorId> b,
                 std::span<const FactorId> z) {
    const auto ai = resolve(dag, a);
    const auto bi = resolve(dag, b);
    const auto zi = resolve(dag, z);
    return d_separated(dag, std::span<const std::size_t>(ai), std::span<const std::size_t>(bi),
                       std::span<const std::size_t>(zi));
}

CausalDag mutilate(const CausalDag& dag, std::string_view v) {
    const std::size_t target = dag.index_of(v);
    auto d = dag.description();
    std::erase_if(d.edges, [&](const Edge& e) { return e.child == dag.name(target); });
    return CausalDag(d);
}

CausalDag remove_outgoing(const CausalDag& dag, std::string_view v) {
    const std::size_t target = dag.index_of(v);
    auto d = dag.description();
    std::erase_if(d.edges, [&](const Edge& e) { return e.parent == dag.name(target); });
    return CausalDag(d);
}

CausalDag with_metric_sink(const CausalDag& dag, const FactorId& sink) {
    if (dag.sink()) return dag;
    auto d = dag.description();
    for (const auto& node : dag.nodes()) d.edges.push_back({node, sink});
    d.nodes.push_back(sink);
    d.sink = sink;
    return CausalDag(d);
}

CausalDag random_dag(std::size_t n, double p_edge, Rng& rng) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "random_dag needs at least one node");
    if (!(p_edge >= 0.0 && p_edge <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "edge probability must lie in [0, 1]");
    DagDescription d;
    for (std::size_t i = 0; i < n; ++i) d.nodes.push_back("V" + std::to_string(i));
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng.bernoulli(p_edge)) d.edges.push_back({d.nodes[perm[i]], d.nodes[perm[j]]});
    return CausalDag(d);
}

DagPerturbation perturb(const CausalDag& dag, std::size_t n_errors, PerturbMode mode, Rng& rng) {
    if (n_errors == 0) throw Error(ErrorCode::InvalidArgument, "n_errors must be at least 1");
    const auto sink = dag.sink();
    auto touches_sink = [&](std::size_t u, std::size_t v) {
        return sink && (*sink == u || *sink == v);
    };
    DagPerturbation out;
    if (mode == PerturbMode::Remove) {
        std::vector<Edge> pool;
        for (const auto& e : dag.edges())
            if (!touches_sink(dag.index_of(e.parent), dag.index_of(e.child))) pool.push_back(e);
        if (pool.empty()) throw Error(ErrorCode::NoEdgesToRemove, "graph has no removable edges");
        const std::size_t k = std::min(n_errors, pool.size());
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
            out.removed.push_back(pool[i]);
        }
        return out;
    }

    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t u = 0; u < dag.size(); ++u)
        for (std::size_t v = 0; v < dag.size(); ++v)
            if (u != v && !touches_sink(u, v) && !dag.has_edge(u, v)) candidates.emplace_back(u, v);

    std::vector<std::vector<std::size_t>> children(dag.size());
    for (std::size_t u = 0; u < dag.size(); ++u) children[u] = dag.children(u);
    auto reaches = [&](std::size_t from, std::size_t to) {
        std::vector<bool> seen(children.size(), false);
        std::vector<std::size_t> stack{from};
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            if (u == to) return true;
            if (seen[u]) continue;
            seen[u] = true;
            for (auto c : children[u]) stack.push_back(c);
        }
        return false;
    };
    while (out.added.size() < n_errors && !candidates.empty()) {
        const std::size_t pick = rng.below(candidates.size());
        const auto [u, v] = candidates[pick];
        candidates[pick] = candidates.back();
        candidates.pop_back();
        if (children[u].end() != std::find(children[u].begin(), children[u].end(), v)) continue;
        if (reaches(v, u)) continue;
        children[u].push_back(v);
        out.added.push_back({dag.name(u), dag.name(v)});
    }
    return out;
}

CausalDag apply(const CausalDag& dag, const DagPerturbation& perturbation) {
    for (const auto& a : perturbation.added)
        for (const auto& r : perturbation.removed)
            if (a == r)
                throw Error(ErrorCode::InvalidArgument,
                            "edge both added and removed: " + a.parent + " -> " + a.child);
    auto d = dag.description();
    for (const auto& r : perturbation.removed) {
        auto it = std::find(d.edges.begin(), d.edges.end(), r);
        if (it == d.edges.end())
            throw Error(ErrorCode::InvalidArgument,
                        "cannot remove missing edge " + r.parent + " -> " + r.child);
        d.edges.erase(it);
    }
    d.edges.insert(d.edges.end(), perturbation.added.begin(), perturbation.added.end());
    return CausalDag(d);
}

std::string_view to_string(PerturbMode mode) {
    return mode == PerturbMode::Add ? "add" : "remove";
}

}  // namespace cdra
