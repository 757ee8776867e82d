#ifndef CDRA_GRAPH_HPP
#define CDRA_GRAPH_HPP

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdra/rng.hpp"

namespace cdra {

/// Name of a factor node. Non-empty and unique within a graph.
using FactorId = std::string;

struct Edge {
    FactorId parent;
    FactorId child;

    auto operator<=>(const Edge&) const = default;
};

/// Unchecked graph description, as read from a file or assembled by hand.
struct DagDescription {
    std::vector<FactorId> nodes;
    std::vector<Edge> edges;
    std::optional<FactorId> sink;
};

/// Throws CycleError, or Error with DanglingEdge / DuplicateNode /
/// DuplicateEdge / SelfEdge / UnknownNode (sink not a node).
void validate(const DagDescription& description);

/// Directed acyclic graph over named factors with an optional metric sink.
/// Immutable once built; every constructor validates.
class CausalDag {
public:
    CausalDag() = default;
    explicit CausalDag(const DagDescription& description);
    CausalDag(std::vector<FactorId> nodes, std::vector<Edge> edges,
              std::optional<FactorId> sink = std::nullopt);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<FactorId>& nodes() const noexcept { return nodes_; }
    const FactorId& name(std::size_t i) const { return nodes_.at(i); }
    bool contains(std::string_view name) const;
    /// Throws UnknownNode.
    std::size_t index_of(std::string_view name) const;

    /// Parent indices in node order.
    const std::vector<std::size_t>& parents(std::size_t i) const { return parents_.at(i); }
    const std::vector<std::size_t>& children(std::size_t i) const { return children_.at(i); }
    std::vector<FactorId> parent_names(std::string_view name) const;
    bool has_edge(std::size_t parent, std::size_t child) const;
    std::size_t edge_count() const noexcept { return edge_count_; }

    /// Edges sorted lexicographically by (parent, child) name.
    std::vector<Edge> edges() const;

    std::optional<std::size_t> sink() const noexcept { return sink_; }
    std::optional<FactorId> sink_name() const;
    /// Every node except the sink, in node order.
    std::vector<std::size_t> factors() const;
    std::vector<FactorId> factor_names() const;

    /// Mask of nodes reachable from `from` by a directed path of length >= 1.
    std::vector<bool> descendants(std::size_t from) const;
    /// Mask of nodes with a directed path into any node of `targets`, targets included.
    std::vector<bool> ancestors_of(std::span<const std::size_t> targets) const;
    bool has_directed_path(std::size_t from, std::size_t to) const;

    DagDescription description() const;

    friend bool operator==(const CausalDag& a, const CausalDag& b);

private:
    std::vector<FactorId> nodes_;
    std::unordered_map<FactorId, std::size_t> index_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::size_t edge_count_ = 0;
    std::optional<std::size_t> sink_;
};

void validate(const CausalDag& dag);

/// Kahn's algorithm with a FIFO queue seeded in node order.
std::vector<std::size_t> topological_indices(const CausalDag& dag);
std::vector<FactorId> topological_order(const CausalDag& dag);

/// True iff every path between a and b is blocked given z. Sets must be
/// pairwise disjoint (InvalidArgument) and name known nodes (UnknownNode).
bool d_separated(const CausalDag& dag, std::span<const FactorId> a, std::span<const FactorId> b,
                 std::span<const FactorId> z);
bool d_separated(const CausalDag& dag, std::span<const std::size_t> a,
                 std::span<const std::size_t> b, std::span<const std::size_t> z);

/// Copy of the graph with every edge into v removed.
CausalDag mutilate(const CausalDag& dag, std::string_view v);

/// Copy of the graph with every edge out of v removed.
CausalDag remove_outgoing(const CausalDag& dag, std::string_view v);

/// Copy with a sink node added as a child of every existing node. Returns the
/// graph unchanged when it already has a sink.
CausalDag with_metric_sink(const CausalDag& dag, const FactorId& sink = "M");

/// Nodes V0..V{n-1}; each pair is joined with probability p_edge, oriented
/// along a random permutation of the nodes.
CausalDag random_dag(std::size_t n, double p_edge, Rng& rng);

enum class PerturbMode { Add, Remove };

struct DagPerturbation {
    std::vector<Edge> added;
    std::vector<Edge> removed;

    bool empty() const noexcept { return added.empty() && removed.empty(); }
};

/// Samples up to n_errors edge additions (cycle-creating candidates rejected)
/// or removals. The returned perturbation is the one actually applicable,
/// which may be smaller than requested. Edges touching the sink are left
/// alone. Remove mode without a removable edge throws NoEdgesToRemove.
DagPerturbation perturb(const CausalDag& dag, std::size_t n_errors, PerturbMode mode, Rng& rng);

CausalDag apply(const CausalDag& dag, const DagPerturbation& perturbation);

std::string_view to_string(PerturbMode mode);

}  // namespace cdra

#endif  // CDRA_GRAPH_HPP
