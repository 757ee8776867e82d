#ifndef CDRA_IDENTIFY_HPP
#define CDRA_IDENTIFY_HPP

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cdra/graph.hpp"

namespace cdra {

enum class AdjustmentMethod { Backdoor, FrontdoorCheckOnly };

std::string_view to_string(AdjustmentMethod method);

struct AdjustmentSet {
    FactorId target;
    /// Sorted by name.
    std::vector<FactorId> variables;
    AdjustmentMethod method = AdjustmentMethod::Backdoor;
    bool minimal = false;
};

/// Backdoor criterion: no member of w descends from v, and w d-separates v from
/// the sink once the edges out of v are removed.
bool is_valid_backdoor(const CausalDag& dag, std::string_view v, std::string_view sink,
                       std::span<const FactorId> w);

/// Parents of v; valid whenever every common cause is observed.
AdjustmentSet default_adjustment_set(const CausalDag& dag, std::string_view v,
                                     std::string_view sink);

inline constexpr std::size_t kEnumerationNodeBound = 20;

/// Every inclusion-minimal valid backdoor set, smallest first, up to `cap`.
/// Throws EnumerationBoundExceeded above 20 nodes.
std::vector<AdjustmentSet> minimal_adjustment_sets(const CausalDag& dag, std::string_view v,
                                                   std::string_view sink, std::size_t cap = 64);

struct FrontdoorResult {
    bool applicable = false;
    std::vector<FactorId> mediators;
};

/// Checks the frontdoor criterion for a candidate mediator set z.
bool satisfies_frontdoor(const CausalDag& dag, std::string_view v, std::string_view sink,
                         std::span<const FactorId> z);

/// Searches non-empty factor sets by size for a frontdoor witness.
FrontdoorResult frontdoor_applicable(const CausalDag& dag, std::string_view v, std::string_view sink);

}  // namespace cdra

#endif  // CDRA_IDENTIFY_HPP
