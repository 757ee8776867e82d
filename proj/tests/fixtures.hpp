#ifndef CDRA_TESTS_FIXTURES_HPP
#define CDRA_TESTS_FIXTURES_HPP

#include <algorithm>
#include <string>
#include <vector>

#include "cdra/gcm.hpp"
#include "cdra/graph.hpp"

namespace fixture {

/// A -> B over {0,1}; P(A=1) = 0.5, P(B=1 | A) = (0.2, 0.8). Success
/// probability 0.9 - 0.3 A - 0.4 B, written as retention with one interaction:
/// 0.9, 0.6, 0.5, 0.2 for (A,B) = (0,0), (1,0), (0,1), (1,1).
inline cdra::Gcm worked_model() {
    cdra::CausalDag dag({"A", "B", "M"}, {{"A", "B"}, {"A", "M"}, {"B", "M"}}, "M");
    const cdra::SeverityDomain bin(std::vector<int>{0, 1});
    std::vector<cdra::Cpd> cpds{
        {"A", {}, {{0.5, 0.5}}},
        {"B", {"A"}, {{0.8, 0.2}, {0.2, 0.8}}},
    };
    cdra::TaskResponse r;
    r.base = 0.9;
    r.retention["A"] = {1.0, 2.0 / 3.0};
    r.retention["B"] = {1.0, 5.0 / 9.0};
    r.interactions.push_back({"A", "B", 1, 1, 0.6});
    return cdra::Gcm(dag, {{"A", bin}, {"B", bin}}, cpds, r);
}

/// Lighting L, exposure E, f-stop F and ISO with L -> {E, F, ISO}, E -> {F, ISO},
/// F -> ISO and the metric fed by E, F and ISO.
inline cdra::CausalDag exposure_triangle() {
    return cdra::CausalDag({"L", "E", "F", "ISO", "M"},
                           {{"L", "E"},
                            {"L", "F"},
                            {"L", "ISO"},
                            {"E", "F"},
                            {"E", "ISO"},
                            {"F", "ISO"},
                            {"E", "M"},
                            {"F", "M"},
                            {"ISO", "M"}},
                           "M");
}

/// A -> V, A -> M, V -> M.
inline cdra::CausalDag confounder_triangle() {
    return cdra::CausalDag({"A", "V", "M"}, {{"A", "V"}, {"A", "M"}, {"V", "M"}}, "M");
}

inline std::vector<std::string> sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace fixture

#endif  // CDRA_TESTS_FIXTURES_HPP
