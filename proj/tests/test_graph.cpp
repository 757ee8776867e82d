#include <doctest.h>

#include <map>
#include <set>

#include "cdra/error.hpp"
#include "cdra/graph.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cdra;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

std::map<FactorId, std::size_t> positions(const std::vector<FactorId>& order) {
    std::map<FactorId, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    return pos;
}

// Random DAG with up to `max_nodes` nodes and a random edge density.
CausalDag random_small_dag(Rng& rng, std::size_t max_nodes) {
    const std::size_t n = 2 + rng.below(max_nodes - 1);
    return random_dag(n, rng.uniform(0.2, 0.8), rng);
}

}  // namespace

TEST_CASE("validate accepts a chain and rejects malformed graphs") {
    CHECK_NOTHROW(CausalDag({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}}));

    try {
        CausalDag({"A", "B"}, {{"A", "B"}, {"B", "A"}});
        FAIL("cycle accepted");
    } catch (const CycleError& e) {
        CHECK(e.code() == ErrorCode::CycleDetected);
        CHECK(e.cycle().front() == e.cycle().back());
        CHECK(e.cycle().size() == 3);
        CHECK(std::string(e.what()).find("A -> B") != std::string::npos);
    }

    CHECK(code_of([] { CausalDag({"A"}, {{"A", "Z"}}); }) == ErrorCode::DanglingEdge);
    CHECK(code_of([] { CausalDag({"A", "A"}, {}); }) == ErrorCode::DuplicateNode);
    CHECK(code_of([] { CausalDag({"A", "B"}, {{"A", "B"}, {"A", "B"}}); }) == ErrorCode::DuplicateEdge);
    CHECK(code_of([] { CausalDag({"A"}, {{"A", "A"}}); }) == ErrorCode::SelfEdge);
    CHECK(code_of([] { CausalDag({"A"}, {}, "M"); }) == ErrorCode::UnknownNode);
    CHECK(code_of([] { CausalDag({""}, {}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("topological order follows FIFO over insertion order") {
    const CausalDag g({"A", "B", "C"}, {{"A", "B"}, {"A", "C"}, {"C", "B"}});
    CHECK(topological_order(g) == std::vector<FactorId>{"A", "C", "B"});
    CHECK(topological_order(CausalDag({"A"}, {})) == std::vector<FactorId>{"A"});

    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        const CausalDag d = random_dag(5, 0.5, rng);
        const auto pos = positions(topological_order(d));
        for (const auto& e : d.edges()) CHECK(pos.at(e.parent) < pos.at(e.child));
    }
}

TEST_CASE("d-separation textbook cases") {
    const CausalDag chain({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}});
    const std::vector<FactorId> a{"A"}, b{"B"}, c{"C"}, none{};
    CHECK(d_separated(chain, a, c, b));
    CHECK_FALSE(d_separated(chain, a, c, none));

    const CausalDag collider({"A", "B", "C"}, {{"A", "C"}, {"B", "C"}});
    CHECK(d_separated(collider, a, b, none));
    CHECK_FALSE(d_separated(collider, a, b, c));

    // Conditioning on a descendant of a collider opens it.
    const CausalDag desc({"A", "B", "C", "D"}, {{"A", "C"}, {"B", "C"}, {"C", "D"}});
    const std::vector<FactorId> d{"D"};
    CHECK_FALSE(d_separated(desc, a, b, d));

    const std::vector<FactorId> unknown{"Q"};
    CHECK(code_of([&] { d_separated(chain, a, unknown, none); }) == ErrorCode::UnknownNode);
    CHECK(code_of([&] { d_separated(chain, a, a, none); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("d-separation agrees with path enumeration and is symmetric") {
    Rng rng(2024);
    std::size_t queries = 0;
    for (int g = 0; g < 300; ++g) {
        const CausalDag dag = random_small_dag(rng, 6);
        const std::size_t n = dag.size();
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t y = 0; y < n; ++y) {
                if (x == y) continue;
                // Every conditioning subset of the remaining nodes.
                std::vector<std::size_t> rest;
                for (std::size_t k = 0; k < n; ++k)
                    if (k != x && k != y) rest.push_back(k);
                for (std::size_t mask = 0; mask < (1u << rest.size()); ++mask) {
                    std::vector<std::size_t> z;
                    for (std::size_t k = 0; k < rest.size(); ++k)
                        if (mask >> k & 1) z.push_back(rest[k]);
                    const std::size_t a[] = {x}, b[] = {y};
                    const bool fast = d_separated(dag, a, b, z);
                    const bool slow = oracle::dsep_by_paths(dag, {x}, {y}, {z.begin(), z.end()});
                    REQUIRE(fast == slow);
                    REQUIRE(fast == d_separated(dag, b, a, z));
                    ++queries;
                }
            }
    }
    CHECK(queries > 10000);
}

TEST_CASE("mutilate removes exactly the incoming edges") {
    const CausalDag ab({"A", "B"}, {{"A", "B"}});
    CHECK(mutilate(ab, "B").edge_count() == 0);
    CHECK(mutilate(ab, "A") == ab);

    const CausalDag fig = fixture::exposure_triangle();
    const CausalDag cut = mutilate(fig, "ISO");
    const auto iso = cut.index_of("ISO");
    CHECK(cut.parents(iso).empty());
    CHECK(cut.has_edge(cut.index_of("L"), cut.index_of("E")));
    CHECK(cut.has_edge(cut.index_of("L"), cut.index_of("F")));
    CHECK(cut.has_edge(cut.index_of("E"), cut.index_of("F")));
    CHECK_FALSE(cut.has_edge(cut.index_of("L"), iso));
    CHECK_FALSE(cut.has_edge(cut.index_of("E"), iso));
    CHECK_FALSE(cut.has_edge(cut.index_of("F"), iso));
    CHECK(cut.edge_count() == fig.edge_count() - 3);

    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        const CausalDag d = random_dag(6, 0.5, rng);
        const auto v = d.name(rng.below(d.size()));
        const CausalDag m = mutilate(d, v);
        CHECK(m.parents(m.index_of(v)).empty());
        for (const auto& e : d.edges())
            if (e.child != v) CHECK(m.has_edge(m.index_of(e.parent), m.index_of(e.child)));
        CHECK(m.edge_count() == d.edge_count() - d.parents(d.index_of(v)).size());
    }
    CHECK(code_of([&] { mutilate(ab, "Z"); }) == ErrorCode::UnknownNode);
}

TEST_CASE("random_dag edge counts and determinism") {
    Rng rng(99);
    double total = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) total += static_cast<double>(random_dag(5, 0.5, rng).edge_count());
    CHECK(std::abs(total / draws - 5.0) < 0.1);

    CHECK(random_dag(6, 0.0, rng).edge_count() == 0);
    CHECK(random_dag(6, 1.0, rng).edge_count() == 15);
    const auto g = random_dag(4, 0.3, rng);
    CHECK(g.nodes() == std::vector<FactorId>{"V0", "V1", "V2", "V3"});

    Rng r1(7), r2(7);
    for (int i = 0; i < 50; ++i) CHECK(random_dag(7, 0.5, r1) == random_dag(7, 0.5, r2));
}

TEST_CASE("perturb examples") {
    Rng rng(3);
    const CausalDag complete = random_dag(5, 1.0, rng);
    CHECK(perturb(complete, 3, PerturbMode::Add, rng).added.empty());

    const CausalDag ab({"A", "B"}, {{"A", "B"}});
    const auto p = perturb(ab, 4, PerturbMode::Remove, rng);
    CHECK(p.removed == std::vector<Edge>{{"A", "B"}});
    CHECK(p.added.empty());

    const CausalDag lonely({"A", "B"}, {});
    CHECK(code_of([&] { perturb(lonely, 1, PerturbMode::Remove, rng); }) == ErrorCode::NoEdgesToRemove);
    CHECK(code_of([&] { perturb(ab, 0, PerturbMode::Remove, rng); }) == ErrorCode::InvalidArgument);

    // Sink edges stay fixed.
    const CausalDag with_sink = with_metric_sink(ab, "M");
    for (int t = 0; t < 20; ++t) {
        const auto q = perturb(with_sink, 4, PerturbMode::Remove, rng);
        for (const auto& e : q.removed) CHECK(e.child != "M");
    }
}

TEST_CASE("perturbed graphs stay valid") {
    Rng rng(17);
    for (int t = 0; t < 200; ++t) {
        const CausalDag d = random_dag(5, 0.5, rng);
        const std::size_t k = 1 + rng.below(4);
        const auto add = perturb(d, k, PerturbMode::Add, rng);
        CHECK(add.added.size() <= k);
        CHECK(add.removed.empty());
        const CausalDag da = apply(d, add);
        CHECK_NOTHROW(validate(da));
        CHECK(da.edge_count() == d.edge_count() + add.added.size());
        for (const auto& e : add.added) CHECK_FALSE(d.has_edge(d.index_of(e.parent), d.index_of(e.child)));

        if (d.edge_count() == 0) continue;
        const auto rem = perturb(d, k, PerturbMode::Remove, rng);
        CHECK(rem.removed.size() == std::min<std::size_t>(k, d.edge_count()));
        std::set<Edge> unique(rem.removed.begin(), rem.removed.end());
        CHECK(unique.size() == rem.removed.size());
        CHECK_NOTHROW(validate(apply(d, rem)));
    }

    // Five seeded repeats of two additions on a 5-node graph.
    for (std::uint64_t s = 0; s < 5; ++s) {
        Rng r(s);
        const CausalDag d = random_dag(5, 0.5, r);
        CHECK_NOTHROW(validate(apply(d, perturb(d, 2, PerturbMode::Add, r))));
    }
}

TEST_CASE("graph helpers") {
    const CausalDag g({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}});
    const auto desc = g.descendants(0);
    CHECK_FALSE(desc[0]);
    CHECK(desc[1]);
    CHECK(desc[2]);
    CHECK(g.has_directed_path(0, 2));
    CHECK_FALSE(g.has_directed_path(2, 0));

    const CausalDag s = with_metric_sink(g, "M");
    CHECK(s.sink_name() == "M");
    CHECK(s.parents(s.index_of("M")).size() == 3);
    CHECK(with_metric_sink(s, "Q") == s);
    CHECK(s.factor_names() == std::vector<FactorId>{"A", "B", "C"});

    const CausalDag h(g.description());
    CHECK(h == g);
    CHECK(g.edges() == std::vector<Edge>{{"A", "B"}, {"B", "C"}});
}
