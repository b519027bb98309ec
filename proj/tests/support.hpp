#ifndef DHN_TESTS_SUPPORT_HPP
#define DHN_TESTS_SUPPORT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dhn/network.hpp"

namespace dhn::test {

inline PipeAttributes pipe(double length_m = 10.0, double diameter_m = 0.2,
                           double lambda = 0.01, double h = 1.5) {
    return PipeAttributes{length_m, diameter_m, lambda, h};
}

inline Edge edge(const std::string& name, int tail, int head, EdgeKind kind,
                 PipeAttributes attr = pipe(), const std::string& building = "") {
    Edge e;
    e.name = name;
    e.tail = tail;
    e.head = head;
    e.kind = kind;
    e.pipe = attr;
    e.building = building;
    return e;
}

/// Deterministic uniform generator (same construction as the scenario
/// generator, different use: test-local randomness).
class TestRng {
public:
    explicit TestRng(uint64_t seed) : state_(seed) {}
    double uniform() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z ^= z >> 31;
        return static_cast<double>(z >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int integer(int lo, int hi) { // inclusive
        return lo + static_cast<int>(uniform() * (hi - lo + 1));
    }

private:
    uint64_t state_;
};

/// Random tree-shaped feed/return network with a bypassed user per junction:
/// a trunk of 1..3 segments, each trunk node carrying a branch of 1..3
/// junctions. Edge count stays at or below 30 for up to 6 junctions.
inline NetworkGraph random_dhn(TestRng& rng, int junctions) {
    std::vector<std::string> nodes{"root", "term"};
    std::vector<Edge> edges;
    auto add_node = [&](const std::string& n) {
        nodes.push_back(n);
        return static_cast<int>(nodes.size() - 1);
    };
    int feed_at = 0, return_at = 1;
    int made = 0, branch = 0;
    while (made < junctions) {
        ++branch;
        const int tf = add_node("tf" + std::to_string(branch));
        const int tr = add_node("tr" + std::to_string(branch));
        edges.push_back(edge("f" + std::to_string(branch), feed_at, tf, EdgeKind::Feed,
                             pipe(rng.uniform(20, 100), rng.uniform(0.2, 0.4))));
        edges.push_back(edge("r" + std::to_string(branch), tr, return_at, EdgeKind::Return,
                             pipe(rng.uniform(20, 100), rng.uniform(0.2, 0.4))));
        int jf = tf, jr = tr;
        const int in_branch = std::min(junctions - made, rng.integer(1, 3));
        for (int u = 0; u < in_branch; ++u) {
            ++made;
            const std::string tag = std::to_string(made);
            const int nf = add_node("jf" + tag);
            const int nr = add_node("jr" + tag);
            edges.push_back(edge("bf" + tag, jf, nf, EdgeKind::Feed,
                                 pipe(rng.uniform(10, 40), rng.uniform(0.15, 0.25))));
            edges.push_back(edge("br" + tag, nr, jr, EdgeKind::Return,
                                 pipe(rng.uniform(10, 40), rng.uniform(0.15, 0.25))));
            edges.push_back(edge("u" + tag, nf, nr, EdgeKind::User,
                                 pipe(2.0, rng.uniform(0.03, 0.08)), "B-" + tag));
            edges.push_back(edge("b" + tag, nf, nr, EdgeKind::Bypass,
                                 pipe(3.0, rng.uniform(0.02, 0.05))));
            jf = nf;
            jr = nr;
        }
        feed_at = tf;
        return_at = tr;
    }
    return NetworkGraph(nodes, edges, 0, 1, FluidProperties{});
}

} // namespace dhn::test

#endif
