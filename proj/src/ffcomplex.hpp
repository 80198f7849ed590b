#ifndef FSC_FFCOMPLEX_HPP
#define FSC_FFCOMPLEX_HPP

#include "bigdiagram.hpp"

namespace fsc {

// Subgraph of the natural quotient structure of a splitting, as a set of
// natural edge indices (into the census chains) plus the implied vertices.
struct CoreGraph {
    SplittingPtr owner;
    std::set<int> chains;       // natural edge indices
    std::set<int> extra_verts;  // isolated natural vertices carried along

    bool operator<(const CoreGraph& o) const {
        return chains != o.chains ? chains < o.chains : extra_verts < o.extra_verts;
    }
};

// all vertices with nontrivial groups must lie in the subgraph; prune trivial
// valence <= 1 vertices until the core conditions hold
CoreGraph core(const CoreGraph& g);
bool is_core_graph(const CoreGraph& g);
// the free factor system [G] represented by a subgraph satisfying condition 1
FreeFactorSystem core_system(const CoreGraph& g);
bool core_proper(const CoreGraph& g);    // [G] != {[Gamma]}
bool core_nontrivial(const CoreGraph& g, const FreeFactorSystem& a); // [G] != a

// all proper nontrivial relative core graphs of the splitting
std::vector<CoreGraph> core_graphs(const SplittingPtr& t, const FreeFactorSystem& a);

// the projection set: systems of proper nontrivial core graphs, deduplicated
std::vector<FreeFactorSystem> pi_set(const SplittingPtr& t, const FreeFactorSystem& a);

// special projection: F(T) when F(T) != a, else the least core graph system
FreeFactorSystem special_projection(const SplittingPtr& t, const FreeFactorSystem& a);

// alternating extension path in FF(Gamma;a) of length <= 6 between the
// systems of two core graphs of a generic splitting
struct FFPath {
    std::vector<FreeFactorSystem> systems;
    std::vector<int> rel; // +1: systems[k] contained in systems[k+1]; -1 reverse
};
FFPath connect_in_ff(const SplittingPtr& t, const CoreGraph& g1, const CoreGraph& g2,
                     const FreeFactorSystem& a);
bool verify_ff_path(const FFPath& p, const FreeFactorSystem& a);

// dimension of FF(Gamma;a): D_FF(a) - 2, or Empty below that
struct FFDimension {
    bool empty = false;
    int dim = -1;
};
FFDimension ff_dimension(const FreeFactorSystem& a);

// retraction of FF(F_n) onto the single-component subcomplex: pick a
// component, and bridge an FF-edge through rank-one pieces
struct RetractStep {
    std::vector<FreeFactorSystem> path; // single-component systems, length <= 5
};
FreeFactorSystem retract_to_single(const FreeFactorSystem& b);
RetractStep retract_edge(const FreeFactorSystem& b, const FreeFactorSystem& bprime);

} // namespace fsc

#endif
