#ifndef FSC_COVER_HPP
#define FSC_COVER_HPP

#include "morphism.hpp"

namespace fsc {

// Quotient of the minimal P-invariant subtree of the ambient tree, computed
// Stallings-style: generator paths are laid out from an anchor and folded,
// with node stabilizers growing as loops close up. Nodes carry their lift
// positions in ambient coordinates; edges are stored in the tail frame, so
// pos * (ambient edgelet lift) has its tail exactly at the tail node's lift.
struct CoverGraph {
    SplittingPtr ambient;
    Subgroup group;
    struct Node {
        TreePoint pt; // lift position in the ambient tree
        std::optional<Subgroup> stab;
    };
    struct CEdge {
        int xedge = 0;
        int xidx = 0;
        NormalWord pos;
        int from = 0, to = 0;
        NormalWord headwit; // headwit * pos * (edgelet head) = head node lift, headwit in P
    };
    std::vector<Node> nodes;
    std::vector<CEdge> edges;
    int base = 0;

    bool degenerate() const { return edges.empty(); }
};

CoverGraph cover_core(const SplittingPtr& ambient, const Subgroup& p, int anchor_vertex,
                      const NormalWord& anchor_pos);

// cover with attachment whiskers: the hull of the minimal subtree and the
// listed points, with marks locating each attach point in the result
// (wit * attach_point = node lift, wit in P)
struct CoverMark {
    int node = 0;
    NormalWord wit;
};
CoverGraph cover_core_attach(const SplittingPtr& ambient, const Subgroup& p,
                             const TreePoint& anchor, const std::vector<TreePoint>& attach,
                             std::vector<CoverMark>& marks_out);

// Blow up each vertex of t whose group acts nonelliptically on the ambient
// tree by the core of its minimal subtree; germs reattach at the core base.
struct Expansion {
    SplittingPtr expanded;
    SplittingMap collapse_map; // expanded -> t
    std::set<QEdgelet> blown;  // piece edgelets in the expanded splitting
};
Expansion expand_by_covers(const SplittingPtr& t, const SplittingPtr& ambient);

// expansion with F(U) = b, for b contained in F(t)
Expansion expand_to_system(const SplittingPtr& t, const FreeFactorSystem& b);

// generic splitting collapsing onto t (Prop: maximal simplices)
Expansion generic_resolution(const SplittingPtr& t, const FreeFactorSystem& a);

// Local expansion: move the listed germs at v onto a fresh trivial vertex
// joined to v by an identity edge. Returns the expansion with its collapse.
Expansion blow_up_germs(const SplittingPtr& s, int v, const std::vector<Direction>& dirs);

// general make_foldable: expands s first when F(s) is not contained in F(t)
MakeFoldableResult make_foldable(const SplittingPtr& s, const SplittingPtr& t,
                                 const FreeFactorSystem& a);

} // namespace fsc

#endif
