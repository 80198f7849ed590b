#ifndef FSC_COMBING_HPP
#define FSC_COMBING_HPP

#include "cover.hpp"

namespace fsc {

// A sequence T_0 -> ... -> T_K whose composite maps are all foldable.
struct MapSequence {
    std::vector<SplittingPtr> terms;
    std::vector<SplittingMap> maps;

    int length() const { return static_cast<int>(maps.size()); }
    SplittingMap composite(int i, int j) const;
    void verify_foldable() const;
    static MapSequence single(const SplittingPtr& s);
    static MapSequence from_folds(const FoldSequence& fs);
};

// Commutative ladder: top and bottom foldable sequences joined by collapses
// whose forests are the pullbacks of the rightmost forest.
struct CombingRectangle {
    MapSequence top;    // S_0 ... S_K
    MapSequence bottom; // T_0 ... T_K
    std::vector<SplittingMap> collapses;     // pi_k : S_k -> T_k
    std::vector<std::set<QEdgelet>> forests; // sigma_k in S_k
};

bool maps_equal(const SplittingMap& f, const SplittingMap& g);

// pullback of an invariant edgelet subgraph along an edgelet-injective map
std::set<QEdgelet> pullback(const SplittingMap& f, const std::set<QEdgelet>& sigma_t);

CombingRectangle comb_by_collapse(const MapSequence& top, const std::set<QEdgelet>& sigma_K);
// bottom row plus the right collapse pi_K (with forest sigma_K in its source)
CombingRectangle comb_by_expansion(const MapSequence& bottom, const SplittingMap& pi_K,
                                   const std::set<QEdgelet>& sigma_K);

// single fiber-product step: builds S_i over g: T_i -> T_{i+1} against the
// collapse pi_next: S_{i+1} -> T_{i+1}
struct FiberStep {
    SplittingPtr s;              // the fiber product splitting
    SplittingMap pi;             // s -> t (collapse)
    SplittingMap h;              // s -> s_next (foldable)
    std::set<QEdgelet> sigma;    // collapsed forest in s
};
FiberStep fiber_product_step(const SplittingMap& g, const SplittingPtr& s_next,
                             const SplittingMap& pi_next, const std::set<QEdgelet>& sigma_next);

bool verify_rectangle(const CombingRectangle& r);

// stack two rectangles sharing a row (the bottom of a equals the top of b)
CombingRectangle concat_rectangles(const CombingRectangle& a, const CombingRectangle& b);

} // namespace fsc

#endif
