#ifndef FSC_MORPHISM_HPP
#define FSC_MORPHISM_HPP

#include "splitting.hpp"

namespace fsc {

using SplittingPtr = std::shared_ptr<const MarkedSplitting>;
SplittingPtr share(MarkedSplitting s);

// Image of one edgelet under an equivariant map: either an oriented edgelet
// of the target tree or, for collapse-type maps, a constant point.
struct EdgeletImage {
    bool constant = false;
    TreeEdgelet el;
    TreePoint pt;
};

// Equivariant map between splittings, stored on canonical lifts and extended
// by equivariance.
struct SplittingMap {
    SplittingPtr src, tgt;
    std::vector<TreePoint> vimg;                 // per source vertex
    std::vector<std::vector<EdgeletImage>> eimg; // per source edge, per idx

    void verify() const;
    TreePoint apply_point(const TreePoint& p) const;
    EdgeletImage apply_edgelet(const TreeEdgelet& el) const;
    bool injective_on_edgelets() const;
    int constant_count() const;
};

SplittingMap identity_map(const SplittingPtr& s);
SplittingMap compose(const SplittingMap& f, const SplittingMap& g); // g after f
// the collapse map associated with a surgery
SplittingMap surgery_map(const SplittingPtr& src, const Surgery& sur, const SplittingPtr& tgt);
// induce f through a surgery of its source: the map sur.result -> f.tgt
SplittingMap induce_map(const Surgery& sur, const SplittingPtr& new_src, const SplittingMap& f);

// A direction at a vertex: an edge germ plus a vertex-group twist.
struct Direction {
    int edge = 0;
    int end = 0; // 0: from-side germ, 1: to-side germ
    NormalWord twist;
};
TreeEdgelet direction_edgelet(const MarkedSplitting& s, int v, const Direction& d);
std::vector<Direction> germs_at(const MarkedSplitting& s, int v);

struct Gates {
    std::vector<std::vector<int>> classes; // indices into germs_at(v)
    bool at_least_two = false;
};
Gates gates(const SplittingMap& f, int v);
bool foldable(const SplittingMap& f);

struct FoldPair {
    int vertex = 0;
    Direction d1, d2; // fold identifies the lifts of d1 and d2
};
std::optional<FoldPair> find_fold_pair(const SplittingMap& f);

enum class FoldType { IA, IB, IIIA, IIIB };
const char* fold_type_name(FoldType t);
FoldType classify_fold(const MarkedSplitting& s, int v, const Direction& d1, const Direction& d2);

struct FoldRecord {
    Surgery surgery;
    FoldType type = FoldType::IA;
    int vertex = 0;
    Direction d1, d2;
    // splitting actually folded (a subdivision of the input when germs collide)
    SplittingPtr folded_src;
};
// folds identify the germ edgelets of the two directions (refine the
// subdivision beforehand to fold shorter initial segments)
FoldRecord apply_fold(const MarkedSplitting& s, int v, const Direction& d1, const Direction& d2);

// construct the equivariant map extending the given vertex images linearly;
// returns a copy of src with edgelet counts adjusted to the image paths
std::pair<SplittingPtr, SplittingMap> build_map(const MarkedSplitting& src, const SplittingPtr& tgt,
                                                const std::vector<TreePoint>& vertex_images);

struct MakeFoldableResult {
    SplittingPtr sprime;        // expansion of s (equal to s when F(s) <= F(t))
    SplittingPtr sdouble;       // collapse of sprime
    SplittingMap f;             // foldable map sdouble -> t
    std::optional<SplittingMap> s_to_sdouble; // the collapse sprime -> sdouble
};
// requires F(s) contained in F(t)
MakeFoldableResult make_foldable_contained(const SplittingPtr& s, const SplittingPtr& t);

struct FoldSequence {
    std::vector<SplittingPtr> terms;
    std::vector<SplittingMap> maps;      // maps[i]: terms[i] -> terms[i+1]
    std::vector<FoldRecord> records;     // fold data for each map (empty type info for the final iso)
    SplittingMap composite(int i, int j) const; // terms[i] -> terms[j]
};
// factor a foldable map into folds; the last map in the result is the final
// simplicial identification with f.tgt
FoldSequence factor_into_folds(const SplittingMap& f);

// zigzag witness for d(S,T) <= 2 after a fold; each entry is a splitting with
// a verified collapse relation to the next
struct FoldWitness {
    std::vector<SplittingPtr> path; // S [, U] , T with alternating < >
    std::vector<int> rel;           // +1: path[i] expands to path[i+1]; -1: collapses
};
FoldWitness fold_distance_witness(const FoldRecord& fr);

} // namespace fsc

#endif
