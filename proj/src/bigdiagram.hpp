#ifndef FSC_BIGDIAGRAM_HPP
#define FSC_BIGDIAGRAM_HPP

#include "units.hpp"

namespace fsc {

// simplicial equivariant isomorphism between structurally matching
// splittings (same quotient graph up to relabeling, same edgelet counts)
std::optional<SplittingMap> simplicial_iso(const SplittingPtr& a, const SplittingPtr& b,
                                           int twist_len = 4);
SplittingMap invert_iso(const SplittingMap& f);

// S < S' > S'' followed by a fold sequence onto t
struct Connection {
    SplittingPtr sprime;
    SplittingPtr sdouble;
    FoldSequence folds;
    int prefix_moves = 0; // 0, 1 or 2
};
Connection connect(const SplittingPtr& s, const SplittingPtr& t, const FreeFactorSystem& a);

// Projection diagram from t to the fold path: top row T_0..T_J -> t, middle
// row S'_0..S'_J, bottom row = prefix of the path; the two rectangles share
// the middle row, their collapses going down from the T row and up from the
// S row.
struct ProjectionDiagram {
    int depth = 0;
    MapSequence path;            // S_0..S_K, the whole fold path
    CombingRectangle top_rect;   // top = T row, bottom = middle row
    CombingRectangle low_rect;   // top = S prefix row, bottom = middle row
    SplittingMap tail;           // T_J -> t, foldable
    SplittingPtr t;
};

ProjectionDiagram build_projection_diagram(const SplittingPtr& t, const MapSequence& path,
                                           const FreeFactorSystem& a);
bool verify_projection_diagram(const ProjectionDiagram& d);

struct AugmentedProjectionDiagram {
    ProjectionDiagram base;
    FoldSequence tail_folds; // factorization of base.tail
};
AugmentedProjectionDiagram augment(const ProjectionDiagram& d);

// One zigzag move away from the current right end.
struct ZigMove {
    bool down = true;
    std::set<QEdgelet> forest; // down: forest in the current end
    SplittingPtr upper;        // up: expansion of the current end
    SplittingMap upper_collapse;
    std::set<QEdgelet> upper_forest;
};

struct BigDiagramResult {
    bool shortenable = false;
    int shorten_at = -1; // zigzag position where a shorter path exists
    ProjectionDiagram final_diagram;
    int steps = 0;
    std::vector<std::string> trace;
};

// The reduction engine: builds the stack of combing rectangles over the
// augmented projection diagram of t and consumes two rows per induction step.
class BigDiagram {
public:
    BigDiagram(MapSequence s_path, ProjectionDiagram t_diagram, FreeFactorSystem a);

    const SplittingPtr& current_end() const;
    void move_down(const std::set<QEdgelet>& forest);
    void move_up(const SplittingPtr& upper, const SplittingMap& upper_collapse,
                 const std::set<QEdgelet>& upper_forest);

    BigDiagramResult run(int budget = 64);

private:
    MapSequence s_path_;
    ProjectionDiagram t_diagram_;
    FreeFactorSystem a_;
    std::vector<ZigMove> moves_;
    SplittingPtr end_;
};

// witness depth and certified-unit gap for the coarse retract phenomenon
struct RetractProbe {
    int index = 0;          // I
    int witness_depth = 0;  // >= I
    int unit_gap = 0;       // certified units between S_I and S_witness
    bool policy_overcount = false;
};
RetractProbe coarse_retract_probe(const MapSequence& path, int i, const FreeFactorSystem& a,
                                  int budget = 64);

} // namespace fsc

#endif
