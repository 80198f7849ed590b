#include "cover.hpp"

namespace fsc {

// Meet through the splitting machinery: blow up the vertices of a splitting
// realizing one system by their minimal subtrees in a splitting realizing the
// other; the vertex system of the expansion is the meet.
FreeFactorSystem meet(const FreeFactorSystem& a, const FreeFactorSystem& b) {
    if (a.is_improper()) return b;
    if (b.is_improper()) return a;
    if (ffs_equal(a, b)) return a;
    auto ta = share(splitting_for(a));
    auto tb = share(splitting_for(b));
    Expansion ex = expand_by_covers(tb, ta);
    return ex.expanded->vertex_system();
}

} // namespace fsc
