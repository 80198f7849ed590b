#ifndef FSC_SPLITTING_HPP
#define FSC_SPLITTING_HPP

#include "ffs.hpp"

#include <set>

namespace fsc {

// One item of a walk in the Bass-Serre tree, tracked on quotient data.
// Elem(h): stand still at the current vertex, twisting the frame by a local
// stabilizer element h (an element of the vertex group of the current
// quotient vertex, in the gauge of its canonical lift).
// Step(e, dir): cross the canonical lift of quotient edge e at the current
// frame (dir=+1 crosses from->to, dir=-1 the reverse).
struct GogItem {
    bool is_step = false;
    NormalWord h;
    int edge = -1;
    int dir = 0;

    static GogItem elem(NormalWord w) { GogItem i; i.h = std::move(w); return i; }
    static GogItem step(int e, int d) { GogItem i; i.is_step = true; i.edge = e; i.dir = d; return i; }
};

struct GogPath {
    int start = 0;
    std::vector<GogItem> items;
};

struct QVertex {
    std::optional<Subgroup> group; // nontrivial when present
};

struct QEdge {
    int from = 0, to = 0;
    NormalWord label;   // lift at from's canonical lift ends at label * (to's lift)
    bool in_tree = false;
    int edgelets = 1;
};

using QEdgelet = std::pair<int, int>; // (edge, index)

// A point of the Bass-Serre tree: either pos * (canonical lift of vertex v),
// or the boundary point k (1..edgelets-1) inside the edge lift pos * e~.
struct TreePoint {
    bool at_vertex = true;
    int cell = 0; // vertex or edge id
    int k = 0;    // boundary index for edge points
    NormalWord pos;

    static TreePoint vertex(int v, NormalWord p) { return TreePoint{true, v, 0, std::move(p)}; }
    static TreePoint boundary(int e, int k, NormalWord p) { return TreePoint{false, e, k, std::move(p)}; }
};

// Oriented edgelet of the tree: edgelet idx of the lift pos * e~, traversed
// forward (from->to direction) or backward.
struct TreeEdgelet {
    int edge = 0;
    int idx = 0;
    bool fwd = true;
    NormalWord pos;
};

// A free splitting presented as a finite marked graph of groups with trivial
// edge groups. The marking consists of the realized vertex groups (as actual
// stabilizers of the canonical lifts), edge labels relative to a spanning
// tree, and navigation seeds expressing each generator of the ambient group
// as a reduced loop in the tree.
struct MarkedSplitting {
    ContextPtr ctx;
    std::vector<QVertex> verts;
    std::vector<QEdge> edges;
    int base = 0;

    std::vector<GogPath> letter_seeds;            // per free letter, loop at base
    std::vector<std::vector<GogPath>> atom_seeds; // per atom: generator loops
                                                  // (cyclic kinds: 1; opaque: per element; free: per rank)

    int degree(int v) const;
    bool vertex_trivial(int v) const { return !verts[v].group.has_value(); }
    const Subgroup* vgroup(int v) const { return verts[v].group ? &*verts[v].group : nullptr; }
    std::vector<std::pair<int, int>> ends_at(int v) const; // (edge, dir out of v)
    int total_edgelets() const;
    bool group_contains(int v, const NormalWord& w) const;

    std::pair<int, NormalWord> walk(const GogPath& p, bool check = false) const;
    GogPath reduced(GogPath p) const;
    GogPath inverse_path(const GogPath& p) const;
    GogPath concat(GogPath a, const GogPath& b) const;

    GogPath tau_path(int v) const;                      // base -> v in the spanning tree
    GogPath nf_loop(const NormalWord& g) const;         // loop at base with offset g
    GogPath locate(int v, const NormalWord& pos) const; // base -> pos * (lift of v)
    bool same_tree_vertex(int v, const NormalWord& p, int w, const NormalWord& q) const;
    bool same_point(const TreePoint& a, const TreePoint& b) const;
    TreePoint translated(const TreePoint& p, const NormalWord& g) const;
    TreePoint edgelet_endpoint(const TreeEdgelet& el, bool head) const;

    // reduced tree path between two located vertices, as oriented edgelets
    std::vector<TreeEdgelet> tree_edgelet_path(const TreePoint& a, const TreePoint& b) const;

    void check(bool full = true) const;
    std::vector<std::string> validate_report() const;
    void normalize_marking(); // fresh BFS spanning tree, identity tree labels

    FreeFactorSystem vertex_system() const;
};

struct NaturalCensus {
    int natural_vertices = 0;
    int natural_edges = 0;
    // per natural edge: chain of (edge, dir); dir=+1 means traversed from->to
    std::vector<std::vector<std::pair<int, int>>> chains;
    std::vector<int> chain_edgelets;
    std::vector<bool> vertex_natural;
};
NaturalCensus natural_census(const MarkedSplitting& s);

int dfs_depth(const FreeFactorSystem& a); // 3 corank + 2|A| - 4
bool is_generic(const MarkedSplitting& t, const FreeFactorSystem& a);

// rose-with-lollipops splitting realizing a proper system
MarkedSplitting splitting_for(const FreeFactorSystem& a);

// Result of a quotient surgery (collapse or fold): the new splitting plus
// cell records tracking where old tree cells went.
struct Surgery {
    MarkedSplitting result;
    std::set<QEdgelet> sigma; // collapsed edgelets (empty for folds)
    struct EdgeletRec {
        int edge = -1; // -1: collapsed to a point
        int idx = 0;
        bool rev = false;
        NormalWord pos; // image of the old canonical tree edgelet = (edge, pos) piece
        TreePoint cpt;  // image point when collapsed
    };
    std::vector<std::vector<EdgeletRec>> edgelet_rec; // per old edge, per idx
    std::vector<TreePoint> vertex_rec;                // image of old canonical vertex lifts
    GogPath transport(const MarkedSplitting& src, const GogPath& p) const;
};

Surgery collapse(const MarkedSplitting& t, const std::set<QEdgelet>& sigma);

// Shared working-graph assembler for quotient surgeries. Working vertices are
// the old vertices followed by the edgelet boundary points; a surgery merges
// them into classes (with positions relative to the class lift) and keeps a
// subset of the working edges. The assembler merges subdivision chains back
// into natural edges, gauges onto a fresh spanning tree, fills the cell
// records, and transports the navigation seeds.
struct WorkSpec {
    const MarkedSplitting* src = nullptr;
    int n_class = 0;
    std::vector<int> wclass;       // per working vertex
    std::vector<NormalWord> wpos;  // old working lift = wpos * (class lift)
    std::vector<std::optional<Subgroup>> cgroup; // per class
    struct Prov {
        QEdgelet el;
        bool rev = false;
        NormalWord q; // old canonical edgelet = q * (kept-edge lift at class lift)
    };
    struct KeptEdge {
        int csrc = 0, ctgt = 0;
        NormalWord lab;
        std::vector<Prov> prov;
    };
    std::vector<KeptEdge> kept;
    int cbase = 0;
};

struct WorkingView {
    const MarkedSplitting* s;
    std::vector<int> bnd_base;
    int nW = 0;
    explicit WorkingView(const MarkedSplitting& sp);
    int of_boundary(int e, int k) const;
    int src(int e, int i) const;
    int tgt(int e, int i) const;
    NormalWord lab(int e, int i) const;
};

Surgery assemble(const WorkSpec& w, std::set<QEdgelet> sigma);

std::set<QEdgelet> all_edgelets(const MarkedSplitting& t);
// every nonempty proper subset of natural edge orbits, as edgelet sets
std::vector<std::set<QEdgelet>> natural_subgraphs(const MarkedSplitting& t);

struct EquivalenceWitness {
    std::vector<int> vertex_map;
    std::vector<NormalWord> vertex_pos;
    std::vector<int> edge_map;
    std::vector<bool> edge_reversed;
};
std::optional<EquivalenceWitness> equivalent(const MarkedSplitting& s, const MarkedSplitting& t,
                                             int twist_len = 4);

// elements of a subgroup of word length at most len (base-to-base loops)
std::vector<NormalWord> subgroup_elements_upto(const Subgroup& h, int len);

void materialize_boundary(MarkedSplitting& s, int edge, int idx);
void subdivide_edge(MarkedSplitting& s, int edge, int factor);

// bounded constructive expression of target over given generators; returns
// the sequence of (generator index, sign); throws when the search bound is hit
std::vector<std::pair<int, int>> express_over(const ContextPtr& ctx,
                                              const std::vector<NormalWord>& gens,
                                              const NormalWord& target, int max_factors = 10);

} // namespace fsc

#endif
