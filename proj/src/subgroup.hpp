#ifndef FSC_SUBGROUP_HPP
#define FSC_SUBGROUP_HPP

#include "group.hpp"

#include <map>
#include <optional>
#include <set>

namespace fsc {

struct SubgroupGraph;

// Subgroup of a single atom. Cyclic kinds store <t^d> (d = order, resp. 0,
// meaning trivial); Opaque stores the closed element set; FreeOfRank stores
// generators as reduced words over the atom alphabet with a lazily folded
// nested graph.
struct AtomSubgroup {
    long long d = 0;
    std::set<long long> elems;
    std::vector<AtomEl> gens;
    mutable std::shared_ptr<SubgroupGraph> cache;

    static AtomSubgroup trivial(const AtomSpec& a);
    static AtomSubgroup full(const AtomSpec& a);
    bool is_trivial(const AtomSpec& a) const;
    bool is_full(const AtomSpec& a) const;
    bool contains(const AtomSpec& a, const AtomEl& x) const;
    AtomSubgroup join_el(const AtomSpec& a, const AtomEl& x) const;
    AtomSubgroup conj_by(const AtomSpec& a, const AtomEl& g) const; // g^-1 S g
    bool same_subgroup(const AtomSpec& a, const AtomSubgroup& o) const;
    bool conjugate_in_atom(const AtomSpec& a, const AtomSubgroup& o) const;
    // generators as atom elements (finite set; for cyclic kinds a single one)
    std::vector<AtomEl> generator_els(const AtomSpec& a) const;
    // order of the subgroup, or 0 if infinite
    long long subgroup_order(const AtomSpec& a) const;
    bool coset_eq(const AtomSpec& a, const AtomEl& p, const AtomEl& q) const; // S p == S q

private:
    const SubgroupGraph& folded(const AtomSpec& a) const;
};

// Kurosh decomposition data of a finitely generated subgroup H of Gamma:
// H = (free part of rank free_rank) * pieces, each piece conjugate to a
// subgroup of an atom.
struct KuroshPiece {
    int atom = -1;
    AtomSubgroup stab;       // subgroup of the atom, in local gauge
    NormalWord conjugator;   // piece = conjugator . stab . conjugator^-1
};

struct KuroshData {
    std::vector<KuroshPiece> pieces;
    int free_rank = 0;
    std::vector<NormalWord> free_basis;
};

// Folded graph (Stallings/Kurosh machine) accepting a finitely generated
// subgroup of Gamma. Vertices are integers, base is vertex 0 after folding.
// Atom structure is stored per component: a component of atom i groups
// vertices into right cosets of a subgroup stab <= A_i; reading a in A_i at
// member v leads to the member w with stab.(payload(v).a) == stab.payload(w).
struct SubgroupGraph {
    ContextPtr ctx;
    int nv = 1;
    int base = 0;
    std::vector<std::map<int, int>> fwd, bwd; // per free letter
    struct Comp {
        int atom = -1;
        std::map<int, AtomEl> members;
        AtomSubgroup stab;
    };
    std::vector<Comp> comps;

    static SubgroupGraph fold_words(const ContextPtr& ctx, const std::vector<NormalWord>& gens);

    int comp_of(int atom, int v) const; // -1 if none
    std::optional<int> step(int v, const Letter& l) const;
    std::optional<int> trace(const NormalWord& w, int from) const;
    bool contains(const NormalWord& w) const;
    int step_extend(int v, const Letter& l);
    int trace_extend(const NormalWord& w, int from);

    void trim();              // prune hanging trees away from the base
    bool is_whole_group() const;
    bool is_trivial_group() const;
    KuroshData kurosh() const;
    NormalWord path_word(int v) const; // base -> v
    std::vector<NormalWord> vertex_path_words() const;

    int edge_count() const;
    bool valid_folded() const; // diagnostic: determinism + coset distinctness
};

// A subgroup of Gamma realized by generators, with its folded graph.
struct Subgroup {
    std::vector<NormalWord> gens;
    SubgroupGraph graph;

    static Subgroup generated(const ContextPtr& ctx, std::vector<NormalWord> gens);
    const ContextPtr& ctx() const { return graph.ctx; }
    bool contains(const NormalWord& w) const { return graph.contains(w); }
    bool is_trivial() const { return graph.is_trivial_group(); }
    Subgroup conjugated(const NormalWord& g) const; // g . H . g^-1
};

// Left-coset tokens for a subgroup H: token(g) identifies gH. The table
// extends its graph lazily; tokens are stable once issued.
class CosetTable {
public:
    explicit CosetTable(const SubgroupGraph& g) : graph_(g) {}
    int token(const NormalWord& g);

private:
    SubgroupGraph graph_;
};

// Search for g with g H1 g^-1 <= H2, sound and bounded. Completeness holds
// for base-point moves over the graph of H2 (Stallings-style) plus short
// brute-force conjugators up to `extra_len`.
std::optional<NormalWord> conjugate_into(const Subgroup& h1, const Subgroup& h2, int extra_len = 2);
bool conjugate_subgroups(const Subgroup& h1, const Subgroup& h2, int extra_len = 2);

// Abelianization obstruction: image of h1 in the abelianization of Gamma
// (opaque atoms projected away) is contained in the image of h2. Necessary
// for conjugate-into; used to certify negative answers.
bool ab_image_contained(const Subgroup& h1, const Subgroup& h2);

} // namespace fsc

#endif
