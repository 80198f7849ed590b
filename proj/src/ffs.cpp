#include "ffs.hpp"

#include <algorithm>
#include <map>

namespace fsc {

namespace {

std::vector<NormalWord> all_generators(const FreeFactorSystem& a) {
    std::vector<NormalWord> gens;
    for (const auto& c : a.components)
        gens.insert(gens.end(), c.gens.begin(), c.gens.end());
    gens.insert(gens.end(), a.cofactor_basis.begin(), a.cofactor_basis.end());
    return gens;
}

int piece_free_rank(const ContextPtr& ctx, const KuroshPiece& p) {
    const AtomSpec& a = ctx->atoms[p.atom];
    switch (a.kind) {
        case AtomKind::InfiniteCyclic: return p.stab.is_trivial(a) ? 0 : 1;
        case AtomKind::FreeOfRank: {
            AtomSubgroup s = p.stab;
            std::vector<NormalWord> ws;
            auto sub = GroupContext::free_context(a.rank);
            for (const AtomEl& g : s.generator_els(a)) {
                std::vector<Letter> raw;
                for (int l : g.w) raw.push_back(Letter::free_letter(std::abs(l) - 1, l < 0 ? -1 : 1));
                ws.push_back(reduce(sub, raw));
            }
            return SubgroupGraph::fold_words(sub, ws).kurosh().free_rank;
        }
        default: return 0;
    }
}

} // namespace

int abstract_free_rank(const Subgroup& h) {
    KuroshData k = h.graph.kurosh();
    int fr = k.free_rank;
    for (const auto& p : k.pieces) fr += piece_free_rank(h.ctx(), p);
    return fr;
}

FreeFactorSystem FreeFactorSystem::make(const ContextPtr& ctx, std::vector<Subgroup> comps,
                                        std::vector<NormalWord> basis) {
    FreeFactorSystem a;
    a.ctx = ctx;
    a.components = std::move(comps);
    a.cofactor_basis = std::move(basis);
    a.check();
    return a;
}

FreeFactorSystem FreeFactorSystem::empty_system(const ContextPtr& ctx) {
    std::vector<NormalWord> basis;
    for (int i = 0; i < ctx->free_rank; ++i) basis.push_back(gen_free(ctx, i));
    for (int ai = 0; ai < ctx->n_atoms(); ++ai) {
        const AtomSpec& at = ctx->atoms[ai];
        if (at.kind == AtomKind::InfiniteCyclic) basis.push_back(gen_atom(ctx, ai, AtomEl{1, {}}));
        else if (at.kind == AtomKind::FreeOfRank)
            for (int j = 1; j <= at.rank; ++j) basis.push_back(gen_atom(ctx, ai, AtomEl{0, {j}}));
        else
            throw Error("empty system needs a free group (non-free atom present)");
    }
    return make(ctx, {}, std::move(basis));
}

FreeFactorSystem FreeFactorSystem::improper(const ContextPtr& ctx) {
    std::vector<NormalWord> gens;
    for (int i = 0; i < ctx->free_rank; ++i) gens.push_back(gen_free(ctx, i));
    for (int ai = 0; ai < ctx->n_atoms(); ++ai) {
        const AtomSpec& at = ctx->atoms[ai];
        if (at.kind == AtomKind::FreeOfRank)
            for (int j = 1; j <= at.rank; ++j) gens.push_back(gen_atom(ctx, ai, AtomEl{0, {j}}));
        else if (at.kind == AtomKind::Opaque)
            for (int e = 1; e < at.table.order(); ++e) gens.push_back(gen_atom(ctx, ai, AtomEl{e, {}}));
        else
            gens.push_back(gen_atom(ctx, ai, AtomEl{1, {}}));
    }
    FreeFactorSystem a;
    a.ctx = ctx;
    a.components = {Subgroup::generated(ctx, gens)};
    a.check();
    return a;
}

bool FreeFactorSystem::is_improper() const {
    return components.size() == 1 && cofactor_basis.empty() &&
           components[0].graph.is_whole_group();
}

void FreeFactorSystem::check() const {
    for (const auto& c : components)
        if (c.is_trivial()) throw Error("free factor system: trivial component");
    for (size_t i = 0; i < components.size(); ++i)
        for (size_t j = i + 1; j < components.size(); ++j)
            if (conjugate_subgroups(components[i], components[j]))
                throw Error("free factor system: conjugate components");

    // surjectivity of the realization
    SubgroupGraph whole = SubgroupGraph::fold_words(ctx, all_generators(*this));
    if (!whole.is_whole_group()) throw Error("free factor system: realization does not generate");

    // Grushko bookkeeping: non-free pieces over all components must exhaust
    // the non-free atoms exactly once (full subgroups), and the free ranks
    // must sum with the cofactor to the free rank of the group
    std::map<int, int> atom_seen;
    int fr_sum = 0;
    for (const auto& c : components) {
        KuroshData k = c.graph.kurosh();
        fr_sum += k.free_rank;
        for (const auto& p : k.pieces) {
            const AtomSpec& at = ctx->atoms[p.atom];
            if (ctx->atom_is_free(p.atom)) {
                fr_sum += piece_free_rank(ctx, p);
            } else {
                if (!p.stab.is_full(at))
                    throw Error("free factor system: component meets an atom in a proper subgroup");
                if (++atom_seen[p.atom] > 1)
                    throw Error("free factor system: atom class covered twice");
            }
        }
    }
    for (int ai = 0; ai < ctx->n_atoms(); ++ai)
        if (!ctx->atom_is_free(ai) && !atom_seen.count(ai))
            throw Error("free factor system: non-free atom not covered (cofactor not free)");
    if (fr_sum + corank() != ctx->grushko_free_rank())
        throw Error("free factor system: free rank bookkeeping fails");
}

FreeFactorSystem FreeFactorSystem::from_components(const ContextPtr& ctx,
                                                   std::vector<Subgroup> comps) {
    // target corank from the bookkeeping identity
    int fr_sum = 0;
    for (const auto& c : comps) fr_sum += abstract_free_rank(c);
    int need = ctx->grushko_free_rank() - fr_sum;
    if (need < 0) throw Error("component free ranks exceed the group rank");

    std::vector<NormalWord> basis;
    if (need > 0) {
        std::vector<NormalWord> gens;
        for (const auto& c : comps) gens.insert(gens.end(), c.gens.begin(), c.gens.end());
        std::vector<NormalWord> cands = enumerate_words(ctx, 3);
        // greedy: add candidates preserving the bookkeeping invariant
        for (const auto& w : cands) {
            if (w.is_identity()) continue;
            if (static_cast<int>(basis.size()) == need) break;
            std::vector<NormalWord> trial = gens;
            trial.insert(trial.end(), basis.begin(), basis.end());
            trial.push_back(w);
            Subgroup joint = Subgroup::generated(ctx, trial);
            KuroshData k = joint.graph.kurosh();
            int fr = k.free_rank;
            bool pieces_ok = true;
            for (const auto& p : k.pieces) {
                if (ctx->atom_is_free(p.atom)) fr += piece_free_rank(ctx, p);
            }
            (void)pieces_ok;
            if (fr == fr_sum + static_cast<int>(basis.size()) + 1) basis.push_back(w);
        }
        if (static_cast<int>(basis.size()) != need)
            throw Error("could not find a cofactor basis witness");
    }
    FreeFactorSystem a;
    a.ctx = ctx;
    a.components = std::move(comps);
    a.cofactor_basis = std::move(basis);
    a.check();
    return a;
}

std::optional<ContainmentMap> extends_to(const FreeFactorSystem& a, const FreeFactorSystem& b) {
    ContainmentMap m;
    for (const auto& c : a.components) {
        bool placed = false;
        for (size_t j = 0; j < b.components.size() && !placed; ++j) {
            auto g = conjugate_into(c, b.components[j]);
            if (g) {
                m.assignment.push_back(static_cast<int>(j));
                m.witnesses.push_back(*g);
                placed = true;
            }
        }
        if (!placed) return std::nullopt;
    }
    return m;
}

bool ffs_equal(const FreeFactorSystem& a, const FreeFactorSystem& b) {
    if (a.size() != b.size()) return false;
    std::vector<bool> used(b.size(), false);
    for (const auto& c : a.components) {
        bool placed = false;
        for (int j = 0; j < b.size() && !placed; ++j) {
            if (used[j]) continue;
            if (conjugate_subgroups(c, b.components[j])) {
                used[j] = true;
                placed = true;
            }
        }
        if (!placed) return false;
    }
    return true;
}

bool proper_extension(const FreeFactorSystem& a, const FreeFactorSystem& b) {
    return extends_to(a, b).has_value() && !ffs_equal(a, b);
}

bool is_elementary(const FreeFactorSystem& a, const FreeFactorSystem& b) {
    if (!proper_extension(a, b)) throw Error("is_elementary: not a proper extension");
    return a.dff() == b.dff() + 1;
}

namespace {

// pick a rank-one free factor inside a component subgroup
NormalWord rank_one_inside(const Subgroup& h) {
    KuroshData k = h.graph.kurosh();
    if (!k.free_basis.empty()) return k.free_basis[0];
    for (const auto& p : k.pieces) {
        const AtomSpec& at = h.ctx()->atoms[p.atom];
        if (at.kind == AtomKind::InfiniteCyclic)
            return conj(p.conjugator, gen_atom(h.ctx(), p.atom, AtomEl{p.stab.d, {}}));
        if (at.kind == AtomKind::FreeOfRank) {
            auto gens = p.stab.generator_els(at);
            if (!gens.empty()) return conj(p.conjugator, gen_atom(h.ctx(), p.atom, gens[0]));
        }
    }
    throw Error("no rank-one free factor available");
}

} // namespace

FreeFactorSystem interpolate(const FreeFactorSystem& a, const FreeFactorSystem& b) {
    auto m = extends_to(a, b);
    if (!m || ffs_equal(a, b)) throw Error("interpolate: not a proper extension");
    const ContextPtr& ctx = a.ctx;

    // case (b): two components of `a` share a target component of `b`
    std::map<int, std::vector<int>> preimage;
    for (size_t i = 0; i < m->assignment.size(); ++i)
        preimage[m->assignment[i]].push_back(static_cast<int>(i));
    for (auto& [j, is] : preimage) {
        if (is.size() < 2) continue;
        int i1 = is[0], i2 = is[1];
        std::vector<NormalWord> joint;
        for (const auto& g : a.components[i1].gens) joint.push_back(conj(m->witnesses[i1], g));
        for (const auto& g : a.components[i2].gens) joint.push_back(conj(m->witnesses[i2], g));
        std::vector<Subgroup> comps;
        for (int i = 0; i < a.size(); ++i)
            if (i != i1 && i != i2) comps.push_back(a.components[i]);
        comps.push_back(Subgroup::generated(ctx, joint));
        FreeFactorSystem c = FreeFactorSystem::from_components(ctx, std::move(comps));
        if (proper_extension(a, c) && extends_to(c, b) && is_elementary(a, c)) return c;
    }

    // case (a)/(c): adjoin a rank-one free factor. Candidates: free basis
    // elements of target components not fully used up, then elements of the
    // cofactor basis of a realization of `a`.
    std::vector<NormalWord> cands;
    for (int j = 0; j < b.size(); ++j) {
        KuroshData k = b.components[j].graph.kurosh();
        for (const auto& w : k.free_basis) cands.push_back(w);
        for (const auto& p : k.pieces)
            if (ctx->atom_is_free(p.atom)) {
                try {
                    Subgroup piece = Subgroup::generated(
                        ctx, {conj(p.conjugator,
                                   gen_atom(ctx, p.atom, p.stab.generator_els(ctx->atoms[p.atom]).at(0)))});
                    cands.push_back(piece.gens[0]);
                } catch (...) {
                }
            }
    }
    for (const auto& w : a.cofactor_basis) cands.push_back(w);
    for (const auto& z : cands) {
        if (z.is_identity()) continue;
        try {
            std::vector<Subgroup> comps = a.components;
            comps.push_back(Subgroup::generated(ctx, {z}));
            FreeFactorSystem c = FreeFactorSystem::from_components(ctx, std::move(comps));
            if (proper_extension(a, c) && extends_to(c, b) && is_elementary(a, c)) return c;
        } catch (...) {
        }
    }
    throw Error("interpolate: no elementary intermediate found");
}

Classification classify(const FreeFactorSystem& a) {
    Classification r{FFSClass::Nonexceptional, false};
    if (a.is_improper()) {
        r.cls = FFSClass::Improper;
        return r;
    }
    int d = a.dff();
    if (d == 1) r.cls = FFSClass::ExceptionalD1;
    else if (d == 2 && a.size() == 1) r.cls = FFSClass::ExceptionalD2a;
    else if (d == 2 && a.size() == 3) r.cls = FFSClass::ExceptionalD2b;
    else r.cls = FFSClass::Nonexceptional;

    // Grushko flag: every atom appears as a full component
    std::vector<bool> present(a.ctx->n_atoms(), false);
    int covered = 0;
    for (const auto& c : a.components) {
        KuroshData k = c.graph.kurosh();
        if (k.pieces.size() == 1 && k.free_rank == 0 &&
            k.pieces[0].stab.is_full(a.ctx->atoms[k.pieces[0].atom]) &&
            !present[k.pieces[0].atom]) {
            present[k.pieces[0].atom] = true;
            ++covered;
        }
    }
    r.grushko = covered == a.ctx->n_atoms() && covered == a.size();
    return r;
}

const char* ffs_class_name(FFSClass c) {
    switch (c) {
        case FFSClass::Improper: return "improper";
        case FFSClass::ExceptionalD1: return "exceptional-d1";
        case FFSClass::ExceptionalD2a: return "exceptional-d2a";
        case FFSClass::ExceptionalD2b: return "exceptional-d2b";
        case FFSClass::Nonexceptional: return "nonexceptional";
    }
    return "?";
}

} // namespace fsc
