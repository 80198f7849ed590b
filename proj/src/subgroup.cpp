#include "subgroup.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <numeric>
#include <sstream>

namespace fsc {

namespace {

long long gcdll(long long a, long long b) { return std::gcd(a < 0 ? -a : a, b < 0 ? -b : b); }

std::set<long long> opaque_closure(const AtomSpec& a, std::set<long long> s) {
    s.insert(0);
    bool grew = true;
    while (grew) {
        grew = false;
        std::vector<long long> cur(s.begin(), s.end());
        for (long long x : cur)
            for (long long y : cur) {
                long long z = a.table.times(static_cast<int>(x), static_cast<int>(y));
                if (s.insert(z).second) grew = true;
            }
        for (long long x : cur) {
            long long z = a.table.inverse(static_cast<int>(x));
            if (s.insert(z).second) grew = true;
        }
    }
    return s;
}

NormalWord free_el_to_word(const AtomSpec& a, const AtomEl& x) {
    auto sub = GroupContext::free_context(a.rank);
    std::vector<Letter> raw;
    for (int l : x.w) raw.push_back(Letter::free_letter(std::abs(l) - 1, l < 0 ? -1 : 1));
    return reduce(sub, raw);
}


} // namespace

AtomSubgroup AtomSubgroup::trivial(const AtomSpec& a) {
    AtomSubgroup s;
    switch (a.kind) {
        case AtomKind::FiniteCyclic: s.d = a.order; break;
        case AtomKind::InfiniteCyclic: s.d = 0; break;
        case AtomKind::Opaque: s.elems = {0}; break;
        case AtomKind::FreeOfRank: break;
    }
    return s;
}

AtomSubgroup AtomSubgroup::full(const AtomSpec& a) {
    AtomSubgroup s;
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
        case AtomKind::InfiniteCyclic: s.d = 1; break;
        case AtomKind::Opaque:
            for (int e = 0; e < a.table.order(); ++e) s.elems.insert(e);
            break;
        case AtomKind::FreeOfRank:
            for (int j = 1; j <= a.rank; ++j) s.gens.push_back(AtomEl{0, {j}});
            break;
    }
    return s;
}

bool AtomSubgroup::is_trivial(const AtomSpec& a) const {
    switch (a.kind) {
        case AtomKind::FiniteCyclic: return d == a.order;
        case AtomKind::InfiniteCyclic: return d == 0;
        case AtomKind::Opaque: return elems.size() <= 1;
        case AtomKind::FreeOfRank: return folded(a).is_trivial_group();
    }
    return true;
}

bool AtomSubgroup::is_full(const AtomSpec& a) const {
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
        case AtomKind::InfiniteCyclic: return d == 1;
        case AtomKind::Opaque: return static_cast<int>(elems.size()) == a.table.order();
        case AtomKind::FreeOfRank: return folded(a).is_whole_group();
    }
    return false;
}

bool AtomSubgroup::contains(const AtomSpec& a, const AtomEl& x) const {
    if (atom_is_identity(a, x)) return true;
    switch (a.kind) {
        case AtomKind::FiniteCyclic: return d != 0 && x.e % d == 0;
        case AtomKind::InfiniteCyclic: return d != 0 && x.e % d == 0;
        case AtomKind::Opaque: return elems.count(x.e) > 0;
        case AtomKind::FreeOfRank: return folded(a).contains(free_el_to_word(a, x));
    }
    return false;
}

AtomSubgroup AtomSubgroup::join_el(const AtomSpec& a, const AtomEl& x) const {
    if (contains(a, x)) return *this;
    AtomSubgroup s = *this;
    s.cache.reset();
    switch (a.kind) {
        case AtomKind::FiniteCyclic: s.d = gcdll(d, x.e); break;
        case AtomKind::InfiniteCyclic: s.d = gcdll(d, x.e); break;
        case AtomKind::Opaque: s.elems = opaque_closure(a, [&] { auto t = elems; t.insert(x.e); return t; }()); break;
        case AtomKind::FreeOfRank: s.gens.push_back(x); break;
    }
    return s;
}

AtomSubgroup AtomSubgroup::conj_by(const AtomSpec& a, const AtomEl& g) const {
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
        case AtomKind::InfiniteCyclic: return *this;
        case AtomKind::Opaque: {
            AtomSubgroup s = trivial(a);
            AtomEl gi = atom_inv(a, g);
            for (long long e : elems) s.elems.insert(atom_mul(a, atom_mul(a, gi, AtomEl{e, {}}), g).e);
            return s;
        }
        case AtomKind::FreeOfRank: {
            AtomSubgroup s = trivial(a);
            AtomEl gi = atom_inv(a, g);
            for (const AtomEl& h : gens) s.gens.push_back(atom_mul(a, atom_mul(a, gi, h), g));
            return s;
        }
    }
    return *this;
}

bool AtomSubgroup::same_subgroup(const AtomSpec& a, const AtomSubgroup& o) const {
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
        case AtomKind::InfiniteCyclic: return d == o.d;
        case AtomKind::Opaque: return elems == o.elems;
        case AtomKind::FreeOfRank: {
            for (const AtomEl& h : o.gens)
                if (!contains(a, h)) return false;
            for (const AtomEl& h : gens)
                if (!o.contains(a, h)) return false;
            return true;
        }
    }
    return false;
}

bool AtomSubgroup::conjugate_in_atom(const AtomSpec& a, const AtomSubgroup& o) const {
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
        case AtomKind::InfiniteCyclic: return d == o.d;
        case AtomKind::Opaque: {
            for (int g = 0; g < a.table.order(); ++g)
                if (conj_by(a, AtomEl{g, {}}).same_subgroup(a, o)) return true;
            return false;
        }
        case AtomKind::FreeOfRank: {
            auto sub = GroupContext::free_context(a.rank);
            std::vector<NormalWord> g1, g2;
            for (const AtomEl& h : gens) g1.push_back(free_el_to_word(a, h));
            for (const AtomEl& h : o.gens) g2.push_back(free_el_to_word(a, h));
            return conjugate_subgroups(Subgroup::generated(sub, g1), Subgroup::generated(sub, g2));
        }
    }
    return false;
}

std::vector<AtomEl> AtomSubgroup::generator_els(const AtomSpec& a) const {
    std::vector<AtomEl> out;
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
            if (d != a.order) out.push_back(AtomEl{d, {}});
            break;
        case AtomKind::InfiniteCyclic:
            if (d != 0) out.push_back(AtomEl{d, {}});
            break;
        case AtomKind::Opaque:
            for (long long e : elems)
                if (e != 0) out.push_back(AtomEl{e, {}});
            break;
        case AtomKind::FreeOfRank:
            for (const AtomEl& h : gens)
                if (!h.w.empty()) out.push_back(h);
            break;
    }
    return out;
}

long long AtomSubgroup::subgroup_order(const AtomSpec& a) const {
    switch (a.kind) {
        case AtomKind::FiniteCyclic: return a.order / d;
        case AtomKind::InfiniteCyclic: return d == 0 ? 1 : 0;
        case AtomKind::Opaque: return static_cast<long long>(elems.size());
        case AtomKind::FreeOfRank: return is_trivial(a) ? 1 : 0;
    }
    return 0;
}

bool AtomSubgroup::coset_eq(const AtomSpec& a, const AtomEl& p, const AtomEl& q) const {
    return contains(a, atom_mul(a, p, atom_inv(a, q)));
}

const SubgroupGraph& AtomSubgroup::folded(const AtomSpec& a) const {
    if (!cache) {
        auto sub = GroupContext::free_context(a.rank);
        std::vector<NormalWord> ws;
        for (const AtomEl& h : gens) ws.push_back(free_el_to_word(a, h));
        cache = std::make_shared<SubgroupGraph>(SubgroupGraph::fold_words(sub, ws));
    }
    return *cache;
}

// ---------------------------------------------------------------------------
// SubgroupGraph

namespace {

struct UF {
    std::vector<int> p;
    explicit UF(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
    int find(int x) {
        while (p[x] != x) x = p[x] = p[p[x]];
        return x;
    }
    bool merge(int a, int b) {
        a = find(a); b = find(b);
        if (a == b) return false;
        p[std::max(a, b)] = std::min(a, b);
        return true;
    }
};

} // namespace

SubgroupGraph SubgroupGraph::fold_words(const ContextPtr& ctx, const std::vector<NormalWord>& gens) {
    int next = 1; // 0 is the base
    std::vector<std::array<int, 3>> fe; // (letter, src, tgt)
    struct RComp {
        int atom;
        std::vector<std::pair<int, AtomEl>> members;
        AtomSubgroup stab;
    };
    std::vector<RComp> rc;

    for (const NormalWord& g0 : gens) {
        NormalWord g = g0;
        if (g.is_identity()) continue;
        int cur = 0;
        for (size_t i = 0; i < g.letters.size(); ++i) {
            const Letter& l = g.letters[i];
            int tgt = (i + 1 == g.letters.size()) ? 0 : next++;
            if (l.is_free()) {
                if (l.sign > 0) fe.push_back({l.free_index, cur, tgt});
                else fe.push_back({l.free_index, tgt, cur});
            } else {
                const AtomSpec& a = ctx->atoms[l.atom];
                if (cur == tgt) {
                    rc.push_back({l.atom, {{cur, atom_identity()}}, AtomSubgroup::trivial(a).join_el(a, l.el)});
                } else {
                    rc.push_back({l.atom, {{cur, atom_identity()}, {tgt, l.el}}, AtomSubgroup::trivial(a)});
                }
            }
            cur = tgt;
        }
    }

    UF uf(next);
    int fuel = 200000;
    bool changed = true;
    while (changed) {
        if (--fuel < 0) throw Error("subgroup folding did not terminate");
        changed = false;

        // canonicalize and dedupe free edges
        for (auto& e : fe) { e[1] = uf.find(e[1]); e[2] = uf.find(e[2]); }
        std::sort(fe.begin(), fe.end());
        fe.erase(std::unique(fe.begin(), fe.end()), fe.end());

        // determinism of free edges in both directions
        {
            std::map<std::pair<int, int>, int> out, in;
            for (auto& e : fe) {
                auto [it, fresh] = out.try_emplace({e[0], e[1]}, e[2]);
                if (!fresh && uf.merge(it->second, e[2])) changed = true;
                auto [it2, fresh2] = in.try_emplace({e[0], e[2]}, e[1]);
                if (!fresh2 && uf.merge(it2->second, e[1])) changed = true;
            }
            if (changed) continue;
        }

        // canonicalize members; resolve duplicate members inside a component
        for (auto& c : rc) {
            if (c.members.empty()) continue;
            const AtomSpec& a = ctx->atoms[c.atom];
            std::map<int, AtomEl> seen;
            std::vector<std::pair<int, AtomEl>> kept;
            for (auto& [v0, p] : c.members) {
                int v = uf.find(v0);
                auto it = seen.find(v);
                if (it == seen.end()) {
                    seen.emplace(v, p);
                    kept.emplace_back(v, p);
                } else if (!c.stab.coset_eq(a, it->second, p)) {
                    c.stab = c.stab.join_el(a, atom_mul(a, it->second, atom_inv(a, p)));
                    changed = true;
                }
            }
            c.members = std::move(kept);
        }
        if (changed) continue;

        // a vertex lying in two components of the same atom: merge them
        {
            std::map<std::pair<int, int>, int> owner; // (atom, vertex) -> comp
            int c1 = -1, c2 = -1, vshared = -1;
            for (size_t ci = 0; ci < rc.size() && c1 < 0; ++ci) {
                for (auto& [v, p] : rc[ci].members) {
                    auto [it, fresh] = owner.try_emplace({rc[ci].atom, v}, static_cast<int>(ci));
                    if (!fresh) { c1 = it->second; c2 = static_cast<int>(ci); vshared = v; break; }
                }
            }
            if (c1 >= 0) {
                const AtomSpec& a = ctx->atoms[rc[c1].atom];
                auto gauge = [&](RComp& c) {
                    AtomEl gv;
                    for (auto& [v, p] : c.members)
                        if (v == vshared) gv = p;
                    AtomEl gvi = atom_inv(a, gv);
                    c.stab = c.stab.conj_by(a, gv);
                    for (auto& [v, p] : c.members) p = atom_mul(a, gvi, p);
                };
                gauge(rc[c1]);
                gauge(rc[c2]);
                RComp merged;
                merged.atom = rc[c1].atom;
                merged.stab = rc[c1].stab;
                for (const AtomEl& h : rc[c2].stab.generator_els(a)) merged.stab = merged.stab.join_el(a, h);
                merged.members = rc[c1].members;
                for (auto& [v, p] : rc[c2].members) {
                    bool found = false;
                    for (auto& [v1, p1] : merged.members)
                        if (v1 == v) {
                            found = true;
                            if (!merged.stab.coset_eq(a, p1, p))
                                merged.stab = merged.stab.join_el(a, atom_mul(a, p1, atom_inv(a, p)));
                        }
                    if (!found) merged.members.emplace_back(v, p);
                }
                rc[c1] = std::move(merged);
                rc.erase(rc.begin() + c2);
                changed = true;
                continue;
            }
        }

        // coset collision between distinct members of one component
        for (auto& c : rc) {
            const AtomSpec& a = ctx->atoms[c.atom];
            for (size_t i = 0; i < c.members.size() && !changed; ++i)
                for (size_t j = i + 1; j < c.members.size() && !changed; ++j)
                    if (c.stab.coset_eq(a, c.members[i].second, c.members[j].second))
                        if (uf.merge(c.members[i].first, c.members[j].first)) changed = true;
            if (changed) break;
        }
    }

    // compact vertex ids, base first
    std::map<int, int> dense;
    auto id = [&](int v) {
        v = uf.find(v);
        auto it = dense.find(v);
        if (it != dense.end()) return it->second;
        int k = static_cast<int>(dense.size());
        dense[v] = k;
        return k;
    };
    SubgroupGraph g;
    g.ctx = ctx;
    g.base = id(0);
    g.fwd.assign(ctx->free_rank, {});
    g.bwd.assign(ctx->free_rank, {});
    for (auto& e : fe) {
        int s = id(e[1]), t = id(e[2]);
        g.fwd[e[0]][s] = t;
        g.bwd[e[0]][t] = s;
    }
    for (auto& c : rc) {
        if (c.members.size() == 1 && c.stab.is_trivial(ctx->atoms[c.atom])) continue;
        Comp nc;
        nc.atom = c.atom;
        nc.stab = c.stab;
        for (auto& [v, p] : c.members) nc.members[id(v)] = p;
        g.comps.push_back(std::move(nc));
    }
    g.nv = static_cast<int>(dense.size());
    if (g.nv == 0) { g.nv = 1; g.base = 0; }
    return g;
}

int SubgroupGraph::comp_of(int atom, int v) const {
    for (size_t i = 0; i < comps.size(); ++i)
        if (comps[i].atom == atom && comps[i].members.count(v)) return static_cast<int>(i);
    return -1;
}

std::optional<int> SubgroupGraph::step(int v, const Letter& l) const {
    if (l.is_free()) {
        const auto& m = l.sign > 0 ? fwd[l.free_index] : bwd[l.free_index];
        auto it = m.find(v);
        if (it == m.end()) return std::nullopt;
        return it->second;
    }
    int ci = comp_of(l.atom, v);
    if (ci < 0) return std::nullopt;
    const Comp& c = comps[ci];
    const AtomSpec& a = ctx->atoms[l.atom];
    AtomEl target = atom_mul(a, c.members.at(v), l.el);
    for (const auto& [w, p] : c.members)
        if (c.stab.coset_eq(a, target, p)) return w;
    return std::nullopt;
}

std::optional<int> SubgroupGraph::trace(const NormalWord& w, int from) const {
    int cur = from;
    for (const Letter& l : w.letters) {
        auto nx = step(cur, l);
        if (!nx) return std::nullopt;
        cur = *nx;
    }
    return cur;
}

bool SubgroupGraph::contains(const NormalWord& w) const {
    auto t = trace(w, base);
    return t && *t == base;
}

int SubgroupGraph::step_extend(int v, const Letter& l) {
    auto got = step(v, l);
    if (got) return *got;
    int w = nv++;
    if (l.is_free()) {
        if (l.sign > 0) { fwd[l.free_index][v] = w; bwd[l.free_index][w] = v; }
        else { fwd[l.free_index][w] = v; bwd[l.free_index][v] = w; }
        return w;
    }
    int ci = comp_of(l.atom, v);
    const AtomSpec& a = ctx->atoms[l.atom];
    if (ci < 0) {
        Comp c;
        c.atom = l.atom;
        c.stab = AtomSubgroup::trivial(a);
        c.members[v] = atom_identity();
        c.members[w] = l.el;
        comps.push_back(std::move(c));
    } else {
        comps[ci].members[w] = atom_mul(a, comps[ci].members.at(v), l.el);
    }
    return w;
}

int SubgroupGraph::trace_extend(const NormalWord& w, int from) {
    int cur = from;
    for (const Letter& l : w.letters) cur = step_extend(cur, l);
    return cur;
}

void SubgroupGraph::trim() {
    std::vector<bool> alive(nv, true);
    bool changed = true;
    while (changed) {
        changed = false;
        // drop vacuous components
        for (auto it = comps.begin(); it != comps.end();) {
            if (it->members.size() <= 1 && it->stab.is_trivial(ctx->atoms[it->atom]))
                { it = comps.erase(it); changed = true; }
            else ++it;
        }
        std::vector<int> deg(nv, 0);
        for (int l = 0; l < ctx->free_rank; ++l)
            for (auto& [s, t] : fwd[l]) { deg[s]++; deg[t]++; }
        for (auto& c : comps)
            for (auto& [v, p] : c.members) deg[v]++;
        for (int v = 0; v < nv; ++v) {
            if (v == base || !alive[v] || deg[v] > 1) continue;
            alive[v] = false;
            changed = true;
            for (int l = 0; l < ctx->free_rank; ++l) {
                for (auto it = fwd[l].begin(); it != fwd[l].end();)
                    if (it->first == v || it->second == v) { bwd[l].erase(it->second); it = fwd[l].erase(it); }
                    else ++it;
            }
            for (auto& c : comps) c.members.erase(v);
        }
    }
    // compact
    std::map<int, int> dense;
    dense[base] = 0;
    for (int v = 0; v < nv; ++v)
        if (alive[v] && !dense.count(v)) dense[v] = static_cast<int>(dense.size());
    auto id = [&](int v) { return dense.at(v); };
    std::vector<std::map<int, int>> nf(ctx->free_rank), nb(ctx->free_rank);
    for (int l = 0; l < ctx->free_rank; ++l)
        for (auto& [s, t] : fwd[l]) { nf[l][id(s)] = id(t); nb[l][id(t)] = id(s); }
    for (auto& c : comps) {
        std::map<int, AtomEl> m;
        for (auto& [v, p] : c.members) m[id(v)] = p;
        c.members = std::move(m);
    }
    fwd = std::move(nf);
    bwd = std::move(nb);
    nv = static_cast<int>(dense.size());
    base = 0;
}

bool SubgroupGraph::is_whole_group() const {
    SubgroupGraph g = *this;
    g.trim();
    if (g.nv != 1) return false;
    for (int l = 0; l < ctx->free_rank; ++l) {
        auto it = g.fwd[l].find(g.base);
        if (it == g.fwd[l].end() || it->second != g.base) return false;
    }
    std::vector<bool> seen(ctx->n_atoms(), false);
    for (auto& c : g.comps) {
        if (seen[c.atom]) return false;
        seen[c.atom] = true;
        if (!c.stab.is_full(ctx->atoms[c.atom])) return false;
    }
    for (int i = 0; i < ctx->n_atoms(); ++i)
        if (!seen[i]) return false;
    return true;
}

bool SubgroupGraph::is_trivial_group() const {
    SubgroupGraph g = *this;
    g.trim();
    if (g.nv != 1) return false;
    for (int l = 0; l < ctx->free_rank; ++l)
        if (!g.fwd[l].empty()) return false;
    return g.comps.empty();
}

int SubgroupGraph::edge_count() const {
    int e = 0;
    for (int l = 0; l < ctx->free_rank; ++l) e += static_cast<int>(fwd[l].size());
    for (auto& c : comps) e += static_cast<int>(c.members.size());
    return e;
}

namespace {

// BFS spanning structure over a trimmed graph; used by kurosh() and
// path_word. Comp moves walk from the entry member to the other members.
struct Span {
    std::vector<NormalWord> path;     // per vertex
    std::vector<int> entry;           // per comp: entry member, -1 if unvisited
    std::vector<std::pair<int, int>> nontree_free;      // (letter, src) with fwd edge
    std::vector<std::pair<int, int>> nontree_member;    // (comp, member)
};

Span spanning(const SubgroupGraph& g) {
    Span sp;
    sp.path.assign(g.nv, NormalWord(g.ctx));
    sp.entry.assign(g.comps.size(), -1);
    std::vector<bool> seen(g.nv, false);
    std::vector<std::set<std::pair<int, int>>> treef(g.ctx->free_rank);
    seen[g.base] = true;
    std::deque<int> q{g.base};
    while (!q.empty()) {
        int v = q.front();
        q.pop_front();
        for (int l = 0; l < g.ctx->free_rank; ++l) {
            auto it = g.fwd[l].find(v);
            if (it != g.fwd[l].end() && !seen[it->second]) {
                seen[it->second] = true;
                treef[l].insert({v, it->second});
                sp.path[it->second] = mul(sp.path[v], gen_free(g.ctx, l, 1));
                q.push_back(it->second);
            }
            auto it2 = g.bwd[l].find(v);
            if (it2 != g.bwd[l].end() && !seen[it2->second]) {
                seen[it2->second] = true;
                treef[l].insert({it2->second, v});
                sp.path[it2->second] = mul(sp.path[v], gen_free(g.ctx, l, -1));
                q.push_back(it2->second);
            }
        }
        for (size_t ci = 0; ci < g.comps.size(); ++ci) {
            const auto& c = g.comps[ci];
            if (!c.members.count(v)) continue;
            if (sp.entry[ci] < 0) {
                sp.entry[ci] = v;
                const AtomSpec& a = g.ctx->atoms[c.atom];
                AtomEl gv = c.members.at(v);
                for (const auto& [w, p] : c.members) {
                    if (w == v) continue;
                    if (!seen[w]) {
                        seen[w] = true;
                        AtomEl mv = atom_mul(a, atom_inv(a, gv), p); // transition v -> w
                        sp.path[w] = mul(sp.path[v], gen_atom(g.ctx, c.atom, mv));
                        q.push_back(w);
                    } else {
                        sp.nontree_member.push_back({static_cast<int>(ci), w});
                    }
                }
            }
        }
    }
    for (int l = 0; l < g.ctx->free_rank; ++l)
        for (auto& [s, t] : g.fwd[l])
            if (!treef[l].count({s, t})) sp.nontree_free.push_back({l, s});
    // memberships discovered before their comp got an entry: when the entry
    // member was processed the others were already seen
    return sp;
}

} // namespace

KuroshData SubgroupGraph::kurosh() const {
    SubgroupGraph g = *this;
    g.trim();
    Span sp = spanning(g);
    KuroshData k;
    for (auto& [l, s] : sp.nontree_free) {
        int t = g.fwd[l].at(s);
        k.free_basis.push_back(mul(mul(sp.path[s], gen_free(g.ctx, l, 1)), inv(sp.path[t])));
    }
    for (auto& [ci, w] : sp.nontree_member) {
        const auto& c = g.comps[ci];
        const AtomSpec& a = g.ctx->atoms[c.atom];
        int u = sp.entry[ci];
        AtomEl mv = atom_mul(a, atom_inv(a, c.members.at(w)), c.members.at(u)); // w -> u
        k.free_basis.push_back(mul(mul(sp.path[w], gen_atom(g.ctx, c.atom, mv)), inv(sp.path[u])));
    }
    k.free_rank = static_cast<int>(k.free_basis.size());
    for (size_t ci = 0; ci < g.comps.size(); ++ci) {
        const auto& c = g.comps[ci];
        const AtomSpec& a = g.ctx->atoms[c.atom];
        if (c.stab.is_trivial(a)) continue;
        KuroshPiece p;
        p.atom = c.atom;
        int u = sp.entry[ci];
        p.stab = c.stab.conj_by(a, c.members.at(u));
        p.conjugator = sp.path[u];
        k.pieces.push_back(std::move(p));
    }
    // Euler characteristic cross-check
    int E = g.edge_count(), V = g.nv + static_cast<int>(g.comps.size());
    if (k.free_rank != E - V + 1)
        throw Error("kurosh: betti mismatch (internal)");
    return k;
}

NormalWord SubgroupGraph::path_word(int v) const {
    Span sp = spanning(*this);
    return sp.path[v];
}

std::vector<NormalWord> SubgroupGraph::vertex_path_words() const {
    Span sp = spanning(*this);
    return sp.path;
}

bool SubgroupGraph::valid_folded() const {
    for (auto& c : comps) {
        const AtomSpec& a = ctx->atoms[c.atom];
        for (auto i = c.members.begin(); i != c.members.end(); ++i) {
            auto j = i;
            for (++j; j != c.members.end(); ++j)
                if (c.stab.coset_eq(a, i->second, j->second)) return false;
        }
    }
    for (size_t i = 0; i < comps.size(); ++i)
        for (size_t j = i + 1; j < comps.size(); ++j) {
            if (comps[i].atom != comps[j].atom) continue;
            for (auto& [v, p] : comps[i].members)
                if (comps[j].members.count(v)) return false;
        }
    return true;
}

Subgroup Subgroup::generated(const ContextPtr& ctx, std::vector<NormalWord> gens) {
    Subgroup s;
    for (auto& g : gens)
        if (!g.is_identity()) s.gens.push_back(g);
    s.graph = SubgroupGraph::fold_words(ctx, s.gens);
    s.graph.trim();
    return s;
}

Subgroup Subgroup::conjugated(const NormalWord& g) const {
    std::vector<NormalWord> ng;
    for (const auto& h : gens) ng.push_back(conj(g, h));
    return Subgroup::generated(ctx(), ng);
}

int CosetTable::token(const NormalWord& g) {
    return graph_.trace_extend(inv(g), graph_.base);
}

namespace {

bool conj_works(const NormalWord& g, const Subgroup& h1, const Subgroup& h2) {
    for (const auto& h : h1.gens)
        if (!h2.contains(conj(g, h))) return false;
    return true;
}

std::vector<NormalWord> conj_candidates(const Subgroup& h2, int extra_len) {
    const ContextPtr& ctx = h2.ctx();
    std::vector<NormalWord> cands;
    cands.push_back(identity(ctx));
    auto paths = h2.graph.vertex_path_words();
    for (int v = 0; v < h2.graph.nv; ++v) {
        cands.push_back(paths[v]);
        // shifts into atom cosets at v
        for (const auto& c : h2.graph.comps) {
            if (!c.members.count(v)) continue;
            const AtomSpec& a = ctx->atoms[c.atom];
            std::vector<AtomEl> shifts;
            switch (a.kind) {
                case AtomKind::FiniteCyclic:
                    for (int e = 1; e < a.order; ++e) shifts.push_back(AtomEl{e, {}});
                    break;
                case AtomKind::Opaque:
                    for (int e = 1; e < a.table.order(); ++e) shifts.push_back(AtomEl{e, {}});
                    break;
                case AtomKind::InfiniteCyclic:
                    for (int e = -3; e <= 3; ++e)
                        if (e) shifts.push_back(AtomEl{e, {}});
                    break;
                case AtomKind::FreeOfRank:
                    for (int j = 1; j <= a.rank; ++j) {
                        shifts.push_back(AtomEl{0, {j}});
                        shifts.push_back(AtomEl{0, {-j}});
                    }
                    break;
            }
            for (const AtomEl& s : shifts) cands.push_back(mul(paths[v], gen_atom(ctx, c.atom, s)));
        }
    }
    if (extra_len > 0) {
        auto words = enumerate_words(ctx, extra_len);
        cands.insert(cands.end(), words.begin(), words.end());
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const NormalWord& a, const NormalWord& b) { return a.length() < b.length(); });
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    return cands;
}

} // namespace

std::optional<NormalWord> conjugate_into(const Subgroup& h1, const Subgroup& h2, int extra_len) {
    if (h1.is_trivial()) return identity(h1.ctx().get() ? h1.ctx() : h2.ctx());
    if (!ab_image_contained(h1, h2)) return std::nullopt;
    for (const NormalWord& g : conj_candidates(h2, extra_len))
        if (conj_works(g, h1, h2)) return g;
    return std::nullopt;
}

bool conjugate_subgroups(const Subgroup& h1, const Subgroup& h2, int extra_len) {
    if (h1.is_trivial() && h2.is_trivial()) return true;
    if (h1.is_trivial() || h2.is_trivial()) return false;
    if (!ab_image_contained(h1, h2) || !ab_image_contained(h2, h1)) return false;
    for (const NormalWord& g : conj_candidates(h2, extra_len)) {
        if (!conj_works(g, h1, h2)) continue;
        // require equality: conjugate h2 back and check containment in h1
        NormalWord gi = inv(g);
        bool ok = true;
        for (const auto& h : h2.gens)
            if (!h1.contains(conj(gi, h))) { ok = false; break; }
        if (ok) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// abelianization obstruction

namespace {

struct AbSpace {
    int dim = 0;
    std::vector<long long> moduli;      // 0 = free coordinate
    std::vector<int> atom_offset;       // -1 for opaque atoms
    int free_offset = 0;
};

AbSpace ab_space(const ContextPtr& ctx) {
    AbSpace s;
    s.atom_offset.assign(ctx->n_atoms(), -1);
    for (int i = 0; i < ctx->n_atoms(); ++i) {
        const AtomSpec& a = ctx->atoms[i];
        switch (a.kind) {
            case AtomKind::FiniteCyclic:
                s.atom_offset[i] = s.dim;
                s.moduli.push_back(a.order);
                s.dim += 1;
                break;
            case AtomKind::InfiniteCyclic:
                s.atom_offset[i] = s.dim;
                s.moduli.push_back(0);
                s.dim += 1;
                break;
            case AtomKind::FreeOfRank:
                s.atom_offset[i] = s.dim;
                for (int j = 0; j < a.rank; ++j) s.moduli.push_back(0);
                s.dim += a.rank;
                break;
            case AtomKind::Opaque: break; // projected away
        }
    }
    s.free_offset = s.dim;
    for (int j = 0; j < ctx->free_rank; ++j) s.moduli.push_back(0);
    s.dim += ctx->free_rank;
    return s;
}

std::vector<long long> ab_vector(const AbSpace& s, const NormalWord& w) {
    std::vector<long long> v(s.dim, 0);
    for (const Letter& l : w.letters) {
        if (l.is_free()) {
            v[s.free_offset + l.free_index] += l.sign;
        } else if (s.atom_offset[l.atom] >= 0) {
            const AtomSpec& a = w.ctx->atoms[l.atom];
            int off = s.atom_offset[l.atom];
            if (a.kind == AtomKind::FreeOfRank) {
                for (int x : l.el.w) v[off + std::abs(x) - 1] += (x > 0 ? 1 : -1);
            } else {
                v[off] += l.el.e;
            }
        }
    }
    return v;
}

// membership of b in the integer column lattice of cols (destructive)
bool in_lattice(std::vector<std::vector<long long>> cols, std::vector<long long> b) {
    size_t dim = b.size();
    size_t row = 0, used = 0;
    while (row < dim && used < cols.size()) {
        // gcd-eliminate row `row` across columns used..end
        while (true) {
            size_t piv = cols.size();
            for (size_t c = used; c < cols.size(); ++c)
                if (cols[c][row] != 0 && (piv == cols.size() || std::llabs(cols[c][row]) < std::llabs(cols[piv][row])))
                    piv = c;
            if (piv == cols.size()) break;
            bool others = false;
            for (size_t c = used; c < cols.size(); ++c) {
                if (c == piv || cols[c][row] == 0) continue;
                long long q = cols[c][row] / cols[piv][row];
                for (size_t r = 0; r < dim; ++r) cols[c][r] -= q * cols[piv][r];
                if (cols[c][row] != 0) others = true;
            }
            if (!others) {
                std::swap(cols[piv], cols[used]);
                break;
            }
        }
        if (used < cols.size() && cols[used][row] != 0) {
            if (b[row] % cols[used][row] != 0) return false;
            long long q = b[row] / cols[used][row];
            for (size_t r = 0; r < dim; ++r) b[r] -= q * cols[used][r];
            ++used;
        } else if (b[row] != 0) {
            return false;
        }
        ++row;
    }
    for (; row < dim; ++row)
        if (b[row] != 0) return false;
    return true;
}

} // namespace

bool ab_image_contained(const Subgroup& h1, const Subgroup& h2) {
    const ContextPtr& ctx = h1.ctx() ? h1.ctx() : h2.ctx();
    AbSpace s = ab_space(ctx);
    if (s.dim == 0) return true;
    std::vector<std::vector<long long>> cols;
    for (const auto& g : h2.gens) cols.push_back(ab_vector(s, g));
    for (int i = 0; i < s.dim; ++i) {
        if (s.moduli[i] == 0) continue;
        std::vector<long long> m(s.dim, 0);
        m[i] = s.moduli[i];
        cols.push_back(m);
    }
    for (const auto& g : h1.gens)
        if (!in_lattice(cols, ab_vector(s, g))) return false;
    return true;
}

} // namespace fsc
