#include "splitting.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <sstream>

namespace fsc {

int MarkedSplitting::degree(int v) const {
    int d = 0;
    for (const auto& e : edges) {
        if (e.from == v) ++d;
        if (e.to == v) ++d;
    }
    return d;
}

std::vector<std::pair<int, int>> MarkedSplitting::ends_at(int v) const {
    std::vector<std::pair<int, int>> out;
    for (size_t i = 0; i < edges.size(); ++i) {
        if (edges[i].from == v) out.push_back({static_cast<int>(i), +1});
        if (edges[i].to == v) out.push_back({static_cast<int>(i), -1});
    }
    return out;
}

int MarkedSplitting::total_edgelets() const {
    int n = 0;
    for (const auto& e : edges) n += e.edgelets;
    return n;
}

bool MarkedSplitting::group_contains(int v, const NormalWord& w) const {
    if (w.is_identity()) return true;
    if (!verts[v].group) return false;
    return verts[v].group->contains(w);
}

std::pair<int, NormalWord> MarkedSplitting::walk(const GogPath& p, bool check) const {
    int v = p.start;
    NormalWord off = identity(ctx);
    for (const GogItem& it : p.items) {
        if (!it.is_step) {
            if (check && !group_contains(v, it.h)) throw Error("walk: element not in vertex group");
            off = mul(off, it.h);
        } else {
            const QEdge& e = edges.at(it.edge);
            if (it.dir > 0) {
                if (e.from != v) throw Error("walk: step source mismatch");
                off = mul(off, e.label);
                v = e.to;
            } else {
                if (e.to != v) throw Error("walk: step target mismatch");
                off = mul(off, inv(e.label));
                v = e.from;
            }
        }
    }
    return {v, off};
}

GogPath MarkedSplitting::reduced(GogPath p) const {
    std::vector<GogItem> out;
    for (GogItem& it : p.items) {
        if (!it.is_step) {
            if (it.h.is_identity()) continue;
            if (!out.empty() && !out.back().is_step) {
                out.back().h = mul(out.back().h, it.h);
                if (out.back().h.is_identity()) out.pop_back();
                continue;
            }
            out.push_back(std::move(it));
        } else {
            if (!out.empty() && out.back().is_step && out.back().edge == it.edge &&
                out.back().dir == -it.dir) {
                out.pop_back();
                // flanking elems may now be adjacent
                if (out.size() >= 2 && !out.back().is_step && !out[out.size() - 2].is_step) {
                    GogItem h = std::move(out.back());
                    out.pop_back();
                    out.back().h = mul(out.back().h, h.h);
                    if (out.back().h.is_identity()) out.pop_back();
                }
                continue;
            }
            out.push_back(std::move(it));
        }
    }
    // a trailing merge may re-expose cancellations; iterate until stable
    GogPath r;
    r.start = p.start;
    r.items = std::move(out);
    for (size_t i = 1; i < r.items.size(); ++i) {
        if (r.items[i].is_step && r.items[i - 1].is_step && r.items[i].edge == r.items[i - 1].edge &&
            r.items[i].dir == -r.items[i - 1].dir)
            return reduced(std::move(r));
        if (!r.items[i].is_step && !r.items[i - 1].is_step) return reduced(std::move(r));
    }
    return r;
}

GogPath MarkedSplitting::inverse_path(const GogPath& p) const {
    GogPath r;
    r.start = walk(p).first;
    for (auto it = p.items.rbegin(); it != p.items.rend(); ++it) {
        if (it->is_step) r.items.push_back(GogItem::step(it->edge, -it->dir));
        else r.items.push_back(GogItem::elem(inv(it->h)));
    }
    return r;
}

GogPath MarkedSplitting::concat(GogPath a, const GogPath& b) const {
    if (walk(a).first != b.start) throw Error("concat: endpoint mismatch");
    a.items.insert(a.items.end(), b.items.begin(), b.items.end());
    return reduced(std::move(a));
}

GogPath MarkedSplitting::tau_path(int v) const {
    std::vector<int> prev_edge(verts.size(), -1), prev_dir(verts.size(), 0), prev_v(verts.size(), -1);
    std::vector<bool> seen(verts.size(), false);
    seen[base] = true;
    std::deque<int> q{base};
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (size_t ei = 0; ei < edges.size(); ++ei) {
            if (!edges[ei].in_tree) continue;
            const QEdge& e = edges[ei];
            if (e.from == u && !seen[e.to]) {
                seen[e.to] = true;
                prev_edge[e.to] = static_cast<int>(ei);
                prev_dir[e.to] = +1;
                prev_v[e.to] = u;
                q.push_back(e.to);
            }
            if (e.to == u && !seen[e.from]) {
                seen[e.from] = true;
                prev_edge[e.from] = static_cast<int>(ei);
                prev_dir[e.from] = -1;
                prev_v[e.from] = u;
                q.push_back(e.from);
            }
        }
    }
    if (!seen[v]) throw Error("tau_path: vertex not reachable through the tree");
    GogPath p;
    p.start = base;
    std::vector<GogItem> rev;
    for (int cur = v; cur != base; cur = prev_v[cur])
        rev.push_back(GogItem::step(prev_edge[cur], prev_dir[cur]));
    p.items.assign(rev.rbegin(), rev.rend());
    return p;
}

GogPath MarkedSplitting::nf_loop(const NormalWord& g) const {
    GogPath p;
    p.start = base;
    auto append = [&](const GogPath& q, bool invert) {
        GogPath qq = invert ? inverse_path(q) : q;
        p.items.insert(p.items.end(), qq.items.begin(), qq.items.end());
    };
    for (const Letter& l : g.letters) {
        if (l.is_free()) {
            append(letter_seeds.at(l.free_index), l.sign < 0);
        } else {
            const AtomSpec& a = ctx->atoms[l.atom];
            const auto& seeds = atom_seeds.at(l.atom);
            switch (a.kind) {
                case AtomKind::FiniteCyclic:
                    for (int i = 0; i < l.el.e; ++i) append(seeds.at(0), false);
                    break;
                case AtomKind::InfiniteCyclic:
                    for (int i = 0; i < std::llabs(l.el.e); ++i) append(seeds.at(0), l.el.e < 0);
                    break;
                case AtomKind::Opaque:
                    append(seeds.at(l.el.e - 1), false);
                    break;
                case AtomKind::FreeOfRank:
                    for (int x : l.el.w) append(seeds.at(std::abs(x) - 1), x < 0);
                    break;
            }
        }
    }
    return reduced(std::move(p));
}

GogPath MarkedSplitting::locate(int v, const NormalWord& pos) const {
    return concat(nf_loop(pos), tau_path(v));
}

bool MarkedSplitting::same_tree_vertex(int v, const NormalWord& p, int w, const NormalWord& q) const {
    if (v != w) return false;
    return group_contains(v, mul(inv(p), q));
}

bool MarkedSplitting::same_point(const TreePoint& a, const TreePoint& b) const {
    if (a.at_vertex != b.at_vertex) return false;
    if (a.at_vertex) return same_tree_vertex(a.cell, a.pos, b.cell, b.pos);
    return a.cell == b.cell && a.k == b.k && mul(inv(a.pos), b.pos).is_identity();
}

TreePoint MarkedSplitting::translated(const TreePoint& p, const NormalWord& g) const {
    TreePoint q = p;
    q.pos = mul(g, p.pos);
    return q;
}

TreePoint MarkedSplitting::edgelet_endpoint(const TreeEdgelet& el, bool head) const {
    const QEdge& e = edges.at(el.edge);
    // edgelet idx spans boundaries [idx, idx+1]; forward runs idx -> idx+1
    int k = head == el.fwd ? el.idx + 1 : el.idx;
    if (k == 0) return TreePoint::vertex(e.from, el.pos);
    if (k == e.edgelets) return TreePoint::vertex(e.to, mul(el.pos, e.label));
    return TreePoint::boundary(el.edge, k, el.pos);
}

namespace {

// expand a reduced vertex-level path into oriented tree edgelets, starting at
// frame offset `off`
std::vector<TreeEdgelet> expand_path(const MarkedSplitting& s, const GogPath& p, NormalWord off) {
    std::vector<TreeEdgelet> out;
    for (const GogItem& it : p.items) {
        if (!it.is_step) {
            off = mul(off, it.h);
            continue;
        }
        const QEdge& e = s.edges[it.edge];
        if (it.dir > 0) {
            for (int i = 0; i < e.edgelets; ++i) out.push_back(TreeEdgelet{it.edge, i, true, off});
            off = mul(off, e.label);
        } else {
            NormalWord lift = mul(off, inv(e.label));
            for (int i = e.edgelets - 1; i >= 0; --i)
                out.push_back(TreeEdgelet{it.edge, i, false, lift});
            off = lift;
        }
    }
    return out;
}

} // namespace

std::vector<TreeEdgelet> MarkedSplitting::tree_edgelet_path(const TreePoint& a,
                                                            const TreePoint& b) const {
    auto anchor = [&](const TreePoint& p) -> std::pair<int, NormalWord> {
        if (p.at_vertex) return {p.cell, p.pos};
        return {edges[p.cell].from, p.pos};
    };
    auto [av, apos] = anchor(a);
    auto [bv, bpos] = anchor(b);
    GogPath vp = reduced(concat(inverse_path(locate(av, apos)), locate(bv, bpos)));
    std::vector<TreeEdgelet> els = expand_path(*this, vp, apos);
    // start fix for an interior point a = boundary k of (a.cell, a.pos)
    if (!a.at_vertex) {
        bool absorbed = static_cast<int>(els.size()) >= a.k;
        for (int i = 0; absorbed && i < a.k; ++i) {
            const TreeEdgelet& el = els[i];
            if (!(el.edge == a.cell && el.fwd && el.idx == i &&
                  mul(inv(el.pos), a.pos).is_identity()))
                absorbed = false;
        }
        if (absorbed) {
            els.erase(els.begin(), els.begin() + a.k);
        } else {
            std::vector<TreeEdgelet> pre;
            for (int i = a.k - 1; i >= 0; --i) pre.push_back(TreeEdgelet{a.cell, i, false, a.pos});
            els.insert(els.begin(), pre.begin(), pre.end());
        }
    }
    if (!b.at_vertex) {
        int n = static_cast<int>(els.size());
        bool absorbed = n >= b.k;
        for (int i = 0; absorbed && i < b.k; ++i) {
            const TreeEdgelet& el = els[n - 1 - i];
            if (!(el.edge == b.cell && !el.fwd && el.idx == i &&
                  mul(inv(el.pos), b.pos).is_identity()))
                absorbed = false;
        }
        if (absorbed) {
            els.erase(els.end() - b.k, els.end());
        } else {
            for (int i = 0; i < b.k; ++i) els.push_back(TreeEdgelet{b.cell, i, true, b.pos});
        }
    }
    // drop any remaining immediate backtracks at the seams
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i + 1 < els.size(); ++i) {
            if (els[i].edge == els[i + 1].edge && els[i].idx == els[i + 1].idx &&
                els[i].fwd != els[i + 1].fwd && mul(inv(els[i].pos), els[i + 1].pos).is_identity()) {
                els.erase(els.begin() + i, els.begin() + i + 2);
                changed = true;
                break;
            }
        }
    }
    return els;
}

// ---------------------------------------------------------------------------
// validation

namespace {

std::vector<NormalWord> marking_generators(const MarkedSplitting& s) {
    std::vector<NormalWord> gens;
    for (const auto& v : s.verts)
        if (v.group) gens.insert(gens.end(), v.group->gens.begin(), v.group->gens.end());
    for (const auto& e : s.edges)
        if (!e.in_tree) gens.push_back(e.label);
    return gens;
}

void structural_issues(const MarkedSplitting& s, std::vector<std::string>& out) {
    if (s.edges.empty()) out.push_back("splitting has no edges (tree is a point)");
    for (const auto& e : s.edges) {
        if (e.from < 0 || e.from >= static_cast<int>(s.verts.size()) || e.to < 0 ||
            e.to >= static_cast<int>(s.verts.size()))
            out.push_back("edge endpoint out of range");
        if (e.edgelets < 1) out.push_back("edge with no edgelets");
        if (e.in_tree && !e.label.is_identity()) out.push_back("tree edge with nontrivial label");
    }
    // connectivity + spanning tree
    int V = static_cast<int>(s.verts.size());
    std::vector<bool> seen(V, false);
    std::deque<int> q{s.base};
    seen[s.base] = true;
    int cnt = 1, treecnt = 0;
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (const auto& e : s.edges) {
            if (!e.in_tree) continue;
            int o = -1;
            if (e.from == u) o = e.to;
            else if (e.to == u) o = e.from;
            if (o >= 0 && !seen[o]) { seen[o] = true; ++cnt; q.push_back(o); }
        }
    }
    for (const auto& e : s.edges) treecnt += e.in_tree ? 1 : 0;
    if (cnt != V) out.push_back("spanning tree does not reach every vertex");
    if (treecnt != V - 1) out.push_back("wrong number of tree edges");
    for (int v = 0; v < V; ++v) {
        if (s.verts[v].group && s.verts[v].group->is_trivial())
            out.push_back("trivial subgroup stored as a vertex group");
        if (!s.verts[v].group && s.degree(v) <= 1)
            out.push_back("valence-" + std::to_string(s.degree(v)) + " vertex with trivial group (not minimal)");
    }
}

void marking_issues(const MarkedSplitting& s, std::vector<std::string>& out) {
    SubgroupGraph whole = SubgroupGraph::fold_words(s.ctx, marking_generators(s));
    if (!whole.is_whole_group()) {
        out.push_back("marking does not fold to the standard rose");
        return;
    }
    std::map<int, int> atom_seen;
    int fr_sum = 0;
    for (const auto& v : s.verts) {
        if (!v.group) continue;
        KuroshData k = v.group->graph.kurosh();
        fr_sum += abstract_free_rank(*v.group);
        for (const auto& p : k.pieces) {
            if (s.ctx->atom_is_free(p.atom)) continue;
            if (!p.stab.is_full(s.ctx->atoms[p.atom]))
                out.push_back("vertex group meets an atom in a proper subgroup");
            if (++atom_seen[p.atom] > 1) out.push_back("atom class carried by two vertex groups");
        }
    }
    for (int ai = 0; ai < s.ctx->n_atoms(); ++ai)
        if (!s.ctx->atom_is_free(ai) && !atom_seen.count(ai))
            out.push_back("non-free atom not elliptic in the splitting");
    int betti = static_cast<int>(s.edges.size()) - static_cast<int>(s.verts.size()) + 1;
    if (fr_sum + betti != s.ctx->grushko_free_rank())
        out.push_back("free rank bookkeeping fails (marking not injective)");
}

} // namespace

std::vector<std::string> MarkedSplitting::validate_report() const {
    std::vector<std::string> out;
    structural_issues(*this, out);
    if (out.empty()) marking_issues(*this, out);
    if (!out.empty()) return out;
    // seed validity
    try {
        for (int i = 0; i < ctx->free_rank; ++i) {
            auto [v, off] = walk(letter_seeds.at(i), true);
            if (v != base || !(off == gen_free(ctx, i))) out.push_back("bad seed for free letter");
        }
        for (int ai = 0; ai < ctx->n_atoms(); ++ai) {
            const AtomSpec& a = ctx->atoms[ai];
            const auto& seeds = atom_seeds.at(ai);
            std::vector<NormalWord> want;
            switch (a.kind) {
                case AtomKind::FiniteCyclic:
                case AtomKind::InfiniteCyclic: want = {gen_atom(ctx, ai, AtomEl{1, {}})}; break;
                case AtomKind::Opaque:
                    for (int e = 1; e < a.table.order(); ++e) want.push_back(gen_atom(ctx, ai, AtomEl{e, {}}));
                    break;
                case AtomKind::FreeOfRank:
                    for (int j = 1; j <= a.rank; ++j) want.push_back(gen_atom(ctx, ai, AtomEl{0, {j}}));
                    break;
            }
            if (seeds.size() != want.size()) {
                out.push_back("wrong atom seed count");
                continue;
            }
            for (size_t j = 0; j < want.size(); ++j) {
                auto [v, off] = walk(seeds[j], true);
                if (v != base || !(off == want[j])) out.push_back("bad atom seed");
            }
        }
    } catch (const Error& err) {
        out.push_back(std::string("seed walk failed: ") + err.what());
    }
    return out;
}

void MarkedSplitting::check(bool full) const {
    std::vector<std::string> out;
    structural_issues(*this, out);
    if (out.empty() && full) marking_issues(*this, out);
    if (!out.empty()) throw Error("invalid splitting: " + out.front());
    if (full) {
        auto rep = validate_report();
        if (!rep.empty()) throw Error("invalid splitting: " + rep.front());
    }
}

void MarkedSplitting::normalize_marking() {
    int V = static_cast<int>(verts.size());
    std::vector<NormalWord> g(V, identity(ctx));
    std::vector<bool> seen(V, false);
    std::vector<bool> treeflag(edges.size(), false);
    seen[base] = true;
    std::deque<int> q{base};
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (size_t ei = 0; ei < edges.size(); ++ei) {
            const QEdge& e = edges[ei];
            if (e.from == u && !seen[e.to]) {
                seen[e.to] = true;
                treeflag[ei] = true;
                g[e.to] = mul(g[u], e.label);
                q.push_back(e.to);
            } else if (e.to == u && !seen[e.from]) {
                seen[e.from] = true;
                treeflag[ei] = true;
                g[e.from] = mul(g[u], inv(e.label));
                q.push_back(e.from);
            }
        }
    }
    for (int v = 0; v < V; ++v)
        if (!seen[v]) throw Error("normalize_marking: disconnected graph");
    for (size_t ei = 0; ei < edges.size(); ++ei) {
        QEdge& e = edges[ei];
        e.label = mul(mul(g[e.from], e.label), inv(g[e.to]));
        e.in_tree = treeflag[ei];
    }
    // new canonical lift of v is g_v * (old lift); groups and seed elements
    // conjugate accordingly
    for (int v = 0; v < V; ++v)
        if (verts[v].group) verts[v].group = verts[v].group->conjugated(g[v]);
    auto fix = [&](GogPath& p) {
        int v = p.start;
        for (GogItem& it : p.items) {
            if (it.is_step) {
                v = it.dir > 0 ? edges[it.edge].to : edges[it.edge].from;
            } else {
                it.h = conj(g[v], it.h);
            }
        }
        p = reduced(std::move(p));
    };
    for (auto& p : letter_seeds) fix(p);
    for (auto& v : atom_seeds)
        for (auto& p : v) fix(p);
}

FreeFactorSystem MarkedSplitting::vertex_system() const {
    std::vector<Subgroup> comps;
    for (const auto& v : verts)
        if (v.group) comps.push_back(*v.group);
    std::vector<NormalWord> basis;
    for (const auto& e : edges)
        if (!e.in_tree) basis.push_back(e.label);
    return FreeFactorSystem::make(ctx, std::move(comps), std::move(basis));
}

NaturalCensus natural_census(const MarkedSplitting& s) {
    NaturalCensus c;
    int V = static_cast<int>(s.verts.size());
    c.vertex_natural.assign(V, false);
    for (int v = 0; v < V; ++v)
        c.vertex_natural[v] = s.verts[v].group.has_value() || s.degree(v) != 2;
    for (int v = 0; v < V; ++v)
        if (c.vertex_natural[v]) ++c.natural_vertices;

    std::vector<bool> used(s.edges.size(), false);
    auto walk_chain = [&](int e0, int d0) {
        std::vector<std::pair<int, int>> chain;
        int e = e0, d = d0;
        while (true) {
            used[e] = true;
            chain.push_back({e, d});
            int head = d > 0 ? s.edges[e].to : s.edges[e].from;
            if (c.vertex_natural[head]) break;
            // continue through the unique other end at a subdivision vertex
            bool found = false;
            for (auto [e2, d2] : s.ends_at(head)) {
                if (e2 == e && d2 == (d > 0 ? -1 : +1)) continue; // came in this way
                // at a degree-2 vertex the other end is unique; for loops at
                // subdivision vertices both ends belong to the same edge
                if (used[e2] && e2 != e) continue;
                if (e2 == e && chain.size() > 1) continue;
                e = e2;
                d = d2;
                found = true;
                break;
            }
            if (!found) break;
        }
        return chain;
    };
    for (int v = 0; v < V; ++v) {
        if (!c.vertex_natural[v]) continue;
        for (auto [e, d] : s.ends_at(v)) {
            if (used[e]) continue;
            auto chain = walk_chain(e, d);
            int n = 0;
            for (auto [ce, cd] : chain) n += s.edges[ce].edgelets;
            c.chains.push_back(std::move(chain));
            c.chain_edgelets.push_back(n);
        }
    }
    // subdivision-only cycles (degenerate; kept for robustness)
    for (size_t e = 0; e < s.edges.size(); ++e) {
        if (used[e]) continue;
        auto chain = walk_chain(static_cast<int>(e), +1);
        int n = 0;
        for (auto [ce, cd] : chain) n += s.edges[ce].edgelets;
        c.chains.push_back(std::move(chain));
        c.chain_edgelets.push_back(n);
    }
    c.natural_edges = static_cast<int>(c.chains.size());
    return c;
}

int dfs_depth(const FreeFactorSystem& a) { return 3 * a.corank() + 2 * a.size() - 4; }

bool is_generic(const MarkedSplitting& t, const FreeFactorSystem& a) {
    if (!ffs_equal(t.vertex_system(), a)) return false;
    NaturalCensus c = natural_census(t);
    std::vector<int> natdeg(t.verts.size(), 0);
    for (const auto& chain : c.chains) {
        auto [e0, d0] = chain.front();
        auto [e1, d1] = chain.back();
        natdeg[d0 > 0 ? t.edges[e0].from : t.edges[e0].to]++;
        natdeg[d1 > 0 ? t.edges[e1].to : t.edges[e1].from]++;
    }
    for (size_t v = 0; v < t.verts.size(); ++v) {
        if (!c.vertex_natural[v]) continue;
        if (t.verts[v].group) {
            if (natdeg[v] != 1) return false;
        } else {
            if (natdeg[v] != 3) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// rose-with-lollipops construction

MarkedSplitting splitting_for(const FreeFactorSystem& a) {
    if (a.is_improper()) throw Error("splitting_for: system is improper");
    const ContextPtr& ctx = a.ctx;
    MarkedSplitting s;
    s.ctx = ctx;
    s.base = 0;
    s.verts.push_back(QVertex{});
    std::vector<GogPath> gen_paths; // per marking generator
    std::vector<NormalWord> gen_vals;
    for (const auto& w : a.cofactor_basis) {
        int e = static_cast<int>(s.edges.size());
        s.edges.push_back(QEdge{0, 0, w, false, 1});
        GogPath p;
        p.start = 0;
        p.items = {GogItem::step(e, +1)};
        gen_paths.push_back(p);
        gen_vals.push_back(w);
    }
    for (const auto& comp : a.components) {
        int leaf = static_cast<int>(s.verts.size());
        s.verts.push_back(QVertex{comp});
        int e = static_cast<int>(s.edges.size());
        s.edges.push_back(QEdge{0, leaf, identity(ctx), true, 1});
        for (const auto& h : comp.gens) {
            GogPath p;
            p.start = 0;
            p.items = {GogItem::step(e, +1), GogItem::elem(h), GogItem::step(e, -1)};
            gen_paths.push_back(p);
            gen_vals.push_back(h);
        }
    }
    if (s.edges.empty()) throw Error("splitting_for: system yields a point");

    auto express_path = [&](const NormalWord& target) {
        GogPath p;
        p.start = 0;
        for (auto [gi, sign] : express_over(ctx, gen_vals, target)) {
            GogPath q = sign > 0 ? gen_paths[gi] : s.inverse_path(gen_paths[gi]);
            p.items.insert(p.items.end(), q.items.begin(), q.items.end());
        }
        return s.reduced(std::move(p));
    };
    for (int i = 0; i < ctx->free_rank; ++i) s.letter_seeds.push_back(express_path(gen_free(ctx, i)));
    for (int ai = 0; ai < ctx->n_atoms(); ++ai) {
        const AtomSpec& at = ctx->atoms[ai];
        std::vector<GogPath> seeds;
        switch (at.kind) {
            case AtomKind::FiniteCyclic:
            case AtomKind::InfiniteCyclic:
                seeds.push_back(express_path(gen_atom(ctx, ai, AtomEl{1, {}})));
                break;
            case AtomKind::Opaque:
                for (int e = 1; e < at.table.order(); ++e)
                    seeds.push_back(express_path(gen_atom(ctx, ai, AtomEl{e, {}})));
                break;
            case AtomKind::FreeOfRank:
                for (int j = 1; j <= at.rank; ++j)
                    seeds.push_back(express_path(gen_atom(ctx, ai, AtomEl{0, {j}})));
                break;
        }
        s.atom_seeds.push_back(std::move(seeds));
    }
    s.check();
    return s;
}

std::vector<std::pair<int, int>> express_over(const ContextPtr& ctx,
                                              const std::vector<NormalWord>& gens,
                                              const NormalWord& target, int max_factors) {
    if (target.is_identity()) return {};
    int maxgen = 1;
    for (const auto& g : gens) maxgen = std::max(maxgen, g.length());
    int cap = target.length() + 2 * maxgen + 2;
    struct Node {
        NormalWord val;
        std::vector<std::pair<int, int>> expr;
    };
    std::map<std::vector<Letter>, int> depth_seen;
    std::deque<Node> q;
    q.push_back({identity(ctx), {}});
    depth_seen[{}] = 0;
    size_t steps = 0;
    while (!q.empty()) {
        Node n = std::move(q.front());
        q.pop_front();
        if (static_cast<int>(n.expr.size()) >= max_factors) continue;
        for (size_t gi = 0; gi < gens.size(); ++gi) {
            for (int sign : {+1, -1}) {
                if (++steps > 400000) throw Error("express_over: search bound exceeded");
                NormalWord v = mul(n.val, sign > 0 ? gens[gi] : inv(gens[gi]));
                if (v.length() > cap) continue;
                auto expr = n.expr;
                expr.push_back({static_cast<int>(gi), sign});
                if (v == target) return expr;
                auto [it, fresh] = depth_seen.try_emplace(v.letters, static_cast<int>(expr.size()));
                if (!fresh) continue;
                q.push_back({std::move(v), std::move(expr)});
            }
        }
    }
    throw Error("express_over: no bounded expression found for " + to_string(target));
}

// ---------------------------------------------------------------------------
// quotient surgeries

WorkingView::WorkingView(const MarkedSplitting& sp) : s(&sp) {
    nW = static_cast<int>(sp.verts.size());
    for (const auto& e : sp.edges) {
        bnd_base.push_back(nW);
        nW += e.edgelets - 1;
    }
}
int WorkingView::of_boundary(int e, int k) const { return bnd_base[e] + k - 1; }
int WorkingView::src(int e, int i) const { return i == 0 ? s->edges[e].from : of_boundary(e, i); }
int WorkingView::tgt(int e, int i) const {
    return i == s->edges[e].edgelets - 1 ? s->edges[e].to : of_boundary(e, i + 1);
}
NormalWord WorkingView::lab(int e, int i) const {
    return i == s->edges[e].edgelets - 1 ? s->edges[e].label : identity(s->ctx);
}

std::set<QEdgelet> all_edgelets(const MarkedSplitting& t) {
    std::set<QEdgelet> out;
    for (size_t e = 0; e < t.edges.size(); ++e)
        for (int i = 0; i < t.edges[e].edgelets; ++i) out.insert({static_cast<int>(e), i});
    return out;
}

Surgery assemble(const WorkSpec& w, std::set<QEdgelet> sigma) {
    const MarkedSplitting& t = *w.src;
    const ContextPtr& ctx = t.ctx;
    int nNew = w.n_class;

    std::vector<int> deg(nNew, 0);
    for (const auto& ke : w.kept) { deg[ke.csrc]++; deg[ke.ctgt]++; }
    std::vector<bool> interior(nNew, false);
    for (int c = 0; c < nNew; ++c)
        interior[c] = !w.cgroup[c].has_value() && deg[c] == 2 && c != w.cbase;

    Surgery res;
    res.sigma = std::move(sigma);
    MarkedSplitting& out = res.result;
    out.ctx = ctx;
    std::vector<int> final_id(nNew, -1);

    // promote one vertex per subdivision-only cycle
    {
        std::vector<std::vector<int>> at(nNew);
        for (size_t k = 0; k < w.kept.size(); ++k) {
            at[w.kept[k].csrc].push_back(static_cast<int>(k));
            at[w.kept[k].ctgt].push_back(static_cast<int>(k));
        }
        std::vector<bool> vis(nNew, false);
        for (int v0 = 0; v0 < nNew; ++v0) {
            if (!interior[v0] || vis[v0]) continue;
            std::deque<int> q{v0};
            vis[v0] = true;
            bool anchored = false;
            while (!q.empty()) {
                int u = q.front();
                q.pop_front();
                for (int k : at[u])
                    for (int o : {w.kept[k].csrc, w.kept[k].ctgt}) {
                        if (!interior[o]) anchored = true;
                        else if (!vis[o]) { vis[o] = true; q.push_back(o); }
                    }
            }
            if (!anchored) interior[v0] = false;
        }
    }
    for (int c = 0; c < nNew; ++c) {
        if (interior[c]) continue;
        final_id[c] = static_cast<int>(out.verts.size());
        out.verts.push_back(QVertex{w.cgroup[c]});
    }
    out.base = final_id[w.cbase];

    res.edgelet_rec.assign(t.edges.size(), {});
    for (size_t e = 0; e < t.edges.size(); ++e)
        res.edgelet_rec[e].assign(t.edges[e].edgelets, Surgery::EdgeletRec{});

    std::vector<std::vector<std::pair<int, int>>> at(nNew);
    for (size_t k = 0; k < w.kept.size(); ++k) {
        at[w.kept[k].csrc].push_back({static_cast<int>(k), +1});
        at[w.kept[k].ctgt].push_back({static_cast<int>(k), -1});
    }
    std::vector<bool> used(w.kept.size(), false);
    // class lift position data: anchors are vertices, interiors become
    // boundary points of the final edges
    std::vector<TreePoint> cpoint(nNew, TreePoint::vertex(0, identity(ctx)));
    for (int c = 0; c < nNew; ++c)
        if (!interior[c]) cpoint[c] = TreePoint::vertex(final_id[c], identity(ctx));

    for (int c0 = 0; c0 < nNew; ++c0) {
        if (interior[c0] || final_id[c0] < 0) continue;
        for (auto [k0, d0] : at[c0]) {
            if (used[k0]) continue;
            std::vector<std::pair<int, int>> chain;
            int k = k0, d = d0;
            while (true) {
                used[k] = true;
                chain.push_back({k, d});
                int head = d > 0 ? w.kept[k].ctgt : w.kept[k].csrc;
                if (!interior[head]) break;
                bool found = false;
                for (auto [k2, d2] : at[head]) {
                    if (k2 == k && d2 == -d) continue;
                    if (used[k2] && !(k2 == k && chain.size() == 1)) continue;
                    k = k2;
                    d = d2;
                    found = true;
                    break;
                }
                if (!found) break;
            }
            int E = static_cast<int>(out.edges.size());
            int last = chain.back().second > 0 ? w.kept[chain.back().first].ctgt
                                               : w.kept[chain.back().first].csrc;
            NormalWord prefix = identity(ctx);
            for (size_t j = 0; j < chain.size(); ++j) {
                auto [kk, dd] = chain[j];
                NormalWord l = dd > 0 ? w.kept[kk].lab : inv(w.kept[kk].lab);
                NormalWord next_prefix = mul(prefix, l);
                for (const auto& pv : w.kept[kk].prov) {
                    Surgery::EdgeletRec& r = res.edgelet_rec[pv.el.first][pv.el.second];
                    r.edge = E;
                    r.idx = static_cast<int>(j);
                    r.rev = pv.rev != (dd < 0);
                    r.pos = mul(pv.q, inv(dd > 0 ? prefix : next_prefix));
                }
                int head = dd > 0 ? w.kept[kk].ctgt : w.kept[kk].csrc;
                prefix = next_prefix;
                if (interior[head])
                    cpoint[head] = TreePoint::boundary(E, static_cast<int>(j) + 1, inv(prefix));
            }
            out.edges.push_back(
                QEdge{final_id[c0], final_id[last], prefix, false, static_cast<int>(chain.size())});
        }
    }

    // collapsed edgelet image points
    {
        WorkingView W(t);
        for (auto el : res.sigma) {
            int ws = W.src(el.first, el.second);
            TreePoint p = cpoint[w.wclass[ws]];
            p.pos = mul(w.wpos[ws], p.pos);
            res.edgelet_rec[el.first][el.second].cpt = p;
        }
    }

    // old vertex records
    res.vertex_rec.clear();
    for (size_t v = 0; v < t.verts.size(); ++v) {
        TreePoint p = cpoint[w.wclass[v]];
        p.pos = mul(w.wpos[v], p.pos);
        res.vertex_rec.push_back(p);
    }

    // gauge onto a fresh spanning tree rooted at the base, adjusting records
    {
        MarkedSplitting& o = out;
        int V = static_cast<int>(o.verts.size());
        std::vector<NormalWord> g(V, identity(ctx));
        std::vector<bool> seen(V, false);
        std::vector<bool> treeflag(o.edges.size(), false);
        seen[o.base] = true;
        std::deque<int> q{o.base};
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (size_t ei = 0; ei < o.edges.size(); ++ei) {
                QEdge& e = o.edges[ei];
                if (e.from == u && !seen[e.to]) {
                    seen[e.to] = true;
                    treeflag[ei] = true;
                    g[e.to] = mul(g[u], e.label);
                    q.push_back(e.to);
                } else if (e.to == u && !seen[e.from]) {
                    seen[e.from] = true;
                    treeflag[ei] = true;
                    g[e.from] = mul(g[u], inv(e.label));
                    q.push_back(e.from);
                }
            }
        }
        for (int v = 0; v < V; ++v)
            if (!seen[v]) throw Error("surgery: result disconnected");
        for (size_t ei = 0; ei < o.edges.size(); ++ei) {
            QEdge& e = o.edges[ei];
            e.label = mul(mul(g[e.from], e.label), inv(g[e.to]));
            e.in_tree = treeflag[ei];
        }
        for (int v = 0; v < V; ++v)
            if (o.verts[v].group) o.verts[v].group = o.verts[v].group->conjugated(g[v]);
        for (auto& p : res.vertex_rec) {
            if (p.at_vertex) p.pos = mul(p.pos, inv(g[p.cell]));
            else p.pos = mul(p.pos, inv(g[o.edges[p.cell].from]));
        }
        for (auto& per_edge : res.edgelet_rec)
            for (auto& r : per_edge) {
                if (r.edge >= 0) {
                    r.pos = mul(r.pos, inv(g[o.edges[r.edge].from]));
                } else {
                    TreePoint& p = r.cpt;
                    if (p.at_vertex) p.pos = mul(p.pos, inv(g[p.cell]));
                    else p.pos = mul(p.pos, inv(g[o.edges[p.cell].from]));
                }
            }
    }

    for (int i = 0; i < ctx->free_rank; ++i)
        out.letter_seeds.push_back(res.transport(t, t.letter_seeds.at(i)));
    for (int ai = 0; ai < ctx->n_atoms(); ++ai) {
        std::vector<GogPath> seeds;
        for (const auto& p : t.atom_seeds.at(ai)) seeds.push_back(res.transport(t, p));
        out.atom_seeds.push_back(std::move(seeds));
    }
    out.check();
    return res;
}

Surgery collapse(const MarkedSplitting& t, const std::set<QEdgelet>& sigma_in) {
    for (auto [e, i] : sigma_in)
        if (e < 0 || e >= static_cast<int>(t.edges.size()) || i < 0 || i >= t.edges[e].edgelets)
            throw Error("collapse: edgelet out of range");
    if (sigma_in.size() == all_edgelets(t).size()) throw Error("collapse: forest is the whole graph");

    const ContextPtr& ctx = t.ctx;
    WorkingView W(t);

    std::vector<int> comp(W.nW, -1);
    {
        std::vector<int> uf(W.nW);
        for (int i = 0; i < W.nW; ++i) uf[i] = i;
        std::function<int(int)> find = [&](int x) {
            while (uf[x] != x) x = uf[x] = uf[uf[x]];
            return x;
        };
        for (auto [e, i] : sigma_in) {
            int a = find(W.src(e, i)), b = find(W.tgt(e, i));
            if (a != b) uf[std::max(a, b)] = std::min(a, b);
        }
        std::map<int, int> ids;
        for (auto [e, i] : sigma_in)
            for (int x : {W.src(e, i), W.tgt(e, i)}) {
                int r = find(x);
                if (!ids.count(r)) ids[r] = static_cast<int>(ids.size());
                comp[x] = ids[r];
            }
    }
    int nComp = 0;
    for (int x = 0; x < W.nW; ++x) nComp = std::max(nComp, comp[x] + 1);

    std::vector<NormalWord> gamma(W.nW, identity(ctx));
    std::vector<std::vector<NormalWord>> comp_gens(nComp);
    {
        std::vector<std::vector<std::pair<QEdgelet, int>>> adj(W.nW);
        for (auto el : sigma_in) {
            adj[W.src(el.first, el.second)].push_back({el, +1});
            adj[W.tgt(el.first, el.second)].push_back({el, -1});
        }
        std::vector<bool> seen(W.nW, false);
        std::vector<int> order;
        order.push_back(t.base); // base first: its component is rooted there
        for (int w = 0; w < W.nW; ++w)
            if (w != t.base) order.push_back(w);
        for (int w0 : order) {
            if (comp[w0] < 0 || seen[w0]) continue;
            int c = comp[w0];
            seen[w0] = true;
            std::deque<int> q{w0};
            std::set<std::pair<int, int>> tree_used;
            while (!q.empty()) {
                int u = q.front();
                q.pop_front();
                for (auto& [el, d] : adj[u]) {
                    int o = d > 0 ? W.tgt(el.first, el.second) : W.src(el.first, el.second);
                    if (!seen[o]) {
                        seen[o] = true;
                        tree_used.insert(el);
                        gamma[o] = mul(gamma[u], d > 0 ? W.lab(el.first, el.second)
                                                       : inv(W.lab(el.first, el.second)));
                        q.push_back(o);
                    }
                }
            }
            for (auto el : sigma_in) {
                int su = W.src(el.first, el.second);
                if (comp[su] != c || tree_used.count(el)) continue;
                int tv = W.tgt(el.first, el.second);
                comp_gens[c].push_back(
                    mul(mul(gamma[su], W.lab(el.first, el.second)), inv(gamma[tv])));
            }
            for (size_t v = 0; v < t.verts.size(); ++v) {
                if (comp[v] != c || !t.verts[v].group) continue;
                for (const auto& g : t.verts[v].group->gens)
                    comp_gens[c].push_back(conj(gamma[v], g));
            }
        }
    }

    WorkSpec spec;
    spec.src = &t;
    spec.wclass.assign(W.nW, -1);
    spec.wpos.assign(W.nW, identity(ctx));
    spec.n_class = nComp;
    spec.cgroup.resize(nComp);
    for (int c = 0; c < nComp; ++c) {
        Subgroup g = Subgroup::generated(ctx, comp_gens[c]);
        if (!g.is_trivial()) spec.cgroup[c] = std::move(g);
    }
    for (int x = 0; x < W.nW; ++x) {
        if (comp[x] >= 0) {
            spec.wclass[x] = comp[x];
            spec.wpos[x] = inv(gamma[x]);
        } else {
            spec.wclass[x] = spec.n_class++;
            if (x < static_cast<int>(t.verts.size())) spec.cgroup.push_back(t.verts[x].group);
            else spec.cgroup.push_back(std::nullopt);
        }
    }
    spec.cbase = spec.wclass[t.base];
    for (size_t e = 0; e < t.edges.size(); ++e)
        for (int i = 0; i < t.edges[e].edgelets; ++i) {
            QEdgelet el{static_cast<int>(e), i};
            if (sigma_in.count(el)) continue;
            int a = W.src(el.first, el.second), b = W.tgt(el.first, el.second);
            WorkSpec::KeptEdge ke;
            ke.csrc = spec.wclass[a];
            ke.ctgt = spec.wclass[b];
            ke.lab = mul(mul(inv(spec.wpos[a]), W.lab(el.first, el.second)), spec.wpos[b]);
            ke.prov.push_back(WorkSpec::Prov{el, false, spec.wpos[a]});
            spec.kept.push_back(std::move(ke));
        }
    // only old vertices matter for wclass/wpos records
    return assemble(spec, sigma_in);
}

GogPath Surgery::transport(const MarkedSplitting& src, const GogPath& p) const {
    const MarkedSplitting& dst = result;
    const ContextPtr& ctx = src.ctx;
    auto [endv, endoff] = src.walk(p);
    std::vector<TreeEdgelet> crossings = expand_path(src, p, identity(ctx));
    struct NewCross {
        int edge, idx;
        bool fwd;
        NormalWord pos;
    };
    std::vector<NewCross> nc;
    for (const TreeEdgelet& c : crossings) {
        const EdgeletRec& r = edgelet_rec[c.edge][c.idx];
        if (r.edge < 0) continue;
        // old crossed lift = (c.edge, c.pos); old canonical = (c.edge, 1):
        // image of crossed lift = c.pos * r.pos * (new edge lift)
        bool f = c.fwd != r.rev;
        nc.push_back({r.edge, r.idx, f, mul(c.pos, r.pos)});
    }
    const TreePoint& sp = vertex_rec[p.start];
    if (!sp.at_vertex) throw Error("transport: path starts at an erased vertex");
    GogPath outp;
    outp.start = sp.cell;
    NormalWord r = sp.pos;
    size_t i = 0;
    while (i < nc.size()) {
        const QEdge& E = dst.edges[nc[i].edge];
        int m = E.edgelets;
        bool fwd = nc[i].fwd;
        if (static_cast<int>(nc.size()) - static_cast<int>(i) < m)
            throw Error("transport: image walk does not tile an edge");
        for (int j = 0; j < m; ++j) {
            const NewCross& c = nc[i + j];
            if (c.edge != nc[i].edge || c.fwd != fwd || c.idx != (fwd ? j : m - 1 - j) ||
                !(mul(inv(c.pos), nc[i].pos).is_identity()))
                throw Error("transport: image walk does not tile an edge");
        }
        NormalWord lift = nc[i].pos;
        if (fwd) {
            NormalWord h = mul(inv(r), lift);
            if (!h.is_identity()) outp.items.push_back(GogItem::elem(h));
            outp.items.push_back(GogItem::step(nc[i].edge, +1));
            r = mul(lift, E.label);
        } else {
            NormalWord h = mul(inv(r), mul(lift, E.label));
            if (!h.is_identity()) outp.items.push_back(GogItem::elem(h));
            outp.items.push_back(GogItem::step(nc[i].edge, -1));
            r = lift;
        }
        i += m;
    }
    const TreePoint& ep = vertex_rec[endv];
    if (!ep.at_vertex) throw Error("transport: path ends at an erased vertex");
    NormalWord target = mul(endoff, ep.pos);
    NormalWord h = mul(inv(r), target);
    if (!h.is_identity()) outp.items.push_back(GogItem::elem(h));
    return dst.reduced(std::move(outp));
}


std::vector<std::set<QEdgelet>> natural_subgraphs(const MarkedSplitting& t) {
    NaturalCensus c = natural_census(t);
    int n = static_cast<int>(c.chains.size());
    std::vector<std::set<QEdgelet>> out;
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
        std::set<QEdgelet> s;
        for (int j = 0; j < n; ++j) {
            if (!(mask & (1 << j))) continue;
            for (auto [e, d] : c.chains[j])
                for (int i = 0; i < t.edges[e].edgelets; ++i) s.insert({e, i});
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<NormalWord> subgroup_elements_upto(const Subgroup& h, int len) {
    std::vector<NormalWord> out{identity(h.ctx())};
    if (h.is_trivial() || len <= 0) return out;
    // DFS over reduced loops in the folded graph
    struct Frame {
        int v;
        NormalWord w;
    };
    std::vector<Frame> stack{{h.graph.base, identity(h.ctx())}};
    std::set<std::vector<Letter>> seen;
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        if (f.v == h.graph.base && !f.w.is_identity() && seen.insert(f.w.letters).second)
            out.push_back(f.w);
        if (f.w.length() >= len) continue;
        // free letter moves
        for (int l = 0; l < h.ctx()->free_rank; ++l) {
            auto it = h.graph.fwd[l].find(f.v);
            if (it != h.graph.fwd[l].end()) {
                NormalWord w = mul(f.w, gen_free(h.ctx(), l, 1));
                if (w.length() > f.w.length()) stack.push_back({it->second, w});
            }
            auto it2 = h.graph.bwd[l].find(f.v);
            if (it2 != h.graph.bwd[l].end()) {
                NormalWord w = mul(f.w, gen_free(h.ctx(), l, -1));
                if (w.length() > f.w.length()) stack.push_back({it2->second, w});
            }
        }
        // atom moves
        for (const auto& c : h.graph.comps) {
            auto mit = c.members.find(f.v);
            if (mit == c.members.end()) continue;
            const AtomSpec& a = h.ctx()->atoms[c.atom];
            for (const auto& [w2, p2] : c.members) {
                std::vector<AtomEl> moves;
                AtomEl base_move = atom_mul(a, atom_inv(a, mit->second), p2);
                // compose with stabilizer elements for self-loops and shifts
                std::vector<AtomEl> stab_els{atom_identity()};
                for (const AtomEl& s : c.stab.generator_els(a)) stab_els.push_back(s);
                for (const AtomEl& s : stab_els) {
                    AtomEl mv = atom_mul(a, atom_mul(a, atom_inv(a, mit->second), s), p2);
                    if (!atom_is_identity(a, mv)) moves.push_back(mv);
                }
                for (const AtomEl& mv : moves) {
                    NormalWord w = mul(f.w, gen_atom(h.ctx(), c.atom, mv));
                    if (w.length() > f.w.length()) stack.push_back({w2, w});
                }
            }
        }
    }
    std::sort(out.begin(), out.end(),
              [](const NormalWord& a, const NormalWord& b) { return a.length() < b.length(); });
    return out;
}

// ---------------------------------------------------------------------------
// equivalence

namespace {

MarkedSplitting naturalized(const MarkedSplitting& s) {
    // rebase to a natural vertex if needed, then let the collapse assembly
    // with an empty forest merge subdivision vertices
    MarkedSplitting t = s;
    NaturalCensus c = natural_census(t);
    if (!c.vertex_natural[t.base]) {
        int nb = -1;
        for (size_t v = 0; v < t.verts.size() && nb < 0; ++v)
            if (c.vertex_natural[v]) nb = static_cast<int>(v);
        if (nb >= 0) {
            GogPath tau = t.tau_path(nb);
            // rebased seeds: conjugate loops through the tree path
            auto fix = [&](const GogPath& p) {
                return t.reduced(t.concat(t.concat(t.inverse_path(tau), p), tau));
            };
            std::vector<GogPath> ls;
            for (const auto& p : t.letter_seeds) ls.push_back(fix(p));
            std::vector<std::vector<GogPath>> as;
            for (const auto& v : t.atom_seeds) {
                std::vector<GogPath> vv;
                for (const auto& p : v) vv.push_back(fix(p));
                as.push_back(std::move(vv));
            }
            t.base = nb;
            t.letter_seeds = std::move(ls);
            t.atom_seeds = std::move(as);
            t.normalize_marking();
        }
    }
    return collapse(t, {}).result;
}

} // namespace

std::optional<EquivalenceWitness> equivalent(const MarkedSplitting& s0, const MarkedSplitting& t0,
                                             int twist_len) {
    MarkedSplitting s = naturalized(s0), t = naturalized(t0);
    int V = static_cast<int>(s.verts.size());
    if (V != static_cast<int>(t.verts.size()) || s.edges.size() != t.edges.size()) return std::nullopt;
    if (!ffs_equal(s.vertex_system(), t.vertex_system())) return std::nullopt;

    // candidate vertex bijections compatible with degrees and group classes
    std::vector<std::vector<int>> cand(V);
    for (int v = 0; v < V; ++v)
        for (int w = 0; w < V; ++w) {
            if (s.degree(v) != t.degree(w)) continue;
            bool gv = s.verts[v].group.has_value(), gw = t.verts[w].group.has_value();
            if (gv != gw) continue;
            if (gv && !conjugate_subgroups(*s.verts[v].group, *t.verts[w].group)) continue;
            cand[v].push_back(w);
        }

    std::vector<int> vmap(V, -1), used(V, 0);
    std::vector<int> emap(s.edges.size(), -1);
    std::vector<bool> erev(s.edges.size(), false);


    // Given a graph isomorphism attempt, solve the marking equations. The
    // witness maps the canonical lift of v to u_v * (lift of vmap[v]); each
    // u_v is determined along the spanning tree up to bounded twists in the
    // target vertex groups, then non-tree edges and groups are verified.
    auto twists_at = [&](int tv) {
        std::vector<NormalWord> tw{identity(s.ctx)};
        if (t.verts[tv].group) tw = subgroup_elements_upto(*t.verts[tv].group, twist_len);
        return tw;
    };
    auto solve_marking = [&]() -> std::optional<EquivalenceWitness> {
        std::vector<NormalWord> u(V, identity(s.ctx));
        // base: a single conjugator suffices (free factors are malnormal)
        if (s.verts[s.base].group) {
            auto g = conjugate_into(*s.verts[s.base].group, *t.verts[vmap[s.base]].group);
            if (!g) return std::nullopt;
            u[s.base] = *g;
        }
        std::vector<std::tuple<int, int, int>> treesteps; // (edge, parent, child)
        {
            std::vector<bool> seen(V, false);
            seen[s.base] = true;
            std::deque<int> q{s.base};
            while (!q.empty()) {
                int a = q.front();
                q.pop_front();
                for (size_t ei = 0; ei < s.edges.size(); ++ei) {
                    if (!s.edges[ei].in_tree) continue;
                    const QEdge& e = s.edges[ei];
                    if (e.from == a && !seen[e.to]) {
                        seen[e.to] = true;
                        treesteps.push_back({static_cast<int>(ei), a, e.to});
                        q.push_back(e.to);
                    } else if (e.to == a && !seen[e.from]) {
                        seen[e.from] = true;
                        treesteps.push_back({static_cast<int>(ei), a, e.from});
                        q.push_back(e.from);
                    }
                }
            }
        }
        // edge condition: exists h in H'_{phi(e.from)} with
        //   (u_from h lam^eps)^-1 gamma_e u_to in H'_{phi(e.to)},
        // where lam^eps = label(f) or its inverse when e maps to f reversed
        auto edge_ok = [&](size_t ei) {
            const QEdge& e = s.edges[ei];
            NormalWord lam = t.edges[emap[ei]].label;
            if (erev[ei]) lam = inv(lam);
            for (const auto& h : twists_at(vmap[e.from])) {
                NormalWord x = mul(mul(u[e.from], h), lam);
                NormalWord d = mul(inv(x), mul(e.label, u[e.to]));
                if (t.group_contains(vmap[e.to], d)) return true;
            }
            return false;
        };
        std::function<std::optional<EquivalenceWitness>(size_t)> go =
            [&](size_t step) -> std::optional<EquivalenceWitness> {
            if (step == treesteps.size()) {
                for (size_t ei = 0; ei < s.edges.size(); ++ei)
                    if (!edge_ok(ei)) return std::nullopt;
                for (int v = 0; v < V; ++v) {
                    if (!s.verts[v].group) continue;
                    const Subgroup& H = *s.verts[v].group;
                    const Subgroup& K = *t.verts[vmap[v]].group;
                    for (const auto& g : H.gens)
                        if (!K.contains(conj(u[v], g))) return std::nullopt;
                    for (const auto& g : K.gens)
                        if (!H.contains(conj(inv(u[v]), g))) return std::nullopt;
                }
                EquivalenceWitness w;
                w.vertex_map = vmap;
                w.vertex_pos = u;
                w.edge_map = emap;
                w.edge_reversed.assign(erev.begin(), erev.end());
                return w;
            }
            auto [ei, par, child] = treesteps[step];
            const QEdge& e = s.edges[ei];
            NormalWord lam = t.edges[emap[ei]].label;
            if (erev[ei]) lam = inv(lam);
            bool down = e.from == par;
            for (const auto& h : twists_at(vmap[par])) {
                if (down) u[child] = mul(mul(u[par], h), lam);
                else u[child] = mul(mul(u[par], inv(h)), inv(lam));
                auto got = go(step + 1);
                if (got) return got;
            }
            return std::nullopt;
        };
        return go(0);
    };

    std::function<std::optional<EquivalenceWitness>(int)> match_edges =
        [&](int ei) -> std::optional<EquivalenceWitness> {
        if (ei == static_cast<int>(s.edges.size())) return solve_marking();
        const QEdge& e = s.edges[ei];
        std::vector<bool> eused(t.edges.size(), false);
        for (int j = 0; j < ei; ++j) eused[emap[j]] = true;
        for (size_t fj = 0; fj < t.edges.size(); ++fj) {
            if (eused[fj]) continue;
            const QEdge& f = t.edges[fj];
            if (f.from == vmap[e.from] && f.to == vmap[e.to]) {
                emap[ei] = static_cast<int>(fj);
                erev[ei] = false;
                auto r = match_edges(ei + 1);
                if (r) return r;
            }
            if (f.to == vmap[e.from] && f.from == vmap[e.to]) {
                emap[ei] = static_cast<int>(fj);
                erev[ei] = true;
                auto r = match_edges(ei + 1);
                if (r) return r;
            }
        }
        emap[ei] = -1;
        return std::nullopt;
    };

    std::function<std::optional<EquivalenceWitness>(int)> assign =
        [&](int v) -> std::optional<EquivalenceWitness> {
        if (v == V) return match_edges(0);
        for (int w : cand[v]) {
            if (used[w]) continue;
            used[w] = 1;
            vmap[v] = w;
            auto got = assign(v + 1);
            if (got) return got;
            used[w] = 0;
        }
        vmap[v] = -1;
        return std::nullopt;
    };
    return assign(0);
}

// ---------------------------------------------------------------------------

void materialize_boundary(MarkedSplitting& s, int edge, int idx) {
    QEdge& e = s.edges[edge];
    if (idx <= 0 || idx >= e.edgelets) throw Error("materialize_boundary: bad index");
    int nv = static_cast<int>(s.verts.size());
    s.verts.push_back(QVertex{});
    int e2 = static_cast<int>(s.edges.size());
    s.edges.push_back(QEdge{nv, e.to, e.label, false, e.edgelets - idx});
    // careful: e reference may dangle after push_back
    QEdge& e1 = s.edges[edge];
    e1.to = nv;
    e1.label = identity(s.ctx);
    e1.edgelets = idx;
    bool was_tree = e1.in_tree;
    e1.in_tree = true;
    s.edges[e2].in_tree = was_tree;
    // seeds: rewrite Step(edge,±) -> two steps
    auto fix = [&](GogPath& p) {
        std::vector<GogItem> items;
        for (const GogItem& it : p.items) {
            if (it.is_step && it.edge == edge) {
                if (it.dir > 0) {
                    items.push_back(GogItem::step(edge, +1));
                    items.push_back(GogItem::step(e2, +1));
                } else {
                    items.push_back(GogItem::step(e2, -1));
                    items.push_back(GogItem::step(edge, -1));
                }
            } else {
                items.push_back(it);
            }
        }
        p.items = std::move(items);
    };
    for (auto& p : s.letter_seeds) fix(p);
    for (auto& v : s.atom_seeds)
        for (auto& p : v) fix(p);
}

void subdivide_edge(MarkedSplitting& s, int edge, int factor) {
    if (factor < 1) throw Error("subdivide_edge: bad factor");
    s.edges[edge].edgelets *= factor;
}

} // namespace fsc
