#include "bigdiagram.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <sstream>

namespace fsc {

// ---------------------------------------------------------------------------
// simplicial isomorphism (exact cell matching)

std::optional<SplittingMap> simplicial_iso(const SplittingPtr& ap, const SplittingPtr& bp,
                                           int twist_len) {
    const MarkedSplitting &s = *ap, &t = *bp;
    int V = static_cast<int>(s.verts.size());
    if (V != static_cast<int>(t.verts.size()) || s.edges.size() != t.edges.size())
        return std::nullopt;

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
    std::vector<NormalWord> u(V, identity(s.ctx));

    auto twists_at = [&](int tv) {
        std::vector<NormalWord> tw{identity(s.ctx)};
        if (t.verts[tv].group) tw = subgroup_elements_upto(*t.verts[tv].group, twist_len);
        return tw;
    };

    std::function<std::optional<SplittingMap>()> solve = [&]() -> std::optional<SplittingMap> {
        std::vector<std::tuple<int, int, int>> steps;
        {
            std::vector<bool> seen(V, false);
            seen[s.base] = true;
            std::deque<int> q{s.base};
            while (!q.empty()) {
                int a2 = q.front();
                q.pop_front();
                for (size_t ei = 0; ei < s.edges.size(); ++ei) {
                    if (!s.edges[ei].in_tree) continue;
                    const QEdge& e = s.edges[ei];
                    if (e.from == a2 && !seen[e.to]) {
                        seen[e.to] = true;
                        steps.push_back({static_cast<int>(ei), a2, e.to});
                        q.push_back(e.to);
                    } else if (e.to == a2 && !seen[e.from]) {
                        seen[e.from] = true;
                        steps.push_back({static_cast<int>(ei), a2, e.from});
                        q.push_back(e.from);
                    }
                }
            }
        }
        // build the candidate map for given u and verify it outright
        auto attempt = [&]() -> std::optional<SplittingMap> {
            SplittingMap f;
            f.src = ap;
            f.tgt = bp;
            for (int v = 0; v < V; ++v) f.vimg.push_back(TreePoint::vertex(vmap[v], u[v]));
            f.eimg.assign(s.edges.size(), {});
            for (size_t ei = 0; ei < s.edges.size(); ++ei) {
                const QEdge& e = s.edges[ei];
                const QEdge& fe = t.edges[emap[ei]];
                // find a twist aligning the canonical lift
                bool done = false;
                for (const auto& h : twists_at(vmap[e.from])) {
                    NormalWord base = mul(u[e.from], h);
                    NormalWord headpos = erev[ei] ? mul(base, inv(fe.label)) : mul(base, fe.label);
                    NormalWord need = mul(e.label, u[e.to]);
                    NormalWord d = mul(inv(headpos), need);
                    if (!t.group_contains(erev[ei] ? fe.from : fe.to, d)) continue;
                    std::vector<EdgeletImage> per;
                    for (int i = 0; i < e.edgelets; ++i) {
                        EdgeletImage im;
                        if (!erev[ei]) im.el = TreeEdgelet{emap[ei], i, true, base};
                        else
                            im.el = TreeEdgelet{emap[ei], fe.edgelets - 1 - i, false,
                                                mul(base, inv(fe.label))};
                        per.push_back(im);
                    }
                    f.eimg[ei] = std::move(per);
                    done = true;
                    break;
                }
                if (!done) return std::nullopt;
            }
            try {
                f.verify();
            } catch (const Error&) {
                return std::nullopt;
            }
            return f;
        };
        std::function<std::optional<SplittingMap>(size_t)> go =
            [&](size_t k) -> std::optional<SplittingMap> {
            if (k == steps.size()) {
                for (int v = 0; v < V; ++v) {
                    if (!s.verts[v].group) continue;
                    bool ok = true;
                    for (const auto& g : s.verts[v].group->gens)
                        if (!t.verts[vmap[v]].group->contains(conj(u[v], g))) ok = false;
                    for (const auto& g : t.verts[vmap[v]].group->gens)
                        if (!s.verts[v].group->contains(conj(inv(u[v]), g))) ok = false;
                    if (!ok) return std::nullopt;
                }
                return attempt();
            }
            auto [ei, par, child] = steps[k];
            const QEdge& e = s.edges[ei];
            NormalWord lam = t.edges[emap[ei]].label;
            if (erev[ei]) lam = inv(lam);
            bool down = e.from == par;
            for (const auto& h : twists_at(vmap[par])) {
                if (down) u[child] = mul(mul(u[par], h), lam);
                else u[child] = mul(mul(u[par], inv(h)), inv(lam));
                auto got = go(k + 1);
                if (got) return got;
            }
            return std::nullopt;
        };
        if (s.verts[s.base].group) {
            auto g = conjugate_into(*s.verts[s.base].group, *t.verts[vmap[s.base]].group);
            if (!g) return std::nullopt;
            u[s.base] = *g;
        } else {
            u[s.base] = identity(s.ctx);
        }
        return go(0);
    };

    std::function<std::optional<SplittingMap>(int)> match_edges;
    std::function<std::optional<SplittingMap>(int)> assign =
        [&](int v) -> std::optional<SplittingMap> {
        if (v == V) return match_edges(0);
        for (int w : cand[v]) {
            if (used[w]) continue;
            used[w] = 1;
            vmap[v] = w;
            auto got = assign(v + 1);
            if (got) return got;
            used[w] = 0;
        }
        return std::nullopt;
    };
    match_edges = [&](int ei) -> std::optional<SplittingMap> {
        if (ei == static_cast<int>(s.edges.size())) return solve();
        const QEdge& e = s.edges[ei];
        std::vector<bool> eused(t.edges.size(), false);
        for (int j = 0; j < ei; ++j) eused[emap[j]] = true;
        for (size_t fj = 0; fj < t.edges.size(); ++fj) {
            if (eused[fj]) continue;
            const QEdge& f = t.edges[fj];
            if (f.edgelets != e.edgelets) continue;
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
    return assign(0);
}

SplittingMap invert_iso(const SplittingMap& f) {
    SplittingMap g;
    g.src = f.tgt;
    g.tgt = f.src;
    g.vimg.assign(f.tgt->verts.size(), TreePoint::vertex(0, identity(f.src->ctx)));
    g.eimg.assign(f.tgt->edges.size(), {});
    std::vector<bool> have(f.tgt->verts.size(), false);
    for (size_t v = 0; v < f.vimg.size(); ++v) {
        const TreePoint& p = f.vimg[v];
        if (!p.at_vertex) throw Error("invert_iso: not an isomorphism");
        if (!have[p.cell]) {
            g.vimg[p.cell] = TreePoint::vertex(static_cast<int>(v), inv(p.pos));
            have[p.cell] = true;
        }
    }
    for (size_t e = 0; e < f.eimg.size(); ++e) {
        for (size_t i = 0; i < f.eimg[e].size(); ++i) {
            const EdgeletImage& im = f.eimg[e][i];
            if (im.constant) throw Error("invert_iso: not an isomorphism");
            EdgeletImage back;
            back.el = TreeEdgelet{static_cast<int>(e), static_cast<int>(i), im.el.fwd,
                                  inv(im.el.pos)};
            // position: image lift of the target canonical under the inverse
            if (g.eimg[im.el.edge].empty())
                g.eimg[im.el.edge].assign(f.tgt->edges[im.el.edge].edgelets, EdgeletImage{});
            g.eimg[im.el.edge][im.el.idx] = back;
        }
    }
    for (size_t e = 0; e < g.eimg.size(); ++e)
        if (g.eimg[e].empty()) throw Error("invert_iso: target edge not covered");
    g.verify();
    return g;
}

// ---------------------------------------------------------------------------
// connect

Connection connect(const SplittingPtr& s, const SplittingPtr& t, const FreeFactorSystem& a) {
    MakeFoldableResult mf = make_foldable(s, t, a);
    Connection c;
    c.sprime = mf.sprime;
    c.sdouble = mf.sdouble;
    c.folds = factor_into_folds(mf.f);
    c.prefix_moves = (mf.sprime.get() != s.get() ? 1 : 0) +
                     (mf.sdouble.get() != mf.sprime.get() ? 1 : 0);
    return c;
}

// ---------------------------------------------------------------------------
// projection diagrams

namespace {

MapSequence slice_seq(const MapSequence& q, int lo, int hi) {
    MapSequence r;
    r.terms.assign(q.terms.begin() + lo, q.terms.begin() + hi + 1);
    r.maps.assign(q.maps.begin() + lo, q.maps.begin() + hi);
    return r;
}

CombingRectangle slice_rect(const CombingRectangle& r, int lo, int hi) {
    CombingRectangle s;
    s.top = slice_seq(r.top, lo, hi);
    s.bottom = slice_seq(r.bottom, lo, hi);
    s.collapses.assign(r.collapses.begin() + lo, r.collapses.begin() + hi + 1);
    s.forests.assign(r.forests.begin() + lo, r.forests.begin() + hi + 1);
    return s;
}

CombingRectangle trivial_rect(const MapSequence& row) {
    CombingRectangle r;
    r.top = row;
    r.bottom = row;
    for (const auto& term : row.terms) {
        r.collapses.push_back(identity_map(term));
        r.forests.push_back({});
    }
    return r;
}

std::set<QEdgelet> constant_set(const SplittingMap& f) {
    std::set<QEdgelet> s;
    for (size_t e = 0; e < f.eimg.size(); ++e)
        for (size_t i = 0; i < f.eimg[e].size(); ++i)
            if (f.eimg[e][i].constant) s.insert({static_cast<int>(e), static_cast<int>(i)});
    return s;
}

} // namespace

ProjectionDiagram build_projection_diagram(const SplittingPtr& t, const MapSequence& path,
                                           const FreeFactorSystem& a) {
    int K = path.length();
    for (int I = K; I >= 0; --I) {
        std::vector<std::set<QEdgelet>> sigmas{{}};
        for (const auto& sg : natural_subgraphs(*t)) sigmas.push_back(sg);
        for (const auto& sg : sigmas) {
            try {
                Surgery sur = collapse(*t, sg);
                SplittingPtr mid = share(sur.result);
                auto iso = simplicial_iso(mid, path.terms[I]);
                if (!iso) continue;
                SplittingMap edge = compose(surgery_map(t, sur, mid), *iso);
                MapSequence prefix = slice_seq(path, 0, I);
                CombingRectangle top = comb_by_expansion(prefix, edge, constant_set(edge));
                ProjectionDiagram d;
                d.depth = I;
                d.path = path;
                d.top_rect = top;
                d.low_rect = trivial_rect(prefix);
                d.tail = identity_map(t);
                d.t = t;
                if (verify_projection_diagram(d)) return d;
            } catch (const Error&) {
            }
        }
        for (const auto& sg : natural_subgraphs(*path.terms[I])) {
            try {
                Surgery sur = collapse(*path.terms[I], sg);
                SplittingPtr mid = share(sur.result);
                auto iso = simplicial_iso(mid, t);
                if (!iso) continue;
                MapSequence prefix = slice_seq(path, 0, I);
                CombingRectangle low = comb_by_collapse(prefix, sg);
                ProjectionDiagram d;
                d.depth = I;
                d.path = path;
                d.low_rect = low;
                d.top_rect = trivial_rect(low.bottom);
                auto iso2 = simplicial_iso(low.bottom.terms[I], t);
                if (!iso2) continue;
                d.tail = *iso2;
                d.t = t;
                if (verify_projection_diagram(d)) return d;
            } catch (const Error&) {
            }
        }
    }
    throw Error("build_projection_diagram: no witness diagram found");
}

bool verify_projection_diagram(const ProjectionDiagram& d) {
    try {
        if (!verify_rectangle(d.top_rect) || !verify_rectangle(d.low_rect)) return false;
        int J = d.depth;
        if (d.top_rect.top.length() != J || d.low_rect.top.length() != J) return false;
        for (int k = 0; k <= J; ++k) {
            if (d.top_rect.bottom.terms[k].get() != d.low_rect.bottom.terms[k].get()) return false;
            if (d.low_rect.top.terms[k].get() != d.path.terms[k].get()) return false;
        }
        if (d.tail.src.get() != d.top_rect.top.terms[J].get()) return false;
        if (d.tail.tgt.get() != d.t.get()) return false;
        if (!foldable(d.tail)) return false;
    } catch (const Error&) {
        return false;
    }
    return true;
}

AugmentedProjectionDiagram augment(const ProjectionDiagram& d) {
    AugmentedProjectionDiagram ad;
    ad.base = d;
    ad.tail_folds = factor_into_folds(d.tail);
    SplittingMap comp = ad.tail_folds.composite(0, static_cast<int>(ad.tail_folds.maps.size()));
    if (!maps_equal(comp, d.tail)) throw Error("augment: recomposition failed");
    return ad;
}

// ---------------------------------------------------------------------------
// refinement flood: bisect edgelets coherently across a family of maps

namespace {

struct Refiner {
    // locus of bisections per splitting instance
    std::map<const MarkedSplitting*, std::set<QEdgelet>> locus;
    std::map<const MarkedSplitting*, SplittingPtr> replaced;

    void seed(const SplittingPtr& s, QEdgelet el) { locus[s.get()].insert(el); }

    void flood(const std::vector<const SplittingMap*>& maps) {
        bool grew = true;
        while (grew) {
            grew = false;
            for (const SplittingMap* f : maps) {
                auto& ls = locus[f->src.get()];
                auto& lt = locus[f->tgt.get()];
                for (auto el : ls) {
                    const EdgeletImage& im = f->eimg[el.first][el.second];
                    if (!im.constant && lt.insert({im.el.edge, im.el.idx}).second) grew = true;
                }
                for (size_t e = 0; e < f->eimg.size(); ++e)
                    for (size_t i = 0; i < f->eimg[e].size(); ++i) {
                        const EdgeletImage& im = f->eimg[e][i];
                        if (im.constant) continue;
                        if (lt.count({im.el.edge, im.el.idx}) &&
                            ls.insert({static_cast<int>(e), static_cast<int>(i)}).second)
                            grew = true;
                    }
            }
        }
    }

    int shift(const MarkedSplitting* s, int edge, int idx) const {
        auto it = locus.find(s);
        if (it == locus.end()) return 0;
        int n = 0;
        for (auto [e, i] : it->second)
            if (e == edge && i < idx) ++n;
        return n;
    }
    int bshift(const MarkedSplitting* s, int edge, int k) const {
        auto it = locus.find(s);
        if (it == locus.end()) return 0;
        int n = 0;
        for (auto [e, i] : it->second)
            if (e == edge && i < k) ++n;
        return n;
    }
    bool bisected(const MarkedSplitting* s, int edge, int idx) const {
        auto it = locus.find(s);
        return it != locus.end() && it->second.count({edge, idx}) > 0;
    }

    SplittingPtr splitting(const SplittingPtr& s) {
        auto it = replaced.find(s.get());
        if (it != replaced.end()) return it->second;
        auto lit = locus.find(s.get());
        if (lit == locus.end() || lit->second.empty()) {
            replaced[s.get()] = s;
            return s;
        }
        MarkedSplitting copy = *s;
        for (auto [e, i] : lit->second) copy.edges[e].edgelets += 1;
        SplittingPtr np = share(std::move(copy));
        replaced[s.get()] = np;
        return np;
    }

    TreePoint point(const MarkedSplitting* old_tgt, const TreePoint& p) const {
        if (p.at_vertex) return p;
        TreePoint q = p;
        q.k = p.k + bshift(old_tgt, p.cell, p.k);
        return q;
    }

    SplittingMap map(const SplittingMap& f) {
        SplittingMap g;
        const MarkedSplitting* so = f.src.get();
        const MarkedSplitting* to = f.tgt.get();
        g.src = splitting(f.src);
        g.tgt = splitting(f.tgt);
        for (const auto& p : f.vimg) g.vimg.push_back(point(to, p));
        g.eimg.assign(f.eimg.size(), {});
        for (size_t e = 0; e < f.eimg.size(); ++e) {
            for (size_t i = 0; i < f.eimg[e].size(); ++i) {
                const EdgeletImage& im = f.eimg[e][i];
                bool bs = bisected(so, static_cast<int>(e), static_cast<int>(i));
                if (im.constant) {
                    EdgeletImage c;
                    c.constant = true;
                    c.pt = point(to, im.pt);
                    g.eimg[e].push_back(c);
                    if (bs) g.eimg[e].push_back(c);
                    continue;
                }
                int j = im.el.idx + shift(to, im.el.edge, im.el.idx);
                bool bt = bisected(to, im.el.edge, im.el.idx);
                if (bs && !bt) throw Error("refine: source bisected but image not");
                if (!bs && bt) throw Error("refine: image bisected but source not");
                if (!bs) {
                    EdgeletImage c = im;
                    c.el.idx = j;
                    g.eimg[e].push_back(c);
                } else {
                    EdgeletImage c1 = im, c2 = im;
                    if (im.el.fwd) {
                        c1.el.idx = j;
                        c2.el.idx = j + 1;
                    } else {
                        c1.el.idx = j + 1;
                        c2.el.idx = j;
                    }
                    g.eimg[e].push_back(c1);
                    g.eimg[e].push_back(c2);
                }
            }
        }
        g.verify();
        return g;
    }

    std::set<QEdgelet> forest(const MarkedSplitting* owner, const std::set<QEdgelet>& f) const {
        std::set<QEdgelet> out;
        for (auto [e, i] : f) {
            int j = i + shift(owner, e, i);
            out.insert({e, j});
            if (bisected(owner, e, i)) out.insert({e, j + 1});
        }
        return out;
    }

    MapSequence seq(const MapSequence& q) {
        MapSequence r;
        for (const auto& t : q.terms) r.terms.push_back(splitting(t));
        for (const auto& m : q.maps) r.maps.push_back(map(m));
        return r;
    }

    CombingRectangle rect(const CombingRectangle& r0) {
        CombingRectangle r;
        r.top = seq(r0.top);
        r.bottom = seq(r0.bottom);
        for (const auto& m : r0.collapses) r.collapses.push_back(map(m));
        for (size_t k = 0; k < r0.forests.size(); ++k)
            r.forests.push_back(forest(r0.top.terms[k].get(), r0.forests[k]));
        return r;
    }
};

} // namespace

// ---------------------------------------------------------------------------
// the engine

BigDiagram::BigDiagram(MapSequence s_path, ProjectionDiagram t_diagram, FreeFactorSystem a)
    : s_path_(std::move(s_path)), t_diagram_(std::move(t_diagram)), a_(std::move(a)) {
    end_ = t_diagram_.t;
}

const SplittingPtr& BigDiagram::current_end() const { return end_; }

void BigDiagram::move_down(const std::set<QEdgelet>& forest) {
    ZigMove m;
    m.down = true;
    m.forest = forest;
    moves_.push_back(std::move(m));
    Surgery sur = collapse(*end_, forest);
    end_ = share(sur.result);
}

void BigDiagram::move_up(const SplittingPtr& upper, const SplittingMap& upper_collapse,
                         const std::set<QEdgelet>& upper_forest) {
    if (upper_collapse.src.get() != upper.get()) throw Error("move_up: mismatched source");
    ZigMove m;
    m.down = false;
    m.upper = upper;
    m.upper_collapse = upper_collapse;
    m.upper_forest = upper_forest;
    moves_.push_back(std::move(m));
    end_ = upper;
}

namespace {

struct Stack {
    // rows[0] is the augmented T row; rows[k] spans columns
    // [offsets[k] .. offsets[k] + rows[k].length()]
    std::vector<MapSequence> rows;
    std::vector<int> offsets;
    // rects[k] joins rows[k] and rows[k+1]; top_of[k] tells which of the two
    // is the collapsing (upper) side of the rectangle: true when it is
    // rows[k] for even k parity handled by the caller
    std::vector<CombingRectangle> rects;
    std::vector<bool> upper_is_row_kplus1; // rect.top equals rows[k+1]
    std::vector<int> rect_offsets;
};

} // namespace

BigDiagramResult BigDiagram::run(int budget) {
    BigDiagramResult res;
    auto trace = [&](const std::string& s) { res.trace.push_back(s); };
    int b1 = b1_constant(a_);

    if (moves_.empty()) {
        res.final_diagram = t_diagram_;
        trace("D=0: returning the input diagram");
        return res;
    }
    std::vector<ZigMove> moves = moves_;
    if (!moves.front().down) {
        ZigMove m;
        m.down = true;
        moves.insert(moves.begin(), m);
        trace("prepended a trivial collapse");
    }
    if (moves.back().down) {
        ZigMove m;
        m.down = false;
        moves.push_back(m);
        trace("appended a trivial expansion");
    }
    int D = static_cast<int>(moves.size());
    if (D % 2 != 0) throw Error("big diagram: zigzag length must be even");

    AugmentedProjectionDiagram ad = augment(t_diagram_);
    MapSequence row0 = ad.base.top_rect.top;
    for (size_t k = 0; k < ad.tail_folds.maps.size(); ++k) {
        row0.terms.push_back(ad.tail_folds.terms[k + 1]);
        row0.maps.push_back(ad.tail_folds.maps[k]);
    }
    int J = ad.base.depth;
    int L = row0.length();
    trace("augmented top row: length " + std::to_string(L) + ", depth " + std::to_string(J));

    Stack st;
    st.rows.push_back(row0);
    st.offsets.push_back(0);
    {
        MapSequence cur = row0;
        for (int d = 0; d < D; ++d) {
            ZigMove& m = moves[d];
            if (m.down) {
                CombingRectangle r = comb_by_collapse(cur, m.forest);
                cur = r.bottom;
                st.rows.push_back(cur);
                st.offsets.push_back(0);
                st.rects.push_back(std::move(r));
                st.upper_is_row_kplus1.push_back(false); // rect.top = rows[d]
                st.rect_offsets.push_back(0);
            } else {
                SplittingMap edge;
                std::set<QEdgelet> forest = m.upper_forest;
                SplittingPtr cur_end = cur.terms.back();
                if (m.upper) {
                    if (m.upper_collapse.tgt.get() != cur_end.get()) {
                        auto iso = simplicial_iso(m.upper_collapse.tgt, cur_end);
                        if (!iso) throw Error("big diagram: cannot align an up-move");
                        edge = compose(m.upper_collapse, *iso);
                    } else {
                        edge = m.upper_collapse;
                    }
                } else {
                    edge = identity_map(cur_end);
                }
                CombingRectangle r = comb_by_expansion(cur, edge, forest);
                cur = r.top;
                st.rows.push_back(cur);
                st.offsets.push_back(0);
                st.rects.push_back(std::move(r));
                st.upper_is_row_kplus1.push_back(true); // rect.top = rows[d+1]
                st.rect_offsets.push_back(0);
            }
        }
    }
    trace("stacked " + std::to_string(D) + " combing rectangles");

    // geodesic shape and blue-red disjointness at the corrugation rows
    for (int d = 2; d + 2 <= D; d += 2) {
        const CombingRectangle& up = st.rects[d - 1];
        const CombingRectangle& down = st.rects[d];
        const SplittingPtr& td = st.rows[d].terms.back();
        std::set<QEdgelet> uni = up.forests.back();
        for (auto el : down.forests.back()) uni.insert(el);
        if (uni != all_edgelets(*td)) {
            res.shortenable = true;
            res.shorten_at = d;
            // shorter path: collapse rho union beta when proper
            trace("zigzag shortenable at row " + std::to_string(d));
            return res;
        }
        std::set<QEdgelet> inter;
        for (auto el : up.forests.back())
            if (down.forests.back().count(el)) inter.insert(el);
        if (!inter.empty())
            throw Error("big diagram: red and blue overlap; normalize the zigzag first");
    }

    // emphasized columns along the top row
    std::map<std::pair<int, int>, int> ups_memo;
    auto ups = [&](int i, int j) {
        auto key = std::make_pair(i, j);
        auto it = ups_memo.find(key);
        if (it != ups_memo.end()) return it->second;
        int v = unit_count(row0, i, j, a_, budget).upsilon;
        ups_memo[key] = v;
        return v;
    };
    std::vector<int> emph{L};
    for (int need = 0; need < (D - 2) / 2; ++need) {
        int cur = emph.back();
        int found = -1;
        for (int l = cur - 1; l >= J; --l)
            if (ups(l, cur) >= b1) { found = l; break; }
        if (found < 0)
            throw Error("big diagram: fewer than b1 certified units between emphasized columns");
        emph.push_back(found);
    }

    // ------------------------------------------------------------------
    // induction: consume rows 1 and 2 of the stack at column Ln
    int step_no = 0;
    while (static_cast<int>(st.rows.size()) > 3) {
        ++step_no;
        int Ln = emph[step_no];
        trace("induction step " + std::to_string(step_no) + " at column " + std::to_string(Ln));
        // rows: 0 (bottom), 1, 2 = corrugation top, 3 = next upper row
        CombingRectangle r01 = slice_rect(st.rects[0], 0, Ln); // top = rows[0]
        CombingRectangle r12 = st.rects[1];                    // top = rows[2]
        CombingRectangle r23 = st.rects[2];                    // top = rows[2]
        std::set<QEdgelet> rho = r12.forests[Ln];
        std::set<QEdgelet> beta = r23.forests[Ln];
        const SplittingPtr& t2 = st.rows[2].terms[Ln];

        // arc component of beta strictly inside an edge
        int arc_e = -1, arc_lo = -1;
        {
            std::map<int, std::vector<int>> by_edge;
            for (auto [e, i] : beta) by_edge[e].push_back(i);
            for (auto& [e, is] : by_edge) {
                std::sort(is.begin(), is.end());
                int m = t2->edges[e].edgelets;
                int runlo = -1;
                for (size_t p = 0; p <= is.size(); ++p) {
                    bool brk = p == is.size() || (runlo >= 0 && is[p] != is[p - 1] + 1);
                    if (p < is.size() && runlo < 0) runlo = is[p];
                    if (brk && runlo >= 0) {
                        int runhi = is[p - 1];
                        if (runlo > 0 && runhi < m - 1) {
                            arc_e = e;
                            arc_lo = runlo;
                            break;
                        }
                        runlo = p < is.size() ? is[p] : -1;
                    }
                }
                if (arc_e >= 0) break;
            }
        }
        if (arc_e < 0)
            throw Error("big diagram: no interior arc component (unit certificate violated)");
        QEdgelet b{arc_e, arc_lo};

        // factor: collapse beta minus the orbit of b over [0..Ln]
        std::set<QEdgelet> betap = beta;
        betap.erase(b);
        MapSequence row2l = slice_seq(st.rows[2], 0, Ln);
        CombingRectangle rect_low = comb_by_collapse(row2l, betap);

        // bisect the image of the red neighbor edgelet in row 3 and push the
        // subdivision through the retained upper structures
        QEdgelet ered{arc_e, arc_lo - 1};
        Refiner ref;
        {
            const SplittingMap& c23 = r23.collapses[Ln];
            const EdgeletImage& im = c23.eimg[ered.first][ered.second];
            if (im.constant) throw Error("big diagram: red edgelet collapsed unexpectedly");
            ref.seed(st.rows[3].terms[Ln], {im.el.edge, im.el.idx});
        }
        // flood across the retained upper structures only: rows >= 3 and the
        // rectangles joining them; the held edgelet below replaces the
        // bisection there
        {
            std::vector<const SplittingMap*> maps;
            for (size_t rr = 3; rr < st.rows.size(); ++rr)
                for (const auto& m : st.rows[rr].maps) maps.push_back(&m);
            for (size_t rc = 3; rc < st.rects.size(); ++rc)
                for (const auto& m : st.rects[rc].collapses) maps.push_back(&m);
            ref.flood(maps);
        }
        std::vector<MapSequence> new_rows = st.rows;
        std::vector<CombingRectangle> new_rects = st.rects;
        for (size_t rr = 3; rr < st.rows.size(); ++rr) new_rows[rr] = ref.seq(st.rows[rr]);
        for (size_t rc = 3; rc < st.rects.size(); ++rc) new_rects[rc] = ref.rect(st.rects[rc]);

        // identify the collapsed-with-held-b right end with the refined row 3
        SplittingPtr t3b = rect_low.bottom.terms[Ln];
        auto hiso = simplicial_iso(t3b, new_rows[3].terms[Ln]);
        if (!hiso) throw Error("big diagram: held-edgelet row does not match the refined row");

        // glued row 3': collapsed row over [0..Ln], then the refined old row
        MapSequence row3p = rect_low.bottom;
        for (int k = Ln; k < new_rows[3].length(); ++k) {
            if (k == Ln) row3p.maps.push_back(compose(*hiso, new_rows[3].maps[k]));
            else row3p.maps.push_back(new_rows[3].maps[k]);
            row3p.terms.push_back(new_rows[3].terms[k + 1]);
        }

        // baseball: home row collapses rho and beta' together
        std::set<QEdgelet> kappa = rho;
        for (auto el : betap) kappa.insert(el);
        if (kappa.size() == all_edgelets(*t2).size())
            throw Error("big diagram: corrugation collapses everything");
        // sigma for T^1 -> T^h: image of beta' under the collapse T^2 -> T^1
        std::set<QEdgelet> betap_img;
        {
            const SplittingMap& c21 = r12.collapses[Ln];
            for (auto el : betap) {
                const EdgeletImage& im = c21.eimg[el.first][el.second];
                if (!im.constant) betap_img.insert({im.el.edge, im.el.idx});
            }
        }
        MapSequence row1l = slice_seq(st.rows[1], 0, Ln);
        CombingRectangle rect1h = comb_by_collapse(row1l, betap_img);
        MapSequence rowH = rect1h.bottom;
        CombingRectangle rect0h = concat_rectangles(r01, rect1h);

        // right edge for the rebuilt upper row: T^4_Ln -> H_Ln
        SplittingMap edge4H;
        {
            // T^4_Ln -> T^3_Ln (refined) -> T^3b -> H
            const SplittingMap& left34 = new_rects[3].collapses[Ln];
            SplittingMap down3b = compose(left34, invert_iso(*hiso));
            // T^3b -> H: collapse the image of rho
            std::set<QEdgelet> rho_img;
            const SplittingMap& c2b = rect_low.collapses[Ln];
            for (auto el : rho) {
                const EdgeletImage& im = c2b.eimg[el.first][el.second];
                if (!im.constant) rho_img.insert({im.el.edge, im.el.idx});
            }
            Surgery s3h = collapse(*t3b, rho_img);
            SplittingPtr mid = share(s3h.result);
            auto hiso2 = simplicial_iso(mid, rowH.terms[Ln]);
            if (!hiso2) throw Error("big diagram: home rows do not align");
            edge4H = compose(down3b, compose(surgery_map(t3b, s3h, mid), *hiso2));
        }
        CombingRectangle rect4H = comb_by_expansion(rowH, edge4H, constant_set(edge4H));

        // glue the rebuilt row 4 with the refined old row 4 right of Ln
        MapSequence row4p = rect4H.top;
        for (int k = Ln; k < new_rows[4].length(); ++k) {
            row4p.maps.push_back(new_rows[4].maps[k]);
            row4p.terms.push_back(new_rows[4].terms[k + 1]);
        }

        // rebuild rows above 4 leftwards, gluing with isomorphisms
        std::vector<MapSequence> rebuilt{row4p};
        std::vector<CombingRectangle> upper_rects;
        std::vector<bool> upper_orient;
        MapSequence below = row4p;
        for (size_t rr = 4; rr + 1 < st.rows.size(); ++rr) {
            const CombingRectangle& old_rect = new_rects[rr];
            bool upper_top = st.upper_is_row_kplus1[rr];
            if (!upper_top) {
                // down-type: rows[rr] collapses to rows[rr+1]
                std::set<QEdgelet> fL = old_rect.forests[Ln];
                CombingRectangle r = comb_by_collapse(slice_seq(below, 0, Ln), fL);
                // glue bottom with the old lower row
                auto giso = simplicial_iso(r.bottom.terms[Ln], new_rows[rr + 1].terms[Ln]);
                if (!giso) throw Error("big diagram: row rebuild does not glue");
                MapSequence glued = r.bottom;
                for (int k = Ln; k < new_rows[rr + 1].length(); ++k) {
                    if (k == Ln) glued.maps.push_back(compose(*giso, new_rows[rr + 1].maps[k]));
                    else glued.maps.push_back(new_rows[rr + 1].maps[k]);
                    glued.terms.push_back(new_rows[rr + 1].terms[k + 1]);
                }
                rebuilt.push_back(glued);
                upper_rects.push_back(r);
                upper_orient.push_back(false);
                below = glued;
            } else {
                // up-type: rows[rr+1] collapses onto rows[rr]
                SplittingMap redge = old_rect.collapses[Ln];
                if (redge.tgt.get() != below.terms[Ln].get()) {
                    auto giso = simplicial_iso(redge.tgt, below.terms[Ln]);
                    if (!giso) throw Error("big diagram: up-rect rebuild does not glue");
                    redge = compose(redge, *giso);
                }
                CombingRectangle r =
                    comb_by_expansion(slice_seq(below, 0, Ln), redge, old_rect.forests[Ln]);
                MapSequence glued = r.top;
                for (int k = Ln; k < new_rows[rr + 1].length(); ++k) {
                    glued.maps.push_back(new_rows[rr + 1].maps[k]);
                    glued.terms.push_back(new_rows[rr + 1].terms[k + 1]);
                }
                rebuilt.push_back(glued);
                upper_rects.push_back(r);
                upper_orient.push_back(true);
                below = glued;
            }
        }

        // assemble the new stack
        Stack ns;
        ns.rows.push_back(slice_seq(st.rows[0], 0, Ln));
        ns.offsets.push_back(0);
        ns.rows.push_back(rowH);
        ns.offsets.push_back(0);
        ns.rects.push_back(rect0h);
        ns.upper_is_row_kplus1.push_back(false);
        ns.rect_offsets.push_back(0);
        ns.rows.push_back(rebuilt[0]);
        ns.offsets.push_back(0);
        {
            CombingRectangle r4h = rect4H;
            ns.rects.push_back(r4h);
            ns.upper_is_row_kplus1.push_back(true);
            ns.rect_offsets.push_back(0);
        }
        for (size_t k = 1; k < rebuilt.size(); ++k) {
            ns.rows.push_back(rebuilt[k]);
            ns.offsets.push_back(0);
            ns.rects.push_back(upper_rects[k - 1]);
            ns.upper_is_row_kplus1.push_back(upper_orient[k - 1]);
            ns.rect_offsets.push_back(0);
        }
        // any untouched rows beyond the rebuild horizon
        for (size_t rr = 4 + rebuilt.size(); rr < st.rows.size(); ++rr) {
            ns.rows.push_back(new_rows[rr]);
            ns.offsets.push_back(st.offsets[rr]);
            ns.rects.push_back(new_rects[rr - 1]);
            ns.upper_is_row_kplus1.push_back(st.upper_is_row_kplus1[rr - 1]);
            ns.rect_offsets.push_back(st.rect_offsets[rr - 1]);
        }
        st = std::move(ns);
        trace("stack reduced to " + std::to_string(st.rows.size()) + " rows");
    }

    // ------------------------------------------------------------------
    // final step against the original projection diagram
    int I = -1;
    {
        for (int l = J; l >= 0; --l) {
            UnitCount uc = unit_count(s_path_, l, J, a_, budget);
            if (uc.upsilon >= b1) { I = l; break; }
        }
    }
    if (I < 0) throw Error("big diagram: fewer than b1 units between the start and the depth");
    trace("final step at column I=" + std::to_string(I));

    const CombingRectangle& r01 = st.rects[0]; // top = rows[0] (aug T row restr.)
    const CombingRectangle& r12 = st.rects[1]; // top = rows[2] (R row)
    CombingRectangle low_rest = slice_rect(ad.base.low_rect, 0, I);
    CombingRectangle top_rest = slice_rect(ad.base.top_rect, 0, I);
    CombingRectangle r01_rest = slice_rect(r01, 0, I);
    std::set<QEdgelet> kappa = top_rest.forests[I];
    for (auto el : r01_rest.forests[I]) kappa.insert(el);
    if (kappa.size() >= all_edgelets(*st.rows[0].terms[I]).size())
        throw Error("big diagram: final corrugation collapses everything");
    CombingRectangle midToH = comb_by_collapse(top_rest.bottom, [&] {
        std::set<QEdgelet> img;
        const SplittingMap& cm = top_rest.collapses[I];
        for (auto el : r01_rest.forests[I]) {
            const EdgeletImage& im = cm.eimg[el.first][el.second];
            if (!im.constant) img.insert({im.el.edge, im.el.idx});
        }
        return img;
    }());
    CombingRectangle sToH = concat_rectangles(low_rest, midToH);
    MapSequence rowH = midToH.bottom;

    SplittingMap edgeRH;
    {
        SplittingMap a1 = slice_rect(r12, 0, I).collapses[I]; // R_I -> row1_I
        std::set<QEdgelet> rho_img;
        const SplittingMap& c01 = r01_rest.collapses[I];
        for (auto el : top_rest.forests[I]) {
            const EdgeletImage& im = c01.eimg[el.first][el.second];
            if (!im.constant) rho_img.insert({im.el.edge, im.el.idx});
        }
        Surgery s1h = collapse(*r01_rest.bottom.terms[I], rho_img);
        SplittingPtr mid = share(s1h.result);
        auto iso = simplicial_iso(mid, rowH.terms[I]);
        if (!iso) throw Error("big diagram: home rows do not match in the final step");
        SplittingMap row1H = compose(surgery_map(r01_rest.bottom.terms[I], s1h, mid), *iso);
        edgeRH = compose(a1, row1H);
    }
    CombingRectangle rOverH = comb_by_expansion(rowH, edgeRH, constant_set(edgeRH));

    ProjectionDiagram out;
    out.depth = I;
    out.path = s_path_;
    out.low_rect = sToH;
    out.top_rect = rOverH;
    {
        SplittingMap tail = identity_map(rOverH.top.terms[I]);
        for (int k = I; k < st.rows[2].length(); ++k) tail = compose(tail, st.rows[2].maps[k]);
        out.tail = tail;
        out.t = st.rows[2].terms.back();
    }
    if (!verify_projection_diagram(out)) throw Error("big diagram: final diagram failed to verify");
    res.final_diagram = out;
    res.steps = step_no + 1;
    trace("final projection diagram of depth " + std::to_string(I));
    return res;
}

RetractProbe coarse_retract_probe(const MapSequence& path, int i, const FreeFactorSystem& a,
                                  int budget) {
    RetractProbe p;
    p.index = i;
    ProjectionDiagram d = build_projection_diagram(path.terms[i], path, a);
    p.witness_depth = d.depth;
    UnitCount uc = unit_count(path, std::min(i, d.depth), std::max(i, d.depth), a, budget);
    p.unit_gap = uc.upsilon;
    p.policy_overcount = uc.policy_overcount;
    return p;
}

} // namespace fsc
