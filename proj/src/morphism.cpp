#include "morphism.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace fsc {

SplittingPtr share(MarkedSplitting s) {
    return std::make_shared<const MarkedSplitting>(std::move(s));
}

TreePoint SplittingMap::apply_point(const TreePoint& p) const {
    if (p.at_vertex) return tgt->translated(vimg[p.cell], p.pos);
    const EdgeletImage& base = eimg[p.cell][p.k - 1];
    TreePoint q = base.constant ? base.pt : tgt->edgelet_endpoint(base.el, true);
    return tgt->translated(q, p.pos);
}

EdgeletImage SplittingMap::apply_edgelet(const TreeEdgelet& el) const {
    const EdgeletImage& base = eimg[el.edge][el.idx];
    EdgeletImage out;
    if (base.constant) {
        out.constant = true;
        out.pt = tgt->translated(base.pt, el.pos);
        return out;
    }
    out.el = base.el;
    out.el.fwd = el.fwd ? base.el.fwd : !base.el.fwd;
    out.el.pos = mul(el.pos, base.el.pos);
    return out;
}

bool SplittingMap::injective_on_edgelets() const {
    for (const auto& per : eimg)
        for (const auto& i : per)
            if (i.constant) return false;
    return true;
}

int SplittingMap::constant_count() const {
    int n = 0;
    for (const auto& per : eimg)
        for (const auto& i : per) n += i.constant ? 1 : 0;
    return n;
}

void SplittingMap::verify() const {
    if (vimg.size() != src->verts.size() || eimg.size() != src->edges.size())
        throw Error("map: wrong record sizes");
    for (size_t v = 0; v < src->verts.size(); ++v) {
        if (!src->verts[v].group) continue;
        for (const auto& h : src->verts[v].group->gens)
            if (!tgt->same_point(tgt->translated(vimg[v], h), vimg[v]))
                throw Error("map: vertex image not fixed by the vertex group");
    }
    for (size_t e = 0; e < src->edges.size(); ++e) {
        const QEdge& ed = src->edges[e];
        if (static_cast<int>(eimg[e].size()) != ed.edgelets) throw Error("map: edgelet count mismatch");
        TreePoint run = vimg[ed.from];
        for (int i = 0; i < ed.edgelets; ++i) {
            const EdgeletImage& im = eimg[e][i];
            if (im.constant) {
                if (!tgt->same_point(im.pt, run)) throw Error("map: constant edgelet out of place");
            } else {
                if (!tgt->same_point(tgt->edgelet_endpoint(im.el, false), run))
                    throw Error("map: edgelet chain not contiguous");
                run = tgt->edgelet_endpoint(im.el, true);
            }
        }
        if (!tgt->same_point(run, tgt->translated(vimg[ed.to], ed.label)))
            throw Error("map: edge endpoint mismatch");
    }
}

SplittingMap identity_map(const SplittingPtr& s) {
    SplittingMap f;
    f.src = f.tgt = s;
    for (size_t v = 0; v < s->verts.size(); ++v)
        f.vimg.push_back(TreePoint::vertex(static_cast<int>(v), identity(s->ctx)));
    for (size_t e = 0; e < s->edges.size(); ++e) {
        std::vector<EdgeletImage> per;
        for (int i = 0; i < s->edges[e].edgelets; ++i) {
            EdgeletImage im;
            im.el = TreeEdgelet{static_cast<int>(e), i, true, identity(s->ctx)};
            per.push_back(im);
        }
        f.eimg.push_back(std::move(per));
    }
    return f;
}

SplittingMap compose(const SplittingMap& f, const SplittingMap& g) {
    if (f.tgt.get() != g.src.get()) throw Error("compose: middle splitting mismatch");
    SplittingMap h;
    h.src = f.src;
    h.tgt = g.tgt;
    for (const auto& p : f.vimg) h.vimg.push_back(g.apply_point(p));
    for (const auto& per : f.eimg) {
        std::vector<EdgeletImage> out;
        for (const auto& im : per) {
            if (im.constant) {
                EdgeletImage o;
                o.constant = true;
                o.pt = g.apply_point(im.pt);
                out.push_back(o);
            } else {
                out.push_back(g.apply_edgelet(im.el));
            }
        }
        h.eimg.push_back(std::move(out));
    }
    return h;
}

SplittingMap surgery_map(const SplittingPtr& src, const Surgery& sur, const SplittingPtr& tgt) {
    SplittingMap f;
    f.src = src;
    f.tgt = tgt;
    f.vimg = sur.vertex_rec;
    for (size_t e = 0; e < src->edges.size(); ++e) {
        std::vector<EdgeletImage> per;
        for (int i = 0; i < src->edges[e].edgelets; ++i) {
            const Surgery::EdgeletRec& r = sur.edgelet_rec[e][i];
            EdgeletImage im;
            if (r.edge < 0) {
                im.constant = true;
                im.pt = r.cpt;
            } else {
                im.el = TreeEdgelet{r.edge, r.idx, !r.rev, r.pos};
            }
            per.push_back(im);
        }
        f.eimg.push_back(std::move(per));
    }
    f.verify();
    return f;
}

SplittingMap induce_map(const Surgery& sur, const SplittingPtr& new_src, const SplittingMap& f) {
    const MarkedSplitting& ns = *new_src;
    SplittingMap out;
    out.src = new_src;
    out.tgt = f.tgt;
    // reverse index: new edgelet -> an old edgelet
    std::map<std::pair<int, int>, std::tuple<int, int, bool, NormalWord>> rev;
    for (size_t e = 0; e < f.src->edges.size(); ++e)
        for (int i = 0; i < f.src->edges[e].edgelets; ++i) {
            const Surgery::EdgeletRec& r = sur.edgelet_rec[e][i];
            if (r.edge < 0) continue;
            rev.try_emplace({r.edge, r.idx},
                            std::make_tuple(static_cast<int>(e), i, r.rev, r.pos));
        }
    out.eimg.assign(ns.edges.size(), {});
    for (size_t E = 0; E < ns.edges.size(); ++E) {
        for (int j = 0; j < ns.edges[E].edgelets; ++j) {
            auto it = rev.find({static_cast<int>(E), j});
            if (it == rev.end()) throw Error("induce_map: unmatched new edgelet");
            auto [e, i, r, pos] = it->second;
            out.eimg[E].push_back(f.apply_edgelet(TreeEdgelet{e, i, !r, inv(pos)}));
        }
    }
    // vertex images: derive from incident edges, falling back to old vertices
    out.vimg.assign(ns.verts.size(), TreePoint::vertex(0, identity(ns.ctx)));
    std::vector<bool> have(ns.verts.size(), false);
    for (size_t E = 0; E < ns.edges.size(); ++E) {
        const QEdge& ed = ns.edges[E];
        if (!have[ed.from]) {
            const EdgeletImage& im = out.eimg[E][0];
            out.vimg[ed.from] = im.constant ? im.pt : f.tgt->edgelet_endpoint(im.el, false);
            have[ed.from] = true;
        }
        if (!have[ed.to]) {
            const EdgeletImage& im = out.eimg[E].back();
            TreePoint head = im.constant ? im.pt : f.tgt->edgelet_endpoint(im.el, true);
            out.vimg[ed.to] = f.tgt->translated(head, inv(ed.label));
            have[ed.to] = true;
        }
    }
    for (size_t v = 0; v < f.src->verts.size(); ++v) {
        const TreePoint& r = sur.vertex_rec[v];
        if (r.at_vertex && !have[r.cell]) {
            out.vimg[r.cell] = f.tgt->translated(f.vimg[v], inv(r.pos));
            have[r.cell] = true;
        }
    }
    for (size_t v = 0; v < ns.verts.size(); ++v)
        if (!have[v]) throw Error("induce_map: vertex image undetermined");
    out.verify();
    return out;
}

// ---------------------------------------------------------------------------
// directions, gates, folds

std::vector<Direction> germs_at(const MarkedSplitting& s, int v) {
    std::vector<Direction> out;
    for (size_t e = 0; e < s.edges.size(); ++e) {
        if (s.edges[e].from == v) out.push_back(Direction{static_cast<int>(e), 0, identity(s.ctx)});
        if (s.edges[e].to == v) out.push_back(Direction{static_cast<int>(e), 1, identity(s.ctx)});
    }
    return out;
}

TreeEdgelet direction_edgelet(const MarkedSplitting& s, int v, const Direction& d) {
    const QEdge& e = s.edges.at(d.edge);
    if (!d.twist.is_identity() && !s.group_contains(v, d.twist))
        throw Error("direction: twist not in the vertex group");
    if (d.end == 0) {
        if (e.from != v) throw Error("direction: germ not at the vertex");
        return TreeEdgelet{d.edge, 0, true, d.twist};
    }
    if (e.to != v) throw Error("direction: germ not at the vertex");
    return TreeEdgelet{d.edge, e.edgelets - 1, false, mul(d.twist, inv(e.label))};
}

Gates gates(const SplittingMap& f, int v) {
    const MarkedSplitting& s = *f.src;
    std::vector<Direction> germs = germs_at(s, v);
    int n = static_cast<int>(germs.size());
    std::vector<EdgeletImage> imgs;
    for (const Direction& d : germs) {
        EdgeletImage im = f.apply_edgelet(direction_edgelet(s, v, d));
        if (im.constant) throw Error("gates: map not injective on edgelets");
        imgs.push_back(im);
    }
    std::vector<int> cls(n);
    for (int i = 0; i < n; ++i) cls[i] = i;
    std::function<int(int)> find = [&](int x) {
        while (cls[x] != x) x = cls[x] = cls[cls[x]];
        return x;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const TreeEdgelet &a = imgs[i].el, &b = imgs[j].el;
            if (a.edge != b.edge || a.idx != b.idx || a.fwd != b.fwd) continue;
            NormalWord delta = mul(a.pos, inv(b.pos));
            if (s.group_contains(v, delta)) {
                int x = find(i), y = find(j);
                if (x != y) cls[std::max(x, y)] = std::min(x, y);
            }
        }
    Gates g;
    std::map<int, int> ids;
    for (int i = 0; i < n; ++i) {
        int r = find(i);
        if (!ids.count(r)) {
            ids[r] = static_cast<int>(g.classes.size());
            g.classes.push_back({});
        }
        g.classes[ids[r]].push_back(i);
    }
    g.at_least_two = g.classes.size() >= 2 || (s.verts[v].group.has_value() && n >= 1);
    return g;
}

bool foldable(const SplittingMap& f) {
    if (!f.injective_on_edgelets()) return false;
    for (size_t v = 0; v < f.src->verts.size(); ++v)
        if (!gates(f, static_cast<int>(v)).at_least_two) return false;
    return true;
}

std::optional<FoldPair> find_fold_pair(const SplittingMap& f) {
    const MarkedSplitting& s = *f.src;
    for (size_t v = 0; v < s.verts.size(); ++v) {
        std::vector<Direction> germs = germs_at(s, static_cast<int>(v));
        std::vector<EdgeletImage> imgs;
        for (const Direction& d : germs)
            imgs.push_back(f.apply_edgelet(direction_edgelet(s, static_cast<int>(v), d)));
        for (size_t i = 0; i < germs.size(); ++i)
            for (size_t j = i + 1; j < germs.size(); ++j) {
                if (imgs[i].constant || imgs[j].constant) continue;
                const TreeEdgelet &a = imgs[i].el, &b = imgs[j].el;
                if (a.edge != b.edge || a.idx != b.idx || a.fwd != b.fwd) continue;
                NormalWord delta = mul(a.pos, inv(b.pos));
                if (!s.group_contains(static_cast<int>(v), delta)) continue;
                FoldPair p;
                p.vertex = static_cast<int>(v);
                p.d1 = germs[i];
                p.d2 = germs[j];
                p.d2.twist = delta;
                return p;
            }
    }
    return std::nullopt;
}

const char* fold_type_name(FoldType t) {
    switch (t) {
        case FoldType::IA: return "IA";
        case FoldType::IB: return "IB";
        case FoldType::IIIA: return "IIIA";
        case FoldType::IIIB: return "IIIB";
    }
    return "?";
}

namespace {

// quotient cell identity of a tree point
struct QCell {
    bool vert;
    int cell;
    int k;
    bool operator==(const QCell& o) const { return vert == o.vert && cell == o.cell && k == o.k; }
};
QCell qcell(const TreePoint& p) { return QCell{p.at_vertex, p.cell, p.at_vertex ? 0 : p.k}; }

} // namespace

FoldType classify_fold(const MarkedSplitting& s, int v, const Direction& d1, const Direction& d2) {
    if (d1.edge == d2.edge && d1.end == d2.end)
        throw Error("fold: directions in the same orbit");
    MarkedSplitting s2 = s;
    // an inverting germ pair folds around the edge midpoint
    {
        TreeEdgelet a = direction_edgelet(s2, d1.end == 0 ? s2.edges[d1.edge].from : s2.edges[d1.edge].to, d1);
        TreeEdgelet b = direction_edgelet(s2, v, d2);
        if (a.edge == b.edge && a.idx == b.idx) subdivide_edge(s2, a.edge, 2);
    }
    TreeEdgelet D1 = direction_edgelet(s2, v, d1);
    TreeEdgelet D2 = direction_edgelet(s2, v, d2);
    QCell cw = qcell(s2.edgelet_endpoint(D1, true));
    QCell cw2 = qcell(s2.edgelet_endpoint(D2, true));
    QCell cv = QCell{true, v, 0};
    bool ww = cw == cw2, wv = cw == cv, w2v = cw2 == cv;
    if (ww && wv) return FoldType::IIIB;
    if (ww) return FoldType::IIIA;
    if (wv != w2v) return FoldType::IB;
    return FoldType::IA;
}

FoldRecord apply_fold(const MarkedSplitting& s_in, int v, const Direction& d1, const Direction& d2) {
    FoldType type = classify_fold(s_in, v, d1, d2);
    MarkedSplitting s2 = s_in;
    {
        TreeEdgelet a = direction_edgelet(s2, v, d1), b = direction_edgelet(s2, v, d2);
        if (a.edge == b.edge && a.idx == b.idx) subdivide_edge(s2, a.edge, 2);
    }
    TreeEdgelet D1 = direction_edgelet(s2, v, d1);
    TreeEdgelet D2 = direction_edgelet(s2, v, d2);
    if (D1.edge == D2.edge && D1.idx == D2.idx) throw Error("fold: colliding edgelets persist");

    const ContextPtr& ctx = s2.ctx;
    WorkingView W(s2);
    WorkSpec spec;
    spec.src = &s2;
    std::vector<int> cls(W.nW);
    std::vector<NormalWord> cpos(W.nW, identity(ctx));
    for (int i = 0; i < W.nW; ++i) cls[i] = i;
    std::vector<std::optional<Subgroup>> group(W.nW);
    for (size_t u = 0; u < s2.verts.size(); ++u) group[u] = s2.verts[u].group;

    // identify the head endpoints
    TreePoint h1 = s2.edgelet_endpoint(D1, true);
    TreePoint h2 = s2.edgelet_endpoint(D2, true);
    auto wvertex = [&](const TreePoint& p) {
        return p.at_vertex ? p.cell : W.of_boundary(p.cell, p.k);
    };
    int wa = wvertex(h1), wb = wvertex(h2);
    if (wa == wb) {
        NormalWord d = mul(inv(h1.pos), h2.pos);
        bool inside = group[wa] ? group[wa]->contains(d) : d.is_identity();
        if (!inside) {
            std::vector<NormalWord> gens = group[wa] ? group[wa]->gens : std::vector<NormalWord>{};
            gens.push_back(d);
            group[wa] = Subgroup::generated(ctx, gens);
        }
    } else {
        // keep the base vertex as class representative so that transported
        // seed loops stay based at an identity offset
        if (wb == s2.base) {
            std::swap(wa, wb);
            std::swap(h1, h2);
        }
        cls[wb] = wa;
        cpos[wb] = mul(inv(h2.pos), h1.pos);
        std::vector<NormalWord> gens = group[wa] ? group[wa]->gens : std::vector<NormalWord>{};
        if (group[wb])
            for (const auto& g : group[wb]->gens) gens.push_back(conj(inv(cpos[wb]), g));
        Subgroup merged = Subgroup::generated(ctx, gens);
        if (!merged.is_trivial()) group[wa] = std::move(merged);
        else group[wa] = std::nullopt;
        group[wb] = std::nullopt;
    }

    // compact classes
    std::map<int, int> dense;
    spec.wclass.assign(W.nW, -1);
    spec.wpos = cpos;
    for (int i = 0; i < W.nW; ++i) {
        int r = cls[i] == i ? i : cls[i];
        if (!dense.count(r)) {
            dense[r] = static_cast<int>(dense.size());
            spec.cgroup.push_back(group[r]);
        }
        spec.wclass[i] = dense[r];
    }
    spec.n_class = static_cast<int>(dense.size());
    spec.cbase = spec.wclass[s2.base];

    std::pair<int, int> w1{D1.edge, D1.idx}, w2{D2.edge, D2.idx};
    bool rel_rev = D1.fwd == D2.fwd ? false : true;
    // D1 and D2 are tail-matched oriented edgelets; as working edges they
    // agree up to a flip when their intrinsic orientations differ
    for (size_t e = 0; e < s2.edges.size(); ++e)
        for (int i = 0; i < s2.edges[e].edgelets; ++i) {
            QEdgelet el{static_cast<int>(e), i};
            if (el == QEdgelet(w2)) continue;
            int a = W.src(el.first, el.second), b = W.tgt(el.first, el.second);
            WorkSpec::KeptEdge ke;
            ke.csrc = spec.wclass[a];
            ke.ctgt = spec.wclass[b];
            ke.lab = mul(mul(inv(spec.wpos[a]), W.lab(el.first, el.second)), spec.wpos[b]);
            ke.prov.push_back(WorkSpec::Prov{el, false, spec.wpos[a]});
            if (el == QEdgelet(w1)) {
                // P1 * W1can^(o1) == P2 * W2can^(o2): the folded partner
                NormalWord q = mul(mul(inv(D2.pos), D1.pos), spec.wpos[a]);
                ke.prov.push_back(WorkSpec::Prov{QEdgelet(w2), rel_rev, q});
            }
            spec.kept.push_back(std::move(ke));
        }

    FoldRecord fr;
    fr.surgery = assemble(spec, {});
    fr.type = type;
    fr.vertex = v;
    fr.d1 = d1;
    fr.d2 = d2;
    fr.folded_src = share(std::move(s2));
    return fr;
}

// ---------------------------------------------------------------------------
// map construction

std::pair<SplittingPtr, SplittingMap> build_map(const MarkedSplitting& src, const SplittingPtr& tgt,
                                                const std::vector<TreePoint>& vertex_images) {
    MarkedSplitting s2 = src;
    SplittingMap f;
    f.tgt = tgt;
    f.vimg = vertex_images;
    for (size_t e = 0; e < s2.edges.size(); ++e) {
        const QEdge& ed = s2.edges[e];
        TreePoint a = vertex_images[ed.from];
        TreePoint b = tgt->translated(vertex_images[ed.to], ed.label);
        std::vector<TreeEdgelet> path = tgt->tree_edgelet_path(a, b);
        std::vector<EdgeletImage> per;
        if (path.empty()) {
            s2.edges[e].edgelets = 1;
            EdgeletImage im;
            im.constant = true;
            im.pt = a;
            per.push_back(im);
        } else {
            s2.edges[e].edgelets = static_cast<int>(path.size());
            for (const auto& el : path) {
                EdgeletImage im;
                im.el = el;
                per.push_back(im);
            }
        }
        f.eimg.push_back(std::move(per));
    }
    SplittingPtr sp = share(std::move(s2));
    f.src = sp;
    f.verify();
    return {sp, f};
}

MakeFoldableResult make_foldable_contained(const SplittingPtr& s, const SplittingPtr& t) {
    const ContextPtr& ctx = s->ctx;
    std::vector<TreePoint> imgs;
    for (size_t v = 0; v < s->verts.size(); ++v) {
        if (!s->verts[v].group) {
            imgs.push_back(TreePoint::vertex(t->base, identity(ctx)));
            continue;
        }
        bool placed = false;
        for (size_t w = 0; w < t->verts.size() && !placed; ++w) {
            if (!t->verts[w].group) continue;
            auto g = conjugate_into(*s->verts[v].group, *t->verts[w].group);
            if (g) {
                imgs.push_back(TreePoint::vertex(static_cast<int>(w), inv(*g)));
                placed = true;
            }
        }
        if (!placed) throw Error("make_foldable: vertex system not contained in the target's");
    }
    auto [cur, f] = build_map(*s, t, imgs);
    std::optional<SplittingMap> total;
    int fuel = 200;
    while (fuel-- > 0) {
        // collapse constant edgelets
        std::set<QEdgelet> sig;
        for (size_t e = 0; e < cur->edges.size(); ++e)
            for (int i = 0; i < cur->edges[e].edgelets; ++i)
                if (f.eimg[e][i].constant) sig.insert({static_cast<int>(e), i});
        if (!sig.empty()) {
            Surgery sur = collapse(*cur, sig);
            SplittingPtr ns = share(sur.result);
            SplittingMap cmap = surgery_map(cur, sur, ns);
            total = total ? compose(*total, cmap) : cmap;
            f = induce_map(sur, ns, f);
            cur = ns;
            continue;
        }
        // collapse the star of a one-gate vertex
        int bad = -1;
        for (size_t v = 0; v < cur->verts.size() && bad < 0; ++v)
            if (!gates(f, static_cast<int>(v)).at_least_two) bad = static_cast<int>(v);
        if (bad < 0) break;
        std::set<QEdgelet> star;
        for (const Direction& d : germs_at(*cur, bad)) {
            TreeEdgelet el = direction_edgelet(*cur, bad, d);
            star.insert({el.edge, el.idx});
        }
        Surgery sur = collapse(*cur, star);
        SplittingPtr ns = share(sur.result);
        SplittingMap cmap = surgery_map(cur, sur, ns);
        total = total ? compose(*total, cmap) : cmap;
        f = induce_map(sur, ns, f);
        cur = ns;
    }
    if (!foldable(f)) throw Error("make_foldable: result not foldable");
    MakeFoldableResult r;
    r.sprime = s;
    r.sdouble = cur;
    r.f = f;
    r.s_to_sdouble = total;
    return r;
}

// ---------------------------------------------------------------------------
// fold factorization

FoldSequence factor_into_folds(const SplittingMap& f_in) {
    FoldSequence out;
    SplittingPtr cur = f_in.src, tgt = f_in.tgt;
    SplittingMap f = f_in;
    if (!foldable(f)) throw Error("factor_into_folds: map not foldable");
    out.terms.push_back(cur);
    int fuel = 2000;
    while (fuel-- > 0) {
        auto p = find_fold_pair(f);
        if (!p) break;
        FoldRecord fr = apply_fold(*cur, p->vertex, p->d1, p->d2);
        if (fr.folded_src->total_edgelets() != cur->total_edgelets())
            throw Error("factor_into_folds: unexpected subdivision during a fold");
        // a gate pair never folds an edgelet onto itself reversed, so the
        // fold operates on the unsubdivided splitting
        SplittingPtr ns = share(fr.surgery.result);
        SplittingMap fold_m = surgery_map(cur, fr.surgery, ns);
        f = induce_map(fr.surgery, ns, f);
        out.terms.push_back(ns);
        out.maps.push_back(fold_m);
        out.records.push_back(std::move(fr));
        cur = ns;
    }
    if (fuel <= 0) throw Error("factor_into_folds: did not terminate");
    // final simplicial identification with the (doubled) target
    out.terms.push_back(tgt);
    out.maps.push_back(f);
    return out;
}

SplittingMap FoldSequence::composite(int i, int j) const {
    if (i < 0 || j > static_cast<int>(maps.size()) || i > j) throw Error("composite: bad range");
    SplittingMap m = identity_map(terms[i]);
    for (int k = i; k < j; ++k) m = compose(m, maps[k]);
    return m;
}

} // namespace fsc
