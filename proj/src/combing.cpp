#include "combing.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace fsc {

SplittingMap MapSequence::composite(int i, int j) const {
    if (i < 0 || j > length() || i > j) throw Error("composite: bad range");
    SplittingMap m = identity_map(terms[i]);
    for (int k = i; k < j; ++k) m = compose(m, maps[k]);
    return m;
}

void MapSequence::verify_foldable() const {
    for (int i = 0; i <= length(); ++i)
        for (int j = i; j <= length(); ++j)
            if (!foldable(composite(i, j))) throw Error("sequence: composite not foldable");
}

MapSequence MapSequence::single(const SplittingPtr& s) {
    MapSequence q;
    q.terms = {s};
    return q;
}

MapSequence MapSequence::from_folds(const FoldSequence& fs) {
    MapSequence q;
    q.terms = fs.terms;
    q.maps = fs.maps;
    return q;
}

bool maps_equal(const SplittingMap& f, const SplittingMap& g) {
    if (f.vimg.size() != g.vimg.size() || f.eimg.size() != g.eimg.size()) return false;
    for (size_t v = 0; v < f.vimg.size(); ++v)
        if (!f.tgt->same_point(f.vimg[v], g.vimg[v])) return false;
    for (size_t e = 0; e < f.eimg.size(); ++e) {
        if (f.eimg[e].size() != g.eimg[e].size()) return false;
        for (size_t i = 0; i < f.eimg[e].size(); ++i) {
            const auto &a = f.eimg[e][i], &b = g.eimg[e][i];
            if (a.constant != b.constant) return false;
            if (a.constant) {
                if (!f.tgt->same_point(a.pt, b.pt)) return false;
            } else if (a.el.edge != b.el.edge || a.el.idx != b.el.idx || a.el.fwd != b.el.fwd ||
                       !(mul(inv(a.el.pos), b.el.pos).is_identity()))
                return false;
        }
    }
    return true;
}

std::set<QEdgelet> pullback(const SplittingMap& f, const std::set<QEdgelet>& sigma_t) {
    std::set<QEdgelet> out;
    for (size_t e = 0; e < f.eimg.size(); ++e)
        for (size_t i = 0; i < f.eimg[e].size(); ++i) {
            const EdgeletImage& im = f.eimg[e][i];
            if (im.constant) throw Error("pullback: map not injective on edgelets");
            if (sigma_t.count({im.el.edge, im.el.idx}))
                out.insert({static_cast<int>(e), static_cast<int>(i)});
        }
    return out;
}

CombingRectangle comb_by_collapse(const MapSequence& top, const std::set<QEdgelet>& sigma_K) {
    int K = top.length();
    CombingRectangle r;
    r.top = top;
    r.forests.assign(K + 1, {});
    r.forests[K] = sigma_K;
    for (int k = K - 1; k >= 0; --k) r.forests[k] = pullback(top.maps[k], r.forests[k + 1]);
    std::vector<Surgery> surs;
    for (int k = 0; k <= K; ++k) {
        surs.push_back(collapse(*top.terms[k], r.forests[k]));
        r.bottom.terms.push_back(share(surs.back().result));
        r.collapses.push_back(surgery_map(top.terms[k], surs.back(), r.bottom.terms.back()));
    }
    for (int k = 1; k <= K; ++k) {
        SplittingMap through = compose(top.maps[k - 1], r.collapses[k]);
        r.bottom.maps.push_back(induce_map(surs[k - 1], r.bottom.terms[k - 1], through));
    }
    return r;
}

// ---------------------------------------------------------------------------
// fiber product step

namespace {

// unique non-constant preimage of a target tree edgelet under a collapse map
TreeEdgelet collapse_preimage(const SplittingMap& pi, const TreeEdgelet& d) {
    for (size_t e = 0; e < pi.eimg.size(); ++e)
        for (size_t i = 0; i < pi.eimg[e].size(); ++i) {
            const EdgeletImage& im = pi.eimg[e][i];
            if (im.constant) continue;
            if (im.el.edge != d.edge || im.el.idx != d.idx) continue;
            TreeEdgelet out;
            out.edge = static_cast<int>(e);
            out.idx = static_cast<int>(i);
            out.fwd = d.fwd == im.el.fwd;
            out.pos = mul(d.pos, inv(im.el.pos));
            return out;
        }
    throw Error("collapse_preimage: edgelet has no preimage");
}

} // namespace

FiberStep fiber_product_step(const SplittingMap& g, const SplittingPtr& s_next,
                             const SplittingMap& pi_next, const std::set<QEdgelet>& sigma_next) {
    const MarkedSplitting& T = *g.src;
    const MarkedSplitting& S = *s_next;
    const ContextPtr& ctx = T.ctx;
    if (pi_next.src.get() != s_next.get() || pi_next.tgt.get() != g.tgt.get())
        throw Error("fiber_product_step: mismatched maps");
    const MarkedSplitting& Tn = *g.tgt;

    // target vertex orbits carrying collapsed components
    std::vector<bool> blown_orbit(Tn.verts.size(), false);
    for (auto el : sigma_next) {
        const EdgeletImage& im = pi_next.eimg[el.first][el.second];
        if (!im.constant) throw Error("fiber_product_step: forest not collapsed by the map");
        if (im.pt.at_vertex) blown_orbit[im.pt.cell] = true;
    }

    struct Plan {
        bool blown = false;
        CoverGraph cover;
        std::vector<CoverMark> marks;
        std::vector<Direction> germs;
        TreePoint still{true, 0, 0, NormalWord()};
        std::vector<int> unode, uedge;
    };
    std::vector<Plan> plans(T.verts.size());

    auto vertex_preimage = [&](const TreePoint& z) -> TreePoint {
        for (size_t v = 0; v < S.verts.size(); ++v) {
            const TreePoint& q = pi_next.vimg[v];
            if (!q.at_vertex || !z.at_vertex || q.cell != z.cell) continue;
            return TreePoint::vertex(static_cast<int>(v), mul(z.pos, inv(q.pos)));
        }
        throw Error("fiber_product_step: vertex preimage not found");
    };

    for (size_t y = 0; y < T.verts.size(); ++y) {
        Plan& pl = plans[y];
        TreePoint z = g.vimg[y];
        if (!z.at_vertex) {
            TreeEdgelet hostd{z.cell, z.k - 1, true, z.pos};
            TreeEdgelet pre = collapse_preimage(pi_next, hostd);
            pl.still = S.edgelet_endpoint(pre, true);
            continue;
        }
        if (!blown_orbit[z.cell]) {
            pl.still = vertex_preimage(z);
            continue;
        }
        pl.blown = true;
        pl.germs = germs_at(T, static_cast<int>(y));
        std::vector<TreePoint> attach;
        for (const Direction& d : pl.germs) {
            TreeEdgelet germ = direction_edgelet(T, static_cast<int>(y), d);
            EdgeletImage im = g.apply_edgelet(germ);
            if (im.constant) throw Error("fiber_product_step: bottom map not foldable");
            TreeEdgelet pre = collapse_preimage(pi_next, im.el);
            attach.push_back(S.edgelet_endpoint(pre, false));
        }
        TreePoint anchor = !attach.empty() ? attach[0] : vertex_preimage(z);
        Subgroup P = T.verts[y].group ? *T.verts[y].group : Subgroup::generated(ctx, {});
        pl.cover = cover_core_attach(s_next, P, anchor, attach, pl.marks);
    }

    MarkedSplitting U;
    U.ctx = ctx;
    std::vector<int> kept_id(T.verts.size(), -1);
    for (size_t y = 0; y < T.verts.size(); ++y) {
        if (plans[y].blown) continue;
        kept_id[y] = static_cast<int>(U.verts.size());
        U.verts.push_back(T.verts[y]);
    }
    for (size_t y = 0; y < T.verts.size(); ++y) {
        if (!plans[y].blown) continue;
        for (const auto& node : plans[y].cover.nodes) {
            plans[y].unode.push_back(static_cast<int>(U.verts.size()));
            U.verts.push_back(QVertex{node.stab});
        }
    }
    auto germ_index = [&](size_t y, int edge, int end) -> size_t {
        const Plan& pl = plans[y];
        for (size_t gi = 0; gi < pl.germs.size(); ++gi)
            if (pl.germs[gi].edge == edge && pl.germs[gi].end == end) return gi;
        throw Error("fiber_product_step: germ lookup failed");
    };
    auto end_data = [&](size_t y, int edge, int end) -> std::pair<int, NormalWord> {
        if (!plans[y].blown) return {kept_id[y], identity(ctx)};
        const Plan& pl = plans[y];
        size_t gi = germ_index(y, edge, end);
        return {pl.unode[pl.marks[gi].node], pl.marks[gi].wit};
    };

    // Per T-edge: a chain of U-edges. Each T-edgelet becomes one U-edge (its
    // S-coordinate is the collapse preimage of its image); a boundary whose
    // image vertex carries a component inserts the in-piece connector chain.
    struct ChainPiece {
        int uedge;
        bool is_pre;          // preimage of a T-edgelet
        int t_idx = 0;        // which T-edgelet (is_pre)
        int bnd = 0;          // which boundary (connector pieces)
        TreeEdgelet sedge;    // the S-coordinate of this piece (omega0-undiagonal)
    };
    std::vector<std::vector<ChainPiece>> chains(T.edges.size());
    std::vector<NormalWord> omega0(T.edges.size(), identity(ctx));
    std::set<QEdgelet> sigma;

    for (size_t e = 0; e < T.edges.size(); ++e) {
        const QEdge& ed = T.edges[e];
        auto [uf, w0] = end_data(ed.from, static_cast<int>(e), 0);
        auto [ut, w1] = end_data(ed.to, static_cast<int>(e), 1);
        omega0[e] = w0;
        std::vector<TreeEdgelet> pres;
        for (int i = 0; i < ed.edgelets; ++i) {
            TreeEdgelet d = g.apply_edgelet(TreeEdgelet{static_cast<int>(e), i, true, identity(ctx)}).el;
            pres.push_back(collapse_preimage(pi_next, d));
        }
        int cur = uf;
        for (int i = 0; i < ed.edgelets; ++i) {
            // connector before edgelet i (at boundary i) for i >= 1
            if (i >= 1) {
                TreePoint from_pt = S.edgelet_endpoint(pres[i - 1], true);
                TreePoint to_pt = S.edgelet_endpoint(pres[i], false);
                if (!S.same_point(from_pt, to_pt)) {
                    std::vector<TreeEdgelet> conn = S.tree_edgelet_path(from_pt, to_pt);
                    for (const TreeEdgelet& c : conn) {
                        int nv = static_cast<int>(U.verts.size());
                        U.verts.push_back(QVertex{});
                        int E = static_cast<int>(U.edges.size());
                        sigma.insert({E, 0});
                        U.edges.push_back(QEdge{cur, nv, identity(ctx), false, 1});
                        chains[e].push_back(ChainPiece{E, false, 0, i, c});
                        cur = nv;
                    }
                    // the last connector piece must end at the next pre-part tail;
                    // merge the trailing fresh vertex into the chain by retargeting
                }
            }
            int head;
            NormalWord lab = identity(ctx);
            if (i == ed.edgelets - 1) {
                head = ut;
                lab = mul(mul(w0, ed.label), inv(w1));
            } else {
                head = static_cast<int>(U.verts.size());
                U.verts.push_back(QVertex{});
            }
            int E = static_cast<int>(U.edges.size());
            U.edges.push_back(QEdge{cur, head, lab, false, 1});
            chains[e].push_back(ChainPiece{E, true, i, 0, pres[i]});
            cur = head;
        }
    }
    for (size_t y = 0; y < T.verts.size(); ++y) {
        if (!plans[y].blown) continue;
        Plan& pl = plans[y];
        for (const auto& ce : pl.cover.edges) {
            pl.uedge.push_back(static_cast<int>(U.edges.size()));
            sigma.insert({static_cast<int>(U.edges.size()), 0});
            U.edges.push_back(QEdge{pl.unode[ce.from], pl.unode[ce.to], inv(ce.headwit), false, 1});
        }
    }
    U.base = plans[T.base].blown ? plans[T.base].unode[plans[T.base].cover.base] : kept_id[T.base];

    // gauge onto a spanning tree
    std::vector<NormalWord> gauge;
    {
        int V = static_cast<int>(U.verts.size());
        gauge.assign(V, identity(ctx));
        std::vector<bool> seen(V, false);
        std::vector<bool> treeflag(U.edges.size(), false);
        seen[U.base] = true;
        std::deque<int> q{U.base};
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (size_t ei = 0; ei < U.edges.size(); ++ei) {
                QEdge& e = U.edges[ei];
                if (e.from == u && !seen[e.to]) {
                    seen[e.to] = true;
                    treeflag[ei] = true;
                    gauge[e.to] = mul(gauge[u], e.label);
                    q.push_back(e.to);
                } else if (e.to == u && !seen[e.from]) {
                    seen[e.from] = true;
                    treeflag[ei] = true;
                    gauge[e.from] = mul(gauge[u], inv(e.label));
                    q.push_back(e.from);
                }
            }
        }
        for (int v = 0; v < V; ++v)
            if (!seen[v]) throw Error("fiber_product_step: result disconnected");
        for (size_t ei = 0; ei < U.edges.size(); ++ei) {
            QEdge& e = U.edges[ei];
            e.label = mul(mul(gauge[e.from], e.label), inv(gauge[e.to]));
            e.in_tree = treeflag[ei];
        }
        for (int v = 0; v < V; ++v)
            if (U.verts[v].group) U.verts[v].group = U.verts[v].group->conjugated(gauge[v]);
    }
    auto kappa = [&](int E) { return inv(gauge[U.edges[E].from]); };

    auto attach_pt = [&](size_t y, size_t gi) {
        const Plan& pl = plans[y];
        return S.translated(pl.cover.nodes[pl.marks[gi].node].pt, inv(pl.marks[gi].wit));
    };

    struct UCross {
        int edge;
        NormalWord pos;
        int dir;
    };
    auto connector = [&](size_t y, const NormalWord& frame, const TreePoint& a, const TreePoint& b,
                         std::vector<UCross>& out) {
        Plan& pl = plans[y];
        const Subgroup* P = T.verts[y].group ? &*T.verts[y].group : nullptr;
        for (const TreeEdgelet& c : S.tree_edgelet_path(a, b)) {
            bool matched = false;
            for (size_t k = 0; k < pl.cover.edges.size() && !matched; ++k) {
                const auto& ce = pl.cover.edges[k];
                if (ce.xedge != c.edge || ce.xidx != c.idx) continue;
                NormalWord pi = mul(ce.pos, inv(c.pos));
                if (!pi.is_identity() && (!P || !P->contains(pi))) continue;
                int E = pl.uedge[k];
                out.push_back(UCross{E, mul(mul(frame, inv(pi)), kappa(E)), c.fwd ? +1 : -1});
                matched = true;
            }
            if (!matched) throw Error("fiber_product_step: connector missed the cover");
        }
    };

    auto build_seed = [&](const GogPath& p, const NormalWord& value) {
        std::vector<UCross> crossings;
        NormalWord r = identity(ctx);
        bool inside = plans[p.start].blown;
        size_t inside_y = p.start;
        NormalWord frame = identity(ctx);
        TreePoint at = inside ? plans[p.start].cover.nodes[plans[p.start].cover.base].pt
                              : TreePoint::vertex(0, identity(ctx));
        for (const GogItem& it : p.items) {
            if (!it.is_step) {
                r = mul(r, it.h);
                continue;
            }
            const QEdge& te = T.edges[it.edge];
            int standv = it.dir > 0 ? te.from : te.to;
            int headv = it.dir > 0 ? te.to : te.from;
            NormalWord t = it.dir > 0 ? r : mul(r, inv(te.label));
            if (plans[standv].blown) {
                if (!inside || inside_y != static_cast<size_t>(standv))
                    throw Error("fiber_product_step: walk lost inside a piece");
                size_t gi = germ_index(standv, it.edge, it.dir > 0 ? 0 : 1);
                TreePoint want = S.translated(attach_pt(standv, gi), mul(inv(frame), r));
                connector(standv, frame, at, want, crossings);
            }
            NormalWord base_pos = mul(t, inv(omega0[it.edge]));
            if (it.dir > 0) {
                for (const ChainPiece& cp : chains[it.edge])
                    crossings.push_back(UCross{cp.uedge, mul(base_pos, kappa(cp.uedge)), +1});
            } else {
                for (auto it2 = chains[it.edge].rbegin(); it2 != chains[it.edge].rend(); ++it2)
                    crossings.push_back(UCross{it2->uedge, mul(base_pos, kappa(it2->uedge)), -1});
            }
            r = it.dir > 0 ? mul(r, te.label) : mul(r, inv(te.label));
            if (plans[headv].blown) {
                inside = true;
                inside_y = headv;
                frame = r;
                size_t gi = germ_index(headv, it.edge, it.dir > 0 ? 1 : 0);
                at = attach_pt(headv, gi);
            } else {
                inside = false;
            }
        }
        if (plans[p.start].blown) {
            if (!inside || inside_y != static_cast<size_t>(p.start))
                throw Error("fiber_product_step: walk does not end at its start piece");
            const TreePoint& home = plans[p.start].cover.nodes[plans[p.start].cover.base].pt;
            TreePoint want = S.translated(home, mul(inv(frame), value));
            connector(p.start, frame, at, want, crossings);
        }
        GogPath up;
        up.start = U.base;
        NormalWord R = identity(ctx);
        for (const UCross& c : crossings) {
            const QEdge& e = U.edges[c.edge];
            if (c.dir > 0) {
                NormalWord h = mul(inv(R), c.pos);
                if (!h.is_identity()) up.items.push_back(GogItem::elem(h));
                up.items.push_back(GogItem::step(c.edge, +1));
                R = mul(c.pos, e.label);
            } else {
                NormalWord h = mul(inv(R), mul(c.pos, e.label));
                if (!h.is_identity()) up.items.push_back(GogItem::elem(h));
                up.items.push_back(GogItem::step(c.edge, -1));
                R = c.pos;
            }
        }
        NormalWord h = mul(inv(R), value);
        if (!h.is_identity()) up.items.push_back(GogItem::elem(h));
        return U.reduced(std::move(up));
    };

    for (int i = 0; i < ctx->free_rank; ++i)
        U.letter_seeds.push_back(build_seed(T.letter_seeds.at(i), gen_free(ctx, i)));
    for (int ai = 0; ai < ctx->n_atoms(); ++ai) {
        const AtomSpec& at = ctx->atoms[ai];
        std::vector<NormalWord> values;
        switch (at.kind) {
            case AtomKind::FiniteCyclic:
            case AtomKind::InfiniteCyclic: values = {gen_atom(ctx, ai, AtomEl{1, {}})}; break;
            case AtomKind::Opaque:
                for (int e = 1; e < at.table.order(); ++e) values.push_back(gen_atom(ctx, ai, AtomEl{e, {}}));
                break;
            case AtomKind::FreeOfRank:
                for (int j = 1; j <= at.rank; ++j) values.push_back(gen_atom(ctx, ai, AtomEl{0, {j}}));
                break;
        }
        std::vector<GogPath> seeds;
        for (size_t j = 0; j < values.size(); ++j)
            seeds.push_back(build_seed(T.atom_seeds.at(ai).at(j), values[j]));
        U.atom_seeds.push_back(std::move(seeds));
    }
    U.check();
    SplittingPtr up = share(std::move(U));
    const MarkedSplitting& Uf = *up;

    FiberStep out;
    out.s = up;
    out.sigma = sigma;

    // collapse map to T
    {
        SplittingMap cm;
        cm.src = up;
        cm.tgt = g.src;
        cm.vimg.assign(Uf.verts.size(), TreePoint::vertex(0, identity(ctx)));
        std::vector<bool> have(Uf.verts.size(), false);
        for (size_t y = 0; y < T.verts.size(); ++y) {
            if (plans[y].blown) {
                for (int uv : plans[y].unode) {
                    cm.vimg[uv] = TreePoint::vertex(static_cast<int>(y), gauge[uv]);
                    have[uv] = true;
                }
            } else {
                cm.vimg[kept_id[y]] = TreePoint::vertex(static_cast<int>(y), gauge[kept_id[y]]);
                have[kept_id[y]] = true;
            }
        }
        cm.eimg.assign(Uf.edges.size(), {});
        for (size_t e = 0; e < T.edges.size(); ++e) {
            for (const ChainPiece& cp : chains[e]) {
                EdgeletImage im;
                NormalWord pos = mul(gauge[Uf.edges[cp.uedge].from], omega0[e]);
                if (cp.is_pre) {
                    im.el = TreeEdgelet{static_cast<int>(e), cp.t_idx, true, pos};
                } else {
                    im.constant = true;
                    im.pt = TreePoint::boundary(static_cast<int>(e), cp.bnd, pos);
                }
                cm.eimg[cp.uedge] = {im};
                // chain interior vertices
                const QEdge& ue = Uf.edges[cp.uedge];
                for (int end = 0; end < 2; ++end) {
                    int uv = end == 0 ? ue.from : ue.to;
                    if (have[uv]) continue;
                    int k = cp.is_pre ? cp.t_idx + end : cp.bnd;
                    NormalWord vpos = mul(gauge[uv], omega0[e]);
                    cm.vimg[uv] = TreePoint::boundary(static_cast<int>(e), k, vpos);
                    have[uv] = true;
                }
            }
        }
        for (size_t y = 0; y < T.verts.size(); ++y) {
            if (!plans[y].blown) continue;
            for (size_t k = 0; k < plans[y].cover.edges.size(); ++k) {
                int E = plans[y].uedge[k];
                EdgeletImage im;
                im.constant = true;
                im.pt = TreePoint::vertex(static_cast<int>(y), gauge[Uf.edges[E].from]);
                cm.eimg[E] = {im};
            }
        }
        cm.verify();
        out.pi = std::move(cm);
    }

    // top map to s_next
    {
        SplittingMap h;
        h.src = up;
        h.tgt = s_next;
        h.vimg.assign(Uf.verts.size(), TreePoint::vertex(0, identity(ctx)));
        std::vector<bool> have(Uf.verts.size(), false);
        for (size_t y = 0; y < T.verts.size(); ++y) {
            if (plans[y].blown) {
                for (size_t n = 0; n < plans[y].cover.nodes.size(); ++n) {
                    int uv = plans[y].unode[n];
                    h.vimg[uv] = S.translated(plans[y].cover.nodes[n].pt, gauge[uv]);
                    have[uv] = true;
                }
            } else {
                h.vimg[kept_id[y]] = S.translated(plans[y].still, gauge[kept_id[y]]);
                have[kept_id[y]] = true;
            }
        }
        h.eimg.assign(Uf.edges.size(), {});
        for (size_t e = 0; e < T.edges.size(); ++e) {
            for (const ChainPiece& cp : chains[e]) {
                NormalWord shift = mul(gauge[Uf.edges[cp.uedge].from], omega0[e]);
                TreeEdgelet sed = cp.sedge;
                sed.pos = mul(shift, sed.pos);
                EdgeletImage im;
                im.el = sed;
                h.eimg[cp.uedge] = {im};
                const QEdge& ue = Uf.edges[cp.uedge];
                for (int end = 0; end < 2; ++end) {
                    int uv = end == 0 ? ue.from : ue.to;
                    if (have[uv]) continue;
                    TreePoint pt = S.edgelet_endpoint(cp.sedge, end == 1);
                    h.vimg[uv] = S.translated(pt, mul(gauge[uv], omega0[e]));
                    have[uv] = true;
                }
            }
        }
        for (size_t y = 0; y < T.verts.size(); ++y) {
            if (!plans[y].blown) continue;
            for (size_t k = 0; k < plans[y].cover.edges.size(); ++k) {
                const auto& ce = plans[y].cover.edges[k];
                int E = plans[y].uedge[k];
                EdgeletImage im;
                im.el = TreeEdgelet{ce.xedge, ce.xidx, true, mul(gauge[Uf.edges[E].from], ce.pos)};
                h.eimg[E] = {im};
            }
        }
        h.verify();
        out.h = std::move(h);
    }
    return out;
}

CombingRectangle comb_by_expansion(const MapSequence& bottom, const SplittingMap& pi_K,
                                   const std::set<QEdgelet>& sigma_K) {
    int K = bottom.length();
    if (pi_K.tgt.get() != bottom.terms[K].get())
        throw Error("comb_by_expansion: right edge does not land on the bottom corner");
    CombingRectangle r;
    r.bottom = bottom;
    std::vector<SplittingPtr> tops(K + 1);
    std::vector<SplittingMap> pis(K + 1);
    std::vector<std::set<QEdgelet>> sigs(K + 1);
    tops[K] = pi_K.src;
    pis[K] = pi_K;
    sigs[K] = sigma_K;
    for (int i = K - 1; i >= 0; --i) {
        FiberStep st = fiber_product_step(bottom.maps[i], tops[i + 1], pis[i + 1], sigs[i + 1]);
        tops[i] = st.s;
        pis[i] = st.pi;
        sigs[i] = st.sigma;
        r.top.maps.insert(r.top.maps.begin(), st.h);
    }
    r.top.terms = tops;
    r.collapses = pis;
    r.forests = sigs;
    return r;
}

bool verify_rectangle(const CombingRectangle& r) {
    int K = r.top.length();
    if (r.bottom.length() != K || static_cast<int>(r.collapses.size()) != K + 1 ||
        static_cast<int>(r.forests.size()) != K + 1)
        return false;
    try {
        for (int k = 0; k <= K; ++k) {
            r.collapses[k].verify();
            if (r.collapses[k].src.get() != r.top.terms[k].get()) return false;
            if (r.collapses[k].tgt.get() != r.bottom.terms[k].get()) return false;
            // the forest is exactly the constant set of the collapse
            std::set<QEdgelet> con;
            for (size_t e = 0; e < r.collapses[k].eimg.size(); ++e)
                for (size_t i = 0; i < r.collapses[k].eimg[e].size(); ++i)
                    if (r.collapses[k].eimg[e][i].constant)
                        con.insert({static_cast<int>(e), static_cast<int>(i)});
            if (con != r.forests[k]) return false;
        }
        for (int k = 0; k < K; ++k) {
            // commutation
            SplittingMap a = compose(r.top.maps[k], r.collapses[k + 1]);
            SplittingMap b = compose(r.collapses[k], r.bottom.maps[k]);
            if (!maps_equal(a, b)) return false;
            // pullback condition
            if (pullback(r.top.maps[k], r.forests[k + 1]) != r.forests[k]) return false;
        }
    } catch (const Error&) {
        return false;
    }
    return true;
}

CombingRectangle concat_rectangles(const CombingRectangle& a, const CombingRectangle& b) {
    int K = a.top.length();
    if (b.top.length() != K) throw Error("concat_rectangles: length mismatch");
    for (int k = 0; k <= K; ++k)
        if (a.bottom.terms[k].get() != b.top.terms[k].get())
            throw Error("concat_rectangles: rows do not match");
    CombingRectangle r;
    r.top = a.top;
    r.bottom = b.bottom;
    for (int k = 0; k <= K; ++k) {
        r.collapses.push_back(compose(a.collapses[k], b.collapses[k]));
        std::set<QEdgelet> sig = a.forests[k];
        for (size_t e = 0; e < a.collapses[k].eimg.size(); ++e)
            for (size_t i = 0; i < a.collapses[k].eimg[e].size(); ++i) {
                const EdgeletImage& im = a.collapses[k].eimg[e][i];
                if (!im.constant && b.forests[k].count({im.el.edge, im.el.idx}))
                    sig.insert({static_cast<int>(e), static_cast<int>(i)});
            }
        r.forests.push_back(std::move(sig));
    }
    return r;
}

} // namespace fsc
