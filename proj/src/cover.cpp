#include "cover.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>

namespace fsc {

namespace {

struct FNode {
    TreePoint pt;
    std::vector<NormalWord> sgens;
    std::shared_ptr<Subgroup> stab; // cache
    bool alive = true;
};

struct FEdge {
    int xe = 0, xi = 0;
    NormalWord q;
    int tail = 0, head = 0;
    NormalWord tw, hw; // witnesses in P: tw*q*(tail pt) = tail node pt, etc.
    bool alive = true;
};

struct CoverBuilder {
    const MarkedSplitting& X;
    const Subgroup& P;
    std::vector<FNode> nodes;
    std::vector<FEdge> edges;
    int base = 0;
    std::vector<std::pair<int, NormalWord>> marks; // (node, wit)

    explicit CoverBuilder(const MarkedSplitting& x, const Subgroup& p) : X(x), P(p) {}

    const Subgroup& stab_of(int n) {
        FNode& nd = nodes[n];
        if (!nd.stab) nd.stab = std::make_shared<Subgroup>(Subgroup::generated(X.ctx, nd.sgens));
        return *nd.stab;
    }
    bool in_stab(int n, const NormalWord& g) {
        if (g.is_identity()) return true;
        return stab_of(n).contains(g);
    }
    void grow_stab(int n, const NormalWord& g) {
        if (in_stab(n, g)) return;
        nodes[n].sgens.push_back(g);
        nodes[n].stab.reset();
    }

    int fresh_node(TreePoint pt) {
        nodes.push_back(FNode{std::move(pt), {}, nullptr, true});
        return static_cast<int>(nodes.size()) - 1;
    }

    // a.pt = nu * b.pt ; merge a into b
    void merge_nodes(int a, int b, NormalWord nu) {
        if (a == b) {
            grow_stab(b, nu);
            return;
        }
        if (a == base) {
            merge_nodes(b, a, inv(nu));
            return;
        }
        NormalWord nui = inv(nu);
        for (auto& e : edges) {
            if (!e.alive) continue;
            if (e.tail == a) { e.tail = b; e.tw = mul(nui, e.tw); }
            if (e.head == a) { e.head = b; e.hw = mul(nui, e.hw); }
        }
        for (auto& m : marks)
            if (m.first == a) { m.first = b; m.second = mul(nui, m.second); }
        for (const auto& g : nodes[a].sgens) grow_stab(b, conj(nui, g));
        nodes[a].alive = false;
    }

    TreePoint edgelet_pt(const FEdge& e, bool head) const {
        return X.edgelet_endpoint(TreeEdgelet{e.xe, e.xi, true, e.q}, head);
    }

    std::pair<int, NormalWord> lay_path(const std::vector<TreeEdgelet>& crossings) {
        int cur = base;
        NormalWord W = identity(X.ctx);
        for (const TreeEdgelet& c : crossings) {
            bool fwd = c.fwd;
            int found = -1;
            NormalWord newW;
            for (size_t ei = 0; ei < edges.size(); ++ei) {
                FEdge& e = edges[ei];
                if (!e.alive || e.xe != c.edge || e.xi != c.idx) continue;
                if (fwd && e.tail == cur) {
                    NormalWord sigma = mul(mul(e.tw, e.q), inv(mul(W, c.pos)));
                    if (in_stab(cur, sigma)) {
                        found = static_cast<int>(ei);
                        newW = mul(mul(mul(e.hw, inv(e.tw)), sigma), W);
                        cur = e.head;
                        break;
                    }
                }
                if (!fwd && e.head == cur) {
                    NormalWord sigma = mul(mul(e.hw, e.q), inv(mul(W, c.pos)));
                    if (in_stab(cur, sigma)) {
                        found = static_cast<int>(ei);
                        newW = mul(mul(mul(e.tw, inv(e.hw)), sigma), W);
                        cur = e.tail;
                        break;
                    }
                }
            }
            if (found >= 0) {
                W = newW;
                continue;
            }
            // fresh edge and far node
            TreeEdgelet lifted = c;
            FEdge e;
            e.xe = c.edge;
            e.xi = c.idx;
            e.q = c.pos;
            TreePoint far = X.edgelet_endpoint(lifted, true);
            TreePoint farw = far;
            farw.pos = mul(W, far.pos);
            int nn = fresh_node(farw);
            if (fwd) {
                e.tail = cur;
                e.tw = W;
                e.head = nn;
                e.hw = W;
            } else {
                e.head = cur;
                e.hw = W;
                e.tail = nn;
                e.tw = W;
            }
            edges.push_back(std::move(e));
            cur = nn;
        }
        return {cur, W};
    }

    // lay a path of crossings as a loop at the base closing with group element g
    void lay_loop(const std::vector<TreeEdgelet>& crossings, const NormalWord& g) {
        auto [cur, W] = lay_path(crossings);
        // close up at the base: cur.pt = (W g) * base.pt
        merge_nodes(cur, base, mul(W, g));
    }

    void fold() {
        int fuel = 100000;
        bool changed = true;
        while (changed) {
            if (--fuel < 0) throw Error("cover folding did not terminate");
            changed = false;
            for (size_t i = 0; i < edges.size() && !changed; ++i) {
                if (!edges[i].alive) continue;
                for (size_t j = i + 1; j < edges.size() && !changed; ++j) {
                    if (!edges[j].alive) continue;
                    FEdge &e1 = edges[i], &e2 = edges[j];
                    if (e1.xe != e2.xe || e1.xi != e2.xi) continue;
                    if (e1.tail == e2.tail) {
                        NormalWord sigma = mul(mul(e2.tw, e2.q), inv(mul(e1.tw, e1.q)));
                        if (in_stab(e1.tail, sigma)) {
                            NormalWord nu = mul(mul(mul(mul(e2.hw, inv(e2.tw)), sigma), e1.tw), inv(e1.hw));
                            int h2 = e2.head, h1 = e1.head;
                            e2.alive = false;
                            merge_nodes(h2, h1, nu);
                            changed = true;
                            break;
                        }
                    }
                    if (e1.head == e2.head) {
                        NormalWord sigma = mul(mul(e2.hw, e2.q), inv(mul(e1.hw, e1.q)));
                        if (in_stab(e1.head, sigma)) {
                            NormalWord nu = mul(mul(mul(mul(e2.tw, inv(e2.hw)), sigma), e1.hw), inv(e1.tw));
                            int t2 = e2.tail, t1 = e1.tail;
                            e2.alive = false;
                            merge_nodes(t2, t1, nu);
                            changed = true;
                            break;
                        }
                    }
                }
            }
        }
    }

    void trim(bool keep_marked) {
        std::vector<bool> keep(nodes.size(), false);
        if (keep_marked)
            for (const auto& m : marks) keep[m.first] = true;
        bool changed = true;
        while (changed) {
            changed = false;
            std::vector<int> deg(nodes.size(), 0);
            std::vector<int> incident(nodes.size(), -1);
            int alive_edges = 0;
            for (size_t ei = 0; ei < edges.size(); ++ei) {
                if (!edges[ei].alive) continue;
                ++alive_edges;
                deg[edges[ei].tail]++;
                deg[edges[ei].head]++;
                incident[edges[ei].tail] = static_cast<int>(ei);
                incident[edges[ei].head] = static_cast<int>(ei);
            }
            if (alive_edges <= 1) break;
            for (size_t n = 0; n < nodes.size(); ++n) {
                if (!nodes[n].alive || deg[n] != 1 || !nodes[n].sgens.empty() || keep[n]) continue;
                int ei = incident[n];
                if (static_cast<int>(n) == base)
                    base = edges[ei].tail == base ? edges[ei].head : edges[ei].tail;
                edges[ei].alive = false;
                nodes[n].alive = false;
                changed = true;
                break;
            }
        }
    }
};

} // namespace

namespace {

CoverGraph builder_output(CoverBuilder& b, const SplittingPtr& ambient, const Subgroup& p,
                          std::vector<CoverMark>* marks_out) {
    const MarkedSplitting& X = *ambient;
    CoverGraph cg;
    cg.ambient = ambient;
    cg.group = p;
    std::map<int, int> id;
    for (size_t n = 0; n < b.nodes.size(); ++n) {
        if (!b.nodes[n].alive) continue;
        id[static_cast<int>(n)] = static_cast<int>(cg.nodes.size());
        CoverGraph::Node node;
        node.pt = b.nodes[n].pt;
        if (!b.nodes[n].sgens.empty()) {
            Subgroup s = Subgroup::generated(X.ctx, b.nodes[n].sgens);
            if (!s.is_trivial()) node.stab = std::move(s);
        }
        cg.nodes.push_back(std::move(node));
    }
    for (const auto& e : b.edges) {
        if (!e.alive) continue;
        CoverGraph::CEdge ce;
        ce.xedge = e.xe;
        ce.xidx = e.xi;
        ce.pos = mul(e.tw, e.q);              // tail-framed exact position
        ce.headwit = mul(e.hw, inv(e.tw));    // headwit * pos * (head pt) = head node pt
        ce.from = id.at(e.tail);
        ce.to = id.at(e.head);
        cg.edges.push_back(std::move(ce));
    }
    if (b.nodes[b.base].alive) cg.base = id.at(b.base);
    else if (!cg.nodes.empty()) cg.base = 0;
    if (marks_out) {
        marks_out->clear();
        for (const auto& m : b.marks) marks_out->push_back(CoverMark{id.at(m.first), m.second});
    }
    return cg;
}

std::vector<TreeEdgelet> loop_crossings(const MarkedSplitting& X, const GogPath& loop,
                                        NormalWord off) {
    std::vector<TreeEdgelet> crossings;
    for (const GogItem& it : loop.items) {
        if (!it.is_step) {
            off = mul(off, it.h);
            continue;
        }
        const QEdge& e = X.edges[it.edge];
        if (it.dir > 0) {
            for (int i = 0; i < e.edgelets; ++i)
                crossings.push_back(TreeEdgelet{it.edge, i, true, off});
            off = mul(off, e.label);
        } else {
            NormalWord lift = mul(off, inv(e.label));
            for (int i = e.edgelets - 1; i >= 0; --i)
                crossings.push_back(TreeEdgelet{it.edge, i, false, lift});
            off = lift;
        }
    }
    return crossings;
}

} // namespace

CoverGraph cover_core(const SplittingPtr& ambient, const Subgroup& p, int anchor_vertex,
                      const NormalWord& anchor_pos) {
    const MarkedSplitting& X = *ambient;
    CoverBuilder b(X, p);
    b.base = b.fresh_node(TreePoint::vertex(anchor_vertex, anchor_pos));
    GogPath to_anchor = X.locate(anchor_vertex, anchor_pos);
    for (const NormalWord& g : p.gens) {
        GogPath loop =
            X.reduced(X.concat(X.inverse_path(to_anchor), X.locate(anchor_vertex, mul(g, anchor_pos))));
        b.lay_loop(loop_crossings(X, loop, anchor_pos), g);
        b.fold();
    }
    b.fold();
    b.trim(false);
    return builder_output(b, ambient, p, nullptr);
}

CoverGraph cover_core_attach(const SplittingPtr& ambient, const Subgroup& p,
                             const TreePoint& anchor, const std::vector<TreePoint>& attach,
                             std::vector<CoverMark>& marks_out) {
    const MarkedSplitting& X = *ambient;
    CoverBuilder b(X, p);
    b.base = b.fresh_node(anchor);
    for (const NormalWord& g : p.gens) {
        std::vector<TreeEdgelet> crossings = X.tree_edgelet_path(anchor, X.translated(anchor, g));
        b.lay_loop(crossings, g);
        b.fold();
    }
    for (const TreePoint& at : attach) {
        auto [node, wit] = b.lay_path(X.tree_edgelet_path(anchor, at));
        b.marks.push_back({node, wit});
        b.fold();
    }
    b.fold();
    b.trim(true);
    return builder_output(b, ambient, p, &marks_out);
}

// ---------------------------------------------------------------------------
// blow-ups

namespace {

// gauge a raw splitting onto a BFS spanning tree rooted at its base; returns
// the per-vertex gauge elements (new canonical = g_v * old canonical)
std::vector<NormalWord> gauge_tree(MarkedSplitting& o) {
    int V = static_cast<int>(o.verts.size());
    std::vector<NormalWord> g(V, identity(o.ctx));
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
        if (!seen[v]) throw Error("gauge: disconnected graph");
    for (size_t ei = 0; ei < o.edges.size(); ++ei) {
        QEdge& e = o.edges[ei];
        e.label = mul(mul(g[e.from], e.label), inv(g[e.to]));
        e.in_tree = treeflag[ei];
    }
    for (int v = 0; v < V; ++v)
        if (o.verts[v].group) o.verts[v].group = o.verts[v].group->conjugated(g[v]);
    return g;
}

struct Plan {
    bool blown = false;
    CoverGraph cover;
    std::vector<int> unode;   // cover node -> U vertex id
    std::vector<int> uedge;   // cover edge -> U edge id
};

} // namespace

Expansion expand_by_covers(const SplittingPtr& tp, const SplittingPtr& ambient) {
    const MarkedSplitting& T = *tp;
    const MarkedSplitting& X = *ambient;
    const ContextPtr& ctx = T.ctx;

    std::vector<Plan> plans(T.verts.size());
    for (size_t v = 0; v < T.verts.size(); ++v) {
        if (!T.verts[v].group) continue;
        const Subgroup& P = *T.verts[v].group;
        // elliptic in the ambient splitting: no blow-up
        bool elliptic = false;
        for (size_t w = 0; w < X.verts.size() && !elliptic; ++w) {
            if (!X.verts[w].group) continue;
            if (conjugate_into(P, *X.verts[w].group)) elliptic = true;
        }
        if (elliptic) continue;
        CoverGraph cg = cover_core(ambient, P, X.base, identity(ctx));
        if (cg.degenerate()) continue;
        plans[v].blown = true;
        plans[v].cover = std::move(cg);
    }

    MarkedSplitting U;
    U.ctx = ctx;
    std::vector<int> kept_id(T.verts.size(), -1);
    for (size_t v = 0; v < T.verts.size(); ++v) {
        if (plans[v].blown) continue;
        kept_id[v] = static_cast<int>(U.verts.size());
        U.verts.push_back(T.verts[v]);
    }
    for (size_t v = 0; v < T.verts.size(); ++v) {
        if (!plans[v].blown) continue;
        Plan& pl = plans[v];
        for (const auto& node : pl.cover.nodes) {
            pl.unode.push_back(static_cast<int>(U.verts.size()));
            U.verts.push_back(QVertex{node.stab});
        }
    }
    auto attach = [&](size_t v) { // U vertex a T-edge end at v attaches to
        return plans[v].blown ? plans[v].unode[plans[v].cover.base] : kept_id[v];
    };
    // T-edges keep ids and labels
    for (const auto& e : T.edges)
        U.edges.push_back(QEdge{attach(e.from), attach(e.to), e.label, false, e.edgelets});
    // piece edges
    std::set<QEdgelet> blown_set;
    for (size_t v = 0; v < T.verts.size(); ++v) {
        if (!plans[v].blown) continue;
        Plan& pl = plans[v];
        for (const auto& ce : pl.cover.edges) {
            pl.uedge.push_back(static_cast<int>(U.edges.size()));
            blown_set.insert({static_cast<int>(U.edges.size()), 0});
            U.edges.push_back(
                QEdge{pl.unode[ce.from], pl.unode[ce.to], inv(ce.headwit), false, 1});
        }
    }
    U.base = attach(T.base);
    std::vector<NormalWord> gauge = gauge_tree(U);

    // navigation seeds: transport the T seeds, inserting piece connectors
    auto kappa_edge = [&](int E) { return inv(gauge[U.edges[E].from]); };
    struct UCross {
        int edge;
        NormalWord pos;
        int dir;
    };
    auto connector = [&](size_t v, const NormalWord& frame, const NormalWord& delta,
                         std::vector<UCross>& out) {
        // path inside the piece of v from its attach point to delta * (attach point)
        Plan& pl = plans[v];
        const CoverGraph& cg = pl.cover;
        const TreePoint& a0 = cg.nodes[cg.base].pt;
        std::vector<TreeEdgelet> xpath =
            X.tree_edgelet_path(a0, X.translated(a0, delta));
        for (const TreeEdgelet& c : xpath) {
            bool matched = false;
            for (size_t k = 0; k < cg.edges.size() && !matched; ++k) {
                const auto& ce = cg.edges[k];
                if (ce.xedge != c.edge || ce.xidx != c.idx) continue;
                NormalWord pi = mul(ce.pos, inv(c.pos));
                if (!pi.is_identity() && !T.verts[v].group->contains(pi)) continue;
                int E = pl.uedge[k];
                out.push_back(UCross{E, mul(mul(frame, inv(pi)), kappa_edge(E)), c.fwd ? +1 : -1});
                matched = true;
            }
            if (!matched) throw Error("expand: connector crossing missed the cover");
        }
    };

    auto build_seed = [&](const GogPath& p, const NormalWord& value) {
        // T-crossings with frames
        std::vector<UCross> crossings;
        int atv = p.start;
        NormalWord r = identity(ctx);
        NormalWord arrival = identity(ctx); // frame of the last arrival at a blown vertex
        auto ensure_connector = [&](size_t v, const NormalWord& target_frame) {
            NormalWord delta = mul(inv(arrival), target_frame);
            if (!delta.is_identity()) connector(v, arrival, delta, crossings);
            arrival = target_frame;
        };
        for (const GogItem& it : p.items) {
            if (!it.is_step) {
                r = mul(r, it.h);
                continue;
            }
            const QEdge& te = T.edges[it.edge];
            int tailv = it.dir > 0 ? te.from : te.to;
            NormalWord t = it.dir > 0 ? r : mul(r, inv(te.label));
            // the walk departs along the germ copy at the current offset
            if (plans[tailv].blown) ensure_connector(tailv, r);
            crossings.push_back(UCross{it.edge, mul(t, kappa_edge(it.edge)), it.dir});
            r = it.dir > 0 ? mul(r, te.label) : mul(r, inv(te.label));
            atv = it.dir > 0 ? te.to : te.from;
            if (plans[atv].blown) arrival = r;
        }
        if (plans[p.start].blown) {
            // route to value * (attach point)
            NormalWord delta = mul(inv(arrival), value);
            if (!delta.is_identity()) connector(p.start, arrival, delta, crossings);
        }
        // chunk into a U path
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
    // collapse map back to T
    SplittingMap cm;
    cm.src = up;
    cm.tgt = tp;
    cm.vimg.assign(up->verts.size(), TreePoint::vertex(0, identity(ctx)));
    for (size_t v = 0; v < T.verts.size(); ++v) {
        if (plans[v].blown) continue;
        cm.vimg[kept_id[v]] = TreePoint::vertex(static_cast<int>(v), gauge[kept_id[v]]);
    }
    for (size_t v = 0; v < T.verts.size(); ++v) {
        if (!plans[v].blown) continue;
        for (size_t n = 0; n < plans[v].cover.nodes.size(); ++n) {
            int uv = plans[v].unode[n];
            cm.vimg[uv] = TreePoint::vertex(static_cast<int>(v), gauge[uv]);
        }
    }
    cm.eimg.assign(up->edges.size(), {});
    for (size_t e = 0; e < T.edges.size(); ++e)
        for (int i = 0; i < T.edges[e].edgelets; ++i) {
            EdgeletImage im;
            im.el = TreeEdgelet{static_cast<int>(e), i, true, gauge[up->edges[e].from]};
            cm.eimg[e].push_back(im);
        }
    for (size_t v = 0; v < T.verts.size(); ++v) {
        if (!plans[v].blown) continue;
        for (size_t k = 0; k < plans[v].cover.edges.size(); ++k) {
            int E = plans[v].uedge[k];
            EdgeletImage im;
            im.constant = true;
            im.pt = TreePoint::vertex(static_cast<int>(v), gauge[up->edges[E].from]);
            cm.eimg[E].push_back(im);
        }
    }
    cm.verify();

    Expansion ex;
    ex.expanded = up;
    ex.collapse_map = std::move(cm);
    ex.blown = std::move(blown_set);
    return ex;
}

Expansion expand_to_system(const SplittingPtr& t, const FreeFactorSystem& b) {
    if (!extends_to(b, t->vertex_system()))
        throw Error("expand_to_system: system not contained in the vertex system");
    return expand_by_covers(t, share(splitting_for(b)));
}

// ---------------------------------------------------------------------------

Expansion blow_up_germs(const SplittingPtr& sp, int v, const std::vector<Direction>& dirs) {
    const MarkedSplitting& s = *sp;
    MarkedSplitting u = s;
    int vn = static_cast<int>(u.verts.size());
    u.verts.push_back(QVertex{});
    std::map<std::pair<int, int>, NormalWord> moved;
    for (const Direction& d : dirs) {
        if (moved.count({d.edge, d.end})) throw Error("blow_up_germs: duplicate germ");
        moved[{d.edge, d.end}] = d.twist;
        QEdge& e = u.edges[d.edge];
        if (d.end == 0) {
            if (e.from != v) throw Error("blow_up_germs: germ not at the vertex");
            e.from = vn;
            e.label = mul(d.twist, e.label);
        } else {
            if (e.to != v) throw Error("blow_up_germs: germ not at the vertex");
            e.to = vn;
            e.label = mul(e.label, inv(d.twist));
        }
    }
    int eps = static_cast<int>(u.edges.size());
    u.edges.push_back(QEdge{v, vn, identity(u.ctx), true, 1});
    auto fix = [&](GogPath& p) {
        std::vector<GogItem> items;
        for (const GogItem& it : p.items) {
            if (!it.is_step) {
                items.push_back(it);
                continue;
            }
            auto tail_end = moved.find({it.edge, it.dir > 0 ? 0 : 1});
            auto head_end = moved.find({it.edge, it.dir > 0 ? 1 : 0});
            if (tail_end != moved.end()) {
                items.push_back(GogItem::elem(inv(tail_end->second)));
                items.push_back(GogItem::step(eps, +1));
            }
            items.push_back(it);
            if (head_end != moved.end()) {
                items.push_back(GogItem::step(eps, -1));
                items.push_back(GogItem::elem(head_end->second));
            }
        }
        p.items = std::move(items);
        p = u.reduced(std::move(p));
    };
    for (auto& p : u.letter_seeds) fix(p);
    for (auto& vv : u.atom_seeds)
        for (auto& p : vv) fix(p);
    u.check();

    SplittingPtr up = share(std::move(u));
    SplittingMap cm;
    cm.src = up;
    cm.tgt = sp;
    for (size_t w = 0; w < s.verts.size(); ++w)
        cm.vimg.push_back(TreePoint::vertex(static_cast<int>(w), identity(s.ctx)));
    cm.vimg.push_back(TreePoint::vertex(v, identity(s.ctx)));
    for (size_t e = 0; e < s.edges.size(); ++e) {
        std::vector<EdgeletImage> per;
        NormalWord pos = identity(s.ctx);
        auto it = moved.find({static_cast<int>(e), 0});
        if (it != moved.end()) pos = it->second;
        for (int i = 0; i < s.edges[e].edgelets; ++i) {
            EdgeletImage im;
            im.el = TreeEdgelet{static_cast<int>(e), i, true, pos};
            per.push_back(im);
        }
        cm.eimg.push_back(std::move(per));
    }
    {
        EdgeletImage im;
        im.constant = true;
        im.pt = TreePoint::vertex(v, identity(s.ctx));
        cm.eimg.push_back({im});
    }
    cm.verify();
    Expansion ex;
    ex.expanded = up;
    ex.collapse_map = std::move(cm);
    ex.blown = {{eps, 0}};
    return ex;
}

Expansion generic_resolution(const SplittingPtr& t, const FreeFactorSystem& a) {
    Expansion total = expand_to_system(t, a);
    int fuel = 200;
    while (fuel-- > 0) {
        const MarkedSplitting& cur = *total.expanded;
        NaturalCensus c = natural_census(cur);
        std::vector<int> natdeg(cur.verts.size(), 0);
        for (const auto& chain : c.chains) {
            auto [e0, d0] = chain.front();
            auto [e1, d1] = chain.back();
            natdeg[d0 > 0 ? cur.edges[e0].from : cur.edges[e0].to]++;
            natdeg[d1 > 0 ? cur.edges[e1].to : cur.edges[e1].from]++;
        }
        int pick = -1;
        bool group_case = false;
        for (size_t v = 0; v < cur.verts.size() && pick < 0; ++v) {
            if (!c.vertex_natural[v]) continue;
            if (cur.verts[v].group && natdeg[v] >= 2) { pick = static_cast<int>(v); group_case = true; }
            else if (!cur.verts[v].group && natdeg[v] >= 4) pick = static_cast<int>(v);
        }
        if (pick < 0) break;
        std::vector<Direction> germs = germs_at(cur, pick);
        if (!group_case) germs.resize(2);
        Expansion step = blow_up_germs(total.expanded, pick, germs);
        // compose: step.expanded -> cur -> t
        SplittingMap comp = compose(step.collapse_map, total.collapse_map);
        std::set<QEdgelet> blown = step.blown;
        // carry the previously blown edgelets through (edge ids unchanged)
        for (auto el : total.blown) blown.insert(el);
        total.expanded = step.expanded;
        total.collapse_map = std::move(comp);
        total.blown = std::move(blown);
    }
    if (!is_generic(*total.expanded, a)) throw Error("generic_resolution: result not generic");
    return total;
}

MakeFoldableResult make_foldable(const SplittingPtr& s, const SplittingPtr& t,
                                 const FreeFactorSystem& a) {
    if (extends_to(s->vertex_system(), t->vertex_system())) {
        return make_foldable_contained(s, t);
    }
    Expansion ex = expand_to_system(s, a);
    MakeFoldableResult r = make_foldable_contained(ex.expanded, t);
    r.sprime = ex.expanded;
    return r;
}

namespace {

std::optional<std::set<QEdgelet>> find_collapse_to(const MarkedSplitting& big,
                                                   const MarkedSplitting& small) {
    for (const auto& sig : natural_subgraphs(big)) {
        try {
            Surgery sur = collapse(big, sig);
            if (equivalent(sur.result, small)) return sig;
        } catch (const Error&) {
        }
    }
    return std::nullopt;
}

} // namespace

FoldWitness fold_distance_witness(const FoldRecord& fr) {
    SplittingPtr S = fr.folded_src;
    SplittingPtr T = share(fr.surgery.result);
    FoldWitness w;
    if (equivalent(*S, *T)) {
        w.path = {S};
        return w;
    }
    if (find_collapse_to(*T, *S)) {
        w.path = {S, T};
        w.rel = {+1};
        return w;
    }
    Expansion up = blow_up_germs(S, fr.vertex, {fr.d1, fr.d2});
    if (!find_collapse_to(*up.expanded, *S))
        throw Error("fold witness: blow-up does not collapse back");
    if (!find_collapse_to(*up.expanded, *T))
        throw Error("fold witness: no collapse from the middle splitting");
    w.path = {S, up.expanded, T};
    w.rel = {+1, -1};
    return w;
}

} // namespace fsc
