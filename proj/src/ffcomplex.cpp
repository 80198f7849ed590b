#include "ffcomplex.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace fsc {

namespace {

struct NatView {
    NaturalCensus census;
    std::vector<int> group_verts;
    // endpoints of each chain (natural vertices)
    std::vector<std::pair<int, int>> ends;
};

NatView nat_view(const MarkedSplitting& s) {
    NatView v;
    v.census = natural_census(s);
    for (size_t i = 0; i < s.verts.size(); ++i)
        if (s.verts[i].group) v.group_verts.push_back(static_cast<int>(i));
    for (const auto& chain : v.census.chains) {
        auto [e0, d0] = chain.front();
        auto [e1, d1] = chain.back();
        int a = d0 > 0 ? s.edges[e0].from : s.edges[e0].to;
        int b = d1 > 0 ? s.edges[e1].to : s.edges[e1].from;
        v.ends.push_back({a, b});
    }
    return v;
}

std::set<QEdgelet> chain_edgelets(const MarkedSplitting& s, const NatView& v,
                                  const std::set<int>& chains) {
    std::set<QEdgelet> out;
    for (int c : chains)
        for (auto [e, d] : v.census.chains[c])
            for (int i = 0; i < s.edges[e].edgelets; ++i) out.insert({e, i});
    return out;
}

} // namespace

bool is_core_graph(const CoreGraph& g) {
    const MarkedSplitting& s = *g.owner;
    NatView v = nat_view(s);
    std::map<int, int> valence;
    for (int c : g.chains) {
        valence[v.ends[c].first]++;
        valence[v.ends[c].second]++;
    }
    for (auto& [vert, val] : valence)
        if (val <= 1 && !s.verts[vert].group) return false;
    return true;
}

CoreGraph core(const CoreGraph& g) {
    CoreGraph cur = g;
    const MarkedSplitting& s = *g.owner;
    NatView v = nat_view(s);
    bool changed = true;
    while (changed) {
        changed = false;
        std::map<int, std::vector<int>> at;
        for (int c : cur.chains) {
            at[v.ends[c].first].push_back(c);
            if (v.ends[c].second != v.ends[c].first) at[v.ends[c].second].push_back(c);
        }
        for (auto& [vert, cs] : at) {
            if (s.verts[vert].group) continue;
            if (cs.size() == 1 && !(v.ends[cs[0]].first == v.ends[cs[0]].second)) {
                cur.chains.erase(cs[0]);
                changed = true;
                break;
            }
        }
    }
    return cur;
}

FreeFactorSystem core_system(const CoreGraph& g) {
    const MarkedSplitting& s = *g.owner;
    NatView v = nat_view(s);
    std::set<QEdgelet> sigma = chain_edgelets(s, v, g.chains);
    Surgery sur = collapse(s, sigma);
    return sur.result.vertex_system();
}

bool core_proper(const CoreGraph& g) {
    NatView v = nat_view(*g.owner);
    return g.chains.size() < v.census.chains.size();
}

bool core_nontrivial(const CoreGraph& g, const FreeFactorSystem& a) {
    return !ffs_equal(core_system(g), a);
}

std::vector<CoreGraph> core_graphs(const SplittingPtr& t, const FreeFactorSystem& a) {
    NatView v = nat_view(*t);
    int n = static_cast<int>(v.census.chains.size());
    std::vector<CoreGraph> out;
    for (int mask = 0; mask < (1 << n) - 1; ++mask) {
        CoreGraph g;
        g.owner = t;
        for (int c = 0; c < n; ++c)
            if (mask & (1 << c)) g.chains.insert(c);
        if (!is_core_graph(g)) continue;
        if (!core_proper(g)) continue;
        if (!core_nontrivial(g, a)) continue;
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<FreeFactorSystem> pi_set(const SplittingPtr& t, const FreeFactorSystem& a) {
    std::vector<FreeFactorSystem> out;
    for (const CoreGraph& g : core_graphs(t, a)) {
        FreeFactorSystem sys = core_system(g);
        bool dup = false;
        for (const auto& other : out)
            if (ffs_equal(sys, other)) { dup = true; break; }
        if (!dup) out.push_back(std::move(sys));
    }
    if (out.empty()) throw Error("pi_set: empty projection (exceptional system)");
    return out;
}

FreeFactorSystem special_projection(const SplittingPtr& t, const FreeFactorSystem& a) {
    if (a.dff() < 3) throw Error("special_projection: exceptional system");
    FreeFactorSystem f = t->vertex_system();
    if (!ffs_equal(f, a)) return f;
    auto graphs = core_graphs(t, a);
    if (graphs.empty()) throw Error("special_projection: no core graphs");
    std::sort(graphs.begin(), graphs.end());
    return core_system(graphs.front());
}

// ---------------------------------------------------------------------------
// paths in FF

namespace {

bool in_ff(const FreeFactorSystem& x, const FreeFactorSystem& a) {
    if (x.is_improper()) return false;
    if (ffs_equal(x, a)) return false;
    return extends_to(a, x).has_value();
}

} // namespace

bool verify_ff_path(const FFPath& p, const FreeFactorSystem& a) {
    if (p.systems.empty()) return false;
    for (const auto& x : p.systems)
        if (!in_ff(x, a)) return false;
    for (size_t k = 0; k + 1 < p.systems.size(); ++k) {
        const auto &x = p.systems[k], &y = p.systems[k + 1];
        if (p.rel[k] > 0 ? !proper_extension(x, y) : !proper_extension(y, x)) return false;
    }
    return true;
}

FFPath connect_in_ff(const SplittingPtr& t, const CoreGraph& g1, const CoreGraph& g2,
                     const FreeFactorSystem& a) {
    FreeFactorSystem s1 = core_system(g1);
    FreeFactorSystem s2 = core_system(g2);
    FFPath path;
    if (ffs_equal(s1, s2)) {
        path.systems = {s1};
        return path;
    }
    // nested case
    {
        bool sub12 = std::includes(g2.chains.begin(), g2.chains.end(), g1.chains.begin(),
                                   g1.chains.end());
        bool sub21 = std::includes(g1.chains.begin(), g1.chains.end(), g2.chains.begin(),
                                   g2.chains.end());
        if (sub12) {
            path.systems = {s1, s2};
            path.rel = {+1};
            if (verify_ff_path(path, a)) return path;
        }
        if (sub21) {
            path.systems = {s1, s2};
            path.rel = {-1};
            if (verify_ff_path(path, a)) return path;
        }
    }
    // nontrivial intersection case
    {
        CoreGraph inter;
        inter.owner = t;
        for (int c : g1.chains)
            if (g2.chains.count(c)) inter.chains.insert(c);
        CoreGraph ic = core(inter);
        if (core_nontrivial(ic, a)) {
            FreeFactorSystem mid = core_system(ic);
            path.systems = {s1, mid, s2};
            path.rel = {-1, +1};
            if (verify_ff_path(path, a)) return path;
        }
    }
    // general: breadth-first search over a pool of candidate systems drawn
    // from projections of nearby splittings
    std::vector<FreeFactorSystem> pool{s1, s2};
    auto add_sys = [&](const FreeFactorSystem& x) {
        if (!in_ff(x, a)) return;
        for (const auto& y : pool)
            if (ffs_equal(x, y)) return;
        pool.push_back(x);
    };
    auto add_splitting = [&](const SplittingPtr& sp) {
        NatView v = nat_view(*sp);
        int n = static_cast<int>(v.census.chains.size());
        for (int mask = 0; mask < (1 << n) - 1; ++mask) {
            CoreGraph g;
            g.owner = sp;
            for (int c = 0; c < n; ++c)
                if (mask & (1 << c)) g.chains.insert(c);
            if (!is_core_graph(g) || !core_proper(g)) continue;
            try {
                add_sys(core_system(g));
            } catch (const Error&) {
            }
        }
    };
    add_splitting(t);
    for (const auto& sigma : natural_subgraphs(*t)) {
        try {
            SplittingPtr low = share(collapse(*t, sigma).result);
            add_splitting(low);
            Expansion gen = generic_resolution(low, a);
            add_splitting(gen.expanded);
        } catch (const Error&) {
        }
    }
    // BFS
    int n = static_cast<int>(pool.size());
    std::vector<int> prev(n, -1), prevrel(n, 0), dist(n, -1);
    dist[0] = 0;
    std::deque<int> q{0};
    int target = 1;
    while (!q.empty()) {
        int x = q.front();
        q.pop_front();
        if (x == target) break;
        if (dist[x] >= 6) continue;
        for (int y = 0; y < n; ++y) {
            if (dist[y] >= 0 || y == x) continue;
            int rel = 0;
            if (proper_extension(pool[x], pool[y])) rel = +1;
            else if (proper_extension(pool[y], pool[x])) rel = -1;
            if (!rel) continue;
            dist[y] = dist[x] + 1;
            prev[y] = x;
            prevrel[y] = rel;
            q.push_back(y);
        }
    }
    if (dist[target] < 0 || dist[target] > 6)
        throw Error("connect_in_ff: no path of length at most 6 found");
    std::vector<int> order;
    for (int cur = target; cur >= 0; cur = prev[cur]) order.push_back(cur);
    std::reverse(order.begin(), order.end());
    path.systems.clear();
    path.rel.clear();
    for (size_t k = 0; k < order.size(); ++k) {
        path.systems.push_back(pool[order[k]]);
        if (k + 1 < order.size()) path.rel.push_back(prevrel[order[k + 1]]);
    }
    if (!verify_ff_path(path, a)) throw Error("connect_in_ff: constructed path failed to verify");
    return path;
}

FFDimension ff_dimension(const FreeFactorSystem& a) {
    FFDimension d;
    int dff = a.dff();
    if (dff <= 1) {
        d.empty = true;
        return d;
    }
    d.dim = dff - 2;
    return d;
}

// ---------------------------------------------------------------------------
// the single-component retraction for free groups

namespace {

NormalWord rank_one_of(const Subgroup& h) {
    KuroshData k = h.graph.kurosh();
    if (k.free_basis.empty()) throw Error("retract: component has no free basis element");
    return k.free_basis[0];
}

FreeFactorSystem single(const ContextPtr& ctx, const NormalWord& w) {
    return FreeFactorSystem::from_components(ctx, {Subgroup::generated(ctx, {w})});
}

FreeFactorSystem single(const ContextPtr& ctx, const Subgroup& h) {
    return FreeFactorSystem::from_components(ctx, {h});
}

} // namespace

FreeFactorSystem retract_to_single(const FreeFactorSystem& b) {
    if (b.ctx->n_atoms() != 0 || b.ctx->grushko_free_rank() < 3)
        throw Error("retract: requires a free group of rank at least 3");
    if (b.size() == 0) throw Error("retract: empty system has no component");
    return single(b.ctx, b.components[0]);
}

RetractStep retract_edge(const FreeFactorSystem& b, const FreeFactorSystem& bprime) {
    const ContextPtr& ctx = b.ctx;
    if (ctx->n_atoms() != 0 || ctx->grushko_free_rank() < 3)
        throw Error("retract: requires a free group of rank at least 3");
    auto m = extends_to(b, bprime);
    if (!m) throw Error("retract: systems are not nested");
    FreeFactorSystem ra = retract_to_single(b);
    FreeFactorSystem rb = retract_to_single(bprime);
    // the component of b' containing the chosen component of b
    Subgroup adouble = bprime.components[m->assignment[0]];
    RetractStep step;
    step.path.push_back(ra);
    FreeFactorSystem sa2 = single(ctx, adouble);
    if (!ffs_equal(ra, sa2)) step.path.push_back(sa2);
    if (!ffs_equal(sa2, rb)) {
        // bridge through rank-one pieces
        NormalWord bp = rank_one_of(rb.components[0]);
        NormalWord bpp = rank_one_of(adouble);
        FreeFactorSystem sb = single(ctx, bp);
        FreeFactorSystem sbb = single(ctx, bpp);
        FreeFactorSystem mid = FreeFactorSystem::from_components(
            ctx, {Subgroup::generated(ctx, {bp, bpp})});
        if (!ffs_equal(rb, sb)) step.path.push_back(rb); // keep rb adjacent at the end
        // assemble: ... sa2 >= sbb <= mid >= sb <= rb
        step.path.clear();
        step.path.push_back(ra);
        if (!ffs_equal(ra, sa2)) step.path.push_back(sa2);
        step.path.push_back(sbb);
        step.path.push_back(mid);
        step.path.push_back(sb);
        step.path.push_back(rb);
    }
    if (step.path.size() > 6) throw Error("retract: path too long");
    return step;
}

} // namespace fsc
