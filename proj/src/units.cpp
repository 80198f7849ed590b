#include "units.hpp"

#include <algorithm>
#include <map>

namespace fsc {

int b1_constant(const FreeFactorSystem& a) { return 5 * a.corank() + 4 * a.size() - 3; }

namespace {

int quotient_components(const MarkedSplitting& t, const std::set<QEdgelet>& beta) {
    WorkingView W(t);
    std::vector<int> uf(W.nW);
    for (int i = 0; i < W.nW; ++i) uf[i] = i;
    std::function<int(int)> find = [&](int x) {
        while (uf[x] != x) x = uf[x] = uf[uf[x]];
        return x;
    };
    for (auto [e, i] : beta) {
        int a = find(W.src(e, i)), b = find(W.tgt(e, i));
        if (a != b) uf[std::max(a, b)] = std::min(a, b);
    }
    std::set<int> reps;
    for (auto [e, i] : beta) reps.insert(find(W.src(e, i)));
    return static_cast<int>(reps.size());
}

} // namespace

ComplexityProfile complexity(const MarkedSplitting& t, const std::set<QEdgelet>& beta,
                             const FreeFactorSystem& a) {
    if (beta.empty()) throw Error("complexity: empty subgraph");
    Surgery sur = collapse(t, beta); // throws when beta is improper
    const MarkedSplitting& q = sur.result;
    FreeFactorSystem f = q.vertex_system();

    ComplexityProfile p;
    p.c1 = quotient_components(t, beta);
    p.c2 = f.dff() - 1;

    // vertices of the quotient that came from collapsed components
    std::set<int> comp_verts;
    for (auto el : beta) {
        const Surgery::EdgeletRec& r = sur.edgelet_rec[el.first][el.second];
        if (r.edge < 0 && r.cpt.at_vertex) comp_verts.insert(r.cpt.cell);
    }

    // C3: components of a that stabilize a vertex outside beta
    for (const auto& comp : a.components) {
        bool placed = false;
        for (size_t v = 0; v < q.verts.size() && !placed; ++v) {
            if (!q.verts[v].group) continue;
            if (conjugate_into(comp, *q.verts[v].group)) {
                placed = true;
                if (!comp_verts.count(static_cast<int>(v))) p.c3++;
            }
        }
        if (!placed) throw Error("complexity: splitting is not relative to the system");
    }

    // C4: corank of F(T/beta) plus the ranks of kept vertex groups that do
    // not contain a component of a
    p.c4 = f.corank();
    for (size_t v = 0; v < q.verts.size(); ++v) {
        if (!q.verts[v].group || comp_verts.count(static_cast<int>(v))) continue;
        bool has_a = false;
        for (const auto& comp : a.components)
            if (conjugate_into(comp, *q.verts[v].group)) { has_a = true; break; }
        if (!has_a) p.c4 += abstract_free_rank(*q.verts[v].group);
    }
    return p;
}

std::vector<std::set<QEdgelet>> pullback_sequence(const MapSequence& seq,
                                                  const std::set<QEdgelet>& beta_K) {
    int K = seq.length();
    std::vector<std::set<QEdgelet>> betas(K + 1);
    betas[K] = beta_K;
    for (int k = K - 1; k >= 0; --k) betas[k] = pullback(seq.maps[k], betas[k + 1]);
    return betas;
}

std::vector<ComplexityProfile> profile_sequence(const MapSequence& seq,
                                                const std::set<QEdgelet>& beta_K,
                                                const FreeFactorSystem& a) {
    auto betas = pullback_sequence(seq, beta_K);
    std::vector<ComplexityProfile> out;
    for (int k = 0; k <= seq.length(); ++k) out.push_back(complexity(*seq.terms[k], betas[k], a));
    return out;
}

bool components_biject(const MarkedSplitting& s, const std::set<QEdgelet>& beta_s,
                       const MarkedSplitting& t, const std::set<QEdgelet>& beta_t) {
    return quotient_components(s, beta_s) == quotient_components(t, beta_t);
}

// ---------------------------------------------------------------------------
// blue-red witness

namespace {

// forward a blue set through a fold's records
std::set<QEdgelet> push_through(const Surgery& sur, const std::set<QEdgelet>& blue) {
    std::set<QEdgelet> out;
    for (auto el : blue) {
        const Surgery::EdgeletRec& r = sur.edgelet_rec[el.first][el.second];
        if (r.edge >= 0) out.insert({r.edge, r.idx});
    }
    return out;
}

std::optional<FoldPair> find_fold_pair_in(const SplittingMap& f, const std::set<QEdgelet>& allow) {
    const MarkedSplitting& s = *f.src;
    for (size_t v = 0; v < s.verts.size(); ++v) {
        std::vector<Direction> germs = germs_at(s, static_cast<int>(v));
        std::vector<EdgeletImage> imgs;
        std::vector<TreeEdgelet> lifts;
        for (const Direction& d : germs) {
            lifts.push_back(direction_edgelet(s, static_cast<int>(v), d));
            imgs.push_back(f.apply_edgelet(lifts.back()));
        }
        for (size_t i = 0; i < germs.size(); ++i)
            for (size_t j = i + 1; j < germs.size(); ++j) {
                if (imgs[i].constant || imgs[j].constant) continue;
                if (!allow.count({lifts[i].edge, lifts[i].idx}) ||
                    !allow.count({lifts[j].edge, lifts[j].idx}))
                    continue;
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

} // namespace

Zigzag blue_red_witness(const MapSequence& seq, int i, int j, const std::set<QEdgelet>& beta_j,
                        const FreeFactorSystem& a) {
    Zigzag z;
    if (i == j) {
        z.path = {seq.terms[i]};
        return z;
    }
    auto betas = pullback_sequence(seq, beta_j.empty() ? std::set<QEdgelet>{} : beta_j);
    // sanity: constant complexity over the stretch
    if (!beta_j.empty()) {
        auto p0 = complexity(*seq.terms[i], betas[i], a);
        auto p1 = complexity(*seq.terms[j], betas[j], a);
        if (!(p0 == p1)) throw Error("blue_red_witness: complexity is not constant");
    }
    SplittingMap f = seq.composite(i, j);
    SplittingPtr cur = seq.terms[i];
    std::set<QEdgelet> blue = betas[i];
    std::set<QEdgelet> blue0 = blue;
    SplittingPtr u0 = cur;

    // phase 1: fold blue pairs only
    int fuel = 500;
    while (fuel-- > 0) {
        auto p = find_fold_pair_in(f, blue);
        if (!p) break;
        FoldRecord fr = apply_fold(*cur, p->vertex, p->d1, p->d2);
        if (fr.folded_src->total_edgelets() != cur->total_edgelets())
            throw Error("blue_red_witness: unexpected subdivision");
        SplittingPtr ns = share(fr.surgery.result);
        f = induce_map(fr.surgery, ns, f);
        blue = push_through(fr.surgery, blue);
        cur = ns;
    }
    SplittingPtr uP = cur;
    std::set<QEdgelet> blueP = blue;
    // phase 2: remaining folds (red only; mixed pairs cannot share a gate)
    while (fuel-- > 0) {
        auto p = find_fold_pair(f);
        if (!p) break;
        FoldRecord fr = apply_fold(*cur, p->vertex, p->d1, p->d2);
        SplittingPtr ns = share(fr.surgery.result);
        f = induce_map(fr.surgery, ns, f);
        blue = push_through(fr.surgery, blue);
        cur = ns;
    }
    SplittingPtr uQ = cur;
    std::set<QEdgelet> blueQ = blue;
    if (fuel <= 0) throw Error("blue_red_witness: folding did not terminate");

    auto redset = [](const MarkedSplitting& s, const std::set<QEdgelet>& b) {
        std::set<QEdgelet> r;
        for (auto el : all_edgelets(s))
            if (!b.count(el)) r.insert(el);
        return r;
    };

    z.path.push_back(u0);
    // X: collapse the blue part of U_0 (equivalently of U_P)
    if (!blue0.empty() && blue0 != all_edgelets(*u0)) {
        SplittingPtr x = share(collapse(*u0, blue0).result);
        z.path.push_back(x);
        z.rel.push_back(-1);
        z.path.push_back(uP);
        z.rel.push_back(+1);
    } else if (uP.get() != u0.get()) {
        z.path.push_back(uP);
        z.rel.push_back(+1); // degenerate: no blue to collapse
    }
    // Y: collapse the red part of U_P (equivalently of U_Q)
    std::set<QEdgelet> redP = redset(*uP, blueP);
    if (!redP.empty() && redP != all_edgelets(*uP)) {
        SplittingPtr y = share(collapse(*uP, redP).result);
        z.path.push_back(y);
        z.rel.push_back(-1);
        z.path.push_back(uQ);
        z.rel.push_back(+1);
    } else if (uQ.get() != uP.get()) {
        z.path.push_back(uQ);
        z.rel.push_back(+1);
    }
    if (static_cast<int>(z.rel.size()) > 4) throw Error("blue_red_witness: path too long");
    (void)blueQ;
    return z;
}

// ---------------------------------------------------------------------------
// free splitting units

namespace {

std::vector<std::set<QEdgelet>> unit_seeds(const MarkedSplitting& s, int budget) {
    std::vector<std::set<QEdgelet>> seeds = natural_subgraphs(s);
    // single-edgelet orbits after subdivision boundaries
    for (size_t e = 0; e < s.edges.size(); ++e)
        for (int i = 0; i < s.edges[e].edgelets; ++i)
            seeds.push_back({{static_cast<int>(e), i}});
    if (static_cast<int>(seeds.size()) > budget) seeds.resize(budget);
    return seeds;
}

} // namespace

UnitSearch lt_one_unit(const MapSequence& seq, int i, int j, const FreeFactorSystem& a,
                       int budget) {
    UnitSearch out;
    if (i > j) std::swap(i, j);
    if (i == j) {
        out.result = UnitSearch::Result::Certified;
        out.cert.trivial_diagram = true;
        auto seeds = unit_seeds(*seq.terms[j], budget);
        if (!seeds.empty()) {
            out.cert.seed = seeds.front();
            out.cert.profiles = {complexity(*seq.terms[j], seeds.front(), a)};
        }
        return out;
    }
    MapSequence sub;
    sub.terms.assign(seq.terms.begin() + i, seq.terms.begin() + j + 1);
    sub.maps.assign(seq.maps.begin() + i, seq.maps.begin() + j);

    int tried = 0;
    for (const auto& seed : unit_seeds(*sub.terms[sub.length()], budget)) {
        if (++tried > budget) break;
        try {
            auto profiles = profile_sequence(sub, seed, a);
            bool constant = true;
            for (size_t k = 1; k < profiles.size(); ++k)
                if (!(profiles[k] == profiles[0])) constant = false;
            if (constant) {
                out.result = UnitSearch::Result::Certified;
                out.cert.trivial_diagram = true;
                out.cert.seed = seed;
                out.cert.profiles = profiles;
                return out;
            }
        } catch (const Error&) {
        }
    }
    // bounded nontrivial diagrams: collapse a natural forest on the right,
    // comb it across, and look for constant complexity on the collapsed row
    int extra = 0;
    for (const auto& sigma : natural_subgraphs(*sub.terms[sub.length()])) {
        if (++extra > 4) break;
        try {
            CombingRectangle r = comb_by_collapse(sub, sigma);
            for (const auto& seed : unit_seeds(*r.bottom.terms[r.bottom.length()], budget / 4 + 1)) {
                auto profiles = profile_sequence(r.bottom, seed, a);
                bool constant = true;
                for (size_t k = 1; k < profiles.size(); ++k)
                    if (!(profiles[k] == profiles[0])) constant = false;
                if (constant) {
                    out.result = UnitSearch::Result::Certified;
                    out.cert.trivial_diagram = false;
                    out.cert.seed = seed;
                    out.cert.profiles = profiles;
                    out.cert.right_forest = sigma;
                    return out;
                }
            }
        } catch (const Error&) {
        }
    }
    out.result = UnitSearch::Result::Unknown;
    return out;
}

UnitCount unit_count(const MapSequence& seq, int i, int j, const FreeFactorSystem& a, int budget) {
    UnitCount out;
    if (i > j) std::swap(i, j);
    std::map<std::pair<int, int>, bool> lt1; // certified < 1 unit
    auto less_than_one = [&](int x, int y) {
        if (x > y) std::swap(x, y);
        auto it = lt1.find({x, y});
        if (it != lt1.end()) return it->second;
        UnitSearch s = lt_one_unit(seq, x, y, a, budget);
        bool v = s.result == UnitSearch::Result::Certified;
        if (!v) out.policy_overcount = true;
        lt1[{x, y}] = v;
        return v;
    };
    // front greedy
    out.front_greedy = {i};
    int cur = i;
    while (true) {
        int next = -1;
        for (int k = cur + 1; k <= j; ++k)
            if (!less_than_one(cur, k)) { next = k; break; }
        if (next < 0) break;
        out.front_greedy.push_back(next);
        cur = next;
    }
    // back greedy
    out.back_greedy = {j};
    cur = j;
    while (true) {
        int next = -1;
        for (int k = cur - 1; k >= i; --k)
            if (!less_than_one(k, cur)) { next = k; break; }
        if (next < 0) break;
        out.back_greedy.push_back(next);
        cur = next;
    }
    out.upsilon = static_cast<int>(out.front_greedy.size()) - 1;
    return out;
}

} // namespace fsc
