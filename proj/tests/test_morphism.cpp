#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "morphism.hpp"

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }
ContextPtr z2_star_z() { return GroupContext::make({AtomSpec::finite_cyclic(2)}, 1); }

SplittingPtr rose2(const ContextPtr& ctx, const char* w1, const char* w2) {
    auto a = FreeFactorSystem::make(ctx, {}, {parse_word(ctx, w1), parse_word(ctx, w2)});
    return share(splitting_for(a));
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

} // namespace

TEST_CASE("identity map has singleton gates") {
    auto ctx = f2();
    auto rose = rose2(ctx, "x1", "x2");
    auto id = identity_map(rose);
    id.verify();
    CHECK(foldable(id));
    Gates g = gates(id, 0);
    CHECK(g.classes.size() == 4); // two petals, two germs each
}

TEST_CASE("nontrivial stabilizer vertices always have two gates") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3)}, 0);
    std::vector<Subgroup> comps;
    for (int i = 0; i < 2; ++i) comps.push_back(Subgroup::generated(ctx, {gen_atom(ctx, i, AtomEl{1, {}})}));
    auto s = share(splitting_for(FreeFactorSystem::from_components(ctx, comps)));
    auto id = identity_map(s);
    for (size_t v = 0; v < s->verts.size(); ++v) {
        if (!s->verts[v].group) continue;
        CHECK(gates(id, static_cast<int>(v)).at_least_two);
    }
}

TEST_CASE("make_foldable with equal source and target") {
    auto ctx = f2();
    auto rose = rose2(ctx, "x1", "x2");
    auto r = make_foldable_contained(rose, rose);
    CHECK(foldable(r.f));
    auto seq = factor_into_folds(r.f);
    CHECK(seq.records.empty());
}

TEST_CASE("rose to rose map folds once") {
    auto ctx = f2();
    auto s = rose2(ctx, "x1", "x2");
    auto t = rose2(ctx, "x1", "x1 x2");
    auto r = make_foldable_contained(s, t);
    REQUIRE(foldable(r.f));
    auto seq = factor_into_folds(r.f);
    CHECK(!seq.records.empty());
    // recomposition reproduces the foldable map
    SplittingMap comp = seq.composite(0, static_cast<int>(seq.maps.size()));
    CHECK(maps_equal(comp, r.f));
    // vertex systems are nested along the sequence
    for (size_t i = 0; i + 1 < seq.terms.size(); ++i)
        CHECK(extends_to(seq.terms[i]->vertex_system(), seq.terms[i + 1]->vertex_system()).has_value());
    // every intermediate composite is foldable
    for (size_t i = 0; i < seq.maps.size(); ++i)
        for (size_t j = i; j <= seq.maps.size(); ++j)
            CHECK(foldable(seq.composite(static_cast<int>(i), static_cast<int>(j))));
}

TEST_CASE("classification of an IA fold on the rose") {
    auto ctx = f2();
    MarkedSplitting rose = *rose2(ctx, "x1", "x2");
    // fold the two outgoing petal half-germs
    subdivide_edge(rose, 0, 2);
    subdivide_edge(rose, 1, 2);
    Direction d1{0, 0, identity(ctx)}, d2{1, 0, identity(ctx)};
    CHECK(classify_fold(rose, 0, d1, d2) == FoldType::IA);
    auto fr = apply_fold(rose, 0, d1, d2);
    CHECK(fr.surgery.result.validate_report().empty());
    CHECK(fr.surgery.result.vertex_system().size() == 0); // F unchanged
    // theta-like result: segment v-w plus two edges from w back to v
    NaturalCensus c = natural_census(fr.surgery.result);
    CHECK(c.natural_vertices == 2);
    CHECK(c.natural_edges == 3);
    // same orbit directions are rejected
    CHECK_THROWS_AS(classify_fold(rose, 0, d1, d1), Error);
}

TEST_CASE("IA fold merging two atom leaves") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3)}, 1);
    std::vector<Subgroup> comps;
    for (int i = 0; i < 2; ++i) comps.push_back(Subgroup::generated(ctx, {gen_atom(ctx, i, AtomEl{1, {}})}));
    auto s = splitting_for(FreeFactorSystem::from_components(ctx, comps));
    // the two lollipop stems leave the base vertex
    std::vector<Direction> stems;
    for (size_t e = 0; e < s.edges.size(); ++e)
        if (s.edges[e].from == s.base && s.verts[s.edges[e].to].group)
            stems.push_back(Direction{static_cast<int>(e), 0, identity(ctx)});
    REQUIRE(stems.size() == 2);
    CHECK(classify_fold(s, s.base, stems[0], stems[1]) == FoldType::IA);
    auto fr = apply_fold(s, s.base, stems[0], stems[1]);
    auto f = fr.surgery.result.vertex_system();
    REQUIRE(f.size() == 1);
    CHECK(f.components[0].contains(parse_word(ctx, "a1")));
    CHECK(f.components[0].contains(parse_word(ctx, "a2")));
}

TEST_CASE("IIIA fold takes the loop type to the edge type") {
    auto ctx = z2_star_z();
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    auto sys = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto lolli = splitting_for(sys);
    auto loop = collapse(lolli, {{1, 0}}).result; // loop type: A vertex + z loop
    REQUIRE(loop.edges.size() == 1);
    Direction d1{0, 0, identity(ctx)};
    Direction d2{0, 1, parse_word(ctx, "a1")};
    CHECK(classify_fold(loop, 0, d1, d2) == FoldType::IIIA);
    auto fr = apply_fold(loop, 0, d1, d2);
    CHECK(fr.type == FoldType::IIIA);
    const auto& t = fr.surgery.result;
    CHECK(t.validate_report().empty());
    auto f = t.vertex_system();
    CHECK(f.size() == 2); // gained an infinite cyclic component
    NaturalCensus c = natural_census(t);
    CHECK(c.natural_edges == 1);
    CHECK(c.natural_vertices == 2);
}

TEST_CASE("factoring the loop-to-edge map ends with a IIIA fold") {
    auto ctx = z2_star_z();
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    auto sys = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto lolli = splitting_for(sys);
    auto loop = share(collapse(lolli, {{1, 0}}).result);
    // edge type for the same realization: collapse the lollipop loop
    auto edge = share(collapse(lolli, {{0, 0}}).result);
    auto r = make_foldable_contained(loop, edge);
    auto seq = factor_into_folds(r.f);
    REQUIRE(!seq.records.empty());
    CHECK(seq.records.back().type == FoldType::IIIA);
    for (size_t i = 0; i + 1 < seq.records.size(); ++i)
        CHECK(seq.records[i].type == FoldType::IA);
}

TEST_CASE("fold distance witness") {
    auto ctx = f2();
    MarkedSplitting rose = *rose2(ctx, "x1", "x2");
    subdivide_edge(rose, 0, 2);
    subdivide_edge(rose, 1, 2);
    Direction d1{0, 0, identity(ctx)}, d2{1, 0, identity(ctx)};
    auto fr = apply_fold(rose, 0, d1, d2);
    auto w = fold_distance_witness(fr);
    CHECK(w.path.size() <= 3);
    CHECK(w.path.size() >= 2);
    // arrows alternate expansion/collapse as recorded
    if (w.path.size() == 3) {
        CHECK(w.rel[0] == +1);
        CHECK(w.rel[1] == -1);
    }
}

TEST_CASE("fold witness for the IIIA loop fold") {
    auto ctx = z2_star_z();
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    auto sys = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto lolli = splitting_for(sys);
    auto loop = collapse(lolli, {{1, 0}}).result;
    auto fr = apply_fold(loop, 0, Direction{0, 0, identity(ctx)}, Direction{0, 1, parse_word(ctx, "a1")});
    auto w = fold_distance_witness(fr);
    CHECK(w.path.size() >= 2);
}

TEST_CASE("surgery map of a collapse verifies") {
    auto ctx = f2();
    auto rose = rose2(ctx, "x1", "x2");
    auto sur = collapse(*rose, {{0, 0}});
    auto tgt = share(sur.result);
    auto cm = surgery_map(rose, sur, tgt);
    CHECK(!cm.injective_on_edgelets());
    CHECK(cm.constant_count() == 1);
}
