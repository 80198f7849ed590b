#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cover.hpp"

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }
ContextPtr z2_star_z() { return GroupContext::make({AtomSpec::finite_cyclic(2)}, 1); }

SplittingPtr rose(const ContextPtr& ctx) {
    return share(splitting_for(FreeFactorSystem::empty_system(ctx)));
}

} // namespace

TEST_CASE("cover of a cyclic subgroup over the rose is a circle") {
    auto ctx = f2();
    auto amb = rose(ctx);
    auto p = Subgroup::generated(ctx, {parse_word(ctx, "x1")});
    auto cg = cover_core(amb, p, amb->base, identity(ctx));
    CHECK(cg.nodes.size() == 1);
    CHECK(cg.edges.size() == 1);
    CHECK(!cg.nodes[0].stab.has_value()); // vertex stabilizer trivial on the axis
}

TEST_CASE("cover of a rank-two subgroup") {
    auto ctx = f2();
    auto amb = rose(ctx);
    auto p = Subgroup::generated(ctx, {parse_word(ctx, "x1"), parse_word(ctx, "x2 x1 x2^-1")});
    auto cg = cover_core(amb, p, amb->base, identity(ctx));
    // core: two loops joined by an arc (the conjugate pulls in a path)
    CHECK(cg.edges.size() >= 3);
    int betti = static_cast<int>(cg.edges.size()) - static_cast<int>(cg.nodes.size()) + 1;
    CHECK(betti == 2);
}

TEST_CASE("expanding the edge splitting of <a>*<b> to the empty system gives a barbell") {
    auto ctx = f2();
    // edge splitting: collapse both petals of the barbell, or build via systems
    std::vector<Subgroup> comps{Subgroup::generated(ctx, {parse_word(ctx, "x1")}),
                                Subgroup::generated(ctx, {parse_word(ctx, "x2")})};
    auto sys = FreeFactorSystem::from_components(ctx, comps);
    auto t = share(splitting_for(sys)); // one natural edge after censusing
    auto empty = FreeFactorSystem::empty_system(ctx);
    Expansion ex = expand_to_system(t, empty);
    const MarkedSplitting& u = *ex.expanded;
    CHECK(u.validate_report().empty());
    CHECK(u.vertex_system().size() == 0);
    NaturalCensus c = natural_census(u);
    CHECK(c.natural_edges == 3); // two circles and the bar
    CHECK(c.natural_vertices == 2);
    ex.collapse_map.verify();
    CHECK(!ex.blown.empty());
}

TEST_CASE("expanding the edge type of A*Z gives the sewing needle") {
    auto ctx = z2_star_z();
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    auto sys = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto lolli = splitting_for(sys);
    auto edge = share(collapse(lolli, {{0, 0}}).result); // edge type: A --- <z>
    Expansion ex = expand_to_system(edge, sys);
    const MarkedSplitting& u = *ex.expanded;
    CHECK(u.validate_report().empty());
    auto f = u.vertex_system();
    REQUIRE(f.size() == 1);
    CHECK(conjugate_subgroups(f.components[0], A));
    NaturalCensus c = natural_census(u);
    CHECK(c.natural_edges == 2); // the stem and the loop
    CHECK(c.natural_vertices == 2);
}

TEST_CASE("expansion is trivial when the system already matches") {
    auto ctx = z2_star_z();
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    auto sys = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto t = share(splitting_for(sys));
    Expansion ex = expand_to_system(t, sys);
    CHECK(ex.blown.empty());
    CHECK(equivalent(*ex.expanded, *t).has_value());
}

TEST_CASE("generic resolution of one-edge splittings") {
    auto ctx = z2_star_z();
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    auto sys = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto lolli = splitting_for(sys);
    SUBCASE("loop type resolves to the sewing needle") {
        auto loop = share(collapse(lolli, {{1, 0}}).result);
        Expansion ex = generic_resolution(loop, sys);
        CHECK(is_generic(*ex.expanded, sys));
        ex.collapse_map.verify();
        NaturalCensus c = natural_census(*ex.expanded);
        CHECK(c.natural_edges == 2);
    }
    SUBCASE("edge type resolves to the sewing needle") {
        auto edge = share(collapse(lolli, {{0, 0}}).result);
        Expansion ex = generic_resolution(edge, sys);
        CHECK(is_generic(*ex.expanded, sys));
    }
}

TEST_CASE("generic resolution in the free case") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    auto r = rose(ctx);
    Expansion ex = generic_resolution(r, empty);
    CHECK(is_generic(*ex.expanded, empty));
    // a generic splitting for F2 has 3 natural edges (theta or barbell)
    NaturalCensus c = natural_census(*ex.expanded);
    CHECK(c.natural_edges == 3);
    ex.collapse_map.verify();
}

TEST_CASE("make_foldable expands when vertex systems are incomparable") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    // S: loop type with F = {<a>}; T: the rose with F = {}
    auto r = rose(ctx);
    auto sur = collapse(*r, {{0, 0}});
    auto loop = share(sur.result);
    auto res = make_foldable(loop, r, empty);
    CHECK(foldable(res.f));
    CHECK(res.sprime.get() != loop.get()); // an expansion happened
    auto seq = factor_into_folds(res.f);
    CHECK(seq.terms.size() >= 2);
}
