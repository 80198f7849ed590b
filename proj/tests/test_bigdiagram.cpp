#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bigdiagram.hpp"

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }

SplittingPtr rose2(const ContextPtr& ctx, const char* w1, const char* w2) {
    auto a = FreeFactorSystem::make(ctx, {}, {parse_word(ctx, w1), parse_word(ctx, w2)});
    return share(splitting_for(a));
}

MapSequence fold_path(const ContextPtr& ctx, const char* w1, const char* w2) {
    auto s = rose2(ctx, "x1", "x2");
    auto t = rose2(ctx, w1, w2);
    auto r = make_foldable_contained(s, t);
    return MapSequence::from_folds(factor_into_folds(r.f));
}

} // namespace

TEST_CASE("simplicial isomorphism of equal splittings") {
    auto ctx = f2();
    auto r1 = rose2(ctx, "x1", "x2");
    auto r2 = rose2(ctx, "x2", "x1");
    auto iso = simplicial_iso(r1, r2);
    REQUIRE(iso.has_value());
    iso->verify();
    auto back = invert_iso(*iso);
    back.verify();
    SplittingMap round = compose(*iso, back);
    CHECK(maps_equal(round, identity_map(r1)));
}

TEST_CASE("connect produces verified prefix and folds") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    auto s = rose2(ctx, "x1", "x2");
    SUBCASE("to itself") {
        Connection c = connect(s, s, empty);
        CHECK(c.prefix_moves <= 2);
        CHECK(c.folds.records.empty());
    }
    SUBCASE("to a different rose") {
        auto t = rose2(ctx, "x1", "x1 x2");
        Connection c = connect(s, t, empty);
        CHECK(c.prefix_moves <= 2);
        CHECK(!c.folds.terms.empty());
    }
    SUBCASE("from a loop type splitting (expansion needed)") {
        auto loop = share(collapse(*s, {{0, 0}}).result);
        Connection c = connect(loop, s, empty);
        CHECK(c.prefix_moves >= 1);
    }
}

TEST_CASE("projection diagram of a path term is trivial") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    MapSequence path = fold_path(ctx, "x1", "x1 x2");
    int K = path.length();
    for (int i = 0; i <= K; ++i) {
        ProjectionDiagram d = build_projection_diagram(path.terms[i], path, empty);
        CHECK(d.depth >= i);
        CHECK(verify_projection_diagram(d));
    }
}

TEST_CASE("projection diagram of a collapse above the path end") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    MapSequence path = fold_path(ctx, "x1", "x1 x2");
    int K = path.length();
    // t: collapse of the last term
    auto subs = natural_subgraphs(*path.terms[K]);
    auto t = share(collapse(*path.terms[K], subs[0]).result);
    ProjectionDiagram d = build_projection_diagram(t, path, empty);
    CHECK(d.depth == K);
    CHECK(verify_projection_diagram(d));
    // augmentation round trip
    AugmentedProjectionDiagram ad = augment(d);
    CHECK(maps_equal(ad.tail_folds.composite(0, static_cast<int>(ad.tail_folds.maps.size())),
                     d.tail));
}

TEST_CASE("big diagram with an empty zigzag returns the input") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    MapSequence path = fold_path(ctx, "x1", "x1 x2");
    ProjectionDiagram d = build_projection_diagram(path.terms[path.length()], path, empty);
    BigDiagram bd(path, d, empty);
    auto res = bd.run();
    CHECK(!res.shortenable);
    CHECK(verify_projection_diagram(res.final_diagram));
    CHECK(res.final_diagram.depth == d.depth);
}

TEST_CASE("shortenable zigzag is detected") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    // build a long-ish fold path
    MapSequence path = fold_path(ctx, "x1 x2", "x2 x1 x2");
    SplittingPtr T = path.terms[path.length()];
    ProjectionDiagram d = build_projection_diagram(T, path, empty);
    BigDiagram bd(path, d, empty);
    // collapse a forest and expand the very same forest back: D = 4 shape
    // with a corrugation whose rho = beta, so rho union beta is not all of T
    auto subs = natural_subgraphs(*T);
    REQUIRE(!subs.empty());
    bd.move_down(subs[0]);
    SplittingPtr low = bd.current_end();
    // expansion back: rebuild T over the collapse
    Expansion ex;
    {
        // reuse the cover machinery: expand low to the vertex system of T
        ex = expand_to_system(low, T->vertex_system());
    }
    bd.move_up(ex.expanded, ex.collapse_map, ex.blown);
    bd.move_down(ex.blown); // collapse the blown forest again: shortenable
    auto res = bd.run();
    CHECK(res.shortenable);
}

TEST_CASE("coarse retract probe on path terms") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    MapSequence path = fold_path(ctx, "x1", "x1 x2 x1");
    for (int i = 0; i <= path.length(); ++i) {
        RetractProbe p = coarse_retract_probe(path, i, empty);
        CHECK(p.witness_depth >= i);
        int bound = 6 * empty.corank() + 4 * empty.size() - 6;
        CHECK(p.unit_gap <= std::max(bound, 0));
    }
}
