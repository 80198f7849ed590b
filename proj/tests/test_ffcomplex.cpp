#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ffcomplex.hpp"

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }
ContextPtr f3() { return GroupContext::make({}, 3); }
ContextPtr atoms3() {
    return GroupContext::make(
        {AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3), AtomSpec::finite_cyclic(5)}, 0);
}

FreeFactorSystem atom_sys(const ContextPtr& ctx) {
    std::vector<Subgroup> cs;
    for (int i = 0; i < ctx->n_atoms(); ++i)
        cs.push_back(Subgroup::generated(ctx, {gen_atom(ctx, i, AtomEl{1, {}})}));
    return FreeFactorSystem::from_components(ctx, std::move(cs));
}

SplittingPtr rose2(const ContextPtr& ctx) {
    return share(splitting_for(FreeFactorSystem::empty_system(ctx)));
}

MarkedSplitting theta(const ContextPtr& ctx) {
    MarkedSplitting s;
    s.ctx = ctx;
    s.verts = {QVertex{}, QVertex{}};
    s.base = 0;
    s.edges.push_back(QEdge{0, 1, identity(ctx), true, 1});
    s.edges.push_back(QEdge{0, 1, parse_word(ctx, "x1^-1"), false, 1});
    s.edges.push_back(QEdge{0, 1, parse_word(ctx, "x2^-1"), false, 1});
    GogPath p1;
    p1.start = 0;
    p1.items = {GogItem::step(0, 1), GogItem::step(1, -1)};
    GogPath p2;
    p2.start = 0;
    p2.items = {GogItem::step(0, 1), GogItem::step(2, -1)};
    s.letter_seeds = {p1, p2};
    s.check();
    return s;
}

} // namespace

TEST_CASE("core pruning") {
    auto ctx = atoms3();
    auto t = share(splitting_for(atom_sys(ctx))); // tripod with three atom leaves
    NaturalCensus c = natural_census(*t);
    REQUIRE(c.natural_edges == 3);
    CoreGraph g;
    g.owner = t;
    g.chains = {0, 1, 2};
    CHECK(is_core_graph(g));
    CoreGraph sub;
    sub.owner = t;
    sub.chains = {0};
    // a single tripod arm has one trivial endpoint only when the center is
    // trivial; its core keeps the arm exactly when both ends are groups
    CoreGraph pruned = core(sub);
    CHECK(is_core_graph(pruned));
}

TEST_CASE("pi set of the rose") {
    auto ctx = f2();
    auto rose = rose2(ctx);
    auto empty = FreeFactorSystem::empty_system(ctx);
    auto ps = pi_set(rose, empty);
    REQUIRE(ps.size() == 2);
    auto a = FreeFactorSystem::from_components(ctx, {Subgroup::generated(ctx, {parse_word(ctx, "x1")})});
    auto b = FreeFactorSystem::from_components(ctx, {Subgroup::generated(ctx, {parse_word(ctx, "x2")})});
    CHECK((ffs_equal(ps[0], a) || ffs_equal(ps[0], b)));
    CHECK((ffs_equal(ps[1], a) || ffs_equal(ps[1], b)));
    CHECK(!ffs_equal(ps[0], ps[1]));
}

TEST_CASE("pi set of the atom tripod") {
    auto ctx = atoms3();
    auto sys = atom_sys(ctx);
    auto t = share(splitting_for(sys));
    auto ps = pi_set(t, sys);
    // three systems {[A_i * A_j], [A_k]}
    CHECK(ps.size() == 3);
    for (const auto& p : ps) CHECK(p.size() == 2);
}

TEST_CASE("pi monotone under collapse") {
    auto ctx = f2();
    auto s = share(theta(ctx));
    auto empty = FreeFactorSystem::empty_system(ctx);
    auto ps_s = pi_set(s, empty);
    for (const auto& sigma : natural_subgraphs(*s)) {
        auto low = share(collapse(*s, sigma).result);
        std::vector<FreeFactorSystem> ps_low;
        try {
            ps_low = pi_set(low, empty);
        } catch (const Error&) {
            continue;
        }
        for (const auto& x : ps_low) {
            bool found = false;
            for (const auto& y : ps_s)
                if (ffs_equal(x, y)) found = true;
            CHECK(found);
        }
    }
}

TEST_CASE("special projection") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    SUBCASE("uses the vertex system when proper") {
        auto rose = rose2(ctx);
        auto loop = share(collapse(*rose, {{0, 0}}).result); // F = {<x1>}
        auto p = special_projection(loop, empty);
        CHECK(ffs_equal(p, FreeFactorSystem::from_components(
                               ctx, {Subgroup::generated(ctx, {parse_word(ctx, "x1")})})));
    }
    SUBCASE("deterministic tie break otherwise") {
        auto rose = rose2(ctx);
        auto p1 = special_projection(rose, empty);
        auto p2 = special_projection(rose, empty);
        CHECK(ffs_equal(p1, p2));
        CHECK(in_place_t{}, true); // placeholder no-op
    }
}

TEST_CASE("paths in FF from core graphs of the theta") {
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    auto s = share(theta(ctx));
    auto graphs = core_graphs(s, empty);
    REQUIRE(graphs.size() >= 2);
    for (size_t i = 0; i < graphs.size(); ++i)
        for (size_t j = i + 1; j < graphs.size(); ++j) {
            FFPath p = connect_in_ff(s, graphs[i], graphs[j], empty);
            CHECK(p.rel.size() <= 6);
            CHECK(verify_ff_path(p, empty));
        }
}

TEST_CASE("paths in FF over generic splittings with small depth") {
    // D_FF = 3: the free group of rank two
    auto ctx = f2();
    auto empty = FreeFactorSystem::empty_system(ctx);
    REQUIRE(empty.dff() == 3);
    for (auto s : {share(theta(ctx)),
                   generic_resolution(rose2(ctx), empty).expanded}) {
        auto graphs = core_graphs(s, empty);
        for (size_t i = 0; i < graphs.size(); ++i)
            for (size_t j = i + 1; j < graphs.size(); ++j) {
                FFPath p = connect_in_ff(s, graphs[i], graphs[j], empty);
                CHECK(p.rel.size() <= 6);
                CHECK(verify_ff_path(p, empty));
            }
    }
}

TEST_CASE("dimension table") {
    // A1 * A2: empty
    {
        auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3)}, 0);
        CHECK(ff_dimension(atom_sys(ctx)).empty);
    }
    // A * Z: zero dimensional
    {
        auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2)}, 1);
        auto a = FreeFactorSystem::make(ctx, {Subgroup::generated(ctx, {parse_word(ctx, "a1")})},
                                        {parse_word(ctx, "x1")});
        auto d = ff_dimension(a);
        CHECK(!d.empty);
        CHECK(d.dim == 0);
    }
    // A1 * A2 * A3: zero dimensional
    {
        auto d = ff_dimension(atom_sys(atoms3()));
        CHECK(!d.empty);
        CHECK(d.dim == 0);
    }
    // F2: one dimensional
    CHECK(ff_dimension(FreeFactorSystem::empty_system(f2())).dim == 1);
    // four atoms: one dimensional
    {
        auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3),
                                       AtomSpec::finite_cyclic(5), AtomSpec::finite_cyclic(7)},
                                      0);
        CHECK(ff_dimension(atom_sys(ctx)).dim == 1);
    }
    // A1 * A2 * Z: one dimensional
    {
        auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3)}, 1);
        auto a = FreeFactorSystem::from_components(
            ctx, {Subgroup::generated(ctx, {parse_word(ctx, "a1")}),
                  Subgroup::generated(ctx, {parse_word(ctx, "a2")})});
        CHECK(ff_dimension(a).dim == 1);
    }
}

TEST_CASE("retraction onto single component systems") {
    auto ctx = f3();
    SUBCASE("single component is fixed") {
        auto b = FreeFactorSystem::from_components(ctx, {Subgroup::generated(ctx, {parse_word(ctx, "x1")})});
        CHECK(ffs_equal(retract_to_single(b), b));
    }
    SUBCASE("contained pair bridges directly") {
        auto b = FreeFactorSystem::from_components(
            ctx, {Subgroup::generated(ctx, {parse_word(ctx, "x1")}),
                  Subgroup::generated(ctx, {parse_word(ctx, "x2")})});
        auto bp = FreeFactorSystem::from_components(
            ctx, {Subgroup::generated(ctx, {parse_word(ctx, "x1"), parse_word(ctx, "x2")}),
                  Subgroup::generated(ctx, {parse_word(ctx, "x3")})});
        RetractStep st = retract_edge(b, bp);
        CHECK(st.path.size() <= 5);
        for (const auto& sys : st.path) CHECK(sys.size() == 1);
        // consecutive terms are FF-adjacent
        for (size_t k = 0; k + 1 < st.path.size(); ++k) {
            bool adj = proper_extension(st.path[k], st.path[k + 1]) ||
                       proper_extension(st.path[k + 1], st.path[k]);
            CHECK(adj);
        }
    }
}
