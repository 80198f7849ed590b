#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "splitting.hpp"

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }
ContextPtr f3() { return GroupContext::make({}, 3); }
ContextPtr z2_star_z() { return GroupContext::make({AtomSpec::finite_cyclic(2)}, 1); }
ContextPtr two_atoms() {
    return GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3)}, 0);
}

FreeFactorSystem atom_sys(const ContextPtr& ctx) {
    std::vector<Subgroup> cs;
    for (int i = 0; i < ctx->n_atoms(); ++i)
        cs.push_back(Subgroup::generated(ctx, {gen_atom(ctx, i, AtomEl{1, {}})}));
    return FreeFactorSystem::from_components(ctx, std::move(cs));
}

MarkedSplitting barbell_f2() {
    auto ctx = f2();
    MarkedSplitting s;
    s.ctx = ctx;
    s.verts = {QVertex{}, QVertex{}};
    s.base = 0;
    s.edges.push_back(QEdge{0, 0, parse_word(ctx, "x1"), false, 1}); // 0: a loop
    s.edges.push_back(QEdge{0, 1, identity(ctx), true, 1});          // 1: bridge
    s.edges.push_back(QEdge{1, 1, parse_word(ctx, "x2"), false, 1}); // 2: b loop
    GogPath p1;
    p1.start = 0;
    p1.items = {GogItem::step(0, 1)};
    GogPath p2;
    p2.start = 0;
    p2.items = {GogItem::step(1, 1), GogItem::step(2, 1), GogItem::step(1, -1)};
    s.letter_seeds = {p1, p2};
    s.check();
    return s;
}

MarkedSplitting theta_f2() {
    auto ctx = f2();
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

TEST_CASE("rose splitting from the empty system") {
    auto rose = splitting_for(FreeFactorSystem::empty_system(f2()));
    CHECK(rose.verts.size() == 1);
    CHECK(rose.edges.size() == 2);
    CHECK(rose.validate_report().empty());
    CHECK(rose.vertex_system().size() == 0);
}

TEST_CASE("edge splitting of a two-atom product") {
    auto ctx = two_atoms();
    auto s = splitting_for(atom_sys(ctx));
    CHECK(s.validate_report().empty());
    NaturalCensus c = natural_census(s);
    CHECK(c.natural_vertices == 2);
    CHECK(c.natural_edges == 1);
    auto f = s.vertex_system();
    CHECK(f.size() == 2);
    CHECK(ffs_equal(f, atom_sys(ctx)));
}

TEST_CASE("invalid splittings are reported") {
    auto ctx = f2();
    MarkedSplitting s;
    s.ctx = ctx;
    s.verts = {QVertex{}, QVertex{}};
    s.base = 0;
    s.edges.push_back(QEdge{0, 0, parse_word(ctx, "x1"), false, 1});
    s.edges.push_back(QEdge{0, 0, parse_word(ctx, "x2"), false, 1});
    s.edges.push_back(QEdge{0, 1, identity(ctx), true, 1}); // hanging trivial leaf
    auto rep = s.validate_report();
    REQUIRE(!rep.empty());
    CHECK(rep.front().find("valence-1") != std::string::npos);

    // marking that fails to generate
    MarkedSplitting m;
    m.ctx = ctx;
    m.verts = {QVertex{}};
    m.base = 0;
    m.edges.push_back(QEdge{0, 0, parse_word(ctx, "x1"), false, 1});
    m.edges.push_back(QEdge{0, 0, parse_word(ctx, "x1 x2 x1^-1 x2^-1"), false, 1});
    auto rep2 = m.validate_report();
    REQUIRE(!rep2.empty());
    CHECK(rep2.front().find("fold") != std::string::npos);
}

TEST_CASE("navigation round trips") {
    for (auto s : {barbell_f2(), theta_f2()}) {
        for (const auto& g : enumerate_words(s.ctx, 3)) {
            GogPath p = s.nf_loop(g);
            auto [v, off] = s.walk(p, true);
            CHECK(v == s.base);
            CHECK(off == g);
        }
    }
}

TEST_CASE("vertex systems of hand built splittings") {
    CHECK(barbell_f2().vertex_system().size() == 0);
    CHECK(theta_f2().vertex_system().size() == 0);
}

TEST_CASE("collapse of a rose petal is a loop splitting") {
    auto rose = splitting_for(FreeFactorSystem::empty_system(f2()));
    // petal labeled x1
    int petal = -1;
    for (size_t e = 0; e < rose.edges.size(); ++e)
        if (rose.edges[e].label == parse_word(rose.ctx, "x1")) petal = static_cast<int>(e);
    REQUIRE(petal >= 0);
    auto res = collapse(rose, {{petal, 0}});
    const auto& t = res.result;
    CHECK(t.validate_report().empty());
    auto f = t.vertex_system();
    REQUIRE(f.size() == 1);
    CHECK(conjugate_subgroups(f.components[0],
                              Subgroup::generated(rose.ctx, {parse_word(rose.ctx, "x1")})));
}

TEST_CASE("collapsing both barbell circles gives the edge splitting") {
    auto s = barbell_f2();
    auto res = collapse(s, {{0, 0}, {2, 0}});
    const auto& t = res.result;
    CHECK(t.validate_report().empty());
    auto f = t.vertex_system();
    REQUIRE(f.size() == 2);
    NaturalCensus c = natural_census(t);
    CHECK(c.natural_edges == 1);
    CHECK(f.corank() == 0);
}

TEST_CASE("empty collapse naturalizes without changing the splitting") {
    auto s = theta_f2();
    auto res = collapse(s, {});
    CHECK(res.result.validate_report().empty());
    CHECK(equivalent(s, res.result).has_value());
}

TEST_CASE("collapse composition matches union forest") {
    auto s = theta_f2();
    auto r1 = collapse(s, {{1, 0}});
    // image of edge 2 in the collapsed splitting
    auto rec = r1.edgelet_rec[2][0];
    REQUIRE(rec.edge >= 0);
    auto r2 = collapse(r1.result, {{rec.edge, rec.idx}});
    auto direct = collapse(s, {{1, 0}, {2, 0}});
    CHECK(equivalent(r2.result, direct.result).has_value());
}

TEST_CASE("equivalence of roses with permuted markings") {
    auto ctx = f2();
    auto r1 = splitting_for(FreeFactorSystem::empty_system(ctx));
    MarkedSplitting r2 = r1;
    std::swap(r2.edges[0].label, r2.edges[1].label);
    std::swap(r2.letter_seeds[0], r2.letter_seeds[1]);
    // fix seeds: letters now live on swapped petals
    GogPath p1;
    p1.start = 0;
    p1.items = {GogItem::step(1, 1)};
    GogPath p2;
    p2.start = 0;
    p2.items = {GogItem::step(0, 1)};
    r2.letter_seeds = {p1, p2};
    r2.check();
    CHECK(equivalent(r1, r2).has_value());
}

TEST_CASE("theta and rose are inequivalent") {
    auto rose = splitting_for(FreeFactorSystem::empty_system(f2()));
    CHECK(!equivalent(rose, theta_f2()).has_value());
}

TEST_CASE("loop type splittings rel A are all equivalent") {
    auto ctx = z2_star_z();
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    // two realizations: cofactor <z> and cofactor <z a>
    auto s1 = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto s2 = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1 a1")});
    auto l1 = splitting_for(s1), l2 = splitting_for(s2);
    // collapse the lollipop stem to get loop types
    auto loop1 = collapse(l1, {{1, 0}}).result;
    auto loop2 = collapse(l2, {{1, 0}}).result;
    CHECK(loop1.validate_report().empty());
    CHECK(loop2.validate_report().empty());
    CHECK(equivalent(loop1, loop2).has_value());
    // but the two edge-type splittings (collapse the loop) are inequivalent
    auto e1 = collapse(l1, {{0, 0}}).result;
    auto e2 = collapse(l2, {{0, 0}}).result;
    CHECK(!equivalent(e1, e2).has_value());
}

TEST_CASE("depth and genericity") {
    CHECK(dfs_depth(FreeFactorSystem::empty_system(f3())) == 5);
    auto ctx = z2_star_z();
    auto a = FreeFactorSystem::make(ctx, {Subgroup::generated(ctx, {parse_word(ctx, "a1")})},
                                    {parse_word(ctx, "x1")});
    CHECK(dfs_depth(a) == 1);
    CHECK(is_generic(theta_f2(), FreeFactorSystem::empty_system(f2())));
    auto rose = splitting_for(FreeFactorSystem::empty_system(f2()));
    CHECK(!is_generic(rose, FreeFactorSystem::empty_system(f2())));
}

TEST_CASE("tree paths between located points") {
    auto s = theta_f2();
    auto ctx = s.ctx;
    TreePoint a = TreePoint::vertex(0, identity(ctx));
    TreePoint b = TreePoint::vertex(1, parse_word(ctx, "x1"));
    auto path = s.tree_edgelet_path(a, b);
    CHECK(!path.empty());
    // reversal gives the same length
    auto back = s.tree_edgelet_path(b, a);
    CHECK(back.size() == path.size());
    // endpoints compose
    CHECK(s.same_point(s.edgelet_endpoint(path.front(), false), a));
    CHECK(s.same_point(s.edgelet_endpoint(path.back(), true), b));
    // path to itself is empty
    CHECK(s.tree_edgelet_path(a, a).empty());
}

TEST_CASE("natural subgraphs of the theta") {
    auto s = theta_f2();
    auto subs = natural_subgraphs(s);
    CHECK(subs.size() == 6); // 2^3 - 2
}
