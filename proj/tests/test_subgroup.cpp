#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "subgroup.hpp"

#include <algorithm>

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }

Subgroup gen(const ContextPtr& ctx, std::initializer_list<const char*> ws) {
    std::vector<NormalWord> gens;
    for (const char* w : ws) gens.push_back(parse_word(ctx, w));
    return Subgroup::generated(ctx, gens);
}

// brute-force membership oracle: w in <gens> iff w appears among bounded
// products of generators
bool brute_member(const ContextPtr& ctx, const std::vector<NormalWord>& gens, const NormalWord& w,
                  int depth) {
    std::vector<NormalWord> alpha;
    for (const auto& g : gens) {
        alpha.push_back(g);
        alpha.push_back(inv(g));
    }
    std::vector<NormalWord> layer{identity(ctx)};
    std::set<std::vector<Letter>> seen{{}};
    for (int d = 0; d <= depth; ++d) {
        std::vector<NormalWord> next;
        for (const auto& u : layer) {
            if (u == w) return true;
            for (const auto& a : alpha) {
                auto v = mul(u, a);
                if (seen.insert(v.letters).second) next.push_back(v);
            }
        }
        layer = std::move(next);
    }
    return false;
}

} // namespace

TEST_CASE("empty generator list gives the trivial subgroup") {
    auto ctx = f2();
    auto h = gen(ctx, {});
    CHECK(h.is_trivial());
    CHECK(h.graph.nv == 1);
    CHECK(h.contains(identity(ctx)));
    CHECK(!h.contains(parse_word(ctx, "x1")));
}

TEST_CASE("cyclic subgroup of F2 is a single loop") {
    auto ctx = f2();
    auto h = gen(ctx, {"x1"});
    CHECK(h.graph.nv == 1);
    CHECK(h.graph.edge_count() == 1);
    CHECK(h.contains(parse_word(ctx, "x1 x1 x1")));
    CHECK(!h.contains(parse_word(ctx, "x2")));
}

TEST_CASE("<ab, a> is all of F2") {
    auto ctx = f2();
    auto h = gen(ctx, {"x1 x2", "x1"});
    CHECK(h.graph.is_whole_group());
}

TEST_CASE("membership agrees with brute force on short words") {
    auto ctx = f2();
    struct Case {
        std::vector<const char*> gens;
        int depth;
    };
    for (auto& c : {Case{{"x1"}, 6}, Case{{"x1 x2"}, 6}, Case{{"x1 x1", "x2"}, 6},
                    Case{{"x1 x2 x1^-1"}, 6}}) {
        std::vector<NormalWord> gens;
        for (auto* s : c.gens) gens.push_back(parse_word(ctx, s));
        auto h = Subgroup::generated(ctx, gens);
        for (const auto& w : enumerate_words(ctx, 5)) {
            bool got = h.contains(w);
            bool want = brute_member(ctx, gens, w, c.depth);
            if (w.length() <= 4) CHECK(got == want);
            if (got) CHECK(want); // soundness at any length
        }
    }
}

TEST_CASE("membership with atoms agrees with brute force") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(3)}, 1);
    auto t2 = parse_word(ctx, "a1^2");
    auto h = Subgroup::generated(ctx, {parse_word(ctx, "x1 a1 x1^-1"), t2});
    for (const auto& w : enumerate_words(ctx, 3)) {
        bool got = h.contains(w);
        bool want = brute_member(ctx, h.gens, w, 5);
        CHECK(got == want);
    }
}

TEST_CASE("folding is confluent under generator permutation") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2)}, 2);
    std::vector<NormalWord> gens = {parse_word(ctx, "x1 a1 x2"), parse_word(ctx, "x2 x2"),
                                    parse_word(ctx, "a1")};
    std::sort(gens.begin(), gens.end());
    std::vector<Subgroup> folds;
    do {
        folds.push_back(Subgroup::generated(ctx, gens));
    } while (std::next_permutation(gens.begin(), gens.end()));
    for (size_t i = 1; i < folds.size(); ++i) {
        CHECK(folds[i].graph.nv == folds[0].graph.nv);
        CHECK(folds[i].graph.edge_count() == folds[0].graph.edge_count());
        for (const auto& w : enumerate_words(ctx, 3))
            CHECK(folds[i].contains(w) == folds[0].contains(w));
    }
}

TEST_CASE("kurosh data of subgroups") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(3)}, 2); // Z/3 * F2
    SUBCASE("free subgroup") {
        auto h = gen(ctx, {"x1", "x2 x2"});
        auto k = h.graph.kurosh();
        CHECK(k.pieces.empty());
        CHECK(k.free_rank == 2);
    }
    SUBCASE("conjugated atom piece") {
        auto h = gen(ctx, {"x1 a1 x1^-1"});
        auto k = h.graph.kurosh();
        REQUIRE(k.pieces.size() == 1);
        CHECK(k.free_rank == 0);
        CHECK(k.pieces[0].atom == 0);
        CHECK(k.pieces[0].stab.is_full(ctx->atoms[0]));
        CHECK(k.pieces[0].conjugator == parse_word(ctx, "x1"));
    }
    SUBCASE("mixed") {
        auto h = gen(ctx, {"a1", "x1 x2", "x2 a1 x2^-1"});
        auto k = h.graph.kurosh();
        CHECK(k.pieces.size() == 2);
        CHECK(k.free_rank == 1);
    }
}

TEST_CASE("kurosh inside infinite cyclic atom") {
    auto ctx = GroupContext::make({AtomSpec::infinite_cyclic()}, 1); // A * Z with A = Z
    auto h = gen(ctx, {"a1^2"});
    auto k = h.graph.kurosh();
    REQUIRE(k.pieces.size() == 1);
    CHECK(k.pieces[0].stab.d == 2);
    CHECK(!k.pieces[0].stab.is_full(ctx->atoms[0]));
    CHECK(k.free_rank == 0);
}

TEST_CASE("whole group detection") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3)}, 1);
    CHECK(gen(ctx, {"a1", "a2", "x1"}).graph.is_whole_group());
    CHECK(!gen(ctx, {"a1", "x1"}).graph.is_whole_group());
    CHECK(!gen(ctx, {"a1", "a2", "x1 x1"}).graph.is_whole_group());
    CHECK(gen(ctx, {"a1", "x1 a2 x1^-1", "x1"}).graph.is_whole_group());
}

TEST_CASE("conjugate_into finds witnesses") {
    auto ctx = f2();
    auto a = gen(ctx, {"x1"});
    SUBCASE("identity works for equal subgroups") {
        auto g = conjugate_into(a, a);
        REQUIRE(g.has_value());
        CHECK(g->is_identity());
    }
    SUBCASE("basepoint move") {
        auto h = gen(ctx, {"x2 x1 x2^-1"}); // b a b^-1
        auto g = conjugate_into(h, a);
        REQUIRE(g.has_value());
        // verified: g h g^-1 <= a for every generator
        for (const auto& x : h.gens) CHECK(a.contains(conj(*g, x)));
    }
    SUBCASE("obstructed pair") {
        auto b = gen(ctx, {"x2"});
        CHECK(!conjugate_into(a, b).has_value());
        CHECK(!ab_image_contained(a, b));
    }
}

TEST_CASE("conjugate_into with atoms") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(3)}, 1);
    auto a = gen(ctx, {"a1"});
    auto h = gen(ctx, {"x1 a1^2 x1^-1"});
    auto g = conjugate_into(h, a);
    REQUIRE(g.has_value());
    for (const auto& x : h.gens) CHECK(a.contains(conj(*g, x)));
    // <a1> is not conjugate into <x1>
    CHECK(!conjugate_into(a, gen(ctx, {"x1"})).has_value());
}

TEST_CASE("coset tokens separate cosets") {
    auto ctx = f2();
    auto h = gen(ctx, {"x1"});
    CosetTable tab(h.graph);
    auto t = [&](const char* s) { return tab.token(parse_word(ctx, s)); };
    CHECK(t("1") == t("x1"));
    CHECK(t("1") == t("x1 x1"));
    CHECK(t("x2") != t("1"));
    CHECK(t("x2") != t("x1 x2"));       // distinct left cosets
    CHECK(t("x2") == t("x2 x1"));       // gH absorbs H on the right
    CHECK(t("x2 x1") != t("x2 x2"));
    CHECK(t("x2 x1") == t("x2 x1 x1"));
}

TEST_CASE("free atom subgroup payloads") {
    auto ctx = GroupContext::make({AtomSpec::free_of_rank(2)}, 0);
    auto h = gen(ctx, {"a1(x1 x2)"});
    CHECK(h.contains(parse_word(ctx, "a1(x1 x2 x1 x2)")));
    CHECK(!h.contains(parse_word(ctx, "a1(x1)")));
    auto k = h.graph.kurosh();
    REQUIRE(k.pieces.size() == 1);
    CHECK(!k.pieces[0].stab.is_full(ctx->atoms[0]));
}
