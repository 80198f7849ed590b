#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ffs.hpp"

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }
ContextPtr f3() { return GroupContext::make({}, 3); }
ContextPtr two_atoms() {
    return GroupContext::make({AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3)}, 0);
}
ContextPtr three_atoms() {
    return GroupContext::make(
        {AtomSpec::finite_cyclic(2), AtomSpec::finite_cyclic(3), AtomSpec::finite_cyclic(5)}, 0);
}
ContextPtr a_star_z() { return GroupContext::make({AtomSpec::finite_cyclic(2)}, 1); }

FreeFactorSystem sys(const ContextPtr& ctx, std::vector<std::vector<const char*>> comps) {
    std::vector<Subgroup> cs;
    for (auto& gens : comps) {
        std::vector<NormalWord> ws;
        for (auto* g : gens) ws.push_back(parse_word(ctx, g));
        cs.push_back(Subgroup::generated(ctx, ws));
    }
    return FreeFactorSystem::from_components(ctx, std::move(cs));
}

FreeFactorSystem atom_sys(const ContextPtr& ctx) {
    std::vector<Subgroup> cs;
    for (int i = 0; i < ctx->n_atoms(); ++i)
        cs.push_back(Subgroup::generated(ctx, {gen_atom(ctx, i, AtomEl{1, {}})}));
    return FreeFactorSystem::from_components(ctx, std::move(cs));
}

} // namespace

TEST_CASE("corank") {
    CHECK(FreeFactorSystem::improper(f3()).corank() == 0);
    CHECK(FreeFactorSystem::empty_system(f3()).corank() == 3);
    CHECK(sys(f3(), {{"x1", "x2"}}).corank() == 1); // rank sum formula: 3 - 2
}

TEST_CASE("depth formula") {
    CHECK(FreeFactorSystem::empty_system(f3()).dff() == 5); // 2n-1 with n=3
    CHECK(atom_sys(two_atoms()).dff() == 1);
    CHECK(atom_sys(three_atoms()).dff() == 2);
    CHECK(FreeFactorSystem::improper(f2()).dff() == 0);
}

TEST_CASE("invalid systems are rejected") {
    auto ctx = two_atoms();
    // missing non-free atom: cofactor would not be free
    CHECK_THROWS_AS(sys(ctx, {{"a1"}}), Error);
    // conjugate components
    auto cf2 = f2();
    std::vector<Subgroup> cs{Subgroup::generated(cf2, {parse_word(cf2, "x1")}),
                             Subgroup::generated(cf2, {parse_word(cf2, "x2 x1 x2^-1")})};
    CHECK_THROWS_AS(FreeFactorSystem::from_components(cf2, std::move(cs)), Error);
    // proper chunk of an atom
    auto az = GroupContext::make({AtomSpec::finite_cyclic(4)}, 1);
    CHECK_THROWS_AS(sys(az, {{"a1^2"}}), Error);
}

TEST_CASE("extension relation") {
    auto ctx = f3();
    auto e = FreeFactorSystem::empty_system(ctx);
    auto a = sys(ctx, {{"x1"}});
    SUBCASE("identity on equal systems") {
        auto m = extends_to(a, a);
        REQUIRE(m.has_value());
        CHECK(m->assignment == std::vector<int>{0});
        CHECK(ffs_equal(a, a));
    }
    SUBCASE("empty system extends to everything") {
        auto m = extends_to(e, a);
        REQUIRE(m.has_value());
        CHECK(m->assignment.empty());
    }
    SUBCASE("incomparable rank one systems") {
        auto cf2 = f2();
        auto p = sys(cf2, {{"x1"}});
        auto q = sys(cf2, {{"x2"}});
        CHECK(!extends_to(p, q).has_value());
    }
}

TEST_CASE("elementary extensions by depth drop") {
    auto ctx = f3();
    auto e = FreeFactorSystem::empty_system(ctx);
    CHECK(is_elementary(e, sys(ctx, {{"x1"}})));       // 5 -> 4
    CHECK(!is_elementary(e, sys(ctx, {{"x1", "x2"}}))); // 5 -> 2
    auto t = three_atoms();
    auto atoms = atom_sys(t);
    auto merged = sys(t, {{"a1", "a2"}, {"a3"}});
    CHECK(is_elementary(atoms, merged)); // merge clause
}

TEST_CASE("classification") {
    CHECK(classify(FreeFactorSystem::improper(f2())).cls == FFSClass::Improper);
    CHECK(classify(atom_sys(two_atoms())).cls == FFSClass::ExceptionalD1);
    auto az = a_star_z();
    CHECK(classify(sys(az, {{"a1"}})).cls == FFSClass::ExceptionalD2a);
    CHECK(classify(atom_sys(three_atoms())).cls == FFSClass::ExceptionalD2b);
    auto f3e = classify(FreeFactorSystem::empty_system(f3()));
    CHECK(f3e.cls == FFSClass::Nonexceptional);
    CHECK(f3e.grushko);
    CHECK(classify(atom_sys(two_atoms())).grushko);
    CHECK(!classify(sys(f3(), {{"x1"}})).grushko);
}

TEST_CASE("interpolation produces an elementary middle") {
    auto ctx = f3();
    auto e = FreeFactorSystem::empty_system(ctx);
    SUBCASE("rank two jump") {
        auto b = sys(ctx, {{"x1", "x2"}});
        auto c = interpolate(e, b);
        CHECK(is_elementary(e, c));
        CHECK(extends_to(c, b).has_value());
    }
    SUBCASE("merge jump") {
        auto a = sys(ctx, {{"x1"}, {"x2"}});
        auto b = sys(ctx, {{"x1", "x2"}});
        auto c = interpolate(a, b);
        CHECK(is_elementary(a, c));
        CHECK(extends_to(c, b).has_value());
    }
    SUBCASE("to improper") {
        auto a = sys(ctx, {{"x1"}});
        auto b = FreeFactorSystem::improper(ctx);
        auto c = interpolate(a, b);
        CHECK(is_elementary(a, c));
        CHECK(extends_to(c, b).has_value());
    }
}

TEST_CASE("depth lemma on a generated pool") {
    auto ctx = f3();
    std::vector<FreeFactorSystem> pool;
    pool.push_back(FreeFactorSystem::empty_system(ctx));
    pool.push_back(FreeFactorSystem::improper(ctx));
    for (auto* g : {"x1", "x2", "x3", "x1 x2", "x2 x3", "x1 x2 x3"})
        pool.push_back(sys(ctx, {{g}}));
    pool.push_back(sys(ctx, {{"x1"}, {"x2"}}));
    pool.push_back(sys(ctx, {{"x1", "x2"}}));
    pool.push_back(sys(ctx, {{"x1", "x2"}, {"x3"}}));
    pool.push_back(sys(ctx, {{"x1"}, {"x2"}, {"x3"}}));
    pool.push_back(sys(ctx, {{"x1", "x2 x3"}}));

    for (const auto& a : pool)
        for (const auto& b : pool) {
            if (!extends_to(a, b).has_value() || ffs_equal(a, b)) continue;
            // monotonicity
            CHECK(a.corank() >= b.corank());
            CHECK(a.dff() >= b.dff() + 1);
            // elementary iff drop one
            CHECK(is_elementary(a, b) == (a.dff() == b.dff() + 1));
            // interpolation
            auto c = interpolate(a, b);
            CHECK(is_elementary(a, c));
            CHECK(extends_to(c, b).has_value());
        }

    // chain bound: greedy chains reach the improper system in exactly dff steps
    for (const auto& a : pool) {
        if (a.is_improper()) continue;
        FreeFactorSystem cur = a;
        int steps = 0;
        auto top = FreeFactorSystem::improper(ctx);
        while (!cur.is_improper()) {
            auto c = interpolate(cur, top);
            ++steps;
            cur = c;
        }
        CHECK(steps == a.dff());
    }
}

TEST_CASE("meet of factor systems") {
    auto ctx = f2();
    auto a = sys(ctx, {{"x1"}});
    SUBCASE("idempotent") {
        auto m = meet(a, a);
        CHECK(ffs_equal(m, a));
    }
    SUBCASE("improper absorbs") {
        auto m = meet(a, FreeFactorSystem::improper(ctx));
        CHECK(ffs_equal(m, a));
    }
    SUBCASE("transverse rank-one systems meet in the empty system") {
        auto b = sys(ctx, {{"x1 x2"}});
        auto m = meet(a, b);
        CHECK(m.size() == 0);
        CHECK(extends_to(m, a).has_value());
        CHECK(extends_to(m, b).has_value());
    }
    SUBCASE("nested systems") {
        auto c3 = f3();
        auto big = sys(c3, {{"x1", "x2"}});
        auto small = sys(c3, {{"x1"}});
        auto m = meet(small, big);
        CHECK(ffs_equal(m, small));
    }
}

TEST_CASE("meet universal property on a pool") {
    auto ctx = f3();
    std::vector<FreeFactorSystem> pool;
    for (auto* g : {"x1", "x2", "x1 x2", "x2 x3"}) pool.push_back(sys(ctx, {{g}}));
    pool.push_back(sys(ctx, {{"x1"}, {"x2"}}));
    pool.push_back(sys(ctx, {{"x1", "x2"}}));
    pool.push_back(FreeFactorSystem::empty_system(ctx));
    for (const auto& b : pool)
        for (const auto& c : pool) {
            auto m = meet(b, c);
            CHECK(extends_to(m, b).has_value());
            CHECK(extends_to(m, c).has_value());
            for (const auto& lower : pool) {
                bool below = extends_to(lower, b).has_value() && extends_to(lower, c).has_value();
                if (below) CHECK(extends_to(lower, m).has_value());
            }
        }
}

TEST_CASE("meet with atoms") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2)}, 1); // Z/2 * Z
    auto A = Subgroup::generated(ctx, {parse_word(ctx, "a1")});
    auto s1 = FreeFactorSystem::make(ctx, {A}, {parse_word(ctx, "x1")});
    auto s2 = FreeFactorSystem::make(
        ctx, {Subgroup::generated(ctx, {parse_word(ctx, "a1")}),
              Subgroup::generated(ctx, {parse_word(ctx, "x1")})},
        {});
    auto m = meet(s1, s2);
    CHECK(ffs_equal(m, s1)); // s1 is below s2
}
