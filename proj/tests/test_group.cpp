#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "group.hpp"

using namespace fsc;

namespace {

ContextPtr f2() { return GroupContext::make({}, 2); }

ContextPtr z3_star_z() {
    return GroupContext::make({AtomSpec::finite_cyclic(3)}, 1);
}

OpaqueTable s3_table() {
    // symmetric group on 3 points, elements as permutations in one-line order
    std::vector<std::array<int, 3>> perms = {
        {0, 1, 2}, {1, 0, 2}, {0, 2, 1}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1}};
    OpaqueTable t;
    t.mul.assign(6, std::vector<int>(6));
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            std::array<int, 3> c;
            for (int k = 0; k < 3; ++k) c[k] = perms[i][perms[j][k]];
            for (int m = 0; m < 6; ++m)
                if (perms[m] == c) t.mul[i][j] = m;
        }
    return t;
}

} // namespace

TEST_CASE("empty word is the identity") {
    auto ctx = f2();
    CHECK(reduce(ctx, {}).is_identity());
}

TEST_CASE("free cancellation") {
    auto ctx = f2();
    auto w = reduce(ctx, {Letter::free_letter(0, 1), Letter::free_letter(0, -1)});
    CHECK(w.is_identity());
    auto v = parse_word(ctx, "x1 x2 x2^-1 x1^-1");
    CHECK(v.is_identity());
}

TEST_CASE("finite cyclic atom relations") {
    auto ctx = z3_star_z();
    // oracle: exponent arithmetic mod 3
    auto t = gen_atom(ctx, 0, AtomEl{1, {}});
    CHECK(mul(mul(t, t), t).is_identity());
    CHECK(mul(t, t) == gen_atom(ctx, 0, AtomEl{2, {}}));
    CHECK(inv(t) == gen_atom(ctx, 0, AtomEl{2, {}}));
}

TEST_CASE("reduce is idempotent and multiplicative on samples") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(2)}, 2);
    auto words = enumerate_words(ctx, 3);
    for (const auto& u : words) {
        CHECK(reduce(ctx, u.letters) == u);
        for (const auto& v : words) {
            auto uv = mul(u, v);
            // associativity sample: (u v) v^-1 == u
            CHECK(mul(uv, inv(v)) == u);
        }
    }
}

TEST_CASE("normal form invariants hold on enumerated words") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(3), AtomSpec::infinite_cyclic()}, 1);
    for (const auto& w : enumerate_words(ctx, 3)) {
        for (size_t i = 0; i < w.letters.size(); ++i) {
            const Letter& l = w.letters[i];
            if (!l.is_free()) CHECK(!atom_is_identity(ctx->atoms[l.atom], l.el));
            if (i > 0) {
                const Letter& p = w.letters[i - 1];
                if (!l.is_free() && !p.is_free()) CHECK(p.atom != l.atom);
                if (l.is_free() && p.is_free() && p.free_index == l.free_index)
                    CHECK(p.sign == l.sign);
            }
        }
    }
}

TEST_CASE("opaque atom via multiplication table") {
    auto ctx = GroupContext::make({AtomSpec::opaque(s3_table())}, 0);
    auto r = gen_atom(ctx, 0, AtomEl{4, {}}); // 3-cycle
    CHECK(mul(mul(r, r), r).is_identity());
    auto s = gen_atom(ctx, 0, AtomEl{1, {}}); // transposition
    CHECK(mul(s, s).is_identity());
    CHECK(mul(r, s) != mul(s, r));
}

TEST_CASE("free atom payloads reduce") {
    auto ctx = GroupContext::make({AtomSpec::free_of_rank(2)}, 1);
    auto w = parse_word(ctx, "a1(x1 x2) a1(x2^-1) x1");
    REQUIRE(w.length() == 2);
    CHECK(w.letters[0].el.w == std::vector<int>{1});
    auto v = parse_word(ctx, "a1(x1) a1(x1^-1)");
    CHECK(v.is_identity());
}

TEST_CASE("word round trip through text") {
    auto ctx = GroupContext::make({AtomSpec::finite_cyclic(4), AtomSpec::free_of_rank(2)}, 2);
    for (const char* s : {"x1 a1^3 x2^-1", "a2(x1 x1 x2^-1) x1 x1", "1"}) {
        auto w = parse_word(ctx, s);
        CHECK(parse_word(ctx, to_string(w)) == w);
    }
}

TEST_CASE("invalid input is rejected") {
    auto ctx = z3_star_z();
    CHECK_THROWS_AS(parse_word(ctx, "x2"), Error);
    CHECK_THROWS_AS(parse_word(ctx, "a2"), Error);
    CHECK_THROWS_AS(gen_free(ctx, 5, 1), Error);
}
