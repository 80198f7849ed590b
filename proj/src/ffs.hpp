#ifndef FSC_FFS_HPP
#define FSC_FFS_HPP

#include "subgroup.hpp"

namespace fsc {

// A free factor system realized by explicit component subgroups and a
// cofactor basis witness:  Gamma = H_1 * ... * H_K * <basis>.
// Validity is certified by folding the combined generators to the whole
// group and matching Grushko invariants (atoms are residually finite, so the
// resulting surjection of matching Grushko type is an isomorphism).
struct FreeFactorSystem {
    ContextPtr ctx;
    std::vector<Subgroup> components;
    std::vector<NormalWord> cofactor_basis;

    static FreeFactorSystem make(const ContextPtr& ctx, std::vector<Subgroup> comps,
                                 std::vector<NormalWord> basis);
    // searches for a cofactor basis witness (bounded; throws if none found)
    static FreeFactorSystem from_components(const ContextPtr& ctx, std::vector<Subgroup> comps);
    static FreeFactorSystem empty_system(const ContextPtr& ctx);
    static FreeFactorSystem improper(const ContextPtr& ctx);

    int size() const { return static_cast<int>(components.size()); }
    bool is_improper() const;
    bool is_proper() const { return !is_improper(); }
    int corank() const { return static_cast<int>(cofactor_basis.size()); }
    int dff() const { return 2 * corank() + size() - 1; }

    void check() const; // throws on invalid realization
};

// abstract free rank of a finitely generated subgroup (Kurosh free part plus
// ranks of pieces lying in free-type atoms)
int abstract_free_rank(const Subgroup& h);

struct ContainmentMap {
    // assignment[i] = index of the target component containing component i,
    // with witness conjugators g_i: g_i . source_i . g_i^-1 <= target
    std::vector<int> assignment;
    std::vector<NormalWord> witnesses;
};

std::optional<ContainmentMap> extends_to(const FreeFactorSystem& a, const FreeFactorSystem& b);
bool ffs_equal(const FreeFactorSystem& a, const FreeFactorSystem& b);
bool proper_extension(const FreeFactorSystem& a, const FreeFactorSystem& b);

// true iff a <| b is a proper extension with depth drop exactly one
bool is_elementary(const FreeFactorSystem& a, const FreeFactorSystem& b);

// elementary C with a <| C <| b, for a proper extension a <| b
FreeFactorSystem interpolate(const FreeFactorSystem& a, const FreeFactorSystem& b);

// meet of two systems; computed through the splitting fiber product
// machinery (see meet.cpp)
FreeFactorSystem meet(const FreeFactorSystem& a, const FreeFactorSystem& b);

enum class FFSClass { Improper, ExceptionalD1, ExceptionalD2a, ExceptionalD2b, Nonexceptional };

struct Classification {
    FFSClass cls;
    bool grushko; // all atoms appear as (full) components
};

Classification classify(const FreeFactorSystem& a);
const char* ffs_class_name(FFSClass c);

} // namespace fsc

#endif
