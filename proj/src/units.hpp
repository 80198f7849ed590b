#ifndef FSC_UNITS_HPP
#define FSC_UNITS_HPP

#include "combing.hpp"

namespace fsc {

// Complexity of a proper invariant subgraph of a splitting rel a.
struct ComplexityProfile {
    int c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    int total() const { return c1 + c2 + c3 + c4; }
    bool operator==(const ComplexityProfile& o) const {
        return c1 == o.c1 && c2 == o.c2 && c3 == o.c3 && c4 == o.c4;
    }
};

ComplexityProfile complexity(const MarkedSplitting& t, const std::set<QEdgelet>& beta,
                             const FreeFactorSystem& a);

// profiles of the pullback subgraph sequence beta_k along the sequence
std::vector<ComplexityProfile> profile_sequence(const MapSequence& seq,
                                                const std::set<QEdgelet>& beta_K,
                                                const FreeFactorSystem& a);
std::vector<std::set<QEdgelet>> pullback_sequence(const MapSequence& seq,
                                                  const std::set<QEdgelet>& beta_K);

// true when the map induces a bijection of component orbits of the subgraphs
bool components_biject(const MarkedSplitting& s, const std::set<QEdgelet>& beta_s,
                       const MarkedSplitting& t, const std::set<QEdgelet>& beta_t);

// zigzag of collapses and expansions with verified arrows
struct Zigzag {
    std::vector<SplittingPtr> path;
    std::vector<int> rel; // +1: path[k] expands to path[k+1]; -1: collapses
};

// length <= 4 path between the ends of a constant-complexity stretch with a
// blue-red decomposition (beta = blue)
Zigzag blue_red_witness(const MapSequence& seq, int i, int j, const std::set<QEdgelet>& beta_j,
                        const FreeFactorSystem& a);

// certificate that S_i, S_j differ by < 1 free splitting unit
struct UnitCertificate {
    bool trivial_diagram = true;
    std::set<QEdgelet> seed;                  // beta_j on the top row
    std::vector<ComplexityProfile> profiles;  // constant along [i, j]
    std::set<QEdgelet> right_forest;          // nontrivial diagrams
};

struct UnitSearch {
    enum class Result { Certified, Unknown };
    Result result = Result::Unknown;
    UnitCertificate cert;
};

UnitSearch lt_one_unit(const MapSequence& seq, int i, int j, const FreeFactorSystem& a,
                       int budget = 64);

// number of free splitting units along [i, j] with the policy that an
// Unknown pair counts as >= 1 unit
struct UnitCount {
    int upsilon = 0;
    std::vector<int> front_greedy;
    std::vector<int> back_greedy;
    bool policy_overcount = false; // an Unknown was treated as >= 1 unit
};
UnitCount unit_count(const MapSequence& seq, int i, int j, const FreeFactorSystem& a,
                     int budget = 64);

int b1_constant(const FreeFactorSystem& a); // 5 corank + 4|A| - 3

} // namespace fsc

#endif
