#ifndef FSC_GROUP_HPP
#define FSC_GROUP_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsc {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class AtomKind { FiniteCyclic, InfiniteCyclic, FreeOfRank, Opaque };

// Finite group given by a multiplication table. Element 0 is the identity.
struct OpaqueTable {
    std::vector<std::vector<int>> mul;

    int order() const { return static_cast<int>(mul.size()); }
    int times(int a, int b) const { return mul[a][b]; }
    int inverse(int a) const;
    void check() const; // group axioms; throws on violation
};

struct AtomSpec {
    AtomKind kind = AtomKind::InfiniteCyclic;
    int order = 0; // FiniteCyclic
    int rank = 0;  // FreeOfRank
    OpaqueTable table;

    static AtomSpec finite_cyclic(int n);
    static AtomSpec infinite_cyclic();
    static AtomSpec free_of_rank(int m);
    static AtomSpec opaque(OpaqueTable t);
};

struct GroupContext;
using ContextPtr = std::shared_ptr<const GroupContext>;

// The ambient free product  Gamma = A_1 * ... * A_K * F_r.
struct GroupContext {
    std::vector<AtomSpec> atoms;
    int free_rank = 0;

    GroupContext() = default;
    GroupContext(std::vector<AtomSpec> a, int r);

    int n_atoms() const { return static_cast<int>(atoms.size()); }
    bool atom_is_free(int i) const; // contributes only free rank to Grushko data
    // total free rank of the Grushko decomposition (free letters + free atoms)
    int grushko_free_rank() const;

    static ContextPtr make(std::vector<AtomSpec> a, int r);
    // nested context used for payloads of a free-of-rank atom
    static ContextPtr free_context(int m);
};

// Element of an atom. For cyclic kinds `e` is the exponent, for Opaque the
// element id, for FreeOfRank `w` is a reduced word over the atom's own
// alphabet (signed 1-based letter indices). Identity: e == 0 and w empty.
struct AtomEl {
    long long e = 0;
    std::vector<int> w;

    bool operator==(const AtomEl& o) const { return e == o.e && w == o.w; }
    bool operator<(const AtomEl& o) const { return e != o.e ? e < o.e : w < o.w; }
};

AtomEl atom_identity();
bool atom_is_identity(const AtomSpec& a, const AtomEl& x);
AtomEl atom_mul(const AtomSpec& a, const AtomEl& x, const AtomEl& y);
AtomEl atom_inv(const AtomSpec& a, const AtomEl& x);
void atom_check_payload(const AtomSpec& a, const AtomEl& x);
std::string atom_el_str(const AtomSpec& a, const AtomEl& x);

// One letter of a normal word: either a free letter x_i^{+-1} or a
// nonidentity atom element.
struct Letter {
    int atom = -1;      // -1 for a free letter
    int free_index = 0; // 0-based
    int sign = 1;       // free letter exponent, +1 or -1
    AtomEl el;

    bool is_free() const { return atom < 0; }
    static Letter free_letter(int index, int sign);
    static Letter atom_letter(int atom, AtomEl el);
    bool operator==(const Letter& o) const;
    bool operator<(const Letter& o) const;
};

// Reduced word in Gamma: no identity atom letters, no adjacent letters in the
// same atom, no adjacent cancelling free letters. Empty word = identity.
struct NormalWord {
    ContextPtr ctx;
    std::vector<Letter> letters;

    NormalWord() = default;
    explicit NormalWord(ContextPtr c) : ctx(std::move(c)) {}

    bool is_identity() const { return letters.empty(); }
    int length() const { return static_cast<int>(letters.size()); }
    bool operator==(const NormalWord& o) const { return letters == o.letters; }
    bool operator!=(const NormalWord& o) const { return !(*this == o); }
    bool operator<(const NormalWord& o) const { return letters < o.letters; }
};

// Reduction of a raw letter sequence to the unique normal form.
NormalWord reduce(const ContextPtr& ctx, const std::vector<Letter>& raw);
NormalWord mul(const NormalWord& u, const NormalWord& v);
NormalWord inv(const NormalWord& u);
NormalWord conj(const NormalWord& g, const NormalWord& h); // g h g^-1
NormalWord pow(const NormalWord& u, int k);

NormalWord identity(const ContextPtr& ctx);
NormalWord gen_free(const ContextPtr& ctx, int index, int sign = 1);
NormalWord gen_atom(const ContextPtr& ctx, int atom, AtomEl el);

// Word syntax: space separated tokens, e.g. "x1 a1^2 x2^-1 a2:3 a3(x1 x2)".
// x<i>: free letters; a<i>^k: cyclic atom exponent; a<i>:k opaque element id;
// a<i>(...): free atom element. ^k on x expands to |k| letters.
std::string to_string(const NormalWord& w);
NormalWord parse_word(const ContextPtr& ctx, const std::string& text);

// All reduced words of length <= max_len (brute-force oracle; cyclic atom
// exponents and free-atom payload words are drawn from a small fixed range).
std::vector<NormalWord> enumerate_words(const ContextPtr& ctx, int max_len);

} // namespace fsc

#endif
