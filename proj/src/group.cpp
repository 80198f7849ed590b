#include "group.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace fsc {

int OpaqueTable::inverse(int a) const {
    for (int b = 0; b < order(); ++b)
        if (mul[a][b] == 0) return b;
    throw Error("opaque table: no inverse for element " + std::to_string(a));
}

void OpaqueTable::check() const {
    int n = order();
    if (n < 2) throw Error("opaque atom must be a nontrivial group");
    for (int a = 0; a < n; ++a) {
        if (static_cast<int>(mul[a].size()) != n) throw Error("opaque table not square");
        if (mul[a][0] != a || mul[0][a] != a) throw Error("opaque table: 0 is not an identity");
        std::vector<bool> row(n, false), col(n, false);
        for (int b = 0; b < n; ++b) {
            int r = mul[a][b], c = mul[b][a];
            if (r < 0 || r >= n || c < 0 || c >= n) throw Error("opaque table: entry out of range");
            if (row[r] || col[c]) throw Error("opaque table: not a Latin square");
            row[r] = col[c] = true;
        }
        inverse(a);
    }
    // associativity: exhaustive for small tables, sampled otherwise
    if (n <= 24) {
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    if (mul[mul[a][b]][c] != mul[a][mul[b][c]])
                        throw Error("opaque table: not associative");
    } else {
        unsigned long long s = 88172645463325252ull;
        auto rnd = [&]() { s ^= s << 13; s ^= s >> 7; s ^= s << 17; return s; };
        for (int i = 0; i < 5000; ++i) {
            int a = rnd() % n, b = rnd() % n, c = rnd() % n;
            if (mul[mul[a][b]][c] != mul[a][mul[b][c]])
                throw Error("opaque table: not associative");
        }
    }
}

AtomSpec AtomSpec::finite_cyclic(int n) {
    if (n < 2) throw Error("finite cyclic atom needs order >= 2");
    AtomSpec a; a.kind = AtomKind::FiniteCyclic; a.order = n; return a;
}
AtomSpec AtomSpec::infinite_cyclic() {
    AtomSpec a; a.kind = AtomKind::InfiniteCyclic; return a;
}
AtomSpec AtomSpec::free_of_rank(int m) {
    if (m < 1) throw Error("free atom needs rank >= 1");
    AtomSpec a; a.kind = AtomKind::FreeOfRank; a.rank = m; return a;
}
AtomSpec AtomSpec::opaque(OpaqueTable t) {
    t.check();
    AtomSpec a; a.kind = AtomKind::Opaque; a.table = std::move(t); return a;
}

GroupContext::GroupContext(std::vector<AtomSpec> a, int r) : atoms(std::move(a)), free_rank(r) {
    if (r < 0) throw Error("negative free rank");
}

bool GroupContext::atom_is_free(int i) const {
    AtomKind k = atoms.at(i).kind;
    return k == AtomKind::InfiniteCyclic || k == AtomKind::FreeOfRank;
}

int GroupContext::grushko_free_rank() const {
    int r = free_rank;
    for (const auto& a : atoms) {
        if (a.kind == AtomKind::InfiniteCyclic) r += 1;
        else if (a.kind == AtomKind::FreeOfRank) r += a.rank;
    }
    return r;
}

ContextPtr GroupContext::make(std::vector<AtomSpec> a, int r) {
    return std::make_shared<GroupContext>(std::move(a), r);
}

ContextPtr GroupContext::free_context(int m) {
    static std::map<int, ContextPtr> cache;
    auto it = cache.find(m);
    if (it != cache.end()) return it->second;
    auto c = GroupContext::make({}, m);
    cache[m] = c;
    return c;
}

AtomEl atom_identity() { return AtomEl{}; }

bool atom_is_identity(const AtomSpec& a, const AtomEl& x) {
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
        case AtomKind::InfiniteCyclic:
        case AtomKind::Opaque: return x.e == 0;
        case AtomKind::FreeOfRank: return x.w.empty();
    }
    return true;
}

static std::vector<int> free_word_mul(const std::vector<int>& u, const std::vector<int>& v) {
    std::vector<int> out = u;
    for (int l : v) {
        if (!out.empty() && out.back() == -l) out.pop_back();
        else out.push_back(l);
    }
    return out;
}

AtomEl atom_mul(const AtomSpec& a, const AtomEl& x, const AtomEl& y) {
    AtomEl z;
    switch (a.kind) {
        case AtomKind::FiniteCyclic: z.e = ((x.e + y.e) % a.order + a.order) % a.order; break;
        case AtomKind::InfiniteCyclic: z.e = x.e + y.e; break;
        case AtomKind::Opaque: z.e = a.table.times(static_cast<int>(x.e), static_cast<int>(y.e)); break;
        case AtomKind::FreeOfRank: z.w = free_word_mul(x.w, y.w); break;
    }
    return z;
}

AtomEl atom_inv(const AtomSpec& a, const AtomEl& x) {
    AtomEl z;
    switch (a.kind) {
        case AtomKind::FiniteCyclic: z.e = (a.order - x.e % a.order) % a.order; break;
        case AtomKind::InfiniteCyclic: z.e = -x.e; break;
        case AtomKind::Opaque: z.e = a.table.inverse(static_cast<int>(x.e)); break;
        case AtomKind::FreeOfRank:
            z.w.assign(x.w.rbegin(), x.w.rend());
            for (int& l : z.w) l = -l;
            break;
    }
    return z;
}

void atom_check_payload(const AtomSpec& a, const AtomEl& x) {
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
            if (x.e < 0 || x.e >= a.order) throw Error("cyclic payload out of range");
            break;
        case AtomKind::InfiniteCyclic: break;
        case AtomKind::Opaque:
            if (x.e < 0 || x.e >= a.table.order()) throw Error("opaque payload out of range");
            break;
        case AtomKind::FreeOfRank:
            for (size_t i = 0; i < x.w.size(); ++i) {
                int l = x.w[i];
                if (l == 0 || std::abs(l) > a.rank) throw Error("free atom payload letter out of range");
                if (i > 0 && x.w[i - 1] == -l) throw Error("free atom payload not reduced");
            }
            break;
    }
}

std::string atom_el_str(const AtomSpec& a, const AtomEl& x) {
    std::ostringstream os;
    switch (a.kind) {
        case AtomKind::FiniteCyclic:
        case AtomKind::InfiniteCyclic: os << "^" << x.e; break;
        case AtomKind::Opaque: os << ":" << x.e; break;
        case AtomKind::FreeOfRank: {
            os << "(";
            for (size_t i = 0; i < x.w.size(); ++i) {
                if (i) os << " ";
                os << "x" << std::abs(x.w[i]);
                if (x.w[i] < 0) os << "^-1";
            }
            os << ")";
            break;
        }
    }
    return os.str();
}

Letter Letter::free_letter(int index, int sign) {
    Letter l; l.atom = -1; l.free_index = index; l.sign = sign; return l;
}
Letter Letter::atom_letter(int atom, AtomEl el) {
    Letter l; l.atom = atom; l.el = std::move(el); return l;
}
bool Letter::operator==(const Letter& o) const {
    if (atom != o.atom) return false;
    if (is_free()) return free_index == o.free_index && sign == o.sign;
    return el == o.el;
}
bool Letter::operator<(const Letter& o) const {
    if (atom != o.atom) return atom < o.atom;
    if (is_free()) {
        if (free_index != o.free_index) return free_index < o.free_index;
        return sign < o.sign;
    }
    return el < o.el;
}

NormalWord reduce(const ContextPtr& ctx, const std::vector<Letter>& raw) {
    NormalWord w(ctx);
    for (const Letter& l : raw) {
        if (l.is_free()) {
            if (l.free_index < 0 || l.free_index >= ctx->free_rank)
                throw Error("free letter index out of range");
            if (l.sign != 1 && l.sign != -1) throw Error("free letter sign must be +-1");
            if (!w.letters.empty()) {
                const Letter& b = w.letters.back();
                if (b.is_free() && b.free_index == l.free_index && b.sign == -l.sign) {
                    w.letters.pop_back();
                    continue;
                }
            }
            w.letters.push_back(l);
        } else {
            if (l.atom >= ctx->n_atoms()) throw Error("atom id out of range");
            const AtomSpec& a = ctx->atoms[l.atom];
            atom_check_payload(a, l.el);
            if (atom_is_identity(a, l.el)) continue;
            if (!w.letters.empty() && w.letters.back().atom == l.atom) {
                AtomEl m = atom_mul(a, w.letters.back().el, l.el);
                w.letters.pop_back();
                if (!atom_is_identity(a, m)) {
                    // merged letter might cancel further; re-feed
                    Letter nl = Letter::atom_letter(l.atom, std::move(m));
                    w.letters.push_back(nl);
                }
                continue;
            }
            w.letters.push_back(l);
        }
    }
    return w;
}

NormalWord mul(const NormalWord& u, const NormalWord& v) {
    std::vector<Letter> raw = u.letters;
    raw.insert(raw.end(), v.letters.begin(), v.letters.end());
    return reduce(u.ctx ? u.ctx : v.ctx, raw);
}

NormalWord inv(const NormalWord& u) {
    std::vector<Letter> raw;
    for (auto it = u.letters.rbegin(); it != u.letters.rend(); ++it) {
        Letter l = *it;
        if (l.is_free()) l.sign = -l.sign;
        else l.el = atom_inv(u.ctx->atoms[l.atom], l.el);
        raw.push_back(l);
    }
    return reduce(u.ctx, raw);
}

NormalWord conj(const NormalWord& g, const NormalWord& h) { return mul(mul(g, h), inv(g)); }

NormalWord pow(const NormalWord& u, int k) {
    NormalWord r = identity(u.ctx);
    NormalWord b = k < 0 ? inv(u) : u;
    for (int i = 0; i < std::abs(k); ++i) r = mul(r, b);
    return r;
}

NormalWord identity(const ContextPtr& ctx) { return NormalWord(ctx); }

NormalWord gen_free(const ContextPtr& ctx, int index, int sign) {
    return reduce(ctx, {Letter::free_letter(index, sign)});
}
NormalWord gen_atom(const ContextPtr& ctx, int atom, AtomEl el) {
    return reduce(ctx, {Letter::atom_letter(atom, std::move(el))});
}

std::string to_string(const NormalWord& w) {
    if (w.is_identity()) return "1";
    std::ostringstream os;
    for (size_t i = 0; i < w.letters.size(); ++i) {
        if (i) os << " ";
        const Letter& l = w.letters[i];
        if (l.is_free()) {
            os << "x" << (l.free_index + 1);
            if (l.sign < 0) os << "^-1";
        } else {
            os << "a" << (l.atom + 1) << atom_el_str(w.ctx->atoms[l.atom], l.el);
        }
    }
    return os.str();
}

namespace {

struct Tok {
    std::string s;
};

std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : text) {
        if (c == '(') depth++;
        if (c == ')') depth--;
        if ((c == ' ' || c == '\t' || c == '\n') && depth == 0) {
            if (!cur.empty()) out.push_back(cur), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (depth != 0) throw Error("unbalanced parentheses in word");
    if (!cur.empty()) out.push_back(cur);
    return out;
}

} // namespace

NormalWord parse_word(const ContextPtr& ctx, const std::string& text) {
    std::vector<Letter> raw;
    for (const std::string& t : split_tokens(text)) {
        if (t == "1") continue;
        if (t[0] == 'x') {
            size_t caret = t.find('^');
            int idx = std::stoi(t.substr(1, caret == std::string::npos ? std::string::npos : caret - 1));
            int e = caret == std::string::npos ? 1 : std::stoi(t.substr(caret + 1));
            if (idx < 1 || idx > ctx->free_rank) throw Error("free letter out of range: " + t);
            for (int i = 0; i < std::abs(e); ++i)
                raw.push_back(Letter::free_letter(idx - 1, e < 0 ? -1 : 1));
            continue;
        }
        if (t[0] != 'a') throw Error("bad token: " + t);
        size_t p = 1;
        while (p < t.size() && isdigit(static_cast<unsigned char>(t[p]))) ++p;
        int atom = std::stoi(t.substr(1, p - 1)) - 1;
        if (atom < 0 || atom >= ctx->n_atoms()) throw Error("atom out of range: " + t);
        const AtomSpec& a = ctx->atoms[atom];
        AtomEl el;
        if (p == t.size()) {
            if (a.kind == AtomKind::FreeOfRank) throw Error("free atom token needs (...): " + t);
            el.e = 1; // bare generator
        } else if (t[p] == '^') {
            long long e = std::stoll(t.substr(p + 1));
            if (a.kind == AtomKind::FiniteCyclic) e = ((e % a.order) + a.order) % a.order;
            el.e = e;
        } else if (t[p] == ':') {
            el.e = std::stoll(t.substr(p + 1));
        } else if (t[p] == '(') {
            if (t.back() != ')') throw Error("bad free atom token: " + t);
            auto sub = GroupContext::free_context(a.rank);
            NormalWord inner = parse_word(sub, t.substr(p + 1, t.size() - p - 2));
            for (const Letter& l : inner.letters) el.w.push_back((l.free_index + 1) * l.sign);
        } else {
            throw Error("bad token: " + t);
        }
        raw.push_back(Letter::atom_letter(atom, std::move(el)));
    }
    return reduce(ctx, raw);
}

std::vector<NormalWord> enumerate_words(const ContextPtr& ctx, int max_len) {
    // alphabet of single letters used by the brute-force oracles
    std::vector<Letter> alpha;
    for (int i = 0; i < ctx->free_rank; ++i) {
        alpha.push_back(Letter::free_letter(i, 1));
        alpha.push_back(Letter::free_letter(i, -1));
    }
    for (int ai = 0; ai < ctx->n_atoms(); ++ai) {
        const AtomSpec& a = ctx->atoms[ai];
        switch (a.kind) {
            case AtomKind::FiniteCyclic:
                for (int e = 1; e < a.order; ++e) alpha.push_back(Letter::atom_letter(ai, AtomEl{e, {}}));
                break;
            case AtomKind::InfiniteCyclic:
                for (int e = -2; e <= 2; ++e)
                    if (e != 0) alpha.push_back(Letter::atom_letter(ai, AtomEl{e, {}}));
                break;
            case AtomKind::Opaque:
                for (int e = 1; e < a.table.order(); ++e) alpha.push_back(Letter::atom_letter(ai, AtomEl{e, {}}));
                break;
            case AtomKind::FreeOfRank:
                for (int j = 1; j <= a.rank; ++j) {
                    alpha.push_back(Letter::atom_letter(ai, AtomEl{0, {j}}));
                    alpha.push_back(Letter::atom_letter(ai, AtomEl{0, {-j}}));
                }
                break;
        }
    }
    std::vector<NormalWord> out{identity(ctx)};
    std::vector<NormalWord> layer{identity(ctx)};
    for (int len = 1; len <= max_len; ++len) {
        std::vector<NormalWord> next;
        for (const NormalWord& w : layer) {
            for (const Letter& l : alpha) {
                NormalWord v = mul(w, reduce(ctx, {l}));
                if (v.length() == len) next.push_back(v);
            }
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        out.insert(out.end(), next.begin(), next.end());
        layer = std::move(next);
    }
    return out;
}

} // namespace fsc
