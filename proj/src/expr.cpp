#include "flatd2/expr.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>

namespace flatd2 {

// ---------------------------------------------------------------------------
// Symbol table

namespace {

struct SymbolTable {
    std::shared_mutex mu;
    std::deque<std::string> names;
    std::unordered_map<std::string, Symbol> ids;
};

SymbolTable& table() {
    static SymbolTable t;
    return t;
}

std::size_t mix(std::size_t h, std::size_t v) {
    return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

}  // namespace

Symbol intern(std::string_view name) {
    auto& t = table();
    {
        std::shared_lock lock(t.mu);
        auto it = t.ids.find(std::string(name));
        if (it != t.ids.end()) return it->second;
    }
    std::unique_lock lock(t.mu);
    auto it = t.ids.find(std::string(name));
    if (it != t.ids.end()) return it->second;
    Symbol id = static_cast<Symbol>(t.names.size());
    t.names.emplace_back(name);
    t.ids.emplace(std::string(name), id);
    return id;
}

const std::string& symbol_name(Symbol s) {
    auto& t = table();
    std::shared_lock lock(t.mu);
    return t.names.at(s);
}

bool is_function(Op op) {
    return op == Op::Sin || op == Op::Cos || op == Op::Tan || op == Op::Asin || op == Op::Atan ||
           op == Op::Exp || op == Op::Ln;
}

const char* function_name(Op op) {
    switch (op) {
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Tan: return "tan";
        case Op::Asin: return "asin";
        case Op::Atan: return "atan";
        case Op::Exp: return "exp";
        case Op::Ln: return "ln";
        default: return "?";
    }
}

// ---------------------------------------------------------------------------
// Node construction

Expr make_node(Op op, std::vector<Expr> args, Rational value, Symbol sym) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = value;
    n->sym = sym;
    std::size_t h = mix(0, static_cast<std::size_t>(op));
    if (op == Op::Const || op == Op::Pow) {
        h = mix(h, std::hash<std::int64_t>{}(value.num()));
        h = mix(h, std::hash<std::int64_t>{}(value.den()));
    }
    if (op == Op::Var) {
        h = mix(h, std::hash<std::string>{}(symbol_name(sym)));
        n->free.push_back(sym);
    }
    std::size_t size = 1;
    for (const auto& a : args) {
        h = mix(h, a.hash());
        size += a.size();
        if (n->free.empty()) {
            n->free = a.free_symbols();
        } else if (!a.free_symbols().empty()) {
            std::vector<Symbol> merged;
            merged.reserve(n->free.size() + a.free_symbols().size());
            std::set_union(n->free.begin(), n->free.end(), a.free_symbols().begin(),
                           a.free_symbols().end(), std::back_inserter(merged));
            n->free = std::move(merged);
        }
    }
    n->args = std::move(args);
    n->hash = h;
    n->size = size;
    return Expr(std::shared_ptr<const Node>(std::move(n)));
}

namespace {

const Expr& zero_expr() {
    static const Expr z = make_node(Op::Const, {}, Rational(0), 0);
    return z;
}

}  // namespace

Expr::Expr() : Expr(zero_expr()) {}

Expr::Expr(Rational c) : Expr(c.is_zero() ? zero_expr() : make_node(Op::Const, {}, c, 0)) {}

Expr Expr::var(std::string_view name) { return var(intern(name)); }
Expr Expr::var(Symbol s) { return make_node(Op::Var, {}, Rational(0), s); }

bool Expr::depends_on(Symbol s) const {
    return std::binary_search(node_->free.begin(), node_->free.end(), s);
}

bool operator==(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.hash() != b.hash() || a.size() != b.size()) return false;
    return compare(a, b) == 0;
}

// ---------------------------------------------------------------------------
// Ordering

namespace {

int op_rank(Op op) {
    switch (op) {
        case Op::Const: return 0;
        case Op::Var: return 1;
        case Op::Pow: return 2;
        case Op::Mul: return 3;
        case Op::Add: return 4;
        default: return 5 + static_cast<int>(op);
    }
}

}  // namespace

int compare(const Expr& a, const Expr& b) {
    if (a.node() == b.node()) return 0;
    int ra = op_rank(a.op()), rb = op_rank(b.op());
    if (ra != rb) return ra < rb ? -1 : 1;
    switch (a.op()) {
        case Op::Const:
            if (a.value() == b.value()) return 0;
            return a.value() < b.value() ? -1 : 1;
        case Op::Var: {
            int c = symbol_name(a.sym()).compare(symbol_name(b.sym()));
            return c < 0 ? -1 : (c > 0 ? 1 : 0);
        }
        case Op::Pow: {
            int c = compare(a.args()[0], b.args()[0]);
            if (c != 0) return c;
            if (a.value() == b.value()) return 0;
            return a.value() < b.value() ? -1 : 1;
        }
        default: {
            const auto& x = a.args();
            const auto& y = b.args();
            std::size_t n = std::min(x.size(), y.size());
            for (std::size_t i = 0; i < n; ++i) {
                int c = compare(x[i], y[i]);
                if (c != 0) return c;
            }
            if (x.size() != y.size()) return x.size() < y.size() ? -1 : 1;
            return 0;
        }
    }
}

// ---------------------------------------------------------------------------
// Smart constructors

namespace {

// Splits a term into rational coefficient and remaining expression.
std::pair<Rational, Expr> split_coeff(const Expr& t) {
    if (t.is_const()) return {t.value(), Expr(1)};
    if (t.op() == Op::Mul && t.args()[0].is_const()) {
        const auto& a = t.args();
        if (a.size() == 2) return {a[0].value(), a[1]};
        std::vector<Expr> rest(a.begin() + 1, a.end());
        return {a[0].value(), make_node(Op::Mul, std::move(rest), Rational(0), 0)};
    }
    return {Rational(1), t};
}

std::pair<Expr, Rational> split_power(const Expr& f) {
    if (f.op() == Op::Pow) return {f.args()[0], f.value()};
    return {f, Rational(1)};
}

bool int_pow(Rational base, std::int64_t e, Rational& out) {
    try {
        Rational r(1);
        bool neg = e < 0;
        std::int64_t k = neg ? -e : e;
        if (k > 64) return false;
        for (std::int64_t i = 0; i < k; ++i) r = r * base;
        if (neg) {
            if (r.is_zero()) throw DomainError("division by zero");
            r = Rational(1) / r;
        }
        out = r;
        return true;
    } catch (const std::overflow_error&) {
        return false;
    }
}

bool exact_root(std::int64_t v, std::int64_t k, std::int64_t& out) {
    if (v < 0) {
        if (k % 2 == 0) return false;
        std::int64_t r;
        if (!exact_root(-v, k, r)) return false;
        out = -r;
        return true;
    }
    double guess = std::pow(static_cast<double>(v), 1.0 / static_cast<double>(k));
    for (std::int64_t c = std::max<std::int64_t>(0, std::llround(guess) - 1); c <= std::llround(guess) + 1; ++c) {
        __int128 p = 1;
        for (std::int64_t i = 0; i < k && p <= v; ++i) p *= c;
        if (p == v) {
            out = c;
            return true;
        }
    }
    return false;
}

Expr pow_const(const Rational& b, const Rational& e) {
    if (e.is_integer()) {
        Rational out;
        if (int_pow(b, e.num(), out)) return Expr(out);
    } else if (!b.is_negative()) {
        std::int64_t rn, rd;
        if (exact_root(b.num(), e.den(), rn) && exact_root(b.den(), e.den(), rd)) {
            Rational out;
            if (int_pow(Rational(rn, rd), e.num(), out)) return Expr(out);
        }
    }
    return make_node(Op::Pow, {Expr(b)}, e, 0);
}

}  // namespace

Expr pow(const Expr& base, const Rational& e) {
    if (e.is_zero()) return Expr(1);
    if (e.is_one()) return base;
    if (base.is_const()) {
        if (base.value().is_zero()) {
            if (e.is_negative()) throw DomainError("division by zero");
            return Expr(0);
        }
        if (base.value().is_one()) return Expr(1);
        return pow_const(base.value(), e);
    }
    if (base.op() == Op::Pow && e.is_integer()) return pow(base.args()[0], base.value() * e);
    if (base.op() == Op::Mul) {
        if (e.is_integer()) {
            std::vector<Expr> fs;
            for (const auto& f : base.args()) fs.push_back(pow(f, e));
            return mul(std::move(fs));
        }
        auto [c, rest] = split_coeff(base);
        if (!c.is_one() && !c.is_negative()) return mul({pow_const(c, e), pow(rest, e)});
    }
    return make_node(Op::Pow, {base}, e, 0);
}

Expr mul(std::vector<Expr> factors) {
    Rational coeff(1);
    std::vector<std::pair<Expr, Rational>> powers;
    std::vector<Expr> stack(factors.rbegin(), factors.rend());
    while (!stack.empty()) {
        Expr f = std::move(stack.back());
        stack.pop_back();
        if (f.op() == Op::Mul) {
            for (auto it = f.args().rbegin(); it != f.args().rend(); ++it) stack.push_back(*it);
            continue;
        }
        if (f.is_const()) {
            coeff *= f.value();
            continue;
        }
        powers.push_back(split_power(f));
    }
    if (coeff.is_zero()) return Expr(0);
    std::sort(powers.begin(), powers.end(),
              [](const auto& a, const auto& b) { return compare(a.first, b.first) < 0; });
    std::vector<Expr> out;
    for (std::size_t i = 0; i < powers.size();) {
        Rational e = powers[i].second;
        std::size_t j = i + 1;
        while (j < powers.size() && powers[j].first == powers[i].first) e += powers[j++].second;
        Expr p = pow(powers[i].first, e);
        if (p.is_const()) {
            coeff *= p.value();
        } else if (p.op() == Op::Mul) {
            // pow may split a constant out of a product base
            for (const auto& g : p.args()) {
                if (g.is_const())
                    coeff *= g.value();
                else
                    out.push_back(g);
            }
        } else {
            out.push_back(p);
        }
        i = j;
    }
    if (coeff.is_zero()) return Expr(0);
    std::sort(out.begin(), out.end(), ExprLess{});
    if (out.empty()) return Expr(coeff);
    if (out.size() == 1 && coeff.is_one()) return out[0];
    if (out.size() == 1 && out[0].op() == Op::Add) {
        // numeric coefficients distribute over sums
        std::vector<Expr> terms;
        for (const auto& t : out[0].args()) terms.push_back(mul({Expr(coeff), t}));
        return add(std::move(terms));
    }
    if (!coeff.is_one()) out.insert(out.begin(), Expr(coeff));
    return make_node(Op::Mul, std::move(out), Rational(0), 0);
}

Expr add(std::vector<Expr> terms) {
    Rational constant(0);
    std::vector<std::pair<Expr, Rational>> parts;
    std::vector<Expr> stack(terms.rbegin(), terms.rend());
    while (!stack.empty()) {
        Expr t = std::move(stack.back());
        stack.pop_back();
        if (t.op() == Op::Add) {
            for (auto it = t.args().rbegin(); it != t.args().rend(); ++it) stack.push_back(*it);
            continue;
        }
        if (t.is_const()) {
            constant += t.value();
            continue;
        }
        auto [c, rest] = split_coeff(t);
        parts.emplace_back(rest, c);
    }
    std::sort(parts.begin(), parts.end(),
              [](const auto& a, const auto& b) { return compare(a.first, b.first) < 0; });
    std::vector<Expr> out;
    if (!constant.is_zero()) out.push_back(Expr(constant));
    for (std::size_t i = 0; i < parts.size();) {
        Rational c = parts[i].second;
        std::size_t j = i + 1;
        while (j < parts.size() && parts[j].first == parts[i].first) c += parts[j++].second;
        if (!c.is_zero()) out.push_back(c.is_one() ? parts[i].first : mul({Expr(c), parts[i].first}));
        i = j;
    }
    if (out.empty()) return Expr(0);
    if (out.size() == 1) return out[0];
    std::sort(out.begin(), out.end(), ExprLess{});
    return make_node(Op::Add, std::move(out), Rational(0), 0);
}

namespace {

// True when the canonical sign of `a` is negative (leading coefficient < 0).
bool leading_negative(const Expr& a) {
    if (a.is_const()) return a.value().is_negative();
    if (a.op() == Op::Mul) return a.args()[0].is_const() && a.args()[0].value().is_negative();
    if (a.op() == Op::Add) {
        // sign of the term whose coefficient-free part is smallest; negation
        // keeps that part, so the choice is stable
        std::optional<Expr> best;
        Rational sign;
        for (const auto& t : a.args()) {
            if (t.is_const()) continue;
            auto [c, rest] = split_coeff(t);
            if (!best || compare(rest, *best) < 0) {
                best = rest;
                sign = c;
            }
        }
        return best && sign.is_negative();
    }
    return false;
}

}  // namespace

Expr func(Op op, const Expr& a) {
    if (a.is_zero()) {
        switch (op) {
            case Op::Sin: case Op::Tan: case Op::Asin: case Op::Atan: return Expr(0);
            case Op::Cos: case Op::Exp: return Expr(1);
            default: break;
        }
    }
    if (op == Op::Ln && a.is_one()) return Expr(0);
    if (op == Op::Exp && a.op() == Op::Ln) return a.args()[0];
    if (op == Op::Ln && a.op() == Op::Exp) return a.args()[0];
    const bool odd = op == Op::Sin || op == Op::Tan || op == Op::Asin || op == Op::Atan;
    if ((odd || op == Op::Cos) && leading_negative(a)) {
        Expr inner = func(op, -a);
        return odd ? -inner : inner;
    }
    return make_node(op, {a}, Rational(0), 0);
}

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return add({a, mul({Expr(-1), b})}); }
Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
Expr operator/(const Expr& a, const Expr& b) {
    if (b.is_zero()) throw DomainError("division by zero");
    return mul({a, pow(b, Rational(-1))});
}
Expr operator-(const Expr& a) { return mul({Expr(-1), a}); }

// ---------------------------------------------------------------------------
// Calculus and rewriting

Expr diff(const Expr& e, Symbol v) {
    if (!e.depends_on(v)) return Expr(0);
    switch (e.op()) {
        case Op::Const: return Expr(0);
        case Op::Var: return Expr(e.sym() == v ? 1 : 0);
        case Op::Add: {
            std::vector<Expr> ts;
            for (const auto& t : e.args()) ts.push_back(diff(t, v));
            return add(std::move(ts));
        }
        case Op::Mul: {
            std::vector<Expr> ts;
            const auto& fs = e.args();
            for (std::size_t i = 0; i < fs.size(); ++i) {
                if (!fs[i].depends_on(v)) continue;
                std::vector<Expr> prod;
                for (std::size_t j = 0; j < fs.size(); ++j) prod.push_back(i == j ? diff(fs[j], v) : fs[j]);
                ts.push_back(mul(std::move(prod)));
            }
            return add(std::move(ts));
        }
        case Op::Pow: {
            const Expr& b = e.args()[0];
            return mul({Expr(e.value()), pow(b, e.value() - Rational(1)), diff(b, v)});
        }
        default: break;
    }
    const Expr& a = e.args()[0];
    Expr da = diff(a, v);
    switch (e.op()) {
        case Op::Sin: return cos(a) * da;
        case Op::Cos: return -(sin(a) * da);
        case Op::Tan: return pow(cos(a), Rational(-2)) * da;
        case Op::Asin: return pow(Expr(1) - pow(a, 2), Rational(-1, 2)) * da;
        case Op::Atan: return pow(Expr(1) + pow(a, 2), Rational(-1)) * da;
        case Op::Exp: return e * da;
        case Op::Ln: return pow(a, Rational(-1)) * da;
        default: throw Error("diff: unexpected node");
    }
}

namespace {

Expr rebuild(const Expr& e, std::vector<Expr> args) {
    switch (e.op()) {
        case Op::Add: return add(std::move(args));
        case Op::Mul: return mul(std::move(args));
        case Op::Pow: return pow(args[0], e.value());
        default: return func(e.op(), args[0]);
    }
}

bool touches(const Expr& e, const Substitution& b) {
    for (Symbol s : e.free_symbols())
        if (b.count(s)) return true;
    return false;
}

Expr subst_rec(const Expr& e, const Substitution& b, std::unordered_map<const Node*, Expr>& memo) {
    if (!touches(e, b)) return e;
    if (e.op() == Op::Var) return b.at(e.sym());
    auto it = memo.find(e.node());
    if (it != memo.end()) return it->second;
    std::vector<Expr> args;
    args.reserve(e.args().size());
    for (const auto& a : e.args()) args.push_back(subst_rec(a, b, memo));
    Expr r = rebuild(e, std::move(args));
    memo.emplace(e.node(), r);
    return r;
}

}  // namespace

Expr substitute(const Expr& e, const Substitution& bindings) {
    if (bindings.empty()) return e;
    std::unordered_map<const Node*, Expr> memo;
    return subst_rec(e, bindings, memo);
}

namespace {

constexpr std::size_t kExpandLimit = 400;

// Terms of a sum (a non-sum is a one-term sum).
std::vector<Expr> terms_of(const Expr& e) {
    if (e.op() == Op::Add) return e.args();
    return {e};
}

// Distributes products over sums when the result stays small.
Expr expand_mul(const std::vector<Expr>& factors) {
    std::vector<Expr> acc{Expr(1)};
    for (const auto& f : factors) {
        std::vector<Expr> fts;
        if (f.op() == Op::Add) {
            fts = f.args();
        } else if (f.op() == Op::Pow && f.args()[0].op() == Op::Add && f.value().is_integer() &&
                   f.value().num() > 1 && f.value().num() <= 4) {
            Expr p(1);
            std::vector<Expr> cur{Expr(1)};
            for (std::int64_t k = 0; k < f.value().num(); ++k) {
                std::vector<Expr> next;
                for (const auto& a : cur)
                    for (const auto& t : f.args()[0].args()) next.push_back(mul({a, t}));
                if (next.size() > kExpandLimit) return mul(factors);
                cur = terms_of(add(std::move(next)));
            }
            fts = std::move(cur);
        } else {
            fts = {f};
        }
        if (acc.size() * fts.size() > kExpandLimit) return mul(factors);
        std::vector<Expr> next;
        next.reserve(acc.size() * fts.size());
        for (const auto& a : acc)
            for (const auto& t : fts) next.push_back(mul({a, t}));
        acc = std::move(next);
    }
    return add(std::move(acc));
}

// c1*sin(a)^2*R + c2*cos(a)^2*R  ->  c2*R + (c1-c2)*sin(a)^2*R
Expr collapse_trig(const Expr& sum) {
    if (sum.op() != Op::Add) return sum;
    std::vector<std::pair<Rational, Expr>> ts;
    for (const auto& t : sum.args()) {
        auto [c, r] = split_coeff(t);
        ts.emplace_back(c, r);
    }
    bool changed = true;
    int guard = 0;
    while (changed && guard++ < 64) {
        changed = false;
        for (std::size_t i = 0; i < ts.size() && !changed; ++i) {
            const Expr& r = ts[i].second;
            std::vector<Expr> fs = r.op() == Op::Mul ? r.args() : std::vector<Expr>{r};
            for (std::size_t k = 0; k < fs.size() && !changed; ++k) {
                auto [base, e] = split_power(fs[k]);
                if (base.op() != Op::Sin || !e.is_integer() || e.num() < 2) continue;
                std::vector<Expr> restf = fs;
                restf[k] = pow(base, e - Rational(2));
                Expr rest = mul(restf);
                Expr cos_term = mul({rest, pow(cos(base.args()[0]), 2)});
                for (std::size_t j = 0; j < ts.size(); ++j) {
                    if (j == i || !(ts[j].second == cos_term)) continue;
                    Rational c1 = ts[i].first, c2 = ts[j].first;
                    Expr sin_part = ts[i].second;
                    std::vector<std::pair<Rational, Expr>> next;
                    for (std::size_t m = 0; m < ts.size(); ++m)
                        if (m != i && m != j) next.push_back(ts[m]);
                    next.emplace_back(c2, rest);
                    if (!(c1 - c2).is_zero()) next.emplace_back(c1 - c2, sin_part);
                    // re-normalize through add to merge with existing terms
                    std::vector<Expr> as;
                    for (auto& [c, x] : next) as.push_back(mul({Expr(c), x}));
                    Expr merged = add(std::move(as));
                    ts.clear();
                    for (const auto& t : terms_of(merged)) {
                        auto [cc, rr] = split_coeff(t);
                        ts.emplace_back(cc, rr);
                    }
                    changed = true;
                    break;
                }
            }
        }
    }
    std::vector<Expr> as;
    for (auto& [c, x] : ts) as.push_back(mul({Expr(c), x}));
    return add(std::move(as));
}

Expr simplify_rec(const Expr& e, std::unordered_map<const Node*, Expr>& memo) {
    if (e.op() == Op::Const || e.op() == Op::Var) return e;
    auto it = memo.find(e.node());
    if (it != memo.end()) return it->second;
    std::vector<Expr> args;
    for (const auto& a : e.args()) args.push_back(simplify_rec(a, memo));
    Expr r;
    switch (e.op()) {
        case Op::Add: r = collapse_trig(add(std::move(args))); break;
        case Op::Mul: r = expand_mul(args); break;
        case Op::Pow: {
            r = pow(args[0], e.value());
            if (r.op() == Op::Pow && r.args()[0].op() == Op::Add) r = expand_mul({r});
            break;
        }
        case Op::Tan: r = sin(args[0]) * pow(cos(args[0]), Rational(-1)); break;
        default: r = func(e.op(), args[0]); break;
    }
    if (r.op() == Op::Add) r = collapse_trig(r);
    memo.emplace(e.node(), r);
    return r;
}

}  // namespace

Expr simplify(const Expr& e) {
    std::unordered_map<const Node*, Expr> memo;
    Expr r = simplify_rec(e, memo);
    // second pass: expansion can expose new like terms inside sums of products
    if (!(r == e)) {
        memo.clear();
        r = simplify_rec(r, memo);
    }
    return r;
}

std::vector<std::string> free_names(const Expr& e) {
    std::vector<std::string> out;
    for (Symbol s : e.free_symbols()) out.push_back(symbol_name(s));
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

// precedence: 1 sum, 2 product, 3 unary minus, 4 power, 5 atom
std::string print(const Expr& e, int ctx);

std::string print_pos_rational(const Rational& r) { return r.str(); }

std::string wrap(const std::string& s, int prec, int ctx) { return prec < ctx ? "(" + s + ")" : s; }

std::string print_power(const Expr& base, const Rational& e) {
    if (e == Rational(1, 2)) return "sqrt(" + print(base, 0) + ")";
    std::string b = print(base, 5);
    if (base.is_const() && (base.value().is_negative() || !base.value().is_integer())) b = "(" + print(base, 0) + ")";
    std::string ex = e.is_integer() && !e.is_negative() ? e.str() : "(" + e.str() + ")";
    return b + "^" + ex;
}

// Product of factors with positive exponents; `coeff` is a positive rational.
std::string print_product(const Rational& coeff, const std::vector<Expr>& factors) {
    std::vector<std::string> num, den;
    if (coeff.num() != 1) num.push_back(std::to_string(coeff.num()));
    if (coeff.den() != 1) den.push_back(std::to_string(coeff.den()));
    for (const auto& f : factors) {
        auto [b, ex] = split_power(f);
        if (ex.is_negative()) {
            Rational pe = -ex;
            if (pe.is_one())
                den.push_back(print(b, 4));
            else
                den.push_back(print_power(b, pe));
        } else {
            num.push_back(f.op() == Op::Pow ? print_power(b, ex) : print(f, 3));
        }
    }
    std::string s;
    if (num.empty()) s = "1";
    for (std::size_t i = 0; i < num.size(); ++i) s += (i ? "*" : "") + num[i];
    if (!den.empty()) {
        std::string d;
        for (std::size_t i = 0; i < den.size(); ++i) d += (i ? "*" : "") + den[i];
        s += "/" + (den.size() > 1 ? "(" + d + ")" : d);
    }
    return s;
}

std::string print(const Expr& e, int ctx) {
    switch (e.op()) {
        case Op::Const: {
            const Rational& v = e.value();
            if (v.is_negative()) return wrap("-" + print_pos_rational(-v), v.is_integer() ? 3 : 2, ctx);
            return wrap(print_pos_rational(v), v.is_integer() ? 5 : 2, ctx);
        }
        case Op::Var: return symbol_name(e.sym());
        case Op::Add: {
            std::string s;
            bool first = true;
            // constant term goes last for readability
            std::vector<Expr> ts = e.args();
            if (!ts.empty() && ts[0].is_const()) std::rotate(ts.begin(), ts.begin() + 1, ts.end());
            for (const auto& t : ts) {
                auto [c, rest] = split_coeff(t);
                if (first) {
                    s = print(t, 2);
                    first = false;
                } else if (c.is_negative()) {
                    s += " - " + print(mul({Expr(-c), rest}), 2);
                } else {
                    s += " + " + print(t, 2);
                }
            }
            return wrap(s, 1, ctx);
        }
        case Op::Mul: {
            auto [c, rest] = split_coeff(e);
            std::vector<Expr> fs = rest.op() == Op::Mul ? rest.args() : std::vector<Expr>{rest};
            if (c.is_negative()) return wrap("-" + print_product(-c, fs), 3, ctx);
            return wrap(print_product(c, fs), 2, ctx);
        }
        case Op::Pow: {
            const Rational& ex = e.value();
            if (ex.is_negative()) return wrap(print_product(Rational(1), {e}), 2, ctx);
            if (ex == Rational(1, 2)) return print_power(e.args()[0], ex);
            return wrap(print_power(e.args()[0], ex), 4, ctx);
        }
        default: return std::string(function_name(e.op())) + "(" + print(e.args()[0], 0) + ")";
    }
}

}  // namespace

std::string to_string(const Expr& e) { return print(e, 0); }

// ---------------------------------------------------------------------------
// Evaluation

double eval(const Expr& e, const Point& p) {
    double v = evaluate<double>(e, [&p](Symbol s) { return p.get(s); });
    if (!std::isfinite(v)) throw DomainError("non-finite value");
    return v;
}

static ScaledValue operator+(const ScaledValue& a, const ScaledValue& b) {
    return {a.value + b.value, a.scale + b.scale};
}
static ScaledValue operator*(const ScaledValue& a, const ScaledValue& b) {
    return {a.value * b.value, a.scale * b.scale};
}

template <>
struct NumOps<ScaledValue> {
    static ScaledValue constant(const Rational& r) {
        double v = r.to_double();
        return {v, std::abs(v)};
    }
    static ScaledValue pow(const ScaledValue& b, const Rational& e) {
        double v = detail::rpow_scalar(b.value, e);
        double ed = e.to_double();
        double dv = std::abs(ed) * std::abs(detail::rpow_scalar(b.value, e - Rational(1)));
        return {v, std::abs(v) + dv * b.scale};
    }
    static ScaledValue apply(Op op, const ScaledValue& a) {
        double v = NumOps<double>::apply(op, a.value);
        double d = 0.0;
        switch (op) {
            case Op::Sin: d = std::abs(std::cos(a.value)); break;
            case Op::Cos: d = std::abs(std::sin(a.value)); break;
            case Op::Tan: d = 1.0 + v * v; break;
            case Op::Asin: d = 1.0 / std::sqrt(std::max(1e-300, 1.0 - a.value * a.value)); break;
            case Op::Atan: d = 1.0 / (1.0 + a.value * a.value); break;
            case Op::Exp: d = std::abs(v); break;
            case Op::Ln: d = 1.0 / std::abs(a.value); break;
            default: break;
        }
        return {v, std::abs(v) + d * a.scale};
    }
};

ScaledValue eval_scaled(const Expr& e, const Point& p) {
    ScaledValue r = evaluate<ScaledValue>(e, [&p](Symbol s) {
        double v = p.get(s);
        return ScaledValue{v, std::abs(v)};
    });
    if (!std::isfinite(r.value) || !std::isfinite(r.scale)) throw DomainError("non-finite value");
    return r;
}

}  // namespace flatd2
