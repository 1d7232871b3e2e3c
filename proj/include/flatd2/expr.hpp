#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flatd2/error.hpp"
#include "flatd2/rational.hpp"

namespace flatd2 {

/// Interned variable name. Ids are process-local; anything that must be
/// reproducible (ordering, printing) goes through the name.
using Symbol = std::uint32_t;

Symbol intern(std::string_view name);
const std::string& symbol_name(Symbol s);

enum class Op : std::uint8_t { Const, Var, Add, Mul, Pow, Sin, Cos, Tan, Asin, Atan, Exp, Ln };

bool is_function(Op op);
const char* function_name(Op op);

class Expr;

struct Node {
    Op op;
    Rational value;             // constant value, or exponent for Pow
    Symbol sym = 0;             // Var only
    std::vector<Expr> args;     // Add/Mul terms; Pow base; function argument
    std::vector<Symbol> free;   // sorted symbol ids occurring below this node
    std::size_t hash = 0;
    std::size_t size = 1;       // node count of the tree
};

/// Immutable symbolic scalar expression. Construction goes through smart
/// constructors that keep a light canonical form: flattened sums and
/// products, folded rational constants, collected like terms and powers,
/// children sorted by a total structural order.
class Expr {
public:
    Expr();  // zero
    Expr(Rational c);  // NOLINT
    Expr(std::int64_t c) : Expr(Rational(c)) {}  // NOLINT
    Expr(int c) : Expr(Rational(c)) {}  // NOLINT

    static Expr var(std::string_view name);
    static Expr var(Symbol s);

    Op op() const { return node_->op; }
    const Rational& value() const { return node_->value; }
    Symbol sym() const { return node_->sym; }
    const std::vector<Expr>& args() const { return node_->args; }
    const std::vector<Symbol>& free_symbols() const { return node_->free; }
    std::size_t hash() const { return node_->hash; }
    std::size_t size() const { return node_->size; }
    const Node* node() const { return node_.get(); }
    long use_count() const { return node_.use_count(); }

    bool is_const() const { return op() == Op::Const; }
    bool is_zero() const { return is_const() && value().is_zero(); }
    bool is_one() const { return is_const() && value().is_one(); }
    bool depends_on(Symbol s) const;

    friend bool operator==(const Expr& a, const Expr& b);
    friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;

    friend Expr make_node(Op op, std::vector<Expr> args, Rational value, Symbol sym);
};

/// Total structural order (deterministic across runs: variables order by name).
int compare(const Expr& a, const Expr& b);
struct ExprLess {
    bool operator()(const Expr& a, const Expr& b) const { return compare(a, b) < 0; }
};

Expr add(std::vector<Expr> terms);
Expr mul(std::vector<Expr> factors);
Expr pow(const Expr& base, const Rational& exponent);
Expr func(Op op, const Expr& arg);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

inline Expr sin(const Expr& a) { return func(Op::Sin, a); }
inline Expr cos(const Expr& a) { return func(Op::Cos, a); }
inline Expr tan(const Expr& a) { return func(Op::Tan, a); }
inline Expr asin(const Expr& a) { return func(Op::Asin, a); }
inline Expr atan(const Expr& a) { return func(Op::Atan, a); }
inline Expr exp(const Expr& a) { return func(Op::Exp, a); }
inline Expr ln(const Expr& a) { return func(Op::Ln, a); }
inline Expr sqrt(const Expr& a) { return pow(a, Rational(1, 2)); }

using Substitution = std::map<Symbol, Expr>;

/// Exact partial derivative.
Expr diff(const Expr& e, Symbol v);
/// Simultaneous substitution of variables.
Expr substitute(const Expr& e, const Substitution& bindings);
/// Best-effort value-preserving simplification (expansion, sin^2+cos^2,
/// tan as sin/cos). No normal form is promised.
Expr simplify(const Expr& e);
/// Infix text accepted back by parse_expr.
std::string to_string(const Expr& e);

/// Free variable names in lexicographic order.
std::vector<std::string> free_names(const Expr& e);

// ---------------------------------------------------------------------------
// Numeric evaluation

/// Variable bindings indexed by symbol id; unbound entries hold NaN.
class Point {
public:
    void set(Symbol s, double v) {
        if (s >= vals_.size()) vals_.resize(s + 1, std::nan(""));
        vals_[s] = v;
    }
    void set(std::string_view name, double v) { set(intern(name), v); }
    double get(Symbol s) const {
        double v = s < vals_.size() ? vals_[s] : std::nan("");
        if (std::isnan(v)) throw DomainError("unbound variable '" + symbol_name(s) + "'");
        return v;
    }
    bool has(Symbol s) const { return s < vals_.size() && !std::isnan(vals_[s]); }
    double operator[](std::string_view name) const { return get(intern(name)); }

private:
    std::vector<double> vals_;
};

namespace detail {
inline double scalar_of(double v) { return v; }
inline double rpow_scalar(double b, const Rational& e) {
    if (e.is_integer()) {
        if (b == 0.0 && e.is_negative()) throw DomainError("division by zero");
        return std::pow(b, static_cast<double>(e.num()));
    }
    if (b < 0.0) throw DomainError("fractional power of a negative number");
    if (b == 0.0 && e.is_negative()) throw DomainError("division by zero");
    return std::pow(b, e.to_double());
}
}  // namespace detail

/// Numeric operations for the scalar type used by evaluate<T>. Specialized
/// for double here and for the jet types in jet.hpp.
template <class T>
struct NumOps;

template <>
struct NumOps<double> {
    static double constant(const Rational& r) { return r.to_double(); }
    static double scalar(double v) { return v; }
    static double pow(double b, const Rational& e) { return detail::rpow_scalar(b, e); }
    static double apply(Op op, double a) {
        switch (op) {
            case Op::Sin: return std::sin(a);
            case Op::Cos: return std::cos(a);
            case Op::Tan:
                if (std::cos(a) == 0.0) throw DomainError("tan at a pole");
                return std::tan(a);
            case Op::Asin:
                if (a < -1.0 || a > 1.0) throw DomainError("asin argument outside [-1,1]");
                return std::asin(a);
            case Op::Atan: return std::atan(a);
            case Op::Exp: return std::exp(a);
            case Op::Ln:
                if (a <= 0.0) throw DomainError("ln of a non-positive number");
                return std::log(a);
            default: throw Error("not a function op");
        }
    }
};

/// Evaluates `e` with variables supplied by `lookup(Symbol) -> T`.
/// Shared subtrees are evaluated once.
template <class T, class Lookup>
class Evaluator {
public:
    explicit Evaluator(Lookup lookup) : lookup_(std::move(lookup)) {}

    T operator()(const Expr& e) {
        const bool shared = e.use_count() > 1 && e.size() > 4;
        if (shared) {
            auto it = memo_.find(e.node());
            if (it != memo_.end()) return it->second;
        }
        T r = compute(e);
        if (shared) memo_.emplace(e.node(), r);
        return r;
    }

private:
    T compute(const Expr& e) {
        using Ops = NumOps<T>;
        switch (e.op()) {
            case Op::Const: return Ops::constant(e.value());
            case Op::Var: return lookup_(e.sym());
            case Op::Add: {
                T acc = (*this)(e.args()[0]);
                for (std::size_t i = 1; i < e.args().size(); ++i) acc = acc + (*this)(e.args()[i]);
                return acc;
            }
            case Op::Mul: {
                T acc = (*this)(e.args()[0]);
                for (std::size_t i = 1; i < e.args().size(); ++i) acc = acc * (*this)(e.args()[i]);
                return acc;
            }
            case Op::Pow: return Ops::pow((*this)(e.args()[0]), e.value());
            default: return Ops::apply(e.op(), (*this)(e.args()[0]));
        }
    }

    Lookup lookup_;
    std::unordered_map<const Node*, T> memo_;
};

template <class T, class Lookup>
T evaluate(const Expr& e, Lookup&& lookup) {
    Evaluator<T, std::decay_t<Lookup>> ev(std::forward<Lookup>(lookup));
    return ev(e);
}

/// Double evaluation; throws DomainError on 1/0, asin outside [-1,1],
/// ln of non-positive, or a non-finite result.
double eval(const Expr& e, const Point& p);

/// Value plus a rounding-error scale: |true - computed| is roughly
/// eps * scale. Used by the zero test.
struct ScaledValue {
    double value = 0.0;
    double scale = 0.0;
};
ScaledValue eval_scaled(const Expr& e, const Point& p);

}  // namespace flatd2

template <>
struct std::hash<flatd2::Expr> {
    std::size_t operator()(const flatd2::Expr& e) const { return e.hash(); }
};
