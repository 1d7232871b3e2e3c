#pragma once

// Forward-mode scalar types for evaluate<T>: Dual carries a gradient,
// Taylor<T> a truncated power series in time.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "flatd2/expr.hpp"

namespace flatd2 {

/// Value with gradient. An empty gradient stands for the zero vector so that
/// constants need not know the dimension.
struct Dual {
    double v = 0.0;
    Eigen::VectorXd d;

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT
    Dual(double value, Eigen::VectorXd grad) : v(value), d(std::move(grad)) {}

    static Dual seed(double value, Eigen::Index dim, Eigen::Index k) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
        g[k] = 1.0;
        return {value, std::move(g)};
    }
    double grad(Eigen::Index k) const { return d.size() ? d[k] : 0.0; }
};

namespace detail {
inline Eigen::VectorXd gsum(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (!a.size()) return b;
    if (!b.size()) return a;
    return a + b;
}
inline Eigen::VectorXd gscale(const Eigen::VectorXd& a, double s) {
    if (!a.size()) return a;
    return a * s;
}
inline double scalar_of(const Dual& v) { return v.v; }
}  // namespace detail

inline Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, detail::gsum(a.d, b.d)}; }
inline Dual operator-(const Dual& a, const Dual& b) {
    return {a.v - b.v, detail::gsum(a.d, detail::gscale(b.d, -1.0))};
}
inline Dual operator-(const Dual& a) { return {-a.v, detail::gscale(a.d, -1.0)}; }
inline Dual operator*(const Dual& a, const Dual& b) {
    return {a.v * b.v, detail::gsum(detail::gscale(a.d, b.v), detail::gscale(b.d, a.v))};
}
inline Dual operator/(const Dual& a, const Dual& b) {
    if (b.v == 0.0) throw DomainError("division by zero");
    double inv = 1.0 / b.v;
    return {a.v * inv, detail::gscale(detail::gsum(a.d, detail::gscale(b.d, -a.v * inv)), inv)};
}
inline Dual& operator+=(Dual& a, const Dual& b) { return a = a + b; }

/// Chain rule helper: g(a) with g'(a) = slope.
inline Dual chain(const Dual& a, double value, double slope) { return {value, detail::gscale(a.d, slope)}; }

template <>
struct NumOps<Dual> {
    static Dual constant(const Rational& r) { return Dual(r.to_double()); }
    static Dual scalar(double v) { return Dual(v); }
    static Dual pow(const Dual& b, const Rational& e) {
        double v = detail::rpow_scalar(b.v, e);
        double s = e.to_double() * (e.is_one() ? 1.0 : detail::rpow_scalar(b.v, e - Rational(1)));
        return chain(b, v, s);
    }
    static Dual apply(Op op, const Dual& a) {
        double v = NumOps<double>::apply(op, a.v);
        switch (op) {
            case Op::Sin: return chain(a, v, std::cos(a.v));
            case Op::Cos: return chain(a, v, -std::sin(a.v));
            case Op::Tan: return chain(a, v, 1.0 + v * v);
            case Op::Asin: return chain(a, v, 1.0 / std::sqrt(1.0 - a.v * a.v));
            case Op::Atan: return chain(a, v, 1.0 / (1.0 + a.v * a.v));
            case Op::Exp: return chain(a, v, v);
            case Op::Ln: return chain(a, v, 1.0 / a.v);
            default: throw Error("not a function op");
        }
    }
};

/// Truncated power series sum_k c[k] t^k. All series in one computation share
/// the truncation order set through TaylorOrder.
template <class T>
struct Taylor {
    std::vector<T> c;

    static int& order() {
        thread_local int k = 0;
        return k;
    }
    static std::size_t len() { return static_cast<std::size_t>(order()) + 1; }

    Taylor() : c(len(), T(0.0)) {}
    explicit Taylor(const T& constant) : c(len(), T(0.0)) { c[0] = constant; }
    const T& operator[](std::size_t k) const { return c[k]; }
    T& operator[](std::size_t k) { return c[k]; }
};

/// Scope guard fixing the series truncation order.
template <class T>
class TaylorOrder {
public:
    explicit TaylorOrder(int k) : saved_(Taylor<T>::order()) { Taylor<T>::order() = k; }
    ~TaylorOrder() { Taylor<T>::order() = saved_; }
    TaylorOrder(const TaylorOrder&) = delete;
    TaylorOrder& operator=(const TaylorOrder&) = delete;

private:
    int saved_;
};

template <class T>
Taylor<T> operator+(const Taylor<T>& a, const Taylor<T>& b) {
    Taylor<T> r;
    for (std::size_t k = 0; k < r.c.size(); ++k) r[k] = a[k] + b[k];
    return r;
}
template <class T>
Taylor<T> operator-(const Taylor<T>& a, const Taylor<T>& b) {
    Taylor<T> r;
    for (std::size_t k = 0; k < r.c.size(); ++k) r[k] = a[k] - b[k];
    return r;
}
template <class T>
Taylor<T> operator*(const Taylor<T>& a, const Taylor<T>& b) {
    Taylor<T> r;
    const std::size_t n = r.c.size();
    for (std::size_t k = 0; k < n; ++k) {
        T s(0.0);
        for (std::size_t j = 0; j <= k; ++j) s = s + a[j] * b[k - j];
        r[k] = s;
    }
    return r;
}
template <class T>
Taylor<T> scale(const Taylor<T>& a, double s) {
    Taylor<T> r;
    for (std::size_t k = 0; k < r.c.size(); ++k) r[k] = a[k] * T(s);
    return r;
}

namespace detail {

template <class T>
Taylor<T> reciprocal(const Taylor<T>& a) {
    if (scalar_of(a[0]) == 0.0) throw DomainError("division by zero");
    Taylor<T> r;
    T inv = T(1.0) / a[0];
    r[0] = inv;
    for (std::size_t k = 1; k < r.c.size(); ++k) {
        T s(0.0);
        for (std::size_t j = 1; j <= k; ++j) s = s + a[j] * r[k - j];
        r[k] = -(s * inv);
    }
    return r;
}

// Series derivative d/dt, shifted down one slot.
template <class T>
Taylor<T> derivative(const Taylor<T>& a) {
    Taylor<T> r;
    for (std::size_t k = 0; k + 1 < r.c.size(); ++k) r[k] = a[k + 1] * T(static_cast<double>(k + 1));
    return r;
}

// g with g(0) = g0 and g' = q.
template <class T>
Taylor<T> integrate(const T& g0, const Taylor<T>& q) {
    Taylor<T> r;
    r[0] = g0;
    for (std::size_t k = 1; k < r.c.size(); ++k) r[k] = q[k - 1] * T(1.0 / static_cast<double>(k));
    return r;
}

template <class T>
void sin_cos(const Taylor<T>& a, Taylor<T>& s, Taylor<T>& c) {
    using Ops = NumOps<T>;
    s[0] = Ops::apply(Op::Sin, a[0]);
    c[0] = Ops::apply(Op::Cos, a[0]);
    for (std::size_t k = 1; k < s.c.size(); ++k) {
        T ss(0.0), cc(0.0);
        for (std::size_t j = 1; j <= k; ++j) {
            T ja = a[j] * T(static_cast<double>(j));
            ss = ss + ja * c[k - j];
            cc = cc + ja * s[k - j];
        }
        double inv = 1.0 / static_cast<double>(k);
        s[k] = ss * T(inv);
        c[k] = -(cc * T(inv));
    }
}

}  // namespace detail

template <class T>
struct NumOps<Taylor<T>> {
    using S = Taylor<T>;
    static S constant(const Rational& r) { return S(NumOps<T>::constant(r)); }

    static S pow(const S& a, const Rational& e) {
        if (e.is_integer()) {
            std::int64_t p = e.num();
            S base = p < 0 ? detail::reciprocal(a) : a;
            if (p < 0) p = -p;
            S r(T(1.0));
            while (p) {
                if (p & 1) r = r * base;
                p >>= 1;
                if (p) base = base * base;
            }
            return r;
        }
        // b' a = p a' b, solved coefficient-wise; needs a(0) > 0.
        S b;
        b[0] = NumOps<T>::pow(a[0], e);
        T inv = T(1.0) / a[0];
        const double p = e.to_double();
        for (std::size_t k = 1; k < b.c.size(); ++k) {
            T s(0.0);
            for (std::size_t j = 1; j <= k; ++j)
                s = s + a[j] * b[k - j] * T((p + 1.0) * static_cast<double>(j) - static_cast<double>(k));
            b[k] = s * inv * T(1.0 / static_cast<double>(k));
        }
        return b;
    }

    static S apply(Op op, const S& a) {
        switch (op) {
            case Op::Sin:
            case Op::Cos: {
                S s, c;
                detail::sin_cos(a, s, c);
                return op == Op::Sin ? s : c;
            }
            case Op::Tan: {
                S s, c;
                detail::sin_cos(a, s, c);
                NumOps<T>::apply(Op::Tan, a[0]);  // domain check
                return s * detail::reciprocal(c);
            }
            case Op::Exp: {
                S e;
                e[0] = NumOps<T>::apply(Op::Exp, a[0]);
                for (std::size_t k = 1; k < e.c.size(); ++k) {
                    T s(0.0);
                    for (std::size_t j = 1; j <= k; ++j) s = s + a[j] * e[k - j] * T(static_cast<double>(j));
                    e[k] = s * T(1.0 / static_cast<double>(k));
                }
                return e;
            }
            case Op::Ln:
                return detail::integrate(NumOps<T>::apply(Op::Ln, a[0]),
                                         detail::derivative(a) * detail::reciprocal(a));
            case Op::Atan: {
                S one(T(1.0));
                return detail::integrate(NumOps<T>::apply(Op::Atan, a[0]),
                                         detail::derivative(a) * detail::reciprocal(one + a * a));
            }
            case Op::Asin: {
                S one(T(1.0));
                S root = pow(one - a * a, Rational(-1, 2));
                return detail::integrate(NumOps<T>::apply(Op::Asin, a[0]), detail::derivative(a) * root);
            }
            default: throw Error("not a function op");
        }
    }
};

}  // namespace flatd2
