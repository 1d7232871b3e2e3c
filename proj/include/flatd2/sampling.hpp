#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "flatd2/expr.hpp"

namespace flatd2 {

struct Tolerances {
    double zero = 1e-9;
    double rank = 1e-8;
    int samples = 25;
};

struct ParamRange {
    double lo = 0.1;
    double hi = 2.0;
};

/// Condition a sample point must satisfy: |g| > margin or g > margin.
struct Guard {
    enum Kind { NonZero, Positive };
    Expr g;
    Kind kind = NonZero;
};

/// Where generic points are drawn: sampled variables, parameter ranges and
/// guards keeping evaluation away from singularities.
struct Domain {
    std::vector<Symbol> vars;
    std::vector<std::pair<Symbol, ParamRange>> params;
    std::vector<Guard> guards;

    void add_var(Symbol s);
    void add_param(Symbol s, ParamRange r);
    void add_guard(const Expr& g, Guard::Kind kind);
    /// Adds the guards implied by the singularities occurring in `e`
    /// (denominators, asin, ln, fractional powers, tan).
    void add_implicit_guards(const Expr& e);
    bool is_param(Symbol s) const;
};

/// Seeded random source plus tolerances. Child contexts are derived from the
/// seed alone, so parallel branches stay reproducible.
class Context {
public:
    explicit Context(std::uint64_t seed = 20210501, Tolerances tol = {});

    const Tolerances& tol() const { return tol_; }
    std::uint64_t seed() const { return seed_; }
    Context child(std::uint64_t index) const;
    std::mt19937_64& rng() { return rng_; }

    /// Draws `count` admissible points binding every variable of `d` plus the
    /// `extra` symbols. Throws SamplingError when the budget runs out.
    std::vector<Point> points(const Domain& d, int count, const std::vector<Symbol>& extra = {});
    Point point(const Domain& d, const std::vector<Symbol>& extra = {});

private:
    std::uint64_t seed_;
    Tolerances tol_;
    std::mt19937_64 rng_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Generic-point zero test: true iff |e(p)| / (1 + scale(p)) <= tol.zero at
/// every sampled point. Points where e itself is undefined are redrawn.
bool is_zero(const Expr& e, const Domain& d, Context& ctx, int samples = 0);

}  // namespace flatd2
