#include "flatd2/sampling.hpp"

#include <algorithm>

namespace flatd2 {

namespace {

constexpr double kGuardMargin = 1e-2;
constexpr double kVarLo = 0.05;
constexpr double kVarHi = 1.5;
constexpr int kBudgetFactor = 40;

bool contains(const std::vector<Symbol>& v, Symbol s) { return std::find(v.begin(), v.end(), s) != v.end(); }

void collect_guards(const Expr& e, Domain& d) {
    for (const auto& a : e.args()) collect_guards(a, d);
    switch (e.op()) {
        case Op::Pow:
            if (!e.value().is_integer())
                d.add_guard(e.args()[0], Guard::Positive);
            else if (e.value().is_negative())
                d.add_guard(e.args()[0], Guard::NonZero);
            break;
        case Op::Ln: d.add_guard(e.args()[0], Guard::Positive); break;
        case Op::Asin: d.add_guard(Expr(1) - pow(e.args()[0], 2), Guard::Positive); break;
        case Op::Tan: d.add_guard(cos(e.args()[0]), Guard::NonZero); break;
        default: break;
    }
}

}  // namespace

void Domain::add_var(Symbol s) {
    if (!contains(vars, s) && !is_param(s)) vars.push_back(s);
}

void Domain::add_param(Symbol s, ParamRange r) {
    for (auto& [p, range] : params)
        if (p == s) {
            range = r;
            return;
        }
    params.emplace_back(s, r);
    vars.erase(std::remove(vars.begin(), vars.end(), s), vars.end());
}

void Domain::add_guard(const Expr& g, Guard::Kind kind) {
    if (g.is_const()) return;
    for (const auto& x : guards)
        if (x.kind == kind && x.g == g) return;
    guards.push_back({g, kind});
}

void Domain::add_implicit_guards(const Expr& e) { collect_guards(e, *this); }

bool Domain::is_param(Symbol s) const {
    return std::any_of(params.begin(), params.end(), [s](const auto& p) { return p.first == s; });
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Context::Context(std::uint64_t seed, Tolerances tol) : seed_(seed), tol_(tol), rng_(splitmix64(seed)) {}

Context Context::child(std::uint64_t index) const { return Context(splitmix64(seed_ ^ (index * 0x2545F4914F6CDD1DULL + 1)), tol_); }

Point Context::point(const Domain& d, const std::vector<Symbol>& extra) { return points(d, 1, extra).front(); }

std::vector<Point> Context::points(const Domain& d, int count, const std::vector<Symbol>& extra) {
    std::uniform_real_distribution<double> mag(kVarLo, kVarHi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Symbol> vars = d.vars;
    for (Symbol s : extra)
        if (!contains(vars, s) && !d.is_param(s)) vars.push_back(s);
    std::vector<Point> out;
    const int budget = kBudgetFactor * std::max(count, 1);
    for (int attempt = 0; attempt < budget && static_cast<int>(out.size()) < count; ++attempt) {
        Point p;
        for (Symbol s : vars) {
            double m = mag(rng_);
            p.set(s, unit(rng_) < 0.5 ? -m : m);
        }
        for (const auto& [s, r] : d.params) p.set(s, r.lo + (r.hi - r.lo) * unit(rng_));
        bool ok = true;
        for (const auto& g : d.guards) {
            try {
                double v = eval(g.g, p);
                ok = g.kind == Guard::NonZero ? std::abs(v) > kGuardMargin : v > kGuardMargin;
            } catch (const DomainError&) {
                ok = false;
            }
            if (!ok) break;
        }
        if (ok) out.push_back(std::move(p));
    }
    if (static_cast<int>(out.size()) < count)
        throw SamplingError("no admissible sample point found within " + std::to_string(budget) + " draws");
    return out;
}

bool is_zero(const Expr& e, const Domain& d, Context& ctx, int samples) {
    if (e.is_const()) return e.is_zero();
    if (samples <= 0) samples = ctx.tol().samples;
    int accepted = 0;
    int rejected = 0;
    while (accepted < samples) {
        Point p = ctx.point(d, e.free_symbols());
        try {
            ScaledValue v = eval_scaled(e, p);
            if (std::abs(v.value) / (1.0 + v.scale) > ctx.tol().zero) return false;
            ++accepted;
        } catch (const DomainError&) {
            if (++rejected > kBudgetFactor * samples) throw SamplingError("expression undefined at sampled points");
        }
    }
    return true;
}

}  // namespace flatd2
