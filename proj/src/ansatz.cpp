#include "flatd2/ansatz.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "flatd2/linalg.hpp"

namespace flatd2 {

namespace {

void push_unique(std::vector<Expr>& out, const Expr& e, const std::vector<std::vector<Expr>>& earlier) {
    if (e.is_zero()) return;
    for (const auto& t : out)
        if (t == e) return;
    for (const auto& tier : earlier)
        for (const auto& t : tier)
            if (t == e) return;
    out.push_back(e);
}

}  // namespace

AnsatzLibrary::AnsatzLibrary(std::vector<Symbol> vars, std::vector<Symbol> params, std::vector<Expr> atoms,
                             std::vector<Symbol> nonzero, Options opt) {
    build(vars, params, atoms, nonzero, std::move(opt));
}

AnsatzLibrary::AnsatzLibrary(std::vector<Symbol> vars, std::vector<Symbol> params) {
    build(vars, params, {}, {}, Options{});
}

void AnsatzLibrary::build(const std::vector<Symbol>& vars, const std::vector<Symbol>& params,
                          const std::vector<Expr>& atoms, const std::vector<Symbol>& nonzero, Options opt) {
    std::vector<Expr> base;
    for (Symbol v : vars) base.push_back(Expr::var(v));
    for (const auto& a : atoms) base.push_back(a);
    std::vector<Expr> ps;
    for (Symbol p : params) ps.push_back(Expr::var(p));

    auto add_tier = [&](std::vector<Expr> raw) {
        std::vector<Expr> t;
        for (const auto& e : raw)
            if (!opt.keep || opt.keep(e)) push_unique(t, e, tiers_);
        tiers_.push_back(std::move(t));
    };

    add_tier(opt.constant ? std::vector<Expr>{Expr(1)} : std::vector<Expr>{});
    add_tier(base);
    std::vector<Expr> trig;
    if (opt.trig)
        for (const auto& b : base) {
            trig.push_back(sin(b));
            trig.push_back(cos(b));
            trig.push_back(tan(b));
        }
    add_tier(trig);
    {
        std::vector<Expr> scaled;
        for (const auto& p : ps) {
            if (opt.constant) scaled.push_back(p);
            for (const auto& b : base) scaled.push_back(p * b);
            for (const auto& t : trig) scaled.push_back(p * t);
        }
        add_tier(scaled);
    }
    std::vector<Expr> prods;
    if (opt.products) {
        for (std::size_t i = 0; i < base.size(); ++i)
            for (std::size_t j = i; j < base.size(); ++j) prods.push_back(base[i] * base[j]);
        if (opt.trig)
            for (const auto& v : base)
                for (const auto& w : base) {
                    prods.push_back(v * sin(w));
                    prods.push_back(v * cos(w));
                    prods.push_back(v * tan(w));
                }
    }
    add_tier(prods);
    {
        std::vector<Expr> scaled;
        for (const auto& p : ps)
            for (const auto& t : prods) scaled.push_back(p * t);
        add_tier(scaled);
    }
    std::vector<Expr> ratios;
    if (opt.ratios)
        for (Symbol w : nonzero)
            for (Symbol v : vars)
                if (v != w) ratios.push_back(Expr::var(v) / Expr::var(w));
    add_tier(ratios);
}

std::vector<Expr> AnsatzLibrary::terms(int k) const {
    std::vector<Expr> out;
    for (int i = 0; i <= k && i < tiers(); ++i) out.insert(out.end(), tiers_[i].begin(), tiers_[i].end());
    return out;
}

std::string AnsatzLibrary::describe(int k) const {
    static const char* names[] = {"constant", "variables", "trigonometric", "parameter-scaled",
                                  "products", "parameter-scaled products", "ratios"};
    std::ostringstream os;
    auto ts = terms(k);
    os << ts.size() << " terms (";
    for (int i = 0; i <= k && i < tiers(); ++i) os << (i ? ", " : "") << names[std::min(i, 6)];
    os << ")";
    return os.str();
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kRowFactor = 3;
constexpr double kNullTol = 1e-9;
constexpr double kRrefTol = 1e-7;
constexpr std::int64_t kWideDen = 4096;
constexpr double kWideTol = 1e-11;

struct Fit {
    std::vector<std::vector<Expr>> candidates;  // simplest first
    Eigen::MatrixXd design;                     // unit columns (zero where negligible)
    Eigen::VectorXd scale;
};

Fit fit_tier(const AnsatzProblem& prob, const std::vector<Expr>& terms, const Domain& dom, Context& ctx) {
    const int K = prob.unknowns;
    const int T = static_cast<int>(terms.size());
    const int cols = K * T;
    std::vector<Symbol> extra;
    for (const auto& t : terms)
        for (Symbol s : t.free_symbols()) extra.push_back(s);

    std::vector<Eigen::RowVectorXd> rows;
    const std::size_t want_rows = static_cast<std::size_t>(kRowFactor * cols + 8);
    int failures = 0;
    // every point adds a row unless its conditions vanish identically there
    for (std::size_t used = 0; rows.size() < want_rows && used < want_rows;) {
        Point p = ctx.point(dom, extra);
        Eigen::MatrixXd block;
        try {
            if (prob.design) {
                block = prob.design(p, terms);
            } else {
                Eigen::MatrixXd a = prob.rows(p);
                Eigen::VectorXd tv(T);
                for (int k = 0; k < T; ++k) tv[k] = eval(terms[k], p);
                block.resize(a.rows(), cols);
                for (Eigen::Index r = 0; r < a.rows(); ++r)
                    for (int i = 0; i < K; ++i) block.row(r).segment(i * T, T) = a(r, i) * tv.transpose();
            }
        } catch (const DomainError&) {
            if (++failures > 40 * static_cast<int>(want_rows)) throw SamplingError("ansatz conditions undefined at sampled points");
            continue;
        }
        if (!block.allFinite()) {
            if (++failures > 40 * static_cast<int>(want_rows)) throw SamplingError("ansatz conditions not finite at sampled points");
            continue;
        }
        ++used;
        for (Eigen::Index r = 0; r < block.rows(); ++r)
            if (block.row(r).norm() > 0.0) rows.push_back(block.row(r));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    // column scaling keeps terms of different magnitude comparable
    // (a column that is zero up to rounding stays zero)
    Eigen::VectorXd scale(cols);
    const double biggest = m.rows() > 0 ? m.colwise().norm().maxCoeff() : 0.0;
    for (int j = 0; j < cols; ++j) {
        double n = m.col(j).norm();
        if (n <= 1e-11 * biggest) {
            scale[j] = 1.0;
            m.col(j).setZero();
            continue;
        }
        scale[j] = 1.0 / n;
        m.col(j) *= scale[j];
    }
    Eigen::MatrixXd ns = nullspace(m, kNullTol);
    Fit fit;
    fit.design = m;
    fit.scale = scale;
    if (ns.cols() == 0) return fit;
    for (int j = 0; j < cols; ++j) ns.row(j) *= scale[j];

    // order coefficient slots most complex term first, then RREF
    std::vector<int> order(cols);
    for (int j = 0; j < cols; ++j) {
        int term = j % T, unk = j / T;
        order[j] = (T - 1 - term) * K + unk;  // position in permuted layout
    }
    Eigen::MatrixXd b(ns.cols(), cols);
    for (int j = 0; j < cols; ++j) b.col(order[j]) = ns.row(j).transpose();
    for (Eigen::Index r = 0; r < b.rows(); ++r) b.row(r) /= b.row(r).cwiseAbs().maxCoeff();
    rref(b, kRrefTol);

    for (Eigen::Index r = b.rows() - 1; r >= 0; --r) {
        if (b.row(r).cwiseAbs().maxCoeff() == 0.0) continue;
        std::vector<std::vector<Expr>> parts(K);
        bool ok = true;
        for (int j = 0; j < cols && ok; ++j) {
            double c = b(r, order[j]);
            if (c == 0.0) continue;
            auto q = rationalize(c);
            // larger denominators need a tighter match to stay meaningful
            if (!q) q = rationalize(c, kWideDen, kWideTol);
            if (!q) {
                ok = false;
                break;
            }
            parts[j / T].push_back(Expr(*q) * terms[j % T]);
        }
        if (!ok) continue;
        std::vector<Expr> sol;
        for (auto& p : parts) sol.push_back(add(std::move(p)));
        fit.candidates.push_back(std::move(sol));
    }
    return fit;
}

// Solutions supported on at most three coefficient slots. Used when the full
// nullspace is too badly conditioned to yield rational candidates.
std::vector<std::vector<Expr>> sparse_candidates(const Fit& fit, const std::vector<Expr>& terms, int K) {
    std::vector<std::vector<Expr>> out;
    const Eigen::MatrixXd& m = fit.design;
    if (m.size() == 0) return out;
    const int T = static_cast<int>(terms.size());
    const int cols = static_cast<int>(m.cols());
    std::vector<int> live;
    for (int j = 0; j < cols; ++j) {
        if (m.col(j).norm() == 0.0) {
            std::vector<Expr> sol(static_cast<std::size_t>(K), Expr(0));
            sol[static_cast<std::size_t>(j / T)] = terms[static_cast<std::size_t>(j % T)];
            out.push_back(std::move(sol));
        } else {
            live.push_back(j);
        }
    }
    const Eigen::MatrixXd g = m.transpose() * m;

    auto emit = [&](const std::vector<int>& sup) {
        Eigen::MatrixXd sub(m.rows(), static_cast<Eigen::Index>(sup.size()));
        for (std::size_t i = 0; i < sup.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = m.col(sup[i]);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        const Eigen::Index last = sv.size() - 1;
        if (sv[last] > 1e-9 * sv[0] || sv[last - 1] < 1e-6 * sv[0]) return;
        Eigen::VectorXd c = svd.matrixV().col(last);
        for (std::size_t i = 0; i < sup.size(); ++i) c[static_cast<Eigen::Index>(i)] *= fit.scale[sup[i]];
        if (c.cwiseAbs().minCoeff() < 1e-6 * c.cwiseAbs().maxCoeff()) return;
        for (Eigen::Index piv = 0; piv < c.size(); ++piv) {
            std::vector<std::vector<Expr>> parts(static_cast<std::size_t>(K));
            bool ok = true;
            for (std::size_t i = 0; i < sup.size() && ok; ++i) {
                auto q = rationalize(c[static_cast<Eigen::Index>(i)] / c[piv]);
                ok = q.has_value();
                if (ok)
                    parts[static_cast<std::size_t>(sup[i] / T)].push_back(Expr(*q) *
                                                                          terms[static_cast<std::size_t>(sup[i] % T)]);
            }
            if (!ok) continue;
            std::vector<Expr> sol;
            for (auto& p : parts) sol.push_back(add(std::move(p)));
            out.push_back(std::move(sol));
            return;
        }
    };

    const std::size_t L = live.size();
    for (std::size_t a = 0; a < L; ++a)
        for (std::size_t b = a + 1; b < L; ++b) {
            const double gab = g(live[a], live[b]);
            if (1.0 - std::fabs(gab) <= 1e-10) emit({live[a], live[b]});
        }
    if (L > 320) return out;
    for (std::size_t a = 0; a < L; ++a)
        for (std::size_t b = a + 1; b < L; ++b)
            for (std::size_t c = b + 1; c < L; ++c) {
                const int i = live[a], j = live[b], k = live[c];
                // smallest eigenvalue of a unit-diagonal 3x3 Gram block is tiny
                // only if its determinant is
                const double x = g(i, j), y = g(i, k), z = g(j, k);
                const double det = 1.0 + 2.0 * x * y * z - x * x - y * y - z * z;
                if (det <= 1e-10) emit({i, j, k});
            }
    return out;
}

}  // namespace

std::vector<std::vector<Expr>> solve_ansatz(const AnsatzProblem& prob, const AnsatzLibrary& lib, const Domain& dom,
                                            Context& ctx, int wanted, bool need_all) {
    std::vector<std::vector<Expr>> accepted;
    std::size_t last_size = 0;
    for (int k = 0; k < lib.tiers(); ++k) {
        auto terms = lib.terms(k);
        if (terms.empty() || terms.size() == last_size) continue;
        last_size = terms.size();
        Fit fit = fit_tier(prob, terms, dom, ctx);
        auto consider = [&](const std::vector<std::vector<Expr>>& cands) {
            for (const auto& cand : cands) {
                if (static_cast<int>(accepted.size()) >= wanted) break;
                if (std::all_of(cand.begin(), cand.end(), [](const Expr& e) { return e.is_zero(); })) continue;
                bool dup = std::any_of(accepted.begin(), accepted.end(), [&](const auto& a) { return a == cand; });
                if (dup) continue;
                if (prob.independent && !prob.independent(accepted, cand)) continue;
                if (prob.verify && !prob.verify(cand)) continue;
                accepted.push_back(cand);
            }
        };
        const std::size_t before = accepted.size();
        consider(fit.candidates);
        if (accepted.size() == before && static_cast<int>(accepted.size()) < wanted)
            consider(sparse_candidates(fit, terms, prob.unknowns));
        if (static_cast<int>(accepted.size()) >= wanted) break;
        if (!need_all && !accepted.empty()) break;
    }
    return accepted;
}

}  // namespace flatd2
