#include "flatd2/diffgeo.hpp"

#include <unordered_map>

#include "flatd2/ansatz.hpp"
#include "flatd2/jet.hpp"
#include "flatd2/linalg.hpp"

namespace flatd2 {

VectorField VectorField::zero(std::vector<Symbol> coords) {
    VectorField v;
    v.comps.assign(coords.size(), Expr(0));
    v.coords = std::move(coords);
    return v;
}

VectorField VectorField::partial(std::vector<Symbol> coords, Symbol s) {
    VectorField v = zero(std::move(coords));
    for (std::size_t i = 0; i < v.coords.size(); ++i)
        if (v.coords[i] == s) v.comps[i] = Expr(1);
    return v;
}

VectorField operator+(const VectorField& a, const VectorField& b) {
    if (a.coords != b.coords) throw PreconditionError("vector fields on different coordinates");
    VectorField r = a;
    for (std::size_t i = 0; i < r.comps.size(); ++i) r.comps[i] = a.comps[i] + b.comps[i];
    return r;
}

VectorField operator*(const Expr& s, const VectorField& v) {
    VectorField r = v;
    for (auto& c : r.comps) c = s * c;
    return r;
}

VectorField lie_bracket(const VectorField& v, const VectorField& w) {
    if (v.coords != w.coords) throw PreconditionError("lie_bracket: coordinate lists differ");
    const std::size_t n = v.coords.size();
    VectorField r = VectorField::zero(v.coords);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Expr> terms;
        for (std::size_t j = 0; j < n; ++j) {
            const Symbol c = v.coords[j];
            if (!v.comps[j].is_zero() && w.comps[i].depends_on(c)) terms.push_back(v.comps[j] * diff(w.comps[i], c));
            if (!w.comps[j].is_zero() && v.comps[i].depends_on(c)) terms.push_back(-(w.comps[j] * diff(v.comps[i], c)));
        }
        r.comps[i] = simplify(add(std::move(terms)));
    }
    return r;
}

Expr lie_derivative(const VectorField& v, const Expr& phi, int k) {
    Expr e = phi;
    for (int step = 0; step < k; ++step) {
        std::vector<Expr> terms;
        for (std::size_t j = 0; j < v.coords.size(); ++j)
            if (!v.comps[j].is_zero() && e.depends_on(v.coords[j])) terms.push_back(v.comps[j] * diff(e, v.coords[j]));
        e = simplify(add(std::move(terms)));
    }
    return e;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd eval_field(const VectorField& v, const Point& p) {
    Eigen::VectorXd r(v.dim());
    for (int i = 0; i < v.dim(); ++i) r[i] = v.comps[i].is_const() ? v.comps[i].value().to_double() : eval(v.comps[i], p);
    return r;
}

Eigen::MatrixXd eval_field_jacobian(const VectorField& v, const Point& p, Eigen::VectorXd* value) {
    const Eigen::Index n = v.dim();
    std::unordered_map<Symbol, Eigen::Index> index;
    for (Eigen::Index k = 0; k < n; ++k) index.emplace(v.coords[k], k);
    auto lookup = [&](Symbol s) {
        auto it = index.find(s);
        double x = p.get(s);
        return it == index.end() ? Dual(x) : Dual::seed(x, n, it->second);
    };
    Evaluator<Dual, decltype(lookup)> ev(lookup);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    if (value) value->resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Expr& c = v.comps[i];
        if (c.is_const()) {
            if (value) (*value)[i] = c.value().to_double();
            continue;
        }
        Dual d = ev(c);
        if (!std::isfinite(d.v)) throw DomainError("non-finite value");
        if (value) (*value)[i] = d.v;
        if (d.d.size()) j.row(i) = d.d.transpose();
    }
    return j;
}

Eigen::MatrixXd eval_gradients(const std::vector<Expr>& fs, const std::vector<Symbol>& coords, const Point& p) {
    const Eigen::Index n = static_cast<Eigen::Index>(coords.size());
    std::unordered_map<Symbol, Eigen::Index> index;
    for (Eigen::Index k = 0; k < n; ++k) index.emplace(coords[k], k);
    auto lookup = [&](Symbol s) {
        auto it = index.find(s);
        double x = p.get(s);
        return it == index.end() ? Dual(x) : Dual::seed(x, n, it->second);
    };
    Evaluator<Dual, decltype(lookup)> ev(lookup);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fs.size()), n);
    for (std::size_t i = 0; i < fs.size(); ++i) {
        if (fs[i].is_const()) continue;
        Dual d = ev(fs[i]);
        if (!std::isfinite(d.v) || (d.d.size() && !d.d.allFinite())) throw DomainError("non-finite value");
        if (d.d.size()) g.row(static_cast<Eigen::Index>(i)) = d.d.transpose();
    }
    return g;
}

Eigen::VectorXd numeric_bracket(const VectorField& v, const VectorField& w, const Point& p) {
    Eigen::VectorXd vv, wv;
    Eigen::MatrixXd jv = eval_field_jacobian(v, p, &vv);
    Eigen::MatrixXd jw = eval_field_jacobian(w, p, &wv);
    return jw * vv - jv * wv;
}

Eigen::MatrixXd eval_distribution(const Distribution& d, const Point& p) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(d.coords.size()), static_cast<Eigen::Index>(d.fields.size()));
    for (std::size_t k = 0; k < d.fields.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = eval_field(d.fields[k], p);
    return m;
}

std::vector<Point> sample_points(const Domain& dom, const std::vector<Symbol>& coords, Context& ctx, int count) {
    return ctx.points(dom, count > 0 ? count : ctx.tol().samples, coords);
}

namespace {

void check_instability(std::size_t total, int disagree, const char* what) {
    if (total == 0) throw SamplingError(std::string("no sample point where ") + what + " is defined");
    if (static_cast<double>(disagree) > 0.1 * static_cast<double>(total))
        throw RankInstability(std::string(what) + " varies across sample points (" + std::to_string(disagree) + " of " +
                              std::to_string(total) + " disagree)");
}

// Runs f at sample points, skipping points where evaluation is undefined.
template <class F>
void for_points(const Domain& dom, const std::vector<Symbol>& coords, Context& ctx, F&& f) {
    for (const Point& p : sample_points(dom, coords, ctx)) {
        try {
            f(p);
        } catch (const DomainError&) {
        }
    }
}

}  // namespace

int majority_rank(const std::vector<int>& ranks, const char* what) {
    int disagree = 0;
    int r = majority(ranks, &disagree);
    check_instability(ranks.size(), disagree, what);
    return r;
}

bool majority_vote(const std::vector<bool>& votes, const char* what) {
    std::vector<int> v(votes.begin(), votes.end());
    return majority_rank(v, what) != 0;
}

int generic_rank(const Distribution& d, const Domain& dom, Context& ctx) {
    if (d.fields.empty()) return 0;
    std::vector<int> ranks;
    for_points(dom, d.coords, ctx,
               [&](const Point& p) { ranks.push_back(numeric_rank(eval_distribution(d, p), ctx.tol().rank)); });
    return majority_rank(ranks, "distribution rank");
}

int jacobian_rank(const std::vector<Expr>& fs, const std::vector<Symbol>& coords, const Domain& dom, Context& ctx) {
    if (fs.empty()) return 0;
    std::vector<int> ranks;
    for_points(dom, coords, ctx, [&](const Point& p) {
        ranks.push_back(numeric_rank(eval_gradients(fs, coords, p).transpose(), ctx.tol().rank));
    });
    return majority_rank(ranks, "Jacobian rank");
}

bool member_mod(const VectorField& v, const Distribution& d, const Domain& dom, Context& ctx) {
    if (v.coords != d.coords) throw PreconditionError("member_mod: coordinate lists differ");
    std::vector<bool> votes;
    for_points(dom, d.coords, ctx, [&](const Point& p) {
        Eigen::MatrixXd m = eval_distribution(d, p);
        Eigen::VectorXd x = eval_field(v, p);
        Eigen::MatrixXd aug(m.rows(), m.cols() + 1);
        aug << m, x;
        votes.push_back(numeric_rank(aug, ctx.tol().rank) == numeric_rank(m, ctx.tol().rank));
    });
    return majority_vote(votes, "membership");
}

bool is_involutive(const Distribution& d, const Domain& dom, Context& ctx) {
    const std::size_t k = d.fields.size();
    if (k < 2) return true;
    std::vector<bool> votes;
    for_points(dom, d.coords, ctx, [&](const Point& p) {
        Eigen::MatrixXd m = eval_distribution(d, p);
        Eigen::MatrixXd aug(m.rows(), static_cast<Eigen::Index>(k + k * (k - 1) / 2));
        aug.leftCols(m.cols()) = m;
        Eigen::Index c = m.cols();
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) aug.col(c++) = numeric_bracket(d.fields[i], d.fields[j], p);
        votes.push_back(numeric_rank(aug, ctx.tol().rank) == numeric_rank(m, ctx.tol().rank));
    });
    return majority_vote(votes, "involutivity");
}

std::vector<Distribution> derived_flag(const Distribution& d, int max_steps, const Domain& dom, Context& ctx) {
    std::vector<Distribution> flag{d};
    Distribution cur = d;
    std::size_t first_new = 0;
    for (int step = 0; step < max_steps; ++step) {
        Distribution next = cur;
        const std::size_t k = cur.fields.size();
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = std::max(i + 1, first_new); j < k; ++j) {
                VectorField b = lie_bracket(cur.fields[i], cur.fields[j]);
                if (!member_mod(b, next, dom, ctx)) next.add(std::move(b));
            }
        if (next.fields.size() == k) break;
        first_new = k;
        cur = next;
        flag.push_back(std::move(next));
    }
    return flag;
}

Distribution involutive_closure(const Distribution& d, const Domain& dom, Context& ctx) {
    return derived_flag(d, static_cast<int>(d.coords.size()) + 1, dom, ctx).back();
}

// ---------------------------------------------------------------------------

namespace {

// Condition rows for lambda at p: projected brackets sum_i lambda_i [d_i, d_j].
Eigen::MatrixXd cauchy_rows(const Distribution& d, const Point& p, double tol) {
    const Eigen::Index k = static_cast<Eigen::Index>(d.fields.size());
    Eigen::MatrixXd m = eval_distribution(d, p);
    Eigen::MatrixXd proj = complement_projector(m, tol);
    const Eigen::Index n = m.rows();
    Eigen::MatrixXd rows(n * k, k);
    rows.setZero();
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < k; ++i) {
            if (i == j) continue;
            Eigen::VectorXd b = numeric_bracket(d.fields[i], d.fields[j], p);
            Eigen::VectorXd r = proj * b;
            if (r.norm() > tol * (1.0 + b.norm())) rows.block(j * n, i, n, 1) = r;
        }
    return rows;
}

}  // namespace

CauchyResult cauchy_characteristic(const Distribution& d, const Domain& dom, Context& ctx, bool lift) {
    CauchyResult res;
    if (d.fields.empty()) return res;
    std::vector<int> dims;
    for_points(dom, d.coords, ctx, [&](const Point& p) {
        Eigen::MatrixXd lam = nullspace(cauchy_rows(d, p, ctx.tol().rank), 1e-8);
        if (lam.cols() == 0) {
            dims.push_back(0);
            return;
        }
        dims.push_back(numeric_rank(eval_distribution(d, p) * lam, ctx.tol().rank));
    });
    res.dim = majority_rank(dims, "Cauchy characteristic dimension");
    if (!lift || res.dim == 0) return res;

    auto combine = [&](const std::vector<Expr>& lambda) {
        VectorField c = VectorField::zero(d.coords);
        for (std::size_t i = 0; i < lambda.size(); ++i)
            if (!lambda[i].is_zero()) c = c + lambda[i] * d.fields[i];
        for (auto& e : c.comps) e = simplify(e);
        return c;
    };
    AnsatzProblem prob;
    prob.unknowns = static_cast<int>(d.fields.size());
    prob.rows = [&](const Point& p) { return cauchy_rows(d, p, ctx.tol().rank); };
    prob.verify = [&](const std::vector<Expr>& lambda) {
        VectorField c = combine(lambda);
        Distribution single(d.coords, {c});
        if (generic_rank(single, dom, ctx) == 0) return false;
        for (const auto& f : d.fields)
            if (!member_mod(lie_bracket(c, f), d, dom, ctx)) return false;
        return true;
    };
    prob.independent = [&](const std::vector<std::vector<Expr>>& acc, const std::vector<Expr>& cand) {
        Distribution span(d.coords);
        for (const auto& a : acc) span.add(combine(a));
        int before = static_cast<int>(acc.size());
        span.add(combine(cand));
        return generic_rank(span, dom, ctx) > before;
    };
    std::vector<Symbol> params;
    for (const auto& [s, r] : dom.params) params.push_back(s);
    AnsatzLibrary lib(d.coords, params);
    auto sols = solve_ansatz(prob, lib, dom, ctx, res.dim);
    if (static_cast<int>(sols.size()) < res.dim)
        throw LiftError("Cauchy characteristic of dimension " + std::to_string(res.dim) +
                        " has no symbolic representative in the ansatz library");
    Distribution out(d.coords);
    for (const auto& s : sols) out.add(combine(s));
    res.lifted = std::move(out);
    return res;
}

bool cauchy_contains(const Distribution& d, const VectorField& v, const Domain& dom, Context& ctx) {
    if (v.coords != d.coords) throw PreconditionError("cauchy_contains: coordinate lists differ");
    std::vector<bool> votes;
    for_points(dom, d.coords, ctx, [&](const Point& p) {
        Eigen::MatrixXd lam = nullspace(cauchy_rows(d, p, ctx.tol().rank), 1e-8);
        Eigen::VectorXd x = eval_field(v, p);
        if (lam.cols() == 0) {
            votes.push_back(x.norm() == 0.0);
            return;
        }
        Eigen::MatrixXd c = eval_distribution(d, p) * lam;
        Eigen::MatrixXd ext(c.rows(), c.cols() + 1);
        ext << c, x;
        votes.push_back(numeric_rank(ext, ctx.tol().rank) == numeric_rank(c, ctx.tol().rank));
    });
    return majority_vote(votes, "Cauchy characteristic membership");
}

}  // namespace flatd2
