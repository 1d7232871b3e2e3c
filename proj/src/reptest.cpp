#include "flatd2/reptest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flatd2/ansatz.hpp"
#include "flatd2/linalg.hpp"

namespace flatd2 {

VectorField drift_field(const SystemModel& m) {
    VectorField f = VectorField::zero(m.coordinates());
    for (int i = 0; i < m.n(); ++i) f.comps[static_cast<std::size_t>(i)] = m.rhs[static_cast<std::size_t>(i)];
    return f;
}

namespace {

// State-space field embedded in (x, u) coordinates.
VectorField embed(const SystemModel& m, const std::vector<Expr>& state_comps) {
    VectorField v = VectorField::zero(m.coordinates());
    for (std::size_t i = 0; i < state_comps.size(); ++i) v.comps[i] = state_comps[i];
    return v;
}

std::vector<Expr> partial_rhs(const SystemModel& m, Symbol u) {
    std::vector<Expr> r;
    for (const auto& f : m.rhs) r.push_back(simplify(diff(f, u)));
    return r;
}

std::vector<Expr> second_rhs(const SystemModel& m, Symbol u, Symbol w) {
    std::vector<Expr> r;
    for (const auto& f : m.rhs) r.push_back(simplify(diff(diff(f, u), w)));
    return r;
}

Domain widen(Domain d, const std::vector<Expr>& exprs) {
    for (const auto& e : exprs) {
        for (Symbol s : e.free_symbols()) d.add_var(s);
        d.add_implicit_guards(e);
    }
    return d;
}

void require_two_inputs(const SystemModel& m, const char* what) {
    if (m.m() != 2) throw PreconditionError(std::string(what) + " needs a two-input model");
}

}  // namespace

Distribution input_distribution_d1(const SystemModel& m) {
    Distribution d(m.coordinates());
    for (Symbol u : m.input_symbols()) d.add(VectorField::partial(d.coords, u));
    for (Symbol u : m.input_symbols()) d.add(embed(m, partial_rhs(m, u)));
    return d;
}

std::vector<VectorField> input_fields(const SystemModel& m) {
    std::vector<VectorField> b;
    for (Symbol u : m.input_symbols()) b.push_back(VectorField{m.state_symbols(), partial_rhs(m, u)});
    return b;
}

std::vector<Expr> drift_at_zero_input(const SystemModel& m) {
    std::vector<Expr> a;
    const auto us = m.input_symbols();
    for (const auto& f : m.rhs) {
        std::vector<Expr> terms{f};
        for (Symbol u : us) terms.push_back(-(Expr::var(u) * diff(f, u)));
        Expr e = simplify(add(std::move(terms)));
        bool uses = false;
        for (Symbol u : us) uses = uses || e.depends_on(u);
        if (uses) {
            Substitution zero;
            for (Symbol u : us) zero[u] = Expr(0);
            e = simplify(substitute(e, zero));
        }
        a.push_back(e);
    }
    return a;
}

bool is_syntactically_affine(const SystemModel& m) {
    const auto us = m.input_symbols();
    for (std::size_t j = 0; j < us.size(); ++j)
        for (std::size_t k = j; k < us.size(); ++k)
            for (const auto& e : second_rhs(m, us[j], us[k]))
                if (!e.is_zero()) return false;
    return true;
}

bool ai_test(const SystemModel& m, Context& ctx) {
    require_two_inputs(m, "ai_test");
    if (is_syntactically_affine(m)) return true;
    const Distribution d1 = input_distribution_d1(m);
    const Domain dom = m.domain();
    const auto us = m.input_symbols();
    for (std::size_t j = 0; j < us.size(); ++j)
        for (std::size_t k = j; k < us.size(); ++k)
            if (!member_mod(embed(m, second_rhs(m, us[j], us[k])), d1, dom, ctx)) return false;
    return true;
}

bool ai_test_cauchy(const SystemModel& m, Context& ctx) {
    require_two_inputs(m, "ai_test_cauchy");
    const Distribution d1 = input_distribution_d1(m);
    const Domain dom = m.domain();
    for (Symbol u : m.input_symbols())
        if (!cauchy_contains(d1, VectorField::partial(d1.coords, u), dom, ctx)) return false;
    return true;
}

std::pair<SystemModel, TransformStep> to_ai_form(const SystemModel& m, Context& ctx) {
    require_two_inputs(m, "to_ai_form");
    TransformStep step;
    step.kind = StepKind::InputTransform;
    if (is_syntactically_affine(m)) {
        for (const auto& u : m.inputs) step.forward.emplace_back(u, Expr::var(u));
        step.rationale = "rhs is already input-affine";
        return {m, std::move(step)};
    }
    const Domain dom = m.domain();
    const auto us = m.input_symbols();
    std::vector<std::string> taken = m.states;
    taken.insert(taken.end(), m.inputs.begin(), m.inputs.end());
    for (const auto& p : m.params) taken.push_back(p.name);
    const std::string w1 = fresh_bar_name(m.inputs[0], taken);
    taken.push_back(w1);
    const std::string w2 = fresh_bar_name(m.inputs[1], taken);
    const Expr W1 = Expr::var(w1), W2 = Expr::var(w2);

    std::string failures;
    for (int i = 0; i < m.n(); ++i) {
        for (int j = i + 1; j < m.n(); ++j) {
            const Expr& fi = m.rhs[static_cast<std::size_t>(i)];
            const Expr& fj = m.rhs[static_cast<std::size_t>(j)];
            if (jacobian_rank({fi, fj}, us, dom, ctx) < 2) continue;
            // new inputs w1 = f^i, w2 = f^j; solve sequentially for the old ones
            for (int first = 0; first < 2; ++first) {
                Symbol ua = us[static_cast<std::size_t>(first)], ub = us[static_cast<std::size_t>(1 - first)];
                try {
                    Expr ga = solve_for(fi, ua, W1);
                    Expr h = simplify(substitute(fj, {{ua, ga}}));
                    Expr gb = solve_for(h, ub, W2);
                    Expr gaa = simplify(substitute(ga, {{ub, gb}}));
                    Substitution inv{{ua, gaa}, {ub, gb}};
                    SystemModel r = apply_input_transform(m, {w1, w2}, inv, "input-affine form");
                    step.forward = {{w1, fi}, {w2, fj}};
                    step.inverse = {{symbol_name(us[0]), inv.at(us[0])}, {symbol_name(us[1]), inv.at(us[1])}};
                    step.rationale = "new inputs are the rhs of " + m.states[static_cast<std::size_t>(i)] + " and " +
                                     m.states[static_cast<std::size_t>(j)];
                    if (!verify_step(step, m, r, ctx)) {
                        failures += " inversion of (" + to_string(fi) + ", " + to_string(fj) + ") did not verify;";
                        continue;
                    }
                    const Domain rd = r.domain();
                    const std::vector<Symbol> ws = r.input_symbols();
                    for (Symbol a : ws)
                        for (Symbol b : ws)
                            for (const auto& f : r.rhs)
                                if (!is_zero(simplify(diff(diff(f, a), b)), rd, ctx))
                                    throw NotAffineError("rhs " + to_string(f) + " is not affine in the new inputs");
                    return {std::move(r), std::move(step)};
                } catch (const InversionError& e) {
                    failures += std::string(" ") + e.what() + ";";
                }
            }
        }
    }
    throw InversionError("no pair of rhs components could be inverted for the inputs:" + failures);
}

// ---------------------------------------------------------------------------
// PAI condition

namespace {

// First and second input derivatives of the rhs.
struct PaiData {
    std::vector<Expr> g1, g2;     // d f / d u_j
    std::vector<Expr> a, b, c;    // d2 f / du1du1, du1du2, du2du2
};

PaiData pai_data(const SystemModel& m) {
    const auto us = m.input_symbols();
    return {partial_rhs(m, us[0]), partial_rhs(m, us[1]), second_rhs(m, us[0], us[0]), second_rhs(m, us[0], us[1]),
            second_rhs(m, us[1], us[1])};
}

Eigen::VectorXd eval_all(const std::vector<Expr>& es, const Point& p) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(es.size()));
    for (std::size_t i = 0; i < es.size(); ++i) v[static_cast<Eigen::Index>(i)] = es[i].is_const() ? es[i].value().to_double() : eval(es[i], p);
    return v;
}

double wrap_pi(double phi) {
    phi = std::fmod(phi, std::numbers::pi);
    if (phi < 0) phi += std::numbers::pi;
    return phi;
}

double angle_distance(double a, double b) {
    double d = std::fabs(a - b);
    return std::min(d, std::numbers::pi - d);
}

double angle_of(double z0, double z1, double z2) {
    // z = (a1^2, a1 a2, a2^2): a1 : a2 = z0 : z1 = z1 : z2
    return std::fabs(z0) >= std::fabs(z2) ? wrap_pi(std::atan2(z1, z0)) : wrap_pi(std::atan2(z2, z1));
}

struct Roots {
    bool all = false;              // every direction solves (affine at this point)
    std::vector<double> angles;    // directions a2/a1 as angles mod pi
};

Roots roots_at(const PaiData& d, const Point& p) {
    Eigen::VectorXd g1 = eval_all(d.g1, p), g2 = eval_all(d.g2, p);
    Eigen::VectorXd a = eval_all(d.a, p), b = eval_all(d.b, p), c = eval_all(d.c, p);
    const Eigen::Index n = g1.size();
    Eigen::MatrixXd g(n, 2);
    g << g1, g2;
    Eigen::MatrixXd proj = complement_projector(g, 1e-8);
    Eigen::MatrixXd raw(n, 3);
    raw << a, 2.0 * b, c;
    Eigen::MatrixXd mm = proj * raw;
    const double scale = std::max(raw.norm(), 1e-300);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mm, Eigen::ComputeFullV);
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > 1e-8 * scale) ++rank;
    Roots r;
    const int k = 3 - rank;
    if (k == 3) {
        r.all = true;
        return r;
    }
    if (k == 0) return r;
    Eigen::MatrixXd v = svd.matrixV();
    if (k == 1) {
        Eigen::VectorXd z = v.col(2);
        if (std::fabs(z[1] * z[1] - z[0] * z[2]) <= 1e-6) r.angles.push_back(angle_of(z[0], z[1], z[2]));
        return r;
    }
    Eigen::VectorXd za = v.col(1), zb = v.col(2);
    const double P = za[1] * za[1] - za[0] * za[2];
    const double Q = 2 * za[1] * zb[1] - za[0] * zb[2] - zb[0] * za[2];
    const double R = zb[1] * zb[1] - zb[0] * zb[2];
    const double sc = std::max({std::fabs(P), std::fabs(Q), std::fabs(R)});
    if (sc < 1e-12) return r;
    const double disc = Q * Q - 4 * P * R;
    std::vector<std::pair<double, double>> lm;
    auto push = [&](double s) {
        if (std::fabs(P) >= std::fabs(R))
            lm.emplace_back((-Q + s) / (2 * P), 1.0);
        else
            lm.emplace_back(1.0, (-Q + s) / (2 * R));
    };
    if (disc < -1e-9 * sc * sc) return r;
    if (disc <= 1e-9 * sc * sc) {
        push(0.0);
    } else {
        const double s = std::sqrt(disc);
        push(s);
        push(-s);
    }
    for (auto [l, mu] : lm) {
        Eigen::VectorXd z = l * za + mu * zb;
        double phi = angle_of(z[0], z[1], z[2]);
        bool dup = false;
        for (double q : r.angles) dup = dup || angle_distance(q, phi) < 1e-6;
        if (!dup) r.angles.push_back(phi);
    }
    std::sort(r.angles.begin(), r.angles.end());
    return r;
}

// Root angles continued along the segment from base to p; empty when the
// root count changes on the way.
std::vector<double> track(const PaiData& d, const Point& base, const std::vector<double>& base_angles, const Point& p,
                          const std::vector<Symbol>& syms) {
    // Families can meet (e.g. at a pole of a tan-shaped solution); a path that
    // passes close to such a point cannot be labelled and is rejected.
    constexpr int kSteps = 64;
    constexpr double kMinGap = 0.05;
    constexpr double kMaxJump = 0.25;
    std::vector<double> cur = base_angles;
    for (int s = 1; s <= kSteps; ++s) {
        const double t = static_cast<double>(s) / kSteps;
        Point q;
        for (Symbol y : syms) q.set(y, (1 - t) * base.get(y) + t * p.get(y));
        Roots r = roots_at(d, q);
        if (r.all || r.angles.size() != cur.size()) return {};
        if (cur.size() == 1) {
            if (angle_distance(cur[0], r.angles[0]) > kMaxJump) return {};
            cur[0] = r.angles[0];
            continue;
        }
        if (angle_distance(r.angles[0], r.angles[1]) < kMinGap) return {};
        double keep = angle_distance(cur[0], r.angles[0]) + angle_distance(cur[1], r.angles[1]);
        double swap = angle_distance(cur[0], r.angles[1]) + angle_distance(cur[1], r.angles[0]);
        std::vector<double> next = keep <= swap ? std::vector<double>{r.angles[0], r.angles[1]}
                                                : std::vector<double>{r.angles[1], r.angles[0]};
        if (angle_distance(cur[0], next[0]) > kMaxJump || angle_distance(cur[1], next[1]) > kMaxJump) return {};
        cur = std::move(next);
    }
    return cur;
}

std::vector<Symbol> nonzero_symbols(const SystemModel& m) {
    std::vector<Symbol> r;
    for (const auto& c : m.constraints)
        if (c.op() == Op::Var) r.push_back(c.sym());
    return r;
}

// Coordinates the root directions actually depend on, by perturbation.
std::vector<Symbol> root_dependencies(const PaiData& d, const Point& base, const std::vector<Symbol>& coords) {
    std::vector<Symbol> out;
    const Roots r0 = roots_at(d, base);
    for (Symbol s : coords) {
        const double x = base.get(s);
        const double h = 1e-5 * (1.0 + std::fabs(x));
        bool moved = false;
        for (double sgn : {1.0, -1.0}) {
            Point q = base;
            q.set(s, x + sgn * h);
            Roots r;
            try {
                r = roots_at(d, q);
            } catch (const DomainError&) {
                moved = true;
                break;
            }
            if (r.all || r.angles.size() != r0.angles.size()) {
                moved = true;
                break;
            }
            for (double a : r0.angles) {
                double best = M_PI;
                for (double b : r.angles) best = std::min(best, angle_distance(a, b));
                moved = moved || best > 1e-3 * h;
            }
        }
        if (moved) out.push_back(s);
    }
    return out;
}

}  // namespace

std::vector<int> pai_root_counts(const SystemModel& m, Context& ctx) {
    require_two_inputs(m, "pai_root_counts");
    const PaiData data = pai_data(m);
    std::vector<int> counts;
    for (const Point& p : ctx.points(m.domain(), ctx.tol().samples)) {
        try {
            Roots r = roots_at(data, p);
            counts.push_back(r.all ? -1 : static_cast<int>(r.angles.size()));
        } catch (const DomainError&) {
        }
    }
    return counts;
}

PaiAnalysis analyze_pai(const SystemModel& m, Context& ctx) {
    require_two_inputs(m, "pai_condition_solutions");
    if (is_syntactically_affine(m)) throw PreconditionError("pai_condition_solutions: the model is input-affine");
    const PaiData data = pai_data(m);
    const Domain dom = m.domain();
    std::vector<Symbol> syms = m.coordinates();
    for (const auto& [s, r] : dom.params) syms.push_back(s);

    PaiAnalysis out;
    const std::vector<int> counts = pai_root_counts(m, ctx);
    for (int c : counts)
        if (c >= 0) out.point_counts.push_back(c);
    const int count = majority_rank(counts, "number of PAI solutions");
    if (count < 0) throw PreconditionError("pai_condition_solutions: the model admits an input-affine form");
    if (count == 0) throw NoSolutionError("the PAI condition has no nontrivial solution");

    // base point with the generic root count
    Point base;
    Roots base_roots;
    for (int attempt = 0;; ++attempt) {
        if (attempt > 50) throw SamplingError("no base point with the generic number of PAI roots");
        base = ctx.point(dom);
        try {
            base_roots = roots_at(data, base);
        } catch (const DomainError&) {
            continue;
        }
        if (!base_roots.all && static_cast<int>(base_roots.angles.size()) == count) break;
    }

    const Distribution d1 = input_distribution_d1(m);
    std::vector<Symbol> params;
    for (const auto& [s, r] : dom.params) params.push_back(s);
    const std::vector<Symbol> coords = m.coordinates();
    // small libraries first: terms in the coordinates the roots depend on
    std::vector<AnsatzLibrary> libs;
    {
        std::vector<Symbol> dep = root_dependencies(data, base, coords);
        if (!dep.empty() && dep.size() < coords.size()) {
            std::vector<Expr> atoms;
            for (const auto& a : rhs_atoms(m)) {
                bool inside = true;
                for (Symbol v : a.free_symbols())
                    inside = inside && (std::find(dep.begin(), dep.end(), v) != dep.end() ||
                                        std::find(params.begin(), params.end(), v) != params.end());
                if (inside) atoms.push_back(a);
            }
            std::vector<Symbol> nz;
            for (Symbol v : nonzero_symbols(m))
                if (std::find(dep.begin(), dep.end(), v) != dep.end()) nz.push_back(v);
            libs.emplace_back(dep, params, atoms, nz, AnsatzLibrary::Options{});
        }
        libs.emplace_back(coords, params, rhs_atoms(m), nonzero_symbols(m), AnsatzLibrary::Options{});
    }

    for (int fam = 0; fam < count; ++fam) {
        AnsatzProblem prob;
        prob.unknowns = 2;
        prob.design = [&](const Point& p, const std::vector<Expr>& terms) {
            // move p into the sign orthant of the base point so the segment stays regular
            Point q = p;
            for (Symbol s : coords) q.set(s, std::copysign(std::fabs(p.get(s)), base.get(s)));
            for (Symbol s : params) q.set(s, p.get(s));
            for (const auto& t : terms)
                for (Symbol s : t.free_symbols())
                    if (!q.has(s)) q.set(s, p.get(s));
            std::vector<double> ang = track(data, base, base_roots.angles, q, syms);
            if (ang.empty()) throw DomainError("root count changes along the path");
            const double phi = ang[static_cast<std::size_t>(fam)];
            const Eigen::Index T = static_cast<Eigen::Index>(terms.size());
            Eigen::MatrixXd row(1, 2 * T);
            for (Eigen::Index k = 0; k < T; ++k) {
                double tv = eval(terms[static_cast<std::size_t>(k)], q);
                row(0, k) = -std::sin(phi) * tv;
                row(0, T + k) = std::cos(phi) * tv;
            }
            return row;
        };
        prob.verify = [&](const std::vector<Expr>& al) {
            Domain vd = widen(dom, al);
            if (is_zero(al[0], vd, ctx) && is_zero(al[1], vd, ctx)) return false;
            std::vector<Expr> res;
            for (int i = 0; i < m.n(); ++i) {
                const auto k = static_cast<std::size_t>(i);
                res.push_back(simplify(al[0] * al[0] * data.a[k] + Expr(2) * al[0] * al[1] * data.b[k] +
                                       al[1] * al[1] * data.c[k]));
            }
            return member_mod(embed(m, res), d1, vd, ctx);
        };
        std::vector<std::vector<Expr>> sols;
        for (const auto& lib : libs) {
            sols = solve_ansatz(prob, lib, dom, ctx, 1, false);
            if (!sols.empty()) break;
        }
        if (sols.empty())
            throw LiftError("PAI solution family " + std::to_string(fam + 1) + " has no representative in the ansatz library");
        Expr a1 = sols[0][0], a2 = sols[0][1];
        // normalize by the larger component at the base point
        double v1 = std::fabs(eval(a1, base)), v2 = std::fabs(eval(a2, base));
        if (v1 >= v2) {
            a2 = simplify(a2 / a1);
            a1 = Expr(1);
        } else {
            a1 = simplify(a1 / a2);
            a2 = Expr(1);
        }
        bool dup = false;
        for (const auto& s : out.solutions) {
            Domain vd = widen(dom, {a1, a2, s.a1, s.a2});
            dup = dup || is_zero(simplify(a1 * s.a2 - a2 * s.a1), vd, ctx);
        }
        if (!dup) out.solutions.push_back({a1, a2, false, false});
    }
    return out;
}

std::vector<AlphaSolution> pai_condition_solutions(const SystemModel& m, Context& ctx) {
    return analyze_pai(m, ctx).solutions;
}

bool pai_filter(const SystemModel& m, const AlphaSolution& s, Context& ctx) {
    require_two_inputs(m, "pai_filter");
    const std::vector<Symbol> coords = m.coordinates();
    VectorField vc = VectorField::zero(coords);
    vc.comps[static_cast<std::size_t>(m.n())] = s.a1;
    vc.comps[static_cast<std::size_t>(m.n() + 1)] = s.a2;
    VectorField w = lie_bracket(vc, drift_field(m));
    VectorField z = lie_bracket(vc, w);
    Distribution delta(coords);
    for (Symbol u : m.input_symbols()) delta.add(VectorField::partial(coords, u));
    delta.add(w);
    std::vector<Expr> all = w.comps;
    all.insert(all.end(), z.comps.begin(), z.comps.end());
    return member_mod(z, delta, widen(m.domain(), all), ctx);
}

std::pair<SystemModel, std::vector<TransformStep>> to_pai_form(const SystemModel& m, const AlphaSolution& s,
                                                               const std::vector<Expr>& hints, Context& ctx,
                                                               std::vector<SystemModel>* parents) {
    require_two_inputs(m, "to_pai_form");
    std::vector<TransformStep> steps;
    auto [r, st] = straighten_line(m, s.a1, s.a2, hints, ctx);
    steps.push_back(st);
    if (parents) parents->push_back(m);

    const Symbol u2 = intern(r.inputs[1]);
    const Domain rd = r.domain();
    auto affine_in = [&](const SystemModel& model, Symbol u) {
        const Domain d = model.domain();
        for (const auto& f : model.rhs) {
            Expr dd = simplify(diff(diff(f, u), u));
            if (!dd.is_zero() && !is_zero(dd, d, ctx)) return false;
        }
        return true;
    };
    if (affine_in(r, u2)) return {std::move(r), std::move(steps)};

    // replace the first input by an rhs component that depends on it; the
    // first choice that leaves the rhs affine in the second input is kept
    const Symbol u1 = intern(r.inputs[0]);
    std::vector<std::string> taken = r.states;
    taken.insert(taken.end(), r.inputs.begin(), r.inputs.end());
    for (const auto& p : r.params) taken.push_back(p.name);
    const std::string nu = fresh_bar_name(r.inputs[0], taken);
    std::string tried;
    for (int i = 0; i < r.n(); ++i) {
        const Expr& fi = r.rhs[static_cast<std::size_t>(i)];
        const std::string& xi = r.states[static_cast<std::size_t>(i)];
        Expr di = simplify(diff(fi, u1));
        if (di.is_zero() || is_zero(di, rd, ctx)) continue;
        Expr inv;
        try {
            inv = solve_for(fi, u1, Expr::var(nu));
        } catch (const InversionError&) {
            tried += " " + xi + " (not invertible)";
            continue;
        }
        SystemModel out = apply_input_transform(r, {nu, r.inputs[1]}, {{u1, inv}}, "normalize " + xi);
        if (!affine_in(out, u2)) {
            tried += " " + xi;
            continue;
        }
        TransformStep norm;
        norm.kind = StepKind::Normalize;
        norm.forward = {{nu, fi}, {r.inputs[1], Expr::var(r.inputs[1])}};
        norm.inverse = {{r.inputs[0], inv}};
        norm.rationale = "the rhs of " + xi + " becomes input " + nu;
        if (!verify_step(norm, r, out, ctx)) throw InversionError("normalization by " + to_string(fi) + " failed to invert");
        steps.push_back(std::move(norm));
        if (parents) parents->push_back(r);
        return {std::move(out), std::move(steps)};
    }
    throw AffinityError("no normalization makes the rhs affine in " + r.inputs[1] + (tried.empty() ? "" : "; tried" + tried));
}

}  // namespace flatd2
