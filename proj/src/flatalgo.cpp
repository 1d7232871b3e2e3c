#include "flatd2/flatalgo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <map>

#include "flatd2/jet.hpp"

#include "flatd2/ansatz.hpp"
#include "flatd2/linalg.hpp"

namespace flatd2 {

const char* case_tag_name(CaseTag t) {
    switch (t) {
        case CaseTag::Case1: return "case1";
        case CaseTag::Case2Dim3: return "case2-dim3";
        case CaseTag::Case2Dim4: return "case2-dim4";
        case CaseTag::Case3: return "case3";
        case CaseTag::TerminalSfl: return "terminal-sfl";
        case CaseTag::TerminalFail: return "terminal-fail";
        case CaseTag::Inconclusive: return "inconclusive";
    }
    return "?";
}

int case_number(CaseTag t) {
    switch (t) {
        case CaseTag::Case1: return 1;
        case CaseTag::Case2Dim3:
        case CaseTag::Case2Dim4: return 2;
        case CaseTag::Case3: return 3;
        default: return 0;
    }
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Flat: return "flat";
        case Verdict::NotLinearizable: return "not-linearizable-d<=2";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

namespace {

VectorField simplified(VectorField v) {
    for (auto& c : v.comps) c = simplify(c);
    return v;
}

std::vector<Symbol> param_symbols(const Domain& dom) {
    std::vector<Symbol> r;
    for (const auto& [s, range] : dom.params) r.push_back(s);
    return r;
}

std::vector<Symbol> nonzero_vars(const SystemModel& m) {
    std::vector<Symbol> r;
    for (const auto& c : m.constraints)
        if (c.op() == Op::Var) r.push_back(c.sym());
    return r;
}

std::vector<std::string> taken_names(const SystemModel& m) {
    std::vector<std::string> t = m.states;
    t.insert(t.end(), m.inputs.begin(), m.inputs.end());
    for (const auto& p : m.params) t.push_back(p.name);
    return t;
}

// Scales alpha so that its larger component at p is 1.
AlphaSolution normalized(const Expr& a1, const Expr& a2, const Point& p) {
    const double v1 = std::fabs(eval(a1, p)), v2 = std::fabs(eval(a2, p));
    if (v1 >= v2) return {Expr(1), simplify(a2 / a1)};
    return {simplify(a1 / a2), Expr(1)};
}

}  // namespace

SflChain sfl_chain(const SystemModel& m, Context& ctx) {
    SflChain out;
    const std::vector<Symbol> coords = m.coordinates();
    const Domain dom = m.domain();
    const VectorField f = drift_field(m);
    Distribution cur(coords);
    for (Symbol u : m.input_symbols()) cur.add(VectorField::partial(coords, u));
    std::vector<VectorField> fresh = cur.fields;
    int rank = generic_rank(cur, dom, ctx);
    const int full = m.n() + m.m();
    for (;;) {
        out.levels.push_back(cur);
        out.ranks.push_back(rank);
        out.involutive.push_back(is_involutive(cur, dom, ctx));
        if (rank == full) break;
        Distribution next = cur;
        std::vector<VectorField> added;
        for (const auto& x : fresh) {
            VectorField b = simplified(lie_bracket(f, x));
            Distribution trial = next;
            trial.add(b);
            int r = generic_rank(trial, dom, ctx);
            if (r > static_cast<int>(next.fields.size()) && r > rank + static_cast<int>(added.size())) {
                next = std::move(trial);
                added.push_back(b);
            }
        }
        if (added.empty()) break;
        rank = generic_rank(next, dom, ctx);
        cur = std::move(next);
        fresh = std::move(added);
    }
    out.sfl = rank == full && std::all_of(out.involutive.begin(), out.involutive.end(), [](bool b) { return b; });
    return out;
}

bool sfl_test(const SystemModel& m, Context& ctx) { return sfl_chain(m, ctx).sfl; }

CaseTag select_case(const SystemModel& m, Context& ctx, int* dim_closure) {
    if (!ai_test(m, ctx)) return CaseTag::Case3;
    const SystemModel a = is_syntactically_affine(m) ? m : to_ai_form(m, ctx).first;
    const Domain dom = a.domain();
    Distribution d1(a.state_symbols(), input_fields(a));
    if (is_involutive(d1, dom, ctx)) {
        if (dim_closure) *dim_closure = generic_rank(d1, dom, ctx);
        return CaseTag::Case1;
    }
    const int dim = generic_rank(involutive_closure(d1, dom, ctx), dom, ctx);
    if (dim_closure) *dim_closure = dim;
    if (dim == 3) return CaseTag::Case2Dim3;
    if (dim == 4) return CaseTag::Case2Dim4;
    return CaseTag::TerminalFail;
}

AlphaSolution build_bc(const SystemModel& m, CaseTag subcase, Context& ctx) {
    if (!is_syntactically_affine(m)) throw PreconditionError("build_bc: the model must be affine in its inputs");
    if (subcase == CaseTag::Case2Dim3 && m.n() == 3) return {Expr(0), Expr(1)};
    const Domain dom = m.domain();
    const std::vector<Symbol> xs = m.state_symbols();
    const auto b = input_fields(m);
    const VectorField a{xs, drift_at_zero_input(m)};
    const VectorField b12 = simplified(lie_bracket(b[0], b[1]));
    Distribution target(xs, {b[0], b[1], b12});
    VectorField c1, c2;
    if (subcase == CaseTag::Case2Dim3) {
        // [a, alpha1 b1 + alpha2 b2] lies in the closure
        c1 = simplified(lie_bracket(a, b[0]));
        c2 = simplified(lie_bracket(a, b[1]));
    } else if (subcase == CaseTag::Case2Dim4) {
        // alpha1 b1 + alpha2 b2 is a Cauchy characteristic of span{b1, b2, [b1, b2]}
        c1 = simplified(lie_bracket(b[0], b12));
        c2 = simplified(lie_bracket(b[1], b12));
    } else {
        throw PreconditionError("build_bc: not a case-2 subcase");
    }

    const double tol = ctx.tol().rank;
    auto pointwise = [&](const Point& p) {
        Eigen::MatrixXd proj = complement_projector(eval_distribution(target, p), tol);
        Eigen::MatrixXd r(xs.size(), 2);
        Eigen::VectorXd v1 = eval_field(c1, p), v2 = eval_field(c2, p);
        r.col(0) = proj * v1;
        r.col(1) = proj * v2;
        for (Eigen::Index j = 0; j < 2; ++j) {
            const double scale = 1.0 + (j ? v2 : v1).norm();
            if (r.col(j).norm() <= tol * scale) r.col(j).setZero();
        }
        return r;
    };

    // any direction works when both conditions hold identically
    std::vector<int> nullity;
    for (const Point& p : sample_points(dom, xs, ctx)) nullity.push_back(2 - numeric_rank(pointwise(p), tol));
    const int k = majority_rank(nullity, "case-2 solution count");
    if (k == 0) throw NoSolutionError(std::string("no combination b_c for ") + case_tag_name(subcase));
    if (k == 2) return {Expr(0), Expr(1)};

    AnsatzProblem prob;
    prob.unknowns = 2;
    prob.rows = pointwise;
    prob.verify = [&](const std::vector<Expr>& al) {
        Domain vd = dom;
        for (const auto& e : al) vd.add_implicit_guards(e);
        if (is_zero(al[0], vd, ctx) && is_zero(al[1], vd, ctx)) return false;
        const VectorField bc = simplified(al[0] * b[0] + al[1] * b[1]);
        if (subcase == CaseTag::Case2Dim3) return member_mod(simplified(lie_bracket(a, bc)), target, vd, ctx);
        return member_mod(simplified(lie_bracket(bc, b12)), target, vd, ctx);
    };
    AnsatzLibrary lib(xs, param_symbols(dom), rhs_atoms(m), nonzero_vars(m), AnsatzLibrary::Options{});
    auto sols = solve_ansatz(prob, lib, dom, ctx, 1, false);
    if (sols.empty()) throw LiftError("the combination b_c has no representative in the ansatz library");
    return normalized(sols[0][0], sols[0][1], ctx.point(dom));
}

std::pair<SystemModel, std::vector<TransformStep>> case2_step(const SystemModel& m, const AlphaSolution& bc,
                                                              Context& ctx, std::vector<SystemModel>* parents) {
    std::vector<TransformStep> steps;
    SystemModel cur = m;
    if (!(bc.a1.is_zero() && bc.a2.is_one())) {
        std::vector<std::string> taken = taken_names(m);
        const std::string n1 = fresh_bar_name(m.inputs[0], taken);
        taken.push_back(n1);
        const std::string n2 = fresh_bar_name(m.inputs[1], taken);
        const Expr U1 = Expr::var(m.inputs[0]), U2 = Expr::var(m.inputs[1]);
        const Expr W1 = Expr::var(n1), W2 = Expr::var(n2);
        const Expr det = simplify(bc.a1 * bc.a1 + bc.a2 * bc.a2);
        const Expr inv1 = simplify((bc.a2 * W1 + bc.a1 * W2) / det);
        const Expr inv2 = simplify((bc.a2 * W2 - bc.a1 * W1) / det);
        cur = apply_input_transform(m, {n1, n2}, {{intern(m.inputs[0]), inv1}, {intern(m.inputs[1]), inv2}},
                                    "case 2 input change");
        TransformStep st;
        st.kind = StepKind::InputTransform;
        st.forward = {{n1, simplify(bc.a2 * U1 - bc.a1 * U2)}, {n2, simplify(bc.a1 * U1 + bc.a2 * U2)}};
        st.inverse = {{m.inputs[0], inv1}, {m.inputs[1], inv2}};
        st.rationale = "b_c = (" + to_string(bc.a1) + ")*b1 + (" + to_string(bc.a2) + ")*b2 becomes the second input";
        if (!verify_step(st, m, cur, ctx)) throw InversionError("case 2 input change failed to invert");
        steps.push_back(std::move(st));
        if (parents) parents->push_back(m);
    }
    auto [p, ps] = prolong(cur, cur.inputs[0], 1);
    steps.push_back(std::move(ps));
    if (parents) parents->push_back(cur);
    return {std::move(p), std::move(steps)};
}

std::vector<Case3Branch> case3_step(const SystemModel& m, const std::vector<Expr>& hints, Context& ctx) {
    std::vector<Case3Branch> out;
    for (const auto& s : pai_condition_solutions(m, ctx)) {
        Case3Branch br;
        br.alpha = s;
        br.alpha.filter_checked = true;
        br.alpha.passes_filter = pai_filter(m, s, ctx);
        if (!br.alpha.passes_filter) {
            br.failure = "rejected by the PAI filter";
            out.push_back(std::move(br));
            continue;
        }
        try {
            auto [r, steps] = to_pai_form(m, s, hints, ctx, &br.parents);
            auto [p, ps] = prolong(r, r.inputs[0], 1);
            steps.push_back(std::move(ps));
            br.parents.push_back(r);
            br.model = std::move(p);
            br.steps = std::move(steps);
        } catch (const StraightenError& e) {
            br.failure = e.what();
            if (!e.hint_request().empty()) br.failure += "\n" + e.hint_request();
            br.inconclusive = true;
        } catch (const LiftError& e) {
            br.failure = e.what();
            br.inconclusive = true;
        } catch (const Error& e) {
            br.failure = e.what();
        }
        out.push_back(std::move(br));
    }
    return out;
}

// ---------------------------------------------------------------------------
// flat output verification

namespace {

using TD = Taylor<Dual>;

struct JetLayout {
    int n = 0;
    int q = 0;                      // highest input derivative used as a coordinate
    std::vector<Symbol> states;
    std::vector<std::string> inputs;
    int dim() const { return n + static_cast<int>(inputs.size()) * (q + 1); }
    int input_col(std::size_t j, int k) const { return n + static_cast<int>(j) * (q + 1) + k; }
};

// Highest input-jet order appearing in e (-1 when no input occurs).
int input_jet_order(const SystemModel& m, const Expr& e) {
    int best = -1;
    for (Symbol s : e.free_symbols()) {
        auto [stem, k] = split_jet(symbol_name(s));
        if (m.input_index(stem) >= 0) best = std::max(best, k);
    }
    return best;
}

// Rows: s! * d/dt^s of every y component for s = 0..order, as gradients in
// the layout coordinates at one point of the jet space.
std::vector<Eigen::MatrixXd> jet_rows(const SystemModel& m, const std::vector<Expr>& y, const JetLayout& L, int order,
                                      const Point& p) {
    TaylorOrder<Dual> guard(order);
    const Eigen::Index D = L.dim();
    const std::size_t N = static_cast<std::size_t>(order) + 1;
    std::vector<TD> xs(static_cast<std::size_t>(L.n));
    for (int i = 0; i < L.n; ++i) xs[static_cast<std::size_t>(i)] = TD(Dual::seed(p.get(L.states[static_cast<std::size_t>(i)]), D, i));
    // u_j^(k)(t) = sum_i u_j^(k+i) t^i / i!
    auto input_series = [&](std::size_t j, int k) {
        TD r;
        double fact = 1.0;
        for (std::size_t i = 0; i < N; ++i) {
            const int kk = k + static_cast<int>(i);
            if (i > 0) fact *= static_cast<double>(i);
            if (kk > L.q) break;
            const Symbol s = intern(jet_name(L.inputs[j], kk));
            r[i] = Dual::seed(p.get(s), D, L.input_col(j, kk)) * Dual(1.0 / fact);
        }
        return r;
    };
    std::map<Symbol, TD> inputs;
    for (std::size_t j = 0; j < L.inputs.size(); ++j)
        for (int k = 0; k <= L.q; ++k) inputs.emplace(intern(jet_name(L.inputs[j], k)), input_series(j, k));
    auto lookup_with = [&](const std::vector<TD>& x) {
        return [&, x](Symbol s) -> TD {
            for (int i = 0; i < L.n; ++i)
                if (L.states[static_cast<std::size_t>(i)] == s) return x[static_cast<std::size_t>(i)];
            auto it = inputs.find(s);
            if (it != inputs.end()) return it->second;
            return TD(Dual(p.get(s)));
        };
    };
    // Picard iteration: each pass fixes one more coefficient of x(t)
    for (std::size_t pass = 0; pass + 1 < N; ++pass) {
        std::vector<TD> next(xs.size());
        auto look = lookup_with(xs);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            TD fi = evaluate<TD>(m.rhs[i], look);
            next[i] = detail::integrate(xs[i][0], fi);
        }
        xs = std::move(next);
    }
    std::vector<Eigen::MatrixXd> out;
    auto look = lookup_with(xs);
    for (const auto& e : y) {
        TD v = evaluate<TD>(e, look);
        Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), D);
        double fact = 1.0;
        for (std::size_t s = 0; s < N; ++s) {
            if (s > 0) fact *= static_cast<double>(s);
            for (Eigen::Index c = 0; c < D; ++c) rows(static_cast<Eigen::Index>(s), c) = v[s].grad(c) * fact;
        }
        out.push_back(std::move(rows));
    }
    return out;
}

Eigen::MatrixXd unit_rows(Eigen::MatrixXd a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double n = a.row(i).norm();
        if (n > 0.0) a.row(i) /= n;
    }
    return a;
}

}  // namespace

FlatOutputCandidate verify_flat_output(const SystemModel& m, const std::vector<Expr>& y, Context& ctx,
                                       VerifyOptions opt) {
    if (y.size() != static_cast<std::size_t>(m.m()))
        throw PreconditionError("verify_flat_output: need one output component per input");
    FlatOutputCandidate out;
    out.y = y;
    const int max_order = opt.max_order >= 0 ? opt.max_order : m.n() + 4;
    JetLayout L;
    L.n = m.n();
    L.states = m.state_symbols();
    L.inputs = m.inputs;
    int qy = 0;
    for (const auto& e : y) qy = std::max(qy, input_jet_order(m, e));
    L.q = max_order + qy;

    Domain dom = m.domain();
    std::vector<Symbol> extra;
    for (const auto& u : m.inputs)
        for (int k = 1; k <= L.q; ++k) extra.push_back(intern(jet_name(u, k)));
    for (const auto& e : y)
        for (Symbol s : e.free_symbols()) dom.add_var(s);

    const int count = opt.points > 0 ? opt.points : ctx.tol().samples;
    std::vector<std::vector<Eigen::MatrixXd>> rows;
    int failures = 0;
    while (static_cast<int>(rows.size()) < count) {
        Point p = ctx.point(dom, extra);
        try {
            auto r = jet_rows(m, y, L, max_order, p);
            bool finite = true;
            for (const auto& a : r) finite = finite && a.allFinite();
            if (!finite) throw DomainError("non-finite jet");
            rows.push_back(std::move(r));
        } catch (const DomainError&) {
            if (++failures > 40 * count) throw SamplingError("flat output jets undefined at sampled points");
        }
    }

    const double tol = ctx.tol().rank;
    const int D = L.dim();
    const int ny = static_cast<int>(y.size());
    // orders r with sum r_i = total, lexicographically
    auto search = [&](int total, std::vector<int>& R) -> bool {
        std::vector<int> r(static_cast<std::size_t>(ny), 0);
        std::function<bool(int, int)> rec = [&](int i, int left) -> bool {
            if (i == ny - 1) {
                if (left > max_order) return false;
                r[static_cast<std::size_t>(i)] = left;
                std::vector<bool> votes;
                double worst = 0.0;
                for (const auto& pr : rows) {
                    int nrows = 0;
                    for (int c = 0; c < ny; ++c) nrows += r[static_cast<std::size_t>(c)] + 1;
                    Eigen::MatrixXd jy(nrows, D);
                    int at = 0;
                    for (int c = 0; c < ny; ++c) {
                        const int rc = r[static_cast<std::size_t>(c)] + 1;
                        jy.middleRows(at, rc) = pr[static_cast<std::size_t>(c)].topRows(rc);
                        at += rc;
                    }
                    jy = unit_rows(jy);
                    Eigen::MatrixXd aug(nrows + L.n + static_cast<int>(L.inputs.size()), D);
                    aug.topRows(nrows) = jy;
                    aug.bottomRows(aug.rows() - nrows).setZero();
                    for (int k = 0; k < L.n; ++k) aug(nrows + k, k) = 1.0;
                    for (std::size_t j = 0; j < L.inputs.size(); ++j)
                        aug(nrows + L.n + static_cast<Eigen::Index>(j), L.input_col(j, 0)) = 1.0;
                    const int ry = numeric_rank(jy, tol);
                    const int ra = numeric_rank(aug, tol);
                    votes.push_back(ry == nrows && ra == ry);
                    Eigen::JacobiSVD<Eigen::MatrixXd> svd(aug);
                    const auto& sv = svd.singularValues();
                    if (ra < sv.size()) worst = std::max(worst, sv[ra] / sv[0]);
                }
                if (majority_vote(votes, "flat output rank condition")) {
                    R = r;
                    out.residual = worst;
                    return true;
                }
                return false;
            }
            for (int v = 0; v <= std::min(left, max_order); ++v) {
                r[static_cast<std::size_t>(i)] = v;
                if (rec(i + 1, left - v)) return true;
            }
            return false;
        };
        return rec(0, total);
    };
    for (int total = 0; total <= ny * max_order; ++total) {
        std::vector<int> R;
        if (search(total, R)) {
            out.R = R;
            int sum = 0;
            for (int r : R) sum += r;
            out.d = sum - m.n();
            out.verified = out.d >= 0;
            out.message = out.verified ? "x and u are functions of the output jets" : "rank condition met below n";
            return out;
        }
    }
    out.message = "no multi-index R up to order " + std::to_string(max_order);
    return out;
}

// ---------------------------------------------------------------------------
// linearizing outputs

std::vector<Expr> extract_linearizing_output(const SystemModel& m, const std::vector<std::pair<Expr, Expr>>& hints,
                                             Context& ctx) {
    for (const auto& [h1, h2] : hints) {
        try {
            auto v = verify_flat_output(m, {h1, h2}, ctx);
            if (v.verified && v.d == 0) return {h1, h2};
        } catch (const Error&) {
        }
    }
    const SflChain ch = sfl_chain(m, ctx);
    if (!ch.sfl) throw PreconditionError("extract_linearizing_output: the model is not static feedback linearizable");
    const int mi = m.m();
    // controllability indices from the rank increments after D_0
    std::vector<int> kappa(static_cast<std::size_t>(mi), 0);
    for (std::size_t i = 1; i < ch.ranks.size(); ++i) {
        const int inc = ch.ranks[i] - ch.ranks[i - 1];
        for (int j = 0; j < inc && j < mi; ++j) ++kappa[static_cast<std::size_t>(j)];
    }
    const Domain dom = m.domain();
    std::vector<std::pair<Expr, int>> chosen;
    const int kmax = kappa.empty() ? 0 : kappa[0];
    for (int k = kmax; k >= 1; --k) {
        const int need = static_cast<int>(std::count(kappa.begin(), kappa.end(), k));
        if (need == 0) continue;
        IntegralSearch search;
        search.vars = m.state_symbols();
        search.nonzero = nonzero_vars(m);
        search.inputs = m.input_symbols();
        search.states_only = true;
        for (const auto& a : rhs_atoms(m)) {
            bool has_input = false;
            for (Symbol s : a.free_symbols()) has_input = has_input || m.input_index(symbol_name(s)) >= 0;
            if (!has_input) search.atoms.push_back(a);
        }
        for (const auto& [yv, ky] : chosen) {
            Expr e = yv;
            for (int s = 0; s <= ky - k; ++s) {
                search.known.push_back(e);
                e = simplify(total_derivative(m, e));
            }
        }
        const Distribution& level = ch.levels[static_cast<std::size_t>(k - 1)];
        auto found = find_first_integrals(level.fields, need, search, dom, ctx);
        for (const auto& e : found) chosen.emplace_back(e, k);
    }
    std::vector<Expr> y;
    for (const auto& [e, k] : chosen) y.push_back(e);
    return y;
}

// ---------------------------------------------------------------------------
// pull-back

namespace {

Expr pull_back_step(const Expr& e, const SystemModel& parent, const TransformStep& step) {
    Substitution sub;
    for (Symbol s : e.free_symbols()) {
        const std::string& name = symbol_name(s);
        auto direct = std::find_if(step.forward.begin(), step.forward.end(), [&](const auto& kv) { return kv.first == name; });
        if (direct != step.forward.end()) {
            sub[s] = direct->second;
            continue;
        }
        auto [stem, k] = split_jet(name);
        if (k == 0) continue;
        auto base = std::find_if(step.forward.begin(), step.forward.end(), [&](const auto& kv) { return kv.first == stem; });
        if (base == step.forward.end()) continue;
        Expr d = base->second;
        for (int i = 0; i < k; ++i) d = simplify(total_derivative(parent, d));
        sub[s] = d;
    }
    return sub.empty() ? e : simplify(substitute(e, sub));
}

}  // namespace

Expr pull_back(const Expr& e, const std::vector<SystemModel>& models, const std::vector<TransformStep>& steps) {
    if (models.size() != steps.size()) throw PreconditionError("pull_back: one parent model per step");
    Expr r = e;
    for (std::size_t i = steps.size(); i-- > 0;) r = pull_back_step(r, models[i], steps[i]);
    return r;
}

// ---------------------------------------------------------------------------
// driver

namespace {

struct Outcome {
    Verdict verdict = Verdict::Inconclusive;
    std::vector<int> path;
    std::vector<SystemModel> parents;
    std::vector<TransformStep> steps;
    SystemModel terminal;
    std::vector<Expr> y;
    bool not_flat_at_all = false;
    std::vector<std::string> hint_requests;
    std::string message;
};

struct Explorer {
    const RunOptions& opt;
    int max_case1;

    Outcome fail(TraceNode& node, CaseTag tag, const std::string& why) {
        node.tag = tag;
        node.note = why;
        Outcome o;
        o.verdict = tag == CaseTag::TerminalFail ? Verdict::NotLinearizable : Verdict::Inconclusive;
        o.message = why;
        return o;
    }

    std::unique_ptr<TraceNode> child_of(const TraceNode& node, SystemModel model, std::vector<TransformStep> steps,
                                        std::vector<SystemModel> parents, int prolonged, int case1) {
        auto c = std::make_unique<TraceNode>();
        c->model = std::move(model);
        c->steps = std::move(steps);
        c->step_parents = std::move(parents);
        c->prolongations = node.prolongations + prolonged;
        c->case1_count = node.case1_count + case1;
        return c;
    }

    // Child result seen from the parent: path and steps are prefixed.
    static Outcome lift(Outcome o, const TraceNode& child, int case_no) {
        if (o.verdict == Verdict::Flat) {
            o.path.insert(o.path.begin(), case_no);
            o.steps.insert(o.steps.begin(), child.steps.begin(), child.steps.end());
            o.parents.insert(o.parents.begin(), child.step_parents.begin(), child.step_parents.end());
        }
        return o;
    }

    // Puts a possibly non-affine model into explicit affine shape; the step
    // (if any) is recorded on the child.
    SystemModel affine(const SystemModel& m, std::vector<TransformStep>& steps, std::vector<SystemModel>& parents,
                       Context& ctx) {
        if (is_syntactically_affine(m)) return m;
        auto [a, st] = to_ai_form(m, ctx);
        steps.push_back(std::move(st));
        parents.push_back(m);
        return a;
    }

    Outcome explore(TraceNode& node, Context& ctx) {
        try {
            return explore_unguarded(node, ctx);
        } catch (const StraightenError& e) {
            Outcome o = fail(node, CaseTag::Inconclusive, e.what());
            if (!e.hint_request().empty()) o.hint_requests.push_back(e.hint_request());
            return o;
        } catch (const NoSolutionError& e) {
            return fail(node, CaseTag::TerminalFail, e.what());
        } catch (const Error& e) {
            return fail(node, CaseTag::Inconclusive, e.what());
        }
    }

    Outcome explore_unguarded(TraceNode& node, Context& ctx) {
        const SystemModel& m = node.model;
        if (sfl_test(m, ctx)) {
            node.tag = CaseTag::TerminalSfl;
            std::vector<std::pair<Expr, Expr>> hints;
            for (const auto& h : opt.hints.linearizing_outputs) hints.push_back(h);
            Outcome o;
            o.y = extract_linearizing_output(m, hints, ctx);
            o.verdict = Verdict::Flat;
            o.terminal = m;
            return o;
        }
        if (m.m() != 2) return fail(node, CaseTag::TerminalFail, "single-input model is not static feedback linearizable");
        int dim = 0;
        const CaseTag tag = select_case(m, ctx, &dim);
        node.tag = tag;
        switch (tag) {
            case CaseTag::Case1: return case1(node, ctx);
            case CaseTag::Case2Dim3:
            case CaseTag::Case2Dim4: return case2(node, tag, ctx);
            case CaseTag::Case3: return case3(node, ctx);
            default:
                return fail(node, CaseTag::TerminalFail,
                            "no case applies: the involutive closure of the input distribution has dimension " +
                                std::to_string(dim));
        }
    }

    Outcome case1(TraceNode& node, Context& ctx) {
        if (node.case1_count >= max_case1) return fail(node, CaseTag::TerminalFail, "case-1 budget exhausted");
        std::vector<TransformStep> steps;
        std::vector<SystemModel> parents;
        SystemModel a = affine(node.model, steps, parents, ctx);
        Decomposition d = decompose(a, opt.hints.first_integrals, ctx, true);
        steps.push_back(d.step);
        parents.push_back(a);
        if (d.redundant) {
            auto [single, st] = single_input_reduce(d.sigma1, ctx);
            if (!sfl_test(single, ctx)) {
                Outcome o = fail(node, CaseTag::TerminalFail,
                                 "the subsystem reduces to a single input and is not static feedback linearizable");
                o.not_flat_at_all = true;
                node.tag = CaseTag::Case1;
                return o;
            }
            node.tag = CaseTag::Case1;
            node.note = "the subsystem reduces to a single linearizable input; output assembly for this case is not supported";
            Outcome o;
            o.message = node.note;
            return o;
        }
        node.children.push_back(child_of(node, d.sigma1, std::move(steps), std::move(parents), 0, 1));
        TraceNode& c = *node.children.back();
        return lift(explore(c, ctx), c, 1);
    }

    Outcome case2(TraceNode& node, CaseTag tag, Context& ctx) {
        if (node.prolongations >= opt.budget.max_prolong)
            return fail(node, CaseTag::TerminalFail, "difference budget exhausted");
        std::vector<TransformStep> steps;
        std::vector<SystemModel> parents;
        SystemModel a = affine(node.model, steps, parents, ctx);
        const AlphaSolution bc = build_bc(a, tag, ctx);
        auto [p, ps] = case2_step(a, bc, ctx, &parents);
        steps.insert(steps.end(), ps.begin(), ps.end());
        node.children.push_back(child_of(node, std::move(p), std::move(steps), std::move(parents), 1, 0));
        TraceNode& c = *node.children.back();
        c.label = "b_c = (" + to_string(bc.a1) + ", " + to_string(bc.a2) + ")";
        return lift(explore(c, ctx), c, 2);
    }

    Outcome case3(TraceNode& node, Context& ctx) {
        if (node.prolongations >= opt.budget.max_prolong)
            return fail(node, CaseTag::TerminalFail, "difference budget exhausted");
        std::vector<Case3Branch> branches = case3_step(node.model, opt.hints.first_integrals, ctx);
        std::vector<Outcome> results(branches.size());
        std::vector<std::size_t> live;
        for (std::size_t i = 0; i < branches.size(); ++i) {
            Case3Branch& b = branches[i];
            const std::string label = "v_c = (" + to_string(b.alpha.a1) + ", " + to_string(b.alpha.a2) + ")";
            if (!b.model) {
                auto c = std::make_unique<TraceNode>();
                c->model = node.model;
                c->label = label;
                c->prolongations = node.prolongations;
                c->case1_count = node.case1_count;
                results[i] = fail(*c, b.inconclusive ? CaseTag::Inconclusive : CaseTag::TerminalFail, b.failure);
                if (b.inconclusive && b.failure.find('\n') != std::string::npos)
                    results[i].hint_requests.push_back(b.failure.substr(b.failure.find('\n') + 1));
                node.children.push_back(std::move(c));
                continue;
            }
            node.children.push_back(child_of(node, std::move(*b.model), std::move(b.steps), std::move(b.parents), 1, 0));
            node.children.back()->label = label;
            live.push_back(i);
        }
        // every branch draws from its own child context, so the result does
        // not depend on the order in which branches run
        if (opt.parallel && live.size() > 1) {
            std::vector<std::future<Outcome>> futs;
            for (std::size_t i : live) {
                futs.push_back(std::async(std::launch::async, [this, &node, &ctx, i] {
                    Context cc = ctx.child(i);
                    return explore(*node.children[i], cc);
                }));
            }
            for (std::size_t k = 0; k < live.size(); ++k) results[live[k]] = futs[k].get();
        } else {
            for (std::size_t i : live) {
                Context cc = ctx.child(i);
                results[i] = explore(*node.children[i], cc);
            }
        }
        Outcome merged;
        merged.verdict = Verdict::NotLinearizable;
        for (std::size_t i = 0; i < results.size(); ++i) {
            Outcome& r = results[i];
            if (r.verdict == Verdict::Flat) return lift(std::move(r), *node.children[i], 3);
            if (r.verdict == Verdict::Inconclusive) merged.verdict = Verdict::Inconclusive;
            merged.not_flat_at_all = merged.not_flat_at_all || r.not_flat_at_all;
            merged.hint_requests.insert(merged.hint_requests.end(), r.hint_requests.begin(), r.hint_requests.end());
            if (!r.message.empty()) merged.message += (merged.message.empty() ? "" : "; ") + r.message;
        }
        if (merged.verdict == Verdict::Inconclusive) merged.not_flat_at_all = false;
        return merged;
    }
};

}  // namespace

RunResult run(const SystemModel& m, Context& ctx, const RunOptions& opt) {
    RunResult res;
    res.trace = std::make_unique<TraceNode>();
    res.trace->model = m;
    Explorer ex{opt, opt.budget.max_case1 >= 0 ? opt.budget.max_case1 : m.n()};
    Outcome o = ex.explore(*res.trace, ctx);
    res.verdict = o.verdict;
    res.not_flat_at_all = o.not_flat_at_all;
    res.hint_requests = std::move(o.hint_requests);
    res.message = o.message;
    if (o.verdict != Verdict::Flat) return res;

    res.case_path = o.path;
    res.terminal_output = o.y;
    std::vector<Expr> y;
    for (const auto& e : o.y) y.push_back(pull_back(e, o.parents, o.steps));
    int prolonged = 0;
    for (const auto& s : o.steps) prolonged += s.kind == StepKind::Prolong ? s.order : 0;
    try {
        res.output = verify_flat_output(m, y, ctx, opt.verify);
    } catch (const Error& e) {
        res.output.y = y;
        res.output.message = e.what();
    }
    if (!res.output.verified || res.output.d != prolonged) {
        res.verdict = Verdict::Inconclusive;
        res.message = "the pulled-back output did not verify with d = " + std::to_string(prolonged) + " (" +
                      res.output.message + ", d = " + std::to_string(res.output.d) + ")";
    }
    return res;
}

}  // namespace flatd2
