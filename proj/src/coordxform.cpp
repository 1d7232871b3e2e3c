#include "flatd2/coordxform.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "flatd2/linalg.hpp"

namespace flatd2 {

const char* step_kind_name(StepKind k) {
    switch (k) {
        case StepKind::StateTransform: return "state_transform";
        case StepKind::InputTransform: return "input_transform";
        case StepKind::Prolong: return "prolong";
        case StepKind::Decompose: return "decompose";
        case StepKind::Normalize: return "normalize";
    }
    return "?";
}

namespace {

bool is_plain(const NameMap& m) {
    for (const auto& [name, e] : m)
        if (e.op() != Op::Var || symbol_name(e.sym()) != name) return false;
    return true;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

Substitution to_substitution(const NameMap& m) {
    Substitution s;
    for (const auto& [name, e] : m) s[intern(name)] = e;
    return s;
}

// Domain of `base` widened by every free variable of `exprs`.
Domain widen(Domain d, const std::vector<Expr>& exprs) {
    for (const auto& e : exprs) {
        for (Symbol s : e.free_symbols()) d.add_var(s);
        d.add_implicit_guards(e);
    }
    return d;
}

std::vector<std::string> all_names(const SystemModel& m) {
    std::vector<std::string> names = m.states;
    names.insert(names.end(), m.inputs.begin(), m.inputs.end());
    for (const auto& p : m.params) names.push_back(p.name);
    return names;
}

// Replaces the variables in `drop` by 0 (or 1 when 0 is outside the domain
// of the expression); used once the expression is known not to depend on them.
Expr eliminate(const Expr& e, const std::vector<Symbol>& drop) {
    Substitution zero, one;
    for (Symbol s : drop) {
        zero[s] = Expr(0);
        one[s] = Expr(1);
    }
    try {
        return simplify(substitute(e, zero));
    } catch (const Error&) {
        return simplify(substitute(e, one));
    }
}

}  // namespace

bool TransformStep::is_identity() const {
    if (kind == StepKind::Prolong || kind == StepKind::Decompose) return false;
    return is_plain(forward) && is_plain(inverse);
}

bool verify_step(const TransformStep& step, const SystemModel& before, const SystemModel& after, Context& ctx) {
    if (step.kind == StepKind::Prolong) return true;
    const Substitution fwd = to_substitution(step.forward);
    const Substitution inv = to_substitution(step.inverse);
    std::vector<Expr> lhs, rhs_after, rhs_before;
    for (const auto& [name, e] : step.forward) {
        Expr back = simplify(substitute(e, inv));
        lhs.push_back(simplify(back - Expr::var(name)));
        rhs_after.push_back(back);
    }
    std::vector<Expr> rhs2;
    for (const auto& [name, e] : step.inverse) {
        Expr there = simplify(substitute(e, fwd));
        rhs2.push_back(simplify(there - Expr::var(name)));
        rhs_before.push_back(there);
    }
    Domain da = widen(after.domain(), rhs_after);
    for (const auto& e : lhs)
        if (!is_zero(e, da, ctx)) return false;
    Domain db = widen(before.domain(), rhs_before);
    for (const auto& e : rhs2)
        if (!is_zero(e, db, ctx)) return false;
    return true;
}

// ---------------------------------------------------------------------------

Expr solve_for(const Expr& phi, Symbol v, const Expr& target) {
    if (!phi.depends_on(v)) throw InversionError("expression does not depend on " + symbol_name(v));
    if (phi.op() == Op::Var) return target;
    Expr slope = simplify(diff(phi, v));
    if (!slope.depends_on(v)) {
        Expr offset = simplify(substitute(phi, {{v, Expr(0)}}));
        return simplify((target - offset) / slope);
    }
    switch (phi.op()) {
        case Op::Add: {
            std::vector<Expr> rest;
            const Expr* with = nullptr;
            for (const auto& t : phi.args()) {
                if (!t.depends_on(v)) {
                    rest.push_back(t);
                } else if (with) {
                    throw InversionError("cannot isolate " + symbol_name(v) + " in " + to_string(phi));
                } else {
                    with = &t;
                }
            }
            return solve_for(*with, v, target - add(std::move(rest)));
        }
        case Op::Mul: {
            std::vector<Expr> rest;
            const Expr* with = nullptr;
            for (const auto& f : phi.args()) {
                if (!f.depends_on(v)) {
                    rest.push_back(f);
                } else if (with) {
                    throw InversionError("cannot isolate " + symbol_name(v) + " in " + to_string(phi));
                } else {
                    with = &f;
                }
            }
            return solve_for(*with, v, target / mul(std::move(rest)));
        }
        case Op::Pow: return solve_for(phi.args()[0], v, pow(target, Rational(1) / phi.value()));
        case Op::Sin: return solve_for(phi.args()[0], v, asin(target));
        case Op::Asin: return solve_for(phi.args()[0], v, sin(target));
        case Op::Tan: return solve_for(phi.args()[0], v, atan(target));
        case Op::Atan: return solve_for(phi.args()[0], v, tan(target));
        case Op::Exp: return solve_for(phi.args()[0], v, ln(target));
        case Op::Ln: return solve_for(phi.args()[0], v, exp(target));
        default: throw InversionError("cannot isolate " + symbol_name(v) + " in " + to_string(phi));
    }
}

std::string fresh_bar_name(const std::string& base, const std::vector<std::string>& taken) {
    std::string name = base + "_bar";
    for (int k = 2; contains(taken, name); ++k) name = base + "_bar" + std::to_string(k);
    return name;
}

std::pair<std::string, int> split_jet(const std::string& name) {
    auto pos = name.rfind("_d");
    if (pos == std::string::npos || pos == 0 || pos + 2 >= name.size()) return {name, 0};
    for (std::size_t i = pos + 2; i < name.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) return {name, 0};
    if (name[pos + 2] == '0') return {name, 0};
    return {name.substr(0, pos), std::stoi(name.substr(pos + 2))};
}

std::string jet_name(const std::string& name, int j) {
    if (j == 0) return name;
    auto [stem, k] = split_jet(name);
    return stem + "_d" + std::to_string(k + j);
}

Expr total_derivative(const SystemModel& m, const Expr& e) {
    std::vector<Expr> terms;
    for (Symbol s : e.free_symbols()) {
        const std::string& name = symbol_name(s);
        Expr rate;
        if (int i = m.state_index(name); i >= 0) {
            rate = m.rhs[static_cast<std::size_t>(i)];
        } else if (m.is_param(name)) {
            continue;
        } else {
            auto [stem, k] = split_jet(name);
            bool jet = false;
            for (const auto& u : m.inputs) {
                auto [ustem, uk] = split_jet(u);
                if (ustem == stem && k >= uk) jet = true;
            }
            if (!jet) throw PreconditionError("'" + name + "' is not a variable of " + m.name);
            rate = Expr::var(jet_name(name, 1));
        }
        terms.push_back(diff(e, s) * rate);
    }
    return simplify(add(std::move(terms)));
}

SystemModel apply_input_transform(const SystemModel& m, const std::vector<std::string>& new_inputs,
                                  const Substitution& old_in_terms_of_new, const std::string& provenance) {
    SystemModel r = m;
    r.inputs = new_inputs;
    for (auto& f : r.rhs) f = simplify(substitute(f, old_in_terms_of_new));
    for (auto& c : r.constraints) c = simplify(substitute(c, old_in_terms_of_new));
    r.provenance = provenance;
    return r;
}

std::pair<SystemModel, TransformStep> prolong(const SystemModel& m, const std::string& input, int k) {
    const int idx = m.input_index(input);
    if (idx < 0) throw PreconditionError("'" + input + "' is not an input of " + m.name);
    if (k < 1) throw PreconditionError("prolongation order must be positive");
    const auto taken = all_names(m);
    SystemModel r = m;
    std::vector<std::string> chain;
    std::vector<Expr> chain_rhs;
    for (int j = 0; j < k; ++j) {
        chain.push_back(jet_name(input, j));
        chain_rhs.push_back(Expr::var(jet_name(input, j + 1)));
    }
    const std::string top = jet_name(input, k);
    for (int j = 1; j <= k; ++j)
        if (contains(taken, jet_name(input, j)))
            throw PreconditionError("prolongation name '" + jet_name(input, j) + "' is already in use");
    r.states.insert(r.states.begin(), chain.begin(), chain.end());
    r.rhs.insert(r.rhs.begin(), chain_rhs.begin(), chain_rhs.end());
    r.inputs[static_cast<std::size_t>(idx)] = top;
    r.provenance = "prolong(" + input + ", " + std::to_string(k) + ")";

    TransformStep step;
    step.kind = StepKind::Prolong;
    step.prolonged_input = input;
    step.order = k;
    for (const auto& s : r.states) step.forward.emplace_back(s, Expr::var(s));
    for (const auto& u : r.inputs) step.forward.emplace_back(u, Expr::var(u));
    step.rationale = "prolong " + input + " " + std::to_string(k) + " time" + (k > 1 ? "s" : "");
    return {std::move(r), std::move(step)};
}

// ---------------------------------------------------------------------------

namespace {

std::string hint_request(const std::vector<VectorField>& fields, int missing) {
    std::ostringstream os;
    os << "# " << missing << " more independent function(s) phi are needed with\n";
    for (const auto& v : fields) {
        os << "#   ";
        bool first = true;
        for (int i = 0; i < v.dim(); ++i) {
            if (v.comps[static_cast<std::size_t>(i)].is_zero()) continue;
            if (!first) os << " + ";
            os << "(" << to_string(v.comps[static_cast<std::size_t>(i)]) << ")*d(phi)/d(" << symbol_name(v.coords[static_cast<std::size_t>(i)]) << ")";
            first = false;
        }
        os << " = 0\n";
    }
    os << "# supply each one as a line of the form\n";
    os << "# hint first_integral <expr>\n";
    return os.str();
}

bool uses_any(const Expr& e, const std::vector<Symbol>& syms) {
    for (Symbol s : syms)
        if (e.depends_on(s)) return true;
    return false;
}

}  // namespace

std::vector<Expr> find_first_integrals(const std::vector<VectorField>& fields, int needed,
                                       const IntegralSearch& search, const Domain& dom, Context& ctx) {
    if (fields.empty()) throw PreconditionError("find_first_integrals: no fields");
    const std::vector<Symbol>& coords = fields.front().coords;
    std::vector<Expr> found;
    if (needed <= 0) return found;

    auto annihilated = [&](const Expr& phi) {
        for (const auto& v : fields)
            if (!is_zero(lie_derivative(v, phi), dom, ctx)) return false;
        return true;
    };
    auto adds_rank = [&](const std::vector<Expr>& accepted, const Expr& cand) {
        std::vector<Expr> fs = search.known;
        fs.insert(fs.end(), accepted.begin(), accepted.end());
        int before = jacobian_rank(fs, coords, dom, ctx);
        fs.push_back(cand);
        return jacobian_rank(fs, coords, dom, ctx) > before;
    };

    for (const auto& h : search.hints) {
        if (static_cast<int>(found.size()) >= needed) break;
        try {
            if (annihilated(h) && adds_rank(found, h)) found.push_back(h);
        } catch (const SamplingError&) {
            // a hint over variables foreign to this step
        } catch (const DomainError&) {
        }
    }
    if (static_cast<int>(found.size()) >= needed) return found;

    std::vector<Symbol> params;
    for (const auto& [p, r] : dom.params) params.push_back(p);
    AnsatzLibrary::Options opt;
    opt.constant = false;
    opt.keep = [&](const Expr& t) {
        if (search.require_input && !uses_any(t, search.inputs)) return false;
        if (search.states_only && uses_any(t, search.inputs)) return false;
        return true;
    };
    AnsatzLibrary lib(search.vars, params, search.atoms, search.nonzero, opt);

    AnsatzProblem prob;
    prob.unknowns = 1;
    prob.design = [&](const Point& p, const std::vector<Expr>& terms) {
        Eigen::MatrixXd grads = eval_gradients(terms, coords, p);
        Eigen::MatrixXd vals(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(fields.size()));
        for (std::size_t j = 0; j < fields.size(); ++j) vals.col(static_cast<Eigen::Index>(j)) = eval_field(fields[j], p);
        return Eigen::MatrixXd(vals.transpose() * grads.transpose());
    };
    prob.verify = [&](const std::vector<Expr>& c) { return annihilated(c[0]); };
    prob.independent = [&](const std::vector<std::vector<Expr>>& accepted, const std::vector<Expr>& c) {
        std::vector<Expr> acc = found;
        for (const auto& a : accepted) acc.push_back(a[0]);
        return adds_rank(acc, c[0]);
    };
    const int missing = needed - static_cast<int>(found.size());
    auto sols = solve_ansatz(prob, lib, dom, ctx, missing, true);
    // sign convention: the printed form does not start with a minus
    for (auto& s : sols) found.push_back(to_string(s[0]).front() == '-' ? simplify(-s[0]) : s[0]);
    if (static_cast<int>(found.size()) < needed) {
        throw StraightenError("ansatz search found " + std::to_string(found.size()) + " of " + std::to_string(needed) +
                                  " first integrals",
                              hint_request(fields, needed - static_cast<int>(found.size())));
    }
    return found;
}

std::vector<Expr> rhs_atoms(const SystemModel& m) {
    std::vector<Expr> atoms;
    std::set<const Node*> seen;
    auto walk = [&](auto&& self, const Expr& e) -> void {
        if (!seen.insert(e.node()).second) return;
        if (is_function(e.op())) {
            const Expr& a = e.args()[0];
            if (a.op() != Op::Var && !a.is_const() &&
                std::find(atoms.begin(), atoms.end(), a) == atoms.end())
                atoms.push_back(a);
        }
        for (const auto& c : e.args()) self(self, c);
    };
    for (const auto& f : m.rhs) walk(walk, f);
    return atoms;
}

namespace {

std::vector<Symbol> nonzero_vars(const SystemModel& m) {
    std::vector<Symbol> r;
    for (const auto& c : m.constraints)
        if (c.op() == Op::Var) r.push_back(c.sym());
    return r;
}

std::vector<Expr> atoms_where(const std::vector<Expr>& atoms, const std::vector<Symbol>& inputs, bool with_input) {
    std::vector<Expr> r;
    for (const auto& a : atoms)
        if (uses_any(a, inputs) == with_input) r.push_back(a);
    return r;
}

}  // namespace

std::pair<SystemModel, TransformStep> straighten_line(const SystemModel& m, const Expr& alpha1, const Expr& alpha2,
                                                      const std::vector<Expr>& hints, Context& ctx) {
    if (m.m() != 2) throw PreconditionError("straighten_line needs two inputs");
    const Domain dom = widen(m.domain(), {alpha1, alpha2});
    TransformStep step;
    step.kind = StepKind::InputTransform;
    const std::string& u1 = m.inputs[0];
    const std::string& u2 = m.inputs[1];

    if (is_zero(alpha1, dom, ctx)) {
        for (const auto& u : m.inputs) step.forward.emplace_back(u, Expr::var(u));
        step.rationale = "direction is already d/d" + u2;
        SystemModel r = m;
        return {std::move(r), std::move(step)};
    }
    if (is_zero(alpha2, dom, ctx)) {
        SystemModel r = m;
        std::swap(r.inputs[0], r.inputs[1]);
        r.provenance = "swap inputs";
        step.forward = {{u2, Expr::var(u2)}, {u1, Expr::var(u1)}};
        step.rationale = "direction is d/d" + u1 + "; inputs swapped";
        return {std::move(r), std::move(step)};
    }

    // A first integral phi of v = alpha1 d/du1 + alpha2 d/du2 becomes the first
    // input; u2 stays as the second one, which is admissible since alpha2 != 0.
    const std::vector<Symbol> coords = m.coordinates();
    const std::vector<Symbol> inputs = m.input_symbols();
    VectorField v = VectorField::zero(coords);
    v.comps[static_cast<std::size_t>(m.n())] = alpha1;
    v.comps[static_cast<std::size_t>(m.n() + 1)] = alpha2;

    IntegralSearch search;
    search.vars = coords;
    search.nonzero = nonzero_vars(m);
    search.atoms = atoms_where(rhs_atoms(m), inputs, true);
    search.require_input = true;
    search.inputs = inputs;
    for (const auto& h : hints)
        if (uses_any(h, inputs)) search.hints.push_back(h);
    search.known = {};
    for (Symbol s : m.state_symbols()) search.known.push_back(Expr::var(s));
    Expr phi = find_first_integrals({v}, 1, search, dom, ctx).front();

    const std::string bar = fresh_bar_name(u1, all_names(m));
    Expr inv = solve_for(phi, intern(u1), Expr::var(bar));
    SystemModel r = apply_input_transform(m, {bar, u2}, {{intern(u1), inv}}, "straighten " + to_string(phi));
    step.forward = {{bar, phi}, {u2, Expr::var(u2)}};
    step.inverse = {{u1, inv}};
    step.rationale = "first integral " + to_string(phi) + " of the direction becomes input " + bar;
    if (!verify_step(step, m, r, ctx)) throw InversionError("input transformation " + to_string(phi) + " failed to invert");
    return {std::move(r), std::move(step)};
}

Decomposition decompose(const SystemModel& m, const std::vector<Expr>& hints, Context& ctx, bool allow_redundant) {
    if (m.m() != 2) throw PreconditionError("decompose needs two inputs");
    const Domain dom = m.domain();
    const std::vector<Symbol> xs = m.state_symbols();
    const std::vector<Symbol> us = m.input_symbols();
    const int n = m.n();
    if (n < 3) throw PreconditionError("decompose needs at least three states");

    std::vector<VectorField> fields;
    for (Symbol u : us) {
        VectorField b = VectorField::zero(xs);
        for (int i = 0; i < n; ++i) b.comps[static_cast<std::size_t>(i)] = simplify(diff(m.rhs[static_cast<std::size_t>(i)], u));
        fields.push_back(std::move(b));
    }
    IntegralSearch search;
    search.vars = xs;
    search.nonzero = nonzero_vars(m);
    search.atoms = atoms_where(rhs_atoms(m), us, false);
    search.states_only = true;
    search.inputs = us;
    for (const auto& h : hints)
        if (!uses_any(h, us)) search.hints.push_back(h);
    std::vector<Expr> integrals = find_first_integrals(fields, n - 2, search, dom, ctx);

    // Each integral replaces one old state: a plain state variable replaces
    // itself, any other integral the lowest-index state it depends on that
    // keeps the Jacobian with respect to the replaced states nonsingular.
    const int k = static_cast<int>(integrals.size());
    std::vector<int> replaced(static_cast<std::size_t>(k), -1);
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (int j = 0; j < k; ++j) {
        const Expr& I = integrals[static_cast<std::size_t>(j)];
        if (I.op() == Op::Var) {
            int i = m.state_index(symbol_name(I.sym()));
            if (i >= 0 && !used[static_cast<std::size_t>(i)]) {
                replaced[static_cast<std::size_t>(j)] = i;
                used[static_cast<std::size_t>(i)] = true;
            }
        }
    }
    const auto pts = ctx.points(dom, ctx.tol().samples);
    for (int j = 0; j < k; ++j) {
        if (replaced[static_cast<std::size_t>(j)] >= 0) continue;
        const Expr& I = integrals[static_cast<std::size_t>(j)];
        for (int i = 0; i < n && replaced[static_cast<std::size_t>(j)] < 0; ++i) {
            if (used[static_cast<std::size_t>(i)] || !I.depends_on(xs[static_cast<std::size_t>(i)])) continue;
            std::vector<Expr> fs;
            std::vector<Symbol> cols;
            for (int q = 0; q < k; ++q) {
                int r = q == j ? i : replaced[static_cast<std::size_t>(q)];
                if (r < 0) continue;
                fs.push_back(integrals[static_cast<std::size_t>(q)]);
                cols.push_back(xs[static_cast<std::size_t>(r)]);
            }
            bool ok = true;
            for (const auto& p : pts) {
                try {
                    if (smallest_singular_value(eval_gradients(fs, cols, p)) <= 1e-6) ok = false;
                } catch (const DomainError&) {
                    ok = false;
                }
                if (!ok) break;
            }
            if (ok) {
                replaced[static_cast<std::size_t>(j)] = i;
                used[static_cast<std::size_t>(i)] = true;
            }
        }
        if (replaced[static_cast<std::size_t>(j)] < 0)
            throw InversionError("no state can be replaced by the first integral " + to_string(I));
    }

    // New names, ordered by the index of the replaced state.
    std::vector<int> order(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) order[static_cast<std::size_t>(j)] = j;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return replaced[static_cast<std::size_t>(a)] < replaced[static_cast<std::size_t>(b)]; });
    std::vector<std::string> taken = all_names(m);
    std::vector<std::string> names(static_cast<std::size_t>(k));
    for (int j : order) {
        const Expr& I = integrals[static_cast<std::size_t>(j)];
        const std::string& old = m.states[static_cast<std::size_t>(replaced[static_cast<std::size_t>(j)])];
        if (I.op() == Op::Var && symbol_name(I.sym()) == old) {
            names[static_cast<std::size_t>(j)] = old;
        } else {
            names[static_cast<std::size_t>(j)] = fresh_bar_name(old, taken);
            taken.push_back(names[static_cast<std::size_t>(j)]);
        }
    }

    // Old replaced states in terms of the new coordinates.
    Substitution inv;
    for (int j : order) {
        const Expr& I = integrals[static_cast<std::size_t>(j)];
        Symbol old = xs[static_cast<std::size_t>(replaced[static_cast<std::size_t>(j)])];
        const std::string& nm = names[static_cast<std::size_t>(j)];
        if (nm == symbol_name(old)) continue;
        Expr sol = solve_for(simplify(substitute(I, inv)), old, Expr::var(nm));
        for (auto& [s, e] : inv) e = simplify(substitute(e, {{old, sol}}));
        inv[old] = sol;
    }

    std::vector<std::string> complement;
    for (int i = 0; i < n; ++i)
        if (!used[static_cast<std::size_t>(i)]) complement.push_back(m.states[static_cast<std::size_t>(i)]);

    Decomposition out;
    SystemModel& s1 = out.sigma1;
    s1.name = m.name;
    s1.params = m.params;
    s1.inputs = complement;
    s1.provenance = "decompose";
    std::vector<Expr> fresh;
    for (int j : order) {
        const Expr& I = integrals[static_cast<std::size_t>(j)];
        std::vector<Expr> terms;
        for (int i = 0; i < n; ++i) terms.push_back(diff(I, xs[static_cast<std::size_t>(i)]) * m.rhs[static_cast<std::size_t>(i)]);
        fresh.push_back(simplify(substitute(add(std::move(terms)), inv)));
        s1.states.push_back(names[static_cast<std::size_t>(j)]);
    }
    Domain d1 = widen(Domain{}, fresh);
    for (const auto& p : m.params) d1.add_param(intern(p.name), p.range.value_or(ParamRange{}));
    for (const auto& c : m.constraints) {
        Expr cc = simplify(substitute(c, inv));
        d1.add_guard(cc, Guard::NonZero);
        if (!uses_any(cc, us)) s1.constraints.push_back(cc);
    }
    for (auto& e : fresh) {
        for (Symbol u : us)
            if (e.depends_on(u) && !is_zero(diff(e, u), d1, ctx))
                throw PreconditionError("subsystem still depends on input " + symbol_name(u));
        e = eliminate(e, us);
    }
    s1.rhs = fresh;

    TransformStep& step = out.step;
    step.kind = StepKind::Decompose;
    for (int j : order) step.forward.emplace_back(names[static_cast<std::size_t>(j)], integrals[static_cast<std::size_t>(j)]);
    for (const auto& c : complement) step.forward.emplace_back(c, Expr::var(c));
    for (const auto& [s, e] : inv) step.inverse.emplace_back(symbol_name(s), e);
    std::sort(step.inverse.begin(), step.inverse.end(),
              [&](const auto& a, const auto& b) { return m.state_index(a.first) < m.state_index(b.first); });
    step.kept_states = s1.states;
    for (const auto& c : complement)
        step.residual.emplace_back(c, simplify(substitute(m.rhs[static_cast<std::size_t>(m.state_index(c))], inv)));
    std::ostringstream why;
    why << "input distribution is involutive; first integrals";
    for (std::size_t j = 0; j < integrals.size(); ++j) why << (j ? ", " : " ") << to_string(integrals[j]);
    step.rationale = why.str();

    std::vector<Symbol> cs;
    for (const auto& c : complement) cs.push_back(intern(c));
    out.redundant = jacobian_rank(s1.rhs, cs, widen(s1.domain(), s1.rhs), ctx) < 2;
    if (out.redundant && !allow_redundant)
        throw RedundantInputError("subsystem inputs " + complement[0] + ", " + complement[1] + " enter with rank < 2");
    return out;
}

std::pair<SystemModel, TransformStep> single_input_reduce(const SystemModel& m, Context& ctx) {
    if (m.m() != 2) throw PreconditionError("single_input_reduce needs two inputs");
    const Domain dom = m.domain();
    const std::vector<Symbol> us = m.input_symbols();
    for (std::size_t i = 0; i < m.rhs.size(); ++i) {
        Expr d1 = simplify(diff(m.rhs[i], us[0]));
        Expr d2 = simplify(diff(m.rhs[i], us[1]));
        if (is_zero(d1, dom, ctx) && is_zero(d2, dom, ctx)) continue;
        // kernel direction of the input Jacobian
        auto [r, step] = straighten_line(m, d2, -d1, {}, ctx);
        const Symbol dropped = intern(r.inputs[1]);
        const Domain rd = r.domain();
        for (auto& f : r.rhs) {
            if (f.depends_on(dropped) && !is_zero(diff(f, dropped), rd, ctx))
                throw PreconditionError("input Jacobian has rank 2");
            f = eliminate(f, {dropped});
        }
        r.inputs.pop_back();
        r.provenance = "drop redundant input " + symbol_name(dropped);
        step.rationale += "; input " + symbol_name(dropped) + " no longer enters and is dropped";
        return {std::move(r), std::move(step)};
    }
    throw PreconditionError("rhs does not depend on the inputs");
}

}  // namespace flatd2
