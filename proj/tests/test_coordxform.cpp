#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "flatd2/coordxform.hpp"
#include "flatd2/parse.hpp"

using namespace flatd2;

namespace {

Expr P(const char* s) { return parse_expr(s); }

Point random_point(std::mt19937_64& rng, const std::vector<std::string>& names) {
    std::uniform_real_distribution<double> mag(0.2, 1.2);
    Point p;
    for (const auto& n : names) p.set(n, (rng() & 1 ? 1.0 : -1.0) * mag(rng));
    return p;
}

double partial_fd(const Expr& e, Point p, const std::string& v, double h = 1e-5) {
    double x = p[v];
    p.set(v, x + h);
    double fp = eval(e, p);
    p.set(v, x - h);
    double fm = eval(e, p);
    return (fp - fm) / (2 * h);
}

// Expression equality on the model's sampling domain.
bool same(const Expr& a, const Expr& b, const Domain& d) {
    Context ctx(7);
    return is_zero(simplify(a - b), d, ctx);
}

Domain domain_of(std::initializer_list<const char*> vars, std::initializer_list<const char*> params = {}) {
    Domain d;
    for (auto v : vars) d.add_var(intern(v));
    for (auto p : params) d.add_param(intern(p), ParamRange{0.1, 1.0});
    return d;
}

}  // namespace

TEST(SolveFor, LinearRatioAndFunctionChains) {
    Symbol u1 = intern("u1"), u2 = intern("u2");
    Expr t = Expr::var("t");
    Domain d = domain_of({"u1", "u2", "t", "theta", "epsilon"});
    d.add_guard(Expr::var("u2"), Guard::NonZero);
    d.add_guard(Expr::var("t"), Guard::NonZero);
    struct Case {
        const char* phi;
        Symbol v;
    } cases[] = {{"u1 - epsilon*sin(theta)*u2", u1}, {"u1/u2", u2}, {"u1/u2", u1}, {"sin(u1) + theta", u1},
                 {"exp(2*u1)*theta", u1},           {"u2^3 + 1", u2}};
    for (const auto& c : cases) {
        Expr phi = P(c.phi);
        Expr sol = solve_for(phi, c.v, t);
        Expr back = substitute(phi, {{c.v, sol}});
        Domain dd = d;
        dd.add_implicit_guards(sol);
        dd.add_implicit_guards(back);
        EXPECT_TRUE(same(back, t, dd)) << c.phi << " -> " << to_string(sol);
    }
    EXPECT_THROW(solve_for(P("cos(u1)"), u1, t), InversionError);
    EXPECT_THROW(solve_for(P("u2"), u1, t), InversionError);
}

TEST(Naming, JetAndBarNames) {
    EXPECT_EQ(split_jet("u1_d3"), std::make_pair(std::string("u1"), 3));
    EXPECT_EQ(split_jet("v_z_bar"), std::make_pair(std::string("v_z_bar"), 0));
    EXPECT_EQ(split_jet("x_d0"), std::make_pair(std::string("x_d0"), 0));
    EXPECT_EQ(split_jet("_d2"), std::make_pair(std::string("_d2"), 0));
    EXPECT_EQ(jet_name("v_z_bar", 2), "v_z_bar_d2");
    EXPECT_EQ(jet_name("a_d1", 1), "a_d2");
    EXPECT_EQ(jet_name("a", 0), "a");
    EXPECT_EQ(fresh_bar_name("v_x", {"x", "v_x"}), "v_x_bar");
    EXPECT_EQ(fresh_bar_name("v_x", {"v_x_bar"}), "v_x_bar2");
    EXPECT_EQ(fresh_bar_name("v_x", {"v_x_bar", "v_x_bar2"}), "v_x_bar3");
}

TEST(TotalDerivative, StatesInputsAndJets) {
    SystemModel m = load_system("vtol");
    Domain d = m.domain();
    EXPECT_TRUE(same(total_derivative(m, P("x")), P("v_x"), d));
    EXPECT_TRUE(same(total_derivative(m, P("epsilon*omega")), P("epsilon*u2"), d));
    d.add_var(intern("u1_d1"));
    d.add_var(intern("u1_d2"));
    EXPECT_TRUE(same(total_derivative(m, P("u1*theta")), P("u1_d1*theta + u1*omega"), d));
    EXPECT_TRUE(same(total_derivative(m, P("u1_d1")), P("u1_d2"), d));
    EXPECT_THROW(total_derivative(m, P("w")), PreconditionError);
}

TEST(Prolong, ChainNamesAndOrder) {
    SystemModel m = load_system("academic1");
    auto [r, step] = prolong(m, "u1", 2);
    EXPECT_EQ(r.states, (std::vector<std::string>{"u1", "u1_d1", "x1", "x2", "x3"}));
    EXPECT_EQ(r.inputs, (std::vector<std::string>{"u1_d2", "u2"}));
    EXPECT_EQ(r.rhs[0], P("u1_d1"));
    EXPECT_EQ(r.rhs[1], P("u1_d2"));
    EXPECT_EQ(step.kind, StepKind::Prolong);
    EXPECT_EQ(step.order, 2);
    EXPECT_FALSE(step.is_identity());
    validate_system(r, nullptr);

    auto [r2, step2] = prolong(r, "u1_d2", 1);
    EXPECT_EQ(r2.inputs[0], "u1_d3");
    EXPECT_EQ(r2.states[0], "u1_d2");
    EXPECT_TRUE(same(total_derivative(r2, P("u1_d2*x2")), P("u1_d3*x2 + u1_d2*u2"),
                     [&] {
                         Domain d = r2.domain();
                         return d;
                     }()));
}

TEST(FirstIntegrals, HomogeneousFieldGivesRatio) {
    std::vector<Symbol> c = {intern("u1"), intern("u2")};
    VectorField v{c, {P("u1"), P("u2")}};
    Domain d = domain_of({"u1", "u2"});
    d.add_guard(P("u2"), Guard::NonZero);
    IntegralSearch s;
    s.vars = c;
    s.nonzero = {intern("u2")};
    Context ctx;
    auto r = find_first_integrals({v}, 1, s, d, ctx);
    ASSERT_EQ(r.size(), 1u);
    // a first integral of the Euler field is homogeneous of degree 0
    std::mt19937_64 rng(3);
    for (int k = 0; k < 30; ++k) {
        Point p = random_point(rng, {"u1", "u2"});
        Point q;
        q.set("u1", 1.7 * p["u1"]);
        q.set("u2", 1.7 * p["u2"]);
        EXPECT_NEAR(eval(r[0], p), eval(r[0], q), 1e-9);
    }
}

TEST(FirstIntegrals, HintIsTriedFirst) {
    std::vector<Symbol> c = {intern("u1"), intern("u2")};
    VectorField v{c, {P("u1"), P("u2")}};
    Domain d = domain_of({"u1", "u2"});
    d.add_guard(P("u2"), Guard::NonZero);
    d.add_guard(P("u1"), Guard::NonZero);
    IntegralSearch s;
    s.vars = c;
    s.hints = {P("u2/u1 + 3"), P("u1*u2")};
    Context ctx;
    auto r = find_first_integrals({v}, 1, s, d, ctx);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0], P("u2/u1 + 3"));
}

TEST(FirstIntegrals, ExhaustedAnsatzRequestsHint) {
    std::vector<Symbol> c = {intern("x"), intern("y")};
    VectorField v{c, {Expr(1), P("exp(x*y)")}};
    Domain d = domain_of({"x", "y"});
    IntegralSearch s;
    s.vars = c;
    Context ctx;
    try {
        find_first_integrals({v}, 1, s, d, ctx);
        FAIL() << "expected StraightenError";
    } catch (const StraightenError& e) {
        EXPECT_NE(e.hint_request().find("hint first_integral"), std::string::npos);
        EXPECT_NE(e.hint_request().find("d(phi)/d(y)"), std::string::npos);
        // the request parses as a (comment-only) hint file
        EXPECT_TRUE(parse_hints(e.hint_request()).empty());
    }
}

TEST(FirstIntegrals, VtolInputDistribution) {
    SystemModel m = load_system("vtol");
    auto xs = m.state_symbols();
    std::vector<VectorField> b;
    for (Symbol u : m.input_symbols()) {
        VectorField f = VectorField::zero(xs);
        for (int i = 0; i < m.n(); ++i) f.comps[static_cast<std::size_t>(i)] = diff(m.rhs[static_cast<std::size_t>(i)], u);
        b.push_back(f);
    }
    IntegralSearch s;
    s.vars = xs;
    s.states_only = true;
    s.inputs = m.input_symbols();
    Context ctx;
    Domain d = m.domain();
    auto r = find_first_integrals(b, 4, s, d, ctx);
    ASSERT_EQ(r.size(), 4u);
    EXPECT_EQ(jacobian_rank(r, xs, d, ctx), 4);
    // oracle: finite differences of the rhs in u and of phi in x
    std::mt19937_64 rng(11);
    std::vector<std::string> names = m.states;
    names.insert(names.end(), m.inputs.begin(), m.inputs.end());
    for (int k = 0; k < 10; ++k) {
        Point p = random_point(rng, names);
        p.set("epsilon", 0.4);
        for (const auto& phi : r) {
            for (const auto& u : m.inputs) {
                double dot = 0;
                for (int i = 0; i < m.n(); ++i)
                    dot += partial_fd(m.rhs[static_cast<std::size_t>(i)], p, u) *
                           partial_fd(phi, p, m.states[static_cast<std::size_t>(i)]);
                EXPECT_NEAR(dot, 0.0, 1e-6) << to_string(phi);
            }
        }
    }
}

TEST(Decompose, VtolSplitsOffTwoStates) {
    SystemModel m = load_system("vtol");
    Context ctx;
    Decomposition dec = decompose(m, {}, ctx);
    const SystemModel& s1 = dec.sigma1;
    EXPECT_EQ(s1.states, (std::vector<std::string>{"x", "z", "theta", "v_x_bar"}));
    EXPECT_EQ(s1.inputs, (std::vector<std::string>{"v_z", "omega"}));
    EXPECT_FALSE(dec.redundant);
    EXPECT_EQ(dec.step.kind, StepKind::Decompose);
    EXPECT_TRUE(verify_step(dec.step, m, s1, ctx));

    // the new coordinate is the expected one up to sign
    Expr vbar;
    for (const auto& [n, e] : dec.step.forward)
        if (n == "v_x_bar") vbar = e;
    Expr ref = P("cos(theta)*v_x + sin(theta)*v_z - epsilon*omega");
    Domain d = m.domain();
    double sign = same(vbar, ref, d) ? 1.0 : (same(vbar, -ref, d) ? -1.0 : 0.0);
    ASSERT_NE(sign, 0.0) << to_string(vbar);

    Expr w = sign > 0 ? P("v_x_bar") : P("-v_x_bar");
    Substitution sw{{intern("v_x_bar"), w}};
    Domain d1 = s1.domain();
    d1.add_guard(P("cos(theta)"), Guard::NonZero);
    EXPECT_TRUE(same(s1.rhs[0], substitute(P("(v_x_bar - sin(theta)*v_z + epsilon*omega)/cos(theta)"), sw), d1));
    EXPECT_TRUE(same(s1.rhs[1], P("v_z"), d1));
    EXPECT_TRUE(same(s1.rhs[2], P("omega"), d1));
    EXPECT_TRUE(same(Expr(static_cast<std::int64_t>(sign)) * s1.rhs[3],
                     substitute(P("omega/cos(theta)*(v_z - sin(theta)*(v_x_bar + epsilon*omega)) - sin(theta)"), sw), d1));
    for (const auto& f : s1.rhs) {
        EXPECT_FALSE(f.depends_on(intern("u1")));
        EXPECT_FALSE(f.depends_on(intern("u2")));
    }
    ASSERT_EQ(dec.step.residual.size(), 2u);
    EXPECT_EQ(dec.step.residual[0].first, "v_z");
}

TEST(Straighten, VtolSubsystemDirection) {
    SystemModel m = load_system("vtol");
    Context ctx;
    SystemModel s1 = decompose(m, {}, ctx).sigma1;
    auto [r, step] = straighten_line(s1, P("epsilon*sin(theta)"), Expr(1), {}, ctx);
    EXPECT_EQ(r.inputs, (std::vector<std::string>{"v_z_bar", "omega"}));
    Expr phi = step.forward[0].second;
    Domain d = s1.domain();
    Expr ref = P("v_z - epsilon*sin(theta)*omega");
    // any first integral affine in v_z with unit slope differs from ref by a function of the states
    EXPECT_TRUE(same(diff(phi, intern("omega")), -P("epsilon*sin(theta)") * diff(phi, intern("v_z")), d));
    EXPECT_TRUE(verify_step(step, s1, r, ctx));
    if (same(phi, ref, d)) {
        EXPECT_TRUE(same(r.rhs[1], P("v_z_bar + epsilon*sin(theta)*omega"), r.domain()));
    }
}

TEST(Straighten, AcademicInputRatio) {
    SystemModel m = load_system("academic1");
    Context ctx;
    auto [r, step] = straighten_line(m, P("u1"), P("u2"), {}, ctx);
    EXPECT_EQ(r.inputs, (std::vector<std::string>{"u1_bar", "u2"}));
    EXPECT_TRUE(same(step.forward[0].second, P("u1/u2"), m.domain())) << to_string(step.forward[0].second);
    EXPECT_TRUE(same(r.rhs[0], P("u1_bar*u2"), r.domain()));
    EXPECT_TRUE(same(r.rhs[2], P("sin(u1_bar)"), r.domain()));
    EXPECT_TRUE(verify_step(step, m, r, ctx));
}

TEST(Straighten, TrivialDirections) {
    SystemModel m = load_system("academic1");
    Context ctx;
    auto [same_m, id] = straighten_line(m, Expr(0), P("u2"), {}, ctx);
    EXPECT_TRUE(id.is_identity());
    EXPECT_EQ(same_m.inputs, m.inputs);
    auto [swapped, sw] = straighten_line(m, Expr(1), Expr(0), {}, ctx);
    EXPECT_EQ(swapped.inputs, (std::vector<std::string>{"u2", "u1"}));
}

TEST(SingleInput, RedundantDirectionIsDropped) {
    SystemModel m;
    m.states = {"x1", "x2", "x3"};
    m.inputs = {"a", "b"};
    m.rhs = {P("x2"), P("a + x3*b"), P("x1*(a + x3*b)")};
    Context ctx;
    auto [r, step] = single_input_reduce(m, ctx);
    ASSERT_EQ(r.m(), 1);
    EXPECT_EQ(r.n(), 3);
    EXPECT_EQ(step.kind, StepKind::InputTransform);
    Domain d = r.domain();
    EXPECT_TRUE(same(r.rhs[2], P("x1") * r.rhs[1], d));
    EXPECT_FALSE(same(diff(r.rhs[1], intern(r.inputs[0])), Expr(0), d));
}

TEST(InputTransformProperty, RandomLinearMapsRoundTrip) {
    SystemModel m = load_system("vtol");
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> c(-3, 3);
    Context ctx;
    for (int k = 0; k < 20; ++k) {
        int a = c(rng), b = c(rng), cc = c(rng), dd = c(rng);
        if (a * dd - b * cc == 0) continue;
        // u = M w, w = M^-1 u
        Expr w1 = Expr::var("w1"), w2 = Expr::var("w2");
        Substitution fwd{{intern("u1"), Expr(a) * w1 + Expr(b) * w2}, {intern("u2"), Expr(cc) * w1 + Expr(dd) * w2}};
        SystemModel r = apply_input_transform(m, {"w1", "w2"}, fwd, "linear");
        Rational det(a * dd - b * cc);
        Expr u1 = Expr::var("u1"), u2 = Expr::var("u2");
        Substitution back{{intern("w1"), (Expr(dd) * u1 - Expr(b) * u2) / Expr(det)},
                          {intern("w2"), (Expr(-cc) * u1 + Expr(a) * u2) / Expr(det)}};
        for (int i = 0; i < m.n(); ++i)
            EXPECT_TRUE(same(substitute(r.rhs[static_cast<std::size_t>(i)], back), m.rhs[static_cast<std::size_t>(i)], m.domain()));
    }
}
