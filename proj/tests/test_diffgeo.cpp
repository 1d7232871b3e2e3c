#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "generators.hpp"
#include "flatd2/coordxform.hpp"
#include "flatd2/diffgeo.hpp"
#include "flatd2/linalg.hpp"
#include "flatd2/parse.hpp"
#include "flatd2/reptest.hpp"

using namespace flatd2;
using namespace flatd2::testgen;

namespace {

SystemModel vtol_sigma1() {
    Context ctx;
    return decompose(load_system("vtol"), {}, ctx).sigma1;
}

// PAI-prolonged VTOL subsystem along (epsilon*sin(theta), 1).
SystemModel prolonged_vtol_sigma1() {
    Context ctx;
    const auto pai = to_pai_form(vtol_sigma1(), {P("epsilon*sin(theta)"), Expr(1)}, {}, ctx);
    return prolong(pai.first, pai.first.inputs[0], 1).first;
}

// Academic example I in PAI form with u1_bar prolonged once.
SystemModel prolonged_academic1() {
    Context ctx;
    const SystemModel m = load_system("academic1");
    const auto sols = pai_condition_solutions(m, ctx);
    for (const auto& s : sols) {
        if (!pai_filter(m, s, ctx)) continue;
        const auto pai = to_pai_form(m, s, {}, ctx);
        return prolong(pai.first, pai.first.inputs[0], 1).first;
    }
    throw std::runtime_error("no PAI solution passes the filter");
}

}  // namespace

TEST(LieBracket, CoordinateFieldsCommute) {
    const auto c = syms({"x", "y"});
    const VectorField b = lie_bracket(VectorField::partial(c, c[0]), VectorField::partial(c, c[1]));
    for (const auto& e : b.comps) EXPECT_TRUE(simplify(e).is_zero());
}

TEST(LieBracket, KnownBracket) {
    const auto c = syms({"x", "y"});
    // [d/dx, x d/dy] = d/dy
    const VectorField b = lie_bracket(VectorField::partial(c, c[0]), field(c, {"0", "x"}));
    EXPECT_TRUE(simplify(b.comps[0]).is_zero());
    EXPECT_TRUE(simplify(b.comps[1]).is_one());
}

TEST(LieBracket, Antisymmetry) {
    std::mt19937_64 rng(11);
    const auto c = syms({"x1", "x2", "x3"});
    const Domain dom = domain_of(c);
    Context ctx;
    for (int k = 0; k < 20; ++k) {
        const VectorField v = random_field(rng, c), w = random_field(rng, c);
        const VectorField a = lie_bracket(v, w), b = lie_bracket(w, v);
        for (std::size_t i = 0; i < c.size(); ++i) EXPECT_TRUE(is_zero(a.comps[i] + b.comps[i], dom, ctx));
    }
}

TEST(LieBracket, NumericAgreesWithSymbolic) {
    std::mt19937_64 rng(12);
    const auto c = syms({"x1", "x2", "x3"});
    Context ctx;
    for (int k = 0; k < 10; ++k) {
        const VectorField v = random_field(rng, c), w = random_field(rng, c);
        const VectorField b = lie_bracket(v, w);
        for (const Point& p : sample_points(domain_of(c), c, ctx, 3)) {
            const Eigen::VectorXd num = numeric_bracket(v, w, p), sym = eval_field(b, p);
            EXPECT_LE((num - sym).norm(), 1e-9 * (1.0 + sym.norm()));
        }
    }
}

TEST(LieBracket, VtolInputFieldsAreInvolutive) {
    const SystemModel m = load_system("vtol");
    const auto b = input_fields(m);
    Context ctx;
    const Distribution d(m.state_symbols(), b);
    EXPECT_TRUE(member_mod(lie_bracket(b[0], b[1]), d, m.domain(), ctx));
    EXPECT_TRUE(is_involutive(d, m.domain(), ctx));
}

TEST(LieDerivative, Basics) {
    const auto c = syms({"x", "y"});
    EXPECT_EQ(lie_derivative(VectorField::partial(c, c[0]), P("x*y"), 0), P("x*y"));
    EXPECT_TRUE(simplify(lie_derivative(VectorField::partial(c, c[0]), P("x"))).is_one());
    const SystemModel m = load_system("academic1");
    const VectorField f = drift_field(m);
    const auto xs = m.state_symbols();
    for (std::size_t i = 0; i < xs.size(); ++i)
        EXPECT_EQ(simplify(lie_derivative(f, Expr::var(xs[i]))), simplify(m.rhs[i]));
}

TEST(GenericRank, Examples) {
    const auto c = syms({"x", "y"});
    Context ctx;
    const Distribution col(c, {VectorField::partial(c, c[0]), field(c, {"2", "0"})});
    EXPECT_EQ(generic_rank(col, domain_of(c), ctx), 1);

    const SystemModel v = load_system("vtol");
    EXPECT_EQ(generic_rank(Distribution(v.state_symbols(), input_fields(v)), v.domain(), ctx), 2);
}

TEST(GenericRank, ProlongedVtolSubsystemClosureIsThree) {
    Context ctx;
    const SystemModel p = prolonged_vtol_sigma1();
    ASSERT_TRUE(is_syntactically_affine(p));
    const Distribution d1(p.state_symbols(), input_fields(p));
    const Distribution closure = involutive_closure(d1, p.domain(), ctx);
    EXPECT_FALSE(is_involutive(d1, p.domain(), ctx));
    EXPECT_EQ(generic_rank(closure, p.domain(), ctx), 3);
    const VectorField a{p.state_symbols(), drift_at_zero_input(p)};
    EXPECT_TRUE(member_mod(lie_bracket(a, input_fields(p)[1]), closure, p.domain(), ctx));
}

TEST(MemberMod, Examples) {
    const auto c = syms({"v_x", "omega"});
    Context ctx;
    const Distribution dx(c, {VectorField::partial(c, c[0])});
    EXPECT_FALSE(member_mod(VectorField::partial(c, c[1]), dx, domain_of(c), ctx));
    EXPECT_TRUE(member_mod(field(c, {"omega^2", "0"}), dx, domain_of(c), ctx));

    const SystemModel v = load_system("vtol");
    const auto b = input_fields(v);
    EXPECT_TRUE(member_mod(b[0], Distribution(v.state_symbols(), b), v.domain(), ctx));
}

TEST(Involutive, Examples) {
    const auto c = syms({"x", "y", "z"});
    Context ctx;
    EXPECT_TRUE(is_involutive(Distribution(c, {VectorField::partial(c, c[0]), VectorField::partial(c, c[1])}),
                              domain_of(c), ctx));
    // d/dx and d/dy + x d/dz bracket to d/dz
    EXPECT_FALSE(is_involutive(Distribution(c, {VectorField::partial(c, c[0]), field(c, {"0", "1", "x"})}),
                               domain_of(c), ctx));
}

TEST(Involutive, ProlongedAcademicOne) {
    Context ctx;
    const SystemModel p = prolonged_academic1();
    const Distribution d1(p.state_symbols(), input_fields(p));
    EXPECT_FALSE(is_involutive(d1, p.domain(), ctx));
    const auto flag = derived_flag(d1, 4, p.domain(), ctx);
    ASSERT_GE(flag.size(), 2u);
    EXPECT_EQ(generic_rank(flag[1], p.domain(), ctx), 3);
}

TEST(DerivedFlag, InvolutiveStopsImmediately) {
    const auto c = syms({"x", "y", "z"});
    Context ctx;
    const Distribution d(c, {VectorField::partial(c, c[0]), field(c, {"0", "1", "0"})});
    EXPECT_EQ(derived_flag(d, 5, domain_of(c), ctx).size(), 1u);
    EXPECT_EQ(generic_rank(involutive_closure(d, domain_of(c), ctx), domain_of(c), ctx), 2);
}

TEST(Cauchy, InvolutiveDistributionIsItsOwnCharacteristic) {
    const auto c = syms({"x", "y", "z"});
    Context ctx;
    const Distribution d(c, {VectorField::partial(c, c[0]), field(c, {"0", "1", "x"})});
    const Distribution inv(c, {VectorField::partial(c, c[0]), VectorField::partial(c, c[1])});
    EXPECT_EQ(cauchy_characteristic(inv, domain_of(c), ctx).dim, 2);
    // the contact distribution on R^3 has none
    EXPECT_EQ(cauchy_characteristic(d, domain_of(c), ctx).dim, 0);
}

TEST(Cauchy, InputDirectionsOfAffineSystem) {
    Context ctx;
    for (const char* name : {"vtol", "chains"}) {
        const SystemModel m = load_system(name);
        const Distribution d1 = input_distribution_d1(m);
        for (Symbol u : m.input_symbols())
            EXPECT_TRUE(cauchy_contains(d1, VectorField::partial(d1.coords, u), m.domain(), ctx)) << name;
    }
    // sin(u1/u2) is not affine in either input
    const SystemModel a = load_system("academic1");
    const Distribution d1 = input_distribution_d1(a);
    EXPECT_FALSE(cauchy_contains(d1, VectorField::partial(d1.coords, a.input_symbols()[0]), a.domain(), ctx));
}

TEST(Cauchy, DimensionFourCaseHasOneCharacteristic) {
    // span{b1, b2, [b1, b2]} with b1 = d/dx1, b2 = d/dx2 + x1 d/dx3 + x3 d/dx4
    const auto c = syms({"x1", "x2", "x3", "x4", "x5"});
    Context ctx;
    const VectorField b1 = VectorField::partial(c, c[0]), b2 = field(c, {"0", "1", "x1", "x3", "0"});
    const Distribution d(c, {b1, b2, lie_bracket(b1, b2)});
    const Distribution closure = involutive_closure(Distribution(c, {b1, b2}), domain_of(c), ctx);
    EXPECT_EQ(generic_rank(closure, domain_of(c), ctx), 4);
    EXPECT_EQ(cauchy_characteristic(d, domain_of(c), ctx).dim, 1);
    EXPECT_TRUE(cauchy_contains(d, b1, domain_of(c), ctx));
}

// Properties

TEST(Property, JacobiIdentity) {
    std::mt19937_64 rng(2024);
    const auto c = syms({"x1", "x2", "x3"});
    Context ctx;
    for (int k = 0; k < 50; ++k) {
        const VectorField u = random_field(rng, c), v = random_field(rng, c), w = random_field(rng, c);
        const VectorField t1 = lie_bracket(u, lie_bracket(v, w));
        const VectorField t2 = lie_bracket(v, lie_bracket(w, u));
        const VectorField t3 = lie_bracket(w, lie_bracket(u, v));
        for (const Point& p : sample_points(domain_of(c), c, ctx, 5)) {
            const Eigen::VectorXd a = eval_field(t1, p), b = eval_field(t2, p), d = eval_field(t3, p);
            const double scale = a.norm() + b.norm() + d.norm();
            EXPECT_LE((a + b + d).norm(), 1e-9 * std::max(scale, 1.0)) << "triple " << k;
        }
    }
}

TEST(Property, DerivedFlagIsMonotoneAndStabilizes) {
    std::mt19937_64 rng(77);
    const auto c = syms({"x1", "x2", "x3", "x4"});
    const Domain dom = domain_of(c);
    Context ctx;
    for (int k = 0; k < 50; ++k) {
        Distribution d(c, {random_field(rng, c), random_field(rng, c)});
        const auto flag = derived_flag(d, static_cast<int>(c.size()), dom, ctx);
        ASSERT_FALSE(flag.empty());
        EXPECT_LE(flag.size(), c.size());
        int prev = -1;
        for (const auto& level : flag) {
            const int r = generic_rank(level, dom, ctx);
            EXPECT_GE(r, prev) << "distribution " << k;
            prev = r;
        }
        // one more bracket step adds nothing once the flag has stopped
        const Distribution closure = involutive_closure(flag.back(), dom, ctx);
        if (flag.size() < c.size()) EXPECT_EQ(generic_rank(closure, dom, ctx), prev) << "distribution " << k;
    }
}

TEST(Property, CauchyCharacteristicIsInvolutiveSubdistribution) {
    std::mt19937_64 rng(31);
    const auto c = syms({"x1", "x2", "x3", "x4"});
    const Domain dom = domain_of(c);
    int checked = 0, lifted = 0;
    for (int k = 0; k < 20; ++k) {
        Context ctx(static_cast<std::uint64_t>(500 + k));
        const VectorField f1 = random_frame_field(rng, c, 0), f2 = random_frame_field(rng, c, 1);
        Distribution d(c, {f1, f2});
        // alternate between the input pair and its first derived system
        if (k % 2 == 1) d.add(lie_bracket(f1, f2));
        CauchyResult cr;
        try {
            cr = cauchy_characteristic(d, dom, ctx, true);
        } catch (const LiftError&) {
            // no closed form in the library; the numeric dimension is still checked
            cr = cauchy_characteristic(d, dom, ctx);
            EXPECT_LE(cr.dim, generic_rank(d, dom, ctx));
            ++checked;
            continue;
        }
        EXPECT_LE(cr.dim, generic_rank(d, dom, ctx));
        if (cr.dim == 0) {
            ++checked;
            continue;
        }
        ASSERT_TRUE(cr.lifted.has_value()) << "case " << k;
        EXPECT_EQ(generic_rank(*cr.lifted, dom, ctx), cr.dim);
        for (const auto& v : cr.lifted->fields) EXPECT_TRUE(member_mod(v, d, dom, ctx)) << "case " << k;
        EXPECT_TRUE(is_involutive(*cr.lifted, dom, ctx)) << "case " << k;
        ++checked;
        ++lifted;
    }
    EXPECT_EQ(checked, 20);
    EXPECT_GE(lifted, 1);
}

TEST(Property, CauchyCharacteristicOfMixedFramesLifts) {
    // random constant frame changes of span{b1, b2, [b1, b2]}; the characteristic is one dimensional
    std::mt19937_64 rng(37);
    std::uniform_int_distribution<int> entry(-3, 3);
    const auto c = syms({"x1", "x2", "x3", "x4", "x5"});
    const Domain dom = domain_of(c);
    const VectorField b1 = VectorField::partial(c, c[0]), b2 = field(c, {"0", "1", "x1", "x3", "0"});
    for (int k = 0; k < 10; ++k) {
        int a11, a12, a21, a22;
        do {
            a11 = entry(rng), a12 = entry(rng), a21 = entry(rng), a22 = entry(rng);
        } while (a11 * a22 - a12 * a21 == 0);
        const VectorField g1 = Expr(a11) * b1 + Expr(a12) * b2, g2 = Expr(a21) * b1 + Expr(a22) * b2;
        const Distribution d(c, {g1, g2, lie_bracket(g1, g2)});
        Context ctx(static_cast<std::uint64_t>(700 + k));
        const CauchyResult cr = cauchy_characteristic(d, dom, ctx, true);
        ASSERT_EQ(cr.dim, 1) << "case " << k;
        ASSERT_TRUE(cr.lifted.has_value());
        for (const auto& v : cr.lifted->fields) {
            EXPECT_TRUE(member_mod(v, d, dom, ctx)) << "case " << k;
            for (const auto& f : d.fields) EXPECT_TRUE(member_mod(lie_bracket(v, f), d, dom, ctx)) << "case " << k;
        }
    }
}

TEST(Property, InputDistributionIsFeedbackInvariant) {
    // u = psi(x, w): u2 = c*w2 + g(x), u1 = w1 + h(x, w2). D1 computed in
    // (x, w) and pushed forward through the coordinate change must span the
    // same subspace as D1 computed in (x, u).
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> nonzero(1, 3);
    const SystemModel base = load_system("vtol");
    const std::vector<std::string> xn = base.states;
    std::vector<std::string> with_w = xn;
    with_w.push_back("w2");
    for (int k = 0; k < 20; ++k) {
        const std::string u2 = std::to_string(nonzero(rng)) + "*w2 + " + random_poly(rng, xn);
        const std::string u1 = "w1 + " + random_poly(rng, with_w) + " + w2^3/" + std::to_string(nonzero(rng));
        SystemModel t = base;
        t.inputs = {"w1", "w2"};
        Substitution sub{{intern("u1"), P(u1)}, {intern("u2"), P(u2)}};
        for (auto& e : t.rhs) e = simplify(substitute(e, sub));

        const Distribution d_old = input_distribution_d1(base);
        const Distribution d_new = input_distribution_d1(t);
        const std::vector<Expr> psi{P(u1), P(u2)};
        Domain dom = t.domain();
        Context ctx(static_cast<std::uint64_t>(900 + k));
        int agree = 0;
        const auto pts = sample_points(dom, t.coordinates(), ctx, 10);
        for (const Point& p : pts) {
            // image point in (x, u)
            Point q = p;
            q.set(intern("u1"), eval(psi[0], p));
            q.set(intern("u2"), eval(psi[1], p));
            const int n = base.n();
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n + 2, n + 2);
            J.topLeftCorner(n, n).setIdentity();
            const Eigen::MatrixXd g = eval_gradients(psi, t.coordinates(), p);
            J.bottomRows(2) = g;
            const Eigen::MatrixXd pushed = J * eval_distribution(d_new, p);
            const Eigen::MatrixXd old = eval_distribution(d_old, q);
            Eigen::MatrixXd both(n + 2, pushed.cols() + old.cols());
            both << pushed, old;
            const int r_old = numeric_rank(old, 1e-8), r_new = numeric_rank(pushed, 1e-8);
            agree += (r_old == r_new && numeric_rank(both, 1e-8) == r_old) ? 1 : 0;
        }
        EXPECT_EQ(agree, static_cast<int>(pts.size())) << "transformation " << k << ": u1 = " << u1 << ", u2 = " << u2;
        EXPECT_EQ(generic_rank(d_new, dom, ctx), generic_rank(d_old, base.domain(), ctx));
    }
}
