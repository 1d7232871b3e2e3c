#include <gtest/gtest.h>

#include <functional>
#include <random>

#include <Eigen/Dense>

#include "fixtures.hpp"
#include "generators.hpp"
#include "flatd2/diffgeo.hpp"
#include "flatd2/flatalgo.hpp"
#include "flatd2/parse.hpp"
#include "flatd2/report.hpp"

using namespace flatd2;
using namespace flatd2::testgen;

namespace {

bool equivalent(const Expr& a, const Expr& b, const SystemModel& m) {
    Domain d = m.domain();
    for (const auto& e : {a, b}) {
        for (Symbol s : e.free_symbols()) d.add_var(s);
        d.add_implicit_guards(e);
    }
    Context ctx(7);
    return is_zero(simplify(a - b), d, ctx);
}

bool same_direction(const AlphaSolution& s, const Expr& b1, const Expr& b2, const SystemModel& m) {
    return equivalent(s.a1 * b2, s.a2 * b1, m);
}

const TraceNode* find_node(const TraceNode& t, const std::function<bool(const TraceNode&)>& pred) {
    if (pred(t)) return &t;
    for (const auto& c : t.children)
        if (const TraceNode* r = find_node(*c, pred)) return r;
    return nullptr;
}

void for_each_node(const TraceNode& t, const std::function<void(const TraceNode&, const TraceNode*)>& f,
                   const TraceNode* parent = nullptr) {
    f(t, parent);
    for (const auto& c : t.children) for_each_node(*c, f, &t);
}

RunResult run_fixture(const char* name, std::uint64_t seed = 20210501) {
    Context ctx(seed);
    return run(load_system(name), ctx);
}

// b1 = d/dx1 and b2 = d/dx2 + x1 d/dx3 + x3 d/dx4 in the inputs
// u1 = w2, u2 = w1 + x1*w2. span{b1, b2} closes up to dimension 4 and the
// characteristic direction of span{b1, b2, [b1, b2]} is b1 = b_w2 - x1*b_w1.
SystemModel dim4_model() {
    return parse_system(R"(system dim4
state x1 x2 x3 x4 x5
input w1 w2
dot x1 = w2
dot x2 = w1 + x1*w2
dot x3 = x1*(w1 + x1*w2)
dot x4 = x3*(w1 + x1*w2)
dot x5 = x4 + x2
)");
}

}  // namespace

TEST(SflTest, IntegratorChains) {
    Context ctx;
    const SflChain c = sfl_chain(load_system("chains"), ctx);
    EXPECT_TRUE(c.sfl);
    EXPECT_EQ(c.ranks.back(), 7);
}

TEST(SflTest, VtolFailsAtAnInvolutivityCheck) {
    Context ctx;
    const SflChain c = sfl_chain(load_system("vtol"), ctx);
    EXPECT_FALSE(c.sfl);
    // the drift-free part reaches full rank, so the failure is involutivity
    EXPECT_EQ(c.ranks.back(), 8);
    EXPECT_NE(std::find(c.involutive.begin(), c.involutive.end(), false), c.involutive.end());
}

TEST(SflTest, AcademicOneAfterTwoProlongations) {
    const RunResult r = run_fixture("academic1");
    const TraceNode* t = find_node(*r.trace, [](const TraceNode& n) { return n.tag == CaseTag::TerminalSfl; });
    ASSERT_NE(t, nullptr);
    Context ctx;
    EXPECT_TRUE(sfl_test(t->model, ctx));
    EXPECT_EQ(t->model.n(), 5);
}

TEST(SelectCase, ExampleSystems) {
    Context ctx;
    EXPECT_EQ(select_case(load_system("vtol"), ctx), CaseTag::Case1);
    EXPECT_EQ(select_case(load_system("academic1"), ctx), CaseTag::Case3);
    const RunResult r = run_fixture("vtol");
    ASSERT_EQ(r.trace->children.size(), 1u);
    EXPECT_EQ(select_case(r.trace->children[0]->model, ctx), CaseTag::Case3);
}

TEST(SelectCase, AcademicOneProlongedIsCaseTwoDimThree) {
    const RunResult r = run_fixture("academic1");
    ASSERT_FALSE(r.trace->children.empty());
    Context ctx;
    int dim = 0;
    EXPECT_EQ(select_case(r.trace->children[0]->model, ctx, &dim), CaseTag::Case2Dim3);
    EXPECT_EQ(dim, 3);
}

TEST(BuildBc, ExampleSystemsGiveSecondInput) {
    for (const char* name : {"vtol", "academic1"}) {
        const RunResult r = run_fixture(name);
        const TraceNode* t = find_node(*r.trace, [](const TraceNode& n) {
            return n.tag == CaseTag::Case2Dim3 && !n.children.empty() && n.children[0]->tag == CaseTag::TerminalSfl;
        });
        ASSERT_NE(t, nullptr) << name;
        Context ctx;
        SystemModel a = t->model;
        if (!is_syntactically_affine(a)) a = to_ai_form(a, ctx).first;
        const AlphaSolution bc = build_bc(a, CaseTag::Case2Dim3, ctx);
        EXPECT_TRUE(same_direction(bc, Expr(0), Expr(1), a)) << name << ": " << to_string(bc.a1) << ", " << to_string(bc.a2);
    }
}

TEST(BuildBc, DimFourFindsTheCharacteristicDirection) {
    const SystemModel m = dim4_model();
    Context ctx;
    int dim = 0;
    ASSERT_EQ(select_case(m, ctx, &dim), CaseTag::Case2Dim4);
    const AlphaSolution bc = build_bc(m, CaseTag::Case2Dim4, ctx);
    EXPECT_TRUE(same_direction(bc, P("-x1"), Expr(1), m)) << to_string(bc.a1) << ", " << to_string(bc.a2);

    const auto b = input_fields(m);
    const VectorField b12 = lie_bracket(b[0], b[1]);
    const Distribution d11(m.state_symbols(), {b[0], b[1], b12});
    EXPECT_TRUE(cauchy_contains(d11, bc.a1 * b[0] + bc.a2 * b[1], m.domain(), ctx));
}

TEST(Case2Step, FirstDirectionSwapsWithSign) {
    const SystemModel m = load_system("chains");
    Context ctx;
    std::vector<SystemModel> parents;
    auto [p, steps] = case2_step(m, {Expr(1), Expr(0)}, ctx, &parents);
    ASSERT_EQ(steps.size(), 2u);
    ASSERT_EQ(parents.size(), 2u);
    EXPECT_EQ(steps[0].kind, StepKind::InputTransform);
    EXPECT_EQ(steps[1].kind, StepKind::Prolong);
    const auto& fw = steps[0].forward;
    ASSERT_EQ(fw.size(), 2u);
    EXPECT_TRUE(equivalent(fw[0].second, P("-b"), m));
    EXPECT_TRUE(equivalent(fw[1].second, P("a"), m));
    EXPECT_EQ(p.n(), m.n() + 1);
    EXPECT_TRUE(verify_step(steps[0], parents[0], parents[1], ctx));
}

TEST(Case2Step, SecondDirectionOnlyProlongs) {
    const SystemModel m = load_system("chains");
    Context ctx;
    auto [p, steps] = case2_step(m, {Expr(0), Expr(1)}, ctx);
    ASSERT_EQ(steps.size(), 1u);
    EXPECT_EQ(steps[0].kind, StepKind::Prolong);
    EXPECT_EQ(steps[0].prolonged_input, "a");
}

TEST(Case3Step, BranchCounts) {
    Context ctx;
    auto a1 = case3_step(load_system("academic1"), {}, ctx);
    int live = 0;
    for (const auto& b : a1) live += b.model ? 1 : 0;
    EXPECT_EQ(a1.size(), 2u);
    EXPECT_EQ(live, 1);

    const RunResult r = run_fixture("vtol");
    auto v = case3_step(r.trace->children[0]->model, {}, ctx);
    live = 0;
    for (const auto& b : v) live += b.model ? 1 : 0;
    EXPECT_EQ(live, 2);
}

TEST(VerifyFlatOutput, VtolKnownOutput) {
    Context ctx;
    const SystemModel m = load_system("vtol");
    const auto c = verify_flat_output(m, {P("x - epsilon*sin(theta)"), P("z + epsilon*cos(theta)")}, ctx);
    EXPECT_TRUE(c.verified);
    EXPECT_EQ(c.d, 2);
    EXPECT_EQ(c.R, (std::vector<int>{4, 4}));
}

TEST(VerifyFlatOutput, VtolPositionIsNotFlat) {
    Context ctx;
    const SystemModel m = load_system("vtol");
    const auto c = verify_flat_output(m, {P("x"), P("z")}, ctx);
    EXPECT_FALSE(c.verified);
    EXPECT_TRUE(c.R.empty());
}

TEST(VerifyFlatOutput, ChainHeadsHaveZeroDifference) {
    Context ctx;
    const auto c = verify_flat_output(load_system("chains"), {P("p1"), P("q1")}, ctx);
    EXPECT_TRUE(c.verified);
    EXPECT_EQ(c.d, 0);
    EXPECT_EQ(c.R, (std::vector<int>{3, 2}));
}

TEST(VerifyFlatOutput, AcademicOnePulledBackOutput) {
    Context ctx;
    const auto c = verify_flat_output(load_system("academic1"), {P("x3"), P("x1 - x2*u1/u2")}, ctx);
    EXPECT_TRUE(c.verified);
    EXPECT_EQ(c.d, 2);
}

TEST(ExtractOutput, TerminalModelsOfExamples) {
    struct Want {
        const char* name;
        const char* y1;
        const char* y2;
    };
    for (const Want& w : {Want{"vtol", "x - epsilon*sin(theta)", "z + epsilon*cos(theta)"},
                          Want{"academic1", "x3", "x1 - x2*u1_bar"}}) {
        const RunResult r = run_fixture(w.name);
        const TraceNode* t = find_node(*r.trace, [](const TraceNode& n) { return n.tag == CaseTag::TerminalSfl; });
        ASSERT_NE(t, nullptr);
        Context ctx;
        const auto y = extract_linearizing_output(t->model, {}, ctx);
        ASSERT_EQ(y.size(), 2u);
        EXPECT_TRUE(equivalent(y[0], P(w.y1), t->model)) << to_string(y[0]);
        EXPECT_TRUE(equivalent(y[1], P(w.y2), t->model)) << to_string(y[1]);
    }
}

TEST(ExtractOutput, ChainHeads) {
    Context ctx;
    const auto y = extract_linearizing_output(load_system("chains"), {}, ctx);
    ASSERT_EQ(y.size(), 2u);
    EXPECT_EQ(to_string(y[0]), "p1");
    EXPECT_EQ(to_string(y[1]), "q1");
}

TEST(Run, VtolEndToEnd) {
    const RunResult r = run_fixture("vtol");
    ASSERT_EQ(r.verdict, Verdict::Flat) << r.message;
    EXPECT_EQ(r.case_path, (std::vector<int>{1, 3, 2}));
    EXPECT_EQ(r.output.d, 2);
    const SystemModel m = load_system("vtol");
    EXPECT_TRUE(equivalent(r.output.y[0], P("x - epsilon*sin(theta)"), m));
    EXPECT_TRUE(equivalent(r.output.y[1], P("z + epsilon*cos(theta)"), m));
}

TEST(Run, AcademicOne) {
    const RunResult r = run_fixture("academic1");
    ASSERT_EQ(r.verdict, Verdict::Flat) << r.message;
    EXPECT_EQ(r.case_path, (std::vector<int>{3, 2}));
    EXPECT_EQ(r.output.d, 2);
    const SystemModel m = load_system("academic1");
    EXPECT_TRUE(equivalent(r.output.y[0], P("x3"), m));
    EXPECT_TRUE(equivalent(r.output.y[1], P("x1 - x2*u1/u2"), m));
}

TEST(Run, AcademicTwo) {
    const RunResult r = run_fixture("academic2");
    ASSERT_EQ(r.verdict, Verdict::Flat) << r.message;
    EXPECT_EQ(r.case_path, (std::vector<int>{3, 1, 3}));
    EXPECT_EQ(r.output.d, 2);
    const SystemModel m = load_system("academic2");
    EXPECT_TRUE(equivalent(r.output.y[0], P("x1 + x2"), m));
    EXPECT_TRUE(equivalent(r.output.y[1], P("x3 + x4"), m));
}

TEST(Run, LinearSystemIsTerminalAtRoot) {
    const RunResult r = run_fixture("chains");
    ASSERT_EQ(r.verdict, Verdict::Flat);
    EXPECT_TRUE(r.case_path.empty());
    EXPECT_EQ(r.output.d, 0);
    EXPECT_EQ(r.trace->tag, CaseTag::TerminalSfl);
}

TEST(Run, NoCaseAppliesIsDefiniteFailure) {
    // span{b1, b2} = span{d/dx1 + x2 d/dx3, d/dx2 + x1 d/dx4 ... } closes up to
    // dimension 5, so neither case-2 subcase applies
    const SystemModel m = parse_system(R"(system five
state x1 x2 x3 x4 x5
input u1 u2
dot x1 = u1
dot x2 = u2
dot x3 = x2*u1
dot x4 = x3*u2
dot x5 = x4*u1
)");
    Context ctx;
    const RunResult r = run(m, ctx);
    EXPECT_EQ(r.verdict, Verdict::NotLinearizable) << r.message;
    EXPECT_EQ(r.trace->tag, CaseTag::TerminalFail);
}

TEST(Run, ZeroBudgetStopsBeforeCaseThree) {
    Context ctx;
    RunOptions o;
    o.budget.max_prolong = 0;
    const RunResult r = run(load_system("academic1"), ctx, o);
    EXPECT_EQ(r.verdict, Verdict::NotLinearizable);
}

TEST(TraceProperties, BudgetsAndTerminalNodes) {
    for (const char* name : {"vtol", "academic1", "academic2", "chains"}) {
        const RunResult r = run_fixture(name);
        const int n = load_system(name).n();
        for_each_node(*r.trace, [&](const TraceNode& t, const TraceNode* parent) {
            EXPECT_LE(t.prolongations, 2) << name;
            EXPECT_LE(t.case1_count, n) << name;
            if (parent) EXPECT_GE(t.prolongations, parent->prolongations);
            if (t.tag == CaseTag::TerminalSfl) {
                Context ctx;
                EXPECT_TRUE(sfl_test(t.model, ctx)) << name;
            }
        });
    }
}

TEST(TraceProperties, EveryStepInverts) {
    for (const char* name : {"vtol", "academic1", "academic2"}) {
        const RunResult r = run_fixture(name);
        int checked = 0;
        for_each_node(*r.trace, [&](const TraceNode& t, const TraceNode*) {
            ASSERT_EQ(t.steps.size(), t.step_parents.size());
            for (std::size_t i = 0; i < t.steps.size(); ++i) {
                const SystemModel& after = i + 1 < t.steps.size() ? t.step_parents[i + 1] : t.model;
                Context ctx;
                EXPECT_TRUE(verify_step(t.steps[i], t.step_parents[i], after, ctx))
                    << name << " " << step_kind_name(t.steps[i].kind);
                ++checked;
            }
        });
        EXPECT_GT(checked, 0) << name;
    }
}

TEST(TraceProperties, DifferenceMatchesProlongationCount) {
    for (const char* name : {"vtol", "academic1", "academic2", "chains"}) {
        const RunResult r = run_fixture(name);
        ASSERT_EQ(r.verdict, Verdict::Flat) << name;
        const TraceNode* t = find_node(*r.trace, [](const TraceNode& n) { return n.tag == CaseTag::TerminalSfl; });
        ASSERT_NE(t, nullptr);
        EXPECT_EQ(r.output.d, t->prolongations) << name;
    }
}

TEST(Determinism, ReportsAreByteIdentical) {
    for (const char* name : {"vtol", "academic1", "academic2"}) {
        const SystemModel m = load_system(name);
        RunConfig cfg;
        cfg.system_file = name;
        std::string first;
        for (bool parallel : {false, false, true}) {
            Context ctx;
            RunOptions o;
            o.parallel = parallel;
            const std::string s = check_report_json(m, run(m, ctx, o), cfg);
            if (first.empty()) first = s;
            EXPECT_EQ(s, first) << name << (parallel ? " parallel" : "");
        }
    }
}

TEST(LinearSystems, RandomControllableAreStaticFeedbackLinearizable) {
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<int> dim(2, 6);
    for (int k = 0; k < 20; ++k) {
        const SystemModel m = random_linear(rng, dim(rng));
        Context ctx(static_cast<std::uint64_t>(100 + k));
        EXPECT_TRUE(sfl_test(m, ctx)) << serialize_system(m);
        const RunResult r = run(m, ctx);
        ASSERT_EQ(r.verdict, Verdict::Flat) << serialize_system(m) << r.message;
        EXPECT_TRUE(r.case_path.empty());
        EXPECT_TRUE(r.output.verified);
        EXPECT_EQ(r.output.d, 0) << serialize_system(m);
    }
}
