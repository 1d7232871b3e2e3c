#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "flatd2/coordxform.hpp"
#include "flatd2/error.hpp"
#include "flatd2/parse.hpp"
#include "flatd2/system.hpp"

using namespace flatd2;

namespace {

// Random expression over the given leaves; depth-limited.
std::string random_expr(std::mt19937_64& rng, const std::vector<std::string>& leaves, int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 8);
    std::uniform_int_distribution<std::size_t> leaf(0, leaves.size() - 1);
    std::uniform_int_distribution<int> num(1, 9);
    switch (pick(rng)) {
        case 0: return leaves[leaf(rng)];
        case 1: return std::to_string(num(rng));
        case 2: return "(" + random_expr(rng, leaves, depth - 1) + " + " + random_expr(rng, leaves, depth - 1) + ")";
        case 3: return "(" + random_expr(rng, leaves, depth - 1) + " - " + random_expr(rng, leaves, depth - 1) + ")";
        case 4: return random_expr(rng, leaves, depth - 1) + "*" + random_expr(rng, leaves, depth - 1);
        case 5: return "sin(" + random_expr(rng, leaves, depth - 1) + ")";
        case 6: return "cos(" + random_expr(rng, leaves, depth - 1) + ")";
        case 7: return "(" + random_expr(rng, leaves, depth - 1) + ")^" + std::to_string(num(rng) % 3 + 2);
        default: return leaves[leaf(rng)] + "/" + std::to_string(num(rng));
    }
}

std::string random_model_text(std::mt19937_64& rng, int index) {
    std::uniform_int_distribution<int> dim(2, 5);
    const int n = dim(rng);
    const bool with_param = index % 2 == 0;
    std::vector<std::string> states, leaves;
    for (int i = 1; i <= n; ++i) states.push_back("s" + std::to_string(i));
    leaves = states;
    std::string text = "system random" + std::to_string(index) + "\n";
    if (with_param) {
        text += "param k range 0.5 3\n";
        leaves.push_back("k");
    }
    text += "state";
    for (const auto& s : states) text += " " + s;
    text += "\ninput v w\n";
    std::vector<std::string> with_inputs = leaves;
    with_inputs.push_back("v");
    with_inputs.push_back("w");
    // the first two equations keep the input Jacobian generically regular
    text += "dot s1 = v + " + random_expr(rng, leaves, 2) + "\n";
    text += "dot s2 = w*" + std::string(with_param ? "k" : "2") + " + " + random_expr(rng, leaves, 2) + "\n";
    for (int i = 3; i <= n; ++i) text += "dot s" + std::to_string(i) + " = " + random_expr(rng, with_inputs, 3) + "\n";
    return text;
}

std::string mutate(std::mt19937_64& rng, std::string s) {
    static const std::string alphabet = "abcdefxyzu0123456789 +-*/^().,=!<>#\n\t_";
    std::uniform_int_distribution<int> count(1, 4), op(0, 4);
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    for (int k = count(rng); k > 0; --k) {
        if (s.empty()) s = "x";
        std::uniform_int_distribution<std::size_t> pos(0, s.size() - 1);
        const std::size_t p = pos(rng);
        switch (op(rng)) {
            case 0: s.erase(p, 1); break;
            case 1: s.insert(p, 1, alphabet[ch(rng)]); break;
            case 2: s[p] = alphabet[ch(rng)]; break;
            case 3: {
                const std::size_t q = pos(rng);
                s.insert(p, s.substr(std::min(p, q), std::max(p, q) - std::min(p, q)));
                break;
            }
            default: s.erase(p, std::min<std::size_t>(s.size() - p, 12)); break;
        }
    }
    return s;
}

}  // namespace

TEST(ParseSystem, Vtol) {
    const SystemModel m = load_system("vtol");
    EXPECT_EQ(m.name, "vtol");
    EXPECT_EQ(m.n(), 6);
    EXPECT_EQ(m.inputs, (std::vector<std::string>{"u1", "u2"}));
    ASSERT_EQ(m.params.size(), 1u);
    EXPECT_EQ(m.params[0].name, "epsilon");
    ASSERT_TRUE(m.params[0].range.has_value());
    EXPECT_DOUBLE_EQ(m.params[0].range->lo, 0.1);
    EXPECT_DOUBLE_EQ(m.params[0].range->hi, 1.0);
    EXPECT_EQ(m.rhs[5], parse_expr("u2"));
    EXPECT_EQ(m.rhs[3], parse_expr("epsilon*cos(theta)*u2 - sin(theta)*u1"));
}

TEST(ParseSystem, AcademicOne) {
    const SystemModel m = load_system("academic1");
    EXPECT_EQ(m.n(), 3);
    EXPECT_EQ(m.rhs[2], parse_expr("sin(u1/u2)"));
    ASSERT_EQ(m.constraints.size(), 1u);
    EXPECT_EQ(m.constraints[0], parse_expr("u2"));
}

TEST(ParseSystem, EquationsInAnyOrder) {
    const SystemModel m = parse_system("system s\nstate a b\ninput u v\ndot b = v\ndot a = u\n");
    EXPECT_EQ(m.rhs[0], parse_expr("u"));
    EXPECT_EQ(m.rhs[1], parse_expr("v"));
}

TEST(ParseSystem, InputRankDeficiencyIsRejected) {
    EXPECT_THROW(parse_system("system s\nstate x1 x2\ninput u1 u2\ndot x1 = u1\ndot x2 = u1\n"), ValidationError);
}

TEST(ParseSystem, ValidationErrors) {
    // undeclared variable
    EXPECT_THROW(parse_system("system s\nstate x1 x2\ninput u1 u2\ndot x1 = u1 + q\ndot x2 = u2\n"), ValidationError);
    // missing equation
    EXPECT_THROW(parse_system("system s\nstate x1 x2\ninput u1 u2\ndot x1 = u1\n"), ValidationError);
    // three inputs
    EXPECT_THROW(parse_system("system s\nstate x1 x2 x3\ninput a b c\ndot x1 = a\ndot x2 = b\ndot x3 = c\n"),
                 ValidationError);
    // name clash between a state and an input
    EXPECT_THROW(parse_system("system s\nstate x1 u1\ninput u1 u2\ndot x1 = u1\ndot u1 = u2\n"), ValidationError);
}

TEST(ParseSystem, ErrorsCarryLineAndColumn) {
    try {
        parse_system("system s\nstate x1 x2\ninput u1 u2\ndot x1 = u1 +* 2\ndot x2 = u2\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4);
        EXPECT_GT(e.column(), 1);
    }
    try {
        parse_system("system s\nstate x1 x2\ninput u1 u2\ndot x1 = u1\ndot x1 = u2\ndot x2 = u2\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 5);
    }
    try {
        parse_system("system s\nstate x1\nfrobnicate\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.column(), 1);
    }
}

TEST(SerializeSystem, FixturesRoundTrip) {
    for (const char* name : {"vtol", "academic1", "academic2", "chains"}) {
        const SystemModel m = load_system(name);
        const SystemModel back = parse_system(serialize_system(m));
        EXPECT_TRUE(structurally_equal(m, back)) << name << "\n" << serialize_system(m);
    }
}

TEST(SerializeSystem, ParameterRangeIsPreserved) {
    const SystemModel m = load_system("vtol");
    const SystemModel back = parse_system(serialize_system(m));
    ASSERT_TRUE(back.params[0].range.has_value());
    EXPECT_DOUBLE_EQ(back.params[0].range->lo, 0.1);
    EXPECT_DOUBLE_EQ(back.params[0].range->hi, 1.0);
}

TEST(SerializeSystem, DerivedModelRoundTrips) {
    const SystemModel m = load_system("academic1");
    const SystemModel p = prolong(m, "u1", 2).first;
    const std::string text = serialize_system(p);
    const SystemModel back = parse_system(text);
    EXPECT_TRUE(structurally_equal(p, back)) << text;
}

TEST(SerializeSystem, RandomModelsRoundTrip) {
    std::mt19937_64 rng(4242);
    int checked = 0;
    for (int i = 0; i < 50; ++i) {
        const std::string text = random_model_text(rng, i);
        SystemModel m;
        try {
            m = parse_system(text);
        } catch (const ValidationError&) {
            continue;  // a random rhs can cancel the input rank
        }
        ++checked;
        const std::string out = serialize_system(m);
        const SystemModel back = parse_system(out);
        EXPECT_TRUE(structurally_equal(m, back)) << text << "\n--\n" << out;
        EXPECT_EQ(serialize_system(back), out);
    }
    EXPECT_GE(checked, 45);
}

TEST(ParseSystem, MutatedFilesNeverCrash) {
    std::vector<std::string> seeds;
    for (const char* name : {"vtol", "academic1", "academic2", "chains"})
        seeds.push_back(read_text(std::string(FLATD2_SYSTEMS_DIR) + "/" + name + ".sys"));
    std::mt19937_64 rng(99);
    int parsed = 0, rejected = 0;
    for (int i = 0; i < 10000; ++i) {
        const std::string text = mutate(rng, seeds[static_cast<std::size_t>(i) % seeds.size()]);
        try {
            parse_system(text);
            ++parsed;
        } catch (const Error&) {
            ++rejected;
        } catch (const std::exception& e) {
            ADD_FAILURE() << "unexpected exception " << e.what() << " for\n" << text;
        }
    }
    EXPECT_EQ(parsed + rejected, 10000);
    EXPECT_GT(rejected, 0);
}

TEST(Hints, ParseAndSerialize) {
    const HintSet h = parse_hints(
        "# hints\nhint first_integral v_z - epsilon*sin(theta)*omega\nhint linearizing_output x - epsilon*sin(theta), "
        "z + epsilon*cos(theta)\n");
    ASSERT_EQ(h.first_integrals.size(), 1u);
    ASSERT_EQ(h.linearizing_outputs.size(), 1u);
    EXPECT_EQ(h.linearizing_outputs[0].second, parse_expr("z + epsilon*cos(theta)"));
    const HintSet back = parse_hints(serialize_hints(h));
    EXPECT_EQ(back.first_integrals, h.first_integrals);
    EXPECT_EQ(back.linearizing_outputs, h.linearizing_outputs);
    EXPECT_NO_THROW(validate_hints(h, load_system("vtol")));
}

TEST(Hints, UnknownNamesAreRejected) {
    const HintSet h = parse_hints("hint first_integral x + banana\n");
    EXPECT_THROW(validate_hints(h, load_system("vtol")), ValidationError);
    const HintSet derived = parse_hints("hint first_integral v_x_bar + u1_d2\n");
    EXPECT_NO_THROW(validate_hints(derived, load_system("vtol")));
    EXPECT_THROW(parse_hints("hint linearizing_output x\n"), ParseError);
    EXPECT_THROW(parse_hints("hint nonsense x\n"), ParseError);
}
