#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flatd2/expr.hpp"
#include "flatd2/sampling.hpp"

namespace flatd2 {

struct Parameter {
    std::string name;
    std::optional<ParamRange> range;  // unset: default range, not written back
};

/// x' = f(x, u) with named states, inputs and parameters.
struct SystemModel {
    std::string name = "system";
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    std::vector<Expr> rhs;  // rhs[i] is the derivative of states[i]
    std::vector<Parameter> params;
    std::vector<Expr> constraints;  // each asserted nonzero
    std::string provenance = "original";

    int n() const { return static_cast<int>(states.size()); }
    int m() const { return static_cast<int>(inputs.size()); }
    std::vector<Symbol> state_symbols() const;
    std::vector<Symbol> input_symbols() const;
    /// States followed by inputs.
    std::vector<Symbol> coordinates() const;
    bool is_param(std::string_view name) const;
    int state_index(std::string_view name) const;  // -1 when absent
    int input_index(std::string_view name) const;

    /// Sampling domain: states and inputs, parameter ranges, declared
    /// constraints and the implicit guards of the rhs.
    Domain domain() const;
};

/// Checks the declaration invariants and, when `ctx` is given, the generic
/// input rank of the rhs. Throws ValidationError.
void validate_system(const SystemModel& m, Context* ctx);

/// Parses and validates (rank check uses a context seeded from `seed`).
SystemModel parse_system(std::string_view text, std::uint64_t seed = 20210501);
std::string serialize_system(const SystemModel& m);
bool structurally_equal(const SystemModel& a, const SystemModel& b);

struct HintSet {
    std::vector<Expr> first_integrals;
    std::vector<std::pair<Expr, Expr>> linearizing_outputs;
    bool empty() const { return first_integrals.empty() && linearizing_outputs.empty(); }
};

HintSet parse_hints(std::string_view text);
std::string serialize_hints(const HintSet& h);
/// Hints may name model variables and names derived from them by the
/// algorithm (suffixes _bar and _d<k>). Throws ValidationError otherwise.
void validate_hints(const HintSet& h, const SystemModel& m);

}  // namespace flatd2
