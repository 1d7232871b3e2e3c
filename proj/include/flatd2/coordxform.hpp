#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flatd2/ansatz.hpp"
#include "flatd2/diffgeo.hpp"
#include "flatd2/system.hpp"

namespace flatd2 {

enum class StepKind { StateTransform, InputTransform, Prolong, Decompose, Normalize };
const char* step_kind_name(StepKind k);

using NameMap = std::vector<std::pair<std::string, Expr>>;

/// One action of the algorithm. `forward` expresses every variable of the
/// resulting model through the variables of the model it was applied to;
/// `inverse` goes the other way for the variables that changed.
struct TransformStep {
    StepKind kind = StepKind::InputTransform;
    NameMap forward;
    NameMap inverse;
    std::string prolonged_input;  // Prolong
    int order = 0;                // Prolong
    std::vector<std::string> kept_states;  // Decompose: states of the subsystem
    NameMap residual;             // Decompose: equations split off
    std::string rationale;

    bool is_identity() const;
};

/// Checks forward(inverse) = id and inverse(forward) = id componentwise with
/// is_zero. `before` and `after` are the models the step connects.
bool verify_step(const TransformStep& step, const SystemModel& before, const SystemModel& after, Context& ctx);

/// Solves phi(..., v, ...) = target for v. Handles expressions linear in v
/// and chains of invertible operations; throws InversionError otherwise.
/// The result is not verified here.
Expr solve_for(const Expr& phi, Symbol v, const Expr& target);

/// Name not used in `taken`: base + "_bar", then base + "_bar2", ...
std::string fresh_bar_name(const std::string& base, const std::vector<std::string>& taken);
/// Name of the j-th time derivative of `name` (a jet name is incremented).
std::string jet_name(const std::string& name, int j);
/// Splits "stem_dK" into (stem, K); K = 0 for plain names.
std::pair<std::string, int> split_jet(const std::string& name);

/// Total time derivative along the model: states follow the rhs, inputs
/// and their jets move one jet order up.
Expr total_derivative(const SystemModel& m, const Expr& e);

/// Rewrites the rhs under an input substitution old input -> expression.
SystemModel apply_input_transform(const SystemModel& m, const std::vector<std::string>& new_inputs,
                                  const Substitution& old_in_terms_of_new, const std::string& provenance);

std::pair<SystemModel, TransformStep> prolong(const SystemModel& m, const std::string& input, int k);

/// Options for find_first_integrals.
struct IntegralSearch {
    std::vector<Symbol> vars;         // ansatz variables
    std::vector<Symbol> nonzero;      // variables allowed in denominators
    std::vector<Expr> atoms;          // extra subexpressions used like variables
    bool require_input = false;       // terms must involve one of `inputs`
    bool states_only = false;         // terms must avoid `inputs`
    std::vector<Symbol> inputs;
    std::vector<Expr> hints;          // tried first
    std::vector<Expr> known;          // previously found; results stay independent of these
};

/// `needed` functionally independent functions annihilated by every field.
/// Throws StraightenError (with a hint request) when the ansatz runs out.
std::vector<Expr> find_first_integrals(const std::vector<VectorField>& fields, int needed,
                                       const IntegralSearch& search, const Domain& dom, Context& ctx);

/// Function-argument subexpressions of the rhs that are neither variables nor
/// constants (used as extra ansatz atoms).
std::vector<Expr> rhs_atoms(const SystemModel& m);

/// Input transformation making span{v} = span{d/d new_second_input}.
/// v has components alpha over the two inputs; states act as parameters.
std::pair<SystemModel, TransformStep> straighten_line(const SystemModel& m, const Expr& alpha1, const Expr& alpha2,
                                                      const std::vector<Expr>& hints, Context& ctx);

struct Decomposition {
    SystemModel sigma1;
    TransformStep step;
    bool redundant = false;  // the subsystem's input Jacobian has rank < 2
};

/// Case-1 split of an input-affine model whose input distribution is
/// involutive. The subsystem keeps the new states; the complementary old
/// states become its inputs. A subsystem whose input Jacobian has rank < 2
/// raises RedundantInputError unless `allow_redundant`.
Decomposition decompose(const SystemModel& m, const std::vector<Expr>& hints, Context& ctx,
                        bool allow_redundant = false);

/// Removes a redundant input direction from a model whose input Jacobian has
/// rank 1.
std::pair<SystemModel, TransformStep> single_input_reduce(const SystemModel& m, Context& ctx);

}  // namespace flatd2
