#pragma once

#include <utility>
#include <vector>

#include "flatd2/coordxform.hpp"
#include "flatd2/diffgeo.hpp"
#include "flatd2/system.hpp"

namespace flatd2 {

/// Direction v_c = a1 d/du1 + a2 d/du2 in the inputs, normalized so the
/// component of largest magnitude at a reference point is 1.
struct AlphaSolution {
    Expr a1;
    Expr a2;
    bool filter_checked = false;
    bool passes_filter = false;
};

/// The rhs as a vector field on states followed by inputs.
VectorField drift_field(const SystemModel& m);
/// span{d/du1, d/du2, [d/du1, f], [d/du2, f]} on states and inputs.
Distribution input_distribution_d1(const SystemModel& m);
/// Input vector fields b_j = d f / d u_j on the state space.
std::vector<VectorField> input_fields(const SystemModel& m);
/// f with every input set to zero.
std::vector<Expr> drift_at_zero_input(const SystemModel& m);

/// Second input derivatives of the rhs simplify to exactly zero.
bool is_syntactically_affine(const SystemModel& m);

/// An input-affine representation exists: every [d/du_j, [d/du_k, f]] lies in D1.
bool ai_test(const SystemModel& m, Context& ctx);
/// Same decision through the Cauchy characteristic of D1.
bool ai_test_cauchy(const SystemModel& m, Context& ctx);

/// Input transformation to explicit input-affine shape. Identity for a
/// syntactically affine rhs.
std::pair<SystemModel, TransformStep> to_ai_form(const SystemModel& m, Context& ctx);

struct PaiAnalysis {
    std::vector<AlphaSolution> solutions;
    /// Number of distinct projective roots at each sample point used.
    std::vector<int> point_counts;
};

/// Distinct projective roots of the PAI condition at each sample point;
/// -1 where the condition holds identically. Points outside the domain are skipped.
std::vector<int> pai_root_counts(const SystemModel& m, Context& ctx);

/// Solutions of a1^2 f_u1u1 + 2 a1 a2 f_u1u2 + a2^2 f_u2u2 in D1 for a model
/// without an affine representation.
PaiAnalysis analyze_pai(const SystemModel& m, Context& ctx);
std::vector<AlphaSolution> pai_condition_solutions(const SystemModel& m, Context& ctx);

/// [v_c, [v_c, f]] lies in span{d/du1, d/du2, [v_c, f]}.
bool pai_filter(const SystemModel& m, const AlphaSolution& s, Context& ctx);

/// Straightens v_c and normalizes one equation so the rhs is affine in the
/// second input. The first input of the result is the non-affine one.
/// `parents`, when given, receives the model each returned step applies to.
std::pair<SystemModel, std::vector<TransformStep>> to_pai_form(const SystemModel& m, const AlphaSolution& s,
                                                               const std::vector<Expr>& hints, Context& ctx,
                                                               std::vector<SystemModel>* parents = nullptr);

}  // namespace flatd2
