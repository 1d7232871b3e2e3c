#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "flatd2/expr.hpp"
#include "flatd2/sampling.hpp"

namespace flatd2 {

/// Coefficients over an explicit coordinate list.
struct VectorField {
    std::vector<Symbol> coords;
    std::vector<Expr> comps;

    static VectorField zero(std::vector<Symbol> coords);
    /// The coordinate field d/ds.
    static VectorField partial(std::vector<Symbol> coords, Symbol s);
    int dim() const { return static_cast<int>(coords.size()); }
    bool operator==(const VectorField& o) const { return coords == o.coords && comps == o.comps; }
};

VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator*(const Expr& s, const VectorField& v);

/// Spanning set on a common coordinate list, kept verbatim.
struct Distribution {
    std::vector<Symbol> coords;
    std::vector<VectorField> fields;

    Distribution() = default;
    Distribution(std::vector<Symbol> c, std::vector<VectorField> f = {}) : coords(std::move(c)), fields(std::move(f)) {}
    void add(VectorField v) { fields.push_back(std::move(v)); }
};

VectorField lie_bracket(const VectorField& v, const VectorField& w);
Expr lie_derivative(const VectorField& v, const Expr& phi, int k = 1);

/// Value of v at p, and its Jacobian J(i,j) = d v^i / d coord_j.
Eigen::VectorXd eval_field(const VectorField& v, const Point& p);
Eigen::MatrixXd eval_field_jacobian(const VectorField& v, const Point& p, Eigen::VectorXd* value = nullptr);
/// Numeric bracket from Jacobians: J_w v - J_v w.
Eigen::VectorXd numeric_bracket(const VectorField& v, const VectorField& w, const Point& p);
/// Columns are the spanning fields evaluated at p.
Eigen::MatrixXd eval_distribution(const Distribution& d, const Point& p);

/// Gradients of `fs` with respect to `coords` at p, one row per function.
Eigen::MatrixXd eval_gradients(const std::vector<Expr>& fs, const std::vector<Symbol>& coords, const Point& p);
/// Majority rank of the Jacobian of `fs` with respect to `coords`.
int jacobian_rank(const std::vector<Expr>& fs, const std::vector<Symbol>& coords, const Domain& dom, Context& ctx);

/// Sample points binding every coordinate of `coords`, drawn from `dom`.
std::vector<Point> sample_points(const Domain& dom, const std::vector<Symbol>& coords, Context& ctx, int count = 0);

/// Majority numeric rank; RankInstability when more than 10% of the
/// samples disagree.
int generic_rank(const Distribution& d, const Domain& dom, Context& ctx);
bool member_mod(const VectorField& v, const Distribution& d, const Domain& dom, Context& ctx);
/// Every bracket of spanning fields lies in the span (numeric brackets).
bool is_involutive(const Distribution& d, const Domain& dom, Context& ctx);
/// D, D + [D,D], ... until the rank stops growing or max_steps brackets.
/// Only brackets outside the current span are appended.
std::vector<Distribution> derived_flag(const Distribution& d, int max_steps, const Domain& dom, Context& ctx);
Distribution involutive_closure(const Distribution& d, const Domain& dom, Context& ctx);

/// Majority vote of a pointwise predicate with the 10% instability rule.
bool majority_vote(const std::vector<bool>& votes, const char* what);
int majority_rank(const std::vector<int>& ranks, const char* what);

struct CauchyResult {
    int dim = 0;                        // numeric certificate
    std::optional<Distribution> lifted; // symbolic representatives when found
};

/// C(D): combinations c of the spanning fields with [c, D] inside D.
/// Numeric dimension always; symbolic lift via ansatz fitting when `lift`.
CauchyResult cauchy_characteristic(const Distribution& d, const Domain& dom, Context& ctx, bool lift = false);

/// v (pointwise) lies in the span of the Cauchy characteristic of d.
bool cauchy_contains(const Distribution& d, const VectorField& v, const Domain& dom, Context& ctx);

}  // namespace flatd2
