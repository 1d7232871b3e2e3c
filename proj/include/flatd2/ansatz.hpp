#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "flatd2/expr.hpp"
#include "flatd2/sampling.hpp"

namespace flatd2 {

/// Ordered basis terms for unknown functions, grouped in tiers of growing
/// complexity. Term lists are cumulative: tier k includes tiers below it.
class AnsatzLibrary {
public:
    struct Options {
        bool constant = true;        // include the term 1
        bool trig = true;            // sin/cos/tan of variables and atoms
        bool products = true;        // pairwise products
        bool ratios = true;          // v/w for variables with a nonzero guard on w
        /// Terms rejected by this filter are dropped (e.g. terms that do not
        /// involve an input).
        std::function<bool(const Expr&)> keep;
    };

    /// `vars` are the variables terms are built from; `params` are used for
    /// parameter-scaled copies; `atoms` are extra subexpressions (for example
    /// function arguments found in a model) treated like variables;
    /// `nonzero` lists variables that may appear in denominators.
    AnsatzLibrary(std::vector<Symbol> vars, std::vector<Symbol> params, std::vector<Expr> atoms,
                  std::vector<Symbol> nonzero, Options opt);
    AnsatzLibrary(std::vector<Symbol> vars, std::vector<Symbol> params = {});

    int tiers() const { return static_cast<int>(tiers_.size()); }
    /// Terms up to and including tier k, in increasing complexity.
    std::vector<Expr> terms(int k) const;
    std::string describe(int k) const;

private:
    void build(const std::vector<Symbol>& vars, const std::vector<Symbol>& params,
               const std::vector<Expr>& atoms, const std::vector<Symbol>& nonzero, Options opt);
    std::vector<std::vector<Expr>> tiers_;
};

/// Finds unknown functions lambda_1..lambda_K, each a combination of ansatz
/// terms, satisfying pointwise linear conditions A(p) lambda(p) = 0.
struct AnsatzProblem {
    int unknowns = 1;
    /// Condition rows at p: a matrix with `unknowns` columns. May throw
    /// DomainError to reject p.
    std::function<Eigen::MatrixXd(const Point&)> rows;
    /// Alternative to `rows` for conditions that are not pointwise in the
    /// unknowns (e.g. involve their derivatives): returns the design rows at
    /// p with unknowns * terms.size() columns, unknown-major.
    std::function<Eigen::MatrixXd(const Point&, const std::vector<Expr>&)> design;
    /// Symbolic acceptance test for a candidate solution.
    std::function<bool(const std::vector<Expr>&)> verify;
    /// True when the candidate adds something new to the accepted list.
    std::function<bool(const std::vector<std::vector<Expr>>&, const std::vector<Expr>&)> independent;
};

/// Searches tier by tier; returns up to `wanted` verified, independent
/// solutions from the first tier that produces any (or `wanted` of them
/// when `need_all`). Coefficients are rationalized with denominators <= 64.
std::vector<std::vector<Expr>> solve_ansatz(const AnsatzProblem& prob, const AnsatzLibrary& lib,
                                            const Domain& dom, Context& ctx, int wanted,
                                            bool need_all = true);

}  // namespace flatd2
