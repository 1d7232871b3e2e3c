#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "flatd2/rational.hpp"

namespace flatd2 {

/// Scales every nonzero column to unit length; zero columns stay zero.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& a);

/// Numeric rank of the column span: singular values above tol * largest,
/// after column normalization.
int numeric_rank(const Eigen::MatrixXd& a, double tol);

/// Orthonormal basis of the right null space of `a` (columns of the result).
/// Rows are normalized first; a singular value counts as zero below
/// tol * largest.
Eigen::MatrixXd nullspace(const Eigen::MatrixXd& a, double tol);

/// Orthonormal basis of the column span (numeric rank columns).
Eigen::MatrixXd column_basis(const Eigen::MatrixXd& a, double tol);

/// Projector onto the orthogonal complement of the column span of `a`.
Eigen::MatrixXd complement_projector(const Eigen::MatrixXd& a, double tol);

/// Smallest singular value (0 for an empty matrix).
double smallest_singular_value(const Eigen::MatrixXd& a);

/// Reduced row echelon form with partial pivoting; entries below tol are
/// cleared. Returns the pivot columns.
std::vector<int> rref(Eigen::MatrixXd& a, double tol);

/// Continued-fraction rational approximation with denominator <= max_den,
/// accepted only when within tol of x.
std::optional<Rational> rationalize(double x, std::int64_t max_den = 64, double tol = 1e-7);

/// Value held by most entries; ties go to the smaller value. `disagree`
/// receives the number of entries differing from it.
int majority(const std::vector<int>& v, int* disagree = nullptr);

}  // namespace flatd2
