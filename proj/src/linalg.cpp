#include "flatd2/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace flatd2 {

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& a) {
    Eigen::MatrixXd r = a;
    double biggest = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j)
        if (std::isfinite(r.col(j).norm())) biggest = std::max(biggest, r.col(j).norm());
    // columns that are rounding noise of an exact zero stay negligible
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
        double n = r.col(j).norm();
        if (n <= 1e-11 * biggest)
            r.col(j).setZero();
        else if (std::isfinite(n))
            r.col(j) /= n;
    }
    return r;
}

int numeric_rank(const Eigen::MatrixXd& a, double tol) {
    if (a.size() == 0) return 0;
    Eigen::MatrixXd m = normalize_columns(a);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] > tol * s[0]) ++r;
    return r;
}

Eigen::MatrixXd nullspace(const Eigen::MatrixXd& a, double tol) {
    const Eigen::Index n = a.cols();
    if (a.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd m = a;
    double biggest = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) biggest = std::max(biggest, m.row(i).norm());
    // rows that are rounding noise of an exact zero must not be scaled up
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double rn = m.row(i).norm();
        if (rn <= 1e-11 * biggest)
            m.row(i).setZero();
        else
            m.row(i) /= rn;
    }
    // QR first keeps the SVD square when there are many rows.
    if (m.rows() > n) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        m = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    }
    auto finish = [&](const auto& svd) -> Eigen::MatrixXd {
        const auto& s = svd.singularValues();
        double smax = s.size() ? s[0] : 0.0;
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s[i] > tol * smax && smax > 0.0) ++r;
        return svd.matrixV().rightCols(n - r);
    };
    if (n > 64) return finish(Eigen::BDCSVD<Eigen::MatrixXd>(m, Eigen::ComputeFullV));
    return finish(Eigen::JacobiSVD<Eigen::MatrixXd>(m, Eigen::ComputeFullV));
}

Eigen::MatrixXd column_basis(const Eigen::MatrixXd& a, double tol) {
    if (a.size() == 0) return Eigen::MatrixXd(a.rows(), 0);
    Eigen::MatrixXd m = normalize_columns(a);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[0] > 0.0 && s[i] > tol * s[0]) ++r;
    return svd.matrixU().leftCols(r);
}

Eigen::MatrixXd complement_projector(const Eigen::MatrixXd& a, double tol) {
    Eigen::MatrixXd u = column_basis(a, tol);
    return Eigen::MatrixXd::Identity(a.rows(), a.rows()) - u * u.transpose();
}

double smallest_singular_value(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues().minCoeff();
}

std::vector<int> rref(Eigen::MatrixXd& a, double tol) {
    std::vector<int> pivots;
    Eigen::Index row = 0;
    for (Eigen::Index col = 0; col < a.cols() && row < a.rows(); ++col) {
        Eigen::Index best;
        double mx = a.col(col).segment(row, a.rows() - row).cwiseAbs().maxCoeff(&best);
        if (mx <= tol) {
            a.col(col).segment(row, a.rows() - row).setZero();
            continue;
        }
        best += row;
        a.row(row).swap(a.row(best));
        a.row(row) /= a(row, col);
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (i != row && a(i, col) != 0.0) a.row(i) -= a(i, col) * a.row(row);
        pivots.push_back(static_cast<int>(col));
        ++row;
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (std::abs(a(i, j)) <= tol) a(i, j) = 0.0;
    return pivots;
}

std::optional<Rational> rationalize(double x, std::int64_t max_den, double tol) {
    if (!std::isfinite(x) || std::abs(x) > 1e9) return std::nullopt;
    // convergents h/k of the continued fraction of x
    std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double r = x;
    for (int it = 0; it < 64; ++it) {
        double a = std::floor(r);
        std::int64_t ai = static_cast<std::int64_t>(a);
        std::int64_t h2 = ai * h1 + h0, k2 = ai * k1 + k0;
        if (k2 > max_den) break;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        if (std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) <= tol) return Rational(h1, k1);
        double frac = r - a;
        if (frac < 1e-15) break;
        r = 1.0 / frac;
    }
    return std::nullopt;
}

int majority(const std::vector<int>& v, int* disagree) {
    std::map<int, int> counts;
    for (int x : v) ++counts[x];
    int best = 0, bestc = -1;
    for (auto [val, c] : counts)
        if (c > bestc) {
            best = val;
            bestc = c;
        }
    if (disagree) *disagree = static_cast<int>(v.size()) - std::max(bestc, 0);
    return best;
}

}  // namespace flatd2
