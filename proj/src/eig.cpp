// Dense symmetric eigenvalues: Householder reduction to tridiagonal form,
// then QL iteration with implicit Wilkinson shifts. Values only, ascending.

#include <algorithm>
#include <cmath>

#include "rgio/analysis.hpp"
#include "rgio/errors.hpp"

namespace rgio {

namespace {

// Reduces a symmetric matrix in place, leaving the diagonal in `diag` and
// the subdiagonal in `off` (off[0] unused afterwards).
void householder_tridiagonalize(Eigen::MatrixXd& a, Eigen::VectorXd& diag,
                                Eigen::VectorXd& off) {
  const int n = static_cast<int>(a.rows());
  diag.resize(n);
  off.resize(n);
  off.setZero();
  for (int i = n - 1; i >= 1; --i) {
    const int l = i - 1;
    double h = 0.0;
    if (l > 0) {
      const double scale = a.row(i).head(i).cwiseAbs().sum();
      if (scale == 0.0) {
        off(i) = a(i, l);
      } else {
        a.row(i).head(i) /= scale;
        h = a.row(i).head(i).squaredNorm();
        double f = a(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        off(i) = scale * g;
        h -= f * g;
        a(i, l) = f - g;
        f = 0.0;
        for (int j = 0; j < i; ++j) {
          g = 0.0;
          for (int k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
          for (int k = j + 1; k < i; ++k) g += a(k, j) * a(i, k);
          off(j) = g / h;
          f += off(j) * a(i, j);
        }
        const double hh = f / (2.0 * h);
        for (int j = 0; j < i; ++j) {
          const double fi = a(i, j);
          const double gj = off(j) - hh * fi;
          off(j) = gj;
          for (int k = 0; k <= j; ++k) a(j, k) -= fi * off(k) + gj * a(i, k);
        }
      }
    } else {
      off(i) = a(i, l);
    }
    diag(i) = h;
  }
  for (int i = 0; i < n; ++i) diag(i) = a(i, i);
  off(0) = 0.0;
}

// QL with implicit shifts on a tridiagonal (diag, off); off holds the
// subdiagonal shifted down one slot on entry.
void ql_implicit(Eigen::VectorXd& diag, Eigen::VectorXd& off) {
  const int n = static_cast<int>(diag.size());
  for (int i = 1; i < n; ++i) off(i - 1) = off(i);
  off(n - 1) = 0.0;
  for (int l = 0; l < n; ++l) {
    int iterations = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(diag(m)) + std::abs(diag(m + 1));
        if (std::abs(off(m)) <= 2.3e-16 * dd + 1e-300) break;
      }
      if (m != l) {
        if (++iterations > 60) throw Error("symmetric eigenvalue iteration stalled");
        double g = (diag(l + 1) - diag(l)) / (2.0 * off(l));
        double r = std::hypot(g, 1.0);
        g = diag(m) - diag(l) + off(l) / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        bool underflow = false;
        for (int i = m - 1; i >= l; --i) {
          double f = s * off(i);
          const double b = c * off(i);
          r = std::hypot(f, g);
          off(i + 1) = r;
          if (r == 0.0) {
            diag(i + 1) -= p;
            off(m) = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = diag(i + 1) - p;
          r = (diag(i) - g) * s + 2.0 * c * b;
          p = s * r;
          diag(i + 1) = g + p;
          g = c * r - b;
        }
        if (underflow) continue;
        diag(l) -= p;
        off(l) = g;
        off(m) = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols()) throw Error("matrix must be square");
  const int n = static_cast<int>(matrix.rows());
  if (n == 0) return {};
  if ((matrix - matrix.transpose()).lpNorm<Eigen::Infinity>() >
      1e-10 * (1.0 + matrix.lpNorm<Eigen::Infinity>()))
    throw Error("matrix must be symmetric");
  if (n == 1) return matrix.diagonal();
  Eigen::MatrixXd a = matrix;
  Eigen::VectorXd diag, off;
  householder_tridiagonalize(a, diag, off);
  ql_implicit(diag, off);
  std::sort(diag.begin(), diag.end());
  return diag;
}

}  // namespace rgio
