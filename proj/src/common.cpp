#include "distsi/common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <unordered_map>

namespace distsi {

IndexList complement(int p, const IndexList& E) {
  std::vector<char> in(p, 0);
  for (int j : E) {
    if (j < 0 || j >= p) throw InvalidInputError("index out of range");
    in[j] = 1;
  }
  IndexList out;
  out.reserve(p - static_cast<int>(E.size()));
  for (int j = 0; j < p; ++j)
    if (!in[j]) out.push_back(j);
  return out;
}

IndexList positions_in(const IndexList& sub, const IndexList& super) {
  std::unordered_map<int, int> pos;
  pos.reserve(super.size());
  for (int i = 0; i < static_cast<int>(super.size()); ++i) pos[super[i]] = i;
  IndexList out;
  out.reserve(sub.size());
  for (int j : sub) {
    auto it = pos.find(j);
    if (it == pos.end())
      throw InvalidInputError("index " + std::to_string(j) +
                              " not contained in the reference set");
    out.push_back(it->second);
  }
  return out;
}

bool is_subset(const IndexList& sub, const IndexList& super) {
  std::unordered_map<int, int> pos;
  for (int i = 0; i < static_cast<int>(super.size()); ++i) pos[super[i]] = i;
  for (int j : sub)
    if (pos.find(j) == pos.end()) return false;
  return true;
}

Vector slice(const Vector& v, const IndexList& idx) {
  Vector out(idx.size());
  for (int i = 0; i < static_cast<int>(idx.size()); ++i) out(i) = v(idx[i]);
  return out;
}

Matrix slice(const Matrix& A, const IndexList& rows, const IndexList& cols) {
  Matrix out(rows.size(), cols.size());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i)
    for (int j = 0; j < static_cast<int>(cols.size()); ++j)
      out(i, j) = A(rows[i], cols[j]);
  return out;
}

Matrix slice_rows(const Matrix& A, const IndexList& rows) {
  Matrix out(rows.size(), A.cols());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i)
    out.row(i) = A.row(rows[i]);
  return out;
}

namespace {

Eigen::LLT<Matrix> checked_llt(const Matrix& A, const char* context,
                               bool info_error) {
  if (A.rows() != A.cols())
    throw InvalidInputError(std::string("non-square matrix in ") + context);
  Eigen::LLT<Matrix> llt(symmetrized(A));
  bool bad = llt.info() != Eigen::Success;
  if (!bad && A.rows() > 0) {
    const auto& L = llt.matrixLLT();
    double dmin = L.diagonal().minCoeff();
    double dmax = L.diagonal().maxCoeff();
    if (!(dmin > 0.0) || dmin < 1e-9 * dmax) bad = true;
  }
  if (bad) {
    if (info_error)
      throw SingularInformationError(std::string("singular matrix in ") + context);
    throw DegenerateGeometryError(std::string("matrix not positive definite in ") +
                                  context);
  }
  return llt;
}

}  // namespace

Matrix spd_solve(const Matrix& A, const Matrix& B, const char* context) {
  return checked_llt(A, context, false).solve(B);
}

Vector spd_solve(const Matrix& A, const Vector& b, const char* context) {
  return checked_llt(A, context, false).solve(b);
}

Matrix spd_inverse(const Matrix& A, const char* context) {
  Matrix id = Matrix::Identity(A.rows(), A.cols());
  return symmetrized(checked_llt(A, context, false).solve(id));
}

Vector info_solve(const Matrix& A, const Vector& b, const char* context) {
  return checked_llt(A, context, true).solve(b);
}

double min_eigenvalue(const Matrix& A) {
  if (A.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(A),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace distsi
