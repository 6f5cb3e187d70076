#include "incentive/bregman.hpp"

#include <cmath>

namespace incentive {

BregmanGeometry::BregmanGeometry(Kind kind, std::vector<Matrix> q) : kind_(kind), q_(std::move(q)) {
  for (size_t i = 0; i < q_.size(); ++i) {
    const Matrix& qi = q_[i];
    if (qi.rows() != qi.cols() || qi.rows() == 0) {
      throw StructuralError("Q block " + std::to_string(i) + " is not a non-empty square matrix");
    }
    if ((qi - qi.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + qi.cwiseAbs().maxCoeff())) {
      throw StructuralError("Q block " + std::to_string(i) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(qi, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (lo < 1.0 - 1e-12) {
      throw StructuralError("Q block " + std::to_string(i) + " has smallest eigenvalue " +
                            std::to_string(lo) + " < 1 (psi must be 1-strongly convex)");
    }
    h_psi_ = std::max(h_psi_, hi);
    q_factors_.emplace_back(qi);
  }
}

BregmanGeometry BregmanGeometry::mahalanobis(std::vector<Matrix> q_blocks) {
  if (q_blocks.empty()) throw StructuralError("Mahalanobis geometry needs one Q per block");
  return BregmanGeometry(Kind::kMahalanobis, std::move(q_blocks));
}

BregmanGeometry BregmanGeometry::euclidean(const StrategySpace& space) {
  std::vector<Matrix> q;
  for (int d : space.block_dims()) q.push_back(Matrix::Identity(d, d));
  return mahalanobis(std::move(q));
}

BregmanGeometry BregmanGeometry::entropy() { return BregmanGeometry(Kind::kEntropy, {}); }

void BregmanGeometry::check_compatible(const StrategySpace& space) const {
  if (is_entropy()) {
    if (!space.is_simplex()) throw StructuralError("entropy geometry requires a simplex space");
    return;
  }
  if (space.is_simplex()) throw StructuralError("Mahalanobis geometry requires a full space");
  if (static_cast<int>(q_.size()) != space.num_blocks()) {
    throw StructuralError("geometry has " + std::to_string(q_.size()) + " Q blocks, space has " +
                          std::to_string(space.num_blocks()));
  }
  for (int i = 0; i < space.num_blocks(); ++i) {
    if (q_[static_cast<size_t>(i)].rows() != space.block_dim(i)) {
      throw StructuralError("Q block " + std::to_string(i) + " does not match the block dimension");
    }
  }
}

Vector BregmanGeometry::solve_block(int i, const Vector& b) const {
  return q_factors_[static_cast<size_t>(i)].solve(b);
}

double block_divergence(const BregmanGeometry& geom, int block, const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw StructuralError("divergence: block length mismatch");
  if (!geom.is_entropy()) {
    const Vector diff = a - b;
    return 0.5 * diff.dot(geom.q_blocks()[static_cast<size_t>(block)] * diff);
  }
  double kl = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a[j] <= 0.0) continue;  // 0 log 0 = 0
    if (b[j] <= 0.0) {
      throw DomainError("KL divergence: mass " + std::to_string(a[j]) + " on coordinate " +
                        std::to_string(j) + " of block " + std::to_string(block) +
                        " where the reference is zero");
    }
    kl += a[j] * std::log(a[j] / b[j]);
  }
  // KL between two distributions is nonnegative; clip rounding.
  return std::max(kl, 0.0);
}

double divergence(const BregmanGeometry& geom, const StrategySpace& space, const StrategyProfile& a,
                  const StrategyProfile& b) {
  if (a.size() != space.total_dim() || b.size() != space.total_dim()) {
    throw StructuralError("divergence: profiles do not match the space");
  }
  double total = 0.0;
  for (int i = 0; i < space.num_blocks(); ++i) {
    const int off = space.offset(i);
    const int d = space.block_dim(i);
    total += block_divergence(geom, i, a.segment(off, d), b.segment(off, d));
  }
  return total;
}

StrategyProfile mirror_step(const BregmanGeometry& geom, const StrategySpace& space,
                            const StrategyProfile& x, const Vector& v_hat, const Vector& beta) {
  if (x.size() != space.total_dim() || v_hat.size() != space.total_dim()) {
    throw StructuralError("mirror_step: profile or gradient does not match the space");
  }
  if (beta.size() != space.num_blocks()) {
    throw StructuralError("mirror_step: need one step size per block");
  }
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    if (!(beta[i] > 0.0) || !std::isfinite(beta[i])) {
      throw ParameterError("mirror_step: step size for block " + std::to_string(i) +
                           " must be positive, got " + std::to_string(beta[i]));
    }
  }

  StrategyProfile out(x.size());
  for (int i = 0; i < space.num_blocks(); ++i) {
    const int off = space.offset(i);
    const int d = space.block_dim(i);
    const auto xi = x.segment(off, d);
    const auto vi = v_hat.segment(off, d);
    if (!geom.is_entropy()) {
      out.segment(off, d) = xi + beta[i] * geom.solve_block(i, vi);
      continue;
    }
    if ((xi.array() <= 0.0).any()) {
      throw DomainError("mirror_step: entropy step needs a strictly positive block " +
                        std::to_string(i));
    }
    // log-weights, shifted by their max so the largest exponent is 0.
    Eigen::ArrayXd logw = xi.array().log() + beta[i] * vi.array();
    logw -= logw.maxCoeff();
    const Eigen::ArrayXd w = logw.exp();
    long double z = 0.0L;
    for (Eigen::Index j = 0; j < d; ++j) z += static_cast<long double>(w[j]);
    out.segment(off, d) = (w / static_cast<double>(z)).matrix();
  }
  return out;
}

StrategyProfile mix_with_uniform(const StrategySpace& space, const StrategyProfile& x, double nu) {
  if (!(nu > 0.0 && nu < 1.0)) {
    throw ParameterError("mix_with_uniform: nu must lie in (0, 1), got " + std::to_string(nu));
  }
  if (x.size() != space.total_dim()) throw StructuralError("mix_with_uniform: dimension mismatch");
  StrategyProfile out(x.size());
  for (int i = 0; i < space.num_blocks(); ++i) {
    const int off = space.offset(i);
    const int d = space.block_dim(i);
    out.segment(off, d) = ((1.0 - nu) * x.segment(off, d).array() + nu / d).matrix();
  }
  return out;
}

}  // namespace incentive
