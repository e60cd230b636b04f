#include "calibprobe/pnp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "calibprobe/errors.hpp"
#include "calibprobe/fsio.hpp"

namespace calibprobe {

namespace {

constexpr double kBehindCameraPenalty = 1e8;

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-14) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d axis = w / theta;
  Eigen::Matrix3d kx;
  kx << 0, -axis.z(), axis.y(),
        axis.z(), 0, -axis.x(),
        -axis.y(), axis.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * kx +
         (1.0 - std::cos(theta)) * kx * kx;
}

}  // namespace

double reprojection_cost(const RigidTransform& t,
                         std::span<const Correspondence> corr,
                         const Intrinsics& k) {
  double cost = 0.0;
  for (const Correspondence& c : corr) {
    const Eigen::Vector3d q = t * c.point;
    if (q.z() <= 1e-9) {
      cost += c.weight * kBehindCameraPenalty;
      continue;
    }
    const double du = k.fx * q.x() / q.z() + k.cx - c.pixel.x();
    const double dv = k.fy * q.y() / q.z() + k.cy - c.pixel.y();
    cost += c.weight * (du * du + dv * dv);
  }
  return cost;
}

// ---------------------------------------------------------------------------
// EPnP
// ---------------------------------------------------------------------------

namespace {

// Index of the beta product b_i*b_j in the 10-vector
// [B11 B12 B22 B13 B23 B33 B14 B24 B34 B44].
constexpr int kPairIdx[4][4] = {{0, 1, 3, 6},
                                {1, 2, 4, 7},
                                {3, 4, 5, 8},
                                {6, 7, 8, 9}};

Eigen::Matrix<double, 10, 1> beta_products(const Eigen::Vector4d& b) {
  Eigen::Matrix<double, 10, 1> out;
  int n = 0;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i <= j; ++i) out[n++] = b[i] * b[j];
  }
  // order produced above is (11),(12),(22),(13),(23),(33),(14),(24),(34),(44)
  return out;
}

struct EpnpWork {
  Eigen::Matrix<double, 3, 4> cw;            // world control points (columns)
  Eigen::MatrixX4d alphas;                   // n x 4 barycentric coordinates
  Eigen::Matrix<double, 12, 4> nullv;        // 4 smallest eigenvectors of MtM
  Eigen::Matrix<double, 6, 10> L;
  Eigen::Matrix<double, 6, 1> rho;
};

// Solves L(:, cols) * x = rho in the least-squares sense.
Eigen::VectorXd solve_subset(const Eigen::Matrix<double, 6, 10>& L,
                             const Eigen::Matrix<double, 6, 1>& rho,
                             std::span<const int> cols) {
  Eigen::MatrixXd sub(6, static_cast<Eigen::Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = L.col(cols[i]);
  return sub.colPivHouseholderQr().solve(rho);
}

Eigen::Vector4d betas_case1(const EpnpWork& w) {
  const int cols[] = {0, 1, 3, 6};  // B11 B12 B13 B14
  const Eigen::VectorXd b = solve_subset(w.L, w.rho, cols);
  Eigen::Vector4d out;
  if (b[0] < 0) {
    out[0] = std::sqrt(-b[0]);
    out[1] = -b[1] / out[0];
    out[2] = -b[2] / out[0];
    out[3] = -b[3] / out[0];
  } else {
    out[0] = std::sqrt(b[0]);
    out[1] = b[1] / out[0];
    out[2] = b[2] / out[0];
    out[3] = b[3] / out[0];
  }
  return out;
}

Eigen::Vector4d betas_case2(const EpnpWork& w) {
  const int cols[] = {0, 1, 2};  // B11 B12 B22
  const Eigen::VectorXd b = solve_subset(w.L, w.rho, cols);
  Eigen::Vector4d out = Eigen::Vector4d::Zero();
  if (b[0] < 0) {
    out[0] = std::sqrt(-b[0]);
    out[1] = b[2] < 0 ? std::sqrt(-b[2]) : 0.0;
  } else {
    out[0] = std::sqrt(b[0]);
    out[1] = b[2] > 0 ? std::sqrt(b[2]) : 0.0;
  }
  if (b[1] < 0) out[0] = -out[0];
  return out;
}

Eigen::Vector4d betas_case3(const EpnpWork& w) {
  const int cols[] = {0, 1, 2, 3, 4};  // B11 B12 B22 B13 B23
  const Eigen::VectorXd b = solve_subset(w.L, w.rho, cols);
  Eigen::Vector4d out = Eigen::Vector4d::Zero();
  if (b[0] < 0) {
    out[0] = std::sqrt(-b[0]);
    out[1] = b[2] < 0 ? std::sqrt(-b[2]) : 0.0;
  } else {
    out[0] = std::sqrt(b[0]);
    out[1] = b[2] > 0 ? std::sqrt(b[2]) : 0.0;
  }
  if (b[1] < 0) out[0] = -out[0];
  out[2] = std::abs(out[0]) > 1e-12 ? b[3] / out[0] : 0.0;
  return out;
}

// Refines betas on ||L * products(beta) - rho||^2 (a few Gauss-Newton steps).
Eigen::Vector4d refine_betas(const EpnpWork& w, Eigen::Vector4d betas) {
  for (int iter = 0; iter < 5; ++iter) {
    Eigen::Matrix<double, 6, 4> jac;
    for (int row = 0; row < 6; ++row) {
      for (int bi = 0; bi < 4; ++bi) {
        double g = 0.0;
        for (int bj = 0; bj < 4; ++bj) {
          const double coeff = w.L(row, kPairIdx[bi][bj]);
          // diagonal products contribute 2*b_i, off-diagonals b_j
          g += (bi == bj ? 2.0 * betas[bi] : betas[bj]) * coeff;
        }
        jac(row, bi) = g;
      }
    }
    const Eigen::Matrix<double, 6, 1> residual =
        w.L * beta_products(betas) - w.rho;
    const Eigen::Vector4d step =
        jac.colPivHouseholderQr().solve(-residual);
    if (!step.allFinite()) break;
    betas += step;
  }
  return betas;
}

// Camera-frame control points for a beta vector, then camera-frame 3D points.
Eigen::Matrix3Xd camera_points(const EpnpWork& w, const Eigen::Vector4d& betas) {
  Eigen::Matrix<double, 3, 4> cc = Eigen::Matrix<double, 3, 4>::Zero();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      cc.col(i) += betas[j] * w.nullv.block<3, 1>(3 * i, j);
    }
  }
  const Eigen::Index n = w.alphas.rows();
  Eigen::Matrix3Xd pcs(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pcs.col(i) = cc * w.alphas.row(i).transpose();
  }
  // resolve the global sign so points sit in front of the camera
  if (pcs.row(2).mean() < 0.0) pcs = -pcs;
  return pcs;
}

// Rigid alignment (Procrustes) of world points onto camera points.
RigidTransform align_frames(std::span<const Correspondence> corr,
                            const Eigen::Matrix3Xd& pcs) {
  const Eigen::Index n = pcs.cols();
  Eigen::Vector3d pw0 = Eigen::Vector3d::Zero();
  for (const auto& c : corr) pw0 += c.point;
  pw0 /= static_cast<double>(n);
  const Eigen::Vector3d pc0 = pcs.rowwise().mean();

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    h += (pcs.col(i) - pc0) * (corr[static_cast<size_t>(i)].point - pw0).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  RigidTransform t;
  t.rotation = r;
  t.translation = pc0 - r * pw0;
  return t;
}

}  // namespace

RigidTransform epnp(std::span<const Correspondence> corr, const Intrinsics& k) {
  const size_t n = corr.size();
  if (n < 4) throw DegeneracyError("epnp: need at least 4 correspondences");

  EpnpWork w;

  // control points: centroid + principal directions of the point spread
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& c : corr) centroid += c.point;
  centroid /= static_cast<double>(n);

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& c : corr) {
    const Eigen::Vector3d d = c.point - centroid;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  if (!(evals[2] > 0.0) || evals[0] < 1e-10 * evals[2]) {
    throw DegeneracyError("epnp: coplanar or collinear points");
  }
  w.cw.col(0) = centroid;
  for (int i = 0; i < 3; ++i) {
    w.cw.col(i + 1) =
        centroid + std::sqrt(evals[2 - i] / static_cast<double>(n)) *
                       eig.eigenvectors().col(2 - i);
  }

  // barycentric coordinates
  Eigen::Matrix3d basis;
  for (int i = 0; i < 3; ++i) basis.col(i) = w.cw.col(i + 1) - w.cw.col(0);
  const Eigen::Matrix3d basis_inv = basis.inverse();
  w.alphas.resize(static_cast<Eigen::Index>(n), 4);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d a = basis_inv * (corr[i].point - w.cw.col(0));
    w.alphas(static_cast<Eigen::Index>(i), 1) = a[0];
    w.alphas(static_cast<Eigen::Index>(i), 2) = a[1];
    w.alphas(static_cast<Eigen::Index>(i), 3) = a[2];
    w.alphas(static_cast<Eigen::Index>(i), 0) = 1.0 - a.sum();
  }

  // M matrix and its null space
  Eigen::MatrixXd m(2 * static_cast<Eigen::Index>(n), 12);
  for (size_t i = 0; i < n; ++i) {
    const double u = corr[i].pixel.x();
    const double v = corr[i].pixel.y();
    for (int j = 0; j < 4; ++j) {
      const double a = w.alphas(static_cast<Eigen::Index>(i), j);
      m(2 * static_cast<Eigen::Index>(i), 3 * j) = a * k.fx;
      m(2 * static_cast<Eigen::Index>(i), 3 * j + 1) = 0.0;
      m(2 * static_cast<Eigen::Index>(i), 3 * j + 2) = a * (k.cx - u);
      m(2 * static_cast<Eigen::Index>(i) + 1, 3 * j) = 0.0;
      m(2 * static_cast<Eigen::Index>(i) + 1, 3 * j + 1) = a * k.fy;
      m(2 * static_cast<Eigen::Index>(i) + 1, 3 * j + 2) = a * (k.cy - v);
    }
  }
  const Eigen::Matrix<double, 12, 12> mtm = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> meig(mtm);
  for (int i = 0; i < 4; ++i) w.nullv.col(i) = meig.eigenvectors().col(i);

  // distance constraints between control points
  int pair = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j, ++pair) {
      w.rho[pair] = (w.cw.col(i) - w.cw.col(j)).squaredNorm();
      Eigen::Matrix<double, 3, 4> dv;
      for (int b = 0; b < 4; ++b) {
        dv.col(b) = w.nullv.block<3, 1>(3 * i, b) - w.nullv.block<3, 1>(3 * j, b);
      }
      int col = 0;
      for (int bj = 0; bj < 4; ++bj) {
        for (int bi = 0; bi <= bj; ++bi, ++col) {
          const double dot = dv.col(bi).dot(dv.col(bj));
          w.L(pair, col) = bi == bj ? dot : 2.0 * dot;
        }
      }
    }
  }

  const Eigen::Vector4d candidates[3] = {betas_case1(w), betas_case2(w),
                                         betas_case3(w)};
  RigidTransform best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const Eigen::Vector4d& b0 : candidates) {
    if (!b0.allFinite()) continue;
    const Eigen::Vector4d b = refine_betas(w, b0);
    if (!b.allFinite()) continue;
    const Eigen::Matrix3Xd pcs = camera_points(w, b);
    const RigidTransform t = align_frames(corr, pcs);
    const double cost = reprojection_cost(t, corr, k);
    if (cost < best_cost) {
      best_cost = cost;
      best = t;
    }
  }
  if (!std::isfinite(best_cost)) {
    throw DegeneracyError("epnp: no usable beta case");
  }
  best.rotation = project_to_so3(best.rotation);
  return best;
}

// ---------------------------------------------------------------------------
// Gauss-Newton refinement
// ---------------------------------------------------------------------------

RefineResult refine(const RigidTransform& t0,
                    std::span<const Correspondence> corr, const Intrinsics& k,
                    int max_iters) {
  RefineResult result;
  result.pose = t0;
  result.initial_cost = reprojection_cost(t0, corr, k);
  result.cost_trace.push_back(result.initial_cost);

  double cost = result.initial_cost;
  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const Correspondence& c : corr) {
      const Eigen::Vector3d q = result.pose * c.point;
      if (q.z() <= 1e-9) continue;
      const double iz = 1.0 / q.z();
      Eigen::Matrix<double, 2, 3> d_px;
      d_px << k.fx * iz, 0, -k.fx * q.x() * iz * iz,
              0, k.fy * iz, -k.fy * q.y() * iz * iz;
      // q = exp(dw) R p + t + dt  =>  dq/dt = I, dq/dw = -[q - t]x
      const Eigen::Vector3d rp = q - result.pose.translation;
      Eigen::Matrix3d rp_skew;
      rp_skew << 0, -rp.z(), rp.y(),
                 rp.z(), 0, -rp.x(),
                 -rp.y(), rp.x(), 0;
      Eigen::Matrix<double, 2, 6> jac;
      jac.leftCols<3>() = d_px;
      jac.rightCols<3>() = -d_px * rp_skew;
      const Eigen::Vector2d residual(
          k.fx * q.x() * iz + k.cx - c.pixel.x(),
          k.fy * q.y() * iz + k.cy - c.pixel.y());
      jtj += c.weight * jac.transpose() * jac;
      jtr += c.weight * jac.transpose() * residual;
    }

    Eigen::Matrix<double, 6, 1> step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    if (step.norm() < 1e-10) {
      result.converged = true;
      break;
    }

    // step-halving backtracking keeps the accepted cost non-increasing
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      RigidTransform trial;
      trial.rotation = rodrigues(step.tail<3>()) * result.pose.rotation;
      trial.translation = result.pose.translation + step.head<3>();
      const double trial_cost = reprojection_cost(trial, corr, k);
      if (trial_cost <= cost) {
        result.pose = trial;
        cost = trial_cost;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++result.iterations;
    if (!accepted) {
      result.converged = true;  // local minimum within step resolution
      break;
    }
    result.cost_trace.push_back(cost);
  }
  result.pose.rotation = project_to_so3(result.pose.rotation);
  result.final_cost = reprojection_cost(result.pose, corr, k);
  return result;
}

// ---------------------------------------------------------------------------
// RANSAC
// ---------------------------------------------------------------------------

RansacResult ransac_pnp(std::span<const Correspondence> corr,
                        const Intrinsics& k, double threshold_px, int iters,
                        Rng& rng) {
  const size_t n = corr.size();
  if (n < 6) throw ConfigError("ransac_pnp: need at least 6 correspondences");
  if (iters < 1) throw ConfigError("ransac_pnp: iters must be positive");

  constexpr size_t kSubset = 6;
  // pre-drawn hypothesis subsets keep the result independent of evaluation
  // order
  std::vector<std::vector<size_t>> subsets(static_cast<size_t>(iters));
  std::vector<size_t> indices(n);
  for (auto& subset : subsets) {
    std::iota(indices.begin(), indices.end(), size_t{0});
    subset.resize(kSubset);
    for (size_t j = 0; j < kSubset; ++j) {
      const size_t pick = j + rng.uniform_index(n - j);
      std::swap(indices[j], indices[pick]);
      subset[j] = indices[j];
    }
  }

  const double thr2 = threshold_px * threshold_px;
  auto count_inliers = [&](const RigidTransform& t, std::vector<bool>& mask) {
    mask.assign(n, false);
    int count = 0;
    for (size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d q = t * corr[i].point;
      if (q.z() <= 1e-9) continue;
      const double du = k.fx * q.x() / q.z() + k.cx - corr[i].pixel.x();
      const double dv = k.fy * q.y() / q.z() + k.cy - corr[i].pixel.y();
      if (du * du + dv * dv < thr2) {
        mask[i] = true;
        ++count;
      }
    }
    return count;
  };

  RansacResult best;
  std::vector<bool> mask;
  std::vector<Correspondence> subset_corr(kSubset);
  for (const auto& subset : subsets) {
    for (size_t j = 0; j < kSubset; ++j) subset_corr[j] = corr[subset[j]];
    RigidTransform hypothesis;
    try {
      hypothesis = epnp(subset_corr, k);
    } catch (const DegeneracyError&) {
      continue;
    }
    const int count = count_inliers(hypothesis, mask);
    if (count > best.inlier_count) {
      best.inlier_count = count;
      best.inliers = mask;
      best.pose = hypothesis;
    }
  }

  if (best.inlier_count < 6) {
    throw DegeneracyError("ransac_pnp: no consensus (best inlier count " +
                          std::to_string(best.inlier_count) + ")");
  }

  std::vector<Correspondence> inlier_corr;
  inlier_corr.reserve(static_cast<size_t>(best.inlier_count));
  for (size_t i = 0; i < n; ++i) {
    if (best.inliers[i]) inlier_corr.push_back(corr[i]);
  }
  best.pose = refine(best.pose, inlier_corr, k).pose;
  return best;
}

// ---------------------------------------------------------------------------
// Text interchange
// ---------------------------------------------------------------------------

std::vector<Correspondence> read_correspondences(
    const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Correspondence> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Correspondence c;
    if (!(ls >> c.point.x() >> c.point.y() >> c.point.z() >> c.pixel.x() >>
          c.pixel.y())) {
      throw DataError("bad correspondence at " + path.string() + ":" +
                      std::to_string(lineno));
    }
    if (!(ls >> c.weight)) c.weight = 1.0;
    out.push_back(c);
  }
  return out;
}

void write_correspondences(const std::filesystem::path& path,
                           std::span<const Correspondence> corr) {
  std::string out;
  char buf[256];
  for (const Correspondence& c : corr) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g\n",
                  c.point.x(), c.point.y(), c.point.z(), c.pixel.x(),
                  c.pixel.y(), c.weight);
    out += buf;
  }
  write_file_atomic(path, out);
}

}  // namespace calibprobe
