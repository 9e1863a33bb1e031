#include "flatnn/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flatnn {

namespace {

constexpr double kDependentTol = 1e-12;
constexpr double kJacobiTol = 1e-14;
constexpr int kJacobiMaxSweeps = 64;

}  // namespace

Matrix orthonormalize_columns(const Matrix& m) {
    const double scale = std::max(1.0, m.size() > 0 ? m.cwiseAbs().maxCoeff() : 0.0);
    Matrix q(m.rows(), m.cols());
    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        Vector v = m.col(j);
        // Two MGS passes; the second pass mops up the rounding left by the first.
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index i = 0; i < kept; ++i) {
                v -= q.col(i).dot(v) * q.col(i);
            }
        }
        const double norm = v.norm();
        if (norm < kDependentTol * scale) continue;
        q.col(kept++) = v / norm;
    }
    return q.leftCols(kept);
}

Flat flat_from_points(std::span<const Vector> points) {
    if (points.empty()) throw EmptyInput("flat_from_points: no points");
    const Eigen::Index d = points[0].size();
    const int k = static_cast<int>(points.size()) - 1;
    Matrix diffs(d, k);
    for (int i = 0; i < k; ++i) {
        if (points[i + 1].size() != d) {
            throw DimensionMismatch("flat_from_points: mixed dimensions");
        }
        diffs.col(i) = points[i + 1] - points[0];
    }
    Matrix basis = orthonormalize_columns(diffs);
    if (basis.cols() != k) {
        throw DegenerateInput("flat_from_points: points are affinely dependent");
    }
    Flat f;
    f.k = k;
    f.basis = std::move(basis);
    f.offset = points[0] - f.basis * (f.basis.transpose() * points[0]);
    return f;
}

Flat flat_from_points(const std::vector<Vector>& points) {
    return flat_from_points(std::span<const Vector>(points.data(), points.size()));
}

Flat flat_from_generators(const Matrix& generators) {
    std::vector<Vector> pts(static_cast<std::size_t>(generators.cols()));
    for (Eigen::Index j = 0; j < generators.cols(); ++j) pts[static_cast<std::size_t>(j)] = generators.col(j);
    return flat_from_points(pts);
}

double dist_point_flat(const Vector& p, const Flat& f) {
    if (p.size() != f.offset.size()) {
        throw DimensionMismatch("dist_point_flat: dimension mismatch");
    }
    if (f.k == 0) return (p - f.offset).norm();
    const Vector r = p - f.offset;
    return (r - f.basis * (f.basis.transpose() * r)).norm();
}

namespace {

// One Kogbetliantz step: returns rotations (cl, sl), (cr, sr) such that
// applying them on the left/right zeroes the (p,q) and (q,p) entries of the
// 2x2 block [[app, apq], [aqp, aqq]].
struct JacobiRotations {
    double cl, sl, cr, sr;
};

JacobiRotations two_sided_rotations(double app, double apq, double aqp, double aqq) {
    // Symmetrize with a left rotation, then diagonalize the symmetric block.
    const double theta = std::atan2(aqp - apq, app + aqq);
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double b_pp = cs * app + sn * aqp;
    const double b_pq = cs * apq + sn * aqq;
    const double b_qq = -sn * apq + cs * aqq;
    // Jacobi angle for the symmetric matrix [[b_pp, b_pq], [b_pq, b_qq]].
    double c2, s2;
    if (std::abs(b_pq) < 1e-300) {
        c2 = 1.0;
        s2 = 0.0;
    } else {
        const double tau = (b_pp - b_qq) / (2.0 * b_pq);
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        c2 = 1.0 / std::sqrt(1.0 + t * t);
        s2 = t * c2;
    }
    JacobiRotations r;
    // Left rotation = symmetrizer composed with the Jacobi rotation.
    r.cl = cs * c2 - sn * s2;
    r.sl = sn * c2 + cs * s2;
    r.cr = c2;
    r.sr = s2;
    return r;
}

}  // namespace

SmallSvd svd_small(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("svd_small: matrix must be square");
    const Eigen::Index k = m.rows();
    if (k > 16) throw InvalidParams("svd_small: k > 16");

    Matrix a = m;
    Matrix u = Matrix::Identity(k, k);
    Matrix v = Matrix::Identity(k, k);
    const double scale = std::max(1.0, k > 0 ? m.cwiseAbs().maxCoeff() : 0.0);

    if (k > 1) {
        int sweep = 0;
        for (;; ++sweep) {
            if (sweep >= kJacobiMaxSweeps) {
                throw NoConvergence("svd_small: Jacobi did not converge in 64 sweeps");
            }
            double off = 0.0;
            for (Eigen::Index p = 0; p < k; ++p)
                for (Eigen::Index q = 0; q < k; ++q)
                    if (p != q) off = std::max(off, std::abs(a(p, q)));
            if (off <= kJacobiTol * scale) break;
            for (Eigen::Index p = 0; p < k - 1; ++p) {
                for (Eigen::Index q = p + 1; q < k; ++q) {
                    if (std::abs(a(p, q)) <= kJacobiTol * scale &&
                        std::abs(a(q, p)) <= kJacobiTol * scale) {
                        continue;
                    }
                    const auto r = two_sided_rotations(a(p, p), a(p, q), a(q, p), a(q, q));
                    // a <- J_l^T a J_r, accumulating u <- u J_l, v <- v J_r.
                    for (Eigen::Index j = 0; j < k; ++j) {
                        const double x = a(p, j), y = a(q, j);
                        a(p, j) = r.cl * x + r.sl * y;
                        a(q, j) = -r.sl * x + r.cl * y;
                    }
                    for (Eigen::Index i = 0; i < k; ++i) {
                        const double x = a(i, p), y = a(i, q);
                        a(i, p) = r.cr * x + r.sr * y;
                        a(i, q) = -r.sr * x + r.cr * y;
                        const double ux = u(i, p), uy = u(i, q);
                        u(i, p) = r.cl * ux + r.sl * uy;
                        u(i, q) = -r.sl * ux + r.cl * uy;
                        const double vx = v(i, p), vy = v(i, q);
                        v(i, p) = r.cr * vx + r.sr * vy;
                        v(i, q) = -r.sr * vx + r.cr * vy;
                    }
                }
            }
        }
    }

    SmallSvd out;
    out.sigma = Vector(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        double s = a(i, i);
        if (s < 0) {
            s = -s;
            u.col(i) = -u.col(i);
        }
        out.sigma(i) = s;
    }
    // Descending order, permuting U and V jointly.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
        return out.sigma(i) > out.sigma(j);
    });
    Matrix up(k, k), vp(k, k);
    Vector sp(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        up.col(i) = u.col(order[static_cast<std::size_t>(i)]);
        vp.col(i) = v.col(order[static_cast<std::size_t>(i)]);
        sp(i) = out.sigma(order[static_cast<std::size_t>(i)]);
    }
    out.U = std::move(up);
    out.V = std::move(vp);
    out.sigma = std::move(sp);
    return out;
}

FlatPairFrame align_flats(const Flat& K, const Flat& F) {
    if (K.dim() != F.dim()) throw DimensionMismatch("align_flats: ambient dimensions differ");
    if (K.k != F.k) throw DimensionMismatch("align_flats: flats must have equal dimension");
    const int k = K.k;

    FlatPairFrame frame;
    frame.offset_K = K.offset;
    frame.offset_F = F.offset;

    if (k == 0) {
        frame.singular_values = Vector(0);
        frame.basis_K = Matrix(K.dim(), 0);
        frame.basis_F = Matrix(F.dim(), 0);
        frame.u_F = Vector(0);
        frame.v_K = Vector(0);
        frame.dist_KF = (K.offset - F.offset).norm();
        return frame;
    }

    const Matrix m = K.basis.transpose() * F.basis;
    SmallSvd svd = svd_small(m);
    frame.singular_values = svd.sigma.cwiseMin(1.0);  // Lemma 4.2: s_1 <= 1
    frame.basis_K = K.basis * svd.U;
    frame.basis_F = F.basis * svd.V;

    // Closest pair: min over (u, v) of ||(A u + a) - (B v + b)||. In the
    // rotated bases the normal equations block-diagonalize into 2x2 systems
    // [[1, -s_i], [-s_i, 1]]. Shared directions (s_i = 1) make the block
    // singular; only there a small ridge picks one of the minimizers, which
    // all carry zero distance weight.
    const Vector rhs = F.offset - K.offset;
    const Vector au = frame.basis_K.transpose() * rhs;   // A^T (b - a)
    const Vector bu = frame.basis_F.transpose() * rhs;   // B^T (b - a)
    frame.u_F = Vector(k);
    frame.v_K = Vector(k);
    for (int i = 0; i < k; ++i) {
        const double s = frame.singular_values(i);
        const double ridge = 1.0 - s * s > 1e-9 ? 0.0 : 1e-12;
        const double a11 = 1.0 + ridge, a12 = -s, a22 = 1.0 + ridge;
        const double det = a11 * a22 - a12 * a12;
        const double r1 = au(i), r2 = -bu(i);
        frame.u_F(i) = (a22 * r1 - a12 * r2) / det;
        frame.v_K(i) = (a11 * r2 - a12 * r1) / det;
    }
    const Vector closest_on_K = frame.basis_K * frame.u_F + K.offset;
    const Vector closest_on_F = frame.basis_F * frame.v_K + F.offset;
    frame.dist_KF = (closest_on_K - closest_on_F).norm();
    return frame;
}

}  // namespace flatnn
