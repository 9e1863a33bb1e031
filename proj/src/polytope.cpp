#include "flatnn/polytope.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace flatnn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Enumerate index subsets of size <= max_size from {0, ..., n-1}.
template <typename F>
void for_each_subset(int n, int max_size, F&& fn) {
    std::vector<int> subset;
    fn(subset);
    std::vector<int> stack;
    auto rec = [&](auto&& self, int start, int remaining) -> void {
        if (remaining == 0) return;
        for (int i = start; i < n; ++i) {
            stack.push_back(i);
            fn(stack);
            self(self, i + 1, remaining - 1);
            stack.pop_back();
        }
    };
    rec(rec, 0, max_size);
}

}  // namespace

Vector project_onto_halfspaces(const HalfspacePolytope& poly, const Vector& x, int max_cycles,
                               double tol) {
    const std::size_t m = poly.normals.size();
    if (m == 0) return x;
    Vector y = x;
    std::vector<Vector> corrections(m, Vector::Zero(x.size()));
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        double moved = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const Vector z = y + corrections[i];
            const Vector& n = poly.normals[i];
            const double nn = n.squaredNorm();
            const double viol = n.dot(z) - poly.offsets[i];
            Vector projected = z;
            if (viol > 0 && nn > 0) projected -= (viol / nn) * n;
            corrections[i] = z - projected;
            moved += (projected - y).cwiseAbs().maxCoeff();
            y = projected;
        }
        if (moved < tol) break;
    }
    return y;
}

double dist_point_halfspaces(const HalfspacePolytope& poly, const Vector& p) {
    if (poly.empty_flag) return kInf;
    return (project_onto_halfspaces(poly, p) - p).norm();
}

double dist_box_halfspaces(const Box& box, const HalfspacePolytope& poly, int max_iters,
                           double tol) {
    if (poly.empty_flag) return kInf;
    Vector x = box.center();
    Vector y = x;
    double prev = kInf;
    for (int it = 0; it < max_iters; ++it) {
        y = project_onto_halfspaces(poly, x);
        x = box.clamp(y);
        const double dist = (x - y).norm();
        if (prev - dist < tol) return dist;
        prev = dist;
    }
    return prev;
}

std::vector<const PartitionNode*> cells_near_polytope(const PartitionNode& root,
                                                      const HalfspacePolytope& poly,
                                                      double alpha) {
    if (poly.empty_flag) return {};
    return leaves_near(
        root, [&](const Box& cell) { return dist_box_halfspaces(cell, poly); }, alpha);
}

QueryPolytope QueryPolytope::from_flat(const Flat& f, const Box& bounds) {
    QueryPolytope q;
    q.anchor = f.offset;
    q.directions = f.basis;
    const int d = f.dim();
    const int k = f.k;
    q.ineq_normals = Matrix(2 * d, k);
    q.ineq_offsets = Vector(2 * d);
    for (int i = 0; i < d; ++i) {
        // lower_i <= anchor_i + row_i(D) . w <= upper_i
        q.ineq_normals.row(2 * i) = f.basis.row(i);
        q.ineq_offsets(2 * i) = bounds.upper(i) - f.offset(i);
        q.ineq_normals.row(2 * i + 1) = -f.basis.row(i);
        q.ineq_offsets(2 * i + 1) = f.offset(i) - bounds.lower(i);
    }
    return q;
}

QueryPolytope QueryPolytope::with_halfspace(const Vector& normal, double offset) const {
    QueryPolytope q = *this;
    const int m = halfspace_count();
    q.ineq_normals.conservativeResize(m + 1, Eigen::NoChange);
    q.ineq_offsets.conservativeResize(m + 1);
    q.ineq_normals.row(m) = (directions.transpose() * normal).transpose();
    q.ineq_offsets(m) = offset - normal.dot(anchor);
    return q;
}

QueryPolytope QueryPolytope::clipped_to_slab(const Hyperplane& h, double half_width) const {
    return with_halfspace(h.normal, h.offset + half_width)
        .with_halfspace(-h.normal, -(h.offset - half_width));
}

QueryPolytope QueryPolytope::projected_to_frame(const Matrix& frame,
                                                const Vector& origin_on_plane) const {
    QueryPolytope q;
    // pi(x) = x - (<n,x> - o) n; frame^T kills the normal component, so the
    // new coordinates are frame^T (x - origin).
    q.anchor = frame.transpose() * (anchor - origin_on_plane);
    q.directions = frame.transpose() * directions;
    q.ineq_normals = ineq_normals;
    q.ineq_offsets = ineq_offsets;
    return q;
}

QueryPolytope QueryPolytope::projected_prefix(int j) const {
    QueryPolytope q;
    q.anchor = anchor.head(j);
    q.directions = directions.topRows(j);
    q.ineq_normals = ineq_normals;
    q.ineq_offsets = ineq_offsets;
    return q;
}

namespace detail {

std::optional<std::pair<double, double>> constraint_interval(const Matrix& normals,
                                                             const Vector& offsets, double tol) {
    double lo = -kInf, hi = kInf;
    for (Eigen::Index i = 0; i < offsets.size(); ++i) {
        const double a = normals(i, 0), b = offsets(i);
        if (std::abs(a) <= tol) {
            if (b < -tol) return std::nullopt;
            continue;
        }
        if (a > 0) {
            hi = std::min(hi, b / a);
        } else {
            lo = std::max(lo, b / a);
        }
    }
    if (lo > hi + tol) return std::nullopt;
    return std::make_pair(lo, std::max(hi, lo));
}

}  // namespace detail

std::optional<Vector> QueryPolytope::feasible_param(double tol) const {
    const int k = intrinsic_dim();
    if (k == 0) {
        for (Eigen::Index i = 0; i < ineq_offsets.size(); ++i) {
            if (ineq_offsets(i) < -tol) return std::nullopt;
        }
        return Vector(0);
    }
    if (k == 1) {
        auto iv = detail::constraint_interval(ineq_normals, ineq_offsets);
        if (!iv) return std::nullopt;
        Vector w(1);
        double v = 0.0;
        if (v < iv->first) v = iv->first;
        if (v > iv->second) v = iv->second;
        w(0) = v;
        return w;
    }
    // Minimize the smooth convex penalty sum max(0, a.w - b)^2 by gradient
    // descent with backtracking; feasible iff the minimum is ~0.
    Vector w = Vector::Zero(k);
    auto penalty = [&](const Vector& x, Vector* grad) {
        double f = 0.0;
        if (grad) grad->setZero();
        const Vector r = ineq_normals * x - ineq_offsets;
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            if (r(i) > 0) {
                f += r(i) * r(i);
                if (grad) *grad += 2.0 * r(i) * ineq_normals.row(i).transpose();
            }
        }
        return f;
    };
    Vector grad(k);
    double f = penalty(w, &grad);
    double step = 1.0;
    for (int it = 0; it < 500 && f > tol * tol; ++it) {
        const Vector dir = -grad;
        double t = step;
        for (int ls = 0; ls < 40; ++ls) {
            const Vector cand = w + t * dir;
            const double fc = penalty(cand, nullptr);
            if (fc <= f - 0.25 * t * grad.squaredNorm()) {
                w = cand;
                f = fc;
                step = t * 2.0;
                break;
            }
            t *= 0.5;
        }
        f = penalty(w, &grad);
        if (grad.norm() < 1e-14) break;
    }
    const Vector r = ineq_normals * w - ineq_offsets;
    if (r.size() > 0 && r.maxCoeff() > tol) return std::nullopt;
    return w;
}

namespace {

// Exact minimizer of ||rhs - D w||^2 over {A w <= b} by KKT active-set
// enumeration (subsets of <= k constraints), polished by projected gradient
// when the enumeration would be too large. Returns the optimal squared
// distance, or +inf if infeasible.
double min_dist_sq_param(const Matrix& d_mat, const Vector& rhs, const Matrix& a_mat,
                         const Vector& b_vec, const std::optional<Vector>& feasible) {
    if (!feasible) return kInf;
    const int k = static_cast<int>(d_mat.cols());
    if (k == 0) return rhs.squaredNorm();

    if (k == 1) {
        auto iv = detail::constraint_interval(a_mat, b_vec);
        if (!iv) return kInf;
        const double dd = d_mat.col(0).squaredNorm();
        double w = dd > 0 ? d_mat.col(0).dot(rhs) / dd : 0.0;
        w = std::clamp(w, iv->first, iv->second);
        return (rhs - d_mat.col(0) * w).squaredNorm();
    }

    const int m = static_cast<int>(b_vec.size());
    const Matrix gram = d_mat.transpose() * d_mat;
    const Vector lin = d_mat.transpose() * rhs;
    double best = kInf;
    Vector best_w = *feasible;

    auto consider = [&](const Vector& w) {
        const Vector r = a_mat * w - b_vec;
        if (r.size() > 0 && r.maxCoeff() > 1e-9) return;
        const double val = (rhs - d_mat * w).squaredNorm();
        if (val < best) {
            best = val;
            best_w = w;
        }
    };

    // C(m, <= k) stays small for the low-dimensional queries this engine
    // serves; above the cap only the gradient polish below runs.
    double combos = 1.0;
    for (int i = 0; i < k; ++i) combos *= std::max(1, m - i);
    if (combos <= 5e4) {
        for_each_subset(m, k, [&](const std::vector<int>& subset) {
            const int s = static_cast<int>(subset.size());
            Matrix kkt(k + s, k + s);
            kkt.setZero();
            kkt.topLeftCorner(k, k) = 2.0 * gram;
            Vector rhs_kkt(k + s);
            rhs_kkt.head(k) = 2.0 * lin;
            for (int i = 0; i < s; ++i) {
                kkt.block(k + i, 0, 1, k) = a_mat.row(subset[i]);
                kkt.block(0, k + i, k, 1) = a_mat.row(subset[i]).transpose();
                rhs_kkt(k + i) = b_vec(subset[i]);
            }
            const Vector sol = kkt.colPivHouseholderQr().solve(rhs_kkt);
            if (sol.allFinite()) consider(sol.head(k));
        });
    }

    // Projected-gradient polish from the best candidate (or a feasible point).
    const double lip = 2.0 * std::max(1e-12, gram.trace());
    HalfspacePolytope constraints;
    for (int i = 0; i < m; ++i) constraints.add(a_mat.row(i).transpose(), b_vec(i));
    Vector w = best_w;
    for (int it = 0; it < 200; ++it) {
        const Vector grad = 2.0 * (gram * w - lin);
        const Vector next = project_onto_halfspaces(constraints, w - grad / lip);
        if ((next - w).cwiseAbs().maxCoeff() < 1e-13) break;
        w = next;
    }
    consider(w);
    return best;
}

}  // namespace

double QueryPolytope::dist_point(const Vector& p) const {
    const double sq =
        min_dist_sq_param(directions, Vector(p - anchor), ineq_normals, ineq_offsets,
                          feasible_param());
    return std::isinf(sq) ? kInf : std::sqrt(std::max(0.0, sq));
}

double QueryPolytope::dist_point_l1(const Vector& p) const {
    const auto feasible = feasible_param();
    if (!feasible) return kInf;
    const int k = intrinsic_dim();
    const Vector rhs = p - anchor;
    if (k == 0) return rhs.lpNorm<1>();

    auto objective = [&](const Vector& w) { return (rhs - directions * w).lpNorm<1>(); };

    if (k == 1) {
        auto iv = detail::constraint_interval(ineq_normals, ineq_offsets);
        if (!iv) return kInf;
        // Piecewise-linear in w: evaluate at every residual breakpoint and at
        // the interval ends.
        std::vector<double> candidates;
        if (std::isfinite(iv->first)) candidates.push_back(iv->first);
        if (std::isfinite(iv->second)) candidates.push_back(iv->second);
        for (Eigen::Index i = 0; i < rhs.size(); ++i) {
            const double d = directions(i, 0);
            if (std::abs(d) > 1e-14) {
                const double w = rhs(i) / d;
                if (w >= iv->first - 1e-12 && w <= iv->second + 1e-12) {
                    candidates.push_back(std::clamp(w, iv->first, iv->second));
                }
            }
        }
        if (candidates.empty()) candidates.push_back(0.0);
        double best = kInf;
        Vector w(1);
        for (double c : candidates) {
            w(0) = c;
            best = std::min(best, objective(w));
        }
        return best;
    }

    // The optimum of this LP sits where k hyperplanes from {residual_i = 0}
    // u {constraints} are active: enumerate k-subsets, solve, keep feasible.
    const int m = halfspace_count();
    const int amb = ambient_dim();
    const int total = m + amb;
    Matrix planes(total, k);
    Vector values(total);
    planes.topRows(m) = ineq_normals;
    values.head(m) = ineq_offsets;
    planes.bottomRows(amb) = directions;
    values.tail(amb) = rhs;

    double best = objective(*feasible);
    for_each_subset(total, k, [&](const std::vector<int>& subset) {
        if (static_cast<int>(subset.size()) != k) return;
        Matrix sys(k, k);
        Vector sys_rhs(k);
        for (int i = 0; i < k; ++i) {
            sys.row(i) = planes.row(subset[i]);
            sys_rhs(i) = values(subset[i]);
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(sys);
        if (qr.rank() < k) return;
        const Vector w = qr.solve(sys_rhs);
        if (!w.allFinite()) return;
        const Vector viol = ineq_normals * w - ineq_offsets;
        if (viol.size() > 0 && viol.maxCoeff() > 1e-9) return;
        best = std::min(best, objective(w));
    });
    return best;
}

double QueryPolytope::dist_box(const Box& box, int max_iters, double tol) const {
    const auto feasible = feasible_param();
    if (!feasible) return kInf;
    const int k = intrinsic_dim();

    Vector w = *feasible;
    Vector x = box.clamp(at(w));
    if (k == 0) return (x - anchor).norm();

    if (k == 1) {
        auto iv = detail::constraint_interval(ineq_normals, ineq_offsets);
        const double dd = directions.col(0).squaredNorm();
        double prev = kInf;
        for (int it = 0; it < max_iters; ++it) {
            // Exact alternating block minimization; both blocks are closed form.
            double wv = dd > 0 ? directions.col(0).dot(x - anchor) / dd : 0.0;
            wv = std::clamp(wv, iv->first, iv->second);
            w(0) = wv;
            x = box.clamp(at(w));
            const double dist = (x - at(w)).norm();
            if (prev - dist < tol) break;
            prev = dist;
        }
        return (x - at(w)).norm();
    }

    // Joint projected gradient on (x, w); x-projection is a clamp, w-projection
    // is Dykstra onto the parameter constraints.
    HalfspacePolytope constraints;
    for (int i = 0; i < halfspace_count(); ++i) {
        constraints.add(ineq_normals.row(i).transpose(), ineq_offsets(i));
    }
    const double lip = 2.0 * (1.0 + directions.squaredNorm());
    double prev = kInf;
    for (int it = 0; it < std::max(max_iters, 300); ++it) {
        const Vector r = x - at(w);
        const Vector gx = 2.0 * r;
        const Vector gw = -2.0 * directions.transpose() * r;
        x = box.clamp(x - gx / lip);
        w = project_onto_halfspaces(constraints, w - gw / lip, 60);
        const double dist = (x - at(w)).norm();
        if (it > 10 && prev - dist < tol) break;
        prev = dist;
    }
    return (x - at(w)).norm();
}

}  // namespace flatnn
