#pragma once

#include "flatnn/types.hpp"

#include <span>
#include <vector>

namespace flatnn {

/// A k-dimensional affine subspace of R^d, stored as an orthonormal basis for
/// its direction space plus an offset orthogonal to that space. k = 0 is a
/// single point (empty basis, offset = the point).
struct Flat {
    int k = 0;
    Matrix basis;   // d x k, orthonormal columns
    Vector offset;  // length d, basis^T * offset = 0

    int dim() const { return static_cast<int>(offset.size()); }

    // Point of the flat with parameter u (length k).
    Vector at(const Vector& u) const { return basis * u + offset; }

    // Parameter coordinates of the projection of p onto the flat.
    Vector coords(const Vector& p) const { return basis.transpose() * p; }

    Vector project(const Vector& p) const { return basis * coords(p) + offset; }
};

/// Joint frame of two k-flats K and F after aligning both bases with the SVD
/// of basis_K^T basis_F. The singular values are the cosines of the principal
/// angles; in the rotated bases, distances between the flats decompose
/// coordinate-wise as d(Bv+b, K)^2 = sum_i (1-s_i^2) (v - v_K)_i^2 + dist_KF^2.
struct FlatPairFrame {
    Vector singular_values;  // descending, in [0, 1]
    Matrix basis_K;          // d x k, A = A' U
    Matrix basis_F;          // d x k, B = B' V
    Vector offset_K;         // a
    Vector offset_F;         // b
    Vector u_F;              // coords on K of the point of K closest to F
    Vector v_K;              // coords on F of the point of F closest to K
    double dist_KF = 0.0;    // d(K, F)
};

struct SmallSvd {
    Matrix U;
    Vector sigma;  // descending, nonnegative
    Matrix V;
};

/// Orthonormalize the columns of M by modified Gram-Schmidt with one
/// re-orthogonalization pass. Columns whose residual norm falls below
/// 1e-12 * input scale are dropped as dependent.
Matrix orthonormalize_columns(const Matrix& m);

/// Affine hull of k+1 affinely independent points. Throws DegenerateInput if
/// the points span fewer than k dimensions.
Flat flat_from_points(std::span<const Vector> points);
Flat flat_from_points(const std::vector<Vector>& points);

/// Affine hull from the columns of a d x (k+1) generator matrix.
Flat flat_from_generators(const Matrix& generators);

double dist_point_flat(const Vector& p, const Flat& f);

/// SVD of a small (k <= 16) square matrix by cyclic two-sided Jacobi.
/// Off-diagonal threshold 1e-14 relative; throws NoConvergence after 64
/// sweeps. Singular values are returned in descending order with U, V
/// permuted jointly.
SmallSvd svd_small(const Matrix& m);

/// Align two k-flats: SVD of basis_K^T basis_F, rotated bases, and the
/// closest pair of points between the flats (any minimizer when the flats
/// share directions; a 1e-12 ridge keeps the system solvable).
FlatPairFrame align_flats(const Flat& K, const Flat& F);

}  // namespace flatnn
