#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flatnn/polytope.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace flatnn;
using namespace flatnn::testing;

namespace {

Box unit_box(int d) {
    Box b;
    b.lower = Vector::Zero(d);
    b.upper = Vector::Ones(d);
    return b;
}

// Brute-force distance from p to {anchor + D w : A w <= b} over a parameter
// grid (k = 1 or 2 only).
double grid_dist_point(const QueryPolytope& q, const Vector& p, double span, int steps,
                       int norm_p = 2) {
    double best = std::numeric_limits<double>::infinity();
    const int k = q.intrinsic_dim();
    Vector w(k);
    auto eval = [&]() {
        const Vector viol = q.ineq_normals * w - q.ineq_offsets;
        if (viol.size() > 0 && viol.maxCoeff() > 1e-9) return;
        const Vector r = p - q.at(w);
        best = std::min(best, norm_p == 1 ? r.lpNorm<1>() : r.norm());
    };
    if (k == 1) {
        for (int i = 0; i <= steps; ++i) {
            w(0) = -span + 2 * span * i / steps;
            eval();
        }
    } else {
        for (int i = 0; i <= steps; ++i)
            for (int j = 0; j <= steps; ++j) {
                w(0) = -span + 2 * span * i / steps;
                w(1) = -span + 2 * span * j / steps;
                eval();
            }
    }
    return best;
}

}  // namespace

TEST_CASE("halfspace projection: exact on a quadrant") {
    HalfspacePolytope poly;
    poly.add(Vector::Unit(2, 0), 0.0);   // x <= 0
    poly.add(Vector::Unit(2, 1), 0.0);   // y <= 0
    Vector p(2);
    p << 3.0, 4.0;
    const Vector proj = project_onto_halfspaces(poly, p);
    CHECK(proj.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(dist_point_halfspaces(poly, p) == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("dist_box_halfspaces: separated slab") {
    Box box = unit_box(2);
    HalfspacePolytope poly;  // { x >= 3 }
    poly.add(-Vector::Unit(2, 0), -3.0);
    CHECK(dist_box_halfspaces(box, poly) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("dist_box_halfspaces: intersecting sets have distance zero") {
    Box box = unit_box(3);
    HalfspacePolytope poly;
    poly.add(Vector::Ones(3), 1.5);
    CHECK(dist_box_halfspaces(box, poly) < 1e-9);
}

TEST_CASE("QueryPolytope: from_flat clips to the box") {
    Flat line;
    line.k = 1;
    line.basis = Matrix(2, 1);
    line.basis << 1, 0;
    line.offset = Vector(2);
    line.offset << 0, 0.5;
    auto q = QueryPolytope::from_flat(line, unit_box(2));
    CHECK(q.halfspace_count() == 4);
    CHECK(!q.empty());
    Vector p(2);
    p << 0.5, 0.5;
    CHECK(q.dist_point(p) < 1e-12);
    p << 2.0, 0.5;  // nearest polytope point is (1, 0.5)
    CHECK(q.dist_point(p) == doctest::Approx(1.0).epsilon(1e-9));
    p << -1.0, 1.5;  // nearest is (0, 0.5)
    CHECK(q.dist_point(p) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("QueryPolytope: emptiness after disjoint slabs") {
    Flat line;
    line.k = 1;
    line.basis = Matrix(2, 1);
    line.basis << 1, 0;
    line.offset = Vector(2);
    line.offset << 0, 0.5;
    auto q = QueryPolytope::from_flat(line, unit_box(2));
    auto clipped = q.with_halfspace(Vector::Unit(2, 0), -1.0);  // x <= -1
    CHECK(clipped.empty());
    CHECK(std::isinf(clipped.dist_point(Vector::Zero(2))));
}

TEST_CASE("QueryPolytope: point distances match grid brute force (k=1)") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 20; ++t) {
        Flat f = random_flat(rng, 3, 1);
        Box box;
        box.lower = -2.0 * Vector::Ones(3);
        box.upper = 2.0 * Vector::Ones(3);
        auto q = QueryPolytope::from_flat(f, box);
        if (q.empty()) continue;
        const Vector p = random_vector(rng, 3, 1.5);
        const double exact = q.dist_point(p);
        const double grid = grid_dist_point(q, p, 6.0, 60000);
        CHECK(exact <= grid + 1e-9);
        CHECK(grid - exact < 1e-3);

        const double exact_l1 = q.dist_point_l1(p);
        const double grid_l1 = grid_dist_point(q, p, 6.0, 60000, 1);
        CHECK(exact_l1 <= grid_l1 + 1e-9);
        CHECK(grid_l1 - exact_l1 < 1e-3);
        CHECK(exact <= exact_l1 + 1e-12);  // l2 <= l1
    }
}

TEST_CASE("QueryPolytope: point distances match grid brute force (k=2)") {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 8; ++t) {
        Flat f = random_flat(rng, 4, 2);
        Box box;
        box.lower = -2.0 * Vector::Ones(4);
        box.upper = 2.0 * Vector::Ones(4);
        auto q = QueryPolytope::from_flat(f, box);
        if (q.empty()) continue;
        const Vector p = random_vector(rng, 4, 1.5);
        const double exact = q.dist_point(p);
        const double grid = grid_dist_point(q, p, 5.0, 700);
        CHECK(exact <= grid + 1e-9);
        CHECK(grid - exact < 2e-2);

        const double exact_l1 = q.dist_point_l1(p);
        const double grid_l1 = grid_dist_point(q, p, 5.0, 700, 1);
        CHECK(exact_l1 <= grid_l1 + 1e-9);
        CHECK(grid_l1 - exact_l1 < 4e-2);
    }
}

TEST_CASE("QueryPolytope: slab clipping and hyperplane projection") {
    std::mt19937_64 rng(25);
    Flat f = random_flat(rng, 3, 1);
    Box box;
    box.lower = -3.0 * Vector::Ones(3);
    box.upper = 3.0 * Vector::Ones(3);
    auto q = QueryPolytope::from_flat(f, box);

    Vector n = random_vector(rng, 3);
    auto h = Hyperplane::through(n, 0.2);
    auto clipped = q.clipped_to_slab(h, 0.5);
    CHECK(clipped.halfspace_count() == q.halfspace_count() + 2);

    // All feasible points of the clipped polytope lie inside the slab.
    if (auto w = clipped.feasible_param()) {
        const Vector x = clipped.at(*w);
        CHECK(std::abs(h.normal.dot(x) - h.offset) <= 0.5 + 1e-9);
    }

    // Projection onto the hyperplane preserves in-plane distances.
    Matrix frame(3, 2);
    // Build an orthonormal frame orthogonal to h.normal.
    Matrix basis_candidates = Matrix::Identity(3, 3);
    Matrix full(3, 3);
    full.col(0) = h.normal;
    full.col(1) = basis_candidates.col(0);
    full.col(2) = basis_candidates.col(1);
    Matrix on = orthonormalize_columns(full);
    frame = on.rightCols(2);
    const Vector origin = h.offset * h.normal;
    auto projected = clipped.projected_to_frame(frame, origin);
    CHECK(projected.ambient_dim() == 2);

    if (auto w = clipped.feasible_param()) {
        const Vector x = clipped.at(*w);
        const Vector x_proj = x - (h.normal.dot(x) - h.offset) * h.normal;
        const Vector coords = frame.transpose() * (x_proj - origin);
        CHECK((projected.at(*w) - coords).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("QueryPolytope: dist_box agrees with sampled distances") {
    std::mt19937_64 rng(27);
    for (int t = 0; t < 10; ++t) {
        Flat f = random_flat(rng, 2, 1);
        Box bounds;
        bounds.lower = -4.0 * Vector::Ones(2);
        bounds.upper = 4.0 * Vector::Ones(2);
        auto q = QueryPolytope::from_flat(f, bounds);
        if (q.empty()) continue;
        Box cell;
        cell.lower = random_vector(rng, 2);
        cell.upper = cell.lower + Vector::Ones(2).cwiseProduct(Vector::Random(2).cwiseAbs());
        const double dist = q.dist_box(cell);
        // Sampled upper bound: distance from sampled box points to polytope.
        double sampled = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 40; ++i) {
            for (int j = 0; j <= 40; ++j) {
                Vector x(2);
                x << cell.lower(0) + (cell.upper(0) - cell.lower(0)) * i / 40.0,
                    cell.lower(1) + (cell.upper(1) - cell.lower(1)) * j / 40.0;
                sampled = std::min(sampled, q.dist_point(x));
            }
        }
        CHECK(dist <= sampled + 1e-6);
        CHECK(sampled - dist < 0.1);
    }
}

TEST_CASE("QueryPolytope: k=0 point polytope") {
    QueryPolytope q;
    q.anchor = Vector(2);
    q.anchor << 1, 1;
    q.directions = Matrix(2, 0);
    q.ineq_normals = Matrix(0, 0);
    q.ineq_offsets = Vector(0);
    Vector p(2);
    p << 4, 5;
    CHECK(q.dist_point(p) == doctest::Approx(5.0));
    CHECK(q.dist_point_l1(p) == doctest::Approx(7.0));
    CHECK(!q.empty());
}
