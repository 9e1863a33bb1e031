#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flatnn/harness.hpp"
#include "flatnn/io.hpp"
#include "flatnn/lowdim.hpp"

namespace py = pybind11;
using namespace flatnn;

namespace {

Flat flat_from_numpy(const Matrix& generators) { return flat_from_generators(generators); }

}  // namespace

PYBIND11_MODULE(_flatnn, m) {
    m.doc() = "Approximate nearest neighbor search for k-flat queries.";

    py::register_exception<DimensionMismatch>(m, "DimensionMismatchError", PyExc_ValueError);
    py::register_exception<DegenerateInput>(m, "DegenerateInputError", PyExc_ValueError);
    py::register_exception<InvalidParams>(m, "InvalidParamsError", PyExc_ValueError);
    py::register_exception<BudgetExceeded>(m, "BudgetExceededError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);

    py::class_<Flat>(m, "Flat")
        .def(py::init(&flat_from_numpy), py::arg("generators"),
             "Affine hull of the columns of a d x (k+1) generator matrix.")
        .def_readonly("k", &Flat::k)
        .def_readonly("basis", &Flat::basis)
        .def_readonly("offset", &Flat::offset)
        .def("dim", &Flat::dim);

    m.def("dist_point_flat", &dist_point_flat, py::arg("point"), py::arg("flat"));

    py::class_<IndexParams>(m, "IndexParams")
        .def(py::init<>())
        .def_readwrite("k", &IndexParams::k)
        .def_readwrite("c", &IndexParams::c)
        .def_readwrite("t", &IndexParams::t)
        .def_readwrite("repeats", &IndexParams::repeats)
        .def_readwrite("seed", &IndexParams::seed)
        .def_readwrite("m_override", &IndexParams::m_override)
        .def_property(
            "ann",
            [](const IndexParams& p) {
                return p.ann_kind == AnnKind::oracle ? "oracle" : "lsh";
            },
            [](IndexParams& p, const std::string& v) {
                if (v == "oracle") {
                    p.ann_kind = AnnKind::oracle;
                } else if (v == "lsh") {
                    p.ann_kind = AnnKind::lsh;
                } else {
                    throw InvalidParams("ann must be 'oracle' or 'lsh'");
                }
            });

    py::class_<IndexAnswer>(m, "IndexAnswer")
        .def_readonly("index", &IndexAnswer::index)
        .def_readonly("distance", &IndexAnswer::distance)
        .def_readonly("r_tilde", &IndexAnswer::r_tilde);

    py::class_<FlatIndex>(m, "FlatIndex")
        .def_property_readonly("n", &FlatIndex::size)
        .def_property_readonly("m", [](const FlatIndex& idx) { return idx.m; })
        .def_property_readonly("cluster_count", &FlatIndex::cluster_count)
        .def(
            "query",
            [](const FlatIndex& idx, const Flat& f, std::uint64_t seed) {
                return query_index(idx, f, seed);
            },
            py::arg("flat"), py::arg("seed") = 0)
        .def("save", [](const FlatIndex& idx, const std::string& path) { save_index(idx, path); },
             py::arg("path"));

    m.def(
        "build_index",
        [](const Matrix& points, const IndexParams& params) {
            return build_index(points, params);
        },
        py::arg("points"), py::arg("params"),
        "Build the index over a d x n matrix of points (one column per point).");
    m.def("load_index", &load_index, py::arg("path"));

    m.def(
        "brute_force_nn",
        [](const Matrix& points, const Flat& f) { return index_linear_scan(points, f); },
        py::arg("points"), py::arg("flat"), "Exact linear-scan oracle.");

    // Low-dimensional near-neighbor reporting, exposed for direct use.
    py::class_<SearchStructure>(m, "SearchStructure")
        .def_property_readonly("size", &SearchStructure::size)
        .def(
            "query_near",
            [](const SearchStructure& s, const Flat& f, double alpha) {
                return query_near(s, f, alpha);
            },
            py::arg("flat"), py::arg("alpha"))
        .def(
            "query_nearest",
            [](const SearchStructure& s, const Flat& f, std::uint64_t seed) {
                const auto ans = query_ann_sampled(s, f, seed);
                return py::make_tuple(ans.index, ans.distance);
            },
            py::arg("flat"), py::arg("seed") = 0);
    m.def(
        "build_search_structure",
        [](const Matrix& points, int k, int r, std::uint64_t seed) {
            LowdimBuildOptions opts;
            opts.r = r;
            opts.seed = seed;
            return build_search_structure(points, k, opts);
        },
        py::arg("points"), py::arg("k"), py::arg("r") = 16, py::arg("seed") = 0);
    m.def("lowdim_kappa", &lowdim_kappa, py::arg("dim"), py::arg("k"));

    m.def(
        "gen_dataset",
        [](int n, int d, int k, const std::string& kind, std::uint64_t seed, int clusters,
           double radius, double noise) {
            DatasetSpec spec;
            spec.n = n;
            spec.d = d;
            spec.k = k;
            spec.seed = seed;
            spec.num_clusters = clusters;
            spec.cluster_radius = radius;
            spec.noise_fraction = noise;
            if (kind == "uniform") {
                spec.kind = DatasetKind::uniform;
            } else if (kind == "planted") {
                spec.kind = DatasetKind::planted;
            } else {
                throw InvalidParams("kind must be 'uniform' or 'planted'");
            }
            return gen_dataset(spec).points;
        },
        py::arg("n"), py::arg("d"), py::arg("k") = 1, py::arg("kind") = "uniform",
        py::arg("seed") = 0, py::arg("clusters") = 4, py::arg("radius") = 0.05,
        py::arg("noise") = 0.25);
}
