"""Approximate nearest neighbor search for k-flat queries."""

try:
    from ._flatnn import *  # noqa: F401,F403  (installed wheel layout)
    from . import _flatnn as _impl
except ImportError:
    from _flatnn import *  # noqa: F401,F403  (build-tree layout)
    import _flatnn as _impl

__doc__ = _impl.__doc__

__all__ = [
    "Flat",
    "FlatIndex",
    "IndexAnswer",
    "IndexParams",
    "SearchStructure",
    "brute_force_nn",
    "build_index",
    "build_search_structure",
    "dist_point_flat",
    "gen_dataset",
    "load_index",
    "lowdim_kappa",
    "BudgetExceededError",
    "DegenerateInputError",
    "DimensionMismatchError",
    "InvalidParamsError",
    "IoError",
]
