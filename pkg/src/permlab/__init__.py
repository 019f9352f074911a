"""Permutons, pattern densities and inversion-tilted random permutations."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .measures import (  # noqa: E402
    D11,
    D12,
    D21,
    D22,
    GridPermuton,
    MarginalCdf,
    MixturePermuton,
    Permuton,
    PermutonError,
    Rect,
    SegmentPermuton,
    box_mass,
    kl_divergence,
    lebesgue,
    marginal_cdfs,
    mix,
    project_uniform,
    reflect,
    tv_distance,
)
from .patterns import (  # noqa: E402
    h_sigma,
    induced_permutation,
    inversion_count,
    occurrences,
    pair_weight_21,
    t_sigma_measure_exact,
    t_sigma_measure_mc,
    t_sigma_perm,
)
