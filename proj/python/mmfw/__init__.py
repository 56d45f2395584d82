"""Multiresolution matrix factorization, sparse graph wavelets and graph
utilities, backed by the C++ core."""

from ._mmfw import (
    Factorization,
    WaveletBasis,
    diffusion_conv,
    extract_basis,
    factorize,
    gaussian_adjacency,
    graph_laplacian,
    knn_graph,
    lle_adjacency,
    load_basis,
    load_factorization,
    metrics,
    row_normalize,
    symmetrize,
    wavelet_conv,
)

__all__ = [
    "Factorization",
    "WaveletBasis",
    "diffusion_conv",
    "extract_basis",
    "factorize",
    "gaussian_adjacency",
    "graph_laplacian",
    "knn_graph",
    "lle_adjacency",
    "load_basis",
    "load_factorization",
    "metrics",
    "row_normalize",
    "symmetrize",
    "wavelet_conv",
]
