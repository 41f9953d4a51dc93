"""Random sparse stable graphs, stable coefficient vectors, and synthetic
CGP datasets for benchmarking.

The graph generator draws off-diagonal weights from N(0, 1), keeps only the
band threshold_lo <= |w| <= threshold_hi (a directed Erdos-Renyi topology
with edge probability 2*(Phi(hi) - Phi(lo)), about 0.04 at the defaults),
rescales to spectral radius 1/2, and adds a negative uniform diagonal.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    AdjacencyMatrix,
    CGPModel,
    CoefficientVector,
    TimeSeriesMatrix,
    simulate_cgp,
    spectral_radius,
    stability_check,
)

__all__ = [
    "GraphGenSpec",
    "CgpDataset",
    "DATASET_PRESETS",
    "random_sparse_adjacency",
    "stable_coefficients",
    "generate_dataset",
]

# Two published configurations for the small recovery experiment; both are
# kept because they are each plausible defaults at desk scale.
DATASET_PRESETS = {
    "small": dict(n=25, k=100, m=3),
    "large": dict(n=100, k=100, m=3),
}


@dataclass(frozen=True)
class GraphGenSpec:
    """Parameters of the random sparse graph generator."""

    n: int
    threshold_lo: float = 1.6
    threshold_hi: float = 1.8
    diag_lo: float = -1.0
    diag_hi: float = -0.5
    seed: object = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 nodes")
        if not 0 < self.threshold_lo < self.threshold_hi:
            raise ValueError("thresholds must satisfy 0 < lo < hi")
        if not self.diag_lo < self.diag_hi:
            raise ValueError("diagonal range must satisfy lo < hi")


def random_sparse_adjacency(spec: GraphGenSpec) -> AdjacencyMatrix:
    """Draw a sparse directed graph with banded off-diagonal weights.

    Off-diagonal entries are standard normal draws kept only inside the
    magnitude band; the kept matrix is rescaled so its largest-magnitude
    eigenvalue is 1/2 (skipped when the draw is empty or nilpotent), and
    the diagonal is filled from U(diag_lo, diag_hi).
    """
    rng = np.random.default_rng(spec.seed)
    draws = rng.standard_normal((spec.n, spec.n))
    np.fill_diagonal(draws, 0.0)
    band = (np.abs(draws) >= spec.threshold_lo) & (np.abs(draws) <= spec.threshold_hi)
    a_prime = np.where(band, draws, 0.0)

    scaled = a_prime
    if np.any(a_prime != 0.0):
        lam1, _, _ = spectral_radius(a_prime, tol=1e-10, max_iter=20000)
        if lam1 > 1e-9:
            scaled = a_prime / (2.0 * lam1)
        # a nonzero nilpotent draw (acyclic at small n) cannot be rescaled;
        # its eigenvalues are zero so it does not threaten stability either
    diag = rng.uniform(spec.diag_lo, spec.diag_hi, size=spec.n)
    return AdjacencyMatrix(scaled + np.diag(diag))


def stable_coefficients(m: int, a: AdjacencyMatrix, seed=None) -> CoefficientVector:
    """Normalized coefficients (c10=0, c11=1) giving a stable process on `a`.

    Free entries are drawn once from U(-0.5, 0.5); the whole higher-lag
    block is then scaled down geometrically (halved per attempt) until the
    block-companion radius drops below 1. Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    free = rng.uniform(-0.5, 0.5, size=CoefficientVector.length(m) - 2)
    gamma = 1.0
    for _ in range(20):
        c = CoefficientVector.from_free(m, free * gamma)
        report = stability_check(CGPModel(a, c), tol=1e-6, max_iter=3000)
        if report.stable:
            return c
        if free.size == 0:
            break  # nothing left to shrink: the lag-1 part (A itself) is unstable
        gamma *= 0.5
    raise RuntimeError(
        "no stable coefficient vector found after 20 shrink attempts; "
        "the graph itself is unstable, regenerate it"
    )


@dataclass(frozen=True)
class CgpDataset:
    a: AdjacencyMatrix
    c: CoefficientVector
    x: TimeSeriesMatrix
    noise_std: float = 1.0

    @property
    def model(self) -> CGPModel:
        return CGPModel(self.a, self.c, self.noise_std)


def generate_dataset(
    n: int,
    m: int,
    k: int,
    spec: GraphGenSpec | None = None,
    seed=None,
    noise_std: float = 1.0,
    burn_in: int = 200,
    max_graph_retries: int = 10,
) -> CgpDataset:
    """Random graph + stable coefficients + simulated trajectory.

    `spec` supplies the band/diagonal parameters only; node count and RNG
    streams come from `n` and `seed`. The rare graph whose lag-1 dynamics
    are already unstable is discarded and redrawn.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    base = spec if spec is not None else GraphGenSpec(n=n)
    last_error = None
    for _ in range(max_graph_retries):
        graph_seed, coeff_seed, sim_seed = ss.spawn(3)
        a = random_sparse_adjacency(replace(base, n=n, seed=graph_seed))
        try:
            c = stable_coefficients(m, a, coeff_seed)
        except RuntimeError as err:
            last_error = err
            continue
        x = simulate_cgp(
            CGPModel(a, c, noise_std),
            k,
            seed=sim_seed,
            burn_in=burn_in,
            check_stability=False,
        )
        return CgpDataset(a=a, c=c, x=x, noise_std=noise_std)
    raise RuntimeError(
        f"failed to generate a stable dataset after {max_graph_retries} graphs"
    ) from last_error
