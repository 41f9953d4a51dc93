"""Causal graph process (CGP) model: domain types, graph-filter evaluation,
trajectory simulation, and stability checking.

A CGP couples a directed weighted graph A with lag polynomials
P_i(A) = sum_{j=0..i} c_ij A^j so that

    x[k] = w[k] + sum_{i=1..M} P_i(A) x[k-i]

with w[k] zero-mean Gaussian innovation noise. All lag matrices are
polynomials of the same A, hence they mutually commute.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "AdjacencyMatrix",
    "CoefficientVector",
    "FilterStack",
    "TimeSeriesMatrix",
    "CGPModel",
    "StabilityReport",
    "SimulationDivergence",
    "matrix_powers",
    "eval_poly_filters",
    "commutator",
    "predict_one_step",
    "cgp_predictor",
    "simulate_cgp",
    "spectral_radius",
    "stability_check",
]


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Directed weighted graph on n nodes.

    w[i, j] is the weight of the edge from node j into node i. The matrix
    need not be symmetric and may carry self-loops on the diagonal.
    """

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"adjacency matrix must be square, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("adjacency matrix entries must be finite")
        object.__setattr__(self, "w", _frozen_array(w))

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class CoefficientVector:
    """Flat lag-polynomial coefficients (c10, c11, c20, c21, c22, ..., cMM).

    Lag i carries the i+1 coefficients of degrees 0..i, so the vector has
    length m(m+3)/2. The normalized convention pins c10 = 0 and c11 = 1,
    which removes the scale/shift ambiguity between A and the coefficients.
    """

    m: int
    values: np.ndarray

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("model order m must be >= 1")
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.length(self.m):
            raise ValueError(
                f"coefficient vector for order {self.m} must have length "
                f"{self.length(self.m)}, got {v.size}"
            )
        if not np.isfinite(v).all():
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "values", _frozen_array(v))

    @staticmethod
    def length(m: int) -> int:
        return m * (m + 3) // 2

    @staticmethod
    def _offset(i: int) -> int:
        return (i - 1) * (i + 2) // 2

    def lag(self, i: int) -> np.ndarray:
        """Coefficients (c_i0, ..., c_ii) of the lag-i polynomial."""
        if not 1 <= i <= self.m:
            raise ValueError(f"lag index {i} outside 1..{self.m}")
        off = self._offset(i)
        return self.values[off : off + i + 1]

    @property
    def is_normalized(self) -> bool:
        return self.values[0] == 0.0 and self.values[1] == 1.0

    def free(self) -> np.ndarray:
        """Entries that remain free under the normalized convention (lags >= 2)."""
        return np.array(self.values[2:])

    @classmethod
    def from_free(cls, m: int, free) -> "CoefficientVector":
        """Build a normalized vector from its free entries."""
        free = np.asarray(free, dtype=float).ravel()
        return cls(m, np.concatenate([[0.0, 1.0], free]))


@dataclass(frozen=True)
class FilterStack:
    """Ordered lag matrices (R_1, ..., R_M), each an estimate of P_i(A)."""

    mats: tuple

    def __post_init__(self):
        mats = tuple(np.asarray(r, dtype=float) for r in self.mats)
        if not mats:
            raise ValueError("filter stack cannot be empty")
        n = mats[0].shape[0]
        for r in mats:
            if r.ndim != 2 or r.shape != (n, n):
                raise ValueError("all filter matrices must be square with equal size")
        object.__setattr__(self, "mats", tuple(_frozen_array(r) for r in mats))

    @property
    def m(self) -> int:
        return len(self.mats)

    @property
    def n(self) -> int:
        return self.mats[0].shape[0]


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """n x k data matrix; column k is the graph signal at time sample k."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2 or d.shape[1] < 1:
            raise ValueError(f"time series must be a 2-d n x k matrix, got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("time series entries must be finite")
        object.__setattr__(self, "data", _frozen_array(d))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CGPModel:
    """A CGP process: graph, lag-polynomial coefficients, innovation scale."""

    a: AdjacencyMatrix
    c: CoefficientVector
    noise_std: float = 1.0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def m(self) -> int:
        return self.c.m

    @property
    def n(self) -> int:
        return self.a.n


class SimulationDivergence(RuntimeError):
    """Simulated state stopped being finite (unstable model blew up)."""

    def __init__(self, index: int):
        super().__init__(f"simulation diverged: first nonfinite state at column {index}")
        self.index = index


def matrix_powers(a: np.ndarray, jmax: int) -> list:
    """[I, A, A^2, ..., A^jmax] computed by successive multiplication."""
    a = np.asarray(a, dtype=float)
    powers = [np.eye(a.shape[0])]
    for _ in range(jmax):
        powers.append(powers[-1] @ a)
    return powers


def eval_poly_filters(a: AdjacencyMatrix, c: CoefficientVector) -> FilterStack:
    """Evaluate P_i(A) = sum_{j=0..i} c_ij A^j for i = 1..m, sharing powers of A."""
    powers = matrix_powers(a.w, c.m)
    mats = []
    for i in range(1, c.m + 1):
        coeffs = c.lag(i)
        p = coeffs[0] * powers[0]
        for j in range(1, i + 1):
            p = p + coeffs[j] * powers[j]
        mats.append(p)
    return FilterStack(tuple(mats))


def commutator(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """[P, Q] = PQ - QP."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"commutator needs equal square matrices, got {p.shape} and {q.shape}")
    return p @ q - q @ p


def predict_one_step(a: AdjacencyMatrix, c: CoefficientVector, history) -> np.ndarray:
    """Noise-free one-step-ahead prediction sum_i P_i(A) x[k-i].

    `history` holds the last m signal columns ordered oldest to newest.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim != 2 or h.shape != (a.n, c.m):
        raise ValueError(f"history must be {a.n} x {c.m}, got {h.shape}")
    filters = eval_poly_filters(a, c).mats
    out = np.zeros(a.n)
    for i in range(1, c.m + 1):
        out += filters[i - 1] @ h[:, c.m - i]
    return out


def cgp_predictor(a: AdjacencyMatrix, c: CoefficientVector) -> Callable:
    """One-step predictor closure with the filter stack evaluated once."""
    filters = eval_poly_filters(a, c).mats
    m = c.m

    def predict(history: np.ndarray) -> np.ndarray:
        out = filters[0] @ history[:, m - 1]
        for i in range(2, m + 1):
            out = out + filters[i - 1] @ history[:, m - i]
        return out

    return predict


def simulate_cgp(
    model: CGPModel,
    k: int,
    init=None,
    seed=None,
    burn_in: int | None = None,
    check_stability: bool = True,
) -> TimeSeriesMatrix:
    """Simulate k samples of the CGP recursion with Gaussian innovations.

    If `init` is omitted the run starts from zero columns and a burn-in
    stretch (default 200 samples) is simulated and discarded so the
    returned samples are near-stationary. With explicit `init` the default
    burn-in is 0 and the first m returned columns equal `init`. Identical
    seeds give bit-identical output.
    """
    m, n = model.m, model.n
    if k <= m:
        raise ValueError(f"need k > m samples, got k={k}, m={m}")
    if burn_in is None:
        burn_in = 200 if init is None else 0
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    if init is None:
        init = np.zeros((n, m))
    init = np.asarray(init, dtype=float)
    if init.shape != (n, m):
        raise ValueError(f"init must be {n} x {m}, got {init.shape}")

    if check_stability:
        report = stability_check(model)
        if not report.stable:
            warnings.warn(
                f"simulating a model with spectral radius {report.radius:.4g} >= 1; "
                "the trajectory may diverge",
                RuntimeWarning,
            )

    filters = eval_poly_filters(model.a, model.c).mats
    rng = np.random.default_rng(seed)
    total = burn_in + k
    data = np.empty((n, total))
    data[:, :m] = init
    for t in range(m, total):
        col = rng.normal(0.0, model.noise_std, size=n)
        for i in range(1, m + 1):
            col = col + filters[i - 1] @ data[:, t - i]
        if not np.isfinite(col).all():
            raise SimulationDivergence(t)
        data[:, t] = col
    return TimeSeriesMatrix(data[:, burn_in:])


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    radius: float
    converged: bool
    iterations: int


def _max_abs_eig2(h: np.ndarray) -> float:
    # closed-form eigenvalues of a 2x2 block, complex pair allowed
    tr = h[0, 0] + h[1, 1]
    det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    disc = complex(tr * tr - 4.0 * det) ** 0.5
    return max(abs((tr + disc) / 2.0), abs((tr - disc) / 2.0))


def spectral_radius(
    operator,
    dim: int | None = None,
    tol: float = 1e-8,
    max_iter: int = 10000,
    seed: int = 0,
):
    """Largest-magnitude eigenvalue estimate by block power iteration.

    Iterates a 2-column subspace and reads the radius off the 2x2
    Rayleigh-Ritz projection, so real matrices whose dominant eigenvalues
    form a complex conjugate pair still converge. `operator` is either a
    square matrix or a matvec callable acting on (dim, 2) blocks.

    Returns (radius, converged, iterations); on non-convergence the best
    estimate so far is returned with converged=False.
    """
    if callable(operator):
        if dim is None:
            raise ValueError("dim is required when operator is a callable")
        matvec = operator
    else:
        mat = np.asarray(operator, dtype=float)
        dim = mat.shape[0]
        matvec = lambda v: mat @ v  # noqa: E731
    if dim == 1:
        w = matvec(np.ones((1, 2)))
        return abs(float(w[0, 0])), True, 1

    rng = np.random.default_rng(seed)
    v, _ = np.linalg.qr(rng.standard_normal((dim, 2)))
    prev = np.inf
    hits = 0
    radius = 0.0
    for it in range(1, max_iter + 1):
        w = matvec(v)
        if not np.isfinite(w).all():
            return prev if np.isfinite(prev) else np.inf, False, it
        if np.linalg.norm(w) < 1e-300:
            return 0.0, True, it
        radius = _max_abs_eig2(v.T @ w)
        v, _ = np.linalg.qr(w)
        if abs(radius - prev) <= tol * max(radius, tol):
            hits += 1
            if hits >= 3:
                return radius, True, it
        else:
            hits = 0
        prev = radius
    return radius, False, max_iter


def _companion_matvec(filters) -> Callable:
    """Matvec of the block-companion matrix with first block row (P_1..P_M)."""
    m = len(filters)
    n = filters[0].shape[0]

    def matvec(v: np.ndarray) -> np.ndarray:
        blocks = v.reshape(m, n, -1)
        top = filters[0] @ blocks[0]
        for i in range(1, m):
            top = top + filters[i] @ blocks[i]
        return np.concatenate([top[None, :, :], blocks[:-1]], axis=0).reshape(
            m * n, -1
        )

    return matvec


def stability_check(model: CGPModel, tol: float = 1e-8, max_iter: int = 10000) -> StabilityReport:
    """Spectral radius of the nm x nm block-companion matrix of the recursion.

    The process is (asymptotically) stationary exactly when the radius is
    below 1, the usual stability condition for a lag-M linear recursion.
    """
    filters = eval_poly_filters(model.a, model.c).mats
    matvec = _companion_matvec(filters)
    radius, converged, iterations = spectral_radius(
        matvec, dim=model.m * model.n, tol=tol, max_iter=max_iter
    )
    if not converged:
        warnings.warn(
            f"spectral-radius iteration stopped after {iterations} iterations "
            f"without meeting tol={tol:g}; using best estimate {radius:.6g}",
            RuntimeWarning,
        )
    return StabilityReport(stable=radius < 1.0, radius=radius, converged=converged, iterations=iterations)
