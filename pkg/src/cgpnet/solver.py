"""Graph and coefficient estimation from CGP time series.

The pipeline follows three tractable steps instead of attacking the
nonconvex joint problem head on:

  1. block coordinate descent on the lag matrices R_i ~ P_i(A), with an
     l1 penalty on R_1 and a pairwise-commutator penalty coupling the
     blocks (polynomials of one matrix must commute);
  2. adjacency recovery, either A = R_1 or a commutator-regularized fit
     that uses the whole stack;
  3. coefficient estimation, regressing either the stack or the raw data
     on powers of the recovered A.

An optional joint refinement then runs alternating proximal-gradient steps
on (A, c) starting from the three-step output. Everything is built on one
proximal-gradient engine with a pluggable smooth loss and penalty.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .model import (
    AdjacencyMatrix,
    CoefficientVector,
    FilterStack,
    TimeSeriesMatrix,
    commutator,
    eval_poly_filters,
    matrix_powers,
)

__all__ = [
    "SolverConfig",
    "Penalty",
    "ProxResult",
    "BcdResult",
    "EstimationResult",
    "prox_l1",
    "group_soft_threshold",
    "l1_penalty",
    "group_l2_penalty",
    "zero_penalty",
    "proximal_gradient",
    "LagData",
    "default_penalty_scale",
    "cgp_data_loss",
    "grad_block",
    "update_block",
    "block_coordinate_descent",
    "recover_a_take_r1",
    "recover_a_commutator",
    "estimate_c_from_r",
    "estimate_c_from_data",
    "joint_objective",
    "joint_smooth_value",
    "joint_smooth_grad_a",
    "joint_smooth_grad_c",
    "extended_refinement",
    "basic_algorithm",
    "extended_algorithm",
]

STEP_FLOOR = 1e-18


def _ts(x) -> np.ndarray:
    if isinstance(x, TimeSeriesMatrix):
        return x.data
    return np.asarray(x, dtype=float)


def _adj(a) -> np.ndarray:
    if isinstance(a, AdjacencyMatrix):
        return a.w
    return np.asarray(a, dtype=float)


def default_penalty_scale(x) -> float:
    """Data-scaled default penalty weight 0.1 * ||X||_F / sqrt(K)."""
    data = _ts(x)
    return 0.1 * float(np.linalg.norm(data)) / np.sqrt(data.shape[1])


@dataclass(frozen=True)
class SolverConfig:
    """Penalty weights and iteration controls shared by all estimators.

    Penalty weights left as None are resolved to the data-scaled default
    when data is available. `max_inner_iter` caps both the per-block
    proximal loop and the alternating steps of the joint refinement.
    """

    lambda1: float | None = None
    lambda2: float | None = None
    lambda3: float | None = None
    max_sweeps: int = 50
    max_inner_iter: int = 500
    tol_rel: float = 1e-6
    backtrack_beta: float = 0.5
    step_init: float = 1.0
    seed: int | None = None
    a_method: str = "r1"  # "r1" | "commutator"
    c_method: str = "data"  # "data" | "stack"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.tol_rel <= 0:
            raise ValueError("tol_rel must be positive")
        if not 0 < self.backtrack_beta < 1:
            raise ValueError("backtrack_beta must lie in (0, 1)")
        if self.step_init <= 0:
            raise ValueError("step_init must be positive")
        if self.a_method not in ("r1", "commutator"):
            raise ValueError(f"unknown a_method {self.a_method!r}")
        if self.c_method not in ("data", "stack"):
            raise ValueError(f"unknown c_method {self.c_method!r}")

    def resolved(self, x) -> "SolverConfig":
        """Fill unset penalty weights from the data scale."""
        if self.lambda1 is not None and self.lambda2 is not None and self.lambda3 is not None:
            return self
        base = default_penalty_scale(x)
        return replace(
            self,
            lambda1=base if self.lambda1 is None else self.lambda1,
            lambda2=base if self.lambda2 is None else self.lambda2,
            lambda3=base if self.lambda3 is None else self.lambda3,
        )

    def _require_lambdas(self, which) -> None:
        for name in which:
            if getattr(self, name) is None:
                raise ValueError(
                    f"{name} is unset and no data is available to scale it; "
                    "pass an explicit value or call config.resolved(x) first"
                )


# ---------------------------------------------------------------------------
# proximal operators, penalties, and the shared descent engine
# ---------------------------------------------------------------------------

def prox_l1(v, t: float):
    """Elementwise soft threshold sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def group_soft_threshold(v, t: float, axis: int = 0):
    """Blockwise shrink: each slice along `axis` scaled by max(1 - t/||slice||, 0)."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=axis, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    scale = np.where(norms > t, 1.0 - t / safe, 0.0)
    return v * scale


@dataclass(frozen=True)
class Penalty:
    """Separable penalty: its value and its exact proximal map."""

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]


def l1_penalty(lam: float) -> Penalty:
    return Penalty(
        value=lambda v: lam * float(np.abs(v).sum()),
        prox=lambda v, step: prox_l1(v, step * lam),
    )


def group_l2_penalty(lam: float, axis: int = 0) -> Penalty:
    return Penalty(
        value=lambda v: lam * float(np.linalg.norm(v, axis=axis).sum()),
        prox=lambda v, step: group_soft_threshold(v, step * lam, axis=axis),
    )


def zero_penalty() -> Penalty:
    return Penalty(value=lambda v: 0.0, prox=lambda v, step: v)


@dataclass
class ProxResult:
    x: np.ndarray
    objective_trace: np.ndarray
    converged: bool
    iterations: int
    step: float


def _backtracked_prox_step(f, fx, g, penalty: Penalty, x, step, beta, label=""):
    """One majorization-backtracked proximal step from the point x.

    Shrinks the step until f(z) <= f(x) + <g, z-x> + ||z-x||^2 / (2 step),
    which guarantees the composite objective does not increase (up to
    roundoff slack). Returns (z, f(z), step, ok); ok=False signals step
    underflow, in which case z is x itself.
    """
    slack = 1e-13 * (1.0 + abs(fx))
    while True:
        z = penalty.prox(x - step * g, step)
        d = z - x
        dsq = float(np.vdot(d, d))
        if dsq == 0.0:
            return x, fx, step, True
        fz = f(z)
        if fz <= fx + float(np.vdot(g, d)) + dsq / (2.0 * step) + slack:
            return z, fz, step, True
        step *= beta
        if step < STEP_FLOOR:
            warnings.warn(f"proximal step underflow{' in ' + label if label else ''}", RuntimeWarning)
            return x, fx, step, False


def proximal_gradient(
    f,
    grad,
    penalty: Penalty,
    x0,
    step_init: float = 1.0,
    beta: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 500,
    accel: bool = True,
    grow_steps: bool = True,
    label: str = "",
) -> ProxResult:
    """Minimize f + penalty by proximal gradient with backtracking.

    With accel=True (the default), iterates carry momentum in the monotone
    accelerated style: the prox step is taken from an extrapolated point,
    but a candidate is kept only if it lowers the measured composite
    objective, so the recorded trace is non-increasing by construction.
    Badly conditioned quadratics (long-memory time series produce them)
    need the acceleration to make progress in a reasonable iteration
    budget.
    """
    x = np.array(x0, dtype=float)
    fx = f(x)
    obj = fx + penalty.value(x)
    trace = [obj]
    y, fy = x, fx
    t_momentum = 1.0
    step = step_init
    converged = False
    stalls = 0
    it = 0
    for it in range(1, max_iter + 1):
        gy = grad(y)
        if grow_steps:
            step = step / beta
        z, fz, step, ok = _backtracked_prox_step(f, fy, gy, penalty, y, step, beta, label)
        if not ok:
            break
        z_obj = fz + penalty.value(z)
        if z_obj <= obj:
            x_new, fx_new, new_obj = z, fz, z_obj
        else:
            x_new, fx_new, new_obj = x, fx, obj  # keep the incumbent, momentum continues
        if accel:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_momentum * t_momentum))
            y = x_new + (t_momentum / t_next) * (z - x_new) + (
                (t_momentum - 1.0) / t_next
            ) * (x_new - x)
            t_momentum = t_next
            fy = f(y) if y is not x_new else fx_new
        else:
            y, fy = x_new, fx_new
        delta = obj - new_obj
        x, fx, obj = x_new, fx_new, new_obj
        trace.append(obj)
        if delta <= tol * max(1.0, abs(obj)):
            stalls += 1
            if stalls >= 3:
                converged = True
                break
        else:
            stalls = 0
    return ProxResult(x, np.asarray(trace), converged, it, step)


# ---------------------------------------------------------------------------
# lag-aligned data with precomputed Gram blocks
# ---------------------------------------------------------------------------

class LagData:
    """Lag-aligned views of X and their pairwise Gram blocks.

    blocks[0] = X[:, m:] (the prediction targets) and blocks[i] = X[:, m-i:k-i]
    for i = 1..m; gram[j, l] = blocks[j] @ blocks[l].T. All quadratic pieces of
    the data loss reduce to N x N contractions against these blocks, so inner
    iterations cost O(m^2 n^3) regardless of the sample count.
    """

    def __init__(self, data, m: int):
        data = np.asarray(data, dtype=float)
        n, k = data.shape
        if k <= m:
            raise ValueError(f"need more samples than the model order: k={k}, m={m}")
        self.m = m
        self.n = n
        self.k = k
        self.blocks = [data[:, m:]] + [data[:, m - i : k - i] for i in range(1, m + 1)]
        self.gram = np.empty((m + 1, m + 1, n, n))
        for j in range(m + 1):
            for l in range(j, m + 1):
                g = self.blocks[j] @ self.blocks[l].T
                self.gram[j, l] = g
                self.gram[l, j] = g.T
        self.c0 = float(np.trace(self.gram[0, 0]))

    def data_loss(self, rmats) -> float:
        """0.5 * || blocks[0] - sum_i R_i blocks[i] ||_F^2 via the Gram blocks."""
        val = self.c0
        for i, ri in enumerate(rmats, start=1):
            val -= 2.0 * float(np.vdot(self.gram[0, i], ri))
        for i, ri in enumerate(rmats, start=1):
            for l, rl in enumerate(rmats, start=1):
                val += float(np.vdot(rl.T @ ri, self.gram[l, i]))
        return 0.5 * val

    def data_grad(self, rmats, i: int) -> np.ndarray:
        """Gradient of the data loss w.r.t. R_i: -(E @ blocks[i].T) in Gram form."""
        g = -self.gram[0, i].copy()
        for l, rl in enumerate(rmats, start=1):
            g += rl @ self.gram[l, i]
        return g


def cgp_data_loss(x, r: FilterStack) -> float:
    """Least-squares data term 0.5 * sum_k ||x[k] - sum_i R_i x[k-i]||^2."""
    data = _ts(x)
    m = r.m
    if data.shape[1] <= m:
        raise ValueError(f"need K > M, got K={data.shape[1]}, M={m}")
    if data.shape[0] != r.n:
        raise ValueError("node-count mismatch between data and filter stack")
    resid = data[:, m:].copy()
    for i in range(1, m + 1):
        resid -= r.mats[i - 1] @ data[:, m - i : data.shape[1] - i]
    return 0.5 * float(np.vdot(resid, resid))


def _commutator_penalty(rmats, lam2: float) -> float:
    """lam2 * sum over unordered pairs of ||[R_i, R_j]||_F^2.

    The unordered-pair convention makes the per-block subproblem (which
    sees lam2 * sum_{j != i} ||[R_i, R_j]||^2) exact coordinate descent on
    this total.
    """
    val = 0.0
    for i in range(len(rmats)):
        for j in range(i + 1, len(rmats)):
            c = rmats[i] @ rmats[j] - rmats[j] @ rmats[i]
            val += float(np.vdot(c, c))
    return lam2 * val


def _stack_objective(lag: LagData, rmats, lam1: float, lam2: float) -> float:
    return (
        lag.data_loss(rmats)
        + lam1 * float(np.abs(rmats[0]).sum())
        + _commutator_penalty(rmats, lam2)
    )


def grad_block(x, r: FilterStack, i: int, lambda2: float) -> np.ndarray:
    """Gradient w.r.t. R_i of data loss + lambda2 * sum_{j != i} ||[R_i, R_j]||_F^2."""
    if not 1 <= i <= r.m:
        raise ValueError(f"block index {i} outside 1..{r.m}")
    lag = LagData(_ts(x), r.m)
    return _block_grad(lag, list(r.mats), i, lambda2)


def _block_grad(lag: LagData, rmats, i: int, lam2: float) -> np.ndarray:
    g = lag.data_grad(rmats, i)
    ri = rmats[i - 1]
    for j, rj in enumerate(rmats, start=1):
        if j == i:
            continue
        c = ri @ rj - rj @ ri
        g += (2.0 * lam2) * (c @ rj.T - rj.T @ c)
    return g


def _block_update(lag: LagData, rmats, i: int, cfg: SolverConfig, step: float | None = None):
    """Proximal-gradient descent on block i with the others fixed.

    The objective keeps its additive constant (the partial-residual energy)
    so relative stopping tolerances act on the true block objective scale.
    """
    others = [(j, rj) for j, rj in enumerate(rmats, start=1) if j != i]
    gii = lag.gram[i, i]
    htilde = lag.gram[0, i].copy()
    const = lag.c0
    for j, rj in others:
        htilde -= rj @ lag.gram[j, i]
        const -= 2.0 * float(np.vdot(lag.gram[0, j], rj))
    for j, rj in others:
        for l, rl in others:
            const += float(np.vdot(rl.T @ rj, lag.gram[l, j]))
    lam2 = cfg.lambda2

    def f(ri):
        val = const - 2.0 * float(np.vdot(htilde, ri)) + float(np.vdot(ri @ gii, ri))
        val *= 0.5
        for _, rj in others:
            c = ri @ rj - rj @ ri
            val += lam2 * float(np.vdot(c, c))
        return val

    def grad(ri):
        g = ri @ gii - htilde
        for _, rj in others:
            c = ri @ rj - rj @ ri
            g += (2.0 * lam2) * (c @ rj.T - rj.T @ c)
        return g

    if step is None:
        lmax = float(np.linalg.eigvalsh(gii)[-1])
        step = min(cfg.step_init, 1.0 / lmax) if lmax > 0 else cfg.step_init
    penalty = l1_penalty(cfg.lambda1) if i == 1 else zero_penalty()
    res = proximal_gradient(
        f,
        grad,
        penalty,
        rmats[i - 1],
        step_init=step,
        beta=cfg.backtrack_beta,
        tol=cfg.tol_rel,
        max_iter=cfg.max_inner_iter,
        label=f"lag block {i}",
    )
    return res.x, res.step


def update_block(x, r: FilterStack, i: int, config: SolverConfig) -> np.ndarray:
    """Run the block-i proximal subproblem once and return the updated R_i."""
    if not 1 <= i <= r.m:
        raise ValueError(f"block index {i} outside 1..{r.m}")
    cfg = config.resolved(x)
    lag = LagData(_ts(x), r.m)
    new_ri, _ = _block_update(lag, list(r.mats), i, cfg)
    return new_ri


@dataclass
class BcdResult:
    filters: FilterStack
    objective_trace: np.ndarray
    converged: bool
    sweeps_used: int


def block_coordinate_descent(x, m: int, config: SolverConfig) -> BcdResult:
    """Cyclic block updates of (R_1, ..., R_M) from a zero start.

    Each block update is accepted only if the measured total objective
    (data loss + l1 on R_1 + pairwise commutator penalty) does not
    increase, so the per-sweep trace is non-increasing by construction.
    """
    cfg = config.resolved(x)
    lag = LagData(_ts(x), m)
    return _bcd(lag, cfg)


def _bcd(lag: LagData, cfg: SolverConfig) -> BcdResult:
    m = lag.m
    rmats = [np.zeros((lag.n, lag.n)) for _ in range(m)]
    obj = _stack_objective(lag, rmats, cfg.lambda1, cfg.lambda2)
    trace = [obj]
    steps = [cfg.step_init] * m
    converged = False
    sweep = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        for i in range(1, m + 1):
            cand, steps[i - 1] = _block_update(lag, rmats, i, cfg, step=steps[i - 1])
            trial = list(rmats)
            trial[i - 1] = cand
            new_obj = _stack_objective(lag, trial, cfg.lambda1, cfg.lambda2)
            if new_obj <= obj:
                rmats = trial
                obj = new_obj
        trace.append(obj)
        if abs(trace[-2] - trace[-1]) <= cfg.tol_rel * max(1.0, abs(trace[-2])):
            converged = True
            break
    return BcdResult(FilterStack(tuple(rmats)), np.asarray(trace), converged, sweep)


# ---------------------------------------------------------------------------
# adjacency recovery from an estimated stack
# ---------------------------------------------------------------------------

def recover_a_take_r1(r: FilterStack) -> AdjacencyMatrix:
    """A = R_1; under the normalized convention P_1(A) = A exactly."""
    return AdjacencyMatrix(np.array(r.mats[0]))


def recover_a_commutator(r: FilterStack, config: SolverConfig) -> AdjacencyMatrix:
    """Fit A to the whole stack: ||R_1 - A||_F^2 + lambda1 |A|_1
    + lambda2 * sum_{i>=2} ||[A, R_i]||_F^2, started at R_1."""
    if r.m == 1:
        return recover_a_take_r1(r)
    config._require_lambdas(("lambda1", "lambda2"))
    r1 = np.array(r.mats[0])
    rest = [np.array(ri) for ri in r.mats[1:]]
    lam2 = config.lambda2

    def f(a):
        d = a - r1
        val = float(np.vdot(d, d))
        for ri in rest:
            c = a @ ri - ri @ a
            val += lam2 * float(np.vdot(c, c))
        return val

    def grad(a):
        g = 2.0 * (a - r1)
        for ri in rest:
            c = a @ ri - ri @ a
            g += (2.0 * lam2) * (c @ ri.T - ri.T @ c)
        return g

    res = proximal_gradient(
        f,
        grad,
        l1_penalty(config.lambda1),
        r1,
        step_init=config.step_init,
        beta=config.backtrack_beta,
        tol=config.tol_rel,
        max_iter=config.max_inner_iter,
        label="commutator adjacency fit",
    )
    return AdjacencyMatrix(res.x)


# ---------------------------------------------------------------------------
# coefficient estimation
# ---------------------------------------------------------------------------

def _lasso(design: np.ndarray, target: np.ndarray, lam: float, label: str) -> np.ndarray:
    """min 0.5 ||target - design c||^2 + lam |c|_1 by fixed-step ISTA.

    These subproblems are tiny (a handful of coefficients), so they run to
    near machine precision regardless of the outer solver tolerances.
    """
    btb = design.T @ design
    bty = design.T @ target
    yty = float(target @ target)
    rank = int(np.linalg.matrix_rank(design))
    if rank < design.shape[1]:
        warnings.warn(
            f"{label}: design matrix rank {rank} < {design.shape[1]} columns; "
            "the l1 penalty selects among the solutions",
            RuntimeWarning,
        )
    lmax = float(np.linalg.eigvalsh(btb)[-1]) if btb.size else 0.0
    step = 1.0 / lmax if lmax > 0 else 1.0

    def f(c):
        return 0.5 * (yty - 2.0 * float(c @ bty) + float(c @ btb @ c))

    def grad(c):
        return btb @ c - bty

    res = proximal_gradient(
        f,
        grad,
        l1_penalty(lam),
        np.zeros(design.shape[1]),
        step_init=step,
        beta=0.5,
        tol=1e-14,
        max_iter=20000,
        grow_steps=False,
        label=label,
    )
    return res.x


def estimate_c_from_r(a, r: FilterStack, config: SolverConfig) -> CoefficientVector:
    """Regress each R_i on (I, A, ..., A^i) to recover the lag polynomials.

    Lag 1 is pinned to (c10, c11) = (0, 1) and not fitted; higher lags are
    solved as independent l1-regularized least squares on vectorized
    matrices.
    """
    config._require_lambdas(("lambda3",))
    aw = _adj(a)
    m = r.m
    if aw.shape[0] != r.n:
        raise ValueError("node-count mismatch between adjacency and stack")
    powers = matrix_powers(aw, m)
    parts = [np.array([0.0, 1.0])]
    for i in range(2, m + 1):
        q = np.stack([powers[j].ravel() for j in range(i + 1)], axis=1)
        parts.append(_lasso(q, r.mats[i - 1].ravel(), config.lambda3, f"lag-{i} coefficients"))
    return CoefficientVector(m, np.concatenate(parts))


def estimate_c_from_data(a, x, m: int, config: SolverConfig) -> CoefficientVector:
    """Regress the raw data on powers of A to recover the lag polynomials.

    The fixed c11 = 1 contribution (A x[k-1]) is moved into the target;
    one regression column per free coefficient c_ij is vec(A^j X_{m-i}).
    """
    cfg = config.resolved(x)
    aw = _adj(a)
    lag = LagData(_ts(x), m)
    if m == 1:
        return CoefficientVector.from_free(1, [])
    powers = matrix_powers(aw, m)
    target = (lag.blocks[0] - powers[1] @ lag.blocks[1]).ravel()
    cols = []
    for i in range(2, m + 1):
        for j in range(i + 1):
            cols.append((powers[j] @ lag.blocks[i]).ravel())
    design = np.stack(cols, axis=1)
    free = _lasso(design, target, cfg.lambda3, "coefficients from data")
    return CoefficientVector.from_free(m, free)


# ---------------------------------------------------------------------------
# joint objective and the extended refinement
# ---------------------------------------------------------------------------

def joint_objective(x, a, c: CoefficientVector, config: SolverConfig) -> float:
    """Data loss of the filters P_i(A) plus lambda1 |A|_1 + lambda2 |c_free|_1."""
    cfg = config.resolved(x)
    aw = _adj(a)
    filters = eval_poly_filters(AdjacencyMatrix(aw), c)
    return (
        cgp_data_loss(x, filters)
        + cfg.lambda1 * float(np.abs(aw).sum())
        + cfg.lambda2 * float(np.abs(c.free()).sum())
    )


class _JointProblem:
    """Gram-based value/gradient of the smooth CGP data loss in (A, c_free)."""

    def __init__(self, lag: LagData):
        self.lag = lag
        self.m = lag.m
        self.free_idx = [(i, j) for i in range(2, self.m + 1) for j in range(i + 1)]

    def coeffs(self, cfree) -> CoefficientVector:
        return CoefficientVector.from_free(self.m, cfree)

    def _rmats(self, aw, cfree):
        return eval_poly_filters(AdjacencyMatrix(aw), self.coeffs(cfree)).mats

    def value(self, aw, cfree) -> float:
        return self.lag.data_loss(self._rmats(aw, cfree))

    def _tcoef(self, cfree) -> np.ndarray:
        # tcoef[j, i] = c_ij: weight of lag block i inside the degree-j group
        c = self.coeffs(cfree)
        t = np.zeros((self.m + 1, self.m + 1))
        for i in range(1, self.m + 1):
            t[: i + 1, i] = c.lag(i)
        return t

    def grad_a(self, aw, cfree) -> np.ndarray:
        """d/dA of 0.5||B0 - sum_j A^j T_j||^2 with T_j = sum_i c_ij B_i.

        Uses d tr(S^T A^j)/dA = sum_{l<j} (A^l)^T S (A^{j-1-l})^T applied to
        the residual cross terms S_j = E T_j^T, all contracted through the
        Gram blocks.
        """
        m = self.m
        t = self._tcoef(cfree)
        powers = matrix_powers(aw, m)
        gram = self.lag.gram
        # u[j] = B0 T_j^T ; v[jp, j] = T_jp T_j^T
        u = np.zeros((m + 1, self.lag.n, self.lag.n))
        for j in range(m + 1):
            for i in range(1, m + 1):
                if t[j, i] != 0.0:
                    u[j] += t[j, i] * gram[0, i]
        v = np.zeros((m + 1, m + 1, self.lag.n, self.lag.n))
        for jp in range(m + 1):
            for j in range(m + 1):
                for ip in range(1, m + 1):
                    cip = t[jp, ip]
                    if cip == 0.0:
                        continue
                    for i in range(1, m + 1):
                        if t[j, i] != 0.0:
                            v[jp, j] += cip * t[j, i] * gram[ip, i]
        grad = np.zeros_like(aw)
        for j in range(1, m + 1):
            s = u[j].copy()
            for jp in range(m + 1):
                s -= powers[jp] @ v[jp, j]
            for l in range(j):
                grad -= powers[l].T @ s @ powers[j - 1 - l].T
        return grad

    def c_normal_eqs(self, aw):
        """(B^T B, B^T Y) of the c_free regression, contracted via Grams."""
        m = self.m
        p = len(self.free_idx)
        powers = matrix_powers(aw, m)
        gram = self.lag.gram
        ptp = [[powers[j].T @ powers[jp] for jp in range(m + 1)] for j in range(m + 1)]
        btb = np.empty((p, p))
        bty = np.empty(p)
        for r, (i, j) in enumerate(self.free_idx):
            bty[r] = float(np.vdot(powers[j], gram[0, i])) - float(
                np.vdot(ptp[j][1].T, gram[1, i])
            )
            for s, (ip, jp) in enumerate(self.free_idx):
                btb[r, s] = float(np.vdot(ptp[j][jp].T, gram[ip, i]))
        return btb, bty

    def grad_c(self, aw, cfree) -> np.ndarray:
        btb, bty = self.c_normal_eqs(aw)
        return btb @ np.asarray(cfree, dtype=float) - bty


def joint_smooth_value(x, a, c: CoefficientVector) -> float:
    """Smooth part of the joint objective (the data loss at P_i(A))."""
    return _JointProblem(LagData(_ts(x), c.m)).value(_adj(a), c.free())


def joint_smooth_grad_a(x, a, c: CoefficientVector) -> np.ndarray:
    """Gradient of the smooth joint data loss with respect to A."""
    return _JointProblem(LagData(_ts(x), c.m)).grad_a(_adj(a), c.free())


def joint_smooth_grad_c(x, a, c: CoefficientVector) -> np.ndarray:
    """Gradient of the smooth joint data loss with respect to the free c."""
    return _JointProblem(LagData(_ts(x), c.m)).grad_c(_adj(a), c.free())


@dataclass
class EstimationResult:
    a: AdjacencyMatrix
    c: CoefficientVector
    r: FilterStack
    objective_trace: np.ndarray
    converged: bool
    sweeps_used: int
    basic: "EstimationResult | None" = field(default=None, repr=False)


def extended_refinement(x, a0, c0: CoefficientVector, config: SolverConfig) -> EstimationResult:
    """Alternating proximal-gradient descent on (A, c_free) of the joint
    objective, started from a basic-algorithm output (or zeros).

    c10 = 0 and c11 = 1 are never variables. Each alternation runs
    backtracked proximal steps on A with c fixed (the A block is the
    nonconvex one), then on the free coefficients with A fixed; a block
    result is kept only if the measured joint objective does not increase,
    so the trace is non-increasing by construction. Alternations are
    capped by max_sweeps and each block by max_inner_iter.
    """
    if not c0.is_normalized:
        raise ValueError("refinement requires a normalized coefficient vector")
    cfg = config.resolved(x)
    lag = LagData(_ts(x), c0.m)
    prob = _JointProblem(lag)
    aw = np.array(_adj(a0))
    if aw.shape != (lag.n, lag.n):
        raise ValueError(f"adjacency must be {lag.n} x {lag.n}, got {aw.shape}")
    cfree = c0.free()
    pen_a = l1_penalty(cfg.lambda1)
    pen_c = l1_penalty(cfg.lambda2)

    def total(a_, c_):
        return prob.value(a_, c_) + pen_a.value(a_) + pen_c.value(c_)

    obj = total(aw, cfree)
    trace = [obj]
    step_a = step_c = cfg.step_init
    converged = False
    underflow = False
    sweep = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        res_a = proximal_gradient(
            lambda z: prob.value(z, cfree),
            lambda z: prob.grad_a(z, cfree),
            pen_a,
            aw,
            step_init=step_a,
            beta=cfg.backtrack_beta,
            tol=cfg.tol_rel,
            max_iter=cfg.max_inner_iter,
            label="joint A block",
        )
        step_a = res_a.step
        if res_a.step < STEP_FLOOR:
            underflow = True
            break
        new_obj = total(res_a.x, cfree)
        if new_obj <= obj:
            aw, obj = res_a.x, new_obj

        if cfree.size:
            res_c = proximal_gradient(
                lambda z: prob.value(aw, z),
                lambda z: prob.grad_c(aw, z),
                pen_c,
                cfree,
                step_init=step_c,
                beta=cfg.backtrack_beta,
                tol=cfg.tol_rel,
                max_iter=cfg.max_inner_iter,
                label="joint c block",
            )
            step_c = res_c.step
            if res_c.step < STEP_FLOOR:
                underflow = True
                break
            new_obj = total(aw, res_c.x)
            if new_obj <= obj:
                cfree, obj = res_c.x, new_obj

        trace.append(obj)
        if abs(trace[-2] - trace[-1]) <= cfg.tol_rel * max(1.0, abs(trace[-2])):
            converged = True
            break
    if underflow:
        trace.append(obj)
    c_final = CoefficientVector.from_free(c0.m, cfree)
    a_final = AdjacencyMatrix(aw)
    return EstimationResult(
        a=a_final,
        c=c_final,
        r=eval_poly_filters(a_final, c_final),
        objective_trace=np.asarray(trace),
        converged=converged and not underflow,
        sweeps_used=sweep,
    )


def basic_algorithm(x, m: int, config: SolverConfig) -> EstimationResult:
    """Three-step estimate: block coordinate descent, adjacency recovery
    (a_method selects A = R_1 or the commutator fit, after one extra R_1
    sweep), then coefficient estimation (c_method selects the data or the
    stack regression)."""
    cfg = config.resolved(x)
    lag = LagData(_ts(x), m)
    bcd = _bcd(lag, cfg)
    rmats = list(bcd.filters.mats)

    # one fresh R_1 sweep so the stack information reaches the A estimate
    cand, _ = _block_update(lag, rmats, 1, cfg)
    trial = list(rmats)
    trial[0] = cand
    if _stack_objective(lag, trial, cfg.lambda1, cfg.lambda2) <= _stack_objective(
        lag, rmats, cfg.lambda1, cfg.lambda2
    ):
        rmats = trial
    stack = FilterStack(tuple(rmats))

    a = recover_a_take_r1(stack) if cfg.a_method == "r1" else recover_a_commutator(stack, cfg)
    if cfg.c_method == "data":
        c = estimate_c_from_data(a, x, m, cfg)
    else:
        c = estimate_c_from_r(a, stack, cfg)
    return EstimationResult(
        a=a,
        c=c,
        r=stack,
        objective_trace=bcd.objective_trace,
        converged=bcd.converged,
        sweeps_used=bcd.sweeps_used,
    )


def extended_algorithm(x, m: int, config: SolverConfig) -> EstimationResult:
    """Basic algorithm followed by the joint (A, c) refinement from its output."""
    cfg = config.resolved(x)
    base = basic_algorithm(x, m, cfg)
    refined = extended_refinement(x, base.a, base.c, cfg)
    refined.basic = base
    return refined
