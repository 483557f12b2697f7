"""Stochastic gradient iterations: plain, projected, proximal, resolvent.

One engine drives all four methods.  Replications are simulated in column
batches, but every kernel in the hot path uses elementwise arithmetic and
the fixed-order accumulations from ``_accum`` only, so each replication's
trajectory is bitwise identical whether it runs alone, inside a batch, or
under any thread count.  Randomness comes from counter-based
per-replication substreams keyed by (master_seed, replication_index).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _accum
from . import geometry as geo
from . import rng
from .geometry import ConvexSet, LinearMonotoneOperator, Regularizer
from .problems import FiniteSumProblem

__all__ = [
    "ConstantStep",
    "InverseTStep",
    "SolverRun",
    "Trajectory",
    "EnsembleRun",
    "DivergenceError",
    "run",
    "run_ensemble",
    "gradient_mapping",
    "recommend_step",
    "default_x0",
    "METHODS",
]

METHODS = ("sgm", "psgm", "prox_sgm", "resolvent_sgm")

_CHUNK = 256          # replications per batch; fixed so results never depend on threads
_TIME_BLOCK = 4096    # index-stream block length (blocks partition the stream)
_DIVERGENCE_NORM_SQ = 1e24  # guard: abort when ‖x‖ > 1e12
_THIN_LIMIT = 10_000


class DivergenceError(RuntimeError):
    """An iterate overflowed or left the ‖x‖ ≤ 1e12 trust region."""

    def __init__(self, t: int, replication: int):
        super().__init__(
            f"iterate diverged at step t={t} in replication {replication}")
        self.t = t
        self.replication = replication


@dataclass(frozen=True)
class ConstantStep:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("constant step size must be positive")

    kind = "constant"

    def value(self, t: int) -> float:
        return self.gamma


@dataclass(frozen=True)
class InverseTStep:
    """γ_t = c / (1 + t); pass c = 2/μ for the standard O(1/t) schedule."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("inverse_t coefficient must be positive")

    kind = "inverse_t"

    def value(self, t: int) -> float:
        return self.c / (1.0 + t)


@dataclass(eq=False)
class SolverRun:
    """Everything one (replicated) solve needs.

    ``geometry`` is None for sgm, a ConvexSet for psgm, a Regularizer for
    prox_sgm, and a LinearMonotoneOperator for resolvent_sgm.  ``seed`` is
    the master seed; ``replication`` the substream index of this run.
    """

    method: str
    problem: FiniteSumProblem
    step: ConstantStep | InverseTStep
    iters: int
    seed: int
    geometry: object = None
    x0: np.ndarray | None = None
    replication: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        _check_geometry(self.method, self.geometry)
        if self.iters < 1:
            raise ValueError("iteration count must be >= 1")
        if self.seed < 0 or self.replication < 0:
            raise ValueError("seed and replication index must be nonnegative")
        if self.x0 is None:
            self.x0 = default_x0(self.method, self.geometry, self.problem.dim)
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.problem.dim,) or not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be a finite vector of the problem dimension")


def _check_geometry(method: str, geometry) -> None:
    wanted = {"sgm": type(None), "psgm": ConvexSet,
              "prox_sgm": Regularizer, "resolvent_sgm": LinearMonotoneOperator}
    if not isinstance(geometry, wanted[method]):
        raise ValueError(
            f"method {method!r} needs geometry of type "
            f"{wanted[method].__name__}, got {type(geometry).__name__}")


def default_x0(method: str, geometry, dim: int) -> np.ndarray:
    """The zero vector, projected onto the feasible set when there is one."""
    zero = np.zeros(dim)
    if method == "psgm":
        return geo.project(geometry, zero)
    if method == "prox_sgm" and geometry.kind == "indicator":
        return geo.project(geometry.set_, zero)
    return zero


@dataclass(eq=False)
class Trajectory:
    """One replication's record.

    ``points`` holds iterates at the iteration numbers in ``point_steps``
    (all of 0..T when T ≤ 10⁴, else every ⌈T/10⁴⌉-th); ``dist_sq`` is the
    squared distance to the solution set at every t regardless of thinning.
    """

    replication: int
    point_steps: np.ndarray
    points: np.ndarray
    dist_sq: np.ndarray
    sampled_indices: np.ndarray
    step_values: np.ndarray

    @property
    def iters(self) -> int:
        return len(self.dist_sq) - 1


@dataclass(eq=False)
class EnsembleRun:
    """Replicated runs: the (R, T+1) dist_sq matrix plus one full audit
    trajectory (the first replication)."""

    dist_sq: np.ndarray
    audit: Trajectory
    seed: int
    gamma0: float
    step_kind: str

    @property
    def replications(self) -> int:
        return self.dist_sq.shape[0]

    @property
    def iters(self) -> int:
        return self.dist_sq.shape[1] - 1


def _apply_geometry(method: str, geometry, gamma: float, Y):
    if method == "sgm":
        return Y
    if method == "psgm":
        return geo.project(geometry, Y)
    if method == "prox_sgm":
        return geo.prox(geometry, gamma, Y)
    return geo.resolvent(geometry, gamma, Y)


def _thin_stride(T: int) -> int:
    return 1 if T <= _THIN_LIMIT else math.ceil(T / _THIN_LIMIT)


def _run_chunk(spec: SolverRun, rep_offset: int, width: int,
               dist_out: np.ndarray, audit: dict | None) -> None:
    """Simulate replications [rep_offset, rep_offset + width) of the spec.

    Writes squared distances into rows of ``dist_out`` and, when ``audit``
    is given (first chunk only), records the first column's full record.
    """
    problem, step, T = spec.problem, spec.step, spec.iters
    project_solution = problem.solution_projector
    X = np.repeat(spec.x0[:, None], width, axis=1)
    streams = [
        rng.IndexStream(spec.seed, spec.replication + rep_offset + r,
                        problem.n_components)
        for r in range(width)
    ]

    D = X - project_solution(X)
    dist_out[rep_offset:rep_offset + width, 0] = _accum.sumsq_cols(D)
    if audit is not None:
        audit["points"][0] = X[:, 0]

    stride = audit["stride"] if audit is not None else 1
    t = 0
    while t < T:
        block = min(_TIME_BLOCK, T - t)
        idx = np.stack([s.next_block(block) for s in streams], axis=0)
        for k in range(block):
            gamma_t = step.value(t)
            grads = problem.batch_component_grad(X, idx[:, k])
            X = _apply_geometry(spec.method, spec.geometry, gamma_t,
                                X - gamma_t * grads)
            norms = _accum.sumsq_cols(X)
            if not np.all(np.isfinite(norms)) or norms.max() > _DIVERGENCE_NORM_SQ:
                bad = int(np.flatnonzero(~np.isfinite(norms)
                                         | (norms > _DIVERGENCE_NORM_SQ))[0])
                raise DivergenceError(t + 1, spec.replication + rep_offset + bad)
            D = X - project_solution(X)
            dist_out[rep_offset:rep_offset + width, t + 1] = _accum.sumsq_cols(D)
            if audit is not None:
                audit["indices"][t] = idx[0, k]
                if (t + 1) % stride == 0:
                    audit["points"][(t + 1) // stride] = X[:, 0]
            t += 1


def run_ensemble(spec: SolverRun, replications: int,
                 threads: int | None = None) -> EnsembleRun:
    """Run ``replications`` independent copies of ``spec``.

    Replication r uses substream (seed, spec.replication + r).  Work is
    split into fixed-size chunks; threads only decide which chunks run
    concurrently, never how results are combined, so output is identical
    for every thread count.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    T = spec.iters
    stride = _thin_stride(T)
    dist = np.empty((replications, T + 1))
    audit = {
        "stride": stride,
        "points": np.empty((T // stride + 1, spec.problem.dim)),
        "indices": np.empty(T, dtype=np.int64),
    }

    jobs = []
    offset = 0
    while offset < replications:
        width = min(_CHUNK, replications - offset)
        jobs.append((offset, width, audit if offset == 0 else None))
        offset += width

    if threads is None or threads <= 1 or len(jobs) == 1:
        for off, width, aud in jobs:
            _run_chunk(spec, off, width, dist, aud)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, spec, off, width, dist, aud)
                       for off, width, aud in jobs]
            for fut in futures:  # collect in chunk order for stable errors
                fut.result()

    step_values = np.array([spec.step.value(t) for t in range(T)])
    audit_traj = Trajectory(
        replication=spec.replication,
        point_steps=np.arange(0, T + 1, stride, dtype=np.int64),
        points=audit["points"],
        dist_sq=dist[0].copy(),
        sampled_indices=audit["indices"],
        step_values=step_values,
    )
    return EnsembleRun(dist_sq=dist, audit=audit_traj, seed=spec.seed,
                       gamma0=float(step_values[0]), step_kind=spec.step.kind)


def run(spec: SolverRun) -> Trajectory:
    """Run a single replication and return its full trajectory."""
    return run_ensemble(spec, 1).audit


def gradient_mapping(problem: FiniteSumProblem, geometry, gamma: float,
                     x, i: int, method: str | None = None):
    """One-step residual G = (x − x₊)/γ and its subgradient part q = G − ∇fᵢ(x).

    For constant/zero regularizers q = 0 and G is the component gradient
    itself; in general q belongs to the regularizer's subdifferential at x₊.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if method is None:
        method = _infer_method(geometry)
    x = np.asarray(x, dtype=float)
    grad_i = problem.component_grad(i, x)
    x_next = _apply_geometry(method, geometry, gamma, x - gamma * grad_i)
    G = (x - x_next) / gamma
    return G, G - grad_i


def _infer_method(geometry) -> str:
    if geometry is None:
        return "sgm"
    if isinstance(geometry, ConvexSet):
        return "psgm"
    if isinstance(geometry, Regularizer):
        return "prox_sgm"
    if isinstance(geometry, LinearMonotoneOperator):
        return "resolvent_sgm"
    raise ValueError(f"unrecognized geometry object {type(geometry).__name__}")


def recommend_step(L: float, M: float, mu: float, method: str = "psgm"):
    """Step size and contraction rate for the constant-step linear regime.

    Projected/plain methods get the optimal γ = 1/(2LM) with per-step
    contraction ρ = μ/(4LM) (valid only under the strict hypothesis
    μ < 4LM); the proximal method maximizes γμ(1−2γLM), giving γ = 1/(4LM)
    and ρ = μ/(8LM).
    """
    if not (L > 0 and M > 0 and mu > 0):
        raise ValueError("L, M and mu must all be positive")
    if method in ("sgm", "psgm", "resolvent_sgm"):
        if not mu < 4 * L * M:
            raise ValueError(
                "the constant-step linear-rate guarantee requires the strict "
                f"hypothesis mu < 4*L*M (got mu={mu:g}, 4LM={4 * L * M:g})")
        gamma = 1.0 / (2 * L * M)
        rho = mu / (4 * L * M)
    elif method == "prox_sgm":
        gamma = 1.0 / (4 * L * M)
        rho = mu / (8 * L * M)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not 0 < rho < 1:
        raise ValueError(f"derived contraction rho={rho:g} is outside (0, 1)")
    return gamma, rho
