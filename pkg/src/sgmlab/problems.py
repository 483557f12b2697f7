"""Finite-sum problems f = (1/n) Σ fᵢ with exact component-gradient oracles.

Every instance knows its smoothness and convexity constants, its solution
set (as a projector), and any closed-form growth constants, so conditional
expectations over the uniform component index are exact finite sums rather
than Monte Carlo estimates.

Batched kernels operate on column batches X of shape (d, R) and are written
with elementwise ops and fixed-order axis reductions only, so column r of a
batched evaluation is bitwise identical to evaluating column r alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _accum
from . import rng
from .geometry import Regularizer, l1_regularizer, prox

__all__ = [
    "Component",
    "FiniteSumProblem",
    "KaczmarzSystem",
    "EvaluationError",
    "make_two_point_quadratic",
    "make_kaczmarz_problem",
    "make_random_kaczmarz_system",
    "load_kaczmarz_text",
    "make_shared_minimizer_quadratics",
    "make_quadratic_l1",
    "exact_conditional_moment",
]

_CONSISTENT_RESIDUAL = 1e-10


class EvaluationError(RuntimeError):
    """A component oracle produced a non-finite value or gradient."""


@dataclass
class Component:
    """One summand fᵢ, exposing value and gradient at a point."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class FiniteSumProblem:
    """f = (1/n) Σᵢ fᵢ over ℝ^d with known constants and solution set.

    ``solution_projector`` maps a point (or column batch) to its projection
    onto the solution set of the full problem being solved — for composite
    instances that is the regularized solution, not argmin f.  ``full_grad``
    is the analytic ∇f.  ``batch_component_grad(X, idx)`` returns the
    (d, R) matrix of ∇f_{idx[r]}(X[:, r]); ``all_component_grads(x)``
    returns the (n, d) matrix of every component gradient at one point.
    """

    name: str
    dim: int
    components: list
    lipschitz_L: float
    per_component_L0: float
    strong_mu: float
    restricted_mu: float
    f_star: float
    solution_projector: Callable
    full_grad: Callable
    batch_component_grad: Callable
    all_component_grads: Callable
    grad_zero_points: list = field(default_factory=list)
    analytic_M: float | None = None
    analytic_sigma_sq: float | None = None
    analytic_B: float | None = None
    regularizer: Regularizer | None = None
    kaczmarz: "KaczmarzSystem | None" = None

    @property
    def n_components(self) -> int:
        return len(self.components)

    def f_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.mean([c.value(x) for c in self.components]))

    def component_grad(self, i: int, x) -> np.ndarray:
        return np.asarray(self.components[i].grad(np.asarray(x, dtype=float)))


def exact_conditional_moment(problem: FiniteSumProblem, x):
    """Exact (E ∇f_i(x), E ‖∇f_i(x)‖²) over the uniform component index.

    Computed by enumerating all n components; raises ``EvaluationError`` if
    any component gradient is non-finite.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise EvaluationError("evaluation point is not finite")
    grads = problem.all_component_grads(x)
    if not np.all(np.isfinite(grads)):
        raise EvaluationError(
            f"non-finite component gradient at x with norm {np.linalg.norm(x):.3e}")
    mean_grad = grads.mean(axis=0)
    second_moment = float(np.mean((grads * grads).sum(axis=1)))
    return mean_grad, second_moment


def _constant_projector(xstar: np.ndarray) -> Callable:
    xstar = np.asarray(xstar, dtype=float)

    def proj(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return xstar.copy()
        return np.repeat(xstar[:, None], x.shape[1], axis=1)

    return proj


# ---------------------------------------------------------------------------
# Two-point quadratic: the canonical instance where noise never vanishes.
# ---------------------------------------------------------------------------

def make_two_point_quadratic() -> FiniteSumProblem:
    """d=1, n=2: f₁(x)=0.5(x−1)², f₂(x)=0.5(x+1)², so f(x)=0.5x²+0.5.

    The unique minimizer is 0, but both component gradients have norm 1
    there, making this the standard example with M = 1 and σ² = 1.
    """
    targets = np.array([1.0, -1.0])

    def _make(e):
        return Component(
            value=lambda x, e=e: 0.5 * float((x[0] - e) ** 2),
            grad=lambda x, e=e: np.array([x[0] - e]),
        )

    def batch_grad(X, idx):
        return X - targets[idx][None, :]

    def all_grads(x):
        return x[0] - targets[:, None]

    return FiniteSumProblem(
        name="two_point",
        dim=1,
        components=[_make(e) for e in targets],
        lipschitz_L=1.0,
        per_component_L0=1.0,
        strong_mu=1.0,
        restricted_mu=1.0,
        f_star=0.5,
        solution_projector=_constant_projector(np.zeros(1)),
        full_grad=lambda x: np.asarray(x, dtype=float).copy(),
        batch_component_grad=batch_grad,
        all_component_grads=all_grads,
        grad_zero_points=[np.zeros(1)],
        analytic_M=1.0,
        analytic_sigma_sq=1.0,
    )


# ---------------------------------------------------------------------------
# Randomized Kaczmarz: mean squared hyperplane distance of a linear system.
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class KaczmarzSystem:
    """A linear system with unit-norm rows, m ≥ d, and full column rank."""

    A: np.ndarray
    b: np.ndarray
    consistent: bool = field(init=False)
    x_ls: np.ndarray = field(init=False, repr=False)
    residual_norm: float = field(init=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise ValueError("need A of shape (m, d) and b of shape (m,)")
        m, d = self.A.shape
        if m < d:
            raise ValueError(f"system must have m >= d rows (m={m}, d={d})")
        norms = np.sqrt((self.A * self.A).sum(axis=1))
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("rows must have unit norm (normalize on load)")
        sv = np.linalg.svd(self.A, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValueError("A must have full column rank")
        self.x_ls, *_ = np.linalg.lstsq(self.A, self.b, rcond=None)
        self.residual_norm = float(np.linalg.norm(self.A @ self.x_ls - self.b))
        self.consistent = self.residual_norm <= _CONSISTENT_RESIDUAL

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


def make_random_kaczmarz_system(m: int, d: int, construction_seed: int,
                                mix: float = 0.5, consistent: bool = True,
                                noise: float = 0.1) -> KaczmarzSystem:
    """Seeded random system with a tunable condition number.

    ``mix = 0`` gives orthonormal columns (condition 1); raising it blends
    in Gaussian noise, which worsens the conditioning smoothly.  Rows are
    normalized and b rescaled accordingly, so both the solution and the
    consistency of the system are preserved.
    """
    if m < d:
        raise ValueError("need m >= d")
    g = rng.substream(construction_seed, 0)
    G = g.standard_normal((m, d))
    Q, _ = np.linalg.qr(G)
    raw = Q + mix * g.standard_normal((m, d)) / math.sqrt(d)
    x_nat = g.standard_normal(d)
    b_raw = raw @ x_nat
    if not consistent:
        b_raw = b_raw + noise * g.standard_normal(m)
    norms = np.sqrt((raw * raw).sum(axis=1))
    return KaczmarzSystem(A=raw / norms[:, None], b=b_raw / norms)


def load_kaczmarz_text(path) -> KaczmarzSystem:
    """Load a system from plain text: first line "m d", then m rows of
    d+1 reals (the row of A followed by bᵢ).  Rows are normalized on load
    and b is rescaled accordingly."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    body = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not body:
        raise ValueError(f"{path}: empty matrix file")
    lineno, header = body[0]
    parts = header.split()
    if len(parts) != 2:
        raise ValueError(f"{path}:{lineno}: expected header 'm d'")
    try:
        m, d = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ValueError(f"{path}:{lineno}: non-integer header") from exc
    if m < 1 or d < 1:
        raise ValueError(f"{path}:{lineno}: m and d must be positive")
    if len(body) - 1 != m:
        raise ValueError(f"{path}: expected {m} data rows, found {len(body) - 1}")
    A = np.empty((m, d))
    b = np.empty(m)
    for r, (lineno, ln) in enumerate(body[1:]):
        vals = ln.split()
        if len(vals) != d + 1:
            raise ValueError(f"{path}:{lineno}: expected {d + 1} values, got {len(vals)}")
        try:
            row = np.array([float(v) for v in vals])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
        A[r] = row[:d]
        b[r] = row[d]
    norms = np.sqrt((A * A).sum(axis=1))
    if np.any(norms == 0.0):
        raise ValueError(f"{path}: zero row cannot be normalized")
    return KaczmarzSystem(A=A / norms[:, None], b=b / norms)


def make_kaczmarz_problem(sys: KaczmarzSystem) -> FiniteSumProblem:
    """f(x) = (1/2m)‖Ax−b‖² as a mean of per-row hyperplane distances.

    With unit rows, fᵢ(x) = 0.5(⟨aᵢ,x⟩−bᵢ)² is half the squared distance to
    the i-th hyperplane and ∇fᵢ(x) = (⟨aᵢ,x⟩−bᵢ)aᵢ, so the γ=1 step is the
    classical Kaczmarz projection.  L = λ_max(AᵀA)/m and μ = λ_min(AᵀA)/m;
    the solution set is the single least-squares point under full rank.
    """
    A, b = sys.A, sys.b
    m = sys.m
    ev = np.linalg.eigvalsh(A.T @ A)
    lam_min, lam_max = float(ev[0]), float(ev[-1])

    def _make(i):
        a_i, b_i = A[i], b[i]
        return Component(
            value=lambda x, a=a_i, c=b_i: 0.5 * float((a @ x - c) ** 2),
            grad=lambda x, a=a_i, c=b_i: (_accum.dot_vec(a, x) - c) * a,
        )

    def full_grad(x):
        resid = np.einsum("ij,j->i", A, x, optimize=False) - b
        return np.einsum("ji,j->i", A, resid, optimize=False) / m

    def batch_grad(X, idx):
        rows = A[idx]
        resid = _accum.rowdot_cols(rows, X) - b[idx]
        return rows.T * resid[None, :]

    def all_grads(x):
        resid = np.einsum("ij,j->i", A, x, optimize=False) - b
        return A * resid[:, None]

    # a certified-consistent system gets an exact zero so that zero-noise
    # code paths (exact floor, per-step contraction) engage
    sigma_sq = 0.0 if sys.consistent else sys.residual_norm ** 2 / m
    return FiniteSumProblem(
        name="kaczmarz",
        dim=sys.d,
        components=[_make(i) for i in range(m)],
        lipschitz_L=lam_max / m,
        per_component_L0=1.0,
        strong_mu=lam_min / m,
        restricted_mu=lam_min / m,
        f_star=0.5 * sigma_sq,
        solution_projector=_constant_projector(sys.x_ls),
        full_grad=full_grad,
        batch_component_grad=batch_grad,
        all_component_grads=all_grads,
        grad_zero_points=[sys.x_ls.copy()],
        analytic_M=m * lam_max / lam_min ** 2,
        analytic_sigma_sq=sigma_sq,
        kaczmarz=sys,
    )


# ---------------------------------------------------------------------------
# Quadratics sharing one minimizer: every component gradient vanishes there.
# ---------------------------------------------------------------------------

def make_shared_minimizer_quadratics(dim: int = 3, n_components: int = 4,
                                     construction_seed: int = 7) -> FiniteSumProblem:
    """fᵢ(x) = sᵢ · 0.5‖x − c‖² — scaled copies of one quadratic.

    Interpolation holds exactly (all ∇fᵢ(c) = 0), so the strong growth
    ratio maxᵢ‖∇fᵢ‖²/‖∇f‖² equals max sᵢ²/s̄² everywhere and stays finite.
    """
    g = rng.substream(construction_seed, 0)
    scales = 0.5 + g.random(n_components)  # in [0.5, 1.5)
    center = g.standard_normal(dim)
    s_bar = float(scales.mean())
    B = float(np.max(scales ** 2) / s_bar ** 2)

    def _make(i):
        s = float(scales[i])
        return Component(
            value=lambda x, s=s: 0.5 * s * float(((x - center) ** 2).sum()),
            grad=lambda x, s=s: s * (x - center),
        )

    def full_grad(x):
        return s_bar * (x - center)

    def batch_grad(X, idx):
        return scales[idx][None, :] * (X - center[:, None])

    def all_grads(x):
        return scales[:, None] * (x - center)[None, :]

    return FiniteSumProblem(
        name="shared_minimizer",
        dim=dim,
        components=[_make(i) for i in range(n_components)],
        lipschitz_L=s_bar,
        per_component_L0=float(scales.max()),
        strong_mu=s_bar,
        restricted_mu=s_bar,
        f_star=0.0,
        solution_projector=_constant_projector(center),
        full_grad=full_grad,
        batch_component_grad=batch_grad,
        all_component_grads=all_grads,
        grad_zero_points=[center.copy()],
        analytic_M=B,
        analytic_sigma_sq=0.0,
        analytic_B=B,
    )


# ---------------------------------------------------------------------------
# ℓ1-regularized strongly convex quadratic with persistent gradient noise.
# ---------------------------------------------------------------------------

def make_quadratic_l1(construction_seed: int = 42, dim: int = 10,
                      n_components: int = 20,
                      l1_weight: float = 0.005) -> FiniteSumProblem:
    """Components share one SPD Hessian Q but carry opposed linear terms.

    fᵢ(x) = 0.5(x−x̄)ᵀQ(x−x̄) + ⟨cᵢ, x−x̄⟩ with the cᵢ in ± pairs along one
    eigenvector, so ∇f(x) = Q(x−x̄) and the conditional second moment is
    exactly ‖∇f(x)‖² + mean‖cᵢ‖²: the weak growth condition holds globally
    with M = 1 and σ² = mean‖cᵢ‖².  The problem bundles an ℓ1 regularizer;
    the solution set is the regularized optimum, found by a deterministic
    proximal-gradient solve to fixed-point residual 1e-12.
    """
    if n_components % 2 != 0:
        raise ValueError("n_components must be even (linear terms come in ± pairs)")
    g = rng.substream(construction_seed, 0)
    Gm = g.standard_normal((dim, dim))
    V, _ = np.linalg.qr(Gm)
    lam = np.linspace(1.0, 2.0, dim)
    Q = (V * lam) @ V.T
    Q = 0.5 * (Q + Q.T)
    xbar = g.standard_normal(dim)
    zeta = np.abs(g.standard_normal(n_components // 2)) + 0.5
    v1 = V[:, 0]
    C = np.empty((n_components, dim))
    C[0::2] = zeta[:, None] * v1[None, :]
    C[1::2] = -zeta[:, None] * v1[None, :]

    ev = np.linalg.eigvalsh(Q)
    L, mu = float(ev[-1]), float(ev[0])

    def _make(i):
        c = C[i]
        return Component(
            value=lambda x, c=c: 0.5 * float((x - xbar) @ Q @ (x - xbar))
            + float(c @ (x - xbar)),
            grad=lambda x, c=c: _accum.matvec_vec(Q, x - xbar) + c,
        )

    def full_grad(x):
        return _accum.matvec_vec(Q, x - xbar)

    def batch_grad(X, idx):
        return _accum.matvec_cols(Q, X - xbar[:, None]) + C[idx].T

    def all_grads(x):
        return _accum.matvec_vec(Q, x - xbar)[None, :] + C

    reg = l1_regularizer(l1_weight)
    xstar = _prox_gradient_solve(full_grad, reg, L, np.zeros(dim))

    return FiniteSumProblem(
        name="quadratic_l1",
        dim=dim,
        components=[_make(i) for i in range(n_components)],
        lipschitz_L=L,
        per_component_L0=L,
        strong_mu=mu,
        restricted_mu=0.0,
        f_star=0.0,
        solution_projector=_constant_projector(xstar),
        full_grad=full_grad,
        batch_component_grad=batch_grad,
        all_component_grads=all_grads,
        grad_zero_points=[xbar.copy()],
        analytic_M=1.0,
        analytic_sigma_sq=float(np.mean(zeta ** 2)),
        regularizer=reg,
    )


def _prox_gradient_solve(full_grad, reg, L, x0, tol=1e-12, max_iter=100_000):
    """Deterministic proximal-gradient solve used as a solution surrogate."""
    x = np.asarray(x0, dtype=float).copy()
    step = 1.0 / L
    for _ in range(max_iter):
        x_next = prox(reg, step, x - step * full_grad(x))
        if np.linalg.norm(x_next - x) <= tol:
            return x_next
        x = x_next
    raise RuntimeError("proximal-gradient surrogate solve did not converge")
