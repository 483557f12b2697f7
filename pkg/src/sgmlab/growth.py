"""Growth constants and exact inequality checks for finite-sum problems.

Everything here is computed by enumerating all n components — conditional
expectations are exact sums, so a reported violation is a genuine
counterexample rather than Monte Carlo noise.  Constants are fitted over an
explicit probe set and are sound only there; reports carry the probe
descriptor to make that scope visible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng, solvers
from .problems import FiniteSumProblem, KaczmarzSystem, exact_conditional_moment

__all__ = [
    "GrowthReport",
    "NecessaryConditionReport",
    "probe_grid",
    "fit_wgc",
    "fit_sgc",
    "kaczmarz_M",
    "verify_necessary_condition",
    "measured_worst_omega",
    "contraction_margins",
    "example1_constants",
    "growth_record",
    "write_growth_json",
]

ZERO_GRAD_TOL = 1e-12
_PROBE_STREAM = 0x70726F6265  # reserved substream index for probe draws
_MARGIN_RTOL = 1e-9


@dataclass
class GrowthReport:
    """Fitted or analytic growth constants over a probe set.

    ``B_sgc`` is the strong-growth constant (∞ when some probe has a
    vanishing mean gradient but non-vanishing component gradients);
    (M_wgc, sigma_sq) is the lexicographically minimal weak-growth
    envelope; classification follows the chain SGC ⟹ GC ⟹ WGC.
    """

    B_sgc: float
    M_wgc: float
    sigma_sq: float
    classification: str
    probe_seed: int | None = None
    probe_scales: tuple = ()
    analytic: bool = False
    degenerate: bool = False


def probe_grid(problem: FiniteSumProblem, seed: int, n_points: int = 32,
               scales=(0.1, 1.0, 10.0)):
    """Deterministic probe set: seeded standard-normal points at several
    scales, plus the problem's known stationary points and the projection
    of the origin onto the solution set."""
    g = rng.substream(seed, _PROBE_STREAM)
    base = g.standard_normal((n_points, problem.dim))
    points = [s * z for z in base for s in scales]
    points.extend(np.asarray(p, dtype=float).copy()
                  for p in problem.grad_zero_points)
    points.append(np.asarray(problem.solution_projector(np.zeros(problem.dim)),
                             dtype=float))
    return points


def fit_sgc(problem: FiniteSumProblem, probe_points) -> float:
    """Smallest B with maxᵢ‖∇fᵢ(x)‖² ≤ B‖∇f(x)‖² over the probe set.

    Returns ∞ when a probe has ‖∇f(x)‖ ≤ 1e-12 while some component
    gradient does not vanish — strong growth demands interpolation.
    """
    B = 1.0
    for x in probe_points:
        grads = problem.all_component_grads(np.asarray(x, dtype=float))
        comp_sq = (grads * grads).sum(axis=1)
        mean_grad = grads.mean(axis=0)
        full_sq = float(mean_grad @ mean_grad)
        max_comp = float(comp_sq.max())
        if math.sqrt(full_sq) <= ZERO_GRAD_TOL:
            if math.sqrt(max_comp) > ZERO_GRAD_TOL:
                return math.inf
        else:
            B = max(B, max_comp / full_sq)
    return B


def fit_wgc(problem: FiniteSumProblem, probe_points, probe_seed=None,
            probe_scales=()) -> GrowthReport:
    """Lexicographically minimal (σ², M) envelope over the probe set.

    σ² is pinned by the probes with vanishing mean gradient (the envelope
    there is σ² alone), then M is the smallest multiplier covering the
    rest, clamped below at 1 — the conditional variance decomposition makes
    any smaller M unsound.
    """
    if not probe_points:
        raise ValueError("probe set must be nonempty")
    rows = []
    for x in probe_points:
        mean_grad, second_moment = exact_conditional_moment(problem, x)
        rows.append((float(mean_grad @ mean_grad), second_moment))
    sigma_sq = 0.0
    ratios = []
    for full_sq, moment in rows:
        if math.sqrt(full_sq) <= ZERO_GRAD_TOL:
            sigma_sq = max(sigma_sq, moment)
    for full_sq, moment in rows:
        if math.sqrt(full_sq) > ZERO_GRAD_TOL:
            ratios.append((moment - sigma_sq) / full_sq)
    degenerate = not ratios
    M = max(1.0, max(ratios)) if ratios else 1.0
    for full_sq, moment in rows:  # envelope soundness, by construction
        if moment > M * full_sq + sigma_sq + 1e-9:
            raise RuntimeError("weak-growth envelope fit is unsound; "
                               "this indicates a broken component oracle")
    classification = "GC" if sigma_sq <= 1e-12 else "WGC"
    return GrowthReport(B_sgc=fit_sgc(problem, probe_points), M_wgc=M,
                        sigma_sq=sigma_sq, classification=classification,
                        probe_seed=probe_seed, probe_scales=tuple(probe_scales),
                        analytic=False, degenerate=degenerate)


def kaczmarz_M(sys: KaczmarzSystem) -> float:
    """Closed-form weak-growth constant m‖A‖²‖(AᵀA)⁻¹‖² of a Kaczmarz system."""
    ev = np.linalg.eigvalsh(sys.A.T @ sys.A)
    if ev[0] <= 0:
        raise ValueError("system matrix must have full column rank")
    return sys.m * float(ev[-1]) / float(ev[0]) ** 2


def enumerate_successors(problem: FiniteSumProblem, geometry, gamma: float,
                         x: np.ndarray, method: str | None = None) -> np.ndarray:
    """All n one-step successors of x as columns of a (d, n) matrix."""
    if method is None:
        method = solvers._infer_method(geometry)
    x = np.asarray(x, dtype=float)
    grads = problem.all_component_grads(x)
    Y = x[:, None] - gamma * grads.T
    return solvers._apply_geometry(method, geometry, gamma, Y)


@dataclass
class NecessaryConditionReport:
    """Per-iterate margins of the second-moment bound E‖G‖² ≤ ‖EG‖²/(1−ω) + σ².

    ``flagged`` lists iterations whose margin fell below −1e-9·(1 + rhs);
    ``hypothesis_failures`` lists iterations where the assumed one-step
    contraction E‖x₊−x̄₊‖² ≤ ω‖x−x̄‖² + γ²σ² itself failed (those are
    excluded from the conclusion check).
    """

    margins: np.ndarray
    flagged: list = field(default_factory=list)
    hypothesis_failures: list = field(default_factory=list)
    omega: float = math.nan
    sigma_sq: float = math.nan

    @property
    def ok(self) -> bool:
        return not self.flagged


def verify_necessary_condition(problem: FiniteSumProblem, geometry,
                               gamma: float, trajectory, omega: float,
                               sigma_sq: float,
                               method: str | None = None) -> NecessaryConditionReport:
    """Exact check of the variance bound implied by linear convergence.

    At every stored iterate, enumerates all components to compute the
    conditional mean and second moment of the one-step residual mapping
    G = (x − x₊)/γ, and verifies E‖G‖² ≤ ‖E G‖²/(1−ω) + σ².  Requires a
    trajectory recorded without thinning.
    """
    if not 0 < omega < 1:
        raise ValueError("omega must lie in (0, 1)")
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be nonnegative")
    if len(trajectory.point_steps) != trajectory.iters + 1:
        raise ValueError("necessary-condition check requires full iterates "
                         "(run with T small enough to avoid thinning)")
    proj = problem.solution_projector
    margins = np.empty(len(trajectory.points))
    flagged, hyp_failures = [], []
    for t, x in enumerate(trajectory.points):
        succ = enumerate_successors(problem, geometry, gamma, x, method)
        G = (x[:, None] - succ) / gamma
        lhs = float((G * G).sum(axis=0).mean())
        mean_G = G.mean(axis=1)
        rhs = float(mean_G @ mean_G) / (1.0 - omega) + sigma_sq
        margins[t] = rhs - lhs

        Dp = succ - proj(succ)
        mean_next = float((Dp * Dp).sum(axis=0).mean())
        xc = x - proj(x)
        hyp_rhs = omega * float(xc @ xc) + gamma * gamma * sigma_sq
        if mean_next > hyp_rhs + _MARGIN_RTOL * (1.0 + hyp_rhs):
            hyp_failures.append(t)
            continue
        if margins[t] < -_MARGIN_RTOL * (1.0 + rhs):
            flagged.append(t)
    return NecessaryConditionReport(margins=margins, flagged=flagged,
                                    hypothesis_failures=hyp_failures,
                                    omega=omega, sigma_sq=sigma_sq)


def measured_worst_omega(problem: FiniteSumProblem, geometry, gamma: float,
                         trajectory, sigma_sq: float,
                         method: str | None = None) -> float:
    """Worst exact one-step contraction (E‖x₊−x̄₊‖² − γ²σ²) / ‖x−x̄‖² along
    a trajectory, skipping iterates already on the solution set."""
    proj = problem.solution_projector
    worst = 0.0
    for x in trajectory.points:
        xc = x - proj(x)
        dist = float(xc @ xc)
        if dist <= 1e-30:
            continue
        succ = enumerate_successors(problem, geometry, gamma, x, method)
        Dp = succ - proj(succ)
        mean_next = float((Dp * Dp).sum(axis=0).mean())
        worst = max(worst, (mean_next - gamma * gamma * sigma_sq) / dist)
    return worst


def contraction_margins(problem: FiniteSumProblem, geometry, gamma: float,
                        points, rho: float, sigma1_sq: float,
                        method: str | None = None):
    """Margins of the exact per-step bound E‖x₊−x̄₊‖² ≤ (1−ρ)‖x−x̄‖² + γ²σ₁².

    Returns (margins, flagged) where flagged lists the indices violating
    the bound beyond 1e-9 relative tolerance.
    """
    proj = problem.solution_projector
    margins = np.empty(len(points))
    flagged = []
    for t, x in enumerate(points):
        x = np.asarray(x, dtype=float)
        succ = enumerate_successors(problem, geometry, gamma, x, method)
        Dp = succ - proj(succ)
        mean_next = float((Dp * Dp).sum(axis=0).mean())
        xc = x - proj(x)
        bound = (1.0 - rho) * float(xc @ xc) + gamma * gamma * sigma1_sq
        margins[t] = bound - mean_next
        if margins[t] < -_MARGIN_RTOL * (1.0 + bound):
            flagged.append(t)
    return margins, flagged


def example1_constants(problem: FiniteSumProblem, probe_points):
    """Closed-form weak-growth constants M = 4L₀/μ and σ² = 2β².

    β² is the largest conditional second moment over the solution
    projections of the probes.  Asserts the resulting envelope on every
    probe before returning.
    """
    mu = problem.restricted_mu
    L0 = problem.per_component_L0
    if not mu > 0:
        raise ValueError("these constants require restricted strong convexity "
                         "(restricted_mu > 0)")
    if not L0 > 0:
        raise ValueError("these constants require a positive per-component "
                         "smoothness bound")
    beta_sq = 0.0
    for x in probe_points:
        xbar = problem.solution_projector(np.asarray(x, dtype=float))
        _, moment = exact_conditional_moment(problem, xbar)
        beta_sq = max(beta_sq, moment)
    M = 4.0 * L0 / mu
    sigma_sq = 2.0 * beta_sq
    for x in probe_points:
        mean_grad, moment = exact_conditional_moment(problem, x)
        envelope = M * float(mean_grad @ mean_grad) + sigma_sq
        if moment > envelope + 1e-9:
            raise RuntimeError(
                f"analytic envelope M={M:g}, sigma_sq={sigma_sq:g} fails at a "
                f"probe (moment {moment:g} > {envelope:g})")
    return M, sigma_sq


def growth_record(report: GrowthReport) -> dict:
    """Flat key/value view of a report, matching the documented record keys."""
    rec = {
        "B": report.B_sgc,
        "M": report.M_wgc,
        "sigma_sq": report.sigma_sq,
        "classification": report.classification,
        "probes.seed": report.probe_seed,
        "probes.scales": list(report.probe_scales),
        "analytic": report.analytic,
    }
    if report.degenerate:
        rec["warning"] = "degenerate probe set: all mean gradients vanish"
    return rec


def write_growth_json(path, report: GrowthReport) -> None:
    """Write the flat record as JSON (infinite B serializes as Infinity)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(growth_record(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
