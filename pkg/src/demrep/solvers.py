"""First-order solvers for minimum max-norm signal representations.

Two solvers are provided for

    minimize ||x||_inf  subject to  ||y - D x||_2 <= epsilon,

* :func:`solve_cram` -- a primal-dual hybrid-gradient scheme valid for any
  frame and any epsilon >= 0, with a duality-gap certificate computed from the
  running multiplier;
* :func:`solve_cramp` -- Douglas-Rachford splitting for Parseval (or tight)
  frames at epsilon = 0, whose every iterate is exactly feasible.

Both support the alternative objective max(||Re x||_inf, ||Im x||_inf) via
``SolverConfig.norm = "inf-tilde"``.  A least-squares baseline and the
Lagrange-dual objective evaluation used for optimality certificates live here
as well.

The dual problem (for p-norm primal with dual norm d) is

    maximize Re(y^H z) - epsilon ||z||_2  subject to  ||D^H z||_d <= 1,

and has zero gap at the optimum; any dual-feasible z yields a lower bound on
the primal optimum, which is what the gap certificate reports.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .frames import FrameOperator, frame_bounds, _as_complex_vector
from .prox import (PARSEVAL_TOL, norm_inf_tilde, project_l2_ball, prox_inf,
                   prox_inf_tilde)

_NORM_MODES = ("inf", "inf-tilde")


@dataclass
class SolverConfig:
    """Tolerances and step sizes shared by both solvers.

    ``tau``/``sigma`` default to scale-aware steps: tau*sigma*(||D||^2+1) < 1
    with tau/sigma proportional to ||y|| (CRAM), and tau = ||y||/sqrt(N)
    (CRAMP).  Non-adaptive CRAM rejects explicit steps violating the
    convergence condition.  ``adaptive`` enables residual-balancing step
    adaptation (deterministic, off by default).
    """

    epsilon: float = 0.0
    tau: float | None = None
    sigma: float | None = None
    max_iters: int = 20000
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    tol_gap: float = 1e-6
    adaptive: bool = False
    norm: str = "inf"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.norm not in _NORM_MODES:
            raise ValueError(f"norm must be one of {_NORM_MODES}, got {self.norm!r}")
        for name in ("tau", "sigma"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass
class SolverResult:
    """Solution, rescaled dual certificate, and convergence diagnostics."""

    x: np.ndarray
    dual: np.ndarray
    iterations: int
    primal_objective: float
    dual_objective: float
    gap: float
    residual_feasibility: float
    converged: bool
    seconds: float = 0.0
    # largest ||D x_k - y||_2 over all iterates; tracked by CRAMP only
    max_iterate_residual: float | None = None

    @property
    def relative_gap(self) -> float:
        return self.gap / max(1.0, abs(self.primal_objective))

    def to_json_dict(self) -> dict:
        out = {
            "primalObjective": self.primal_objective,
            "dualObjective": self.dual_objective,
            "gap": self.gap,
            "relativeGap": self.relative_gap,
            "iterations": self.iterations,
            "residualFeasibility": self.residual_feasibility,
            "converged": self.converged,
            "seconds": self.seconds,
        }
        if self.max_iterate_residual is not None:
            out["maxIterateResidual"] = self.max_iterate_residual
        return out


@dataclass(frozen=True)
class GapReport:
    """Post-hoc optimality certificate from a dual-feasible point."""

    primal_objective: float
    dual_objective: float
    relative_gap: float
    certified: bool
    dual_constraint_norm: float


def _objective(x: np.ndarray, mode: str) -> float:
    if mode == "inf-tilde":
        return norm_inf_tilde(x)
    return float(np.abs(x).max()) if x.size else 0.0


def _prox(mode: str):
    return prox_inf_tilde if mode == "inf-tilde" else prox_inf


def _dual_feas_norm(w: np.ndarray, mode: str) -> float:
    # dual norm of the objective norm: l1 for max-norm, split l1 for the
    # tilde variant (max over real/imag parts dualizes to the sum of both)
    if mode == "inf-tilde":
        return float(np.abs(w.real).sum() + np.abs(w.imag).sum())
    return float(np.abs(w).sum())


def _rescale_dual(frame: FrameOperator, y: np.ndarray, z_raw: np.ndarray,
                  epsilon: float, mode: str):
    """Scale z_raw along its ray to the best dual-feasible point.

    Returns (z, value) with ||D^H z||_d <= 1; value = Re(y^H z) - eps*||z||_2
    is a valid lower bound on the primal optimum (0 when the ray is useless).
    """
    t = _dual_feas_norm(frame.adjoint(z_raw), mode)
    if t <= 1e-300:
        return np.zeros(frame.m, dtype=np.complex128), 0.0
    z = z_raw / t
    val = float(np.real(np.vdot(y, z))) - epsilon * float(np.linalg.norm(z))
    if val <= 0.0:
        return np.zeros(frame.m, dtype=np.complex128), 0.0
    return z, val


def solve_cram(frame: FrameOperator, y, cfg: SolverConfig | None = None, *,
               v_update: str = "ball") -> SolverResult:
    """Primal-dual solver for the epsilon-budget max-norm problem.

    Iterates the saddle-point scheme

        x   <- prox of the objective norm at  x - tau D^H lambda
        v   <- projection of v + tau lambda onto the epsilon-ball
        lam <- lam + sigma (D x~ - v~ - y)      (extrapolated primal points)

    and stops when the split residual ||D x - v - y||, the successive-iterate
    change, and the certified duality gap are all below their tolerances.  The
    returned dual is the multiplier rescaled to exact dual feasibility, so its
    objective is a true lower bound.

    ``v_update="elementwise"`` clips each entry of v onto the disk of radius
    epsilon instead of projecting the vector onto the epsilon-ball; it exists
    for A/B comparison only.
    """
    cfg = cfg or SolverConfig()
    y = _as_complex_vector(y, frame.m, "signal y")
    if v_update not in ("ball", "elementwise"):
        raise ValueError(f"unknown v_update mode {v_update!r}")
    eps = cfg.epsilon
    mode = cfg.norm
    prox = _prox(mode)

    n, m = frame.n, frame.m
    ny = float(np.linalg.norm(y))
    yscale = ny if ny > 0 else 1.0

    lsq = frame.norm2_squared() + 1.0
    if cfg.tau is None and cfg.sigma is None:
        # scaling tau by ||y|| and sigma by 1/||y|| keeps the product inside
        # the convergence bound and makes iterates exactly equivariant under
        # y -> c y (the prox and the multiplier live on different scales)
        c = math.sqrt(0.95) if cfg.adaptive else 0.99
        tau = c * yscale / math.sqrt(lsq)
        sigma = c / (yscale * math.sqrt(lsq))
    else:
        tau = cfg.tau if cfg.tau is not None else 0.99 / (lsq * cfg.sigma)
        sigma = cfg.sigma if cfg.sigma is not None else 0.99 / (lsq * cfg.tau)
    if not cfg.adaptive and tau * sigma * lsq >= 1.0:
        raise ValueError(
            f"step sizes violate tau*sigma*(||D||^2+1) < 1: "
            f"{tau:.3e} * {sigma:.3e} * {lsq:.3e} >= 1")
    prim_thresh = max(eps * (1.0 + cfg.tol_primal), cfg.tol_primal * ny)

    x = np.zeros(n, dtype=np.complex128)
    v = np.zeros(m, dtype=np.complex128)
    lam = np.zeros(m, dtype=np.complex128)
    dx = np.zeros(m, dtype=np.complex128)

    # residual-balancing state (spec'd rule; adaptivity diminishes on reversal)
    alpha = 0.5
    last_direction = 0

    t0 = time.perf_counter()
    converged = False
    r_p = np.inf
    zdual = np.zeros(m, dtype=np.complex128)
    dual_val = 0.0
    primal = 0.0
    gap = np.inf
    k = 0
    for k in range(1, cfg.max_iters + 1):
        x_new = prox(x - tau * frame.adjoint(lam), tau).u
        dx_new = frame.apply(x_new)
        vhat = v + tau * lam
        if v_update == "ball":
            v_new = project_l2_ball(vhat, eps)
        else:
            v_new = vhat * (eps / np.maximum(np.abs(vhat), eps)) if eps > 0 \
                else np.zeros_like(vhat)
        lam = lam + sigma * ((2.0 * dx_new - dx) - (2.0 * v_new - v) - y)

        r_p = float(np.linalg.norm(dx_new - v_new - y))
        d_r = (float(np.linalg.norm(x_new - x)) + float(np.linalg.norm(v_new - v))) \
            / (tau * max(yscale, float(np.linalg.norm(x_new))))
        x, v, dx = x_new, v_new, dx_new

        if not (r_p <= 1e300):
            raise FloatingPointError(
                f"CRAM diverged: non-finite iterate at iteration {k}")

        if cfg.adaptive and k % 10 == 0:
            # enlarge the step of the side whose residual lags; the feedback
            # through d_r's 1/tau factor rules out the opposite pairing
            direction = 0
            if r_p > 10.0 * d_r:
                direction = 1
                sigma *= 1.0 + alpha
                tau /= 1.0 + alpha
            elif d_r > 10.0 * r_p:
                direction = -1
                tau *= 1.0 + alpha
                sigma /= 1.0 + alpha
            if direction and last_direction and direction != last_direction:
                alpha *= 0.5
            if direction:
                last_direction = direction
            scale = tau * sigma * lsq
            if scale > 0.95:
                shrink = math.sqrt(0.95 / scale)
                tau *= shrink
                sigma *= shrink

        if r_p <= prim_thresh and d_r <= cfg.tol_dual:
            zdual, dual_val = _rescale_dual(frame, y, -lam, eps, mode)
            primal = _objective(x, mode)
            gap = primal - dual_val
            if gap <= cfg.tol_gap * max(1.0, abs(primal)):
                converged = True
                break

    if not converged:
        zdual, dual_val = _rescale_dual(frame, y, -lam, eps, mode)
        primal = _objective(x, mode)
        gap = primal - dual_val

    return SolverResult(
        x=x, dual=zdual, iterations=k, primal_objective=primal,
        dual_objective=dual_val, gap=gap, residual_feasibility=r_p,
        converged=converged, seconds=time.perf_counter() - t0)


def _tight_frame_scale(frame: FrameOperator) -> float:
    """1.0 for certified Parseval frames, the common bound A for tight ones."""
    if frame.is_parseval(PARSEVAL_TOL):
        return 1.0
    mode = "exact" if frame.m <= 2048 else "estimate"
    fb = frame_bounds(frame, mode=mode)
    if abs(fb.upper - fb.lower) <= 1e-8 * fb.upper:
        return 0.5 * (fb.upper + fb.lower)
    raise ValueError(
        f"CRAMP requires a Parseval or tight frame; bounds A={fb.lower:.6g}, "
        f"B={fb.upper:.6g} are not equal")


def solve_cramp(frame: FrameOperator, y, cfg: SolverConfig | None = None, *,
                track_iterate_residuals: bool = True) -> SolverResult:
    """Douglas-Rachford solver for exact representations over Parseval frames.

    Alternates the objective-norm prox with the affine projection
    Pi(x) = x - D^H (D x - y) (scaled by 1/A for tight frames), reflecting and
    averaging in the standard Douglas-Rachford pattern.  Every iterate
    returned from the projection satisfies D x = y to floating-point accuracy,
    so stopping at the iteration cap still yields an exact representation.

    Tight frames with A = B != 1 are accepted; epsilon > 0 is not (use CRAM).
    The dual certificate is recovered from the prox subgradient (z - x^)/tau,
    mapped through D and rescaled to dual feasibility.
    """
    cfg = cfg or SolverConfig()
    if cfg.epsilon != 0.0:
        raise ValueError(
            f"CRAMP solves the exact problem only (epsilon = 0); got epsilon="
            f"{cfg.epsilon}, use CRAM instead")
    scale = _tight_frame_scale(frame)
    y = _as_complex_vector(y, frame.m, "signal y")
    mode = cfg.norm
    prox = _prox(mode)
    if cfg.tau is not None:
        tau = cfg.tau
    else:
        # ||y||/sqrt(N) matches the optimum's magnitude scale and makes the
        # iteration equivariant under rescaling of y (= 1/sqrt(N) for the
        # unit-norm signals used throughout the experiments)
        ny = float(np.linalg.norm(y))
        tau = (ny if ny > 0 else 1.0) / math.sqrt(frame.n)

    t0 = time.perf_counter()
    x = solve_least_squares(frame, y, 0.0)
    z = x.copy()
    obj = _objective(x, mode)
    max_feas = float(np.linalg.norm(frame.apply(x) - y)) if track_iterate_residuals else None

    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        xhat = prox(z, tau).u
        zhat = 2.0 * xhat - z
        corr = frame.adjoint(frame.apply(zhat) - y)
        if scale != 1.0:
            corr /= scale
        x_next = zhat - corr
        step = x_next - xhat
        z += step

        fp_res = float(np.linalg.norm(step))
        obj_next = _objective(x_next, mode)
        if track_iterate_residuals:
            feas = float(np.linalg.norm(frame.apply(x_next) - y))
            max_feas = max(max_feas, feas)
        x_norm = float(np.linalg.norm(x))
        stop = (fp_res <= cfg.tol_primal * x_norm
                and abs(obj_next - obj) <= cfg.tol_gap * max(1.0, obj_next))
        x = x_next
        obj = obj_next
        if not (obj <= 1e300):
            raise FloatingPointError(
                f"CRAMP diverged: non-finite iterate at iteration {k}")
        if stop:
            converged = True
            break

    # dual certificate: (z - prox(z))/tau approximates a subgradient of the
    # objective at the solution, which equals -D^H lambda at optimality
    u = (z - prox(z, tau).u) / tau
    zdual, dual_val = _rescale_dual(frame, y, frame.apply(u) / scale, 0.0, mode)
    resid = float(np.linalg.norm(frame.apply(x) - y))

    return SolverResult(
        x=x, dual=zdual, iterations=k, primal_objective=obj,
        dual_objective=dual_val, gap=obj - dual_val,
        residual_feasibility=resid, converged=converged,
        seconds=time.perf_counter() - t0, max_iterate_residual=max_feas)


def solve_least_squares(frame: FrameOperator, y, epsilon: float = 0.0) -> np.ndarray:
    """Minimum l2-norm representation with residual budget epsilon.

    epsilon = 0 returns D^H (D D^H)^{-1} y; for 0 < epsilon < ||y|| the
    regularized solution D^H (D D^H + mu I)^{-1} y is returned with mu chosen
    by bisection so that ||y - D x|| = epsilon to 1e-9 relative accuracy;
    epsilon >= ||y|| returns the zero vector.
    """
    y = _as_complex_vector(y, frame.m, "signal y")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    ny = float(np.linalg.norm(y))
    if epsilon >= ny:
        return np.zeros(frame.n, dtype=np.complex128)

    if frame.kind != "dense":
        # rows of a unitary DFT: D D^H = I exactly
        if epsilon == 0.0:
            return frame.adjoint(y)
        mu = epsilon / (ny - epsilon)
        return frame.adjoint(y / (1.0 + mu))

    if epsilon == 0.0:
        s = scipy.linalg.cho_solve(frame.gram_cholesky(), y)
        return frame.adjoint(s)

    lam, u = frame.gram_eig()
    if lam[0] <= 1e-14 * max(lam[-1], 1.0):
        raise ValueError("D D^H is singular: frame lower bound A = 0")
    yh = u.conj().T @ y
    ah = np.abs(yh) ** 2

    def residual(mu):
        return math.sqrt(float(np.sum((mu / (lam + mu)) ** 2 * ah)))

    hi = float(lam[-1])
    while residual(hi) < epsilon:
        hi *= 2.0
        if hi > 1e300:
            break
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = residual(mid)
        if abs(r - epsilon) <= 1e-12 * epsilon:
            lo = hi = mid
            break
        if r < epsilon:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    return frame.adjoint(u @ (yh / (lam + mu)))


_DUAL_NORM_BY_P = {1: np.inf, 2: 2, "inf": 1, np.inf: 1}


def dual_objective(frame: FrameOperator, y, z, epsilon: float, p=("inf")) -> float:
    """Lagrange-dual objective Re(y^H z) - epsilon ||z||_2 at a feasible z.

    ``p`` names the primal norm (1, 2, or "inf"); z must satisfy
    ||D^H z||_d <= 1 for the corresponding dual norm d within 1e-9, otherwise
    a ValueError asks the caller to rescale first.
    """
    y = _as_complex_vector(y, frame.m, "signal y")
    z = _as_complex_vector(z, frame.m, "dual vector z")
    if p not in _DUAL_NORM_BY_P:
        raise ValueError(f"p must be 1, 2, or 'inf', got {p!r}")
    d = _DUAL_NORM_BY_P[p]
    c = float(np.linalg.norm(frame.adjoint(z), ord=d)) if z.size else 0.0
    if c > 1.0 + 1e-9:
        raise ValueError(
            f"dual constraint violated: ||D^H z||_{d} = {c:.12g} > 1; rescale z first")
    return float(np.real(np.vdot(y, z))) - epsilon * float(np.linalg.norm(z))


def certify(result: SolverResult, frame: FrameOperator, y,
            cfg: SolverConfig | None = None) -> GapReport:
    """Package a solver run into a weak-duality optimality certificate.

    Rescales the solver's dual iterate to exact feasibility, evaluates the
    dual objective, and reports the relative gap against the primal
    objective.  A large gap is a report, not an error.
    """
    cfg = cfg or SolverConfig()
    y = _as_complex_vector(y, frame.m, "signal y")
    z_raw = np.asarray(result.dual, dtype=np.complex128)
    constraint = _dual_feas_norm(frame.adjoint(z_raw), cfg.norm)
    if constraint > 1.0:
        z_raw = z_raw / constraint
        constraint = 1.0
    val = float(np.real(np.vdot(y, z_raw))) - cfg.epsilon * float(np.linalg.norm(z_raw))
    val = max(val, 0.0)
    primal = result.primal_objective
    rel = (primal - val) / max(1.0, abs(primal))
    return GapReport(primal_objective=primal, dual_objective=val,
                     relative_gap=rel, certified=rel <= cfg.tol_gap,
                     dual_constraint_norm=constraint)
