"""Exact proximal and projection kernels shared by both solvers.

All kernels are pure functions of their inputs and operate on complex vectors
by shrinking moduli while preserving phases.  The max-norm prox and the
l1-ball projection are Moreau duals of each other, which the test suite uses
as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import FrameOperator, _as_complex_vector

PARSEVAL_TOL = 1e-8


@dataclass(frozen=True)
class ProxResult:
    """Prox output ``u`` together with the clamp level ``alpha``.

    Every entry of ``u`` has modulus at most ``alpha`` (for the tilde variant
    the bound holds separately for real and imaginary parts), and nonzero
    entries keep the phase of the corresponding input entry.
    """

    u: np.ndarray
    alpha: float


def _phases(z: np.ndarray, moduli: np.ndarray) -> np.ndarray:
    # sign(z) = z/|z| with sign(0) = 0
    safe = np.where(moduli > 0, moduli, 1.0)
    return np.where(moduli > 0, z / safe, 0.0)


def _water_level(moduli_desc: np.ndarray, tau: float) -> float:
    # clamp level solving sum_i (s_i - alpha)_+ = tau, i.e. the largest
    # running average (sum_{i<=k} s_i - tau)/k, floored at zero
    k = np.arange(1, moduli_desc.size + 1)
    running = (np.cumsum(moduli_desc) - tau) / k
    return max(0.0, float(running.max()))


def prox_inf(z, tau: float) -> ProxResult:
    """Proximal operator of the max-norm: argmin ||x||_inf + ||x - z||^2/(2 tau).

    Sorts moduli in descending order, finds the clamp level alpha satisfying
    the optimality condition sum_i (|z_i| - alpha)_+ = tau (zero when
    ||z||_1 <= tau), and clamps all moduli at alpha while preserving phases.
    tau = 0 is the identity map (alpha is then the max modulus), so step
    sizes may be annealed to zero safely.
    """
    z = np.asarray(z, dtype=np.complex128)
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    a = np.abs(z)
    if z.size == 0:
        return ProxResult(u=z.copy(), alpha=0.0)
    if tau == 0:
        return ProxResult(u=z.copy(), alpha=float(a.max()))
    alpha = _water_level(np.sort(a)[::-1], tau)
    # clamp via the radial factor min(1, alpha/|z_k|): preserves phases exactly
    factor = np.ones_like(a)
    mask = a > alpha
    factor[mask] = alpha / a[mask]
    return ProxResult(u=z * factor, alpha=alpha)


def prox_inf_tilde(z, tau: float) -> ProxResult:
    """Prox of max(||Re x||_inf, ||Im x||_inf), via the real prox on [Re; Im]."""
    z = np.asarray(z, dtype=np.complex128)
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    stacked = np.concatenate([z.real, z.imag])
    res = prox_inf(stacked, tau)
    n = z.size
    u = res.u[:n] + 1j * res.u[n:]
    return ProxResult(u=u, alpha=res.alpha)


def norm_inf_tilde(x) -> float:
    """max(||Re x||_inf, ||Im x||_inf); equals ||x||_inf for real vectors."""
    x = np.asarray(x, dtype=np.complex128)
    if x.size == 0:
        return 0.0
    return float(max(np.abs(x.real).max(), np.abs(x.imag).max()))


def project_l2_ball(w, eps: float) -> np.ndarray:
    """Euclidean projection onto the l2-ball of radius eps (zero map for eps=0)."""
    w = np.asarray(w, dtype=np.complex128)
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if eps == 0.0:
        return np.zeros_like(w)
    return w * (eps / max(float(np.linalg.norm(w)), eps))


def project_l1_ball(z, radius: float) -> np.ndarray:
    """Euclidean projection onto {v : sum |v_k| <= radius} for complex vectors.

    Soft-thresholds moduli at the water-filling level found by sorting,
    preserving phases (the standard complex extension of the simplex-based
    real projection).
    """
    z = np.asarray(z, dtype=np.complex128)
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    a = np.abs(z)
    if a.sum() <= radius:
        return z.copy()
    s = np.sort(a)[::-1]
    k = np.arange(1, s.size + 1)
    levels = (np.cumsum(s) - radius) / k
    k_star = int(np.nonzero(s > levels)[0].max())
    theta = levels[k_star]
    return _phases(z, a) * np.maximum(a - theta, 0.0)


def project_affine(frame: FrameOperator, x, y, mode: str = "parseval") -> np.ndarray:
    """Euclidean projection of x onto the affine set {x : D x = y}.

    ``parseval`` mode uses x - D^H (D x - y) and requires a certified Parseval
    frame; ``general`` mode solves (D D^H) s = D x - y through a Cholesky
    factorization cached on the frame.
    """
    x = _as_complex_vector(x, frame.n, "projection input")
    y = _as_complex_vector(y, frame.m, "projection target")
    r = frame.apply(x) - y
    if mode == "parseval":
        if not frame.is_parseval(PARSEVAL_TOL):
            raise ValueError(
                f"parseval projection requires a Parseval frame; measured "
                f"residual {frame.parseval_residual():.3e} exceeds {PARSEVAL_TOL}")
        return x - frame.adjoint(r)
    if mode != "general":
        raise ValueError(f"unknown projection mode {mode!r}")
    import scipy.linalg
    s = scipy.linalg.cho_solve(frame.gram_cholesky(), r)
    return x - frame.adjoint(s)
