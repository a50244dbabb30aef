"""Figures of merit and theoretical bounds for computed representations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import FrameBounds, UPCertificate


def papr(x) -> float:
    """Peak-to-average power ratio N ||x||_inf^2 / ||x||_2^2 (linear scale)."""
    x = np.asarray(x, dtype=np.complex128)
    e = float(np.linalg.norm(x) ** 2)
    if x.size == 0 or e == 0.0:
        raise ValueError("PAPR is undefined for the zero vector")
    return x.size * float(np.abs(x).max()) ** 2 / e


def papr_db(x) -> float:
    return 10.0 * math.log10(papr(x))


def oversample(x_time, factor: int) -> np.ndarray:
    """Band-limited interpolation of x to factor*N samples.

    Zero-pads the FFT-ordered unitary spectrum in the center (between positive
    and negative frequencies), splitting the Nyquist-bin energy evenly when N
    is even, and compensates amplitudes by sqrt(factor) so the original
    samples are reproduced.
    """
    x = np.asarray(x_time, dtype=np.complex128)
    if factor < 1:
        raise ValueError(f"oversampling factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    n = x.size
    big = np.zeros(factor * n, dtype=np.complex128)
    spec = np.fft.fft(x, norm="ortho")
    if n % 2 == 0:
        h = n // 2
        big[:h] = spec[:h]
        big[h] = 0.5 * spec[h]
        big[factor * n - h] = 0.5 * spec[h]
        if h + 1 < n:
            big[factor * n - h + 1:] = spec[h + 1:]
    else:
        h = (n + 1) // 2
        big[:h] = spec[:h]
        big[factor * n - (n - h):] = spec[h:]
    return math.sqrt(factor) * np.fft.ifft(big, norm="ortho")


def papr_oversampled(x_time, factor: int) -> float:
    """PAPR of the factor-times oversampled (band-limited) signal."""
    return papr(oversample(x_time, factor))


def papr_oversampled_db(x_time, factor: int) -> float:
    return 10.0 * math.log10(papr_oversampled(x_time, factor))


def count_extreme(x, rel_tol: float = 1e-5) -> int:
    """Number of entries with modulus within rel_tol (relative) of the max.

    Iterative solvers never produce exact ties, so the default tolerance
    absorbs solver accuracy; it is exposed per call.
    """
    x = np.asarray(x, dtype=np.complex128)
    if not (0.0 <= rel_tol < 1.0):
        raise ValueError(f"rel_tol must lie in [0, 1), got {rel_tol}")
    a = np.abs(x)
    peak = float(a.max(initial=0.0))
    if x.size == 0 or peak == 0.0:
        raise ValueError("extreme entries are undefined for the zero vector")
    return int(np.count_nonzero(a >= (1.0 - rel_tol) * peak))


def empirical_ku(x, y, epsilon: float) -> float:
    """Empirical lower bound sqrt(N) ||x||_inf / (||y||_2 - epsilon).

    Meaningful only when x solves the epsilon-budget max-norm problem for
    (y, epsilon); it then bounds the upper democracy constant from below.
    """
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    ny = float(np.linalg.norm(y))
    if ny <= epsilon:
        raise ValueError(f"requires ||y|| > epsilon, got ||y||={ny}, epsilon={epsilon}")
    return math.sqrt(x.size) * float(np.abs(x).max()) / (ny - epsilon)


def bound_lower_democracy(bounds: FrameBounds) -> float:
    """Guaranteed lower democracy constant 1/sqrt(B)."""
    if bounds.upper <= 0:
        raise ValueError(f"upper frame bound must be positive, got {bounds.upper}")
    return 1.0 / math.sqrt(bounds.upper)


def bound_upper_democracy(bounds: FrameBounds, up: UPCertificate) -> tuple[float, bool]:
    """UP-based upper democracy bound eta / ((A - eta sqrt(B)) sqrt(delta)).

    Returns (value, vacuous): when A <= eta*sqrt(B) the bound does not apply
    and (+inf, True) is returned instead of raising, so sweeps never abort.
    """
    a, b = bounds.lower, bounds.upper
    if a <= up.eta * math.sqrt(b):
        return math.inf, True
    return up.eta / ((a - up.eta * math.sqrt(b)) * math.sqrt(up.delta)), False


def bound_papr_fullspark(n: int, m: int) -> float:
    """Dimension-only PAPR bound N / (N - M + 1) for full-spark frames."""
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= M <= N, got M={m}, N={n}")
    return n / (n - m + 1)


def bound_papr_up(k_tilde_u: float, b: float) -> float:
    """UP-based PAPR bound: squared upper democracy bound times B."""
    return k_tilde_u ** 2 * b


def bound_power_increase(k_tilde_u: float, b: float) -> float:
    """Upper bound on the power increase; coincides with the PAPR bound."""
    return k_tilde_u ** 2 * b


def power_increase(x_dem, x_ls) -> float:
    """Energy ratio ||x_dem||_2^2 / ||x_ls||_2^2 of democratic over least-squares."""
    num = float(np.linalg.norm(np.asarray(x_dem, dtype=np.complex128)) ** 2)
    den = float(np.linalg.norm(np.asarray(x_ls, dtype=np.complex128)) ** 2)
    if den == 0.0:
        raise ValueError("power increase is undefined for a zero least-squares solution")
    return num / den


TRIAL_CSV_HEADER = ("rho,paprLinear,paprDb,kHatU,kTildeL,extremeCount,"
                    "powerIncrease,normInf,normTwo,epsilon,seed")


@dataclass(frozen=True)
class TrialRecord:
    """Metrics of one Monte-Carlo trial, serializable as a fixed-order CSV row."""

    rho: float
    papr_linear: float
    papr_db: float
    k_hat_u: float
    k_tilde_l: float
    extreme_count: int
    power_increase: float
    norm_inf: float
    norm_two: float
    epsilon: float
    seed: int

    def __post_init__(self):
        n_cap = 1e18  # papr <= N is checked by the caller who knows N
        if not (1.0 - 1e-9 <= self.papr_linear <= n_cap):
            raise ValueError(f"PAPR out of range [1, N]: {self.papr_linear}")
        if self.extreme_count < 1:
            raise ValueError("a nonzero vector has at least one extreme entry")

    def to_csv_row(self) -> str:
        return ",".join([
            repr(self.rho), repr(self.papr_linear), repr(self.papr_db),
            repr(self.k_hat_u), repr(self.k_tilde_l), str(self.extreme_count),
            repr(self.power_increase), repr(self.norm_inf), repr(self.norm_two),
            repr(self.epsilon), str(self.seed),
        ])

    def to_json_dict(self) -> dict:
        return {
            "rho": self.rho, "paprLinear": self.papr_linear, "paprDb": self.papr_db,
            "kHatU": self.k_hat_u, "kTildeL": self.k_tilde_l,
            "extremeCount": self.extreme_count, "powerIncrease": self.power_increase,
            "normInf": self.norm_inf, "normTwo": self.norm_two,
            "epsilon": self.epsilon, "seed": self.seed,
        }
