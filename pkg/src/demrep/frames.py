"""Overcomplete frame operators and their certified properties.

A frame here is an M x N complex matrix D (M <= N) applied either as a dense
matrix or implicitly through a subsampled unitary DFT.  The operator object is
immutable after construction; expensive derived quantities (Gram matrix,
eigendecomposition, Cholesky factor) are computed lazily and cached, so a
single frame can be shared read-only across many solver runs.

DFT convention: the forward transform is scaled by 1/sqrt(N) (``norm="ortho"``),
so any subset of M distinct DFT rows forms a Parseval frame with no extra
scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.linalg

DENSE_EIG_CAP = 2048        # largest M for exact eigen-decompositions of D D^H
UP_SUPPORT_CAP = 10**6      # largest support count for exhaustive UP searches

_FFT_KINDS = ("subsampled-dft", "oversampled-dft-tone-map")
_POWER_ITER_SEED = 0x0DD5B0  # fixed so bound estimates are reproducible


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _as_complex_vector(x, length: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"{what} must be a 1-d vector, got shape {arr.shape}")
    if arr.shape[0] != length:
        raise ValueError(f"{what} has wrong length: expected {length}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class FrameBounds:
    """Tightest constants A <= B with A||w||^2 <= ||D^H w||^2 <= B||w||^2."""

    lower: float
    upper: float
    method: str  # "exact-eig" | "power-iteration"


@dataclass(frozen=True)
class UPCertificate:
    """Exhaustively certified norm bound over all small column supports.

    ``eta`` is the largest spectral norm of any column submatrix D_S with
    |S| <= ``support_budget`` = floor(delta * N).
    """

    eta: float
    delta: float
    exhaustive: bool
    support_budget: int


class FrameOperator:
    """Linear map D: C^N -> C^M with exact adjoint and cached factorizations.

    Construct through :func:`build_dense`, :func:`build_subsampled_dft`,
    :func:`build_gaussian`, or :func:`build_equiangular_parseval` rather than
    directly.  ``kind`` is one of ``dense``, ``subsampled-dft``, or
    ``oversampled-dft-tone-map``; the DFT-backed kinds store only the selected
    row indices ``omega`` of the length-N unitary DFT and apply in O(N log N).
    """

    def __init__(self, kind: str, n: int, m: int, *, matrix=None, omega=None,
                 seed=None, info: dict | None = None):
        if not (1 <= m <= n):
            raise ValueError(f"frame dimensions need 1 <= M <= N, got M={m}, N={n}")
        if kind == "dense":
            if matrix is None:
                raise ValueError("dense frame requires an explicit matrix")
            matrix = np.array(matrix, dtype=np.complex128)
            if matrix.shape != (m, n):
                raise ValueError(f"dense frame matrix must be {m}x{n}, got {matrix.shape}")
            matrix.setflags(write=False)
            self._matrix = matrix
            self._omega = None
        elif kind in _FFT_KINDS:
            omega = np.asarray(omega, dtype=np.int64)
            if omega.shape != (m,):
                raise ValueError(f"tone set must list {m} row indices, got shape {omega.shape}")
            if np.unique(omega).size != m or omega.min() < 0 or omega.max() >= n:
                raise ValueError("tone set must contain distinct indices in [0, N)")
            omega.setflags(write=False)
            self._matrix = None
            self._omega = omega
        else:
            raise ValueError(f"unknown frame kind {kind!r}")
        self.kind = kind
        self.n = int(n)
        self.m = int(m)
        self.seed = seed
        self.info = dict(info) if info else {}
        self._cache: dict = {}

    # -- application ------------------------------------------------------

    def apply(self, x) -> np.ndarray:
        """Return D x for a length-N vector x."""
        x = _as_complex_vector(x, self.n, "frame apply input")
        if self._matrix is not None:
            return self._matrix @ x
        return scipy.fft.fft(x, norm="ortho")[self._omega]

    def adjoint(self, z) -> np.ndarray:
        """Return D^H z for a length-M vector z."""
        z = _as_complex_vector(z, self.m, "frame adjoint input")
        if self._matrix is not None:
            return self._matrix.conj().T @ z
        full = np.zeros(self.n, dtype=np.complex128)
        full[self._omega] = z
        return scipy.fft.ifft(full, norm="ortho")

    @property
    def omega(self):
        return self._omega

    @property
    def redundancy(self) -> float:
        return self.n / self.m

    # -- materializations (cached, read-only) ------------------------------

    def as_matrix(self) -> np.ndarray:
        """Dense M x N materialization of the operator."""
        if self._matrix is not None:
            return self._matrix
        dense = self._cache.get("dense")
        if dense is None:
            rows = np.exp(-2j * np.pi * np.outer(self._omega, np.arange(self.n)) / self.n)
            dense = rows / math.sqrt(self.n)
            dense.setflags(write=False)
            self._cache["dense"] = dense
        return dense

    def gram(self) -> np.ndarray:
        """The M x M matrix D D^H, computed through apply/adjoint."""
        g = self._cache.get("gram")
        if g is None:
            if self._matrix is not None:
                g = self._matrix @ self._matrix.conj().T
            else:
                g = np.empty((self.m, self.m), dtype=np.complex128)
                basis = np.zeros(self.m, dtype=np.complex128)
                for i in range(self.m):
                    basis[i] = 1.0
                    g[:, i] = self.apply(self.adjoint(basis))
                    basis[i] = 0.0
            g.setflags(write=False)
            self._cache["gram"] = g
        return g

    def gram_eig(self):
        """Eigendecomposition of D D^H (ascending eigenvalues)."""
        pair = self._cache.get("gram_eig")
        if pair is None:
            if self.m > DENSE_EIG_CAP:
                raise ValueError(
                    f"exact eigen-decomposition refused for M={self.m} > {DENSE_EIG_CAP}")
            w, u = np.linalg.eigh(self.gram())
            w.setflags(write=False)
            u.setflags(write=False)
            pair = (w, u)
            self._cache["gram_eig"] = pair
        return pair

    def gram_cholesky(self):
        """Cached Cholesky factor of D D^H (raises if numerically singular)."""
        cho = self._cache.get("cho")
        if cho is None:
            try:
                cho = scipy.linalg.cho_factor(self.gram())
            except np.linalg.LinAlgError as exc:
                raise ValueError("D D^H is singular: frame lower bound A = 0") from exc
            self._cache["cho"] = cho
        return cho

    def parseval_residual(self) -> float:
        """Measured deviation of D D^H from the identity.

        Exact max-entry residual of the dense Gram for small dense frames;
        for DFT-backed kinds and very large M, the worst relative residual of
        D D^H w - w over a fixed set of seeded random probes (cheaper, and the
        Gram of distinct unitary-DFT rows is the identity analytically).
        """
        r = self._cache.get("parseval_residual")
        if r is None:
            if self._matrix is not None and self.m <= DENSE_EIG_CAP:
                g = self.gram()
                r = float(np.abs(g - np.eye(self.m)).max())
            else:
                rng = np.random.default_rng(_POWER_ITER_SEED)
                r = 0.0
                for _ in range(8):
                    w = rng.standard_normal(self.m) + 1j * rng.standard_normal(self.m)
                    resid = self.apply(self.adjoint(w)) - w
                    r = max(r, float(np.abs(resid).max() / np.abs(w).max()))
            self._cache["parseval_residual"] = r
        return r

    def is_parseval(self, tol: float = 1e-8) -> bool:
        return self.parseval_residual() <= tol

    def norm2_squared(self) -> float:
        """||D||_2^2, i.e. the upper frame bound B."""
        b = self._cache.get("norm2sq")
        if b is None:
            if self._matrix is not None and self.m <= DENSE_EIG_CAP:
                b = frame_bounds(self, mode="exact").upper
            else:
                # DFT-backed or oversized: power iteration is exact enough
                # for step-size selection and avoids a huge dense Gram
                b = frame_bounds(self, mode="estimate").upper
            self._cache["norm2sq"] = b
        return b

    def __repr__(self):
        return f"FrameOperator(kind={self.kind!r}, m={self.m}, n={self.n})"


# -- constructors ----------------------------------------------------------

def build_dense(matrix, *, seed=None, info=None) -> FrameOperator:
    """Wrap an explicit M x N complex matrix as a frame operator."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.ndim != 2:
        raise ValueError(f"dense frame needs a 2-d matrix, got shape {matrix.shape}")
    m, n = matrix.shape
    return FrameOperator("dense", n, m, matrix=matrix, seed=seed, info=info)


def build_subsampled_dft(n: int, m: int, rng=None) -> FrameOperator:
    """Frame of M distinct rows of the N x N unitary DFT, drawn uniformly.

    Rows are drawn without replacement, so D D^H = I_M exactly and the frame
    is Parseval.
    """
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= M <= N, got M={m}, N={n}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = _as_generator(rng)
    omega = np.sort(gen.choice(n, size=m, replace=False))
    return FrameOperator("subsampled-dft", n, m, omega=omega, seed=seed)


def build_dft_tone_frame(n: int, omega, *, kind: str = "subsampled-dft") -> FrameOperator:
    """Frame of explicitly chosen unitary-DFT rows (tone indices ``omega``)."""
    omega = np.asarray(omega, dtype=np.int64)
    return FrameOperator(kind, n, omega.size, omega=omega)


def build_gaussian(n: int, m: int, rng=None) -> FrameOperator:
    """Dense frame with i.i.d. circularly-symmetric complex Gaussian entries.

    Entry variance is 1/N (real and imaginary parts each 1/(2N)), so the
    squared column norms concentrate near M/N and D is an approximate
    Parseval frame for large dimensions.
    """
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= M <= N, got M={m}, N={n}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = _as_generator(rng)
    scale = 1.0 / math.sqrt(2 * n)
    matrix = scale * (gen.standard_normal((m, n)) + 1j * gen.standard_normal((m, n)))
    return FrameOperator("dense", n, m, matrix=matrix, seed=seed,
                         info={"family": "gaussian"})


def welch_bound(n: int, m: int) -> float:
    """Smallest possible worst-case coherence of N unit-norm vectors in C^M."""
    if n == m:
        return 0.0
    return math.sqrt((n - m) / (m * (n - 1)))


def coherence(frame: FrameOperator) -> float:
    """Largest off-diagonal entry modulus of the column-normalized Gram."""
    d = frame.as_matrix()
    cols = d / np.linalg.norm(d, axis=0, keepdims=True)
    g = np.abs(cols.conj().T @ cols)
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def build_equiangular_parseval(n: int, m: int, rng=None, iters: int = 2000,
                               tol: float = 1e-7) -> FrameOperator:
    """Near-equiangular Parseval frame by alternating projections on the Gram.

    Alternates between (a) the structural set of Hermitian matrices with unit
    diagonal and off-diagonal moduli at most the Welch bound, and (b) the
    spectral set of rank-M PSD matrices whose nonzero eigenvalues all equal
    N/M.  The final spectral factor is rescaled to an exactly Parseval D; the
    achieved column coherence, the Welch bound, and a convergence flag are
    attached as ``frame.info``.

    Non-convergence after ``iters`` sweeps returns the best iterate found with
    ``info["converged"] = False`` rather than failing.
    """
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= M <= N, got M={m}, N={n}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = _as_generator(rng)

    d0 = gen.standard_normal((m, n)) + 1j * gen.standard_normal((m, n))
    if n == m:
        q, _ = np.linalg.qr(d0)
        frame = FrameOperator("dense", n, m, matrix=q, seed=seed,
                              info={"family": "equiangular-parseval"})
        frame.info.update(coherence=coherence(frame), welch=0.0, converged=True, sweeps=0)
        return frame

    mu = welch_bound(n, m)
    d0 /= np.linalg.norm(d0, axis=0, keepdims=True)
    g = d0.conj().T @ d0

    best_vecs = None
    best_defect = np.inf
    sweeps = 0
    converged = False
    for sweeps in range(1, iters + 1):
        # (a) structural projection: Hermitian, unit diagonal, off-diag moduli <= mu
        g = 0.5 * (g + g.conj().T)
        mod = np.abs(g)
        with np.errstate(invalid="ignore", divide="ignore"):
            clip = np.where(mod > mu, g * (mu / np.where(mod > 0, mod, 1.0)), g)
        np.fill_diagonal(clip, 1.0)
        # (b) spectral projection: rank-M PSD with nonzero eigenvalues N/M
        w, u = np.linalg.eigh(clip)
        top = u[:, -m:]
        g = (n / m) * (top @ top.conj().T)
        # distance of the spectral iterate from the structural set
        mod = np.abs(g)
        off = mod - mu
        np.fill_diagonal(off, 0.0)
        defect = max(float(off.max(initial=0.0)),
                     float(np.abs(np.diag(g) - 1.0).max()))
        if defect < best_defect:
            best_defect = defect
            best_vecs = top
        if defect <= tol:
            converged = True
            break

    frame = FrameOperator("dense", n, m, matrix=best_vecs.conj().T, seed=seed,
                          info={"family": "equiangular-parseval"})
    frame.info.update(coherence=coherence(frame), welch=mu,
                      converged=converged, sweeps=sweeps,
                      structural_defect=best_defect)
    return frame


# -- certified properties ---------------------------------------------------

def frame_bounds(frame: FrameOperator, mode: str = "exact",
                 tol: float = 1e-8, max_iters: int = 200000) -> FrameBounds:
    """Lower/upper frame bounds A, B as extreme eigenvalues of D D^H.

    ``exact`` mode eigendecomposes the dense Gram (refused above
    ``DENSE_EIG_CAP``); ``estimate`` mode runs power iteration on D D^H for B
    and on the shifted operator B*I - D D^H for A, to relative tolerance
    ``tol``, from a deterministic seeded start vector.
    """
    if mode == "exact":
        w, _ = frame.gram_eig()
        return FrameBounds(lower=float(w[0]), upper=float(w[-1]), method="exact-eig")
    if mode != "estimate":
        raise ValueError(f"unknown frame_bounds mode {mode!r}")

    rng = np.random.default_rng(_POWER_ITER_SEED)

    def top_eig(op):
        v = rng.standard_normal(frame.m) + 1j * rng.standard_normal(frame.m)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iters):
            w = op(v)
            lam = float(np.real(np.vdot(v, w)))
            # for Hermitian operators the eigenvalue error is bounded by the
            # residual norm, unlike the successive-change test
            if np.linalg.norm(w - lam * v) <= tol * max(abs(lam), 1e-300):
                return lam
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            v = w / nw
        return lam

    gop = lambda v: frame.apply(frame.adjoint(v))
    upper = top_eig(gop)
    shift = upper * (1.0 + 1e-6) + 1e-300
    lower = shift - top_eig(lambda v: shift * v - gop(v))
    return FrameBounds(lower=lower, upper=upper, method="power-iteration")


def up_support_count(n: int, delta: float) -> int:
    return math.comb(n, math.floor(delta * n))


def up_check_exhaustive(frame: FrameOperator, delta: float) -> UPCertificate:
    """Certify ||D x||_2 <= eta ||x||_2 for all x with |supp(x)| <= floor(delta*N).

    Exhaustive search over column supports; eta is the largest spectral norm
    of any column submatrix.  Checking supports of size exactly floor(delta*N)
    suffices because the top singular value only grows when columns are added.
    Refused when the support count exceeds ``UP_SUPPORT_CAP``.
    """
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    k = math.floor(delta * frame.n)
    if k < 1:
        raise ValueError(f"support budget floor(delta*N) = 0 for delta={delta}, N={frame.n}")
    count = math.comb(frame.n, k)
    if count > UP_SUPPORT_CAP:
        raise ValueError(
            f"exhaustive UP check refused: C({frame.n},{k}) = {count} supports "
            f"exceeds budget {UP_SUPPORT_CAP}")
    d = frame.as_matrix()
    eta_sq = 0.0
    for support in combinations(range(frame.n), k):
        sub = d[:, support]
        g = sub.conj().T @ sub
        eta_sq = max(eta_sq, float(np.linalg.eigvalsh(g)[-1]))
    return UPCertificate(eta=math.sqrt(eta_sq), delta=float(delta),
                         exhaustive=True, support_budget=k)


# -- serialization ----------------------------------------------------------

_DESCRIPTOR_VERSION = 1


def _interleave_complex(matrix: np.ndarray) -> bytes:
    stacked = np.empty(matrix.shape + (2,), dtype="<f8")
    stacked[..., 0] = matrix.real
    stacked[..., 1] = matrix.imag
    return stacked.tobytes()


def _deinterleave_complex(raw: bytes, m: int, n: int) -> np.ndarray:
    flat = np.frombuffer(raw, dtype="<f8")
    if flat.size != 2 * m * n:
        raise ValueError(f"sidecar holds {flat.size} floats, expected {2 * m * n}")
    pairs = flat.reshape(m, n, 2)
    return (pairs[..., 0] + 1j * pairs[..., 1]).astype(np.complex128)


def save_frame(frame: FrameOperator, path) -> Path:
    """Write a JSON descriptor (plus an ``.f64`` sidecar for dense frames).

    The descriptor alone reconstructs DFT-backed kinds bit-identically; dense
    entries are stored as interleaved little-endian float64 (re, im) pairs in
    row-major order in the sidecar.
    """
    path = Path(path)
    desc = {
        "descriptorVersion": _DESCRIPTOR_VERSION,
        "kind": frame.kind,
        "n": frame.n,
        "m": frame.m,
        "seed": None if frame.seed is None else int(frame.seed),
    }
    if frame.info:
        desc["info"] = frame.info
    if frame.kind in _FFT_KINDS:
        desc["omega"] = [int(i) for i in frame.omega]
    else:
        sidecar = path.with_suffix(".f64")
        sidecar.write_bytes(_interleave_complex(frame.as_matrix()))
        desc["data"] = sidecar.name
    path.write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")
    return path


def load_frame(path) -> FrameOperator:
    """Reconstruct a frame saved by :func:`save_frame`."""
    path = Path(path)
    desc = json.loads(path.read_text())
    kind = desc["kind"]
    n, m = int(desc["n"]), int(desc["m"])
    if kind in _FFT_KINDS:
        return FrameOperator(kind, n, m, omega=np.asarray(desc["omega"], dtype=np.int64),
                             seed=desc.get("seed"), info=desc.get("info"))
    raw = (path.parent / desc["data"]).read_bytes()
    return FrameOperator(kind, n, m, matrix=_deinterleave_complex(raw, m, n),
                         seed=desc.get("seed"), info=desc.get("info"))
