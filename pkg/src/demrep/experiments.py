"""Monte-Carlo experiment harness: phase diagrams and OFDM PAPR reduction.

Experiments are driven by one JSON config (strict schema, versioned through a
``schemaVersion`` field) and emit fixed-header CSV files plus a JSON run
manifest.  Every trial owns a child-seeded RNG derived from
``SeedSequence([seed, point, trial])``, so output bytes depend only on the
config, never on scheduling; trials may run across a process pool.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .frames import (build_dft_tone_frame, build_equiangular_parseval,
                     build_gaussian, build_subsampled_dft)
from .metrics import (TRIAL_CSV_HEADER, TrialRecord, count_extreme, empirical_ku,
                      papr, papr_oversampled_db, power_increase)
from .prox import project_affine
from .solvers import SolverConfig, solve_cram, solve_cramp, solve_least_squares

SCHEMA_VERSION = 1

PHASE_KINDS = ("phase-ku", "phase-papr")
FRAME_FAMILIES = ("dft", "gaussian", "equiangular")

# per-point fraction of non-converged solves tolerated before aborting
FAILURE_BUDGET = 0.01


class ExperimentError(RuntimeError):
    """Raised when an experiment exceeds its per-point failure budget."""

    def __init__(self, message: str, point_stats=None):
        super().__init__(message)
        self.point_stats = point_stats or []


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment description; see ``from_json_dict`` for the schema."""

    kind: str
    seed: int = 0
    n: int = 128
    m_sweep: tuple = ()
    trials: int = 25
    frame_family: str = "dft"
    epsilon: float = 0.0
    norm_mode: str = "inf"
    equiangular_iters: int = 200
    bin_count: int = 60
    reserved_tones: int = 0
    reserved_placement: object = "even"  # "even" or explicit tone indices
    guard_tones: int = 0
    qam_order: int = 256
    oversampling: int = 4
    ccdf_resolution_db: float = 0.1
    # multiplies the scale-aware default step ||y||/sqrt(N) of the
    # Douglas-Rachford solver; larger values converge faster on these families
    tau_scale: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_prefix: str = "experiment"

    def __post_init__(self):
        _require(self.kind in PHASE_KINDS + ("ofdm-papr",),
                 f"unknown experiment kind {self.kind!r}")
        _require(self.seed >= 0, "seed must be a nonnegative integer")
        _require(self.n >= 1, "n must be positive")
        _require(self.trials >= 1, "trials must be >= 1")
        if self.kind in PHASE_KINDS:
            _require(len(self.m_sweep) >= 1, "mSweep must list at least one M")
            _require(all(1 <= m <= self.n for m in self.m_sweep),
                     "every M in mSweep must satisfy 1 <= M <= N")
            _require(self.frame_family in FRAME_FAMILIES,
                     f"frameFamily must be one of {FRAME_FAMILIES}")
            _require(0.0 <= self.epsilon < 1.0,
                     "epsilon must lie in [0, 1) (signals are normalized)")
        else:
            _require(self.reserved_tones >= 1,
                     "ofdm-papr requires at least one reserved tone "
                     "(nothing to optimize otherwise)")
            if self.reserved_placement != "even":
                idx = tuple(int(i) for i in self.reserved_placement)
                _require(len(set(idx)) == len(idx) == self.reserved_tones,
                         "explicit reserved-tone list must match reservedTones "
                         "and contain distinct indices")
                _require(all(0 <= i < self.n for i in idx),
                         "reserved-tone indices must lie in [0, N)")
            _require(self.guard_tones >= 0, "guardTones must be nonnegative")
            _require(self.reserved_tones + self.guard_tones < self.n,
                     "reserved + guard tones must leave room for data tones")
            _require(self.qam_order in (4, 16, 64, 256),
                     "qamOrder must be one of 4, 16, 64, 256")
            _require(self.oversampling >= 1, "oversampling must be >= 1")
            _require(self.ccdf_resolution_db > 0, "ccdfResolutionDb must be positive")

    # -- JSON schema -------------------------------------------------------

    _COMMON_KEYS = {"schemaVersion": None, "kind": None, "seed": "seed",
                    "solver": None, "outputPrefix": "output_prefix",
                    "tauScale": "tau_scale"}
    _PHASE_KEYS = {"n": "n", "mSweep": "m_sweep", "trials": "trials",
                   "frameFamily": "frame_family", "epsilon": "epsilon",
                   "normMode": "norm_mode", "equiangularIters": "equiangular_iters",
                   "binCount": "bin_count"}
    _OFDM_KEYS = {"n": "n", "trials": "trials", "reservedTones": "reserved_tones",
                  "reservedPlacement": "reserved_placement",
                  "guardTones": "guard_tones", "qamOrder": "qam_order",
                  "oversampling": "oversampling",
                  "ccdfResolutionDb": "ccdf_resolution_db",
                  "normMode": "norm_mode"}
    _SOLVER_KEYS = {"epsilon": "epsilon", "tau": "tau", "sigma": "sigma",
                    "maxIters": "max_iters", "tolPrimal": "tol_primal",
                    "tolDual": "tol_dual", "tolGap": "tol_gap",
                    "adaptive": "adaptive"}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentConfig":
        """Parse a config document, rejecting unknown keys (strict schema)."""
        _require(isinstance(doc, dict), "config must be a JSON object")
        version = doc.get("schemaVersion")
        _require(version == SCHEMA_VERSION,
                 f"schemaVersion must be {SCHEMA_VERSION}, got {version!r}")
        kind = doc.get("kind")
        _require(kind in PHASE_KINDS + ("ofdm-papr",),
                 f"kind must be one of {PHASE_KINDS + ('ofdm-papr',)}, got {kind!r}")
        allowed = dict(cls._COMMON_KEYS)
        allowed.update(cls._PHASE_KEYS if kind in PHASE_KINDS else cls._OFDM_KEYS)
        unknown = sorted(set(doc) - set(allowed))
        _require(not unknown, f"unknown config key(s) for kind {kind!r}: {unknown}")

        kwargs = {}
        for json_key, attr in allowed.items():
            if attr is not None and json_key in doc:
                value = doc[json_key]
                if json_key == "mSweep":
                    value = tuple(int(m) for m in value)
                elif json_key == "reservedPlacement" and value != "even":
                    value = tuple(int(i) for i in value)
                kwargs[attr] = value

        solver_doc = doc.get("solver", {})
        _require(isinstance(solver_doc, dict), "solver must be a JSON object")
        unknown = sorted(set(solver_doc) - set(cls._SOLVER_KEYS))
        _require(not unknown, f"unknown solver key(s): {unknown}")
        solver_kwargs = {attr: solver_doc[k] for k, attr in cls._SOLVER_KEYS.items()
                         if k in solver_doc}
        solver_kwargs.setdefault("epsilon", kwargs.get("epsilon", 0.0))
        solver_kwargs["norm"] = kwargs.get("norm_mode", "inf")
        kwargs["solver"] = SolverConfig(**solver_kwargs)
        return cls(kind=kind, **kwargs)

    def to_json_dict(self) -> dict:
        """Round-trippable echo of the config (used in run manifests)."""
        doc = {"schemaVersion": SCHEMA_VERSION, "kind": self.kind, "seed": self.seed,
               "outputPrefix": self.output_prefix, "tauScale": self.tau_scale}
        keymap = self._PHASE_KEYS if self.kind in PHASE_KINDS else self._OFDM_KEYS
        for json_key, attr in keymap.items():
            value = getattr(self, attr)
            if isinstance(value, tuple):
                value = list(value)
            doc[json_key] = value
        doc["solver"] = {k: getattr(self.solver, attr)
                         for k, attr in self._SOLVER_KEYS.items()}
        return doc


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_json_dict(json.loads(Path(path).read_text()))


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    """Deterministic child generator for trial ``trial`` at sweep point ``point``."""
    return np.random.default_rng(np.random.SeedSequence([seed, point, trial]))


def _trial_seed_id(seed: int, point: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, point, trial]).generate_state(1)[0])


# -- phase diagrams ---------------------------------------------------------

def _build_family_frame(family: str, n: int, m: int, rng, equiangular_iters: int):
    if family == "dft":
        return build_subsampled_dft(n, m, rng)
    if family == "gaussian":
        return build_gaussian(n, m, rng)
    return build_equiangular_parseval(n, m, rng, iters=equiangular_iters)


def run_phase_trial(cfg: ExperimentConfig, point: int, trial: int):
    """One Monte-Carlo trial: build frame, draw y, solve, record metrics.

    Returns (record, solver_result); ``record`` is None when the solve failed.
    """
    m = cfg.m_sweep[point]
    rng = trial_rng(cfg.seed, point, trial)
    frame = _build_family_frame(cfg.frame_family, cfg.n, m, rng,
                                cfg.equiangular_iters)
    y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    y /= np.linalg.norm(y)

    scfg = replace(cfg.solver, epsilon=cfg.epsilon, norm=cfg.norm_mode)
    parseval = cfg.frame_family in ("dft", "equiangular")
    if parseval and cfg.epsilon == 0.0:
        if scfg.tau is None and cfg.tau_scale != 1.0:
            scfg = replace(scfg, tau=cfg.tau_scale * float(np.linalg.norm(y))
                           / math.sqrt(cfg.n))
        result = solve_cramp(frame, y, scfg, track_iterate_residuals=False)
        x = result.x
        ok = result.residual_feasibility <= 1e-8 * float(np.linalg.norm(y))
    else:
        result = solve_cram(frame, y, scfg)
        ok = result.converged
        x = result.x
        if ok and cfg.epsilon == 0.0:
            # certify exact feasibility before measuring democracy metrics
            x = project_affine(frame, x, y, mode="general")
    if not ok:
        return None, result

    x_ls = solve_least_squares(frame, y, cfg.epsilon)
    b_upper = frame.norm2_squared()
    record = TrialRecord(
        rho=m / cfg.n,
        papr_linear=papr(x),
        papr_db=10.0 * math.log10(papr(x)),
        k_hat_u=empirical_ku(x, y, cfg.epsilon),
        k_tilde_l=1.0 / math.sqrt(b_upper),
        extreme_count=count_extreme(x),
        power_increase=power_increase(x, x_ls),
        norm_inf=float(np.abs(x).max()),
        norm_two=float(np.linalg.norm(x)),
        epsilon=cfg.epsilon,
        seed=_trial_seed_id(cfg.seed, point, trial),
    )
    return record, result


def _phase_task(args):
    cfg_doc, point, trial = args
    cfg = ExperimentConfig.from_json_dict(cfg_doc)
    record, result = run_phase_trial(cfg, point, trial)
    return point, trial, record, result.iterations, result.converged


@dataclass
class PhaseDiagramResult:
    """Binned empirical CDF grid over (rho, metric) plus the 50% curve."""

    metric_name: str
    rhos: tuple
    bins: np.ndarray
    fractions: np.ndarray        # shape (len(rhos), len(bins)); P(metric <= bin)
    transition: np.ndarray       # 50% transition value per rho
    records: list                # list (per point) of TrialRecord lists
    point_stats: list

    def grid_rows(self):
        for i, rho in enumerate(self.rhos):
            for j, edge in enumerate(self.bins):
                yield f"{rho!r},{float(edge)!r},{float(self.fractions[i, j])!r}"

    def transition_rows(self):
        for rho, value in zip(self.rhos, self.transition):
            yield f"{rho!r},{float(value)!r}"


def run_phase_diagram(cfg: ExperimentConfig, workers: int = 1) -> PhaseDiagramResult:
    """Sweep M, solve ``trials`` instances per point, and bin the chosen metric.

    Parseval families are solved with the Douglas-Rachford solver; Gaussian
    frames with the primal-dual solver followed by an exact affine projection
    so recorded metrics always refer to feasible representations.  Aborts
    with :class:`ExperimentError` when any sweep point exceeds the 1% solve
    failure budget.
    """
    if cfg.kind not in PHASE_KINDS:
        raise ValueError(f"run_phase_diagram needs a phase config, got kind {cfg.kind!r}")
    tasks = [(cfg.to_json_dict(), j, t)
             for j in range(len(cfg.m_sweep)) for t in range(cfg.trials)]
    outcomes = [None] * len(tasks)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, out in enumerate(pool.map(_phase_task, tasks, chunksize=4)):
                outcomes[idx] = out
    else:
        for idx, task in enumerate(tasks):
            outcomes[idx] = _phase_task(task)

    records = [[] for _ in cfg.m_sweep]
    stats = [{"m": m, "rho": m / cfg.n, "trials": cfg.trials, "failures": 0,
              "iterations": []} for m in cfg.m_sweep]
    for point, trial, record, iters, converged in outcomes:
        stats[point]["iterations"].append(iters)
        if record is None:
            stats[point]["failures"] += 1
        else:
            records[point].append(record)

    allowed = math.floor(FAILURE_BUDGET * cfg.trials)
    point_stats = []
    failed_points = []
    for st in stats:
        entry = {"m": st["m"], "rho": st["rho"], "trials": st["trials"],
                 "failures": st["failures"],
                 "meanIterations": float(np.mean(st["iterations"]))}
        point_stats.append(entry)
        if st["failures"] > allowed:
            failed_points.append(entry)
    if failed_points:
        raise ExperimentError(
            f"{len(failed_points)} sweep point(s) exceeded the "
            f"{FAILURE_BUDGET:.0%} solver failure budget: "
            + ", ".join(f"M={p['m']} ({p['failures']}/{p['trials']} failed)"
                        for p in failed_points),
            point_stats=point_stats)

    metric_name = "kHatU" if cfg.kind == "phase-ku" else "paprDb"
    values = [np.array([getattr(r, "k_hat_u" if cfg.kind == "phase-ku" else "papr_db")
                        for r in recs]) for recs in records]
    all_vals = np.concatenate([v for v in values if v.size])
    lo, hi = float(all_vals.min()), float(all_vals.max())
    if hi <= lo:
        hi = lo + 1.0
    bins = np.linspace(lo, hi, cfg.bin_count)
    fractions = np.array([[float(np.mean(v <= b)) if v.size else math.nan
                           for b in bins] for v in values])
    transition = np.array([float(np.quantile(v, 0.5)) if v.size else math.nan
                           for v in values])
    rhos = tuple(m / cfg.n for m in cfg.m_sweep)
    return PhaseDiagramResult(metric_name=metric_name, rhos=rhos, bins=bins,
                              fractions=fractions, transition=transition,
                              records=records, point_stats=point_stats)


# -- OFDM tone reservation ---------------------------------------------------

def _gray_to_binary(g: int) -> int:
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


def qam_map(bits, order: int) -> np.ndarray:
    """Gray-mapped square QAM symbols with unit average alphabet energy.

    ``bits`` is a flat 0/1 sequence whose length must divide into log2(order)
    groups; the first half of each group Gray-codes the in-phase level, the
    second half the quadrature level.
    """
    if order not in (4, 16, 64, 256):
        raise ValueError(f"unsupported QAM order {order}; use 4, 16, 64, or 256")
    bits = np.asarray(bits, dtype=np.int64)
    bps = int(math.log2(order))
    if bits.ndim != 1 or bits.size % bps != 0:
        raise ValueError(f"bit count must be a multiple of {bps}, got {bits.size}")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0/1 valued")
    half = bps // 2
    levels = 1 << half
    # amplitude per Gray label: gray g -> index i -> level 2i - (levels-1)
    amp = np.empty(levels, dtype=np.float64)
    for g in range(levels):
        amp[g] = 2 * _gray_to_binary(g) - (levels - 1)
    amp /= math.sqrt(2.0 * (levels ** 2 - 1) / 3.0)

    groups = bits.reshape(-1, bps)
    weights = 1 << np.arange(half - 1, -1, -1)
    i_label = groups[:, :half] @ weights
    q_label = groups[:, half:] @ weights
    return amp[i_label] + 1j * amp[q_label]


def qam_alphabet(order: int) -> np.ndarray:
    """All ``order`` constellation points in bit-label order."""
    bps = int(math.log2(order))
    labels = np.arange(order)[:, None] >> np.arange(bps - 1, -1, -1)[None, :] & 1
    return qam_map(labels.reshape(-1), order)


@dataclass(frozen=True)
class CcdfTable:
    """P(value > t) sampled on a regular threshold grid."""

    thresholds: np.ndarray
    probabilities: np.ndarray

    def value_at_probability(self, p: float) -> float:
        """Smallest grid threshold whose CCDF is <= p (curve position at level p)."""
        idx = np.nonzero(self.probabilities <= p)[0]
        if idx.size == 0:
            return float(self.thresholds[-1])
        return float(self.thresholds[idx[0]])


def _ccdf_grid(vmin: float, vmax: float, resolution: float) -> np.ndarray:
    lo = (math.floor(vmin / resolution) - 1) * resolution
    hi = math.ceil(vmax / resolution) * resolution
    count = int(round((hi - lo) / resolution)) + 1
    return lo + resolution * np.arange(count)


def ccdf(values, resolution: float) -> CcdfTable:
    """Empirical complementary CDF of ``values`` on a grid of step ``resolution``."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("ccdf requires at least one value")
    if resolution <= 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    thresholds = _ccdf_grid(float(values.min()), float(values.max()), resolution)
    probabilities = np.array([float(np.mean(values > t)) for t in thresholds])
    return CcdfTable(thresholds=thresholds, probabilities=probabilities)


def reserved_tone_indices(cfg: ExperimentConfig):
    """(reserved, guard, data) tone index arrays for an OFDM config.

    Guard tones (forced to zero) sit symmetrically around the Nyquist bin;
    reserved tones are spread evenly across the remaining band unless an
    explicit list was configured.  The constrained set handed to the solver is
    data plus guard tones; reserved tones are the free variables.
    """
    n = cfg.n
    guards = {(n // 2 - cfg.guard_tones // 2 + i) % n for i in range(cfg.guard_tones)}
    usable = [i for i in range(n) if i not in guards]
    if cfg.reserved_placement == "even":
        picks = (np.arange(cfg.reserved_tones) * len(usable)) // cfg.reserved_tones
        reserved = np.array([usable[p] for p in picks], dtype=np.int64)
    else:
        reserved = np.array(sorted(cfg.reserved_placement), dtype=np.int64)
        if guards & set(int(i) for i in reserved):
            raise ValueError("reserved tones overlap the guard band")
    data = np.array(sorted(set(usable) - set(int(i) for i in reserved)),
                    dtype=np.int64)
    guard = np.array(sorted(guards), dtype=np.int64)
    return reserved, guard, data


def mapped_tone_indices(tones: np.ndarray, n: int, factor: int) -> np.ndarray:
    """Map length-N FFT-order tone indices onto the centered factor*N grid.

    Positive frequencies (including the Nyquist bin for even N) keep their
    index; negative frequencies shift to the top of the long grid.
    """
    big_n = factor * n
    return np.where(tones <= n // 2, tones, tones + big_n - n).astype(np.int64)


@dataclass
class OfdmResult:
    """CCDF curves plus raw per-trial PAPR values for the three methods."""

    thresholds: np.ndarray
    curves: dict                  # method name -> CCDF array
    values: dict                  # method name -> raw PAPR dB values
    point_stats: dict

    def csv_rows(self):
        for i, t in enumerate(self.thresholds):
            row = [repr(float(t))]
            row += [repr(float(self.curves[m][i])) for m in OFDM_METHODS]
            yield ",".join(row)


OFDM_METHODS = ("conventional", "cramp", "crampOversampled")
OFDM_CSV_HEADER = "paprDb,ccdfConventional,ccdfCramp,ccdfCrampOversampled"

_OFDM_WORKER_STATE: dict = {}


def _ofdm_setup(cfg: ExperimentConfig):
    reserved, guard, data = reserved_tone_indices(cfg)
    constrained = np.sort(np.concatenate([guard, data]))
    frame_crit = build_dft_tone_frame(cfg.n, constrained)
    factor = cfg.oversampling
    frame_over = None
    if factor > 1:
        mapped = np.sort(mapped_tone_indices(constrained, cfg.n, factor))
        frame_over = build_dft_tone_frame(factor * cfg.n, mapped,
                                          kind="oversampled-dft-tone-map")
    return data, constrained, frame_crit, frame_over


def run_ofdm_trial(cfg: ExperimentConfig, trial: int, state=None):
    """One OFDM trial: draw QAM data, solve tone reservation, measure PAPRs.

    Returns (papr_db_by_method, feasible, iterations).
    """
    if state is None:
        state = _ofdm_setup(cfg)
    data_tones, constrained, frame_crit, frame_over = state
    n, factor = cfg.n, cfg.oversampling
    rng = trial_rng(cfg.seed, 0, trial)

    bps = int(math.log2(cfg.qam_order))
    bits = rng.integers(0, 2, size=data_tones.size * bps)
    symbols = qam_map(bits, cfg.qam_order)

    y_full = np.zeros(n, dtype=np.complex128)
    y_full[data_tones] = symbols
    y_omega = y_full[constrained]
    ny = float(np.linalg.norm(y_omega))

    x_conv = np.fft.ifft(y_full, norm="ortho")
    out = {"conventional": papr_oversampled_db(x_conv, factor)}

    scfg = replace(cfg.solver, epsilon=0.0, norm=cfg.norm_mode)
    if scfg.tau is None and cfg.tau_scale != 1.0:
        # the same value serves both grids: ||sqrt(f) y||/sqrt(f N) = ||y||/sqrt(N)
        scfg = replace(scfg, tau=cfg.tau_scale * ny / math.sqrt(n))
    res_crit = solve_cramp(frame_crit, y_omega, scfg, track_iterate_residuals=False)
    out["cramp"] = papr_oversampled_db(res_crit.x, factor)
    feasible = res_crit.residual_feasibility <= 1e-8 * ny
    iterations = res_crit.iterations

    if frame_over is not None:
        # the solution already lives on the oversampled grid: measure directly
        res_over = solve_cramp(frame_over, math.sqrt(factor) * y_omega, scfg,
                               track_iterate_residuals=False)
        out["crampOversampled"] = 10.0 * math.log10(papr(res_over.x))
        feasible = feasible and (res_over.residual_feasibility
                                 <= 1e-8 * math.sqrt(factor) * ny)
        iterations = max(iterations, res_over.iterations)
    else:
        out["crampOversampled"] = out["cramp"]
    return out, feasible, iterations


def _ofdm_worker_init(cfg_doc):
    cfg = ExperimentConfig.from_json_dict(cfg_doc)
    _OFDM_WORKER_STATE["cfg"] = cfg
    _OFDM_WORKER_STATE["setup"] = _ofdm_setup(cfg)


def _ofdm_worker(trial: int):
    return run_ofdm_trial(_OFDM_WORKER_STATE["cfg"], trial,
                          state=_OFDM_WORKER_STATE["setup"])


def run_ofdm_papr(cfg: ExperimentConfig, workers: int = 1) -> OfdmResult:
    """Tone-reservation PAPR study: conventional OFDM vs. max-norm solves.

    Per trial, unit-energy QAM symbols fill the data tones and the solver
    shapes the reserved tones (critically sampled, and directly on the
    oversampled grid when ``oversampling`` > 1).  Emits the complementary CDF
    of oversampled PAPR in dB for each method on a shared grid.
    """
    if cfg.kind != "ofdm-papr":
        raise ValueError(f"run_ofdm_papr needs an ofdm-papr config, got {cfg.kind!r}")
    outcomes = [None] * cfg.trials
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_ofdm_worker_init,
                                 initargs=(cfg.to_json_dict(),)) as pool:
            for idx, out in enumerate(pool.map(_ofdm_worker, range(cfg.trials),
                                               chunksize=1)):
                outcomes[idx] = out
    else:
        state = _ofdm_setup(cfg)
        for t in range(cfg.trials):
            outcomes[t] = run_ofdm_trial(cfg, t, state=state)

    infeasible = sum(0 if ok else 1 for _, ok, _ in outcomes)
    stats = {"trials": cfg.trials, "infeasible": infeasible,
             "meanIterations": float(np.mean([it for _, _, it in outcomes]))}
    if infeasible > math.floor(FAILURE_BUDGET * cfg.trials):
        raise ExperimentError(
            f"{infeasible}/{cfg.trials} trials violated the constraint residual "
            f"tolerance", point_stats=[stats])

    values = {m: np.array([out[m] for out, _, _ in outcomes]) for m in OFDM_METHODS}
    res = cfg.ccdf_resolution_db
    vmin = min(float(v.min()) for v in values.values())
    vmax = max(float(v.max()) for v in values.values())
    thresholds = _ccdf_grid(vmin, vmax, res)
    curves = {m: np.array([float(np.mean(v > t)) for t in thresholds])
              for m, v in values.items()}
    return OfdmResult(thresholds=thresholds, curves=curves, values=values,
                      point_stats=stats)


# -- file output -------------------------------------------------------------

def _write_lines(path: Path, header: str, rows) -> Path:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
    return path


def _git_describe() -> str | None:
    import subprocess
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or None
    except Exception:
        return None


def write_manifest(path: Path, cfg: ExperimentConfig, *, seconds: float,
                   point_stats, outputs) -> Path:
    manifest = {
        "schemaVersion": SCHEMA_VERSION,
        "config": cfg.to_json_dict(),
        "build": {"package": "demrep", "version": __version__,
                  "gitDescribe": _git_describe()},
        "wallClockSeconds": seconds,
        "pointStats": point_stats,
        "outputs": [str(p) for p in outputs],
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def run_experiment_to_files(cfg: ExperimentConfig, outdir, workers: int = 1) -> list:
    """Run the configured experiment and write CSVs plus the run manifest.

    Returns the list of written paths (manifest last).  CSV bytes are a pure
    function of the config; the manifest additionally records wall-clock time
    and build metadata.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    prefix = cfg.output_prefix
    t0 = time.perf_counter()
    outputs = []
    if cfg.kind in PHASE_KINDS:
        result = run_phase_diagram(cfg, workers=workers)
        outputs.append(_write_lines(outdir / f"{prefix}_grid.csv",
                                    f"rho,{result.metric_name}Bin,fraction",
                                    result.grid_rows()))
        outputs.append(_write_lines(outdir / f"{prefix}_transition.csv",
                                    f"rho,{result.metric_name}50",
                                    result.transition_rows()))
        trial_rows = (r.to_csv_row() for recs in result.records for r in recs)
        outputs.append(_write_lines(outdir / f"{prefix}_trials.csv",
                                    TRIAL_CSV_HEADER, trial_rows))
        stats = result.point_stats
    else:
        result = run_ofdm_papr(cfg, workers=workers)
        outputs.append(_write_lines(outdir / f"{prefix}_ccdf.csv",
                                    OFDM_CSV_HEADER, result.csv_rows()))
        stats = [result.point_stats]
    manifest = write_manifest(outdir / f"{prefix}_manifest.json", cfg,
                              seconds=time.perf_counter() - t0,
                              point_stats=stats, outputs=outputs)
    outputs.append(manifest)
    return outputs
