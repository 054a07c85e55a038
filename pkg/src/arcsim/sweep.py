"""Parameter sweeps and the analyses built on them.

A sweep point is addressed by total relaxation ``gamma_tau`` and action
``tau~ = |tau - 2i/gamma|``. Two boundary rows are explicit: ``gamma_tau = 0``
is continuous relaxation with ``gamma = 2/tau~`` and ``gamma_tau = inf`` is
periodic refresh with ``tau = tau~``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .engine import ArcParams, NoUniqueNessError, params_from_action
from .lyapunov import NessState, SolverError, is_physical, solve_arc, solve_continuous_cr
from .model import Junction, SystemSpec, mean_level_spacing, mixed_basis_order
from .negf import ReferenceResult, reference as negf_reference
from .observables import SpectrumError, cost_estimate, current_error, currents, osee, trace_distance

Array = np.ndarray
log = logging.getLogger(__name__)

CR = 0.0
PR = math.inf


# -- timescales ---------------------------------------------------------------

def reservoir_time(n_modes: int, hopping: float = 1.0) -> float:
    """Time for a wavefront at the Fermi velocity ``2 omega_0`` to cross a reservoir."""
    return n_modes / (2.0 * hopping)


def system_hopping(system: SystemSpec) -> float:
    h = np.abs(np.asarray(system.hamiltonian))
    off = h - np.diag(np.diag(h))
    return float(off.max()) if off.size and off.max() > 0 else 1.0


def system_time(system: SystemSpec) -> float:
    """``N_S / (2 v_S)`` with ``v_S`` the largest hopping inside the system."""
    return system.n_sites / (2.0 * system_hopping(system))


def rise_time(bandwidth: float = 4.0) -> float:
    return math.pi / bandwidth


def thermal_length(temperature: float) -> float:
    """``2 beta / pi`` in lattice sites; infinite at zero temperature."""
    return math.inf if temperature == 0 else 2.0 / (math.pi * temperature)


# -- single points ------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    gamma_tau: float
    action: float
    gamma: float
    tau: float
    n_modes: int
    current: float
    i_ls: float
    i_sr: float
    sigma1_sq: float
    sigma2_sq: float
    sigma_sq: float
    trace_distance: float
    s_o: float
    tau_c: float
    cost: float
    status: str = "ok"


COLUMNS = tuple(f.name for f in fields(ResultRow))


def point_params(gamma_tau: float, action: float) -> tuple[float, float]:
    """(gamma, tau) for a sweep address, including the two boundary rows."""
    if gamma_tau == CR:
        return 2.0 / action, 0.0
    return params_from_action(gamma_tau, action)


def solve_point(junction: Junction, gamma_tau: float, action: float) -> NessState:
    gamma, tau = point_params(gamma_tau, action)
    if tau == 0.0:
        return solve_continuous_cr(junction, gamma)
    return solve_arc(junction, ArcParams(gamma, tau))


def measure(
    state: NessState,
    ref: ReferenceResult,
    gamma_tau: float,
    action: float,
    with_osee: bool = False,
) -> ResultRow:
    j = state.junction
    h = j.hamiltonian
    gamma, tau = point_params(gamma_tau, action)
    reading = currents(state.c, h)
    err = current_error(reading, ref.current)
    s = h.system_indices
    td = trace_distance(state.c[np.ix_(s, s)], ref.corr_s)
    s_o = cost = math.nan
    if with_osee:
        s_o = osee(state.c, mixed_basis_order(h)).s_o
        cost = cost_estimate(state.tau_c, j.n_modes, s_o)
    status = "ok" if is_physical(state.c) and is_physical(state.c_cycle) else "unphysical"
    return ResultRow(
        gamma_tau, action, gamma, tau, j.n_modes, reading.i, reading.i_ls, reading.i_sr,
        err.sigma1_sq, err.sigma2_sq, err.sigma_sq, td, s_o, state.tau_c, cost, status,
    )


_RECOVERABLE = (NoUniqueNessError, SolverError, SpectrumError, np.linalg.LinAlgError, ValueError)


def failed_row(junction: Junction, gamma_tau: float, action: float, exc: Exception) -> ResultRow:
    try:
        gamma, tau = point_params(gamma_tau, action)
    except ValueError:
        gamma = tau = math.nan
    nan = math.nan
    return ResultRow(
        gamma_tau, action, gamma, tau, junction.n_modes, nan, nan, nan, nan, nan, nan, nan, nan, nan,
        nan, f"failed: {type(exc).__name__}: {exc}",
    )


def evaluate_point(
    junction: Junction,
    gamma_tau: float,
    action: float,
    ref: ReferenceResult,
    with_osee: bool = False,
) -> ResultRow:
    """Solve and measure one sweep point; numerical failures become a status string."""
    try:
        return measure(solve_point(junction, gamma_tau, action), ref, gamma_tau, action, with_osee)
    except _RECOVERABLE as exc:
        log.warning("point gamma_tau=%g action=%g failed: %s", gamma_tau, action, exc)
        return failed_row(junction, gamma_tau, action, exc)


# -- worker pool --------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(junction: Junction, ref: ReferenceResult, with_osee: bool) -> None:
    _WORKER.update(junction=junction, ref=ref, with_osee=with_osee)


def _run_point(address: tuple[float, float]) -> ResultRow:
    return evaluate_point(_WORKER["junction"], *address, _WORKER["ref"], _WORKER["with_osee"])


def evaluate_many(
    junction: Junction,
    addresses: Sequence[tuple[float, float]],
    ref: ReferenceResult | None = None,
    with_osee: bool = False,
    workers: int = 1,
) -> list[ResultRow]:
    """Evaluate points in input order; results do not depend on ``workers``."""
    ref = ref or negf_reference(junction)
    if workers <= 1 or len(addresses) <= 1:
        return [evaluate_point(junction, g, a, ref, with_osee) for g, a in addresses]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(junction, ref, with_osee)) as pool:
        return list(pool.map(_run_point, addresses, chunksize=max(1, len(addresses) // (4 * workers))))


# -- grids and phase diagrams -------------------------------------------------

def action_grid(lo: float, hi: float, n: int, window: float | None = None) -> tuple[float, ...]:
    """Log-spaced actions, densified so every window of width ``window`` holds >= 3 points."""
    base = np.geomspace(lo, hi, n)
    if window is None:
        return tuple(float(x) for x in base)
    step = window / 2.0
    extra = []
    for a, b in zip(base[:-1], base[1:]):
        if b - a > step:
            k = int(math.ceil((b - a) / step))
            extra.extend(np.linspace(a, b, k + 1)[1:-1])
    return tuple(float(x) for x in np.unique(np.concatenate([base, extra])))


@dataclass(frozen=True)
class GridSpec:
    gamma_tau: tuple[float, ...]
    actions: tuple[float, ...]
    n_modes: tuple[int, ...] = (256,)
    temperatures: tuple[float, ...] = (1.0 / 40.0,)
    bias: float = 0.5

    def __post_init__(self) -> None:
        if any(not g >= 0 for g in self.gamma_tau):
            raise ValueError("gamma_tau values must be >= 0 (0 selects the continuous-relaxation row)")
        if any(not a > 0 for a in self.actions):
            raise ValueError("actions must be positive")
        if list(self.actions) != sorted(self.actions):
            raise ValueError("actions must be ascending")
        if any(n < 1 for n in self.n_modes):
            raise ValueError("n_modes must be positive")
        if any(t < 0 for t in self.temperatures):
            raise ValueError("temperatures must be non-negative")

    @classmethod
    def default(cls, n_modes: int = 256, window: float | None = 3.0, **kw) -> GridSpec:
        rows = (CR,) + tuple(float(x) for x in np.geomspace(1e-2, 1e3, 60)) + (PR,)
        actions = action_grid(0.1, 4 * reservoir_time(n_modes), 120, window)
        return cls(rows, actions, (n_modes,), **kw)

    def window_resolved(self, window: float) -> bool:
        """True when every full window of width ``window`` holds at least 3 actions,
        i.e. neighbouring actions are at most ``window / 2`` apart."""
        a = np.asarray(self.actions)
        return len(a) >= 3 and bool(np.all(np.diff(a) <= window / 2 * (1 + 1e-12)))

    def addresses(self) -> list[tuple[float, float]]:
        return [(g, a) for g in self.gamma_tau for a in self.actions]


def phase_diagram(
    system: SystemSpec,
    grid: GridSpec,
    workers: int = 1,
    with_osee: bool = False,
    progress: Callable[[str], None] | None = None,
) -> list[ResultRow]:
    """All grid points for every (N_W, T) pair, ordered N_W, T, gamma_tau, action."""
    rows: list[ResultRow] = []
    for n in grid.n_modes:
        for t in grid.temperatures:
            junction = Junction.symmetric(system, n, t, grid.bias)
            if progress:
                progress(f"N_W={n} T={t}: {len(grid.addresses())} points")
            rows.extend(evaluate_many(junction, grid.addresses(), None, with_osee, workers))
    return rows


# -- moving average and optimal action ----------------------------------------

def moving_average_error(actions: Sequence[float], sigma_sq: Sequence[float], window: float) -> Array:
    """Mean of sigma^2 over all points with ``|a' - a| <= window / 2``; edges are truncated."""
    a = np.asarray(actions, dtype=float)
    s = np.asarray(sigma_sq, dtype=float)
    if np.any(np.diff(a) < 0):
        raise ValueError("actions must be sorted")
    out = np.empty_like(s)
    for idx, x in enumerate(a):
        sel = np.abs(a - x) <= window / 2 + 1e-12 * max(1.0, abs(x))
        out[idx] = np.mean(s[sel])
    return out


def optimal_action(actions: Sequence[float], sigma_bar_sq: Sequence[float]) -> tuple[float, float]:
    """Action with the smallest averaged error; ties go to the smaller action."""
    s = np.asarray(sigma_bar_sq, dtype=float)
    if np.all(np.isnan(s)):
        raise ValueError("no finite errors to minimize")
    idx = int(np.nanargmin(s))
    return float(actions[idx]), float(s[idx])


@dataclass(frozen=True)
class WindowedPoint:
    """Averaged error around one action plus the row measured at its centre."""

    action: float
    sigma_bar_sq: float
    centre: ResultRow
    samples: tuple[ResultRow, ...]

    @property
    def sigma_bar(self) -> float:
        return math.sqrt(self.sigma_bar_sq)


def window_actions(action: float, window: float, n_points: int = 5) -> Array:
    offsets = np.linspace(-window / 2, window / 2, n_points)
    pts = action + offsets
    return pts[pts > 0]


def windowed_error(
    junction: Junction,
    gamma_tau: float,
    action: float,
    ref: ReferenceResult,
    window: float,
    n_points: int = 5,
    with_osee: bool = False,
) -> WindowedPoint:
    """Average sigma^2 over uniformly spaced actions spanning the window around ``action``."""
    pts = window_actions(action, window, n_points)
    rows = [evaluate_point(junction, gamma_tau, float(a), ref) for a in pts]
    centre = evaluate_point(junction, gamma_tau, action, ref, with_osee) if with_osee else min(
        rows, key=lambda r: abs(r.action - action)
    )
    vals = [r.sigma_sq for r in rows if r.status == "ok"]
    return WindowedPoint(action, float(np.mean(vals)) if vals else math.nan, centre, tuple(rows))


@dataclass(frozen=True)
class OptimalPoint:
    gamma_tau: float
    action: float
    sigma_bar_sq: float
    centre: ResultRow
    scanned: tuple[tuple[float, float], ...]

    @property
    def sigma_bar(self) -> float:
        return math.sqrt(self.sigma_bar_sq)


def find_optimal_action(
    junction: Junction,
    gamma_tau: float,
    ref: ReferenceResult,
    actions: Sequence[float],
    window: float,
    refine: int = 4,
    n_points: int = 5,
    with_osee: bool = False,
) -> OptimalPoint:
    """Two-stage search: windowed errors on a coarse grid, then a finer grid
    between the neighbours of the coarse minimum. Resolution-dependent by nature."""
    acts = sorted(float(a) for a in actions)
    scanned = {a: windowed_error(junction, gamma_tau, a, ref, window, n_points).sigma_bar_sq for a in acts}
    best, _ = optimal_action(acts, [scanned[a] for a in acts])
    i = acts.index(best)
    lo = acts[max(i - 1, 0)]
    hi = acts[min(i + 1, len(acts) - 1)]
    if refine > 0 and hi > lo:
        for a in np.geomspace(lo, hi, refine + 2)[1:-1]:
            a = float(a)
            if a not in scanned:
                scanned[a] = windowed_error(junction, gamma_tau, a, ref, window, n_points).sigma_bar_sq
    keys = sorted(scanned)
    best, val = optimal_action(keys, [scanned[a] for a in keys])
    centre = windowed_error(junction, gamma_tau, best, ref, window, n_points, with_osee).centre
    return OptimalPoint(gamma_tau, best, val, centre, tuple((a, scanned[a]) for a in keys))


# -- continuous relaxation: turnover and heuristic gamma ----------------------

def cr_current(junction: Junction, gamma: float) -> float:
    return currents(solve_continuous_cr(junction, gamma).c, junction.hamiltonian).i


def turnover(junction: Junction, gammas: Iterable[float]) -> list[tuple[float, float]]:
    """(gamma, I) pairs for the continuous-relaxation steady state."""
    return [(float(g), cr_current(junction, float(g))) for g in gammas]


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    lx, ly = np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float)))
    return float(np.polyfit(lx, ly, 1)[0])


class NoCrossingError(RuntimeError):
    def __init__(self, message: str, gammas: Array, differences: Array):
        super().__init__(message)
        self.gammas = gammas
        self.differences = differences


@dataclass(frozen=True)
class HeuristicGamma:
    gamma: float
    shift: float
    crossings: tuple[float, ...] = field(default=())
    gammas: tuple[float, ...] = field(default=(), repr=False)
    differences: tuple[float, ...] = field(default=(), repr=False)

    @property
    def multiple_crossings(self) -> bool:
        return len(self.crossings) > 1


def default_shift(junction: Junction) -> float:
    """Half the mean level spacing of the left reservoir."""
    return 0.5 * mean_level_spacing(junction.left)


def heuristic_cr_gamma(
    junction: Junction,
    shift: float | None = None,
    gammas: Sequence[float] | None = None,
    xtol: float = 1e-4,
) -> HeuristicGamma:
    """Relaxation rate where the turnover with aligned reservoirs crosses the
    turnover with the left band moved down and the right band up by shift/2.

    The scan runs upward in gamma; the first sign change of the difference is
    refined by Brent's method in log gamma.
    """
    shift = default_shift(junction) if shift is None else float(shift)
    if not shift > 0:
        raise ValueError("the shift must be positive; with no shift the two curves coincide")
    shifted = junction.shifted(shift)
    grid = np.geomspace(1e-3, 1.0, 25) if gammas is None else np.sort(np.asarray(gammas, float))

    def diff(g: float) -> float:
        return cr_current(junction, g) - cr_current(shifted, g)

    d = np.array([diff(float(g)) for g in grid])
    idx = [k for k in range(len(grid) - 1) if d[k] == 0 or np.sign(d[k]) != np.sign(d[k + 1])]
    if not idx:
        raise NoCrossingError("the shifted and aligned turnovers do not cross on the scanned range", grid, d)
    crossings = []
    for k in idx:
        if d[k] == 0:
            crossings.append(float(grid[k]))
            continue
        root = brentq(lambda lg: diff(math.exp(lg)), math.log(grid[k]), math.log(grid[k + 1]), xtol=xtol)
        crossings.append(math.exp(root))
        if gammas is None:
            break  # the first crossing is the estimate; later ones are not refined
    if len(idx) > 1:
        log.info("turnover curves cross %d times; using the first", len(idx))
    extra = tuple(float(grid[k]) for k in idx[len(crossings):])
    return HeuristicGamma(crossings[0], shift, tuple(crossings) + extra, tuple(grid), tuple(d))


def heuristic_sensitivity(junction: Junction, shift: float | None = None, **kw) -> dict[float, float | None]:
    """Heuristic gamma for shift/2, shift and 2*shift; None where no crossing exists."""
    base = default_shift(junction) if shift is None else shift
    out: dict[float, float | None] = {}
    for s in (base / 2, base, 2 * base):
        try:
            out[s] = heuristic_cr_gamma(junction, s, **kw).gamma
        except NoCrossingError:
            out[s] = None
    return out


# -- scaling fits -------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    """``y = A x^(-nu)`` fitted by least squares on logs."""

    a: float
    nu: float
    covariance: tuple[tuple[float, float], tuple[float, float]]
    domain: tuple[float, float]

    @property
    def log_a(self) -> float:
        return math.log(self.a)

    @property
    def nu_stderr(self) -> float:
        return math.sqrt(self.covariance[1][1])

    def __call__(self, x):
        return self.a * np.asarray(x, float) ** (-self.nu)


def scaling_fit(x: Sequence[float], y: Sequence[float]) -> ScalingFit:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least 3 matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fits need positive data")
    lx = np.log(x)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate abscissae")
    design = np.column_stack([np.ones_like(lx), -lx])
    coef, _, _, _ = np.linalg.lstsq(design, np.log(y), rcond=None)
    resid = np.log(y) - design @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    return ScalingFit(
        math.exp(coef[0]),
        float(coef[1]),
        ((float(cov[0, 0]), float(cov[0, 1])), (float(cov[1, 0]), float(cov[1, 1]))),
        (float(x.min()), float(x.max())),
    )


def growth_fit(x: Sequence[float], y: Sequence[float]) -> ScalingFit:
    """``y = A x^nu``; returned with ``nu`` as the growth exponent."""
    f = scaling_fit(x, y)
    return ScalingFit(f.a, -f.nu, f.covariance, f.domain)


@dataclass(frozen=True)
class ScalingPoint:
    """Error and cost components at one reservoir size for one protocol."""

    protocol: str
    n_modes: int
    gamma_tau: float
    action: float
    sigma_bar: float
    s_o: float
    tau_c: float
    cost: float


def _scaling_point(protocol: str, n: int, wp: WindowedPoint | OptimalPoint) -> ScalingPoint:
    c = wp.centre
    return ScalingPoint(protocol, n, c.gamma_tau, wp.action, wp.sigma_bar, c.s_o, c.tau_c, c.cost)


def pr_point(junction: Junction, ref: ReferenceResult, window: float, with_osee: bool = True) -> ScalingPoint:
    """Periodic refresh at the reservoir traversal time."""
    tau_w = reservoir_time(junction.n_modes, junction.left.hopping)
    wp = windowed_error(junction, PR, tau_w, ref, window, with_osee=with_osee)
    return _scaling_point("PR", junction.n_modes, wp)


def cr_point(
    junction: Junction, ref: ReferenceResult, window: float, with_osee: bool = True, gamma: float | None = None
) -> ScalingPoint:
    """Continuous relaxation at the heuristic gamma."""
    gamma = heuristic_cr_gamma(junction).gamma if gamma is None else gamma
    wp = windowed_error(junction, CR, 2.0 / gamma, ref, window, with_osee=with_osee)
    return _scaling_point("CR", junction.n_modes, wp)


def arc_point(
    junction: Junction,
    gamma_tau: float,
    ref: ReferenceResult,
    window: float,
    actions: Sequence[float] | None = None,
    with_osee: bool = True,
) -> ScalingPoint:
    """ARC at fixed gamma_tau and the action minimizing the averaged error."""
    tau_w = reservoir_time(junction.n_modes, junction.left.hopping)
    acts = actions if actions is not None else np.geomspace(tau_w / 8, 2 * tau_w, 9)
    opt = find_optimal_action(junction, gamma_tau, ref, acts, window, with_osee=with_osee)
    return _scaling_point(f"ARC gamma_tau={gamma_tau:g}", junction.n_modes, opt)


# -- thermal collapse ---------------------------------------------------------

@dataclass(frozen=True)
class CollapseCurve:
    temperature: float
    n_th: float
    n_modes: tuple[int, ...]
    sigma: tuple[float, ...]

    @property
    def x(self) -> Array:
        return np.asarray(self.n_modes, float) / self.n_th

    @property
    def y(self) -> Array:
        return np.asarray(self.sigma) * self.n_th**2


def collapse_sizes(temperature: float, x_range: tuple[float, float] = (0.5, 10.0), n_points: int = 12) -> list[int]:
    n_th = thermal_length(temperature)
    sizes = np.round(np.geomspace(x_range[0], x_range[1], n_points) * n_th).astype(int)
    return sorted({int(max(s, 1)) for s in sizes})


def thermal_collapse(
    system: SystemSpec,
    temperatures: Sequence[float],
    sizes: dict[float, Sequence[int]] | None = None,
    bias: float = 0.5,
    window: float | None = None,
) -> list[CollapseCurve]:
    """Periodic refresh at tau = tau_W; returns the rescaled ``(N_W/N_th, sigma N_th^2)``
    curves. The error is the window-averaged one so accidental zeros do not
    distort the overlay."""
    window = system_time(system) if window is None else window
    out = []
    for t in temperatures:
        ns = list(sizes[t]) if sizes else collapse_sizes(t)
        sig = []
        for n in ns:
            j = Junction.symmetric(system, n, t, bias)
            ref = negf_reference(j)
            sig.append(pr_point(j, ref, window, with_osee=False).sigma_bar)
        out.append(CollapseCurve(t, thermal_length(t), tuple(ns), tuple(sig)))
    return out


def collapse_spread(curves: Sequence[CollapseCurve], x_range: tuple[float, float] = (0.5, 10.0), n_grid: int = 40):
    """Relative spread ``(max - min) / mean`` of the rescaled curves on a common
    log grid, interpolated linearly in log-log. Returns (x grid, spread)."""
    lo = max(x_range[0], max(c.x.min() for c in curves))
    hi = min(x_range[1], min(c.x.max() for c in curves))
    grid = np.geomspace(lo, hi, n_grid)
    ys = np.array([np.exp(np.interp(np.log(grid), np.log(c.x), np.log(c.y))) for c in curves])
    return grid, (ys.max(axis=0) - ys.min(axis=0)) / ys.mean(axis=0)


def rows_as_dicts(rows: Iterable[ResultRow]) -> list[dict]:
    return [asdict(r) for r in rows]
