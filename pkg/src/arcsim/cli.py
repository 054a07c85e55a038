"""``arcsim`` command line: one subcommand per experiment, CSV + JSON outputs.

Data files are deterministic for a given config: floats are written with 17
significant digits and rows keep the sweep order regardless of worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import EXPERIMENTS, RunConfig, build_config
from .engine import ArcParams, cycle_map, evolve, initial_state, params_from_action
from .lyapunov import relax_continuous
from .model import mixed_basis_order
from .negf import QuadSpec, reference
from .observables import cost_estimate, currents, osee
from .sweep import (
    COLUMNS,
    CR,
    PR,
    GridSpec,
    action_grid,
    arc_point,
    collapse_sizes,
    collapse_spread,
    cr_current,
    cr_point,
    default_shift,
    evaluate_many,
    find_optimal_action,
    growth_fit,
    heuristic_cr_gamma,
    heuristic_sensitivity,
    moving_average_error,
    phase_diagram,
    pr_point,
    reservoir_time,
    scaling_fit,
    solve_point,
    system_time,
    thermal_collapse,
    thermal_length,
)

log = logging.getLogger("arcsim")

EXIT_CONFIG = 2


# -- output helpers -------------------------------------------------------------

def format_value(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.16e}"
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(x) for x in row])
    return path


def write_json(path: Path, payload: Any) -> Path:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _json_float(x: float):
    """JSON has no inf/nan; write them as strings."""
    return x if math.isfinite(x) else str(x)


def stem(experiment: str, n_modes: Any, temperature: Any) -> str:
    def part(v):
        if isinstance(v, (list, tuple)):
            return "-".join(part(x) for x in v)
        return f"{v:g}" if isinstance(v, float) else str(v)

    return f"{experiment}_{part(n_modes)}_{part(temperature)}"


class Run:
    """Output bookkeeping for one invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.failures: list[str] = []
        self.summary: dict[str, Any] = {}

    def csv(self, name: str, header, rows) -> None:
        self.files.append(write_csv(self.out / f"{name}.csv", header, rows).name)

    def json(self, name: str, payload) -> None:
        self.files.append(write_json(self.out / f"{name}.json", payload).name)

    def record_rows(self, rows) -> None:
        for r in rows:
            if r.status != "ok":
                self.failures.append(f"gamma_tau={r.gamma_tau:g} action={r.action:g}: {r.status}")


# -- experiments ----------------------------------------------------------------

def run_reference(run: Run) -> None:
    cfg = run.cfg
    j = cfg.model.junction()
    p = cfg.reference
    ref = reference(j, QuadSpec(p.epsabs, p.epsrel))
    n = j.system.n_sites
    header = ["current", "quadrature_error"]
    row: list[Any] = [ref.current, ref.quadrature_error_estimate]
    for i in range(n):
        for k in range(n):
            header += [f"c_{i}_{k}_re", f"c_{i}_{k}_im"]
            row += [ref.corr_s[i, k].real, ref.corr_s[i, k].imag]
    run.csv(stem("reference", j.n_modes, j.temperature), header, [row])
    run.summary = {"current": ref.current, "quadrature_error": ref.quadrature_error_estimate}


TIMESERIES_HEADER = ("time", "kind", "i_ls", "i_sr", "current", "i_ls_normalized")


def run_timeseries(run: Run) -> None:
    cfg = run.cfg
    j = cfg.model.junction()
    h = j.hamiltonian
    p = cfg.timeseries
    i0 = reference(j).current
    obs = lambda c: currents(c, h)  # noqa: E731
    for r in p.runs:
        rows = []
        if r.protocol == "CR":
            gamma = heuristic_cr_gamma(j).gamma if r.gamma == "heuristic" else float(r.gamma)
            times = np.linspace(0.0, p.duration, p.continuous_samples + 1)
            for s in relax_continuous(j, gamma, times, observe=obs).samples:
                rows.append((s.time, s.kind, s.value.i_ls, s.value.i_sr, s.value.i, s.value.i_ls / i0))
            run.summary[r.label] = {"gamma": gamma}
        else:
            if r.protocol == "PR":
                params = ArcParams(math.inf, float(r.tau))
            else:
                params = ArcParams(*params_from_action(r.gamma_tau, r.action))
            tau = params.tau
            cmap = cycle_map(j, params)
            cycles = max(1, math.ceil(p.duration / tau))
            intra = tuple(tau * k / p.samples_per_cycle for k in range(1, p.samples_per_cycle + 1))
            traj = evolve(initial_state(j), cmap, cycles, intra, observe=obs)
            strobe_count = intra_count = 0
            for s in traj.samples:
                if s.kind == "stroboscopic":
                    kind = "initial" if strobe_count == 0 else "post-relaxation"
                    strobe_count += 1
                else:
                    # the last intra sample of each cycle is the state right before relaxation
                    intra_count += 1
                    kind = "pre-dissipation" if intra_count % len(intra) == 0 else "coherent"
                rows.append((s.time, kind, s.value.i_ls, s.value.i_sr, s.value.i, s.value.i_ls / i0))
            run.summary[r.label] = {"gamma": _json_float(params.gamma), "tau": tau, "tau_c": cmap.tau_c}
        run.csv(stem(f"timeseries-{r.label}", j.n_modes, j.temperature), TIMESERIES_HEADER, rows)


def _rows_csv(run: Run, name: str, rows, extra: dict[str, Sequence[float]] | None = None) -> None:
    extra = extra or {}
    header = list(COLUMNS[:-1]) + list(extra) + ["status"]
    body = []
    for k, r in enumerate(rows):
        d = asdict(r)
        body.append([d[c] for c in COLUMNS[:-1]] + [v[k] for v in extra.values()] + [d["status"]])
    run.csv(name, header, body)


def run_ness(run: Run) -> None:
    cfg = run.cfg
    j = cfg.model.junction()
    addresses = [(pt.gamma_tau, pt.action) for pt in cfg.ness.points]
    rows = evaluate_many(j, addresses, with_osee=cfg.ness.with_osee, workers=cfg.workers)
    run.record_rows(rows)
    _rows_csv(run, stem("ness", j.n_modes, j.temperature), rows)


def run_turnover(run: Run) -> None:
    cfg = run.cfg
    p = cfg.turnover
    j = cfg.model.junction()
    i0 = reference(j).current
    gammas = np.geomspace(p.gamma_min, p.gamma_max, p.n_gamma)
    shift = p.shift if p.shift is not None else default_shift(j)
    shifted = j.shifted(shift)
    rows = []
    for g in gammas:
        a = cr_current(j, float(g))
        b = cr_current(shifted, float(g)) if p.heuristic else math.nan
        rows.append((float(g), 2.0 / g, a, a / i0, b, b / i0))
    run.csv(
        stem("turnover", j.n_modes, j.temperature),
        ("gamma", "action", "current", "normalized", "current_shifted", "normalized_shifted"),
        rows,
    )
    if p.heuristic:
        est = heuristic_cr_gamma(j, shift)
        sens = heuristic_sensitivity(j, shift)
        run.summary = {
            "shift": shift,
            "heuristic_gamma": est.gamma,
            "crossings": list(est.crossings),
            "multiple_crossings": est.multiple_crossings,
            "sensitivity": {f"{k:.16e}": v for k, v in sens.items()},
        }
        run.json(stem("turnover-heuristic", j.n_modes, j.temperature), run.summary)


def _window(cfg: RunConfig, value: float | None) -> float:
    return system_time(cfg.model.system_spec()) if value is None else value


def run_phase_diagram(run: Run) -> None:
    cfg = run.cfg
    p = cfg.phase_diagram
    n = cfg.model.n_modes
    window = _window(cfg, p.window)
    rows_gt = tuple(float(x) for x in np.geomspace(p.gamma_tau_min, p.gamma_tau_max, p.n_gamma_tau))
    rows_gt = ((CR,) if p.include_cr else ()) + rows_gt + ((PR,) if p.include_pr else ())
    hi = p.action_max if p.action_max is not None else 4 * reservoir_time(n, cfg.model.reservoir_hopping)
    grid = GridSpec(
        rows_gt, action_grid(p.action_min, hi, p.n_actions, window), (n,), (cfg.model.temperature,), cfg.model.bias
    )
    rows = phase_diagram(cfg.model.system_spec(), grid, cfg.workers, p.with_osee, progress=log.info)
    run.record_rows(rows)
    # windowed error along each gamma_tau row
    sigma_bar = np.empty(len(rows))
    k = 0
    while k < len(rows):
        m = k
        while m < len(rows) and rows[m].gamma_tau == rows[k].gamma_tau:
            m += 1
        seg = rows[k:m]
        sig = np.array([r.sigma_sq if r.status == "ok" else np.nan for r in seg])
        ok = ~np.isnan(sig)
        out = np.full(len(seg), np.nan)
        if ok.any():
            acts = np.array([r.action for r in seg])
            out[ok] = moving_average_error(acts[ok], sig[ok], window)
        sigma_bar[k:m] = out
        k = m
    _rows_csv(run, stem("phase-diagram", n, cfg.model.temperature), rows, {"sigma_bar_sq": sigma_bar})


OPTIMAL_HEADER = (
    "gamma_tau", "action", "gamma", "tau", "sigma_bar_sq", "current", "trace_distance", "s_o", "tau_c", "cost",
)


def run_optimal(run: Run) -> None:
    cfg = run.cfg
    p = cfg.optimal
    j = cfg.model.junction()
    ref = reference(j)
    tau_w = reservoir_time(j.n_modes, j.left.hopping)
    acts = np.geomspace(p.action_min or tau_w / 8, p.action_max or 2 * tau_w, p.n_actions)
    window = _window(cfg, p.window)
    rows = []
    for gt in p.gamma_tau:
        opt = find_optimal_action(j, gt, ref, acts, window, p.refine, with_osee=p.with_osee)
        c = opt.centre
        rows.append((gt, opt.action, c.gamma, c.tau, opt.sigma_bar_sq, c.current, c.trace_distance, c.s_o, c.tau_c, c.cost))
    run.csv(stem("optimal", j.n_modes, j.temperature), OPTIMAL_HEADER, rows)


SCALING_HEADER = ("protocol", "n_modes", "gamma_tau", "action", "sigma_bar", "s_o", "tau_c", "cost")


def _fit_payload(fit) -> dict[str, Any]:
    return {"A": fit.a, "log_A": fit.log_a, "nu": fit.nu, "nu_stderr": fit.nu_stderr, "domain": list(fit.domain)}


def run_scaling(run: Run) -> None:
    cfg = run.cfg
    p = cfg.scaling
    window = _window(cfg, p.window)
    points = []
    for n in p.n_modes:
        j = cfg.model.junction(n_modes=n)
        ref = reference(j)
        for proto in p.protocols:
            log.info("scaling: %s at N_W=%d", proto, n)
            if proto == "PR":
                pt = pr_point(j, ref, window, p.with_osee)
            elif proto == "CR":
                pt = cr_point(j, ref, window, p.with_osee)
            else:
                pt = arc_point(j, p.arc_gamma_tau, ref, window, with_osee=p.with_osee)
            points.append(pt)
    rows = [(q.protocol, q.n_modes, q.gamma_tau, q.action, q.sigma_bar, q.s_o, q.tau_c, q.cost) for q in points]
    name = stem("scaling", list(p.n_modes), cfg.model.temperature)
    run.csv(name, SCALING_HEADER, rows)
    fits: dict[str, Any] = {}
    for proto in sorted({q.protocol for q in points}):
        sel = [q for q in points if q.protocol == proto and q.n_modes >= p.fit_min_modes]
        entry: dict[str, Any] = {}
        ns = [q.n_modes for q in sel]
        for key, xs, ys, grow in (
            ("sigma_vs_cost", [q.cost for q in sel], [q.sigma_bar for q in sel], False),
            ("sigma_vs_n", ns, [q.sigma_bar for q in sel], False),
            ("bond_vs_n", ns, [2.0**q.s_o for q in sel], True),
            ("tau_c_vs_n", ns, [q.tau_c for q in sel], True),
            ("cost_vs_n", ns, [q.cost for q in sel], True),
        ):
            try:
                entry[key] = _fit_payload((growth_fit if grow else scaling_fit)(xs, ys))
            except ValueError as exc:
                entry[key] = {"error": str(exc)}
        fits[proto] = entry
    run.summary = fits
    run.json(name + "_fits", fits)


COLLAPSE_HEADER = ("temperature", "n_th", "n_modes", "x", "sigma_bar", "y")


def run_collapse(run: Run) -> None:
    cfg = run.cfg
    p = cfg.collapse
    sizes = {t: collapse_sizes(t, (p.x_min, p.x_max), p.n_points) for t in p.temperatures}
    curves = thermal_collapse(
        cfg.model.system_spec(), p.temperatures, sizes, cfg.model.bias, _window(cfg, p.window)
    )
    rows = []
    for c in curves:
        for n, x, s, y in zip(c.n_modes, c.x, c.sigma, c.y):
            rows.append((c.temperature, c.n_th, n, x, s, y))
    name = stem("collapse", "thermal", list(p.temperatures))
    run.csv(name, COLLAPSE_HEADER, rows)
    grid, spread = collapse_spread(curves, (p.x_min, p.x_max))
    run.summary = {
        "max_relative_spread": float(np.max(spread)),
        "thermal_lengths": {f"{t:g}": thermal_length(t) for t in p.temperatures},
    }
    run.json(name + "_spread", {**run.summary, "x": grid, "spread": spread})


OSEE_HEADER = ("gamma_tau", "action", "cut", "s_o", "tau_c", "cost")


def run_osee(run: Run) -> None:
    cfg = run.cfg
    j = cfg.model.junction()
    order = mixed_basis_order(j.hamiltonian)
    rows = []
    for pt in cfg.osee.points:
        state = solve_point(j, pt.gamma_tau, pt.action)
        rep = osee(state.c, order, cfg.osee.cut)
        rows.append((pt.gamma_tau, pt.action, rep.cut_position, rep.s_o, state.tau_c,
                     cost_estimate(state.tau_c, j.n_modes, rep.s_o)))
    run.csv(stem("osee", j.n_modes, j.temperature), OSEE_HEADER, rows)


RUNNERS = {
    "reference": run_reference,
    "timeseries": run_timeseries,
    "ness": run_ness,
    "turnover": run_turnover,
    "phase-diagram": run_phase_diagram,
    "optimal": run_optimal,
    "scaling": run_scaling,
    "collapse": run_collapse,
    "osee": run_osee,
}


def write_manifest(run: Run, wall: float) -> None:
    path = run.out / "manifest.json"
    manifest = {}
    if path.exists():
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError:
            manifest = {}
    runs = manifest.setdefault("runs", {})
    runs[run.cfg.experiment] = {
        "version": __version__,
        "config": run.cfg.model_dump(mode="json", by_alias=True),
        "files": run.files,
        "wall_time_s": wall,
        "failed_points": len(run.failures),
        "failures": run.failures,
        "summary": run.summary,
    }
    write_json(path, manifest)


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arcsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"arcsim {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes for sweeps")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config leaf by dotted path; VALUE is parsed as JSON")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_error(msg: str) -> int:
    print(f"arcsim: configuration error\n{msg}", file=sys.stderr)
    return EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args.experiment, args.config, tuple(args.set), args.out, args.workers)
    except ValidationError as exc:
        lines = [f"  {'.'.join(str(x) for x in e['loc'])}: {e['msg']}" for e in exc.errors()]
        return config_error("\n".join(lines))
    except (OSError, ValueError) as exc:
        return config_error(f"  {exc}")
    run = Run(cfg)
    t0 = time.perf_counter()
    RUNNERS[cfg.experiment](run)
    write_manifest(run, time.perf_counter() - t0)
    if run.failures:
        print(f"arcsim: {len(run.failures)} point(s) failed; see manifest.json", file=sys.stderr)
    for f in run.files:
        print(run.out / f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
