"""Command-line harness: the verification check and the three reduction experiments.

Usage::

    crossgram verify [--n 64] [--seed 0]
    crossgram experiment symmetric --out results --plot
    crossgram experiment nonsquare --orders 1:32:1
    crossgram experiment nonsymmetric --horizon 10

Exit status: 0 success/pass, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .gramians import compute_gramians, wz_nonsymmetric
from .ltisys import (LtiSystem, ModelFormatError, SimGrid, lehmer_system,
                     random_system, stability_certificate, system_from_dict, system_to_dict)
from .matcore import as_matrix, fro_norm
from .reduce import RomReport, error_sweep, write_atomic

log = logging.getLogger("crossgram")

EXPERIMENTS = ("verify", "symmetric", "nonsquare", "nonsymmetric")

# experiment -> (m, o)
DEFAULT_DIMS = {"verify": (8, 8), "symmetric": (8, 8), "nonsquare": (4, 8), "nonsymmetric": (8, 8)}

EXPERIMENT_METHODS = {
    "symmetric": ("balanced_truncation", "cross_gramian", "nonsym_cross_gramian"),
    "nonsquare": ("balanced_truncation", "embedding_cross_gramian", "nonsym_cross_gramian"),
    "nonsymmetric": ("balanced_truncation", "cross_gramian", "nonsym_cross_gramian"),
}

EXPERIMENT_GRAMIANS = {
    "symmetric": ("wc", "wo", "wx", "wz"),
    "nonsquare": ("wc", "wo", "wz", "wx_embed"),
    "nonsymmetric": ("wc", "wo", "wx", "wz"),
}

VERIFY_THRESHOLD = 1e-10
BASE_HORIZON = 10.0


class UsageError(ValueError):
    """Invalid command-line input (exit status 2)."""


class StageError(RuntimeError):
    """A numerical stage of an experiment failed (exit status 1)."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


@dataclass(frozen=True)
class ExperimentConfig:
    """One verification or experiment run.

    ``m``/``o`` of None take the experiment's defaults.  ``horizon`` of
    None selects the decay-certified horizon: 10 time units, doubled until
    every free trajectory of the full model has decayed by 1e-6.
    ``orders`` of None sweeps 1..n.
    """

    experiment: str = "symmetric"
    n: int = 64
    m: int | None = None
    o: int | None = None
    seed: int = 0
    dt: float = 0.01
    horizon: float | None = None
    orders: tuple | None = None
    out_dir: str = "."
    plot: bool = False
    symmetrizer: np.ndarray | None = None
    excitation: str = "joint"
    model: LtiSystem | None = None
    save_model: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {self.experiment!r}")
        m, o = DEFAULT_DIMS[self.experiment]
        object.__setattr__(self, "m", m if self.m is None else self.m)
        object.__setattr__(self, "o", o if self.o is None else self.o)
        if self.model is not None:
            object.__setattr__(self, "n", self.model.n)
            object.__setattr__(self, "m", self.model.m)
            object.__setattr__(self, "o", self.model.o)
        if min(self.n, self.m, self.o) < 1:
            raise UsageError("--n, --m and --o must be positive")
        if self.experiment == "symmetric" and self.model is None and self.m != self.o:
            raise UsageError("the symmetric experiment needs m == o (C = B^T)")
        if self.experiment == "nonsymmetric" and self.m != self.o:
            raise UsageError("the nonsymmetric experiment compares the cross gramian and needs m == o")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise UsageError(f"--dt must be positive, got {self.dt}")
        if self.excitation not in ("joint", "separate"):
            raise UsageError(f"unknown excitation {self.excitation!r}")
        if self.orders is not None:
            bad = [k for k in self.orders if not 1 <= k <= self.n]
            if bad:
                raise UsageError(f"orders {bad} outside 1..{self.n}")


@dataclass(frozen=True)
class VerifyReport:
    discrepancy: float
    threshold: float
    horizon: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.discrepancy <= self.threshold


@dataclass
class ExperimentResult:
    report: RomReport
    grid: SimGrid
    csv_path: str
    plot_path: str | None = None


def parse_orders(text):
    """Parse ``a:b:step`` (inclusive), ``a:b`` or a single order ``n``."""
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise UsageError(f"orders must look like a:b:step, got {text!r}") from None
    if len(parts) == 1:
        parts = parts * 2 + [1]
    elif len(parts) == 2:
        parts.append(1)
    elif len(parts) != 3:
        raise UsageError(f"orders must look like a:b:step, got {text!r}")
    start, stop, step = parts
    if step < 1 or start < 1 or stop < start:
        raise UsageError(f"empty or invalid order range {text!r}")
    return tuple(range(start, stop + 1, step))


def read_model(path):
    """Read a system from the JSON model format."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ModelFormatError("<root>", f"malformed JSON: {err}") from None
    return system_from_dict(data)


def write_model(path, system):
    write_atomic(path, json.dumps(system_to_dict(system)) + "\n")


def model_io(path, direction, system=None):
    """Read (``direction="read"``) or write a system in the JSON model format."""
    if direction == "read":
        return read_model(path)
    if direction == "write":
        if system is None:
            raise ValueError("writing a model needs a system")
        write_model(path, system)
        return None
    raise ValueError(f"unknown direction {direction!r}")


def read_symmetrizer(path):
    with open(path) as fh:
        data = json.load(fh)
    rows = data.get("J") if isinstance(data, dict) else data
    return as_matrix(rows, "J")


def build_system(cfg: ExperimentConfig) -> LtiSystem:
    if cfg.model is not None:
        return cfg.model
    if cfg.experiment in ("verify", "symmetric"):
        return lehmer_system(cfg.n, cfg.m, cfg.seed)
    if cfg.experiment == "nonsquare":
        return random_system(cfg.n, cfg.m, cfg.o, cfg.seed, "lehmer")
    return random_system(cfg.n, cfg.m, cfg.o, cfg.seed, "stable_random")


def resolve_grid(system, cfg: ExperimentConfig) -> SimGrid:
    """The configured grid, or the decay-certified one when no horizon is given."""
    if cfg.horizon is not None:
        return SimGrid(cfg.dt, cfg.horizon)
    base = SimGrid(cfg.dt, cfg.dt * max(10, round(BASE_HORIZON / cfg.dt)))
    cert = stability_certificate(system, base)
    if not cert.stable:
        raise StageError("system", f"no decay certificate up to t={cert.horizon:g} "
                                   f"(decay {cert.decay:.3e})")
    return SimGrid(cfg.dt, cert.horizon)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ArithmeticError, ValueError) as err:
        if isinstance(err, UsageError):
            raise
        raise StageError(name, err) from err


def run_verify(cfg: ExperimentConfig) -> VerifyReport:
    """Discrepancy between the subsystem-sum and averaged-system W_Z."""
    start = time.perf_counter()
    system = _stage("system", build_system, cfg)
    grid = _stage("system", resolve_grid, system, cfg)
    wz_sum = _stage("gramians", wz_nonsymmetric, system, grid, "subsystem_sum")
    wz_avg = _stage("gramians", wz_nonsymmetric, system, grid, "averaged_fast_path")
    return VerifyReport(fro_norm(wz_sum - wz_avg), VERIFY_THRESHOLD, grid.horizon,
                        time.perf_counter() - start)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Generate the system, build its gramians, sweep orders, write CSV (and SVG)."""
    if cfg.experiment == "verify":
        raise UsageError("use run_verify for the verification check")
    system = _stage("system", build_system, cfg)
    if cfg.save_model:
        _stage("output", write_model, cfg.save_model, system)
    grid = _stage("system", resolve_grid, system, cfg)
    log.info("%s: n=%d m=%d o=%d seed=%d dt=%g T=%g", cfg.experiment, system.n, system.m,
             system.o, cfg.seed, grid.dt, grid.horizon)
    symmetrizer = cfg.symmetrizer
    if cfg.experiment == "nonsquare" and symmetrizer is None:
        symmetrizer = np.eye(system.n)
    gramians = _stage("gramians", compute_gramians, system, grid, EXPERIMENT_GRAMIANS[cfg.experiment],
                      symmetrizer=symmetrizer)
    orders = cfg.orders or tuple(range(1, system.n + 1))
    report = _stage("sweep", error_sweep, system, grid, gramians, orders,
                    EXPERIMENT_METHODS[cfg.experiment], cfg.excitation)
    for method in report.methods:
        failed = sorted(n for (m, n) in report.failures if m == method)
        if failed:
            log.warning("%s failed at %d order(s) %s: %s", method, len(failed), _compact(failed),
                        report.failures[(method, failed[0])])
    for method, reason in report.skipped.items():
        log.warning("%s skipped: %s", method, reason)
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, f"{cfg.experiment}.csv")
    _stage("output", report.write_csv, csv_path)
    plot_path = None
    if cfg.plot:
        plot_path = os.path.join(cfg.out_dir, f"{cfg.experiment}.svg")
        title = f"{cfg.experiment}: N={system.n}, M={system.m}, O={system.o}, seed={cfg.seed}"
        _stage("output", write_atomic, plot_path, render_svg(report, title))
    return ExperimentResult(report, grid, csv_path, plot_path)


# --------------------------------------------------------------------- plot

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
_LABELS = {
    "balanced_truncation": "balanced truncation",
    "cross_gramian": "cross gramian",
    "nonsym_cross_gramian": "non-symmetric cross gramian",
    "embedding_cross_gramian": "embedding cross gramian",
}


def render_svg(report: RomReport, title="", width=640, height=420):
    """Self-contained SVG line plot with a logarithmic error axis."""
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    points = [(n, e) for m in report.methods for n, e in zip(report.orders, report.errors[m])
              if e > 0 and math.isfinite(e)]
    if not points:
        points = [(1, 1.0)]
    lo = math.floor(math.log10(min(e for _, e in points)))
    hi = max(math.ceil(math.log10(max(e for _, e in points))), lo + 1)
    n0, n1 = min(report.orders), max(report.orders)
    span = max(n1 - n0, 1)

    def x_of(n):
        return left + pw * (n - n0) / span

    def y_of(e):
        return top + ph * (hi - math.log10(e)) / (hi - lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{_escape(title)}</text>']
    for d in range(lo, hi + 1):
        y = y_of(10.0 ** d)
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
    for n in _ticks(n0, n1):
        x = x_of(n)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 16}" text-anchor="middle">{n}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">reduced order</text>')
    out.append(f'<text transform="translate(16,{top + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">relative L2 output error</text>')
    for k, method in enumerate(report.methods):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{x_of(n):.2f},{y_of(e):.2f}" for n, e in zip(report.orders, report.errors[method])
                       if e > 0 and math.isfinite(e))
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + pw - 190}" y1="{ly - 4}" x2="{left + pw - 170}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 165}" y="{ly}">{_escape(_LABELS.get(method, method))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _compact(orders):
    """``[1, 2, 3, 7]`` -> ``"1-3,7"``."""
    runs = [[orders[0], orders[0]]]
    for n in orders[1:]:
        if n == runs[-1][1] + 1:
            runs[-1][1] = n
        else:
            runs.append([n, n])
    return ",".join(f"{a}-{b}" if b > a else f"{a}" for a, b in runs)


def _ticks(n0, n1, target=8):
    step = max(1, math.ceil((n1 - n0) / target))
    return list(range(n0, n1 + 1, step))


def _escape(text):
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------------- CLI

def build_parser():
    parser = argparse.ArgumentParser(
        prog="crossgram",
        description="Cross-gramian model reduction: verification check and reduction experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--n", type=int, default=64, help="state dimension (default 64)")
        p.add_argument("--m", type=int, help="number of inputs")
        p.add_argument("--o", type=int, help="number of outputs")
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        p.add_argument("--dt", type=float, default=0.01, help="RK4 time step (default 0.01)")
        p.add_argument("--horizon", type=float,
                       help="integration horizon T (default: 10, doubled until trajectories decay by 1e-6)")

    verify = sub.add_parser("verify", help="check W_Z(subsystem sum) == W_X(averaged SISO)")
    common(verify)

    exp = sub.add_parser("experiment", help="reduced-order error sweep")
    exp.add_argument("kind", choices=EXPERIMENTS[1:])
    common(exp)
    exp.add_argument("--orders", help="reduced orders a:b:step (default 1:N:1)")
    exp.add_argument("--out", default=".", help="output directory for CSV/SVG (default .)")
    exp.add_argument("--plot", action="store_true", help="also write an SVG plot")
    exp.add_argument("--symmetrizer", metavar="FILE",
                     help="JSON matrix J (or {\"J\": ...}) for the embedding; default identity")
    exp.add_argument("--excitation", choices=("joint", "separate"), default="joint",
                     help="impulse on all inputs at once (default) or one per input channel")
    exp.add_argument("--model", metavar="FILE", help="read the system from a JSON model file")
    exp.add_argument("--save-model", metavar="FILE", help="write the generated system as JSON")
    return parser


def config_from_args(args) -> ExperimentConfig:
    common = dict(n=args.n, m=args.m, o=args.o, seed=args.seed, dt=args.dt, horizon=args.horizon)
    if args.command == "verify":
        return ExperimentConfig(experiment="verify", **common)
    extra = {}
    if args.orders:
        extra["orders"] = parse_orders(args.orders)
    if args.symmetrizer:
        extra["symmetrizer"] = read_symmetrizer(args.symmetrizer)
    if args.model:
        extra["model"] = read_model(args.model)
    cfg = ExperimentConfig(experiment=args.kind, out_dir=args.out, plot=args.plot,
                           excitation=args.excitation, save_model=args.save_model, **common, **extra)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except (UsageError, ModelFormatError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        if cfg.experiment == "verify":
            rep = run_verify(cfg)
            status = "PASS" if rep.passed else "FAIL"
            print(f"||W_Z(subsystem_sum) - W_Z(averaged)||_F = {rep.discrepancy:.3e} "
                  f"(threshold {rep.threshold:.0e}, T={rep.horizon:g}, {rep.seconds:.1f}s) {status}")
            return 0 if rep.passed else 1
        res = run_experiment(cfg)
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {res.csv_path}" + (f" and {res.plot_path}" if res.plot_path else "")
          + f" (T={res.grid.horizon:g}, {len(res.report.failures)} failed reductions)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
