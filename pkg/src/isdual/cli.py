"""Configuration-driven experiment runner.

Configs are TOML with flat sections::

    [problem]    kind, alpha_tail, scale, atoms, probs, hessian, noise_cov, linear
    [theta_set]  lower/upper  or  A/b
    [sampler]    kind, components, component_kind
    [mu_set]     lower/upper  or  A/b, target_rows
    [engine]     kind (string or list), gain
    [schedule]   gamma, alpha0 (shared)  or  alpha0_theta/alpha0_mu
    [init]       theta0, mu0, theta_center, mu_center
    [run]        horizon, trajectories, seed, thinning, dense_tail, burn_in,
                 checkpoints, hit_by, out

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics as diag
from .errors import ConfigError, NonFiniteGradientError
from .is_families import ExponentialTilting, MeanTranslation, Mixture
from .linalg import Polytope
from .problems import (
    constrained_quadratic_problem,
    exponential_quantile_problem,
    finite_support_quantile_problem,
    normal_quantile_problem,
)
from .solver import ENGINES, USES_FAMILY, StepSchedule, run

log = logging.getLogger("isdual")

WORKERS_ENV = "ISDUAL_WORKERS"
PRESET_PACKAGE = "isdual.presets"

PROBLEM_KINDS = ("normal-quantile", "exponential-quantile", "finite-quantile", "quadratic")
SAMPLER_KINDS = ("exponential-tilting", "mean-translation", "mixture")

_num = (int, float)
_SCHEMA = {
    "problem": {
        "kind": str, "alpha_tail": _num, "scale": _num, "atoms": list, "probs": list,
        "hessian": list, "noise_cov": list, "linear": list,
    },
    "theta_set": {"lower": list, "upper": list, "A": list, "b": list},
    "sampler": {"kind": str, "components": list, "component_kind": str},
    "mu_set": {"lower": list, "upper": list, "A": list, "b": list, "target_rows": list},
    "engine": {"kind": (str, list), "gain": list},
    "schedule": {"gamma": _num, "alpha0": _num, "alpha0_theta": _num, "alpha0_mu": _num},
    "init": {"theta0": list, "mu0": list, "theta_center": list, "mu_center": list},
    "run": {
        "horizon": int, "trajectories": int, "seed": int, "thinning": int, "dense_tail": int,
        "burn_in": int, "checkpoints": list, "hit_by": int, "out": str,
    },
}
_REQUIRED = {"problem": ("kind",), "engine": ("kind",), "schedule": ("gamma",), "run": ("horizon",)}


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` keeps the parsed TOML tables."""

    raw: dict
    engines: list
    gamma: float
    alpha0_theta: float
    alpha0_mu: float
    horizon: int
    trajectories: int = 200
    seed: int = 0
    thinning: int = 100
    dense_tail: int = 1000
    burn_in: int = 0
    checkpoints: list = field(default_factory=list)
    hit_by: int = 0
    out: str = "runs/experiment"
    theta0: list = None
    mu0: list = None
    theta_center: list = None
    mu_center: list = None
    gain: list = None
    target_rows: list = None

    def section(self, name):
        return self.raw.get(name, {})


def _check_types(data):
    for sec, body in data.items():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for key, val in body.items():
            want = _SCHEMA[sec].get(key)
            if want is None:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            if isinstance(val, bool) or not isinstance(val, want):
                raise ConfigError(f"{sec}.{key} has the wrong type ({type(val).__name__})")
    for sec, keys in _REQUIRED.items():
        for key in keys:
            if key not in data.get(sec, {}):
                raise ConfigError(f"missing required field {key!r} in [{sec}]")


def parse_config(text, source="<config>"):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        where = f" (line {line}, column {col})" if line is not None else ""
        raise ConfigError(f"{source}: parse error{where}: {exc}") from exc
    _check_types(data)

    eng = data["engine"]["kind"]
    engines = [eng] if isinstance(eng, str) else list(eng)
    for e in engines:
        if e not in ENGINES:
            raise ConfigError(f"engine.kind {e!r} is not one of {', '.join(ENGINES)}")
    sch = data["schedule"]
    gamma = float(sch["gamma"])
    if not 0.5 < gamma < 1.0:
        raise ConfigError(f"schedule.gamma must lie in the open interval (0.5, 1), got {gamma}")
    a_theta = sch.get("alpha0_theta", sch.get("alpha0"))
    if a_theta is None:
        raise ConfigError("missing required field 'alpha0' (or 'alpha0_theta') in [schedule]")
    a_mu = sch.get("alpha0_mu", a_theta)
    for name, v in (("alpha0_theta", a_theta), ("alpha0_mu", a_mu)):
        if not v > 0:
            raise ConfigError(f"schedule.{name} must be positive")

    r = data["run"]
    cfg = ExperimentConfig(
        raw=data, engines=engines, gamma=gamma,
        alpha0_theta=float(a_theta), alpha0_mu=float(a_mu), horizon=int(r["horizon"]),
    )
    for key in ("trajectories", "seed", "thinning", "dense_tail", "burn_in", "hit_by", "out"):
        if key in r:
            setattr(cfg, key, r[key])
    if "checkpoints" in r:
        cfg.checkpoints = [int(n) for n in r["checkpoints"]]
    init = data.get("init", {})
    for key in ("theta0", "mu0", "theta_center", "mu_center"):
        setattr(cfg, key, init.get(key))
    cfg.gain = data["engine"].get("gain")
    cfg.target_rows = data.get("mu_set", {}).get("target_rows")
    validate(cfg)
    return cfg


def validate(cfg):
    """Range checks that also apply after command-line overrides."""
    if cfg.horizon < 1:
        raise ConfigError("run.horizon must be at least 1")
    if cfg.trajectories < 1:
        raise ConfigError("run.trajectories must be at least 1")
    if cfg.thinning < 1:
        raise ConfigError("run.thinning must be at least 1")
    if not 0 <= cfg.burn_in < cfg.horizon:
        raise ConfigError("run.burn_in must lie in [0, horizon)")
    if any(not 1 <= n <= cfg.horizon for n in cfg.checkpoints):
        raise ConfigError("run.checkpoints must lie in [1, horizon]")
    if any(e in USES_FAMILY for e in cfg.engines) and "sampler" not in cfg.raw:
        raise ConfigError("an importance-sampling engine needs a [sampler] section")
    problem, family = build(cfg)
    for name, v, dim in (
        ("theta0", cfg.theta0, problem.dim),
        ("theta_center", cfg.theta_center, problem.dim),
        ("mu0", cfg.mu0, family.dim_mu if family else None),
        ("mu_center", cfg.mu_center, family.dim_mu if family else None),
    ):
        if v is not None and dim is not None and len(v) != dim:
            raise ConfigError(f"init.{name} has length {len(v)}, expected {dim}")
    return cfg


def load_config(path):
    """Read and validate a TOML experiment config."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


# --------------------------------------------------------------------------
# building objects from config


def _polytope(sec, name, dim=None):
    if "A" in sec or "b" in sec:
        if "A" not in sec or "b" not in sec:
            raise ConfigError(f"[{name}] needs both A and b")
        return Polytope(np.array(sec["A"], dtype=float), np.array(sec["b"], dtype=float), dim=dim)
    if "lower" in sec or "upper" in sec:
        lo = sec.get("lower", [-math.inf] * len(sec.get("upper", [])))
        hi = sec.get("upper", [math.inf] * len(lo))
        if len(lo) != len(hi):
            raise ConfigError(f"[{name}] lower and upper differ in length")
        return Polytope.box(lo, hi)
    if dim is None:
        raise ConfigError(f"[{name}] needs lower/upper or A/b")
    return Polytope.unconstrained(dim)


def _box_bounds(K, name):
    if not (K.is_box and K.dim == 1):
        raise ConfigError(f"[{name}] must be a one-dimensional interval for a quantile problem")
    lo, hi = K.bounds
    return float(lo[0]), float(hi[0])


def build_problem(cfg):
    p = cfg.section("problem")
    kind = p["kind"]
    scale = float(p.get("scale", 1.0))
    try:
        if kind in ("normal-quantile", "exponential-quantile", "finite-quantile"):
            if "alpha_tail" not in p:
                raise ConfigError("missing required field 'alpha_tail' in [problem]")
            box = _box_bounds(_polytope(cfg.section("theta_set"), "theta_set", 1), "theta_set")
            a = float(p["alpha_tail"])
            if kind == "normal-quantile":
                return normal_quantile_problem(a, box, scale)
            if kind == "exponential-quantile":
                return exponential_quantile_problem(a, box, scale)
            if "atoms" not in p or "probs" not in p:
                raise ConfigError("finite-quantile needs 'atoms' and 'probs' in [problem]")
            return finite_support_quantile_problem(p["atoms"], p["probs"], a, box, scale)
        if kind == "quadratic":
            if "hessian" not in p:
                raise ConfigError("missing required field 'hessian' in [problem]")
            H = np.array(p["hessian"], dtype=float)
            noise = np.array(p.get("noise_cov", np.eye(H.shape[0]).tolist()), dtype=float)
            K = _polytope(cfg.section("theta_set"), "theta_set", H.shape[0])
            return constrained_quadratic_problem(H, noise, K, p.get("linear"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[problem]: {exc}") from exc
    raise ConfigError(f"problem.kind {kind!r} is not one of {', '.join(PROBLEM_KINDS)}")


def _simple_family(kind, base, M):
    if kind == "exponential-tilting":
        return ExponentialTilting(base, M)
    if kind == "mean-translation":
        return MeanTranslation(base, M)
    raise ConfigError(f"sampler kind {kind!r} is not one of {', '.join(SAMPLER_KINDS)}")


def build_family(cfg, problem):
    s = cfg.raw.get("sampler")
    if s is None:
        return None
    kind = s.get("kind")
    if kind is None:
        raise ConfigError("missing required field 'kind' in [sampler]")
    try:
        if kind == "mixture":
            comps = s.get("components")
            if not comps:
                raise ConfigError("a mixture needs a non-empty 'components' list in [sampler]")
            ck = s.get("component_kind", "exponential-tilting")
            free = Polytope.unconstrained(problem.base.dim)
            parts = [(_simple_family(ck, problem.base, free), c) for c in comps]
            rows = {k: v for k, v in cfg.section("mu_set").items() if k != "target_rows"}
            M = _polytope(rows, "mu_set") if rows else None
            return Mixture(parts, M)
        M = _polytope(cfg.section("mu_set"), "mu_set", problem.base.dim)
        return _simple_family(kind, problem.base, M)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[sampler]: {exc}") from exc


def build(cfg):
    problem = build_problem(cfg)
    return problem, build_family(cfg, problem)


def default_checkpoints(horizon, burn_in=0):
    pts = set(diag.geometric_checkpoints(1, horizon, 1.25))
    if burn_in > 0:
        pts.update(burn_in + n for n in diag.geometric_checkpoints(1, horizon - burn_in, 1.25))
    return sorted(pts)


# --------------------------------------------------------------------------
# running


def _run_batch(args):
    cfg, engine, start, count, checkpoints = args
    problem, family = build(cfg)
    try:
        return run(
            engine, problem, family if engine in USES_FAMILY else None,
            StepSchedule(cfg.alpha0_theta, cfg.gamma),
            horizon=cfg.horizon, seed=cfg.seed, trajectories=count, start_index=start,
            theta0=cfg.theta0, mu0=cfg.mu0,
            theta_center=cfg.theta_center, mu_center=cfg.mu_center,
            mu_schedule=StepSchedule(cfg.alpha0_mu, cfg.gamma),
            stride=cfg.thinning, dense_tail=cfg.dense_tail, record_at=checkpoints,
            gain=None if cfg.gain is None else np.array(cfg.gain, dtype=float),
        )
    except NonFiniteGradientError as exc:
        seed = cfg.seed + start + exc.trajectory
        raise RuntimeError(f"engine {engine}: trajectory with seed {seed} failed: {exc}") from exc
    except Exception as exc:
        seeds = f"{cfg.seed + start}..{cfg.seed + start + count - 1}"
        raise RuntimeError(f"engine {engine}: batch with seeds {seeds} failed: {exc}") from exc


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    return max(n, 1)


def run_engine(cfg, engine, checkpoints=(), workers=None):
    """All trajectories of one engine, ordered by trajectory index."""
    workers = worker_count() if workers is None else max(int(workers), 1)
    T = cfg.trajectories
    n_batches = min(workers, T)
    edges = np.linspace(0, T, n_batches + 1).round().astype(int)
    jobs = [(cfg, engine, int(a), int(b - a), tuple(checkpoints)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if workers == 1 or len(jobs) == 1:
        parts = [_run_batch(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_batch, jobs))
    return [r for part in parts for r in part]


def _fmt(x):
    return repr(float(x))


def _rows_str(mask):
    return ";".join(str(i) for i in np.flatnonzero(mask))


def trajectory_header(s, m):
    return (
        ["traj", "seed", "n"]
        + [f"theta_{i}" for i in range(s)]
        + [f"mu_{j}" for j in range(m)]
        + [f"theta_bar_{i}" for i in range(s)]
        + [f"mu_bar_{j}" for j in range(m)]
        + ["active_theta_rows", "active_mu_rows"]
    )


def write_trajectories(records, path):
    """One row per recorded iteration of every trajectory; floats are round-trip exact."""
    s, m = records[0].theta.shape[1], records[0].mu.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(s, m))
        for r in records:
            for k in range(r.n.size):
                w.writerow(
                    [r.traj, r.seed, int(r.n[k])]
                    + [_fmt(v) for v in r.theta[k]]
                    + [_fmt(v) for v in r.mu[k]]
                    + [_fmt(v) for v in r.theta_bar[k]]
                    + [_fmt(v) for v in r.mu_bar[k]]
                    + [_rows_str(r.active_theta[k]), _rows_str(r.active_mu[k])]
                )


def write_summary(summary, path):
    """Checkpoint bands and, after the burn-in, scaled-error variances."""
    s = summary.theta_mean.shape[-1]
    m = summary.mu_mean.shape[-1]
    cols = ["n"]
    for track, d in (("theta", s), ("theta_bar", s), ("mu", m)):
        for i in range(d):
            cols += [f"{track}_mean_{i}", f"{track}_lo_{i}", f"{track}_hi_{i}"]
    cols += [f"var_{i}_{j}" for i in range(s) for j in range(s)]
    var_at = dict(zip(summary.variance_checkpoints, summary.variance if summary.variance is not None else []))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, n in enumerate(summary.checkpoints):
            row = [n]
            for track, d in (("theta", s), ("theta_bar", s), ("mu", m)):
                mean, lo, hi = (getattr(summary, f"{track}_{p}") for p in ("mean", "lo", "hi"))
                for i in range(d):
                    row += [_fmt(mean[k, i]), _fmt(lo[k, i]), _fmt(hi[k, i])]
            V = var_at.get(n)
            row += [""] * (s * s) if V is None else [_fmt(v) for v in V.reshape(-1)]
            w.writerow(row)


def engine_metrics(summary, cfg, problem):
    n = summary.checkpoints[-1]
    out = {
        "engine": summary.engine,
        "trajectories": summary.trajectories,
        "horizon": cfg.horizon,
        "samples": summary.samples_per_iter * cfg.horizon,
        "theta_band_width": summary.band_width(n, "theta").tolist(),
        "theta_bar_band_width": summary.band_width(n, "theta_bar").tolist(),
        "theta_mean": summary.theta_mean[-1].tolist(),
    }
    if summary.variance is not None and n in summary.variance_checkpoints:
        out["scaled_error_variance"] = summary.variance_at(n).tolist()
        out["burn_in"] = summary.burn_in
    if summary.mu_mean.shape[-1]:
        out["mu_mean"] = summary.mu_mean[-1].tolist()
    if summary.hit_times:
        hits = summary.hit_times
        by = cfg.hit_by or cfg.horizon
        out["hit_by"] = by
        out["hit_fraction"] = sum(h is not None and h <= by for h in hits) / len(hits)
        finite = [h for h in hits if h is not None]
        out["median_hit_time"] = float(np.median(finite)) if len(finite) > len(hits) / 2 else None
    if summary.residual is not None:
        out["projected_gradient_residual_mean"] = float(summary.residual[:, -1].mean())
    return out


def run_experiment(cfg, out=None, workers=None, write=True):
    """Run every configured engine; write CSVs and ``report.json`` under ``out``.

    Returns ``(summaries, report)`` with one :class:`ExperimentSummary` per engine.
    """
    problem, family = build(cfg)
    checkpoints = cfg.checkpoints or default_checkpoints(cfg.horizon, cfg.burn_in)
    out = Path(out or cfg.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    summaries, report = {}, {"engines": {}, "theta_star": None}
    if problem.theta_star is not None:
        report["theta_star"] = problem.theta_star.tolist()
    targets = cfg.target_rows
    for engine in cfg.engines:
        records = run_engine(cfg, engine, checkpoints, workers)
        use_mu = engine in USES_FAMILY
        summ = diag.summarize(
            records, problem, checkpoints, cfg.burn_in,
            mu_set=family.M if use_mu else None,
            mu_targets=targets if use_mu else None,
        )
        summaries[engine] = summ
        report["engines"][engine] = engine_metrics(summ, cfg, problem)
        if write:
            write_trajectories(records, out / f"trajectories_{engine}.csv")
            write_summary(summ, out / f"summary_{engine}.csv")
        log.info("finished %s (%d trajectories)", engine, len(records))
    ref = report["engines"].get("projected-sgd", {}).get("scaled_error_variance")
    if ref is not None and np.trace(ref) > 0:
        for name, met in report["engines"].items():
            v = met.get("scaled_error_variance")
            if v is not None:
                met["variance_ratio_vs_projected_sgd"] = float(np.trace(v) / np.trace(ref))
    report["config"] = {k: v for k, v in asdict(cfg).items() if k != "raw"}
    report["config"]["sections"] = cfg.raw
    if write:
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return summaries, report


# --------------------------------------------------------------------------
# plotting


def _read_summary(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def _col(rows, key):
    return np.array([float(r[key]) if r[key] != "" else np.nan for r in rows])


def emit_plots(outdir):
    """Render SVG figures from the summary CSVs in ``outdir``; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    data = {}
    for path in sorted(outdir.glob("summary_*.csv")):
        rows = _read_summary(path)
        if rows:
            data[path.stem[len("summary_"):]] = rows
    if not data:
        warnings.warn(f"no checkpoint rows in {outdir}; no figures written")
        return []

    written = []

    def band_figure(track, fname, ylabel):
        fig, ax = plt.subplots(figsize=(6, 4))
        drawn = False
        for engine, rows in data.items():
            if f"{track}_mean_0" not in rows[0]:
                continue
            n = _col(rows, "n")
            mean, lo, hi = (_col(rows, f"{track}_{p}_0") for p in ("mean", "lo", "hi"))
            (line,) = ax.plot(n, mean, label=engine)
            ax.fill_between(n, lo, hi, color=line.get_color(), alpha=0.25)
            drawn = True
        if not drawn:
            plt.close(fig)
            return
        ax.set_xscale("log")
        ax.set_xlabel("iteration n")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(outdir / fname)
        plt.close(fig)
        written.append(outdir / fname)

    band_figure("theta", "theta_band.svg", "theta_n (mean, 10%-90% band)")
    band_figure("mu", "mu_band.svg", "mu_n (mean, 10%-90% band)")

    fig, ax = plt.subplots(figsize=(6, 4))
    drawn = False
    for engine, rows in data.items():
        n, v = _col(rows, "n"), _col(rows, "var_0_0")
        keep = np.isfinite(v)
        if keep.any():
            ax.plot(n[keep], v[keep], label=engine)
            drawn = True
    if drawn:
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("iteration n")
        ax.set_ylabel("Var[sqrt(n - b) (theta_bar - theta*)]")
        ax.legend()
        fig.tight_layout()
        fig.savefig(outdir / "variance.svg")
        written.append(outdir / "variance.svg")
    plt.close(fig)
    return written


# --------------------------------------------------------------------------
# presets and entry point


def preset_names():
    return sorted(p.name[:-5] for p in resources.files(PRESET_PACKAGE).iterdir() if p.name.endswith(".toml"))


def preset_text(name):
    res = resources.files(PRESET_PACKAGE) / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return res.read_text()


def load_preset(name):
    return parse_config(preset_text(name), f"preset {name}")


def resolve_config(ref):
    """A path to a TOML file, or the name of a shipped preset."""
    if Path(ref).is_file():
        return load_config(ref)
    if ref in preset_names():
        return load_preset(ref)
    raise ConfigError(f"{ref!r} is neither a config file nor a preset")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="isdual", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a config file or preset name")
    p_run.add_argument("config")
    p_run.add_argument("--trajectories", type=int)
    p_run.add_argument("--horizon", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--plot", action="store_true", help="also render figures")
    p_plot = sub.add_parser("plot", help="render figures from an output directory")
    p_plot.add_argument("dir")
    p_pre = sub.add_parser("presets", help="shipped configurations")
    p_pre.add_argument("action", choices=["list", "show"])
    p_pre.add_argument("name", nargs="?")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    try:
        if args.cmd == "run":
            cfg = resolve_config(args.config)
            if args.trajectories is not None:
                cfg.trajectories = args.trajectories
            if args.horizon is not None:
                cfg.horizon = args.horizon
                cfg.burn_in = min(cfg.burn_in, args.horizon - 1)
                cfg.checkpoints = [n for n in cfg.checkpoints if n <= args.horizon]
                cfg.hit_by = min(cfg.hit_by, args.horizon)
            if args.seed is not None:
                cfg.seed = args.seed
            validate(cfg)
            _, report = run_experiment(cfg, out=args.out)
            out = Path(args.out or cfg.out)
            print(json.dumps(report["engines"], indent=2, sort_keys=True))
            print(f"wrote {out}")
            if args.plot:
                for path in emit_plots(out):
                    print(f"wrote {path}")
        elif args.cmd == "plot":
            for path in emit_plots(args.dir):
                print(f"wrote {path}")
        elif args.action == "list":
            for name in preset_names():
                print(name)
        else:
            if not args.name:
                ap.error("presets show needs a name")
            print(preset_text(args.name), end="")
    except (ConfigError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
