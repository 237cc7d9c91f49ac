"""Experiment harness: config files in, per-seed and aggregate CSV metrics out.

CLI::

    cca run <config-path>
    cca report <dir> [<dir> ...] [--svg]
    cca selftest
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Hyperparams, RngStream
from .envs import make_env

log = logging.getLogger("cca")

SCHEMA_LINE = "# schema=1"
METRIC_COLUMNS = ("seed", "index", "env_steps", "episode_return", "average_reward",
                  "cumulative_reward", "final_state", "occupancy_entropy", "eval_return")
AGG_COLUMNS = ("env_steps", "episode_return", "average_reward", "cumulative_reward",
               "final_state", "occupancy_entropy", "eval_return")

TABULAR_METHODS = ("cca", "qlearning")
AC_METHODS = ("cca", "saclite")
COMPATIBLE = {"tworooms": TABULAR_METHODS, "mountaincar": AC_METHODS}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: str
    method: str
    seeds: list[int]
    hp: Hyperparams = field(default_factory=Hyperparams)
    trials: int = 2000
    total_steps: int = 200_000
    output_dir: Path = Path("runs")

    def validate(self) -> None:
        if self.env not in COMPATIBLE:
            raise ConfigError(f"env: unknown environment {self.env!r}; "
                              f"expected one of {sorted(COMPATIBLE)}")
        if self.method not in COMPATIBLE[self.env]:
            raise ConfigError(f"method: {self.method!r} does not run on {self.env!r}; "
                              f"choose one of {COMPATIBLE[self.env]}")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if self.trials < 0:
            raise ConfigError("trials: must be >= 0")
        if self.total_steps < 0:
            raise ConfigError("total_steps: must be >= 0")

    def to_text(self) -> str:
        lines = [f"env={self.env}", f"method={self.method}",
                 f"seeds={','.join(str(s) for s in self.seeds)}",
                 f"trials={self.trials}", f"total_steps={self.total_steps}",
                 f"output_dir={self.output_dir}"]
        for f in dataclasses.fields(Hyperparams):
            v = getattr(self.hp, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "auto"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


@dataclass
class MetricsRow:
    seed: int
    index: int
    env_steps: int
    episode_return: float
    average_reward: float
    cumulative_reward: float
    final_state: int | None = None
    occupancy_entropy: float | None = None
    eval_return: float | None = None


# -- config parsing ------------------------------------------------------------

_ALIASES = {"lambda": "lam"}
_TOP_KEYS = {"env", "method", "seeds", "trials", "total_steps", "output_dir"}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert_hp(name: str, text: str):
    if name == "hidden":
        return tuple(int(x) for x in text.split(","))
    if name == "kde_bandwidth":
        return None if text.lower() in ("scott", "auto", "none") else float(text)
    if name == "updates_per_epoch":
        return None if text.lower() in ("auto", "none") else int(text)
    if name == "elbo_target_sign":
        return text
    if name == "prior_baseline":
        return _parse_bool(text)
    kind = type(getattr(Hyperparams(), name))
    return kind(float(text)) if kind is int and "e" in text.lower() else kind(text)


def parse_config_text(text: str, base_dir: Path | None = None,
                      source: str = "<config>") -> ExperimentConfig:
    top: dict = {}
    hp_kwargs: dict = {}
    hp_names = set(Hyperparams.field_names())
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key in top or key in hp_kwargs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            if key in ("env", "method"):
                top[key] = value
            elif key == "seeds":
                top[key] = [int(s) for s in value.split(",") if s.strip()]
            elif key in ("trials", "total_steps"):
                top[key] = int(float(value))
            elif key == "output_dir":
                top[key] = Path(value)
            elif key in hp_names:
                hp_kwargs[key] = _convert_hp(key, value)
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {e}") from None
    for required in ("env", "method"):
        if required not in top:
            raise ConfigError(f"{source}: missing required key {required!r}")
    try:
        hp = Hyperparams(**hp_kwargs)
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from None
    out = top.pop("output_dir", Path("runs") / f"{top['env']}_{top['method']}")
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    cfg = ExperimentConfig(hp=hp, output_dir=out, seeds=top.pop("seeds", []), **top)
    cfg.validate()
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), base_dir=None, source=str(path))


# -- running -------------------------------------------------------------------

def run_seed(cfg: ExperimentConfig, seed: int) -> list[MetricsRow]:
    env = make_env(cfg.env)
    rng = RngStream(seed)
    if cfg.env == "tworooms":
        from .tabular import run_discrete_experiment
        recs = run_discrete_experiment(env, cfg.method, cfg.hp, cfg.trials, rng)
        steps = env.horizon
        return [MetricsRow(seed, r.index, steps * (r.index + 1), r.reward, r.reward / steps,
                           r.cumulative_reward, r.final_state, r.occupancy_entropy)
                for r in recs]
    from .actor_critic import make_agent, train
    init_rng, train_rng = rng.split(2)
    agent = make_agent(cfg.method, env, cfg.hp, init_rng)
    recs = train(agent, env, cfg.hp, cfg.total_steps, train_rng)
    return [MetricsRow(seed, r.index, r.env_steps, r.episode_return, r.average_reward,
                       r.cumulative_reward, eval_return=r.eval_return) for r in recs]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_metrics(path: Path, rows: list[MetricsRow]) -> None:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in METRIC_COLUMNS])
    path.write_text(buf.getvalue())


def read_metrics(path: Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != SCHEMA_LINE:
        raise ValueError(f"{path}: missing '{SCHEMA_LINE}' header")
    reader = csv.DictReader(lines[1:])
    cols: dict[str, list] = {c: [] for c in reader.fieldnames or []}
    for row in reader:
        for c, v in row.items():
            cols[c].append(float(v) if v != "" else math.nan)
    return {c: np.array(v) for c, v in cols.items()}


def aggregate(per_seed: list[list[MetricsRow]]) -> list[list]:
    """Mean/std across seeds per index, over indices every seed reached."""
    n = min(len(rows) for rows in per_seed)
    out = []
    for i in range(n):
        row: list = [i, len(per_seed)]
        for c in AGG_COLUMNS:
            vals = [getattr(rows[i], c) for rows in per_seed]
            if any(v is None for v in vals):
                row += [None, None]
            else:
                arr = np.array(vals, dtype=np.float64)
                row += [float(arr.mean()), float(arr.std())]
        out.append(row)
    return out


def write_aggregate(path: Path, table: list[list]) -> None:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    header = ["index", "n_seeds"]
    for c in AGG_COLUMNS:
        header += [f"{c}_mean", f"{c}_std"]
    w.writerow(header)
    for row in table:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def run(cfg: ExperimentConfig) -> list[Path]:
    """Run every seed and write ``seed_<s>.csv`` files plus ``aggregate.csv``."""
    cfg.validate()
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    workers = max(1, int(os.environ.get("CCA_THREADS", "1")))
    if workers == 1:
        results = [run_seed(cfg, s) for s in cfg.seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: run_seed(cfg, s), cfg.seeds))
    paths = []
    for seed, rows in zip(cfg.seeds, results):
        p = out / f"seed_{seed}.csv"
        write_metrics(p, rows)
        paths.append(p)
    agg = out / "aggregate.csv"
    if all(results):
        write_aggregate(agg, aggregate(results))
    else:
        write_aggregate(agg, [])
    paths.append(agg)
    (out / "config.txt").write_text(cfg.to_text())
    return paths


# -- reporting -----------------------------------------------------------------

@dataclass
class Summary:
    directory: str
    label: str
    n_seeds: int
    final_cumulative: tuple[float, float]
    last_return: tuple[float, float]
    last_eval: tuple[float, float] | None


def _mean_std(x) -> tuple[float, float]:
    a = np.asarray(x, dtype=np.float64)
    return float(a.mean()), float(a.std())


def summarize(directory) -> Summary:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: no such directory")
    files = sorted(d.glob("seed_*.csv"))
    if not files:
        raise FileNotFoundError(f"{d}: no seed_*.csv metrics files")
    label = d.name
    cfg_file = d / "config.txt"
    if cfg_file.exists():
        kv = dict(l.split("=", 1) for l in cfg_file.read_text().splitlines() if "=" in l)
        label = f"{kv.get('method', '?')}@{kv.get('env', '?')}"
    finals, lasts, evals = [], [], []
    for f in files:
        m = read_metrics(f)
        n = len(m["index"])
        if n == 0:
            continue
        k = max(1, int(math.ceil(0.1 * n)))
        finals.append(m["cumulative_reward"][-1])
        lasts.append(np.mean(m["episode_return"][-k:]))
        ev = m["eval_return"][-k:]
        if not np.all(np.isnan(ev)):
            evals.append(np.nanmean(ev))
    if not finals:
        raise ValueError(f"{d}: metrics files are empty")
    return Summary(str(d), label, len(files), _mean_std(finals), _mean_std(lasts),
                   _mean_std(evals) if evals else None)


def format_summaries(summaries: list[Summary]) -> str:
    lines = [f"{'run':<28}{'seeds':>6}  {'final cumulative':>22}  {'last-10% return':>22}"
             f"  {'last-10% eval':>22}"]
    for s in summaries:
        ev = f"{s.last_eval[0]:10.3f} ± {s.last_eval[1]:<9.3f}" if s.last_eval else f"{'-':>22}"
        lines.append(f"{s.label:<28}{s.n_seeds:>6}  {s.final_cumulative[0]:10.3f} ± "
                     f"{s.final_cumulative[1]:<9.3f}  {s.last_return[0]:10.3f} ± "
                     f"{s.last_return[1]:<9.3f}  {ev}")
    return "\n".join(lines)


def svg_line_chart(series: dict[str, tuple[np.ndarray, np.ndarray]], title: str,
                   width: int = 640, height: int = 360) -> str:
    """Minimal standalone SVG with one polyline per series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"]
    pad = 50
    xs = np.concatenate([x for x, _ in series.values()]) if series else np.zeros(1)
    ys = np.concatenate([y for _, y in series.values()]) if series else np.zeros(1)
    ys = ys[np.isfinite(ys)] if np.isfinite(ys).any() else np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max()) or 1.0
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x0:g}</text>',
             f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x1:g}</text>',
             f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
             f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>']
    for k, (name, (x, y)) in enumerate(series.items()):
        ok = np.isfinite(y)
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x[ok], y[ok]))
        color = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * k}" font-size="11" '
                     f'text-anchor="end" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _read_aggregate(d: Path) -> dict[str, np.ndarray]:
    return read_metrics(d / "aggregate.csv")


def report(dirs, svg: bool = False, out=None) -> list[Summary]:
    out = out or sys.stdout
    summaries = [summarize(d) for d in dirs]
    print(format_summaries(summaries), file=out)
    if svg:
        charts = {c: {} for c in ("cumulative_reward", "episode_return", "eval_return",
                                  "occupancy_entropy")}
        for s in summaries:
            agg = _read_aggregate(Path(s.directory))
            if len(agg.get("index", [])) == 0:
                continue
            for col in charts:
                y = agg[f"{col}_mean"]
                if np.isfinite(y).any():
                    charts[col][s.label] = (agg["index"], y)
        target = Path(dirs[0]) if len(dirs) == 1 else Path(os.path.commonpath(
            [str(Path(d).resolve()) for d in dirs]))
        for col, series in charts.items():
            if series:
                p = target / f"{col}.svg"
                p.write_text(svg_line_chart(series, f"{col} (mean over seeds)"))
                print(f"wrote {p}", file=out)
    return summaries


# -- selftest --------------------------------------------------------------------

def selftest(out=None) -> bool:
    """Quick oracle checks; the full suites live in the pytest tree."""
    from .envs import TwoRoomsEnv, shortest_path_length
    from .nn import Mlp
    from .occupancy import exact_occupancy, kde_fit, monte_carlo_occupancy, total_variation
    from .tabular import softmax_policy

    out = out or sys.stdout
    rng = RngStream(2024)
    results = {}

    net = Mlp((3, 5, 2), rng, members=2)
    x = rng.normal((4, 3))
    w = rng.normal((2, 4, 2))
    net.forward(x)
    grads, _ = net.backward(w)
    p, i = net.params[0], (1, 2, 3)
    old = p[i]
    p[i] = old + 1e-5
    fp = float((net.forward(x) * w).sum())
    p[i] = old - 1e-5
    fm = float((net.forward(x) * w).sum())
    p[i] = old
    results["mlp gradient vs finite difference"] = \
        abs((fp - fm) / 2e-5 - grads[0][i]) <= 1e-4 * max(1.0, abs(grads[0][i]))

    env = TwoRoomsEnv()
    P = env.transition_tensor()
    pi = np.full((18, 4), 0.25)
    p0 = np.eye(18)[0]
    rho = exact_occupancy(P, pi, 0.9, p0)
    mc = monte_carlo_occupancy(P, pi, 0.9, p0, 200_000, rng)
    results["occupancy solve vs Monte-Carlo (TV < 0.01)"] = total_variation(rho, mc) < 0.01

    kde = kde_fit(rng.normal((300, 1)))
    grid = np.linspace(-12, 12, 4001)
    dens = np.exp(kde.log_density(grid[:, None]))
    results["KDE integrates to 1"] = abs(np.trapezoid(dens, grid) - 1) < 1e-2

    q = rng.normal(4)
    results["softmax shift invariance"] = np.allclose(softmax_policy(q, 3.0),
                                                      softmax_policy(q + 5.0, 3.0), atol=1e-12)
    results["two-rooms shortest path to goal is 7"] = shortest_path_length(env, 18) == 7

    for name, ok in results.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=out)
    return all(results.values())


# -- entry point -----------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_rep = sub.add_parser("report", help="summarize run directories")
    p_rep.add_argument("dirs", nargs="+")
    p_rep.add_argument("--svg", action="store_true", help="also write SVG line charts")
    sub.add_parser("selftest", help="run quick oracle checks")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        if args.cmd == "run":
            cfg = parse_config(args.config)
            for p in run(cfg):
                log.info("wrote %s", p)
        elif args.cmd == "report":
            report(args.dirs, svg=args.svg)
        else:
            return 0 if selftest() else 1
    except (ConfigError, FileNotFoundError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
