"""Command line front end: `torusflow <command> --config desk.yaml --out report/`."""

from __future__ import annotations

import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import click
import numpy as np
import yaml

from . import analysis, ceiling, towers
from .arith import PrecisionPolicy
from .birkhoff import birkhoff_fast, birkhoff_naive, kernel_for
from .ceiling import CeilingSpec, assemble_phi
from .config import ExperimentConfig, auto
from .errors import ConfigError, TorusFlowError
from .pairgen import build_pair, verify_pair

COMMANDS = ("build-pair", "build-ceiling", "birkhoff", "tower-report", "stretch-scan",
            "staircase", "correlation", "full-report", "plot-script")


# output helpers

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, columns: list[tuple[str, str]], rows: list[dict]) -> Path:
    """CSV whose header names every column together with its unit."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{name} [{unit}]" for name, unit in columns])
        for r in rows:
            w.writerow([_fmt(r.get(name)) for name, _ in columns])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _plain(v):
    """YAML-safe copy of nested results."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def _figure(path: Path, draw) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


class Run:
    """One command invocation: config, output directory and lazily built objects."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self._pair = None
        self._spec = None
        self.files: list[str] = []
        ceiling.set_threads(cfg["threads"])

    def emit(self, path: Path) -> Path:
        self.files.append(path.name)
        return path

    @property
    def seed(self) -> int:
        return int(self.cfg["seed"])

    @property
    def policy(self) -> PrecisionPolicy:
        return PrecisionPolicy(int(self.cfg["pair"]["precision_bits"]),
                               int(self.cfg["analysis"]["max_iterate"]))

    @property
    def pair(self):
        if self._pair is None:
            p = self.cfg["pair"]
            self._pair = build_pair(self.cfg.law(), p["levels"], seed=self.cfg.pair_seed(),
                                    precision_bits=p["precision_bits"])
            if not self.policy.admits(max(r.q_prime for r in self._pair.schedule)):
                raise ConfigError("precision_bits too small for the schedule and max_iterate")
        return self._pair

    @property
    def spec(self) -> CeilingSpec:
        """The ceiling, reused from `out/ceiling` when it was built from the same settings."""
        if self._spec is None:
            key = json.dumps({"pair": self.cfg["pair"], "ceiling": self.cfg["ceiling"]}, sort_keys=True)
            store = self.out / "ceiling"
            stamp = store / "config.json"
            if stamp.exists() and stamp.read_text() == key:
                self._spec = CeilingSpec.load(store, self.pair)
            else:
                c = self.cfg["ceiling"]
                scale = auto(c["staircase_scale"], None)
                grid = auto(c["certify_grid"], None)
                self._spec = assemble_phi(self.pair, None if scale is None else float(scale),
                                          auto(c["radii"], None), auto(c["exponents"], None),
                                          tuple(grid) if grid else None, float(c["eps_budget"]),
                                          float(c["taper"]))
                self._spec.save(store)
                stamp.write_text(key)
        return self._spec

    # commands

    def build_pair(self) -> dict:
        pair = self.pair
        rep = verify_pair(pair)
        (self.out / "pair.json").write_text(json.dumps(pair.as_dict(), indent=2, sort_keys=True) + "\n")
        self.files.append("pair.json")
        rows = [{"n": v.n, "condition": v.condition, "passed": v.passed,
                 "informational": v.informational, "detail": v.detail} for v in rep.verdicts]
        self.emit(write_csv(self.out / "pair_verdicts.csv",
                            [("n", "level"), ("condition", "text"), ("passed", "bool"),
                             ("informational", "bool"), ("detail", "text")], rows))
        return {"passed": rep.passed, "first_good_level": rep.first_good_level(),
                "schedule": pair.as_dict()["schedule"]}

    def build_ceiling(self) -> dict:
        spec = self.spec
        self.files.append("ceiling/")
        meta = spec.as_dict()
        meta.pop("pair")
        meta["mean"] = str(spec.mean_exact())
        return meta

    def birkhoff(self) -> dict:
        spec = self.spec
        b = self.cfg["analysis"]["birkhoff"]
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(1,)))
        count, top = int(b["points"]), int(b["max_m"])
        x, y = rng.random(count), rng.random(count)
        m = rng.integers(0, top + 1, count)
        fast = np.asarray(birkhoff_fast(spec, x, y, m, policy=self.policy))
        naive = np.asarray(birkhoff_naive(spec, x, y, m, policy=self.policy))
        rel = np.abs(fast - naive) / np.maximum(np.abs(naive), 1.0)
        tol = kernel_for(spec).tolerance()
        rows = [{"x": a, "y": c, "m": mm, "fast": f, "naive": nv, "rel_error": e, "tolerance": tol}
                for a, c, mm, f, nv, e in zip(x, y, m, fast, naive, rel)]
        self.emit(write_csv(self.out / "birkhoff.csv",
                            [("x", "torus"), ("y", "torus"), ("m", "iterates"), ("fast", "phi units"),
                             ("naive", "phi units"), ("rel_error", "relative"),
                             ("tolerance", "phi units")], rows))
        return {"points": count, "max_rel_error": float(rel.max()), "tolerance": tol}

    def tower_report(self) -> dict:
        spec = self.spec
        t = self.cfg["analysis"]["towers"]
        rows, curves, out = [], [], {}
        for g in spec.levels:
            n = g.n
            tower = towers.tower_geometry(spec.pair, n)
            if tower.period_count <= t["tiling_limit"]:
                tiling = towers.check_tiling(tower.R_family())
                tiled = tiling.passed
            else:
                tiled = None
            d = towers.rank_one_defect(spec, n, t["defect_grid"])
            sep = towers.height_separation(spec, n, t["defect_grid"])
            rows.append({"n": n, "h": tower.h, "r": tower.r, "tiling_exact": tiled, "defect": d.defect,
                         "argmax_m": d.argmax_m, "upper": d.upper,
                         "tolerance": kernel_for(spec).tolerance(), "separation_exists": sep.exists,
                         "top_prev": sep.top_prev, "bottom_last": sep.bottom_last})
            curves.append((n, d.spread))
            out[n] = {"defect": d.defect, "upper": d.upper, "argmax_m": d.argmax_m, "h": tower.h,
                      "tiling_exact": tiled, "separation_exists": sep.exists, "H": sep.H}
        self.emit(write_csv(self.out / "towers.csv",
                            [("n", "level"), ("h", "iterates"), ("r", "count"), ("tiling_exact", "bool"),
                             ("defect", "phi units"), ("argmax_m", "iterates"), ("upper", "phi units"),
                             ("tolerance", "phi units"), ("separation_exists", "bool"),
                             ("top_prev", "flow time"), ("bottom_last", "flow time")], rows))
        spread_rows = [{"n": n, "m": m, "spread": v} for n, s in curves for m, v in enumerate(s)]
        self.emit(write_csv(self.out / "defect_curve.csv",
                            [("n", "level"), ("m", "iterates"), ("spread", "phi units")], spread_rows))

        def draw(ax):
            for n, s in curves:
                ax.plot(np.arange(s.size), s, label=f"n = {n}")
            ax.set_xscale("symlog")
            ax.set_xlabel("m")
            ax.set_ylabel("spread of S_m phi on the base")
            ax.legend()
        self.emit(_figure(self.out / "defect.png", draw))
        return out

    def _windows(self):
        return [w for g in self.spec.levels for w in analysis.schedule_windows(self.pair, g.n)]

    def stretch_scan(self) -> dict:
        spec = self.spec
        s = self.cfg["analysis"]["stretch"]
        K, eps_t = float(s["K_target"]), 0.5
        length = auto(s["length"], None)
        rows, out = [], {}
        for w in self._windows():
            for t in w.sample(int(s["times_per_window"])):
                for restricted in ([False, True] if s["eta"] is not None else [False]):
                    res = analysis.stretch_scan(spec, w.n, t, None if length is None else float(length),
                                                int(s["y_count"]), float(s["eta"]) if restricted else None,
                                                int(s["points"]), K)
                    passed = 0
                    for r in res:
                        rep = r.report
                        crit = rep.criterion_passes(eps_t, K)
                        dfn = rep.passes(eps_t + analysis.MEASURE_TOL, K)
                        passed += dfn
                        rows.append({"n": w.n, "window": w.label, "t": t, "restricted": restricted,
                                     **r.as_row(), "criterion_pass": crit, "definition_pass": dfn,
                                     "measure_tol": analysis.MEASURE_TOL})
                    out[f"{w.label}@{w.n} t={_fmt(t)}{' restricted' if restricted else ''}"] = \
                        {"intervals": len(res), "definition_pass": passed}
        self.emit(write_csv(self.out / "stretch.csv",
                            [("n", "level"), ("window", "label"), ("t", "flow time"), ("restricted", "bool"),
                             ("a", "x"), ("b", "x"), ("y", "torus"), ("m", "iterates"), ("K", "phi units"),
                             ("epsilon", "relative"), ("criterion_K", "phi units"),
                             ("criterion_epsilon", "relative"), ("criterion_pass", "bool"),
                             ("definition_pass", "bool"), ("measure_tol", "relative")], rows))

        def draw(ax):
            if rows:
                ax.scatter([r["t"] for r in rows], [min(r["epsilon"], 10.0) for r in rows], s=4)
                ax.set_xscale("log")
            ax.set_xlabel("t")
            ax.set_ylabel("measured stretch distortion (capped at 10)")
        self.emit(_figure(self.out / "stretch.png", draw))
        return {"epsilon_target": eps_t, "K_target": K, "scans": out}

    def staircase(self) -> dict:
        spec = self.spec
        s = self.cfg["analysis"]["staircase"]
        n = auto(s["level"], spec.levels[-1].n)
        gap, mmax = auto(s["max_gap"], None), auto(s["m_max"], None)
        res = analysis.staircase_sample(spec, n, int(s["count"]), self.seed, gap, mmax, int(s["m_min"]))
        tol = kernel_for(spec).tolerance()
        rows = [{**r.as_row(), "n": n, "tolerance": 2 * tol} for r in res]
        self.emit(write_csv(self.out / "staircase.csv",
                            [("n", "level"), ("m", "iterates"), ("i1", "column"), ("i2", "column"),
                             ("j", "level index"), ("deviation", "phi units"), ("step", "phi units"),
                             ("ratio", "relative"), ("tolerance", "phi units")], rows))

        def draw(ax):
            ax.scatter([r.m for r in res], [r.ratio for r in res], s=8)
            ax.set_xlabel("m")
            ax.set_ylabel("deviation / ((i2 - i1) m eps_n)")
        self.emit(_figure(self.out / "staircase.png", draw))
        return {"n": n, "count": len(res), "max_ratio": max(r.ratio for r in res)}

    def correlation(self) -> dict:
        spec = self.spec
        c = self.cfg["analysis"]["correlation"]
        b = c["box"]
        rect = towers.Rect(Fraction(str(b["x0"])), Fraction(str(b["wx"])),
                           Fraction(str(b["y0"])), Fraction(str(b["wy"])))
        box = towers.Box(rect, float(b["s0"]), float(b["s1"]))
        times, labels = [0.0], ["t0"]
        for w in self._windows():
            for t in w.sample(int(c["times_per_window"])):
                times.append(t)
                labels.append(f"{w.label}@{w.n}")
        series = analysis.correlation_series(spec, box, box, times, int(c["samples"]), self.seed, labels)
        self.emit(write_csv(self.out / "correlation.csv",
                            [("window", "label"), ("t", "flow time"), ("estimate", "mu units"),
                             ("stderr", "mu units")], series.rows()))

        def draw(ax):
            ts = np.array(series.times[1:])
            ax.errorbar(ts, series.estimates[1:], yerr=3 * np.array(series.stderrs[1:]), fmt="o", ms=3)
            ax.axhline(series.mu_A - series.mu_A**2, ls="--", lw=0.8)
            ax.axhline(0.0, lw=0.5, color="k")
            ax.set_xscale("log")
            ax.set_xlabel("t")
            ax.set_ylabel("mu(T^-t A n A) - mu(A)^2")
        self.emit(_figure(self.out / "correlation.png", draw))
        last = labels[-1]
        tail = [abs(e) for e, lab in zip(series.estimates, labels) if lab == last]
        return {"mu_A": series.mu_A, "t0_value": series.mu_A - series.mu_A**2,
                "t0_estimate": series.estimates[0], "largest_window": last,
                "mean_abs_largest_window": float(np.mean(tail)), "samples": series.samples,
                "rows": series.rows()}

    def plot_script(self) -> dict:
        path = self.out / "plot_report.py"
        path.write_text(PLOT_SCRIPT)
        self.files.append(path.name)
        return {"script": path.name}

    def full_report(self) -> dict:
        summary = {"pair": self.build_pair(), "ceiling": self.build_ceiling(),
                   "windows": [{"n": w.n, "label": w.label, "lo": w.lo, "hi": w.hi, "empty": w.empty}
                               for w in self._windows()],
                   "birkhoff": self.birkhoff(), "defect": self.tower_report(),
                   "stretch": self.stretch_scan(), "staircase": self.staircase(),
                   "correlation": self.correlation()}
        self.plot_script()
        return summary


PLOT_SCRIPT = '''"""Plot every CSV of a report directory: first numeric column against the others."""

import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def numeric(values):
    try:
        return [float(v) for v in values]
    except ValueError:
        return None


def main(folder):
    for path in sorted(Path(folder).glob("*.csv")):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            continue
        head, cols = rows[0], list(zip(*rows[1:]))
        series = [(h, numeric(c)) for h, c in zip(head, cols)]
        series = [(h, c) for h, c in series if c is not None]
        if len(series) < 2:
            continue
        (xh, x), rest = series[0], series[1:]
        fig, ax = plt.subplots(figsize=(6, 4))
        for h, c in rest:
            ax.plot(x, c, ".", ms=3, label=h)
        ax.set_xlabel(xh)
        ax.legend(fontsize=6)
        fig.tight_layout()
        fig.savefig(path.with_suffix(".plot.png"), metadata={"Software": None})
        plt.close(fig)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
'''


def run(command: str, cfg: ExperimentConfig, out) -> dict:
    """Execute one command; writes its files plus the effective config into `out`."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    r = Run(cfg, Path(out))
    (r.out / "config.yaml").write_text(cfg.dump())
    result = getattr(r, command.replace("-", "_"))()
    doc = {"command": command, "config": cfg.data, "results": result,
           "files": sorted(set(r.files + ["config.yaml"]))}
    (r.out / "summary.yaml").write_text(yaml.safe_dump(_plain(doc), sort_keys=True))
    return result


def _load_config(path, seed, threads, out) -> ExperimentConfig:
    cfg = ExperimentConfig.load(path) if path else ExperimentConfig.bundled("desk")
    over = dict(cfg.data)
    if seed is not None:
        over["seed"] = seed
    if threads is not None:
        over["threads"] = threads
    if out is not None:
        over["out"] = str(out)
    return ExperimentConfig.from_dict(over)


def _command(name: str):
    @click.command(name=name, help=f"Run `{name}` and write its outputs.")
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  help="YAML config (default: bundled desk config).")
    @click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
    @click.option("--seed", type=int, help="Override the random seed.")
    @click.option("--threads", type=int, help="Threads for NUFFT evaluations.")
    def cmd(config_path, out, seed, threads):
        try:
            cfg = _load_config(config_path, seed, threads, out)
            run(name, cfg, cfg["out"])
        except TorusFlowError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
        click.echo(f"{name}: wrote {cfg['out']}")
    return cmd


@click.group()
def main():
    """Rank-one mixing special flows over torus translations."""


for _name in COMMANDS:
    main.add_command(_command(_name))


if __name__ == "__main__":
    main()
