"""Command-line harness: verification suites, configs, and report emission.

Usage:
    ugmt run <suite> [--config path] [--seed N] [--samples N] [--out dir]
    ugmt list-batteries
    ugmt plot-data <report.json> [--out dir]

Suites: campbell | monotonicity | bakry-emery | intertwine | tv-equivalence |
de-giorgi | coarea | gauss-green | capacity | sobolev.  Exit code 0 iff all
checks pass, 1 on any failure, 2 on configuration errors.  Reports are JSON
(with a CSV summary); identical configs reproduce identical numeric payloads.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import batteries
from .configuration import SetSpec
from .geometry import BoxDomain, SmoothFunction, gauss_legendre, interval
from .heat import (BesselOperator, LiftedHeatOperator, bakry_emery_battery,
                   capacity_upper_bound, check_intertwining, lift_semigroup,
                   regularization_slope)
from .hausdorff import rho_m_localized, rho_m_on_box, scaled_box
from .montecarlo import MCPlan, integrate, measure_of_set
from .bv import (coarea_check, gauss_green_residual, perimeter_measure,
                 sobolev_consistency, tv_bracket, tv_semigroup)
from .rng import worker_count

SCHEMA_VERSION = 1
SUITES = ("campbell", "monotonicity", "bakry-emery", "intertwine", "tv-equivalence",
          "de-giorgi", "coarea", "gauss-green", "capacity", "sobolev")


class ConfigError(ValueError):
    pass


@dataclass
class SuiteConfig:
    suite: str
    seed: int = 20240901
    samples: int = 20_000
    out_dir: str = "ugmt-out"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}")
        if self.samples < 100:
            raise ConfigError("samples must be at least 100")
        if self.seed is None:
            raise ConfigError("an explicit seed is required")

    @staticmethod
    def from_text(text: str, suite: str | None = None) -> "SuiteConfig":
        fields: dict = {"options": {}}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line: {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in ("suite", "out"):
                fields["out_dir" if key == "out" else key] = val
            elif key in ("seed", "samples"):
                fields[key] = int(val)
            else:
                fields["options"][key] = val
        if suite:
            fields["suite"] = suite
        if "suite" not in fields:
            raise ConfigError("config must name a suite")
        return SuiteConfig(**fields)

    def to_text(self) -> str:
        lines = [f"suite = {self.suite}", f"seed = {self.seed}",
                 f"samples = {self.samples}", f"out = {self.out_dir}"]
        for k, v in sorted(self.options.items()):
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def floats(self, key: str, default: list[float]) -> list[float]:
        if key not in self.options:
            return default
        return [float(v) for v in str(self.options[key]).split(",")]


@dataclass
class Report:
    suite: str
    records: list[dict]
    seed: int
    samples: int

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.records)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "suite": self.suite,
            "environment": {"package_version": _version(), "seed": self.seed,
                            "samples": self.samples, "workers": worker_count()},
            "records": self.records,
            "all_pass": self.passed,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }

    def save(self, out_dir: str) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        jpath = os.path.join(out_dir, f"{self.suite}.json")
        with open(jpath, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        cpath = os.path.join(out_dir, f"{self.suite}.csv")
        with open(cpath, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["name", "anchor", "value", "target", "sigma", "pass"])
            for r in self.records:
                wr.writerow([r["name"], r["anchor"], r["value"], r["target"],
                             r["sigma"], r["pass"]])
        return jpath, cpath


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("ugmt")
    except Exception:
        return "unknown"


def validate_report_schema(payload: dict) -> list[str]:
    """Structural validation of a report payload; returns problems found."""
    problems = []
    for key in ("schema_version", "suite", "environment", "records", "all_pass", "timestamp"):
        if key not in payload:
            problems.append(f"missing key {key}")
    for i, rec in enumerate(payload.get("records", [])):
        for key in ("name", "anchor", "value", "target", "sigma", "pass"):
            if key not in rec:
                problems.append(f"record {i} missing {key}")
    return problems


def record(name: str, anchor: str, value: float, target: float, sigma: float,
           ok: bool, series: dict | None = None) -> dict:
    rec = {"name": name, "anchor": anchor, "value": float(value),
           "target": float(target), "sigma": float(sigma), "pass": bool(ok)}
    if series:
        rec["series"] = series
    return rec


# ---------------------------------------------------------------------------
# suite implementations


def laplace_target(f: SmoothFunction, order: int = 64) -> float:
    """Quadrature of exp( integral of (e^f - 1) ) over the support box."""
    box = f.support
    axes = [gauss_legendre(lo, hi, order) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    w = np.ones(pts.shape[0])
    for m in wmesh:
        w = w * m.ravel()
    vals = np.exp(f.value(pts)) - 1.0
    return float(np.exp(np.sum(w * vals)))


def _suite_campbell(cfg: SuiteConfig) -> list[dict]:
    records = []
    for tag, fams, window in (("1d", batteries.bump_family_1d(), batteries.UNIT),
                              ("2d", batteries.bump_family_2d(), batteries.UNIT2)):
        plan = MCPlan(n_samples=cfg.samples, seed=cfg.seed, window=window)
        for i, f in enumerate(fams):
            target = laplace_target(f)

            def G(gamma, f=f):
                return float(np.exp(np.sum(f.value(gamma.points)))) if gamma.count else 1.0

            est = integrate(G, plan, name=f"laplace-{tag}-{i}")
            ok = est.within(target, 3.0)
            records.append(record(f"laplace-{tag}-{i}", "Laplace functional",
                                  est.mean, target, est.std_err, ok))
    return records


def _suite_monotonicity(cfg: SuiteConfig) -> list[dict]:
    records = []
    sheets = batteries.monotone_sheets()
    r_values = cfg.floats("r_schedule", [1.0, 1.5, 2.0, 3.0])
    outer = batteries.MONO_WINDOW
    for name, spec in sheets.items():
        vals, sigs = [], []
        for r in r_values:
            inner = scaled_box(0.0, r, 1)
            est = rho_m_localized(spec, 1, inner, outer, seed=cfg.seed,
                                  n_samples=max(4000, cfg.samples // 4), n_eta=48)
            vals.append(est.mean)
            sigs.append(est.std_err)
        mono = all(vals[i + 1] >= vals[i] - 3.0 * (sigs[i] + sigs[i + 1])
                   for i in range(len(vals) - 1))
        series = {"columns": ["r", "rho1_r", "sigma", "monotone"],
                  "rows": [[r, v, s, mono] for r, v, s in zip(r_values, vals, sigs)]}
        records.append(record(f"monotone-{name}", "monotone localization",
                              vals[-1], vals[-1], sigs[-1], mono, series))
        loc_scale = float(np.max(spec.locality.sides))
        saturated = [v for r, v in zip(r_values, vals) if r >= loc_scale + 1e-9]
        satsig = [s for r, s in zip(r_values, sigs) if r >= loc_scale + 1e-9]
        if len(saturated) >= 2:
            const_ok = abs(saturated[-1] - saturated[0]) <= 3.0 * (satsig[0] + satsig[-1]) + 1e-9
            records.append(record(f"saturation-{name}", "monotone localization",
                                  saturated[-1] - saturated[0], 0.0,
                                  satsig[0] + satsig[-1], const_ok))
    return records


def _suite_bakry_emery(cfg: SuiteConfig) -> list[dict]:
    records = []
    op = LiftedHeatOperator(window=batteries.UNIT)
    plan = MCPlan(n_samples=cfg.samples, seed=cfg.seed, window=batteries.UNIT)
    ps = cfg.floats("p_values", [1.0, 2.0, 4.0])
    ts = cfg.floats("t_values", [0.01, 0.1])
    for name, F in batteries.be_battery().items():
        reports = bakry_emery_battery(F, ps, ts, op, plan)
        for rep in reports:
            records.append(record(f"pointwise-{name}-p{rep.p:g}-t{rep.t:g}",
                                  "Bakry-Emery p-inequality",
                                  rep.max_violation, 0.0, rep.tolerance,
                                  rep.violation_fraction == 0.0))
    t_grid = np.geomspace(1e-3, 1e-1, 9)
    slope, pairs = regularization_slope(op, t_grid)
    ok = -0.65 <= slope <= -0.45
    series = {"columns": ["t", "envelope"], "rows": [[t, v] for t, v in pairs]}
    records.append(record("regularization-slope", "heat regularization rate",
                          slope, -0.5, 0.1, ok, series))
    return records


def _suite_intertwine(cfg: SuiteConfig) -> list[dict]:
    records = []
    op = LiftedHeatOperator(window=batteries.UNIT)
    t = float(cfg.options.get("t", 0.05))
    for i, f in enumerate(batteries.intertwine_bumps()):
        for k in (1, 2):
            rep = check_intertwining(f, t, op, k=k)
            ok = rep.max_residual < 1e-4
            records.append(record(f"intertwine-bump{i}-k{k}", "gradient intertwining",
                                  rep.max_residual, 0.0, rep.refinement_residual, ok))
    return records


def _suite_tv_equivalence(cfg: SuiteConfig) -> list[dict]:
    records = []
    op = LiftedHeatOperator(window=batteries.UNIT)
    fam = batteries.field_family()
    members = [("half-space", batteries.half_space_set(),
                [0.001, 0.002, 0.004, 0.006], [0.002, 0.004])]
    for name, F in batteries.smooth_battery().items():
        members.append((name, F, [0.004, 0.006, 0.01, 0.016], [0.004, 0.008]))
    for name, F, ts, eps in members:
        br = tv_bracket(F, op, fam, ts, eps, seed=cfg.seed)
        ok = br.consistent() and br.relative_width() <= 0.15
        records.append(record(f"bracket-{name}", "total variation equivalence",
                              br.semigroup_value, br.relaxation_upper,
                              br.semigroup_err + br.upper_err, ok,
                              {"columns": ["route", "value", "err"],
                               "rows": [["variational", br.variational_lower, br.lower_err],
                                        ["semigroup", br.semigroup_value, br.semigroup_err],
                                        ["relaxation", br.relaxation_upper, br.upper_err]]}))
    return records


def _degiorgi_sets() -> list[tuple[str, SetSpec]]:
    return [("half-space", batteries.half_space_set()),
            ("two-stack", batteries.stack_set()),
            ("tanh-sum", batteries.tanh_sum_set())]


def _suite_de_giorgi(cfg: SuiteConfig) -> list[dict]:
    records = []
    n = max(cfg.samples, 20_000)
    for name, E in _degiorgi_sets():
        pm = perimeter_measure(E, batteries.UNIT, n_samples=n, seed=cfg.seed)
        sheet = E.boundary_sheet()
        r1 = rho_m_on_box(sheet, 1, batteries.UNIT, n_samples=n, seed=cfg.seed + 811)
        comb = float(np.sqrt(pm.total_err**2 + r1.total_err**2))
        ok = abs(pm.total - r1.total) <= 3.0 * comb + 1e-6
        records.append(record(f"de-giorgi-{name}", "De Giorgi identity",
                              pm.total, r1.total, comb, ok))
    return records


def _suite_coarea(cfg: SuiteConfig) -> list[dict]:
    records = []
    us = np.concatenate([np.linspace(0.02, 2.0, 14), np.linspace(2.4, 6.0, 6)])
    G_bump = batteries.cyl_compose(
        lambda r: batteries.add_n(batteries.const(0.6),
                                  batteries.mul_n(batteries.const(0.5), batteries.tanh_of(r))),
        batteries.cyl_from_star(SmoothFunction.bump(0.45, 0.3, 1.0, window=batteries.UNIT)))
    weights = [("unit", 1.0), ("bump-cyl", G_bump)]
    for fname, a in (("tanh-sum-035", 0.35), ("tanh-sum-050", 0.50), ("tanh-sum-028", 0.28)):
        F = batteries.tanh_sum_function(a, fname)
        tg = np.tanh(a * us)
        for gname, G in weights:
            rep = coarea_check(F, G, tg, batteries.UNIT, seed=cfg.seed,
                               n_samples=max(cfg.samples, 20_000))
            ok = rep.deviation < 0.05 and rep.gap_fraction <= 0.10
            records.append(record(f"coarea-{fname}-{gname}", "coarea formula",
                                  rep.lhs, rep.rhs,
                                  float(np.sqrt(rep.lhs_err**2 + rep.rhs_err**2)), ok))
    return records


def _suite_gauss_green(cfg: SuiteConfig) -> list[dict]:
    records = []
    fields = batteries.gg_fields()
    sets = _degiorgi_sets()
    pairs = [(sname, E, i, V) for (sname, E) in sets for i, V in enumerate(fields)]
    for sname, E, i, V in pairs[:6]:
        rep = gauss_green_residual(E, V, batteries.UNIT, seed=cfg.seed + 31 * i,
                                   n_samples=max(cfg.samples, 20_000))
        ok = rep.passed()
        records.append(record(f"gauss-green-{sname}-V{i}", "Gauss-Green formula",
                              rep.lhs, rep.rhs, rep.combined_sigma, ok))
    return records


def _suite_capacity(cfg: SuiteConfig) -> list[dict]:
    records = []
    alpha = float(cfg.options.get("alpha", 0.6))
    p = float(cfg.options.get("p", 2.0))
    W, S_box, sheet, members = batteries.capacity_family()
    op = LiftedHeatOperator(window=W)
    B = BesselOperator(alpha=alpha, p=p)
    base = rho_m_on_box(sheet, 1, S_box, n_samples=max(cfg.samples, 20_000),
                        seed=cfg.seed)
    caps, rhos = [], []
    rows = []
    for mem in members:
        bound, _ = capacity_upper_bound(mem["sieve"], alpha, p, [mem["candidate"]], B, op)
        rho = float(np.exp(-mem["ell"])) * base.total
        rho_sig = float(np.exp(-mem["ell"])) * base.total_err
        caps.append(bound)
        rhos.append(rho)
        rows.append([mem["ell"], bound, rho, rho_sig])
    mono_cap = all(caps[i + 1] <= caps[i] * (1 + 1e-9) for i in range(len(caps) - 1))
    mono_rho = all(rhos[i + 1] <= rhos[i] * (1 + 1e-9) for i in range(len(rhos) - 1))
    implication = all(r < 1e-4 for c, r in zip(caps, rhos) if c < 1e-6)
    reached = any(c < 1e-6 for c in caps)
    series = {"columns": ["ell", "cap_bound", "rho1", "rho1_sigma"], "rows": rows}
    records.append(record("capacity-monotone", "capacity-measure comparison",
                          caps[-1], 0.0, 0.0, mono_cap, series))
    records.append(record("rho1-monotone", "capacity-measure comparison",
                          rhos[-1], 0.0, 0.0, mono_rho))
    records.append(record("capacity-implication", "capacity-measure comparison",
                          min(caps), 1e-6, 0.0, implication and reached))
    return records


def _suite_sobolev(cfg: SuiteConfig) -> list[dict]:
    records = []
    us = np.concatenate([np.linspace(0.02, 2.0, 12), np.linspace(2.4, 6.0, 5)])
    G_batt = {"unit": 1.0,
              "bump-cyl": batteries.cyl_compose(
                  lambda r: batteries.add_n(batteries.const(0.6),
                                            batteries.mul_n(batteries.const(0.5),
                                                            batteries.tanh_of(r))),
                  batteries.cyl_from_star(SmoothFunction.bump(0.45, 0.3, 1.0,
                                                              window=batteries.UNIT)))}
    fam = batteries.field_family()
    for fname, a in (("tanh-sum-035", 0.35), ("tanh-sum-050", 0.50), ("tanh-sum-028", 0.28)):
        F = batteries.tanh_sum_function(a, fname)
        tg = np.tanh(a * us)
        rep = sobolev_consistency(F, G_batt, tg, batteries.UNIT, seed=cfg.seed,
                                  family=fam if fname == "tanh-sum-035" else None,
                                  n_samples=max(cfg.samples, 20_000))
        for gname, d in rep["densities"].items():
            ok = d["deviation"] < 0.05
            records.append(record(f"sobolev-{fname}-{gname}", "Sobolev-BV consistency",
                                  d["coarea"], d["direct"], 0.0, ok))
        if rep["alignment"] is not None:
            records.append(record(f"alignment-{fname}", "Sobolev-BV consistency",
                                  rep["alignment"], 1.0, 0.0, rep["alignment"] >= 0.9))
    return records


_SUITE_FNS = {
    "campbell": _suite_campbell,
    "monotonicity": _suite_monotonicity,
    "bakry-emery": _suite_bakry_emery,
    "intertwine": _suite_intertwine,
    "tv-equivalence": _suite_tv_equivalence,
    "de-giorgi": _suite_de_giorgi,
    "coarea": _suite_coarea,
    "gauss-green": _suite_gauss_green,
    "capacity": _suite_capacity,
    "sobolev": _suite_sobolev,
}


def run_suite(cfg: SuiteConfig) -> Report:
    records = _SUITE_FNS[cfg.suite](cfg)
    return Report(suite=cfg.suite, records=records, seed=cfg.seed, samples=cfg.samples)


def list_batteries_text() -> str:
    cat = batteries.catalog()
    lines = [f"{len(cat)} battery entries:"]
    for name, meta in sorted(cat.items()):
        lines.append(f"  {name:18s} [{meta['anchor']}] ({meta['kind']}): {meta['description']}")
    return "\n".join(lines)


def emit_plot_data(report_payload: dict, out_dir: str) -> list[str]:
    """Per-check CSV files from a report's series payloads."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for rec in report_payload.get("records", []):
        if "series" not in rec:
            continue
        path = os.path.join(out_dir, f"{rec['name']}.csv")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(rec["series"]["columns"])
            for row in rec["series"]["rows"]:
                wr.writerow(row)
        written.append(path)
    if not written:
        path = os.path.join(out_dir, "empty.csv")
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(["name", "value"])
        written.append(path)
    return written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ugmt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a verification suite")
    runp.add_argument("suite", choices=SUITES)
    runp.add_argument("--config", default=None)
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--samples", type=int, default=None)
    runp.add_argument("--out", default=None)
    sub.add_parser("list-batteries", help="print the battery catalog")
    plotp = sub.add_parser("plot-data", help="emit per-check CSVs from a report")
    plotp.add_argument("report")
    plotp.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    if args.command == "list-batteries":
        print(list_batteries_text())
        return 0

    if args.command == "plot-data":
        with open(args.report) as fh:
            payload = json.load(fh)
        problems = validate_report_schema(payload)
        if problems:
            print("invalid report:", "; ".join(problems), file=sys.stderr)
            return 2
        out = args.out or os.path.dirname(os.path.abspath(args.report))
        for path in emit_plot_data(payload, out):
            print(path)
        return 0

    try:
        if args.config:
            with open(args.config) as fh:
                cfg = SuiteConfig.from_text(fh.read(), suite=args.suite)
        else:
            cfg = SuiteConfig(suite=args.suite)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.samples is not None:
            cfg.samples = args.samples
        if args.out is not None:
            cfg.out_dir = args.out
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    report = run_suite(cfg)
    jpath, cpath = report.save(cfg.out_dir)
    for rec in report.records:
        status = "pass" if rec["pass"] else "FAIL"
        print(f"[{status}] {rec['name']}: value={rec['value']:.6g} "
              f"target={rec['target']:.6g} sigma={rec['sigma']:.2g}")
    print(f"report: {jpath}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
