"""Command-line front end: ``bec-mmm <subcommand> [--config path] [--out dir] ...``.

Every subcommand writes ``<name>.csv`` and ``<name>.meta.json`` into the
output directory. The sidecar echoes the resolved configuration and can be
passed back via ``--config`` to repeat the run.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
import time
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np

from . import correlations, counts, exclusion, oracle
from .core import (
    AMU,
    HBAR,
    DualFockState,
    Interferometer,
    MmmParams,
    PhaseAveragedState,
    ProductState,
    dephasing,
    depletion,
    tau_from_tau_e,
)
from .phasespace import QuadratureError

EXIT_SCHEMA = 2
EXIT_CONSISTENCY = 3

DEFAULT_CONFIG = {
    "experiment": {
        "n_atoms": 30,
        "mass_amu": 87.0,
        "duration_s": 2.08,
        "arm_separation_m": 0.5,
        "widths_mm": [1.0, 1.0, 1.0],
        "phi_rad": 0.0,
        "alpha_rad": 0.0,
    },
    "mmm": {"hbar_over_sigma_q_m": 0.5, "tau_e_s": 1e12},
    "state": {"kind": "PS", "depleted": True},
    "exclusion": {
        "criteria": [
            {"kind": "AtomLoss", "min_survival": 0.95},
            {"kind": "Visibility", "min_contrast": 0.95},
            {"kind": "VarianceFactor", "max_factor": 40.0, "n_atoms": 100000, "phi_tilde": math.pi / 2},
            {"kind": "HomThreshold", "min_fraction": 0.8, "n_atoms": 30},
        ],
        "log10_hbar_over_sigma_q_m": [-14.0, 1.0],
        "n_points": 200,
    },
    "mc": {"n_traj": 100000},
    "seed": 0,
}


class ConfigError(ValueError):
    pass


# -- configuration ----------------------------------------------------------

def load_schema() -> dict:
    return json.loads(resources.files("bec_mmm").joinpath("config.schema.json").read_text())


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} runs through a non-object")
    node[parts[-1]] = _parse_value(value)
    # keep the separation choice exclusive when it is overridden
    if parts[:1] == ["experiment"] and parts[-1] in ("arm_separation_m", "momentum_split") and len(parts) == 2:
        other = "momentum_split" if parts[-1] == "arm_separation_m" else "arm_separation_m"
        node.pop(other, None)


def load_config(path: str | None, overrides=(), seed: int | None = None) -> dict:
    if path is None:
        cfg = copy.deepcopy(DEFAULT_CONFIG)
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        # a sidecar from an earlier run carries the config under "config"
        cfg = raw["config"] if isinstance(raw, dict) and "config" in raw and "subcommand" in raw else raw
    for item in overrides:
        apply_override(cfg, item)
    if seed is not None:
        cfg["seed"] = seed
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {e.message}")


def interferometer(cfg: dict) -> Interferometer:
    e = cfg["experiment"]
    mass = e["mass_amu"] * AMU
    widths = tuple(w * 1e-3 for w in e["widths_mm"])
    kw = dict(phi=e.get("phi_rad", 0.0), alpha=e.get("alpha_rad", 0.0),
              theta=e.get("theta_rad", math.pi / 4))
    if "momentum_split" in e:
        # delta_p T / m given in metres
        dpT_m = e["momentum_split"]["delta_p_over_m_times_T_m"]
        delta_p = dpT_m * mass / e["duration_s"]
        return Interferometer.from_momentum_split(e["n_atoms"], mass, e["duration_s"], delta_p, widths, **kw)
    return Interferometer(e["n_atoms"], mass, e["duration_s"], e["arm_separation_m"], widths, **kw)


def mmm_points(cfg: dict) -> list[tuple[float, float]]:
    """(sigma_q, tau_e) pairs; sigma_q may be 0."""
    m = cfg["mmm"]
    if "grid" in m:
        g = m["grid"]
        Ls = np.logspace(*g["log10_hbar_over_sigma_q_m"], g["n_points"])
        ts = np.logspace(*g["log10_tau_e_s"], g["n_points"])
        return [(HBAR / L, t) for L in Ls for t in ts]
    if "sigma_q_si" in m:
        return [(float(m["sigma_q_si"]), float(m["tau_e_s"]))]
    return [(HBAR / m["hbar_over_sigma_q_m"], float(m["tau_e_s"]))]


def single_point(cfg: dict) -> tuple[float, float]:
    pts = mmm_points(cfg)
    if len(pts) != 1:
        raise ConfigError("config field mmm: this subcommand needs an explicit point, not a grid")
    return pts[0]


def factors_at(sigma_q: float, tau_e: float, ifo: Interferometer) -> tuple[float, float]:
    tau = tau_from_tau_e(tau_e, ifo.mass)
    return (dephasing(sigma_q, tau, ifo.duration, ifo.arm_separation),
            depletion(sigma_q, tau, ifo.duration, ifo.width))


def make_state(cfg: dict, ifo: Interferometer):
    st = cfg.get("state", {"kind": "PS"})
    kind = st["kind"]
    if kind == "PS":
        return ProductState(ifo.phi)
    if kind == "PAPS":
        return PhaseAveragedState()
    na = st.get("n_a_arm")
    if na is None:
        if ifo.n_atoms % 2:
            raise ConfigError("config field state.n_a_arm: needed for odd n_atoms")
        na = ifo.n_atoms // 2
    if na > ifo.n_atoms:
        raise ConfigError("config field state.n_a_arm: exceeds n_atoms")
    return DualFockState(na, ifo.n_atoms - na)


def make_criterion(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind")
    return getattr(exclusion, kind)(**spec)


# -- output -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_bytes(buf.getvalue().encode("ascii"))


def _versions() -> dict:
    out = {"python": sys.version.split()[0]}
    for pkg in ("artifact", "numpy", "scipy", "mpmath", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_meta(path: Path, subcommand: str, cfg: dict, elapsed: float, extra: dict | None = None) -> None:
    meta = {
        "subcommand": subcommand,
        "config": cfg,
        "versions": _versions(),
        "timings": {"elapsed_s": elapsed},
    }
    if extra:
        meta["results"] = extra
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# -- subcommands ------------------------------------------------------------

def cmd_factors(cfg, args):
    ifo = interferometer(cfg)
    rows = []
    for s, te in mmm_points(cfg):
        D, H = factors_at(s, te, ifo)
        L = HBAR / s if s > 0 else math.inf
        rows.append((s, L, te, tau_from_tau_e(te, ifo.mass), D, H))
    return ["sigma_q", "hbar_over_sigma_q_m", "tau_e_s", "tau_s", "D", "H"], rows, None


def cmd_counts(cfg, args):
    ifo = interferometer(cfg)
    s, te = single_point(cfg)
    D, H = factors_at(s, te, ifo)
    state = make_state(cfg, ifo)
    N = ifo.n_atoms
    depleted = cfg.get("state", {}).get("depleted", False)
    if isinstance(state, ProductState):
        phi = ifo.phi_tilde
        if depleted:
            dist = counts.bernoulli_depletion(lambda k: counts.ps_counts(k, phi, D, 1.0), N, H)
        else:
            dist = counts.ps_counts(N, phi, D, H)
    elif isinstance(state, PhaseAveragedState):
        dist = (counts.bernoulli_depletion(counts.paps_counts, N, H) if depleted
                else counts.paps_counts(N, H))
    else:
        if depleted:
            dist = counts.dfs_bernoulli_depletion(N, H, state.n_a_arm)
        elif state.balanced:
            dist = counts.dfs_counts(N, H)
        else:
            cond = counts.dfs_counts_general(state.n_a_arm, state.n_b_arm, ifo.alpha)
            dist = counts.CountDistribution(N, cond.probs * H ** N, H ** N)
    rows = [(n, p) for n, p in enumerate(dist.probs)]
    return ["n_a", "probability"], rows, {"D": D, "H": H, "survival": dist.survival,
                                          "mean": dist.mean, "variance": dist.variance}


def cmd_correlations(cfg, args):
    ifo = interferometer(cfg)
    if not ifo.balanced:
        raise ConfigError("config field experiment.theta_rad: closed forms need pi/4; use oracle-check")
    s, te = single_point(cfg)
    D, H = factors_at(s, te, ifo)
    N = ifo.n_atoms
    states = [("PS", ProductState(ifo.phi)), ("PAPS", PhaseAveragedState())]
    if N % 2 == 0:
        states.append(("DFS", DualFockState.balanced_state(N)))
    rows = []
    for name, st in states:
        ph = ifo.phi_tilde
        m = correlations.first_order_moments(st, N, ph, D, H)
        t = correlations.second_order_moments(st, N, ph, D, H) if N >= 2 else (math.nan,) * 3
        rows.append((name, N, *m, *t))
    return ["state", "N", "mean_a", "mean_b", "same_a", "same_b", "cross"], rows, {"D": D, "H": H}


def _criterion_label(spec: dict) -> str:
    kind = spec["kind"]
    extras = [f"{k}={spec[k]}" for k in sorted(spec) if k != "kind"]
    return kind + ("(" + ",".join(extras) + ")" if extras else "")


def _curves(cfg, specs):
    ifo = interferometer(cfg)
    ex = cfg.get("exclusion", {})
    lo, hi = ex.get("log10_hbar_over_sigma_q_m", [-14.0, 1.0])
    lengths = np.logspace(lo, hi, ex.get("n_points", 200))
    rows, summary = [], {}
    for spec in specs:
        label = _criterion_label(spec)
        try:
            curve = exclusion.exclusion_curve(make_criterion(spec), ifo, lengths)
        except exclusion.NotExcluded:
            summary[label] = {"mu": None, "n_points": 0}
            continue
        for s, t in curve.points:
            rows.append((label, s, HBAR / s, t))
        info = {"mu": curve.mu, "n_points": len(curve.points), "n_gaps": len(curve.gaps),
                "plateau_tau_e_s": exclusion.plateau(curve)}
        try:
            info["knee_hbar_over_sigma_q_m"] = exclusion.knee_length(curve)
        except ValueError:
            info["knee_hbar_over_sigma_q_m"] = None
        summary[label] = info
    return ["criterion", "sigma_q", "hbar_over_sigma_q_m", "tau_e_max_s"], rows, summary


def cmd_exclusion(cfg, args):
    specs = cfg.get("exclusion", {}).get("criteria", DEFAULT_CONFIG["exclusion"]["criteria"])
    return _curves(cfg, specs)


def figure2(cfg):
    rows = []
    for N in range(2, 201):
        for name, st in (("PAPS", PhaseAveragedState()), ("DFS", DualFockState.balanced_state(N) if N % 2 == 0 else None)):
            if st is None:
                continue
            t = correlations.second_order_moments(st, N, 0.0, 1.0, 1.0)
            rows.append((N, name, t.same_a / N ** 2, t.cross / N ** 2))
    rows.append(("inf", "asymptote", 3 / 8, 1 / 8))
    return ["N", "state", "same_over_N2", "cross_over_N2"], rows, None


def figure3(cfg):
    specs = list(DEFAULT_CONFIG["exclusion"]["criteria"])
    specs.append({"kind": "Visibility", "min_contrast": 0.95, "relative_to_survival": True})
    return _curves(cfg, specs)


FIG4 = {"n_atoms": 30, "phi_tilde": -3 * math.pi / 8, "sigma_dx_over_hbar": 1.0, "T_over_tau": 0.2}


def figure4(cfg):
    N, ph = FIG4["n_atoms"], FIG4["phi_tilde"]
    D = math.exp(-FIG4["T_over_tau"] * -math.expm1(-0.5 * FIG4["sigma_dx_over_hbar"] ** 2))
    series = {
        "ps_ideal": counts.ps_counts(N, ph, 1.0, 1.0).probs,
        "ps_dephased": counts.ps_counts(N, ph, D, 1.0).probs,
        "paps": counts.paps_counts(N).probs,
        "dfs": counts.dfs_counts(N).probs,
        "paps_classical": counts.paps_classical(N),
    }
    rows = [(n, *(series[k][n] for k in series)) for n in range(N + 1)]
    return ["n_a", *series], rows, {"D": D, **FIG4}


def figure5(cfg):
    N = 30
    rows = []
    for panel, H in (("a", 1 - 1 / 30), ("b", 0.75)):
        dfs = counts.dfs_bernoulli_depletion(N, H).probs
        paps = counts.bernoulli_depletion(counts.paps_counts, N, H).probs
        rows.extend((panel, H, n, dfs[n], paps[n]) for n in range(N + 1))
    return ["panel", "H", "n_a", "dfs", "paps"], rows, None


FIGURES = {"2": figure2, "3": figure3, "4": figure4, "5": figure5}


def cmd_figure(cfg, args):
    return FIGURES[args.number](cfg)


def cmd_oracle_check(cfg, args):
    res = oracle.oracle_check(n_max=args.n_max)
    rows = [(r.name, r.max_error, r.n_cases, r.passed) for r in res]
    failed = [r.name for r in res if not r.passed]
    return ["check", "max_abs_error", "n_cases", "passed"], rows, {"failed": failed}


def cmd_mc(cfg, args):
    ifo = interferometer(cfg)
    s, te = single_point(cfg)
    if not s > 0:
        raise ConfigError("config field mmm: Monte Carlo needs sigma_q > 0")
    params = MmmParams(s, te, ifo.mass)
    n = cfg.get("mc", {}).get("n_traj", 100000)
    est = oracle.mc_single_particle(params, ifo, n, cfg.get("seed", 0))
    D, H = factors_at(s, te, ifo)
    rows = [("visibility", est.visibility, est.visibility_se, D),
            ("survival", est.survival, est.survival_se, H)]
    return ["estimator", "value", "std_error", "analytic"], rows, {"n_traj": n}


COMMANDS = {
    "factors": cmd_factors,
    "counts": cmd_counts,
    "correlations": cmd_correlations,
    "exclusion": cmd_exclusion,
    "figure": cmd_figure,
    "oracle-check": cmd_oracle_check,
    "mc": cmd_mc,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or an earlier .meta.json sidecar")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config path and JSON value, repeatable")
    common.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    p = argparse.ArgumentParser(prog="bec-mmm", description="MMM effects on two-mode BEC interferometry")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "figure":
            sp.add_argument("number", choices=sorted(FIGURES))
        if name == "oracle-check":
            sp.add_argument("--n-max", type=int, default=12)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    name = args.command + (args.number if args.command == "figure" else "")
    t0 = time.perf_counter()
    try:
        header, rows, extra = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ValueError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (counts.ConsistencyError, oracle.UnitarityError, QuadratureError) as exc:
        print(f"error: numerical consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{name}.csv", header, rows)
    write_meta(out / f"{name}.meta.json", args.command, cfg, elapsed, extra)
    if args.command == "oracle-check" and extra["failed"]:
        print(f"error: oracle mismatch in {', '.join(extra['failed'])}", file=sys.stderr)
        return EXIT_CONSISTENCY
    print(f"wrote {out / (name + '.csv')} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
