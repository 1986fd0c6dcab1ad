"""Command-line front end.

Every command turns a validated configuration (plus seed) into a report
dictionary.  Reports are written with sorted keys and fixed float
formatting so that the same inputs give byte-identical files; timing
information goes into a separate ``run_meta.json``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import config as cfgmod
from .errors import ConfigError, ProcrusteanError
from .filtering import (LocalFilter, apply_local_filter, density_report, filtered_state_from_lenses,
                        procrustean_filter_for)
from .measurement import (CANONICAL_SETTINGS, MEASURED_VISIBILITIES, balanced_projector, bell_i3,
                          calibrate_noise, coincidence_table, default_scan_positions, simulate_scan,
                          visibility)
from .optimize import (OptimizationProblem, configuration_table, default_configurations, evaluate_lenses,
                       optimize_lens_config)
from .states import (MEASURED_CONCENTRATED, MEASURED_INITIAL, NoisyState, PureBipartiteState,
                     entanglement_entropy, fidelity, normalize, schmidt_coefficients)

REPORT_SCHEMA_ID = "procrustean.report/1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "command", "seed", "config", "results"],
    "properties": {
        "schema": {"const": REPORT_SCHEMA_ID},
        "command": {"type": "string"},
        "seed": {"type": "integer"},
        "config": {"type": "object"},
        "results": {"type": "object"},
        "tables": {"type": "object"},
    },
}


# --- helpers ---------------------------------------------------------------

def _clean(obj):
    """Plain JSON types; floats rounded to 12 significant digits so that
    last-bit platform noise cannot leak into reports."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.12g}")
    if isinstance(obj, complex):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def validate_report(report: dict) -> None:
    jsonschema.validate(report, REPORT_SCHEMA)


def _amps(state: PureBipartiteState) -> list:
    return [abs(complex(a)) for a in normalize(state).diagonal]


def _state_summary(state: PureBipartiteState, noise: float = 0.0) -> dict:
    out = {
        "amplitudes_normalized": {"real": normalize(state).amplitudes.real, "imag": normalize(state).amplitudes.imag},
        "schmidt_coefficients": schmidt_coefficients(state),
        "entropy_trits" if state.d == 3 else "entropy_base_d": entanglement_entropy(state),
        "entropy_bits": entanglement_entropy(state, 2),
        "fidelity_max_entangled": fidelity(state, PureBipartiteState.max_entangled(state.d)),
        "correlated": state.is_correlated(),
    }
    if state.d == 3:
        out["i3"] = bell_i3(NoisyState(state, noise))
    return out


def _table_rows(rows) -> list[dict]:
    out = []
    for r in rows:
        out.append({
            "config_id": r.config_id, "z_a_mm": r.z_a * 1e3, "z_b_mm": r.z_b * 1e3,
            "density": list(r.densities), "amplitudes": list(r.amplitudes),
            "reported_amplitudes": list(r.reported_amplitudes),
            "fidelity": r.fidelity, "entropy": r.entropy,
            "success_probability": r.success_probability, "best": r.best,
        })
    return out


def _table_csv(rows: list[dict]) -> tuple[list[str], list[list]]:
    d = max((len(r["density"]) for r in rows), default=3)
    header = (["config_id", "z_a_mm", "z_b_mm"] + [f"density_{l}" for l in range(d)]
              + [f"amp_{l}" for l in range(d)] + ["fidelity", "entropy", "success_probability", "best"])
    body = [[r["config_id"], r["z_a_mm"], r["z_b_mm"], *r["density"], *r["amplitudes"],
             r["fidelity"], r["entropy"], r["success_probability"], int(r["best"])] for r in rows]
    return header, body


def _problem(doc: dict, state: PureBipartiteState, model, symmetric: bool = False) -> OptimizationProblem:
    c = doc.get("concentrate", {})
    target = cfgmod.build_state(c["target"]) if "target" in c else None
    bounds = cfgmod.build_problem_bounds(doc, model)
    if symmetric:
        bounds = (bounds[0], bounds[0])
    return OptimizationProblem(normalize(state), target, bounds, c.get("objective", "fidelity"),
                               c.get("tolerance", 1e-9), c.get("max_evaluations", 5000), c.get("grid", 32),
                               symmetric, model)


def _optimum_summary(res) -> dict:
    return {"z_a_mm": res.z_a * 1e3, "z_b_mm": res.z_b * 1e3, "amplitudes": _amps(res.state),
            "fidelity": res.fidelity, "entropy": res.entropy, "success_probability": res.success_probability,
            "density": list(res.densities), "grid_best": res.grid_best,
            "evaluations": res.evaluation_count, "converged": res.converged}


# --- commands --------------------------------------------------------------
# Each returns (results, tables) where tables maps a name to (header, rows).

def cmd_state(doc: dict, seed: int):
    noisy = cfgmod.build_noisy_state(doc)
    results = _state_summary(noisy.pure, noisy.white_noise_fraction)
    results["noise_fraction"] = noisy.white_noise_fraction
    return results, {}


def cmd_couple(doc: dict, seed: int):
    model = cfgmod.build_optics(doc)
    d = cfgmod.build_state(doc.get("state")).d if "state" in doc else 3
    sw = doc.get("sweep", {})
    lo, hi = cfgmod.lens_bounds(doc, model)[0]
    start = sw.get("start_mm", lo * 1e3) * 1e-3
    stop = sw.get("stop_mm", hi * 1e3) * 1e-3
    zs = np.linspace(start, stop, sw.get("points", 101))
    etas = model.sweep(zs, d) if len(zs) else np.zeros((0, d))
    header = ["z_mm"] + [f"eta_{l}" for l in range(d)] + [f"t_{l}" for l in range(d)]
    rows = [[z * 1e3, *eta, *np.sqrt(eta * model.hologram_efficiency)] for z, eta in zip(zs, etas)]
    results = {"matched_position_mm": model.matched_position * 1e3,
               "track_length_mm": model.track_length * 1e3, "points": len(zs)}
    if len(zs):
        results["eta1_exceeds_eta0"] = bool(np.any(etas[:, 1] > etas[:, 0])) if d > 1 else False
        results["max_eta"] = etas.max(axis=0)
    return results, {"coupling": (header, rows)}


def cmd_filter(doc: dict, seed: int):
    state = normalize(cfgmod.build_state(doc.get("state")))
    f = doc.get("filter", {})
    if "z_a_mm" in f or "z_b_mm" in f:
        model = cfgmod.build_optics(doc)
        z_a = f.get("z_a_mm", model.matched_position * 1e3) * 1e-3
        z_b = f.get("z_b_mm", model.matched_position * 1e3) * 1e-3
        outcome, dens = filtered_state_from_lenses(state, model.config_at(z_a), model.config_at(z_b), model)
        extra = {"z_a_mm": z_a * 1e3, "z_b_mm": z_b * 1e3}
    else:
        try:
            fa = LocalFilter(f.get("t_a", [1.0] * state.d))
            fb = LocalFilter(f.get("t_b", [1.0] * state.d))
        except ValueError as exc:
            raise ConfigError(f"bad filter: {exc}") from None
        outcome = apply_local_filter(state, fa, fb)
        dens = density_report(fa, fb)
        extra = {"t_a": fa.t, "t_b": fb.t}
    results = {**extra, "state": _state_summary(outcome.state),
               "success_probability": outcome.success_probability, "density": dens.density}
    return results, {}


def cmd_concentrate(doc: dict, seed: int):
    c = doc.get("concentrate", {})
    state = normalize(cfgmod.build_state(doc.get("state")))
    if c.get("mode", "closed_form") == "closed_form":
        target = cfgmod.build_state(c["target"]) if "target" in c else None
        fa, fb, success = procrustean_filter_for(state, target, c.get("split", "A"))
        outcome = apply_local_filter(state, fa, fb)
        return {"mode": "closed_form", "t_a": fa.t, "t_b": fb.t, "yield": success,
                "achieved": _state_summary(outcome.state),
                "achieved_amplitudes": _amps(outcome.state)}, {}
    model = cfgmod.build_optics(doc)
    asym = optimize_lens_config(_problem(doc, state, model))
    sym = optimize_lens_config(_problem(doc, state, model, symmetric=True))
    return {"mode": "optics", "asymmetric": _optimum_summary(asym), "symmetric": _optimum_summary(sym),
            "asymmetric_gain": asym.objective_value - sym.objective_value}, {}


def _scan_setup(doc: dict):
    s = doc.get("scan", {})
    sigma = s.get("hologram_sigma_um", cfgmod.DEFAULTS["hologram_sigma_um"][0]) * 1e-6
    if "x_max_um" in s or "points" in s:
        span = s.get("x_max_um", 4 * sigma * 1e6) * 1e-6 / sigma
        xs = default_scan_positions(sigma, s.get("points", 161), span)
    else:
        xs = default_scan_positions(sigma)
    specs = s.get("states") or {cfgmod.state_label(doc.get("state")): doc.get("state") or {"preset": "initial"}}
    states = {label: normalize(cfgmod.build_state(spec)) for label, spec in sorted(specs.items())}
    noise = doc.get("noise_fraction", 0.0)
    cal = s.get("calibrate")
    if cal is not None:
        if cal["state"] not in states:
            raise ConfigError(f"calibration state {cal['state']!r} is not among the scan states")
        noise = calibrate_noise(states[cal["state"]], cal["l_abs"], cal["visibility"], sigma, xs)
    return s, sigma, xs, states, noise


def cmd_scan(doc: dict, seed: int):
    s, sigma, xs, states, noise = _scan_setup(doc)
    dm = cfgmod.build_detection(doc, seed)
    rng = np.random.default_rng(seed)
    sample = s.get("sample", True)
    rows, summary = [], {}
    for label, state in states.items():
        summary[label] = {}
        for l_abs in s.get("l_abs", [1, 2]):
            if l_abs >= state.d:
                raise ConfigError(f"|l| = {l_abs} outside the d = {state.d} state {label!r}")
            curve = simulate_scan(NoisyState(state, noise), balanced_projector(state, l_abs, sigma), l_abs, xs,
                                  dm, sigma, sample, rng, s.get("theta_offset", 0.0), label)
            curve_id = f"{label}_l{l_abs}"
            entry = {"visibility": visibility(curve)}
            if sample:
                entry["visibility_sampled"] = visibility(curve, use_counts=True)
            summary[label][str(l_abs)] = entry
            counts = curve.counts if sample else [""] * len(xs)
            rows += [[curve_id, x * 1e6, r, c] for x, r, c in zip(curve.x, curve.expected, counts)]
    header = ["curve_id", "x_um", "expected_rate_hz", "sampled_counts"]
    return {"noise_fraction": noise, "hologram_sigma_um": sigma * 1e6, "visibility": summary}, \
        {"scan": (header, rows)}


def cmd_bell(doc: dict, seed: int):
    noisy = cfgmod.build_noisy_state(doc)
    b = doc.get("bell", {})
    settings = (tuple(b.get("alphas", CANONICAL_SETTINGS[0])), tuple(b.get("betas", CANONICAL_SETTINGS[1])))
    return {"i3": bell_i3(noisy, settings), "local_bound": 2.0, "settings": settings,
            "noise_fraction": noisy.white_noise_fraction}, {}


def cmd_table(doc: dict, seed: int):
    model = cfgmod.build_optics(doc)
    state = normalize(cfgmod.build_state(doc.get("state")))
    t = doc.get("table", {})
    target = cfgmod.build_state(doc["concentrate"]["target"]) if "target" in doc.get("concentrate", {}) else None
    if "configs_mm" in t:
        configs = [(a * 1e-3, b * 1e-3) for a, b in t["configs_mm"]]
    else:
        bounds = cfgmod.build_problem_bounds(doc, model)
        configs = default_configurations(state, model, bounds[0], optimize_lens_config(_problem(doc, state, model)))
    rows = _table_rows(configuration_table(state, configs, model, target, t.get("objective", "fidelity")))
    return {"rows": rows}, {"table": _table_csv(rows)}


def cmd_reproduce(doc: dict, seed: int):
    """The whole chain from the measured initial state to the Bell value."""
    initial = normalize(PureBipartiteState.from_diagonal(MEASURED_INITIAL))
    concentrated = normalize(PureBipartiteState.from_diagonal(MEASURED_CONCENTRATED))
    results: dict = {"states": {"initial": _state_summary(initial), "concentrated": _state_summary(concentrated)}}

    # filter implied by the measured before/after amplitudes
    tau = np.abs(concentrated.diagonal) / np.abs(initial.diagonal)
    tau = tau / tau.max()
    ratio = apply_local_filter(initial, LocalFilter(tau), LocalFilter.identity(3))
    dev = np.abs(np.array(_amps(ratio.state)) - np.array(MEASURED_CONCENTRATED))
    results["ratio_filter"] = {"joint_transmission": tau, "amplitudes": _amps(ratio.state),
                               "success_probability": ratio.success_probability,
                               "max_deviation_from_measured": dev.max(), "within_error_bar": bool(dev.max() <= 0.02)}

    fa, fb, success = procrustean_filter_for(initial)
    best = apply_local_filter(initial, fa, fb)
    results["procrustean"] = {"t_a": fa.t, "t_b": fb.t, "yield": success, "amplitudes": _amps(best.state),
                              "fidelity": fidelity(best.state, PureBipartiteState.max_entangled(3))}

    model = cfgmod.build_optics(doc)
    bounds = cfgmod.build_problem_bounds(doc, model)
    problem = OptimizationProblem(initial, bounds=bounds, model=model)
    asym = optimize_lens_config(problem)
    sym = optimize_lens_config(OptimizationProblem(initial, bounds=(bounds[0], bounds[0]), symmetric=True,
                                                   model=model))
    results["optics"] = {"matched_position_mm": model.matched_position * 1e3,
                         "asymmetric": _optimum_summary(asym), "symmetric": _optimum_summary(sym),
                         "asymmetric_gain": asym.fidelity - sym.fidelity}
    rows = _table_rows(configuration_table(initial, default_configurations(initial, model, bounds[0], asym),
                                           model))
    results["configuration_table"] = rows

    sigma = cfgmod.DEFAULTS["hologram_sigma_um"][0] * 1e-6
    xs = default_scan_positions(sigma)
    eps = calibrate_noise(initial, 1, MEASURED_VISIBILITIES["initial"][1], sigma, xs)
    vis = {}
    for label, st in (("initial", initial), ("concentrated", concentrated)):
        vis[label] = {}
        for l_abs in (1, 2):
            curve = simulate_scan(NoisyState(st, eps), balanced_projector(st, l_abs, sigma), l_abs, xs,
                                  sigma_h=sigma)
            vis[label][str(l_abs)] = {"model": visibility(curve), "measured": MEASURED_VISIBILITIES[label][l_abs]}
    results["visibility"] = {"noise_fraction": eps, "calibrated_on": "initial, |l| = 1",
                             "note": "model values depend on the hologram response; measured values are references",
                             "by_state": vis}

    results["bell"] = {
        label: {"pure": bell_i3(st), "with_noise": bell_i3(NoisyState(st, eps))}
        for label, st in (("initial", initial), ("concentrated", concentrated),
                          ("max_entangled", PureBipartiteState.max_entangled(3)))}

    dm = cfgmod.build_detection(doc, seed)
    rng = np.random.default_rng(seed)
    counts = {}
    for label, st in (("initial", initial), ("concentrated", concentrated)):
        table = coincidence_table(NoisyState(st, eps), dm)
        counts[label] = {"expected": table.expected_counts, "sampled": table.sample(rng)}
    results["coincidences"] = counts
    return results, {"table": _table_csv(rows)}


COMMANDS = {
    "state": cmd_state, "couple": cmd_couple, "filter": cmd_filter, "concentrate": cmd_concentrate,
    "scan": cmd_scan, "bell": cmd_bell, "table": cmd_table, "reproduce": cmd_reproduce,
}


def run(command: str, doc: dict, seed: int | None = None) -> tuple[dict, dict]:
    """Execute a command on a validated config; returns (report, tables)."""
    doc = cfgmod.validate(doc)
    seed = doc.get("seed", 0) if seed is None else seed
    results, tables = COMMANDS[command](doc, seed)
    report = {"schema": REPORT_SCHEMA_ID, "command": command, "seed": seed, "config": doc, "results": results}
    return _clean(report), tables


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, np.integer):
        return int(v)
    return v


def _flat_csv(results: dict) -> str:
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
            for i, v in enumerate(obj):
                walk(f"{prefix}[{i}]", v)
        else:
            rows.append([prefix, json.dumps(obj)])

    walk("", results)
    return _csv_text(["key", "value"], rows)


def defaults_text() -> str:
    lines = ["parameter,value,origin"]
    for key, (value, origin) in sorted(cfgmod.DEFAULTS.items()):
        lines.append(f"{key},{'' if value is None else _fmt(value)},{origin}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="procrustean", description="Simulate OAM qutrit entanglement concentration.")
    p.add_argument("--defaults", action="store_true", help="list default parameters and their origin, then exit")
    sub = p.add_subparsers(dest="command")
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        sp.add_argument("--config", type=Path, help="JSON experiment configuration")
        sp.add_argument("--seed", type=int, help="overrides the configuration seed")
        sp.add_argument("--out", type=Path, help="directory for report.json and CSV tables")
        sp.add_argument("--format", choices=("csv", "json"), default="json", help="stdout format")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.defaults:
        sys.stdout.write(defaults_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    started = time.time()
    try:
        doc = cfgmod.load(args.config) if args.config else {"schema_version": cfgmod.SCHEMA_VERSION}
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative")
        report, tables = run(args.command, doc, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProcrusteanError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # parameter checks inside the library: the configuration asked for something invalid
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    text = dumps_report(report)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(text)
        for name, (header, rows) in tables.items():
            (args.out / f"{name}.csv").write_text(_csv_text(header, rows))
        meta = {"command": args.command, "started_unix": started, "elapsed_s": time.time() - started}
        (args.out / "run_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    if args.format == "json":
        sys.stdout.write(text)
    elif tables:
        for header, rows in tables.values():
            sys.stdout.write(_csv_text(header, rows))
    else:
        sys.stdout.write(_flat_csv(report["results"]))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
