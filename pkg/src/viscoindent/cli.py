"""Command-line driver for forward runs, sensitivity, training, calibration and analysis."""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import contact, doe, study, surrogate
from .constitutive import PARAM_NAMES, MaterialParams
from .errors import InvalidInputError, MissingArtifactError, ViscoIndentError

log = logging.getLogger("viscoindent")

EXIT_OK, EXIT_NUMERIC, EXIT_IO, EXIT_MISSING = 0, 1, 2, 3


def _levels_str(levels):
    return ", ".join(repr(float(v)) for v in levels)


DEFAULTS = {
    "study": {
        "seed": "",
        "threads": "1",
    },
    "material": {
        "E": "3.28", "nu": "0.34", "C_s": "0.09", "m_s": "0.2", "C_t": "0.24", "m_t": "0.47", "t_eps": "0.25",
    },
    "schedules": {
        "P_max": "1.0",
        "ramps": ", ".join(f"{t:g}" for t in study.RAMP_TIMES),
        "hold": "0.0",
        "n_samples": "100",
    },
    "forward": {
        "E_ref": "3.28", "nu_ref": "0.34", "P_ref": "1.0",
        "half_angle": repr(contact.BERKOVICH_CONE_ANGLE), "max_dt": "0.05",
    },
    "sensitivity": {
        "ramp": "30",
        "error": "mse",
        **{n: _levels_str(lv) for n, lv in zip(study.BURGER_LEVELS.names, study.BURGER_LEVELS.levels)},
    },
    "surrogate": {
        "kernel": "MQ",
        "c_j": "0.5",
        "energy_threshold": "0.999",
        "gs_squared": "false",
        "cj_sweep": "",
        "nu": "0.34",
        "t_eps": "0.25",
        **{n: _levels_str(lv) for n, lv in zip(study.SURROGATE_LEVELS.names, study.SURROGATE_LEVELS.levels)},
    },
    "calibration": {
        "population": "200",
        "tournament_size": "2",
        "crossover_fraction": "0.8",
        "crossover_ratio": "1.0",
        "mutation_scale": "1.0",
        "mutation_shrink": "1.0",
        "migration_fraction": "0.2",
        "migration_interval": "20",
        "subpopulations": "4",
        "max_generations": "",
        "fitness_tolerance": "1e-4",
        "experiments": "",
    },
    "analyze": {
        "area_c0": "24.5", "area_c1": "0.0", "area_c2": "0.0", "area_c3": "0.0",
        "eps_geom": repr(contact.EPS_BERKOVICH),
        "beta": repr(contact.BETA_BERKOVICH),
        "E_i": repr(contact.DIAMOND_E),
        "nu_i": repr(contact.DIAMOND_NU),
        "nu_s": "0.34",
        "fit_fraction": "0.5",
    },
}


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def default_config():
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep parameter-name case
    cp.read_dict(DEFAULTS)
    return cp


def dump_config(cp):
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cp):
    """Hash of everything that can change results; the thread count cannot."""
    copy = configparser.ConfigParser(interpolation=None)
    copy.optionxform = str
    copy.read_dict(cp)
    copy.remove_option("study", "threads")
    return hashlib.sha256(dump_config(copy).encode()).hexdigest()[:16]


def load_config(path=None, overrides=None):
    cp = default_config()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        cp.read(path, encoding="utf-8")
    for (section, key), value in (overrides or {}).items():
        cp[section][key] = str(value)
    return cp


def _floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _seed(cp):
    raw = cp["study"]["seed"].strip()
    if not raw:
        raise InvalidInputError("config [study] seed is required for randomized stages (or pass --seed)")
    return int(raw)


def _material(cp):
    m = cp["material"]
    return MaterialParams(**{n: float(m[n]) for n in PARAM_NAMES})


def _schedules(cp):
    s = cp["schedules"]
    P_max, hold, n = float(s["P_max"]), float(s["hold"]), int(s["n_samples"])
    ramps = _floats(s["ramps"])
    if not ramps:
        raise InvalidInputError("at least one schedule ramp is required")
    profile = "trapezoidal" if hold > 0 else "triangular"
    return [(t, contact.LoadSchedule(profile, P_max, t, hold, t, n)) for t in ramps]


def _forward_cfg(cp):
    f = cp["forward"]
    return contact.ForwardConfig.calibrated(float(f["E_ref"]), float(f["nu_ref"]), float(f["P_ref"]),
                                            float(f["half_angle"]), float(f["max_dt"]))


def _surrogate_levels(cp):
    s = cp["surrogate"]
    names = study.SURROGATE_LEVELS.names
    return doe.FactorLevels(names, [_floats(s[n]) for n in names]), {"nu": float(s["nu"]), "t_eps": float(s["t_eps"])}


def _tag(t):
    return f"{t:g}s"


def _header(cp, command):
    return [f"viscoindent {command}", f"config_sha256={config_hash(cp)}"]


def _outdir(args):
    out = Path(args.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out}")
    return out


def _commented(cp, command, body):
    return "".join(f"# {ln}\n" for ln in _header(cp, command)) + body


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(cp, args):
    out = _outdir(args)
    params = _material(cp)
    cfg = _forward_cfg(cp)
    written = []
    for ramp, sched in _schedules(cp):
        curve = contact.forward_indentation(params, sched, cfg)
        path = out / f"simulate_{_tag(ramp)}.csv"
        curve.to_csv(path, _header(cp, "simulate"))
        written.append(path)
    return written


def cmd_sensitivity(cp, args):
    out = _outdir(args)
    s = cp["sensitivity"]
    names = study.BURGER_LEVELS.names
    levels = doe.FactorLevels(names, [_floats(s[n]) for n in names])
    design = doe.orthogonal_array("L27")
    X = levels.substitute(design.assignments)
    ramp = float(s["ramp"])
    sched = dict(_schedules(cp)).get(ramp) or contact.LoadSchedule.triangular(float(cp["schedules"]["P_max"]), ramp)
    cfg = _forward_cfg(cp)
    base = _material(cp)
    fixed = {"nu": base.nu}
    fwd = study.depth_forward(sched, names, fixed, cfg)
    H = fwd(X)
    ref = contact.forward_depths(base, sched, cfg)
    err_kind = s["error"].strip().lower()
    if err_kind not in ("mse", "rms"):
        raise InvalidInputError("sensitivity error must be 'mse' or 'rms'")
    err = doe.error_mse if err_kind == "mse" else doe.error_rms_relative
    # the first sample sits at zero load and zero depth
    responses = np.array([err(h[1:], ref[1:]) for h in H])
    table = doe.anova(design, levels, responses)

    t = sched.sample_times()
    P = sched.load_at(t)

    def curve_at(p):
        return contact.LDCurve(t, P, fwd(np.asarray(p)[None])[0])

    baseline = [getattr(base, n) for n in names]
    deltas = doe.extreme_sensitivity(levels.bounds(), baseline, curve_at, names=list(names))

    resp_lines = ["run," + ",".join(names) + ",response"]
    resp_lines += [f"{i + 1}," + ",".join(repr(float(v)) for v in row) + f",{r!r}"
                   for i, (row, r) in enumerate(zip(X, responses))]
    files = {
        "design.csv": design.to_csv(list(names)),
        "responses.csv": "\n".join(resp_lines) + "\n",
        "anova.csv": table.to_csv(),
        "anova.txt": table.to_text(),
        "extremes.csv": doe.extremes_csv(deltas),
    }
    for name, body in files.items():
        contact.write_text_atomic(out / name, _commented(cp, "sensitivity", body))
    return table, deltas


def cmd_train(cp, args):
    out = _outdir(args)
    s = cp["surrogate"]
    levels, fixed = _surrogate_levels(cp)
    kernel = s["kernel"].upper()
    c_j = float(s["c_j"])
    thr = float(s["energy_threshold"])
    gs_sq = s.getboolean("gs_squared")
    threads = int(cp["study"]["threads"])
    cfg = _forward_cfg(cp)
    sweep = _floats(s["cj_sweep"])
    models = {}
    for ramp, sched in _schedules(cp):
        snaps = study.condition_snapshots(sched, levels, fixed, cfg, threads)
        model = surrogate.train(snaps, kernel, c_j, thr, gs_sq)
        surrogate.save(model, out / f"surrogate_{_tag(ramp)}.txt")
        contact.write_text_atomic(out / f"spectrum_{_tag(ramp)}.csv",
                                  _commented(cp, "train", surrogate.spectrum_csv(model.basis)))
        if sweep:
            Xv = study.cell_midpoints(levels)
            Yv = study.depth_forward(sched, levels.names, fixed, cfg)(Xv)
            rows = surrogate.shape_sweep(snaps, Xv.T, Yv.T, kernel, sweep, thr, gs_sq)
            body = "c_j,mean_relative_error\n" + "".join(f"{c!r},{e!r}\n" for c, e in rows)
            contact.write_text_atomic(out / f"cj_sweep_{_tag(ramp)}.csv", _commented(cp, "train", body))
        models[ramp] = model
    return models


def cmd_calibrate(cp, args):
    out = _outdir(args)
    seed = _seed(cp)
    c = cp["calibration"]
    threads = int(cp["study"]["threads"])
    levels, fixed = _surrogate_levels(cp)
    schedules = _schedules(cp)
    cfg = _forward_cfg(cp)
    art_dir = Path(args.surrogates) if args.surrogates else out

    exp_files = list(args.experiments or []) or [p for p in c["experiments"].split(",") if p.strip()]
    if exp_files and len(exp_files) != len(schedules):
        raise InvalidInputError(f"{len(exp_files)} experiment files for {len(schedules)} schedules")
    for f in exp_files:
        if not Path(f.strip()).exists():
            raise FileNotFoundError(f"experiment file not found: {f.strip()}")

    conditions = []
    for k, (ramp, sched) in enumerate(schedules):
        model = surrogate.load(art_dir / f"surrogate_{_tag(ramp)}.txt")
        t = sched.sample_times()
        grid = contact.LDCurve(t, sched.load_at(t), np.zeros_like(t))
        if exp_files:
            exp = contact.LDCurve.from_csv(Path(exp_files[k].strip()))
            target = doe.resample_to_grid(exp, grid).h
        else:
            # synthetic experiment from the [material] section
            target = contact.forward_depths(_material(cp), sched, cfg)
        conditions.append(cal.Condition(_tag(ramp), target, model))
    problem = cal.CalibrationProblem(levels.bounds(), conditions, levels.names)
    max_gen = c["max_generations"].strip()
    config = cal.GaConfig(
        rng_seed=seed,
        population=int(c["population"]),
        tournament_size=int(c["tournament_size"]),
        crossover_fraction=float(c["crossover_fraction"]),
        crossover_ratio=float(c["crossover_ratio"]),
        mutation_scale=float(c["mutation_scale"]),
        mutation_shrink=float(c["mutation_shrink"]),
        migration_fraction=float(c["migration_fraction"]),
        migration_interval=int(c["migration_interval"]),
        subpopulations=int(c["subpopulations"]),
        max_generations=int(max_gen) if max_gen else None,
        fitness_tolerance=float(c["fitness_tolerance"]),
        threads=threads,
    )
    result = cal.ga_run(problem, config)

    lines = ["parameter,value"]
    lines += [f"{n},{float(v)!r}" for n, v in zip(levels.names, result.best_params)]
    lines += [f"{n},{v!r}" for n, v in fixed.items()]
    lines.append(f"objective,{result.best_objective!r}")
    lines.append(f"generations,{result.generations}")
    lines.append(f"stop_reason,{result.stop_reason}")
    lines.append("")
    lines.append("condition,rmse_nm,r2,avg_err_nm,pct_err")
    metrics = {}
    for cond in conditions:
        pred = surrogate.predict(cond.surrogate, result.best_params)
        m = cal.fit_metrics(cond.target, pred)
        metrics[cond.descriptor] = m
        lines.append(f"{cond.descriptor},{m.rmse!r},{m.r2!r},{m.avg_err!r},{m.pct_err!r}")
    contact.write_text_atomic(out / "calibration_report.csv", _commented(cp, "calibrate", "\n".join(lines) + "\n"))
    contact.write_text_atomic(out / "calibration_history.csv",
                              _commented(cp, "calibrate", result.history_csv(levels.names)))
    return result, metrics


def cmd_analyze(cp, args):
    out = _outdir(args)
    a = cp["analyze"]
    curve_path = Path(args.curve)
    if not curve_path.exists():
        raise FileNotFoundError(f"curve file not found: {curve_path}")
    curve = contact.LDCurve.from_csv(curve_path)
    if args.area:
        area_path = Path(args.area)
        if not area_path.exists():
            raise FileNotFoundError(f"area-function file not found: {area_path}")
        coeffs = _floats(" ".join(ln for ln in area_path.read_text().splitlines()
                                  if ln.strip() and not ln.startswith("#") and not ln[0].isalpha()))
        area = contact.AreaFunction(*coeffs)
    elif args.cone is not None:
        area = contact.AreaFunction.cone(args.cone)
    else:
        area = contact.AreaFunction(float(a["area_c0"]), float(a["area_c1"]), float(a["area_c2"]), float(a["area_c3"]))
    eps_geom = contact.EPS_CONE if args.cone is not None else float(a["eps_geom"])
    beta = 1.0 if args.cone is not None else float(a["beta"])
    res = contact.oliver_pharr(
        curve, area, eps_geom=eps_geom, beta=beta, E_i=float(a["E_i"]), nu_i=float(a["nu_i"]),
        nu_s=float(a["nu_s"]), fit_fraction=float(a["fit_fraction"]), ngan=args.ngan,
    )
    rows = [("S_mN_per_nm", res.S)]
    if res.S_e is not None:
        rows.append(("S_e_mN_per_nm", res.S_e))
    rows += [("h_c_nm", res.h_c), ("A_nm2", res.A), ("H_GPa", res.H), ("E_r_GPa", res.E_r), ("E_s_GPa", res.E_s)]
    body = "quantity,value\n" + "".join(f"{k},{float(v)!r}\n" for k, v in rows)
    contact.write_text_atomic(out / "analysis.csv", _commented(cp, "analyze", body))
    return res


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="viscoindent", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI study configuration")
        sp.add_argument("--out", default=".", help="existing output directory")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--seed", type=int, help="override [study] seed")
        sp.add_argument("--kernel", choices=["ls", "cs", "mq", "gs", "imq"], help="override [surrogate] kernel")
        sp.add_argument("--cj", type=float, help="override [surrogate] c_j")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("simulate", help="forward load-displacement curves"))
    common(sub.add_parser("sensitivity", help="L27 ANOVA and extreme-value sweeps"))
    sp = sub.add_parser("train", help="one surrogate per load schedule")
    common(sp)
    sp.add_argument("--cj-sweep", help="comma-separated c_j values; writes error-vs-c_j CSVs")
    sp = sub.add_parser("calibrate", help="genetic-algorithm parameter identification")
    common(sp)
    sp.add_argument("--experiments", nargs="+", help="one curve CSV per schedule, in schedule order")
    sp.add_argument("--surrogates", help="directory holding surrogate files (default: --out)")
    sp = sub.add_parser("analyze", help="Oliver-Pharr analysis of a curve file")
    common(sp)
    sp.add_argument("curve", help="curve CSV")
    sp.add_argument("--area", help="area-function file: c0, c1, c2, c3")
    sp.add_argument("--cone", type=float, metavar="HALF_ANGLE", help="ideal cone geometry instead of an area function")
    sp.add_argument("--ngan", action="store_true", help="apply the creep correction to S")
    sub.add_parser("print-defaults", help="print the default configuration")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "sensitivity": cmd_sensitivity,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "analyze": cmd_analyze,
}


def _overrides(args):
    ov = {}
    if args.threads is not None:
        ov[("study", "threads")] = args.threads
    if args.seed is not None:
        ov[("study", "seed")] = args.seed
    if args.kernel:
        ov[("surrogate", "kernel")] = args.kernel.upper()
    if args.cj is not None:
        ov[("surrogate", "c_j")] = args.cj
    if getattr(args, "cj_sweep", None):
        ov[("surrogate", "cj_sweep")] = args.cj_sweep
    return ov


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "print-defaults":
        sys.stdout.write(dump_config(default_config()))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cp = load_config(args.config, _overrides(args))
        COMMANDS[args.command](cp, args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (OSError, InvalidInputError, configparser.Error, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ViscoIndentError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
