"""Command-line front end.

Every numeric parameter can come from (lowest to highest precedence) the
built-in default, a run manifest (``--from-manifest``), an INI config file
(``--config``; keys in ``[common]`` and ``[<command>]`` sections) and the
command-line flag.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, audit, verify
from .ds import (
    ModeEnsemble,
    cross_scale_experiment,
    evolve_ensemble,
    parse_closure,
)
from .flowcore import (
    BaseFlowSpec,
    ConsistencyError,
    DomainError,
    IntegrationError,
    UsageError,
    ValidationError,
    as_gradient,
    base_flow_matrix,
    validate_base_flow,
)
from .floquet import monodromy, orientation_scan
from .kelvin import KelvinMode, SimulationConfig, integrate_mode, write_csv

OUTPUT_ENV = "KELVINDS_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _vec(raw) -> list[float]:
    if isinstance(raw, (list, tuple)):
        vals = [float(x) for x in raw]
    else:
        vals = [float(x) for x in str(raw).split(",") if x.strip()]
    if len(vals) != 3:
        raise ValueError(f"expected 3 comma-separated reals, got {raw!r}")
    return vals


def _floats(raw) -> list[float]:
    if isinstance(raw, (list, tuple)):
        return [float(x) for x in raw]
    return [float(x) for x in str(raw).split(",") if x.strip()]


def _bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _opt_vec(raw):
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        return None
    return _vec(raw)


def _opt_str(raw):
    if raw is None or str(raw).strip().lower() in ("", "none"):
        return None
    return str(raw)


_SIM = {
    "nu": (float, 0.0, "kinematic viscosity"),
    "dt": (float, 1e-3, "time step (RK4) / output spacing (RK45)"),
    "t_end": (float, 1.0, "final time"),
    "method": (str, "rk4", "rk4 or rk45"),
    "abs_tol": (float, 1e-12, "RK45 absolute tolerance"),
    "rel_tol": (float, 1e-10, "RK45 relative tolerance"),
    "sample_every": (int, 10, "output cadence in steps"),
}

PARAMS = {
    "common": {
        "seed": (int, 0, "seed for randomized checks"),
        "trace_tol": (float, 1e-12, "relative trace tolerance for base flows"),
    },
    "mode": {
        "base": (str, "rotation:1", "base flow, e.g. rotation:1, plane_strain:1, shear:1, elliptic:1.5,1, custom:<9 entries>"),
        "k": (_vec, [1.0, 0.0, 0.0], "initial wavevector"),
        "v": (_vec, [0.0, 0.0, 1.0], "imaginary parts of the initial amplitude"),
        "v_re": (_vec, [0.0, 0.0, 0.0], "real parts of the initial amplitude"),
        "reproject": (_bool, False, "re-impose k.v = 0 after every step"),
        **_SIM,
    },
    "floquet": {
        "base": (str, "elliptic:1.5,1", "closed-streamline base flow"),
        "k": (_opt_vec, None, "single initial wavevector (skips the scan)"),
        "scan": (str, "32x32", "orientation grid n_theta x n_phi"),
        "nu": (float, 0.0, "kinematic viscosity"),
        "k_mag": (float, 1.0, "|k0| on the scan sphere"),
        "steps": (int, 512, "RK4 steps per period"),
    },
    "ds": {
        "ensemble": (_opt_str, None, "ensemble JSON file"),
        "closure": (str, "ds", "ds, ball[:rho] or external"),
        "base": (str, "rotation:1", "base flow for the external closure"),
        "cross_scale": (_bool, False, "run the cross-scale experiment instead"),
        "k_low": (_vec, [1.0, 0.0, 0.0], "cross-scale: low wavevector"),
        "v_low": (_vec, [0.0, 0.1, 0.05], "cross-scale: imaginary parts of the low amplitude (projected normal to k_low)"),
        "k_high": (_vec, [0.0, 6.0, 8.0], "cross-scale: high wavevector"),
        "v_high": (_vec, [0.1, 0.04, 0.03], "cross-scale: imaginary parts of the high amplitude (projected normal to k_high)"),
        "amplitude_ratio": (float, 1.0, "cross-scale: |v_high| / |v_low|"),
        "rho": (float, 0.1, "cross-scale: ball radius ratio"),
        **_SIM,
    },
    "audit": {
        "check": (str, "all", "zero-mode, nonlocal, pde-residual or all"),
        "random_pairs": (int, 100, "zero-mode: number of random pairs"),
        "k_target": (_vec, [0.6, 0.0, 0.8], "nonlocal: target wavevector"),
        "width": (float, 1.0, "nonlocal: Gaussian envelope width"),
        "ratios": (_floats, [0.5, 0.2, 0.05, 0.01], "nonlocal: ball radius / |k_target|"),
        "quad_n": (int, 16, "nonlocal: quadrature nodes per axis"),
        "base": (str, "rotation:1", "pde-residual: base flow"),
        "k": (_vec, [1.0, 0.5, 0.7], "pde-residual: central wavevector"),
        "t": (float, 1.0, "pde-residual: time"),
        "nu": (float, 0.0, "pde-residual: viscosity"),
        "deltas": (_floats, [1e-2, 5e-3, 2.5e-3], "pde-residual: stencil steps relative to |k|"),
    },
    "verify": {},
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kelvinds", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "mode": "integrate a single Kelvin mode",
        "floquet": "monodromy / orientation scan on a closed-streamline flow",
        "ds": "evolve a quasi-linear DS ensemble or run the cross-scale experiment",
        "audit": "spectral identity audits",
        "verify": "run an acceptance suite",
    }
    for name, table in PARAMS.items():
        if name == "common":
            continue
        p = sub.add_parser(name, help=helps[name])
        if name == "verify":
            p.add_argument("suite", choices=sorted(verify.SUITES))
        p.add_argument("--config", help="INI config file")
        p.add_argument("--from-manifest", help="replay parameters from a run manifest")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./kelvinds-output)")
        for key, (conv, default, text) in {**PARAMS["common"], **table}.items():
            flag = "--" + key.replace("_", "-")
            if conv is _bool:
                p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None, help=text)
            else:
                p.add_argument(flag, dest=key, default=None, help=f"{text} (default {default})")
    return parser


def _line_of(path: Path, section: str, key: str) -> int | None:
    current = None
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].strip().replace("-", "_") == key:
            return n
    return None


def resolve_parameters(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, manifest, config file and flags into typed parameters."""
    table = {**PARAMS["common"], **PARAMS[command]}
    raw = {k: (d, "default") for k, (_, d, _) in table.items()}

    if args.from_manifest:
        try:
            manifest = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {args.from_manifest}: {exc}") from exc
        if manifest.get("command") != command:
            raise ConfigError(f"manifest is for command {manifest.get('command')!r}, not {command!r}")
        for k, v in manifest.get("parameters", {}).items():
            if k in table:
                raw[k] = (v, f"manifest field {k!r}")

    if args.config:
        path = Path(args.config)
        cp = configparser.ConfigParser()
        try:
            with path.open(encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in ("common", command):
            if not cp.has_section(section):
                continue
            for key, value in cp.items(section):
                key = key.replace("-", "_")
                if key not in table:
                    line = _line_of(path, section, key)
                    raise ConfigError(f"{path}:{line}: unknown key {key!r} in [{section}]")
                raw[key] = (value, f"{path}:{_line_of(path, section, key)} [{section}] {key}")

    for key in table:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = (value, f"flag --{key.replace('_', '-')}")

    params = {}
    for key, (value, origin) in raw.items():
        conv = table[key][0]
        try:
            params[key] = conv(value) if value is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: {exc}") from exc
    return params


def _sim_config(p: dict) -> SimulationConfig:
    return SimulationConfig(
        nu=p["nu"], dt=p["dt"], t_end=p["t_end"], method=p["method"],
        abs_tol=p["abs_tol"], rel_tol=p["rel_tol"], sample_every=p["sample_every"],
        reproject=p.get("reproject", False),
    )


def _base(p: dict) -> np.ndarray:
    A = base_flow_matrix(BaseFlowSpec.parse(p["base"]))
    return as_gradient(A, tol=p["trace_tol"])


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
    return path


def _jsonable(params: dict) -> dict:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in params.items()}


# ------------------------------------------------------------- scenarios

def run_mode(p: dict, out: Path) -> tuple[list[Path], int]:
    A = _base(p)
    mode = KelvinMode(p["k"], np.array(p["v_re"]) + 1j * np.array(p["v"]))
    tr = integrate_mode(mode, A, _sim_config(p))
    csv_path = out / "trajectory.csv"
    tr.to_csv(csv_path)
    summary = {
        "base_flow": validate_base_flow(A),
        "final": {"t": float(tr.t[-1]), "k": tr.k[-1].tolist(),
                  "v_re": tr.v[-1].real.tolist(), "v_im": tr.v[-1].imag.tolist()},
        "max_defect": float(np.max(tr.defect)),
        "k_norm_drift": float(np.max(np.abs(tr.k_norm / tr.k_norm[0] - 1.0))),
        "v_norm_drift": float(np.max(np.abs(tr.v_norm / tr.v_norm[0] - 1.0))) if tr.v_norm[0] > 0 else 0.0,
    }
    print(f"mode: |k| drift {summary['k_norm_drift']:.3e}, |v| drift {summary['v_norm_drift']:.3e}, "
          f"max defect {summary['max_defect']:.3e}")
    return [csv_path, _write_json(out / "summary.json", summary)], EXIT_OK


def run_floquet(p: dict, out: Path) -> tuple[list[Path], int]:
    A = _base(p)
    if p["k"] is not None:
        r = monodromy(A, p["k"], p["nu"], p["steps"])
        payload = {
            "period": r.period,
            "growth_rate": r.growth_rate,
            "multipliers": {"re": r.multipliers.real.tolist(), "im": r.multipliers.imag.tolist()},
            "monodromy": {"re": r.monodromy.real.tolist(), "im": r.monodromy.imag.tolist()},
            "abs_det": float(abs(np.linalg.det(r.monodromy))),
        }
        print(f"floquet: period {r.period:.12g}, growth rate {r.growth_rate:.6e}")
        return [_write_json(out / "monodromy.json", payload)], EXIT_OK
    try:
        n_theta, n_phi = (int(x) for x in p["scan"].lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--scan expects NxM, got {p['scan']!r}") from exc
    scan = orientation_scan(A, p["nu"], n_theta, n_phi, p["k_mag"], p["steps"])
    scan.to_csv(out / "scan.csv")
    scan.write_summary(out / "scan_summary.json")
    finite = scan.growth_rate[np.isfinite(scan.growth_rate)]
    print(f"floquet scan {n_theta}x{n_phi}: max growth {scan.max_growth:.6e}, "
          f"min growth {finite.min():.6e}, max |growth| {np.abs(finite).max():.3e}")
    return [out / "scan.csv", out / "scan_summary.json"], EXIT_OK


def run_ds(p: dict, out: Path) -> tuple[list[Path], int]:
    cfg = _sim_config(p)
    if p["cross_scale"]:
        low = KelvinMode.solenoidal(p["k_low"], 1j * np.array(p["v_low"]))
        high = KelvinMode.solenoidal(p["k_high"], 1j * np.array(p["v_high"]))
        report = cross_scale_experiment(low, high, p["amplitude_ratio"], p["nu"], cfg, p["rho"])
        print(f"cross-scale: full-sum deviation {report.trajectory_deviation:.6e}, "
              f"ball-restricted deviation {report.ball_deviation:.6e}")
        return [_write_json(out / "cross_scale.json", report.to_dict())], EXIT_OK
    if p["ensemble"] is None:
        raise ConfigError("ds needs --ensemble FILE (or --cross-scale)")
    path = Path(p["ensemble"])
    if not path.is_file():
        raise ConfigError(f"ensemble file not found: {path}")
    try:
        ensemble = ModeEnsemble.from_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    base = BaseFlowSpec.parse(p["base"])
    closure = parse_closure(p["closure"], base)
    tr = evolve_ensemble(ensemble, p["nu"], closure, cfg)
    files = tr.to_csv(out)
    summary = {
        "closure": str(closure),
        "n_modes": len(ensemble),
        "point_symmetric": ensemble.point_symmetric,
        "max_defect": float(np.max(tr.max_defect)),
        "max_abs_trace": float(np.max(np.abs(tr.trace))),
        "max_real_part": float(np.max(tr.max_real_part)),
        "max_admissibility_defect": float(np.max(tr.admissibility_defect())),
        "energy": {"initial": float(tr.total_energy[0]), "final": float(tr.total_energy[-1])},
    }
    print(f"ds: {len(ensemble)} modes, closure {closure}, max defect {summary['max_defect']:.3e}")
    return files + [_write_json(out / "ds_summary.json", summary)], EXIT_OK


def run_audit(p: dict, out: Path) -> tuple[list[Path], int]:
    check = p["check"]
    if check not in ("zero-mode", "nonlocal", "pde-residual", "all"):
        raise ConfigError(f"unknown audit check {check!r}")
    files, results = [], {}

    if check in ("zero-mode", "all"):
        rng = np.random.default_rng(p["seed"])
        ens = audit.random_incompressible_ensemble(p["random_pairs"], rng)
        scale = audit.zero_mode_scale(ens)
        value = float(np.linalg.norm(audit.convolution_at_zero(ens)) / scale)
        terms = float(np.sum(np.linalg.norm(audit.zero_mode_terms(ens), axis=1)) / scale)
        ok = value <= 1e-13 and terms <= 1e-13
        results["zero-mode"] = {"passed": ok, "relative_defect": value, "relative_term_defect": terms,
                                "tolerance": 1e-13, "random_pairs": p["random_pairs"], "seed": p["seed"]}
        print(f"{'PASS' if ok else 'FAIL'} zero-mode: defect {value:.3e} (term-wise {terms:.3e}) <= 1e-13")

    if check in ("nonlocal", "all"):
        kt = np.array(p["k_target"])
        reports = [audit.nonlocal_approx_error(kt, p["width"], r * np.linalg.norm(kt), p["quad_n"])
                   for r in p["ratios"]]
        errs = [r.relative_error for r in reports]
        ok = all(b < a for a, b in zip(errs, errs[1:])) and not any(r.quadrature_warning for r in reports)
        path = out / "nonlocal_sweep.csv"
        write_csv(path, ("ratio", "relative_error", "quadrature_warning"),
                  ((r.separation_ratio, r.relative_error, float(r.quadrature_warning)) for r in reports))
        files.append(path)
        results["nonlocal"] = {"passed": ok, "reports": [r.to_dict() for r in reports]}
        print(f"{'PASS' if ok else 'FAIL'} nonlocal: errors " + ", ".join(f"{e:.3e}" for e in errs))

    if check in ("pde-residual", "all"):
        A = _base(p)
        k0 = np.array(p["k"])
        deltas = np.array(p["deltas"]) * np.linalg.norm(k0)
        reps = [audit.pde_residual_check(A, k0, d, p["t"], p["nu"]) for d in deltas]
        res = [r.residual_norm for r in reps]
        order = audit.convergence_order(deltas, res) if all(r > 0 for r in res) else float("nan")
        ok = bool(all(r == 0 for r in res) or abs(order - 2.0) <= 0.3)
        path = out / "pde_residual.csv"
        write_csv(path, ("delta", "residual_norm", "reference_norm"),
                  ((r.stencil_delta, r.residual_norm, r.reference_norm) for r in reps))
        files.append(path)
        results["pde-residual"] = {"passed": ok, "order": order, "reports": [r.to_dict() for r in reps]}
        print(f"{'PASS' if ok else 'FAIL'} pde-residual: order {order:.4f}")

    files.append(_write_json(out / "audit_report.json", results))
    return files, EXIT_OK if all(r["passed"] for r in results.values()) else EXIT_VERIFY


def run_verify(p: dict, out: Path, suite: str) -> tuple[list[Path], int]:
    report = verify.run_suite(suite, seed=p["seed"])
    for g in report["criteria"]:
        for c in g["checks"]:
            print(verify.Check(**c).line())
    print(f"{'PASS' if report['passed'] else 'FAIL'} suite {suite} ({report['wall_time_s']:.1f} s)")
    if not report["passed"]:
        print("failing: " + "; ".join(report["failing"]), file=sys.stderr)
    path = _write_json(out / f"verify_{suite}.json", report)
    return [path], EXIT_OK if report["passed"] else EXIT_VERIFY


RUNNERS = {"mode": run_mode, "floquet": run_floquet, "ds": run_ds, "audit": run_audit}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command
    start = time.perf_counter()
    try:
        params = resolve_parameters(command, args)
        out = Path(args.out or os.environ.get(OUTPUT_ENV) or "kelvinds-output")
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {out} not writable: {exc}") from exc
        if command == "verify":
            files, status = run_verify(params, out, args.suite)
        else:
            files, status = RUNNERS[command](params, out)
    except (ConfigError, ValidationError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, DomainError, ConsistencyError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    manifest = {
        "schema_version": 1,
        "tool": "kelvinds",
        "tool_version": __version__,
        "command": command,
        "suite": getattr(args, "suite", None),
        "parameters": _jsonable(params),
        "outputs": sorted(str(f.relative_to(out)) for f in files),
        "exit_status": status,
        "wall_time_s": time.perf_counter() - start,
        "environment": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
    }
    _write_json(out / "manifest.json", manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())
