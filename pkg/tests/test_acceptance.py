"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` to see the lines
inline; they are also collected into the terminal summary of any pytest run.
"""

import json
import time

import pytest

from kelvinds import verify
from kelvinds.cli import main

RESULTS: list[str] = []


def _record(label, passed, detail=""):
    line = f"{'PASS' if passed else 'FAIL'} criterion {label}" + (f": {detail}" if detail else "")
    RESULTS.append(line)
    print(line)
    return passed


@pytest.mark.parametrize("key", sorted(verify.CRITERIA))
def test_criterion(key):
    title, checks, extra = verify.run_criterion(key)
    for c in checks:
        print("   ", c.line())
    failing = [c.name for c in checks if not c.passed]
    detail = title if not failing else f"{title} (failing: {'; '.join(failing)})"
    if extra is not None:
        detail += " " + json.dumps({k: v for k, v in extra.items() if k.endswith("deviation")})
    assert _record(f"{key:>2}", not failing, detail), failing


def _run_twice(tmp_path, argv, files):
    blobs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        if main(argv + ["--out", str(out)]) != 0:
            return False
        blobs.append({f: (out / f).read_bytes() for f in files})
    return blobs[0] == blobs[1]


def test_criterion_10_determinism_and_budget(tmp_path):
    ensemble = tmp_path / "ensemble.json"
    ensemble.write_text(json.dumps({"point_symmetric": True, "modes": [
        {"k": [1, 0, 0], "v_im": [0, 0.1, 0.05]},
        {"k": [0, 2, 1], "v_im": [0.1, 0.02, -0.04]},
        {"k": [1, 1, 1], "v_im": [0.05, -0.08, 0.03]},
    ]}))
    same = all([
        _run_twice(tmp_path / "mode", ["mode", "--base", "shear:1", "--k", "0.2,1,0.5", "--v", "0.3,-0.1,0.08",
                                       "--nu", "0.01", "--t-end", "3"], ["trajectory.csv", "summary.json"]),
        _run_twice(tmp_path / "floq", ["floquet", "--base", "elliptic:1.5,1", "--scan", "8x8"], ["scan.csv"]),
        _run_twice(tmp_path / "ds", ["ds", "--ensemble", str(ensemble), "--closure", "ds", "--t-end", "0.5"],
                   ["mode_000.csv", "gradient.csv"]),
        _run_twice(tmp_path / "audit", ["audit", "--check", "zero-mode", "--seed", "11"], ["audit_report.json"]),
    ])
    start = time.perf_counter()
    status = main(["verify", "all", "--out", str(tmp_path / "verify")])
    elapsed = time.perf_counter() - start
    report = json.loads((tmp_path / "verify" / "verify_all.json").read_text())
    ok = same and status == 0 and report["passed"] and elapsed < 60.0
    detail = f"determinism (byte-identical={same}); verify all passed={report['passed']} in {elapsed:.1f} s (< 60 s)"
    assert _record("10", ok, detail)
