"""Smoke test for the gmae Python extension.

Build and install first, e.g.
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/gmae-*.whl
then run
    python python/smoke_test.py
"""

import math
import os
import sys
import tempfile

import gmae


def check(cond, msg):
    if not cond:
        print(f"FAIL: {msg}")
        sys.exit(1)
    print(f"ok: {msg}")


def main():
    check(gmae.normalize("x*(y+z)") == "x*(y + z)", "normalize prints canonical form")
    check(gmae.evaluate(gmae.diff("p + q^2", "q"), {"q": 3.0}) == 6.0, "derivative evaluates")

    r = gmae.classify_alpha("p + q^2")
    check(r["involutive"] == "yes" and r["genericity"] == "generic", "p + q^2 is involutive and generic")
    check(r["derived_type"] == "(2,3)", "p + q^2 has derived type (2,3)")
    check(gmae.classify_alpha("(q - y)/x")["genericity"] == "nongeneric", "(q - y)/x is non-generic")
    check(gmae.classify_alpha("x")["involutive"] == "no", "alpha = x is not involutive")

    res = gmae.solve("q", "t^4", (-0.5, 0.5), (-0.5, 0.5), grid=(41, 41))
    check(len(res["points"]) == 41 * 41, "surface has one jet point per node")
    contact, psi = res["residuals"]
    check(contact < 1e-6 and psi < 1e-6, f"contact residuals {contact:.1e}, {psi:.1e}")
    tail = [p for p in res["singular"] if p["class"] == "Swallowtail"]
    check(any(math.hypot(p["s"], p["t"]) < 1e-6 for p in tail), "swallowtail located at the origin")

    with tempfile.TemporaryDirectory() as d:
        cfg = os.path.join(d, "run.cfg")
        with open(cfg, "w") as f:
            f.write("alpha = q\n")
        code, out, _ = gmae.run_cli(["classify", "--config", cfg])
        check(code == 0 and "derived type: (2,3)" in out, "cli classify runs in-process")

    print("smoke test passed")


if __name__ == "__main__":
    main()
