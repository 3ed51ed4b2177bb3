"""Smoke test for the Python bindings.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/landau_spectral_py-*.whl
"""

import math
import os
import tempfile

import landau_spectral_py as ls


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    if not ok:
        raise SystemExit(1)


def main():
    g = ls.Grid(16, 8.0)
    check("grid", g.n == 16 and math.isclose(g.spacing, 1.0) and len(g.coords()) == 16)

    m = g.maxwellian()
    alias = 6.0 * math.exp(-2.0 * math.pi**2)
    check("maxwellian mass", abs(m.integral() - 1.0 - alias) < 1e-12, f"{m.integral() - 1.0:.3e} vs {alias:.3e}")
    check("field shape", m.shape == (16, 16, 16) and len(m) == 16**3)

    f = g.band_limited(seed=3)
    again = g.field(f.values())
    check("field round trip", again.values() == f.values())

    r = ls.identity_residuals(g, f)
    check("bessel inverse", r["bessel_inverse"] <= 1e-13, f"{r['bessel_inverse']:.2e}")
    check("trace", r["trace"] <= 1e-10, f"{r['trace']:.2e}")

    g32 = ls.Grid(32, 8.0)
    c = ls.coercivity(g32, g32.maxwellian())
    check("coercivity", c["c0_hat"] > 0.0, f"c0_hat {c['c0_hat']:.4e}")

    a = g32.gaussian([0.0, 0.0, 0.0], [1.6, 1.4, 1.2])
    t, end, steps = ls.solve(g32, a, 0.05)
    d0 = ls.diagnostics(g32, a)
    d1 = ls.diagnostics(g32, end, time=t)
    check("solve", t == 0.05 and steps > 0, f"{steps} steps")
    check("mass conserved", abs(d1["mass"] - d0["mass"]) <= 1e-10, f"{abs(d1['mass'] - d0['mass']):.2e}")
    check("entropy decreases", d1["entropy"] <= d0["entropy"] + 1e-8)

    b = g.gaussian([0.0, 0.0, 0.0], [1.6, 1.4, 1.2])
    full, _ = ls.w_equation_residual(g, b, b)
    check("w equation for equal inputs", full == 0.0)
    check("m_diff of equal inputs", ls.m_diff_norm(g, m, m) == 0.0)

    res = ls.contraction(g, m, [0.0], 0.05)
    check("contraction eps 0", res["sup_mw"] == [0.0])

    try:
        ls.solve(g, m, 0.05, scheme="leapfrog")
        check("bad scheme rejected", False)
    except ValueError:
        check("bad scheme rejected", True)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.lcf")
        ls.write_snapshot(path, m, 0.5)
        grid, time, back = ls.read_snapshot(path)
        check("snapshot", grid.n == 16 and time == 0.5 and back.values() == m.values())

        cfg = f'output_dir = "{tmp}/out"\n[grid]\nn = 16\n[experiment]\nkind = "stability"\nT = 0.05\neps_list = [0.0]\n'
        code, report, files = ls.run_config(cfg)
        check("run_config", code == 0 and len(files) >= 3, f"exit {code}")
        try:
            ls.run_config("[grid]\nn = 15\n")
            check("config error", False)
        except ValueError as e:
            check("config error", "line 2" in str(e), str(e))

    print("all checks passed")


if __name__ == "__main__":
    main()
