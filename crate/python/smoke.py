"""Smoke test for the entcont Python extension.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml --release`,
then run `python python/smoke.py`.
"""

import math
import os
import tempfile

import entcont


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    grid = entcont.Grid(32, 16.0)
    assert grid.n == 32 and close(grid.spacing, 0.5, 1e-15)

    product = entcont.WaveFunction.product_gaussian(grid, sigma_x=0.8, sigma_y=0.8)
    assert close(product.norm(), 1.0, 1e-12)
    assert close(entcont.purity(product), 1.0, 1e-10)

    two = entcont.WaveFunction.schmidt_two_term(entcont.Grid(32, 14.0), lambda0=0.5)
    assert close(entcont.purity(two), 0.5, 1e-10)

    dg = entcont.WaveFunction.double_gaussian(entcont.Grid(32, 18.0), a=1.0, b=2.0)
    lam = entcont.schmidt_spectrum(dg)
    assert close(sum(l * l for l in lam), 0.8, 1e-4)
    report = entcont.purity_report(dg)
    assert close(report["pi_from_rho"], report["pi_from_schmidt"], 1e-10)
    assert report["dcp"] == 2.0
    assert abs(entcont.purity_integral(dg).imag) <= 1e-11

    free = entcont.residual_free(dg)
    assert free["relative_re"] <= 1e-8 and free["relative_im"] <= 1e-8 and free["resolved"]

    coupling = entcont.Potential.bilinear(grid, 0.5)
    assert coupling.kind == "bilinear"
    state, series = entcont.evolve(product, coupling, 1e-3, 200, record_every=50)
    purities = [p for _, p in series]
    assert len(series) == 5 and all(b < a for a, b in zip(purities, purities[1:]))
    inter = entcont.residual_interacting(state, coupling)
    assert inter["relative_re"] <= 1e-8 and inter["relative_im"] <= 1e-8
    lhs, rhs = entcont.purity_rate_check(state, coupling, 1e-3)
    assert rhs < 0 and abs(lhs - rhs) <= 1e-4 * abs(lhs)
    assert close(entcont.concurrence(purities[-1]), math.sqrt(2 * (1 - purities[-1])), 1e-15)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "psi.purf")
        state.dump(path)
        assert os.path.getsize(path) == 16 + 2 * 4 + 32 * 32 * 16
        back = entcont.WaveFunction.load(grid, path)
        assert back.values() == state.values()

    config = entcont.parse_config(
        "grid.n = 24\ngrid.length = 12.0\ninitial_state = product_gaussian\n"
        "potential = bilinear\nevolution.steps = 20\nevolution.record_every = 10\n"
    )
    assert config["grid"]["n"] == 24
    try:
        entcont.parse_config("grid.n = 33\n")
    except ValueError as e:
        assert "grid.n must be even" in str(e)
    else:
        raise AssertionError("invalid config accepted")

    summary = entcont.run_config(
        "grid.n = 24\ngrid.length = 12.0\ninitial_state = product_gaussian\n"
        "potential = bilinear\nevolution.steps = 20\nevolution.record_every = 10\n"
    )
    assert len(summary["rows"]) == 3 and summary["dcp"] == 2.0

    print("python smoke test: all checks passed")


if __name__ == "__main__":
    main()
