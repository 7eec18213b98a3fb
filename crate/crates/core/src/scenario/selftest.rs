//! Invariant suite over the built-in presets.

use crate::continuity::source_u;
use crate::error::Result;
use crate::grid::Grid;
use crate::propagator::{evolve, EvolutionSpec, Potential};
use crate::purity::{dcp, purity, purity_report};
use crate::scenario::presets::Preset;
use crate::scenario::run::{continuity_report, prepare, Prepared};

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        CheckLine { name: name.into(), passed, detail }
    }
}

fn prepared(preset: Preset) -> Result<Prepared> {
    let (n, length) = preset.grid();
    prepare(&preset.config(n, length, 1))
}

pub fn selftest() -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    for preset in Preset::ALL {
        let name = preset.name();
        let prep = prepared(preset)?;
        let r = purity_report(&prep.psi0)?;
        let d_schmidt = (r.pi_from_rho - r.pi_from_schmidt).abs();
        let d_density = (r.pi_from_rho - r.pi_from_density.re).abs();
        out.push(CheckLine::new(
            format!("{name}: purity routes agree"),
            d_schmidt <= 1e-10 && d_density <= 1e-9,
            format!("|rho - schmidt| = {d_schmidt:.2e}, |rho - density| = {d_density:.2e}"),
        ));
        out.push(CheckLine::new(
            format!("{name}: imaginary total vanishes"),
            r.imag_total.abs() <= 1e-11,
            format!("{:.2e}", r.imag_total),
        ));
        let c = continuity_report(&prep.psi0, &prep.potential, &prep.phys)?;
        out.push(CheckLine::new(
            format!("{name}: continuity residual at t = 0"),
            c.passes(1e-8),
            format!("relative {:.2e}", c.relative_max()),
        ));
    }

    for preset in [Preset::Product, Preset::DoubleGaussian] {
        let prep = prepared(preset)?;
        let p0 = purity(&prep.psi0);
        let mut worst: f64 = 0.0;
        evolve(&prep.psi0, &prep.potential, &prep.phys, &EvolutionSpec::new(1e-3, 200, 10)?, |_, _, psi| {
            worst = worst.max((purity(psi) - p0).abs());
            Ok(())
        })?;
        out.push(CheckLine::new(
            format!("{}: free evolution conserves purity", preset.name()),
            worst <= 1e-8,
            format!("max drift {worst:.2e} over 200 steps"),
        ));
    }

    let g = Grid::new(8, 6.0)?;
    let u = source_u(&Potential::bilinear(g, 0.5)?).to_dense()?;
    let c = g.coords();
    let mut antisym = true;
    let mut worst: f64 = 0.0;
    for ((i, j, bi, bj), &v) in u.indexed_iter() {
        antisym &= u[[bi, j, i, bj]] == -v && u[[i, bj, bi, j]] == -v && u[[bi, bj, i, j]] == v;
        worst = worst.max((v - 0.5 * (c[i] - c[bi]) * (c[j] - c[bj])).abs());
    }
    out.push(CheckLine::new("bilinear source: antisymmetry and closed form", antisym && worst <= 1e-14, format!("max error {worst:.2e}")));
    let sep = source_u(&Potential::separable(g, |x| x * x, |y| y.sin())?);
    out.push(CheckLine::new("separable source vanishes", sep.is_identically_zero(), String::new()));

    let value = dcp(2, 1)?;
    out.push(CheckLine::new("dimension comparison parameter is 2", value == 2.0, format!("{value}")));
    Ok(out)
}
