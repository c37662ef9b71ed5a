//! Phase-plane maps: the output-derivative field sampled over a grid plus
//! the rest-line curves, for either model family.

use crate::cmos::{trace_gamma2, CmosStModel};
use crate::error::Result;
use crate::model::StModel;
use rayon::prelude::*;
use serde::Serialize;

/// One grid point of a phase map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub v_in: f64,
    pub v_out: f64,
    pub dvout_dt: f64,
}

/// Grid of dV_out/dt values plus the γ curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseMap {
    pub grid: Vec<PhasePoint>,
    /// Named rest-line polylines: (label, points).
    pub curves: Vec<(String, Vec<(f64, f64)>)>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Sample the clipped-linear field over a grid and lay out the three γ
/// lines clipped to the window.
pub fn opamp_phase_map(
    model: &StModel,
    v_in_range: (f64, f64),
    v_out_range: (f64, f64),
    n_in: usize,
    n_out: usize,
) -> Result<PhaseMap> {
    model.validate()?;
    let g = model.derive_geometry()?;
    let vins = linspace(v_in_range.0, v_in_range.1, n_in);
    let vouts = linspace(v_out_range.0, v_out_range.1, n_out);
    let grid: Vec<PhasePoint> = vouts
        .par_iter()
        .flat_map_iter(|&v_out| {
            vins.iter().map(move |&v_in| (v_in, v_out)).collect::<Vec<_>>()
        })
        .map(|(v_in, v_out)| PhasePoint {
            v_in,
            v_out,
            dvout_dt: model.derivative_field(v_in, v_out),
        })
        .collect();

    let mut curves = Vec::new();
    curves.push((
        "gamma1".to_string(),
        vec![(v_in_range.0, g.gamma1), (v_in_range.1, g.gamma1)],
    ));
    curves.push((
        "gamma3".to_string(),
        vec![(v_in_range.0, g.gamma3), (v_in_range.1, g.gamma3)],
    ));
    // gamma2 spans the band where the rest point is inside [gamma3, gamma1]
    let n_g2 = 64;
    let mut g2 = Vec::with_capacity(n_g2);
    for v_out in linspace(g.gamma3, g.gamma1, n_g2) {
        let v_in = model.gamma2_inverse(v_out);
        if v_in >= v_in_range.0 && v_in <= v_in_range.1 {
            g2.push((v_in, v_out));
        }
    }
    curves.push(("gamma2".to_string(), g2));
    Ok(PhaseMap { grid, curves })
}

/// Sample the CMOS field over a grid and trace the equilibrium contour.
pub fn cmos_phase_map(model: &CmosStModel, n_in: usize, n_out: usize) -> Result<PhaseMap> {
    model.validate()?;
    let pad = 0.01 * model.vdd;
    let vins = linspace(pad, model.vdd - pad, n_in);
    let vouts = linspace(pad, model.vdd - pad, n_out);
    let grid: Vec<PhasePoint> = vouts
        .par_iter()
        .flat_map_iter(|&v_out| {
            vins.iter().map(move |&v_in| (v_in, v_out)).collect::<Vec<_>>()
        })
        .map(|(v_in, v_out)| {
            let dvout_dt = model.field(v_in, v_out).unwrap_or(f64::NAN);
            PhasePoint {
                v_in,
                v_out,
                dvout_dt,
            }
        })
        .collect();
    let contour = trace_gamma2(model, &vouts)?;
    Ok(PhaseMap {
        grid,
        curves: vec![("gamma2".to_string(), contour.points)],
    })
}
