//! wasm-bindgen surface for the browser demo.
//!
//! Three interactive operations, each returning a JSON payload the page
//! plots on a canvas:
//!
//! - [`solve_density`]: stationary old-task density r1(x) for the
//!   proportional protocol at (p, c), with the Hilbert-Schmidt certificate;
//! - [`pmf_curve`]: waiting-time pmf (log-log ready) with the envelope
//!   bounds and cutoff k0 for the proportional protocol, or the closed form
//!   for the coin-flip protocol;
//! - [`region_scan`]: Hilbert-Schmidt norm over a (p, c) grid for the
//!   convergence-region heat map.
//!
//! The exported functions are thin wrappers over plain Rust functions so
//! the logic also compiles and tests on native targets.

use burstq::{analytic, solver, PriorityDistribution, QuadratureGrid, SelectionProtocol};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct DensityPayload {
    x: Vec<f64>,
    r1: Vec<f64>,
    hs_norm: f64,
    n_terms: usize,
    residual: f64,
    mass_raw: f64,
    converged: bool,
}

fn density_json(p: f64, c: f64, nodes: usize) -> burstq::Result<String> {
    let protocol = SelectionProtocol::proportional(p, c)?;
    let dist = PriorityDistribution::uniform(c, 1.0)?;
    let grid = QuadratureGrid::with_nodes(c, 1.0, nodes.clamp(32, 1024));
    let assembly = solver::assemble(&protocol, &dist, &grid, None)?;
    let solution = solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS)?;
    let mass = solution.mass();
    // plot-friendly resampling through the Nystrom extension
    let n_plot = 200;
    let mut x = Vec::with_capacity(n_plot + 1);
    let mut r1 = Vec::with_capacity(n_plot + 1);
    for i in 0..=n_plot {
        let xi = c + (1.0 - c) * i as f64 / n_plot as f64;
        x.push(xi);
        r1.push(solver::nystrom_eval(&assembly, &solution.r1, xi)? / mass);
    }
    let payload = DensityPayload {
        x,
        r1,
        hs_norm: solution.hs_norm,
        n_terms: solution.n_terms,
        residual: solution.residual,
        mass_raw: mass,
        converged: solution.converged,
    };
    Ok(serde_json::to_string(&payload).expect("payload serializes"))
}

#[derive(Serialize)]
struct PmfPayload {
    k: Vec<u32>,
    pmf: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    k0: f64,
}

fn pmf_json(protocol_name: &str, p: f64, c: f64, kmax: u32) -> burstq::Result<String> {
    let kmax = kmax.clamp(2, 500);
    let k: Vec<u32> = (1..=kmax).collect();
    let payload = match protocol_name {
        "barabasi" => {
            let pmf = k
                .iter()
                .map(|&k| analytic::barabasi_tau_pmf(p, k))
                .collect::<burstq::Result<Vec<f64>>>()?;
            PmfPayload {
                k,
                pmf,
                lower: Vec::new(),
                upper: Vec::new(),
                k0: f64::NAN,
            }
        }
        "proportional" => {
            let protocol = SelectionProtocol::proportional(p, c)?;
            let dist = PriorityDistribution::uniform(c, 1.0)?;
            let grid = QuadratureGrid::with_nodes(c, 1.0, 256);
            let assembly = solver::assemble(&protocol, &dist, &grid, None)?;
            let solution =
                solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS)?;
            let r1 = solution.normalized().density();
            let pmf = analytic::tau_pmf_general_upto(&protocol, &dist, &r1, kmax)?;
            let mut lower = vec![f64::NAN];
            let mut upper = vec![f64::NAN];
            let mut k0 = f64::NAN;
            for kk in 2..=kmax {
                let b = solver::tau_bounds(p, c, kk)?;
                lower.push(b.lower);
                upper.push(b.upper);
                k0 = b.k0;
            }
            PmfPayload { k, pmf, lower, upper, k0 }
        }
        other => {
            return Err(burstq::Error::InvalidParameter(format!(
                "unknown protocol '{other}'"
            )))
        }
    };
    Ok(serde_json::to_string(&payload).expect("payload serializes"))
}

#[derive(Serialize)]
struct RegionPayload {
    p: Vec<f64>,
    c: Vec<f64>,
    /// hs[i][j] = norm at (p[j], c[i]).
    hs: Vec<Vec<f64>>,
}

fn region_json(p_steps: usize, c_steps: usize, nodes: usize) -> burstq::Result<String> {
    let p_steps = p_steps.clamp(2, 80);
    let c_steps = c_steps.clamp(2, 80);
    let p_values: Vec<f64> = (0..p_steps)
        .map(|i| 0.02 + 0.96 * i as f64 / (p_steps - 1) as f64)
        .collect();
    let c_values: Vec<f64> = (0..c_steps)
        .map(|i| 0.02 + 0.76 * i as f64 / (c_steps - 1) as f64)
        .collect();
    let points = solver::scan_region(&c_values, &p_values, nodes.clamp(16, 256))?;
    let hs = points
        .chunks(p_values.len())
        .map(|row| row.iter().map(|pt| pt.hs_norm).collect())
        .collect();
    let payload = RegionPayload {
        p: p_values,
        c: c_values,
        hs,
    };
    Ok(serde_json::to_string(&payload).expect("payload serializes"))
}

#[wasm_bindgen]
pub fn solve_density(p: f64, c: f64, nodes: usize) -> Result<String, JsError> {
    density_json(p, c, nodes).map_err(into_js)
}

#[wasm_bindgen]
pub fn pmf_curve(protocol: &str, p: f64, c: f64, kmax: u32) -> Result<String, JsError> {
    pmf_json(protocol, p, c, kmax).map_err(into_js)
}

#[wasm_bindgen]
pub fn region_scan(p_steps: usize, c_steps: usize, nodes: usize) -> Result<String, JsError> {
    region_json(p_steps, c_steps, nodes).map_err(into_js)
}

fn into_js(e: burstq::Error) -> JsError {
    JsError::new(&e.to_string())
}
