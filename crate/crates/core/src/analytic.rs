//! Closed forms for the coin-flip protocol and the general waiting-time pmf.
//!
//! The stationary old-task law for the coin-flip protocol at L = 2 is the
//! minimum of a geometric number of arrivals, which sums to
//!
//! ```text
//! R1(x) = (1+p) R(x) / (1 - p + 2 p R(x))
//! ```
//!
//! (the direct evaluation of the total-probability series; an often-quoted
//! variant with a (1+p)/2 prefactor does not normalize to 1 at the top of
//! the support and is rejected by the sampler and fixed-point tests here).

use crate::dist::{GridDensity, PriorityDistribution};
use crate::error::{Error, Result};
use crate::protocol::{q, q1, SelectionProtocol};
use crate::quad::QuadratureGrid;

fn check_p_sub_one(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        if p == 1.0 {
            return Err(Error::DegenerateStationary);
        }
        return Err(Error::InvalidParameter(format!("p = {p} must lie in [0, 1)")));
    }
    Ok(())
}

/// Stationary CDF of the old task's priority, coin-flip protocol, L = 2.
pub fn barabasi_stationary_cdf(p: f64, dist: &PriorityDistribution, x: f64) -> Result<f64> {
    check_p_sub_one(p)?;
    dist.check_support(x)?;
    let r = dist.cdf(x);
    Ok((1.0 + p) * r / (1.0 - p + 2.0 * p * r))
}

/// Stationary density of the old task's priority, coin-flip protocol, L = 2.
pub fn barabasi_stationary_density(p: f64, dist: &PriorityDistribution, x: f64) -> Result<f64> {
    check_p_sub_one(p)?;
    dist.check_support(x)?;
    let r = dist.cdf(x);
    let denom = 1.0 - p + 2.0 * p * r;
    Ok((1.0 - p * p) * dist.pdf(x) / (denom * denom))
}

/// Waiting-time pmf of the coin-flip protocol at L = 2, Uniform(0,1)
/// arrivals, in closed form.
///
/// p = 0 returns 2^-k exactly (uniform selection is geometric(1/2)); p = 1
/// is the record regime where the pmf collapses onto k = 1.
pub fn barabasi_tau_pmf(p: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("waiting time k starts at 1".into()));
    }
    if p == 1.0 {
        return Err(Error::RecordRegime);
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in [0, 1]")));
    }
    if p == 0.0 {
        return Ok(0.5f64.powi(k as i32));
    }
    let a = (1.0 + p) / 2.0;
    let b = (1.0 - p) / 2.0;
    if k == 1 {
        // ln((1+p)/(1-p)) via ln_1p for stability at small p
        let log_ratio = p.ln_1p() - (-p).ln_1p();
        Ok(1.0 - (1.0 - p * p) / (4.0 * p) * log_ratio)
    } else {
        let m = (k - 1) as i32;
        Ok((1.0 - p * p) / (4.0 * p) * (a.powi(m) - b.powi(m)) / m as f64)
    }
}

/// Expected waiting time of the coin-flip protocol at L = 2, summed in
/// closed form with the analytic geometric tail: equals 2 for every p < 1.
pub fn expected_tau_barabasi(p: f64) -> Result<f64> {
    if p == 1.0 {
        return Err(Error::InfiniteMean);
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in [0, 1]")));
    }
    if p == 0.0 {
        return Ok(2.0); // sum k 2^-k
    }
    let a = (1.0 + p) / 2.0;
    let b = (1.0 - p) / 2.0;
    // sum_{k>=2} k x^(k-1)/(k-1) = x/(1-x) - ln(1-x); note 1-a = b.
    let tail = a / b - b / a + (a / b).ln();
    Ok(barabasi_tau_pmf(p, 1)? + (1.0 - p * p) / (4.0 * p) * tail)
}

/// Waiting-time pmf for a general protocol via quadrature:
/// P(tau = 1) integrates 1 - q1, P(tau = k) integrates
/// q1(x) (1 - q(x)) q(x)^(k-2), both against the arrival law.
pub fn tau_pmf_general(
    protocol: &SelectionProtocol,
    dist: &PriorityDistribution,
    r1: &GridDensity,
    k: u32,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("waiting time k starts at 1".into()));
    }
    r1.check_density(1e-6)?;
    let (lo, hi) = dist.support();
    let grid = QuadratureGrid::default_grid(lo, hi);
    let mut total = 0.0;
    for (&x, &w) in grid.nodes().iter().zip(grid.weights()) {
        let q1x = q1(protocol, r1, x)?;
        let term = if k == 1 {
            1.0 - q1x
        } else {
            let qx = q(protocol, dist, x)?;
            q1x * (1.0 - qx) * qx.powi(k as i32 - 2)
        };
        total += w * term * dist.pdf(x);
    }
    Ok(total)
}

/// All pmf values 1..=k_max in one pass (q and q1 evaluated once per node).
pub fn tau_pmf_general_upto(
    protocol: &SelectionProtocol,
    dist: &PriorityDistribution,
    r1: &GridDensity,
    k_max: u32,
) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("waiting time k starts at 1".into()));
    }
    r1.check_density(1e-6)?;
    let (lo, hi) = dist.support();
    let grid = QuadratureGrid::default_grid(lo, hi);
    let nodes = grid.nodes();
    let weights = grid.weights();
    let q1s: Vec<f64> = nodes
        .iter()
        .map(|&x| q1(protocol, r1, x))
        .collect::<Result<_>>()?;
    let qs: Vec<f64> = nodes
        .iter()
        .map(|&x| q(protocol, dist, x))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(k_max as usize);
    let mut powers = vec![1.0f64; nodes.len()]; // q^(k-2)
    for k in 1..=k_max {
        let mut total = 0.0;
        for i in 0..nodes.len() {
            let term = if k == 1 {
                1.0 - q1s[i]
            } else {
                q1s[i] * (1.0 - qs[i]) * powers[i]
            };
            total += weights[i] * term * dist.pdf(nodes[i]);
        }
        if k >= 2 {
            for i in 0..nodes.len() {
                powers[i] *= qs[i];
            }
        }
        out.push(total);
    }
    Ok(out)
}

/// Expected waiting time for a general protocol: the first `direct_terms`
/// pmf values summed directly, the rest completed with the analytic
/// geometric tail sum_{k>K} k q^(k-2) = q^(K-1) (K+1-Kq)/(1-q)^2 under the
/// integral. Requires sup q < 1 on the grid.
pub fn expected_tau_general(
    protocol: &SelectionProtocol,
    dist: &PriorityDistribution,
    r1: &GridDensity,
    direct_terms: u32,
) -> Result<f64> {
    let kd = direct_terms.max(1);
    r1.check_density(1e-6)?;
    let (lo, hi) = dist.support();
    let grid = QuadratureGrid::default_grid(lo, hi);
    let qs: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| q(protocol, dist, x))
        .collect::<Result<_>>()?;
    if qs.iter().any(|&v| v >= 1.0) {
        return Err(Error::InfiniteMean);
    }
    let pmf = tau_pmf_general_upto(protocol, dist, r1, kd)?;
    let mut total: f64 = pmf
        .iter()
        .enumerate()
        .map(|(i, &v)| (i + 1) as f64 * v)
        .sum();
    // analytic tail of sum_{k>K} k * q1 (1-q) q^(k-2) under the integral
    let kf = kd as f64;
    for (i, (&x, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
        let qx = qs[i];
        let q1x = q1(protocol, r1, x)?;
        let tail = qx.powi(kd as i32 - 1) * (kf + 1.0 - kf * qx) / ((1.0 - qx) * (1.0 - qx));
        total += w * dist.pdf(x) * q1x * (1.0 - qx) * tail;
    }
    Ok(total)
}

/// The exact stationary old-task density for the coin-flip protocol sampled
/// onto a grid, convenient as the r1 input of the general-pmf routines.
pub fn barabasi_stationary_grid_density(
    p: f64,
    dist: &PriorityDistribution,
    grid: QuadratureGrid,
) -> Result<GridDensity> {
    check_p_sub_one(p)?;
    let d = dist.clone();
    Ok(GridDensity::from_function(grid, move |x| {
        barabasi_stationary_density(p, &d, x).unwrap_or(0.0)
    }))
}
