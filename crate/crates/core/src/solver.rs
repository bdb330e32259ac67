//! Stationary old-task density for general protocols.
//!
//! Dividing the stationary equation by the survival factor turns it into a
//! second-kind Fredholm problem (I - A) r1 = f with kernel
//! K(x,y) = alpha(x,y) g(x), where
//!
//! ```text
//! alpha(x,y) = 1 - v(x,y) - c1,   g(x) = r(x) / (1 - q(x)),   f = c1 g.
//! ```
//!
//! Because f is proportional to g, the Neumann series collapses to
//! r1 = c1 g (1 + H1 + H2 + ...) with H_n built by iterating the companion
//! kernel K~(x,y) = alpha(x,y) g(y) on the constant function — the iterated
//! kernels are never materialized. The Hilbert-Schmidt norm of K~ certifies
//! convergence when it is below one; outside that region the series is
//! refused (convergence there is unknown, not disproven) and the direct
//! grid solve remains available as an uncertified cross-check route.

use crate::dist::{GridDensity, PriorityDistribution};
use crate::error::{Error, Result};
use crate::protocol::{q, Discontinuity, SelectionProtocol};
use crate::quad::QuadratureGrid;
use nalgebra::{DMatrix, DVector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_TERMS: usize = 200;

/// The kernel machinery tabulated on a quadrature grid.
#[derive(Debug, Clone)]
pub struct KernelAssembly {
    grid: QuadratureGrid,
    protocol: SelectionProtocol,
    dist: PriorityDistribution,
    c1_split: f64,
    /// q at the grid nodes (the g denominator is 1 - q).
    q_vals: DVector<f64>,
    g: DVector<f64>,
    f: DVector<f64>,
    alpha: DMatrix<f64>,
    k_tilde: DMatrix<f64>,
    /// alpha changing sign is permitted (the series may still converge) but
    /// recorded, since the sign pattern is what the default split avoids.
    alpha_changes_sign: bool,
}

impl KernelAssembly {
    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn c1_split(&self) -> f64 {
        self.c1_split
    }

    pub fn g(&self) -> &[f64] {
        self.g.as_slice()
    }

    pub fn f(&self) -> &[f64] {
        self.f.as_slice()
    }

    pub fn q_vals(&self) -> &[f64] {
        self.q_vals.as_slice()
    }

    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.alpha[(i, j)]
    }

    pub fn alpha_changes_sign(&self) -> bool {
        self.alpha_changes_sign
    }

    pub fn protocol(&self) -> &SelectionProtocol {
        &self.protocol
    }

    pub fn dist(&self) -> &PriorityDistribution {
        &self.dist
    }
}

/// Tabulate alpha, g, K~ and f for `protocol` against `dist` on `grid`.
///
/// `c1_split` defaults to (1-p)/2 for the built-in mixed protocols (the
/// split that makes alpha = p*y/(x+y) for the proportional family) and to
/// 1 - max v on the grid for custom protocols. Diagonally discontinuous
/// protocols are rejected: their stationary law has a closed form handled by
/// the analytic module, and the quadrature here assumes a smooth kernel.
pub fn assemble(
    protocol: &SelectionProtocol,
    dist: &PriorityDistribution,
    grid: &QuadratureGrid,
    c1_split: Option<f64>,
) -> Result<KernelAssembly> {
    if protocol.discontinuity() == Discontinuity::Diagonal {
        return Err(Error::UnsupportedConfig(
            "diagonally discontinuous protocols are not assembled; \
             the coin-flip family has closed forms in the analytic module"
                .into(),
        ));
    }
    let n = grid.len();
    let nodes = grid.nodes();

    let c1 = match c1_split {
        Some(c1) => c1,
        None if protocol.p().is_finite() => (1.0 - protocol.p()) / 2.0,
        None => {
            let mut sup = 0.0f64;
            for &x in nodes {
                for &y in nodes {
                    sup = sup.max(protocol.v(x, y));
                }
            }
            1.0 - sup
        }
    };
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "splitting constant c1 = {c1} must lie in (0, 1)"
        )));
    }

    let mut q_vals = DVector::zeros(n);
    let mut g = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    for (i, &x) in nodes.iter().enumerate() {
        let qx = q(protocol, dist, x)?;
        let denom = 1.0 - qx;
        if denom <= 0.0 {
            return Err(Error::ContractViolation(format!(
                "survival denominator 1 - q({x}) = {denom} is not positive; \
                 the protocol violates the v <= sup_bound < 1 assumption"
            )));
        }
        q_vals[i] = qx;
        g[i] = dist.pdf(x) / denom;
        f[i] = c1 * g[i];
    }

    let mut alpha = DMatrix::zeros(n, n);
    let mut k_tilde = DMatrix::zeros(n, n);
    let mut saw_pos = false;
    let mut saw_neg = false;
    for i in 0..n {
        for j in 0..n {
            let a = 1.0 - protocol.v(nodes[i], nodes[j]) - c1;
            saw_pos |= a > 1e-14;
            saw_neg |= a < -1e-14;
            alpha[(i, j)] = a;
            k_tilde[(i, j)] = a * g[j];
        }
    }

    Ok(KernelAssembly {
        grid: grid.clone(),
        protocol: protocol.clone(),
        dist: dist.clone(),
        c1_split: c1,
        q_vals,
        g,
        f,
        alpha,
        k_tilde,
        alpha_changes_sign: saw_pos && saw_neg,
    })
}

/// Hilbert-Schmidt norm sqrt(int int K~^2) by tensor-product quadrature.
pub fn hs_norm(assembly: &KernelAssembly) -> f64 {
    let w = assembly.grid.weights();
    let n = assembly.grid.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let k = assembly.k_tilde[(i, j)];
            row += w[j] * k * k;
        }
        total += w[i] * row;
    }
    total.sqrt()
}

/// The computed stationary density with its convergence certificate.
#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub grid: QuadratureGrid,
    /// Raw series output; renormalize for plotting via [`normalized`](Self::normalized).
    pub r1: Vec<f64>,
    /// Number of H_n terms evaluated.
    pub n_terms: usize,
    pub hs_norm: f64,
    /// ||c1 g||_2 * hs^(n+1) / (1 - hs): certified size of the dropped tail.
    pub tail_bound: f64,
    /// sup-norm of r1 - A r1 - f on the grid (the fixed-point identity).
    pub residual: f64,
    pub normalized: bool,
    /// False when max_terms was reached before the tolerance.
    pub converged: bool,
}

impl NeumannSolution {
    pub fn mass(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.r1)
            .map(|(&w, &v)| w * v)
            .sum()
    }

    pub fn normalized(&self) -> NeumannSolution {
        let m = self.mass();
        NeumannSolution {
            r1: self.r1.iter().map(|v| v / m).collect(),
            normalized: true,
            ..self.clone()
        }
    }

    pub fn density(&self) -> GridDensity {
        GridDensity::new(self.grid.clone(), self.r1.clone())
            .expect("solution values match the grid")
    }
}

/// Sum the Neumann series r1 = c1 g (1 + H1 + H2 + ...), iterating
/// h_{n+1} = A~ h_n from h_0 = 1 by weighted matrix-vector products.
///
/// Refuses without a certificate when the Hilbert-Schmidt norm is >= 1.
/// Stops when ||c1 g h_n||_1 < tol or after `max_terms` terms (the latter
/// returns `converged = false` with the tail bound still filled in).
pub fn solve(assembly: &KernelAssembly, tol: f64, max_terms: usize) -> Result<NeumannSolution> {
    let hs = hs_norm(assembly);
    if hs >= 1.0 {
        return Err(Error::Divergence { hs_norm: hs });
    }
    let n = assembly.grid.len();
    let w = DVector::from_column_slice(assembly.grid.weights());

    let mut h = DVector::from_element(n, 1.0);
    let mut series = DVector::from_element(n, 1.0);
    let mut n_terms = 0;
    let mut converged = false;
    while n_terms < max_terms {
        h = &assembly.k_tilde * h.component_mul(&w);
        n_terms += 1;
        series += &h;
        let l1: f64 = (0..n)
            .map(|i| w[i] * (assembly.c1_split * assembly.g[i] * h[i]).abs())
            .sum();
        if l1 < tol {
            converged = true;
            break;
        }
    }

    let r1: Vec<f64> = (0..n)
        .map(|i| assembly.c1_split * assembly.g[i] * series[i])
        .collect();

    // fixed-point residual against the original kernel K(x,y) = alpha(x,y) g(x)
    let residual = fixed_point_residual(assembly, &r1);

    let cg_l2 = assembly
        .grid
        .norm_l2(&(0..n).map(|i| assembly.c1_split * assembly.g[i]).collect::<Vec<_>>());
    let tail_bound = cg_l2 * hs.powi(n_terms as i32 + 1) / (1.0 - hs);

    Ok(NeumannSolution {
        grid: assembly.grid.clone(),
        r1,
        n_terms,
        hs_norm: hs,
        tail_bound,
        residual,
        normalized: false,
        converged,
    })
}

/// sup-norm of r1 - A r1 - f on the grid.
pub fn fixed_point_residual(assembly: &KernelAssembly, r1: &[f64]) -> f64 {
    let n = assembly.grid.len();
    let w = assembly.grid.weights();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut a_r1 = 0.0;
        for j in 0..n {
            a_r1 += w[j] * assembly.alpha[(i, j)] * assembly.g[i] * r1[j];
        }
        worst = worst.max((r1[i] - a_r1 - assembly.f[i]).abs());
    }
    worst
}

/// Direct grid solve of (I - A) r1 = f by LU decomposition: the cross-check
/// route for the series, and the only estimator where the Hilbert-Schmidt
/// certificate is unavailable. Carries no convergence certificate.
pub fn solve_direct(assembly: &KernelAssembly) -> Result<Vec<f64>> {
    let n = assembly.grid.len();
    let w = assembly.grid.weights();
    let mut system = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a_ij = w[j] * assembly.alpha[(i, j)] * assembly.g[i];
            system[(i, j)] = if i == j { 1.0 - a_ij } else { -a_ij };
        }
    }
    let f = DVector::from_column_slice(assembly.f.as_slice());
    system
        .lu()
        .solve(&f)
        .map(|v| v.as_slice().to_vec())
        .ok_or_else(|| Error::LinearSolve("I - A is singular on this grid".into()))
}

/// Evaluate a grid solution at an arbitrary point through the equation
/// itself (Nystrom extension): r1(x) = g(x) sum_j w_j alpha(x, y_j) r1_j
/// + c1 g(x). Spectrally accurate for smooth kernels.
pub fn nystrom_eval(assembly: &KernelAssembly, r1: &[f64], x: f64) -> Result<f64> {
    let qx = q(&assembly.protocol, &assembly.dist, x)?;
    let gx = assembly.dist.pdf(x) / (1.0 - qx);
    let mut acc = 0.0;
    for ((&y, &w), &v) in assembly
        .grid
        .nodes()
        .iter()
        .zip(assembly.grid.weights())
        .zip(r1)
    {
        acc += w * (1.0 - assembly.protocol.v(x, y) - assembly.c1_split) * v;
    }
    Ok(gx * acc + assembly.c1_split * gx)
}

/// CDF of a (normalized) grid solution on a fine uniform table, built from
/// the Nystrom extension; linear interpolation between table points.
#[derive(Debug, Clone)]
pub struct SolutionCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl SolutionCdf {
    pub fn build(assembly: &KernelAssembly, r1: &[f64], resolution: usize) -> Result<SolutionCdf> {
        let n = resolution.max(16);
        let (lo, hi) = (assembly.grid.lo(), assembly.grid.hi());
        let xs: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let dens: Vec<f64> = xs
            .iter()
            .map(|&x| nystrom_eval(assembly, r1, x).map(|v| v.max(0.0)))
            .collect::<Result<_>>()?;
        let mut cdf = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[xs.len() - 1];
        for v in &mut cdf {
            *v /= total;
        }
        Ok(SolutionCdf { xs, cdf })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let i = match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => return self.cdf[i],
            Err(i) => i - 1,
        };
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }
}

/// One cell of the convergence-region scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub p: f64,
    pub c: f64,
    pub hs_norm: f64,
    /// True when the Hilbert-Schmidt certificate applies. False means
    /// unknown, not divergent.
    pub converges: bool,
}

/// Map the Hilbert-Schmidt norm of the proportional protocol on
/// Uniform(c, 1) over a (p, c) grid, with the default split c1 = (1-p)/2.
/// Rows iterate c outer, p inner, both in the given order.
pub fn scan_region(c_values: &[f64], p_values: &[f64], nodes: usize) -> Result<Vec<ScanPoint>> {
    let mut out = Vec::with_capacity(c_values.len() * p_values.len());
    for &c in c_values {
        if !(0.0 < c && c < 1.0) {
            return Err(Error::InvalidParameter(format!("c = {c} must lie in (0, 1)")));
        }
        let dist = PriorityDistribution::uniform(c, 1.0)?;
        let grid = QuadratureGrid::with_nodes(c, 1.0, nodes);
        for &p in p_values {
            if !(0.0 < p && p < 1.0) {
                return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1)")));
            }
            let protocol = SelectionProtocol::proportional(p, c)?;
            let assembly = assemble(&protocol, &dist, &grid, None)?;
            let hs = hs_norm(&assembly);
            out.push(ScanPoint {
                p,
                c,
                hs_norm: hs,
                converges: hs < 1.0,
            });
        }
    }
    Ok(out)
}

/// Closed-form q for the proportional protocol on Uniform(c, 1):
/// (1+p)/2 - p x/(1-c) ln((1+x)/(c+x)).
pub fn proportional_q_closed(p: f64, c: f64, x: f64) -> f64 {
    (1.0 + p) / 2.0 - p * x / (1.0 - c) * ((1.0 + x) / (c + x)).ln()
}

/// Its derivative in x.
pub fn proportional_q_prime(p: f64, c: f64, x: f64) -> f64 {
    let log_term = ((1.0 + x) / (c + x)).ln();
    -p / (1.0 - c) * (log_term + x * (1.0 / (1.0 + x) - 1.0 / (c + x)))
}

/// Closed-form envelope for the waiting-time pmf of the proportional
/// protocol on Uniform(c, 1), k >= 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauBounds {
    pub lower: f64,
    pub upper: f64,
    /// Cutoff scale -1/ln q(c): the 1/k regime is exponentially damped
    /// beyond it.
    pub k0: f64,
}

/// Constant-times-B_k bounds on P(tau = k) with
/// B_k = (q(c)^(k-1) - q(1)^(k-1)) / (k-1).
///
/// The envelope constants bound L(x) = q1(x)(1-q(x)) / ((1-c)(-q'(x)))
/// pointwise using the endpoint extremes of each factor: q1 >= (1-p)/2 + pc,
/// 1-q >= 1-q(c), and -1/q' in [-1/q'(c), -1/q'(1)] — the lower constant
/// takes -1/q'(c) (the minimum) and the upper takes -1/q'(1) (the maximum).
pub fn tau_bounds(p: f64, c: f64, k: u32) -> Result<TauBounds> {
    if !(0.0 < p && p < 1.0) || !(0.0 < c && c < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "(p, c) = ({p}, {c}) must lie in (0, 1) x (0, 1)"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidParameter(
            "the envelope is derived for k > 1 only".into(),
        ));
    }
    let qc = proportional_q_closed(p, c, c);
    let q1v = proportional_q_closed(p, c, 1.0);
    let qp_c = proportional_q_prime(p, c, c);
    let qp_1 = proportional_q_prime(p, c, 1.0);
    // closed-form floor for q1(1): (1-p)/2 + p c
    let q1_floor = (1.0 - p) / 2.0 + p * c;
    let m = -q1_floor * (1.0 - qc) / ((1.0 - c) * qp_c);
    let big_m = -1.0 / ((1.0 - c) * qp_1);
    let b_k = (qc.powi(k as i32 - 1) - q1v.powi(k as i32 - 1)) / (k - 1) as f64;
    Ok(TauBounds {
        lower: m * b_k,
        upper: big_m * b_k,
        k0: -1.0 / qc.ln(),
    })
}
