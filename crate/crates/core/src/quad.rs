//! Composite Gauss-Legendre quadrature.
//!
//! Nodes and weights come from Newton iteration on the Legendre polynomial
//! recurrence. A single panel of n nodes integrates polynomials of degree
//! 2n-1 exactly; smooth integrands converge spectrally. Integrands with a
//! known interior discontinuity are handled by splitting the domain first
//! (see [`integrate_split`]).

/// P_n(x) and P'_n(x) by the Bonnet recurrence.
fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes and weights of an n-point rule on [-1, 1].
fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots are symmetric; solve the lower half and mirror.
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_eval(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        if n % 2 == 1 && i == n / 2 {
            x = 0.0;
        }
        // derivative at the converged root, for full weight precision
        let (_, dp) = legendre_eval(n, x);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed quadrature grid on an interval: strictly increasing nodes with
/// positive weights summing to the interval length.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Single-panel Gauss-Legendre rule with `n` nodes on [lo, hi].
    pub fn gauss_legendre(lo: f64, hi: f64, n: usize) -> Self {
        Self::composite_gauss_legendre(lo, hi, 1, n)
    }

    /// `panels` equal panels of `per_panel` Gauss-Legendre nodes each.
    pub fn composite_gauss_legendre(lo: f64, hi: f64, panels: usize, per_panel: usize) -> Self {
        assert!(hi > lo, "empty interval");
        assert!(panels >= 1 && per_panel >= 1);
        let (xs, ws) = legendre_rule(per_panel);
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        let h = (hi - lo) / panels as f64;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            let mid = a + 0.5 * h;
            for (&x, &w) in xs.iter().zip(&ws) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        debug_assert!(nodes.windows(2).all(|p| p[0] < p[1]));
        QuadratureGrid { lo, hi, nodes, weights }
    }

    /// Default discretization used by the solver and the conditional
    /// selection probabilities: 4 panels x 64 nodes = 256 nodes.
    pub fn default_grid(lo: f64, hi: f64) -> Self {
        Self::composite_gauss_legendre(lo, hi, 4, 64)
    }

    /// Like [`default_grid`](Self::default_grid) but with roughly `n` nodes
    /// spread over 4 panels.
    pub fn with_nodes(lo: f64, hi: f64, n: usize) -> Self {
        let per_panel = n.div_ceil(4).max(1);
        Self::composite_gauss_legendre(lo, hi, 4, per_panel)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Quadrature L1 norm of node values.
    pub fn norm_l1(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(&w, &v)| w * v.abs())
            .sum()
    }

    /// Quadrature L2 norm of node values.
    pub fn norm_l2(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(&w, &v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Integrate a smooth function with the default composite rule.
pub fn integrate_smooth<F: Fn(f64) -> f64>(lo: f64, hi: f64, f: F) -> f64 {
    QuadratureGrid::default_grid(lo, hi).integrate(f)
}

/// Integrate a function with a single jump at `split`, by integrating each
/// smooth piece with its own composite rule. `split` outside (lo, hi)
/// degenerates to the plain rule.
pub fn integrate_split<F: Fn(f64) -> f64>(lo: f64, hi: f64, split: f64, f: F) -> f64 {
    if split <= lo || split >= hi {
        return integrate_smooth(lo, hi, f);
    }
    QuadratureGrid::composite_gauss_legendre(lo, split, 2, 64).integrate(&f)
        + QuadratureGrid::composite_gauss_legendre(split, hi, 2, 64).integrate(&f)
}
