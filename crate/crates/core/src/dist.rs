//! Arrival-priority laws and densities tabulated on quadrature grids.

use crate::error::{Error, Result};
use crate::quad::QuadratureGrid;
use rand::Rng;

/// The law R(x)/r(x) of arriving task priorities on a bounded support.
///
/// Priorities are i.i.d. with an absolutely continuous, square-integrable
/// density. Built-ins cover the uniform family; arbitrary laws come in as
/// tabulated (x, pdf) pairs with linear interpolation.
#[derive(Debug, Clone)]
pub enum PriorityDistribution {
    Uniform { lo: f64, hi: f64 },
    Tabulated(TabulatedDensity),
}

impl PriorityDistribution {
    /// Uniform(lo, hi). The shifted family Uniform(c, 1) is the worked
    /// example for the proportional protocol.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "uniform support [{lo}, {hi}] is empty or not finite"
            )));
        }
        Ok(PriorityDistribution::Uniform { lo, hi })
    }

    /// Uniform(0, 1).
    pub fn standard_uniform() -> Self {
        PriorityDistribution::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn tabulated(xs: Vec<f64>, pdf: Vec<f64>) -> Result<Self> {
        TabulatedDensity::new(xs, pdf).map(PriorityDistribution::Tabulated)
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            PriorityDistribution::Uniform { lo, hi } => (*lo, *hi),
            PriorityDistribution::Tabulated(t) => (t.xs[0], *t.xs.last().unwrap()),
        }
    }

    pub fn support_lo(&self) -> f64 {
        self.support().0
    }

    pub fn support_hi(&self) -> f64 {
        self.support().1
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x >= lo && x <= hi
    }

    pub fn check_support(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            let (lo, hi) = self.support();
            Err(Error::OutsideSupport { value: x, lo, hi })
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            PriorityDistribution::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            PriorityDistribution::Tabulated(t) => t.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            PriorityDistribution::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            PriorityDistribution::Tabulated(t) => t.cdf(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PriorityDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            PriorityDistribution::Tabulated(t) => t.quantile(rng.random::<f64>()),
        }
    }

    /// Grid audit of the distribution contract: cdf pinned at the endpoints
    /// and nondecreasing, unit mass within 1e-9, and square-integrable pdf.
    pub fn validate(&self, grid_points: usize) -> Result<()> {
        let (lo, hi) = self.support();
        let eps = 1e-12 * (1.0 + hi.abs());
        if self.cdf(lo).abs() > 1e-9 || (self.cdf(hi) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensity(format!(
                "cdf endpoints {} / {} not pinned to 0 / 1",
                self.cdf(lo),
                self.cdf(hi)
            )));
        }
        let n = grid_points.max(2);
        let mut prev = self.cdf(lo);
        for i in 1..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let c = self.cdf(x);
            if c + eps < prev {
                return Err(Error::InvalidDensity(format!("cdf decreases near x = {x}")));
            }
            prev = c;
        }
        let grid = QuadratureGrid::default_grid(lo, hi);
        let mass = grid.integrate(|x| self.pdf(x));
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensity(format!(
                "pdf integrates to {mass}, expected 1 within 1e-9"
            )));
        }
        let sq = grid.integrate(|x| self.pdf(x).powi(2));
        if !sq.is_finite() {
            return Err(Error::InvalidDensity("pdf is not square-integrable".into()));
        }
        Ok(())
    }
}

/// A density given by (x, pdf) pairs, linearly interpolated between knots.
#[derive(Debug, Clone)]
pub struct TabulatedDensity {
    xs: Vec<f64>,
    pdf: Vec<f64>,
    cdf: Vec<f64>, // exact trapezoid cumulative at the knots
}

impl TabulatedDensity {
    pub fn new(xs: Vec<f64>, pdf: Vec<f64>) -> Result<Self> {
        if xs.len() != pdf.len() || xs.len() < 2 {
            return Err(Error::InvalidDensity(
                "tabulated density needs >= 2 (x, pdf) pairs of equal length".into(),
            ));
        }
        if xs.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidDensity("x knots must be strictly increasing".into()));
        }
        if pdf.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidDensity("pdf values must be finite and >= 0".into()));
        }
        let mut cdf = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..xs.len() {
            acc += 0.5 * (pdf[i] + pdf[i - 1]) * (xs[i] - xs[i - 1]);
            cdf.push(acc);
        }
        let mass = *cdf.last().unwrap();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensity(format!(
                "tabulated pdf integrates to {mass}, expected 1 within 1e-9"
            )));
        }
        Ok(TabulatedDensity { xs, pdf, cdf })
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > *self.xs.last().unwrap() {
            return 0.0;
        }
        let i = self.segment(x);
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.pdf[i] + t * (self.pdf[i + 1] - self.pdf[i])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let i = self.segment(x);
        let dx = x - self.xs[i];
        let p = self.pdf[i] + 0.5 * dx / (self.xs[i + 1] - self.xs[i]) * (self.pdf[i + 1] - self.pdf[i]);
        (self.cdf[i] + dx * p).clamp(0.0, 1.0)
    }

    /// Inverse cdf by segment search plus the quadratic within a segment.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = match self.cdf.binary_search_by(|v| v.partial_cmp(&u).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        };
        let need = u - self.cdf[i];
        let h = self.xs[i + 1] - self.xs[i];
        let a = self.pdf[i];
        let slope = (self.pdf[i + 1] - self.pdf[i]) / h;
        // solve a*dx + slope*dx^2/2 = need for dx in [0, h]
        let dx = if slope.abs() < 1e-14 * (a.abs() + 1.0) {
            if a > 0.0 {
                need / a
            } else {
                0.5 * h
            }
        } else {
            let disc = (a * a + 2.0 * slope * need).max(0.0);
            (disc.sqrt() - a) / slope
        };
        (self.xs[i] + dx.clamp(0.0, h)).min(*self.xs.last().unwrap())
    }
}

/// A density tabulated at the nodes of a quadrature grid, the working
/// representation for stationary old-task densities.
#[derive(Debug, Clone)]
pub struct GridDensity {
    grid: QuadratureGrid,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidDensity(format!(
                "{} values for a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridDensity { grid, values })
    }

    /// Sample a closed-form density onto a grid.
    pub fn from_function<F: Fn(f64) -> f64>(grid: QuadratureGrid, f: F) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        GridDensity { grid, values }
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| w * v)
            .sum()
    }

    /// Contract check for operations taking an old-task density: nonnegative
    /// node values and unit mass within `tol`.
    pub fn check_density(&self, tol: f64) -> Result<()> {
        if self.values.iter().any(|&v| !v.is_finite() || v < -1e-12) {
            return Err(Error::InvalidDensity(
                "density has negative or non-finite node values".into(),
            ));
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > tol {
            return Err(Error::InvalidDensity(format!(
                "density mass {mass} differs from 1 by more than {tol}"
            )));
        }
        Ok(())
    }

    pub fn normalized(&self) -> GridDensity {
        let m = self.mass();
        GridDensity {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v / m).collect(),
        }
    }

    /// Linear interpolation between grid nodes (constant beyond the outermost
    /// nodes, zero outside the support).
    pub fn interp(&self, x: f64) -> f64 {
        let nodes = self.grid.nodes();
        if x < self.grid.lo() || x > self.grid.hi() {
            return 0.0;
        }
        if x <= nodes[0] {
            return self.values[0];
        }
        if x >= nodes[nodes.len() - 1] {
            return self.values[nodes.len() - 1];
        }
        let i = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Integral of f(y) * density(y) over the support using the grid rule.
    pub fn integrate_against<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(self.grid.weights())
            .zip(&self.values)
            .map(|((&x, &w), &v)| w * f(x) * v)
            .sum()
    }

    /// Like [`integrate_against`](Self::integrate_against) for an `f` with a
    /// jump at `split`: each smooth piece is integrated by Gauss-Legendre
    /// panels against the interpolated density.
    pub fn integrate_against_split<F: Fn(f64) -> f64>(&self, split: f64, f: F) -> f64 {
        let (lo, hi) = (self.grid.lo(), self.grid.hi());
        if split <= lo || split >= hi {
            return self.integrate_against(f);
        }
        let piece = |a: f64, b: f64| {
            QuadratureGrid::composite_gauss_legendre(a, b, 4, 64)
                .integrate(|y| f(y) * self.interp(y))
        };
        piece(lo, split) + piece(split, hi)
    }

    /// Cumulative distribution at the grid nodes (trapezoid between nodes,
    /// constant extension to the support endpoints, normalized to 1).
    /// Used for goodness-of-fit against sample ECDFs.
    pub fn cdf_table(&self) -> Vec<(f64, f64)> {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        let mut out = Vec::with_capacity(n + 2);
        let mut acc = 0.0;
        out.push((self.grid.lo(), 0.0));
        acc += self.values[0] * (nodes[0] - self.grid.lo());
        out.push((nodes[0], acc));
        for i in 1..n {
            acc += 0.5 * (self.values[i] + self.values[i - 1]) * (nodes[i] - nodes[i - 1]);
            out.push((nodes[i], acc));
        }
        acc += self.values[n - 1] * (self.grid.hi() - nodes[n - 1]);
        out.push((self.grid.hi(), acc));
        let total = acc;
        for p in &mut out {
            p.1 = (p.1 / total).clamp(0.0, 1.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_validates() {
        PriorityDistribution::uniform(0.2, 1.0).unwrap().validate(100).unwrap();
        PriorityDistribution::standard_uniform().validate(100).unwrap();
    }

    #[test]
    fn uniform_rejects_empty_support() {
        assert!(PriorityDistribution::uniform(1.0, 0.2).is_err());
        assert!(PriorityDistribution::uniform(0.0, f64::NAN).is_err());
    }

    #[test]
    fn support_check() {
        let d = PriorityDistribution::uniform(0.2, 1.0).unwrap();
        assert!(d.check_support(0.2).is_ok());
        assert!(matches!(
            d.check_support(0.1),
            Err(Error::OutsideSupport { .. })
        ));
    }

    #[test]
    fn tabulated_matches_uniform() {
        let t = PriorityDistribution::tabulated(vec![0.0, 0.5, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        t.validate(100).unwrap();
        assert_abs_diff_eq!(t.cdf(0.25), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(t.pdf(0.7), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tabulated_rejects_unnormalized() {
        let r = PriorityDistribution::tabulated(vec![0.0, 1.0], vec![2.0, 2.0]);
        assert!(matches!(r, Err(Error::InvalidDensity(_))));
    }

    #[test]
    fn tabulated_triangular_quantile_roundtrip() {
        // triangular on [0,1]: pdf = 2x
        let xs: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let pdf: Vec<f64> = xs.iter().map(|&x| 2.0 * x).collect();
        let t = TabulatedDensity::new(xs, pdf).unwrap();
        for &u in &[0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            let x = t.quantile(u);
            assert_abs_diff_eq!(t.cdf(x), u, epsilon = 1e-6);
        }
    }

    #[test]
    fn tabulated_sampling_matches_cdf() {
        let xs: Vec<f64> = (0..=100).map(|i| 0.2 + 0.8 * i as f64 / 100.0).collect();
        let pdf: Vec<f64> = xs.iter().map(|_| 1.25).collect();
        let d = PriorityDistribution::tabulated(xs, pdf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut samples: Vec<f64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = crate::stats::ks_statistic(&samples, |x| d.cdf(x));
        assert!(ks < 0.015, "ks = {ks}");
    }

    #[test]
    fn grid_density_mass_and_interp() {
        let grid = QuadratureGrid::default_grid(0.0, 1.0);
        let d = GridDensity::from_function(grid, |_| 1.0);
        assert_abs_diff_eq!(d.mass(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.interp(0.31), 1.0, epsilon = 1e-12);
        d.check_density(1e-6).unwrap();
    }

    #[test]
    fn grid_density_rejects_negative() {
        let grid = QuadratureGrid::default_grid(0.0, 1.0);
        let mut vals = vec![1.0; grid.len()];
        vals[3] = -0.5;
        let d = GridDensity::new(grid, vals).unwrap();
        assert!(d.check_density(1e-6).is_err());
    }

    #[test]
    fn split_integration_against_density() {
        let grid = QuadratureGrid::composite_gauss_legendre(0.0, 1.0, 8, 32);
        let d = GridDensity::from_function(grid, |_| 1.0);
        let v = d.integrate_against_split(0.3, |y| if y < 0.3 { 1.0 } else { 0.0 });
        assert_abs_diff_eq!(v, 0.3, epsilon = 1e-9);
    }
}
