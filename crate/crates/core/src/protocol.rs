//! Selection protocols and the conditional selection probabilities q, q1.
//!
//! A protocol is the function v(x, y) = P(new executed | new priority x, old
//! priority y), nondecreasing in x, nonincreasing in y, together with a
//! certified constant `sup_bound >= sup v`. The mixing parameter p of the
//! built-ins interpolates between uniform selection (p = 0) and pure
//! priority selection (p = 1).

use crate::dist::{GridDensity, PriorityDistribution};
use crate::error::{Error, Result};
use crate::quad::{integrate_smooth, integrate_split};
use std::fmt;
use std::sync::Arc;

/// Where v jumps, if anywhere. The Barabasi comparison protocol jumps on the
/// diagonal x = y; integrals against it are split there before quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discontinuity {
    None,
    Diagonal,
}

#[derive(Clone)]
enum ProtocolKind {
    /// v = p*1{x>y} + (1-p)/2: coin-flip between highest-first and uniform.
    Barabasi,
    /// v = p*x/(x+y) + (1-p)/2: coin-flip between priority-proportional and
    /// uniform selection.
    Proportional,
    /// Always execute the highest priority (Barabasi with p = 1); only the
    /// record-process analysis applies.
    HighestFirst,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

/// A priority-based selection protocol for the two-task queue.
///
/// Immutable after construction and shareable across threads; `v` is pure.
#[derive(Clone)]
pub struct SelectionProtocol {
    kind: ProtocolKind,
    p: f64,
    sup_bound: f64,
    discontinuity: Discontinuity,
}

impl fmt::Debug for SelectionProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            ProtocolKind::Barabasi => "Barabasi",
            ProtocolKind::Proportional => "Proportional",
            ProtocolKind::HighestFirst => "HighestFirst",
            ProtocolKind::Custom(_) => "Custom",
        };
        f.debug_struct("SelectionProtocol")
            .field("kind", &name)
            .field("p", &self.p)
            .field("sup_bound", &self.sup_bound)
            .field("discontinuity", &self.discontinuity)
            .finish()
    }
}

impl SelectionProtocol {
    /// The coin-flip protocol: with probability p execute the higher
    /// priority task, otherwise pick uniformly. sup v = (1+p)/2.
    pub fn barabasi(p: f64) -> Result<Self> {
        check_unit("p", p)?;
        Ok(SelectionProtocol {
            kind: ProtocolKind::Barabasi,
            p,
            sup_bound: (1.0 + p) / 2.0,
            // v is constant 1/2 at p = 0
            discontinuity: if p == 0.0 {
                Discontinuity::None
            } else {
                Discontinuity::Diagonal
            },
        })
    }

    /// Priority-proportional selection mixed with uniform selection.
    /// `support_lo` is the lower end c of the priority support; on [c, 1]
    /// the supremum of v is p/(1+c) + (1-p)/2.
    pub fn proportional(p: f64, support_lo: f64) -> Result<Self> {
        check_unit("p", p)?;
        if !(0.0..1.0).contains(&support_lo) {
            return Err(Error::InvalidParameter(format!(
                "support_lo {support_lo} must lie in [0, 1)"
            )));
        }
        Ok(SelectionProtocol {
            kind: ProtocolKind::Proportional,
            p,
            sup_bound: p / (1.0 + support_lo) + (1.0 - p) / 2.0,
            discontinuity: Discontinuity::None,
        })
    }

    /// Highest-priority-first: Barabasi(1). No proper stationary law exists;
    /// valid only for the record-process analysis.
    pub fn highest_first() -> Self {
        SelectionProtocol {
            kind: ProtocolKind::HighestFirst,
            p: 1.0,
            sup_bound: 1.0,
            discontinuity: Discontinuity::Diagonal,
        }
    }

    /// A user-supplied v with a declared supremum bound. The declared bound
    /// is audited on a grid by [`audit_sup_bound`](Self::audit_sup_bound);
    /// monotonicity is audited, not proved.
    pub fn custom<F>(v: F, sup_bound: f64, discontinuity: Discontinuity) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(0.0 < sup_bound && sup_bound <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sup_bound {sup_bound} must lie in (0, 1]"
            )));
        }
        Ok(SelectionProtocol {
            kind: ProtocolKind::Custom(Arc::new(v)),
            p: f64::NAN,
            sup_bound,
            discontinuity,
        })
    }

    /// P(new executed | new = x, old = y).
    pub fn v(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            ProtocolKind::Barabasi => {
                let p = self.p;
                if x > y {
                    p + (1.0 - p) / 2.0
                } else {
                    (1.0 - p) / 2.0
                }
            }
            ProtocolKind::Proportional => self.p * x / (x + y) + (1.0 - self.p) / 2.0,
            ProtocolKind::HighestFirst => {
                if x > y {
                    1.0
                } else {
                    0.0
                }
            }
            ProtocolKind::Custom(f) => f(x, y),
        }
    }

    /// Mixing parameter of the built-ins; NaN for custom protocols.
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn discontinuity(&self) -> Discontinuity {
        self.discontinuity
    }

    /// True for the coin-flip family (Barabasi and HighestFirst), the only
    /// protocols defined for buffers longer than two.
    pub fn is_barabasi_family(&self) -> bool {
        matches!(self.kind, ProtocolKind::Barabasi | ProtocolKind::HighestFirst)
    }

    pub fn is_proportional(&self) -> bool {
        matches!(self.kind, ProtocolKind::Proportional)
    }

    /// Grid audit of the monotonicity assumption: v(., y) nondecreasing and
    /// v(x, .) nonincreasing on an n x n grid over [lo, hi]^2.
    pub fn audit_monotonicity(&self, lo: f64, hi: f64, n: usize) -> Result<()> {
        let n = n.max(2);
        let grid: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let eps = 1e-12;
        for &y in &grid {
            let mut prev = self.v(grid[0], y);
            for &x in &grid[1..] {
                let cur = self.v(x, y);
                if cur + eps < prev {
                    return Err(Error::ContractViolation(format!(
                        "v(., {y}) decreases near x = {x}"
                    )));
                }
                prev = cur;
            }
        }
        for &x in &grid {
            let mut prev = self.v(x, grid[0]);
            for &y in &grid[1..] {
                let cur = self.v(x, y);
                if cur > prev + eps {
                    return Err(Error::ContractViolation(format!(
                        "v({x}, .) increases near y = {y}"
                    )));
                }
                prev = cur;
            }
        }
        Ok(())
    }

    /// Grid audit of the declared supremum: rejects if any sample exceeds
    /// `sup_bound` by more than 1e-12.
    pub fn audit_sup_bound(&self, lo: f64, hi: f64, n: usize) -> Result<()> {
        let n = n.max(2);
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let y = lo + (hi - lo) * j as f64 / (n - 1) as f64;
                let val = self.v(x, y);
                if val > self.sup_bound + 1e-12 {
                    return Err(Error::ContractViolation(format!(
                        "v({x}, {y}) = {val} exceeds declared sup_bound {}",
                        self.sup_bound
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {value} must lie in [0, 1]"
        )))
    }
}

/// q(s): the probability that the arriving task is executed given the old
/// task has priority s — equivalently, the per-step survival probability of
/// an old task with priority s.
///
/// Computed as the integral of v(y, s) against the arrival law dR(y); for
/// diagonally discontinuous protocols the integral is split at y = s so each
/// panel sees a smooth integrand.
pub fn q(protocol: &SelectionProtocol, dist: &PriorityDistribution, s: f64) -> Result<f64> {
    dist.check_support(s)?;
    let (lo, hi) = dist.support();
    let integrand = |y: f64| protocol.v(y, s) * dist.pdf(y);
    let value = match protocol.discontinuity() {
        Discontinuity::Diagonal => integrate_split(lo, hi, s, integrand),
        Discontinuity::None => integrate_smooth(lo, hi, integrand),
    };
    Ok(value)
}

/// q1(s): the probability that an arriving task with priority s survives its
/// arrival step, i.e. the old task is executed instead.
///
/// Integrates 1 - v(s, y) against the old-task density; always at least
/// 1 - sup_bound.
pub fn q1(protocol: &SelectionProtocol, old_density: &GridDensity, s: f64) -> Result<f64> {
    old_density.check_density(1e-6)?;
    let f = |y: f64| 1.0 - protocol.v(s, y);
    let value = match protocol.discontinuity() {
        Discontinuity::Diagonal => old_density.integrate_against_split(s, f),
        Discontinuity::None => old_density.integrate_against(f),
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::QuadratureGrid;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform01() -> PriorityDistribution {
        PriorityDistribution::standard_uniform()
    }

    // Closed form for the coin-flip protocol on Uniform(0,1).
    fn q_barabasi_closed(p: f64, s: f64) -> f64 {
        p * (1.0 - s) + (1.0 - p) / 2.0
    }

    #[test]
    fn q_at_top_of_support_is_coin_term() {
        // no arrival can beat s = 1, only the uniform branch selects the new task
        for p in [0.0, 0.3, 0.9, 1.0] {
            let proto = SelectionProtocol::barabasi(p).unwrap();
            let v = q(&proto, &uniform01(), 1.0).unwrap();
            assert_abs_diff_eq!(v, (1.0 - p) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn q_barabasi_midpoint() {
        let proto = SelectionProtocol::barabasi(0.5).unwrap();
        assert_abs_diff_eq!(q(&proto, &uniform01(), 0.5).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn q_proportional_worked_value() {
        // (1+p)/2 - p*x/(1-c) * ln((1+x)/(c+x)) at p=0.9, c=0.2, x=0.2
        let proto = SelectionProtocol::proportional(0.9, 0.2).unwrap();
        let dist = PriorityDistribution::uniform(0.2, 1.0).unwrap();
        let expected = 0.95 - 0.225 * 3.0f64.ln();
        assert_abs_diff_eq!(q(&proto, &dist, 0.2).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn q_rejects_outside_support() {
        let proto = SelectionProtocol::barabasi(0.5).unwrap();
        assert!(matches!(
            q(&proto, &uniform01(), 1.5),
            Err(Error::OutsideSupport { .. })
        ));
    }

    #[test]
    fn q1_uniform_selection_is_half() {
        // p = 0 makes v constant 1/2 regardless of the density
        let grid = QuadratureGrid::default_grid(0.0, 1.0);
        let density = GridDensity::from_function(grid, |x| 2.0 * x);
        for proto in [
            SelectionProtocol::barabasi(0.0).unwrap(),
            SelectionProtocol::proportional(0.0, 0.0).unwrap(),
        ] {
            for s in [0.1, 0.5, 0.9] {
                assert_abs_diff_eq!(q1(&proto, &density, s).unwrap(), 0.5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn q1_highest_first_beats_lower_old_task() {
        // old mass concentrated near 0.2, new task at 0.8 always wins -> q1 ~ 0
        let grid = QuadratureGrid::composite_gauss_legendre(0.15, 0.25, 2, 32);
        let density = GridDensity::from_function(grid, |_| 10.0);
        let proto = SelectionProtocol::highest_first();
        let v = q1(&proto, &density, 0.8).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn q1_respects_floor_from_sup_bound() {
        let proto = SelectionProtocol::proportional(0.9, 0.2).unwrap();
        let grid = QuadratureGrid::default_grid(0.2, 1.0);
        let density = GridDensity::from_function(grid, |_| 1.25);
        for i in 0..20 {
            let s = 0.2 + 0.8 * i as f64 / 19.0;
            let v = q1(&proto, &density, s).unwrap();
            assert!(v >= 1.0 - proto.sup_bound() - 1e-9, "q1({s}) = {v}");
        }
    }

    #[test]
    fn q1_rejects_bad_density() {
        let grid = QuadratureGrid::default_grid(0.0, 1.0);
        let density = GridDensity::from_function(grid, |_| 2.0); // mass 2
        let proto = SelectionProtocol::barabasi(0.5).unwrap();
        assert!(matches!(
            q1(&proto, &density, 0.5),
            Err(Error::InvalidDensity(_))
        ));
    }

    #[test]
    fn builtin_audits_pass() {
        for proto in [
            SelectionProtocol::barabasi(0.7).unwrap(),
            SelectionProtocol::proportional(0.9, 0.2).unwrap(),
            SelectionProtocol::highest_first(),
        ] {
            proto.audit_monotonicity(0.2, 1.0, 50).unwrap();
            proto.audit_sup_bound(0.2, 1.0, 50).unwrap();
        }
    }

    #[test]
    fn custom_audit_catches_wrong_sup_bound() {
        let proto =
            SelectionProtocol::custom(|x, y| 0.9 * x / (x + y), 0.5, Discontinuity::None).unwrap();
        assert!(proto.audit_sup_bound(0.1, 1.0, 30).is_err());
    }

    proptest! {
        #[test]
        fn q_matches_barabasi_closed_form(p in 0.0f64..1.0, s in 0.0f64..=1.0) {
            let proto = SelectionProtocol::barabasi(p).unwrap();
            let got = q(&proto, &uniform01(), s).unwrap();
            prop_assert!((got - q_barabasi_closed(p, s)).abs() < 1e-10);
        }

        #[test]
        fn q_nonincreasing_in_s(p in 0.0f64..1.0, c in 0.0f64..0.9) {
            let proto = SelectionProtocol::proportional(p, c).unwrap();
            let dist = PriorityDistribution::uniform(c, 1.0).unwrap();
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let s = (c + (1.0 - c) * i as f64 / 99.0).min(1.0);
                let cur = q(&proto, &dist, s).unwrap();
                prop_assert!(cur <= prev + 1e-12);
                prev = cur;
            }
        }

        #[test]
        fn one_minus_q_floor(p in 0.0f64..1.0, s in 0.0f64..=1.0) {
            let proto = SelectionProtocol::barabasi(p).unwrap();
            let qv = q(&proto, &uniform01(), s).unwrap();
            prop_assert!(1.0 - qv >= 1.0 - proto.sup_bound() - 1e-10);
        }

        #[test]
        fn builtin_monotonicity_random_params(p in 0.0f64..=1.0, c in 0.0f64..0.9) {
            SelectionProtocol::barabasi(p).unwrap()
                .audit_monotonicity(c, 1.0, 25).unwrap();
            SelectionProtocol::proportional(p, c).unwrap()
                .audit_monotonicity(c, 1.0, 25).unwrap();
        }
    }
}
