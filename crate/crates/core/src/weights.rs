//! On-site weight functions `U : N0 -> [0, inf)` and their goodness/niceness
//! classification.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Number of values evaluated eagerly at construction.
const CACHE_LEN: usize = 1024;

/// Declarative description of a weight function, as written in run configs,
/// e.g. `weight = { kind = "spin", N = 2 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `U = 1`, the non-interacting soup.
    Constant,
    /// The Spin O(N) weight `Gamma(N/2) / (2^n Gamma(n + N/2))`.
    Spin {
        #[serde(rename = "N")]
        n: u32,
    },
    /// `U(n) = 1/n!`.
    Factorial,
    /// `U(n) = exp(-alpha * n(n-1)/2)`.
    Pairwise { alpha: f64 },
    /// Explicit finite table, zero beyond its end. Exact engines only.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct WeightFunction {
    spec: WeightSpec,
    values: Vec<f64>,
    ln_values: Vec<f64>,
    positive: bool,
}

/// Outcome of a goodness scan: `violation` is the smallest failing `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoodCheck {
    pub good: bool,
    pub violation: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiceViolation {
    NotGood(u32),
    /// `U(n) > U(0)`.
    ExceedsOrigin(u32),
    /// `U(a + b) > U(a) U(b)`.
    NotSubmultiplicative(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NiceCheck {
    pub nice: bool,
    pub witness: Option<NiceViolation>,
}

impl WeightFunction {
    pub fn new(spec: WeightSpec) -> Result<Self> {
        match &spec {
            WeightSpec::Spin { n } if *n == 0 => {
                return Err(invalid("N", "spin weight needs an integer N >= 1"))
            }
            WeightSpec::Pairwise { alpha } if !(alpha.is_finite() && *alpha >= 0.0) => {
                return Err(invalid("alpha", format!("pairwise intensity must be >= 0 (got {alpha})")))
            }
            WeightSpec::Table { values } => {
                if values.is_empty() {
                    return Err(invalid("values", "weight table is empty"));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid("values", "weight table entries must be finite and >= 0"));
                }
            }
            _ => {}
        }
        let ln_values: Vec<f64> = (0..CACHE_LEN as u32).map(|n| ln_eval(&spec, n)).collect();
        let values = ln_values.iter().map(|l| l.exp()).collect();
        let positive = !matches!(spec, WeightSpec::Table { .. });
        Ok(WeightFunction { spec, values, ln_values, positive })
    }

    pub fn constant() -> Self {
        Self::new(WeightSpec::Constant).expect("valid")
    }

    pub fn spin(n: u32) -> Result<Self> {
        Self::new(WeightSpec::Spin { n })
    }

    pub fn factorial() -> Self {
        Self::new(WeightSpec::Factorial).expect("valid")
    }

    pub fn pairwise(alpha: f64) -> Result<Self> {
        Self::new(WeightSpec::Pairwise { alpha })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        Self::new(WeightSpec::Table { values })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    /// `U(n) > 0` for every `n`. False for tables, which are zero past their end.
    pub fn is_positive(&self) -> bool {
        self.positive
    }

    /// Smallest `n0` with `U(n) = 0` for every `n >= n0`, if any.
    pub fn zero_from(&self) -> Option<u32> {
        match &self.spec {
            WeightSpec::Table { values } => Some(values.len() as u32),
            _ => None,
        }
    }

    #[inline]
    pub fn value(&self, n: u32) -> f64 {
        match self.values.get(n as usize) {
            Some(&v) => v,
            None => ln_eval(&self.spec, n).exp(),
        }
    }

    #[inline]
    pub fn ln_value(&self, n: u32) -> f64 {
        match self.ln_values.get(n as usize) {
            Some(&v) => v,
            None => ln_eval(&self.spec, n),
        }
    }

    /// `U(to) / U(from)`, evaluated in log space. Zero when `U(to) = 0`.
    #[inline]
    pub fn ratio(&self, from: u32, to: u32) -> f64 {
        let lt = self.ln_value(to);
        if lt == f64::NEG_INFINITY {
            return 0.0;
        }
        (lt - self.ln_value(from)).exp()
    }

    /// Exact rational value, when the family admits one. Table entries are
    /// converted from their binary representation.
    pub fn exact(&self, n: u32) -> Option<BigRational> {
        match &self.spec {
            WeightSpec::Constant => Some(BigRational::one()),
            WeightSpec::Factorial => {
                let mut f = BigInt::one();
                for i in 2..=n {
                    f *= i;
                }
                Some(BigRational::new(BigInt::one(), f))
            }
            // U(n) = 1 / prod_{i<n} (N + 2i).
            WeightSpec::Spin { n: big_n } => {
                let mut d = BigInt::one();
                for i in 0..n {
                    d *= *big_n + 2 * i;
                }
                Some(BigRational::new(BigInt::one(), d))
            }
            WeightSpec::Pairwise { alpha } => {
                if *alpha == 0.0 || n <= 1 {
                    Some(BigRational::one())
                } else {
                    None
                }
            }
            WeightSpec::Table { values } => match values.get(n as usize) {
                Some(&v) => BigRational::from_float(v),
                None => Some(BigRational::zero()),
            },
        }
    }

    /// Checks `U(n) <= (M/n) U(n-1)` for `1 <= n <= n_max`.
    pub fn check_m_good(&self, m: u32, n_max: u32) -> GoodCheck {
        for n in 1..=n_max {
            if !self.good_at(m, n) {
                return GoodCheck { good: false, violation: Some(n) };
            }
        }
        GoodCheck { good: true, violation: None }
    }

    fn good_at(&self, m: u32, n: u32) -> bool {
        if let (Some(cur), Some(prev)) = (self.exact(n), self.exact(n - 1)) {
            return cur * BigInt::from(n) <= prev * BigInt::from(m);
        }
        let lhs = self.ln_value(n) + (n as f64).ln();
        let rhs = self.ln_value(n - 1) + (m as f64).ln();
        lhs <= rhs + 1e-12 * rhs.abs().max(1.0)
    }

    /// Good, bounded by `U(0)`, and submultiplicative on `n + n' <= n_max`.
    pub fn check_nice(&self, m: u32, n_max: u32) -> NiceCheck {
        let fail = |w| NiceCheck { nice: false, witness: Some(w) };
        if let Some(n) = self.check_m_good(m, n_max).violation {
            return fail(NiceViolation::NotGood(n));
        }
        let slack = |x: f64| 1e-12 * x.abs().max(1.0);
        for n in 1..=n_max {
            let (a, b) = (self.ln_value(n), self.ln_value(0));
            if a > b + slack(b) {
                return fail(NiceViolation::ExceedsOrigin(n));
            }
        }
        for a in 1..n_max {
            for b in a..=(n_max - a) {
                let lhs = self.ln_value(a + b);
                let rhs = self.ln_value(a) + self.ln_value(b);
                if lhs > rhs + slack(rhs) {
                    return fail(NiceViolation::NotSubmultiplicative(a, b));
                }
            }
        }
        NiceCheck { nice: true, witness: None }
    }
}

fn ln_eval(spec: &WeightSpec, n: u32) -> f64 {
    let nf = n as f64;
    match spec {
        WeightSpec::Constant => 0.0,
        WeightSpec::Factorial => -ln_gamma(nf + 1.0),
        WeightSpec::Spin { n: big_n } => {
            let half = *big_n as f64 / 2.0;
            ln_gamma(half) - nf * std::f64::consts::LN_2 - ln_gamma(nf + half)
        }
        WeightSpec::Pairwise { alpha } => -alpha * nf * (nf - 1.0) / 2.0,
        WeightSpec::Table { values } => match values.get(n as usize) {
            Some(&v) => v.ln(),
            None => f64::NEG_INFINITY,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn built_in_values() {
        let u = WeightFunction::spin(2).unwrap();
        assert_relative_eq!(u.value(1), 0.5, max_relative = 1e-14);
        assert_relative_eq!(u.value(0), 1.0, max_relative = 1e-14);
        let p = WeightFunction::pairwise(0.7).unwrap();
        assert_eq!((p.value(0), p.value(1)), (1.0, 1.0));
        assert_relative_eq!(p.value(3), (-2.1f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(WeightFunction::factorial().value(4), 1.0 / 24.0, max_relative = 1e-14);
        assert_eq!(WeightFunction::constant().value(57), 1.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(WeightFunction::spin(0).is_err());
        assert!(WeightFunction::pairwise(-0.1).is_err());
        assert!(WeightFunction::table(vec![]).is_err());
        assert!(WeightFunction::table(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn spin_recursion_in_log_space() {
        for big_n in 1..=10u32 {
            let u = WeightFunction::spin(big_n).unwrap();
            for n in 0..=200u32 {
                let lhs = u.value(n + 1) * (2 * n + big_n) as f64;
                assert_relative_eq!(lhs, u.value(n), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn exact_matches_float() {
        use num_traits::ToPrimitive;
        for w in [WeightFunction::spin(3).unwrap(), WeightFunction::factorial()] {
            for n in 0..20 {
                let e = w.exact(n).unwrap().to_f64().unwrap();
                assert_relative_eq!(e, w.value(n), max_relative = 1e-13);
            }
        }
        assert!(WeightFunction::pairwise(0.5).unwrap().exact(3).is_none());
    }

    #[test]
    fn goodness() {
        assert!(WeightFunction::factorial().check_m_good(1, 100).good);
        let c = WeightFunction::constant().check_m_good(5, 100);
        assert_eq!(c, GoodCheck { good: false, violation: Some(6) });
        assert!(WeightFunction::spin(3).unwrap().check_m_good(1, 100).good);
    }

    #[test]
    fn niceness() {
        assert!(WeightFunction::pairwise(0.5).unwrap().check_nice(2, 60).nice);
        assert!(WeightFunction::factorial().check_nice(1, 60).nice);
        for m in [1, 3, 10] {
            let c = WeightFunction::constant().check_nice(m, 60);
            assert!(matches!(c.witness, Some(NiceViolation::NotGood(_))));
        }
        assert!(WeightFunction::spin(2).unwrap().check_nice(1, 60).nice);
        let bumpy = WeightFunction::table(vec![1.0, 0.5, 0.4]).unwrap();
        assert_eq!(
            bumpy.check_nice(2, 2).witness,
            Some(NiceViolation::NotSubmultiplicative(1, 1))
        );
    }

    #[test]
    fn positivity_flags() {
        assert!(WeightFunction::spin(4).unwrap().is_positive());
        assert!(WeightFunction::pairwise(2.0).unwrap().is_positive());
        let t = WeightFunction::table(vec![1.0, 1.0]).unwrap();
        assert!(!t.is_positive());
        assert_eq!(t.value(2), 0.0);
        assert_eq!(t.ratio(1, 2), 0.0);
    }

    #[test]
    fn config_syntax() {
        let s: WeightSpec = toml::from_str("kind = \"spin\"\nN = 2").unwrap();
        assert_eq!(s, WeightSpec::Spin { n: 2 });
        let s: WeightSpec = toml::from_str("kind = \"pairwise\"\nalpha = 0.7").unwrap();
        assert_eq!(s, WeightSpec::Pairwise { alpha: 0.7 });
    }

    proptest::proptest! {
        #[test]
        fn submultiplicativity_symmetric(a in 1u32..30, b in 1u32..30, alpha in 0.0f64..3.0) {
            let u = WeightFunction::pairwise(alpha).unwrap();
            let ab = u.ln_value(a + b) - u.ln_value(a) - u.ln_value(b);
            let ba = u.ln_value(b + a) - u.ln_value(b) - u.ln_value(a);
            proptest::prop_assert!((ab - ba).abs() < 1e-12);
            proptest::prop_assert!(ab <= 1e-12);
        }
    }
}
