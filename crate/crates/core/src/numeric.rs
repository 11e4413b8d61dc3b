//! Small numerical helpers shared by the exact engines.

use std::ops::AddAssign;

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl AddAssign<f64> for CompensatedSum {
    fn add_assign(&mut self, x: f64) {
        self.add(x)
    }
}

/// `k (k-1) ... (k-m+1)`, zero when `k < m`.
#[inline]
pub fn falling(k: u32, m: u32) -> f64 {
    if k < m {
        return 0.0;
    }
    (0..m).fold(1.0, |acc, i| acc * (k - i) as f64)
}
