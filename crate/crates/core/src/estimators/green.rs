//! Green function of simple random walk on a square box, killed on exit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Constant of the planar potential kernel, `a(x) ~ (2/pi) ln|x| + (2 gamma + ln 8)/pi`.
pub const POTENTIAL_CONSTANT: f64 = (2.0 * 0.577_215_664_901_532_9 + 2.079_441_541_679_835_8) / std::f64::consts::PI;

/// `g(source, .)` on `{0..side}^2`: expected visits of a walk started at
/// `source` before it leaves the box, counting the start.
#[derive(Debug, Clone)]
pub struct GreenFunction {
    side: usize,
    source: (usize, usize),
    values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl GreenFunction {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn source(&self) -> (usize, usize) {
        self.source
    }

    pub fn at(&self, p: (usize, usize)) -> f64 {
        self.values[p.0 * self.side + p.1]
    }
}

/// `4 v(z) - sum of v over neighbours inside the box`.
fn apply(side: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..side {
        for j in 0..side {
            let k = i * side + j;
            let mut s = 4.0 * v[k];
            if i > 0 {
                s -= v[k - side];
            }
            if i + 1 < side {
                s -= v[k + side];
            }
            if j > 0 {
                s -= v[k - 1];
            }
            if j + 1 < side {
                s -= v[k + 1];
            }
            out[k] = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(I - P) g = delta_source` by conjugate gradients.
pub fn killed_green(side: usize, source: (usize, usize)) -> Result<GreenFunction> {
    if side < 3 {
        return Err(invalid("L", "box side must be >= 3"));
    }
    if source.0 >= side || source.1 >= side {
        return Err(invalid("x", "source outside the box"));
    }
    let n = side * side;
    let mut b = vec![0.0; n];
    b[source.0 * side + source.1] = 4.0;
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = 1e-26 * rr;
    let mut it = 0;
    while rr > target {
        if it > 20 * n {
            return Err(Error::Degenerate("conjugate gradients did not converge".into()));
        }
        apply(side, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
        it += 1;
    }
    Ok(GreenFunction { side, source, values: x, iterations: it, residual: (rr / dot(&b, &b)).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenGap {
    pub side: usize,
    pub x: (usize, usize),
    pub y: (usize, usize),
    pub distance: f64,
    pub g_xx: f64,
    pub gap: f64,
    /// `(2/pi) ln|x - y| + POTENTIAL_CONSTANT`.
    pub model: f64,
    pub deviation: f64,
}

fn gap_from(g: &GreenFunction, y: (usize, usize)) -> GreenGap {
    let x = g.source;
    let dx = x.0 as f64 - y.0 as f64;
    let dy = x.1 as f64 - y.1 as f64;
    let distance = (dx * dx + dy * dy).sqrt();
    let g_xx = g.at(x);
    let gap = g_xx - g.at(y);
    let model = 2.0 / std::f64::consts::PI * distance.ln() + POTENTIAL_CONSTANT;
    GreenGap { side: g.side, x, y, distance, g_xx, gap, model, deviation: gap - model }
}

/// `g_L(x, x) - g_L(x, y)` on the box of side `side`.
pub fn green_gap(side: usize, x: (usize, usize), y: (usize, usize)) -> Result<GreenGap> {
    if y.0 >= side || y.1 >= side {
        return Err(invalid("y", "target outside the box"));
    }
    Ok(gap_from(&killed_green(side, x)?, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub side: usize,
    pub constant: f64,
    pub radii: Vec<usize>,
    pub gaps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Gaps from the centre to the points at the given axis distances, fitted
/// to `(2/pi) ln r + C`.
pub fn green_log_fit(side: usize, radii: &[usize]) -> Result<LogFit> {
    let c = side / 2;
    if radii.is_empty() || radii.iter().any(|&r| r == 0 || c + r >= side) {
        return Err(invalid("radii", "need nonzero radii that stay inside the box"));
    }
    let g = killed_green(side, (c, c))?;
    let gaps: Vec<f64> = radii.iter().map(|&r| gap_from(&g, (c + r, c)).gap).collect();
    let slope = 2.0 / std::f64::consts::PI;
    let constant =
        radii.iter().zip(&gaps).map(|(&r, gp)| gp - slope * (r as f64).ln()).sum::<f64>() / radii.len() as f64;
    let residuals: Vec<f64> = radii.iter().zip(&gaps).map(|(&r, gp)| gp - slope * (r as f64).ln() - constant).collect();
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(LogFit { side, constant, radii: radii.to_vec(), gaps, residuals, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_box_by_hand() {
        // Centre, edge midpoints and corners form three orbits.
        let g = killed_green(3, (1, 1)).unwrap();
        let (c, e, k) = (g.at((1, 1)), g.at((0, 1)), g.at((0, 0)));
        assert!((4.0 * c - 4.0 * e - 4.0).abs() < 1e-10);
        assert!((4.0 * e - c - 2.0 * k).abs() < 1e-10);
        assert!((4.0 * k - 2.0 * e).abs() < 1e-10);
        assert!(c >= 1.0);
    }

    #[test]
    fn symmetric_in_source_and_target() {
        let a = killed_green(9, (2, 3)).unwrap();
        let b = killed_green(9, (6, 1)).unwrap();
        assert!((a.at((6, 1)) - b.at((2, 3))).abs() < 1e-10);
    }
}
