use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{label_point, BasinError, BasinGrid};
use crate::blowup::{BlowupConfig, Label};
use crate::model::{Model, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    /// Midpoint of the final bracket.
    pub y: f64,
    /// Highest ordinate known to stay bounded.
    pub y_bounded: f64,
    /// Lowest ordinate known to blow up.
    pub y_blowup: f64,
    pub bisections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedColumn {
    pub x: f64,
    pub reason: String,
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant. Interval `k` is
/// `c[k][0] + c[k][1] s + c[k][2] s^2 + c[k][3] s^3` with `s = x - x[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    pub xs: Vec<f64>,
    pub coeffs: Vec<[f64; 4]>,
}

impl Pchip {
    pub fn new(xs: &[f64], ys: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n || xs.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        let coeffs = (0..n - 1)
            .map(|k| {
                let c2 = (3.0 * delta[k] - 2.0 * d[k] - d[k + 1]) / h[k];
                let c3 = (d[k] - 2.0 * delta[k] + d[k + 1]) / (h[k] * h[k]);
                [ys[k], d[k], c2, c3]
            })
            .collect();
        Some(Pchip {
            xs: xs.to_vec(),
            coeffs,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let s = x - self.xs[k];
        let [a, b, c, d] = self.coeffs[k];
        a + s * (b + s * (c + s * d))
    }
}

/// Three-point end slope, limited to preserve shape.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub points: Vec<BoundaryPoint>,
    pub skipped: Vec<SkippedColumn>,
    /// Shape-preserving interpolant through the points (absent for < 2 points).
    pub interpolant: Option<Pchip>,
}

impl BoundaryCurve {
    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn mean_y(&self) -> f64 {
        self.points.iter().map(|p| p.y).sum::<f64>() / self.points.len().max(1) as f64
    }
}

/// Halves `[lo, hi]` until narrower than `tol`, keeping `pred(lo) = false` and
/// `pred(hi) = true`. Returns the final bracket and the number of halvings.
/// `pred` returning `None` ends the refinement early.
pub(crate) fn bisect_bracket(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut pred: impl FnMut(f64) -> Option<bool>,
) -> (f64, f64, usize) {
    let mut k = 0;
    while hi - lo >= tol && k < 200 {
        let mid = 0.5 * (lo + hi);
        match pred(mid) {
            Some(true) => hi = mid,
            Some(false) => lo = mid,
            None => break,
        }
        k += 1;
    }
    (lo, hi, k)
}

fn column_transition(grid: &BasinGrid, i: usize) -> Option<(usize, usize)> {
    let mut last_bounded: Option<usize> = None;
    for j in 0..grid.spec.ny {
        match grid.label(i, j) {
            Label::Bounded => last_bounded = Some(j),
            Label::BlowUp => {
                if let Some(b) = last_bounded {
                    return Some((b, j));
                }
            }
            Label::Failure => {}
        }
    }
    None
}

/// Lowest bounded-to-blow-up transition in each column, refined by fresh
/// classifications until the bracket is narrower than `dy_tol`.
pub fn extract_boundary(
    grid: &BasinGrid,
    params: &ModelParams,
    config: &BlowupConfig,
    dy_tol: f64,
) -> Result<BoundaryCurve, BasinError> {
    if !(dy_tol > 0.0) {
        return Err(BasinError::InvalidGrid("dy_tol must be positive".into()));
    }
    let model = Model::new(*params)?;
    let spec = grid.spec;
    let columns: Vec<Result<BoundaryPoint, SkippedColumn>> = (0..spec.nx)
        .into_par_iter()
        .map(|i| {
            let x = spec.x(i);
            let Some((jb, ju)) = column_transition(grid, i) else {
                return Err(SkippedColumn {
                    x,
                    reason: "no bounded-to-blow-up transition".into(),
                });
            };
            let (lo, hi, k) =
                bisect_bracket(spec.y(jb), spec.y(ju), dy_tol, |y| {
                    match label_point(&model, x, y, config).0 {
                        Label::BlowUp => Some(true),
                        Label::Bounded => Some(false),
                        Label::Failure => None,
                    }
                });
            Ok(BoundaryPoint {
                x,
                y: 0.5 * (lo + hi),
                y_bounded: lo,
                y_blowup: hi,
                bisections: k,
            })
        })
        .collect();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for c in columns {
        match c {
            Ok(p) => points.push(p),
            Err(s) => skipped.push(s),
        }
    }
    if points.is_empty() {
        return Err(BasinError::NoTransition);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let interpolant = Pchip::new(&xs, &ys);
    Ok(BoundaryCurve {
        points,
        skipped,
        interpolant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub monotone_decreasing: bool,
    /// Indices `k` where `y[k+1] > y[k]` beyond the bracket widths.
    pub rising_segments: Vec<usize>,
}

/// Reports (without asserting) whether the boundary decreases in x.
pub fn monotonicity_report(curve: &BoundaryCurve) -> MonotonicityReport {
    let rising_segments: Vec<usize> = curve
        .points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].y_bounded > w[0].y_blowup)
        .map(|(k, _)| k)
        .collect();
    MonotonicityReport {
        monotone_decreasing: rising_segments.is_empty(),
        rising_segments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basin::{BasinGrid, GridSpec};
    use crate::model::ModelParams;

    #[test]
    fn bisection_halves_bracket() {
        let threshold = 0.3141;
        for k in 1..10 {
            let (lo, hi, n) = bisect_bracket(0.0, 1.0, 1.0 / (1u64 << k) as f64 + 1e-15, |y| {
                Some(y > threshold)
            });
            assert_eq!(n, k);
            assert!((hi - lo - 1.0 / (1u64 << k) as f64).abs() < 1e-15);
            assert!(lo <= threshold && threshold < hi);
        }
    }

    #[test]
    fn pchip_preserves_monotone_data() {
        let xs = [1.0, 2.0, 4.0, 5.0, 9.0];
        let ys = [10.0, 6.0, 5.9, 2.0, 1.0];
        let p = Pchip::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert!((p.eval(*x) - y).abs() < 1e-12);
        }
        let mut prev = f64::INFINITY;
        for k in 0..=800 {
            let x = 1.0 + 8.0 * k as f64 / 800.0;
            let v = p.eval(x);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        assert!(Pchip::new(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn all_bounded_grid_has_no_transition() {
        let spec = GridSpec::square(0.0, 1.0, 3);
        let grid = BasinGrid {
            spec,
            params: ModelParams::baseline(),
            labels: vec![Label::Bounded; 9],
            t_star: vec![None; 9],
            failures: vec![],
        };
        let e = extract_boundary(
            &grid,
            &ModelParams::baseline(),
            &BlowupConfig::default(),
            0.1,
        );
        assert!(matches!(e, Err(BasinError::NoTransition)));
    }
}
