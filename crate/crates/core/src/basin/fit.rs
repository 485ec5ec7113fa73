use serde::{Deserialize, Serialize};

use super::boundary::BoundaryCurve;
use super::BasinError;

/// Boundary model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitFamily {
    /// `a x / (b x - c)`; fitted with `b = 1` since `(a, b, c)` is defined up to scale.
    Rational,
    /// `1 / (b ln(c x))`, defined while `c x > 1`.
    InverseLog,
}

impl FitFamily {
    pub fn eval(self, params: &[f64], x: f64) -> f64 {
        match self {
            FitFamily::Rational => params[0] * x / (params[1] * x - params[2]),
            FitFamily::InverseLog => 1.0 / (params[0] * (params[1] * x).ln()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitFamily::Rational => "rational",
            FitFamily::InverseLog => "inverse-log",
        }
    }
}

impl std::str::FromStr for FitFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rational" | "phi1" => Ok(FitFamily::Rational),
            "inverse-log" | "inverselog" | "log" | "phi2" => Ok(FitFamily::InverseLog),
            other => Err(format!("unknown fit family '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub lambda0: f64,
    pub lambda_factor: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            lambda0: 1e-3,
            lambda_factor: 10.0,
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmIteration {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub sse: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<LmIteration>,
}

/// Levenberg-Marquardt with Marquardt scaling `lambda * diag(J^T J)`.
/// `residuals` returns `None` when the parameters leave the model's domain;
/// such trial steps are rejected like steps that increase the error.
pub fn levenberg_marquardt<R, J>(
    mut residuals: R,
    mut jacobian: J,
    p0: &[f64],
    opts: &LmOptions,
) -> Result<LmReport, BasinError>
where
    R: FnMut(&[f64]) -> Option<Vec<f64>>,
    J: FnMut(&[f64]) -> Vec<Vec<f64>>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = residuals(&p).ok_or_else(|| {
        BasinError::DomainViolation(format!("initial parameters {p:?} outside domain"))
    })?;
    let mut sse = sum_sq(&r);
    let mut lambda = opts.lambda0;
    let mut log = vec![LmIteration {
        iteration: 0,
        params: p.clone(),
        sse,
        lambda,
        accepted: true,
    }];
    let mut converged = sse == 0.0;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let jac = jacobian(&p);
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..n {
                jtr[a] += row[a] * ri;
                for b in 0..n {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        // Inner loop raises lambda until a step is accepted.
        let mut accepted = false;
        while lambda < 1e16 {
            let mut m = jtj.clone();
            for a in 0..n {
                m[a][a] += lambda * jtj[a][a].max(1e-300);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = solve_dense(m, rhs) else {
                return Err(BasinError::SingularJacobian {
                    iteration: iterations,
                    params: p,
                });
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let trial_r = residuals(&trial).filter(|v| v.iter().all(|x| x.is_finite()));
            let trial_sse = trial_r.as_ref().map(|v| sum_sq(v)).unwrap_or(f64::INFINITY);
            if trial_sse <= sse {
                let rel = step
                    .iter()
                    .zip(&p)
                    .map(|(s, v)| s.abs() / v.abs().max(1e-300))
                    .fold(0.0, f64::max);
                p = trial;
                r = trial_r.unwrap_or_default();
                sse = trial_sse;
                lambda = (lambda / opts.lambda_factor).max(1e-300);
                accepted = true;
                converged = rel < opts.rel_tol || sse == 0.0;
                break;
            }
            log.push(LmIteration {
                iteration: iterations,
                params: trial,
                sse: trial_sse,
                lambda,
                accepted: false,
            });
            lambda *= opts.lambda_factor;
        }
        log.push(LmIteration {
            iteration: iterations,
            params: p.clone(),
            sse,
            lambda,
            accepted,
        });
        if !accepted {
            // No descent direction left: at a (numerical) minimum.
            converged = true;
        }
    }
    Ok(LmReport {
        params: p,
        sse,
        iterations,
        converged,
        log,
    })
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if !(m[piv][col].abs() > 1e-14 * scale) {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot = &top[col];
        for (off, r) in rest.iter_mut().enumerate() {
            let f = r[col] / pivot[col];
            for (rk, pk) in r[col..n].iter_mut().zip(&pivot[col..n]) {
                *rk -= f * pk;
            }
            b[col + 1 + off] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / m[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub family: FitFamily,
    /// `(a, b, c)` for the rational family, `(b, c)` for the inverse-log family.
    pub params: Vec<f64>,
    pub rmse: f64,
    pub report: LmReport,
}

impl BoundaryFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.family.eval(&self.params, x)
    }
}

fn rmse(sse: f64, n: usize) -> f64 {
    (sse / n as f64).sqrt()
}

/// RMSE of the best constant fit, i.e. the population standard deviation.
pub fn constant_fit_rmse(ys: &[f64]) -> f64 {
    let n = ys.len().max(1) as f64;
    let mean = ys.iter().sum::<f64>() / n;
    (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn fit_boundary(curve: &BoundaryCurve, family: FitFamily) -> Result<BoundaryFit, BasinError> {
    fit_points(&curve.xs(), &curve.ys(), family, &LmOptions::default())
}

pub fn fit_points(
    xs: &[f64],
    ys: &[f64],
    family: FitFamily,
    opts: &LmOptions,
) -> Result<BoundaryFit, BasinError> {
    if xs.len() < 5 || xs.len() != ys.len() {
        return Err(BasinError::TooFewPoints(xs.len().min(ys.len())));
    }
    match family {
        FitFamily::Rational => fit_rational(xs, ys, opts),
        FitFamily::InverseLog => fit_inverse_log(xs, ys, opts),
    }
}

/// `y = a x / (x - c)`; three-point exact interpolation `a x + c y = x y`
/// solved in the least-squares sense for the start.
fn fit_rational(xs: &[f64], ys: &[f64], opts: &LmOptions) -> Result<BoundaryFit, BasinError> {
    let n = xs.len();
    let picks = [0, n / 2, n - 1];
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &k in &picks {
        let (x, y) = (xs[k], ys[k]);
        s11 += x * x;
        s12 += x * y;
        s22 += y * y;
        t1 += x * x * y;
        t2 += x * y * y;
    }
    let det = s11 * s22 - s12 * s12;
    let p0 = if det.abs() > 1e-12 * s11 * s22 {
        vec![(t1 * s22 - t2 * s12) / det, (s11 * t2 - s12 * t1) / det]
    } else {
        vec![ys.iter().sum::<f64>() / n as f64, 0.0]
    };
    let p0 = if p0.iter().all(|v| v.is_finite()) {
        p0
    } else {
        vec![ys.iter().sum::<f64>() / n as f64, 0.0]
    };
    let model = |p: &[f64], x: f64| p[0] * x / (x - p[1]);
    let res = |p: &[f64]| -> Option<Vec<f64>> {
        let v: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| model(p, *x) - y).collect();
        v.iter().all(|r| r.is_finite()).then_some(v)
    };
    let jac = |p: &[f64]| -> Vec<Vec<f64>> {
        xs.iter()
            .map(|&x| {
                let q = x - p[1];
                vec![x / q, p[0] * x / (q * q)]
            })
            .collect()
    };
    let report = levenberg_marquardt(res, jac, &p0, opts)?;
    let params = vec![report.params[0], 1.0, report.params[1]];
    Ok(BoundaryFit {
        family: FitFamily::Rational,
        rmse: rmse(report.sse, n),
        params,
        report,
    })
}

/// `y = 1 / (b ln(c x))`, started from the regression `1/y = b ln c + b ln x`.
fn fit_inverse_log(xs: &[f64], ys: &[f64], opts: &LmOptions) -> Result<BoundaryFit, BasinError> {
    let n = xs.len();
    if xs.iter().any(|&x| x <= 0.0) || ys.iter().any(|&y| y <= 0.0) {
        return Err(BasinError::DomainViolation(
            "inverse-log family needs positive abscissae and ordinates".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let iy: Vec<f64> = ys.iter().map(|y| 1.0 / y).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = iy.iter().sum::<f64>() / n as f64;
    let sxy: f64 = lx.iter().zip(&iy).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let b0 = sxy / sxx;
    let alpha = my - b0 * mx;
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut c0 = (alpha / b0).exp();
    if !(c0 * xmin > 1.0) || !c0.is_finite() {
        c0 = 1.5 / xmin;
    }
    let b0 = if b0.is_finite() && b0 != 0.0 { b0 } else { 1.0 };
    let in_domain = |p: &[f64]| p[1] > 0.0 && p[1] * xmin > 1.0;
    let res = |p: &[f64]| -> Option<Vec<f64>> {
        if !in_domain(p) {
            return None;
        }
        let v: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| 1.0 / (p[0] * (p[1] * x).ln()) - y)
            .collect();
        v.iter().all(|r| r.is_finite()).then_some(v)
    };
    let jac = |p: &[f64]| -> Vec<Vec<f64>> {
        xs.iter()
            .map(|&x| {
                let l = (p[1] * x).ln();
                vec![-1.0 / (p[0] * p[0] * l), -1.0 / (p[0] * l * l * p[1])]
            })
            .collect()
    };
    let report = levenberg_marquardt(res, jac, &[b0, c0], opts)?;
    if !in_domain(&report.params) {
        return Err(BasinError::DomainViolation(format!(
            "c x > 1 violated at parameters {:?}",
            report.params
        )));
    }
    Ok(BoundaryFit {
        family: FitFamily::InverseLog,
        rmse: rmse(report.sse, n),
        params: report.params.clone(),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| 1.0 + 99.0 * k as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn recovers_exact_rational_data() {
        let xs = grid(60);
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x / (3.0 * x - 1.0)).collect();
        let f = fit_points(&xs, &ys, FitFamily::Rational, &LmOptions::default()).unwrap();
        assert!(f.rmse < 1e-10, "rmse {}", f.rmse);
        // Equal up to overall scale: a/b = 2/3, c/b = 1/3.
        assert!((f.params[0] / f.params[1] - 2.0 / 3.0).abs() < 1e-8);
        assert!((f.params[2] / f.params[1] - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn recovers_exact_inverse_log_data() {
        let xs = grid(40);
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / (0.7 * (2.5 * x).ln())).collect();
        let f = fit_points(&xs, &ys, FitFamily::InverseLog, &LmOptions::default()).unwrap();
        assert!(f.rmse < 1e-10, "rmse {}", f.rmse);
        assert!((f.params[0] - 0.7).abs() < 1e-7);
        assert!((f.params[1] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn rejects_short_curves() {
        let e = fit_points(
            &[1.0, 2.0],
            &[1.0, 2.0],
            FitFamily::Rational,
            &LmOptions::default(),
        );
        assert!(matches!(e, Err(BasinError::TooFewPoints(2))));
    }

    #[test]
    fn lm_solves_linear_problem_in_one_accepted_step_family() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let rep = levenberg_marquardt(
            |p: &[f64]| {
                Some(
                    xs.iter()
                        .zip(&ys)
                        .map(|(x, y)| p[0] + p[1] * x - y)
                        .collect(),
                )
            },
            |_: &[f64]| xs.iter().map(|&x| vec![1.0, x]).collect(),
            &[0.0, 0.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(rep.converged);
        assert!((rep.params[0] - 1.0).abs() < 1e-8 && (rep.params[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn constant_fit_is_standard_deviation() {
        assert!((constant_fit_rmse(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
