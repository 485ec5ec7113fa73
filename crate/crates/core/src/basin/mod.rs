//! Initial-condition sweeps, blow-up boundary extraction and boundary fits.

mod boundary;
mod fit;

pub use boundary::{
    extract_boundary, monotonicity_report, BoundaryCurve, BoundaryPoint, MonotonicityReport, Pchip,
    SkippedColumn,
};
pub use fit::{
    constant_fit_rmse, fit_boundary, fit_points, levenberg_marquardt, BoundaryFit, FitFamily,
    LmIteration, LmOptions, LmReport,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blowup::{classify_model, BlowupConfig, BlowupError, InitialData, Label, Outcome};
use crate::model::{largeness_predicate, Model, ModelError, ModelKind, ModelParams, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasinError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no label transition in any column")]
    NoTransition,
    #[error("too few boundary points for a fit: {0}")]
    TooFewPoints(usize),
    #[error("normal equations singular at iteration {iteration}; last parameters {params:?}")]
    SingularJacobian { iteration: usize, params: Vec<f64> },
    #[error("fit left its domain: {0}")]
    DomainViolation(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Blowup(#[from] BlowupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_range: (0.0, 100.0),
            y_range: (0.0, 100.0),
            nx: 300,
            ny: 300,
        }
    }
}

impl GridSpec {
    pub fn square(lo: f64, hi: f64, n: usize) -> Self {
        GridSpec {
            x_range: (lo, hi),
            y_range: (lo, hi),
            nx: n,
            ny: n,
        }
    }

    pub fn validate(&self) -> Result<(), BasinError> {
        if self.nx < 2 || self.ny < 2 {
            return Err(BasinError::InvalidGrid(
                "nx and ny must be at least 2".into(),
            ));
        }
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && b > a;
        if !ok(self.x_range) || !ok(self.y_range) {
            return Err(BasinError::InvalidGrid(
                "ranges must be finite and nondegenerate".into(),
            ));
        }
        Ok(())
    }

    /// Abscissa of column `i`; the first and last columns sit on the range ends.
    pub fn x(&self, i: usize) -> f64 {
        let (a, b) = self.x_range;
        if i + 1 == self.nx {
            b
        } else {
            a + (b - a) * i as f64 / (self.nx - 1) as f64
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        let (a, b) = self.y_range;
        if j + 1 == self.ny {
            b
        } else {
            a + (b - a) * j as f64 / (self.ny - 1) as f64
        }
    }

    pub fn dy(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / (self.ny - 1) as f64
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Cell whose node is closest to `(x, y)`.
    pub fn nearest_cell(&self, x: f64, y: f64) -> (usize, usize) {
        let idx = |v: f64, (a, b): (f64, f64), n: usize| {
            let f = (v - a) / (b - a) * (n - 1) as f64;
            f.round().clamp(0.0, (n - 1) as f64) as usize
        };
        (idx(x, self.x_range, self.nx), idx(y, self.y_range, self.ny))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub i: usize,
    pub j: usize,
    pub cause: String,
}

/// Labelled grid, stored column by column (`index = i * ny + j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinGrid {
    pub spec: GridSpec,
    pub params: ModelParams,
    pub labels: Vec<Label>,
    pub t_star: Vec<Option<f64>>,
    pub failures: Vec<CellFailure>,
}

impl BasinGrid {
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.spec.ny + j
    }

    pub fn label(&self, i: usize, j: usize) -> Label {
        self.labels[self.index(i, j)]
    }

    pub fn t_star_at(&self, i: usize, j: usize) -> Option<f64> {
        self.t_star[self.index(i, j)]
    }

    pub fn label_near(&self, x: f64, y: f64) -> Label {
        let (i, j) = self.spec.nearest_cell(x, y);
        self.label(i, j)
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// `(x, y, label, t_star)` for every cell, x-major.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, Label, Option<f64>)> + '_ {
        (0..self.spec.nx).flat_map(move |i| {
            (0..self.spec.ny).map(move |j| {
                let k = self.index(i, j);
                (
                    self.spec.x(i),
                    self.spec.y(j),
                    self.labels[k],
                    self.t_star[k],
                )
            })
        })
    }
}

/// Prey-free axis: `dY/dt = (D - E/A) Y^2` exactly when X = 0 is invariant.
fn prey_free_outcome(
    params: &ModelParams,
    y0: f64,
    config: &BlowupConfig,
) -> Option<(Label, Option<f64>)> {
    if !matches!(params.kind, ModelKind::NonDelayed | ModelKind::DelayedPrey) {
        return None;
    }
    let rate = params.d - params.e / params.a;
    if y0 <= 0.0 || rate <= 0.0 {
        return Some((Label::Bounded, None));
    }
    if y0 >= config.threshold {
        return Some((Label::BlowUp, Some(0.0)));
    }
    let t = (1.0 / y0 - 1.0 / config.threshold) / rate;
    if t <= config.t_max {
        Some((Label::BlowUp, Some(t)))
    } else {
        Some((Label::Bounded, None))
    }
}

fn classify_cell(
    model: &Model,
    x0: f64,
    y0: f64,
    config: &BlowupConfig,
) -> Result<Outcome, String> {
    let p = model.params();
    let initial = InitialData::for_params(p, State::new(x0, y0));
    classify_model(model, &initial, config).map_err(|e| e.to_string())
}

/// Label and blow-up time for one initial point, or the failure cause.
pub(crate) fn label_point(
    model: &Model,
    x0: f64,
    y0: f64,
    config: &BlowupConfig,
) -> (Label, Option<f64>, Option<String>) {
    if x0 == 0.0 {
        if let Some((l, t)) = prey_free_outcome(model.params(), y0, config) {
            return (l, t, None);
        }
    }
    match classify_cell(model, x0, y0, config) {
        Ok(o) => {
            let cause = o.cause.clone();
            (o.label, o.t_star, cause)
        }
        Err(cause) => (Label::Failure, None, Some(cause)),
    }
}

/// Classifies every grid cell on the current rayon pool. The result is
/// independent of scheduling.
pub fn sweep(
    params: &ModelParams,
    spec: &GridSpec,
    config: &BlowupConfig,
) -> Result<BasinGrid, BasinError> {
    spec.validate()?;
    config.validate()?;
    let model = Model::new(*params)?;
    let results: Vec<(Label, Option<f64>, Option<String>)> = (0..spec.cells())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / spec.ny, k % spec.ny);
            label_point(&model, spec.x(i), spec.y(j), config)
        })
        .collect();
    let mut labels = Vec::with_capacity(results.len());
    let mut t_star = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (k, (l, t, cause)) in results.into_iter().enumerate() {
        if l == Label::Failure {
            failures.push(CellFailure {
                i: k / spec.ny,
                j: k % spec.ny,
                cause: cause.unwrap_or_else(|| "unknown".into()),
            });
        }
        labels.push(l);
        t_star.push(t);
    }
    Ok(BasinGrid {
        spec: *spec,
        params: *params,
        labels,
        t_star,
        failures,
    })
}

/// [`sweep`] on a dedicated pool of `threads` workers.
pub fn sweep_with_threads(
    params: &ModelParams,
    spec: &GridSpec,
    config: &BlowupConfig,
    threads: usize,
) -> Result<BasinGrid, BasinError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BasinError::ThreadPool(e.to_string()))?;
    pool.install(|| sweep(params, spec, config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureCheck {
    pub sufficient_holds: bool,
    pub violations: usize,
    /// Cells where the largeness condition held.
    pub checked: usize,
    pub violating_cells: Vec<(f64, f64)>,
    /// Set when the predicate's preconditions fail for the given margin.
    pub vacuous_reason: Option<String>,
}

/// Every cell satisfying the largeness condition must be labelled blow-up.
/// Only sufficiency is tested.
pub fn conjecture_region_check(
    grid: &BasinGrid,
    params: &ModelParams,
    delta1: f64,
) -> ConjectureCheck {
    let mut checked = 0;
    let mut violating_cells = Vec::new();
    for (x, y, label, _) in grid.cells() {
        match largeness_predicate(params, delta1, State::new(x, y)) {
            Err(e) => {
                return ConjectureCheck {
                    sufficient_holds: true,
                    violations: 0,
                    checked: 0,
                    violating_cells: Vec::new(),
                    vacuous_reason: Some(e.to_string()),
                }
            }
            Ok(l) if l.holds => {
                checked += 1;
                if label != Label::BlowUp {
                    violating_cells.push((x, y));
                }
            }
            Ok(_) => {}
        }
    }
    ConjectureCheck {
        sufficient_holds: violating_cells.is_empty(),
        violations: violating_cells.len(),
        checked,
        violating_cells,
        vacuous_reason: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamName;

    #[test]
    fn grid_coordinates_include_endpoints() {
        let g = GridSpec::default();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(299), 100.0);
        assert_eq!(g.cells(), 90_000);
        let (i, j) = g.nearest_cell(78.0, 30.0);
        assert!((g.x(i) - 78.0).abs() <= 0.5 * 100.0 / 299.0);
        assert!((g.y(j) - 30.0).abs() <= 0.5 * 100.0 / 299.0);
        assert!(GridSpec::square(0.0, 1.0, 1).validate().is_err());
        assert!(GridSpec::square(1.0, 1.0, 4).validate().is_err());
    }

    #[test]
    fn tiny_grid_origin_bounded() {
        let grid = sweep(
            &ModelParams::baseline(),
            &GridSpec::square(0.0, 1.0, 2),
            &BlowupConfig::default(),
        )
        .unwrap();
        assert_eq!(grid.labels.len(), 4);
        assert_eq!(grid.label(0, 0), Label::Bounded);
    }

    #[test]
    fn prey_free_axis_shortcut() {
        let cfg = BlowupConfig::default();
        let p = ModelParams::baseline();
        assert_eq!(
            prey_free_outcome(&p, 50.0, &cfg),
            Some((Label::Bounded, None))
        );
        let p = p.with(ParamName::D, 2.0);
        let (l, t) = prey_free_outcome(&p, 10.0, &cfg).unwrap();
        assert_eq!(l, Label::BlowUp);
        assert!((t.unwrap() - (0.1 - 1e-8)).abs() < 1e-15);
        let fb = ModelParams::feedback_set(0.02, 0.0);
        assert_eq!(prey_free_outcome(&fb, 10.0, &cfg), None);
    }

    #[test]
    fn sweep_is_thread_count_independent() {
        let spec = GridSpec::square(0.0, 100.0, 6);
        let cfg = BlowupConfig::default();
        let p = ModelParams::baseline();
        let a = sweep_with_threads(&p, &spec, &cfg, 1).unwrap();
        let b = sweep_with_threads(&p, &spec, &cfg, 3).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.t_star, b.t_star);
    }

    #[test]
    fn vacuous_conjecture_check() {
        let spec = GridSpec::square(0.0, 100.0, 3);
        let p = ModelParams::baseline();
        let grid = sweep(&p, &spec, &BlowupConfig::default()).unwrap();
        let c = conjecture_region_check(&grid, &p, 0.6);
        assert!(c.sufficient_holds);
        assert_eq!(c.violations, 0);
        assert!(c.vacuous_reason.is_some());
    }
}
