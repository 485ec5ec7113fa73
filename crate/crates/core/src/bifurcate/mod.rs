//! Equilibrium classification, Hopf and Bautin points, periodic orbits and
//! fold-of-cycles continuation.

mod continuation;
mod cycles;
mod lyapunov;

pub use continuation::{continue_cycles, BranchPoint, ContinuationOptions, CycleBranch, FoldPoint};
pub use cycles::{
    find_cycle, find_cycle_on_section, return_map, section_fixed_points, section_ordinate,
    two_cycle_certificate, OrbitStability, PeriodicOrbit, Return, ReturnOptions, Section,
    TwoCycleCertificate, CYCLE_RESIDUAL_TOL,
};
pub use lyapunov::{first_lyapunov, first_lyapunov_field, PlanarField, HOPF_TRACE_TOL};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    classify_linear, det, interior_equilibrium, jacobian_uncontrolled, stability_threshold_c,
    trace, Equilibrium, EquilibriumKind, ModelError, ModelParams, ParamName, Stability, State,
};
use crate::solve::SolveError;

#[derive(Debug, Error)]
pub enum BifurcationError {
    #[error("not on the Hopf locus: trace {trace:e}, det {det:e}")]
    NotOnHopfLocus { trace: f64, det: f64 },
    #[error("Newton iteration failed after {iterations} iterations at y = {last}: {reason}")]
    NewtonDiverged {
        iterations: usize,
        last: f64,
        reason: String,
    },
    #[error("trajectory did not return to the section within t = {t_max}")]
    SectionNotCrossed { t_max: f64 },
    #[error("continuation stalled at {param} = {value} (step {step:e})")]
    ContinuationStalled {
        param: ParamName,
        value: f64,
        step: f64,
    },
    #[error("first Lyapunov coefficient does not change sign along the Hopf locus in the box")]
    NoSignChange,
    #[error("Hopf locus not found for {param} = {value}")]
    HopfLocusNotFound { param: ParamName, value: f64 },
    #[error("finite differences inconsistent: {0}")]
    FiniteDifference(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// E0 = (0, 0), E1 = (K, 0) and, when it exists, the interior equilibrium.
///
/// At E0 and E1 the predator equation is quadratic in Y, so the Jacobian has a
/// zero eigenvalue; E0 (trace R) is reported as a saddle and E1 (trace -R) as
/// degenerate.
pub fn classify_equilibria(params: &ModelParams) -> Vec<Equilibrium> {
    let boundary = |kind, point: State, classification| {
        let j = jacobian_uncontrolled(params, point);
        Equilibrium {
            kind,
            point,
            det: det(&j),
            trace: trace(&j),
            classification,
        }
    };
    let mut out = vec![
        boundary(
            EquilibriumKind::Extinction,
            State::new(0.0, 0.0),
            Stability::Saddle,
        ),
        boundary(
            EquilibriumKind::PredatorFree,
            State::new(params.k, 0.0),
            Stability::Degenerate,
        ),
    ];
    if let Ok(e) = interior_equilibrium(params) {
        out.push(e);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    pub param: ParamName,
    pub value: f64,
    pub equilibrium: State,
    pub trace: f64,
    pub omega: f64,
    pub lyapunov: f64,
}

fn hopf_point_at(params: &ModelParams, param: ParamName) -> Result<HopfPoint, BifurcationError> {
    let eq = interior_equilibrium(params)?;
    if !(eq.det > 0.0) {
        return Err(BifurcationError::NotOnHopfLocus {
            trace: eq.trace,
            det: eq.det,
        });
    }
    let lyapunov = first_lyapunov(params)?;
    Ok(HopfPoint {
        param,
        value: params.get(param),
        equilibrium: eq.point,
        trace: eq.trace,
        omega: eq.det.sqrt(),
        lyapunov,
    })
}

/// Hopf point obtained by setting C to its closed-form critical value.
pub fn hopf_in_c(params: &ModelParams) -> Result<HopfPoint, BifurcationError> {
    let ch = stability_threshold_c(params)?;
    let at = params.with(ParamName::C, ch);
    hopf_point_at(&at, ParamName::C)
}

fn interior_trace(params: &ModelParams) -> Option<f64> {
    interior_equilibrium(params).ok().map(|e| e.trace)
}

/// Solves trace(J) = 0 for `p2` in `[lo, hi]` with the other parameters fixed:
/// scan for a sign change, then bisect to machine resolution.
pub fn hopf_locus_point(
    params: &ModelParams,
    p2: ParamName,
    lo: f64,
    hi: f64,
) -> Result<f64, BifurcationError> {
    const SCAN: usize = 64;
    let at = |v: f64| interior_trace(&params.with(p2, v));
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=SCAN {
        let v = lo + (hi - lo) * k as f64 / SCAN as f64;
        let Some(t) = at(v) else {
            prev = None;
            continue;
        };
        if let Some((pv, pt)) = prev {
            if pt.signum() != t.signum() || t == 0.0 {
                let (mut a, mut b, mut ta) = (pv, v, pt);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    let Some(tm) = at(m) else { break };
                    if tm.signum() == ta.signum() && tm != 0.0 {
                        a = m;
                        ta = tm;
                    } else {
                        b = m;
                    }
                }
                // Pick the endpoint with the smaller trace.
                let tb = at(b).unwrap_or(f64::INFINITY);
                return Ok(if ta.abs() <= tb.abs() { a } else { b });
            }
        }
        prev = Some((v, t));
    }
    Err(BifurcationError::HopfLocusNotFound {
        param: p2,
        value: params.get(p2),
    })
}

/// Hopf point on the locus in `(p1, p2)` at the given `p1`.
pub fn hopf_on_locus(
    params: &ModelParams,
    p1: ParamName,
    v1: f64,
    p2: ParamName,
    p2_range: (f64, f64),
) -> Result<HopfPoint, BifurcationError> {
    let base = params.with(p1, v1);
    let v2 = hopf_locus_point(&base, p2, p2_range.0, p2_range.1).map_err(|_| {
        BifurcationError::HopfLocusNotFound {
            param: p1,
            value: v1,
        }
    })?;
    hopf_point_at(&base.with(p2, v2), p2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BautinPoint {
    pub p1: ParamName,
    pub v1: f64,
    pub p2: ParamName,
    pub v2: f64,
    pub hopf: HopfPoint,
    /// First Lyapunov coefficients at the final bracket ends.
    pub bracket: [(f64, f64); 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BautinBox {
    pub p1: (f64, f64),
    pub p2: (f64, f64),
}

/// Walks the Hopf locus across the box in `p1`, finds a sign change of the
/// first Lyapunov coefficient and bisects it to `|dp1| < 1e-5`.
pub fn find_bautin(
    params: &ModelParams,
    p1: ParamName,
    p2: ParamName,
    bbox: BautinBox,
) -> Result<BautinPoint, BifurcationError> {
    if p1 == p2 {
        return Err(BifurcationError::Invalid("p1 and p2 must differ".into()));
    }
    const WALK: usize = 40;
    const TOL: f64 = 1e-5;
    const LYAP_TOL: f64 = 1e-7;
    let l1 = |v1: f64| {
        hopf_on_locus(params, p1, v1, p2, bbox.p2)
            .map(|h| h.lyapunov)
            .ok()
    };
    let (a, b) = bbox.p1;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for k in 0..=WALK {
        let v = a + (b - a) * k as f64 / WALK as f64;
        let Some(l) = l1(v) else { continue };
        if let Some((pv, pl)) = prev {
            if pl.signum() != l.signum() {
                bracket = Some((pv, pl, v, l));
                break;
            }
        }
        prev = Some((v, l));
    }
    let Some((mut lo, mut llo, mut hi, mut lhi)) = bracket else {
        return if prev.is_none() {
            Err(BifurcationError::HopfLocusNotFound {
                param: p1,
                value: a,
            })
        } else {
            Err(BifurcationError::NoSignChange)
        };
    };
    // Beyond the width requirement, keep halving until the coefficient itself
    // is negligible.
    let mut v1 = 0.5 * (lo + hi);
    for _ in 0..100 {
        v1 = 0.5 * (lo + hi);
        let lm = l1(v1).ok_or(BifurcationError::HopfLocusNotFound {
            param: p1,
            value: v1,
        })?;
        if (hi - lo < TOL && lm.abs() < LYAP_TOL) || v1 <= lo || v1 >= hi {
            break;
        }
        if lm.signum() == llo.signum() {
            lo = v1;
            llo = lm;
        } else {
            hi = v1;
            lhi = lm;
        }
    }
    let hopf = hopf_on_locus(params, p1, v1, p2, bbox.p2)?;
    Ok(BautinPoint {
        p1,
        v1,
        p2,
        v2: hopf.value,
        hopf,
        bracket: [(lo, llo), (hi, lhi)],
    })
}

/// Classification of the interior equilibrium directly from the closed-form
/// trace and determinant.
pub fn interior_stability(params: &ModelParams) -> Result<Stability, BifurcationError> {
    let e = interior_equilibrium(params)?;
    Ok(classify_linear(e.trace, e.det))
}
