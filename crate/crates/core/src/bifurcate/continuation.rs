use serde::{Deserialize, Serialize};

use super::cycles::{return_map, PeriodicOrbit, Return, ReturnOptions, Section};
use super::BifurcationError;
use crate::model::{interior_equilibrium, Model, ModelParams, ParamName, State};

/// Below this offset from the equilibrium the scaled displacement is
/// interpolated through its linear limit instead of integrated.
const NEAR_EQUILIBRIUM: f64 = 1e-4;
/// Parameter step (in scaled units) for the finite-difference derivative.
const PARAM_FD: f64 = 1e-4;
const CORRECTOR_MAX_ITER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    /// Initial pseudo-arclength step in scaled units.
    pub step: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Parameter scale used in the arclength metric; defaults to the range width.
    pub param_scale: Option<f64>,
    pub max_points: usize,
    pub tol: f64,
    pub returns: ReturnOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            step: 2e-3,
            step_min: 1e-10,
            step_max: 1e-2,
            param_scale: None,
            max_points: 2000,
            tol: 1e-10,
            returns: ReturnOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub param: f64,
    /// Signed offset of the anchor from the equilibrium ordinate; negative
    /// values represent the cycle by its crossing of the lower ray.
    pub amplitude: f64,
    pub anchor: State,
    pub period: f64,
    pub floquet: f64,
    pub stable: bool,
    pub is_lpc: bool,
    /// Parameter component of the unit tangent (scaled units).
    pub tangent_param: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub param: f64,
    pub amplitude: f64,
    pub period: f64,
    /// d^2(param)/ds^2 at the fold, with s the scaled arclength.
    pub coefficient: f64,
    /// The branch turns while passing through the equilibrium, i.e. at the
    /// Hopf point where the cycle shrinks to zero amplitude.
    pub through_equilibrium: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleBranch {
    pub vary: ParamName,
    /// Points in branch order; fold points are interleaved with `is_lpc = true`.
    pub points: Vec<BranchPoint>,
    pub folds: Vec<FoldPoint>,
    pub stop_reasons: Vec<String>,
}

struct Eval {
    h: f64,
    h_a: f64,
    h_l: f64,
    ret: Return,
    section: Section,
}

struct Problem<'a> {
    base: &'a ModelParams,
    vary: ParamName,
    scale: f64,
    returns: ReturnOptions,
}

impl Problem<'_> {
    fn params(&self, l: f64) -> ModelParams {
        self.base.with(self.vary, l * self.scale)
    }

    /// Scaled displacement `(P(a) - a) / a` and its offset derivative.
    fn displacement(
        &self,
        a: f64,
        l: f64,
    ) -> Result<(f64, f64, Return, Section), BifurcationError> {
        let p = self.params(l);
        let model = Model::new(p)?;
        let section = Section::through_equilibrium(&p)?;
        let raw = |a: f64| -> Result<(f64, f64, Return), BifurcationError> {
            let r = return_map(&model, &section, section.y_floor + a, &self.returns)?;
            let g = r.y - section.y_floor - a;
            Ok((g / a, (r.derivative - 1.0) / a - g / (a * a), r))
        };
        if a.abs() >= NEAR_EQUILIBRIUM {
            let (h, h_a, r) = raw(a)?;
            return Ok((h, h_a, r, section));
        }
        // Quadratic through the two sides and the linear return ratio.
        let eq = interior_equilibrium(&p)?;
        let disc = eq.det - 0.25 * eq.trace * eq.trace;
        if !(disc > 0.0) {
            return Err(BifurcationError::Invalid(
                "equilibrium is not a focus; no small cycles".into(),
            ));
        }
        let h0 = (std::f64::consts::PI * eq.trace / disc.sqrt()).exp_m1();
        let (hp, _, rp) = raw(NEAR_EQUILIBRIUM)?;
        let (hm, _, rm) = raw(-NEAR_EQUILIBRIUM)?;
        let e = NEAR_EQUILIBRIUM;
        let c1 = (hp - hm) / (2.0 * e);
        let c2 = (hp - 2.0 * h0 + hm) / (2.0 * e * e);
        let r = if a >= 0.0 { rp } else { rm };
        Ok((h0 + c1 * a + c2 * a * a, c1 + 2.0 * c2 * a, r, section))
    }

    fn eval(&self, a: f64, l: f64) -> Result<Eval, BifurcationError> {
        let (h, h_a, ret, section) = self.displacement(a, l)?;
        let (hp, ..) = self.displacement(a, l + PARAM_FD)?;
        let (hm, ..) = self.displacement(a, l - PARAM_FD)?;
        Ok(Eval {
            h,
            h_a,
            h_l: (hp - hm) / (2.0 * PARAM_FD),
            ret,
            section,
        })
    }
}

fn tangent(e: &Eval, prev: [f64; 2]) -> [f64; 2] {
    let n = e.h_a.hypot(e.h_l);
    let t = [-e.h_l / n, e.h_a / n];
    if t[0] * prev[0] + t[1] * prev[1] < 0.0 {
        [-t[0], -t[1]]
    } else {
        t
    }
}

struct Node {
    a: f64,
    l: f64,
    t: [f64; 2],
    eval: Eval,
}

fn branch_point(p: &Problem, n: &Node) -> BranchPoint {
    let floquet = n.eval.ret.derivative;
    BranchPoint {
        param: n.l * p.scale,
        amplitude: n.a,
        anchor: State::new(n.eval.section.x, n.eval.section.y_floor + n.a),
        period: n.eval.ret.time,
        floquet,
        stable: floquet.abs() < 1.0,
        is_lpc: false,
        tangent_param: n.t[1],
    }
}

/// Pseudo-arclength corrector from the predicted point.
fn correct(
    p: &Problem,
    pred: [f64; 2],
    t: [f64; 2],
    tol: f64,
) -> Result<(f64, f64, Eval), BifurcationError> {
    let (mut a, mut l) = (pred[0], pred[1]);
    for _ in 0..CORRECTOR_MAX_ITER {
        let e = p.eval(a, l)?;
        let r2 = t[0] * (a - pred[0]) + t[1] * (l - pred[1]);
        let det = e.h_a * t[1] - e.h_l * t[0];
        if !(det.abs() > 0.0) {
            break;
        }
        let da = (-e.h * t[1] + e.h_l * r2) / det;
        let dl = (-e.h_a * r2 + e.h * t[0]) / det;
        a += da;
        l += dl;
        if da.abs().max(dl.abs()) < tol && e.h.abs() < tol {
            let e = p.eval(a, l)?;
            return Ok((a, l, e));
        }
    }
    Err(BifurcationError::NewtonDiverged {
        iterations: CORRECTOR_MAX_ITER,
        last: a,
        reason: "continuation corrector did not converge".into(),
    })
}

struct Walk {
    points: Vec<BranchPoint>,
    folds: Vec<(usize, FoldPoint)>,
    stop: String,
}

fn walk(
    p: &Problem,
    start: &Node,
    direction: f64,
    range: (f64, f64),
    opts: &ContinuationOptions,
) -> Result<Walk, BifurcationError> {
    let mut node = Node {
        a: start.a,
        l: start.l,
        t: if start.t[1] * direction >= 0.0 {
            start.t
        } else {
            [-start.t[0], -start.t[1]]
        },
        eval: p.eval(start.a, start.l)?,
    };
    let start_side = start.a.signum();
    let mut h = opts.step;
    let mut points = Vec::new();
    let mut folds = Vec::new();
    let stop = loop {
        if points.len() >= opts.max_points {
            break "point budget exhausted".to_string();
        }
        let pred = [node.a + h * node.t[0], node.l + h * node.t[1]];
        let (a, l, e) = match correct(p, pred, node.t, opts.tol) {
            Ok(v) if (v.0 - node.a).hypot(v.1 - node.l) < 2.0 * h => v,
            _ => {
                h *= 0.5;
                if h < opts.step_min {
                    return Err(BifurcationError::ContinuationStalled {
                        param: p.vary,
                        value: node.l * p.scale,
                        step: h,
                    });
                }
                continue;
            }
        };
        let t = tangent(&e, node.t);
        let next = Node { a, l, t, eval: e };
        let value = l * p.scale;
        if value < range.0 || value > range.1 {
            break format!("left the range at {} = {value}", p.vary);
        }
        if t[1].signum() != node.t[1].signum() {
            // dl/ds is linear in s between the nodes.
            let ds = (a - node.a).hypot(l - node.l);
            let kappa = (t[1] - node.t[1]) / ds;
            let s = -node.t[1] / kappa;
            let lf = node.l + node.t[1] * s + 0.5 * kappa * s * s;
            let af = node.a + (a - node.a) * s / ds;
            let period = node.eval.ret.time + (next.eval.ret.time - node.eval.ret.time) * s / ds;
            folds.push((
                points.len(),
                FoldPoint {
                    param: lf * p.scale,
                    amplitude: af,
                    period,
                    coefficient: kappa * p.scale,
                    through_equilibrium: node.a.signum() != a.signum(),
                },
            ));
        }
        points.push(branch_point(p, &next));
        let crossed = a.signum() != start_side;
        node = next;
        if crossed {
            break "passed through the equilibrium".to_string();
        }
        h = (h * 1.3).min(opts.step_max);
    };
    Ok(Walk {
        points,
        folds,
        stop,
    })
}

/// Continues a periodic orbit in `vary` over `range` in both directions.
///
/// Unknowns are the anchor offset `a` from the equilibrium on the line
/// `X = X*` and the parameter; the defining equation is the scaled
/// displacement `(P(a) - a) / a = 0`, which stays regular as the cycle
/// shrinks onto the equilibrium. Folds are flagged where the parameter
/// component of the tangent changes sign.
pub fn continue_cycles(
    params: &ModelParams,
    vary: ParamName,
    range: (f64, f64),
    start: &PeriodicOrbit,
    opts: &ContinuationOptions,
) -> Result<CycleBranch, BifurcationError> {
    if !(range.1 > range.0) {
        return Err(BifurcationError::Invalid(format!(
            "empty continuation range [{}, {}]",
            range.0, range.1
        )));
    }
    let v0 = params.get(vary);
    if v0 < range.0 || v0 > range.1 {
        return Err(BifurcationError::Invalid(format!(
            "start value {vary} = {v0} outside the range"
        )));
    }
    let scale = opts.param_scale.unwrap_or(range.1 - range.0);
    let p = Problem {
        base: params,
        vary,
        scale,
        returns: opts.returns,
    };
    let l0 = v0 / scale;
    let section = Section::through_equilibrium(params)?;
    let a0 = start.anchor.y - section.y_floor;
    if !(a0 > 0.0) {
        return Err(BifurcationError::Invalid(
            "start orbit must be anchored on the upper ray".into(),
        ));
    }
    let e0 = p.eval(a0, l0)?;
    let t0 = tangent(&e0, [0.0, 1.0]);
    let start_node = Node {
        a: a0,
        l: l0,
        t: t0,
        eval: e0,
    };
    let first = branch_point(&p, &start_node);
    let back = walk(&p, &start_node, -1.0, range, opts)?;
    let fwd = walk(&p, &start_node, 1.0, range, opts)?;

    let mut points = Vec::new();
    let mut folds = Vec::new();
    // The nontrivial multiplier equals one at a fold.
    let lpc_row = |f: &FoldPoint| BranchPoint {
        param: f.param,
        amplitude: f.amplitude,
        anchor: interior_equilibrium(&params.with(vary, f.param))
            .map(|e| State::new(e.point.x, e.point.y + f.amplitude))
            .unwrap_or(State::new(f64::NAN, f64::NAN)),
        period: f.period,
        floquet: 1.0,
        stable: false,
        is_lpc: true,
        tangent_param: 0.0,
    };
    // Backward walk reversed: a fold recorded before point k sits after it.
    for k in (0..back.points.len()).rev() {
        points.push(back.points[k]);
        for (_, f) in back.folds.iter().filter(|(i, _)| *i == k) {
            points.push(lpc_row(f));
            folds.push(*f);
        }
    }
    points.push(first);
    for (k, bp) in fwd.points.iter().enumerate() {
        for (_, f) in fwd.folds.iter().filter(|(i, _)| *i == k) {
            points.push(lpc_row(f));
            folds.push(*f);
        }
        points.push(*bp);
    }
    Ok(CycleBranch {
        vary,
        points,
        folds,
        stop_reasons: vec![back.stop, fwd.stop],
    })
}
