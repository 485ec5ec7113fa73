//! Model variants, closed-form equilibria, Jacobians and parametric predicates.
//!
//! All four variants share one right-hand side:
//!
//! ```text
//! dX/dt = R X (1 - X(t - tau)/K) - M X Y / (X^p + C) [- u (X - X*)]
//! dY/dt = (D - E/(X + A)) Y^2                         [- u (Y - Y*)]
//! ```
//!
//! `DelayedPrey` reads the logistic term from the delayed prey, `DelayedPredator`
//! replaces the growth part of the predator equation by `D Y(t - tau)^2`, and
//! `Feedback` adds the linear control towards the uncontrolled interior
//! equilibrium (delayed logistic term when `tau > 0`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("no interior equilibrium: {0}")]
    NoInteriorEquilibrium(String),
    #[error("right-hand side domain error at X = {x}: {reason}")]
    Domain { x: f64, reason: &'static str },
    #[error("largeness predicate precondition failed: {0}")]
    LargenessPrecondition(String),
}

/// Which of the four model variants a parameter set describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ModelKind {
    #[default]
    NonDelayed,
    DelayedPrey,
    DelayedPredator,
    Feedback,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::NonDelayed => "NonDelayed",
            ModelKind::DelayedPrey => "DelayedPrey",
            ModelKind::DelayedPredator => "DelayedPredator",
            ModelKind::Feedback => "Feedback",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NonDelayed" => Ok(ModelKind::NonDelayed),
            "DelayedPrey" => Ok(ModelKind::DelayedPrey),
            "DelayedPredator" => Ok(ModelKind::DelayedPredator),
            "Feedback" => Ok(ModelKind::Feedback),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

/// All model constants plus the variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Prey intrinsic growth rate.
    #[serde(rename = "R")]
    pub r: f64,
    /// Prey carrying capacity.
    #[serde(rename = "K")]
    pub k: f64,
    /// Maximum predation rate.
    #[serde(rename = "M")]
    pub m: f64,
    /// Functional-response exponent.
    pub p: f64,
    /// Environmental protection constant.
    #[serde(rename = "C")]
    pub c: f64,
    /// Predator reproduction rate.
    #[serde(rename = "D")]
    pub d: f64,
    /// Maximum predator death rate.
    #[serde(rename = "E")]
    pub e: f64,
    /// Residual-loss constant.
    #[serde(rename = "A")]
    pub a: f64,
    pub tau: f64,
    /// Linear feedback gain.
    pub u: f64,
    pub kind: ModelKind,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::baseline()
    }
}

impl ModelParams {
    /// R=K=1, M=1.2, p=2, D=0.5, E=0.2, A=0.2, C=0.3, no delay, no control.
    pub fn baseline() -> Self {
        ModelParams {
            r: 1.0,
            k: 1.0,
            m: 1.2,
            p: 2.0,
            c: 0.3,
            d: 0.5,
            e: 0.2,
            a: 0.2,
            tau: 0.0,
            u: 0.0,
            kind: ModelKind::NonDelayed,
        }
    }

    /// The D=0.4 set used for the feedback-control examples.
    pub fn feedback_set(u: f64, tau: f64) -> Self {
        ModelParams {
            d: 0.4,
            u,
            tau,
            kind: ModelKind::Feedback,
            ..Self::baseline()
        }
    }

    pub fn with(mut self, name: ParamName, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::R => self.r,
            ParamName::K => self.k,
            ParamName::M => self.m,
            ParamName::P => self.p,
            ParamName::C => self.c,
            ParamName::D => self.d,
            ParamName::E => self.e,
            ParamName::A => self.a,
            ParamName::Tau => self.tau,
            ParamName::U => self.u,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        let slot = match name {
            ParamName::R => &mut self.r,
            ParamName::K => &mut self.k,
            ParamName::M => &mut self.m,
            ParamName::P => &mut self.p,
            ParamName::C => &mut self.c,
            ParamName::D => &mut self.d,
            ParamName::E => &mut self.e,
            ParamName::A => &mut self.a,
            ParamName::Tau => &mut self.tau,
            ParamName::U => &mut self.u,
        };
        *slot = value;
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("R", self.r),
            ("K", self.k),
            ("M", self.m),
            ("C", self.c),
            ("D", self.d),
            ("E", self.e),
            ("A", self.a),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(ModelError::InvalidParameter {
                name: "p",
                reason: format!("must be >= 1, got {}", self.p),
            });
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "tau",
                reason: format!("must be >= 0, got {}", self.tau),
            });
        }
        if !(self.u.is_finite() && self.u >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "u",
                reason: format!("must be >= 0, got {}", self.u),
            });
        }
        Ok(())
    }

    /// True when the variant needs a history function (a positive delay is in effect).
    pub fn is_delayed(&self) -> bool {
        match self.kind {
            ModelKind::NonDelayed => false,
            ModelKind::DelayedPrey | ModelKind::DelayedPredator => true,
            ModelKind::Feedback => self.tau > 0.0,
        }
    }
}

/// Names of the scalar model constants, used by continuation and locus tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamName {
    R,
    K,
    M,
    #[serde(rename = "p")]
    P,
    C,
    D,
    E,
    A,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "u")]
    U,
}

impl ParamName {
    pub const ALL: [ParamName; 10] = [
        ParamName::R,
        ParamName::K,
        ParamName::M,
        ParamName::P,
        ParamName::C,
        ParamName::D,
        ParamName::E,
        ParamName::A,
        ParamName::Tau,
        ParamName::U,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::R => "R",
            ParamName::K => "K",
            ParamName::M => "M",
            ParamName::P => "p",
            ParamName::C => "C",
            ParamName::D => "D",
            ParamName::E => "E",
            ParamName::A => "A",
            ParamName::Tau => "tau",
            ParamName::U => "u",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamName::ALL
            .iter()
            .copied()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown parameter `{s}`"))
    }
}

/// Prey and predator densities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
}

impl State {
    pub const fn new(x: f64, y: f64) -> Self {
        State { x, y }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn from_array(v: [f64; 2]) -> Self {
        State { x: v[0], y: v[1] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for State {
    fn from(v: [f64; 2]) -> Self {
        State::from_array(v)
    }
}

/// 2x2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

pub fn trace(j: &Mat2) -> f64 {
    j[0][0] + j[1][1]
}

pub fn det(j: &Mat2) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Extinction,
    PredatorFree,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Saddle,
    Degenerate,
    StableNode,
    StableSpiral,
    UnstableNode,
    UnstableSpiral,
    CenterLike,
}

impl Stability {
    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableSpiral)
    }
}

const DISCRIMINANT_TIE: f64 = 1e-12;

/// Linear classification from trace and determinant.
pub fn classify_linear(tr: f64, dt: f64) -> Stability {
    if dt < 0.0 {
        return Stability::Saddle;
    }
    if dt == 0.0 {
        return Stability::Degenerate;
    }
    if tr == 0.0 {
        return Stability::CenterLike;
    }
    let disc = tr * tr - 4.0 * dt;
    let spiral = disc < -DISCRIMINANT_TIE;
    match (tr < 0.0, spiral) {
        (true, true) => Stability::StableSpiral,
        (true, false) => Stability::StableNode,
        (false, true) => Stability::UnstableSpiral,
        (false, false) => Stability::UnstableNode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub point: State,
    pub det: f64,
    pub trace: f64,
    pub classification: Stability,
}

/// X^p for X >= 0; negative trial values are clamped to zero.
#[inline]
fn power(x: f64, p: f64) -> f64 {
    let x = x.max(0.0);
    if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

/// X* = (E - A D)/D, independent of C, K, M and R.
pub fn interior_prey(params: &ModelParams) -> f64 {
    (params.e - params.a * params.d) / params.d
}

/// Interior equilibrium of the uncontrolled system.
pub fn interior_equilibrium(params: &ModelParams) -> Result<Equilibrium, ModelError> {
    let ModelParams {
        r,
        k,
        m,
        p,
        c,
        d,
        e,
        a,
        ..
    } = *params;
    let margin = e - a * d;
    if !(margin > 0.0) {
        return Err(ModelError::NoInteriorEquilibrium(format!(
            "E - A D = {margin} is not positive"
        )));
    }
    let xs = margin / d;
    let ys = r * (1.0 - xs / k) * (power(xs, p) + c) / m;
    if !(ys > 0.0) {
        return Err(ModelError::NoInteriorEquilibrium(format!(
            "X* = {xs} is not below the carrying capacity K = {k}"
        )));
    }
    let point = State::new(xs, ys);
    let j = jacobian_uncontrolled(params, point);
    let (tr, dt) = (trace(&j), det(&j));
    Ok(Equilibrium {
        kind: EquilibriumKind::Interior,
        point,
        det: dt,
        trace: tr,
        classification: classify_linear(tr, dt),
    })
}

/// Model with the feedback target cached at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    params: ModelParams,
    target: Option<State>,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self, ModelError> {
        params.validate()?;
        let target = match params.kind {
            ModelKind::Feedback => Some(interior_equilibrium(&params)?.point),
            _ => None,
        };
        Ok(Model { params, target })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// The uncontrolled interior equilibrium used as feedback target, if any.
    pub fn feedback_target(&self) -> Option<State> {
        self.target
    }

    /// Right-hand side. `delayed` is the state at `t - tau` and is ignored by
    /// undelayed variants.
    #[inline]
    pub fn rhs(&self, s: State, delayed: State) -> Result<State, ModelError> {
        let ModelParams {
            r,
            k,
            m,
            p,
            c,
            d,
            e,
            a,
            u,
            kind,
            ..
        } = self.params;
        let xp = power(s.x, p) + c;
        if xp == 0.0 {
            return Err(ModelError::Domain {
                x: s.x,
                reason: "X^p + C = 0",
            });
        }
        let xa = s.x + a;
        if xa == 0.0 {
            return Err(ModelError::Domain {
                x: s.x,
                reason: "X + A = 0",
            });
        }
        let predation = m * s.x * s.y / xp;
        let y2 = s.y * s.y;
        let out = match kind {
            ModelKind::NonDelayed => {
                State::new(r * s.x * (1.0 - s.x / k) - predation, (d - e / xa) * y2)
            }
            ModelKind::DelayedPrey => State::new(
                r * s.x * (1.0 - delayed.x / k) - predation,
                (d - e / xa) * y2,
            ),
            ModelKind::DelayedPredator => State::new(
                r * s.x * (1.0 - s.x / k) - predation,
                d * delayed.y * delayed.y - e / xa * y2,
            ),
            ModelKind::Feedback => {
                let target = self.target.unwrap_or_default();
                let lag = if self.params.tau > 0.0 {
                    delayed.x
                } else {
                    s.x
                };
                State::new(
                    r * s.x * (1.0 - lag / k) - predation - u * (s.x - target.x),
                    (d - e / xa) * y2 - u * (s.y - target.y),
                )
            }
        };
        Ok(out)
    }

    /// Jacobian of the undelayed vector field (delayed argument identified with
    /// the current state), including the control terms for `Feedback`.
    pub fn jacobian(&self, s: State) -> Mat2 {
        let mut j = jacobian_uncontrolled(&self.params, s);
        if self.params.kind == ModelKind::Feedback {
            j[0][0] -= self.params.u;
            j[1][1] -= self.params.u;
        }
        j
    }
}

/// Free-function form of [`Model::rhs`]; builds the model on every call.
pub fn rhs(params: &ModelParams, state: State, delayed: State) -> Result<State, ModelError> {
    Model::new(*params)?.rhs(state, delayed)
}

/// Closed-form Jacobian of the non-delayed field.
pub fn jacobian_uncontrolled(params: &ModelParams, s: State) -> Mat2 {
    let ModelParams {
        r,
        k,
        m,
        p,
        c,
        d,
        e,
        a,
        ..
    } = *params;
    let xp = power(s.x, p);
    let den = c + xp;
    let xa = a + s.x;
    [
        [
            m * s.y * ((p - 1.0) * xp - c) / (den * den) - 2.0 * r * s.x / k + r,
            -m * s.x / den,
        ],
        [e * s.y * s.y / (xa * xa), 2.0 * s.y * (d - e / xa)],
    ]
}

/// Jacobian of the variant selected in `params`.
pub fn jacobian(params: &ModelParams, state: State) -> Mat2 {
    let mut j = jacobian_uncontrolled(params, state);
    if params.kind == ModelKind::Feedback {
        j[0][0] -= params.u;
        j[1][1] -= params.u;
    }
    j
}

/// Trace of J at the interior equilibrium from the closed form.
pub fn interior_trace_closed_form(params: &ModelParams) -> f64 {
    let ModelParams {
        r,
        k,
        p,
        c,
        d,
        e,
        a,
        ..
    } = *params;
    let q = (e / d - a).powf(p);
    (c * r * (a * d - e) + r * q * (a * d * (p + 1.0) + d * k * p - e * (p + 1.0)))
        / (d * k * (q + c))
}

/// Determinant of J at the interior equilibrium from the closed form.
pub fn interior_det_closed_form(params: &ModelParams) -> f64 {
    let ModelParams {
        r,
        k,
        m,
        p,
        c,
        d,
        e,
        a,
        ..
    } = *params;
    let q = (e / d - a).powf(p);
    let s = a * d + d * k - e;
    r * r * (e - a * d) * s * s * (q + c) / (d * e * k * k * m)
}

/// Critical protection constant C_H: the interior equilibrium is stable for C > C_H.
pub fn stability_threshold_c(params: &ModelParams) -> Result<f64, ModelError> {
    let ModelParams { k, p, d, e, a, .. } = *params;
    let margin = e - a * d;
    if margin == 0.0 {
        return Err(ModelError::NoInteriorEquilibrium("E = A D".into()));
    }
    if margin < 0.0 {
        return Err(ModelError::NoInteriorEquilibrium(format!(
            "E - A D = {margin} is negative"
        )));
    }
    let q = (e / d - a).powf(p);
    Ok(q * (a * d * p + a * d + d * k * p - e * p - e) / margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundednessCheck {
    pub holds: bool,
    pub mu: f64,
    /// Right side of `mu < D X* / (X*^p + C)`.
    pub first_rhs: f64,
    /// Left side of `D - E/(X* + A) < (D/M) (X*/Y*)^2`.
    pub second_lhs: f64,
    pub second_rhs: f64,
}

/// The two boundedness inequalities claimed for the non-delayed model.
pub fn boundedness_predicate(params: &ModelParams) -> Result<BoundednessCheck, ModelError> {
    let eq = interior_equilibrium(params)?;
    let State { x: xs, y: ys } = eq.point;
    let ModelParams {
        m, p, c, d, e, a, ..
    } = *params;
    let mu = m.min(e);
    let first_rhs = d * xs / (power(xs, p) + c);
    let second_lhs = d - e / (xs + a);
    let second_rhs = d / m * (xs / ys).powi(2);
    Ok(BoundednessCheck {
        holds: mu < first_rhs && second_lhs < second_rhs,
        mu,
        first_rhs,
        second_lhs,
        second_rhs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargenessCheck {
    pub holds: bool,
    /// `ln(|X0| / (E/(D - delta1) - A))`, absent when the log is undefined.
    pub log_margin: Option<f64>,
    /// Blow-up time bound `1/(delta1 |Y0|)`.
    pub blowup_time_bound: f64,
    pub reason: Option<String>,
}

/// Largeness condition on initial data that is sufficient for predator blow-up.
pub fn largeness_predicate(
    params: &ModelParams,
    delta1: f64,
    ic: State,
) -> Result<LargenessCheck, ModelError> {
    let ModelParams { d, e, a, .. } = *params;
    if !(delta1 > 0.0) {
        return Err(ModelError::LargenessPrecondition(format!(
            "delta1 = {delta1} must be positive"
        )));
    }
    if !(d - delta1 > 0.0) {
        return Err(ModelError::LargenessPrecondition(format!(
            "D - delta1 = {} must be positive",
            d - delta1
        )));
    }
    let floor = e / (d - delta1) - a;
    if !(floor > 0.0) {
        return Err(ModelError::LargenessPrecondition(format!(
            "E/(D - delta1) - A = {floor} must be positive"
        )));
    }
    let bound = 1.0 / (delta1 * ic.y.abs());
    let arg = ic.x.abs() / floor;
    if !(arg > 0.0) {
        return Ok(LargenessCheck {
            holds: false,
            log_margin: None,
            blowup_time_bound: bound,
            reason: Some(format!("logarithm argument {arg} is not positive")),
        });
    }
    let lm = arg.ln();
    Ok(LargenessCheck {
        holds: lm > bound,
        log_margin: Some(lm),
        blowup_time_bound: bound,
        reason: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCoefficients {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub x_star: f64,
    pub y_star: f64,
}

/// Linearisation coefficients of the controlled system about the uncontrolled
/// interior equilibrium. The predation coefficient uses M.
pub fn feedback_coefficients(params: &ModelParams) -> Result<FeedbackCoefficients, ModelError> {
    let eq = interior_equilibrium(params)?;
    let State { x: xs, y: ys } = eq.point;
    let ModelParams { m, p, c, d, e, .. } = *params;
    let xp = power(xs, p);
    Ok(FeedbackCoefficients {
        a11: m * p * ys * xp / ((xp + c) * (xp + c)),
        a12: m * xs / (xp + c),
        a21: d * d * ys * ys / e,
        x_star: xs,
        y_star: ys,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCheck {
    pub holds: bool,
    pub first: bool,
    pub second: bool,
    pub coefficients: FeedbackCoefficients,
}

/// Claimed stability condition for the undelayed feedback model:
/// `u > (A11 - X*)/2` and `u^2 - (A11 - X*) u + A12 A21 > 0`.
pub fn feedback_stability_nodelay(params: &ModelParams) -> Result<FeedbackCheck, ModelError> {
    let co = feedback_coefficients(params)?;
    let u = params.u;
    let s = co.a11 - co.x_star;
    let first = u > 0.5 * s;
    let second = u * u - s * u + co.a12 * co.a21 > 0.0;
    Ok(FeedbackCheck {
        holds: first && second,
        first,
        second,
        coefficients: co,
    })
}

/// Left-hand sides of the delayed feedback characteristic conditions at `omega0`:
/// the equality residual and the transversality expression (> 0 required).
pub fn feedback_stability_delay_residual(
    params: &ModelParams,
    omega0: f64,
) -> Result<(f64, f64), ModelError> {
    let co = feedback_coefficients(params)?;
    let FeedbackCoefficients {
        a11,
        a12,
        a21,
        x_star: xs,
        ..
    } = co;
    let u = params.u;
    let (sn, cs) = (omega0 * params.tau).sin_cos();
    let residual = u * u - a11 * u + a12 * a21 + xs * u * cs - omega0 * omega0 + xs * omega0 * sn;
    let transversality = (2.0 * u - a11) * omega0 + xs * omega0 * cs - xs * u * sn;
    Ok((residual, transversality))
}

/// Scans `(0, omega_max]` with step `dw` for sign changes of the residual and
/// refines each by bisection; returns `(omega0, transversality)` pairs.
pub fn feedback_delay_roots(
    params: &ModelParams,
    omega_max: f64,
    dw: f64,
) -> Result<Vec<(f64, f64)>, ModelError> {
    let f = |w: f64| feedback_stability_delay_residual(params, w).map(|v| v.0);
    let mut roots = Vec::new();
    let n = (omega_max / dw).ceil() as usize;
    let mut w0 = dw;
    let mut f0 = f(w0)?;
    for i in 2..=n {
        let w1 = i as f64 * dw;
        let f1 = f(w1)?;
        if f0 == 0.0 || f0.signum() != f1.signum() {
            let (mut lo, mut hi, mut flo) = (w0, w1, f0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid)?;
                if (fm < 0.0) == (flo < 0.0) && fm != 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            let w = 0.5 * (lo + hi);
            let (_, tr) = feedback_stability_delay_residual(params, w)?;
            roots.push((w, tr));
        }
        w0 = w1;
        f0 = f1;
    }
    Ok(roots)
}
