//! Single-run classification: bounded versus finite-time blow-up, blow-up
//! time estimation, prey quenching diagnostics and the blow-up time bounds.
//!
//! Beyond `tail_switch` the run continues in rescaled time `ds = Y dt`, where
//! `Y` grows exponentially instead of exploding; `t` is carried as a third
//! state. This keeps thresholds such as `1e16` reachable even though the
//! remaining physical time shrinks below the spacing of representable `t`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError, ModelKind, ModelParams, State};
use crate::solve::{
    integrate_dde_fn, integrate_ode_fn, EventKind, EventSpec, History, Integration,
    IntegratorConfig, SolveError, Trajectory,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial data does not match model kind: {0}")]
    InitialData(String),
    #[error("run did not blow up (label {0:?})")]
    NotABlowupRun(Label),
    #[error("numerical failure: {0}")]
    Failure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupConfig {
    /// Blow-up threshold on the predator density.
    pub threshold: f64,
    /// Horizon after which a run below threshold counts as bounded.
    pub t_max: f64,
    /// Margin used by the largeness condition.
    pub delta1: f64,
    pub quench_derivative_floor: f64,
    /// Predator level at which integration switches to rescaled time.
    pub tail_switch: f64,
    pub integrator: IntegratorConfig,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig {
            threshold: 1e8,
            t_max: 50.0,
            delta1: 0.1,
            quench_derivative_floor: 1e10,
            tail_switch: 1e10,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl BlowupConfig {
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), BlowupError> {
        if !(self.threshold > 1.0) {
            return Err(BlowupError::Config(format!(
                "threshold must exceed 1, got {}",
                self.threshold
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(BlowupError::Config(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        if !(self.tail_switch > 1.0) {
            return Err(BlowupError::Config("tail_switch must exceed 1".into()));
        }
        Ok(())
    }
}

/// Initial point for undelayed runs or a history for delayed ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    Point(State),
    History(History),
}

impl InitialData {
    pub fn initial_state(&self) -> State {
        match self {
            InitialData::Point(s) => *s,
            InitialData::History(h) => h.initial,
        }
    }

    /// Point data for undelayed kinds, constant history otherwise.
    pub fn for_params(params: &ModelParams, s: State) -> Self {
        if params.is_delayed() {
            InitialData::History(History::constant(s))
        } else {
            InitialData::Point(s)
        }
    }
}

impl From<State> for InitialData {
    fn from(s: State) -> Self {
        InitialData::Point(s)
    }
}

impl From<History> for InitialData {
    fn from(h: History) -> Self {
        InitialData::History(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Bounded,
    BlowUp,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: Label,
    #[serde(rename = "T_star")]
    pub t_star: Option<f64>,
    pub state_at_stop: State,
    #[serde(rename = "dXdt_at_stop")]
    pub dxdt_at_stop: f64,
    #[serde(rename = "dYdt_at_stop")]
    pub dydt_at_stop: f64,
    /// Comparison bound `1/(D Y0)`.
    #[serde(rename = "lower_bound_1_over_DY0")]
    pub lower_bound: f64,
    /// Blow-up inferred from step-size underflow rather than a threshold crossing.
    pub underflow: bool,
    /// Vector field overflowed before the threshold was reached.
    pub overflow: bool,
    /// Largest predator density over accepted steps.
    pub max_y: f64,
    pub accepted_steps: usize,
    /// Cause of a `Failure` label.
    pub cause: Option<String>,
}

impl Outcome {
    pub fn is_blowup(&self) -> bool {
        self.label == Label::BlowUp
    }
}

/// Delayed-state lookup: history for `t < 0`, trajectory otherwise.
fn delayed_state(model: &Model, initial: &InitialData, traj: &Trajectory<2>, t: f64) -> State {
    let p = model.params();
    if !p.is_delayed() {
        return State::from_array(traj.evaluate_clamped(t));
    }
    let s = t - p.tau;
    match initial {
        InitialData::History(h) if s < traj.start_time() => h.past,
        _ => State::from_array(traj.evaluate_clamped(s)),
    }
}

fn run(
    model: &Model,
    initial: &InitialData,
    t_end: f64,
    cfg: &IntegratorConfig,
    event: Option<&EventSpec>,
) -> Result<Integration<2>, SolveError> {
    let p = *model.params();
    match (p.is_delayed(), initial) {
        (false, InitialData::Point(ic)) => integrate_ode_fn(
            |_, y| {
                let s = State::from_array(*y);
                Ok(model.rhs(s, s)?.to_array())
            },
            ic.to_array(),
            (0.0, t_end),
            cfg,
            event,
        ),
        (true, InitialData::History(h)) => {
            h.validate()?;
            let past = h.past.to_array();
            integrate_dde_fn(
                |_, y, yd| {
                    Ok(model
                        .rhs(State::from_array(*y), State::from_array(*yd))?
                        .to_array())
                },
                p.tau,
                |_| past,
                h.initial.to_array(),
                (0.0, t_end),
                cfg,
                event,
            )
        }
        (true, InitialData::Point(_)) => Err(SolveError::Invalid(format!(
            "{} with tau = {} needs a history",
            p.kind, p.tau
        ))),
        (false, InitialData::History(_)) => Err(SolveError::Invalid(format!(
            "{} without delay takes a point initial condition",
            p.kind
        ))),
    }
}

enum TailEnd {
    Reached { t: f64, state: State },
    Underflow { t: f64, state: State },
}

/// Continues a run from `start` (at time `t0`) in rescaled time until the
/// predator reaches `threshold`.
fn blowup_tail(
    model: &Model,
    initial: &InitialData,
    main: &Trajectory<2>,
    t0: f64,
    start: State,
    threshold: f64,
    cfg: &IntegratorConfig,
) -> Result<TailEnd, BlowupError> {
    let ev = EventSpec::rising(1, threshold);
    let res = integrate_ode_fn(
        |_, z: &[f64; 3]| {
            let s = State::new(z[0], z[1]);
            let d = delayed_state(model, initial, main, z[2]);
            let f = model.rhs(s, d)?;
            let inv = 1.0 / z[1];
            Ok([f.x * inv, f.y * inv, inv])
        },
        [start.x, start.y, t0],
        (0.0, 1e4),
        cfg,
        Some(&ev),
    );
    match res {
        Ok(Integration {
            event: Some(hit), ..
        }) => {
            let z = hit.state;
            Ok(TailEnd::Reached {
                t: z[2],
                state: State::new(z[0], z[1]),
            })
        }
        // Predation can drive the prey below E/D - A first, after which the
        // predator declines again.
        Ok(Integration {
            event: None,
            trajectory,
        }) => {
            let peak = trajectory
                .states()
                .iter()
                .map(|z| z[1])
                .fold(f64::NEG_INFINITY, f64::max);
            Err(BlowupError::Failure(format!(
                "rescaled tail did not reach the threshold; predator peaked at {peak:e}"
            )))
        }
        Err(SolveError::StepSizeUnderflow { state, .. }) => Ok(TailEnd::Underflow {
            t: state[2],
            state: State::new(state[0], state[1]),
        }),
        Err(e) => Err(BlowupError::Failure(e.to_string())),
    }
}

fn max_y(traj: &Trajectory<2>) -> f64 {
    traj.states()
        .iter()
        .map(|s| s[1])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Classifies one run as bounded, blow-up or numerical failure.
pub fn classify(
    params: &ModelParams,
    initial: &InitialData,
    config: &BlowupConfig,
) -> Result<Outcome, BlowupError> {
    config.validate()?;
    let model = Model::new(*params)?;
    classify_model(&model, initial, config)
}

pub(crate) fn classify_model(
    model: &Model,
    initial: &InitialData,
    config: &BlowupConfig,
) -> Result<Outcome, BlowupError> {
    let params = model.params();
    let ic = initial.initial_state();
    let lower_bound = 1.0 / (params.d * ic.y);
    let first_level = config.threshold.min(config.tail_switch);
    let ev = EventSpec::predator_above(first_level);
    let derivs = |traj: &Trajectory<2>, t: f64, s: State| -> (f64, f64) {
        let d = delayed_state(model, initial, traj, t);
        match model.rhs(s, d) {
            Ok(f) => (f.x, f.y),
            Err(_) => (f64::NAN, f64::NAN),
        }
    };
    let base = Outcome {
        label: Label::Failure,
        t_star: None,
        state_at_stop: ic,
        dxdt_at_stop: f64::NAN,
        dydt_at_stop: f64::NAN,
        lower_bound,
        underflow: false,
        overflow: false,
        max_y: ic.y,
        accepted_steps: 0,
        cause: None,
    };
    let integration = match run(model, initial, config.t_max, &config.integrator, Some(&ev)) {
        Ok(i) => i,
        Err(SolveError::StepSizeUnderflow { t, state, .. }) => {
            let s = State::new(state[0], state[1]);
            let (dx, dy) = match model.rhs(s, s) {
                Ok(f) => (f.x, f.y),
                Err(_) => (f64::NAN, f64::NAN),
            };
            return Ok(Outcome {
                label: Label::BlowUp,
                t_star: Some(t),
                state_at_stop: s,
                dxdt_at_stop: dx,
                dydt_at_stop: dy,
                underflow: true,
                max_y: s.y,
                ..base
            });
        }
        Err(SolveError::Invalid(msg)) => return Err(BlowupError::InitialData(msg)),
        Err(SolveError::Model(e)) => return Err(BlowupError::Model(e)),
        Err(e) => {
            return Ok(Outcome {
                cause: Some(e.to_string()),
                ..base
            })
        }
    };
    let traj = &integration.trajectory;
    let steps = traj.steps();
    let Some(hit) = integration.event else {
        let s = State::from_array(traj.last_state());
        let (dx, dy) = derivs(traj, traj.end_time(), s);
        return Ok(Outcome {
            label: Label::Bounded,
            state_at_stop: s,
            dxdt_at_stop: dx,
            dydt_at_stop: dy,
            max_y: max_y(traj),
            accepted_steps: steps,
            ..base
        });
    };
    let mut t_star = hit.time;
    let mut stop = State::from_array(hit.state);
    let mut underflow = false;
    let overflow = hit.kind == EventKind::Overflow;
    if !overflow && config.threshold > first_level {
        match blowup_tail(
            model,
            initial,
            traj,
            t_star,
            stop,
            config.threshold,
            &config.integrator,
        ) {
            Ok(TailEnd::Reached { t, state }) => {
                t_star = t;
                stop = state;
            }
            Ok(TailEnd::Underflow { t, state }) => {
                t_star = t;
                stop = state;
                underflow = true;
            }
            Err(e) => {
                return Ok(Outcome {
                    cause: Some(e.to_string()),
                    accepted_steps: steps,
                    ..base
                })
            }
        }
    }
    let (dx, dy) = derivs(traj, t_star, stop);
    Ok(Outcome {
        label: Label::BlowUp,
        t_star: Some(t_star),
        state_at_stop: stop,
        dxdt_at_stop: dx,
        dydt_at_stop: dy,
        underflow,
        overflow,
        max_y: stop.y.max(max_y(traj)),
        accepted_steps: steps,
        ..base
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchReport {
    #[serde(rename = "T_star")]
    pub t_star: f64,
    #[serde(rename = "X_at")]
    pub x_at: f64,
    #[serde(rename = "Y_at")]
    pub y_at: f64,
    #[serde(rename = "dXdt")]
    pub dxdt: f64,
    #[serde(rename = "dYdt")]
    pub dydt: f64,
    pub quenched: bool,
}

/// Prey derivative and state at the blow-up stop.
pub fn quench_report(
    params: &ModelParams,
    initial: &InitialData,
    config: &BlowupConfig,
) -> Result<QuenchReport, BlowupError> {
    let out = classify(params, initial, config)?;
    if out.label != Label::BlowUp {
        return Err(BlowupError::NotABlowupRun(out.label));
    }
    let x0 = initial.initial_state().x;
    let s = out.state_at_stop;
    let quenched = out.dxdt_at_stop.abs() >= config.quench_derivative_floor
        && s.x > 0.0
        && s.x < 2.0 * params.k.max(x0);
    Ok(QuenchReport {
        t_star: out.t_star.expect("blow-up outcome carries T*"),
        x_at: s.x,
        y_at: s.y,
        dxdt: out.dxdt_at_stop,
        dydt: out.dydt_at_stop,
        quenched,
    })
}

/// Comparison bound `1/(D Y0) < T*` for a blow-up outcome.
pub fn check_lower_bound(outcome: &Outcome, params: &ModelParams, ic: State) -> bool {
    match outcome.t_star {
        Some(t) if outcome.label == Label::BlowUp => 1.0 / (params.d * ic.y) < t,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedReport {
    pub max_y: f64,
    pub bounded: bool,
}

/// Integrates the gestation-delayed variant to `horizon` without a threshold
/// and reports the largest predator density seen.
pub fn check_bounded_delayed_predator(
    params: &ModelParams,
    history: &History,
    horizon: f64,
) -> Result<BoundedReport, BlowupError> {
    if params.kind != ModelKind::DelayedPredator || !(params.tau > 0.0) {
        return Err(BlowupError::Config(
            "expected DelayedPredator with positive delay".into(),
        ));
    }
    let model = Model::new(*params)?;
    let initial = InitialData::History(*history);
    match run(
        &model,
        &initial,
        horizon,
        &IntegratorConfig::default(),
        None,
    ) {
        Ok(i) => {
            let traj = &i.trajectory;
            let finished = i.event.is_none() && traj.end_time() >= horizon;
            Ok(BoundedReport {
                max_y: max_y(traj),
                bounded: finished && traj.states().iter().all(|s| s[1].is_finite()),
            })
        }
        Err(SolveError::StepSizeUnderflow { state, .. }) => Ok(BoundedReport {
            max_y: state[1],
            bounded: false,
        }),
        Err(e) => Err(BlowupError::Failure(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamName;

    fn delayed_prey() -> ModelParams {
        ModelParams {
            tau: 1.0,
            kind: ModelKind::DelayedPrey,
            ..ModelParams::baseline()
        }
    }

    #[test]
    fn baseline_blowup_time() {
        let out = classify(
            &ModelParams::baseline(),
            &State::new(78.0, 30.0).into(),
            &BlowupConfig::default(),
        )
        .unwrap();
        assert_eq!(out.label, Label::BlowUp);
        let t = out.t_star.unwrap();
        assert!((t - 6.7896e-2).abs() < 1e-4, "{t}");
        assert!(out.state_at_stop.y >= 1e8);
        assert!(!out.underflow);
    }

    #[test]
    fn equilibrium_start_is_bounded() {
        let out = classify(
            &ModelParams::baseline(),
            &State::new(0.2, 0.226667).into(),
            &BlowupConfig::default(),
        )
        .unwrap();
        assert_eq!(out.label, Label::Bounded);
        assert!(out.t_star.is_none());
    }

    #[test]
    fn delayed_prey_blowup_time() {
        let h = History::constant(State::new(100.0, 100.0));
        let out = classify(&delayed_prey(), &h.into(), &BlowupConfig::default()).unwrap();
        assert_eq!(out.label, Label::BlowUp);
        let t = out.t_star.unwrap();
        assert!((t - 2.0293e-2).abs() < 1e-4, "{t}");
    }

    #[test]
    fn quench_derivative_matches_rhs_at_stop() {
        let p = ModelParams::baseline();
        let q =
            quench_report(&p, &State::new(78.0, 30.0).into(), &BlowupConfig::default()).unwrap();
        let expected = p.m * q.x_at * q.y_at / (q.x_at * q.x_at + p.c) - q.x_at * (1.0 - q.x_at);
        assert!((q.dxdt + expected).abs() <= 1e-9 * expected.abs());
        assert!(
            !q.quenched,
            "|dX/dt| ~ 5e7 at 1e8 is below the default floor"
        );
    }

    #[test]
    fn high_threshold_reaches_quench_regime() {
        let p = ModelParams::baseline();
        let cfg = BlowupConfig::default().with_threshold(1e16);
        let q = quench_report(&p, &State::new(78.0, 30.0).into(), &cfg).unwrap();
        eprintln!("{q:?}");
        assert!(q.quenched);
        assert!(q.x_at > 1.0 && q.x_at < 5.0);
        assert!(q.dxdt <= -1e15 / 2.0);
        assert!((q.t_star - 6.7896e-2).abs() < 1e-4);
        let h = History::constant(State::new(100.0, 100.0));
        let q = quench_report(&delayed_prey(), &h.into(), &cfg).unwrap();
        eprintln!("{q:?}");
        assert!(q.x_at > 3.0 && q.x_at < 8.0);
    }

    #[test]
    fn quench_report_rejects_bounded_run() {
        let e = quench_report(
            &ModelParams::baseline(),
            &State::new(0.2, 0.2).into(),
            &BlowupConfig::default(),
        );
        assert!(matches!(e, Err(BlowupError::NotABlowupRun(Label::Bounded))));
    }

    #[test]
    fn lower_bound_is_strict() {
        let p = ModelParams::baseline();
        let ic = State::new(78.0, 30.0);
        let synthetic = Outcome {
            label: Label::BlowUp,
            t_star: Some(1.0 / (p.d * ic.y)),
            state_at_stop: ic,
            dxdt_at_stop: 0.0,
            dydt_at_stop: 0.0,
            lower_bound: 1.0 / (p.d * ic.y),
            underflow: false,
            overflow: false,
            max_y: 0.0,
            accepted_steps: 0,
            cause: None,
        };
        assert!(!check_lower_bound(&synthetic, &p, ic));
        let later = Outcome {
            t_star: Some(0.0679),
            ..synthetic.clone()
        };
        assert!(check_lower_bound(&later, &p, ic));
        let ic100 = State::new(100.0, 100.0);
        let delayed = Outcome {
            t_star: Some(0.0203),
            ..synthetic
        };
        assert!(check_lower_bound(&delayed, &p, ic100));
    }

    #[test]
    fn delayed_predator_stays_bounded_where_delayed_prey_blows_up() {
        let p = delayed_prey().with_kind(ModelKind::DelayedPredator);
        let h = History::constant(State::new(100.0, 100.0));
        let r = check_bounded_delayed_predator(&p, &h, 50.0).unwrap();
        assert!(r.bounded, "{r:?}");
        assert!(r.max_y >= 100.0);
        let contrast = classify(&delayed_prey(), &h.into(), &BlowupConfig::default()).unwrap();
        assert_eq!(contrast.label, Label::BlowUp);
    }

    #[test]
    fn mismatched_initial_data_is_rejected() {
        let e = classify(
            &delayed_prey(),
            &State::new(1.0, 1.0).into(),
            &BlowupConfig::default(),
        );
        assert!(matches!(e, Err(BlowupError::InitialData(_))));
        let bad = BlowupConfig::default().with_threshold(0.5);
        assert!(classify(&ModelParams::baseline(), &State::new(1.0, 1.0).into(), &bad).is_err());
    }

    #[test]
    fn starved_budget_is_failure() {
        let cfg = BlowupConfig {
            integrator: IntegratorConfig {
                max_steps: 10,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = classify(&ModelParams::baseline(), &State::new(0.5, 0.5).into(), &cfg).unwrap();
        assert_eq!(out.label, Label::Failure);
        assert!(out.cause.is_some());
    }

    #[test]
    fn prey_free_axis_blows_up_when_d_exceeds_e_over_a() {
        let p = ModelParams::baseline().with(ParamName::D, 1.5);
        let out = classify(&p, &State::new(0.0, 1.0).into(), &BlowupConfig::default()).unwrap();
        assert_eq!(out.label, Label::BlowUp);
        // dY/dt = (D - E/A) Y^2 = 0.5 Y^2 -> T = (1 - 1e-8)/0.5
        assert!((out.t_star.unwrap() - (1.0 - 1e-8) / 0.5).abs() < 1e-6);
    }
}
