//! Adaptive Dormand-Prince 5(4) integration with quartic dense output, threshold
//! events, and a method-of-steps driver for constant-delay systems.
//!
//! The integrators are generic over the state dimension so the same engine
//! serves the model, the blow-up tail in rescaled time, the Floquet
//! quadrature and the scalar test problems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError, ModelParams, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudgetExceeded { t: f64, max_steps: usize },
    #[error("step size {h:e} underflowed at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("invalid integration request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when absent.
    pub h0: Option<f64>,
    /// Maximum step; defaults to the length of the time span.
    pub hmax: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-8,
            atol: 1e-10,
            h0: None,
            hmax: None,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            rtol,
            atol,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), SolveError> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(SolveError::Invalid("rtol and atol must be positive".into()));
        }
        if let Some(h) = self.hmax {
            if !(h > 0.0) {
                return Err(SolveError::Invalid("hmax must be positive".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(SolveError::Invalid("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
}

/// Stop when `state[component]` crosses `threshold` in the given direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub component: usize,
    pub threshold: f64,
    pub direction: Direction,
}

impl EventSpec {
    pub fn rising(component: usize, threshold: f64) -> Self {
        EventSpec {
            component,
            threshold,
            direction: Direction::Rising,
        }
    }

    pub fn falling(component: usize, threshold: f64) -> Self {
        EventSpec {
            component,
            threshold,
            direction: Direction::Falling,
        }
    }

    /// Predator density reaching `threshold`.
    pub fn predator_above(threshold: f64) -> Self {
        Self::rising(1, threshold)
    }

    fn crossed(&self, before: f64, after: f64) -> bool {
        let (a, b) = (before - self.threshold, after - self.threshold);
        match self.direction {
            Direction::Rising => a < 0.0 && b >= 0.0,
            Direction::Falling => a > 0.0 && b <= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Threshold crossing localised on the dense output.
    Crossing,
    /// The vector field overflowed at the last accepted state.
    Overflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventHit<const N: usize> {
    pub time: f64,
    pub state: [f64; N],
    pub component: usize,
    pub threshold: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment<const N: usize> {
    t0: f64,
    h: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
        out
    }
}

/// Accepted nodes plus per-step dense-output coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    times: Vec<f64>,
    states: Vec<[f64; N]>,
    derivs: Vec<[f64; N]>,
    segments: Vec<Segment<N>>,
}

impl<const N: usize> Trajectory<N> {
    fn start(t0: f64, y0: [f64; N], dy0: [f64; N]) -> Self {
        Trajectory {
            times: vec![t0],
            states: vec![y0],
            derivs: vec![dy0],
            segments: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[[f64; N]] {
        &self.states
    }

    pub fn derivatives(&self) -> &[[f64; N]] {
        &self.derivs
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    pub fn last_state(&self) -> [f64; N] {
        *self
            .states
            .last()
            .expect("trajectory has at least one node")
    }

    pub fn last_derivative(&self) -> [f64; N] {
        *self
            .derivs
            .last()
            .expect("trajectory has at least one node")
    }

    /// Number of accepted steps.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Dense-output evaluation; nodes are reproduced exactly.
    pub fn evaluate(&self, t: f64) -> Result<[f64; N], SolveError> {
        let (start, end) = (self.start_time(), self.end_time());
        if !(t >= start && t <= end) {
            return Err(SolveError::OutOfSpan { t, start, end });
        }
        match self.times.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => Ok(self.states[i]),
            Err(i) => {
                // times[i-1] < t < times[i]; segment i-1 starts at times[i-1]
                let seg = &self.segments[i - 1];
                Ok(seg.eval(t))
            }
        }
    }

    /// Evaluation with `t` clamped into the span; used for delayed lookups that
    /// may overshoot the last node by rounding.
    pub(crate) fn evaluate_clamped(&self, t: f64) -> [f64; N] {
        let t = t.clamp(self.start_time(), self.end_time());
        self.evaluate(t).expect("clamped time lies in span")
    }

    /// Samples at `start, start + dt, ...` plus the final node.
    pub fn sample(&self, dt: f64) -> Vec<(f64, [f64; N])> {
        let (start, end) = (self.start_time(), self.end_time());
        let mut out = Vec::new();
        if dt > 0.0 {
            let n = ((end - start) / dt).floor() as usize;
            for i in 0..=n {
                let t = start + i as f64 * dt;
                if t < end {
                    out.push((t, self.evaluate(t).expect("in span")));
                }
            }
        }
        out.push((end, self.last_state()));
        out
    }

    fn push_node(&mut self, t: f64, y: [f64; N], dy: [f64; N]) {
        self.times.push(t);
        self.states.push(y);
        self.derivs.push(dy);
    }

    fn append(&mut self, other: Trajectory<N>) {
        debug_assert_eq!(other.start_time(), self.end_time());
        self.times.extend_from_slice(&other.times[1..]);
        self.states.extend_from_slice(&other.states[1..]);
        self.derivs.extend_from_slice(&other.derivs[1..]);
        self.segments.extend(other.segments);
        // the restart derivative replaces the one-sided value at the junction
        let j = self.times.len() - other.times.len();
        self.derivs[j] = other.derivs[0];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration<const N: usize> {
    pub trajectory: Trajectory<N>,
    pub event: Option<EventHit<N>>,
}

// Dormand-Prince 5(4) tableau with the Hairer-Wanner dense output.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN_INV: f64 = 5.0; // step may shrink by at most 5x
const FAC_MAX_INV: f64 = 0.1; // and grow by at most 10x
const UNDERFLOW_REL: f64 = 1e-14;
const EVENT_BISECTIONS: usize = 50;
const EVENT_REL_TOL: f64 = 1e-12;

#[inline]
fn comb<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn all_finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

struct StepResult<const N: usize> {
    y_new: [f64; N],
    k7: [f64; N],
    err: f64,
    coeffs: [[f64; N]; 5],
}

fn dp_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<StepResult<N>>, SolveError>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], SolveError>,
{
    let k2 = f(t + C2 * h, &comb(y, h, &[(A21, k1)]))?;
    let k3 = f(t + C3 * h, &comb(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(
        t + C4 * h,
        &comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    )?;
    let k5 = f(
        t + C5 * h,
        &comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        t + h,
        &comb(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    )?;
    let y_new = comb(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    if !all_finite(&y_new) {
        return Ok(None);
    }
    let k7 = f(t + h, &y_new)?;
    for k in [&k2, &k3, &k4, &k5, &k6, &k7] {
        if !all_finite(k) {
            return Ok(None);
        }
    }
    let mut sum = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sk = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
        sum += (e / sk) * (e / sk);
    }
    let err = (sum / N as f64).sqrt();
    if !err.is_finite() {
        return Ok(None);
    }
    let mut coeffs = [[0.0; N]; 5];
    for i in 0..N {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        coeffs[0][i] = y[i];
        coeffs[1][i] = ydiff;
        coeffs[2][i] = bspl;
        coeffs[3][i] = ydiff - h * k7[i] - bspl;
        coeffs[4][i] =
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Ok(Some(StepResult {
        y_new,
        k7,
        err,
        coeffs,
    }))
}

fn rms_scaled<const N: usize>(v: &[f64; N], y: &[f64; N], cfg: &IntegratorConfig) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sk = cfg.atol + cfg.rtol * y[i].abs();
        s += (v[i] / sk).powi(2);
    }
    (s / N as f64).sqrt()
}

/// Initial step heuristic of Hairer, Norsett and Wanner.
fn initial_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    hmax: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, SolveError>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], SolveError>,
{
    let d0 = rms_scaled(y, y, cfg);
    let d1 = rms_scaled(f0, y, cfg);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(hmax);
    let y1 = comb(y, h0, &[(1.0, f0)]);
    let f1 = f(t + h0, &y1)?;
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = rms_scaled(&diff, y, cfg) / h0;
    let h1 = if !d2.is_finite() {
        h0 * 1e-3
    } else if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(hmax))
}

enum Stop {
    Reached,
    Event,
}

/// Shared stepping loop. Advances `traj` from its last node to `t_end`.
struct Driver<'c> {
    cfg: &'c IntegratorConfig,
    h: Option<f64>,
    hmax: f64,
    attempts: usize,
}

impl<'c> Driver<'c> {
    fn new(cfg: &'c IntegratorConfig, span: f64) -> Self {
        Driver {
            cfg,
            h: cfg.h0,
            hmax: cfg.hmax.unwrap_or(span).min(span),
            attempts: 0,
        }
    }

    fn run<const N: usize, F>(
        &mut self,
        f: &mut F,
        traj: &mut Trajectory<N>,
        t_end: f64,
        event: Option<&EventSpec>,
    ) -> Result<(Stop, Option<EventHit<N>>), SolveError>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], SolveError>,
    {
        let mut t = traj.end_time();
        let mut y = traj.last_state();
        let mut k1 = traj.last_derivative();
        if !all_finite(&k1) {
            return Ok((Stop::Event, Some(overflow_hit(t, y, event))));
        }
        let mut h = match self.h {
            Some(h) => h,
            None => initial_step(f, t, &y, &k1, self.hmax, self.cfg)?,
        }
        .min(self.hmax);
        let mut facold: f64 = 1e-4;
        let mut last_rejected = false;
        while t < t_end {
            if self.attempts >= self.cfg.max_steps {
                return Err(SolveError::StepBudgetExceeded {
                    t,
                    max_steps: self.cfg.max_steps,
                });
            }
            if h < UNDERFLOW_REL * t.abs() || h < f64::MIN_POSITIVE {
                return Err(SolveError::StepSizeUnderflow {
                    t,
                    h,
                    state: y.to_vec(),
                });
            }
            let last = t + 1.01 * h >= t_end;
            if last {
                h = t_end - t;
            }
            self.attempts += 1;
            let Some(step) = dp_step(f, t, &y, &k1, h, self.cfg)? else {
                // trial overflow: retreat sharply
                h *= 0.1;
                last_rejected = true;
                continue;
            };
            let fac11 = step.err.powf(EXPO1);
            if step.err <= 1.0 {
                let mut fac = fac11 / facold.powf(BETA);
                fac = (fac / SAFETY).clamp(FAC_MAX_INV, FAC_MIN_INV);
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                facold = step.err.max(1e-4);
                let t_new = if last { t_end } else { t + h };
                let seg = Segment {
                    t0: t,
                    h,
                    coeffs: step.coeffs,
                };
                if let Some(ev) = event {
                    if ev.crossed(y[ev.component], step.y_new[ev.component]) {
                        let (te, ye) = localize(&seg, ev, t, t_new);
                        traj.segments.push(seg);
                        // derivative at the event point is recomputed by callers if needed
                        let dye = f(te, &ye).unwrap_or([f64::NAN; N]);
                        traj.push_node(te, ye, dye);
                        return Ok((
                            Stop::Event,
                            Some(EventHit {
                                time: te,
                                state: ye,
                                component: ev.component,
                                threshold: ev.threshold,
                                kind: EventKind::Crossing,
                            }),
                        ));
                    }
                }
                traj.segments.push(seg);
                traj.push_node(t_new, step.y_new, step.k7);
                t = t_new;
                y = step.y_new;
                k1 = step.k7;
                if !all_finite(&k1) {
                    return Ok((Stop::Event, Some(overflow_hit(t, y, event))));
                }
                if !last {
                    h = h_new.min(self.hmax);
                    self.h = Some(h);
                }
                last_rejected = false;
            } else {
                h /= (fac11 / SAFETY).min(FAC_MIN_INV);
                last_rejected = true;
            }
        }
        Ok((Stop::Reached, None))
    }
}

fn overflow_hit<const N: usize>(t: f64, y: [f64; N], event: Option<&EventSpec>) -> EventHit<N> {
    let (component, threshold) = event
        .map(|e| (e.component, e.threshold))
        .unwrap_or((0, f64::INFINITY));
    EventHit {
        time: t,
        state: y,
        component,
        threshold,
        kind: EventKind::Overflow,
    }
}

/// Bisection on the dense output; returns the first bracket end on the far
/// side of the threshold.
fn localize<const N: usize>(seg: &Segment<N>, ev: &EventSpec, t0: f64, t1: f64) -> (f64, [f64; N]) {
    let (mut lo, mut hi) = (t0, t1);
    let mut y_hi = seg.eval(t1);
    let before = seg.eval(t0)[ev.component];
    for _ in 0..EVENT_BISECTIONS {
        if hi - lo <= EVENT_REL_TOL * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let ym = seg.eval(mid);
        if ev.crossed(before, ym[ev.component]) {
            hi = mid;
            y_hi = ym;
        } else {
            lo = mid;
        }
    }
    if hi == t1 {
        // dense output at the node end must agree with the accepted value
        y_hi = seg.eval(t1);
    }
    (hi, y_hi)
}

fn check_span(t_span: (f64, f64)) -> Result<(), SolveError> {
    let (a, b) = t_span;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(SolveError::Invalid(format!(
            "time span [{a}, {b}] must be finite and increasing"
        )));
    }
    Ok(())
}

/// Integrates `y' = f(t, y)` over `t_span`, optionally stopping at an event.
pub fn integrate_ode_fn<const N: usize, F>(
    mut f: F,
    y0: [f64; N],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    event: Option<&EventSpec>,
) -> Result<Integration<N>, SolveError>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], SolveError>,
{
    cfg.validate()?;
    check_span(t_span)?;
    let dy0 = f(t_span.0, &y0)?;
    let mut traj = Trajectory::start(t_span.0, y0, dy0);
    let mut driver = Driver::new(cfg, t_span.1 - t_span.0);
    let (_, hit) = driver.run(&mut f, &mut traj, t_span.1, event)?;
    Ok(Integration {
        trajectory: traj,
        event: hit,
    })
}

/// Integrates `y'(t) = f(t, y(t), y(t - tau))` by the method of steps.
///
/// `history(t)` supplies the state for `t < t_span.0`; the mesh contains every
/// point `t_span.0 + k tau` and each such interval is restarted with a fresh
/// derivative evaluation.
pub fn integrate_dde_fn<const N: usize, F, H>(
    mut f: F,
    tau: f64,
    history: H,
    y0: [f64; N],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    event: Option<&EventSpec>,
) -> Result<Integration<N>, SolveError>
where
    F: FnMut(f64, &[f64; N], &[f64; N]) -> Result<[f64; N], SolveError>,
    H: Fn(f64) -> [f64; N],
{
    cfg.validate()?;
    check_span(t_span)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SolveError::Invalid(format!(
            "delay must be positive, got {tau}"
        )));
    }
    let (t0, t_end) = t_span;
    let lookup = |traj: &Trajectory<N>, s: f64| -> [f64; N] {
        if s < t0 {
            history(s)
        } else {
            traj.evaluate_clamped(s)
        }
    };
    let dy0 = f(t0, &y0, &history(t0 - tau))?;
    let mut traj = Trajectory::start(t0, y0, dy0);
    let mut driver = Driver::new(cfg, tau.min(t_end - t0));
    let mut k = 0usize;
    loop {
        let seg_start = traj.end_time();
        let seg_end = (t0 + (k + 1) as f64 * tau).min(t_end);
        let y_start = traj.last_state();
        let past = &traj;
        let mut rhs = |t: f64, y: &[f64; N]| f(t, y, &lookup(past, t - tau));
        let dy_start = rhs(seg_start, &y_start)?;
        let mut piece = Trajectory::start(seg_start, y_start, dy_start);
        let (stop, hit) = driver.run(&mut rhs, &mut piece, seg_end, event)?;
        traj.append(piece);
        match stop {
            Stop::Event => {
                return Ok(Integration {
                    trajectory: traj,
                    event: hit,
                })
            }
            Stop::Reached if seg_end >= t_end => {
                return Ok(Integration {
                    trajectory: traj,
                    event: None,
                })
            }
            Stop::Reached => {}
        }
        k += 1;
    }
}

/// Fixed-step Dormand-Prince propagation (fifth-order solution), used for
/// convergence-order checks.
pub fn integrate_fixed_step<const N: usize, F>(
    mut f: F,
    y0: [f64; N],
    t_span: (f64, f64),
    steps: usize,
) -> Result<[f64; N], SolveError>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], SolveError>,
{
    check_span(t_span)?;
    let cfg = IntegratorConfig::default();
    let h = (t_span.1 - t_span.0) / steps as f64;
    let mut y = y0;
    let mut k1 = f(t_span.0, &y)?;
    for i in 0..steps {
        let t = t_span.0 + i as f64 * h;
        let step = dp_step(&mut f, t, &y, &k1, h, &cfg)?
            .ok_or_else(|| SolveError::Invalid("non-finite value in fixed step".into()))?;
        y = step.y_new;
        k1 = step.k7;
    }
    Ok(y)
}

/// Constant initial functions on `[-tau, 0)` together with the value at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub past: State,
    pub initial: State,
}

impl History {
    pub fn constant(s: State) -> Self {
        History {
            past: s,
            initial: s,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let ok = |s: &State| s.x > 0.0 && s.y > 0.0 && s.is_finite();
        if ok(&self.past) && ok(&self.initial) {
            Ok(())
        } else {
            Err(SolveError::Invalid(
                "history functions must be positive and finite".into(),
            ))
        }
    }
}

/// Model trajectory for an undelayed variant.
pub fn integrate_ode(
    params: &ModelParams,
    ic: State,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    event: Option<&EventSpec>,
) -> Result<Integration<2>, SolveError> {
    if params.is_delayed() {
        return Err(SolveError::Invalid(format!(
            "{} with tau = {} needs a history; use integrate_dde",
            params.kind, params.tau
        )));
    }
    let model = Model::new(*params)?;
    integrate_ode_fn(
        |_, y| {
            let s = State::from_array(*y);
            Ok(model.rhs(s, s)?.to_array())
        },
        ic.to_array(),
        t_span,
        cfg,
        event,
    )
}

/// Model trajectory for a delayed variant.
pub fn integrate_dde(
    params: &ModelParams,
    history: &History,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    event: Option<&EventSpec>,
) -> Result<Integration<2>, SolveError> {
    if !(params.tau > 0.0) {
        return Err(SolveError::Invalid("integrate_dde needs tau > 0".into()));
    }
    history.validate()?;
    let model = Model::new(*params)?;
    let past = history.past.to_array();
    integrate_dde_fn(
        |_, y, yd| {
            Ok(model
                .rhs(State::from_array(*y), State::from_array(*yd))?
                .to_array())
        },
        params.tau,
        |_| past,
        history.initial.to_array(),
        t_span,
        cfg,
        event,
    )
}

/// Model-level dense evaluation.
pub fn evaluate(traj: &Trajectory<2>, t: f64) -> Result<State, SolveError> {
    traj.evaluate(t).map(State::from_array)
}
