//! Reproduction suite: each claim runs a computation and compares the result
//! with the published value at a stated tolerance. A failing or erroring
//! claim never aborts the suite.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basin::{
    conjecture_region_check, extract_boundary, fit_boundary, sweep, FitFamily, GridSpec,
};
use crate::bifurcate::{
    continue_cycles, find_bautin, find_cycle, two_cycle_certificate, BautinBox,
    ContinuationOptions, OrbitStability,
};
use crate::blowup::{
    check_bounded_delayed_predator, classify, quench_report, BlowupConfig, InitialData, Label,
};
use crate::model::{
    boundedness_predicate, feedback_delay_roots, feedback_stability_nodelay, interior_equilibrium,
    interior_trace_closed_form, stability_threshold_c, ModelKind, ModelParams, ParamName, State,
};
use crate::solve::History;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub subject: String,
    pub expected: String,
    pub observed: String,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub claims: Vec<Claim>,
}

impl ClaimReport {
    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    /// Fixed-width text table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:<6} {:<34} {:<44} tolerance",
            "claim", "result", "expected", "observed"
        );
        for c in &self.claims {
            let _ = writeln!(
                out,
                "{:<28} {:<6} {:<34} {:<44} {}",
                c.id,
                if c.pass { "pass" } else { "FAIL" },
                c.expected,
                c.observed,
                c.tolerance
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimOptions {
    /// Blow-up threshold for the T* claims.
    pub theta: f64,
    /// Step budget override for every blow-up integration.
    pub max_steps: Option<usize>,
    /// Cells per side of the basin grid.
    pub grid: usize,
}

impl Default for ClaimOptions {
    fn default() -> Self {
        ClaimOptions {
            theta: 1e8,
            max_steps: None,
            grid: 300,
        }
    }
}

impl ClaimOptions {
    fn blowup(&self) -> BlowupConfig {
        let mut c = BlowupConfig::default().with_threshold(self.theta);
        if let Some(n) = self.max_steps {
            c.integrator.max_steps = n;
        }
        c
    }

    fn with_threshold(&self, theta: f64) -> BlowupConfig {
        BlowupConfig {
            threshold: theta,
            ..self.blowup()
        }
    }
}

struct Row {
    expected: String,
    observed: String,
    tolerance: String,
    pass: bool,
}

fn row(
    expected: impl Into<String>,
    observed: impl Into<String>,
    tolerance: impl Into<String>,
    pass: bool,
) -> Row {
    Row {
        expected: expected.into(),
        observed: observed.into(),
        tolerance: tolerance.into(),
        pass,
    }
}

type ClaimFn = fn(&ClaimOptions) -> Result<Row, String>;

fn d05() -> ModelParams {
    ModelParams::baseline()
}

fn fig10() -> ModelParams {
    ModelParams::baseline().with(ParamName::D, 0.4676)
}

fn delayed_prey() -> ModelParams {
    ModelParams {
        tau: 1.0,
        kind: ModelKind::DelayedPrey,
        ..d05()
    }
}

fn history(x: f64, y: f64) -> InitialData {
    InitialData::History(History::constant(State::new(x, y)))
}

fn blowup_time(p: &ModelParams, init: &InitialData, cfg: &BlowupConfig) -> Result<f64, String> {
    let o = classify(p, init, cfg).map_err(|e| e.to_string())?;
    match (o.label, o.t_star) {
        (Label::BlowUp, Some(t)) => Ok(t),
        (label, _) => Err(format!(
            "{label:?}{}",
            o.cause.map(|c| format!(": {c}")).unwrap_or_default()
        )),
    }
}

fn t_star_nondelayed(o: &ClaimOptions) -> Result<Row, String> {
    let t = blowup_time(&d05(), &State::new(78.0, 30.0).into(), &o.blowup())?;
    Ok(row(
        "T* = 6.7896e-2",
        format!("T* = {t:.6e}"),
        "1e-4",
        (t - 6.7896e-2).abs() <= 1e-4,
    ))
}

fn t_star_delayed(o: &ClaimOptions) -> Result<Row, String> {
    let t = blowup_time(&delayed_prey(), &history(100.0, 100.0), &o.blowup())?;
    Ok(row(
        "T* = 2.0293e-2",
        format!("T* = {t:.6e}"),
        "1e-4",
        (t - 2.0293e-2).abs() <= 1e-4,
    ))
}

fn boundedness_counterexample(o: &ClaimOptions) -> Result<Row, String> {
    let pred = boundedness_predicate(&d05()).map_err(|e| e.to_string())?;
    let out =
        classify(&d05(), &State::new(78.0, 30.0).into(), &o.blowup()).map_err(|e| e.to_string())?;
    Ok(row(
        "predicate holds, (78,30) blows up",
        format!("holds={}, label={:?}", pred.holds, out.label),
        "exact",
        pred.holds && out.label == Label::BlowUp,
    ))
}

fn lower_bound(o: &ClaimOptions) -> Result<Row, String> {
    let t1 = blowup_time(&d05(), &State::new(78.0, 30.0).into(), &o.blowup())?;
    let t2 = blowup_time(&delayed_prey(), &history(100.0, 100.0), &o.blowup())?;
    let b1 = 1.0 / (0.5 * 30.0);
    let b2 = 1.0 / (0.5 * 100.0);
    Ok(row(
        "1/(D Y0) < T*",
        format!("{b1:.4e} < {t1:.4e}; {b2:.4e} < {t2:.4e}"),
        "strict",
        b1 < t1 && b2 < t2,
    ))
}

fn quench(o: &ClaimOptions) -> Result<Row, String> {
    let cfg = o.with_threshold(1e16);
    let a =
        quench_report(&d05(), &State::new(78.0, 30.0).into(), &cfg).map_err(|e| e.to_string())?;
    let b =
        quench_report(&delayed_prey(), &history(100.0, 100.0), &cfg).map_err(|e| e.to_string())?;
    let pass = (1.0..=5.0).contains(&a.x_at)
        && a.dxdt.abs() >= 1e15
        && a.x_at > 0.0
        && (3.0..=8.0).contains(&b.x_at);
    Ok(row(
        "X in [1,5], |X'| >= 1e15; delayed X in [3,8]",
        format!(
            "X={:.4}, X'={:.3e}; delayed X={:.4}",
            a.x_at, a.dxdt, b.x_at
        ),
        "interval",
        pass,
    ))
}

fn delayed_predator_bounded(_: &ClaimOptions) -> Result<Row, String> {
    let p = ModelParams {
        tau: 1.0,
        kind: ModelKind::DelayedPredator,
        ..d05()
    };
    let mut obs = Vec::new();
    let mut pass = true;
    for v in [100.0, 1e4] {
        let r = check_bounded_delayed_predator(&p, &History::constant(State::new(v, v)), 50.0)
            .map_err(|e| e.to_string())?;
        pass &= r.bounded;
        obs.push(format!("({v:e}): max Y {:.3e}", r.max_y));
    }
    Ok(row("bounded to t = 50", obs.join("; "), "exact", pass))
}

fn feedback_counterexamples(o: &ClaimOptions) -> Result<Row, String> {
    let p1 = ModelParams::feedback_set(0.02, 0.0);
    let s1 = feedback_stability_nodelay(&p1)
        .map_err(|e| e.to_string())?
        .holds;
    let l1 = classify(&p1, &State::new(100.0, 100.0).into(), &o.blowup())
        .map_err(|e| e.to_string())?
        .label;
    let p2 = ModelParams::feedback_set(0.06, 2.0);
    let roots = feedback_delay_roots(&p2, 5.0, 1e-3).map_err(|e| e.to_string())?;
    let s2 = !roots.is_empty() && roots.iter().all(|r| r.1 > 0.0);
    let l2 = classify(&p2, &history(200.0, 200.0), &o.blowup())
        .map_err(|e| e.to_string())?
        .label;
    Ok(row(
        "conditions hold, both blow up",
        format!("u=0.02: {s1}/{l1:?}; u=0.06,tau=2: {s2}/{l2:?}"),
        "exact",
        s1 && s2 && l1 == Label::BlowUp && l2 == Label::BlowUp,
    ))
}

fn equilibria(_: &ClaimOptions) -> Result<Row, String> {
    let a = interior_equilibrium(&d05())
        .map_err(|e| e.to_string())?
        .point;
    let b = interior_equilibrium(&fig10())
        .map_err(|e| e.to_string())?
        .point;
    let pass = (a.x - 0.2).abs() <= 1e-5
        && (a.y - 0.226667).abs() <= 1e-5
        && (b.x - 0.2277).abs() <= 5e-4
        && (b.y - 0.2264).abs() <= 5e-4;
    Ok(row(
        "(0.2, 0.226667); (0.2277, 0.2264)",
        format!("({:.6}, {:.6}); ({:.4}, {:.4})", a.x, a.y, b.x, b.y),
        "1e-5; 5e-4",
        pass,
    ))
}

fn hopf_threshold(_: &ClaimOptions) -> Result<Row, String> {
    let c1 = stability_threshold_c(&d05().with(ParamName::D, 0.4)).map_err(|e| e.to_string())?;
    let c2 = stability_threshold_c(&d05()).map_err(|e| e.to_string())?;
    let below = interior_trace_closed_form(&d05().with(ParamName::C, c2 - 0.01));
    let above = interior_trace_closed_form(&d05().with(ParamName::C, c2 + 0.01));
    let pass = (c1 - 0.33).abs() <= 5e-3 && (c2 - 0.28).abs() <= 5e-3 && below * above < 0.0;
    Ok(row(
        "C_H = 0.33; 0.28; trace flips",
        format!("{c1:.4}; {c2:.4}; {below:+.2e}/{above:+.2e}"),
        "5e-3",
        pass,
    ))
}

fn basin(o: &ClaimOptions) -> Result<Row, String> {
    let spec = GridSpec::square(0.0, 100.0, o.grid);
    let grid = sweep(&d05(), &spec, &o.blowup()).map_err(|e| e.to_string())?;
    let eq = interior_equilibrium(&d05())
        .map_err(|e| e.to_string())?
        .point;
    let at = grid.label_near(78.0, 30.0);
    let near_eq = grid.label_near(eq.x, eq.y);
    let conj = conjecture_region_check(&grid, &d05(), 0.1);
    Ok(row(
        "(78,30) BlowUp, E2 Bounded, 0 violations",
        format!(
            "{at:?}, {near_eq:?}, {} of {}",
            conj.violations, conj.checked
        ),
        "exact",
        at == Label::BlowUp
            && near_eq == Label::Bounded
            && conj.violations == 0
            && conj.vacuous_reason.is_none(),
    ))
}

fn boundary_fit(o: &ClaimOptions) -> Result<Row, String> {
    let spec = GridSpec::square(0.0, 100.0, o.grid);
    let cfg = o.blowup();
    let grid = sweep(&d05(), &spec, &cfg).map_err(|e| e.to_string())?;
    let curve = extract_boundary(&grid, &d05(), &cfg, 1e-3).map_err(|e| e.to_string())?;
    let fit = fit_boundary(&curve, FitFamily::Rational).map_err(|e| e.to_string())?;
    let mean = curve.mean_y();
    Ok(row(
        "rational RMSE <= 5% of mean",
        format!("RMSE {:.4e}, mean {mean:.4}", fit.rmse),
        "0.05 relative",
        fit.report.converged && fit.rmse <= 0.05 * mean,
    ))
}

fn two_cycles(_: &ClaimOptions) -> Result<Row, String> {
    let p = fig10();
    let cert = two_cycle_certificate(&p, State::new(0.265, 0.24), State::new(0.20, 0.192))
        .map_err(|e| e.to_string())?;
    let outer = find_cycle(&p, State::new(0.20, 0.192), None).map_err(|e| e.to_string())?;
    let branch = continue_cycles(
        &p,
        ParamName::D,
        (0.46, 0.47),
        &outer,
        &ContinuationOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let near = |v: f64| branch.folds.iter().any(|f| (f.param - v).abs() <= 1e-3);
    let folds: Vec<String> = branch
        .folds
        .iter()
        .map(|f| format!("{:.5}", f.param))
        .collect();
    let pass = cert.nested
        && cert.inner.stability == OrbitStability::Unstable
        && cert.outer.stability == OrbitStability::Stable
        && branch.folds.len() == 2
        && near(0.4674)
        && near(0.4681)
        && branch.folds.iter().all(|f| f.coefficient != 0.0);
    Ok(row(
        "nested cycles; LPC 0.4674, 0.4681",
        format!("nested={}, LPC [{}]", cert.nested, folds.join(", ")),
        "1e-3",
        pass,
    ))
}

fn bautin(_: &ClaimOptions) -> Result<Row, String> {
    let cases = [
        (ParamName::A, (0.30, 0.36), (0.30, 0.45), (0.3302, 0.3777)),
        (ParamName::C, (0.44, 0.47), (0.25, 0.35), (0.4576, 0.3055)),
        (ParamName::K, (0.45, 0.48), (0.90, 1.10), (0.4699, 0.9910)),
    ];
    let mut obs = Vec::new();
    let mut pass = true;
    for (p2, b1, b2, want) in cases {
        let b = find_bautin(&d05(), ParamName::D, p2, BautinBox { p1: b1, p2: b2 })
            .map_err(|e| e.to_string())?;
        pass &= (b.v1 - want.0).abs() <= 0.01 && (b.v2 - want.1).abs() <= 0.01;
        obs.push(format!("({:.4},{:.4})", b.v1, b.v2));
    }
    Ok(row(
        "(0.3302,0.3777) (0.4576,0.3055) (0.4699,0.9910)",
        obs.join(" "),
        "0.01",
        pass,
    ))
}

fn threshold_insensitivity(o: &ClaimOptions) -> Result<Row, String> {
    let mut ts = Vec::new();
    for theta in [1e6, 1e8, 1e10] {
        ts.push(blowup_time(
            &d05(),
            &State::new(78.0, 30.0).into(),
            &o.with_threshold(theta),
        )?);
    }
    let spread =
        ts.iter().cloned().fold(f64::MIN, f64::max) - ts.iter().cloned().fold(f64::MAX, f64::min);
    Ok(row(
        "T* spread over theta 1e6..1e10",
        format!("{spread:.3e}"),
        "1e-5",
        spread <= 1e-5,
    ))
}

const CLAIMS: [(&str, &str, ClaimFn); 14] = [
    (
        "blowup-time",
        "finite-time blow-up, non-delayed",
        t_star_nondelayed,
    ),
    (
        "blowup-time-delayed",
        "finite-time blow-up, delayed prey",
        t_star_delayed,
    ),
    (
        "boundedness-counterexample",
        "boundedness condition vs blow-up",
        boundedness_counterexample,
    ),
    ("lower-bound", "blow-up time lower bound", lower_bound),
    ("quenching", "prey quenching at blow-up", quench),
    (
        "delayed-predator-bounded",
        "gestation delay prevents blow-up",
        delayed_predator_bounded,
    ),
    (
        "feedback-counterexamples",
        "feedback stability vs blow-up",
        feedback_counterexamples,
    ),
    ("equilibria", "interior equilibrium closed form", equilibria),
    ("hopf-threshold", "Hopf threshold in C", hopf_threshold),
    ("basin", "basin sweep and largeness region", basin),
    ("boundary-fit", "blow-up boundary fit", boundary_fit),
    ("two-cycles", "two limit cycles and folds", two_cycles),
    ("bautin", "Bautin points", bautin),
    (
        "threshold-insensitivity",
        "T* independent of threshold",
        threshold_insensitivity,
    ),
];

pub fn claim_ids() -> Vec<&'static str> {
    CLAIMS.iter().map(|c| c.0).collect()
}

/// Runs the claims whose id is accepted by `filter`.
pub fn run_claims_filtered(opts: &ClaimOptions, filter: impl Fn(&str) -> bool) -> ClaimReport {
    let claims = CLAIMS
        .iter()
        .filter(|(id, ..)| filter(id))
        .map(|(id, subject, f)| {
            let r = f(opts).unwrap_or_else(|e| row("-", format!("Failure: {e}"), "-", false));
            Claim {
                id: id.to_string(),
                subject: subject.to_string(),
                expected: r.expected,
                observed: r.observed,
                tolerance: r.tolerance,
                pass: r.pass,
            }
        })
        .collect();
    ClaimReport { claims }
}

pub fn run_claims(opts: &ClaimOptions) -> ClaimReport {
    run_claims_filtered(opts, |_| true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_unique() {
        let mut ids = claim_ids();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), CLAIMS.len());
    }

    #[test]
    fn starved_budget_reports_failures() {
        let opts = ClaimOptions {
            max_steps: Some(10),
            ..Default::default()
        };
        let r = run_claims_filtered(&opts, |id| id == "blowup-time" || id == "lower-bound");
        assert_eq!(r.claims.len(), 2);
        assert!(r
            .claims
            .iter()
            .all(|c| !c.pass && c.observed.starts_with("Failure")));
    }

    #[test]
    fn cheap_claims_pass() {
        let r = run_claims_filtered(&ClaimOptions::default(), |id| {
            matches!(
                id,
                "blowup-time" | "equilibria" | "hopf-threshold" | "boundedness-counterexample"
            )
        });
        assert!(r.all_pass(), "{}", r.table());
    }
}
