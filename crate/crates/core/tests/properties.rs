use lglab::basin::{constant_fit_rmse, fit_points, FitFamily, LmOptions, Pchip};
use lglab::blowup::{check_lower_bound, classify, BlowupConfig, Label};
use lglab::config::RunConfig;
use lglab::model::{
    interior_equilibrium, interior_trace_closed_form, stability_threshold_c, Model, ModelKind,
    ModelParams, ParamName, State,
};
use lglab::solve::{integrate_ode_fn, EventSpec, IntegratorConfig, SolveError};
use proptest::prelude::*;

/// Parameter sets with an interior equilibrium strictly inside (0, K).
fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.5..2.0f64,
        0.5..2.0f64,
        0.5..2.0f64,
        1.0..3.0f64,
        0.05..1.0f64,
        0.3..0.8f64,
        0.05..0.3f64,
        0.05..0.9f64,
    )
        .prop_map(|(r, k, m, p, c, d, a, frac)| ModelParams {
            r,
            k,
            m,
            p,
            c,
            d,
            e: d * (a + frac * k),
            a,
            ..ModelParams::baseline()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobian_matches_central_differences(p in params(), lx in -2.0..2.0f64, ly in -2.0..2.0f64) {
        let model = Model::new(p).unwrap();
        let s = State::new(10f64.powf(lx), 10f64.powf(ly));
        let j = model.jacobian(s);
        let f = |s: State| model.rhs(s, s).unwrap();
        let (hx, hy) = (1e-6 * s.x, 1e-6 * s.y);
        let dx = [
            (f(State::new(s.x + hx, s.y)).x - f(State::new(s.x - hx, s.y)).x) / (2.0 * hx),
            (f(State::new(s.x + hx, s.y)).y - f(State::new(s.x - hx, s.y)).y) / (2.0 * hx),
        ];
        let dy = [
            (f(State::new(s.x, s.y + hy)).x - f(State::new(s.x, s.y - hy)).x) / (2.0 * hy),
            (f(State::new(s.x, s.y + hy)).y - f(State::new(s.x, s.y - hy)).y) / (2.0 * hy),
        ];
        let norm = j.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for r in 0..2 {
            prop_assert!((dx[r] - j[r][0]).abs() <= 1e-5 * norm);
            prop_assert!((dy[r] - j[r][1]).abs() <= 1e-5 * norm);
        }
    }

    #[test]
    fn field_vanishes_at_interior_equilibrium(p in params()) {
        let e = interior_equilibrium(&p).unwrap();
        let d = Model::new(p).unwrap().rhs(e.point, e.point).unwrap();
        let scale = e.point.x.max(e.point.y).max(1.0);
        prop_assert!(d.x.abs() <= 1e-12 * scale && d.y.abs() <= 1e-12 * scale);
        prop_assert!(e.det > 0.0);
    }

    #[test]
    fn prey_coordinate_ignores_prey_side_parameters(p in params(), f in 0.5..2.0f64) {
        let x = interior_equilibrium(&p).unwrap().point.x;
        for name in [ParamName::C, ParamName::M, ParamName::R] {
            let q = p.with(name, p.get(name) * f);
            prop_assert_eq!(interior_equilibrium(&q).unwrap().point.x, x);
        }
        // Raising K only keeps X* < K valid.
        let q = p.with(ParamName::K, p.k * (1.0 + f));
        prop_assert_eq!(interior_equilibrium(&q).unwrap().point.x, x);
    }

    #[test]
    fn trace_changes_sign_at_critical_c(p in params()) {
        let ch = stability_threshold_c(&p).unwrap();
        prop_assume!(ch > 0.02);
        let delta = 1e-3 * ch;
        let below = interior_equilibrium(&p.with(ParamName::C, ch - delta)).unwrap().trace;
        let above = interior_equilibrium(&p.with(ParamName::C, ch + delta)).unwrap().trace;
        prop_assert!(below > 0.0 && above < 0.0, "trace {below} / {above} around C_H = {ch}");
        let closed = interior_trace_closed_form(&p.with(ParamName::C, ch));
        prop_assert!(closed.abs() < 1e-9);
    }

    #[test]
    fn quadratic_growth_hits_threshold_on_schedule(y0 in 0.5..2.0f64, ltheta in 2.0..8.0f64) {
        let theta = 10f64.powf(ltheta);
        let run = integrate_ode_fn(
            |_, y: &[f64; 1]| -> Result<[f64; 1], SolveError> { Ok([y[0] * y[0]]) },
            [y0],
            (0.0, 2.0 / y0),
            &IntegratorConfig::with_tolerances(1e-12, 1e-14),
            Some(&EventSpec::rising(0, theta)),
        )
        .unwrap();
        let t = run.event.unwrap().time;
        prop_assert!((t - (1.0 / y0 - 1.0 / theta)).abs() <= 1e-8);
    }

    #[test]
    fn config_round_trip(p in params(), u in 0.0..0.1f64, tau in 0.0..3.0f64, theta in 1e6..1e12f64) {
        let c = RunConfig {
            params: ModelParams { u, tau, kind: ModelKind::Feedback, ..p },
            theta: Some(theta),
            ..Default::default()
        };
        prop_assert_eq!(RunConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn fit_never_worse_than_constant(a in 0.5..5.0f64, c in 0.1..2.0f64, noise in 0.0..0.05f64, seed in 0u64..1000) {
        let xs: Vec<f64> = (0..30).map(|k| c + 1.0 + k as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, x)| a * x / (x - c) * (1.0 + noise * (((k as u64 * 7919 + seed) % 13) as f64 / 6.0 - 1.0)))
            .collect();
        let fit = fit_points(&xs, &ys, FitFamily::Rational, &LmOptions::default()).unwrap();
        prop_assert!(fit.rmse <= constant_fit_rmse(&ys) + 1e-12);
    }

    #[test]
    fn pchip_preserves_monotone_data(steps in prop::collection::vec(0.01..1.0f64, 4..20)) {
        let xs: Vec<f64> = (0..steps.len()).map(|k| k as f64).collect();
        let ys: Vec<f64> = steps.iter().scan(10.0, |acc, s| { *acc -= s; Some(*acc) }).collect();
        let pc = Pchip::new(&xs, &ys).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=200 {
            let v = pc.eval(xs[xs.len() - 1] * k as f64 / 200.0);
            prop_assert!(v <= prev + 1e-12);
            prev = v;
        }
    }
}

/// Doubling the initial predator density never delays blow-up, and every
/// blow-up run satisfies the comparison bound.
#[test]
fn blowup_monotone_in_predator_data() {
    let p = ModelParams::baseline();
    let cfg = BlowupConfig::default();
    for k in 0..10 {
        let ic = State::new(60.0 + 4.0 * k as f64, 25.0 + 3.0 * k as f64);
        let a = classify(&p, &ic.into(), &cfg).unwrap();
        let doubled = State::new(ic.x, 2.0 * ic.y);
        let b = classify(&p, &doubled.into(), &cfg).unwrap();
        assert_eq!(a.label, Label::BlowUp, "{ic:?}");
        assert_eq!(b.label, Label::BlowUp, "{doubled:?}");
        assert!(b.t_star.unwrap() <= a.t_star.unwrap());
        assert!(check_lower_bound(&a, &p, ic) && check_lower_bound(&b, &p, doubled));
    }
}

/// Prey state and the ratio of its derivative at the stop to its initial
/// value, for runs that blow up.
fn quench_ratio(p: &ModelParams, ic: State, theta: f64) -> Option<(f64, f64)> {
    let o = classify(
        p,
        &ic.into(),
        &BlowupConfig::default().with_threshold(theta),
    )
    .unwrap();
    if o.label != Label::BlowUp {
        return None;
    }
    let model = Model::new(*p).unwrap();
    let dx0 = model.rhs(ic, ic).unwrap().x.abs();
    Some((o.state_at_stop.x, o.dxdt_at_stop.abs() / dx0))
}

/// The prey derivative grows like Y, so a millionfold increase needs a
/// threshold far above 1e8; at the quench threshold 1e16 it holds for every
/// run that gets there. Smaller data can see the predator peak below 1e16.
#[test]
fn prey_derivative_explodes_at_quench_threshold() {
    let p = ModelParams::baseline();
    let mut blowups = 0;
    for k in 0..10 {
        let ic = State::new(60.0 + 4.0 * k as f64, 25.0 + 3.0 * k as f64);
        if let Some((x, ratio)) = quench_ratio(&p, ic, 1e16) {
            blowups += 1;
            assert!(x > 0.0 && ratio >= 1e6, "{ic:?}: X {x}, ratio {ratio:e}");
        }
    }
    assert!(blowups >= 8, "only {blowups} runs reached 1e16");
}

#[test]
#[ignore = "at threshold 1e8 the prey derivative grows only about 2e3-fold; see README"]
fn prey_derivative_explodes_at_default_threshold() {
    let (x, ratio) = quench_ratio(&ModelParams::baseline(), State::new(78.0, 30.0), 1e8).unwrap();
    assert!(x > 0.0 && ratio >= 1e6, "ratio {ratio:e}");
}
