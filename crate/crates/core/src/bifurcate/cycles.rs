use serde::{Deserialize, Serialize};

use super::BifurcationError;
use crate::model::{interior_equilibrium, Model, ModelParams, State};
use crate::solve::{integrate_ode_fn, EventSpec, IntegratorConfig, SolveError};

/// Poincaré section on the line `X = x`, split at `y_floor`. The flow turns
/// counterclockwise around the interior equilibrium, so the upper ray
/// (`Y > y_floor`) is crossed with X decreasing and the lower ray with X
/// increasing. Periodic orbits are located on the upper ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub x: f64,
    pub y_floor: f64,
}

impl Section {
    /// The upper ray through the interior equilibrium.
    pub fn through_equilibrium(params: &ModelParams) -> Result<Self, BifurcationError> {
        let eq = interior_equilibrium(params)?.point;
        Ok(Section {
            x: eq.x,
            y_floor: eq.y,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnOptions {
    pub integrator: IntegratorConfig,
    /// Longest time allowed for one return.
    pub t_max: f64,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        ReturnOptions {
            integrator: IntegratorConfig {
                rtol: 1e-11,
                atol: 1e-13,
                ..IntegratorConfig::default()
            },
            t_max: 2000.0,
        }
    }
}

/// One application of the return map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Return {
    pub y: f64,
    pub time: f64,
    /// dP/dy from the variational equations.
    pub derivative: f64,
    /// Integral of the divergence along the excursion.
    pub divergence_integral: f64,
}

/// Full-turn return to the ray containing `(x, y)`. Integrates the flow, its
/// variational equation for a vertical perturbation, and the divergence
/// integral.
pub fn return_map(
    model: &Model,
    section: &Section,
    y: f64,
    opts: &ReturnOptions,
) -> Result<Return, BifurcationError> {
    let f = |_t: f64, z: &[f64; 5]| -> Result<[f64; 5], SolveError> {
        let s = State::new(z[0], z[1]);
        let d = model.rhs(s, s)?;
        let j = model.jacobian(s);
        Ok([
            d.x,
            d.y,
            j[0][0] * z[2] + j[0][1] * z[3],
            j[1][0] * z[2] + j[1][1] * z[3],
            j[0][0] + j[1][1],
        ])
    };
    let upper = y > section.y_floor;
    let event = if upper {
        EventSpec::falling(0, section.x)
    } else {
        EventSpec::rising(0, section.x)
    };
    let run = integrate_ode_fn(
        f,
        [section.x, y, 0.0, 1.0, 0.0],
        (0.0, opts.t_max),
        &opts.integrator,
        Some(&event),
    )?;
    let hit = run
        .event
        .ok_or(BifurcationError::SectionNotCrossed { t_max: opts.t_max })?;
    let z = hit.state;
    if (z[1] > section.y_floor) != upper {
        return Err(BifurcationError::SectionNotCrossed { t_max: opts.t_max });
    }
    let s = State::new(section.x, z[1]);
    let d = model.rhs(s, s)?;
    // Project the perturbation along the flow back onto the section.
    let derivative = z[3] - d.y / d.x * z[2];
    Ok(Return {
        y: z[1],
        time: hit.time,
        derivative,
        divergence_integral: z[4],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitStability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub anchor: State,
    pub period: f64,
    /// Nontrivial Floquet multiplier, equal to dP/dy at the fixed point.
    pub floquet: f64,
    pub stability: OrbitStability,
    /// |P(y) - y| at the anchor.
    pub residual: f64,
    /// exp of the divergence integral over one period.
    pub liouville: f64,
}

impl PeriodicOrbit {
    fn from_return(section: &Section, y: f64, r: &Return) -> Self {
        PeriodicOrbit {
            anchor: State::new(section.x, y),
            period: r.time,
            floquet: r.derivative,
            stability: if r.derivative.abs() < 1.0 {
                OrbitStability::Stable
            } else {
                OrbitStability::Unstable
            },
            residual: (r.y - y).abs(),
            liouville: r.divergence_integral.exp(),
        }
    }
}

pub const CYCLE_RESIDUAL_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 50;
/// Ordinates closer than this to the equilibrium count as collapse.
const COLLAPSE_TOL: f64 = 1e-6;

/// Newton iteration on `P(y) - y` from a section ordinate.
pub fn find_cycle_on_section(
    model: &Model,
    section: &Section,
    y0: f64,
    opts: &ReturnOptions,
) -> Result<PeriodicOrbit, BifurcationError> {
    let mut y = y0;
    for it in 0..NEWTON_MAX_ITER {
        if !(y - section.y_floor > COLLAPSE_TOL) {
            return Err(BifurcationError::NewtonDiverged {
                iterations: it,
                last: y,
                reason: "iterate collapsed onto the equilibrium".into(),
            });
        }
        let r = return_map(model, section, y, opts)?;
        let g = r.y - y;
        if g.abs() < CYCLE_RESIDUAL_TOL {
            return Ok(PeriodicOrbit::from_return(section, y, &r));
        }
        let slope = r.derivative - 1.0;
        let mut step = -g / slope;
        if !step.is_finite() {
            return Err(BifurcationError::NewtonDiverged {
                iterations: it,
                last: y,
                reason: "singular return-map derivative".into(),
            });
        }
        // Never jump more than half the way to the equilibrium.
        let room = 0.5 * (y - section.y_floor);
        if step < -room {
            step = -room;
        }
        y += step.min(4.0 * (y - section.y_floor));
    }
    Err(BifurcationError::NewtonDiverged {
        iterations: NEWTON_MAX_ITER,
        last: y,
        reason: "iteration budget exhausted".into(),
    })
}

/// First section ordinate reached from `guess` (or its own ordinate if it
/// already lies on the section).
pub fn section_ordinate(
    model: &Model,
    section: &Section,
    guess: State,
    opts: &ReturnOptions,
) -> Result<f64, BifurcationError> {
    if guess.x == section.x && guess.y > section.y_floor {
        return Ok(guess.y);
    }
    // A rest point never reaches the section; only rounding would move it.
    let d = model.rhs(guess, guess)?;
    let scale = guess.x.abs().max(guess.y.abs()).max(1.0);
    if d.x.abs().max(d.y.abs()) <= 1e-14 * scale {
        return Err(BifurcationError::SectionNotCrossed { t_max: 0.0 });
    }
    let f = |_t: f64, z: &[f64; 2]| -> Result<[f64; 2], SolveError> {
        let s = State::from_array(*z);
        Ok(model.rhs(s, s)?.to_array())
    };
    let event = EventSpec::falling(0, section.x);
    let mut start = guess.to_array();
    let mut elapsed = 0.0;
    // A falling crossing below the floor is the lower half of a loop; skip it.
    while elapsed < opts.t_max {
        let run = integrate_ode_fn(
            f,
            start,
            (0.0, opts.t_max - elapsed),
            &opts.integrator,
            Some(&event),
        )?;
        let Some(hit) = run.event else { break };
        if hit.state[1] > section.y_floor {
            return Ok(hit.state[1]);
        }
        elapsed += hit.time;
        let after = run.trajectory.last_state();
        start = [after[0].min(section.x - 1e-12), after[1]];
    }
    Err(BifurcationError::SectionNotCrossed { t_max: opts.t_max })
}

/// Locates a periodic orbit from an arbitrary seed state on the section
/// `X = section_x` (the equilibrium abscissa when `None`).
pub fn find_cycle(
    params: &ModelParams,
    guess: State,
    section_x: Option<f64>,
) -> Result<PeriodicOrbit, BifurcationError> {
    let model = Model::new(*params)?;
    let mut section = Section::through_equilibrium(params)?;
    if let Some(x) = section_x {
        section.x = x;
    }
    let opts = ReturnOptions::default();
    let y0 = section_ordinate(&model, &section, guess, &opts)?;
    find_cycle_on_section(&model, &section, y0, &opts)
}

/// Fixed points of the return map found by scanning sign changes of
/// `P(y) - y` on `n` points of `(y_floor, y_max]` and refining each by
/// bisection followed by Newton.
pub fn section_fixed_points(
    model: &Model,
    section: &Section,
    y_max: f64,
    n: usize,
    opts: &ReturnOptions,
) -> Result<Vec<PeriodicOrbit>, BifurcationError> {
    let span = y_max - section.y_floor;
    let ys: Vec<f64> = (1..=n)
        .map(|k| section.y_floor + span * k as f64 / n as f64)
        .collect();
    let mut gs = Vec::with_capacity(n);
    for &y in &ys {
        gs.push(return_map(model, section, y, opts).map(|r| r.y - y).ok());
    }
    let mut out = Vec::new();
    for k in 0..n.saturating_sub(1) {
        let (Some(ga), Some(gb)) = (gs[k], gs[k + 1]) else {
            continue;
        };
        if ga.signum() == gb.signum() {
            continue;
        }
        let (mut lo, mut hi, mut glo) = (ys[k], ys[k + 1], ga);
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            let gm = return_map(model, section, mid, opts)?.y - mid;
            if gm.signum() == glo.signum() {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        let orbit = find_cycle_on_section(model, section, 0.5 * (lo + hi), opts)?;
        if !out
            .iter()
            .any(|o: &PeriodicOrbit| (o.anchor.y - orbit.anchor.y).abs() < 1e-7)
        {
            out.push(orbit);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoCycleCertificate {
    pub inner: PeriodicOrbit,
    pub outer: PeriodicOrbit,
    pub equilibrium: State,
    pub nested: bool,
}

/// Locates an inner and an outer cycle from seeds on either side and checks
/// that they are nested around the equilibrium.
pub fn two_cycle_certificate(
    params: &ModelParams,
    inner_seed: State,
    outer_seed: State,
) -> Result<TwoCycleCertificate, BifurcationError> {
    let inner = find_cycle(params, inner_seed, None)?;
    let outer = find_cycle(params, outer_seed, None)?;
    let equilibrium = interior_equilibrium(params)?.point;
    let nested = equilibrium.y < inner.anchor.y && inner.anchor.y < outer.anchor.y;
    Ok(TwoCycleCertificate {
        inner,
        outer,
        equilibrium,
        nested,
    })
}
