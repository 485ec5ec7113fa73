use super::BifurcationError;
use crate::model::{Mat2, Model, ModelParams, State};

/// Smooth planar vector field with an analytic Jacobian.
pub trait PlanarField {
    fn field(&self, x: [f64; 2]) -> [f64; 2];
    fn jacobian(&self, x: [f64; 2]) -> Mat2;
}

impl PlanarField for Model {
    fn field(&self, x: [f64; 2]) -> [f64; 2] {
        let s = State::from_array(x);
        self.rhs(s, s)
            .map(State::to_array)
            .unwrap_or([f64::NAN, f64::NAN])
    }

    fn jacobian(&self, x: [f64; 2]) -> Mat2 {
        Model::jacobian(self, State::from_array(x))
    }
}

/// Trace tolerance for accepting a point as lying on the Hopf locus.
pub const HOPF_TRACE_TOL: f64 = 1e-8;
const FD_REL_STEP: f64 = 1e-4;
const RICHARDSON_TOL: f64 = 1e-3;

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Coefficient and the magnitude of its individual terms (for the
/// consistency test).
fn lyapunov_terms<F: PlanarField>(field: &F, eq: [f64; 2], h: f64) -> (f64, f64) {
    let j = field.jacobian(eq);
    let (a11, a12) = (j[0][0], j[0][1]);
    let omega = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).sqrt();
    // Columns v = (0, w), u = (a12, -a11) put the linear part in the form
    // [[0, -w], [w, 0]]; T is scaled to unit determinant, which preserves the
    // sign and leaves rotations unscaled.
    let mut t = [[0.0, a12], [omega, -a11]];
    let norm = (a12 * omega).abs().sqrt();
    for row in t.iter_mut() {
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    let dt = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let tinv = [[t[1][1] / dt, -t[0][1] / dt], [-t[1][0] / dt, t[0][0] / dt]];
    let dfx = |xi: [f64; 2]| -> Mat2 {
        let x = [
            eq[0] + t[0][0] * xi[0] + t[0][1] * xi[1],
            eq[1] + t[1][0] * xi[0] + t[1][1] * xi[1],
        ];
        mat_mul(&mat_mul(&tinv, &field.jacobian(x)), &t)
    };
    let d0 = dfx([0.0, 0.0]);
    let dp1 = dfx([h, 0.0]);
    let dm1 = dfx([-h, 0.0]);
    let dp2 = dfx([0.0, h]);
    let dm2 = dfx([0.0, -h]);
    let first = |p: &Mat2, m: &Mat2, r: usize, c: usize| (p[r][c] - m[r][c]) / (2.0 * h);
    let second =
        |p: &Mat2, m: &Mat2, r: usize, c: usize| (p[r][c] - 2.0 * d0[r][c] + m[r][c]) / (h * h);
    let f_xx = first(&dp1, &dm1, 0, 0);
    let f_xy = first(&dp2, &dm2, 0, 0);
    let f_yy = first(&dp2, &dm2, 0, 1);
    let g_xx = first(&dp1, &dm1, 1, 0);
    let g_xy = first(&dp2, &dm2, 1, 0);
    let g_yy = first(&dp2, &dm2, 1, 1);
    let f_xxx = second(&dp1, &dm1, 0, 0);
    let f_xyy = second(&dp2, &dm2, 0, 0);
    let g_xxy = second(&dp1, &dm1, 1, 1);
    let g_yyy = second(&dp2, &dm2, 1, 1);
    let cubic = [f_xxx, f_xyy, g_xxy, g_yyy];
    let quad = [
        f_xy * (f_xx + f_yy),
        -g_xy * (g_xx + g_yy),
        -f_xx * g_xx,
        f_yy * g_yy,
    ];
    let value = cubic.iter().sum::<f64>() / 16.0 + quad.iter().sum::<f64>() / (16.0 * omega);
    let size = cubic.iter().map(|v| v.abs()).sum::<f64>() / 16.0
        + quad.iter().map(|v| v.abs()).sum::<f64>() / (16.0 * omega);
    (value, size)
}

/// First Lyapunov coefficient of a planar field at an equilibrium with purely
/// imaginary eigenvalues. Negative values mean a supercritical Hopf
/// bifurcation (a stable cycle is born).
pub fn first_lyapunov_field<F: PlanarField>(
    field: &F,
    eq: [f64; 2],
) -> Result<f64, BifurcationError> {
    let j = field.jacobian(eq);
    let tr = j[0][0] + j[1][1];
    let dt = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(tr.abs() < HOPF_TRACE_TOL && dt > 0.0) {
        return Err(BifurcationError::NotOnHopfLocus { trace: tr, det: dt });
    }
    let scale = eq[0].abs().max(eq[1].abs()).max(1e-3);
    let h = FD_REL_STEP * scale;
    let (coarse, size) = lyapunov_terms(field, eq, h);
    let (fine, _) = lyapunov_terms(field, eq, 0.5 * h);
    if (coarse - fine).abs() > RICHARDSON_TOL * size.max(f64::MIN_POSITIVE) {
        return Err(BifurcationError::FiniteDifference(format!(
            "first Lyapunov estimates {coarse} and {fine} disagree"
        )));
    }
    Ok(fine)
}

/// First Lyapunov coefficient at the interior equilibrium.
pub fn first_lyapunov(params: &ModelParams) -> Result<f64, BifurcationError> {
    let model = Model::new(*params)?;
    let eq = crate::model::interior_equilibrium(params)?;
    first_lyapunov_field(&model, eq.point.to_array())
}
