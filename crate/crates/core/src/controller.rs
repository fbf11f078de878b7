//! Linear MPC of the jacket coolant temperature.
//!
//! The plant is linearized at the calibrated equilibrium, discretized at the
//! telemetry cadence, and the finite-horizon tracking problem is condensed into
//! a box-constrained QP over the coolant sequence. The QP is solved by projected
//! gradient descent. The measured feed concentration and feed temperature enter
//! the prediction as disturbances held constant over the horizon.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::plant::{PlantInputs, PlantParams, PlantState, COOLANT_MAX, COOLANT_MIN};
use crate::{Error, Result};

/// Ridge added to the Hessian inside the solver.
pub const HESSIAN_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Discrete state matrix over one sampling interval.
    pub a: Matrix2<f64>,
    /// Discrete input matrix; columns are (c_af, t_f, t_c).
    pub b: Matrix2x3<f64>,
    /// Linearization state (c_a, temp).
    pub x_eq: Vector2<f64>,
    /// Linearization inputs (c_af, t_f, t_c).
    pub u_eq: Vector3<f64>,
    pub dt: f64,
}

/// Analytic Jacobians of the plant right-hand side with respect to the state
/// `(c_a, temp)` and the inputs `(c_af, t_f, t_c)`.
pub fn continuous_jacobians(
    params: &PlantParams,
    state: &PlantState,
    _inputs: &PlantInputs,
) -> (Matrix2<f64>, Matrix2x3<f64>) {
    let fv = params.flow_over_volume;
    let alpha = params.heat_transfer_coeff;
    let beta = params.reaction_heat_coeff;
    let k = params.rate_constant(state.temp);
    let dk_dt = k * params.activation_temp / (state.temp * state.temp);
    let a = Matrix2::new(
        -fv - k,
        -state.c_a * dk_dt,
        beta * k,
        -fv - alpha + beta * state.c_a * dk_dt,
    );
    let b = Matrix2x3::new(fv, 0.0, 0.0, 0.0, fv, alpha);
    (a, b)
}

/// exp(m) by a 4-term Taylor polynomial with scaling and squaring.
fn expm_taylor4<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let norm = m.abs().row_sum().max();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.05 {
        scale *= 0.5;
        squarings += 1;
    }
    let s = m * scale;
    let s2 = s * s;
    let s3 = s2 * s;
    let mut e = SMatrix::<f64, N, N>::identity() + s + s2 * 0.5 + s3 * (1.0 / 6.0);
    for _ in 0..squarings {
        e = e * e;
    }
    e
}

/// Linearizes at `(x_eq, u_eq)` and discretizes over one time unit.
pub fn linearize(params: &PlantParams, x_eq: &PlantState, u_eq: &PlantInputs) -> LinearModel {
    linearize_with_dt(params, x_eq, u_eq, 1.0)
}

pub fn linearize_with_dt(
    params: &PlantParams,
    x_eq: &PlantState,
    u_eq: &PlantInputs,
    dt: f64,
) -> LinearModel {
    let (jx, ju) = continuous_jacobians(params, x_eq, u_eq);
    // exp([[J, B], [0, 0]] dt) = [[Ad, Bd], [0, I]] for a zero-order hold
    let mut aug = SMatrix::<f64, 5, 5>::zeros();
    aug.fixed_view_mut::<2, 2>(0, 0).copy_from(&(jx * dt));
    aug.fixed_view_mut::<2, 3>(0, 2).copy_from(&(ju * dt));
    let e = expm_taylor4(&aug);
    LinearModel {
        a: e.fixed_view::<2, 2>(0, 0).into_owned(),
        b: e.fixed_view::<2, 3>(0, 2).into_owned(),
        x_eq: Vector2::new(x_eq.c_a, x_eq.temp),
        u_eq: Vector3::new(u_eq.c_af, u_eq.t_f, u_eq.t_c),
        dt,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub weight_temp: f64,
    pub weight_conc: f64,
    pub weight_move: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub setpoint_conc: f64,
    pub setpoint_temp: f64,
    pub solver_iters: usize,
    /// Step size as a fraction of `1 / lambda_max(H)`.
    pub solver_step: f64,
    /// Use the measured feed inputs as held disturbances in the prediction.
    pub feedforward: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            weight_temp: 1.0,
            weight_conc: 10.0,
            weight_move: 0.1,
            u_min: COOLANT_MIN,
            u_max: COOLANT_MAX,
            setpoint_conc: 2.0,
            setpoint_temp: 373.0,
            solver_iters: 200,
            solver_step: 0.9,
            feedforward: true,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("controller horizon must be >= 1"));
        }
        let weights = [self.weight_temp, self.weight_conc, self.weight_move];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config(
                "controller weights must be finite and nonnegative",
            ));
        }
        if self.weight_temp == 0.0 && self.weight_conc == 0.0 {
            return Err(Error::config("at least one tracking weight must be > 0"));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::config(format!(
                "u_min must be < u_max ({} >= {})",
                self.u_min, self.u_max
            )));
        }
        if !(self.solver_step > 0.0 && self.solver_step <= 1.0) {
            return Err(Error::config("solver_step must be in (0, 1]"));
        }
        if self.solver_iters == 0 {
            return Err(Error::config("solver_iters must be >= 1"));
        }
        Ok(())
    }
}

/// `min 0.5 z'Hz + g'z  s.t. lb <= z <= ub`; `constant` completes the cost.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub constant: f64,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        Self {
            h,
            g,
            lb,
            ub,
            constant: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    pub fn project(&self, z: &mut DVector<f64>) {
        for i in 0..z.len() {
            z[i] = z[i].clamp(self.lb[i], self.ub[i]);
        }
    }

    pub fn is_feasible(&self, z: &DVector<f64>) -> bool {
        z.iter()
            .zip(self.lb.iter().zip(self.ub.iter()))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Norm of `z - P(z - grad f(z))`; zero exactly at a KKT point.
    pub fn projected_gradient_norm(&self, z: &DVector<f64>) -> f64 {
        let grad = &self.h * z + &self.g;
        let mut moved = z - grad;
        self.project(&mut moved);
        (z - moved).norm()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.h.nrows() != n || self.h.ncols() != n || self.lb.len() != n || self.ub.len() != n {
            return Err(Error::invalid("QP dimensions are inconsistent"));
        }
        if self.h.iter().chain(self.g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("QP data must be finite"));
        }
        if self.lb.iter().zip(self.ub.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::invalid("QP box bounds need lb <= ub"));
        }
        let scale = self.h.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (self.h[(i, j)] - self.h[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("QP Hessian is not symmetric"));
                }
            }
        }
        Ok(())
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn largest_eigenvalue(h: &DMatrix<f64>, iters: usize) -> f64 {
    let n = h.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start vector
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = h * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda.max((h * &v).dot(&v))
}

fn check_psd(h: &DMatrix<f64>) -> Result<()> {
    let sym = (h + h.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let max_abs = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -1e-10 * max_abs {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Default step: `fraction / lambda_max(H + ridge)`.
pub fn default_step(problem: &QpProblem, fraction: f64) -> f64 {
    let lambda = largest_eigenvalue(&problem.h, 500) + HESSIAN_RIDGE;
    if lambda <= 0.0 {
        fraction
    } else {
        fraction / lambda
    }
}

/// Projected gradient descent from the projection of the origin.
pub fn solve_qp_box(problem: &QpProblem, iters: usize, step: f64) -> Result<DVector<f64>> {
    let start = DVector::zeros(problem.dim());
    solve_qp_box_from(problem, &start, iters, step, None)
}

/// Projected gradient descent from `start` (projected onto the box first).
/// `visit` sees every iterate, starting with the projected start point.
pub fn solve_qp_box_from(
    problem: &QpProblem,
    start: &DVector<f64>,
    iters: usize,
    step: f64,
    mut visit: Option<&mut dyn FnMut(&DVector<f64>)>,
) -> Result<DVector<f64>> {
    problem.validate()?;
    check_psd(&problem.h)?;
    if start.len() != problem.dim() {
        return Err(Error::invalid("start point has the wrong dimension"));
    }
    let lambda = largest_eigenvalue(&problem.h, 500) + HESSIAN_RIDGE;
    if !(step > 0.0) || step * lambda > 1.0 + 1e-6 {
        return Err(Error::invalid(format!(
            "step {step} must be in (0, 1/lambda_max] with lambda_max ~ {lambda}"
        )));
    }
    let mut z = start.clone();
    problem.project(&mut z);
    if let Some(f) = visit.as_deref_mut() {
        f(&z);
    }
    for _ in 0..iters {
        let grad = &problem.h * &z + &problem.g + &z * HESSIAN_RIDGE;
        z.axpy(-step, &grad, 1.0);
        problem.project(&mut z);
        if let Some(f) = visit.as_deref_mut() {
            f(&z);
        }
    }
    Ok(z)
}

/// Horizon prediction matrices; they depend only on the model and config.
#[derive(Debug, Clone)]
struct Prediction {
    /// A^k for k = 1..=N.
    phi: Vec<Matrix2<f64>>,
    /// (sum_{j<k} A^j) B_dist for k = 1..=N; B_dist holds the c_af and t_f columns.
    psi: Vec<Matrix2<f64>>,
    /// Stacked coolant response, 2N x N.
    gamma: DMatrix<f64>,
}

impl Prediction {
    fn new(model: &LinearModel, horizon: usize) -> Self {
        let b_cool = model.b.column(2).into_owned();
        let b_dist = Matrix2::from_columns(&[
            model.b.column(0).into_owned(),
            model.b.column(1).into_owned(),
        ]);
        let mut powers = Vec::with_capacity(horizon + 1);
        powers.push(Matrix2::identity());
        for k in 1..=horizon {
            powers.push(model.a * powers[k - 1]);
        }
        let mut psi = Vec::with_capacity(horizon);
        let mut acc = Matrix2::zeros();
        for power in powers.iter().take(horizon) {
            acc += power;
            psi.push(acc * b_dist);
        }
        let mut gamma = DMatrix::zeros(2 * horizon, horizon);
        for i in 0..horizon {
            for j in 0..=i {
                let col = powers[i - j] * b_cool;
                gamma[(2 * i, j)] = col[0];
                gamma[(2 * i + 1, j)] = col[1];
            }
        }
        Self {
            phi: powers[1..].to_vec(),
            psi,
            gamma,
        }
    }
}

fn quadratic_terms(config: &MpcConfig, pred: &Prediction) -> DMatrix<f64> {
    let n = config.horizon;
    let q = weight_diag(config, n);
    let d = difference_matrix(n);
    let gt_q = pred.gamma.transpose() * DMatrix::from_diagonal(&q);
    let mut h = (&gt_q * &pred.gamma + d.transpose() * &d * config.weight_move) * 2.0;
    h = (&h + h.transpose()) * 0.5;
    h
}

fn weight_diag(config: &MpcConfig, n: usize) -> DVector<f64> {
    DVector::from_fn(2 * n, |i, _| {
        if i % 2 == 0 {
            config.weight_conc
        } else {
            config.weight_temp
        }
    })
}

fn difference_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if j + 1 == i {
            -1.0
        } else {
            0.0
        }
    })
}

fn linear_terms(
    model: &LinearModel,
    config: &MpcConfig,
    pred: &Prediction,
    state: &PlantState,
    disturbance: &PlantInputs,
    prev_command: f64,
) -> (DVector<f64>, f64) {
    let n = config.horizon;
    let dx0 = Vector2::new(state.c_a, state.temp) - model.x_eq;
    let dd = if config.feedforward {
        Vector2::new(
            disturbance.c_af - model.u_eq[0],
            disturbance.t_f - model.u_eq[1],
        )
    } else {
        Vector2::zeros()
    };
    let offset = model.x_eq - Vector2::new(config.setpoint_conc, config.setpoint_temp);
    let mut c = DVector::zeros(2 * n);
    for k in 0..n {
        let ck = pred.phi[k] * dx0 + pred.psi[k] * dd + offset;
        c[2 * k] = ck[0];
        c[2 * k + 1] = ck[1];
    }
    let q = weight_diag(config, n);
    let qc = c.component_mul(&q);
    let mut e0 = DVector::zeros(n);
    e0[0] = prev_command - model.u_eq[2];
    let d = difference_matrix(n);
    let g = (pred.gamma.transpose() * &qc - d.transpose() * &e0 * config.weight_move) * 2.0;
    let constant = c.dot(&qc) + config.weight_move * e0[0] * e0[0];
    (g, constant)
}

fn box_bounds(model: &LinearModel, config: &MpcConfig) -> (DVector<f64>, DVector<f64>) {
    let n = config.horizon;
    (
        DVector::from_element(n, config.u_min - model.u_eq[2]),
        DVector::from_element(n, config.u_max - model.u_eq[2]),
    )
}

/// Condensed tracking QP over coolant deviations `z_k = t_c(k) - u_eq.t_c`.
///
/// The full cost `0.5 z'Hz + g'z + constant` equals
/// `sum_{k=1..N} e_k' Q e_k + w_move sum_{k=0..N-1} (u_k - u_{k-1})^2`
/// with `e_k` the predicted tracking error and `u_{-1} = prev_command`.
pub fn build_qp(
    model: &LinearModel,
    state: &PlantState,
    disturbance: &PlantInputs,
    prev_command: f64,
    config: &MpcConfig,
) -> QpProblem {
    let pred = Prediction::new(model, config.horizon);
    let h = quadratic_terms(config, &pred);
    let (g, constant) = linear_terms(model, config, &pred, state, disturbance, prev_command);
    let (lb, ub) = box_bounds(model, config);
    QpProblem {
        h,
        g,
        lb,
        ub,
        constant,
    }
}

/// MPC with cached prediction matrices, Hessian and step size.
#[derive(Debug, Clone)]
pub struct MpcController {
    model: LinearModel,
    config: MpcConfig,
    pred: Prediction,
    h: DMatrix<f64>,
    step: f64,
}

impl MpcController {
    pub fn new(model: LinearModel, config: MpcConfig) -> Result<Self> {
        config.validate()?;
        let pred = Prediction::new(&model, config.horizon);
        let h = quadratic_terms(&config, &pred);
        check_psd(&h)?;
        let lambda = largest_eigenvalue(&h, 500) + HESSIAN_RIDGE;
        let step = config.solver_step / lambda;
        Ok(Self {
            model,
            config,
            pred,
            h,
            step,
        })
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn problem(
        &self,
        state: &PlantState,
        disturbance: &PlantInputs,
        prev_command: f64,
    ) -> QpProblem {
        let (g, constant) = linear_terms(
            &self.model,
            &self.config,
            &self.pred,
            state,
            disturbance,
            prev_command,
        );
        let (lb, ub) = box_bounds(&self.model, &self.config);
        QpProblem {
            h: self.h.clone(),
            g,
            lb,
            ub,
            constant,
        }
    }

    /// First coolant command of the solved sequence, in `[u_min, u_max]`.
    pub fn command(
        &self,
        state: &PlantState,
        disturbance: &PlantInputs,
        prev_command: f64,
    ) -> Result<f64> {
        if !state.is_finite() || !disturbance.is_finite() || !prev_command.is_finite() {
            return Err(Error::domain("controller inputs must be finite"));
        }
        let (g, _) = linear_terms(
            &self.model,
            &self.config,
            &self.pred,
            state,
            disturbance,
            prev_command,
        );
        let (lb, ub) = box_bounds(&self.model, &self.config);
        let u_eq = self.model.u_eq[2];
        let mut z = DVector::from_element(self.config.horizon, prev_command - u_eq);
        for i in 0..z.len() {
            z[i] = z[i].clamp(lb[i], ub[i]);
        }
        // hot loop of the simulation: skips the per-call validation done by solve_qp_box
        for _ in 0..self.config.solver_iters {
            let grad = &self.h * &z + &g + &z * HESSIAN_RIDGE;
            z.axpy(-self.step, &grad, 1.0);
            for i in 0..z.len() {
                z[i] = z[i].clamp(lb[i], ub[i]);
            }
        }
        Ok((z[0] + u_eq).clamp(self.config.u_min, self.config.u_max))
    }
}

/// One-shot MPC evaluation; see [`MpcController`] for the cached form.
pub fn mpc_control(
    model: &LinearModel,
    state: &PlantState,
    disturbance: &PlantInputs,
    prev_command: f64,
    config: &MpcConfig,
) -> Result<f64> {
    MpcController::new(model.clone(), config.clone())?.command(state, disturbance, prev_command)
}
