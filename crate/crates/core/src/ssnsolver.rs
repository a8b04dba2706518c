//! The semismooth* Newton method for `0 ∈ f(x) + ∇g(x)ᵀN_D(g(x))`.
//!
//! Each iteration runs the approximation step (a QP giving a point on the
//! graph of the reformulated map) and then a Newton step. The step is computed
//! from the reduced `n×n` system; the full `(n+s)×(n+s)` matrices `A`, `B` and
//! the closed-form `A⁻¹` are kept as cross-checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxcones::{Activity, ActivityPattern, ConeError, DEFAULT_ACTIVITY_TOL};
use crate::densela::{self, LinalgError, Lu, Matrix};
use crate::geproblem::{GeProblem, ProblemError, REGULARITY_TOL};
use crate::qpsolver::{self, QpError, QpInstance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("point is degenerate: Wᵀ∇g is rank deficient ({0})")]
    Degenerate(String),
    #[error("Newton system is singular: {0}")]
    SingularSystem(String),
    #[error("linearized subproblem has no solution")]
    Unsolvable,
    #[error("non-finite step")]
    NonFiniteStep,
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Output of the approximation step at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResult {
    pub x: Vec<f64>,
    pub d: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `p̂* = L_λ̂(x̂)`
    pub p_star: Vec<f64>,
    /// `ŷ = (p̂*, g(x̂) − d̂)`, length `n + s`.
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub g: Vec<f64>,
    pub jg: Matrix,
    pub active: ActivityPattern,
    pub degenerate_multiplier: bool,
}

impl ApproxResult {
    pub fn residual(&self) -> f64 {
        densela::norm2(&self.u)
    }
}

/// Solves the approximation QP at `x` and assembles `(x̂, d̂, λ̂, ŷ)`.
///
/// Active coordinates of `d̂` are snapped onto their bounds so that the
/// activity pattern seen by the Newton step is exact.
pub fn approximation_step(problem: &GeProblem, x: &[f64]) -> Result<ApproxResult> {
    let f = problem.eval_f(x)?;
    let g = problem.eval_g(x)?;
    let jg = problem.eval_jg(x)?;
    let inst = QpInstance::new(f.clone(), g.clone(), jg.clone(), problem.set().clone())?;
    let sol = qpsolver::solve_qp(&inst)?;
    let mut d = inst.constraint_value(&sol.u);
    let set = problem.set();
    for (i, a) in sol.active.0.iter().enumerate() {
        match a {
            Activity::AtLower | Activity::Fixed => d[i] = set.lower()[i],
            Activity::AtUpper => d[i] = set.upper()[i],
            Activity::Interior => {}
        }
    }
    let p_star = densela::axpy(1.0, &jg.tr_mul_vec(&sol.lambda)?, &f);
    let mut y = p_star.clone();
    y.extend(g.iter().zip(&d).map(|(gi, di)| gi - di));
    Ok(ApproxResult {
        x: x.to_vec(),
        d,
        lambda: sol.lambda,
        p_star,
        y,
        u: sol.u,
        g,
        jg,
        active: sol.active,
        degenerate_multiplier: sol.degenerate_multiplier,
    })
}

/// Matrices of the reduced Newton system at an approximation point.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonWorkspace {
    /// `s×(s−l̂)`, signed unit columns spanning `Span N_D(d̂)`.
    pub w: Matrix,
    /// `n×(n−(s−l̂))`, orthonormal basis of `ker Ŵᵀ∇g(x̂)`.
    pub z: Matrix,
    pub reduced_matrix: Matrix,
    pub reduced_rhs: Vec<f64>,
    pub condition_estimate: f64,
    /// `∇L_λ̂(x̂)`
    pub jac_l: Matrix,
    pub jg: Matrix,
}

pub fn newton_workspace(problem: &GeProblem, approx: &ApproxResult) -> Result<NewtonWorkspace> {
    let n = problem.n();
    let w = approx.active.span_normal_basis();
    let jg = approx.jg.clone();
    let c = w.transpose().matmul(&jg)?;
    if c.rows() > n {
        return Err(SolverError::Degenerate(format!(
            "{} active rows exceed dimension {n}",
            c.rows()
        )));
    }
    let z = match densela::nullspace_basis(&c) {
        Ok(z) => z,
        Err(LinalgError::RankDeficient { index, value }) => {
            return Err(SolverError::Degenerate(format!(
                "pivot {index} of LQ factor is {value:e}"
            )))
        }
        Err(e) => return Err(e.into()),
    };
    let lag = problem.lagrangian(&approx.x, &approx.lambda)?;
    let zt = z.transpose();
    let reduced_matrix = zt.matmul(&lag.jacobian)?.vstack(&c)?;
    let mut reduced_rhs: Vec<f64> = zt.mul_vec(&lag.value)?.iter().map(|v| -v).collect();
    let gd = densela::sub_vec(&approx.g, &approx.d);
    reduced_rhs.extend(w.tr_mul_vec(&gd)?.iter().map(|v| -v));
    let condition_estimate = densela::condition_number(&reduced_matrix).unwrap_or(f64::INFINITY);
    Ok(NewtonWorkspace {
        w,
        z,
        reduced_matrix,
        reduced_rhs,
        condition_estimate,
        jac_l: lag.jacobian,
        jg,
    })
}

pub fn newton_step(ws: &NewtonWorkspace) -> Result<Vec<f64>> {
    match densela::solve_dense(&ws.reduced_matrix, &ws.reduced_rhs) {
        Ok(step) => Ok(step),
        Err(LinalgError::Singular { index, value }) => Err(SolverError::SingularSystem(format!(
            "pivot {index} is {value:e} (condition estimate {:e})",
            ws.condition_estimate
        ))),
        Err(e) => Err(e.into()),
    }
}

impl NewtonWorkspace {
    fn n(&self) -> usize {
        self.z.rows()
    }

    fn s(&self) -> usize {
        self.w.rows()
    }

    /// The pair `(A, B)` built from the row triples of the coderivative.
    pub fn full_ab(&self) -> Result<(Matrix, Matrix)> {
        let (n, s) = (self.n(), self.s());
        let k = self.z.cols();
        let m = self.w.cols();
        let zt = self.z.transpose();
        let wt = self.w.transpose();
        let mut a = Matrix::zeros(n + s, n + s);
        a.set_block(0, 0, &zt.matmul(&self.jac_l)?);
        a.set_block(k, 0, &wt.matmul(&self.jg)?);
        a.set_block(n, 0, &self.jg);
        a.set_block(n, n, &Matrix::identity(s).scale(-1.0));
        let mut b = Matrix::zeros(n + s, n + s);
        b.set_block(0, 0, &zt);
        b.set_block(k, n, &wt);
        b.set_block(n, n, &Matrix::identity(s));
        debug_assert_eq!(k + m, n);
        Ok((a, b))
    }

    /// `A⁻¹` assembled blockwise from `G = ẐᵀLẐ` and `C† = Cᵀ(CCᵀ)⁻¹`.
    pub fn closed_form_inverse(&self) -> Result<Matrix> {
        let (n, s) = (self.n(), self.s());
        let k = self.z.cols();
        let c = self.w.transpose().matmul(&self.jg)?;
        let m = c.rows();
        let zt_l = self.z.transpose().matmul(&self.jac_l)?;
        let z_ginv = if k == 0 {
            Matrix::zeros(n, 0)
        } else {
            let g = zt_l.matmul(&self.z)?;
            let lu = Lu::factor(&g, REGULARITY_TOL).map_err(|e| match e {
                LinalgError::Singular { index, value } => SolverError::SingularSystem(format!(
                    "reduced Hessian G has pivot {index} equal to {value:e}"
                )),
                e => e.into(),
            })?;
            self.z.matmul(&lu.inverse()?)?
        };
        let c_pinv = if m == 0 {
            Matrix::zeros(n, 0)
        } else {
            densela::pseudo_inverse_full_row_rank(&c)?
        };
        let proj = Matrix::identity(n).sub(&z_ginv.matmul(&zt_l)?)?;
        let upper_mid = proj.matmul(&c_pinv)?;
        let mut inv = Matrix::zeros(n + s, n + s);
        inv.set_block(0, 0, &z_ginv);
        inv.set_block(0, k, &upper_mid);
        inv.set_block(n, 0, &self.jg.matmul(&z_ginv)?);
        inv.set_block(n, k, &self.jg.matmul(&upper_mid)?);
        inv.set_block(n, n, &Matrix::identity(s).scale(-1.0));
        Ok(inv)
    }
}

pub fn assemble_full_ab(problem: &GeProblem, approx: &ApproxResult) -> Result<(Matrix, Matrix)> {
    newton_workspace(problem, approx)?.full_ab()
}

pub fn closed_form_inverse(problem: &GeProblem, approx: &ApproxResult) -> Result<Matrix> {
    newton_workspace(problem, approx)?.closed_form_inverse()
}

/// `s_x` from `(s_x, s_d) = −A⁻¹Bŷ`.
pub fn full_step_oracle(problem: &GeProblem, approx: &ApproxResult) -> Result<Vec<f64>> {
    let ws = newton_workspace(problem, approx)?;
    let (_, b) = ws.full_ab()?;
    let inv = ws.closed_form_inverse()?;
    let step = inv.mul_vec(&b.mul_vec(&approx.y)?)?;
    Ok(step[..problem.n()].iter().map(|v| -v).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    QpInfeasible,
    SingularNewtonSystem,
    UnsolvableSubproblem,
    NumericalFailure,
}

impl SolveStatus {
    pub fn from_error(err: &SolverError) -> SolveStatus {
        match err {
            SolverError::Qp(QpError::Infeasible { .. }) => SolveStatus::QpInfeasible,
            SolverError::Degenerate(_) | SolverError::SingularSystem(_) => {
                SolveStatus::SingularNewtonSystem
            }
            SolverError::Unsolvable => SolveStatus::UnsolvableSubproblem,
            _ => SolveStatus::NumericalFailure,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "CONVERGED",
            SolveStatus::MaxIter => "MAX_ITER",
            SolveStatus::QpInfeasible => "QP_INFEASIBLE",
            SolveStatus::SingularNewtonSystem => "SINGULAR_NEWTON_SYSTEM",
            SolveStatus::UnsolvableSubproblem => "UNSOLVABLE_SUBPROBLEM",
            SolveStatus::NumericalFailure => "NUMERICAL_FAILURE",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub x: Vec<f64>,
    /// Residual proxy; `‖û‖` for the semismooth* method.
    pub residual: f64,
    /// Norm of the step taken from `x`; absent on the last record.
    pub step_norm: Option<f64>,
    pub lambda: Vec<f64>,
    pub branch: String,
    /// `step_norm_k / step_norm_{k−1}²`
    pub rate_estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_norm: Option<f64>,
    /// `log(e_k) / log(e_{k−1})`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: Vec<IterationRecord>,
    pub final_x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SolveReport {
    pub fn newton_steps(&self) -> usize {
        self.iterations.iter().filter(|r| r.step_norm.is_some()).count()
    }

    /// Successive step-norm ratios `step_k / step_{k−1}`.
    pub fn step_ratios(&self) -> Vec<f64> {
        let steps: Vec<f64> = self.iterations.iter().filter_map(|r| r.step_norm).collect();
        steps
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    /// Fills the error fields against a known solution.
    pub fn annotate_errors(&mut self, x_bar: &[f64]) {
        let mut prev: Option<f64> = None;
        for rec in &mut self.iterations {
            let e = densela::norm2(&densela::sub_vec(&rec.x, x_bar));
            rec.error_norm = Some(e);
            rec.error_rate = match prev {
                Some(p) if e > 0.0 && p > 0.0 && p != 1.0 && e != 1.0 => Some(e.ln() / p.ln()),
                _ => None,
            };
            prev = Some(e);
        }
    }
}

/// What a scheme reports about the current iterate.
#[derive(Debug, Clone)]
pub struct Probe<S> {
    pub residual: f64,
    pub lambda: Vec<f64>,
    pub branch: String,
    pub state: S,
}

/// A Newton-type method as a pair of approximation and step computations.
pub trait NewtonScheme {
    type State;

    fn approximate(&mut self, x: &[f64]) -> Result<Probe<Self::State>>;

    fn step(&mut self, x: &[f64], probe: &Probe<Self::State>) -> Result<Vec<f64>>;

    /// Called before each step; `last_step` is the norm of the step that
    /// produced `x`.
    fn converged(&self, probe: &Probe<Self::State>, last_step: Option<f64>, tol: f64) -> bool {
        let _ = last_step;
        probe.residual <= tol
    }
}

fn check_run_args(n: usize, x0: &[f64], tol: f64, max_iter: usize) -> Result<()> {
    if x0.len() != n {
        return Err(SolverError::InvalidArgument(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::InvalidArgument("x0 is not finite".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(SolverError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(SolverError::InvalidArgument("max_iter must be at least 1".into()));
    }
    Ok(())
}

/// Generic outer loop. Runtime failures end up in the report status.
pub fn run_scheme<S: NewtonScheme>(
    scheme: &mut S,
    n: usize,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    check_run_args(n, x0, tol, max_iter)?;
    let mut x = x0.to_vec();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut last_step: Option<f64> = None;
    let finish = |status, records, x, message| SolveReport {
        status,
        iterations: records,
        final_x: x,
        message,
    };
    for k in 0.. {
        let probe = match scheme.approximate(&x) {
            Ok(p) => p,
            Err(e) => {
                return Ok(finish(SolveStatus::from_error(&e), records, x, Some(e.to_string())))
            }
        };
        records.push(IterationRecord {
            k,
            x: x.clone(),
            residual: probe.residual,
            step_norm: None,
            lambda: probe.lambda.clone(),
            branch: probe.branch.clone(),
            rate_estimate: None,
            error_norm: None,
            error_rate: None,
        });
        if scheme.converged(&probe, last_step, tol) {
            return Ok(finish(SolveStatus::Converged, records, x, None));
        }
        if k == max_iter {
            return Ok(finish(SolveStatus::MaxIter, records, x, None));
        }
        let step = match scheme.step(&x, &probe) {
            Ok(s) if s.iter().all(|v| v.is_finite()) => s,
            Ok(_) => {
                let e = SolverError::NonFiniteStep;
                return Ok(finish(SolveStatus::NumericalFailure, records, x, Some(e.to_string())));
            }
            Err(e) => {
                return Ok(finish(SolveStatus::from_error(&e), records, x, Some(e.to_string())))
            }
        };
        let norm = densela::norm2(&step);
        let rec = records.last_mut().expect("record pushed above");
        rec.step_norm = Some(norm);
        rec.rate_estimate = match last_step {
            Some(p) if p > 0.0 => Some(norm / (p * p)),
            _ => None,
        };
        last_step = Some(norm);
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi += si;
        }
    }
    unreachable!("loop returns at k == max_iter")
}

/// Semismooth* Newton with steps from the reduced system.
pub struct ReducedScheme<'a> {
    pub problem: &'a GeProblem,
}

/// Semismooth* Newton with steps `−A⁻¹Bŷ` from the closed-form inverse.
pub struct FullStepScheme<'a> {
    pub problem: &'a GeProblem,
}

fn probe_from(problem: &GeProblem, x: &[f64]) -> Result<Probe<ApproxResult>> {
    let approx = approximation_step(problem, x)?;
    Ok(Probe {
        residual: approx.residual(),
        lambda: approx.lambda.clone(),
        branch: approx.active.summary(),
        state: approx,
    })
}

impl NewtonScheme for ReducedScheme<'_> {
    type State = ApproxResult;

    fn approximate(&mut self, x: &[f64]) -> Result<Probe<ApproxResult>> {
        probe_from(self.problem, x)
    }

    fn step(&mut self, _x: &[f64], probe: &Probe<ApproxResult>) -> Result<Vec<f64>> {
        newton_step(&newton_workspace(self.problem, &probe.state)?)
    }
}

impl NewtonScheme for FullStepScheme<'_> {
    type State = ApproxResult;

    fn approximate(&mut self, x: &[f64]) -> Result<Probe<ApproxResult>> {
        probe_from(self.problem, x)
    }

    fn step(&mut self, _x: &[f64], probe: &Probe<ApproxResult>) -> Result<Vec<f64>> {
        full_step_oracle(self.problem, &probe.state)
    }
}

/// Runs the semismooth* Newton method until `‖û‖ ≤ tol`.
pub fn solve(problem: &GeProblem, x0: &[f64], tol: f64, max_iter: usize) -> Result<SolveReport> {
    run_scheme(&mut ReducedScheme { problem }, problem.n(), x0, tol, max_iter)
}

/// As [`solve`], stepping through the full `(A, B)` system.
pub fn solve_full(problem: &GeProblem, x0: &[f64], tol: f64, max_iter: usize) -> Result<SolveReport> {
    run_scheme(&mut FullStepScheme { problem }, problem.n(), x0, tol, max_iter)
}

/// `(p_i, q_i*, d_i*)` for every row of `(A, B)`.
pub fn row_triples(a: &Matrix, b: &Matrix, n: usize) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    (0..a.rows())
        .map(|i| {
            let p = b.row(i)[..n].to_vec();
            let q = b.row(i)[n..].to_vec();
            let d = a.row(i)[n..].to_vec();
            (p, q, d)
        })
        .collect()
}

/// Checks that every row of `(A, B)` comes from a regular coderivative element
/// of `N_D` at `(d̂, λ̂)`.
pub fn rows_are_coderivative_elements(
    problem: &GeProblem,
    approx: &ApproxResult,
    a: &Matrix,
    b: &Matrix,
) -> Result<bool> {
    let n = problem.n();
    for (p, q, d) in row_triples(a, b, n) {
        let dir = approx.jg.mul_vec(&p)?;
        let cand = densela::axpy(1.0, &d, &q);
        if !problem
            .set()
            .regular_coderivative_nd(&approx.d, &approx.lambda, &dir, &cand, DEFAULT_ACTIVITY_TOL)?
        {
            return Ok(false);
        }
    }
    Ok(true)
}
