//! Reference methods: Newton's method on nonsmooth equations, and the
//! Josephy-Newton method whose affine subproblems are solved by enumerating
//! activity patterns.

use std::sync::Arc;

use crate::boxcones::{Activity, BoxSet};
use crate::densela::{self, LinalgError, Matrix};
use crate::geproblem::GeProblem;
use crate::qpsolver::BRUTE_FORCE_MAX_ROWS;
use crate::ssnsolver::{
    approximation_step, run_scheme, NewtonScheme, Probe, Result, SolveReport, SolverError,
};

type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type MatFn = dyn Fn(&[f64]) -> Matrix + Send + Sync;

/// A map `F: ℝⁿ → ℝⁿ` with a selection from its generalized Jacobian.
#[derive(Clone)]
pub struct NonsmoothSystem {
    pub n: usize,
    eval: Arc<VecFn>,
    jacobian_element: Arc<MatFn>,
}

impl NonsmoothSystem {
    pub fn new(
        n: usize,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian_element: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        NonsmoothSystem {
            n,
            eval: Arc::new(eval),
            jacobian_element: Arc::new(jacobian_element),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = (self.eval)(x);
        if v.len() != self.n || v.iter().any(|t| !t.is_finite()) {
            return Err(SolverError::InvalidArgument(
                "system value has wrong length or is not finite".into(),
            ));
        }
        Ok(v)
    }

    pub fn jacobian_element(&self, x: &[f64]) -> Result<Matrix> {
        let j = (self.jacobian_element)(x);
        if j.shape() != (self.n, self.n) || !j.is_finite() {
            return Err(SolverError::InvalidArgument(
                "Jacobian element has wrong shape or is not finite".into(),
            ));
        }
        Ok(j)
    }
}

impl std::fmt::Debug for NonsmoothSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonsmoothSystem").field("n", &self.n).finish_non_exhaustive()
    }
}

struct NonsmoothScheme<'a> {
    system: &'a NonsmoothSystem,
}

impl NewtonScheme for NonsmoothScheme<'_> {
    type State = Vec<f64>;

    fn approximate(&mut self, x: &[f64]) -> Result<Probe<Vec<f64>>> {
        let fx = self.system.eval(x)?;
        Ok(Probe {
            residual: densela::norm2(&fx),
            lambda: Vec::new(),
            branch: String::new(),
            state: fx,
        })
    }

    fn step(&mut self, x: &[f64], probe: &Probe<Vec<f64>>) -> Result<Vec<f64>> {
        let a = self.system.jacobian_element(x)?;
        let rhs: Vec<f64> = probe.state.iter().map(|v| -v).collect();
        densela::solve_dense(&a, &rhs).map_err(|e| match e {
            LinalgError::Singular { index, value } => SolverError::SingularSystem(format!(
                "Jacobian element has pivot {index} equal to {value:e}"
            )),
            e => e.into(),
        })
    }
}

/// `x⁺ = x − A⁻¹F(x)` until `‖F(x)‖ ≤ tol`.
pub fn nonsmooth_newton(
    system: &NonsmoothSystem,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    run_scheme(&mut NonsmoothScheme { system }, system.n, x0, tol, max_iter)
}

/// Linearization at `x`: find `x⁺`, `λ⁺` with
/// `0 = q + M(x⁺ − x) + Jgᵀλ⁺` and `λ⁺ ∈ N_D(g0 + Jg(x⁺ − x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AviInstance {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub m: Matrix,
    pub jg: Matrix,
    pub g0: Vec<f64>,
    pub set: BoxSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AviSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub pattern: Vec<Activity>,
}

impl AviInstance {
    fn validate(&self) -> Result<()> {
        let (n, s) = (self.q.len(), self.g0.len());
        let ok = self.x.len() == n
            && self.m.shape() == (n, n)
            && self.jg.shape() == (s, n)
            && self.set.dim() == s;
        if !ok {
            return Err(SolverError::InvalidArgument("inconsistent AVI shapes".into()));
        }
        Ok(())
    }

    /// `‖q + MΔ + Jgᵀλ‖` for `Δ = x⁺ − x`.
    pub fn kkt_residual(&self, x_plus: &[f64], lambda: &[f64]) -> f64 {
        let dx = densela::sub_vec(x_plus, &self.x);
        let mut r = densela::axpy(1.0, &self.m.mul_vec(&dx).expect("validated"), &self.q);
        r = densela::axpy(1.0, &self.jg.tr_mul_vec(lambda).expect("validated"), &r);
        densela::norm2(&r)
    }
}

const AVI_TOL: f64 = 1e-9;

/// Enumerates activity patterns in lexicographic order (coordinate 0 most
/// significant; inactive, then lower, then upper) and returns the first one
/// whose KKT point is feasible with correctly signed multipliers.
pub fn solve_avi_enumerate(inst: &AviInstance) -> Result<Option<AviSolution>> {
    inst.validate()?;
    let (n, s) = (inst.q.len(), inst.g0.len());
    if s > BRUTE_FORCE_MAX_ROWS {
        return Err(SolverError::InvalidArgument(format!(
            "AVI enumeration limited to {BRUTE_FORCE_MAX_ROWS} rows, got {s}"
        )));
    }
    let (lower, upper) = (inst.set.lower(), inst.set.upper());
    let options: Vec<Vec<Activity>> = (0..s)
        .map(|i| {
            if lower[i] == upper[i] {
                return vec![Activity::Fixed];
            }
            let mut o = vec![Activity::Interior];
            if lower[i].is_finite() {
                o.push(Activity::AtLower);
            }
            if upper[i].is_finite() {
                o.push(Activity::AtUpper);
            }
            o
        })
        .collect();
    let mut counters = vec![0usize; s];
    loop {
        let pattern: Vec<Activity> = (0..s).map(|i| options[i][counters[i]]).collect();
        if let Some(sol) = solve_avi_pattern(inst, n, &pattern)? {
            return Ok(Some(sol));
        }
        // Odometer with the last coordinate varying fastest.
        let mut i = s;
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            counters[i] += 1;
            if counters[i] < options[i].len() {
                break;
            }
            counters[i] = 0;
        }
    }
}

fn solve_avi_pattern(inst: &AviInstance, n: usize, pattern: &[Activity]) -> Result<Option<AviSolution>> {
    let active: Vec<usize> = (0..pattern.len()).filter(|&i| pattern[i].is_active()).collect();
    let k = active.len();
    // [M  J_Aᵀ; J_A  0] [Δ; λ_A] = [−q; bound_A − g0_A]
    let mut kkt = Matrix::zeros(n + k, n + k);
    kkt.set_block(0, 0, &inst.m);
    let mut rhs: Vec<f64> = inst.q.iter().map(|v| -v).collect();
    for (r, &i) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = inst.jg[(i, j)];
            kkt[(j, n + r)] = inst.jg[(i, j)];
        }
        let bound = match pattern[i] {
            Activity::AtUpper => inst.set.upper()[i],
            _ => inst.set.lower()[i],
        };
        rhs.push(bound - inst.g0[i]);
    }
    let sol = match densela::solve_dense(&kkt, &rhs) {
        Ok(v) => v,
        Err(LinalgError::Singular { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let dx = &sol[..n];
    let mut lambda = vec![0.0; pattern.len()];
    for (r, &i) in active.iter().enumerate() {
        let l = sol[n + r];
        let ok = match pattern[i] {
            Activity::AtLower => l <= AVI_TOL,
            Activity::AtUpper => l >= -AVI_TOL,
            _ => true,
        };
        if !ok {
            return Ok(None);
        }
        lambda[i] = l;
    }
    let d = densela::axpy(1.0, &inst.jg.mul_vec(dx)?, &inst.g0);
    if !inst.set.contains(&d, AVI_TOL) {
        return Ok(None);
    }
    Ok(Some(AviSolution {
        x: densela::axpy(1.0, dx, &inst.x),
        lambda,
        pattern: pattern.to_vec(),
    }))
}

struct JosephyScheme<'a> {
    problem: &'a GeProblem,
    lambda: Vec<f64>,
}

impl NewtonScheme for JosephyScheme<'_> {
    type State = ();

    fn approximate(&mut self, x: &[f64]) -> Result<Probe<()>> {
        let approx = approximation_step(self.problem, x)?;
        Ok(Probe {
            residual: approx.residual(),
            lambda: self.lambda.clone(),
            branch: approx.active.summary(),
            state: (),
        })
    }

    fn step(&mut self, x: &[f64], _probe: &Probe<()>) -> Result<Vec<f64>> {
        let p = self.problem;
        let inst = AviInstance {
            x: x.to_vec(),
            q: p.eval_f(x)?,
            m: p.eval_jf(x)?.add(&p.eval_hg(x, &self.lambda)?)?,
            jg: p.eval_jg(x)?,
            g0: p.eval_g(x)?,
            set: p.set().clone(),
        };
        let sol = solve_avi_enumerate(&inst)?.ok_or(SolverError::Unsolvable)?;
        self.lambda = sol.lambda;
        Ok(densela::sub_vec(&sol.x, x))
    }

    fn converged(&self, probe: &Probe<()>, last_step: Option<f64>, tol: f64) -> bool {
        probe.residual <= tol && last_step.is_none_or(|s| s <= tol)
    }
}

/// Josephy-Newton iteration on `(x, λ)`. `λ0` defaults to the multiplier of
/// the approximation step at `x0`.
pub fn josephy_newton(
    problem: &GeProblem,
    x0: &[f64],
    lambda0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let lambda = match lambda0 {
        Some(l) if l.len() != problem.s() => {
            return Err(SolverError::InvalidArgument(format!(
                "lambda0 has length {}, expected {}",
                l.len(),
                problem.s()
            )))
        }
        Some(l) => l.to_vec(),
        None => approximation_step(problem, x0)
            .map(|a| a.lambda)
            .unwrap_or_else(|_| vec![0.0; problem.s()]),
    };
    run_scheme(&mut JosephyScheme { problem, lambda }, problem.n(), x0, tol, max_iter)
}
