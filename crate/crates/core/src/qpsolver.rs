//! Strictly convex QP with identity Hessian and box-mapped linear constraints:
//!
//! ```text
//!     minimize    ½‖u‖² + cᵀu
//!     subject to  lower ≤ b + C·u ≤ upper
//! ```
//!
//! [`solve_qp`] is a dual active-set method in the style of Goldfarb and
//! Idnani. It starts at the unconstrained minimizer `u = −c`, so no feasible
//! starting point is needed, and an unbounded dual step certifies
//! infeasibility. [`brute_force_qp`] enumerates activity patterns and serves as
//! an independent oracle for small instances.

use thiserror::Error;

use crate::boxcones::{Activity, ActivityPattern, BoxSet, ConeError, DEFAULT_ACTIVITY_TOL};
use crate::densela::{self, LinalgError, Matrix};

/// Largest `s` accepted by [`brute_force_qp`].
pub const BRUTE_FORCE_MAX_ROWS: usize = 6;
const FEASIBILITY_TOL: f64 = 1e-9;
const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("invalid QP instance: {0}")]
    InvalidInstance(String),
    #[error("QP is infeasible (certificate at constraint row {row})")]
    Infeasible { row: usize },
    #[error("QP solver did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("brute-force enumeration limited to {limit} rows, got {rows}")]
    GuardExceeded { rows: usize, limit: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

pub type Result<T> = std::result::Result<T, QpError>;

#[derive(Debug, Clone, PartialEq)]
pub struct QpInstance {
    /// Linear term, `n` entries.
    pub c: Vec<f64>,
    /// Constraint offset, `s` entries.
    pub b: Vec<f64>,
    /// Constraint matrix, `s×n`.
    pub cmat: Matrix,
    pub set: BoxSet,
}

impl QpInstance {
    pub fn new(c: Vec<f64>, b: Vec<f64>, cmat: Matrix, set: BoxSet) -> Result<Self> {
        let inst = QpInstance { c, b, cmat, set };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn s(&self) -> usize {
        self.b.len()
    }

    fn validate(&self) -> Result<()> {
        let (n, s) = (self.n(), self.s());
        if self.cmat.shape() != (s, n) || self.set.dim() != s {
            return Err(QpError::InvalidInstance(format!(
                "expected C {s}x{n} and a box of dimension {s}, got C {:?} and box {}",
                self.cmat.shape(),
                self.set.dim()
            )));
        }
        if !self.cmat.is_finite() || self.c.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(QpError::InvalidInstance("non-finite data".into()));
        }
        Ok(())
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        0.5 * densela::dot(u, u) + densela::dot(&self.c, u)
    }

    /// `b + C·u`
    pub fn constraint_value(&self, u: &[f64]) -> Vec<f64> {
        densela::axpy(1.0, &self.cmat.mul_vec(u).expect("validated shape"), &self.b)
    }

    /// `‖u + c + Cᵀλ‖`
    pub fn kkt_residual(&self, u: &[f64], lambda: &[f64]) -> f64 {
        let ct = self.cmat.tr_mul_vec(lambda).expect("validated shape");
        u.iter()
            .zip(&self.c)
            .zip(&ct)
            .map(|((a, b), c)| (a + b + c).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    /// Multiplier in `N_D(b + C·u)` with `u + c + Cᵀλ = 0`.
    pub lambda: Vec<f64>,
    pub active: ActivityPattern,
    pub iterations: usize,
    /// Active rows were linearly dependent; `lambda` is then the least-norm
    /// multiplier when that one is sign-feasible.
    pub degenerate_multiplier: bool,
}

/// One-sided inequality `sign·C_row·u ≥ rhs`.
#[derive(Debug, Clone)]
struct Inequality {
    row: usize,
    sign: f64,
    rhs: f64,
    equality: bool,
}

impl Inequality {
    fn normal(&self, cmat: &Matrix) -> Vec<f64> {
        cmat.row(self.row).iter().map(|v| self.sign * v).collect()
    }

    fn slack(&self, cmat: &Matrix, u: &[f64]) -> f64 {
        self.sign * densela::dot(cmat.row(self.row), u) - self.rhs
    }

    fn tolerance(&self, cmat: &Matrix, u: &[f64]) -> f64 {
        1e-12 * (1.0 + self.rhs.abs() + densela::norm2(cmat.row(self.row)) * densela::norm2(u))
    }
}

#[derive(Debug, Clone)]
struct Working {
    constraint: Inequality,
    normal: Vec<f64>,
    mult: f64,
}

/// Projection data for the working set: `z = (I − N N⁺) a` and `r = N⁺ a`.
fn directions(working: &[Working], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.len();
    let q = working.len();
    if q == 0 {
        return Ok((a.to_vec(), Vec::new()));
    }
    let nt = Matrix::from_fn(q, n, |i, j| working[i].normal[j]);
    let f = densela::lq_householder(&nt)?;
    // N = Q₁·Lᵀ, so N⁺a = L⁻ᵀ·Q₁ᵀa and (I − NN⁺)a = Q₂Q₂ᵀa.
    let qta = f.q.tr_mul_vec(a)?;
    let mut r = vec![0.0; q];
    for i in (0..q).rev() {
        let mut acc = qta[i];
        for k in i + 1..q {
            acc -= f.l[(k, i)] * r[k];
        }
        r[i] = acc / f.l[(i, i)];
    }
    let mut z = vec![0.0; n];
    for k in q..n {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi += f.q[(i, k)] * qta[k];
        }
    }
    Ok((z, r))
}

fn build_constraints(inst: &QpInstance) -> (Vec<Inequality>, Vec<Inequality>) {
    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();
    for i in 0..inst.s() {
        let (l, u) = (inst.set.lower()[i], inst.set.upper()[i]);
        if l == u {
            equalities.push(Inequality {
                row: i,
                sign: 1.0,
                rhs: l - inst.b[i],
                equality: true,
            });
            continue;
        }
        if l.is_finite() {
            inequalities.push(Inequality {
                row: i,
                sign: 1.0,
                rhs: l - inst.b[i],
                equality: false,
            });
        }
        if u.is_finite() {
            inequalities.push(Inequality {
                row: i,
                sign: -1.0,
                rhs: inst.b[i] - u,
                equality: false,
            });
        }
    }
    (equalities, inequalities)
}

struct DualActiveSet<'a> {
    inst: &'a QpInstance,
    u: Vec<f64>,
    working: Vec<Working>,
    iterations: usize,
    cap: usize,
}

impl DualActiveSet<'_> {
    fn tick(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.cap {
            return Err(QpError::NonConvergence {
                iterations: self.cap,
            });
        }
        Ok(())
    }

    /// Adds constraint `p` (currently violated, or an equality) to the working
    /// set, dropping blocking inequalities as needed.
    fn add(&mut self, p: Inequality) -> Result<()> {
        let cmat = &self.inst.cmat;
        let a = p.normal(cmat);
        let a_norm2 = densela::dot(&a, &a);
        let mut mult_p = 0.0;
        loop {
            self.tick()?;
            let (z, r) = directions(&self.working, &a)?;
            let slack = p.slack(cmat, &self.u);
            let za = densela::dot(&z, &a);
            let dependent = za <= DEPENDENCE_TOL * DEPENDENCE_TOL * a_norm2;
            let full_step = if dependent { f64::INFINITY } else { -slack / za };
            let r_scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut partial_step = f64::INFINITY;
            let mut blocking = None;
            for (j, w) in self.working.iter().enumerate() {
                if w.constraint.equality || r[j] <= 1e-12 * r_scale {
                    continue;
                }
                let t = w.mult / r[j];
                if t < partial_step {
                    partial_step = t;
                    blocking = Some(j);
                }
            }
            let t = full_step.min(partial_step);
            if !t.is_finite() {
                if p.equality && dependent && slack.abs() <= p.tolerance(cmat, &self.u) {
                    // Redundant with the equalities already held.
                    return Ok(());
                }
                return Err(QpError::Infeasible { row: p.row });
            }
            for (w, rj) in self.working.iter_mut().zip(&r) {
                w.mult -= t * rj;
                if !w.constraint.equality {
                    w.mult = w.mult.max(0.0);
                }
            }
            mult_p += t;
            if !dependent {
                for (ui, zi) in self.u.iter_mut().zip(&z) {
                    *ui += t * zi;
                }
            }
            if full_step <= partial_step {
                self.working.push(Working {
                    constraint: p,
                    normal: a,
                    mult: mult_p,
                });
                return Ok(());
            }
            let k = blocking.expect("finite partial step has a blocking constraint");
            self.working.remove(k);
        }
    }

    fn multipliers(&self) -> Vec<f64> {
        let mut lambda = vec![0.0; self.inst.s()];
        for w in &self.working {
            // sign·C_i·u ≥ rhs with multiplier μ contributes −sign·μ·C_iᵀ to
            // the gradient of the Lagrangian.
            lambda[w.constraint.row] -= w.constraint.sign * w.mult;
        }
        lambda
    }
}

/// Solves the QP by the dual active-set method.
pub fn solve_qp(inst: &QpInstance) -> Result<QpSolution> {
    inst.validate()?;
    let (equalities, inequalities) = build_constraints(inst);
    let mut solver = DualActiveSet {
        inst,
        u: inst.c.iter().map(|v| -v).collect(),
        working: Vec::new(),
        iterations: 0,
        cap: 100 * (inst.n() + inst.s()).max(1),
    };
    for mut eq in equalities {
        if eq.slack(&inst.cmat, &solver.u) > 0.0 {
            eq.sign = -1.0;
            eq.rhs = -eq.rhs;
        }
        solver.add(eq)?;
    }
    loop {
        let mut worst: Option<(f64, usize)> = None;
        for (idx, ineq) in inequalities.iter().enumerate() {
            if solver
                .working
                .iter()
                .any(|w| w.constraint.row == ineq.row && w.constraint.sign == ineq.sign)
            {
                continue;
            }
            let slack = ineq.slack(&inst.cmat, &solver.u);
            if slack < -ineq.tolerance(&inst.cmat, &solver.u)
                && worst.is_none_or(|(s, _)| slack < s)
            {
                worst = Some((slack, idx));
            }
        }
        match worst {
            None => break,
            Some((_, idx)) => solver.add(inequalities[idx].clone())?,
        }
    }
    let u = solver.u.clone();
    let mut lambda = solver.multipliers();
    let d = inst.constraint_value(&u);
    let active = inst.set.activity(&d, DEFAULT_ACTIVITY_TOL)?;
    let degenerate_multiplier = active_rows_dependent(inst, &active)?;
    if degenerate_multiplier {
        if let Some(least_norm) = least_norm_multiplier(inst, &u, &active)? {
            lambda = least_norm;
        }
    }
    Ok(QpSolution {
        u,
        lambda,
        active,
        iterations: solver.iterations,
        degenerate_multiplier,
    })
}

fn active_rows(inst: &QpInstance, active: &ActivityPattern) -> (Vec<usize>, Matrix) {
    let rows = active.active_indices();
    let n = inst.n();
    let m = Matrix::from_fn(rows.len(), n, |i, j| inst.cmat[(rows[i], j)]);
    (rows, m)
}

fn active_rows_dependent(inst: &QpInstance, active: &ActivityPattern) -> Result<bool> {
    let (rows, ca) = active_rows(inst, active);
    if rows.is_empty() {
        return Ok(false);
    }
    if rows.len() > inst.n() {
        return Ok(true);
    }
    Ok(!densela::lq_householder(&ca)?.rank_ok)
}

/// `argmin ‖λ‖` subject to `C_Aᵀλ_A = −(u + c)`, returned only if it lies in
/// the normal cone and satisfies the stationarity condition.
fn least_norm_multiplier(
    inst: &QpInstance,
    u: &[f64],
    active: &ActivityPattern,
) -> Result<Option<Vec<f64>>> {
    let (rows, ca) = active_rows(inst, active);
    let target: Vec<f64> = u.iter().zip(&inst.c).map(|(a, b)| -(a + b)).collect();
    let pinv = densela::pseudo_inverse(&ca.transpose(), 1e-12)?;
    let lam_a = pinv.mul_vec(&target)?;
    let mut lambda = vec![0.0; inst.s()];
    for (&i, &v) in rows.iter().zip(&lam_a) {
        lambda[i] = v;
    }
    let d = inst.constraint_value(u);
    let in_cone = inst
        .set
        .normal_cone_membership(&d, &lambda, DEFAULT_ACTIVITY_TOL)?;
    let stationary = inst.kkt_residual(u, &lambda) <= 1e-9 * (1.0 + densela::norm2(&inst.c));
    Ok((in_cone && stationary).then_some(lambda))
}

/// Exhaustive enumeration of activity patterns; returns the feasible KKT point
/// with smallest objective.
pub fn brute_force_qp(inst: &QpInstance) -> Result<QpSolution> {
    inst.validate()?;
    let s = inst.s();
    if s > BRUTE_FORCE_MAX_ROWS {
        return Err(QpError::GuardExceeded {
            rows: s,
            limit: BRUTE_FORCE_MAX_ROWS,
        });
    }
    let options: Vec<Vec<Activity>> = (0..s)
        .map(|i| {
            let (l, u) = (inst.set.lower()[i], inst.set.upper()[i]);
            if l == u {
                return vec![Activity::Fixed];
            }
            let mut o = vec![Activity::Interior];
            if l.is_finite() {
                o.push(Activity::AtLower);
            }
            if u.is_finite() {
                o.push(Activity::AtUpper);
            }
            o
        })
        .collect();
    let mut best: Option<(f64, QpSolution)> = None;
    let mut counters = vec![0usize; s];
    let mut evaluated = 0;
    loop {
        evaluated += 1;
        let pattern: Vec<Activity> = (0..s).map(|i| options[i][counters[i]]).collect();
        if let Some((u, lambda)) = solve_pattern(inst, &pattern)? {
            let obj = inst.objective(&u);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                let d = inst.constraint_value(&u);
                let active = inst.set.activity(&d, FEASIBILITY_TOL)?;
                best = Some((
                    obj,
                    QpSolution {
                        u,
                        lambda,
                        active,
                        iterations: evaluated,
                        degenerate_multiplier: false,
                    },
                ));
            }
        }
        // Odometer increment over the per-row options.
        let mut i = 0;
        while i < s {
            counters[i] += 1;
            if counters[i] < options[i].len() {
                break;
            }
            counters[i] = 0;
            i += 1;
        }
        if i == s {
            break;
        }
    }
    best.map(|(_, sol)| sol).ok_or(QpError::Infeasible { row: 0 })
}

/// Solves the equality-constrained KKT system for one pattern and checks
/// primal feasibility and multiplier signs. Singular patterns yield `None`.
fn solve_pattern(inst: &QpInstance, pattern: &[Activity]) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let active: Vec<usize> = (0..pattern.len()).filter(|&i| pattern[i].is_active()).collect();
    let n = inst.n();
    let ca = Matrix::from_fn(active.len(), n, |i, j| inst.cmat[(active[i], j)]);
    let target: Vec<f64> = active
        .iter()
        .map(|&i| match pattern[i] {
            Activity::AtLower | Activity::Fixed => inst.set.lower()[i] - inst.b[i],
            _ => inst.set.upper()[i] - inst.b[i],
        })
        .collect();
    // u = −c − C_Aᵀλ_A and C_A·u = target give (C_A C_Aᵀ)λ_A = −(target + C_A c).
    let lam_a = if active.is_empty() {
        Vec::new()
    } else {
        let gram = ca.matmul(&ca.transpose())?;
        let cc = ca.mul_vec(&inst.c)?;
        let rhs: Vec<f64> = target.iter().zip(&cc).map(|(t, v)| -(t + v)).collect();
        match densela::solve_dense(&gram, &rhs) {
            Ok(l) => l,
            Err(LinalgError::Singular { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
    };
    let ct_lam = ca.tr_mul_vec(&lam_a)?;
    let u: Vec<f64> = inst.c.iter().zip(&ct_lam).map(|(c, v)| -c - v).collect();
    let mut lambda = vec![0.0; inst.s()];
    for (&i, &v) in active.iter().zip(&lam_a) {
        lambda[i] = v;
        let ok = match pattern[i] {
            Activity::AtLower => v <= FEASIBILITY_TOL,
            Activity::AtUpper => v >= -FEASIBILITY_TOL,
            _ => true,
        };
        if !ok {
            return Ok(None);
        }
    }
    let d = inst.constraint_value(&u);
    if !inst.set.contains(&d, FEASIBILITY_TOL) {
        return Ok(None);
    }
    Ok(Some((u, lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ncp_instance(x: f64) -> QpInstance {
        QpInstance::new(
            vec![-x - x * x],
            vec![x],
            Matrix::identity(1),
            BoxSet::nonpositive_orthant(1),
        )
        .unwrap()
    }

    #[test]
    fn ncp_negative_branch() {
        let sol = solve_qp(&ncp_instance(-0.1)).unwrap();
        assert!((sol.u[0] + 0.09).abs() < 1e-15);
        assert_eq!(sol.lambda, vec![0.0]);
        assert_eq!(sol.active.0, vec![Activity::Interior]);
    }

    #[test]
    fn ncp_positive_branch() {
        let x: f64 = 0.0125;
        let sol = solve_qp(&ncp_instance(x)).unwrap();
        assert!((sol.u[0] + x).abs() < 1e-15);
        assert!((sol.lambda[0] - 0.02515625).abs() < 1e-15);
        assert_eq!(sol.active.0, vec![Activity::AtUpper]);
    }

    #[test]
    fn already_optimal() {
        let inst = QpInstance::new(
            vec![0.0, 0.0],
            vec![-1.0, 0.5],
            Matrix::identity(2),
            BoxSet::new(vec![-2.0, -1.0], vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let sol = solve_qp(&inst).unwrap();
        assert_eq!(sol.u, vec![0.0, 0.0]);
        assert_eq!(sol.lambda, vec![0.0, 0.0]);
    }

    #[test]
    fn brute_force_matches_ncp_branches() {
        for x in [-0.1, 0.0125] {
            let a = solve_qp(&ncp_instance(x)).unwrap();
            let b = brute_force_qp(&ncp_instance(x)).unwrap();
            assert!((a.u[0] - b.u[0]).abs() <= 1e-10);
            assert!((a.lambda[0] - b.lambda[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn fixed_row_is_one_linear_solve() {
        // min ½‖u‖² + cᵀu s.t. u₁ + u₂ = 1
        let inst = QpInstance::new(
            vec![0.0, 0.0],
            vec![0.0],
            Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            BoxSet::new(vec![1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let b = brute_force_qp(&inst).unwrap();
        assert_eq!(b.iterations, 1);
        let a = solve_qp(&inst).unwrap();
        for sol in [a, b] {
            assert!((sol.u[0] - 0.5).abs() < 1e-14 && (sol.u[1] - 0.5).abs() < 1e-14);
            assert!((sol.lambda[0] + 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let inst = QpInstance::new(
            vec![0.0, 0.0],
            vec![0.0, -1.0],
            Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            BoxSet::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert!(matches!(solve_qp(&inst), Err(QpError::Infeasible { .. })));
        assert!(matches!(brute_force_qp(&inst), Err(QpError::Infeasible { .. })));
    }

    #[test]
    fn inconsistent_inequalities_are_infeasible() {
        // u ≥ 1 and u ≤ 0.
        let inst = QpInstance::new(
            vec![0.0],
            vec![0.0, 0.0],
            Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            BoxSet::new(vec![1.0, f64::NEG_INFINITY], vec![f64::INFINITY, 0.0]).unwrap(),
        )
        .unwrap();
        assert!(matches!(solve_qp(&inst), Err(QpError::Infeasible { .. })));
        assert!(matches!(brute_force_qp(&inst), Err(QpError::Infeasible { .. })));
    }

    #[test]
    fn degenerate_active_rows_get_least_norm_multiplier() {
        // Two copies of u ≤ 0 with c pulling u positive.
        let inst = QpInstance::new(
            vec![-1.0],
            vec![0.0, 0.0],
            Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            BoxSet::nonpositive_orthant(2),
        )
        .unwrap();
        let sol = solve_qp(&inst).unwrap();
        assert!(sol.degenerate_multiplier);
        assert!(sol.u[0].abs() < 1e-15);
        assert!((sol.lambda[0] - 0.5).abs() < 1e-14 && (sol.lambda[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn brute_force_guard() {
        let inst = QpInstance::new(
            vec![0.0],
            vec![0.0; 7],
            Matrix::zeros(7, 1),
            BoxSet::nonpositive_orthant(7),
        )
        .unwrap();
        assert!(matches!(brute_force_qp(&inst), Err(QpError::GuardExceeded { rows: 7, .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(QpInstance::new(vec![0.0], vec![0.0], Matrix::zeros(2, 1), BoxSet::nonpositive_orthant(1)).is_err());
        assert!(QpInstance::new(vec![f64::NAN], vec![0.0], Matrix::zeros(1, 1), BoxSet::nonpositive_orthant(1)).is_err());
    }

    fn random_bound(rng: &mut ChaCha8Rng) -> (f64, f64) {
        let lows = [f64::NEG_INFINITY, -1.0, 0.0, 1.0];
        let highs = [-1.0, 0.0, 1.0, f64::INFINITY];
        loop {
            let l = lows[rng.gen_range(0..4)];
            let u = highs[rng.gen_range(0..4)];
            if l <= u {
                return (l, u);
            }
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> QpInstance {
        let n = rng.gen_range(1..=5);
        let s = rng.gen_range(1..=4);
        let (lower, upper): (Vec<f64>, Vec<f64>) = (0..s).map(|_| random_bound(rng)).unzip();
        QpInstance::new(
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..s).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            Matrix::from_fn(s, n, |_, _| rng.gen_range(-2.0..2.0)),
            BoxSet::new(lower, upper).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn invariants_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut solved = 0;
        for _ in 0..600 {
            let inst = random_instance(&mut rng);
            let Ok(sol) = solve_qp(&inst) else { continue };
            solved += 1;
            let scale = 1.0 + densela::norm2(&inst.c);
            assert!(inst.kkt_residual(&sol.u, &sol.lambda) <= 1e-9 * scale);
            let d = inst.constraint_value(&sol.u);
            assert!(inst.set.contains(&d, 1e-9));
            assert!(inst.set.normal_cone_membership(&d, &sol.lambda, 1e-9).unwrap());
            // Feasible coordinate perturbations never improve the objective.
            let base = inst.objective(&sol.u);
            for j in 0..inst.n() {
                for step in [1e-4, -1e-4] {
                    let mut u = sol.u.clone();
                    u[j] += step;
                    if inst.set.contains(&inst.constraint_value(&u), 0.0) {
                        assert!(inst.objective(&u) >= base - 1e-9);
                    }
                }
            }
        }
        assert!(solved > 200);
    }
}
