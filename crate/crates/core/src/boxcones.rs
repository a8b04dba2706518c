//! Box-shaped polyhedral sets and the cone objects attached to them.
//!
//! For a box `D = [l₁,u₁] × … × [lₛ,uₛ]` every tangent, normal and critical
//! cone is a product of one-dimensional cones, so all membership tests and
//! polars reduce to per-coordinate sign checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densela::Matrix;

/// Default activity tolerance for user-supplied points.
pub const DEFAULT_ACTIVITY_TOL: f64 = 1e-9;
/// Largest number of free active coordinates for which faces are enumerated.
pub const MAX_FREE_FACE_INDICES: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is outside the box at coordinate {index} (value {value})")]
    InfeasiblePoint { index: usize, value: f64 },
    #[error("multiplier is not in the normal cone at coordinate {index} (value {value})")]
    InvalidMultiplier { index: usize, value: f64 },
    #[error("{free} free active coordinates exceed the face enumeration limit of {limit}")]
    CombinatorialBlowup { free: usize, limit: usize },
    #[error("element is not in the coderivative graph at coordinate {index}")]
    InvalidElement { index: usize },
}

pub type Result<T> = std::result::Result<T, ConeError>;

/// The set `D` as per-coordinate intervals, bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(ConeError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(ConeError::InvalidBox(format!("NaN bound at coordinate {i}")));
            }
            if l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(ConeError::InvalidBox(format!(
                    "empty interval [{l}, {u}] at coordinate {i}"
                )));
            }
            if l > u {
                return Err(ConeError::InvalidBox(format!(
                    "lower bound {l} exceeds upper bound {u} at coordinate {i}"
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    /// The nonpositive orthant `ℝˢ₋`.
    pub fn nonpositive_orthant(s: usize) -> Self {
        BoxSet {
            lower: vec![f64::NEG_INFINITY; s],
            upper: vec![0.0; s],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(ConeError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, d: &[f64], tol: f64) -> bool {
        d.len() == self.dim()
            && d.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&l, &u))| x >= l - tol && x <= u + tol)
    }

    /// Classifies each coordinate of `d` as interior, at a bound, or fixed.
    pub fn activity(&self, d: &[f64], tol: f64) -> Result<ActivityPattern> {
        self.check_len(d)?;
        let mut out = Vec::with_capacity(d.len());
        for (i, (&x, (&l, &u))) in d.iter().zip(self.lower.iter().zip(&self.upper)).enumerate() {
            if !x.is_finite() || x < l - tol || x > u + tol {
                return Err(ConeError::InfeasiblePoint { index: i, value: x });
            }
            let status = if l == u {
                Activity::Fixed
            } else {
                let dl = (x - l).abs();
                let du = (u - x).abs();
                match (dl <= tol, du <= tol) {
                    (true, true) if du < dl => Activity::AtUpper,
                    (true, _) => Activity::AtLower,
                    (false, true) => Activity::AtUpper,
                    (false, false) => Activity::Interior,
                }
            };
            out.push(status);
        }
        Ok(ActivityPattern(out))
    }

    /// Checks `λ ∈ N_D(d)`; interior coordinates require `λᵢ = 0` within `tol`.
    pub fn normal_cone_membership(&self, d: &[f64], lambda: &[f64], tol: f64) -> Result<bool> {
        self.check_len(lambda)?;
        let pattern = self.activity(d, tol)?;
        Ok(pattern.first_normal_violation(lambda, tol).is_none())
    }

    /// The matrix `Ŵ` whose columns are signed unit vectors spanning `Span N_D(d)`.
    pub fn span_normal_basis(&self, d: &[f64], tol: f64) -> Result<Matrix> {
        Ok(self.activity(d, tol)?.span_normal_basis())
    }

    /// Per-coordinate description of `K_D(d, λ) = T_D(d) ∩ [λ]^⊥`.
    pub fn critical_cone(&self, d: &[f64], lambda: &[f64], tol: f64) -> Result<CriticalCone> {
        self.check_len(lambda)?;
        let pattern = self.activity(d, tol)?;
        if let Some(index) = pattern.first_normal_violation(lambda, tol) {
            return Err(ConeError::InvalidMultiplier {
                index,
                value: lambda[index],
            });
        }
        let cones = pattern
            .0
            .iter()
            .zip(lambda)
            .map(|(a, &lam)| match a {
                Activity::Interior => CoordinateCone::Line,
                Activity::Fixed => CoordinateCone::Origin,
                Activity::AtUpper if lam > tol => CoordinateCone::Origin,
                Activity::AtUpper => CoordinateCone::NonPositive,
                Activity::AtLower if lam < -tol => CoordinateCone::Origin,
                Activity::AtLower => CoordinateCone::NonNegative,
            })
            .collect();
        Ok(CriticalCone(cones))
    }

    pub fn critical_cone_membership(
        &self,
        v: &[f64],
        d: &[f64],
        lambda: &[f64],
        tol: f64,
    ) -> Result<bool> {
        self.check_len(v)?;
        Ok(self.critical_cone(d, lambda, tol)?.contains(v, tol))
    }

    /// All index sets `J` with `Ī⁺ ⊆ J ⊆ Ī`, in lexicographic order.
    ///
    /// `Ī` collects the active coordinates of `d̄` and `Ī⁺` those with a
    /// nonzero multiplier; fixed coordinates always belong to `J`.
    pub fn enumerate_face_index_sets(
        &self,
        d_bar: &[f64],
        lambda_bar: &[f64],
        tol: f64,
    ) -> Result<Vec<Vec<usize>>> {
        let cone = self.critical_cone(d_bar, lambda_bar, tol)?;
        let pattern = self.activity(d_bar, tol)?;
        let mut forced = Vec::new();
        let mut free = Vec::new();
        for (i, a) in pattern.0.iter().enumerate() {
            match (a, cone.0[i]) {
                (Activity::Interior, _) => {}
                (_, CoordinateCone::Origin) => forced.push(i),
                _ => free.push(i),
            }
        }
        if free.len() > MAX_FREE_FACE_INDICES {
            return Err(ConeError::CombinatorialBlowup {
                free: free.len(),
                limit: MAX_FREE_FACE_INDICES,
            });
        }
        let mut sets: Vec<Vec<usize>> = (0u64..1 << free.len())
            .map(|mask| {
                let mut j: Vec<usize> = forced.clone();
                j.extend(
                    free.iter()
                        .enumerate()
                        .filter(|(b, _)| mask >> b & 1 == 1)
                        .map(|(_, &i)| i),
                );
                j.sort_unstable();
                j
            })
            .collect();
        sets.sort();
        Ok(sets)
    }

    /// Tests `candidate ∈ D̂*N_D(d, λ)(p_dir)`, i.e. `−p_dir ∈ K` and `candidate ∈ K°`.
    pub fn regular_coderivative_nd(
        &self,
        d: &[f64],
        lambda: &[f64],
        p_dir: &[f64],
        candidate: &[f64],
        tol: f64,
    ) -> Result<bool> {
        self.check_len(p_dir)?;
        self.check_len(candidate)?;
        let cone = self.critical_cone(d, lambda, tol)?;
        let neg: Vec<f64> = p_dir.iter().map(|x| -x).collect();
        Ok(cone.contains(&neg, tol) && cone.polar_contains(candidate, tol))
    }

    /// `|⟨u*, d − d̄⟩ − ⟨v*, λ − λ̄⟩|` for a regular coderivative element
    /// `u* ∈ D̂*N_D(d, λ)(v*)` at a probe point of `gph N_D`.
    pub fn semismooth_star_defect(
        &self,
        reference: (&[f64], &[f64]),
        probe: (&[f64], &[f64]),
        element: (&[f64], &[f64]),
        tol: f64,
    ) -> Result<f64> {
        let (d_bar, lambda_bar) = reference;
        let (d, lambda) = probe;
        let (v_star, u_star) = element;
        for v in [d_bar, lambda_bar, d, lambda, v_star, u_star] {
            self.check_len(v)?;
        }
        if let Some(index) = self.activity(d_bar, tol)?.first_normal_violation(lambda_bar, tol) {
            return Err(ConeError::InvalidMultiplier {
                index,
                value: lambda_bar[index],
            });
        }
        let cone = self.critical_cone(d, lambda, tol)?;
        for i in 0..self.dim() {
            if !cone.0[i].contains(-v_star[i], tol) || !cone.0[i].polar_contains(u_star[i], tol) {
                return Err(ConeError::InvalidElement { index: i });
            }
        }
        let mut acc = 0.0;
        for i in 0..self.dim() {
            acc += u_star[i] * (d[i] - d_bar[i]) - v_star[i] * (lambda[i] - lambda_bar[i]);
        }
        Ok(acc.abs())
    }

    /// Radius around `(d̄, λ̄)` within which the defect vanishes exactly: the
    /// smallest nonzero distance of `d̄ᵢ` to a finite bound or of `λ̄ᵢ` to zero.
    pub fn exactness_radius(&self, d_bar: &[f64], lambda_bar: &[f64]) -> Result<f64> {
        self.check_len(d_bar)?;
        self.check_len(lambda_bar)?;
        let mut delta = f64::INFINITY;
        for i in 0..self.dim() {
            for gap in [d_bar[i] - self.lower[i], self.upper[i] - d_bar[i], lambda_bar[i].abs()] {
                if gap.is_finite() && gap > 0.0 {
                    delta = delta.min(gap);
                }
            }
        }
        Ok(delta)
    }

    /// Samples graph points of `N_D` within half the exactness radius of the
    /// reference and coderivative elements there, returning the largest defect.
    pub fn max_sampled_defect(
        &self,
        d_bar: &[f64],
        lambda_bar: &[f64],
        samples: usize,
        seed: u64,
        tol: f64,
    ) -> Result<f64> {
        let (d_bar, lambda_bar) = self.snap_to_graph(d_bar, lambda_bar, tol)?;
        let pattern = self.activity(&d_bar, 0.0)?;
        let radius = 0.5 * self.exactness_radius(&d_bar, &lambda_bar)?.min(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let (d, lambda) =
                self.sample_nearby_graph_point(&d_bar, &lambda_bar, &pattern, radius, &mut rng);
            let cone = self.critical_cone(&d, &lambda, 0.0)?;
            let (v_star, u_star) = cone.sample_element(&mut rng);
            let defect = self.semismooth_star_defect(
                (&d_bar, &lambda_bar),
                (&d, &lambda),
                (&v_star, &u_star),
                0.0,
            )?;
            worst = worst.max(defect);
        }
        Ok(worst)
    }

    /// Moves `(d, λ)` exactly onto `gph N_D`: active coordinates are set to
    /// their bound and multipliers of interior coordinates to zero.
    pub fn snap_to_graph(&self, d: &[f64], lambda: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(lambda)?;
        let pattern = self.activity(d, tol)?;
        if let Some(index) = pattern.first_normal_violation(lambda, tol) {
            return Err(ConeError::InvalidMultiplier {
                index,
                value: lambda[index],
            });
        }
        let mut d = d.to_vec();
        let mut lambda = lambda.to_vec();
        for (i, a) in pattern.0.iter().enumerate() {
            match a {
                Activity::Interior => lambda[i] = 0.0,
                Activity::AtLower => {
                    d[i] = self.lower[i];
                    lambda[i] = lambda[i].min(0.0);
                }
                Activity::AtUpper => {
                    d[i] = self.upper[i];
                    lambda[i] = lambda[i].max(0.0);
                }
                Activity::Fixed => d[i] = self.lower[i],
            }
        }
        Ok((d, lambda))
    }

    /// A random point of `gph N_D` whose coordinates stay within `radius` of
    /// `(d̄, λ̄)`, exploring every activity branch compatible with the reference.
    pub fn sample_nearby_graph_point(
        &self,
        d_bar: &[f64],
        lambda_bar: &[f64],
        pattern: &ActivityPattern,
        radius: f64,
        rng: &mut impl Rng,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut d = d_bar.to_vec();
        let mut lambda = lambda_bar.to_vec();
        for i in 0..self.dim() {
            let (l, u) = (self.lower[i], self.upper[i]);
            match pattern.0[i] {
                Activity::Interior => {
                    d[i] = d_bar[i] + (2.0 * radius * rng.gen::<f64>() - radius);
                    lambda[i] = 0.0;
                }
                Activity::Fixed => {
                    d[i] = l;
                    lambda[i] = lambda_bar[i] + (2.0 * radius * rng.gen::<f64>() - radius);
                }
                Activity::AtUpper => {
                    if lambda_bar[i] > 0.0 {
                        d[i] = u;
                        lambda[i] = lambda_bar[i] + (2.0 * radius * rng.gen::<f64>() - radius);
                    } else {
                        match rng.gen_range(0..3) {
                            0 => {
                                d[i] = u - radius * rng.gen::<f64>();
                                lambda[i] = 0.0;
                            }
                            1 => {
                                d[i] = u;
                                lambda[i] = radius * rng.gen::<f64>();
                            }
                            _ => {
                                d[i] = u;
                                lambda[i] = 0.0;
                            }
                        }
                    }
                }
                Activity::AtLower => {
                    if lambda_bar[i] < 0.0 {
                        d[i] = l;
                        lambda[i] = lambda_bar[i] + (2.0 * radius * rng.gen::<f64>() - radius);
                    } else {
                        match rng.gen_range(0..3) {
                            0 => {
                                d[i] = l + radius * rng.gen::<f64>();
                                lambda[i] = 0.0;
                            }
                            1 => {
                                d[i] = l;
                                lambda[i] = -radius * rng.gen::<f64>();
                            }
                            _ => {
                                d[i] = l;
                                lambda[i] = 0.0;
                            }
                        }
                    }
                }
            }
        }
        (d, lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Activity {
    Interior,
    AtLower,
    AtUpper,
    /// `lower = upper`.
    Fixed,
}

impl Activity {
    pub fn is_active(self) -> bool {
        self != Activity::Interior
    }

    /// Sign of the unit column this coordinate contributes to `Ŵ`.
    pub fn normal_sign(self) -> f64 {
        match self {
            Activity::AtLower => -1.0,
            _ => 1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Activity::Interior => 'I',
            Activity::AtLower => 'L',
            Activity::AtUpper => 'U',
            Activity::Fixed => 'F',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityPattern(pub Vec<Activity>);

impl ActivityPattern {
    pub fn active_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_active())
            .map(|(i, _)| i)
            .collect()
    }

    /// One letter per coordinate, e.g. `"UI"`.
    pub fn summary(&self) -> String {
        self.0.iter().map(|a| a.symbol()).collect()
    }

    fn first_normal_violation(&self, lambda: &[f64], tol: f64) -> Option<usize> {
        self.0.iter().zip(lambda).position(|(a, &lam)| match a {
            Activity::Interior => lam.abs() > tol || lam.is_nan(),
            Activity::AtLower => lam > tol || lam.is_nan(),
            Activity::AtUpper => lam < -tol || lam.is_nan(),
            Activity::Fixed => !lam.is_finite(),
        })
    }

    /// Signed unit columns for the active coordinates, ascending index order.
    pub fn span_normal_basis(&self) -> Matrix {
        self.signed_unit_columns(&self.active_indices())
    }

    /// Signed unit columns `±eᵢ` for `i ∈ indices`.
    pub fn signed_unit_columns(&self, indices: &[usize]) -> Matrix {
        let mut w = Matrix::zeros(self.0.len(), indices.len());
        for (col, &i) in indices.iter().enumerate() {
            w[(i, col)] = self.0[i].normal_sign();
        }
        w
    }
}

/// One-dimensional closed convex cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateCone {
    Line,
    Origin,
    NonPositive,
    NonNegative,
}

impl CoordinateCone {
    pub fn contains(self, x: f64, tol: f64) -> bool {
        match self {
            CoordinateCone::Line => x.is_finite(),
            CoordinateCone::Origin => x.abs() <= tol,
            CoordinateCone::NonPositive => x <= tol,
            CoordinateCone::NonNegative => x >= -tol,
        }
    }

    pub fn polar(self) -> CoordinateCone {
        match self {
            CoordinateCone::Line => CoordinateCone::Origin,
            CoordinateCone::Origin => CoordinateCone::Line,
            CoordinateCone::NonPositive => CoordinateCone::NonNegative,
            CoordinateCone::NonNegative => CoordinateCone::NonPositive,
        }
    }

    pub fn polar_contains(self, x: f64, tol: f64) -> bool {
        self.polar().contains(x, tol)
    }

    fn sample(self, rng: &mut impl Rng) -> f64 {
        let x: f64 = rng.gen_range(-1.0..1.0);
        match self {
            CoordinateCone::Line => x,
            CoordinateCone::Origin => 0.0,
            CoordinateCone::NonPositive => -x.abs(),
            CoordinateCone::NonNegative => x.abs(),
        }
    }
}

/// Product of per-coordinate cones describing a critical cone of a box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalCone(pub Vec<CoordinateCone>);

impl CriticalCone {
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.0.len() && self.0.iter().zip(v).all(|(c, &x)| c.contains(x, tol))
    }

    pub fn polar_contains(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.0.len() && self.0.iter().zip(v).all(|(c, &x)| c.polar_contains(x, tol))
    }

    /// Random `v ∈ K` and `w ∈ K°`.
    pub fn sample_pair(&self, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let v = self.0.iter().map(|c| c.sample(rng)).collect();
        let w = self.0.iter().map(|c| c.polar().sample(rng)).collect();
        (v, w)
    }

    /// Random coderivative element `(v*, u*)` with `−v* ∈ K` and `u* ∈ K°`.
    pub fn sample_element(&self, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let (v, u) = self.sample_pair(rng);
        (v.into_iter().map(|x| -x).collect(), u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = DEFAULT_ACTIVITY_TOL;

    fn half_line() -> BoxSet {
        BoxSet::nonpositive_orthant(1)
    }

    #[test]
    fn box_validation() {
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxSet::new(vec![f64::INFINITY], vec![f64::INFINITY]).is_err());
        assert!(BoxSet::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(BoxSet::new(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(BoxSet::new(vec![f64::NEG_INFINITY], vec![f64::INFINITY]).is_ok());
    }

    #[test]
    fn activity_examples() {
        let b = half_line();
        assert_eq!(b.activity(&[-1.0], TOL).unwrap().0, vec![Activity::Interior]);
        assert_eq!(b.activity(&[0.0], TOL).unwrap().0, vec![Activity::AtUpper]);
        let b2 = BoxSet::nonpositive_orthant(2);
        assert_eq!(
            b2.activity(&[0.0, -0.19], 1e-9).unwrap().0,
            vec![Activity::AtUpper, Activity::Interior]
        );
        let fixed = BoxSet::new(vec![0.0], vec![0.0]).unwrap();
        assert_eq!(fixed.activity(&[0.0], TOL).unwrap().0, vec![Activity::Fixed]);
        assert!(matches!(
            b.activity(&[0.5], TOL),
            Err(ConeError::InfeasiblePoint { index: 0, .. })
        ));
    }

    #[test]
    fn normal_cone_examples() {
        let b = half_line();
        assert!(b.normal_cone_membership(&[-1.0], &[0.0], TOL).unwrap());
        let x: f64 = 0.0125;
        assert!(b.normal_cone_membership(&[0.0], &[2.0 * x + x * x], TOL).unwrap());
        assert!(!b.normal_cone_membership(&[0.0], &[-1.0], TOL).unwrap());
        assert!(!b.normal_cone_membership(&[-1.0], &[1.0], TOL).unwrap());
        assert!(b.normal_cone_membership(&[1.0], &[0.0], TOL).is_err());
    }

    #[test]
    fn span_normal_basis_examples() {
        let b = BoxSet::new(vec![f64::NEG_INFINITY; 3], vec![1.0; 3]).unwrap();
        assert_eq!(b.span_normal_basis(&[0.0, 0.0, 0.0], TOL).unwrap().shape(), (3, 0));
        let w = half_line().span_normal_basis(&[0.0], TOL).unwrap();
        assert_eq!(w, Matrix::identity(1));
        let b = BoxSet::new(vec![0.0, f64::NEG_INFINITY], vec![0.0, 0.0]).unwrap();
        let w = b.span_normal_basis(&[0.0, -1.0], TOL).unwrap();
        assert_eq!(w, Matrix::column(&[1.0, 0.0]));
        let b = BoxSet::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let w = b.span_normal_basis(&[-1.0, 1.0], TOL).unwrap();
        assert_eq!(w, Matrix::diagonal(&[-1.0, 1.0]));
    }

    #[test]
    fn critical_cone_examples() {
        let b = half_line();
        assert!(b.critical_cone_membership(&[0.0], &[0.0], &[0.0], TOL).unwrap());
        assert!(b.critical_cone_membership(&[-1.0], &[0.0], &[0.0], TOL).unwrap());
        assert!(!b.critical_cone_membership(&[1.0], &[0.0], &[0.0], TOL).unwrap());
        assert!(!b.critical_cone_membership(&[-1.0], &[0.0], &[1.0], TOL).unwrap());
        assert!(matches!(
            b.critical_cone_membership(&[0.0], &[0.0], &[-1.0], TOL),
            Err(ConeError::InvalidMultiplier { .. })
        ));
    }

    #[test]
    fn face_enumeration_examples() {
        let b = half_line();
        assert_eq!(
            b.enumerate_face_index_sets(&[0.0], &[0.0], TOL).unwrap(),
            vec![vec![], vec![0]]
        );
        assert_eq!(
            b.enumerate_face_index_sets(&[0.0], &[2.0], TOL).unwrap(),
            vec![vec![0]]
        );
        let b2 = BoxSet::nonpositive_orthant(3);
        let sets = b2
            .enumerate_face_index_sets(&[0.0, 0.0, -1.0], &[0.0, 0.0, 0.0], TOL)
            .unwrap();
        assert_eq!(sets, vec![vec![], vec![0], vec![0, 1], vec![1]]);
        let fixed = BoxSet::new(vec![0.0, f64::NEG_INFINITY], vec![0.0, 0.0]).unwrap();
        assert_eq!(
            fixed.enumerate_face_index_sets(&[0.0, 0.0], &[0.0, 0.0], TOL).unwrap(),
            vec![vec![0], vec![0, 1]]
        );
    }

    #[test]
    fn face_enumeration_guard() {
        let b = BoxSet::nonpositive_orthant(21);
        assert!(matches!(
            b.enumerate_face_index_sets(&[0.0; 21], &[0.0; 21], TOL),
            Err(ConeError::CombinatorialBlowup { free: 21, .. })
        ));
    }

    #[test]
    fn regular_coderivative_examples() {
        let b = half_line();
        assert!(b.regular_coderivative_nd(&[0.0], &[0.0], &[0.0], &[0.0], TOL).unwrap());
        for cand in [-3.0, 0.0, 5.0] {
            assert!(!b.regular_coderivative_nd(&[0.0], &[0.0], &[-1.0], &[cand], TOL).unwrap());
        }
        assert!(b.regular_coderivative_nd(&[0.0], &[0.0], &[1.0], &[5.0], TOL).unwrap());
        assert!(!b.regular_coderivative_nd(&[0.0], &[0.0], &[1.0], &[-5.0], TOL).unwrap());
    }

    #[test]
    fn defect_examples() {
        let b = half_line();
        let r = (&[0.0][..], &[0.0][..]);
        assert_eq!(b.semismooth_star_defect(r, r, (&[0.0], &[1.0]), TOL).unwrap(), 0.0);
        assert_eq!(
            b.semismooth_star_defect(r, (&[0.0], &[0.5]), (&[0.0], &[1.0]), TOL).unwrap(),
            0.0
        );
        assert_eq!(
            b.semismooth_star_defect(r, (&[-0.3], &[0.0]), (&[0.7], &[0.0]), TOL).unwrap(),
            0.0
        );
        // v* must vanish when K = {0}.
        assert!(matches!(
            b.semismooth_star_defect(r, (&[0.0], &[0.5]), (&[1.0], &[1.0]), TOL),
            Err(ConeError::InvalidElement { index: 0 })
        ));
    }

    #[test]
    fn exactness_radius_ignores_zero_gaps() {
        let b = BoxSet::new(vec![-1.0, f64::NEG_INFINITY], vec![1.0, 0.0]).unwrap();
        let r = b.exactness_radius(&[0.25, 0.0], &[0.0, 0.3]).unwrap();
        assert!((r - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sampled_defect_vanishes() {
        let b = BoxSet::new(vec![-1.0, f64::NEG_INFINITY, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        let worst = b
            .max_sampled_defect(&[-1.0, 0.0, 0.0], &[0.0, 0.0, 2.0], 500, 3, TOL)
            .unwrap();
        assert!(worst <= 1e-12);
    }

    fn random_reference(rng: &mut ChaCha8Rng, s: usize) -> (BoxSet, Vec<f64>, Vec<f64>) {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut d = Vec::new();
        let mut lam = Vec::new();
        for _ in 0..s {
            let kind = rng.gen_range(0..6);
            let (l, u) = match rng.gen_range(0..4) {
                0 => (f64::NEG_INFINITY, 0.0),
                1 => (0.0, f64::INFINITY),
                2 => (-1.0, 1.0),
                _ => (0.5, 0.5),
            };
            lower.push(l);
            upper.push(u);
            let (di, li) = if l == u {
                (l, rng.gen_range(-1.0..1.0))
            } else {
                match kind {
                    0 if u.is_finite() => (u, rng.gen_range(0.1..1.0)),
                    1 if u.is_finite() => (u, 0.0),
                    2 if l.is_finite() => (l, -rng.gen_range(0.1..1.0)),
                    3 if l.is_finite() => (l, 0.0),
                    _ => {
                        let lo = if l.is_finite() { l } else { -2.0 };
                        let hi = if u.is_finite() { u } else { 2.0 };
                        (lo + (hi - lo) * rng.gen_range(0.2..0.8), 0.0)
                    }
                }
            };
            d.push(di);
            lam.push(li);
        }
        (BoxSet::new(lower, upper).unwrap(), d, lam)
    }

    #[test]
    fn span_columns_are_normal_and_match_a_face() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let s = rng.gen_range(1..5);
            let (b, d_bar, l_bar) = random_reference(&mut rng, s);
            let pattern = b.activity(&d_bar, 0.0).unwrap();
            let radius = 0.5 * b.exactness_radius(&d_bar, &l_bar).unwrap().min(1.0);
            let faces = b.enumerate_face_index_sets(&d_bar, &l_bar, 0.0).unwrap();
            let (d, lam) = b.sample_nearby_graph_point(&d_bar, &l_bar, &pattern, radius, &mut rng);
            assert!(b.normal_cone_membership(&d, &lam, 0.0).unwrap());
            let w = b.span_normal_basis(&d, 0.0).unwrap();
            for j in 0..w.cols() {
                assert!(b.normal_cone_membership(&d, &w.col(j), 0.0).unwrap());
            }
            let active = b.activity(&d, 0.0).unwrap().active_indices();
            assert!(faces.contains(&active), "active {active:?} not in {faces:?}");
        }
    }

    #[test]
    fn critical_cone_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..500 {
            let s = rng.gen_range(1..5);
            let (b, d, lam) = random_reference(&mut rng, s);
            let k = b.critical_cone(&d, &lam, 0.0).unwrap();
            let (v, w) = k.sample_pair(&mut rng);
            assert!(crate::densela::dot(&v, &w) <= 0.0);
        }
    }

    #[test]
    fn polyhedral_exactness_over_random_references() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for seed in 0..60 {
            let s = rng.gen_range(1..5);
            let (b, d, lam) = random_reference(&mut rng, s);
            assert_eq!(b.max_sampled_defect(&d, &lam, 100, seed, 0.0).unwrap(), 0.0);
        }
    }
}
