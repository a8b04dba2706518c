//! Generalized equations `0 ∈ f(x) + ∇g(x)ᵀ N_D(g(x))` with a box `D`.
//!
//! A [`GeProblem`] bundles the callbacks for `f`, `g` and their derivatives
//! with the box. Evaluation goes through checked accessors that enforce the
//! declared shapes and reject non-finite output.

use std::fmt;
use std::sync::Arc;

use serde::de::{self, Deserializer};
use serde::Deserialize;
use thiserror::Error;

use crate::boxcones::{BoxSet, ConeError, DEFAULT_ACTIVITY_TOL};
use crate::densela::{self, LinalgError, Lu, Matrix};

/// Relative pivot tolerance for deciding regularity of reduced Hessians.
pub const REGULARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("{what} returned shape {got:?}, expected {expected:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{what} returned a non-finite value at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("argument has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

/// Callbacks defining `f`, `g` and their derivatives.
///
/// Implementations must be pure; a problem may be evaluated from several
/// threads at once.
pub trait GeFunctions: Send + Sync {
    /// `f(x) ∈ ℝⁿ`
    fn f(&self, x: &[f64]) -> Vec<f64>;
    /// `∇f(x)`, `n×n`
    fn jf(&self, x: &[f64]) -> Matrix;
    /// `g(x) ∈ ℝˢ`
    fn g(&self, x: &[f64]) -> Vec<f64>;
    /// `∇g(x)`, `s×n`
    fn jg(&self, x: &[f64]) -> Matrix;
    /// `∇²⟨λ, g⟩(x)`, `n×n` and symmetric
    fn hg(&self, x: &[f64], lambda: &[f64]) -> Matrix;
}

/// One generalized equation instance.
#[derive(Clone)]
pub struct GeProblem {
    name: String,
    n: usize,
    s: usize,
    set: BoxSet,
    funcs: Arc<dyn GeFunctions>,
}

impl fmt::Debug for GeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("s", &self.s)
            .field("set", &self.set)
            .finish()
    }
}

/// `L_λ(x) = f(x) + ∇g(x)ᵀλ` and its Jacobian `∇f(x) + ∇²⟨λ, g⟩(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianEval {
    pub value: Vec<f64>,
    pub jacobian: Matrix,
}

fn check_vec(what: &'static str, v: Vec<f64>, len: usize) -> Result<Vec<f64>> {
    if v.len() != len {
        return Err(ProblemError::Shape {
            what,
            expected: (len, 1),
            got: (v.len(), 1),
        });
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(ProblemError::NonFinite { what, index });
    }
    Ok(v)
}

fn check_mat(what: &'static str, m: Matrix, shape: (usize, usize)) -> Result<Matrix> {
    if m.shape() != shape {
        return Err(ProblemError::Shape {
            what,
            expected: shape,
            got: m.shape(),
        });
    }
    if let Some(index) = m.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(ProblemError::NonFinite { what, index });
    }
    Ok(m)
}

impl GeProblem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        set: BoxSet,
        funcs: Arc<dyn GeFunctions>,
    ) -> Self {
        GeProblem {
            name: name.into(),
            n,
            s: set.dim(),
            set,
            funcs,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn set(&self) -> &BoxSet {
        &self.set
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(ProblemError::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.s {
            return Err(ProblemError::Dimension {
                expected: self.s,
                got: lambda.len(),
            });
        }
        Ok(())
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        check_vec("f", self.funcs.f(x), self.n)
    }

    pub fn eval_jf(&self, x: &[f64]) -> Result<Matrix> {
        self.check_x(x)?;
        check_mat("jf", self.funcs.jf(x), (self.n, self.n))
    }

    pub fn eval_g(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        check_vec("g", self.funcs.g(x), self.s)
    }

    pub fn eval_jg(&self, x: &[f64]) -> Result<Matrix> {
        self.check_x(x)?;
        check_mat("jg", self.funcs.jg(x), (self.s, self.n))
    }

    pub fn eval_hg(&self, x: &[f64], lambda: &[f64]) -> Result<Matrix> {
        self.check_x(x)?;
        self.check_lambda(lambda)?;
        check_mat("hg", self.funcs.hg(x, lambda), (self.n, self.n))
    }

    pub fn lagrangian(&self, x: &[f64], lambda: &[f64]) -> Result<LagrangianEval> {
        let f = self.eval_f(x)?;
        let jg = self.eval_jg(x)?;
        self.check_lambda(lambda)?;
        let value = densela::axpy(1.0, &jg.tr_mul_vec(lambda)?, &f);
        let jacobian = self.eval_jf(x)?.add(&self.eval_hg(x, lambda)?)?;
        Ok(LagrangianEval { value, jacobian })
    }

    /// Best constant `γ` with `‖∇g(x)ᵀμ‖ ≥ γ‖μ‖` on `Span N_D(d)`, i.e. the
    /// smallest singular value of `Ŵᵀ∇g(x)`; `+∞` when `d` is interior.
    pub fn nondegeneracy_modulus(&self, x: &[f64], d: &[f64]) -> Result<f64> {
        let w = self.set.span_normal_basis(d, DEFAULT_ACTIVITY_TOL)?;
        if w.cols() == 0 {
            return Ok(f64::INFINITY);
        }
        let c = w.transpose().matmul(&self.eval_jg(x)?)?;
        Ok(densela::smallest_singular_value(&c)?)
    }

    /// Second-order check over every face of the critical cone at `(x̄, λ̄)`.
    pub fn check_second_order(&self, x_bar: &[f64], lambda_bar: &[f64]) -> Result<SecondOrderReport> {
        self.check_second_order_with(x_bar, lambda_bar, |z| z)
    }

    /// As [`GeProblem::check_second_order`], passing every null-space basis
    /// through `transform_basis` first (used to vary the orthonormal basis).
    pub fn check_second_order_with(
        &self,
        x_bar: &[f64],
        lambda_bar: &[f64],
        mut transform_basis: impl FnMut(Matrix) -> Matrix,
    ) -> Result<SecondOrderReport> {
        let d_bar = self.eval_g(x_bar)?;
        let tol = DEFAULT_ACTIVITY_TOL;
        let faces = self.set.enumerate_face_index_sets(&d_bar, lambda_bar, tol)?;
        let pattern = self.set.activity(&d_bar, tol)?;
        let jg = self.eval_jg(x_bar)?;
        let jac_l = self.lagrangian(x_bar, lambda_bar)?.jacobian;
        let mut verdicts = Vec::with_capacity(faces.len());
        for face in faces {
            let w = pattern.signed_unit_columns(&face);
            let c = w.transpose().matmul(&jg)?;
            let verdict = match densela::nullspace_basis(&c) {
                Ok(z) => second_order_verdict(face, &jac_l, &transform_basis(z))?,
                Err(LinalgError::RankDeficient { .. }) | Err(LinalgError::InvalidArgument(_)) => {
                    FaceVerdict {
                        index_set: face,
                        dimension: 0,
                        determinant: 0.0,
                        regular: false,
                        rank_deficient: true,
                    }
                }
                Err(e) => return Err(e.into()),
            };
            verdicts.push(verdict);
        }
        Ok(SecondOrderReport { faces: verdicts })
    }
}

/// Regularity of `ZᵀLZ` for one face, decided by LU pivot success.
pub fn second_order_verdict(index_set: Vec<usize>, jac_l: &Matrix, z: &Matrix) -> Result<FaceVerdict> {
    let dimension = z.cols();
    if dimension == 0 {
        return Ok(FaceVerdict {
            index_set,
            dimension,
            determinant: 1.0,
            regular: true,
            rank_deficient: false,
        });
    }
    let reduced = z.transpose().matmul(&jac_l.matmul(z)?)?;
    let (determinant, regular) = match Lu::factor(&reduced, REGULARITY_TOL) {
        Ok(lu) => (lu.determinant(), true),
        Err(LinalgError::Singular { .. }) => (0.0, false),
        Err(e) => return Err(e.into()),
    };
    Ok(FaceVerdict {
        index_set,
        dimension,
        determinant,
        regular,
        rank_deficient: false,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FaceVerdict {
    /// Coordinates held at their bound on this face (0-based).
    pub index_set: Vec<usize>,
    /// Number of columns of `Z_J`.
    pub dimension: usize,
    /// Determinant of `Z_Jᵀ∇L Z_J`, 1 for an empty basis.
    pub determinant: f64,
    pub regular: bool,
    /// `W_Jᵀ∇g(x̄)` lacked full row rank, so no basis could be formed.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SecondOrderReport {
    pub faces: Vec<FaceVerdict>,
}

impl SecondOrderReport {
    pub fn passed(&self) -> bool {
        self.faces.iter().all(|f| f.regular)
    }
}

/// `f(x) = Mx + q`, `g(x) = Gx + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineProblemSpec {
    pub name: String,
    pub m: Matrix,
    pub q: Vec<f64>,
    pub g: Matrix,
    pub h: Vec<f64>,
    pub set: BoxSet,
}

impl AffineProblemSpec {
    pub fn into_problem(self) -> GeProblem {
        let n = self.q.len();
        let name = self.name.clone();
        let set = self.set.clone();
        GeProblem::new(name, n, set, Arc::new(self))
    }
}

impl GeFunctions for AffineProblemSpec {
    fn f(&self, x: &[f64]) -> Vec<f64> {
        densela::axpy(1.0, &self.m.mul_vec(x).expect("validated shape"), &self.q)
    }

    fn jf(&self, _x: &[f64]) -> Matrix {
        self.m.clone()
    }

    fn g(&self, x: &[f64]) -> Vec<f64> {
        densela::axpy(1.0, &self.g.mul_vec(x).expect("validated shape"), &self.h)
    }

    fn jg(&self, _x: &[f64]) -> Matrix {
        self.g.clone()
    }

    fn hg(&self, _x: &[f64], _lambda: &[f64]) -> Matrix {
        Matrix::zeros(self.q.len(), self.q.len())
    }
}

/// A bound in a problem file: a number, or `"-inf"` / `"+inf"`.
#[derive(Debug, Clone, Copy)]
struct Bound(f64);

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Bound(v)),
            Raw::Text(t) => match t.as_str() {
                "-inf" => Ok(Bound(f64::NEG_INFINITY)),
                "+inf" | "inf" => Ok(Bound(f64::INFINITY)),
                other => Err(de::Error::custom(format!(
                    "expected a number, \"-inf\" or \"+inf\", got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineDocument {
    name: String,
    n: usize,
    s: usize,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    q: Vec<f64>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
    lower: Vec<Bound>,
    upper: Vec<Bound>,
}

fn matrix_from_document(what: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<Matrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(ProblemError::Validation(format!(
            "{what} must be {r}x{c}, got {} rows with lengths {:?}",
            rows.len(),
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    if r == 0 || c == 0 {
        return Ok(Matrix::zeros(r, c));
    }
    Ok(Matrix::from_rows(rows)?)
}

/// Parses the affine problem file format into a validated specification.
pub fn parse_affine_spec(document: &str) -> Result<AffineProblemSpec> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let doc: AffineDocument = serde_path_to_error::deserialize(de).map_err(|e| ProblemError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let (n, s) = (doc.n, doc.s);
    let m = matrix_from_document("M", &doc.m, n, n)?;
    let g = matrix_from_document("G", &doc.g, s, n)?;
    for (what, len, expected) in [
        ("q", doc.q.len(), n),
        ("h", doc.h.len(), s),
        ("lower", doc.lower.len(), s),
        ("upper", doc.upper.len(), s),
    ] {
        if len != expected {
            return Err(ProblemError::Validation(format!(
                "{what} has length {len}, expected {expected}"
            )));
        }
    }
    if !m.is_finite() || !g.is_finite() || doc.q.iter().chain(&doc.h).any(|v| !v.is_finite()) {
        return Err(ProblemError::Validation("problem data must be finite".into()));
    }
    let set = BoxSet::new(
        doc.lower.iter().map(|b| b.0).collect(),
        doc.upper.iter().map(|b| b.0).collect(),
    )?;
    Ok(AffineProblemSpec {
        name: doc.name,
        m,
        q: doc.q,
        g,
        h: doc.h,
        set,
    })
}

pub fn load_affine_problem(document: &str) -> Result<GeProblem> {
    Ok(parse_affine_spec(document)?.into_problem())
}

/// `0 ∈ −x − x² + N_{ℝ₋}(x)`, solution `x̄ = 0` with `λ̄ = 0`.
struct QuadraticNcp;

impl GeFunctions for QuadraticNcp {
    fn f(&self, x: &[f64]) -> Vec<f64> {
        vec![-x[0] - x[0] * x[0]]
    }
    fn jf(&self, x: &[f64]) -> Matrix {
        Matrix::diagonal(&[-1.0 - 2.0 * x[0]])
    }
    fn g(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0]]
    }
    fn jg(&self, _x: &[f64]) -> Matrix {
        Matrix::identity(1)
    }
    fn hg(&self, _x: &[f64], _lambda: &[f64]) -> Matrix {
        Matrix::zeros(1, 1)
    }
}

/// Stationarity of `½‖x − a‖²` over the unit disk, `g(x) = ‖x‖² − 1 ≤ 0`.
struct DiskProjection {
    target: [f64; 2],
}

impl GeFunctions for DiskProjection {
    fn f(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0] - self.target[0], x[1] - self.target[1]]
    }
    fn jf(&self, _x: &[f64]) -> Matrix {
        Matrix::identity(2)
    }
    fn g(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0] * x[0] + x[1] * x[1] - 1.0]
    }
    fn jg(&self, x: &[f64]) -> Matrix {
        Matrix::from_rows(&[vec![2.0 * x[0], 2.0 * x[1]]]).expect("1x2")
    }
    fn hg(&self, _x: &[f64], lambda: &[f64]) -> Matrix {
        Matrix::identity(2).scale(2.0 * lambda[0])
    }
}

/// A builtin problem together with its known solution.
#[derive(Debug, Clone)]
pub struct BuiltinProblem {
    pub problem: GeProblem,
    pub solution: Vec<f64>,
    pub multiplier: Vec<f64>,
    pub description: &'static str,
}

/// The builtin problems, sorted by name.
pub fn builtin_registry() -> Vec<BuiltinProblem> {
    let half_line = BoxSet::nonpositive_orthant(1);
    let ncp = GeProblem::new("ncp-paper", 1, half_line.clone(), Arc::new(QuadraticNcp));
    let ncp_affine = AffineProblemSpec {
        name: "ncp-paper-affine".into(),
        m: Matrix::diagonal(&[-1.0]),
        q: vec![0.0],
        g: Matrix::identity(1),
        h: vec![0.0],
        set: half_line.clone(),
    }
    .into_problem();
    let box_vi = AffineProblemSpec {
        name: "box-vi-2d".into(),
        m: Matrix::identity(2),
        q: vec![-1.0, -1.0],
        g: Matrix::identity(2),
        h: vec![0.0, 0.0],
        set: BoxSet::nonpositive_orthant(2),
    }
    .into_problem();
    let target: [f64; 2] = [2.0, 1.0];
    let radius = target[0].hypot(target[1]);
    let disk = GeProblem::new(
        "disk-projection-2d",
        2,
        half_line,
        Arc::new(DiskProjection { target }),
    );
    let mut all = vec![
        BuiltinProblem {
            problem: box_vi,
            solution: vec![0.0, 0.0],
            multiplier: vec![1.0, 1.0],
            description: "f(x) = x - (1,1), g(x) = x, D = nonpositive orthant in R^2",
        },
        BuiltinProblem {
            problem: disk,
            solution: vec![target[0] / radius, target[1] / radius],
            multiplier: vec![(radius - 1.0) / 2.0],
            description: "projection of (2,1) onto the unit disk, g(x) = |x|^2 - 1 <= 0",
        },
        BuiltinProblem {
            problem: ncp,
            solution: vec![0.0],
            multiplier: vec![0.0],
            description: "NCP 0 in -x - x^2 + N_{R_-}(x)",
        },
        BuiltinProblem {
            problem: ncp_affine,
            solution: vec![0.0],
            multiplier: vec![0.0],
            description: "linearization of ncp-paper at 0: 0 in -x + N_{R_-}(x)",
        },
    ];
    all.sort_by(|a, b| a.problem.name().cmp(b.problem.name()));
    all
}

pub fn find_builtin(name: &str) -> Option<BuiltinProblem> {
    builtin_registry().into_iter().find(|b| b.problem.name() == name)
}
