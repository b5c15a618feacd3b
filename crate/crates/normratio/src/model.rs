//! Problem data model: validated instances, signal vectors, support
//! statistics, and the elementary scalar/vector power inequalities that the
//! reduction arguments lean on.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative support-detection threshold: an entry belongs to the support when
/// `|x_i| > rel_tol * ||x||_inf`. Floating-point solvers never land on exact
/// zeros, so an explicit cutoff is required.
pub const DEFAULT_SUPPORT_REL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("observation vector b must be nonzero")]
    ZeroObservation,
    #[error("exponent out of range: {0} (need p in (0,1], q in (1,inf))")]
    BadExponent(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("gamma invalid: {0}")]
    BadGamma(String),
    #[error("ratio objective undefined at the zero point")]
    ZeroPoint,
    #[error("point violates the nonnegative cone (entry {index} = {value})")]
    ConeViolation { index: usize, value: f64 },
    #[error("q-direction power inequality requested on mixed-sign inputs")]
    MixedSignQCheck,
}

/// Feasible cone `X` for the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    #[serde(rename = "free")]
    Free,
    #[serde(rename = "nonneg")]
    NonNegative,
}

/// Which of the two ratio-sparsity models an instance describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Constrained,
    Unconstrained,
}

/// Raw JSON form of an instance. Unknown fields are rejected so that schema
/// drift surfaces as a parse error instead of silent data loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceJson {
    pub m: usize,
    pub n: usize,
    /// Row-major `m x n` sensing matrix.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub cone: Cone,
    pub model: ModelKind,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    /// Present only on instances produced by the reduction encoders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<crate::reduction::ReductionMeta>,
}

fn default_p() -> f64 {
    1.0
}

fn default_q() -> f64 {
    2.0
}

/// A validated problem instance. The single source of `A`, `b`, `gamma`, the
/// cone, the model kind and the norm exponents `(p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
    b: DVector<f64>,
    gamma: Option<f64>,
    cone: Cone,
    model: ModelKind,
    p: f64,
    q: f64,
    reduction: Option<crate::reduction::ReductionMeta>,
}

impl ProblemInstance {
    /// Validates and constructs an instance. See [`validate_instance`] for
    /// the JSON entry point.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        gamma: Option<f64>,
        cone: Cone,
        model: ModelKind,
        p: f64,
        q: f64,
    ) -> Result<Self, ModelError> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(ModelError::DimensionMismatch(format!(
                "matrix must be nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != a.nrows() {
            return Err(ModelError::DimensionMismatch(format!(
                "A has {} rows but b has length {}",
                a.nrows(),
                b.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("matrix A".into()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("vector b".into()));
        }
        if b.iter().all(|&v| v == 0.0) {
            return Err(ModelError::ZeroObservation);
        }
        if !p.is_finite() || p <= 0.0 || p > 1.0 {
            return Err(ModelError::BadExponent(format!("p = {p}")));
        }
        if !q.is_finite() || q <= 1.0 {
            return Err(ModelError::BadExponent(format!("q = {q}")));
        }
        match (model, gamma) {
            (ModelKind::Unconstrained, Some(g)) => {
                if !g.is_finite() {
                    return Err(ModelError::NonFinite("gamma".into()));
                }
                if g <= 0.0 {
                    return Err(ModelError::BadGamma(format!("gamma = {g} must be > 0")));
                }
            }
            (ModelKind::Unconstrained, None) => {
                return Err(ModelError::BadGamma(
                    "unconstrained model requires gamma".into(),
                ));
            }
            (ModelKind::Constrained, Some(_)) => {
                return Err(ModelError::BadGamma(
                    "constrained model must not carry gamma".into(),
                ));
            }
            (ModelKind::Constrained, None) => {}
        }
        Ok(Self {
            a,
            b,
            gamma,
            cone,
            model,
            p,
            q,
            reduction: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn cone(&self) -> Cone {
        self.cone
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Reduction metadata, when this instance came out of an encoder.
    pub fn reduction_meta(&self) -> Option<&crate::reduction::ReductionMeta> {
        self.reduction.as_ref()
    }

    pub(crate) fn set_reduction_meta(&mut self, meta: crate::reduction::ReductionMeta) {
        self.reduction = Some(meta);
    }

    /// Returns a copy with `gamma` replaced (unconstrained model only).
    pub fn with_gamma(&self, gamma: f64) -> Result<Self, ModelError> {
        let mut inst = Self::new(
            self.a.clone(),
            self.b.clone(),
            Some(gamma),
            self.cone,
            ModelKind::Unconstrained,
            self.p,
            self.q,
        )?;
        inst.reduction = self.reduction.clone();
        Ok(inst)
    }

    /// Column submatrix `A_Lambda` for a support index set (0-based).
    pub fn submatrix_for_support(&self, support: &[usize]) -> DMatrix<f64> {
        column_submatrix(&self.a, support)
    }

    pub fn to_json(&self) -> InstanceJson {
        InstanceJson {
            m: self.rows(),
            n: self.cols(),
            a: self.a.transpose().as_slice().to_vec(), // row-major
            b: self.b.as_slice().to_vec(),
            gamma: self.gamma,
            cone: self.cone,
            model: self.model,
            p: self.p,
            q: self.q,
            reduction: self.reduction.clone(),
        }
    }
}

/// Selects the given columns of `a` in order.
pub(crate) fn column_submatrix(a: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    let mut sub = DMatrix::zeros(a.nrows(), support.len());
    for (k, &j) in support.iter().enumerate() {
        sub.set_column(k, &a.column(j));
    }
    sub
}

/// Validates a raw instance description. Never mutates its input.
pub fn validate_instance(raw: &InstanceJson) -> Result<ProblemInstance, ModelError> {
    if raw.a.len() != raw.m * raw.n {
        return Err(ModelError::DimensionMismatch(format!(
            "A has {} entries, expected m*n = {}",
            raw.a.len(),
            raw.m * raw.n
        )));
    }
    if raw.b.len() != raw.m {
        return Err(ModelError::DimensionMismatch(format!(
            "b has length {}, expected m = {}",
            raw.b.len(),
            raw.m
        )));
    }
    let a = DMatrix::from_row_slice(raw.m, raw.n, &raw.a);
    let b = DVector::from_column_slice(&raw.b);
    let mut inst = ProblemInstance::new(a, b, raw.gamma, raw.cone, raw.model, raw.p, raw.q)?;
    if let Some(meta) = &raw.reduction {
        inst.reduction = Some(meta.clone());
    }
    Ok(inst)
}

/// A finite real signal. Cone membership is checked on demand, not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector(DVector<f64>);

impl SignalVector {
    pub fn new(entries: DVector<f64>) -> Result<Self, ModelError> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("signal vector".into()));
        }
        Ok(Self(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self, ModelError> {
        Self::new(DVector::from_column_slice(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Cone membership up to an absolute tolerance on negative entries.
    pub fn in_cone(&self, cone: Cone, tol: f64) -> bool {
        match cone {
            Cone::Free => true,
            Cone::NonNegative => self.0.iter().all(|&v| v >= -tol),
        }
    }
}

impl std::ops::Index<usize> for SignalVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Support set and the scalar statistics `(s, a, r, R)` of a candidate point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportStats {
    /// Sorted 0-based support indices.
    pub support: Vec<usize>,
    /// Cardinality of the support.
    pub s: usize,
    /// `a = ||x||_1`, over the full vector.
    pub l1: f64,
    /// `r = ||x||_2`, over the full vector.
    pub l2: f64,
    /// Dynamic range `max_{i in support} |x_i| / min_{i in support} |x_i|`;
    /// `None` marks the undefined empty-support case.
    pub dyn_range: Option<f64>,
}

impl SupportStats {
    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// `(sum_i |x_i|^t)^(1/t)` for any exponent `t in (0, inf)`.
pub fn pnorm(x: &SignalVector, t: f64) -> Result<f64, ModelError> {
    if !t.is_finite() || t <= 0.0 {
        return Err(ModelError::BadExponent(format!("t = {t}")));
    }
    let v = x.as_vector();
    let value = if t == 1.0 {
        v.iter().map(|e| e.abs()).sum()
    } else if t == 2.0 {
        v.norm()
    } else {
        let sum: f64 = v.iter().map(|e| e.abs().powf(t)).sum();
        sum.powf(1.0 / t)
    };
    if !value.is_finite() {
        return Err(ModelError::NonFinite("pnorm result".into()));
    }
    Ok(value)
}

fn cone_tolerance(x: &SignalVector) -> f64 {
    1e-9 * x.as_vector().amax().max(1.0)
}

fn check_point(inst: &ProblemInstance, x: &SignalVector) -> Result<(), ModelError> {
    if x.len() != inst.cols() {
        return Err(ModelError::DimensionMismatch(format!(
            "point has length {}, instance has n = {}",
            x.len(),
            inst.cols()
        )));
    }
    Ok(())
}

/// Ratio (constrained) or penalized (unconstrained) objective at `x != 0`.
///
/// The constrained value is the bare ratio `||x||_p / ||x||_q`; feasibility
/// is deliberately not folded in (see [`feasibility_residual`]).
pub fn objective_value(inst: &ProblemInstance, x: &SignalVector) -> Result<f64, ModelError> {
    check_point(inst, x)?;
    if x.is_zero() {
        return Err(ModelError::ZeroPoint);
    }
    if inst.cone() == Cone::NonNegative {
        let tol = cone_tolerance(x);
        if let Some((i, &v)) = x
            .as_vector()
            .iter()
            .enumerate()
            .find(|(_, &v)| v < -tol)
        {
            return Err(ModelError::ConeViolation { index: i, value: v });
        }
    }
    let ratio = pnorm(x, inst.p())? / pnorm(x, inst.q())?;
    match inst.model() {
        ModelKind::Constrained => Ok(ratio),
        ModelKind::Unconstrained => {
            let gamma = inst.gamma().expect("validated unconstrained instance");
            let resid = inst.matrix() * x.as_vector() - inst.rhs();
            Ok(gamma * ratio + 0.5 * resid.norm_squared())
        }
    }
}

/// `||A x - b||_2`, plus the norm of the negative part when the cone is
/// nonnegative.
pub fn feasibility_residual(inst: &ProblemInstance, x: &SignalVector) -> Result<f64, ModelError> {
    check_point(inst, x)?;
    let resid = (inst.matrix() * x.as_vector() - inst.rhs()).norm();
    let negative_part = match inst.cone() {
        Cone::Free => 0.0,
        Cone::NonNegative => x
            .as_vector()
            .iter()
            .map(|&v| if v < 0.0 { v * v } else { 0.0 })
            .sum::<f64>()
            .sqrt(),
    };
    Ok(resid + negative_part)
}

/// Support under the relative threshold `rel_tol * ||x||_inf`, together with
/// `a = ||x||_1`, `r = ||x||_2` and the dynamic range over the support.
///
/// The zero vector yields an empty support with `dyn_range = None`; this is a
/// flag, not a failure.
pub fn support_and_stats(x: &SignalVector, rel_tol: f64) -> SupportStats {
    let v = x.as_vector();
    let max_abs = v.amax();
    let cutoff = rel_tol.max(0.0) * max_abs;
    let support: Vec<usize> = v
        .iter()
        .enumerate()
        .filter(|(_, &e)| e.abs() > cutoff && e != 0.0)
        .map(|(i, _)| i)
        .collect();
    let l1 = v.iter().map(|e| e.abs()).sum();
    let l2 = v.norm();
    let dyn_range = if support.is_empty() {
        None
    } else {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &i in &support {
            let m = v[i].abs();
            lo = lo.min(m);
            hi = hi.max(m);
        }
        Some(hi / lo)
    };
    SupportStats {
        s: support.len(),
        support,
        l1,
        l2,
        dyn_range,
    }
}

/// Outcome of the p-th/q-th power inequality checks on a vector pair.
///
/// `lhs_p = ||a+b||_p^p`, `rhs_p = ||a||_p^p + ||b||_p^p`, and analogously
/// for `q` when the q-direction was requested. Equality is decided by the
/// literal criterion (componentwise disjoint supports), not by floating-point
/// comparison of the two sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerInequalityReport {
    pub lhs_p: f64,
    pub rhs_p: f64,
    pub equality_p: bool,
    pub lhs_q: Option<f64>,
    pub rhs_q: Option<f64>,
    pub equality_q: Option<bool>,
}

/// Verifies `||a+b||_p^p <= ||a||_p^p + ||b||_p^p` for `p in (0,1)` and, on
/// componentwise-nonnegative inputs, `||a+b||_q^q >= ||a||_q^q + ||b||_q^q`
/// for `q in (1,inf)`.
///
/// The norm-form statements fail on simple examples; the power form is what
/// the reduction proofs actually use, so that is what this checks. Pass
/// `q = None` to skip the q-direction (the p-direction is valid for signed
/// inputs, the q-direction is not and errors on mixed signs).
pub fn power_inequality_check(
    a: &SignalVector,
    b: &SignalVector,
    p: f64,
    q: Option<f64>,
) -> Result<PowerInequalityReport, ModelError> {
    if a.len() != b.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "vector lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(ModelError::BadExponent(format!("p = {p} not in (0,1)")));
    }
    let power_sum = |v: &SignalVector, t: f64| -> f64 {
        v.as_slice().iter().map(|e| e.abs().powf(t)).sum()
    };
    let sum = SignalVector::new(a.as_vector() + b.as_vector())?;
    let lhs_p = power_sum(&sum, p);
    let rhs_p = power_sum(a, p) + power_sum(b, p);
    let disjoint = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .all(|(&ai, &bi)| ai * bi == 0.0);

    let (lhs_q, rhs_q, equality_q) = match q {
        None => (None, None, None),
        Some(q) => {
            if !q.is_finite() || q <= 1.0 {
                return Err(ModelError::BadExponent(format!("q = {q} not in (1,inf)")));
            }
            if a.as_slice().iter().any(|&v| v < 0.0) || b.as_slice().iter().any(|&v| v < 0.0) {
                return Err(ModelError::MixedSignQCheck);
            }
            (
                Some(power_sum(&sum, q)),
                Some(power_sum(a, q) + power_sum(b, q)),
                Some(disjoint),
            )
        }
    };

    Ok(PowerInequalityReport {
        lhs_p,
        rhs_p,
        equality_p: disjoint,
        lhs_q,
        rhs_q,
        equality_q,
    })
}
