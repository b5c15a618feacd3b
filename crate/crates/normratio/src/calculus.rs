//! Exact first/second derivatives of ratio objectives and the closed-form
//! spectra of the rank-two matrices appearing in their restricted Hessians.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("ratio denominator p(u) is zero")]
    ZeroDenominator,
    #[error("hessian of {0} is not symmetric within 1e-12")]
    NotSymmetric(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("support point has a zero entry at index {0}")]
    ZeroEntryOnSupport(usize),
    #[error("x lies in span(e); the rank-two display does not apply")]
    CollinearInput,
    #[error("x must be nonzero")]
    ZeroVector,
    #[error("shift delta must be nonzero")]
    ZeroShift,
    #[error("support stats violate Cauchy-Schwarz: a = {a} > sqrt(s)*r = {bound}")]
    CauchySchwarzViolated { a: f64, bound: f64 },
    #[error("invalid support stats: {0}")]
    BadStats(String),
}

fn symmetry_defect(h: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..h.nrows() {
        for j in (i + 1)..h.ncols() {
            worst = worst.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    worst
}

/// Function values and derivatives of a numerator/denominator pair at one
/// point; the raw material for the quotient-rule formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioPoint {
    u: DVector<f64>,
    q_val: f64,
    p_val: f64,
    q_grad: DVector<f64>,
    p_grad: DVector<f64>,
    q_hess: DMatrix<f64>,
    p_hess: DMatrix<f64>,
}

impl RatioPoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        u: DVector<f64>,
        q_val: f64,
        p_val: f64,
        q_grad: DVector<f64>,
        p_grad: DVector<f64>,
        q_hess: DMatrix<f64>,
        p_hess: DMatrix<f64>,
    ) -> Result<Self, CalculusError> {
        let s = u.len();
        if q_grad.len() != s
            || p_grad.len() != s
            || q_hess.shape() != (s, s)
            || p_hess.shape() != (s, s)
        {
            return Err(CalculusError::DimensionMismatch(format!(
                "expected gradients of length {s} and {s}x{s} hessians"
            )));
        }
        if p_val == 0.0 {
            return Err(CalculusError::ZeroDenominator);
        }
        let scale = |h: &DMatrix<f64>| h.amax().max(1.0);
        if symmetry_defect(&q_hess) > 1e-12 * scale(&q_hess) {
            return Err(CalculusError::NotSymmetric("numerator"));
        }
        if symmetry_defect(&p_hess) > 1e-12 * scale(&p_hess) {
            return Err(CalculusError::NotSymmetric("denominator"));
        }
        Ok(Self {
            u,
            q_val,
            p_val,
            q_grad,
            p_grad,
            q_hess,
            p_hess,
        })
    }

    /// Derivative data of `q(u) = gamma ||u||_1`, `p(u) = ||u||_2` on the
    /// sign-fixed region around `u` (every entry nonzero).
    pub fn l1_over_l2(u: DVector<f64>, gamma: f64) -> Result<Self, CalculusError> {
        if let Some(i) = u.iter().position(|&v| v == 0.0) {
            return Err(CalculusError::ZeroEntryOnSupport(i));
        }
        let s = u.len();
        let r = u.norm();
        let a = u.iter().map(|v| v.abs()).sum::<f64>();
        let sign = u.map(|v| v.signum());
        let q_grad = gamma * &sign;
        let p_grad = &u / r;
        let q_hess = DMatrix::zeros(s, s);
        // Hessian of the Euclidean norm: (I - u u^T / r^2) / r.
        let p_hess = (DMatrix::identity(s, s) - &u * u.transpose() / (r * r)) / r;
        Self::new(u, gamma * a, r, q_grad, p_grad, q_hess, p_hess)
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.u
    }
}

/// Value, gradient and Hessian of the ratio `R(u) = q(u)/p(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioDerivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Quotient-rule derivatives of `R = q/p`:
///
/// ```text
/// grad R = (grad q - R grad p) / p
/// hess R = hess q / p
///        - (grad p grad q^T + grad q grad p^T + q hess p) / p^2
///        + 2 (q / p^3) grad p grad p^T
/// ```
pub fn ratio_derivatives(pt: &RatioPoint) -> RatioDerivatives {
    let p = pt.p_val;
    let q = pt.q_val;
    let value = q / p;
    let gradient = (&pt.q_grad - value * &pt.p_grad) / p;
    let pq_outer = &pt.p_grad * pt.q_grad.transpose();
    let pp_outer = &pt.p_grad * pt.p_grad.transpose();
    let hessian = &pt.q_hess / p
        - (&pq_outer + pq_outer.transpose() + q * &pt.p_hess) / (p * p)
        + 2.0 * (q / (p * p * p)) * pp_outer;
    RatioDerivatives {
        value,
        gradient,
        hessian,
    }
}

/// Gradient and Hessian of the support-restricted unconstrained objective
/// `f(y) = gamma ||y||_1 / ||y||_2 + 1/2 ||A_sub y - b||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedDerivatives {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Closed-form derivatives of the restricted objective at a point with no
/// zero entries:
///
/// ```text
/// grad = gamma (sign(y)/r - (a/r^3) y) + A_sub^T (A_sub y - b)
/// hess = A_sub^T A_sub - (gamma/r^3)(y sign(y)^T + sign(y) y^T)
///      + (3 gamma a / r^5) y y^T - (gamma a / r^3) I
/// ```
pub fn restricted_l1l2_derivatives(
    y: &DVector<f64>,
    a_sub: &DMatrix<f64>,
    b: &DVector<f64>,
    gamma: f64,
) -> Result<RestrictedDerivatives, CalculusError> {
    let s = y.len();
    if a_sub.ncols() != s {
        return Err(CalculusError::DimensionMismatch(format!(
            "A_sub has {} columns, y has length {s}",
            a_sub.ncols()
        )));
    }
    if a_sub.nrows() != b.len() {
        return Err(CalculusError::DimensionMismatch(format!(
            "A_sub has {} rows, b has length {}",
            a_sub.nrows(),
            b.len()
        )));
    }
    if let Some(i) = y.iter().position(|&v| v == 0.0) {
        return Err(CalculusError::ZeroEntryOnSupport(i));
    }
    let r = y.norm();
    let a = y.iter().map(|v| v.abs()).sum::<f64>();
    let sign = y.map(|v| v.signum());
    let residual = a_sub * y - b;
    let grad = gamma * (&sign / r - (a / (r * r * r)) * y) + a_sub.transpose() * residual;
    let r3 = r * r * r;
    let r5 = r3 * r * r;
    let hess = a_sub.transpose() * a_sub
        - (gamma / r3) * (y * sign.transpose() + &sign * y.transpose())
        + (3.0 * gamma * a / r5) * (y * y.transpose())
        - DMatrix::from_diagonal_element(s, s, gamma * a / r3);
    Ok(RestrictedDerivatives { grad, hess })
}

/// Spectrum of the symmetric rank-two matrix `G = x z^T + e x^T` with
/// `z = e + delta x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTwoSpec {
    pub x: DVector<f64>,
    pub e_vec: DVector<f64>,
    pub shift_delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub zero_multiplicity: usize,
}

impl RankTwoSpec {
    /// The matrix the spectrum describes; symmetric because `z = e + delta x`.
    pub fn form_matrix(&self) -> DMatrix<f64> {
        let z = &self.e_vec + self.shift_delta * &self.x;
        &self.x * z.transpose() + &self.e_vec * self.x.transpose()
    }
}

/// Closed-form eigenvalues of `G = x z^T + e x^T`, `z = e + delta x`:
/// the two nonzero eigenvalues are
///
/// ```text
/// lambda_{1,2} = [ (z^T x + e^T x) -+ sqrt((z^T x - e^T x)^2 + 4 (z^T e)(x^T x)) ] / 2
/// ```
///
/// and `0` has multiplicity `n - 2`. Requires `x` outside `span(e)`; on
/// collinear input the display degenerates and a direct dense
/// eigendecomposition of `G` should be used instead.
pub fn rank_two_eigenvalues(
    x: &DVector<f64>,
    e_vec: &DVector<f64>,
    shift_delta: f64,
) -> Result<RankTwoSpec, CalculusError> {
    if x.len() != e_vec.len() {
        return Err(CalculusError::DimensionMismatch(format!(
            "x has length {}, e has length {}",
            x.len(),
            e_vec.len()
        )));
    }
    let xn = x.norm();
    if xn == 0.0 {
        return Err(CalculusError::ZeroVector);
    }
    if shift_delta == 0.0 {
        return Err(CalculusError::ZeroShift);
    }
    let en = e_vec.norm();
    if x.dot(e_vec).abs() >= (1.0 - 1e-12) * xn * en {
        return Err(CalculusError::CollinearInput);
    }
    let z = e_vec + shift_delta * x;
    let zx = z.dot(x);
    let ex = e_vec.dot(x);
    let ze = z.dot(e_vec);
    let xx = x.norm_squared();
    let disc = ((zx - ex) * (zx - ex) + 4.0 * ze * xx).max(0.0).sqrt();
    let lambda1 = 0.5 * (zx + ex - disc);
    let lambda2 = 0.5 * (zx + ex + disc);
    Ok(RankTwoSpec {
        x: x.clone(),
        e_vec: e_vec.clone(),
        shift_delta,
        lambda1,
        lambda2,
        zero_multiplicity: x.len().saturating_sub(2),
    })
}

/// Closed-form spectrum of the support-restricted ratio-curvature matrix
///
/// ```text
/// Q = (gamma/r^3) [ |y| e^T + e |y|^T - (3a/r^2) |y||y|^T + a I ]
/// ```
///
/// expressed through the support statistics `(s, a, r)` alone.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct QSpectrum {
    pub s: usize,
    pub a: f64,
    pub r: f64,
    pub gamma: f64,
    /// Nonzero eigenvalues of the shifted companion matrix.
    pub lam1: f64,
    pub lam2: f64,
    /// `(gamma/r^3)(lam1 + a)`: nonpositive, strictly negative off the
    /// uniform-magnitude ray.
    pub q_neg: f64,
    /// `(gamma/r^3)(lam2 + a)`: nonnegative counterpart.
    pub q_pos: f64,
    /// Bulk eigenvalue `gamma a / r^3`.
    pub q_bulk: f64,
    /// Multiplicity of the bulk eigenvalue: `s - 2`, clamped at zero. The
    /// rank-two display needs two independent directions, so for `s = 1` the
    /// reported pair overcounts the (then 1x1, identically zero) matrix.
    pub bulk_multiplicity: usize,
}

impl QSpectrum {
    /// Eigenvalue multiset of `Q`. For `s >= 2` this is
    /// `{q_neg, q_pos, q_bulk x (s-2)}`; the degenerate `s = 1` matrix is
    /// identically zero.
    pub fn q_eigenvalues(&self) -> Vec<f64> {
        if self.s == 1 {
            return vec![0.0];
        }
        let mut eigs = vec![self.q_neg, self.q_pos];
        eigs.extend(std::iter::repeat_n(self.q_bulk, self.bulk_multiplicity));
        eigs
    }
}

/// Spectrum of `Q` from support stats:
/// `lam_{1,2} = (-a -+ sqrt(4 s r^2 - 3 a^2)) / 2`, then
/// `{(gamma/r^3)(lam1+a), (gamma/r^3)(lam2+a), (gamma a/r^3) x (s-2)}`.
pub fn q_matrix_spectrum(s: usize, a: f64, r: f64, gamma: f64) -> Result<QSpectrum, CalculusError> {
    if s == 0 {
        return Err(CalculusError::BadStats("support size s must be >= 1".into()));
    }
    if !r.is_finite() || r <= 0.0 {
        return Err(CalculusError::BadStats(format!("r = {r} must be positive")));
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(CalculusError::BadStats(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    if a < r * (1.0 - 1e-12) {
        return Err(CalculusError::BadStats(format!(
            "a = {a} below r = {r}; not realizable by any vector"
        )));
    }
    let bound = (s as f64).sqrt() * r;
    if a > bound * (1.0 + 1e-12) {
        return Err(CalculusError::CauchySchwarzViolated { a, bound });
    }
    // Cauchy-Schwarz keeps the discriminant nonnegative; clamp roundoff.
    let disc = (4.0 * s as f64 * r * r - 3.0 * a * a).max(0.0).sqrt();
    let lam1 = 0.5 * (-a - disc);
    let lam2 = 0.5 * (-a + disc);
    let scale = gamma / (r * r * r);
    Ok(QSpectrum {
        s,
        a,
        r,
        gamma,
        lam1,
        lam2,
        q_neg: scale * (lam1 + a),
        q_pos: scale * (lam2 + a),
        q_bulk: scale * a,
        bulk_multiplicity: s.saturating_sub(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let mut eigs: Vec<f64> = m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        eigs
    }

    #[test]
    fn ratio_derivatives_trivial_denominator() {
        let pt = RatioPoint::new(
            DVector::from_column_slice(&[2.0]),
            2.0,
            1.0,
            DVector::from_column_slice(&[1.0]),
            DVector::from_column_slice(&[0.0]),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let d = ratio_derivatives(&pt);
        assert_relative_eq!(d.value, 2.0);
        assert_relative_eq!(d.gradient[0], 1.0);
        assert_relative_eq!(d.hessian[(0, 0)], 0.0);
    }

    #[test]
    fn ratio_gradient_vanishes_at_one_sparse_point() {
        // q = ||u||_1, p = ||u||_2 at u = (1): sign/r - (a/r^3) u = 0.
        let pt = RatioPoint::l1_over_l2(DVector::from_column_slice(&[1.0]), 1.0).unwrap();
        let d = ratio_derivatives(&pt);
        assert_relative_eq!(d.value, 1.0);
        assert_relative_eq!(d.gradient[0], 0.0);
    }

    #[test]
    fn ratio_point_rejects_zero_denominator_and_asymmetry() {
        let err = RatioPoint::new(
            DVector::from_column_slice(&[1.0]),
            1.0,
            0.0,
            DVector::from_column_slice(&[0.0]),
            DVector::from_column_slice(&[0.0]),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap_err();
        assert_eq!(err, CalculusError::ZeroDenominator);

        let err = RatioPoint::new(
            DVector::from_column_slice(&[1.0, 1.0]),
            1.0,
            1.0,
            DVector::zeros(2),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::zeros(2, 2),
        )
        .unwrap_err();
        assert_eq!(err, CalculusError::NotSymmetric("numerator"));
    }

    fn fd_gradient(f: &dyn Fn(&DVector<f64>) -> f64, u: &DVector<f64>, h: f64) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        for i in 0..u.len() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            g[i] = (f(&up) - f(&dn)) / (2.0 * h);
        }
        g
    }

    fn fd_hessian(
        g: &dyn Fn(&DVector<f64>) -> DVector<f64>,
        u: &DVector<f64>,
        h: f64,
    ) -> DMatrix<f64> {
        let s = u.len();
        let mut hess = DMatrix::zeros(s, s);
        for i in 0..s {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let col = (g(&up) - g(&dn)) / (2.0 * h);
            hess.set_column(i, &col);
        }
        hess
    }

    /// Finite-difference oracle for the quotient-rule formulas, on random
    /// smooth points of the l1/l2 ratio (entries bounded away from zero so
    /// the stencil stays inside one sign-fixed region).
    #[test]
    fn ratio_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for _ in 0..200 {
            let s = rng.random_range(2..6usize);
            let gamma = rng.random_range(0.2f64..3.0);
            let u = DVector::from_fn(s, |_, _| {
                let mag = rng.random_range(0.3f64..3.0);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            });
            let value_fn = |v: &DVector<f64>| -> f64 {
                gamma * v.iter().map(|e| e.abs()).sum::<f64>() / v.norm()
            };
            let grad_fn = |v: &DVector<f64>| -> DVector<f64> {
                ratio_derivatives(&RatioPoint::l1_over_l2(v.clone(), gamma).unwrap()).gradient
            };
            let d = ratio_derivatives(&RatioPoint::l1_over_l2(u.clone(), gamma).unwrap());
            let g_fd = fd_gradient(&value_fn, &u, h);
            let h_fd = fd_hessian(&grad_fn, &u, h);
            let g_err = (&d.gradient - &g_fd).norm() / d.gradient.norm().max(1e-12);
            let h_err = (&d.hessian - &h_fd).norm() / d.hessian.norm().max(1e-12);
            assert!(g_err <= 1e-5, "gradient FD mismatch: {g_err}");
            assert!(h_err <= 1e-5, "hessian FD mismatch: {h_err}");
        }
    }

    #[test]
    fn restricted_derivatives_example1_stationary_pair() {
        let a_sub = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_column_slice(&[1.0]);
        let y = DVector::from_column_slice(&[0.5, 0.5]);
        let d = restricted_l1l2_derivatives(&y, &a_sub, &b, 1.0).unwrap();
        assert!(d.grad.norm() < 1e-14, "grad = {}", d.grad);
        let eigs = sorted_eigenvalues(&d.hess);
        assert_relative_eq!(eigs[0], -2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(eigs[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn restricted_derivatives_example1_single_support() {
        let a_sub = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DVector::from_column_slice(&[1.0]);
        let y = DVector::from_column_slice(&[1.0]);
        let d = restricted_l1l2_derivatives(&y, &a_sub, &b, 1.0).unwrap();
        assert_relative_eq!(d.grad[0], 0.0);
        assert_relative_eq!(d.hess[(0, 0)], 1.0);
    }

    #[test]
    fn restricted_rejects_zero_entry() {
        let a_sub = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_column_slice(&[1.0]);
        let y = DVector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(
            restricted_l1l2_derivatives(&y, &a_sub, &b, 1.0).unwrap_err(),
            CalculusError::ZeroEntryOnSupport(1)
        );
    }

    /// The directly assembled restricted derivatives must equal the
    /// quotient-rule route plus the data term.
    #[test]
    fn restricted_gradient_decomposes_into_ratio_plus_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let s = rng.random_range(1..5usize);
            let m = rng.random_range(1..4usize);
            let gamma = rng.random_range(0.1f64..4.0);
            let y = DVector::from_fn(s, |_, _| {
                let mag = rng.random_range(0.2f64..2.0);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            });
            let a_sub = DMatrix::from_fn(m, s, |_, _| rng.random_range(-1.0f64..1.0));
            let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0f64..1.0));
            let d = restricted_l1l2_derivatives(&y, &a_sub, &b, gamma).unwrap();
            let ratio = ratio_derivatives(&RatioPoint::l1_over_l2(y.clone(), gamma).unwrap());
            let quad_grad = a_sub.transpose() * (&a_sub * &y - &b);
            let combined = &ratio.gradient + &quad_grad;
            assert!((&d.grad - &combined).norm() <= 1e-12 * d.grad.norm().max(1.0));
            let quad_hess = a_sub.transpose() * &a_sub;
            let combined_h = &ratio.hessian + &quad_hess;
            assert!((&d.hess - &combined_h).norm() <= 1e-12 * d.hess.norm().max(1.0));
        }
    }

    #[test]
    fn rank_two_worked_cases() {
        let x = DVector::from_column_slice(&[1.0, 0.0]);
        let e = DVector::from_column_slice(&[1.0, 1.0]);
        let spec = rank_two_eigenvalues(&x, &e, 1.0).unwrap();
        assert_relative_eq!(spec.lambda1, (3.0 - 13f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(spec.lambda2, (3.0 + 13f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_eq!(spec.zero_multiplicity, 0);

        let x = DVector::from_column_slice(&[1.0, -1.0]);
        let spec = rank_two_eigenvalues(&x, &e, 2.0).unwrap();
        assert_relative_eq!(spec.lambda1, 2.0 - 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(spec.lambda2, 2.0 + 2.0 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rank_two_rejects_collinear_zero_and_unshifted() {
        let x = DVector::from_column_slice(&[1.0, 1.0]);
        let e = DVector::from_column_slice(&[2.0, 2.0]);
        assert_eq!(
            rank_two_eigenvalues(&x, &e, 1.0).unwrap_err(),
            CalculusError::CollinearInput
        );
        let z = DVector::zeros(2);
        assert_eq!(
            rank_two_eigenvalues(&z, &e, 1.0).unwrap_err(),
            CalculusError::ZeroVector
        );
        let y = DVector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(
            rank_two_eigenvalues(&y, &e, 0.0).unwrap_err(),
            CalculusError::ZeroShift
        );
    }

    /// Dense-eigendecomposition oracle over random admissible triples.
    #[test]
    fn rank_two_matches_dense_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut done = 0;
        while done < 500 {
            let n = rng.random_range(3..=12usize);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0f64..2.0));
            let e = DVector::from_fn(n, |_, _| rng.random_range(-2.0f64..2.0));
            let delta = loop {
                let d = rng.random_range(-3.0f64..3.0);
                if d.abs() > 0.05 {
                    break d;
                }
            };
            let spec = match rank_two_eigenvalues(&x, &e, delta) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let mut predicted = vec![spec.lambda1, spec.lambda2];
            predicted.extend(std::iter::repeat_n(0.0, spec.zero_multiplicity));
            predicted.sort_by(|a, b| a.total_cmp(b));
            let actual = sorted_eigenvalues(&spec.form_matrix());
            for (p, a) in predicted.iter().zip(&actual) {
                assert!((p - a).abs() <= 1e-9, "predicted {p}, dense {a}");
            }
            done += 1;
        }
    }

    #[test]
    fn trace_identity_holds() {
        let x = DVector::from_column_slice(&[0.4, -1.3, 2.0]);
        let e = DVector::from_column_slice(&[1.0, 1.0, 1.0]);
        let spec = rank_two_eigenvalues(&x, &e, -0.7).unwrap();
        let z = &e + spec.shift_delta * &x;
        let trace = z.dot(&x) + e.dot(&x);
        assert!((spec.lambda1 + spec.lambda2 - trace).abs() <= 1e-10);
    }

    /// With an all-ones `e` the general companion form reduces to the display
    /// `[(2 e^T x + delta ||x||^2) +- sqrt(delta^2 ||x||^4 + 4 (n + delta e^T x)||x||^2)]/2`.
    #[test]
    fn rank_two_all_ones_specialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(2..=9usize);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0f64..2.0));
            let e = DVector::from_element(n, 1.0);
            let delta = rng.random_range(0.1f64..2.0);
            let spec = match rank_two_eigenvalues(&x, &e, delta) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let ex = e.dot(&x);
            let xx = x.norm_squared();
            let disc = (delta * delta * xx * xx + 4.0 * (n as f64 + delta * ex) * xx).sqrt();
            let display_lo = 0.5 * (2.0 * ex + delta * xx - disc);
            let display_hi = 0.5 * (2.0 * ex + delta * xx + disc);
            assert_relative_eq!(spec.lambda1, display_lo, epsilon = 1e-9);
            assert_relative_eq!(spec.lambda2, display_hi, epsilon = 1e-9);
        }
    }

    #[test]
    fn q_spectrum_worked_cases() {
        // s=2, a=2, r=sqrt(2): uniform magnitudes, top eigenvalue hits zero.
        let q = q_matrix_spectrum(2, 2.0, 2f64.sqrt(), 1.0).unwrap();
        assert_relative_eq!(q.lam1, -2.0, epsilon = 1e-12);
        assert_relative_eq!(q.lam2, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.q_neg, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.q_pos, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(q.bulk_multiplicity, 0);

        // Degenerate s=1: formula pair {0, 1}, bulk multiplicity clamped.
        let q = q_matrix_spectrum(1, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(q.lam1, -1.0);
        assert_relative_eq!(q.lam2, 0.0);
        assert_relative_eq!(q.q_neg, 0.0);
        assert_relative_eq!(q.q_pos, 1.0);
        assert_eq!(q.bulk_multiplicity, 0);
        assert_eq!(q.q_eigenvalues(), vec![0.0]);
    }

    #[test]
    fn q_spectrum_rejects_cauchy_schwarz_violation() {
        let err = q_matrix_spectrum(2, 3.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, CalculusError::CauchySchwarzViolated { .. }));
    }

    /// Dense oracle: form Q explicitly from a random support vector and
    /// compare against the closed form.
    #[test]
    fn q_spectrum_matches_formed_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut done = 0;
        while done < 200 {
            let s = rng.random_range(2..=10usize);
            let gamma = rng.random_range(0.1f64..5.0);
            let y_abs = DVector::from_fn(s, |_, _| rng.random_range(0.1f64..3.0));
            // Skip near-uniform magnitude vectors; the premise excludes them.
            let ones = DVector::from_element(s, 1.0);
            if y_abs.dot(&ones).abs() >= (1.0 - 1e-6) * y_abs.norm() * ones.norm() {
                continue;
            }
            let a = y_abs.iter().sum::<f64>();
            let r = y_abs.norm();
            let spec = q_matrix_spectrum(s, a, r, gamma).unwrap();
            let scale = gamma / (r * r * r);
            let formed = scale
                * (&y_abs * ones.transpose() + &ones * y_abs.transpose()
                    - (3.0 * a / (r * r)) * (&y_abs * y_abs.transpose())
                    + DMatrix::from_diagonal_element(s, s, a));
            let mut predicted = spec.q_eigenvalues();
            predicted.sort_by(|x, y| x.total_cmp(y));
            let actual = sorted_eigenvalues(&formed);
            for (p, a) in predicted.iter().zip(&actual) {
                assert!((p - a).abs() <= 1e-9, "predicted {p}, dense {a}");
            }
            assert!(spec.q_neg <= 1e-12);
            assert!(spec.q_pos >= -1e-12);
            done += 1;
        }
    }

    /// Cauchy-Schwarz keeps `4 s r^2 - 3 a^2` nonnegative for stats coming
    /// from real vectors.
    #[test]
    fn q_spectrum_discriminant_nonnegative_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10_000 {
            let s = rng.random_range(1..=12usize);
            let y = DVector::from_fn(s, |_, _| {
                let mag = rng.random_range(1e-3f64..10.0);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            });
            let a = y.iter().map(|v| v.abs()).sum::<f64>();
            let r = y.norm();
            assert!(4.0 * s as f64 * r * r - 3.0 * a * a >= -1e-9 * (a * a).max(1.0));
            assert!(q_matrix_spectrum(s, a, r, 1.0).is_ok());
        }
    }
}
