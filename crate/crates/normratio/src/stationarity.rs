//! First-order stationarity residuals and second-order local-minimizer
//! certification of the unconstrained model via the support-restricted
//! Hessian.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::calculus::restricted_l1l2_derivatives;
use crate::model::{
    pnorm, support_and_stats, Cone, ModelError, ModelKind, ProblemInstance, SignalVector,
};

/// Default absolute tolerance on the first-order residual and the off-support
/// margin.
pub const DEFAULT_TOL_FO: f64 = 1e-9;

/// Default absolute tolerance on the smallest restricted-Hessian eigenvalue.
pub const DEFAULT_TOL_SO: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationarityError {
    #[error("stationarity is undefined at the zero point")]
    ZeroPoint,
    #[error("operation requires the {0} model")]
    WrongModel(&'static str),
    #[error("stationarity formulas require (p, q) = (1, 2), got ({0}, {1})")]
    UnsupportedExponents(f64, f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Verdict of the necessary-condition screen. `LocalMinimizer` means the
/// point passes every necessary condition checked here; it is not a
/// sufficiency proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    LocalMinimizer,
    StationaryNotMinimizer,
    NotStationary,
}

/// Support-restricted gradient residual and the one-sided margin at zero
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderReport {
    /// `|| gamma (sign(x_L)/r - (a/r^3) x_L) + A_L^T (A_L x_L - b) ||`.
    pub residual: f64,
    /// `min_{i not in L}` of the one-sided directional derivative of the full
    /// objective at `x_i = 0`; `None` when the support is full.
    pub off_support_margin: Option<f64>,
    pub support: Vec<usize>,
}

/// Certificate of the first/second-order necessary conditions at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerCertificate {
    pub first_order_residual: f64,
    pub off_support_margin: Option<f64>,
    /// Smallest eigenvalue of the restricted Hessian; `None` when the point
    /// failed the first-order screen and the Hessian was never formed.
    pub min_hessian_eig: Option<f64>,
    pub verdict: Verdict,
    pub tol_fo: f64,
    pub tol_so: f64,
    pub support_rel_tol: f64,
}

pub(crate) fn require_l1l2_unconstrained(
    inst: &ProblemInstance,
) -> Result<f64, StationarityError> {
    if inst.model() != ModelKind::Unconstrained {
        return Err(StationarityError::WrongModel("unconstrained"));
    }
    if inst.p() != 1.0 || inst.q() != 2.0 {
        return Err(StationarityError::UnsupportedExponents(inst.p(), inst.q()));
    }
    Ok(inst.gamma().expect("validated unconstrained instance"))
}

/// First-order residual on the support plus the d-stationarity margin at the
/// zero coordinates.
///
/// At `x_i = 0` the ratio term contributes `gamma/r` to every one-sided
/// directional derivative, so the margin is `gamma/r - |[A^T (A x - b)]_i|`
/// on the free cone and `gamma/r + [A^T (A x - b)]_i` on the nonnegative one.
pub fn first_order_residual(
    inst: &ProblemInstance,
    x: &SignalVector,
    support_rel_tol: f64,
) -> Result<FirstOrderReport, StationarityError> {
    let gamma = require_l1l2_unconstrained(inst)?;
    if x.is_zero() {
        return Err(StationarityError::ZeroPoint);
    }
    let stats = support_and_stats(x, support_rel_tol);
    let support = stats.support;
    let (a, r) = (stats.l1, stats.l2);

    let y = DVector::from_iterator(support.len(), support.iter().map(|&i| x[i]));
    let a_sub = inst.submatrix_for_support(&support);
    let sign = y.map(|v| v.signum());
    let grad = gamma * (&sign / r - (a / (r * r * r)) * &y)
        + a_sub.transpose() * (&a_sub * &y - inst.rhs());
    let residual = grad.norm();

    let off_support_margin = if support.len() == x.len() {
        None
    } else {
        let correlation = inst.matrix().transpose() * (inst.matrix() * x.as_vector() - inst.rhs());
        let mut margin = f64::INFINITY;
        let mut on_support = vec![false; x.len()];
        for &i in &support {
            on_support[i] = true;
        }
        for i in 0..x.len() {
            if on_support[i] {
                continue;
            }
            let m = match inst.cone() {
                Cone::Free => gamma / r - correlation[i].abs(),
                Cone::NonNegative => gamma / r + correlation[i],
            };
            margin = margin.min(m);
        }
        Some(margin)
    };

    Ok(FirstOrderReport {
        residual,
        off_support_margin,
        support,
    })
}

/// Screens a candidate against the first- and second-order necessary
/// conditions:
///
/// * residual above `tol_fo` -> `NotStationary` (Hessian not formed);
/// * otherwise the smallest eigenvalue of the restricted Hessian and the
///   off-support margin decide between `LocalMinimizer` and
///   `StationaryNotMinimizer`.
pub fn certify_local_minimizer(
    inst: &ProblemInstance,
    x: &SignalVector,
    tol_fo: f64,
    tol_so: f64,
    support_rel_tol: f64,
) -> Result<MinimizerCertificate, StationarityError> {
    let gamma = require_l1l2_unconstrained(inst)?;
    let report = first_order_residual(inst, x, support_rel_tol)?;

    if report.residual > tol_fo {
        return Ok(MinimizerCertificate {
            first_order_residual: report.residual,
            off_support_margin: report.off_support_margin,
            min_hessian_eig: None,
            verdict: Verdict::NotStationary,
            tol_fo,
            tol_so,
            support_rel_tol,
        });
    }

    let y = DVector::from_iterator(report.support.len(), report.support.iter().map(|&i| x[i]));
    let a_sub = inst.submatrix_for_support(&report.support);
    let derivs = restricted_l1l2_derivatives(&y, &a_sub, inst.rhs(), gamma)
        .expect("support entries are nonzero by construction");
    let min_eig = derivs
        .hess
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let margin_ok = report.off_support_margin.is_none_or(|m| m >= -tol_fo);
    let verdict = if margin_ok && min_eig >= -tol_so {
        Verdict::LocalMinimizer
    } else {
        Verdict::StationaryNotMinimizer
    };
    Ok(MinimizerCertificate {
        first_order_residual: report.residual,
        off_support_margin: report.off_support_margin,
        min_hessian_eig: Some(min_eig),
        verdict,
        tol_fo,
        tol_so,
        support_rel_tol,
    })
}

/// Feasibility plus the scale-invariant projected ratio-gradient residual for
/// the constrained model: `r * || P_null(A_L) grad (||.||_p/||.||_q)(x_L) ||`.
///
/// The curvature test of the unconstrained certificate has no constrained
/// analogue here; this is a stationarity screen only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedStationarityReport {
    pub feasibility: f64,
    pub projected_residual: f64,
    pub support: Vec<usize>,
}

/// Stationarity screen for the constrained model on the affine set.
pub fn constrained_stationarity(
    inst: &ProblemInstance,
    x: &SignalVector,
    support_rel_tol: f64,
) -> Result<ConstrainedStationarityReport, StationarityError> {
    if inst.model() != ModelKind::Constrained {
        return Err(StationarityError::WrongModel("constrained"));
    }
    if x.is_zero() {
        return Err(StationarityError::ZeroPoint);
    }
    let feasibility = crate::model::feasibility_residual(inst, x)?;
    let stats = support_and_stats(x, support_rel_tol);
    let support = stats.support;
    let y = DVector::from_iterator(support.len(), support.iter().map(|&i| x[i]));
    let (p, q) = (inst.p(), inst.q());

    // grad ||u||_t = |u|^(t-1) sign(u) * ||u||_t^(1-t), entrywise powers.
    let grad_norm = |t: f64| -> DVector<f64> {
        let sv = SignalVector::new(y.clone()).expect("finite");
        let nt = pnorm(&sv, t).expect("valid exponent");
        y.map(|v| v.abs().powf(t - 1.0) * v.signum() * nt.powf(1.0 - t))
    };
    let yv = SignalVector::new(y.clone()).expect("finite");
    let np = pnorm(&yv, p)?;
    let nq = pnorm(&yv, q)?;
    let ratio = np / nq;
    let grad = (grad_norm(p) - ratio * grad_norm(q)) / nq;

    // Project onto null(A_L) via the SVD of A_L.
    let a_sub = inst.submatrix_for_support(&support);
    let svd = a_sub.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let mut projected = grad.clone();
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > 1e-12 * smax.max(1.0) {
            let row = v_t.row(k).transpose();
            let coeff = row.dot(&grad);
            projected -= coeff * row;
        }
    }
    Ok(ConstrainedStationarityReport {
        feasibility,
        projected_residual: stats.l2 * projected.norm(),
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn example1(gamma: f64) -> ProblemInstance {
        ProblemInstance::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_column_slice(&[1.0]),
            Some(gamma),
            Cone::Free,
            ModelKind::Unconstrained,
            1.0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn residual_example1_stationary_points() {
        let inst = example1(1.0);
        let x = SignalVector::from_slice(&[1.0, 0.0]).unwrap();
        let rep = first_order_residual(&inst, &x, 1e-8).unwrap();
        assert_eq!(rep.residual, 0.0);
        assert_relative_eq!(rep.off_support_margin.unwrap(), 1.0);

        let x = SignalVector::from_slice(&[0.5, 0.5]).unwrap();
        let rep = first_order_residual(&inst, &x, 1e-8).unwrap();
        assert!(rep.residual < 1e-14);
        assert_eq!(rep.off_support_margin, None);

        let x = SignalVector::from_slice(&[1.0, 1.0]).unwrap();
        let rep = first_order_residual(&inst, &x, 1e-8).unwrap();
        assert_relative_eq!(rep.residual, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn certify_example1_verdicts() {
        let inst = example1(1.0);

        let x = SignalVector::from_slice(&[1.0, 0.0]).unwrap();
        let cert = certify_local_minimizer(&inst, &x, DEFAULT_TOL_FO, DEFAULT_TOL_SO, 1e-8).unwrap();
        assert_eq!(cert.verdict, Verdict::LocalMinimizer);
        assert_relative_eq!(cert.min_hessian_eig.unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(cert.off_support_margin.unwrap(), 1.0);

        let x = SignalVector::from_slice(&[0.0, 1.0]).unwrap();
        let cert = certify_local_minimizer(&inst, &x, DEFAULT_TOL_FO, DEFAULT_TOL_SO, 1e-8).unwrap();
        assert_eq!(cert.verdict, Verdict::LocalMinimizer);

        let x = SignalVector::from_slice(&[0.5, 0.5]).unwrap();
        let cert = certify_local_minimizer(&inst, &x, DEFAULT_TOL_FO, DEFAULT_TOL_SO, 1e-8).unwrap();
        assert_eq!(cert.verdict, Verdict::StationaryNotMinimizer);
        assert_relative_eq!(
            cert.min_hessian_eig.unwrap(),
            -2.0 * 2f64.sqrt(),
            epsilon = 1e-10
        );

        let x = SignalVector::from_slice(&[1.0, 1.0]).unwrap();
        let cert = certify_local_minimizer(&inst, &x, DEFAULT_TOL_FO, DEFAULT_TOL_SO, 1e-8).unwrap();
        assert_eq!(cert.verdict, Verdict::NotStationary);
        assert_eq!(cert.min_hessian_eig, None);
    }

    #[test]
    fn stationarity_identity_at_certified_points() {
        // x_L^T (A_L^T A_L x_L - A_L^T b) = 0 follows from the first-order
        // condition and the ratio term's zero inner product with x_L.
        let inst = example1(1.0);
        for point in [[1.0, 0.0], [0.0, 1.0]] {
            let x = SignalVector::from_slice(&point).unwrap();
            let rep = first_order_residual(&inst, &x, 1e-8).unwrap();
            assert!(rep.residual <= DEFAULT_TOL_FO);
            let y = DVector::from_iterator(rep.support.len(), rep.support.iter().map(|&i| x[i]));
            let a_sub = inst.submatrix_for_support(&rep.support);
            let lhs = y.dot(&(a_sub.transpose() * (&a_sub * &y) - a_sub.transpose() * inst.rhs()));
            assert!(lhs.abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_point_and_wrong_model_rejected() {
        let inst = example1(1.0);
        let zero = SignalVector::from_slice(&[0.0, 0.0]).unwrap();
        assert_eq!(
            first_order_residual(&inst, &zero, 1e-8).unwrap_err(),
            StationarityError::ZeroPoint
        );
        let constrained = ProblemInstance::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_column_slice(&[1.0]),
            None,
            Cone::Free,
            ModelKind::Constrained,
            1.0,
            2.0,
        )
        .unwrap();
        let x = SignalVector::from_slice(&[1.0, 0.0]).unwrap();
        assert!(matches!(
            certify_local_minimizer(&constrained, &x, 1e-9, 1e-8, 1e-8).unwrap_err(),
            StationarityError::WrongModel(_)
        ));
    }

    #[test]
    fn nonneg_cone_margin_is_one_sided() {
        // A = I2, b = (1, -1), nonneg cone: at x = (1, 0) the zero coordinate
        // sees correlation [A^T(Ax-b)]_2 = 1 > 0, margin gamma/r + 1.
        let inst = ProblemInstance::new(
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[1.0, -1.0]),
            Some(0.5),
            Cone::NonNegative,
            ModelKind::Unconstrained,
            1.0,
            2.0,
        )
        .unwrap();
        let x = SignalVector::from_slice(&[1.0, 0.0]).unwrap();
        let rep = first_order_residual(&inst, &x, 1e-8).unwrap();
        assert_relative_eq!(rep.off_support_margin.unwrap(), 0.5 + 1.0);
    }

    #[test]
    fn constrained_stationarity_scale_invariant() {
        // Feasible direction space at a reduction vertex is trivial, so the
        // projected residual vanishes; scaling the point must not change the
        // classification-relevant value.
        let a = DMatrix::from_row_slice(3, 4, &[
            1.0, 1.0, -1.0, -1.0,
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
        ]);
        let inst = ProblemInstance::new(
            a,
            DVector::from_column_slice(&[0.0, 1.0, 1.0]),
            None,
            Cone::NonNegative,
            ModelKind::Constrained,
            1.0,
            2.0,
        )
        .unwrap();
        let x = SignalVector::from_slice(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        let base = constrained_stationarity(&inst, &x, 1e-8).unwrap();
        assert!(base.projected_residual < 1e-12);
        assert_eq!(base.feasibility, 0.0);
        for c in [0.1, 7.0] {
            let scaled: Vec<f64> = x.as_slice().iter().map(|v| c * v).collect();
            let xs = SignalVector::from_slice(&scaled).unwrap();
            let rep = constrained_stationarity(&inst, &xs, 1e-8).unwrap();
            assert!(rep.projected_residual < 1e-12);
        }
    }
}
