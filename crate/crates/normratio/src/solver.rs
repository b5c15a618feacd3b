//! Sign-fixed descent for the unconstrained model, deterministic multistart,
//! and the exact vertex-scan global oracle for the reduction family.

use nalgebra::DVector;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{l2_ball_radii, BoundsError};
use crate::model::{Cone, ModelError, ModelKind, ProblemInstance, SignalVector};
use crate::reduction::{ReductionBundle, ReductionKind};
use crate::stationarity::{
    certify_local_minimizer, MinimizerCertificate, StationarityError, DEFAULT_TOL_FO,
    DEFAULT_TOL_SO,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver options: {0}")]
    BadOptions(String),
    #[error("objective increased beyond line-search tolerance at iteration {iteration}")]
    DivergenceDetected { iteration: usize },
    #[error("iterate collapsed to the zero vector")]
    ZeroCollapse,
    #[error("enumeration budget exceeded: {detail}")]
    BudgetExceeded { detail: String },
    #[error("oracle scope: {0}")]
    OracleScope(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stationarity(#[from] StationarityError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Knobs of the sign-fixed descent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub step_init: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub stop_residual: f64,
    /// Entries at or below this magnitude are truncated to exact zero.
    pub support_freeze_tol: f64,
    /// Stream seed for randomized start generation; [`multistart_solve`]'s
    /// explicit argument takes precedence.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            step_init: 1.0,
            armijo_c: 1e-4,
            backtrack: 0.5,
            stop_residual: 1e-9,
            support_freeze_tol: 1e-10,
            seed: 0,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("step_init", self.step_init),
            ("armijo_c", self.armijo_c),
            ("stop_residual", self.stop_residual),
            ("support_freeze_tol", self.support_freeze_tol),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(SolverError::BadOptions(format!(
                    "{name} = {value} must be positive"
                )));
            }
        }
        if !self.backtrack.is_finite() || self.backtrack <= 0.0 || self.backtrack >= 1.0 {
            return Err(SolverError::BadOptions(format!(
                "backtrack = {} must lie in (0, 1)",
                self.backtrack
            )));
        }
        if self.max_iters == 0 {
            return Err(SolverError::BadOptions("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration solver state snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
    pub support_size: usize,
}

/// Support shrink event: `(iteration, from, to)` sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportEvent {
    pub iteration: usize,
    pub from: usize,
    pub to: usize,
}

/// Iteration history of one local solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub support_events: Vec<SupportEvent>,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn objective_history(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }

    /// One JSON object per iteration, newline separated.
    pub fn to_json_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain struct"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Result of one local solve: the final point, its iteration history, and an
/// independently computed certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub point: SignalVector,
    pub trace: SolveTrace,
    pub certificate: MinimizerCertificate,
}

struct Objective<'a> {
    inst: &'a ProblemInstance,
    gamma: f64,
}

impl Objective<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let a = x.iter().map(|v| v.abs()).sum::<f64>();
        let r = x.norm();
        let resid = self.inst.matrix() * x - self.inst.rhs();
        self.gamma * a / r + 0.5 * resid.norm_squared()
    }
}

/// Sign-fixed gradient descent with Armijo backtracking on the smooth region
/// of the current sign pattern. A coordinate crossing zero is truncated to
/// exact zero and the support shrinks; supports never regrow within a run
/// (multistart handles regrowth). Terminates once the support-restricted
/// first-order residual drops to `stop_residual`, or at `max_iters`.
pub fn solve_local(
    inst: &ProblemInstance,
    x0: &SignalVector,
    opts: &SolverOptions,
) -> Result<SolveOutcome, SolverError> {
    opts.validate()?;
    let gamma = crate::stationarity::require_l1l2_unconstrained(inst)?;
    if x0.len() != inst.cols() {
        return Err(ModelError::DimensionMismatch(format!(
            "start has length {}, instance has n = {}",
            x0.len(),
            inst.cols()
        ))
        .into());
    }
    if !x0.in_cone(inst.cone(), 0.0) {
        let (i, &v) = x0
            .as_vector()
            .iter()
            .enumerate()
            .find(|(_, &v)| v < 0.0)
            .expect("cone violation has a witness");
        return Err(ModelError::ConeViolation { index: i, value: v }.into());
    }

    let objective = Objective { inst, gamma };
    let mut x = x0.as_vector().clone();
    for v in x.iter_mut() {
        if v.abs() <= opts.support_freeze_tol {
            *v = 0.0;
        }
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(SolverError::ZeroCollapse);
    }

    let mut records = Vec::new();
    let mut support_events = Vec::new();
    let mut obj = objective.value(&x);
    // Spectral (Barzilai-Borwein) step proposal, reset on support changes;
    // Armijo backtracking below keeps every accepted step a descent step.
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None; // (x, grad)
    let mut proposed_step = opts.step_init;

    for iteration in 0..=opts.max_iters {
        let support: Vec<usize> = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        if support.is_empty() {
            return Err(SolverError::ZeroCollapse);
        }
        let a = x.iter().map(|v| v.abs()).sum::<f64>();
        let r = x.norm();
        let correlation = inst.matrix().transpose() * (inst.matrix() * &x - inst.rhs());
        let mut grad = DVector::zeros(x.len());
        for &i in &support {
            grad[i] = gamma * (x[i].signum() / r - a * x[i] / (r * r * r)) + correlation[i];
        }
        let residual = grad.norm();
        records.push(TraceRecord {
            iteration,
            objective: obj,
            residual,
            support_size: support.len(),
        });
        if residual <= opts.stop_residual || iteration == opts.max_iters {
            break;
        }

        let mut step = match &prev {
            Some((px, pg)) => {
                let dx = &x - px;
                let dg = &grad - pg;
                let denom = dx.dot(&dg);
                if denom > 0.0 {
                    (dx.norm_squared() / denom).clamp(1e-12, 1e12)
                } else {
                    proposed_step
                }
            }
            None => proposed_step,
        };
        prev = Some((x.clone(), grad.clone()));
        let mut accepted = false;
        while step >= 1e-20 {
            let mut trial = x.clone();
            for &i in &support {
                trial[i] = x[i] - step * grad[i];
                // Zero-crossing truncation keeps the iterate inside one
                // sign-fixed region.
                if trial[i] * x[i] < 0.0 || trial[i].abs() <= opts.support_freeze_tol {
                    trial[i] = 0.0;
                }
                if inst.cone() == Cone::NonNegative && trial[i] < 0.0 {
                    trial[i] = 0.0;
                }
            }
            if trial.iter().all(|&v| v == 0.0) {
                step *= opts.backtrack;
                continue;
            }
            let trial_obj = objective.value(&trial);
            if trial_obj <= obj - opts.armijo_c * step * residual * residual {
                if trial_obj > obj + 1e-12 * obj.abs().max(1.0) {
                    return Err(SolverError::DivergenceDetected { iteration });
                }
                let new_support = trial.iter().filter(|&&v| v != 0.0).count();
                if new_support < support.len() {
                    support_events.push(SupportEvent {
                        iteration: iteration + 1,
                        from: support.len(),
                        to: new_support,
                    });
                    // The spectral pair straddles two smooth regions; drop it.
                    prev = None;
                }
                x = trial;
                obj = trial_obj;
                proposed_step = (step * 2.0).min(opts.step_init.max(1.0));
                accepted = true;
                break;
            }
            step *= opts.backtrack;
        }
        if !accepted {
            // Line search hit machine precision without progress; the point
            // is as stationary as this arithmetic can make it.
            break;
        }
    }

    let point = SignalVector::new(x).expect("finite iterate");
    let certificate = certify_local_minimizer(
        inst,
        &point,
        DEFAULT_TOL_FO,
        DEFAULT_TOL_SO,
        crate::model::DEFAULT_SUPPORT_REL_TOL,
    )?;
    Ok(SolveOutcome {
        point,
        trace: SolveTrace {
            records,
            support_events,
        },
        certificate,
    })
}

/// A deduplicated multistart result entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedPoint {
    pub point: SignalVector,
    pub objective: f64,
    pub certificate: MinimizerCertificate,
}

fn lexicographic_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Runs `n_starts` local solves from deterministic starts and returns the
/// distinct certified points, best objective first.
///
/// Start `k` draws from a counter-split ChaCha stream (`seed` keyed, stream
/// `k`), samples a standard Gaussian vector and projects it to the cone.
/// Even starts are scaled onto the uniform-ball radius; odd starts keep their
/// natural Gaussian scale, clipped at that radius (the ball bound can exceed
/// the minimizer scale by orders of magnitude, and supports shrink fast from
/// very distant starts). Failed runs (zero collapse) are skipped; the result
/// is empty only if every run fails.
pub fn multistart_solve(
    inst: &ProblemInstance,
    n_starts: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<CertifiedPoint>, SolverError> {
    crate::stationarity::require_l1l2_unconstrained(inst)?;
    let radius = l2_ball_radii(inst, None)?
        .unconstrained_uniform_i
        .expect("unconstrained instance");
    let n = inst.cols();

    let mut outcomes: Vec<CertifiedPoint> = Vec::new();
    for k in 0..n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut draw: DVector<f64> = DVector::zeros(n);
        loop {
            for v in draw.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            if draw.norm() > 0.0 {
                break;
            }
        }
        let scale = if k % 2 == 0 {
            radius / draw.norm()
        } else {
            (radius / draw.norm()).min(1.0)
        };
        let mut x0: DVector<f64> = draw * scale;
        if inst.cone() == Cone::NonNegative {
            for v in x0.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        let x0 = match SignalVector::new(x0) {
            Ok(v) if !v.is_zero() => v,
            _ => continue, // all-negative draw projected to zero
        };
        match solve_local(inst, &x0, opts) {
            Ok(out) => {
                let objective = crate::model::objective_value(inst, &out.point)?;
                outcomes.push(CertifiedPoint {
                    point: out.point,
                    objective,
                    certificate: out.certificate,
                });
            }
            Err(SolverError::ZeroCollapse) | Err(SolverError::DivergenceDetected { .. }) => {
                continue;
            }
            Err(e) => return Err(e),
        }
    }

    outcomes.sort_by(|a, b| {
        a.objective
            .total_cmp(&b.objective)
            .then_with(|| {
                if lexicographic_less(a.point.as_slice(), b.point.as_slice()) {
                    std::cmp::Ordering::Less
                } else if lexicographic_less(b.point.as_slice(), a.point.as_slice()) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
    });
    let mut unique: Vec<CertifiedPoint> = Vec::new();
    for candidate in outcomes {
        let duplicate = unique.iter().any(|kept| {
            (kept.point.as_vector() - candidate.point.as_vector()).norm() <= 1e-6
        });
        if !duplicate {
            unique.push(candidate);
        }
    }
    Ok(unique)
}

/// Exact global answer for a reduction-family constrained instance over the
/// nonnegative cone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalOracleResult {
    pub global_value: f64,
    pub argmin: Vec<f64>,
    pub method: String,
    pub vertices_scanned: usize,
}

const PARTITION_VERTEX_BUDGET: usize = 20; // n <= 20
const BFS_BASIS_BUDGET: u128 = 200_000; // C(n*m, n+m-1) bases

/// Exact global minimum of a constrained nonnegative reduction instance by
/// vertex enumeration.
///
/// On the feasible polytope the numerator `||u||_p` is concave and the
/// denominator `||u||_q` convex, so the ratio is quasiconcave and its minimum
/// sits at a vertex; scanning all vertices is therefore exact. Partition
/// instances use the closed-form vertex description (0/1 pattern with at most
/// one fractional pair); 3-partition instances enumerate basic feasible
/// solutions of the equality system in exact rational arithmetic.
pub fn global_oracle_partition_polytope(
    bundle: &ReductionBundle,
) -> Result<GlobalOracleResult, SolverError> {
    let inst = bundle.instance();
    if inst.model() != ModelKind::Constrained {
        return Err(SolverError::OracleScope(
            "vertex scan applies to the constrained model".into(),
        ));
    }
    if inst.cone() != Cone::NonNegative {
        return Err(SolverError::OracleScope(
            "vertex scan applies to the nonnegative cone".into(),
        ));
    }
    match bundle.spec().kind() {
        ReductionKind::Partition => partition_vertex_scan(bundle),
        ReductionKind::ThreePartition => three_partition_bfs_scan(bundle),
    }
}

struct Best {
    value: f64,
    point: Vec<f64>,
}

impl Best {
    fn consider(&mut self, value: f64, point: Vec<f64>) {
        if value < self.value
            || (value == self.value && lexicographic_less(&point, &self.point))
        {
            self.value = value;
            self.point = point;
        }
    }
}

fn ratio_value(u: &[f64], p: f64, q: f64) -> f64 {
    let x = SignalVector::from_slice(u).expect("finite vertex");
    crate::model::pnorm(&x, p).expect("valid p") / crate::model::pnorm(&x, q).expect("valid q")
}

fn partition_vertex_scan(bundle: &ReductionBundle) -> Result<GlobalOracleResult, SolverError> {
    let spec = bundle.spec();
    let n = spec.n();
    if n > PARTITION_VERTEX_BUDGET {
        return Err(SolverError::BudgetExceeded {
            detail: format!("partition vertex scan capped at n = {PARTITION_VERTEX_BUDGET}, got {n}"),
        });
    }
    let weights = spec.weights();
    let total: BigRational = weights.iter().sum();
    let target = &total / BigRational::from_integer(BigInt::from(2));
    let (p, q) = (bundle.instance().p(), bundle.instance().q());

    let mut scan = PartitionScan {
        weights,
        target: &target,
        p,
        q,
        pattern: vec![0u8; n],
        best: Best {
            value: f64::INFINITY,
            point: Vec::new(),
        },
        scanned: 0,
    };
    scan.dfs(0, BigRational::zero());

    debug_assert!(scan.best.value.is_finite(), "partition polytope is never empty");
    Ok(GlobalOracleResult {
        global_value: scan.best.value,
        argmin: scan.best.point,
        method: "partition-vertex-scan".into(),
        vertices_scanned: scan.scanned,
    })
}

/// DFS over 0/1 patterns with a running exact sum; each leaf is checked as an
/// integral vertex and as the 0/1 part of every one-fractional vertex.
struct PartitionScan<'a> {
    weights: &'a [BigRational],
    target: &'a BigRational,
    p: f64,
    q: f64,
    pattern: Vec<u8>,
    best: Best,
    scanned: usize,
}

impl PartitionScan<'_> {
    fn dfs(&mut self, i: usize, sum: BigRational) {
        let n = self.weights.len();
        if i == n {
            if sum == *self.target {
                self.scanned += 1;
                let u = build_partition_point(&self.pattern, None, n);
                let value = ratio_value(&u, self.p, self.q);
                self.best.consider(value, u);
            }
            // One fractional pair: coordinate j not taken, with
            // x_j = (target - sum) / w_j strictly inside (0, 1).
            let rem = self.target - &sum;
            if rem.is_positive() {
                for j in 0..n {
                    if self.pattern[j] == 0 && rem < self.weights[j] {
                        self.scanned += 1;
                        let t = (&rem / &self.weights[j]).to_f64().expect("finite rational");
                        let u = build_partition_point(&self.pattern, Some((j, t)), n);
                        let value = ratio_value(&u, self.p, self.q);
                        self.best.consider(value, u);
                    }
                }
            }
            return;
        }
        self.pattern[i] = 0;
        self.dfs(i + 1, sum.clone());
        let with = sum + &self.weights[i];
        if with <= *self.target {
            self.pattern[i] = 1;
            self.dfs(i + 1, with);
            self.pattern[i] = 0;
        }
    }
}

fn build_partition_point(pattern: &[u8], fractional: Option<(usize, f64)>, n: usize) -> Vec<f64> {
    let mut u = vec![0.0; 2 * n];
    for i in 0..n {
        let x = match fractional {
            Some((j, t)) if j == i => t,
            _ => pattern[i] as f64,
        };
        u[i] = x;
        u[n + i] = 1.0 - x;
    }
    u
}

fn binomial_capped(n: usize, k: usize, cap: u128) -> Option<u128> {
    let k = k.min(n - k.min(n));
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.checked_mul((n - i) as u128)?;
        result /= (i + 1) as u128;
        if result > cap {
            return None;
        }
    }
    Some(result)
}

fn three_partition_bfs_scan(bundle: &ReductionBundle) -> Result<GlobalOracleResult, SolverError> {
    let spec = bundle.spec();
    let n = spec.n();
    let m = spec.bins().expect("three-partition spec");
    let cols = n * m;
    // The equality system always carries exactly one dependency, so its rank
    // is n + m - 1.
    let rank = n + m - 1;
    if binomial_capped(cols, rank, BFS_BASIS_BUDGET).is_none() {
        return Err(SolverError::BudgetExceeded {
            detail: format!("C({cols}, {rank}) bases exceed {BFS_BASIS_BUDGET}"),
        });
    }

    // Exact rational constraint data.
    let one = BigRational::one();
    let kappa = spec.kappa().expect("three-partition spec").clone();
    let weights = spec.weights();
    let rows = n + m;
    let mut matrix = vec![vec![BigRational::zero(); cols]; rows];
    for i in 0..n {
        for j in 0..m {
            matrix[i][j * n + i] = one.clone();
        }
    }
    for j in 0..m {
        for i in 0..n {
            matrix[n + j][j * n + i] = weights[i].clone();
        }
    }
    let mut rhs = vec![one.clone(); rows];
    for j in 0..m {
        rhs[n + j] = kappa.clone();
    }

    let (p, q) = (bundle.instance().p(), bundle.instance().q());
    let mut best = Best {
        value: f64::INFINITY,
        point: Vec::new(),
    };
    let mut scanned = 0usize;

    let mut combo: Vec<usize> = (0..rank).collect();
    loop {
        if let Some(solution) = solve_basis(&matrix, &rhs, &combo) {
            if solution.iter().all(|v| !v.is_negative()) {
                scanned += 1;
                let mut u = vec![0.0; cols];
                for (slot, &col) in combo.iter().enumerate() {
                    u[col] = solution[slot].to_f64().expect("finite rational");
                }
                let value = ratio_value(&u, p, q);
                best.consider(value, u);
            }
        }
        if !next_combination(&mut combo, cols) {
            break;
        }
    }

    debug_assert!(best.value.is_finite(), "3-partition polytope is never empty");
    Ok(GlobalOracleResult {
        global_value: best.value,
        argmin: best.point,
        method: "three-partition-bfs-scan".into(),
        vertices_scanned: scanned,
    })
}

/// Solves the overdetermined system `M[:, basis] w = rhs` exactly. Returns
/// `None` when the basis columns are dependent or the system is inconsistent.
fn solve_basis(
    matrix: &[Vec<BigRational>],
    rhs: &[BigRational],
    basis: &[usize],
) -> Option<Vec<BigRational>> {
    let rows = matrix.len();
    let k = basis.len();
    let mut aug: Vec<Vec<BigRational>> = (0..rows)
        .map(|r| {
            let mut row: Vec<BigRational> =
                basis.iter().map(|&c| matrix[r][c].clone()).collect();
            row.push(rhs[r].clone());
            row
        })
        .collect();

    let mut pivot_row = 0usize;
    for col in 0..k {
        let Some(src) = (pivot_row..rows).find(|&r| !aug[r][col].is_zero()) else {
            return None; // dependent basis columns
        };
        aug.swap(pivot_row, src);
        let inv = aug[pivot_row][col].recip();
        for entry in aug[pivot_row].iter_mut() {
            *entry *= inv.clone();
        }
        let pivot = aug[pivot_row].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != pivot_row && !row[col].is_zero() {
                let factor = row[col].clone();
                for (entry, piv) in row.iter_mut().zip(&pivot).skip(col) {
                    *entry -= &factor * piv;
                }
            }
        }
        pivot_row += 1;
    }
    // Remaining rows must be 0 = 0 for consistency.
    if aug[pivot_row..].iter().any(|row| !row[k].is_zero()) {
        return None;
    }
    Some((0..k).map(|i| aug[i][k].clone()).collect())
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - (k - i) {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::objective_value;
    use crate::reduction::{encode_partition, PartitionSpec};
    use crate::stationarity::Verdict;
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

    fn rationals(values: &[i64]) -> Vec<BigRational> {
        values
            .iter()
            .map(|&v| BigRational::from_integer(BigInt::from(v)))
            .collect()
    }

    #[test]
    fn solve_example1_basins() {
        let inst = example1(1.0);
        let opts = SolverOptions::default();

        let out = solve_local(&inst, &SignalVector::from_slice(&[0.9, 0.1]).unwrap(), &opts)
            .unwrap();
        assert_eq!(out.certificate.verdict, Verdict::LocalMinimizer);
        assert_relative_eq!(out.point[0], 1.0, epsilon = 1e-7);
        assert!(out.point[1].abs() < 1e-12);

        let out = solve_local(&inst, &SignalVector::from_slice(&[0.1, 0.9]).unwrap(), &opts)
            .unwrap();
        assert!(out.point[0].abs() < 1e-12);
        assert_relative_eq!(out.point[1], 1.0, epsilon = 1e-7);

        // Exactly stationary start: terminates immediately, not a minimizer.
        let out = solve_local(&inst, &SignalVector::from_slice(&[0.5, 0.5]).unwrap(), &opts)
            .unwrap();
        assert_eq!(out.point.as_slice(), &[0.5, 0.5]);
        assert_eq!(out.certificate.verdict, Verdict::StationaryNotMinimizer);
        assert_eq!(out.trace.iterations(), 0);
    }

    #[test]
    fn objective_history_nonincreasing() {
        let inst = example1(1.0);
        let opts = SolverOptions::default();
        let out = solve_local(&inst, &SignalVector::from_slice(&[0.7, 0.25]).unwrap(), &opts)
            .unwrap();
        let history: Vec<f64> = out.trace.objective_history().collect();
        for pair in history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
        }
        assert!(!out.trace.to_json_lines().is_empty());
    }

    #[test]
    fn solver_options_validated() {
        let inst = example1(1.0);
        let start = SignalVector::from_slice(&[0.7, 0.2]).unwrap();
        for (patch, _label) in [
            (SolverOptions { backtrack: 1.0, ..SolverOptions::default() }, "backtrack"),
            (SolverOptions { step_init: 0.0, ..SolverOptions::default() }, "step_init"),
            (SolverOptions { max_iters: 0, ..SolverOptions::default() }, "max_iters"),
            (SolverOptions { stop_residual: -1.0, ..SolverOptions::default() }, "stop"),
        ] {
            assert!(matches!(
                solve_local(&inst, &start, &patch).unwrap_err(),
                SolverError::BadOptions(_)
            ));
        }
    }

    #[test]
    fn solve_rejects_zero_start_and_cone_violation() {
        let inst = example1(1.0);
        let opts = SolverOptions::default();
        let zero = SignalVector::from_slice(&[0.0, 0.0]).unwrap();
        assert!(matches!(
            solve_local(&inst, &zero, &opts).unwrap_err(),
            SolverError::ZeroCollapse
        ));
        let nn = ProblemInstance::new(
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[1.0, 1.0]),
            Some(1.0),
            Cone::NonNegative,
            ModelKind::Unconstrained,
            1.0,
            2.0,
        )
        .unwrap();
        let bad = SignalVector::from_slice(&[-0.5, 1.0]).unwrap();
        assert!(matches!(
            solve_local(&nn, &bad, &opts).unwrap_err(),
            SolverError::Model(ModelError::ConeViolation { .. })
        ));
    }

    #[test]
    fn multistart_example1_finds_both_minimizers() {
        let inst = example1(1.0);
        let opts = SolverOptions::default();
        let points = multistart_solve(&inst, 32, 7, &opts).unwrap();
        let minimizers: Vec<&CertifiedPoint> = points
            .iter()
            .filter(|c| c.certificate.verdict == Verdict::LocalMinimizer)
            .collect();
        assert_eq!(minimizers.len(), 2, "points: {:?}", points.len());
        assert_relative_eq!(minimizers[0].objective, 1.0, epsilon = 1e-9);
        assert_relative_eq!(minimizers[1].objective, 1.0, epsilon = 1e-9);
        let mut hit_first = false;
        let mut hit_second = false;
        for c in &minimizers {
            if (c.point[0] - 1.0).abs() < 1e-6 && c.point[1].abs() < 1e-6 {
                hit_first = true;
            }
            if (c.point[1] - 1.0).abs() < 1e-6 && c.point[0].abs() < 1e-6 {
                hit_second = true;
            }
        }
        assert!(hit_first && hit_second);
        // Best objective first.
        for pair in points.windows(2) {
            assert!(pair[0].objective <= pair[1].objective);
        }
    }

    #[test]
    fn multistart_is_deterministic() {
        let inst = example1(1.0);
        let opts = SolverOptions::default();
        let run1 = multistart_solve(&inst, 16, 123, &opts).unwrap();
        let run2 = multistart_solve(&inst, 16, 123, &opts).unwrap();
        assert_eq!(run1.len(), run2.len());
        for (a, b) in run1.iter().zip(&run2) {
            assert_eq!(a.point.as_slice(), b.point.as_slice());
            assert_eq!(a.objective, b.objective);
        }
    }

    #[test]
    fn large_gamma_forces_one_sparse_minimizers() {
        let inst = ProblemInstance::new(
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[1.0, 1.0]),
            Some(10.0),
            Cone::Free,
            ModelKind::Unconstrained,
            1.0,
            2.0,
        )
        .unwrap();
        let opts = SolverOptions::default();
        let points = multistart_solve(&inst, 24, 3, &opts).unwrap();
        for c in points
            .iter()
            .filter(|c| c.certificate.verdict == Verdict::LocalMinimizer)
        {
            let nnz = c.point.as_slice().iter().filter(|&&v| v != 0.0).count();
            assert_eq!(nnz, 1, "point {:?}", c.point.as_slice());
        }
    }

    #[test]
    fn every_returned_minimizer_recertifies() {
        let inst = example1(1.0);
        let opts = SolverOptions::default();
        for c in multistart_solve(&inst, 16, 5, &opts).unwrap() {
            let again = certify_local_minimizer(
                &inst,
                &c.point,
                DEFAULT_TOL_FO,
                DEFAULT_TOL_SO,
                crate::model::DEFAULT_SUPPORT_REL_TOL,
            )
            .unwrap();
            assert_eq!(again.verdict, c.certificate.verdict);
        }
    }

    /// Fixed-seed statistical invariant: on corpus bundles with a known
    /// equitable partition, 64-start multistart reaches the oracle value.
    #[test]
    fn multistart_reaches_oracle_value_on_corpus_bundles() {
        let opts = SolverOptions::default();
        for weights in [vec![1i64, 1], vec![3, 1, 1, 2, 2, 1]] {
            let spec = PartitionSpec::partition(rationals(&weights)).unwrap();
            let bundle =
                encode_partition(&spec, ModelKind::Unconstrained, Cone::NonNegative, 1.0, 2.0)
                    .unwrap();
            let points = multistart_solve(bundle.instance(), 64, 0, &opts).unwrap();
            let best = points
                .iter()
                .filter(|c| c.certificate.verdict == Verdict::LocalMinimizer)
                .map(|c| c.objective)
                .fold(f64::INFINITY, f64::min);
            assert!(
                (best - bundle.expected_value()).abs() <= 1e-6,
                "weights {weights:?}: best {best} vs {}",
                bundle.expected_value()
            );
        }
    }

    #[test]
    fn oracle_two_unit_weights() {
        let spec = PartitionSpec::partition(rationals(&[1, 1])).unwrap();
        let bundle =
            encode_partition(&spec, ModelKind::Constrained, Cone::NonNegative, 1.0, 2.0).unwrap();
        let result = global_oracle_partition_polytope(&bundle).unwrap();
        assert_relative_eq!(result.global_value, 2f64.sqrt(), epsilon = 1e-12);
        // Lexicographically smallest optimal vertex.
        assert_eq!(result.argmin, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn oracle_no_partition_strictly_above_floor() {
        let spec = PartitionSpec::partition(rationals(&[1, 1, 3])).unwrap();
        let bundle =
            encode_partition(&spec, ModelKind::Constrained, Cone::NonNegative, 1.0, 2.0).unwrap();
        let result = global_oracle_partition_polytope(&bundle).unwrap();
        assert!(result.global_value > 3f64.sqrt() + 1e-9);
        // The optimum splits weight 3 across the pair (fractional vertex).
        let x = SignalVector::from_slice(&result.argmin).unwrap();
        assert_relative_eq!(
            objective_value(bundle.instance(), &x).unwrap(),
            result.global_value,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            crate::model::feasibility_residual(bundle.instance(), &x).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn oracle_six_weights_partition() {
        let spec = PartitionSpec::partition(rationals(&[3, 1, 1, 2, 2, 1])).unwrap();
        let bundle =
            encode_partition(&spec, ModelKind::Constrained, Cone::NonNegative, 1.0, 2.0).unwrap();
        let result = global_oracle_partition_polytope(&bundle).unwrap();
        assert_relative_eq!(result.global_value, 6f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn oracle_three_partition_equitable() {
        let spec = PartitionSpec::three_partition(rationals(&[25, 26, 39, 30, 33, 27]), 2, None)
            .unwrap();
        let bundle = crate::reduction::encode_three_partition(
            &spec,
            ModelKind::Constrained,
            Cone::NonNegative,
            1.0,
            2.0,
        )
        .unwrap();
        let result = global_oracle_partition_polytope(&bundle).unwrap();
        assert_relative_eq!(result.global_value, 6f64.sqrt(), epsilon = 1e-12);
        let x = SignalVector::from_slice(&result.argmin).unwrap();
        let witness = crate::reduction::extract_partition(&x, &spec, 1e-9).unwrap();
        assert!(witness.is_some(), "optimal vertex should round to an assignment");
    }

    #[test]
    fn oracle_rejects_wrong_scope_and_budget() {
        let spec = PartitionSpec::partition(rationals(&[1, 1])).unwrap();
        let bundle =
            encode_partition(&spec, ModelKind::Constrained, Cone::Free, 1.0, 2.0).unwrap();
        assert!(matches!(
            global_oracle_partition_polytope(&bundle).unwrap_err(),
            SolverError::OracleScope(_)
        ));
        let spec = PartitionSpec::partition(rationals(&[1; 24])).unwrap();
        let bundle =
            encode_partition(&spec, ModelKind::Constrained, Cone::NonNegative, 1.0, 2.0).unwrap();
        assert!(matches!(
            global_oracle_partition_polytope(&bundle).unwrap_err(),
            SolverError::BudgetExceeded { .. }
        ));
    }

    #[test]
    fn combination_iterator_is_exhaustive() {
        let mut combo = vec![0usize, 1, 2];
        let mut count = 1;
        while next_combination(&mut combo, 5) {
            count += 1;
        }
        assert_eq!(count, 10); // C(5,3)
    }
}
