//! Batch entry point: encode reduction instances, solve, certify, audit
//! bounds, export spectra, and verify optimal-value equivalences.
//!
//! Exit codes: 0 success or PASS, 1 audit violation or verification FAIL,
//! 2 input error, 3 enumeration budget exceeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use normratio::{
    audit_point, certify_local_minimizer, entry_bound_report, multistart_solve, objective_value,
    parse_rational, parse_weights, partition_oracle, q_matrix_spectrum, sigma_min_nonzero,
    solve_local, support_and_stats, validate_instance, verify_reduction, Cone, Error as LibError,
    InstanceJson, MinimizerCertificate, ModelKind, PartitionSpec, ProblemInstance, ReductionKind,
    SignalVector, SolverOptions, Verdict, DEFAULT_SUPPORT_REL_TOL, DEFAULT_TOL_FO, DEFAULT_TOL_SO,
};

#[derive(Parser)]
#[command(name = "normratio", version, about = "Norm-ratio sparsity models: certification, bounds, reductions")]
struct Cli {
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format. CSV applies to the audit table of `bounds` only.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Omit the timestamp so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConeArg {
    Free,
    Nonneg,
}

impl From<ConeArg> for Cone {
    fn from(value: ConeArg) -> Self {
        match value {
            ConeArg::Free => Cone::Free,
            ConeArg::Nonneg => Cone::NonNegative,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Constrained,
    Unconstrained,
}

impl From<ModelArg> for ModelKind {
    fn from(value: ModelArg) -> Self {
        match value {
            ModelArg::Constrained => ModelKind::Constrained,
            ModelArg::Unconstrained => ModelKind::Unconstrained,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Partition,
    #[value(name = "3partition")]
    ThreePartition,
}

#[derive(Args)]
struct ReductionArgs {
    /// Comma-separated positive rational weights, e.g. "25,26,39" or "1/2,3/4".
    #[arg(long)]
    weights: String,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Bin count m (3-partition only).
    #[arg(long)]
    bins: Option<usize>,
    /// Per-bin target kappa as a rational (3-partition only; inferred when omitted).
    #[arg(long)]
    kappa: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a partition/3-partition instance as a ratio-sparsity problem.
    Encode {
        #[command(flatten)]
        reduction: ReductionArgs,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum)]
        cone: ConeArg,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
    },
    /// Run the local solver: seeded multistart, or a single descent from --point.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Start point as CSV (or @path); switches to single-solve mode.
        #[arg(long)]
        point: Option<String>,
        #[arg(long, default_value_t = 32)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop residual for the descent.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Override the instance's penalty weight (unconstrained only).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Certify a point against the first/second-order necessary conditions.
    Certify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        point: String,
        /// Support detection tolerance (relative to the max magnitude).
        #[arg(long, default_value_t = DEFAULT_SUPPORT_REL_TOL)]
        tol: f64,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Entry-bound report and, for certified minimizers, the full radius audit.
    Bounds {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = DEFAULT_SUPPORT_REL_TOL)]
        tol: f64,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Gram-matrix spectra, and the support-restricted spectra at a point.
    Spectrum {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        point: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SUPPORT_REL_TOL)]
        tol: f64,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Verify the optimal-value equivalence of an encoded reduction.
    VerifyReduction {
        #[command(flatten)]
        reduction: ReductionArgs,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum)]
        cone: ConeArg,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 128)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exhaustive partition/3-partition existence oracle.
    Oracle {
        #[command(flatten)]
        reduction: ReductionArgs,
    },
}

enum CliFailure {
    Input(String),
    Budget(String),
}

impl From<LibError> for CliFailure {
    fn from(err: LibError) -> Self {
        if err.is_budget_exceeded() {
            CliFailure::Budget(err.to_string())
        } else {
            CliFailure::Input(err.to_string())
        }
    }
}

impl From<normratio::ReductionError> for CliFailure {
    fn from(err: normratio::ReductionError) -> Self {
        LibError::from(err).into()
    }
}

impl From<normratio::ModelError> for CliFailure {
    fn from(err: normratio::ModelError) -> Self {
        LibError::from(err).into()
    }
}

impl From<normratio::SolverError> for CliFailure {
    fn from(err: normratio::SolverError) -> Self {
        LibError::from(err).into()
    }
}

impl From<normratio::StationarityError> for CliFailure {
    fn from(err: normratio::StationarityError) -> Self {
        LibError::from(err).into()
    }
}

impl From<normratio::BoundsError> for CliFailure {
    fn from(err: normratio::BoundsError) -> Self {
        LibError::from(err).into()
    }
}

impl From<normratio::CalculusError> for CliFailure {
    fn from(err: normratio::CalculusError) -> Self {
        LibError::from(err).into()
    }
}

struct Output {
    out: Option<PathBuf>,
}

impl Output {
    fn write(&self, text: &str) -> Result<(), CliFailure> {
        match &self.out {
            Some(path) => fs::write(path, text)
                .map_err(|e| CliFailure::Input(format!("cannot write {}: {e}", path.display()))),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = Output {
        out: cli.out.clone(),
    };
    match dispatch(&cli, &output) {
        Ok(code) => code,
        Err(failure) => {
            let (label, detail, code) = match failure {
                CliFailure::Input(d) => ("input", d, 2u8),
                CliFailure::Budget(d) => ("budget", d, 3u8),
            };
            let doc = json!({ "error": label, "detail": detail });
            let text = serde_json::to_string_pretty(&doc).expect("plain json");
            if output.write(&text).is_err() {
                eprintln!("{text}");
            }
            ExitCode::from(code)
        }
    }
}

fn timestamp(cli: &Cli) -> Option<String> {
    (!cli.no_timestamp).then(|| chrono::Utc::now().to_rfc3339())
}

fn report(cli: &Cli, command: &str, config: Value, result: Value) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("tool".into(), json!("normratio"));
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("command".into(), json!(command));
    doc.insert("config".into(), config);
    if let Some(ts) = timestamp(cli) {
        doc.insert("timestamp".into(), json!(ts));
    }
    doc.insert("result".into(), result);
    Value::Object(doc)
}

fn emit(cli: &Cli, output: &Output, command: &str, config: Value, result: Value) -> Result<(), CliFailure> {
    let doc = report(cli, command, config, result);
    output.write(&serde_json::to_string_pretty(&doc).expect("report serializes"))
}

fn require_json_format(cli: &Cli) -> Result<(), CliFailure> {
    if cli.format == OutputFormat::Csv {
        return Err(CliFailure::Input(
            "CSV output is available for the bounds audit table only".into(),
        ));
    }
    Ok(())
}

fn dispatch(cli: &Cli, output: &Output) -> Result<ExitCode, CliFailure> {
    match &cli.command {
        Command::Encode {
            reduction,
            model,
            cone,
            p,
            q,
        } => {
            require_json_format(cli)?;
            let spec = build_spec(reduction)?;
            warn_window(&spec);
            let bundle = match spec.kind() {
                ReductionKind::Partition => {
                    normratio::encode_partition(&spec, (*model).into(), (*cone).into(), *p, *q)?
                }
                ReductionKind::ThreePartition => normratio::encode_three_partition(
                    &spec,
                    (*model).into(),
                    (*cone).into(),
                    *p,
                    *q,
                )?,
            };
            // The encoded instance itself is the artifact; it feeds straight
            // back into solve/certify/bounds.
            let text = serde_json::to_string_pretty(&bundle.instance().to_json())
                .expect("instance serializes");
            output.write(&text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve {
            instance,
            point,
            starts,
            seed,
            tol,
            gamma,
        } => {
            require_json_format(cli)?;
            let inst = load_instance(instance, *gamma)?;
            let opts = SolverOptions {
                stop_residual: *tol,
                ..SolverOptions::default()
            };
            let config = json!({
                "instance": instance.display().to_string(),
                "starts": starts,
                "seed": seed,
                "solver": &opts,
                "gamma_override": gamma,
            });
            let result = match point {
                Some(text) => {
                    let x0 = parse_point(text, inst.cols())?;
                    let outcome = solve_local(&inst, &x0, &opts)?;
                    let objective = objective_value(&inst, &outcome.point)?;
                    json!({
                        "mode": "single",
                        "point": outcome.point.to_vec(),
                        "objective": objective,
                        "certificate": certificate_json(&outcome.certificate),
                        "iterations": outcome.trace.iterations(),
                        "final_residual": outcome.trace.final_residual(),
                        "support_events": outcome.trace.support_events,
                    })
                }
                None => {
                    let points = multistart_solve(&inst, *starts, *seed, &opts)?;
                    let best = points.first().map(|c| c.objective);
                    json!({
                        "mode": "multistart",
                        "distinct_points": points.len(),
                        "best_objective": best,
                        "points": points
                            .iter()
                            .map(|c| {
                                json!({
                                    "point": c.point.to_vec(),
                                    "objective": c.objective,
                                    "certificate": certificate_json(&c.certificate),
                                })
                            })
                            .collect::<Vec<_>>(),
                    })
                }
            };
            emit(cli, output, "solve", config, result)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify {
            instance,
            point,
            tol,
            gamma,
        } => {
            require_json_format(cli)?;
            let inst = load_instance(instance, *gamma)?;
            let x = parse_point(point, inst.cols())?;
            let cert = certify_local_minimizer(&inst, &x, DEFAULT_TOL_FO, DEFAULT_TOL_SO, *tol)?;
            let config = json!({
                "instance": instance.display().to_string(),
                "point": x.to_vec(),
                "tol_fo": DEFAULT_TOL_FO,
                "tol_so": DEFAULT_TOL_SO,
                "support_rel_tol": tol,
                "gamma_override": gamma,
            });
            emit(cli, output, "certify", config, certificate_json(&cert))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds {
            instance,
            point,
            tol,
            gamma,
        } => {
            let inst = load_instance(instance, *gamma)?;
            let x = parse_point(point, inst.cols())?;
            let cert = certify_local_minimizer(&inst, &x, DEFAULT_TOL_FO, DEFAULT_TOL_SO, *tol)?;
            let report_doc = entry_bound_report(&x, &inst, *tol)?;
            let (audit, note) = if cert.verdict == Verdict::LocalMinimizer {
                (Some(audit_point(&x, &inst, &cert)?), None)
            } else {
                (
                    None,
                    Some(format!(
                        "point verdict is {:?}; radius audit applies to certified local minimizers only",
                        cert.verdict
                    )),
                )
            };
            let hard_violation = audit.as_ref().is_some_and(|a| a.hard_violation);
            let config = json!({
                "instance": instance.display().to_string(),
                "point": x.to_vec(),
                "support_rel_tol": tol,
                "audit_tol": normratio::bounds::AUDIT_TOL,
                "rank_cutoff": normratio::bounds::DEFAULT_RANK_CUTOFF,
                "gamma_override": gamma,
            });
            match cli.format {
                OutputFormat::Json => {
                    let result = json!({
                        "certificate": certificate_json(&cert),
                        "entry_report": &report_doc,
                        "audit": audit,
                        "note": note,
                    });
                    emit(cli, output, "bounds", config, result)?;
                }
                OutputFormat::Csv => {
                    output.write(&audit_csv(instance, &x, &cert, &report_doc, audit.as_ref()))?;
                }
            }
            Ok(if hard_violation {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Spectrum {
            instance,
            point,
            tol,
            gamma,
        } => {
            require_json_format(cli)?;
            let inst = load_instance(instance, *gamma)?;
            let gram = inst.matrix().transpose() * inst.matrix();
            let mut gram_eigs: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
            gram_eigs.sort_by(|a, b| a.total_cmp(b));
            let summary = sigma_min_nonzero(inst.matrix(), None)?;
            let mut result = json!({
                "gram_eigenvalues": gram_eigs,
                "sigma": summary.sigma,
                "rank_cutoff": summary.rank_cutoff,
            });
            if let Some(text) = point {
                let x = parse_point(text, inst.cols())?;
                let stats = support_and_stats(&x, *tol);
                let mut block = json!({
                    "support": stats.support,
                    "s": stats.s,
                    "l1": stats.l1,
                    "l2": stats.l2,
                    "dyn_range": stats.dyn_range,
                });
                if !stats.support.is_empty() {
                    let sub = inst.submatrix_for_support(&stats.support);
                    let sub_gram = sub.transpose() * &sub;
                    let mut sub_eigs: Vec<f64> =
                        sub_gram.symmetric_eigen().eigenvalues.iter().copied().collect();
                    sub_eigs.sort_by(|a, b| a.total_cmp(b));
                    block["support_gram_eigenvalues"] = json!(sub_eigs);
                    if inst.model() == ModelKind::Unconstrained {
                        let gamma_val = inst.gamma().expect("validated instance");
                        let q = q_matrix_spectrum(stats.s, stats.l1, stats.l2, gamma_val)?;
                        block["q_spectrum"] = serde_json::to_value(&q).expect("serializes");
                        block["q_eigenvalues"] = json!(q.q_eigenvalues());
                        let y = normratio::nalgebra::DVector::from_iterator(
                            stats.support.len(),
                            stats.support.iter().map(|&i| x[i]),
                        );
                        let derivs = normratio::restricted_l1l2_derivatives(
                            &y,
                            &sub,
                            inst.rhs(),
                            gamma_val,
                        )?;
                        let mut hess_eigs: Vec<f64> =
                            derivs.hess.symmetric_eigen().eigenvalues.iter().copied().collect();
                        hess_eigs.sort_by(|a, b| a.total_cmp(b));
                        block["restricted_hessian_eigenvalues"] = json!(hess_eigs);
                    }
                }
                result["point"] = block;
            }
            let config = json!({
                "instance": instance.display().to_string(),
                "support_rel_tol": tol,
                "gamma_override": gamma,
            });
            emit(cli, output, "spectrum", config, result)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyReduction {
            reduction,
            model,
            cone,
            p,
            q,
            starts,
            seed,
        } => {
            require_json_format(cli)?;
            let spec = build_spec(reduction)?;
            warn_window(&spec);
            let report_doc = verify_reduction(
                &spec,
                (*model).into(),
                (*cone).into(),
                *p,
                *q,
                *starts,
                *seed,
            )?;
            let pass = report_doc.pass;
            let config = json!({
                "weights": reduction.weights,
                "kind": spec.kind(),
                "starts": starts,
                "seed": seed,
            });
            emit(
                cli,
                output,
                "verify-reduction",
                config,
                serde_json::to_value(&report_doc).expect("serializes"),
            )?;
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Oracle { reduction } => {
            require_json_format(cli)?;
            let spec = build_spec(reduction)?;
            warn_window(&spec);
            let outcome = partition_oracle(&spec)?;
            let config = json!({
                "weights": reduction.weights,
                "kind": spec.kind(),
            });
            emit(
                cli,
                output,
                "oracle",
                config,
                serde_json::to_value(&outcome).expect("serializes"),
            )?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn build_spec(args: &ReductionArgs) -> Result<PartitionSpec, CliFailure> {
    let weights = parse_weights(&args.weights)?;
    match args.kind {
        KindArg::Partition => {
            if args.bins.is_some() || args.kappa.is_some() {
                return Err(CliFailure::Input(
                    "--bins/--kappa apply to --kind 3partition only".into(),
                ));
            }
            Ok(PartitionSpec::partition(weights)?)
        }
        KindArg::ThreePartition => {
            let bins = args.bins.ok_or_else(|| {
                CliFailure::Input("--kind 3partition requires --bins".into())
            })?;
            let kappa = args
                .kappa
                .as_deref()
                .map(parse_rational)
                .transpose()?;
            Ok(PartitionSpec::three_partition(weights, bins, kappa)?)
        }
    }
}

fn warn_window(spec: &PartitionSpec) {
    let outside = spec.window_warnings();
    if !outside.is_empty() {
        eprintln!(
            "warning: weights at indices {outside:?} lie outside (kappa/4, kappa/2); \
             the encoding is still well-defined"
        );
    }
}

fn load_instance(path: &PathBuf, gamma: Option<f64>) -> Result<ProblemInstance, CliFailure> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliFailure::Input(format!("cannot read {}: {e}", path.display())))?;
    let raw: InstanceJson = serde_json::from_str(&text)
        .map_err(|e| CliFailure::Input(format!("invalid instance JSON: {e}")))?;
    let inst = validate_instance(&raw)?;
    match gamma {
        None => Ok(inst),
        Some(g) => Ok(inst.with_gamma(g)?),
    }
}

fn parse_point(text: &str, expected_len: usize) -> Result<SignalVector, CliFailure> {
    let csv = if let Some(path) = text.strip_prefix('@') {
        fs::read_to_string(path)
            .map_err(|e| CliFailure::Input(format!("cannot read point file {path}: {e}")))?
    } else {
        text.to_string()
    };
    let entries: Vec<f64> = csv
        .split([',', '\n', ' '])
        .filter(|tok| !tok.trim().is_empty())
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliFailure::Input(format!("cannot parse point entry '{tok}'")))
        })
        .collect::<Result<_, _>>()?;
    if entries.len() != expected_len {
        return Err(CliFailure::Input(format!(
            "point has {} entries, instance expects {expected_len}",
            entries.len()
        )));
    }
    Ok(SignalVector::from_slice(&entries)?)
}

/// Certificate in the documented report shape.
fn certificate_json(cert: &MinimizerCertificate) -> Value {
    json!({
        "residual": cert.first_order_residual,
        "off_support_margin": cert.off_support_margin,
        "min_hessian_eig": cert.min_hessian_eig,
        "verdict": cert.verdict,
        "tolerances": {
            "tol_fo": cert.tol_fo,
            "tol_so": cert.tol_so,
            "support_rel_tol": cert.support_rel_tol,
        },
    })
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or(String::new(), |v| format!("{v}"))
}

fn fmt_opt_bool(value: Option<bool>) -> String {
    value.map_or(String::new(), |v| v.to_string())
}

/// One audit row per (instance, point); mirrored by the JSON report.
fn audit_csv(
    instance: &Path,
    x: &SignalVector,
    cert: &MinimizerCertificate,
    report: &normratio::EntryBoundReport,
    audit: Option<&normratio::AuditRecord>,
) -> String {
    let header = "instance,verdict,point_l2,support_size,sigma,sigma_support,\
constrained_uniform,unconstrained_uniform_i,unconstrained_uniform_ii,\
support_radius_i,support_radius_ii,worst_entry_margin,\
support_radius_i_ok,support_radius_ii_ok,uniform_radius_i_ok,uniform_radius_ii_ok,\
entries_ok,known_discrepancy,hard_violation,violations";
    let radii = &report.radii;
    let point_l2 = x.as_vector().norm();
    let violations = audit.map_or(String::new(), |a| {
        a.violations
            .iter()
            .map(|v| {
                format!(
                    "{}{}",
                    v.check.replace(',', ";"),
                    if v.known_discrepancy {
                        " [known discrepancy]"
                    } else {
                        ""
                    }
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    });
    let row = [
        instance.display().to_string(),
        format!("{:?}", cert.verdict),
        format!("{point_l2}"),
        report.support.len().to_string(),
        format!("{}", radii.sigma),
        fmt_opt(radii.sigma_support),
        format!("{}", radii.constrained_uniform),
        fmt_opt(radii.unconstrained_uniform_i),
        fmt_opt(radii.unconstrained_uniform_ii),
        fmt_opt(radii.support_radius_i),
        fmt_opt(radii.support_radius_ii),
        fmt_opt(audit.map(|a| a.worst_entry_margin)),
        fmt_opt_bool(audit.map(|a| a.support_radius_i_ok)),
        fmt_opt_bool(audit.map(|a| a.support_radius_ii_ok)),
        fmt_opt_bool(audit.map(|a| a.uniform_radius_i_ok)),
        fmt_opt_bool(audit.map(|a| a.uniform_radius_ii_ok)),
        fmt_opt_bool(audit.map(|a| a.entries_ok)),
        fmt_opt_bool(audit.map(|a| a.known_discrepancy)),
        fmt_opt_bool(audit.map(|a| a.hard_violation)),
        format!("\"{violations}\""),
    ]
    .join(",");
    format!("{header}\n{row}")
}
