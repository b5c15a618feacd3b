//! Acceptance criterion 7: deterministic reports and lossless
//! encode -> solve -> certify round trips through the CLI.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_normratio"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf-8 output")
}

fn tmp_path(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("normratio-acceptance-{}-{name}", std::process::id()));
    path
}

fn write_example1(path: &Path) {
    std::fs::write(
        path,
        r#"{"m":1,"n":2,"A":[1.0,1.0],"b":[1.0],"gamma":1.0,"cone":"free","model":"unconstrained","p":1.0,"q":2.0}"#,
    )
    .unwrap();
}

#[test]
fn criterion_7_determinism_and_format() {
    let result = std::panic::catch_unwind(|| {
        // Repeated invocations must be byte-identical (timestamps excluded).
        let encode_args = [
            "encode",
            "--kind",
            "partition",
            "--weights",
            "3,1,1,2,2,1",
            "--model",
            "unconstrained",
            "--cone",
            "nonneg",
        ];
        let first = run(&encode_args);
        let second = run(&encode_args);
        assert!(first.status.success());
        assert_eq!(first.stdout, second.stdout, "encode output not deterministic");

        let inst_path = tmp_path("encoded.json");
        let status = bin()
            .args(encode_args)
            .args(["--out", inst_path.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());

        // Schema round trip: the written file re-parses under the typed
        // schema and re-serializes to the same bytes.
        let text = std::fs::read_to_string(&inst_path).unwrap();
        let parsed: normratio::InstanceJson = serde_json::from_str(&text).unwrap();
        assert_eq!(
            serde_json::to_string_pretty(&parsed).unwrap(),
            text.trim_end()
        );
        assert!(normratio::validate_instance(&parsed).is_ok());

        // encode -> solve round trip, deterministic across runs.
        let solve_args = [
            "solve",
            "--instance",
            inst_path.to_str().unwrap(),
            "--starts",
            "16",
            "--seed",
            "11",
            "--no-timestamp",
        ];
        let solve1 = run(&solve_args);
        let solve2 = run(&solve_args);
        assert!(solve1.status.success(), "{}", stdout_of(&solve1));
        assert_eq!(solve1.stdout, solve2.stdout, "solve output not deterministic");

        // Take the best certified minimizer from the solve report (points are
        // sorted by objective) and certify it again through the CLI.
        let report: serde_json::Value = serde_json::from_str(&stdout_of(&solve1)).unwrap();
        let best_point: Vec<f64> = report["result"]["points"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["certificate"]["verdict"] == "LocalMinimizer")
            .expect("multistart found a certified minimizer")["point"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let point_csv = best_point
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",");
        let certify_args = [
            "certify",
            "--instance",
            inst_path.to_str().unwrap(),
            "--point",
            &point_csv,
            "--no-timestamp",
        ];
        let cert1 = run(&certify_args);
        let cert2 = run(&certify_args);
        assert!(cert1.status.success());
        assert_eq!(cert1.stdout, cert2.stdout, "certify output not deterministic");
        let cert: serde_json::Value = serde_json::from_str(&stdout_of(&cert1)).unwrap();
        assert_eq!(cert["result"]["verdict"], "LocalMinimizer");
        // Reports embed version and resolved tolerances.
        assert!(cert["version"].is_string());
        assert!(cert["result"]["tolerances"]["tol_fo"].is_number());

        // Example-1 saddle through the documented flow: exit 0, the expected
        // negative curvature in the report.
        let ex1 = tmp_path("ex1.json");
        write_example1(&ex1);
        let out = run(&[
            "certify",
            "--instance",
            ex1.to_str().unwrap(),
            "--point",
            "0.5,0.5",
            "--no-timestamp",
        ]);
        assert!(out.status.success());
        let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
        assert_eq!(doc["result"]["verdict"], "StationaryNotMinimizer");
        let eig = doc["result"]["min_hessian_eig"].as_f64().unwrap();
        assert!((eig + 2.0 * 2f64.sqrt()).abs() <= 1e-6);

        // verify-reduction PASS path and report determinism.
        let verify_args = [
            "verify-reduction",
            "--weights",
            "1,1,3",
            "--kind",
            "partition",
            "--model",
            "constrained",
            "--cone",
            "nonneg",
            "--no-timestamp",
        ];
        let v1 = run(&verify_args);
        let v2 = run(&verify_args);
        assert!(v1.status.success());
        assert_eq!(v1.stdout, v2.stdout);
        let doc: serde_json::Value = serde_json::from_str(&stdout_of(&v1)).unwrap();
        assert_eq!(doc["result"]["pass"], true);
        assert_eq!(doc["result"]["exists"], false);

        // Exit-code contract: 2 for input errors, 3 for budget overruns.
        let out = run(&["certify", "--instance", "/nonexistent.json", "--point", "1,0"]);
        assert_eq!(out.status.code(), Some(2));
        let out = bin()
            .args(["solve", "--instance", ex1.to_str().unwrap(), "--format", "csv"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "csv outside bounds must be rejected");
        let weights25 = vec!["1"; 25].join(",");
        let out = run(&["oracle", "--weights", &weights25, "--kind", "partition"]);
        assert_eq!(out.status.code(), Some(3));
        let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
        assert_eq!(doc["error"], "budget");

        // Unknown flags are rejected.
        let out = run(&["oracle", "--weights", "1,1", "--kind", "partition", "--bogus"]);
        assert_eq!(out.status.code(), Some(2));

        // Points can come from a file via @path.
        let point_file = tmp_path("point.csv");
        std::fs::write(&point_file, "1.0,0.0\n").unwrap();
        let at_arg = format!("@{}", point_file.display());
        let out = run(&[
            "certify",
            "--instance",
            ex1.to_str().unwrap(),
            "--point",
            &at_arg,
            "--no-timestamp",
        ]);
        assert!(out.status.success());
        let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
        assert_eq!(doc["result"]["verdict"], "LocalMinimizer");
        let _ = std::fs::remove_file(&point_file);

        // CSV audit table: deterministic, one header + one row.
        let bounds_args = [
            "bounds",
            "--instance",
            ex1.to_str().unwrap(),
            "--point",
            "1,0",
            "--format",
            "csv",
        ];
        let b1 = run(&bounds_args);
        let b2 = run(&bounds_args);
        assert!(b1.status.success());
        assert_eq!(b1.stdout, b2.stdout);
        let csv = stdout_of(&b1);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("instance,verdict,point_l2"));
        assert!(lines[1].contains("known discrepancy"));

        let _ = std::fs::remove_file(&inst_path);
        let _ = std::fs::remove_file(&ex1);
    });
    match result {
        Ok(()) => println!("acceptance criterion 7 (determinism & format): PASS"),
        Err(payload) => {
            println!("acceptance criterion 7 (determinism & format): FAIL");
            std::panic::resume_unwind(payload);
        }
    }
}
