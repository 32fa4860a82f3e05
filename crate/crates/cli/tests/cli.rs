use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_MINIMIZE: &str = r#"
[coefficient]
class = "constant"
value = 0.5

[grid]
half_length = 8
h_x = 0.05
"#;

const SMALL_CLASS2: &str = r#"
[coefficient]
class = "class2"
a_inf = 2.0
depth = 1.0
width = 1.0
eps_list = [1.0, 0.5, 0.1]

[grid]
half_length = 8
h_x = 0.1

[checks]
closed_form_rel_tol = 0.01
"#;

const BETA: &str = r#"
[coefficient]
class = "constant"
value = 1.0

[grid]
half_length = 1
h_x = 0.1
nodes = [5]
"#;

struct Run {
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exit code")
    }

    fn summary(&self) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join("summary.json")).unwrap())
            .unwrap()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }
}

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Run {
    let cfg = dir.join(format!("{sub}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{sub}-{}", extra.len()));
    let output = Command::new(env!("CARGO_BIN_EXE_heteroclinic"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run { out, output }
}

#[test]
fn validate_reports_the_three_potential_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(dir.path(), "validate", SMALL_MINIMIZE, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let s = r.summary();
    let checks = s["result"]["potential"]["checks"].as_array().unwrap();
    let names: Vec<&str> = checks.iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["V1", "V2", "V3"]);
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert_eq!(s["status"], "ok");
}

#[test]
fn minimize_hits_the_closed_form_level() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(dir.path(), "minimize", SMALL_MINIMIZE, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let s = r.summary();
    let theta = s["result"]["theta_estimate"].as_f64().unwrap();
    assert!((theta - 4.0 / 3.0).abs() < 0.005 * 4.0 / 3.0);
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["config"]["grid"]["h_x"], 0.05);
    let field = std::fs::read_to_string(r.out.join("field_u.csv")).unwrap();
    let mut lines = field.lines();
    assert_eq!(lines.next(), Some("x,y,u,residual,A"));
    assert_eq!(lines.count(), 321 * 3);
    let trace = std::fs::read_to_string(r.out.join("trace_u.csv")).unwrap();
    assert!(trace.starts_with("iteration,J,grad_norm\n0,"));
}

#[test]
fn override_refines_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        dir.path(),
        "minimize",
        SMALL_MINIMIZE,
        &["--override", "grid.h_x=0.025", "--quiet"],
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert!(r.output.stdout.is_empty());
    assert_eq!(r.summary()["config"]["grid"]["h_x"], 0.025);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        (SMALL_MINIMIZE, &["--override", "grid.hx=0.05"]),
        (SMALL_MINIMIZE, &["--override", "grid.h_x=0.3"]),
        (SMALL_MINIMIZE, &["--override", "solve.max_iterations=0"]),
        (SMALL_MINIMIZE, &["--override", "kind=beta"]),
        ("[grid]\nhalf_length = 5\nh_x = 0.1\n[coefficient]\nclass = \"constant\"\nvalue = 0.5\nbogus = 1\n", &[]),
    ];
    for (i, (cfg, extra)) in cases.iter().enumerate() {
        let sub = dir.path().join(format!("case{i}"));
        std::fs::create_dir_all(&sub).unwrap();
        let r = run(&sub, "minimize", cfg, extra);
        assert_eq!(r.code(), 2, "case {i}: {}", r.stderr());
    }
    // diagnostics name the offending key and line
    let r = run(
        dir.path(),
        "minimize",
        "[grid]\nhalf_length = 5\nh_x = \"a\"\n",
        &[],
    );
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("line 3"), "{}", r.stderr());
}

#[test]
fn kind_in_config_must_match_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("kind = \"beta\"\n{SMALL_MINIMIZE}");
    assert_eq!(run(dir.path(), "minimize", &cfg, &[]).code(), 2);
}

#[test]
fn non_convergence_exits_with_3_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        dir.path(),
        "minimize",
        SMALL_MINIMIZE,
        &["--override", "solve.max_iterations=1"],
    );
    assert_eq!(r.code(), 3);
    let s = r.summary();
    assert_eq!(s["status"], "solver_failure");
    assert_eq!(s["result"]["converged"], false);
    assert!(r.out.join("field_u.csv").exists());
}

#[test]
fn failed_inequality_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        dir.path(),
        "minimize",
        SMALL_MINIMIZE,
        &["--override", "checks.closed_form_rel_tol=1e-12"],
    );
    assert_eq!(r.code(), 4);
    let s = r.summary();
    assert_eq!(s["status"], "assertion_failure");
    let failed: Vec<&str> = s["assertions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["passed"] == false)
        .map(|a| a["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["closed_form_level"]);
}

#[test]
fn beta_takes_tau_from_the_override() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(dir.path(), "beta", BETA, &["--override", "tau=0.2"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let s = r.summary();
    assert_eq!(s["result"]["tau"], 0.2);
    assert!(s["result"]["beta"].as_f64().unwrap() > 0.0);
    // the two-slab grid is required
    let r = run(
        dir.path(),
        "beta",
        BETA,
        &["--override", "grid.half_length=2"],
    );
    assert_eq!(r.code(), 2);
}

#[test]
fn sweep_lists_every_epsilon_and_the_references() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(dir.path(), "sweep-eps", SMALL_CLASS2, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let s = r.summary();
    let rows = s["result"]["rows"].as_array().unwrap();
    let eps: Vec<f64> = rows
        .iter()
        .map(|r| r["epsilon"].as_f64().unwrap())
        .collect();
    assert_eq!(eps, [1.0, 0.5, 0.1]);
    assert!(
        s["result"]["theta_zero"].as_f64().unwrap() < s["result"]["theta_inf"].as_f64().unwrap()
    );
    for name in [
        "field_theta_zero.csv",
        "field_theta_inf.csv",
        "field_eps2.csv",
    ] {
        assert!(r.out.join(name).exists(), "{name}");
    }
}

#[test]
fn compare_levels_rejects_periodic_fields() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), "compare-levels", SMALL_MINIMIZE, &[]).code(),
        2
    );
}

#[test]
fn compare_levels_class2_at_fixed_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(
        dir.path(),
        "compare-levels",
        SMALL_CLASS2,
        &["--override", "coefficient.epsilon=0.5"],
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let s = r.summary();
    assert_eq!(s["result"]["epsilon"], 0.5);
    assert_eq!(s["result"]["eps_bounded_by_w0"], true);
}

#[test]
fn gzip_dumps_can_seed_a_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(
        dir.path(),
        "minimize",
        SMALL_MINIMIZE,
        &["--override", "output.gzip=true"],
    );
    assert_eq!(first.code(), 0, "{}", first.stderr());
    let dump = first.out.join("field_u.csv.gz");
    assert!(dump.exists());
    let reseeded = format!(
        "{SMALL_MINIMIZE}\n[solve]\nseed = {{ kind = \"field\", path = \"{}\" }}\n",
        dump.display()
    );
    let second = run(dir.path(), "minimize", &reseeded, &["--quiet"]);
    assert_eq!(second.code(), 0, "{}", second.stderr());
    let s1 = first.summary();
    let s2 = second.summary();
    let (t1, t2) = (
        s1["result"]["theta_estimate"].as_f64().unwrap(),
        s2["result"]["theta_estimate"].as_f64().unwrap(),
    );
    assert!(t2 <= t1 + 1e-12);
    assert!(s2["result"]["iterations"].as_u64().unwrap() <= 1);
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), "minimize", SMALL_MINIMIZE, &[]);
    let first = std::fs::read(a.out.join("summary.json")).unwrap();
    let b = run(dir.path(), "minimize", SMALL_MINIMIZE, &[]);
    assert_eq!(a.out, b.out);
    assert_eq!(first, std::fs::read(b.out.join("summary.json")).unwrap());
}
