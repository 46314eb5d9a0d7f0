use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn seqbell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqbell"))
        .args(args)
        .env_remove("SEQBELL_THREADS")
        .output()
        .expect("spawn seqbell")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix(' '))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn state_info_examples() {
    let o = seqbell(&["state-info", "--theta", "pi/4"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(field(&s, "beta"), 0.0);
    assert!((field(&s, "mu") - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
    assert_eq!(field(&s, "i_max"), 2.828427);

    let s = stdout(&seqbell(&["state-info", "--theta", "pi/8"]));
    assert_eq!(field(&s, "beta"), 1.154701);
    assert_eq!(field(&s, "i_max"), 3.265986);
}

#[test]
fn state_info_json_round_trips() {
    let o = seqbell(&["state-info", "--theta", "pi/8", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["theta"].as_f64().unwrap(), std::f64::consts::FRAC_PI_8);
}

#[test]
fn argument_errors_exit_2() {
    for args in [
        &["state-info", "--theta", "2.0"][..],
        &["state-info", "--theta", "pi/0"],
        &["certify", "--theta", "pi/8", "--xi", "0.9"],
        &[
            "certify", "--theta", "pi/8", "--xi", "0.2", "--method", "npa", "--level", "7",
        ],
        &[
            "certify", "--theta", "pi/8", "--xi", "0.2", "--method", "simplex",
        ],
        &["conjecture", "--alpha", "0.5", "--beta", "0"],
        &[
            "simulate",
            "--theta",
            "pi/4",
            "--xis",
            "0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1",
        ],
        &["sweep", "--theta", "pi/4", "--grid", "0:1"],
        &["bogus"],
    ] {
        let o = seqbell(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn unreadable_sdp_is_an_argument_error() {
    let o = seqbell(&["sdp-solve", "/nonexistent/problem.dat"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certify_analytic_example() {
    let o = seqbell(&[
        "certify", "--theta", "pi/8", "--xi", "0.2", "--method", "analytic",
    ]);
    assert!(o.status.success());
    let bits = field(&stdout(&o), "bits");
    assert!((bits - 0.181311).abs() < 1e-6, "{bits}");
}

#[test]
fn exported_guessing_sdp_solves_to_the_same_bound() {
    let dir = tempfile::tempdir().unwrap();
    let sdp = dir.path().join("g.dat");
    let sdp = sdp.to_str().unwrap();
    let o = seqbell(&[
        "certify",
        "--theta",
        "pi/8",
        "--xi",
        "0.2",
        "--method",
        "npa",
        "--export-sdp",
        sdp,
    ]);
    assert!(o.status.success());
    let g = field(&stdout(&o), "g_upper");
    let o = seqbell(&["sdp-solve", sdp]);
    assert!(o.status.success());
    let dobj = field(&stdout(&o), "dual_objective");
    assert!((g - dobj).abs() < 1e-6);
}

#[test]
fn npa_bell_chsh() {
    let o = seqbell(&["npa-bell", "--alpha", "1", "--beta", "0", "--level", "1"]);
    assert!(o.status.success());
    assert!((field(&stdout(&o), "npa_bound") - 2.0 * 2f64.sqrt()).abs() < 1e-6);
}

#[test]
fn simulate_writes_tree_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = seqbell(&[
        "simulate",
        "--theta",
        "pi/4",
        "--xis",
        "0.01,1e-5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["certificate_bits"].as_f64().unwrap() >= 1.9);
    let tree: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["nodes"].as_array().unwrap().len(), 7);
    let csv = fs::read_to_string(out.join("distribution.csv")).unwrap();
    assert!(csv.starts_with("x,y_vec,a,b_vec,p"));
    // No temporaries left behind.
    assert_eq!(fs::read_dir(&out).unwrap().count(), 3);
}

#[test]
fn simulate_unmeasured_step_is_one_bit() {
    let o = seqbell(&["simulate", "--theta", "pi/4", "--xis", "0"]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let step = &r["steps"][0];
    assert!((step["i_value"].as_f64().unwrap() - step["i_max"].as_f64().unwrap()).abs() < 1e-12);
    assert!((step["bits"].as_f64().unwrap() - 1.0).abs() < 5e-4);
}

#[test]
fn simulate_three_steps_lists_fourteen_settings() {
    let o = seqbell(&["simulate", "--theta", "pi/4", "--xis", "1e-2,1e-4,1e-6"]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["alice_settings"].as_array().unwrap().len(), 14);
}

#[test]
fn sweep_analytic_csv() {
    let o = seqbell(&["sweep", "--theta", "pi/4"]);
    assert!(o.status.success());
    let s = stdout(&o);
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("xi,bits,method"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let mut it = l.split(',');
            let xi = it.next().unwrap().parse().unwrap();
            let bits = it.next().unwrap().parse().unwrap();
            assert_eq!(it.next(), Some("analytic"));
            (xi, bits)
        })
        .collect();
    assert_eq!(rows.len(), 44);
    assert_eq!(rows[0].0, 0.0);
    assert!((rows[0].1 - 1.0).abs() < 1e-3);
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9));
}

const TABLES: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/tests/data/tables.csv"
));

fn chsh_table() -> Vec<(f64, f64)> {
    TABLES
        .lines()
        .skip(1)
        .filter_map(|l| l.strip_prefix("pi/4,"))
        .map(|l| {
            let (xi, bits) = l.split_once(',').unwrap();
            (xi.parse().unwrap(), bits.parse().unwrap())
        })
        .collect()
}

#[test]
fn sweep_npa_reproduces_maximally_entangled_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = seqbell(&[
        "sweep",
        "--theta",
        "pi/4",
        "--method",
        "npa",
        "--level",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 44);
    for (row, (xi, bits)) in rows.iter().zip(chsh_table()) {
        assert!((row[0].parse::<f64>().unwrap() - xi).abs() < 1e-3);
        assert!(
            (row[1].parse::<f64>().unwrap() - bits).abs() <= 0.02,
            "{row:?}"
        );
        assert_eq!(row[2], "npa-2");
    }
}

#[test]
fn threshold_analytic() {
    let o = seqbell(&["threshold", "--theta", "pi/4", "--resolution", "0.01"]);
    assert!(o.status.success());
    let exact = 0.5 * (2f64.sqrt() - 1.0).acos();
    let t = field(&stdout(&o), "threshold_xi");
    assert!(t <= exact + 1e-6 && t > exact - 0.01, "{t}");
}

fn run_conjecture(dir: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec![
        "conjecture",
        "--alpha",
        "1",
        "--beta",
        "0",
        "--restarts",
        "100",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = seqbell(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read(out).unwrap()
}

#[test]
fn conjecture_chsh_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_conjecture(dir.path(), "a.json", &[]);
    let b = run_conjecture(dir.path(), "b.json", &["--sequential"]);
    assert_eq!(a, b);
    let r: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!((r["best_lhs"].as_f64().unwrap() - 8.0).abs() < 1e-4);
    assert!(r.get("flag").is_none());
}

#[test]
fn thread_cap_is_honored_and_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_seqbell"))
        .args(["sweep", "--theta", "pi/8", "--grid", "0:0.5:6"])
        .env("SEQBELL_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_seqbell"))
        .args(["state-info", "--theta", "pi/8"])
        .env("SEQBELL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
