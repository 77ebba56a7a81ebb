use std::process::{Command, Output};

const MODEL: &str = r#"{"type":"model","lambda":1}"#;
const PERTURBED: &str = r#"{"type":"perturbed","base":{"type":"model","lambda":1},"amplitude":0.01}"#;
const HOPF_SHIFT: &str = r#"{"type":"hopf","L":{"linear":[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],"offset":[1,0,0,0]},"M":{"linear":[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],"offset":[0,0,0,0]}}"#;
const IDENTITY: &str = r#"{"type":"hopf","L":{"linear":[[0,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]],"offset":[1,0,0,0]},"M":{"linear":[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],"offset":[0,0,0,0]}}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quatline")).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quatline"))
        .args(args)
        .env("QUATLINE_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("JSON output")
}

fn small(map: &str) -> Vec<&str> {
    vec!["verify", "--map", map, "--segments", "10", "--points", "3"]
}

#[test]
fn exit_code_contract() {
    let cases: &[(&[&str], i32)] = &[
        (&["verify", "--map", MODEL, "--radius", "0.4", "--segments", "10", "--points", "3"], 0),
        (&["verify", "--map", PERTURBED, "--segments", "10", "--points", "3"], 1),
        (&["verify", "--map", "{bad json"], 2),
        (&["verify", "--map", MODEL, "--samples", "5"], 2),
        (&["verify", "--map", MODEL, "--radius", "-1"], 2),
        (&["verify", "--map", MODEL, "--center", "3,0,0,0", "--segments", "3", "--points", "1"], 2),
        (&["verify"], 2),
        (&["extract", "--map", MODEL, "--point", "0"], 0),
        (&["extract", "--map", MODEL, "--point", "0.6"], 2),
        (&["extract", "--map", MODEL, "--point", "1,2"], 2),
        (&["synth", "--p", "0,0,0,0", "--q", "0,0,0,0", "--C", "0"], 0),
        (&["synth", "--p", "1,0,0,0", "--q", "0,0,0,0", "--C", "6"], 0),
        (&["synth", "--C", "1e309"], 2),
        (&["dump-segments", "--map", MODEL, "--segments", "2", "--samples", "7"], 0),
        (&["dump-segments", "--map", MODEL, "--samples", "3"], 2),
        (&["lemma1", "--a", "1,0,1,0", "--x", "0,1,0,0", "--b", "1,0,1,0"], 0),
        (&["lemma1", "--a", "1", "--x", "0,1,0,0", "--b", "2"], 1),
        (&["lemma1", "--a", "1", "--x", "2", "--b", "2"], 2),
        (&["no-such-command"], 2),
    ];
    for (args, want) in cases {
        let o = run(args);
        assert_eq!(code(&o), *want, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        if *want == 2 {
            assert!(!o.stderr.is_empty(), "{args:?} should explain itself");
        }
    }
}

#[test]
fn verify_report_schema() {
    let o = run(&small(MODEL));
    assert_eq!(code(&o), 0);
    let v = json(&o);
    for key in ["map_id", "points_tested", "segments", "residuals", "c_stats", "side", "verdicts", "pass"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["side"], "Both");
    assert_eq!(v["pass"], true);
    for verdict in v["verdicts"].as_array().unwrap() {
        let (val, tol) = (verdict["value"].as_f64().unwrap(), verdict["tolerance"].as_f64().unwrap());
        assert_eq!(verdict["pass"].as_bool().unwrap(), val <= tol);
    }
}

#[test]
fn reports_are_byte_identical() {
    let args = small(PERTURBED);
    let a = run(&args);
    let b = run(&args);
    let c = run_env(&args, "1");
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let other = run(&[&args[..], &["--seed", "2"]].concat());
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn map_file_and_out_file() {
    let dir = std::env::temp_dir().join(format!("quatline-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let map = dir.join("map.json");
    std::fs::write(&map, MODEL).unwrap();
    let out = dir.join("report.json");
    let o = run(&[
        "verify",
        "--map-file",
        map.to_str().unwrap(),
        "--segments",
        "5",
        "--points",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    let bad = run(&["lemma1", "--a", "1", "--x", "0,1,0,0", "--b", "1", "--out", "/nonexistent-dir/x/y.json"]);
    assert_eq!(code(&bad), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn extract_examples() {
    let v = json(&run(&["extract", "--map", MODEL, "--point", "0"]));
    let c = &v[0]["frame"]["C"];
    assert!((c[0].as_f64().unwrap() - 6.0).abs() < 1e-6);

    let v = json(&run(&["extract", "--map", HOPF_SHIFT, "--point", "0"]));
    let fr = &v[0]["frame"];
    // L = 1 + x commutes with M = x, so both sides admit B; extraction uses the left one
    assert_eq!(fr["side"], "left");
    assert_eq!(fr["side_report"]["side"], "Both");
    let b = fr["B"].as_array().unwrap();
    for (nu, bq) in b.iter().enumerate() {
        for (mu, comp) in bq.as_array().unwrap().iter().enumerate() {
            let want = if mu == nu { -2.0 } else { 0.0 };
            assert!((comp.as_f64().unwrap() - want).abs() < 1e-6);
        }
    }
    assert!(fr["C"].as_array().unwrap().iter().all(|c| c.as_f64().unwrap().abs() < 1e-6));

    let o = run(&["extract", "--map", HOPF_SHIFT, "--point", "0", "--point", "0.1,0,0.2,0", "--format", "csv"]);
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn synth_emits_spec_and_jet_report() {
    let v = json(&run(&["synth", "--p", "0,0,0,0", "--q", "0,0,0,0", "--C", "0"]));
    let id: serde_json::Value = serde_json::from_str(IDENTITY).unwrap();
    assert_eq!(v["spec"]["type"], "hopf");
    let nums = |v: &serde_json::Value| -> Vec<f64> {
        serde_json::to_string(v).unwrap().split(|c: char| "[],:{}\"".contains(c)).filter_map(|t| t.parse().ok()).collect()
    };
    assert_eq!(nums(&v["spec"]["L"]), nums(&id["L"]));
    assert_eq!(nums(&v["spec"]["M"]), nums(&id["M"]));
    assert_eq!(v["pass"], true);
    let v = json(&run(&["synth", "--p", "1,0,0,0", "--q", "0,0.5,0,0", "--C", "6"]));
    assert_eq!(v["spec"]["type"], "compose");
    assert!(v["max_coefficient_error"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn dump_segments_rows() {
    let o = run(&["dump-segments", "--map", IDENTITY, "--segments", "1", "--samples", "7", "--format", "csv"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "segment,t,x_w,x_x1,x_x2,x_x3,f_w,f_x1,f_x2,f_x3");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 7);
    for r in &rows {
        assert_eq!(&r[2..6], &r[6..10]);
    }
    // 17 significant digits
    let cell = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17);

    // an off-axis segment of the model map lands on one circle
    let o = run(&[
        "dump-segments", "--map", MODEL, "--x0", "0.05,0.1,0,0", "--alpha", "0,1,0,0", "--t-range", "-0.3,0.3", "--samples", "9",
    ]);
    let v = json(&o);
    let image: Vec<quatline::Quaternion> =
        v.as_array().unwrap().iter().map(|r| serde_json::from_value(r["image"].clone()).unwrap()).collect();
    let fit = quatline::sphere_geom::cocircularity_fit(&image).unwrap();
    assert_eq!(fit.kind, quatline::sphere_geom::CircleKind::Circle);
    assert!(fit.residual <= 1e-9);
}
