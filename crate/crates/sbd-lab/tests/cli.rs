use std::path::PathBuf;
use std::process::{Command, Output};

fn sbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbd")).args(args).env("SBD_APPROX_QUIET", "1").output().expect("spawn sbd")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sbd-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn gen_writes_identical_files() {
    let (a, b) = (tmp("a.json"), tmp("b.json"));
    for p in [&a, &b] {
        let o = sbd(&["gen", "random-jump", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let spec = sbd_lab::sbd_field::FieldSpec::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(spec.components.len(), 2);
}

#[test]
fn gen_piecewise_rigid_flat_matches_corpus() {
    let o = sbd(&["gen", "piecewise-rigid-flat"]);
    assert_eq!(o.status.code(), Some(0));
    let spec = sbd_lab::sbd_field::FieldSpec::from_json(&stdout(&o)).unwrap();
    assert_eq!(spec, sbd_lab::corpus::spec("piecewise-rigid-flat").unwrap());
    assert_eq!(spec.jump_segments[0].p0, [0.0, 0.5]);
    assert_eq!(spec.jump_segments[0].amplitude_expr, "(1, 0)");
}

#[test]
fn approx_fixed_point_from_file() {
    let f = tmp("prf.json");
    assert_eq!(sbd(&["gen", "piecewise-rigid-flat", "--out", f.to_str().unwrap()]).status.code(), Some(0));
    let o = sbd(&["approx", "--field", f.to_str().unwrap(), "--thm", "11", "--k", "16,32"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "thm");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        for (name, cell) in header.iter().zip(r) {
            if ["bd_error", "l1_error", "strain_lp_error", "jump_symmdiff", "jump_created", "jump_amp_error"].contains(name) {
                assert!(cell.parse::<f64>().unwrap() <= 1e-6, "{name} = {cell}");
                // 17 significant digits: d.dddddddddddddddde...
                assert_eq!(cell.split('e').next().unwrap().replace('.', "").trim_start_matches('-').len(), 17);
            }
        }
    }
    // byte-identical on a rerun
    let again = sbd(&["approx", "--field", f.to_str().unwrap(), "--thm", "11", "--k", "16,32"]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn approx_thm12_smooth_creates_nothing() {
    let o = sbd(&["approx", "--field", "smooth-poly", "--thm", "12", "--k", "16"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "jump_created").unwrap();
    for l in text.lines().skip(1) {
        assert_eq!(l.split(',').nth(col).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn precondition_rejections_exit_3() {
    let o = sbd(&["approx", "--field", "pure-jump", "--k", "16", "--strict-scale"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("k below 64/t"));
    assert_eq!(sbd(&["approx", "--field", "no-such-field"]).status.code(), Some(3));
    assert_eq!(sbd(&["approx", "--field", "pure-jump", "--theta", "1.5"]).status.code(), Some(3));
    assert_eq!(sbd(&["gamma", "--psi", "cubic"]).status.code(), Some(3));
    assert_eq!(sbd(&["gamma", "--constants", "--p", "1"]).status.code(), Some(3));
    assert_eq!(sbd(&["gen"]).status.code(), Some(3));
}

#[test]
fn gamma_constants_and_zero_target() {
    let o = sbd(&["gamma", "--constants", "--psi", "linear", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!((row[2].parse::<f64>().unwrap() - 8.0 / 3.0).abs() < 1e-9);
    assert_eq!(row[3].parse::<f64>().unwrap(), 2.0);

    let o = sbd(&["gamma", "--target", "zero"]);
    assert_eq!(o.status.code(), Some(0));
    for l in stdout(&o).lines().skip(1) {
        assert_eq!(l.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn gamma_config_file_and_determinism() {
    let cfg = tmp("gamma.json");
    std::fs::write(
        &cfg,
        r#"{"dimension": 1, "L": 2.0, "delta": 1.0, "psi": {"family": "linear"}, "p": 2.0,
            "eps_list": [0.125, 0.0625, 0.03125, 0.015625], "h_rule": "eps/8"}"#,
    )
    .unwrap();
    let a = sbd(&["gamma", "--config", cfg.to_str().unwrap()]);
    let b = sbd(&["gamma", "--config", cfg.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().next().unwrap(), "eps,energy,F_limit,rel_error,iterations");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn gamma_rising_error_exits_2() {
    // the trend is checked from coarse to fine eps whatever the list order
    let o = sbd(&["gamma", "--eps", "0.015625,0.125"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = tmp("bad.json");
    // psi = 0 gives a = b = 0; the minimum is 0 at every eps, so the error cannot decrease
    std::fs::write(
        &cfg,
        r#"{"dimension": 1, "L": 2.0, "delta": 1.0, "psi": {"family": "zero"}, "p": 2.0,
            "eps_list": [0.125, 0.0625], "h_rule": "eps/8"}"#,
    )
    .unwrap();
    let o = sbd(&["gamma", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_passes_on_a_corpus_field() {
    let o = sbd(&["verify", "--field", "piecewise-rigid-flat", "--k", "8,16"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().skip(1).all(|l| l.starts_with("PASS,")));
    assert!(text.contains("commutator"));
}

#[test]
fn help_documents_the_columns() {
    let o = sbd(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for col in ["bd_error", "jump_created", "rel_error", "F_limit", "SBD_APPROX_QUIET"] {
        assert!(text.contains(col), "{col}");
    }
}

#[test]
fn quiet_variable_silences_progress() {
    let loud = Command::new(env!("CARGO_BIN_EXE_sbd")).args(["gamma", "--eps", "0.125"]).env_remove("SBD_APPROX_QUIET").output().unwrap();
    assert!(!loud.stderr.is_empty());
    let quiet = sbd(&["gamma", "--eps", "0.125"]);
    assert!(quiet.stderr.is_empty());
}
