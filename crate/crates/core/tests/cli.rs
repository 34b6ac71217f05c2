use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hogmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hogmt"))
        .args(args)
        .env_remove("HOGMT_THREADS")
        .output()
        .expect("run hogmt")
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_identity_and_decompose_verify() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("i.hgk");
    let o = hogmt(&["generate", "--model", "identity", "--dims", "1,4,1,4", "--out", p(&k)]);
    assert!(o.status.success());
    assert!(text(&o).contains("U=1 T=4 U'=1 T'=4"));
    let e = dir.path().join("i.hge");
    let o = hogmt(&["decompose", p(&k), "--verify", "--out", p(&e)]);
    assert!(o.status.success());
    let line = text(&o).lines().find(|l| l.starts_with("duality_residual=")).unwrap().to_string();
    let residual: f64 = line["duality_residual=".len()..].parse().unwrap();
    assert!(residual < 1e-12);
    assert!(e.exists());
}

#[test]
fn generate_is_deterministic_and_presets_have_documented_dims() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.hgk"), dir.path().join("b.hgk"));
    for f in [&a, &b] {
        assert!(hogmt(&["generate", "--model", "eva-ns", "--seed", "7", "--out", p(f)]).status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let m = dir.path().join("m.hgk");
    let o = hogmt(&["generate", "--model", "mu-mimo-ns", "--out", p(&m)]);
    assert!(text(&o).contains("U=10 T=32 U'=10 T'=40"));
}

#[test]
fn decompose_reports_kept_count() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.hgk");
    let cfg = dir.path().join("k.toml");
    fs::write(&cfg, "[kernel]\nmodel = \"identity\"\nn_space = 2\nn_time = 5\n").unwrap();
    assert!(hogmt(&["generate", "--model", p(&cfg), "--out", p(&k)]).status.success());
    let o = hogmt(&["decompose", p(&k), "--keep", "count:0.5", "--out", p(&dir.path().join("e.hge"))]);
    assert!(o.status.success());
    assert!(text(&o).contains("N=10 kept=5"));
}

#[test]
fn corrupted_kernel_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.hgk");
    assert!(hogmt(&["generate", "--model", "identity", "--out", p(&k)]).status.success());
    let bytes = fs::read(&k).unwrap();
    fs::write(&k, &bytes[..bytes.len() / 2]).unwrap();
    let out = dir.path().join("e.hge");
    let o = hogmt(&["decompose", p(&k), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid file format"));
    assert!(!out.exists());
}

#[test]
fn missing_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = hogmt(&["sweep", "--config", p(&dir.path().join("none.toml")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn invalid_config_lists_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema_version = 1\nscheme = \"zp-mem\"\nzp_fraction = 1.5\n[kernel]\npreset = \"eva-ns\"\n").unwrap();
    let o = hogmt(&["sweep", "--config", p(&cfg), "--out", p(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("zp_fraction") && err.contains("line 3"), "{err}");
}

#[test]
fn identity_sweep_matches_awgn_and_compare_reports_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(
        &cfg,
        "schema_version = 1\nscheme = \"mem\"\nn_trials = 2\nframes_per_trial = 800\nsnr_grid_db = [0.0, 4.0, 8.0]\n\
         [kernel]\npreset = \"identity\"\n[[compare]]\nscheme = \"zp-mem\"\n",
    )
    .unwrap();
    let out = dir.path().join("res");
    let o = hogmt(&["sweep", "--config", p(&cfg), "--out", p(&out), "--threads", "2", "--svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mem.csv", "zp-mem.csv", "manifest.txt", "table.txt", "ber.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let o = hogmt(&["compare", "--manifest", p(&out.join("manifest.txt"))]);
    assert!(o.status.success());
    let table = text(&o);
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in lines {
        let v: Vec<f64> = line.split_whitespace().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[col("zp-mem_throughput_ratio")], 0.875);
        let (ber, se, oracle) = (v[col("mem_ber")], v[col("mem_se")], v[col("awgn_ber")]);
        assert!((ber - oracle).abs() <= 3.0 * se, "{ber} vs {oracle} +/- {se}");
    }
}

#[test]
fn thread_count_does_not_change_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, "schema_version = 1\nscheme = \"mem\"\nn_trials = 3\nframes_per_trial = 2\n[kernel]\npreset = \"eva-ns\"\n").unwrap();
    let csv = |threads: &str| {
        let out = dir.path().join(format!("r{threads}"));
        assert!(hogmt(&["sweep", "--config", p(&cfg), "--out", p(&out), "--threads", threads]).status.success());
        fs::read(out.join("mem.csv")).unwrap()
    };
    assert_eq!(csv("1"), csv("3"));
}

#[test]
fn help_documents_every_subcommand() {
    let o = hogmt(&["--help"]);
    let t = text(&o);
    for c in ["generate", "decompose", "sweep", "compare"] {
        assert!(t.contains(c));
    }
    let o = hogmt(&["sweep", "--help"]);
    assert!(text(&o).contains("HOGMT_THREADS"));
}
