use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 3\nt_end = \"2 ms\"\n\
[grid]\nwidth = 8\nheight = 8\n\
[neuron]\nc_m_over_dt = \"calibrated\"\n\
[[neurons]]\nin = [3, 3]\nout = [4, 3]\n\
[[inputs]]\nnode = [0, 0]\namplitude = \"1.5 V\"\nt_stop = \"1 ms\"\n\
[record]\nsnapshot_every = 10\n";

fn membrain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_membrain"))
        .args(args)
        .env_remove("MEMBRAIN_OUT")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = membrain(&["run", &cfg, "--out", out.to_str().unwrap(), "--dump-mna"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["spikes.csv", "mean_g.csv", "rate.csv", "voltage.csv", "graph.txt", "config.toml", "manifest.json", "mna_step0.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(out.join("snapshots").is_dir());
}

#[test]
fn identical_runs_give_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(membrain(&["run", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(membrain(&["run", &cfg, "--out", b.to_str().unwrap()]).status.success());
    for f in ["spikes.csv", "mean_g.csv", "rate.csv", "voltage.csv", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_dt_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = membrain(&["run", &cfg, "--out", out.to_str().unwrap(), "--override", "dt=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt must be positive"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn validate_echo_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = membrain(&["validate", &cfg, "-s", "neuron.v_th=\"0.6 V\""]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = String::from_utf8(o.stdout).unwrap();
    let a = membrain::SimConfig::from_toml(&echoed).unwrap();
    let b = membrain::SimConfig::from_toml_with_overrides(SMALL, &["neuron.v_th=\"0.6 V\"".to_string()]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn electrode_collision_names_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("node = [0, 0]", "node = [4, 3]");
    let cfg = write_config(dir.path(), &text);
    let o = membrain(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(4, 3)"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[extra]\nfoo = 1\n"));
    let o = membrain(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));
}

fn digit() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/zero.pgm").to_string()
}

#[test]
fn place_inputs_emits_k_inputs() {
    let o = membrain(&["place-inputs", &digit(), "-k", "20", "--region", "13,13,14,14"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fragment = String::from_utf8(o.stdout).unwrap();
    assert_eq!(fragment.matches("[[inputs]]").count(), 20);
    let cfg = membrain::SimConfig::from_toml(&format!("t_end = \"1 ms\"\n{fragment}")).unwrap();
    assert_eq!(cfg.inputs.len(), 20);
    cfg.resolve().unwrap();
}

#[test]
fn place_inputs_rejects_zero_k() {
    let o = membrain(&["place-inputs", &digit(), "-k", "0", "--region", "13,13,14,14"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blank_image_takes_the_first_region_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("black.pgm");
    fs::write(&img, "P2\n4 4\n255\n0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
    let o = membrain(&["place-inputs", img.to_str().unwrap(), "-k", "3", "--region", "2,5,4,4", "--grid", "10x10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fragment = String::from_utf8(o.stdout).unwrap();
    let cfg = membrain::SimConfig::from_toml(&format!("t_end = \"1 ms\"\n[grid]\nwidth = 10\nheight = 10\n{fragment}")).unwrap();
    let resolved = cfg.resolve().unwrap();
    let nodes: Vec<usize> = resolved.inputs.iter().map(|i| i.node).collect();
    let expected: Vec<usize> = (2..5).map(|col| resolved.graph.node_at(col, 5).unwrap()).collect();
    assert_eq!(nodes, expected);
}

#[test]
fn unreadable_image_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("missing.pgm");
    let o = membrain(&["place-inputs", img.to_str().unwrap(), "-k", "3", "--region", "0,0,4,4"]);
    assert_eq!(o.status.code(), Some(2));
}
