use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"[system]
n = 1
m = 1

[space]
lx = 4.0
ly = 4.0
nx = 4
ny = 4

[integrator]
dt = 0.5
t_end = 1.0

[[kernel]]
type = "rate"
pairing = "fs-fs"
pair = [0, 0]
form = "constant"
params = { alpha0 = 1.0 }

[[kernel]]
type = "transition"
pairing = "fs-fs"
pair = [0, 0]
form = "activity-consensus"
params = { mu = 0.5 }

[[initial]]
scale = "fs"
density = 2.0
activity = { profile = "gaussian", mean = 0.5, std = 0.2 }
"#;

fn msktap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msktap"))
        .args(args)
        .env("MSKTAP_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn crowd_preset_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("crowd");
    let o = msktap(&[
        "run",
        "--preset",
        "crowd",
        "--set",
        "t_end=1.0",
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(out.join("manifest.toml").exists());
}

#[test]
fn missing_transition_is_reported_with_its_pair() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    let start = SMALL.find("[[kernel]]\ntype = \"transition\"").unwrap();
    let end = SMALL.find("[[initial]]").unwrap();
    let broken = format!("{}{}", &SMALL[..start], &SMALL[end..]);
    std::fs::write(&path, broken).unwrap();
    let o = msktap(&["validate", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = text(&o.stderr);
    assert!(err.contains("(0,0)") || err.contains("(0, 0)"), "{err}");
}

#[test]
fn valid_config_validates_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(&path, format!("{SMALL}\n[output]\nsnapshot_stride = 1\n")).unwrap();
    let o = msktap(&["validate", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = dir.path().join("out");
    let o = msktap(&["run", path.to_str().unwrap(), "--out", &out_arg(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    // steps 0, 1 and 2 for each scale
    assert_eq!(out.join("snapshots").read_dir().unwrap().count(), 6);
}

#[test]
fn immune_homogeneous_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("immune");
    let o = msktap(&[
        "run",
        "--preset",
        "immune",
        "--set",
        "t_end=0.5",
        "--homogeneous",
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,subsystem,u_mean,mass");
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = msktap(&[
        "run",
        "--preset",
        "immune",
        "--set",
        "t_end=0.3",
        "--out",
        &out_arg(&first),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let manifest = first.join("manifest.toml");
    let o = msktap(&["run", manifest.to_str().unwrap(), "--out", &out_arg(&second)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    for file in ["moments.csv", "manifest.toml"] {
        assert_eq!(
            std::fs::read(first.join(file)).unwrap(),
            std::fs::read(second.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn verify_passes_and_negative_controls_fail() {
    let o = msktap(&["verify"]);
    assert!(o.status.success(), "{}{}", text(&o.stdout), text(&o.stderr));
    assert!(text(&o.stdout).contains("PASS"));
    let o = msktap(&["verify", "--inject-unnormalized"]);
    assert!(!o.status.success());
    assert!(text(&o.stdout).contains("FAIL"));
    let o = msktap(&["verify", "--tamper-operator", "1e-9"]);
    assert!(!o.status.success());
}

#[test]
fn bad_overrides_are_rejected() {
    let o = msktap(&["run", "--preset", "immune", "--set", "kil_rate=1"]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("kill_rate"), "{}", text(&o.stderr));
    let o = msktap(&["run", "--preset", "immune", "--set", "kill_rate"]);
    assert!(!o.status.success());
    let o = msktap(&["presets"]);
    assert!(o.status.success());
    assert!(text(&o.stdout).contains("crowd") && text(&o.stdout).contains("immune"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let o = msktap(&["validate", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), text(&o.stderr));
    }
}
