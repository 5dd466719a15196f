use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
env = "pendulum"
mode = "guide"
episodes = 3

[agent]
hidden = [8]
batch_size = 8
updates_per_episode = 2

[compensator]
hidden = [4]
epochs = 2

[pendulum]
horizon = 20
"#;

fn rlcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlcbf"))
        .args(args)
        .output()
        .expect("failed to launch rlcbf")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("killed by signal")
}

fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = rlcbf(&["run", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&rlcbf(&[])), 1);
}

#[test]
fn help_exits_zero() {
    let out = rlcbf(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("selftest"));
}

#[test]
fn invalid_config_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[barrier]\neta = 1.5\n").unwrap();
    let out = rlcbf(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("barrier.eta"));

    std::fs::write(&path, "episodes = \n").unwrap();
    assert_eq!(
        code(&rlcbf(&["run", "--config", path.to_str().unwrap()])),
        2
    );
    assert_eq!(code(&rlcbf(&["run", "--config", "no_such_preset"])), 2);
}

#[test]
fn missing_aggregate_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("agg.csv");
    let o = rlcbf(&[
        "aggregate",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn selftest_passes() {
    let out = rlcbf(&["selftest", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

#[test]
fn run_aggregate_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny(dir.path());
    let out_dir = dir.path().join("runs");
    let out = rlcbf(&[
        "run",
        "--config",
        &config,
        "--seed",
        "1",
        "--seed",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
        "--verbose",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [1, 2] {
        let sd = out_dir.join(format!("seed_{seed}"));
        for f in [
            "episodes.csv",
            "steps.csv",
            "evaluation.csv",
            "actor.bin",
            "critic.bin",
            "compensator.bin",
        ] {
            assert!(sd.join(f).is_file(), "seed {seed}: {f} missing");
        }
        let episodes = std::fs::read_to_string(sd.join("episodes.csv")).unwrap();
        assert_eq!(episodes.lines().count(), 4);
    }

    let agg = dir.path().join("agg.csv");
    let inputs: Vec<String> = [1, 2]
        .iter()
        .map(|s| {
            out_dir
                .join(format!("seed_{s}/episodes.csv"))
                .to_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let o = rlcbf(&[
        "aggregate",
        &inputs[0],
        &inputs[1],
        "--out",
        agg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&agg).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().starts_with("0,2,"));

    let steps = out_dir.join("seed_1/steps.csv");
    let o = rlcbf(&["audit", steps.to_str().unwrap(), "--config", &config]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("violations 0"));
}

#[test]
fn audit_flags_a_violating_step() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    std::fs::write(&p, "episode,t,eps,h_0,h_next_0\n0,0,0,1,0.2\n").unwrap();
    let o = rlcbf(&["audit", p.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("violations 1"));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny(dir.path());
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let o = rlcbf(&[
            "run",
            "--config",
            &config,
            "--seed",
            "5",
            "--out",
            out_dir.to_str().unwrap(),
            "--verbose",
        ]);
        assert_eq!(code(&o), 0);
        outputs.push(out_dir.join("seed_5"));
    }
    for f in [
        "episodes.csv",
        "steps.csv",
        "evaluation.csv",
        "actor.bin",
        "critic.bin",
        "compensator.bin",
    ] {
        let a = std::fs::read(outputs[0].join(f)).unwrap();
        let b = std::fs::read(outputs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
}
