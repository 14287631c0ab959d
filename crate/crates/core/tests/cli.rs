use std::path::Path;

use singulate::cli;

const TINY: &str = "\
w = 4
n_obstacles_min = 3
n_obstacles_max = 4
episodes = 20
epoch_train_episodes = 10
epoch_test_episodes = 4
preload = 20
eval_episodes = 10
batch_size = 8
buffer_capacity = 200
split_hidden = 8
vanilla_hidden = 8
";

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("singulate").chain(args.iter().copied()))
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["fly"]), 2);
    assert_eq!(run(&["eval"]), 2, "--policy is required");
    assert_eq!(run(&["train", "--policy", "greedy"]), 2);
    assert_eq!(run(&["train", "--config", "/nonexistent/run.cfg"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "w = 4\nbogus = 1\n");
    assert_eq!(run(&["eval", "--config", &bad, "--policy", "random"]), 2);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["train", "--policy", "random", "--out", out]), 2);
    assert_eq!(run(&["eval", "--policy", "split", "--out", out]), 2, "learned policy needs a checkpoint");
}

#[test]
fn train_then_eval_both_agents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    for (policy, manifest_kind) in [("split", "split"), ("dqn", "vanilla")] {
        let out = dir.path().join(policy);
        let o = out.to_str().unwrap();
        assert_eq!(run(&["train", "--config", &cfg, "--policy", policy, "--seed", "1", "--out", o]), 0);
        for f in ["config.cfg", "curves.csv", "metrics.csv", "agent/manifest.json"] {
            assert!(out.join(f).is_file(), "{policy}: missing {f}");
        }
        let manifest = std::fs::read_to_string(out.join("agent/manifest.json")).unwrap();
        assert!(manifest.contains(&format!("\"kind\": \"{manifest_kind}\"")) || manifest.contains(&format!("\"kind\":\"{manifest_kind}\"")));
        let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
        assert_eq!(curves.lines().count(), 1 + 2, "header plus episodes / epoch_train_episodes rows");

        let ckpt = out.join("agent");
        let ckpt = ckpt.to_str().unwrap();
        let args = ["eval", "--config", &cfg, "--policy", policy, "--checkpoint", ckpt, "--episodes", "6", "--out", o];
        assert_eq!(run(&args), 0);
        let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 2, "eval replaces the row written by train:\n{metrics}");
        assert!(metrics.lines().nth(1).unwrap().contains(",6,"));
    }
    // A split checkpoint cannot be loaded as the monolithic agent, and a
    // checkpoint for w = 4 does not fit the default w = 8 environment.
    let ckpt = dir.path().join("split/agent");
    let ckpt = ckpt.to_str().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["eval", "--config", &cfg, "--policy", "dqn", "--checkpoint", ckpt, "--out", out]), 1);
    assert_eq!(run(&["eval", "--policy", "split", "--checkpoint", ckpt, "--episodes", "2", "--out", out]), 1);
}

#[test]
fn random_eval_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let mut outputs = Vec::new();
    for (name, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        let out = dir.path().join(name);
        let o = out.to_str().unwrap();
        assert_eq!(run(&["eval", "--config", &cfg, "--policy", "random", "--seed", seed, "--episodes", "25", "--out", o]), 0);
        outputs.push((
            std::fs::read(out.join("metrics.csv")).unwrap(),
            std::fs::read(out.join("Random_trace.jsonl")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0].1, outputs[2].1);
    let header = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(header.starts_with("policy,n,success_rate,mean_actions,std_actions,mean_reward,std_reward\n"));
}

#[test]
fn gradcheck_passes_on_small_run() {
    assert_eq!(run(&["gradcheck", "--nets", "2", "--seed", "9"]), 0);
}

#[test]
fn modularity_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("preset = complex\n{TINY}"));
    let out = dir.path().join("m");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["modularity", "--config", &cfg, "--seed", "2", "--out", o]), 0);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("modularity.json")).unwrap()).unwrap();
    assert_eq!(report["probe_max_abs_diff"], 0.0);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let policies: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(policies, ["SplitDQN-2", "SplitDQN-3", "SplitDQN-3-scr"]);
    assert!(out.join("splitdqn2/manifest.json").is_file());
}
