use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mecpow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mecpow"))
        .args(args)
        .env_remove("MECPOW_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn list_names_every_experiment() {
    let out = mecpow(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "campaign"] {
        assert!(stdout(&out).contains(name), "missing {name}");
    }
}

#[test]
fn validate_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "empty.toml", "");
    let out = mecpow(&["validate", "--config", &path]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for line in ["B = 10000.0", "r = 2.0", "c = 0.001", "h = 12.0", "N = 3", "s = [100.0, 200.0, 300.0]"] {
        assert!(text.contains(line), "missing `{line}` in\n{text}");
    }
}

#[test]
fn invalid_configs_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [("c = -0.5", "`c`"), ("h = 40.0", "`h`"), ("L = 8\nh = 9.0", "`h`"), ("delta = 1.5", "`delta`")] {
        let path = write(dir.path(), "bad.toml", text);
        let out = mecpow(&["validate", "--config", &path]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains(key), "{text}: {}", stderr(&out));
    }
    let path = write(dir.path(), "typo.toml", "bee = 3");
    let out = mecpow(&["validate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bee"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mecpow(&["run"]).status.code(), Some(2));
    assert_eq!(mecpow(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = mecpow(&["run", "fig99", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fig99"));
}

#[test]
fn runs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", "replications = 200\n[[sweep]]\nparameter = \"N\"\nfrom = 2.0\nto = 20.0\nsteps = 6\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let run = mecpow(&["run", "fig2", "--config", &config, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(run.status.code(), Some(0), "{}", stdout(&run));
    }
    for name in ["fig2_access_probability.csv", "aggregates.csv", "checks.csv", "config.toml", "summary.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let echoed = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 7"));
    assert!(echoed.contains("experiment = \"fig2\""));
}

#[test]
fn seed_changes_monte_carlo_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", "replications = 100\n[[sweep]]\nparameter = \"N\"\nfrom = 30.0\nto = 40.0\nsteps = 2\n");
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        mecpow(&["run", "fig2", "--config", &config, "--seed", seed, "--out", out.to_str().unwrap()]);
        files.push(fs::read(out.join("fig2_access_probability.csv")).unwrap());
    }
    assert_ne!(files[0], files[1]);
}

#[test]
fn game_figures_pass_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    for (name, file) in [
        ("fig3", "fig3_revenues.csv"),
        ("fig4", "fig4_best_response.csv"),
        ("fig6", "fig6_convergence.csv"),
        ("fig7", "fig7_lengths_vs_B.csv"),
        ("fig8", "fig8_lengths_vs_r.csv"),
    ] {
        let out = dir.path().join(name);
        let run = mecpow(&["run", name, "--out", out.to_str().unwrap()]);
        assert_eq!(run.status.code(), Some(0), "{name}: {}", stdout(&run));
        assert!(out.join(file).exists(), "{name} missing {file}");
        assert!(out.join("checks.csv").exists());
    }
    let fig6 = fs::read_to_string(dir.path().join("fig6/fig6_convergence.csv")).unwrap();
    assert!(fig6.starts_with("iteration,user,M,closed_form\n0,1,1000,"));
}

#[test]
fn fairness_figure_reports_the_cycle_aligned_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", "replications = 10\n[[sweep]]\nparameter = \"M\"\nfrom = 100.0\nto = 1000.0\nsteps = 9\n");
    let out = dir.path().join("fig5");
    let run = mecpow(&["run", "fig5", "--config", &config, "--out", out.to_str().unwrap()]);
    // WRR is exact at cycle-aligned prefixes, so "strictly closer" cannot hold.
    assert_eq!(run.status.code(), Some(1));
    assert!(stdout(&run).contains("[PASS] M=1000: greedy merge within TV 0.02"));
    assert!(stdout(&run).contains("cycle boundary"));
    let alg = fs::read_to_string(out.join("fig5_algorithm1.csv")).unwrap();
    let wrr = fs::read_to_string(out.join("fig5_wrr.csv")).unwrap();
    assert!(alg.starts_with("M,prefix_fraction,user,target,frequency\n"));
    // 10 totals x 2 prefixes x 3 users, plus the header.
    assert_eq!(alg.lines().count(), 61);
    assert_eq!(wrr.lines().count(), 61);
}

#[test]
fn block_time_figure_writes_both_windows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig9");
    let run = mecpow(&["run", "fig9", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stdout(&run));
    let g10 = fs::read_to_string(out.join("fig9_blocktime_G10.csv")).unwrap();
    assert!(g10.starts_with("block_index,window_index,h,rounds,block_time_s,avg_window_time_s\n"));
    assert_eq!(g10.lines().count(), 201);
    assert!(out.join("fig9_blocktime_G2.csv").exists());
}

#[test]
fn campaign_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", "num_blocks = 12\nG = 4\n");
    let out = dir.path().join("campaign");
    let run = mecpow(&["run", "campaign", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let traces = fs::read_to_string(out.join("campaign_traces.csv")).unwrap();
    assert!(traces.starts_with("block,winner,hashes,rounds,reward,model_time_s,h\n"));
    assert_eq!(traces.lines().count(), 13);
}

#[test]
fn crash_is_surfaced_with_the_block() {
    let dir = tempfile::tempdir().unwrap();
    // With a tiny reward and a hard puzzle nobody can afford a single nonce.
    let config = write(dir.path(), "c.toml", "B = 1.0\nr = 0.0\ninitial_h = 30.0\nnum_blocks = 3\n");
    let run = mecpow(&["run", "campaign", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("block 0"), "{}", stderr(&run));
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_mecpow"))
        .args(["run", "fig6"])
        .env("MECPOW_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert!(dir.path().join("fig6_convergence.csv").exists());
}

#[test]
fn order_merges_a_nonce_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "nonces.txt", "# user 1\n5\n1 2 3\n");
    let out = mecpow(&["order", &input]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), "position,user_id,nonce\n0,1,1\n1,0,5\n2,1,2\n3,1,3\n");
    let out = mecpow(&["order", &input, "--algorithm", "wrr"]);
    assert_eq!(stdout(&out), "position,user_id,nonce\n0,0,5\n1,1,1\n2,1,2\n3,1,3\n");
    let bad = write(dir.path(), "bad.txt", "3 1\n");
    assert_eq!(mecpow(&["order", &bad]).status.code(), Some(2));
}

#[test]
fn solve_writes_the_filtered_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", "B = 100.0\ns = [1.0, 500.0, 1000.0]\n");
    let out = mecpow(&["solve", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["user_id", "s", "M_star_real", "M_star_int", "utility", "active"]);
    assert_eq!(rows[1][5], "false");
    assert_eq!((rows[2][3], rows[3][3]), ("60", "115"));
    assert_eq!((rows[2][5], rows[3][5]), ("true", "true"));
}
