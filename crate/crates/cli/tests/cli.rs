//! End-to-end tests of the `nsbox` binary: exit codes, report shapes,
//! byte-determinism and system-file loading.

use std::path::PathBuf;
use std::process::{Command, Output};

fn nsbox(args: &[&str]) -> Output {
    nsbox_env(args, &[])
}

fn nsbox_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nsbox"));
    cmd.args(args);
    for (key, value) in env {
        cmd.env(key, value);
    }
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(out)).expect("stdout is valid JSON")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("nsbox-test-{}-{name}", std::process::id()))
}

#[test]
fn attack_reproduces_the_worked_example() {
    let out = nsbox(&["attack", "--eps", "1/10", "--n", "1", "--f", "identity"]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["summary"]["d"], "1/10");
    assert_eq!(report["summary"]["strategy"], "construction");
    assert_eq!(report["items"][0]["d_num"], "1");
    assert_eq!(report["items"][0]["d_den"], "10");
    assert_eq!(report["items"][0]["bound_holds"], true);
    let block = &report["element"]["cells"]["0,0"];
    assert_eq!(block["0,0"], "1/2");
    assert_eq!(block["0,1"], "1/10");
    assert_eq!(block["1,0"], "0/1");
    assert_eq!(block["1,1"], "2/5");
    // The two weighted elements must answer one output pair with certainty
    // about the hash bit somewhere; the factor table records the reweighting.
    assert_eq!(report["c_table"]["0,0"]["0,1"], "2/1");
    assert_eq!(report["passed"], true);
}

#[test]
fn attack_with_lp_reports_the_optimum() {
    let out = nsbox(&["attack", "--eps", "1/10", "--n", "1", "--f", "identity", "--lp"]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["summary"]["d_opt"], "1/5");
    assert_eq!(report["items"][0]["d_opt_num"], "1");
    assert_eq!(report["items"][0]["d_opt_den"], "5");
}

#[test]
fn attack_rejects_eps_outside_the_bound_domain() {
    let out = nsbox(&["attack", "--eps", "3/10"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("outside"), "stderr: {}", stderr(&out));
}

#[test]
fn check_exit_codes_follow_the_contract() {
    let failing = nsbox(&["check", "--system", "almost-backward-example", "--family", "backward"]);
    assert_eq!(code(&failing), 3);
    let report = json(&failing);
    assert_eq!(report["passed"], false);
    assert!(report["items"][0]["constraint"]
        .as_str()
        .unwrap()
        .starts_with("backward[alice,i=2]"));

    let clean = nsbox(&[
        "check", "--system", "product", "--eps", "1/10", "--n", "2", "--family", "full",
    ]);
    assert_eq!(code(&clean), 0);
    assert_eq!(json(&clean)["summary"]["violations"], 0);

    let usage = nsbox(&["check", "--system", "product", "--family", "nosuch"]);
    assert_eq!(code(&usage), 2);
    assert!(stderr(&usage).contains("unknown family"));
}

#[test]
fn decimal_eps_is_parsed_exactly() {
    let out = nsbox(&["chsh", "--system", "noisy-pr", "--eps", "0.1"]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["config"]["eps"], "1/10");
    assert_eq!(report["summary"]["value"], "9/10");
}

#[test]
fn chsh_reference_values() {
    let pr = json(&nsbox(&["chsh", "--system", "pr"]));
    assert_eq!(pr["summary"]["value"], "1/1");
    assert_eq!(pr["summary"]["exceeds_local"], true);
    assert_eq!(pr["summary"]["local_max"], "3/4");
}

#[test]
fn scan_csv_has_the_documented_columns() {
    let out = nsbox(&["scan", "--eps", "1/10", "--n", "2", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "f_hex,strategy,d_num,d_den,bound_holds");
    assert_eq!(data.len(), 1 + 16, "header plus one row per hash function");
    assert!(data[1..].iter().all(|row| row.ends_with(",true")));
    assert!(text.contains("# summary min_d=1/10"));
    assert!(text.contains("# summary all_bounds_hold=true"));
}

#[test]
fn reports_are_byte_identical_across_worker_counts() {
    let args = ["scan", "--eps", "1/5", "--n", "2"];
    let one = nsbox(&[&args[..], &["--jobs", "1"]].concat());
    let four = nsbox(&[&args[..], &["--jobs", "4"]].concat());
    let via_env = nsbox_env(&args, &[("NSBOX_JOBS", "3")]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout, "--jobs must not change report bytes");
    assert_eq!(one.stdout, via_env.stdout, "NSBOX_JOBS must not change report bytes");

    let again = nsbox(&[&args[..], &["--jobs", "1"]].concat());
    assert_eq!(one.stdout, again.stdout, "identical config, identical bytes");
}

#[test]
fn scan_refuses_past_the_cap_without_force() {
    let out = nsbox(&["scan", "--eps", "1/10", "--n", "4"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cap"));
}

#[test]
fn implication_emits_certificates_and_witnesses() {
    let holds = nsbox(&[
        "implication", "--from", "pairwise-box,ab", "--to", "almost-backward", "--n", "3",
    ]);
    assert_eq!(code(&holds), 0);
    let report = json(&holds);
    assert_eq!(report["summary"]["holds"], true);
    assert_eq!(report["certificate"]["verified"], true);
    assert!(!report["certificate"]["combination"].as_array().unwrap().is_empty());

    let fails = nsbox(&["implication", "--from", "ab", "--to", "full", "--n", "2"]);
    assert_eq!(code(&fails), 3);
    let report = json(&fails);
    assert_eq!(report["summary"]["holds"], false);
    assert!(report["summary"]["witness"]
        .as_str()
        .unwrap()
        .starts_with("full-ns"));
}

#[test]
fn verify_lemmas_passes_and_refuses_degenerate_noise() {
    let out = nsbox(&["verify-lemmas", "--eps", "1/10", "--n", "2"]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["summary"]["all_hold"], true);
    assert_eq!(report["items"].as_array().unwrap().len(), 11);

    let refused = nsbox(&["verify-lemmas", "--eps", "0", "--n", "2"]);
    assert_eq!(code(&refused), 2);
}

#[test]
fn lp_sweeps_weights_and_exports_the_program() {
    let export = temp_path("lp-export.txt");
    let out = nsbox(&[
        "lp", "--eps", "1/10", "--n", "1", "--f", "identity",
        "--p-grid", "1/3,1/2,2/3",
        "--export", export.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    let items = report["items"].as_array().unwrap();
    assert_eq!(items.len(), 3);
    assert!(items.iter().all(|item| item["d_opt_num"] == "1" && item["d_opt_den"] == "5"));
    assert_eq!(report["summary"]["construction_d"], "1/10");

    let text = std::fs::read_to_string(&export).expect("export written");
    assert!(text.contains("Maximize"));
    assert!(text.contains("Subject To"));
    std::fs::remove_file(&export).ok();
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let path = temp_path("report.json");
    let to_stdout = nsbox(&["scan", "--eps", "1/10", "--n", "1"]);
    let to_file = nsbox(&[
        "scan", "--eps", "1/10", "--n", "1", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&to_file), 0);
    assert!(to_file.stdout.is_empty());
    let written = std::fs::read(&path).expect("report written");
    assert_eq!(written, to_stdout.stdout);
    std::fs::remove_file(&path).ok();
}

#[test]
fn system_files_load_and_malformed_ones_fail() {
    let path = temp_path("system.json");
    let sys = nsbox::boxes::BoxSystem::noisy_pr_box(&nsbox::rational::rat(1, 10)).unwrap();
    std::fs::write(&path, nsbox::boxes::to_json_string(&sys)).unwrap();

    let check = nsbox(&["check", "--system", path.to_str().unwrap(), "--family", "full"]);
    assert_eq!(code(&check), 0, "stderr: {}", stderr(&check));
    assert_eq!(json(&check)["summary"]["violations"], 0);

    let chsh = nsbox(&["chsh", "--system", path.to_str().unwrap()]);
    assert_eq!(json(&chsh)["summary"]["value"], "9/10");

    std::fs::write(&path, "{\"n\": 1}").unwrap();
    let broken = nsbox(&["check", "--system", path.to_str().unwrap(), "--family", "full"]);
    assert_eq!(code(&broken), 2);

    let missing = nsbox(&["check", "--system", "/nonexistent/no.json", "--family", "full"]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("not a built-in system name"));
    std::fs::remove_file(&path).ok();
}

#[test]
fn input_pair_flags_are_validated() {
    let ok = nsbox(&[
        "attack", "--eps", "1/10", "--n", "2", "--f", "xor", "--u", "01", "--v", "10",
    ]);
    assert_eq!(code(&ok), 0);
    let report = json(&ok);
    assert_eq!(report["config"]["u"], "01");
    assert_eq!(report["config"]["v"], "10");

    let wrong_len = nsbox(&["attack", "--eps", "1/10", "--n", "2", "--f", "xor", "--u", "011"]);
    assert_eq!(code(&wrong_len), 2);

    let garbage = nsbox(&["attack", "--eps", "1/10", "--n", "1", "--u", "2"]);
    assert_eq!(code(&garbage), 2);
}
