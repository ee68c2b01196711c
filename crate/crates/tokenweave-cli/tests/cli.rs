//! End-to-end runs of the binary: fixture configs in, tables and exit
//! codes out. Golden files pin the report tables for the worked episodes.

use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn tw(args: &[&str], env_seed: Option<&str>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tokenweave"));
    cmd.args(args);
    match env_seed {
        Some(s) => cmd.env("TOKENWEAVE_SEED", s),
        None => cmd.env_remove("TOKENWEAVE_SEED"),
    };
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().expect("no signal"),
        stdout: String::from_utf8(out.stdout).expect("utf8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf8 stderr"),
    }
}

fn ok(args: &[&str]) -> Run {
    let r = tw(args, None);
    assert_eq!(r.code, 0, "expected success, got {}: {}", r.code, r.stderr);
    r
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn setup(dir: &TempDir, config: &str, state: &str) -> String {
    let state = path(dir, state);
    ok(&["setup", "--config", fixture(config).to_str().unwrap(), "--state", &state]);
    state
}

#[test]
fn legacy_episode_reproduces_the_unlock_table() {
    let dir = TempDir::new().unwrap();
    let state = setup(&dir, "legacy_example.json", "state.json");
    let tr = path(&dir, "tr.json");
    let tokens = fixture("legacy_tokens.json");
    let sim = ok(&["simulate", "--state", &state, "--plan", tokens.to_str().unwrap(), "--transcript", &tr]);
    assert_eq!(sim.stdout, include_str!("goldens/legacy_table.txt"));

    let rep = ok(&["report", "--transcript", &tr]);
    assert_eq!(rep.stdout, include_str!("goldens/legacy_table.txt"));
    let csv = ok(&["report", "--transcript", &tr, "--format", "csv"]);
    assert_eq!(csv.stdout, include_str!("goldens/legacy_table.csv"));

    ok(&["verify", "--transcript", &tr]);
    ok(&["verify", "--state", &state]);
}

#[test]
fn seven_key_scenarios_match_their_group_tables() {
    let cases = [
        ("groups_size2.json", include_str!("goldens/grid7_size2.txt")),
        ("groups_size3.json", include_str!("goldens/grid7_size3.txt")),
        ("groups_size4.json", include_str!("goldens/grid7_size4.txt")),
    ];
    for (target, golden) in cases {
        let dir = TempDir::new().unwrap();
        let state = setup(&dir, "grid7.json", "state.json");
        let tr = path(&dir, "tr.json");
        ok(&[
            "simulate",
            "--state",
            &state,
            "--target",
            fixture(target).to_str().unwrap(),
            "--transcript",
            &tr,
        ]);
        let rep = ok(&["report", "--state", &state]);
        assert_eq!(rep.stdout, golden, "{target}");
        ok(&["verify", "--state", &state, "--transcript", &tr]);
    }
}

#[test]
fn planning_writes_a_plan_the_verifier_accepts() {
    let dir = TempDir::new().unwrap();
    let state = setup(&dir, "grid7.json", "state.json");
    let plan = path(&dir, "plan.json");
    let run = ok(&[
        "plan",
        "--state",
        &state,
        "--target",
        fixture("groups_size2.json").to_str().unwrap(),
        "--plan",
        &plan,
    ]);
    // 20 key instances over at most 2v-2 per token, so at least two tokens,
    // and the first line of orders names a key and a coordinate.
    assert!(run.stdout.lines().count() >= 3, "{}", run.stdout);
    assert!(run.stdout.contains("K1 ("), "{}", run.stdout);
    let v = ok(&["verify", "--state", &state, "--plan", &plan]);
    assert!(v.stdout.contains("plan integrity"), "{}", v.stdout);
    assert!(v.stdout.contains("20 instances"), "{}", v.stdout);
}

#[test]
fn revocation_rekeys_through_the_cli() {
    let dir = TempDir::new().unwrap();
    let state = setup(&dir, "grid_small.json", "state.json");
    let tr = path(&dir, "tr.json");
    ok(&[
        "simulate",
        "--state",
        &state,
        "--target",
        fixture("groups_small.json").to_str().unwrap(),
        "--transcript",
        &tr,
    ]);
    let rev = ok(&["revoke", "--state", &state, "--node", "0"]);
    assert!(rev.stdout.contains("N2    K3 H(K1,K3)"), "{}", rev.stdout);
    assert!(rev.stdout.contains("N3    K3 H(K1,K3) H(K2,K3) H(K1,K2,K3)"), "{}", rev.stdout);
    assert!(rev.stdout.contains("N4    K3 H(K2,K3)"), "{}", rev.stdout);
    assert!(rev.stdout.contains("G1     N2 N3     H(K1,K3)"), "{}", rev.stdout);
    assert!(rev.stdout.contains("G2     N3 N4     H(K2,K3)"), "{}", rev.stdout);
    assert!(rev.stdout.contains("G3     N2 N3 N4  K3"), "{}", rev.stdout);

    // The state file carries the revocation; a fresh report shows the new
    // groups and no node N1.
    let rep = ok(&["report", "--state", &state]);
    assert!(!rep.stdout.contains("N1 "), "{}", rep.stdout);
    assert!(rep.stdout.contains("H(K2,K3)"), "{}", rep.stdout);

    let again = tw(&["revoke", "--state", &state, "--node", "0"], None);
    assert_eq!(again.code, 2, "{}", again.stderr);
}

#[test]
fn seed_precedence_is_flag_then_env_then_config() {
    let dir = TempDir::new().unwrap();
    let cfg = fixture("grid_small.json");
    let cfg = cfg.to_str().unwrap();
    let state = path(&dir, "state.json");

    let base = ok(&["setup", "--config", cfg, "--state", &state]);
    assert!(base.stdout.contains("seed      42"), "{}", base.stdout);

    let env = tw(&["setup", "--config", cfg, "--state", &state], Some("777"));
    assert_eq!(env.code, 0);
    assert!(env.stdout.contains("seed      777"), "{}", env.stdout);

    let flag = tw(&["setup", "--config", cfg, "--state", &state, "--seed", "888"], Some("777"));
    assert_eq!(flag.code, 0);
    assert!(flag.stdout.contains("seed      888"), "{}", flag.stdout);

    let bad = tw(&["setup", "--config", cfg, "--state", &state], Some("abc"));
    assert_eq!(bad.code, 2, "{}", bad.stderr);
    assert!(bad.stderr.contains("TOKENWEAVE_SEED"), "{}", bad.stderr);
}

#[test]
fn identical_runs_produce_byte_identical_files() {
    let dir = TempDir::new().unwrap();
    let state_a = setup(&dir, "grid7.json", "a.json");
    let state_b = setup(&dir, "grid7.json", "b.json");
    assert_eq!(
        std::fs::read(&state_a).unwrap(),
        std::fs::read(&state_b).unwrap(),
        "setup is deterministic"
    );
    let tr_a = path(&dir, "tr_a.json");
    let tr_b = path(&dir, "tr_b.json");
    let target = fixture("groups_size4.json");
    let target = target.to_str().unwrap();
    ok(&["simulate", "--state", &state_a, "--target", target, "--transcript", &tr_a]);
    ok(&["simulate", "--state", &state_b, "--target", target, "--transcript", &tr_b]);
    assert_eq!(
        std::fs::read(&tr_a).unwrap(),
        std::fs::read(&tr_b).unwrap(),
        "transcripts are byte-identical"
    );
}

#[test]
fn tampered_documents_are_caught() {
    let dir = TempDir::new().unwrap();
    let state = setup(&dir, "grid_small.json", "state.json");
    let plan = path(&dir, "plan.json");
    let tr = path(&dir, "tr.json");
    let target = fixture("groups_small.json");
    ok(&["plan", "--state", &state, "--target", target.to_str().unwrap(), "--plan", &plan]);

    // A plan whose claimed totals drifted from its tokens is refused.
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    doc["total_instances"] = serde_json::json!(99);
    let bent_plan = path(&dir, "bent_plan.json");
    std::fs::write(&bent_plan, serde_json::to_string(&doc).unwrap()).unwrap();
    let sim = tw(&["simulate", "--state", &state, "--plan", &bent_plan, "--transcript", &tr], None);
    assert_eq!(sim.code, 4, "{}", sim.stderr);
    assert!(sim.stderr.contains("corrupted plan"), "{}", sim.stderr);

    // The intact plan broadcasts fine; then a transcript with an edited
    // unlock record fails replay.
    ok(&["simulate", "--state", &state, "--plan", &plan, "--transcript", &tr]);
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&tr).unwrap()).unwrap();
    doc["tokens"][0]["unlocked"] = serde_json::json!({});
    let bent_tr = path(&dir, "bent_tr.json");
    std::fs::write(&bent_tr, serde_json::to_string(&doc).unwrap()).unwrap();
    let ver = tw(&["verify", "--transcript", &bent_tr], None);
    assert_eq!(ver.code, 1, "{}", ver.stderr);
    assert!(ver.stdout.contains("FAIL"), "{}", ver.stdout);
}

#[test]
fn exit_codes_name_the_failure_class() {
    let dir = TempDir::new().unwrap();

    // Unknown config fields are schema violations.
    let bogus = path(&dir, "bogus.json");
    std::fs::write(&bogus, r#"{"variant":"grid","v":3,"lp":16,"m":3,"rng_seed":1,"bogus":1}"#)
        .unwrap();
    let state = path(&dir, "state.json");
    let r = tw(&["setup", "--config", &bogus, "--state", &state], None);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("bogus"), "{}", r.stderr);

    // A key the system does not have is an infeasible target.
    let state = setup(&dir, "grid_small.json", "state.json");
    let target = path(&dir, "target.json");
    std::fs::write(&target, r#"{"key_grids":{"9":[0]}}"#).unwrap();
    let plan = path(&dir, "plan.json");
    let r = tw(&["plan", "--state", &state, "--target", &target, "--plan", &plan], None);
    assert_eq!(r.code, 3, "{}", r.stderr);

    // Unparseable plan files count as corrupted plans.
    let garbled = path(&dir, "garbled.json");
    std::fs::write(&garbled, "{").unwrap();
    let tr = path(&dir, "tr.json");
    let r = tw(&["simulate", "--state", &state, "--plan", &garbled, "--transcript", &tr], None);
    assert_eq!(r.code, 4, "{}", r.stderr);

    // A revocation no expression can survive is infeasible, not malformed:
    // the only delivered key burns with the leaver.
    let lone = path(&dir, "lone.json");
    std::fs::write(
        &lone,
        r#"{"groups":[{"name":"G1","members":[0,1,2],"expr":{"single":0}}]}"#,
    )
    .unwrap();
    ok(&["simulate", "--state", &state, "--target", &lone, "--transcript", &tr]);
    let r = tw(&["revoke", "--state", &state, "--node", "1"], None);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("no expression separates"), "{}", r.stderr);
}

#[test]
fn verify_flags_a_stack_with_a_unique_column() {
    let dir = TempDir::new().unwrap();
    let bad = path(&dir, "bad.json");
    std::fs::write(
        &bad,
        r#"{
  "variant": "legacy",
  "v": 6,
  "lp": 16,
  "m": 2,
  "rng_seed": 7,
  "codebook": ["110001", "011100", "100111"],
  "node_count": 3,
  "rows_per_node": 2
}"#,
    )
    .unwrap();
    let state = path(&dir, "state.json");
    ok(&["setup", "--config", &bad, "--state", &state]);
    let r = tw(&["verify", "--state", &state], None);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stdout.contains("unique columns at 3"), "{}", r.stdout);
}

#[test]
fn shares_and_distance_systems_print_per_node_rows() {
    let dir = TempDir::new().unwrap();
    let state = setup(&dir, "grid_small.json", "state.json");
    let shares = ok(&["shares", "--state", &state]);
    // Header plus one line per grid node.
    assert_eq!(shares.stdout.lines().count(), 1 + 9, "{}", shares.stdout);

    let dist_cfg = path(&dir, "dist.json");
    std::fs::write(
        &dist_cfg,
        r#"{"variant":"distance","v":12,"lp":16,"m":1,"rng_seed":3}"#,
    )
    .unwrap();
    let dist_state = path(&dir, "dist_state.json");
    ok(&["setup", "--config", &dist_cfg, "--state", &dist_state]);
    let shares = ok(&["shares", "--state", &dist_state]);
    assert_eq!(shares.stdout.lines().count(), 1 + 10, "{}", shares.stdout);
    let v = ok(&["verify", "--state", &dist_state]);
    assert!(v.stdout.contains("distances span [4,8]"), "{}", v.stdout);
}
