//! Re-records the committed replay transcripts with the rule-based fixture
//! model. Run with `cargo test -p repro-cli --test regenerate -- --ignored`.

mod support;

use support::{exec_in, fixture_backends, run_fixture};

#[test]
#[ignore = "rewrites fixtures/run"]
fn regenerate_fixture_transcripts() {
    let transcripts = run_fixture("transcripts.jsonl");
    let _ = std::fs::remove_file(&transcripts);
    let backends = fixture_backends();
    let config = run_fixture("repro.toml");
    let rubric = run_fixture("rubric.json");
    let rubric = rubric.to_str().unwrap();

    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--mode", "record", "fingerprint"],
        vec!["--mode", "record", "reproduce"],
        vec![
            "--mode", "record", "score", "--rubric", rubric, "--grade", "--match",
        ],
    ] {
        let out = exec_in(&config, dir.path(), &args, &backends).unwrap();
        print!("{}", out.summary);
    }
    let one_round = tempfile::tempdir().unwrap();
    let config = run_fixture("repro_one_round.toml");
    let args = ["--mode", "record", "reproduce", "--from-scratch"];
    let out = exec_in(&config, one_round.path(), &args, &backends).unwrap();
    print!("{}", out.summary);
    std::fs::copy(
        dir.path().join("fingerprint.json"),
        run_fixture("fingerprint.golden.json"),
    )
    .unwrap();
    std::fs::copy(
        dir.path().join("loop_trace.json"),
        run_fixture("loop_trace.golden.json"),
    )
    .unwrap();
}
