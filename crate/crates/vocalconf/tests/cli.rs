use std::path::Path;
use std::process::{Command, Output};

use vocalconf::fixture::{write_fixture, FixtureSpec};

fn vocalconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vocalconf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn foldplan_twice_prints_the_same_checksum() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    let labels = dir.path().join("labels.csv");
    let run = |out: &str| {
        let o = vocalconf(&["foldplan", "--labels", s(&labels), "--k", "5", "--seed", "7", "--out", s(&dir.path().join(out))]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert!(a.starts_with("checksum "));
    assert_eq!(a.trim().len(), "checksum ".len() + 64);
    assert_eq!(a, b);
}

#[test]
fn extract_with_a_missing_wav_exits_1_naming_the_clip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_fixture(dir.path(), &FixtureSpec { per_class: 5, pool_per_class: 2, ..FixtureSpec::default() }).unwrap();
    let o = vocalconf(&["extract", "--manifest", s(&manifest), "--out", s(&dir.path().join("f.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error kind=clip: clip `clip0000`"), "{err}");
}

#[test]
fn extract_from_audio_writes_a_full_store() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_fixture(dir.path(), &FixtureSpec { per_class: 2, pool_per_class: 1, k: 2, audio: true, ..FixtureSpec::default() }).unwrap();
    let out = dir.path().join("f.csv");
    let o = vocalconf(&["extract", "--manifest", s(&manifest), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let store = vocalconf::feature_store::read_feature_store(&out).unwrap();
    assert_eq!(store.len(), 9);
    let o = vocalconf(&["preprocess", "--manifest", s(&manifest), "--out", s(&dir.path().join("canon"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("canon/pool0000.wav").exists());
}

#[test]
fn cv_with_two_arms_reports_two_summaries_and_a_passing_audit() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    let o = vocalconf(&["cv", "--config", s(&dir.path().join("run.cfg")), "--arms", "gt_only,proposed"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("audit PASS (20 checks)"), "{text}");

    let out = dir.path().join("out");
    let cv: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("cv.json")).unwrap()).unwrap();
    let arms: Vec<&str> = cv["summaries"].as_array().unwrap().iter().map(|s| s["arm"].as_str().unwrap()).collect();
    assert_eq!(arms, ["gt_only", "proposed"]);
    assert!(cv["audit"]["violations"].as_array().unwrap().is_empty());
    for f in ["per_fold.csv", "per_arm.csv", "macro_f1.svg", "confusion_proposed.svg", "provenance.json", "resolved.cfg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let prov: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap()).unwrap();
    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fold_plan.json")).unwrap()).unwrap();
    assert_eq!(prov["fold_plan_checksum"], plan["checksum"]);
    assert_eq!(prov["store_hashes"].as_object().unwrap().len(), 3);
    let resolved = std::fs::read_to_string(out.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("arms = gt_only,proposed"));

    // The recorded artifacts re-audit cleanly against the plan.
    let o = vocalconf(&["audit", "--plan", s(&dir.path().join("fold_plan.json")), "--cv", s(&out.join("cv.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).ends_with("audit PASS (20 checks)\n"));
}

#[test]
fn audit_against_a_different_plan_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &FixtureSpec { per_class: 10, pool_per_class: 5, ..FixtureSpec::default() }).unwrap();
    let artifacts = dir.path().join("artifacts.json");
    // Fold 0 of the fixture plan trains on its own test ids.
    let plan = vocalconf::json::read_fold_plan(dir.path().join("fold_plan.json")).unwrap();
    let fold0 = vocalconf_core::evaluation::FoldArtifacts { fold: 0, labeller_train_ids: plan.test_ids(0), ..Default::default() };
    vocalconf::json::write(&artifacts, &vec![fold0]).unwrap();
    let o = vocalconf(&["audit", "--plan", s(&dir.path().join("fold_plan.json")), "--artifacts", s(&artifacts)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error kind=audit:"), "{err}");
    assert!(err.contains("labeller_train_disjoint_from_test"));
}

#[test]
fn stage_verbs_chain_on_one_fold() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_fixture(dir.path(), &FixtureSpec { per_class: 20, pool_per_class: 20, ..FixtureSpec::default() }).unwrap();
    let cfg = dir.path().join("run.cfg");
    let p = |f: &str| dir.path().join(f);
    let ok = |o: Output| {
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    ok(vocalconf(&["train-labeller", "--manifest", s(&manifest), "--fold", "1", "--config", s(&cfg), "--out", s(&p("l.csnn"))]));
    let kept = ok(vocalconf(&["pseudo", "--manifest", s(&manifest), "--fold", "1", "--config", s(&cfg), "--labeller", s(&p("l.csnn")), "--out", s(&p("ps.csv"))]));
    assert!(kept.starts_with("kept "), "{kept}");
    let metrics = ok(vocalconf(&[
        "train-hybrid", "--manifest", s(&manifest), "--fold", "1", "--config", s(&cfg), "--pseudo", s(&p("ps.csv")), "--out", s(&p("h.csnn")),
    ]));
    let m: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert!(m["macro_f1"].as_f64().unwrap() > 0.0);

    // A labeller from fold 1 does not match fold 2's normalizer.
    let o = vocalconf(&["pseudo", "--manifest", s(&manifest), "--fold", "2", "--config", s(&cfg), "--labeller", s(&p("l.csnn")), "--out", s(&p("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = vocalconf(&["train-labeller", "--manifest", s(&manifest), "--fold", "9", "--out", s(&p("y.csnn"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn aggregate_writes_icc_and_consensus() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    let out = dir.path().join("agg");
    let o = vocalconf(&["aggregate", "--annotations", s(&dir.path().join("annotations.jsonl")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ICC(2,k) = "));
    let consensus = std::fs::read_to_string(out.join("consensus.csv")).unwrap();
    assert!(consensus.starts_with("clip_id,label,max_posterior,ambiguous\n"));
    assert_eq!(consensus.lines().count(), 121);
    let icc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("icc.json")).unwrap()).unwrap();
    assert_eq!(icc["raters"], 3);
    assert!(out.join("rater_matrix.csv").exists() && out.join("consensus.json").exists());
}

#[test]
fn calibrate_prints_temperature_and_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let logits = dir.path().join("z.csv");
    // Three right, one wrong, all with margin 3: the optimum puts 3/4 on the argmax.
    std::fs::write(&logits, "id,z_0,z_1,z_2,label\na,3,0,0,0\nb,0,3,0,1\nc,0,0,3,2\nd,3,0,0,1\n").unwrap();
    let o = vocalconf(&["calibrate", "--logits", s(&logits)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    let t: f64 = lines.next().unwrap().strip_prefix("# temperature = ").unwrap().parse().unwrap();
    // softmax(3/T) puts 3/4 on the argmax when e^(3/T) = 6.
    assert!((t - 3.0 / 6f64.ln()).abs() < 1e-4, "T = {t}");
    assert_eq!(lines.next(), Some("id,p_0,p_1,p_2"));
    let p0: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((p0 - 0.75).abs() < 1e-6);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let o = vocalconf(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error kind=usage:"));
    assert_eq!(vocalconf(&["--help"]).status.code(), Some(0));
    assert_eq!(vocalconf(&["cv", "--config", "/nonexistent/run.cfg"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "manifest = m.json\nwarp = 9\n").unwrap();
    let o = vocalconf(&["cv", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error kind=config: config line 2"), "{}", stderr(&o));
}

#[test]
fn report_rebuilds_tables_from_cv_json() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &FixtureSpec { per_class: 15, pool_per_class: 10, ..FixtureSpec::default() }).unwrap();
    let cfg = dir.path().join("run.cfg");
    assert!(vocalconf(&["cv", "--config", s(&cfg), "--arms", "gt_only"]).status.success());
    let rep = dir.path().join("rep");
    let o = vocalconf(&["report", "--cv", s(&dir.path().join("out/cv.json")), "--out", s(&rep)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(rep.join("per_fold.csv")).unwrap(), std::fs::read(dir.path().join("out/per_fold.csv")).unwrap());
}
