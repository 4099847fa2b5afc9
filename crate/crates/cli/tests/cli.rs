use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TABLES: [&str; 6] = ["stats", "dqi", "distances", "boost", "ilc", "correlation"];

fn detrans(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_detrans")).args(args).output().expect("binary runs");
    out
}

fn ok(args: &[&str]) -> String {
    let out = detrans(args);
    assert!(
        out.status.success(),
        "detrans {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--out", s(&data), "--seed", "9", "--per-class", "30"]);
    data
}

fn tables(dir: &Path) -> Vec<Vec<u8>> {
    TABLES.iter().map(|t| fs::read(dir.join(format!("{t}.csv"))).unwrap()).collect()
}

#[test]
fn pipeline_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = data.join("pipeline.toml");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["pipeline", s(&cfg), "--output-dir", s(&a)]);
    ok(&["pipeline", s(&cfg), "--output-dir", s(&b)]);
    ok(&["pipeline", s(&cfg), "--output-dir", s(&c), "--sequential"]);
    assert_eq!(tables(&a), tables(&b));
    assert_eq!(tables(&a), tables(&c));
    let boost = String::from_utf8(fs::read(a.join("boost.csv")).unwrap()).unwrap();
    assert_eq!(boost.lines().count(), 1 + 1 + 4);

    // a rerun from the manifest reproduces every table
    let r = tmp.path().join("r");
    ok(&["rerun", s(&a.join("manifest.json")), "--output-dir", s(&r)]);
    assert_eq!(tables(&a), tables(&r));

    // re-emitting from the manifest gives the same bytes
    let e = tmp.path().join("e");
    ok(&["report", s(&a.join("manifest.json")), "--out", s(&e)]);
    assert_eq!(tables(&a), tables(&e));
    ok(&["report", s(&a.join("manifest.json")), "--out", s(&e), "--format", "json"]);
    assert!(e.join("distances.json").is_file());
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = data.join("pipeline.toml");
    let out = tmp.path().join("ilc");
    ok(&["pipeline", s(&cfg), "--output-dir", s(&out), "--method", "ilc", "--seed", "3"]);
    let ilc = fs::read_to_string(out.join("ilc.csv")).unwrap();
    // baseline, one per source, all sources
    assert_eq!(ilc.lines().count(), 1 + 1 + 4 + 1);
    assert_eq!(fs::read_to_string(out.join("boost.csv")).unwrap().lines().count(), 1);
}

#[test]
fn individual_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let t = data.join("hotel-reviews.jsonl");
    let (fnews, jobs, sms) = (data.join("fake-news.jsonl"), data.join("job-scams.jsonl"), data.join("sms-spam.jsonl"));

    ok(&["ingest", s(&t), "--out", s(&tmp.path().join("ingested.jsonl"))]);
    let stats = ok(&["describe", s(&t), s(&fnews)]);
    assert!(stats.starts_with("dataset,mean_words"));
    assert_eq!(stats.lines().count(), 3);

    let dqi = ok(&["dqi", s(&t), "--a", "5", "--b", "12"]);
    assert!(dqi.lines().next().unwrap().contains("C1.term3"));
    assert!(!detrans(&["dqi", s(&t)]).status.success(), "C1 without a and b must fail");
    assert!(!detrans(&["dqi", s(&t), "--components", "C5", "--a", "1", "--b", "2"]).status.success());

    let dist_path = tmp.path().join("d.csv");
    ok(&[
        "distance", "--target", s(&t), "--source", s(&fnews), "--source", s(&jobs), "--source", s(&sms), "--out",
        s(&dist_path),
    ]);
    let dist = fs::read_to_string(&dist_path).unwrap();
    assert_eq!(dist.lines().next().unwrap(), "source,D_KL(Q||P),D_KL(P||Q),D_JS,D_cos");

    let boost_path = tmp.path().join("b.csv");
    let ens = tmp.path().join("ens");
    ok(&[
        "boost", "--method", "gapboost", "--target", s(&t), "--source", s(&fnews), "--source", s(&jobs), "--source", s(&sms),
        "--seed", "1",
        "--rounds", "3", "--ensembles", s(&ens), "--out", s(&boost_path),
    ]);
    assert!(ens.join("gapboost-fake-news.json").is_file());
    let corr = ok(&["correlate", "--distances", s(&dist_path), "--deltas", s(&boost_path)]);
    assert_eq!(corr.lines().count(), 5);

    let out = tmp.path().join("aug.jsonl");
    ok(&[
        "augment", s(&t), "--method", "2", "--annotations", s(&data.join("gazetteer.json")), "--out", s(&out),
    ]);
    let aug = fs::read_to_string(&out).unwrap();
    assert!(aug.contains("PROPN"));
    assert!(!aug.contains("Maria Lopez"));
    // explanation methods need a glossary entry for every type
    let fail = detrans(&["augment", s(&t), "--method", "1", "--annotations", s(&data.join("gazetteer.json")), "--out", s(&out)]);
    assert!(!fail.status.success());

    let ilc = ok(&["ilc", "--target", s(&t), "--seed", "2", "--dim", "16", "--hashed-source", s(&fnews)]);
    assert_eq!(ilc.lines().count(), 3);
}

#[test]
fn invalid_config_fails_before_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let cfg = fs::read_to_string(data.join("pipeline.toml")).unwrap().replace("seed = 9\n", "");
    let bad = data.join("bad.toml");
    fs::write(&bad, cfg).unwrap();
    let out = tmp.path().join("never");
    let res = detrans(&["pipeline", s(&bad), "--output-dir", s(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists(), "no artifacts before validation passes");
}
