use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FIXTURE: &str = "\
Mary|NP saw|(S\\NP)/NP John|NP
John|NP slept|S\\NP
the|NP/N dog|N barked|S\\NP
dogs|NP bark|S[dcl]\\NP loudly|(S\\NP)\\(S\\NP)
John|NP saw|(S\\NP)/NP the|NP/N dog|N
";

fn treetag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treetag")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn assert_error(out: &Output, status: i32, code: &str) -> String {
    assert_eq!(out.status.code(), Some(status), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<_> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{code}]: ")), "{err}");
    err
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn overfit_config(dir: &Path, extra: &str) -> String {
    write(dir, "fixture.txt", FIXTURE);
    write(
        dir,
        "run.cfg",
        &format!(
            "# overfit the fixture\ntrain = fixture.txt\ndev = fixture.txt\nout_dir = run\n\
             variant = AddrMLP\nembed_dim = 16\nhidden_dim = 16\ndropout = 0\nbatch_size = 2\n\
             lr = 0.01\nmax_epochs = 200\ntarget_accuracy = 1\n{extra}"
        ),
    )
}

#[test]
fn stats_of_empty_corpus_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "empty.txt", "");
    let v = stdout_json(&treetag(&["stats", &p]));
    assert_eq!(v["sentences"], 0);
    assert_eq!(v["tokens"], 0);
    assert_eq!(v["types"], 0);
    assert_eq!(v["atomic_types"], 0);
}

#[test]
fn stats_of_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "fixture.txt", FIXTURE);
    let v = stdout_json(&treetag(&["stats", &p]));
    assert_eq!(v["name"], "fixture");
    assert_eq!(v["sentences"], 5);
    assert_eq!(v["tokens"], 15);
    // NP, (S\NP)/NP, S\NP, NP/N, N, S[dcl]\NP, (S\NP)\(S\NP)
    assert_eq!(v["types"], 7);
    // NP and N
    assert_eq!(v["atomic_types"], 2);
}

#[test]
fn split_writes_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "fixture.txt", FIXTURE);
    let v = stdout_json(&treetag(&["split", &p, "--threshold", "2"]));
    let train = fs::read_to_string(dir.path().join("fixture.train")).unwrap();
    let test = fs::read_to_string(dir.path().join("fixture.test")).unwrap();
    // S[dcl]\NP and (S\NP)\(S\NP) each occur once
    assert_eq!(test, "dogs|NP bark|S[dcl]\\NP loudly|(S\\NP)\\(S\\NP)\n");
    assert_eq!(train.lines().count(), 4);
    assert_eq!((v["train_sentences"].as_u64(), v["test_sentences"].as_u64()), (Some(4), Some(1)));

    let out = dir.path().join("elsewhere");
    treetag(&["split", &p, "--threshold", "1000", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(out.join("fixture.train")).unwrap(), "");
    assert_eq!(fs::read_to_string(out.join("fixture.test")).unwrap(), FIXTURE);

    assert_error(&treetag(&["split", &p, "--threshold", "1"]), 1, "usage");
}

#[test]
fn train_tag_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = overfit_config(dir.path(), "seeds = 7\n");
    let report = stdout_json(&treetag(&["train", &cfg]));
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert_eq!(report["runs"][0]["report"]["accuracy"], 1.0);
    let run = dir.path().join("run");
    assert!(run.join("report.json").exists());
    let checkpoints: Vec<_> = fs::read_dir(&run).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).collect();
    assert_eq!(checkpoints.len(), 1);
    let ckpt = run.join("7").join("best.ckpt");
    let ckpt = ckpt.to_str().unwrap();

    let fixture = dir.path().join("fixture.txt");
    let fixture = fixture.to_str().unwrap();
    let tagged = dir.path().join("tagged.txt");
    let tagged = tagged.to_str().unwrap();
    let out = treetag(&["tag", "--checkpoint", ckpt, "--corpus", fixture, "--train", fixture, "--output", tagged]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(tagged).unwrap(), FIXTURE);

    let v = stdout_json(&treetag(&["eval", "--gold", fixture, "--pred", tagged, "--train", fixture]));
    assert_eq!(v["accuracy"], 1.0);
    assert_eq!(v["taxonomy"]["correct"], 15);

    let empty = write(dir.path(), "empty.txt", "");
    let out = treetag(&["tag", "--checkpoint", ckpt, "--corpus", &empty]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());

    let other = write(dir.path(), "other.txt", "cats|NP purr|S[dcl]\\NP\n");
    let err = assert_error(
        &treetag(&["tag", "--checkpoint", ckpt, "--corpus", fixture, "--train", &other]),
        2,
        "inventory",
    );
    assert!(err.contains("fingerprint"));
}

#[test]
fn three_seeds_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = overfit_config(dir.path(), "");
    let cfg_text = fs::read_to_string(&cfg).unwrap().replace("max_epochs = 200", "max_epochs = 2");
    fs::write(&cfg, cfg_text).unwrap();
    let report = stdout_json(&treetag(&["train", &cfg]));
    let runs = report["runs"].as_array().unwrap();
    let seeds: Vec<_> = runs.iter().map(|r| r["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, [14112, 36125, 92225]);
    let acc: Vec<f64> = runs.iter().map(|r| r["report"]["accuracy"].as_f64().unwrap()).collect();
    let mean = acc.iter().sum::<f64>() / 3.0;
    let sd = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert_eq!(report["aggregate"]["accuracy"]["n"], 3);
    assert_eq!(report["aggregate"]["accuracy"]["mean"].as_f64().unwrap(), mean);
    assert_eq!(report["aggregate"]["accuracy"]["stdev"].as_f64().unwrap(), sd);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = overfit_config(dir.path(), "hiden_dim = 8\n");
    let err = assert_error(&treetag(&["train", &cfg]), 1, "config");
    assert!(err.contains("hiden_dim"), "{err}");

    let cfg = overfit_config(dir.path(), "lr = 0.5\n");
    let err = assert_error(&treetag(&["train", &cfg]), 1, "config");
    assert!(err.contains("`lr`") && err.contains("more than once"), "{err}");
}

#[test]
fn non_finite_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = overfit_config(dir.path(), "seeds = 1\nweight_decay = inf\n");
    assert_error(&treetag(&["train", &cfg]), 3, "numeric");
}

#[test]
fn eval_reports_misalignment_position() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write(dir.path(), "gold.txt", FIXTURE);
    let pred = write(dir.path(), "pred.txt", &FIXTURE.replace("John|NP slept", "John|NP"));
    let err = assert_error(&treetag(&["eval", "--gold", &gold, "--pred", &pred, "--train", &gold]), 2, "alignment");
    assert!(err.contains("sentence 1"), "{err}");
}

#[test]
fn eval_of_gold_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write(dir.path(), "gold.txt", FIXTURE);
    let csv = dir.path().join("confusion.csv");
    let v = stdout_json(&treetag(&[
        "eval",
        "--gold",
        &gold,
        "--pred",
        &gold,
        "--train",
        &gold,
        "--confusion-csv",
        csv.to_str().unwrap(),
    ]));
    assert_eq!(v["accuracy"], 1.0);
    for bin in v["depth_bins"].as_array().unwrap() {
        assert!(bin["tokens"] == 0 || bin["accuracy"] == 1.0, "{bin}");
    }
    assert!(fs::read_to_string(csv).unwrap().starts_with("gold\\pred,0,"));

    // every fixture type is below 10, so a threshold-10 model reaches no bin
    let v = stdout_json(&treetag(&["eval", "--gold", &gold, "--pred", &gold, "--train", &gold, "--threshold", "10"]));
    for bin in v["frequency_bins"].as_array().unwrap() {
        if bin["bin"] == "1-9" || bin["bin"] == "oov" {
            assert!(bin["accuracy"].is_null(), "{bin}");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_error(&treetag(&["frobnicate"]), 1, "usage");
    assert_error(&treetag(&["split"]), 1, "usage");
    assert_error(&treetag(&["stats", "/no/such/file"]), 2, "io");
    let help = treetag(&["train", "--help"]);
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("target_accuracy"));
}

#[test]
fn external_embeddings_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "fixture.txt", FIXTURE);
    let mut emb = String::new();
    for (i, line) in FIXTURE.lines().enumerate() {
        for (j, tok) in line.split(' ').enumerate() {
            let word = tok.split('|').next().unwrap();
            emb.push_str(&format!("{word} {} {} {} 1\n", i as f64 * 0.1, j as f64 * 0.3, word.len() as f64 * 0.05));
        }
        emb.push('\n');
    }
    let emb_path = write(dir.path(), "fixture.emb", &emb);
    let cfg = write(
        dir.path(),
        "ext.cfg",
        "train = fixture.txt\ndev = fixture.txt\nout_dir = ext\nencoder = external\nhidden_dim = 4\n\
         train_embeddings = fixture.emb\ndev_embeddings = fixture.emb\nseeds = 3\nmax_epochs = 2\nlr = 0.01\n",
    );
    let report = stdout_json(&treetag(&["train", &cfg]));
    assert_eq!(report["runs"][0]["report"]["tokens"], 15);
    let ckpt = dir.path().join("ext/3/best.ckpt");
    let fixture = dir.path().join("fixture.txt");
    let args = ["tag", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", fixture.to_str().unwrap()];
    let out = treetag(&[&args[..], &["--embeddings", &emb_path]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5);
    assert_error(&treetag(&args), 2, "model");
}
