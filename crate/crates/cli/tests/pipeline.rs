use std::fs;
use std::path::Path;

use clap::Parser;
use diffgad_cli::cli::{cmd_gen, cmd_pipeline, Cli, Command, GenArgs, PipelineArgs};
use diffgad_cli::pipeline::{MANIFEST_FILE, METRICS_FILE, SCORES_FILE};

fn gen(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["diffgad", "gen", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let Command::Gen(g) = Cli::try_parse_from(args).unwrap().command else { unreachable!() };
    cmd_gen(&g).unwrap()
}

fn small_dataset(dir: &Path) {
    gen(dir, &["--nodes", "150", "--struct", "2", "--clique", "5", "--ctx", "5", "--seed", "3"]);
}

fn pipeline_args(data: &Path, run: &Path, extra: &[&str]) -> PipelineArgs {
    let mut args = vec![
        "diffgad",
        "pipeline",
        "--data",
        data.to_str().unwrap(),
        "--run-dir",
        run.to_str().unwrap(),
        "--epochs",
        "15",
        "--dm-epochs",
        "15",
        "--trials",
        "2",
        "--sample-steps",
        "8",
        "--seed",
        "5",
    ];
    args.extend_from_slice(extra);
    let Command::Pipeline(p) = Cli::try_parse_from(args).unwrap().command else { unreachable!() };
    p
}

#[test]
fn gen_counts_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let line = gen(&tmp.path().join("a"), &["--nodes", "1000", "--struct", "3", "--clique", "10", "--ctx", "20", "--seed", "7"]);
    assert!(line.contains("outliers=50"), "{line}");
    gen(&tmp.path().join("b"), &["--nodes", "1000", "--struct", "3", "--clique", "10", "--ctx", "20", "--seed", "7"]);
    for f in ["edges.tsv", "features.csv", "labels.csv", "gen_meta.txt"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
    let labels = fs::read_to_string(tmp.path().join("a/labels.csv")).unwrap();
    assert_eq!(labels.lines().filter(|l| *l == "1").count(), 50);

    let too_many = GenArgs {
        out: tmp.path().join("c"),
        nodes: 100,
        n_struct: 30,
        clique: 10,
        ..match Cli::try_parse_from(["diffgad", "gen", "--out", "x"]).unwrap().command {
            Command::Gen(g) => g,
            _ => unreachable!(),
        }
    };
    assert!(cmd_gen(&too_many).is_err());
}

#[test]
fn runs_without_labels_and_labels_do_not_change_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let unlabeled = tmp.path().join("unlabeled");
    fs::create_dir_all(&unlabeled).unwrap();
    for f in ["edges.tsv", "features.csv"] {
        fs::copy(data.join(f), unlabeled.join(f)).unwrap();
    }

    cmd_pipeline(&pipeline_args(&unlabeled, &tmp.path().join("r0"), &[])).unwrap();
    assert!(tmp.path().join("r0").join(SCORES_FILE).exists());
    assert!(!tmp.path().join("r0").join(METRICS_FILE).exists());

    cmd_pipeline(&pipeline_args(&data, &tmp.path().join("r1"), &[])).unwrap();
    assert!(tmp.path().join("r1").join(METRICS_FILE).exists());
    assert_eq!(
        fs::read(tmp.path().join("r0").join(SCORES_FILE)).unwrap(),
        fs::read(tmp.path().join("r1").join(SCORES_FILE)).unwrap()
    );
}

#[test]
fn rerun_is_byte_identical_and_resume_retrains_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cmd_pipeline(&pipeline_args(&data, &a, &[])).unwrap();
    cmd_pipeline(&pipeline_args(&data, &b, &[])).unwrap();
    let scores = fs::read(a.join(SCORES_FILE)).unwrap();
    assert_eq!(scores, fs::read(b.join(SCORES_FILE)).unwrap());

    let ckpt_before = fs::metadata(a.join("ae.ckpt")).unwrap().modified().unwrap();
    fs::remove_file(a.join(SCORES_FILE)).unwrap();
    fs::remove_file(a.join(METRICS_FILE)).unwrap();
    cmd_pipeline(&pipeline_args(&data, &a, &["--resume"])).unwrap();
    let manifest = fs::read_to_string(a.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("stage.train_ae.status = reused"), "{manifest}");
    assert!(manifest.contains("stage.train_dm.status = reused"), "{manifest}");
    assert!(!manifest.contains("= trained"), "{manifest}");
    assert_eq!(fs::metadata(a.join("ae.ckpt")).unwrap().modified().unwrap(), ckpt_before);
    assert_eq!(fs::read(a.join(SCORES_FILE)).unwrap(), scores);

    // detection settings may change on resume; training settings may not
    cmd_pipeline(&pipeline_args(&data, &a, &["--resume", "--component", "ae"])).unwrap();
    assert!(cmd_pipeline(&pipeline_args(&data, &a, &["--resume", "--alpha", "1"])).is_err());
}

#[test]
fn stage_commands_match_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let full = tmp.path().join("full");
    cmd_pipeline(&pipeline_args(&data, &full, &[])).unwrap();

    let staged = tmp.path().join("staged");
    let common = [
        "--data",
        data.to_str().unwrap(),
        "--run-dir",
        staged.to_str().unwrap(),
        "--epochs",
        "15",
        "--dm-epochs",
        "15",
        "--trials",
        "2",
        "--sample-steps",
        "8",
        "--seed",
        "5",
    ];
    for cmd in ["train-ae", "train-dm", "detect"] {
        let mut args = vec!["diffgad", cmd];
        args.extend_from_slice(&common);
        diffgad_cli::cli::run(Cli::try_parse_from(args).unwrap()).unwrap();
    }
    assert_eq!(fs::read(full.join(SCORES_FILE)).unwrap(), fs::read(staged.join(SCORES_FILE)).unwrap());

    let eval = Cli::try_parse_from(["diffgad", "eval", "--data", data.to_str().unwrap(), "--run-dir", staged.to_str().unwrap()]).unwrap();
    diffgad_cli::cli::run(eval).unwrap();
    assert_eq!(
        fs::read_to_string(full.join(METRICS_FILE)).unwrap(),
        fs::read_to_string(staged.join(METRICS_FILE)).unwrap()
    );
}
