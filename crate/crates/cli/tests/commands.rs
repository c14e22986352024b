use std::path::Path;

use smtl_cli::{command, run};
use smtl_core::config::Config;

fn smtl(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["smtl"];
    argv.extend_from_slice(args);
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FOX_SENTENCE: &str = "\
1\tThe\t_\tDT\tDT\t_\t3\tdet\t_\t_
2\tbrown\t_\tJJ\tJJ\t_\t3\tamod\t_\t_
3\tfox\t_\tNN\tNN\t_\t4\tnsubj\t_\t_
4\tjumped\t_\tVBD\tVBD\t_\t0\troot\t_\t_
5\tover\t_\tIN\tIN\t_\t4\tprep\t_\t_
6\tthe\t_\tDT\tDT\t_\t7\tdet\t_\t_
7\tfence\t_\tNN\tNN\t_\t5\tpobj\t_\t_
";

#[test]
fn schedule_preview_sigmoid_at_zero() {
    let (code, out, _) = smtl(&["schedule-preview", "--kind", "sigmoid", "--slope", "0.5", "--t", "0"]);
    assert_eq!(code, 0);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "0.5");
    assert_eq!(row[2], "0.5");
}

#[test]
fn schedule_preview_rows_and_queue_split() {
    let (code, out, _) = smtl(&[
        "schedule-preview", "--kind", "exponential", "--slope", "1", "--t", "0,4", "--queues", "3",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "t,focus,queue1,queue2");
    let row: Vec<f64> = lines[2].split(',').map(|x| x.parse().unwrap()).collect();
    let p = 1.0 - (-4f64).exp();
    assert!((row[1] - p).abs() < 1e-12);
    assert!((row[2] - (1.0 - p) / 2.0).abs() < 1e-12);
}

#[test]
fn linearize_seven_token_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("fox.conll");
    std::fs::write(&f, FOX_SENTENCE).unwrap();
    let (code, out, err) = smtl(&["linearize", "--conll", path(&f)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out, "2 1 1 -4 -1 1 -2\n");
    let (_, out, _) = smtl(&["linearize", "--conll", path(&f), "--task", "pos"]);
    assert_eq!(out, "DT JJ NN VBD IN DT NN\n");
}

#[test]
fn bpe_learn_apply_and_strip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    std::fs::write(&corpus, "low low low low low lower lower newest newest newest newest newest newest widest widest widest\n").unwrap();
    let model = dir.path().join("bpe.model");
    let (code, _, err) = smtl(&["bpe-learn", "--input", path(&corpus), "--merges", "5", "--output", path(&model)]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&model).unwrap();
    assert_eq!(text.lines().next().unwrap(), "bpe-v1 5");

    let input = dir.path().join("in.txt");
    std::fs::write(&input, "lowest newer\n").unwrap();
    let seg = dir.path().join("seg.txt");
    let (code, _, _) = smtl(&["bpe-apply", "--model", path(&model), "--input", path(&input), "--output", path(&seg)]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&seg).unwrap(), "low@@ est n@@ ew@@ e@@ r\n");
    let (_, out, _) = smtl(&["bpe-apply", "--model", path(&model), "--input", path(&seg), "--strip"]);
    assert_eq!(out, "lowest newer\n");
}

#[test]
fn eval_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = dir.path().join("hyp");
    let reference = dir.path().join("ref");
    std::fs::write(&hyp, "a b c d e\n").unwrap();
    std::fs::write(&reference, "a b c d e\n").unwrap();
    let csv = dir.path().join("r.csv");
    let (code, out, _) = smtl(&["eval", "--metric", "bleu", "--hyp", path(&hyp), "--ref", path(&reference), "--csv", path(&csv)]);
    assert_eq!(code, 0);
    assert!(out.starts_with("BLEU = 100.00"));
    assert!(std::fs::read_to_string(&csv).unwrap().contains("bleu,100.0000"));

    let gold = dir.path().join("g.conll");
    std::fs::write(&gold, FOX_SENTENCE).unwrap();
    std::fs::write(&hyp, "2 1 1 -4 -1 1 -3\n").unwrap();
    let labels = dir.path().join("labels");
    std::fs::write(&labels, "det amod nsubj root prep det dobj\n").unwrap();
    let (code, out, _) = smtl(&[
        "eval", "--metric", "parse", "--hyp", path(&hyp), "--ref", path(&gold), "--labels", path(&labels),
    ]);
    assert_eq!(code, 0);
    // Last head is wrong, so 6/7 for both scores.
    assert_eq!(out, "UAS = 85.71, LAS = 85.71\n");

    std::fs::write(&hyp, "DT JJ NN VBD IN DT VB\n").unwrap();
    let (_, out, _) = smtl(&["eval", "--metric", "pos", "--hyp", path(&hyp), "--ref", path(&gold)]);
    assert_eq!(out, "POS accuracy = 85.71 (6/7)\n");
}

#[test]
fn errors_are_single_json_lines_with_distinct_codes() {
    let (code, _, err) = smtl(&["linearize", "--conll", "/definitely/missing.conll"]);
    assert_eq!(code, 3);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "io");
    assert_eq!(err.lines().count(), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "hidden = lots\n").unwrap();
    let (code, _, err) = smtl(&["train", "--config", path(&cfg)]);
    assert_eq!(code, 4, "{err}");

    let (code, _, err) = smtl(&["schedule-preview", "--kind", "sigmoid", "--slope", "0.5", "--t", "0", "--bogus", "1"]);
    assert_eq!(code, 2);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "usage");

    let bad = dir.path().join("bad.conll");
    std::fs::write(&bad, "1\tx\t_\tX\tX\t_\tnope\tdep\t_\t_\n").unwrap();
    let (code, _, _) = smtl(&["linearize", "--conll", path(&bad)]);
    assert_eq!(code, 7);

    let (code, _, _) = smtl(&["gradcheck", "--tolerance", "0"]);
    assert_eq!(code, 6);
}

#[test]
fn help_lists_every_config_key() {
    let mut train = command().find_subcommand("train").unwrap().clone();
    let help = train.render_long_help().to_string();
    for k in Config::KEYS {
        assert!(help.contains(&format!("--{}", k.name)), "missing --{}", k.name);
        assert!(help.contains(k.help), "missing help for {}", k.name);
    }
    let (code, out, _) = smtl(&["train", "--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("--batch_words"));
}

#[test]
fn every_subcommand_documents_its_flags() {
    for sub in command().get_subcommands() {
        for arg in sub.get_arguments() {
            assert!(arg.get_help().is_some(), "{} --{}", sub.get_name(), arg.get_id());
        }
    }
}

#[test]
fn synth_train_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = smtl(&["synth", "--kind", "copy", "--dir", path(dir.path()), "--pairs", "8", "--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    let cfg = out.trim().to_string();
    let (code, out, err) = smtl(&["train", "--config", &cfg, "--max_updates", "3", "--eval_every", "3", "--hidden", "8"]);
    assert_eq!(code, 0, "{err}");
    let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(summary["updates"], 3);
    let ckpt = summary["checkpoint"].as_str().unwrap().to_string();
    assert!(Path::new(&ckpt).exists());

    let src = dir.path().join("copy.src");
    let (code, out, err) = smtl(&["decode", "--checkpoint", &ckpt, "--input", path(&src), "--beam", "2"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 8);
}

#[test]
fn train_twice_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out, _) = smtl(&["synth", "--kind", "copy", "--dir", path(dir.path()), "--pairs", "10"]);
    let cfg = out.trim().to_string();
    let mut bytes = Vec::new();
    for run_dir in ["a", "b"] {
        let out_dir = dir.path().join(run_dir);
        let (code, _, err) = smtl(&[
            "train", "--config", &cfg, "--seed", "7", "--max_updates", "4", "--eval_every", "2", "--hidden", "8",
            "--out_dir", path(&out_dir),
        ]);
        assert_eq!(code, 0, "{err}");
        bytes.push((
            std::fs::read(out_dir.join("best.ckpt")).unwrap(),
            std::fs::read(out_dir.join("train.log")).unwrap(),
        ));
    }
    assert!(bytes[0] == bytes[1]);
}

#[test]
fn sweep_writes_the_score_table() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out, _) = smtl(&["synth", "--kind", "reverse-parity", "--dir", path(dir.path()), "--pairs", "6", "--dev", "3"]);
    let cfg = out.trim().to_string();
    let csv = dir.path().join("sweep.csv");
    let (code, _, err) = smtl(&[
        "sweep", "--config", &cfg, "--schedules", "constant", "--slopes", "0,1", "--task-sets", "translation,pos",
        "--replicas", "2", "--max_updates", "1", "--hidden", "8", "--output", path(&csv),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scheduler,alpha,tasks,seed,bleu,pos,uas,las");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[3].starts_with("constant,0,translation+pos,mean,"));

    // At slope 0 the focus task is never drawn.
    let log = dir.path().join("sweep/run0-seed1/train.log");
    let text = std::fs::read_to_string(log).unwrap();
    assert!(text.lines().filter(|l| l.contains("\"task\"")).all(|l| l.contains("\"task\":\"pos\"")));
}
