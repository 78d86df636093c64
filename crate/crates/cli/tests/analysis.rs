//! Analysis-bundle checks that need a `none` baseline run: the cost
//! summary, its self-comparison row, and byte-stable reruns.

use std::fs;
use std::path::{Path, PathBuf};

use shortcot::commands::{cmd_analyze, cmd_pretrain, cmd_train, AnalyzeArgs, PretrainArgs, TrainArgs};
use shortcot::report;

fn setup_runs(tmp: &Path, strategies: &[&str]) -> Vec<PathBuf> {
    let pretrained = tmp.join("pre.bin");
    let cfg = tmp.join("lab.cfg");
    fs::write(
        &cfg,
        format!(
            "seed = 1\npretrain.steps = 60\npretrain.out = {}\n\
             train.total_epochs = 4\ntrain.prompts_per_epoch = 3\n\
             train.schedule = 1-4:3\ntrain.pretrained = {}\n\
             eval.prompts_per_category = 2\neval.seeds = 1,2\n",
            pretrained.display(),
            pretrained.display()
        ),
    )
    .unwrap();
    cmd_pretrain(&PretrainArgs {
        config: cfg.clone(),
        seed: None,
        out: None,
        set: vec![],
    })
    .unwrap();
    strategies
        .iter()
        .map(|s| {
            let dir = tmp.join(format!("run-{s}"));
            cmd_train(&TrainArgs {
                config: cfg.clone(),
                strategy: Some(s.to_string()),
                seed: None,
                out: Some(dir.clone()),
                set: vec![],
            })
            .unwrap();
            dir
        })
        .collect()
}

#[test]
fn cost_summary_compares_each_strategy_against_the_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = setup_runs(tmp.path(), &["none", "soft"]);
    let out = tmp.path().join("analysis");
    cmd_analyze(&AnalyzeArgs {
        runs: runs.clone(),
        out: out.clone(),
    })
    .unwrap();

    let table = report::parse_csv(&fs::read_to_string(out.join("cost_summary.csv")).unwrap());
    assert_eq!(table.len(), 3); // header + none + soft
    let none_row = table.iter().find(|r| r[0] == "none-s1").unwrap();
    // The baseline against itself reduces nothing.
    assert_eq!(none_row[3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(none_row[6].parse::<f64>().unwrap(), 0.0);

    let soft_row = table.iter().find(|r| r[0] == "soft-s1").unwrap();
    let baseline_cot: f64 = soft_row[1].parse().unwrap();
    let treated_cot: f64 = soft_row[2].parse().unwrap();
    let reduction: f64 = soft_row[3].parse().unwrap();
    assert!((reduction - (1.0 - treated_cot / baseline_cot) * 100.0).abs() < 1e-9);

    // Rerunning the analysis reproduces every file byte for byte.
    let out2 = tmp.path().join("analysis2");
    cmd_analyze(&AnalyzeArgs { runs, out: out2.clone() }).unwrap();
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"cost_summary.csv".to_string()));
    for name in names {
        assert_eq!(
            fs::read(out.join(&name)).unwrap(),
            fs::read(out2.join(&name)).unwrap(),
            "{name} differs across analyze reruns"
        );
    }
}

#[test]
fn eval_defaults_to_four_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = setup_runs(tmp.path(), &["none"]);
    let out = tmp.path().join("eval");
    shortcot::commands::cmd_eval(&shortcot::commands::EvalArgs {
        checkpoint: runs[0].join("final.bin"),
        suite_seed: None,
        seeds: None,
        no_cot: false,
        out: out.clone(),
    })
    .unwrap();
    let table = report::parse_csv(&fs::read_to_string(out.join("records.csv")).unwrap());
    let seeds: std::collections::BTreeSet<&str> =
        table[1..].iter().map(|r| r[2].as_str()).collect();
    assert_eq!(
        seeds,
        ["1", "2", "3", "4"].into_iter().collect(),
        "default evaluation must cover four seeds"
    );
    // The structured summary record lists the seed set too.
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([1, 2, 3, 4]));
    assert_eq!(summary["samples"], serde_json::json!(480));
    // Suite file round-trips through the documented grammar.
    let suite_text = fs::read_to_string(out.join("suite.txt")).unwrap();
    let suite = shortcot::suite::parse_suite(&suite_text).unwrap();
    assert_eq!(suite.len(), 120);
    assert_eq!(shortcot::suite::suite_to_string(&suite), suite_text);
}
