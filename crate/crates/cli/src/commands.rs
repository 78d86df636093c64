//! Subcommand implementations. Every command is reproducible: identical
//! inputs produce byte-identical output files, with wall-clock data
//! confined to `meta.txt` and `timing.csv`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use shortcot_core::env;
use shortcot_core::eval::{self, EvalOptions, EvalReport};
use shortcot_core::penalties::Strategy;
use shortcot_core::policy::PolicyParams;
use shortcot_core::rng;
use shortcot_core::trainer::{self, TrainError, TrainStart};

use crate::config::{self, ResolvedConfig};
use crate::error::{CliError, Result};
use crate::runlog::{self, FileSink};
use crate::{checkpoint, report, suite};

/// Seed-domain tags keep derived streams disjoint from the trainer's
/// per-epoch splits (which use small indices).
const SEED_DOMAIN_INIT: u64 = 1 << 32;
const SEED_DOMAIN_PRETRAIN: u64 = (1 << 32) | 1;

pub fn init_seed(master: u64) -> u64 {
    rng::split(master, SEED_DOMAIN_INIT)
}

pub fn pretrain_seed(master: u64) -> u64 {
    rng::split(master, SEED_DOMAIN_PRETRAIN)
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))
        })
        .collect()
}

fn unix_timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

pub struct PretrainArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
}

/// Runs verbose-plan pretraining and writes the parameter checkpoint
/// plus the resolved config snapshot next to it.
pub fn cmd_pretrain(args: &PretrainArgs) -> Result<PathBuf> {
    let mut overrides = parse_overrides(&args.set)?;
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let resolved = config::load(&args.config, &overrides)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&resolved.pretrain_out));

    let start = Instant::now();
    let params = trainer::fresh_params(init_seed(resolved.seed));
    let params = trainer::pretrain_verbose(
        params,
        resolved.pretrain_steps,
        resolved.pretrain_learning_rate,
        pretrain_seed(resolved.seed),
    )?;
    checkpoint::write_atomic(&out, &checkpoint::params_to_bytes(&params))?;
    let snapshot_path = out.with_extension("config");
    write_text(&snapshot_path, &resolved.snapshot())?;
    log::info!(
        "pretrained {} steps in {:.1}s -> {}",
        resolved.pretrain_steps,
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainArgs {
    pub config: PathBuf,
    pub strategy: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
}

/// Runs one GRPO training run into a run directory containing
/// `config.snapshot`, `log.jsonl`, `timing.csv`, periodic
/// `ckpt_<epoch>.bin`, `final.bin`, and `meta.txt`.
pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let mut overrides = parse_overrides(&args.set)?;
    if let Some(strategy) = &args.strategy {
        Strategy::from_name(strategy).map_err(|_| {
            CliError::Config(format!(
                "invalid strategy {strategy:?} (valid: none, cap, target, hard, soft)"
            ))
        })?;
        overrides.push(("penalty.strategy".into(), strategy.clone()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &args.out {
        overrides.push(("train.out".into(), out.display().to_string()));
    }
    let resolved = config::load(&args.config, &overrides)?;
    let run_dir = PathBuf::from(&resolved.out);

    let start_params = load_start_params(&resolved)?;
    run_training(&resolved, start_params, &run_dir)?;
    Ok(run_dir)
}

fn load_start_params(resolved: &ResolvedConfig) -> Result<PolicyParams> {
    if resolved.fresh_start {
        if !resolved.pretrained.is_empty() {
            return Err(CliError::Config(
                "set either train.pretrained or train.fresh_start, not both".into(),
            ));
        }
        return Ok(trainer::fresh_params(init_seed(resolved.seed)));
    }
    if resolved.pretrained.is_empty() {
        return Err(CliError::Config(
            "train.pretrained is unset (or pass train.fresh_start = true)".into(),
        ));
    }
    checkpoint::load_params(Path::new(&resolved.pretrained))
}

/// Library-level training entry shared by the CLI and tests.
pub fn run_training(
    resolved: &ResolvedConfig,
    start_params: PolicyParams,
    run_dir: &Path,
) -> Result<()> {
    let core_cfg = resolved.core_train_config()?;
    fs::create_dir_all(run_dir)?;
    if run_dir.join("log.jsonl").exists() || run_dir.join("final.bin").exists() {
        return Err(CliError::Config(format!(
            "refusing to overwrite existing run in {}",
            run_dir.display()
        )));
    }
    write_text(&run_dir.join("config.snapshot"), &resolved.snapshot())?;
    let started_at = unix_timestamp();
    let start = Instant::now();

    let mut sink = FileSink::create(run_dir)?;
    let outcome = trainer::train(&core_cfg, TrainStart::fresh(start_params), &mut sink);
    match outcome {
        Ok(outcome) => {
            sink.finish()?;
            checkpoint::write_atomic(
                &run_dir.join("final.bin"),
                &checkpoint::params_to_bytes(&outcome.params),
            )?;
            write_text(
                &run_dir.join("meta.txt"),
                &format!(
                    "started_unix = {started_at}\nduration_s = {:.3}\nratio_positions_checked = {}\n",
                    start.elapsed().as_secs_f64(),
                    outcome.ratio_positions_checked
                ),
            )?;
            Ok(())
        }
        Err(TrainError::Core(e)) => {
            // Interval checkpoints written so far stay on disk.
            sink.finish()?;
            Err(e.into())
        }
        Err(TrainError::Sink(e)) => Err(CliError::Io(e)),
    }
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub suite_seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub no_cot: bool,
    pub out: PathBuf,
}

/// Evaluates a checkpoint over a generated suite and writes `suite.txt`,
/// `report.csv`, and `records.csv` into the output directory.
pub fn cmd_eval(args: &EvalArgs) -> Result<PathBuf> {
    let params = checkpoint::load_params(&args.checkpoint)?;
    let suite_seed = args.suite_seed.unwrap_or(0);
    let seeds = match &args.seeds {
        Some(s) if s.is_empty() => {
            return Err(CliError::Config("--seeds must not be empty".into()))
        }
        Some(s) => s.clone(),
        None => vec![1, 2, 3, 4],
    };
    let suite = env::uniform_suite(20, suite_seed);
    let opts = EvalOptions {
        use_cot: !args.no_cot,
        cap: None,
    };
    let (eval_report, records) = eval::evaluate(&params, &suite, &seeds, opts)?;
    fs::create_dir_all(&args.out)?;
    write_text(&args.out.join("suite.txt"), &suite::suite_to_string(&suite))?;
    write_text(
        &args.out.join("report.csv"),
        &report::eval_report_csv(&eval_report),
    )?;
    write_text(&args.out.join("records.csv"), &report::records_csv(&records))?;
    write_text(
        &args.out.join("summary.json"),
        &format!("{}\n", report::eval_summary_json(&eval_report)),
    )?;
    Ok(args.out.clone())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

pub struct AnalyzeArgs {
    pub runs: Vec<PathBuf>,
    pub out: PathBuf,
}

struct RunData {
    label: String,
    resolved: ResolvedConfig,
    records: Vec<runlog::LogRecord>,
    final_params: PolicyParams,
}

fn load_run(dir: &Path) -> Result<RunData> {
    let snapshot = dir.join("config.snapshot");
    let map = config::read_config_file(&snapshot)?;
    let resolved = config::resolve(map)?;
    let records = runlog::read_log(&dir.join("log.jsonl"))?;
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "{}: log.jsonl holds no records",
            dir.display()
        )));
    }
    let final_params = checkpoint::load_params(&dir.join("final.bin"))?;
    Ok(RunData {
        label: format!("{}-s{}", resolved.strategy.name(), resolved.seed),
        resolved,
        records,
        final_params,
    })
}

/// Plan lengths over the final `window` epochs of a run log.
fn final_window_lengths(records: &[runlog::LogRecord], window: u32) -> Vec<u32> {
    let last_epoch = records.iter().map(|r| r.epoch).max().unwrap_or(0);
    let cut = last_epoch.saturating_sub(window);
    records
        .iter()
        .filter(|r| r.epoch > cut)
        .flat_map(|r| r.cot_lengths.iter().copied())
        .collect()
}

/// Emits the analysis bundle: per-run training curves, final-window
/// length histograms, fresh evaluations (Pearson matrix, plan-necessity
/// ratios), and a cost summary against the `none` run when present.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<PathBuf> {
    if args.runs.is_empty() {
        return Err(CliError::Config("analyze needs at least one run".into()));
    }
    let runs: Vec<RunData> = args.runs.iter().map(|d| load_run(d)).collect::<Result<_>>()?;
    fs::create_dir_all(&args.out)?;

    let mut eval_reports: Vec<(String, Strategy, EvalReport)> = Vec::new();
    for run in &runs {
        write_text(
            &args.out.join(format!("length_curve_{}.csv", run.label)),
            &report::length_curve_csv(&run.records),
        )?;
        write_text(
            &args.out.join(format!("reward_curve_{}.csv", run.label)),
            &report::reward_curve_csv(&run.records),
        )?;
        let lengths = final_window_lengths(&run.records, 50);
        let histogram = eval::length_histogram(&lengths)?;
        write_text(
            &args.out.join(format!("histogram_{}.csv", run.label)),
            &report::histogram_csv(&histogram),
        )?;

        // Fresh evaluation with the run's own eval settings; cap-trained
        // policies evaluate under their structural cap.
        let suite = env::uniform_suite(
            run.resolved.eval_prompts_per_category,
            run.resolved.eval_suite_seed,
        );
        let cap = (run.resolved.strategy == Strategy::Cap)
            .then_some(run.resolved.cap_length as usize);
        let opts = EvalOptions { use_cot: true, cap };
        let (eval_report, records) =
            eval::evaluate(&run.final_params, &suite, &run.resolved.eval_seeds, opts)?;
        let stats = eval::per_prompt_stats(&records)?;
        let matrix = eval::pearson_matrix(&stats)?;
        write_text(
            &args.out.join(format!("pearson_{}.csv", run.label)),
            &report::pearson_csv(&matrix),
        )?;
        let necessity =
            eval::cot_necessity(&run.final_params, &suite, &run.resolved.eval_seeds, cap)?;
        write_text(
            &args.out.join(format!("necessity_{}.csv", run.label)),
            &report::necessity_csv(&necessity),
        )?;
        eval_reports.push((run.label.clone(), run.resolved.strategy, eval_report));
    }

    let baseline = eval_reports
        .iter()
        .find(|(_, strategy, _)| *strategy == Strategy::None);
    match baseline {
        Some((_, _, base)) => {
            let mut rows = Vec::new();
            for (label, _, treated) in &eval_reports {
                match eval::cost_report(base, treated) {
                    Ok(cost) => rows.push((label.clone(), cost)),
                    Err(_) => log::warn!(
                        "skipping cost row for {label}: suite/seed set differs from the baseline"
                    ),
                }
            }
            write_text(
                &args.out.join("cost_summary.csv"),
                &report::cost_summary_csv(&rows),
            )?;
        }
        None => {
            log::warn!("no `none` run among inputs; cost summary omitted");
            eprintln!("warning: no `none` run among inputs; cost summary omitted");
        }
    }
    Ok(args.out.clone())
}
