//! Evaluation and analysis harness.
//!
//! Scores a checkpoint over a prompt suite across seeds, with or without
//! the semantic plan (the no-plan arm forces the end marker and reuses
//! the identical scene-phase stream, isolating the plan's effect).
//! Aggregates use population statistics. On top of the raw records:
//! unit-bin length histograms with moment skewness, the 4x4 Pearson
//! matrix over per-prompt (length, score) statistics, the plan-necessity
//! win ratios per prompt attribute, and token-cost comparisons between
//! reports.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{self, Category, PromptSpec, Vocabulary};
use crate::error::CoreError;
use crate::penalties;
use crate::policy::{sample_rollout_opts, PolicyParams, SampleOpts, S_MAX};
use crate::rng;

/// Evaluation switches.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// `false` forces the no-plan arm.
    pub use_cot: bool,
    /// Structural cap applied while sampling (for cap-trained policies).
    pub cap: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            use_cot: true,
            cap: None,
        }
    }
}

/// One (prompt, seed) evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub prompt_id: u32,
    pub category: Category,
    pub seed: u64,
    pub cot_length: u32,
    /// Semantic plus scene tokens emitted for this sample.
    pub total_tokens: u32,
    pub detection: f64,
    pub alignment: f64,
    pub preference: f64,
    pub model_sum: f64,
    /// Task score: `(model_sum - 1.06) / 1.06`, clamped into [0, 1].
    pub score: f64,
}

/// Population aggregates for one category (or the whole suite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryRow {
    pub category: Option<Category>,
    pub count: u32,
    pub mean_score: f64,
    pub mean_model_sum: f64,
    pub mean_cot_length: f64,
    pub std_cot_length: f64,
}

/// Suite-level evaluation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// One row per category present, in catalog order.
    pub rows: Vec<CategoryRow>,
    pub overall: CategoryRow,
    pub total_semantic_tokens: u64,
    pub total_scene_tokens: u64,
    pub seeds: Vec<u64>,
    pub use_cot: bool,
    pub suite_fingerprint: u64,
}

impl EvalReport {
    /// Mean generated tokens (semantic + scene) per sample.
    pub fn mean_total_tokens(&self) -> f64 {
        (self.total_semantic_tokens + self.total_scene_tokens) as f64 / self.overall.count as f64
    }
}

/// Stable digest of a suite's content, used to reject cross-suite
/// comparisons.
pub fn suite_fingerprint(suite: &[PromptSpec]) -> u64 {
    let mut acc = 0x5ca1ab1eu64;
    for spec in suite {
        acc = rng::split(acc, spec.id as u64);
        acc = rng::split(acc, spec.category.index() as u64);
        for obj in &spec.objects {
            let color = obj.color.map(|c| c.0 as u64 + 1).unwrap_or(0);
            acc = rng::split(acc, obj.kind.0 as u64 | (color << 8) | ((obj.count as u64) << 16));
        }
        acc = rng::split(acc, spec.relation.map(|r| r.index() as u64 + 1).unwrap_or(0));
    }
    acc
}

fn score_of(model_sum: f64) -> f64 {
    ((model_sum - 1.06) / 1.06).clamp(0.0, 1.0)
}

fn eval_one(
    params: &PolicyParams,
    spec: &PromptSpec,
    vocab: &Vocabulary,
    seed: u64,
    opts: EvalOptions,
) -> Result<EvalRecord, CoreError> {
    let prompt = env::encode_prompt(spec, vocab);
    let rollout_seed = rng::split(seed, spec.id as u64);
    let rollout = sample_rollout_opts(
        params,
        &prompt,
        rollout_seed,
        SampleOpts {
            cap: opts.cap,
            force_no_cot: !opts.use_cot,
        },
    );
    let scene = env::decode_scene(&rollout.scene, vocab)?;
    let b = env::reward_ensemble(&scene, spec);
    Ok(EvalRecord {
        prompt_id: spec.id,
        category: spec.category,
        seed,
        cot_length: penalties::cot_length(&rollout),
        total_tokens: rollout.total_len() as u32,
        detection: b.detection,
        alignment: b.alignment,
        preference: b.preference,
        model_sum: b.model_sum,
        score: score_of(b.model_sum),
    })
}

fn row_from(records: &[&EvalRecord], category: Option<Category>) -> CategoryRow {
    let n = records.len() as f64;
    let mean_score = records.iter().map(|r| r.score).sum::<f64>() / n;
    let mean_model_sum = records.iter().map(|r| r.model_sum).sum::<f64>() / n;
    let mean_len = records.iter().map(|r| r.cot_length as f64).sum::<f64>() / n;
    let var_len = records
        .iter()
        .map(|r| {
            let d = r.cot_length as f64 - mean_len;
            d * d
        })
        .sum::<f64>()
        / n;
    CategoryRow {
        category,
        count: records.len() as u32,
        mean_score,
        mean_model_sum,
        mean_cot_length: mean_len,
        std_cot_length: libm::sqrt(var_len),
    }
}

/// Evaluates a checkpoint over `suite x seeds`, one rollout per pair.
/// Returns the aggregate report and the raw records (suite order within
/// each seed, seeds in the given order).
pub fn evaluate(
    params: &PolicyParams,
    suite: &[PromptSpec],
    seeds: &[u64],
    opts: EvalOptions,
) -> Result<(EvalReport, Vec<EvalRecord>), CoreError> {
    let vocab = Vocabulary::standard();
    if params.vocab != vocab.spec() {
        return Err(CoreError::DimensionMismatch {
            what: "checkpoint vocabulary does not match the task",
        });
    }
    if suite.is_empty() || seeds.is_empty() {
        return Err(CoreError::InvalidConfig(
            "evaluation needs a non-empty suite and at least one seed".into(),
        ));
    }
    let mut records = Vec::with_capacity(suite.len() * seeds.len());
    for &seed in seeds {
        for spec in suite {
            records.push(eval_one(params, spec, &vocab, seed, opts)?);
        }
    }

    let mut rows = Vec::new();
    for category in Category::ALL {
        let in_cat: Vec<&EvalRecord> =
            records.iter().filter(|r| r.category == category).collect();
        if !in_cat.is_empty() {
            rows.push(row_from(&in_cat, Some(category)));
        }
    }
    let all: Vec<&EvalRecord> = records.iter().collect();
    let overall = row_from(&all, None);
    let report = EvalReport {
        rows,
        overall,
        total_semantic_tokens: records
            .iter()
            .map(|r| (r.total_tokens - env::SCENE_CELLS as u32) as u64)
            .sum(),
        total_scene_tokens: (records.len() * env::SCENE_CELLS) as u64,
        seeds: seeds.to_vec(),
        use_cot: opts.use_cot,
        suite_fingerprint: suite_fingerprint(suite),
    };
    Ok((report, records))
}

// ---------------------------------------------------------------------------
// Length histogram
// ---------------------------------------------------------------------------

/// Unit-width histogram over 0..=S_MAX with moment statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<u64>,
    pub mean: f64,
    pub median: f64,
    /// Moment skewness `m3 / m2^(3/2)`; zero for degenerate variance.
    pub skewness: f64,
}

pub fn length_histogram(lengths: &[u32]) -> Result<Histogram, CoreError> {
    if lengths.is_empty() {
        return Err(CoreError::InvalidConfig(
            "histogram needs at least one record".into(),
        ));
    }
    let mut bins = vec![0u64; S_MAX + 1];
    for &l in lengths {
        bins[(l as usize).min(S_MAX)] += 1;
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
    let m2 = lengths
        .iter()
        .map(|&l| {
            let d = l as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let m3 = lengths
        .iter()
        .map(|&l| {
            let d = l as f64 - mean;
            d * d * d
        })
        .sum::<f64>()
        / n;
    let skewness = if m2 < 1e-12 {
        0.0
    } else {
        m3 / libm::pow(m2, 1.5)
    };
    let mut sorted: Vec<u32> = lengths.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] as f64 + sorted[mid] as f64) / 2.0
    };
    Ok(Histogram {
        bins,
        mean,
        median,
        skewness,
    })
}

// ---------------------------------------------------------------------------
// Pearson correlation matrix
// ---------------------------------------------------------------------------

/// Per-prompt statistics across the seed set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptStat {
    pub prompt_id: u32,
    pub length_avg: f64,
    pub length_std: f64,
    pub score_avg: f64,
    pub score_std: f64,
}

/// Variable order of the correlation matrix.
pub const CORRELATION_LABELS: [&str; 4] = ["length_avg", "length_std", "score_avg", "score_std"];

/// Symmetric 4x4 Pearson matrix over prompts; unit diagonal. Variables
/// with zero variance are flagged and their off-diagonal entries are 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationMatrix {
    pub values: [[f64; 4]; 4],
    pub zero_variance: [bool; 4],
}

/// Groups evaluation records by prompt and reduces over seeds.
/// Every prompt must appear under the same number of seeds.
pub fn per_prompt_stats(records: &[EvalRecord]) -> Result<Vec<PromptStat>, CoreError> {
    let mut ids: Vec<u32> = records.iter().map(|r| r.prompt_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut out = Vec::with_capacity(ids.len());
    let mut seen_per_prompt = None;
    for id in ids {
        let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.prompt_id == id).collect();
        match seen_per_prompt {
            None => seen_per_prompt = Some(rs.len()),
            Some(k) if k == rs.len() => {}
            Some(k) => {
                return Err(CoreError::LengthMismatch {
                    what: "seed coverage per prompt",
                    expected: k,
                    got: rs.len(),
                })
            }
        }
        let n = rs.len() as f64;
        let length_avg = rs.iter().map(|r| r.cot_length as f64).sum::<f64>() / n;
        let score_avg = rs.iter().map(|r| r.score).sum::<f64>() / n;
        let lv = rs
            .iter()
            .map(|r| {
                let d = r.cot_length as f64 - length_avg;
                d * d
            })
            .sum::<f64>()
            / n;
        let sv = rs
            .iter()
            .map(|r| {
                let d = r.score - score_avg;
                d * d
            })
            .sum::<f64>()
            / n;
        out.push(PromptStat {
            prompt_id: id,
            length_avg,
            length_std: libm::sqrt(lv),
            score_avg,
            score_std: libm::sqrt(sv),
        });
    }
    Ok(out)
}

/// Pairwise Pearson coefficients over `(length_avg, length_std,
/// score_avg, score_std)` across prompts.
pub fn pearson_matrix(stats: &[PromptStat]) -> Result<CorrelationMatrix, CoreError> {
    if stats.len() < 3 {
        return Err(CoreError::TooFewPrompts { got: stats.len() });
    }
    let n = stats.len() as f64;
    let columns: [Vec<f64>; 4] = [
        stats.iter().map(|s| s.length_avg).collect(),
        stats.iter().map(|s| s.length_std).collect(),
        stats.iter().map(|s| s.score_avg).collect(),
        stats.iter().map(|s| s.score_std).collect(),
    ];
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let sigmas: Vec<f64> = columns
        .iter()
        .zip(&means)
        .map(|(c, m)| libm::sqrt(c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n))
        .collect();
    let mut values = [[0.0; 4]; 4];
    let mut zero_variance = [false; 4];
    for (i, &s) in sigmas.iter().enumerate() {
        zero_variance[i] = s < 1e-12;
        values[i][i] = 1.0;
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            let r = if zero_variance[i] || zero_variance[j] {
                0.0
            } else {
                let cov = columns[i]
                    .iter()
                    .zip(&columns[j])
                    .map(|(a, b)| (a - means[i]) * (b - means[j]))
                    .sum::<f64>()
                    / n;
                cov / (sigmas[i] * sigmas[j])
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        values,
        zero_variance,
    })
}

// ---------------------------------------------------------------------------
// Plan-necessity study
// ---------------------------------------------------------------------------

/// Win ratio with a zero-denominator marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NecessityRatio {
    Ratio(f64),
    /// No (prompt, seed) pair scored better without the plan.
    AllFavorCot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityRow {
    pub attribute: String,
    pub wins_with: u32,
    pub wins_without: u32,
    pub ratio: NecessityRatio,
}

fn prompt_attributes(spec: &PromptSpec) -> Vec<String> {
    let mut attrs = vec![format!("category:{}", spec.category.name())];
    if spec.objects.iter().any(|o| o.color.is_some()) {
        attrs.push("attr:color".into());
    }
    if spec.objects.iter().any(|o| o.count >= 2) {
        attrs.push("attr:count".into());
    }
    if spec.relation.is_some() {
        attrs.push("attr:relation".into());
    }
    attrs
}

/// Win counting over paired totals; ties are excluded from both counts.
fn necessity_from_pairs(pairs: &[(Vec<String>, f64, f64)]) -> Vec<NecessityRow> {
    let mut names: Vec<String> = pairs.iter().flat_map(|(a, _, _)| a.clone()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|attribute| {
            let mut wins_with = 0u32;
            let mut wins_without = 0u32;
            for (attrs, with, without) in pairs {
                if !attrs.contains(&attribute) {
                    continue;
                }
                if with > without {
                    wins_with += 1;
                } else if without > with {
                    wins_without += 1;
                }
            }
            let ratio = if wins_without == 0 {
                NecessityRatio::AllFavorCot
            } else {
                NecessityRatio::Ratio(wins_with as f64 / wins_without as f64)
            };
            NecessityRow {
                attribute,
                wins_with,
                wins_without,
                ratio,
            }
        })
        .collect()
}

/// Paired with/without-plan comparison per prompt attribute. Each
/// (prompt, seed) pair shares the identical scene-phase stream across
/// the two arms, so the plan is the only difference.
pub fn cot_necessity(
    params: &PolicyParams,
    suite: &[PromptSpec],
    seeds: &[u64],
    cap: Option<usize>,
) -> Result<Vec<NecessityRow>, CoreError> {
    let vocab = Vocabulary::standard();
    if params.vocab != vocab.spec() {
        return Err(CoreError::DimensionMismatch {
            what: "checkpoint vocabulary does not match the task",
        });
    }
    let mut pairs = Vec::with_capacity(suite.len() * seeds.len());
    for &seed in seeds {
        for spec in suite {
            let with = eval_one(
                params,
                spec,
                &vocab,
                seed,
                EvalOptions { use_cot: true, cap },
            )?;
            let without = eval_one(
                params,
                spec,
                &vocab,
                seed,
                EvalOptions {
                    use_cot: false,
                    cap,
                },
            )?;
            pairs.push((prompt_attributes(spec), with.model_sum, without.model_sum));
        }
    }
    Ok(necessity_from_pairs(&pairs))
}

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

/// Token-cost comparison between a baseline and a treated report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub baseline_mean_cot: f64,
    pub treated_mean_cot: f64,
    /// Percentage reduction in mean plan length.
    pub cot_reduction_pct: f64,
    pub baseline_mean_tokens: f64,
    pub treated_mean_tokens: f64,
    /// Percentage reduction in mean generated tokens per sample.
    pub token_reduction_pct: f64,
}

fn reduction_pct(baseline: f64, treated: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (1.0 - treated / baseline) * 100.0
    }
}

/// Percentage reductions of the treated report against the baseline.
/// Both must cover the same suite and seed set.
pub fn cost_report(baseline: &EvalReport, treated: &EvalReport) -> Result<CostReport, CoreError> {
    if baseline.suite_fingerprint != treated.suite_fingerprint || baseline.seeds != treated.seeds {
        return Err(CoreError::SuiteMismatch);
    }
    let b_cot = baseline.overall.mean_cot_length;
    let t_cot = treated.overall.mean_cot_length;
    let b_tok = baseline.mean_total_tokens();
    let t_tok = treated.mean_total_tokens();
    Ok(CostReport {
        baseline_mean_cot: b_cot,
        treated_mean_cot: t_cot,
        cot_reduction_pct: reduction_pct(b_cot, t_cot),
        baseline_mean_tokens: b_tok,
        treated_mean_tokens: t_tok,
        token_reduction_pct: reduction_pct(b_tok, t_tok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::fresh_params;

    fn small_suite() -> Vec<PromptSpec> {
        env::uniform_suite(2, 9)
    }

    #[test]
    fn no_cot_arm_records_zero_lengths() {
        let params = fresh_params(1);
        let (report, records) = evaluate(
            &params,
            &small_suite(),
            &[1, 2],
            EvalOptions {
                use_cot: false,
                cap: None,
            },
        )
        .unwrap();
        assert!(records.iter().all(|r| r.cot_length == 0));
        assert_eq!(report.overall.mean_cot_length, 0.0);
        assert!(!report.use_cot);
        // One semantic token (the forced marker) plus the scene block.
        assert!(records
            .iter()
            .all(|r| r.total_tokens == 1 + env::SCENE_CELLS as u32));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let params = fresh_params(2);
        let suite = small_suite();
        let a = evaluate(&params, &suite, &[1, 2, 3], EvalOptions::default()).unwrap();
        let b = evaluate(&params, &suite, &[1, 2, 3], EvalOptions::default()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn report_matches_independent_recomputation() {
        let params = fresh_params(3);
        let suite = small_suite();
        let (report, records) =
            evaluate(&params, &suite, &[4, 5], EvalOptions::default()).unwrap();
        assert_eq!(records.len(), suite.len() * 2);
        // Overall score as a plain mean over the raw records.
        let mean_score = records.iter().map(|r| r.score).sum::<f64>() / records.len() as f64;
        assert!((report.overall.mean_score - mean_score).abs() < 1e-12);
        // Category rows tally and recompose.
        let total_count: u32 = report.rows.iter().map(|r| r.count).sum();
        assert_eq!(total_count, records.len() as u32);
        for row in &report.rows {
            let cat = row.category.unwrap();
            let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.category == cat).collect();
            let mean_len =
                rs.iter().map(|r| r.cot_length as f64).sum::<f64>() / rs.len() as f64;
            assert!((row.mean_cot_length - mean_len).abs() < 1e-12);
        }
        // Token totals recompose.
        let sem: u64 = records
            .iter()
            .map(|r| (r.total_tokens - env::SCENE_CELLS as u32) as u64)
            .sum();
        assert_eq!(report.total_semantic_tokens, sem);
        // Scores stay in range.
        assert!(records.iter().all(|r| (0.0..=1.0).contains(&r.score)));
    }

    #[test]
    fn evaluate_rejects_mismatched_checkpoint() {
        let params = crate::policy::init_params(
            crate::policy::VocabSpec {
                prompt: 4,
                semantic: 6,
                scene: 5,
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            evaluate(&params, &small_suite(), &[1], EvalOptions::default()),
            Err(CoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn histogram_examples() {
        let point = length_histogram(&[7, 7, 7]).unwrap();
        assert_eq!(point.bins[7], 3);
        assert_eq!(point.bins.iter().sum::<u64>(), 3);
        assert_eq!(point.skewness, 0.0);
        assert_eq!(point.median, 7.0);

        let skewed = length_histogram(&[1, 1, 1, 10]).unwrap();
        // Direct moment computation.
        let mean = 13.0 / 4.0;
        let m2 = ([1.0f64, 1.0, 1.0, 10.0])
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / 4.0;
        let m3 = ([1.0f64, 1.0, 1.0, 10.0])
            .iter()
            .map(|x| (x - mean) * (x - mean) * (x - mean))
            .sum::<f64>()
            / 4.0;
        assert!((skewed.skewness - m3 / libm::pow(m2, 1.5)).abs() < 1e-12);
        assert!(skewed.skewness > 0.0);
        assert_eq!(skewed.bins.iter().sum::<u64>(), 4);
        assert!(length_histogram(&[]).is_err());
    }

    #[test]
    fn pearson_diagonal_and_identical_variables() {
        let stats: Vec<PromptStat> = (0..5)
            .map(|i| PromptStat {
                prompt_id: i,
                length_avg: i as f64,
                length_std: i as f64, // identical to length_avg
                score_avg: 4.0 - i as f64,
                score_std: 1.0, // zero variance
            })
            .collect();
        let m = pearson_matrix(&stats).unwrap();
        for i in 0..4 {
            assert_eq!(m.values[i][i], 1.0);
        }
        assert!((m.values[0][1] - 1.0).abs() < 1e-12);
        assert!((m.values[0][2] + 1.0).abs() < 1e-12);
        assert!(m.zero_variance[3]);
        assert_eq!(m.values[0][3], 0.0);
        assert!(matches!(
            pearson_matrix(&stats[..2]),
            Err(CoreError::TooFewPrompts { got: 2 })
        ));
    }

    #[test]
    fn pearson_matches_direct_formula_oracle() {
        use rand::Rng;
        let mut stream = rng::stream(50);
        let stats: Vec<PromptStat> = (0..50)
            .map(|i| PromptStat {
                prompt_id: i,
                length_avg: stream.gen::<f64>() * 60.0,
                length_std: stream.gen::<f64>() * 10.0,
                score_avg: stream.gen::<f64>(),
                score_std: stream.gen::<f64>() * 0.3,
            })
            .collect();
        let m = pearson_matrix(&stats).unwrap();
        let col = |k: usize, s: &PromptStat| match k {
            0 => s.length_avg,
            1 => s.length_std,
            2 => s.score_avg,
            _ => s.score_std,
        };
        let n = stats.len() as f64;
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.values[i][j], m.values[j][i]);
                assert!((-1.0..=1.0).contains(&m.values[i][j]));
                if i == j {
                    continue;
                }
                let mi = stats.iter().map(|s| col(i, s)).sum::<f64>() / n;
                let mj = stats.iter().map(|s| col(j, s)).sum::<f64>() / n;
                let cov = stats
                    .iter()
                    .map(|s| (col(i, s) - mi) * (col(j, s) - mj))
                    .sum::<f64>()
                    / n;
                let si =
                    libm::sqrt(stats.iter().map(|s| (col(i, s) - mi) * (col(i, s) - mi)).sum::<f64>() / n);
                let sj =
                    libm::sqrt(stats.iter().map(|s| (col(j, s) - mj) * (col(j, s) - mj)).sum::<f64>() / n);
                assert!((m.values[i][j] - cov / (si * sj)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn per_prompt_stats_group_and_reduce() {
        let params = fresh_params(5);
        let suite = small_suite();
        let (_, records) = evaluate(&params, &suite, &[1, 2, 3], EvalOptions::default()).unwrap();
        let stats = per_prompt_stats(&records).unwrap();
        assert_eq!(stats.len(), suite.len());
        // Spot-check one prompt against a direct recomputation.
        let id = stats[0].prompt_id;
        let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.prompt_id == id).collect();
        assert_eq!(rs.len(), 3);
        let mean = rs.iter().map(|r| r.cot_length as f64).sum::<f64>() / 3.0;
        assert!((stats[0].length_avg - mean).abs() < 1e-12);
    }

    #[test]
    fn necessity_counting_rules() {
        let a = vec![String::from("category:colors")];
        let pairs = vec![
            (a.clone(), 2.0, 1.0), // with wins
            (a.clone(), 1.0, 2.0), // without wins
            (a.clone(), 1.5, 1.5), // tie, excluded
        ];
        let rows = necessity_from_pairs(&pairs);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].wins_with, 1);
        assert_eq!(rows[0].wins_without, 1);
        assert_eq!(rows[0].ratio, NecessityRatio::Ratio(1.0));

        let all_with = vec![(a.clone(), 2.0, 1.0), (a.clone(), 1.8, 1.2)];
        let rows = necessity_from_pairs(&all_with);
        assert_eq!(rows[0].ratio, NecessityRatio::AllFavorCot);
        assert_eq!(rows[0].wins_without, 0);
    }

    #[test]
    fn necessity_runs_end_to_end_and_is_deterministic() {
        let params = fresh_params(6);
        let suite = small_suite();
        let a = cot_necessity(&params, &suite, &[1, 2], None).unwrap();
        let b = cot_necessity(&params, &suite, &[1, 2], None).unwrap();
        assert_eq!(a, b);
        // Category attributes are present and sorted.
        assert!(a.windows(2).all(|w| w[0].attribute <= w[1].attribute));
        assert!(a.iter().any(|r| r.attribute == "category:counting"));
        assert!(a.iter().any(|r| r.attribute == "attr:relation"));
    }

    #[test]
    fn cost_report_reproduces_the_headline_reduction() {
        let params = fresh_params(7);
        let suite = small_suite();
        let (mut baseline, _) = evaluate(&params, &suite, &[1], EvalOptions::default()).unwrap();
        let mut treated = baseline.clone();
        baseline.overall.mean_cot_length = 93.11;
        treated.overall.mean_cot_length = 41.97;
        let cost = cost_report(&baseline, &treated).unwrap();
        assert!((cost.cot_reduction_pct - 54.925).abs() < 0.01);
        assert_eq!(format!("{:.1}", cost.cot_reduction_pct), "54.9");

        // Identical reports: zero reduction.
        let same = cost_report(&baseline, &baseline).unwrap();
        assert_eq!(same.cot_reduction_pct, 0.0);
        assert_eq!(same.token_reduction_pct, 0.0);
    }

    #[test]
    fn cost_report_reduction_matches_hand_formula_on_random_pairs() {
        use rand::Rng;
        let params = fresh_params(8);
        let suite = small_suite();
        let (base, _) = evaluate(&params, &suite, &[1], EvalOptions::default()).unwrap();
        let mut stream = rng::stream(12);
        for _ in 0..50 {
            let mut a = base.clone();
            let mut b = base.clone();
            a.overall.mean_cot_length = 1.0 + stream.gen::<f64>() * 90.0;
            b.overall.mean_cot_length = stream.gen::<f64>() * 90.0;
            let cost = cost_report(&a, &b).unwrap();
            let want =
                (1.0 - b.overall.mean_cot_length / a.overall.mean_cot_length) * 100.0;
            assert!((cost.cot_reduction_pct - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_report_rejects_mismatched_suites() {
        let params = fresh_params(9);
        let (a, _) = evaluate(&params, &small_suite(), &[1], EvalOptions::default()).unwrap();
        let other = env::uniform_suite(2, 10);
        let (b, _) = evaluate(&params, &other, &[1], EvalOptions::default()).unwrap();
        assert!(matches!(cost_report(&a, &b), Err(CoreError::SuiteMismatch)));
        let (c, _) = evaluate(&params, &small_suite(), &[2], EvalOptions::default()).unwrap();
        assert!(matches!(cost_report(&a, &c), Err(CoreError::SuiteMismatch)));
    }

    #[test]
    fn paired_arms_share_the_scene_stream() {
        // With a policy that immediately emits the end marker, the
        // with-plan and no-plan arms see identical prefixes and must
        // produce identical scenes (same scene stream).
        let mut params = fresh_params(10);
        let eoc = params.vocab.end_of_cot() as usize;
        let bo = params.bo_offset();
        params.values[bo + eoc] = 50.0;
        let suite = small_suite();
        let (_, with) = evaluate(&params, &suite, &[3], EvalOptions::default()).unwrap();
        let (_, without) = evaluate(
            &params,
            &suite,
            &[3],
            EvalOptions {
                use_cot: false,
                cap: None,
            },
        )
        .unwrap();
        for (a, b) in with.iter().zip(&without) {
            assert_eq!(a.cot_length, 0);
            assert_eq!(a.model_sum, b.model_sum);
        }
    }
}
