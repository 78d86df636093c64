//! CSV emission for evaluation reports and analysis bundles. Floats are
//! written with the shortest round-trip representation, so every file is
//! byte-identical across reruns and re-parses to the same values.

use std::collections::BTreeMap;

use shortcot_core::eval::{
    CorrelationMatrix, CostReport, EvalRecord, EvalReport, Histogram, NecessityRatio,
    NecessityRow, CORRELATION_LABELS,
};

use crate::runlog::LogRecord;

fn category_name(row: &shortcot_core::eval::CategoryRow) -> &'static str {
    row.category.map(|c| c.name()).unwrap_or("overall")
}

/// Columns: `category,count,mean_score,mean_model_sum,mean_cot_length,std_cot_length`.
pub fn eval_report_csv(report: &EvalReport) -> String {
    let mut out =
        String::from("category,count,mean_score,mean_model_sum,mean_cot_length,std_cot_length\n");
    for row in report.rows.iter().chain([&report.overall]) {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            category_name(row),
            row.count,
            row.mean_score,
            row.mean_model_sum,
            row.mean_cot_length,
            row.std_cot_length
        ));
    }
    out
}

/// Raw per-(prompt, seed) rows.
pub fn records_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from(
        "prompt_id,category,seed,cot_length,total_tokens,detection,alignment,preference,model_sum,score\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.prompt_id,
            r.category.name(),
            r.seed,
            r.cot_length,
            r.total_tokens,
            r.detection,
            r.alignment,
            r.preference,
            r.model_sum,
            r.score
        ));
    }
    out
}

/// Unit bins plus the moment summary as trailing comment-style rows.
pub fn histogram_csv(histogram: &Histogram) -> String {
    let mut out = String::from("length,count\n");
    for (len, count) in histogram.bins.iter().enumerate() {
        out.push_str(&format!("{len},{count}\n"));
    }
    out.push_str(&format!(
        "mean,{}\nmedian,{}\nskewness,{}\n",
        histogram.mean, histogram.median, histogram.skewness
    ));
    out
}

/// Labeled square matrix; zero-variance variables flagged in the header row.
pub fn pearson_csv(matrix: &CorrelationMatrix) -> String {
    let mut out = String::from("variable");
    for (i, label) in CORRELATION_LABELS.iter().enumerate() {
        out.push_str(",");
        out.push_str(label);
        if matrix.zero_variance[i] {
            out.push_str("(zero-variance)");
        }
    }
    out.push('\n');
    for (i, label) in CORRELATION_LABELS.iter().enumerate() {
        out.push_str(label);
        for j in 0..4 {
            out.push_str(&format!(",{}", matrix.values[i][j]));
        }
        out.push('\n');
    }
    out
}

pub fn necessity_csv(rows: &[NecessityRow]) -> String {
    let mut out = String::from("attribute,wins_with_cot,wins_without_cot,ratio\n");
    for r in rows {
        let ratio = match r.ratio {
            NecessityRatio::Ratio(v) => format!("{v}"),
            NecessityRatio::AllFavorCot => "all-favor-cot".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.attribute, r.wins_with, r.wins_without, ratio
        ));
    }
    out
}

fn per_epoch<F: Fn(&LogRecord) -> Vec<f64>>(
    records: &[LogRecord],
    extract: F,
) -> BTreeMap<u32, (f64, usize)> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in records {
        let entry = acc.entry(r.epoch).or_insert((0.0, 0));
        for v in extract(r) {
            entry.0 += v;
            entry.1 += 1;
        }
    }
    acc
}

/// Per-epoch mean plan length over every rollout in the log.
pub fn length_curve_csv(records: &[LogRecord]) -> String {
    let mut out = String::from("epoch,mean_cot_length\n");
    for (epoch, (sum, n)) in per_epoch(records, |r| {
        r.cot_lengths.iter().map(|&l| l as f64).collect()
    }) {
        out.push_str(&format!("{},{}\n", epoch, sum / n as f64));
    }
    out
}

/// Per-epoch reward statistics.
pub fn reward_curve_csv(records: &[LogRecord]) -> String {
    let mut out =
        String::from("epoch,mean_model_sum,mean_total,mean_length_penalty,mean_kl,mean_objective\n");
    let sums = per_epoch(records, |r| r.model_sums.clone());
    let totals = per_epoch(records, |r| r.totals.clone());
    let penalties = per_epoch(records, |r| r.length_penalties.clone());
    let kls = per_epoch(records, |r| vec![r.mean_kl]);
    let objectives = per_epoch(records, |r| vec![r.objective]);
    for (epoch, (sum, n)) in sums {
        let t = totals[&epoch];
        let p = penalties[&epoch];
        let k = kls[&epoch];
        let o = objectives[&epoch];
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            epoch,
            sum / n as f64,
            t.0 / t.1 as f64,
            p.0 / p.1 as f64,
            k.0 / k.1 as f64,
            o.0 / o.1 as f64
        ));
    }
    out
}

/// One row per treated strategy against the baseline.
pub fn cost_summary_csv(rows: &[(String, CostReport)]) -> String {
    let mut out = String::from(
        "run,baseline_mean_cot,treated_mean_cot,cot_reduction_pct,baseline_mean_tokens,treated_mean_tokens,token_reduction_pct\n",
    );
    for (label, c) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            label,
            c.baseline_mean_cot,
            c.treated_mean_cot,
            c.cot_reduction_pct,
            c.baseline_mean_tokens,
            c.treated_mean_tokens,
            c.token_reduction_pct
        ));
    }
    out
}

/// Structured one-record summary of an evaluation (sorted JSON keys).
pub fn eval_summary_json(report: &EvalReport) -> serde_json::Value {
    serde_json::json!({
        "seeds": report.seeds,
        "use_cot": report.use_cot,
        "suite_fingerprint": report.suite_fingerprint,
        "samples": report.overall.count,
        "mean_score": report.overall.mean_score,
        "mean_model_sum": report.overall.mean_model_sum,
        "mean_cot_length": report.overall.mean_cot_length,
        "std_cot_length": report.overall.std_cot_length,
        "mean_total_tokens": report.mean_total_tokens(),
        "total_semantic_tokens": report.total_semantic_tokens,
        "total_scene_tokens": report.total_scene_tokens,
    })
}

/// Splits CSV text into trimmed cells (no quoting in these files).
pub fn parse_csv(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use shortcot_core::env;
    use shortcot_core::eval::{self, EvalOptions};
    use shortcot_core::trainer::fresh_params;

    #[test]
    fn eval_csv_round_trips_numerically() {
        let params = fresh_params(4);
        let suite = env::uniform_suite(2, 3);
        let (report, records) =
            eval::evaluate(&params, &suite, &[1, 2], EvalOptions::default()).unwrap();
        let table = parse_csv(&eval_report_csv(&report));
        assert_eq!(table.len(), 1 + report.rows.len() + 1);
        let overall = table.last().unwrap();
        assert_eq!(overall[0], "overall");
        assert_eq!(overall[1].parse::<u32>().unwrap(), report.overall.count);
        assert_eq!(
            overall[4].parse::<f64>().unwrap(),
            report.overall.mean_cot_length
        );

        let rec_table = parse_csv(&records_csv(&records));
        assert_eq!(rec_table.len(), records.len() + 1);
        assert_eq!(
            rec_table[1][8].parse::<f64>().unwrap(),
            records[0].model_sum
        );
    }

    #[test]
    fn histogram_and_pearson_csv_parse_back() {
        let h = eval::length_histogram(&[1, 1, 2, 10]).unwrap();
        let table = parse_csv(&histogram_csv(&h));
        let skew_row = table.iter().find(|r| r[0] == "skewness").unwrap();
        assert_eq!(skew_row[1].parse::<f64>().unwrap(), h.skewness);
        let counts: u64 = table
            .iter()
            .skip(1)
            .filter(|r| r[0].parse::<usize>().is_ok())
            .map(|r| r[1].parse::<u64>().unwrap())
            .sum();
        assert_eq!(counts, 4);

        let stats: Vec<eval::PromptStat> = (0..4)
            .map(|i| eval::PromptStat {
                prompt_id: i,
                length_avg: i as f64,
                length_std: 1.0 + i as f64,
                score_avg: 0.5,
                score_std: (i % 2) as f64,
            })
            .collect();
        let m = eval::pearson_matrix(&stats).unwrap();
        let table = parse_csv(&pearson_csv(&m));
        assert_eq!(table[1][1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(table[1][3].parse::<f64>().unwrap(), m.values[0][2]);
        // score_avg has zero variance and is flagged in the header.
        assert!(table[0][3].contains("zero-variance"));
    }
}
