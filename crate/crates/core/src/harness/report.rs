//! Plot-ready artifacts derived from a finished run.
//!
//! Everything is written as small flat CSVs so any plotting tool can consume
//! them; nothing here is needed to recompute aggregates, which always come
//! from the row table itself.

use std::path::Path;

use super::aggregate::{aggregate_by_case, asr_by_class, compare_families, mismatch_distributions};
use super::ks::ks_test;
use super::run::RunOutput;
use crate::data::{BalanceLevel, TaskId};
use crate::error::Result;

/// Writes the row table (CSV and JSON) plus the tuning records.
pub fn write_run_artifacts(dir: &Path, output: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    output.table.write_csv(&dir.join("results.csv"))?;
    output.table.write_json(&dir.join("results.json"))?;
    std::fs::write(
        dir.join("tunings.json"),
        serde_json::to_string_pretty(&output.tunings)?,
    )?;
    Ok(())
}

/// Writes one CSV per figure-style grouping into `<dir>/figures/`.
pub fn write_figure_bundle(dir: &Path, output: &RunOutput) -> Result<()> {
    let fig = dir.join("figures");
    std::fs::create_dir_all(&fig)?;
    let cells = &output.table.cells;

    let mut tasks: Vec<TaskId> = cells.iter().map(|c| c.task).collect();
    tasks.sort();
    tasks.dedup();

    // Mean ASR per (task, attack, case): the per-case bar charts.
    let mut case_means = String::from("task,attack,family,case,mean_asr,cells\n");
    for s in aggregate_by_case(cells) {
        case_means.push_str(&format!(
            "{},{},{},{},{:.6},{}\n",
            s.task,
            s.attack.name(),
            s.attack.family().as_str(),
            s.case,
            s.mean_asr,
            s.cells
        ));
    }
    std::fs::write(fig.join("case_means.csv"), case_means)?;

    // Family head-to-head per case.
    let mut wins = String::from("task,case,comparisons,non_math_wins\n");
    for w in compare_families(cells) {
        wins.push_str(&format!(
            "{},{},{},{}\n",
            w.task, w.case, w.comparisons, w.non_math_wins
        ));
    }
    std::fs::write(fig.join("family_wins.csv"), wins)?;

    // Per-class flip rates over the balance grid.
    let mut class_rows = String::from("task,src_balance,trg_balance,class,asr,samples\n");
    for &task in &tasks {
        let m = asr_by_class(cells, task);
        for i in 0..4 {
            for j in 0..4 {
                let entries = [
                    ("minority", m.minority[i][j], m.minority_n[i][j]),
                    ("majority", m.majority[i][j], m.majority_n[i][j]),
                    (
                        "combined",
                        m.combined[i][j],
                        m.minority_n[i][j] + m.majority_n[i][j],
                    ),
                ];
                for (class, rate, n) in entries {
                    if let Some(rate) = rate {
                        class_rows.push_str(&format!(
                            "{},{},{},{},{:.6},{}\n",
                            task, m.balances[i], m.balances[j], class, rate, n
                        ));
                    }
                }
            }
        }
    }
    std::fs::write(fig.join("class_asr.csv"), class_rows)?;

    // The raw transfer heatmap, one row per evaluated cell.
    let mut heat = String::from("task,attack,src,trg,case,asr\n");
    for c in cells {
        if let Some(asr) = c.asr {
            heat.push_str(&format!(
                "{},{},{},{},{},{asr:.6}\n",
                c.task,
                c.attack.name(),
                c.src.id(),
                c.trg.id(),
                c.case
            ));
        }
    }
    std::fs::write(fig.join("transfer_matrix.csv"), heat)?;

    // Tuning traces: the full constraint sweep per work unit.
    let mut traces = String::from("task,attack,src,param,asr,mean_ssim,feasible,chosen\n");
    for record in &output.tunings {
        for point in &record.result.trace {
            let chosen = record.result.feasible && point.param == record.result.gamma;
            traces.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{},{}\n",
                record.task,
                record.attack.name(),
                record.src,
                point.param.map(|p| format!("{p:.6}")).unwrap_or_default(),
                point.asr,
                point.mean_ssim,
                point.feasible,
                chosen
            ));
        }
    }
    std::fs::write(fig.join("tuning_traces.csv"), traces)?;

    // Source-mismatch ASR distributions per target balance, with the
    // direction-wise KS comparison.
    let mut hist = String::from("task,trg_balance,direction,bin_lo,bin_hi,count\n");
    let mut ks_rows = String::from("task,trg_balance,statistic,p_value,n_a,n_b\n");
    for &task in &tasks {
        for balance in BalanceLevel::all() {
            let split = mismatch_distributions(cells, task, balance, 20)?;
            for (name, counts) in [("a-to-b", &split.a_counts), ("b-to-a", &split.b_counts)] {
                for (i, count) in counts.iter().enumerate() {
                    hist.push_str(&format!(
                        "{},{},{},{:.2},{:.2},{}\n",
                        task,
                        balance,
                        name,
                        split.bin_edges[i],
                        split.bin_edges[i + 1],
                        count
                    ));
                }
            }
            if !split.a_to_b.is_empty() && !split.b_to_a.is_empty() {
                let ks = ks_test(&split.a_to_b, &split.b_to_a)?;
                ks_rows.push_str(&format!(
                    "{},{},{:.6},{:.6},{},{}\n",
                    task, balance, ks.statistic, ks.p_value, ks.n_a, ks.n_b
                ));
            }
        }
    }
    std::fs::write(fig.join("mismatch_hist.csv"), hist)?;
    std::fs::write(fig.join("ks_tests.csv"), ks_rows)?;
    Ok(())
}
