//! Rank five encoders across the 16-task benchmark from the shipped
//! per-task score table: competition ranks per task, mean reciprocal
//! rank (MRR) and Borda count per task group, plus SVG charts.
//!
//! Run with: `cargo run --example rank_benchmark`

use std::path::Path;

use ausculta::rank::{self, Grouping, ScoreTable};
use ausculta::report;

fn main() -> ausculta::Result<()> {
    let scores = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/benchmark_scores.json");
    let table = ScoreTable::load(&scores)?;
    println!("loaded {} models from {}\n", table.models().len(), scores.display());

    for metric in ["macro_f1", "micro_f1", "accuracy"] {
        let report = rank::rank_report(&table, Grouping::Function, metric)?;
        println!("=== metric: {metric} ===");
        for group in &report.groups {
            println!("{} ({} tasks)", group.name, group.tasks.len());
            let mut rows: Vec<(&String, &f64)> = group.mrr.iter().collect();
            rows.sort_by(|a, b| b.1.total_cmp(a.1));
            for (i, (model, mrr)) in rows.iter().enumerate() {
                println!(
                    "  {}. {:<14} MRR {:.4}   Borda {:>5.1}",
                    i + 1,
                    model,
                    mrr,
                    group.borda[model.as_str()]
                );
            }
        }
        println!();
    }

    // Charts for the headline Macro-F1 view.
    let report = rank::rank_report(&table, Grouping::Function, "macro_f1")?;
    let out = Path::new("target/rank-demo");
    std::fs::create_dir_all(out).map_err(|e| ausculta::Error::io(out, e))?;

    let group_names: Vec<String> = report.groups.iter().map(|g| g.name.clone()).collect();
    let series: Vec<(String, Vec<f64>)> = report
        .models
        .iter()
        .map(|m| {
            let values = report.groups.iter().map(|g| g.mrr[m]).collect();
            (m.clone(), values)
        })
        .collect();
    let bars = report::bar_chart("MRR by task group (macro_f1)", &group_names, &series);
    let radar = report::radar_chart("MRR by task group (macro_f1)", &group_names, &series);
    std::fs::write(out.join("mrr_bars.svg"), bars).map_err(|e| ausculta::Error::io(out, e))?;
    std::fs::write(out.join("mrr_radar.svg"), radar).map_err(|e| ausculta::Error::io(out, e))?;
    println!("wrote {}/mrr_bars.svg and mrr_radar.svg", out.display());
    println!("(the CLI equivalent: cargo run -- rank --scores crates/ausculta/data/benchmark_scores.json --group function --out target/rank-demo)");
    Ok(())
}
