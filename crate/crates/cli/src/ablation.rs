use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Args;
use gve_core::agent::Variant;
use gve_core::config::RESOLVED_FILE;
use gve_core::evalkit::{
    evaluate_random, value_error_curve, write_value_error_csv, EpisodeRecord, MetricsReport, MIN_CURVE_SAMPLES,
};
use gve_core::experiment::Experiment;
use gve_core::gridhouse::Split;
use gve_core::{Error, Result};

use crate::run;
use crate::ConfigArgs;

pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_SEEDS_FILE: &str = "ablation_seeds.csv";
pub const ABLATION_HEADER: &str = "variant,spl,sr,spl_gt5,sr_gt5";
const RANDOM_LABEL: &str = "Random";

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated variant labels.
    #[arg(long, value_delimiter = ',', default_value = "A3C,A3C_Graph_SS,A3C_MAML,Graph_MAML_SS,Graph_MAML_Action,GVE_MAML,GVE_LG,GVE_RandomGraph")]
    variants: Vec<String>,
    /// Comma-separated training seeds; table entries are means over them.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
}

/// Per-seed metrics and pooled episode records of one table row.
struct Row {
    label: String,
    reports: Vec<(u64, MetricsReport)>,
    records: Vec<EpisodeRecord>,
}

pub fn run(args: AblationArgs) -> Result<()> {
    let variants = args
        .variants
        .iter()
        .map(|s| Variant::parse(s.trim()).ok_or_else(|| Error::Config(format!("unknown variant `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    if args.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let base = run::resolve_config(&args.config)?;
    let dir = run::run_dir(&base);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(RESOLVED_FILE), base.resolved())?;

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst))
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }

    let mut rows: Vec<Row> = variants
        .iter()
        .map(|v| Row {
            label: v.label().to_string(),
            reports: Vec::new(),
            records: Vec::new(),
        })
        .collect();
    for &seed in &args.seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let exp = Experiment::prepare(&cfg)?;
        for (row, &variant) in rows.iter_mut().zip(&variants) {
            let agent = exp.agent(variant, &cfg)?;
            let store = exp.new_store(&agent, &cfg);
            exp.train(&agent, &store, &cfg, &stop, |_, _| Ok(()))?;
            if stop.load(Ordering::SeqCst) {
                println!("interrupted; no table written");
                return Ok(());
            }
            let records = exp.evaluate(&agent, &store.params(), &cfg, Split::Test)?;
            let report = MetricsReport::from_records(&records);
            println!(
                "{:<18} seed {seed}: SR {:.3} SPL {:.3}",
                row.label, report.overall.sr, report.overall.spl
            );
            row.reports.push((seed, report));
            row.records.extend(records);
        }
    }
    let exp = Experiment::prepare(&base)?;
    let random = evaluate_random(exp.pool(Split::Test), &base.eval_config(Variant::A3C))?;
    rows.push(Row {
        label: RANDOM_LABEL.to_string(),
        reports: vec![(base.eval_seed, MetricsReport::from_records(&random))],
        records: Vec::new(),
    });

    std::fs::write(dir.join(ABLATION_FILE), table(&rows))?;
    std::fs::write(dir.join(ABLATION_SEEDS_FILE), per_seed(&rows))?;
    for row in rows.iter().filter(|r| !r.records.is_empty()) {
        let curve = value_error_curve(&row.records, base.a3c.gamma, base.error_kind, base.ground_truth(), MIN_CURVE_SAMPLES);
        write_value_error_csv(&dir.join(format!("value_error_{}.csv", row.label)), &curve)?;
    }
    print!("{}", table(&rows));
    println!("wrote {}", dir.join(ABLATION_FILE).display());
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Seed-mean table. A filtered cell is empty when no seed had a long episode.
fn table(rows: &[Row]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for row in rows {
        let r = || row.reports.iter().map(|(_, r)| r);
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            row.label,
            cell(mean(r().map(|r| r.overall.spl))),
            cell(mean(r().map(|r| r.overall.sr))),
            cell(mean(r().filter_map(|r| r.long).map(|l| l.spl))),
            cell(mean(r().filter_map(|r| r.long).map(|l| l.sr))),
        );
    }
    s
}

fn per_seed(rows: &[Row]) -> String {
    let mut s = "variant,seed,spl,sr,spl_gt5,sr_gt5\n".to_string();
    for row in rows {
        for (seed, r) in &row.reports {
            let _ = writeln!(
                s,
                "{},{seed},{:.6},{:.6},{},{}",
                row.label,
                r.overall.spl,
                r.overall.sr,
                cell(r.long.map(|l| l.spl)),
                cell(r.long.map(|l| l.sr)),
            );
        }
    }
    s
}
