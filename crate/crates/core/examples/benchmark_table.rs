//! A small Monte Carlo study: percent bias, standard errors and interval
//! coverage for Gibbs on amputed data and ML on complete data.
//!
//!     cargo run --release --example benchmark_table -- 20

use hlm_gibbs::sim::{run_study, MetricsTable, SimScenario};
use hlm_gibbs::SamplerConfig;

fn print(table: &MetricsTable) {
    println!("{} ({} replications)", table.estimator, table.n_replications);
    println!("{:<18} {:>8} {:>8} {:>7} {:>7} {:>6}", "parameter", "truth", "%bias", "ASE", "ESE", "cover");
    for r in &table.rows {
        println!(
            "{:<18} {:>8.2} {:>8.2} {:>7} {:>7.3} {:>6}",
            r.name,
            r.truth,
            r.pct_bias,
            r.ase.map_or("NA".into(), |v| format!("{v:.3}")),
            r.ese,
            r.coverage.map_or("NA".into(), |v| format!("{v:.2}")),
        );
    }
}

fn main() -> anyhow::Result<()> {
    let reps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let scenario = SimScenario {
        replications: reps,
        sampler: SamplerConfig { burn_in: 500, post_burn: 500, ..SamplerConfig::default() },
        ..SimScenario::default()
    };
    let study = run_study(&scenario)?;
    print(&study.gibbs);
    println!();
    print(&study.cdml);
    println!("\nreplications with every PSRF <= {}: {:.0}%", scenario.psrf_threshold, 100.0 * study.psrf_pass_rate(1.0));
    Ok(())
}
