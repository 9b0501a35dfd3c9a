//! Fit a model to a long-format CSV file and print the posterior summary.
//!
//!     cargo run --example fit_csv -- data.csv
//!
//! Without an argument a small simulated data set is written to a temp
//! dir and fitted instead.

use anyhow::Context;
use hlm_gibbs::cli::{dataset_csv, load_csv, CsvSchema};
use hlm_gibbs::diagnostics::summarize;
use hlm_gibbs::sim::{gen_general_location, sim_model_spec, Truth};
use hlm_gibbs::{run, RngHandle, SamplerConfig};

fn main() -> anyhow::Result<()> {
    let spec = sim_model_spec();
    let schema = CsvSchema::default();
    let dir = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let data = gen_general_location(60, 4, &Truth::default(), &mut RngHandle::new(1));
            let p = dir.path().join("data.csv");
            std::fs::write(&p, dataset_csv(&data, &schema, &spec, "")?)?;
            p
        }
    };
    let data = load_csv(&path, &schema, &spec).with_context(|| format!("reading {}", path.display()))?;
    let config = SamplerConfig { burn_in: 500, post_burn: 1000, ..SamplerConfig::default() };
    let store = run(&data, &spec, &config)?;

    println!("{:<24} {:>9} {:>8} {:>9} {:>9} {:>6}", "parameter", "mean", "sd", "2.5%", "97.5%", "psrf");
    for r in summarize(&store) {
        println!(
            "{:<24} {:>9.3} {:>8.3} {:>9.3} {:>9.3} {:>6}",
            r.name,
            r.posterior_mean,
            r.posterior_sd,
            r.ci_lo,
            r.ci_hi,
            r.psrf.map_or("NA".into(), |v| format!("{v:.3}"))
        );
    }
    Ok(())
}
