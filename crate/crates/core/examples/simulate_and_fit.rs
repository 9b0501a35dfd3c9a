//! One replication end to end: generate, delete values at random given
//! C2, fit with Gibbs and compare with ML on the complete data.

use hlm_gibbs::diagnostics::summarize;
use hlm_gibbs::reference_ml::fit_ml;
use hlm_gibbs::sim::{missing_rates, sim_model_spec, simulate_pair, SimScenario};
use hlm_gibbs::{run, SamplerConfig};

fn main() -> anyhow::Result<()> {
    let scenario = SimScenario { n_clusters: 200, seed: 11, ..SimScenario::default() };
    let (complete, amputed) = simulate_pair(&scenario, 0);
    let rates = missing_rates(&amputed);
    println!("missing: y {:.1}%, C1 {:.1}%, D {:.1}%", 100.0 * rates[0], 100.0 * rates[1], 100.0 * rates[2]);

    let spec = sim_model_spec();
    let ml = fit_ml(&complete, &spec)?;
    let config = SamplerConfig { burn_in: 1000, post_burn: 1000, seed: scenario.seed, ..SamplerConfig::default() };
    let rows = summarize(&run(&amputed, &spec, &config)?);

    let truth = scenario.truth.values();
    let ml_values: Vec<f64> = ml.beta_hat.iter().copied().chain([ml.tau_hat, ml.sigma2_hat]).collect();
    println!("{:<18} {:>6} {:>12} {:>12}", "parameter", "truth", "gibbs", "ML complete");
    for (i, name) in scenario.parameter_names().iter().enumerate() {
        let g = rows
            .iter()
            .find(|r| r.name == *name || r.name == format!("beta[{name}]"))
            .expect("scored parameter");
        println!("{:<18} {:>6.2} {:>12.3} {:>12.3}", name, truth[i], g.posterior_mean, ml_values[i]);
    }
    Ok(())
}
