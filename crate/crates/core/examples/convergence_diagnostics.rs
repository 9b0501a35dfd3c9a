//! PSRF of a sampler run against a deliberately short one.

use hlm_gibbs::diagnostics::{nonconverged, psrf, summarize};
use hlm_gibbs::sim::{gen_general_location, sim_model_spec, Truth};
use hlm_gibbs::{run, RngHandle, SamplerConfig};

fn main() -> anyhow::Result<()> {
    let data = gen_general_location(100, 4, &Truth::default(), &mut RngHandle::new(5));
    let spec = sim_model_spec();
    for (burn, post) in [(1, 20), (1000, 1000)] {
        let config = SamplerConfig { burn_in: burn, post_burn: post, n_chains: 3, ..SamplerConfig::default() };
        let store = run(&data, &spec, &config)?;
        let rows = summarize(&store);
        let tau = store.param_index("tau").expect("tau is a parameter");
        let series: Vec<Vec<f64>> = (0..store.n_chains()).map(|c| store.series(c, tau)).collect();
        println!(
            "burn {burn:>4}, kept {post:>4}: PSRF(tau) = {:.3}, {} of {} parameters above 1.1",
            psrf(&series)?,
            nonconverged(&rows, 1.1).len(),
            rows.len()
        );
    }
    Ok(())
}
