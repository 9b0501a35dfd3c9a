//! The exact conditionals used for imputation, on one cluster: the normal
//! posterior of a missing continuous covariate and the probabilities of
//! the cells a partly observed categorical pattern still allows.

use hlm_gibbs::gibbs::{init_state, Model};
use hlm_gibbs::posteriors::{c_full_conditional, d_cell_posterior};
use hlm_gibbs::sim::{gen_general_location, sim_model_spec, Truth};
use hlm_gibbs::RngHandle;

fn main() -> anyhow::Result<()> {
    let mut data = gen_general_location(50, 4, &Truth::default(), &mut RngHandle::new(9));
    data.clusters[0].c[0] = None;
    data.clusters[0].d[0] = None;
    let model = Model::new(sim_model_spec(), &data)?;
    let state = init_state(&data, &model, &mut RngHandle::new(1))?;

    let c = c_full_conditional(0, 0, &state, &data, &model.layout)?;
    println!("C1 | rest ~ N({:.3}, {:.3})", c.mean, c.variance());

    let cells = d_cell_posterior(0, &state, &data, &model.layout, &model.cells)?;
    for (cell, p) in cells.cells.iter().zip(&cells.probs) {
        println!("P(D = {cell} | rest) = {p:.3}");
    }
    Ok(())
}
