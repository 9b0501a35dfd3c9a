//! Model specification, two-level data with missingness, the contingency
//! table cell algebra, and the Gibbs state.

mod cells;
mod data;
mod design;
mod spec;
mod state;

pub use cells::CellIndex;
pub use data::{Cluster, Dataset};
pub(crate) use data::mean_or_zero;
pub use design::{build_design_row, DesignLayout};
pub use spec::{CategoricalVar, ModelSpec, PriorSpec, Priors};
pub use state::{theta_names, theta_values, ParamState, Slot};

use crate::error::Result;

/// Flat index of a level vector.
pub fn encode_cell(d_levels: &[usize], spec: &ModelSpec) -> Result<usize> {
    spec.cell_index().encode(d_levels)
}

/// The cells `S_j` consistent with the observed categorical entries.
pub fn admissible_cells(d_obs: &[Option<usize>], spec: &ModelSpec) -> Result<Vec<usize>> {
    spec.cell_index().admissible(d_obs)
}
