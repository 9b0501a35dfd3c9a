//! Mixed-radix codec over the contingency table of categorical covariates.

use crate::error::{Error, Result};

/// Bijection between level vectors and flat cell indices; the last
/// variable varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellIndex {
    levels: Vec<usize>,
    strides: Vec<usize>,
}

impl CellIndex {
    pub fn new(levels: &[usize]) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|&l| l < 2) {
            return Err(Error::Domain(format!(
                "every categorical variable needs at least 2 levels, got {levels:?}"
            )));
        }
        let mut strides = vec![1; levels.len()];
        for k in (0..levels.len() - 1).rev() {
            strides[k] = strides[k + 1] * levels[k + 1];
        }
        Ok(CellIndex {
            levels: levels.to_vec(),
            strides,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.strides[0] * self.levels[0]
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn encode(&self, d: &[usize]) -> Result<usize> {
        if d.len() != self.levels.len() {
            return Err(Error::Domain(format!(
                "level vector has {} entries, expected {}",
                d.len(),
                self.levels.len()
            )));
        }
        let mut idx = 0;
        for (k, (&level, &n)) in d.iter().zip(&self.levels).enumerate() {
            if level >= n {
                return Err(Error::Domain(format!(
                    "level {level} of categorical {k} out of range 0..{n}"
                )));
            }
            idx += level * self.strides[k];
        }
        Ok(idx)
    }

    pub fn decode(&self, cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.levels.len()];
        self.decode_into(cell, &mut out);
        out
    }

    pub fn decode_into(&self, cell: usize, out: &mut [usize]) {
        debug_assert!(cell < self.n_cells());
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = (cell / self.strides[k]) % self.levels[k];
        }
    }

    /// All cells consistent with the observed entries, in increasing order.
    pub fn admissible(&self, d_obs: &[Option<usize>]) -> Result<Vec<usize>> {
        if d_obs.len() != self.levels.len() {
            return Err(Error::Domain(format!(
                "level vector has {} entries, expected {}",
                d_obs.len(),
                self.levels.len()
            )));
        }
        let mut base = 0;
        let mut free = Vec::new();
        for (k, (obs, &n)) in d_obs.iter().zip(&self.levels).enumerate() {
            match *obs {
                Some(level) if level >= n => {
                    return Err(Error::Domain(format!(
                        "level {level} of categorical {k} out of range 0..{n}"
                    )))
                }
                Some(level) => base += level * self.strides[k],
                None => free.push(k),
            }
        }
        let mut cells = vec![base];
        for &k in &free {
            let mut next = Vec::with_capacity(cells.len() * self.levels[k]);
            for &c in &cells {
                for level in 0..self.levels[k] {
                    next.push(c + level * self.strides[k]);
                }
            }
            cells = next;
        }
        cells.sort_unstable();
        Ok(cells)
    }
}
