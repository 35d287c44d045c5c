//! Discrete allocation grid.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A PRB share vector. `units[s]` counts grid steps above the minimum share,
/// so `shares[s] = min_share + units[s] * granularity`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub shares: Vec<f64>,
    pub units: Vec<u32>,
}

impl Allocation {
    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }
}

/// All grid allocations in ascending lexicographic order; the position in
/// this list is the action id.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    granularity: f64,
    min_share: f64,
    allocations: Vec<Allocation>,
}

impl ActionSpace {
    pub fn enumerate(num_slices: usize, granularity: f64, min_share: f64) -> Result<Self> {
        enumerate_action_space(num_slices, granularity, min_share)
    }

    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }

    pub fn num_slices(&self) -> usize {
        self.allocations[0].len()
    }

    pub fn granularity(&self) -> f64 {
        self.granularity
    }

    pub fn min_share(&self) -> f64 {
        self.min_share
    }

    pub fn get(&self, id: usize) -> Option<&Allocation> {
        self.allocations.get(id)
    }

    pub fn allocations(&self) -> &[Allocation] {
        &self.allocations
    }

    pub fn iter(&self) -> impl Iterator<Item = &Allocation> {
        self.allocations.iter()
    }

    /// Id of the grid point nearest (Euclidean) to `target`; ties go to the
    /// lowest id.
    pub fn nearest(&self, target: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (id, a) in self.allocations.iter().enumerate() {
            let d: f64 = a
                .shares
                .iter()
                .zip(target)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if d < best_d - 1e-12 {
                best = id;
                best_d = d;
            }
        }
        best
    }

    /// Stable SHA-256 over the grid parameters and the ordered allocations.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("g={:.12};min={:.12};", self.granularity, self.min_share));
        for a in &self.allocations {
            let row: Vec<String> = a.shares.iter().map(|s| format!("{s:.12}")).collect();
            h.update(row.join(","));
            h.update(";");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn enumerate_action_space(
    num_slices: usize,
    granularity: f64,
    min_share: f64,
) -> Result<ActionSpace> {
    if num_slices == 0 {
        return Err(Error::Config("action space needs at least one slice".into()));
    }
    if !(granularity > 0.0) || !(min_share >= 0.0) {
        return Err(Error::Config(format!(
            "granularity ({granularity}) must be > 0 and min_share ({min_share}) >= 0"
        )));
    }
    let free = 1.0 - num_slices as f64 * min_share;
    if free < -1e-9 {
        return Err(Error::Config(format!(
            "infeasible action space: {num_slices} x min_share {min_share} > 1"
        )));
    }
    let free = free.max(0.0);
    let steps = (free / granularity).round();
    if (steps * granularity - free).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "granularity {granularity} does not divide the free share {free}"
        )));
    }
    let steps = steps as u32;

    // Lexicographic order over units equals lexicographic order over shares.
    let mut allocations = Vec::new();
    let mut units = vec![0u32; num_slices];
    compositions(steps, 0, &mut units, &mut |u| {
        allocations.push(Allocation {
            shares: u.iter().map(|&k| min_share + k as f64 * granularity).collect(),
            units: u.to_vec(),
        });
    });
    if allocations.is_empty() {
        return Err(Error::Config("empty action space".into()));
    }
    Ok(ActionSpace {
        granularity,
        min_share,
        allocations,
    })
}

fn compositions(remaining: u32, pos: usize, units: &mut [u32], out: &mut impl FnMut(&[u32])) {
    if pos == units.len() - 1 {
        units[pos] = remaining;
        out(units);
        return;
    }
    for k in 0..=remaining {
        units[pos] = k;
        compositions(remaining - k, pos + 1, units, out);
    }
}
