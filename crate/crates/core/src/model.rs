//! Receiver-side model restricted to the users detected as active.

use crate::linalg::{CMat, CVec, C64};
use crate::scenario::{despread_all, Realization};

/// Observations and priors indexed by detected-active users only.
///
/// Local user `k` corresponds to global user `active[k]`. Pilot groups keep
/// their global numbering; a group whose users were all pruned is empty.
#[derive(Clone, Debug)]
pub struct PrunedModel {
    pub active: Vec<usize>,
    pub group_of: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    /// `[l][k]`.
    pub xi: Vec<Vec<CMat>>,
    /// Despread pilots `[l][g]`.
    pub despread: Vec<Vec<CVec>>,
    /// Received data `[l]`, `N x T`.
    pub y: Vec<CMat>,
    pub sigma_x2: f64,
    pub sigma_v2: f64,
    pub despread_noise_var: f64,
    pub symbols: Vec<C64>,
}

/// Keeps the users with `u_hat[k]` set, recording the map back to global
/// indices.
pub fn prune(u_hat: &[bool], r: &Realization, symbols: &[C64]) -> PrunedModel {
    assert_eq!(u_hat.len(), r.num_users(), "prune: activity vector length");
    let active: Vec<usize> = (0..u_hat.len()).filter(|&k| u_hat[k]).collect();
    let group_of: Vec<usize> = active.iter().map(|&k| r.pilot_of[k]).collect();
    let mut groups = vec![Vec::new(); r.pilot_groups.len()];
    for (local, &g) in group_of.iter().enumerate() {
        groups[g].push(local);
    }
    PrunedModel {
        xi: r.xi.iter().map(|row| active.iter().map(|&k| row[k].clone()).collect()).collect(),
        despread: despread_all(r),
        y: r.y.clone(),
        sigma_x2: r.sigma_x2,
        sigma_v2: r.sigma_v2,
        despread_noise_var: r.despread_noise_var(),
        symbols: symbols.to_vec(),
        active,
        group_of,
        groups,
    }
}

impl PrunedModel {
    pub fn num_aps(&self) -> usize {
        self.y.len()
    }

    pub fn num_users(&self) -> usize {
        self.active.len()
    }

    pub fn antennas(&self) -> usize {
        self.y.first().map_or(0, |y| y.nrows())
    }

    pub fn data_len(&self) -> usize {
        self.y.first().map_or(0, |y| y.ncols())
    }

    /// Co-pilot users of local user `k`, excluding `k`.
    pub fn co_pilot(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.groups[self.group_of[k]].iter().copied().filter(move |&j| j != k)
    }

    /// The same model seen by AP `l` alone.
    pub fn restrict_to_ap(&self, l: usize) -> PrunedModel {
        PrunedModel {
            xi: vec![self.xi[l].clone()],
            despread: vec![self.despread[l].clone()],
            y: vec![self.y[l].clone()],
            ..self.clone()
        }
    }
}
