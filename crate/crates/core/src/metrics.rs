//! Trial metrics and empirical CDFs.

use crate::error::{contract, Result};
use crate::linalg::{CVec, C64};
use crate::scenario::Realization;

/// Channel estimates indexed by global user: `[l][kbar]`, `None` for users
/// not detected as active.
pub type ChannelEstimates = Vec<Vec<Option<CVec>>>;
/// Symbol decisions per global user, `None` for users not detected.
pub type SymbolDecisions = Vec<Option<Vec<C64>>>;

/// `sum ||h^ - h||^2 / sum ||h||^2` over truly active users; a missed user
/// counts as `h^ = 0` and false alarms are ignored. `None` without active
/// users.
pub fn compute_cnmse(estimates: &ChannelEstimates, r: &Realization) -> Option<f64> {
    let (mut err, mut energy) = (0.0, 0.0);
    for (l, row) in estimates.iter().enumerate() {
        for (k, est) in row.iter().enumerate() {
            if !r.u_true[k] {
                continue;
            }
            let h = r.channel(l, k);
            energy += h.norm_squared();
            err += match est {
                Some(e) => (e - &h).norm_squared(),
                None => h.norm_squared(),
            };
        }
    }
    (r.u_true.iter().any(|&a| a) && energy > 0.0).then(|| err / energy)
}

/// Hamming distance between activity vectors over the number of users.
pub fn compute_der(u_hat: &[bool], u_true: &[bool]) -> f64 {
    assert_eq!(u_hat.len(), u_true.len());
    if u_true.is_empty() {
        return 0.0;
    }
    u_hat.iter().zip(u_true).filter(|(a, b)| a != b).count() as f64 / u_true.len() as f64
}

/// Symbol error rate over the truly active users' `T` symbols; a missed user
/// has all its symbols wrong. `None` without active users or data.
pub fn compute_ser(decisions: &SymbolDecisions, r: &Realization) -> Option<f64> {
    let t_len = r.data_len();
    let mut wrong = 0usize;
    let mut total = 0usize;
    for (k, dec) in decisions.iter().enumerate() {
        if !r.u_true[k] {
            continue;
        }
        total += t_len;
        wrong += match dec {
            Some(d) => (0..t_len).filter(|&t| d[t] != r.x_true[(k, t)]).count(),
            None => t_len,
        };
    }
    (total > 0).then(|| wrong as f64 / total as f64)
}

/// Right-continuous empirical CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(contract("ecdf of an empty sample"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(contract("ecdf sample contains NaN"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `F(x) = #{v <= x} / n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample value `v` with `F(v) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let idx = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[idx - 1]
    }

    /// Step points `(v_i, i/n)` in ascending order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted.iter().enumerate().map(move |(i, &v)| (v, (i + 1) as f64 / n))
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}
