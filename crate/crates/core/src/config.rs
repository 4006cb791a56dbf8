//! Scenario and algorithm parameters.
//!
//! Powers are configured in dBm and converted to linear milliwatts; the
//! noise power may be `-inf` for noiseless experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constellation {
    Bpsk,
    #[default]
    #[serde(rename = "4qam", alias = "qpsk")]
    Qam4,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Constellation {
    /// Symbol set with zero mean and average power `sigma_x2`.
    pub fn points(self, sigma_x2: f64) -> Vec<C64> {
        match self {
            Constellation::Bpsk => {
                let a = sigma_x2.sqrt();
                vec![c64(a, 0.0), c64(-a, 0.0)]
            }
            Constellation::Qam4 => {
                let a = (sigma_x2 / 2.0).sqrt();
                vec![c64(a, a), c64(-a, a), c64(-a, -a), c64(a, -a)]
            }
            Constellation::Qam16 => {
                // levels {-3,-1,1,3}: mean |s|^2 = 10
                let a = (sigma_x2 / 10.0).sqrt();
                let levels = [-3.0, -1.0, 1.0, 3.0];
                levels
                    .iter()
                    .flat_map(|&re| levels.iter().map(move |&im| c64(re * a, im * a)))
                    .collect()
            }
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Deployment, power, pilot and frame parameters of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Side of the square coverage area in meters.
    pub area_side: f64,
    /// Number of access points `L`.
    pub num_aps: usize,
    /// Antennas per access point `N`.
    pub antennas: usize,
    /// Total number of (potentially active) users.
    pub num_users: usize,
    /// Pilot length `P`.
    pub pilot_len: usize,
    /// Data length `T`.
    pub data_len: usize,
    /// Per-symbol transmit power in dBm.
    pub tx_power_dbm: f64,
    /// Noise power per receive sample in dBm.
    pub noise_power_dbm: f64,
    /// AP antenna height in meters.
    pub ap_height: f64,
    /// Path-loss intercept in dB at 1 m.
    pub pathloss_const_db: f64,
    /// Path-loss slope in dB per decade of distance.
    pub pathloss_slope_db: f64,
    pub constellation: Constellation,
    /// Probability that a user is active in a frame.
    pub activity_prob: f64,
    /// Users sharing each orthogonal pilot sequence.
    pub users_per_pilot: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side: 400.0,
            num_aps: 16,
            antennas: 2,
            num_users: 16,
            pilot_len: 8,
            data_len: 20,
            tx_power_dbm: 14.0,
            noise_power_dbm: -96.0,
            ap_height: 10.0,
            pathloss_const_db: -30.5,
            pathloss_slope_db: 36.7,
            constellation: Constellation::Qam4,
            activity_prob: 0.5,
            users_per_pilot: 2,
        }
    }
}

impl ScenarioConfig {
    /// Two-AP, four-user instance used by the oracle tests.
    pub fn small() -> Self {
        Self {
            num_aps: 2,
            antennas: 2,
            num_users: 4,
            pilot_len: 2,
            data_len: 8,
            ..Self::default()
        }
    }

    pub fn sigma_x2(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm)
    }

    pub fn sigma_v2(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }

    /// Variance of the despread pilot noise, `sigma_v2 / (P sigma_x2)`.
    pub fn despread_noise_var(&self) -> f64 {
        self.sigma_v2() / (self.pilot_len as f64 * self.sigma_x2())
    }

    pub fn num_pilot_groups(&self) -> usize {
        self.num_users / self.users_per_pilot.max(1)
    }

    pub fn symbols(&self) -> Vec<C64> {
        self.constellation.points(self.sigma_x2())
    }

    /// Linear channel-gain variance per antenna at distance `d` meters.
    pub fn pathloss_variance(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::Contract(format!("pathloss distance must be positive, got {d}")));
        }
        let db = self.pathloss_const_db - self.pathloss_slope_db * d.log10();
        Ok(10f64.powf(db / 10.0))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_aps == 0 || self.antennas == 0 || self.num_users == 0 {
            return bad("num_aps, antennas and num_users must be positive");
        }
        if self.users_per_pilot == 0 || self.num_users % self.users_per_pilot != 0 {
            return bad("num_users must be a multiple of users_per_pilot");
        }
        if self.num_pilot_groups() > self.pilot_len {
            return bad("pilot_len must be at least the number of pilot groups");
        }
        if !(self.sigma_x2() > 0.0 && self.sigma_x2().is_finite()) {
            return bad("tx_power_dbm must give a positive finite power");
        }
        if !(self.sigma_v2() >= 0.0) || self.sigma_v2().is_infinite() {
            return bad("noise_power_dbm must give a finite non-negative power");
        }
        if !(0.0..=1.0).contains(&self.activity_prob) {
            return bad("activity_prob must lie in [0, 1]");
        }
        if !(self.area_side > 0.0) || !(self.ap_height >= 0.0) {
            return bad("area_side must be positive and ap_height non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityParams {
    /// Cap on full coordinate passes over all users.
    pub max_passes: usize,
}

impl Default for ActivityParams {
    fn default() -> Self {
        Self { max_passes: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlepParams {
    pub max_iters: usize,
    /// Relative channel-mean movement below which iteration stops.
    pub tol: f64,
    /// Weight of the new channel mean (1 = undamped).
    pub damping: f64,
    /// Initial symbol variance of the first M-step.
    pub init_symbol_var: f64,
}

impl Default for VlepParams {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-4, damping: 1.0, init_symbol_var: 1.0 }
    }
}

/// Symbol prior used inside VB-EP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolPrior {
    /// Uniform over the constellation (finite alphabet).
    #[default]
    Discrete,
    /// `CN(0, sigma_x2)`.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VbepParams {
    pub max_sweeps: usize,
    /// Relative channel- and symbol-belief movement below which sweeping
    /// stops.
    pub tol: f64,
    /// Weight of the new `delta -> z` and `delta -> h` messages.
    pub damping: f64,
    pub symbol_prior: SymbolPrior,
    /// Record per-sweep trace lines.
    pub trace: bool,
}

impl Default for VbepParams {
    fn default() -> Self {
        Self { max_sweeps: 30, tol: 1e-4, damping: 0.7, symbol_prior: SymbolPrior::Discrete, trace: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoParams {
    pub activity: ActivityParams,
    pub vlep: VlepParams,
    pub vbep: VbepParams,
}
