//! Deployments, channels, activity, pilots and the received-signal model
//! `[Y_p,l  Y_l] = H_l U [X_p  X] + [V_p,l  V_l]`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{contract, Result};
use crate::linalg::{c64, hermitian_eigen, scaled_eye, CMat, CVec, C64};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a path of
/// indices, e.g. `(setup, trial)`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &i| mix(acc ^ mix(i.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw of `CN(0, var)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(s * re, s * im)
}

/// One draw of `CN(0, cov)` for an arbitrary Hermitian PSD `cov`.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, cov: &CMat) -> CVec {
    let n = cov.nrows();
    let w = CVec::from_fn(n, |_, _| complex_normal(rng, 1.0));
    if is_scaled_identity(cov) {
        return w.scale(cov[(0, 0)].re.max(0.0).sqrt());
    }
    let (vals, vecs) = hermitian_eigen(cov);
    let root = CVec::from_iterator(n, vals.iter().map(|&l| c64(l.max(0.0).sqrt(), 0.0)));
    &vecs * w.component_mul(&root)
}

fn is_scaled_identity(m: &CMat) -> bool {
    let d = m[(0, 0)];
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m[(i, j)] == if i == j { d } else { c64(0.0, 0.0) }))
}

/// Orthogonal pilot codebook, one length-`P` sequence per pilot group.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    sequences: Vec<CVec>,
    sigma_x2: f64,
}

impl PilotBook {
    /// First `groups` rows of the `P x P` DFT matrix, scaled so that each
    /// sequence has energy `P sigma_x2`.
    pub fn dft(pilot_len: usize, groups: usize, sigma_x2: f64) -> Result<Self> {
        if groups > pilot_len {
            return Err(contract("more pilot groups than orthogonal sequences"));
        }
        let amp = sigma_x2.sqrt();
        let sequences = (0..groups)
            .map(|g| {
                CVec::from_fn(pilot_len, |p, _| {
                    let phase = -2.0 * std::f64::consts::PI * (g * p) as f64 / pilot_len as f64;
                    C64::from_polar(amp, phase)
                })
            })
            .collect();
        Ok(Self { sequences, sigma_x2 })
    }

    /// Arbitrary codebook; rejected unless the sequences are mutually
    /// orthogonal with energy `P sigma_x2` each.
    pub fn from_sequences(sequences: Vec<CVec>, sigma_x2: f64) -> Result<Self> {
        let book = Self { sequences, sigma_x2 };
        book.check_orthogonal()?;
        Ok(book)
    }

    pub fn check_orthogonal(&self) -> Result<()> {
        let p = self.pilot_len() as f64;
        let energy = p * self.sigma_x2;
        for (g, a) in self.sequences.iter().enumerate() {
            if (a.norm_squared() - energy).abs() > 1e-9 * energy {
                return Err(contract(format!("pilot {g} energy {} != P sigma_x2", a.norm_squared())));
            }
            for b in &self.sequences[g + 1..] {
                if a.dotc(b).norm() > 1e-9 * energy {
                    return Err(contract("pilot sequences are not mutually orthogonal"));
                }
            }
        }
        Ok(())
    }

    pub fn pilot_len(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.len())
    }

    pub fn num_groups(&self) -> usize {
        self.sequences.len()
    }

    pub fn sequence(&self, g: usize) -> &CVec {
        &self.sequences[g]
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }
}

/// Pilot despreading `(1 / (P sigma_x2)) Y_p,l conj(x_p,g)`.
pub fn despread(yp_l: &CMat, book: &PilotBook, g: usize) -> CVec {
    let seq = book.sequence(g);
    let scale = 1.0 / (book.pilot_len() as f64 * book.sigma_x2());
    (yp_l * seq.conjugate()).scale(scale)
}

/// Despread observations of every (AP, pilot group) pair, indexed `[l][g]`.
pub fn despread_all(realization: &Realization) -> Vec<Vec<CVec>> {
    realization
        .yp
        .iter()
        .map(|yp| (0..realization.pilot_book.num_groups()).map(|g| despread(yp, &realization.pilot_book, g)).collect())
        .collect()
}

/// AP grid positions: a `ceil(sqrt L)`-column lattice spanning the area,
/// which is `{(side i / 3, side j / 3)}` for `L = 16`.
pub fn ap_grid(cfg: &ScenarioConfig) -> Vec<[f64; 3]> {
    let l = cfg.num_aps;
    let cols = (l as f64).sqrt().ceil() as usize;
    let rows = l.div_ceil(cols);
    let coord = |i: usize, count: usize| {
        if count > 1 {
            cfg.area_side * i as f64 / (count - 1) as f64
        } else {
            cfg.area_side / 2.0
        }
    };
    (0..l)
        .map(|idx| [coord(idx % cols, cols), coord(idx / cols, rows), cfg.ap_height])
        .collect()
}

/// Positions and large-scale channel covariances of one user-location setup.
#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    pub ap_positions: Vec<[f64; 3]>,
    pub ut_positions: Vec<[f64; 2]>,
    /// Channel covariance of every link, indexed `[l][k]`.
    pub xi: Vec<Vec<CMat>>,
}

impl Deployment {
    /// Users uniform over the square, APs on the fixed grid.
    pub fn draw<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Self> {
        let ut_positions = (0..cfg.num_users)
            .map(|_| [rng.random::<f64>() * cfg.area_side, rng.random::<f64>() * cfg.area_side])
            .collect();
        Self::from_positions(cfg, ut_positions)
    }

    /// Path-loss covariances `pathloss(d_lk) I_N` for given user positions.
    pub fn from_positions(cfg: &ScenarioConfig, ut_positions: Vec<[f64; 2]>) -> Result<Self> {
        let ap_positions = ap_grid(cfg);
        let xi = ap_positions
            .iter()
            .map(|ap| {
                ut_positions
                    .iter()
                    .map(|ut| {
                        let d = ((ap[0] - ut[0]).powi(2) + (ap[1] - ut[1]).powi(2) + ap[2].powi(2)).sqrt();
                        Ok(scaled_eye(cfg.antennas, cfg.pathloss_variance(d)?))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ap_positions, ut_positions, xi })
    }

    /// Replaces every link covariance (any Hermitian PSD matrices).
    pub fn with_covariances(mut self, xi: Vec<Vec<CMat>>) -> Self {
        self.xi = xi;
        self
    }
}

/// One drawn world: ground truth and the received signals of every AP.
#[derive(Clone, Debug)]
pub struct Realization {
    pub ap_positions: Vec<[f64; 3]>,
    pub ut_positions: Vec<[f64; 2]>,
    /// `[l][k]` channel covariances.
    pub xi: Vec<Vec<CMat>>,
    pub u_true: Vec<bool>,
    /// Per-AP `N x Kbar` channel matrices.
    pub h_true: Vec<CMat>,
    pub pilot_book: PilotBook,
    /// Pilot group of every user.
    pub pilot_of: Vec<usize>,
    /// Users of every pilot group.
    pub pilot_groups: Vec<Vec<usize>>,
    /// `Kbar x P` pilot matrix.
    pub xp: CMat,
    /// `Kbar x T` data matrix.
    pub x_true: CMat,
    /// Per-AP `N x P` received pilots.
    pub yp: Vec<CMat>,
    /// Per-AP `N x T` received data.
    pub y: Vec<CMat>,
    pub sigma_x2: f64,
    pub sigma_v2: f64,
}

/// Ground-truth draws of one frame, before the received signals are formed.
#[derive(Clone, Debug)]
pub struct FrameTruth {
    pub u_true: Vec<bool>,
    pub h_true: Vec<CMat>,
    pub pilot_of: Vec<usize>,
    pub x_true: CMat,
}

impl FrameTruth {
    /// Activity, pilot assignment, channels and symbols for one frame.
    pub fn draw<R: Rng + ?Sized>(cfg: &ScenarioConfig, deployment: &Deployment, rng: &mut R) -> Self {
        let k = cfg.num_users;
        let u_true = (0..k).map(|_| rng.random::<f64>() < cfg.activity_prob).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(rng);
        let mut pilot_of = vec![0; k];
        for (slot, &user) in perm.iter().enumerate() {
            pilot_of[user] = slot / cfg.users_per_pilot;
        }
        let h_true = deployment
            .xi
            .iter()
            .map(|xi_l| {
                let mut h = CMat::zeros(cfg.antennas, k);
                for (j, xi) in xi_l.iter().enumerate() {
                    h.set_column(j, &draw_channel(rng, xi));
                }
                h
            })
            .collect();
        let symbols = cfg.symbols();
        let x_true = CMat::from_fn(k, cfg.data_len, |_, _| symbols[rng.random_range(0..symbols.len())]);
        Self { u_true, h_true, pilot_of, x_true }
    }
}

/// Forms the received signals for given ground truth, drawing the noise
/// from `rng`.
pub fn synthesize<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    deployment: &Deployment,
    truth: FrameTruth,
    rng: &mut R,
) -> Result<Realization> {
    cfg.validate()?;
    let (k, n, p, t) = (cfg.num_users, cfg.antennas, cfg.pilot_len, cfg.data_len);
    let groups = cfg.num_pilot_groups();
    if truth.pilot_of.iter().any(|&g| g >= groups) || truth.u_true.len() != k {
        return Err(contract("frame truth inconsistent with configuration"));
    }
    let (sigma_x2, sigma_v2) = (cfg.sigma_x2(), cfg.sigma_v2());
    let pilot_book = PilotBook::dft(p, groups, sigma_x2)?;
    pilot_book.check_orthogonal()?;

    let mut pilot_groups = vec![Vec::new(); groups];
    for (user, &g) in truth.pilot_of.iter().enumerate() {
        pilot_groups[g].push(user);
    }
    let mut xp = CMat::zeros(k, p);
    for (user, &g) in truth.pilot_of.iter().enumerate() {
        xp.set_row(user, &pilot_book.sequence(g).transpose());
    }
    let u = CMat::from_diagonal(&CVec::from_iterator(
        k,
        truth.u_true.iter().map(|&a| c64(if a { 1.0 } else { 0.0 }, 0.0)),
    ));

    let mut yp = Vec::with_capacity(cfg.num_aps);
    let mut y = Vec::with_capacity(cfg.num_aps);
    for h in &truth.h_true {
        let hu = h * &u;
        let vp = CMat::from_fn(n, p, |_, _| complex_normal(rng, sigma_v2));
        let v = CMat::from_fn(n, t, |_, _| complex_normal(rng, sigma_v2));
        yp.push(&hu * &xp + vp);
        y.push(&hu * &truth.x_true + v);
    }

    Ok(Realization {
        ap_positions: deployment.ap_positions.clone(),
        ut_positions: deployment.ut_positions.clone(),
        xi: deployment.xi.clone(),
        u_true: truth.u_true,
        h_true: truth.h_true,
        pilot_book,
        pilot_of: truth.pilot_of,
        pilot_groups,
        xp,
        x_true: truth.x_true,
        yp,
        y,
        sigma_x2,
        sigma_v2,
    })
}

/// One frame for a fixed deployment, fully determined by `seed`.
pub fn draw_realization(cfg: &ScenarioConfig, deployment: &Deployment, seed: u64) -> Result<Realization> {
    let mut rng = rng_from_seed(seed);
    let truth = FrameTruth::draw(cfg, deployment, &mut rng);
    synthesize(cfg, deployment, truth, &mut rng)
}

/// Deployment and frame drawn from independent streams of `seed`.
pub fn generate_realization(cfg: &ScenarioConfig, seed: u64) -> Result<Realization> {
    cfg.validate()?;
    let deployment = Deployment::draw(cfg, &mut rng_from_seed(derive_seed(seed, &[0])))?;
    draw_realization(cfg, &deployment, derive_seed(seed, &[1]))
}

#[derive(Serialize)]
struct ArrayRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn real_array(shape: Vec<usize>, data: Vec<f64>) -> ArrayRecord {
    ArrayRecord { shape, data }
}

/// Complex arrays gain a trailing dimension of 2 holding `[re, im]`.
fn complex_mats(mats: &[CMat]) -> ArrayRecord {
    let (r, c) = mats.first().map_or((0, 0), |m| m.shape());
    let mut data = Vec::with_capacity(mats.len() * r * c * 2);
    for m in mats {
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)].re);
                data.push(m[(i, j)].im);
            }
        }
    }
    real_array(vec![mats.len(), r, c, 2], data)
}

#[derive(Serialize)]
struct RealizationDump {
    layout: &'static str,
    arrays: std::collections::BTreeMap<&'static str, ArrayRecord>,
}

impl Realization {
    pub fn num_aps(&self) -> usize {
        self.y.len()
    }

    pub fn num_users(&self) -> usize {
        self.u_true.len()
    }

    pub fn antennas(&self) -> usize {
        self.y.first().map_or(0, |y| y.nrows())
    }

    pub fn data_len(&self) -> usize {
        self.x_true.ncols()
    }

    pub fn pilot_len(&self) -> usize {
        self.xp.ncols()
    }

    pub fn despread_noise_var(&self) -> f64 {
        self.sigma_v2 / (self.pilot_len() as f64 * self.sigma_x2)
    }

    pub fn channel(&self, l: usize, k: usize) -> CVec {
        self.h_true[l].column(k).into_owned()
    }

    /// Writes a JSON document mapping array names to `{shape, data}` with
    /// row-major `data`; complex arrays carry a trailing `[re, im]` axis.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut arrays = std::collections::BTreeMap::new();
        let (l, k) = (self.num_aps(), self.num_users());
        arrays.insert("ap_positions", real_array(vec![l, 3], self.ap_positions.iter().flatten().copied().collect()));
        arrays.insert("ut_positions", real_array(vec![k, 2], self.ut_positions.iter().flatten().copied().collect()));
        let xi: Vec<CMat> = self.xi.iter().flatten().cloned().collect();
        let mut xi_rec = complex_mats(&xi);
        xi_rec.shape = [vec![l, k], xi_rec.shape[1..].to_vec()].concat();
        arrays.insert("xi", xi_rec);
        arrays.insert("u_true", real_array(vec![k], self.u_true.iter().map(|&a| a as u8 as f64).collect()));
        arrays.insert("pilot_of", real_array(vec![k], self.pilot_of.iter().map(|&g| g as f64).collect()));
        arrays.insert("h_true", complex_mats(&self.h_true));
        let mut xp = complex_mats(std::slice::from_ref(&self.xp));
        xp.shape.remove(0);
        arrays.insert("xp", xp);
        let mut x = complex_mats(std::slice::from_ref(&self.x_true));
        x.shape.remove(0);
        arrays.insert("x_true", x);
        arrays.insert("yp", complex_mats(&self.yp));
        arrays.insert("y", complex_mats(&self.y));
        arrays.insert("sigma", real_array(vec![2], vec![self.sigma_x2, self.sigma_v2]));
        let doc = RealizationDump {
            layout: "row-major; complex arrays end in an axis of length 2 holding [re, im]; little-endian f64 values",
            arrays,
        };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &doc)?;
        Ok(())
    }
}
