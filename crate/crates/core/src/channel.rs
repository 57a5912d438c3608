//! Large-scale path loss, Rician small-scale fading, radar steering vectors and
//! target responses, and the assembly of one random channel realization.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{db_to_linear, dbm_to_watts, CMat, CVec, Error, Result, C64};

/// Rician factors at or above this value are treated as pure line of sight.
pub const PURE_LOS_BETA: f64 = 1e12;

/// Path-loss exponents for the nine links of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossExponents {
    pub bs_ue: f64,
    pub bs_ris1: f64,
    pub bs_ris2: f64,
    pub ris1_ue: f64,
    pub ris2_ue: f64,
    pub bs_radar: f64,
    pub ris1_radar: f64,
    pub ris2_radar: f64,
    pub ris1_ris2: f64,
}

impl Default for PathLossExponents {
    fn default() -> Self {
        Self {
            bs_ue: 3.75,
            bs_ris1: 2.5,
            ris2_ue: 2.5,
            bs_ris2: 3.0,
            ris1_ue: 3.0,
            bs_radar: 2.2,
            ris1_radar: 2.2,
            ris2_radar: 2.2,
            ris1_ris2: 2.2,
        }
    }
}

/// Geometry, array sizes, noise levels, budgets and radar requirement of one scene.
///
/// Positions are planar coordinates in meters, angles are radians, powers watts,
/// path losses dB. `eta` is the linear radar SINR requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub bs: [f64; 2],
    pub ue: [f64; 2],
    pub ris1: [f64; 2],
    pub ris2: [f64; 2],
    pub radar: [f64; 2],
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub theta_k: Vec<f64>,
    pub alpha_k: Vec<f64>,
    pub beta: f64,
    pub pl0_db: f64,
    pub d0: f64,
    pub exponents: PathLossExponents,
    pub spacing_ratio: f64,
    pub sigma2: f64,
    pub sigma0_2: f64,
    pub sigma1_2: f64,
    pub sigma2_2: f64,
    pub eta: f64,
    pub p_r: f64,
    pub p_t: f64,
    pub p_1: f64,
    pub p_2: f64,
    pub seed: u64,
}

/// Seven look directions whose half-wavelength array phases `pi * sin(theta)` are
/// spread evenly over the unit circle, so no two directions share a steering vector.
pub fn default_directions() -> Vec<f64> {
    (-3..=3).map(|k| (2.0 * k as f64 / 7.0).asin()).collect()
}

impl Default for SceneConfig {
    fn default() -> Self {
        let noise = dbm_to_watts(-80.0);
        let theta_k = default_directions();
        let alpha_k = vec![0.1; theta_k.len()];
        Self {
            bs: [0.0, 0.0],
            ue: [100.0, 0.0],
            ris1: [0.0, 5.0],
            ris2: [100.0, 5.0],
            radar: [50.0, 25.0],
            m: 12,
            n1: 40,
            n2: 40,
            theta_k,
            alpha_k,
            beta: 3.0,
            pl0_db: -30.0,
            d0: 1.0,
            exponents: PathLossExponents::default(),
            spacing_ratio: 0.5,
            sigma2: noise,
            sigma0_2: noise,
            sigma1_2: noise,
            sigma2_2: noise,
            eta: db_to_linear(20.0),
            p_r: 10.0,
            p_t: 0.4,
            p_1: 0.4,
            p_2: 0.4,
            seed: 1,
        }
    }
}

impl SceneConfig {
    /// Number of detection directions.
    pub fn k(&self) -> usize {
        self.theta_k.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.m == 0 || self.n1 == 0 || self.n2 == 0 || self.k() == 0 {
            return bad("M, N1, N2 and K must all be at least 1");
        }
        if self.alpha_k.len() != self.theta_k.len() {
            return bad("alpha_k and theta_k must have the same length");
        }
        if self.theta_k.iter().any(|t| !(-PI / 2.0..=PI / 2.0).contains(t)) {
            return bad("theta_k values must lie in [-pi/2, pi/2]");
        }
        let positive = [
            ("p_r", self.p_r),
            ("sigma2", self.sigma2),
            ("sigma0_2", self.sigma0_2),
            ("eta", self.eta),
            ("spacing_ratio", self.spacing_ratio),
            ("d0", self.d0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        // zero budgets and noise describe undeployed or passive surfaces
        let nonnegative = [
            ("p_t", self.p_t, false),
            ("p_1", self.p_1, true),
            ("p_2", self.p_2, true),
            ("sigma1_2", self.sigma1_2, false),
            ("sigma2_2", self.sigma2_2, false),
        ];
        for (name, v, inf_ok) in nonnegative {
            if !(v >= 0.0) || (!inf_ok && v.is_infinite()) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be nonnegative");
        }
        Ok(())
    }
}

/// Large-scale path loss in dB at distance `d`: `pl0_db - 10 alpha log10(d / d0)`.
pub fn pathloss_db(d: f64, alpha: f64, pl0_db: f64, d0: f64) -> Result<f64> {
    if !(d > 0.0) || !(d0 > 0.0) {
        return Err(Error::domain(format!(
            "path loss needs positive distances, got d={d}, d0={d0}"
        )));
    }
    Ok(pl0_db - 10.0 * alpha * (d / d0).log10())
}

/// Uniform linear array response; entry `m` is `exp(j 2 pi ratio m sin(theta))`.
pub fn array_response(theta: f64, n: usize, spacing_ratio: f64) -> CVec {
    let phase = 2.0 * PI * spacing_ratio * theta.sin();
    CVec::from_iterator(n, (0..n).map(|m| C64::from_polar(1.0, phase * m as f64)))
}

/// Rank-one target response `alpha a(theta) a(theta)^H`, kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetResponse {
    pub alpha: f64,
    pub steering: CVec,
}

impl TargetResponse {
    pub fn new(theta: f64, alpha: f64, m: usize, spacing_ratio: f64) -> Self {
        Self {
            alpha,
            steering: array_response(theta, m, spacing_ratio),
        }
    }

    /// Dense `M x M` matrix.
    pub fn matrix(&self) -> CMat {
        &self.steering * self.steering.adjoint() * C64::from(self.alpha)
    }

    /// `A x`. The matrix is Hermitian, so this is also `A^H x`.
    pub fn apply(&self, x: &CVec) -> CVec {
        &self.steering * (self.steering.dotc(x) * self.alpha)
    }

    /// `d^H A x` without forming `A`.
    pub fn bilinear(&self, d: &CVec, x: &CVec) -> C64 {
        d.dotc(&self.steering) * self.steering.dotc(x) * self.alpha
    }
}

/// Dense target response matrix for direction `theta`.
pub fn target_response(theta: f64, alpha_k: f64, m: usize, spacing_ratio: f64) -> CMat {
    TargetResponse::new(theta, alpha_k, m, spacing_ratio).matrix()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Rician fading matrix with unit average power per entry.
///
/// `sqrt(beta/(beta+1)) a_r(aoa) a_t(aod)^H + sqrt(1/(beta+1)) G`, with `G` i.i.d.
/// standard circular complex Gaussian.
pub fn rician_channel<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    beta: f64,
    aoa: f64,
    aod: f64,
    spacing_ratio: f64,
    rng: &mut R,
) -> CMat {
    let los = || array_response(aoa, rows, spacing_ratio) * array_response(aod, cols, spacing_ratio).adjoint();
    if beta >= PURE_LOS_BETA {
        return los();
    }
    let nlos = CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng));
    if beta == 0.0 {
        return nlos;
    }
    let w_los = (beta / (beta + 1.0)).sqrt();
    let w_nlos = (1.0 / (beta + 1.0)).sqrt();
    los() * C64::from(w_los) + nlos * C64::from(w_nlos)
}

/// All channel links of one realization.
///
/// `h_1u` and `h_2u` are stored as columns; the RIS-to-user rows are their
/// conjugate transposes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_bu: C64,
    pub h_b1: CVec,
    pub h_b2: CVec,
    /// RIS 1 to RIS 2, `N2 x N1`.
    pub h_12: CMat,
    pub h_1u: CVec,
    pub h_2u: CVec,
    pub h_br: CVec,
    /// RIS 1 to radar, `M x N1`.
    pub h_1r: CMat,
    /// RIS 2 to radar, `M x N2`.
    pub h_2r: CMat,
    pub targets: Vec<TargetResponse>,
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.h_br.len()
    }

    pub fn n1(&self) -> usize {
        self.h_b1.len()
    }

    pub fn n2(&self) -> usize {
        self.h_b2.len()
    }

    pub fn k(&self) -> usize {
        self.targets.len()
    }

    /// Dense target response matrix `A_k`.
    pub fn a_k(&self, k: usize) -> CMat {
        self.targets[k].matrix()
    }

    /// `sum_{m != k} A_m x`.
    pub fn cross_apply(&self, k: usize, x: &CVec) -> CVec {
        let mut acc = CVec::zeros(x.len());
        for (m, t) in self.targets.iter().enumerate() {
            if m != k {
                acc += t.apply(x);
            }
        }
        acc
    }

    /// True when any link touching RIS 1 carries signal.
    pub fn ris1_present(&self) -> bool {
        !(is_zero(self.h_b1.iter())
            && is_zero(self.h_1u.iter())
            && is_zero(self.h_1r.iter())
            && is_zero(self.h_12.iter()))
    }

    /// True when any link touching RIS 2 carries signal.
    pub fn ris2_present(&self) -> bool {
        !(is_zero(self.h_b2.iter())
            && is_zero(self.h_2u.iter())
            && is_zero(self.h_2r.iter())
            && is_zero(self.h_12.iter()))
    }
}

fn is_zero<'a>(mut it: impl Iterator<Item = &'a C64>) -> bool {
    it.all(|z| z.re == 0.0 && z.im == 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    BsUe,
    BsRis1,
    BsRis2,
    Ris1Ris2,
    Ris1Ue,
    Ris2Ue,
    BsRadar,
    Ris1Radar,
    Ris2Radar,
}

impl Link {
    /// Sub-stream of the seeded generator reserved for this link.
    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Draws one channel realization for `cfg` from `seed`.
///
/// Each link reads its own ChaCha8 stream, so the draws of one link do not depend
/// on the sizes of the others.
pub fn generate_channels(cfg: &SceneConfig, seed: u64) -> Result<ChannelSet> {
    let ex = &cfg.exponents;
    let link = |which: Link, from: [f64; 2], to: [f64; 2], alpha: f64, rows: usize, cols: usize| -> Result<CMat> {
        let d = distance(from, to);
        if !(d > 0.0) {
            return Err(Error::domain(format!(
                "zero distance on link {which:?} between {from:?} and {to:?}"
            )));
        }
        let amplitude = db_to_linear(pathloss_db(d, alpha, cfg.pl0_db, cfg.d0)?).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(which.stream());
        let aoa = rng.random_range(0.0..2.0 * PI);
        let aod = rng.random_range(0.0..2.0 * PI);
        let h = rician_channel(rows, cols, cfg.beta, aoa, aod, cfg.spacing_ratio, &mut rng);
        Ok(h * C64::from(amplitude))
    };
    let column = |h: CMat| -> CVec { h.column(0).into_owned() };
    // UE-side links are drawn as 1 x N rows and stored conjugated.
    let row_as_column = |h: CMat| -> CVec { h.row(0).adjoint() };

    let h_bu = link(Link::BsUe, cfg.bs, cfg.ue, ex.bs_ue, 1, 1)?[(0, 0)];
    let h_b1 = column(link(Link::BsRis1, cfg.bs, cfg.ris1, ex.bs_ris1, cfg.n1, 1)?);
    let h_b2 = column(link(Link::BsRis2, cfg.bs, cfg.ris2, ex.bs_ris2, cfg.n2, 1)?);
    let h_12 = link(Link::Ris1Ris2, cfg.ris1, cfg.ris2, ex.ris1_ris2, cfg.n2, cfg.n1)?;
    let h_1u = row_as_column(link(Link::Ris1Ue, cfg.ris1, cfg.ue, ex.ris1_ue, 1, cfg.n1)?);
    let h_2u = row_as_column(link(Link::Ris2Ue, cfg.ris2, cfg.ue, ex.ris2_ue, 1, cfg.n2)?);
    let h_br = column(link(Link::BsRadar, cfg.bs, cfg.radar, ex.bs_radar, cfg.m, 1)?);
    let h_1r = link(Link::Ris1Radar, cfg.ris1, cfg.radar, ex.ris1_radar, cfg.m, cfg.n1)?;
    let h_2r = link(Link::Ris2Radar, cfg.ris2, cfg.radar, ex.ris2_radar, cfg.m, cfg.n2)?;
    let targets = cfg
        .theta_k
        .iter()
        .zip(&cfg.alpha_k)
        .map(|(&theta, &alpha)| TargetResponse::new(theta, alpha, cfg.m, cfg.spacing_ratio))
        .collect();

    Ok(ChannelSet {
        h_bu,
        h_b1,
        h_b2,
        h_12,
        h_1u,
        h_2u,
        h_br,
        h_1r,
        h_2r,
        targets,
    })
}
