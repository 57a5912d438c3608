//! System metrics: equivalent radar channels, radar SINR, communication SNR and
//! rate, active-RIS powers and the feasibility report.

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::channel::{ChannelSet, SceneConfig};
use crate::{CMat, CVec, Error, Result, C64};

/// Relative slack allowed on every constraint of the design problem.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

/// Transmit beamformers `w`, receive filters `d` and the two reflection vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSolution {
    pub w: Vec<CVec>,
    pub d: Vec<CVec>,
    pub phi1: CVec,
    pub phi2: CVec,
}

impl BeamformerSolution {
    pub fn zeros(m: usize, n1: usize, n2: usize, k: usize) -> Self {
        Self {
            w: vec![CVec::zeros(m); k],
            d: vec![CVec::zeros(m); k],
            phi1: CVec::zeros(n1),
            phi2: CVec::zeros(n2),
        }
    }

    pub fn radar_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum()
    }
}

/// `B = (H_2r Θ2 H_12 + H_1r) Θ1`, `C = H_2r Θ2` and `q = h_br + B h_b1 + C h_b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equivalent {
    pub b: CMat,
    pub c: CMat,
    pub q: CVec,
}

/// `X diag(v)`.
pub(crate) fn scale_columns(x: &CMat, v: &CVec) -> CMat {
    let mut out = x.clone();
    for (j, s) in v.iter().enumerate() {
        out.column_mut(j).scale_mut_complex(*s);
    }
    out
}

/// `diag(v) X`.
pub(crate) fn scale_rows(x: &CMat, v: &CVec) -> CMat {
    let mut out = x.clone();
    for (i, s) in v.iter().enumerate() {
        out.row_mut(i).scale_mut_complex(*s);
    }
    out
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: C64);
}

impl<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorageMut<C64, R, C>> ScaleComplex
    for nalgebra::Matrix<C64, R, C, S>
{
    fn scale_mut_complex(&mut self, s: C64) {
        for z in self.iter_mut() {
            *z *= s;
        }
    }
}

pub fn equivalent_matrices(ch: &ChannelSet, phi1: &CVec, phi2: &CVec) -> Equivalent {
    let c = scale_columns(&ch.h_2r, phi2);
    let b = scale_columns(&(&c * &ch.h_12 + &ch.h_1r), phi1);
    let q = &ch.h_br + &b * &ch.h_b1 + &c * &ch.h_b2;
    Equivalent { b, c, q }
}

/// Numerator and interference-plus-noise of the radar SINR in direction `k`.
pub(crate) fn radar_sinr_parts(
    ch: &ChannelSet,
    eq: &Equivalent,
    w: &CVec,
    d: &CVec,
    cfg: &SceneConfig,
    k: usize,
) -> (f64, f64) {
    let signal = ch.targets[k].bilinear(d, w).norm_sqr();
    let interference: f64 = ch
        .targets
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != k)
        .map(|(_, t)| t.bilinear(d, w).norm_sqr())
        .sum();
    let dq = d.dotc(&eq.q).norm_sqr();
    let db = (eq.b.adjoint() * d).norm_squared();
    let dc = (eq.c.adjoint() * d).norm_squared();
    let den = interference + cfg.p_t * dq + cfg.sigma1_2 * db + cfg.sigma2_2 * dc + cfg.sigma2 * d.norm_squared();
    (signal, den)
}

/// Radar SINR in direction `k`. The cross-direction interference uses `w_k`.
pub fn radar_sinr(ch: &ChannelSet, sol: &BeamformerSolution, cfg: &SceneConfig, k: usize) -> Result<f64> {
    let eq = equivalent_matrices(ch, &sol.phi1, &sol.phi2);
    radar_sinr_eq(ch, &eq, sol, cfg, k)
}

pub(crate) fn radar_sinr_eq(
    ch: &ChannelSet,
    eq: &Equivalent,
    sol: &BeamformerSolution,
    cfg: &SceneConfig,
    k: usize,
) -> Result<f64> {
    if k >= ch.k() {
        return Err(Error::domain(format!("direction index {k} out of range 0..{}", ch.k())));
    }
    let d = &sol.d[k];
    if d.norm_squared() == 0.0 {
        return Err(Error::domain(format!("receive filter d_{k} is zero")));
    }
    let (num, den) = radar_sinr_parts(ch, eq, &sol.w[k], d, cfg, k);
    Ok(num / den)
}

/// Row vectors of the user link: `h_2u^H Θ2` and `h_2u^H Θ2 H_12 Θ1 + h_1u^H Θ1`,
/// returned as plain entry vectors.
pub(crate) fn user_rows(ch: &ChannelSet, phi1: &CVec, phi2: &CVec) -> (CVec, CVec) {
    let t2 = ch.h_2u.map(|z| z.conj()).component_mul(phi2);
    let through = ch.h_12.transpose() * &t2 + ch.h_1u.map(|z| z.conj());
    (through.component_mul(phi1), t2)
}

/// Composite user gain `G` and noise-plus-amplified-noise denominator `D`.
pub(crate) fn comm_terms(ch: &ChannelSet, phi1: &CVec, phi2: &CVec, cfg: &SceneConfig) -> (C64, f64) {
    let (row1, row2) = user_rows(ch, phi1, phi2);
    let gain = ch.h_bu + row1.dot(&ch.h_b1) + row2.dot(&ch.h_b2);
    let den = cfg.sigma1_2 * row1.norm_squared() + cfg.sigma2_2 * row2.norm_squared() + cfg.sigma0_2;
    (gain, den)
}

pub fn comm_snr(ch: &ChannelSet, sol: &BeamformerSolution, cfg: &SceneConfig) -> f64 {
    comm_snr_phi(ch, &sol.phi1, &sol.phi2, cfg)
}

pub(crate) fn comm_snr_phi(ch: &ChannelSet, phi1: &CVec, phi2: &CVec, cfg: &SceneConfig) -> f64 {
    let (g, den) = comm_terms(ch, phi1, phi2, cfg);
    cfg.p_t * g.norm_sqr() / den
}

pub fn achievable_rate(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::domain(format!("SNR must be nonnegative, got {snr}")));
    }
    Ok((1.0 + snr).log2())
}

/// Which active surface to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ris {
    One,
    Two,
}

/// Transmit power of an active surface: amplified incident signal plus amplified noise.
pub fn active_ris_power(ch: &ChannelSet, phi1: &CVec, phi2: &CVec, cfg: &SceneConfig, which: Ris) -> f64 {
    match which {
        Ris::One => phi1
            .iter()
            .zip(ch.h_b1.iter())
            .map(|(p, h)| p.norm_sqr() * (h.norm_sqr() + cfg.sigma1_2))
            .sum(),
        Ris::Two => {
            let incident = &ch.h_12 * phi1.component_mul(&ch.h_b1);
            let phi1_sq: Vec<f64> = phi1.iter().map(|p| p.norm_sqr()).collect();
            (0..phi2.len())
                .map(|n| {
                    let row_noise: f64 = ch.h_12.row(n).iter().zip(&phi1_sq).map(|(h, p)| h.norm_sqr() * p).sum();
                    phi2[n].norm_sqr()
                        * (incident[n].norm_sqr() + ch.h_b2[n].norm_sqr() + cfg.sigma1_2 * row_noise + cfg.sigma2_2)
                })
                .sum()
        }
    }
}

/// Evaluated metrics of a candidate design.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rate: f64,
    pub snr_c: f64,
    pub sinr_r: Vec<f64>,
    pub p_radar: f64,
    pub p_ris1: f64,
    pub p_ris2: f64,
    pub feasible: bool,
    pub worst_violation: f64,
}

impl MetricsReport {
    pub fn csv_header(k: usize) -> String {
        let mut cols = vec!["rate".to_string(), "snr_c".to_string()];
        cols.extend((1..=k).map(|i| format!("sinr_r_{i}")));
        cols.extend(["p_radar", "p_ris1", "p_ris2", "feasible", "worst_violation"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![fmt_g(self.rate), fmt_g(self.snr_c)];
        cols.extend(self.sinr_r.iter().map(|v| fmt_g(*v)));
        cols.extend([fmt_g(self.p_radar), fmt_g(self.p_ris1), fmt_g(self.p_ris2)]);
        cols.push(self.feasible.to_string());
        cols.push(fmt_g(self.worst_violation));
        cols.join(",")
    }

    pub fn min_sinr(&self) -> f64 {
        self.sinr_r.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(7 + self.sinr_r.len()))?;
        map.serialize_entry("rate", &self.rate)?;
        map.serialize_entry("snr_c", &self.snr_c)?;
        for (i, v) in self.sinr_r.iter().enumerate() {
            map.serialize_entry(&format!("sinr_r_{}", i + 1), v)?;
        }
        map.serialize_entry("p_radar", &self.p_radar)?;
        map.serialize_entry("p_ris1", &self.p_ris1)?;
        map.serialize_entry("p_ris2", &self.p_ris2)?;
        map.serialize_entry("feasible", &self.feasible)?;
        map.serialize_entry("worst_violation", &self.worst_violation)?;
        map.end()
    }
}

/// Formats a float with 12 significant digits, `%g` style.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        // rounding can carry into a new leading digit; reformat in that case
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 12 {
            return format!("{v:.11e}");
        }
        s
    } else {
        let s = format!("{v:.11e}");
        let (mant, e) = s.split_once('e').unwrap();
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

/// Evaluates every constraint of the design problem.
///
/// Budgets that are infinite are not checked. A zero receive filter counts as
/// zero SINR.
pub fn check_feasibility(ch: &ChannelSet, sol: &BeamformerSolution, cfg: &SceneConfig) -> MetricsReport {
    let eq = equivalent_matrices(ch, &sol.phi1, &sol.phi2);
    let sinr_r: Vec<f64> = (0..ch.k())
        .map(|k| radar_sinr_eq(ch, &eq, sol, cfg, k).unwrap_or(0.0))
        .collect();
    let snr_c = comm_snr(ch, sol, cfg);
    let rate = achievable_rate(snr_c).unwrap_or(0.0);
    let p_radar = sol.radar_power();
    let p_ris1 = active_ris_power(ch, &sol.phi1, &sol.phi2, cfg, Ris::One);
    let p_ris2 = active_ris_power(ch, &sol.phi1, &sol.phi2, cfg, Ris::Two);

    let mut excess: Vec<f64> = sinr_r.iter().map(|s| (cfg.eta - s) / cfg.eta).collect();
    for (used, budget) in [(p_radar, cfg.p_r), (p_ris1, cfg.p_1), (p_ris2, cfg.p_2)] {
        if budget > 0.0 && budget.is_finite() {
            excess.push((used - budget) / budget);
        } else if budget == 0.0 {
            excess.push(used);
        }
    }
    let worst = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let feasible = worst <= FEASIBILITY_SLACK && excess.iter().all(|e| !e.is_nan());
    MetricsReport {
        rate,
        snr_c,
        sinr_r,
        p_radar,
        p_ris1,
        p_ris2,
        feasible,
        worst_violation: if feasible { 0.0 } else { worst.max(0.0) },
    }
}
