//! Iterate of the penalty dual decomposition: primal blocks, auxiliaries,
//! duals and penalty, with the objective pieces evaluated on it.

use crate::channel::{ChannelSet, SceneConfig};
use crate::model::{self, BeamformerSolution, Equivalent};
use crate::{CVec, Error, Result, C64};

/// Which design problem the iterate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Amplifying surfaces with thermal noise and power budgets.
    Active,
    /// Unit-modulus surfaces; the amplified-noise auxiliaries `e`, `t` do not exist.
    Passive,
}

/// Channels, scene parameters and the set of surfaces being optimized.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub ch: &'a ChannelSet,
    pub cfg: &'a SceneConfig,
    pub variant: Variant,
    pub ris1: bool,
    pub ris2: bool,
}

impl<'a> Problem<'a> {
    pub fn new(ch: &'a ChannelSet, cfg: &'a SceneConfig, variant: Variant) -> Self {
        Self {
            ch,
            cfg,
            variant,
            ris1: ch.ris1_present(),
            ris2: ch.ris2_present(),
        }
    }

    pub fn has_noise_aux(&self) -> bool {
        self.variant == Variant::Active
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PddState {
    pub sol: BeamformerSolution,
    /// Fractional-programming auxiliary.
    pub x: C64,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub y: Vec<C64>,
    /// Entries of `d_k^H B`.
    pub e: Vec<CVec>,
    /// Entries of `d_k^H C`.
    pub t: Vec<CVec>,
    pub lam1: Vec<C64>,
    pub lam2: Vec<C64>,
    pub lam3: Vec<C64>,
    pub lam_e: Vec<CVec>,
    pub lam_t: Vec<CVec>,
    pub rho: f64,
    /// Linearization points of the convex-concave step.
    pub u_anchor: Vec<C64>,
}

/// The five equality residuals of direction `k`, without the dual shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r1: C64,
    pub r2: C64,
    pub r3: C64,
    pub re: CVec,
    pub rt: CVec,
}

impl Residual {
    pub fn max_abs(&self) -> f64 {
        self.r1
            .norm()
            .max(self.r2.norm())
            .max(self.r3.norm())
            .max(self.re.norm())
            .max(self.rt.norm())
    }
}

/// `d^H A_k w`, `d^H q`, `d^H Abar_k w`, `(d^H B)^T`, `(d^H C)^T` for one direction.
pub(crate) struct Couplings {
    pub s1: C64,
    pub s2: C64,
    pub s3: C64,
    pub se: CVec,
    pub st: CVec,
}

pub(crate) fn couplings(ch: &ChannelSet, eq: &Equivalent, w: &CVec, d: &CVec, k: usize) -> Couplings {
    let mut s3 = C64::from(0.0);
    for (m, t) in ch.targets.iter().enumerate() {
        if m != k {
            s3 += t.bilinear(d, w);
        }
    }
    let dc = d.map(|z| z.conj());
    Couplings {
        s1: ch.targets[k].bilinear(d, w),
        s2: d.dotc(&eq.q),
        s3,
        se: eq.b.transpose() * &dc,
        st: eq.c.transpose() * &dc,
    }
}

impl PddState {
    /// Auxiliaries set to their defining expressions, zero duals, `x` at its optimum.
    pub fn from_solution(prob: &Problem, sol: BeamformerSolution, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::domain(format!("penalty must be positive, got {rho}")));
        }
        let k = prob.ch.k();
        let eq = model::equivalent_matrices(prob.ch, &sol.phi1, &sol.phi2);
        let mut st = Self {
            x: fp_optimal_x(prob.ch, &sol.phi1, &sol.phi2, prob.cfg),
            u: vec![C64::from(0.0); k],
            v: vec![C64::from(0.0); k],
            y: vec![C64::from(0.0); k],
            e: vec![CVec::zeros(prob.ch.n1()); k],
            t: vec![CVec::zeros(prob.ch.n2()); k],
            lam1: vec![C64::from(0.0); k],
            lam2: vec![C64::from(0.0); k],
            lam3: vec![C64::from(0.0); k],
            lam_e: vec![CVec::zeros(prob.ch.n1()); k],
            lam_t: vec![CVec::zeros(prob.ch.n2()); k],
            rho,
            u_anchor: vec![C64::from(0.0); k],
            sol,
        };
        for i in 0..k {
            let c = couplings(prob.ch, &eq, &st.sol.w[i], &st.sol.d[i], i);
            st.u[i] = c.s1;
            st.v[i] = c.s2;
            st.y[i] = c.s3;
            if prob.has_noise_aux() {
                st.e[i] = c.se;
                st.t[i] = c.st;
            }
        }
        st.u_anchor = st.u.clone();
        Ok(st)
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }

    pub fn equivalent(&self, ch: &ChannelSet) -> Equivalent {
        model::equivalent_matrices(ch, &self.sol.phi1, &self.sol.phi2)
    }

    /// Residuals of all directions. The `e`/`t` entries are zero-length for the passive variant.
    pub fn residuals(&self, prob: &Problem) -> Vec<Residual> {
        let eq = self.equivalent(prob.ch);
        self.residuals_with(prob, &eq)
    }

    pub(crate) fn residuals_with(&self, prob: &Problem, eq: &Equivalent) -> Vec<Residual> {
        (0..self.k())
            .map(|k| {
                let c = couplings(prob.ch, eq, &self.sol.w[k], &self.sol.d[k], k);
                let (re, rt) = if prob.has_noise_aux() {
                    (&self.e[k] - c.se, &self.t[k] - c.st)
                } else {
                    (CVec::zeros(0), CVec::zeros(0))
                };
                Residual {
                    r1: self.u[k] - c.s1,
                    r2: self.v[k] - c.s2,
                    r3: self.y[k] - c.s3,
                    re,
                    rt,
                }
            })
            .collect()
    }

    /// Left side minus right side of the convexified radar constraint of direction `k`.
    /// Nonpositive means satisfied.
    pub fn ccp_excess(&self, prob: &Problem, k: usize) -> f64 {
        ccp_excess_parts(
            prob,
            self.u[k],
            self.u_anchor[k],
            self.v[k],
            self.y[k],
            self.noise_aux_energy(prob, k),
            self.sol.d[k].norm_squared(),
        )
    }

    /// `sigma1^2 ||e_k||^2 + sigma2^2 ||t_k||^2`.
    pub(crate) fn noise_aux_energy(&self, prob: &Problem, k: usize) -> f64 {
        if prob.has_noise_aux() {
            prob.cfg.sigma1_2 * self.e[k].norm_squared() + prob.cfg.sigma2_2 * self.t[k].norm_squared()
        } else {
            0.0
        }
    }
}

pub(crate) fn ccp_excess_parts(prob: &Problem, u: C64, anchor: C64, v: C64, y: C64, noise_aux: f64, d_sq: f64) -> f64 {
    let cfg = prob.cfg;
    cfg.eta * (y.norm_sqr() + cfg.p_t * v.norm_sqr() + noise_aux + cfg.sigma2 * d_sq) - ccp_linearize(u, anchor)
}

/// Affine minorant `2 Re(anchor^* u) - |anchor|^2` of `|u|^2`.
pub fn ccp_linearize(u: C64, anchor: C64) -> f64 {
    2.0 * (anchor.conj() * u).re - anchor.norm_sqr()
}

/// Quadratic-transform surrogate `|x|^2 D - 2 Re(x^* sqrt(P_t) G)` of the negated SNR.
pub fn fp_surrogate(ch: &ChannelSet, phi1: &CVec, phi2: &CVec, x: C64, cfg: &SceneConfig) -> f64 {
    let (g, den) = model::comm_terms(ch, phi1, phi2, cfg);
    x.norm_sqr() * den - 2.0 * (x.conj() * g * cfg.p_t.sqrt()).re
}

/// Minimizer of [`fp_surrogate`] over `x`, `sqrt(P_t) G / D`.
pub fn fp_optimal_x(ch: &ChannelSet, phi1: &CVec, phi2: &CVec, cfg: &SceneConfig) -> C64 {
    let (g, den) = model::comm_terms(ch, phi1, phi2, cfg);
    g * cfg.p_t.sqrt() / den
}

/// Augmented Lagrangian: surrogate plus `1/(2 rho)` times the dual-shifted squared residuals.
pub fn al_objective(state: &PddState, prob: &Problem) -> Result<f64> {
    if !(state.rho > 0.0) {
        return Err(Error::domain(format!("penalty must be positive, got {}", state.rho)));
    }
    let eq = state.equivalent(prob.ch);
    Ok(al_objective_with(state, prob, &eq))
}

pub(crate) fn al_objective_with(state: &PddState, prob: &Problem, eq: &Equivalent) -> f64 {
    let f = fp_surrogate(prob.ch, &state.sol.phi1, &state.sol.phi2, state.x, prob.cfg);
    f + penalty_with(state, prob, eq)
}

pub(crate) fn penalty_with(state: &PddState, prob: &Problem, eq: &Equivalent) -> f64 {
    let rho = state.rho;
    let rho_c = C64::from(rho);
    let mut acc = 0.0;
    for (k, r) in state.residuals_with(prob, eq).iter().enumerate() {
        acc += (r.r1 + rho_c * state.lam1[k]).norm_sqr();
        acc += (r.r2 + rho_c * state.lam2[k]).norm_sqr();
        acc += (r.r3 + rho_c * state.lam3[k]).norm_sqr();
        if prob.has_noise_aux() {
            acc += (&r.re + &state.lam_e[k] * rho_c).norm_squared();
            acc += (&r.rt + &state.lam_t[k] * rho_c).norm_squared();
        }
    }
    acc / (2.0 * rho)
}

/// Largest modulus or norm among all equality residuals.
pub fn constraint_violation(state: &PddState, prob: &Problem) -> f64 {
    state.residuals(prob).iter().map(Residual::max_abs).fold(0.0, f64::max)
}
