//! Double-passive benchmark: the same penalty-dual skeleton with unit-modulus
//! reflections, no amplified noise and no surface power budgets. Each
//! reflection vector is updated by minorize-maximize steps.

use crate::channel::{ChannelSet, SceneConfig};
use crate::linalg::hermitian_part;
use crate::pdd::blocks::{theta1_pieces, theta2_pieces};
use crate::pdd::solver::{initial_solution, run_pdd, Solved, SolverOptions};
use crate::pdd::state::{PddState, Problem, Variant};
use crate::{CMat, CVec, Result, C64};

/// `max phi^H Xi phi - 2 Re(s^H phi)` over unit-modulus `phi`.
#[derive(Debug, Clone)]
pub struct MmProblem {
    pub xi: CMat,
    pub s: CVec,
}

impl MmProblem {
    pub fn objective(&self, phi: &CVec) -> f64 {
        phi.dotc(&(&self.xi * phi)).re - 2.0 * self.s.dotc(phi).re
    }

    pub fn lambda_min(&self) -> f64 {
        self.xi.clone().symmetric_eigenvalues().min()
    }

    /// One minorize-maximize step from `phi`.
    pub fn step(&self, phi: &CVec, lambda_min: f64) -> CVec {
        let v = &self.xi * phi - phi * C64::from(lambda_min) - &self.s;
        CVec::from_fn(phi.len(), |i, _| {
            if v[i].norm() > 0.0 {
                C64::from_polar(1.0, v[i].arg())
            } else {
                phi[i]
            }
        })
    }

    /// Iterates [`MmProblem::step`] until the relative objective change is at most
    /// `tol`. Returns the final point and the objective after every step.
    pub fn maximize(&self, start: &CVec, max_iter: usize, tol: f64) -> (CVec, Vec<f64>) {
        let lmin = self.lambda_min();
        let mut phi = start.clone();
        let mut prev = self.objective(&phi);
        let mut history = vec![prev];
        for _ in 0..max_iter {
            let next = self.step(&phi, lmin);
            let val = self.objective(&next);
            if val < prev {
                break;
            }
            phi = next;
            history.push(val);
            let done = (val - prev).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE);
            prev = val;
            if done {
                break;
            }
        }
        (phi, history)
    }
}

fn outer(a: &CVec) -> CMat {
    a * a.adjoint()
}

fn conj(v: &CVec) -> CVec {
    v.map(|z| z.conj())
}

/// Surrogate for the first surface: rate gain minus the interference penalty.
pub fn mm_phi1_problem(state: &PddState, prob: &Problem) -> MmProblem {
    let ch = prob.ch;
    let cfg = prob.cfg;
    let eq = state.equivalent(ch);
    let pc = theta1_pieces(state, prob, &eq);
    let snr_w = cfg.p_t / cfg.sigma0_2;
    let inv2rho = 1.0 / (2.0 * state.rho);
    let a = conj(&pc.r.component_mul(&ch.h_b1));
    let a0 = ch.h_bu + conj(&ch.h_2u).component_mul(&state.sol.phi2).dot(&ch.h_b2);
    let mut xi = outer(&a) * C64::from(snr_w);
    let mut s = &a * (-a0 * snr_w);
    for k in 0..state.k() {
        xi -= outer(&pc.b[k]) * C64::from(inv2rho);
        s += &pc.b[k] * (pc.m[k] * inv2rho);
    }
    MmProblem {
        xi: hermitian_part(&xi),
        s,
    }
}

/// Surrogate for the second surface.
pub fn mm_phi2_problem(state: &PddState, prob: &Problem) -> MmProblem {
    let ch = prob.ch;
    let cfg = prob.cfg;
    let pc = theta2_pieces(state, prob);
    let snr_w = cfg.p_t / cfg.sigma0_2;
    let inv2rho = 1.0 / (2.0 * state.rho);
    let b = ch.h_2u.component_mul(&conj(&pc.f));
    let b0 = ch.h_bu + conj(&ch.h_1u).component_mul(&state.sol.phi1).dot(&ch.h_b1);
    let mut xi = outer(&b) * C64::from(snr_w);
    let mut s = &b * (-b0 * snr_w);
    for k in 0..state.k() {
        xi -= outer(&pc.r[k]) * C64::from(inv2rho);
        s += &pc.r[k] * (pc.n[k] * inv2rho);
    }
    MmProblem {
        xi: hermitian_part(&xi),
        s,
    }
}

/// Minorize-maximize update of the first reflection vector. Returns the
/// objective history.
pub fn mm_update_phi1(state: &mut PddState, prob: &Problem, opts: &SolverOptions) -> Vec<f64> {
    let mm = mm_phi1_problem(state, prob);
    let (phi, hist) = mm.maximize(&state.sol.phi1, opts.mm_max, opts.mm_tol);
    state.sol.phi1 = phi;
    hist
}

/// Minorize-maximize update of the second reflection vector.
pub fn mm_update_phi2(state: &mut PddState, prob: &Problem, opts: &SolverOptions) -> Vec<f64> {
    let mm = mm_phi2_problem(state, prob);
    let (phi, hist) = mm.maximize(&state.sol.phi2, opts.mm_max, opts.mm_tol);
    state.sol.phi2 = phi;
    hist
}

/// Scene parameters seen by the passive design: no amplified noise and no
/// surface budgets.
pub fn passive_config(cfg: &SceneConfig) -> SceneConfig {
    SceneConfig {
        sigma1_2: 0.0,
        sigma2_2: 0.0,
        p_1: f64::INFINITY,
        p_2: f64::INFINITY,
        ..cfg.clone()
    }
}

/// Solves the double-passive design for one realization. `cfg.p_t` is the
/// transmit power left for the passive scheme.
pub fn passive_solve(ch: &ChannelSet, cfg: &SceneConfig, opts: &SolverOptions) -> Result<Solved> {
    let pcfg = passive_config(cfg);
    let prob = Problem::new(ch, &pcfg, Variant::Passive);
    let start = initial_solution(&prob, opts);
    let mut theta = |st: &mut PddState, prob: &Problem, opts: &SolverOptions, _: &mut usize| -> Result<()> {
        if prob.ris1 {
            mm_update_phi1(st, prob, opts);
        }
        if prob.ris2 {
            mm_update_phi2(st, prob, opts);
        }
        crate::pdd::update_x(st, prob);
        Ok(())
    };
    run_pdd(&prob, opts, start, &mut theta)
}
