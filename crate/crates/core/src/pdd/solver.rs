//! Two-loop driver: inner block-coordinate passes on the augmented Lagrangian,
//! outer dual/penalty schedule, and the final receive-filter polish.

use std::f64::consts::PI;
use std::time::Instant;

use log::{debug, trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{self, BlockOptions};
use super::state::{al_objective_with, constraint_violation, PddState, Problem, Variant};
use crate::channel::{ChannelSet, SceneConfig};
use crate::model::{self, achievable_rate, BeamformerSolution, Equivalent, MetricsReport, Ris};
use crate::{CMat, CVec, Error, Result, C64};

/// Schedule, tolerances and caps of the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative change of the objective (inner loop) and of the rate (outer loop).
    pub eps: f64,
    pub rho0: f64,
    /// Penalty shrink factor.
    pub c: f64,
    /// Initial violation threshold for dual updates.
    pub sigma0: f64,
    /// Factor applied to the threshold after every dual update.
    pub sigma_decay: f64,
    /// Largest residual accepted at termination.
    pub violation_tol: f64,
    pub inner_max: usize,
    pub outer_max: usize,
    pub bisection_max: usize,
    pub ellipsoid_max: usize,
    pub ellipsoid_tol: f64,
    pub mm_max: usize,
    pub mm_tol: f64,
    /// Seed of the random reflection phases at initialization.
    pub init_seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            rho0: 1.0,
            c: 0.8,
            sigma0: 0.1,
            sigma_decay: 0.9,
            violation_tol: 1e-6,
            inner_max: 100,
            outer_max: 400,
            bisection_max: 200,
            ellipsoid_max: 500,
            ellipsoid_tol: 1e-6,
            mm_max: 200,
            mm_tol: 1e-6,
            init_seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps > 0.0
            && self.rho0 > 0.0
            && self.c > 0.0
            && self.c < 1.0
            && self.sigma0 > 0.0
            && self.sigma_decay > 0.0
            && self.sigma_decay <= 1.0
            && self.violation_tol > 0.0
            && self.inner_max > 0
            && self.outer_max > 0
            && self.bisection_max > 0
            && self.ellipsoid_max > 0
            && self.ellipsoid_tol > 0.0
            && self.mm_max > 0
            && self.mm_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver options: {self:?}")))
        }
    }

    pub(crate) fn blocks(&self) -> BlockOptions {
        BlockOptions {
            bisection_max: self.bisection_max,
            ellipsoid_max: self.ellipsoid_max,
            ellipsoid_tol: self.ellipsoid_tol,
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub al_obj: f64,
    pub rate: f64,
    pub violation: f64,
    pub rho: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    /// True when the stopping rule fired before the outer cap.
    pub converged: bool,
    pub inner_passes: usize,
    /// Block updates skipped because their feasible set was empty.
    pub skipped_blocks: usize,
    /// Inner-pass objective values of every outer iteration.
    pub inner_objective: Vec<Vec<f64>>,
}

impl SolveTrace {
    pub const CSV_HEADER: &'static str = "iter,al_obj,rate,violation,rho,ms";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter,
                model::fmt_g(r.al_obj),
                model::fmt_g(r.rate),
                model::fmt_g(r.violation),
                model::fmt_g(r.rho),
                model::fmt_g(r.ms)
            ));
        }
        out
    }
}

/// Result of a solve.
#[derive(Debug, Clone)]
pub struct Solved {
    pub solution: BeamformerSolution,
    pub report: MetricsReport,
    pub trace: SolveTrace,
}

/// Maximum-SINR receive filter of direction `k` for fixed `w_k` and reflections,
/// normalized to unit norm.
pub fn mvdr_filter(ch: &ChannelSet, eq: &Equivalent, w: &CVec, cfg: &SceneConfig, k: usize) -> CVec {
    let m = ch.m();
    let mut r = CMat::identity(m, m) * C64::from(cfg.sigma2);
    for (j, t) in ch.targets.iter().enumerate() {
        if j != k {
            let g = t.apply(w);
            r += &g * g.adjoint();
        }
    }
    r += &eq.q * eq.q.adjoint() * C64::from(cfg.p_t);
    if cfg.sigma1_2 > 0.0 {
        r += &eq.b * eq.b.adjoint() * C64::from(cfg.sigma1_2);
    }
    if cfg.sigma2_2 > 0.0 {
        r += &eq.c * eq.c.adjoint() * C64::from(cfg.sigma2_2);
    }
    let mut target = ch.targets[k].apply(w);
    if target.norm() == 0.0 {
        target = ch.targets[k].steering.clone();
    }
    let d = crate::linalg::solve_regularized_hpd(&crate::linalg::hermitian_part(&r), &target)
        .map(|s| s.x)
        .unwrap_or(target);
    let n = d.norm();
    if n > 0.0 && n.is_finite() {
        d / C64::from(n)
    } else {
        ch.targets[k].steering.clone() / C64::from((m as f64).sqrt())
    }
}

fn random_phases(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    CVec::from_fn(n, |_, _| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
}

/// Starting point: random reflection phases (scaled onto the power budgets for
/// active surfaces), equal-power beams towards each direction and maximum-SINR filters.
pub fn initial_solution(prob: &Problem, opts: &SolverOptions) -> BeamformerSolution {
    let ch = prob.ch;
    let cfg = prob.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.init_seed);
    let mut phi1 = random_phases(ch.n1(), &mut rng);
    let mut phi2 = random_phases(ch.n2(), &mut rng);
    if !prob.ris1 {
        phi1.fill(C64::from(0.0));
    }
    if !prob.ris2 {
        phi2.fill(C64::from(0.0));
    }
    if prob.variant == Variant::Active {
        let p1 = model::active_ris_power(ch, &phi1, &phi2, cfg, Ris::One);
        if p1 > 0.0 && cfg.p_1.is_finite() {
            phi1 *= C64::from((cfg.p_1 / p1).sqrt());
        }
        let p2 = model::active_ris_power(ch, &phi1, &phi2, cfg, Ris::Two);
        if p2 > 0.0 && cfg.p_2.is_finite() {
            phi2 *= C64::from((cfg.p_2 / p2).sqrt());
        }
    }
    let k = ch.k();
    let m = ch.m() as f64;
    let amp = C64::from((cfg.p_r / k as f64).sqrt() / m.sqrt());
    let w: Vec<CVec> = ch.targets.iter().map(|t| &t.steering * amp).collect();
    let mut sol = BeamformerSolution {
        d: vec![CVec::zeros(ch.m()); k],
        w,
        phi1,
        phi2,
    };
    polish_filters(ch, cfg, &mut sol);
    sol
}

/// Replaces every receive filter with its maximum-SINR counterpart. The rate
/// does not depend on the filters, and no other constraint involves them.
pub fn polish_filters(ch: &ChannelSet, cfg: &SceneConfig, sol: &mut BeamformerSolution) {
    let eq = model::equivalent_matrices(ch, &sol.phi1, &sol.phi2);
    for k in 0..ch.k() {
        sol.d[k] = mvdr_filter(ch, &eq, &sol.w[k], cfg, k);
    }
}

fn rate_of(prob: &Problem, st: &PddState) -> f64 {
    achievable_rate(model::comm_snr(prob.ch, &st.sol, prob.cfg)).unwrap_or(0.0)
}

fn tolerate_infeasible<T>(r: Result<T>, skipped: &mut usize) -> Result<()> {
    match r {
        Ok(_) => Ok(()),
        Err(Error::InfeasibleBlock { block, reason }) => {
            trace!("skipping block {block}: {reason}");
            *skipped += 1;
            Ok(())
        }
        Err(e) => Err(e),
    }
}

/// Reflection-vector step of one inner pass.
pub(crate) type ThetaStep<'s> = dyn FnMut(&mut PddState, &Problem, &SolverOptions, &mut usize) -> Result<()> + 's;

/// One block-coordinate pass over `w, d, x, u, (v, y, e, t)` and the reflections.
pub(crate) fn inner_pass(
    st: &mut PddState,
    prob: &Problem,
    opts: &SolverOptions,
    theta: &mut ThetaStep<'_>,
    skipped: &mut usize,
) -> Result<()> {
    let bo = opts.blocks();
    st.u_anchor = st.u.clone();
    blocks::update_w(st, prob, &bo)?;
    let eq = st.equivalent(prob.ch);
    for k in 0..st.k() {
        tolerate_infeasible(blocks::update_d_with(st, prob, &eq, k, &bo), skipped)?;
    }
    blocks::update_x(st, prob);
    for k in 0..st.k() {
        tolerate_infeasible(blocks::update_aux_u(st, prob, &eq, k), skipped)?;
        tolerate_infeasible(blocks::update_aux_rest(st, prob, &eq, k, &bo), skipped)?;
    }
    theta(st, prob, opts, skipped)
}

fn active_theta(st: &mut PddState, prob: &Problem, opts: &SolverOptions, skipped: &mut usize) -> Result<()> {
    let bo = opts.blocks();
    if prob.ris1 {
        tolerate_infeasible(blocks::update_theta1(st, prob, &bo), skipped)?;
    }
    if prob.ris2 {
        tolerate_infeasible(blocks::update_theta2(st, prob, &bo), skipped)?;
    }
    Ok(())
}

fn dual_update(st: &mut PddState, prob: &Problem) {
    let inv = 1.0 / st.rho;
    for (k, r) in st.residuals(prob).into_iter().enumerate() {
        st.lam1[k] += r.r1 * inv;
        st.lam2[k] += r.r2 * inv;
        st.lam3[k] += r.r3 * inv;
        if prob.has_noise_aux() {
            st.lam_e[k] += r.re * C64::from(inv);
            st.lam_t[k] += r.rt * C64::from(inv);
        }
    }
}

/// Runs the two-loop schedule from `start` with the given reflection step.
pub(crate) fn run_pdd(
    prob: &Problem,
    opts: &SolverOptions,
    start: BeamformerSolution,
    theta: &mut ThetaStep<'_>,
) -> Result<Solved> {
    opts.validate()?;
    let clock = Instant::now();
    let mut st = PddState::from_solution(prob, start, opts.rho0)?;
    let mut trace = SolveTrace::default();
    let mut sigma = opts.sigma0;
    let mut prev_rate = rate_of(prob, &st);

    for outer in 1..=opts.outer_max {
        let mut al_prev = al_objective_with(&st, prob, &st.equivalent(prob.ch));
        let mut inner = vec![al_prev];
        for _ in 0..opts.inner_max {
            inner_pass(&mut st, prob, opts, theta, &mut trace.skipped_blocks)?;
            trace.inner_passes += 1;
            let al_now = al_objective_with(&st, prob, &st.equivalent(prob.ch));
            inner.push(al_now);
            let done = (al_now - al_prev).abs() <= opts.eps * al_prev.abs().max(f64::MIN_POSITIVE);
            al_prev = al_now;
            if done {
                break;
            }
        }
        trace.inner_objective.push(inner);

        let h = constraint_violation(&st, prob);
        if h <= sigma {
            dual_update(&mut st, prob);
            sigma *= opts.sigma_decay;
        } else {
            st.rho *= opts.c;
        }
        let rate = rate_of(prob, &st);
        trace.rows.push(TraceRow {
            iter: outer,
            al_obj: al_prev,
            rate,
            violation: h,
            rho: st.rho,
            ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        debug!("outer {outer}: rate {rate:.6} violation {h:.3e} rho {:.3e}", st.rho);
        let settled = (rate - prev_rate).abs() <= opts.eps * prev_rate.abs().max(f64::MIN_POSITIVE);
        prev_rate = rate;
        if outer > 1 && settled && h <= opts.violation_tol {
            trace.converged = true;
            break;
        }
    }

    let mut solution = st.sol;
    polish_filters(prob.ch, prob.cfg, &mut solution);
    let report = model::check_feasibility(prob.ch, &solution, prob.cfg);
    Ok(Solved {
        solution,
        report,
        trace,
    })
}

/// Solves the double-active design (or a masked variant of it) for one realization.
pub fn pdd_solve(ch: &ChannelSet, cfg: &SceneConfig, opts: &SolverOptions) -> Result<Solved> {
    let prob = Problem::new(ch, cfg, Variant::Active);
    let start = initial_solution(&prob, opts);
    run_pdd(&prob, opts, start, &mut active_theta)
}
