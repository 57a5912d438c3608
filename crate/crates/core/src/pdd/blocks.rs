//! Closed-form block updates of the inner loop. Every update minimizes the
//! augmented Lagrangian over its block with the other blocks fixed, subject to
//! the block's share of the constraints.

use nalgebra::DVector;

use super::state::{ccp_excess_parts, ccp_linearize, couplings, fp_optimal_x, PddState, Problem};
use crate::linalg::{
    bisect_multiplier, ellipsoid_solve, hermitian_part, quad_value, solve_hermitian, EllipsoidOptions, ShiftedQuadratic,
};
use crate::model::{scale_columns, scale_rows, Equivalent};
use crate::{CMat, CVec, Error, Result, C64};

/// Caps and tolerances used inside the block updates.
#[derive(Debug, Clone, Copy)]
pub struct BlockOptions {
    pub bisection_max: usize,
    pub ellipsoid_max: usize,
    pub ellipsoid_tol: f64,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            bisection_max: 200,
            ellipsoid_max: 500,
            ellipsoid_tol: 1e-6,
        }
    }
}

/// `min x^H H x - 2 Re(b^H x)` subject to `x^H Q_i x <= c_i`.
#[derive(Debug, Clone)]
pub struct QuadraticSubproblem {
    pub h: CMat,
    pub b: CVec,
    pub constraints: Vec<(CMat, f64)>,
}

impl QuadraticSubproblem {
    pub fn objective(&self, x: &CVec) -> f64 {
        quad_value(&self.h, &self.b, x)
    }

    /// Largest relative constraint excess at `x`.
    pub fn max_excess(&self, x: &CVec) -> f64 {
        self.constraints
            .iter()
            .map(|(q, c)| (x.dotc(&(q * x)).re - c) / c)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn outer(a: &CVec) -> CMat {
    a * a.adjoint()
}

fn conj(v: &CVec) -> CVec {
    v.map(|z| z.conj())
}

/// Transmit beamformers under the radar power budget. Returns the multiplier.
pub fn update_w(state: &mut PddState, prob: &Problem, opts: &BlockOptions) -> Result<f64> {
    let ch = prob.ch;
    let rho = C64::from(state.rho);
    let blocks: Vec<(CMat, CVec)> = (0..state.k())
        .map(|k| {
            let d = &state.sol.d[k];
            let a1 = ch.targets[k].apply(d);
            let a3 = ch.cross_apply(k, d);
            let c1 = state.u[k] + rho * state.lam1[k];
            let c3 = state.y[k] + rho * state.lam3[k];
            let gamma = outer(&a1) + outer(&a3);
            let p = &a1 * c1 + &a3 * c3;
            (gamma, p)
        })
        .collect();
    let sol = ShiftedQuadratic::new(&blocks)?.solve_with_budget(prob.cfg.p_r, opts.bisection_max)?;
    state.sol.w = sol.x;
    Ok(sol.mu)
}

/// Receive-filter subproblem of direction `k` and its norm budget
/// `||d_k||^2 <= m` implied by the convexified radar constraint.
pub fn d_subproblem(state: &PddState, prob: &Problem, eq: &Equivalent, k: usize) -> (CMat, CVec, f64) {
    let ch = prob.ch;
    let cfg = prob.cfg;
    let rho = C64::from(state.rho);
    let w = &state.sol.w[k];
    let g1 = ch.targets[k].apply(w);
    let g3 = ch.cross_apply(k, w);
    let c1 = state.u[k] + rho * state.lam1[k];
    let c2 = state.v[k] + rho * state.lam2[k];
    let c3 = state.y[k] + rho * state.lam3[k];
    let mut h = outer(&g1) + outer(&g3) + outer(&eq.q);
    let mut z = &g1 * c1.conj() + &eq.q * c2.conj() + &g3 * c3.conj();
    if prob.has_noise_aux() {
        let ce = &state.e[k] + &state.lam_e[k] * rho;
        let ct = &state.t[k] + &state.lam_t[k] * rho;
        h += &eq.b * eq.b.adjoint() + &eq.c * eq.c.adjoint();
        z += &eq.b * conj(&ce) + &eq.c * conj(&ct);
    }
    let rest = cfg.eta * (state.y[k].norm_sqr() + cfg.p_t * state.v[k].norm_sqr() + state.noise_aux_energy(prob, k));
    let m = (ccp_linearize(state.u[k], state.u_anchor[k]) - rest) / (cfg.eta * cfg.sigma2);
    (hermitian_part(&h), z, m)
}

/// Receive filter of direction `k`. On an empty feasible set the filter is left
/// unchanged and an infeasible-block error is returned.
pub fn update_d(state: &mut PddState, prob: &Problem, k: usize, opts: &BlockOptions) -> Result<f64> {
    let eq = state.equivalent(prob.ch);
    update_d_with(state, prob, &eq, k, opts)
}

pub(crate) fn update_d_with(
    state: &mut PddState,
    prob: &Problem,
    eq: &Equivalent,
    k: usize,
    opts: &BlockOptions,
) -> Result<f64> {
    let (h, z, m) = d_subproblem(state, prob, eq, k);
    if !(m > 0.0) {
        return Err(Error::infeasible_block(
            "d",
            format!("direction {k}: filter budget {m:.3e} is not positive"),
        ));
    }
    let sol = ShiftedQuadratic::new(&[(h, z)])?.solve_with_budget(m, opts.bisection_max)?;
    state.sol.d[k] = sol.x.into_iter().next().expect("one block");
    Ok(sol.mu)
}

/// Fractional-programming auxiliary at its closed-form optimum.
pub fn update_x(state: &mut PddState, prob: &Problem) {
    state.x = fp_optimal_x(prob.ch, &state.sol.phi1, &state.sol.phi2, prob.cfg);
}

/// Radar-signal auxiliary `u_k`. The multiplier of the convexified radar
/// constraint enters linearly, so its root is computed exactly.
pub fn update_aux_u(state: &mut PddState, prob: &Problem, eq: &Equivalent, k: usize) -> Result<f64> {
    let c = couplings(prob.ch, eq, &state.sol.w[k], &state.sol.d[k], k);
    let base = c.s1 - state.lam1[k] * state.rho;
    let anchor = state.u_anchor[k];
    let rest = prob.cfg.eta
        * (state.y[k].norm_sqr()
            + prob.cfg.p_t * state.v[k].norm_sqr()
            + state.noise_aux_energy(prob, k)
            + prob.cfg.sigma2 * state.sol.d[k].norm_squared());
    if ccp_linearize(base, anchor) >= rest {
        state.u[k] = base;
        return Ok(0.0);
    }
    let a2 = anchor.norm_sqr();
    if a2 == 0.0 {
        return Err(Error::infeasible_block(
            "u",
            format!("direction {k}: zero linearization point"),
        ));
    }
    let mu = (rest + a2 - 2.0 * (anchor.conj() * base).re) / (2.0 * a2);
    state.u[k] = base + anchor * mu;
    Ok(mu)
}

/// Interference, leakage and amplified-noise auxiliaries `v_k, y_k, e_k, t_k`,
/// jointly, with one multiplier on the convexified radar constraint.
pub fn update_aux_rest(
    state: &mut PddState,
    prob: &Problem,
    eq: &Equivalent,
    k: usize,
    opts: &BlockOptions,
) -> Result<f64> {
    let cfg = prob.cfg;
    let rho = state.rho;
    let c = couplings(prob.ch, eq, &state.sol.w[k], &state.sol.d[k], k);
    let cv = c.s2 - state.lam2[k] * rho;
    let cy = c.s3 - state.lam3[k] * rho;
    let noise = prob.has_noise_aux();
    let (ce, ct) = if noise {
        (
            c.se - &state.lam_e[k] * C64::from(rho),
            c.st - &state.lam_t[k] * C64::from(rho),
        )
    } else {
        (CVec::zeros(0), CVec::zeros(0))
    };
    let (ev, ee, et) = (ce.norm_squared(), ct.norm_squared(), cfg.p_t);
    let budget = ccp_linearize(state.u[k], state.u_anchor[k]) - cfg.eta * cfg.sigma2 * state.sol.d[k].norm_squared();
    let lhs = |nu: f64| {
        let mut s =
            cy.norm_sqr() / (1.0 + nu * cfg.eta).powi(2) + et * cv.norm_sqr() / (1.0 + nu * cfg.eta * et).powi(2);
        if noise {
            s += cfg.sigma1_2 * ev / (1.0 + nu * cfg.eta * cfg.sigma1_2).powi(2)
                + cfg.sigma2_2 * ee / (1.0 + nu * cfg.eta * cfg.sigma2_2).powi(2);
        }
        cfg.eta * s
    };
    let nu = if lhs(0.0) <= budget {
        0.0
    } else if budget <= 0.0 {
        return Err(Error::infeasible_block(
            "aux",
            format!("direction {k}: radar constraint budget {budget:.3e} is not positive"),
        ));
    } else {
        let scale = 1.0 / (cfg.eta * et.max(1.0));
        scale * bisect_multiplier(|t| lhs(t * scale) - budget, opts.bisection_max)?
    };
    state.v[k] = cv / (1.0 + nu * cfg.eta * et);
    state.y[k] = cy / (1.0 + nu * cfg.eta);
    if noise {
        state.e[k] = ce / C64::from(1.0 + nu * cfg.eta * cfg.sigma1_2);
        state.t[k] = ct / C64::from(1.0 + nu * cfg.eta * cfg.sigma2_2);
    }
    Ok(nu)
}

/// Per-direction quantities shared by the first-surface updates.
pub(crate) struct Theta1Pieces {
    /// Entries of `h_2u^H Θ2 H_12 + h_1u^H`.
    pub r: CVec,
    /// Rows `d_k^H (H_2r Θ2 H_12 + H_1r)` as entry vectors.
    pub g: Vec<CVec>,
    /// `b_k` with `d_k^H q = const + b_k^H phi1`.
    pub b: Vec<CVec>,
    /// `d_k^H (h_br + C h_b2) - v_k - rho lam2_k`.
    pub m: Vec<C64>,
}

pub(crate) fn theta1_pieces(state: &PddState, prob: &Problem, eq: &Equivalent) -> Theta1Pieces {
    let ch = prob.ch;
    let rho = state.rho;
    let t2 = conj(&ch.h_2u).component_mul(&state.sol.phi2);
    let r = ch.h_12.transpose() * &t2 + conj(&ch.h_1u);
    let w1 = &eq.c * &ch.h_12 + &ch.h_1r;
    let fixed = &ch.h_br + &eq.c * &ch.h_b2;
    let mut g = Vec::with_capacity(state.k());
    let mut b = Vec::with_capacity(state.k());
    let mut m = Vec::with_capacity(state.k());
    for k in 0..state.k() {
        let d = &state.sol.d[k];
        let gk = w1.transpose() * conj(d);
        b.push(conj(&gk.component_mul(&ch.h_b1)));
        m.push(d.dotc(&fixed) - state.v[k] - state.lam2[k] * rho);
        g.push(gk);
    }
    Theta1Pieces { r, g, b, m }
}

/// First-surface subproblem with its two power constraints (own budget, then
/// the second surface's budget left after the terms not involving `phi1`).
pub fn theta1_subproblem(state: &PddState, prob: &Problem) -> Result<QuadraticSubproblem> {
    let eq = state.equivalent(prob.ch);
    theta1_subproblem_with(state, prob, &eq)
}

pub(crate) fn theta1_subproblem_with(state: &PddState, prob: &Problem, eq: &Equivalent) -> Result<QuadraticSubproblem> {
    let ch = prob.ch;
    let cfg = prob.cfg;
    let n1 = ch.n1();
    let pc = theta1_pieces(state, prob, eq);
    let inv2rho = 1.0 / (2.0 * state.rho);
    let x2 = state.x.norm_sqr();

    let mut h = CMat::from_diagonal(&pc.r.map(|z| C64::from(x2 * cfg.sigma1_2 * z.norm_sqr())));
    let mut lin = conj(&pc.r.component_mul(&ch.h_b1)) * (state.x * cfg.p_t.sqrt());
    for k in 0..state.k() {
        let bk = &pc.b[k];
        h += outer(bk) * C64::from(inv2rho);
        lin -= bk * (pc.m[k] * inv2rho);
        if prob.has_noise_aux() {
            let ce = &state.e[k] + &state.lam_e[k] * C64::from(state.rho);
            for j in 0..n1 {
                h[(j, j)] += C64::from(inv2rho * pc.g[k][j].norm_sqr());
            }
            lin += ce.component_mul(&conj(&pc.g[k])) * C64::from(inv2rho);
        }
    }

    let p = CMat::from_diagonal(&ch.h_b1.map(|z| C64::from(z.norm_sqr() + cfg.sigma1_2)));
    let mut constraints = vec![(p, cfg.p_1)];
    if prob.ris2 {
        let phi2_sq = state.sol.phi2.map(|z| C64::from(z.norm_sqr()));
        let x = ch.h_12.adjoint() * scale_rows(&ch.h_12, &phi2_sq);
        let hb = &ch.h_b1 * ch.h_b1.adjoint();
        let mut v = x.component_mul(&hb.transpose());
        for j in 0..n1 {
            v[(j, j)] += x[(j, j)] * cfg.sigma1_2;
        }
        let own = state
            .sol
            .phi2
            .iter()
            .zip(ch.h_b2.iter())
            .map(|(p, h)| p.norm_sqr() * (h.norm_sqr() + cfg.sigma2_2))
            .sum::<f64>();
        let left = cfg.p_2 - own;
        if !(left > 0.0) {
            return Err(Error::infeasible_block(
                "theta1",
                format!("second-surface budget exhausted by terms not involving phi1 ({left:.3e})"),
            ));
        }
        constraints.push((hermitian_part(&v), left));
    }
    Ok(QuadraticSubproblem {
        h: hermitian_part(&h),
        b: lin,
        constraints,
    })
}

fn quad_form(q: &CMat, x: &CVec) -> f64 {
    x.dotc(&(q * x)).re
}

fn shifted_solve(sp: &QuadraticSubproblem, kappa: &[f64]) -> Result<CVec> {
    let mut m = sp.h.clone();
    for ((q, _), k) in sp.constraints.iter().zip(kappa) {
        if *k != 0.0 {
            m += q * C64::from(*k);
        }
    }
    Ok(solve_hermitian(&m, &sp.b)?.x)
}

fn satisfied(sp: &QuadraticSubproblem, x: &CVec, which: usize) -> bool {
    let (q, c) = &sp.constraints[which];
    quad_form(q, x) <= c * (1.0 + 1e-9)
}

/// Smallest multiplier on constraint `which` alone that meets it.
fn single_multiplier(sp: &QuadraticSubproblem, which: usize, opts: &BlockOptions) -> Result<(CVec, f64)> {
    let (q, c) = &sp.constraints[which];
    // with Q = L L^H and y = L^H x the cap becomes a plain norm budget
    if let Some(chol) = q.clone().cholesky() {
        let l = chol.l();
        let mut g = sp.h.clone();
        l.solve_lower_triangular_mut(&mut g);
        let mut g = g.adjoint();
        l.solve_lower_triangular_mut(&mut g);
        let mut rhs = sp.b.clone();
        l.solve_lower_triangular_mut(&mut rhs);
        let sol = ShiftedQuadratic::new(&[(hermitian_part(&g), rhs)])?.solve_with_budget(*c, opts.bisection_max)?;
        let mut x = sol.x.into_iter().next().expect("one block");
        l.adjoint().solve_upper_triangular_mut(&mut x);
        return Ok((x, sol.mu));
    }
    let scale = {
        let hmax = sp.h.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
        let qmax = q.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
        if hmax > 0.0 && qmax > 0.0 {
            hmax / qmax
        } else {
            1.0
        }
    };
    let mut kappa = vec![0.0; sp.constraints.len()];
    let mut failure = None;
    let t = bisect_multiplier(
        |t| {
            kappa[which] = t * scale;
            match shifted_solve(sp, &kappa) {
                Ok(x) => quad_form(q, &x) - c,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            }
        },
        opts.bisection_max,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    kappa.fill(0.0);
    kappa[which] = t * scale;
    Ok((shifted_solve(sp, &kappa)?, t * scale))
}

/// Solves a one- or two-constraint [`QuadraticSubproblem`] through its Lagrange
/// dual. Cases with at most one active constraint are settled by bisection; the
/// remaining case runs the ellipsoid method on the dual in normalized coordinates.
pub fn solve_two_constraint(sp: &QuadraticSubproblem, opts: &BlockOptions) -> Result<(CVec, Vec<f64>)> {
    let nc = sp.constraints.len();
    let x0 = shifted_solve(sp, &vec![0.0; nc])?;
    if (0..nc).all(|i| satisfied(sp, &x0, i)) {
        return Ok((x0, vec![0.0; nc]));
    }
    for i in 0..nc {
        let (x, k) = single_multiplier(sp, i, opts)?;
        if (0..nc).all(|j| j == i || satisfied(sp, &x, j)) {
            let mut kappa = vec![0.0; nc];
            kappa[i] = k;
            return Ok((x, kappa));
        }
    }
    // both constraints active
    let budgets: Vec<f64> = sp.constraints.iter().map(|(_, c)| *c).collect();
    let dual = |kappa: &[f64]| -> Result<(f64, Vec<f64>, CVec)> {
        let x = shifted_solve(sp, kappa)?;
        let value = sp.b.dotc(&x).re + kappa.iter().zip(&budgets).map(|(k, c)| k * c).sum::<f64>();
        let grad = sp.constraints.iter().map(|(q, c)| c - quad_form(q, &x)).collect();
        Ok((value, grad, x))
    };
    let tau0 = {
        let hmax = sp.h.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
        let qmax = sp
            .constraints
            .iter()
            .map(|(q, _)| q.diagonal().iter().map(|z| z.re).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if hmax > 0.0 && qmax > 0.0 {
            hmax / qmax
        } else {
            1.0
        }
    };
    // every multiplier of the dual optimum is bounded by F(k)/c_i for any k >= 0
    let mut bound = f64::INFINITY;
    for j in -8..=8 {
        let tau = tau0 * 10f64.powi(j);
        let (f, _, _) = dual(&vec![tau; nc])?;
        if f.is_finite() {
            bound = bound.min(f);
        }
    }
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::numerical("solve_two_constraint", "no finite dual bound"));
    }
    let kmax: Vec<f64> = budgets.iter().map(|c| bound / c).collect();
    let mut failure = None;
    let res = ellipsoid_solve(
        |s: &[f64]| {
            let kappa: Vec<f64> = s.iter().zip(&kmax).map(|(s, k)| s * k).collect();
            match dual(&kappa) {
                Ok((f, g, _)) => (f, g.iter().zip(&kmax).map(|(g, k)| g * k).collect()),
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::INFINITY, vec![0.0; kappa.len()])
                }
            }
        },
        &EllipsoidOptions {
            center: vec![0.5; nc],
            radius: 0.75 * (nc as f64).sqrt() / 2f64.sqrt(),
            tol: opts.ellipsoid_tol,
            max_iter: opts.ellipsoid_max,
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let kappa: Vec<f64> = res.x.iter().zip(&kmax).map(|(s, k)| s * k).collect();
    let kappa = newton_polish(sp, kappa, opts.bisection_max);
    let (_, _, x) = dual(&kappa)?;
    Ok((x, kappa))
}

struct DualPoint {
    value: f64,
    grad: Vec<f64>,
    x: CVec,
    chol: nalgebra::Cholesky<C64, nalgebra::Dyn>,
}

fn dual_point(sp: &QuadraticSubproblem, kappa: &[f64]) -> Option<DualPoint> {
    let mut m = hermitian_part(&sp.h);
    for ((q, _), k) in sp.constraints.iter().zip(kappa) {
        m += q * C64::from(*k);
    }
    let chol = m.cholesky()?;
    let x = chol.solve(&sp.b);
    let value = -sp.b.dotc(&x).re - kappa.iter().zip(&sp.constraints).map(|(k, (_, c))| k * c).sum::<f64>();
    let grad = sp.constraints.iter().map(|(q, c)| quad_form(q, &x) - c).collect();
    Some(DualPoint { value, grad, x, chol })
}

/// Projected Newton ascent on the smooth dual, started from the ellipsoid
/// estimate. The ellipsoid localizes the multipliers; this step makes the
/// active constraints hold to rounding level.
fn newton_polish(sp: &QuadraticSubproblem, start: Vec<f64>, max_iter: usize) -> Vec<f64> {
    let nc = start.len();
    let Some(mut cur) = dual_point(sp, &start) else {
        return start;
    };
    let mut kappa = start;
    for _ in 0..max_iter {
        let free: Vec<usize> = (0..nc).filter(|&i| kappa[i] > 0.0 || cur.grad[i] > 0.0).collect();
        let tol = |i: usize| 1e-12 * sp.constraints[i].1;
        if free.iter().all(|&i| cur.grad[i].abs() <= tol(i)) {
            break;
        }
        let qx: Vec<CVec> = free.iter().map(|&i| &sp.constraints[i].0 * &cur.x).collect();
        let z: Vec<CVec> = qx.iter().map(|v| cur.chol.solve(v)).collect();
        let nf = free.len();
        let hess = nalgebra::DMatrix::<f64>::from_fn(nf, nf, |a, b| -2.0 * qx[a].dotc(&z[b]).re);
        let g = nalgebra::DVector::<f64>::from_fn(nf, |a, _| cur.grad[free[a]]);
        let Some(step) = (-hess).cholesky().map(|c| c.solve(&g)) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand = kappa.clone();
            for (a, &i) in free.iter().enumerate() {
                cand[i] = (kappa[i] + t * step[a]).max(0.0);
            }
            if let Some(p) = dual_point(sp, &cand) {
                if p.value >= cur.value - 1e-14 * cur.value.abs() {
                    accepted = Some((cand, p));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((k, p)) if k != kappa => {
                kappa = k;
                cur = p;
            }
            _ => break,
        }
    }
    kappa
}

/// Shrinks `x` onto the constraint set of `sp` along its ray.
fn scale_into(sp: &QuadraticSubproblem, x: CVec) -> CVec {
    let mut s: f64 = 1.0;
    for (q, c) in &sp.constraints {
        let v = quad_form(q, &x);
        if v > *c {
            s = s.min((c / v).sqrt());
        }
    }
    if s < 1.0 {
        x * C64::from(s)
    } else {
        x
    }
}

/// First-surface reflection vector. Keeps the previous vector if the new one
/// does not improve the subproblem objective.
pub fn update_theta1(state: &mut PddState, prob: &Problem, opts: &BlockOptions) -> Result<Vec<f64>> {
    let eq = state.equivalent(prob.ch);
    let sp = theta1_subproblem_with(state, prob, &eq)?;
    let (x, kappa) = solve_two_constraint(&sp, opts)?;
    let x = scale_into(&sp, x);
    if sp.objective(&x) <= sp.objective(&state.sol.phi1) || sp.max_excess(&state.sol.phi1) > 0.0 {
        state.sol.phi1 = x;
    }
    Ok(kappa)
}

/// Per-direction quantities shared by the second-surface updates.
pub(crate) struct Theta2Pieces {
    /// `H_12 Θ1`.
    pub f_mat: CMat,
    /// `H_12 Θ1 h_b1 + h_b2`.
    pub f: CVec,
    /// `(d_k^H H_2r)^T`.
    pub p: Vec<CVec>,
    /// `r_k` with `d_k^H q = const + r_k^H phi2`.
    pub r: Vec<CVec>,
    /// `d_k^H (h_br + H_1r Θ1 h_b1) - v_k - rho lam2_k`.
    pub n: Vec<C64>,
}

pub(crate) fn theta2_pieces(state: &PddState, prob: &Problem) -> Theta2Pieces {
    let ch = prob.ch;
    let f_mat = scale_columns(&ch.h_12, &state.sol.phi1);
    let f = &f_mat * &ch.h_b1 + &ch.h_b2;
    let fixed = &ch.h_br + &ch.h_1r * state.sol.phi1.component_mul(&ch.h_b1);
    let mut p = Vec::with_capacity(state.k());
    let mut r = Vec::with_capacity(state.k());
    let mut n = Vec::with_capacity(state.k());
    for k in 0..state.k() {
        let d = &state.sol.d[k];
        let pk = ch.h_2r.transpose() * conj(d);
        r.push(conj(&pk.component_mul(&f)));
        n.push(d.dotc(&fixed) - state.v[k] - state.lam2[k] * state.rho);
        p.push(pk);
    }
    Theta2Pieces { f_mat, f, p, r, n }
}

/// Second-surface subproblem with its diagonal power constraint.
pub fn theta2_subproblem(state: &PddState, prob: &Problem) -> QuadraticSubproblem {
    let ch = prob.ch;
    let cfg = prob.cfg;
    let n2 = ch.n2();
    let pc = theta2_pieces(state, prob);
    let inv2rho = 1.0 / (2.0 * state.rho);
    let x2 = state.x.norm_sqr();
    let fc = conj_mat(&pc.f_mat);
    let s = &fc * pc.f_mat.transpose();

    let ell = conj(&ch.h_1u).component_mul(&state.sol.phi1);
    let gh_ell = ch.h_2u.component_mul(&(&fc * &ell));
    let mut h = s.component_mul(&outer(&ch.h_2u)) * C64::from(x2 * cfg.sigma1_2);
    for n in 0..n2 {
        h[(n, n)] += C64::from(x2 * cfg.sigma2_2 * ch.h_2u[n].norm_sqr());
    }
    let mut lin =
        ch.h_2u.component_mul(&conj(&pc.f)) * (state.x * cfg.p_t.sqrt()) - gh_ell * C64::from(x2 * cfg.sigma1_2);

    for k in 0..state.k() {
        let rk = &pc.r[k];
        h += outer(rk) * C64::from(inv2rho);
        lin -= rk * (pc.n[k] * inv2rho);
        if !prob.has_noise_aux() {
            continue;
        }
        let pk = &pc.p[k];
        let pk_c = conj(pk);
        h += s.component_mul(&(&pk_c * pk.transpose())) * C64::from(inv2rho);
        for n in 0..n2 {
            h[(n, n)] += C64::from(inv2rho * pk[n].norm_sqr());
        }
        let d = &state.sol.d[k];
        let sk = (ch.h_1r.transpose() * conj(d)).component_mul(&state.sol.phi1);
        let ce = &state.e[k] + &state.lam_e[k] * C64::from(state.rho);
        let ct = &state.t[k] + &state.lam_t[k] * C64::from(state.rho);
        let cprime = ce - sk;
        lin += pk_c.component_mul(&(&fc * cprime)) * C64::from(inv2rho);
        lin += pk_c.component_mul(&ct) * C64::from(inv2rho);
    }

    let f1 = &pc.f_mat * &ch.h_b1;
    let z = CVec::from_fn(n2, |n, _| {
        let row: f64 = pc.f_mat.row(n).iter().map(|v| v.norm_sqr()).sum();
        C64::from(f1[n].norm_sqr() + ch.h_b2[n].norm_sqr() + cfg.sigma1_2 * row + cfg.sigma2_2)
    });
    QuadraticSubproblem {
        h: hermitian_part(&h),
        b: lin,
        constraints: vec![(CMat::from_diagonal(&z), cfg.p_2)],
    }
}

fn conj_mat(x: &CMat) -> CMat {
    x.map(|z| z.conj())
}

/// Second-surface reflection vector. Keeps the previous vector if the new one
/// does not improve the subproblem objective.
pub fn update_theta2(state: &mut PddState, prob: &Problem, opts: &BlockOptions) -> Result<f64> {
    let sp = theta2_subproblem(state, prob);
    let (zmat, budget) = &sp.constraints[0];
    let omega: DVector<f64> = zmat.diagonal().map(|z| 1.0 / z.re.sqrt());
    let omega_c = omega.map(C64::from);
    let hw = CMat::from_fn(sp.h.nrows(), sp.h.ncols(), |i, j| sp.h[(i, j)] * omega[i] * omega[j]);
    let bw = sp.b.component_mul(&omega_c);
    let sol = ShiftedQuadratic::new(&[(hermitian_part(&hw), bw)])?.solve_with_budget(*budget, opts.bisection_max)?;
    let y = sol.x.into_iter().next().expect("one block");
    let x = scale_into(&sp, y.component_mul(&omega_c));
    if sp.objective(&x) <= sp.objective(&state.sol.phi2) || sp.max_excess(&state.sol.phi2) > 0.0 {
        state.sol.phi2 = x;
    }
    Ok(sol.mu)
}

/// Radar constraint excess of direction `k` if `d_k` were replaced by `d`.
pub fn ccp_excess_with_filter(state: &PddState, prob: &Problem, k: usize, d: &CVec) -> f64 {
    ccp_excess_parts(
        prob,
        state.u[k],
        state.u_anchor[k],
        state.v[k],
        state.y[k],
        state.noise_aux_energy(prob, k),
        d.norm_squared(),
    )
}
