//! Independent oracles for the block updates and small-instance builders.
//!
//! Every block of the augmented Lagrangian is a convex quadratic in its own
//! variables, and its constraints are convex quadratic or affine. The oracle
//! reads those forms off by evaluating the Lagrangian and the constraint
//! functions at probe points, then runs accelerated projected gradient whose
//! projections come from nested multiplier bisection. Nothing here reuses the
//! closed-form solvers.

#![allow(dead_code)]

pub mod props;

use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rcc_core::channel::{generate_channels, ChannelSet, SceneConfig};
use rcc_core::model::{active_ris_power, Ris};
use rcc_core::pdd::{
    al_objective, initial_solution, update_aux_rest, update_aux_u, update_d, update_theta1, update_theta2, update_w,
    BlockOptions, PddState, Problem, SolverOptions, Variant,
};
use rcc_core::{CMat, CVec, C64};

pub fn small_config() -> SceneConfig {
    SceneConfig {
        m: 3,
        n1: 3,
        n2: 3,
        theta_k: vec![-0.5, 0.4],
        alpha_k: vec![0.1, 0.1],
        ..SceneConfig::default()
    }
}

pub fn cgauss(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cgauss_vec(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    CVec::from_fn(n, |_, _| cgauss(rng))
}

/// One random block-update instance: channels, a scene whose radar threshold
/// sits near the current SINR margin, and a perturbed iterate with nonzero duals.
pub struct Instance {
    pub ch: ChannelSet,
    pub cfg: SceneConfig,
    pub state: PddState,
    pub k: usize,
}

impl Instance {
    pub fn prob(&self) -> Problem<'_> {
        Problem::new(&self.ch, &self.cfg, Variant::Active)
    }
}

fn radar_margin(state: &PddState, cfg: &SceneConfig, k: usize) -> f64 {
    let noise = cfg.sigma1_2 * state.e[k].norm_squared() + cfg.sigma2_2 * state.t[k].norm_squared();
    let den =
        state.y[k].norm_sqr() + cfg.p_t * state.v[k].norm_sqr() + noise + cfg.sigma2 * state.sol.d[k].norm_squared();
    state.u[k].norm_sqr() / den
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut cfg = small_config();
    let ch = generate_channels(&cfg, seed).unwrap();
    let opts = SolverOptions {
        init_seed: seed,
        ..SolverOptions::default()
    };
    let sol = {
        let prob = Problem::new(&ch, &cfg, Variant::Active);
        initial_solution(&prob, &opts)
    };
    let k = (seed as usize) % cfg.k();
    let mut state = {
        let prob = Problem::new(&ch, &cfg, Variant::Active);
        PddState::from_solution(&prob, sol, 0.5).unwrap()
    };
    let jitter = |z: C64, rng: &mut ChaCha8Rng| z * (C64::from(1.0) + cgauss(rng) * 0.2);
    for i in 0..cfg.k() {
        state.u[i] = jitter(state.u[i], &mut rng);
        state.v[i] = jitter(state.v[i], &mut rng);
        state.y[i] = jitter(state.y[i], &mut rng);
        state.e[i] = state.e[i].map(|z| jitter(z, &mut rng));
        state.t[i] = state.t[i].map(|z| jitter(z, &mut rng));
        let r = state.rho;
        state.lam1[i] = cgauss(&mut rng) * 0.2 * state.u[i].norm() / r;
        state.lam2[i] = cgauss(&mut rng) * 0.2 * state.v[i].norm() / r;
        state.lam3[i] = cgauss(&mut rng) * 0.2 * state.y[i].norm() / r;
        let se = state.e[i].norm() / (cfg.n1 as f64).sqrt();
        let st = state.t[i].norm() / (cfg.n2 as f64).sqrt();
        state.lam_e[i] = cgauss_vec(cfg.n1, &mut rng) * C64::from(0.2 * se / r);
        state.lam_t[i] = cgauss_vec(cfg.n2, &mut rng) * C64::from(0.2 * st / r);
    }
    // put the radar threshold just above or below the current margin
    let margin = radar_margin(&state, &cfg, k);
    let factor = if seed.is_multiple_of(2) { 0.6 } else { 1.3 };
    cfg.eta = factor * margin;
    Instance { ch, cfg, state, k }
}

/// `f(z) = z^H H z - 2 Re(g^H z) + c` around a base point.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub h: CMat,
    pub g: CVec,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, z: &CVec) -> f64 {
        z.dotc(&(&self.h * z)).re - 2.0 * self.g.dotc(z).re + self.c
    }
}

/// Reads the quadratic form of `f` in the displacement `z`, probing with step `s`.
pub fn probe<F: Fn(&CVec) -> f64>(n: usize, s: f64, f: F) -> Quadratic {
    let unit = |i: usize, a: C64| {
        let mut z = CVec::zeros(n);
        z[i] = a;
        z
    };
    let c = f(&CVec::zeros(n));
    let sc = C64::from(s);
    let js = C64::new(0.0, s);
    let mut h = CMat::zeros(n, n);
    let mut g = CVec::zeros(n);
    for i in 0..n {
        let fp = f(&unit(i, sc));
        let fm = f(&unit(i, -sc));
        let fj = f(&unit(i, js));
        let fjm = f(&unit(i, -js));
        h[(i, i)] = C64::from((fp + fm - 2.0 * c) / (2.0 * s * s));
        g[i] = C64::new((fm - fp) / (4.0 * s), (fjm - fj) / (4.0 * s));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut z = unit(i, sc);
            z[j] = sc;
            let fr = f(&z) - c - s * s * (h[(i, i)].re + h[(j, j)].re) + 2.0 * s * (g[i].re + g[j].re);
            let mut z = unit(i, sc);
            z[j] = js;
            let fi = f(&z) - c - s * s * (h[(i, i)].re + h[(j, j)].re) + 2.0 * s * (g[i].re + g[j].im);
            let hij = C64::new(fr / (2.0 * s * s), -fi / (2.0 * s * s));
            h[(i, j)] = hij;
            h[(j, i)] = hij.conj();
        }
    }
    Quadratic { h, g, c }
}

/// `(I + sum mu_i H_i)^-1 (p + sum mu_i g_i)`, the minimizer of
/// `||z - p||^2 + sum mu_i q_i(z)`.
fn penalized_point(sets: &[Quadratic], mu: &[f64], p: &CVec) -> CVec {
    let n = p.len();
    let mut m = CMat::identity(n, n);
    let mut rhs = p.clone();
    for (q, &w) in sets.iter().zip(mu) {
        if w != 0.0 {
            m += &q.h * C64::from(w);
            rhs += &q.g * C64::from(w);
        }
    }
    m.lu().solve(&rhs).expect("identity plus PSD is invertible")
}

/// Sets multipliers `level..` given the outer ones, by nested bisection: each
/// multiplier is the smallest nonnegative value meeting its constraint once the
/// inner ones are re-optimized.
fn fit_multipliers(sets: &[Quadratic], mu: &mut Vec<f64>, level: usize, p: &CVec) -> CVec {
    if level == sets.len() {
        return penalized_point(sets, mu, p);
    }
    let eval = |w: f64, mu: &mut Vec<f64>| {
        mu[level] = w;
        for m in mu.iter_mut().skip(level + 1) {
            *m = 0.0;
        }
        let z = fit_multipliers(sets, mu, level + 1, p);
        (sets[level].eval(&z), z)
    };
    let (v0, z0) = eval(0.0, mu);
    if v0 <= 0.0 {
        return z0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    loop {
        let (v, _) = eval(hi, mu);
        if v <= 0.0 {
            break;
        }
        lo = hi;
        hi *= 4.0;
        assert!(hi < 1e300, "oracle: empty feasible set");
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        let (v, _) = eval(mid, mu);
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eval(hi, mu).1
}

/// Euclidean projection onto the intersection of the sublevel sets `q_i <= 0`.
fn project_all(sets: &[Quadratic], p: &CVec) -> CVec {
    let mut mu = vec![0.0; sets.len()];
    fit_multipliers(sets, &mut mu, 0, p)
}

/// Minimizer of `obj` over the intersection of `cons`, by FISTA on the
/// variable whitened with the objective Hessian.
pub fn projected_gradient(obj: &Quadratic, cons: &[Quadratic], iters: usize) -> CVec {
    let n = obj.g.len();
    let h = (&obj.h + obj.h.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.max().max(0.0);
    let floor = 1e-9 * top.max(f64::MIN_POSITIVE);
    let root: DVector<f64> = eig.eigenvalues.map(|v| v.max(floor).sqrt());
    let u = eig.eigenvectors;
    // z = T y with T = U diag(1/root)
    let t = CMat::from_fn(n, n, |i, j| u[(i, j)] / root[j]);
    let t_adj = t.adjoint();
    let tr = |q: &Quadratic| Quadratic {
        h: &t_adj * &q.h * &t,
        g: &t_adj * &q.g,
        c: q.c,
    };
    let wobj = tr(obj);
    let sets: Vec<Quadratic> = cons.iter().map(tr).collect();
    let lip = SymmetricEigen::new((&wobj.h + wobj.h.adjoint()) * C64::from(0.5))
        .eigenvalues
        .max()
        .max(f64::MIN_POSITIVE);
    let grad = |y: &CVec| &wobj.h * y - &wobj.g;
    let mut y = project_all(&sets, &CVec::zeros(n));
    let mut w = y.clone();
    let mut tk = 1.0f64;
    let mut best = (wobj.eval(&y), y.clone());
    for _ in 0..iters {
        let next = project_all(&sets, &(&w - grad(&w) * C64::from(1.0 / lip)));
        let val = wobj.eval(&next);
        if val < best.0 {
            best = (val, next.clone());
        }
        // restart when momentum overshoots
        if val > wobj.eval(&y) {
            if tk == 1.0 {
                break;
            }
            tk = 1.0;
            w = y.clone();
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        w = &next + (&next - &y) * C64::from((tk - 1.0) / tn);
        let step = (&next - &y).norm();
        y = next;
        tk = tn;
        if step <= 1e-15 * (1.0 + y.norm()) {
            break;
        }
    }
    &t * best.1
}

/// The six blocks checked against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    W,
    D,
    U,
    Rest,
    Phi1,
    Phi2,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::W, Block::D, Block::U, Block::Rest, Block::Phi1, Block::Phi2];

    pub fn name(self) -> &'static str {
        match self {
            Block::W => "w",
            Block::D => "d",
            Block::U => "u",
            Block::Rest => "v,y,e,t",
            Block::Phi1 => "phi1",
            Block::Phi2 => "phi2",
        }
    }
}

fn read(block: Block, st: &PddState, k: usize) -> CVec {
    match block {
        Block::W => CVec::from_iterator(
            st.sol.w.iter().map(|w| w.len()).sum(),
            st.sol.w.iter().flat_map(|w| w.iter().copied()),
        ),
        Block::D => st.sol.d[k].clone(),
        Block::U => CVec::from_element(1, st.u[k]),
        Block::Rest => {
            let mut out = vec![st.v[k], st.y[k]];
            out.extend(st.e[k].iter().copied());
            out.extend(st.t[k].iter().copied());
            CVec::from_vec(out)
        }
        Block::Phi1 => st.sol.phi1.clone(),
        Block::Phi2 => st.sol.phi2.clone(),
    }
}

fn write(block: Block, st: &mut PddState, k: usize, z: &CVec) {
    match block {
        Block::W => {
            let mut off = 0;
            for w in st.sol.w.iter_mut() {
                let n = w.len();
                *w = z.rows(off, n).into_owned();
                off += n;
            }
        }
        Block::D => st.sol.d[k] = z.clone(),
        Block::U => st.u[k] = z[0],
        Block::Rest => {
            let n1 = st.e[k].len();
            let n2 = st.t[k].len();
            st.v[k] = z[0];
            st.y[k] = z[1];
            st.e[k] = z.rows(2, n1).into_owned();
            st.t[k] = z.rows(2 + n1, n2).into_owned();
        }
        Block::Phi1 => st.sol.phi1 = z.clone(),
        Block::Phi2 => st.sol.phi2 = z.clone(),
    }
}

/// Constraint functions of `block`, each required to be nonpositive.
fn constraint_values(block: Block, inst: &Instance, st: &PddState) -> Vec<f64> {
    let prob = inst.prob();
    let cfg = &inst.cfg;
    match block {
        Block::W => vec![st.sol.w.iter().map(|w| w.norm_squared()).sum::<f64>() - cfg.p_r],
        Block::D | Block::U | Block::Rest => vec![st.ccp_excess(&prob, inst.k)],
        Block::Phi1 => vec![
            active_ris_power(&inst.ch, &st.sol.phi1, &st.sol.phi2, cfg, Ris::One) - cfg.p_1,
            active_ris_power(&inst.ch, &st.sol.phi1, &st.sol.phi2, cfg, Ris::Two) - cfg.p_2,
        ],
        Block::Phi2 => vec![active_ris_power(&inst.ch, &st.sol.phi1, &st.sol.phi2, cfg, Ris::Two) - cfg.p_2],
    }
}

/// Result of one oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    /// Block objective (Lagrangian minus its value at a zero block) after the closed form.
    pub closed: f64,
    pub oracle: f64,
    /// Largest constraint value at the closed-form point, relative to its scale.
    pub closed_excess: f64,
    /// Whether some constraint is active at the oracle optimum.
    pub active: bool,
}

impl OracleCheck {
    pub fn rel_gap(&self) -> f64 {
        (self.closed - self.oracle).abs() / self.oracle.abs().max(f64::MIN_POSITIVE)
    }
}

/// Runs the closed-form update of `block` on `inst` and the oracle on the same
/// subproblem. `None` when the closed form reports an infeasible block.
pub fn check_block(block: Block, inst: &Instance) -> Option<OracleCheck> {
    let prob = inst.prob();
    let k = inst.k;
    let z0 = read(block, &inst.state, k);
    let n = z0.len();
    let scale = (z0.norm() / (n as f64).sqrt()).max(1e-300);
    let at = |z: &CVec| {
        let mut st = inst.state.clone();
        write(block, &mut st, k, z);
        st
    };
    let al = |z: &CVec| al_objective(&at(z), &prob).unwrap();
    let cons_scale: Vec<f64> = match block {
        Block::W => vec![inst.cfg.p_r],
        Block::Phi1 => vec![inst.cfg.p_1, inst.cfg.p_2],
        Block::Phi2 => vec![inst.cfg.p_2],
        _ => vec![inst.state.u_anchor[k].norm_sqr()],
    };

    let mut st = inst.state.clone();
    let opts = BlockOptions::default();
    let eq = st.equivalent(&inst.ch);
    let ok = match block {
        Block::W => update_w(&mut st, &prob, &opts).is_ok(),
        Block::D => update_d(&mut st, &prob, k, &opts).is_ok(),
        Block::U => update_aux_u(&mut st, &prob, &eq, k).is_ok(),
        Block::Rest => update_aux_rest(&mut st, &prob, &eq, k, &opts).is_ok(),
        Block::Phi1 => update_theta1(&mut st, &prob, &opts).is_ok(),
        Block::Phi2 => update_theta2(&mut st, &prob, &opts).is_ok(),
    };
    if !ok {
        return None;
    }
    let obj = probe(n, scale, |dz| al(&(&z0 + dz)));
    let ncons = cons_scale.len();
    let cons: Vec<Quadratic> = (0..ncons)
        .map(|i| {
            probe(n, scale, |dz| {
                constraint_values(block, inst, &at(&(&z0 + dz)))[i] / cons_scale[i]
            })
        })
        .collect();
    let dz = projected_gradient(&obj, &cons, 20_000);
    let z_oracle = &z0 + &dz;

    let z_closed = read(block, &st, k);
    let zero = al(&CVec::zeros(n));
    let closed_excess = constraint_values(block, inst, &st)
        .iter()
        .zip(&cons_scale)
        .map(|(v, s)| v / s)
        .fold(f64::NEG_INFINITY, f64::max);
    let oracle_cons = constraint_values(block, inst, &at(&z_oracle));
    let active = oracle_cons.iter().zip(&cons_scale).any(|(v, s)| v / s > -1e-6);
    Some(OracleCheck {
        closed: al(&z_closed) - zero,
        oracle: al(&z_oracle) - zero,
        closed_excess,
        active,
    })
}

/// Oracle comparisons of `block` on the first `count` instances whose closed form
/// accepts the subproblem.
pub fn oracle_suite(block: Block, count: usize) -> Vec<OracleCheck> {
    let mut out = Vec::with_capacity(count);
    let mut seed = 0;
    while out.len() < count {
        seed += 1;
        assert!(
            seed < 20 * count as u64,
            "too many rejected instances for block {}",
            block.name()
        );
        if let Some(c) = check_block(block, &instance(seed)) {
            out.push(c);
        }
    }
    out
}
