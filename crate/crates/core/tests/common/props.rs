//! Property checks shared by the proptest suite and the acceptance run. Each
//! returns `Err` with a description of the first violation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcc_core::channel::{array_response, generate_channels, pathloss_db, rician_channel, ChannelSet, SceneConfig};
use rcc_core::config::RunConfig;
use rcc_core::experiment::{run_experiment, write_csv, ExperimentKind, ExperimentSpec, ResultRow};
use rcc_core::model::{achievable_rate, active_ris_power, comm_snr, radar_sinr, BeamformerSolution, Ris};
use rcc_core::par::Execution;
use rcc_core::passive::{mm_phi1_problem, mm_phi2_problem, passive_config, MmProblem};
use rcc_core::pdd::{
    al_objective, ccp_linearize, fp_optimal_x, fp_surrogate, initial_solution, pdd_solve, solve_two_constraint,
    theta1_subproblem, update_aux_rest, update_aux_u, update_d, update_theta1, update_theta2, update_w, update_x,
    BlockOptions, PddState, Problem, SolverOptions, Variant,
};
use rcc_core::scenarios::{build_scenario, element_overhead, power_allocation, Scheme, SchemeSpec};
use rcc_core::{CVec, C64};

use super::{cgauss, cgauss_vec, instance, small_config};

pub type Check = Result<(), String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn phases(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    CVec::from_fn(n, |_, _| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
}

fn random_solution(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> BeamformerSolution {
    BeamformerSolution {
        w: (0..cfg.k()).map(|_| cgauss_vec(cfg.m, rng)).collect(),
        d: (0..cfg.k()).map(|_| cgauss_vec(cfg.m, rng)).collect(),
        phi1: cgauss_vec(cfg.n1, rng) * C64::from(3.0),
        phi2: cgauss_vec(cfg.n2, rng) * C64::from(3.0),
    }
}

fn channels(seed: u64) -> (SceneConfig, ChannelSet) {
    let cfg = small_config();
    let ch = generate_channels(&cfg, seed).unwrap();
    (cfg, ch)
}

/// The surrogate at its optimal `x` is the negated SNR.
pub fn fp_identity(seed: u64) -> Check {
    let (cfg, ch) = channels(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sol = random_solution(&cfg, &mut rng);
    let x = fp_optimal_x(&ch, &sol.phi1, &sol.phi2, &cfg);
    let f = fp_surrogate(&ch, &sol.phi1, &sol.phi2, x, &cfg);
    let snr = comm_snr(&ch, &sol, &cfg);
    if rel(-f, snr) > 1e-8 {
        return Err(format!("seed {seed}: -f(x_opt) = {} but snr = {snr}", -f));
    }
    for _ in 0..8 {
        let other = x + cgauss(&mut rng) * x.norm();
        if fp_surrogate(&ch, &sol.phi1, &sol.phi2, other, &cfg) < f - 1e-8 * f.abs() {
            return Err(format!("seed {seed}: x_opt is not the minimizer"));
        }
    }
    Ok(())
}

/// `ccp_linearize(u, a) <= |u|^2` with equality at `u = a`.
pub fn ccp_minorant(seed: u64, samples: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..samples {
        let scale = 10f64.powf(rng.random_range(-6.0..6.0));
        let a = cgauss(&mut rng) * scale;
        let u = if i % 4 == 0 {
            a + cgauss(&mut rng) * (scale * 1e-6)
        } else {
            cgauss(&mut rng) * scale
        };
        let g = ccp_linearize(u, a);
        // |u|^2 - g = |u - a|^2 up to rounding of the three terms
        let round = 4.0 * f64::EPSILON * (u.norm_sqr() + a.norm_sqr());
        if g > u.norm_sqr() + round {
            return Err(format!("sample {i}: minorant {g} above |u|^2 = {}", u.norm_sqr()));
        }
        let at = ccp_linearize(a, a);
        if (at - a.norm_sqr()).abs() > 1e-12 * a.norm_sqr() {
            return Err(format!("sample {i}: value at anchor {at} vs {}", a.norm_sqr()));
        }
    }
    Ok(())
}

fn passive_state(seed: u64) -> (SceneConfig, ChannelSet, PddState) {
    let base = SceneConfig {
        n1: 5,
        n2: 4,
        ..small_config()
    };
    let cfg = passive_config(&base);
    let ch = generate_channels(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
    let sol = BeamformerSolution {
        w: (0..cfg.k()).map(|_| cgauss_vec(cfg.m, &mut rng)).collect(),
        d: (0..cfg.k()).map(|_| cgauss_vec(cfg.m, &mut rng)).collect(),
        phi1: phases(cfg.n1, &mut rng),
        phi2: phases(cfg.n2, &mut rng),
    };
    let mut st = {
        let prob = Problem::new(&ch, &cfg, Variant::Passive);
        PddState::from_solution(&prob, sol, 0.5).unwrap()
    };
    for k in 0..cfg.k() {
        let mag = st.v[k].norm();
        st.v[k] += cgauss(&mut rng) * mag;
        st.lam2[k] = cgauss(&mut rng) * st.v[k].norm();
    }
    (cfg, ch, st)
}

fn mm_problems(seed: u64) -> Vec<(MmProblem, CVec)> {
    let (cfg, ch, st) = passive_state(seed);
    let prob = Problem::new(&ch, &cfg, Variant::Passive);
    vec![
        (mm_phi1_problem(&st, &prob), st.sol.phi1.clone()),
        (mm_phi2_problem(&st, &prob), st.sol.phi2.clone()),
    ]
}

/// Every MM step keeps unit modulus and does not lower the objective; the
/// quadratic minorant lies below `phi^H Xi phi` and touches it at the anchor.
pub fn mm_properties(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for (idx, (mm, start)) in mm_problems(seed).into_iter().enumerate() {
        let n = start.len();
        let tol = 1e-9;
        let lmin = mm.lambda_min();
        let quad = |p: &CVec| p.dotc(&(&mm.xi * p)).re;
        let minorant = |p: &CVec, at: &CVec| {
            let shifted = &mm.xi * at - at * C64::from(lmin);
            2.0 * p.dotc(&shifted).re - at.dotc(&shifted).re + lmin * n as f64
        };
        let mut phi = start;
        for step in 0..30 {
            for _ in 0..4 {
                let p = phases(n, &mut rng);
                if quad(&p) < minorant(&p, &phi) - tol {
                    return Err(format!("surface {idx} step {step}: minorant above quadratic"));
                }
            }
            if (quad(&phi) - minorant(&phi, &phi)).abs() > tol {
                return Err(format!("surface {idx} step {step}: minorant not tight at anchor"));
            }
            let next = mm.step(&phi, lmin);
            if next.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
                return Err(format!("surface {idx} step {step}: entry off the unit circle"));
            }
            let (a, b) = (mm.objective(&phi), mm.objective(&next));
            if b < a - tol {
                return Err(format!("surface {idx} step {step}: objective fell from {a} to {b}"));
            }
            phi = next;
        }
    }
    Ok(())
}

/// MM on a five-element surface reaches within 2% of the best 12-level
/// quantized phase vector.
pub fn mm_near_exhaustive(seed: u64) -> Check {
    let (mm, start) = mm_problems(seed).swap_remove(0);
    let n = start.len();
    let (phi, _) = mm.maximize(&start, 500, 1e-12);
    let mm_val = mm.objective(&phi);
    let levels: Vec<C64> = (0..12)
        .map(|i| C64::from_polar(1.0, 2.0 * PI * i as f64 / 12.0))
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let p = CVec::from_fn(n, |i, _| levels[idx[i]]);
        best = best.max(mm.objective(&p));
        let mut pos = 0;
        while pos < n {
            idx[pos] += 1;
            if idx[pos] < 12 {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }
    if mm_val < best - 0.02 * best.abs() {
        return Err(format!("seed {seed}: MM {mm_val} vs grid best {best}"));
    }
    Ok(())
}

/// Solves a small scene and returns its trace data.
fn small_solve(seed: u64) -> rcc_core::pdd::Solved {
    let cfg = SceneConfig {
        eta: 10.0,
        ..small_config()
    };
    let ch = generate_channels(&cfg, seed).unwrap();
    let opts = SolverOptions {
        init_seed: seed,
        ..SolverOptions::default()
    };
    pdd_solve(&ch, &cfg, &opts).unwrap()
}

/// The augmented Lagrangian does not rise within any inner loop.
pub fn inner_monotone(seed: u64) -> Check {
    let out = small_solve(seed);
    for (outer, seq) in out.trace.inner_objective.iter().enumerate() {
        for (i, pair) in seq.windows(2).enumerate() {
            if pair[1] > pair[0] + 1e-6 {
                return Err(format!(
                    "seed {seed} outer {} pass {i}: {} -> {} (+{:.3e})",
                    outer + 1,
                    pair[0],
                    pair[1],
                    pair[1] - pair[0]
                ));
            }
        }
    }
    Ok(())
}

/// No block update raises the augmented Lagrangian along one inner pass
/// started from a converged iterate's neighbourhood.
pub fn block_descent(seed: u64) -> Check {
    let cfg = SceneConfig {
        eta: 10.0,
        ..small_config()
    };
    let ch = generate_channels(&cfg, seed).unwrap();
    let prob = Problem::new(&ch, &cfg, Variant::Active);
    let opts = SolverOptions {
        init_seed: seed,
        ..SolverOptions::default()
    };
    let bo = BlockOptions::default();
    let mut st = PddState::from_solution(&prob, initial_solution(&prob, &opts), 1.0).unwrap();
    for pass in 0..6 {
        st.u_anchor = st.u.clone();
        let mut prev = al_objective(&st, &prob).unwrap();
        let after = |name: &str, st: &PddState, prev: &mut f64| -> Check {
            let now = al_objective(st, &prob).unwrap();
            if now > *prev + 1e-6 {
                return Err(format!("seed {seed} pass {pass} block {name}: {} -> {now}", *prev));
            }
            *prev = now;
            Ok(())
        };
        update_w(&mut st, &prob, &bo).map_err(|e| e.to_string())?;
        after("w", &st, &mut prev)?;
        for k in 0..st.k() {
            if update_d(&mut st, &prob, k, &bo).is_ok() {
                after("d", &st, &mut prev)?;
            }
        }
        update_x(&mut st, &prob);
        after("x", &st, &mut prev)?;
        let eq = st.equivalent(&ch);
        for k in 0..st.k() {
            if update_aux_u(&mut st, &prob, &eq, k).is_ok() {
                after("u", &st, &mut prev)?;
            }
            if update_aux_rest(&mut st, &prob, &eq, k, &bo).is_ok() {
                after("v,y,e,t", &st, &mut prev)?;
            }
        }
        if update_theta1(&mut st, &prob, &bo).is_ok() {
            after("phi1", &st, &mut prev)?;
        }
        if update_theta2(&mut st, &prob, &bo).is_ok() {
            after("phi2", &st, &mut prev)?;
        }
    }
    Ok(())
}

/// Penalty and multiplier updates follow the violation-threshold rule.
pub fn dual_schedule(seed: u64) -> Check {
    let out = small_solve(seed);
    let o = SolverOptions::default();
    let (mut rho, mut sigma) = (o.rho0, o.sigma0);
    for row in &out.trace.rows {
        if row.violation <= sigma {
            sigma *= o.sigma_decay;
        } else {
            rho *= o.c;
        }
        if (row.rho - rho).abs() > 1e-15 * rho {
            return Err(format!(
                "seed {seed} iteration {}: rho {} expected {rho}",
                row.iter, row.rho
            ));
        }
    }
    Ok(())
}

/// Scaling a receive filter leaves its SINR unchanged.
pub fn sinr_scale_invariant(seed: u64, c: C64) -> Check {
    let (cfg, ch) = channels(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sol = random_solution(&cfg, &mut rng);
    for k in 0..cfg.k() {
        let base = radar_sinr(&ch, &sol, &cfg, k).map_err(|e| e.to_string())?;
        let mut scaled = sol.clone();
        scaled.d[k] *= c;
        let s = radar_sinr(&ch, &scaled, &cfg, k).map_err(|e| e.to_string())?;
        if rel(s, base) > 1e-10 {
            return Err(format!("seed {seed} k {k} c {c}: {base} vs {s}"));
        }
    }
    Ok(())
}

/// Mean squared Frobenius norm of Rician draws equals `rows * cols`.
pub fn rician_power(beta: f64, seed: u64, draws: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = (4, 3);
    let aoa = rng.random_range(-1.5..1.5);
    let aod = rng.random_range(-1.5..1.5);
    let mean = (0..draws)
        .map(|_| rician_channel(rows, cols, beta, aoa, aod, 0.5, &mut rng).norm_squared())
        .sum::<f64>()
        / draws as f64;
    let want = (rows * cols) as f64;
    if rel(mean, want) > 0.05 {
        return Err(format!("beta {beta}: mean power {mean}, expected {want}"));
    }
    Ok(())
}

/// Every budget multiplier is zero unless its constraint is tight.
pub fn complementary_slackness(seed: u64) -> Check {
    let inst = instance(seed);
    let prob = inst.prob();
    let cfg = &inst.cfg;
    let bo = BlockOptions::default();
    let k = inst.k;
    let budget_ccp = inst.state.u_anchor[k].norm_sqr();
    let check = |name: &str, mu: f64, value: f64, budget: f64| -> Check {
        if (mu * value).abs() > 1e-5 * budget {
            return Err(format!("seed {seed} {name}: multiplier {mu} times value {value}"));
        }
        Ok(())
    };

    let mut st = inst.state.clone();
    if let Ok(mu) = update_w(&mut st, &prob, &bo) {
        let used: f64 = st.sol.w.iter().map(|w| w.norm_squared()).sum();
        check("w", mu, used - cfg.p_r, cfg.p_r)?;
    }
    let mut st = inst.state.clone();
    if let Ok(mu) = update_d(&mut st, &prob, k, &bo) {
        check("d", mu, st.ccp_excess(&prob, k), budget_ccp)?;
    }
    let mut st = inst.state.clone();
    let eq = st.equivalent(&inst.ch);
    if let Ok(mu) = update_aux_rest(&mut st, &prob, &eq, k, &bo) {
        check("v,y,e,t", mu, st.ccp_excess(&prob, k), budget_ccp)?;
    }
    let st = inst.state.clone();
    if let Ok(sp) = theta1_subproblem(&st, &prob) {
        if let Ok((x, kappa)) = solve_two_constraint(&sp, &bo) {
            for (i, (q, c)) in sp.constraints.iter().enumerate() {
                let value = x.dotc(&(q * &x)).re - c;
                check(&format!("phi1 cap {i}"), kappa[i], value, *c)?;
            }
        }
    }
    let mut st = inst.state.clone();
    if let Ok(mu) = update_theta2(&mut st, &prob, &bo) {
        let used = active_ris_power(&inst.ch, &st.sol.phi1, &st.sol.phi2, cfg, Ris::Two);
        check("phi2", mu, used - cfg.p_2, cfg.p_2)?;
    }
    Ok(())
}

/// Radar, transmit and surface shares plus element overheads add up to the total.
pub fn budget_conservation(scheme: Scheme, q_total: f64, gamma: f64, n1: usize, n2: usize) -> Check {
    let spec = SchemeSpec {
        scheme,
        q_total,
        gamma,
        ..SchemeSpec::default()
    };
    let Ok(b) = power_allocation(&spec, n1, n2) else {
        return Ok(());
    };
    let total = b.p_r + b.p_t + b.p_1 + b.p_2 + element_overhead(&spec, n1, n2);
    if (total - q_total).abs() > 1e-12 {
        return Err(format!("{scheme} Q={q_total} gamma={gamma}: shares add to {total}"));
    }
    if [b.p_r, b.p_t, b.p_1, b.p_2].iter().any(|&p| p < 0.0) {
        return Err(format!("{scheme}: negative share {b:?}"));
    }
    Ok(())
}

fn small_spec(sweep: Vec<f64>) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ExperimentKind::Power, &RunConfig::default());
    spec.base = small_config();
    spec.sweep = sweep;
    spec.seeds = vec![1, 2];
    spec
}

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let rows: Vec<_> = rows.iter().map(ResultRow::without_timing).collect();
    let mut out = Vec::new();
    write_csv(&rows, &mut out).unwrap();
    out
}

/// Two runs of one spec, parallel and sequential, give byte-identical CSV.
pub fn deterministic_runs() -> Check {
    let spec = small_spec(vec![9.0, 11.0]);
    let a = csv_bytes(&run_experiment(&spec, Execution::parallel()).map_err(|e| e.to_string())?);
    let b = csv_bytes(&run_experiment(&spec, Execution::parallel()).map_err(|e| e.to_string())?);
    let c = csv_bytes(&run_experiment(&spec, Execution::Sequential).map_err(|e| e.to_string())?);
    if a != b || a != c {
        return Err("reruns of one spec differ".into());
    }
    Ok(())
}

/// Dropping one sweep value leaves the remaining rows unchanged.
pub fn sweep_isolation() -> Check {
    let full = run_experiment(&small_spec(vec![9.0, 11.0]), Execution::parallel()).map_err(|e| e.to_string())?;
    let part = run_experiment(&small_spec(vec![11.0]), Execution::parallel()).map_err(|e| e.to_string())?;
    let kept: Vec<_> = full
        .iter()
        .filter(|r| r.sweep == 11.0)
        .map(ResultRow::without_timing)
        .collect();
    let part: Vec<_> = part.iter().map(ResultRow::without_timing).collect();
    if kept != part {
        return Err("rows of the kept sweep value changed".into());
    }
    Ok(())
}

pub fn steering_unit_modulus(theta: f64, n: usize) -> Check {
    let a = array_response(theta, n, 0.5);
    match a.iter().position(|z| (z.norm() - 1.0).abs() > 1e-12) {
        Some(i) => Err(format!("theta {theta}: entry {i} has modulus {}", a[i].norm())),
        None => Ok(()),
    }
}

pub fn pathloss_anchor(alpha: f64, pl0: f64, d0: f64) -> Check {
    let v = pathloss_db(d0, alpha, pl0, d0).map_err(|e| e.to_string())?;
    if v != pl0 {
        return Err(format!("alpha {alpha}: {v} != {pl0}"));
    }
    Ok(())
}

pub fn channel_reproducible(seed: u64) -> Check {
    let cfg = small_config();
    let a = generate_channels(&cfg, seed).map_err(|e| e.to_string())?;
    let b = generate_channels(&cfg, seed).map_err(|e| e.to_string())?;
    if a != b {
        return Err(format!("seed {seed}: channels differ"));
    }
    Ok(())
}

pub fn rate_increasing(a: f64, b: f64) -> Check {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == hi {
        return Ok(());
    }
    let (rl, rh) = (achievable_rate(lo).unwrap(), achievable_rate(hi).unwrap());
    if rl >= rh {
        return Err(format!("rate({lo}) = {rl} >= rate({hi}) = {rh}"));
    }
    Ok(())
}

/// Surface powers are nonnegative and vanish when both reflections are zero.
pub fn ris_power_sign(seed: u64) -> Check {
    let (cfg, ch) = channels(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sol = random_solution(&cfg, &mut rng);
    for which in [Ris::One, Ris::Two] {
        let p = active_ris_power(&ch, &sol.phi1, &sol.phi2, &cfg, which);
        if !(p >= 0.0) {
            return Err(format!("seed {seed}: power {p}"));
        }
        let z = active_ris_power(&ch, &CVec::zeros(cfg.n1), &CVec::zeros(cfg.n2), &cfg, which);
        if z != 0.0 {
            return Err(format!("seed {seed}: power {z} at zero reflections"));
        }
    }
    Ok(())
}

pub fn masking_idempotent(seed: u64) -> Check {
    let (_, ch) = channels(seed);
    for scheme in Scheme::ALL {
        let once = build_scenario(scheme, &ch);
        if build_scenario(scheme, &once) != once {
            return Err(format!("{scheme}: masking twice differs from once"));
        }
    }
    Ok(())
}
