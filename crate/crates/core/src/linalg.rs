//! Hermitian kernels shared by the block updates: regularized solves, shifted
//! eigen-solves under a norm budget, multiplier bisection and the deep-cut
//! ellipsoid method.

use nalgebra::{DVector, SymmetricEigen};

use crate::{CMat, CVec, Error, Result, C64};

/// Relative tolerance used when checking that a matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-8;

/// `(X + X^H) / 2`.
pub fn hermitian_part(x: &CMat) -> CMat {
    (x + x.adjoint()) * C64::from(0.5)
}

/// Largest entry of `|X - X^H|`, relative to the largest entry of `|X|`.
pub fn hermitian_defect(x: &CMat) -> f64 {
    let scale = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let diff = x - x.adjoint();
    diff.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

pub fn ensure_hermitian(x: &CMat, what: &str) -> Result<()> {
    if !x.is_square() {
        return Err(Error::domain(format!(
            "{what}: matrix is {}x{}, not square",
            x.nrows(),
            x.ncols()
        )));
    }
    let defect = hermitian_defect(x);
    if defect > HERMITIAN_TOL {
        return Err(Error::domain(format!(
            "{what}: not Hermitian (relative defect {defect:.3e})"
        )));
    }
    Ok(())
}

/// `x^H H x - 2 Re(b^H x)`.
pub fn quad_value(h: &CMat, b: &CVec, x: &CVec) -> f64 {
    x.dotc(&(h * x)).re - 2.0 * b.dotc(x).re
}

/// Outcome of [`solve_regularized_hpd`].
#[derive(Debug, Clone)]
pub struct HpdSolve {
    pub x: CVec,
    /// Ridge added to the diagonal, zero when the plain factorization succeeded.
    pub ridge: f64,
}

/// Minimizer of `x^H H x - 2 Re(b^H x)` for Hermitian positive semidefinite `H`.
///
/// A singular `H` gets a ridge of `1e-10 * trace(H) / dim` on the diagonal.
pub fn solve_regularized_hpd(h: &CMat, b: &CVec) -> Result<HpdSolve> {
    ensure_hermitian(h, "solve_regularized_hpd")?;
    if h.nrows() != b.len() {
        return Err(Error::domain(format!(
            "solve_regularized_hpd: {}x{} system with length-{} rhs",
            h.nrows(),
            h.ncols(),
            b.len()
        )));
    }
    solve_hermitian(&hermitian_part(h), b)
}

/// [`solve_regularized_hpd`] for a matrix already known to be Hermitian.
pub(crate) fn solve_hermitian(h: &CMat, b: &CVec) -> Result<HpdSolve> {
    if let Some(ch) = h.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let hi = diag.iter().map(|z| z.re).fold(0.0, f64::max);
        let lo = diag.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if lo > 1e-7 * hi {
            let x = ch.solve(b);
            if x.iter().all(|z| z.is_finite()) {
                return Ok(HpdSolve { x, ridge: 0.0 });
            }
        }
    }
    let n = h.nrows().max(1) as f64;
    let mut ridge = 1e-10 * h.trace().re.abs() / n;
    if ridge == 0.0 {
        ridge = 1e-300;
    }
    for _ in 0..8 {
        let mut reg = h.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += C64::from(ridge);
        }
        if let Some(ch) = reg.cholesky() {
            return Ok(HpdSolve { x: ch.solve(b), ridge });
        }
        ridge *= 100.0;
    }
    Err(Error::numerical(
        "solve_regularized_hpd",
        format!("factorization failed even with ridge {ridge:.3e}; matrix is not PSD"),
    ))
}

struct EigenBlock {
    vectors: CMat,
    values: DVector<f64>,
    coef: CVec,
}

/// Family of problems `min sum_k x_k^H H_k x_k - 2 Re(b_k^H x_k)` subject to the
/// shared budget `sum_k ||x_k||^2 <= budget`, solved as `x_k = (H_k + mu I)^-1 b_k`
/// through one eigendecomposition per block.
pub struct ShiftedQuadratic {
    blocks: Vec<EigenBlock>,
    lambda_max: f64,
}

/// Solution of a [`ShiftedQuadratic`] under a budget.
#[derive(Debug, Clone)]
pub struct BudgetSolution {
    pub x: Vec<CVec>,
    pub mu: f64,
}

impl ShiftedQuadratic {
    pub fn new(blocks: &[(CMat, CVec)]) -> Result<Self> {
        let mut out = Vec::with_capacity(blocks.len());
        let mut lambda_max: f64 = 0.0;
        for (h, b) in blocks {
            ensure_hermitian(h, "ShiftedQuadratic")?;
            if h.nrows() != b.len() {
                return Err(Error::domain("ShiftedQuadratic: block dimension mismatch"));
            }
            let eig = SymmetricEigen::new(hermitian_part(h));
            let values = eig.eigenvalues.map(|v| v.max(0.0));
            lambda_max = lambda_max.max(values.max());
            let coef = eig.eigenvectors.adjoint() * b;
            out.push(EigenBlock {
                vectors: eig.eigenvectors,
                values,
                coef,
            });
        }
        Ok(Self {
            blocks: out,
            lambda_max,
        })
    }

    /// Natural scale of the multiplier.
    pub fn scale(&self) -> f64 {
        if self.lambda_max > 0.0 {
            self.lambda_max
        } else {
            1.0
        }
    }

    fn null_threshold(&self) -> f64 {
        1e-12 * self.lambda_max
    }

    /// `sum_k ||x_k(mu)||^2`; infinite at `mu = 0` when some `b_k` leaves the range of `H_k`.
    pub fn norm_sq(&self, mu: f64) -> f64 {
        let thr = self.null_threshold();
        let mut acc = 0.0;
        for blk in &self.blocks {
            let cnorm = blk.coef.norm();
            for (lam, c) in blk.values.iter().zip(blk.coef.iter()) {
                let den = lam + mu;
                if den <= thr {
                    if c.norm() > 1e-9 * cnorm {
                        return f64::INFINITY;
                    }
                    continue;
                }
                acc += c.norm_sqr() / (den * den);
            }
        }
        acc
    }

    /// `x_k(mu)`, using the pseudo-inverse on null directions.
    pub fn solution(&self, mu: f64) -> Vec<CVec> {
        let thr = self.null_threshold();
        self.blocks
            .iter()
            .map(|blk| {
                let scaled = CVec::from_iterator(
                    blk.coef.len(),
                    blk.values.iter().zip(blk.coef.iter()).map(|(lam, c)| {
                        let den = lam + mu;
                        if den <= thr {
                            C64::from(0.0)
                        } else {
                            c / den
                        }
                    }),
                );
                &blk.vectors * scaled
            })
            .collect()
    }

    /// Smallest `mu >= 0` with `sum ||x_k(mu)||^2 <= budget`.
    pub fn solve_with_budget(&self, budget: f64, cap: usize) -> Result<BudgetSolution> {
        if !(budget > 0.0) {
            return Err(Error::domain(format!("budget must be positive, got {budget}")));
        }
        let scale = self.scale();
        let t = bisect_multiplier(|t| self.norm_sq(t * scale) - budget, cap)?;
        let mu = t * scale;
        Ok(BudgetSolution {
            x: self.solution(mu),
            mu,
        })
    }
}

/// Smallest `t >= 0` with `excess(t) <= 0`, for `excess` nonincreasing in `t`.
///
/// The upper end doubles from 1 until it is feasible, then the bracket is
/// halved until `ub - lb <= 1e-8 (1 + ub)`. The feasible end is returned.
pub fn bisect_multiplier<F: FnMut(f64) -> f64>(mut excess: F, cap: usize) -> Result<f64> {
    if excess(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let mut lb = 0.0;
    let mut ub = 1.0;
    let mut steps = 0;
    while !(excess(ub) <= 0.0) {
        lb = ub;
        ub *= 2.0;
        steps += 1;
        if steps >= cap || !ub.is_finite() {
            return Err(Error::numerical(
                "bisect_multiplier",
                format!("no feasible upper bound after {steps} doublings (ub={ub:.3e})"),
            ));
        }
    }
    while ub - lb > 1e-8 * (1.0 + ub) {
        let mid = 0.5 * (lb + ub);
        if excess(mid) <= 0.0 {
            ub = mid;
        } else {
            lb = mid;
        }
        steps += 1;
        if steps >= cap {
            return Ok(ub);
        }
    }
    Ok(illinois(&mut excess, lb, ub, 60))
}

/// Regula falsi with the Illinois weight halving inside `[lb, ub]`, where
/// `excess(lb) > 0 >= excess(ub)`. Returns the feasible end.
fn illinois<F: FnMut(f64) -> f64>(excess: &mut F, mut lb: f64, mut ub: f64, iters: usize) -> f64 {
    let (mut fl, mut fu) = (excess(lb), excess(ub));
    if !(fl > 0.0 && fu <= 0.0) || !fl.is_finite() {
        return ub;
    }
    let mut side = 0i8;
    for _ in 0..iters {
        if fu == 0.0 || ub - lb <= 4.0 * f64::EPSILON * ub {
            break;
        }
        let mut t = ub - fu * (ub - lb) / (fu - fl);
        if !(t > lb && t < ub) {
            t = 0.5 * (lb + ub);
            if !(t > lb && t < ub) {
                break;
            }
        }
        let ft = excess(t);
        if ft <= 0.0 {
            ub = t;
            fu = ft;
            if side == -1 {
                fl *= 0.5;
            }
            side = -1;
        } else {
            lb = t;
            fl = ft;
            if side == 1 {
                fu *= 0.5;
            }
            side = 1;
        }
    }
    ub
}

/// Options for [`ellipsoid_solve`].
#[derive(Debug, Clone)]
pub struct EllipsoidOptions {
    pub center: Vec<f64>,
    pub radius: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct EllipsoidResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes a convex function over the nonnegative orthant in one or two
/// dimensions with deep-cut ellipsoid steps.
///
/// `oracle` returns the value and a subgradient. Points with a negative
/// coordinate get a feasibility cut instead of an oracle call. Stops when the
/// ellipsoid width along the last subgradient falls below `tol * |best|`.
pub fn ellipsoid_solve<F>(mut oracle: F, opts: &EllipsoidOptions) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = opts.center.len();
    if !(n == 1 || n == 2) {
        return Err(Error::domain(format!(
            "ellipsoid_solve supports 1 or 2 dimensions, got {n}"
        )));
    }
    if !(opts.radius > 0.0) {
        return Err(Error::domain("ellipsoid radius must be positive"));
    }
    if n == 1 {
        return interval_solve(oracle, opts);
    }

    let nf = n as f64;
    let mut x = opts.center.clone();
    let mut shape = [[opts.radius * opts.radius, 0.0], [0.0, opts.radius * opts.radius]];
    let mut best: Option<(Vec<f64>, f64)> = None;

    for it in 1..=opts.max_iter {
        let (g, beta, objective_cut) = match (0..n).find(|&i| x[i] < 0.0) {
            Some(i) => {
                // the clipped center is still a useful candidate
                let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
                let (f, _) = oracle(&clipped);
                if best.as_ref().is_none_or(|(_, fb)| f < *fb) {
                    best = Some((clipped, f));
                }
                let mut g = vec![0.0; n];
                g[i] = -1.0;
                (g, -x[i], false)
            }
            None => {
                let (f, g) = oracle(&x);
                if best.as_ref().is_none_or(|(_, fb)| f < *fb) {
                    best = Some((x.clone(), f));
                }
                let fb = best.as_ref().map(|b| b.1).unwrap_or(f);
                (g, f - fb, true)
            }
        };

        let sg = [
            shape[0][0] * g[0] + shape[0][1] * g[1],
            shape[1][0] * g[0] + shape[1][1] * g[1],
        ];
        let width_sq = g[0] * sg[0] + g[1] * sg[1];
        if !(width_sq > 0.0) || !width_sq.is_finite() {
            // zero subgradient at a feasible center is optimal; otherwise the
            // ellipsoid has collapsed to rounding level
            break;
        }
        let width = width_sq.sqrt();
        let fb = best.as_ref().map(|b| b.1.abs()).unwrap_or(f64::INFINITY);
        if objective_cut && width <= opts.tol * fb.max(f64::MIN_POSITIVE) {
            let (bx, bv) = best.unwrap();
            return Ok(EllipsoidResult {
                x: bx,
                value: bv,
                iterations: it,
            });
        }
        let alpha = beta / width;
        if alpha >= 1.0 {
            break;
        }
        let step = (1.0 + nf * alpha) / (nf + 1.0);
        let gt = [sg[0] / width, sg[1] / width];
        x[0] -= step * gt[0];
        x[1] -= step * gt[1];
        let a = nf * nf * (1.0 - alpha * alpha) / (nf * nf - 1.0);
        let b = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
        for r in 0..2 {
            for c in 0..2 {
                shape[r][c] = a * (shape[r][c] - b * gt[r] * gt[c]);
            }
        }
        let off = 0.5 * (shape[0][1] + shape[1][0]);
        shape[0][1] = off;
        shape[1][0] = off;
        if shape[0][0] + shape[1][1] <= 1e-30 * (1.0 + x[0] * x[0] + x[1] * x[1]) {
            break;
        }
    }
    match best {
        Some((bx, bv)) => Ok(EllipsoidResult {
            x: bx,
            value: bv,
            iterations: opts.max_iter,
        }),
        None => Err(Error::numerical(
            "ellipsoid_solve",
            format!("no feasible center visited in {} iterations", opts.max_iter),
        )),
    }
}

fn interval_solve<F>(mut oracle: F, opts: &EllipsoidOptions) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut lo = (opts.center[0] - opts.radius).max(0.0);
    let mut hi = opts.center[0] + opts.radius;
    let mut best: Option<(f64, f64)> = None;
    let record = |x: f64, f: f64, best: &mut Option<(f64, f64)>| {
        if best.is_none_or(|(_, fb)| f < fb) {
            *best = Some((x, f));
        }
    };
    let (f_lo, g_lo) = oracle(&[lo]);
    record(lo, f_lo, &mut best);
    if g_lo[0] >= 0.0 {
        return Ok(EllipsoidResult {
            x: vec![lo],
            value: f_lo,
            iterations: 1,
        });
    }
    for it in 2..=opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let (f, g) = oracle(&[mid]);
        record(mid, f, &mut best);
        if g[0] > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        let fb = best.unwrap().1;
        if (hi - lo) * g[0].abs() <= opts.tol * fb.abs().max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            let (bx, bv) = best.unwrap();
            return Ok(EllipsoidResult {
                x: vec![bx],
                value: bv,
                iterations: it,
            });
        }
    }
    let (bx, bv) = best.unwrap();
    Ok(EllipsoidResult {
        x: vec![bx],
        value: bv,
        iterations: opts.max_iter,
    })
}
