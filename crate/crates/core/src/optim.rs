//! Local minimizers: derivative-free simplex search (Nelder-Mead) and a
//! box-constrained Levenberg-Marquardt for least-squares refinement.
//!
//! The simplex uses the dimension-adaptive coefficients of Gao and Han, which behave
//! better than the textbook values beyond a handful of parameters. After the
//! simplex collapses the search is restarted around the best vertex until a
//! restart no longer improves the minimum.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop when the spread of simplex values falls below `f_tolerance * (1 + |f_best|)`.
    pub f_tolerance: f64,
    /// ... and every vertex is within `x_tolerance` (in step units) of the best one.
    pub x_tolerance: f64,
    pub max_restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_iterations: 2000, f_tolerance: 1e-8, x_tolerance: 1e-6, max_restarts: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<const N: usize> {
    pub x: [f64; N],
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimize `f` from `x0`; `steps` sets the initial simplex edge per coordinate.
pub fn nelder_mead<const N: usize, F>(mut f: F, x0: [f64; N], steps: [f64; N], opts: &NelderMeadOptions) -> Minimum<N>
where
    F: FnMut(&[f64; N]) -> f64,
{
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64; N]| {
        evaluations += 1;
        sanitize(f(x))
    };
    let mut best_x = x0;
    let mut best_f = eval(&x0);
    let mut iterations = 0usize;
    let mut converged = false;

    for _ in 0..=opts.max_restarts {
        let (x, fx, iters, conv) = run_simplex(&mut eval, best_x, best_f, &steps, opts);
        iterations += iters;
        let improved = fx < best_f - opts.f_tolerance * (1.0 + best_f.abs());
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = conv;
        if !improved {
            break;
        }
    }
    Minimum { x: best_x, f: best_f, iterations, evaluations, converged }
}

fn run_simplex<const N: usize>(
    eval: &mut impl FnMut(&[f64; N]) -> f64,
    x0: [f64; N],
    f0: f64,
    steps: &[f64; N],
    opts: &NelderMeadOptions,
) -> ([f64; N], f64, usize, bool) {
    let n = N as f64;
    let alpha = 1.0;
    let gamma = 1.0 + 2.0 / n;
    let rho = 0.75 - 1.0 / (2.0 * n);
    let shrink = 1.0 - 1.0 / n;

    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((x0, f0));
    for i in 0..N {
        let mut x = x0;
        x[i] += steps[i];
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let mut iter = 0;
    let mut converged = false;
    while iter < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[N].1;
        let spread_ok = (f_worst - f_best).abs() <= opts.f_tolerance * (1.0 + f_best.abs());
        let size_ok = simplex[1..].iter().all(|(x, _)| {
            x.iter()
                .zip(&simplex[0].0)
                .zip(steps)
                .all(|((a, b), s)| (a - b).abs() <= opts.x_tolerance * s.abs().max(f64::MIN_POSITIVE))
        });
        if spread_ok && size_ok {
            converged = true;
            break;
        }
        iter += 1;

        let mut centroid = [0.0; N];
        for (x, _) in &simplex[..N] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n;
            }
        }
        let worst = simplex[N].0;
        let along = |t: f64| {
            let mut p = [0.0; N];
            for i in 0..N {
                p[i] = centroid[i] + t * (worst[i] - centroid[i]);
            }
            p
        };

        let xr = along(-alpha);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-alpha * gamma);
            let fe = eval(&xe);
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[N].1 {
            let xc = along(-alpha * rho);
            (xc, eval(&xc))
        } else {
            let xc = along(rho);
            (xc, eval(&xc))
        };
        if fc < simplex[N].1.min(fr) {
            simplex[N] = (xc, fc);
            continue;
        }
        let best = simplex[0].0;
        for (x, fx) in simplex.iter_mut().skip(1) {
            for i in 0..N {
                x[i] = best[i] + shrink * (x[i] - best[i]);
            }
            *fx = eval(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex[0];
    (x, fx, iter, converged)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub rel_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 100, rel_tolerance: 1e-12, initial_damping: 1e-3 }
    }
}

/// Minimize `|r(x)|^2` for `x` in the box `[lower, upper]`. Steps leaving the
/// box are clipped to it. `r` returning `None` marks an infeasible point.
pub fn levenberg_marquardt<const N: usize, F>(
    mut r: F,
    x0: [f64; N],
    lower: [f64; N],
    upper: [f64; N],
    opts: &LmOptions,
) -> Minimum<N>
where
    F: FnMut(&[f64; N]) -> Option<Vec<f64>>,
{
    let clip = |x: &mut [f64; N]| {
        for i in 0..N {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let cost = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>();
    let mut evaluations = 0usize;
    let mut x = x0;
    clip(&mut x);
    evaluations += 1;
    let Some(mut res) = r(&x).filter(|v| v.iter().all(|e| e.is_finite())) else {
        return Minimum { x, f: f64::INFINITY, iterations: 0, evaluations, converged: false };
    };
    let mut f = cost(&res);
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let m = res.len();
        let mut jac = DMatrix::<f64>::zeros(m, N);
        for k in 0..N {
            let mut h = 1e-7 * (1.0 + x[k].abs());
            if x[k] + h > upper[k] {
                h = -h;
            }
            let mut xk = x;
            xk[k] += h;
            evaluations += 1;
            match r(&xk) {
                Some(rk) if rk.len() == m && rk.iter().all(|e| e.is_finite()) => {
                    for i in 0..m {
                        jac[(i, k)] = (rk[i] - res[i]) / h;
                    }
                }
                _ => continue,
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&res);
        loop {
            let mut a = jtj.clone();
            for k in 0..N {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break 'outer;
                }
                continue;
            };
            let mut xn = x;
            for k in 0..N {
                xn[k] += step[k];
            }
            clip(&mut xn);
            if xn == x {
                converged = true;
                break 'outer;
            }
            evaluations += 1;
            match r(&xn).filter(|v| v.iter().all(|e| e.is_finite())) {
                Some(rn) if cost(&rn) < f => {
                    let fn_ = cost(&rn);
                    let small = f - fn_ <= opts.rel_tolerance * f;
                    x = xn;
                    res = rn;
                    f = fn_;
                    lambda = (lambda / 3.0).max(1e-12);
                    if small {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    if lambda > 1e12 {
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    Minimum { x, f, iterations, evaluations, converged }
}
