//! Small numerical helpers shared by the estimators: a Nelder–Mead
//! simplex minimizer and a dense linear solver for normal equations.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Converged when the simplex's function spread drops below
    /// `ftol * |f_best|` or its diameter below `xtol`.
    pub ftol: f64,
    pub xtol: f64,
    /// Extra runs restarted from the previous optimum with a fresh simplex.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            ftol: 1e-11,
            xtol: 1e-8,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
}

/// Minimize `f` from `x0` with initial simplex edges `step`. NaN values are
/// treated as `+inf`, so the simplex simply moves away from them.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    for _ in 0..=opts.restarts {
        let budget = opts.max_evals.saturating_sub(evals);
        if budget == 0 {
            break;
        }
        let (x, fx) = simplex_run(&mut |x, e| eval(x, e), &best_x, best_f, step, opts, budget, &mut evals);
        let improved = fx < best_f;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        if !improved {
            break;
        }
    }
    Minimum {
        x: best_x,
        fx: best_f,
        evals,
    }
}

#[allow(clippy::too_many_arguments)]
fn simplex_run(
    eval: &mut dyn FnMut(&[f64], &mut usize) -> f64,
    x0: &[f64],
    f0: f64,
    step: &[f64],
    opts: &NelderMeadOptions,
    budget: usize,
    evals: &mut usize,
) -> (Vec<f64>, f64) {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;
    let n = x0.len();
    let start = *evals;
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if step[i] != 0.0 { step[i] } else { 1e-3 };
        vals.push(eval(&p, evals));
        pts.push(p);
    }
    let mut order: Vec<usize> = (0..=n).collect();
    while *evals - start < budget {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (ib, iw, isw) = (order[0], order[n], order[n.saturating_sub(1)]);
        let spread = (vals[iw] - vals[ib]).abs();
        let diameter = pts
            .iter()
            .map(|p| p.iter().zip(&pts[ib]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if vals[ib].is_finite() && (spread <= opts.ftol * (vals[ib].abs() + 1e-300) || diameter <= opts.xtol) {
            break;
        }
        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[iw]).map(|(c, w)| c + t * (w - c)).collect() };
        let xr = along(-ALPHA);
        let fr = eval(&xr, evals);
        if fr < vals[ib] {
            let xe = along(-ALPHA * GAMMA);
            let fe = eval(&xe, evals);
            if fe < fr {
                pts[iw] = xe;
                vals[iw] = fe;
            } else {
                pts[iw] = xr;
                vals[iw] = fr;
            }
        } else if fr < vals[isw] {
            pts[iw] = xr;
            vals[iw] = fr;
        } else {
            let (xc, fc) = if fr < vals[iw] {
                let xc = along(-ALPHA * RHO);
                let fc = eval(&xc, evals);
                (xc, fc)
            } else {
                let xc = along(RHO);
                let fc = eval(&xc, evals);
                (xc, fc)
            };
            if fc < vals[iw].min(fr) {
                pts[iw] = xc;
                vals[iw] = fc;
            } else {
                let best = pts[ib].clone();
                for i in 0..=n {
                    if i == ib {
                        continue;
                    }
                    for (p, b) in pts[i].iter_mut().zip(&best) {
                        *p = b + SIGMA * (*p - b);
                    }
                    vals[i] = eval(&pts[i], evals);
                }
            }
        }
    }
    let ib = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (pts[ib].clone(), vals[ib])
}

/// Solve `a x = b` (row-major `a`, n×n) by Gaussian elimination with partial
/// pivoting. `None` if the matrix is numerically singular.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..n).rev() {
        let s: f64 = b[row] - (row + 1..n).map(|k| a[row][k] * b[k]).sum::<f64>();
        b[row] = s / a[row][row];
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.1, 0.1], &NelderMeadOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn avoids_nan_region() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = nelder_mead(f, &[0.5], &[0.3], &NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn linear_solve() {
        let x = solve_linear(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve_linear(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]).is_none());
    }
}
