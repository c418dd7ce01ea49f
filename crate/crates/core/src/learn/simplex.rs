//! Box-constrained Nelder–Mead minimizer.
//!
//! Vertices are projected onto the box whenever they are generated, and a
//! non-finite objective value is treated as `+∞`.

/// The search stops when the objective spread across the simplex is at most
/// `f_tol`, or when every vertex lies within `x_tol` (max-norm) of the best.
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_evals: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-4,
            x_tol: 1e-3,
            max_evals: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` starting from `x0` with an axis-aligned initial simplex of
/// edge `step`, keeping every vertex inside `[lower, upper]`.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    step: f64,
    lower: &[f64],
    upper: &[f64],
    opts: &SimplexOptions,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bounds must match the dimension");
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut n_evals = 0usize;
    let mut eval = |x: &[f64], n_evals: &mut usize| {
        *n_evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut n_evals);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        v[i] += step;
        if v[i] > upper[i] {
            v[i] = start[i] - step;
        }
        clamp(&mut v);
        let fv = eval(&v, &mut n_evals);
        simplex.push((v, fv));
    }

    let mut converged = false;
    while n_evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let f_spread = if best.is_finite() { worst - best } else { f64::INFINITY };
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread <= opts.f_tol || x_spread <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect();
            clamp(&mut p);
            p
        };

        let xr = along(-REFLECT);
        let fr = eval(&xr, &mut n_evals);
        if fr < simplex[0].1 {
            let xe = along(-EXPAND);
            let fe = eval(&xe, &mut n_evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(-CONTRACT * REFLECT);
            let fc = eval(&xc, &mut n_evals);
            (xc, fc)
        } else {
            let xc = along(CONTRACT);
            let fc = eval(&xc, &mut n_evals);
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for i in 0..n {
                v[i] = best_x[i] + SHRINK * (v[i] - best_x[i]);
            }
            clamp(v);
            *fv = eval(v, &mut n_evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    SimplexResult {
        x,
        f,
        n_evals,
        converged,
    }
}
