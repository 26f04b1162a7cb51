//! Dense Levenberg–Marquardt for small parameter counts.

pub(crate) trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Writes residuals into `r` and, when requested, the row-major
    /// `n_residuals × n_params` Jacobian into `jac`.
    fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    /// Relative step tolerance: stop once `‖Δp‖ ≤ tol·(‖p‖ + tol)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

const LAMBDA_MAX: f64 = 1e16;

pub(crate) fn minimize<P: LeastSquares>(problem: &P, p0: &[f64], opts: LmOptions) -> LmOutcome {
    let np = problem.n_params();
    let nr = problem.n_residuals();
    let mut p = p0.to_vec();
    let mut r = vec![0.0; nr];
    let mut jac = vec![0.0; nr * np];
    let mut r_trial = vec![0.0; nr];
    let mut trial = vec![0.0; np];

    problem.eval(&p, &mut r, Some(&mut jac));
    let mut cost = dot(&r, &r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    let mut h = vec![0.0; np * np];
    let mut g = vec![0.0; np];
    let mut a = vec![0.0; np * np];
    let mut step = vec![0.0; np];

    while iterations < opts.max_iterations {
        iterations += 1;
        normal_equations(&jac, &r, nr, np, &mut h, &mut g);
        if g.iter().all(|v| *v == 0.0) {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            a.copy_from_slice(&h);
            for j in 0..np {
                a[j * np + j] += lambda * h[j * np + j].max(1e-300);
            }
            for (s, gj) in step.iter_mut().zip(&g) {
                *s = -gj;
            }
            if !cholesky_solve(&mut a, &mut step, np) {
                lambda *= 10.0;
                continue;
            }
            for j in 0..np {
                trial[j] = p[j] + step[j];
            }
            problem.eval(&trial, &mut r_trial, None);
            let trial_cost = dot(&r_trial, &r_trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let reduction = cost - trial_cost;
                p.copy_from_slice(&trial);
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-15);
                accepted = true;
                let step_norm = norm(&step);
                if step_norm <= opts.tolerance * (norm(&p) + opts.tolerance) || reduction <= 1e-15 * cost {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction survives at any damping: the current point
            // is stationary to working precision.
            converged = true;
            break;
        }
        problem.eval(&p, &mut r, Some(&mut jac));
        if converged {
            break;
        }
    }

    LmOutcome {
        params: p,
        cost,
        iterations,
        converged,
    }
}

fn normal_equations(jac: &[f64], r: &[f64], nr: usize, np: usize, h: &mut [f64], g: &mut [f64]) {
    h.fill(0.0);
    g.fill(0.0);
    for i in 0..nr {
        let row = &jac[i * np..(i + 1) * np];
        for a in 0..np {
            let ja = row[a];
            if ja == 0.0 {
                continue;
            }
            g[a] += ja * r[i];
            for b in a..np {
                h[a * np + b] += ja * row[b];
            }
        }
    }
    for a in 0..np {
        for b in 0..a {
            h[a * np + b] = h[b * np + a];
        }
    }
}

/// Solves `A x = b` in place for symmetric positive definite `A`.
/// Returns `false` when `A` is not numerically positive definite.
pub(crate) fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for Exponential {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                r[i] = p[0] * (-p[1] * t).exp() - y;
            }
            if let Some(j) = jac {
                for (i, &t) in self.t.iter().enumerate() {
                    let e = (-p[1] * t).exp();
                    j[2 * i] = e;
                    j[2 * i + 1] = -p[0] * t * e;
                }
            }
        }
    }

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let out = minimize(
            &Exponential { t, y },
            &[1.0, 0.5],
            LmOptions {
                tolerance: 1e-12,
                max_iterations: 200,
            },
        );
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-9);
        assert!((out.params[1] - 1.3).abs() < 1e-9);
    }

    #[test]
    fn cholesky_detects_singular() {
        let mut a = vec![1.0, 1.0, 1.0, 1.0];
        let mut b = vec![1.0, 1.0];
        assert!(!cholesky_solve(&mut a, &mut b, 2));
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let mut b = vec![2.0, 1.0];
        assert!(cholesky_solve(&mut a, &mut b, 2));
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
    }
}
