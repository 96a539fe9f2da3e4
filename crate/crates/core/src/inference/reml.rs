//! Profiled REML for the single-random-intercept model.
//!
//! With `y = Xb + Z u + e`, `u ~ N(0, s2_b I)`, `e ~ N(0, s2_e I)` and
//! `lambda = s2_b / s2_e`, the marginal covariance is
//! `s2_e * W` with `W = I + lambda Z Z'`. Profiling out `b` and `s2_e`
//! leaves a one-dimensional criterion in `lambda`:
//!
//! ```text
//! f(lambda) = log|W| + log|X' W^-1 X| + (n - p) * ln(r' W^-1 r)
//! ```
//!
//! Because Z is a group-indicator matrix, `W` is block diagonal and every
//! quantity reduces to grouped sums: with `c_g = lambda / (1 + lambda n_g)`,
//!
//! ```text
//! X' W^-1 X = X'X - sum_g c_g S_g S_g'      (S_g = column sums of X in g)
//! X' W^-1 y = X'y - sum_g c_g t_g S_g       (t_g = sum of y in g)
//! y' W^-1 y = y'y - sum_g c_g t_g^2
//! log|W|    = sum_g log(1 + lambda n_g)
//! ```
//!
//! so one evaluation costs O(n p + q p^2), independent of matrix size n.
//! The criterion is minimized over `ln(lambda)` in `[-18, 18]` by a coarse
//! scan followed by golden-section refinement to 1e-8; hitting a bound is
//! reported (lower bound means the random intercept vanishes).

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::Design;
use super::InferenceError;

pub const LOG_LAMBDA_MIN: f64 = -18.0;
pub const LOG_LAMBDA_MAX: f64 = 18.0;
const COARSE_POINTS: usize = 513;
const GOLDEN_TOL: f64 = 1e-8;

/// Precomputed sufficient statistics for the profile criterion.
pub struct RemlWorkspace {
    pub n: usize,
    pub p: usize,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    /// Per group: (n_g, S_g, t_g).
    groups: Vec<(f64, DVector<f64>, f64)>,
}

/// One profile evaluation at a fixed lambda.
pub struct ProfilePoint {
    pub objective: f64,
    pub beta: DVector<f64>,
    /// `r' W^-1 r`, clamped at zero.
    pub quad: f64,
    /// Cholesky factor of `X' W^-1 X` for covariance extraction.
    pub xtwx_chol: Cholesky<f64, nalgebra::Dyn>,
}

impl RemlWorkspace {
    pub fn new(design: &Design) -> Self {
        let x = &design.x;
        let y = &design.y;
        let n = x.nrows();
        let p = x.ncols();
        let q = design.group_levels.len();

        let xtx = x.transpose() * x;
        let xty = x.transpose() * y;
        let yty = y.dot(y);

        let mut counts = vec![0.0f64; q];
        let mut sums = vec![DVector::<f64>::zeros(p); q];
        let mut ysums = vec![0.0f64; q];
        for i in 0..n {
            let g = design.group_index[i];
            counts[g] += 1.0;
            for j in 0..p {
                sums[g][j] += x[(i, j)];
            }
            ysums[g] += y[i];
        }
        let groups = counts
            .into_iter()
            .zip(sums)
            .zip(ysums)
            .map(|((n_g, s_g), t_g)| (n_g, s_g, t_g))
            .collect();

        Self {
            n,
            p,
            xtx,
            xty,
            yty,
            groups,
        }
    }

    /// Evaluate the profile criterion and GLS solution at `lambda`.
    pub fn profile(&self, lambda: f64) -> Result<ProfilePoint, InferenceError> {
        let mut a = self.xtx.clone();
        let mut b = self.xty.clone();
        let mut ywy = self.yty;
        let mut log_det_w = 0.0;
        for (n_g, s_g, t_g) in &self.groups {
            let c_g = lambda / (1.0 + lambda * n_g);
            a.ger(-c_g, s_g, s_g, 1.0);
            b.axpy(-c_g * t_g, s_g, 1.0);
            ywy -= c_g * t_g * t_g;
            log_det_w += (lambda * n_g).ln_1p();
        }

        let chol = Cholesky::new(a).ok_or_else(|| {
            InferenceError::Convergence(format!(
                "X'W^-1X not positive definite at lambda = {lambda:e}"
            ))
        })?;
        let beta = chol.solve(&b);
        let quad = (ywy - b.dot(&beta)).max(0.0);
        let log_det_a = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let df = (self.n - self.p) as f64;
        let objective = log_det_w + log_det_a + df * quad.max(1e-300).ln();
        Ok(ProfilePoint {
            objective,
            beta,
            quad,
            xtwx_chol: chol,
        })
    }

    /// Random-intercept BLUPs at `lambda` for residual sums built from
    /// `beta`.
    pub fn blups(&self, lambda: f64, beta: &DVector<f64>) -> Vec<f64> {
        self.groups
            .iter()
            .map(|(n_g, s_g, t_g)| {
                let resid_sum = t_g - s_g.dot(beta);
                lambda * resid_sum / (1.0 + lambda * n_g)
            })
            .collect()
    }
}

/// Where the optimizer ended relative to the search interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryHit {
    /// `lambda` at the lower bound: the random-intercept variance is
    /// effectively zero.
    Lower,
    /// `lambda` at the upper bound: the random intercept dominates the
    /// residual.
    Upper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub lambda: f64,
    pub log_lambda: f64,
    pub objective: f64,
    pub evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryHit>,
}

/// Minimize the profile criterion over `ln(lambda)` in the search interval.
pub fn minimize_profile(
    workspace: &RemlWorkspace,
) -> Result<(Convergence, ProfilePoint), InferenceError> {
    let mut evaluations = 0usize;
    let mut eval = |u: f64| -> (f64, f64) {
        evaluations += 1;
        let lambda = u.exp();
        let objective = workspace
            .profile(lambda)
            .map(|point| point.objective)
            .unwrap_or(f64::INFINITY);
        (lambda, objective)
    };

    let step = (LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / (COARSE_POINTS - 1) as f64;
    let mut best_index = 0usize;
    let mut best_value = f64::INFINITY;
    let mut coarse = Vec::with_capacity(COARSE_POINTS);
    for i in 0..COARSE_POINTS {
        let u = LOG_LAMBDA_MIN + step * i as f64;
        let (_, value) = eval(u);
        coarse.push(value);
        if value < best_value {
            best_value = value;
            best_index = i;
        }
    }
    if !best_value.is_finite() {
        return Err(InferenceError::Convergence(
            "REML criterion not finite anywhere on the search interval".into(),
        ));
    }

    let mut best_u = LOG_LAMBDA_MIN + step * best_index as f64;
    let mut boundary = None;
    if best_index == 0 {
        boundary = Some(BoundaryHit::Lower);
    } else if best_index == COARSE_POINTS - 1 {
        boundary = Some(BoundaryHit::Upper);
    } else {
        // golden-section refinement inside the bracketing cells
        let invphi = (5.0_f64.sqrt() - 1.0) / 2.0;
        let mut lo = best_u - step;
        let mut hi = best_u + step;
        let mut c = hi - invphi * (hi - lo);
        let mut d = lo + invphi * (hi - lo);
        let (_, mut fc) = eval(c);
        let (_, mut fd) = eval(d);
        while hi - lo > GOLDEN_TOL {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - invphi * (hi - lo);
                let (_, value) = eval(c);
                fc = value;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + invphi * (hi - lo);
                let (_, value) = eval(d);
                fd = value;
            }
        }
        let refined = 0.5 * (lo + hi);
        let (_, refined_value) = eval(refined);
        // keep the better of coarse scan and refinement
        if refined_value <= best_value {
            best_u = refined;
        }
    }

    let lambda = best_u.exp();
    let point = workspace.profile(lambda)?;
    Ok((
        Convergence {
            lambda,
            log_lambda: best_u,
            objective: point.objective,
            evaluations,
            boundary,
        },
        point,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::design::{build_design, ModelSpec};
    use crate::table::{Column, ObservationTable};
    use rand::{Rng, SeedableRng};

    fn synthetic_table(seed: u64, n_groups: usize, per_group: usize, sigma_b: f64) -> ObservationTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut g = Vec::new();
        for group in 0..n_groups {
            let intercept: f64 = rng.random_range(-1.0..1.0) * sigma_b;
            for _ in 0..per_group {
                let covariate: f64 = rng.random_range(-1.0..1.0);
                // Box-Muller noise keeps this free of extra dependencies
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let noise = (-2.0 * u1.ln()).sqrt() * u2.cos();
                y.push(0.5 + 0.8 * covariate + intercept + 0.3 * noise);
                x.push(covariate);
                g.push(format!("g{group}"));
            }
        }
        let mut table = ObservationTable::new();
        table.push_column("y", Column::Numeric(y)).unwrap();
        table.push_column("x", Column::Numeric(x)).unwrap();
        table.push_column("g", Column::Categorical(g)).unwrap();
        table
    }

    #[test]
    fn profile_matches_dense_linear_algebra() {
        let table = synthetic_table(11, 5, 8, 0.7);
        let spec = ModelSpec::covariate("y", "x", "g");
        let design = build_design(&table, &spec).unwrap();
        let workspace = RemlWorkspace::new(&design);

        for lambda in [1e-6, 0.1, 1.0, 7.3, 1e4] {
            let point = workspace.profile(lambda).unwrap();

            // dense route: W = I + lambda Z Z'
            let n = design.x.nrows();
            let mut w = DMatrix::<f64>::identity(n, n);
            for i in 0..n {
                for j in 0..n {
                    if design.group_index[i] == design.group_index[j] {
                        w[(i, j)] += lambda;
                    }
                }
            }
            let w_inv = w.clone().try_inverse().unwrap();
            let xtwx = design.x.transpose() * &w_inv * &design.x;
            let xtwy = design.x.transpose() * &w_inv * &design.y;
            let beta = xtwx.clone().try_inverse().unwrap() * &xtwy;
            let r = &design.y - &design.x * &beta;
            let quad = (&r.transpose() * &w_inv * &r)[(0, 0)];
            let objective = w.determinant().ln()
                + xtwx.determinant().ln()
                + (n - design.x.ncols()) as f64 * quad.ln();

            assert!((point.objective - objective).abs() < 1e-6 * objective.abs().max(1.0));
            for j in 0..design.x.ncols() {
                assert!((point.beta[j] - beta[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn minimize_finds_interior_optimum_on_clustered_data() {
        let table = synthetic_table(5, 8, 10, 1.5);
        let spec = ModelSpec::covariate("y", "x", "g");
        let design = build_design(&table, &spec).unwrap();
        let workspace = RemlWorkspace::new(&design);
        let (convergence, _) = minimize_profile(&workspace).unwrap();
        assert!(convergence.boundary.is_none());
        // the optimum beats a fine grid up to tolerance
        for i in 0..2000 {
            let u = LOG_LAMBDA_MIN + (LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) * i as f64 / 1999.0;
            let value = workspace.profile(u.exp()).unwrap().objective;
            assert!(convergence.objective <= value + 1e-9);
        }
    }
}
