//! ℓ1-penalized logistic regression.
//!
//! Maximizes `(1/M) Σ log p(y_m | x_m; w, c) - β ‖w‖₁` with a Bernoulli
//! likelihood and logistic link. The bias `c` is not penalized. The solver is
//! proximal gradient descent on the negated objective: a gradient step on the
//! smooth part, soft-thresholding for the ℓ1 part, Barzilai–Borwein trial
//! steps and backtracking until the quadratic upper bound holds and the
//! objective does not get worse. Iterates are exactly sparse.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{logit, sigmoid, softplus, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSettings {
    pub max_iter: usize,
    /// Stop when the norm of the proximal gradient map falls below this.
    pub tol: f64,
    pub initial_step: f64,
    pub backtrack: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-6,
            initial_step: 1.0,
            backtrack: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel<T> {
    pub weights: Array1<T>,
    pub bias: T,
    pub beta: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> LassoModel<T> {
    pub fn linear_predictor(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::dim(format!(
                "inputs have {} features, model has {}",
                x.ncols(),
                self.weights.len()
            )));
        }
        Ok(x.dot(&self.weights) + self.bias)
    }

    /// `p(y = 1 | x)` per row.
    pub fn predict_proba(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        Ok(self.linear_predictor(x)?.mapv(sigmoid))
    }

    /// Number of exactly nonzero weights.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|w| **w != T::zero()).count()
    }
}

#[inline]
fn soft_threshold<T: Scalar>(x: T, t: T) -> T {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        T::zero()
    }
}

struct Problem<'a, T> {
    x: ArrayView2<'a, T>,
    y: Array1<T>,
    beta: T,
    inv_m: T,
}

impl<T: Scalar> Problem<'_, T> {
    /// Mean negative log-likelihood.
    fn smooth(&self, w: &Array1<T>, c: T) -> T {
        let z = self.x.dot(w) + c;
        z.iter()
            .zip(self.y.iter())
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum::<T>()
            * self.inv_m
    }

    fn gradient(&self, w: &Array1<T>, c: T) -> (Array1<T>, T) {
        let mut r = self.x.dot(w) + c;
        r.zip_mut_with(&self.y, |r, &y| *r = sigmoid(*r) - y);
        let gw = self.x.t().dot(&r) * self.inv_m;
        let gc = r.sum() * self.inv_m;
        (gw, gc)
    }

    fn penalty(&self, w: &Array1<T>) -> T {
        self.beta * w.iter().map(|v| v.abs()).sum::<T>()
    }
}

/// Fits the model; see [`fit_lasso_traced`] for the objective history.
pub fn fit_lasso<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: &[u32],
    beta: f64,
    settings: &LassoSettings,
) -> Result<LassoModel<T>> {
    fit_lasso_traced(x, y, beta, settings).map(|(m, _)| m)
}

/// Fits the model and returns the penalized log-likelihood after every
/// accepted iterate (the first entry is the starting point `w = 0`).
pub fn fit_lasso_traced<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: &[u32],
    beta: f64,
    settings: &LassoSettings,
) -> Result<(LassoModel<T>, Vec<f64>)> {
    let (m, d) = x.dim();
    if m == 0 || d == 0 {
        return Err(Error::dim("lasso needs a non-empty design matrix"));
    }
    if y.len() != m {
        return Err(Error::dim(format!("{} labels for {m} rows", y.len())));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be non-negative, got {beta}")));
    }
    if let Some(bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::Range(format!("label {bad} is not binary")));
    }
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == m {
        return Err(Error::Degenerate("lasso needs both classes among the labels".into()));
    }

    let problem = Problem {
        x,
        y: y.iter().map(|&l| T::cast(l as f64)).collect(),
        beta: T::cast(beta),
        inv_m: T::one() / T::cast(m as f64),
    };
    let mut w = Array1::<T>::zeros(d);
    let mut c = logit(T::cast(positives as f64 / m as f64));
    let mut f = problem.smooth(&w, c);
    let mut objective = f + problem.penalty(&w);
    let mut history = vec![-objective.widen()];
    let (mut gw, mut gc) = problem.gradient(&w, c);

    let tol = T::cast(settings.tol);
    let shrink = T::cast(settings.backtrack);
    let mut step = T::cast(settings.initial_step);
    let min_step = T::cast(1e-18);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iter {
        iterations += 1;
        let mut t = step;
        let accepted = loop {
            let w_new = (&w - &(&gw * t)).mapv(|v| soft_threshold(v, t * problem.beta));
            let c_new = c - t * gc;
            let dw = &w_new - &w;
            let dc = c_new - c;
            let dist2 = dw.dot(&dw) + dc * dc;
            let f_new = problem.smooth(&w_new, c_new);
            if !f_new.is_finite() {
                return Err(Error::Numeric("lasso objective became non-finite".into()));
            }
            let bound = f + gw.dot(&dw) + gc * dc + dist2 / (T::cast(2.0) * t);
            let obj_new = f_new + problem.penalty(&w_new);
            if f_new <= bound && obj_new <= objective {
                break Some((w_new, c_new, f_new, obj_new, dw, dc, dist2, t));
            }
            t *= shrink;
            if t < min_step {
                break None;
            }
        };
        let Some((w_new, c_new, f_new, obj_new, dw, dc, dist2, t)) = accepted else {
            // No step improves the objective within working precision.
            converged = true;
            break;
        };
        let map_norm = dist2.sqrt() / t;
        let (gw_new, gc_new) = problem.gradient(&w_new, c_new);

        // Barzilai–Borwein guess for the next trial step.
        let dgw = &gw_new - &gw;
        let dgc = gc_new - gc;
        let curvature = dw.dot(&dgw) + dc * dgc;
        step = if curvature > T::zero() {
            (dist2 / curvature).max(T::cast(1e-10)).min(T::cast(1e10))
        } else {
            t
        };

        w = w_new;
        c = c_new;
        f = f_new;
        objective = obj_new;
        gw = gw_new;
        gc = gc_new;
        history.push(-objective.widen());

        if map_norm <= tol {
            converged = true;
            break;
        }
    }

    Ok((
        LassoModel {
            weights: w,
            bias: c,
            beta,
            converged,
            iterations,
        },
        history,
    ))
}

/// The maximized quantity `(1/M) Σ log p(y|x) - β‖w‖₁` at a given point.
pub fn lasso_objective<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: &[u32],
    weights: ArrayView1<'_, T>,
    bias: T,
    beta: f64,
) -> f64 {
    let z = x.dot(&weights) + bias;
    let ll: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &l)| {
            let z = z.widen();
            l as f64 * z - softplus(z)
        })
        .sum::<f64>()
        / y.len() as f64;
    ll - beta * weights.iter().map(|w| w.abs().widen()).sum::<f64>()
}
