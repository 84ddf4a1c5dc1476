//! Stationary solutions of `0 = G(x) - B x + F` with diagonal positive `B`.
//!
//! Solutions are reached by homotopy in the forcing, starting from `x = 0` at zero forcing.
//! Any solution satisfies `|B^{1/2} x| <= |B^{-1/2} F|` because `x . G(x) = 0`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmap::GMap;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
pub const MIN_STEP: f64 = 1e-6;
/// Spectral abscissae closer to zero than this are reported as indeterminate.
pub const BORDERLINE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProblem {
    advection: GMap,
    beta: Vec<f64>,
    forcing: Vec<f64>,
}

impl StationaryProblem {
    pub fn new(advection: GMap, beta: Vec<f64>, forcing: Vec<f64>) -> Result<Self> {
        if beta.len() != forcing.len() {
            return Err(Error::LengthMismatch { expected: beta.len(), got: forcing.len() });
        }
        advection.check_sites(beta.len())?;
        if beta.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidArgument("beta must be positive at every site".into()));
        }
        if forcing.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite forcing".into()));
        }
        Ok(StationaryProblem { advection, beta, forcing })
    }

    /// `B = I`.
    pub fn unit_dissipation(advection: GMap, forcing: Vec<f64>) -> Result<Self> {
        let n = forcing.len();
        Self::new(advection, vec![1.0; n], forcing)
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }

    pub fn advection(&self) -> &GMap {
        &self.advection
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    /// `G(x) - B x + t F`.
    pub fn residual(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut r = vec![0.0; self.n()];
        self.advection.evaluate_into(x, &mut r);
        for i in 0..self.n() {
            r[i] += t * self.forcing[i] - self.beta[i] * x[i];
        }
        r
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut j = self.advection.linearize_at(x)?;
        for i in 0..self.n() {
            j[(i, i)] -= self.beta[i];
        }
        Ok(j)
    }

    /// `|B^{1/2} x|`, the left side of the a-priori bound.
    pub fn weighted_norm(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.beta).map(|(v, b)| b * v * v).sum::<f64>().sqrt()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|B^{-1/2} F|`.
pub fn apriori_bound(prob: &StationaryProblem) -> f64 {
    prob.forcing.iter().zip(&prob.beta).map(|(f, b)| f * f / b).sum::<f64>().sqrt()
}

fn within_bound(prob: &StationaryProblem, x: &[f64], t: f64) -> bool {
    let bound = t * apriori_bound(prob);
    prob.weighted_norm(x) <= bound * (1.0 + 1e-10) + 1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Residual norm before each iteration and after the last.
    pub history: Vec<f64>,
}

/// Newton iteration for `G(x) - B x + t F = 0`.
pub fn newton_at(prob: &StationaryProblem, t: f64, x_init: &[f64], tol: f64, max_iter: usize) -> Result<NewtonResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if x_init.len() != prob.n() {
        return Err(Error::LengthMismatch { expected: prob.n(), got: x_init.len() });
    }
    let mut x = x_init.to_vec();
    let mut r = prob.residual(&x, t);
    let mut res = norm(&r);
    let mut history = vec![res];
    let mut it = 0;
    while res > tol {
        if it == max_iter || !res.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        let j = prob.jacobian(&x)?;
        let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let dx = j.lu().solve(&rhs).ok_or(Error::SingularJacobian { iterations: it, residual: res })?;
        x.iter_mut().zip(dx.iter()).for_each(|(a, d)| *a += d);
        r = prob.residual(&x, t);
        res = norm(&r);
        history.push(res);
        it += 1;
    }
    Ok(NewtonResult { x, iterations: it, residual: res, history })
}

pub fn newton(prob: &StationaryProblem, x_init: &[f64], tol: f64, max_iter: usize) -> Result<NewtonResult> {
    newton_at(prob, 1.0, x_init, tol, max_iter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    /// Last accepted homotopy parameter.
    pub t: f64,
    /// Step that could not be taken.
    pub step: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationPath {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub failure: Option<PathFailure>,
}

impl ContinuationPath {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.t.last() == Some(&1.0)
    }

    pub fn solution(&self) -> &[f64] {
        self.x.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Continuation in `t` on a uniform grid of `steps` intervals, halving the step on failure.
pub fn homotopy_solve(prob: &StationaryProblem, steps: usize, newton_tol: f64) -> Result<ContinuationPath> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one homotopy step".into()));
    }
    let n = prob.n();
    let delta = 1.0 / steps as f64;
    let mut path = ContinuationPath {
        t: vec![0.0],
        x: vec![vec![0.0; n]],
        residuals: vec![0.0],
        iterations: vec![0],
        failure: None,
    };
    let mut t = 0.0;
    let mut h = delta;
    while t < 1.0 {
        let t_next = if t + h > 1.0 - 1e-12 { 1.0 } else { t + h };
        let k = path.x.len();
        // secant predictor from the last two accepted points
        let guess: Vec<f64> = if k >= 2 {
            let s = (t_next - t) / (path.t[k - 1] - path.t[k - 2]);
            path.x[k - 1].iter().zip(&path.x[k - 2]).map(|(a, b)| a + s * (a - b)).collect()
        } else {
            path.x[k - 1].clone()
        };
        let attempt = newton_at(prob, t_next, &guess, newton_tol, NEWTON_MAX_ITER)
            .or_else(|_| newton_at(prob, t_next, &path.x[k - 1], newton_tol, NEWTON_MAX_ITER));
        let outcome = match attempt {
            Ok(r) if within_bound(prob, &r.x, t_next) => Ok(r),
            Ok(_) => Err("a-priori bound violated".to_string()),
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok(r) => {
                t = t_next;
                path.t.push(t);
                path.x.push(r.x);
                path.residuals.push(r.residual);
                path.iterations.push(r.iterations);
                h = (2.0 * h).min(delta);
            }
            Err(reason) => {
                h *= 0.5;
                if h < MIN_STEP {
                    path.failure = Some(PathFailure { t, step: h * 2.0, reason });
                    break;
                }
            }
        }
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub abscissa: f64,
    pub stability: Stability,
}

/// Largest real part of the spectrum of `DG(x*) - B`.
pub fn local_stability(prob: &StationaryProblem, x_star: &[f64]) -> Result<StabilityReport> {
    if x_star.len() != prob.n() {
        return Err(Error::LengthMismatch { expected: prob.n(), got: x_star.len() });
    }
    let eig = prob.jacobian(x_star)?.complex_eigenvalues();
    let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let stability = if abscissa.abs() < BORDERLINE {
        Stability::Indeterminate
    } else if abscissa < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    Ok(StabilityReport { abscissa, stability })
}

/// Rows `i,F,x`.
pub fn write_stationary_csv<W: Write>(w: W, forcing: &[f64], x: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["i", "F", "x"])?;
    for (i, (f, v)) in forcing.iter().zip(x).enumerate() {
        wr.write_record([i.to_string(), f.to_string(), v.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Forcing `1` on the first half of the sites and `m` on the second half.
pub fn step_forcing(n: usize, m: f64) -> Vec<f64> {
    (0..n).map(|i| if i < n / 2 { 1.0 } else { m }).collect()
}
