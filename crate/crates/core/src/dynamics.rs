//! Time integration of `x' = alpha . G(x) - beta . x + gamma(t)` and its inviscid limit.
//!
//! Two integrators are provided: classical fixed-step RK4 and the Dormand-Prince 5(4)
//! pair with PI step-size control and the standard fourth-order dense output.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmap::{self, GMap};

/// Largest admissible state component before an integration is aborted.
pub const BLOW_UP: f64 = 1e12;

pub trait OdeSystem {
    fn dim(&self) -> usize;
    /// Writes the vector field at `(t, x)` into `dx`.
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

pub type ForcingFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Forcing {
    Constant(Vec<f64>),
    Varying(ForcingFn),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Forcing::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    n: usize,
    advection: GMap,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Forcing,
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: v.len() });
    }
    Ok(())
}

impl SystemSpec {
    /// Site-dependent system. `beta` must be all positive, or all zero for the inviscid case.
    pub fn new(advection: GMap, alpha: Vec<f64>, beta: Vec<f64>, gamma: Forcing) -> Result<Self> {
        let n = alpha.len();
        if n < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 sites, got {n}")));
        }
        check_len(&beta, n)?;
        if let Forcing::Constant(g) = &gamma {
            check_len(g, n)?;
        }
        let all_zero = beta.iter().all(|&b| b == 0.0);
        if !all_zero && beta.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::InvalidArgument("dissipation beta must be positive at every site".into()));
        }
        if alpha.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite system parameter".into()));
        }
        Ok(SystemSpec { n, advection, alpha, beta, gamma })
    }

    /// `x' = G(x) - x + F e`.
    pub fn homogeneous(advection: GMap, n: usize, f: f64) -> Result<Self> {
        Self::new(advection, vec![1.0; n], vec![1.0; n], Forcing::Constant(vec![f; n]))
    }

    /// Advection only: `x' = G(x)`.
    pub fn inviscid(advection: GMap, n: usize) -> Result<Self> {
        Self::new(advection, vec![1.0; n], vec![0.0; n], Forcing::Constant(vec![0.0; n]))
    }

    pub fn l96(n: usize, f: f64) -> Result<Self> {
        Self::homogeneous(gmap::g3(), n, f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn advection(&self) -> &GMap {
        &self.advection
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> &Forcing {
        &self.gamma
    }

    pub fn is_inviscid(&self) -> bool {
        self.beta.iter().all(|&b| b == 0.0)
            && matches!(&self.gamma, Forcing::Constant(g) if g.iter().all(|&v| v == 0.0))
    }

    /// True for the standard form `alpha = beta = 1`.
    pub fn is_standard_form(&self) -> bool {
        self.alpha.iter().chain(&self.beta).all(|&v| v == 1.0)
    }

    /// Uniform forcing value, when the forcing is constant and the same at every site.
    pub fn uniform_forcing(&self) -> Option<f64> {
        match &self.gamma {
            Forcing::Constant(g) if g.iter().all(|&v| v == g[0]) => Some(g[0]),
            _ => None,
        }
    }

    pub fn with_forcing(&self, gamma: Forcing) -> Result<Self> {
        Self::new(self.advection.clone(), self.alpha.clone(), self.beta.clone(), gamma)
    }

    pub fn rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.n)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        let mut dx = vec![0.0; self.n];
        self.eval(t, x, &mut dx);
        Ok(dx)
    }
}

impl OdeSystem for SystemSpec {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        self.advection.evaluate_into(x, dx);
        for i in 0..self.n {
            dx[i] = self.alpha[i] * dx[i] - self.beta[i] * x[i];
        }
        match &self.gamma {
            Forcing::Constant(g) => dx.iter_mut().zip(g).for_each(|(d, g)| *d += g),
            Forcing::Varying(f) => {
                let mut g = vec![0.0; self.n];
                f(t, &mut g);
                dx.iter_mut().zip(&g).for_each(|(d, g)| *d += g);
            }
        }
    }
}

/// Autonomous system given by a closure, for small auxiliary ODEs.
pub struct FnSystem<F: Fn(f64, &[f64], &mut [f64])> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, dx)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub solver: String,
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: SolverMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    /// Header `t,x0,...,x{N-1}`, one row per output time.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.n()).map(|i| format!("x{i}")));
        wr.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Trajectory> {
        let mut rd = csv::Reader::from_reader(r);
        let mut times = Vec::new();
        let mut states = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number '{s}': {e}"))))
                .collect::<Result<_>>()?;
            times.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        Ok(Trajectory { times, states, meta: SolverMeta { solver: "csv".into(), steps: 0, rejected: 0 } })
    }
}

fn guard(t: f64, x: &[f64]) -> Result<()> {
    let mut norm = 0.0f64;
    for &v in x {
        if !v.is_finite() {
            return Err(Error::NonFinite { t });
        }
        norm = norm.max(v.abs());
    }
    if norm > BLOW_UP {
        return Err(Error::BlowUp { t, norm });
    }
    Ok(())
}

fn axpy(out: &mut [f64], x: &[f64], terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut v = x[i];
        for (c, k) in terms {
            v += c * k[i];
        }
        out[i] = v;
    }
}

/// Fixed-step classical RK4 sampled at every step. A final partial step lands on `t1`.
pub fn integrate_rk4<S: OdeSystem>(sys: &S, x0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<Trajectory> {
    integrate_rk4_sampled(sys, x0, t0, t1, dt, 1)
}

/// RK4 keeping every `stride`-th step (and the final state).
pub fn integrate_rk4_sampled<S: OdeSystem>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t1 >= t0 (dt = {dt})")));
    }
    check_len(x0, sys.dim())?;
    let n = sys.dim();
    let stride = stride.max(1);
    let full = ((t1 - t0) / dt * (1.0 + 1e-12)).floor() as usize;
    let rest = t1 - (t0 + full as f64 * dt);
    let steps = if rest > 1e-12 * dt.max(t1.abs()) { full + 1 } else { full };
    let mut x = x0.to_vec();
    let mut times = vec![t0];
    let mut states = vec![x.clone()];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        let t = t0 + s as f64 * dt;
        let h = if s == full { rest } else { dt };
        sys.eval(t, &x, &mut k1);
        axpy(&mut tmp, &x, &[(0.5 * h, &k1)]);
        sys.eval(t + 0.5 * h, &tmp, &mut k2);
        axpy(&mut tmp, &x, &[(0.5 * h, &k2)]);
        sys.eval(t + 0.5 * h, &tmp, &mut k3);
        axpy(&mut tmp, &x, &[(h, &k3)]);
        sys.eval(t + h, &tmp, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let tn = if s + 1 == steps { t1 } else { t0 + (s + 1) as f64 * dt };
        guard(tn, &x)?;
        if (s + 1) % stride == 0 || s + 1 == steps {
            times.push(tn);
            states.push(x.clone());
        }
    }
    Ok(Trajectory { times, states, meta: SolverMeta { solver: "rk4".into(), steps, rejected: 0 } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Output spacing; `None` keeps only the two endpoints.
    pub dt_out: Option<f64>,
    pub max_steps: usize,
    pub h_max: Option<f64>,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions { rtol: 1e-8, atol: 1e-10, dt_out: None, max_steps: 50_000_000, h_max: None }
    }
}

impl AdaptiveOptions {
    /// Tight tolerances used for invariant audits.
    pub fn audit() -> Self {
        AdaptiveOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() }
    }

    pub fn tolerances(rtol: f64, atol: f64) -> Self {
        AdaptiveOptions { rtol, atol, ..Default::default() }
    }

    pub fn with_dt_out(mut self, dt_out: f64) -> Self {
        self.dt_out = Some(dt_out);
        self
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn rms_norm(v: &[f64], scale: &[f64]) -> f64 {
    (v.iter().zip(scale).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / v.len() as f64).sqrt()
}

fn initial_step<S: OdeSystem>(sys: &S, t: f64, x: &[f64], f0: &[f64], opts: &AdaptiveOptions, span: f64) -> f64 {
    let sc: Vec<f64> = x.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = rms_norm(x, &sc);
    let d1 = rms_norm(f0, &sc);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let x1: Vec<f64> = x.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; x.len()];
    sys.eval(t + h0, &x1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_norm(&diff, &sc) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span)
}

/// Dormand-Prince 5(4) with PI step control and dense output on the `dt_out` grid.
pub fn integrate_adaptive<S: OdeSystem>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    opts: &AdaptiveOptions,
) -> Result<Trajectory> {
    if !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    if let Some(d) = opts.dt_out {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument("dt_out must be positive".into()));
        }
    }
    check_len(x0, sys.dim())?;
    guard(t0, x0)?;
    let n = sys.dim();
    let mut times = vec![t0];
    let mut states = vec![x0.to_vec()];
    let mut meta = SolverMeta { solver: "dopri5".into(), steps: 0, rejected: 0 };
    if t1 == t0 {
        return Ok(Trajectory { times, states, meta });
    }
    let span = t1 - t0;
    let h_max = opts.h_max.unwrap_or(span).min(span);
    let mut next_out = 1usize;
    let out_time = |k: usize| opts.dt_out.map(|d| t0 + k as f64 * d);

    let mut x = x0.to_vec();
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    sys.eval(t, &x, &mut k1);
    let mut h = initial_step(sys, t, &x, &k1, opts, h_max);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut sc = vec![0.0; n];
    let (beta, safe, fac_min, fac_max) = (0.04, 0.9, 0.2, 10.0);
    let expo = 0.2 - beta * 0.75;
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;

    while t < t1 {
        if meta.steps + meta.rejected >= opts.max_steps {
            return Err(Error::TooManySteps { t, max_steps: opts.max_steps });
        }
        if t + h >= t1 || t + 1.01 * h >= t1 {
            h = t1 - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        axpy(&mut tmp, &x, &[(h * A21, &k1)]);
        sys.eval(t + C2 * h, &tmp, &mut k2);
        axpy(&mut tmp, &x, &[(h * A31, &k1), (h * A32, &k2)]);
        sys.eval(t + C3 * h, &tmp, &mut k3);
        axpy(&mut tmp, &x, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]);
        sys.eval(t + C4 * h, &tmp, &mut k4);
        axpy(&mut tmp, &x, &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]);
        sys.eval(t + C5 * h, &tmp, &mut k5);
        axpy(&mut tmp, &x, &[(h * A61, &k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)]);
        sys.eval(t + h, &tmp, &mut k6);
        axpy(&mut xn, &x, &[(h * A71, &k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)]);
        sys.eval(t + h, &xn, &mut k7);
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            sc[i] = opts.atol + opts.rtol * x[i].abs().max(xn[i].abs());
        }
        let e = rms_norm(&err, &sc);
        if !e.is_finite() {
            meta.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }
        let fac11 = e.powf(expo);
        if e <= 1.0 {
            let fac = (fac11 / fac_old.powf(beta) / safe).clamp(1.0 / fac_max, 1.0 / fac_min);
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = e.max(1e-4);
            let t_new = t + h;
            while let Some(to) = out_time(next_out) {
                if to > t_new || to >= t1 {
                    break;
                }
                let theta = (to - t) / h;
                let th1 = 1.0 - theta;
                let mut y = vec![0.0; n];
                for i in 0..n {
                    let ydiff = xn[i] - x[i];
                    let bspl = h * k1[i] - ydiff;
                    let r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    y[i] = x[i] + theta * (ydiff + th1 * (bspl + theta * (ydiff - h * k7[i] - bspl + th1 * r5)));
                }
                times.push(to);
                states.push(y);
                next_out += 1;
            }
            std::mem::swap(&mut x, &mut xn);
            std::mem::swap(&mut k1, &mut k7);
            t = if t_new >= t1 { t1 } else { t_new };
            guard(t, &x)?;
            meta.steps += 1;
            h = h_new;
            last_rejected = false;
        } else {
            meta.rejected += 1;
            h /= (fac11 / safe).min(1.0 / fac_min);
            last_rejected = true;
        }
    }
    times.push(t1);
    states.push(x);
    Ok(Trajectory { times, states, meta })
}

/// `(alpha, beta, gamma)` solution from a standard-form solution: `X(T) = (beta/alpha) x(beta T)`.
pub fn rescale(traj: &Trajectory, alpha: f64, beta: f64, gamma: f64) -> Result<Trajectory> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if alpha == 0.0 || !alpha.is_finite() || !gamma.is_finite() {
        return Err(Error::InvalidArgument("alpha must be nonzero and finite".into()));
    }
    let s = beta / alpha;
    Ok(Trajectory {
        times: traj.times.iter().map(|t| t / beta).collect(),
        states: traj.states.iter().map(|x| x.iter().map(|v| s * v).collect()).collect(),
        meta: traj.meta.clone(),
    })
}

/// Standard-form forcing equivalent to the uniform `(alpha, beta, gamma)` system.
pub fn effective_forcing(alpha: f64, beta: f64, gamma: f64) -> f64 {
    alpha * gamma / (beta * beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    TotalSum,
    Energy,
    EvenEnergy,
    OddEnergy,
    /// Sum over sites `i = r (mod 3)`.
    Stride3Sum(u8),
    /// `x0 + x1 + x2 + x3` for the four-site Hamiltonian reduction.
    Hamiltonian4,
}

impl Invariant {
    pub fn name(&self) -> String {
        match self {
            Invariant::TotalSum => "total_sum".into(),
            Invariant::Energy => "energy".into(),
            Invariant::EvenEnergy => "even_energy".into(),
            Invariant::OddEnergy => "odd_energy".into(),
            Invariant::Stride3Sum(r) => format!("stride3_sum_{r}"),
            Invariant::Hamiltonian4 => "hamiltonian_n4".into(),
        }
    }

    pub fn applicable(&self, n: usize) -> bool {
        match self {
            Invariant::EvenEnergy | Invariant::OddEnergy => n % 2 == 0,
            Invariant::Stride3Sum(r) => n % 3 == 0 && *r < 3,
            Invariant::Hamiltonian4 => n == 4,
            _ => true,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Invariant::TotalSum | Invariant::Hamiltonian4 => x.iter().sum(),
            Invariant::Energy => x.iter().map(|v| v * v).sum(),
            Invariant::EvenEnergy => x.iter().step_by(2).map(|v| v * v).sum(),
            Invariant::OddEnergy => x.iter().skip(1).step_by(2).map(|v| v * v).sum(),
            Invariant::Stride3Sum(r) => x.iter().skip(*r as usize).step_by(3).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSet(pub Vec<Invariant>);

impl InvariantSet {
    /// Every quantity that makes sense on `n` sites.
    pub fn all_for(n: usize) -> Self {
        let all = [
            Invariant::TotalSum,
            Invariant::Energy,
            Invariant::EvenEnergy,
            Invariant::OddEnergy,
            Invariant::Stride3Sum(0),
            Invariant::Stride3Sum(1),
            Invariant::Stride3Sum(2),
            Invariant::Hamiltonian4,
        ];
        InvariantSet(all.into_iter().filter(|q| q.applicable(n)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub name: String,
    pub initial: f64,
    /// `max_t |Q(x(t)) - Q(x(0))| / max(1, |Q(x(0))|)`.
    pub drift: f64,
}

pub fn audit(traj: &Trajectory, inv: &InvariantSet) -> Result<Vec<Drift>> {
    let n = traj.n();
    let x0 = traj.states.first().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    inv.0
        .iter()
        .map(|q| {
            if !q.applicable(n) {
                return Err(Error::Inapplicable(format!("{} on {n} sites", q.name())));
            }
            let q0 = q.eval(x0);
            let worst = traj.states.iter().map(|x| (q.eval(x) - q0).abs()).fold(0.0, f64::max);
            Ok(Drift { name: q.name(), initial: q0, drift: worst / q0.abs().max(1.0) })
        })
        .collect()
}

/// Average relative energy loss in percent per unit time between the first and last sample.
pub fn energy_loss_rate(traj: &Trajectory) -> f64 {
    let e = |x: &[f64]| Invariant::Energy.eval(x);
    let (e0, e1) = (e(&traj.states[0]), e(traj.last_state()));
    let dt = traj.times.last().unwrap() - traj.times[0];
    100.0 * (e0 - e1) / e0 / dt
}

/// Seeded `mean e + N(0, sigma^2)`; `member` selects an independent stream.
pub fn random_state(n: usize, mean: f64, sigma: f64, seed: u64, member: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    let normal = Normal::new(0.0, sigma).expect("non-negative sigma");
    (0..n).map(|_| mean + normal.sample(&mut rng)).collect()
}

/// Seeded initial data `F e + N(0, sigma^2)` with `sigma = 0.01 max(1, |F|)`.
pub fn random_initial(n: usize, f: f64, seed: u64, member: u64) -> Vec<f64> {
    random_state(n, f, 0.01 * f.abs().max(1.0), seed, member)
}

/// Polar form of the four-site symmetric inviscid system.
///
/// With `(x0, x2) = rho0 (cos a0, sin a0)` and `(x1, x3) = rho1 (cos a1, sin a1)` the radii are
/// constant and the angles obey a Hamiltonian system with `H = x0 + x1 + x2 + x3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N4Reduction {
    pub rho0: f64,
    pub rho1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// One of the radii vanishes, so the corresponding angle is undefined.
    pub degenerate: bool,
}

pub fn reduce_n4(x0: &[f64]) -> Result<N4Reduction> {
    check_len(x0, 4)?;
    let rho0 = x0[0].hypot(x0[2]);
    let rho1 = x0[1].hypot(x0[3]);
    Ok(N4Reduction {
        rho0,
        rho1,
        alpha0: x0[2].atan2(x0[0]),
        alpha1: x0[3].atan2(x0[1]),
        degenerate: rho0 == 0.0 || rho1 == 0.0,
    })
}

impl N4Reduction {
    pub fn angular_rhs(&self, a: &[f64], da: &mut [f64]) {
        let s = std::f64::consts::SQRT_2;
        da[0] = -self.rho1 * s * (a[1] + FRAC_PI_4).cos();
        da[1] = self.rho0 * s * (a[0] + FRAC_PI_4).cos();
    }

    pub fn hamiltonian(&self, a0: f64, a1: f64) -> f64 {
        let s = std::f64::consts::SQRT_2;
        s * self.rho0 * (a0 + FRAC_PI_4).sin() + s * self.rho1 * (a1 + FRAC_PI_4).sin()
    }

    pub fn state(&self, a0: f64, a1: f64) -> [f64; 4] {
        [self.rho0 * a0.cos(), self.rho1 * a1.cos(), self.rho0 * a0.sin(), self.rho1 * a1.sin()]
    }

    /// Integrates the angle equations and maps them back to site values.
    pub fn trajectory(&self, t1: f64, opts: &AdaptiveOptions) -> Result<Trajectory> {
        let sys = FnSystem { dim: 2, f: |_t: f64, a: &[f64], da: &mut [f64]| self.angular_rhs(a, da) };
        let mut tr = integrate_adaptive(&sys, &[self.alpha0, self.alpha1], 0.0, t1, opts)?;
        tr.states = tr.states.iter().map(|a| self.state(a[0], a[1]).to_vec()).collect();
        Ok(tr)
    }
}

/// Six-site symmetric inviscid system as a rigid rotation.
///
/// With `c_m = (x_m + x_{m+3}) / 2` and `y_m = (-1)^m (x_m - x_{m+3})`, `c` is constant and
/// `y' = 2 c x y`, so `y` turns about `c` at angular speed `2 |c|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N6Reduction {
    pub c: [f64; 3],
    pub y0: [f64; 3],
}

pub fn reduce_n6(x0: &[f64]) -> Result<N6Reduction> {
    check_len(x0, 6)?;
    let mut c = [0.0; 3];
    let mut y0 = [0.0; 3];
    for m in 0..3 {
        c[m] = 0.5 * (x0[m] + x0[m + 3]);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        y0[m] = sign * (x0[m] - x0[m + 3]);
    }
    Ok(N6Reduction { c, y0 })
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl N6Reduction {
    pub fn angular_speed(&self) -> f64 {
        2.0 * dot(self.c, self.c).sqrt()
    }

    /// Rodrigues rotation of `y0` about `c` by `2 |c| t`.
    pub fn y_at(&self, t: f64) -> [f64; 3] {
        let norm = dot(self.c, self.c).sqrt();
        if norm == 0.0 {
            return self.y0;
        }
        let k = [self.c[0] / norm, self.c[1] / norm, self.c[2] / norm];
        let th = 2.0 * norm * t;
        let (s, co) = th.sin_cos();
        let kxy = cross(k, self.y0);
        let kd = dot(k, self.y0) * (1.0 - co);
        [0, 1, 2].map(|i| self.y0[i] * co + kxy[i] * s + k[i] * kd)
    }

    pub fn state_at(&self, t: f64) -> [f64; 6] {
        let y = self.y_at(t);
        let mut x = [0.0; 6];
        for (j, xj) in x.iter_mut().enumerate() {
            let sign = if j % 2 == 0 { 0.5 } else { -0.5 };
            *xj = self.c[j % 3] + sign * y[j % 3];
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; n]),
            ScalarOrVec::Vec(v) => {
                check_len(v, n)?;
                Ok(v.clone())
            }
        }
    }
}

/// JSON form `{"n": .., "advection": "G3", "alpha": .., "beta": .., "gamma": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpecFile {
    pub n: usize,
    pub advection: String,
    pub alpha: ScalarOrVec,
    pub beta: ScalarOrVec,
    pub gamma: ScalarOrVec,
}

impl SystemSpecFile {
    pub fn to_spec(&self) -> Result<SystemSpec> {
        let g = gmap::parse(&self.advection)?.resolved;
        SystemSpec::new(
            g,
            self.alpha.expand(self.n)?,
            self.beta.expand(self.n)?,
            Forcing::Constant(self.gamma.expand(self.n)?),
        )
    }
}
