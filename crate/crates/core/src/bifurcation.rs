//! Closed-form bifurcation analysis of the constant state `F e`.
//!
//! Around `x = F e + y` the system reads `y' = (F A - I) y + G(y)`. The eigenvalues of
//! `F A - I` are `F p(w^j) - 1`, so the first Hopf value is `F1 = 1 / max_j Re p(w^j)`.
//! Lyapunov and Hopf-Hopf normal-form coefficients reduce to evaluations of the bilinear
//! symbol `P(z, w)` at roots of unity because every Fourier mode is an eigenvector.
//!
//! # Hopf-Hopf unfolding
//!
//! Adding `alpha C_l` shifts only the eigenvalues of modes `l` and `N - l`. With
//! `mu1 = F / F1 - 1` and `mu2 = F / F2 - 1 + alpha` the truncated amplitude equations are
//!
//! ```text
//! r1' = r1 (mu1 + p11 r1^2 + p12 r2^2)
//! r2' = r2 (mu2 + p21 r1^2 + p22 r2^2)
//! ```
//!
//! The cycle carried by mode `l` (`r1 = 0`, `r2^2 = -mu2 / p22`) gains a transversally
//! stable direction on the line `mu1 = (p12 / p22) mu2`. Intersecting this tangent with
//! `alpha = 0` gives the estimate
//!
//! ```text
//! F3* = (1 - theta) / (1 / F1 - theta / F2),   theta = p12 / p22.
//! ```

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmap::GMap;
use crate::spectral::{bilinear_symbol, laurent_of, unit_root, BilinearSymbol, LaurentPoly};

/// Relative gap below which two Hopf values count as one.
pub const TIE_TOL: f64 = 1e-12;
const RESONANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub mode_k: usize,
    pub tau0: f64,
    pub z1: Complex64,
    #[serde(rename = "I1")]
    pub i1: Option<f64>,
    pub supercritical: Option<bool>,
    /// Another mode crossing at the same forcing, if any.
    pub tie_mode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfHopfReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub mode_k: usize,
    pub mode_l: usize,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "F2")]
    pub f2: f64,
    pub alpha0: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// `p[r-1][s-1] = p_rs`.
    pub p: [[f64; 2]; 2],
    pub simple: bool,
    pub type_one: bool,
    #[serde(rename = "F3_star")]
    pub f3_star: f64,
    pub tie: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveDiagnostics {
    pub s1: f64,
    pub wavelength_sites: f64,
    pub phase_velocity: f64,
    pub group_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstBifurcation {
    None,
    Hopf,
    Pitchfork,
    /// The critical mode is `s = 1/2`: a pitchfork for even N, a Hopf for odd N.
    HalfMode,
}

impl FirstBifurcation {
    pub fn for_parity(self, even_n: bool) -> FirstBifurcation {
        match self {
            FirstBifurcation::HalfMode if even_n => FirstBifurcation::Pitchfork,
            FirstBifurcation::HalfMode => FirstBifurcation::Hopf,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria2Local {
    pub cond1: bool,
    pub cond2: bool,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    pub has_hopf_fpos: bool,
    pub has_hopf_fneg: bool,
    pub first_fpos: FirstBifurcation,
    pub first_fneg: FirstBifurcation,
}

/// Modes `0 < j < n/2` ordered by decreasing `Re p(w^j)`, ties by increasing `j`.
fn ranked_modes(p: &LaurentPoly, n: usize) -> Vec<(usize, f64)> {
    let mut modes: Vec<(usize, f64)> =
        (1..n.div_ceil(2)).map(|j| (j, p.at_root(n, j as i64).re)).collect();
    modes.sort_by(|a, b| {
        if is_tie(a.1, b.1) {
            a.0.cmp(&b.0)
        } else {
            b.1.total_cmp(&a.1)
        }
    });
    modes
}

fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs())
}

fn report(p: &LaurentPoly, n: usize, j: usize, tie_mode: Option<usize>) -> Result<HopfReport> {
    let z = p.at_root(n, j as i64);
    if z.im == 0.0 {
        return Err(Error::Degenerate(format!("mode {j} crosses with a real eigenvalue")));
    }
    Ok(HopfReport {
        n,
        f1: 1.0 / z.re,
        mode_k: j,
        tau0: z.im / z.re,
        z1: unit_root(n, j as i64),
        i1: None,
        supercritical: None,
        tie_mode,
    })
}

pub fn first_hopf(p: &LaurentPoly, n: usize) -> Result<HopfReport> {
    let modes = ranked_modes(p, n);
    let &(k, r) = modes.first().ok_or(Error::NoHopf)?;
    if r <= 0.0 {
        return Err(Error::NoHopf);
    }
    let tie = modes.get(1).filter(|m| is_tie(m.1, r)).map(|m| m.0);
    report(p, n, k, tie)
}

pub fn second_hopf(p: &LaurentPoly, n: usize) -> Result<HopfReport> {
    let modes = ranked_modes(p, n);
    match modes.get(1) {
        Some(&(l, r)) if r > 0.0 && modes[0].1 > 0.0 => {
            let tie = Some(modes[0].0).filter(|_| is_tie(modes[0].1, r));
            report(p, n, l, tie)
        }
        _ => Err(Error::Degenerate("fewer than two modes cross for F > 0".into())),
    }
}

fn resonant(den: Complex64, what: &str) -> Result<Complex64> {
    if den.norm() < RESONANCE_TOL {
        Err(Error::Degenerate(format!("resonant denominator ({what})")))
    } else {
        Ok(den)
    }
}

/// First Lyapunov coefficient at the first Hopf value; negative means supercritical.
pub fn first_lyapunov(g: &GMap, n: usize) -> Result<HopfReport> {
    check_n(n)?;
    let p = laurent_of(g);
    let mut rep = first_hopf(&p, n)?;
    if let Some(t) = rep.tie_mode {
        return Err(Error::Degenerate(format!(
            "modes {} and {t} cross together at F = {}; use hopf_hopf",
            rep.mode_k, rep.f1
        )));
    }
    let sym = bilinear_symbol(g);
    // work with the member of the conjugate pair whose frequency is positive
    let (k, tau) = oriented(rep.mode_k, rep.tau0);
    let lam = |j: i64| rep.f1 * p.at_root(n, j) - 1.0;
    let pp = |a: i64, b: i64| sym.at_roots(n, a, b);
    let i = Complex64::i();
    let t1 = -2.0 * pp(k, -k).re * (pp(k, 0) / lam(0)).re;
    let den = resonant(2.0 * i * tau - lam(2 * k), "2 i tau0")?;
    let t2 = (pp(k, k) * pp(2 * k, -k) / den).re;
    let i1 = (t1 + t2) / (2.0 * tau * n as f64);
    rep.i1 = Some(i1);
    rep.supercritical = Some(i1 < 0.0);
    Ok(rep)
}

/// The Fourier identities behind these formulas hold for any N, including N < 2k + 2
/// where the localization window wraps onto itself.
fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 sites, got {n}")));
    }
    Ok(())
}

fn oriented(mode: usize, tau: f64) -> (i64, f64) {
    if tau < 0.0 {
        (-(mode as i64), -tau)
    } else {
        (mode as i64, tau)
    }
}

/// Specialized first Lyapunov coefficient for the Lorenz '96 term.
pub fn l96_first_lyapunov(n: usize) -> Result<f64> {
    let p = laurent_of(&crate::gmap::g3());
    let rep = first_hopf(&p, n)?;
    let t = 2.0 * std::f64::consts::PI * rep.mode_k as f64 / n as f64;
    let z2 = p.at_root(n, 2 * rep.mode_k as i64);
    let den = 2.0 * Complex64::i() * rep.tau0 + 1.0 - rep.f1 * z2;
    let a = t.cos() - (2.0 * t).cos();
    Ok(4.0 / (2.0 * rep.tau0 * n as f64) * (-a * a + ((3.0 * t).cos() - 1.0) * (1.0 / den).re))
}

/// Rank-2 real circulant `q_l q_{N-l}^T + q_{N-l} q_l^T`.
pub fn perturbation_matrix(n: usize, l: usize) -> Result<DMatrix<f64>> {
    if l == 0 || l >= n || 2 * l == n {
        return Err(Error::InvalidArgument(format!(
            "perturbation mode must satisfy 0 < l < N, 2l != N (got l = {l}, N = {n})"
        )));
    }
    let w = 2.0 * std::f64::consts::PI * l as f64 / n as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| 2.0 * (w * (i as f64 - j as f64)).cos() / n as f64))
}

struct HhContext<'a> {
    n: usize,
    p: &'a LaurentPoly,
    sym: &'a BilinearSymbol,
    f1: f64,
    alpha0: f64,
    l: i64,
}

impl HhContext<'_> {
    fn lam(&self, j: i64) -> Complex64 {
        let jr = j.rem_euclid(self.n as i64);
        let shift = if jr == self.l || jr == self.n as i64 - self.l { self.alpha0 } else { 0.0 };
        self.f1 * self.p.at_root(self.n, j) - 1.0 + shift
    }

    fn pp(&self, a: i64, b: i64) -> Complex64 {
        self.sym.at_roots(self.n, a, b)
    }

    /// Self-interaction coefficient of mode `k` with frequency `tau`.
    fn diagonal(&self, k: i64, tau: f64) -> Result<f64> {
        let i = Complex64::i();
        let den = resonant(2.0 * i * tau - self.lam(2 * k), "2 i tau")?;
        let v = self.pp(k, k) * self.pp(-k, 2 * k) / den
            - 2.0 * self.pp(k, -k) * self.pp(k, 0) / self.lam(0);
        Ok(v.re / (2.0 * self.n as f64))
    }

    /// Effect of mode `m`'s amplitude on the growth of mode `k`.
    fn cross(&self, k: i64, m: i64, tk: f64, tm: f64) -> Result<f64> {
        let i = Complex64::i();
        let d_sum = resonant(i * (tk + tm) - self.lam(k + m), "i (tau1 + tau2)")?;
        let d_diff = resonant(i * (tk - tm) - self.lam(k - m), "i (tau1 - tau2)")?;
        let v = self.pp(k, m) * self.pp(k + m, -m) / d_sum
            + self.pp(k, -m) * self.pp(k - m, m) / d_diff
            - self.pp(m, -m) * self.pp(0, k) / self.lam(0);
        Ok(v.re / self.n as f64)
    }
}

/// Hopf-Hopf normal form at `F1` with the second mode pulled onto the axis by `alpha0 C_l`.
pub fn hopf_hopf(g: &GMap, n: usize) -> Result<HopfHopfReport> {
    check_n(n)?;
    let p = laurent_of(g);
    let h1 = first_hopf(&p, n)?;
    let h2 = second_hopf(&p, n)?;
    let (f1, f2) = (h1.f1, h2.f1);
    let tie = h1.tie_mode.is_some();
    let alpha0 = if tie { 0.0 } else { (f2 - f1) / f2 };
    let (k, tau1) = oriented(h1.mode_k, f1 * p.at_root(n, h1.mode_k as i64).im);
    let (l, tau2) = oriented(h2.mode_k, f1 * p.at_root(n, h2.mode_k as i64).im);
    let sym = bilinear_symbol(g);
    let cx = HhContext { n, p: &p, sym: &sym, f1, alpha0, l: l.rem_euclid(n as i64) };
    let p11 = cx.diagonal(k, tau1)?;
    let p22 = cx.diagonal(l, tau2)?;
    let p12 = cx.cross(k, l, tau1, tau2)?;
    let p21 = cx.cross(l, k, tau2, tau1)?;
    let f3_star = if tie {
        f1
    } else {
        let theta = p12 / p22;
        (1.0 - theta) / (1.0 / f1 - theta / f2)
    };
    Ok(HopfHopfReport {
        n,
        mode_k: h1.mode_k,
        mode_l: h2.mode_k,
        f1,
        f2,
        alpha0,
        tau1,
        tau2,
        p: [[p11, p12], [p21, p22]],
        simple: p11 * p22 > 0.0,
        type_one: p11 * p22 - p12 * p21 < 0.0,
        f3_star,
        tie,
    })
}

/// Phase and group velocity (sites per time) of the first Hopf mode at forcing `f`.
pub fn wave_diagnostics(p: &LaurentPoly, n: usize, f: f64) -> Result<WaveDiagnostics> {
    let h = first_hopf(p, n)?;
    let s1 = h.mode_k as f64 / n as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(WaveDiagnostics {
        s1,
        wavelength_sites: 1.0 / s1,
        phase_velocity: -f * p.lambda_i(s1) / (two_pi * s1),
        group_velocity: -f * p.lambda_i_prime(s1) / two_pi,
    })
}

/// First bifurcation of the continuous eigenvalue curve as `|F|` grows with sign `sign`.
pub fn first_bifurcation(p: &LaurentPoly, sign: f64) -> FirstBifurcation {
    let sign = sign.signum();
    let f = |s: f64| sign * p.lambda_r(s);
    let m = 4096;
    let (mut best_s, mut best) = (0.5, f(0.5));
    for i in 1..m {
        let s = 0.5 * i as f64 / m as f64;
        if f(s) > best {
            best = f(s);
            best_s = s;
        }
    }
    if best_s < 0.5 {
        let h = 0.5 / m as f64;
        best_s = golden_max(&f, (best_s - h).max(0.0), (best_s + h).min(0.5));
        best = f(best_s);
    }
    if best <= 1e-12 {
        FirstBifurcation::None
    } else if f(0.5) >= best - 1e-12 {
        FirstBifurcation::HalfMode
    } else if p.lambda_i(best_s).abs() < 1e-6 {
        FirstBifurcation::Pitchfork
    } else {
        FirstBifurcation::Hopf
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Hopf-existence test for Laurent polynomials supported in `[-2, 2]`.
///
/// With `R1 = d1 + d-1`, `R2 = d2 + d-2`, `I1 = d1 - d-1`, `I2 = d2 - d-2`, the real part
/// `Re p = d0 + R1 cos t + R2 cos 2t` has an interior critical point `cos t = -R1 / (4 R2)`
/// iff `|R1| < 4 |R2|`, and `Im p` is nonzero there iff `2 I1 R2 != I2 R1`.
pub fn hopf_criteria_2local(p: &LaurentPoly) -> Result<Criteria2Local> {
    if p.radius() > 2 {
        return Err(Error::InvalidArgument("polynomial is not 2-localized".into()));
    }
    let d = |j: i32| p.coeff(j);
    let (r1, r2) = (d(1) + d(-1), d(2) + d(-2));
    let (i1, i2) = (d(1) - d(-1), d(2) - d(-2));
    let cond1 = r1.abs() < 4.0 * r2.abs();
    let cond2 = 2.0 * i1 * r2 != i2 * r1;
    let s1 = cond1.then(|| (-r1 / (4.0 * r2)).acos() / (2.0 * std::f64::consts::PI));
    Ok(Criteria2Local {
        cond1,
        cond2,
        s1,
        s2: s1.map(|s| 1.0 - s),
        has_hopf_fpos: cond1 && cond2 && r2 < 0.0,
        has_hopf_fneg: cond1 && cond2 && r2 > 0.0,
        first_fpos: classify_2local(p, s1, 1.0),
        first_fneg: classify_2local(p, s1, -1.0),
    })
}

fn classify_2local(p: &LaurentPoly, s1: Option<f64>, sign: f64) -> FirstBifurcation {
    let half = sign * p.lambda_r(0.5);
    let interior = s1.map(|s| (s, sign * p.lambda_r(s)));
    match interior {
        Some((s, v)) if v > half && v > 0.0 => {
            if p.lambda_i(s).abs() < 1e-12 {
                FirstBifurcation::Pitchfork
            } else {
                FirstBifurcation::Hopf
            }
        }
        _ if half > 0.0 => FirstBifurcation::HalfMode,
        _ => FirstBifurcation::None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub k: usize,
    #[serde(rename = "F2")]
    pub f2: f64,
    pub l: usize,
    pub alpha0: f64,
    #[serde(rename = "F3_star")]
    pub f3_star: f64,
    #[serde(rename = "I1")]
    pub i1: Option<f64>,
}

impl SweepRow {
    pub fn new(g: &GMap, n: usize) -> Result<SweepRow> {
        let hh = hopf_hopf(g, n)?;
        let i1 = first_lyapunov(g, n).ok().and_then(|r| r.i1);
        Ok(SweepRow {
            n,
            f1: hh.f1,
            k: hh.mode_k,
            f2: hh.f2,
            l: hh.mode_l,
            alpha0: hh.alpha0,
            f3_star: hh.f3_star,
            i1,
        })
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
