//! Numerical experiments: ensemble searches for coexisting limit cycles, period detection,
//! following a cycle down in the forcing, and Hovmoeller rasters with crest tracking.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bifurcation::hopf_hopf;
use crate::dynamics::{integrate_adaptive, random_initial, AdaptiveOptions, Forcing, SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::gmap::GMap;

/// Relative tolerance for cyclic-shift matching.
pub const SHIFT_TOL: f64 = 1e-3;
/// Length of the window used for temporal periods.
pub const PERIOD_WINDOW: f64 = 50.0;
pub const PERIOD_DT: f64 = 0.01;
/// Minimum autocorrelation of a peak that counts as a period.
pub const ACF_THRESHOLD: f64 = 0.8;
pub const FOLLOW_STEP: f64 = 0.002;

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Spatial period of a wave with wavenumber `k` on `n` sites.
pub fn mode_period(n: usize, k: usize) -> usize {
    n / gcd(k % n, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialPeriod {
    pub m: usize,
    /// False when no proper divisor matched and `m = N` is only the trivial period.
    pub matched: bool,
}

fn amplitude(x: &[f64]) -> (f64, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    (mean, x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max))
}

fn shift_residual(x: &[f64], m: usize) -> f64 {
    let n = x.len();
    (0..n).map(|j| (x[(j + m) % n] - x[j]).abs()).fold(0.0, f64::max)
}

/// Smallest divisor `m` of `N` with every snapshot invariant under a shift by `m`.
pub fn spatial_period_of(snapshots: &[&[f64]]) -> Result<SpatialPeriod> {
    let n = snapshots.first().map_or(0, |s| s.len());
    if n == 0 || snapshots.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidArgument("snapshots must be non-empty and of equal length".into()));
    }
    for d in divisors(n) {
        let ok = snapshots.iter().all(|x| {
            let (mean, amp) = amplitude(x);
            if amp <= 1e-9 * mean.abs().max(1.0) {
                return true;
            }
            shift_residual(x, d) <= SHIFT_TOL * amp
        });
        if ok {
            return Ok(SpatialPeriod { m: d, matched: d < n });
        }
    }
    unreachable!("a shift by N always matches")
}

pub fn spatial_period(x: &[f64]) -> Result<SpatialPeriod> {
    spatial_period_of(&[x])
}

/// Dominant period of `x_site(t)` over the last `window` time units, from the first strong
/// autocorrelation peak. `None` for constant or aperiodic signals.
pub fn temporal_period(traj: &Trajectory, site: usize, window: f64) -> Result<Option<f64>> {
    if site >= traj.n() {
        return Err(Error::InvalidArgument(format!("site {site} out of range")));
    }
    let t_end = *traj.times.last().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let start = traj.times.partition_point(|&t| t < t_end - window - 1e-9);
    let ts = &traj.times[start..];
    if ts.len() < 16 || t_end - ts[0] < 0.999 * window {
        return Err(Error::InvalidArgument(format!(
            "window of {window} time units needs more samples than the trajectory provides"
        )));
    }
    let dt = ts[1] - ts[0];
    if ts.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::InvalidArgument("temporal period needs uniformly spaced samples".into()));
    }
    let y: Vec<f64> = traj.states[start..].iter().map(|x| x[site]).collect();
    let (mean, amp) = amplitude(&y);
    if amp <= 1e-9 * mean.abs().max(1.0) {
        return Ok(None);
    }
    let n = y.len();
    // Pearson correlation of the overlapping segments
    let acf = |k: usize| {
        let (a, b) = (&y[..n - k], &y[k..]);
        let m = (n - k) as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (u, v) in a.iter().zip(b) {
            let (u, v) = (u - ma, v - mb);
            sab += u * v;
            saa += u * u;
            sbb += v * v;
        }
        sab / (saa * sbb).sqrt().max(f64::MIN_POSITIVE)
    };
    let max_lag = n / 2;
    let r: Vec<f64> = (0..=max_lag).map(acf).collect();
    let Some(first_neg) = r.iter().position(|&v| v < 0.0) else { return Ok(None) };
    for k in first_neg.max(1)..max_lag {
        if r[k] >= r[k - 1] && r[k] > r[k + 1] && r[k] >= ACF_THRESHOLD {
            let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
            let denom = a - 2.0 * b + c;
            let off = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            return Ok(Some((k as f64 + off) * dt));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub runs: usize,
    pub t_end: f64,
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { runs: 100, t_end: 1000.0, seed: 0, rtol: 1e-8, atol: 1e-10, jobs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorClass {
    pub spatial_period: usize,
    pub temporal_period: Option<f64>,
    pub member_count: usize,
    pub members: Vec<u64>,
    pub representative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "F")]
    pub f: f64,
    pub runs: usize,
    pub t_end: f64,
    pub seed: u64,
    pub classes: Vec<AttractorClass>,
    pub unclassified: usize,
}

impl EnsembleSummary {
    pub fn periods(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.spatial_period).collect()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Largest spread of a Fourier amplitude `|X_k|`, `k >= 1`, across snapshots, relative to the
/// largest amplitude. Zero on rotating waves, positive on modulated or transient states.
pub fn modulation(snapshots: &[&[f64]]) -> f64 {
    let n = snapshots.first().map_or(0, |s| s.len());
    let spectra: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|x| {
            (1..=n / 2)
                .map(|k| {
                    x.iter()
                        .enumerate()
                        .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((k * j) % n) as f64 / n as f64))
                        .sum::<Complex64>()
                        .norm()
                })
                .collect()
        })
        .collect();
    let top = spectra.iter().flatten().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    (0..n / 2)
        .map(|k| {
            let (lo, hi) = spectra.iter().fold((f64::INFINITY, 0.0f64), |(a, b), s| (a.min(s[k]), b.max(s[k])));
            hi - lo
        })
        .fold(0.0, f64::max)
        / top
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settled {
    pub period: SpatialPeriod,
    pub modulation: f64,
    pub state: Vec<f64>,
}

/// Runs from `x0` to `t_end` and classifies the spatial period over the last tenth.
pub fn settle(sys: &SystemSpec, x0: &[f64], t_end: f64, rtol: f64, atol: f64) -> Result<Settled> {
    let opts = AdaptiveOptions::tolerances(rtol, atol);
    let t_cut = 0.9 * t_end;
    let head = integrate_adaptive(sys, x0, 0.0, t_cut, &opts)?;
    let tail = integrate_adaptive(sys, head.last_state(), t_cut, t_end, &opts.with_dt_out(1.0))?;
    let snaps: Vec<&[f64]> = tail.states.iter().map(|s| s.as_slice()).collect();
    Ok(Settled {
        period: spatial_period_of(&snaps)?,
        modulation: modulation(&snaps),
        state: tail.last_state().to_vec(),
    })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Temporal period of the cycle through `x`, sampled at site 0 after a short settling run.
pub fn cycle_period(sys: &SystemSpec, x: &[f64], rtol: f64, atol: f64) -> Option<f64> {
    let opts = AdaptiveOptions::tolerances(rtol, atol).with_dt_out(PERIOD_DT);
    let tr = integrate_adaptive(sys, x, 0.0, PERIOD_WINDOW, &opts).ok()?;
    temporal_period(&tr, 0, PERIOD_WINDOW).ok().flatten()
}

/// Integrates `runs` members from `F e` plus seeded noise and groups the settled states by spatial period.
pub fn ensemble_search(advection: &GMap, n: usize, f: f64, cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("need at least one ensemble member".into()));
    }
    if !(cfg.t_end > 0.0) {
        return Err(Error::InvalidArgument("t_end must be positive".into()));
    }
    let sys = SystemSpec::homogeneous(advection.clone(), n, f)?;
    let outcomes: Vec<Option<Settled>> = with_pool(cfg.jobs, || {
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|member| {
                let x0 = random_initial(n, f, cfg.seed, member);
                settle(&sys, &x0, cfg.t_end, cfg.rtol, cfg.atol).ok()
            })
            .collect()
    })?;
    let mut groups: BTreeMap<usize, Vec<(u64, Vec<f64>)>> = BTreeMap::new();
    let mut unclassified = 0;
    for (member, out) in outcomes.into_iter().enumerate() {
        match out {
            Some(st) => groups.entry(st.period.m).or_default().push((member as u64, st.state)),
            None => unclassified += 1,
        }
    }
    let classes = groups
        .into_iter()
        .map(|(m, members)| {
            let representative = members[0].1.clone();
            AttractorClass {
                spatial_period: m,
                temporal_period: cycle_period(&sys, &representative, cfg.rtol, cfg.atol),
                member_count: members.len(),
                members: members.iter().map(|(i, _)| *i).collect(),
                representative,
            }
        })
        .collect();
    Ok(EnsembleSummary { n, f, runs: cfg.runs, t_end: cfg.t_end, seed: cfg.seed, classes, unclassified })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsBracket {
    pub m_target: usize,
    /// Forcing at which the followed cycle was lost.
    pub lo: f64,
    /// Lowest forcing at which the cycle was still observed.
    pub hi: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowConfig {
    /// Members tried at `f_hi` to find the target cycle.
    pub seeds: usize,
    pub seed: u64,
    /// Settling time at each forcing value.
    pub t_settle: f64,
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for FollowConfig {
    fn default() -> Self {
        FollowConfig { seeds: 100, seed: 0, t_settle: 1000.0, step: FOLLOW_STEP, rtol: 1e-8, atol: 1e-10 }
    }
}

/// Follows the rotating wave of spatial period `m_target` down from `f_hi` and bisects the
/// forcing at which it is lost, either to another class or to a modulated state.
///
/// The cycle must be a rotating wave (stationary Fourier amplitudes), as cycles born in a
/// single-mode Hopf bifurcation of an equivariant system are.
pub fn ns_bracket(
    advection: &GMap,
    n: usize,
    m_target: usize,
    f_lo: f64,
    f_hi: f64,
    tol_f: f64,
    cfg: &FollowConfig,
) -> Result<NsBracket> {
    if !(f_lo < f_hi) || !(tol_f > 0.0) || !(cfg.step > 0.0) {
        return Err(Error::InvalidArgument("need f_lo < f_hi and positive tolerances".into()));
    }
    let at = |f: f64, x: &[f64]| -> Result<(bool, Vec<f64>)> {
        let sys = SystemSpec::homogeneous(advection.clone(), n, f)?;
        let st = settle(&sys, x, cfg.t_settle, cfg.rtol, cfg.atol)?;
        Ok((st.period.m == m_target && st.modulation <= SHIFT_TOL, st.state))
    };
    let mut start = None;
    for member in 0..cfg.seeds as u64 {
        let (hit, x) = at(f_hi, &random_initial(n, f_hi, cfg.seed, member))?;
        if hit {
            start = Some(x);
            break;
        }
    }
    let mut x_good = start.ok_or_else(|| {
        Error::Degenerate(format!("no cycle of spatial period {m_target} found at F = {f_hi}"))
    })?;
    let mut hi = f_hi;
    let lo = loop {
        let f = hi - cfg.step;
        if f < f_lo {
            return Err(Error::Degenerate(format!("cycle of spatial period {m_target} persists down to F = {f_lo}")));
        }
        let (kept, x) = at(f, &x_good)?;
        if !kept {
            break f;
        }
        hi = f;
        x_good = x;
    };
    let mut lo = lo;
    while hi - lo > tol_f {
        let mid = 0.5 * (lo + hi);
        let (kept, x) = at(mid, &x_good)?;
        if kept {
            hi = mid;
            x_good = x;
        } else {
            lo = mid;
        }
    }
    Ok(NsBracket { m_target, lo, hi, estimate: 0.5 * (lo + hi) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Interpolation {
    Nearest,
    /// Periodic cubic spline with `refine` points per site.
    Cubic { refine: usize },
}

/// Site-by-time raster; `values[i][j]` is the field at `times[i]` and position `sites[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HovGrid {
    #[serde(rename = "N")]
    pub n: usize,
    pub times: Vec<f64>,
    pub sites: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Second derivatives of the periodic cubic spline through `y` at unit spacing.
struct PeriodicSpline {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PeriodicSpline {
    fn new(n: usize) -> Self {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] += 4.0;
            a[(i, (i + 1) % n)] += 1.0;
            a[(i, (i + n - 1) % n)] += 1.0;
        }
        PeriodicSpline { lu: a.lu() }
    }

    fn sample(&self, y: &[f64], refine: usize) -> Vec<f64> {
        let n = y.len();
        let rhs = DVector::from_fn(n, |i, _| 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]));
        let m = self.lu.solve(&rhs).expect("periodic spline system is nonsingular");
        let mut out = Vec::with_capacity(n * refine);
        for i in 0..n {
            let (y0, y1, m0, m1) = (y[i], y[(i + 1) % n], m[i], m[(i + 1) % n]);
            for r in 0..refine {
                let s = r as f64 / refine as f64;
                let a = 1.0 - s;
                out.push(a * y0 + s * y1 + ((a * a * a - a) * m0 + (s * s * s - s) * m1) / 6.0);
            }
        }
        out
    }
}

pub fn hovmoeller_grid(traj: &Trajectory, t0: f64, t1: f64, interp: Interpolation) -> Result<HovGrid> {
    let n = traj.n();
    let rows: Vec<usize> = (0..traj.len()).filter(|&i| traj.times[i] >= t0 - 1e-9 && traj.times[i] <= t1 + 1e-9).collect();
    if rows.is_empty() || n == 0 {
        return Err(Error::InvalidArgument(format!("no samples in [{t0}, {t1}]")));
    }
    let times = rows.iter().map(|&i| traj.times[i]).collect();
    let (sites, values) = match interp {
        Interpolation::Nearest => ((0..n).map(|j| j as f64).collect(), rows.iter().map(|&i| traj.states[i].clone()).collect()),
        Interpolation::Cubic { refine } => {
            if refine == 0 {
                return Err(Error::InvalidArgument("refine must be at least 1".into()));
            }
            let spline = PeriodicSpline::new(n);
            (
                (0..n * refine).map(|j| j as f64 / refine as f64).collect(),
                rows.iter().map(|&i| spline.sample(&traj.states[i], refine)).collect(),
            )
        }
    };
    Ok(HovGrid { n, times, sites, values })
}

impl HovGrid {
    /// Long form `t,s,x`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "s", "x"])?;
        for (t, row) in self.times.iter().zip(&self.values) {
            for (s, v) in self.sites.iter().zip(row) {
                wr.write_record([t.to_string(), s.to_string(), v.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Raster image with site along x and time increasing downwards, at most 400 rows.
    pub fn to_svg(&self) -> String {
        let stride = self.times.len().div_ceil(400).max(1);
        let rows: Vec<&Vec<f64>> = self.values.iter().step_by(stride).collect();
        let (lo, hi) = rows
            .iter()
            .flat_map(|r| r.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (cw, ch) = (4.0, 2.0);
        let width = cw * self.sites.len() as f64;
        let height = ch * rows.len() as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" shape-rendering="crispEdges">"#
        );
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let u = (v - lo) / span;
                let (r, g, b) = ((255.0 * u) as u8, (255.0 * (1.0 - (2.0 * u - 1.0).abs())) as u8, (255.0 * (1.0 - u)) as u8);
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{cw}" height="{ch}" fill="rgb({r},{g},{b})"/>"#,
                    cw * j as f64,
                    ch * i as f64
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrestFit {
    /// Signed drift in sites per time; negative is leftward (decreasing site index).
    pub velocity: f64,
    pub segments: usize,
    /// Unwrapped crest positions `(t, s)` of all tracked segments.
    pub points: Vec<(f64, f64)>,
}

impl CrestFit {
    pub fn speed(&self) -> f64 {
        self.velocity.abs()
    }
}

fn local_maxima(row: &[f64], spacing: f64) -> Vec<(f64, f64)> {
    let w = row.len();
    let mean = row.iter().sum::<f64>() / w as f64;
    let mut out = Vec::new();
    for j in 0..w {
        let (a, b, c) = (row[(j + w - 1) % w], row[j], row[(j + 1) % w]);
        if b > a && b >= c && b > mean {
            let denom = a - 2.0 * b + c;
            let off = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            out.push(((j as f64 + off) * spacing, b));
        }
    }
    out
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let (mt, ms) = pts.iter().fold((0.0, 0.0), |(a, b), (t, s)| (a + t / k, b + s / k));
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), (t, s)| (n + (t - mt) * (s - ms), d + (t - mt) * (t - mt)));
    num / den
}

/// Tracks wave crests from row to row and fits their drift. A crest that disappears ends its
/// segment and tracking restarts at the highest crest; segment slopes are averaged by duration.
pub fn crest_velocity(grid: &HovGrid, max_jump: f64, min_duration: f64) -> Result<CrestFit> {
    if grid.times.len() < 3 {
        return Err(Error::InvalidArgument("need at least three time rows".into()));
    }
    let n = grid.n as f64;
    let spacing = n / grid.sites.len() as f64;
    let wrap = |d: f64| d - n * (d / n).round();
    let mut segments: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current: Vec<(f64, f64)> = Vec::new();
    let mut pos = 0.0;
    let mut unwrapped = 0.0;
    for (t, row) in grid.times.iter().zip(&grid.values) {
        let peaks = local_maxima(row, spacing);
        if peaks.is_empty() {
            if !current.is_empty() {
                segments.push(std::mem::take(&mut current));
            }
            continue;
        }
        let next = if current.is_empty() {
            None
        } else {
            peaks
                .iter()
                .map(|&(s, _)| wrap(s - pos))
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                .filter(|d| d.abs() <= max_jump)
        };
        match next {
            Some(d) => {
                pos += d;
                unwrapped += d;
            }
            None => {
                if !current.is_empty() {
                    segments.push(std::mem::take(&mut current));
                }
                let top = peaks.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
                pos = top.0;
                unwrapped = top.0;
            }
        }
        pos = pos.rem_euclid(n);
        current.push((*t, unwrapped));
    }
    if !current.is_empty() {
        segments.push(current);
    }
    let kept: Vec<&Vec<(f64, f64)>> = segments
        .iter()
        .filter(|s| s.len() >= 5 && s.last().unwrap().0 - s[0].0 >= min_duration)
        .collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("no crest could be tracked for the minimum duration".into()));
    }
    let (mut acc, mut total) = (0.0, 0.0);
    for s in &kept {
        let dur = s.last().unwrap().0 - s[0].0;
        acc += slope(s) * dur;
        total += dur;
    }
    Ok(CrestFit {
        velocity: acc / total,
        segments: kept.len(),
        points: kept.iter().flat_map(|s| s.iter().copied()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfHopfRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub m1: usize,
    #[serde(rename = "F2")]
    pub f2: f64,
    pub m2: usize,
    #[serde(rename = "F3_star")]
    pub f3_star: f64,
    #[serde(rename = "F3_tilde")]
    pub f3_tilde: Option<f64>,
}

/// Analytic columns; spatial periods follow from the critical wavenumbers.
pub fn hopf_hopf_row(advection: &GMap, n: usize) -> Result<HopfHopfRow> {
    let hh = hopf_hopf(advection, n)?;
    Ok(HopfHopfRow {
        n,
        f1: hh.f1,
        m1: mode_period(n, hh.mode_k),
        f2: hh.f2,
        m2: mode_period(n, hh.mode_l),
        f3_star: hh.f3_star,
        f3_tilde: None,
    })
}

pub fn write_hopf_hopf_csv<W: Write>(rows: &[HopfHopfRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Sites below `n/2` take `left = (alpha, beta, gamma)`, the rest take `right`.
pub fn split_system(advection: GMap, n: usize, left: [f64; 3], right: [f64; 3]) -> Result<SystemSpec> {
    let pick = |c: usize| (0..n).map(|i| if i < n / 2 { left[c] } else { right[c] }).collect::<Vec<_>>();
    SystemSpec::new(advection, pick(0), pick(1), Forcing::Constant(pick(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_rk4_sampled;
    use crate::gmap::g3;
    use proptest::prelude::*;

    fn synthetic(n: usize, k: usize) -> Vec<f64> {
        (0..n).map(|j| (2.0 * PI * (k * j) as f64 / n as f64).cos()).collect()
    }

    #[test]
    fn spatial_period_examples() {
        assert_eq!(spatial_period(&[3.0; 36]).unwrap().m, 1);
        assert_eq!(spatial_period(&synthetic(36, 8)).unwrap(), SpatialPeriod { m: 9, matched: true });
        let mut x = synthetic(36, 8);
        x[5] += 0.5;
        assert_eq!(spatial_period(&x).unwrap(), SpatialPeriod { m: 36, matched: false });
        assert_eq!(mode_period(14, 3), 14);
        assert_eq!(mode_period(14, 2), 7);
        assert_eq!(mode_period(36, 8), 9);
    }

    #[test]
    fn temporal_period_examples() {
        let times: Vec<f64> = (0..=6000).map(|i| i as f64 * 0.01).collect();
        let wave = Trajectory {
            states: times.iter().map(|t| vec![(2.0 * PI * t / 3.8).sin() + 0.3 * (4.0 * PI * t / 3.8).cos()]).collect(),
            times: times.clone(),
            meta: Default::default(),
        };
        let p = temporal_period(&wave, 0, 50.0).unwrap().unwrap();
        assert!((p - 3.8).abs() < 1e-3, "{p}");
        let flat = Trajectory { states: vec![vec![1.0]; times.len()], times: times.clone(), meta: Default::default() };
        assert_eq!(temporal_period(&flat, 0, 50.0).unwrap(), None);
        assert!(temporal_period(&flat, 0, 100.0).is_err());
    }

    #[test]
    fn chaotic_run_has_no_period() {
        let sys = SystemSpec::l96(36, 8.0).unwrap();
        let x0 = random_initial(36, 8.0, 1, 0);
        let warm = integrate_adaptive(&sys, &x0, 0.0, 100.0, &AdaptiveOptions::default()).unwrap();
        let tr = integrate_rk4_sampled(&sys, warm.last_state(), 0.0, 60.0, 0.005, 2).unwrap();
        assert_eq!(temporal_period(&tr, 0, PERIOD_WINDOW).unwrap(), None);
    }

    #[test]
    fn small_ensemble_is_deterministic() {
        let cfg = EnsembleConfig { runs: 6, t_end: 200.0, seed: 42, jobs: Some(2), ..Default::default() };
        let a = ensemble_search(&g3(), 12, 1.5, &cfg).unwrap();
        let b = ensemble_search(&g3(), 12, 1.5, &EnsembleConfig { jobs: Some(1), ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        let total: usize = a.classes.iter().map(|c| c.member_count).sum();
        assert_eq!(total + a.unclassified, 6);
        for c in &a.classes {
            assert_eq!(12 % c.spatial_period, 0);
        }
    }

    #[test]
    fn periodic_embedding() {
        // a settled 12-site cycle tiled three times stays 12-periodic on 36 sites
        let small = SystemSpec::l96(12, 1.5).unwrap();
        let st = settle(&small, &random_initial(12, 1.5, 9, 0), 300.0, 1e-9, 1e-11).unwrap();
        let tiled: Vec<f64> = st.state.iter().cycle().take(36).copied().collect();
        let big = SystemSpec::l96(36, 1.5).unwrap();
        let big_st = settle(&big, &tiled, 100.0, 1e-9, 1e-11).unwrap();
        assert_eq!(big_st.period.m, st.period.m);
    }

    #[test]
    fn modulation_separates_rotating_and_modulated_waves() {
        let n = 36;
        let wave = |t: f64, eps: f64| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let ph = 2.0 * PI * 7.0 * j as f64 / n as f64 + 1.3 * t;
                    (1.0 + eps * (0.2 * t).sin()) * ph.cos() + 0.3 * (2.0 * ph).sin()
                })
                .collect()
        };
        let rot: Vec<Vec<f64>> = (0..50).map(|i| wave(i as f64, 0.0)).collect();
        let modd: Vec<Vec<f64>> = (0..50).map(|i| wave(i as f64, 0.05)).collect();
        let r: Vec<&[f64]> = rot.iter().map(|v| v.as_slice()).collect();
        let m: Vec<&[f64]> = modd.iter().map(|v| v.as_slice()).collect();
        assert!(modulation(&r) < 1e-12);
        assert!(modulation(&m) > 0.05);
    }

    #[test]
    fn spline_reproduces_samples_and_smooth_waves() {
        let y = synthetic(36, 3);
        let spline = PeriodicSpline::new(36);
        let fine = spline.sample(&y, 4);
        for j in 0..36 {
            assert!((fine[4 * j] - y[j]).abs() < 1e-12);
        }
        for (i, v) in fine.iter().enumerate() {
            let want = (2.0 * PI * 3.0 * i as f64 / 144.0).cos();
            assert!((v - want).abs() < 2e-3);
        }
    }

    #[test]
    fn crest_tracking_on_synthetic_wave() {
        let n = 36;
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let c = -1.2;
        let traj = Trajectory {
            states: times
                .iter()
                .map(|t| (0..n).map(|j| (2.0 * PI * 4.0 * (j as f64 - c * t) / n as f64).cos()).collect())
                .collect(),
            times,
            meta: Default::default(),
        };
        let grid = hovmoeller_grid(&traj, 0.0, 10.0, Interpolation::Cubic { refine: 4 }).unwrap();
        assert_eq!(grid.sites.len(), 144);
        assert_eq!(grid.times.len(), 1001);
        let fit = crest_velocity(&grid, 0.5, 0.5).unwrap();
        assert!((fit.velocity - c).abs() < 1e-2, "{fit:?}");
        assert_eq!(fit.segments, 1);
        assert!(hovmoeller_grid(&traj, 20.0, 30.0, Interpolation::Nearest).is_err());
        let svg = grid.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let mut buf = Vec::new();
        hovmoeller_grid(&traj, 0.0, 0.01, Interpolation::Nearest).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,s,x\n0,0,1\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 36);
    }

    #[test]
    fn hopf_hopf_analytic_columns() {
        let row = hopf_hopf_row(&g3(), 36).unwrap();
        assert_eq!((row.m1, row.m2), (9, 36));
        assert!((row.f1 - 0.898198).abs() < 1e-6 && (row.f2 - 0.902474).abs() < 1e-6);
        let mut buf = Vec::new();
        write_hopf_hopf_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,F1,m1,F2,m2,F3_star,F3_tilde\n36,"));
        assert!(text.trim_end().ends_with(','));
    }

    #[test]
    fn split_system_right_half_flattens() {
        let sys = split_system(g3(), 100, [1.0, 1.0, 2.0], [1.0, 1.5, 1.0]).unwrap();
        assert_eq!(sys.beta()[49], 1.0);
        assert_eq!(sys.beta()[50], 1.5);
        let x0: Vec<f64> = random_initial(100, 1.0, 2, 0);
        let tr = integrate_adaptive(&sys, &x0, 0.0, 200.0, &AdaptiveOptions::default()).unwrap();
        let x = tr.last_state();
        // F = alpha gamma / beta^2 < 1/2 on the right: stationary near gamma / beta there
        let flat = (60..95).filter(|&i| (x[i] - 1.0 / 1.5).abs() < 0.05).count();
        assert!(flat >= 20, "{:?}", &x[50..]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn spatial_period_is_rotation_invariant(k in 0usize..36, shift in 0usize..36, amp in 0.1f64..5.0) {
            let x: Vec<f64> = synthetic(36, k).iter().map(|v| amp * v + 1.0).collect();
            let mut r = x.clone();
            r.rotate_left(shift);
            let m = spatial_period(&x).unwrap().m;
            prop_assert_eq!(m, spatial_period(&r).unwrap().m);
            prop_assert_eq!(m, if k == 0 { 1 } else { mode_period(36, k) });
        }
    }
}
