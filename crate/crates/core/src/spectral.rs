//! Circulant structure of linearizations at constant states.
//!
//! The linearization of an equivariant map at `e` is circulant, so its eigenvalues are the
//! values of the Laurent polynomial `p_A` (generated by the first row) at the N-th roots of
//! unity, with the Fourier columns `q_l` as eigenvectors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmap::{GMap, Monomial};

/// `e^{2 pi i j / n}`, computed directly from the reduced exponent.
pub fn unit_root(n: usize, j: i64) -> Complex64 {
    let r = j.rem_euclid(n as i64) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * r / n as f64)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaurentPoly {
    coeffs: BTreeMap<i32, f64>,
}

impl LaurentPoly {
    pub fn new(coeffs: impl IntoIterator<Item = (i32, f64)>) -> Self {
        let mut m = BTreeMap::new();
        for (j, c) in coeffs {
            *m.entry(j).or_insert(0.0) += c;
        }
        m.retain(|_, c| *c != 0.0);
        LaurentPoly { coeffs: m }
    }

    pub fn of(g: &GMap) -> Self {
        laurent_of(g)
    }

    pub fn coeffs(&self) -> &BTreeMap<i32, f64> {
        &self.coeffs
    }

    pub fn coeff(&self, j: i32) -> f64 {
        self.coeffs.get(&j).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest |exponent|.
    pub fn radius(&self) -> usize {
        self.coeffs.keys().map(|j| j.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().map(|(&j, &c)| c * z.powi(j)).sum()
    }

    /// `p(e^{2 pi i s})`.
    pub fn eval_unit(&self, s: f64) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(&j, &c)| c * Complex64::from_polar(1.0, 2.0 * PI * j as f64 * s))
            .sum()
    }

    /// `p(omega_n^j)` with every power reduced modulo `n` before evaluation.
    pub fn at_root(&self, n: usize, j: i64) -> Complex64 {
        self.coeffs.iter().map(|(&e, &c)| c * unit_root(n, j * e as i64)).sum()
    }

    /// `z -> p(1/z)`.
    pub fn reflect(&self) -> Self {
        LaurentPoly::new(self.coeffs.iter().map(|(&j, &c)| (-j, c)))
    }

    /// `p(1)`, the coefficient sum.
    pub fn sum(&self) -> f64 {
        self.coeffs.values().sum()
    }

    /// Re p(e^{2 pi i s}) as a cosine polynomial.
    pub fn lambda_r(&self, s: f64) -> f64 {
        self.coeffs.iter().map(|(&j, &c)| c * (2.0 * PI * j as f64 * s).cos()).sum()
    }

    /// Im p(e^{2 pi i s}) as a sine polynomial.
    pub fn lambda_i(&self, s: f64) -> f64 {
        self.coeffs.iter().map(|(&j, &c)| c * (2.0 * PI * j as f64 * s).sin()).sum()
    }

    /// Derivative of [`Self::lambda_i`] with respect to `s`.
    pub fn lambda_i_prime(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&j, &c)| c * 2.0 * PI * j as f64 * (2.0 * PI * j as f64 * s).cos())
            .sum()
    }

    /// Same polynomial on N-th roots of unity, exponents moved into `(-n/2, n/2]`.
    pub fn folded(&self, n: usize) -> Self {
        let n = n as i32;
        LaurentPoly::new(self.coeffs.iter().map(|(&j, &c)| {
            let mut r = j.rem_euclid(n);
            if 2 * r > n {
                r -= n;
            }
            (r, c)
        }))
    }

    /// First row of the circulant matrix this polynomial generates on `n` sites.
    pub fn first_row(&self, n: usize) -> Vec<f64> {
        let mut row = vec![0.0; n];
        for (&j, &c) in &self.coeffs {
            row[j.rem_euclid(n as i32) as usize] += c;
        }
        row
    }

    /// Inverse of [`Self::first_row`] using the `(-n/2, n/2]` exponent window.
    pub fn from_first_row(row: &[f64]) -> Self {
        let n = row.len() as i32;
        LaurentPoly::new(row.iter().enumerate().map(|(j, &c)| {
            let j = j as i32;
            (if 2 * j > n { j - n } else { j }, c)
        }))
    }
}

/// Laurent polynomial of the linearization at `e`: `d_j = sum c ([a = j] + [b = j])`.
pub fn laurent_of(g: &GMap) -> LaurentPoly {
    LaurentPoly::new(g.terms().iter().flat_map(|t| [(t.a, t.c), (t.b, t.c)]))
}

/// `F p(omega^j) - 1` for `j = 0 .. n-1`.
pub fn eigenvalues(p: &LaurentPoly, n: usize, f: f64) -> Vec<Complex64> {
    (0..n as i64).map(|j| f * p.at_root(n, j) - 1.0).collect()
}

pub fn circulant(first_row: &[f64]) -> DMatrix<f64> {
    let n = first_row.len();
    DMatrix::from_fn(n, n, |i, j| first_row[(j + n - i) % n])
}

/// Two-variable symbol `P(z, w) = sum c (z^a w^b + z^b w^a)` of the bilinear form.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearSymbol {
    terms: Vec<Monomial>,
}

impl BilinearSymbol {
    pub fn eval(&self, z: Complex64, w: Complex64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.c * (z.powi(t.a) * w.powi(t.b) + z.powi(t.b) * w.powi(t.a)))
            .sum()
    }

    /// `P(omega^j, omega^l)` with exponents reduced modulo `n`.
    pub fn at_roots(&self, n: usize, j: i64, l: i64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let (a, b) = (t.a as i64, t.b as i64);
                t.c * (unit_root(n, a * j + b * l) + unit_root(n, b * j + a * l))
            })
            .sum()
    }

    /// `Q_rs` with `P(z, w) = sum z^r Q_rs w^s`, symmetric.
    pub fn q_entries(&self) -> BTreeMap<(i32, i32), f64> {
        let mut q = BTreeMap::new();
        for t in &self.terms {
            *q.entry((t.a, t.b)).or_insert(0.0) += t.c;
            *q.entry((t.b, t.a)).or_insert(0.0) += t.c;
        }
        q
    }

    /// `P(z, 1)`, equal to the Laurent polynomial of the linearization at `e`.
    pub fn diagonal_restriction(&self) -> LaurentPoly {
        LaurentPoly::new(self.terms.iter().flat_map(|t| [(t.a, t.c), (t.b, t.c)]))
    }
}

pub fn bilinear_symbol(g: &GMap) -> BilinearSymbol {
    BilinearSymbol { terms: g.terms().to_vec() }
}

/// Column `l` of the unitary Fourier matrix: entries `omega^{k l} / sqrt(n)`.
pub fn fourier_column(n: usize, l: usize) -> Result<Vec<Complex64>> {
    if l >= n {
        return Err(Error::InvalidArgument(format!("Fourier index {l} out of range for N = {n}")));
    }
    let s = 1.0 / (n as f64).sqrt();
    Ok((0..n as i64).map(|k| s * unit_root(n, k * l as i64)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusPoint {
    pub i: usize,
    pub j: usize,
    pub z: Complex64,
    pub w: Complex64,
    pub modulus: f64,
}

/// Grid points `(omega_grid^i, omega_grid^j)` where `|P| < tol`.
pub fn torus_zero_check(symbol: &BilinearSymbol, grid: usize, tol: f64) -> Result<Vec<TorusPoint>> {
    if grid < 12 {
        return Err(Error::InvalidArgument(format!("torus grid must be at least 12, got {grid}")));
    }
    let mut out = Vec::new();
    for i in 0..grid {
        for j in 0..grid {
            let v = symbol.at_roots(grid, i as i64, j as i64).norm();
            if v < tol {
                out.push(TorusPoint {
                    i,
                    j,
                    z: unit_root(grid, i as i64),
                    w: unit_root(grid, j as i64),
                    modulus: v,
                });
            }
        }
    }
    Ok(out)
}

/// Image of the unit circle under `p` plus the N discrete eigenvalue locations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCurve {
    pub samples: Vec<(f64, Complex64)>,
    pub discrete: Vec<(usize, Complex64)>,
}

pub fn eigencurve(p: &LaurentPoly, n: usize, samples: usize) -> EigenCurve {
    let samples = samples.max(2);
    EigenCurve {
        samples: (0..=samples)
            .map(|i| {
                let s = i as f64 / samples as f64;
                (s, p.eval_unit(s))
            })
            .collect(),
        discrete: (0..n).map(|j| (j, p.at_root(n, j as i64))).collect(),
    }
}

impl EigenCurve {
    pub fn write_curve_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s", "re", "im"])?;
        for (s, z) in &self.samples {
            wr.serialize((s, z.re, z.im))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_discrete_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["j", "re", "im"])?;
        for (j, z) in &self.discrete {
            wr.serialize((j, z.re, z.im))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Sign changes of the imaginary part along the closed curve.
    pub fn real_axis_crossings(&self) -> usize {
        let im: Vec<f64> = self
            .samples
            .iter()
            .map(|(_, z)| if z.im.abs() < 1e-12 { 0.0 } else { z.im })
            .filter(|v| *v != 0.0)
            .collect();
        let mut count = im.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        if let (Some(first), Some(last)) = (im.first(), im.last()) {
            if first.signum() != last.signum() {
                count += 1;
            }
        }
        count
    }

    pub fn to_svg(&self) -> String {
        let pts = self.samples.iter().map(|(_, z)| *z).chain(self.discrete.iter().map(|(_, z)| *z));
        let (mut lo, mut hi) = (Complex64::new(-1.0, -1.0), Complex64::new(1.0, 1.0));
        for z in pts {
            lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        let span = (hi.re - lo.re).max(hi.im - lo.im) * 1.1;
        let (cx, cy) = ((hi.re + lo.re) / 2.0, (hi.im + lo.im) / 2.0);
        let size = 480.0;
        let map = |z: Complex64| {
            (size / 2.0 + (z.re - cx) / span * size, size / 2.0 - (z.im - cy) / span * size)
        };
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let (ax, _) = map(Complex64::new(0.0, 0.0));
        let _ = writeln!(svg, r#"<line x1="{ax:.2}" y1="0" x2="{ax:.2}" y2="{size}" stroke="gray" stroke-dasharray="4 3"/>"#);
        let path: Vec<String> = self
            .samples
            .iter()
            .map(|(_, z)| {
                let (x, y) = map(*z);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="black" points="{}"/>"#, path.join(" "));
        for (_, z) in &self.discrete {
            let (x, y) = map(*z);
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="crimson"/>"#);
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmap::{self, basis, g0, g1, g3};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn table_one_polynomials() {
        let expect: [(&str, &[(i32, f64)]); 8] = [
            ("G1", &[(-1, -1.0), (0, -1.0), (1, 2.0)]),
            ("G2", &[(-2, -1.0), (0, -1.0), (2, 2.0)]),
            ("G3", &[(-2, -1.0), (1, 1.0)]),
            ("G4", &[(-3, -1.0), (0, -1.0), (3, 2.0)]),
            ("G5", &[(-2, -1.0), (1, -1.0), (2, 1.0), (3, 1.0)]),
            ("G6", &[(-1, -1.0), (1, 1.0), (2, -1.0), (3, 1.0)]),
            ("G7", &[(-2, -1.0), (-1, -1.0), (1, 1.0), (2, 1.0)]),
            ("G8", &[(-3, -1.0), (-1, -1.0), (2, 1.0), (3, 1.0)]),
        ];
        for (name, coeffs) in expect {
            let g = gmap::parse(name).unwrap().resolved;
            assert_eq!(laurent_of(&g), LaurentPoly::new(coeffs.iter().copied()), "{name}");
        }
        assert!(laurent_of(&g0()).is_zero());
    }

    #[test]
    fn tilde_reflects_polynomial() {
        for g in basis(3).unwrap() {
            assert_eq!(laurent_of(&g.tilde()), laurent_of(&g).reflect());
        }
    }

    #[test]
    fn l96_eigenvalues_n36() {
        let p = laurent_of(&g3());
        let ev = eigenvalues(&p, 36, 1.0);
        assert!(close(ev[6], Complex64::new(0.0, 3f64.sqrt()), 1e-12));
        assert!(close(ev[18] + 1.0, Complex64::new(-2.0, 0.0), 1e-12));
        assert!(close(ev[0], Complex64::new(-1.0, 0.0), 1e-15));
    }

    #[test]
    fn first_row_matches_linearization() {
        let g = g3();
        let a = g.linearize_at(&[1.0; 12]).unwrap();
        let row: Vec<f64> = a.row(0).iter().copied().collect();
        assert_eq!(laurent_of(&g).first_row(12), row);
        assert_eq!(LaurentPoly::from_first_row(&row), laurent_of(&g));
        assert_eq!(circulant(&row), a);
    }

    #[test]
    fn eigenvalues_agree_with_dense_solver() {
        for (g, n) in [(g3(), 36), (g1(), 10), (gmap::g5() + gmap::g6().tilde(), 17)] {
            let p = laurent_of(&g);
            let row = p.first_row(n);
            let m = circulant(&row) * 1.3 - DMatrix::identity(n, n);
            let mut dense: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
            for lam in eigenvalues(&p, n, 1.3) {
                let (idx, d) = dense
                    .iter()
                    .enumerate()
                    .map(|(i, z)| (i, (z - lam).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(d < 1e-10, "{lam} off by {d}");
                dense.swap_remove(idx);
            }
        }
    }

    #[test]
    fn fourier_columns() {
        let n = 8;
        let q0 = fourier_column(n, 0).unwrap();
        assert!(q0.iter().all(|z| close(*z, Complex64::new(1.0 / 8f64.sqrt(), 0.0), 1e-15)));
        for k in 0..n {
            let qk = fourier_column(n, k).unwrap();
            let conj = fourier_column(n, (n - k) % n).unwrap();
            assert!(qk.iter().zip(&conj).all(|(a, b)| close(a.conj(), *b, 1e-14)));
            for l in 0..n {
                let ql = fourier_column(n, l).unwrap();
                let ip: Complex64 = qk.iter().zip(&ql).map(|(a, b)| a.conj() * b).sum();
                let want = if k == l { 1.0 } else { 0.0 };
                assert!(close(ip, Complex64::new(want, 0.0), 1e-14));
            }
        }
        assert!(fourier_column(n, n).is_err());
    }

    #[test]
    fn circulant_fourier_diagonalization() {
        let row = [0.3, -1.2, 0.5, 2.0, -0.7, 0.1, 0.9, -0.4];
        let a = circulant(&row).map(|v| Complex64::new(v, 0.0));
        let p = LaurentPoly::from_first_row(&row);
        for l in 0..8 {
            let q = DVector::from_vec(fourier_column(8, l).unwrap());
            let lhs = &a * &q;
            let rhs = q * p.at_root(8, l as i64);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn l96_symbol() {
        let sym = bilinear_symbol(&g3());
        let pl = |z: Complex64, w: Complex64| {
            (w - w.powi(-2)) / z + (z - z.powi(-2)) / w
        };
        let z = Complex64::from_polar(1.0, 0.37);
        let w = Complex64::from_polar(1.0, -1.91);
        assert!(close(sym.eval(z, w), pl(z, w), 1e-13));
        assert!(close(sym.eval(z, w), sym.eval(w, z), 1e-13));
        assert_eq!(sym.diagonal_restriction(), laurent_of(&g3()));
        let one = Complex64::new(1.0, 0.0);
        assert!(sym.eval(one, one).norm() < 1e-15);
        let r = unit_root(3, 1);
        assert!(sym.eval(r, r.conj()).norm() < 1e-12);
    }

    #[test]
    fn l96_on_fourier_mode() {
        let n = 12;
        let g = g3();
        for k in 0..n {
            let q = fourier_column(n, k).unwrap();
            let q2 = fourier_column(n, (2 * k) % n).unwrap();
            let coef = (1.0 - unit_root(n, k as i64).powi(-3)) / (n as f64).sqrt();
            for i in 0..n {
                let direct: Complex64 = g
                    .terms()
                    .iter()
                    .map(|t| {
                        let at = |o: i32| q[(i as i32 + o).rem_euclid(n as i32) as usize];
                        t.c * at(t.a) * at(t.b)
                    })
                    .sum();
                assert!(close(direct, coef * q2[i], 1e-13));
            }
        }
    }

    #[test]
    fn symbol_predicts_bilinear_action() {
        let n = 12;
        let g = g3() + gmap::g5().scaled(0.5) - gmap::g2().tilde();
        let sym = bilinear_symbol(&g);
        for k in 0..n {
            let qk = fourier_column(n, k).unwrap();
            for l in 0..n {
                let ql = fourier_column(n, l).unwrap();
                let target = fourier_column(n, (k + l) % n).unwrap();
                let re = |v: &[Complex64]| v.iter().map(|z| z.re).collect::<Vec<_>>();
                let im = |v: &[Complex64]| v.iter().map(|z| z.im).collect::<Vec<_>>();
                // complex bilinear extension from four real evaluations
                let rr = g.bilinear(&re(&qk), &re(&ql)).unwrap();
                let ii = g.bilinear(&im(&qk), &im(&ql)).unwrap();
                let ri = g.bilinear(&re(&qk), &im(&ql)).unwrap();
                let ir = g.bilinear(&im(&qk), &re(&ql)).unwrap();
                let c = sym.at_roots(n, k as i64, l as i64) / (n as f64).sqrt();
                for i in 0..n {
                    let b = Complex64::new(rr[i] - ii[i], ri[i] + ir[i]);
                    assert!(close(b, c * target[i], 1e-10));
                }
            }
        }
    }

    #[test]
    fn perturbed_torus_zeros_sit_on_cube_roots() {
        let sym = bilinear_symbol(&g3());
        let zeros = torus_zero_check(&sym, 360, 1e-9).unwrap();
        assert!(!zeros.is_empty());
        for p in &zeros {
            assert_eq!(p.i % 120, 0);
            assert_eq!(p.j % 120, 0);
        }
        assert!(zeros.iter().any(|p| p.i == 120 && p.j == 240));
        assert!(torus_zero_check(&sym, 11, 1e-9).is_err());
    }

    #[test]
    fn curve_shapes() {
        // the G2 and G4 ellipses are traced two and three times
        for (name, crossings) in [("G1", 2), ("G2", 4), ("G4", 6)] {
            let p = laurent_of(&gmap::parse(name).unwrap().resolved);
            assert_eq!(eigencurve(&p, 12, 720).real_axis_crossings(), crossings, "{name}");
        }
        let p7 = laurent_of(&gmap::g7());
        assert!(eigencurve(&p7, 12, 720).samples.iter().all(|(_, z)| z.re.abs() < 1e-12));
        let c = eigencurve(&laurent_of(&g3()), 36, 720);
        assert!(close(c.samples[0].1, c.samples.last().unwrap().1, 1e-12));
        assert_eq!(c.discrete.len(), 36);
        assert!(c.to_svg().contains("<polyline"));
    }

    #[test]
    fn curve_csv_layout() {
        let c = eigencurve(&laurent_of(&g3()), 6, 4);
        let mut buf = Vec::new();
        c.write_curve_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,re,im\n0.0,"));
        assert_eq!(text.lines().count(), 6);
        let mut buf = Vec::new();
        c.write_discrete_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("j,re,im\n0,"));
    }

    #[test]
    fn folding_window() {
        let p = LaurentPoly::new([(5, 1.0), (-2, 2.0)]);
        let f = p.folded(6);
        assert_eq!(f, LaurentPoly::new([(-1, 1.0), (-2, 2.0)]));
        for j in 0..6 {
            assert!(close(p.at_root(6, j), f.at_root(6, j), 1e-13));
        }
    }

    fn combo() -> impl Strategy<Value = GMap> {
        prop::collection::vec(-3.0f64..3.0, 12).prop_map(|w| {
            basis(3).unwrap().into_iter().zip(w).fold(GMap::zero(), |acc, (g, c)| acc + g.scaled(c))
        })
    }

    proptest! {
        #[test]
        fn coefficient_sum_vanishes(g in combo()) {
            prop_assert!(laurent_of(&g).sum().abs() < 1e-12);
        }

        #[test]
        fn curve_is_conjugate_symmetric(g in combo(), s in 0.0f64..1.0) {
            let p = laurent_of(&g);
            prop_assert!(close(p.eval_unit(s).conj(), p.eval_unit(1.0 - s), 1e-11));
            let z = Complex64::from_polar(1.0, 2.0 * PI * s);
            prop_assert!(close(p.eval(z.conj()).conj(), p.eval(z), 1e-11));
        }

        #[test]
        fn eigenvalue_oracle(g in combo(), n in 8usize..40, f in -3.0f64..3.0) {
            let p = laurent_of(&g);
            let m = g.linearize_at(&vec![1.0; n]).unwrap() * f - DMatrix::identity(n, n);
            for (j, lam) in eigenvalues(&p, n, f).into_iter().enumerate() {
                let q = DVector::from_vec(fourier_column(n, j).unwrap());
                let mq = m.map(|v| Complex64::new(v, 0.0)) * &q;
                prop_assert!((mq - q * lam).norm() < 1e-10 * (1.0 + lam.norm()));
            }
            prop_assert!(close(eigenvalues(&p, n, f)[0], Complex64::new(-1.0, 0.0), 1e-11));
        }
    }
}
