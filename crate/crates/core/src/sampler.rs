//! Realisations of Gaussian Laplace eigenfunctions with analytic derivatives.
//!
//! Torus fields are `f = N^{-1/2} Σ_{ξ∈Λ_n} a_ξ e^{2πi⟨ξ,x⟩}` with
//! `a_{−ξ} = conj(a_ξ)`. Sphere fields are
//! `f = √(4π/(2n+1)) Σ_m a_m Y_{n,m}` in the Condon–Shortley basis, where
//! `a_{−m} = (−1)^m conj(a_m)` and `a_0` is real. Both have unit variance.
//!
//! Derivative fields are the frame components of the gradient and Hessian:
//! on the torus `∂₁, ∂₂` and `∂ᵢ∂ⱼ`; on the sphere the orthonormal frame
//! `(∂_θ, sin⁻¹θ ∂_φ)` and the covariant Hessian in that frame.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, FrequencySet};
use crate::manifold::Manifold;
use crate::rng;
use crate::special;

/// Rows closer than this to a pole are dropped from sphere grids.
pub const POLAR_THETA_MIN: f64 = 1e-3;

/// Identifies one realisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    pub manifold: Manifold,
    pub n: u64,
    pub eigenvalue: f64,
    pub seed: u64,
}

impl WaveSpec {
    pub fn new(manifold: Manifold, n: u64, seed: u64) -> Result<Self> {
        manifold.validate_energy(n)?;
        Ok(WaveSpec {
            manifold,
            n,
            eigenvalue: manifold.eigenvalue(n),
            seed,
        })
    }
}

/// Value, frame gradient and frame Hessian at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d12: f64,
    pub d22: f64,
}

fn standard_complex<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One arithmetic random wave, stored by its coefficients.
#[derive(Clone, Debug)]
pub struct TorusWave {
    pub spec: WaveSpec,
    pub frequencies: FrequencySet,
    /// `a_ξ` aligned with `frequencies.points`.
    pub coeffs: Vec<Complex64>,
}

impl TorusWave {
    /// Draws one complex Gaussian per orbit representative, in the order of
    /// `orbit_representatives`, and fills the antipodes by conjugation.
    pub fn draw(fs: &FrequencySet, seed: u64) -> Result<Self> {
        let spec = WaveSpec::new(Manifold::Torus, fs.n, seed)?;
        let mut rng = rng::generator(seed);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); fs.points.len()];
        for i in fs.orbit_representatives() {
            let a = standard_complex(&mut rng);
            coeffs[i] = a;
            coeffs[fs.antipode(i)] = a.conj();
        }
        Ok(TorusWave {
            spec,
            frequencies: fs.clone(),
            coeffs,
        })
    }

    /// Point evaluation at `x ∈ R²` (period 1 in each coordinate).
    pub fn jet(&self, x: [f64; 2]) -> Jet {
        let norm = (self.coeffs.len() as f64).sqrt().recip();
        let mut acc = [Complex64::new(0.0, 0.0); 6];
        for (&(a, b), &c) in self.frequencies.points.iter().zip(&self.coeffs) {
            let phase = 2.0 * PI * ((a as f64) * x[0] + (b as f64) * x[1]);
            accumulate_mode(&mut acc, c * Complex64::from_polar(1.0, phase), a, b);
        }
        finish_torus_jet(&acc, norm).0
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.jet(x).f
    }
}

/// Adds the contributions of one mode `c·e^{2πi⟨ξ,x⟩}` to the six sums.
/// Each derivative order multiplies by `2πi ξ_j`; the `2π` factors are
/// applied once in [`finish_torus_jet`].
#[inline]
fn accumulate_mode(acc: &mut [Complex64; 6], term: Complex64, a: i64, b: i64) {
    let (a, b) = (a as f64, b as f64);
    let it = Complex64::new(-term.im, term.re);
    acc[0] += term;
    acc[1] += it * a;
    acc[2] += it * b;
    acc[3] -= term * (a * a);
    acc[4] -= term * (a * b);
    acc[5] -= term * (b * b);
}

/// Scales the raw sums; also returns the largest imaginary part of `f`.
#[inline]
fn finish_torus_jet(acc: &[Complex64; 6], norm: f64) -> (Jet, f64) {
    let tp = 2.0 * PI;
    let s1 = norm * tp;
    let s2 = norm * tp * tp;
    (
        Jet {
            f: norm * acc[0].re,
            d1: s1 * acc[1].re,
            d2: s1 * acc[2].re,
            d11: s2 * acc[3].re,
            d12: s2 * acc[4].re,
            d22: s2 * acc[5].re,
        },
        norm * acc[0].im.abs(),
    )
}

/// One random spherical harmonic of degree `n`.
///
/// Stored in real form: `f = s₀ X₀ P̄_n^0 + Σ_{m≥1} √2 s₀ P̄_n^m (X_m cos mφ − Y_m sin mφ)`
/// with `s₀ = √(4π/(2n+1))` and all `X, Y` standard normal, equivalent to
/// `a_0 = X₀`, `a_m = (X_m + iY_m)/√2`.
#[derive(Clone, Debug)]
pub struct SphereWave {
    pub spec: WaveSpec,
    /// `(X_m, Y_m)` for `m = 0..=n`; `Y_0 = 0`.
    pub coeffs: Vec<(f64, f64)>,
}

impl SphereWave {
    /// Draws `X₀`, then `(X_m, Y_m)` for `m = 1..=n` in order.
    pub fn draw(n: u64, seed: u64) -> Result<Self> {
        let spec = WaveSpec::new(Manifold::Sphere, n, seed)?;
        let mut rng = rng::generator(seed);
        let mut coeffs = Vec::with_capacity(n as usize + 1);
        coeffs.push((rng.sample(StandardNormal), 0.0));
        for _ in 1..=n {
            coeffs.push((rng.sample(StandardNormal), rng.sample(StandardNormal)));
        }
        Ok(SphereWave { spec, coeffs })
    }

    /// Complex coefficient `a_m` for `m ∈ [−n, n]`.
    pub fn complex_coeff(&self, m: i64) -> Complex64 {
        let k = m.unsigned_abs() as usize;
        let (x, y) = self.coeffs[k];
        if k == 0 {
            return Complex64::new(x, 0.0);
        }
        let a = Complex64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2;
        match (m < 0, k % 2 == 1) {
            (false, _) => a,
            (true, false) => a.conj(),
            (true, true) => -a.conj(),
        }
    }

    fn scale(&self) -> (f64, f64) {
        let s0 = (4.0 * PI / (2.0 * self.spec.n as f64 + 1.0)).sqrt();
        (s0, s0 * std::f64::consts::SQRT_2)
    }

    /// `A_m(φ)` and `∂_φ A_m(φ)` for every order.
    fn angular(&self, phi: f64, a: &mut [f64], b: &mut [f64]) {
        let (s0, s) = self.scale();
        a[0] = s0 * self.coeffs[0].0;
        b[0] = 0.0;
        for (m, &(x, y)) in self.coeffs.iter().enumerate().skip(1) {
            let mf = m as f64;
            let (sn, cs) = (mf * phi).sin_cos();
            a[m] = s * (x * cs - y * sn);
            b[m] = -s * mf * (x * sn + y * cs);
        }
    }

    /// Point evaluation at colatitude `θ ∈ (0, π)` and longitude `φ`.
    pub fn jet(&self, theta: f64, phi: f64) -> Jet {
        let k = self.coeffs.len();
        let (mut a, mut b) = (vec![0.0; k], vec![0.0; k]);
        self.angular(phi, &mut a, &mut b);
        let jets = special::associated_legendre_theta_jets(self.spec.n as usize, theta);
        sphere_jet(&jets, &a, &b, theta)
    }

    /// Field value, valid at the poles too.
    pub fn value(&self, theta: f64, phi: f64) -> f64 {
        let n = self.spec.n as usize;
        let mut p = vec![0.0; n + 1];
        special::associated_legendre_row(n, theta.cos(), &mut p);
        let (mut a, mut b) = (vec![0.0; n + 1], vec![0.0; n + 1]);
        self.angular(phi, &mut a, &mut b);
        p.iter().zip(&a).map(|(p, a)| p * a).sum()
    }
}

/// Assembles the covariant jet from Legendre θ-jets and the angular factors.
#[inline]
fn sphere_jet(jets: &[[f64; 3]], a: &[f64], b: &[f64], theta: f64) -> Jet {
    let (mut f, mut ft, mut ftt, mut fp, mut ftp, mut fpp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (m, j) in jets.iter().enumerate() {
        let m2 = (m * m) as f64;
        f += j[0] * a[m];
        ft += j[1] * a[m];
        ftt += j[2] * a[m];
        fp += j[0] * b[m];
        ftp += j[1] * b[m];
        fpp -= m2 * j[0] * a[m];
    }
    let (s, c) = theta.sin_cos();
    let cot = c / s;
    Jet {
        f,
        d1: ft,
        d2: fp / s,
        d11: ftt,
        d12: (ftp - cot * fp) / s,
        d22: fpp / (s * s) + cot * ft,
    }
}

/// Diagnostics recorded alongside a grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    /// Largest `|Im f|` over nodes before the imaginary part is discarded.
    pub imag_residue: f64,
    /// Rows removed near the poles.
    pub excluded_rows: usize,
    /// Factor applied to the remaining weights to restore the total area.
    pub weight_renormalization: f64,
    /// Field values at the north and south pole (sphere only).
    pub poles: Option<[f64; 2]>,
}

/// A field and its derivatives sampled on a tensor grid, row-major with
/// index `r·cols + c`.
///
/// Torus: `axis0` holds `x₁ = r/M`, `axis1` holds `x₂ = c/M`.
/// Sphere: `axis0` holds colatitudes `θ` (increasing), `axis1` holds
/// longitudes `φ = 2πc/M_φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub spec: WaveSpec,
    pub rows: usize,
    pub cols: usize,
    pub axis0: Vec<f64>,
    pub axis1: Vec<f64>,
    pub f: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d11: Vec<f64>,
    pub d12: Vec<f64>,
    pub d22: Vec<f64>,
    pub weights: Vec<f64>,
    pub meta: GridMeta,
}

impl FieldGrid {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn manifold(&self) -> Manifold {
        self.spec.manifold
    }

    pub fn eigenvalue(&self) -> f64 {
        self.spec.eigenvalue
    }

    /// Sum of quadrature weights.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ g(node) dx` by the grid quadrature.
    pub fn integrate<F: Fn(usize) -> f64>(&self, g: F) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * g(i)).sum()
    }

    pub fn jet(&self, i: usize) -> Jet {
        Jet {
            f: self.f[i],
            d1: self.d1[i],
            d2: self.d2[i],
            d11: self.d11[i],
            d12: self.d12[i],
            d22: self.d22[i],
        }
    }

    pub fn min_value(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Builds a grid from an arbitrary jet function, with the same layout
    /// and weights as a sampled grid of this manifold and resolution.
    /// `spec` is recorded as given. Useful for deterministic test fields.
    pub fn from_function<F>(spec: WaveSpec, rows: usize, cols: usize, jet: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Jet + Sync,
    {
        let (axis0, axis1, weights, meta) = layout(spec.manifold, rows, cols)?;
        let rows = axis0.len();
        let jets: Vec<Jet> = (0..rows * cols)
            .into_par_iter()
            .map(|i| jet(axis0[i / cols], axis1[i % cols]))
            .collect();
        let mut g = FieldGrid::empty(spec, axis0, axis1, weights, meta);
        if spec.manifold == Manifold::Sphere {
            g.meta.poles = Some([jet(0.0, 0.0).f, jet(PI, 0.0).f]);
        }
        for (i, j) in jets.into_iter().enumerate() {
            g.set(i, j);
        }
        Ok(g)
    }

    fn empty(spec: WaveSpec, axis0: Vec<f64>, axis1: Vec<f64>, weights: Vec<f64>, meta: GridMeta) -> Self {
        let (rows, cols) = (axis0.len(), axis1.len());
        let z = vec![0.0; rows * cols];
        FieldGrid {
            spec,
            rows,
            cols,
            axis0,
            axis1,
            f: z.clone(),
            d1: z.clone(),
            d2: z.clone(),
            d11: z.clone(),
            d12: z.clone(),
            d22: z,
            weights,
            meta,
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: Jet) {
        self.f[i] = j.f;
        self.d1[i] = j.d1;
        self.d2[i] = j.d2;
        self.d11[i] = j.d11;
        self.d12[i] = j.d12;
        self.d22[i] = j.d22;
    }

    fn fill_rows(&mut self, rows: Vec<Vec<Jet>>) {
        for (r, row) in rows.into_iter().enumerate() {
            for (c, j) in row.into_iter().enumerate() {
                let i = self.index(r, c);
                self.set(i, j);
            }
        }
    }
}

/// Node coordinates, weights and polar metadata for a grid.
fn layout(manifold: Manifold, rows: usize, cols: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, GridMeta)> {
    if rows == 0 || cols == 0 {
        return Err(Error::ResolutionTooLow {
            got: rows.min(cols),
            min: 1,
        });
    }
    match manifold {
        Manifold::Torus => {
            let axis0: Vec<f64> = (0..rows).map(|r| r as f64 / rows as f64).collect();
            let axis1: Vec<f64> = (0..cols).map(|c| c as f64 / cols as f64).collect();
            let w = 1.0 / (rows * cols) as f64;
            let meta = GridMeta {
                weight_renormalization: 1.0,
                ..GridMeta::default()
            };
            Ok((axis0, axis1, vec![w; rows * cols], meta))
        }
        Manifold::Sphere => {
            // Gauss–Legendre in cos θ, uniform in φ: exact for band-limited
            // products of degree below 2·rows in θ and cols in φ.
            let (nodes, gw) = special::gauss_legendre(rows);
            let dphi = 2.0 * PI / cols as f64;
            let mut axis0 = Vec::with_capacity(rows);
            let mut row_w = Vec::with_capacity(rows);
            let mut excluded = 0;
            for (x, w) in nodes.iter().zip(&gw) {
                let theta = x.clamp(-1.0, 1.0).acos();
                if !(POLAR_THETA_MIN..=PI - POLAR_THETA_MIN).contains(&theta) {
                    excluded += 1;
                    continue;
                }
                axis0.push(theta);
                row_w.push(w * dphi);
            }
            if axis0.is_empty() {
                return Err(Error::PolarExclusion {
                    theta_min: POLAR_THETA_MIN,
                });
            }
            let kept: f64 = row_w.iter().sum::<f64>() * cols as f64;
            let scale = 4.0 * PI / kept;
            let axis1: Vec<f64> = (0..cols).map(|c| c as f64 * dphi).collect();
            let weights: Vec<f64> = row_w
                .iter()
                .flat_map(|&w| std::iter::repeat_n(w * scale, cols))
                .collect();
            let meta = GridMeta {
                excluded_rows: excluded,
                weight_renormalization: scale,
                ..GridMeta::default()
            };
            Ok((axis0, axis1, weights, meta))
        }
    }
}

/// Default sampling density. At eight points per wavelength marching-squares
/// lengths still move by up to 2% under refinement; sixteen keeps that
/// below 0.5%.
pub const DEFAULT_POINTS_PER_WAVELENGTH: f64 = 16.0;

/// Smallest admissible torus resolution for energy `n`.
pub fn min_torus_resolution(n: u64) -> usize {
    4 * lattice::ceil_sqrt(n) as usize + 1
}

/// Smallest admissible sphere resolution per axis for degree `n`.
pub fn min_sphere_resolution(n: u64) -> usize {
    4 * n as usize
}

/// Resolution giving at least `per_wavelength` nodes per wavelength
/// `2π/√λ`, never below the admissible minimum. Returns `(rows, cols)`.
pub fn default_resolution(manifold: Manifold, n: u64, per_wavelength: f64) -> (usize, usize) {
    let k = manifold.eigenvalue(n).sqrt();
    match manifold {
        Manifold::Torus => {
            let m = ((per_wavelength * k / (2.0 * PI)).ceil() as usize).max(min_torus_resolution(n));
            (m, m)
        }
        Manifold::Sphere => {
            let min = min_sphere_resolution(n);
            let cols = ((per_wavelength * k).ceil() as usize).max(min);
            let rows = ((per_wavelength * k / 2.0).ceil() as usize).max(min);
            (rows, cols)
        }
    }
}

/// Samples a torus wave on the `M×M` grid `x = (r/M, c/M)`.
pub fn sample_torus(fs: &FrequencySet, seed: u64, m: usize) -> Result<FieldGrid> {
    let wave = TorusWave::draw(fs, seed)?;
    torus_grid(&wave, m)
}

/// Evaluates a drawn torus wave on the `M×M` grid.
///
/// Phases come from a table of `M`-th roots of unity indexed by
/// `(ξ₁r + ξ₂c) mod M`, so each node costs `N_n` complex multiply-adds.
pub fn torus_grid(wave: &TorusWave, m: usize) -> Result<FieldGrid> {
    let min = min_torus_resolution(wave.spec.n);
    if m < min {
        return Err(Error::ResolutionTooLow { got: m, min });
    }
    let (axis0, axis1, weights, meta) = layout(Manifold::Torus, m, m)?;
    let roots: Vec<Complex64> = (0..m)
        .map(|t| Complex64::from_polar(1.0, 2.0 * PI * t as f64 / m as f64))
        .collect();
    let mi = m as i64;
    let norm = (wave.coeffs.len() as f64).sqrt().recip();
    // (ξ₁ mod M, ξ₂ mod M, a_ξ, ξ₁, ξ₂)
    let modes: Vec<(i64, i64, Complex64, i64, i64)> = wave
        .frequencies
        .points
        .iter()
        .zip(&wave.coeffs)
        .map(|(&(a, b), &c)| (a.rem_euclid(mi), b.rem_euclid(mi), c, a, b))
        .collect();
    let rows: Vec<(Vec<Jet>, f64)> = (0..mi)
        .into_par_iter()
        .map(|r| {
            let mut resid = 0.0_f64;
            let row = (0..mi)
                .map(|c| {
                    let mut acc = [Complex64::new(0.0, 0.0); 6];
                    for &(ar, br, coef, a, b) in &modes {
                        let t = ((ar * r + br * c) % mi) as usize;
                        accumulate_mode(&mut acc, coef * roots[t], a, b);
                    }
                    let (j, im) = finish_torus_jet(&acc, norm);
                    resid = resid.max(im);
                    j
                })
                .collect();
            (row, resid)
        })
        .collect();
    let mut g = FieldGrid::empty(wave.spec, axis0, axis1, weights, meta);
    g.meta.imag_residue = rows.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    g.fill_rows(rows.into_iter().map(|(row, _)| row).collect());
    Ok(g)
}

/// Samples a random spherical harmonic of degree `n` on a
/// `rows × cols` (θ × φ) grid.
pub fn sample_sphere(n: u64, seed: u64, rows: usize, cols: usize) -> Result<FieldGrid> {
    let wave = SphereWave::draw(n, seed)?;
    sphere_grid(&wave, rows, cols)
}

/// Evaluates a drawn sphere wave on a Gauss–Legendre × uniform grid.
pub fn sphere_grid(wave: &SphereWave, rows: usize, cols: usize) -> Result<FieldGrid> {
    let n = wave.spec.n;
    let min = min_sphere_resolution(n);
    if rows.min(cols) < min {
        return Err(Error::ResolutionTooLow {
            got: rows.min(cols),
            min,
        });
    }
    let (axis0, axis1, weights, meta) = layout(Manifold::Sphere, rows, cols)?;
    let k = n as usize + 1;
    let mut a = vec![0.0; k * cols];
    let mut b = vec![0.0; k * cols];
    for (c, &phi) in axis1.iter().enumerate() {
        let (mut ac, mut bc) = (vec![0.0; k], vec![0.0; k]);
        wave.angular(phi, &mut ac, &mut bc);
        a[c * k..(c + 1) * k].copy_from_slice(&ac);
        b[c * k..(c + 1) * k].copy_from_slice(&bc);
    }
    let jets_rows: Vec<Vec<Jet>> = axis0
        .par_iter()
        .map(|&theta| {
            let jets = special::associated_legendre_theta_jets(n as usize, theta);
            (0..cols)
                .map(|c| sphere_jet(&jets, &a[c * k..(c + 1) * k], &b[c * k..(c + 1) * k], theta))
                .collect()
        })
        .collect();
    let mut g = FieldGrid::empty(wave.spec, axis0, axis1, weights, meta);
    g.meta.poles = Some([wave.value(0.0, 0.0), wave.value(PI, 0.0)]);
    g.fill_rows(jets_rows);
    Ok(g)
}

/// Draws and grids one realisation of `spec` at the given resolution.
pub fn sample(spec: &WaveSpec, rows: usize, cols: usize) -> Result<FieldGrid> {
    match spec.manifold {
        Manifold::Torus => {
            if rows != cols {
                return Err(Error::Domain(format!("torus grids are square, got {rows}x{cols}")));
            }
            sample_torus(&lattice::enumerate_frequencies(spec.n)?, spec.seed, rows)
        }
        Manifold::Sphere => sample_sphere(spec.n, spec.seed, rows, cols),
    }
}

/// Great-circle distance between `(θ₁, φ₁)` and `(θ₂, φ₂)`.
pub fn geodesic_distance(x: [f64; 2], y: [f64; 2]) -> f64 {
    let c = x[0].cos() * y[0].cos() + x[0].sin() * y[0].sin() * (x[1] - y[1]).cos();
    c.clamp(-1.0, 1.0).acos()
}

/// Covariance kernel `E[f(x) f(y)]`.
///
/// Torus: `N_n⁻¹ Σ cos 2π⟨ξ, x−y⟩` with `x, y ∈ R²`.
/// Sphere: `P_n(cos d(x, y))` with `x, y = (θ, φ)`.
pub fn covariance_theoretical(manifold: Manifold, n: u64, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    match manifold {
        Manifold::Torus => {
            let fs = lattice::enumerate_frequencies(n)?;
            let d = [x[0] - y[0], x[1] - y[1]];
            let s: f64 = fs
                .points
                .iter()
                .map(|&(a, b)| (2.0 * PI * (a as f64 * d[0] + b as f64 * d[1])).cos())
                .sum();
            Ok(s / fs.multiplicity as f64)
        }
        Manifold::Sphere => {
            manifold.validate_energy(n)?;
            let d = geodesic_distance(x, y);
            special::legendre(n as usize, d.cos())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_examples() {
        assert!((covariance_theoretical(Manifold::Torus, 25, [0.3, 0.7], [0.3, 0.7]).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            covariance_theoretical(Manifold::Torus, 1, [0.5, 0.0], [0.0, 0.0])
                .unwrap()
                .abs()
                < 1e-15
        );
        let v = covariance_theoretical(Manifold::Sphere, 2, [PI / 2.0, 0.0], [0.0, 0.0]).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn torus_determinism_and_realness() {
        let fs = lattice::enumerate_frequencies(25).unwrap();
        let a = sample_torus(&fs, 11, 64).unwrap();
        let b = sample_torus(&fs, 11, 64).unwrap();
        assert_eq!(a, b);
        assert!(a.meta.imag_residue < 1e-12, "{}", a.meta.imag_residue);
        assert_ne!(a.f, sample_torus(&fs, 12, 64).unwrap().f);
    }

    #[test]
    fn torus_resolution_floor() {
        let fs = lattice::enumerate_frequencies(25).unwrap();
        assert!(matches!(
            sample_torus(&fs, 0, 20),
            Err(Error::ResolutionTooLow { got: 20, min: 21 })
        ));
        assert!(sample_torus(&fs, 0, 21).is_ok());
    }

    #[test]
    fn torus_grid_matches_point_evaluation() {
        let fs = lattice::enumerate_frequencies(65).unwrap();
        let w = TorusWave::draw(&fs, 5).unwrap();
        let g = torus_grid(&w, 40).unwrap();
        for i in [0, 17, 555, 1599] {
            let p = w.jet([g.axis0[i / 40], g.axis1[i % 40]]);
            let q = g.jet(i);
            for (x, y) in [(p.f, q.f), (p.d1, q.d1), (p.d22, q.d22), (p.d12, q.d12)] {
                assert!((x - y).abs() < 1e-9 * (1.0 + g.eigenvalue()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn torus_eigen_green_and_mean() {
        for n in [5u64, 25, 65] {
            let fs = lattice::enumerate_frequencies(n).unwrap();
            let m = min_torus_resolution(n);
            let g = sample_torus(&fs, n, m).unwrap();
            let lam = g.eigenvalue();
            let worst = (0..g.len())
                .map(|i| (g.d11[i] + g.d22[i] + lam * g.f[i]).abs() / lam)
                .fold(0.0, f64::max);
            assert!(worst < 1e-10, "n = {n}: {worst}");
            let grad = g.integrate(|i| g.d1[i].powi(2) + g.d2[i].powi(2));
            let sq = g.integrate(|i| g.f[i].powi(2));
            assert!((grad - lam * sq).abs() < 1e-10 * grad, "n = {n}");
            assert!(g.integrate(|i| g.f[i]).abs() < 1e-10);
            assert!((g.total_weight() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_conjugation_relation() {
        let w = SphereWave::draw(6, 3).unwrap();
        for m in 1..=6i64 {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let lhs = w.complex_coeff(m).conj();
            let rhs = w.complex_coeff(-m) * sign;
            assert!((lhs - rhs).norm() < 1e-15);
        }
        assert_eq!(w.complex_coeff(0).im, 0.0);
    }

    #[test]
    fn sphere_real_form_matches_complex_sum() {
        let n = 7;
        let w = SphereWave::draw(n, 21).unwrap();
        let (theta, phi): (f64, f64) = (1.1, 2.3);
        let mut p = vec![0.0; n as usize + 1];
        special::associated_legendre_row(n as usize, theta.cos(), &mut p);
        let mut s = Complex64::new(0.0, 0.0);
        for m in -(n as i64)..=(n as i64) {
            let k = m.unsigned_abs() as usize;
            // Y_{n,−m} = (−1)^m conj(Y_{n,m}).
            let y = Complex64::from_polar(p[k], k as f64 * phi);
            let y = if m >= 0 {
                y
            } else if k.is_multiple_of(2) {
                y.conj()
            } else {
                -y.conj()
            };
            s += w.complex_coeff(m) * y;
        }
        s *= (4.0 * PI / (2.0 * n as f64 + 1.0)).sqrt();
        assert!(s.im.abs() < 1e-13);
        assert!((s.re - w.value(theta, phi)).abs() < 1e-13);
        assert!((s.re - w.jet(theta, phi).f).abs() < 1e-13);
    }

    #[test]
    fn sphere_grid_identities() {
        let n = 12;
        let g = sample_sphere(n, 9, 48, 48).unwrap();
        assert!((g.total_weight() - 4.0 * PI).abs() < 1e-10);
        assert_eq!(g.meta.excluded_rows, 0);
        let lam = g.eigenvalue();
        let worst = (0..g.len())
            .map(|i| (g.d11[i] + g.d22[i] + lam * g.f[i]).abs() / lam)
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
        let grad = g.integrate(|i| g.d1[i].powi(2) + g.d2[i].powi(2));
        let sq = g.integrate(|i| g.f[i].powi(2));
        assert!((grad - lam * sq).abs() < 1e-10 * grad);
        assert!(g.integrate(|i| g.f[i]).abs() < 1e-10);
        let [north, south] = g.meta.poles.unwrap();
        let x0 = SphereWave::draw(n, 9).unwrap().coeffs[0].0;
        assert!((north - x0).abs() < 1e-12);
        assert!((south - x0).abs() < 1e-12);
    }

    #[test]
    fn sphere_derivatives_match_finite_differences() {
        let w = SphereWave::draw(9, 4).unwrap();
        let (t, p) = (0.9, 1.7);
        let h = 1e-5;
        let j = w.jet(t, p);
        let ft = (w.value(t + h, p) - w.value(t - h, p)) / (2.0 * h);
        let fp = (w.value(t, p + h) - w.value(t, p - h)) / (2.0 * h);
        assert!((j.d1 - ft).abs() < 1e-6);
        assert!((j.d2 - fp / t.sin()).abs() < 1e-6);
        // Mixed covariant term via the θ-derivative of ∂_φ f.
        let fp_at = |tt: f64| (w.value(tt, p + h) - w.value(tt, p - h)) / (2.0 * h);
        let ftp = (fp_at(t + 1e-4) - fp_at(t - 1e-4)) / 2e-4;
        let d12 = (ftp - t.cos() / t.sin() * fp) / t.sin();
        assert!((j.d12 - d12).abs() < 1e-4 * (1.0 + d12.abs()), "{} vs {d12}", j.d12);
    }

    #[test]
    fn sphere_resolution_and_determinism() {
        assert!(matches!(
            sample_sphere(10, 1, 39, 40),
            Err(Error::ResolutionTooLow { got: 39, min: 40 })
        ));
        assert!(matches!(sample_sphere(1, 1, 40, 40), Err(Error::Domain(_))));
        assert_eq!(
            sample_sphere(10, 1, 40, 40).unwrap(),
            sample_sphere(10, 1, 40, 40).unwrap()
        );
    }

    #[test]
    fn fine_sphere_grid_drops_polar_rows() {
        let g = sample_sphere(2, 0, 4000, 8).unwrap();
        assert!(g.meta.excluded_rows > 0);
        assert!(g
            .axis0
            .iter()
            .all(|&t| (POLAR_THETA_MIN..=PI - POLAR_THETA_MIN).contains(&t)));
        assert!((g.total_weight() - 4.0 * PI).abs() < 1e-9);
        assert!(g.meta.weight_renormalization > 1.0);
    }

    #[test]
    fn default_resolution_respects_floors() {
        assert_eq!(default_resolution(Manifold::Torus, 1, 1.0), (5, 5));
        let (r, c) = default_resolution(Manifold::Sphere, 30, 8.0);
        assert!(r >= 120 && c >= 120);
    }
}
