//! Closed-form coefficients of the chaos expansions of the three
//! Lipschitz–Killing curvatures and of their second-chaos reductions.
//!
//! Conventions: `φ`, `Φ` are the standard Gaussian density and CDF, `H_k`
//! the probabilists' Hermite polynomials, `λ` the Laplace eigenvalue and
//! `m = μ̂_n(4)` the fourth Fourier coefficient of the torus lattice measure.

use std::f64::consts::PI;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, FrequencySet};
use crate::manifold::Manifold;
use crate::special::{gaussian_pdf, gaussian_sf, hermite_unchecked};

/// Largest even index accepted by [`alpha_coeff`].
pub const MAX_ALPHA_INDEX: u32 = 16;

/// Coefficient of `∫H_q(f)` in the area expansion, before the `1/q!`:
/// `γ_q(u) = H_{q−1}(u)φ(u)` for `q ≥ 1`, and the mean `1 − Φ(u)` for `q = 0`.
pub fn gamma_coeff(q: usize, u: f64) -> f64 {
    if q == 0 {
        gaussian_sf(u)
    } else {
        hermite_unchecked(q - 1, u) * gaussian_pdf(u)
    }
}

/// Hermite coefficient of the Dirac mass at `u`: `β_l(u) = H_l(u)φ(u)`.
pub fn beta_coeff(l: usize, u: f64) -> f64 {
    hermite_unchecked(l, u) * gaussian_pdf(u)
}

fn factorial(k: u32) -> i128 {
    (1..=k as i128).product()
}

fn binomial(n: u32, k: u32) -> i128 {
    let k = k.min(n - k) as i128;
    let n = n as i128;
    (0..k).fold(1, |acc, j| acc * (n - j) / (j + 1))
}

/// `p_N(1/4)` with `p_N(x) = Σ_j (−1)^{j+N} C(N,j) (2j+1)!/(j!)² x^j`, exactly.
pub fn swing_poly_quarter(big_n: u32) -> Ratio<i128> {
    let mut numer: i128 = 0;
    for j in 0..=big_n {
        let sign = if (j + big_n).is_multiple_of(2) { 1 } else { -1 };
        // (2j+1)!/(j!)² = (2j+1)·C(2j, j)
        let swing = (2 * j as i128 + 1) * binomial(2 * j, j);
        numer += sign * binomial(big_n, j) * swing * (1i128 << (2 * (big_n - j)));
    }
    Ratio::new(numer, 1i128 << (2 * big_n))
}

/// Hermite coefficient of the Euclidean norm on `R²`,
/// `α_{2n,2m} = √(π/2)·((2n)!(2m)!/(n!m!))·2^{−(n+m)}·p_{n+m}(1/4)`.
///
/// Everything except the `√(π/2)` factor is formed as one exact rational.
pub fn alpha_coeff(two_n: u32, two_m: u32) -> Result<f64> {
    if two_n % 2 == 1 || two_m % 2 == 1 {
        return Err(Error::OddIndex(two_n, two_m));
    }
    if two_n > MAX_ALPHA_INDEX || two_m > MAX_ALPHA_INDEX {
        return Err(Error::Domain(format!(
            "alpha indices ({two_n}, {two_m}) exceed {MAX_ALPHA_INDEX}"
        )));
    }
    let (n, m) = (two_n / 2, two_m / 2);
    let k = factorial(two_n) / factorial(n) * (factorial(two_m) / factorial(m));
    let p = swing_poly_quarter(n + m);
    let exact = Ratio::new(k * p.numer(), p.denom() * (1i128 << (n + m)));
    Ok((PI / 2.0).sqrt() * (*exact.numer() as f64 / *exact.denom() as f64))
}

/// Prefactor `½√(λ/2)` of the boundary-length expansion.
pub fn boundary_prefactor(eigenvalue: f64) -> f64 {
    0.5 * (eigenvalue / 2.0).sqrt()
}

/// The five standard deviations used to standardise the gradient and the
/// Hessian in the Euler-characteristic expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaSet {
    pub manifold: Manifold,
    pub n: u64,
    pub eigenvalue: f64,
    pub kappa: [f64; 5],
}

impl KappaSet {
    pub fn k1(&self) -> f64 {
        self.kappa[0]
    }
    pub fn k2(&self) -> f64 {
        self.kappa[1]
    }
    pub fn k3(&self) -> f64 {
        self.kappa[2]
    }
    pub fn k4(&self) -> f64 {
        self.kappa[3]
    }
    pub fn k5(&self) -> f64 {
        self.kappa[4]
    }
}

/// Torus κ-constants from a frequency set.
pub fn kappa_set_torus(fs: &FrequencySet) -> Result<KappaSet> {
    if fs.is_epc_degenerate() {
        return Err(Error::EpcDegenerate(fs.n));
    }
    let lam = fs.eigenvalue();
    let m = fs.mu4;
    let c = lam / (2.0 * 2f64.sqrt());
    Ok(KappaSet {
        manifold: Manifold::Torus,
        n: fs.n,
        eigenvalue: lam,
        kappa: [
            (lam / 2.0).sqrt(),
            c * (1.0 - m) / (3.0 + m).sqrt(),
            c * (3.0 + m).sqrt(),
            c * (1.0 - m).sqrt(),
            lam * (1.0 + m).sqrt() / (3.0 + m).sqrt(),
        ],
    })
}

/// κ-constants for either manifold at energy index `n`.
pub fn kappa_set(manifold: Manifold, n: u64) -> Result<KappaSet> {
    match manifold {
        Manifold::Torus => kappa_set_torus(&lattice::enumerate_frequencies(n)?),
        Manifold::Sphere => {
            manifold.validate_energy(n)?;
            let lam = manifold.eigenvalue(n);
            let r2 = 2f64.sqrt();
            Ok(KappaSet {
                manifold,
                n,
                eigenvalue: lam,
                kappa: [
                    lam.sqrt() / r2,
                    lam.sqrt() * (lam + 2.0) / (2.0 * r2 * (3.0 * lam - 2.0).sqrt()),
                    lam.sqrt() * (3.0 * lam - 2.0).sqrt() / (2.0 * r2),
                    lam.sqrt() * (lam - 2.0).sqrt() / (2.0 * r2),
                    lam * (lam - 2.0).sqrt() / (3.0 * lam - 2.0).sqrt(),
                ],
            })
        }
    }
}

/// Weights of the compact torus form of the Euler-characteristic second
/// chaos, `h₃₅∫Y₃Y₅ + ½Σᵢ hᵢ∫H₂(Yᵢ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HCoeffs {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
    pub h5: f64,
    pub h35: f64,
}

impl HCoeffs {
    pub fn as_array(&self) -> [f64; 5] {
        [self.h1, self.h2, self.h3, self.h4, self.h5]
    }
}

/// h-coefficients at level `u` for the torus frequency set `fs`.
pub fn h_coeffs(fs: &FrequencySet, u: f64) -> Result<HCoeffs> {
    if fs.is_epc_degenerate() {
        return Err(Error::EpcDegenerate(fs.n));
    }
    let lam = fs.eigenvalue();
    let m = fs.mu4;
    let phi = gaussian_pdf(u);
    let tail = gaussian_sf(u);
    let poly = u * (1.0 + u * u) * phi;
    let base = lam / (4.0 * PI);
    let h1 = -base * u * phi;
    Ok(HCoeffs {
        h1,
        h2: h1,
        h3: base * (2.0 * poly / (3.0 + m) + tail * (1.0 - m)),
        h4: -base * (1.0 - m) * tail,
        h5: base * poly * (1.0 + m) / (3.0 + m),
        h35: lam / (2.0 * 2f64.sqrt() * PI) * (1.0 + m).sqrt() * (poly + (3.0 + m) * tail) / (3.0 + m),
    })
}

/// The constants `c₀, c₁, c₂` of the reduction
/// `Proj[L_k|2] = c_k(u)·(√(λ/2))^{2−k}·∫H₂(f)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionConstants {
    pub u: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ReductionConstants {
    pub fn get(&self, k: usize) -> f64 {
        match k {
            0 => self.c0,
            1 => self.c1,
            _ => self.c2,
        }
    }
}

pub fn reduction_constants(u: f64) -> ReductionConstants {
    let phi = gaussian_pdf(u);
    let h1 = u;
    let h2 = u * u - 1.0;
    ReductionConstants {
        u,
        c0: 0.5 * h1 * h2 * phi / (2.0 * PI),
        c1: 0.5 * (PI / 8.0).sqrt() * h1 * h1 * phi,
        c2: 0.5 * h1 * phi,
    }
}

/// Multiplier of `∫H₂(f)` in the reduced second chaos of `L_k`:
/// `c_k(u)·(√(λ/2))^{2−k}`.
pub fn reduced_multiplier(k: usize, u: f64, eigenvalue: f64) -> f64 {
    let c = reduction_constants(u).get(k);
    c * (eigenvalue / 2.0).sqrt().powi(2 - k.min(2) as i32)
}

/// Coefficients of the integration-by-parts rewrite of the compact torus
/// form:
/// `A∫∂₁₁f∂₂₂f + B∫(∂₁₁f)² + C∫(∂₂₂f)² + D∫‖∇f‖² − E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

/// Assembles `A..E` from the h- and κ-constants.
pub fn ibp_constants(fs: &FrequencySet, u: f64) -> Result<IbpConstants> {
    let k = kappa_set_torus(fs)?;
    let h = h_coeffs(fs, u)?;
    let (k1, k2, k3, k4, k5) = (k.k1(), k.k2(), k.k3(), k.k4(), k.k5());
    Ok(IbpConstants {
        a: h.h35 / (k3 * k5) + h.h4 / (2.0 * k4 * k4) - k2 * h.h5 / (k3 * k5 * k5),
        b: h.h3 / (2.0 * k3 * k3) - k2 * h.h35 / (k3 * k3 * k5) + k2 * k2 * h.h5 / (2.0 * k3 * k3 * k5 * k5),
        c: h.h5 / (2.0 * k5 * k5),
        d: h.h1 / (2.0 * k1 * k1),
        e: h.h1 + (h.h3 + h.h4 + h.h5) / 2.0,
    })
}

/// Sum of absolute values of the terms assembled in [`ibp_constants`], per
/// constant. The natural scale for judging round-off where a closed form
/// vanishes.
pub fn ibp_term_magnitudes(fs: &FrequencySet, u: f64) -> Result<IbpConstants> {
    let k = kappa_set_torus(fs)?;
    let h = h_coeffs(fs, u)?;
    let (k1, k2, k3, k4, k5) = (k.k1(), k.k2(), k.k3(), k.k4(), k.k5());
    Ok(IbpConstants {
        a: (h.h35 / (k3 * k5)).abs() + (h.h4 / (2.0 * k4 * k4)).abs() + (k2 * h.h5 / (k3 * k5 * k5)).abs(),
        b: (h.h3 / (2.0 * k3 * k3)).abs()
            + (k2 * h.h35 / (k3 * k3 * k5)).abs()
            + (k2 * k2 * h.h5 / (2.0 * k3 * k3 * k5 * k5)).abs(),
        c: (h.h5 / (2.0 * k5 * k5)).abs(),
        d: (h.h1 / (2.0 * k1 * k1)).abs(),
        e: h.h1.abs() + (h.h3.abs() + h.h4.abs() + h.h5.abs()) / 2.0,
    })
}

/// Closed forms the assembled constants collapse to.
pub fn ibp_constants_closed(eigenvalue: f64, u: f64) -> IbpConstants {
    let phi = gaussian_pdf(u);
    let poly = u * phi * (1.0 + u * u);
    IbpConstants {
        a: poly / (4.0 * eigenvalue * PI),
        b: poly / (8.0 * eigenvalue * PI),
        c: poly / (8.0 * eigenvalue * PI),
        d: -u * phi / (4.0 * PI),
        e: eigenvalue / (8.0 * PI) * u * (u * u - 1.0) * phi,
    }
}
