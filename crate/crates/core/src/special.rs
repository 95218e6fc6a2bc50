//! Special functions: probabilists' Hermite polynomials, the Gaussian law,
//! Legendre polynomials, orthonormal associated Legendre functions, Bessel
//! `J₀` and Gauss quadrature rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Highest Hermite order accepted by [`hermite`].
pub const MAX_HERMITE_ORDER: usize = 64;

/// `1/√(2π)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Probabilists' Hermite polynomial `H_k(t)` via
/// `H_k = t·H_{k−1} − (k−1)·H_{k−2}`.
pub fn hermite(k: usize, t: f64) -> Result<f64> {
    if k > MAX_HERMITE_ORDER {
        return Err(Error::OrderTooLarge {
            order: k,
            max: MAX_HERMITE_ORDER,
        });
    }
    Ok(hermite_unchecked(k, t))
}

#[inline]
pub(crate) fn hermite_unchecked(k: usize, t: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => t,
        2 => t * t - 1.0,
        _ => {
            let (mut hm2, mut hm1) = (1.0, t);
            for j in 2..=k {
                let h = t * hm1 - (j - 1) as f64 * hm2;
                hm2 = hm1;
                hm1 = h;
            }
            hm1
        }
    }
}

/// Standard normal density `φ(u)`.
pub fn gaussian_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Standard normal CDF `Φ(u) = ½·erfc(−u/√2)`.
///
/// `erfc` comes from `libm` (a port of the FreeBSD msun implementation,
/// piecewise rational approximations with relative error below 1 ulp), so
/// upper and lower tails keep full relative precision.
pub fn gaussian_cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u * FRAC_1_SQRT_2)
}

/// Upper tail `Φ(−u) = 1 − Φ(u)` without cancellation.
pub fn gaussian_sf(u: f64) -> f64 {
    gaussian_cdf(-u)
}

/// Legendre polynomial `P_n(x)` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("Legendre argument {x} outside [-1, 1]")));
    }
    Ok(legendre_unchecked(n, x))
}

pub(crate) fn legendre_unchecked(n: usize, x: f64) -> f64 {
    let (mut pm1, mut p) = (1.0, x);
    if n == 0 {
        return 1.0;
    }
    for l in 1..n {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * x * p - lf * pm1) / (lf + 1.0);
        pm1 = p;
        p = next;
    }
    p
}

/// Derivative `P_n'(x)`, from the recurrence pair `(P_n, P_{n−1})`.
/// Uses `(1−x²)P_n' = n(P_{n−1} − xP_n)`, with the closed form at `x = ±1`.
pub fn legendre_derivative(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    if (1.0 - x.abs()) < 1e-14 {
        let s = if x > 0.0 || n % 2 == 1 { 1.0 } else { -1.0 };
        return s * nf * (nf + 1.0) / 2.0;
    }
    let p = legendre_unchecked(n, x);
    let pm1 = legendre_unchecked(n - 1, x);
    nf * (pm1 - x * p) / (1.0 - x * x)
}

/// Orthonormal associated Legendre function `P̄_n^m(x)`, normalised so that
/// `Y_{n,m}(θ, φ) = P̄_n^m(cos θ)·e^{imφ}` is orthonormal on the unit sphere.
/// Includes the Condon–Shortley phase `(−1)^m`.
pub fn associated_legendre(n: usize, m: usize, x: f64) -> Result<f64> {
    if m > n {
        return Err(Error::Domain(format!("order m = {m} exceeds degree n = {n}")));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("Legendre argument {x} outside [-1, 1]")));
    }
    let mut out = vec![0.0; n + 1];
    associated_legendre_row(n, x, &mut out);
    Ok(out[m])
}

/// Fills `out[m] = P̄_n^m(x)` for `m = 0..=n`.
///
/// For each order the sectoral seed `P̄_m^m` is built as a running product,
/// then lifted in degree with the normalised three-term recurrence
/// `P̄_l^m = a_lm (x P̄_{l−1}^m − P̄_{l−2}^m / a_{l−1,m})`,
/// `a_lm = √((4l²−1)/(l²−m²))`.
pub fn associated_legendre_row(n: usize, x: f64, out: &mut [f64]) {
    assert!(out.len() > n);
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=n {
        if m > 0 {
            let mf = m as f64;
            pmm *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        if m == n {
            out[m] = pmm;
            continue;
        }
        let mf = m as f64;
        let mut p_lm2 = pmm;
        let mut p_lm1 = x * (2.0 * mf + 3.0).sqrt() * pmm;
        let mut a_prev = (2.0 * mf + 3.0).sqrt();
        for l in (m + 2)..=n {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let p = a * (x * p_lm1 - p_lm2 / a_prev);
            p_lm2 = p_lm1;
            p_lm1 = p;
            a_prev = a;
        }
        out[m] = p_lm1;
    }
}

/// θ-derivatives of the orthonormal associated Legendre functions of degree
/// `n` at colatitude `θ`: returns `(P̄, dP̄/dθ, d²P̄/dθ²)` per order.
///
/// First derivatives use the ladder identity
/// `dP̄^m/dθ = ½[√((n−m)(n+m+1)) P̄^{m+1} − √((n+m)(n−m+1)) P̄^{m−1}]`
/// (with `P̄^{−1} = −P̄^1`); second derivatives come from the associated
/// Legendre equation `P̄'' = −cot θ P̄' − (n(n+1) − m²/sin²θ) P̄`.
pub fn associated_legendre_theta_jets(n: usize, theta: f64) -> Vec<[f64; 3]> {
    let x = theta.cos();
    let s = theta.sin();
    let mut p = vec![0.0; n + 2];
    associated_legendre_row(n, x, &mut p[..n + 1]);
    let nf = n as f64;
    let lam = nf * (nf + 1.0);
    let cot = x / s;
    (0..=n)
        .map(|m| {
            let mf = m as f64;
            let d1 = if m == 0 {
                (nf * (nf + 1.0)).sqrt() * p[1]
            } else {
                0.5 * (((nf - mf) * (nf + mf + 1.0)).sqrt() * p[m + 1]
                    - ((nf + mf) * (nf - mf + 1.0)).sqrt() * p[m - 1])
            };
            let d2 = -cot * d1 - (lam - mf * mf / (s * s)) * p[m];
            [p[m], d1, d2]
        })
        .collect()
}

/// Bessel function `J₀(x)`, from `libm` (msun port, near machine precision).
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("J0 argument {x} is not finite")));
    }
    Ok(libm::j0(x))
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, nodes decreasing
/// (so `arccos` of the nodes increases).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let p = legendre_unchecked(order, x);
            dp = legendre_derivative(order, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if dp == 0.0 {
            dp = legendre_derivative(order, x);
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        weights[i] = w;
        nodes[order - 1 - i] = -x;
        weights[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Hermite rule for the standard Gaussian weight: `Σ wᵢ g(xᵢ)`
/// approximates `E[g(Z)]`, exact for polynomials of degree `< 2·order`.
///
/// Golub–Welsch: the nodes are the eigenvalues of the Jacobi matrix of the
/// probabilists' recurrence (zero diagonal, off-diagonal `√k`) and the
/// weights the squared first components of its unit eigenvectors.
pub fn gauss_hermite_probabilists(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; order];
    let mut e: Vec<f64> = (1..=order)
        .map(|k| if k < order { (k as f64).sqrt() } else { 0.0 })
        .collect();
    let mut z = vec![0.0; order];
    if order > 0 {
        z[0] = 1.0;
    }
    tridiagonal_ql(&mut d, &mut e, &mut z);
    let mut rule: Vec<(f64, f64)> = d.into_iter().zip(z.into_iter().map(|v| v * v)).collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    // The rule is symmetric about zero; enforce it exactly.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (rule[j].0 - rule[i].0);
        let w = 0.5 * (rule[i].1 + rule[j].1);
        rule[i] = (-x, w);
        rule[j] = (x, w);
    }
    if order % 2 == 1 {
        rule[order / 2].0 = 0.0;
    }
    rule.into_iter().unzip()
}

/// Implicit QL with Wilkinson shifts on the symmetric tridiagonal matrix
/// with diagonal `d` and off-diagonal `e[i]` between rows `i` and `i + 1`.
/// On return `d` holds the eigenvalues and `z` the first row of the
/// eigenvector matrix, given the first row of the initial basis.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) {
    let n = d.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            assert!(iterations < 100, "QL iteration failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}
