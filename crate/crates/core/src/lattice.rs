//! Lattice points on circles: the frequency sets of torus eigenfunctions.
//!
//! The eigenvalues of the flat torus `R²/Z²` are `4π²n` for integers `n`
//! that are a sum of two squares. The eigenspace is spanned by the
//! exponentials `e^{2πi⟨ξ,x⟩}` with `ξ` running over the integer points of
//! the circle of radius `√n`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An integer frequency `ξ = (ξ₁, ξ₂)`.
pub type Frequency = (i64, i64);

/// The integer points `Λ_n` on the circle `‖ξ‖² = n`, with summary data of
/// the angular measure `μ_n = N_n⁻¹ Σ δ_{ξ/√n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySet {
    pub n: u64,
    /// Lexicographically sorted.
    pub points: Vec<Frequency>,
    pub multiplicity: usize,
    /// Fourth Fourier coefficient of `μ_n`.
    pub mu4: f64,
}

impl FrequencySet {
    /// `λ_n = 4π²n`.
    pub fn eigenvalue(&self) -> f64 {
        4.0 * std::f64::consts::PI * std::f64::consts::PI * self.n as f64
    }

    /// True when `|μ̂_n(4)| = 1`: `κ₄` vanishes at `+1` and `κ₅` at `−1`.
    pub fn is_epc_degenerate(&self) -> bool {
        let m = mu_hat4_exact(self);
        m.numer().abs() == *m.denom()
    }

    /// Largest absolute coordinate over all points; the field bandwidth per axis.
    pub fn max_component(&self) -> i64 {
        self.points
            .iter()
            .map(|&(a, b)| a.abs().max(b.abs()))
            .max()
            .unwrap_or(0)
    }

    /// One representative of each pair `{ξ, −ξ}`: those with `ξ₁ > 0`, or
    /// `ξ₁ = 0` and `ξ₂ > 0`. Indices refer to `points`.
    pub fn orbit_representatives(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| a > 0 || (a == 0 && b > 0))
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of `−ξ` for the point at `idx`.
    pub fn antipode(&self, idx: usize) -> usize {
        let (a, b) = self.points[idx];
        self.points
            .binary_search(&(-a, -b))
            .expect("frequency sets are closed under negation")
    }
}

/// `⌈√n⌉` in integer arithmetic.
pub(crate) fn ceil_sqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Whether `n = a² + b²` has integer solutions.
pub fn is_representable(n: u64) -> bool {
    let r = ceil_sqrt(n);
    (0..=r).any(|a| {
        let rest = n as i128 - (a * a) as i128;
        if rest < 0 {
            return false;
        }
        let b = ceil_sqrt(rest as u64);
        b * b == rest as u64
    })
}

/// All integer points on the circle of radius `√n`, lexicographically sorted.
pub fn enumerate_frequencies(n: u64) -> Result<FrequencySet> {
    if n == 0 {
        return Err(Error::Domain("energy index must be at least 1".into()));
    }
    let r = ceil_sqrt(n) as i64;
    let target = n as i64;
    let mut points = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            if a * a + b * b == target {
                points.push((a, b));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::NotRepresentable(n));
    }
    let mut fs = FrequencySet {
        n,
        multiplicity: points.len(),
        points,
        mu4: 0.0,
    };
    fs.mu4 = mu_hat4(&fs);
    Ok(fs)
}

/// `μ̂_n(4) = N_n⁻¹ Σ cos 4θ_ξ` as an exact rational.
///
/// With `c = cos θ_ξ = ξ₁/√n`, `cos 4θ = 8c⁴ − 8c² + 1`, so every term is
/// `(8ξ₁⁴ − 8ξ₁²n + n²)/n²`.
pub fn mu_hat4_exact(fs: &FrequencySet) -> Ratio<i128> {
    let n = fs.n as i128;
    let numer: i128 = fs
        .points
        .iter()
        .map(|&(a, _)| {
            let a2 = (a as i128) * (a as i128);
            8 * a2 * a2 - 8 * a2 * n + n * n
        })
        .sum();
    Ratio::new(numer, fs.points.len() as i128 * n * n)
}

/// `μ̂_n(4)` as a float, converted from the exact rational value.
pub fn mu_hat4(fs: &FrequencySet) -> f64 {
    let r = mu_hat4_exact(fs);
    *r.numer() as f64 / *r.denom() as f64
}

/// `μ̂_n(4)` evaluated directly in floating point from the angles.
pub fn mu_hat4_float(fs: &FrequencySet) -> f64 {
    let s: f64 = fs
        .points
        .iter()
        .map(|&(a, b)| (4.0 * (b as f64).atan2(a as f64)).cos())
        .sum();
    s / fs.points.len() as f64
}
