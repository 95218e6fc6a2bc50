//! Per-realisation chaotic components of the three curvatures.
//!
//! Every quantity here is a grid quadrature of Hermite polynomials of the
//! field and its standardised derivatives. On the torus the quadrature is
//! exact for the trigonometric polynomials involved, so the integration by
//! parts identities behind the reduced forms hold to rounding error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{self, HCoeffs, KappaSet};
use crate::error::{Error, Result};
use crate::geometry;
use crate::lattice;
use crate::manifold::Manifold;
use crate::rng;
use crate::sampler::{self, FieldGrid};
use crate::special::{hermite_unchecked, MAX_HERMITE_ORDER};

/// Highest Hermite order accepted by [`integral_hermite`].
pub const MAX_FIELD_CHAOS: usize = 8;
/// Highest chaos order supported for the boundary-length expansion.
pub const MAX_BOUNDARY_CHAOS: usize = 4;

/// How a second-chaos component is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChaosForm {
    /// Quadrature of Hermite products of the field and its derivatives.
    Derivative,
    /// Deterministic multiple of `∫H₂(f)`.
    Reduced,
}

impl std::str::FromStr for ChaosForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "derivative" | "derivative_form" => Ok(ChaosForm::Derivative),
            "reduced" | "reduced_form" => Ok(ChaosForm::Reduced),
            other => Err(Error::Domain(format!("unknown chaos form '{other}'"))),
        }
    }
}

impl std::fmt::Display for ChaosForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChaosForm::Derivative => "derivative",
            ChaosForm::Reduced => "reduced",
        })
    }
}

/// One chaotic component of curvature `L_k` at level `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosTerm {
    pub k: usize,
    pub q: usize,
    pub value: f64,
    pub form: ChaosForm,
    pub u: f64,
    pub seed: u64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// `∫ H_q(f) dx` by the grid quadrature.
pub fn integral_hermite(grid: &FieldGrid, q: usize) -> Result<f64> {
    if q > MAX_FIELD_CHAOS {
        return Err(Error::OrderTooLarge {
            order: q,
            max: MAX_FIELD_CHAOS,
        });
    }
    Ok(grid.integrate(|i| hermite_unchecked(q, grid.f[i])))
}

/// `(γ_q(u)/q!)·∫H_q(f)`: the order-`q` component of the excursion area.
pub fn area_chaos(grid: &FieldGrid, u: f64, q: usize) -> Result<ChaosTerm> {
    let value = coeffs::gamma_coeff(q, u) / factorial(q) * integral_hermite(grid, q)?;
    Ok(ChaosTerm {
        k: 2,
        q,
        value,
        form: ChaosForm::Derivative,
        u,
        seed: grid.spec.seed,
    })
}

/// Gradient components divided by their standard deviation `√(λ/2)`.
fn normalized_gradient(grid: &FieldGrid, i: usize) -> (f64, f64) {
    let s = (grid.eigenvalue() / 2.0).sqrt();
    (grid.d1[i] / s, grid.d2[i] / s)
}

/// Order-`q` component of the boundary functional `L₁`:
///
/// `½√(λ/2) Σ_{a≤q/2} Σ_{k≤a} α_{2k,2a−2k} β_{q−2a}(u) / ((2k)!(2a−2k)!(q−2a)!)
///  · ∫ H_{q−2a}(f) H_{2k}(∂̃₁f) H_{2a−2k}(∂̃₂f)`.
pub fn boundary_chaos(grid: &FieldGrid, u: f64, q: usize) -> Result<ChaosTerm> {
    if q > MAX_BOUNDARY_CHAOS {
        return Err(Error::OrderNotSupported(q));
    }
    let mut weights = Vec::new();
    for a in 0..=q / 2 {
        for k in 0..=a {
            let w = coeffs::alpha_coeff(2 * k as u32, (2 * a - 2 * k) as u32)? * coeffs::beta_coeff(q - 2 * a, u)
                / (factorial(2 * k) * factorial(2 * a - 2 * k) * factorial(q - 2 * a));
            weights.push((q - 2 * a, 2 * k, 2 * a - 2 * k, w));
        }
    }
    let sum = grid.integrate(|i| {
        let (g1, g2) = normalized_gradient(grid, i);
        weights
            .iter()
            .map(|&(p, r, s, w)| {
                w * hermite_unchecked(p, grid.f[i]) * hermite_unchecked(r, g1) * hermite_unchecked(s, g2)
            })
            .sum::<f64>()
    });
    Ok(ChaosTerm {
        k: 1,
        q,
        value: coeffs::boundary_prefactor(grid.eigenvalue()) * sum,
        form: ChaosForm::Derivative,
        u,
        seed: grid.spec.seed,
    })
}

/// Second-chaos component of `L₁`.
///
/// Derivative form: `½√(λ/2)[β₂α₀₀/2 ∫H₂(f) + β₀α₂₀/2 ∫(H₂(∂̃₁f) + H₂(∂̃₂f))]`.
/// Reduced form: `c₁(u)√(λ/2)∫H₂(f)`.
pub fn boundary_second_chaos(grid: &FieldGrid, u: f64, form: ChaosForm) -> Result<ChaosTerm> {
    let lam = grid.eigenvalue();
    let value = match form {
        ChaosForm::Derivative => {
            let a00 = coeffs::alpha_coeff(0, 0)?;
            let a20 = coeffs::alpha_coeff(2, 0)?;
            let field = coeffs::beta_coeff(2, u) * a00 / 2.0 * integral_hermite(grid, 2)?;
            let grad = grid.integrate(|i| {
                let (g1, g2) = normalized_gradient(grid, i);
                hermite_unchecked(2, g1) + hermite_unchecked(2, g2)
            });
            coeffs::boundary_prefactor(lam) * (field + coeffs::beta_coeff(0, u) * a20 / 2.0 * grad)
        }
        ChaosForm::Reduced => coeffs::reduced_multiplier(1, u, lam) * integral_hermite(grid, 2)?,
    };
    Ok(ChaosTerm {
        k: 1,
        q: 2,
        value,
        form,
        u,
        seed: grid.spec.seed,
    })
}

/// The five standardised derivative fields at node `i`:
/// `Y₁ = ∂₁f/κ₁`, `Y₂ = ∂₂f/κ₁`, `Y₃ = ∂₁₁f/κ₃`, `Y₄ = ∂₁₂f/κ₄`,
/// `Y₅ = ∂₂₂f/κ₅ − κ₂/(κ₃κ₅)·∂₁₁f`.
pub fn standardized_derivatives(grid: &FieldGrid, kappa: &KappaSet, i: usize) -> [f64; 5] {
    let [k1, k2, k3, k4, k5] = kappa.kappa;
    [
        grid.d1[i] / k1,
        grid.d2[i] / k1,
        grid.d11[i] / k3,
        grid.d12[i] / k4,
        grid.d22[i] / k5 - k2 / (k3 * k5) * grid.d11[i],
    ]
}

/// Second-chaos component of the Euler characteristic.
///
/// Derivative form (torus only): `h₃₅∫Y₃Y₅ + ½Σᵢ hᵢ∫H₂(Yᵢ)`.
/// Reduced form: `(λ/8π)H₁(u)H₂(u)φ(u)∫H₂(f) = c₀(u)(λ/2)∫H₂(f)`.
pub fn epc_second_chaos(grid: &FieldGrid, u: f64, form: ChaosForm) -> Result<ChaosTerm> {
    let value = match form {
        ChaosForm::Derivative => {
            if grid.manifold() != Manifold::Torus {
                return Err(Error::Domain(
                    "the derivative form of the Euler-characteristic second chaos is available on the torus only"
                        .into(),
                ));
            }
            let fs = lattice::enumerate_frequencies(grid.spec.n)?;
            let kappa = coeffs::kappa_set_torus(&fs)?;
            let h = coeffs::h_coeffs(&fs, u)?;
            epc_derivative_value(grid, &kappa, &h)
        }
        ChaosForm::Reduced => {
            if grid.manifold() == Manifold::Torus {
                let fs = lattice::enumerate_frequencies(grid.spec.n)?;
                if fs.is_epc_degenerate() {
                    return Err(Error::EpcDegenerate(fs.n));
                }
            }
            coeffs::reduced_multiplier(0, u, grid.eigenvalue()) * integral_hermite(grid, 2)?
        }
    };
    Ok(ChaosTerm {
        k: 0,
        q: 2,
        value,
        form,
        u,
        seed: grid.spec.seed,
    })
}

fn epc_derivative_value(grid: &FieldGrid, kappa: &KappaSet, h: &HCoeffs) -> f64 {
    let hs = h.as_array();
    grid.integrate(|i| {
        let y = standardized_derivatives(grid, kappa, i);
        let quad: f64 = hs.iter().zip(&y).map(|(h, y)| h * (y * y - 1.0)).sum();
        h.h35 * y[2] * y[4] + 0.5 * quad
    })
}

/// Second-chaos component of `L_k` in the requested form.
pub fn second_chaos(grid: &FieldGrid, k: usize, u: f64, form: ChaosForm) -> Result<ChaosTerm> {
    match k {
        0 => epc_second_chaos(grid, u, form),
        1 => boundary_second_chaos(grid, u, form),
        2 => {
            // Both forms are (γ₂(u)/2)∫H₂(f) = c₂(u)∫H₂(f).
            let mut t = area_chaos(grid, u, 2)?;
            t.form = form;
            Ok(t)
        }
        _ => Err(Error::Domain(format!("curvature index {k} out of range"))),
    }
}

/// Settings for [`verify_reduction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSettings {
    pub manifold: Manifold,
    pub n: u64,
    pub levels: Vec<f64>,
    pub replicates: u64,
    pub base_seed: u64,
    /// Grid `(rows, cols)`; `None` picks the default density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<(usize, usize)>,
    /// Pathwise bound: `|derivative − reduced| ≤ tol·(1 + |reduced|)`.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Correlation threshold for the statistical sphere checks.
    #[serde(default = "default_min_correlation")]
    pub min_correlation: f64,
}

fn default_rel_tol() -> f64 {
    1e-8
}

fn default_min_correlation() -> f64 {
    0.9
}

impl ReductionSettings {
    pub fn new(manifold: Manifold, n: u64, levels: Vec<f64>, replicates: u64, base_seed: u64) -> Self {
        ReductionSettings {
            manifold,
            n,
            levels,
            replicates,
            base_seed,
            resolution: None,
            rel_tol: default_rel_tol(),
            min_correlation: default_min_correlation(),
        }
    }

    /// Parses settings from TOML; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.resolution.unwrap_or_else(|| {
            sampler::default_resolution(self.manifold, self.n, sampler::DEFAULT_POINTS_PER_WAVELENGTH)
        })
    }
}

/// One pathwise comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathwiseCheck {
    pub k: usize,
    pub u: f64,
    pub seed: u64,
    pub derivative: f64,
    pub reduced: f64,
    pub abs_err: f64,
    pub pass: bool,
}

/// Statistical comparison of a geometric estimate with the reduced form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticalCheck {
    pub k: usize,
    pub u: f64,
    pub replicates: u64,
    /// Pearson correlation of the geometric estimate with `∫H₂(f)`.
    pub correlation: f64,
    /// Least-squares slope of the estimate on `∫H₂(f)`.
    pub fitted_slope: f64,
    /// Standard error of the fitted slope.
    pub slope_std_err: f64,
    /// Reduced multiplier `c_k(u)(√(λ/2))^{2−k}`.
    pub expected_slope: f64,
    /// True when `c_k(u) = 0`, where no correlation is expected.
    pub degenerate: bool,
    pub pass: bool,
}

/// Outcome of [`verify_reduction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub settings: ReductionSettings,
    pub rows: usize,
    pub cols: usize,
    pub pathwise: Vec<PathwiseCheck>,
    pub statistical: Vec<StatisticalCheck>,
    pub max_pathwise_error: f64,
    pub pass: bool,
}

struct ReplicateOutcome {
    pathwise: Vec<PathwiseCheck>,
    h2: f64,
    chi: Vec<f64>,
}

/// Compares derivative and reduced forms of the second chaos on every
/// replicate. Pathwise checks cover `k = 0, 1, 2` on the torus and
/// `k = 1, 2` on the sphere; the sphere `k = 0` reduction holds only up to
/// a bounded remainder and is checked by regressing the geometric Euler
/// characteristic on `∫H₂(f)`.
pub fn verify_reduction(settings: &ReductionSettings) -> Result<ReductionReport> {
    if settings.replicates < 2 {
        return Err(Error::InvalidConfig(
            "reduction checks need at least 2 replicates".into(),
        ));
    }
    settings.manifold.validate_energy(settings.n)?;
    let (rows, cols) = settings.grid_shape();
    let ks: &[usize] = match settings.manifold {
        Manifold::Torus => &[0, 1, 2],
        Manifold::Sphere => &[1, 2],
    };
    let fs = match settings.manifold {
        Manifold::Torus => Some(lattice::enumerate_frequencies(settings.n)?),
        Manifold::Sphere => None,
    };
    if let Some(fs) = &fs {
        if fs.is_epc_degenerate() {
            return Err(Error::EpcDegenerate(fs.n));
        }
    }
    let outcomes: Vec<ReplicateOutcome> = (0..settings.replicates)
        .into_par_iter()
        .map(|r| -> Result<ReplicateOutcome> {
            let seed = rng::stream_seed(settings.base_seed, r);
            let grid = match &fs {
                Some(fs) => sampler::sample_torus(fs, seed, rows)?,
                None => sampler::sample_sphere(settings.n, seed, rows, cols)?,
            };
            let mut pathwise = Vec::new();
            for &u in &settings.levels {
                for &k in ks {
                    let d = second_chaos(&grid, k, u, ChaosForm::Derivative)?.value;
                    let red = second_chaos(&grid, k, u, ChaosForm::Reduced)?.value;
                    let abs_err = (d - red).abs();
                    pathwise.push(PathwiseCheck {
                        k,
                        u,
                        seed,
                        derivative: d,
                        reduced: red,
                        abs_err,
                        pass: abs_err <= settings.rel_tol * (1.0 + red.abs()),
                    });
                }
            }
            let chi = match settings.manifold {
                Manifold::Sphere => settings
                    .levels
                    .iter()
                    .map(|&u| geometry::euler_characteristic(&grid, u) as f64)
                    .collect(),
                Manifold::Torus => Vec::new(),
            };
            Ok(ReplicateOutcome {
                pathwise,
                h2: integral_hermite(&grid, 2)?,
                chi,
            })
        })
        .collect::<Result<_>>()?;

    let pathwise: Vec<PathwiseCheck> = outcomes.iter().flat_map(|o| o.pathwise.iter().copied()).collect();
    let mut statistical = Vec::new();
    if settings.manifold == Manifold::Sphere {
        let x: Vec<f64> = outcomes.iter().map(|o| o.h2).collect();
        for (j, &u) in settings.levels.iter().enumerate() {
            let y: Vec<f64> = outcomes.iter().map(|o| o.chi[j]).collect();
            let fit = regression(&x, &y);
            let expected = coeffs::reduced_multiplier(0, u, settings.manifold.eigenvalue(settings.n));
            let degenerate = coeffs::reduction_constants(u).c0.abs() < 1e-12;
            let pass = if degenerate {
                (fit.slope - expected).abs() <= 3.0 * fit.slope_std_err
            } else {
                fit.correlation > settings.min_correlation
            };
            statistical.push(StatisticalCheck {
                k: 0,
                u,
                replicates: settings.replicates,
                correlation: fit.correlation,
                fitted_slope: fit.slope,
                slope_std_err: fit.slope_std_err,
                expected_slope: expected,
                degenerate,
                pass,
            });
        }
    }
    let max_pathwise_error = pathwise.iter().map(|c| c.abs_err).fold(0.0, f64::max);
    let pass = pathwise.iter().all(|c| c.pass) && statistical.iter().all(|c| c.pass);
    Ok(ReductionReport {
        settings: settings.clone(),
        rows,
        cols,
        pathwise,
        statistical,
        max_pathwise_error,
        pass,
    })
}

/// Ordinary least squares of `y` on `x` with intercept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    pub correlation: f64,
}

pub fn regression(x: &[f64], y: &[f64]) -> Regression {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let resid: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let slope_std_err = if sxx > 0.0 && n > 2.0 {
        (resid / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    let correlation = if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    };
    Regression {
        slope,
        intercept: my - slope * mx,
        slope_std_err,
        correlation,
    }
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    regression(x, y).correlation
}

const _: () = assert!(MAX_FIELD_CHAOS <= MAX_HERMITE_ORDER);
