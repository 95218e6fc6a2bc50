//! Monte Carlo checks of the chaos decomposition.

use std::f64::consts::PI;

use rayon::prelude::*;

use lkcwave::chaos::{self, ChaosForm, ReductionSettings};
use lkcwave::coeffs;
use lkcwave::lattice::enumerate_frequencies;
use lkcwave::rng::stream_seed;
use lkcwave::sampler;
use lkcwave::Manifold;

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample covariance and its standard error.
fn covariance(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let c = prods.iter().sum::<f64>() / n;
    (c, (variance(&prods) / n).sqrt())
}

#[test]
fn torus_second_chaos_variance() {
    let fs = enumerate_frequencies(25).unwrap();
    let m = sampler::min_torus_resolution(25);
    let u = 1.0;
    let lam = fs.eigenvalue();
    let rows: Vec<(f64, f64, f64)> = (0..2000u64)
        .into_par_iter()
        .map(|r| {
            let g = sampler::sample_torus(&fs, stream_seed(10, r), m).unwrap();
            (
                chaos::integral_hermite(&g, 2).unwrap(),
                chaos::integral_hermite(&g, 3).unwrap(),
                chaos::second_chaos(&g, 2, u, ChaosForm::Reduced).unwrap().value,
            )
        })
        .collect();
    let h2: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let v = variance(&h2);
    assert!((v - 1.0 / 6.0).abs() <= 0.15 / 6.0, "{v}");
    // Every torus wave is odd under a half-period shift, so odd chaoses
    // vanish pathwise; C₂ ⊥ C₃ holds trivially there.
    assert!(rows.iter().all(|r| r.1.abs() < 1e-12));
    let reduced: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let expected = coeffs::reduced_multiplier(2, u, lam).powi(2) * 2.0 / 12.0;
    let vr = variance(&reduced);
    assert!((vr - expected).abs() <= 0.2 * expected, "{vr} vs {expected}");
}

#[test]
fn sphere_chaos_components_are_orthogonal() {
    // Even degree: no antipodal antisymmetry, so the odd chaoses are live.
    // The level avoids u = 1, where H₂(u) kills the third area coefficient.
    let n = 10;
    let (rows, cols) = sampler::default_resolution(Manifold::Sphere, n, 8.0);
    let u = 0.5;
    let terms: Vec<[f64; 4]> = (0..2000u64)
        .into_par_iter()
        .map(|r| {
            let g = sampler::sample_sphere(n, stream_seed(11, r), rows, cols).unwrap();
            [2, 3, 4, 1].map(|q| chaos::area_chaos(&g, u, q).unwrap().value)
        })
        .collect();
    let col = |j: usize| terms.iter().map(|t| t[j]).collect::<Vec<f64>>();
    let (q2, q3, q4) = (col(0), col(1), col(2));
    assert!(variance(&q3) > 1e-6, "third chaos is live");
    for (a, b, label) in [(&q2, &q3, "2-3"), (&q2, &q4, "2-4"), (&q3, &q4, "3-4")] {
        let (c, se) = covariance(a, b);
        assert!(c.abs() <= 3.0 * se, "{label}: cov {c} se {se}");
    }
    // The first chaos is identically zero: every mode of degree n ≥ 1 has
    // zero mean.
    assert!(col(3).iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn sphere_int_h2_variance() {
    let n = 10;
    let (rows, cols) = sampler::default_resolution(Manifold::Sphere, n, 8.0);
    let h2: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|r| {
            let g = sampler::sample_sphere(n, stream_seed(12, r), rows, cols).unwrap();
            chaos::integral_hermite(&g, 2).unwrap()
        })
        .collect();
    let expected = 32.0 * PI * PI / (2.0 * n as f64 + 1.0);
    let v = variance(&h2);
    assert!((v - expected).abs() <= 0.15 * expected, "{v} vs {expected}");
}

#[test]
fn torus_reduction_holds_for_every_replicate() {
    let s = ReductionSettings::new(Manifold::Torus, 25, vec![1.0], 50, 3);
    let report = chaos::verify_reduction(&s).unwrap();
    assert!(report.pass);
    assert_eq!(report.pathwise.len(), 50 * 3);
    assert!(report.pathwise.iter().all(|c| c.pass));
}

#[test]
fn sphere_epc_is_degenerate_at_unit_level_and_dominant_away_from_it() {
    let s = ReductionSettings::new(Manifold::Sphere, 30, vec![1.0, 2.0], 200, 7);
    let report = chaos::verify_reduction(&s).unwrap();
    let epc = |u: f64| report.statistical.iter().find(|c| c.k == 0 && c.u == u).unwrap();
    let at1 = epc(1.0);
    assert!(at1.degenerate && at1.expected_slope == 0.0);
    assert!(at1.correlation.abs() < 0.3, "{at1:?}");
    let at2 = epc(2.0);
    assert!(!at2.degenerate && at2.correlation > 0.9, "{at2:?}");
    assert!(report.pass, "{:?}", report.statistical);
}
