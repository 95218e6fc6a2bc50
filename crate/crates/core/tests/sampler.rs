//! Monte Carlo checks of the sampled laws.

use rayon::prelude::*;

use lkcwave::lattice::enumerate_frequencies;
use lkcwave::rng::stream_seed;
use lkcwave::sampler::{self, SphereWave, TorusWave};
use lkcwave::special::bessel_j0;

fn empirical_cov<F: Fn(u64) -> Vec<f64> + Send + Sync>(reps: u64, draw: F) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..reps).into_par_iter().map(draw).collect();
    let k = rows[0].len();
    (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / reps as f64)
        .collect()
}

#[test]
fn torus_marginal_variance_is_one() {
    let fs = enumerate_frequencies(25).unwrap();
    let m = sampler::min_torus_resolution(25);
    let v = empirical_cov(2000, |r| {
        let g = sampler::sample_torus(&fs, stream_seed(1, r), m).unwrap();
        vec![g.f.iter().map(|x| x * x).sum::<f64>() / g.len() as f64]
    })[0];
    assert!((v - 1.0).abs() < 0.05, "{v}");
}

#[test]
fn sphere_marginal_variance_is_one() {
    let v = empirical_cov(2000, |r| {
        let w = SphereWave::draw(10, stream_seed(2, r)).unwrap();
        [(0.7, 1.3), (2.9, 5.0), (0.0, 0.0)]
            .iter()
            .map(|&(t, p)| w.value(t, p).powi(2))
            .collect()
    });
    assert!(v.iter().all(|x| (x - 1.0).abs() < 0.08), "{v:?}");
}

#[test]
fn sphere_covariance_follows_the_legendre_kernel() {
    let pairs = [
        ([0.4, 1.0], [0.5, 1.1]),
        ([1.2, 2.0], [1.5, 2.4]),
        ([0.3, 0.0], [2.8, 3.0]),
        ([1.57, 0.0], [1.57, 0.6]),
        ([1.0, 4.0], [1.3, 4.0]),
    ];
    let emp = empirical_cov(2000, |r| {
        let w = SphereWave::draw(10, stream_seed(3, r)).unwrap();
        pairs
            .iter()
            .map(|(x, y)| w.value(x[0], x[1]) * w.value(y[0], y[1]))
            .collect()
    });
    for ((x, y), e) in pairs.iter().zip(&emp) {
        let k = sampler::covariance_theoretical(lkcwave::Manifold::Sphere, 10, *x, *y).unwrap();
        assert!((e - k).abs() < 0.08, "{x:?} {y:?}: {e} vs {k}");
    }
}

#[test]
fn torus_covariance_depends_on_the_lag_only() {
    let fs = enumerate_frequencies(25).unwrap();
    let lag = [0.03, 0.05];
    let bases = [[0.1, 0.2], [0.6, 0.9], [0.35, 0.45]];
    let reps = 2000u64;
    let emp = empirical_cov(reps, |r| {
        let w = TorusWave::draw(&fs, stream_seed(4, r)).unwrap();
        bases
            .iter()
            .map(|b| w.value(*b) * w.value([b[0] + lag[0], b[1] + lag[1]]))
            .collect()
    });
    let rho = sampler::covariance_theoretical(lkcwave::Manifold::Torus, 25, [0.0, 0.0], lag).unwrap();
    let tol = 4.0 * (2.0 * (1.0 + rho * rho) / reps as f64).sqrt();
    for e in &emp[1..] {
        assert!((e - emp[0]).abs() < tol, "{emp:?} (tol {tol})");
    }
}

#[test]
fn torus_covariance_at_wavelength_scale_tracks_j0() {
    // N_1105 = 32. Along this direction the exact kernel is within 0.022 of
    // J₀ for separations up to 4; the rest of the 0.1 budget is Monte Carlo.
    let n = 1105;
    let fs = enumerate_frequencies(n).unwrap();
    let scale = 2.0 * std::f64::consts::PI * (n as f64).sqrt();
    let dir = 0.3f64;
    let seps = [0.5, 1.0, 2.0, 3.0, 4.0];
    let origin = [0.21, 0.67];
    let emp = empirical_cov(4000, |r| {
        let w = TorusWave::draw(&fs, stream_seed(5, r)).unwrap();
        let f0 = w.value(origin);
        seps.iter()
            .map(|s| f0 * w.value([origin[0] + s * dir.cos() / scale, origin[1] + s * dir.sin() / scale]))
            .collect()
    });
    for (s, e) in seps.iter().zip(&emp) {
        let j = bessel_j0(*s).unwrap();
        assert!((e - j).abs() < 0.1, "separation {s}: {e} vs J0 = {j}");
    }
}
