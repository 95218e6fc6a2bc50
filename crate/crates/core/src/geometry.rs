//! Lipschitz–Killing curvatures of excursion sets `E_u = {f ≥ u}` from a
//! sampled grid.
//!
//! All estimators share one thresholding rule: a node is above when
//! `f ≥ u`. The region is the marching-squares polygon set (linear
//! interpolation along edges, saddle cells split by the mean of the four
//! corners with ties counted as above). `L₂` is the node-indicator
//! quadrature, `L₁` is half the contour length, and `L₀` is the Euler
//! characteristic of a cell complex homotopy equivalent to that region.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::sampler::FieldGrid;

/// How a curvature was estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Contour polylines through linearly interpolated edge crossings.
    MarchingSquares,
    /// Periodic cubical complex on the torus grid.
    CubicalComplex,
    /// Band integral `½∫(2ε)⁻¹ 1{|f−u|≤ε} ‖∇f‖`.
    EpsilonApprox,
    /// Latitude–longitude quads closed by one apex vertex per pole.
    MeshComplex,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::MarchingSquares => "marching_squares",
            Estimator::CubicalComplex => "cubical_complex",
            Estimator::EpsilonApprox => "epsilon_approx",
            Estimator::MeshComplex => "mesh_complex",
        })
    }
}

/// `(L₀, L₁, L₂)` of one excursion set. `l1` is half the contour length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LkcEstimate {
    pub u: f64,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l0_estimator: Estimator,
    pub l1_estimator: Estimator,
    pub rows: usize,
    pub cols: usize,
    /// Band half-width when `l1_estimator` is `EpsilonApprox`.
    pub eps: Option<f64>,
    /// Set when the ε-band is narrower than three cells.
    pub under_resolved: bool,
}

impl LkcEstimate {
    pub fn get(&self, k: usize) -> f64 {
        match k {
            0 => self.l0,
            1 => self.l1,
            2 => self.l2,
            _ => panic!("curvature index {k} out of range"),
        }
    }

    /// Combined label such as `cubical_complex+marching_squares`.
    pub fn estimator_label(&self) -> String {
        format!("{}+{}", self.l0_estimator, self.l1_estimator)
    }
}

/// Which boundary-length estimator to use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LengthMethod {
    Marching,
    Band { eps: f64 },
}

/// All three curvatures at level `u`.
pub fn lkc_estimate(grid: &FieldGrid, u: f64, method: LengthMethod) -> Result<LkcEstimate> {
    let (l1, l1_estimator, eps, under_resolved) = match method {
        LengthMethod::Marching => (
            boundary_length_marching(grid, u),
            Estimator::MarchingSquares,
            None,
            false,
        ),
        LengthMethod::Band { eps } => {
            let b = boundary_length_eps(grid, u, eps)?;
            (b.value, Estimator::EpsilonApprox, Some(eps), b.under_resolved)
        }
    };
    Ok(LkcEstimate {
        u,
        l0: euler_characteristic(grid, u) as f64,
        l1,
        l2: excursion_area(grid, u),
        l0_estimator: match grid.manifold() {
            Manifold::Torus => Estimator::CubicalComplex,
            Manifold::Sphere => Estimator::MeshComplex,
        },
        l1_estimator,
        rows: grid.rows,
        cols: grid.cols,
        eps,
        under_resolved,
    })
}

/// Weighted measure of `{f ≥ u}`.
pub fn excursion_area(grid: &FieldGrid, u: f64) -> f64 {
    grid.f
        .iter()
        .zip(&grid.weights)
        .filter(|(f, _)| **f >= u)
        .map(|(_, w)| w)
        .sum()
}

/// Edge pairs joined by contour segments inside one quad with corners
/// `v[0..4]` in cyclic order. Edge `k` runs from corner `k` to `k+1`.
fn quad_segments(v: &[f64; 4], u: f64) -> ([(usize, usize); 2], usize) {
    let above = v.map(|x| x >= u);
    let mut cross = [0usize; 4];
    let mut nc = 0;
    for k in 0..4 {
        if above[k] != above[(k + 1) % 4] {
            cross[nc] = k;
            nc += 1;
        }
    }
    match nc {
        2 => ([(cross[0], cross[1]), (0, 0)], 1),
        4 => {
            let center_above = v.iter().sum::<f64>() * 0.25 >= u;
            if center_above == above[0] {
                // Corners 0 and 2 share the centre; cut off 1 and 3.
                ([(0, 1), (2, 3)], 2)
            } else {
                ([(3, 0), (1, 2)], 2)
            }
        }
        _ => ([(0, 0); 2], 0),
    }
}

/// Crossing parameter along the edge from value `a` to value `b`.
#[inline]
fn crossing(a: f64, b: f64, u: f64) -> f64 {
    ((u - a) / (b - a)).clamp(0.0, 1.0)
}

#[inline]
fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

#[inline]
fn arc_length(p: [f64; 3], q: [f64; 3]) -> f64 {
    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
    2.0 * (0.5 * d).min(1.0).asin()
}

/// Half the length of the marching-squares contour `{f = u}`.
///
/// Torus lengths are Euclidean in the unit square; sphere lengths are
/// great-circle arcs between consecutive crossing points, with the polar
/// caps handled as triangle fans around the pole values.
pub fn boundary_length_marching(grid: &FieldGrid, u: f64) -> f64 {
    0.5 * match grid.manifold() {
        Manifold::Torus => torus_contour_length(grid, u),
        Manifold::Sphere => sphere_contour_length(grid, u),
    }
}

fn torus_contour_length(g: &FieldGrid, u: f64) -> f64 {
    let (rows, cols) = (g.rows, g.cols);
    // Corner offsets in cyclic order; edge k runs from CORNER[k] to CORNER[k+1].
    const CORNER: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut total = 0.0;
    for r in 0..rows {
        let r1 = (r + 1) % rows;
        for c in 0..cols {
            let c1 = (c + 1) % cols;
            let v = [
                g.f[g.index(r, c)],
                g.f[g.index(r1, c)],
                g.f[g.index(r1, c1)],
                g.f[g.index(r, c1)],
            ];
            let (segs, ns) = quad_segments(&v, u);
            for &(ea, eb) in &segs[..ns] {
                let p = |e: usize| {
                    let t = crossing(v[e], v[(e + 1) % 4], u);
                    let (a, b) = (CORNER[e], CORNER[(e + 1) % 4]);
                    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
                };
                let (pa, pb) = (p(ea), p(eb));
                total += ((pa.0 - pb.0) / rows as f64).hypot((pa.1 - pb.1) / cols as f64);
            }
        }
    }
    total
}

fn pole_values(g: &FieldGrid) -> [f64; 2] {
    g.meta.poles.unwrap_or_else(|| {
        // Synthetic grids without pole data: use the ring means.
        let ring = |r: usize| (0..g.cols).map(|c| g.f[g.index(r, c)]).sum::<f64>() / g.cols as f64;
        [ring(0), ring(g.rows - 1)]
    })
}

fn sphere_contour_length(g: &FieldGrid, u: f64) -> f64 {
    let (rows, cols) = (g.rows, g.cols);
    let dphi = 2.0 * PI / cols as f64;
    let mut total = 0.0;
    for r in 0..rows.saturating_sub(1) {
        let (t0, t1) = (g.axis0[r], g.axis0[r + 1]);
        for c in 0..cols {
            let c1 = (c + 1) % cols;
            let (p0, p1) = (g.axis1[c], g.axis1[c] + dphi);
            let corner = [(t0, p0), (t1, p0), (t1, p1), (t0, p1)];
            let v = [
                g.f[g.index(r, c)],
                g.f[g.index(r + 1, c)],
                g.f[g.index(r + 1, c1)],
                g.f[g.index(r, c1)],
            ];
            let (segs, ns) = quad_segments(&v, u);
            for &(ea, eb) in &segs[..ns] {
                let p = |e: usize| {
                    let t = crossing(v[e], v[(e + 1) % 4], u);
                    let (a, b) = (corner[e], corner[(e + 1) % 4]);
                    unit_vector(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
                };
                total += arc_length(p(ea), p(eb));
            }
        }
    }
    let poles = pole_values(g);
    for (apex_theta, apex_value, r) in [(0.0, poles[0], 0), (PI, poles[1], rows - 1)] {
        let theta = g.axis0[r];
        for c in 0..cols {
            let c1 = (c + 1) % cols;
            let phi = g.axis1[c];
            // Triangle apex → (r, c) → (r, c+1); spokes keep their own longitude.
            let v = [apex_value, g.f[g.index(r, c)], g.f[g.index(r, c1)]];
            let point = |e: usize| {
                let t = crossing(v[e], v[(e + 1) % 3], u);
                match e {
                    0 => unit_vector(apex_theta + t * (theta - apex_theta), phi),
                    1 => unit_vector(theta, phi + t * dphi),
                    _ => unit_vector(theta + t * (apex_theta - theta), phi + dphi),
                }
            };
            let crossed: Vec<usize> = (0..3).filter(|&e| (v[e] >= u) != (v[(e + 1) % 3] >= u)).collect();
            if crossed.len() == 2 {
                total += arc_length(point(crossed[0]), point(crossed[1]));
            }
        }
    }
    total
}

/// Result of the band estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandEstimate {
    pub value: f64,
    /// Typical band width `2ε/√λ` measured in grid cells.
    pub band_cells: f64,
    /// True when `band_cells < 3`.
    pub under_resolved: bool,
}

/// `½ ∫ (2ε)⁻¹ 1{|f − u| ≤ ε} ‖∇f‖ dx` by the grid quadrature.
pub fn boundary_length_eps(grid: &FieldGrid, u: f64, eps: f64) -> Result<BandEstimate> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("band half-width must be positive, got {eps}")));
    }
    let mut s = 0.0;
    for i in 0..grid.len() {
        if (grid.f[i] - u).abs() <= eps {
            s += grid.weights[i] * grid.d1[i].hypot(grid.d2[i]);
        }
    }
    let cell = (grid.total_weight() / grid.len() as f64).sqrt();
    let band_cells = 2.0 * eps / grid.eigenvalue().sqrt() / cell;
    Ok(BandEstimate {
        value: 0.5 * s / (2.0 * eps),
        band_cells,
        under_resolved: band_cells < 3.0,
    })
}

/// Euler characteristic of the excursion region.
///
/// The region retracts onto the complex with one vertex per above node, one
/// edge per grid edge with both ends above, one extra edge per saddle cell
/// whose above diagonal is joined through the centre, and one face per cell
/// (or polar triangle) with every corner above. Cells with three corners
/// above retract onto their two above edges and contribute nothing further.
pub fn euler_characteristic(grid: &FieldGrid, u: f64) -> i64 {
    match grid.manifold() {
        Manifold::Torus => torus_euler(grid, u),
        Manifold::Sphere => sphere_euler(grid, u),
    }
}

/// Contribution of one quad: `−1` for a joined saddle diagonal, `+1` when
/// full. Vertices and edges are counted separately.
#[inline]
fn quad_cell_term(v: &[f64; 4], u: f64) -> i64 {
    let above = v.map(|x| x >= u);
    match above.iter().filter(|&&a| a).count() {
        4 => 1,
        2 if above[0] == above[2] => {
            let center_above = v.iter().sum::<f64>() * 0.25 >= u;
            if center_above {
                -1
            } else {
                0
            }
        }
        _ => 0,
    }
}

fn torus_euler(g: &FieldGrid, u: f64) -> i64 {
    let (rows, cols) = (g.rows, g.cols);
    let above = |r: usize, c: usize| g.f[g.index(r % rows, c % cols)] >= u;
    let mut chi = 0i64;
    for r in 0..rows {
        for c in 0..cols {
            if !above(r, c) {
                continue;
            }
            chi += 1;
            chi -= above(r + 1, c) as i64;
            chi -= above(r, c + 1) as i64;
        }
    }
    for r in 0..rows {
        let r1 = (r + 1) % rows;
        for c in 0..cols {
            let c1 = (c + 1) % cols;
            let v = [
                g.f[g.index(r, c)],
                g.f[g.index(r1, c)],
                g.f[g.index(r1, c1)],
                g.f[g.index(r, c1)],
            ];
            chi += quad_cell_term(&v, u);
        }
    }
    chi
}

fn sphere_euler(g: &FieldGrid, u: f64) -> i64 {
    let (rows, cols) = (g.rows, g.cols);
    let above = |r: usize, c: usize| g.f[g.index(r, c % cols)] >= u;
    let poles = pole_values(g).map(|p| p >= u);
    let mut chi = poles.iter().filter(|&&p| p).count() as i64;
    for r in 0..rows {
        for c in 0..cols {
            if !above(r, c) {
                continue;
            }
            chi += 1;
            chi -= above(r, c + 1) as i64;
            if r + 1 < rows {
                chi -= above(r + 1, c) as i64;
            }
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            let c1 = (c + 1) % cols;
            let v = [
                g.f[g.index(r, c)],
                g.f[g.index(r + 1, c)],
                g.f[g.index(r + 1, c1)],
                g.f[g.index(r, c1)],
            ];
            chi += quad_cell_term(&v, u);
        }
    }
    for (pole_above, r) in [(poles[0], 0), (poles[1], rows - 1)] {
        if !pole_above {
            continue;
        }
        for c in 0..cols {
            // Spoke edge, then the fan triangle when its ring edge is above too.
            if above(r, c) {
                chi -= 1;
                if above(r, c + 1) {
                    chi += 1;
                }
            }
        }
    }
    chi
}

/// Critical points above a level from discrete neighbourhood comparisons.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorseCount {
    pub maxima: i64,
    pub saddles: i64,
    pub minima: i64,
}

impl MorseCount {
    /// `#max − #saddles + #min`.
    pub fn euler(&self) -> i64 {
        self.maxima - self.saddles + self.minima
    }
}

/// Classifies every torus node with `f ≥ u` by its upper link in the
/// triangulation that splits each cell along the `(r, c)–(r+1, c+1)`
/// diagonal. Each vertex has six neighbours; ties in `f` are broken by node
/// index. No higher neighbour is a maximum, all higher a minimum, and `2k`
/// sign changes around the ring with `k ≥ 2` count as `k − 1` saddles. The
/// alternating sum equals the Euler characteristic of the piecewise-linear
/// excursion set on that triangulation.
pub fn morse_count(grid: &FieldGrid, u: f64) -> Result<MorseCount> {
    if grid.manifold() != Manifold::Torus {
        return Err(Error::Domain(
            "discrete Morse counting is implemented on the torus only".into(),
        ));
    }
    const RING: [(isize, isize); 6] = [(1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1)];
    let (rows, cols) = (grid.rows as isize, grid.cols as isize);
    let mut out = MorseCount::default();
    for r in 0..rows {
        for c in 0..cols {
            let i0 = grid.index(r as usize, c as usize);
            let f0 = grid.f[i0];
            if f0 < u {
                continue;
            }
            let higher = RING.map(|(dr, dc)| {
                let i = grid.index((r + dr).rem_euclid(rows) as usize, (c + dc).rem_euclid(cols) as usize);
                (grid.f[i], i) > (f0, i0)
            });
            let changes = (0..6).filter(|&k| higher[k] != higher[(k + 1) % 6]).count() as i64;
            match changes {
                0 if higher[0] => out.minima += 1,
                0 => out.maxima += 1,
                2 => {}
                n => out.saddles += n / 2 - 1,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice;
    use crate::sampler::{self, Jet, WaveSpec};

    fn synthetic(manifold: Manifold) -> WaveSpec {
        WaveSpec {
            manifold,
            n: 0,
            eigenvalue: 1.0,
            seed: 0,
        }
    }

    fn periodic_bump(x: f64, y: f64, cx: f64, cy: f64, s: f64) -> f64 {
        let dx = (x - cx + 0.5).rem_euclid(1.0) - 0.5;
        let dy = (y - cy + 0.5).rem_euclid(1.0) - 0.5;
        (-(dx * dx + dy * dy) / (s * s)).exp()
    }

    fn bump_grid(centres: &[(f64, f64)], m: usize) -> FieldGrid {
        FieldGrid::from_function(synthetic(Manifold::Torus), m, m, |x, y| Jet {
            f: centres.iter().map(|&(cx, cy)| periodic_bump(x, y, cx, cy, 0.08)).sum(),
            ..Jet::default()
        })
        .unwrap()
    }

    #[test]
    fn single_bump_is_a_disk() {
        let g = bump_grid(&[(0.5, 0.5)], 200);
        let u = 0.5;
        assert_eq!(euler_characteristic(&g, u), 1);
        // Circle of radius s√(ln 2): L₁ = π r.
        let r = 0.08 * 2f64.ln().sqrt();
        let l1 = boundary_length_marching(&g, u);
        assert!((l1 - PI * r).abs() / (PI * r) < 2e-3, "{l1}");
        assert!((excursion_area(&g, u) - PI * r * r).abs() / (PI * r * r) < 0.02);
    }

    #[test]
    fn bump_across_the_seam() {
        let g = bump_grid(&[(0.0, 0.99)], 128);
        assert_eq!(euler_characteristic(&g, 0.5), 1);
    }

    #[test]
    fn additivity_over_two_bumps() {
        let u = 0.5;
        let a = bump_grid(&[(0.25, 0.3)], 160);
        let b = bump_grid(&[(0.7, 0.75)], 160);
        let ab = bump_grid(&[(0.25, 0.3), (0.7, 0.75)], 160);
        assert_eq!(
            euler_characteristic(&ab, u),
            euler_characteristic(&a, u) + euler_characteristic(&b, u)
        );
        assert_eq!(euler_characteristic(&ab, u), 2);
        let (la, lb, lab) = (
            boundary_length_marching(&a, u),
            boundary_length_marching(&b, u),
            boundary_length_marching(&ab, u),
        );
        assert!((lab - la - lb).abs() / lab < 0.01);
        let area_sum = excursion_area(&a, u) + excursion_area(&b, u);
        assert!((excursion_area(&ab, u) - area_sum).abs() < 1e-12);
    }

    #[test]
    fn annulus_has_zero_euler_characteristic() {
        let g = FieldGrid::from_function(synthetic(Manifold::Torus), 200, 200, |x, y| {
            let r = (x - 0.5).hypot(y - 0.5);
            Jet {
                f: (-((r - 0.25) / 0.05).powi(2)).exp(),
                ..Jet::default()
            }
        })
        .unwrap();
        assert_eq!(euler_characteristic(&g, 0.5), 0);
        // Complement of a small disk is a punctured torus.
        let mut hole = bump_grid(&[(0.5, 0.5)], 100);
        hole.f.iter_mut().for_each(|v| *v = -*v);
        assert_eq!(euler_characteristic(&hole, -0.5), -1);
    }

    #[test]
    fn extreme_levels_on_the_torus() {
        let fs = lattice::enumerate_frequencies(25).unwrap();
        let g = sampler::sample_torus(&fs, 1, 64).unwrap();
        let lo = lkc_estimate(&g, -10.0, LengthMethod::Marching).unwrap();
        assert_eq!((lo.l0, lo.l1), (0.0, 0.0));
        assert!((lo.l2 - 1.0).abs() < 1e-12);
        let hi = lkc_estimate(&g, 10.0, LengthMethod::Marching).unwrap();
        assert_eq!((hi.l0, hi.l1, hi.l2), (0.0, 0.0, 0.0));
        assert_eq!(boundary_length_eps(&g, 10.0, 0.1).unwrap().value, 0.0);
    }

    #[test]
    fn extreme_levels_on_the_sphere() {
        let g = sampler::sample_sphere(6, 2, 24, 24).unwrap();
        let lo = lkc_estimate(&g, -10.0, LengthMethod::Marching).unwrap();
        assert_eq!((lo.l0, lo.l1), (2.0, 0.0));
        assert!((lo.l2 - 4.0 * PI).abs() < 1e-9);
        let hi = lkc_estimate(&g, 10.0, LengthMethod::Marching).unwrap();
        assert_eq!((hi.l0, hi.l1, hi.l2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sphere_cap_geometry() {
        // f = cos θ: {f ≥ u} is a polar cap with boundary circle of radius √(1−u²).
        let g = FieldGrid::from_function(synthetic(Manifold::Sphere), 60, 120, |t, _| Jet {
            f: t.cos(),
            ..Jet::default()
        })
        .unwrap();
        for u in [-0.6, 0.0, 0.3, 0.9] {
            assert_eq!(euler_characteristic(&g, u), 1, "u = {u}");
            let expected = PI * (1.0 - u * u).sqrt();
            let l1 = boundary_length_marching(&g, u);
            assert!((l1 - expected).abs() / expected < 1e-3, "u = {u}: {l1} vs {expected}");
        }
        // A band around the equator is an annulus.
        let band = FieldGrid::from_function(synthetic(Manifold::Sphere), 60, 120, |t, _| Jet {
            f: t.sin(),
            ..Jet::default()
        })
        .unwrap();
        assert_eq!(euler_characteristic(&band, 0.5), 0);
        assert_eq!(euler_characteristic(&band, -1.0), 2);
    }

    #[test]
    fn complementarity_and_monotonicity() {
        let fs = lattice::enumerate_frequencies(13).unwrap();
        let g = sampler::sample_torus(&fs, 8, 48).unwrap();
        let mut prev = f64::INFINITY;
        for k in -30..=30 {
            let u = k as f64 * 0.1;
            let above = excursion_area(&g, u);
            let below: f64 =
                g.f.iter()
                    .zip(&g.weights)
                    .filter(|(f, _)| **f < u)
                    .map(|(_, w)| w)
                    .sum();
            assert!((above + below - 1.0).abs() < 1e-12);
            assert!(above <= prev);
            prev = above;
        }
    }

    #[test]
    fn morse_count_on_a_single_bump() {
        let g = bump_grid(&[(0.5, 0.5)], 64);
        let m = morse_count(&g, 0.5).unwrap();
        assert_eq!(
            m,
            MorseCount {
                maxima: 1,
                saddles: 0,
                minima: 0
            }
        );
    }
}
