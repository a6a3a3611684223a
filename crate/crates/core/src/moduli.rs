//! The space of unit-covolume lattices, parametrized by the standard
//! fundamental domain times a rotation angle.
//!
//! The invariant measure is normalized to mass one. In the coordinates
//! `x = sin t`, `y = cos t / u` it becomes uniform in
//! `(t, u, θ) ∈ (−π/6, π/6) × (0, 1] × [0, π)`, which drives both the sampler
//! and the quadrature grid.

use std::f64::consts::{FRAC_PI_6, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, Mat2, Point2};
use crate::lattice::Lattice;

/// A point `(x, y, θ)` of the fundamental domain: `|x| <= 1/2`,
/// `x² + y² >= 1`, `θ ∈ [0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuliPoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNode {
    pub point: ModuliPoint,
    pub weight: f64,
}

fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

impl ModuliPoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return Err(Error::InvalidParameter("non-finite moduli point".into()));
        }
        if x.abs() > 0.5 + 1e-12 || x * x + y * y < 1.0 - 1e-12 || y <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "({x}, {y}) is outside the fundamental domain"
            )));
        }
        Ok(ModuliPoint {
            x,
            y,
            theta: normalize_angle(theta),
        })
    }

    /// Point with coordinates `x = sin t`, `y = cos t / u`.
    pub fn from_uniforms(t: f64, u: f64, theta: f64) -> Self {
        let (s, c) = t.sin_cos();
        ModuliPoint {
            x: s,
            y: c / u,
            theta: normalize_angle(theta),
        }
    }

    /// The lattice with basis `R(θ)(1/√y, 0)`, `R(θ)(x/√y, √y)`.
    pub fn lattice(&self) -> Lattice {
        let r = self.y.sqrt();
        let (s, c) = self.theta.sin_cos();
        let rot = |v: Point2| Point2::new(c * v.x - s * v.y, s * v.x + c * v.y);
        Lattice::from_basis_unchecked(
            rot(Point2::new(1.0 / r, 0.0)),
            rot(Point2::new(self.x / r, r)),
        )
    }
}

pub fn lattice_at(mp: &ModuliPoint) -> Lattice {
    mp.lattice()
}

/// Sample `index` of the stream identified by `seed`; a pure function of
/// both, so any partition of the indices among workers gives the same draws.
pub fn sample(seed: u64, index: u64) -> ModuliPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    sample_from(&mut rng)
}

/// One exact draw from the normalized invariant measure.
pub fn sample_from<R: Rng + ?Sized>(rng: &mut R) -> ModuliPoint {
    let t = FRAC_PI_6 * (2.0 * rng.random::<f64>() - 1.0);
    let u = 1.0 - rng.random::<f64>();
    let theta = PI * rng.random::<f64>();
    ModuliPoint::from_uniforms(t, u, theta)
}

/// Measure of the cusp `{y > y_max}`.
pub fn tail_fraction(y_max: f64) -> f64 {
    3.0 / (PI * y_max)
}

/// Midpoint grid over the truncated domain `{y <= y_max}`: uniform cells in
/// `t`, geometric cells in `y`, uniform cells in `θ`. Weights are the exact
/// cell masses, so they sum to `1 - tail_fraction(y_max)`.
pub fn quadrature_grid(y_max: f64, nx: usize, ny: usize, ntheta: usize) -> Result<Vec<WeightedNode>> {
    if !(y_max > 1.0) || !y_max.is_finite() {
        return Err(Error::InvalidGrid(format!("y_max = {y_max} must exceed 1")));
    }
    if nx < 2 || ny < 2 || ntheta < 2 {
        return Err(Error::InvalidGrid(format!(
            "node counts {nx}x{ny}x{ntheta} must be at least 2"
        )));
    }
    let dt = 2.0 * FRAC_PI_6 / nx as f64;
    let mut nodes = Vec::with_capacity(nx * ny * ntheta);
    for i in 0..nx {
        let t0 = -FRAC_PI_6 + dt * i as f64;
        let t1 = t0 + dt;
        let tm = t0 + 0.5 * dt;
        let (x, cos_m) = tm.sin_cos();
        let column_mass = (3.0 / PI) * (dt - (t1.sin() - t0.sin()) / y_max);
        let u_lo = cos_m / y_max;
        let span = 1.0 - u_lo;
        let ratio = (1.0 / u_lo).powf(1.0 / ny as f64);
        let mut lo = u_lo;
        for k in 0..ny {
            let hi = if k + 1 == ny { 1.0 } else { lo * ratio };
            let um = 0.5 * (lo + hi);
            let w = column_mass * (hi - lo) / span / ntheta as f64;
            for j in 0..ntheta {
                nodes.push(WeightedNode {
                    point: ModuliPoint {
                        x,
                        y: cos_m / um,
                        theta: PI * (j as f64 + 0.5) / ntheta as f64,
                    },
                    weight: w,
                });
            }
            lo = hi;
        }
    }
    Ok(nodes)
}

/// Upper bound on the contribution of `{y > y_max}` to the normalized mean
/// of `ℱ^h`, for a domain of circumradius `r` about the evaluation point.
pub fn tail_bound(r: f64, h: f64, y_max: f64) -> Result<f64> {
    if r.is_infinite() {
        return Err(Error::UnboundedDomain);
    }
    if !(r >= 0.0) || !(h > 0.0) || !(y_max > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail bound needs R >= 0, h > 0, y_max > 1 (got {r}, {h}, {y_max})"
        )));
    }
    let e = 0.5 * h + 1.0;
    Ok((3.0 / PI) * r.powf(h) * y_max.powf(-e) / e)
}

/// The moduli point of the lattice spanned by the columns of `basis`.
pub fn reduce_to_fundamental(basis: &Mat2) -> Result<ModuliPoint> {
    let lat = Lattice::new(basis.column(0).into(), basis.column(1).into())?;
    let red = lat.reduction()?.reduced;
    let (r1, r2) = red.basis();
    let shortest = r1.norm_squared();
    let cutoff = shortest * (1.0 + 1e-12);
    let angle = |v: Point2| normalize_angle(v.y.atan2(v.x));

    // the shortest vectors of a reduced basis are among ±r1, ±r2, ±(r1 ± r2)
    let mut b1 = r1;
    for v in [r2, r1 + r2, r1 - r2] {
        if v.norm_squared() <= cutoff && angle(v) < angle(b1) {
            b1 = v;
        }
    }
    if b1.y < 0.0 || (b1.y == 0.0 && b1.x < 0.0) {
        b1 = -b1;
    }
    let mut b2 = if cross(b1, r2).abs() > 0.5 { r2 } else { r1 };
    if cross(b1, b2) < 0.0 {
        b2 = -b2;
    }
    let n1 = b1.norm_squared();
    let shift = (b1.dot(&b2) / n1).round();
    b2 -= b1 * shift;
    let mut x = b1.dot(&b2) / n1;
    if x < -0.5 + 1e-12 {
        b2 += b1;
        x = b1.dot(&b2) / n1;
    }
    let y = 1.0 / n1;
    Ok(ModuliPoint {
        x,
        y,
        theta: angle(b1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_ball(lat: &Lattice) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = lat
            .enumerate_ball(3.0)
            .unwrap()
            .iter()
            .map(|v| (v.ambient.x, v.ambient.y))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }

    fn same_points(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
        a.len() == b.len()
            && a.iter().all(|p| {
                b.iter()
                    .any(|q| (p.0 - q.0).abs() < 1e-9 && (p.1 - q.1).abs() < 1e-9)
            })
    }

    #[test]
    fn lattice_at_examples() {
        let z = ModuliPoint::new(0.0, 1.0, 0.0).unwrap().lattice();
        assert_eq!(z, Lattice::standard());
        let l = ModuliPoint::new(0.5, 1.0, 0.0).unwrap().lattice();
        assert_eq!(l.basis(), (Point2::new(1.0, 0.0), Point2::new(0.5, 1.0)));
        let rot = ModuliPoint::new(0.0, 1.0, PI / 2.0).unwrap().lattice();
        assert!(same_points(&sorted_ball(&rot), &sorted_ball(&Lattice::standard())));
    }

    #[test]
    fn forced_uniforms_give_standard_lattice() {
        let mp = ModuliPoint::from_uniforms(0.0, 1.0, 0.0);
        assert_eq!((mp.x, mp.y, mp.theta), (0.0, 1.0, 0.0));
    }

    #[test]
    fn sampler_is_a_pure_function_of_seed_and_index() {
        assert_eq!(sample(42, 17), sample(42, 17));
        assert_ne!(sample(42, 17), sample(42, 18));
        assert_ne!(sample(42, 17), sample(43, 17));
        for i in 0..1000 {
            let mp = sample(3, i);
            assert!(mp.x.abs() <= 0.5 && mp.x * mp.x + mp.y * mp.y >= 1.0 - 1e-12);
            assert!((0.0..PI).contains(&mp.theta));
        }
    }

    #[test]
    fn tail_bound_examples() {
        let b = tail_bound(1.0, 1.0, 100.0).unwrap();
        assert!((b - 2e-3 / PI).abs() < 1e-15);
        assert!(tail_bound(1.0, 1.0, 400.0).unwrap() < b);
        assert!(tail_bound(1.0, 1.0, 1e12).unwrap() < 1e-17);
        assert_eq!(tail_bound(f64::INFINITY, 1.0, 10.0), Err(Error::UnboundedDomain));
    }

    #[test]
    fn grid_weights_are_retained_mass() {
        for &(y_max, n) in &[(10.0, 2), (50.0, 16), (100.0, 7)] {
            let g = quadrature_grid(y_max, n, n, n).unwrap();
            let total: f64 = g.iter().map(|w| w.weight).sum();
            assert!((total - (1.0 - tail_fraction(y_max))).abs() < 1e-12);
            assert!(g.iter().all(|w| w.point.y <= y_max && w.point.x * w.point.x + w.point.y * w.point.y >= 1.0));
        }
        assert!(matches!(quadrature_grid(1.0, 4, 4, 4), Err(Error::InvalidGrid(_))));
        assert!(matches!(quadrature_grid(10.0, 1, 4, 4), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn grid_integrates_inverse_root_height() {
        let g = quadrature_grid(50.0, 64, 64, 64).unwrap();
        let s: f64 = g.iter().map(|w| w.weight * w.point.y.powf(-0.5)).sum();
        assert!((s - 0.682).abs() < 0.005, "{s}");
    }

    #[test]
    fn reduce_to_fundamental_examples() {
        let mp = reduce_to_fundamental(&Mat2::identity()).unwrap();
        assert_eq!((mp.x, mp.y, mp.theta), (0.0, 1.0, 0.0));

        let mp = reduce_to_fundamental(&Mat2::new(1.0, 2.5, 0.0, 1.0)).unwrap();
        assert!((mp.x - 0.5).abs() < 1e-15 && (mp.y - 1.0).abs() < 1e-15 && mp.theta == 0.0);

        let rot = nalgebra::Rotation2::new(PI / 3.0).into_inner();
        let mp = reduce_to_fundamental(&rot).unwrap();
        assert!(mp.x.abs() < 1e-12 && (mp.y - 1.0).abs() < 1e-12 && (mp.theta - PI / 3.0).abs() < 1e-12);

        assert!(reduce_to_fundamental(&Mat2::new(1.0, 2.0, 2.0, 4.0)).is_err());
    }

    #[test]
    fn round_trip_preserves_the_lattice() {
        for i in 0..1000 {
            let mp = sample(5, i);
            let mp = ModuliPoint { y: mp.y.min(20.0), ..mp };
            let lat = mp.lattice();
            let back = reduce_to_fundamental(&lat.basis_matrix()).unwrap();
            assert!(back.x.abs() <= 0.5 + 1e-12 && back.x * back.x + back.y * back.y >= 1.0 - 1e-9);
            assert!(same_points(&sorted_ball(&back.lattice()), &sorted_ball(&lat)), "{mp:?} -> {back:?}");
        }
    }

    #[test]
    fn determinant_and_shortest_length() {
        for i in 0..1000 {
            let mp = sample(9, i);
            let lat = mp.lattice();
            assert!((lat.det() - 1.0).abs() <= 1e-12);
            if mp.y >= 1.0 && mp.y < 1e6 {
                let s = lat.shortest_vector().unwrap().ambient.norm();
                assert!((s - mp.y.powf(-0.5)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn half_turn_fixes_the_lattice() {
        for i in 0..100 {
            let mp = sample(13, i);
            let mp = ModuliPoint { y: mp.y.min(20.0), ..mp };
            let turned = ModuliPoint { theta: mp.theta + PI, ..mp };
            assert!(same_points(&sorted_ball(&mp.lattice()), &sorted_ball(&turned.lattice())));
        }
    }
}
