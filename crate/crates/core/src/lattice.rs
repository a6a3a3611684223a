//! Planar lattices: Lagrange–Gauss reduction, shortest vectors and certified
//! enumeration of lattice points in balls and cones.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{cross, Direction2, Mat2, Point2};

/// Largest coefficient box `enumerate_ball` will scan.
pub const MAX_REGION_POINTS: f64 = 1e8;

const UNIMODULAR_TOL: f64 = 1e-9;
const DEGENERATE_TOL: f64 = 1e-12;

/// A planar lattice given by a basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    b1: Point2,
    b2: Point2,
}

/// A lattice vector together with its integer coordinates in the basis of
/// the lattice it was produced from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeVector {
    pub coeffs: (i64, i64),
    pub ambient: Point2,
}

/// A reduced basis plus the unimodular matrix `U` with
/// `[b1' b2'] = [b1 b2] · U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reduction {
    pub reduced: Lattice,
    pub transform: [[i64; 2]; 2],
}

impl Reduction {
    /// Coefficients in the original basis of the vector `m'·b1' + n'·b2'`.
    #[inline]
    pub fn original_coeffs(&self, m: i64, n: i64) -> (i64, i64) {
        let u = &self.transform;
        (u[0][0] * m + u[0][1] * n, u[1][0] * m + u[1][1] * n)
    }

    #[inline]
    pub fn ambient(&self, m: i64, n: i64) -> Point2 {
        self.reduced.b1 * m as f64 + self.reduced.b2 * n as f64
    }

    /// Linear functionals returning the reduced coordinates `(m', n')` of an
    /// ambient vector: `m' = w_m · λ`, `n' = w_n · λ`.
    pub fn coordinate_functionals(&self) -> (Point2, Point2) {
        let Lattice { b1, b2 } = self.reduced;
        let det = cross(b1, b2);
        (
            Point2::new(b2.y, -b2.x) / det,
            Point2::new(-b1.y, b1.x) / det,
        )
    }
}

/// Preference order among tied lattice vectors: the sign-normalized pair
/// (`m > 0`, or `m = 0` and `n > 0`) is compared first, vectors with `m > 0`
/// before those with `m = 0`, then lexicographically; the normalized sign
/// itself wins over its negative.
pub fn tie_order(a: (i64, i64), b: (i64, i64)) -> Ordering {
    fn key(c: (i64, i64)) -> (u8, i64, i64, u8) {
        let normalized = c.0 > 0 || (c.0 == 0 && c.1 > 0);
        let (m, n) = if normalized { c } else { (-c.0, -c.1) };
        (u8::from(m == 0), m, n, u8::from(!normalized))
    }
    key(a).cmp(&key(b))
}

impl Lattice {
    /// Lattice of co-area one; `|det| = 1` within `1e-9`.
    pub fn new(b1: Point2, b2: Point2) -> Result<Self> {
        let lat = Self::with_any_covolume(b1, b2)?;
        let det = lat.det().abs();
        if (det - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::NotUnimodular(det));
        }
        Ok(lat)
    }

    /// Skips the co-area check; only rejects (near-)degenerate bases.
    pub fn with_any_covolume(b1: Point2, b2: Point2) -> Result<Self> {
        let det = cross(b1, b2);
        if !det.is_finite() || det.abs() < DEGENERATE_TOL {
            return Err(Error::DegenerateBasis(det.abs()));
        }
        Ok(Lattice { b1, b2 })
    }

    pub(crate) fn from_basis_unchecked(b1: Point2, b2: Point2) -> Self {
        Lattice { b1, b2 }
    }

    /// The standard lattice `ℤ²`.
    pub fn standard() -> Self {
        Lattice {
            b1: Point2::new(1.0, 0.0),
            b2: Point2::new(0.0, 1.0),
        }
    }

    pub fn basis(&self) -> (Point2, Point2) {
        (self.b1, self.b2)
    }

    /// Basis vectors as matrix columns.
    pub fn basis_matrix(&self) -> Mat2 {
        Mat2::from_columns(&[self.b1, self.b2])
    }

    pub fn det(&self) -> f64 {
        cross(self.b1, self.b2)
    }

    /// The lattice `A·Λ`.
    pub fn transformed(&self, a: &Mat2) -> Result<Self> {
        Self::with_any_covolume(a * self.b1, a * self.b2)
    }

    pub fn vector(&self, m: i64, n: i64) -> LatticeVector {
        LatticeVector {
            coeffs: (m, n),
            ambient: self.b1 * m as f64 + self.b2 * n as f64,
        }
    }

    /// Lagrange–Gauss reduction keeping track of the change of basis.
    pub fn reduction(&self) -> Result<Reduction> {
        let det = self.det();
        if !det.is_finite() || det.abs() < DEGENERATE_TOL {
            return Err(Error::DegenerateBasis(det.abs()));
        }
        let (mut b1, mut b2) = (self.b1, self.b2);
        // columns hold the coordinates of b1, b2 in the input basis
        let mut u = [[1i64, 0], [0, 1]];
        let swap = |b1: &mut Point2, b2: &mut Point2, u: &mut [[i64; 2]; 2]| {
            std::mem::swap(b1, b2);
            for row in u.iter_mut() {
                row.swap(0, 1);
            }
        };
        if b1.norm_squared() > b2.norm_squared() {
            swap(&mut b1, &mut b2, &mut u);
        }
        for _ in 0..10_000 {
            let n1 = b1.norm_squared();
            let dot = b1.dot(&b2);
            if 2.0 * dot.abs() <= n1 {
                break;
            }
            let mu = (dot / n1).round();
            if !(mu.abs() < 9.0e15) {
                return Err(Error::DegenerateBasis(det.abs()));
            }
            b2 -= b1 * mu;
            let mu = mu as i64;
            for row in u.iter_mut() {
                row[1] = row[1]
                    .checked_sub(mu.checked_mul(row[0]).ok_or(Error::DegenerateBasis(det.abs()))?)
                    .ok_or(Error::DegenerateBasis(det.abs()))?;
            }
            if b2.norm_squared() < b1.norm_squared() {
                swap(&mut b1, &mut b2, &mut u);
            } else {
                break;
            }
        }
        Ok(Reduction {
            reduced: Lattice { b1, b2 },
            transform: u,
        })
    }

    /// Same lattice with a reduced basis: `|b1| <= |b2|`, `|b1·b2| <= |b1|²/2`.
    pub fn reduce(&self) -> Result<Lattice> {
        Ok(self.reduction()?.reduced)
    }

    /// A nonzero vector of minimal norm, ties broken by [`tie_order`].
    pub fn shortest_vector(&self) -> Result<LatticeVector> {
        let red = self.reduction()?;
        let radius = red.reduced.b1.norm() * (1.0 + 1e-12);
        let mut best: Option<LatticeVector> = None;
        visit_ball(&red, radius, |m, n, v| {
            let cand = LatticeVector {
                coeffs: red.original_coeffs(m, n),
                ambient: v,
            };
            best = Some(match best {
                None => cand,
                Some(b) => {
                    let (nc, nb) = (v.norm_squared(), b.ambient.norm_squared());
                    if nc < nb || (nc == nb && tie_order(cand.coeffs, b.coeffs) == Ordering::Less) {
                        cand
                    } else {
                        b
                    }
                }
            });
        })?;
        best.ok_or(Error::DegenerateBasis(self.det().abs()))
    }

    /// All nonzero lattice vectors with `|λ| <= radius`, sorted by norm and
    /// then by coefficients.
    pub fn enumerate_ball(&self, radius: f64) -> Result<Vec<LatticeVector>> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {radius}")));
        }
        let red = self.reduction()?;
        let mut out = Vec::new();
        visit_ball(&red, radius, |m, n, v| {
            out.push(LatticeVector {
                coeffs: red.original_coeffs(m, n),
                ambient: v,
            })
        })?;
        out.sort_by(|a, b| {
            a.ambient
                .norm_squared()
                .total_cmp(&b.ambient.norm_squared())
                .then(a.coeffs.cmp(&b.coeffs))
        });
        Ok(out)
    }

    /// The vectors of `enumerate_ball` lying in the closed cone spanned by
    /// `first` and `second`.
    pub fn enumerate_cone(
        &self,
        first: Direction2,
        second: Direction2,
        radius: f64,
    ) -> Result<Vec<LatticeVector>> {
        let cone = Cone::new(first, second)?;
        Ok(self
            .enumerate_ball(radius)?
            .into_iter()
            .filter(|v| cone.contains(v.ambient))
            .collect())
    }
}

/// Closed salient cone spanned by two directions.
#[derive(Debug, Clone, Copy)]
pub struct Cone {
    a: Point2,
    b: Point2,
}

impl Cone {
    pub fn new(first: Direction2, second: Direction2) -> Result<Self> {
        let (a, b) = if cross(first, second) >= 0.0 {
            (first, second)
        } else {
            (second, first)
        };
        let c = cross(a, b);
        if a.norm() == 0.0 || b.norm() == 0.0 || (c <= 1e-15 * a.norm() * b.norm() && a.dot(&b) < 0.0) {
            return Err(Error::InvalidParameter("cone is not salient".into()));
        }
        Ok(Cone {
            a: a.normalize(),
            b: b.normalize(),
        })
    }

    pub fn contains(&self, v: Point2) -> bool {
        let tol = 1e-12 * v.norm();
        cross(self.a, v) >= -tol && cross(v, self.b) >= -tol && v.dot(&(self.a + self.b)) >= -tol
    }
}

/// Calls `f(m', n', λ)` for every nonzero `λ = m'·b1' + n'·b2'` with
/// `|λ| <= radius`, in reduced coordinates.
pub(crate) fn visit_ball(
    red: &Reduction,
    radius: f64,
    mut f: impl FnMut(i64, i64, Point2),
) -> Result<()> {
    let Lattice { b1, b2 } = red.reduced;
    let det = cross(b1, b2).abs();
    let n_max = (radius * b1.norm() / det * (1.0 + 1e-12)).floor();
    let m_max = (radius * b2.norm() / det * (1.0 + 1e-12)).floor();
    let box_points = (2.0 * m_max + 1.0) * (2.0 * n_max + 1.0);
    if !(box_points <= MAX_REGION_POINTS) {
        return Err(Error::RegionTooLarge(box_points));
    }
    let (n_max, m_max) = (n_max as i64, m_max as i64);
    let r2 = radius * radius;
    let n11 = b1.norm_squared();
    let n12 = b1.dot(&b2);
    let n22 = b2.norm_squared();
    for n in -n_max..=n_max {
        let nf = n as f64;
        // |m b1 + n b2|² <= r² as a quadratic in m
        let disc = nf * nf * n12 * n12 - n11 * (nf * nf * n22 - r2);
        if disc < -1e-9 * r2 * n11 {
            continue;
        }
        let root = disc.max(0.0).sqrt();
        let centre = -nf * n12 / n11;
        let half = root / n11;
        let slack = 1e-9 * (1.0 + centre.abs() + half);
        let lo = ((centre - half - slack).ceil() as i64).max(-m_max);
        let hi = ((centre + half + slack).floor() as i64).min(m_max);
        for m in lo..=hi {
            if m == 0 && n == 0 {
                continue;
            }
            let v = b1 * m as f64 + b2 * nf;
            if v.norm_squared() <= r2 {
                f(m, n, v);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn same_set(lat: &Lattice, other: &Lattice) -> bool {
        // every basis vector of one is an integer combination of the other
        let inv = other.basis_matrix().try_inverse().unwrap();
        let (b1, b2) = lat.basis();
        [b1, b2].iter().all(|b| {
            let c = inv * b;
            (c.x - c.x.round()).abs() < 1e-7 * (1.0 + c.x.abs()) && (c.y - c.y.round()).abs() < 1e-7 * (1.0 + c.y.abs())
        })
    }

    #[test]
    fn reduce_examples() {
        let r = Lattice::new(p(1.0, 0.0), p(5.0, 1.0)).unwrap().reduce().unwrap();
        let (b1, b2) = r.basis();
        assert_eq!(b1.abs(), p(1.0, 0.0));
        assert_eq!(b2.abs(), p(0.0, 1.0));

        let lat = Lattice::new(p(1.0, 0.0), p(0.5, 1.0)).unwrap();
        assert_eq!(lat.reduce().unwrap(), lat);

        let r = Lattice::new(p(2.0, 0.0), p(0.0, 0.5)).unwrap().reduce().unwrap();
        assert_eq!(r.basis().0, p(0.0, 0.5));
    }

    #[test]
    fn reduce_rejects_degenerate() {
        assert!(matches!(
            Lattice::with_any_covolume(p(1.0, 2.0), p(2.0, 4.0)),
            Err(Error::DegenerateBasis(_))
        ));
        assert!(matches!(
            Lattice::new(p(2.0, 0.0), p(0.0, 1.0)),
            Err(Error::NotUnimodular(_))
        ));
    }

    #[test]
    fn shortest_vector_examples() {
        let s = Lattice::standard().shortest_vector().unwrap();
        assert_eq!(s.coeffs, (1, 0));
        assert_eq!(s.ambient.norm(), 1.0);

        let s = Lattice::new(p(0.5, 0.0), p(0.0, 2.0)).unwrap().shortest_vector().unwrap();
        assert_eq!(s.ambient.norm(), 0.5);
    }

    #[test]
    fn hexagonal_shortest_matches_brute_force() {
        let y = 3f64.sqrt() / 2.0;
        let lat = Lattice::new(p(1.0 / y.sqrt(), 0.0), p(0.5 / y.sqrt(), y.sqrt())).unwrap();
        let mut brute = f64::INFINITY;
        for m in -50i64..=50 {
            for n in -50i64..=50 {
                if (m, n) != (0, 0) {
                    brute = brute.min(lat.vector(m, n).ambient.norm());
                }
            }
        }
        let got = lat.shortest_vector().unwrap().ambient.norm();
        assert!((got - brute).abs() < 1e-15);
        assert!((got - 1.074569931823542).abs() < 1e-12);
    }

    #[test]
    fn enumerate_ball_examples() {
        let z = Lattice::standard();
        let v = z.enumerate_ball(1.0).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(
            v.iter().map(|v| v.coeffs).collect::<Vec<_>>(),
            vec![(-1, 0), (0, -1), (0, 1), (1, 0)]
        );
        assert_eq!(z.enumerate_ball(1.5).unwrap().len(), 8);
        let thin = Lattice::new(p(0.5, 0.0), p(0.0, 2.0)).unwrap();
        let v = thin.enumerate_ball(0.6).unwrap();
        assert_eq!(v.iter().map(|v| v.ambient).collect::<Vec<_>>(), vec![p(-0.5, 0.0), p(0.5, 0.0)]);
        assert!(matches!(z.enumerate_ball(1e5), Err(Error::RegionTooLarge(_))));
    }

    #[test]
    fn enumerate_cone_examples() {
        let z = Lattice::standard();
        let v = z.enumerate_cone(p(1.0, 0.0), p(0.0, 1.0), 1.0).unwrap();
        assert_eq!(v.iter().map(|v| v.coeffs).collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        let v = z.enumerate_cone(p(1.0, 1.0), p(1.0, -1.0), 1.1).unwrap();
        assert_eq!(v.iter().map(|v| v.coeffs).collect::<Vec<_>>(), vec![(1, 0)]);
        let thin = Lattice::new(p(0.5, 0.0), p(0.0, 2.0)).unwrap();
        let v = thin.enumerate_cone(p(0.0, 1.0), p(1.0, 0.0), 0.6).unwrap();
        assert_eq!(v.iter().map(|v| v.ambient).collect::<Vec<_>>(), vec![p(0.5, 0.0)]);
        assert!(z.enumerate_cone(p(1.0, 0.0), p(-1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn tie_order_prefers_positive_first_coordinate() {
        let mut v = vec![(0, 1), (-1, 0), (0, -1), (1, 0)];
        v.sort_by(|a, b| tie_order(*a, *b));
        assert_eq!(v, vec![(1, 0), (-1, 0), (0, 1), (0, -1)]);
    }

    fn random_lattice(a: f64, b: f64, c: f64) -> Lattice {
        // lower-triangular unit-covolume basis sheared and rotated
        let s = (0.05 + a * 3.0).exp();
        let rot = nalgebra::Rotation2::new(c * 6.3);
        Lattice::new(rot * p(1.0 / s, 0.0), rot * p(b * 40.0 - 20.0, s)).unwrap()
    }

    #[test]
    fn enumerate_ball_matches_naive_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let lat = random_lattice(rng.random(), rng.random(), rng.random());
            let radius = 0.2 + 3.0 * rng.random::<f64>();
            let mut naive: Vec<(i64, i64)> = Vec::new();
            for m in -100i64..=100 {
                for n in -100i64..=100 {
                    let v = lat.vector(m, n);
                    if (m, n) != (0, 0) && v.ambient.norm() <= radius {
                        naive.push((m, n));
                    }
                }
            }
            let mut got: Vec<(i64, i64)> =
                lat.enumerate_ball(radius).unwrap().iter().map(|v| v.coeffs).collect();
            naive.sort();
            got.sort();
            assert_eq!(got, naive);
        }
    }

    #[test]
    fn shortest_never_longer_than_enumerated() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let lat = random_lattice(rng.random(), rng.random(), rng.random());
            let s = lat.shortest_vector().unwrap().ambient.norm();
            let all = lat.enumerate_ball(2.0 * s + 1.0).unwrap();
            assert!(all.iter().all(|v| v.ambient.norm() >= s));
            // hexagonal extremality for co-area one
            assert!(s * s <= 2.0 / 3f64.sqrt() + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn reduction_is_unimodular_change_of_basis(
            a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0,
            m in -6i64..6, n in -6i64..6,
        ) {
            let lat = random_lattice(a, b, c);
            // scramble with a unimodular shear before reducing
            let (b1, b2) = lat.basis();
            let lat = Lattice::new(b1 + b2 * m as f64, b2 + (b1 + b2 * m as f64) * n as f64).unwrap();
            let red = lat.reduction().unwrap();
            let u = red.transform;
            prop_assert_eq!((u[0][0] * u[1][1] - u[0][1] * u[1][0]).abs(), 1);
            let (r1, r2) = red.reduced.basis();
            let (o1, o2) = lat.basis();
            let scale = 1.0 + o1.norm() + o2.norm();
            prop_assert!((r1 - (o1 * u[0][0] as f64 + o2 * u[1][0] as f64)).norm() < 1e-9 * scale);
            prop_assert!((r2 - (o1 * u[0][1] as f64 + o2 * u[1][1] as f64)).norm() < 1e-9 * scale);
            prop_assert!(r1.norm() <= r2.norm() * (1.0 + 1e-12));
            prop_assert!(2.0 * r1.dot(&r2).abs() <= r1.norm_squared() * (1.0 + 1e-9));
            prop_assert!(same_set(&red.reduced, &lat) && same_set(&lat, &red.reduced));
        }
    }
}
