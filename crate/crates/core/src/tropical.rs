//! Evaluation of the tropical distance series
//! `ℱ(p) = min_{λ ∈ Λ∖0} (c_λ + λ·p)`, `c_λ = sup_{q ∈ Ω} (−λ·q)`.
//!
//! Writing `g(λ) = c_λ + λ·p = sup_{q ∈ Ω} λ·(p − q)`, `g` is the support
//! function of `K = p − Ω`. Once some candidate gives `g <= V`, every better
//! vector lies in the convex body `V·K°`. Its extent along a linear functional
//! `w` is `V / exit(p, −w)`, which bounds the rows of the reduced basis; inside
//! a row `g` is convex in the remaining coordinate and is minimized by integer
//! ternary search. Since `K` contains the disk of radius `d = dist(p, ∂Ω)`,
//! `g(λ) >= d·|λ|` and the body lies in the ball of radius `V/d`.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{cross, ConvexDomain, Extended, Point2};
use crate::lattice::{tie_order, Lattice, LatticeVector, Reduction};

/// Points closer than this to the boundary evaluate to zero.
pub const BOUNDARY_TOL: f64 = 1e-9;
/// Cone search for unbounded domains gives up at `2^20` times the shortest
/// vector length.
pub const CONE_SEARCH_DOUBLINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TropicalValue {
    pub value: f64,
    pub argmin: LatticeVector,
    /// Every lattice vector of norm at most this radius was either examined
    /// or shown to exceed `value`. Zero for boundary points.
    pub certified_radius: f64,
}

/// Serializable form of a [`TropicalValue`].
#[derive(Debug, Clone, Serialize)]
pub struct TropicalReport {
    pub value: f64,
    pub argmin: [i64; 2],
    pub argmin_vector: [f64; 2],
    pub certified_radius: f64,
}

impl From<&TropicalValue> for TropicalReport {
    fn from(v: &TropicalValue) -> Self {
        TropicalReport {
            value: v.value,
            argmin: [v.argmin.coeffs.0, v.argmin.coeffs.1],
            argmin_vector: [v.argmin.ambient.x, v.argmin.ambient.y],
            certified_radius: v.certified_radius,
        }
    }
}

/// A query point with its distance to the boundary, reusable across lattices.
#[derive(Debug, Clone, Copy)]
pub struct PointContext {
    pub p: Point2,
    pub d: f64,
}

impl PointContext {
    pub fn new(domain: &ConvexDomain, p: Point2) -> Result<Self> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::InvalidParameter("non-finite point".into()));
        }
        Ok(PointContext {
            p,
            d: domain.boundary_distance(p)?,
        })
    }
}

/// Result of an evaluation with the argmin also in reduced coordinates, for
/// warm-starting nearby queries on the same lattice.
#[derive(Debug, Clone, Copy)]
pub struct Hinted {
    pub value: TropicalValue,
    pub hint: (i64, i64),
}

/// Per-(domain, lattice) state: the reduced basis and the coordinate
/// functionals.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    domain: &'a ConvexDomain,
    red: Reduction,
    w_n: Point2,
    rays: Option<(Point2, Point2)>,
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    reduced: (i64, i64),
    coeffs: (i64, i64),
}

impl Best {
    fn offer(slot: &mut Option<Best>, cand: Best) {
        let better = match slot {
            None => true,
            Some(b) => {
                cand.value < b.value
                    || (cand.value == b.value && tie_order(cand.coeffs, b.coeffs) == Ordering::Less)
            }
        };
        if better {
            *slot = Some(cand);
        }
    }
}

fn floor_with_slack(x: f64) -> f64 {
    (x + 1e-9 * (1.0 + x.abs())).floor()
}

fn ceil_with_slack(x: f64) -> f64 {
    (x - 1e-9 * (1.0 + x.abs())).ceil()
}

impl<'a> Evaluator<'a> {
    pub fn new(domain: &'a ConvexDomain, lat: &Lattice) -> Result<Self> {
        let red = lat.reduction()?;
        let (_, w_n) = red.coordinate_functionals();
        let rays = match domain {
            ConvexDomain::Unbounded(u) => Some((u.ray_in(), u.ray_out())),
            _ => None,
        };
        Ok(Evaluator {
            domain,
            red,
            w_n,
            rays,
        })
    }

    pub fn reduction(&self) -> &Reduction {
        &self.red
    }

    /// `c_λ + λ·p` for `λ` given in reduced coordinates; infinite when the
    /// coefficient is.
    pub fn affine_value(&self, p: Point2, reduced: (i64, i64)) -> f64 {
        self.g(p, reduced.0, reduced.1)
    }

    #[inline]
    fn g(&self, p: Point2, m: i64, n: i64) -> f64 {
        let lam = self.red.ambient(m, n);
        match self.domain.tropical_coefficient(lam) {
            Extended::Finite(c) => c + lam.dot(&p),
            Extended::PosInfinity => f64::INFINITY,
        }
    }

    fn candidate(&self, p: Point2, m: i64, n: i64) -> Best {
        Best {
            value: self.g(p, m, n),
            reduced: (m, n),
            coeffs: self.red.original_coeffs(m, n),
        }
    }

    fn finish(&self, best: Best, certified_radius: f64) -> Hinted {
        let (m, n) = best.reduced;
        Hinted {
            value: TropicalValue {
                value: best.value,
                argmin: LatticeVector {
                    coeffs: best.coeffs,
                    ambient: self.red.ambient(m, n),
                },
                certified_radius,
            },
            hint: best.reduced,
        }
    }

    /// Range of `m'` in row `n'` allowed by the recession rays
    /// (`λ·r >= 0` for both rays), or the whole line for bounded domains.
    fn cone_row(&self, n: i64) -> Option<(f64, f64)> {
        let Some((r1, r2)) = self.rays else {
            return Some((f64::NEG_INFINITY, f64::INFINITY));
        };
        let (b1, b2) = self.red.reduced.basis();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for r in [r1, r2] {
            let a = b1.dot(&r);
            let c = n as f64 * b2.dot(&r);
            let scale = 1e-12 * (b1.norm() + (n as f64).abs() * b2.norm());
            if a > 0.0 {
                lo = lo.max(ceil_with_slack(-c / a));
            } else if a < 0.0 {
                hi = hi.min(floor_with_slack(c / -a));
            } else if c < -scale {
                return None;
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Range of `m'` in row `n'` with `|λ| <= radius`, padded outward.
    fn ball_row(&self, n: i64, radius: f64) -> Option<(f64, f64)> {
        let (b1, b2) = self.red.reduced.basis();
        let nf = n as f64;
        let (n11, n12) = (b1.norm_squared(), b1.dot(&b2));
        let r2 = radius * radius;
        let disc = nf * nf * (n12 * n12 - n11 * b2.norm_squared()) + n11 * r2;
        if disc < -1e-9 * n11 * r2 {
            return None;
        }
        let centre = -nf * n12 / n11;
        let half = disc.max(0.0).sqrt() / n11;
        Some((ceil_with_slack(centre - half), floor_with_slack(centre + half)))
    }

    /// Doubling search for any vector with a finite coefficient.
    fn cone_search(&self, p: Point2) -> Result<Best> {
        let (b1, b2) = self.red.reduced.basis();
        let det = cross(b1, b2).abs();
        let base = b1.norm();
        for k in 0..=CONE_SEARCH_DOUBLINGS {
            let radius = base * f64::from(1u32 << k);
            let n_max = (radius * b1.norm() / det).floor() as i64;
            let mut best: Option<Best> = None;
            for n in -n_max..=n_max {
                let Some((lo, hi)) = self.cone_row(n) else { continue };
                // ball row: |m b1 + n b2| <= radius
                let nf = n as f64;
                let n11 = b1.norm_squared();
                let n12 = b1.dot(&b2);
                let disc = nf * nf * n12 * n12 - n11 * (nf * nf * b2.norm_squared() - radius * radius);
                if disc < 0.0 {
                    continue;
                }
                let centre = -nf * n12 / n11;
                let half = disc.sqrt() / n11;
                let lo = lo.max((centre - half).ceil());
                let hi = hi.min((centre + half).floor());
                if lo > hi {
                    continue;
                }
                let m = centre.round().clamp(lo, hi) as i64;
                for m in [m, lo as i64, hi as i64] {
                    if (m, n) != (0, 0) {
                        let c = self.candidate(p, m, n);
                        if c.value.is_finite() {
                            Best::offer(&mut best, c);
                        }
                    }
                }
            }
            if let Some(b) = best {
                return Ok(b);
            }
        }
        Err(Error::NotAdmissible)
    }

    /// Minimizes `g` over row `n` for `m` in `[lo, hi]`, skipping `λ = 0`.
    fn search_row(&self, p: Point2, n: i64, lo: i64, hi: i64, best: &mut Option<Best>) {
        if lo > hi {
            return;
        }
        if n == 0 {
            // g is convex with g(0) = 0, so the best nonzero entries are ±1
            for m in [-1, 1] {
                if (lo..=hi).contains(&m) {
                    let c = self.candidate(p, m, 0);
                    if c.value.is_finite() {
                        Best::offer(best, c);
                    }
                }
            }
            return;
        }
        let f = |m: i64| self.g(p, m, n);
        let (mut lo, mut hi) = (lo, hi);
        while lo <= hi && f(lo).is_infinite() {
            lo += 1;
        }
        while hi >= lo && f(hi).is_infinite() {
            hi -= 1;
        }
        if lo > hi {
            return;
        }
        while hi - lo > 2 {
            let third = (hi - lo) / 3;
            let (m1, m2) = (lo + third, hi - third);
            let (f1, f2) = (f(m1), f(m2));
            if f1 < f2 {
                hi = m2 - 1;
            } else if f1 > f2 {
                lo = m1 + 1;
            } else {
                lo = m1;
                hi = m2;
            }
        }
        let mut arg = lo;
        let mut val = f(lo);
        for m in lo + 1..=hi {
            let v = f(m);
            if v < val {
                val = v;
                arg = m;
            }
        }
        let mut left = arg;
        while f(left - 1) == val {
            left -= 1;
        }
        let mut right = arg;
        while f(right + 1) == val {
            right += 1;
        }
        for m in left..=right {
            Best::offer(best, Best {
                value: val,
                reduced: (m, n),
                coeffs: self.red.original_coeffs(m, n),
            });
        }
    }

    pub fn eval(&self, ctx: &PointContext) -> Result<TropicalValue> {
        Ok(self.eval_hinted(ctx, None)?.value)
    }

    /// Evaluates at `ctx.p`; `hint` is a reduced-coordinate vector tried as
    /// an extra seed (typically the argmin at a neighbouring point).
    pub fn eval_hinted(&self, ctx: &PointContext, hint: Option<(i64, i64)>) -> Result<Hinted> {
        let p = ctx.p;
        let mut best: Option<Best> = None;
        if let Some((m, n)) = hint.filter(|&h| h != (0, 0)) {
            let c = self.candidate(p, m, n);
            if c.value.is_finite() {
                best = Some(c);
            }
        }
        if best.is_none() {
            for (m, n) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
                for (m, n) in [(m, n), (-m, -n)] {
                    let c = self.candidate(p, m, n);
                    if c.value.is_finite() {
                        Best::offer(&mut best, c);
                    }
                }
            }
        }
        let seed = match best {
            Some(b) => b,
            None => self.cone_search(p)?,
        };
        if ctx.d <= BOUNDARY_TOL {
            return Ok(self.finish(Best { value: 0.0, ..seed }, 0.0));
        }
        let v = seed.value;
        let mut best = Some(seed);

        let extent = |w: Point2| -> f64 {
            match self.domain.exit_distance(p, w) {
                Extended::Finite(t) if t > 0.0 => v / t,
                Extended::Finite(_) => f64::INFINITY,
                Extended::PosInfinity => 0.0,
            }
        };
        let n_lo = ceil_with_slack(-extent(self.w_n));
        let n_hi = floor_with_slack(extent(-self.w_n));
        let rows = n_hi - n_lo + 1.0;
        if !(rows <= crate::lattice::MAX_REGION_POINTS) {
            return Err(Error::RegionTooLarge(rows));
        }
        let radius = v / ctx.d;
        for n in n_lo as i64..=n_hi as i64 {
            let Some((lo, hi)) = self.cone_row(n) else { continue };
            let Some((b_lo, b_hi)) = self.ball_row(n, radius) else { continue };
            let lo = lo.max(b_lo);
            let hi = hi.min(b_hi);
            if lo > hi {
                continue;
            }
            self.search_row(p, n, lo as i64, hi as i64, &mut best);
        }
        let best = best.expect("seed is always present");
        Ok(self.finish(best, radius))
    }
}

/// `ℱ_Λ^Ω(p)` with its minimizing vector.
pub fn eval(domain: &ConvexDomain, lat: &Lattice, p: Point2) -> Result<TropicalValue> {
    let ctx = PointContext::new(domain, p)?;
    Evaluator::new(domain, lat)?.eval(&ctx)
}

/// Elementwise [`eval`] sharing the reduced basis; errors are per point.
pub fn eval_batch(domain: &ConvexDomain, lat: &Lattice, points: &[Point2]) -> Vec<Result<TropicalValue>> {
    let ev = match Evaluator::new(domain, lat) {
        Ok(ev) => ev,
        Err(e) => return points.iter().map(|_| Err(e.clone())).collect(),
    };
    points
        .iter()
        .map(|&p| PointContext::new(domain, p).and_then(|ctx| ev.eval(&ctx)))
        .collect()
}
