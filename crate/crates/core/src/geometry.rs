//! Convex planar domains: polygons, ellipses and unbounded polygons whose
//! recession cone is salient.
//!
//! Every query the tropical layer needs is answered here: the support
//! function, boundary distance, ray exit distance and the polar cone of
//! covectors with a finite support value.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::ops::Add;

use crate::error::{Error, Result};

/// A point (or vector) of the plane.
pub type Point2 = Vector2<f64>;
/// A nonzero direction or covector of the plane.
pub type Direction2 = Vector2<f64>;
/// A real 2×2 matrix.
pub type Mat2 = Matrix2<f64>;

/// Tolerance for merging vertices and collinear triples.
const MERGE_TOL: f64 = 1e-12;
/// Points this far outside count as exterior for `boundary_distance`.
const OUTSIDE_TOL: f64 = 1e-9;

#[inline]
pub fn cross(a: Point2, b: Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Real number or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Extended {
    Finite(f64),
    PosInfinity,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PosInfinity => None,
        }
    }

    /// Lossy conversion, `+∞` becomes `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Add<f64> for Extended {
    type Output = Extended;
    fn add(self, rhs: f64) -> Extended {
        match self {
            Extended::Finite(v) => Extended::Finite(v + rhs),
            Extended::PosInfinity => Extended::PosInfinity,
        }
    }
}

/// Classification returned by [`ConvexDomain::contains`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Interior,
    Boundary,
    Exterior,
}

/// Cone of directions with a finite support value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolarCone {
    FullPlane,
    /// Closed cone spanned by two extreme rays.
    Cone { first: Direction2, second: Direction2 },
}

/// Closed half-plane `normal · x <= offset` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HalfPlane {
    normal: Point2,
    offset: f64,
}

impl HalfPlane {
    fn through(point: Point2, dir: Point2) -> Self {
        // interior lies to the left of `dir`
        let normal = Point2::new(dir.y, -dir.x).normalize();
        HalfPlane {
            normal,
            offset: normal.dot(&point),
        }
    }

    #[inline]
    fn slack(&self, p: Point2) -> f64 {
        self.offset - self.normal.dot(&p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
    halfplanes: Vec<HalfPlane>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    center: Point2,
    form: Mat2,
    inv_form: Mat2,
    /// Semi-axes, major first.
    axes: (f64, f64),
    /// Columns are the unit directions of the major and minor axes.
    frame: Mat2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnboundedPolygon {
    ray_in: Direction2,
    vertices: Vec<Point2>,
    ray_out: Direction2,
    halfplanes: Vec<HalfPlane>,
}

/// A closed convex planar domain with nonempty interior containing no line.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexDomain {
    Polygon(Polygon),
    Ellipse(Ellipse),
    Unbounded(UnboundedPolygon),
}

/// Serialized form of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DomainSpec {
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    Ellipse {
        center: [f64; 2],
        form: [[f64; 2]; 2],
    },
    Unbounded {
        ray_in: [f64; 2],
        vertices: Vec<[f64; 2]>,
        ray_out: [f64; 2],
    },
}

fn pt(a: [f64; 2]) -> Point2 {
    Point2::new(a[0], a[1])
}

fn arr(p: Point2) -> [f64; 2] {
    [p.x, p.y]
}

fn check_finite(points: &[Point2]) -> Result<()> {
    if points.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidDomain("non-finite coordinate".into()))
    }
}

fn scale_of(points: &[Point2]) -> f64 {
    points
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(1.0, f64::max)
}

/// Drops consecutive duplicates, including the wrap-around pair when `cyclic`.
fn dedup(points: &[Point2], tol: f64, cyclic: bool) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(points.len());
    for &p in points {
        if out.last().is_none_or(|q| (p - q).norm() > tol) {
            out.push(p);
        }
    }
    if cyclic {
        while out.len() > 1 && (out[0] - out[out.len() - 1]).norm() <= tol {
            out.pop();
        }
    }
    out
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| cross(vertices[i], vertices[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn ray_distance(p: Point2, origin: Point2, dir: Point2) -> f64 {
    let t = ((p - origin).dot(&dir) / dir.norm_squared()).max(0.0);
    (p - (origin + dir * t)).norm()
}

/// Exit distance along `u` through a list of half-planes.
fn halfplane_exit(halfplanes: &[HalfPlane], p: Point2, u: Point2) -> Extended {
    let mut best = f64::INFINITY;
    for h in halfplanes {
        let rate = h.normal.dot(&u);
        if rate > 0.0 {
            best = best.min(h.slack(p) / rate);
        }
    }
    if best.is_finite() {
        Extended::Finite(best.max(0.0))
    } else {
        Extended::PosInfinity
    }
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        check_finite(&vertices)?;
        let tol = MERGE_TOL * scale_of(&vertices);
        let mut v = dedup(&vertices, tol, true);
        if v.len() < 3 {
            return Err(Error::InvalidDomain("polygon needs at least 3 distinct vertices".into()));
        }
        if signed_area(&v) < 0.0 {
            v.reverse();
        }
        // merge collinear triples until stable
        loop {
            let n = v.len();
            if n < 3 {
                break;
            }
            let straight = (0..n).find(|&i| {
                let a = v[(i + n - 1) % n];
                let b = v[i];
                let c = v[(i + 1) % n];
                let (e1, e2) = (b - a, c - b);
                cross(e1, e2).abs() <= MERGE_TOL * e1.norm() * e2.norm() && e1.dot(&e2) > 0.0
            });
            match straight {
                Some(i) => {
                    v.remove(i);
                }
                None => break,
            }
        }
        let n = v.len();
        let area = if n >= 3 { signed_area(&v) } else { 0.0 };
        if n < 3 || area <= MERGE_TOL * scale_of(&v).powi(2) {
            return Err(Error::InvalidDomain("polygon has zero area".into()));
        }
        for i in 0..n {
            let e1 = v[(i + 1) % n] - v[i];
            let e2 = v[(i + 2) % n] - v[(i + 1) % n];
            if cross(e1, e2) <= 0.0 {
                return Err(Error::InvalidDomain("polygon is not strictly convex".into()));
            }
        }
        let halfplanes = (0..n)
            .map(|i| HalfPlane::through(v[i], v[(i + 1) % n] - v[i]))
            .collect();
        Ok(Polygon {
            vertices: v,
            halfplanes,
        })
    }

    /// Vertices in counter-clockwise order.
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }
}

/// Eberly's robust root of the secular equation for the closest ellipse point.
fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..2200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        match g.partial_cmp(&0.0) {
            Some(Ordering::Greater) => s0 = s,
            Some(Ordering::Less) => s1 = s,
            _ => break,
        }
    }
    s
}

/// Distance from `(y0, y1)` (first quadrant, axis frame) to the ellipse with
/// semi-axes `e0 >= e1`.
fn axis_frame_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let sbar = ellipse_root(r0, z0, z1, g);
                let x0 = r0 * y0 / (sbar + r0);
                let x1 = y1 / (sbar + 1.0);
                (x0 - y0).hypot(x1 - y1)
            } else {
                0.0
            }
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

impl Ellipse {
    /// `{p : (p - center)ᵀ form (p - center) <= 1}`.
    pub fn new(center: Point2, form: Mat2) -> Result<Self> {
        check_finite(&[center])?;
        if form.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain("non-finite quadratic form".into()));
        }
        let scale = form.amax().max(1.0);
        if (form[(0, 1)] - form[(1, 0)]).abs() > MERGE_TOL * scale {
            return Err(Error::InvalidDomain("quadratic form is not symmetric".into()));
        }
        let off = 0.5 * (form[(0, 1)] + form[(1, 0)]);
        let form = Mat2::new(form[(0, 0)], off, off, form[(1, 1)]);
        if form[(0, 0)] <= 0.0 || form.determinant() <= 0.0 {
            return Err(Error::InvalidDomain("quadratic form is not positive definite".into()));
        }
        let inv_form = form.try_inverse().ok_or(Error::SingularMatrix(0.0))?;
        let eig = form.symmetric_eigen();
        let (mut i_major, mut i_minor) = (0, 1);
        if eig.eigenvalues[0] > eig.eigenvalues[1] {
            std::mem::swap(&mut i_major, &mut i_minor);
        }
        let axes = (
            1.0 / eig.eigenvalues[i_major].sqrt(),
            1.0 / eig.eigenvalues[i_minor].sqrt(),
        );
        let frame = Mat2::from_columns(&[
            eig.eigenvectors.column(i_major).into_owned(),
            eig.eigenvectors.column(i_minor).into_owned(),
        ]);
        Ok(Ellipse {
            center,
            form,
            inv_form,
            axes,
            frame,
        })
    }

    /// Origin-centered ellipse `a x² + b xy + c y² <= 1` of area π, i.e. with
    /// `4ac - b² = 4`.
    pub fn area_pi_normal_form(a: f64, b: f64, c: f64) -> Result<Self> {
        if a <= 0.0 || c <= 0.0 || (4.0 * a * c - b * b - 4.0).abs() > 1e-9 {
            return Err(Error::InvalidDomain(
                "normal form needs a, c > 0 and 4ac - b² = 4".into(),
            ));
        }
        Ellipse::new(Point2::zeros(), Mat2::new(a, b / 2.0, b / 2.0, c))
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn form(&self) -> &Mat2 {
        &self.form
    }

    fn quad(&self, p: Point2) -> f64 {
        let q = p - self.center;
        q.dot(&(self.form * q))
    }

    fn boundary_at(&self, s: f64) -> Point2 {
        self.center + self.frame * Point2::new(self.axes.0 * s.cos(), self.axes.1 * s.sin())
    }

    fn distance_to_curve(&self, p: Point2) -> f64 {
        let local = self.frame.transpose() * (p - self.center);
        axis_frame_distance(self.axes.0, self.axes.1, local.x.abs(), local.y.abs())
    }
}

impl UnboundedPolygon {
    /// Region bounded by the ray arriving along `ray_in`, the vertex chain and
    /// the ray leaving along `ray_out`. Both rays are recession directions;
    /// either traversal orientation is accepted.
    pub fn new(ray_in: Direction2, vertices: Vec<Point2>, ray_out: Direction2) -> Result<Self> {
        check_finite(&vertices)?;
        check_finite(&[ray_in, ray_out])?;
        if ray_in.norm() == 0.0 || ray_out.norm() == 0.0 {
            return Err(Error::InvalidDomain("zero recession ray".into()));
        }
        let tol = MERGE_TOL * scale_of(&vertices);
        let mut chain = dedup(&vertices, tol, false);
        if chain.is_empty() {
            return Err(Error::InvalidDomain("unbounded polygon needs a vertex".into()));
        }
        let (mut r_in, mut r_out) = (ray_in.normalize(), ray_out.normalize());
        let turning = |r_in: Point2, chain: &[Point2], r_out: Point2| -> Vec<Point2> {
            let mut dirs = vec![-r_in];
            dirs.extend(chain.windows(2).map(|w| (w[1] - w[0]).normalize()));
            dirs.push(r_out);
            dirs
        };
        let dirs = turning(r_in, &chain, r_out);
        let total: f64 = dirs
            .windows(2)
            .map(|w| cross(w[0], w[1]).atan2(w[0].dot(&w[1])))
            .sum();
        if total < 0.0 {
            std::mem::swap(&mut r_in, &mut r_out);
            chain.reverse();
        }
        // drop vertices where the boundary goes straight on
        loop {
            let dirs = turning(r_in, &chain, r_out);
            let straight = (1..dirs.len()).find(|&i| {
                cross(dirs[i - 1], dirs[i]).abs() <= MERGE_TOL && dirs[i - 1].dot(&dirs[i]) > 0.0
            });
            match straight {
                Some(i) if chain.len() > 1 => {
                    chain.remove(i - 1);
                }
                _ => break,
            }
        }
        let dirs = turning(r_in, &chain, r_out);
        let mut total = 0.0;
        for w in dirs.windows(2) {
            if cross(w[0], w[1]) <= 0.0 {
                return Err(Error::InvalidDomain(
                    "unbounded polygon is not strictly convex or its rays are parallel".into(),
                ));
            }
            total += cross(w[0], w[1]).atan2(w[0].dot(&w[1]));
        }
        if total >= std::f64::consts::PI - 1e-12 {
            return Err(Error::InvalidDomain(
                "recession rays are parallel or the domain contains a line".into(),
            ));
        }
        let mut halfplanes = vec![HalfPlane::through(chain[0], -r_in)];
        halfplanes.extend(chain.windows(2).map(|w| HalfPlane::through(w[0], w[1] - w[0])));
        halfplanes.push(HalfPlane::through(chain[chain.len() - 1], r_out));
        Ok(UnboundedPolygon {
            ray_in: r_in,
            vertices: chain,
            ray_out: r_out,
            halfplanes,
        })
    }

    pub fn ray_in(&self) -> Direction2 {
        self.ray_in
    }

    pub fn ray_out(&self) -> Direction2 {
        self.ray_out
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// Intersection point of the two asymptote lines.
    pub fn asymptote_apex(&self) -> Point2 {
        let a = self.vertices[0];
        let b = self.vertices[self.vertices.len() - 1];
        // a + s·ray_in = b + t·ray_out
        let m = Mat2::from_columns(&[self.ray_in, -self.ray_out]);
        let st = m.try_inverse().expect("rays are not parallel") * (b - a);
        a + self.ray_in * st.x
    }
}

impl ConvexDomain {
    pub fn polygon(vertices: Vec<Point2>) -> Result<Self> {
        Polygon::new(vertices).map(ConvexDomain::Polygon)
    }

    pub fn ellipse(center: Point2, form: Mat2) -> Result<Self> {
        Ellipse::new(center, form).map(ConvexDomain::Ellipse)
    }

    pub fn unbounded(ray_in: Direction2, vertices: Vec<Point2>, ray_out: Direction2) -> Result<Self> {
        UnboundedPolygon::new(ray_in, vertices, ray_out).map(ConvexDomain::Unbounded)
    }

    /// `[-1, 1]²`.
    pub fn square() -> Self {
        Self::polygon(vec![
            Point2::new(-1.0, -1.0),
            Point2::new(1.0, -1.0),
            Point2::new(1.0, 1.0),
            Point2::new(-1.0, 1.0),
        ])
        .expect("valid square")
    }

    /// The closed unit disk.
    pub fn disk() -> Self {
        Self::ellipse(Point2::zeros(), Mat2::identity()).expect("valid disk")
    }

    /// The closed first quadrant with apex at the origin.
    pub fn quadrant() -> Self {
        Self::unbounded(Point2::new(0.0, 1.0), vec![Point2::zeros()], Point2::new(1.0, 0.0))
            .expect("valid quadrant")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "square" => Some(Self::square()),
            "disk" => Some(Self::disk()),
            "quadrant" => Some(Self::quadrant()),
            _ => None,
        }
    }

    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        match spec {
            DomainSpec::Polygon { vertices } => {
                Self::polygon(vertices.iter().copied().map(pt).collect())
            }
            DomainSpec::Ellipse { center, form } => Self::ellipse(
                pt(*center),
                Mat2::new(form[0][0], form[0][1], form[1][0], form[1][1]),
            ),
            DomainSpec::Unbounded {
                ray_in,
                vertices,
                ray_out,
            } => Self::unbounded(
                pt(*ray_in),
                vertices.iter().copied().map(pt).collect(),
                pt(*ray_out),
            ),
        }
    }

    pub fn to_spec(&self) -> DomainSpec {
        match self {
            ConvexDomain::Polygon(p) => DomainSpec::Polygon {
                vertices: p.vertices.iter().copied().map(arr).collect(),
            },
            ConvexDomain::Ellipse(e) => DomainSpec::Ellipse {
                center: arr(e.center),
                form: [
                    [e.form[(0, 0)], e.form[(0, 1)]],
                    [e.form[(1, 0)], e.form[(1, 1)]],
                ],
            },
            ConvexDomain::Unbounded(u) => DomainSpec::Unbounded {
                ray_in: arr(u.ray_in),
                vertices: u.vertices.iter().copied().map(arr).collect(),
                ray_out: arr(u.ray_out),
            },
        }
    }

    /// Parses a JSON domain description.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DomainSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidDomain(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, ConvexDomain::Unbounded(_))
    }

    /// `sup_{p ∈ Ω} d·p`.
    pub fn support(&self, d: Direction2) -> Extended {
        match self {
            ConvexDomain::Polygon(poly) => Extended::Finite(max_dot(&poly.vertices, d)),
            ConvexDomain::Ellipse(e) => {
                Extended::Finite(d.dot(&e.center) + d.dot(&(e.inv_form * d)).sqrt())
            }
            ConvexDomain::Unbounded(u) => {
                if d.dot(&u.ray_in) > 0.0 || d.dot(&u.ray_out) > 0.0 {
                    Extended::PosInfinity
                } else {
                    Extended::Finite(max_dot(&u.vertices, d))
                }
            }
        }
    }

    /// `c_λ = -inf_{p ∈ Ω} λ·p`.
    pub fn tropical_coefficient(&self, lambda: Direction2) -> Extended {
        self.support(-lambda)
    }

    /// Distance to the boundary, positive inside and negative outside.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        match self {
            ConvexDomain::Polygon(poly) => {
                let inside = poly
                    .halfplanes
                    .iter()
                    .map(|h| h.slack(p))
                    .fold(f64::INFINITY, f64::min);
                if inside >= 0.0 {
                    inside
                } else {
                    let n = poly.vertices.len();
                    -(0..n)
                        .map(|i| segment_distance(p, poly.vertices[i], poly.vertices[(i + 1) % n]))
                        .fold(f64::INFINITY, f64::min)
                }
            }
            ConvexDomain::Ellipse(e) => {
                let d = e.distance_to_curve(p);
                if e.quad(p) <= 1.0 {
                    d
                } else {
                    -d
                }
            }
            ConvexDomain::Unbounded(u) => {
                let inside = u
                    .halfplanes
                    .iter()
                    .map(|h| h.slack(p))
                    .fold(f64::INFINITY, f64::min);
                if inside >= 0.0 {
                    inside
                } else {
                    let k = u.vertices.len();
                    let mut best = ray_distance(p, u.vertices[0], u.ray_in)
                        .min(ray_distance(p, u.vertices[k - 1], u.ray_out));
                    for w in u.vertices.windows(2) {
                        best = best.min(segment_distance(p, w[0], w[1]));
                    }
                    -best
                }
            }
        }
    }

    /// Euclidean distance from an interior or boundary point to `∂Ω`.
    pub fn boundary_distance(&self, p: Point2) -> Result<f64> {
        let s = self.signed_distance(p);
        if s < -OUTSIDE_TOL || !s.is_finite() {
            Err(Error::PointOutside { x: p.x, y: p.y })
        } else {
            Ok(s.max(0.0))
        }
    }

    pub fn contains(&self, p: Point2, tol: f64) -> Containment {
        let s = self.signed_distance(p);
        if s > tol {
            Containment::Interior
        } else if s >= -tol {
            Containment::Boundary
        } else {
            Containment::Exterior
        }
    }

    /// Directions with finite support value.
    pub fn polar_cone(&self) -> PolarCone {
        match self {
            ConvexDomain::Unbounded(u) => {
                let pick = |r: Point2, other: Point2| {
                    let perp = Point2::new(r.y, -r.x);
                    if perp.dot(&other) <= 0.0 {
                        perp
                    } else {
                        -perp
                    }
                };
                PolarCone::Cone {
                    first: pick(u.ray_in, u.ray_out),
                    second: pick(u.ray_out, u.ray_in),
                }
            }
            _ => PolarCone::FullPlane,
        }
    }

    /// Image of the domain under the linear map `a`.
    pub fn apply_linear(&self, a: &Mat2) -> Result<Self> {
        let det = a.determinant();
        if det.abs() < 1e-12 || !det.is_finite() {
            return Err(Error::SingularMatrix(det));
        }
        match self {
            ConvexDomain::Polygon(p) => Self::polygon(p.vertices.iter().map(|v| a * v).collect()),
            ConvexDomain::Ellipse(e) => {
                let inv = a.try_inverse().ok_or(Error::SingularMatrix(det))?;
                let form = inv.transpose() * e.form * inv;
                let form = 0.5 * (form + form.transpose());
                Self::ellipse(a * e.center, form)
            }
            ConvexDomain::Unbounded(u) => Self::unbounded(
                a * u.ray_in,
                u.vertices.iter().map(|v| a * v).collect(),
                a * u.ray_out,
            ),
        }
    }

    pub fn translate(&self, shift: Point2) -> Self {
        match self {
            ConvexDomain::Polygon(p) => {
                Self::polygon(p.vertices.iter().map(|v| v + shift).collect()).expect("translate")
            }
            ConvexDomain::Ellipse(e) => Self::ellipse(e.center + shift, e.form).expect("translate"),
            ConvexDomain::Unbounded(u) => Self::unbounded(
                u.ray_in,
                u.vertices.iter().map(|v| v + shift).collect(),
                u.ray_out,
            )
            .expect("translate"),
        }
    }

    /// Homothety `p ↦ r·p` with `r > 0`.
    pub fn scale(&self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale factor {r}")));
        }
        self.apply_linear(&(Mat2::identity() * r))
    }

    /// `sup_{q ∈ Ω} |q - p|`.
    pub fn circumradius_about(&self, p: Point2) -> Extended {
        match self {
            ConvexDomain::Polygon(poly) => Extended::Finite(
                poly.vertices
                    .iter()
                    .map(|v| (v - p).norm())
                    .fold(0.0, f64::max),
            ),
            ConvexDomain::Ellipse(e) => Extended::Finite(ellipse_farthest(e, p)),
            ConvexDomain::Unbounded(_) => Extended::PosInfinity,
        }
    }

    /// `sup {t >= 0 : p + t·u ∈ Ω}` for a point `p` of the domain.
    pub fn exit_distance(&self, p: Point2, u: Direction2) -> Extended {
        match self {
            ConvexDomain::Polygon(poly) => halfplane_exit(&poly.halfplanes, p, u),
            ConvexDomain::Unbounded(un) => halfplane_exit(&un.halfplanes, p, u),
            ConvexDomain::Ellipse(e) => {
                let q = p - e.center;
                let mu = e.form * u;
                let a = u.dot(&mu);
                let b = q.dot(&mu);
                let c = q.dot(&(e.form * q)) - 1.0;
                let disc = b * b - a * c;
                if disc <= 0.0 {
                    return Extended::Finite(0.0);
                }
                // stable larger root of a t² + 2 b t + c = 0
                let t = if b <= 0.0 {
                    (-b + disc.sqrt()) / a
                } else {
                    -c / (b + disc.sqrt())
                };
                Extended::Finite(t.max(0.0))
            }
        }
    }

    /// Axis-aligned bounding box `(xmin, xmax, ymin, ymax)` of a bounded domain.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        let s = |d: Point2| self.support(d).finite();
        Some((
            -s(Point2::new(-1.0, 0.0))?,
            s(Point2::new(1.0, 0.0))?,
            -s(Point2::new(0.0, -1.0))?,
            s(Point2::new(0.0, 1.0))?,
        ))
    }

    /// Boundary point at parameter `t ∈ [0, 1)`: arc-length fraction for a
    /// polygon, angle fraction for an ellipse. `None` for unbounded domains.
    pub fn boundary_point(&self, t: f64) -> Option<Point2> {
        match self {
            ConvexDomain::Polygon(poly) => {
                let n = poly.vertices.len();
                let lens: Vec<f64> = (0..n)
                    .map(|i| (poly.vertices[(i + 1) % n] - poly.vertices[i]).norm())
                    .collect();
                let mut target = t.rem_euclid(1.0) * lens.iter().sum::<f64>();
                for i in 0..n {
                    if target <= lens[i] || i == n - 1 {
                        let a = poly.vertices[i];
                        let b = poly.vertices[(i + 1) % n];
                        return Some(a + (b - a) * (target / lens[i]).min(1.0));
                    }
                    target -= lens[i];
                }
                None
            }
            ConvexDomain::Ellipse(e) => Some(e.boundary_at(std::f64::consts::TAU * t)),
            ConvexDomain::Unbounded(_) => None,
        }
    }
}

fn max_dot(vertices: &[Point2], d: Point2) -> f64 {
    vertices
        .iter()
        .map(|v| d.dot(v))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn ellipse_farthest(e: &Ellipse, p: Point2) -> f64 {
    const SAMPLES: usize = 512;
    let dist = |s: f64| (e.boundary_at(s) - p).norm();
    let step = std::f64::consts::TAU / SAMPLES as f64;
    let best = (0..SAMPLES)
        .map(|i| i as f64 * step)
        .max_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .unwrap_or(0.0);
    // golden-section refinement on the bracketing pair of cells
    let (mut lo, mut hi) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (dist(x1), dist(x2));
    while hi - lo > 1e-12 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = dist(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = dist(x2);
        }
    }
    f1.max(f2).max(dist(best))
}

/// Convex hull by the monotone chain, counter-clockwise, without collinear
/// points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.iter().copied().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 1] - hull[hull.len() - 2], p - hull[hull.len() - 2]) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}
