//! Level curves of scalar fields and the shape analytics applied to them:
//! area and centroid, normalization up to homothety, Hausdorff distance,
//! polar duals and Mahler products, algebraic conic fits, hyperbola
//! deviation, and location of the maximum.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::ScalarField;
use crate::geometry::{convex_hull, cross, Mat2, Point2};

#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<Point2>,
    pub closed: bool,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConicClass {
    Ellipse,
    Hyperbola,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MahlerMode {
    Centroid,
    Santalo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicFit {
    /// `[A, B, C, D, E, F]` of `Ax² + Bxy + Cy² + Dx + Ey + F = 0`, unit norm.
    pub coefficients: [f64; 6],
    pub class: ConicClass,
    pub residual: f64,
}

/// Shape metrics of the main contour of a level. Area, centroid and Mahler
/// are only defined for closed curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourMetrics {
    pub area: Option<f64>,
    pub centroid: Option<[f64; 2]>,
    pub mahler: Option<f64>,
    pub conic_class: Option<ConicClass>,
    pub conic_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourRecord {
    pub closed: bool,
    pub points: Vec<[f64; 2]>,
}

/// One entry of a levels file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub schema: u32,
    pub level: f64,
    pub contours: Vec<ContourRecord>,
    pub metrics: Option<ContourMetrics>,
}

impl Contour {
    pub fn new(points: Vec<Point2>, closed: bool, level: f64) -> Self {
        Contour { points, closed, level }
    }

    /// Segments of the polyline, including the closing one.
    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.points.len();
        let count = if self.closed && n > 1 { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Contour {
        Contour {
            points: self.points.iter().map(|&p| f(p)).collect(),
            closed: self.closed,
            level: self.level,
        }
    }

    /// Whether any two non-adjacent segments intersect.
    pub fn self_intersects(&self) -> bool {
        let segs: Vec<_> = self.segments().collect();
        let n = segs.len();
        for i in 0..n {
            for j in i + 2..n {
                if self.closed && i == 0 && j == n - 1 {
                    continue;
                }
                if segments_cross(segs[i], segs[j]) {
                    return true;
                }
            }
        }
        false
    }
}

fn segments_cross((a, b): (Point2, Point2), (c, d): (Point2, Point2)) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    /// Between nodes `(i, j)` and `(i + 1, j)`.
    H(usize, usize),
    /// Between nodes `(i, j)` and `(i, j + 1)`.
    V(usize, usize),
}

/// Level-`t` curves of `field` by marching squares with linear
/// interpolation. Cells touching a NaN node are skipped, so curves end
/// there as open chains. Saddle cells are resolved by the cell average.
pub fn marching_squares(field: &ScalarField, t: f64) -> Vec<Contour> {
    let (nx, ny) = (field.nx, field.ny);
    let node = |i: usize, j: usize| Point2::new(field.x(i), field.y(j));
    let crossing = |key: EdgeKey| -> Point2 {
        let ((i0, j0), (i1, j1)) = match key {
            EdgeKey::H(i, j) => ((i, j), (i + 1, j)),
            EdgeKey::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (va, vb) = (field.at(i0, j0), field.at(i1, j1));
        let s = ((t - va) / (vb - va)).clamp(0.0, 1.0);
        node(i0, j0) + (node(i1, j1) - node(i0, j0)) * s
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            let v = [field.at(i, j), field.at(i + 1, j), field.at(i + 1, j + 1), field.at(i, j + 1)];
            if v.iter().any(|x| x.is_nan()) {
                continue;
            }
            let above = v.map(|x| x >= t);
            let bottom = EdgeKey::H(i, j);
            let right = EdgeKey::V(i + 1, j);
            let top = EdgeKey::H(i, j + 1);
            let left = EdgeKey::V(i, j);
            // edge k joins corners k and k+1
            let edges = [bottom, right, top, left];
            let crossed: Vec<EdgeKey> = (0..4)
                .filter(|&k| above[k] != above[(k + 1) % 4])
                .map(|k| edges[k])
                .collect();
            match crossed.len() {
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    let centre_above = v.iter().sum::<f64>() / 4.0 >= t;
                    // corners 0 and 2 share a state; isolate the pair whose
                    // state differs from the centre
                    let isolate_odd = centre_above == above[0];
                    if isolate_odd {
                        segments.push((bottom, right));
                        segments.push((top, left));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => {}
            }
        }
    }

    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        incident.entry(*a).or_default().push(s);
        incident.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut contours = Vec::new();

    let trace = |start_seg: usize, start_key: EdgeKey, used: &mut Vec<bool>| -> Contour {
        let mut keys = vec![start_key];
        let mut seg = start_seg;
        let mut at = start_key;
        let mut closed = false;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            if next == start_key {
                closed = true;
                break;
            }
            keys.push(next);
            at = next;
            match incident[&next].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        let mut points: Vec<Point2> = Vec::with_capacity(keys.len());
        for k in keys {
            let p = crossing(k);
            if points.last() != Some(&p) {
                points.push(p);
            }
        }
        if closed && points.len() > 1 && points.first() == points.last() {
            points.pop();
        }
        Contour { points, closed, level: t }
    };

    // open chains start at edges with a single incident segment; sort the
    // keys so the output does not depend on hash order
    let mut ends: Vec<EdgeKey> = incident
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    ends.sort_by_key(edge_order);
    for key in ends {
        let s = incident[&key][0];
        if !used[s] {
            contours.push(trace(s, key, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let key = segments[s].0;
            contours.push(trace(s, key, &mut used));
        }
    }
    contours.retain(|c| c.points.len() >= if c.closed { 3 } else { 2 });
    contours
}

fn edge_order(k: &EdgeKey) -> (usize, usize, u8) {
    match *k {
        EdgeKey::H(i, j) => (j, i, 0),
        EdgeKey::V(i, j) => (j, i, 1),
    }
}

fn signed_area_centroid(points: &[Point2]) -> (f64, Point2) {
    let n = points.len();
    // shift to the first vertex for conditioning
    let o = points[0];
    let mut a2 = 0.0;
    let mut c = Point2::zeros();
    for i in 0..n {
        let p = points[i] - o;
        let q = points[(i + 1) % n] - o;
        let w = cross(p, q);
        a2 += w;
        c += (p + q) * w;
    }
    if a2 == 0.0 {
        return (0.0, o);
    }
    (a2 / 2.0, o + c / (3.0 * a2))
}

/// Enclosed area and centroid of a closed contour.
pub fn contour_area_centroid(c: &Contour) -> Result<(f64, Point2)> {
    if !c.closed {
        return Err(Error::OpenContour);
    }
    if c.points.len() < 3 {
        return Err(Error::DegenerateFit("contour has fewer than 3 points".into()));
    }
    let (a, g) = signed_area_centroid(&c.points);
    Ok((a.abs(), g))
}

/// Representative of the class of `c` up to translation and homothety:
/// centroid at the origin and unit area for closed curves; chord midpoint at
/// the origin and unit chord for open ones.
pub fn normalize_class(c: &Contour) -> Result<Contour> {
    let (centre, scale) = if c.closed {
        let (a, g) = contour_area_centroid(c)?;
        if !(a > 0.0) {
            return Err(Error::DegenerateFit("zero-area contour".into()));
        }
        (g, a.sqrt())
    } else {
        let (first, last) = match (c.points.first(), c.points.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::EmptyInput),
        };
        let chord = (last - first).norm();
        if !(chord > 0.0) {
            return Err(Error::DegenerateFit("zero-length chord".into()));
        }
        ((first + last) / 2.0, chord)
    };
    Ok(c.map(|p| (p - centre) / scale))
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * s)).norm()
}

/// Distance from `p` to a polyline (or its single point).
pub fn distance_to_polyline(p: Point2, c: &Contour) -> f64 {
    if c.points.len() == 1 {
        return (p - c.points[0]).norm();
    }
    c.segments()
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

fn piece_bound(p: Point2, q: Point2, b: &Contour) -> f64 {
    if b.points.len() == 1 {
        return (p - b.points[0]).norm().max((q - b.points[0]).norm());
    }
    b.segments()
        .map(|(s0, s1)| point_segment_distance(p, s0, s1).max(point_segment_distance(q, s0, s1)))
        .fold(f64::INFINITY, f64::min)
}

/// Absolute accuracy of [`hausdorff`], relative to the size of the curves.
pub const HAUSDORFF_TOL: f64 = 1e-7;

fn directed_hausdorff(a: &Contour, b: &Contour) -> f64 {
    let mut best = a
        .points
        .iter()
        .map(|&p| distance_to_polyline(p, b))
        .fold(0.0, f64::max);
    // on a piece pq the distance to b is at most (dp + dq + |pq|)/2, being
    // 1-Lipschitz, and at most max(d_S(p), d_S(q)) for any single segment S
    // of b, being convex along pq against S
    let scale = a
        .points
        .iter()
        .chain(&b.points)
        .map(|p| (p - a.points[0]).norm())
        .fold(0.0, f64::max);
    let tol = HAUSDORFF_TOL * scale.max(f64::MIN_POSITIVE);
    let mut stack: Vec<(Point2, Point2, f64, f64)> = a
        .segments()
        .map(|(p, q)| (p, q, distance_to_polyline(p, b), distance_to_polyline(q, b)))
        .collect();
    while let Some((p, q, dp, dq)) = stack.pop() {
        let len = (q - p).norm();
        if (dp + dq + len) / 2.0 <= best + tol || piece_bound(p, q, b) <= best + tol {
            continue;
        }
        let m = (p + q) / 2.0;
        let dm = distance_to_polyline(m, b);
        best = best.max(dm);
        if len > 1e-14 {
            stack.push((p, m, dp, dm));
            stack.push((m, q, dm, dq));
        }
    }
    best
}

/// Symmetric Hausdorff distance between two polylines.
pub fn hausdorff(a: &Contour, b: &Contour) -> f64 {
    if a.points.is_empty() || b.points.is_empty() {
        return f64::INFINITY;
    }
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn ccw_points(c: &Contour) -> Vec<Point2> {
    let mut pts = c.points.clone();
    if signed_area_centroid(&pts).0 < 0.0 {
        pts.reverse();
    }
    pts
}

/// Whether a closed contour turns consistently in one direction, allowing a
/// relative tolerance on each turn.
pub fn is_convex(c: &Contour, tol: f64) -> bool {
    if !c.closed || c.points.len() < 3 {
        return false;
    }
    let pts = ccw_points(c);
    let n = pts.len();
    (0..n).all(|i| {
        let e1 = pts[(i + 1) % n] - pts[i];
        let e2 = pts[(i + 2) % n] - pts[(i + 1) % n];
        cross(e1, e2) >= -tol * e1.norm() * e2.norm()
    })
}

const CONVEX_TOL: f64 = 1e-9;

/// Polar dual about `center`: the edge `n·(p − center) = d` (outward unit
/// normal `n`, `d > 0`) becomes the vertex `center + n/d`.
pub fn polar_dual(poly: &Contour, center: Point2) -> Result<Contour> {
    if !poly.closed {
        return Err(Error::OpenContour);
    }
    if !is_convex(poly, CONVEX_TOL) {
        return Err(Error::NonConvex);
    }
    let pts = ccw_points(poly);
    let n = pts.len();
    let mut dual = Vec::with_capacity(n);
    for i in 0..n {
        let e = pts[(i + 1) % n] - pts[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let normal = Point2::new(e.y, -e.x) / len;
        let d = normal.dot(&(pts[i] - center));
        if !(d > 0.0) {
            return Err(Error::CenterOutside);
        }
        dual.push(center + normal / d);
    }
    Ok(Contour {
        points: dual,
        closed: true,
        level: poly.level,
    })
}

fn dual_area(pts: &[Point2], center: Point2) -> f64 {
    // area of the dual about `center`, straight from the edge data
    let n = pts.len();
    let mut verts = Vec::with_capacity(n);
    for i in 0..n {
        let e = pts[(i + 1) % n] - pts[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let normal = Point2::new(e.y, -e.x) / len;
        let d = normal.dot(&(pts[i] - center));
        if !(d > 0.0) {
            return f64::INFINITY;
        }
        verts.push(normal / d);
    }
    signed_area_centroid(&verts).0.abs()
}

/// Minimizes a function of two variables by Nelder–Mead from `start`.
fn nelder_mead(f: impl Fn(Point2) -> f64, start: Point2, step: f64, tol: f64) -> Point2 {
    let mut simplex = [start, start + Point2::new(step, 0.0), start + Point2::new(0.0, step)];
    let mut vals = simplex.map(&f);
    for _ in 0..2000 {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        let size = (simplex[1] - simplex[0]).norm().max((simplex[2] - simplex[0]).norm());
        if size < tol {
            break;
        }
        let centroid = (simplex[0] + simplex[1]) / 2.0;
        let reflect = centroid + (centroid - simplex[2]);
        let fr = f(reflect);
        if fr < vals[0] {
            let expand = centroid + (centroid - simplex[2]) * 2.0;
            let fe = f(expand);
            if fe < fr {
                simplex[2] = expand;
                vals[2] = fe;
            } else {
                simplex[2] = reflect;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            simplex[2] = reflect;
            vals[2] = fr;
        } else {
            let contract = centroid + (simplex[2] - centroid) * 0.5;
            let fc = f(contract);
            if fc < vals[2] {
                simplex[2] = contract;
                vals[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = simplex[0] + (simplex[k] - simplex[0]) * 0.5;
                    vals[k] = f(simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    simplex[best]
}

/// `area(K)·area(K°)` with the dual about the centroid or the Santaló point.
pub fn mahler(poly: &Contour, mode: MahlerMode) -> Result<f64> {
    if !poly.closed {
        return Err(Error::OpenContour);
    }
    if !is_convex(poly, CONVEX_TOL) {
        return Err(Error::NonConvex);
    }
    let (area, centroid) = contour_area_centroid(poly)?;
    let pts = ccw_points(poly);
    let centre = match mode {
        MahlerMode::Centroid => centroid,
        MahlerMode::Santalo => {
            let scale = area.sqrt();
            let best = nelder_mead(|c| dual_area(&pts, c), centroid, 0.05 * scale, 1e-10 * scale);
            if dual_area(&pts, best) < dual_area(&pts, centroid) {
                best
            } else {
                centroid
            }
        }
    };
    let dual = dual_area(&pts, centre);
    if !dual.is_finite() {
        return Err(Error::CenterOutside);
    }
    Ok(area * dual)
}

/// Algebraic least-squares conic through `points` under a unit-norm
/// constraint on the coefficients, computed in normalized coordinates.
pub fn fit_conic(points: &[Point2]) -> Result<ConicFit> {
    if points.len() < 6 {
        return Err(Error::DegenerateFit(format!("{} points, need 6", points.len())));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Point2>() / n;
    let spread = (points.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / n).sqrt();
    if !(spread > 0.0) {
        return Err(Error::DegenerateFit("coincident points".into()));
    }
    let cov = points.iter().fold(Mat2::zeros(), |acc, p| {
        let q = (p - mean) / spread;
        acc + q * q.transpose()
    }) / n;
    if cov.symmetric_eigenvalues().min() < 1e-12 {
        return Err(Error::DegenerateFit("points are collinear".into()));
    }
    let row = |p: &Point2| {
        let q = (p - mean) / spread;
        Vector6::new(q.x * q.x, q.x * q.y, q.y * q.y, q.x, q.y, 1.0)
    };
    let dtd = points.iter().fold(Matrix6::zeros(), |acc, p| {
        let r = row(p);
        acc + r * r.transpose()
    });
    let eig = dtd.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let c: Vector6<f64> = eig.eigenvectors.column(k).into();

    // back to the original coordinates
    let (a, b, cc, d, e, f) = (c[0], c[1], c[2], c[3], c[4], c[5]);
    let (mx, my, s) = (mean.x, mean.y, spread);
    let coef = [
        a,
        b,
        cc,
        -2.0 * a * mx - b * my + s * d,
        -b * mx - 2.0 * cc * my + s * e,
        a * mx * mx + b * mx * my + cc * my * my - s * d * mx - s * e * my + s * s * f,
    ];
    let norm = coef.iter().map(|x| x * x).sum::<f64>().sqrt();
    let coef = coef.map(|x| x / norm);
    let residual = (points
        .iter()
        .map(|p| {
            let v = coef[0] * p.x * p.x
                + coef[1] * p.x * p.y
                + coef[2] * p.y * p.y
                + coef[3] * p.x
                + coef[4] * p.y
                + coef[5];
            v * v
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let disc = coef[1] * coef[1] - 4.0 * coef[0] * coef[2];
    let quad = coef[0] * coef[0] + coef[1] * coef[1] + coef[2] * coef[2];
    let class = if disc < -1e-9 * quad {
        ConicClass::Ellipse
    } else if disc > 1e-9 * quad {
        ConicClass::Hyperbola
    } else {
        ConicClass::Degenerate
    };
    Ok(ConicFit {
        coefficients: coef,
        class,
        residual,
    })
}

/// Affine frame `q = M·(p − origin)` in which a pair of asymptotes become
/// the coordinate axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoteFrame {
    pub matrix: Mat2,
    pub origin: Point2,
}

impl AsymptoteFrame {
    /// Frame sending direction `u` to the first axis and `v` to the second,
    /// with `apex` (the asymptotes' intersection) to the origin.
    pub fn from_asymptotes(apex: Point2, u: Point2, v: Point2) -> Result<Self> {
        let m = Mat2::from_columns(&[u, v]);
        let inv = m.try_inverse().ok_or(Error::FrameSingular)?;
        if !inv.iter().all(|x| x.is_finite()) || m.determinant().abs() < 1e-12 * u.norm() * v.norm() {
            return Err(Error::FrameSingular);
        }
        Ok(AsymptoteFrame { matrix: inv, origin: apex })
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        self.matrix * (p - self.origin)
    }
}

/// Coefficient of variation (population, over vertices) of `x·y` after
/// mapping the contour into the frame; zero for a hyperbola branch with the
/// frame's asymptotes.
pub fn hyperbola_deviation(c: &Contour, frame: &AsymptoteFrame) -> Result<f64> {
    let det = frame.matrix.determinant();
    if !(det.abs() > 1e-12) || !det.is_finite() {
        return Err(Error::FrameSingular);
    }
    if c.points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let prods: Vec<f64> = c
        .points
        .iter()
        .map(|&p| {
            let q = frame.apply(p);
            q.x * q.y
        })
        .collect();
    let n = prods.len() as f64;
    let mean = prods.iter().sum::<f64>() / n;
    let var = prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean.abs())
}

/// Grid maximum refined by a quadratic fit on its 3×3 neighbourhood.
pub fn max_locus(field: &ScalarField) -> Result<(Point2, f64)> {
    let (nx, ny) = (field.nx, field.ny);
    let mut best: Option<(usize, usize, f64)> = None;
    for j in 0..ny {
        for i in 0..nx {
            let v = field.at(i, j);
            if v.is_finite() && best.is_none_or(|b| v > b.2) {
                best = Some((i, j, v));
            }
        }
    }
    let (bi, bj, bv) = best.ok_or(Error::EmptyField)?;
    let grid_point = Point2::new(field.x(bi), field.y(bj));
    if bi == 0 || bj == 0 || bi + 1 >= nx || bj + 1 >= ny {
        return Ok((grid_point, bv));
    }
    let (hx, hy) = field.cell_size();
    let mut a = DMatrix::zeros(9, 6);
    let mut rhs = DMatrix::zeros(9, 1);
    let mut r = 0;
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            let v = field.at((bi as i64 + di) as usize, (bj as i64 + dj) as usize);
            if !v.is_finite() {
                return Ok((grid_point, bv));
            }
            let (x, y) = (di as f64, dj as f64);
            for (c, val) in [1.0, x, y, x * x, x * y, y * y].into_iter().enumerate() {
                a[(r, c)] = val;
            }
            rhs[(r, 0)] = v;
            r += 1;
        }
    }
    let Ok(sol) = a.clone().svd(true, true).solve(&rhs, 1e-14) else {
        return Ok((grid_point, bv));
    };
    let (c0, cx, cy, cxx, cxy, cyy) = (sol[0], sol[1], sol[2], sol[3], sol[4], sol[5]);
    let hess = Mat2::new(2.0 * cxx, cxy, cxy, 2.0 * cyy);
    let neg_def = hess[(0, 0)] < 0.0 && hess.determinant() > 0.0;
    if !neg_def {
        return Ok((grid_point, bv));
    }
    let Some(inv) = hess.try_inverse() else {
        return Ok((grid_point, bv));
    };
    let s = -(inv * Point2::new(cx, cy));
    if s.x.abs() > 1.0 || s.y.abs() > 1.0 {
        return Ok((grid_point, bv));
    }
    let value = c0 + cx * s.x + cy * s.y + cxx * s.x * s.x + cxy * s.x * s.y + cyy * s.y * s.y;
    Ok((grid_point + Point2::new(s.x * hx, s.y * hy), value))
}

/// Metrics of a level curve. Mahler is taken on the convex hull so that
/// discretization wiggles do not trip the convexity check; open curves get
/// the conic fit only.
pub fn contour_metrics(c: &Contour) -> Result<ContourMetrics> {
    let fit = fit_conic(&c.points).ok();
    let mut m = ContourMetrics {
        area: None,
        centroid: None,
        mahler: None,
        conic_class: fit.map(|f| f.class),
        conic_residual: fit.map(|f| f.residual),
    };
    if c.closed {
        let (area, centroid) = contour_area_centroid(c)?;
        let hull = Contour::new(convex_hull(&c.points), true, c.level);
        m.area = Some(area);
        m.centroid = Some([centroid.x, centroid.y]);
        m.mahler = mahler(&hull, MahlerMode::Centroid).ok();
    }
    Ok(m)
}

/// The contour a level is summarized by: the closed one of largest area,
/// else the longest.
pub fn main_contour(contours: &[Contour]) -> Option<&Contour> {
    let closed = contours
        .iter()
        .filter(|c| c.closed)
        .filter_map(|c| contour_area_centroid(c).ok().map(|(a, _)| (a, c)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c);
    closed.or_else(|| contours.iter().max_by(|a, b| a.length().total_cmp(&b.length())))
}

/// Contours and main-contour metrics for each level, in the given order.
pub fn analyze_levels(field: &ScalarField, levels: &[f64]) -> Vec<LevelReport> {
    use rayon::prelude::*;
    levels
        .par_iter()
        .map(|&t| {
            let contours = marching_squares(field, t);
            let metrics = main_contour(&contours).and_then(|c| contour_metrics(c).ok());
            LevelReport {
                schema: 1,
                level: t,
                contours: contours
                    .iter()
                    .map(|c| ContourRecord {
                        closed: c.closed,
                        points: c.points.iter().map(|p| [p.x, p.y]).collect(),
                    })
                    .collect(),
                metrics,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn closed(points: Vec<Point2>) -> Contour {
        Contour::new(points, true, 0.0)
    }

    fn ngon(n: usize, r: f64) -> Contour {
        closed(
            (0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    p(r * a.cos(), r * a.sin())
                })
                .collect(),
        )
    }

    #[test]
    fn marching_squares_circle() {
        let f = ScalarField::from_fn((-2.0, 2.0, -2.0, 2.0), 401, 401, |x, y| x * x + y * y).unwrap();
        let cs = marching_squares(&f, 1.0);
        assert_eq!(cs.len(), 1);
        assert!(cs[0].closed);
        let (a, g) = contour_area_centroid(&cs[0]).unwrap();
        assert!((a - PI).abs() < 0.01, "{a}");
        assert!(g.norm() < 1e-9);
        assert!(!cs[0].self_intersects());
    }

    #[test]
    fn marching_squares_linear_and_empty() {
        let f = ScalarField::from_fn((0.0, 1.0, 0.0, 1.0), 21, 21, |x, _| x).unwrap();
        let cs = marching_squares(&f, 0.5);
        assert_eq!(cs.len(), 1);
        assert!(!cs[0].closed);
        assert!(cs[0].points.iter().all(|q| (q.x - 0.5).abs() < 1e-12));
        assert!((cs[0].length() - 1.0).abs() < 1e-12);
        assert!(marching_squares(&f, 2.0).is_empty());
    }

    #[test]
    fn marching_squares_stops_at_nan() {
        let f = ScalarField::from_fn((-2.0, 2.0, -2.0, 2.0), 81, 81, |x, y| {
            if x > 0.5 {
                f64::NAN
            } else {
                x * x + y * y
            }
        })
        .unwrap();
        let cs = marching_squares(&f, 1.0);
        assert_eq!(cs.len(), 1);
        assert!(!cs[0].closed);
    }

    #[test]
    fn saddle_uses_cell_average() {
        // corners 1,0,1,0 around the cell: average 0.5
        let mut f = ScalarField::from_fn((0.0, 1.0, 0.0, 1.0), 2, 2, |_, _| 0.0).unwrap();
        f.values = vec![1.0, 0.0, 0.0, 1.0];
        // values: (0,0)=1, (1,0)=0, (0,1)=0, (1,1)=1 → saddle
        let hi = marching_squares(&f, 0.4);
        let lo = marching_squares(&f, 0.6);
        assert_eq!(hi.len(), 2);
        assert_eq!(lo.len(), 2);
        // above the average the high corners are isolated
        let near = |cs: &[Contour], q: Point2| cs.iter().any(|c| c.points.iter().all(|r| (r - q).norm() < 0.71));
        assert!(near(&lo, p(0.0, 0.0)) && near(&lo, p(1.0, 1.0)));
        assert!(near(&hi, p(1.0, 0.0)) && near(&hi, p(0.0, 1.0)));
    }

    #[test]
    fn area_convergence_is_second_order() {
        let err = |n: usize| {
            let f = ScalarField::from_fn((-2.0, 2.0, -2.0, 2.0), n, n, |x, y| x * x + y * y).unwrap();
            (contour_area_centroid(&marching_squares(&f, 1.0)[0]).unwrap().0 - PI).abs()
        };
        let (e1, e2) = (err(101), err(401));
        let order = (e1 / e2).ln() / 4f64.ln();
        assert!(order > 1.7, "order {order} ({e1}, {e2})");
    }

    #[test]
    fn area_centroid_examples() {
        let sq = closed(vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]);
        let (a, g) = contour_area_centroid(&sq).unwrap();
        assert_eq!(a, 1.0);
        assert!((g - p(0.5, 0.5)).norm() < 1e-15);
        let tri = closed(vec![p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)]);
        let (a, g) = contour_area_centroid(&tri).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (g - p(1.0 / 3.0, 1.0 / 3.0)).norm() < 1e-15);
        let mut rev = tri.clone();
        rev.points.reverse();
        assert_eq!(contour_area_centroid(&rev).unwrap().0, 0.5);
        let open = Contour::new(tri.points, false, 0.0);
        assert_eq!(contour_area_centroid(&open), Err(Error::OpenContour));
    }

    #[test]
    fn normalization_is_a_class_invariant() {
        let c = ngon(64, 3.0).map(|q| q + p(1.0, -2.0));
        let n1 = normalize_class(&c).unwrap();
        let (a, g) = contour_area_centroid(&n1).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && g.norm() < 1e-12);
        let n2 = normalize_class(&n1).unwrap();
        assert!(n1.points.iter().zip(&n2.points).all(|(a, b)| (a - b).norm() < 1e-12));
        let moved = normalize_class(&c.map(|q| q * 2.5 + p(7.0, 3.0))).unwrap();
        assert!(n1.points.iter().zip(&moved.points).all(|(a, b)| (a - b).norm() < 1e-12));
        let open = Contour::new(vec![p(0.0, 0.0), p(1.0, 1.0), p(2.0, 0.0)], false, 0.0);
        let n = normalize_class(&open).unwrap();
        assert!((n.points[0] - p(-0.5, 0.0)).norm() < 1e-15 && (n.points[2] - p(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn hausdorff_examples() {
        let c = normalize_class(&ngon(200, 1.0)).unwrap();
        assert!(hausdorff(&c, &c) < 1e-12);
        let rot = c.map(|q| nalgebra::Rotation2::new(0.3) * q);
        let r = (1.0 / PI).sqrt();
        let sagitta = r * (1.0 - (PI / 200.0).cos());
        assert!(hausdorff(&c, &rot) <= sagitta + 1e-12);

        let sq = normalize_class(&closed(vec![p(-1.0, -1.0), p(1.0, -1.0), p(1.0, 1.0), p(-1.0, 1.0)])).unwrap();
        let circle = normalize_class(&ngon(720, 1.0)).unwrap();
        let h = hausdorff(&circle, &sq);
        // dense sampling oracle
        let sample = |c: &Contour, k: usize| -> Vec<Point2> {
            let segs: Vec<_> = c.segments().collect();
            segs.iter()
                .flat_map(|(a, b)| (0..k).map(move |i| a + (b - a) * (i as f64 / k as f64)))
                .collect()
        };
        let (sa, sb) = (sample(&circle, 4), sample(&sq, 2000));
        let directed = |x: &[Point2], y: &[Point2]| {
            x.iter()
                .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        let oracle = directed(&sa, &sb).max(directed(&sb, &sa));
        assert!((h - oracle).abs() < 1e-3, "{h} vs {oracle}");
        // the corner of the unit-area square is farthest: (√2 − 2/√π)/2
        assert!((h - (2f64.sqrt() - 2.0 / PI.sqrt()) / 2.0).abs() < 1e-4);
    }

    #[test]
    fn polar_dual_examples() {
        let sq = closed(vec![p(-1.0, -1.0), p(1.0, -1.0), p(1.0, 1.0), p(-1.0, 1.0)]);
        let d = polar_dual(&sq, Point2::zeros()).unwrap();
        let mut want = vec![p(0.0, -1.0), p(1.0, 0.0), p(0.0, 1.0), p(-1.0, 0.0)];
        for q in &d.points {
            let k = want.iter().position(|w| (w - q).norm() < 1e-15).unwrap();
            want.remove(k);
        }
        let big = polar_dual(&sq.map(|q| q * 3.0), Point2::zeros()).unwrap();
        assert!(d.points.iter().zip(&big.points).all(|(a, b)| (a / 3.0 - b).norm() < 1e-15));
        assert_eq!(polar_dual(&sq, p(2.0, 0.0)), Err(Error::CenterOutside));

        let tri = closed(vec![p(1.0, 0.0), p(0.0, 1.0), p(-1.0, -1.0)]);
        let dual = polar_dual(&tri, Point2::zeros()).unwrap();
        let product = contour_area_centroid(&tri).unwrap().0 * contour_area_centroid(&dual).unwrap().0;
        // oracle: dual as {u : u·v <= 1 for all vertices v}, area by grid counting
        let (mut inside, k) = (0usize, 1200);
        let lim = 4.0;
        for i in 0..k {
            for j in 0..k {
                let u = p(-lim + 2.0 * lim * (i as f64 + 0.5) / k as f64, -lim + 2.0 * lim * (j as f64 + 0.5) / k as f64);
                if tri.points.iter().all(|v| u.dot(v) <= 1.0) {
                    inside += 1;
                }
            }
        }
        let area = inside as f64 * (2.0 * lim / k as f64).powi(2);
        let oracle = area * contour_area_centroid(&tri).unwrap().0;
        assert!((product - oracle).abs() < 0.05, "{product} vs {oracle}");
        assert!((product - 6.75).abs() < 1e-12);
    }

    #[test]
    fn dual_is_an_involution() {
        for n in [3, 5, 8, 13] {
            let k = ngon(n, 1.0).map(|q| p(2.0 * q.x + 0.3 * q.y, q.y - 0.1));
            let c = contour_area_centroid(&k).unwrap().1;
            let back = polar_dual(&polar_dual(&k, c).unwrap(), c).unwrap();
            for q in &k.points {
                assert!(back.points.iter().any(|r| (r - q).norm() < 1e-8));
            }
        }
    }

    #[test]
    fn mahler_examples() {
        let sq = closed(vec![p(-1.0, -1.0), p(1.0, -1.0), p(1.0, 1.0), p(-1.0, 1.0)]);
        assert!((mahler(&sq, MahlerMode::Centroid).unwrap() - 8.0).abs() < 1e-12);
        let disk = ngon(256, 1.0);
        assert!((mahler(&disk, MahlerMode::Centroid).unwrap() - PI * PI).abs() < 0.01);
        let tri = closed(vec![p(1.0, 0.0), p(0.0, 1.0), p(-1.0, -1.0)]);
        assert!((mahler(&tri, MahlerMode::Centroid).unwrap() - 6.75).abs() < 1e-9);
        assert!((mahler(&tri, MahlerMode::Santalo).unwrap() - 6.75).abs() < 1e-6);
        let notch = closed(vec![p(0.0, 0.0), p(2.0, 0.0), p(1.0, 0.3), p(2.0, 2.0), p(0.0, 2.0)]);
        assert_eq!(mahler(&notch, MahlerMode::Centroid), Err(Error::NonConvex));
    }

    #[test]
    fn santalo_never_exceeds_centroid() {
        let k = closed(vec![p(0.0, 0.0), p(3.0, 0.0), p(3.2, 0.5), p(0.5, 2.0)]);
        let c = mahler(&k, MahlerMode::Centroid).unwrap();
        let s = mahler(&k, MahlerMode::Santalo).unwrap();
        assert!(s <= c + 1e-12 && s > 0.0);
    }

    #[test]
    fn mahler_is_affine_invariant_and_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pts: Vec<Point2> = (0..12).map(|_| p(rng.random::<f64>(), rng.random::<f64>())).collect();
            let k = closed(convex_hull(&pts));
            if k.points.len() < 3 {
                continue;
            }
            let m = mahler(&k, MahlerMode::Centroid).unwrap();
            assert!(m <= PI * PI + 0.01);
            let mut a = Mat2::from_fn(|_, _| rng.random_range(-2.0..2.0));
            if a.determinant().abs() < 0.2 {
                continue;
            }
            a /= a.determinant().abs().sqrt();
            let moved = k.map(|q| a * q + p(0.4, -0.2));
            let m2 = mahler(&moved, MahlerMode::Centroid).unwrap();
            assert!((m - m2).abs() < 1e-6);
        }
        for (a, b) in [(1.0, 1.0), (3.0, 0.5), (0.2, 2.0)] {
            let e = ngon(512, 1.0).map(|q| p(a * q.x, b * q.y));
            assert!((mahler(&e, MahlerMode::Centroid).unwrap() - PI * PI).abs() < 0.01);
        }
    }

    #[test]
    fn conic_fit_examples() {
        let ell: Vec<Point2> = (0..50).map(|k| {
            let t = k as f64 * 0.13;
            p(2.0 * t.cos(), t.sin())
        }).collect();
        let f = fit_conic(&ell).unwrap();
        assert_eq!(f.class, ConicClass::Ellipse);
        assert!(f.residual < 1e-9);

        let hyp: Vec<Point2> = (0..40).map(|k| {
            let x = 0.2 + 4.8 * k as f64 / 39.0;
            p(x, 1.0 / x)
        }).collect();
        let f = fit_conic(&hyp).unwrap();
        assert_eq!(f.class, ConicClass::Hyperbola);
        assert!(f.residual < 1e-9);

        // six irregular points on a tilted, shifted ellipse
        let six: Vec<Point2> = [0.1, 0.9, 1.7, 2.2, 3.9, 5.3]
            .iter()
            .map(|&t: &f64| {
                let q = nalgebra::Rotation2::new(0.7) * p(1.5 * t.cos(), 0.4 * t.sin());
                q + p(0.3, -1.1)
            })
            .collect();
        let r = fit_conic(&six).unwrap().residual;
        assert!(r < 1e-10, "{r}");

        let line: Vec<Point2> = (0..10).map(|k| p(k as f64, 2.0 * k as f64)).collect();
        assert!(matches!(fit_conic(&line), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_conic(&six[..5]), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn hyperbola_deviation_examples() {
        let id = AsymptoteFrame { matrix: Mat2::identity(), origin: Point2::zeros() };
        let branch: Vec<Point2> = (0..100).map(|k| {
            let x = 0.3 + 0.1 * k as f64;
            p(x, 4.0 / x)
        }).collect();
        let c = Contour::new(branch.clone(), false, 0.0);
        assert!(hyperbola_deviation(&c, &id).unwrap() < 1e-12);

        // radial noise up to 1%: x·y scales by (1 + ε)²
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let eps: Vec<f64> = (0..100).map(|_| 0.01 * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let noisy = Contour::new(branch.iter().zip(&eps).map(|(q, e)| q * (1.0 + e)).collect(), false, 0.0);
        let prods: Vec<f64> = eps.iter().map(|e| 4.0 * (1.0 + e).powi(2)).collect();
        let mean = prods.iter().sum::<f64>() / 100.0;
        let oracle = (prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt() / mean;
        let got = hyperbola_deviation(&noisy, &id).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.01).abs() < 0.005);

        // straight chord x + y = 2: CV of x(2 − x) computed directly
        let seg: Vec<Point2> = (0..=100).map(|k| {
            let x = 0.5 + k as f64 / 100.0;
            p(x, 2.0 - x)
        }).collect();
        let prods: Vec<f64> = seg.iter().map(|q| q.x * q.y).collect();
        let mean = prods.iter().sum::<f64>() / prods.len() as f64;
        let sd = (prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / prods.len() as f64).sqrt();
        let got = hyperbola_deviation(&Contour::new(seg, false, 0.0), &id).unwrap();
        assert!((got - sd / mean).abs() < 1e-12);
        assert!(got > 0.05);

        let singular = AsymptoteFrame { matrix: Mat2::new(1.0, 2.0, 2.0, 4.0), origin: Point2::zeros() };
        assert_eq!(hyperbola_deviation(&c, &singular), Err(Error::FrameSingular));
    }

    #[test]
    fn hyperbola_deviation_is_squeeze_invariant() {
        let id = AsymptoteFrame { matrix: Mat2::identity(), origin: Point2::zeros() };
        let pts: Vec<Point2> = (0..60).map(|k| p(0.2 + 0.05 * k as f64, 1.0 + (k as f64 * 0.7).sin())).collect();
        let c = Contour::new(pts, false, 0.0);
        let base = hyperbola_deviation(&c, &id).unwrap();
        for s in [0.25, 0.5, 3.0, 10.0] {
            let sq = AsymptoteFrame { matrix: Mat2::new(s, 0.0, 0.0, 1.0 / s), origin: Point2::zeros() };
            assert!((hyperbola_deviation(&c, &sq).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_from_asymptotes() {
        let f = AsymptoteFrame::from_asymptotes(p(1.0, 1.0), p(1.0, 0.0), p(1.0, 1.0)).unwrap();
        assert!((f.apply(p(2.0, 1.0)) - p(1.0, 0.0)).norm() < 1e-15);
        assert!((f.apply(p(2.0, 2.0)) - p(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(AsymptoteFrame::from_asymptotes(p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)), Err(Error::FrameSingular));
    }

    #[test]
    fn level_reports() {
        let f = ScalarField::from_fn((-2.5, 2.5, -2.0, 2.0), 201, 161, |x, y| 2.0 - (x * x / 4.0 + y * y)).unwrap();
        let reps = analyze_levels(&f, &[1.0, 1.5]);
        assert_eq!(reps.len(), 2);
        let m = reps[0].metrics.unwrap();
        assert!((m.area.unwrap() - 2.0 * PI).abs() < 0.01);
        assert!((m.mahler.unwrap() - PI * PI).abs() < 0.01);
        assert_eq!(m.conic_class, Some(ConicClass::Ellipse));
        assert!(reps[1].contours[0].closed);

        let open = ScalarField::from_fn((0.1, 4.0, 0.1, 4.0), 81, 81, |x, y| (x * y).sqrt()).unwrap();
        let m = analyze_levels(&open, &[1.0])[0].metrics.unwrap();
        assert_eq!(m.area, None);
        assert_eq!(m.conic_class, Some(ConicClass::Hyperbola));
    }

    #[test]
    fn max_locus_examples() {
        let f = ScalarField::from_fn((-1.0, 1.0, -1.0, 1.0), 41, 41, |x, y| 1.0 - (x - 0.013).powi(2) - 2.0 * (y + 0.021).powi(2)).unwrap();
        let (q, v) = max_locus(&f).unwrap();
        assert!((q - p(0.013, -0.021)).norm() < 1e-3 * 0.05);
        assert!((v - 1.0).abs() < 1e-12);
        let empty = ScalarField::from_fn((0.0, 1.0, 0.0, 1.0), 4, 4, |_, _| f64::NAN).unwrap();
        assert_eq!(max_locus(&empty), Err(Error::EmptyField));
    }
}
