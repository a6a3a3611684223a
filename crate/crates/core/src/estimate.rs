//! Averages of `ℱ^h` over the moduli space: Monte Carlo with counter-based
//! streams, deterministic quadrature with a certified cusp bound, and scalar
//! fields on grids with common random numbers.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexDomain, Extended, Mat2, Point2};
use crate::lattice::Lattice;
use crate::moduli::{quadrature_grid, sample, tail_bound};
use crate::tropical::{Evaluator, PointContext};

/// Largest tolerated share of dropped samples.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "mc")]
    MonteCarlo,
    #[serde(rename = "quad")]
    Quadrature,
}

/// How the average of `ℱ^h` is turned into a distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `(∫ ℱ^h dμ)^{1/h}` for the probability measure `μ`.
    #[default]
    Holder,
    /// `(6/π²)·(∫ ℱ^h dν)^{1/h}` for the measure `ν` of total mass `π²/6`.
    Literal,
}

impl Normalization {
    /// Maps a normalized mean `m` of `ℱ^h` to the distance value.
    pub fn apply(self, m: f64, h: f64) -> f64 {
        match self {
            Normalization::Holder => m.powf(1.0 / h),
            Normalization::Literal => {
                let zeta2 = PI * PI / 6.0;
                (zeta2 * m).powf(1.0 / h) / zeta2
            }
        }
    }

    fn derivative(self, m: f64, h: f64) -> f64 {
        if m <= 0.0 {
            return 0.0;
        }
        self.apply(m, h) / (h * m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Standard error for Monte Carlo, truncation bound for quadrature.
    #[serde(rename = "stderr")]
    pub stderr_or_bound: f64,
    pub n: usize,
    pub method: Method,
    pub flagged: usize,
}

/// A deterministic, indexable family of lattices.
pub trait LatticeSource: Sync {
    fn lattice(&self, index: u64) -> Result<Lattice>;
}

/// Exact draws from the invariant measure, stream `seed`.
#[derive(Debug, Clone, Copy)]
pub struct Sampled {
    pub seed: u64,
}

impl LatticeSource for Sampled {
    fn lattice(&self, index: u64) -> Result<Lattice> {
        Ok(sample(self.seed, index).lattice())
    }
}

/// The lattices `M·Λᵢ` of an inner source.
#[derive(Debug, Clone, Copy)]
pub struct Transformed<S> {
    pub inner: S,
    pub matrix: Mat2,
}

impl<S: LatticeSource> LatticeSource for Transformed<S> {
    fn lattice(&self, index: u64) -> Result<Lattice> {
        self.inner.lattice(index)?.transformed(&self.matrix)
    }
}

/// `(Σ wᵢ vᵢ^h)^{1/h}`.
pub fn holder_mean(values: &[f64], weights: &[f64], h: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(Error::InvalidParameter("values and weights differ in length".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("h = {h}")));
    }
    let s: f64 = values.iter().zip(weights).map(|(v, w)| w * v.powf(h)).sum();
    Ok(s.powf(1.0 / h))
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("h = {h} must be positive")))
    }
}

#[inline]
fn power(x: f64, h: f64) -> f64 {
    if h == 1.0 {
        x
    } else {
        x.powf(h)
    }
}

fn is_flag(e: &Error) -> bool {
    matches!(e, Error::NotAdmissible | Error::RegionTooLarge(_))
}

/// Running sums of `ℱ^h` in sample order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sum_sq: f64,
    count: usize,
    flagged: usize,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.count += 1;
    }

    fn finish(&self, h: f64, norm: Normalization) -> Result<Estimate> {
        let total = self.count + self.flagged;
        if self.flagged as f64 > MAX_FLAGGED_FRACTION * total as f64 {
            return Err(Error::TooManyFlagged {
                flagged: self.flagged,
                total,
            });
        }
        if self.count == 0 {
            return Err(Error::EmptyInput);
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = if self.count > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let se_mean = (var / n).sqrt();
        Ok(Estimate {
            value: norm.apply(mean, h),
            stderr_or_bound: se_mean * norm.derivative(mean, h),
            n: total,
            method: Method::MonteCarlo,
            flagged: self.flagged,
        })
    }
}

/// Monte Carlo estimate at `p` from `n` exact draws of stream `seed`.
pub fn estimate_mc(domain: &ConvexDomain, p: Point2, h: f64, n: usize, seed: u64) -> Result<Estimate> {
    estimate_mc_with(domain, p, h, n, &Sampled { seed }, Normalization::Holder)
}

pub fn estimate_mc_with(
    domain: &ConvexDomain,
    p: Point2,
    h: f64,
    n: usize,
    source: &dyn LatticeSource,
    norm: Normalization,
) -> Result<Estimate> {
    Ok(estimate_mc_points(domain, &[p], h, n, source, norm)?.remove(0))
}

/// Monte Carlo estimates at several points sharing one sample set.
pub fn estimate_mc_points(
    domain: &ConvexDomain,
    points: &[Point2],
    h: f64,
    n: usize,
    source: &dyn LatticeSource,
    norm: Normalization,
) -> Result<Vec<Estimate>> {
    check_h(h)?;
    if n == 0 || points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ctxs = points
        .iter()
        .map(|&p| PointContext::new(domain, p))
        .collect::<Result<Vec<_>>>()?;
    const CHUNK: u64 = 4096;
    let chunks = (n as u64).div_ceil(CHUNK);
    let partial: Vec<Result<Vec<Moments>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); ctxs.len()];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n as u64) {
                let lat = source.lattice(i)?;
                let ev = Evaluator::new(domain, &lat)?;
                for (m, ctx) in acc.iter_mut().zip(&ctxs) {
                    match ev.eval(ctx) {
                        Ok(v) => m.push(power(v.value, h)),
                        Err(e) if is_flag(&e) => m.flagged += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Moments::default(); ctxs.len()];
    for chunk in partial {
        for (t, m) in total.iter_mut().zip(chunk?) {
            t.sum += m.sum;
            t.sum_sq += m.sum_sq;
            t.count += m.count;
            t.flagged += m.flagged;
        }
    }
    total.iter().map(|m| m.finish(h, norm)).collect()
}

/// Quadrature over the truncated moduli space. The reported bound covers
/// both the cusp `{y > y_max}` and its propagation through the `1/h` power.
#[allow(clippy::too_many_arguments)]
pub fn estimate_quadrature(
    domain: &ConvexDomain,
    p: Point2,
    h: f64,
    y_max: f64,
    nx: usize,
    ny: usize,
    ntheta: usize,
) -> Result<Estimate> {
    estimate_quadrature_with(domain, p, h, y_max, (nx, ny, ntheta), Normalization::Holder)
}

pub fn estimate_quadrature_with(
    domain: &ConvexDomain,
    p: Point2,
    h: f64,
    y_max: f64,
    (nx, ny, ntheta): (usize, usize, usize),
    norm: Normalization,
) -> Result<Estimate> {
    check_h(h)?;
    let radius = match domain.circumradius_about(p) {
        Extended::Finite(r) => r,
        Extended::PosInfinity => return Err(Error::UnboundedDomain),
    };
    let ctx = PointContext::new(domain, p)?;
    let nodes = quadrature_grid(y_max, nx, ny, ntheta)?;
    let terms: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|node| {
            let lat = node.point.lattice();
            let v = Evaluator::new(domain, &lat)?.eval(&ctx)?;
            Ok(node.weight * power(v.value, h))
        })
        .collect();
    let mut s = 0.0;
    for t in terms {
        s += t?;
    }
    let tail = tail_bound(radius, h, y_max)?;
    let value = norm.apply(s, h);
    Ok(Estimate {
        value,
        stderr_or_bound: norm.apply(s + tail, h) - value,
        n: nodes.len(),
        method: Method::Quadrature,
        flagged: 0,
    })
}

/// Values of an estimator on a regular grid. Node `(i, j)` sits at
/// `x = xmin + i·(xmax − xmin)/(nx − 1)`, likewise for `y`; storage is
/// row-major with `x` varying fastest. Exterior nodes hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub bbox: (f64, f64, f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    /// Per-node standard error; empty when unknown (e.g. read from CSV).
    pub stderr: Vec<f64>,
    pub h: f64,
    pub seed: u64,
    pub n: usize,
}

impl ScalarField {
    pub fn x(&self, i: usize) -> f64 {
        let (x0, x1, _, _) = self.bbox;
        x0 + (x1 - x0) * i as f64 / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        let (_, _, y0, y1) = self.bbox;
        y0 + (y1 - y0) * j as f64 / (self.ny - 1) as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn cell_size(&self) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.bbox;
        ((x1 - x0) / (self.nx - 1) as f64, (y1 - y0) / (self.ny - 1) as f64)
    }

    /// Field of a closure, for synthetic tests.
    pub fn from_fn(bbox: (f64, f64, f64, f64), nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut field = ScalarField {
            bbox,
            nx,
            ny,
            values: Vec::new(),
            stderr: Vec::new(),
            h: 1.0,
            seed: 0,
            n: 0,
        };
        validate_grid(bbox, nx, ny, 2)?;
        field.values = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| f(field.x(i), field.y(j)))
            .collect();
        Ok(field)
    }
}

fn validate_grid(bbox: (f64, f64, f64, f64), nx: usize, ny: usize, min: usize) -> Result<()> {
    let (x0, x1, y0, y1) = bbox;
    if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidGrid(format!("bad bounding box {bbox:?}")));
    }
    if nx < min || ny < min {
        return Err(Error::InvalidGrid(format!("resolution {nx}x{ny} is below {min}x{min}")));
    }
    Ok(())
}

/// Monte Carlo field with one shared sample set for all nodes.
#[allow(clippy::too_many_arguments)]
pub fn field(
    domain: &ConvexDomain,
    h: f64,
    bbox: (f64, f64, f64, f64),
    nx: usize,
    ny: usize,
    n: usize,
    seed: u64,
) -> Result<ScalarField> {
    field_with(domain, h, bbox, (nx, ny), n, &Sampled { seed }, seed, Normalization::Holder)
}

#[allow(clippy::too_many_arguments)]
pub fn field_with(
    domain: &ConvexDomain,
    h: f64,
    bbox: (f64, f64, f64, f64),
    (nx, ny): (usize, usize),
    n: usize,
    source: &dyn LatticeSource,
    seed: u64,
    norm: Normalization,
) -> Result<ScalarField> {
    check_h(h)?;
    validate_grid(bbox, nx, ny, 8)?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut out = ScalarField {
        bbox,
        nx,
        ny,
        values: vec![f64::NAN; nx * ny],
        stderr: vec![f64::NAN; nx * ny],
        h,
        seed,
        n,
    };
    // one context per node; None outside the domain
    let ctxs: Vec<Option<PointContext>> = (0..nx * ny)
        .map(|k| {
            let p = Point2::new(out.x(k % nx), out.y(k / nx));
            match PointContext::new(domain, p) {
                Ok(c) => Ok(Some(c)),
                Err(Error::PointOutside { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut moments = vec![Moments::default(); nx * ny];
    const BATCH: usize = 32;
    let mut start = 0usize;
    while start < n {
        let end = (start + BATCH).min(n);
        let sheets = (start..end)
            .into_par_iter()
            .map(|i| {
                let lat = source.lattice(i as u64)?;
                let ev = Evaluator::new(domain, &lat)?;
                GridSheet::new(&ev, &ctxs, nx, ny).fill()
            })
            .collect::<Result<Vec<_>>>()?;
        moments.par_iter_mut().enumerate().for_each(|(k, m)| {
            for sheet in &sheets {
                match sheet.state[k] {
                    NodeState::Value => m.push(power(sheet.values[k], h)),
                    NodeState::Flagged => m.flagged += 1,
                    NodeState::Unknown => {}
                }
            }
        });
        start = end;
    }
    for (k, m) in moments.iter().enumerate() {
        if ctxs[k].is_some() {
            let e = m.finish(h, norm)?;
            out.values[k] = e.value;
            out.stderr[k] = e.stderr_or_bound;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Unknown,
    Value,
    Flagged,
}

/// Values of `ℱ_Λ` for one lattice on the whole grid.
///
/// `ℱ_Λ` is concave, so if one vector `λ` attains the minimum at all four
/// corners of a grid rectangle inside the (convex) domain, then `ℱ_Λ` agrees
/// with the affine function `c_λ + λ·p` on the whole rectangle. The grid is
/// covered by a quadtree of such rectangles; only corners and small leaves
/// are evaluated directly.
struct GridSheet<'e, 'd> {
    ev: &'e Evaluator<'d>,
    ctxs: &'e [Option<PointContext>],
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    argmin: Vec<(i64, i64)>,
    state: Vec<NodeState>,
    hint: Option<(i64, i64)>,
}

impl<'e, 'd> GridSheet<'e, 'd> {
    fn new(ev: &'e Evaluator<'d>, ctxs: &'e [Option<PointContext>], nx: usize, ny: usize) -> Self {
        GridSheet {
            ev,
            ctxs,
            nx,
            ny,
            values: vec![f64::NAN; nx * ny],
            argmin: vec![(0, 0); nx * ny],
            state: vec![NodeState::Unknown; nx * ny],
            hint: None,
        }
    }

    fn eval_node(&mut self, k: usize) -> Result<()> {
        if self.state[k] != NodeState::Unknown {
            return Ok(());
        }
        let Some(ctx) = &self.ctxs[k] else { return Ok(()) };
        match self.ev.eval_hinted(ctx, self.hint) {
            Ok(r) => {
                self.values[k] = r.value.value;
                self.argmin[k] = r.hint;
                self.state[k] = NodeState::Value;
                self.hint = Some(r.hint);
            }
            Err(e) if is_flag(&e) => self.state[k] = NodeState::Flagged,
            Err(e) => return Err(e),
        }
        Ok(())
    }

    /// A vector optimal at every corner, if the corners agree.
    fn common_argmin(&self, corners: &[usize; 4]) -> Option<(i64, i64)> {
        if corners.iter().any(|&k| self.state[k] != NodeState::Value) {
            return None;
        }
        corners.iter().map(|&k| self.argmin[k]).find(|&cand| {
            corners.iter().all(|&k| {
                let ctx = self.ctxs[k].as_ref().expect("valued node is inside");
                let v = self.values[k];
                self.ev.affine_value(ctx.p, cand) <= v + 1e-13 * (1.0 + v.abs())
            })
        })
    }

    fn fill(mut self) -> Result<Sheet> {
        let mut stack = vec![(0, self.nx - 1, 0, self.ny - 1)];
        while let Some((i0, i1, j0, j1)) = stack.pop() {
            if i1 - i0 <= 1 && j1 - j0 <= 1 {
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        self.eval_node(j * self.nx + i)?;
                    }
                }
                continue;
            }
            let corners = [j0 * self.nx + i0, j0 * self.nx + i1, j1 * self.nx + i0, j1 * self.nx + i1];
            if corners.iter().all(|&k| self.ctxs[k].is_some()) {
                for &k in &corners {
                    self.eval_node(k)?;
                }
                if let Some(lam) = self.common_argmin(&corners) {
                    for j in j0..=j1 {
                        for i in i0..=i1 {
                            let k = j * self.nx + i;
                            if self.state[k] == NodeState::Unknown {
                                if let Some(ctx) = &self.ctxs[k] {
                                    self.values[k] = self.ev.affine_value(ctx.p, lam);
                                    self.argmin[k] = lam;
                                    self.state[k] = NodeState::Value;
                                }
                            }
                        }
                    }
                    continue;
                }
            }
            let (im, jm) = ((i0 + i1) / 2, (j0 + j1) / 2);
            if i1 - i0 <= 1 {
                stack.extend([(i0, i1, jm, j1), (i0, i1, j0, jm)]);
            } else if j1 - j0 <= 1 {
                stack.extend([(im, i1, j0, j1), (i0, im, j0, j1)]);
            } else {
                stack.extend([(im, i1, jm, j1), (i0, im, jm, j1), (im, i1, j0, jm), (i0, im, j0, jm)]);
            }
        }
        Ok(Sheet {
            values: self.values,
            state: self.state,
        })
    }
}

struct Sheet {
    values: Vec<f64>,
    state: Vec<NodeState>,
}
