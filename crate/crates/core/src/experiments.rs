//! Reproducible studies: the disk-centre value, the quadrant law, the
//! hyperbolic limit on unbounded domains, the shape of bounded level sets,
//! and the symmetry identities.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimate::{
    estimate_mc, estimate_mc_points, estimate_mc_with, field, Estimate, Normalization, Sampled, ScalarField,
    Transformed,
};
use crate::geometry::{convex_hull, ConvexDomain, Mat2, Point2};
use crate::levels::{
    contour_area_centroid, fit_conic, hausdorff, hyperbola_deviation, mahler, main_contour, marching_squares,
    max_locus, normalize_class, AsymptoteFrame, ConicClass, Contour, MahlerMode,
};

/// Value the disk-centre estimate is compared with.
pub const DISK_CENTER_REFERENCE: f64 = 0.682;

pub type Row = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub comparison: Comparison,
    pub tolerance: f64,
}

impl Verdict {
    pub fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Verdict {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            comparison: Comparison::AtMost,
            tolerance,
        }
    }

    pub fn at_least(name: &str, measured: f64, tolerance: f64) -> Self {
        Verdict {
            name: name.into(),
            passed: measured >= tolerance,
            measured,
            comparison: Comparison::AtLeast,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub name: String,
    pub parameters: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    fn new(name: &str, parameters: Value) -> Self {
        let parameters = match parameters {
            Value::Object(m) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        Report {
            schema: 1,
            name: name.into(),
            parameters,
            tables: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&[Row]> {
        self.tables.iter().find(|t| t.name == name).map(|t| t.rows.as_slice())
    }

    /// Entry `key` of the single-row table `name`.
    pub fn scalar(&self, name: &str, key: &str) -> Option<f64> {
        self.table(name)?.first()?.get(key).copied()
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    fn push_table(&mut self, name: &str, rows: Vec<Row>) {
        self.tables.push(Table { name: name.into(), rows });
    }
}

fn row(entries: &[(&str, f64)]) -> Row {
    entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, 1e-14).integral
}

/// `(4/3)∫₀^{π/6} √cos t dt`.
pub fn disk_closed_form() -> f64 {
    4.0 / 3.0 * integrate(|t| t.cos().sqrt(), 0.0, PI / 6.0)
}

/// `(3/π)∬_U y^{−5/2} dx dy` over `U = {|x| < 1/2, x² + y² > 1}`, the mean
/// shortest-vector length, integrated directly in two dimensions.
pub fn disk_fundamental_domain_integral() -> f64 {
    let inner = |x: f64| {
        let y0 = (1.0 - x * x).sqrt();
        // y = y0/v maps (0, 1] onto [y0, ∞)
        integrate(|v| y0.powf(-1.5) * v.sqrt(), 0.0, 1.0)
    };
    3.0 / PI * integrate(inner, -0.5, 0.5)
}

fn require_samples(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidParameter(format!("need at least {min} samples, got {n}")));
    }
    Ok(())
}

/// Disk centre at `h = 1`: the one-dimensional closed form, the
/// two-dimensional integral over the fundamental domain and the Monte Carlo
/// pipeline.
pub fn disk_center_check(n: usize, seed: u64) -> Result<Report> {
    require_samples(n, 100_000)?;
    let a = disk_closed_form();
    let b = disk_fundamental_domain_integral();
    let est = estimate_mc(&ConvexDomain::disk(), Point2::zeros(), 1.0, n, seed)?;
    let (c, se) = (est.value, est.stderr_or_bound);
    let mut r = Report::new("disk-check", json!({"h": 1.0, "n": n, "seed": seed}));
    r.push_table(
        "values",
        vec![row(&[
            ("closed_form", a),
            ("fundamental_domain", b),
            ("pipeline", c),
            ("pipeline_stderr", se),
            ("flagged", est.flagged as f64),
            ("closed_form_vs_fundamental_domain", (a - b).abs()),
        ])],
    );
    let reference = DISK_CENTER_REFERENCE;
    r.verdicts = vec![
        Verdict::at_most("pipeline_near_reference", (c - reference).abs(), (3.0 * se).max(0.01)),
        Verdict::at_most("closed_form_near_reference", (a - reference).abs(), 0.005),
        Verdict::at_most("fundamental_domain_near_reference", (b - reference).abs(), 0.005),
        Verdict::at_most("pipeline_vs_closed_form", (c - a).abs(), 3.0 * se),
        Verdict::at_most("pipeline_vs_fundamental_domain", (c - b).abs(), 3.0 * se),
    ];
    Ok(r)
}

/// Points of the quadrant law check.
pub const QUADRANT_POINTS: [(f64, f64); 6] = [(1.0, 1.0), (2.0, 2.0), (4.0, 1.0), (1.0, 4.0), (2.0, 0.5), (0.5, 2.0)];

/// `𝒜_h(x, y) / √(xy)` on the quadrant at six points with shared samples.
pub fn quadrant_check(h: f64, n: usize, seed: u64) -> Result<Report> {
    require_samples(n, 100_000)?;
    let quadrant = ConvexDomain::quadrant();
    let pts: Vec<Point2> = QUADRANT_POINTS.iter().map(|&(x, y)| Point2::new(x, y)).collect();
    let source = Sampled { seed };
    let ests = estimate_mc_points(&quadrant, &pts, h, n, &source, Normalization::Holder)?;
    let scale: Vec<f64> = pts.iter().map(|p| (p.x * p.y).sqrt()).collect();
    let c: Vec<f64> = ests.iter().zip(&scale).map(|(e, s)| e.value / s).collect();
    let se: Vec<f64> = ests.iter().zip(&scale).map(|(e, s)| e.stderr_or_bound / s).collect();

    let mut r = Report::new("quadrant-check", json!({"h": h, "n": n, "seed": seed}));
    r.push_table(
        "points",
        pts.iter()
            .zip(&ests)
            .zip(c.iter().zip(&se))
            .map(|((p, e), (ci, si))| {
                row(&[
                    ("x", p.x),
                    ("y", p.y),
                    ("value", e.value),
                    ("stderr", e.stderr_or_bound),
                    ("c_hat", *ci),
                    ("c_hat_stderr", *si),
                ])
            })
            .collect(),
    );

    // the worst pair relative to its own tolerance
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let mean = (c[i] + c[j]) / 2.0;
            let dev = (c[i] - c[j]).abs() / mean;
            let tol = (3.0 * se[i].hypot(se[j]) / mean).max(0.02);
            if dev - tol > worst.0 {
                worst = (dev - tol, dev, tol);
            }
        }
    }
    let ratio = ests[1].value / ests[0].value;
    // the swap (x, y) ↦ (y, x) preserves the quadrant and is its own transpose
    let swap = Mat2::new(0.0, 1.0, 1.0, 0.0);
    let swapped = estimate_mc_with(
        &quadrant,
        pts[2],
        h,
        n,
        &Transformed { inner: source, matrix: swap },
        Normalization::Holder,
    )?;
    let swap_diff = (swapped.value - ests[3].value).abs();
    let c_mean = c.iter().sum::<f64>() / c.len() as f64;
    let se_mean = se.iter().sum::<f64>() / se.len() as f64;
    r.push_table(
        "summary",
        vec![row(&[
            ("c_hat", c_mean),
            ("c_hat_stderr", se_mean),
            ("ratio_2_2_over_1_1", ratio),
            ("swap_difference", swap_diff),
        ])],
    );
    r.verdicts = vec![
        Verdict::at_most("c_hat_agreement", worst.1, worst.2),
        Verdict::at_most("homogeneity_ratio", (ratio - 2.0).abs(), 1e-12),
        Verdict::at_most("swap_identity", swap_diff, 1e-10),
    ];
    Ok(r)
}

/// `quadrant ∩ {x + 2y ≥ 2}`.
pub fn truncated_quadrant() -> ConvexDomain {
    ConvexDomain::unbounded(
        Point2::new(0.0, 1.0),
        vec![Point2::new(0.0, 1.0), Point2::new(2.0, 0.0)],
        Point2::new(1.0, 0.0),
    )
    .expect("valid truncated quadrant")
}

/// Bilinear interpolation of per-node standard errors; NaN outside.
fn stderr_at(f: &ScalarField, p: Point2) -> f64 {
    if f.stderr.len() != f.values.len() {
        return f64::NAN;
    }
    let (hx, hy) = f.cell_size();
    let (x0, _, y0, _) = f.bbox;
    let gx = ((p.x - x0) / hx).clamp(0.0, (f.nx - 1) as f64);
    let gy = ((p.y - y0) / hy).clamp(0.0, (f.ny - 1) as f64);
    let (i, j) = ((gx as usize).min(f.nx - 2), (gy as usize).min(f.ny - 2));
    let (s, t) = (gx - i as f64, gy - j as f64);
    let at = |i: usize, j: usize| f.stderr[j * f.nx + i];
    let v = (1.0 - s) * (1.0 - t) * at(i, j) + s * (1.0 - t) * at(i + 1, j) + (1.0 - s) * t * at(i, j + 1) + s * t * at(i + 1, j + 1);
    v
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Grid and sampling parameters of a field-based experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRun {
    pub h: f64,
    pub grid: (usize, usize),
    pub n: usize,
    pub seed: u64,
}

impl FieldRun {
    fn json(&self) -> Value {
        json!({"h": self.h, "grid": [self.grid.0, self.grid.1], "n": self.n, "seed": self.seed})
    }
}

/// Level curves of an unbounded domain measured against the hyperbolas
/// with the domain's asymptotes.
pub fn hyperbola_convergence(
    domain: &ConvexDomain,
    levels: &[f64],
    bbox: (f64, f64, f64, f64),
    run: FieldRun,
) -> Result<Report> {
    let ConvexDomain::Unbounded(poly) = domain else {
        return Err(Error::InvalidParameter("hyperbola experiment needs an unbounded domain".into()));
    };
    if levels.is_empty() || levels.windows(2).any(|w| !(w[0] < w[1])) || !(levels[0] > 0.0) {
        return Err(Error::InvalidParameter("levels must be positive and strictly increasing".into()));
    }
    let frame = AsymptoteFrame::from_asymptotes(poly.asymptote_apex(), poly.ray_in(), poly.ray_out())?;
    let f = field(domain, run.h, bbox, run.grid.0, run.grid.1, run.n, run.seed)?;

    let mut rows = Vec::new();
    let mut devs = Vec::new();
    let mut noises = Vec::new();
    for &t in levels {
        let contours = marching_squares(&f, t);
        let Some(c) = main_contour(&contours) else {
            return Err(Error::InvalidParameter(format!("level {t} has no contour inside the box")));
        };
        let dev = hyperbola_deviation(c, &frame)?;
        // xy scales with the square of the level, so a relative error δ/t in
        // the field moves xy by about 2δ/t
        let delta = median(c.points.iter().map(|&p| stderr_at(&f, p)).collect());
        let noise = 2.0 * delta / t;
        let fit = fit_conic(&c.points).ok();
        rows.push(row(&[
            ("level", t),
            ("deviation", dev),
            ("noise", noise),
            ("points", c.points.len() as f64),
            ("closed", c.closed as u8 as f64),
            ("conic_residual", fit.map_or(f64::NAN, |f| f.residual)),
            ("conic_is_hyperbola", fit.is_some_and(|f| f.class == ConicClass::Hyperbola) as u8 as f64),
        ]));
        devs.push(dev);
        noises.push(noise);
    }
    let worst_rise = (1..devs.len())
        .map(|k| devs[k] - devs[k - 1] - 2.0 * noises[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut params = run.json();
    params["levels"] = json!(levels);
    params["bbox"] = json!([bbox.0, bbox.1, bbox.2, bbox.3]);
    params["domain"] = serde_json::to_value(domain.to_spec()).unwrap_or(Value::Null);
    let mut r = Report::new("hyperbola", params);
    r.push_table("levels", rows);
    r.verdicts = vec![
        Verdict::at_most("deviation_nonincreasing_within_noise", worst_rise.max(0.0), 0.0),
        Verdict::at_most("final_deviation", *devs.last().unwrap_or(&f64::NAN), 0.05),
        Verdict::at_least("level_span", levels[levels.len() - 1] / levels[0], 4.0),
    ];
    Ok(r)
}

/// Polygon tracing the ellipse of a conic fit, if it is one.
fn conic_ellipse(coef: &[f64; 6], samples: usize) -> Option<Contour> {
    let [a, b, c, d, e, f] = *coef;
    let q = Mat2::new(a, b / 2.0, b / 2.0, c);
    let centre = q.try_inverse()? * Point2::new(-d / 2.0, -e / 2.0);
    // (p − c)ᵀQ(p − c) = k
    let k = -(f + (d * centre.x + e * centre.y) / 2.0);
    let (q, k) = if k < 0.0 { (-q, -k) } else { (q, k) };
    let eig = q.symmetric_eigen();
    if !(eig.eigenvalues.min() > 0.0 && k > 0.0) {
        return None;
    }
    let axes = eig.eigenvalues.map(|l| (k / l).sqrt());
    let points = (0..samples)
        .map(|i| {
            let s = 2.0 * PI * i as f64 / samples as f64;
            centre + eig.eigenvectors * Point2::new(axes[0] * s.cos(), axes[1] * s.sin())
        })
        .collect();
    Some(Contour::new(points, true, 0.0))
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Relative area excess of the convex hull over a closed contour.
const CONVEXITY_TOL: f64 = 1e-3;

/// Level sets of a bounded domain below the maximum: Mahler products, conic
/// fits, distance to the fitted ellipse and the area decay near the top.
/// Only data quality and the Mahler bound `π²` are verdicts.
pub fn ellipse_limit_probe(domain: &ConvexDomain, n_levels: usize, run: FieldRun) -> Result<Report> {
    let bbox = domain.bounding_box().ok_or(Error::UnboundedDomain)?;
    if n_levels == 0 {
        return Err(Error::InvalidParameter("need at least one level".into()));
    }
    let f = field(domain, run.h, bbox, run.grid.0, run.grid.1, run.n, run.seed)?;
    let (peak, m) = max_locus(&f)?;

    let mut rows = Vec::new();
    let mut open_levels = 0usize;
    let mut worst_defect: f64 = 0.0;
    let mut mahlers = Vec::new();
    let mut noises = Vec::new();
    let mut classes = Vec::new();
    let mut heights = Vec::new();
    let mut areas = Vec::new();
    let mut centroid_of_top = None;
    for i in 1..=n_levels {
        let t = i as f64 / (n_levels + 1) as f64 * m;
        let contours = marching_squares(&f, t);
        let main = main_contour(&contours).filter(|c| c.closed);
        let Some(c) = main else {
            open_levels += 1;
            rows.push(row(&[("level", t), ("closed", 0.0)]));
            mahlers.push(f64::NAN);
            noises.push(f64::NAN);
            classes.push(None);
            continue;
        };
        let (area, centroid) = contour_area_centroid(c)?;
        let hull = Contour::new(convex_hull(&c.points), true, t);
        let hull_area = contour_area_centroid(&hull)?.0;
        let defect = (hull_area - area) / area;
        worst_defect = worst_defect.max(defect);
        let mp = mahler(&hull, MahlerMode::Centroid)?;
        let fit = fit_conic(&c.points).ok();
        let h_dist = fit
            .and_then(|fit| conic_ellipse(&fit.coefficients, 720))
            .and_then(|e| Some(hausdorff(&normalize_class(c).ok()?, &normalize_class(&e).ok()?)))
            .unwrap_or(f64::NAN);
        // radial error ≈ δ/|∇𝒜| with |∇𝒜| ≈ (m − t)/r, so Mahler moves by
        // about twice the relative error δ/(m − t)
        let delta = median(c.points.iter().map(|&p| stderr_at(&f, p)).collect());
        let noise = 2.0 * mp * delta / (m - t);
        rows.push(row(&[
            ("level", t),
            ("closed", 1.0),
            ("area", area),
            ("centroid_x", centroid.x),
            ("centroid_y", centroid.y),
            ("convexity_defect", defect),
            ("mahler", mp),
            ("mahler_noise", noise),
            ("conic_residual", fit.map_or(f64::NAN, |f| f.residual)),
            ("conic_is_ellipse", fit.is_some_and(|f| f.class == ConicClass::Ellipse) as u8 as f64),
            ("hausdorff_to_fitted_ellipse", h_dist),
        ]));
        mahlers.push(mp);
        noises.push(noise);
        classes.push(fit.map(|f| f.class));
        heights.push(m - t);
        areas.push(area);
        centroid_of_top = Some(centroid);
    }
    let shrink_slope = log_log_slope(&heights, &areas);
    let mahler_drop = (1..mahlers.len())
        .map(|k| mahlers[k - 1] - mahlers[k] - 2.0 * noises[k])
        .filter(|d| d.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let top_non_ellipse = classes
        .iter()
        .rev()
        .take(3)
        .filter(|c| **c != Some(ConicClass::Ellipse))
        .count();
    let domain_centroid = domain_centroid(domain);
    let mut params = run.json();
    params["levels"] = json!(n_levels);
    params["domain"] = serde_json::to_value(domain.to_spec()).unwrap_or(Value::Null);
    let mut r = Report::new("ellipse-probe", params);
    r.push_table("levels", rows);
    r.push_table(
        "summary",
        vec![row(&[
            ("max_value", m),
            ("max_x", peak.x),
            ("max_y", peak.y),
            ("max_to_domain_centroid", domain_centroid.map_or(f64::NAN, |c| (c - peak).norm())),
            (
                "max_to_top_level_centroid",
                centroid_of_top.map_or(f64::NAN, |c| (c - peak).norm()),
            ),
            ("area_shrink_slope", shrink_slope),
            ("mahler_nondecreasing_within_noise", (mahler_drop <= 0.0) as u8 as f64),
            ("mahler_worst_drop_beyond_noise", mahler_drop.max(0.0)),
        ])],
    );
    let max_mahler = mahlers.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    r.verdicts = vec![
        Verdict::at_most("levels_closed", open_levels as f64, 0.0),
        Verdict::at_most("levels_convex", worst_defect, CONVEXITY_TOL),
        Verdict::at_most("mahler_bound", max_mahler, PI * PI + 0.05),
        Verdict::at_most("top_levels_ellipse", top_non_ellipse as f64, 0.0),
    ];
    Ok(r)
}

fn domain_centroid(domain: &ConvexDomain) -> Option<Point2> {
    match domain {
        ConvexDomain::Ellipse(e) => Some(e.center()),
        ConvexDomain::Polygon(p) => {
            let c = Contour::new(p.vertices().to_vec(), true, 0.0);
            contour_area_centroid(&c).ok().map(|(_, g)| g)
        }
        ConvexDomain::Unbounded(_) => None,
    }
}

fn random_sl2(rng: &mut ChaCha8Rng) -> Mat2 {
    loop {
        let mut a = Mat2::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let det = a.determinant();
        if det.abs() < 0.1 {
            continue;
        }
        if det < 0.0 {
            a.swap_columns(0, 1);
        }
        return a / a.determinant().sqrt();
    }
}

fn random_domain(rng: &mut ChaCha8Rng) -> Result<ConvexDomain> {
    let centre = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    if rng.random::<bool>() {
        let k = rng.random_range(3..=8);
        let (a, b) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let pts = angles.iter().map(|t| centre + Point2::new(a * t.cos(), b * t.sin())).collect();
        ConvexDomain::polygon(pts)
    } else {
        let l = Mat2::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let form = l * l.transpose() + Mat2::identity() * 0.3;
        ConvexDomain::ellipse(centre, form)
    }
}

fn random_interior_point(domain: &ConvexDomain, rng: &mut ChaCha8Rng) -> Point2 {
    let (x0, x1, y0, y1) = domain.bounding_box().expect("bounded");
    let depth = (x1 - x0).min(y1 - y0) * 0.05;
    loop {
        let p = Point2::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        if domain.signed_distance(p) >= depth {
            return p;
        }
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Exact identities on shared (transformed) samples and statistical ones on
/// independent samples, over random domains, points, `A ∈ SL₂` and scales.
pub fn invariance_suite(n_cases: usize, samples: usize, seed: u64) -> Result<Report> {
    if n_cases == 0 || samples == 0 {
        return Err(Error::InvalidParameter("need at least one case and one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let (mut worst_exact, mut worst_scale) = (0.0f64, 0.0f64);
    let mut misses = 0usize;
    for case in 0..n_cases {
        let (domain, a, r) = match case {
            0 => (random_domain(&mut rng)?, Mat2::identity(), 1.0),
            1 => (ConvexDomain::square(), Mat2::new(1.0, 1.0, 0.0, 1.0), 1.0),
            _ => {
                let d = random_domain(&mut rng)?;
                let a = random_sl2(&mut rng);
                let r = (rng.random_range(0.25f64.ln()..4f64.ln())).exp();
                (d, a, r)
            }
        };
        let p = random_interior_point(&domain, &mut rng);
        let shared = Sampled { seed: rng.random() };
        let independent = Sampled { seed: rng.random() };
        let h = 1.0;
        let norm = Normalization::Holder;
        let moved = domain.apply_linear(&a)?;
        let scaled = domain.scale(r)?;
        let est = |d: &ConvexDomain, q: Point2, s: &dyn crate::estimate::LatticeSource| -> Result<Estimate> {
            estimate_mc_with(d, q, h, samples, s, norm)
        };
        let base = est(&domain, p, &shared)?;
        let on_moved = est(&moved, a * p, &shared)?;
        let pulled_back = est(
            &domain,
            p,
            &Transformed {
                inner: shared,
                matrix: a.transpose(),
            },
        )?;
        let on_scaled = est(&scaled, p * r, &shared)?;
        let independent_moved = est(&moved, a * p, &independent)?;
        let exact = rel_diff(on_moved.value, pulled_back.value);
        let scale_err = rel_diff(on_scaled.value, r * base.value);
        let z = (independent_moved.value - base.value).abs() / independent_moved.stderr_or_bound.hypot(base.stderr_or_bound);
        worst_exact = worst_exact.max(exact);
        worst_scale = worst_scale.max(scale_err);
        if !(z <= 3.0) {
            misses += 1;
        }
        rows.push(row(&[
            ("case", case as f64),
            ("x", p.x),
            ("y", p.y),
            ("scale", r),
            ("value", base.value),
            ("stderr", base.stderr_or_bound),
            ("transformed_relative_difference", exact),
            ("scaling_relative_difference", scale_err),
            ("independent_z", z),
        ]));
    }
    let allowed = (3 * n_cases).div_ceil(100);
    let mut r = Report::new("invariance", json!({"cases": n_cases, "n": samples, "seed": seed, "h": 1.0}));
    r.push_table("cases", rows);
    r.verdicts = vec![
        Verdict::at_most("transformed_samples_exact", worst_exact, 1e-9),
        Verdict::at_most("shared_sample_scaling", worst_scale, 1e-12),
        Verdict::at_most("independent_misses_3se", misses as f64, allowed as f64),
    ];
    Ok(r)
}
