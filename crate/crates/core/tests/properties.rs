use std::f64::consts::PI;

use equidist::estimate::{self, estimate_mc, Normalization, Sampled};
use equidist::experiments;
use equidist::geometry::{Containment, ConvexDomain, Extended, Mat2, Point2};
use equidist::io::to_json;
use equidist::moduli;
use proptest::prelude::*;

fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

fn finite(e: Extended) -> f64 {
    e.finite().expect("finite support")
}

fn domain_strategy() -> impl Strategy<Value = ConvexDomain> {
    let poly = (3usize..9, 0.0..1.0f64, 0.3..3.0f64, 0.3..3.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(
        |(n, phase, a, b, cx, cy)| {
            let verts = (0..n)
                .map(|k| {
                    let t = 2.0 * PI * (k as f64 + phase) / n as f64;
                    p(cx + a * t.cos(), cy + b * t.sin())
                })
                .collect();
            ConvexDomain::polygon(verts).unwrap()
        },
    );
    let ell = (0.2..3.0f64, 0.2..3.0f64, 0.0..PI, -2.0..2.0f64, -2.0..2.0f64).prop_map(
        |(a, b, rot, cx, cy)| {
            let (s, c) = rot.sin_cos();
            let r = Mat2::new(c, -s, s, c);
            let d = Mat2::new(1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b));
            ConvexDomain::ellipse(p(cx, cy), r * d * r.transpose()).unwrap()
        },
    );
    prop_oneof![poly, ell]
}

fn direction() -> impl Strategy<Value = Point2> {
    (0.0..2.0 * PI, 0.1..5.0f64).prop_map(|(t, r)| p(r * t.cos(), r * t.sin()))
}

fn sl2() -> impl Strategy<Value = Mat2> {
    (-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64)
        .prop_map(|(a, s, b)| {
            // diag(e^a, e^-a) · shear(s) · rotation(b)
            let d = Mat2::new(a.exp(), 0.0, 0.0, (-a).exp());
            let sh = Mat2::new(1.0, s, 0.0, 1.0);
            let (sn, cs) = b.sin_cos();
            d * sh * Mat2::new(cs, -sn, sn, cs)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn support_is_homogeneous_and_subadditive(dom in domain_strategy(), d1 in direction(), d2 in direction(), r in 0.01..50.0f64) {
        let h1 = finite(dom.support(d1));
        let h2 = finite(dom.support(d2));
        let scale = 1.0 + h1.abs() + h2.abs();
        prop_assert!((finite(dom.support(d1 * r)) - r * h1).abs() <= 1e-12 * r * scale);
        prop_assert!(finite(dom.support(d1 + d2)) <= h1 + h2 + 1e-12 * scale);
    }

    #[test]
    fn support_transforms_covariantly(dom in domain_strategy(), a in sl2(), d in direction()) {
        let image = dom.apply_linear(&a).unwrap();
        let lhs = finite(image.support(d));
        let rhs = finite(dom.support(a.transpose() * d));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn boundary_points_are_on_the_boundary(dom in domain_strategy(), t in 0.0..1.0f64) {
        let b = dom.boundary_point(t).unwrap();
        prop_assert_eq!(dom.contains(b, 1e-9), Containment::Boundary);
        prop_assert!(dom.boundary_distance(b).unwrap().abs() < 1e-9);
    }

    #[test]
    fn signed_distance_agrees_with_containment(dom in domain_strategy(), x in -6.0..6.0f64, y in -6.0..6.0f64) {
        let q = p(x, y);
        let sd = dom.signed_distance(q);
        let expected = if sd > 1e-9 {
            Containment::Interior
        } else if sd < -1e-9 {
            Containment::Exterior
        } else {
            Containment::Boundary
        };
        prop_assert_eq!(dom.contains(q, 1e-9), expected);
    }

    #[test]
    fn coefficient_is_the_dual_form_root(a in 0.2..4.0f64, b in -3.0..3.0f64, lam in direction()) {
        // choose c so that 4ac - b² = 4
        let c = (4.0 + b * b) / (4.0 * a);
        let e = ConvexDomain::Ellipse(equidist::geometry::Ellipse::area_pi_normal_form(a, b, c).unwrap());
        let got = finite(e.tropical_coefficient(lam));
        // oracle: maximize -λ·x over the ellipse a x² + b x y + c y² = 1, parameterized directly
        let mut best = f64::NEG_INFINITY;
        for k in 0..20000 {
            let t = 2.0 * PI * k as f64 / 20000.0;
            let (u, v) = (t.cos(), t.sin());
            let q = a * u * u + b * u * v + c * v * v;
            let r = 1.0 / q.sqrt();
            best = best.max(-(lam.x * u + lam.y * v) * r);
        }
        prop_assert!(got >= best - 1e-12 * (1.0 + best.abs()));
        prop_assert!(got - best <= 1e-6 * lam.norm() * 10.0, "{} vs {}", got, best);
    }
}

#[test]
fn sampled_x_follows_arcsine_density() {
    const BINS: usize = 50;
    const DRAWS: u64 = 1_000_000;
    // 99% quantile of chi-square with 49 degrees of freedom
    const CRITICAL: f64 = 74.919;
    let mut counts = [0u64; BINS];
    for i in 0..DRAWS {
        let m = moduli::sample(7, i);
        assert!(m.x.abs() <= 0.5 && m.x * m.x + m.y * m.y >= 1.0 - 1e-12);
        let k = (((m.x + 0.5) * BINS as f64) as usize).min(BINS - 1);
        counts[k] += 1;
    }
    let chi2: f64 = (0..BINS)
        .map(|k| {
            let lo = -0.5 + k as f64 / BINS as f64;
            let hi = lo + 1.0 / BINS as f64;
            let prob = 3.0 / PI * (hi.asin() - lo.asin());
            let expected = prob * DRAWS as f64;
            (counts[k] as f64 - expected).powi(2) / expected
        })
        .sum();
    assert!(chi2 < CRITICAL, "chi-square {chi2}");
}

#[test]
fn sampled_heights_follow_the_cusp_tail() {
    // P(y > Y) = 3/(πY) for Y >= 1
    let n = 400_000u64;
    for &ymax in &[1.0, 2.0, 5.0] {
        let hits = (0..n).filter(|&i| moduli::sample(11, i).y > ymax).count() as f64;
        let expected = moduli::tail_fraction(ymax);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((hits / n as f64 - expected).abs() < 4.0 * se, "Y={ymax}");
    }
}

#[test]
fn estimates_are_monotone_in_h() {
    let dom = ConvexDomain::square();
    let q = p(0.2, -0.3);
    let vals: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&h| estimate_mc(&dom, q, h, 20_000, 3).unwrap().value)
        .collect();
    for w in vals.windows(2) {
        assert!(w[0] <= w[1] + 1e-12, "{vals:?}");
    }
}

#[test]
fn mc_stderr_scales_as_inverse_root_n() {
    let disk = ConvexDomain::disk();
    let small = estimate_mc(&disk, p(0.0, 0.0), 1.0, 10_000, 5).unwrap();
    let large = estimate_mc(&disk, p(0.0, 0.0), 1.0, 1_000_000, 5).unwrap();
    let ratio = small.stderr_or_bound / large.stderr_or_bound;
    assert!((ratio / 10.0 - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn interior_estimates_beat_the_distance_bound() {
    // ℱ(p) >= d(p)·|λ_min|, and the mean of |λ_min| is the unit-disk center value
    let mean_shortest = experiments::disk_fundamental_domain_integral();
    let dom = ConvexDomain::polygon(vec![p(0.0, 0.0), p(3.0, 0.0), p(1.0, 2.0)]).unwrap();
    for &q in &[p(1.3, 0.6), p(0.5, 0.1), p(2.0, 0.4), p(1.0, 1.5)] {
        let est = estimate_mc(&dom, q, 1.0, 20_000, 9).unwrap();
        let bound = dom.boundary_distance(q).unwrap() * mean_shortest;
        assert!(est.value >= bound - 3.0 * est.stderr_or_bound, "{q:?}");
        assert!(bound - 3.0 * est.stderr_or_bound > 0.0);
    }
}

#[test]
fn square_field_is_dihedrally_symmetric() {
    let n = 21;
    let f = estimate::field(&ConvexDomain::square(), 1.0, (-1.0, 1.0, -1.0, 1.0), n, n, 20_000, 17).unwrap();
    let idx = |i: usize, j: usize| j * n + i;
    let mut checked = 0;
    let mut within2 = 0;
    for j in 0..n {
        for i in 0..n {
            let v = f.values[idx(i, j)];
            if !v.is_finite() || f.stderr[idx(i, j)] == 0.0 {
                continue;
            }
            let images = [
                idx(n - 1 - i, j),
                idx(i, n - 1 - j),
                idx(j, i),
                idx(n - 1 - j, i),
            ];
            for k in images {
                let se = f.stderr[idx(i, j)].max(f.stderr[k]);
                let diff = (v - f.values[k]).abs();
                assert!(diff <= 4.0 * se, "node ({i},{j}) differs by {diff}, se {se}");
                checked += 1;
                if diff <= 2.0 * se {
                    within2 += 1;
                }
            }
        }
    }
    assert!(within2 as f64 >= 0.95 * checked as f64, "{within2}/{checked}");
}

#[test]
fn reports_are_bit_reproducible() {
    let a = experiments::invariance_suite(4, 500, 21).unwrap();
    let b = experiments::invariance_suite(4, 500, 21).unwrap();
    assert_eq!(to_json(&a), to_json(&b));
    let d = ConvexDomain::square();
    let f1 = estimate::field(&d, 2.0, (-1.0, 1.0, -1.0, 1.0), 9, 9, 3000, 4).unwrap();
    let f2 = estimate::field(&d, 2.0, (-1.0, 1.0, -1.0, 1.0), 9, 9, 3000, 4).unwrap();
    assert_eq!(f1.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), f2.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn sampler_lattices_are_unimodular() {
    for i in 0..10_000 {
        let lat = moduli::sample(1, i).lattice();
        assert!((lat.det().abs() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn literal_normalization_only_rescales() {
    let d = ConvexDomain::disk();
    let src = Sampled { seed: 2 };
    for &h in &[0.5, 1.0, 3.0] {
        let hol = estimate::estimate_mc_with(&d, p(0.1, 0.2), h, 5000, &src, Normalization::Holder).unwrap();
        let lit = estimate::estimate_mc_with(&d, p(0.1, 0.2), h, 5000, &src, Normalization::Literal).unwrap();
        let z = PI * PI / 6.0;
        let expected = z.powf(1.0 / h - 1.0) * hol.value;
        assert!((lit.value - expected).abs() < 1e-12 * expected, "h={h}");
    }
}
