use proptest::prelude::*;

use sifbm::covariance::{
    gram, increment_cross_cov, increment_cross_cov_via_gram, increment_variance_closed_form,
    increment_variance_via_gram, nested_cov, pow2h, sifbm_cov, Hurst, Kernel,
};
use sifbm::flows::{self, Flow};
use sifbm::sampler::{self, empirical_cov_zero_mean, JitterPolicy};
use sifbm::set_families::{
    discretize, intersection_measure, region_measure, symdiff_measure, IncrementSpec, IndexedSet, Rectangle,
    SetFamily,
};

fn corner(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, dim)
}

fn rect(c: Vec<f64>) -> IndexedSet {
    IndexedSet::rect(c).unwrap()
}

fn hurst() -> impl Strategy<Value = Hurst> {
    (0.02..=0.5f64).prop_map(|h| Hurst::new(h).unwrap())
}

/// Outer corner in `[0.2, 1]^dim` with `n` subtracted corners inside it.
fn spec(dim: usize, n: usize) -> impl Strategy<Value = IncrementSpec> {
    (
        prop::collection::vec(0.2..=1.0f64, dim),
        prop::collection::vec(prop::collection::vec(0.05..=1.0f64, dim), n),
    )
        .prop_map(|(u, fracs)| {
            let subs = fracs
                .iter()
                .map(|f| rect(u.iter().zip(f).map(|(a, b)| a * b).collect()))
                .collect();
            IncrementSpec::new(rect(u), subs).unwrap()
        })
}

proptest! {
    #[test]
    fn symdiff_triangle(a in corner(3), b in corner(3), c in corner(3)) {
        let (a, b, c) = (rect(a), rect(b), rect(c));
        let ab = symdiff_measure(&a, &b).unwrap();
        prop_assert_eq!(ab, symdiff_measure(&b, &a).unwrap());
        prop_assert_eq!(symdiff_measure(&a, &a).unwrap(), 0.0);
        prop_assert!(symdiff_measure(&a, &c).unwrap() <= ab + symdiff_measure(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn nested_symdiff_is_measure_difference(u in corner(2), f in prop::collection::vec(0.0..=1.0f64, 2)) {
        let v: Vec<f64> = u.iter().zip(&f).map(|(a, b)| a * b).collect();
        let (u, v) = (rect(u), rect(v));
        let d = symdiff_measure(&u, &v).unwrap();
        prop_assert!((d - (u.measure() - v.measure())).abs() <= 1e-15);
    }

    #[test]
    fn aligned_discretization_preserves_region_measure(
        cells in prop::collection::vec(prop::collection::vec(1usize..=8, 2), 1..4),
    ) {
        let res = [8usize, 8];
        let bound = [1.0, 1.0];
        let to_rect = |c: &Vec<usize>| Rectangle::new(c.iter().map(|k| *k as f64 / 8.0).collect()).unwrap();
        let rects: Vec<Rectangle> = cells.iter().map(to_rect).collect();
        let outer = Rectangle::new(vec![1.0, 1.0]).unwrap();
        let continuous = IncrementSpec::new(
            IndexedSet::Rect(outer.clone()),
            rects.iter().cloned().map(IndexedSet::Rect).collect(),
        ).unwrap();
        let grid = IncrementSpec::new(
            IndexedSet::Grid(discretize(&outer, &res, &bound).unwrap()),
            rects.iter().map(|r| IndexedSet::Grid(discretize(r, &res, &bound).unwrap())).collect(),
        ).unwrap();
        let a = region_measure(&continuous).unwrap();
        let b = region_measure(&grid).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn covering_subtraction_has_zero_measure(u in prop::collection::vec(0.1..=1.0f64, 2), extra in 0usize..3) {
        let mut subs = vec![rect(u.clone())];
        for k in 0..extra {
            subs.push(rect(u.iter().map(|c| c * (k as f64 + 1.0) / 4.0).collect()));
        }
        let s = IncrementSpec::new(rect(u), subs).unwrap();
        prop_assert_eq!(region_measure(&s).unwrap(), 0.0);
    }

    #[test]
    fn white_noise_kernel_is_intersection(a in corner(3), b in corner(3)) {
        let (a, b) = (rect(a), rect(b));
        let k = sifbm_cov(&a, &b, Hurst::half()).unwrap();
        let m = intersection_measure(&a, &b).unwrap();
        prop_assert!((k - m).abs() <= 1e-12 * m.max(1e-300));
    }

    #[test]
    fn one_dimensional_gram_is_fbm(ts in prop::collection::vec(0.01..=1.0f64, 2..10), h in 0.02..0.98f64) {
        let fam = SetFamily::with_duplicates(ts.iter().map(|t| rect(vec![*t])).collect()).unwrap();
        let g = gram(&fam, &Kernel::Sifbm { hurst: Hurst::any(h).unwrap() }).unwrap();
        for i in 0..ts.len() {
            for j in 0..ts.len() {
                let expected = 0.5 * (pow2h(ts[i], h) + pow2h(ts[j], h) - pow2h((ts[i] - ts[j]).abs(), h));
                prop_assert!((g.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_matches_quadratic_form(s in (2usize..=3, 1usize..=4).prop_flat_map(|(d, n)| spec(d, n)), h in hurst()) {
        let closed = increment_variance_closed_form(&s, h).unwrap();
        let quad = increment_variance_via_gram(&s, h).unwrap();
        prop_assert!((closed - quad).abs() <= 1e-9 * quad.abs(), "{} vs {}", closed, quad);
    }

    #[test]
    fn cross_covariance_matches_gram(a in spec(2, 1), b in spec(2, 1), h in hurst()) {
        let closed = increment_cross_cov(&a, &b, h).unwrap();
        let quad = increment_cross_cov_via_gram(&a, &b, h).unwrap();
        prop_assert!((closed - quad).abs() <= 1e-10);
    }

    #[test]
    fn nested_covariance_identity(v in prop::collection::vec(0.05..=1.0f64, 3), f in corner(3), h in hurst()) {
        let u: Vec<f64> = v.iter().zip(&f).map(|(a, b)| a * b).collect();
        let (u, v) = (rect(u), rect(v));
        let direct = sifbm_cov(&u, &v, h).unwrap();
        let nested = nested_cov(&u, &v, h).unwrap();
        prop_assert!((direct - nested).abs() <= 1e-12 * direct.abs().max(1e-300));
    }

    #[test]
    fn projected_covariance_matches_kernel(
        alpha in prop::collection::vec(0.1..=2.0f64, 2),
        s in 0.0..=1.0f64,
        t in 0.0..=1.0f64,
        h in hurst(),
    ) {
        let flow = Flow::linear(alpha).unwrap();
        let direct = sifbm_cov(&flow.set_at(s).unwrap(), &flow.set_at(t).unwrap(), h).unwrap();
        let projected = flows::projected_cov(&flow, s, t, h).unwrap();
        prop_assert!((direct - projected).abs() <= 1e-12 * direct.abs().max(1e-300));
    }

    #[test]
    fn theta_is_monotone(mid in prop::collection::vec(0.0..=1.0f64, 2), s in 0.0..=1.0f64, t in 0.0..=1.0f64) {
        let flow = Flow::new(vec![(0.0, vec![0.0, 0.0]), (0.5, mid), (1.0, vec![1.0, 1.0])]).unwrap();
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        prop_assert!(flows::theta(&flow, lo).unwrap() <= flows::theta(&flow, hi).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampling_is_deterministic_and_linear(s in spec(2, 2), seed in any::<u64>(), h in hurst()) {
        let sets = s.intersections().unwrap();
        let fam = SetFamily::with_duplicates(sets).unwrap();
        let g = gram(&fam, &Kernel::Sifbm { hurst: h }).unwrap();
        let a = sampler::sample(&g, 64, seed, JitterPolicy::default()).unwrap();
        let b = sampler::sample(&g, 64, seed, JitterPolicy::default()).unwrap();
        prop_assert_eq!(a.to_csv(&fam.labels()), b.to_csv(&fam.labels()));

        let values = sampler::increment_values(&a, &s, &fam).unwrap();
        for (r, v) in values.iter().enumerate() {
            let row = a.row(r);
            let expected: f64 = (0..row.len())
                .map(|mask| if mask.count_ones() % 2 == 0 { row[mask] } else { -row[mask] })
                .sum();
            prop_assert_eq!(*v, expected);
        }
    }

    #[test]
    fn empirical_gram_within_monte_carlo_band(cs in prop::collection::vec(prop::collection::vec(0.1..=1.0f64, 2), 2..5), h in hurst(), seed in any::<u64>()) {
        let fam = SetFamily::with_duplicates(cs.into_iter().map(rect).collect()).unwrap();
        let g = gram(&fam, &Kernel::Sifbm { hurst: h }).unwrap();
        let reps = 20_000;
        let e = sampler::sample(&g, reps, seed, JitterPolicy::default()).unwrap();
        // 4σ per entry keeps the family-wise false alarm rate negligible over all cases.
        for i in 0..g.n() {
            for j in 0..g.n() {
                let (xi, xj) = (e.column(i), e.column(j));
                let est = empirical_cov_zero_mean(&xi, &xj);
                let se = ((g.get(i, i) * g.get(j, j) + g.get(i, j).powi(2)) / reps as f64).sqrt();
                prop_assert!((est - g.get(i, j)).abs() <= 4.0 * se + 1e-12, "({},{}) {} vs {}", i, j, est, g.get(i, j));
            }
        }
    }
}

#[test]
fn holder_concentrates_at_small_index() {
    let flow = Flow::linear(vec![1.0, 2.0]).unwrap();
    let ts = flows::invert_time_change(&flow, 4096).unwrap();
    let g = gram(&flow.family(&ts).unwrap(), &Kernel::Sifbm { hurst: Hurst::new(0.2).unwrap() }).unwrap();
    let e = sampler::sample(&g, 20, 1200, JitterPolicy::default()).unwrap();
    let mean = (0..20).map(|r| flows::holder_estimate(&[e.row(r)]).unwrap().exponent).sum::<f64>() / 20.0;
    assert!((mean - 0.2).abs() <= 0.05, "{mean}");
}

/// `θ(t) = √t` at the knots: the clock is not differentiable at 0, so the
/// variance at small `t` scales like `t^H` rather than `t^{2H}`.
#[test]
fn square_root_profile_flow() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sqrt_profile_flow.json");
    let flow = Flow::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    for k in 0..=16 {
        let t = (k as f64 / 16.0).powi(2);
        assert!((flows::theta(&flow, t).unwrap() - t.sqrt()).abs() < 1e-15);
    }
    let h = Hurst::new(0.4).unwrap();
    let ts = [1.0 / 256.0, 1.0 / 64.0];
    let g = gram(&flow.family(&ts).unwrap(), &Kernel::Sifbm { hurst: h }).unwrap();
    let ratio = (g.get(1, 1) / g.get(0, 0)).ln() / 4f64.ln();
    assert!((ratio - 0.4).abs() < 1e-12, "{ratio}");
    let inv = flows::invert_time_change(&flow, 64).unwrap();
    // θ = 1/16 is reached at the knot t = 1/256.
    assert!((inv[3] - 1.0 / 256.0).abs() < 1e-12);
}
