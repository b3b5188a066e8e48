mod common;

use common::{random_point, rng};
use dpkm::lsh::{base_collision_probability, collision_probability_estimate, sample_lsh, wilson_interval, LshParams};
use dpkm::Point;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Collision probability by Simpson quadrature over the density of `|g . (x - y)|`,
/// which is half-normal with scale `s`: the offset separates the pair with
/// probability `t / w` when the projected gap is `t < w`.
fn quadrature_oracle(s: f64, w: f64) -> f64 {
    let steps = 20_000;
    let h = w / steps as f64;
    let f = |t: f64| {
        let z = t / s;
        2.0 / s * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * (1.0 - t / w)
    };
    let mut acc = f(0.0) + f(w);
    for i in 1..steps {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn base_probability_matches_quadrature() {
    for w in [1.0, 4.0] {
        for s in [0.05, 0.3, 1.0, 2.5, 10.0, 40.0] {
            let closed = base_collision_probability(s, w);
            let quad = quadrature_oracle(s, w);
            assert!((closed - quad).abs() < 1e-9, "s = {s}, w = {w}: {closed} vs {quad}");
        }
    }
    assert_eq!(base_collision_probability(0.0, 4.0), 1.0);
}

#[test]
fn base_probability_matches_direct_simulation() {
    // Simulate the projected gap and the offset directly, without the library's hash.
    let mut r = rng(1);
    let (s, w, trials) = (1.0, 4.0, 200_000u64);
    let mut hits = 0u64;
    for _ in 0..trials {
        let z: f64 = StandardNormal.sample(&mut r);
        let gap = s * z;
        let u = r.random::<f64>() * w;
        hits += u64::from((u / w).floor() == ((gap + u) / w).floor());
    }
    let (lo, hi) = wilson_interval(hits, trials);
    let p = base_collision_probability(s, w);
    assert!(lo <= p && p <= hi, "{p} outside [{lo}, {hi}]");
}

#[test]
fn base_probability_strictly_decreases_in_distance() {
    let mut last = 1.0;
    for i in 1..200 {
        let p = base_collision_probability(i as f64 * 0.05, 4.0);
        assert!(p < last);
        last = p;
    }
}

#[test]
fn concatenation_meets_requested_exponents() {
    for n in [1_000usize, 10_000, 100_000] {
        let params = LshParams::new(1.0, 0.2, 0.1, n).unwrap();
        let nf = n as f64;
        assert!(params.b_effective <= params.b + 1e-12);
        assert!(params.p_near() >= nf.powf(-params.b) * (1.0 - 1e-9));
        assert!(params.q_far() <= nf.powf(-2.2) * (1.0 + 1e-9));
        assert!(params.c > 1.0);
        assert!(params.universe <= (n as u64).pow(3));
    }
}

#[test]
fn same_seed_gives_the_same_function() {
    let params = LshParams::new(0.5, 0.2, 0.1, 1000).unwrap();
    let f = sample_lsh(&params, 4, &mut rng(3));
    let g = sample_lsh(&params, 4, &mut rng(3));
    let mut r = rng(4);
    for _ in 0..100 {
        let x = random_point(4, 1.0, &mut r);
        assert_eq!(f.bucket(&x).unwrap(), g.bucket(&x).unwrap());
        assert_eq!(f.bucket(&x).unwrap(), f.bucket(&x).unwrap());
        assert!(f.bucket(&x).unwrap() < params.universe);
    }
    assert!(f.bucket(&Point::new(vec![0.0; 3]).unwrap()).is_err());
}

#[test]
fn estimate_at_zero_distance_is_exactly_one() {
    let params = LshParams::new(1.0, 0.2, 0.1, 10_000).unwrap();
    let e = collision_probability_estimate(&params, 3, 0.0, 1000, &mut rng(5)).unwrap();
    assert_eq!((e.estimate, e.lower, e.upper), (1.0, 1.0, 1.0));
    assert!(collision_probability_estimate(&params, 3, 1.0, 999, &mut rng(5)).is_err());
}

#[test]
fn wilson_half_width_at_one_hundred_thousand_trials() {
    for hits in [0u64, 1000, 50_000, 99_000] {
        let (lo, hi) = wilson_interval(hits, 100_000);
        assert!((hi - lo) / 2.0 <= 0.005);
    }
}

#[test]
fn estimates_do_not_increase_with_distance() {
    let params = LshParams::new(1.0, 0.2, 0.1, 10_000).unwrap();
    let mut r = rng(6);
    let dists = [0.0, 0.5, 1.0, 2.0, params.c];
    let est: Vec<_> = dists
        .iter()
        .map(|&s| collision_probability_estimate(&params, 5, s, 20_000, &mut r).unwrap())
        .collect();
    for w in est.windows(2) {
        assert!(w[1].lower <= w[0].upper, "{:?} then {:?}", w[0], w[1]);
    }
}

#[test]
fn small_calibration_near_and_far() {
    let n = 10_000usize;
    let params = LshParams::new(1.0, 0.2, 0.1, n).unwrap();
    let mut r = rng(7);
    let near = collision_probability_estimate(&params, 5, 1.0, 20_000, &mut r).unwrap();
    let far = collision_probability_estimate(&params, 5, params.c, 20_000, &mut r).unwrap();
    let nf = n as f64;
    assert!(near.upper >= nf.powf(-0.1), "{near:?}");
    assert!(far.estimate <= nf.powf(-2.2) + nf.powi(-3) + 3.0 * far.half_width(), "{far:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn translation_preserves_base_hashes(seed in 0u64..1000, x in prop::collection::vec(-1.0f64..1.0, 3), v in prop::collection::vec(-1.0f64..1.0, 3)) {
        let params = LshParams::new(0.25, 0.2, 0.1, 1000).unwrap();
        let f = sample_lsh(&params, 3, &mut rng(seed));
        let g = f.translated(&v).unwrap();
        let px = Point::new(x.clone()).unwrap();
        let moved = Point::new(x.iter().zip(&v).map(|(a, b)| a + b).collect()).unwrap();
        let before = f.projections(&px).unwrap();
        let after = g.projections(&moved).unwrap();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        // Away from a cell boundary the floors agree too.
        if before.iter().all(|p| (p - p.round()).abs() > 1e-6) {
            prop_assert_eq!(f.base_hashes(&px).unwrap(), g.base_hashes(&moved).unwrap());
        }
        let floors: Vec<i64> = before.iter().map(|p| p.floor() as i64).collect();
        prop_assert_eq!(floors, f.base_hashes(&px).unwrap());
    }

    #[test]
    fn identical_points_always_collide(seed in 0u64..1000, x in prop::collection::vec(-1.0f64..1.0, 4)) {
        let params = LshParams::new(0.1, 0.3, 0.1, 500).unwrap();
        let f = sample_lsh(&params, 4, &mut rng(seed));
        let p = Point::new(x).unwrap();
        prop_assert_eq!(f.bucket(&p).unwrap(), f.bucket(&p.clone()).unwrap());
    }
}
