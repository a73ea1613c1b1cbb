//! Properties of the functional summaries: bands, p-values, AC50,
//! distances, alignment and the preprocessing helpers.

use dosefactor_core::align::align_draws;
use dosefactor_core::data::{filter_features, rescale_response, unscale_response, Dataset, FeatureKind, ResponseRecord};
use dosefactor_core::distance::{draw_distances, neighbors, pairwise_distance, DistanceMatrix, WeightMode};
use dosefactor_core::gibbs::{Draw, PosteriorDraws};
use dosefactor_core::posterior::{ac50, bayes_p_value, item_curves, predict_curves, prioritize, simultaneous_band, PriorityRule};
use dosefactor_core::random::{chain_rng, normal, ChainRng};
use dosefactor_core::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn curves_from(seed: u64, t: usize, d: usize, offset: f64) -> Vec<Vec<f64>> {
    let mut rng = chain_rng(seed, 0);
    let shape: Vec<f64> = (0..d).map(|_| normal(&mut rng, 0.0, 1.0)).collect();
    (0..t)
        .map(|_| {
            let amp = normal(&mut rng, 1.0, 0.3);
            shape.iter().map(|s| offset + amp * s + normal(&mut rng, 0.0, 0.5)).collect()
        })
        .collect()
}

fn random_draws(seed: u64, n: usize, d: usize, k: usize, t: usize) -> PosteriorDraws {
    let mut rng = chain_rng(seed, 1);
    let g = |rng: &mut ChainRng, r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| normal(rng, 0.0, 1.0));
    let s = 3;
    let base_l = g(&mut rng, d, k);
    let base_th = g(&mut rng, s, k);
    let base_eta = g(&mut rng, k, n);
    let draws = (0..t)
        .map(|it| {
            let jitter = |m: &DMatrix<f64>, rng: &mut ChainRng| m.map(|v| v + normal(rng, 0.0, 0.1));
            Draw {
                chain: 0,
                iter: it + 1,
                lambda: jitter(&base_l, &mut rng),
                theta: jitter(&base_th, &mut rng),
                xi: DMatrix::zeros(s, 0),
                eta: jitter(&base_eta, &mut rng),
                tau: (0..k).map(|h| (h as f64 + 1.0) * rng.random_range(0.5..2.0)).collect(),
                omega: vec![],
                phi: 1.0,
                ell: 1.0,
                beta2: 1.0,
                sigma_y2: rng.random_range(0.05..0.5),
                sigma_x2: vec![1.0; s],
                mu_y: (0..d).map(|_| normal(&mut rng, 0.0, 0.2)).collect(),
                mu_z: vec![0.0; s],
                rotation: DMatrix::identity(k, k),
            }
        })
        .collect();
    PosteriorDraws {
        items: (0..n).map(|i| format!("i{i:02}")).collect(),
        holdout: vec![false; n],
        doses: (0..d).map(|r| r as f64).collect(),
        feature_ids: (0..s).map(|f| format!("f{f}")).collect(),
        y_scale: 1.7,
        draws,
        traces: vec![],
    }
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    fn band_is_affine_equivariant(
        seed in any::<u64>(),
        t in 2usize..40,
        d in 1usize..8,
        a in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        b in proptest::collection::vec(-5.0f64..5.0, 8),
    ) {
        let curves = curves_from(seed, t, d, 0.0);
        let moved: Vec<Vec<f64>> = curves.iter().map(|c| c.iter().zip(&b).map(|(v, s)| a * v + s).collect()).collect();
        let b0 = simultaneous_band(&curves, 0.05).unwrap();
        let b1 = simultaneous_band(&moved, 0.05).unwrap();
        let scale = 10.0 * (1.0 + b0.mean.iter().chain(&b0.lo).chain(&b0.hi).fold(0.0f64, |x, v| x.max(v.abs())));
        prop_assert!(close(b0.q, b1.q, b0.q));
        for r in 0..d {
            prop_assert!(close(b1.mean[r], a * b0.mean[r] + b[r], scale));
            prop_assert!(close(b1.sd[r], a.abs() * b0.sd[r], scale));
            let (lo, hi) = if a > 0.0 { (b0.lo[r], b0.hi[r]) } else { (b0.hi[r], b0.lo[r]) };
            prop_assert!(close(b1.lo[r], a * lo + b[r], scale));
            prop_assert!(close(b1.hi[r], a * hi + b[r], scale));
        }
    }

    fn band_covers_the_draws_at_its_level(seed in any::<u64>(), t in 20usize..200, d in 1usize..10) {
        let curves = curves_from(seed, t, d, 0.0);
        let band = simultaneous_band(&curves, 0.05).unwrap();
        let inside = curves
            .iter()
            .filter(|c| c.iter().zip(&band.lo).zip(&band.hi).all(|((v, l), h)| *v >= *l && *v <= *h))
            .count();
        prop_assert!(inside as f64 >= 0.95 * t as f64, "{inside}/{t}");
    }

    fn p_value_ignores_scale_sign_and_dose_order(
        seed in any::<u64>(),
        t in 2usize..60,
        d in 1usize..8,
        offset in -2.0f64..2.0,
        a in 0.01f64..100.0,
    ) {
        let curves = curves_from(seed, t, d, offset);
        let (p, _) = bayes_p_value(&curves, 0.05).unwrap();
        let scaled: Vec<Vec<f64>> = curves.iter().map(|c| c.iter().map(|v| a * v).collect()).collect();
        let flipped: Vec<Vec<f64>> = curves.iter().map(|c| c.iter().map(|v| -v).collect()).collect();
        let reversed: Vec<Vec<f64>> = curves.iter().map(|c| c.iter().rev().copied().collect()).collect();
        prop_assert_eq!(p, bayes_p_value(&scaled, 0.05).unwrap().0);
        prop_assert_eq!(p, bayes_p_value(&flipped, 0.05).unwrap().0);
        prop_assert_eq!(p, bayes_p_value(&reversed, 0.05).unwrap().0);
    }

    fn p_below_alpha_iff_band_excludes_zero(
        seed in any::<u64>(),
        t in 2usize..80,
        d in 1usize..8,
        offset in -2.0f64..2.0,
        alpha in 0.01f64..0.5,
    ) {
        let curves = curves_from(seed, t, d, offset);
        let band = simultaneous_band(&curves, alpha).unwrap();
        let excludes = band.lo.iter().zip(&band.hi).any(|(l, h)| *l > 0.0 || *h < 0.0);
        let (p, _) = bayes_p_value(&curves, alpha).unwrap();
        prop_assert_eq!(p < alpha, excludes, "p = {}, alpha = {}", p, alpha);
    }

    fn ac50_ignores_points_outside_the_crossing(
        vals in proptest::collection::vec(-1.0f64..3.0, 2..10),
        tail in proptest::collection::vec(0.0f64..1.0, 0..4),
        head in proptest::collection::vec(0.0f64..1.0, 0..4),
    ) {
        let doses: Vec<f64> = (0..vals.len()).map(|r| r as f64 * 0.5).collect();
        let Some(x) = ac50(&vals, &doses) else {
            prop_assert!(vals.iter().all(|v| *v <= 0.0));
            return Ok(());
        };
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(x >= doses[0] && x <= doses[vals.len() - 1]);
        // later doses never exceed the maximum
        let mut c2 = vals.clone();
        let mut d2 = doses.clone();
        for (j, f) in tail.iter().enumerate() {
            c2.push(f * max);
            d2.push(doses[doses.len() - 1] + 0.5 * (j + 1) as f64);
        }
        // earlier doses stay below half the maximum when the original
        // first value does
        if vals[0] < 0.5 * max {
            for (j, f) in head.iter().enumerate() {
                c2.insert(0, f * 0.499 * max);
                d2.insert(0, doses[0] - 0.5 * (j + 1) as f64);
            }
        }
        prop_assert_eq!(ac50(&c2, &d2), Some(x));
    }

    fn distances_are_metrics(seed in any::<u64>(), n in 2usize..8, k in 1usize..4, t in 1usize..6, weighted in any::<bool>()) {
        let draws = random_draws(seed, n, 4, k, t);
        let mode = if weighted { WeightMode::TauWeighted } else { WeightMode::Unweighted };
        let mut mats: Vec<DMatrix<f64>> = (0..t).map(|dr| draw_distances(&draws, dr, mode)).collect();
        mats.push(pairwise_distance(&draws, mode, None, None).unwrap().mean);
        for m in &mats {
            for a in 0..n {
                prop_assert_eq!(m[(a, a)], 0.0);
                for b in 0..n {
                    prop_assert!(m[(a, b)] >= 0.0);
                    prop_assert_eq!(m[(a, b)], m[(b, a)]);
                    for c in 0..n {
                        prop_assert!(m[(a, c)] <= m[(a, b)] + m[(b, c)] + 1e-12);
                    }
                }
            }
        }
    }

    fn distances_ignore_factor_relabelling(seed in any::<u64>(), n in 2usize..8, k in 1usize..4, t in 1usize..5, flips in any::<u8>()) {
        let draws = random_draws(seed, n, 4, k, t);
        let mut moved = draws.clone();
        let perm: Vec<usize> = (0..k).rev().collect();
        for dr in &mut moved.draws {
            let eta = dr.eta.clone();
            for (c, &src) in perm.iter().enumerate() {
                let sign = if flips >> c & 1 == 1 { -1.0 } else { 1.0 };
                dr.eta.set_row(c, &(eta.row(src) * sign));
            }
            dr.tau = perm.iter().map(|&src| dr.tau[src]).collect();
        }
        for mode in [WeightMode::TauWeighted, WeightMode::Unweighted] {
            let a = pairwise_distance(&draws, mode, None, None).unwrap().mean;
            let b = pairwise_distance(&moved, mode, None, None).unwrap().mean;
            prop_assert!((&a - &b).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }

    fn alignment_preserves_identifiable_functionals(seed in any::<u64>(), n in 2usize..7, k in 1usize..4, t in 2usize..8) {
        let raw = random_draws(seed, n, 5, k, t);
        let (aligned, _) = align_draws(&raw).unwrap();
        for (r, a) in raw.draws.iter().zip(&aligned.draws) {
            let fit_r = &r.lambda * &r.eta;
            let fit_a = &a.lambda * &a.eta;
            prop_assert!(max_abs(&(&fit_r - &fit_a)) <= 1e-12 * max_abs(&fit_r).max(1.0));
            let th_r = &r.theta * &r.eta;
            let th_a = &a.theta * &a.eta;
            prop_assert!(max_abs(&(&th_r - &th_a)) <= 1e-12 * max_abs(&th_r).max(1.0));
            let ll_r = &r.lambda * r.lambda.transpose();
            let ll_a = &a.lambda * a.lambda.transpose();
            prop_assert!(max_abs(&(&ll_r - &ll_a)) <= 1e-12 * max_abs(&ll_r).max(1.0));
        }
        for mode in [WeightMode::TauWeighted, WeightMode::Unweighted] {
            let a = pairwise_distance(&raw, mode, None, None).unwrap().mean;
            let b = pairwise_distance(&aligned, mode, None, None).unwrap().mean;
            prop_assert!((&a - &b).norm() <= 1e-12 * a.norm().max(1.0));
        }
        for i in 0..n {
            let pr = bayes_p_value(&item_curves(&raw, i), 0.05).unwrap();
            let pa = bayes_p_value(&item_curves(&aligned, i), 0.05).unwrap();
            let br = simultaneous_band(&item_curves(&raw, i), 0.05).unwrap();
            let ba = simultaneous_band(&item_curves(&aligned, i), 0.05).unwrap();
            prop_assert_eq!(pr.1, pa.1);
            prop_assert!((pr.0 - pa.0).abs() <= 1.0 / t as f64 + 1e-15);
            for r in 0..br.mean.len() {
                prop_assert!(close(br.mean[r], ba.mean[r], br.mean[r].abs()));
            }
        }
    }

    fn neighbors_match_brute_force(seed in any::<u64>(), n in 2usize..12, k in 0usize..14) {
        let mut rng = chain_rng(seed, 3);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (normal(&mut rng, 0.0, 1.0), normal(&mut rng, 0.0, 1.0))).collect();
        let mean = DMatrix::from_fn(n, n, |a, b| ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt());
        let items: Vec<String> = (0..n).map(|i| format!("i{i:02}")).collect();
        let dm = DistanceMatrix { items: items.clone(), mean: mean.clone(), lo: None, hi: None };
        let q = rng.random_range(0..n);
        let (got, clipped) = neighbors(&dm, &items[q], k).unwrap();
        let mut want: Vec<(f64, String)> = (0..n).filter(|&j| j != q).map(|j| (mean[(q, j)], items[j].clone())).collect();
        want.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        want.truncate(k);
        prop_assert_eq!(clipped, k > n - 1);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(&g.item_id, &w.1);
            prop_assert_eq!(g.distance, w.0);
        }
    }

    fn priority_set_grows_with_alpha(seed in any::<u64>(), n in 2usize..10, t in 5usize..40) {
        let draws = random_draws(seed, n, 5, 2, t);
        let summaries = predict_curves(&draws, 0.05, seed).unwrap();
        let mut prev: Vec<String> = Vec::new();
        for alpha in [0.01, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let mut set: Vec<String> = prioritize(&summaries, alpha, PriorityRule::MaxLowerBand, None)
                .unwrap()
                .into_iter()
                .map(|p| p.item_id)
                .collect();
            set.sort();
            prop_assert!(prev.iter().all(|id| set.contains(id)), "alpha {alpha}: {prev:?} not within {set:?}");
            prev = set;
        }
    }

    fn feature_filter_is_idempotent(seed in any::<u64>(), n in 3usize..12, s in 2usize..10) {
        let mut rng = chain_rng(seed, 4);
        let kinds: Vec<FeatureKind> = (0..s).map(|f| match f % 3 { 0 => FeatureKind::Continuous, 1 => FeatureKind::Binary, _ => FeatureKind::Count }).collect();
        let x = DMatrix::from_fn(s, n, |f, _| match kinds[f] {
            FeatureKind::Continuous => (normal(&mut rng, 0.0, 1.0) * 2.0).round() / 2.0,
            FeatureKind::Binary => f64::from(u8::from(rng.random::<f64>() < 0.2)),
            _ => rng.random_range(0..3) as f64,
        });
        let items: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let recs = vec![ResponseRecord { item_id: items[0].clone(), dose: 0.0, response: 1.0 }];
        let ds = Dataset::new(items, (0..s).map(|f| format!("f{f}")).collect(), x, kinds, &recs, &[]).unwrap();
        if let Ok((once, _)) = filter_features(&ds, 0.8) {
            let (twice, rep) = filter_features(&once, 0.8).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(rep.dropped_zero_variance + rep.dropped_duplicate + rep.dropped_near_constant, 0);
        }
    }

    fn rescaling_round_trips(seed in any::<u64>(), n in 1usize..6, s in 1usize..5) {
        let mut rng = chain_rng(seed, 5);
        let x = DMatrix::from_fn(s, n, |_, _| normal(&mut rng, 0.0, 3.0));
        let items: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let mut recs = Vec::new();
        for id in &items {
            for r in 0..3 {
                recs.push(ResponseRecord { item_id: id.clone(), dose: r as f64, response: normal(&mut rng, 0.0, 50.0) });
            }
        }
        let ds = Dataset::new(items, (0..s).map(|f| format!("f{f}")).collect(), x, vec![FeatureKind::Continuous; s], &recs, &[]).unwrap();
        let (scaled, c) = rescale_response(&ds).unwrap();
        let y_norm: f64 = scaled.obs.iter().flatten().map(|o| o.response * o.response).sum::<f64>().sqrt();
        prop_assert!((y_norm - ds.x.norm()).abs() <= 1e-12 * ds.x.norm());
        prop_assert_eq!(scaled.y_scale, c);
        for (a, b) in ds.obs.iter().flatten().zip(scaled.obs.iter().flatten()) {
            prop_assert!((unscale_response(b.response, scaled.y_scale) - a.response).abs() <= 1e-12 * a.response.abs().max(1.0));
        }
    }
}

fn ac50_reference_cases() {
    assert_eq!(ac50(&[0.0, 1.0], &[0.0, 1.0]), Some(0.5));
    assert_eq!(ac50(&[0.0, 0.0, 0.0], &[0.0, 1.0, 2.0]), None);
    // max 2 at dose 1.0, crossing 1 between 0.2 (0.5) and 0.4 (1.5) at 0.3
    let x = ac50(&[0.0, 0.5, 1.5, 2.0], &[0.0, 0.2, 0.4, 1.0]).unwrap();
    assert!((x - 0.3).abs() < 1e-12);
}

/// Every property by name.
pub const PROPERTIES: &[(&str, fn())] = &[
    ("band_is_affine_equivariant", band_is_affine_equivariant),
    ("band_covers_the_draws_at_its_level", band_covers_the_draws_at_its_level),
    ("p_value_ignores_scale_sign_and_dose_order", p_value_ignores_scale_sign_and_dose_order),
    ("p_below_alpha_iff_band_excludes_zero", p_below_alpha_iff_band_excludes_zero),
    ("ac50_ignores_points_outside_the_crossing", ac50_ignores_points_outside_the_crossing),
    ("distances_are_metrics", distances_are_metrics),
    ("distances_ignore_factor_relabelling", distances_ignore_factor_relabelling),
    ("alignment_preserves_identifiable_functionals", alignment_preserves_identifiable_functionals),
    ("neighbors_match_brute_force", neighbors_match_brute_force),
    ("priority_set_grows_with_alpha", priority_set_grows_with_alpha),
    ("feature_filter_is_idempotent", feature_filter_is_idempotent),
    ("rescaling_round_trips", rescaling_round_trips),
    ("ac50_reference_cases", ac50_reference_cases),
];

#[allow(dead_code)]
pub fn run(name: &str) {
    let (_, f) = PROPERTIES.iter().find(|(n, _)| *n == name).expect("known property");
    f();
}
