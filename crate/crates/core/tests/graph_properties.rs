use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proxigraph_core::graph::{
    detect_clusters, propagate_risk, trace_contacts, ContactMultiGraph, Infection, RiskParams, RiskTier, TimeWindow,
    MS_PER_DAY,
};
use proxigraph_core::{Ambience, AssociateHash, Closeness, ProximityEvent};
use proxigraph_testkit::{best_paths, clusters_oracle, risk_oracle, trace_oracle, GraphFixture, HOUR_MS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(seed: u64) -> (GraphFixture, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = GraphFixture::random(&mut rng, 12, 30);
    (f, rng)
}

fn random_params(rng: &mut ChaCha8Rng) -> RiskParams {
    RiskParams { beta_hop: rng.random_range(0.2..=1.0), max_levels: rng.random_range(1..=4), ..RiskParams::default() }
}

fn random_window(rng: &mut ChaCha8Rng) -> TimeWindow {
    if rng.random_bool(0.3) {
        return TimeWindow::ALL;
    }
    let a = rng.random_range(0..24) * 12 * HOUR_MS;
    let b = rng.random_range(0..24) * 12 * HOUR_MS;
    TimeWindow::new(a.min(b), a.max(b)).unwrap()
}

fn live_sources(g: &ContactMultiGraph, p: &RiskParams, now: i64) -> Vec<(AssociateHash, i64)> {
    g.nodes()
        .filter_map(|n| match n.infection {
            Infection::Reported { report_ms } if now - report_ms <= p.window_ms() => Some((n.associate_hash, report_ms)),
            _ => None,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_equals_path_enumeration(seed in any::<u64>()) {
        let (f, mut rng) = fixture(seed);
        let g = f.build();
        let source = f.nodes[rng.random_range(0..f.nodes.len())];
        let levels = rng.random_range(1..=4);
        let window = random_window(&mut rng);
        let got = trace_contacts(&g, &source, levels, window).unwrap();
        let mut flat = BTreeMap::new();
        for (k, level) in got.levels.iter().enumerate() {
            for e in level {
                flat.insert(e.associate_hash, (k, e.via_edge_ids.iter().copied().collect::<BTreeSet<_>>()));
            }
        }
        prop_assert_eq!(flat, trace_oracle(&g, source, levels, window));
    }

    #[test]
    fn risk_equals_exhaustive_paths(seed in any::<u64>()) {
        let (f, mut rng) = fixture(seed);
        let g = f.build();
        let p = random_params(&mut rng);
        let got = propagate_risk(&g, &p, f.now_ms);
        let want = risk_oracle(&g, &p, f.now_ms);
        prop_assert_eq!(got.len(), want.len());
        for (h, a) in &got {
            prop_assert!((a.score - want[h]).abs() <= 1e-9, "{} vs {}", a.score, want[h]);
            prop_assert_eq!(a.tier, RiskTier::from_score(a.score, &p));
        }
    }

    #[test]
    fn clusters_equal_quick_find(seed in any::<u64>()) {
        let (f, mut rng) = fixture(seed);
        let g = f.build();
        let p = RiskParams::default();
        let risk = propagate_risk(&g, &p, f.now_ms);
        let min_weight = [0.0, 0.1, 0.3, 0.6][rng.random_range(0..4)];
        let min_size = rng.random_range(1..=4);
        prop_assert_eq!(detect_clusters(&g, &risk, &p, min_weight, min_size), clusters_oracle(&g, &risk, &p, min_weight, min_size));
    }

    #[test]
    fn adding_an_edge_never_lowers_a_score(seed in any::<u64>()) {
        let (f, mut rng) = fixture(seed);
        prop_assume!(f.nodes.len() >= 2);
        let p = RiskParams::default();
        let before = propagate_risk(&f.build(), &p, f.now_ms);
        let mut g = f.build();
        let a = f.nodes[rng.random_range(0..f.nodes.len())];
        let b = *f.nodes.iter().find(|&&h| h != a).unwrap();
        let start = rng.random_range(0..24) * 12 * HOUR_MS;
        g.add_contact_event(&ProximityEvent::new(a, b, start, start + 600_000, Closeness::Near, 0.9, Ambience::Crowded)).unwrap();
        let after = propagate_risk(&g, &p, f.now_ms);
        for (h, x) in &before {
            prop_assert!(after[h].score >= x.score);
        }
    }

    #[test]
    fn score_bounded_by_level_and_reachable(seed in any::<u64>()) {
        let (f, mut rng) = fixture(seed);
        let g = f.build();
        let p = random_params(&mut rng);
        let risk = propagate_risk(&g, &p, f.now_ms);
        let sources = live_sources(&g, &p, f.now_ms);
        let window = match sources.iter().map(|s| s.1).min() {
            Some(earliest) => TimeWindow::new(earliest - p.window_ms(), f.now_ms).unwrap(),
            None => TimeWindow::ALL,
        };
        let mut min_level: BTreeMap<AssociateHash, usize> = BTreeMap::new();
        for (s, _) in &sources {
            let t = trace_contacts(&g, s, p.max_levels, window).unwrap();
            for (k, level) in t.levels.iter().enumerate() {
                for e in level {
                    let slot = min_level.entry(e.associate_hash).or_insert(k);
                    *slot = (*slot).min(k);
                }
            }
        }
        for (h, a) in &risk {
            prop_assert!((0.0..=1.0).contains(&a.score));
            if a.score > 0.0 {
                let level = min_level.get(h);
                prop_assert!(level.is_some(), "positive score but not traced");
                prop_assert!(a.score <= p.beta_hop.powi(*level.unwrap() as i32) + 1e-12);
            }
        }
    }

    #[test]
    fn arrival_order_is_irrelevant(seed in any::<u64>()) {
        let (f, mut rng) = fixture(seed);
        let mut shuffled = f.events.clone();
        shuffled.shuffle(&mut rng);
        let (g1, g2) = (f.build(), f.build_from(&shuffled));
        prop_assert_eq!(g1.content_digest(), g2.content_digest());
        let p = RiskParams::default();
        let (r1, r2) = (propagate_risk(&g1, &p, f.now_ms), propagate_risk(&g2, &p, f.now_ms));
        prop_assert_eq!(&r1, &r2);
        prop_assert_eq!(detect_clusters(&g1, &r1, &p, 0.2, 2), detect_clusters(&g2, &r2, &p, 0.2, 2));
        if let Some(&s) = f.nodes.first() {
            let level_sets = |g: &ContactMultiGraph| {
                trace_contacts(g, &s, 3, TimeWindow::ALL).unwrap().levels.iter()
                    .map(|l| l.iter().map(|e| e.associate_hash).collect::<Vec<_>>()).collect::<Vec<_>>()
            };
            prop_assert_eq!(level_sets(&g1), level_sets(&g2));
        }
    }

    /// Lowering beta scales a path of length L by c^L, so two nodes whose best
    /// paths have the same length before and after keep their order.
    #[test]
    fn beta_scaling_keeps_equal_length_order(seed in any::<u64>(), c in 0.1f64..=1.0) {
        let (f, _) = fixture(seed);
        let g = f.build();
        let p = RiskParams::default();
        let q = RiskParams { beta_hop: p.beta_hop * c, ..p };
        let (r1, r2) = (propagate_risk(&g, &p, f.now_ms), propagate_risk(&g, &q, f.now_ms));
        let (b1, b2) = (best_paths(&g, &p, f.now_ms), best_paths(&g, &q, f.now_ms));
        for u in &f.nodes {
            for v in &f.nodes {
                let len = b1[u].1;
                if len == 0 || b1[v].1 != len || b2[u].1 != len || b2[v].1 != len {
                    continue;
                }
                prop_assert_eq!(r1[u].score.total_cmp(&r1[v].score), r2[u].score.total_cmp(&r2[v].score));
            }
        }
    }
}

#[test]
fn stale_reports_produce_no_risk() {
    let (f, _) = fixture(99);
    let mut g = f.build();
    for h in &f.nodes {
        g.set_infection(h, Infection::Reported { report_ms: f.now_ms - 30 * MS_PER_DAY }).unwrap();
    }
    assert!(propagate_risk(&g, &RiskParams::default(), f.now_ms).values().all(|a| a.score == 0.0));
}
