mod common;

use common::{equal_power_grid, params, quotas_ok};
use noma_relay::chanmodel::{sample_fading, sample_topology, ChannelRealization, NetworkParams};
use noma_relay::matching::*;
use noma_relay::nomacore::{InterferenceForm, Matching, ThroughputState};
use proptest::prelude::*;

const PHYS: InterferenceForm = InterferenceForm::Physical;

fn draw(params: &NetworkParams, seed: u64) -> ChannelRealization {
    let topo = sample_topology(params, seed);
    sample_fading(&topo, params, seed ^ 0x5eed)
}

/// Unit noise, unit power and gain, so scores are plain numbers.
fn unit_game<'a>(ch: &'a ChannelRealization, state: &'a ThroughputState, params: &'a NetworkParams) -> MatchingGame<'a> {
    MatchingGame::new(ch, state, params, PHYS)
        .with_noise(1.0)
        .with_equal_power(1.0, 1.0)
}

fn state_with(t: &[f64]) -> ThroughputState {
    let mut s = ThroughputState::new(t.len());
    s.t_avg = t.to_vec();
    s
}

#[test]
fn static_prefs_match_a_plain_sort() {
    let params = params(4, 5, 2, 2);
    for seed in 0..20 {
        let ch = draw(&params, seed);
        let state = ThroughputState::new(4);
        let game = MatchingGame::new(&ch, &state, &params, PHYS);
        let sigma2 = game.model.sigma2;
        for m in 0..4 {
            let mut scored: Vec<(usize, f64)> = (0..5)
                .map(|k| {
                    let a = game.g0 * game.g0 * ch.f2[k][m];
                    (k, a * game.p0 * ch.h2[k][m] / (sigma2 + a * sigma2))
                })
                .collect();
            scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            let list = build_static_prefs(m, &ch, game.p0, game.g0, sigma2);
            assert_eq!(list.ranked, scored.iter().map(|e| e.0).collect::<Vec<_>>());
            for (s, e) in list.scores.iter().zip(&scored) {
                assert!((s - e.1).abs() <= 1e-12 * e.1);
            }
        }
    }
}

#[test]
fn stronger_h_ranks_first() {
    let ch = ChannelRealization::from_gains(vec![vec![1.0], vec![2.0]], vec![vec![1.0], vec![1.0]]);
    assert_eq!(build_static_prefs(0, &ch, 1.0, 1.0, 1.0).ranked, vec![1, 0]);
}

#[test]
fn dynamic_prefs_on_empty_matching_are_static() {
    let params = params(3, 4, 2, 2);
    let ch = draw(&params, 11);
    let state = ThroughputState::new(3);
    let game = MatchingGame::new(&ch, &state, &params, PHYS);
    let empty = Matching::empty(4, 3);
    for m in 0..3 {
        let d = build_dynamic_prefs(m, &game, &empty, &ForbiddenPairSet::new());
        let s = build_static_prefs(m, &ch, game.p0, game.g0, game.model.sigma2);
        assert_eq!(d.ranked, s.ranked);
    }
}

#[test]
fn forbidden_snapshot_drops_the_channel() {
    let params = params(3, 3, 2, 2);
    let ch = draw(&params, 5);
    let state = ThroughputState::new(3);
    let game = MatchingGame::new(&ch, &state, &params, PHYS);
    let mut mt = Matching::empty(3, 3);
    mt.insert(1, 2).unwrap();
    let mut f = ForbiddenPairSet::new();
    f.record(0, 1, &[2]);
    assert!(!f.record(0, 1, &[2]));
    let list = build_dynamic_prefs(0, &game, &mt, &f);
    assert!(!list.ranked.contains(&1));
    assert_eq!(list.len(), 2);
    // a different occupancy is not forbidden
    mt.insert(1, 1).unwrap();
    assert!(build_dynamic_prefs(0, &game, &mt, &f).ranked.contains(&1));
}

#[test]
fn stronger_occupant_lowers_the_score() {
    // pair 1 has the larger gamma on sub-channel 0 and is decoded ahead of pair 0
    let ch = ChannelRealization::from_gains(vec![vec![1.0, 4.0], vec![1.0, 1.0]], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    let params = params(2, 2, 2, 2);
    let state = ThroughputState::new(2);
    let game = unit_game(&ch, &state, &params);
    let grid = equal_power_grid(2, 2, 1.0, 1.0);
    let o = grid.oracle(&ch, 1.0, PHYS);
    let shared = game.shared_score(0, 0, &[1]);
    assert!((shared - o.score(0, 0, &[1])).abs() < 1e-12);
    assert!(shared < game.static_score(0, 0));
    assert!((game.static_score(0, 0) - o.score(0, 0, &[])).abs() < 1e-12);
}

#[test]
fn accept_keeps_the_best_drop_one_subset() {
    // three pairs competing for one sub-channel with q_u = 2
    let ch = ChannelRealization::from_gains(vec![vec![3.0, 1.5, 6.0]], vec![vec![2.0, 4.0, 1.0]]);
    let p = params(3, 1, 2, 1);
    let grid = equal_power_grid(1, 3, 1.0, 1.0);
    let o = grid.oracle(&ch, 1.0, PHYS);
    for t in [[0.5, 0.2, 1.0], [1.0, 1.0, 1.0], [0.05, 2.0, 0.3], [3.0, 0.01, 0.2]] {
        let state = state_with(&t);
        let game = unit_game(&ch, &state, &p);
        for proposer in 0..3 {
            let held: Vec<usize> = (0..3).filter(|&m| m != proposer).collect();
            let mt = Matching::from_phi(&[(0..3).map(|m| m != proposer).collect()]);
            let base = o.utility(0, &held, &t, p.t_c);
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for drop in 0..3 {
                let keep: Vec<usize> = (0..3).filter(|&m| m != drop).collect();
                let v = o.utility(0, &keep, &t, p.t_c);
                if v > best.1 {
                    best = (drop, v);
                }
            }
            let expected = if best.1 > base && best.0 != proposer {
                Decision::AcceptWithEviction(best.0)
            } else {
                Decision::Reject
            };
            assert_eq!(channel_accept(0, proposer, &mt, &game).unwrap(), expected, "t={t:?} proposer={proposer}");
        }
    }
}

#[test]
fn accept_on_empty_channel() {
    let ch = ChannelRealization::from_gains(vec![vec![1.0]], vec![vec![1.0]]);
    let p = params(1, 1, 1, 1);
    let state = ThroughputState::new(1);
    let game = unit_game(&ch, &state, &p);
    let mt = Matching::empty(1, 1);
    assert_eq!(channel_accept(0, 0, &mt, &game).unwrap(), Decision::Accept);
    let mut mt = mt;
    mt.insert(0, 0).unwrap();
    assert!(channel_accept(0, 0, &mt, &game).is_err());
}

#[test]
fn ssd_single_pair_examples() {
    let ch = ChannelRealization::from_gains(vec![vec![1.0]], vec![vec![1.0]]);
    let p = params(1, 1, 1, 1);
    let state = ThroughputState::new(1);
    let game = unit_game(&ch, &state, &p);
    let (mt, stats) = ssd_sma_default(&game).unwrap();
    assert!(mt.is_matched(0, 0));
    // one round with a proposal; the closing empty scan is not counted
    assert_eq!(stats.static_iterations, 1);
    assert_eq!(stats.proposals, 1);

    let ch = ChannelRealization::from_gains(vec![vec![1.0], vec![3.0]], vec![vec![1.0], vec![1.0]]);
    let p = params(1, 2, 1, 1);
    let game = unit_game(&ch, &state, &p);
    let (mt, _) = ssd_sma_default(&game).unwrap();
    assert_eq!(mt.channels(0), &[1]);
}

#[test]
fn ssd_small_instances_are_stable() {
    let p = params(3, 3, 2, 1);
    for seed in 0..200 {
        let ch = draw(&p, seed);
        let state = ThroughputState::new(3);
        let game = MatchingGame::new(&ch, &state, &p, PHYS);
        let out = ssd_sma_with_history(&game).unwrap();
        let r = static_stability_report(&out.matching, &game, &out.forbidden);
        assert!(r.is_stable(), "seed {seed}: {:?}", r.blocking);
    }
}

#[test]
fn dsd_equals_ssd_for_one_pair() {
    for k in 1..6 {
        let p = params(1, k, 2, 3);
        for seed in 0..10 {
            let ch = draw(&p, seed);
            let state = ThroughputState::new(1);
            let game = MatchingGame::new(&ch, &state, &p, PHYS);
            assert_eq!(dsd_sma(&game).unwrap().0, ssd_sma_default(&game).unwrap().0);
        }
    }
}

#[test]
fn admission_reorders_the_other_list() {
    // B (pair 1) prefers sub-channel 0 when alone; A (pair 0) is much stronger there
    let ch = ChannelRealization::from_gains(vec![vec![50.0, 3.0], vec![1.0, 2.0]], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    let p = params(2, 2, 2, 2);
    let state = ThroughputState::new(2);
    let game = unit_game(&ch, &state, &p);
    let grid = equal_power_grid(2, 2, 1.0, 1.0);
    let o = grid.oracle(&ch, 1.0, PHYS);
    let none = ForbiddenPairSet::new();

    let before = build_dynamic_prefs(1, &game, &Matching::empty(2, 2), &none);
    assert_eq!(before.ranked, vec![0, 1]);
    let mut mt = Matching::empty(2, 2);
    mt.insert(0, 0).unwrap();
    let after = build_dynamic_prefs(1, &game, &mt, &none);
    let (s0, s1) = (o.score(0, 1, &[0]), o.score(1, 1, &[]));
    assert!(s0 < s1);
    assert_eq!(after.ranked, vec![1, 0]);
    assert!((after.scores[1] - s0).abs() < 1e-12 && (after.scores[0] - s1).abs() < 1e-12);
}

/// Blocking-pair conditions evaluated one by one with the oracle.
fn blocking_by_hand(m: usize, k: usize, mt: &Matching, o: &common::Oracle<'_>, t: &[f64], p: &NetworkParams) -> bool {
    let cur: Vec<usize> = mt.users(k).to_vec();
    let base = o.utility(k, &cur, t, p.t_c);
    let mut grown = cur.clone();
    grown.push(m);
    grown.sort();
    let channel_gains = if grown.len() <= p.q_u {
        o.utility(k, &grown, t, p.t_c) > base
    } else {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for &d in &grown {
            let keep: Vec<usize> = grown.iter().copied().filter(|&x| x != d).collect();
            let v = o.utility(k, &keep, t, p.t_c);
            if v > best.1 {
                best = (d, v);
            }
        }
        best.1 > base && best.0 != m
    };
    let score = o.score(k, m, &cur);
    let held = mt.channels(m);
    let prefers = held.iter().any(|&kk| o.score(kk, m, mt.users(kk)) < score);
    let spare = held.len() < p.q_l && score > 0.0;
    channel_gains && (prefers || spare)
}

#[test]
fn blocking_pair_truth_table() {
    let gains = [
        (vec![vec![1.0, 4.0], vec![2.0, 0.5]], vec![vec![1.0, 1.0], vec![3.0, 1.0]]),
        (vec![vec![5.0, 5.0], vec![0.2, 8.0]], vec![vec![0.5, 2.0], vec![1.0, 1.0]]),
    ];
    let mut seen = [0usize; 2];
    for (h2, f2) in gains {
        let ch = ChannelRealization::from_gains(h2, f2);
        let grid = equal_power_grid(2, 2, 1.0, 1.0);
        let o = grid.oracle(&ch, 1.0, PHYS);
        for (q_u, q_l) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            let p = params(2, 2, q_u, q_l);
            for t in [[1.0, 1.0], [0.1, 2.0]] {
                let state = state_with(&t);
                let game = unit_game(&ch, &state, &p);
                for bits in 0u8..16 {
                    let phi: Vec<Vec<bool>> = (0..2).map(|k| (0..2).map(|m| bits >> (2 * k + m) & 1 == 1).collect()).collect();
                    let mt = Matching::from_phi(&phi);
                    if !quotas_ok(&mt, q_u, q_l) {
                        continue;
                    }
                    for k in 0..2 {
                        for m in (0..2).filter(|&m| !mt.is_matched(k, m)) {
                            let want = blocking_by_hand(m, k, &mt, &o, &t, &p);
                            assert_eq!(is_blocking_pair(m, k, &mt, &game).unwrap(), want, "phi={phi:?} m={m} k={k}");
                            seen[want as usize] += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(seen[0] > 0 && seen[1] > 0);
}

#[test]
fn blocking_pair_simple_cases() {
    let ch = ChannelRealization::from_gains(vec![vec![1.0], vec![4.0]], vec![vec![1.0], vec![1.0]]);
    let p = params(1, 2, 1, 1);
    let state = ThroughputState::new(1);
    let game = unit_game(&ch, &state, &p);
    assert!(is_blocking_pair(0, 0, &Matching::empty(2, 1), &game).unwrap());
    // at quota on the better sub-channel
    let mt = Matching::from_phi(&[vec![false], vec![true]]);
    assert!(!is_blocking_pair(0, 0, &mt, &game).unwrap());
    assert!(is_blocking_pair(0, 1, &mt, &game).is_err());
}

#[test]
fn corrupted_matchings_get_blocked() {
    let p = params(4, 3, 2, 2);
    let mut hits = 0;
    for seed in 0..100 {
        let ch = draw(&p, seed);
        let state = ThroughputState::new(4);
        let game = MatchingGame::new(&ch, &state, &p, PHYS);
        let (mut mt, _) = dsd_sma(&game).unwrap();
        // move the first link of the first scheduled pair to another sub-channel
        let Some(m) = (0..4).find(|&m| !mt.channels(m).is_empty()) else { continue };
        let k = mt.channels(m)[0];
        mt.remove(k, m).unwrap();
        if let Some(k2) = (0..3).find(|&k2| k2 != k && !mt.is_matched(k2, m) && mt.users(k2).len() < p.q_u) {
            mt.insert(k2, m).unwrap();
        }
        if !find_blocking_pairs(&mt, &game).is_empty() {
            hits += 1;
        }
    }
    assert!(hits > 0);
}

#[test]
fn dsd_outputs_are_stable_and_bounded() {
    for n in 2..=6 {
        let p = params(n, 3, 2, 2);
        let bound = dsd_proposal_bound(n, 3, 2).unwrap();
        for seed in 0..50 {
            let ch = draw(&p, seed);
            let state = ThroughputState::new(n);
            let game = MatchingGame::new(&ch, &state, &p, PHYS);
            let out = dsd_sma_with_history(&game).unwrap();
            assert!(stability_report(&out.matching, &game, Some(&out.forbidden)).is_stable());
            assert!(out.stats.proposals as u128 <= bound);
        }
    }
}

#[test]
fn proposal_bound_values() {
    // K q_u + K N (C(N-1,1) + C(N-1,2))
    assert_eq!(dsd_proposal_bound(4, 3, 2), Some(6 + 12 * (3 + 3)));
    assert_eq!(dsd_proposal_bound(1, 3, 2), Some(6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quotas_and_determinism(seed in any::<u64>(), n in 1usize..8, k in 1usize..5, q_u in 1usize..4, q_l in 1usize..4, lit in any::<bool>()) {
        let p = params(n, k, q_u, q_l);
        let ch = draw(&p, seed);
        let state = ThroughputState::new(n);
        let form = if lit { InterferenceForm::Literal } else { PHYS };
        let game = MatchingGame::new(&ch, &state, &p, form);
        let (a, sa) = ssd_sma_default(&game).unwrap();
        let (b, sb) = dsd_sma(&game).unwrap();
        prop_assert!(quotas_ok(&a, q_u, q_l));
        prop_assert!(quotas_ok(&b, q_u, q_l));
        prop_assert!(sa.proposals <= n * k);
        prop_assert!(sa.proposals >= sa.accepted && sb.proposals >= sb.accepted);
        let (a2, sa2) = ssd_sma_default(&game).unwrap();
        let (b2, sb2) = dsd_sma(&game).unwrap();
        prop_assert_eq!(a, a2);
        prop_assert_eq!(b, b2);
        prop_assert_eq!((sa.proposals, sa.static_iterations, sa.accepted, sa.evictions),
                        (sa2.proposals, sa2.static_iterations, sa2.accepted, sa2.evictions));
        prop_assert_eq!((sb.proposals, sb.ssd_rounds, sb.accepted, sb.evictions),
                        (sb2.proposals, sb2.ssd_rounds, sb2.accepted, sb2.evictions));
    }

    #[test]
    fn prefs_are_sorted(seed in any::<u64>(), k in 1usize..8) {
        let p = params(2, k, 2, 2);
        let ch = draw(&p, seed);
        let list = build_static_prefs(0, &ch, 1.0, 1.0, 1e-15);
        let mut seen = list.ranked.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), k);
        for w in 0..list.len().saturating_sub(1) {
            let (a, b) = (list.scores[w], list.scores[w + 1]);
            prop_assert!(a > b || (a == b && list.ranked[w] < list.ranked[w + 1]));
        }
    }
}
