//! Many-to-many matching between SD pairs and sub-channels with co-channel
//! externalities.
//!
//! Pairs rank sub-channels by their own SINR term; a sub-channel ranks sets of
//! pairs by the proportional-fair metric `F_k`, both evaluated under the equal
//! power split `(p0, g0)`. [`ssd_sma`] runs proposal rounds against fixed
//! preference lists. [`dsd_sma`] repeats those rounds, rebuilding the lists
//! from the current matching each time and remembering which occupancies of a
//! sub-channel already turned a pair down.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::chanmodel::{noise_power, ChannelRealization, NetworkParams};
use crate::error::{Error, Result};
use crate::nomacore::{InterferenceForm, Matching, RateModel, ThroughputState};
use crate::power::equal_power;

/// Everything a matching run reads: one slot of fading, the throughput
/// history, the quotas and the equal-power operating point.
#[derive(Debug, Clone, Copy)]
pub struct MatchingGame<'a> {
    pub ch: &'a ChannelRealization,
    pub state: &'a ThroughputState,
    pub params: &'a NetworkParams,
    pub model: RateModel,
    pub p0: f64,
    pub g0: f64,
}

impl<'a> MatchingGame<'a> {
    pub fn new(
        ch: &'a ChannelRealization,
        state: &'a ThroughputState,
        params: &'a NetworkParams,
        form: InterferenceForm,
    ) -> Self {
        let (p0, g0) = equal_power(params);
        MatchingGame {
            ch,
            state,
            params,
            model: RateModel::new(noise_power(params), form),
            p0,
            g0,
        }
    }

    pub fn with_equal_power(mut self, p0: f64, g0: f64) -> Self {
        self.p0 = p0;
        self.g0 = g0;
        self
    }

    pub fn with_noise(mut self, sigma2: f64) -> Self {
        self.model.sigma2 = sigma2;
        self
    }

    pub fn n_pairs(&self) -> usize {
        self.ch.n_pairs()
    }

    pub fn n_subchannels(&self) -> usize {
        self.ch.n_subchannels()
    }

    /// Equal-power rates of `users` (ascending) sharing sub-channel `k`.
    pub fn rates(&self, k: usize, users: &[usize]) -> Vec<f64> {
        let p0 = self.p0;
        self.model.channel_links(k, users, |_| p0, self.g0, self.ch).rate
    }

    /// `ln F_k(users)` under equal power.
    pub fn log_utility(&self, k: usize, users: &[usize]) -> f64 {
        let rates = self.rates(k, users);
        crate::nomacore::log_pf_metric(users, &rates, self.state, self.params.t_c)
    }

    /// `F_k(users)` under equal power.
    pub fn utility(&self, k: usize, users: &[usize]) -> f64 {
        self.log_utility(k, users).exp()
    }

    /// Sum of `F_k` over all sub-channels.
    pub fn objective(&self, matching: &Matching) -> f64 {
        (0..self.n_subchannels())
            .map(|k| self.utility(k, matching.users(k)))
            .sum()
    }

    /// Interference-free SINR term of pair `m` on sub-channel `k`.
    pub fn static_score(&self, k: usize, m: usize) -> f64 {
        static_score(k, m, self.ch, self.p0, self.g0, self.model.sigma2)
    }

    /// SINR term of pair `m` on sub-channel `k` when sharing it with `others`
    /// (which may or may not already contain `m`).
    pub fn shared_score(&self, k: usize, m: usize, others: &[usize]) -> f64 {
        let with_m = with_member(others, m);
        let pos = with_m.binary_search(&m).expect("m was inserted");
        let p0 = self.p0;
        let links = self.model.channel_links(k, &with_m, |_| p0, self.g0, self.ch);
        let g2f2 = self.g0 * self.g0 * self.ch.f2[k][m];
        let sigma2 = self.model.sigma2;
        g2f2 * p0 * self.ch.h2[k][m] / (sigma2 + g2f2 * sigma2 + links.interference[pos])
    }
}

fn with_member(set: &[usize], m: usize) -> Vec<usize> {
    let mut v = set.to_vec();
    if let Err(pos) = v.binary_search(&m) {
        v.insert(pos, m);
    }
    v
}

fn without_member(set: &[usize], m: usize) -> Vec<usize> {
    set.iter().copied().filter(|&x| x != m).collect()
}

fn static_score(k: usize, m: usize, ch: &ChannelRealization, p0: f64, g0: f64, sigma2: f64) -> f64 {
    let g2f2 = g0 * g0 * ch.f2[k][m];
    g2f2 * p0 * ch.h2[k][m] / (sigma2 + g2f2 * sigma2)
}

/// A pair's ranking of sub-channels, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceList {
    pub owner: usize,
    pub ranked: Vec<usize>,
    pub scores: Vec<f64>,
}

impl PreferenceList {
    /// Sorts `(channel, score)` entries descending by score, ties by ascending channel.
    pub fn from_scores(owner: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (ranked, scores) = entries.into_iter().unzip();
        PreferenceList { owner, ranked, scores }
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }
}

/// Static list of pair `m`: every sub-channel ranked by its interference-free SINR term.
pub fn build_static_prefs(m: usize, ch: &ChannelRealization, p0: f64, g0: f64, sigma2: f64) -> PreferenceList {
    let entries = (0..ch.n_subchannels())
        .map(|k| (k, static_score(k, m, ch, p0, g0, sigma2)))
        .collect();
    PreferenceList::from_scores(m, entries)
}

/// Dynamic list of pair `m`: sub-channels not yet held by `m`, scored against
/// their current occupants, minus those whose occupancy already refused `m`.
pub fn build_dynamic_prefs(
    m: usize,
    game: &MatchingGame<'_>,
    matching: &Matching,
    forbidden: &ForbiddenPairSet,
) -> PreferenceList {
    let entries = (0..game.n_subchannels())
        .filter(|&k| !matching.is_matched(k, m))
        .filter(|&k| !forbidden.contains(m, k, matching.users(k)))
        .map(|k| (k, game.shared_score(k, m, matching.users(k))))
        .collect();
    PreferenceList::from_scores(m, entries)
}

/// Occupancies of a sub-channel under which a pair was turned down.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForbiddenPairSet {
    entries: BTreeMap<(usize, usize), BTreeSet<Vec<usize>>>,
}

impl ForbiddenPairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records that pair `m` is refused by sub-channel `k` while `k` holds
    /// `snapshot` (ascending, without `m`). Returns whether it was new.
    pub fn record(&mut self, m: usize, k: usize, snapshot: &[usize]) -> bool {
        assert!(!snapshot.contains(&m), "snapshot for pair {m} must not contain it");
        self.entries.entry((m, k)).or_default().insert(snapshot.to_vec())
    }

    pub fn contains(&self, m: usize, k: usize, snapshot: &[usize]) -> bool {
        self.entries.get(&(m, k)).is_some_and(|s| s.contains(snapshot))
    }

    /// Snapshots recorded for `(m, k)`.
    pub fn snapshots(&self, m: usize, k: usize) -> impl Iterator<Item = &[usize]> {
        self.entries.get(&(m, k)).into_iter().flatten().map(Vec::as_slice)
    }

    /// Whether `k` has turned `m` down under any occupancy.
    pub fn refused(&self, m: usize, k: usize) -> bool {
        self.entries.get(&(m, k)).is_some_and(|s| !s.is_empty())
    }

    /// Total number of recorded snapshots.
    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct MatchStats {
    pub proposals: usize,
    /// Proposal rounds in which at least one pair proposed.
    pub static_iterations: usize,
    /// Preference-rebuild rounds (1 for the static algorithm).
    pub ssd_rounds: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub evictions: usize,
    /// Sub-channels given up by a pair at quota after a better one accepted it.
    pub swaps: usize,
    /// Trades by a pair at quota dropped because they would lower `sum_k F_k`.
    pub withdrawn: usize,
    pub wall_time: Duration,
}

/// A sub-channel's answer to one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    AcceptWithEviction(usize),
    Reject,
}

/// Answers a proposal of `proposer` to sub-channel `k`.
///
/// Below quota the proposer is admitted iff `F_k` strictly grows. At quota the
/// sub-channel compares every drop-one subset of `U_k + {proposer}` and keeps
/// the best, provided it strictly beats the current occupancy; ties keep the
/// lowest dropped index.
pub fn channel_accept(k: usize, proposer: usize, matching: &Matching, game: &MatchingGame<'_>) -> Result<Decision> {
    if matching.is_matched(k, proposer) {
        return Err(Error::AlreadyMatched { k, m: proposer });
    }
    let current = matching.users(k);
    let base = game.log_utility(k, current);
    let grown = with_member(current, proposer);
    if grown.len() <= game.params.q_u {
        return Ok(if game.log_utility(k, &grown) > base {
            Decision::Accept
        } else {
            Decision::Reject
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for &drop in &grown {
        let value = game.log_utility(k, &without_member(&grown, drop));
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((drop, value));
        }
    }
    let (drop, value) = best.expect("grown set is non-empty");
    Ok(if value > base && drop != proposer {
        Decision::AcceptWithEviction(drop)
    } else {
        Decision::Reject
    })
}

fn apply(matching: &mut Matching, k: usize, m: usize, decision: Decision) -> Result<()> {
    if let Decision::AcceptWithEviction(evicted) = decision {
        matching.remove(k, evicted)?;
    }
    matching.insert(k, m)
}

/// Held sub-channel of `m` with the lowest shared score, ignoring `except`.
fn worst_held(m: usize, matching: &Matching, game: &MatchingGame<'_>, except: Option<usize>) -> Option<(usize, f64)> {
    let mut worst: Option<(usize, f64)> = None;
    for &k in matching.channels(m).iter().filter(|&&k| Some(k) != except) {
        let s = game.shared_score(k, m, matching.users(k));
        if worst.is_none_or(|(_, w)| s < w) {
            worst = Some((k, s));
        }
    }
    worst
}

/// Proposal rounds against fixed lists, continuing from `matching`.
///
/// With `forbidden` present (the dynamic algorithm) every refusal and eviction
/// is recorded, and a pair skips list entries whose current occupancy is
/// already on record for it.
///
/// With `swap` set, a pair at its quota also proposes when the head of its list
/// now scores above its worst held sub-channel, and gives that one up once
/// accepted, provided the trade raises `sum_k F_k`. A trade that would not is
/// recorded like a refusal.
fn run_static_rounds(
    game: &MatchingGame<'_>,
    matching: &mut Matching,
    prefs: &[PreferenceList],
    mut forbidden: Option<&mut ForbiddenPairSet>,
    swap: bool,
    stats: &mut MatchStats,
) -> Result<usize> {
    let n = game.n_pairs();
    let k_count = game.n_subchannels();
    let q_l = game.params.q_l;
    let mut cursor = vec![0usize; n];
    let mut rounds = 0;
    loop {
        let mut proposals: Vec<Vec<usize>> = vec![Vec::new(); k_count];
        let mut any = false;
        for m in 0..n {
            let full = matching.channels(m).len() >= q_l;
            if full && !swap {
                continue;
            }
            let list = &prefs[m].ranked;
            while cursor[m] < list.len() {
                let k = list[cursor[m]];
                if matching.is_matched(k, m)
                    || forbidden.as_deref().is_some_and(|f| f.contains(m, k, matching.users(k)))
                {
                    cursor[m] += 1;
                    continue;
                }
                if full {
                    let (_, worst) = worst_held(m, matching, game, None).expect("q_l >= 1");
                    if game.shared_score(k, m, matching.users(k)) <= worst {
                        break;
                    }
                }
                cursor[m] += 1;
                proposals[k].push(m);
                stats.proposals += 1;
                any = true;
                break;
            }
        }
        if !any {
            break;
        }
        rounds += 1;
        stats.static_iterations += 1;

        for (k, proposers) in proposals.iter().enumerate() {
            for &m in proposers {
                let before = game.log_utility(k, matching.users(k));
                let mut decision = channel_accept(k, m, matching, game)?;
                let mut trial = None;
                if decision != Decision::Reject && matching.channels(m).len() >= q_l {
                    // a pair at quota trades its worst sub-channel; only moves
                    // that raise sum_k F_k go through, which rules out cycles
                    let mut t = matching.clone();
                    apply(&mut t, k, m, decision)?;
                    let (l, _) = worst_held(m, &t, game, Some(k)).expect("over quota");
                    t.remove(l, m)?;
                    if game.objective(&t) > game.objective(matching) {
                        trial = Some(t);
                    } else {
                        decision = Decision::Reject;
                        stats.withdrawn += 1;
                    }
                }
                match decision {
                    Decision::Reject => {
                        stats.rejected += 1;
                        if let Some(f) = forbidden.as_deref_mut() {
                            f.record(m, k, matching.users(k));
                        }
                    }
                    _ => {
                        match trial {
                            Some(t) => {
                                *matching = t;
                                stats.swaps += 1;
                            }
                            None => apply(matching, k, m, decision)?,
                        }
                        stats.accepted += 1;
                        if let Decision::AcceptWithEviction(evicted) = decision {
                            stats.evictions += 1;
                            if let Some(f) = forbidden.as_deref_mut() {
                                f.record(evicted, k, matching.users(k));
                            }
                        }
                    }
                }
                debug_assert!(game.log_utility(k, matching.users(k)) >= before);
            }
        }
    }
    Ok(rounds)
}

/// Static matching from an empty assignment using the supplied lists.
pub fn ssd_sma(
    game: &MatchingGame<'_>,
    prefs: &[PreferenceList],
    forbidden: Option<&mut ForbiddenPairSet>,
) -> Result<(Matching, MatchStats)> {
    let start = Instant::now();
    let mut matching = Matching::empty(game.n_subchannels(), game.n_pairs());
    let mut stats = MatchStats {
        ssd_rounds: 1,
        ..MatchStats::default()
    };
    run_static_rounds(game, &mut matching, prefs, forbidden, false, &mut stats)?;
    stats.wall_time = start.elapsed();
    let (n, k_count) = (game.n_pairs(), game.n_subchannels());
    assert!(stats.proposals <= n * k_count, "proposals exceed N*K");
    Ok((matching, stats))
}

fn static_prefs(game: &MatchingGame<'_>) -> Vec<PreferenceList> {
    (0..game.n_pairs())
        .map(|m| build_static_prefs(m, game.ch, game.p0, game.g0, game.model.sigma2))
        .collect()
}

/// Static lists for all pairs followed by [`ssd_sma`].
pub fn ssd_sma_default(game: &MatchingGame<'_>) -> Result<(Matching, MatchStats)> {
    ssd_sma(game, &static_prefs(game), None)
}

/// [`ssd_sma_default`] keeping every refusal and eviction.
pub fn ssd_sma_with_history(game: &MatchingGame<'_>) -> Result<MatchOutcome> {
    let mut forbidden = ForbiddenPairSet::new();
    let (matching, stats) = ssd_sma(game, &static_prefs(game), Some(&mut forbidden))?;
    Ok(MatchOutcome {
        matching,
        stats,
        forbidden,
    })
}

/// A matching with the refusal history that produced it.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub matching: Matching,
    pub stats: MatchStats,
    pub forbidden: ForbiddenPairSet,
}

pub fn dsd_sma_with_history(game: &MatchingGame<'_>) -> Result<MatchOutcome> {
    let start = Instant::now();
    let n = game.n_pairs();
    let mut matching = Matching::empty(game.n_subchannels(), n);
    let mut forbidden = ForbiddenPairSet::new();
    let mut stats = MatchStats::default();
    loop {
        stats.ssd_rounds += 1;
        let prefs: Vec<_> = (0..n)
            .map(|m| build_dynamic_prefs(m, game, &matching, &forbidden))
            .collect();
        let rounds = run_static_rounds(game, &mut matching, &prefs, Some(&mut forbidden), true, &mut stats)?;
        if rounds == 0 {
            break;
        }
    }
    stats.wall_time = start.elapsed();
    Ok(MatchOutcome {
        matching,
        stats,
        forbidden,
    })
}

pub fn dsd_sma(game: &MatchingGame<'_>) -> Result<(Matching, MatchStats)> {
    dsd_sma_with_history(game).map(|o| (o.matching, o.stats))
}

/// `K q_u + K N sum_{j=1..q_u} C(N-1, j)`, the proposal ceiling of the dynamic
/// algorithm. `None` on overflow.
pub fn dsd_proposal_bound(n_pairs: usize, n_subchannels: usize, q_u: usize) -> Option<u128> {
    let n1 = n_pairs.saturating_sub(1) as u128;
    let mut binom: u128 = 1;
    let mut sum: u128 = 0;
    for j in 1..=q_u as u128 {
        if j > n1 {
            break;
        }
        binom = binom.checked_mul(n1 - j + 1)? / j;
        sum = sum.checked_add(binom)?;
    }
    let k = n_subchannels as u128;
    (k * q_u as u128).checked_add(k.checked_mul(n_pairs as u128)?.checked_mul(sum)?)
}

/// How a pair ranks sub-channels when judging a blocking pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PairPreference {
    /// Interference-free score, the fixed lists of the static algorithm.
    Static,
    /// Score against the current occupants, as in the dynamic lists.
    #[default]
    Shared,
}

impl MatchingGame<'_> {
    pub fn pair_score(&self, pref: PairPreference, k: usize, m: usize, occupants: &[usize]) -> f64 {
        match pref {
            PairPreference::Static => self.static_score(k, m),
            PairPreference::Shared => self.shared_score(k, m, occupants),
        }
    }
}

/// Whether unmatched `(m, k)` blocks `matching`: the sub-channel would admit
/// `m` (evicting one occupant if full) with a strict gain, and `m` either has
/// spare quota and a positive score on `k`, or scores `k` strictly above one of
/// its current sub-channels.
pub fn is_blocking_pair(m: usize, k: usize, matching: &Matching, game: &MatchingGame<'_>) -> Result<bool> {
    is_blocking_pair_with(m, k, matching, game, PairPreference::Shared)
}

pub fn is_blocking_pair_with(
    m: usize,
    k: usize,
    matching: &Matching,
    game: &MatchingGame<'_>,
    pref: PairPreference,
) -> Result<bool> {
    if matching.is_matched(k, m) {
        return Err(Error::AlreadyMatched { k, m });
    }
    if channel_accept(k, m, matching, game)? == Decision::Reject {
        return Ok(false);
    }
    let score = game.pair_score(pref, k, m, matching.users(k));
    let held = matching.channels(m);
    if held.len() < game.params.q_l && score > 0.0 {
        return Ok(true);
    }
    Ok(held
        .iter()
        .any(|&kk| game.pair_score(pref, kk, m, matching.users(kk)) < score))
}

/// Every blocking `(pair, sub-channel)`; empty certifies pairwise stability.
pub fn find_blocking_pairs(matching: &Matching, game: &MatchingGame<'_>) -> Vec<(usize, usize)> {
    find_blocking_pairs_with(matching, game, PairPreference::Shared)
}

pub fn find_blocking_pairs_with(matching: &Matching, game: &MatchingGame<'_>, pref: PairPreference) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for m in 0..game.n_pairs() {
        for k in 0..game.n_subchannels() {
            if !matching.is_matched(k, m) && is_blocking_pair_with(m, k, matching, game, pref).unwrap_or(false) {
                out.push((m, k));
            }
        }
    }
    out
}

/// Blocking pairs split by whether the refusal history explains them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StabilityReport {
    pub blocking: Vec<(usize, usize)>,
    /// Blocking pairs whose current sub-channel occupancy is on record as having refused the pair.
    pub forbidden_excluded: Vec<(usize, usize)>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.blocking.is_empty()
    }
}

pub fn stability_report(
    matching: &Matching,
    game: &MatchingGame<'_>,
    forbidden: Option<&ForbiddenPairSet>,
) -> StabilityReport {
    let mut report = StabilityReport::default();
    for (m, k) in find_blocking_pairs(matching, game) {
        if forbidden.is_some_and(|f| f.contains(m, k, matching.users(k))) {
            report.forbidden_excluded.push((m, k));
        } else {
            report.blocking.push((m, k));
        }
    }
    report
}

/// Stability of a static-algorithm output against the static lists. A blocking
/// pair whose sub-channel already turned the pair down is no longer on the
/// pair's list and is reported as excluded.
pub fn static_stability_report(matching: &Matching, game: &MatchingGame<'_>, refusals: &ForbiddenPairSet) -> StabilityReport {
    let mut report = StabilityReport::default();
    for (m, k) in find_blocking_pairs_with(matching, game, PairPreference::Static) {
        if refusals.refused(m, k) {
            report.forbidden_excluded.push((m, k));
        } else {
            report.blocking.push((m, k));
        }
    }
    report
}
