//! Self-checks behind the `verify` subcommand: stability scans, quota and
//! budget checks, water-filling optimality conditions and oracle comparisons.

use std::fmt;

use crate::chanmodel::{noise_power, sample_fading, sample_topology, NetworkParams};
use crate::error::Result;
use crate::matching::{dsd_proposal_bound, MatchingGame};
use crate::nomacore::{InterferenceForm, Matching, ThroughputState};
use crate::power::{allocate, waterfill_levels};

use super::{check_power, derive_seed, run_scheme, Scheme};

const REL_TOL: f64 = 1e-9;
const STREAM_VERIFY: u64 = 0x7665_7269;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub runs: usize,
    pub failures: Vec<String>,
}

impl Check {
    fn new(name: &str) -> Self {
        Check {
            name: name.to_string(),
            runs: 0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.runs += 1;
        if !ok {
            self.failures.push(detail());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} ({} runs", self.name, self.runs)?;
        if let Some(first) = self.failures.first() {
            write!(f, ", {} failed, first: {first}", self.failures.len())?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Worst violation of the water-filling conditions: budget, equal level on
/// active channels and no inactive channel below the level. Relative units.
pub fn kkt_violation(inv_snr: &[f64], budget: f64, p: &[f64], level: f64) -> f64 {
    let spent: f64 = p.iter().sum();
    let mut worst = ((spent - budget) / budget).abs();
    for (&n, &pi) in inv_snr.iter().zip(p) {
        if pi < 0.0 {
            return f64::INFINITY;
        }
        if pi > 0.0 {
            worst = worst.max(((pi + n) - level).abs() / level);
        } else if n.is_finite() {
            worst = worst.max((level - n).max(0.0) / level);
        }
    }
    worst
}

fn check_waterfill(matching: &Matching, game: &MatchingGame<'_>, check: &mut Check) {
    let p_sn = game.params.p_sn_watts();
    for m in 0..matching.n_pairs() {
        let w = matching.channels(m);
        if w.is_empty() {
            continue;
        }
        let inv: Vec<f64> = w.iter().map(|&k| game.model.sigma2 / game.ch.h2[k][m]).collect();
        match waterfill_levels(&inv, p_sn) {
            Some((p, level)) => {
                let v = kkt_violation(&inv, p_sn, &p, level);
                check.record(v <= REL_TOL, || format!("pair {m}: violation {v:e}"));
            }
            None => check.record(false, || format!("pair {m}: no active channel")),
        }
    }
}

/// Runs every check over `seeds` seeded instances.
pub fn verify(seeds: usize, base_seed: u64, form: InterferenceForm) -> Result<VerifyReport> {
    let mut stable = Check::new("ssd/dsd outputs have no blocking pair");
    let mut convergence = Check::new("ssd static iterations <= K and proposals <= N*K");
    let mut quotas = Check::new("quotas respected by every scheme");
    let mut budget = Check::new("source and relay power budgets");
    let mut kkt = Check::new("water-filling optimality conditions");
    let mut bound = Check::new("dsd proposals within the combinatorial bound");
    let mut oracle = Check::new("exhaustive objective >= ssd, dsd and ofdma objectives");
    let mut ofdma = Check::new("ofdma schedules at most K pairs");

    let large = NetworkParams::default();
    let small_grid: Vec<NetworkParams> = (3..=6)
        .map(|n| NetworkParams {
            n_pairs: n,
            n_subchannels: 3,
            q_u: 2,
            q_l: 2,
            ..NetworkParams::default()
        })
        .collect();

    for i in 0..seeds {
        let seed = base_seed.wrapping_add(i as u64);
        for (j, params) in std::iter::once(&large).chain(&small_grid).enumerate() {
            let topo = sample_topology(params, derive_seed(seed, STREAM_VERIFY, 2 * j as u64));
            let ch = sample_fading(&topo, params, derive_seed(seed, STREAM_VERIFY, 2 * j as u64 + 1));
            let state = ThroughputState::new(params.n_pairs);
            let game = MatchingGame::new(&ch, &state, params, form);
            let sigma2 = noise_power(params);
            let (n, k) = (params.n_pairs, params.n_subchannels);
            let tag = |s: Scheme| format!("seed {seed}, N={n}, K={k}, {s}");

            let is_small = j > 0;
            let schemes: &[Scheme] = if is_small {
                &Scheme::ALL
            } else {
                &[Scheme::Ssd, Scheme::Dsd, Scheme::Ofdma]
            };
            let mut objectives = Vec::new();
            for &s in schemes {
                let a = match run_scheme(s, &game, true) {
                    Ok(a) => a,
                    Err(e) => {
                        stable.record(false, || format!("{}: {e}", tag(s)));
                        continue;
                    }
                };
                if matches!(s, Scheme::Ssd | Scheme::Dsd) {
                    stable.record(true, String::new);
                }
                let mt = &a.matching;
                quotas.record(mt.check_quotas(params.q_u, params.q_l).is_ok(), || tag(s));
                match s {
                    Scheme::Ssd => convergence.record(
                        a.stats.static_iterations <= k && a.stats.proposals <= n * k,
                        || format!("{}: {} iterations, {} proposals", tag(s), a.stats.static_iterations, a.stats.proposals),
                    ),
                    Scheme::Dsd if is_small => {
                        let b = dsd_proposal_bound(n, k, params.q_u).unwrap_or(u128::MAX);
                        bound.record((a.stats.proposals as u128) <= b, || {
                            format!("{}: {} proposals > {b}", tag(s), a.stats.proposals)
                        });
                    }
                    Scheme::Ofdma => ofdma.record(mt.scheduled_pairs() <= k, || tag(s)),
                    _ => {}
                }
                match allocate(mt, &ch, params, sigma2) {
                    Ok(pw) => {
                        let r = check_power(mt, &pw.p, &pw.g_amp, params);
                        budget.record(r.is_ok(), || format!("{}: {}", tag(s), r.unwrap_err()));
                    }
                    Err(e) => budget.record(false, || format!("{}: {e}", tag(s))),
                }
                check_waterfill(mt, &game, &mut kkt);
                objectives.push((s, game.objective(mt)));
            }
            if let Some(&(_, best)) = objectives.iter().find(|(s, _)| *s == Scheme::Exhaustive) {
                for &(s, v) in &objectives {
                    oracle.record(v <= best * (1.0 + REL_TOL), || format!("{}: {v} > {best}", tag(s)));
                }
            }
        }
    }
    Ok(VerifyReport {
        checks: vec![stable, convergence, quotas, budget, kkt, bound, oracle, ofdma],
    })
}
