//! Seeded Monte-Carlo driver: per-instance slot loop, metric records,
//! campaign aggregation and CSV/JSON output.

mod config;
mod output;
pub mod verify;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{parse_list, Scheme, SimConfig, Sweep, TopologyMode, CONFIG_KEYS};
pub use output::{
    aggregate, aggregate_slots, proposals_cdf, read_slot_records, write_campaign, Aggregate, MetricSummary, CSV_SCHEMA_VERSION,
};

use crate::baselines::{exhaustive_search, ofdma_allocate};
use crate::chanmodel::{noise_power, sample_fading, sample_topology, NetworkParams, Topology};
use crate::error::{Error, Result};
use crate::matching::{
    dsd_sma_with_history, ssd_sma_with_history, stability_report, static_stability_report, MatchStats, MatchingGame,
};
use crate::nomacore::{Matching, RateModel, ThroughputState};
use crate::power::allocate;

/// Relative slack on the power-budget checks.
pub const BUDGET_TOL: f64 = 1e-9;

const STREAM_TOPOLOGY: u64 = 0x746f_706f;
const STREAM_FADING: u64 = 0x6661_6469;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent sub-seed for `(stream, index)` under `seed`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)) ^ index)
}

pub fn instance_seed(campaign_seed: u64, instance: usize) -> u64 {
    campaign_seed.wrapping_add(instance as u64)
}

/// Pairs whose two-hop distance exceeds the edge threshold.
pub fn classify_edge_pairs(topology: &Topology, params: &NetworkParams) -> Vec<usize> {
    (0..topology.n_pairs())
        .filter(|&m| topology.d[m] + topology.b[m] > params.edge_distance_m)
        .collect()
}

/// Metrics of one scheduling slot. Field order is the CSV column order;
/// `wall_time_us` is last so it is easy to strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub schema_version: u32,
    pub instance: usize,
    pub instance_seed: u64,
    pub slot: usize,
    pub scheme: Scheme,
    pub n_pairs: usize,
    pub n_subchannels: usize,
    pub q_u: usize,
    pub q_l: usize,
    /// Sum over links of the final rates, bits/s/Hz.
    pub sum_rate: f64,
    /// `sum_k F_k` of the matching at the equal-power operating point.
    pub objective: f64,
    pub scheduled_pairs: usize,
    pub links: usize,
    pub n_edge_pairs: usize,
    /// Mean over edge pairs of their summed slot rate; 0 without edge pairs.
    pub edge_rate_mean: f64,
    pub proposals: usize,
    pub static_iterations: usize,
    pub ssd_rounds: usize,
    pub evictions: usize,
    pub blocking_pairs: usize,
    pub forbidden_excluded: usize,
    pub wall_time_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub instance_seed: u64,
    pub edge_pairs: Vec<usize>,
    pub slots: Vec<SlotRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: SimConfig,
    pub instances: Vec<InstanceRecord>,
    pub aggregate: Aggregate,
}

/// Outcome of one scheme call.
pub struct Allocation {
    pub matching: Matching,
    pub stats: MatchStats,
    pub blocking_pairs: usize,
    pub forbidden_excluded: usize,
}

/// Runs the configured scheme and, for the matching schemes, the stability scan.
pub fn run_scheme(scheme: Scheme, game: &MatchingGame<'_>, check_stability: bool) -> Result<Allocation> {
    let start = Instant::now();
    let (matching, mut stats, history) = match scheme {
        Scheme::Ssd => {
            let o = ssd_sma_with_history(game)?;
            (o.matching, o.stats, Some(o.forbidden))
        }
        Scheme::Dsd => {
            let o = dsd_sma_with_history(game)?;
            (o.matching, o.stats, Some(o.forbidden))
        }
        Scheme::Ofdma => (ofdma_allocate(game), MatchStats::default(), None),
        Scheme::Exhaustive => (exhaustive_search(game)?, MatchStats::default(), None),
    };
    stats.wall_time = start.elapsed();

    let (mut blocking_pairs, mut forbidden_excluded) = (0, 0);
    if check_stability {
        let report = match (scheme, &history) {
            (Scheme::Ssd, Some(h)) => Some(static_stability_report(&matching, game, h)),
            (Scheme::Dsd, h) => Some(stability_report(&matching, game, h.as_ref())),
            _ => None,
        };
        if let Some(r) = report {
            blocking_pairs = r.blocking.len();
            forbidden_excluded = r.forbidden_excluded.len();
        }
        if blocking_pairs > 0 {
            return Err(Error::Verification(format!(
                "{scheme} produced {blocking_pairs} blocking pair(s)"
            )));
        }
    }
    Ok(Allocation {
        matching,
        stats,
        blocking_pairs,
        forbidden_excluded,
    })
}

fn topology_for(config: &SimConfig, instance_seed: u64) -> Topology {
    let base = match config.topology_mode {
        TopologyMode::RedrawPerInstance => instance_seed,
        TopologyMode::Fixed => config.seed,
    };
    sample_topology(&config.params, derive_seed(base, STREAM_TOPOLOGY, 0))
}

/// One instance: a topology and `n_slots` scheduling slots with fresh fading.
pub fn run_instance(config: &SimConfig, instance: usize) -> Result<InstanceRecord> {
    config.validate()?;
    let params = &config.params;
    let seed = instance_seed(config.seed, instance);
    let topology = topology_for(config, seed);
    let edge = classify_edge_pairs(&topology, params);
    let sigma2 = noise_power(params);
    let model = RateModel::new(sigma2, config.interference_form);
    let mut state = ThroughputState::new(params.n_pairs);
    let mut slots = Vec::with_capacity(config.n_slots);

    for slot in 0..config.n_slots {
        let ch = sample_fading(&topology, params, derive_seed(seed, STREAM_FADING, slot as u64));
        let game = MatchingGame::new(&ch, &state, params, config.interference_form);
        let alloc = run_scheme(config.scheme, &game, config.check_stability)?;
        let matching = &alloc.matching;
        matching.check_quotas(params.q_u, params.q_l)?;
        let objective = game.objective(matching);

        let pw = allocate(matching, &ch, params, sigma2)?;
        check_power(matching, &pw.p, &pw.g_amp, params)?;
        let rates = model.rate_matrix(matching, &ch, &pw);
        let pair_rate = |m: usize| rates.iter().map(|row| row[m]).sum::<f64>();
        let sum_rate: f64 = rates.iter().map(|row| row.iter().sum::<f64>()).sum();
        let edge_rate_mean = if edge.is_empty() {
            0.0
        } else {
            edge.iter().map(|&m| pair_rate(m)).sum::<f64>() / edge.len() as f64
        };

        slots.push(SlotRecord {
            schema_version: CSV_SCHEMA_VERSION,
            instance,
            instance_seed: seed,
            slot,
            scheme: config.scheme,
            n_pairs: params.n_pairs,
            n_subchannels: params.n_subchannels,
            q_u: params.q_u,
            q_l: params.q_l,
            sum_rate,
            objective,
            scheduled_pairs: matching.scheduled_pairs(),
            links: matching.link_count(),
            n_edge_pairs: edge.len(),
            edge_rate_mean,
            proposals: alloc.stats.proposals,
            static_iterations: alloc.stats.static_iterations,
            ssd_rounds: alloc.stats.ssd_rounds,
            evictions: alloc.stats.evictions,
            blocking_pairs: alloc.blocking_pairs,
            forbidden_excluded: alloc.forbidden_excluded,
            wall_time_us: alloc.stats.wall_time.as_secs_f64() * 1e6,
        });
        state = state.update(&rates, params.t_c);
    }
    Ok(InstanceRecord {
        instance,
        instance_seed: seed,
        edge_pairs: edge,
        slots,
    })
}

/// Source budgets `sum_k p <= P_SN` and relay budgets `G^2 sum p = Q_K` on occupied sub-channels.
pub fn check_power(matching: &Matching, p: &[Vec<f64>], g_amp: &[f64], params: &NetworkParams) -> Result<()> {
    let p_sn = params.p_sn_watts();
    for m in 0..matching.n_pairs() {
        let used: f64 = p.iter().map(|row| row[m]).sum();
        if used > p_sn * (1.0 + BUDGET_TOL) || p.iter().any(|row| row[m] < 0.0) {
            return Err(Error::Verification(format!(
                "pair {m} spends {used} W of a {p_sn} W budget"
            )));
        }
    }
    let q_k = params.q_k_watts();
    for k in 0..matching.n_subchannels() {
        let total: f64 = matching.users(k).iter().map(|&m| p[k][m]).sum();
        let spent = g_amp[k] * g_amp[k] * total;
        let ok = if total > 0.0 {
            (spent - q_k).abs() <= q_k * BUDGET_TOL
        } else {
            g_amp[k] == 0.0
        };
        if !ok {
            return Err(Error::Verification(format!(
                "relay spends {spent} W on sub-channel {k}, budget {q_k} W"
            )));
        }
    }
    Ok(())
}

/// Runs every instance without touching the file system.
pub fn simulate_campaign(config: &SimConfig) -> Result<CampaignResult> {
    config.validate()?;
    let instances = (0..config.n_instances)
        .into_par_iter()
        .map(|i| run_instance(config, i))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&instances);
    Ok(CampaignResult {
        config: config.clone(),
        instances,
        aggregate,
    })
}

/// [`simulate_campaign`] followed by writing the result to `config.output_dir`.
pub fn run_campaign(config: &SimConfig) -> Result<CampaignResult> {
    let result = simulate_campaign(config)?;
    write_campaign(&result, &config.output_dir)?;
    Ok(result)
}

/// Every grid point of the sweep axes, each with its own parameters.
pub fn sweep_points(config: &SimConfig) -> Vec<SimConfig> {
    let p = &config.params;
    let ns = config.sweep.n_pairs.clone().unwrap_or_else(|| vec![p.n_pairs]);
    let qus = config.sweep.q_u.clone().unwrap_or_else(|| vec![p.q_u]);
    let qls = config.sweep.q_l.clone().unwrap_or_else(|| vec![p.q_l]);
    let mut out = Vec::new();
    for &n in &ns {
        for &q_u in &qus {
            for &q_l in &qls {
                let mut c = config.clone();
                c.params.n_pairs = n;
                c.params.q_u = q_u;
                c.params.q_l = q_l;
                c.sweep = Sweep::default();
                c.output_dir = config.output_dir.join(format!("n{n}_qu{q_u}_ql{q_l}"));
                out.push(c);
            }
        }
    }
    out
}

/// One line of a sweep or bench summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub n_pairs: usize,
    pub n_subchannels: usize,
    pub q_u: usize,
    pub q_l: usize,
    pub n_instances: usize,
    pub sum_rate_mean: f64,
    pub sum_rate_se: f64,
    pub scheduled_pairs_mean: f64,
    pub edge_rate_mean: f64,
    pub proposals_mean: f64,
    pub static_iterations_mean: f64,
    pub wall_time_us_mean: f64,
}

impl SweepRow {
    pub fn from_result(r: &CampaignResult) -> Self {
        let p = &r.config.params;
        let a = &r.aggregate;
        SweepRow {
            scheme: r.config.scheme,
            n_pairs: p.n_pairs,
            n_subchannels: p.n_subchannels,
            q_u: p.q_u,
            q_l: p.q_l,
            n_instances: r.instances.len(),
            sum_rate_mean: a.sum_rate.mean,
            sum_rate_se: a.sum_rate.stderr,
            scheduled_pairs_mean: a.scheduled_pairs.mean,
            edge_rate_mean: a.edge_rate_mean.mean,
            proposals_mean: a.proposals.mean,
            static_iterations_mean: a.static_iterations.mean,
            wall_time_us_mean: a.wall_time_us.mean,
        }
    }
}

/// Runs every sweep point, writing each campaign into its own subdirectory
/// plus a `sweep.csv` summary.
pub fn run_sweep(config: &SimConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for point in sweep_points(config) {
        point.validate()?;
        let r = run_campaign(&point)?;
        rows.push(SweepRow::from_result(&r));
    }
    output::write_rows(&config.output_dir.join("sweep.csv"), &rows)?;
    Ok(rows)
}

/// Wall time against N for each scheme, written to `bench.csv`.
pub fn run_bench(config: &SimConfig, n_values: &[usize], schemes: &[Scheme]) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &scheme in schemes {
        for &n in n_values {
            let mut c = config.clone();
            c.scheme = scheme;
            c.params.n_pairs = n;
            c.check_stability = false;
            c.validate()?;
            // serial so the timings do not fight over cores
            let instances = (0..c.n_instances)
                .map(|i| run_instance(&c, i))
                .collect::<Result<Vec<_>>>()?;
            let aggregate = aggregate(&instances);
            rows.push(SweepRow::from_result(&CampaignResult {
                config: c,
                instances,
                aggregate,
            }));
        }
    }
    output::write_rows(&config.output_dir.join("bench.csv"), &rows)?;
    Ok(rows)
}
