//! Post-matching power allocation: per-source water-filling over the matched
//! sub-channels, then one relay amplification factor per sub-channel.

use crate::chanmodel::{ChannelRealization, NetworkParams};
use crate::error::{Error, Result};
use crate::nomacore::{Matching, PowerAllocation};

/// Water-filling over parallel channels with inverse-SNR terms `inv_snr[i]`
/// (`sigma2 / |h|^2`, `f64::INFINITY` for a dead channel) and budget `budget`.
///
/// Returns the per-channel powers and the final water level. Channels below
/// the level are shut off and the level is re-solved over the survivors until
/// every active channel has a positive allocation.
pub fn waterfill_levels(inv_snr: &[f64], budget: f64) -> Option<(Vec<f64>, f64)> {
    let mut active: Vec<usize> = (0..inv_snr.len()).filter(|&i| inv_snr[i].is_finite()).collect();
    loop {
        if active.is_empty() {
            return None;
        }
        let level = (budget + active.iter().map(|&i| inv_snr[i]).sum::<f64>()) / active.len() as f64;
        let before = active.len();
        active.retain(|&i| level - inv_snr[i] > 0.0);
        if active.len() == before {
            let mut p = vec![0.0; inv_snr.len()];
            for &i in &active {
                p[i] = level - inv_snr[i];
            }
            // spread the rounding residue so the budget is met to the last ulp or so
            let residue = (budget - active.iter().map(|&i| p[i]).sum::<f64>()) / active.len() as f64;
            for &i in &active {
                p[i] = (p[i] + residue).max(0.0);
            }
            return Some((p, level));
        }
    }
}

/// Splits `p_sn` over the sub-channels `w_m` of pair `m`. Output is aligned with `w_m`.
pub fn waterfill(
    m: usize,
    w_m: &[usize],
    ch: &ChannelRealization,
    p_sn: f64,
    sigma2: f64,
) -> Result<Vec<f64>> {
    let inv_snr: Vec<f64> = w_m
        .iter()
        .map(|&k| {
            let h2 = ch.h2[k][m];
            if h2 > 0.0 {
                sigma2 / h2
            } else {
                f64::INFINITY
            }
        })
        .collect();
    waterfill_levels(&inv_snr, p_sn)
        .map(|(p, _)| p)
        .ok_or(Error::DegenerateWaterfill { pair: m })
}

/// Amplification per sub-channel so the relay spends exactly `q_r / k_count`
/// on every occupied sub-channel. Empty sub-channels get 0.
pub fn relay_amplification(matching: &Matching, p: &[Vec<f64>], q_r: f64, k_count: usize) -> Vec<f64> {
    let q_k = q_r / k_count as f64;
    (0..matching.n_subchannels())
        .map(|k| {
            let total: f64 = matching.users(k).iter().map(|&m| p[k][m]).sum();
            if total > 0.0 {
                (q_k / total).sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Power and amplification assumed while matching: every pair spreads `P_SN`
/// over `q_l` sub-channels and the relay assumes `q_u` such users per sub-channel.
pub fn equal_power(params: &NetworkParams) -> (f64, f64) {
    let p0 = params.p_sn_watts() / params.q_l as f64;
    let g0 = (params.q_k_watts() / (params.q_u as f64 * p0)).sqrt();
    (p0, g0)
}

/// Water-fills every matched pair, then sets the relay factors.
pub fn allocate(matching: &Matching, ch: &ChannelRealization, params: &NetworkParams, sigma2: f64) -> Result<PowerAllocation> {
    let mut p = vec![vec![0.0; matching.n_pairs()]; matching.n_subchannels()];
    let p_sn = params.p_sn_watts();
    for m in 0..matching.n_pairs() {
        let w_m = matching.channels(m);
        if w_m.is_empty() {
            continue;
        }
        let powers = waterfill(m, w_m, ch, p_sn, sigma2)?;
        for (&k, pk) in w_m.iter().zip(powers) {
            p[k][m] = pk;
        }
    }
    let g_amp = relay_amplification(matching, &p, params.q_r_watts(), params.n_subchannels);
    Ok(PowerAllocation { p, g_amp })
}

/// Relay transmit power on sub-channel `k` from the amplification relation,
/// `G^2 * sum_m (p |h|^2 + sigma2)` over the occupants.
pub fn relay_power(k: usize, matching: &Matching, ch: &ChannelRealization, pw: &PowerAllocation, sigma2: f64) -> f64 {
    let g2 = pw.g_amp[k] * pw.g_amp[k];
    matching
        .users(k)
        .iter()
        .map(|&m| g2 * (pw.p[k][m] * ch.h2[k][m] + sigma2))
        .sum()
}
