//! Link-level NOMA quantities: equivalent two-hop gain, SIC order, residual
//! interference, per-link rate, the proportional-fair metric and the
//! exponentially averaged throughput.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::chanmodel::ChannelRealization;
use crate::error::{Error, Result};

/// Initial per-pair average throughput in bits/s/Hz. Keeps the PF metric
/// finite for pairs that have never been served.
pub const THROUGHPUT_FLOOR: f64 = 1e-6;

/// Binary sub-channel assignment with both adjacency views kept in sync.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matching {
    phi: Vec<Vec<bool>>,
    per_channel: Vec<Vec<usize>>,
    per_pair: Vec<Vec<usize>>,
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

fn remove_sorted(v: &mut Vec<usize>, x: usize) {
    if let Ok(pos) = v.binary_search(&x) {
        v.remove(pos);
    }
}

impl Matching {
    pub fn empty(n_subchannels: usize, n_pairs: usize) -> Self {
        Matching {
            phi: vec![vec![false; n_pairs]; n_subchannels],
            per_channel: vec![Vec::new(); n_subchannels],
            per_pair: vec![Vec::new(); n_pairs],
        }
    }

    /// Builds a matching from a K x N indicator matrix.
    pub fn from_phi(phi: &[Vec<bool>]) -> Self {
        let k_count = phi.len();
        let n = phi.first().map_or(0, Vec::len);
        let mut out = Matching::empty(k_count, n);
        for (k, row) in phi.iter().enumerate() {
            for (m, &on) in row.iter().enumerate() {
                if on {
                    out.phi[k][m] = true;
                    out.per_channel[k].push(m);
                    out.per_pair[m].push(k);
                }
            }
        }
        out
    }

    pub fn n_subchannels(&self) -> usize {
        self.phi.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.per_pair.len()
    }

    pub fn phi(&self) -> &[Vec<bool>] {
        &self.phi
    }

    pub fn is_matched(&self, k: usize, m: usize) -> bool {
        self.phi[k][m]
    }

    /// Pairs on sub-channel `k` (U_k), ascending.
    pub fn users(&self, k: usize) -> &[usize] {
        &self.per_channel[k]
    }

    /// Sub-channels held by pair `m` (W_m), ascending.
    pub fn channels(&self, m: usize) -> &[usize] {
        &self.per_pair[m]
    }

    pub fn insert(&mut self, k: usize, m: usize) -> Result<()> {
        if self.phi[k][m] {
            return Err(Error::AlreadyMatched { k, m });
        }
        self.phi[k][m] = true;
        insert_sorted(&mut self.per_channel[k], m);
        insert_sorted(&mut self.per_pair[m], k);
        Ok(())
    }

    pub fn remove(&mut self, k: usize, m: usize) -> Result<()> {
        if !self.phi[k][m] {
            return Err(Error::NotMatched { k, m });
        }
        self.phi[k][m] = false;
        remove_sorted(&mut self.per_channel[k], m);
        remove_sorted(&mut self.per_pair[m], k);
        Ok(())
    }

    /// Number of (sub-channel, pair) links.
    pub fn link_count(&self) -> usize {
        self.per_channel.iter().map(Vec::len).sum()
    }

    /// Number of pairs holding at least one sub-channel.
    pub fn scheduled_pairs(&self) -> usize {
        self.per_pair.iter().filter(|w| !w.is_empty()).count()
    }

    /// Checks the per-channel and per-pair quotas.
    pub fn check_quotas(&self, q_u: usize, q_l: usize) -> Result<()> {
        for (k, u) in self.per_channel.iter().enumerate() {
            if u.len() > q_u {
                return Err(Error::Verification(format!(
                    "sub-channel {k} holds {} pairs, quota is {q_u}",
                    u.len()
                )));
            }
        }
        for (m, w) in self.per_pair.iter().enumerate() {
            if w.len() > q_l {
                return Err(Error::Verification(format!(
                    "pair {m} holds {} sub-channels, quota is {q_l}",
                    w.len()
                )));
            }
        }
        Ok(())
    }
}

/// Source transmit powers and relay amplification factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// `p[k][m]` in watts.
    pub p: Vec<Vec<f64>>,
    /// `g_amp[k]`, one factor per sub-channel.
    pub g_amp: Vec<f64>,
}

impl PowerAllocation {
    /// `p0` on every matched link and `g0` on every sub-channel.
    pub fn equal(matching: &Matching, p0: f64, g0: f64) -> Self {
        let p = matching
            .phi()
            .iter()
            .map(|row| row.iter().map(|&on| if on { p0 } else { 0.0 }).collect())
            .collect();
        PowerAllocation {
            p,
            g_amp: vec![g0; matching.n_subchannels()],
        }
    }
}

/// Exponentially averaged per-pair throughput, bits/s/Hz per sub-channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputState {
    pub t_avg: Vec<f64>,
    pub slot: u64,
}

impl ThroughputState {
    pub fn new(n_pairs: usize) -> Self {
        ThroughputState {
            t_avg: vec![THROUGHPUT_FLOOR; n_pairs],
            slot: 0,
        }
    }

    /// One step of the moving average: every pair, matched or not, absorbs its
    /// slot rate averaged over the K sub-channels. Never drops below the floor.
    pub fn update(&self, slot_rates: &[Vec<f64>], t_c: usize) -> ThroughputState {
        let k_count = slot_rates.len().max(1) as f64;
        let w = 1.0 / t_c as f64;
        let t_avg = self
            .t_avg
            .iter()
            .enumerate()
            .map(|(m, &t)| {
                let mean_rate = slot_rates.iter().map(|row| row[m]).sum::<f64>() / k_count;
                ((1.0 - w) * t + w * mean_rate).max(THROUGHPUT_FLOOR)
            })
            .collect();
        ThroughputState {
            t_avg,
            slot: self.slot + 1,
        }
    }
}

/// How the residual interference term indexes the interferer and the victim.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterferenceForm {
    /// Interferer `i` reaches destination `m` through `h[k][i]` then `f[k][m]`
    /// with the interferer's power `p[k][i]`.
    #[default]
    Physical,
    /// Index pattern as printed: `f[k][i]` and the victim's power `p[k][m]`.
    Literal,
}

impl std::str::FromStr for InterferenceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(InterferenceForm::Physical),
            "literal" => Ok(InterferenceForm::Literal),
            other => Err(Error::Config(format!(
                "unknown interference_form `{other}` (expected physical|literal)"
            ))),
        }
    }
}

impl std::fmt::Display for InterferenceForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InterferenceForm::Physical => "physical",
            InterferenceForm::Literal => "literal",
        })
    }
}

/// Equivalent end-to-end gain of pair `m` on sub-channel `k`:
/// `G^2 |f|^2 p |h|^2 / (G^2 |f|^2 sigma2 + sigma2)`.
pub fn equivalent_gain(k: usize, m: usize, ch: &ChannelRealization, p: f64, g_amp: f64, sigma2: f64) -> f64 {
    let g2f2 = g_amp * g_amp * ch.f2[k][m];
    g2f2 * p * ch.h2[k][m] / (g2f2 * sigma2 + sigma2)
}

/// Decode order on one sub-channel: strongest equivalent gain first, ties by
/// ascending pair index. The head of the list sees no residual interference.
pub fn sic_order(users: &[usize], gamma: &[f64]) -> Vec<usize> {
    debug_assert_eq!(users.len(), gamma.len());
    let mut idx: Vec<usize> = (0..users.len()).collect();
    idx.sort_by(|&a, &b| {
        gamma[b]
            .total_cmp(&gamma[a])
            .then_with(|| users[a].cmp(&users[b]))
    });
    idx.into_iter().map(|i| users[i]).collect()
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Noise variance and interference convention shared by every rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    pub sigma2: f64,
    pub form: InterferenceForm,
}

/// Per-user link figures on one sub-channel, aligned with the input user slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLinks {
    pub gamma: Vec<f64>,
    pub interference: Vec<f64>,
    pub rate: Vec<f64>,
}

impl RateModel {
    pub fn new(sigma2: f64, form: InterferenceForm) -> Self {
        RateModel { sigma2, form }
    }

    /// Evaluates every user of `users` on sub-channel `k` with powers `power(m)`
    /// and amplification `g_amp`. Users ahead in the SIC order interfere with
    /// those behind them.
    pub fn channel_links(
        &self,
        k: usize,
        users: &[usize],
        power: impl Fn(usize) -> f64,
        g_amp: f64,
        ch: &ChannelRealization,
    ) -> ChannelLinks {
        let n = users.len();
        let g2 = g_amp * g_amp;
        let powers: Vec<f64> = users.iter().map(|&m| power(m)).collect();
        let gamma: Vec<f64> = users
            .iter()
            .zip(&powers)
            .map(|(&m, &p)| equivalent_gain(k, m, ch, p, g_amp, self.sigma2))
            .collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            gamma[b]
                .total_cmp(&gamma[a])
                .then_with(|| users[a].cmp(&users[b]))
        });

        let mut interference = vec![0.0; n];
        let mut rate = vec![0.0; n];
        // running sum over users already ahead in the order
        let mut ahead = 0.0;
        for &i in &order {
            let m = users[i];
            let f2 = ch.f2[k][m];
            let inter = match self.form {
                InterferenceForm::Physical => g2 * f2 * ahead,
                InterferenceForm::Literal => g2 * powers[i] * ahead,
            };
            let signal = g2 * f2 * powers[i] * ch.h2[k][m];
            let noise = self.sigma2 + g2 * f2 * self.sigma2 + inter;
            interference[i] = inter;
            rate[i] = log2_1p(signal / noise);
            ahead += match self.form {
                InterferenceForm::Physical => powers[i] * ch.h2[k][m],
                InterferenceForm::Literal => f2 * ch.h2[k][m],
            };
        }
        ChannelLinks {
            gamma,
            interference,
            rate,
        }
    }

    fn links_for(
        &self,
        k: usize,
        matching: &Matching,
        ch: &ChannelRealization,
        pw: &PowerAllocation,
    ) -> ChannelLinks {
        self.channel_links(k, matching.users(k), |m| pw.p[k][m], pw.g_amp[k], ch)
    }

    fn position(matching: &Matching, k: usize, m: usize) -> Result<usize> {
        matching
            .users(k)
            .binary_search(&m)
            .map_err(|_| Error::NotMatched { k, m })
    }

    /// Residual interference seen by destination `m` on sub-channel `k`.
    pub fn interference(
        &self,
        k: usize,
        m: usize,
        matching: &Matching,
        ch: &ChannelRealization,
        pw: &PowerAllocation,
    ) -> Result<f64> {
        let pos = Self::position(matching, k, m)?;
        Ok(self.links_for(k, matching, ch, pw).interference[pos])
    }

    /// Spectral efficiency of pair `m` on sub-channel `k` in bits/s/Hz.
    pub fn rate(
        &self,
        k: usize,
        m: usize,
        matching: &Matching,
        ch: &ChannelRealization,
        pw: &PowerAllocation,
    ) -> Result<f64> {
        let pos = Self::position(matching, k, m)?;
        Ok(self.links_for(k, matching, ch, pw).rate[pos])
    }

    /// K x N rate table, zero on unmatched links.
    pub fn rate_matrix(&self, matching: &Matching, ch: &ChannelRealization, pw: &PowerAllocation) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; matching.n_pairs()]; matching.n_subchannels()];
        for (k, row) in out.iter_mut().enumerate() {
            let links = self.links_for(k, matching, ch, pw);
            for (&m, &r) in matching.users(k).iter().zip(&links.rate) {
                row[m] = r;
            }
        }
        out
    }

    pub fn sum_rate(&self, matching: &Matching, ch: &ChannelRealization, pw: &PowerAllocation) -> f64 {
        (0..matching.n_subchannels())
            .map(|k| self.links_for(k, matching, ch, pw).rate.iter().sum::<f64>())
            .sum()
    }
}

/// `ln F_k` for the users in `users` with rates aligned to it.
pub fn log_pf_metric(users: &[usize], rates: &[f64], state: &ThroughputState, t_c: usize) -> f64 {
    let scale = (t_c - 1) as f64;
    users
        .iter()
        .zip(rates)
        .map(|(&m, &r)| (r / (scale * state.t_avg[m])).ln_1p())
        .sum()
}

/// Proportional-fair scheduling metric `prod (1 + R / ((t_c - 1) T))`.
pub fn pf_metric(users: &[usize], rates: &[f64], state: &ThroughputState, t_c: usize) -> f64 {
    log_pf_metric(users, rates, state, t_c).exp()
}
