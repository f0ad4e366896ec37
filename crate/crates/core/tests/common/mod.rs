#![allow(dead_code)]

use noma_relay::chanmodel::{ChannelRealization, NetworkParams};
use noma_relay::nomacore::{InterferenceForm, Matching, PowerAllocation};

/// Straight transcription of the link formulas, one term at a time.
pub struct Oracle<'a> {
    pub ch: &'a ChannelRealization,
    pub p: &'a [Vec<f64>],
    pub g: &'a [f64],
    pub sigma2: f64,
    pub form: InterferenceForm,
}

impl Oracle<'_> {
    pub fn gamma(&self, k: usize, m: usize) -> f64 {
        let g2 = self.g[k] * self.g[k];
        let f2 = self.ch.f2[k][m];
        g2 * f2 * self.p[k][m] * self.ch.h2[k][m] / (g2 * f2 * self.sigma2 + self.sigma2)
    }

    /// Whether `i` is decoded before `m` on `k`.
    pub fn ahead(&self, k: usize, i: usize, m: usize) -> bool {
        let (gi, gm) = (self.gamma(k, i), self.gamma(k, m));
        gi > gm || (gi == gm && i < m)
    }

    pub fn interference(&self, k: usize, m: usize, users: &[usize]) -> f64 {
        let g2 = self.g[k] * self.g[k];
        let mut total = 0.0;
        for &i in users {
            if i == m || !self.ahead(k, i, m) {
                continue;
            }
            total += match self.form {
                InterferenceForm::Physical => g2 * self.ch.f2[k][m] * self.p[k][i] * self.ch.h2[k][i],
                InterferenceForm::Literal => g2 * self.ch.f2[k][i] * self.p[k][m] * self.ch.h2[k][i],
            };
        }
        total
    }

    pub fn rate(&self, k: usize, m: usize, users: &[usize]) -> f64 {
        let g2 = self.g[k] * self.g[k];
        let f2 = self.ch.f2[k][m];
        let s = g2 * f2 * self.p[k][m] * self.ch.h2[k][m];
        let n = self.sigma2 + g2 * f2 * self.sigma2 + self.interference(k, m, users);
        (1.0 + s / n).log2()
    }

    pub fn sum_rate(&self, matching: &Matching) -> f64 {
        let mut total = 0.0;
        for k in 0..matching.n_subchannels() {
            for &m in matching.users(k) {
                total += self.rate(k, m, matching.users(k));
            }
        }
        total
    }
}

pub fn oracle<'a>(ch: &'a ChannelRealization, pw: &'a PowerAllocation, sigma2: f64, form: InterferenceForm) -> Oracle<'a> {
    Oracle {
        ch,
        p: &pw.p,
        g: &pw.g_amp,
        sigma2,
        form,
    }
}

/// PF product from a rate table, no logs.
pub fn pf_product(users: &[usize], rates: &[f64], t: &[f64], t_c: usize) -> f64 {
    users
        .iter()
        .zip(rates)
        .map(|(&m, &r)| 1.0 + r / ((t_c as f64 - 1.0) * t[m]))
        .product()
}

pub fn params(n: usize, k: usize, q_u: usize, q_l: usize) -> NetworkParams {
    NetworkParams {
        n_pairs: n,
        n_subchannels: k,
        q_u,
        q_l,
        ..NetworkParams::default()
    }
}

/// `phi` with quota checks done by hand.
pub fn quotas_ok(m: &Matching, q_u: usize, q_l: usize) -> bool {
    let phi = m.phi();
    let rows = phi.iter().all(|row| row.iter().filter(|&&x| x).count() <= q_u);
    let cols = (0..m.n_pairs()).all(|j| phi.iter().filter(|row| row[j]).count() <= q_l);
    rows && cols
}

/// Equal-power oracle over a whole K x N grid: `p0` everywhere, `g0` on every sub-channel.
pub struct EqualPower {
    pub p: Vec<Vec<f64>>,
    pub g: Vec<f64>,
}

pub fn equal_power_grid(k: usize, n: usize, p0: f64, g0: f64) -> EqualPower {
    EqualPower {
        p: vec![vec![p0; n]; k],
        g: vec![g0; k],
    }
}

impl EqualPower {
    pub fn oracle<'a>(&'a self, ch: &'a ChannelRealization, sigma2: f64, form: InterferenceForm) -> Oracle<'a> {
        Oracle {
            ch,
            p: &self.p,
            g: &self.g,
            sigma2,
            form,
        }
    }
}

impl Oracle<'_> {
    /// SINR term of `m` on `k` when it shares `k` with `others`.
    pub fn score(&self, k: usize, m: usize, others: &[usize]) -> f64 {
        let mut users: Vec<usize> = others.iter().copied().filter(|&i| i != m).collect();
        users.push(m);
        let g2 = self.g[k] * self.g[k];
        let f2 = self.ch.f2[k][m];
        g2 * f2 * self.p[k][m] * self.ch.h2[k][m] / (self.sigma2 + g2 * f2 * self.sigma2 + self.interference(k, m, &users))
    }

    /// PF product of sub-channel `k` with occupants `users`.
    pub fn utility(&self, k: usize, users: &[usize], t: &[f64], t_c: usize) -> f64 {
        let rates: Vec<f64> = users.iter().map(|&m| self.rate(k, m, users)).collect();
        pf_product(users, &rates, t, t_c)
    }
}
