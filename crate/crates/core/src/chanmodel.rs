//! Cell geometry, Rayleigh fading and unit conversions.
//!
//! Every random quantity is a pure function of an explicit `u64` seed. Both hops
//! use the amplitude path-loss form `h = g / d^alpha`, so received power decays
//! as `d^(-2 alpha)`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar constants describing one simulated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Number of source-destination pairs (N).
    pub n_pairs: usize,
    /// Number of sub-channels (K).
    pub n_subchannels: usize,
    /// Maximum number of pairs sharing one sub-channel.
    pub q_u: usize,
    /// Maximum number of sub-channels held by one pair.
    pub q_l: usize,
    /// Source peak power in dBm.
    pub p_sn_dbm: f64,
    /// Relay peak power in dBm.
    pub q_r_dbm: f64,
    /// Thermal noise power spectral density in dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Total system bandwidth in Hz, split evenly over the sub-channels.
    pub bandwidth_hz: f64,
    pub path_loss_alpha: f64,
    /// Side of the square cell in meters. The relay sits at the center.
    pub cell_side_m: f64,
    /// Throughput averaging window in slots.
    pub t_c: usize,
    /// Pairs whose source-relay plus relay-destination distance exceeds this are cell-edge pairs.
    pub edge_distance_m: f64,
    /// Informational only; the statistical channel model is frequency-flat.
    pub center_frequency_hz: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            n_pairs: 20,
            n_subchannels: 10,
            q_u: 8,
            q_l: 3,
            p_sn_dbm: 46.0,
            q_r_dbm: 86.0,
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 4.5e6,
            path_loss_alpha: 3.76,
            cell_side_m: 200.0,
            t_c: 10,
            edge_distance_m: 160.0,
            center_frequency_hz: 2.0e9,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.n_pairs == 0 {
            return fail("n_pairs must be at least 1".into());
        }
        if self.n_subchannels == 0 {
            return fail("n_subchannels must be at least 1".into());
        }
        if self.q_u == 0 {
            return fail("q_u must be at least 1".into());
        }
        if self.q_l == 0 || self.q_l > self.n_subchannels {
            return fail(format!(
                "q_l must lie in 1..={} (got {})",
                self.n_subchannels, self.q_l
            ));
        }
        if self.t_c < 2 {
            // the PF metric divides by (t_c - 1)
            return fail(format!("t_c must be at least 2 (got {})", self.t_c));
        }
        for (name, v) in [
            ("p_sn_dbm", self.p_sn_dbm),
            ("q_r_dbm", self.q_r_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("center_frequency_hz", self.center_frequency_hz),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        for (name, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("path_loss_alpha", self.path_loss_alpha),
            ("cell_side_m", self.cell_side_m),
            ("edge_distance_m", self.edge_distance_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be finite and positive (got {v})"));
            }
        }
        Ok(())
    }

    /// Source peak power P_SN in watts.
    pub fn p_sn_watts(&self) -> f64 {
        dbm_to_watts(self.p_sn_dbm)
    }

    /// Relay peak power Q_R in watts.
    pub fn q_r_watts(&self) -> f64 {
        dbm_to_watts(self.q_r_dbm)
    }

    /// Relay power available on each sub-channel, Q_R / K.
    pub fn q_k_watts(&self) -> f64 {
        self.q_r_watts() / self.n_subchannels as f64
    }
}

pub fn dbm_to_watts(x: f64) -> f64 {
    10f64.powf(x / 10.0) * 1e-3
}

/// Per-sub-channel noise variance: the PSD integrated over `bandwidth / K`.
/// The same value serves as source-relay and relay-destination noise.
pub fn noise_power(params: &NetworkParams) -> f64 {
    dbm_to_watts(params.noise_psd_dbm_hz) * (params.bandwidth_hz / params.n_subchannels as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub source_pos: Vec<[f64; 2]>,
    pub dest_pos: Vec<[f64; 2]>,
    pub relay_pos: [f64; 2],
    /// Source-relay distances in meters.
    pub d: Vec<f64>,
    /// Relay-destination distances in meters.
    pub b: Vec<f64>,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Topology {
    /// Builds a topology from explicit positions, filling in the distances.
    pub fn from_positions(source_pos: Vec<[f64; 2]>, dest_pos: Vec<[f64; 2]>, relay_pos: [f64; 2]) -> Self {
        assert_eq!(source_pos.len(), dest_pos.len(), "one destination per source");
        let d = source_pos.iter().map(|&s| distance(s, relay_pos)).collect();
        let b = dest_pos.iter().map(|&t| distance(t, relay_pos)).collect();
        Topology {
            source_pos,
            dest_pos,
            relay_pos,
            d,
            b,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.d.len()
    }
}

/// Relay at the cell center, sources then destinations drawn uniformly over the square.
pub fn sample_topology(params: &NetworkParams, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = params.cell_side_m;
    let coord = Uniform::new_inclusive(0.0, side).expect("cell side is positive");
    let point = |rng: &mut ChaCha8Rng| [coord.sample(rng), coord.sample(rng)];
    let source_pos: Vec<_> = (0..params.n_pairs).map(|_| point(&mut rng)).collect();
    let dest_pos: Vec<_> = (0..params.n_pairs).map(|_| point(&mut rng)).collect();
    Topology::from_positions(source_pos, dest_pos, [side / 2.0, side / 2.0])
}

/// One slot of small-scale fading for every (sub-channel, pair), K x N.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Source-to-relay coefficients, `h[k][m]`.
    pub h: Vec<Vec<Complex64>>,
    /// Relay-to-destination coefficients, `f[k][m]`.
    pub f: Vec<Vec<Complex64>>,
    pub h2: Vec<Vec<f64>>,
    pub f2: Vec<Vec<f64>>,
}

impl ChannelRealization {
    pub fn from_coefficients(h: Vec<Vec<Complex64>>, f: Vec<Vec<Complex64>>) -> Self {
        let sq = |rows: &[Vec<Complex64>]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|row| row.iter().map(|c| c.norm_sqr()).collect())
                .collect()
        };
        let h2 = sq(&h);
        let f2 = sq(&f);
        ChannelRealization { h, f, h2, f2 }
    }

    /// Real, non-negative coefficients with the given squared magnitudes.
    /// Handy for hand-built instances.
    pub fn from_gains(h2: Vec<Vec<f64>>, f2: Vec<Vec<f64>>) -> Self {
        let lift = |rows: &[Vec<f64>]| -> Vec<Vec<Complex64>> {
            rows.iter()
                .map(|row| row.iter().map(|&g| Complex64::new(g.sqrt(), 0.0)).collect())
                .collect()
        };
        let h = lift(&h2);
        let f = lift(&f2);
        ChannelRealization { h, f, h2, f2 }
    }

    pub fn n_subchannels(&self) -> usize {
        self.h2.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.h2.first().map_or(0, Vec::len)
    }
}

/// Circularly-symmetric complex Gaussian with unit mean power.
pub fn draw_rayleigh<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let component = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std-dev");
    Complex64::new(component.sample(rng), component.sample(rng))
}

/// Draws `g` and `c` for every (k, m) in row-major order, independent of the
/// geometry, then applies the path loss of `topology`.
pub fn sample_fading(topology: &Topology, params: &NetworkParams, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_count = params.n_subchannels;
    let n = topology.n_pairs();
    let alpha = params.path_loss_alpha;
    let src_loss: Vec<f64> = topology.d.iter().map(|d| d.powf(alpha)).collect();
    let dst_loss: Vec<f64> = topology.b.iter().map(|b| b.powf(alpha)).collect();

    let mut h = vec![vec![Complex64::default(); n]; k_count];
    let mut f = vec![vec![Complex64::default(); n]; k_count];
    for k in 0..k_count {
        for m in 0..n {
            let g = draw_rayleigh(&mut rng);
            let c = draw_rayleigh(&mut rng);
            h[k][m] = g / src_loss[m];
            f[k][m] = c / dst_loss[m];
        }
    }
    ChannelRealization::from_coefficients(h, f)
}
