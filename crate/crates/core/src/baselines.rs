//! Reference schemes: single-occupancy PF-OFDMA and the exhaustive optimum of
//! `sum_k F_k` under equal power.

use crate::error::{Error, Result};
use crate::matching::MatchingGame;
use crate::nomacore::Matching;

/// Largest K*N the exhaustive search accepts.
pub const EXHAUSTIVE_MAX_CELLS: usize = 36;

/// Greedy PF-OFDMA: repeatedly give the still-free sub-channel with the best
/// available single-pair score `F_k({m})` to that pair, while the pair has
/// quota left. Ties go to the lower sub-channel, then the lower pair.
pub fn ofdma_allocate(game: &MatchingGame<'_>) -> Matching {
    let k_count = game.n_subchannels();
    let n = game.n_pairs();
    let q_l = game.params.q_l;
    let scores: Vec<Vec<f64>> = (0..k_count)
        .map(|k| (0..n).map(|m| game.log_utility(k, &[m])).collect())
        .collect();

    let mut matching = Matching::empty(k_count, n);
    let mut free = vec![true; k_count];
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for k in (0..k_count).filter(|&k| free[k]) {
            for m in (0..n).filter(|&m| matching.channels(m).len() < q_l) {
                let s = scores[k][m];
                if s > 0.0 && best.is_none_or(|(_, _, b)| s > b) {
                    best = Some((k, m, s));
                }
            }
        }
        let Some((k, m, _)) = best else { break };
        matching.insert(k, m).expect("free sub-channel");
        free[k] = false;
    }
    matching
}

/// One candidate occupancy of a sub-channel.
#[derive(Debug, Clone)]
struct Candidate {
    members: Vec<usize>,
    mask: u64,
    value: f64,
}

/// Bit string of `phi` restricted to one row, most significant = pair 0.
fn row_key(members: &[usize], n: usize) -> u64 {
    members.iter().fold(0u64, |acc, &m| acc | 1 << (n - 1 - m))
}

fn subsets_up_to(n: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << n) {
        if (mask.count_ones() as usize) <= max_size {
            out.push((0..n).filter(|&m| mask >> m & 1 == 1).collect());
        }
    }
    out
}

struct Search {
    /// Best achievable value of sub-channels `k..K`, ignoring the pair quota.
    tail_bound: Vec<f64>,
    q_l: usize,
    usage: Vec<usize>,
    chosen: Vec<u64>,
    best: Option<(f64, Vec<u64>)>,
}

/// Quota-feasible assignment maximizing `sum_k F_k` under equal power.
/// Equal objectives resolve to the lexicographically smallest `phi` (row-major,
/// sub-channel 0 first, pair 0 most significant).
pub fn exhaustive_search(game: &MatchingGame<'_>) -> Result<Matching> {
    let k_count = game.n_subchannels();
    let n = game.n_pairs();
    let cells = k_count * n;
    if cells > EXHAUSTIVE_MAX_CELLS {
        return Err(Error::SearchTooLarge {
            cells,
            limit: EXHAUSTIVE_MAX_CELLS,
        });
    }
    let q_u = game.params.q_u.min(n);
    let subsets = subsets_up_to(n, q_u);
    let candidates: Vec<Vec<Candidate>> = (0..k_count)
        .map(|k| {
            let mut c: Vec<Candidate> = subsets
                .iter()
                .map(|s| Candidate {
                    mask: row_key(s, n),
                    value: game.utility(k, s),
                    members: s.clone(),
                })
                .collect();
            // best value first so the bound bites early
            c.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.mask.cmp(&b.mask)));
            c
        })
        .collect();
    let mut tail_bound = vec![0.0; k_count + 1];
    for k in (0..k_count).rev() {
        tail_bound[k] = tail_bound[k + 1] + candidates[k][0].value;
    }

    let mut search = Search {
        tail_bound,
        q_l: game.params.q_l,
        usage: vec![0; n],
        chosen: Vec::with_capacity(k_count),
        best: None,
    };
    descend(&mut search, &candidates, 0, 0.0);

    let (_, rows) = search.best.expect("the empty assignment is always feasible");
    let mut matching = Matching::empty(k_count, n);
    for (k, key) in rows.iter().enumerate() {
        for m in 0..n {
            if key >> (n - 1 - m) & 1 == 1 {
                matching.insert(k, m)?;
            }
        }
    }
    Ok(matching)
}

fn descend(s: &mut Search, cands: &[Vec<Candidate>], k: usize, acc: f64) {
    if k == cands.len() {
        let better = match &s.best {
            None => true,
            Some((v, r)) => acc > *v || (acc == *v && s.chosen < *r),
        };
        if better {
            s.best = Some((acc, s.chosen.clone()));
        }
        return;
    }
    for cand in &cands[k] {
        if let Some((best, _)) = &s.best {
            // sorted descending, so nothing later on this level can do better
            if acc + cand.value + s.tail_bound[k + 1] < *best {
                break;
            }
        }
        if cand.members.iter().any(|&m| s.usage[m] >= s.q_l) {
            continue;
        }
        for &m in &cand.members {
            s.usage[m] += 1;
        }
        s.chosen.push(cand.mask);
        descend(s, cands, k + 1, acc + cand.value);
        s.chosen.pop();
        for &m in &cand.members {
            s.usage[m] -= 1;
        }
    }
}
