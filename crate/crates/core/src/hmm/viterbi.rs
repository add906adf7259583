use crate::error::{Error, Result};

/// Sparse transition structure stored by destination state.
///
/// Incoming transitions of every state are sorted by source index, which is
/// what makes the lowest-index tie-break fall out of a strict `>` comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    n_states: usize,
    ptr: Vec<usize>,
    src: Vec<u32>,
    log_prob: Vec<f64>,
}

impl Transitions {
    /// Builds the structure from `(from, to, log_prob)` triples.
    pub fn from_triples(n_states: usize, mut triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(t) = triples.iter().find(|t| t.0 >= n_states || t.1 >= n_states) {
            return Err(Error::Config(format!("transition {t:?} references a missing state")));
        }
        if triples.iter().any(|t| t.2.is_nan()) {
            return Err(Error::Config("NaN transition log-probability".into()));
        }
        triples.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut ptr = vec![0usize; n_states + 1];
        for &(_, to, _) in &triples {
            ptr[to + 1] += 1;
        }
        for i in 0..n_states {
            ptr[i + 1] += ptr[i];
        }
        Ok(Self {
            n_states,
            ptr,
            src: triples.iter().map(|t| t.0 as u32).collect(),
            log_prob: triples.iter().map(|t| t.2).collect(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// `(source, log_prob)` pairs entering `state`, ascending by source.
    pub fn incoming(&self, state: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[state]..self.ptr[state + 1];
        self.src[r.clone()].iter().map(|&s| s as usize).zip(self.log_prob[r].iter().copied())
    }

    /// Total outgoing probability (linear space) of every state.
    pub fn outgoing_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.n_states];
        for (&s, &lp) in self.src.iter().zip(&self.log_prob) {
            mass[s as usize] += lp.exp();
        }
        mass
    }

    pub fn out_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_states];
        for &s in &self.src {
            deg[s as usize] += 1;
        }
        deg
    }
}

/// Exact Viterbi decoding.
///
/// `observe(t, out)` fills the per-state observation log-likelihoods of frame
/// `t`. The returned path maximizes
/// `init(s_0) + obs(0, s_0) + sum_t [trans(s_{t-1}, s_t) + obs(t, s_t)]`;
/// among equal scores the final state with the lowest index wins, and the
/// backtrack keeps the lowest-index predecessor. Backpointers are stored only
/// for states with more than one incoming transition.
pub fn viterbi_decode<F>(transitions: &Transitions, initial: &[f64], frames: usize, mut observe: F) -> Result<(Vec<usize>, f64)>
where
    F: FnMut(usize, &mut [f64]),
{
    let n = transitions.n_states;
    if frames == 0 {
        return Err(Error::EmptyInput("cannot decode zero frames".into()));
    }
    if initial.len() != n {
        return Err(Error::Shape(format!("{} initial scores for {n} states", initial.len())));
    }
    let mut multi_rank = vec![u32::MAX; n];
    let mut n_multi = 0usize;
    for (s, rank) in multi_rank.iter_mut().enumerate() {
        if transitions.ptr[s + 1] - transitions.ptr[s] > 1 {
            *rank = n_multi as u32;
            n_multi += 1;
        }
    }
    let mut backptr = vec![0u32; n_multi * frames.saturating_sub(1)];
    let mut obs = vec![0.0f64; n];
    let mut prev = vec![0.0f64; n];
    let mut cur = vec![0.0f64; n];

    observe(0, &mut obs);
    for s in 0..n {
        prev[s] = initial[s] + obs[s];
    }
    for t in 1..frames {
        observe(t, &mut obs);
        let row = &mut backptr[(t - 1) * n_multi..t * n_multi];
        for j in 0..n {
            let (lo, hi) = (transitions.ptr[j], transitions.ptr[j + 1]);
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0u32;
            for k in lo..hi {
                let v = prev[transitions.src[k] as usize] + transitions.log_prob[k];
                if v > best {
                    best = v;
                    arg = (k - lo) as u32;
                }
            }
            cur[j] = best + obs[j];
            if multi_rank[j] != u32::MAX {
                row[multi_rank[j] as usize] = arg;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut last = 0;
    for s in 1..n {
        if prev[s] > prev[last] {
            last = s;
        }
    }
    let score = prev[last];
    if !(score > f64::NEG_INFINITY) {
        return Err(Error::NoFeasiblePath);
    }
    let mut path = vec![0usize; frames];
    path[frames - 1] = last;
    for t in (1..frames).rev() {
        let j = path[t];
        let lo = transitions.ptr[j];
        let k = if multi_rank[j] != u32::MAX {
            lo + backptr[(t - 1) * n_multi + multi_rank[j] as usize] as usize
        } else {
            lo
        };
        path[t - 1] = transitions.src[k] as usize;
    }
    Ok((path, score))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_cycle_ignores_observations() {
        let trans = Transitions::from_triples(3, vec![(0, 1, 0.0), (1, 2, 0.0), (2, 0, 0.0)]).unwrap();
        let init = [0.0, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let (path, _) = viterbi_decode(&trans, &init, 7, |t, out| {
            for (s, o) in out.iter_mut().enumerate() {
                *o = if (s + t) % 2 == 0 { -5.0 } else { 0.0 };
            }
        })
        .unwrap();
        assert_eq!(path, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn infeasible_model_reports_no_path() {
        let trans = Transitions::from_triples(2, vec![(0, 0, 0.0)]).unwrap();
        let init = [f64::NEG_INFINITY, 0.0];
        let err = viterbi_decode(&trans, &init, 3, |_, out| out.fill(0.0)).unwrap_err();
        assert_eq!(err.kind(), "NoFeasiblePath");
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let trans = Transitions::from_triples(
            2,
            vec![(0, 0, 0.0), (1, 0, 0.0), (0, 1, 0.0), (1, 1, 0.0)],
        )
        .unwrap();
        let (path, _) = viterbi_decode(&trans, &[0.0, 0.0], 4, |_, out| out.fill(-1.0)).unwrap();
        assert_eq!(path, vec![0, 0, 0, 0]);
    }

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search. Among equal scores the path that is smallest when
    /// read from the last frame backwards wins, which is what the backtrack
    /// with lowest-index ties produces.
    fn brute_force(n: usize, trans: &[Vec<f64>], init: &[f64], obs: &[Vec<f64>]) -> Option<(Vec<usize>, f64)> {
        let frames = obs.len();
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut path = vec![0usize; frames];
        let total = n.pow(frames as u32);
        for code in 0..total {
            let mut c = code;
            for p in path.iter_mut() {
                *p = c % n;
                c /= n;
            }
            let mut score = init[path[0]] + obs[0][path[0]];
            for t in 1..frames {
                score = score + trans[path[t - 1]][path[t]] + obs[t][path[t]];
            }
            if score == f64::NEG_INFINITY {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bp, bs)) => score > *bs || (score == *bs && path.iter().rev().lt(bp.iter().rev())),
            };
            if better {
                best = Some((path.clone(), score));
            }
        }
        best
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..60 {
            let n = rng.gen_range(1..=5);
            let frames = rng.gen_range(1..=6);
            let quantized = case % 2 == 0;
            let value = |rng: &mut ChaCha8Rng| -> f64 {
                if rng.gen_bool(0.25) {
                    f64::NEG_INFINITY
                } else if quantized {
                    -(rng.gen_range(0..4) as f64) * 0.5
                } else {
                    -rng.gen_range(0.0..3.0)
                }
            };
            let trans: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| value(&mut rng)).collect()).collect();
            let init: Vec<f64> = (0..n).map(|_| value(&mut rng)).collect();
            let obs: Vec<Vec<f64>> = (0..frames).map(|_| (0..n).map(|_| value(&mut rng)).collect()).collect();
            let triples = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| trans[i][j] > f64::NEG_INFINITY)
                .map(|(i, j)| (i, j, trans[i][j]))
                .collect();
            let t = Transitions::from_triples(n, triples).unwrap();
            let got = viterbi_decode(&t, &init, frames, |f, out| out.copy_from_slice(&obs[f]));
            match brute_force(n, &trans, &init, &obs) {
                None => assert_eq!(got.unwrap_err().kind(), "NoFeasiblePath", "case {case}"),
                Some((path, score)) => {
                    let (p, s) = got.unwrap();
                    assert!((s - score).abs() < 1e-9, "case {case}");
                    assert_eq!(p, path, "case {case}");
                }
            }
        }
    }
}

