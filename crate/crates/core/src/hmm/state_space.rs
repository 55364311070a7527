use std::collections::HashMap;

use crate::error::{Error, Result};

/// HMM states as ordered tuples of distinct speakers.
///
/// State `s` with tuple `(g_0, .., g_{k-1})` emits stream `c` from speaker
/// `g_c`. Parameters are tied per speaker: [`StateSpace::tied_set`] lists
/// every `(state, stream)` slot that speaker `g` occupies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    num_speakers: usize,
    max_streams: usize,
    states: Vec<Vec<usize>>,
    tied: Vec<Vec<(usize, usize)>>,
    by_size: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
}

/// Enumerates every ordered tuple of distinct speakers of length
/// `1..=min(C, S_g)`, by length and then lexicographically.
pub fn build_state_space(num_speakers: usize, max_streams: usize) -> Result<StateSpace> {
    if num_speakers == 0 || max_streams == 0 {
        return Err(Error::InvalidConfig(format!(
            "state space needs S_g >= 1 and C >= 1, got S_g={num_speakers} C={max_streams}"
        )));
    }
    let top = max_streams.min(num_speakers);
    let mut states = Vec::new();
    let mut by_size = vec![Vec::new(); top + 1];
    for k in 1..=top {
        let mut prefix = Vec::with_capacity(k);
        let mut used = vec![false; num_speakers];
        permutations(k, &mut prefix, &mut used, &mut |tuple| {
            by_size[k].push(states.len());
            states.push(tuple.to_vec());
        });
    }
    let mut tied = vec![Vec::new(); num_speakers];
    for (s, tuple) in states.iter().enumerate() {
        for (c, &g) in tuple.iter().enumerate() {
            tied[g].push((s, c));
        }
    }
    let lookup = states.iter().cloned().zip(0..).collect();
    Ok(StateSpace {
        num_speakers,
        max_streams,
        states,
        tied,
        by_size,
        lookup,
    })
}

fn permutations(k: usize, prefix: &mut Vec<usize>, used: &mut [bool], emit: &mut dyn FnMut(&[usize])) {
    if prefix.len() == k {
        emit(prefix);
        return;
    }
    for g in 0..used.len() {
        if !used[g] {
            used[g] = true;
            prefix.push(g);
            permutations(k, prefix, used, emit);
            prefix.pop();
            used[g] = false;
        }
    }
}

impl StateSpace {
    pub fn num_speakers(&self) -> usize {
        self.num_speakers
    }

    pub fn max_streams(&self) -> usize {
        self.max_streams
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn state(&self, s: usize) -> &[usize] {
        &self.states[s]
    }

    /// Speaker emitting stream `c` in state `s`.
    pub fn spk(&self, s: usize, c: usize) -> usize {
        self.states[s][c]
    }

    pub fn state_size(&self, s: usize) -> usize {
        self.states[s].len()
    }

    pub fn max_state_size(&self) -> usize {
        self.by_size.len() - 1
    }

    pub fn tied_set(&self, g: usize) -> &[(usize, usize)] {
        &self.tied[g]
    }

    /// States with exactly `k` streams; empty when no such state exists.
    pub fn states_of_size(&self, k: usize) -> &[usize] {
        self.by_size.get(k).map_or(&[], Vec::as_slice)
    }

    pub fn state_of(&self, tuple: &[usize]) -> Option<usize> {
        self.lookup.get(tuple).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn falling_factorial_sum(n: usize, c: usize) -> usize {
        (1..=c.min(n))
            .map(|k| (n - k + 1..=n).product::<usize>())
            .sum()
    }

    #[test]
    fn three_speakers_two_streams() {
        let space = build_state_space(3, 2).unwrap();
        assert_eq!(space.num_states(), 9);
        assert_eq!(space.states_of_size(1).len(), 3);
        assert_eq!(space.states_of_size(2).len(), 6);
        assert_eq!(space.state(3), &[0, 1]);
        assert_eq!(space.state(4), &[0, 2]);
        assert_eq!(space.state(5), &[1, 0]);
        assert!(space.state_of(&[1, 0]).is_some());
        assert!(space.state_of(&[1, 1]).is_none());
    }

    #[test]
    fn single_speaker_has_no_pairs() {
        let space = build_state_space(1, 2).unwrap();
        assert_eq!(space.states(), &[vec![0]]);
        assert!(space.states_of_size(2).is_empty());
    }

    #[test]
    fn four_speakers_three_streams() {
        let space = build_state_space(4, 3).unwrap();
        assert_eq!(space.num_states(), 40);
        assert_eq!(falling_factorial_sum(4, 3), 40);
    }

    #[test]
    fn zero_speakers_rejected() {
        assert!(build_state_space(0, 2).is_err());
    }

    #[test]
    fn invariants_hold_over_small_grid() {
        for sg in 1..=5 {
            for c in 1..=3 {
                let space = build_state_space(sg, c).unwrap();
                assert_eq!(space.num_states(), falling_factorial_sum(sg, c));
                for k in 1..=c.min(sg) {
                    let expected: usize = (sg - k + 1..=sg).product();
                    assert_eq!(space.states_of_size(k).len(), expected);
                }
                for (s, tuple) in space.states().iter().enumerate() {
                    let mut sorted = tuple.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    assert_eq!(sorted.len(), tuple.len(), "repeated speaker in {tuple:?}");
                    for (c, &g) in tuple.iter().enumerate() {
                        assert!(space.tied_set(g).contains(&(s, c)));
                    }
                }
                for g in 0..sg {
                    for &(s, c) in space.tied_set(g) {
                        assert_eq!(space.spk(s, c), g);
                    }
                }
                let ordered: Vec<_> = space.states().to_vec();
                let mut sorted = ordered.clone();
                sorted.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
                assert_eq!(ordered, sorted);
            }
        }
    }
}
