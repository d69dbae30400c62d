//! Bosonic Fock states of fixed harmonic resolution.
//!
//! A basis state `|n₁^{w₁}, n₂^{w₂}, …⟩` is a partition of the harmonic
//! resolution `K = Σ n·w`. Sectors are labelled by `K` and by the parity of
//! the particle number `Σ w`, which the φ⁴ interaction conserves.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalg::{Monomial, OperatorPolynomial};

/// Particle-number parity of a sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of_count(count: u64) -> Parity {
        if count.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Parity of the union of two particle sets.
    pub fn combine(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "even" | "e" => Ok(Parity::Even),
            "odd" | "o" => Ok(Parity::Odd),
            other => Err(Error::Parse(format!("unknown parity '{other}'"))),
        }
    }
}

/// A Fock basis vector: strictly increasing momentum modes with positive
/// occupancies. The vacuum is the empty sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FockState {
    modes: Vec<(u32, u32)>,
}

impl FockState {
    pub fn vacuum() -> Self {
        FockState { modes: Vec::new() }
    }

    /// Builds a state from `(mode, occupancy)` pairs in any order. Repeated
    /// modes are merged; zero occupancies are dropped.
    pub fn from_occupancies<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut modes: Vec<(u32, u32)> = Vec::new();
        for (n, w) in pairs {
            if n == 0 {
                return Err(Error::InvalidState("momentum mode 0 is excluded".into()));
            }
            if w == 0 {
                continue;
            }
            match modes.iter_mut().find(|(m, _)| *m == n) {
                Some(entry) => entry.1 += w,
                None => modes.push((n, w)),
            }
        }
        modes.sort_unstable();
        Ok(FockState { modes })
    }

    /// Builds a state from a list of single-particle momenta, e.g. `[1, 1, 3]`.
    pub fn from_parts(parts: &[u32]) -> Result<Self> {
        Self::from_occupancies(parts.iter().map(|&n| (n, 1)))
    }

    /// Internal constructor for sequences already known to be canonical.
    pub(crate) fn from_sorted_unchecked(modes: Vec<(u32, u32)>) -> Self {
        debug_assert!(modes.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(modes.iter().all(|&(n, w)| n > 0 && w > 0));
        FockState { modes }
    }

    pub fn modes(&self) -> &[(u32, u32)] {
        &self.modes
    }

    pub fn is_vacuum(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn occupancy(&self, n: u32) -> u32 {
        self.modes
            .binary_search_by_key(&n, |&(m, _)| m)
            .map(|i| self.modes[i].1)
            .unwrap_or(0)
    }

    /// Harmonic resolution `Σ n·w`.
    pub fn resolution(&self) -> u32 {
        self.modes.iter().map(|&(n, w)| n * w).sum()
    }

    pub fn particle_count(&self) -> u32 {
        self.modes.iter().map(|&(_, w)| w).sum()
    }

    pub fn parity(&self) -> Parity {
        Parity::of_count(self.particle_count() as u64)
    }

    /// Single-particle momenta in descending order, one entry per particle.
    pub fn parts_descending(&self) -> Vec<u32> {
        self.modes
            .iter()
            .rev()
            .flat_map(|&(n, w)| std::iter::repeat_n(n, w as usize))
            .collect()
    }

    /// `Σ w/n` as an exact fraction; the free energy is `m²` times this.
    pub fn inverse_momentum_sum(&self) -> Ratio<u128> {
        self.modes
            .iter()
            .fold(Ratio::from_integer(0), |acc, &(n, w)| {
                acc + Ratio::new(w as u128, n as u128)
            })
    }

    /// Eigenvalue of `H_free = m² Σ (1/n) a†_n a_n` on this state.
    pub fn free_energy(&self, m: f64) -> f64 {
        let s = self.inverse_momentum_sum();
        m * m * (*s.numer() as f64 / *s.denom() as f64)
    }

    /// The normalized creator `𝔞†_F = Π (a†_n)^{w_n} / √(Π w_n!)`, so that
    /// `𝔞†_F |vac⟩ = |F⟩`.
    pub fn creator(&self) -> Monomial {
        let create: Vec<u32> = self.parts_descending();
        let norm: f64 = self
            .modes
            .iter()
            .map(|&(_, w)| (1..=w).map(f64::from).product::<f64>())
            .product();
        Monomial::new(create, Vec::new(), (1.0 / norm.sqrt()).into())
            .expect("creators are normal-ordered")
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.modes.is_empty() {
            return f.write_str("vac");
        }
        for (i, (n, w)) in self.modes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}^{w}")?;
        }
        Ok(())
    }
}

impl FromStr for FockState {
    type Err = Error;

    /// Parses the canonical form `"1^3,3^1"`; `"vac"` is the vacuum. A bare
    /// mode without exponent means occupancy one.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "vac" {
            return Ok(FockState::vacuum());
        }
        let mut pairs = Vec::new();
        for factor in s.split(',') {
            let factor = factor.trim();
            let (n, w) = match factor.split_once('^') {
                Some((n, w)) => (n.trim(), w.trim()),
                None => (factor, "1"),
            };
            let n: u32 = n
                .parse()
                .map_err(|_| Error::Parse(format!("bad mode in '{factor}'")))?;
            let w: u32 = w
                .parse()
                .map_err(|_| Error::Parse(format!("bad occupancy in '{factor}'")))?;
            if w == 0 {
                return Err(Error::Parse(format!("zero occupancy in '{factor}'")));
            }
            pairs.push((n, w));
        }
        let mut seen: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parse(format!("repeated mode in '{s}'")));
        }
        FockState::from_occupancies(pairs)
    }
}

impl Serialize for FockState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FockState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ascending free energy, ties broken on the descending part list.
fn basis_order(a: &FockState, b: &FockState) -> Ordering {
    a.inverse_momentum_sum()
        .cmp(&b.inverse_momentum_sum())
        .then_with(|| a.parts_descending().cmp(&b.parts_descending()))
}

/// Ordered Fock basis of one `(K, parity)` sector.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    k: u32,
    parity: Parity,
    states: Vec<FockState>,
    index: HashMap<FockState, usize>,
}

impl PartialEq for SectorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.parity == other.parity && self.states == other.states
    }
}

impl Eq for SectorBasis {}

impl SectorBasis {
    /// All partitions of `k` whose part count has the requested parity,
    /// ordered by increasing free energy.
    pub fn enumerate(k: u32, parity: Parity) -> SectorBasis {
        let mut states: Vec<FockState> = partitions(k)
            .into_iter()
            .map(|parts| {
                let mut modes: Vec<(u32, u32)> = Vec::new();
                for &p in parts.iter().rev() {
                    match modes.last_mut() {
                        Some(last) if last.0 == p => last.1 += 1,
                        _ => modes.push((p, 1)),
                    }
                }
                FockState::from_sorted_unchecked(modes)
            })
            .filter(|s| s.parity() == parity)
            .collect();
        states.sort_by(basis_order);
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        SectorBasis {
            k,
            parity,
            states,
            index,
        }
    }

    /// Basis over an explicit state list, kept in the given order.
    #[cfg(test)]
    pub(crate) fn from_states(k: u32, parity: Parity, states: Vec<FockState>) -> SectorBasis {
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        SectorBasis {
            k,
            parity,
            states,
            index,
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &FockState {
        &self.states[i]
    }

    pub fn position(&self, state: &FockState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Whether a state carries this sector's resolution and parity.
    pub fn admits(&self, state: &FockState) -> bool {
        state.resolution() == self.k && state.parity() == self.parity
    }

    pub fn label(&self) -> String {
        format!("K={}, {}", self.k, self.parity)
    }
}

/// Partitions of `k` as descending part lists, generated recursively.
fn partitions(k: u32) -> Vec<Vec<u32>> {
    fn rec(rest: u32, max: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            out.push(current.clone());
            return;
        }
        for p in (1..=rest.min(max)).rev() {
            current.push(p);
            rec(rest - p, p, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, &mut Vec::new(), &mut out);
    out
}

/// Creator of the free ground state of a sector, in the closed forms for
/// odd parity (`a†_K`) and even parity (`(a†_{K/2})²/√2` or
/// `a†_{(K+1)/2} a†_{(K−1)/2}`).
pub fn ground_state_creator(k: u32, parity: Parity) -> Result<OperatorPolynomial> {
    let create = match (parity, k) {
        (_, 0) | (Parity::Even, 1) => return Err(Error::InvalidSector { k, parity }),
        (Parity::Odd, _) => vec![k],
        (Parity::Even, k) if k % 2 == 0 => vec![k / 2, k / 2],
        (Parity::Even, k) => vec![k.div_ceil(2), (k - 1) / 2],
    };
    let state = FockState::from_parts(&create)?;
    Ok(OperatorPolynomial::from_monomial(state.creator()))
}
