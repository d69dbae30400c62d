//! Normal-ordered bosonic operator algebra over momentum modes.
//!
//! A [`Monomial`] is `c · a†_{i₁}…a†_{i_r} a_{j₁}…a_{j_s}`; an
//! [`OperatorPolynomial`] is a sum of them keyed by their ladder content.
//! Operators act exactly on [`FockState`]s and, by linearity, on
//! [`SectorVector`]s expressed in a [`SectorBasis`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, SectorBasis};

/// Coefficients with magnitude at or below this are dropped after arithmetic.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Tolerance used by [`OperatorPolynomial::is_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Ladder content of a monomial: creators sorted descending, annihilators
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonomialKey {
    create: Vec<u32>,
    annihilate: Vec<u32>,
}

impl MonomialKey {
    pub fn new(mut create: Vec<u32>, mut annihilate: Vec<u32>) -> Self {
        create.sort_unstable_by(|a, b| b.cmp(a));
        annihilate.sort_unstable();
        MonomialKey { create, annihilate }
    }

    pub fn create(&self) -> &[u32] {
        &self.create
    }

    pub fn annihilate(&self) -> &[u32] {
        &self.annihilate
    }

    pub fn adjoint(&self) -> MonomialKey {
        MonomialKey::new(self.annihilate.clone(), self.create.clone())
    }

    pub fn is_scalar(&self) -> bool {
        self.create.is_empty() && self.annihilate.is_empty()
    }

    /// `Σ create − Σ annihilate`.
    pub fn momentum_transfer(&self) -> i64 {
        self.create.iter().map(|&n| n as i64).sum::<i64>()
            - self.annihilate.iter().map(|&n| n as i64).sum::<i64>()
    }

    pub fn particle_change(&self) -> i64 {
        self.create.len() as i64 - self.annihilate.len() as i64
    }

    /// Same multiset of modes created and annihilated.
    pub fn is_number_conserving_diagonal(&self) -> bool {
        let mut c = self.create.clone();
        c.sort_unstable();
        c == self.annihilate
    }

    pub fn max_mode(&self) -> u32 {
        self.create
            .iter()
            .chain(&self.annihilate)
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Acts with the unit-coefficient monomial on a state.
    ///
    /// Annihilators go first in ascending order (factor `√w` each), then
    /// creators (factor `√(w+1)` each). Returns `None` when an annihilator
    /// meets an empty mode.
    pub fn apply(&self, state: &FockState) -> Option<(FockState, f64)> {
        let mut modes: Vec<(u32, u32)> = state.modes().to_vec();
        // Accumulate the integer product under one square root so that
        // e.g. a†a on |1²⟩ yields exactly 2.
        let mut weight = 1.0f64;
        for &n in &self.annihilate {
            let i = modes.binary_search_by_key(&n, |&(m, _)| m).ok()?;
            weight *= f64::from(modes[i].1);
            modes[i].1 -= 1;
            if modes[i].1 == 0 {
                modes.remove(i);
            }
        }
        for &n in &self.create {
            match modes.binary_search_by_key(&n, |&(m, _)| m) {
                Ok(i) => {
                    modes[i].1 += 1;
                    weight *= f64::from(modes[i].1);
                }
                Err(i) => modes.insert(i, (n, 1)),
            }
        }
        Some((FockState::from_sorted_unchecked(modes), weight.sqrt()))
    }
}

impl fmt::Display for MonomialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_scalar() {
            return f.write_str("1");
        }
        let mut first = true;
        for n in &self.create {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "a+{n}")?;
            first = false;
        }
        for n in &self.annihilate {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "a{n}")?;
            first = false;
        }
        Ok(())
    }
}

/// A single ladder operator in a product word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create(u32),
    Annihilate(u32),
}

/// A coefficient times a normal-ordered product of ladder operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    key: MonomialKey,
    coeff: Complex64,
}

impl Monomial {
    pub fn new(create: Vec<u32>, annihilate: Vec<u32>, coeff: Complex64) -> Result<Self> {
        if create.iter().chain(&annihilate).any(|&n| n == 0) {
            return Err(Error::InvalidState("momentum mode 0 is excluded".into()));
        }
        Ok(Monomial {
            key: MonomialKey::new(create, annihilate),
            coeff,
        })
    }

    pub fn from_key(key: MonomialKey, coeff: Complex64) -> Self {
        Monomial { key, coeff }
    }

    /// Builds a monomial from a word written left to right. Every creator
    /// must precede every annihilator; the word is never reordered.
    pub fn from_word(word: &[Ladder], coeff: Complex64) -> Result<Self> {
        let mut create = Vec::new();
        let mut annihilate = Vec::new();
        for (pos, op) in word.iter().enumerate() {
            match *op {
                Ladder::Create(n) => {
                    if !annihilate.is_empty() {
                        return Err(Error::NotNormalOrdered(format!(
                            "creator a+{n} at position {pos} follows an annihilator"
                        )));
                    }
                    create.push(n);
                }
                Ladder::Annihilate(n) => annihilate.push(n),
            }
        }
        Monomial::new(create, annihilate, coeff)
    }

    pub fn key(&self) -> &MonomialKey {
        &self.key
    }

    pub fn coeff(&self) -> Complex64 {
        self.coeff
    }

    pub fn create(&self) -> &[u32] {
        &self.key.create
    }

    pub fn annihilate(&self) -> &[u32] {
        &self.key.annihilate
    }

    pub fn with_coeff(&self, coeff: Complex64) -> Self {
        Monomial {
            key: self.key.clone(),
            coeff,
        }
    }

    pub fn momentum_transfer(&self) -> i64 {
        self.key.momentum_transfer()
    }

    pub fn adjoint(&self) -> Monomial {
        Monomial {
            key: self.key.adjoint(),
            coeff: self.coeff.conj(),
        }
    }

    /// Image of `state` and the total amplitude including the coefficient.
    pub fn apply(&self, state: &FockState) -> Option<(FockState, Complex64)> {
        self.key
            .apply(state)
            .map(|(s, amp)| (s, self.coeff * amp))
    }
}

/// Normal-ordered product of two unit monomials as a list of
/// `(key, combinatorial weight)` terms.
///
/// The interior `A₁ C₂` is reordered mode by mode with
/// `a_n^p (a†_n)^q = Σ_k C(p,k) C(q,k) k! (a†_n)^{q−k} a_n^{p−k}`.
fn wick_product(left: &MonomialKey, right: &MonomialKey) -> Vec<(MonomialKey, f64)> {
    let mut modes: Vec<u32> = left
        .annihilate
        .iter()
        .copied()
        .filter(|n| right.create.contains(n))
        .collect();
    modes.dedup();

    // Start from the fully uncontracted term and branch on each shared mode.
    let mut terms: Vec<(Vec<u32>, Vec<u32>, f64)> =
        vec![(right.create.clone(), left.annihilate.clone(), 1.0)];
    for &n in &modes {
        let p = left.annihilate.iter().filter(|&&m| m == n).count();
        let q = right.create.iter().filter(|&&m| m == n).count();
        let mut next = Vec::new();
        for (cre, ann, w) in &terms {
            for k in 0..=p.min(q) {
                let weight = binomial(p, k) * binomial(q, k) * factorial(k);
                let mut cre = cre.clone();
                let mut ann = ann.clone();
                for _ in 0..k {
                    let i = cre.iter().position(|&m| m == n).unwrap();
                    cre.remove(i);
                    let j = ann.iter().position(|&m| m == n).unwrap();
                    ann.remove(j);
                }
                next.push((cre, ann, w * weight));
            }
        }
        terms = next;
    }

    terms
        .into_iter()
        .map(|(mid_cre, mid_ann, w)| {
            let mut create = left.create.clone();
            create.extend(mid_cre);
            let mut annihilate = mid_ann;
            annihilate.extend(right.annihilate.iter().copied());
            (MonomialKey::new(create, annihilate), w)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// A finite sum of normal-ordered monomials with complex coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorPolynomial {
    terms: BTreeMap<MonomialKey, Complex64>,
}

impl OperatorPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self::scalar(Complex64::new(1.0, 0.0))
    }

    pub fn scalar(c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(MonomialKey::new(vec![], vec![]), c);
        p
    }

    pub fn from_monomial(m: Monomial) -> Self {
        let mut p = Self::zero();
        p.add_monomial(m);
        p
    }

    pub fn from_monomials<I: IntoIterator<Item = Monomial>>(iter: I) -> Self {
        let mut p = Self::zero();
        for m in iter {
            p.add_monomial(m);
        }
        p
    }

    /// Accumulates without pruning; call [`prune`](Self::prune) afterwards.
    pub fn add_term(&mut self, key: MonomialKey, c: Complex64) {
        *self.terms.entry(key).or_insert(Complex64::new(0.0, 0.0)) += c;
    }

    pub fn add_monomial(&mut self, m: Monomial) {
        self.add_term(m.key, m.coeff);
    }

    pub fn prune(&mut self, threshold: f64) {
        self.terms.retain(|_, c| c.norm() > threshold);
    }

    pub fn pruned(mut self) -> Self {
        self.prune(PRUNE_THRESHOLD);
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MonomialKey, &Complex64)> {
        self.terms.iter()
    }

    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.terms
            .iter()
            .map(|(k, c)| Monomial::from_key(k.clone(), *c))
    }

    pub fn coeff(&self, key: &MonomialKey) -> Complex64 {
        self.terms.get(key).copied().unwrap_or_default()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        OperatorPolynomial {
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
        .pruned()
    }

    pub fn adjoint(&self) -> Self {
        OperatorPolynomial {
            terms: self
                .terms
                .iter()
                .map(|(k, c)| (k.adjoint(), c.conj()))
                .collect(),
        }
    }

    /// Largest coefficient deviation between the polynomial and its adjoint.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        self.terms
            .keys()
            .chain(adj.terms.keys())
            .map(|k| (self.coeff(k) - adj.coeff(k)).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= HERMITIAN_TOL
    }

    pub fn max_mode(&self) -> u32 {
        self.terms.keys().map(MonomialKey::max_mode).max().unwrap_or(0)
    }

    /// Normal-ordered product `self · other`.
    pub fn compose(&self, other: &OperatorPolynomial) -> OperatorPolynomial {
        let mut out = OperatorPolynomial::zero();
        for (k1, c1) in &self.terms {
            for (k2, c2) in &other.terms {
                for (key, w) in wick_product(k1, k2) {
                    out.add_term(key, c1 * c2 * w);
                }
            }
        }
        out.pruned()
    }

    /// Applies the polynomial to a single basis state, returning the images
    /// in term order (duplicates are not merged).
    pub fn apply_state(&self, state: &FockState) -> Vec<(FockState, Complex64)> {
        self.terms
            .iter()
            .filter_map(|(k, c)| k.apply(state).map(|(s, a)| (s, c * a)))
            .collect()
    }
}

impl Add for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn add(self, rhs: &OperatorPolynomial) -> OperatorPolynomial {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.add_term(k.clone(), *c);
        }
        out.pruned()
    }
}

impl Sub for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn sub(self, rhs: &OperatorPolynomial) -> OperatorPolynomial {
        self + &(-rhs)
    }
}

impl Neg for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn neg(self) -> OperatorPolynomial {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn mul(self, rhs: &OperatorPolynomial) -> OperatorPolynomial {
        self.compose(rhs)
    }
}

impl fmt::Display for OperatorPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (k, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({:.6}{:+.6}i) {}", c.re, c.im, k)?;
        }
        Ok(())
    }
}

/// JSON term record: `{create: [...], annihilate: [...], re, im}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermRecord {
    create: Vec<u32>,
    annihilate: Vec<u32>,
    re: f64,
    im: f64,
}

impl Serialize for OperatorPolynomial {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let records: Vec<TermRecord> = self
            .terms
            .iter()
            .map(|(k, c)| TermRecord {
                create: k.create.clone(),
                annihilate: k.annihilate.clone(),
                re: c.re,
                im: c.im,
            })
            .collect();
        records.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OperatorPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let records = Vec::<TermRecord>::deserialize(deserializer)?;
        let mut p = OperatorPolynomial::zero();
        for r in records {
            let m = Monomial::new(r.create, r.annihilate, Complex64::new(r.re, r.im))
                .map_err(serde::de::Error::custom)?;
            p.add_monomial(m);
        }
        Ok(p)
    }
}

/// Amplitudes of a state in a sector basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorVector {
    basis: Arc<SectorBasis>,
    amplitudes: DVector<Complex64>,
}

impl SectorVector {
    pub fn new(basis: Arc<SectorBasis>, amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch {
                expected: format!("{} of dimension {}", basis.label(), basis.dim()),
                found: format!("vector of dimension {}", amplitudes.len()),
            });
        }
        Ok(SectorVector { basis, amplitudes })
    }

    pub fn zeros(basis: Arc<SectorBasis>) -> Self {
        let n = basis.dim();
        SectorVector {
            basis,
            amplitudes: DVector::zeros(n),
        }
    }

    /// Unit vector on one basis state.
    pub fn basis_state(basis: Arc<SectorBasis>, state: &FockState) -> Result<Self> {
        let i = basis.position(state).ok_or_else(|| Error::BasisMismatch {
            expected: basis.label(),
            found: state.to_string(),
        })?;
        let mut v = Self::zeros(basis);
        v.amplitudes[i] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn vacuum() -> Self {
        let basis = Arc::new(SectorBasis::enumerate(0, crate::fock::Parity::Even));
        Self::basis_state(basis, &FockState::vacuum()).expect("vacuum sector holds the vacuum")
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, state: &FockState) -> Complex64 {
        self.basis
            .position(state)
            .map(|i| self.amplitudes[i])
            .unwrap_or_default()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() || n <= 1e-12 {
            return Err(Error::DegenerateState(n));
        }
        Ok(SectorVector {
            basis: self.basis.clone(),
            amplitudes: self.amplitudes.unscale(n),
        })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &SectorVector) -> Result<Complex64> {
        ensure_same_basis(&self.basis, &other.basis)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Basis states carrying amplitude above `threshold` in magnitude.
    pub fn support(&self, threshold: f64) -> Vec<&FockState> {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > threshold)
            .map(|(i, _)| self.basis.state(i))
            .collect()
    }
}

/// Dense square matrix of an operator in a sector basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorMatrix {
    basis: Arc<SectorBasis>,
    entries: DMatrix<Complex64>,
}

impl SectorMatrix {
    pub fn new(basis: Arc<SectorBasis>, entries: DMatrix<Complex64>) -> Result<Self> {
        let n = basis.dim();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::BasisMismatch {
                expected: format!("{} of dimension {n}", basis.label()),
                found: format!("{}x{} matrix", entries.nrows(), entries.ncols()),
            });
        }
        Ok(SectorMatrix { basis, entries })
    }

    pub fn identity(basis: Arc<SectorBasis>) -> Self {
        let n = basis.dim();
        SectorMatrix {
            basis,
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn adjoint(&self) -> SectorMatrix {
        SectorMatrix {
            basis: self.basis.clone(),
            entries: self.entries.adjoint(),
        }
    }

    /// `max |H − H†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    /// `max |W†W − I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.entries.adjoint() * &self.entries - DMatrix::identity(n, n)))
    }

    pub fn apply(&self, v: &SectorVector) -> Result<SectorVector> {
        ensure_same_basis(&self.basis, &v.basis)?;
        Ok(SectorVector {
            basis: self.basis.clone(),
            amplitudes: &self.entries * &v.amplitudes,
        })
    }

    pub fn matmul(&self, other: &SectorMatrix) -> Result<SectorMatrix> {
        ensure_same_basis(&self.basis, &other.basis)?;
        Ok(SectorMatrix {
            basis: self.basis.clone(),
            entries: &self.entries * &other.entries,
        })
    }

    /// `max |self − other|` entrywise.
    pub fn max_diff(&self, other: &SectorMatrix) -> Result<f64> {
        ensure_same_basis(&self.basis, &other.basis)?;
        Ok(max_abs(&(&self.entries - &other.entries)))
    }
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn ensure_same_basis(a: &SectorBasis, b: &SectorBasis) -> Result<()> {
    if a.k() != b.k() || a.parity() != b.parity() || a.dim() != b.dim() {
        return Err(Error::BasisMismatch {
            expected: a.label(),
            found: b.label(),
        });
    }
    Ok(())
}

/// Column images of `P` from `from` into `to`, as `to.dim() × from.dim()`.
///
/// Images outside `to`'s resolution or parity are discarded; an image that
/// has them but is not a member of `to` is an error.
pub fn transfer_matrix(
    p: &OperatorPolynomial,
    from: &SectorBasis,
    to: &SectorBasis,
) -> Result<DMatrix<Complex64>> {
    let columns: Vec<Result<Vec<(usize, Complex64)>>> = from
        .states()
        .par_iter()
        .map(|state| {
            let mut col = Vec::new();
            for (image, amp) in p.apply_state(state) {
                match to.position(&image) {
                    Some(i) => col.push((i, amp)),
                    None if to.admits(&image) => {
                        return Err(Error::MissingImage {
                            state: image.to_string(),
                        })
                    }
                    None => {}
                }
            }
            Ok(col)
        })
        .collect();
    let mut m = DMatrix::zeros(to.dim(), from.dim());
    for (j, col) in columns.into_iter().enumerate() {
        for (i, amp) in col? {
            m[(i, j)] += amp;
        }
    }
    Ok(m)
}

/// `P·v`, expressed in the `target` basis.
pub fn apply_operator(
    p: &OperatorPolynomial,
    v: &SectorVector,
    target: &Arc<SectorBasis>,
) -> Result<SectorVector> {
    let m = transfer_matrix(p, &v.basis, target)?;
    Ok(SectorVector {
        basis: target.clone(),
        amplitudes: m * &v.amplitudes,
    })
}

/// Matrix `⟨F_i|P|F_j⟩` on one sector.
pub fn operator_matrix(p: &OperatorPolynomial, basis: &Arc<SectorBasis>) -> SectorMatrix {
    let entries = transfer_matrix(p, basis, basis)
        .expect("a sector basis contains every state of its resolution and parity");
    SectorMatrix {
        basis: basis.clone(),
        entries,
    }
}
