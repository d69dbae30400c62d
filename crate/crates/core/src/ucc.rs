//! Exact unitary-coupled-cluster fit of the wave operator.
//!
//! For every sector `(K', parity)` with `K' ≤ K_max` the modal matrix `W`
//! defines a target block `V = i·ln W`. We look for a single Hermitian
//! normal-ordered polynomial whose matrix equals `V` in every such block,
//! built from a minimal ansatz:
//!
//! * the *diagonal* part uses self-conjugate monomials `a†…a…` over the
//!   same mode multiset, with `r = 1, 2, …` particles;
//! * the *off-diagonal* part starts from one connector per pair of distinct
//!   Fock states (the shortest monomial mapping one to the other) and is
//!   escalated by multiplying with `a†_n a_n` until the linear system is
//!   consistent.
//!
//! Consistency is decided by comparing the numerical ranks of `A` and
//! `(A | h)`; the coefficients are the minimum-norm least-squares solution.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, Parity, SectorBasis};
use crate::hamiltonian::ModelParams;
use crate::opalg::{max_abs, operator_matrix, Monomial, MonomialKey, OperatorPolynomial};
use crate::spectral::{log_unitary, sector_spectrum};

/// Relative singular-value threshold for rank decisions and the solve.
pub const RANK_TOL: f64 = 1e-10;
/// Fitted coefficients at or below this magnitude are dropped.
pub const COEFF_PRUNE: f64 = 1e-12;
/// Largest block residual accepted by [`FitReport::passed`].
pub const FIT_TOL: f64 = 1e-8;

/// The shortest monomial mapping `source` to `target` with unit amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Connector {
    pub source: FockState,
    pub target: FockState,
    pub mono: Monomial,
}

pub fn build_connector(from: &FockState, to: &FockState) -> Result<Connector> {
    if from.resolution() != to.resolution() || from.parity() != to.parity() {
        return Err(Error::IncompatibleStates {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    if from == to {
        return Err(Error::DegenerateConnector(from.to_string()));
    }
    let top = from.modes().iter().chain(to.modes()).map(|&(n, _)| n).max().unwrap_or(0);
    let mut create = Vec::new();
    let mut annihilate = Vec::new();
    for n in 1..=top {
        let (a, b) = (from.occupancy(n), to.occupancy(n));
        if a > b {
            annihilate.extend(std::iter::repeat_n(n, (a - b) as usize));
        } else {
            create.extend(std::iter::repeat_n(n, (b - a) as usize));
        }
    }
    let key = MonomialKey::new(create, annihilate);
    let (image, amp) = key.apply(from).expect("the surplus of `from` is present in `from`");
    debug_assert_eq!(&image, to);
    Ok(Connector {
        source: from.clone(),
        target: to.clone(),
        mono: Monomial::from_key(key, Complex64::new(1.0 / amp, 0.0)),
    })
}

/// Multisets of `r` modes from `1..=k`, descending within each.
fn multisets(k: u32, r: u32) -> Vec<Vec<u32>> {
    fn rec(max: u32, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for n in (1..=max).rev() {
            cur.push(n);
            rec(n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, r, &mut Vec::new(), &mut out);
    out
}

/// Self-conjugate monomials `a†_{i₁}…a†_{i_r} a_{i₁}…a_{i_r}` over modes
/// `≤ K`, for `r = 1..=r_max`, each with unit coefficient.
pub fn generate_diagonal_ansatz(k: u32, r_max: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for r in 1..=r_max {
        for modes in multisets(k, r) {
            let key = MonomialKey::new(modes.clone(), modes);
            out.push(Monomial::from_key(key, Complex64::new(1.0, 0.0)));
        }
    }
    out
}

/// A term `θ·O + θ̄·O†` of the off-diagonal ansatz; `op` carries its fixed
/// prefactor and `θ` is fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPair {
    pub op: Monomial,
    /// Escalation level: 2 for bare connectors, +1 per `a†_n a_n` factor.
    pub level: u32,
}

impl HermitianPair {
    fn canonical(key: &MonomialKey) -> MonomialKey {
        let adj = key.adjoint();
        if adj < *key {
            adj
        } else {
            key.clone()
        }
    }
}

/// Off-diagonal ansatz up to escalation level `r_max` (≥ 2) over the given
/// sector bases. Level 2 holds one connector per unordered pair of distinct
/// states; level `r + 1` multiplies each level-`r` term by `a†_n a_n` for
/// `n = 1..=k_modes`, keeping only monomials not yet present.
pub fn generate_offdiag_ansatz(bases: &[Arc<SectorBasis>], k_modes: u32, r_max: u32) -> Vec<HermitianPair> {
    let mut seen: BTreeSet<MonomialKey> = BTreeSet::new();
    let mut out = Vec::new();
    if r_max < 2 {
        return out;
    }
    for basis in bases {
        for i in 0..basis.dim() {
            for j in 0..i {
                let conn = build_connector(basis.state(j), basis.state(i)).expect("distinct states of one sector");
                if seen.insert(HermitianPair::canonical(conn.mono.key())) {
                    out.push(HermitianPair { op: conn.mono, level: 2 });
                }
            }
        }
    }
    let mut frontier: Vec<usize> = (0..out.len()).collect();
    for level in 3..=r_max {
        let mut next = Vec::new();
        for &idx in &frontier {
            let base = out[idx].op.clone();
            for n in 1..=k_modes {
                // Leading term of the normal-ordered product O · a†_n a_n;
                // the contraction terms reproduce O itself.
                let mut create = base.create().to_vec();
                create.push(n);
                let mut annihilate = base.annihilate().to_vec();
                annihilate.push(n);
                let key = MonomialKey::new(create, annihilate);
                // Terms moving more momentum than any fitted sector holds act as zero.
                if key.create().iter().sum::<u32>() > k_modes {
                    continue;
                }
                if seen.insert(HermitianPair::canonical(&key)) {
                    next.push(out.len());
                    out.push(HermitianPair {
                        op: Monomial::from_key(key, base.coeff()),
                        level,
                    });
                }
            }
        }
        frontier = next;
    }
    out
}

/// Residual of one block after a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResidual {
    pub k: u32,
    pub parity: Parity,
    pub dim: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Particle number of the diagonal ansatz that solved the diagonal part.
    pub r_diagonal: u32,
    /// Escalation level that solved the off-diagonal part.
    pub r_offdiagonal: u32,
    pub diagonal_terms: usize,
    pub offdiagonal_pairs: usize,
    pub blocks: Vec<BlockResidual>,
}

impl FitReport {
    pub fn max_residual(&self) -> f64 {
        self.blocks.iter().map(|b| b.residual).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_residual() <= FIT_TOL
    }
}

/// A fitted Hermitian cluster operator `V` with `W = exp(−iV)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOperator {
    pub k_max: u32,
    pub params: ModelParams,
    pub poly: OperatorPolynomial,
    pub report: FitReport,
}

impl ClusterOperator {
    /// The identity wave operator (no interaction dressing).
    pub fn zero(k_max: u32, params: ModelParams) -> Self {
        ClusterOperator {
            k_max,
            params,
            poly: OperatorPolynomial::zero(),
            report: FitReport {
                r_diagonal: 0,
                r_offdiagonal: 0,
                diagonal_terms: 0,
                offdiagonal_pairs: 0,
                blocks: Vec::new(),
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Number of Hermitian pairs plus self-adjoint terms.
    pub fn independent_terms(&self) -> usize {
        self.poly
            .iter()
            .filter(|(k, _)| **k <= k.adjoint())
            .count()
    }
}

/// Target block `V = i·ln W` for one sector.
#[derive(Debug, Clone)]
struct Target {
    basis: Arc<SectorBasis>,
    v: DMatrix<Complex64>,
}

fn targets(params: &ModelParams, k_max: u32) -> Result<Vec<Target>> {
    let params = params.with_cutoff(params.cutoff.max(k_max));
    let sectors: Vec<(u32, Parity)> = (1..=k_max)
        .flat_map(|k| [(k, Parity::Odd), (k, Parity::Even)])
        .filter(|&(k, p)| !SectorBasis::enumerate(k, p).is_empty())
        .collect();
    sectors
        .par_iter()
        .map(|&(k, parity)| {
            let spec = sector_spectrum(&params, k, parity)?;
            let v = log_unitary(spec.modal())?;
            Ok(Target {
                basis: spec.basis().clone(),
                v: v.entries().clone(),
            })
        })
        .collect()
}

/// Numerical rank relative to the largest singular value.
fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Solves `A x = h` if consistent, returning the minimum-norm solution.
fn solve_consistent(a: &DMatrix<f64>, h: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(DVector::zeros(a.ncols()));
    }
    let mut aug = a.clone().insert_column(a.ncols(), 0.0);
    aug.set_column(a.ncols(), h);
    if rank(a) != rank(&aug) {
        return None;
    }
    if a.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let x = svd.solve(h, RANK_TOL * top).expect("U and V were computed");
    Some(x)
}

fn diagonal_system(targets: &[Target], terms: &[Monomial]) -> (DMatrix<f64>, DVector<f64>) {
    let nrows: usize = targets.iter().map(|t| t.basis.dim()).sum();
    let columns: Vec<Vec<f64>> = terms
        .par_iter()
        .map(|m| {
            let poly = OperatorPolynomial::from_monomial(m.clone());
            targets
                .iter()
                .flat_map(|t| {
                    let mat = operator_matrix(&poly, &t.basis);
                    (0..t.basis.dim()).map(move |i| mat.entries()[(i, i)].re).collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();
    let a = DMatrix::from_fn(nrows, terms.len(), |i, j| columns[j][i]);
    let h = DVector::from_iterator(
        nrows,
        targets.iter().flat_map(|t| (0..t.basis.dim()).map(move |i| t.v[(i, i)].re)),
    );
    (a, h)
}

fn lower_entries(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(|i| (0..i).map(move |j| (i, j)))
}

/// Rows are the real and imaginary parts of every strictly lower-triangular
/// entry; columns are `(Re θ, Im θ)` per pair.
fn offdiag_system(targets: &[Target], pairs: &[HermitianPair]) -> (DMatrix<f64>, DVector<f64>) {
    let nrows: usize = targets.iter().map(|t| t.basis.dim() * (t.basis.dim() - 1)).sum();
    let columns: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .par_iter()
        .map(|pair| {
            let op = OperatorPolynomial::from_monomial(pair.op.clone());
            let adj = op.adjoint();
            let mut col_x = Vec::with_capacity(nrows);
            let mut col_y = Vec::with_capacity(nrows);
            for t in targets {
                let o = operator_matrix(&op, &t.basis);
                let od = operator_matrix(&adj, &t.basis);
                for (i, j) in lower_entries(t.basis.dim()) {
                    let (o, od) = (o.entries()[(i, j)], od.entries()[(i, j)]);
                    // θ o + θ̄ o† with θ = x + iy.
                    let (sum, diff) = (o + od, o - od);
                    col_x.push(sum.re);
                    col_y.push(-diff.im);
                    col_x.push(sum.im);
                    col_y.push(diff.re);
                }
            }
            (col_x, col_y)
        })
        .collect();
    let a = DMatrix::from_fn(nrows, 2 * pairs.len(), |i, j| {
        let (x, y) = &columns[j / 2];
        if j % 2 == 0 {
            x[i]
        } else {
            y[i]
        }
    });
    let h = DVector::from_iterator(
        nrows,
        targets.iter().flat_map(|t| {
            lower_entries(t.basis.dim()).flat_map(move |(i, j)| [t.v[(i, j)].re, t.v[(i, j)].im])
        }),
    );
    (a, h)
}

/// Fits the cluster operator reproducing every modal matrix up to `k_max`.
pub fn fit_cluster_operator(params: &ModelParams, k_max: u32) -> Result<ClusterOperator> {
    params.validate()?;
    if k_max == 0 {
        return Err(Error::InvalidParams("k_max must be at least 1".into()));
    }
    let targets = targets(params, k_max)?;
    let mut poly = OperatorPolynomial::zero();

    // Part I: diagonal monomials, escalating the particle number.
    let mut diag = None;
    for r in 1..=k_max {
        let terms = generate_diagonal_ansatz(k_max, r);
        let (a, h) = diagonal_system(&targets, &terms);
        if let Some(x) = solve_consistent(&a, &h) {
            diag = Some((r, terms, x));
            break;
        }
    }
    let (r_diagonal, diag_terms, x) = diag.ok_or(Error::FitFailure {
        r_max: k_max,
        part: "diagonal",
    })?;
    for (m, &theta) in diag_terms.iter().zip(x.iter()) {
        if theta.abs() > COEFF_PRUNE {
            poly.add_term(m.key().clone(), m.coeff() * theta);
        }
    }

    // Part II: Hermitian connector pairs, escalated with a†_n a_n.
    let bases: Vec<Arc<SectorBasis>> = targets.iter().map(|t| t.basis.clone()).collect();
    let r_top = k_max.max(2);
    let mut offdiag = None;
    for r in 2..=r_top {
        let pairs = generate_offdiag_ansatz(&bases, k_max, r);
        let (a, h) = offdiag_system(&targets, &pairs);
        if let Some(x) = solve_consistent(&a, &h) {
            offdiag = Some((r, pairs, x));
            break;
        }
    }
    let (r_offdiagonal, pairs, x) = offdiag.ok_or(Error::FitFailure {
        r_max: r_top,
        part: "off-diagonal",
    })?;
    let mut n_pairs = 0;
    for (k, pair) in pairs.iter().enumerate() {
        let theta = Complex64::new(x[2 * k], x[2 * k + 1]) * pair.op.coeff();
        if theta.norm() > COEFF_PRUNE {
            poly.add_term(pair.op.key().clone(), theta);
            poly.add_term(pair.op.key().adjoint(), theta.conj());
            n_pairs += 1;
        }
    }
    poly.prune(COEFF_PRUNE);

    let mut cluster = ClusterOperator {
        k_max,
        params: *params,
        poly,
        report: FitReport {
            r_diagonal,
            r_offdiagonal,
            diagonal_terms: diag_terms.len(),
            offdiagonal_pairs: n_pairs,
            blocks: Vec::new(),
        },
    };
    cluster.report.blocks = block_residuals(&cluster.poly, &targets);
    Ok(cluster)
}

fn block_residuals(poly: &OperatorPolynomial, targets: &[Target]) -> Vec<BlockResidual> {
    targets
        .iter()
        .map(|t| {
            let m = operator_matrix(poly, &t.basis);
            BlockResidual {
                k: t.basis.k(),
                parity: t.basis.parity(),
                dim: t.basis.dim(),
                residual: max_abs(&(m.entries() - &t.v)),
            }
        })
        .collect()
}

/// Recomputes every block residual `‖matrix(V) − i·ln W‖_max` for `K' ≤ k_max`.
pub fn verify_fit(c: &ClusterOperator, params: &ModelParams) -> Result<FitReport> {
    let targets = targets(params, c.k_max)?;
    Ok(FitReport {
        blocks: block_residuals(&c.poly, &targets),
        ..c.report.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::exp_hermitian_generator;

    fn st(s: &str) -> FockState {
        s.parse().unwrap()
    }

    #[test]
    fn connector_examples() {
        let c = build_connector(&st("3^1"), &st("1^3")).unwrap();
        assert_eq!(c.mono.create(), &[1, 1, 1]);
        assert_eq!(c.mono.annihilate(), &[3]);
        assert!((c.mono.coeff().re - 1.0 / 6f64.sqrt()).abs() < 1e-15);

        let c = build_connector(&st("2^1,4^1"), &st("1^2,2^2")).unwrap();
        assert_eq!(c.mono.create(), &[2, 1, 1]);
        assert_eq!(c.mono.annihilate(), &[4]);
        let (image, amp) = c.mono.apply(&c.source).unwrap();
        assert_eq!(image, c.target);
        assert!((amp.re - 1.0).abs() < 1e-14);

        assert!(matches!(
            build_connector(&st("1^2"), &st("1^2")),
            Err(Error::DegenerateConnector(_))
        ));
        assert!(matches!(
            build_connector(&st("3^1"), &st("1^1,2^1")),
            Err(Error::IncompatibleStates { .. })
        ));
    }

    #[test]
    fn diagonal_ansatz_examples() {
        let keys: Vec<String> = generate_diagonal_ansatz(2, 1).iter().map(|m| m.key().to_string()).collect();
        assert_eq!(keys, ["a+2 a2", "a+1 a1"]);
        let r2: Vec<MonomialKey> = generate_diagonal_ansatz(2, 2).iter().map(|m| m.key().clone()).collect();
        for (c, a) in [(vec![1, 1], vec![1, 1]), (vec![2, 1], vec![1, 2]), (vec![2, 2], vec![2, 2])] {
            assert!(r2.contains(&MonomialKey::new(c, a)));
        }
        assert!(generate_diagonal_ansatz(4, 0).is_empty());
    }

    #[test]
    fn offdiag_ansatz_small_k() {
        let bases = |k: u32| -> Vec<Arc<SectorBasis>> {
            (1..=k)
                .flat_map(|k| [Parity::Odd, Parity::Even].map(|p| Arc::new(SectorBasis::enumerate(k, p))))
                .filter(|b| !b.is_empty())
                .collect()
        };
        assert!(generate_offdiag_ansatz(&bases(2), 2, 2).is_empty());
        let three = generate_offdiag_ansatz(&bases(3), 3, 2);
        assert_eq!(three.len(), 1);
        assert_eq!(three[0].op.key(), &MonomialKey::new(vec![1, 1, 1], vec![3]));

        // Escalation never duplicates a term or its adjoint.
        let six = generate_offdiag_ansatz(&bases(6), 6, 4);
        let canon: BTreeSet<MonomialKey> = six.iter().map(|p| HermitianPair::canonical(p.op.key())).collect();
        assert_eq!(canon.len(), six.len());
    }

    #[test]
    fn fit_k3_single_pair() {
        let p = ModelParams::default();
        let c = fit_cluster_operator(&p, 3).unwrap();
        assert_eq!(c.independent_terms(), 1);
        assert_eq!(c.poly.len(), 2);
        let theta = c.poly.coeff(&MonomialKey::new(vec![1, 1, 1], vec![3]));
        assert!((theta.norm() - 0.0364).abs() < 1e-4, "{theta}");
        assert!(theta.re.abs() < 1e-10);
        assert!(c.report.passed());
        assert_eq!(c.report.r_offdiagonal, 2);
        assert!(verify_fit(&c, &p).unwrap().passed());
    }

    #[test]
    fn fit_k1_and_free_theory_are_zero() {
        let p = ModelParams::default();
        assert!(fit_cluster_operator(&p, 1).unwrap().poly.is_empty());
        let free = ModelParams::new(1.0, 0.0, 12).unwrap();
        assert!(fit_cluster_operator(&free, 4).unwrap().poly.is_empty());
    }

    #[test]
    fn fit_k4_reproduces_modal_matrices_and_nests() {
        let p = ModelParams::default();
        let c4 = fit_cluster_operator(&p, 4).unwrap();
        assert!(c4.report.passed(), "{:?}", c4.report);
        for (key, z) in c4.poly.iter() {
            assert!(z.re.abs() < 1e-10);
            assert!(!key.is_number_conserving_diagonal());
        }
        for k in 1..=4 {
            for parity in [Parity::Odd, Parity::Even] {
                let b = Arc::new(SectorBasis::enumerate(k, parity));
                if b.is_empty() {
                    continue;
                }
                let w = exp_hermitian_generator(&operator_matrix(&c4.poly, &b)).unwrap();
                let modal = sector_spectrum(&p, k, parity).unwrap();
                assert!(w.max_diff(modal.modal()).unwrap() < 1e-8);
            }
        }
        let c3 = fit_cluster_operator(&p, 3).unwrap();
        for (key, z) in c3.poly.iter() {
            assert!((c4.poly.coeff(key) - z).norm() < 1e-8);
        }
    }

    #[test]
    fn perturbed_fit_is_detected() {
        let p = ModelParams::default();
        let mut c = fit_cluster_operator(&p, 3).unwrap();
        let key = MonomialKey::new(vec![1, 1, 1], vec![3]);
        c.poly.add_term(key.clone(), Complex64::new(0.0, 1e-3));
        c.poly.add_term(key.adjoint(), Complex64::new(0.0, -1e-3));
        assert!(verify_fit(&c, &p).unwrap().max_residual() > 1e-4);

        let zero = ClusterOperator::zero(3, p);
        let r = verify_fit(&zero, &p).unwrap().max_residual();
        assert!((r - 0.0892).abs() < 1e-4);
    }

    #[test]
    fn json_round_trip() {
        let c = fit_cluster_operator(&ModelParams::default(), 3).unwrap();
        let back = ClusterOperator::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back.poly, c.poly);
        assert_eq!(back.k_max, 3);
    }
}
