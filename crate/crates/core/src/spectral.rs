//! Hermitian eigendecomposition with a fixed phase convention, modal
//! matrices, the principal logarithm of unitaries, Hermitian-generator
//! exponentials, and exact propagators.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{Parity, SectorBasis};
use crate::hamiltonian::{hamiltonian_on, ModelParams};
use crate::opalg::{ensure_same_basis, SectorMatrix, SectorVector};

/// Hermiticity tolerance for inputs to the eigensolvers.
pub const HERMITIAN_INPUT_TOL: f64 = 1e-10;
/// Unitarity tolerance for inputs to [`log_unitary`].
pub const UNITARY_INPUT_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Minimum distance of a unitary's eigenvalue from −1.
pub const BRANCH_CUT_TOL: f64 = 1e-8;

/// Eigenvalues in ascending order and the phase-fixed modal matrix whose
/// `n`-th column is the `n`-th eigenvector.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    modal: SectorMatrix,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn modal(&self) -> &SectorMatrix {
        &self.modal
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        self.modal.basis()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, n: usize) -> SectorVector {
        SectorVector::new(self.basis().clone(), self.modal.entries().column(n).into_owned())
            .expect("modal columns match their basis")
    }

    /// `W · diag(λ) · W†`.
    pub fn reconstruct(&self) -> SectorMatrix {
        let w = self.modal.entries();
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(|x| Complex64::new(x, 0.0)));
        SectorMatrix::new(self.basis().clone(), w * d * w.adjoint()).expect("square")
    }

    /// `exp(−iHt)` as a matrix.
    pub fn evolution_operator(&self, t: f64) -> SectorMatrix {
        let w = self.modal.entries();
        let phases = self.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * t));
        let mut scaled = w.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        SectorMatrix::new(self.basis().clone(), scaled * w.adjoint()).expect("square")
    }
}

/// Makes each column's diagonal entry real positive, falling back to the
/// column's largest-magnitude entry when the diagonal entry vanishes.
fn fix_phases(w: &mut DMatrix<Complex64>) {
    for j in 0..w.ncols() {
        let mut pivot = w[(j, j)];
        if pivot.norm() < 1e-12 {
            pivot = w[(argmax_abs(w.column(j)), j)];
        }
        let phase = pivot.conj() / pivot.norm();
        for z in w.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
}

fn argmax_abs(col: nalgebra::DVectorView<'_, Complex64>) -> usize {
    col.iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best })
        .0
}

/// Hermitian eigendecomposition `(ascending eigenvalues, eigenvector columns)`
/// with degenerate blocks ordered by the position of each column's largest
/// component.
fn hermitian_eigen(m: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    // Reorder within blocks of (near-)equal eigenvalues.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] < DEGENERACY_GAP {
            end += 1;
        }
        order[start..end].sort_by_key(|&c| argmax_abs(eig.eigenvectors.column(c)));
        start = end;
    }

    let values = DVector::from_iterator(n, order.iter().map(|&c| eig.eigenvalues[c]));
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Diagonalizes a Hermitian sector matrix.
pub fn diagonalize(h: &SectorMatrix) -> Result<SpectralDecomposition> {
    let defect = h.hermiticity_defect();
    if defect > HERMITIAN_INPUT_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let (eigenvalues, mut w) = hermitian_eigen(h.entries());
    fix_phases(&mut w);
    Ok(SpectralDecomposition {
        eigenvalues,
        modal: SectorMatrix::new(h.basis().clone(), w)?,
    })
}

/// Eigenphases and eigenvectors of `e^{−iγ}W` via its Cayley transform
/// `C = i(I − U)(I + U)⁻¹`, which is Hermitian with eigenvalues `tan(φ/2)`.
/// Phases are returned in `(−π, π)` relative to the rotated matrix.
fn cayley_phases(w: &DMatrix<Complex64>, gamma: f64) -> Option<(Vec<f64>, DMatrix<Complex64>)> {
    let n = w.nrows();
    let id = DMatrix::<Complex64>::identity(n, n);
    let u = w * Complex64::from_polar(1.0, -gamma);
    let inv = (&id + &u).lu().try_inverse()?;
    let cayley = (&id - &u) * inv * Complex64::new(0.0, 1.0);
    let (c, vecs) = hermitian_eigen(&cayley);
    if c.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some((c.iter().map(|&x| 2.0 * x.atan()).collect(), vecs))
}

fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut p = phi.rem_euclid(two_pi);
    if p > std::f64::consts::PI {
        p -= two_pi;
    }
    p
}

/// Principal `V = i·ln W` for a unitary `W`, Hermitian by construction.
///
/// Works through the Cayley transform so the whole computation stays
/// inside the Hermitian eigensolver. The transform loses accuracy for
/// eigenvalues close to −1, so when any eigenphase lies near ±π the matrix is
/// first rotated by a phase inside the widest gap of its spectrum, and the
/// phases are shifted back onto the principal branch afterwards.
pub fn log_unitary(w: &SectorMatrix) -> Result<SectorMatrix> {
    let defect = w.unitarity_defect();
    if defect > UNITARY_INPUT_TOL {
        return Err(Error::NotUnitary(defect));
    }
    let n = w.dim();
    let on_cut = |phi: f64| {
        let z = Complex64::from_polar(1.0, phi);
        ((Complex64::new(1.0, 0.0) + z).norm() < BRANCH_CUT_TOL).then_some(Error::BranchCut { re: z.re, im: z.im })
    };
    let (mut phis, mut u) =
        cayley_phases(w.entries(), 0.0).ok_or(Error::BranchCut { re: -1.0, im: 0.0 })?;
    if let Some(err) = phis.iter().find_map(|&p| on_cut(p)) {
        return Err(err);
    }

    if phis.iter().any(|p| p.abs() > 3.0) {
        // Park the rotation's singular point in the middle of the widest gap.
        let mut sorted = phis.clone();
        sorted.sort_by(f64::total_cmp);
        let two_pi = 2.0 * std::f64::consts::PI;
        let (mut best_gap, mut best_mid) = (0.0, std::f64::consts::PI);
        for k in 0..sorted.len() {
            let lo = sorted[k];
            let hi = if k + 1 < sorted.len() { sorted[k + 1] } else { sorted[0] + two_pi };
            if hi - lo > best_gap {
                best_gap = hi - lo;
                best_mid = 0.5 * (lo + hi);
            }
        }
        let gamma = best_mid - std::f64::consts::PI;
        let (shifted, vecs) = cayley_phases(w.entries(), gamma).ok_or(Error::BranchCut { re: -1.0, im: 0.0 })?;
        phis = shifted.iter().map(|&p| wrap_phase(p + gamma)).collect();
        u = vecs;
        if let Some(err) = phis.iter().find_map(|&p| on_cut(p)) {
            return Err(err);
        }
    }

    // ln e^{iφ} = iφ, so i·ln W has eigenvalues −φ.
    let d = DMatrix::from_diagonal(&DVector::from_iterator(n, phis.iter().map(|&p| Complex64::new(-p, 0.0))));
    let v = &u * d * u.adjoint();
    let v = (&v + v.adjoint()) * Complex64::new(0.5, 0.0);
    SectorMatrix::new(w.basis().clone(), v)
}

/// `exp(−iV)` for a Hermitian `V`.
pub fn exp_hermitian_generator(v: &SectorMatrix) -> Result<SectorMatrix> {
    let defect = v.hermiticity_defect();
    if defect > HERMITIAN_INPUT_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let (vals, u) = hermitian_eigen(v.entries());
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::from_polar(1.0, -vals[j]);
    }
    SectorMatrix::new(v.basis().clone(), scaled * u.adjoint())
}

/// Exact `exp(−iHt)` evolution backed by one decomposition.
#[derive(Debug, Clone)]
pub struct Propagator {
    decomposition: Arc<SpectralDecomposition>,
}

impl Propagator {
    pub fn new(h: &SectorMatrix) -> Result<Self> {
        Ok(Propagator {
            decomposition: Arc::new(diagonalize(h)?),
        })
    }

    pub fn from_decomposition(decomposition: Arc<SpectralDecomposition>) -> Self {
        Propagator { decomposition }
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }

    /// Eigenbasis coefficients `c = W†v`.
    pub fn eigen_coefficients(&self, v: &SectorVector) -> Result<DVector<Complex64>> {
        ensure_same_basis(self.decomposition.basis(), v.basis())?;
        Ok(self.decomposition.modal.entries().adjoint() * v.amplitudes())
    }

    /// `exp(−iHt)·v` given precomputed eigenbasis coefficients.
    pub fn evolve_coefficients(&self, coeffs: &DVector<Complex64>, t: f64) -> SectorVector {
        let d = &self.decomposition;
        let phased = DVector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(d.eigenvalues.iter())
                .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t)),
        );
        SectorVector::new(d.basis().clone(), d.modal.entries() * phased).expect("dimensions match")
    }

    pub fn propagate(&self, v: &SectorVector, t: f64) -> Result<SectorVector> {
        let c = self.eigen_coefficients(v)?;
        Ok(self.evolve_coefficients(&c, t))
    }
}

/// `exp(−iHt)·v`.
pub fn propagate(h: &SectorMatrix, v: &SectorVector, t: f64) -> Result<SectorVector> {
    ensure_same_basis(h.basis(), v.basis())?;
    Propagator::new(h)?.propagate(v, t)
}

/// Decomposition of the full Hamiltonian on one sector.
pub fn sector_spectrum(p: &ModelParams, k: u32, parity: Parity) -> Result<SpectralDecomposition> {
    let basis = Arc::new(SectorBasis::enumerate(k, parity));
    diagonalize(&hamiltonian_on(p, &basis)?)
}

type CacheKey = (u64, u64, u32, u32, Parity);

/// Memoizes one decomposition per `(params, sector)`.
///
/// Entries are immutable once inserted and handed out as `Arc`s; the map
/// itself sits behind a mutex. The decomposition is computed outside the
/// lock, so concurrent misses on the same key may both compute it, with
/// the first insertion winning.
#[derive(Debug, Default)]
pub struct SpectrumCache {
    entries: Mutex<HashMap<CacheKey, Arc<SpectralDecomposition>>>,
}

impl SpectrumCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, p: &ModelParams, k: u32, parity: Parity) -> Result<Arc<SpectralDecomposition>> {
        let key = (p.m.to_bits(), p.lambda.to_bits(), p.cutoff, k, parity);
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let fresh = Arc::new(sector_spectrum(p, k, parity)?);
        let mut map = self.entries.lock().expect("cache lock");
        Ok(map.entry(key).or_insert(fresh).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
