//! The DLCQ φ⁴ light-cone Hamiltonian.
//!
//! ```text
//! H = m² Σ_n (1/n) a†_n a_n
//!   + (λ/4π) [ ¼ Σ_{k+l=m+n} a†_k a†_l a_m a_n / √(klmn)
//!            + ⅙ Σ_{k=l+m+n} (a†_k a_l a_m a_n + h.c.) / √(klmn) ]
//! ```
//!
//! Every summation index runs over `1..=cutoff` as an ordered tuple. The
//! divergent self-induced inertia term is not included.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Parity, SectorBasis};
use crate::opalg::{operator_matrix, MonomialKey, OperatorPolynomial, SectorMatrix};

/// Bare mass, coupling, and the largest momentum mode any operator term
/// may touch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: f64,
    pub lambda: f64,
    pub cutoff: u32,
}

impl Default for ModelParams {
    /// `m = 1`, `λ = 30`, cutoff 12 (large enough for every desk-scale sector).
    fn default() -> Self {
        ModelParams {
            m: 1.0,
            lambda: 30.0,
            cutoff: 12,
        }
    }
}

impl ModelParams {
    pub fn new(m: f64, lambda: f64, cutoff: u32) -> Result<Self> {
        let p = ModelParams { m, lambda, cutoff };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_finite() || self.m <= 0.0 {
            return Err(Error::InvalidParams(format!("mass must be positive, got {}", self.m)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParams(format!("coupling must be finite, got {}", self.lambda)));
        }
        if self.cutoff == 0 {
            return Err(Error::InvalidParams("cutoff must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_cutoff(self, cutoff: u32) -> Self {
        ModelParams { cutoff, ..self }
    }

    /// `λ/4π`.
    pub fn coupling(&self) -> f64 {
        self.lambda / (4.0 * PI)
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `m² Σ_{n ≤ cutoff} (1/n) a†_n a_n`.
pub fn h_free_operator(p: &ModelParams) -> OperatorPolynomial {
    let mut h = OperatorPolynomial::zero();
    for n in 1..=p.cutoff {
        h.add_term(MonomialKey::new(vec![n], vec![n]), real(p.m * p.m / f64::from(n)));
    }
    h.pruned()
}

/// The interaction part: the 2→2 term plus the 1→3 term and its adjoint.
pub fn h_interaction(p: &ModelParams) -> OperatorPolynomial {
    let g = p.coupling();
    let cut = p.cutoff;
    let mut two_two = OperatorPolynomial::zero();
    let mut three_one = OperatorPolynomial::zero();
    for k in 1..=cut {
        for l in 1..=cut {
            for m in 1..=cut {
                for n in 1..=cut {
                    let norm = f64::from(k * l * m * n).sqrt();
                    if k + l == m + n {
                        two_two.add_term(MonomialKey::new(vec![k, l], vec![m, n]), real(g / 4.0 / norm));
                    }
                    if k == l + m + n {
                        three_one.add_term(MonomialKey::new(vec![k], vec![l, m, n]), real(g / 6.0 / norm));
                    }
                }
            }
        }
    }
    let one_three = three_one.adjoint();
    &(&two_two + &three_one) + &one_three
}

/// `H_free + H^I`.
pub fn h_full_operator(p: &ModelParams) -> OperatorPolynomial {
    &h_free_operator(p) + &h_interaction(p)
}

/// `𝒦 = Σ_{n ≤ cutoff} n a†_n a_n`.
pub fn harmonic_resolution_operator(cutoff: u32) -> OperatorPolynomial {
    let mut k = OperatorPolynomial::zero();
    for n in 1..=cutoff {
        k.add_term(MonomialKey::new(vec![n], vec![n]), real(f64::from(n)));
    }
    k
}

/// `a†_n a_n`.
pub fn number_operator(n: u32) -> OperatorPolynomial {
    let mut op = OperatorPolynomial::zero();
    op.add_term(MonomialKey::new(vec![n], vec![n]), real(1.0));
    op
}

fn check_cutoff(p: &ModelParams, k: u32) -> Result<()> {
    p.validate()?;
    if p.cutoff < k {
        return Err(Error::CutoffBelowResolution { cutoff: p.cutoff, k });
    }
    Ok(())
}

/// Matrix of the full Hamiltonian on an already enumerated sector basis.
pub fn hamiltonian_on(p: &ModelParams, basis: &Arc<SectorBasis>) -> Result<SectorMatrix> {
    check_cutoff(p, basis.k())?;
    Ok(operator_matrix(&h_full_operator(p), basis))
}

/// Matrix of the full Hamiltonian on the `(K, parity)` sector.
pub fn sector_hamiltonian(p: &ModelParams, k: u32, parity: Parity) -> Result<SectorMatrix> {
    check_cutoff(p, k)?;
    let basis = Arc::new(SectorBasis::enumerate(k, parity));
    Ok(operator_matrix(&h_full_operator(p), &basis))
}

/// Matrix of the free Hamiltonian on the `(K, parity)` sector.
pub fn sector_free_hamiltonian(p: &ModelParams, k: u32, parity: Parity) -> Result<SectorMatrix> {
    check_cutoff(p, k)?;
    let basis = Arc::new(SectorBasis::enumerate(k, parity));
    Ok(operator_matrix(&h_free_operator(p), &basis))
}
