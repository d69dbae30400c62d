//! Helpers shared by the integration-test targets.
#![allow(dead_code)]

use dlcq_scatter::{FockState, Monomial};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

/// Number of integer partitions of `n`, by the textbook recursion on the
/// largest allowed part. Independent of the crate's enumerator.
pub fn partition_count(n: u32) -> u64 {
    fn count(n: u32, max: u32) -> u64 {
        if n == 0 {
            return 1;
        }
        (1..=max.min(n)).map(|p| count(n - p, p)).sum()
    }
    count(n, n)
}

/// A unitary from the QR factorization of a matrix with uniform entries.
pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> DMatrix<Complex64> {
    let m = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    m.qr().q()
}

/// A random Fock state of resolution at most `k_max` (possibly the vacuum).
pub fn random_state<R: Rng>(rng: &mut R, k_max: u32) -> FockState {
    let mut left = rng.gen_range(0..=k_max);
    let mut parts = Vec::new();
    while left > 0 {
        let p = rng.gen_range(1..=left);
        parts.push(p);
        left -= p;
    }
    FockState::from_parts(&parts).unwrap()
}

/// A random monomial with up to three creators and annihilators on modes `1..=4`.
pub fn random_monomial<R: Rng>(rng: &mut R) -> Monomial {
    let nc = rng.gen_range(0..=3);
    let na = rng.gen_range(0..=3);
    let create = (0..nc).map(|_| rng.gen_range(1..=4)).collect();
    let annihilate = (0..na).map(|_| rng.gen_range(1..=4)).collect();
    let coeff = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Monomial::new(create, annihilate, coeff).unwrap()
}

/// Fock-state labels of the `(6, even)` columns, in basis order.
pub const K6_EVEN_STATES: [&str; 6] = ["3^2", "2^1,4^1", "1^1,5^1", "1^2,2^2", "1^3,3^1", "1^6"];

/// One row of reference `K = 6` amplitudes, rounded to five decimals.
pub struct TableRow {
    pub row: u32,
    pub spec: &'static str,
    pub amplitudes: [f64; 6],
}

/// Rows 1–14. Rows 1–6 are the eigenstates of the even sector, pinned to
/// that parity; the composite rows use the ground state of each `K_j`.
pub const TABLE_ROWS: [TableRow; 14] = [
    TableRow { row: 1, spec: "A:[6,0,even]", amplitudes: [0.85962, -0.50001, 0.00766, 0.05678, -0.08757, 0.00946] },
    TableRow { row: 2, spec: "A:[6,1,even]", amplitudes: [0.4483, 0.75733, -0.47253, -0.04662, 0.00483, -0.00053] },
    TableRow { row: 3, spec: "A:[6,2,even]", amplitudes: [0.22456, 0.40704, 0.87382, -0.09627, -0.10448, 0.01188] },
    TableRow { row: 4, spec: "A:[6,3,even]", amplitudes: [0.0797, -0.06919, 0.03475, -0.62988, 0.75888, -0.12248] },
    TableRow { row: 5, spec: "A:[6,4,even]", amplitudes: [0.05717, 0.0773, 0.10884, 0.76713, 0.6147, -0.11208] },
    TableRow { row: 6, spec: "A:[6,5,even]", amplitudes: [0.00569, 0.00049, 0.00584, 0.00955, 0.16624, 0.986] },
    TableRow { row: 7, spec: "A:[5,0],[1,0]", amplitudes: [0.00002, -0.01073, 0.98935, -0.13779, 0.03858, -0.02455] },
    TableRow { row: 8, spec: "A:[4,0],[2,0]", amplitudes: [-0.00473, 0.99258, 0.0, -0.06986, -0.09874, 0.01151] },
    TableRow { row: 9, spec: "A:[3,0]^2", amplitudes: [0.99217, 0.0, 0.0, 0.0, -0.12238, 0.02475] },
    TableRow { row: 10, spec: "A:[2,0],[4,0]", amplitudes: [0.0, 0.98989, 0.0, -0.14182, 0.0, 0.0] },
    TableRow { row: 11, spec: "A:[1,0],[5,0]", amplitudes: [0.0, 0.0, 0.98653, -0.13576, -0.09109, -0.00611] },
    TableRow { row: 12, spec: "P:[1,0],[5,0]", amplitudes: [0.0, 0.0, 0.98653, -0.13576, -0.09109, -0.00611] },
    TableRow { row: 13, spec: "P:[2,0],[4,0]", amplitudes: [0.0, 0.98989, 0.0, -0.14182, 0.0, 0.0] },
    TableRow { row: 14, spec: "P:[3,0]^2", amplitudes: [0.9918, 0.0, 0.0, 0.0, -0.12532, 0.02504] },
];

/// `ours` with one global phase removed, chosen so that the entry with the
/// largest reference magnitude is real with the reference sign.
pub fn align_phase(ours: &[Complex64], reference: &[f64]) -> Vec<Complex64> {
    let pivot = (0..reference.len())
        .max_by(|&a, &b| reference[a].abs().total_cmp(&reference[b].abs()))
        .unwrap();
    let z = ours[pivot];
    let phase = if z.norm() > 0.0 {
        z.conj() / z.norm() * reference[pivot].signum()
    } else {
        Complex64::new(1.0, 0.0)
    };
    ours.iter().map(|a| a * phase).collect()
}

/// Largest entrywise deviation from `reference` after [`align_phase`].
pub fn row_deviation(ours: &[Complex64], reference: &[f64]) -> f64 {
    align_phase(ours, reference)
        .iter()
        .zip(reference)
        .map(|(a, &p)| (a - Complex64::new(p, 0.0)).norm())
        .fold(0.0, f64::max)
}
