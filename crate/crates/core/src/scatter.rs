//! Composite-state preparation, evolution, and observables.
//!
//! A composite state `|[K₁,n₁]^{w₁}, [K₂,n₂]^{w₂}, …⟩` is built by applying
//! creation operators to the vacuum, rightmost factor first, and then
//! normalizing. Two kinds of creator are available:
//!
//! * *dressed*: `A† = W 𝔞†_F W†` with `W = exp(−iV)` the fitted wave
//!   operator of resolution `K_j`, extended to whatever sector it acts on;
//! * *polynomial*: `P† = Σ_m W_{m n} 𝔞†_{F_m}`, read straight off the
//!   eigenvector's Fock expansion.
//!
//! Both agree on the vacuum and differ otherwise.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Parity, SectorBasis};
use crate::hamiltonian::{hamiltonian_on, ModelParams};
use crate::opalg::{
    ensure_same_basis, operator_matrix, transfer_matrix, OperatorPolynomial, SectorMatrix, SectorVector,
};
use crate::spectral::{exp_hermitian_generator, Propagator, SpectralDecomposition, SpectrumCache};
use crate::ucc::{fit_cluster_operator, ClusterOperator};

/// Eigenvalues closer than this are treated as equal when merging parities
/// and when aggregating spectral lines.
const TIE_TOL: f64 = 1e-10;

/// Spectral lines with weight magnitude below this are dropped.
pub const LINE_PRUNE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum CreatorKind {
    #[default]
    Dressed,
    Polynomial,
}

impl CreatorKind {
    pub fn prefix(self) -> &'static str {
        match self {
            CreatorKind::Dressed => "A",
            CreatorKind::Polynomial => "P",
        }
    }
}

/// One `[K, n]^w` factor, optionally pinned to a parity sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub k: u32,
    pub n: usize,
    pub w: u32,
    pub parity: Option<Parity>,
}

impl Factor {
    pub fn new(k: u32, n: usize, w: u32) -> Self {
        Factor { k, n, w, parity: None }
    }

    pub fn with_parity(self, parity: Parity) -> Self {
        Factor {
            parity: Some(parity),
            ..self
        }
    }
}

/// Ordered creator factors; the rightmost acts on the vacuum first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSpec {
    pub kind: CreatorKind,
    pub factors: Vec<Factor>,
}

impl CompositeSpec {
    pub fn new(kind: CreatorKind, factors: Vec<Factor>) -> Result<Self> {
        let spec = CompositeSpec { kind, factors };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Parse("composite spec has no factors".into()));
        }
        for f in &self.factors {
            if f.k == 0 || f.w == 0 {
                return Err(Error::Parse(format!(
                    "factor [{},{}]^{} needs K ≥ 1 and w ≥ 1",
                    f.k, f.n, f.w
                )));
            }
        }
        Ok(())
    }

    pub fn total_resolution(&self) -> u32 {
        self.factors.iter().map(|f| f.k * f.w).sum()
    }

    /// Applies a parity override to every factor.
    pub fn with_parity(mut self, parity: Parity) -> Self {
        for f in &mut self.factors {
            f.parity = Some(parity);
        }
        self
    }
}

impl fmt::Display for CompositeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.kind.prefix())?;
        for (i, x) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match x.parity {
                Some(p) => write!(f, "[{},{},{}]", x.k, x.n, p)?,
                None => write!(f, "[{},{}]", x.k, x.n)?,
            }
            if x.w != 1 {
                write!(f, "^{}", x.w)?;
            }
        }
        Ok(())
    }
}

impl FromStr for CompositeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, body) = match s.split_once(':') {
            Some((prefix, body)) => {
                let kind = match prefix.trim() {
                    "A" | "a" => CreatorKind::Dressed,
                    "P" | "p" => CreatorKind::Polynomial,
                    other => return Err(Error::Parse(format!("unknown creator kind {other:?} (expected A or P)"))),
                };
                (kind, body)
            }
            None => (CreatorKind::Dressed, s),
        };
        let bad = |why: &str| Error::Parse(format!("invalid composite spec {s:?}: {why}"));

        let mut factors = Vec::new();
        let mut rest = body.trim();
        while !rest.is_empty() {
            rest = rest.strip_prefix('[').ok_or_else(|| bad("factor must start with '['"))?;
            let close = rest.find(']').ok_or_else(|| bad("missing ']'"))?;
            let inner = &rest[..close];
            rest = rest[close + 1..].trim_start();

            let fields: Vec<&str> = inner.split(',').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(bad("expected [K,n] or [K,n,parity]"));
            }
            let k: u32 = fields[0].parse().map_err(|_| bad("K is not a nonnegative integer"))?;
            let n: usize = fields[1].parse().map_err(|_| bad("n is not a nonnegative integer"))?;
            let parity = match fields.get(2) {
                Some(p) => Some(p.parse::<Parity>().map_err(|_| bad("unknown parity"))?),
                None => None,
            };
            let mut w = 1;
            if let Some(after) = rest.strip_prefix('^') {
                let end = after.find(|c: char| !c.is_ascii_digit()).unwrap_or(after.len());
                w = after[..end].parse().map_err(|_| bad("exponent is not a positive integer"))?;
                rest = after[end..].trim_start();
            }
            factors.push(Factor { k, n, w, parity });

            if let Some(after) = rest.strip_prefix(',') {
                rest = after.trim_start();
                if rest.is_empty() {
                    return Err(bad("trailing ','"));
                }
            } else if !rest.is_empty() {
                return Err(bad("factors must be separated by ','"));
            }
        }
        CompositeSpec::new(kind, factors)
    }
}

/// An interacting eigenstate: the `index`-th state of sector `(k, parity)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EigenIndex {
    pub k: u32,
    pub parity: Parity,
    pub index: usize,
}

/// Maps `(K, n)` to a sector and in-sector index.
///
/// Without an override, `n` counts through the eigenvalues of both parity
/// sectors merged in ascending order (odd first on ties). With an override,
/// `n` indexes that sector directly.
pub fn resolve_eigen_index(
    even: Option<&SpectralDecomposition>,
    odd: Option<&SpectralDecomposition>,
    k: u32,
    n: usize,
    parity: Option<Parity>,
) -> Result<EigenIndex> {
    let dim = |d: Option<&SpectralDecomposition>| d.map_or(0, SpectralDecomposition::dim);
    if let Some(parity) = parity {
        let available = match parity {
            Parity::Even => dim(even),
            Parity::Odd => dim(odd),
        };
        if n >= available {
            return Err(Error::IndexOutOfRange { k, index: n, available });
        }
        return Ok(EigenIndex { k, parity, index: n });
    }
    let mut merged: Vec<(f64, Parity, usize)> = Vec::new();
    for (d, p) in [(odd, Parity::Odd), (even, Parity::Even)] {
        if let Some(d) = d {
            merged.extend(d.eigenvalues().iter().enumerate().map(|(i, &e)| (e, p, i)));
        }
    }
    merged.sort_by(|a, b| {
        if (a.0 - b.0).abs() < TIE_TOL {
            // Odd sorts before even.
            (a.1 == Parity::Even).cmp(&(b.1 == Parity::Even))
        } else {
            a.0.total_cmp(&b.0)
        }
    });
    let available = merged.len();
    let &(_, parity, index) = merged.get(n).ok_or(Error::IndexOutOfRange { k, index: n, available })?;
    Ok(EigenIndex { k, parity, index })
}

/// `exp(−i·matrix(V))` on any sector, including sectors above the fit's `K_max`.
pub fn wave_operator_in_sector(c: &ClusterOperator, basis: &Arc<SectorBasis>) -> Result<SectorMatrix> {
    exp_hermitian_generator(&operator_matrix(&c.poly, basis))
}

fn target_basis(v: &SectorVector, k: u32, parity: Parity) -> Arc<SectorBasis> {
    Arc::new(SectorBasis::enumerate(
        v.basis().k() + k,
        v.basis().parity().combine(parity),
    ))
}

/// `W · 𝔞†_F · W† · v`, where `F` is the free state matching `eigen` and `W`
/// is the wave operator of `c` in the current and in the target sector.
/// The result is not renormalized.
pub fn apply_dressed_creation(c: &ClusterOperator, eigen: &EigenIndex, v: &SectorVector) -> Result<SectorVector> {
    let free_basis = SectorBasis::enumerate(eigen.k, eigen.parity);
    if eigen.index >= free_basis.dim() {
        return Err(Error::IndexOutOfRange {
            k: eigen.k,
            index: eigen.index,
            available: free_basis.dim(),
        });
    }
    let creator = OperatorPolynomial::from_monomial(free_basis.state(eigen.index).creator());
    let target = target_basis(v, eigen.k, eigen.parity);
    let w_in = wave_operator_in_sector(c, v.basis())?;
    let w_out = wave_operator_in_sector(c, &target)?;
    let create = transfer_matrix(&creator, v.basis(), &target)?;
    let amplitudes = w_out.entries() * create * (w_in.entries().adjoint() * v.amplitudes());
    SectorVector::new(target, amplitudes)
}

/// `Σ_m W_{m,n} 𝔞†_{F_m} · v` for the `n`-th eigenvector of `modal`.
pub fn apply_polynomial_creation(
    modal: &SpectralDecomposition,
    index: usize,
    v: &SectorVector,
) -> Result<SectorVector> {
    let basis = modal.basis();
    if index >= modal.dim() {
        return Err(Error::IndexOutOfRange {
            k: basis.k(),
            index,
            available: modal.dim(),
        });
    }
    let mut creator = OperatorPolynomial::zero();
    for (m, state) in basis.states().iter().enumerate() {
        let mono = state.creator();
        creator.add_term(mono.key().clone(), mono.coeff() * modal.modal().entries()[(m, index)]);
    }
    let target = target_basis(v, basis.k(), basis.parity());
    let create = transfer_matrix(&creator.pruned(), v.basis(), &target)?;
    SectorVector::new(target, create * v.amplitudes())
}

/// Shared state for a pipeline run: cached decompositions and cluster fits.
#[derive(Debug)]
pub struct Simulator {
    params: ModelParams,
    spectra: SpectrumCache,
    clusters: Mutex<HashMap<u32, Arc<ClusterOperator>>>,
}

impl Simulator {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Simulator {
            params,
            spectra: SpectrumCache::new(),
            clusters: Mutex::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn spectrum(&self, k: u32, parity: Parity) -> Result<Arc<SpectralDecomposition>> {
        self.spectra.get(&self.params, k, parity)
    }

    fn spectrum_if_nonempty(&self, k: u32, parity: Parity) -> Result<Option<Arc<SpectralDecomposition>>> {
        if SectorBasis::enumerate(k, parity).is_empty() {
            Ok(None)
        } else {
            self.spectrum(k, parity).map(Some)
        }
    }

    pub fn hamiltonian(&self, k: u32, parity: Parity) -> Result<SectorMatrix> {
        hamiltonian_on(&self.params, &Arc::new(SectorBasis::enumerate(k, parity)))
    }

    pub fn propagator(&self, k: u32, parity: Parity) -> Result<Propagator> {
        Ok(Propagator::from_decomposition(self.spectrum(k, parity)?))
    }

    /// Cluster operator fitted at `K_max = k`, fitted on first use.
    pub fn cluster(&self, k: u32) -> Result<Arc<ClusterOperator>> {
        if let Some(c) = self.clusters.lock().expect("cluster lock").get(&k) {
            return Ok(c.clone());
        }
        let fitted = Arc::new(fit_cluster_operator(&self.params, k)?);
        let mut map = self.clusters.lock().expect("cluster lock");
        Ok(map.entry(k).or_insert(fitted).clone())
    }

    /// Registers a previously fitted operator so it is not refitted.
    pub fn insert_cluster(&self, c: ClusterOperator) -> Result<()> {
        if c.params != self.params {
            return Err(Error::InvalidParams(format!(
                "cluster operator was fitted with m={}, lambda={}, cutoff={} but the run uses m={}, lambda={}, cutoff={}",
                c.params.m, c.params.lambda, c.params.cutoff, self.params.m, self.params.lambda, self.params.cutoff
            )));
        }
        self.clusters.lock().expect("cluster lock").insert(c.k_max, Arc::new(c));
        Ok(())
    }

    pub fn resolve(&self, k: u32, n: usize, parity: Option<Parity>) -> Result<EigenIndex> {
        let even = self.spectrum_if_nonempty(k, Parity::Even)?;
        let odd = self.spectrum_if_nonempty(k, Parity::Odd)?;
        resolve_eigen_index(even.as_deref(), odd.as_deref(), k, n, parity)
    }

    /// Applies one creator of the given kind to `v`.
    pub fn create(&self, kind: CreatorKind, factor: &Factor, v: &SectorVector) -> Result<SectorVector> {
        let eigen = self.resolve(factor.k, factor.n, factor.parity)?;
        match kind {
            CreatorKind::Dressed => apply_dressed_creation(self.cluster(factor.k)?.as_ref(), &eigen, v),
            CreatorKind::Polynomial => {
                apply_polynomial_creation(self.spectrum(eigen.k, eigen.parity)?.as_ref(), eigen.index, v)
            }
        }
    }

    /// Unnormalized `(C₁†)^{w₁}(C₂†)^{w₂}…|vac⟩`.
    pub fn prepare_unnormalized(&self, spec: &CompositeSpec) -> Result<SectorVector> {
        let mut v = SectorVector::vacuum();
        for factor in spec.factors.iter().rev() {
            for _ in 0..factor.w {
                v = self.create(spec.kind, factor, &v)?;
            }
        }
        Ok(v)
    }

    /// The normalized composite state.
    pub fn prepare(&self, spec: &CompositeSpec) -> Result<SectorVector> {
        self.prepare_unnormalized(spec)?.normalized()
    }
}

/// One-shot composite preparation.
pub fn prepare_composite(spec: &CompositeSpec, params: &ModelParams) -> Result<SectorVector> {
    Simulator::new(*params)?.prepare(spec)
}

/// `|⟨f|e^{−iHt}|i⟩|²` on every time in `times`.
pub fn transition_probability(
    i: &SectorVector,
    f: &SectorVector,
    h: &SectorMatrix,
    times: &[f64],
) -> Result<Vec<f64>> {
    ensure_same_basis(h.basis(), i.basis())?;
    ensure_same_basis(h.basis(), f.basis())?;
    let prop = Propagator::new(h)?;
    transition_probability_with(&prop, i, f, times)
}

/// As [`transition_probability`] with a prebuilt propagator.
pub fn transition_probability_with(
    prop: &Propagator,
    i: &SectorVector,
    f: &SectorVector,
    times: &[f64],
) -> Result<Vec<f64>> {
    ensure_same_basis(prop.decomposition().basis(), f.basis())?;
    let c = prop.eigen_coefficients(i)?;
    times
        .iter()
        .map(|&t| Ok(f.inner(&prop.evolve_coefficients(&c, t))?.norm_sqr()))
        .collect()
}

/// A term `weight · e^{−i·frequency·t}` of a transition probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub frequency: f64,
    pub weight: Complex64,
}

/// Exact line decomposition of `|⟨f|e^{−iHt}|i⟩|²`: frequencies `ω_n − ω_m`
/// with weights `d̄_n c_n d_m c̄_m`, where `c = W†i` and `d = W†f`.
/// Degenerate differences are merged; lines are sorted by frequency.
pub fn spectral_lines(i: &SectorVector, f: &SectorVector, h: &SectorMatrix) -> Result<Vec<SpectralLine>> {
    ensure_same_basis(h.basis(), i.basis())?;
    ensure_same_basis(h.basis(), f.basis())?;
    let prop = Propagator::new(h)?;
    spectral_lines_with(&prop, i, f)
}

/// As [`spectral_lines`] with a prebuilt propagator.
pub fn spectral_lines_with(prop: &Propagator, i: &SectorVector, f: &SectorVector) -> Result<Vec<SpectralLine>> {
    let c = prop.eigen_coefficients(i)?;
    let d = prop.eigen_coefficients(f)?;
    let omega = prop.decomposition().eigenvalues();
    let amp: Vec<Complex64> = (0..c.len()).map(|n| d[n].conj() * c[n]).collect();

    let mut raw: Vec<SpectralLine> = Vec::with_capacity(amp.len() * amp.len());
    for n in 0..amp.len() {
        for m in 0..amp.len() {
            raw.push(SpectralLine {
                frequency: omega[n] - omega[m],
                weight: amp[n] * amp[m].conj(),
            });
        }
    }
    raw.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));

    let mut lines: Vec<SpectralLine> = Vec::new();
    for line in raw {
        match lines.last_mut() {
            Some(last) if (line.frequency - last.frequency).abs() < TIE_TOL => last.weight += line.weight,
            _ => lines.push(line),
        }
    }
    // Snap the merged zero line so the ± pairing is exact.
    for line in &mut lines {
        if line.frequency.abs() < TIE_TOL {
            line.frequency = 0.0;
        }
    }
    lines.retain(|l| l.weight.norm() >= LINE_PRUNE);
    Ok(lines)
}

/// `Re Σ w e^{−iνt}`.
pub fn evaluate_lines(lines: &[SpectralLine], t: f64) -> f64 {
    lines
        .iter()
        .map(|l| (l.weight * Complex64::from_polar(1.0, -l.frequency * t)).re)
        .sum()
}

/// A uniform grid `t_j = j·t_max/(samples − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub samples: usize,
}

impl Default for TimeGrid {
    /// `t ∈ [0, 200]` with 8192 samples: resolves the closest K = 6 lines
    /// (spacing ≈ 0.27) with room to spare.
    fn default() -> Self {
        TimeGrid {
            t_max: 200.0,
            samples: 8192,
        }
    }
}

impl TimeGrid {
    pub fn new(t_max: f64, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::TooFewSamples(samples));
        }
        if !t_max.is_finite() || t_max <= 0.0 {
            return Err(Error::InvalidParams(format!("t_max must be positive, got {t_max}")));
        }
        Ok(TimeGrid { t_max, samples })
    }

    pub fn dt(&self) -> f64 {
        self.t_max / (self.samples - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.samples).map(|j| j as f64 * dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

/// One-sided magnitude spectrum on angular frequencies `ω_k = 2πk/(N·dt)`,
/// `k = 0..=N/2`, so peaks sit directly at energy differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FftSpectrum {
    pub omega: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl FftSpectrum {
    pub fn bin_width(&self) -> f64 {
        if self.omega.len() > 1 {
            self.omega[1] - self.omega[0]
        } else {
            0.0
        }
    }
}

/// DFT magnitudes `|X_k|/N` of a real series sampled every `dt`.
pub fn fft_spectrum(series: &[f64], dt: f64, window: Window) -> Result<FftSpectrum> {
    let n = series.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParams(format!("sample spacing must be positive, got {dt}")));
    }
    let mut buf: Vec<Complex64> = series
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let w = match window {
                Window::Rectangular => 1.0,
                Window::Hann => 0.5 - 0.5 * (2.0 * std::f64::consts::PI * j as f64 / (n - 1) as f64).cos(),
            };
            Complex64::new(x * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    Ok(FftSpectrum {
        omega: (0..=half).map(|k| k as f64 * scale).collect(),
        magnitude: buf[..=half].iter().map(|z| z.norm() / n as f64).collect(),
    })
}

/// Strict local maxima at or above `rel_threshold` times the global maximum.
/// Returns bin indices.
pub fn find_peaks(spectrum: &FftSpectrum, rel_threshold: f64) -> Vec<usize> {
    let mag = &spectrum.magnitude;
    let top = mag.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    (0..mag.len())
        .filter(|&k| {
            let left = if k > 0 { mag[k - 1] } else { f64::NEG_INFINITY };
            let right = mag.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
            mag[k] > left && mag[k] > right && mag[k] >= rel_threshold * top
        })
        .collect()
}

/// Peaks of a transition-probability series: mean removed, Hann window,
/// local maxima at or above 5% of the largest. Returns angular frequencies.
pub fn series_peaks(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    let mean = series.iter().sum::<f64>() / series.len().max(1) as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let spec = fft_spectrum(&centered, dt, Window::Hann)?;
    Ok(find_peaks(&spec, 0.05).into_iter().map(|k| spec.omega[k]).collect())
}

/// `⟨v|a†_n a_n|v⟩`.
pub fn occupancy(v: &SectorVector, n: u32) -> f64 {
    v.amplitudes()
        .iter()
        .zip(v.basis().states())
        .map(|(a, s)| a.norm_sqr() * f64::from(s.occupancy(n)))
        .sum()
}

/// Time-dependent parton distribution `⟨v(t)|a†_n a_n|v(t)⟩`.
pub fn pdf(state: &SectorVector, h: &SectorMatrix, mode: u32, t: f64) -> Result<f64> {
    if mode == 0 {
        return Err(Error::InvalidParams("mode 0 is excluded".into()));
    }
    let prop = Propagator::new(h)?;
    Ok(occupancy(&prop.propagate(state, t)?, mode))
}

/// One `(t, n, value)` row of a PDF table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdfSample {
    pub t: f64,
    pub n: u32,
    pub value: f64,
}

/// PDF for every mode `1..=K` at every time.
pub fn pdf_series(prop: &Propagator, state: &SectorVector, times: &[f64]) -> Result<Vec<PdfSample>> {
    let k = state.basis().k();
    let c = prop.eigen_coefficients(state)?;
    let mut out = Vec::with_capacity(times.len() * k as usize);
    for &t in times {
        let v = prop.evolve_coefficients(&c, t);
        for n in 1..=k {
            out.push(PdfSample {
                t,
                n,
                value: occupancy(&v, n),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockState;

    fn st(s: &str) -> FockState {
        s.parse().unwrap()
    }

    fn sim() -> Simulator {
        Simulator::new(ModelParams::default()).unwrap()
    }

    #[test]
    fn spec_parsing() {
        let s: CompositeSpec = "A:[3,0]^2".parse().unwrap();
        assert_eq!(s.kind, CreatorKind::Dressed);
        assert_eq!(s.factors, vec![Factor::new(3, 0, 2)]);
        assert_eq!(s.to_string(), "A:[3,0]^2");

        let s: CompositeSpec = "P:[2,0],[4,0]".parse().unwrap();
        assert_eq!(s.kind, CreatorKind::Polynomial);
        assert_eq!(s.factors, vec![Factor::new(2, 0, 1), Factor::new(4, 0, 1)]);

        let s: CompositeSpec = "[6,2,even]".parse().unwrap();
        assert_eq!(s.factors[0].parity, Some(Parity::Even));
        assert_eq!(s.to_string().parse::<CompositeSpec>().unwrap(), s);
        assert_eq!(s.total_resolution(), 6);

        for bad in ["", "A:", "Q:[3,0]", "[3]", "[3,0]^0", "[0,0]", "[3,0],", "[3,0][2,0]", "[3,x]"] {
            assert!(bad.parse::<CompositeSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn merged_index_resolution() {
        let s = sim();
        // K = 6: the even-sector eigenstates are reachable by pinning parity.
        let e = s.resolve(6, 0, Some(Parity::Even)).unwrap();
        assert_eq!((e.parity, e.index), (Parity::Even, 0));
        assert!(matches!(s.resolve(6, 11, None), Err(Error::IndexOutOfRange { available: 11, .. })));
        assert!(matches!(
            s.resolve(6, 5, Some(Parity::Odd)),
            Err(Error::IndexOutOfRange { available: 5, .. })
        ));
        for k in 1..=5 {
            assert_eq!(s.resolve(k, 0, None).unwrap().parity, Parity::Odd);
        }
    }

    #[test]
    fn single_dressed_creation_gives_eigenvector() {
        let s = sim();
        let v = s.prepare(&"A:[3,0]".parse().unwrap()).unwrap();
        assert!((v.amplitude(&st("3^1")).norm() - 0.996).abs() < 1e-3);
        assert!((v.amplitude(&st("1^3")).norm() - 0.089).abs() < 1e-3);
        let p = s.prepare(&"P:[3,0]".parse().unwrap()).unwrap();
        assert!((v.amplitudes() - p.amplitudes()).norm() < 1e-10);

        let one = s.prepare(&"A:[1,0]".parse().unwrap()).unwrap();
        assert!((one.amplitude(&st("1^1")) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_cluster_is_free_creation() {
        let c = ClusterOperator::zero(3, ModelParams::default());
        let e = EigenIndex {
            k: 3,
            parity: Parity::Odd,
            index: 1,
        };
        let v = apply_dressed_creation(&c, &e, &SectorVector::vacuum()).unwrap();
        assert!((v.amplitude(&st("1^3")).re - 1.0).abs() < 1e-14);
        let b = Arc::new(SectorBasis::enumerate(6, Parity::Even));
        let w = wave_operator_in_sector(&c, &b).unwrap();
        assert!(w.max_diff(&SectorMatrix::identity(b)).unwrap() < 1e-15);
    }

    #[test]
    fn double_k3_composite() {
        let v = sim().prepare(&"A:[3,0]^2".parse().unwrap()).unwrap();
        assert!((v.amplitude(&st("3^2")).norm() - 0.99217).abs() < 2e-4);
        assert!((v.amplitude(&st("1^3,3^1")).norm() - 0.12238).abs() < 2e-4);
        assert!((v.amplitude(&st("1^6")).norm() - 0.02475).abs() < 2e-4);
        assert!((occupancy(&v, 3) - 1.984).abs() < 1e-3);
        assert!((occupancy(&v, 1) - 0.0486).abs() < 1e-3);
    }

    #[test]
    fn lines_match_series() {
        let s = sim();
        let i = s.prepare(&"A:[3,0]^2".parse().unwrap()).unwrap();
        let f = s.prepare(&"A:[2,0],[4,0]".parse().unwrap()).unwrap();
        let prop = s.propagator(6, Parity::Even).unwrap();
        let times: Vec<f64> = (0..50).map(|j| j as f64 * 0.7).collect();
        let series = transition_probability_with(&prop, &i, &f, &times).unwrap();
        let lines = spectral_lines_with(&prop, &i, &f).unwrap();
        for (t, p) in times.iter().zip(&series) {
            assert!((evaluate_lines(&lines, *t) - p).abs() < 1e-12);
        }
        assert!(lines.iter().any(|l| (l.frequency - 0.274).abs() < 1e-3 && l.weight.norm() > 0.0));
        // ± pairing.
        for l in &lines {
            let partner = lines.iter().find(|m| (m.frequency + l.frequency).abs() < 1e-12).unwrap();
            assert!((partner.weight - l.weight.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn fft_basics() {
        assert!(matches!(fft_spectrum(&[1.0], 0.1, Window::Rectangular), Err(Error::TooFewSamples(1))));
        let flat = fft_spectrum(&[2.0; 64], 0.1, Window::Rectangular).unwrap();
        assert!((flat.magnitude[0] - 2.0).abs() < 1e-12);
        assert!(flat.magnitude[1..].iter().all(|m| *m < 1e-12));

        let grid = TimeGrid::default();
        let series: Vec<f64> = grid.times().iter().map(|t| (1.164 * t).cos()).collect();
        let peaks = series_peaks(&series, grid.dt()).unwrap();
        let spec = fft_spectrum(&series, grid.dt(), Window::Rectangular).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0] - 1.164).abs() <= spec.bin_width());
    }

    #[test]
    fn pdf_sum_rule() {
        let s = sim();
        let v = s.prepare(&"A:[3,0]^2".parse().unwrap()).unwrap();
        let prop = s.propagator(6, Parity::Even).unwrap();
        let rows = pdf_series(&prop, &v, &[0.0, 5.0, 40.0]).unwrap();
        for chunk in rows.chunks(6) {
            let sum: f64 = chunk.iter().map(|r| f64::from(r.n) * r.value).sum();
            assert!((sum - 6.0).abs() < 1e-9);
        }
        let h = s.hamiltonian(6, Parity::Even).unwrap();
        assert!((pdf(&v, &h, 3, 0.0).unwrap() - rows[2].value).abs() < 1e-12);
    }
}
