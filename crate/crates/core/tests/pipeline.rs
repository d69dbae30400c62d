//! End-to-end checks of state preparation and dynamics.

use std::sync::Arc;

use dlcq_scatter::fock::{FockState, Parity, SectorBasis};
use dlcq_scatter::hamiltonian::ModelParams;
use dlcq_scatter::scatter::{
    occupancy, pdf_series, prepare_composite, spectral_lines_with, transition_probability_with, CompositeSpec,
    Simulator, TimeGrid,
};
use dlcq_scatter::spectral::sector_spectrum;
use dlcq_scatter::ucc::{fit_cluster_operator, verify_fit, ClusterOperator};

fn sim() -> Simulator {
    Simulator::new(ModelParams::default()).unwrap()
}

fn spec(s: &str) -> CompositeSpec {
    s.parse().unwrap()
}

fn st(s: &str) -> FockState {
    s.parse().unwrap()
}

#[test]
fn single_factor_creators_agree_with_the_eigenvector() {
    let s = sim();
    for k in 1..=5 {
        for parity in [Parity::Even, Parity::Odd] {
            let Ok(d) = s.spectrum(k, parity) else { continue };
            for n in 0..d.dim() {
                let text = format!("[{k},{n},{}]", parity.as_str());
                let a = s.prepare(&spec(&format!("A:{text}"))).unwrap();
                let p = s.prepare(&spec(&format!("P:{text}"))).unwrap();
                let e = d.eigenvector(n);
                assert!((a.amplitudes() - e.amplitudes()).norm() < 1e-9, "dressed {text}");
                assert!((p.amplitudes() - e.amplitudes()).norm() < 1e-12, "polynomial {text}");
            }
        }
    }
}

#[test]
fn dressed_composites_depend_on_factor_order() {
    let s = sim();
    let ab = s.prepare(&spec("A:[2,0],[4,0]")).unwrap();
    let ba = s.prepare(&spec("A:[4,0],[2,0]")).unwrap();
    assert!((ab.amplitudes() - ba.amplitudes()).norm() > 1e-3);
    // The polynomial creators commute.
    let ab = s.prepare(&spec("P:[2,0],[4,0]")).unwrap();
    let ba = s.prepare(&spec("P:[4,0],[2,0]")).unwrap();
    assert!((ab.amplitudes() - ba.amplitudes()).norm() < 1e-12);
}

#[test]
fn eigenbasis_expansion_is_complete() {
    let s = sim();
    let v = s.prepare(&spec("A:[1,0],[5,0]")).unwrap();
    let d = s.spectrum(6, Parity::Even).unwrap();
    let total: f64 = (0..d.dim()).map(|n| d.eigenvector(n).inner(&v).unwrap().norm_sqr()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn transition_probabilities_sum_to_one() {
    let s = sim();
    let i = s.prepare(&spec("A:[3,0]^2")).unwrap();
    let prop = s.propagator(6, Parity::Even).unwrap();
    let d = prop.decomposition();
    let times = [0.0, 1.3, 17.0, 123.4];
    let mut totals = [0.0; 4];
    for n in 0..d.dim() {
        let f = d.eigenvector(n);
        for (acc, p) in totals.iter_mut().zip(transition_probability_with(&prop, &i, &f, &times).unwrap()) {
            *acc += p;
        }
    }
    for t in totals {
        assert!((t - 1.0).abs() < 1e-12);
    }
}

#[test]
fn free_fock_basis_also_sums_to_one() {
    let s = sim();
    let i = s.prepare(&spec("A:[3,0]^2")).unwrap();
    let prop = s.propagator(6, Parity::Even).unwrap();
    let basis = prop.decomposition().basis().clone();
    let t = [42.0];
    let total: f64 = basis
        .states()
        .iter()
        .map(|f| {
            let fv = dlcq_scatter::SectorVector::basis_state(basis.clone(), f).unwrap();
            transition_probability_with(&prop, &i, &fv, &t).unwrap()[0]
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn parton_distribution_moves_weight_into_mode_four() {
    let s = sim();
    let v = s.prepare(&spec("A:[3,0]^2")).unwrap();
    let prop = s.propagator(6, Parity::Even).unwrap();
    let grid = TimeGrid::new(200.0, 2048).unwrap();
    let rows = pdf_series(&prop, &v, &grid.times()).unwrap();
    let max4 = rows.iter().filter(|r| r.n == 4).map(|r| r.value).fold(0.0, f64::max);
    assert!(max4 > 1e-4, "max pdf(4) = {max4}");
    assert!(occupancy(&v, 4) < 1e-12);
    for r in &rows {
        assert!(r.value >= -1e-12);
    }
}

#[test]
fn known_line_appears_between_k6_composites() {
    let s = sim();
    let i = s.prepare(&spec("A:[3,0]^2")).unwrap();
    let f = s.prepare(&spec("A:[2,0],[4,0]")).unwrap();
    let prop = s.propagator(6, Parity::Even).unwrap();
    let lines = spectral_lines_with(&prop, &i, &f).unwrap();
    let e = sector_spectrum(&ModelParams::default(), 6, Parity::Even).unwrap();
    let gap = e.eigenvalues()[1] - e.eigenvalues()[0];
    assert!((gap - 0.274).abs() < 1e-3);
    assert!(lines.iter().any(|l| (l.frequency - gap).abs() < 1e-12));
}

#[test]
fn cluster_round_trips_through_json_and_reproduces_the_same_state() {
    let p = ModelParams::default();
    let c = fit_cluster_operator(&p, 4).unwrap();
    let back = ClusterOperator::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back, c);
    assert!(verify_fit(&back, &p).unwrap().passed());

    let fresh = sim();
    let loaded = sim();
    loaded.insert_cluster(back).unwrap();
    let a = fresh.prepare(&spec("A:[4,0],[2,0]")).unwrap();
    let b = loaded.prepare(&spec("A:[4,0],[2,0]")).unwrap();
    assert_eq!(a, b);

    let other = Simulator::new(ModelParams::new(1.0, 10.0, 12).unwrap()).unwrap();
    assert!(other.insert_cluster(c).is_err());
}

#[test]
fn composites_span_the_expected_sector() {
    let v = prepare_composite(&spec("A:[2,0],[1,0]^2"), &ModelParams::default()).unwrap();
    let b = SectorBasis::enumerate(4, v.basis().parity());
    assert_eq!(v.basis().as_ref(), &b);
    assert!((v.norm() - 1.0).abs() < 1e-12);
    assert!(v.support(1e-12).contains(&&st("1^2,2^1")));
}

#[test]
fn weak_coupling_approaches_free_states() {
    let p = ModelParams::new(1.0, 1e-4, 12).unwrap();
    let v = prepare_composite(&spec("A:[3,0]^2"), &p).unwrap();
    assert!((v.amplitude(&st("3^2")).norm() - 1.0).abs() < 1e-6);
    let basis = Arc::new(SectorBasis::enumerate(6, Parity::Even));
    assert_eq!(v.basis(), &basis);
}
