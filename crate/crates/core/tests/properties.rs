//! Property tests for the invariants of each layer.

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use qbattery::circuit::{build_capacitance_matrix, derive_params, CircuitElements, Regime};
use qbattery::config::RunSpec;
use qbattery::dynamics::{lindblad_rhs, DecayRates, DissipatorForm, OpenSystem};
use qbattery::experiments::convert_units;
use qbattery::hilbert::{embed, DensityMatrix, Operator, SpaceSpec};
use qbattery::linalg;
use qbattery::metrics::{
    average_power, battery_reduced_state, detect_stable_energy, sz_average, PowerConvention,
    StableConfig,
};
use qbattery::model::{build_battery_hamiltonian, build_total_hamiltonian, ModelParams};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn matrix(n: usize) -> impl Strategy<Value = Array2<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_map(move |v| {
        Array2::from_shape_vec((n, n), v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
    })
}

/// Random density matrix `B B† / tr(B B†)`.
fn density(n: usize) -> impl Strategy<Value = DensityMatrix> {
    matrix(n).prop_map(|b| {
        let m = b.dot(&linalg::adjoint(&b));
        let t = linalg::trace(&m).re;
        DensityMatrix::new(m.mapv(|z| z / t))
    })
}

fn elements() -> impl Strategy<Value = CircuitElements> {
    (
        1.0..4.0f64,
        20.0..80.0f64,
        1.0..5.0f64,
        2.0..10.0f64,
        0.0..3.0f64,
        200.0..800.0f64,
        1.0..5.0f64,
        1.0..4.0f64,
        1usize..6,
    )
        .prop_map(|(cj, cb, cg, cc, cn, cr, lr, ej, n)| CircuitElements {
            c_josephson: cj * 1e-15,
            c_shunt: cb * 1e-15,
            c_gate: cg * 1e-15,
            c_coupler: cc * 1e-15,
            c_neighbor: cn * 1e-15,
            c_resonator: cr * 1e-15,
            l_resonator: lr * 1e-9,
            e_josephson: ej * 1e-23,
            n_qubits: n,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn capacitance_matrix_is_symmetric_positive_definite(n in 1usize..=8, c0 in 1e-15..1e-13f64, cn in 1e-16..1e-13f64) {
        let m = build_capacitance_matrix(n, c0, cn).unwrap();
        prop_assert_eq!(&m, &m.t());
        let mc = m.mapv(|x| c(x / c0, 0.0));
        let smallest = linalg::eigvalsh(&mc).unwrap()[0];
        prop_assert!(smallest > 0.0);
    }

    #[test]
    fn derived_parameters_scale_with_capacitance(e in elements(), s in 0.5..4.0f64) {
        let base = derive_params(&e).unwrap();
        let scaled = derive_params(&e.scale_capacitances(s)).unwrap();
        prop_assert!((scaled.e_charging * s / base.e_charging - 1.0).abs() < 1e-12);
        prop_assert!((base.j_coupling / base.omega_q - base.beta / 2.0).abs() < 1e-12 * base.beta.max(1e-300));
    }

    #[test]
    fn regime_is_monotone(a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(Regime::from_ratio(lo) <= Regime::from_ratio(hi));
    }

    #[test]
    fn embedding_is_a_homomorphism(a in matrix(2), b in matrix(2), site in 0usize..3, cutoff in 2usize..4) {
        let space = SpaceSpec::new(3, 2, cutoff).unwrap();
        let (a, b) = (Operator::new(a), Operator::new(b));
        let lhs = embed(&a.dot(&b), site, &space).unwrap();
        let rhs = embed(&a, site, &space).unwrap().dot(&embed(&b, site, &space).unwrap());
        prop_assert!(linalg::max_abs(&(lhs.matrix() - rhs.matrix())) < 1e-12);
        let id = embed(&Operator::identity(2), site, &space).unwrap();
        prop_assert!(linalg::max_abs(&(id.matrix() - Operator::identity(space.dim()).matrix())) == 0.0);
    }

    #[test]
    fn qutrit_embedding_is_a_homomorphism(a in matrix(3), b in matrix(3), site in 0usize..2) {
        let space = SpaceSpec::new(2, 3, 2).unwrap();
        let (a, b) = (Operator::new(a), Operator::new(b));
        let lhs = embed(&a.dot(&b), site, &space).unwrap();
        let rhs = embed(&a, site, &space).unwrap().dot(&embed(&b, site, &space).unwrap());
        prop_assert!(linalg::max_abs(&(lhs.matrix() - rhs.matrix())) < 1e-12);
    }

    #[test]
    fn hamiltonians_are_hermitian(n in 1usize..4, g in -2.0..2.0f64, j in -2.0..2.0f64, wq in 0.2..3.0f64, levels in 2usize..4) {
        let p = ModelParams { omega_q: wq, site_levels: levels, ..ModelParams::resonant_qubits(n, g, j, 4) };
        prop_assert!(build_battery_hamiltonian(&p).unwrap().hermiticity_defect() < 1e-12);
        prop_assert!(build_total_hamiltonian(&p).unwrap().hermiticity_defect() < 1e-12);
    }

    #[test]
    fn battery_spectrum_is_even_in_j(n in 1usize..5, j in 0.0..2.5f64, wq in 0.2..3.0f64) {
        let p = ModelParams { omega_q: wq, ..ModelParams::resonant_qubits(n, 0.0, j, 2) };
        let plus = build_battery_hamiltonian(&p).unwrap().eigenvalues().unwrap();
        let minus = build_battery_hamiltonian(&p.with_j(-j)).unwrap().eigenvalues().unwrap();
        let diff = plus.iter().zip(&minus).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-10);
    }

    #[test]
    fn uncoupled_total_hamiltonian_commutes_with_battery(n in 1usize..4, j in -2.0..2.0f64) {
        let p = ModelParams::resonant_qubits(n, 0.0, j, 3);
        let space = p.space().unwrap();
        let hq = space.lift_battery(&build_battery_hamiltonian(&p).unwrap()).unwrap();
        let h = build_total_hamiltonian(&p).unwrap();
        prop_assert!(h.commutator(&hq).max_abs() < 1e-10);
    }

    #[test]
    fn ground_energy_nonincreasing_in_abs_j(n in 2usize..5, a in 0.0..2.0f64, b in 0.0..2.0f64, sign in prop::bool::ANY) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s = if sign { 1.0 } else { -1.0 };
        let p = ModelParams::resonant_qubits(n, 0.0, s * lo, 2);
        let e_lo = build_battery_hamiltonian(&p).unwrap().eigenvalues().unwrap()[0];
        let e_hi = build_battery_hamiltonian(&p.with_j(s * hi)).unwrap().eigenvalues().unwrap()[0];
        prop_assert!(e_hi <= e_lo + 1e-10);
    }

    #[test]
    fn generator_is_trace_free_and_hermitian(rho in density(12), g in -1.5..1.5f64, j in -1.5..1.5f64,
                                             k in 0.0..0.5f64, g1 in 0.0..0.5f64, g2 in 0.0..0.5f64) {
        let p = ModelParams::resonant_qubits(2, g, j, 3);
        let sys = OpenSystem::new(p.space().unwrap(), build_total_hamiltonian(&p).unwrap(), DecayRates::new(k, g1, g2)).unwrap();
        let dense = lindblad_rhs(&rho, &sys, DissipatorForm::Standard).unwrap();
        prop_assert!(linalg::trace(&dense).norm() < 1e-12);
        prop_assert!(linalg::hermiticity_defect(&dense) < 1e-12);

        let gen = sys.generator(DissipatorForm::Standard).unwrap();
        let mut scratch = gen.scratch();
        let flat: Vec<Complex64> = rho.matrix.iter().copied().collect();
        let mut out = vec![c(0.0, 0.0); flat.len()];
        gen.apply(&flat, &mut out, &mut scratch);
        let fast = Array2::from_shape_vec((12, 12), out).unwrap();
        prop_assert!(linalg::max_abs(&(fast - dense)) < 1e-12);
    }

    #[test]
    fn reduced_state_is_a_density_matrix(rho in density(12)) {
        let space = SpaceSpec::new(2, 2, 3).unwrap();
        let q = battery_reduced_state(&rho, &space).unwrap();
        prop_assert!((q.trace() - rho.trace()).norm() < 1e-12);
        q.validate().unwrap();
        let (total, per_site) = sz_average(&q, &space).unwrap();
        prop_assert!(total.abs() <= 2.0 + 1e-12);
        prop_assert!((total / 2.0 - per_site).abs() < 1e-12);
    }

    #[test]
    fn delta_power_divides_by_time(de in -1.0..5.0f64, eg in -4.0..0.0f64, t in 0.01..100.0f64) {
        prop_assert_eq!(average_power(de, eg, t, PowerConvention::Delta).unwrap(), de / t);
        prop_assert_eq!(average_power(de, eg, t, PowerConvention::Literal).unwrap(), (de + eg) / t);
    }

    #[test]
    fn constant_tail_settles_to_its_value(v in 0.1..10.0f64, n in 1200usize..2500) {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let values: Vec<f64> = times.iter().map(|&t| if t < 20.0 { v * t / 20.0 } else { v }).collect();
        let s = detect_stable_energy(&times, &values, &StableConfig::default()).unwrap();
        prop_assert!(s.settled);
        prop_assert!((s.value - v).abs() < 1e-12 * v);
    }

    #[test]
    fn unit_conversion_is_linear(e in -10.0..10.0f64, p in -10.0..10.0f64, f in 0.5..20.0f64) {
        let (e1, p1) = convert_units(1.0, 1.0, f).unwrap();
        let (ex, px) = convert_units(e, p, f).unwrap();
        prop_assert!((ex - e * e1).abs() <= 1e-12 * e1 * e.abs().max(1.0));
        prop_assert!((px - p * p1).abs() <= 1e-12 * p1 * p.abs().max(1.0));
    }

    #[test]
    fn normalized_spec_is_a_fixed_point(n in 1usize..4, g in 0.0..2.0f64, j in -2.0..2.0f64, k in 0.0..1.0f64,
                                        photons in 0usize..4, extra in 0usize..6) {
        let text = format!(
            "spec_version = 1\n[model]\nn_qubits = {n}\ng = {g:?}\nj = {j:?}\nphotons = {photons}\nfock_cutoff = {}\n[rates]\nkappa = {k:?}\n",
            photons + 2 + extra
        );
        let (spec, _) = RunSpec::load_str(&text, &[]).unwrap();
        let (again, warnings) = RunSpec::load_str(&spec.to_toml().unwrap(), &[]).unwrap();
        prop_assert_eq!(again, spec);
        prop_assert!(warnings.is_empty());
    }
}
