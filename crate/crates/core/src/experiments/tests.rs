use super::*;

#[test]
fn unit_conversion_at_five_gigahertz() {
    let (e, p) = convert_units(1.0, 1.0, 5.0).unwrap();
    // h f = 4.135667696e-15 eV s × 5e9 Hz, ω = 2π × 5e9.
    assert!((e - 2.067_833_848e4).abs() < 1e-4);
    let expect = 4.135_667_696e-15 * 5e9 * 2.0 * std::f64::consts::PI * 5e9;
    assert!((p - expect).abs() / expect < 1e-14);
    assert!((p - 6.4963e5).abs() / 6.4963e5 < 1e-4);
    assert!(convert_units(1.0, 1.0, 0.0).is_err());
}

#[test]
fn table_rows_pair_every_device() {
    let rows = table1_rows();
    assert_eq!(rows.len(), 12);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].0.label, pair[1].0.label);
        assert_eq!(pair[0].0.scheme, Scheme::Parallel);
        assert_eq!(pair[1].0.scheme, Scheme::Collective);
        assert_eq!(pair[1].0.j_mhz, pair[1].0.g_mhz);
        pair[0].0.validate().unwrap();
    }
}

#[test]
fn dimensionless_setup_scales_by_resonator() {
    let (row, _) = &table1_rows()[1];
    let s = row.setup(3, 3).unwrap();
    assert_eq!(s.model.n_qubits, 3);
    assert!((s.model.g - 105.0 / 5700.0).abs() < 1e-15);
    assert!((s.model.omega_q - 6.9 / 5.7).abs() < 1e-15);
    assert!((s.rates.gamma1 - 1.8 / 5700.0).abs() < 1e-15);
    let (par, _) = &table1_rows()[0];
    let p = par.setup(3, 1).unwrap();
    assert_eq!(p.model.n_qubits, 1);
    assert_eq!(p.model.j, 0.0);
}

#[test]
fn closed_single_qubit_trace_is_pure_and_conserves_energy() {
    let setup = ChargeSetup {
        model: ModelParams::resonant_qubits(1, 0.5, 0.0, 6),
        photons: 1,
        rates: DecayRates::closed(),
    };
    let trace = setup
        .prepare()
        .unwrap()
        .trajectory(&IntegratorConfig::with_t_final(20.0, 0.05))
        .unwrap();
    assert!(trace.pure);
    assert!(trace.total_energy_drift() < 1e-7);
    assert!(trace.max_charge() > 0.0);
    assert_eq!(trace.delta_e[0], 0.0);
}

#[test]
fn es_method_parses_round_trip() {
    for m in [EsMethod::SteadyState, EsMethod::Trajectory] {
        assert_eq!(m.to_string().parse::<EsMethod>().unwrap(), m);
    }
    assert!("bogus".parse::<EsMethod>().is_err());
}

#[test]
fn sweep_points_are_row_major() {
    let spec = SweepSpec {
        axes: vec![
            SweepAxis {
                name: "g".into(),
                values: vec![0.1, 0.2],
            },
            SweepAxis {
                name: "j".into(),
                values: vec![0.0, 1.0, 2.0],
            },
        ],
        base: ChargeSetup {
            model: ModelParams::resonant_qubits(2, 0.1, 0.0, 6),
            photons: 1,
            rates: DecayRates::closed(),
        },
        settings: RunSettings::default(),
    };
    spec.validate().unwrap();
    let pts = spec.points().unwrap();
    assert_eq!(pts.len(), 6);
    assert_eq!(pts[1].coords, vec![0.1, 1.0]);
    assert_eq!(pts[3].coords, vec![0.2, 0.0]);
}

#[test]
fn decay_grid_is_logarithmic() {
    let g = decay_grid();
    assert_eq!(g.len(), 10);
    assert_eq!(g[0], 0.001);
    assert_eq!(*g.last().unwrap(), 1.0);
    assert!(g.windows(2).all(|w| w[1] > w[0]));
}
