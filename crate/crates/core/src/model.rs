//! Battery and charger Hamiltonians, battery ground state and the
//! spectrum/population scans versus the nearest-neighbour coupling.
//!
//! Qubit battery: `H_q = (ω_q/2) Σ σ^z_i + J Σ_{i<N} σ^x_i σ^x_{i+1}`.
//! Qutrit battery: `H_q = ω_q Σ S⁺_i S⁻_i − J Σ_{i<N} (S⁻−S⁺)_i (S⁻−S⁺)_{i+1}`.
//! Charger: `ω_r a†a`, coupled by `g (a + a†) Σ σ^x_i` for qubits and
//! `i g (a + a†) Σ (S⁻ − S⁺)_i` for qutrits.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hilbert::{
    bosonic_lowering, qubit_operator, site_lowering, Operator, QubitOp, SpaceSpec, StateVector,
};
use crate::linalg;

/// Dimensionless model parameters (frequencies in units of a reference `ω`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_qubits: usize,
    pub omega_r: f64,
    pub omega_q: f64,
    pub g: f64,
    pub j: f64,
    pub site_levels: usize,
    pub fock_cutoff: usize,
}

impl ModelParams {
    /// Qubit model with `ω_r = ω_q = 1`.
    pub fn resonant_qubits(n_qubits: usize, g: f64, j: f64, fock_cutoff: usize) -> Self {
        Self {
            n_qubits,
            omega_r: 1.0,
            omega_q: 1.0,
            g,
            j,
            site_levels: 2,
            fock_cutoff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space()?;
        for (name, v) in [("omega_r", self.omega_r), ("omega_q", self.omega_q)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("g", self.g), ("j", self.j)] {
            if !v.is_finite() {
                return Err(domain(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Also checks that the cutoff leaves room above the initial Fock state.
    pub fn validate_for_photons(&self, n_photons: usize) -> Result<()> {
        self.validate()?;
        if self.fock_cutoff < n_photons + 2 {
            return Err(domain(format!(
                "fock_cutoff {} must be at least initial photons + 2 = {}",
                self.fock_cutoff,
                n_photons + 2
            )));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<SpaceSpec> {
        SpaceSpec::new(self.n_qubits, self.site_levels, self.fock_cutoff)
    }

    pub fn with_cutoff(&self, fock_cutoff: usize) -> Self {
        Self {
            fock_cutoff,
            ..*self
        }
    }

    pub fn with_j(&self, j: f64) -> Self {
        Self { j, ..*self }
    }
}

/// Starting cutoff before convergence doubling: `photons + 2N + 4`.
pub fn default_cutoff(n_photons: usize, n_qubits: usize) -> usize {
    n_photons + 2 * n_qubits + 4
}

fn site_coupling_operator(levels: usize) -> Result<Operator> {
    match levels {
        2 => qubit_operator(QubitOp::X, 2),
        _ => {
            // i (S⁻ − S⁺), Hermitian
            let s = site_lowering(levels)?;
            Ok((&s - &s.adjoint()).scale(Complex64::new(0.0, 1.0)))
        }
    }
}

/// Battery Hamiltonian on the site factor, dimension `L^N`.
pub fn build_battery_hamiltonian(p: &ModelParams) -> Result<Operator> {
    p.validate()?;
    let space = p.space()?;
    let n = p.n_qubits;
    let on_site = |op: &Operator, i: usize| space.embed_in_battery(op, i);

    let (field, bond_op, bond_sign) = if space.is_qubit() {
        let z = qubit_operator(QubitOp::Z, 2)?;
        (&z * (p.omega_q / 2.0), qubit_operator(QubitOp::X, 2)?, 1.0)
    } else {
        let s = site_lowering(3)?;
        let number = s.adjoint().dot(&s);
        // I² J (S⁻−S⁺)(S⁻−S⁺) = −J (…)(…)
        (&number * p.omega_q, &s - &s.adjoint(), -1.0)
    };

    let mut h = space.battery_sum(&field)?;
    if p.j != 0.0 {
        for i in 0..n.saturating_sub(1) {
            let bond = on_site(&bond_op, i)?.dot(&on_site(&bond_op, i + 1)?);
            h = &h + &(&bond * (bond_sign * p.j));
        }
    }
    Ok(h)
}

/// Full charger + battery Hamiltonian on `resonator ⊗ sites`.
pub fn build_total_hamiltonian(p: &ModelParams) -> Result<Operator> {
    let space = p.space()?;
    let h_q = space.lift_battery(&build_battery_hamiltonian(p)?)?;
    let a = bosonic_lowering(p.fock_cutoff)?;
    let h_r = space.lift_resonator(&(&a.adjoint().dot(&a) * p.omega_r))?;
    let mut h = &h_r + &h_q;
    if p.g != 0.0 {
        let quadrature = &a + &a.adjoint();
        let sites = space.battery_sum(&site_coupling_operator(p.site_levels)?)?;
        h = &h + &(&quadrature.kron(&sites) * p.g);
    }
    Ok(h)
}

/// Lowest eigenpair of a Hermitian operator. Ties are broken by the
/// ascending eigenvalue order of the solver; the vector is normalised with
/// its first non-negligible amplitude made real and positive.
pub fn ground_state(h: &Operator) -> Result<(f64, StateVector)> {
    let (vals, vecs) = linalg::eigh(h.matrix())?;
    let mut v = vecs.column(0).to_owned();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let pivot = v
        .iter()
        .find(|z| z.norm() > 1e-10)
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = pivot.conj() / (pivot.norm() * norm);
    v.mapv_inplace(|z| z * phase);
    Ok((vals[0], StateVector::new(v)))
}

/// `Σ_i σ^z_i` on the battery factor.
pub fn collective_sz(space: &SpaceSpec) -> Result<Operator> {
    space.battery_sum(&qubit_operator(QubitOp::Z, space.site_levels)?)
}

fn require_qubits(p: &ModelParams) -> Result<()> {
    if p.site_levels != 2 {
        return Err(domain("population and spectrum scans need the qubit model"));
    }
    Ok(())
}

fn ground_population_difference(p: &ModelParams) -> Result<f64> {
    let (_, g) = ground_state(&build_battery_hamiltonian(p)?)?;
    let sz = collective_sz(&p.space()?)?;
    let v = &g.amplitudes;
    let value: Complex64 = v
        .iter()
        .zip(sz.matrix().diag().iter())
        .map(|(a, s)| a.conj() * s * a)
        .sum();
    Ok(value.re / p.n_qubits as f64)
}

/// `⟨S_z⟩_G / N = p₁ − p₀` of the battery ground state for each `J`.
pub fn population_difference(p: &ModelParams, j_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    require_qubits(p)?;
    j_grid
        .par_iter()
        .map(|&j| Ok((j, ground_population_difference(&p.with_j(j))?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub j: f64,
    pub energies: Vec<f64>,
    pub gap: f64,
    pub p1_minus_p0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    pub fn to_csv(&self) -> String {
        let levels = self.rows.first().map_or(0, |r| r.energies.len());
        let mut out = String::from("J");
        for k in 0..levels {
            let _ = write!(out, ",E{k}");
        }
        out.push_str(",gap,p1_minus_p0\n");
        for r in &self.rows {
            let _ = write!(out, "{}", r.j);
            for e in &r.energies {
                let _ = write!(out, ",{e}");
            }
            let _ = writeln!(out, ",{},{}", r.gap, r.p1_minus_p0);
        }
        out
    }
}

/// All battery eigenvalues, the ground gap and `p₁ − p₀` for each `J`.
pub fn spectrum_vs_j(p: &ModelParams, j_grid: &[f64]) -> Result<SpectrumTable> {
    require_qubits(p)?;
    let rows = j_grid
        .par_iter()
        .map(|&j| {
            let pj = p.with_j(j);
            let energies = build_battery_hamiltonian(&pj)?.eigenvalues()?;
            Ok(SpectrumRow {
                j,
                gap: energies[1] - energies[0],
                energies,
                p1_minus_p0: ground_population_difference(&pj)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn qubits(n: usize, j: f64) -> ModelParams {
        ModelParams::resonant_qubits(n, 1.0, j, 4)
    }

    /// Battery Hamiltonian from bit manipulation, independent of `embed`.
    fn bitwise_battery(n: usize, wq: f64, j: f64) -> Array2<Complex64> {
        let d = 1 << n;
        let mut h = Array2::zeros((d, d));
        for s in 0..d {
            // site 0 is the most significant bit; bit set = excited
            let bit = |i: usize| (s >> (n - 1 - i)) & 1;
            let z: f64 = (0..n).map(|i| if bit(i) == 1 { 1.0 } else { -1.0 }).sum();
            h[[s, s]] += Complex64::new(wq / 2.0 * z, 0.0);
            for i in 0..n - 1 {
                let flipped = s ^ (1 << (n - 1 - i)) ^ (1 << (n - 2 - i));
                h[[flipped, s]] += Complex64::new(j, 0.0);
            }
        }
        h
    }

    #[test]
    fn single_spin_spectrum() {
        for j in [0.0, 0.7, -2.0] {
            let e = build_battery_hamiltonian(&qubits(1, j))
                .unwrap()
                .eigenvalues()
                .unwrap();
            assert!((e[0] + 0.5).abs() < 1e-14 && (e[1] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn free_spins_ground_state() {
        let h = build_battery_hamiltonian(&qubits(3, 0.0)).unwrap();
        let (e, g) = ground_state(&h).unwrap();
        assert!((e + 1.5).abs() < 1e-14);
        assert!((g.amplitudes[0].re - 1.0).abs() < 1e-14);
        let spectrum = h.eigenvalues().unwrap();
        let expect = [-1.5, -0.5, -0.5, -0.5, 0.5, 0.5, 0.5, 1.5];
        for (a, b) in spectrum.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn battery_matches_bitwise_oracle() {
        for j in [1.0, -0.3] {
            let h = build_battery_hamiltonian(&qubits(3, j)).unwrap();
            let oracle = bitwise_battery(3, 1.0, j);
            assert!(linalg::max_abs(&(h.matrix() - &oracle)) < 1e-15);
            let ours = h.eigenvalues().unwrap();
            let theirs = linalg::eigvalsh(&oracle).unwrap();
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-12);
            }
            let (eg, _) = ground_state(&h).unwrap();
            assert!((eg - theirs[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_energy_even_in_j() {
        for k in 0..=20 {
            let j = k as f64 * 0.1;
            let plus = ground_state(&build_battery_hamiltonian(&qubits(3, j)).unwrap())
                .unwrap()
                .0;
            let minus = ground_state(&build_battery_hamiltonian(&qubits(3, -j)).unwrap())
                .unwrap()
                .0;
            assert!((plus - minus).abs() < 1e-12);
        }
    }

    #[test]
    fn decoupled_total_spectrum_is_sum() {
        let p = ModelParams {
            n_qubits: 2,
            omega_r: 1.3,
            omega_q: 0.7,
            g: 0.0,
            j: 0.0,
            site_levels: 2,
            fock_cutoff: 3,
        };
        let e = build_total_hamiltonian(&p).unwrap().eigenvalues().unwrap();
        let mut expect = Vec::new();
        for n in 0..3 {
            for excited in [0.0, 1.0, 1.0, 2.0] {
                expect.push(1.3 * n as f64 + 0.7 * (excited - 1.0));
            }
        }
        expect.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn total_hamiltonian_hermitian_and_commutes_at_zero_g() {
        for (g, j, levels) in [(0.3, 0.9, 2), (1.7, -0.4, 3), (0.0, 1.1, 2)] {
            let p = ModelParams {
                n_qubits: 2,
                omega_r: 1.0,
                omega_q: 1.2,
                g,
                j,
                site_levels: levels,
                fock_cutoff: 4,
            };
            let h = build_total_hamiltonian(&p).unwrap();
            assert!(h.is_hermitian());
            if g == 0.0 {
                let hq = p
                    .space()
                    .unwrap()
                    .lift_battery(&build_battery_hamiltonian(&p).unwrap())
                    .unwrap();
                assert!(h.commutator(&hq).max_abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rabi_ground_energy_vs_high_cutoff() {
        // quantum Rabi model built directly in the |n, s⟩ basis at cutoff 64
        let cutoff = 64;
        let d = 2 * cutoff;
        let mut h = Array2::<Complex64>::zeros((d, d));
        for n in 0..cutoff {
            for s in 0..2 {
                let k = 2 * n + s;
                h[[k, k]] += Complex64::new(n as f64 + if s == 1 { 0.5 } else { -0.5 }, 0.0);
                if n + 1 < cutoff {
                    let up = 2 * (n + 1) + (1 - s);
                    let amp = Complex64::new(((n + 1) as f64).sqrt(), 0.0);
                    h[[up, k]] += amp;
                    h[[k, up]] += amp;
                }
            }
        }
        let oracle = linalg::eigvalsh(&h).unwrap()[0];
        let p = ModelParams::resonant_qubits(1, 1.0, 0.0, 8);
        let ours = build_total_hamiltonian(&p).unwrap().eigenvalues().unwrap()[0];
        assert!((ours - oracle).abs() < 1e-3, "{ours} vs {oracle}");
    }

    #[test]
    fn qutrit_battery_hermitian_with_expected_free_spectrum() {
        let p = ModelParams {
            site_levels: 3,
            ..ModelParams::resonant_qubits(2, 1.0, 0.0, 4)
        };
        let e = build_battery_hamiltonian(&p)
            .unwrap()
            .eigenvalues()
            .unwrap();
        assert_eq!(e.len(), 9);
        assert!(e[0].abs() < 1e-14 && (e[8] - 4.0).abs() < 1e-14);
        let p = ModelParams { j: 1.0, ..p };
        assert!(build_battery_hamiltonian(&p).unwrap().is_hermitian());
        assert!(build_total_hamiltonian(&p).unwrap().is_hermitian());
    }

    #[test]
    fn population_difference_properties() {
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        let p = qubits(3, 0.0);
        let pos = population_difference(&p, &grid).unwrap();
        let neg_grid: Vec<f64> = grid.iter().map(|j| -j).collect();
        let neg = population_difference(&p, &neg_grid).unwrap();
        assert_eq!(pos[0].1, -1.0);
        for (a, b) in pos.iter().zip(&neg) {
            assert!((a.1 - b.1).abs() < 1e-10);
        }
        for w in pos.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
    }

    #[test]
    fn population_difference_equals_direct_population_sum() {
        let p = qubits(3, 1.0);
        let (_, g) = ground_state(&build_battery_hamiltonian(&p).unwrap()).unwrap();
        let mut excited = 0.0;
        for (s, a) in g.amplitudes.iter().enumerate() {
            excited += a.norm_sqr() * (s as u32).count_ones() as f64;
        }
        let p1 = excited / 3.0;
        let direct = p1 - (1.0 - p1);
        let ours = population_difference(&p, &[1.0]).unwrap()[0].1;
        assert!((ours - direct).abs() < 1e-12);
    }

    #[test]
    fn spectrum_gap_behaviour() {
        let grid: Vec<f64> = (-9..=9).map(|k| k as f64 * 0.1).collect();
        let t = spectrum_vs_j(&qubits(3, 0.0), &grid).unwrap();
        assert!(t.rows.iter().all(|r| r.gap > 0.1));
        let t = spectrum_vs_j(&qubits(3, 0.0), &[0.5, 2.0]).unwrap();
        assert!(t.rows[1].gap < t.rows[0].gap);
        let csv = t.to_csv();
        assert!(csv.starts_with("J,E0,E1,E2,E3,E4,E5,E6,E7,gap,p1_minus_p0\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn cutoff_rules() {
        assert_eq!(default_cutoff(3, 3), 13);
        assert!(qubits(3, 0.0)
            .with_cutoff(4)
            .validate_for_photons(3)
            .is_err());
        assert!(qubits(3, 0.0)
            .with_cutoff(5)
            .validate_for_photons(3)
            .is_ok());
    }
}
