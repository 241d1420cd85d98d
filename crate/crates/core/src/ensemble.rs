//! Velocity-class and transverse-ring decompositions, rethermalization during
//! the hold, and the ensemble-averaged protocol run.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Experiment;
use crate::solver::{run_realization, EnergyBalance, MemoryRunResult, Trace, VelocityClass};

/// Doppler shifts and Maxwell–Boltzmann weights of the velocity classes.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub shifts: Vec<f64>,
    pub weights: Vec<f64>,
}

impl VelocityGrid {
    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn classes(&self) -> Vec<VelocityClass> {
        self.shifts
            .iter()
            .zip(&self.weights)
            .map(|(&shift, &weight)| VelocityClass { shift, weight })
            .collect()
    }
}

/// Gauss–Hermite quadrature for a Gaussian of standard deviation
/// `doppler_sigma` (Golub–Welsch on the probabilists' Hermite recurrence).
pub fn build_velocity_grid(doppler_sigma: f64, n_classes: usize) -> Result<VelocityGrid> {
    if n_classes < 1 {
        return Err(Error::domain("need at least one velocity class"));
    }
    if n_classes == 1 {
        return Ok(VelocityGrid { shifts: vec![0.0], weights: vec![1.0] });
    }
    let n = n_classes;
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eigen = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eigen.eigenvalues[k], eigen.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // exact mirror symmetry about zero
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let j = n - 1 - i;
        nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
        weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(VelocityGrid {
        shifts: nodes.into_iter().map(|x| x * doppler_sigma).collect(),
        weights,
    })
}

/// Annular rings of equal signal energy and the control amplitude each sees.
#[derive(Debug, Clone, PartialEq)]
pub struct RingDecomposition {
    pub control_amplitude_factors: Vec<f64>,
    pub signal_energy_weights: Vec<f64>,
    /// Representative radius of each ring, µm.
    pub radii: Vec<f64>,
}

impl RingDecomposition {
    pub fn len(&self) -> usize {
        self.control_amplitude_factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_amplitude_factors.is_empty()
    }
}

/// Splits the Gaussian signal beam into `n_rings` rings at equal energy
/// quantiles. Each ring is represented by the radius enclosing the middle of
/// its energy share, where the control amplitude is exp(-r²/w_c²).
pub fn build_rings(signal_waist: f64, control_waist: f64, n_rings: usize) -> Result<RingDecomposition> {
    if !(signal_waist > 0.0) || !(control_waist > 0.0) {
        return Err(Error::domain("beam waists must be positive"));
    }
    if n_rings < 1 {
        return Err(Error::domain("need at least one ring"));
    }
    if n_rings == 1 {
        return Ok(RingDecomposition {
            control_amplitude_factors: vec![1.0],
            signal_energy_weights: vec![1.0],
            radii: vec![0.0],
        });
    }
    let n = n_rings as f64;
    // enclosed signal energy: F(r) = 1 - exp(-2 r² / w_s²)
    let radii: Vec<f64> = (0..n_rings)
        .map(|k| {
            let quantile = (k as f64 + 0.5) / n;
            signal_waist * (-(1.0 - quantile).ln() / 2.0).sqrt()
        })
        .collect();
    let control_amplitude_factors = radii
        .iter()
        .map(|r| (-(r * r) / (control_waist * control_waist)).exp())
        .collect();
    Ok(RingDecomposition {
        control_amplitude_factors,
        signal_energy_weights: vec![1.0 / n; n_rings],
        radii,
    })
}

/// Full velocity mixing: every class receives the weighted mean spin wave.
pub fn rethermalize(per_class_spin: &[Vec<C64>], grid: &VelocityGrid) -> Result<Vec<Vec<C64>>> {
    let mut out = per_class_spin.to_vec();
    rethermalize_in_place(&mut out, &grid.weights)?;
    Ok(out)
}

pub fn rethermalize_in_place(spins: &mut [Vec<C64>], weights: &[f64]) -> Result<()> {
    if spins.len() != weights.len() {
        return Err(Error::domain(format!(
            "{} spin profiles for {} velocity classes",
            spins.len(),
            weights.len()
        )));
    }
    let Some(n_z) = spins.first().map(Vec::len) else {
        return Ok(());
    };
    if spins.iter().any(|s| s.len() != n_z) {
        return Err(Error::domain("spin profiles have mismatched lengths"));
    }
    let mut mean = vec![C64::default(); n_z];
    for (w, s) in weights.iter().zip(spins.iter()) {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += *w * v;
        }
    }
    for s in spins.iter_mut() {
        s.copy_from_slice(&mean);
    }
    Ok(())
}

/// Σ_v w_v S_v(z)
pub fn weighted_spin(spins: &[Vec<C64>], weights: &[f64]) -> Vec<C64> {
    let n_z = spins.first().map_or(0, Vec::len);
    let mut acc = vec![C64::default(); n_z];
    for (w, s) in weights.iter().zip(spins) {
        for (a, v) in acc.iter_mut().zip(s) {
            *a += *w * v;
        }
    }
    acc
}

/// Runs every transverse ring with all velocity classes sharing the ring's
/// field, rethermalizes the spin waves during the hold, and combines the rings
/// weighted by their share of the signal energy.
pub fn ensemble_run(experiment: &Experiment) -> Result<MemoryRunResult> {
    experiment.validate()?;
    let cfg = &experiment.ensemble;
    let velocity = build_velocity_grid(cfg.doppler_sigma, cfg.n_velocity_classes)?;
    let rings = build_rings(cfg.signal_waist, cfg.control_waist, cfg.n_rings)?;
    let classes = velocity.classes();
    let weights = velocity.weights.clone();
    let hold = move |spins: &mut [Vec<C64>]| rethermalize_in_place(spins, &weights);

    let per_ring: Vec<Result<MemoryRunResult>> = rings
        .control_amplitude_factors
        .par_iter()
        .enumerate()
        .map(|(ring, &factor)| {
            run_realization(experiment, &classes, factor, &hold).map_err(|e| Error::Realization {
                ring,
                n_classes: classes.len(),
                source: Box::new(e),
            })
        })
        .collect();

    // reduce in ring order, independent of scheduling
    let mut combined = MemoryRunResult::default();
    let mut leakage_trace = Trace::default();
    let mut retrieval_trace = Trace::default();
    let mut balance = EnergyBalance::default();
    for (result, &w) in per_ring.into_iter().zip(&rings.signal_energy_weights) {
        let r = result?;
        if combined.z.is_empty() {
            combined.z = r.z.clone();
            combined.spin_profile = vec![C64::default(); r.z.len()];
        }
        combined.eta_storage += w * r.eta_storage;
        combined.eta_internal += w * r.eta_internal;
        combined.leakage += w * r.leakage;
        combined.eta_after_hold += w * r.eta_after_hold;
        for (a, s) in combined.spin_profile.iter_mut().zip(&r.spin_profile) {
            *a += w * s;
        }
        balance.leaked += w * r.readin_balance.leaked;
        balance.decayed += w * r.readin_balance.decayed;
        balance.stored_spin += w * r.readin_balance.stored_spin;
        balance.residual_optical += w * r.readin_balance.residual_optical;
        leakage_trace.add_scaled(&r.leakage_trace, w);
        retrieval_trace.add_scaled(&r.retrieval_trace, w);
    }
    combined.leakage_trace = leakage_trace;
    combined.retrieval_trace = retrieval_trace;
    combined.readin_balance = balance;
    Ok(combined)
}
