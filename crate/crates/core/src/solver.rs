//! Comoving-frame Maxwell–Bloch integrator for the four-level Λ memory and the
//! three-stage storage protocol (read-in, hold, read-out).
//!
//! Per velocity class v the atoms carry optical coherences P1, P2 and the
//! spin wave S on the collocation grid; all classes of one transverse ring
//! share a single signal field E:
//!
//! ```text
//! ∂z E   = i g Σ_v w_v (c1 P1 + c2 P2),            g = sqrt(d γ / 2L)
//! ∂t Pj  = -[γ + i(Δj + δv)] Pj + i cj g E + i (bj Ω/2) S
//! ∂t S   = -[γs + i(Δtp + f δv)] S + i Σ_j (bj Ω*/2) Pj
//! ```
//!
//! With this normalization a resonant two-level medium transmits the
//! intensity fraction exp(-d). The diagonal decay/detuning terms are stepped
//! with the trapezoidal rule, the couplings with a Heun predictor-corrector,
//! and the field is slaved to the polarization at every stage of the step.

use std::io::{self, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::chebyshev::{chebyshev_diff_matrix, ChebyshevGrid};
use crate::error::{Error, Result};
use crate::model::{EnsembleConfig, Experiment, LevelScheme, PulseSpec};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Stage windows extend this many FWHM beyond each pulse center.
pub const WINDOW_PAD_FWHM: f64 = 4.0;

/// Upper bound on steps per stage before a configuration is rejected.
const MAX_STAGE_STEPS: usize = 5_000_000;

/// One atomic velocity class with its quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityClass {
    /// One-photon Doppler shift, rad/ns.
    pub shift: f64,
    pub weight: f64,
}

impl VelocityClass {
    pub const AT_REST: VelocityClass = VelocityClass { shift: 0.0, weight: 1.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomState {
    pub p1: Vec<C64>,
    pub p2: Vec<C64>,
    pub spin: Vec<C64>,
}

impl AtomState {
    fn zeros(n: usize) -> Self {
        AtomState { p1: vec![C64::default(); n], p2: vec![C64::default(); n], spin: vec![C64::default(); n] }
    }
}

/// Field and atomic variables on the collocation grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub e_field: Vec<C64>,
    /// One entry per velocity class, in the order of the medium's classes.
    pub classes: Vec<AtomState>,
}

impl FieldState {
    pub fn zeros(n_z: usize, n_classes: usize, t: f64) -> Self {
        FieldState {
            t,
            e_field: vec![C64::default(); n_z],
            classes: (0..n_classes).map(|_| AtomState::zeros(n_z)).collect(),
        }
    }

    /// Output field at the cell exit.
    pub fn outlet(&self) -> C64 {
        *self.e_field.last().expect("non-empty grid")
    }
}

#[derive(Debug, Clone)]
struct ClassCoefficients {
    weight: f64,
    /// Trapezoidal propagators (1 + hΛ/2)/(1 - hΛ/2) for P1, P2, S.
    prop: [C64; 3],
    /// h/(1 - hΛ/2) for P1, P2, S.
    gain: [C64; 3],
}

/// Precomputed operators for one ring: grid, couplings and per-class
/// propagators at a fixed time step.
#[derive(Debug, Clone)]
pub struct Medium {
    grid: ChebyshevGrid,
    /// Row-major (n-1)×(n-1) antiderivative on the interior nodes.
    antideriv: Vec<f64>,
    coupling: f64,
    c: [f64; 2],
    b: [f64; 2],
    gamma: f64,
    gamma_spin: f64,
    dt: f64,
    classes: Vec<ClassCoefficients>,
}

/// Driving fields of one stage.
pub struct Drive<'a> {
    /// Control Rabi frequency Ω(t), rad/ns.
    pub control: &'a dyn Fn(f64) -> f64,
    /// Signal field entering the cell at z = 0.
    pub input: &'a dyn Fn(f64) -> C64,
}

impl Medium {
    pub fn new(scheme: &LevelScheme, config: &EnsembleConfig, classes: &[VelocityClass]) -> Result<Self> {
        Self::with_step(scheme, config, classes, config.dt)
    }

    pub fn with_step(
        scheme: &LevelScheme,
        config: &EnsembleConfig,
        classes: &[VelocityClass],
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::domain("time step must be positive"));
        }
        if classes.is_empty() {
            return Err(Error::domain("at least one velocity class is required"));
        }
        let grid = chebyshev_diff_matrix(config.n_z, config.cell_length)?;
        let q = grid.antiderivative()?;
        let m = config.n_z - 1;
        let mut antideriv = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                antideriv.push(q[(i, j)]);
            }
        }
        let gamma = scheme.gamma();
        let coupling = (config.homogeneous_optical_depth(gamma) * gamma / (2.0 * config.cell_length)).sqrt();
        let [delta1, delta2] = scheme.excited_detunings();
        let classes = classes
            .iter()
            .map(|cls| {
                let lambda = [
                    -C64::new(gamma, delta1 + cls.shift),
                    -C64::new(gamma, delta2 + cls.shift),
                    -C64::new(
                        scheme.gamma_spin,
                        scheme.delta_twophoton + config.twophoton_doppler_fraction * cls.shift,
                    ),
                ];
                let prop = lambda.map(|l| (1.0 + 0.5 * dt * l) / (1.0 - 0.5 * dt * l));
                let gain = lambda.map(|l| dt / (1.0 - 0.5 * dt * l));
                ClassCoefficients { weight: cls.weight, prop, gain }
            })
            .collect();
        Ok(Medium {
            grid,
            antideriv,
            coupling,
            c: scheme.coupling_signal,
            b: scheme.coupling_control,
            gamma,
            gamma_spin: scheme.gamma_spin,
            dt,
            classes,
        })
    }

    pub fn grid(&self) -> &ChebyshevGrid {
        &self.grid
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn zero_state(&self, t: f64) -> FieldState {
        FieldState::zeros(self.grid.len(), self.classes.len(), t)
    }

    /// Solves the propagation equation for the field slaved to the
    /// polarization in `classes`, with `E(0) = input`.
    fn solve_field(&self, classes: &[AtomState], input: C64, source: &mut [C64], field: &mut [C64]) {
        let n = self.grid.len();
        source.iter_mut().for_each(|s| *s = C64::default());
        let [c1, c2] = self.c;
        for (cls, atoms) in self.classes.iter().zip(classes) {
            let w = cls.weight;
            for k in 1..n {
                source[k] += w * (c1 * atoms.p1[k] + c2 * atoms.p2[k]);
            }
        }
        let ig = I * self.coupling;
        field[0] = input;
        let m = n - 1;
        for (i, row) in self.antideriv.chunks_exact(m).enumerate() {
            let mut acc = C64::default();
            for (q, s) in row.iter().zip(&source[1..]) {
                acc += *q * s;
            }
            field[i + 1] = input + ig * acc;
        }
    }

    /// Refreshes `state.e_field` from the atomic variables and the boundary
    /// value at the current time.
    pub fn update_field(&self, state: &mut FieldState, input: C64) {
        let mut source = vec![C64::default(); self.grid.len()];
        let FieldState { classes, e_field, .. } = state;
        self.solve_field(classes, input, &mut source, e_field);
    }

    /// Advances `state` by one time step. `state.e_field` must be consistent
    /// with the atoms and the input at `state.t` (see [`Medium::update_field`]).
    pub fn step(&self, state: &FieldState, drive: &Drive<'_>, work: &mut Workspace) -> FieldState {
        let mut next = state.clone();
        self.step_in_place(state, &mut next, drive, work);
        next
    }

    fn step_in_place(&self, state: &FieldState, next: &mut FieldState, drive: &Drive<'_>, work: &mut Workspace) {
        let n = self.grid.len();
        let t0 = state.t;
        let t1 = t0 + self.dt;
        let half_omega0 = 0.5 * (drive.control)(t0);
        let half_omega1 = 0.5 * (drive.control)(t1);
        let [c1, c2] = self.c;
        let [b1, b2] = self.b;
        let g = self.coupling;

        // predictor into `work.predicted`, keep the explicit coupling terms
        work.ensure(n, self.classes.len());
        for (v, (cls, atoms)) in self.classes.iter().zip(&state.classes).enumerate() {
            let pred = &mut work.predicted[v];
            let coup = &mut work.coupling[v];
            for k in 0..n {
                let e = state.e_field[k];
                let s = atoms.spin[k];
                let p1 = atoms.p1[k];
                let p2 = atoms.p2[k];
                let f1 = I * (c1 * g * e + b1 * half_omega0 * s);
                let f2 = I * (c2 * g * e + b2 * half_omega0 * s);
                let fs = I * half_omega0 * (b1 * p1 + b2 * p2);
                coup[k] = [f1, f2, fs];
                pred.p1[k] = cls.prop[0] * p1 + cls.gain[0] * f1;
                pred.p2[k] = cls.prop[1] * p2 + cls.gain[1] * f2;
                pred.spin[k] = cls.prop[2] * s + cls.gain[2] * fs;
            }
        }
        let input1 = (drive.input)(t1);
        self.solve_field(&work.predicted, input1, &mut work.source, &mut work.field);

        // corrector
        for (v, (cls, atoms)) in self.classes.iter().zip(&state.classes).enumerate() {
            let pred = &work.predicted[v];
            let coup = &work.coupling[v];
            let out = &mut next.classes[v];
            for k in 0..n {
                let e = work.field[k];
                let s = pred.spin[k];
                let f1 = I * (c1 * g * e + b1 * half_omega1 * s);
                let f2 = I * (c2 * g * e + b2 * half_omega1 * s);
                let fs = I * half_omega1 * (b1 * pred.p1[k] + b2 * pred.p2[k]);
                let [g1, g2, gs] = coup[k];
                out.p1[k] = cls.prop[0] * atoms.p1[k] + cls.gain[0] * (0.5 * (g1 + f1));
                out.p2[k] = cls.prop[1] * atoms.p2[k] + cls.gain[1] * (0.5 * (g2 + f2));
                out.spin[k] = cls.prop[2] * atoms.spin[k] + cls.gain[2] * (0.5 * (gs + fs));
            }
        }
        next.t = t1;
        let FieldState { classes, e_field, .. } = next;
        self.solve_field(classes, input1, &mut work.source, e_field);
    }

    /// Σ_v w_v ∫ |S_v|² dz
    pub fn spin_energy(&self, state: &FieldState) -> f64 {
        self.weighted_energy(state, |a| &a.spin)
    }

    /// Σ_v w_v ∫ (|P1|² + |P2|²) dz
    pub fn optical_energy(&self, state: &FieldState) -> f64 {
        self.weighted_energy(state, |a| &a.p1) + self.weighted_energy(state, |a| &a.p2)
    }

    fn weighted_energy(&self, state: &FieldState, pick: impl Fn(&AtomState) -> &Vec<C64>) -> f64 {
        self.classes
            .iter()
            .zip(&state.classes)
            .map(|(cls, a)| {
                cls.weight
                    * self.grid.weights.iter().zip(pick(a)).map(|(w, x)| w * x.norm_sqr()).sum::<f64>()
            })
            .sum()
    }

    /// Instantaneous rate of energy loss to spontaneous decay and spin dephasing.
    fn decay_power(&self, state: &FieldState) -> f64 {
        let mut p = 2.0 * self.gamma * self.optical_energy(state);
        if self.gamma_spin > 0.0 {
            p += 2.0 * self.gamma_spin * self.spin_energy(state);
        }
        p
    }

    /// Integrates one stage of `n_steps` steps, recording the output flux at
    /// the cell exit at every grid time (including the initial one).
    pub fn integrate(
        &self,
        state: &mut FieldState,
        drive: &Drive<'_>,
        n_steps: usize,
        stage: &str,
    ) -> Result<StageRecord> {
        let mut work = Workspace::default();
        let t_start = state.t;
        self.update_field(state, (drive.input)(t_start));
        let mut out_flux = Vec::with_capacity(n_steps + 1);
        let mut in_flux = Vec::with_capacity(n_steps + 1);
        out_flux.push(state.outlet().norm_sqr());
        in_flux.push((drive.input)(t_start).norm_sqr());
        let mut decayed = 0.0;
        let mut power = self.decay_power(state);
        let mut next = state.clone();
        for step in 0..n_steps {
            self.step_in_place(state, &mut next, drive, &mut work);
            // keep the time grid exact instead of accumulating dt
            next.t = t_start + (step + 1) as f64 * self.dt;
            std::mem::swap(state, &mut next);
            let out = state.outlet().norm_sqr();
            let new_power = self.decay_power(state);
            if !out.is_finite() || !new_power.is_finite() {
                return Err(Error::NumericalInstability { stage: stage.to_string(), step });
            }
            decayed += 0.5 * self.dt * (power + new_power);
            power = new_power;
            out_flux.push(out);
            in_flux.push((drive.input)(state.t).norm_sqr());
        }
        Ok(StageRecord {
            out: Trace { t0: t_start, dt: self.dt, values: out_flux },
            input: Trace { t0: t_start, dt: self.dt, values: in_flux },
            decayed,
        })
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Default)]
pub struct Workspace {
    predicted: Vec<AtomState>,
    coupling: Vec<Vec<[C64; 3]>>,
    source: Vec<C64>,
    field: Vec<C64>,
}

impl Workspace {
    fn ensure(&mut self, n: usize, n_classes: usize) {
        if self.predicted.len() != n_classes || self.source.len() != n {
            self.predicted = (0..n_classes).map(|_| AtomState::zeros(n)).collect();
            self.coupling = vec![vec![[C64::default(); 3]; n]; n_classes];
            self.source = vec![C64::default(); n];
            self.field = vec![C64::default(); n];
        }
    }
}

/// A uniformly sampled time series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Trace {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| self.t0 + k as f64 * self.dt)
    }

    /// Trapezoidal time integral.
    pub fn integral(&self) -> f64 {
        match self.values.len() {
            0 | 1 => 0.0,
            n => {
                let inner: f64 = self.values[1..n - 1].iter().sum();
                self.dt * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
            }
        }
    }

    /// Accumulates `weight × other` into `self`; traces must share the grid.
    pub fn add_scaled(&mut self, other: &Trace, weight: f64) {
        if self.values.is_empty() {
            self.t0 = other.t0;
            self.dt = other.dt;
            self.values = vec![0.0; other.values.len()];
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += weight * b;
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_ns,out_flux")?;
        for (t, v) in self.times().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StageRecord {
    /// |E(L, t)|²
    pub out: Trace,
    /// |E(0, t)|²
    pub input: Trace,
    /// Energy lost to atomic decay during the stage.
    pub decayed: f64,
}

/// Energy accounting of the read-in stage, in units of the input energy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub leaked: f64,
    pub decayed: f64,
    pub stored_spin: f64,
    pub residual_optical: f64,
}

impl EnergyBalance {
    /// Deviation of the total from the input energy.
    pub fn defect(&self) -> f64 {
        self.leaked + self.decayed + self.stored_spin + self.residual_optical - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryRunResult {
    /// Spin-wave energy after read-in over input energy.
    pub eta_storage: f64,
    /// Retrieved energy over input energy.
    pub eta_internal: f64,
    /// Transmitted energy during read-in over input energy.
    pub leakage: f64,
    pub leakage_trace: Trace,
    pub retrieval_trace: Trace,
    /// Collocation nodes, mm.
    pub z: Vec<f64>,
    /// Class-averaged spin wave after read-in.
    pub spin_profile: Vec<C64>,
    pub readin_balance: EnergyBalance,
    /// Spin-wave energy entering the read-out (after the hold) over input energy.
    pub eta_after_hold: f64,
}

impl MemoryRunResult {
    pub fn write_spin_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "z_mm,re,im")?;
        for (z, s) in self.z.iter().zip(&self.spin_profile) {
            writeln!(w, "{z},{},{}", s.re, s.im)?;
        }
        Ok(())
    }
}

/// Start time and step count of a stage that contains every pulse center
/// ± [`WINDOW_PAD_FWHM`] × fwhm.
pub fn stage_window(pulses: &[&PulseSpec], dt: f64) -> Result<(f64, usize)> {
    let start = pulses
        .iter()
        .map(|p| p.center - WINDOW_PAD_FWHM * p.fwhm)
        .fold(f64::INFINITY, f64::min);
    let end = pulses
        .iter()
        .map(|p| p.center + WINDOW_PAD_FWHM * p.fwhm)
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(p) = pulses.iter().find(|p| p.fwhm < 2.0 * dt) {
        return Err(Error::config(format!(
            "time step {dt} ns does not resolve a pulse of fwhm {} ns",
            p.fwhm
        )));
    }
    let steps = ((end - start) / dt).ceil();
    if !(steps.is_finite()) || steps as usize > MAX_STAGE_STEPS {
        return Err(Error::config(format!("stage window of {} ns is too long for dt = {dt}", end - start)));
    }
    Ok((start, steps as usize))
}

/// What happens to the spin waves of all velocity classes during the hold.
pub type HoldHook<'a> = &'a dyn Fn(&mut [Vec<C64>]) -> Result<()>;

/// Storage followed by forward retrieval for one transverse ring.
///
/// `control_factor` scales both control pulses (ring position in the control
/// beam). After read-in the optical coherences and the field are dropped,
/// `hold` acts on the spin waves and their amplitude decays so that the
/// retrieval efficiency falls as exp(-storage_time / memory_lifetime).
pub fn run_realization(
    experiment: &Experiment,
    classes: &[VelocityClass],
    control_factor: f64,
    hold: HoldHook<'_>,
) -> Result<MemoryRunResult> {
    experiment.validate()?;
    let Experiment { scheme, ensemble, signal, control_in, control_out, storage_time, .. } = experiment;
    let medium = Medium::new(scheme, ensemble, classes)?;
    let signal_fn = |t: f64| C64::new(signal.amplitude(t), 0.0);
    let control_in_fn = |t: f64| control_factor * control_in.amplitude(t);
    let control_out_fn = |t: f64| control_factor * control_out.amplitude(t);
    let no_input = |_: f64| C64::default();

    // read-in
    let (t_in, n_in) = stage_window(&[signal, control_in], ensemble.dt)?;
    let mut state = medium.zero_state(t_in);
    let readin = medium.integrate(
        &mut state,
        &Drive { control: &control_in_fn, input: &signal_fn },
        n_in,
        "read-in",
    )?;
    let input_energy = readin.input.integral();
    if !(input_energy > 0.0) {
        return Err(Error::config("signal pulse carries no energy inside the read-in window"));
    }
    let stored = medium.spin_energy(&state);
    let balance = EnergyBalance {
        leaked: readin.out.integral() / input_energy,
        decayed: readin.decayed / input_energy,
        stored_spin: stored / input_energy,
        residual_optical: medium.optical_energy(&state) / input_energy,
    };
    let z = medium.grid().nodes.clone();
    let n_z = z.len();
    let mut spin_profile = vec![C64::default(); n_z];
    for (cls, atoms) in classes.iter().zip(&state.classes) {
        for (acc, s) in spin_profile.iter_mut().zip(&atoms.spin) {
            *acc += cls.weight * s;
        }
    }

    // hold
    let mut spins: Vec<Vec<C64>> = state.classes.iter().map(|a| a.spin.clone()).collect();
    hold(&mut spins)?;
    let amplitude_decay = (-storage_time / (2.0 * ensemble.memory_lifetime)).exp();
    let (t_out, n_out) = stage_window(&[control_out], ensemble.dt)?;
    let mut state = medium.zero_state(t_out);
    for (atoms, spin) in state.classes.iter_mut().zip(spins) {
        atoms.spin = spin.into_iter().map(|s| s * amplitude_decay).collect();
    }
    let entering = medium.spin_energy(&state);

    // read-out
    let readout = medium.integrate(
        &mut state,
        &Drive { control: &control_out_fn, input: &no_input },
        n_out,
        "read-out",
    )?;
    let retrieved = readout.out.integral();
    let scale = input_energy.recip();
    let mut leakage_trace = readin.out;
    leakage_trace.values.iter_mut().for_each(|v| *v *= scale);
    let mut retrieval_trace = readout.out;
    retrieval_trace.values.iter_mut().for_each(|v| *v *= scale);
    Ok(MemoryRunResult {
        eta_storage: stored / input_energy,
        eta_internal: retrieved / input_energy,
        leakage: balance.leaked,
        leakage_trace,
        retrieval_trace,
        z,
        spin_profile,
        readin_balance: balance,
        eta_after_hold: entering / input_energy,
    })
}

/// One plane-wave, single-velocity-class run of the storage protocol.
pub fn run_protocol(
    scheme: &LevelScheme,
    config: &EnsembleConfig,
    signal: &PulseSpec,
    control_in: &PulseSpec,
    control_out: &PulseSpec,
    storage_time: f64,
) -> Result<MemoryRunResult> {
    let mut experiment = crate::model::default_experiment_config();
    experiment.scheme = *scheme;
    experiment.ensemble = *config;
    experiment.signal = *signal;
    experiment.control_in = *control_in;
    experiment.control_out = *control_out;
    experiment.storage_time = storage_time;
    run_realization(&experiment, &[VelocityClass::AT_REST], 1.0, &|_| Ok(()))
}
