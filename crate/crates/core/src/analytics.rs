//! Closed-form analysis of storage experiments from detector counts:
//! end-to-end efficiency, noise floors, signal-to-noise ratio, the
//! noise-admixture model for the retrieved g², the lifetime fit and the
//! time-bandwidth product.
//!
//! Counts are treated as independent Poisson variables. Every [`Estimate`]
//! keeps its statistical and systematic uncertainty apart so that the
//! statistical part can be checked for 1/√N scaling.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A value with a 1σ statistical and a 1σ systematic uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stat: f64,
    pub sys: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stat: 0.0, sys: 0.0 }
    }

    pub fn with_stat(value: f64, stat: f64) -> Self {
        Estimate { value, stat, sys: 0.0 }
    }

    /// Combined uncertainty, statistical and systematic in quadrature.
    pub fn sigma(&self) -> f64 {
        self.stat.hypot(self.sys)
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} ± {:.2e}", self.value, self.sigma())
    }
}

/// Relative systematic uncertainties of the calibration inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Systematics {
    pub eta_h_rel: f64,
    pub eta_det_rel: f64,
    /// Absolute 1σ uncertainty of the input g².
    pub g2_input_sigma: f64,
}

impl Default for Systematics {
    fn default() -> Self {
        // η_h = 40(4) %, η_det = 60(6) %, g²_input = 4.21(2)e-2
        Systematics { eta_h_rel: 0.10, eta_det_rel: 0.10, g2_input_sigma: 2e-4 }
    }
}

/// Aggregate counts of one storage experiment and its noise references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountsRecord {
    /// Storage attempts.
    pub n_herald: u64,
    /// Counts in the retrieval window with signal.
    pub n_ret: u64,
    /// Counts in the retrieval window without the read-in pulse.
    pub n_noise_tot: u64,
    /// Counts in the retrieval window with the source blocked.
    pub n_noise_mem: u64,
    pub eta_h: f64,
    pub eta_det: f64,
    pub g2_input: f64,
    #[serde(default)]
    pub systematics: Systematics,
}

impl CountsRecord {
    pub fn validate(&self) -> Result<()> {
        if self.n_herald == 0 {
            return Err(Error::domain("n_herald must be positive"));
        }
        for (name, eta) in [("eta_h", self.eta_h), ("eta_det", self.eta_det)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1], got {eta}")));
            }
        }
        if !(self.g2_input >= 0.0) {
            return Err(Error::domain("g2_input must be non-negative"));
        }
        if self.n_noise_tot > self.n_herald || self.n_noise_mem > self.n_herald {
            return Err(Error::domain("noise counts exceed the number of attempts"));
        }
        Ok(())
    }

    fn signal(&self) -> Result<f64> {
        if self.n_ret < self.n_noise_tot {
            return Err(Error::NegativeSignal { signal: self.n_ret, noise: self.n_noise_tot });
        }
        Ok((self.n_ret - self.n_noise_tot) as f64)
    }
}

/// η_e2e = (N_ret − N_noise,tot) / (N_herald · η_h · η_det)
pub fn e2e_efficiency(r: &CountsRecord) -> Result<Estimate> {
    r.validate()?;
    let signal = r.signal()?;
    let attempts = r.n_herald as f64;
    let eta = signal / (attempts * r.eta_h * r.eta_det);
    // Poisson on both windows and on the number of attempts
    let stat_rel2 = if signal > 0.0 {
        (r.n_ret + r.n_noise_tot) as f64 / (signal * signal) + 1.0 / attempts
    } else {
        0.0
    };
    let stat = if signal > 0.0 {
        eta * stat_rel2.sqrt()
    } else {
        ((r.n_ret + r.n_noise_tot) as f64).sqrt() / (attempts * r.eta_h * r.eta_det)
    };
    let sys = eta * r.systematics.eta_h_rel.hypot(r.systematics.eta_det_rel);
    Ok(Estimate { value: eta, stat, sys })
}

/// Noise counts per attempt, μ = N_noise / N_herald.
pub fn noise_floor(n_noise: u64, n_herald: u64) -> Result<Estimate> {
    if n_herald == 0 {
        return Err(Error::domain("n_herald must be positive"));
    }
    let n = n_herald as f64;
    Ok(Estimate::with_stat(n_noise as f64 / n, (n_noise as f64).sqrt() / n))
}

/// Signal-to-noise ratio; infinite when no noise counts were recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Snr {
    Finite(Estimate),
    Infinite,
}

impl Snr {
    pub fn value(&self) -> f64 {
        match self {
            Snr::Finite(e) => e.value,
            Snr::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Finite(e) => write!(f, "{:.4} ± {:.2}", e.value, e.sigma()),
            Snr::Infinite => f.write_str("inf"),
        }
    }
}

/// SNR = (N_ret − N_noise,tot) / N_noise,tot
pub fn snr(r: &CountsRecord) -> Result<Snr> {
    let signal = r.signal()?;
    if r.n_noise_tot == 0 {
        return Ok(Snr::Infinite);
    }
    let noise = r.n_noise_tot as f64;
    let ret = r.n_ret as f64;
    let value = signal / noise;
    // ∂/∂N_ret = 1/N, ∂/∂N = -N_ret/N²
    let stat = (ret / (noise * noise) + ret * ret / noise.powi(3)).sqrt();
    Ok(Snr::Finite(Estimate::with_stat(value, stat)))
}

/// Retrieved-photon g² for noise added incoherently to the retrieved signal:
///
/// ```text
/// g² = [(N_ret − N)² g²_input + 2 N (N_ret − N) + N² g²_noise] / N_ret²
/// ```
///
/// with N = N_noise,tot.
pub fn g2_retrieved_model(r: &CountsRecord, g2_noise: f64) -> Result<Estimate> {
    if r.n_ret == 0 {
        return Err(Error::domain("n_ret must be positive"));
    }
    if !(g2_noise >= 0.0) {
        return Err(Error::domain("g2_noise must be non-negative"));
    }
    let signal = r.signal()?;
    let ret = r.n_ret as f64;
    let noise = r.n_noise_tot as f64;
    let gi = r.g2_input;
    let num = signal * signal * gi + 2.0 * noise * signal + noise * noise * g2_noise;
    let value = num / (ret * ret);

    let dnum_dret = 2.0 * signal * gi + 2.0 * noise;
    let dnum_dnoise = -2.0 * signal * gi + 2.0 * signal - 2.0 * noise + 2.0 * noise * g2_noise;
    let dg_dret = dnum_dret / (ret * ret) - 2.0 * num / ret.powi(3);
    let dg_dnoise = dnum_dnoise / (ret * ret);
    let stat = (dg_dret * dg_dret * ret + dg_dnoise * dg_dnoise * noise).sqrt();
    let sys = signal * signal / (ret * ret) * r.systematics.g2_input_sigma;
    Ok(Estimate { value, stat, sys })
}

/// Limit of [`g2_retrieved_model`] for g²_input → 0 and thermal noise:
/// 2 / (SNR + 1). Expects `snr >= 0`.
pub fn g2_snr_limit(snr: f64) -> f64 {
    2.0 / (snr + 1.0)
}

/// Multi-photon synchronization figure of merit: lifetime × bandwidth, and
/// the same scaled by the memory efficiency.
pub fn time_bandwidth_product(tau_ns: f64, bandwidth_mhz: f64, eta: f64) -> Result<(f64, f64)> {
    if !(tau_ns > 0.0) || !(bandwidth_mhz > 0.0) || !(eta > 0.0) {
        return Err(Error::domain("time-bandwidth inputs must be positive"));
    }
    // ns × MHz = 1e-3
    let b = tau_ns * bandwidth_mhz * 1e-3;
    Ok((b, eta * b))
}

/// One efficiency measurement at a storage time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimePoint {
    /// ns
    pub storage_time: f64,
    pub eta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decay {
    /// 1/e lifetime τ and the rate 1/τ.
    Finite { tau: Estimate, rate: Estimate },
    /// The data show no decay over the sampled times; τ is unbounded.
    None { rate: Estimate },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub eta0: Estimate,
    pub decay: Decay,
    pub chi2: f64,
    pub dof: usize,
    /// Points dropped for non-positive efficiency.
    pub excluded: usize,
}

impl LifetimeFit {
    pub fn tau(&self) -> Option<Estimate> {
        match self.decay {
            Decay::Finite { tau, .. } => Some(tau),
            Decay::None { .. } => None,
        }
    }
}

/// Decay over the sampled span below which the fit reports no decay.
const NO_DECAY_THRESHOLD: f64 = 1e-9;

/// Weighted least-squares fit of η(t) = η₀ exp(-t/τ).
///
/// The residuals are linear in η (not log), weighted by 1/σ². A weighted
/// log-linear regression seeds a damped Gauss–Newton refinement; the quoted
/// uncertainties come from the inverse Fisher matrix with the given σ taken
/// as known.
pub fn fit_lifetime(points: &[LifetimePoint]) -> Result<LifetimeFit> {
    if let Some(p) = points.iter().find(|p| !(p.sigma > 0.0) || !p.sigma.is_finite()) {
        return Err(Error::Fit(format!("non-positive uncertainty at t = {}", p.storage_time)));
    }
    let usable: Vec<LifetimePoint> = points.iter().copied().filter(|p| p.eta > 0.0).collect();
    let excluded = points.len() - usable.len();
    if excluded > 0 {
        warn!("lifetime fit: excluded {excluded} point(s) with non-positive efficiency");
    }
    if usable.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 usable points, got {}", usable.len())));
    }
    let t_min = usable.iter().map(|p| p.storage_time).fold(f64::INFINITY, f64::min);
    let t_max = usable.iter().map(|p| p.storage_time).fold(f64::NEG_INFINITY, f64::max);
    if !(t_max > t_min) {
        return Err(Error::Fit("storage times are not distinct".into()));
    }

    // seed: ln η = ln η₀ − k t with weights (η/σ)²
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &usable {
        let w = (p.eta / p.sigma).powi(2);
        let y = p.eta.ln();
        sw += w;
        st += w * p.storage_time;
        sy += w * y;
        stt += w * p.storage_time * p.storage_time;
        sty += w * p.storage_time * y;
    }
    let det = sw * stt - st * st;
    let slope = (sw * sty - st * sy) / det;
    let intercept = (sy - slope * st) / sw;
    let mut params = [intercept.exp(), -slope];

    let chi2_of = |[a, k]: [f64; 2]| -> f64 {
        usable
            .iter()
            .map(|p| ((p.eta - a * (-k * p.storage_time).exp()) / p.sigma).powi(2))
            .sum()
    };
    let normal_equations = |[a, k]: [f64; 2]| -> ([[f64; 2]; 2], [f64; 2]) {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for p in &usable {
            let e = (-k * p.storage_time).exp();
            let w = p.sigma.powi(-2);
            let j = [e, -a * p.storage_time * e];
            let r = p.eta - a * e;
            for m in 0..2 {
                jtr[m] += w * j[m] * r;
                for n in 0..2 {
                    jtj[m][n] += w * j[m] * j[n];
                }
            }
        }
        (jtj, jtr)
    };

    let mut chi2 = chi2_of(params);
    let mut damping = 1e-6;
    for _ in 0..200 {
        let (jtj, jtr) = normal_equations(params);
        let a00 = jtj[0][0] * (1.0 + damping);
        let a11 = jtj[1][1] * (1.0 + damping);
        let det = a00 * a11 - jtj[0][1] * jtj[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step = [
            (a11 * jtr[0] - jtj[0][1] * jtr[1]) / det,
            (a00 * jtr[1] - jtj[1][0] * jtr[0]) / det,
        ];
        let trial = [params[0] + step[0], params[1] + step[1]];
        let trial_chi2 = chi2_of(trial);
        if trial_chi2 <= chi2 {
            let converged = (step[0] / params[0]).abs() < 1e-13
                && (step[1] * t_max).abs() < 1e-13;
            params = trial;
            chi2 = trial_chi2;
            damping = (damping * 0.1).max(1e-12);
            if converged {
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
    }

    let (jtj, _) = normal_equations(params);
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    if !(det > 0.0) {
        return Err(Error::Fit("singular covariance".into()));
    }
    let var_a = jtj[1][1] / det;
    let var_k = jtj[0][0] / det;
    let [a, k] = params;
    let eta0 = Estimate::with_stat(a, var_a.sqrt());
    let rate = Estimate::with_stat(k, var_k.sqrt());
    let decay = if k * t_max <= NO_DECAY_THRESHOLD {
        Decay::None { rate }
    } else {
        Decay::Finite { tau: Estimate::with_stat(1.0 / k, var_k.sqrt() / (k * k)), rate }
    };
    Ok(LifetimeFit { eta0, decay, chi2, dof: usable.len() - 2, excluded })
}
