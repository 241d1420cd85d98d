#![allow(dead_code)]

use lambda_memory::analytics::LifetimePoint;
use lambda_memory::timetag::TimeTagEvent;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};

pub const HERALD: u16 = 0;
pub const ARM_A: u16 = 1;
pub const ARM_B: u16 = 2;
/// Herald period of the synthetic streams, ps.
pub const PERIOD_PS: u64 = 100_000;
/// Photons arrive within this many ps after their herald.
pub const ARRIVAL_SPREAD_PS: u64 = 2_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Heralded stream where herald `k` is followed by `photons(rng)` photons, each
/// sent to arm A or B with equal probability.
pub fn heralded_stream<F>(n_heralds: u64, seed: u64, mut photons: F) -> Vec<TimeTagEvent>
where
    F: FnMut(&mut ChaCha8Rng) -> u64,
{
    let mut r = rng(seed);
    let mut events = Vec::with_capacity(n_heralds as usize + n_heralds as usize / 8);
    for k in 0..n_heralds {
        let h = k * PERIOD_PS;
        events.push(TimeTagEvent::new(h, HERALD));
        for _ in 0..photons(&mut r) {
            let ch = if r.random_bool(0.5) { ARM_A } else { ARM_B };
            events.push(TimeTagEvent::new(h + 500 + r.random_range(0..ARRIVAL_SPREAD_PS), ch));
        }
    }
    events.sort_by_key(|e| e.timestamp_ps);
    events
}

pub fn coherent_stream(n_heralds: u64, mean: f64, seed: u64) -> Vec<TimeTagEvent> {
    let poisson = Poisson::new(mean).unwrap();
    heralded_stream(n_heralds, seed, |r| poisson.sample(r) as u64)
}

pub fn single_photon_stream(n_heralds: u64, p: f64, seed: u64) -> Vec<TimeTagEvent> {
    heralded_stream(n_heralds, seed, |r| u64::from(r.random_bool(p)))
}

/// Single photons with probability `p_signal` plus thermal noise of mean
/// `noise_mean` photons per herald.
pub fn mixture_stream(n_heralds: u64, p_signal: f64, noise_mean: f64, seed: u64) -> Vec<TimeTagEvent> {
    // P(n) = (1-q)^n q with q = 1/(1+m)
    let thermal = Geometric::new(1.0 / (1.0 + noise_mean)).unwrap();
    heralded_stream(n_heralds, seed, |r| u64::from(r.random_bool(p_signal)) + thermal.sample(r))
}

/// Click-detector g² of the mixture computed from its photon-number
/// generating function G(x) = (1 - p + p x) / (1 + m (1 - x)).
pub fn mixture_click_g2(p_signal: f64, noise_mean: f64) -> f64 {
    let g = |x: f64| (1.0 - p_signal + p_signal * x) / (1.0 + noise_mean * (1.0 - x));
    let p_a = 1.0 - g(0.5);
    let p_ab = 1.0 - 2.0 * g(0.5) + g(0.0);
    p_ab / (p_a * p_a)
}

/// Uniform random events on a few channels, in time order.
pub fn random_stream(n: usize, channels: u16, span_ps: u64, seed: u64) -> Vec<TimeTagEvent> {
    let mut r = rng(seed);
    let mut events: Vec<TimeTagEvent> = (0..n)
        .map(|_| TimeTagEvent::new(r.random_range(0..span_ps), r.random_range(0..channels)))
        .collect();
    events.sort_by_key(|e| e.timestamp_ps);
    events
}

/// Every (trigger, signal) pair with delay in `[origin, origin + n_bins·width)`.
pub fn brute_force_histogram(
    events: &[TimeTagEvent],
    trigger: u16,
    signal: u16,
    width: u64,
    origin: u64,
    n_bins: usize,
) -> Vec<u64> {
    let mut counts = vec![0u64; n_bins];
    let span = width * n_bins as u64;
    for t in events.iter().filter(|e| e.channel == trigger) {
        for s in events.iter().filter(|e| e.channel == signal) {
            if s.timestamp_ps < t.timestamp_ps {
                continue;
            }
            let d = s.timestamp_ps - t.timestamp_ps;
            if d >= origin && d - origin < span {
                counts[((d - origin) / width) as usize] += 1;
            }
        }
    }
    counts
}

/// Decay data η(t) = η₀ exp(-t/τ) with Gaussian noise of `rel_noise` relative
/// standard deviation, and the matching σ.
pub fn lifetime_data(times: &[f64], eta0: f64, tau: f64, rel_noise: f64, r: &mut ChaCha8Rng) -> Vec<LifetimePoint> {
    times
        .iter()
        .map(|&t| {
            let eta = eta0 * (-t / tau).exp();
            let sigma = rel_noise * eta;
            let noisy = if rel_noise > 0.0 { Normal::new(eta, sigma).unwrap().sample(r) } else { eta };
            LifetimePoint { storage_time: t, eta: noisy, sigma: if rel_noise > 0.0 { sigma } else { 1e-6 * eta } }
        })
        .collect()
}

pub const LIFETIME_TIMES: [f64; 8] = [0.0, 100.0, 160.0, 280.0, 400.0, 550.0, 700.0, 900.0];
