//! Received power, power delay profiles and the coherent multipath sum.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raytrace::PropagationPath;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedPower {
    pub dbm: f64,
    pub disconnected: bool,
}

/// Non-coherent sum of connected path powers, in dBm. With no connected
/// path the receiver sits at `floor` and is flagged disconnected.
pub fn total_power_dbm(paths: &[PropagationPath], floor: f64) -> ReceivedPower {
    let powers: Vec<f64> = paths.iter().filter(|p| p.connected).map(|p| p.rx_power_dbm).collect();
    total_power_of(&powers, floor)
}

/// [`total_power_dbm`] on raw path powers.
pub fn total_power_of(powers_dbm: &[f64], floor: f64) -> ReceivedPower {
    let mw: f64 = powers_dbm.iter().map(|&p| 10f64.powf(p / 10.0)).sum();
    let dbm = 10.0 * mw.log10();
    if powers_dbm.is_empty() || dbm.is_nan() || dbm < floor {
        ReceivedPower {
            dbm: floor,
            disconnected: true,
        }
    } else {
        ReceivedPower {
            dbm,
            disconnected: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    /// Seconds.
    pub delay: f64,
    /// Milliwatts.
    pub power: f64,
}

/// Taps sorted by delay, all with positive power.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerDelayProfile {
    taps: Vec<Tap>,
}

impl PowerDelayProfile {
    /// Drops non-positive taps and sorts by delay.
    pub fn new(mut taps: Vec<Tap>) -> Self {
        taps.retain(|t| t.power > 0.0);
        taps.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        PowerDelayProfile { taps }
    }

    /// Profile of the connected paths.
    pub fn from_paths(paths: &[PropagationPath]) -> Self {
        PowerDelayProfile::new(
            paths
                .iter()
                .filter(|p| p.connected)
                .map(|p| Tap {
                    delay: p.delay,
                    power: 10f64.powf(p.rx_power_dbm / 10.0),
                })
                .collect(),
        )
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// CSV with `delay_ns,power_dbm` columns.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "delay_ns,power_dbm")?;
        for t in &self.taps {
            writeln!(w, "{:.6},{:.4}", t.delay * 1e9, 10.0 * t.power.log10())?;
        }
        Ok(())
    }
}

/// Power-weighted RMS delay spread in seconds.
pub fn delay_spread(pdp: &PowerDelayProfile) -> Result<f64> {
    if pdp.is_empty() {
        return Err(Error::EmptyProfile);
    }
    // Moments about the first arrival keep the subtraction well conditioned.
    let t0 = pdp.taps[0].delay;
    let total: f64 = pdp.taps.iter().map(|t| t.power).sum();
    let mean: f64 = pdp.taps.iter().map(|t| t.power * (t.delay - t0)).sum::<f64>() / total;
    let second: f64 = pdp.taps.iter().map(|t| t.power * (t.delay - t0).powi(2)).sum::<f64>() / total;
    Ok((second - mean * mean).max(0.0).sqrt())
}

/// Delay between the first and last tap, in seconds.
pub fn max_excess_delay(pdp: &PowerDelayProfile) -> Result<f64> {
    match (pdp.taps.first(), pdp.taps.last()) {
        (Some(a), Some(b)) => Ok(b.delay - a.delay),
        _ => Err(Error::EmptyProfile),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedSignal {
    /// Complex baseband amplitude for a unit transmitted symbol.
    pub amplitude: Complex64,
    /// Variance of the added complex noise sample, in the amplitude's squared units.
    pub noise_power: f64,
    pub path_count: usize,
}

impl ReceivedSignal {
    pub fn power(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

/// Coherent sum `Σ a_i e^{-jθ_i} e^{j2π f_c τ_i}` plus an optional seeded
/// circular Gaussian noise sample of variance `noise_power`.
pub fn received_signal(paths: &[PropagationPath], frequency: f64, noise_power: f64, seed: u64) -> ReceivedSignal {
    let terms: Vec<(f64, f64, f64)> = paths.iter().map(|p| (p.attenuation, p.phase, p.delay)).collect();
    received_signal_from(&terms, frequency, noise_power, seed)
}

/// [`received_signal`] on raw `(attenuation, phase, delay)` triples.
pub fn received_signal_from(terms: &[(f64, f64, f64)], frequency: f64, noise_power: f64, seed: u64) -> ReceivedSignal {
    let two_pi_f = 2.0 * std::f64::consts::PI * frequency;
    let mut amplitude: Complex64 = terms
        .iter()
        .map(|&(a, theta, tau)| Complex64::from_polar(a, -theta) * Complex64::from_polar(1.0, two_pi_f * tau))
        .sum();
    if noise_power > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, (noise_power / 2.0).sqrt()).expect("finite variance");
        amplitude += Complex64::new(n.sample(&mut rng), n.sample(&mut rng));
    }
    ReceivedSignal {
        amplitude,
        noise_power: noise_power.max(0.0),
        path_count: terms.len(),
    }
}
