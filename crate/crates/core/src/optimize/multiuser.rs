//! Joint transmit-power and tile allocation across users.
//!
//! Maximises `Σ d_j · P_r(j)` subject to `Σ P_t(j) ≤ P_total` and
//! `Σ M(j) ≤ M_total`. Power is split in whole units of
//! `P_total / power_levels`; tiles in whole tiles. Solved exactly on that
//! grid by dynamic programming over users.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raytrace::PropagationPath;
use crate::vec3::Vec3;

pub const DEFAULT_POWER_LEVELS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiUserProblem {
    pub tx_position: Vec3,
    pub rx_positions: Vec<Vec3>,
    /// Per-user weights `d_j`, in metres.
    pub weights: Vec<f64>,
    /// Milliwatts.
    pub total_power: f64,
    pub total_tiles: usize,
    pub power_levels: usize,
}

impl MultiUserProblem {
    /// Weights default to each receiver's distance from the transmitter.
    pub fn new(tx_position: Vec3, rx_positions: Vec<Vec3>, total_power: f64, total_tiles: usize) -> Self {
        let weights = rx_positions.iter().map(|r| r.distance(tx_position)).collect();
        MultiUserProblem {
            tx_position,
            rx_positions,
            weights,
            total_power,
            total_tiles,
            power_levels: DEFAULT_POWER_LEVELS,
        }
    }

    pub fn users(&self) -> usize {
        self.rx_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rx_positions.is_empty() {
            return Err(Error::EmptyProblem);
        }
        if self.weights.len() != self.rx_positions.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} users",
                self.weights.len(),
                self.rx_positions.len()
            )));
        }
        if self.total_power.is_nan() || self.total_power <= 0.0 || self.power_levels == 0 {
            return Err(Error::InvalidParameter("total power and power levels must be positive".into()));
        }
        Ok(())
    }

    fn power_unit(&self) -> f64 {
        self.total_power / self.power_levels as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Per-user transmit power in mW.
    pub powers: Vec<f64>,
    pub tiles: Vec<usize>,
    /// `Σ d_j · P_r(j)` at the chosen split.
    pub objective: f64,
}

/// Exact optimum over the power grid and integer tile splits.
/// `gain(j, p_t, m)` is user `j`'s received power with `p_t` mW and `m` tiles.
pub fn allocate_multiuser<G>(problem: &MultiUserProblem, gain: G) -> Result<Allocation>
where
    G: Fn(usize, f64, usize) -> f64,
{
    problem.validate()?;
    let users = problem.users();
    let levels = problem.power_levels;
    let tiles = problem.total_tiles;
    let unit = problem.power_unit();
    let width = tiles + 1;

    // value[j][u * width + m]: weighted power of user j with u units and m tiles.
    let value: Vec<Vec<f64>> = (0..users)
        .map(|j| {
            let mut v = Vec::with_capacity((levels + 1) * width);
            for u in 0..=levels {
                for m in 0..=tiles {
                    v.push(problem.weights[j] * gain(j, u as f64 * unit, m));
                }
            }
            v
        })
        .collect();

    // best[u * width + m]: optimum over the users so far using at most u units and m tiles.
    let mut best = vec![0.0f64; (levels + 1) * width];
    let mut choice: Vec<Vec<(usize, usize)>> = Vec::with_capacity(users);
    for vj in &value {
        let mut next = vec![f64::NEG_INFINITY; best.len()];
        let mut pick = vec![(0usize, 0usize); best.len()];
        for u in 0..=levels {
            for m in 0..=tiles {
                let cell = u * width + m;
                for uj in 0..=u {
                    for mj in 0..=m {
                        let total = vj[uj * width + mj] + best[(u - uj) * width + (m - mj)];
                        if total > next[cell] {
                            next[cell] = total;
                            pick[cell] = (uj, mj);
                        }
                    }
                }
            }
        }
        best = next;
        choice.push(pick);
    }

    let mut u = levels;
    let mut m = tiles;
    let mut powers = vec![0.0; users];
    let mut counts = vec![0; users];
    for j in (0..users).rev() {
        let (uj, mj) = choice[j][u * width + m];
        powers[j] = uj as f64 * unit;
        counts[j] = mj;
        u -= uj;
        m -= mj;
    }
    Ok(Allocation {
        powers,
        tiles: counts,
        objective: best[levels * width + tiles],
    })
}

/// Per-user gain built from traced paths: with `m` tiles the user gets its
/// `m` strongest paths. Received power is `p_t` times the combined power
/// gain of those paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGainModel {
    /// `(amplitude, phase)` per path, strongest first. Phase includes
    /// propagation at the carrier.
    terms: Vec<(f64, f64)>,
    coherent: bool,
}

impl PathGainModel {
    /// Power gains add.
    pub fn incoherent(paths: &[PropagationPath], frequency: f64) -> Self {
        Self::build(paths, frequency, false)
    }

    /// Amplitudes add with their phases. Because a tile may be left unused,
    /// the gain with `m` tiles is the best over the first `0..=m` paths,
    /// which keeps it non-decreasing in `m`.
    pub fn coherent(paths: &[PropagationPath], frequency: f64) -> Self {
        Self::build(paths, frequency, true)
    }

    fn build(paths: &[PropagationPath], frequency: f64, coherent: bool) -> Self {
        let mut terms: Vec<(f64, f64)> = paths
            .iter()
            .filter(|p| p.connected)
            .map(|p| (p.attenuation, 2.0 * std::f64::consts::PI * frequency * p.delay - p.phase))
            .collect();
        terms.sort_by(|a, b| b.0.total_cmp(&a.0));
        PathGainModel { terms, coherent }
    }

    pub fn from_terms(mut terms: Vec<(f64, f64)>, coherent: bool) -> Self {
        terms.sort_by(|a, b| b.0.total_cmp(&a.0));
        PathGainModel { terms, coherent }
    }

    /// Linear power gain with `m` tiles.
    pub fn gain(&self, m: usize) -> f64 {
        let used = &self.terms[..m.min(self.terms.len())];
        if self.coherent {
            let mut sum = Complex64::new(0.0, 0.0);
            let mut best = 0.0f64;
            for &(a, phase) in used {
                sum += Complex64::from_polar(a, phase);
                best = best.max(sum.norm_sqr());
            }
            best
        } else {
            used.iter().map(|&(a, _)| a * a).sum()
        }
    }

    pub fn received_power(&self, transmit_power: f64, m: usize) -> f64 {
        transmit_power * self.gain(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn problem(users: usize, levels: usize, tiles: usize) -> MultiUserProblem {
        MultiUserProblem {
            tx_position: Vec3::ZERO,
            rx_positions: vec![Vec3::X; users],
            weights: vec![1.0; users],
            total_power: 1.0,
            total_tiles: tiles,
            power_levels: levels,
        }
    }

    #[test]
    fn single_user_takes_everything() {
        let a = allocate_multiuser(&problem(1, 32, 10), |_, p, m| p * (1.0 + m as f64)).unwrap();
        assert_eq!(a.powers, vec![1.0]);
        assert_eq!(a.tiles, vec![10]);
        assert!((a.objective - 11.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_concave_users_split_evenly() {
        let gain = |_: usize, p: f64, m: usize| p.sqrt() + (m as f64).sqrt();
        let a = allocate_multiuser(&problem(2, 32, 10), gain).unwrap();
        assert!((a.powers[0] - 0.5).abs() < 1e-12 && (a.powers[1] - 0.5).abs() < 1e-12);
        assert_eq!(a.tiles, vec![5, 5]);
        // Brute force over the same grid.
        let mut best = f64::NEG_INFINITY;
        for u in 0..=32 {
            for m in 0..=10 {
                let v = gain(0, u as f64 / 32.0, m) + gain(1, (32 - u) as f64 / 32.0, 10 - m);
                best = best.max(v);
            }
        }
        assert!((a.objective - best).abs() < 1e-12);
    }

    #[test]
    fn no_tiles_available() {
        let a = allocate_multiuser(&problem(3, 8, 0), |j, p, m| (j + 1) as f64 * p + m as f64).unwrap();
        assert_eq!(a.tiles, vec![0, 0, 0]);
        let expected: f64 = a.powers.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum();
        assert!((a.objective - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_problem() {
        assert!(matches!(allocate_multiuser(&problem(0, 4, 4), |_, _, _| 0.0), Err(Error::EmptyProblem)));
    }

    #[test]
    fn weights_default_to_distance() {
        let p = MultiUserProblem::new(Vec3::ZERO, vec![Vec3::new(3.0, 4.0, 0.0)], 1.0, 1);
        assert_eq!(p.weights, vec![5.0]);
    }

    #[test]
    fn path_gain_models() {
        let inc = PathGainModel::from_terms(vec![(0.5, 0.0), (1.0, 0.0), (1.0, std::f64::consts::PI)], false);
        assert_eq!(inc.gain(0), 0.0);
        assert!((inc.gain(2) - 2.0).abs() < 1e-12);
        assert!((inc.gain(9) - 2.25).abs() < 1e-12);
        let coh = PathGainModel::from_terms(vec![(1.0, 0.0), (1.0, 0.0)], true);
        assert!((coh.gain(2) - 4.0).abs() < 1e-12);
        // The antiphase second path is never worth using.
        let anti = PathGainModel::from_terms(vec![(1.0, 0.0), (1.0, std::f64::consts::PI)], true);
        assert!((anti.gain(2) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn allocation_respects_budgets(
            weights in prop::collection::vec(0.1f64..10.0, 1..4),
            levels in 1usize..9,
            tiles in 0usize..6,
            k in 0.1f64..3.0,
        ) {
            let mut p = problem(weights.len(), levels, tiles);
            p.weights = weights;
            let a = allocate_multiuser(&p, |j, pt, m| (pt * (j as f64 + k)).sqrt() + m as f64 * 0.1).unwrap();
            prop_assert!(a.powers.iter().sum::<f64>() <= p.total_power + 1e-9);
            prop_assert!(a.tiles.iter().sum::<usize>() <= p.total_tiles);
        }

        #[test]
        fn coherent_gain_is_monotone(terms in prop::collection::vec((0.0f64..1.0, 0.0f64..6.3), 0..8)) {
            let g = PathGainModel::from_terms(terms, true);
            for m in 0..8 {
                prop_assert!(g.gain(m + 1) >= g.gain(m));
            }
        }
    }
}
