//! Case A (max-min power) and Case B (min-max delay spread under a power
//! constraint) objectives, and the GA driver over tile configurations.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ga::{ga_run, GaParams, Score};
use crate::channel::{delay_spread, total_power_dbm, PowerDelayProfile};
use crate::emfunc::STATE_COUNT;
use crate::error::{Error, Result};
use crate::raytrace::{EnvConfiguration, RadioParams, Trace, Tracer};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum Objective {
    /// Maximise the minimum received power.
    MaxMinPower,
    /// Minimise the maximum RMS delay spread with every receiver at or
    /// above `threshold_dbm`.
    MinMaxDelaySpread { threshold_dbm: f64 },
}

/// Lexicographic GA score, greater is better.
///
/// Max-min power ranks by `[min, mean]` power in dBm, so configurations
/// that connect more receivers win even while the minimum sits on the floor.
/// Delay spread ranks every feasible configuration above every infeasible
/// one: feasible as `[1, -max, -mean]` spread, infeasible as
/// `[0, -violation, mean power]` with the violation summed in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessScore(pub [f64; 3]);

impl Score for FitnessScore {
    fn cmp_score(&self, other: &Self) -> Ordering {
        self.0.cmp_score(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    /// Min power in dBm, or max delay spread in seconds over connected receivers.
    pub objective: f64,
    pub rx_power_dbm: Vec<f64>,
    /// Seconds; `None` for a receiver with no connected path.
    pub delay_spreads: Vec<Option<f64>>,
    pub constraint_satisfied: bool,
    pub score: FitnessScore,
}

impl FitnessReport {
    pub fn disconnected(&self, floor_dbm: f64) -> usize {
        self.rx_power_dbm.iter().filter(|&&p| p <= floor_dbm).count()
    }

    pub fn max_delay_spread(&self) -> Option<f64> {
        self.delay_spreads.iter().flatten().copied().reduce(f64::max)
    }
}

/// Scores an already traced configuration.
pub fn assess(trace: &Trace, params: &RadioParams, objective: Objective) -> FitnessReport {
    let floor = params.power_floor_dbm;
    let rx_power_dbm: Vec<f64> = trace.paths.iter().map(|p| total_power_dbm(p, floor).dbm).collect();
    let delay_spreads: Vec<Option<f64>> = trace
        .paths
        .iter()
        .map(|p| delay_spread(&PowerDelayProfile::from_paths(p)).ok())
        .collect();
    let n = rx_power_dbm.len().max(1) as f64;
    let min_power = rx_power_dbm.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_power = rx_power_dbm.iter().sum::<f64>() / n;
    let max_ds = delay_spreads.iter().flatten().copied().fold(0.0, f64::max);
    let mean_ds = delay_spreads.iter().flatten().sum::<f64>() / n;

    match objective {
        Objective::MaxMinPower => FitnessReport {
            objective: min_power,
            constraint_satisfied: rx_power_dbm.iter().all(|&p| p > floor),
            score: FitnessScore([min_power, mean_power, 0.0]),
            rx_power_dbm,
            delay_spreads,
        },
        Objective::MinMaxDelaySpread { threshold_dbm } => {
            let violation: f64 = rx_power_dbm.iter().map(|&p| (threshold_dbm - p).max(0.0)).sum();
            let feasible = violation == 0.0;
            let score = if feasible {
                [1.0, -max_ds, -mean_ds]
            } else {
                [0.0, -violation, mean_power]
            };
            FitnessReport {
                objective: max_ds,
                constraint_satisfied: feasible,
                score: FitnessScore(score),
                rx_power_dbm,
                delay_spreads,
            }
        }
    }
}

fn check_genome(scene: &Scene, genome: &[u8]) -> Result<EnvConfiguration> {
    if genome.len() != scene.tile_count() {
        return Err(Error::GenomeLength {
            expected: scene.tile_count(),
            got: genome.len(),
        });
    }
    EnvConfiguration::from_states(genome.to_vec())
}

/// Case A fitness of one genome: min received power over the receivers.
pub fn fitness_case_a(scene: &Scene, genome: &[u8], params: &RadioParams) -> Result<FitnessReport> {
    let config = check_genome(scene, genome)?;
    let tracer = Tracer::new(scene, params.clone())?;
    Ok(assess(&tracer.trace(&config, 0)?, params, Objective::MaxMinPower))
}

/// Case B fitness of one genome: max delay spread, feasible iff every
/// receiver reaches `threshold_dbm`.
pub fn fitness_case_b(scene: &Scene, genome: &[u8], params: &RadioParams, threshold_dbm: f64) -> Result<FitnessReport> {
    let config = check_genome(scene, genome)?;
    let tracer = Tracer::new(scene, params.clone())?;
    Ok(assess(&tracer.trace(&config, 0)?, params, Objective::MinMaxDelaySpread { threshold_dbm }))
}

#[derive(Debug, Clone)]
pub struct Optimization {
    pub best: EnvConfiguration,
    pub report: FitnessReport,
    pub history: Vec<FitnessScore>,
    pub evaluations: usize,
}

/// Tile-configuration search over a fixed scene and radio setup.
pub struct Optimizer<'a> {
    tracer: Tracer<'a>,
    trace_seed: u64,
}

impl<'a> Optimizer<'a> {
    pub fn new(scene: &'a Scene, params: RadioParams, trace_seed: u64) -> Result<Self> {
        Ok(Optimizer {
            tracer: Tracer::new(scene, params)?,
            trace_seed,
        })
    }

    pub fn tracer(&self) -> &Tracer<'a> {
        &self.tracer
    }

    pub fn trace(&self, config: &EnvConfiguration) -> Result<Trace> {
        self.tracer.trace(config, self.trace_seed)
    }

    pub fn evaluate(&self, config: &EnvConfiguration, objective: Objective) -> Result<FitnessReport> {
        Ok(assess(&self.trace(config)?, self.tracer.params(), objective))
    }

    /// Runs the GA with the Plain configuration in the initial population.
    pub fn run(&self, objective: Objective, ga: &GaParams) -> Result<Optimization> {
        let plain = EnvConfiguration::plain(self.tracer.scene().tile_count());
        self.run_seeded(objective, ga, &[plain.states().to_vec()])
    }

    /// Runs the GA with `seeds` placed first in the initial population.
    pub fn run_seeded(&self, objective: Objective, ga: &GaParams, seeds: &[Vec<u8>]) -> Result<Optimization> {
        ga.validate()?;
        let n = self.tracer.scene().tile_count();
        for s in seeds {
            check_genome(self.tracer.scene(), s)?;
        }
        let params = self.tracer.params();
        let result = ga_run(
            |g: &[u8]| {
                let config = EnvConfiguration::from_states(g.to_vec()).expect("genes within arity");
                let trace = self.trace(&config).expect("genome length matches scene");
                assess(&trace, params, objective).score
            },
            ga,
            STATE_COUNT as u8,
            n,
            seeds,
        );
        let best = EnvConfiguration::from_states(result.best)?;
        let report = self.evaluate(&best, objective)?;
        Ok(Optimization {
            best,
            report,
            history: result.history,
            evaluations: result.evaluations,
        })
    }
}
