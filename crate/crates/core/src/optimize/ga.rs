//! Integer-genome genetic algorithm.
//!
//! Tournament selection (size 2), uniform crossover, per-gene uniform
//! resampling mutation and elitism. All random draws come from one seeded
//! stream on the calling thread; only fitness evaluation runs in parallel,
//! so results do not depend on the worker count.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitness values the GA can rank. Greater is better.
pub trait Score: Clone + Send + Sync {
    fn cmp_score(&self, other: &Self) -> Ordering;
}

impl Score for f64 {
    fn cmp_score(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

/// Lexicographic comparison, first component most significant.
impl<const N: usize> Score for [f64; N] {
    fn cmp_score(&self, other: &Self) -> Ordering {
        for (a, b) in self.iter().zip(other) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Probability that each gene of a child is resampled.
    pub mutation_rate: f64,
    pub elite_count: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population_size: 40,
            generations: 100,
            crossover_rate: 0.8,
            mutation_rate: 0.01,
            elite_count: 2,
            seed: 1,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.population_size < 2 {
            return bad("population size must be at least 2".into());
        }
        if self.elite_count >= self.population_size {
            return bad(format!(
                "elite count {} must be below population size {}",
                self.elite_count, self.population_size
            ));
        }
        for (name, r) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} rate {r} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GaResult<S> {
    pub best: Vec<u8>,
    pub best_score: S,
    /// Best score in the population after initialisation and after each generation.
    pub history: Vec<S>,
    /// Distinct genomes evaluated.
    pub evaluations: usize,
}

/// Runs the GA. `seeds` are placed first in the initial population (extra
/// seeds beyond the population size are ignored); the rest is uniform random.
///
/// Panics if `params` fail [`GaParams::validate`] or a seed has the wrong length.
pub fn ga_run<S, F>(fitness: F, params: &GaParams, gene_arity: u8, genome_len: usize, seeds: &[Vec<u8>]) -> GaResult<S>
where
    S: Score,
    F: Fn(&[u8]) -> S + Sync,
{
    params.validate().expect("valid GA parameters");
    assert!(gene_arity >= 1, "gene arity must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut cache: HashMap<Vec<u8>, S> = HashMap::new();

    let mut population: Vec<Vec<u8>> = seeds
        .iter()
        .take(params.population_size)
        .map(|s| {
            assert_eq!(s.len(), genome_len, "seed genome length");
            s.clone()
        })
        .collect();
    while population.len() < params.population_size {
        population.push((0..genome_len).map(|_| rng.random_range(0..gene_arity)).collect());
    }

    let mut scores = evaluate(&fitness, &population, &mut cache);
    let mut history = vec![best_of(&scores).1.clone()];

    for _ in 0..params.generations {
        let order = ranking(&scores);
        // rank[i] = position of individual i in the ranking.
        let mut rank = vec![0usize; order.len()];
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos;
        }
        let mut next: Vec<Vec<u8>> = order[..params.elite_count]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < params.population_size {
            let a = tournament(&mut rng, &rank);
            let b = tournament(&mut rng, &rank);
            let mut child = if rng.random::<f64>() < params.crossover_rate {
                population[a]
                    .iter()
                    .zip(&population[b])
                    .map(|(&x, &y)| if rng.random::<bool>() { x } else { y })
                    .collect()
            } else {
                population[a].clone()
            };
            for g in child.iter_mut() {
                if rng.random::<f64>() < params.mutation_rate {
                    *g = rng.random_range(0..gene_arity);
                }
            }
            next.push(child);
        }
        population = next;
        scores = evaluate(&fitness, &population, &mut cache);
        history.push(best_of(&scores).1.clone());
    }

    let (i, s) = best_of(&scores);
    GaResult {
        best: population[i].clone(),
        best_score: s.clone(),
        history,
        evaluations: cache.len(),
    }
}

fn evaluate<S, F>(fitness: &F, population: &[Vec<u8>], cache: &mut HashMap<Vec<u8>, S>) -> Vec<S>
where
    S: Score,
    F: Fn(&[u8]) -> S + Sync,
{
    let mut fresh: Vec<&Vec<u8>> = Vec::new();
    for g in population {
        if !cache.contains_key(g) && !fresh.contains(&g) {
            fresh.push(g);
        }
    }
    let results: Vec<S> = fresh.par_iter().map(|g| fitness(g)).collect();
    for (g, s) in fresh.into_iter().zip(results) {
        cache.insert(g.clone(), s);
    }
    population.iter().map(|g| cache[g].clone()).collect()
}

/// Indices sorted best first; ties keep population order.
fn ranking<S: Score>(scores: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].cmp_score(&scores[a]));
    order
}

fn best_of<S: Score>(scores: &[S]) -> (usize, &S) {
    let i = ranking(scores)[0];
    (i, &scores[i])
}

fn tournament(rng: &mut ChaCha8Rng, rank: &[usize]) -> usize {
    let a = rng.random_range(0..rank.len());
    let b = rng.random_range(0..rank.len());
    if rank[a] <= rank[b] {
        a
    } else {
        b
    }
}
