//! Evolutionary search over genomes `(P, R, n)`.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    minimize, rank_hits, search_bounds, ClassProblem, IntegerAssignment, NelderMeadOptions, SearchHit,
    SearchReport, TargetUnitary, ACCEPT_TOLERANCE, AREA_MAX,
};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::spin_coupling::{PulseSolution, SpinModeCoupling, RATIO_RANGE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population: usize,
    pub generations: usize,
    pub seed: u64,
    pub bound: i32,
    pub tolerance: f64,
    pub tournament: usize,
    pub area_sigma: f64,
    pub ratio_sigma: f64,
    /// Probability that a child's integers are re-derived by rounding
    /// instead of a ±1 step.
    pub repair_rate: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population: 64,
            generations: 200,
            seed: 0,
            bound: 10,
            tolerance: ACCEPT_TOLERANCE,
            tournament: 3,
            area_sigma: 0.5,
            ratio_sigma: 0.05,
            repair_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
struct Genome {
    x: Vec<f64>,
    n: Vec<i32>,
    fitness: f64,
}

const ELITES: usize = 2;

/// Seeded genetic search with tournament selection, Gaussian mutation on
/// `(P, R)`, integer mutation on `n`, elitism of two and a Nelder-Mead
/// polish of the elites each generation.
pub fn evolutionary_search(
    target: &TargetUnitary,
    coupling: &SpinModeCoupling,
    config: &EvolutionConfig,
) -> Result<SearchReport> {
    if config.population < 8 {
        return Err(Error::Argument(format!("population {} below 8", config.population)));
    }
    let start = Instant::now();
    let mut report = SearchReport::empty();
    if config.generations == 0 {
        return Ok(report);
    }
    let problem = ClassProblem::new(coupling, target)?;
    let m = problem.n_classes();
    let bounds = search_bounds();
    let mut rng = substream(config.seed, &[0x45_56]);
    let area_noise = Normal::new(0.0, config.area_sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let ratio_noise = Normal::new(0.0, config.ratio_sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let eval = |g: &mut Genome| g.fitness = problem.cost(&g.x[..4], g.x[4], &g.n);

    let mut pop: Vec<Genome> = (0..config.population)
        .map(|_| {
            let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..AREA_MAX / 2.0)).collect();
            x.push(rng.random_range(RATIO_RANGE.0..=RATIO_RANGE.1));
            let n = problem.repair_integers(&x[..4], x[4], config.bound);
            let mut g = Genome { x, n, fitness: 0.0 };
            eval(&mut g);
            g
        })
        .collect();

    let mut found: Vec<SearchHit> = Vec::new();
    for gen in 0..config.generations {
        pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        for (e, elite) in pop.iter_mut().take(ELITES).enumerate() {
            let n = elite.n.clone();
            let polished = minimize(
                |x| problem.cost(&x[..4], x[4], &n),
                &elite.x,
                &bounds,
                &NelderMeadOptions {
                    seed: config.seed ^ ((gen as u64) << 8 | e as u64),
                    initial_step: 0.01,
                    max_evaluations: 2_000,
                    restarts: 2,
                    ..Default::default()
                },
            )?;
            if polished.value < elite.fitness {
                elite.x = polished.x;
                elite.fitness = polished.value;
            }
            report.nodes_explored += polished.evaluations as u64;
            if elite.fitness < config.tolerance && !found.iter().any(|h| h.assignment.n == elite.n) {
                found.push(SearchHit {
                    solution: PulseSolution::new(elite.x[..4].to_vec(), elite.x[4], target.name.clone()),
                    residual: elite.fitness,
                    assignment: IntegerAssignment {
                        n: elite.n.clone(),
                        bound: config.bound,
                    },
                });
                // Restart this slot so the population keeps exploring.
                let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..AREA_MAX / 2.0)).collect();
                x.push(rng.random_range(RATIO_RANGE.0..=RATIO_RANGE.1));
                elite.n = problem.repair_integers(&x[..4], x[4], config.bound);
                elite.x = x;
                eval(elite);
            }
        }

        let mut next: Vec<Genome> = pop.iter().take(ELITES).cloned().collect();
        while next.len() < config.population {
            let pick = |rng: &mut _| -> usize {
                (0..config.tournament.max(1))
                    .map(|_| Rng::random_range(rng, 0..pop.len()))
                    .min_by(|&a, &b| pop[a].fitness.total_cmp(&pop[b].fitness))
                    .expect("tournament size ≥ 1")
            };
            let parent = &pop[pick(&mut rng)];
            let mut x = parent.x.clone();
            for v in x.iter_mut().take(4) {
                *v += area_noise.sample(&mut rng);
            }
            x[4] += ratio_noise.sample(&mut rng);
            bounds.project(&mut x);
            let n = if rng.random_bool(config.repair_rate) {
                problem.repair_integers(&x[..4], x[4], config.bound)
            } else {
                let mut n = parent.n.clone();
                let free: Vec<usize> = (1..m).filter(|&k| !problem.is_fixed(k)).collect();
                let k = free[rng.random_range(0..free.len())];
                let step = if rng.random_bool(0.5) { 1 } else { -1 };
                n[k] = (n[k] + step).clamp(-config.bound, config.bound);
                n
            };
            let mut child = Genome { x, n, fitness: 0.0 };
            eval(&mut child);
            next.push(child);
        }
        pop = next;
    }
    rank_hits(&mut found);
    report.solutions = found;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal_modes::{solve_modes, CrystalConfig};

    #[test]
    fn zero_generations_is_empty() {
        let q = SpinModeCoupling::new(&solve_modes(&CrystalConfig::default()).unwrap().1).unwrap();
        let r = evolutionary_search(
            &TargetUnitary::spokes(),
            &q,
            &EvolutionConfig {
                generations: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.solutions.is_empty());
    }

    #[test]
    fn small_population_is_rejected() {
        let q = SpinModeCoupling::new(&solve_modes(&CrystalConfig::default()).unwrap().1).unwrap();
        let cfg = EvolutionConfig {
            population: 4,
            ..Default::default()
        };
        assert!(evolutionary_search(&TargetUnitary::spokes(), &q, &cfg).is_err());
    }
}
