//! The five displacement operators. Each is the minimal canonical form of
//! its namesake algorithm; all return a raw displacement that the optimizer
//! clamps per dimension before weighting.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Candidate, SearchSpace};

/// What a strategy may look at when proposing a displacement.
pub struct StepContext<'a> {
    pub space: &'a SearchSpace,
    pub population: &'a [Candidate],
    /// Best position found so far (over all iterations).
    pub best: &'a [f64],
    pub t: usize,
    pub max_iterations: usize,
}

impl StepContext<'_> {
    fn fitness(&self, i: usize) -> f64 {
        self.population[i].fitness.unwrap_or(f64::INFINITY)
    }

    /// Candidate indices ordered best first (ties by index).
    fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.population.len()).collect();
        idx.sort_by(|&a, &b| self.fitness(a).total_cmp(&self.fitness(b)).then(a.cmp(&b)));
        idx
    }
}

pub trait Strategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn displacement(&self, i: usize, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyId {
    Dbo,
    Pso,
    Ga,
    Gsa,
    Rda,
}

impl StrategyId {
    pub const ALL: [StrategyId; 5] = [
        StrategyId::Dbo,
        StrategyId::Pso,
        StrategyId::Ga,
        StrategyId::Gsa,
        StrategyId::Rda,
    ];

    /// The operator with its default constants.
    pub fn operator(self) -> Box<dyn Strategy> {
        match self {
            StrategyId::Dbo => Box::new(DungBeetle::default()),
            StrategyId::Pso => Box::new(ParticleSwarm::default()),
            StrategyId::Ga => Box::new(Genetic::default()),
            StrategyId::Gsa => Box::new(Gravitational::default()),
            StrategyId::Rda => Box::new(RedDeer::default()),
        }
    }
}

fn gaussian(rng: &mut dyn RngCore, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

/// `c1·r1·(p_i − x_i) + c2·r2·(g − x_i)` with per-dimension uniforms.
#[derive(Debug, Clone, Copy)]
pub struct ParticleSwarm {
    pub cognitive: f64,
    pub social: f64,
}

impl Default for ParticleSwarm {
    fn default() -> Self {
        ParticleSwarm {
            cognitive: 1.5,
            social: 1.5,
        }
    }
}

impl Strategy for ParticleSwarm {
    fn name(&self) -> &'static str {
        "pso"
    }

    fn displacement(&self, i: usize, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Vec<f64> {
        let c = &ctx.population[i];
        (0..c.position.len())
            .map(|d| {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let x = c.position[d];
                self.cognitive * r1 * (c.best_position[d] - x) + self.social * r2 * (ctx.best[d] - x)
            })
            .collect()
    }
}

/// Uniform crossover toward a tournament-of-2 mate plus sparse Gaussian
/// mutation.
#[derive(Debug, Clone, Copy)]
pub struct Genetic {
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Mutation sd as a fraction of the dimension's range.
    pub mutation_scale: f64,
}

impl Default for Genetic {
    fn default() -> Self {
        Genetic {
            crossover_rate: 0.5,
            mutation_rate: 0.1,
            mutation_scale: 0.05,
        }
    }
}

impl Strategy for Genetic {
    fn name(&self) -> &'static str {
        "ga"
    }

    fn displacement(&self, i: usize, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Vec<f64> {
        let n = ctx.population.len();
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let mate = if ctx.fitness(b) < ctx.fitness(a) { b } else { a };
        let x = &ctx.population[i].position;
        let m = &ctx.population[mate].position;
        (0..x.len())
            .map(|d| {
                let mut step = if rng.random::<f64>() < self.crossover_rate {
                    m[d] - x[d]
                } else {
                    0.0
                };
                if rng.random::<f64>() < self.mutation_rate {
                    step += gaussian(rng, self.mutation_scale * ctx.space.dims[d].range());
                }
                step
            })
            .collect()
    }
}

/// Rolling: push away from the current worst candidate, with a small random
/// deflection.
#[derive(Debug, Clone, Copy)]
pub struct DungBeetle {
    pub k: f64,
    pub deflection: f64,
}

impl Default for DungBeetle {
    fn default() -> Self {
        DungBeetle {
            k: 0.1,
            deflection: 0.02,
        }
    }
}

impl Strategy for DungBeetle {
    fn name(&self) -> &'static str {
        "dbo"
    }

    fn displacement(&self, i: usize, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Vec<f64> {
        let worst = *ctx.ranking().last().expect("non-empty population");
        let x = &ctx.population[i].position;
        let w = &ctx.population[worst].position;
        (0..x.len())
            .map(|d| self.k * (x[d] - w[d]) + gaussian(rng, self.deflection * ctx.space.dims[d].range()))
            .collect()
    }
}

/// Pull toward heavier (fitter) candidates; `G(t) = G0·(1 − t/T)`.
#[derive(Debug, Clone, Copy)]
pub struct Gravitational {
    pub g0: f64,
    pub eps: f64,
}

impl Default for Gravitational {
    fn default() -> Self {
        Gravitational { g0: 1.0, eps: 1e-9 }
    }
}

impl Gravitational {
    /// Min-max normalized fitness (best → 1, worst → 0), then normalized to
    /// sum 1. Equal fitness gives equal masses.
    pub fn masses(population: &[Candidate]) -> Vec<f64> {
        let f: Vec<f64> = population
            .iter()
            .map(|c| c.fitness.filter(|v| v.is_finite()).unwrap_or(f64::INFINITY))
            .collect();
        let finite = f.iter().copied().filter(|v| v.is_finite());
        let best = finite.clone().fold(f64::INFINITY, f64::min);
        let worst = finite.fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = if !(worst > best) {
            f.iter().map(|v| if v.is_finite() { 1.0 } else { 0.0 }).collect()
        } else {
            f.iter()
                .map(|&v| {
                    if v.is_finite() {
                        (worst - v) / (worst - best)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|m| m / total).collect()
        } else {
            vec![1.0 / population.len() as f64; population.len()]
        }
    }
}

impl Strategy for Gravitational {
    fn name(&self) -> &'static str {
        "gsa"
    }

    fn displacement(&self, i: usize, ctx: &StepContext<'_>, _rng: &mut dyn RngCore) -> Vec<f64> {
        let g = self.g0 * (1.0 - ctx.t as f64 / ctx.max_iterations as f64);
        let masses = Self::masses(ctx.population);
        let x = &ctx.population[i].position;
        let mut out = vec![0.0; x.len()];
        for (m, other) in ctx.population.iter().enumerate() {
            if m == i {
                continue;
            }
            let dist = x
                .iter()
                .zip(&other.position)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let w = g * masses[m] / (dist + self.eps);
            for d in 0..x.len() {
                out[d] += w * (other.position[d] - x[d]);
            }
        }
        out
    }
}

/// Roar and fight: the top quarter ("commanders") explore locally, everyone
/// else moves halfway toward a random commander.
#[derive(Debug, Clone, Copy)]
pub struct RedDeer {
    pub roar_scale: f64,
    pub approach: f64,
}

impl Default for RedDeer {
    fn default() -> Self {
        RedDeer {
            roar_scale: 0.05,
            approach: 0.5,
        }
    }
}

impl Strategy for RedDeer {
    fn name(&self) -> &'static str {
        "rda"
    }

    fn displacement(&self, i: usize, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Vec<f64> {
        let n = ctx.population.len();
        let ranking = ctx.ranking();
        let commanders = &ranking[..n.div_ceil(4)];
        let x = &ctx.population[i].position;
        if commanders.contains(&i) {
            (0..x.len())
                .map(|d| gaussian(rng, self.roar_scale * ctx.space.dims[d].range()))
                .collect()
        } else {
            let c = &ctx.population[commanders[rng.random_range(0..commanders.len())]].position;
            x.iter().zip(c).map(|(a, b)| self.approach * (b - a)).collect()
        }
    }
}
