//! Unified adaptive metaheuristic optimizer.
//!
//! Every candidate carries a position and a velocity. Each iteration the
//! velocity is updated as `v ← ω(t)·v + Σ_j α_j(t)·Φ_j(x)`, where the `Φ_j`
//! are displacement proposals from five strategies (dung beetle, particle
//! swarm, genetic, gravitational search, red deer) and
//! `α_j(t) = α_j^max·(1 − t/T)`. Positions move by `v` and are clamped to the
//! box. The run stops after `T` iterations or when the relative change of
//! the iteration's best fitness falls below `ε`.

mod strategies;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use strategies::{DungBeetle, Genetic, Gravitational, ParticleSwarm, RedDeer, StepContext, Strategy, StrategyId};

/// Per-dimension cap on a single strategy's displacement, as a fraction of
/// the dimension's range.
pub const MAX_DISPLACEMENT_FRACTION: f64 = 0.2;
/// Initial velocities are uniform in `±` this fraction of the range.
pub const INITIAL_VELOCITY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimKind {
    Continuous,
    Integer,
    /// Index into a list of options; snapped like an integer.
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: DimKind,
}

impl Dim {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, kind: DimKind) -> Self {
        Dim {
            name: name.into(),
            lower,
            upper,
            kind,
        }
    }

    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self::new(name, lower, upper, DimKind::Continuous)
    }

    pub fn integer(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self::new(name, lower, upper, DimKind::Integer)
    }

    pub fn categorical(name: impl Into<String>, options: usize) -> Self {
        Self::new(name, 0.0, options.saturating_sub(1) as f64, DimKind::Categorical)
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    /// Value handed to the fitness function.
    pub fn snap(&self, x: f64) -> f64 {
        match self.kind {
            DimKind::Continuous => self.clamp(x),
            DimKind::Integer | DimKind::Categorical => self.clamp(x).round().clamp(self.lower, self.upper),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        let s = SearchSpace { dims };
        s.validate()?;
        Ok(s)
    }

    /// `n` identical continuous dimensions `x0..x{n-1}`.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new((0..n).map(|i| Dim::continuous(format!("x{i}"), lower, upper)).collect())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("search space has no dimensions".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::Config(format!(
                    "dimension `{}`: need finite lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if self.dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::Config(format!("duplicate dimension `{}`", d.name)));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, d) in x.iter_mut().zip(&self.dims) {
            *v = d.clamp(*v);
        }
    }

    pub fn snap(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.dims).map(|(&v, d)| d.snap(v)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len() && x.iter().zip(&self.dims).all(|(&v, d)| v >= d.lower && v <= d.upper)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.dims.iter().map(|d| rng.random_range(d.lower..=d.upper)).collect()
    }

    /// `name=value` lines for the snapped position.
    pub fn format_assignment(&self, x: &[f64]) -> String {
        self.dims
            .iter()
            .zip(self.snap(x))
            .map(|(d, v)| match d.kind {
                DimKind::Continuous => format!("{}={}\n", d.name, v),
                _ => format!("{}={}\n", d.name, v as i64),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub fitness: Option<f64>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
}

impl Candidate {
    pub fn new(position: Vec<f64>, velocity: Vec<f64>) -> Self {
        Candidate {
            best_position: position.clone(),
            position,
            velocity,
            fitness: None,
            best_fitness: f64::INFINITY,
        }
    }

    fn record(&mut self, j: f64) {
        self.fitness = Some(j);
        if j < self.best_fitness {
            self.best_fitness = j;
            self.best_position = self.position.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub population: usize,
    pub max_iterations: usize,
    pub inertia_start: f64,
    pub inertia_end: f64,
    /// `α_j^max` in the order DBO, PSO, GA, GSA, RDA.
    pub alpha_max: [f64; 5],
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population: 30,
            max_iterations: 50,
            inertia_start: 0.9,
            inertia_end: 0.4,
            alpha_max: [0.2; 5],
            epsilon: 1e-3,
            seed: 42,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.alpha_max.iter().any(|a| !(*a >= 0.0 && a.is_finite())) || self.alpha_max.iter().all(|a| *a == 0.0) {
            return bad("alpha_max must be nonnegative with at least one positive");
        }
        if ![self.inertia_start, self.inertia_end].iter().all(|w| w.is_finite()) {
            return bad("inertia schedule must be finite");
        }
        Ok(())
    }

    /// Linear inertia schedule from `inertia_start` at `t = 0` to
    /// `inertia_end` at `t = T`.
    pub fn inertia(&self, t: usize) -> f64 {
        let f = t as f64 / self.max_iterations as f64;
        self.inertia_start + (self.inertia_end - self.inertia_start) * f
    }

    /// Strategies with their `α^max`, in canonical order.
    pub fn strategies(&self) -> Vec<(Box<dyn Strategy>, f64)> {
        StrategyId::ALL
            .iter()
            .zip(self.alpha_max)
            .map(|(id, a)| (id.operator(), a))
            .collect()
    }
}

/// `α^max·(1 − t/T)`.
pub fn adaptive_weight(alpha_max: f64, t: usize, max_iterations: usize) -> f64 {
    alpha_max * (1.0 - t as f64 / max_iterations as f64)
}

/// One strategy's proposal for candidate `i`, clamped per dimension.
pub fn strategy_displacement(
    strategy: &dyn Strategy,
    i: usize,
    ctx: &StepContext<'_>,
    rng: &mut dyn rand::RngCore,
) -> Vec<f64> {
    let mut phi = strategy.displacement(i, ctx, rng);
    for (p, d) in phi.iter_mut().zip(&ctx.space.dims) {
        let cap = MAX_DISPLACEMENT_FRACTION * d.range();
        *p = if p.is_finite() { p.clamp(-cap, cap) } else { 0.0 };
    }
    phi
}

/// Population plus the best position seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swarm {
    pub candidates: Vec<Candidate>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
}

impl Swarm {
    pub fn new(candidates: Vec<Candidate>) -> Self {
        let best_position = candidates.first().map(|c| c.position.clone()).unwrap_or_default();
        Swarm {
            candidates,
            best_position,
            best_fitness: f64::INFINITY,
        }
    }

    /// Store fitness values (in candidate order) and update bests.
    pub fn record(&mut self, fitness: &[f64]) {
        for (c, &j) in self.candidates.iter_mut().zip(fitness) {
            c.record(j);
            if j < self.best_fitness {
                self.best_fitness = j;
                self.best_position = c.position.clone();
            }
        }
    }

    /// Synchronous update at iteration `t`: all displacements are computed
    /// from the current population before anyone moves.
    pub fn step(
        &mut self,
        t: usize,
        space: &SearchSpace,
        config: &OptimizerConfig,
        strategies: &[(Box<dyn Strategy>, f64)],
        rng: &mut dyn rand::RngCore,
    ) {
        let omega = config.inertia(t);
        let weights: Vec<f64> = strategies
            .iter()
            .map(|(_, a)| adaptive_weight(*a, t, config.max_iterations))
            .collect();
        let ctx = StepContext {
            space,
            population: &self.candidates,
            best: &self.best_position,
            t,
            max_iterations: config.max_iterations,
        };
        let mut velocities = Vec::with_capacity(self.candidates.len());
        for (i, c) in self.candidates.iter().enumerate() {
            let mut v: Vec<f64> = c.velocity.iter().map(|x| omega * x).collect();
            for ((s, _), &w) in strategies.iter().zip(&weights) {
                if w == 0.0 {
                    continue;
                }
                let phi = strategy_displacement(s.as_ref(), i, &ctx, rng);
                for (vd, p) in v.iter_mut().zip(phi) {
                    *vd += w * p;
                }
            }
            velocities.push(v);
        }
        for (c, v) in self.candidates.iter_mut().zip(velocities) {
            for (x, dv) in c.position.iter_mut().zip(&v) {
                *x += dv;
            }
            space.clamp(&mut c.position);
            c.velocity = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Best fitness seen so far.
    pub best_j: f64,
    pub mean_j: f64,
    /// Best fitness within this iteration's population.
    pub iteration_best_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    /// Snapped best position (what the fitness function saw).
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Row 1 is the initial population; row `k + 1` follows iteration `k`.
    pub history: Vec<HistoryRow>,
    pub evaluations: usize,
    /// Stopped by the relative-improvement test rather than the budget.
    pub converged: bool,
}

impl OptimizeResult {
    pub fn write_history_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "best_J", "mean_J"])?;
        for h in &self.history {
            w.write_record([h.iteration.to_string(), h.best_j.to_string(), h.mean_j.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Relative-improvement stopping test, applied to consecutive
/// per-iteration best fitness values (the all-time best is monotone and would
/// stop the run on the first iteration without progress). A previous best of
/// exactly zero counts as converged.
pub fn has_converged(previous: f64, current: f64, epsilon: f64) -> bool {
    if previous == 0.0 {
        return true;
    }
    ((current - previous) / previous).abs() < epsilon
}

/// Configured run: strategies, optional seeded initial positions, and
/// parallel or sequential evaluation.
pub struct Optimizer<'a> {
    space: &'a SearchSpace,
    config: &'a OptimizerConfig,
    strategies: Vec<(Box<dyn Strategy>, f64)>,
    initial: Vec<Vec<f64>>,
}

impl<'a> Optimizer<'a> {
    pub fn new(space: &'a SearchSpace, config: &'a OptimizerConfig) -> Result<Self> {
        space.validate()?;
        config.validate()?;
        Ok(Optimizer {
            space,
            config,
            strategies: config.strategies(),
            initial: Vec::new(),
        })
    }

    pub fn with_strategies(mut self, strategies: Vec<(Box<dyn Strategy>, f64)>) -> Self {
        self.strategies = strategies;
        self
    }

    /// Place these positions (clamped) at the front of the initial
    /// population instead of random draws.
    pub fn with_initial(mut self, positions: Vec<Vec<f64>>) -> Result<Self> {
        if positions.len() > self.config.population {
            return Err(Error::Config("more initial positions than population".into()));
        }
        if let Some(p) = positions.iter().find(|p| p.len() != self.space.len()) {
            return Err(Error::Config(format!(
                "initial position has {} coordinates, space has {}",
                p.len(),
                self.space.len()
            )));
        }
        self.initial = positions;
        Ok(self)
    }

    /// Sequential evaluation.
    pub fn run<F>(&self, mut fitness: F) -> Result<OptimizeResult>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        self.drive(|xs| xs.iter().map(|x| fitness(x)).collect())
    }

    /// Evaluations within an iteration run on the rayon pool; results are
    /// merged in candidate order so the run stays deterministic.
    pub fn run_parallel<F>(&self, fitness: F) -> Result<OptimizeResult>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        self.drive(|xs| xs.par_iter().map(|x| fitness(x)).collect())
    }

    fn drive<E>(&self, mut eval: E) -> Result<OptimizeResult>
    where
        E: FnMut(&[Vec<f64>]) -> Vec<Result<f64>>,
    {
        let (space, cfg) = (self.space, self.config);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let candidates = (0..cfg.population)
            .map(|i| {
                let mut x = match self.initial.get(i) {
                    Some(p) => p.clone(),
                    None => space.sample(&mut rng),
                };
                space.clamp(&mut x);
                let v = space
                    .dims
                    .iter()
                    .map(|d| {
                        let r = INITIAL_VELOCITY_FRACTION * d.range();
                        rng.random_range(-r..=r)
                    })
                    .collect();
                Candidate::new(x, v)
            })
            .collect();
        let mut swarm = Swarm::new(candidates);
        let mut evaluations = 0;
        let mut evaluate = |swarm: &mut Swarm, t: usize| -> Result<HistoryRow> {
            let xs: Vec<Vec<f64>> = swarm.candidates.iter().map(|c| space.snap(&c.position)).collect();
            let mut js = Vec::with_capacity(xs.len());
            for (i, r) in eval(&xs).into_iter().enumerate() {
                let j = r.map_err(|e| {
                    let when = if t == 0 {
                        "initial population".to_string()
                    } else {
                        format!("iteration {t}")
                    };
                    Error::Numerical(format!("fitness failed for candidate {i} in {when}: {e}"))
                })?;
                js.push(if j.is_finite() { j } else { f64::INFINITY });
            }
            evaluations += js.len();
            swarm.record(&js);
            let finite: Vec<f64> = js.iter().copied().filter(|j| j.is_finite()).collect();
            let iteration_best_j = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let mean_j = if finite.is_empty() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            Ok(HistoryRow {
                iteration: t + 1,
                best_j: swarm.best_fitness,
                mean_j,
                iteration_best_j,
            })
        };

        let mut history = vec![evaluate(&mut swarm, 0)?];
        let mut converged = false;
        for t in 1..=cfg.max_iterations {
            swarm.step(t, space, cfg, &self.strategies, &mut rng);
            let row = evaluate(&mut swarm, t)?;
            let previous = history.last().expect("initial row").iteration_best_j;
            history.push(row);
            log::debug!("iteration {t}: best {} mean {}", row.best_j, row.mean_j);
            if has_converged(previous, row.iteration_best_j, cfg.epsilon) {
                converged = true;
                break;
            }
        }
        if !swarm.best_fitness.is_finite() {
            return Err(Error::Numerical(format!(
                "no finite fitness in {evaluations} evaluations"
            )));
        }
        Ok(OptimizeResult {
            best_position: space.snap(&swarm.best_position),
            best_fitness: swarm.best_fitness,
            history,
            evaluations,
            converged,
        })
    }
}

/// Minimize `fitness` over `space` with all five default strategies.
pub fn optimize<F>(fitness: F, space: &SearchSpace, config: &OptimizerConfig) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    Optimizer::new(space, config)?.run(fitness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    /// Every uniform draw is exactly 0.5.
    struct Half;

    impl RngCore for Half {
        fn next_u32(&mut self) -> u32 {
            1 << 31
        }
        fn next_u64(&mut self) -> u64 {
            1 << 63
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0x80);
        }
    }

    fn sphere(x: &[f64]) -> Result<f64> {
        Ok(x.iter().map(|v| v * v).sum())
    }

    fn ctx<'a>(space: &'a SearchSpace, pop: &'a [Candidate], best: &'a [f64]) -> StepContext<'a> {
        StepContext {
            space,
            population: pop,
            best,
            t: 1,
            max_iterations: 10,
        }
    }

    #[test]
    fn half_rng_is_half() {
        assert_eq!(Half.random::<f64>(), 0.5);
    }

    #[test]
    fn pso_hand_computed() {
        let space = SearchSpace::uniform(3, -5.0, 5.0).unwrap();
        let mut c = Candidate::new(vec![0.0; 3], vec![0.0; 3]);
        c.best_position = vec![1.0, 0.0, 0.0];
        let pop = [c];
        let best = [1.0, 0.0, 0.0];
        let pso = ParticleSwarm {
            cognitive: 1.0,
            social: 1.0,
        };
        let phi = pso.displacement(0, &ctx(&space, &pop, &best), &mut Half);
        assert_eq!(phi, vec![1.0, 0.0, 0.0]);
        // 20% of range 10 caps at 2; the clamp leaves it alone
        assert_eq!(
            strategy_displacement(&pso, 0, &ctx(&space, &pop, &best), &mut Half),
            phi
        );
    }

    #[test]
    fn pso_at_best_is_zero() {
        let space = SearchSpace::uniform(2, -1.0, 1.0).unwrap();
        let c = Candidate::new(vec![0.3, -0.2], vec![0.0; 2]);
        let best = c.position.clone();
        let pop = [c];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = ParticleSwarm::default().displacement(0, &ctx(&space, &pop, &best), &mut rng);
        assert_eq!(phi, vec![0.0, 0.0]);
    }

    #[test]
    fn gsa_identical_positions_is_zero() {
        let space = SearchSpace::uniform(2, -1.0, 1.0).unwrap();
        let pop: Vec<Candidate> = (0..4)
            .map(|i| {
                let mut c = Candidate::new(vec![0.5, 0.5], vec![0.0; 2]);
                c.fitness = Some(i as f64);
                c
            })
            .collect();
        let best = [0.5, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = Gravitational::default().displacement(2, &ctx(&space, &pop, &best), &mut rng);
        assert_eq!(phi, vec![0.0, 0.0]);
        let m = Gravitational::masses(&pop);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(m[0] > m[1] && m[3] == 0.0);
    }

    #[test]
    fn displacement_is_clamped() {
        let space = SearchSpace::uniform(1, 0.0, 1.0).unwrap();
        let mut c = Candidate::new(vec![0.0], vec![0.0]);
        c.best_position = vec![1.0];
        let pop = [c];
        let best = [1.0];
        let phi = strategy_displacement(&ParticleSwarm::default(), 0, &ctx(&space, &pop, &best), &mut Half);
        assert_eq!(phi, vec![0.2]);
    }

    #[test]
    fn weights_and_inertia() {
        assert_eq!(adaptive_weight(0.2, 0, 50), 0.2);
        assert_eq!(adaptive_weight(0.2, 50, 50), 0.0);
        assert_eq!(adaptive_weight(0.5, 25, 50), 0.25);
        let cfg = OptimizerConfig::default();
        assert_eq!(cfg.inertia(0), 0.9);
        assert!((cfg.inertia(50) - 0.4).abs() < 1e-15);
        assert!((cfg.alpha_max.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    fn evaluated_swarm(space: &SearchSpace, n: usize, seed: u64) -> Swarm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cands = (0..n)
            .map(|_| Candidate::new(space.sample(&mut rng), vec![0.0; space.len()]))
            .collect();
        let mut s = Swarm::new(cands);
        let js: Vec<f64> = s.candidates.iter().map(|c| sphere(&c.position).unwrap()).collect();
        s.record(&js);
        s
    }

    #[test]
    fn null_update_leaves_population() {
        let space = SearchSpace::uniform(3, -1.0, 1.0).unwrap();
        let cfg = OptimizerConfig {
            alpha_max: [0.0; 5],
            inertia_start: 0.0,
            inertia_end: 0.0,
            ..OptimizerConfig::default()
        };
        let mut s = evaluated_swarm(&space, 5, 3);
        let before = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.step(1, &space, &cfg, &cfg.strategies(), &mut rng);
        for (a, b) in s.candidates.iter().zip(&before.candidates) {
            assert_eq!(a.position, b.position);
        }
    }

    #[test]
    fn final_step_is_pure_inertia() {
        let space = SearchSpace::uniform(2, -10.0, 10.0).unwrap();
        let cfg = OptimizerConfig::default();
        let mut s = evaluated_swarm(&space, 6, 4);
        for c in &mut s.candidates {
            c.velocity = vec![0.1, -0.2];
        }
        let before = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.step(cfg.max_iterations, &space, &cfg, &cfg.strategies(), &mut rng);
        let w = cfg.inertia(cfg.max_iterations);
        for (a, b) in s.candidates.iter().zip(&before.candidates) {
            for d in 0..2 {
                let expect = space.dims[d].clamp(b.position[d] + w * b.velocity[d]);
                assert!((a.position[d] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn out_of_bounds_is_clamped() {
        let space = SearchSpace::uniform(1, 0.0, 1.0).unwrap();
        let cfg = OptimizerConfig {
            alpha_max: [0.0; 5],
            inertia_start: 1.0,
            inertia_end: 1.0,
            ..OptimizerConfig::default()
        };
        let mut s = Swarm::new(vec![
            Candidate::new(vec![0.9], vec![5.0]),
            Candidate::new(vec![0.1], vec![-5.0]),
        ]);
        s.record(&[1.0, 2.0]);
        s.step(1, &space, &cfg, &cfg.strategies(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s.candidates[0].position, vec![1.0]);
        assert_eq!(s.candidates[1].position, vec![0.0]);
    }

    #[test]
    fn constant_fitness_stops_at_second_row() {
        let space = SearchSpace::uniform(2, -1.0, 1.0).unwrap();
        let r = optimize(|_| Ok(3.0), &space, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.history.len(), 2);
        assert_eq!(r.history[1].iteration, 2);
        assert!(r.converged);
        // a zero previous best counts as converged too
        let r = optimize(|_| Ok(0.0), &space, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.history.len(), 2);
    }

    #[test]
    fn sphere_converges_and_history_monotone() {
        let space = SearchSpace::uniform(5, -5.0, 5.0).unwrap();
        let r = optimize(sphere, &space, &OptimizerConfig::default()).unwrap();
        assert!(r.history.windows(2).all(|w| w[1].best_j <= w[0].best_j));
        assert_eq!(r.best_fitness, r.history.last().unwrap().best_j);
        assert!(r.best_fitness < r.history[0].best_j);
    }

    #[test]
    fn deterministic_and_parallel_agree() {
        let space = SearchSpace::uniform(3, -2.0, 2.0).unwrap();
        let cfg = OptimizerConfig {
            population: 8,
            max_iterations: 10,
            ..OptimizerConfig::default()
        };
        let a = optimize(sphere, &space, &cfg).unwrap();
        let b = optimize(sphere, &space, &cfg).unwrap();
        let c = Optimizer::new(&space, &cfg).unwrap().run_parallel(sphere).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn minimal_population_and_snapping() {
        let space = SearchSpace::new(vec![
            Dim::integer("units", 2.0, 16.0),
            Dim::categorical("kernels", 3),
            Dim::continuous("lr", 1e-4, 1e-2),
        ])
        .unwrap();
        let cfg = OptimizerConfig {
            population: 2,
            max_iterations: 5,
            ..OptimizerConfig::default()
        };
        let r = optimize(
            |x| {
                assert_eq!(x[0], x[0].round());
                assert!(x[1] == 0.0 || x[1] == 1.0 || x[1] == 2.0);
                Ok((x[0] - 7.0).powi(2) + x[1] + x[2])
            },
            &space,
            &cfg,
        )
        .unwrap();
        assert!(space.contains(&r.best_position));
        let text = space.format_assignment(&r.best_position);
        assert!(text.starts_with("units=") && text.contains("\nkernels="));
    }

    #[test]
    fn non_finite_is_infinite_and_errors_abort() {
        let space = SearchSpace::uniform(1, -1.0, 1.0).unwrap();
        let cfg = OptimizerConfig {
            population: 4,
            max_iterations: 3,
            ..OptimizerConfig::default()
        };
        let r = optimize(|x| Ok(if x[0] > 0.0 { f64::NAN } else { -x[0] }), &space, &cfg);
        if let Ok(r) = r {
            assert!(r.best_fitness.is_finite());
        }
        let err = optimize(|_| Err(Error::invalid("boom")), &space, &cfg).unwrap_err();
        assert!(err.to_string().contains("initial population"), "{err}");
        assert!(optimize(|_| Ok(f64::NAN), &space, &cfg).is_err());
    }

    #[test]
    fn seeded_initial_positions() {
        let space = SearchSpace::uniform(2, -1.0, 1.0).unwrap();
        let cfg = OptimizerConfig {
            population: 4,
            max_iterations: 1,
            ..OptimizerConfig::default()
        };
        let r = Optimizer::new(&space, &cfg)
            .unwrap()
            .with_initial(vec![vec![0.0, 0.0]])
            .unwrap()
            .run(sphere)
            .unwrap();
        assert_eq!(r.history[0].best_j, 0.0);
        assert_eq!(r.best_position, vec![0.0, 0.0]);
    }

    #[test]
    fn bad_configs() {
        assert!(SearchSpace::uniform(2, 1.0, 1.0).is_err());
        assert!(SearchSpace::new(vec![Dim::continuous("a", 0.0, 1.0), Dim::continuous("a", 0.0, 1.0)]).is_err());
        let space = SearchSpace::uniform(1, 0.0, 1.0).unwrap();
        for cfg in [
            OptimizerConfig {
                population: 1,
                ..Default::default()
            },
            OptimizerConfig {
                max_iterations: 0,
                ..Default::default()
            },
            OptimizerConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            OptimizerConfig {
                alpha_max: [0.0; 5],
                ..Default::default()
            },
        ] {
            assert!(optimize(sphere, &space, &cfg).is_err());
        }
    }
}
