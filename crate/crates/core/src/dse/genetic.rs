use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::run::{assemble, check_keys, compare_designs, executor_for, prepare_dir, DesignResult, DseReport, Evaluator, Executor};
use super::space::{assignment_of, choice_of, enumerate_designs, index_of, DesignPoint, DesignSpace, ParameterSweep};
use super::DseError;
use crate::master::{RuntimeConfig, SimulationPlan};

pub const MUTATION_RATE: f64 = 0.1;
pub const MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneticOptions {
    pub population: usize,
    pub generations: usize,
}

impl Default for GeneticOptions {
    fn default() -> Self {
        GeneticOptions {
            population: 8,
            generations: 5,
        }
    }
}

type Genome = Vec<usize>;

struct Search<'s> {
    space: &'s DesignSpace,
    values: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    // assignment bit patterns -> design index of the first evaluation
    cache: HashMap<Vec<u64>, usize>,
    results: BTreeMap<usize, DesignResult>,
    evaluations: usize,
}

impl Search<'_> {
    fn point(&self, g: &Genome) -> DesignPoint {
        DesignPoint {
            index: index_of(&self.values, g),
            assignment: assignment_of(self.space, &self.values, g),
        }
    }

    fn key(&self, g: &Genome) -> Vec<u64> {
        g.iter().zip(&self.values).map(|(&c, v)| v[c].to_bits()).collect()
    }

    fn valid(&self, g: &Genome) -> bool {
        self.space.satisfies(&assignment_of(self.space, &self.values, g))
    }

    fn evaluate(&mut self, eval: &Evaluator, population: &[Genome]) {
        let mut pending = Vec::new();
        for g in population {
            let key = self.key(g);
            if !self.cache.contains_key(&key) {
                let p = self.point(g);
                self.cache.insert(key, p.index);
                pending.push(p);
            }
        }
        self.evaluations += pending.len();
        for r in eval.evaluate_all(&pending) {
            self.results.insert(r.index, r);
        }
    }

    fn result(&self, g: &Genome) -> &DesignResult {
        &self.results[&self.cache[&self.key(g)]]
    }

    /// Fitness is the first objective only.
    fn better<'g>(&self, a: &'g Genome, b: &'g Genome) -> &'g Genome {
        let first = &self.space.objectives[..1];
        match compare_designs(self.result(a), self.result(b), first) {
            Ordering::Greater => b,
            _ => a,
        }
    }

    fn tournament<'g>(&mut self, population: &'g [Genome]) -> &'g Genome {
        let a = &population[self.rng.random_range(0..population.len())];
        let b = &population[self.rng.random_range(0..population.len())];
        self.better(a, b)
    }

    fn offspring(&mut self, p1: &Genome, p2: &Genome) -> Genome {
        for _ in 0..MAX_RETRIES {
            let mut child: Genome = p1
                .iter()
                .zip(p2)
                .map(|(&a, &b)| if self.rng.random_bool(0.5) { a } else { b })
                .collect();
            for (gene, vals) in child.iter_mut().zip(&self.values) {
                if self.rng.random_bool(MUTATION_RATE) {
                    *gene = self.rng.random_range(0..vals.len());
                }
            }
            if self.valid(&child) {
                return child;
            }
        }
        p1.clone()
    }
}

/// Seeded genetic search over the design space. Fitness is the first
/// objective.
///
/// The initial population is drawn from the feasible designs (without
/// replacement while designs remain). Each generation keeps the best member,
/// then fills up with children of two binary-tournament winners: uniform
/// crossover, then each key is resampled with probability 0.1. A child
/// violating a constraint is regenerated up to 100 times before the first
/// parent is copied instead. No assignment is simulated twice.
pub fn genetic_search(
    space: &DesignSpace,
    plan: &SimulationPlan,
    base_rt: &RuntimeConfig,
    out_dir: &Path,
    opts: GeneticOptions,
) -> Result<DseReport, DseError> {
    let started = Instant::now();
    space.validate()?;
    check_keys(space, plan)?;
    let out_dir = prepare_dir(out_dir)?;
    let (executor, build) = executor_for(space.engine, plan, &out_dir)?;
    let mut report = genetic_search_with(space, plan, base_rt, &out_dir, opts, &executor)?;
    report.build = build;
    report.total_wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

pub fn genetic_search_with(
    space: &DesignSpace,
    plan: &SimulationPlan,
    base_rt: &RuntimeConfig,
    out_dir: &Path,
    opts: GeneticOptions,
    executor: &Executor,
) -> Result<DseReport, DseError> {
    let started = Instant::now();
    if opts.population < 2 {
        return Err(DseError::Config("population must be at least 2".into()));
    }
    if space.objectives.is_empty() {
        return Err(DseError::Config("genetic search needs at least one objective".into()));
    }
    check_keys(space, plan)?;
    let designs = enumerate_designs(space)?;
    let out_dir = prepare_dir(out_dir)?;
    let eval = Evaluator::new(space, plan, base_rt, &out_dir, executor)?;
    let values: Vec<Vec<f64>> = space.sweeps.iter().map(ParameterSweep::expand).collect();
    let mut search = Search {
        space,
        rng: ChaCha8Rng::seed_from_u64(space.seed),
        cache: HashMap::new(),
        results: BTreeMap::new(),
        evaluations: 0,
        values,
    };

    let mut population: Vec<Genome> = Vec::with_capacity(opts.population);
    while population.len() < opts.population {
        let take = (opts.population - population.len()).min(designs.len());
        for i in sample(&mut search.rng, designs.len(), take) {
            population.push(choice_of(&search.values, designs[i].index));
        }
    }
    search.evaluate(&eval, &population);

    for generation in 0..opts.generations {
        let elite = population
            .iter()
            .reduce(|a, b| search.better(a, b))
            .expect("population is not empty")
            .clone();
        let mut next = vec![elite];
        while next.len() < opts.population {
            let p1 = search.tournament(&population).clone();
            let p2 = search.tournament(&population).clone();
            next.push(search.offspring(&p1, &p2));
        }
        population = next;
        search.evaluate(&eval, &population);
        log::debug!("generation {}: {} designs evaluated", generation + 1, search.results.len());
    }

    debug_assert_eq!(search.evaluations, search.results.len());
    Ok(assemble(space, search.results.into_values().collect(), started, None))
}
