//! Genetic tuning of fuzzy-tree membership peaks and rule consequents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::{reduce, FisNode, FuzzyTree, InputBank};
use crate::sim::mix;
use crate::types::{grade_from_score, Grade};

const REALS_PER_NODE: usize = 6;
const INTS_PER_NODE: usize = 9;

/// Penalty added for every sample whose predicted grade is wrong.
pub const MISCLASSIFICATION_PENALTY: f64 = 0.5;

/// Genes of one tree: per node, two peak triples then nine consequents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub reals: Vec<f64>,
    pub ints: Vec<u8>,
}

impl Chromosome {
    pub fn node_count(&self) -> usize {
        self.ints.len() / INTS_PER_NODE
    }

    /// Default peaks and the monotone rule table in every node.
    pub fn canonical(nodes: usize) -> Self {
        Self::from_nodes(&vec![FisNode::default(); nodes])
    }

    pub fn from_nodes(nodes: &[FisNode]) -> Self {
        let mut reals = Vec::with_capacity(nodes.len() * REALS_PER_NODE);
        let mut ints = Vec::with_capacity(nodes.len() * INTS_PER_NODE);
        for n in nodes {
            reals.extend(n.inputs[0].peaks);
            reals.extend(n.inputs[1].peaks);
            ints.extend(n.rules.iter().map(|g| g.index() as u8));
        }
        Self { reals, ints }
    }

    pub fn random(nodes: usize, rng: &mut impl Rng) -> Self {
        let c = Self {
            reals: (0..nodes * REALS_PER_NODE).map(|_| rng.random::<f64>()).collect(),
            ints: (0..nodes * INTS_PER_NODE).map(|_| rng.random_range(0..3u8)).collect(),
        };
        repair(&c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if self.reals.len() != n * REALS_PER_NODE || self.ints.len() != n * INTS_PER_NODE {
            return Err(Error::domain("chromosome gene counts do not describe whole nodes"));
        }
        if self.ints.iter().any(|&g| g > 2) {
            return Err(Error::domain("rule gene outside {0, 1, 2}"));
        }
        self.reals.chunks(3).try_for_each(|p| InputBank::new([p[0], p[1], p[2]]).map(|_| ()))
    }

    /// Decodes into FIS nodes. Call on repaired chromosomes.
    pub fn to_nodes(&self) -> Vec<FisNode> {
        (0..self.node_count())
            .map(|k| {
                let r = &self.reals[k * REALS_PER_NODE..(k + 1) * REALS_PER_NODE];
                let g = &self.ints[k * INTS_PER_NODE..(k + 1) * INTS_PER_NODE];
                FisNode {
                    inputs: [
                        InputBank { peaks: [r[0], r[1], r[2]] },
                        InputBank { peaks: [r[3], r[4], r[5]] },
                    ],
                    rules: std::array::from_fn(|i| Grade::from_index(g[i] as usize).unwrap_or(Grade::Poor)),
                }
            })
            .collect()
    }

    pub fn to_tree(&self, leaves: Vec<String>) -> Result<FuzzyTree> {
        self.validate()?;
        FuzzyTree::new(leaves, self.to_nodes())
    }
}

/// Clamps reals to `[0, 1]` and sorts every peak triple.
pub fn repair(c: &Chromosome) -> Chromosome {
    let mut out = c.clone();
    for triple in out.reals.chunks_mut(3) {
        for v in triple.iter_mut() {
            *v = if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) };
        }
        triple.sort_by(f64::total_cmp);
    }
    for g in &mut out.ints {
        *g = (*g).min(2);
    }
    out
}

/// Normalized inputs of one tree with their label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub grade: Grade,
}

fn sample_cost(nodes: &[FisNode], s: &TrainingSample) -> f64 {
    let score = reduce(nodes, &s.features);
    let mut cost = (score - s.grade.target_score()).abs();
    if grade_from_score(score).ok().map(|l| l.grade) != Some(s.grade) {
        cost += MISCLASSIFICATION_PENALTY;
    }
    cost
}

/// Mean over samples of `|score - target|`, plus the misclassification
/// penalty for each wrong grade (also averaged).
pub fn fitness(c: &Chromosome, samples: &[TrainingSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("fitness needs at least one sample"));
    }
    let leaves = c.node_count() + 1;
    if let Some(s) = samples.iter().find(|s| s.features.len() != leaves) {
        return Err(Error::Dimension {
            expected: leaves,
            actual: s.features.len(),
        });
    }
    Ok(raw_fitness(&c.to_nodes(), samples))
}

fn raw_fitness(nodes: &[FisNode], samples: &[TrainingSample]) -> f64 {
    samples.iter().map(|s| sample_cost(nodes, s)).sum::<f64>() / samples.len() as f64
}

/// Share of samples whose predicted grade matches the label.
pub fn accuracy(tree: &FuzzyTree, samples: &[TrainingSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| grade_from_score(tree.score(&s.features)).ok().map(|l| l.grade) == Some(s.grade))
        .count();
    hits as f64 / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Standard deviation of the Gaussian step applied to every real gene.
    pub mutation_sigma: f64,
    /// Probability of resampling each rule gene.
    pub int_mutation_rate: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 60,
            generations: 150,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_sigma: 0.05,
            int_mutation_rate: 0.02,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.tournament_size == 0 {
            return Err(Error::domain("population and tournament size must be positive"));
        }
        if self.elitism > self.population {
            return Err(Error::domain("elitism exceeds the population"));
        }
        for (name, p) in [("crossover_rate", self.crossover_rate), ("int_mutation_rate", self.int_mutation_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(Error::domain("mutation_sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub best: Chromosome,
    pub best_fitness: f64,
    /// Best fitness of the initial population, then of every generation.
    pub history: Vec<f64>,
}

fn individual_rng(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(generation as u64)));
    rng.set_stream(index as u64);
    rng
}

/// Evolves a tree with `leaves` inputs from a random population.
pub fn evolve(config: &GaConfig, samples: &[TrainingSample], leaves: usize) -> Result<Evolution> {
    evolve_seeded(config, samples, leaves, Vec::new())
}

/// Like [`evolve`], with the first individuals of the initial population
/// taken from `seeds`.
pub fn evolve_seeded(
    config: &GaConfig,
    samples: &[TrainingSample],
    leaves: usize,
    seeds: Vec<Chromosome>,
) -> Result<Evolution> {
    config.validate()?;
    if leaves == 0 {
        return Err(Error::domain("a tree needs at least one leaf"));
    }
    let nodes = FuzzyTree::node_count(leaves);
    let probe = Chromosome::canonical(nodes);
    fitness(&probe, samples)?;
    for s in &seeds {
        s.validate()?;
        if s.node_count() != nodes {
            return Err(Error::Dimension {
                expected: nodes,
                actual: s.node_count(),
            });
        }
    }

    let first = samples[0].grade;
    if samples.iter().all(|s| s.grade == first) {
        log::warn!("all training samples are {first}; returning a constant-output tree");
        let best = Chromosome {
            ints: vec![first.index() as u8; nodes * INTS_PER_NODE],
            ..probe
        };
        let f = raw_fitness(&best.to_nodes(), samples);
        return Ok(Evolution {
            best,
            best_fitness: f,
            history: vec![f],
        });
    }

    let n = config.population;
    let mut population: Vec<Chromosome> = (0..n)
        .into_par_iter()
        .map(|i| match seeds.get(i) {
            Some(s) => repair(s),
            None => Chromosome::random(nodes, &mut individual_rng(config.seed, 0, i)),
        })
        .collect();
    let mut scores = evaluate(&population, samples);
    let mut history = Vec::with_capacity(config.generations + 1);
    history.push(best_of(&scores).1);

    let normal = Normal::new(0.0, config.mutation_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::domain(e.to_string()))?;
    for generation in 1..=config.generations {
        let ranked = rank(&scores);
        let elite: Vec<Chromosome> = ranked.iter().take(config.elitism).map(|&i| population[i].clone()).collect();
        let children: Vec<Chromosome> = (config.elitism..n)
            .into_par_iter()
            .map(|slot| {
                let mut rng = individual_rng(config.seed, generation, slot);
                let a = tournament(&scores, config.tournament_size, &mut rng);
                let b = tournament(&scores, config.tournament_size, &mut rng);
                let mut child = if nodes > 1 && rng.random::<f64>() < config.crossover_rate {
                    crossover(&population[a], &population[b], rng.random_range(1..nodes))
                } else {
                    population[a].clone()
                };
                mutate(&mut child, config, &normal, &mut rng);
                repair(&child)
            })
            .collect();
        population = elite.into_iter().chain(children).collect();
        scores = evaluate(&population, samples);
        history.push(best_of(&scores).1);
    }

    let (i, f) = best_of(&scores);
    Ok(Evolution {
        best: population[i].clone(),
        best_fitness: f,
        history,
    })
}

fn evaluate(population: &[Chromosome], samples: &[TrainingSample]) -> Vec<f64> {
    population.par_iter().map(|c| raw_fitness(&c.to_nodes(), samples)).collect()
}

/// Indices ordered by fitness, ties broken by index.
fn rank(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx
}

fn best_of(scores: &[f64]) -> (usize, f64) {
    let i = rank(scores)[0];
    (i, scores[i])
}

fn tournament(scores: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..scores.len());
    for _ in 1..size {
        let c = rng.random_range(0..scores.len());
        if scores[c] < scores[best] || (scores[c] == scores[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Nodes before `cut` from `a`, the rest from `b`.
fn crossover(a: &Chromosome, b: &Chromosome, cut: usize) -> Chromosome {
    let (r, g) = (cut * REALS_PER_NODE, cut * INTS_PER_NODE);
    Chromosome {
        reals: a.reals[..r].iter().chain(&b.reals[r..]).copied().collect(),
        ints: a.ints[..g].iter().chain(&b.ints[g..]).copied().collect(),
    }
}

fn mutate(c: &mut Chromosome, config: &GaConfig, normal: &Normal<f64>, rng: &mut ChaCha8Rng) {
    if config.mutation_sigma > 0.0 {
        for v in &mut c.reals {
            *v += normal.sample(rng);
        }
    }
    if config.int_mutation_rate > 0.0 {
        for g in &mut c.ints {
            if rng.random::<f64>() < config.int_mutation_rate {
                *g = rng.random_range(0..3);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corner_samples() -> Vec<TrainingSample> {
        vec![
            TrainingSample { features: vec![0.0, 0.0], grade: Grade::Poor },
            TrainingSample { features: vec![1.0, 1.0], grade: Grade::Good },
        ]
    }

    #[test]
    fn repair_examples() {
        let c = Chromosome {
            reals: vec![0.9, 0.1, 0.5, 1.3, -0.2, 0.4],
            ints: vec![0; 9],
        };
        let r = repair(&c);
        assert_eq!(&r.reals[..3], &[0.1, 0.5, 0.9]);
        assert_eq!(&r.reals[3..], &[0.0, 0.4, 1.0]);
        assert_eq!(repair(&r), r);
    }

    #[test]
    fn fitness_arithmetic() {
        // One node whose every rule says Moderate scores 0.5.
        let c = Chromosome {
            reals: vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0],
            ints: vec![1; 9],
        };
        let s = [TrainingSample { features: vec![0.3, 0.8], grade: Grade::Good }];
        assert!((fitness(&c, &s).unwrap() - 0.9).abs() < 1e-12);
        assert!(fitness(&c, &[]).is_err());
    }

    #[test]
    fn corners_hit_targets_exactly() {
        let c = Chromosome::canonical(1);
        let mut good = c.clone();
        good.ints[8] = 2;
        assert!(fitness(&good, &corner_samples()).unwrap() < 1e-12);
    }

    #[test]
    fn seeded_optimum_survives_without_mutation() {
        let mut opt = Chromosome::canonical(1);
        opt.ints[8] = 2;
        let cfg = GaConfig {
            population: 10,
            generations: 20,
            mutation_sigma: 0.0,
            int_mutation_rate: 0.0,
            ..GaConfig::default()
        };
        let e = evolve_seeded(&cfg, &corner_samples(), 2, vec![opt]).unwrap();
        assert!(e.best_fitness < 1e-12);
        assert!(e.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_grade_is_constant() {
        let s = vec![TrainingSample { features: vec![0.2, 0.4, 0.1], grade: Grade::Moderate }; 3];
        let e = evolve(&GaConfig::default(), &s, 3).unwrap();
        assert!(e.best.ints.iter().all(|&g| g == 1));
        assert!(e.best_fitness < 1e-9);
    }

    #[test]
    fn same_seed_same_result() {
        let s: Vec<TrainingSample> = (0..30)
            .map(|i| {
                let x = i as f64 / 29.0;
                TrainingSample {
                    features: vec![x, 1.0 - x, x * x],
                    grade: Grade::from_index((x * 2.99) as usize).unwrap(),
                }
            })
            .collect();
        let cfg = GaConfig {
            population: 16,
            generations: 10,
            seed: 7,
            ..GaConfig::default()
        };
        let a = evolve(&cfg, &s, 3).unwrap();
        let b = evolve(&cfg, &s, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(a.history.len(), 11);
    }
}
