//! Breeder genetic algorithm over the ten Bezier control weights of a
//! symmetric NLFM frequency function.
//!
//! Fitness is the ISL (dB) of the waveform compressed by its own
//! minimum-ISL mismatched filter. Each generation keeps the best
//! `truncation_fraction` of the population as the breeding pool, pairs
//! parents from it at random, applies single-point crossover and uniform
//! redraw mutation, and (by default) carries the best individual across
//! unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter_design::{solve_min_isl, ConvolutionMatrix, FilterWeights};
use crate::linalg::C64;
use crate::waveform::{build_nlfm_frequency, synthesize_nlfm, BezierGenome, FrequencyFunction, Waveform, GENOME_LEN};

/// Improvement (dB) below which a generation counts as stalled.
pub const STALL_TOLERANCE_DB: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossover {
    #[default]
    SinglePoint,
}

/// Pulse and filter dimensions used by the fitness pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformParams {
    pub bandwidth: f64,
    pub pulse_width: f64,
    pub sample_rate: f64,
    /// Mismatched filter length; twice the pulse length when absent.
    #[serde(default)]
    pub filter_length: Option<usize>,
    #[serde(default = "default_mainlobe_width")]
    pub mainlobe_width: usize,
}

fn default_mainlobe_width() -> usize {
    3
}

impl WaveformParams {
    pub fn n_samples(&self) -> usize {
        (self.pulse_width * self.sample_rate).round() as usize
    }

    pub fn resolved_filter_length(&self) -> usize {
        self.filter_length.unwrap_or(2 * self.n_samples())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub truncation_fraction: f64,
    pub mutation_rate: f64,
    pub crossover: Crossover,
    pub max_generations: usize,
    pub stall_generations: usize,
    pub elitism: bool,
    pub seed: u64,
    pub waveform_params: WaveformParams,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            truncation_fraction: 0.40,
            mutation_rate: 0.001,
            crossover: Crossover::SinglePoint,
            max_generations: 100,
            stall_generations: 20,
            elitism: true,
            seed: 0,
            waveform_params: WaveformParams {
                bandwidth: 5e6,
                pulse_width: 20e-6,
                sample_rate: 12e6,
                filter_length: None,
                mainlobe_width: 3,
            },
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || self.population_size % 2 != 0 {
            return Err(Error::InvalidSize { what: "population size (even, >= 4)", got: self.population_size });
        }
        if !(self.truncation_fraction > 0.0 && self.truncation_fraction <= 1.0) {
            return Err(Error::Domain(format!("truncation fraction must lie in (0, 1], got {}", self.truncation_fraction)));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Domain(format!("mutation rate must lie in [0, 1], got {}", self.mutation_rate)));
        }
        if self.max_generations == 0 {
            return Err(Error::InvalidSize { what: "max generations", got: 0 });
        }
        if pool_size(self.population_size, self.truncation_fraction) < 2 {
            return Err(Error::InvalidInput("breeding pool must hold at least two individuals".into()));
        }
        let wp = &self.waveform_params;
        if !(wp.bandwidth > 0.0) || !(wp.sample_rate >= wp.bandwidth) {
            return Err(Error::Aliasing { sample_rate: wp.sample_rate, bandwidth: wp.bandwidth });
        }
        let n = wp.n_samples();
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidSize { what: "NLFM pulse samples (even, >= 4)", got: n });
        }
        if wp.resolved_filter_length() == 0 {
            return Err(Error::InvalidSize { what: "filter length", got: 0 });
        }
        Ok(())
    }
}

fn pool_size(population: usize, fraction: f64) -> usize {
    // guard against 0.4 * 200 landing a hair above 80
    ((fraction * population as f64) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: BezierGenome,
    /// ISL in dB; `+inf` marks a genome whose filter could not be solved.
    #[serde(with = "crate::io::db")]
    pub fitness: f64,
    pub evaluated: bool,
}

impl Individual {
    pub fn new(genome: BezierGenome) -> Self {
        Self { genome, fitness: f64::INFINITY, evaluated: false }
    }
}

/// NLFM waveform, its min-ISL filter and the compressed response for one
/// genome.
#[derive(Debug, Clone)]
pub struct NlfmDesign {
    pub frequency: FrequencyFunction,
    pub waveform: Waveform,
    pub matrix: ConvolutionMatrix,
    pub filter: FilterWeights,
    pub response: Vec<C64>,
    pub isl_db: f64,
}

/// Run the fitness pipeline for one genome and keep every intermediate.
pub fn design_nlfm(genome: &BezierGenome, params: &WaveformParams) -> Result<NlfmDesign> {
    let frequency = build_nlfm_frequency(genome, params.n_samples())?;
    let waveform = synthesize_nlfm(&frequency, params.sample_rate)?;
    let matrix = ConvolutionMatrix::new(waveform.samples(), params.resolved_filter_length())?.with_mainlobe(params.mainlobe_width)?;
    let filter = solve_min_isl(&matrix, C64::new(waveform.energy(), 0.0))?;
    let response = matrix.apply(&filter.weights)?;
    let isl_db = crate::filter_design::isl_of_response(&response, &matrix.mainlobe(), matrix.peak_row())?;
    Ok(NlfmDesign { frequency, waveform, matrix, filter, response, isl_db })
}

/// Fitness of a genome: min-ISL filter ISL in dB, `+inf` when the filter
/// system is singular.
pub fn evaluate_fitness(genome: &BezierGenome, config: &GaConfig) -> Result<f64> {
    match design_nlfm(genome, &config.waveform_params) {
        Ok(d) => Ok(d.isl_db),
        Err(Error::Singular { .. }) | Err(Error::UndefinedRatio(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Evaluate every not-yet-evaluated individual; order of results does not
/// depend on scheduling.
pub fn evaluate_population(pop: &mut [Individual], config: &GaConfig) -> Result<()> {
    let eval = |ind: &mut Individual| -> Result<()> {
        if !ind.evaluated {
            ind.fitness = evaluate_fitness(&ind.genome, config)?;
            ind.evaluated = true;
        }
        Ok(())
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pop.par_iter_mut().try_for_each(eval)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pop.iter_mut().try_for_each(eval)
    }
}

fn random_genome(rng: &mut impl Rng, bandwidth: f64) -> BezierGenome {
    let hi = bandwidth / 2.0;
    let mut w = [0.0; GENOME_LEN];
    w.iter_mut().for_each(|x| *x = rng.random_range(0.0..=hi));
    BezierGenome { control_weights: w, bandwidth }
}

/// Initial population drawn uniformly from `[0, bandwidth/2]` per gene.
pub fn init_population(config: &GaConfig) -> Result<Vec<Individual>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(init_with(&mut rng, config))
}

fn init_with(rng: &mut ChaCha8Rng, config: &GaConfig) -> Vec<Individual> {
    (0..config.population_size)
        .map(|_| Individual::new(random_genome(rng, config.waveform_params.bandwidth)))
        .collect()
}

fn rank_order(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    a.fitness.total_cmp(&b.fitness).then_with(|| {
        a.genome
            .control_weights
            .iter()
            .zip(&b.genome.control_weights)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// The `⌈fraction·size⌉` fittest individuals, best first. Ties are broken
/// by lexicographic genome order.
pub fn select_truncation(pop: &[Individual], fraction: f64) -> Result<Vec<Individual>> {
    if pop.is_empty() {
        return Err(Error::InvalidInput("empty population".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("truncation fraction must lie in (0, 1], got {fraction}")));
    }
    if pop.iter().any(|i| !i.evaluated) {
        return Err(Error::InvalidInput("selection needs an evaluated population".into()));
    }
    let mut sorted = pop.to_vec();
    sorted.sort_by(rank_order);
    sorted.truncate(pool_size(pop.len(), fraction).min(pop.len()));
    Ok(sorted)
}

/// Children of a cut after gene `cut` (`1..=9`).
pub fn splice(p1: &BezierGenome, p2: &BezierGenome, cut: usize) -> (BezierGenome, BezierGenome) {
    let mut a = *p1;
    let mut b = *p2;
    a.control_weights[cut..].copy_from_slice(&p2.control_weights[cut..]);
    b.control_weights[cut..].copy_from_slice(&p1.control_weights[cut..]);
    (a, b)
}

/// Single-point crossover with the cut drawn uniformly from `1..=9`.
pub fn crossover_single_point(p1: &BezierGenome, p2: &BezierGenome, rng: &mut impl Rng) -> (BezierGenome, BezierGenome) {
    let cut = rng.random_range(1..GENOME_LEN);
    splice(p1, p2, cut)
}

/// Redraw each gene from `[0, bandwidth/2]` with probability `rate`.
pub fn mutate(g: &BezierGenome, rate: f64, rng: &mut impl Rng) -> BezierGenome {
    let hi = g.bandwidth / 2.0;
    let mut out = *g;
    for w in &mut out.control_weights {
        if rng.random::<f64>() < rate {
            *w = rng.random_range(0.0..=hi);
        }
    }
    out
}

/// Mean Euclidean distance (Hz) over all unordered genome pairs.
pub fn average_pairwise_distance(pop: &[Individual]) -> f64 {
    let n = pop.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = pop[i]
                .genome
                .control_weights
                .iter()
                .zip(&pop[j].genome.control_weights)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            total += d2.sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    #[serde(with = "crate::io::db")]
    pub best_db: f64,
    /// Mean over individuals with finite fitness.
    #[serde(with = "crate::io::db")]
    pub avg_db: f64,
    pub avg_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxGenerations,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaHistory {
    pub generations: Vec<GenerationStats>,
    pub best: Individual,
    pub stop_reason: StopReason,
}

impl GaHistory {
    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }

    /// CSV `generation,best_db,avg_db,avg_distance`.
    pub fn to_csv(&self) -> String {
        crate::io::table_csv(
            &["generation", "best_db", "avg_db", "avg_distance"],
            self.generations
                .iter()
                .map(|g| vec![g.generation as f64, g.best_db, g.avg_db, g.avg_distance]),
        )
    }
}

/// Run the GA from a seeded random population.
pub fn evolve(config: &GaConfig) -> Result<GaHistory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pop = init_with(&mut rng, config);
    run(config, pop, rng)
}

/// Run the GA from the given starting genomes (length must equal the
/// configured population size).
pub fn evolve_from(config: &GaConfig, initial: Vec<BezierGenome>) -> Result<GaHistory> {
    config.validate()?;
    if initial.len() != config.population_size {
        return Err(Error::DimensionMismatch { expected: config.population_size, got: initial.len() });
    }
    for g in &initial {
        g.validate()?;
    }
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    run(config, initial.into_iter().map(Individual::new).collect(), rng)
}

fn run(config: &GaConfig, mut pop: Vec<Individual>, mut rng: ChaCha8Rng) -> Result<GaHistory> {
    let mut generations = Vec::new();
    let mut best: Option<Individual> = None;
    let mut stall = 0usize;
    let wrap = |generation: usize| move |e: Error| Error::Generation { generation, source: Box::new(e) };

    for generation in 0.. {
        evaluate_population(&mut pop, config).map_err(wrap(generation))?;
        let gen_best = *pop.iter().min_by(|a, b| rank_order(a, b)).expect("population is nonempty");
        let finite: Vec<f64> = pop.iter().map(|i| i.fitness).filter(|f| f.is_finite()).collect();
        let avg_db = if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        generations.push(GenerationStats {
            generation,
            best_db: gen_best.fitness,
            avg_db,
            avg_distance: average_pairwise_distance(&pop),
        });

        match best {
            Some(b) if !(gen_best.fitness < b.fitness - STALL_TOLERANCE_DB) => {
                stall += 1;
                if gen_best.fitness < b.fitness {
                    best = Some(gen_best);
                }
            }
            _ => {
                stall = 0;
                best = Some(gen_best);
            }
        }

        if generation + 1 >= config.max_generations {
            return Ok(GaHistory { generations, best: best.unwrap(), stop_reason: StopReason::MaxGenerations });
        }
        if config.stall_generations > 0 && stall >= config.stall_generations {
            return Ok(GaHistory { generations, best: best.unwrap(), stop_reason: StopReason::Stalled });
        }

        let pool = select_truncation(&pop, config.truncation_fraction).map_err(wrap(generation))?;
        let mut next = Vec::with_capacity(config.population_size);
        for _ in 0..config.population_size / 2 {
            let i = rng.random_range(0..pool.len());
            let mut j = rng.random_range(0..pool.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = match config.crossover {
                Crossover::SinglePoint => crossover_single_point(&pool[i].genome, &pool[j].genome, &mut rng),
            };
            next.push(Individual::new(mutate(&a, config.mutation_rate, &mut rng)));
            next.push(Individual::new(mutate(&b, config.mutation_rate, &mut rng)));
        }
        if config.elitism {
            *next.last_mut().expect("population is nonempty") = pool[0];
        }
        pop = next;
    }
    unreachable!("generation loop exits through max_generations")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GaConfig {
        GaConfig {
            population_size: 4,
            max_generations: 1,
            seed: 3,
            waveform_params: WaveformParams {
                bandwidth: 1e6,
                pulse_width: 16e-6,
                sample_rate: 2e6,
                filter_length: None,
                mainlobe_width: 3,
            },
            ..GaConfig::default()
        }
    }

    fn ind(fitness: f64, w0: f64) -> Individual {
        let mut w = [0.0; GENOME_LEN];
        w[0] = w0;
        Individual { genome: BezierGenome { control_weights: w, bandwidth: 1.0 }, fitness, evaluated: true }
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = GaConfig { population_size: 5, ..GaConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GaConfig { mutation_rate: 1.5, ..GaConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GaConfig { truncation_fraction: 0.0, ..GaConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_defaults_fill_from_partial_json() {
        let c: GaConfig = serde_json::from_str(r#"{"population_size": 40, "seed": 9}"#).unwrap();
        assert_eq!(c.population_size, 40);
        assert_eq!(c.truncation_fraction, 0.4);
        assert_eq!(c.waveform_params.resolved_filter_length(), 480);
    }

    #[test]
    fn init_population_is_bounded_and_deterministic() {
        let c = small_config();
        let a = init_population(&c).unwrap();
        let b = init_population(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        for (i, x) in a.iter().enumerate() {
            assert!(x.genome.control_weights.iter().all(|w| (0.0..=0.5e6).contains(w)));
            for y in &a[i + 1..] {
                assert_ne!(x.genome, y.genome);
            }
        }
    }

    #[test]
    fn truncation_selection() {
        let pop = vec![ind(-30.0, 0.1), ind(-10.0, 0.2), ind(-20.0, 0.3), ind(-40.0, 0.4)];
        let sel = select_truncation(&pop, 0.5).unwrap();
        assert_eq!(sel.iter().map(|i| i.fitness).collect::<Vec<_>>(), vec![-40.0, -30.0]);
        assert_eq!(select_truncation(&pop, 1.0).unwrap().len(), 4);
        let ties = vec![ind(-5.0, 0.3), ind(-5.0, 0.1)];
        assert_eq!(select_truncation(&ties, 0.5).unwrap()[0].genome.control_weights[0], 0.1);
        assert!(select_truncation(&[], 0.5).is_err());
        let big: Vec<Individual> = (0..200).map(|k| ind(k as f64, 0.0)).collect();
        assert_eq!(select_truncation(&big, 0.40).unwrap().len(), 80);
    }

    #[test]
    fn crossover_splices_at_cut() {
        let p1 = BezierGenome { control_weights: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], bandwidth: 100.0 };
        let p2 = BezierGenome { control_weights: [11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0], bandwidth: 100.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut probe = rng.clone();
        let cut = probe.random_range(1..GENOME_LEN);
        let (a, b) = crossover_single_point(&p1, &p2, &mut rng);
        for k in 0..GENOME_LEN {
            let (ea, eb) = if k < cut { (p1.control_weights[k], p2.control_weights[k]) } else { (p2.control_weights[k], p1.control_weights[k]) };
            assert_eq!((a.control_weights[k], b.control_weights[k]), (ea, eb));
        }
        let (a, b) = splice(&p1, &p2, 5);
        assert_eq!(a.control_weights, [1.0, 2.0, 3.0, 4.0, 5.0, 16.0, 17.0, 18.0, 19.0, 20.0]);
        assert_eq!(b.control_weights, [11.0, 12.0, 13.0, 14.0, 15.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let (c, d) = crossover_single_point(&p1, &p1, &mut rng);
        assert_eq!((c, d), (p1, p1));
    }

    #[test]
    fn mutation_extremes() {
        let g = BezierGenome::linear(1e6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(mutate(&g, 0.0, &mut rng), g);
        let m = mutate(&g, 1.0, &mut rng);
        assert!(m.control_weights.iter().zip(&g.control_weights).all(|(a, b)| a != b));
        assert!(m.validate().is_ok());
    }

    #[test]
    fn pairwise_distance() {
        let same = vec![ind(0.0, 1.0), ind(0.0, 1.0), ind(0.0, 1.0)];
        assert_eq!(average_pairwise_distance(&same), 0.0);
        let two = vec![ind(0.0, 0.0), ind(0.0, 3.0)];
        assert_eq!(average_pairwise_distance(&two), 3.0);
    }

    #[test]
    fn linear_genome_fitness_matches_direct_pipeline() {
        let c = small_config();
        let g = BezierGenome::linear(c.waveform_params.bandwidth);
        let f = evaluate_fitness(&g, &c).unwrap();
        assert!(f.is_finite() && f < 0.0);
        assert_eq!(f, evaluate_fitness(&g, &c).unwrap());
    }

    #[test]
    fn single_generation_history() {
        let c = small_config();
        let h = evolve(&c).unwrap();
        assert_eq!(h.len(), 1);
        let mut pop = init_population(&c).unwrap();
        evaluate_population(&mut pop, &c).unwrap();
        let best = pop.iter().map(|i| i.fitness).fold(f64::INFINITY, f64::min);
        assert_eq!(h.best.fitness, best);
        assert_eq!(h.stop_reason, StopReason::MaxGenerations);
    }

    #[test]
    fn identical_population_without_mutation_stalls() {
        let c = GaConfig { mutation_rate: 0.0, max_generations: 100, stall_generations: 5, ..small_config() };
        let g = BezierGenome::linear(c.waveform_params.bandwidth);
        let h = evolve_from(&c, vec![g; 4]).unwrap();
        assert_eq!(h.stop_reason, StopReason::Stalled);
        assert_eq!(h.len(), 6);
        assert!(h.generations.iter().all(|s| s.avg_distance == 0.0 && s.best_db == h.generations[0].best_db));
        assert_eq!(h.best.genome, g);
    }
}
