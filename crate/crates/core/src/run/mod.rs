//! The generation loop: improve, canonicalize, select, train, sample, merge.

mod config;
mod stats;

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use config::RunConfig;
pub use stats::{read_csv, write_csv, write_jsonl, StatsRow, STATS_FIELDS};

use crate::error::{Error, Result};
use crate::gs::{build_matrix, segment_sums, verify_hadamard, GsArray, Score, HADAMARD_SCORE_EPS};
use crate::model::{checkpoint, AdamWConfig, AnyModel, ModelManifest, TrainConfig};
use crate::par::Exec;
use crate::rng::{self, phase, Rng};
use crate::search::{closest_with_sum, improve, ImproveConfig, TemperatureLadder};
use crate::symmetry::{canonicalize, permutations4};

/// Candidate with its score.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub array: GsArray,
    pub score: Score,
}

impl Scored {
    pub fn new(array: GsArray) -> Self {
        Self { score: array.score(), array }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Population selected, model not yet trained on it.
    Selected,
    /// Generation finished.
    Trained,
}

/// Counts for one generation that are not part of the statistics file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    /// Fraction of raw model samples already satisfying the segment sums.
    pub constraint_ratio_sample: Option<f64>,
    pub new_hadamards: usize,
    pub population: usize,
}

#[derive(Clone, Debug)]
pub struct RunState {
    pub config: RunConfig,
    /// Generation currently in progress or last finished, see `stage`.
    pub generation: usize,
    pub stage: Stage,
    /// Canonical, distinct, sorted by score then canonical bytes.
    pub population: Vec<Scored>,
    pub archive: Vec<GsArray>,
    archive_keys: HashSet<Vec<i8>>,
    pub model: AnyModel,
    pub ladder: TemperatureLadder,
    pub stats: Vec<StatsRow>,
    pub reports: Vec<GenerationReport>,
    /// Partial statistics of the generation in progress.
    pending: Option<StatsRow>,
    pub exec: Exec,
}

fn exact_hadamard(s: &Scored) -> bool {
    s.score.value() <= HADAMARD_SCORE_EPS && verify_hadamard(&build_matrix(&s.array))
}

fn finite_mean(scores: impl Iterator<Item = Score>) -> f64 {
    let (sum, count) = scores.filter(|s| s.is_finite()).fold((0.0, 0usize), |(s, c), x| (s + x.value(), c + 1));
    if count == 0 { f64::NAN } else { sum / count as f64 }
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 { 0.0 } else { hits as f64 / total as f64 }
}

fn sorted_abs(sums: [i64; 4]) -> [u32; 4] {
    let mut k = sums.map(|x| x.unsigned_abs() as u32);
    k.sort_unstable();
    k
}

/// Whether the sorted absolute segment sums equal `target` (sorted).
pub fn satisfies_sums(a: &GsArray, target: [u32; 4]) -> bool {
    sorted_abs(segment_sums(a).0) == target
}

/// Moves `a` onto the constraint with the fewest entry flips: segments are
/// matched to target values by the cheapest assignment (first in permutation
/// order on ties) and each is pushed to the nearer signed target.
pub fn repair_sums(a: &GsArray, target: [u32; 4]) -> GsArray {
    let sums = segment_sums(a).0;
    let cost = |s: i64, k: u32| (s - k as i64).abs().min((s + k as i64).abs());
    let best = permutations4()
        .into_iter()
        .min_by_key(|p| (0..4).map(|i| cost(sums[i], target[p[i]])).sum::<i64>())
        .expect("24 permutations");
    let segs: [Vec<i8>; 4] = std::array::from_fn(|i| {
        let k = target[best[i]] as i64;
        let s = sums[i];
        let goal = if (s - k).abs() <= (s + k).abs() { k } else { -k };
        if goal == s {
            return a.segment(i).to_vec();
        }
        let x: Vec<f64> = a.segment(i).iter().map(|&v| v as f64).collect();
        closest_with_sum(&x, goal)
    });
    GsArray::new(segs).expect("segment lengths unchanged")
}

/// Random initial population; with fixed sums every segment is uniform among
/// arrangements with its assigned signed sum.
pub fn init_population(config: &RunConfig, rng: &mut Rng) -> Result<Vec<GsArray>> {
    config.validate()?;
    let np = config.n / 4;
    (0..config.sample_size)
        .map(|_| match config.segment_sums {
            None => GsArray::random(config.n, rng),
            Some(k) => {
                let mut values = k.map(|x| x as i64);
                values.shuffle(rng);
                let segs: [Vec<i8>; 4] = std::array::from_fn(|i| {
                    let sum = if rng.random::<bool>() { values[i] } else { -values[i] };
                    let plus = ((np as i64 + sum) / 2) as usize;
                    let mut seg: Vec<i8> = (0..np).map(|j| if j < plus { 1 } else { -1 }).collect();
                    seg.shuffle(rng);
                    seg
                });
                GsArray::new(segs)
            }
        })
        .collect()
}

impl RunState {
    pub fn new(config: RunConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        let mut model = AnyModel::new(config.model_config()?, AdamWConfig { weight_decay: config.weight_decay, ..Default::default() }, &mut rng::stream(config.seed, &[phase::MODEL_INIT]))?;
        model.set_exec(exec);
        let ladder = TemperatureLadder::geometric(config.t_min, config.t_max, config.rungs)?;
        Ok(Self {
            config,
            generation: 0,
            stage: Stage::Trained,
            population: Vec::new(),
            archive: Vec::new(),
            archive_keys: HashSet::new(),
            model,
            ladder,
            stats: Vec::new(),
            reports: Vec::new(),
            pending: None,
            exec,
        })
    }

    /// Generations fully finished.
    pub fn completed(&self) -> usize {
        self.stats.len()
    }

    pub fn is_finished(&self) -> bool {
        self.completed() >= self.config.generations
    }

    fn stream(&self, phase: u64) -> Rng {
        rng::stream(self.config.seed, &[self.generation as u64, phase])
    }

    fn improve_config(&self) -> ImproveConfig {
        ImproveConfig { preserve_sums: self.config.segment_sums.is_some(), sweeps: self.config.tempering_sweeps, exec: self.exec, ..Default::default() }
    }

    fn train_config(&self) -> TrainConfig {
        let c = &self.config;
        let resumed = self.generation > 0;
        let steps = if resumed { ((c.training_steps as f64 * c.resume_fraction).ceil() as usize).max(1) } else { c.training_steps };
        TrainConfig {
            steps,
            batch_size: c.batch_size,
            learning_rate: if resumed { c.learning_rate * c.resume_lr_scale } else { c.learning_rate },
            warmup_steps: if c.segment_sums.is_some() { (steps as f64 * c.warmup_fraction).round() as usize } else { 0 },
            grad_clip: 1.0,
            augment: c.augment,
        }
    }

    /// Adds verified Hadamard arrays of the population to the archive and
    /// returns the newly archived ones.
    fn archive_hadamards(&mut self) -> Vec<GsArray> {
        let found: Vec<bool> = self.exec.map_ref(&self.population, |_, s| exact_hadamard(s));
        let mut fresh = Vec::new();
        for (s, hit) in self.population.iter().zip(found) {
            if hit && self.archive_keys.insert(s.array.as_slice().to_vec()) {
                self.archive.push(s.array.clone());
                fresh.push(s.array.clone());
            }
        }
        fresh
    }

    /// Sampling, improvement, merge and selection for the next generation.
    pub fn select(&mut self) -> Result<Vec<GsArray>> {
        if self.stage == Stage::Selected {
            return Err(Error::Config { field: "stage", msg: "selection already done for this generation".into() });
        }
        if self.is_finished() {
            return Err(Error::Config { field: "generations", msg: "run already finished".into() });
        }
        let start = Instant::now();
        self.generation = self.completed();
        let cfg = self.config.clone();
        let mut report = GenerationReport { generation: self.generation, ..Default::default() };
        let raw = if self.generation == 0 {
            init_population(&cfg, &mut self.stream(phase::INIT))?
        } else {
            let mut samples = self.model.sample(cfg.sample_size, cfg.temperature, &mut self.stream(phase::SAMPLE))?;
            if let Some(k) = cfg.segment_sums {
                let target = sorted_abs(k.map(|x| x as i64));
                let ok = samples.iter().filter(|a| satisfies_sums(a, target)).count();
                report.constraint_ratio_sample = Some(ratio(ok, samples.len()));
                samples = self.exec.map(samples, |_, a| if satisfies_sums(&a, target) { a } else { repair_sums(&a, target) });
            }
            samples
        };
        let raw_scored: Vec<Scored> = self.exec.map_ref(&raw, |_, a| Scored::new(a.clone()));
        let score_sample_mean = finite_mean(raw_scored.iter().map(|s| s.score));
        let raw_hits = self.exec.map_ref(&raw_scored, |_, s| exact_hadamard(s)).into_iter().filter(|&h| h).count();

        let (icfg, mut irng) = (self.improve_config(), self.stream(phase::IMPROVE));
        let improved = improve(raw, cfg.num_improve, &icfg, &mut self.ladder, &mut irng)?;
        let mut pool: Vec<GsArray> = improved.into_iter().map(|c| c.array).collect();
        pool.extend(self.population.drain(..).map(|s| s.array));
        let canonical = self.exec.map(pool, |_, a| Scored::new(canonicalize(&a)));
        let mut seen = HashSet::new();
        let mut population: Vec<Scored> = canonical.into_iter().filter(|s| seen.insert(s.array.as_slice().to_vec())).collect();
        population.sort_by(|a, b| a.score.cmp(&b.score).then_with(|| a.array.cmp(&b.array)));
        population.truncate(cfg.sample_size);
        self.population = population;
        report.new_hadamards = self.archive_hadamards().len();
        report.population = self.population.len();

        let selection: Vec<GsArray> = self.population.iter().take(cfg.training_size).map(|s| s.array.clone()).collect();
        let hits = self.population.iter().take(cfg.training_size).filter(|s| exact_hadamard(s)).count();
        self.pending = Some(StatsRow {
            gen: self.generation,
            wall_seconds: start.elapsed().as_secs_f64(),
            loss_train: f64::NAN,
            score_sample_mean,
            score_selected_mean: finite_mean(self.population.iter().take(cfg.training_size).map(|s| s.score)),
            hadamard_ratio_sample: ratio(raw_hits, raw_scored.len()),
            hadamard_ratio_selected: ratio(hits, selection.len()),
            archive_size: self.archive.len(),
        });
        self.reports.push(report);
        self.stage = Stage::Selected;
        Ok(selection)
    }

    /// Trains on the current selection and closes the generation.
    pub fn train(&mut self) -> Result<&StatsRow> {
        if self.stage != Stage::Selected {
            return Err(Error::Config { field: "stage", msg: "no selection to train on".into() });
        }
        let start = Instant::now();
        let selection: Vec<GsArray> = self.population.iter().take(self.config.training_size).map(|s| s.array.clone()).collect();
        let tc = self.train_config();
        let report = self.model.train(&selection, &tc, &mut self.stream(phase::TRAIN))?;
        let mut row = self.pending.take().expect("selection recorded statistics");
        row.loss_train = report.final_loss();
        row.wall_seconds = if self.config.wall_clock { row.wall_seconds + start.elapsed().as_secs_f64() } else { 0.0 };
        self.stats.push(row);
        self.stage = Stage::Trained;
        Ok(self.stats.last().expect("just pushed"))
    }

    /// One full generation.
    pub fn run_generation(&mut self) -> Result<&StatsRow> {
        if self.stage == Stage::Trained {
            self.select()?;
        }
        self.train()
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            kind: "run".into(),
            config: self.config.clone(),
            generation: self.generation,
            stage: self.stage,
            population: self.population.iter().map(|s| key_string(&s.array)).collect(),
            archive: self.archive.iter().map(key_string).collect(),
            ladder: self.ladder.clone(),
            stats: self.stats.clone(),
            reports: self.reports.clone(),
            pending: self.pending.clone(),
            model: self.model.manifest(),
        };
        checkpoint::encode(&serde_json::to_value(&manifest)?, &self.model.payload())
    }

    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        checkpoint::write_atomic(path, &self.checkpoint_bytes()?)
    }

    pub fn restore_bytes(bytes: &[u8], exec: Exec) -> Result<Self> {
        let (value, payload) = checkpoint::decode(bytes)?;
        let m: Manifest = serde_json::from_value(value)?;
        if m.kind != "run" {
            return Err(Error::Checkpoint(format!("expected a run checkpoint, found {:?}", m.kind)));
        }
        m.config.validate()?;
        let n = m.config.n;
        let parse = |s: &String| parse_key(n, s);
        let population = m.population.iter().map(|s| parse(s).map(Scored::new)).collect::<Result<Vec<_>>>()?;
        let archive = m.archive.iter().map(parse).collect::<Result<Vec<_>>>()?;
        if let Some(bad) = archive.iter().find(|a| !verify_hadamard(&build_matrix(a))) {
            return Err(Error::Checkpoint(format!("archive entry {} is not Hadamard", key_string(bad))));
        }
        let mut model = AnyModel::from_parts(&m.model, &payload)?;
        model.set_exec(exec);
        Ok(Self {
            archive_keys: archive.iter().map(|a| a.as_slice().to_vec()).collect(),
            config: m.config,
            generation: m.generation,
            stage: m.stage,
            population,
            archive,
            model,
            ladder: m.ladder,
            stats: m.stats,
            reports: m.reports,
            pending: m.pending,
            exec,
        })
    }

    pub fn restore(path: &Path, exec: Exec) -> Result<Self> {
        Self::restore_bytes(&std::fs::read(path)?, exec)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    config: RunConfig,
    generation: usize,
    stage: Stage,
    population: Vec<String>,
    archive: Vec<String>,
    ladder: TemperatureLadder,
    stats: Vec<StatsRow>,
    reports: Vec<GenerationReport>,
    pending: Option<StatsRow>,
    model: ModelManifest,
}

fn key_string(a: &GsArray) -> String {
    String::from_utf8(a.key()).expect("ascii key")
}

fn parse_key(n: usize, s: &str) -> Result<GsArray> {
    let data = s
        .bytes()
        .map(|b| match b {
            b'+' => Ok(1),
            b'-' => Ok(-1),
            _ => Err(Error::Checkpoint(format!("bad array entry {:?}", b as char))),
        })
        .collect::<Result<Vec<i8>>>()?;
    GsArray::from_flat(n, data).map_err(|e| Error::Checkpoint(e.to_string()))
}
