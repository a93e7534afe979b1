//! Experiments: POC scenarios, accuracy and runtime studies, overtaking runs.

use std::f64::consts::{FRAC_PI_2, PI};
use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, RectangleFootprint};
use crate::mcs::{mcs_poc, McsResult, SeededSampler};
use crate::poc::{AdaptivePocEstimator, GaussianBelief, HeadingTruncation, PocEstimator, DEFAULT_GRID_SAMPLES};
use crate::smpc::{receding_horizon_run, AnalyticPoc, ConstantMotion, InputBounds, McsPoc, ReferencePath, RunLog, SmpcConfig};

/// `sigma0 + steps_ahead * growth`, component-wise.
pub fn horizon_sigma(sigma0: [f64; 3], growth: [f64; 3], steps_ahead: usize) -> [f64; 3] {
    std::array::from_fn(|i| sigma0[i] + steps_ahead as f64 * growth[i])
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be finite and > 0, got {v}")))
    }
}

fn check_circle_counts(counts: &[usize]) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::param("circle_counts", "must not be empty"));
    }
    if counts.contains(&0) {
        return Err(Error::ZeroCircles);
    }
    Ok(())
}

/// Standard deviations growing with distance along a logistic curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticUncertainty {
    pub gamma: f64,
    pub d0: f64,
    pub sigma_max: [f64; 3],
}

impl Default for LogisticUncertainty {
    fn default() -> Self {
        Self { gamma: 1.0, d0: 1.0, sigma_max: [1.0; 3] }
    }
}

impl LogisticUncertainty {
    pub fn validate(&self) -> Result<()> {
        check_positive("uncertainty.gamma", self.gamma)?;
        if !self.d0.is_finite() {
            return Err(Error::param("uncertainty.d0", "must be finite"));
        }
        self.sigma_max.iter().try_for_each(|&s| check_positive("uncertainty.sigma_max", s))
    }
}

/// `sigma_max / (1 + exp(-gamma (d - d0)))`, component-wise.
pub fn logistic_sigma(d: f64, model: &LogisticUncertainty) -> [f64; 3] {
    let s = 1.0 / (1.0 + (-model.gamma * (d - model.d0)).exp());
    model.sigma_max.map(|m| m * s)
}

/// Two vehicles driving with constant inputs; the object belief is centered
/// on its true configuration with distance-dependent spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub ego: ConstantMotion,
    pub object: ConstantMotion,
    pub ego_footprint: RectangleFootprint,
    pub obj_footprint: RectangleFootprint,
    pub sample_time: f64,
    /// Number of evaluated steps `T`, at times `k * sample_time` for `k < T`.
    pub steps: usize,
    pub uncertainty: LogisticUncertainty,
}

impl ScenarioSpec {
    pub const SAMPLE_TIME: f64 = 0.1;
    /// 15 s: in every built-in scenario the vehicles end more than
    /// `rho_bar + 6 sigma_max` apart for any circle count.
    pub const STEPS: usize = 150;

    fn built_in(name: &str, ego: Configuration, object: Configuration, v_o: f64) -> Self {
        let fp = RectangleFootprint::mid_size_car();
        Self {
            name: name.into(),
            ego: ConstantMotion { initial: ego, v: 1.0, omega: 0.0 },
            object: ConstantMotion { initial: object, v: v_o, omega: 0.0 },
            ego_footprint: fp,
            obj_footprint: fp,
            sample_time: Self::SAMPLE_TIME,
            steps: Self::STEPS,
            uncertainty: LogisticUncertainty::default(),
        }
    }

    /// Perpendicular paths; the vehicles drive through each other.
    pub fn intersection_collision() -> Self {
        Self::built_in("intersection_collision", Configuration::new(0.0, 4.0, 0.0), Configuration::new(4.0, 0.0, FRAC_PI_2), 1.0)
    }

    /// Perpendicular paths; the object clears the crossing first.
    pub fn intersection_pass() -> Self {
        Self::built_in("intersection_pass", Configuration::new(0.0, 4.0, 0.0), Configuration::new(6.0, 0.0, FRAC_PI_2), 1.5)
    }

    /// Oncoming traffic on the neighbouring lane.
    pub fn oncoming_pass() -> Self {
        Self::built_in("oncoming_pass", Configuration::new(0.0, 0.0, 0.0), Configuration::new(8.0, 3.5, PI), 1.0)
    }

    pub fn built_ins() -> [Self; 3] {
        [Self::intersection_collision(), Self::intersection_pass(), Self::oncoming_pass()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::param("name", "must not be empty"));
        }
        self.ego.validate()?;
        self.object.validate()?;
        for fp in [self.ego_footprint, self.obj_footprint] {
            RectangleFootprint::new(fp.length, fp.width)?;
        }
        check_positive("sample_time", self.sample_time)?;
        if self.steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        self.uncertainty.validate()
    }

    pub fn ego_at(&self, step: usize) -> Configuration {
        self.ego.at(step as f64 * self.sample_time)
    }

    pub fn object_at(&self, step: usize) -> Configuration {
        self.object.at(step as f64 * self.sample_time)
    }

    /// Center distance and the object belief in the ego frame at `step`.
    pub fn belief_at(&self, step: usize) -> (f64, GaussianBelief) {
        let (ego, obj) = (self.ego_at(step), self.object_at(step));
        let d = ego.distance(&obj);
        let rel = ego.relative(&obj);
        (d, GaussianBelief { mu: [rel.x, rel.y, rel.theta], sigma: logistic_sigma(d, &self.uncertainty) })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub step: usize,
    pub time: f64,
    pub distance: f64,
    pub belief: GaussianBelief,
    /// One estimate per circle count of the report.
    pub analytic: Vec<f64>,
    pub oracle: McsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scenario: String,
    pub sample_time: f64,
    pub steps: usize,
    pub circle_counts: Vec<usize>,
    pub oracle_samples: u64,
    pub seed: u64,
    pub samples: Vec<ScenarioSample>,
    /// Mean of `analytic - oracle` over the run, per circle count.
    pub delta_e: Vec<f64>,
    pub max_oracle_std_error: f64,
    pub init_seconds: Vec<f64>,
    /// Mean wall time of one analytic evaluation, per circle count.
    pub analytic_eval_seconds: Vec<f64>,
    pub oracle_eval_seconds: f64,
}

impl ErrorReport {
    fn column(&self, n_circles: usize) -> Option<usize> {
        self.circle_counts.iter().position(|&n| n == n_circles)
    }

    pub fn analytic_series(&self, n_circles: usize) -> Option<Vec<f64>> {
        let c = self.column(n_circles)?;
        Some(self.samples.iter().map(|s| s.analytic[c]).collect())
    }

    pub fn oracle_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.oracle.estimate).collect()
    }

    pub fn delta_e_for(&self, n_circles: usize) -> Option<f64> {
        self.column(n_circles).map(|c| self.delta_e[c])
    }

    /// Largest pointwise excess of the `a`-circle estimate over the `b`-circle one.
    pub fn peak_gap(&self, a: usize, b: usize) -> Option<f64> {
        let (ca, cb) = (self.column(a)?, self.column(b)?);
        Some(self.samples.iter().map(|s| s.analytic[ca] - s.analytic[cb]).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t", "distance", "mu_x", "mu_y", "mu_theta", "sigma_x", "sigma_y", "sigma_theta"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        cols.extend(self.circle_counts.iter().map(|n| format!("poc_{n}")));
        cols.extend(["oracle".into(), "oracle_std_error".into()]);
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for s in &self.samples {
            let mut fields = vec![s.time, s.distance];
            fields.extend(s.belief.mu);
            fields.extend(s.belief.sigma);
            fields.extend(&s.analytic);
            fields.extend([s.oracle.estimate, s.oracle.std_error]);
            out.push_str(&fields.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Runs `spec`, comparing the estimator for every circle count (both
/// vehicles get the same count) with the rectangle oracle.
pub fn run_poc_scenario(spec: &ScenarioSpec, circle_counts: &[usize], oracle_samples: u64, seed: u64) -> Result<ErrorReport> {
    spec.validate()?;
    check_circle_counts(circle_counts)?;
    if oracle_samples == 0 {
        return Err(Error::param("oracle_samples", "must be at least 1"));
    }
    let states: Vec<_> = (0..spec.steps).map(|k| spec.belief_at(k)).collect();
    let min_sigma = states.iter().map(|(_, b)| b.sigma[0].min(b.sigma[1])).fold(f64::INFINITY, f64::min);
    let trunc = HeadingTruncation::default();

    let mut init_seconds = Vec::with_capacity(circle_counts.len());
    let estimators = circle_counts
        .iter()
        .map(|&n| {
            let t = Instant::now();
            let est = AdaptivePocEstimator::new(&spec.ego_footprint, &spec.obj_footprint, n, n, min_sigma);
            init_seconds.push(t.elapsed().as_secs_f64());
            est
        })
        .collect::<Result<Vec<_>>>()?;

    let mut analytic_time = vec![0.0; circle_counts.len()];
    let mut oracle_time = 0.0;
    let mut sampler = SeededSampler::new(seed);
    let samples: Vec<ScenarioSample> = states
        .iter()
        .enumerate()
        .map(|(k, (d, belief))| {
            let analytic = estimators
                .iter()
                .zip(analytic_time.iter_mut())
                .map(|(est, time)| {
                    let t = Instant::now();
                    let p = est.estimate(belief, trunc);
                    *time += t.elapsed().as_secs_f64();
                    p
                })
                .collect();
            let t = Instant::now();
            let oracle = mcs_poc(&spec.ego_footprint, &spec.obj_footprint, belief, oracle_samples, &mut sampler);
            oracle_time += t.elapsed().as_secs_f64();
            ScenarioSample { step: k, time: k as f64 * spec.sample_time, distance: *d, belief: *belief, analytic, oracle }
        })
        .collect();

    let t_count = samples.len() as f64;
    let delta_e =
        (0..circle_counts.len()).map(|c| samples.iter().map(|s| s.analytic[c] - s.oracle.estimate).sum::<f64>() / t_count).collect();
    let max_oracle_std_error = samples.iter().map(|s| s.oracle.std_error).fold(0.0, f64::max);
    Ok(ErrorReport {
        scenario: spec.name.clone(),
        sample_time: spec.sample_time,
        steps: spec.steps,
        circle_counts: circle_counts.to_vec(),
        oracle_samples,
        seed,
        samples,
        delta_e,
        max_oracle_std_error,
        init_seconds,
        analytic_eval_seconds: analytic_time.iter().map(|t| t / t_count).collect(),
        oracle_eval_seconds: oracle_time / t_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub footprint: RectangleFootprint,
    pub circle_counts: Vec<usize>,
    pub grid_samples: usize,
    pub mcs_samples: Vec<u64>,
    /// Timed evaluations per row.
    pub evaluations: usize,
    /// The reported time is the median over this many batch means.
    pub batches: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            footprint: RectangleFootprint::mid_size_car(),
            circle_counts: (1..=6).collect(),
            grid_samples: DEFAULT_GRID_SAMPLES,
            mcs_samples: vec![100, 1_000, 10_000, 100_000, 1_000_000],
            evaluations: 1_000,
            batches: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleTiming {
    pub n_circles: usize,
    pub init_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleTiming {
    pub samples: u64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub grid_samples: usize,
    pub evaluations: usize,
    pub batches: usize,
    pub analytic: Vec<CircleTiming>,
    pub mcs: Vec<SampleTiming>,
}

impl TimingTable {
    pub const CSV_HEADER: &'static str = "method,count,init_seconds,eval_seconds";

    pub fn analytic_for(&self, n_circles: usize) -> Option<&CircleTiming> {
        self.analytic.iter().find(|t| t.n_circles == n_circles)
    }

    pub fn mcs_for(&self, samples: u64) -> Option<&SampleTiming> {
        self.mcs.iter().find(|t| t.samples == samples)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for t in &self.analytic {
            out.push_str(&format!("analytic,{},{},{}\n", t.n_circles, t.init_seconds, t.eval_seconds));
        }
        for t in &self.mcs {
            out.push_str(&format!("mcs,{},,{}\n", t.samples, t.eval_seconds));
        }
        out
    }
}

/// Beliefs with uniformly drawn means and standard deviations: positions in
/// `[-6, 6]`, headings in `[-π, π)`, position spreads in `[0.1, 2]` and
/// heading spreads in `[0.05, 1]`.
pub fn random_beliefs(count: usize, seed: u64) -> Vec<GaussianBelief> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| GaussianBelief {
            mu: [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-PI..PI)],
            sigma: [rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), rng.random_range(0.05..1.0)],
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over batches of the mean time per call of `f` over `items`.
fn median_of_means<T>(items: &[T], batches: usize, mut f: impl FnMut(&T) -> f64) -> f64 {
    let size = items.len().div_ceil(batches).max(1);
    let means = items
        .chunks(size)
        .map(|chunk| {
            let t = Instant::now();
            for item in chunk {
                black_box(f(black_box(item)));
            }
            t.elapsed().as_secs_f64() / chunk.len() as f64
        })
        .collect();
    median(means)
}

/// Init and per-evaluation wall times of the estimator for each circle
/// count, and of the rectangle oracle for each sample count, on one shared
/// set of random beliefs.
pub fn runtime_benchmark(cfg: &BenchmarkConfig) -> Result<TimingTable> {
    check_circle_counts(&cfg.circle_counts)?;
    RectangleFootprint::new(cfg.footprint.length, cfg.footprint.width)?;
    if cfg.evaluations == 0 || cfg.batches == 0 {
        return Err(Error::param("evaluations", "evaluations and batches must be at least 1"));
    }
    if cfg.mcs_samples.contains(&0) {
        return Err(Error::param("mcs_samples", "entries must be at least 1"));
    }
    let beliefs = random_beliefs(cfg.evaluations, cfg.seed);
    let trunc = HeadingTruncation::default();
    let fp = cfg.footprint;
    let analytic = cfg
        .circle_counts
        .iter()
        .map(|&n| {
            let inits = (0..cfg.batches)
                .map(|_| {
                    let t = Instant::now();
                    let est = PocEstimator::new(&fp, &fp, n, n, cfg.grid_samples);
                    let elapsed = t.elapsed().as_secs_f64();
                    est.map(|e| (elapsed, e))
                })
                .collect::<Result<Vec<_>>>()?;
            let est = &inits[0].1;
            let eval_seconds = median_of_means(&beliefs, cfg.batches, |b| est.estimate(b, trunc));
            Ok(CircleTiming { n_circles: n, init_seconds: median(inits.iter().map(|(t, _)| *t).collect()), eval_seconds })
        })
        .collect::<Result<_>>()?;
    let mut sampler = SeededSampler::new(cfg.seed);
    let mcs = cfg
        .mcs_samples
        .iter()
        .map(|&samples| SampleTiming {
            samples,
            eval_seconds: median_of_means(&beliefs, cfg.batches, |b| mcs_poc(&fp, &fp, b, samples, &mut sampler).estimate),
        })
        .collect();
    Ok(TimingTable { grid_samples: cfg.grid_samples, evaluations: cfg.evaluations, batches: cfg.batches, analytic, mcs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyLevel {
    pub name: String,
    pub sigma: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyConfig {
    pub ego: Configuration,
    pub object: Configuration,
    pub footprint: RectangleFootprint,
    pub levels: Vec<UncertaintyLevel>,
    pub circle_counts: Vec<usize>,
    pub mcs_samples: Vec<u64>,
    /// Repeated oracle estimates per sample count.
    pub repetitions: usize,
    /// Sample count of the single reference estimate; 0 skips it.
    pub reference_samples: u64,
    pub seed: u64,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        let level = |name: &str, s: f64| UncertaintyLevel { name: name.into(), sigma: [s; 3] };
        Self {
            ego: Configuration::new(0.0, 0.0, 0.0),
            object: Configuration::new(2.5, 2.5, 0.0),
            footprint: RectangleFootprint::mid_size_car(),
            levels: vec![level("low", 0.5), level("moderate", 1.5), level("high", 2.5)],
            circle_counts: vec![1, 2, 3, 4],
            mcs_samples: vec![1_000, 10_000, 100_000],
            repetitions: 10_000,
            reference_samples: 1_000_000,
            seed: 0,
        }
    }
}

/// Spread of repeated oracle estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsSpread {
    pub samples: u64,
    pub mean: f64,
    pub std_dev: f64,
}

impl McsSpread {
    pub fn lower(&self) -> f64 {
        self.mean - 2.0 * self.std_dev
    }

    pub fn upper(&self) -> f64 {
        self.mean + 2.0 * self.std_dev
    }

    /// Width of the `±2σ` band.
    pub fn band(&self) -> f64 {
        4.0 * self.std_dev
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub level: String,
    pub sigma: [f64; 3],
    /// One estimate per circle count of the table.
    pub analytic: Vec<f64>,
    pub mcs: Vec<McsSpread>,
    pub reference: Option<McsResult>,
}

impl AccuracyRow {
    pub fn spread_for(&self, samples: u64) -> Option<&McsSpread> {
        self.mcs.iter().find(|s| s.samples == samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub circle_counts: Vec<usize>,
    pub repetitions: usize,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub const CSV_HEADER: &'static str = "level,sigma,method,count,value,std_dev";

    pub fn row(&self, level: &str) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.level == level)
    }

    pub fn analytic(&self, level: &str, n_circles: usize) -> Option<f64> {
        let c = self.circle_counts.iter().position(|&n| n == n_circles)?;
        self.row(level).map(|r| r.analytic[c])
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let s = r.sigma[0];
            for (n, p) in self.circle_counts.iter().zip(&r.analytic) {
                out.push_str(&format!("{},{s},analytic,{n},{p},\n", r.level));
            }
            for m in &r.mcs {
                out.push_str(&format!("{},{s},mcs,{},{},{}\n", r.level, m.samples, m.mean, m.std_dev));
            }
            if let Some(m) = &r.reference {
                out.push_str(&format!("{},{s},reference,{},{},{}\n", r.level, m.n_samples, m.estimate, m.std_error));
            }
        }
        out
    }
}

/// Estimator values and oracle dispersion at one fixed constellation under
/// several uncertainty levels.
pub fn accuracy_study(cfg: &AccuracyConfig) -> Result<AccuracyTable> {
    check_circle_counts(&cfg.circle_counts)?;
    RectangleFootprint::new(cfg.footprint.length, cfg.footprint.width)?;
    if cfg.levels.is_empty() {
        return Err(Error::param("levels", "must not be empty"));
    }
    if cfg.repetitions < 2 {
        return Err(Error::param("repetitions", "must be at least 2"));
    }
    if cfg.mcs_samples.contains(&0) {
        return Err(Error::param("mcs_samples", "entries must be at least 1"));
    }
    let rel = cfg.ego.relative(&cfg.object);
    let beliefs = cfg.levels.iter().map(|l| GaussianBelief::new([rel.x, rel.y, rel.theta], l.sigma)).collect::<Result<Vec<_>>>()?;
    let min_sigma = beliefs.iter().map(|b| b.sigma[0].min(b.sigma[1])).fold(f64::INFINITY, f64::min);
    let fp = cfg.footprint;
    let estimators = cfg.circle_counts.iter().map(|&n| AdaptivePocEstimator::new(&fp, &fp, n, n, min_sigma)).collect::<Result<Vec<_>>>()?;
    let trunc = HeadingTruncation::default();
    let mut sampler = SeededSampler::new(cfg.seed);
    let rows = cfg
        .levels
        .iter()
        .zip(&beliefs)
        .map(|(level, belief)| {
            let mcs = cfg
                .mcs_samples
                .iter()
                .map(|&samples| {
                    let runs: Vec<f64> = (0..cfg.repetitions).map(|_| mcs_poc(&fp, &fp, belief, samples, &mut sampler).estimate).collect();
                    let n = runs.len() as f64;
                    let mean = runs.iter().sum::<f64>() / n;
                    let var = runs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    McsSpread { samples, mean, std_dev: var.sqrt() }
                })
                .collect();
            let reference = (cfg.reference_samples > 0).then(|| mcs_poc(&fp, &fp, belief, cfg.reference_samples, &mut sampler));
            AccuracyRow {
                level: level.name.clone(),
                sigma: level.sigma,
                analytic: estimators.iter().map(|e| e.estimate(belief, trunc)).collect(),
                mcs,
                reference,
            }
        })
        .collect();
    Ok(AccuracyTable { circle_counts: cfg.circle_counts.clone(), repetitions: cfg.repetitions, rows })
}

/// Object uncertainty presets of the overtaking experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OvertakingLevel {
    Low,
    Moderate,
    High,
}

impl OvertakingLevel {
    pub const ALL: [Self; 3] = [Self::Low, Self::Moderate, Self::High];

    pub fn name(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Moderate => "moderate",
            Self::High => "high",
        }
    }

    pub fn sigma0(self) -> [f64; 3] {
        match self {
            Self::Low | Self::Moderate => [0.1; 3],
            Self::High => [0.5; 3],
        }
    }

    pub fn growth(self) -> [f64; 3] {
        match self {
            Self::Low => [0.01; 3],
            Self::Moderate => [0.3; 3],
            Self::High => [0.5; 3],
        }
    }
}

/// Straight reference line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub start: [f64; 2],
    pub heading: f64,
    pub length: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PocBackend {
    Analytic,
    Mcs,
}

/// Grid resolution of the planner's estimator ladder, relative to the
/// smallest position standard deviation.
pub const PLANNER_RESOLUTION: f64 = 1.0;

/// Receding-horizon overtaking of a slower vehicle on a straight road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvertakingSpec {
    pub name: String,
    pub footprint: RectangleFootprint,
    pub circles: usize,
    pub ego_initial: Configuration,
    pub path: PathSpec,
    pub v_ref: f64,
    pub object: ConstantMotion,
    pub horizon: usize,
    pub sample_time: f64,
    pub weights: [f64; 4],
    pub poc_tolerance: f64,
    pub bounds: InputBounds,
    pub sigma0: [f64; 3],
    pub growth: [f64; 3],
    pub steps: usize,
    pub max_iterations: usize,
    pub mcs_samples: u64,
    pub seed: u64,
}

impl OvertakingSpec {
    /// The overtaking experiment at `level`, run for 50 steps (10 s), long
    /// enough for the ego to pass and return to its lane.
    pub fn new(level: OvertakingLevel) -> Self {
        Self {
            name: format!("overtaking_{}", level.name()),
            footprint: RectangleFootprint::mid_size_car(),
            circles: 3,
            ego_initial: Configuration::new(0.0, 10.0, 0.0),
            path: PathSpec { start: [-10.0, 10.0], heading: 0.0, length: 300.0, spacing: 0.5 },
            v_ref: 6.0,
            object: ConstantMotion { initial: Configuration::new(20.0, 10.0, 0.0), v: 2.0, omega: 0.0 },
            horizon: 10,
            sample_time: 0.2,
            weights: [1.0, 1.0, 10.0, 10.0],
            poc_tolerance: 0.2,
            bounds: InputBounds::default(),
            sigma0: level.sigma0(),
            growth: level.growth(),
            steps: 50,
            max_iterations: 250,
            mcs_samples: 1_000,
            seed: 0,
        }
    }

    pub fn with_level(&self, level: OvertakingLevel) -> Self {
        Self { name: format!("overtaking_{}", level.name()), sigma0: level.sigma0(), growth: level.growth(), ..self.clone() }
    }

    pub fn smpc_config(&self) -> SmpcConfig {
        SmpcConfig {
            horizon: self.horizon,
            sample_time: self.sample_time,
            weights: self.weights,
            poc_tolerance: self.poc_tolerance,
            bounds: self.bounds,
            sigma0: self.sigma0,
            growth: self.growth,
            truncation: HeadingTruncation::default(),
            max_iterations: self.max_iterations,
        }
    }

    pub fn reference_path(&self) -> Result<ReferencePath> {
        let p = &self.path;
        ReferencePath::straight(p.start, p.heading, p.length, p.spacing, self.sample_time, self.v_ref)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::param("name", "must not be empty"));
        }
        RectangleFootprint::new(self.footprint.length, self.footprint.width)?;
        if self.circles == 0 {
            return Err(Error::ZeroCircles);
        }
        if !self.ego_initial.is_finite() {
            return Err(Error::param("ego_initial", "must be finite"));
        }
        self.object.validate()?;
        self.smpc_config().validate()?;
        self.reference_path()?;
        if self.steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if self.mcs_samples == 0 {
            return Err(Error::param("mcs_samples", "must be at least 1"));
        }
        Ok(())
    }

    /// Estimator ladder resolving every belief the planner can meet.
    pub fn estimator(&self) -> Result<AdaptivePocEstimator> {
        let min_sigma = self.sigma0[0].min(self.sigma0[1]);
        AdaptivePocEstimator::with_resolution(&self.footprint, &self.footprint, self.circles, self.circles, min_sigma, PLANNER_RESOLUTION)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

impl Default for OvertakingSpec {
    fn default() -> Self {
        Self::new(OvertakingLevel::Moderate)
    }
}

/// One closed-loop run. The analytic backend uses `estimator` when given,
/// which must match the spec's footprint and circle count.
pub fn run_overtaking(spec: &OvertakingSpec, backend: PocBackend, estimator: Option<&AdaptivePocEstimator>) -> Result<RunLog> {
    spec.validate()?;
    let path = spec.reference_path()?;
    let cfg = spec.smpc_config();
    match backend {
        PocBackend::Analytic => {
            let owned;
            let estimator = match estimator {
                Some(e) => e,
                None => {
                    owned = spec.estimator()?;
                    &owned
                }
            };
            let mut model = AnalyticPoc { estimator, truncation: cfg.truncation };
            receding_horizon_run(&spec.ego_initial, &path, &spec.object, &mut model, &cfg, spec.steps)
        }
        PocBackend::Mcs => {
            let mut model = McsPoc::new(spec.footprint, spec.footprint, spec.mcs_samples, spec.seed);
            receding_horizon_run(&spec.ego_initial, &path, &spec.object, &mut model, &cfg, spec.steps)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    pub level: OvertakingLevel,
    pub log: RunLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub log: RunLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvertakingComparison {
    pub analytic: Vec<LevelRun>,
    pub mcs: Vec<SeedRun>,
}

/// Analytic runs of `base` at every uncertainty level, then sampling-backed
/// runs of `base` itself for each seed.
pub fn overtaking_comparison(base: &OvertakingSpec, mcs_seeds: &[u64]) -> Result<OvertakingComparison> {
    base.validate()?;
    let mut analytic = Vec::with_capacity(OvertakingLevel::ALL.len());
    for level in OvertakingLevel::ALL {
        let spec = base.with_level(level);
        let est = spec.estimator()?;
        analytic.push(LevelRun { level, log: run_overtaking(&spec, PocBackend::Analytic, Some(&est))? });
    }
    let mcs = mcs_seeds
        .iter()
        .map(|&seed| Ok(SeedRun { seed, log: run_overtaking(&OvertakingSpec { seed, ..base.clone() }, PocBackend::Mcs, None)? }))
        .collect::<Result<_>>()?;
    Ok(OvertakingComparison { analytic, mcs })
}

/// Largest distance between ego positions at equal steps.
pub fn max_pointwise_gap(a: &RunLog, b: &RunLog) -> f64 {
    a.records.iter().zip(&b.records).map(|(ra, rb)| ra.ego.distance(&rb.ego)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_examples() {
        let m = LogisticUncertainty::default();
        assert_eq!(logistic_sigma(1.0, &m), [0.5; 3]);
        assert_eq!(logistic_sigma(f64::INFINITY, &m), [1.0; 3]);
        for s in logistic_sigma(3.0, &m) {
            assert!((s - 0.880_797_077_977_882_3).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_sigma_examples() {
        assert_eq!(horizon_sigma([0.1; 3], [0.3; 3], 0), [0.1; 3]);
        for s in horizon_sigma([0.1; 3], [0.3; 3], 10) {
            assert!((s - 3.1).abs() < 1e-12);
        }
        assert_eq!(horizon_sigma([0.4; 3], [0.0; 3], 7), [0.4; 3]);
    }

    #[test]
    fn straight_motion_is_linear() {
        let spec = ScenarioSpec::oncoming_pass();
        let o = spec.object_at(20);
        assert!((o.x - 6.0).abs() < 1e-12 && (o.y - 3.5).abs() < 1e-12 && o.theta == PI);
        assert_eq!(spec.ego_at(20), Configuration::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn circular_motion_matches_small_steps() {
        let m = ConstantMotion { initial: Configuration::new(1.0, -2.0, 0.3), v: 2.0, omega: 0.5 };
        let mut z = m.initial;
        let n = 100_000;
        for _ in 0..n {
            z = crate::smpc::unicycle_step(&z, &m.input(), 2.0 / n as f64);
        }
        let exact = m.at(2.0);
        assert!(z.distance(&exact) < 1e-4 && (z.theta - exact.theta).abs() < 1e-12);
    }

    #[test]
    fn scenario_ends_apart() {
        use crate::geometry::{cover_rectangle, max_collision_distance};
        let fp = RectangleFootprint::mid_size_car();
        let rho_bar = (1..=6)
            .map(|n| {
                let c = cover_rectangle(&fp, n).unwrap();
                max_collision_distance(&c, &c)
            })
            .fold(0.0, f64::max);
        for spec in ScenarioSpec::built_ins() {
            let (d, _) = spec.belief_at(spec.steps - 1);
            assert!(d > rho_bar + 6.0 * spec.uncertainty.sigma_max[0], "{} ends at {d}", spec.name);
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
