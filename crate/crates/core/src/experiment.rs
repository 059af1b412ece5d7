//! End-to-end pipelines: sampling recovery over learned k-NN candidate
//! families, anomaly detection, spectral heatmaps and the stretch demo.
//!
//! Every pipeline is a pure function of its config and seed; outputs are CSV
//! and JSON files written atomically into an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_change::stretch_consistency;
use crate::ensemble::{compile, DensitySpec, DistributionSpec, IntervalFamily, OperatorEnsemble, QuadratureRule};
use crate::error::{Error, Result};
use crate::filters::{band_pass, BandSpec};
use crate::io::{self, fmt_real, write_atomic};
use crate::learning::{
    empirical_risk, gibbs_exact, highfreq_loss, learned_distribution, mh_sample, GibbsConfig, LossSpec, MhConfig,
    TrainingSet,
};
use crate::operator::{knn_graph, laplacian_from_edges, KnnWeights, Signal, SymOperator};
use crate::sampling::{analyze, plan, reconstruct, Cut};
use crate::synth::{self, SignalModel};
use crate::transform::forward;

/// Real data in place of the synthetic fixture: coordinates CSV and a signals
/// CSV whose columns follow the coordinate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub coords: PathBuf,
    pub signals: PathBuf,
}

/// Vertex layout, candidate family and signal source shared by the sampling
/// and anomaly pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub rows: usize,
    pub cols: usize,
    pub jitter: f64,
    /// Bandwidth of the Gaussian edge weights of every k-NN candidate.
    pub sigma: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub signal: SignalModel,
    pub data: Option<DataFiles>,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 7,
            jitter: 0.3,
            sigma: 1.0,
            k_min: 2,
            k_max: 6,
            signal: SignalModel::Bandlimited {
                band: 6,
                scale: 5.0,
                noise: 0.05,
                offset: 0.0,
            },
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub gamma: f64,
    pub mh_steps: usize,
    /// Candidates below this posterior weight are dropped.
    pub min_weight: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            gamma: 20.0,
            mh_steps: 20_000,
            min_weight: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingExperimentConfig {
    pub fixture: FixtureConfig,
    pub learning: LearningConfig,
    pub train: usize,
    pub test: usize,
    /// High-frequency loss bandwidth used for learning.
    pub loss_band: usize,
    /// Bottom band defining the band-pass filter.
    pub band: usize,
    /// Number of sampled vertices.
    pub budget: usize,
}

impl Default for SamplingExperimentConfig {
    fn default() -> Self {
        Self {
            fixture: FixtureConfig::default(),
            learning: LearningConfig::default(),
            train: 30,
            test: 20,
            loss_band: 10,
            band: 10,
            budget: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyExperimentConfig {
    pub fixture: FixtureConfig,
    pub learning: LearningConfig,
    pub train: usize,
    pub test: usize,
    pub detector_band: usize,
    /// Per-candidate threshold: this quantile of the loss over normal
    /// training signals.
    pub threshold_quantile: f64,
    /// Single-vertex perturbation magnitude range `[lo, hi]`.
    pub perturbation: [f64; 2],
}

impl Default for AnomalyExperimentConfig {
    fn default() -> Self {
        Self {
            fixture: FixtureConfig {
                k_min: 2,
                k_max: 12,
                signal: SignalModel::Bandlimited {
                    band: 6,
                    scale: 8.0,
                    noise: 8.0,
                    offset: 50.0,
                },
                ..FixtureConfig::default()
            },
            learning: LearningConfig::default(),
            train: 60,
            test: 100,
            detector_band: 10,
            threshold_quantile: 0.95,
            perturbation: [40.0, 60.0],
        }
    }
}

struct Fixture {
    ks: Vec<usize>,
    candidates: Vec<Arc<SymOperator>>,
    signals: Vec<Signal>,
}

fn build_fixture(cfg: &FixtureConfig, count: usize, seed: u64, base: &Path) -> Result<Fixture> {
    if cfg.k_min == 0 || cfg.k_max < cfg.k_min {
        return Err(Error::invalid("candidate range needs 1 <= k_min <= k_max"));
    }
    let weights = KnnWeights::Gaussian { sigma: cfg.sigma };
    let (points, signals) = match &cfg.data {
        Some(d) => {
            let coords = io::read_coords(&base.join(&d.coords))?;
            let table = io::read_signals(&base.join(&d.signals))?;
            if table.signals.len() < count {
                return Err(Error::invalid(format!(
                    "data has {} signals, pipeline needs {count}",
                    table.signals.len()
                )));
            }
            if table.labels.len() != coords.points.len() {
                return Err(Error::dim("signal columns do not match coordinate rows"));
            }
            (coords.points, table.signals[..count].to_vec())
        }
        None => {
            let coords = synth::jittered_lattice_coords(cfg.rows, cfg.cols, cfg.jitter, synth::sub_seed(seed, 1))?;
            let n = coords.points.len();
            // The signals are smooth on the geometric lattice, which is not
            // itself a candidate.
            let (edges, _) = synth::lattice(cfg.rows, cfg.cols)?;
            let reweighted = crate::operator::EdgeList::new(
                edges
                    .edges
                    .iter()
                    .map(|e| {
                        let d2: f64 = coords.points[e.u]
                            .iter()
                            .zip(&coords.points[e.v])
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        crate::operator::Edge {
                            w: (-d2 / (cfg.sigma * cfg.sigma)).exp(),
                            ..*e
                        }
                    })
                    .collect(),
            );
            let truth = laplacian_from_edges(&reweighted, n)?;
            let mut rng = synth::rng(synth::sub_seed(seed, 2));
            let signals = synth::signals(&cfg.signal, &truth, count, &mut rng)?;
            (coords.points, signals)
        }
    };
    let n = points.len();
    if cfg.k_max >= n {
        return Err(Error::invalid(format!("k_max {} needs more than {n} vertices", cfg.k_max)));
    }
    let ks: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
    let candidates = ks
        .par_iter()
        .map(|&k| {
            let edges = knn_graph(&points, k, weights)?;
            let l = laplacian_from_edges(&edges, n)?;
            let l = SymOperator::with_label(l.matrix().clone(), format!("knn{k}"))?;
            l.eigen()?;
            Ok(Arc::new(l))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Fixture { ks, candidates, signals })
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnedWeights {
    pub candidates: Vec<String>,
    pub risks: Vec<f64>,
    pub exact: Vec<f64>,
    pub weights: Vec<f64>,
    pub acceptance_rate: f64,
}

fn learn(
    candidates: &[Arc<SymOperator>],
    names: Vec<String>,
    train: &TrainingSet,
    loss: &LossSpec,
    cfg: &LearningConfig,
    seed: u64,
) -> Result<LearnedWeights> {
    let risk = empirical_risk(candidates, train, loss)?;
    let gibbs = GibbsConfig::new(cfg.gamma);
    let exact = gibbs_exact(&risk.risks, &gibbs)?;
    let mh = MhConfig::new(cfg.mh_steps, seed);
    let r = mh_sample(|c| Ok(risk.risks[c]), candidates.len(), &gibbs, &mh)?;
    Ok(LearnedWeights {
        candidates: names,
        risks: risk.risks,
        exact,
        weights: r.weights,
        acceptance_rate: r.acceptance_rate,
    })
}

/// Recovery statistics of one ensemble over held-out signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryStats {
    pub mean_abs_error: f64,
    pub mean_rel_error: f64,
    pub sigma_j: f64,
    pub lambda_j: f64,
}

fn recovery(ens: &OperatorEnsemble, band: usize, budget: usize, test: &[Signal]) -> Result<RecoveryStats> {
    let b = band_pass(&BandSpec::Bottom(band), ens)?;
    let p = plan(&analyze(&b)?, Cut::Budget(budget))?;
    let mut abs = 0.0;
    let mut rel = 0.0;
    for f in test {
        let eps = crate::filters::bandlimit_residual(f, &b)?;
        let rep = reconstruct(&p, &p.sample(f)?, eps)?;
        let err = (rep.f_prime.values() - f.values()).norm();
        abs += err;
        rel += err / f.norm();
    }
    let k = test.len() as f64;
    Ok(RecoveryStats {
        mean_abs_error: abs / k,
        mean_rel_error: rel / k,
        sigma_j: p.sigma_j,
        lambda_j: p.lambda_j,
    })
}

#[derive(Debug, Clone)]
pub struct SamplingResult {
    pub columns: Vec<String>,
    pub weights: Vec<f64>,
    pub stats: Vec<RecoveryStats>,
    /// Column of the distributional filter (always last).
    pub distributional: RecoveryStats,
    /// Largest mean absolute error among the candidates kept after the cut.
    pub max_kept_error: f64,
    pub learned: LearnedWeights,
}

impl SamplingResult {
    pub fn table_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",B_Y\n");
        let mut row = |name: &str, vals: Vec<f64>, last: f64| {
            out.push_str(name);
            for v in vals {
                out.push(',');
                out.push_str(&fmt_real(v));
            }
            out.push(',');
            out.push_str(&fmt_real(last));
            out.push('\n');
        };
        let d = self.distributional;
        row("weight", self.weights.clone(), 1.0);
        row("mean_abs_error", self.stats.iter().map(|s| s.mean_abs_error).collect(), d.mean_abs_error);
        row("mean_rel_error", self.stats.iter().map(|s| s.mean_rel_error).collect(), d.mean_rel_error);
        row("sigma_j", self.stats.iter().map(|s| s.sigma_j).collect(), d.sigma_j);
        row("lambda_j", self.stats.iter().map(|s| s.lambda_j).collect(), d.lambda_j);
        out
    }
}

pub fn run_sampling(cfg: &SamplingExperimentConfig, seed: u64, base: &Path) -> Result<SamplingResult> {
    if cfg.train == 0 || cfg.test == 0 {
        return Err(Error::invalid("train and test counts must be positive"));
    }
    let fx = build_fixture(&cfg.fixture, cfg.train + cfg.test, seed, base)?;
    let n = fx.candidates[0].dim();
    if cfg.budget == 0 || cfg.budget > n {
        return Err(Error::invalid(format!("budget {} outside [1, {n}]", cfg.budget)));
    }
    let (train, test) = fx.signals.split_at(cfg.train);
    let names: Vec<String> = fx.ks.iter().map(|k| format!("k{k}")).collect();
    let learned = learn(
        &fx.candidates,
        names.clone(),
        &TrainingSet::new(train.to_vec(), None)?,
        &LossSpec::HighFreqEnergy { bandwidth: cfg.loss_band },
        &cfg.learning,
        synth::sub_seed(seed, 3),
    )?;

    let stats = fx
        .candidates
        .par_iter()
        .map(|x| recovery(&compile(&DistributionSpec::Delta(x.clone()))?, cfg.band, cfg.budget, test))
        .collect::<Result<Vec<_>>>()?;
    let (spec, kept) = learned_distribution(&fx.candidates, &learned.weights, cfg.learning.min_weight)?;
    let distributional = recovery(&compile(&spec)?, cfg.band, cfg.budget, test)?;
    let max_kept_error = kept.iter().map(|&c| stats[c].mean_abs_error).fold(0.0, f64::max);
    Ok(SamplingResult {
        columns: names,
        weights: learned.weights.clone(),
        stats,
        distributional,
        max_kept_error,
        learned,
    })
}

#[derive(Debug, Clone)]
pub struct AnomalyResult {
    pub weights: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Per candidate, in percent.
    pub detection: Vec<f64>,
    pub false_positive: Vec<f64>,
    pub distribution_detection: f64,
    pub distribution_false_positive: f64,
    pub learned: LearnedWeights,
}

impl AnomalyResult {
    pub fn table_csv(&self) -> String {
        let mut out = String::from("metric");
        for i in 0..self.weights.len() {
            out.push_str(&format!(",{i}"));
        }
        out.push_str(",distribution\n");
        let mut row = |name: &str, vals: &[f64], last: f64| {
            out.push_str(name);
            for v in vals {
                out.push(',');
                out.push_str(&fmt_real(*v));
            }
            out.push(',');
            out.push_str(&fmt_real(last));
            out.push('\n');
        };
        row("weight", &self.weights, 1.0);
        row("detection_rate", &self.detection, self.distribution_detection);
        row("false_positive_rate", &self.false_positive, self.distribution_false_positive);
        out
    }
}

fn quantile(mut xs: Vec<f64>, q: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

fn perturb(f: &Signal, rng: &mut impl Rng, lo: f64, hi: f64) -> Result<Signal> {
    let mut v = f.values().clone();
    let i = rng.random_range(0..v.len());
    v[i] += if hi > lo { rng.random_range(lo..=hi) } else { lo };
    Signal::from_vector(v)
}

pub fn run_anomaly(cfg: &AnomalyExperimentConfig, seed: u64, base: &Path) -> Result<AnomalyResult> {
    let [lo, hi] = cfg.perturbation;
    if !(lo <= hi) {
        return Err(Error::invalid("perturbation range needs lo <= hi"));
    }
    if cfg.train < 2 || cfg.test == 0 {
        return Err(Error::invalid("anomaly pipeline needs >= 2 training and >= 1 test signals"));
    }
    if !(0.0..=1.0).contains(&cfg.threshold_quantile) {
        return Err(Error::invalid("threshold quantile must lie in [0, 1]"));
    }
    let fx = build_fixture(&cfg.fixture, cfg.train + cfg.test, seed, base)?;
    let (train, test) = fx.signals.split_at(cfg.train);
    let b = cfg.detector_band;
    let loss_of = |x: &SymOperator, f: &Signal| highfreq_loss(x, f, b);

    // Calibrate on the first half of the training signals, learn on the
    // second half with every other signal perturbed.
    let (calib, learn_set) = train.split_at(cfg.train / 2);
    let thresholds = fx
        .candidates
        .par_iter()
        .map(|x| Ok(quantile(calib.iter().map(|f| loss_of(x, f)).collect::<Result<_>>()?, cfg.threshold_quantile)))
        .collect::<Result<Vec<f64>>>()?;
    let mut rng = synth::rng(synth::sub_seed(seed, 4));
    let mut learn_signals = Vec::with_capacity(learn_set.len());
    let mut labels = Vec::with_capacity(learn_set.len());
    for (s, f) in learn_set.iter().enumerate() {
        if s % 2 == 1 {
            learn_signals.push(perturb(f, &mut rng, lo, hi)?);
            labels.push(1.0);
        } else {
            learn_signals.push(f.clone());
            labels.push(0.0);
        }
    }
    let flags = |x: &SymOperator, theta: f64, fs: &[Signal]| -> Result<Vec<bool>> {
        fs.iter().map(|f| Ok(loss_of(x, f)? > theta)).collect()
    };
    let loss_table = fx
        .candidates
        .par_iter()
        .zip(&thresholds)
        .map(|(x, &t)| {
            Ok(flags(x, t, &learn_signals)?
                .iter()
                .zip(&labels)
                .map(|(&flag, &lab)| if flag == (lab != 0.0) { 0.0 } else { 1.0 })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let names: Vec<String> = (0..fx.candidates.len()).map(|i| i.to_string()).collect();
    let learned = learn(
        &fx.candidates,
        names,
        &TrainingSet::new(learn_signals, Some(labels))?,
        &LossSpec::Custom(loss_table),
        &cfg.learning,
        synth::sub_seed(seed, 5),
    )?;

    let perturbed = test
        .iter()
        .map(|f| perturb(f, &mut rng, lo, hi))
        .collect::<Result<Vec<_>>>()?;
    let per_candidate = fx
        .candidates
        .par_iter()
        .zip(&thresholds)
        .map(|(x, &t)| Ok((flags(x, t, &perturbed)?, flags(x, t, test)?)))
        .collect::<Result<Vec<(Vec<bool>, Vec<bool>)>>>()?;
    let rate = |fl: &[bool]| 100.0 * fl.iter().filter(|&&b| b).count() as f64 / fl.len() as f64;
    let vote = |pick: fn(&(Vec<bool>, Vec<bool>)) -> &Vec<bool>| -> Vec<bool> {
        (0..cfg.test)
            .map(|s| {
                let yes: f64 = per_candidate
                    .iter()
                    .zip(&learned.weights)
                    .filter(|(pc, _)| pick(pc)[s])
                    .map(|(_, w)| w)
                    .sum();
                yes >= 0.5
            })
            .collect()
    };
    Ok(AnomalyResult {
        weights: learned.weights.clone(),
        thresholds,
        detection: per_candidate.iter().map(|(p, _)| rate(p)).collect(),
        false_positive: per_candidate.iter().map(|(_, n)| rate(n)).collect(),
        distribution_detection: rate(&vote(|pc| &pc.0)),
        distribution_false_positive: rate(&vote(|pc| &pc.1)),
        learned,
    })
}

/// One heatmap scenario: signal model times density on an interval family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraScenario {
    pub name: String,
    pub signal: SignalModel,
    pub density: DensitySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraConfig {
    pub rows: usize,
    pub cols: usize,
    pub nodes: usize,
    pub scenarios: Vec<SpectraScenario>,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        let band = SignalModel::Bandlimited {
            band: 4,
            scale: 1.0,
            noise: 0.0,
            offset: 0.0,
        };
        let white = SignalModel::Random { scale: 1.0 };
        let gauss = DensitySpec::TruncatedGaussian { mean: 0.5, stddev: 0.15 };
        let sc = |name: &str, signal, density| SpectraScenario {
            name: name.into(),
            signal,
            density,
        };
        Self {
            rows: 5,
            cols: 6,
            nodes: 32,
            scenarios: vec![
                sc("bandlimited_uniform", band, DensitySpec::Uniform),
                sc("bandlimited_gaussian", band, gauss.clone()),
                sc("random_uniform", white, DensitySpec::Uniform),
                sc("random_gaussian", white, gauss),
            ],
        }
    }
}

/// Magnitude heatmaps `|fhat(x_q, i)|` on the family `t L1 + (1 - t) L2`,
/// with `L1` the lattice and `L2` a k=3 nearest-neighbour graph on the same
/// points. Bandlimited signals use the middle fiber's basis.
pub fn run_spectra(cfg: &SpectraConfig, seed: u64) -> Result<Vec<(String, String)>> {
    let (edges, coords) = synth::lattice(cfg.rows, cfg.cols)?;
    let n = coords.points.len();
    let l1 = Arc::new(laplacian_from_edges(&edges, n)?);
    let jittered = synth::jittered_lattice_coords(cfg.rows, cfg.cols, 0.3, synth::sub_seed(seed, 6))?;
    let l2 = Arc::new(laplacian_from_edges(&knn_graph(&jittered.points, 3, KnnWeights::Unit)?, n)?);
    let mut rng = synth::rng(synth::sub_seed(seed, 7));
    cfg.scenarios
        .iter()
        .map(|s| {
            let fam = IntervalFamily::new(l1.clone(), l2.clone(), s.density.clone(), QuadratureRule::midpoint(cfg.nodes))?;
            let mid = fam.fiber_at(0.5)?;
            let f = synth::signals(&s.signal, &mid, 1, &mut rng)?.remove(0);
            let ens = compile(&DistributionSpec::IntervalFamily(Arc::new(fam)))?;
            let c = forward(&f, &ens)?;
            Ok((s.name.clone(), io::format_coefficients_csv(&c, true)))
        })
        .collect()
}

/// Checks `H_{h(y)} = c(y) L_y` for the stretch map on a grid of `y` and
/// `eta`, on the family between a path and a star. Rows `eta,y,c,residual`.
pub fn run_stretch_demo(n: usize) -> Result<String> {
    if n < 3 {
        return Err(Error::invalid("stretch demo needs n >= 3"));
    }
    let path: Vec<_> = (0..n - 1)
        .map(|i| crate::operator::Edge { u: i, v: i + 1, w: 1.0 })
        .collect();
    let l1 = laplacian_from_edges(&crate::operator::EdgeList::new(path), n)?;
    let star: Vec<_> = (1..n).map(|i| crate::operator::Edge { u: 0, v: i, w: 0.5 }).collect();
    let l2 = laplacian_from_edges(&crate::operator::EdgeList::new(star), n)?;
    let mut out = String::from("eta,y,c,residual\n");
    for eta in [0.5, 2.0, 5.0] {
        for k in 0..=10 {
            let y = k as f64 / 10.0;
            let (c, r) = stretch_consistency(&l1, &l2, eta, y)?;
            out.push_str(&format!("{},{},{},{}\n", fmt_real(eta), fmt_real(y), fmt_real(c), fmt_real(r)));
        }
    }
    Ok(out)
}

/// Pipeline selector with its config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Sampling(SamplingExperimentConfig),
    Anomaly(AnomalyExperimentConfig),
    Spectra(SpectraConfig),
    StretchDemo,
}

/// Runs a pipeline and writes its outputs into `out`. Returns the written
/// file names. `base` resolves relative data paths in the config.
pub fn run(cfg: &ExperimentConfig, seed: u64, out: &Path, base: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = out.join(name);
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };
    match cfg {
        ExperimentConfig::Sampling(c) => {
            let r = run_sampling(c, seed, base)?;
            if r.distributional.mean_abs_error > r.max_kept_error {
                log::warn!(
                    "distributional error {} exceeds the largest kept single-candidate error {}",
                    r.distributional.mean_abs_error,
                    r.max_kept_error
                );
            }
            put("table1.csv", &r.table_csv())?;
            put("learned_weights.json", &json(&r.learned))?;
        }
        ExperimentConfig::Anomaly(c) => {
            let r = run_anomaly(c, seed, base)?;
            put("table2.csv", &r.table_csv())?;
            let mut extra = BTreeMap::new();
            extra.insert("thresholds", r.thresholds.clone());
            put("learned_weights.json", &json(&r.learned))?;
            put("thresholds.json", &json(&extra))?;
        }
        ExperimentConfig::Spectra(c) => {
            for (name, csv) in run_spectra(c, seed)? {
                put(&format!("spectra_{name}.csv"), &csv)?;
            }
        }
        ExperimentConfig::StretchDemo => put("stretch.csv", &run_stretch_demo(6)?)?,
    }
    Ok(written)
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("results serialize");
    s.push('\n');
    s
}
