use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dgsp::base_change::{pullback_filter_via_fibers, pullback_kernel_filter, BaseSpace};
use dgsp::ensemble::{compile, DistributionSpec, OperatorEnsemble};
use dgsp::error::{Error, Result};
use dgsp::experiment::{self, ExperimentConfig};
use dgsp::filters::{band_pass, convolution_matrix, BandSpec, FilterKernel};
use dgsp::io::{self, SignalTable};
use dgsp::learning::{
    empirical_risk, learned_distribution, mh_sample, DetectorConfig, GibbsConfig, LossSpec, MhConfig, Proposal,
    TrainingSet,
};
use dgsp::operator::{knn_graph, laplacian_from_edges, KnnWeights, Signal, SymOperator};
use dgsp::sampling::{analyze, plan, reconstruct, Cut};
use dgsp::synth::{self, SignalModel};
use dgsp::transform::{forward, inverse, SpectralCoefficients};

#[derive(Parser)]
#[command(name = "dgsp", version, about = "Signal processing over distributions of graph operators")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// JSON config for `learn` and `experiment`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distributional Fourier coefficients of one signal.
    Transform {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        /// Row of the signals file to transform.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Apply a convolution filter to signals, or invert filtered coefficients.
    Filter {
        #[arg(long)]
        spec: PathBuf,
        /// `allpass`, `lambda`, `lambda:<p>`, `band:<m>` or a kernel JSON file.
        #[arg(long)]
        kernel: String,
        #[arg(long, conflicts_with = "coefficients", required_unless_present = "coefficients")]
        signal: Option<PathBuf>,
        /// Coefficients CSV as written by `transform`.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        /// Also write the filter matrix.
        #[arg(long)]
        matrix: bool,
    },
    /// Band-pass filter matrix for the bottom band and its spectrum.
    Bandpass {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        bottom: usize,
    },
    /// Sampling plan, and reconstruction when a signal or samples are given.
    Sample(SampleArgs),
    /// Both pullback filters of a kernel along a base map.
    Basechange {
        /// Distribution on the source base space Y.
        #[arg(long)]
        spec_y: PathBuf,
        /// Distribution whose fibers form the target base space X.
        #[arg(long)]
        spec_x: PathBuf,
        /// Base map JSON.
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        kernel: String,
    },
    /// Learn a distribution over candidate operators (needs `--config`).
    Learn,
    /// Run an end-to-end pipeline.
    Experiment {
        #[arg(long, value_enum)]
        pipeline: Option<Pipeline>,
    },
    /// Generate a synthetic graph and signals.
    Synth(SynthArgs),
    /// Spectral magnitude heatmap; the bundled scenarios without arguments.
    Spectra {
        #[arg(long, requires = "signal")]
        spec: Option<PathBuf>,
        #[arg(long, requires = "spec")]
        signal: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Pipeline {
    Sampling,
    Anomaly,
    Spectra,
    StretchDemo,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Bottom band of the band-pass filter.
    #[arg(long)]
    bottom: usize,
    #[arg(long, conflicts_with = "threshold", required_unless_present = "threshold")]
    budget: Option<usize>,
    /// Eigenvalue cut instead of a budget.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    signal: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Samples CSV (`vertex,value`) to reconstruct from.
    #[arg(long, conflicts_with = "signal")]
    samples: Option<PathBuf>,
    /// Bandlimit level for the certificate; defaults to the signal's residual.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// `rows,cols` grid.
    #[arg(long, value_parser = pair::<usize, usize>, conflicts_with = "geometric")]
    lattice: Option<(usize, usize)>,
    /// `n,radius` random geometric graph.
    #[arg(long, value_parser = pair::<usize, f64>)]
    geometric: Option<(usize, f64)>,
    /// Bottom band of bandlimited signals; white noise when absent.
    #[arg(long)]
    band: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long, default_value_t = 10)]
    count: usize,
}

fn pair<A: std::str::FromStr, B: std::str::FromStr>(s: &str) -> std::result::Result<(A, B), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated values, got {s:?}"))?;
    Ok((
        a.trim().parse().map_err(|_| format!("bad value {a:?}"))?,
        b.trim().parse().map_err(|_| format!("bad value {b:?}"))?,
    ))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = std::env::var("DGSP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not cap threads: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dir_of(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_ensemble(path: &Path) -> Result<(DistributionSpec, OperatorEnsemble)> {
    let spec = io::read_distribution_spec(path)?;
    let ens = compile(&spec)?;
    Ok((spec, ens))
}

fn load_signal(path: &Path, index: usize) -> Result<(SignalTable, Signal)> {
    let table = io::read_signals(path)?;
    let f = table
        .signals
        .get(index)
        .cloned()
        .ok_or_else(|| Error::Invalid(format!("{} has no signal row {index}", path.display())))?;
    Ok((table, f))
}

fn parse_kernel(arg: &str) -> Result<FilterKernel> {
    let bad = || Error::Invalid(format!("unknown kernel {arg:?}"));
    match arg.split_once(':') {
        _ if arg == "allpass" => Ok(FilterKernel::AllPass),
        _ if arg == "lambda" => Ok(FilterKernel::lambda()),
        Some(("lambda", p)) => Ok(FilterKernel::Lambda {
            power: p.parse().map_err(|_| bad())?,
        }),
        Some(("band", m)) => Ok(FilterKernel::Band(BandSpec::Bottom(m.parse().map_err(|_| bad())?))),
        _ if arg.ends_with(".json") => io::read_kernel(Path::new(arg)),
        _ => Err(bad()),
    }
}

fn one_signal_table(labels: Vec<String>, f: Signal) -> SignalTable {
    SignalTable {
        labels,
        signals: vec![f],
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    match &cli.command {
        Command::Transform { spec, signal, index } => {
            let (_, ens) = load_ensemble(spec)?;
            let (_, f) = load_signal(signal, *index)?;
            let c = forward(&f, &ens)?;
            io::write_atomic(&out.join("coefficients.csv"), io::format_coefficients_csv(&c, false).as_bytes())
        }
        Command::Filter {
            spec,
            kernel,
            signal,
            coefficients,
            matrix,
        } => {
            let (_, ens) = load_ensemble(spec)?;
            let kernel = parse_kernel(kernel)?;
            if let Some(path) = coefficients {
                let table = io::parse_coefficients_csv(&io::read_text(path)?, &path.display().to_string())?;
                let c = SpectralCoefficients::new(table, &ens)?.multiply(&kernel.table(&ens)?)?;
                let f = inverse(&c)?;
                let labels = (0..f.len()).map(|i| i.to_string()).collect();
                io::write_signals(&out.join("signal.csv"), &one_signal_table(labels, f))?;
            }
            let filter = convolution_matrix(&kernel, &ens)?;
            if let Some(path) = signal {
                let table = io::read_signals(path)?;
                let filtered = table.signals.iter().map(|f| filter.apply(f)).collect::<Result<_>>()?;
                io::write_signals(
                    &out.join("filtered.csv"),
                    &SignalTable {
                        labels: table.labels,
                        signals: filtered,
                    },
                )?;
            }
            if *matrix {
                io::write_matrix(&out.join("filter.csv"), &filter.matrix)?;
            }
            Ok(())
        }
        Command::Bandpass { spec, bottom } => {
            let (_, ens) = load_ensemble(spec)?;
            let b = band_pass(&BandSpec::Bottom(*bottom), &ens)?;
            let s = analyze(&b)?;
            io::write_matrix(&out.join("bandpass.csv"), &b.matrix)?;
            let mut text = String::from("index,eigenvalue\n");
            for (i, l) in s.eigenvalues.iter().enumerate() {
                text.push_str(&format!("{i},{}\n", io::fmt_real(*l)));
            }
            io::write_atomic(&out.join("bandpass_spectrum.csv"), text.as_bytes())
        }
        Command::Sample(a) => cmd_sample(a, out),
        Command::Basechange {
            spec_y,
            spec_x,
            map,
            kernel,
        } => {
            let (_, y_ens) = load_ensemble(spec_y)?;
            let (x_spec, x_ens) = load_ensemble(spec_x)?;
            let x_space = match x_spec {
                DistributionSpec::IntervalFamily(f) => BaseSpace::Family(f),
                _ => BaseSpace::from_ensemble(&x_ens),
            };
            let h = io::read_base_map(map)?;
            let kernel = parse_kernel(kernel)?;
            let a = pullback_filter_via_fibers(&kernel, &h, &y_ens, &x_space)?;
            let b = pullback_kernel_filter(&kernel, &h, &y_ens, &x_space)?;
            io::write_matrix(&out.join("pullback_fibers.csv"), &a)?;
            io::write_matrix(&out.join("pullback_kernel.csv"), &b)
        }
        Command::Learn => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::Invalid("learn needs --config".into()))?;
            let cfg: LearnConfig = io::parse_json_file(path)?;
            cmd_learn(&cfg, &dir_of(path), cli.seed, out)
        }
        Command::Experiment { pipeline } => {
            let (cfg, base) = match (&cli.config, pipeline) {
                (Some(path), None) => (io::parse_json_file::<ExperimentConfig>(path)?, dir_of(path)),
                (Some(_), Some(_)) => {
                    return Err(Error::Invalid("give either --pipeline or a config naming it, not both".into()))
                }
                (None, Some(p)) => (
                    match p {
                        Pipeline::Sampling => ExperimentConfig::Sampling(Default::default()),
                        Pipeline::Anomaly => ExperimentConfig::Anomaly(Default::default()),
                        Pipeline::Spectra => ExperimentConfig::Spectra(Default::default()),
                        Pipeline::StretchDemo => ExperimentConfig::StretchDemo,
                    },
                    PathBuf::from("."),
                ),
                (None, None) => return Err(Error::Invalid("experiment needs --pipeline or --config".into())),
            };
            for p in experiment::run(&cfg, cli.seed, out, &base)? {
                log::info!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Synth(a) => cmd_synth(a, cli.seed, out),
        Command::Spectra { spec, signal, index } => match (spec, signal) {
            (Some(spec), Some(signal)) => {
                let (_, ens) = load_ensemble(spec)?;
                let (_, f) = load_signal(signal, *index)?;
                let c = forward(&f, &ens)?;
                io::write_atomic(&out.join("spectra.csv"), io::format_coefficients_csv(&c, true).as_bytes())
            }
            _ => {
                experiment::run(&ExperimentConfig::Spectra(Default::default()), cli.seed, out, Path::new("."))?;
                Ok(())
            }
        },
    }
}

fn cmd_sample(a: &SampleArgs, out: &Path) -> Result<()> {
    let (_, ens) = load_ensemble(&a.spec)?;
    let b = band_pass(&BandSpec::Bottom(a.bottom), &ens)?;
    let cut = match (a.budget, a.threshold) {
        (Some(m), _) => Cut::Budget(m),
        (None, Some(t)) => Cut::Threshold(t),
        (None, None) => unreachable!("clap requires one of budget and threshold"),
    };
    let p = plan(&analyze(&b)?, cut)?;
    io::write_json(&out.join("plan.json"), &p)?;

    let (samples, eps) = match (&a.signal, &a.samples) {
        (Some(path), _) => {
            let (_, f) = load_signal(path, a.index)?;
            let eps = match a.epsilon {
                Some(e) => e,
                None => dgsp::filters::bandlimit_residual(&f, &b)?,
            };
            let s = p.sample(&f)?;
            io::write_atomic(&out.join("samples.csv"), io::format_samples_csv(&s).as_bytes())?;
            (s, eps)
        }
        (None, Some(path)) => (
            io::parse_samples_csv(&io::read_text(path)?, &path.display().to_string())?,
            a.epsilon.unwrap_or(0.0),
        ),
        (None, None) => return Ok(()),
    };
    let rep = reconstruct(&p, &samples, eps)?;
    let labels = (0..rep.f_prime.len()).map(|i| i.to_string()).collect();
    io::write_signals(&out.join("reconstruction.csv"), &one_signal_table(labels, rep.f_prime.clone()))?;
    io::write_json(&out.join("report.json"), &rep)
}

fn cmd_synth(a: &SynthArgs, seed: u64, out: &Path) -> Result<()> {
    let (edges, coords) = match (a.lattice, a.geometric) {
        (Some((r, c)), _) => synth::lattice(r, c)?,
        (None, Some((n, radius))) => synth::random_geometric(n, radius, synth::sub_seed(seed, 1))?,
        (None, None) => return Err(Error::Invalid("synth needs --lattice or --geometric".into())),
    };
    let n = coords.points.len();
    let l = laplacian_from_edges(&edges, n)?;
    let model = match a.band {
        Some(band) => SignalModel::Bandlimited {
            band,
            scale: a.scale,
            noise: a.noise,
            offset: a.offset,
        },
        None => SignalModel::Random { scale: a.scale },
    };
    let mut rng = synth::rng(synth::sub_seed(seed, 2));
    let signals = synth::signals(&model, &l, a.count, &mut rng)?;
    io::write_edges(&out.join("edges.csv"), &edges)?;
    io::write_coords(&out.join("coords.csv"), &coords)?;
    io::write_signals(
        &out.join("signals.csv"),
        &SignalTable {
            labels: coords.ids.clone(),
            signals,
        },
    )?;
    io::write_distribution_spec(&out.join("spec.json"), &DistributionSpec::Delta(Arc::new(l)))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CandidateSource {
    Specs(Vec<PathBuf>),
    Knn { knn: KnnSource },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnnSource {
    coords: PathBuf,
    k_min: usize,
    k_max: usize,
    /// Gaussian edge-weight bandwidth; unit weights when absent.
    #[serde(default)]
    sigma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LossConfig {
    HighFreq {
        #[serde(default)]
        bandwidth: Option<usize>,
    },
    Anomaly {
        bandwidth: usize,
        threshold: f64,
    },
}

fn default_steps() -> usize {
    20_000
}

fn default_thinning() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MhSettings {
    #[serde(default = "default_steps")]
    steps: usize,
    #[serde(default)]
    burn_in: Option<usize>,
    #[serde(default = "default_thinning")]
    thinning: usize,
    #[serde(default = "default_proposal")]
    proposal: Proposal,
}

fn default_proposal() -> Proposal {
    Proposal::UniformIndependent
}

impl Default for MhSettings {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            burn_in: None,
            thinning: 1,
            proposal: default_proposal(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LearnConfig {
    candidates: CandidateSource,
    /// Training signals CSV.
    signals: PathBuf,
    /// Per-signal labels (nonzero = abnormal) for the anomaly loss.
    #[serde(default)]
    labels: Option<Vec<f64>>,
    loss: LossConfig,
    gamma: f64,
    #[serde(default)]
    prior: Option<Vec<f64>>,
    #[serde(default)]
    mh: MhSettings,
    #[serde(default)]
    min_weight: f64,
}

#[derive(Serialize)]
struct LearnOutput {
    candidates: Vec<String>,
    risks: Vec<f64>,
    weights: Vec<f64>,
    acceptance_rate: f64,
}

fn cmd_learn(cfg: &LearnConfig, base: &Path, seed: u64, out: &Path) -> Result<()> {
    let candidates: Vec<Arc<SymOperator>> = match &cfg.candidates {
        CandidateSource::Specs(paths) => paths
            .iter()
            .map(|p| match io::read_distribution_spec(&base.join(p))? {
                DistributionSpec::Delta(op) => Ok(op),
                _ => Err(Error::Invalid(format!("candidate {} must be a delta spec", p.display()))),
            })
            .collect::<Result<_>>()?,
        CandidateSource::Knn { knn } => {
            let coords = io::read_coords(&base.join(&knn.coords))?;
            let w = match knn.sigma {
                Some(sigma) => KnnWeights::Gaussian { sigma },
                None => KnnWeights::Unit,
            };
            (knn.k_min..=knn.k_max)
                .map(|k| {
                    let l = laplacian_from_edges(&knn_graph(&coords.points, k, w)?, coords.points.len())?;
                    Ok(Arc::new(SymOperator::with_label(l.matrix().clone(), format!("knn{k}"))?))
                })
                .collect::<Result<_>>()?
        }
    };
    let table = io::read_signals(&base.join(&cfg.signals))?;
    let n = candidates.first().map_or(0, |c| c.dim());
    let loss = match cfg.loss {
        LossConfig::HighFreq { bandwidth } => LossSpec::HighFreqEnergy {
            bandwidth: bandwidth.unwrap_or_else(|| dgsp::learning::default_bandwidth(n)),
        },
        LossConfig::Anomaly { bandwidth, threshold } => LossSpec::Anomaly(DetectorConfig { bandwidth, threshold }),
    };
    let train = TrainingSet::new(table.signals, cfg.labels.clone())?;
    let risk = empirical_risk(&candidates, &train, &loss)?;
    let gibbs = GibbsConfig {
        gamma: cfg.gamma,
        prior: cfg.prior.clone(),
    };
    let mh = MhConfig {
        steps: cfg.mh.steps,
        burn_in: cfg.mh.burn_in.unwrap_or(cfg.mh.steps / 10),
        thinning: cfg.mh.thinning,
        proposal: cfg.mh.proposal,
        seed,
    };
    let r = mh_sample(|c| Ok(risk.risks[c]), candidates.len(), &gibbs, &mh)?;
    let (spec, _) = learned_distribution(&candidates, &r.weights, cfg.min_weight)?;
    io::write_json(
        &out.join("weights.json"),
        &LearnOutput {
            candidates: candidates.iter().map(|c| c.label().to_string()).collect(),
            risks: risk.risks.clone(),
            weights: r.weights,
            acceptance_rate: r.acceptance_rate,
        },
    )?;
    io::write_distribution_spec(&out.join("learned.json"), &spec)
}
