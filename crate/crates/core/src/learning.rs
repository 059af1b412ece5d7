//! Learning a discrete distribution over candidate operators from training
//! signals: empirical risk, the Gibbs posterior `exp(-gamma r) mu_0`, and a
//! Metropolis-Hastings sampler for it.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::DistributionSpec;
use crate::error::{Error, Result};
use crate::operator::{Signal, SymOperator};

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub signals: Vec<Signal>,
    pub labels: Option<Vec<f64>>,
}

impl TrainingSet {
    pub fn new(signals: Vec<Signal>, labels: Option<Vec<f64>>) -> Result<Self> {
        if signals.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let n = signals[0].len();
        if signals.iter().any(|s| s.len() != n) {
            return Err(Error::dim("training signals differ in length"));
        }
        if let Some(l) = &labels {
            if l.len() != signals.len() {
                return Err(Error::dim(format!("{} labels for {} signals", l.len(), signals.len())));
            }
        }
        Ok(Self { signals, labels })
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }
}

/// Flags a signal as abnormal when its high-frequency energy fraction above
/// `bandwidth` exceeds `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub bandwidth: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub enum LossSpec {
    HighFreqEnergy { bandwidth: usize },
    Anomaly(DetectorConfig),
    /// Precomputed `candidates x signals` losses.
    Custom(Vec<Vec<f64>>),
}

/// Default bandwidth `ceil(n / 20)`.
pub fn default_bandwidth(n: usize) -> usize {
    n.div_ceil(20).max(1)
}

/// Fraction of `f`'s energy outside the lowest `b` frequencies of `x`:
/// `sqrt(sum_{i > b} fhat(i)^2) / ||f||`.
pub fn highfreq_loss(x: &SymOperator, f: &Signal, b: usize) -> Result<f64> {
    f.check_len(x.dim())?;
    let n = x.dim();
    if b == 0 || b > n {
        return Err(Error::invalid(format!("bandwidth {b} outside [1, {n}]")));
    }
    let norm = f.norm();
    if norm == 0.0 {
        return Err(Error::invalid("high-frequency loss of the zero signal is undefined"));
    }
    let fhat = x.eigen()?.eigenvectors.tr_mul(f.values());
    let high: f64 = fhat.iter().skip(b).map(|c| c * c).sum();
    Ok((high.sqrt() / norm).min(1.0))
}

pub fn detector_flags(x: &SymOperator, f: &Signal, detector: &DetectorConfig) -> Result<bool> {
    Ok(highfreq_loss(x, f, detector.bandwidth)? > detector.threshold)
}

/// 0 when the detector classifies `f` correctly, 1 otherwise.
pub fn anomaly_loss(x: &SymOperator, f: &Signal, is_abnormal: bool, detector: &DetectorConfig) -> Result<f64> {
    let flagged = detector_flags(x, f, detector)?;
    Ok(if flagged == is_abnormal { 0.0 } else { 1.0 })
}

#[derive(Debug, Clone)]
pub struct RiskTable {
    pub candidates: Vec<Arc<SymOperator>>,
    pub risks: Vec<f64>,
}

/// Mean loss of each candidate over the training signals.
pub fn empirical_risk(candidates: &[Arc<SymOperator>], train: &TrainingSet, loss: &LossSpec) -> Result<RiskTable> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate operators"));
    }
    if let LossSpec::Custom(table) = loss {
        if table.len() != candidates.len() || table.iter().any(|row| row.len() != train.len()) {
            return Err(Error::dim("custom loss table must be candidates x signals"));
        }
    }
    if let LossSpec::Anomaly(_) = loss {
        if train.labels.is_none() {
            return Err(Error::invalid("anomaly loss needs labelled training signals"));
        }
    }
    let k = train.len() as f64;
    let risks = candidates
        .par_iter()
        .enumerate()
        .map(|(c, x)| {
            let mut total = 0.0;
            for (s, f) in train.signals.iter().enumerate() {
                let l = match loss {
                    LossSpec::HighFreqEnergy { bandwidth } => highfreq_loss(x, f, *bandwidth),
                    LossSpec::Anomaly(det) => {
                        let abnormal = train.labels.as_ref().expect("checked above")[s] != 0.0;
                        anomaly_loss(x, f, abnormal, det)
                    }
                    LossSpec::Custom(table) => Ok(table[c][s]),
                }
                .map_err(|e| Error::Numerical(format!("loss of candidate {c} on signal {s}: {e}")))?;
                if !(l >= 0.0) || !l.is_finite() {
                    return Err(Error::Numerical(format!("loss of candidate {c} on signal {s} is {l}")));
                }
                total += l;
            }
            Ok(total / k)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RiskTable {
        candidates: candidates.to_vec(),
        risks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub gamma: f64,
    /// Defaults to uniform.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
}

impl GibbsConfig {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, prior: None }
    }

    fn prior_for(&self, k: usize) -> Result<Vec<f64>> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        match &self.prior {
            None => Ok(vec![1.0 / k as f64; k]),
            Some(p) => {
                if p.len() != k {
                    return Err(Error::dim(format!("prior has {} entries for {k} candidates", p.len())));
                }
                if p.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::invalid("prior weights must be positive"));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("prior sums to {s}, expected 1")));
                }
                Ok(p.clone())
            }
        }
    }
}

/// `w_c = exp(-gamma r_c) mu_0(c) / Z`, evaluated with a max shift.
pub fn gibbs_exact(risks: &[f64], cfg: &GibbsConfig) -> Result<Vec<f64>> {
    if risks.is_empty() {
        return Err(Error::invalid("no candidates"));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numerical("non-finite risk".into()));
    }
    let prior = cfg.prior_for(risks.len())?;
    let logw: Vec<f64> = risks
        .iter()
        .zip(&prior)
        .map(|(r, p)| -cfg.gamma * r + p.ln())
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Numerical("Gibbs weights underflow".into()));
    }
    Ok(unnorm.into_iter().map(|w| w / z).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    /// Uniform over all candidates, including the current one.
    UniformIndependent,
    /// Step by a uniform nonzero offset in `[-width, width]`, reflected at
    /// the ends of the candidate range.
    NeighborWalk { width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub proposal: Proposal,
    pub seed: u64,
}

impl MhConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            steps,
            burn_in: steps / 10,
            thinning: 1,
            proposal: Proposal::UniformIndependent,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::invalid("MH steps must exceed burn-in"));
        }
        if self.thinning == 0 {
            return Err(Error::invalid("MH thinning must be >= 1"));
        }
        if let Proposal::NeighborWalk { width } = self.proposal {
            if width == 0 {
                return Err(Error::invalid("neighbor walk width must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MhResult {
    /// Visit frequencies of the retained states.
    pub weights: Vec<f64>,
    pub acceptance_rate: f64,
    pub retained: usize,
}

fn reflect(i: i64, k: usize) -> usize {
    if k == 1 {
        return 0;
    }
    let period = 2 * (k as i64 - 1);
    let m = i.rem_euclid(period);
    if m >= k as i64 {
        (period - m) as usize
    } else {
        m as usize
    }
}

impl Proposal {
    fn draw(&self, current: usize, k: usize, rng: &mut impl Rng) -> usize {
        match *self {
            Proposal::UniformIndependent => rng.random_range(0..k),
            Proposal::NeighborWalk { width } => {
                let w = width as i64;
                let mut off = rng.random_range(-w..w);
                if off >= 0 {
                    off += 1;
                }
                reflect(current as i64 + off, k)
            }
        }
    }

    /// `q(to | from)`.
    fn prob(&self, from: usize, to: usize, k: usize) -> f64 {
        match *self {
            Proposal::UniformIndependent => 1.0 / k as f64,
            Proposal::NeighborWalk { width } => {
                let w = width as i64;
                let hits = (-w..=w)
                    .filter(|&o| o != 0 && reflect(from as i64 + o, k) == to)
                    .count();
                hits as f64 / (2 * width) as f64
            }
        }
    }
}

/// Metropolis-Hastings over candidate indices targeting the Gibbs posterior.
/// `risk` is called lazily and memoized. Seeded and bit-reproducible.
pub fn mh_sample(
    mut risk: impl FnMut(usize) -> Result<f64>,
    candidates: usize,
    gibbs: &GibbsConfig,
    mh: &MhConfig,
) -> Result<MhResult> {
    if candidates == 0 {
        return Err(Error::invalid("no candidates"));
    }
    mh.validate()?;
    let prior = gibbs.prior_for(candidates)?;
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut risk_of = |c: usize| -> Result<f64> {
        if let Some(&r) = cache.get(&c) {
            return Ok(r);
        }
        let r = risk(c)?;
        if !r.is_finite() {
            return Err(Error::Numerical(format!("risk of candidate {c} is {r}")));
        }
        cache.insert(c, r);
        Ok(r)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(mh.seed);
    let mut current = rng.random_range(0..candidates);
    let mut r_cur = risk_of(current)?;
    let mut counts = vec![0usize; candidates];
    let mut accepted = 0usize;
    let mut retained = 0usize;

    for step in 0..mh.steps {
        let prop = mh.proposal.draw(current, candidates, &mut rng);
        let u: f64 = rng.random();
        if prop == current {
            accepted += 1;
        } else {
            let r_prop = risk_of(prop)?;
            let log_alpha = -gibbs.gamma * (r_prop - r_cur) + prior[prop].ln() - prior[current].ln()
                + mh.proposal.prob(prop, current, candidates).ln()
                - mh.proposal.prob(current, prop, candidates).ln();
            if u.ln() < log_alpha {
                current = prop;
                r_cur = r_prop;
                accepted += 1;
            }
        }
        if step >= mh.burn_in && (step - mh.burn_in) % mh.thinning == 0 {
            counts[current] += 1;
            retained += 1;
        }
    }

    Ok(MhResult {
        weights: counts.iter().map(|&c| c as f64 / retained as f64).collect(),
        acceptance_rate: accepted as f64 / mh.steps as f64,
        retained,
    })
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Discrete distribution over the candidates, dropping weights below
/// `min_weight` and renormalizing.
pub fn learned_distribution(candidates: &[Arc<SymOperator>], weights: &[f64], min_weight: f64) -> Result<(DistributionSpec, Vec<usize>)> {
    if candidates.len() != weights.len() {
        return Err(Error::dim("weights and candidates differ in length"));
    }
    let kept: Vec<usize> = (0..weights.len()).filter(|&c| weights[c] >= min_weight && weights[c] > 0.0).collect();
    if kept.is_empty() {
        return Err(Error::invalid(format!("no candidate has weight >= {min_weight}")));
    }
    let total: f64 = kept.iter().map(|&c| weights[c]).sum();
    Ok((
        DistributionSpec::Discrete {
            operators: kept.iter().map(|&c| candidates[c].clone()).collect(),
            weights: kept.iter().map(|&c| weights[c] / total).collect(),
        },
        kept,
    ))
}
