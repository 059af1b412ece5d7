//! Sampling and reconstruction with a band-pass filter.
//!
//! The band-pass filter `B` of a distribution is an average of projections,
//! so its spectrum lies in `[0, 1]` but it is generally not a projection.
//! Signals are reconstructed from vertex samples in the span of the top
//! eigenvectors `v_{j+1}..v_n` of `B`. With `sigma_j = ||G_j^{-1}||` and
//! `lambda_j` the `j`-th smallest eigenvalue, the error for a signal with
//! `||B f - f|| <= eps` is at most `eps (1 + sigma_j) / (1 - lambda_j)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::{bandlimit_residual, ConvolutionFilter};
use crate::operator::{compute_eigensystem, Signal};

/// Slack on the `[0, 1]` spectrum bound.
pub const SPECTRUM_TOL: f64 = 1e-10;
const COND_MAX: f64 = 1e12;
const CONVEXITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BandPassSpectrum {
    /// Ascending, within `[-1e-10, 1 + 1e-10]`.
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl BandPassSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn analyze(b: &ConvolutionFilter) -> Result<BandPassSpectrum> {
    let e = compute_eigensystem(&b.matrix, "band-pass filter")?;
    for &l in e.eigenvalues.iter() {
        if !(-SPECTRUM_TOL..=1.0 + SPECTRUM_TOL).contains(&l) {
            return Err(Error::SpectrumEscape(l));
        }
    }
    Ok(BandPassSpectrum {
        eigenvalues: e.eigenvalues,
        eigenvectors: e.eigenvectors,
    })
}

/// How the cut index `j` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cut {
    /// Sample `m` vertices: `j = n - m`.
    Budget(usize),
    /// `j` = number of eigenvalues `<= tau`.
    Threshold(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplingPlan {
    pub j: usize,
    /// Uniqueness set, ascending.
    #[serde(rename = "V_j")]
    pub vertices: Vec<usize>,
    pub sigma_j: f64,
    pub lambda_j: f64,
    pub condition: f64,
    /// Rows of the retained eigenvectors at `vertices`.
    #[serde(skip)]
    pub g: DMatrix<f64>,
    /// `v_{j+1}..v_n` as columns.
    #[serde(skip)]
    pub basis: DMatrix<f64>,
}

impl SamplingPlan {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Values of `f` at the uniqueness set.
    pub fn sample(&self, f: &Signal) -> Result<BTreeMap<usize, f64>> {
        f.check_len(self.dim())?;
        Ok(self.vertices.iter().map(|&v| (v, f.values()[v])).collect())
    }
}

pub fn plan(spec: &BandPassSpectrum, cut: Cut) -> Result<SamplingPlan> {
    let n = spec.dim();
    let j = match cut {
        Cut::Budget(m) => {
            if m == 0 || m > n {
                return Err(Error::invalid(format!("sample budget {m} outside [1, {n}]")));
            }
            n - m
        }
        Cut::Threshold(tau) => {
            if !(0.0..1.0).contains(&tau) {
                return Err(Error::invalid(format!("threshold {tau} outside [0, 1)")));
            }
            let j = spec.eigenvalues.iter().filter(|&&l| l <= tau).count();
            if j == n {
                return Err(Error::invalid(format!("every eigenvalue is <= {tau}; nothing left to sample")));
            }
            j
        }
    };
    let lambda_j = if j == 0 { 0.0 } else { spec.eigenvalues[j - 1] };
    if lambda_j >= 1.0 - SPECTRUM_TOL {
        return Err(Error::Certificate(lambda_j));
    }

    let basis = spec.eigenvectors.columns(j, n - j).clone_owned();
    let vertices = pivoted_row_selection(&basis);
    let g = basis.select_rows(vertices.iter());
    let sv = g.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = smax / smin;
    if !(smin > 0.0) || condition > COND_MAX {
        return Err(Error::IllConditioned {
            condition,
            context: "uniqueness-set matrix G_j".into(),
        });
    }
    Ok(SamplingPlan {
        j,
        vertices,
        sigma_j: 1.0 / smin,
        lambda_j,
        condition,
        g,
        basis,
    })
}

/// Greedy row subset of size `ncols` by column-pivoted Gram-Schmidt on the
/// transpose: each step takes the row with the largest residual norm
/// (lowest index on exact ties). Returned ascending.
pub fn pivoted_row_selection(basis: &DMatrix<f64>) -> Vec<usize> {
    let (n, k) = basis.shape();
    let mut residual: Vec<DVector<f64>> = (0..n).map(|r| basis.row(r).transpose()).collect();
    let mut taken = vec![false; n];
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..n {
            if taken[r] {
                continue;
            }
            let s = residual[r].norm_squared();
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((r, s));
            }
        }
        let (p, s) = best.expect("rows remain");
        taken[p] = true;
        picked.push(p);
        if s == 0.0 {
            continue;
        }
        let q = &residual[p] / s.sqrt();
        for r in 0..n {
            if !taken[r] {
                let proj = q.dot(&residual[r]);
                residual[r].axpy(-proj, &q, 1.0);
            }
        }
    }
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionReport {
    #[serde(skip)]
    pub f_prime: Signal,
    pub epsilon: f64,
    pub j: usize,
    /// Certified `||f' - f||` bound.
    pub bound_a: f64,
    /// `f'` is `(Y, epsilon_prime)`-bandlimited.
    pub epsilon_prime: f64,
}

/// Reconstruction from samples at exactly the plan's uniqueness set.
pub fn reconstruct(plan: &SamplingPlan, samples: &BTreeMap<usize, f64>, epsilon: f64) -> Result<ReconstructionReport> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if samples.len() != plan.vertices.len() || !plan.vertices.iter().all(|v| samples.contains_key(v)) {
        return Err(Error::invalid(format!(
            "samples cover vertices {:?}, plan needs {:?}",
            samples.keys().collect::<Vec<_>>(),
            plan.vertices
        )));
    }
    if samples.values().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample value"));
    }
    if plan.lambda_j >= 1.0 - SPECTRUM_TOL {
        return Err(Error::Certificate(plan.lambda_j));
    }
    let f_v = DVector::from_iterator(plan.vertices.len(), plan.vertices.iter().map(|v| samples[v]));
    let coeffs = plan
        .g
        .clone()
        .lu()
        .solve(&f_v)
        .ok_or_else(|| Error::Numerical("singular uniqueness-set matrix".into()))?;
    let f_prime = Signal::from_vector(&plan.basis * coeffs)?;
    let ratio = (1.0 + plan.sigma_j) / (1.0 - plan.lambda_j);
    Ok(ReconstructionReport {
        f_prime,
        epsilon,
        j: plan.j,
        bound_a: epsilon * ratio,
        epsilon_prime: epsilon * (1.0 + 2.0 * ratio),
    })
}

/// Checks that the midpoint of two `(Y, eps)`-bandlimited signals is again
/// `(Y, eps)`-bandlimited, and that `0` is strictly inside the set when
/// `eps > 0`.
pub fn convexity_check(f: &Signal, g: &Signal, b: &ConvolutionFilter, epsilon: f64) -> Result<bool> {
    let (rf, rg) = (bandlimit_residual(f, b)?, bandlimit_residual(g, b)?);
    if rf > epsilon || rg > epsilon {
        return Err(Error::invalid(format!(
            "inputs are not ({epsilon})-bandlimited: residuals {rf:e}, {rg:e}"
        )));
    }
    let mid = Signal::from_vector((f.values() + g.values()) * 0.5)?;
    let mid_ok = bandlimit_residual(&mid, b)? <= epsilon + CONVEXITY_SLACK;
    let zero_ok = epsilon == 0.0 || bandlimit_residual(&Signal::zeros(b.dim()), b)? < epsilon;
    Ok(mid_ok && zero_ok)
}

/// Two distinct `(Y, eps)`-bandlimited signals with identical samples on the
/// plan's uniqueness set: `0` and a spike at the first unsampled vertex,
/// scaled so its residual equals `eps`.
pub fn non_uniqueness_witness(plan: &SamplingPlan, b: &ConvolutionFilter, epsilon: f64) -> Result<(Signal, Signal)> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("witness needs epsilon > 0"));
    }
    let n = plan.dim();
    let free = (0..n)
        .find(|v| !plan.vertices.contains(v))
        .ok_or_else(|| Error::invalid("every vertex is sampled (j = 0)"))?;
    let mut e = DVector::zeros(n);
    e[free] = 1.0;
    let spike = Signal::from_vector(e)?;
    let r = bandlimit_residual(&spike, b)?;
    let scale = if r > 0.0 { epsilon / r } else { 1.0 };
    let g = Signal::from_vector(spike.into_vector() * scale)?;
    Ok((Signal::zeros(n), g))
}
