//! Operator distributions and their compiled form.
//!
//! Every distribution (delta, finite mixture, or a one-parameter interval
//! family `L_t = t L1 + (1 - t) L2` with a density) compiles into an
//! [`OperatorEnsemble`]: a fixed-order list of fibers with positive weights
//! summing to one. Integrals over the base space become weighted sums over
//! that list, always taken in fiber order.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_change::{BaseMap, BaseSpace, FiberKey};
use crate::error::{Error, Result};
use crate::operator::{EigenSystem, SymOperator, PSD_TOL};

/// Default number of quadrature nodes for interval families.
pub const DEFAULT_NODES: usize = 32;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const DISCRETE_SUM_TOL: f64 = 1e-9;
const RENORMALIZE_WARN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    /// Unnormalized Gaussian shape restricted to `[0, 1]`.
    TruncatedGaussian { mean: f64, stddev: f64 },
    /// `heights[k]` on `[b_k, b_{k+1})` with `b_0 = 0`, `b_K = 1`; the last
    /// cell is closed.
    PiecewiseConstant { breakpoints: Vec<f64>, heights: Vec<f64> },
    /// Linear interpolation through `(nodes, values)`, constant beyond the
    /// end nodes.
    Table { nodes: Vec<f64>, values: Vec<f64> },
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::Uniform => Ok(()),
            DensitySpec::TruncatedGaussian { mean, stddev } => {
                if !mean.is_finite() || !(*stddev > 0.0) || !stddev.is_finite() {
                    return Err(Error::invalid("truncated gaussian needs finite mean and stddev > 0"));
                }
                Ok(())
            }
            DensitySpec::PiecewiseConstant { breakpoints, heights } => {
                if heights.len() != breakpoints.len() + 1 {
                    return Err(Error::invalid(format!(
                        "piecewise density has {} breakpoints but {} heights",
                        breakpoints.len(),
                        heights.len()
                    )));
                }
                check_increasing_in_unit(breakpoints, "breakpoints")?;
                check_nonnegative(heights)
            }
            DensitySpec::Table { nodes, values } => {
                if nodes.is_empty() || nodes.len() != values.len() {
                    return Err(Error::invalid("density table needs equally many nodes and values"));
                }
                check_increasing_in_unit(nodes, "table nodes")?;
                check_nonnegative(values)
            }
        }
    }

    /// Unnormalized density at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::TruncatedGaussian { mean, stddev } => {
                let z = (t - mean) / stddev;
                (-0.5 * z * z).exp()
            }
            DensitySpec::PiecewiseConstant { breakpoints, heights } => {
                let cell = breakpoints.partition_point(|&b| b <= t);
                heights[cell]
            }
            DensitySpec::Table { nodes, values } => {
                let k = nodes.partition_point(|&x| x <= t);
                if k == 0 {
                    values[0]
                } else if k == nodes.len() {
                    values[k - 1]
                } else {
                    let (x0, x1) = (nodes[k - 1], nodes[k]);
                    let s = (t - x0) / (x1 - x0);
                    values[k - 1] * (1.0 - s) + values[k] * s
                }
            }
        }
    }
}

fn check_increasing_in_unit(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::invalid(format!("{what} must lie in [0, 1]")));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

fn check_nonnegative(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("density values must be finite and nonnegative"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    UniformMidpoint,
    GaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    #[serde(rename = "Q")]
    pub nodes: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            kind: QuadratureKind::UniformMidpoint,
            nodes: DEFAULT_NODES,
        }
    }
}

impl QuadratureRule {
    pub fn midpoint(nodes: usize) -> Self {
        Self {
            kind: QuadratureKind::UniformMidpoint,
            nodes,
        }
    }

    pub fn gauss_legendre(nodes: usize) -> Self {
        Self {
            kind: QuadratureKind::GaussLegendre,
            nodes,
        }
    }

    /// Ascending nodes in `(0, 1)` with their positive weights.
    pub fn nodes_and_weights(&self) -> Result<Vec<(f64, f64)>> {
        let q = self.nodes;
        if q == 0 {
            return Err(Error::invalid("quadrature needs at least one node"));
        }
        Ok(match self.kind {
            QuadratureKind::UniformMidpoint => {
                let h = 1.0 / q as f64;
                (0..q).map(|k| ((k as f64 + 0.5) * h, h)).collect()
            }
            QuadratureKind::GaussLegendre => gauss_legendre_unit(q),
        })
    }
}

/// Gauss-Legendre rule mapped to `[0, 1]`, by Newton iteration on `P_q`.
fn gauss_legendre_unit(q: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(q);
    let qf = q as f64;
    for k in 0..q {
        // Chebyshev-like initial guess for the (k+1)-th root, descending in x
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (qf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) * 0.5, w * 0.5));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(q: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if q == 0 {
        return (1.0, 0.0);
    }
    let qf = q as f64;
    let d = qf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `L_t = t L1 + (1 - t) L2` over `t in [0, 1]`, with a density on `t`.
#[derive(Debug, Clone)]
pub struct IntervalFamily {
    l1: Arc<SymOperator>,
    l2: Arc<SymOperator>,
    density: DensitySpec,
    quadrature: QuadratureRule,
}

impl IntervalFamily {
    pub fn new(
        l1: Arc<SymOperator>,
        l2: Arc<SymOperator>,
        density: DensitySpec,
        quadrature: QuadratureRule,
    ) -> Result<Self> {
        if l1.dim() != l2.dim() {
            return Err(Error::dim(format!(
                "family endpoints have sizes {} and {}",
                l1.dim(),
                l2.dim()
            )));
        }
        density.validate()?;
        if quadrature.nodes == 0 {
            return Err(Error::invalid("quadrature needs at least one node"));
        }
        for l in [&l1, &l2] {
            check_fiber_psd(l.eigen()?, l.label())?;
        }
        Ok(Self {
            l1,
            l2,
            density,
            quadrature,
        })
    }

    pub fn l1(&self) -> &Arc<SymOperator> {
        &self.l1
    }

    pub fn l2(&self) -> &Arc<SymOperator> {
        &self.l2
    }

    pub fn density(&self) -> &DensitySpec {
        &self.density
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.quadrature
    }

    pub fn dim(&self) -> usize {
        self.l1.dim()
    }

    pub fn with_quadrature(&self, quadrature: QuadratureRule) -> Self {
        Self {
            quadrature,
            ..self.clone()
        }
    }

    pub fn fiber_at(&self, t: f64) -> Result<SymOperator> {
        fiber_at(self, t)
    }
}

/// The family member `t L1 + (1 - t) L2`. Decomposed lazily.
pub fn fiber_at(family: &IntervalFamily, t: f64) -> Result<SymOperator> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("family parameter {t} outside [0, 1]")));
    }
    let m = family.l1.matrix() * t + family.l2.matrix() * (1.0 - t);
    Ok(SymOperator::trusted(m, format!("L_t(t={t})")))
}

#[derive(Debug, Clone)]
pub enum DistributionSpec {
    Delta(Arc<SymOperator>),
    Discrete {
        operators: Vec<Arc<SymOperator>>,
        weights: Vec<f64>,
    },
    IntervalFamily(Arc<IntervalFamily>),
}

/// One compiled fiber.
#[derive(Debug, Clone)]
pub struct Fiber {
    pub operator: Arc<SymOperator>,
    pub weight: f64,
    pub param: Option<f64>,
}

impl Fiber {
    pub fn eigen(&self) -> Result<&EigenSystem> {
        self.operator.eigen()
    }
}

#[derive(Debug, Clone)]
pub enum Provenance {
    Delta,
    Discrete,
    IntervalFamily(Arc<IntervalFamily>),
    Pushforward,
    Custom,
}

/// Finite weighted list of operators sharing one vertex set.
#[derive(Debug, Clone)]
pub struct OperatorEnsemble {
    fibers: Vec<Fiber>,
    provenance: Provenance,
}

impl OperatorEnsemble {
    /// Validates the fibers, drops zero weights and renormalizes to unit mass.
    pub fn from_fibers(fibers: Vec<Fiber>, provenance: Provenance) -> Result<Self> {
        if fibers.iter().any(|f| !(f.weight >= 0.0) || !f.weight.is_finite()) {
            return Err(Error::invalid("fiber weights must be finite and nonnegative"));
        }
        let fibers: Vec<Fiber> = fibers.into_iter().filter(|f| f.weight > 0.0).collect();
        if fibers.is_empty() {
            return Err(Error::Numerical("ensemble has zero total mass".into()));
        }
        let n = fibers[0].operator.dim();
        if let Some(bad) = fibers.iter().position(|f| f.operator.dim() != n) {
            return Err(Error::dim(format!(
                "fiber {bad} has size {}, expected {n}",
                fibers[bad].operator.dim()
            )));
        }
        let with_params = fibers.iter().filter(|f| f.param.is_some()).count();
        if with_params == fibers.len() {
            let params: Vec<f64> = fibers.iter().map(|f| f.param.unwrap()).collect();
            if params.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid("fiber parameters must be strictly increasing"));
            }
        } else if with_params != 0 {
            return Err(Error::invalid("either all fibers carry a parameter or none do"));
        }

        let total: f64 = fibers.iter().map(|f| f.weight).sum();
        if (total - 1.0).abs() > RENORMALIZE_WARN {
            warn!("renormalizing ensemble weights (raw total {total})");
        }
        let fibers = fibers
            .into_iter()
            .map(|f| Fiber {
                weight: f.weight / total,
                ..f
            })
            .collect();
        let ens = Self { fibers, provenance };
        debug_assert!((ens.total_weight() - 1.0).abs() <= WEIGHT_SUM_TOL);
        Ok(ens)
    }

    pub fn fibers(&self) -> &[Fiber] {
        &self.fibers
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    /// Number of vertices.
    pub fn dim(&self) -> usize {
        self.fibers[0].operator.dim()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.fibers.iter().map(|f| f.weight).collect()
    }

    pub fn params(&self) -> Option<Vec<f64>> {
        self.fibers.iter().map(|f| f.param).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.fibers.iter().map(|f| f.weight).sum()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The interval family this ensemble was compiled from, if any.
    pub fn family(&self) -> Option<&Arc<IntervalFamily>> {
        match &self.provenance {
            Provenance::IntervalFamily(f) => Some(f),
            _ => None,
        }
    }

    pub fn operators(&self) -> Vec<Arc<SymOperator>> {
        self.fibers.iter().map(|f| f.operator.clone()).collect()
    }

    /// Decomposes every fiber (in parallel) and checks PSD-ness.
    pub(crate) fn decompose_all(&self) -> Result<()> {
        self.fibers
            .par_iter()
            .map(|f| check_fiber_psd(f.operator.eigen()?, f.operator.label()))
            .collect::<Result<Vec<()>>>()
            .map(|_| ())
    }
}

fn check_fiber_psd(e: &EigenSystem, label: &str) -> Result<()> {
    let min = e.eigenvalues[0];
    if min < -PSD_TOL * (1.0 + e.max_eigenvalue().max(0.0)) {
        return Err(Error::NotPsd {
            label: label.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Compiles a distribution into a finite weighted ensemble.
pub fn compile(spec: &DistributionSpec) -> Result<OperatorEnsemble> {
    let ens = match spec {
        DistributionSpec::Delta(op) => OperatorEnsemble::from_fibers(
            vec![Fiber {
                operator: op.clone(),
                weight: 1.0,
                param: None,
            }],
            Provenance::Delta,
        )?,
        DistributionSpec::Discrete { operators, weights } => {
            if operators.len() != weights.len() || operators.is_empty() {
                return Err(Error::invalid(format!(
                    "discrete distribution has {} operators and {} weights",
                    operators.len(),
                    weights.len()
                )));
            }
            if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::invalid("discrete weights must be finite and nonnegative"));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > DISCRETE_SUM_TOL {
                return Err(Error::invalid(format!("discrete weights sum to {total}, expected 1")));
            }
            let fibers = operators
                .iter()
                .zip(weights)
                .map(|(op, &w)| Fiber {
                    operator: op.clone(),
                    weight: w,
                    param: None,
                })
                .collect();
            OperatorEnsemble::from_fibers(fibers, Provenance::Discrete)?
        }
        DistributionSpec::IntervalFamily(family) => {
            let rule = family.quadrature.nodes_and_weights()?;
            let raw: Vec<(f64, f64)> = rule.iter().map(|&(t, u)| (t, family.density.eval(t) * u)).collect();
            let z: f64 = raw.iter().map(|(_, w)| w).sum();
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::Numerical(
                    "density has zero total mass at the quadrature nodes".into(),
                ));
            }
            let fibers = raw
                .into_iter()
                .filter(|&(_, w)| w > 0.0)
                .map(|(t, w)| {
                    Ok(Fiber {
                        operator: Arc::new(fiber_at(family, t)?),
                        weight: w / z,
                        param: Some(t),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            OperatorEnsemble::from_fibers(fibers, Provenance::IntervalFamily(family.clone()))?
        }
    };
    ens.decompose_all()?;
    Ok(ens)
}

/// Transports the source ensemble's weights through `h` onto the fibers of
/// `target`. Source fibers landing on the same target fiber have their
/// weights summed (in source order); output fibers are ordered by target.
pub fn pushforward(source: &OperatorEnsemble, h: &BaseMap, target: &BaseSpace) -> Result<OperatorEnsemble> {
    let mut mass: BTreeMap<FiberKey, f64> = BTreeMap::new();
    for (q, f) in source.fibers().iter().enumerate() {
        let key = h.map_fiber(q, f.param, target)?;
        *mass.entry(key).or_insert(0.0) += f.weight;
    }
    let fibers = mass
        .into_iter()
        .map(|(key, weight)| {
            let (operator, param) = target.resolve(&key)?;
            Ok(Fiber {
                operator,
                weight,
                param,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ens = OperatorEnsemble::from_fibers(fibers, Provenance::Pushforward)?;
    ens.decompose_all()?;
    Ok(ens)
}
