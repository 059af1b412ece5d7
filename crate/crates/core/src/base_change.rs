//! Base change: maps `h: Y -> X` between base spaces and the two filters
//! they induce.
//!
//! `F_{Γ,h*}` runs each Y fiber through the convolution of the *mapped* X
//! fiber and averages with the Y weights. `F_{Γ^h}` instead pulls the kernel
//! back to Y and convolves with the Y fibers' own eigenbases. The two agree
//! when `h` is an inclusion and differ in general (e.g. for coarsening).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{fiber_at, IntervalFamily, OperatorEnsemble};
use crate::error::{Error, Result};
use crate::filters::{convolution_matrix, weighted_spectral_sum, FiberView, FilterKernel};
use crate::operator::{Signal, SymOperator};
use crate::transform::{expectation, fiberwise_inverse_unweighted, forward, FiberSignals};

/// Monotone map on parameters.
#[derive(Clone)]
pub struct ParamFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl ParamFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn call(&self, y: f64) -> f64 {
        (self.0)(y)
    }
}

impl fmt::Debug for ParamFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ParamFn(..)")
    }
}

#[derive(Debug, Clone)]
pub enum BaseMap {
    Identity,
    /// Y fiber `q` goes to X fiber `map[q]`.
    Discrete { map: Vec<usize> },
    ParamFunction { forward: ParamFn, inverse: Option<ParamFn> },
    /// Cell `i` of `[0, 1]` cut at `breakpoints` goes to `reps[i]`.
    Coarsening { breakpoints: Vec<f64>, reps: Vec<f64> },
    /// `y -> y eta / (1 - y + y eta)`.
    Stretch { eta: f64 },
}

/// Identifies an X fiber: by position or by family parameter.
#[derive(Debug, Clone, Copy)]
pub enum FiberKey {
    Index(usize),
    Param(f64),
}

impl PartialEq for FiberKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FiberKey {}

impl PartialOrd for FiberKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FiberKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (FiberKey::Index(a), FiberKey::Index(b)) => a.cmp(b),
            (FiberKey::Param(a), FiberKey::Param(b)) => a.total_cmp(b),
            (FiberKey::Index(_), FiberKey::Param(_)) => Ordering::Less,
            (FiberKey::Param(_), FiberKey::Index(_)) => Ordering::Greater,
        }
    }
}

/// Target base space of a base map. No probability measure is needed.
#[derive(Debug, Clone)]
pub enum BaseSpace {
    Fibers(Vec<Arc<SymOperator>>),
    Family(Arc<IntervalFamily>),
}

impl BaseSpace {
    pub fn from_ensemble(ens: &OperatorEnsemble) -> Self {
        BaseSpace::Fibers(ens.operators())
    }

    pub fn resolve(&self, key: &FiberKey) -> Result<(Arc<SymOperator>, Option<f64>)> {
        match (self, key) {
            (BaseSpace::Fibers(ops), FiberKey::Index(i)) => ops
                .get(*i)
                .cloned()
                .map(|op| (op, None))
                .ok_or_else(|| Error::invalid(format!("base map targets missing fiber {i}"))),
            (BaseSpace::Family(fam), FiberKey::Param(x)) => Ok((Arc::new(fiber_at(fam, *x)?), Some(*x))),
            (BaseSpace::Fibers(_), FiberKey::Param(x)) => Err(Error::invalid(format!(
                "base map produced parameter {x} but the target space is a finite fiber list"
            ))),
            (BaseSpace::Family(_), FiberKey::Index(i)) => Err(Error::invalid(format!(
                "base map produced fiber index {i} but the target space is a parametrized family"
            ))),
        }
    }
}

impl BaseMap {
    pub fn stretch(eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("stretch factor must be positive, got {eta}")));
        }
        Ok(BaseMap::Stretch { eta })
    }

    pub fn coarsening(breakpoints: Vec<f64>, reps: Vec<f64>) -> Result<Self> {
        if reps.len() != breakpoints.len() + 1 {
            return Err(Error::invalid(format!(
                "coarsening with {} breakpoints needs {} representatives, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                reps.len()
            )));
        }
        if breakpoints.iter().any(|b| !(*b > 0.0 && *b < 1.0)) || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("coarsening breakpoints must be strictly increasing inside (0, 1)"));
        }
        for (i, &r) in reps.iter().enumerate() {
            let lo = if i == 0 { 0.0 } else { breakpoints[i - 1] };
            let hi = breakpoints.get(i).copied().unwrap_or(1.0);
            let last = i == breakpoints.len();
            if !(r >= lo && (r < hi || (last && r <= hi))) {
                return Err(Error::invalid(format!("representative {r} is not inside cell {i} [{lo}, {hi})")));
            }
        }
        Ok(BaseMap::Coarsening { breakpoints, reps })
    }

    /// Image of a parameter under a parametric map.
    pub fn apply(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::invalid(format!("parameter {y} outside [0, 1]")));
        }
        let x = match self {
            BaseMap::Identity => y,
            BaseMap::Stretch { eta } => y * eta / (1.0 - y + y * eta),
            BaseMap::ParamFunction { forward, .. } => forward.call(y),
            BaseMap::Coarsening { breakpoints, reps } => reps[coarsening_cell(breakpoints, y)],
            BaseMap::Discrete { .. } => {
                return Err(Error::invalid("a discrete base map acts on fiber indices, not parameters"))
            }
        };
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(format!("base map sends {y} to {x}, outside [0, 1]")));
        }
        Ok(x)
    }

    /// Exact inverse where one is available.
    pub fn invert(&self, x: f64) -> Result<f64> {
        match self {
            BaseMap::Identity => Ok(x),
            BaseMap::Stretch { eta } => Ok(x / (x + eta - x * eta)),
            BaseMap::ParamFunction {
                inverse: Some(inverse), ..
            } => Ok(inverse.call(x)),
            _ => Err(Error::invalid("base map has no inverse")),
        }
    }

    /// Which X fiber the Y fiber `q` (with parameter `y`, if any) lands on.
    pub fn map_fiber(&self, q: usize, y: Option<f64>, target: &BaseSpace) -> Result<FiberKey> {
        let need_param = || y.ok_or_else(|| Error::invalid(format!("base map needs a parameter on fiber {q}")));
        match (self, target) {
            (BaseMap::Identity, BaseSpace::Fibers(_)) => Ok(FiberKey::Index(q)),
            (BaseMap::Discrete { map }, _) => map
                .get(q)
                .map(|&i| FiberKey::Index(i))
                .ok_or_else(|| Error::invalid(format!("discrete base map undefined on fiber {q}"))),
            (BaseMap::Coarsening { breakpoints, .. }, BaseSpace::Fibers(_)) => {
                let y = need_param()?;
                if !(0.0..=1.0).contains(&y) {
                    return Err(Error::invalid(format!("parameter {y} outside [0, 1]")));
                }
                Ok(FiberKey::Index(coarsening_cell(breakpoints, y)))
            }
            (_, BaseSpace::Family(_)) => Ok(FiberKey::Param(self.apply(need_param()?)?)),
            (_, BaseSpace::Fibers(_)) => Err(Error::invalid(
                "parametric base map cannot target a finite fiber list",
            )),
        }
    }
}

fn coarsening_cell(breakpoints: &[f64], y: f64) -> usize {
    breakpoints.partition_point(|&b| b <= y)
}

/// `h_eta(y) = y eta / (1 - y + y eta)`, inverse `x / (x + eta - x eta)`.
pub fn stretch_map(eta: f64) -> Result<BaseMap> {
    BaseMap::stretch(eta)
}

/// Kernel pulled back to the Y fibers: row `q` holds `Γ(h(y_q), .)`.
#[derive(Debug, Clone)]
pub struct PullbackKernel {
    pub table: DMatrix<f64>,
}

struct MappedFiber {
    operator: Arc<SymOperator>,
    gamma: DVector<f64>,
}

/// Resolves `h(y_q)` for every Y fiber and evaluates the kernel there.
fn map_fibers(kernel: &FilterKernel, h: &BaseMap, y_ens: &OperatorEnsemble, x_space: &BaseSpace) -> Result<Vec<MappedFiber>> {
    let mut cache: BTreeMap<FiberKey, (Arc<SymOperator>, DVector<f64>)> = BTreeMap::new();
    let mut out = Vec::with_capacity(y_ens.len());
    for (q, fiber) in y_ens.fibers().iter().enumerate() {
        let key = h.map_fiber(q, fiber.param, x_space)?;
        if !cache.contains_key(&key) {
            let (op, param) = x_space.resolve(&key)?;
            if op.dim() != y_ens.dim() {
                return Err(Error::dim(format!(
                    "mapped fiber has size {}, Y ensemble has {}",
                    op.dim(),
                    y_ens.dim()
                )));
            }
            let view = FiberView {
                index: match key {
                    FiberKey::Index(i) => Some(i),
                    FiberKey::Param(_) => None,
                },
                param,
                weight: None,
                eigen: op.eigen()?,
            };
            let gamma = kernel.row(&view)?;
            cache.insert(key, (op, gamma));
        }
        let (op, gamma) = &cache[&key];
        out.push(MappedFiber {
            operator: op.clone(),
            gamma: gamma.clone(),
        });
    }
    Ok(out)
}

pub fn pullback_kernel(kernel: &FilterKernel, h: &BaseMap, y_ens: &OperatorEnsemble, x_space: &BaseSpace) -> Result<PullbackKernel> {
    let mapped = map_fibers(kernel, h, y_ens, x_space)?;
    let mut table = DMatrix::zeros(y_ens.len(), y_ens.dim());
    for (q, m) in mapped.iter().enumerate() {
        table.set_row(q, &m.gamma.transpose());
    }
    Ok(PullbackKernel { table })
}

/// `F_{Γ,h*}`: `sum_q w_q sum_i Γ(h(y_q), i) v_{h(y_q)}(i) v_{h(y_q)}(i)^T`.
pub fn pullback_filter_via_fibers(
    kernel: &FilterKernel,
    h: &BaseMap,
    y_ens: &OperatorEnsemble,
    x_space: &BaseSpace,
) -> Result<DMatrix<f64>> {
    let mapped = map_fibers(kernel, h, y_ens, x_space)?;
    let eigens = mapped
        .iter()
        .map(|m| m.operator.eigen())
        .collect::<Result<Vec<_>>>()?;
    let terms: Vec<_> = y_ens
        .fibers()
        .iter()
        .zip(&mapped)
        .zip(&eigens)
        .map(|((f, m), e)| (f.weight, &e.eigenvectors, m.gamma.clone()))
        .collect();
    Ok(weighted_spectral_sum(&terms, y_ens.dim()))
}

/// `F_{Γ^h}`: the convolution filter on Y of the pulled-back kernel.
pub fn pullback_kernel_filter(
    kernel: &FilterKernel,
    h: &BaseMap,
    y_ens: &OperatorEnsemble,
    x_space: &BaseSpace,
) -> Result<DMatrix<f64>> {
    let pk = pullback_kernel(kernel, h, y_ens, x_space)?;
    Ok(convolution_matrix(&FilterKernel::Table(pk.table), y_ens)?.matrix)
}

/// Applies `F_{Γ,h*}` to `f` through the factored transform: forward on X,
/// kernel multiplication, fiberwise inverse on X, pullback of the fiber
/// signals to Y, expectation under the Y weights. Requires a discrete (or
/// identity) map into the fibers of `x_ens`.
pub fn pullback_apply_composed(
    f: &Signal,
    kernel: &FilterKernel,
    h: &BaseMap,
    y_ens: &OperatorEnsemble,
    x_ens: &OperatorEnsemble,
) -> Result<Signal> {
    let space = BaseSpace::from_ensemble(x_ens);
    let c = forward(f, x_ens)?;
    let filtered = c.multiply(&kernel.table(x_ens)?)?;
    let on_x = fiberwise_inverse_unweighted(&filtered)?;
    let mut pulled = DMatrix::zeros(y_ens.len(), y_ens.dim());
    for (q, fiber) in y_ens.fibers().iter().enumerate() {
        match h.map_fiber(q, fiber.param, &space)? {
            FiberKey::Index(i) => {
                if i >= x_ens.len() {
                    return Err(Error::invalid(format!("base map targets missing fiber {i}")));
                }
                pulled.set_row(q, &on_x.table.row(i));
            }
            FiberKey::Param(_) => unreachable!("finite fiber lists only yield indices"),
        }
    }
    expectation(&FiberSignals::raw(pulled), y_ens)
}

/// For `x = h_eta(y)`, returns `c = eta / (1 - y + y eta)` and the max-norm
/// residual of `x L1 + (1 - x) eta L2 - c L_y`.
pub fn stretch_consistency(l1: &SymOperator, l2: &SymOperator, eta: f64, y: f64) -> Result<(f64, f64)> {
    if l1.dim() != l2.dim() {
        return Err(Error::dim("stretch endpoints differ in size"));
    }
    let h = BaseMap::stretch(eta)?;
    let x = h.apply(y)?;
    let stretched = l1.matrix() * x + l2.matrix() * ((1.0 - x) * eta);
    let l_y = l1.matrix() * y + l2.matrix() * (1.0 - y);
    let c = eta / (1.0 - y + y * eta);
    let residual = (stretched - &l_y * c).amax();
    Ok((c, residual))
}
