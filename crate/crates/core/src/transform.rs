//! Distributional Fourier transform and its left inverse.
//!
//! For an ensemble with fibers `(x_q, w_q)`, the transform of `f` is the
//! `Q x n` table `c(q, i) = sqrt(w_q) <f, v_{x_q}(i)>`. The left inverse sums
//! `c(q, i) sqrt(w_q) v_{x_q}(i)` over all fibers and frequencies. It factors
//! through per-fiber vertex signals: a fiberwise inverse transform followed by
//! an expectation over the fibers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::OperatorEnsemble;
use crate::error::{Error, Result};
use crate::operator::Signal;

/// Transform coefficients, one row per fiber of `ensemble`.
#[derive(Debug, Clone)]
pub struct SpectralCoefficients<'a> {
    table: DMatrix<f64>,
    ensemble: &'a OperatorEnsemble,
}

impl<'a> SpectralCoefficients<'a> {
    pub fn new(table: DMatrix<f64>, ensemble: &'a OperatorEnsemble) -> Result<Self> {
        check_table_shape(&table, ensemble)?;
        Ok(Self { table, ensemble })
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn into_table(self) -> DMatrix<f64> {
        self.table
    }

    pub fn ensemble(&self) -> &'a OperatorEnsemble {
        self.ensemble
    }

    pub fn norm(&self) -> f64 {
        self.table.norm()
    }

    /// Pointwise product with a kernel table of the same shape.
    pub fn multiply(&self, kernel: &DMatrix<f64>) -> Result<Self> {
        check_table_shape(kernel, self.ensemble)?;
        Ok(Self {
            table: self.table.component_mul(kernel),
            ensemble: self.ensemble,
        })
    }
}

pub(crate) fn check_table_shape(table: &DMatrix<f64>, ens: &OperatorEnsemble) -> Result<()> {
    if table.nrows() != ens.len() || table.ncols() != ens.dim() {
        return Err(Error::dim(format!(
            "table is {}x{}, ensemble needs {}x{}",
            table.nrows(),
            table.ncols(),
            ens.len(),
            ens.dim()
        )));
    }
    Ok(())
}

/// How the rows of a [`FiberSignals`] table relate to the fiber weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberMode {
    /// Row `q` already carries its fiber's weight; the expectation is a plain
    /// sum of rows.
    WeightCarrying,
    /// Row `q` is an ordinary signal attached to fiber `q`; the expectation
    /// is the weighted mean.
    Raw,
}

/// One vertex signal per fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSignals {
    pub table: DMatrix<f64>,
    pub mode: FiberMode,
}

impl FiberSignals {
    pub fn raw(table: DMatrix<f64>) -> Self {
        Self {
            table,
            mode: FiberMode::Raw,
        }
    }

    pub fn row(&self, q: usize) -> DVector<f64> {
        self.table.row(q).transpose()
    }
}

/// `f -> c(q, i) = sqrt(w_q) <f, v_{x_q}(i)>`.
pub fn forward<'a>(f: &Signal, ens: &'a OperatorEnsemble) -> Result<SpectralCoefficients<'a>> {
    f.check_len(ens.dim())?;
    let rows = ens
        .fibers()
        .par_iter()
        .map(|fiber| {
            let e = fiber.eigen()?;
            Ok(e.eigenvectors.tr_mul(f.values()) * fiber.weight.sqrt())
        })
        .collect::<Result<Vec<DVector<f64>>>>()?;
    let n = ens.dim();
    let mut table = DMatrix::zeros(ens.len(), n);
    for (q, row) in rows.iter().enumerate() {
        table.set_row(q, &row.transpose());
    }
    Ok(SpectralCoefficients { table, ensemble: ens })
}

/// Left inverse: `sum_q sum_i c(q, i) sqrt(w_q) v_{x_q}(i)`, in fiber order.
pub fn inverse(c: &SpectralCoefficients<'_>) -> Result<Signal> {
    let fs = fiberwise_inverse(c)?;
    expectation(&fs, c.ensemble)
}

/// Per-fiber inverse transforms whose rows carry the fiber weight:
/// row `q = sqrt(w_q) V_q c(q, .)`. Summing the rows gives [`inverse`].
pub fn fiberwise_inverse(c: &SpectralCoefficients<'_>) -> Result<FiberSignals> {
    fiber_rows(c, |w| w.sqrt(), FiberMode::WeightCarrying)
}

/// Per-fiber inverse transforms of `c(q, .) / sqrt(w_q)`, i.e. the plain
/// fiber signals whose weighted mean is [`inverse`]. A zero weight yields a
/// zero row.
pub fn fiberwise_inverse_unweighted(c: &SpectralCoefficients<'_>) -> Result<FiberSignals> {
    fiber_rows(c, |w| if w > 0.0 { 1.0 / w.sqrt() } else { 0.0 }, FiberMode::Raw)
}

fn fiber_rows(c: &SpectralCoefficients<'_>, scale: impl Fn(f64) -> f64 + Sync, mode: FiberMode) -> Result<FiberSignals> {
    let ens = c.ensemble;
    check_table_shape(&c.table, ens)?;
    let rows = ens
        .fibers()
        .par_iter()
        .enumerate()
        .map(|(q, fiber)| {
            let e = fiber.eigen()?;
            let coeffs = c.table.row(q).transpose();
            Ok(&e.eigenvectors * coeffs * scale(fiber.weight))
        })
        .collect::<Result<Vec<DVector<f64>>>>()?;
    let mut table = DMatrix::zeros(ens.len(), ens.dim());
    for (q, row) in rows.iter().enumerate() {
        table.set_row(q, &row.transpose());
    }
    Ok(FiberSignals { table, mode })
}

/// Expectation over fibers, summed in fiber order.
pub fn expectation(fs: &FiberSignals, ens: &OperatorEnsemble) -> Result<Signal> {
    if fs.table.nrows() != ens.len() || fs.table.ncols() != ens.dim() {
        return Err(Error::dim(format!(
            "fiber signals are {}x{}, ensemble needs {}x{}",
            fs.table.nrows(),
            fs.table.ncols(),
            ens.len(),
            ens.dim()
        )));
    }
    let mut acc = DVector::zeros(ens.dim());
    for (q, fiber) in ens.fibers().iter().enumerate() {
        let row = fs.table.row(q).transpose();
        match fs.mode {
            FiberMode::WeightCarrying => acc += row,
            FiberMode::Raw => acc += row * fiber.weight,
        }
    }
    Signal::from_vector(acc)
}
