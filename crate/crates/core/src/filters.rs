//! Convolution filters on an operator ensemble.
//!
//! A kernel assigns a multiplier to every (fiber, frequency) pair. Its
//! convolution filter is the ensemble average of the per-fiber spectral
//! filters `V_q diag(kernel_q) V_q^T`, materialized as a dense matrix.

use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::{IntervalFamily, OperatorEnsemble};
use crate::error::{Error, Result};
use crate::operator::{EigenSystem, Signal};

/// Relative eigenvalue gap below which two eigenvalues count as repeated.
pub const REPEATED_GAP_TOL: f64 = 1e-9;
const VANDERMONDE_COND_MAX: f64 = 1e12;

/// Frequency selection per fiber.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BandSpec {
    /// Indices `0..m` on every fiber.
    Bottom(usize),
    /// Explicit index set for each fiber, in fiber order.
    PerFiber(Vec<Vec<usize>>),
}

impl BandSpec {
    pub fn bottom(m: usize) -> Self {
        BandSpec::Bottom(m)
    }

    fn mask(&self, fiber: Option<usize>, n: usize) -> Result<DVector<f64>> {
        let mut mask = DVector::zeros(n);
        match self {
            BandSpec::Bottom(m) => {
                if *m > n {
                    return Err(Error::invalid(format!("band bottom({m}) exceeds {n} frequencies")));
                }
                mask.rows_mut(0, *m).fill(1.0);
            }
            BandSpec::PerFiber(sets) => {
                let q = fiber.ok_or_else(|| Error::invalid("per-fiber band needs a fiber index"))?;
                let set = sets
                    .get(q)
                    .ok_or_else(|| Error::dim(format!("band spec has no entry for fiber {q}")))?;
                for &i in set {
                    if i >= n {
                        return Err(Error::invalid(format!("band index {i} out of range for {n} frequencies")));
                    }
                    mask[i] = 1.0;
                }
            }
        }
        Ok(mask)
    }
}

/// Multiplier as a function of the fiber parameter (if any) and eigenvalue.
#[derive(Clone)]
pub struct SpectralResponse(Arc<dyn Fn(Option<f64>, f64) -> f64 + Send + Sync>);

impl SpectralResponse {
    pub fn new(f: impl Fn(Option<f64>, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, param: Option<f64>, lambda: f64) -> f64 {
        (self.0)(param, lambda)
    }
}

impl fmt::Debug for SpectralResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SpectralResponse(..)")
    }
}

#[derive(Debug, Clone)]
pub enum FilterKernel {
    /// `Q x n` table; row `q` applies to fiber `q`.
    Table(DMatrix<f64>),
    /// Indicator of a frequency band.
    Band(BandSpec),
    /// `lambda_x(i)^power`.
    Lambda { power: u32 },
    /// Kernel induced by a signal: its own transform coefficients.
    Signal(Signal),
    /// Identically one.
    AllPass,
    Response(SpectralResponse),
}

/// What a kernel may look at when producing one fiber's multipliers.
#[derive(Debug, Clone, Copy)]
pub struct FiberView<'a> {
    pub index: Option<usize>,
    pub param: Option<f64>,
    pub weight: Option<f64>,
    pub eigen: &'a EigenSystem,
}

impl FilterKernel {
    pub fn lambda() -> Self {
        FilterKernel::Lambda { power: 1 }
    }

    /// Multipliers for one fiber.
    pub fn row(&self, view: &FiberView<'_>) -> Result<DVector<f64>> {
        let n = view.eigen.dim();
        let row = match self {
            FilterKernel::Table(t) => {
                let q = view
                    .index
                    .ok_or_else(|| Error::invalid("table kernel can only be evaluated on indexed fibers"))?;
                if t.ncols() != n {
                    return Err(Error::dim(format!("kernel table has {} columns, expected {n}", t.ncols())));
                }
                if q >= t.nrows() {
                    return Err(Error::dim(format!("kernel table has no row for fiber {q}")));
                }
                t.row(q).transpose()
            }
            FilterKernel::Band(b) => b.mask(view.index, n)?,
            FilterKernel::Lambda { power } => view.eigen.eigenvalues.map(|l| l.powi(*power as i32)),
            FilterKernel::Signal(g) => {
                g.check_len(n)?;
                let w = view
                    .weight
                    .ok_or_else(|| Error::invalid("signal kernel needs the fiber weight"))?;
                view.eigen.eigenvectors.tr_mul(g.values()) * w.sqrt()
            }
            FilterKernel::AllPass => DVector::from_element(n, 1.0),
            FilterKernel::Response(r) => view.eigen.eigenvalues.map(|l| r.eval(view.param, l)),
        };
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("kernel produced a non-finite multiplier".into()));
        }
        Ok(row)
    }

    /// The `Q x n` table of this kernel on `ens`.
    pub fn table(&self, ens: &OperatorEnsemble) -> Result<DMatrix<f64>> {
        if let FilterKernel::Table(t) = self {
            crate::transform::check_table_shape(t, ens)?;
        }
        if let FilterKernel::Band(BandSpec::PerFiber(sets)) = self {
            if sets.len() != ens.len() {
                return Err(Error::dim(format!(
                    "band spec has {} fibers, ensemble has {}",
                    sets.len(),
                    ens.len()
                )));
            }
        }
        let mut table = DMatrix::zeros(ens.len(), ens.dim());
        for (q, fiber) in ens.fibers().iter().enumerate() {
            let view = FiberView {
                index: Some(q),
                param: fiber.param,
                weight: Some(fiber.weight),
                eigen: fiber.eigen()?,
            };
            table.set_row(q, &self.row(&view)?.transpose());
        }
        Ok(table)
    }
}

/// Dense symmetric filter matrix together with the kernel that produced it.
#[derive(Debug, Clone)]
pub struct ConvolutionFilter {
    pub matrix: DMatrix<f64>,
    pub kernel: Option<FilterKernel>,
}

impl ConvolutionFilter {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        f.check_len(self.dim())?;
        Signal::from_vector(&self.matrix * f.values())
    }
}

/// `V diag(gamma) V^T`.
pub(crate) fn spectral_filter(eigenvectors: &DMatrix<f64>, gamma: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= gamma[j];
    }
    scaled * eigenvectors.transpose()
}

/// `sum_k w_k V_k diag(gamma_k) V_k^T`, terms built in parallel and summed
/// in the given order.
pub(crate) fn weighted_spectral_sum(terms: &[(f64, &DMatrix<f64>, DVector<f64>)], n: usize) -> DMatrix<f64> {
    let parts: Vec<DMatrix<f64>> = terms
        .par_iter()
        .map(|(w, v, g)| spectral_filter(v, g) * *w)
        .collect();
    let mut acc = DMatrix::zeros(n, n);
    for p in parts {
        acc += p;
    }
    crate::operator::symmetrize(acc)
}

/// Warns when a kernel distinguishes between (numerically) repeated
/// eigenvalues, where the eigenbasis is not unique.
pub(crate) fn warn_if_basis_dependent(fiber: usize, eigen: &EigenSystem, gamma: &DVector<f64>) {
    let tol = REPEATED_GAP_TOL * (1.0 + eigen.max_eigenvalue().abs());
    let ev = &eigen.eigenvalues;
    for i in 1..ev.len() {
        if ev[i] - ev[i - 1] < tol && gamma[i] != gamma[i - 1] {
            warn!(
                "fiber {fiber}: kernel differs across repeated eigenvalue {:.6e}; filter depends on the eigenbasis",
                ev[i]
            );
            return;
        }
    }
}

/// Convolution filter of `kernel` over `ens`.
pub fn convolution_matrix(kernel: &FilterKernel, ens: &OperatorEnsemble) -> Result<ConvolutionFilter> {
    let table = kernel.table(ens)?;
    let mut terms = Vec::with_capacity(ens.len());
    for (q, fiber) in ens.fibers().iter().enumerate() {
        let e = fiber.eigen()?;
        let gamma = table.row(q).transpose();
        warn_if_basis_dependent(q, e, &gamma);
        terms.push((fiber.weight, &e.eigenvectors, gamma));
    }
    Ok(ConvolutionFilter {
        matrix: weighted_spectral_sum(&terms, ens.dim()),
        kernel: Some(kernel.clone()),
    })
}

/// The kernel `(q, i) -> lambda_{x_q}(i)`; its filter is the mean operator.
pub fn lambda_kernel(_ens: &OperatorEnsemble) -> FilterKernel {
    FilterKernel::lambda()
}

/// Kernel induced by `g`: `f -> inverse(forward(g) * forward(f))`.
pub fn signal_kernel(g: &Signal, ens: &OperatorEnsemble) -> Result<FilterKernel> {
    g.check_len(ens.dim())?;
    Ok(FilterKernel::Signal(g.clone()))
}

/// Band-pass filter: the ensemble average of the projections onto each
/// fiber's selected eigenvectors.
pub fn band_pass(band: &BandSpec, ens: &OperatorEnsemble) -> Result<ConvolutionFilter> {
    convolution_matrix(&FilterKernel::Band(band.clone()), ens)
}

/// `||B f - f||`.
pub fn bandlimit_residual(f: &Signal, b: &ConvolutionFilter) -> Result<f64> {
    f.check_len(b.dim())?;
    Ok((&b.matrix * f.values() - f.values()).norm())
}

/// Fiber filter `sum_i a_i(t) x_t^i` with polynomial coefficients in `t`.
#[derive(Debug, Clone)]
pub struct BiPolynomial {
    /// Entry `(i, s)` is the coefficient of `t^s` in `a_i(t)`.
    pub coeffs: DMatrix<f64>,
    pub degree: usize,
    pub family: Arc<IntervalFamily>,
}

impl BiPolynomial {
    /// `a_i(t)` for every matrix power `i`.
    pub fn power_coefficients(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.coeffs.nrows(),
            self.coeffs.row_iter().map(|row| horner(row.iter().copied(), t)),
        )
    }
}

fn horner(coeffs: impl DoubleEndedIterator<Item = f64>, t: f64) -> f64 {
    coeffs.rev().fold(0.0, |acc, c| acc * t + c)
}

/// Spectral filter of `kernel` on the single fiber `x_t` of `family`.
pub fn fiber_filter_at(kernel: &FilterKernel, family: &IntervalFamily, t: f64, index: Option<usize>) -> Result<DMatrix<f64>> {
    let op = family.fiber_at(t)?;
    let e = op.eigen()?;
    let view = FiberView {
        index,
        param: Some(t),
        weight: None,
        eigen: e,
    };
    Ok(spectral_filter(&e.eigenvectors, &kernel.row(&view)?))
}

/// Fits `a_i(t)` so that `sum_i a_i(t) x_t^i` reproduces the kernel's fiber
/// filter at each `t` in `t_fit`.
///
/// At every fit point the fiber multipliers are interpolated by a polynomial
/// of degree `n - 1` in the eigenvalues; each resulting coefficient is then
/// fitted over `t_fit` by a degree-`degree` polynomial (least squares when
/// `t_fit` has more than `degree + 1` points). A table kernel is indexed by
/// position in `t_fit`.
pub fn fit_bipolynomial(
    kernel: &FilterKernel,
    family: &Arc<IntervalFamily>,
    t_fit: &[f64],
    degree: usize,
) -> Result<BiPolynomial> {
    if t_fit.len() < degree + 1 {
        return Err(Error::invalid(format!(
            "need at least {} fit points for degree {degree}, got {}",
            degree + 1,
            t_fit.len()
        )));
    }
    let n = family.dim();
    let mut power_coeffs = DMatrix::zeros(t_fit.len(), n);
    for (k, &t) in t_fit.iter().enumerate() {
        let op = family.fiber_at(t)?;
        let e = op.eigen()?;
        let gap = e.min_gap();
        if gap <= REPEATED_GAP_TOL * (1.0 + e.max_eigenvalue().abs()) {
            return Err(Error::RepeatedEigenvalues { fiber: k, gap });
        }
        let view = FiberView {
            index: Some(k),
            param: Some(t),
            weight: None,
            eigen: e,
        };
        let gamma = kernel.row(&view)?;
        let a = interpolate_in_eigenvalues(&e.eigenvalues, &gamma, k)?;
        power_coeffs.set_row(k, &a.transpose());
    }

    // least squares in t, one column of `power_coeffs` per matrix power
    let design = DMatrix::from_fn(t_fit.len(), degree + 1, |k, s| t_fit[k].powi(s as i32));
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > VANDERMONDE_COND_MAX {
        return Err(Error::IllConditioned {
            condition: smax / smin,
            context: "polynomial fit in t".into(),
        });
    }
    let fitted = svd
        .solve(&power_coeffs, 0.0)
        .map_err(|e| Error::Numerical(format!("least squares in t failed: {e}")))?;
    // fitted is (degree+1) x n; store as n x (degree+1)
    Ok(BiPolynomial {
        coeffs: fitted.transpose(),
        degree,
        family: family.clone(),
    })
}

/// Coefficients `a` with `sum_s a_s lambda_i^s = gamma_i`, solved in the
/// scaled basis `(lambda / s)^k` for conditioning.
fn interpolate_in_eigenvalues(lambda: &DVector<f64>, gamma: &DVector<f64>, fiber: usize) -> Result<DVector<f64>> {
    let n = lambda.len();
    let scale = lambda.amax().max(f64::MIN_POSITIVE);
    let vander = DMatrix::from_fn(n, n, |i, s| (lambda[i] / scale).powi(s as i32));
    let sv = vander.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > VANDERMONDE_COND_MAX {
        return Err(Error::IllConditioned {
            condition: cond,
            context: format!("eigenvalue Vandermonde system at fiber {fiber}"),
        });
    }
    let b = vander
        .lu()
        .solve(gamma)
        .ok_or_else(|| Error::Numerical(format!("singular Vandermonde system at fiber {fiber}")))?;
    Ok(DVector::from_iterator(n, b.iter().enumerate().map(|(s, c)| c / scale.powi(s as i32))))
}

/// `sum_i a_i(t) x_t^i`, Horner in both `t` and the matrix.
pub fn eval_bipolynomial(bp: &BiPolynomial, t: f64) -> Result<DMatrix<f64>> {
    let x = bp.family.fiber_at(t)?;
    let a = bp.power_coefficients(t);
    let n = x.dim();
    let mut acc = DMatrix::zeros(n, n);
    for i in (0..a.len()).rev() {
        acc = &acc * x.matrix();
        for d in 0..n {
            acc[(d, d)] += a[i];
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{compile, DensitySpec, DistributionSpec, QuadratureRule};
    use crate::operator::{laplacian_from_edges, Edge, EdgeList, SymOperator};
    use crate::transform::{forward, inverse, SpectralCoefficients};
    use approx::assert_abs_diff_eq;

    fn p3() -> Arc<SymOperator> {
        let e = EdgeList::new(vec![Edge { u: 0, v: 1, w: 1.0 }, Edge { u: 1, v: 2, w: 1.0 }]);
        Arc::new(laplacian_from_edges(&e, 3).unwrap())
    }

    fn l_2l() -> OperatorEnsemble {
        let l = p3();
        let l2 = Arc::new(SymOperator::new(l.matrix() * 2.0).unwrap());
        compile(&DistributionSpec::Discrete {
            operators: vec![l, l2],
            weights: vec![0.5, 0.5],
        })
        .unwrap()
    }

    /// Two 2x2 fibers whose selected eigenvectors are orthogonal.
    fn rotated_pair() -> OperatorEnsemble {
        let a = Arc::new(SymOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap());
        let b = Arc::new(SymOperator::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).unwrap());
        compile(&DistributionSpec::Discrete {
            operators: vec![a, b],
            weights: vec![0.5, 0.5],
        })
        .unwrap()
    }

    #[test]
    fn all_pass_and_zero() {
        let ens = l_2l();
        let id = convolution_matrix(&FilterKernel::AllPass, &ens).unwrap();
        assert_abs_diff_eq!(id.matrix, DMatrix::identity(3, 3), epsilon = 1e-12);
        let zero = convolution_matrix(&FilterKernel::Table(DMatrix::zeros(2, 3)), &ens).unwrap();
        assert_eq!(zero.matrix, DMatrix::zeros(3, 3));
    }

    #[test]
    fn delta_matches_classical_response() {
        let l = p3();
        let ens = compile(&DistributionSpec::Delta(l.clone())).unwrap();
        let r = SpectralResponse::new(|_, lam| (-lam).exp());
        let got = convolution_matrix(&FilterKernel::Response(r), &ens).unwrap();
        let e = l.eigen().unwrap();
        let want = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|x| (-x).exp())) * e.eigenvectors.transpose();
        assert_abs_diff_eq!(got.matrix, want, epsilon = 1e-12);
    }

    #[test]
    fn lambda_moments() {
        let ens = l_2l();
        let l = p3();
        let m1 = convolution_matrix(&lambda_kernel(&ens), &ens).unwrap();
        assert_abs_diff_eq!(m1.matrix, l.matrix() * 1.5, epsilon = 1e-12);
        let m2 = convolution_matrix(&FilterKernel::Lambda { power: 2 }, &ens).unwrap();
        assert_abs_diff_eq!(m2.matrix, l.matrix() * l.matrix() * 2.5, epsilon = 1e-12);
        let delta = compile(&DistributionSpec::Delta(l.clone())).unwrap();
        let m = convolution_matrix(&FilterKernel::lambda(), &delta).unwrap();
        assert_abs_diff_eq!(m.matrix, l.matrix().clone(), epsilon = 1e-12);
    }

    #[test]
    fn lambda_table_holds_eigenvalues() {
        let ens = l_2l();
        let t = lambda_kernel(&ens).table(&ens).unwrap();
        for (q, f) in ens.fibers().iter().enumerate() {
            assert_eq!(t.row(q).transpose(), f.eigen().unwrap().eigenvalues);
        }
    }

    #[test]
    fn signal_kernel_behaviour() {
        let ens = l_2l();
        let zero = signal_kernel(&Signal::zeros(3), &ens).unwrap();
        assert_eq!(convolution_matrix(&zero, &ens).unwrap().matrix, DMatrix::zeros(3, 3));

        // g whose own transform is the all-ones table: filter equals the all-ones kernel filter
        let ones = SpectralCoefficients::new(DMatrix::from_element(2, 3, 1.0), &ens).unwrap();
        let g = inverse(&ones).unwrap();
        let kg = signal_kernel(&g, &ens).unwrap();
        let derived = FilterKernel::Table(forward(&g, &ens).unwrap().into_table());
        assert_abs_diff_eq!(
            convolution_matrix(&kg, &ens).unwrap().matrix,
            convolution_matrix(&derived, &ens).unwrap().matrix,
            epsilon = 1e-12
        );

        let f = Signal::new(vec![0.3, -1.0, 2.0]).unwrap();
        let direct = convolution_matrix(&kg, &ens).unwrap().apply(&f).unwrap();
        let cg = forward(&g, &ens).unwrap();
        let via = inverse(&forward(&f, &ens).unwrap().multiply(cg.table()).unwrap()).unwrap();
        assert_abs_diff_eq!(direct.into_vector(), via.into_vector(), epsilon = 1e-12);
    }

    #[test]
    fn delta_signal_kernel_is_classical_convolution() {
        let l = p3();
        let ens = compile(&DistributionSpec::Delta(l.clone())).unwrap();
        let g = Signal::new(vec![1.0, 0.5, -0.25]).unwrap();
        let m = convolution_matrix(&signal_kernel(&g, &ens).unwrap(), &ens).unwrap();
        let e = l.eigen().unwrap();
        let ghat = e.eigenvectors.tr_mul(g.values());
        let want = &e.eigenvectors * DMatrix::from_diagonal(&ghat) * e.eigenvectors.transpose();
        assert_abs_diff_eq!(m.matrix, want, epsilon = 1e-12);
    }

    #[test]
    fn band_pass_examples() {
        let l = p3();
        let delta = compile(&DistributionSpec::Delta(l)).unwrap();
        let b = band_pass(&BandSpec::bottom(1), &delta).unwrap();
        assert_abs_diff_eq!(b.matrix, DMatrix::from_element(3, 3, 1.0 / 3.0), epsilon = 1e-12);
        let full = band_pass(&BandSpec::bottom(3), &delta).unwrap();
        assert_abs_diff_eq!(full.matrix, DMatrix::identity(3, 3), epsilon = 1e-12);
        assert!(band_pass(&BandSpec::bottom(4), &delta).is_err());
        assert!(band_pass(&BandSpec::PerFiber(vec![vec![3]]), &delta).is_err());
        let empty = band_pass(&BandSpec::PerFiber(vec![vec![]]), &delta).unwrap();
        assert_eq!(empty.matrix, DMatrix::zeros(3, 3));
    }

    #[test]
    fn mixture_band_pass_is_not_projection() {
        let ens = rotated_pair();
        let b = band_pass(&BandSpec::bottom(1), &ens).unwrap();
        assert_abs_diff_eq!(b.matrix, DMatrix::identity(2, 2) * 0.5, epsilon = 1e-15);
        assert!((&b.matrix * &b.matrix - &b.matrix).amax() > 0.1);
    }

    #[test]
    fn residual_examples() {
        let ens = rotated_pair();
        let b = band_pass(&BandSpec::bottom(1), &ens).unwrap();
        let f = Signal::new(vec![2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(bandlimit_residual(&f, &b).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(bandlimit_residual(&Signal::zeros(2), &b).unwrap(), 0.0);
        let id = ConvolutionFilter {
            matrix: DMatrix::identity(2, 2),
            kernel: None,
        };
        assert_eq!(bandlimit_residual(&f, &id).unwrap(), 0.0);
    }

    fn family6() -> Arc<IntervalFamily> {
        let path = EdgeList::new((0..5).map(|i| Edge { u: i, v: i + 1, w: 1.0 }).collect());
        let other = EdgeList::new(vec![
            Edge { u: 0, v: 2, w: 1.0 },
            Edge { u: 2, v: 4, w: 2.0 },
            Edge { u: 1, v: 3, w: 0.5 },
            Edge { u: 3, v: 5, w: 1.5 },
            Edge { u: 0, v: 5, w: 0.7 },
            Edge { u: 1, v: 4, w: 1.1 },
        ]);
        let l1 = Arc::new(laplacian_from_edges(&path, 6).unwrap());
        let l2 = Arc::new(laplacian_from_edges(&other, 6).unwrap());
        Arc::new(IntervalFamily::new(l1, l2, DensitySpec::Uniform, QuadratureRule::default()).unwrap())
    }

    #[test]
    fn bipolynomial_of_lambda_is_x() {
        let fam = family6();
        let bp = fit_bipolynomial(&FilterKernel::lambda(), &fam, &[0.0, 0.5, 1.0], 0).unwrap();
        let mut want = DMatrix::zeros(6, 1);
        want[(1, 0)] = 1.0;
        assert_abs_diff_eq!(bp.coeffs, want, epsilon = 1e-8);
        let x = fam.fiber_at(0.3).unwrap();
        assert_abs_diff_eq!(eval_bipolynomial(&bp, 0.3).unwrap(), x.matrix().clone(), epsilon = 1e-8);
    }

    #[test]
    fn bipolynomial_square() {
        let fam = family6();
        let bp = fit_bipolynomial(&FilterKernel::Lambda { power: 2 }, &fam, &[0.0, 1.0], 1).unwrap();
        let mut want = DMatrix::zeros(6, 2);
        want[(2, 0)] = 1.0;
        assert_abs_diff_eq!(bp.coeffs, want, epsilon = 1e-7);
    }

    #[test]
    fn bipolynomial_t_times_x_heldout() {
        let fam = family6();
        let k = FilterKernel::Response(SpectralResponse::new(|t, lam| t.unwrap() * lam));
        let bp = fit_bipolynomial(&k, &fam, &[0.0, 0.5, 1.0], 1).unwrap();
        assert_abs_diff_eq!(bp.coeffs[(1, 1)], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(bp.coeffs[(1, 0)], 0.0, epsilon = 1e-8);
        let want = fiber_filter_at(&k, &fam, 0.25, None).unwrap();
        assert_abs_diff_eq!(eval_bipolynomial(&bp, 0.25).unwrap(), want, epsilon = 1e-6);
    }

    #[test]
    fn zero_bipolynomial() {
        let fam = family6();
        let bp = BiPolynomial {
            coeffs: DMatrix::zeros(6, 3),
            degree: 2,
            family: fam,
        };
        assert_eq!(eval_bipolynomial(&bp, 0.7).unwrap(), DMatrix::zeros(6, 6));
        assert!(eval_bipolynomial(&bp, 1.2).is_err());
    }

    #[test]
    fn bipolynomial_rejects_repeated_eigenvalues() {
        let l1 = Arc::new(SymOperator::new(DMatrix::identity(3, 3)).unwrap());
        let fam = Arc::new(IntervalFamily::new(l1.clone(), l1, DensitySpec::Uniform, QuadratureRule::default()).unwrap());
        assert!(matches!(
            fit_bipolynomial(&FilterKernel::lambda(), &fam, &[0.0, 1.0], 1),
            Err(Error::RepeatedEigenvalues { .. })
        ));
        assert!(fit_bipolynomial(&FilterKernel::lambda(), &family6(), &[0.5], 1).is_err());
    }
}
