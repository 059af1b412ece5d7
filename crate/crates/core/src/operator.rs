//! Vertex sets, signals, symmetric PSD operators and their eigensystems.
//!
//! Every operator caches one eigendecomposition. The eigensystem is sorted by
//! ascending eigenvalue and each eigenvector carries a fixed sign: the entry
//! of largest magnitude is positive, with the lowest index winning ties.
//! Two decompositions of equal matrices are therefore bit-identical.

use std::collections::HashSet;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative symmetry tolerance accepted by [`SymOperator::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance on negative eigenvalues for the PSD check.
pub const PSD_TOL: f64 = 1e-8;
/// Entries within this relative distance of the column maximum count as tied
/// for the sign convention.
const SIGN_TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSet {
    labels: Vec<String>,
}

impl VertexSet {
    /// Vertex set labelled `"0".."n-1"`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("vertex set must be nonempty"));
        }
        Ok(Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
        })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("vertex set must be nonempty"));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid(format!("duplicate vertex label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A real-valued function on the vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: DVector<f64>,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("signal must be nonempty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("signal value at vertex {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::dim(format!("signal has {} entries, expected {n}", self.len())));
        }
        Ok(())
    }
}

/// Fixed sign rule applied to every eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    LargestEntryPositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    pub sign_convention: SignConvention,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// Smallest gap between consecutive eigenvalues, or `inf` for n = 1.
    pub fn min_gap(&self) -> f64 {
        self.eigenvalues
            .as_slice()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Symmetric operator on the vertex set with a lazily cached eigensystem.
#[derive(Debug)]
pub struct SymOperator {
    matrix: DMatrix<f64>,
    label: String,
    eigen: OnceLock<EigenSystem>,
}

impl Clone for SymOperator {
    fn clone(&self) -> Self {
        let eigen = OnceLock::new();
        if let Some(e) = self.eigen.get() {
            let _ = eigen.set(e.clone());
        }
        Self {
            matrix: self.matrix.clone(),
            label: self.label.clone(),
            eigen,
        }
    }
}

impl SymOperator {
    /// Validates symmetry and positive semi-definiteness. The eigensystem
    /// computed for the PSD check is cached.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_label(matrix, "<unnamed>")
    }

    pub fn with_label(matrix: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let op = Self::new_indefinite(matrix, label)?;
        op.check_psd()?;
        Ok(op)
    }

    /// Skips the PSD check, e.g. for adjacency matrices supplied as raw
    /// operators. Symmetry is still enforced.
    pub fn new_indefinite(matrix: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if !matrix.is_square() {
            return Err(Error::dim(format!(
                "operator {label} is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() == 0 {
            return Err(Error::invalid(format!("operator {label} is empty")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("operator {label} has non-finite entries")));
        }
        let scale = 1.0 + matrix.amax();
        let asymmetry = (&matrix - matrix.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { label, asymmetry });
        }
        Ok(Self::trusted(symmetrize(matrix), label))
    }

    /// Builds an operator known to be symmetric PSD (e.g. a convex
    /// combination of validated operators). Nothing is decomposed until asked.
    pub(crate) fn trusted(matrix: DMatrix<f64>, label: impl Into<String>) -> Self {
        Self {
            matrix,
            label: label.into(),
            eigen: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Cached eigensystem; computed on first use.
    pub fn eigen(&self) -> Result<&EigenSystem> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let computed = compute_eigensystem(&self.matrix, &self.label)?;
        // Another thread may have won the race with an identical result.
        let _ = self.eigen.set(computed);
        Ok(self.eigen.get().expect("eigensystem just set"))
    }

    fn check_psd(&self) -> Result<()> {
        let e = self.eigen()?;
        let min = e.eigenvalues[0];
        if min < -PSD_TOL * (1.0 + e.max_eigenvalue().max(0.0)) {
            return Err(Error::NotPsd {
                label: self.label.clone(),
                min_eigenvalue: min,
            });
        }
        Ok(())
    }

    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        f.check_len(self.dim())?;
        Ok(Signal {
            values: &self.matrix * f.values(),
        })
    }
}

/// Eigendecomposition of `op`, cached on the operator.
pub fn eigendecompose(op: &SymOperator) -> Result<&EigenSystem> {
    op.eigen()
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Dense symmetric eigensolve followed by sorting and the sign rule.
pub(crate) fn compute_eigensystem(matrix: &DMatrix<f64>, label: &str) -> Result<EigenSystem> {
    let n = matrix.nrows();
    let se = SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or_else(|| Error::NoConvergence(label.to_string()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]).then(a.cmp(&b)));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| se.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = se.eigenvectors.column(src).clone_owned();
        apply_sign_rule(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        sign_convention: SignConvention::LargestEntryPositive,
    })
}

/// Makes the (lowest-index) largest-magnitude entry positive.
pub(crate) fn apply_sign_rule(col: &mut DVector<f64>) {
    let max = col.amax();
    if max == 0.0 {
        return;
    }
    let pivot = col
        .iter()
        .position(|v| v.abs() >= max * (1.0 - SIGN_TIE_TOL))
        .expect("amax attained");
    if col[pivot] < 0.0 {
        col.neg_mut();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Undirected weighted edge list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeList {
    pub edges: Vec<Edge>,
}

impl EdgeList {
    pub fn new(edges: Vec<Edge>) -> Self {
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (row, e) in self.edges.iter().enumerate() {
            if e.u >= n || e.v >= n {
                return Err(Error::invalid(format!(
                    "edge {row} ({}, {}) has a vertex index outside [0, {n})",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::invalid(format!("edge {row} is a self loop on {}", e.u)));
            }
            if !(e.w > 0.0) || !e.w.is_finite() {
                return Err(Error::invalid(format!("edge {row} has non-positive weight {}", e.w)));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::invalid(format!("duplicate edge ({}, {})", e.u, e.v)));
            }
        }
        Ok(())
    }

    /// Unordered pairs `(min, max)` in stored order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.u.min(e.v), e.u.max(e.v))).collect()
    }
}

/// Combinatorial Laplacian `D - W`.
pub fn laplacian_from_edges(edges: &EdgeList, n: usize) -> Result<SymOperator> {
    if n == 0 {
        return Err(Error::invalid("vertex count must be positive"));
    }
    edges.validate(n)?;
    let mut l = DMatrix::zeros(n, n);
    for e in &edges.edges {
        l[(e.u, e.v)] -= e.w;
        l[(e.v, e.u)] -= e.w;
        l[(e.u, e.u)] += e.w;
        l[(e.v, e.v)] += e.w;
    }
    Ok(SymOperator::trusted(l, "laplacian"))
}

/// Edge weight rule for [`knn_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum KnnWeights {
    #[default]
    Unit,
    /// `exp(-dist^2 / sigma^2)`
    Gaussian { sigma: f64 },
}

/// Symmetrized (union) k-nearest-neighbour graph under Euclidean distance.
/// Distance ties are broken by lower vertex index.
pub fn knn_graph(coords: &[Vec<f64>], k: usize, weights: KnnWeights) -> Result<EdgeList> {
    let n = coords.len();
    if n < 2 || k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} out of range for {n} points (need 1 <= k < n)")));
    }
    let d = coords[0].len();
    if coords.iter().any(|p| p.len() != d) {
        return Err(Error::dim("points have inconsistent dimension"));
    }
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite coordinate"));
    }
    if let KnnWeights::Gaussian { sigma } = weights {
        if !(sigma > 0.0) {
            return Err(Error::invalid("gaussian weight bandwidth must be positive"));
        }
    }

    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut adjacent = vec![vec![false; n]; n];
    let mut d2 = vec![vec![0.0; n]; n];
    for u in 0..n {
        for v in (u + 1)..n {
            let dd = dist2(&coords[u], &coords[v]);
            if dd == 0.0 {
                return Err(Error::invalid(format!("points {u} and {v} coincide")));
            }
            d2[u][v] = dd;
            d2[v][u] = dd;
        }
    }
    for u in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&v| v != u).collect();
        others.sort_by(|&a, &b| d2[u][a].total_cmp(&d2[u][b]).then(a.cmp(&b)));
        for &v in &others[..k] {
            adjacent[u][v] = true;
            adjacent[v][u] = true;
        }
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if adjacent[u][v] {
                let w = match weights {
                    KnnWeights::Unit => 1.0,
                    KnnWeights::Gaussian { sigma } => (-d2[u][v] / (sigma * sigma)).exp(),
                };
                // exp underflow would violate the positive-weight invariant
                if w > 0.0 {
                    edges.push(Edge { u, v, w });
                }
            }
        }
    }
    Ok(EdgeList { edges })
}
