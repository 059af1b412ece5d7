//! Deterministic synthetic fixtures: lattice and random geometric graphs,
//! k-NN candidate families, and bandlimited or white signals.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Coordinates;
use crate::operator::{Edge, EdgeList, Signal, SymOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a named stage from a master seed.
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stage);
    r.random()
}

fn grid_coords(rows: usize, cols: usize) -> Coordinates {
    let mut ids = Vec::with_capacity(rows * cols);
    let mut points = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            ids.push((r * cols + c).to_string());
            points.push(vec![c as f64, r as f64]);
        }
    }
    Coordinates { ids, points }
}

/// `rows x cols` grid with unit-weight 4-neighbour edges; vertex
/// `r * cols + c` sits at `(c, r)`.
pub fn lattice(rows: usize, cols: usize) -> Result<(EdgeList, Coordinates)> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("lattice dimensions must be positive"));
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push(Edge { u: i, v: i + 1, w: 1.0 });
            }
            if r + 1 < rows {
                edges.push(Edge { u: i, v: i + cols, w: 1.0 });
            }
        }
    }
    Ok((EdgeList::new(edges), grid_coords(rows, cols)))
}

/// Grid points displaced uniformly by up to `jitter` in each coordinate.
pub fn jittered_lattice_coords(rows: usize, cols: usize, jitter: f64, seed: u64) -> Result<Coordinates> {
    if rows == 0 || cols == 0 || !(jitter >= 0.0) {
        return Err(Error::invalid("lattice dimensions must be positive and jitter >= 0"));
    }
    let mut r = rng(seed);
    let mut c = grid_coords(rows, cols);
    if jitter > 0.0 {
        for p in &mut c.points {
            for x in p.iter_mut() {
                *x += r.random_range(-jitter..=jitter);
            }
        }
    }
    Ok(c)
}

/// `n` uniform points in the unit square, joined with unit weight when closer
/// than `radius`.
pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<(EdgeList, Coordinates)> {
    if n == 0 || !(radius > 0.0) {
        return Err(Error::invalid("random geometric graph needs n > 0 and radius > 0"));
    }
    let mut r = rng(seed);
    let points: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < radius * radius {
                edges.push(Edge { u: i, v: j, w: 1.0 });
            }
        }
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    Ok((EdgeList::new(edges), Coordinates { ids, points }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalModel {
    /// `offset + sum_{i < band} a_i v_i + noise`, with `a_i ~ N(0, scale^2)`
    /// and i.i.d. `N(0, noise^2)` per vertex.
    Bandlimited {
        band: usize,
        scale: f64,
        noise: f64,
        #[serde(default)]
        offset: f64,
    },
    /// i.i.d. `N(0, scale^2)` per vertex.
    Random { scale: f64 },
}

/// `count` signals drawn from `model`, using the eigenvectors of `reference`
/// for bandlimited models.
pub fn signals(model: &SignalModel, reference: &SymOperator, count: usize, rng: &mut impl Rng) -> Result<Vec<Signal>> {
    let n = reference.dim();
    match *model {
        SignalModel::Bandlimited {
            band,
            scale,
            noise,
            offset,
        } => {
            if band == 0 || band > n {
                return Err(Error::invalid(format!("signal band {band} outside [1, {n}]")));
            }
            if !(noise >= 0.0) || !(scale >= 0.0) {
                return Err(Error::invalid("signal scale and noise must be >= 0"));
            }
            let v = &reference.eigen()?.eigenvectors;
            let coef = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
            let eps = Normal::new(0.0, noise).map_err(|e| Error::invalid(e.to_string()))?;
            (0..count)
                .map(|_| {
                    let a = DVector::from_fn(band, |_, _| coef.sample(rng));
                    let mut f = v.columns(0, band) * a;
                    for x in f.iter_mut() {
                        *x += offset + eps.sample(rng);
                    }
                    Signal::from_vector(f)
                })
                .collect()
        }
        SignalModel::Random { scale } => {
            let d = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
            (0..count)
                .map(|_| Signal::from_vector(DVector::from_fn(n, |_, _| d.sample(rng))))
                .collect()
        }
    }
}
