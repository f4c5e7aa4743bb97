//! Information-filtering network: TMFG construction and LoGo sparse
//! precision matrices.
//!
//! The TMFG (triangulated maximally filtered graph) is a planar-maximal
//! chordal graph with 3n−6 edges built greedily: seed with the
//! maximum-weight 4-clique, then repeatedly insert the vertex with the
//! largest similarity gain into a triangular face. The LoGo inversion sums
//! embedded inverses of the 4-clique submatrices of a covariance and
//! subtracts the inverses of the 3-clique separators, yielding a precision
//! matrix supported on the graph edges — exact whenever the true precision
//! is Markov with respect to the graph.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Triangulated maximally filtered graph over `n` vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmfgGraph {
    pub n: usize,
    /// Unordered vertex pairs stored as (min, max).
    pub edges: BTreeSet<(usize, usize)>,
    /// Insertion cliques: the seed (4 vertices, or 3 when n = 3) followed by
    /// one 4-clique per inserted vertex.
    pub cliques: Vec<Vec<usize>>,
    /// One triangular separator per insertion (the face the vertex went into).
    pub separators: Vec<[usize; 3]>,
}

impl TmfgGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Debug dump of the edge list as `i,j` rows.
    pub fn write_edges(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "i,j")?;
        for (i, j) in &self.edges {
            writeln!(f, "{i},{j}")?;
        }
        Ok(())
    }
}

fn validate_similarity(similarity: &DMatrix<f64>) -> Result<usize> {
    let n = similarity.nrows();
    if similarity.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "similarity matrix is {}x{}, expected square",
            similarity.nrows(),
            similarity.ncols()
        )));
    }
    if n < 3 {
        return Err(Error::GraphTooSmall(n));
    }
    for i in 0..n {
        for j in 0..n {
            if !similarity[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    Ok(n)
}

/// Greedy TMFG construction on a symmetric similarity matrix.
///
/// Ties break toward the lowest vertex index, then the earliest face in
/// insertion order, so the result is deterministic.
pub fn build_tmfg(similarity: &DMatrix<f64>) -> Result<TmfgGraph> {
    let n = validate_similarity(similarity)?;
    let s = |i: usize, j: usize| 0.5 * (similarity[(i, j)] + similarity[(j, i)]);

    let mut edges = BTreeSet::new();
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    let mut separators: Vec<[usize; 3]> = Vec::new();

    if n == 3 {
        edges.insert((0, 1));
        edges.insert((0, 2));
        edges.insert((1, 2));
        cliques.push(vec![0, 1, 2]);
        return Ok(TmfgGraph {
            n,
            edges,
            cliques,
            separators,
        });
    }

    // Seed: the maximum-weight 4-clique by exhaustive enumeration
    // (lexicographically first on ties).
    let mut best: Option<([usize; 4], f64)> = None;
    for a in 0..n {
        for b in (a + 1)..n {
            let sab = s(a, b);
            for c in (b + 1)..n {
                let sac = s(a, c) + s(b, c);
                for e in (c + 1)..n {
                    let w = sab + sac + s(a, e) + s(b, e) + s(c, e);
                    if best.map_or(true, |(_, bw)| w > bw) {
                        best = Some(([a, b, c, e], w));
                    }
                }
            }
        }
    }
    let (seed, _) = best.expect("n >= 4 guarantees a seed clique");
    for i in 0..4 {
        for j in (i + 1)..4 {
            edges.insert((seed[i].min(seed[j]), seed[i].max(seed[j])));
        }
    }
    cliques.push(seed.to_vec());
    let mut faces: Vec<[usize; 3]> = vec![
        [seed[0], seed[1], seed[2]],
        [seed[0], seed[1], seed[3]],
        [seed[0], seed[2], seed[3]],
        [seed[1], seed[2], seed[3]],
    ];

    let mut remaining: Vec<usize> = (0..n).filter(|v| !seed.contains(v)).collect();
    while !remaining.is_empty() {
        let mut best_gain = f64::NEG_INFINITY;
        let mut best_pair: Option<(usize, usize)> = None; // (remaining idx, face idx)
        for (ri, &v) in remaining.iter().enumerate() {
            for (fi, f) in faces.iter().enumerate() {
                let gain = s(v, f[0]) + s(v, f[1]) + s(v, f[2]);
                if gain > best_gain {
                    best_gain = gain;
                    best_pair = Some((ri, fi));
                }
            }
        }
        let (ri, fi) = best_pair.expect("non-empty remaining and faces");
        let v = remaining.remove(ri);
        let face = faces.swap_remove(fi);
        for &u in &face {
            edges.insert((v.min(u), v.max(u)));
        }
        let mut clique = vec![v, face[0], face[1], face[2]];
        clique.sort_unstable();
        cliques.push(clique);
        let mut sep = face;
        sep.sort_unstable();
        separators.push(sep);
        faces.push([v, face[0], face[1]]);
        faces.push([v, face[0], face[2]]);
        faces.push([v, face[1], face[2]]);
    }

    debug_assert_eq!(edges.len(), 3 * n - 6);
    Ok(TmfgGraph {
        n,
        edges,
        cliques,
        separators,
    })
}

/// Sparse precision matrix with support restricted to TMFG edges plus the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePrecision {
    pub matrix: DMatrix<f64>,
    pub support: BTreeSet<(usize, usize)>,
}

impl SparsePrecision {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest absolute entry outside the support (diagnostic; zero by
    /// construction).
    pub fn off_support_max(&self) -> f64 {
        let n = self.dim();
        let mut max = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                if !self.support.contains(&(i, j)) {
                    max = max.max(self.matrix[(i, j)].abs());
                }
            }
        }
        max
    }
}

fn invert_submatrix(
    cov: &DMatrix<f64>,
    vertices: &[usize],
    ridge: f64,
    kind: &'static str,
) -> Result<DMatrix<f64>> {
    let m = vertices.len();
    let sub = DMatrix::from_fn(m, m, |a, b| cov[(vertices[a], vertices[b])]);
    if let Some(inv) = sub.clone().try_inverse() {
        if inv.iter().all(|x| x.is_finite()) {
            return Ok(inv);
        }
    }
    // Locally constant (imputed) rows can make a submatrix singular; retry
    // once with a small ridge before giving up.
    let ridged = &sub + DMatrix::identity(m, m) * ridge;
    match ridged.try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => Ok(inv),
        _ => Err(Error::SingularSubmatrix {
            kind,
            vertices: vertices.to_vec(),
        }),
    }
}

/// LoGo inversion: precision = Σ_cliques embed(inv(cov[C,C])) −
/// Σ_separators embed(inv(cov[S,S])).
pub fn logo_precision(covariance: &DMatrix<f64>, graph: &TmfgGraph) -> Result<SparsePrecision> {
    let n = graph.n;
    if covariance.nrows() != n || covariance.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "covariance is {}x{}, graph has {} vertices",
            covariance.nrows(),
            covariance.ncols(),
            n
        )));
    }
    for i in 0..n {
        for j in 0..n {
            if !covariance[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    let ridge = 1e-8 * covariance.trace() / n as f64;
    let mut precision = DMatrix::zeros(n, n);
    for clique in &graph.cliques {
        let inv = invert_submatrix(covariance, clique, ridge, "clique")?;
        for (a, &i) in clique.iter().enumerate() {
            for (b, &j) in clique.iter().enumerate() {
                precision[(i, j)] += inv[(a, b)];
            }
        }
    }
    for sep in &graph.separators {
        let inv = invert_submatrix(covariance, sep, ridge, "separator")?;
        for (a, &i) in sep.iter().enumerate() {
            for (b, &j) in sep.iter().enumerate() {
                precision[(i, j)] -= inv[(a, b)];
            }
        }
    }
    // Kill rounding asymmetry from the LU inversions.
    let symmetric = (&precision + precision.transpose()) * 0.5;
    Ok(SparsePrecision {
        matrix: symmetric,
        support: graph.edges.clone(),
    })
}

/// Natural log determinant of a positive-definite precision matrix via
/// Cholesky factorization.
pub fn log_det(precision: &SparsePrecision) -> Result<f64> {
    log_det_matrix(&precision.matrix)
}

pub(crate) fn log_det_matrix(matrix: &DMatrix<f64>) -> Result<f64> {
    let chol = matrix
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("log_det"))?;
    let l = chol.l();
    Ok(2.0 * (0..matrix.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}
