use crate::error::{Error, Result};

/// Exact (brute-force) Euclidean nearest-neighbour index over action rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    dim: usize,
    rows: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub index: usize,
    pub distance: f64,
}

/// Builds an index over a row-major `n x dim` matrix.
pub fn build_knn_index(actions: &[f64], dim: usize) -> Result<KnnIndex> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if actions.is_empty() {
        return Err(Error::invalid("cannot index an empty matrix"));
    }
    if !actions.len().is_multiple_of(dim) {
        return Err(Error::invalid("matrix length is not a multiple of dim"));
    }
    if actions.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("indexed actions must be finite"));
    }
    Ok(KnnIndex {
        dim,
        rows: actions.to_vec(),
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// The `k` nearest rows, ordered by distance and then by row index.
    pub fn query(&self, q: &[f64], k: usize) -> Result<Vec<Neighbour>> {
        if q.len() != self.dim {
            return Err(Error::invalid(format!(
                "query has {} entries, index has dim {}",
                q.len(),
                self.dim
            )));
        }
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        let mut scored: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| (squared_distance(row, q), i))
            .collect();
        let k = k.min(scored.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(d2, index)| Neighbour {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    pub fn nearest(&self, q: &[f64]) -> Result<Neighbour> {
        Ok(self.query(q, 1)?[0])
    }
}
