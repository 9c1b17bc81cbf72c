//! Compressed-row storage for P1 operators.

use crate::mesh::Mesh;

/// Row offsets and sorted column indices shared by all operators on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    /// For each triangle, the positions of its 3x3 local entries in `col_indices`.
    element_slots: Vec<[usize; 9]>,
}

impl SparsityPattern {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let n = mesh.n_vertices();
        let mut neighbours: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for t in mesh.triangles() {
            for &a in &t.vertices {
                for &b in &t.vertices {
                    if a != b {
                        neighbours[a].push(b);
                    }
                }
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut row in neighbours {
            row.sort_unstable();
            row.dedup();
            col_indices.extend(row);
            row_offsets.push(col_indices.len());
        }
        let slot = |i: usize, j: usize| -> usize {
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            row_offsets[i] + cols.binary_search(&j).expect("pattern covers element couplings")
        };
        let element_slots = mesh
            .triangles()
            .iter()
            .map(|t| {
                let v = t.vertices;
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = slot(v[a], v[b]);
                    }
                }
                s
            })
            .collect();
        SparsityPattern { row_offsets, col_indices, element_slots }
    }

    pub fn n(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn element_slots(&self, t: usize) -> &[usize; 9] {
        &self.element_slots[t]
    }
}

/// Square CSR matrix. Column indices are strictly increasing within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// All-zero matrix on `pattern`.
    pub fn zeros(pattern: &SparsityPattern, symmetric: bool) -> Self {
        SparseMatrix {
            row_offsets: pattern.row_offsets.clone(),
            col_indices: pattern.col_indices.clone(),
            values: vec![0.0; pattern.nnz()],
            symmetric,
        }
    }

    /// Builds from a dense row-major matrix, keeping nonzero entries and the diagonal.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 || i == j {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        let symmetric = (0..n).all(|i| (0..n).all(|j| rows[i][j] == rows[j][i]));
        SparseMatrix { row_offsets, col_indices, values, symmetric }
    }

    pub fn n(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Whether the matrix is known to equal its transpose.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n());
        assert_eq!(y.len(), self.n());
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            *yi = self.col_indices[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + other` for matrices sharing one sparsity pattern.
    pub fn add(&self, other: &SparseMatrix) -> SparseMatrix {
        assert!(
            self.row_offsets == other.row_offsets && self.col_indices == other.col_indices,
            "matrices must share a sparsity pattern"
        );
        SparseMatrix {
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            symmetric: self.symmetric && other.symmetric,
        }
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n() {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut dense = vec![vec![0.0; n]; n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    /// Splits into the raw parts used by the Dirichlet elimination.
    pub(crate) fn parts_mut(&mut self) -> (&[usize], &[usize], &mut [f64]) {
        (&self.row_offsets, &self.col_indices, &mut self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_interface_mesh, Geometry};

    #[test]
    fn pattern_columns_strictly_increasing() {
        let mesh = generate_interface_mesh(4, &Geometry::centered_box()).unwrap();
        let p = mesh.pattern();
        assert_eq!(p.n(), 25);
        for i in 0..p.n() {
            let cols = &p.col_indices[p.row_offsets[i]..p.row_offsets[i + 1]];
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
            assert!(cols.contains(&i));
        }
        // interior vertices of a one-diagonal grid couple to 6 neighbours
        assert_eq!(p.row_offsets[13] - p.row_offsets[12], 7);
    }

    #[test]
    fn dense_round_trip_and_product() {
        let dense = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 0.0], vec![0.0, 0.0, 4.0]];
        let a = SparseMatrix::from_dense(&dense);
        assert!(a.is_symmetric());
        assert_eq!(a.nnz(), 5);
        assert_eq!(a.to_dense(), dense);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 4.0, 4.0]);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.quadratic_form(&[1.0, 0.0, 1.0]), 6.0);
        assert_eq!(a.asymmetry(), 0.0);
    }
}
