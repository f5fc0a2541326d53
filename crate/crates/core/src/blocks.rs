use nalgebra::{DMatrix, DVector};

/// Sparse `n × n` matrix of dense `d × d` blocks, rows sorted by column.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    n: usize,
    d: usize,
    rows: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl BlockMatrix {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            rows: vec![Vec::new(); n],
        }
    }

    /// `I` on every diagonal block.
    pub fn identity(n: usize, d: usize) -> Self {
        let mut m = Self::new(n, d);
        for i in 0..n {
            m.insert(i, i, DMatrix::identity(d, d));
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    /// Stores `block` at `(i, j)`, replacing any previous block.
    pub fn insert(&mut self, i: usize, j: usize, block: DMatrix<f64>) {
        assert_eq!(block.shape(), (self.d, self.d), "block has the wrong shape");
        assert!(i < self.n && j < self.n, "block index out of range");
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |(k, _)| *k) {
            Ok(pos) => row[pos].1 = block,
            Err(pos) => row.insert(pos, (j, block)),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |(k, _)| *k).ok().map(|pos| &row[pos].1)
    }

    /// The stored block, or zeros.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.get(i, j)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.d, self.d))
    }

    pub fn row(&self, i: usize) -> &[(usize, DMatrix<f64>)] {
        &self.rows[i]
    }

    /// Stored `(i, j)` pairs in row-major order.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |(j, _)| (i, *j)))
    }

    pub fn nnz_blocks(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = self · x`.
    pub fn mul_vec_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        assert_eq!(x.len(), self.dim());
        let d = self.d;
        y.fill(0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let mut yi = y.rows_mut(i * d, d);
            for (j, block) in row {
                yi.gemv(1.0, block, &x.rows(j * d, d), 1.0);
            }
        }
    }

    /// `selfᵀ · x`.
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim());
        let d = self.d;
        let mut y = DVector::zeros(self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, block) in row {
                y.rows_mut(j * d, d).gemv_tr(1.0, block, &x.rows(i * d, d), 1.0);
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::new(self.n, self.d);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, block) in row {
                t.insert(*j, i, block.transpose());
            }
        }
        t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.d;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, block) in row {
                m.view_mut((i * d, j * d), (d, d)).copy_from(block);
            }
        }
        m
    }

    /// Largest `|A_ij - A_jiᵀ|` entry over all block pairs.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for (j, block) in row {
                let other = self.block(*j, i);
                worst = worst.max((block - other.transpose()).amax());
            }
        }
        worst
    }
}
