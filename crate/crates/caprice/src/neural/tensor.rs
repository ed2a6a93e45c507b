//! Row-major 64-bit float tensors and the few linear-algebra kernels the
//! model needs.

/// Dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must match shape"
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn rank2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "rank-2 tensor required");
        (self.shape[0], self.shape[1])
    }

    pub fn rows(&self) -> usize {
        self.rank2().0
    }

    pub fn cols(&self) -> usize {
        self.rank2().1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (rows, cols) = self.rank2();
        assert!(i < rows);
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let (rows, cols) = self.rank2();
        assert!(i < rows);
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out = xᵀ·W` for a rank-2 `W` of shape `[len(x) × len(out)]`.
pub fn vecmat(x: &[f64], w: &Tensor, out: &mut [f64]) {
    let (rows, cols) = (w.rows(), w.cols());
    assert_eq!(x.len(), rows);
    assert_eq!(out.len(), cols);
    out.fill(0.0);
    for (xi, row) in x.iter().zip(w.data.chunks_exact(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `dx += W·dy` for the same `W` orientation as [`vecmat`].
pub fn add_matvec(w: &Tensor, dy: &[f64], dx: &mut [f64]) {
    let (rows, cols) = (w.rows(), w.cols());
    assert_eq!(dy.len(), cols);
    assert_eq!(dx.len(), rows);
    for (dxi, row) in dx.iter_mut().zip(w.data.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (wij, dyj) in row.iter().zip(dy) {
            acc += wij * dyj;
        }
        *dxi += acc;
    }
}

/// `dW += x ⊗ dy`, the outer-product gradient of [`vecmat`].
pub fn add_outer(dw: &mut Tensor, x: &[f64], dy: &[f64]) {
    let (rows, cols) = (dw.rows(), dw.cols());
    assert_eq!(x.len(), rows);
    assert_eq!(dy.len(), cols);
    for (xi, row) in x.iter().zip(dw.data.chunks_exact_mut(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (wij, dyj) in row.iter_mut().zip(dy) {
            *wij += xi * dyj;
        }
    }
}

/// `a += b` elementwise.
pub fn add_assign(a: &mut [f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (ai, bi) in a.iter_mut().zip(b) {
        *ai += bi;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vecmat_matches_hand_computation() {
        // W = [[1,2,3],[4,5,6]], x = [10, 100]
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = vec![0.0; 3];
        vecmat(&[10.0, 100.0], &w, &mut out);
        assert_eq!(out, vec![410.0, 520.0, 630.0]);
    }

    #[test]
    fn add_matvec_is_the_transpose_action() {
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut dx = vec![0.0; 2];
        add_matvec(&w, &[1.0, 0.0, 1.0], &mut dx);
        assert_eq!(dx, vec![4.0, 10.0]);
    }

    #[test]
    fn add_outer_accumulates() {
        let mut dw = Tensor::zeros(&[2, 2]);
        add_outer(&mut dw, &[1.0, 2.0], &[3.0, 4.0]);
        add_outer(&mut dw, &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(dw.data(), &[6.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn row_views_follow_row_major_layout() {
        let t = Tensor::from_vec(&[2, 3], (0..6).map(f64::from).collect());
        assert_eq!(t.row(0), &[0.0, 1.0, 2.0]);
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
    }
}
