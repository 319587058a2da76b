use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{domain, Error, Result};

/// Matrices whose eigenvalue ratio exceeds this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// A real symmetric k×k matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Accepts a square matrix that is symmetric up to rounding and stores its
    /// symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return domain(format!("expected a nonempty square matrix, got {}×{}", m.nrows(), m.ncols()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return domain("matrix has non-finite entries");
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 * scale {
            return domain(format!("matrix is not symmetric (max asymmetry {asym:e})"));
        }
        let m = (&m + m.transpose()) * 0.5;
        Ok(Self { m })
    }

    pub fn from_row_major(dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * dim {
            return domain(format!("{} values cannot fill a {dim}×{dim} matrix", values.len()));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, &values))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut values = Vec::with_capacity(dim * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return domain("matrix rows must all have length equal to the row count");
            }
            values.extend_from_slice(r);
        }
        Self::from_row_major(dim, values)
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: DMatrix::zeros(dim, dim) }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self { m: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.m.row(i).iter().copied().collect()).collect()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { m: &self.m * s }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.dim(), other.dim(), "matrix dimension");
        Self { m: &self.m + &other.m }
    }

    pub fn with_ridge(&self, ridge: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..self.dim() {
            m[(i, i)] += ridge;
        }
        Self { m }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let k = self.dim();
        (0..k).map(|i| (0..k).map(|j| self.m[(i, j)] * x[j]).sum()).collect()
    }

    /// xᵀ M x
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let k = self.dim();
        let mut acc = 0.0;
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                row += self.m[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.m.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// Lower Cholesky factor; fails unless positive definite.
    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        self.m
            .clone()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))
    }

    /// Applies `f` to the eigenvalues: V f(Λ) Vᵀ.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let (values, vectors) = self.eigen();
        let mapped = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.into_iter().map(f)));
        let m = &vectors * mapped * vectors.transpose();
        Self { m: (&m + m.transpose()) * 0.5 }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.m.clone().cholesky().is_some()
    }
}

/// Inverse of `m + ridge·I` through its Cholesky factorization.
pub fn sym_inverse(m: &SymMatrix, ridge: f64) -> Result<SymMatrix> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return domain(format!("ridge must be a nonnegative finite number, got {ridge}"));
    }
    let a = m.with_ridge(ridge);
    let (values, _) = a.eigen();
    let lo = values[0];
    let hi = values[values.len() - 1];
    if !(hi > 0.0) || !(lo > 0.0) || hi / lo > CONDITION_LIMIT {
        return Err(Error::Singular(format!(
            "eigenvalues span [{lo:e}, {hi:e}]; condition exceeds {CONDITION_LIMIT:e}"
        )));
    }
    let chol = a
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    let inv = chol.inverse();
    Ok(SymMatrix { m: (&inv + inv.transpose()) * 0.5 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(seed: u64, k: usize) -> SymMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() - 0.5);
        SymMatrix::new(&a * a.transpose() + DMatrix::identity(k, k) * 0.5).unwrap()
    }

    fn residual(m: &SymMatrix, inv: &SymMatrix) -> f64 {
        (m.as_matrix() * inv.as_matrix() - DMatrix::identity(m.dim(), m.dim())).amax()
    }

    #[test]
    fn inverse_trivial_cases() {
        let id = SymMatrix::identity(3);
        assert_eq!(sym_inverse(&id, 0.0).unwrap(), id);
        let d = sym_inverse(&SymMatrix::diagonal(&[2.0, 4.0]), 0.0).unwrap();
        assert!((d.get(0, 0) - 0.5).abs() < 1e-15 && (d.get(1, 1) - 0.25).abs() < 1e-15);
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn inverse_matches_linear_solve_oracle() {
        let m = random_spd(5, 4);
        let inv = sym_inverse(&m, 0.0).unwrap();
        let lu = m.as_matrix().clone().lu();
        for c in 0..4 {
            let mut e = DVector::zeros(4);
            e[c] = 1.0;
            let col = lu.solve(&e).unwrap();
            for r in 0..4 {
                assert!((col[r] - inv.get(r, c)).abs() < 1e-10);
            }
        }
        assert!(residual(&m, &inv) < 1e-10);
    }

    #[test]
    fn singular_and_ridge() {
        let s = SymMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(sym_inverse(&s, 0.0), Err(Error::Singular(_))));
        let r = sym_inverse(&s, 0.1).unwrap();
        assert!(residual(&s.with_ridge(0.1), &r) < 1e-10);
        assert!(matches!(sym_inverse(&SymMatrix::zeros(2), 0.0), Err(Error::Singular(_))));
        assert!(sym_inverse(&SymMatrix::identity(2), -1.0).is_err());
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(SymMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn double_inverse_roundtrip(seed in 0u64..1000, k in 1usize..8) {
            let m = random_spd(seed, k);
            let back = sym_inverse(&sym_inverse(&m, 0.0).unwrap(), 0.0).unwrap();
            let rel = (back.as_matrix() - m.as_matrix()).amax() / m.as_matrix().amax();
            prop_assert!(rel < 1e-8);
        }
    }
}
