//! Complex/real stacking, Kronecker expansion and SPD solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
pub use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Real-domain form `[[Re M, -Im M], [Im M, Re M]]` of a complex matrix.
pub fn stack_matrix(m: &CMatrix) -> RMatrix {
    let (r, c) = m.shape();
    let mut out = RMatrix::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Inverse of [`stack_matrix`]; reads the left block column.
pub fn unstack_matrix(m: &RMatrix) -> Result<CMatrix> {
    let (r2, c2) = m.shape();
    if r2 % 2 != 0 || c2 % 2 != 0 {
        return Err(Error::Dimension(format!("{r2}x{c2} is not a stacked shape")));
    }
    let (r, c) = (r2 / 2, c2 / 2);
    Ok(CMatrix::from_fn(r, c, |i, j| C64::new(m[(i, j)], m[(i + r, j)])))
}

/// `[Re v; Im v]`.
pub fn stack_vector(v: &[C64]) -> RVector {
    let n = v.len();
    RVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn unstack_vector(v: &[f64]) -> Result<Vec<C64>> {
    if v.len() % 2 != 0 {
        return Err(Error::Dimension(format!("odd stacked length {}", v.len())));
    }
    let n = v.len() / 2;
    Ok((0..n).map(|i| C64::new(v[i], v[i + n])).collect())
}

/// Column-major vectorization.
pub fn vec_columns(m: &CMatrix) -> Vec<C64> {
    m.as_slice().to_vec()
}

pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::LengthMismatch { left: v.len(), right: rows * cols });
    }
    Ok(CMatrix::from_column_slice(rows, cols, v))
}

/// Stacked real vector of `vec(M)`.
pub fn stack_matrix_as_vector(m: &CMatrix) -> RVector {
    stack_vector(m.as_slice())
}

pub fn unstack_vector_as_matrix(v: &[f64], rows: usize, cols: usize) -> Result<CMatrix> {
    unvec(&unstack_vector(v)?, rows, cols)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Largest absolute difference between `m` and its transpose.
pub fn max_asymmetry(m: &RMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &RMatrix) -> RMatrix {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes and adds `eps * I` with `eps = 1e-9 * trace / dim`.
pub fn regularize(m: &RMatrix) -> RMatrix {
    let mut s = symmetrize(m);
    let n = s.nrows();
    if n == 0 {
        return s;
    }
    let eps = 1e-9 * s.trace().abs() / n as f64;
    for i in 0..n {
        s[(i, i)] += eps;
    }
    s
}

/// Cholesky factor of a symmetric matrix, retrying with growing diagonal
/// loading when the plain factorization fails.
pub fn spd_factor(m: &RMatrix) -> Result<Cholesky<f64, Dyn>> {
    let base = regularize(m);
    if let Some(ch) = Cholesky::new(base.clone()) {
        return Ok(ch);
    }
    let n = base.nrows().max(1);
    let scale = (base.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
    for k in [1e-8, 1e-6, 1e-4] {
        let mut loaded = base.clone();
        for i in 0..base.nrows() {
            loaded[(i, i)] += k * scale;
        }
        if let Some(ch) = Cholesky::new(loaded) {
            return Ok(ch);
        }
    }
    Err(Error::Singular)
}

pub fn spd_inverse(m: &RMatrix) -> Result<RMatrix> {
    Ok(spd_factor(m)?.inverse())
}

/// A real linear map with a transpose, applied without materializing it.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = A v`
    fn apply(&self, v: &[f64], out: &mut [f64]);
    /// `out = A^T g`
    fn apply_transpose(&self, g: &[f64], out: &mut [f64]);
}

impl LinearOperator for RMatrix {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (r, c) = self.shape();
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..c {
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            let col = &self.as_slice()[j * r..(j + 1) * r];
            for (o, a) in out.iter_mut().zip(col) {
                *o += a * vj;
            }
        }
    }

    fn apply_transpose(&self, g: &[f64], out: &mut [f64]) {
        let r = self.nrows();
        for (j, o) in out.iter_mut().enumerate() {
            let col = &self.as_slice()[j * r..(j + 1) * r];
            *o = col.iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }
}
