//! Thin dense linear algebra layer over the system LAPACK (OpenBLAS).
//!
//! The solver only needs three factorizations: LU with partial pivoting for
//! Newton steps and tangent computations, and singular values for rank
//! diagnostics. Matrices are stored column-major so they can be handed to
//! LAPACK without copies.

use crate::error::{Error, Result};

extern "C" {
    fn dgetrf_(
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        ipiv: *mut i32,
        info: *mut i32,
    );
    fn dgetrs_(
        trans: *const u8,
        n: *const i32,
        nrhs: *const i32,
        a: *const f64,
        lda: *const i32,
        ipiv: *const i32,
        b: *mut f64,
        ldb: *const i32,
        info: *mut i32,
    );
    fn dgesdd_(
        jobz: *const u8,
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        s: *mut f64,
        u: *mut f64,
        ldu: *const i32,
        vt: *mut f64,
        ldvt: *const i32,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        info: *mut i32,
    );
}

/// Dense column-major matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[c * self.rows + r]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// y = A x (no aliasing).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.cols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            let col = &self.data[c * self.rows..(c + 1) * self.rows];
            for (yi, aij) in y.iter_mut().zip(col) {
                *yi += aij * xc;
            }
        }
    }
}

/// LU factorization of a square matrix (LAPACK `dgetrf`).
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    ipiv: Vec<i32>,
}

impl LuFactors {
    /// Factorizes in place, consuming the matrix storage.
    pub fn new(mat: Mat) -> Result<Self> {
        if mat.rows != mat.cols {
            return Err(Error::Linalg(format!(
                "LU needs a square matrix, got {}x{}",
                mat.rows, mat.cols
            )));
        }
        let n = mat.rows;
        let mut lu = mat.data;
        let mut ipiv = vec![0i32; n.max(1)];
        let mut info = 0i32;
        let ni = n as i32;
        unsafe {
            dgetrf_(&ni, &ni, lu.as_mut_ptr(), &ni, ipiv.as_mut_ptr(), &mut info);
        }
        if info < 0 {
            return Err(Error::Linalg(format!("dgetrf: illegal argument {}", -info)));
        }
        if info > 0 {
            return Err(Error::Linalg(format!(
                "dgetrf: exactly singular at pivot {}",
                info
            )));
        }
        Ok(LuFactors { n, lu, ipiv })
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        assert_eq!(b.len(), self.n);
        let mut info = 0i32;
        let ni = self.n as i32;
        let one = 1i32;
        let trans = b'N';
        unsafe {
            dgetrs_(
                &trans,
                &ni,
                &one,
                self.lu.as_ptr(),
                &ni,
                self.ipiv.as_ptr(),
                b.as_mut_ptr(),
                &ni,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Linalg(format!("dgetrs: info {}", info)));
        }
        Ok(())
    }
}

/// Singular values of an arbitrary dense matrix, descending (LAPACK `dgesdd`).
pub fn singular_values(mat: &Mat) -> Result<Vec<f64>> {
    let m = mat.rows as i32;
    let n = mat.cols as i32;
    let k = mat.rows.min(mat.cols);
    let mut a = mat.data.clone();
    let mut s = vec![0.0f64; k.max(1)];
    let mut iwork = vec![0i32; 8 * k.max(1)];
    let mut info = 0i32;
    let jobz = b'N';
    let ldu = 1i32;
    let ldvt = 1i32;
    let mut u = [0.0f64; 1];
    let mut vt = [0.0f64; 1];

    // workspace query
    let mut work_query = [0.0f64; 1];
    let lwork_query = -1i32;
    unsafe {
        dgesdd_(
            &jobz,
            &m,
            &n,
            a.as_mut_ptr(),
            &m,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldu,
            vt.as_mut_ptr(),
            &ldvt,
            work_query.as_mut_ptr(),
            &lwork_query,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("dgesdd workspace query: {}", info)));
    }
    let lwork = work_query[0] as i32;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            &jobz,
            &m,
            &n,
            a.as_mut_ptr(),
            &m,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldu,
            vt.as_mut_ptr(),
            &ldvt,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("dgesdd: info {}", info)));
    }
    Ok(s)
}

/// Right singular vector for the smallest singular value: the null-ish
/// direction of a rows < cols matrix.
pub fn svd_null_vector(mat: &Mat) -> Result<Vec<f64>> {
    let m = mat.rows as i32;
    let n = mat.cols as i32;
    let k = mat.rows.min(mat.cols);
    let mut a = mat.data.clone();
    let mut s = vec![0.0f64; k.max(1)];
    let mut u = vec![0.0f64; (mat.rows * mat.rows).max(1)];
    let mut vt = vec![0.0f64; (mat.cols * mat.cols).max(1)];
    let mut iwork = vec![0i32; 8 * k.max(1)];
    let mut info = 0i32;
    let jobz = b'A';
    let ldu = m.max(1);
    let ldvt = n.max(1);

    let mut work_query = [0.0f64; 1];
    let lwork_query = -1i32;
    unsafe {
        dgesdd_(
            &jobz,
            &m,
            &n,
            a.as_mut_ptr(),
            &m,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldu,
            vt.as_mut_ptr(),
            &ldvt,
            work_query.as_mut_ptr(),
            &lwork_query,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("dgesdd workspace query: {}", info)));
    }
    let lwork = work_query[0] as i32;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            &jobz,
            &m,
            &n,
            a.as_mut_ptr(),
            &m,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldu,
            vt.as_mut_ptr(),
            &ldvt,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("dgesdd: info {}", info)));
    }
    // last row of VT (column-major, ldvt = n): entries vt[(n-1) + c*n]
    let last = (mat.cols - 1) as usize;
    let out: Vec<f64> = (0..mat.cols).map(|c| vt[last + c * mat.cols]).collect();
    Ok(out)
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_roundtrip() {
        let mut m = Mat::zeros(3, 3);
        let vals = [[4.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.5, -1.0, 5.0]];
        for r in 0..3 {
            for c in 0..3 {
                *m.at_mut(r, c) = vals[r][c];
            }
        }
        let x_true = [1.0, -2.0, 0.25];
        let mut b = vec![0.0; 3];
        m.matvec(&x_true, &mut b);
        let lu = LuFactors::new(m).unwrap();
        lu.solve_in_place(&mut b).unwrap();
        for (xi, ti) in b.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_of_rank_one() {
        let mut m = Mat::zeros(2, 3);
        for c in 0..3 {
            *m.at_mut(0, c) = 2.0;
            *m.at_mut(1, c) = 2.0;
        }
        let s = singular_values(&m).unwrap();
        assert!((s[0] - (24.0f64).sqrt()).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12);
    }
}
