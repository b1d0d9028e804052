//! Dense small-matrix numerics: exponentials, eigenvalues, norms, Kronecker
//! products, Stein-equation solving and positive-(semi)definiteness tests.
//!
//! Everything here targets small dense systems (n <= 20); robustness is
//! preferred over speed throughout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::num;

/// Iteration cap for the polynomial eigenvalue solver.
const EIG_MAX_ITER: usize = 500;

/// Dense real matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged row lengths".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// x^T A y for column vectors x, y.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(self.rows, x.len());
        debug_assert_eq!(self.cols, y.len());
        let mut acc = 0.0;
        for i in 0..self.rows {
            let mut row = 0.0;
            for j in 0..self.cols {
                row += self.get(i, j) * y[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// A*x for a column vector x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.cols, x.len());
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Max absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(num::abs(*v)))
    }

    /// Induced 1-norm (max column sum).
    pub fn one_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                s += num::abs(self.get(i, j));
            }
            best = best.max(s);
        }
        best
    }

    pub fn frobenius_norm(&self) -> f64 {
        num::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    fn check_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{op}: shape {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn check_square(&self, op: &str) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "{op}: requires a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// Kronecker product, (m*p)x(n*q).
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out.set(i * b.rows + k, j * b.cols + l, aij * b.get(k, l));
                }
            }
        }
    }
    out
}

/// Matrix exponential via scaling-and-squaring with a truncated Taylor core.
///
/// The argument is scaled until its 1-norm is at most 0.5, the series is
/// summed until terms fall below machine precision, then the result is
/// repeatedly squared.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    a.check_square("expm")?;
    let n = a.rows;
    let norm = a.one_norm();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a.scale(scale);

    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=24 {
        term = term.mul(&scaled)?.scale(1.0 / k as f64);
        result = result.add(&term)?;
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.mul(&result)?;
    }
    Ok(result)
}

/// Solve A x = b in place via LU with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    a.check_square("lu_solve")?;
    let n = a.rows;
    if b.len() != n {
        return Err(Error::Dimension("lu_solve: rhs length mismatch".into()));
    }
    let mut lu = a.data.clone();
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let mut pivot = k;
        let mut best = num::abs(lu[perm[k] * n + k]);
        for i in (k + 1)..n {
            let v = num::abs(lu[perm[i] * n + k]);
            if v > best {
                best = v;
                pivot = i;
            }
        }
        if best < 1e-300 {
            return Err(Error::Singular(format!(
                "pivot {best:.3e} at column {k} during LU factorization"
            )));
        }
        perm.swap(k, pivot);
        let pk = perm[k];
        for i in (k + 1)..n {
            let pi = perm[i];
            let f = lu[pi * n + k] / lu[pk * n + k];
            lu[pi * n + k] = f;
            for j in (k + 1)..n {
                lu[pi * n + j] -= f * lu[pk * n + j];
            }
        }
    }

    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = x[perm[i]];
        for j in 0..i {
            acc -= lu[perm[i] * n + j] * y[j];
        }
        y[i] = acc;
    }
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in (i + 1)..n {
            acc -= lu[perm[i] * n + j] * x[j];
        }
        x[i] = acc / lu[perm[i] * n + i];
    }
    Ok(x)
}

/// Matrix inverse via column-wise LU solves.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    a.check_square("inverse")?;
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = lu_solve(a, &e)?;
        e[j] = 0.0;
        for i in 0..n {
            out.set(i, j, col[i]);
        }
    }
    Ok(out)
}

/// Characteristic polynomial coefficients (monic, highest degree first)
/// via the Faddeev-LeVerrier recursion.
fn char_poly(a: &Matrix) -> Vec<f64> {
    let n = a.rows;
    let mut coeffs = vec![1.0];
    let mut m = Matrix::identity(n);
    let mut c = 1.0;
    for k in 1..=n {
        if k > 1 {
            m = a.mul(&m).expect("square product");
            for i in 0..n {
                let v = m.get(i, i) + c;
                m.set(i, i, v);
            }
        }
        let am = a.mul(&m).expect("square product");
        let trace: f64 = (0..n).map(|i| am.get(i, i)).sum();
        c = -trace / k as f64;
        coeffs.push(c);
    }
    coeffs
}

#[derive(Clone, Copy)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn add(self, o: C64) -> C64 {
        C64::new(self.re + o.re, self.im + o.im)
    }
    fn sub(self, o: C64) -> C64 {
        C64::new(self.re - o.re, self.im - o.im)
    }
    fn mul(self, o: C64) -> C64 {
        C64::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
    fn div(self, o: C64) -> C64 {
        let d = o.re * o.re + o.im * o.im;
        C64::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }
    fn abs(self) -> f64 {
        num::hypot(self.re, self.im)
    }
}

/// All eigenvalue moduli, via companion-polynomial root finding
/// (Durand-Kerner iteration on the characteristic polynomial).
pub fn eigenvalue_moduli(a: &Matrix) -> Result<Vec<f64>> {
    a.check_square("eigenvalues")?;
    let n = a.rows;
    if n == 1 {
        return Ok(vec![num::abs(a.get(0, 0))]);
    }
    let coeffs = char_poly(a);
    // Cauchy bound on the root magnitudes.
    let radius = 1.0 + coeffs[1..].iter().fold(0.0f64, |m, c| m.max(num::abs(*c)));
    let seed = C64::new(0.4, 0.9);
    let mut roots: Vec<C64> = Vec::with_capacity(n);
    let mut z = C64::new(radius, 0.0);
    for _ in 0..n {
        z = z.mul(seed);
        roots.push(z);
    }

    let eval = |z: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in &coeffs {
            acc = acc.mul(z).add(C64::new(*c, 0.0));
        }
        acc
    };

    let tol = 1e-14 * (1.0 + radius);
    let mut converged = false;
    for _ in 0..EIG_MAX_ITER {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom = denom.mul(roots[i].sub(roots[j]));
                }
            }
            let step = eval(roots[i]).div(denom);
            roots[i] = roots[i].sub(step);
            max_step = max_step.max(step.abs());
        }
        if max_step < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        // Multiple roots stall the step criterion at roughly eps^(1/m); accept
        // the iterate anyway when every residual is small relative to the
        // polynomial's own magnitude at that point.
        let residuals_ok = roots.iter().all(|&z| {
            let mut scale = 0.0f64;
            let mut zp = 1.0f64;
            for c in coeffs.iter().rev() {
                scale += num::abs(*c) * zp;
                zp *= z.abs();
            }
            eval(z).abs() <= 1e-8 * (1.0 + scale)
        });
        if !residuals_ok {
            return Err(Error::NonConvergence(format!(
                "eigenvalue iteration did not converge in {EIG_MAX_ITER} iterations \
                 (n={n}, root bound {radius:.3e})"
            )));
        }
    }
    Ok(roots.into_iter().map(|r| r.abs()).collect())
}

/// Max modulus of the eigenvalues, via the norm limit |A^m|^(1/m) evaluated
/// by repeated squaring with renormalization. Robust to multiple eigenvalues,
/// where polynomial root finding loses accuracy.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    a.check_square("spectral radius")?;
    let s0 = a.frobenius_norm();
    if s0 == 0.0 || !s0.is_finite() {
        return if s0 == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Domain("matrix has non-finite entries".into()))
        };
    }
    let mut b = a.scale(1.0 / s0);
    let mut log_rho = num::ln(s0);
    let mut weight = 1.0f64;
    for _ in 0..60 {
        let b2 = b.mul(&b)?;
        let s = b2.frobenius_norm();
        if s == 0.0 {
            // A^(2^k) vanished: nilpotent
            return Ok(0.0);
        }
        weight *= 0.5;
        log_rho += weight * num::ln(s);
        b = b2.scale(1.0 / s);
    }
    Ok(num::exp(log_rho))
}

/// Largest singular value, sqrt of the spectral radius of A^T A.
pub fn two_norm(a: &Matrix) -> f64 {
    let ata = a.transpose().mul(a).expect("A^T A");
    let sym = SymmetricMatrix::enforce(ata);
    num::sqrt(sym.max_eigenvalue().max(0.0))
}

/// Symmetric matrix; symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: Matrix,
}

impl SymmetricMatrix {
    /// Accepts a nearly symmetric square matrix and symmetrizes it.
    /// Rejects inputs whose asymmetry exceeds 1e-12 * (1 + max |entry|).
    pub fn new(m: Matrix) -> Result<Self> {
        m.check_square("symmetric matrix")?;
        let asym = m.sub(&m.transpose())?.max_abs();
        if asym > 1e-12 * (1.0 + m.max_abs()) {
            return Err(Error::Domain(format!(
                "matrix is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        Ok(Self::enforce(m))
    }

    /// Symmetrizes unconditionally: (M + M^T)/2.
    pub fn enforce(m: Matrix) -> Self {
        let t = m.transpose();
        let inner = m.add(&t).expect("same shape").scale(0.5);
        Self { inner }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Matrix::identity(n),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    /// Eigenvalues in ascending order via cyclic Jacobi rotations.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        let mut a = self.inner.clone();
        let scale = a.max_abs().max(1e-300);
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(num::abs(a.get(i, j)));
                }
            }
            if off < 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if num::abs(apq) < 1e-300 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = 0.5 * num::atan2(2.0 * apq, aqq - app);
                    let (c, s) = (num::cos(theta), num::sin(theta));
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        let mut eigs: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        eigs.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
        eigs
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("nonempty")
    }

    /// True iff the minimum eigenvalue is at least -tol.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// x^T S x.
    pub fn quad(&self, x: &[f64]) -> f64 {
        self.inner.quad_form(x, x)
    }
}

/// Solve the Stein equation Phi^T P Phi - rho P = -Q for symmetric P > 0
/// via Kronecker vectorization.
///
/// Requires spectral_radius(Phi)^2 < rho and Q > 0; the returned P is
/// checked against the residual bound |Phi^T P Phi - rho P + Q| <= 1e-9 |P|.
pub fn solve_stein(phi: &Matrix, rho: f64, q: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    phi.check_square("solve_stein")?;
    if phi.rows() != q.dim() {
        return Err(Error::Dimension(
            "solve_stein: Phi and Q must have the same dimension".into(),
        ));
    }
    if rho <= 0.0 {
        return Err(Error::Domain("solve_stein: rho must be positive".into()));
    }
    let sr = spectral_radius(phi)?;
    if sr * sr >= rho {
        return Err(Error::Infeasible(format!(
            "Stein equation requires spectral_radius(Phi)^2 < rho, \
             got rho(Phi)^2 = {:.6e} vs rho = {:.6e}",
            sr * sr,
            rho
        )));
    }
    let n = phi.rows();
    let pt = phi.transpose();
    // Row-major vec: vec(Phi^T P Phi) = (Phi^T kron Phi^T) vec(P).
    let mut k = kron(&pt, &pt);
    for i in 0..n * n {
        let v = k.get(i, i) - rho;
        k.set(i, i, v);
    }
    let rhs: Vec<f64> = q.matrix().data().iter().map(|v| -v).collect();
    let p_vec = lu_solve(&k, &rhs)?;
    let p = SymmetricMatrix::enforce(Matrix::new(n, n, p_vec)?);

    let residual = pt
        .mul(p.matrix())?
        .mul(phi)?
        .sub(&p.matrix().scale(rho))?
        .add(q.matrix())?
        .max_abs();
    let p_scale = p.matrix().max_abs().max(1e-300);
    if residual > 1e-9 * p_scale {
        return Err(Error::NonConvergence(format!(
            "Stein residual {residual:.3e} exceeds 1e-9 * |P| = {:.3e}",
            1e-9 * p_scale
        )));
    }
    Ok(p)
}
