//! Dense complex linear algebra kernels.
//!
//! Everything here operates on `DMatrix<Complex<f64>>`. The work horses are
//! a gemm wrapper over `matrixmultiply::zgemm` and a blocked `L L^H`
//! factorization with an optional bandwidth limit: slab Schur complements in
//! the economic eigenproblem path are banded after element-lexicographic
//! ordering, which turns an `O(n^3)` elimination into `O(n b^2)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;

pub const ZERO: C64 = Complex::new(0.0, 0.0);
pub const ONE: C64 = Complex::new(1.0, 0.0);

/// Operand modifier for [`gemm`]: plain or conjugate-transposed.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Op {
    None,
    Adj,
}

fn op_shape(m: &DMatrix<C64>, op: Op) -> (usize, usize) {
    match op {
        Op::None => (m.nrows(), m.ncols()),
        Op::Adj => (m.ncols(), m.nrows()),
    }
}

/// `c = alpha * op_a(a) * op_b(b) + beta * c`.
pub fn gemm(alpha: C64, a: &DMatrix<C64>, oa: Op, b: &DMatrix<C64>, ob: Op, beta: C64, c: &mut DMatrix<C64>) {
    let (m, ka) = op_shape(a, oa);
    let (kb, n) = op_shape(b, ob);
    assert_eq!(ka, kb, "gemm inner dimension mismatch");
    assert_eq!((c.nrows(), c.ncols()), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if ka == 0 {
        c.iter_mut().for_each(|z| *z *= beta);
        return;
    }
    unsafe {
        gemm_raw(
            m,
            ka,
            n,
            alpha,
            a.as_slice().as_ptr(),
            a.nrows(),
            oa,
            b.as_slice().as_ptr(),
            b.nrows(),
            ob,
            beta,
            c.as_mut_slice().as_mut_ptr(),
            c.nrows(),
        );
    }
}

/// Conjugated copy of a `rows x cols` column-major region with leading
/// dimension `ld` (result has leading dimension `rows`).
unsafe fn conj_copy(p: *const C64, ld: usize, rows: usize, cols: usize) -> Vec<C64> {
    let mut v = Vec::with_capacity(rows * cols);
    for j in 0..cols {
        let col = p.add(j * ld);
        for i in 0..rows {
            v.push((*col.add(i)).conj());
        }
    }
    v
}

/// Raw strided gemm on column-major buffers with leading dimensions
/// `lda`/`ldb`/`ldc`; `oa`/`ob` select the conjugate transpose of the stored
/// operand (the stored shapes are then `k x m` / `n x k`). Conjugation is
/// realized by a scratch copy since `matrixmultiply` only supports plain
/// strided operands. Caller guarantees the regions are valid and `c` does not
/// alias `a` or `b`.
pub unsafe fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    alpha: C64,
    a: *const C64,
    lda: usize,
    oa: Op,
    b: *const C64,
    ldb: usize,
    ob: Op,
    beta: C64,
    c: *mut C64,
    ldc: usize,
) {
    use matrixmultiply::{zgemm, CGemmOption};
    // Adjoint = conjugate copy + transposed strides on the copy.
    let (_abuf, ap, rsa, csa) = match oa {
        Op::None => (Vec::new(), a, 1isize, lda as isize),
        Op::Adj => {
            let v = conj_copy(a, lda, k, m);
            let p = v.as_ptr();
            (v, p, k as isize, 1isize)
        }
    };
    let (_bbuf, bp, rsb, csb) = match ob {
        Op::None => (Vec::new(), b, 1isize, ldb as isize),
        Op::Adj => {
            let v = conj_copy(b, ldb, n, k);
            let p = v.as_ptr();
            (v, p, n as isize, 1isize)
        }
    };
    zgemm(
        CGemmOption::Standard,
        CGemmOption::Standard,
        m,
        k,
        n,
        [alpha.re, alpha.im],
        ap as *const [f64; 2],
        rsa,
        csa,
        bp as *const [f64; 2],
        rsb,
        csb,
        [beta.re, beta.im],
        c as *mut [f64; 2],
        1,
        ldc as isize,
    );
}

/// `a * b`.
pub fn mul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut c = DMatrix::zeros(a.nrows(), b.ncols());
    gemm(ONE, a, Op::None, b, Op::None, ZERO, &mut c);
    c
}

/// `a^H * b`.
pub fn adj_mul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut c = DMatrix::zeros(a.ncols(), b.ncols());
    gemm(ONE, a, Op::Adj, b, Op::None, ZERO, &mut c);
    c
}

/// `a * b^H`.
pub fn mul_adj(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut c = DMatrix::zeros(a.nrows(), b.nrows());
    gemm(ONE, a, Op::None, b, Op::Adj, ZERO, &mut c);
    c
}

/// Replaces `a` by its Hermitian part `(a + a^H)/2`.
pub fn hermitianize(a: &mut DMatrix<C64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for j in 0..n {
        a[(j, j)] = Complex::new(a[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

/// `‖a − a^H‖_F / ‖a‖_F` (0 for the zero matrix).
pub fn herm_defect(a: &DMatrix<C64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut d2 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            d2 += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
        }
    }
    d2.sqrt() / norm
}

/// Pivot breakdown during a Hermitian factorization.
#[derive(Debug, Clone, Copy)]
pub struct PivotFail {
    pub index: usize,
    pub pivot: f64,
}

// --- blocked (optionally banded) L L^H factorization ------------------------

/// Column-major accessor into a single factor buffer.
#[derive(Clone, Copy)]
struct Buf {
    p: *mut C64,
    ld: usize,
}

impl Buf {
    #[inline(always)]
    unsafe fn at(&self, i: usize, j: usize) -> C64 {
        *self.p.add(i + j * self.ld)
    }
    #[inline(always)]
    unsafe fn set(&self, i: usize, j: usize, v: C64) {
        *self.p.add(i + j * self.ld) = v;
    }
    #[inline(always)]
    unsafe fn ptr(&self, i: usize, j: usize) -> *mut C64 {
        self.p.add(i + j * self.ld)
    }
}

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix,
/// with an optional bandwidth `bw` (entries `l[i,j]` with `i - j > bw` are
/// structurally zero and skipped).
#[derive(Debug, Clone)]
pub struct HpdFactor {
    l: DMatrix<C64>,
    bw: usize,
}

const NB: usize = 128;
const TRSM_BASE: usize = 16;

/// Scalar base case: factor the `nb x nb` diagonal block at `(k,k)`.
unsafe fn chol_unblocked(a: Buf, k: usize, nb: usize, floor: f64) -> Result<(), PivotFail> {
    for j in 0..nb {
        let mut d = a.at(k + j, k + j).re;
        for t in 0..j {
            d -= a.at(k + j, k + t).norm_sqr();
        }
        if !(d > floor) {
            return Err(PivotFail { index: k + j, pivot: d });
        }
        let lj = d.sqrt();
        a.set(k + j, k + j, Complex::new(lj, 0.0));
        for i in (j + 1)..nb {
            let mut v = a.at(k + i, k + j);
            for t in 0..j {
                v -= a.at(k + i, k + t) * a.at(k + j, k + t).conj();
            }
            a.set(k + i, k + j, v / lj);
        }
    }
    Ok(())
}

/// Right solve `X L^H = P` in place, where `L` is the `nb x nb` lower block at
/// `(k,k)` and `P` is `rows x nb` at `(rk,k)`. Recursive so the scalar base
/// case stays tiny.
unsafe fn trsm_right_adj(a: Buf, k: usize, nb: usize, rk: usize, rows: usize) {
    if nb <= TRSM_BASE {
        for j in 0..nb {
            let ljj = a.at(k + j, k + j).re;
            for i in 0..rows {
                let mut v = a.at(rk + i, k + j);
                for t in 0..j {
                    v -= a.at(rk + i, k + t) * a.at(k + j, k + t).conj();
                }
                a.set(rk + i, k + j, v / ljj);
            }
        }
        return;
    }
    let h = nb / 2;
    trsm_right_adj(a, k, h, rk, rows);
    // P2 -= X1 * L21^H, then X2 solves with the trailing diagonal block.
    gemm_raw(
        rows,
        h,
        nb - h,
        -ONE,
        a.ptr(rk, k),
        a.ld,
        Op::None,
        a.ptr(k + h, k),
        a.ld,
        Op::Adj,
        ONE,
        a.ptr(rk, k + h),
        a.ld,
    );
    trsm_right_adj(a, k + h, nb - h, rk, rows);
}

/// Left solve `L X = B` in place; `L` is the `nb x nb` lower block at `(k,k)`
/// of `fac`, `B` is `nb x ncols` at `(bk, bj)` of `rhs`.
unsafe fn trsm_left(fac: Buf, k: usize, nb: usize, rhs: Buf, bk: usize, bj: usize, ncols: usize) {
    if nb <= TRSM_BASE {
        for c in 0..ncols {
            for i in 0..nb {
                let mut v = rhs.at(bk + i, bj + c);
                for t in 0..i {
                    v -= fac.at(k + i, k + t) * rhs.at(bk + t, bj + c);
                }
                rhs.set(bk + i, bj + c, v / fac.at(k + i, k + i).re);
            }
        }
        return;
    }
    let h = nb / 2;
    trsm_left(fac, k, h, rhs, bk, bj, ncols);
    gemm_raw(
        nb - h,
        h,
        ncols,
        -ONE,
        fac.ptr(k + h, k),
        fac.ld,
        Op::None,
        rhs.ptr(bk, bj),
        rhs.ld,
        Op::None,
        ONE,
        rhs.ptr(bk + h, bj),
        rhs.ld,
    );
    trsm_left(fac, k + h, nb - h, rhs, bk + h, bj, ncols);
}

/// Left solve `L^H X = B` in place (backward substitution).
unsafe fn trsm_left_adj(fac: Buf, k: usize, nb: usize, rhs: Buf, bk: usize, bj: usize, ncols: usize) {
    if nb <= TRSM_BASE {
        for c in 0..ncols {
            for ii in (0..nb).rev() {
                let mut v = rhs.at(bk + ii, bj + c);
                for t in (ii + 1)..nb {
                    v -= fac.at(k + t, k + ii).conj() * rhs.at(bk + t, bj + c);
                }
                rhs.set(bk + ii, bj + c, v / fac.at(k + ii, k + ii).re);
            }
        }
        return;
    }
    let h = nb / 2;
    trsm_left_adj(fac, k + h, nb - h, rhs, bk + h, bj, ncols);
    gemm_raw(
        h,
        nb - h,
        ncols,
        -ONE,
        fac.ptr(k + h, k),
        fac.ld,
        Op::Adj,
        rhs.ptr(bk + h, bj),
        rhs.ld,
        Op::None,
        ONE,
        rhs.ptr(bk, bj),
        rhs.ld,
    );
    trsm_left_adj(fac, k, h, rhs, bk, bj, ncols);
}

/// Factors a Hermitian positive definite matrix as `L L^H`.
///
/// Pivots are required to stay above `floor_rel` times the largest initial
/// diagonal entry. With `bw = Some(b)` only the band `i - j <= b` is read,
/// written, and updated; the input must actually be banded for the factor to
/// be exact.
pub fn factor_hpd(mut a: DMatrix<C64>, floor_rel: f64, bw: Option<usize>) -> Result<HpdFactor, PivotFail> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let bw = bw.unwrap_or(n.max(1)).max(1);
    let scale = (0..n).fold(0.0f64, |s, i| s.max(a[(i, i)].re.abs()));
    let floor = if scale > 0.0 { floor_rel * scale } else { floor_rel };

    let buf = Buf { p: a.as_mut_slice().as_mut_ptr(), ld: n.max(1) };
    let mut k = 0;
    while k < n {
        let kb = NB.min(n - k);
        unsafe {
            chol_unblocked(buf, k, kb, floor)?;
            let i_end = n.min(k + kb + bw);
            let rows = i_end.saturating_sub(k + kb);
            if rows > 0 {
                trsm_right_adj(buf, k, kb, k + kb, rows);
                // Trailing Hermitian update, lower trapezoid only, in column
                // chunks so most of the work is gemm-shaped.
                let t0 = k + kb;
                let cb = 256usize;
                let mut j = t0;
                while j < i_end {
                    let jb = cb.min(i_end - j);
                    let urows = i_end - j;
                    gemm_raw(
                        urows,
                        kb,
                        jb,
                        -ONE,
                        buf.ptr(j, k),
                        buf.ld,
                        Op::None,
                        buf.ptr(j, k),
                        buf.ld,
                        Op::Adj,
                        ONE,
                        buf.ptr(j, j),
                        buf.ld,
                    );
                    j += jb;
                }
            }
        }
        k += kb;
    }
    // Zero the (unreferenced) strict upper triangle so debugging dumps and
    // reconstruction tests see a clean factor.
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = ZERO;
        }
    }
    Ok(HpdFactor { l: a, bw })
}

impl HpdFactor {
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &DMatrix<C64> {
        &self.l
    }

    /// `L X = B` in place.
    pub fn forward_in_place(&self, b: &mut DMatrix<C64>) {
        let n = self.n();
        assert_eq!(b.nrows(), n);
        if n == 0 || b.ncols() == 0 {
            return;
        }
        let fac = Buf { p: self.l.as_slice().as_ptr() as *mut C64, ld: n };
        let rhs = Buf { p: b.as_mut_slice().as_mut_ptr(), ld: n };
        let nc = b.ncols();
        let mut k = 0;
        while k < n {
            let kb = NB.min(n - k);
            unsafe {
                trsm_left(fac, k, kb, rhs, k, 0, nc);
                let i_end = n.min(k + kb + self.bw);
                let rows = i_end.saturating_sub(k + kb);
                if rows > 0 {
                    gemm_raw(
                        rows,
                        kb,
                        nc,
                        -ONE,
                        fac.ptr(k + kb, k),
                        n,
                        Op::None,
                        rhs.ptr(k, 0),
                        n,
                        Op::None,
                        ONE,
                        rhs.ptr(k + kb, 0),
                        n,
                    );
                }
            }
            k += kb;
        }
    }

    /// `L^H X = B` in place.
    pub fn backward_in_place(&self, b: &mut DMatrix<C64>) {
        let n = self.n();
        assert_eq!(b.nrows(), n);
        if n == 0 || b.ncols() == 0 {
            return;
        }
        let fac = Buf { p: self.l.as_slice().as_ptr() as *mut C64, ld: n };
        let rhs = Buf { p: b.as_mut_slice().as_mut_ptr(), ld: n };
        let nc = b.ncols();
        // Block starts in reverse order.
        let mut starts = Vec::new();
        let mut k = 0;
        while k < n {
            starts.push(k);
            k += NB.min(n - k);
        }
        for &k in starts.iter().rev() {
            let kb = NB.min(n - k);
            unsafe {
                trsm_left_adj(fac, k, kb, rhs, k, 0, nc);
                if k > 0 {
                    let j0 = k.saturating_sub(self.bw);
                    gemm_raw(
                        k - j0,
                        kb,
                        nc,
                        -ONE,
                        fac.ptr(k, j0),
                        n,
                        Op::Adj,
                        rhs.ptr(k, 0),
                        n,
                        Op::None,
                        ONE,
                        rhs.ptr(j0, 0),
                        n,
                    );
                }
            }
        }
    }

    /// `A X = B` in place.
    pub fn solve_in_place(&self, b: &mut DMatrix<C64>) {
        self.forward_in_place(b);
        self.backward_in_place(b);
    }

    pub fn solve(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &DVector<C64>) -> DVector<C64> {
        let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.solve_in_place(&mut x);
        DVector::from_column_slice(x.as_slice())
    }
}

/// Schur complement onto the trailing block: for `A = [[A_oo, A_og], [A_go,
/// A_gg]]` with `no` leading dofs, returns `A_gg − A_go A_oo^{-1} A_og` via a
/// single forward solve (`bw` limits the `A_oo` factorization band).
pub fn schur_onto_trailing(
    a: &DMatrix<C64>,
    no: usize,
    floor_rel: f64,
    bw: Option<usize>,
) -> Result<DMatrix<C64>, PivotFail> {
    let n = a.nrows();
    let ng = n - no;
    let mut s = a.view((no, no), (ng, ng)).into_owned();
    if no == 0 {
        return Ok(s);
    }
    let f = factor_hpd(a.view((0, 0), (no, no)).into_owned(), floor_rel, bw)?;
    let mut x = a.view((0, no), (no, ng)).into_owned();
    f.forward_in_place(&mut x);
    gemm(-ONE, &x, Op::Adj, &x, Op::None, ONE, &mut s);
    hermitianize(&mut s);
    Ok(s)
}

/// Like [`schur_onto_trailing`] but tolerant of a singular leading block:
/// falls back to an eigenvalue pseudo-inverse of `A_oo`. Used on coarse
/// levels where partially assembled blocks can lose definiteness.
pub fn schur_onto_trailing_psd(a: &DMatrix<C64>, no: usize, floor_rel: f64) -> DMatrix<C64> {
    match schur_onto_trailing(a, no, floor_rel, None) {
        Ok(s) => s,
        Err(_) => {
            let n = a.nrows();
            let ng = n - no;
            let aoo = a.view((0, 0), (no, no)).into_owned();
            let aog = a.view((0, no), (no, ng)).into_owned();
            let pinv = pinv_psd(&aoo, 1e-10);
            let mut s = a.view((no, no), (ng, ng)).into_owned();
            let t = mul(&pinv, &aog);
            gemm(-ONE, &aog, Op::Adj, &t, Op::None, ONE, &mut s);
            hermitianize(&mut s);
            s
        }
    }
}

// --- Hermitian eigenproblems ------------------------------------------------

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending, columns
/// of the returned matrix are the matching orthonormal eigenvectors.
pub fn eigh(a: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let se = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Moore–Penrose pseudo-inverse of a Hermitian PSD matrix; eigenvalues below
/// `rel_cut` times the largest are treated as zero.
pub fn pinv_psd(a: &DMatrix<C64>, rel_cut: f64) -> DMatrix<C64> {
    let (vals, vecs) = eigh(a);
    let n = a.nrows();
    let vmax = vals.iter().fold(0.0f64, |s, &v| s.max(v.abs()));
    let mut out = DMatrix::zeros(n, n);
    if vmax == 0.0 {
        return out;
    }
    let cut = rel_cut * vmax;
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > cut).collect();
    if keep.is_empty() {
        return out;
    }
    let mut w = DMatrix::zeros(n, keep.len());
    let mut inv = Vec::with_capacity(keep.len());
    for (c, &i) in keep.iter().enumerate() {
        w.set_column(c, &vecs.column(i));
        inv.push(1.0 / vals[i]);
    }
    let mut ws = w.clone();
    for (c, &iv) in inv.iter().enumerate() {
        ws.column_mut(c).iter_mut().for_each(|z| *z *= iv);
    }
    gemm(ONE, &ws, Op::None, &w, Op::Adj, ZERO, &mut out);
    hermitianize(&mut out);
    out
}

/// One eigenpair of the Hermitian/PSD pencil `A v = λ B v`.
pub struct PencilPair {
    /// Real nonnegative; `f64::INFINITY` for directions in `null(B)` with
    /// nonzero `A`-energy.
    pub lambda: f64,
    pub v: DVector<C64>,
}

/// Solves the generalized eigenproblem for a Hermitian PSD pencil `(A, B)`.
///
/// `B` is split into range and null space at relative cutoff `rel_cut`. On
/// the range a definite reduced problem is solved and the eigenvectors come
/// out `B`-orthonormal; null directions are classified by their `A`-energy
/// (zero → eigenvalue 0, nonzero → eigenvalue `+∞`). Pairs are returned with
/// eigenvalues ascending, infinite last.
pub fn gevp_psd(a: &DMatrix<C64>, b: &DMatrix<C64>, rel_cut: f64) -> Vec<PencilPair> {
    let n = a.nrows();
    assert_eq!((n, n), (b.nrows(), b.ncols()));
    let (bvals, bvecs) = eigh(b);
    let bmax = bvals.iter().fold(0.0f64, |s, &v| s.max(v.abs()));
    let cut = rel_cut * bmax;
    let range: Vec<usize> = (0..n).filter(|&i| bvals[i] > cut && bmax > 0.0).collect();
    let null: Vec<usize> = (0..n).filter(|&i| !(bvals[i] > cut && bmax > 0.0)).collect();
    let anorm = a.norm();

    let mut pairs: Vec<PencilPair> = Vec::with_capacity(n);

    if !range.is_empty() {
        // W = Q_r Λ_r^{-1/2}; reduced problem W^H A W z = λ z; v = W z.
        let mut w = DMatrix::zeros(n, range.len());
        for (c, &i) in range.iter().enumerate() {
            let s = 1.0 / bvals[i].sqrt();
            for r in 0..n {
                w[(r, c)] = bvecs[(r, i)] * s;
            }
        }
        let aw = mul(a, &w);
        let mut red = adj_mul(&w, &aw);
        hermitianize(&mut red);
        let (mu, z) = eigh(&red);
        let vz = mul(&w, &z);
        for (c, &m) in mu.iter().enumerate() {
            pairs.push(PencilPair {
                lambda: m.max(0.0),
                v: DVector::from_column_slice(vz.column(c).as_slice()),
            });
        }
    }

    if !null.is_empty() {
        // Diagonalize the A-energy inside null(B) so primal/dual membership
        // is unambiguous per direction.
        let mut nn = DMatrix::zeros(n, null.len());
        for (c, &i) in null.iter().enumerate() {
            nn.set_column(c, &bvecs.column(i));
        }
        let an = mul(a, &nn);
        let mut red = adj_mul(&nn, &an);
        hermitianize(&mut red);
        let (eta, y) = eigh(&red);
        let vy = mul(&nn, &y);
        for (c, &e) in eta.iter().enumerate() {
            let lambda = if e > 1e-10 * anorm.max(1e-300) { f64::INFINITY } else { 0.0 };
            pairs.push(PencilPair {
                lambda,
                v: DVector::from_column_slice(vy.column(c).as_slice()),
            });
        }
    }

    pairs.sort_by(|x, y| x.lambda.partial_cmp(&y.lambda).unwrap());
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_hpd(n: usize, seed: u64) -> DMatrix<C64> {
        // Simple deterministic congruential fill; SPD via G^H G + n I.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let g = DMatrix::from_fn(n, n, |_, _| Complex::new(next(), next()));
        let mut a = adj_mul(&g, &g);
        for i in 0..n {
            a[(i, i)] += Complex::new(n as f64, 0.0);
        }
        hermitianize(&mut a);
        a
    }

    #[test]
    fn gemm_matches_nalgebra() {
        let a = rand_hpd(37, 1);
        let b = rand_hpd(37, 2);
        let c = mul(&a, &b);
        let c_ref = &a * &b;
        assert!((c - &c_ref).norm() <= 1e-12 * c_ref.norm());
        let d = adj_mul(&a, &b);
        let d_ref = a.adjoint() * &b;
        assert!((d - &d_ref).norm() <= 1e-12 * d_ref.norm());
        let e = mul_adj(&a, &b);
        let e_ref = &a * b.adjoint();
        assert!((e - &e_ref).norm() <= 1e-12 * e_ref.norm());
    }

    #[test]
    fn cholesky_roundtrip_dense() {
        for n in [1usize, 5, 64, 130, 301] {
            let a = rand_hpd(n, n as u64);
            let f = factor_hpd(a.clone(), 1e-14, None).unwrap();
            let l = f.factor();
            let rec = mul_adj(l, l);
            assert!((rec - &a).norm() <= 1e-10 * a.norm(), "n={n}");
            let b = DMatrix::from_fn(n, 3, |i, j| Complex::new((i + j) as f64, i as f64 - 1.0));
            let x = f.solve(&b);
            assert!((mul(&a, &x) - &b).norm() <= 1e-9 * b.norm(), "n={n}");
        }
    }

    #[test]
    fn cholesky_banded_matches_dense() {
        let n = 220;
        let bw = 17;
        let mut a = rand_hpd(n, 7);
        for j in 0..n {
            for i in 0..n {
                if i.abs_diff(j) > bw {
                    a[(i, j)] = ZERO;
                }
            }
        }
        hermitianize(&mut a);
        for i in 0..n {
            a[(i, i)] += Complex::new(50.0, 0.0);
        }
        let fd = factor_hpd(a.clone(), 1e-14, None).unwrap();
        let fb = factor_hpd(a.clone(), 1e-14, Some(bw)).unwrap();
        assert!((fd.factor() - fb.factor()).norm() <= 1e-10 * fd.factor().norm());
        let b = DMatrix::from_fn(n, 2, |i, _| Complex::new(i as f64, 1.0));
        let xd = fd.solve(&b);
        let xb = fb.solve(&b);
        assert!((xd - &xb).norm() <= 1e-9 * xb.norm());
    }

    #[test]
    fn cholesky_reports_bad_pivot() {
        let mut a = rand_hpd(8, 3);
        a[(5, 5)] = Complex::new(-1e3, 0.0);
        let err = factor_hpd(a, 1e-12, None).unwrap_err();
        assert_eq!(err.index, 5);
    }

    #[test]
    fn schur_matches_block_inverse() {
        let n = 40;
        let no = 25;
        let a = rand_hpd(n, 11);
        let s = schur_onto_trailing(&a, no, 1e-14, None).unwrap();
        // Reference: invert A and take the trailing block of the inverse's
        // inverse relationship S = inv(inv(A)_gg).
        let f = factor_hpd(a.clone(), 1e-14, None).unwrap();
        let inv = f.solve(&DMatrix::identity(n, n));
        let inv_gg = inv.view((no, no), (n - no, n - no)).into_owned();
        let fg = factor_hpd(inv_gg, 1e-14, None).unwrap();
        let s_ref = fg.solve(&DMatrix::identity(n - no, n - no));
        assert!((s - &s_ref).norm() <= 1e-8 * s_ref.norm());
    }

    #[test]
    fn eigh_and_pinv() {
        let a = rand_hpd(30, 21);
        let (vals, vecs) = eigh(&a);
        for w in vals.windows(2) {
            assert!(w[0] <= w[1]);
        }
        let lam = DMatrix::from_fn(30, 30, |i, j| {
            if i == j { Complex::new(vals[i], 0.0) } else { ZERO }
        });
        let rec = mul(&mul(&vecs, &lam), &vecs.adjoint().into_owned());
        assert!((rec - &a).norm() <= 1e-10 * a.norm());

        // Rank-deficient pinv: A = V diag(2, 1, 0...) V^H.
        let mut d = DMatrix::zeros(30, 30);
        d[(28, 28)] = Complex::new(1.0, 0.0);
        d[(29, 29)] = Complex::new(2.0, 0.0);
        let b = mul(&mul(&vecs, &d), &vecs.adjoint().into_owned());
        let p = pinv_psd(&b, 1e-10);
        let bpb = mul(&mul(&b, &p), &b);
        assert!((bpb - &b).norm() <= 1e-9 * b.norm());
    }

    #[test]
    fn gevp_definite_pencil() {
        // A = diag(1, 100) in the B = I metric.
        let a = DMatrix::from_fn(2, 2, |i, j| {
            if i == j { Complex::new(if i == 0 { 1.0 } else { 100.0 }, 0.0) } else { ZERO }
        });
        let b = DMatrix::identity(2, 2);
        let pairs = gevp_psd(&a, &b, 1e-10);
        assert!((pairs[0].lambda - 1.0).abs() < 1e-10);
        assert!((pairs[1].lambda - 100.0).abs() < 1e-8);
    }

    #[test]
    fn gevp_singular_b() {
        // B = diag(1, 0); A couples nothing: null direction with zero energy
        // is a 0 eigenvalue, with energy it is infinite.
        let b = DMatrix::from_fn(2, 2, |i, j| {
            if i == 0 && j == 0 { ONE } else { ZERO }
        });
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = Complex::new(3.0, 0.0);
        let pairs = gevp_psd(&a, &b, 1e-10);
        assert_eq!(pairs[0].lambda, 0.0);
        assert!((pairs[1].lambda - 3.0).abs() < 1e-10);

        a[(1, 1)] = Complex::new(5.0, 0.0);
        let pairs = gevp_psd(&a, &b, 1e-10);
        assert!(pairs.last().unwrap().lambda.is_infinite());
    }
}
