//! Adaptive coarse space: scalings, parallel sums, and per-glob generalized
//! eigenproblems.
//!
//! For a glob shared by owners `N` with per-owner Schur blocks `S^{(k)}` and
//! onto-glob complements `S̄^{(k)}`, the scaling matrices are either
//! multiplicity (`I / |N|`) or deluxe (`(Σ_μ S^{(μ)})^{-1} S^{(k)}`); both
//! satisfy the partition of unity `Σ_k D^{(k)} = I`. The splitting pencil is
//!
//! `A = Σ_k Σ_{μ≠k} D^{(μ)H} S^{(k)} D^{(μ)}`,  `B = Π_k S̄^{(k)}`
//!
//! where `Π` is the (associative, here folded in ascending owner order)
//! pairwise parallel sum `X : Y = X (X + Y)^+ Y`. Eigenvectors with `λ ≤ Θ`
//! span the dual space of the glob, the rest (including `λ = ∞` directions in
//! `null(B)` with energy) become primal constraints. Vertex globs are primal
//! wholesale and get no eigenproblem.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ONE, ZERO};
use crate::mesh::GlobKind;
use crate::schur::{GlobBlockSet, SchurSystem};
use crate::util::try_par_map;

/// Relative eigenvalue cutoff for range/null decisions in pseudo-inverses and
/// the pencil solver.
pub const RANK_CUT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    Multiplicity,
    Deluxe,
}

#[derive(Debug, Clone, Copy)]
pub struct CoarseParams {
    pub scaling: Scaling,
    /// Dual/primal threshold for face globs.
    pub theta_f: f64,
    /// Dual/primal threshold for edge globs.
    pub theta_e: f64,
}

/// Pairwise parallel sum `A : B = A (A + B)^+ B`, hermitianized.
pub fn parallel_sum(a: &DMatrix<C64>, b: &DMatrix<C64>, rel_cut: f64) -> DMatrix<C64> {
    let sum = a + b;
    let pinv = linalg::pinv_psd(&sum, rel_cut);
    let mut out = linalg::mul(&linalg::mul(a, &pinv), b);
    linalg::hermitianize(&mut out);
    out
}

/// Scaling matrices of one glob (owner order). With `lenient` (coarse
/// levels) a singular deluxe sum falls back to a pseudo-inverse instead of
/// failing.
pub fn scaling_matrices(
    glob_id: usize,
    s_blocks: &[DMatrix<C64>],
    scaling: Scaling,
    lenient: bool,
) -> Result<Vec<DMatrix<C64>>> {
    let k = s_blocks.len();
    let n = s_blocks[0].nrows();
    match scaling {
        Scaling::Multiplicity => {
            let d = DMatrix::from_diagonal_element(n, n, C64::new(1.0 / k as f64, 0.0));
            Ok(vec![d; k])
        }
        Scaling::Deluxe => {
            let mut sum = DMatrix::zeros(n, n);
            for s in s_blocks {
                sum += s;
            }
            match linalg::factor_hpd(sum.clone(), RANK_CUT * 1e-3, None) {
                Ok(f) => Ok(s_blocks.iter().map(|s| f.solve(s)).collect()),
                Err(_) if lenient => {
                    let pinv = linalg::pinv_psd(&sum, RANK_CUT);
                    Ok(s_blocks.iter().map(|s| linalg::mul(&pinv, s)).collect())
                }
                Err(_) => Err(Error::SingularDeluxeSum(glob_id)),
            }
        }
    }
}

/// Coarse data of one glob.
#[derive(Debug, Clone)]
pub struct GlobCoarse {
    pub glob: usize,
    /// Dual eigenvectors (columns), `λ ≤ Θ`.
    pub t_dual: DMatrix<C64>,
    /// Primal eigenvectors (columns); identity for vertex globs.
    pub t_primal: DMatrix<C64>,
    /// Per-owner scaling matrices (empty for vertex globs unless the full
    /// data was requested).
    pub d: Vec<DMatrix<C64>>,
    /// `D^{(k)} T_Δ` per owner.
    pub d_t_dual: Vec<DMatrix<C64>>,
    /// Pencil eigenvalues ascending (`∞` last); empty for vertex globs.
    pub eigenvalues: Vec<f64>,
}

impl GlobCoarse {
    pub fn n_dual(&self) -> usize {
        self.t_dual.ncols()
    }
    pub fn n_primal(&self) -> usize {
        self.t_primal.ncols()
    }
}

/// The assembled coarse space over all globs.
pub struct CoarseSpace {
    pub globs: Vec<GlobCoarse>,
    pub pnum_f: usize,
    pub pnum_e: usize,
    pub pnum_v: usize,
}

impl CoarseSpace {
    pub fn pnum(&self) -> usize {
        self.pnum_f + self.pnum_e + self.pnum_v
    }
}

/// Splitting pencil `(A, B)` of one glob from its blocks and scalings.
pub fn build_gevp(
    s_blocks: &[DMatrix<C64>],
    sbar_blocks: &[DMatrix<C64>],
    d: &[DMatrix<C64>],
) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = s_blocks[0].nrows();
    let k = s_blocks.len();
    let mut a = DMatrix::zeros(n, n);
    for kk in 0..k {
        for mu in 0..k {
            if mu == kk {
                continue;
            }
            // D^{(mu)H} S^{(kk)} D^{(mu)}
            let sd = linalg::mul(&s_blocks[kk], &d[mu]);
            let mut term = DMatrix::zeros(n, n);
            linalg::gemm(ONE, &d[mu], linalg::Op::Adj, &sd, linalg::Op::None, ZERO, &mut term);
            a += term;
        }
    }
    linalg::hermitianize(&mut a);
    let mut b = sbar_blocks[0].clone();
    for sb in &sbar_blocks[1..] {
        b = parallel_sum(&b, sb, RANK_CUT);
    }
    (a, b)
}

/// Solves the pencil and splits eigenvectors at threshold `theta`.
pub fn solve_gevp_and_split(
    a: &DMatrix<C64>,
    b: &DMatrix<C64>,
    theta: f64,
) -> (DMatrix<C64>, DMatrix<C64>, Vec<f64>) {
    let pairs = linalg::gevp_psd(a, b, RANK_CUT);
    let n = a.nrows();
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    let n_dual = pairs.iter().filter(|p| p.lambda.abs() <= theta).count();
    let mut t_dual = DMatrix::zeros(n, n_dual);
    let mut t_primal = DMatrix::zeros(n, n - n_dual);
    for (i, pair) in pairs.iter().enumerate() {
        // Unit Euclidean columns: a B-normalized eigenvector attached to a
        // near-null direction of B can be huge, and the basis scaling is
        // immaterial to the preconditioner.
        let scale = Complex::new(1.0 / pair.v.norm().max(f64::MIN_POSITIVE), 0.0);
        if i < n_dual {
            t_dual.set_column(i, &(&pair.v * scale));
        } else {
            t_primal.set_column(i - n_dual, &(&pair.v * scale));
        }
    }
    (t_dual, t_primal, eigenvalues)
}

/// Builds the adaptive coarse space from per-glob Schur blocks.
///
/// `kinds` gives `(kind, ndofs)` per glob at this level. `full_glob_data`
/// also equips vertex globs with scalings (needed by the verification suite;
/// vertex globs are primal either way). `lenient` enables the coarse-level
/// pseudo-inverse fallbacks.
pub fn build_coarse_space(
    kinds: &[(GlobKind, usize)],
    blocks: &[GlobBlockSet],
    params: CoarseParams,
    full_glob_data: bool,
    lenient: bool,
) -> Result<CoarseSpace> {
    let globs = try_par_map(kinds.len(), |g| {
        let (kind, n) = kinds[g];
        if kind == GlobKind::Vertex {
            let (d, d_t_dual) = if full_glob_data && !blocks[g].s.is_empty() {
                let d = scaling_matrices(g, &blocks[g].s, params.scaling, lenient)?;
                let k = d.len();
                (d, vec![DMatrix::zeros(n, 0); k])
            } else {
                (Vec::new(), Vec::new())
            };
            return Ok(GlobCoarse {
                glob: g,
                t_dual: DMatrix::zeros(n, 0),
                t_primal: DMatrix::identity(n, n),
                d,
                d_t_dual,
                eigenvalues: Vec::new(),
            });
        }
        let theta = match kind {
            GlobKind::Face => params.theta_f,
            GlobKind::Edge => params.theta_e,
            GlobKind::Vertex => unreachable!(),
        };
        let d = scaling_matrices(g, &blocks[g].s, params.scaling, lenient)?;
        let (a, b) = build_gevp(&blocks[g].s, &blocks[g].sbar, &d);
        let (t_dual, t_primal, eigenvalues) = solve_gevp_and_split(&a, &b, theta);
        let d_t_dual: Vec<DMatrix<C64>> = d.iter().map(|dk| linalg::mul(dk, &t_dual)).collect();
        Ok(GlobCoarse { glob: g, t_dual, t_primal, d, d_t_dual, eigenvalues })
    })?;

    let mut pnum_f = 0;
    let mut pnum_e = 0;
    let mut pnum_v = 0;
    for gc in &globs {
        match kinds[gc.glob].0 {
            GlobKind::Face => pnum_f += gc.n_primal(),
            GlobKind::Edge => pnum_e += gc.n_primal(),
            GlobKind::Vertex => pnum_v += gc.n_primal(),
        }
    }
    Ok(CoarseSpace { globs, pnum_f, pnum_e, pnum_v })
}

/// `(kind, ndofs)` per glob of a fine-level system.
pub fn glob_kinds(sys: &SchurSystem) -> Vec<(GlobKind, usize)> {
    sys.part.globs.iter().map(|g| (g.kind, g.ndofs())).collect()
}
