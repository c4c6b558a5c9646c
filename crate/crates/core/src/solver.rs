//! BDDC-preconditioned CG on the interface, two-level and multilevel.
//!
//! Every level is the same kind of object: a set of dofs split into
//! per-subdomain interiors and a glob-structured interface, a kernel that can
//! apply local Schur complements, and a BDDC preconditioner whose coarse
//! space is the adaptive one from [`crate::coarse`]. Level 0 wraps the fine
//! [`SchurSystem`] (matrix-free local Schur complements); level `s ≥ 1` lives
//! on the level-`s−1` primal dofs, with one dense local matrix per merged
//! (2×2×2) subdomain assembled from the children's `coarse_contrib` blocks.
//!
//! `LevelOperator::solve` condenses a full right-hand side to the interface,
//! runs preconditioned CG there, and back-substitutes — at level 0 with the
//! target tolerance, at coarse levels with a loose tolerance, and at the last
//! level the primal matrix is factored directly. CG accumulates its scalar
//! recurrences into a Lanczos tridiagonal for extreme-eigenvalue estimates of
//! the preconditioned operator, and guards the Hermiticity of `p^H S p`.
//! Non-convergence is reported in [`PcgStats`], not as an error.

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::coarse::{build_coarse_space, CoarseParams, CoarseSpace};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, HpdFactor, Op, ONE, ZERO};
use crate::mesh::GlobKind;
use crate::schur::{glob_blocks, BlockMode, GlobBlockSet, SchurSystem, PIVOT_FLOOR};
use crate::util::{par_map, try_par_map};

// --- generic domain-decomposition structure of one level ---------------------

#[derive(Debug, Clone)]
pub struct DdGlob {
    pub kind: GlobKind,
    pub owners: Vec<usize>,
    /// Range in the level's interface numbering.
    pub dof_range: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct DdSub {
    pub coords: [usize; 3],
    /// Full-numbering ids of this subdomain's interior dofs.
    pub interior_ids: Vec<usize>,
    /// Globs of this subdomain, ascending.
    pub globs: Vec<usize>,
    /// Position of this subdomain in each glob's owner list.
    pub owner_pos: Vec<usize>,
    /// Interface ranges `(start, len)`; concatenation = local interface order.
    pub iface_ranges: Vec<(usize, usize)>,
}

impl DdSub {
    pub fn n_iface(&self) -> usize {
        self.iface_ranges.iter().map(|&(_, l)| l).sum()
    }
}

pub struct DdStructure {
    /// Total dofs at this level (interiors + interface).
    pub n_full: usize,
    /// Subdomain grid size per axis.
    pub n_grid: usize,
    pub globs: Vec<DdGlob>,
    pub subs: Vec<DdSub>,
    /// Interface index -> full dof id.
    pub iface_to_full: Vec<usize>,
}

impl DdStructure {
    pub fn n_iface(&self) -> usize {
        self.iface_to_full.len()
    }

    pub fn glob_kinds(&self) -> Vec<(GlobKind, usize)> {
        self.globs.iter().map(|g| (g.kind, g.dof_range.len())).collect()
    }
}

fn gather(ranges: &[(usize, usize)], x: &DVector<C64>) -> DVector<C64> {
    let n: usize = ranges.iter().map(|&(_, l)| l).sum();
    let mut out = DVector::zeros(n);
    let mut off = 0;
    for &(start, len) in ranges {
        out.rows_mut(off, len).copy_from(&x.rows(start, len));
        off += len;
    }
    out
}

fn scatter_add(ranges: &[(usize, usize)], y: &mut DVector<C64>, v: &DVector<C64>) {
    let mut off = 0;
    for &(start, len) in ranges {
        let mut dst = y.rows_mut(start, len);
        dst += v.rows(off, len);
        off += len;
    }
}

fn dd_from_fine(sys: &SchurSystem) -> DdStructure {
    let globs: Vec<DdGlob> = sys
        .part
        .globs
        .iter()
        .map(|g| DdGlob { kind: g.kind, owners: g.owners.clone(), dof_range: g.dof_range.clone() })
        .collect();
    let p = sys.dirs.p;
    let subs: Vec<DdSub> = sys
        .part
        .subs
        .iter()
        .map(|sub| {
            let mut interior_ids = Vec::with_capacity(sub.interior_elems.len() * p);
            for &e in &sub.interior_elems {
                interior_ids.extend(e * p..(e + 1) * p);
            }
            let owner_pos: Vec<usize> = sub
                .globs
                .iter()
                .map(|&g| {
                    let me = sys.part.subs.iter().position(|s| std::ptr::eq(s, sub)).unwrap();
                    sys.part.globs[g].owners.iter().position(|&o| o == me).unwrap()
                })
                .collect();
            let iface_ranges: Vec<(usize, usize)> = sub
                .globs
                .iter()
                .map(|&g| {
                    let r = &sys.part.globs[g].dof_range;
                    (r.start, r.len())
                })
                .collect();
            DdSub {
                coords: sub.coords,
                interior_ids,
                globs: sub.globs.clone(),
                owner_pos,
                iface_ranges,
            }
        })
        .collect();
    DdStructure {
        n_full: sys.mesh.total_dofs(),
        n_grid: sys.mesh.cfg.n,
        globs,
        subs,
        iface_to_full: sys.part.interface_dofs.clone(),
    }
}

// --- level kernels ------------------------------------------------------------

/// Dense elimination data of one coarse-level subdomain, in local
/// `[interior][interface]` order.
pub struct CoarseSubKernel {
    pub factor: HpdFactor,
    pub a_ig: DMatrix<C64>,
    /// Dense local Schur complement over the local interface dofs.
    pub schur: DMatrix<C64>,
}

pub enum Kernel {
    Fine(SchurSystem),
    Coarse(Vec<CoarseSubKernel>),
}

impl Kernel {
    fn apply_local_schur(&self, r: usize, x: &DMatrix<C64>) -> DMatrix<C64> {
        match self {
            Kernel::Fine(sys) => sys.subs[r].apply_local_schur(x),
            Kernel::Coarse(subs) => linalg::mul(&subs[r].schur, x),
        }
    }
}

fn apply_iface(dd: &DdStructure, kernel: &Kernel, x: &DVector<C64>) -> DVector<C64> {
    match kernel {
        Kernel::Fine(sys) => sys.apply(x),
        Kernel::Coarse(subs) => {
            let contribs: Vec<DVector<C64>> = par_map(dd.subs.len(), |r| {
                let xl = gather(&dd.subs[r].iface_ranges, x);
                let y = linalg::mul(
                    &subs[r].schur,
                    &DMatrix::from_column_slice(xl.len(), 1, xl.as_slice()),
                );
                DVector::from_column_slice(y.as_slice())
            });
            let mut y = DVector::zeros(dd.n_iface());
            for (r, c) in contribs.iter().enumerate() {
                scatter_add(&dd.subs[r].iface_ranges, &mut y, c);
            }
            y
        }
    }
}

fn condense(dd: &DdStructure, kernel: &Kernel, b: &DVector<C64>) -> DVector<C64> {
    match kernel {
        Kernel::Fine(sys) => sys.condense_rhs(b),
        Kernel::Coarse(subs) => {
            let mut g = DVector::zeros(dd.n_iface());
            for (i, &f) in dd.iface_to_full.iter().enumerate() {
                g[i] = b[f];
            }
            let contribs: Vec<DVector<C64>> = par_map(dd.subs.len(), |r| {
                let sub = &dd.subs[r];
                let ni = sub.interior_ids.len();
                let mut bi = DMatrix::zeros(ni, 1);
                for (i, &id) in sub.interior_ids.iter().enumerate() {
                    bi[(i, 0)] = b[id];
                }
                subs[r].factor.solve_in_place(&mut bi);
                let mut w = DMatrix::zeros(sub.n_iface(), 1);
                linalg::gemm(ONE, &subs[r].a_ig, Op::Adj, &bi, Op::None, ZERO, &mut w);
                DVector::from_column_slice(w.as_slice())
            });
            for (r, w) in contribs.iter().enumerate() {
                let neg = -w;
                scatter_add(&dd.subs[r].iface_ranges, &mut g, &neg);
            }
            g
        }
    }
}

fn expand(dd: &DdStructure, kernel: &Kernel, b: &DVector<C64>, u_if: &DVector<C64>) -> DVector<C64> {
    match kernel {
        Kernel::Fine(sys) => sys.expand(b, u_if),
        Kernel::Coarse(subs) => {
            let mut u = DVector::zeros(dd.n_full);
            for (i, &f) in dd.iface_to_full.iter().enumerate() {
                u[f] = u_if[i];
            }
            let interiors: Vec<DMatrix<C64>> = par_map(dd.subs.len(), |r| {
                let sub = &dd.subs[r];
                let ni = sub.interior_ids.len();
                let mut bi = DMatrix::zeros(ni, 1);
                for (i, &id) in sub.interior_ids.iter().enumerate() {
                    bi[(i, 0)] = b[id];
                }
                let ug = gather(&sub.iface_ranges, u_if);
                linalg::gemm(
                    -ONE,
                    &subs[r].a_ig,
                    Op::None,
                    &DMatrix::from_column_slice(ug.len(), 1, ug.as_slice()),
                    Op::None,
                    ONE,
                    &mut bi,
                );
                subs[r].factor.solve_in_place(&mut bi);
                bi
            });
            for (r, ui) in interiors.iter().enumerate() {
                for (i, &id) in dd.subs[r].interior_ids.iter().enumerate() {
                    u[id] = ui[(i, 0)];
                }
            }
            u
        }
    }
}

/// Per-glob Schur blocks at a coarse level: sliced and eliminated from the
/// dense local Schur complements, with pseudo-inverse fallbacks.
fn coarse_glob_blocks(dd: &DdStructure, kernels: &[CoarseSubKernel]) -> Vec<GlobBlockSet> {
    let per_sub: Vec<Vec<(usize, usize, DMatrix<C64>, DMatrix<C64>)>> =
        par_map(dd.subs.len(), |r| {
            let sub = &dd.subs[r];
            let s_loc = &kernels[r].schur;
            let ng = s_loc.nrows();
            let mut out = Vec::new();
            let mut off = 0;
            for (i, &g) in sub.globs.iter().enumerate() {
                let len = sub.iface_ranges[i].1;
                if dd.globs[g].kind != GlobKind::Vertex {
                    let s_blk = s_loc.view((off, off), (len, len)).into_owned();
                    let mut perm: Vec<usize> =
                        (0..ng).filter(|&k| k < off || k >= off + len).collect();
                    perm.extend(off..off + len);
                    let mut reord = DMatrix::zeros(ng, ng);
                    for (a, &pa) in perm.iter().enumerate() {
                        for (bcol, &pb) in perm.iter().enumerate() {
                            reord[(a, bcol)] = s_loc[(pa, pb)];
                        }
                    }
                    let sbar = linalg::schur_onto_trailing_psd(&reord, ng - len, PIVOT_FLOOR);
                    out.push((g, sub.owner_pos[i], s_blk, sbar));
                }
                off += len;
            }
            out
        });
    let mut blocks = vec![GlobBlockSet::default(); dd.globs.len()];
    for (g, glob) in dd.globs.iter().enumerate() {
        if glob.kind != GlobKind::Vertex {
            blocks[g].s = vec![DMatrix::zeros(0, 0); glob.owners.len()];
            blocks[g].sbar = vec![DMatrix::zeros(0, 0); glob.owners.len()];
        }
    }
    for items in per_sub {
        for (g, pos, s, sbar) in items {
            blocks[g].s[pos] = s;
            blocks[g].sbar[pos] = sbar;
        }
    }
    blocks
}

// --- BDDC level ---------------------------------------------------------------

pub struct BddcSub {
    /// Offset of each glob's dual columns in the local dual vector.
    pub dual_offsets: Vec<usize>,
    pub n_dual: usize,
    /// Cholesky factor of the dual-dual block `C_Δ^H S C_Δ`.
    pub stt: HpdFactor,
    /// `C_Δ^H S C_Π` (local primal columns).
    pub s_dp: DMatrix<C64>,
    /// `C_Π^H S C_Π − s_dp^H stt^{-1} s_dp` (this subdomain's contribution to
    /// the primal matrix).
    pub coarse_contrib: DMatrix<C64>,
    /// Global primal ids of the local primal columns.
    pub primal_cols: Vec<usize>,
}

pub enum CoarseSolve {
    Direct(HpdFactor),
    Recursive {
        op: Box<LevelOperator>,
        /// Primal id -> full dof id in the coarse level's own numbering.
        perm: Vec<usize>,
    },
}

pub struct Bddc {
    pub space: CoarseSpace,
    /// Global primal range per glob.
    pub primal_ranges: Vec<Range<usize>>,
    pub n_primal: usize,
    pub subs: Vec<BddcSub>,
    pub coarse_solve: CoarseSolve,
}

/// `out[orow.., ocol..] += t^H * x[row0.., col0..]` without copying the
/// sub-blocks (column-major stride tricks).
fn adj_mul_block(
    t: &DMatrix<C64>,
    x: &DMatrix<C64>,
    row0: usize,
    col0: usize,
    ncols: usize,
    out: &mut DMatrix<C64>,
    orow: usize,
    ocol: usize,
) {
    let k = t.nrows();
    let m = t.ncols();
    if m == 0 || ncols == 0 || k == 0 {
        return;
    }
    unsafe {
        linalg::gemm_raw(
            m,
            k,
            ncols,
            ONE,
            t.as_slice().as_ptr(),
            t.nrows(),
            Op::Adj,
            x.as_slice().as_ptr().add(row0 + col0 * x.nrows()),
            x.nrows(),
            Op::None,
            ONE,
            out.as_mut_slice().as_mut_ptr().add(orow + ocol * out.nrows()),
            out.nrows(),
        );
    }
}

fn build_bddc_sub(
    level: usize,
    dd: &DdStructure,
    kernel: &Kernel,
    space: &CoarseSpace,
    primal_ranges: &[Range<usize>],
    r: usize,
) -> Result<BddcSub> {
    let sub = &dd.subs[r];
    let ng = sub.n_iface();
    // Local offsets of each glob, and dual/primal column layout.
    let mut loc_off = Vec::with_capacity(sub.globs.len());
    let mut dual_offsets = Vec::with_capacity(sub.globs.len());
    let mut primal_offsets = Vec::with_capacity(sub.globs.len());
    let (mut off, mut doff, mut poff) = (0usize, 0usize, 0usize);
    for (i, &g) in sub.globs.iter().enumerate() {
        loc_off.push(off);
        dual_offsets.push(doff);
        primal_offsets.push(poff);
        off += sub.iface_ranges[i].1;
        doff += space.globs[g].n_dual();
        poff += space.globs[g].n_primal();
    }
    let n_dual = doff;
    let n_primal_loc = poff;

    // Dense C = [C_Δ | C_Π], block-diagonal over globs.
    let mut c = DMatrix::zeros(ng, n_dual + n_primal_loc);
    for (i, &g) in sub.globs.iter().enumerate() {
        let gc = &space.globs[g];
        let len = sub.iface_ranges[i].1;
        c.view_mut((loc_off[i], dual_offsets[i]), (len, gc.n_dual())).copy_from(&gc.t_dual);
        c.view_mut((loc_off[i], n_dual + primal_offsets[i]), (len, gc.n_primal()))
            .copy_from(&gc.t_primal);
    }
    let x = kernel.apply_local_schur(r, &c);

    // stt = C_Δ^H X_Δ, s_dp = C_Δ^H X_Π, spp = C_Π^H X_Π, glob-row-wise.
    let mut stt = DMatrix::zeros(n_dual, n_dual);
    let mut s_dp = DMatrix::zeros(n_dual, n_primal_loc);
    let mut spp = DMatrix::zeros(n_primal_loc, n_primal_loc);
    for (i, &g) in sub.globs.iter().enumerate() {
        let gc = &space.globs[g];
        adj_mul_block(&gc.t_dual, &x, loc_off[i], 0, n_dual, &mut stt, dual_offsets[i], 0);
        adj_mul_block(&gc.t_dual, &x, loc_off[i], n_dual, n_primal_loc, &mut s_dp, dual_offsets[i], 0);
        adj_mul_block(
            &gc.t_primal,
            &x,
            loc_off[i],
            n_dual,
            n_primal_loc,
            &mut spp,
            primal_offsets[i],
            0,
        );
    }
    linalg::hermitianize(&mut stt);
    linalg::hermitianize(&mut spp);

    let stt = linalg::factor_hpd(stt, PIVOT_FLOOR, None)
        .map_err(|_| Error::SingularDualBlock { level, subdomain: r })?;
    let y = stt.solve(&s_dp);
    linalg::gemm(-ONE, &s_dp, Op::Adj, &y, Op::None, ONE, &mut spp);
    linalg::hermitianize(&mut spp);

    let mut primal_cols = Vec::with_capacity(n_primal_loc);
    for &g in &sub.globs {
        primal_cols.extend(primal_ranges[g].clone());
    }
    Ok(BddcSub { dual_offsets, n_dual, stt, s_dp, coarse_contrib: spp, primal_cols })
}

/// `M^{-1} g` — Algorithm "scaled restriction, partially assembled solve,
/// scaled prolongation".
pub fn apply_preconditioner(
    dd: &DdStructure,
    _kernel: &Kernel,
    bddc: &Bddc,
    g: &DVector<C64>,
) -> DVector<C64> {
    let space = &bddc.space;
    // (1) dual solves: x1_r = stt^{-1} C_DΔ^H g|_r.
    let x1: Vec<DMatrix<C64>> = par_map(dd.subs.len(), |r| {
        let sub = &dd.subs[r];
        let bs = &bddc.subs[r];
        let gl = gather(&sub.iface_ranges, g);
        let glm = DMatrix::from_column_slice(gl.len(), 1, gl.as_slice());
        let mut rhs = DMatrix::zeros(bs.n_dual, 1);
        let mut off = 0;
        for (i, &gg) in sub.globs.iter().enumerate() {
            let gc = &space.globs[gg];
            let len = sub.iface_ranges[i].1;
            if gc.n_dual() > 0 {
                adj_mul_block(
                    &gc.d_t_dual[sub.owner_pos[i]],
                    &glm,
                    off,
                    0,
                    1,
                    &mut rhs,
                    bs.dual_offsets[i],
                    0,
                );
            }
            off += len;
        }
        bs.stt.solve_in_place(&mut rhs);
        rhs
    });

    // (2) primal right-hand side.
    let mut c = DVector::zeros(bddc.n_primal);
    for (g_id, glob) in dd.globs.iter().enumerate() {
        let gc = &space.globs[g_id];
        if gc.n_primal() == 0 {
            continue;
        }
        let gl = g.rows(glob.dof_range.start, glob.dof_range.len());
        let mut tpg = DMatrix::zeros(gc.n_primal(), 1);
        linalg::gemm(
            ONE,
            &gc.t_primal,
            Op::Adj,
            &DMatrix::from_column_slice(gl.len(), 1, gl.as_slice()),
            Op::None,
            ZERO,
            &mut tpg,
        );
        for (i, pid) in bddc.primal_ranges[g_id].clone().enumerate() {
            c[pid] += tpg[(i, 0)];
        }
    }
    for (r, x1r) in x1.iter().enumerate() {
        let bs = &bddc.subs[r];
        if bs.primal_cols.is_empty() {
            continue;
        }
        let mut w = DMatrix::zeros(bs.primal_cols.len(), 1);
        linalg::gemm(ONE, &bs.s_dp, Op::Adj, x1r, Op::None, ZERO, &mut w);
        for (i, &pid) in bs.primal_cols.iter().enumerate() {
            c[pid] -= w[(i, 0)];
        }
    }

    // (3) coarse solve.
    let w_pi = match &bddc.coarse_solve {
        CoarseSolve::Direct(f) => f.solve_vec(&c),
        CoarseSolve::Recursive { op, perm } => {
            let mut rhs = DVector::zeros(op.dd.n_full);
            for (i, &f) in perm.iter().enumerate() {
                rhs[f] = c[i];
            }
            let (x, _) = op.solve(&rhs);
            let mut out = DVector::zeros(c.len());
            for (i, &f) in perm.iter().enumerate() {
                out[i] = x[f];
            }
            out
        }
    };

    // (4) dual corrections.
    let w_delta: Vec<DMatrix<C64>> = par_map(dd.subs.len(), |r| {
        let bs = &bddc.subs[r];
        let mut wl = DMatrix::zeros(bs.primal_cols.len(), 1);
        for (i, &pid) in bs.primal_cols.iter().enumerate() {
            wl[(i, 0)] = w_pi[pid];
        }
        let mut corr = DMatrix::zeros(bs.n_dual, 1);
        linalg::gemm(ONE, &bs.s_dp, Op::None, &wl, Op::None, ZERO, &mut corr);
        bs.stt.solve_in_place(&mut corr);
        &x1[r] - corr
    });

    // (5) scaled prolongation.
    let mut u = DVector::zeros(dd.n_iface());
    for (g_id, glob) in dd.globs.iter().enumerate() {
        let gc = &space.globs[g_id];
        if gc.n_primal() == 0 {
            continue;
        }
        let mut wp = DMatrix::zeros(gc.n_primal(), 1);
        for (i, pid) in bddc.primal_ranges[g_id].clone().enumerate() {
            wp[(i, 0)] = w_pi[pid];
        }
        let contrib = linalg::mul(&gc.t_primal, &wp);
        let mut dst = u.rows_mut(glob.dof_range.start, glob.dof_range.len());
        for i in 0..contrib.nrows() {
            dst[i] += contrib[(i, 0)];
        }
    }
    for (r, wd) in w_delta.iter().enumerate() {
        let sub = &dd.subs[r];
        let bs = &bddc.subs[r];
        for (i, &gg) in sub.globs.iter().enumerate() {
            let gc = &space.globs[gg];
            let nd = gc.n_dual();
            if nd == 0 {
                continue;
            }
            let wdg = wd.view((bs.dual_offsets[i], 0), (nd, 1)).into_owned();
            let contrib = linalg::mul(&gc.d_t_dual[sub.owner_pos[i]], &wdg);
            let (start, len) = sub.iface_ranges[i];
            let mut dst = u.rows_mut(start, len);
            for k in 0..len {
                dst[k] += contrib[(k, 0)];
            }
        }
    }
    u
}

// --- PCG ------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct PcgStats {
    pub iterations: usize,
    pub converged: bool,
    pub rel_residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cond: f64,
}

/// Extreme eigenvalue estimates from the CG scalar recurrences (Lanczos
/// tridiagonal).
pub fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    if k == 0 {
        return (1.0, 1.0);
    }
    let mut t = DMatrix::<f64>::zeros(k, k);
    t[(0, 0)] = 1.0 / alphas[0];
    for j in 1..k {
        t[(j, j)] = 1.0 / alphas[j] + betas[j - 1] / alphas[j - 1];
    }
    for j in 0..k - 1 {
        let e = betas[j].max(0.0).sqrt() / alphas[j];
        t[(j + 1, j)] = e;
        t[(j, j + 1)] = e;
    }
    let se = t.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in se.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Preconditioned CG for a Hermitian PD operator; `flexible` switches the
/// direction update to the Polak–Ribière form (for inexact preconditioners).
pub fn pcg<S, M>(
    b: &DVector<C64>,
    apply_s: S,
    apply_m: M,
    rtol: f64,
    maxit: usize,
    flexible: bool,
) -> Result<(DVector<C64>, PcgStats)>
where
    S: Fn(&DVector<C64>) -> DVector<C64>,
    M: Fn(&DVector<C64>) -> DVector<C64>,
{
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok((x, PcgStats {
            iterations: 0,
            converged: true,
            rel_residual: 0.0,
            lambda_min: 1.0,
            lambda_max: 1.0,
            cond: 1.0,
        }));
    }
    let mut r = b.clone();
    let mut z = apply_m(&r);
    let mut p = z.clone();
    let mut rz = z.dotc(&r).re;
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    for _ in 0..maxit {
        let sp = apply_s(&p);
        let psp = p.dotc(&sp);
        if psp.im.abs() > 1e-8 * psp.re.abs().max(1e-300) {
            return Err(Error::NonHermitianDetected(psp.im.abs() / psp.re.abs().max(1e-300)));
        }
        let alpha = rz / psp.re;
        x.axpy(Complex::new(alpha, 0.0), &p, ONE);
        let r_old = if flexible { Some(r.clone()) } else { None };
        r.axpy(Complex::new(-alpha, 0.0), &sp, ONE);
        iters += 1;
        alphas.push(alpha);
        if r.norm() <= rtol * bnorm {
            converged = true;
            break;
        }
        z = apply_m(&r);
        let rz_new = z.dotc(&r).re;
        let beta = if let Some(ro) = r_old {
            // Polak–Ribière: robust to a slightly varying preconditioner.
            (z.dotc(&r).re - z.dotc(&ro).re) / rz
        } else {
            rz_new / rz
        };
        betas.push(beta);
        p = &z + &p * Complex::new(beta, 0.0);
        rz = rz_new;
    }
    let (lo, hi) = lanczos_extremes(&alphas, &betas[..betas.len().min(alphas.len().saturating_sub(1))]);
    Ok((
        x,
        PcgStats {
            iterations: iters,
            converged,
            rel_residual: r.norm() / bnorm,
            lambda_min: lo,
            lambda_max: hi,
            cond: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        },
    ))
}

// --- level operator and recursion ------------------------------------------------

pub struct LevelOperator {
    pub level: usize,
    pub dd: DdStructure,
    pub kernel: Kernel,
    pub bddc: Bddc,
    pub rtol: f64,
    pub maxit: usize,
    pub flexible: bool,
}

impl LevelOperator {
    pub fn apply_iface(&self, x: &DVector<C64>) -> DVector<C64> {
        apply_iface(&self.dd, &self.kernel, x)
    }

    pub fn apply_preconditioner(&self, g: &DVector<C64>) -> DVector<C64> {
        apply_preconditioner(&self.dd, &self.kernel, &self.bddc, g)
    }

    /// Condense to the interface, run BDDC-PCG, back-substitute. PCG failure
    /// to converge is reported in the stats, not as an error.
    pub fn solve(&self, b: &DVector<C64>) -> (DVector<C64>, PcgStats) {
        let g = condense(&self.dd, &self.kernel, b);
        let (u_if, stats) = pcg(
            &g,
            |x| self.apply_iface(x),
            |x| self.apply_preconditioner(x),
            self.rtol,
            self.maxit,
            self.flexible,
        )
        .unwrap_or_else(|e| panic!("PCG guard tripped at level {}: {e}", self.level));
        (expand(&self.dd, &self.kernel, b, &u_if), stats)
    }
}

/// How to build the solver hierarchy.
pub struct SolverOptions {
    pub params: CoarseParams,
    /// Glob-block mode at level 0.
    pub mode: BlockMode,
    /// Total number of levels (`2` = two-level BDDC with direct coarse solve).
    pub levels: usize,
    pub rtol: f64,
    pub coarse_rtol: f64,
    pub maxit: usize,
    pub coarse_maxit: usize,
    pub flexible: bool,
    /// Also build vertex scalings (verification suite).
    pub full_glob_data: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            params: CoarseParams {
                scaling: crate::coarse::Scaling::Deluxe,
                theta_f: 10.0,
                theta_e: 1000.0,
            },
            mode: BlockMode::Exact,
            levels: 2,
            rtol: 1e-5,
            coarse_rtol: 1e-2,
            maxit: 100,
            coarse_maxit: 100,
            flexible: false,
            full_glob_data: false,
        }
    }
}

/// Per-level summary of the hierarchy.
#[derive(Debug, Clone)]
pub struct LevelInfo {
    pub level: usize,
    pub n_iface: usize,
    pub pnum_f: usize,
    pub pnum_e: usize,
    pub pnum_v: usize,
    pub n_primal: usize,
}

/// Builds the full solver hierarchy from the assembled fine system.
pub fn build_solver(sys: SchurSystem, opts: &SolverOptions) -> Result<(LevelOperator, Vec<LevelInfo>)> {
    let blocks = glob_blocks(&sys, opts.mode, opts.full_glob_data)?;
    build_solver_with_blocks(sys, blocks, opts)
}

/// Like [`build_solver`] with the level-0 glob blocks already extracted
/// (lets callers time or reuse that stage separately).
pub fn build_solver_with_blocks(
    sys: SchurSystem,
    blocks: Vec<GlobBlockSet>,
    opts: &SolverOptions,
) -> Result<(LevelOperator, Vec<LevelInfo>)> {
    let dd = dd_from_fine(&sys);
    let kernel = Kernel::Fine(sys);
    let mut infos = Vec::new();
    let op = build_level(0, dd, kernel, blocks, opts, &mut infos)?;
    Ok((op, infos))
}

fn build_level(
    level: usize,
    dd: DdStructure,
    kernel: Kernel,
    blocks: Vec<GlobBlockSet>,
    opts: &SolverOptions,
    infos: &mut Vec<LevelInfo>,
) -> Result<LevelOperator> {
    let kinds = dd.glob_kinds();
    let space = build_coarse_space(
        &kinds,
        &blocks,
        opts.params,
        opts.full_glob_data && level == 0,
        level > 0,
    )?;
    let mut primal_ranges = Vec::with_capacity(space.globs.len());
    let mut np = 0;
    for gc in &space.globs {
        primal_ranges.push(np..np + gc.n_primal());
        np += gc.n_primal();
    }
    let n_primal = np;

    let subs: Vec<BddcSub> = try_par_map(dd.subs.len(), |r| {
        build_bddc_sub(level, &dd, &kernel, &space, &primal_ranges, r)
    })?;

    // Release the fine block-sparse A_ΓΓ (only needed for the products above).
    let mut kernel = kernel;
    if let Kernel::Fine(sys) = &mut kernel {
        for s in &mut sys.subs {
            s.drop_a_gg();
        }
    }

    infos.push(LevelInfo {
        level,
        n_iface: dd.n_iface(),
        pnum_f: space.pnum_f,
        pnum_e: space.pnum_e,
        pnum_v: space.pnum_v,
        n_primal,
    });

    let remaining = opts.levels - level;
    let can_coarsen = dd.n_grid >= 2;
    let coarse_solve = if remaining <= 2 || !can_coarsen {
        // Direct factorization of the assembled primal matrix.
        let mut s_pi = DMatrix::zeros(n_primal, n_primal);
        for bs in &subs {
            let k = bs.primal_cols.len();
            for j in 0..k {
                for i in 0..k {
                    s_pi[(bs.primal_cols[i], bs.primal_cols[j])] += bs.coarse_contrib[(i, j)];
                }
            }
        }
        linalg::hermitianize(&mut s_pi);
        let f = linalg::factor_hpd(s_pi, PIVOT_FLOOR, None)
            .map_err(|_| Error::SingularCoarseMatrix(level + 1))?;
        CoarseSolve::Direct(f)
    } else {
        let (cdd, ckernels, perm) = coarsen(level, &dd, &subs, &primal_ranges, n_primal)?;
        let cblocks = coarse_glob_blocks(&cdd, &ckernels);
        let mut op = build_level(level + 1, cdd, Kernel::Coarse(ckernels), cblocks, opts, infos)?;
        op.rtol = opts.coarse_rtol;
        op.maxit = opts.coarse_maxit;
        CoarseSolve::Recursive { op: Box::new(op), perm }
    };

    Ok(LevelOperator {
        level,
        dd,
        kernel,
        bddc: Bddc { space, primal_ranges, n_primal, subs, coarse_solve },
        rtol: if level == 0 { opts.rtol } else { opts.coarse_rtol },
        maxit: if level == 0 { opts.maxit } else { opts.coarse_maxit },
        flexible: opts.flexible || level > 0,
    })
}

/// Builds the level-`s+1` structure by merging 2×2×2 subdomains; the new
/// dofs are the level-`s` primal dofs, renumbered `[interiors][interface]`.
fn coarsen(
    level: usize,
    dd: &DdStructure,
    subs: &[BddcSub],
    primal_ranges: &[Range<usize>],
    n_primal: usize,
) -> Result<(DdStructure, Vec<CoarseSubKernel>, Vec<usize>)> {
    if dd.n_grid % 2 != 0 {
        return Err(Error::NotDivisible { level: level + 1, n: dd.n_grid });
    }
    let nc = dd.n_grid / 2;
    let coarse_of = |r: usize| -> usize {
        let c = dd.subs[r].coords;
        (c[0] / 2) + nc * ((c[1] / 2) + nc * (c[2] / 2))
    };
    let n_csubs = nc * nc * nc;

    // Coarse owner set per fine glob.
    let mut ncs: Vec<Vec<usize>> = Vec::with_capacity(dd.globs.len());
    for glob in &dd.globs {
        let mut s: Vec<usize> = glob.owners.iter().map(|&r| coarse_of(r)).collect();
        s.sort_unstable();
        s.dedup();
        ncs.push(s);
    }

    // Interior fine globs per coarse sub, and coarse globs keyed by owner set.
    let mut interior_globs: Vec<Vec<usize>> = vec![Vec::new(); n_csubs];
    let mut cglob_map: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (g, s) in ncs.iter().enumerate() {
        if primal_ranges[g].is_empty() {
            continue;
        }
        if s.len() == 1 {
            interior_globs[s[0]].push(g);
        } else {
            cglob_map.entry(s.clone()).or_default().push(g);
        }
    }
    let mut keys: Vec<Vec<usize>> = cglob_map.keys().cloned().collect();
    keys.sort();

    // New numbering: interiors per coarse sub, then coarse globs.
    let mut perm = vec![usize::MAX; n_primal]; // primal id -> new full id
    let mut next = 0usize;
    let mut interior_ids: Vec<Vec<usize>> = vec![Vec::new(); n_csubs];
    for cs in 0..n_csubs {
        for &g in &interior_globs[cs] {
            for pid in primal_ranges[g].clone() {
                perm[pid] = next;
                interior_ids[cs].push(next);
                next += 1;
            }
        }
    }
    let n_interior_total = next;
    let mut cglobs = Vec::with_capacity(keys.len());
    let mut iface_pos = 0usize;
    for key in &keys {
        let members = &cglob_map[key];
        let start = iface_pos;
        for &g in members {
            for pid in primal_ranges[g].clone() {
                perm[pid] = next;
                next += 1;
                iface_pos += 1;
            }
        }
        let kind = match key.len() {
            2 => GlobKind::Face,
            3 | 4 => GlobKind::Edge,
            _ => GlobKind::Vertex,
        };
        cglobs.push(DdGlob { kind, owners: key.clone(), dof_range: start..iface_pos });
    }
    debug_assert_eq!(next, n_primal);
    let n_iface = iface_pos;
    let iface_to_full: Vec<usize> = (0..n_iface).map(|i| n_interior_total + i).collect();

    let csubs: Vec<DdSub> = (0..n_csubs)
        .map(|cs| {
            let coords = [cs % nc, (cs / nc) % nc, cs / (nc * nc)];
            let globs: Vec<usize> =
                (0..cglobs.len()).filter(|&g| cglobs[g].owners.contains(&cs)).collect();
            let owner_pos: Vec<usize> = globs
                .iter()
                .map(|&g| cglobs[g].owners.iter().position(|&o| o == cs).unwrap())
                .collect();
            let iface_ranges: Vec<(usize, usize)> = globs
                .iter()
                .map(|&g| (cglobs[g].dof_range.start, cglobs[g].dof_range.len()))
                .collect();
            DdSub { coords, interior_ids: interior_ids[cs].clone(), globs, owner_pos, iface_ranges }
        })
        .collect();

    let cdd = DdStructure {
        n_full: n_primal,
        n_grid: nc,
        globs: cglobs,
        subs: csubs,
        iface_to_full,
    };

    // Per-coarse-sub dense local matrices from the children's contributions.
    let children: Vec<Vec<usize>> = {
        let mut ch = vec![Vec::new(); n_csubs];
        for r in 0..dd.subs.len() {
            ch[coarse_of(r)].push(r);
        }
        ch
    };
    let ckernels: Vec<Result<CoarseSubKernel>> = par_map(n_csubs, |cs| {
        let sub = &cdd.subs[cs];
        let ni = sub.interior_ids.len();
        let ng = sub.n_iface();
        // full id -> local position
        let mut local: HashMap<usize, usize> = HashMap::new();
        for (i, &id) in sub.interior_ids.iter().enumerate() {
            local.insert(id, i);
        }
        let mut off = ni;
        for &(start, len) in &sub.iface_ranges {
            for k in 0..len {
                local.insert(n_interior_total + start + k, off + k);
            }
            off += len;
        }
        let nl = ni + ng;
        let mut a = DMatrix::zeros(nl, nl);
        for &r in &children[cs] {
            let bs = &subs[r];
            let ids: Vec<usize> =
                bs.primal_cols.iter().map(|&pid| local[&perm[pid]]).collect();
            for (j, &lj) in ids.iter().enumerate() {
                for (i, &li) in ids.iter().enumerate() {
                    a[(li, lj)] += bs.coarse_contrib[(i, j)];
                }
            }
        }
        linalg::hermitianize(&mut a);
        let a_ii = a.view((0, 0), (ni, ni)).into_owned();
        let factor = linalg::factor_hpd(a_ii, PIVOT_FLOOR, None).map_err(|pf| {
            Error::SingularInterior { subdomain: cs, index: pf.index, pivot: pf.pivot }
        })?;
        let a_ig = a.view((0, ni), (ni, ng)).into_owned();
        let mut schur = a.view((ni, ni), (ng, ng)).into_owned();
        if ni > 0 {
            let mut xx = a_ig.clone();
            factor.forward_in_place(&mut xx);
            linalg::gemm(-ONE, &xx, Op::Adj, &xx, Op::None, ONE, &mut schur);
        }
        linalg::hermitianize(&mut schur);
        Ok(CoarseSubKernel { factor, a_ig, schur })
    });
    let ckernels: Vec<CoarseSubKernel> = ckernels.into_iter().collect::<Result<_>>()?;

    Ok((cdd, ckernels, perm))
}
