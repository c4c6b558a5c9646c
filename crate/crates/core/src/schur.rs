//! Interface Schur operator and per-glob Schur blocks.
//!
//! Each subdomain's clipped local form splits as `[[A_II, A_IΓ], [A_ΓI,
//! A_ΓΓ]]` over its sole-owned (interior) and shared (interface) dofs. The
//! assembled interface operator is applied matrix-free:
//!
//! `Ŝ x = (A x̃)|_Γ − Σ_r A_ΓI^{(r)} A_II^{(r),-1} A_IΓ^{(r)} x|_r`
//!
//! which only needs the global block matrix, one dense `A_IΓ` and one interior
//! Cholesky factor per subdomain — never a dense local Schur complement. The
//! clipped `A_ΓΓ^{(r)}` blocks are kept in block-sparse form during setup (the
//! partially assembled solver needs `S^{(r)} C` products) and can be dropped
//! afterwards.
//!
//! The adaptive coarse space needs two small matrices per glob and owner: the
//! glob block `S^{(ν)}` of the local Schur complement, and `S̄^{(ν)}`, the
//! Schur complement of the local Schur onto the glob. In economic mode both
//! are computed from a *slab*: the owned elements within distance `η` of the
//! glob, with homogeneous (dropped-coupling) conditions at the slab's inner
//! boundary. The slab's non-glob dofs are ordered element-lexicographically
//! with the two shortest axes fastest, which makes the eliminated block
//! banded; the elimination then runs in `O(n b^2)` instead of `O(n^3)`.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{
    assemble_form, assemble_global, assemble_rhs_exact, wave_directions, BlockMatrix,
    BoundaryCondition, Directions, FormSpec,
};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, HpdFactor, ONE, ZERO};
use crate::mesh::{build_mesh, classify_globs, GlobKind, Mesh, MeshConfig, Partition};
use crate::util::{par_map, try_par_map};

/// Relative pivot floor for level-0 factorizations.
pub const PIVOT_FLOOR: f64 = 1e-13;

/// Per-subdomain elimination data.
pub struct SubdomainSchur {
    pub r: usize,
    /// Interior (sole-owned) dofs.
    pub ni: usize,
    /// Local interface dofs.
    pub ng: usize,
    /// Cholesky factor of `A_II`.
    pub factor: HpdFactor,
    /// `A_IΓ` (interior rows, local interface columns).
    pub a_ig: DMatrix<C64>,
    /// Clipped `A_ΓΓ` in block-sparse form over the local interface elements;
    /// only needed during solver setup.
    pub a_gg: Option<BlockMatrix>,
    /// Global element ids of the interior elements (row block order).
    pub interior_elems: Vec<usize>,
    /// Contiguous global-interface ranges `(start, len)` whose concatenation
    /// is the local interface ordering (one range per glob of this
    /// subdomain, in global glob order).
    pub iface_ranges: Vec<(usize, usize)>,
}

impl SubdomainSchur {
    /// Local interface values gathered from a global interface vector.
    pub fn gather(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.ng);
        let mut off = 0;
        for &(start, len) in &self.iface_ranges {
            out.rows_mut(off, len).copy_from(&x.rows(start, len));
            off += len;
        }
        out
    }

    /// Adds local interface values into a global interface vector.
    pub fn scatter_add(&self, y: &mut DVector<C64>, v: &DVector<C64>) {
        let mut off = 0;
        for &(start, len) in &self.iface_ranges {
            let mut dst = y.rows_mut(start, len);
            dst += v.rows(off, len);
            off += len;
        }
    }

    /// `A_II^{-1} B` for a dense right-hand side.
    pub fn interior_solve(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        let mut x = b.clone();
        self.factor.solve_in_place(&mut x);
        x
    }

    /// `S^{(r)} X = A_ΓΓ X − A_ΓI A_II^{-1} A_IΓ X` for dense `X` over the
    /// local interface dofs. Requires `a_gg` (solver setup phase).
    pub fn apply_local_schur(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let a_gg = self.a_gg.as_ref().expect("a_gg dropped before setup finished");
        let mut y = DMatrix::zeros(self.ng, x.ncols());
        a_gg.gemm_acc(ONE, x, &mut y);
        if self.ni > 0 {
            let mut t = DMatrix::zeros(self.ni, x.ncols());
            linalg::gemm(ONE, &self.a_ig, linalg::Op::None, x, linalg::Op::None, ZERO, &mut t);
            self.factor.solve_in_place(&mut t);
            linalg::gemm(-ONE, &self.a_ig, linalg::Op::Adj, &t, linalg::Op::None, ONE, &mut y);
        }
        y
    }

    /// Releases the block-sparse `A_ΓΓ` once the solver is set up.
    pub fn drop_a_gg(&mut self) {
        self.a_gg = None;
    }
}

/// Assembled problem: mesh, directions, partition, global form, load vector,
/// and per-subdomain elimination data.
pub struct SchurSystem {
    pub mesh: Mesh,
    pub dirs: Directions,
    pub part: Partition,
    pub bc: BoundaryCondition,
    pub a: BlockMatrix,
    pub rhs: DVector<C64>,
    pub subs: Vec<SubdomainSchur>,
}

impl SchurSystem {
    pub fn build(cfg: MeshConfig, bc: BoundaryCondition) -> Result<Self> {
        let mesh = build_mesh(cfg)?;
        let dirs = wave_directions(cfg.p)?;
        let part = classify_globs(&mesh);
        let a = assemble_global(&mesh, &dirs, bc);
        let rhs = assemble_rhs_exact(&mesh, &dirs, bc);
        let p = cfg.p;

        let subs = try_par_map(part.subs.len(), |r| {
            let sub = &part.subs[r];
            let ni_e = sub.interior_elems.len();
            let local = assemble_form(
                &mesh,
                &dirs,
                &FormSpec { elems: &sub.elems, clip: Some((sub.box_lo, sub.box_hi)), bc },
            );
            let interior_idx: Vec<usize> = (0..ni_e).collect();
            let iface_idx: Vec<usize> = (ni_e..sub.elems.len()).collect();
            let a_ii = local.dense_sub(&interior_idx, &interior_idx);
            let a_ig = local.dense_sub(&interior_idx, &iface_idx);
            let factor = linalg::factor_hpd(a_ii, PIVOT_FLOOR, None).map_err(|pf| {
                Error::SingularInterior { subdomain: r, index: pf.index, pivot: pf.pivot }
            })?;
            // Re-key the interface-interface blocks to 0-based local
            // interface element indices.
            let n_if = sub.elems.len() - ni_e;
            let mut a_gg = BlockMatrix::new(n_if, p);
            for i in 0..n_if {
                for j in 0..n_if {
                    if let Some(blk) = local.block(ni_e + i, ni_e + j) {
                        a_gg.add(i, j, blk);
                    }
                }
            }
            a_gg.finalize();
            let iface_ranges: Vec<(usize, usize)> = sub
                .globs
                .iter()
                .map(|&g| {
                    let gr = &part.globs[g].dof_range;
                    (gr.start, gr.len())
                })
                .collect();
            Ok(SubdomainSchur {
                r,
                ni: ni_e * p,
                ng: n_if * p,
                factor,
                a_ig,
                a_gg: Some(a_gg),
                interior_elems: sub.interior_elems.clone(),
                iface_ranges,
            })
        })?;

        Ok(SchurSystem { mesh, dirs, part, bc, a, rhs, subs })
    }

    pub fn n_interface(&self) -> usize {
        self.part.n_interface
    }

    /// `Ŝ x` on the global interface.
    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let p = self.dirs.p;
        // Expand to the full dof vector and multiply by the global form. The
        // product restricted to interface dofs picks up the assembled A_ΓΓ
        // (clipped contributions sum to the global blocks).
        let mut full = DVector::zeros(self.mesh.total_dofs());
        for (gid, &dof) in self.part.interface_dofs.iter().enumerate() {
            full[dof] = x[gid];
        }
        let afull = self.a.matvec(&full);
        let mut y = DVector::zeros(self.n_interface());
        for (gid, &dof) in self.part.interface_dofs.iter().enumerate() {
            y[gid] = afull[dof];
        }
        // Subtract the harmonic-extension corrections subdomain by subdomain.
        let corrections: Vec<DVector<C64>> = par_map(self.subs.len(), |r| {
            let sub = &self.subs[r];
            let xl = sub.gather(x);
            let mut t = DMatrix::zeros(sub.ni, 1);
            linalg::gemm(
                ONE,
                &sub.a_ig,
                linalg::Op::None,
                &DMatrix::from_column_slice(sub.ng, 1, xl.as_slice()),
                linalg::Op::None,
                ZERO,
                &mut t,
            );
            sub.factor.solve_in_place(&mut t);
            let mut w = DMatrix::zeros(sub.ng, 1);
            linalg::gemm(ONE, &sub.a_ig, linalg::Op::Adj, &t, linalg::Op::None, ZERO, &mut w);
            DVector::from_column_slice(w.as_slice())
        });
        let _ = p;
        for (r, w) in corrections.iter().enumerate() {
            let neg = -w;
            self.subs[r].scatter_add(&mut y, &neg);
        }
        y
    }

    /// Condensed right-hand side `ĝ = b|_Γ − Σ_r A_ΓI A_II^{-1} b_I^{(r)}`.
    pub fn condense_rhs(&self, b: &DVector<C64>) -> DVector<C64> {
        let p = self.dirs.p;
        let mut g = DVector::zeros(self.n_interface());
        for (gid, &dof) in self.part.interface_dofs.iter().enumerate() {
            g[gid] = b[dof];
        }
        let corrections: Vec<DVector<C64>> = par_map(self.subs.len(), |r| {
            let sub = &self.subs[r];
            let mut bi = DMatrix::zeros(sub.ni, 1);
            for (i, &e) in sub.interior_elems.iter().enumerate() {
                for l in 0..p {
                    bi[(i * p + l, 0)] = b[e * p + l];
                }
            }
            sub.factor.solve_in_place(&mut bi);
            let mut w = DMatrix::zeros(sub.ng, 1);
            linalg::gemm(ONE, &sub.a_ig, linalg::Op::Adj, &bi, linalg::Op::None, ZERO, &mut w);
            DVector::from_column_slice(w.as_slice())
        });
        for (r, w) in corrections.iter().enumerate() {
            let neg = -w;
            self.subs[r].scatter_add(&mut g, &neg);
        }
        g
    }

    /// Recovers the full dof vector from an interface solution by back
    /// substitution: `u_I^{(r)} = A_II^{-1} (b_I^{(r)} − A_IΓ u_Γ|_r)`.
    pub fn expand(&self, b: &DVector<C64>, u_iface: &DVector<C64>) -> DVector<C64> {
        let p = self.dirs.p;
        let mut u = DVector::zeros(self.mesh.total_dofs());
        for (gid, &dof) in self.part.interface_dofs.iter().enumerate() {
            u[dof] = u_iface[gid];
        }
        let interiors: Vec<DMatrix<C64>> = par_map(self.subs.len(), |r| {
            let sub = &self.subs[r];
            let mut bi = DMatrix::zeros(sub.ni, 1);
            for (i, &e) in sub.interior_elems.iter().enumerate() {
                for l in 0..p {
                    bi[(i * p + l, 0)] = b[e * p + l];
                }
            }
            let ug = sub.gather(u_iface);
            linalg::gemm(
                -ONE,
                &sub.a_ig,
                linalg::Op::None,
                &DMatrix::from_column_slice(sub.ng, 1, ug.as_slice()),
                linalg::Op::None,
                ONE,
                &mut bi,
            );
            sub.factor.solve_in_place(&mut bi);
            bi
        });
        for (r, ui) in interiors.iter().enumerate() {
            for (i, &e) in self.subs[r].interior_elems.iter().enumerate() {
                for l in 0..p {
                    u[e * p + l] = ui[(i * p + l, 0)];
                }
            }
        }
        u
    }

    /// Dense clipped local form of subdomain `r` in `[interior][interface]`
    /// block order (small scales / verification).
    pub fn local_dense_form(&self, r: usize) -> DMatrix<C64> {
        let sub = &self.part.subs[r];
        let local = assemble_form(
            &self.mesh,
            &self.dirs,
            &FormSpec { elems: &sub.elems, clip: Some((sub.box_lo, sub.box_hi)), bc: self.bc },
        );
        local.to_dense()
    }

    /// Dense local Schur complement of subdomain `r` over its interface dofs.
    pub fn local_dense_schur(&self, r: usize) -> Result<DMatrix<C64>> {
        let a = self.local_dense_form(r);
        let ni = self.subs[r].ni;
        linalg::schur_onto_trailing(&a, ni, PIVOT_FLOOR, None).map_err(|pf| {
            Error::SingularInterior { subdomain: r, index: pf.index, pivot: pf.pivot }
        })
    }
}

// --- per-glob Schur blocks ---------------------------------------------------

/// Glob blocks of one glob: per owner (in `glob.owners` order) the local
/// Schur glob block `S^{(ν)}` and the onto-glob Schur complement `S̄^{(ν)}`.
#[derive(Debug, Clone, Default)]
pub struct GlobBlockSet {
    pub s: Vec<DMatrix<C64>>,
    pub sbar: Vec<DMatrix<C64>>,
}

#[derive(Debug, Clone, Copy)]
pub enum BlockMode {
    /// From the full local Schur complements.
    Exact,
    /// From slabs of width `eta` around each glob.
    Economic { eta: f64 },
}

/// Axis-aligned distance between two boxes (0 when touching).
fn box_distance(lo1: [f64; 3], hi1: [f64; 3], lo2: [f64; 3], hi2: [f64; 3]) -> f64 {
    let mut d2 = 0.0;
    for a in 0..3 {
        let gap = (lo1[a] - hi2[a]).max(lo2[a] - hi1[a]).max(0.0);
        d2 += gap * gap;
    }
    d2.sqrt()
}

/// Computes `S^{(ν)}` and `S̄^{(ν)}` for every face and edge glob (vertex
/// globs too with `include_vertices`, as needed by the verification suite).
pub fn glob_blocks(
    sys: &SchurSystem,
    mode: BlockMode,
    include_vertices: bool,
) -> Result<Vec<GlobBlockSet>> {
    match mode {
        BlockMode::Exact => glob_blocks_exact(sys, include_vertices),
        BlockMode::Economic { eta } => glob_blocks_economic(sys, eta, include_vertices),
    }
}

fn wanted(sys: &SchurSystem, g: usize, include_vertices: bool) -> bool {
    include_vertices || sys.part.globs[g].kind != GlobKind::Vertex
}

fn glob_blocks_exact(sys: &SchurSystem, include_vertices: bool) -> Result<Vec<GlobBlockSet>> {
    let p = sys.dirs.p;
    // One task per subdomain: form the local Schur once, slice per glob.
    let per_sub: Vec<Vec<(usize, usize, DMatrix<C64>, DMatrix<C64>)>> =
        try_par_map(sys.subs.len(), |r| {
            let s_loc = sys.local_dense_schur(r)?;
            let sub = &sys.part.subs[r];
            let mut out = Vec::new();
            // Local interface offsets per glob of r.
            let mut offsets = Vec::with_capacity(sub.globs.len());
            let mut off = 0;
            for &g in &sub.globs {
                let len = sys.part.globs[g].ndofs();
                offsets.push((g, off, len));
                off += len;
            }
            for &(g, goff, glen) in &offsets {
                if !wanted(sys, g, include_vertices) {
                    continue;
                }
                let owner_pos =
                    sys.part.globs[g].owners.iter().position(|&o| o == r).unwrap();
                let s_blk = s_loc.view((goff, goff), (glen, glen)).into_owned();
                // Permute to [other interface dofs][glob dofs] and eliminate.
                let ng = s_loc.nrows();
                let mut perm: Vec<usize> = (0..ng).filter(|&i| i < goff || i >= goff + glen).collect();
                perm.extend(goff..goff + glen);
                let mut reord = DMatrix::zeros(ng, ng);
                for (i, &pi) in perm.iter().enumerate() {
                    for (j, &pj) in perm.iter().enumerate() {
                        reord[(i, j)] = s_loc[(pi, pj)];
                    }
                }
                let sbar = linalg::schur_onto_trailing(&reord, ng - glen, PIVOT_FLOOR, None)
                    .map_err(|_| Error::SingularEliminationBlock { glob: g, subdomain: r })?;
                out.push((g, owner_pos, s_blk, sbar));
            }
            let _ = p;
            Ok(out)
        })?;

    collect_blocks(sys, per_sub, include_vertices)
}

fn glob_blocks_economic(
    sys: &SchurSystem,
    eta: f64,
    include_vertices: bool,
) -> Result<Vec<GlobBlockSet>> {
    let p = sys.dirs.p;
    // One task per (glob, owner) pair.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (g, glob) in sys.part.globs.iter().enumerate() {
        if !wanted(sys, g, include_vertices) {
            continue;
        }
        for pos in 0..glob.owners.len() {
            pairs.push((g, pos));
        }
    }

    let results: Vec<(usize, usize, DMatrix<C64>, DMatrix<C64>)> = try_par_map(pairs.len(), |i| {
        let (g, owner_pos) = pairs[i];
        let glob = &sys.part.globs[g];
        let r = glob.owners[owner_pos];
        let (s, sbar) = economic_pair(sys, g, r, eta)?;
        Ok::<_, Error>((g, owner_pos, s, sbar))
    })?;

    let _ = p;
    let mut out = vec![GlobBlockSet::default(); sys.part.globs.len()];
    for (g, glob) in sys.part.globs.iter().enumerate() {
        if wanted(sys, g, include_vertices) {
            out[g].s = vec![DMatrix::zeros(0, 0); glob.owners.len()];
            out[g].sbar = vec![DMatrix::zeros(0, 0); glob.owners.len()];
        }
    }
    for (g, pos, s, sbar) in results {
        out[g].s[pos] = s;
        out[g].sbar[pos] = sbar;
    }
    Ok(out)
}

/// Economic `(S, S̄)` for one glob/owner from a slab form.
fn economic_pair(
    sys: &SchurSystem,
    g: usize,
    r: usize,
    eta: f64,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let p = sys.dirs.p;
    let mesh = &sys.mesh;
    let glob = &sys.part.globs[g];
    let sub = &sys.part.subs[r];

    // Glob bounding box.
    let mut glo = [f64::INFINITY; 3];
    let mut ghi = [f64::NEG_INFINITY; 3];
    for &e in &glob.elems {
        let (lo, hi) = mesh.elem_box(e);
        for a in 0..3 {
            glo[a] = glo[a].min(lo[a]);
            ghi[a] = ghi[a].max(hi[a]);
        }
    }

    // Slab: owned elements strictly within eta of the glob, minus the glob.
    let in_glob: std::collections::HashSet<usize> = glob.elems.iter().copied().collect();
    let mut nonglob: Vec<usize> = sub
        .elems
        .iter()
        .copied()
        .filter(|&e| !in_glob.contains(&e))
        .filter(|&e| {
            let (lo, hi) = mesh.elem_box(e);
            box_distance(lo, hi, glo, ghi) < eta - 1e-12
        })
        .collect();
    nonglob.sort_unstable();
    nonglob.dedup();

    // Order non-glob elements lexicographically with the two shortest slab
    // axes varying fastest, for a banded eliminated block.
    let coords: Vec<[usize; 3]> = nonglob.iter().map(|&e| mesh.elem_coords(e)).collect();
    let mut ext = [0usize; 3];
    for a in 0..3 {
        let mn = coords.iter().map(|c| c[a]).min().unwrap_or(0);
        let mx = coords.iter().map(|c| c[a]).max().unwrap_or(0);
        ext[a] = mx - mn + 1;
    }
    let mut axes = [0usize, 1, 2];
    axes.sort_by_key(|&a| std::cmp::Reverse(ext[a])); // slowest (largest) first
    let mut order: Vec<usize> = (0..nonglob.len()).collect();
    order.sort_by_key(|&i| (coords[i][axes[0]], coords[i][axes[1]], coords[i][axes[2]]));
    let nonglob: Vec<usize> = order.iter().map(|&i| nonglob[i]).collect();

    let mut elems = nonglob.clone();
    elems.extend_from_slice(&glob.elems);
    let n_ng = nonglob.len();

    let slab = assemble_form(
        mesh,
        &sys.dirs,
        &FormSpec { elems: &elems, clip: Some((sub.box_lo, sub.box_hi)), bc: sys.bc },
    );

    // Element-level half bandwidth of the non-glob block.
    let mut band_e = 0usize;
    for i in 0..n_ng {
        for j in 0..n_ng {
            if i > j && slab.block(i, j).is_some() {
                band_e = band_e.max(i - j);
            }
        }
    }
    let bw = band_e * p + p.saturating_sub(1);

    let dense = slab.to_dense();
    let glen = glob.ndofs();

    // S̄: eliminate every non-glob slab dof (banded).
    let sbar = linalg::schur_onto_trailing(&dense, n_ng * p, PIVOT_FLOOR, Some(bw.max(1)))
        .map_err(|_| Error::SingularEliminationBlock { glob: g, subdomain: r })?;

    // S: eliminate only the slab's sole-owned interior dofs, then take the
    // glob block of the remainder.
    let interior: std::collections::HashSet<usize> = sub.interior_elems.iter().copied().collect();
    let mut perm_elems: Vec<usize> = (0..n_ng).filter(|&i| interior.contains(&elems[i])).collect();
    let ni_e = perm_elems.len();
    perm_elems.extend((0..n_ng).filter(|&i| !interior.contains(&elems[i])));
    perm_elems.extend(n_ng..elems.len());
    let nb = elems.len();
    let mut reord = DMatrix::zeros(nb * p, nb * p);
    for (bi, &obi) in perm_elems.iter().enumerate() {
        for (bj, &obj) in perm_elems.iter().enumerate() {
            let src = dense.view((obi * p, obj * p), (p, p));
            reord.view_mut((bi * p, bj * p), (p, p)).copy_from(&src);
        }
    }
    let after = linalg::schur_onto_trailing(&reord, ni_e * p, PIVOT_FLOOR, None)
        .map_err(|_| Error::SingularEliminationBlock { glob: g, subdomain: r })?;
    let na = after.nrows();
    let s = after.view((na - glen, na - glen), (glen, glen)).into_owned();
    Ok((s, sbar))
}

fn collect_blocks(
    sys: &SchurSystem,
    per_sub: Vec<Vec<(usize, usize, DMatrix<C64>, DMatrix<C64>)>>,
    include_vertices: bool,
) -> Result<Vec<GlobBlockSet>> {
    let mut out = vec![GlobBlockSet::default(); sys.part.globs.len()];
    for (g, glob) in sys.part.globs.iter().enumerate() {
        if wanted(sys, g, include_vertices) {
            out[g].s = vec![DMatrix::zeros(0, 0); glob.owners.len()];
            out[g].sbar = vec![DMatrix::zeros(0, 0); glob.owners.len()];
        }
    }
    for items in per_sub {
        for (g, pos, s, sbar) in items {
            out[g].s[pos] = s;
            out[g].sbar[pos] = sbar;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::exact_direction;
    use crate::assembly::l2_relative_error;

    const PI: f64 = std::f64::consts::PI;

    fn tiny_sys() -> SchurSystem {
        SchurSystem::build(
            MeshConfig { n: 2, m: 1, p: 6, kappa: 2.0 * PI },
            BoundaryCondition::Robin,
        )
        .unwrap()
    }

    /// Dense assembled Schur complement from the global form (independent
    /// path: permute to [interiors][interface] and eliminate).
    fn dense_schur_reference(sys: &SchurSystem) -> DMatrix<C64> {
        let nd = sys.mesh.total_dofs();
        let dense = sys.a.to_dense();
        let mut interior: Vec<usize> = Vec::new();
        for d in 0..nd {
            if sys.part.dof_to_interface[d] == u32::MAX {
                interior.push(d);
            }
        }
        let mut perm = interior.clone();
        perm.extend(sys.part.interface_dofs.iter().copied());
        let mut reord = DMatrix::zeros(nd, nd);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                reord[(i, j)] = dense[(pi, pj)];
            }
        }
        linalg::schur_onto_trailing(&reord, interior.len(), 1e-14, None).unwrap()
    }

    #[test]
    fn implicit_apply_matches_dense_schur() {
        let sys = tiny_sys();
        let s_ref = dense_schur_reference(&sys);
        let n = sys.n_interface();
        for col in [0usize, 1, n / 2, n - 1] {
            let mut e = DVector::zeros(n);
            e[col] = ONE;
            let y = sys.apply(&e);
            let yr = s_ref.column(col).into_owned();
            assert!((y - &yr).norm() <= 1e-9 * yr.norm(), "col {col}");
        }
    }

    #[test]
    fn local_schurs_tile_assembled_schur() {
        let sys = tiny_sys();
        let s_ref = dense_schur_reference(&sys);
        let n = sys.n_interface();
        let mut sum = DMatrix::zeros(n, n);
        for r in 0..sys.subs.len() {
            let sl = sys.local_dense_schur(r).unwrap();
            // Map local interface indices to global interface indices.
            let mut map = Vec::with_capacity(sys.subs[r].ng);
            for &(start, len) in &sys.subs[r].iface_ranges {
                map.extend(start..start + len);
            }
            for (i, &gi) in map.iter().enumerate() {
                for (j, &gj) in map.iter().enumerate() {
                    sum[(gi, gj)] += sl[(i, j)];
                }
            }
        }
        assert!((sum - &s_ref).norm() <= 1e-9 * s_ref.norm());
    }

    #[test]
    fn apply_local_schur_matches_dense() {
        let sys = tiny_sys();
        for r in [0usize, 3, 7] {
            let sl = sys.local_dense_schur(r).unwrap();
            let ng = sys.subs[r].ng;
            let x = DMatrix::from_fn(ng, 3, |i, j| {
                nalgebra::Complex::new((i % 5) as f64 - 1.0, (j + i % 3) as f64 * 0.5)
            });
            let y = sys.subs[r].apply_local_schur(&x);
            let yr = &sl * &x;
            assert!((y - &yr).norm() <= 1e-9 * yr.norm(), "r={r}");
        }
    }

    #[test]
    fn condensed_solve_matches_direct() {
        let sys = tiny_sys();
        let b = sys.rhs.clone();
        // Direct dense solve.
        let f = linalg::factor_hpd(sys.a.to_dense(), 1e-14, None).unwrap();
        let u_direct = f.solve_vec(&b);
        // Condense, solve the interface system densely, expand.
        let s_ref = dense_schur_reference(&sys);
        let g = sys.condense_rhs(&b);
        let fs = linalg::factor_hpd(s_ref, 1e-14, None).unwrap();
        let ug = fs.solve_vec(&g);
        let u = sys.expand(&b, &ug);
        assert!((u.clone() - &u_direct).norm() <= 1e-8 * u_direct.norm());
        let err = l2_relative_error(&sys.mesh, &sys.dirs, &u, exact_direction());
        let err_direct = l2_relative_error(&sys.mesh, &sys.dirs, &u_direct, exact_direction());
        assert!((err - err_direct).abs() < 1e-8);
    }

    #[test]
    fn economic_equals_exact_when_slab_covers_subdomain() {
        // n=2, m=1: every owned element touches every glob, so the slab is
        // the whole subdomain and economic blocks must equal exact ones.
        let sys = tiny_sys();
        let exact = glob_blocks(&sys, BlockMode::Exact, true).unwrap();
        let econ = glob_blocks(&sys, BlockMode::Economic { eta: sys.mesh.h }, true).unwrap();
        for g in 0..sys.part.globs.len() {
            for pos in 0..sys.part.globs[g].owners.len() {
                let de = (&exact[g].s[pos] - &econ[g].s[pos]).norm();
                assert!(de <= 1e-8 * exact[g].s[pos].norm().max(1e-30), "S glob {g} pos {pos}");
                let db = (&exact[g].sbar[pos] - &econ[g].sbar[pos]).norm();
                assert!(
                    db <= 1e-8 * exact[g].sbar[pos].norm().max(1e-30),
                    "Sbar glob {g} pos {pos}"
                );
            }
        }
    }

    #[test]
    fn glob_blocks_are_hermitian_psd() {
        let sys = SchurSystem::build(
            MeshConfig { n: 2, m: 2, p: 6, kappa: 2.0 * PI },
            BoundaryCondition::Robin,
        )
        .unwrap();
        let blocks = glob_blocks(&sys, BlockMode::Economic { eta: sys.mesh.h }, false).unwrap();
        for (g, set) in blocks.iter().enumerate() {
            if set.s.is_empty() {
                continue;
            }
            for (s, sbar) in set.s.iter().zip(&set.sbar) {
                assert!(linalg::herm_defect(s) < 1e-10, "glob {g}");
                assert!(linalg::herm_defect(sbar) < 1e-10, "glob {g}");
                let (vals, _) = linalg::eigh(s);
                let vmax = vals.last().copied().unwrap_or(0.0);
                assert!(vals[0] >= -1e-10 * vmax, "glob {g} S eig {}", vals[0]);
                let (vals, _) = linalg::eigh(sbar);
                let vmax = vals.last().copied().unwrap_or(0.0);
                assert!(vals[0] >= -1e-10 * vmax, "glob {g} Sbar eig {}", vals[0]);
            }
        }
    }

    #[test]
    fn sbar_banded_elimination_matches_dense() {
        // m=2 so the slab is a strict subset of the subdomain; recompute the
        // economic S̄ without the band limit and compare.
        let sys = SchurSystem::build(
            MeshConfig { n: 2, m: 2, p: 6, kappa: 2.0 * PI },
            BoundaryCondition::Robin,
        )
        .unwrap();
        // Pick a face glob and its first owner.
        let g = (0..sys.part.globs.len())
            .find(|&g| sys.part.globs[g].kind == GlobKind::Face)
            .unwrap();
        let r = sys.part.globs[g].owners[0];
        let (_, sbar) = economic_pair(&sys, g, r, sys.mesh.h).unwrap();
        // Dense path: same slab, no band (inline reimplementation with
        // bw = None via a large eta-independent check is impractical here, so
        // instead verify S̄ against eliminating with an ordering-insensitive
        // pseudo-inverse).
        let glob = &sys.part.globs[g];
        let sub = &sys.part.subs[r];
        let in_glob: std::collections::HashSet<usize> = glob.elems.iter().copied().collect();
        let mut glo = [f64::INFINITY; 3];
        let mut ghi = [f64::NEG_INFINITY; 3];
        for &e in &glob.elems {
            let (lo, hi) = sys.mesh.elem_box(e);
            for a in 0..3 {
                glo[a] = glo[a].min(lo[a]);
                ghi[a] = ghi[a].max(hi[a]);
            }
        }
        let mut nonglob: Vec<usize> = sub
            .elems
            .iter()
            .copied()
            .filter(|&e| !in_glob.contains(&e))
            .filter(|&e| {
                let (lo, hi) = sys.mesh.elem_box(e);
                box_distance(lo, hi, glo, ghi) < sys.mesh.h - 1e-12
            })
            .collect();
        nonglob.sort_unstable();
        let mut elems = nonglob.clone();
        elems.extend_from_slice(&glob.elems);
        let slab = assemble_form(
            &sys.mesh,
            &sys.dirs,
            &FormSpec { elems: &elems, clip: Some((sub.box_lo, sub.box_hi)), bc: sys.bc },
        );
        let dense = slab.to_dense();
        let sbar_ref =
            linalg::schur_onto_trailing(&dense, nonglob.len() * sys.dirs.p, 1e-14, None).unwrap();
        assert!((sbar.clone() - &sbar_ref).norm() <= 1e-8 * sbar_ref.norm());
    }
}
