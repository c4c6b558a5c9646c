//! Uniform hexahedral mesh, fat-interface subdomain ownership, and glob
//! classification.
//!
//! The unit cube is cut into `N = n(m+1) - 1` elements per axis. An `n^3`
//! subdomain grid then assigns ownership per axis: subdomain `s` owns element
//! layers `s(m+1) - 1 ..= s(m+1) + m` (clamped to the mesh), so adjacent
//! subdomains share a one-element-thick layer at positions `e ≡ m (mod m+1)`.
//! Subdomain boundaries sit at half-integer multiples of `h` and therefore
//! never coincide with element faces; clipping a face against a subdomain box
//! is exact.
//!
//! Every dof of an element has the same owner set, so the interface
//! decomposes into element-blocked *globs*: equivalence classes of shared
//! elements keyed by owner set. `|owners| = 2` is a face glob (`m^2`
//! elements), `4` an edge glob (`m` elements), `8` a vertex glob (one
//! element). Interface dofs are numbered glob-major, and each subdomain's
//! local numbering is `[interior dofs][its globs in global glob order]`, so
//! glob blocks are contiguous both globally and locally and scatters are
//! plain range copies.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};

/// Mesh/discretization parameters.
#[derive(Debug, Clone, Copy)]
pub struct MeshConfig {
    /// Subdomains per axis.
    pub n: usize,
    /// Sole-owned element layers per subdomain per axis.
    pub m: usize,
    /// Plane-wave directions per element.
    pub p: usize,
    /// Wave number.
    pub kappa: f64,
}

/// Interior face between two adjacent elements, oriented along `axis`
/// (`minus` has the smaller coordinate).
#[derive(Debug, Clone, Copy)]
pub struct InteriorFace {
    pub axis: usize,
    pub minus: usize,
    pub plus: usize,
}

/// Boundary face of element `elem` on side `side` (0 = low, 1 = high) of
/// `axis`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    pub axis: usize,
    pub side: usize,
    pub elem: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobKind {
    Face,
    Edge,
    Vertex,
}

/// An interface equivalence class: the shared elements whose owner set is
/// exactly `owners`.
#[derive(Debug, Clone)]
pub struct Glob {
    pub kind: GlobKind,
    /// Owning subdomains, ascending.
    pub owners: Vec<usize>,
    /// Member elements, ascending.
    pub elems: Vec<usize>,
    /// Range in the glob-major global interface numbering.
    pub dof_range: Range<usize>,
}

impl Glob {
    pub fn ndofs(&self) -> usize {
        self.dof_range.len()
    }
}

/// Per-subdomain view of the partition.
#[derive(Debug, Clone)]
pub struct Subdomain {
    /// Grid coordinates of this subdomain.
    pub coords: [usize; 3],
    /// Sole-owned elements, ascending.
    pub interior_elems: Vec<usize>,
    /// Globs containing this subdomain, in global glob order.
    pub globs: Vec<usize>,
    /// Local element order: interior elements, then each glob's elements.
    pub elems: Vec<usize>,
    /// Geometric bounding box (half-element overhang into shared layers).
    pub box_lo: [f64; 3],
    pub box_hi: [f64; 3],
}

pub struct Mesh {
    pub cfg: MeshConfig,
    /// Elements per axis.
    pub ne: usize,
    pub h: f64,
    pub interior_faces: Vec<InteriorFace>,
    pub boundary_faces: Vec<BoundaryFace>,
}

/// Glob partition plus all derived index maps.
pub struct Partition {
    pub globs: Vec<Glob>,
    pub subs: Vec<Subdomain>,
    /// Total interface dofs.
    pub n_interface: usize,
    /// Global interface index -> global dof.
    pub interface_dofs: Vec<usize>,
    /// Global dof -> interface index (`u32::MAX` for interior dofs).
    pub dof_to_interface: Vec<u32>,
    /// Element -> owner list (ascending).
    pub owners: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn total_elems(&self) -> usize {
        self.ne * self.ne * self.ne
    }

    pub fn total_dofs(&self) -> usize {
        self.total_elems() * self.cfg.p
    }

    #[inline]
    pub fn elem_id(&self, c: [usize; 3]) -> usize {
        c[0] + self.ne * (c[1] + self.ne * c[2])
    }

    #[inline]
    pub fn elem_coords(&self, e: usize) -> [usize; 3] {
        [e % self.ne, (e / self.ne) % self.ne, e / (self.ne * self.ne)]
    }

    /// Axis-aligned bounding box of an element.
    pub fn elem_box(&self, e: usize) -> ([f64; 3], [f64; 3]) {
        let c = self.elem_coords(e);
        let lo = [c[0] as f64 * self.h, c[1] as f64 * self.h, c[2] as f64 * self.h];
        let hi = [lo[0] + self.h, lo[1] + self.h, lo[2] + self.h];
        (lo, hi)
    }

    /// Subdomains owning element layer `e` on one axis (1 or 2 entries).
    pub fn axis_owners(&self, e: usize) -> Vec<usize> {
        let n = self.cfg.n;
        let m = self.cfg.m;
        let mut out = Vec::with_capacity(2);
        for s in 0..n {
            let lo = (s * (m + 1)).saturating_sub(1);
            let hi = s * (m + 1) + m;
            let lo = if s == 0 { 0 } else { lo };
            let hi = hi.min(self.ne - 1);
            if e >= lo && e <= hi {
                out.push(s);
            }
        }
        out
    }

    /// Owner subdomains of an element (1, 2, 4, or 8 entries, ascending).
    pub fn element_owners(&self, e: usize) -> Vec<usize> {
        let c = self.elem_coords(e);
        let ox = self.axis_owners(c[0]);
        let oy = self.axis_owners(c[1]);
        let oz = self.axis_owners(c[2]);
        let n = self.cfg.n;
        let mut out = Vec::with_capacity(ox.len() * oy.len() * oz.len());
        for &sz in &oz {
            for &sy in &oy {
                for &sx in &ox {
                    out.push(sx + n * (sy + n * sz));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Geometric box of subdomain `(sx, sy, sz)`: sole-owned layers plus half
    /// an element into each shared layer, clamped to the unit cube.
    pub fn subdomain_box(&self, s: [usize; 3]) -> ([f64; 3], [f64; 3]) {
        let m = self.cfg.m;
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..3 {
            let first = s[a] * (m + 1);
            lo[a] = if s[a] == 0 { 0.0 } else { (first as f64 - 0.5) * self.h };
            let hi_raw = ((first + m) as f64 + 0.5) * self.h;
            hi[a] = if s[a] == self.cfg.n - 1 { 1.0 } else { hi_raw };
        }
        (lo, hi)
    }
}

/// Builds the mesh for a configuration.
pub fn build_mesh(cfg: MeshConfig) -> Result<Mesh> {
    if cfg.n < 1 || cfg.m < 1 || cfg.p < 1 {
        return Err(Error::InvalidConfig(format!(
            "n, m, p must be positive (got n={}, m={}, p={})",
            cfg.n, cfg.m, cfg.p
        )));
    }
    if !(cfg.kappa > 0.0) {
        return Err(Error::InvalidConfig(format!("kappa must be positive (got {})", cfg.kappa)));
    }
    let ne = cfg.n * (cfg.m + 1) - 1;
    let h = 1.0 / ne as f64;
    let mut mesh = Mesh { cfg, ne, h, interior_faces: Vec::new(), boundary_faces: Vec::new() };
    for ez in 0..ne {
        for ey in 0..ne {
            for ex in 0..ne {
                let e = mesh.elem_id([ex, ey, ez]);
                let c = [ex, ey, ez];
                for axis in 0..3 {
                    if c[axis] + 1 < ne {
                        let mut cp = c;
                        cp[axis] += 1;
                        mesh.interior_faces.push(InteriorFace {
                            axis,
                            minus: e,
                            plus: mesh.elem_id(cp),
                        });
                    } else {
                        mesh.boundary_faces.push(BoundaryFace { axis, side: 1, elem: e });
                    }
                    if c[axis] == 0 {
                        mesh.boundary_faces.push(BoundaryFace { axis, side: 0, elem: e });
                    }
                }
            }
        }
    }
    Ok(mesh)
}

/// Classifies shared elements into globs and builds all index maps.
pub fn classify_globs(mesh: &Mesh) -> Partition {
    let p = mesh.cfg.p;
    let n = mesh.cfg.n;
    let ntot = mesh.total_elems();

    let owners: Vec<Vec<usize>> = (0..ntot).map(|e| mesh.element_owners(e)).collect();

    // Group shared elements by owner set.
    let mut by_owners: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for e in 0..ntot {
        if owners[e].len() > 1 {
            by_owners.entry(owners[e].clone()).or_default().push(e);
        }
    }
    let mut keys: Vec<Vec<usize>> = by_owners.keys().cloned().collect();
    keys.sort();

    let mut globs = Vec::with_capacity(keys.len());
    let mut offset = 0usize;
    for key in keys {
        let mut elems = by_owners.remove(&key).unwrap();
        elems.sort_unstable();
        let kind = match key.len() {
            2 => GlobKind::Face,
            4 => GlobKind::Edge,
            8 => GlobKind::Vertex,
            k => unreachable!("owner set of size {k}"),
        };
        let nd = elems.len() * p;
        globs.push(Glob { kind, owners: key, elems, dof_range: offset..offset + nd });
        offset += nd;
    }
    let n_interface = offset;

    let mut interface_dofs = vec![0usize; n_interface];
    let mut dof_to_interface = vec![u32::MAX; mesh.total_dofs()];
    for g in &globs {
        for (i, &e) in g.elems.iter().enumerate() {
            for l in 0..p {
                let gid = g.dof_range.start + i * p + l;
                let dof = e * p + l;
                interface_dofs[gid] = dof;
                dof_to_interface[dof] = gid as u32;
            }
        }
    }

    let nsubs = n * n * n;
    let mut subs = Vec::with_capacity(nsubs);
    for s in 0..nsubs {
        let coords = [s % n, (s / n) % n, s / (n * n)];
        let mut interior_elems: Vec<usize> =
            (0..ntot).filter(|&e| owners[e].len() == 1 && owners[e][0] == s).collect();
        interior_elems.sort_unstable();
        let glob_ids: Vec<usize> =
            (0..globs.len()).filter(|&g| globs[g].owners.contains(&s)).collect();
        let mut elems = interior_elems.clone();
        for &g in &glob_ids {
            elems.extend_from_slice(&globs[g].elems);
        }
        let (box_lo, box_hi) = mesh.subdomain_box(coords);
        subs.push(Subdomain { coords, interior_elems, globs: glob_ids, elems, box_lo, box_hi });
    }

    Partition { globs, subs, n_interface, interface_dofs, dof_to_interface, owners }
}

impl Partition {
    /// Glob counts `(faces, edges, vertices)`.
    pub fn glob_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for g in &self.globs {
            match g.kind {
                GlobKind::Face => c.0 += 1,
                GlobKind::Edge => c.1 += 1,
                GlobKind::Vertex => c.2 += 1,
            }
        }
        c
    }

    /// Number of interior (sole-owned) dofs of subdomain `r`.
    pub fn n_interior(&self, r: usize, p: usize) -> usize {
        self.subs[r].interior_elems.len() * p
    }

    /// Number of local dofs of subdomain `r`.
    pub fn n_local(&self, r: usize, p: usize) -> usize {
        self.subs[r].elems.len() * p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(n: usize, m: usize, p: usize) -> Mesh {
        build_mesh(MeshConfig { n, m, p, kappa: 1.0 }).unwrap()
    }

    #[test]
    fn element_and_face_counts() {
        let ms = mesh(2, 1, 6);
        assert_eq!(ms.ne, 3);
        assert_eq!(ms.interior_faces.len(), 3 * 3 * 3 * 2); // 3 axes * 9 * (3-1) faces... = 54
        assert_eq!(ms.boundary_faces.len(), 6 * 9);
        let ms = mesh(3, 3, 18);
        assert_eq!(ms.ne, 11);
        assert_eq!(ms.interior_faces.len(), 3 * 11 * 11 * 10);
    }

    #[test]
    fn axis_ownership_small() {
        // n=2, m=1: layers {0,1} vs {1,2}; layer 1 shared.
        let ms = mesh(2, 1, 6);
        assert_eq!(ms.axis_owners(0), vec![0]);
        assert_eq!(ms.axis_owners(1), vec![0, 1]);
        assert_eq!(ms.axis_owners(2), vec![1]);
    }

    #[test]
    fn shared_layers_are_m_mod_m_plus_1() {
        let ms = mesh(4, 2, 18);
        for e in 0..ms.ne {
            let shared = ms.axis_owners(e).len() == 2;
            assert_eq!(shared, e % (ms.cfg.m + 1) == ms.cfg.m, "e={e}");
        }
    }

    #[test]
    fn glob_counts_match_formulas() {
        for (n, m, p) in [(2usize, 1usize, 6usize), (3, 3, 18), (4, 2, 18)] {
            let ms = mesh(n, m, p);
            let part = classify_globs(&ms);
            let (f, e, v) = part.glob_counts();
            assert_eq!(f, 3 * n * n * (n - 1));
            assert_eq!(e, 3 * n * (n - 1) * (n - 1));
            assert_eq!(v, (n - 1) * (n - 1) * (n - 1));
            for g in &part.globs {
                let want = match g.kind {
                    GlobKind::Face => m * m,
                    GlobKind::Edge => m,
                    GlobKind::Vertex => 1,
                };
                assert_eq!(g.elems.len(), want);
                assert_eq!(g.ndofs(), want * p);
            }
        }
    }

    #[test]
    fn interface_numbering_is_consistent() {
        let ms = mesh(3, 2, 6);
        let part = classify_globs(&ms);
        for (gid, &dof) in part.interface_dofs.iter().enumerate() {
            assert_eq!(part.dof_to_interface[dof] as usize, gid);
        }
        // Glob ranges tile 0..n_interface.
        let mut covered = 0;
        for g in &part.globs {
            assert_eq!(g.dof_range.start, covered);
            covered = g.dof_range.end;
        }
        assert_eq!(covered, part.n_interface);
    }

    #[test]
    fn subdomain_interior_counts() {
        let ms = mesh(3, 3, 18);
        let part = classify_globs(&ms);
        for sub in &part.subs {
            assert_eq!(sub.interior_elems.len(), 27); // m^3
        }
        // Interior subdomain owns (m+2)^3 elements; corner subdomain (m+1)^3.
        let ms = mesh(3, 2, 6);
        let part = classify_globs(&ms);
        let corner = &part.subs[0];
        assert_eq!(corner.elems.len(), 27); // (m+1)^3 = 27
        let center = &part.subs[1 + 3 + 9];
        assert_eq!(center.elems.len(), 64); // (m+2)^3 = 64
    }

    #[test]
    fn subdomain_boxes_cover_and_avoid_element_faces() {
        let ms = mesh(2, 1, 6);
        let (lo, hi) = ms.subdomain_box([0, 0, 0]);
        assert_eq!(lo, [0.0; 3]);
        for a in 0..3 {
            assert!((hi[a] - 0.5).abs() < 1e-14);
        }
        let (lo, hi) = ms.subdomain_box([1, 1, 1]);
        for a in 0..3 {
            assert!((lo[a] - 0.5).abs() < 1e-14);
            assert_eq!(hi[a], 1.0);
        }
    }

    #[test]
    fn owner_multiplicities() {
        let ms = mesh(2, 1, 6);
        let part = classify_globs(&ms);
        let mut by_mult = [0usize; 9];
        for o in &part.owners {
            by_mult[o.len()] += 1;
        }
        // 27 elements: 8 sole, 12 face-shared, 6 edge-shared, 1 vertex-shared.
        assert_eq!(by_mult[1], 8);
        assert_eq!(by_mult[2], 12);
        assert_eq!(by_mult[4], 6);
        assert_eq!(by_mult[8], 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(build_mesh(MeshConfig { n: 0, m: 1, p: 6, kappa: 1.0 }).is_err());
        assert!(build_mesh(MeshConfig { n: 2, m: 1, p: 6, kappa: 0.0 }).is_err());
    }
}
