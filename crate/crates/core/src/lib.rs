//! Plane-wave least-squares (PWLS) discretization of the 3D Helmholtz equation
//! with adaptive two-level and multilevel BDDC preconditioned CG.
//!
//! The discretization couples per-element plane-wave bases only through face
//! integrals, so the assembled system is Hermitian positive definite and
//! block-sparse with element-pair blocks. Unknowns live on elements rather
//! than mesh vertices, which forces a "fat interface" subdomain partition:
//! subdomain boundaries cut through a one-element-thick shared layer, and a
//! shared element (with all of its dofs) belongs to 2, 4, or 8 subdomains.
//!
//! The solver pipeline is
//!
//! 1. [`mesh`]: uniform hexahedral grid, subdomain ownership, glob
//!    classification (interior / face / edge / vertex equivalence classes of
//!    dofs keyed by their owner sets);
//! 2. [`assembly`]: plane-wave directions, closed-form oscillatory face
//!    integrals, the global sesquilinear form and right-hand side, and the
//!    clipped per-subdomain forms that tile the global form;
//! 3. [`schur`]: per-subdomain interior elimination (discrete harmonic
//!    extension), matrix-free application of the interface Schur operator,
//!    and per-glob Schur blocks — either exact or "economic" on a slab of
//!    width `eta` around the glob;
//! 4. [`coarse`]: scaling matrices (multiplicity or deluxe), parallel sums,
//!    and the per-glob generalized eigenproblems whose eigenvectors split
//!    each face/edge glob into dual and primal parts at tolerances
//!    `theta_f` / `theta_e`;
//! 5. [`solver`]: the partially assembled BDDC operator, PCG with Lanczos
//!    extreme-eigenvalue estimates, and the multilevel recursion in which the
//!    level-`s` primal dofs become the level-`s+1` unknowns;
//! 6. [`verify`]: dense brute-force references and the invariant suite that
//!    anchors correctness at tiny scale.
//!
//! All dense kernels run on `Complex<f64>`. With the default `parallel`
//! feature, embarrassingly parallel stages (face assembly, per-subdomain
//! factorizations, per-glob eigenproblems) fan out over rayon; reductions are
//! always performed in a fixed order so results are bit-identical regardless
//! of thread count.

pub mod assembly;
pub mod coarse;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod report;
pub mod schur;
pub mod solver;
pub mod util;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::C64;
