//! Stable result records and their JSON / CSV renderings.
//!
//! One [`CaseRecord`] captures everything a convergence study needs from a
//! single run: the configuration, the primal-space census, the PCG history
//! summary, the discretization error, and wall-clock stage timings. Records
//! serialize to a versioned JSON document (schema changes bump
//! [`SCHEMA_VERSION`]) and to a flat CSV with a fixed column order, so
//! downstream tabulation scripts never have to sniff field layouts.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Flat, serialization-stable summary of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    // configuration
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub kappa: f64,
    pub bc: String,
    pub scaling: String,
    pub block_mode: String,
    pub levels: usize,
    pub theta_f: f64,
    pub theta_e: f64,
    pub rtol: f64,
    // discretization
    pub n_dofs: usize,
    pub n_interface: usize,
    // coarse space census (level 0)
    pub pnum: usize,
    pub pnum_f: usize,
    pub pnum_e: usize,
    pub pnum_v: usize,
    // iteration summary
    pub iter: usize,
    pub converged: bool,
    pub rel_residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cond: f64,
    // accuracy
    pub err: f64,
    // stage timings
    pub seconds_assembly: f64,
    pub seconds_eigen: f64,
    pub seconds_coarse: f64,
    pub seconds_pcg: f64,
}

/// Versioned report wrapping a batch of case records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub cases: Vec<CaseRecord>,
}

impl Report {
    pub fn new(cases: Vec<CaseRecord>) -> Self {
        Report { schema_version: SCHEMA_VERSION, cases }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cases {
            out.push_str(&c.csv_row());
            out.push('\n');
        }
        out
    }
}

pub const CSV_HEADER: &str = "n,m,p,kappa,bc,scaling,block_mode,levels,theta_f,theta_e,rtol,\
n_dofs,n_interface,pnum,pnum_f,pnum_e,pnum_v,iter,converged,rel_residual,\
lambda_min,lambda_max,cond,err,seconds_assembly,seconds_eigen,seconds_coarse,seconds_pcg";

impl CaseRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.m,
            self.p,
            self.kappa,
            self.bc,
            self.scaling,
            self.block_mode,
            self.levels,
            self.theta_f,
            self.theta_e,
            self.rtol,
            self.n_dofs,
            self.n_interface,
            self.pnum,
            self.pnum_f,
            self.pnum_e,
            self.pnum_v,
            self.iter,
            self.converged,
            self.rel_residual,
            self.lambda_min,
            self.lambda_max,
            self.cond,
            self.err,
            self.seconds_assembly,
            self.seconds_eigen,
            self.seconds_coarse,
            self.seconds_pcg,
        )
    }
}
