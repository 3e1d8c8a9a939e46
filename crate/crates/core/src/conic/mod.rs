//! Canonical conic programs and the solve contract.
//!
//! A [`ConicProgram`] is written in primal standard form
//!
//! ```text
//!     min  c^T x + offset
//!     s.t. A x = b
//!          x = (x_1, ..., x_k),  x_i in K_i
//! ```
//!
//! where every variable block carries one cone tag. PSD blocks hold the
//! packed upper triangle (see [`crate::linalg::svec`]). Every backend answers
//! through [`ConicSolver`]; the returned [`ConicSolution`] always carries
//! residuals recomputed here, never copied from the backend.

mod clarabel_backend;
mod dump;

pub use clarabel_backend::ClarabelSolver;
pub use dump::write_dump;

use crate::linalg::{self, norm_inf, svec_len};
use std::ops::Range;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Zero,
    Free,
    Nonnegative,
    /// Lorentz cone `x_0 >= ||x_1..||`.
    SecondOrder,
    Psd { side: usize },
}

impl Cone {
    pub fn tag(&self) -> String {
        match self {
            Cone::Zero => "zero".into(),
            Cone::Free => "free".into(),
            Cone::Nonnegative => "nonneg".into(),
            Cone::SecondOrder => "soc".into(),
            Cone::Psd { side } => format!("psd({side})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VarBlock {
    pub name: String,
    pub cone: Cone,
    pub start: usize,
    pub len: usize,
}

impl VarBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    objective: Vec<f64>,
    offset: f64,
    blocks: Vec<VarBlock>,
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    rhs: Vec<f64>,
    row_names: Vec<String>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self {
            row_ptr: vec![0],
            ..Self::default()
        }
    }

    /// Appends a variable block and returns its index range.
    pub fn add_block(&mut self, name: impl Into<String>, cone: Cone, len: usize) -> Range<usize> {
        if let Cone::Psd { side } = cone {
            assert_eq!(len, svec_len(side), "PSD block length must be triangular");
        }
        let start = self.objective.len();
        self.objective.resize(start + len, 0.0);
        self.blocks.push(VarBlock {
            name: name.into(),
            cone,
            start,
            len,
        });
        start..start + len
    }

    pub fn add_psd_block(&mut self, name: impl Into<String>, side: usize) -> Range<usize> {
        self.add_block(name, Cone::Psd { side }, svec_len(side))
    }

    /// Appends the equality row `coefs . x = rhs`. Repeated columns are summed.
    pub fn add_row(&mut self, name: impl Into<String>, coefs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let sparse = linalg::SparseVec::from_pairs(coefs);
        for &(col, val) in sparse.entries() {
            assert!(col < self.objective.len(), "row references unknown column {col}");
            self.row_cols.push(col);
            self.row_vals.push(val);
        }
        self.row_ptr.push(self.row_cols.len());
        self.rhs.push(rhs);
        self.row_names.push(name.into());
    }

    pub fn set_objective(&mut self, col: usize, value: f64) {
        self.objective[col] = value;
    }

    pub fn add_objective(&mut self, col: usize, value: f64) {
        self.objective[col] += value;
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row_name(&self, row: usize) -> &str {
        &self.row_names[row]
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.row_cols[span.clone()]
            .iter()
            .copied()
            .zip(self.row_vals[span].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.row_vals.len()
    }

    /// `A x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_rows())
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `A^T y`
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars()];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += v * yr;
                }
            }
        }
        out
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest violation of the block cones by `x` (0 when inside).
    pub fn cone_violation(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| cone_violation(b.cone, &x[b.range()]))
            .fold(0.0, f64::max)
    }

    /// Largest violation of the dual cones by `s`.
    pub fn dual_cone_violation(&self, s: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let dual = match b.cone {
                    Cone::Zero => Cone::Free,
                    Cone::Free => Cone::Zero,
                    other => other,
                };
                cone_violation(dual, &s[b.range()])
            })
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<(), String> {
        let total: usize = self.blocks.iter().map(|b| b.len).sum();
        if total != self.num_vars() {
            return Err(format!("block lengths sum to {total}, expected {}", self.num_vars()));
        }
        if self.objective.iter().chain(&self.rhs).chain(&self.row_vals).any(|v| !v.is_finite()) {
            return Err("non-finite coefficient".into());
        }
        Ok(())
    }
}

fn cone_violation(cone: Cone, x: &[f64]) -> f64 {
    match cone {
        Cone::Free => 0.0,
        Cone::Zero => norm_inf(x),
        Cone::Nonnegative => x.iter().fold(0.0, |m, &v| m.max(-v)),
        Cone::SecondOrder => {
            if x.is_empty() {
                return 0.0;
            }
            let tail = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            (tail - x[0]).max(0.0)
        }
        Cone::Psd { .. } => (-linalg::min_eigenvalue(&linalg::smat(x))).max(0.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureStage {
    Presolve,
    Factorization,
    LineSearch,
    IterationLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
    Failed(FailureStage),
}

impl ConicStatus {
    pub fn has_solution(&self) -> bool {
        matches!(self, ConicStatus::Optimal | ConicStatus::Inaccurate)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    /// `||A x - b||_inf / (1 + ||b||_inf)`
    pub primal: f64,
    /// `||c - A^T y - s||_inf / (1 + ||c||_inf)`
    pub dual: f64,
    /// `|c^T x - b^T y| / max(1, |c^T x|)`
    pub gap: f64,
    /// Largest primal cone violation.
    pub cone: f64,
    /// Largest dual cone violation, over `1 + ||c||_inf`.
    pub dual_cone: f64,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: ConicStatus,
    /// Primal point, or an unboundedness ray when `status == Unbounded`.
    pub primal: Vec<f64>,
    /// Equality multipliers `y`, or a Farkas certificate when infeasible:
    /// `A^T y` in the dual cone with `b^T y < 0`.
    pub dual: Vec<f64>,
    /// Dual slack `s = c - A^T y`.
    pub dual_slack: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: u32,
    pub wall_time: f64,
    pub backend_status: String,
}

impl ConicSolution {
    pub fn failed(stage: FailureStage, detail: impl Into<String>, n: usize, m: usize) -> Self {
        Self {
            status: ConicStatus::Failed(stage),
            primal: vec![0.0; n],
            dual: vec![0.0; m],
            dual_slack: vec![0.0; n],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            residuals: Residuals::default(),
            iterations: 0,
            wall_time: 0.0,
            backend_status: detail.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverSettings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: u32,
    pub time_limit: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            max_iter: 200,
            time_limit: f64::INFINITY,
            verbose: false,
        }
    }
}

/// A backend able to solve [`ConicProgram`]s. Implementations must be
/// reentrant: one solve per thread, no shared mutable state.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, program: &ConicProgram, settings: &SolverSettings) -> ConicSolution;
}

/// Name of the environment variable selecting the backend.
pub const BACKEND_ENV: &str = "ROBSENS_BACKEND";

/// Picks a backend from `ROBSENS_BACKEND` (default `clarabel`).
pub fn backend_from_env() -> crate::Result<Arc<dyn ConicSolver>> {
    match std::env::var(BACKEND_ENV).ok().as_deref() {
        None | Some("") | Some("clarabel") => Ok(Arc::new(ClarabelSolver)),
        Some(other) => Err(crate::Error::Numerical(format!(
            "unknown conic backend `{other}` (available: clarabel)"
        ))),
    }
}

/// Recomputes residuals of a primal-dual pair from scratch.
pub fn verify(program: &ConicProgram, x: &[f64], y: &[f64], s: &[f64]) -> Residuals {
    let ax = program.apply(x);
    let b = program.rhs();
    let primal = ax
        .iter()
        .zip(b)
        .map(|(l, r)| (l - r).abs())
        .fold(0.0, f64::max)
        / (1.0 + norm_inf(b));
    let aty = program.apply_transpose(y);
    let c = program.objective();
    let dual = c
        .iter()
        .zip(&aty)
        .zip(s)
        .map(|((ci, ai), si)| (ci - ai - si).abs())
        .fold(0.0, f64::max)
        / (1.0 + norm_inf(c));
    let pobj: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    let dobj: f64 = b.iter().zip(y).map(|(a, b)| a * b).sum();
    let gap = (pobj - dobj).abs() / pobj.abs().max(1.0);
    Residuals {
        primal,
        dual,
        gap,
        cone: program.cone_violation(x),
        dual_cone: program.dual_cone_violation(s) / (1.0 + norm_inf(c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_only_program_is_solved() {
        // min x1 + x2 s.t. x1 + x2 = 2, x >= 0
        let mut p = ConicProgram::new();
        let x = p.add_block("x", Cone::Nonnegative, 2);
        p.add_row("r", [(x.start, 1.0), (x.start + 1, 1.0)], 2.0);
        p.set_objective(0, 1.0);
        p.set_objective(1, 1.0);
        let sol = ClarabelSolver.solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-7);
        assert!(sol.residuals.primal < 1e-8);
    }

    #[test]
    fn contradictory_rows_give_farkas_certificate() {
        let mut p = ConicProgram::new();
        p.add_block("x", Cone::Free, 1);
        p.add_row("one", [(0, 1.0)], 1.0);
        p.add_row("two", [(0, 1.0)], 2.0);
        let sol = ClarabelSolver.solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, ConicStatus::Infeasible);
        // A^T y must vanish on the free block and b^T y must be negative.
        let aty = p.apply_transpose(&sol.dual);
        let by: f64 = p.rhs().iter().zip(&sol.dual).map(|(a, b)| a * b).sum();
        assert!(aty[0].abs() < 1e-8 * by.abs().max(1.0));
        assert!(by < 0.0);
    }

    #[test]
    fn unbounded_program_returns_ray() {
        // min -x s.t. x - y = 0, x, y >= 0
        let mut p = ConicProgram::new();
        p.add_block("x", Cone::Nonnegative, 2);
        p.add_row("r", [(0, 1.0), (1, -1.0)], 0.0);
        p.set_objective(0, -1.0);
        let sol = ClarabelSolver.solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, ConicStatus::Unbounded);
        assert!(sol.primal[0] > 0.0);
    }

    #[test]
    fn small_sdp_matches_closed_form() {
        // min X12 s.t. X11 = X22 = 1, X psd  ->  -1
        let mut p = ConicProgram::new();
        let r = p.add_psd_block("X", 2);
        p.add_row("x11", [(r.start, 1.0)], 1.0);
        p.add_row("x22", [(r.start + 2, 1.0)], 1.0);
        p.set_objective(r.start + 1, std::f64::consts::FRAC_1_SQRT_2);
        let sol = ClarabelSolver.solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-6);
        assert!(sol.residuals.cone < 1e-7);
    }

    #[test]
    fn second_order_block_is_respected() {
        // min -u1 - u2 s.t. u0 = 1, (u0,u1,u2) in SOC  ->  -sqrt(2)
        let mut p = ConicProgram::new();
        p.add_block("u", Cone::SecondOrder, 3);
        p.add_row("u0", [(0, 1.0)], 1.0);
        p.set_objective(1, -1.0);
        p.set_objective(2, -1.0);
        let sol = ClarabelSolver.solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.objective + 2f64.sqrt()).abs() < 1e-6);
    }
}
