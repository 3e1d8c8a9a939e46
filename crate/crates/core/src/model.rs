//! Affine/second-order constraint systems over a vector of free variables,
//! and their translation into [`ConicProgram`]s.
//!
//! Every convex subproblem outside the relaxation itself (feasibility checks,
//! sampling, convex shortcuts, alternating steps, projections) is posed as a
//! [`ConvexSystem`] plus a linear objective.

use crate::conic::{Cone, ConicProgram, ConicSolution, ConicSolver, ConicStatus, SolverSettings};
use crate::linalg::{Affine, SparseVec};
use crate::Tolerances;
use std::sync::Arc;

/// Backend, solver settings and acceptance tolerances bundled together.
#[derive(Clone)]
pub struct SolveContext {
    pub backend: Arc<dyn ConicSolver>,
    pub settings: SolverSettings,
    pub tol: Tolerances,
}

impl SolveContext {
    pub fn new(backend: Arc<dyn ConicSolver>) -> Self {
        Self {
            backend,
            settings: SolverSettings::default(),
            tol: Tolerances::default(),
        }
    }

    pub fn solve(&self, program: &ConicProgram) -> ConicSolution {
        self.backend.solve(program, &self.settings)
    }
}

impl Default for SolveContext {
    fn default() -> Self {
        Self::new(Arc::new(crate::conic::ClarabelSolver))
    }
}

impl std::fmt::Debug for SolveContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveContext")
            .field("backend", &self.backend.name())
            .field("settings", &self.settings)
            .field("tol", &self.tol)
            .finish()
    }
}

/// `coefs . v (=|<=) rhs`
#[derive(Clone, Debug, PartialEq)]
pub struct LinRow {
    pub label: String,
    pub coefs: SparseVec,
    pub rhs: f64,
}

impl LinRow {
    pub fn new(label: impl Into<String>, coefs: SparseVec, rhs: f64) -> Self {
        Self {
            label: label.into(),
            coefs,
            rhs,
        }
    }
}

/// `|| (norm_terms_k(v))_k ||_2 <= bound(v)`
#[derive(Clone, Debug, PartialEq)]
pub struct SocRow {
    pub label: String,
    pub norm_terms: Vec<Affine>,
    pub bound: Affine,
}

impl SocRow {
    pub fn slack(&self, v: &[f64]) -> f64 {
        let norm = self.norm_terms.iter().map(|t| t.eval(v).powi(2)).sum::<f64>().sqrt();
        self.bound.eval(v) - norm
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexSystem {
    pub dim: usize,
    pub eq: Vec<LinRow>,
    pub le: Vec<LinRow>,
    pub soc: Vec<SocRow>,
}

/// Result of optimising over a [`ConvexSystem`].
#[derive(Clone, Debug)]
pub struct SystemOutcome {
    pub status: ConicStatus,
    /// Values of the system variables (a ray when unbounded).
    pub point: Vec<f64>,
    pub value: f64,
    /// Multipliers of the `eq` rows followed by the `le` rows, in the sign
    /// convention `objective = sum(mult * row)` at optimality.
    pub multipliers: Vec<f64>,
    pub solution: ConicSolution,
}

impl ConvexSystem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn add_eq(&mut self, label: impl Into<String>, coefs: SparseVec, rhs: f64) {
        self.eq.push(LinRow::new(label, coefs, rhs));
    }

    pub fn add_le(&mut self, label: impl Into<String>, coefs: SparseVec, rhs: f64) {
        self.le.push(LinRow::new(label, coefs, rhs));
    }

    pub fn add_soc(&mut self, row: SocRow) {
        self.soc.push(row);
    }

    /// Pins variable `index` to `value`.
    pub fn fix(&mut self, index: usize, value: f64, label: impl Into<String>) {
        self.add_eq(label, SparseVec::unit(index), value);
    }

    /// Appends `extra` new variables and returns the index of the first.
    pub fn extend(&mut self, extra: usize) -> usize {
        let first = self.dim;
        self.dim += extra;
        first
    }

    /// Appends all rows of `other`, whose variables start at `offset` here.
    pub fn append(&mut self, other: &ConvexSystem, offset: usize) {
        assert!(offset + other.dim <= self.dim);
        for row in &other.eq {
            self.add_eq(row.label.clone(), row.coefs.shifted(offset), row.rhs);
        }
        for row in &other.le {
            self.add_le(row.label.clone(), row.coefs.shifted(offset), row.rhs);
        }
        for row in &other.soc {
            let shift = |a: &Affine| Affine::new(a.coefs.shifted(offset), a.constant);
            self.add_soc(SocRow {
                label: row.label.clone(),
                norm_terms: row.norm_terms.iter().map(shift).collect(),
                bound: shift(&row.bound),
            });
        }
    }

    /// Largest violation over all rows at `v`, with the offending row label.
    pub fn violation(&self, v: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::new());
        let mut consider = |amount: f64, label: &str| {
            if amount > worst.0 {
                worst = (amount, label.to_string());
            }
        };
        for row in &self.eq {
            consider((row.coefs.dot(v) - row.rhs).abs(), &row.label);
        }
        for row in &self.le {
            consider(row.coefs.dot(v) - row.rhs, &row.label);
        }
        for row in &self.soc {
            consider(-row.slack(v), &row.label);
        }
        worst
    }

    /// Builds the conic program `min objective . v` over this system.
    pub fn to_program(&self, objective: &[f64], offset: f64) -> ConicProgram {
        assert_eq!(objective.len(), self.dim);
        let mut p = ConicProgram::new();
        let v = p.add_block("v", Cone::Free, self.dim);
        let slack = p.add_block("slack", Cone::Nonnegative, self.le.len());
        for (i, &c) in objective.iter().enumerate() {
            p.set_objective(v.start + i, c);
        }
        p.set_offset(offset);
        for row in &self.eq {
            p.add_row(row.label.clone(), row.coefs.entries().iter().copied(), row.rhs);
        }
        for (k, row) in self.le.iter().enumerate() {
            let coefs = row.coefs.entries().iter().copied().chain([(slack.start + k, 1.0)]);
            p.add_row(row.label.clone(), coefs, row.rhs);
        }
        for row in &self.soc {
            let block = p.add_block(row.label.clone(), Cone::SecondOrder, 1 + row.norm_terms.len());
            for (k, term) in std::iter::once(&row.bound).chain(&row.norm_terms).enumerate() {
                // u_k - coefs . v = constant
                let coefs = term
                    .coefs
                    .entries()
                    .iter()
                    .map(|&(i, a)| (i, -a))
                    .chain([(block.start + k, 1.0)]);
                p.add_row(format!("{}[{k}]", row.label), coefs, term.constant);
            }
        }
        p
    }

    pub fn minimize(&self, ctx: &SolveContext, objective: &[f64]) -> SystemOutcome {
        self.minimize_with_offset(ctx, objective, 0.0)
    }

    pub fn minimize_with_offset(&self, ctx: &SolveContext, objective: &[f64], offset: f64) -> SystemOutcome {
        let program = self.to_program(objective, offset);
        let solution = ctx.solve(&program);
        let n_lin = self.eq.len() + self.le.len();
        SystemOutcome {
            status: solution.status,
            point: solution.primal[..self.dim].to_vec(),
            value: solution.objective,
            multipliers: solution.dual[..n_lin].to_vec(),
            solution,
        }
    }

    pub fn minimize_sparse(&self, ctx: &SolveContext, objective: &SparseVec) -> SystemOutcome {
        let dense: Vec<f64> = objective.to_dense(self.dim).iter().copied().collect();
        self.minimize(ctx, &dense)
    }

    /// Smallest uniform relaxation `tau >= 0` of every row that admits a
    /// point, with the variables in `fixed` pinned. Returns `(tau, point)`.
    pub fn min_violation(&self, ctx: &SolveContext, fixed: &[(usize, f64)]) -> (ConicStatus, f64, Vec<f64>) {
        let mut relaxed = ConvexSystem::new(self.dim + 1);
        let tau = self.dim;
        let with_tau = |coefs: &SparseVec, sign: f64| {
            SparseVec::from_pairs(coefs.entries().iter().copied().chain([(tau, sign)]))
        };
        for row in &self.eq {
            relaxed.add_le(row.label.clone(), with_tau(&row.coefs, -1.0), row.rhs);
            relaxed.add_le(row.label.clone(), with_tau(&row.coefs.scaled(-1.0), -1.0), -row.rhs);
        }
        for row in &self.le {
            relaxed.add_le(row.label.clone(), with_tau(&row.coefs, -1.0), row.rhs);
        }
        for row in &self.soc {
            let mut r = row.clone();
            r.bound = Affine::new(with_tau(&row.bound.coefs, 1.0), row.bound.constant);
            relaxed.add_soc(r);
        }
        relaxed.add_le("tau>=0", SparseVec::unit(tau).scaled(-1.0), 0.0);
        for &(i, value) in fixed {
            relaxed.fix(i, value, format!("fix[{i}]"));
        }
        let mut objective = vec![0.0; self.dim + 1];
        objective[tau] = 1.0;
        let out = relaxed.minimize(ctx, &objective);
        let point = out.point[..self.dim].to_vec();
        (out.status, out.point[tau].max(0.0), point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ConvexSystem {
        let mut s = ConvexSystem::new(2);
        for i in 0..2 {
            s.add_le(format!("x{i}<=1"), SparseVec::unit(i), 1.0);
            s.add_le(format!("x{i}>=0"), SparseVec::unit(i).scaled(-1.0), 0.0);
        }
        s
    }

    #[test]
    fn minimizes_over_box() {
        let s = unit_square();
        let out = s.minimize(&SolveContext::default(), &[1.0, -2.0]);
        assert_eq!(out.status, ConicStatus::Optimal);
        assert!((out.value + 2.0).abs() < 1e-7);
        assert!((out.point[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disk_constraint() {
        let mut s = ConvexSystem::new(2);
        s.add_soc(SocRow {
            label: "disk".into(),
            norm_terms: vec![Affine::new(SparseVec::unit(0), 0.0), Affine::new(SparseVec::unit(1), 0.0)],
            bound: Affine::constant(2.0),
        });
        let out = s.minimize(&SolveContext::default(), &[1.0, 1.0]);
        assert!((out.value + 2.0 * 2f64.sqrt()).abs() < 1e-6);
        assert!(s.violation(&out.point).0 < 1e-7);
    }

    #[test]
    fn min_violation_measures_distance_to_feasibility() {
        let s = unit_square();
        let ctx = SolveContext::default();
        let (status, tau, _) = s.min_violation(&ctx, &[(0, 1.5)]);
        assert_eq!(status, ConicStatus::Optimal);
        assert!((tau - 0.5).abs() < 1e-6);
        let (_, tau, _) = s.min_violation(&ctx, &[(0, 0.5)]);
        assert!(tau < 1e-7);
    }
}
