//! Nominal linear programs, conversion to standard form and perturbed solves.

use crate::conic::{Cone, ConicProgram, ConicStatus};
use crate::linalg::{norm_inf, rank};
use crate::{Error, Result, SolveContext};
use nalgebra::{DMatrix, DVector};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralRow {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralVar {
    pub name: String,
    /// May be `-inf`.
    pub lower: f64,
    /// May be `+inf`.
    pub upper: f64,
}

/// LP in general form: `min c^T x + constant` over mixed-sense rows and
/// per-variable bounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneralFormLp {
    pub name: String,
    pub vars: Vec<GeneralVar>,
    pub rows: Vec<GeneralRow>,
    pub objective: Vec<f64>,
    pub constant: f64,
}

impl GeneralFormLp {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.name == name)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let lhs: f64 = row.coefs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match row.sense {
                RowSense::Le => lhs - row.rhs,
                RowSense::Ge => row.rhs - lhs,
                RowSense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (var, &xj) in self.vars.iter().zip(x) {
            worst = worst.max(var.lower - xj).max(xj - var.upper);
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        if self.objective.len() != self.vars.len() {
            return Err(Error::Dimension(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.vars.len()
            )));
        }
        if self.vars.is_empty() || self.rows.is_empty() {
            return Err(Error::InvalidLp("need at least one variable and one row".into()));
        }
        for var in &self.vars {
            if var.lower.is_nan() || var.upper.is_nan() || var.lower == f64::INFINITY || var.upper == f64::NEG_INFINITY {
                return Err(Error::InvalidLp(format!("variable `{}` has an invalid bound", var.name)));
            }
            if var.lower > var.upper {
                return Err(Error::InconsistentBounds {
                    name: var.name.clone(),
                    lower: var.lower,
                    upper: var.upper,
                });
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() || row.coefs.iter().any(|&(j, a)| j >= self.vars.len() || !a.is_finite()) {
                return Err(Error::InvalidLp(format!("row `{}` has invalid data", row.name)));
            }
        }
        if !self.constant.is_finite() || self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidLp("non-finite objective".into()));
        }
        Ok(())
    }
}

/// How finite bounds are turned into standard form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundStyle {
    /// Shift finite lower bounds into the right-hand side; split free
    /// variables; upper bounds become rows with a slack.
    #[default]
    Shift,
    /// Keep `x >= 0` variables unshifted and write every other finite bound
    /// (nonzero lower, upper) as its own row with a slack or surplus.
    Rows,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConversionStep {
    /// `x = by + x'`
    Shift { var: usize, by: f64 },
    /// `x = x+ - x-`
    Split { var: usize },
    /// Bound written as a row of the standard form.
    BoundRow { var: usize, sense: RowSense, value: f64 },
    /// Slack (`<=`) or surplus (`>=`) column for a general row.
    Slack { row: usize, sense: RowSense },
}

/// Where a standard-form column comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnOrigin {
    Var { var: usize, sign: f64 },
    Slack { row: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowOrigin {
    General(usize),
    Bound(usize),
}

/// Record of the steps taken by [`standardize`], sufficient to move
/// perturbations and solutions between the two forms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConversionLog {
    pub steps: Vec<ConversionStep>,
    pub columns: Vec<ColumnOrigin>,
    pub rows: Vec<RowOrigin>,
    /// Per general variable: `x_j = base_j + sum(sign * x_std[col])`.
    pub var_base: Vec<f64>,
    pub var_cols: Vec<Vec<(usize, f64)>>,
    /// Standard row of each general row.
    pub general_rows: Vec<usize>,
}

impl ConversionLog {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Standard-form LP `min (c_hat + c)^T x + offset(c)  s.t.  A x = b_hat + b, x >= 0`
/// with `offset(c) = offset + shift^T c` (nonzero only when variables were shifted).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    a: DMatrix<f64>,
    b_hat: DVector<f64>,
    c_hat: DVector<f64>,
    offset: f64,
    shift: DVector<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub conversion: ConversionLog,
}

impl LinearProgram {
    pub fn new(a: DMatrix<f64>, b_hat: DVector<f64>, c_hat: DVector<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        let row_names = (1..=m).map(|i| format!("R{i}")).collect();
        let col_names = (1..=n).map(|j| format!("x{j}")).collect();
        Self::with_names(a, b_hat, c_hat, row_names, col_names)
    }

    pub fn with_names(
        a: DMatrix<f64>,
        b_hat: DVector<f64>,
        c_hat: DVector<f64>,
        row_names: Vec<String>,
        col_names: Vec<String>,
    ) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidLp("need m >= 1 and n >= 1".into()));
        }
        if b_hat.len() != m || c_hat.len() != n || row_names.len() != m || col_names.len() != n {
            return Err(Error::Dimension(format!(
                "A is {m}x{n}, b has {}, c has {}",
                b_hat.len(),
                c_hat.len()
            )));
        }
        if a.iter().chain(b_hat.iter()).chain(c_hat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidLp("non-finite data".into()));
        }
        if let Some(i) = (0..m).find(|&i| a.row(i).iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidLp(format!("row `{}` is all zero", row_names[i])));
        }
        Ok(Self {
            a,
            b_hat,
            c_hat,
            offset: 0.0,
            shift: DVector::zeros(n),
            row_names,
            col_names,
            conversion: ConversionLog::default(),
        })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_hat(&self) -> &DVector<f64> {
        &self.b_hat
    }

    pub fn c_hat(&self) -> &DVector<f64> {
        &self.c_hat
    }

    /// Constant part of the objective.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Coefficients of the perturbation-dependent objective constant.
    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn objective_offset(&self, c: &DVector<f64>) -> f64 {
        self.offset + self.shift.dot(c)
    }

    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.row_names.iter().position(|r| r == name)
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.col_names.iter().position(|r| r == name)
    }

    /// Maps a standard-form solution back to the general-form variables.
    pub fn recover(&self, x: &[f64]) -> Vec<f64> {
        if self.conversion.var_cols.is_empty() {
            return x.to_vec();
        }
        self.conversion
            .var_cols
            .iter()
            .zip(&self.conversion.var_base)
            .map(|(cols, base)| base + cols.iter().map(|&(k, s)| s * x[k]).sum::<f64>())
            .collect()
    }

    /// Standard-form columns carrying general variable `var`, with signs.
    pub fn columns_of(&self, var: usize) -> Vec<(usize, f64)> {
        if self.conversion.var_cols.is_empty() {
            vec![(var, 1.0)]
        } else {
            self.conversion.var_cols[var].clone()
        }
    }

    /// Standard-form row holding general row `row`.
    pub fn row_of(&self, row: usize) -> usize {
        if self.conversion.general_rows.is_empty() {
            row
        } else {
            self.conversion.general_rows[row]
        }
    }

    fn lp_program(&self, b: &DVector<f64>, c: &DVector<f64>) -> ConicProgram {
        let mut p = ConicProgram::new();
        let x = p.add_block("x", Cone::Nonnegative, self.n());
        for j in 0..self.n() {
            p.set_objective(x.start + j, self.c_hat[j] + c[j]);
        }
        p.set_offset(self.objective_offset(c));
        for i in 0..self.m() {
            let coefs = (0..self.n()).filter_map(|j| {
                let v = self.a[(i, j)];
                (v != 0.0).then_some((x.start + j, v))
            });
            p.add_row(self.row_names[i].clone(), coefs, self.b_hat[i] + b[i]);
        }
        p
    }

    /// Primal and dual feasibility residuals of `(x, y, s)` at perturbation
    /// `(b, c)`, each relative to the scale of the data it refers to.
    pub fn residuals(&self, b: &DVector<f64>, c: &DVector<f64>, x: &[f64], y: &[f64], s: &[f64]) -> LpResiduals {
        let x = DVector::from_column_slice(x);
        let y = DVector::from_column_slice(y);
        let s = DVector::from_column_slice(s);
        let rhs = &self.b_hat + b;
        let cost = &self.c_hat + c;
        let primal = (&self.a * &x - &rhs).amax() / rhs.amax().max(1.0);
        let dual = (self.a.transpose() * &y + &s - &cost).amax() / cost.amax().max(1.0);
        let pobj = cost.dot(&x);
        let dobj = rhs.dot(&y);
        LpResiduals {
            primal,
            dual,
            x_neg: (-x.min()).max(0.0) / rhs.amax().max(1.0),
            s_neg: (-s.min()).max(0.0) / cost.amax().max(1.0),
            gap: (pobj - dobj).abs() / pobj.abs().max(1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpResiduals {
    pub primal: f64,
    pub dual: f64,
    pub x_neg: f64,
    pub s_neg: f64,
    pub gap: f64,
}

impl LpResiduals {
    pub fn within(&self, feas: f64, gap: f64) -> bool {
        self.primal <= feas && self.dual <= feas && self.x_neg <= feas && self.s_neg <= feas && self.gap <= gap
    }
}

/// Converts a general-form LP to standard form with default bound handling.
pub fn standardize(general: &GeneralFormLp) -> Result<LinearProgram> {
    standardize_with(general, BoundStyle::default())
}

pub fn standardize_with(general: &GeneralFormLp, style: BoundStyle) -> Result<LinearProgram> {
    general.validate()?;
    let nv = general.vars.len();
    let mut log = ConversionLog {
        var_base: vec![0.0; nv],
        var_cols: vec![Vec::new(); nv],
        ..ConversionLog::default()
    };
    let mut col_names = Vec::new();
    let mut c_hat = Vec::new();
    let mut shift = Vec::new();
    let mut offset = general.constant;
    // Extra rows from bounds: (var, sense, value) in terms of the general variable.
    let mut bound_rows: Vec<(usize, RowSense, f64)> = Vec::new();

    let mut push_col = |log: &mut ConversionLog, name: String, origin: ColumnOrigin, cost: f64, sh: f64| {
        log.columns.push(origin);
        col_names.push(name);
        c_hat.push(cost);
        shift.push(sh);
        c_hat.len() - 1
    };

    for (j, var) in general.vars.iter().enumerate() {
        let cost = general.objective[j];
        let (lo, up) = (var.lower, var.upper);
        if lo.is_finite() && (lo == 0.0 || style == BoundStyle::Shift) {
            if lo != 0.0 {
                log.steps.push(ConversionStep::Shift { var: j, by: lo });
                log.var_base[j] = lo;
                offset += cost * lo;
            }
            let k = push_col(&mut log, var.name.clone(), ColumnOrigin::Var { var: j, sign: 1.0 }, cost, lo);
            log.var_cols[j].push((k, 1.0));
            if up.is_finite() {
                bound_rows.push((j, RowSense::Le, up));
            }
        } else if lo.is_finite() && lo > 0.0 {
            // Rows style, positive lower bound: x >= 0 already implied.
            let k = push_col(&mut log, var.name.clone(), ColumnOrigin::Var { var: j, sign: 1.0 }, cost, 0.0);
            log.var_cols[j].push((k, 1.0));
            bound_rows.push((j, RowSense::Ge, lo));
            if up.is_finite() {
                bound_rows.push((j, RowSense::Le, up));
            }
        } else {
            log.steps.push(ConversionStep::Split { var: j });
            let kp = push_col(
                &mut log,
                format!("{}+", var.name),
                ColumnOrigin::Var { var: j, sign: 1.0 },
                cost,
                0.0,
            );
            let km = push_col(
                &mut log,
                format!("{}-", var.name),
                ColumnOrigin::Var { var: j, sign: -1.0 },
                -cost,
                0.0,
            );
            log.var_cols[j].extend([(kp, 1.0), (km, -1.0)]);
            if lo.is_finite() {
                bound_rows.push((j, RowSense::Ge, lo));
            }
            if up.is_finite() {
                bound_rows.push((j, RowSense::Le, up));
            }
        }
    }

    // Assemble rows as (coefs over standard columns, sense, rhs, name, origin).
    struct Pending {
        coefs: Vec<(usize, f64)>,
        sense: RowSense,
        rhs: f64,
        name: String,
        origin: RowOrigin,
    }
    let expand = |log: &ConversionLog, coefs: &[(usize, f64)], rhs: f64| {
        let mut out = Vec::new();
        let mut rhs = rhs;
        for &(j, a) in coefs {
            rhs -= a * log.var_base[j];
            for &(k, s) in &log.var_cols[j] {
                out.push((k, a * s));
            }
        }
        (out, rhs)
    };
    let mut pending = Vec::new();
    for (i, row) in general.rows.iter().enumerate() {
        let (coefs, rhs) = expand(&log, &row.coefs, row.rhs);
        pending.push(Pending {
            coefs,
            sense: row.sense,
            rhs,
            name: row.name.clone(),
            origin: RowOrigin::General(i),
        });
    }
    for &(j, sense, value) in &bound_rows {
        log.steps.push(ConversionStep::BoundRow { var: j, sense, value });
        let (coefs, rhs) = expand(&log, &[(j, 1.0)], value);
        let tag = if sense == RowSense::Le { "ub" } else { "lb" };
        pending.push(Pending {
            coefs,
            sense,
            rhs,
            name: format!("{tag}({})", general.vars[j].name),
            origin: RowOrigin::Bound(j),
        });
    }

    let m = pending.len();
    let mut row_names = Vec::with_capacity(m);
    let mut slack_cols: Vec<Option<usize>> = vec![None; m];
    for (r, p) in pending.iter().enumerate() {
        if p.sense != RowSense::Eq {
            let row = match p.origin {
                RowOrigin::General(i) => i,
                RowOrigin::Bound(_) => usize::MAX,
            };
            if row != usize::MAX {
                log.steps.push(ConversionStep::Slack { row, sense: p.sense });
            }
            let k = push_col(&mut log, format!("slack({})", p.name), ColumnOrigin::Slack { row: r }, 0.0, 0.0);
            slack_cols[r] = Some(k);
        }
    }
    let n = c_hat.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for (r, p) in pending.into_iter().enumerate() {
        for (k, v) in p.coefs {
            a[(r, k)] += v;
        }
        if let Some(k) = slack_cols[r] {
            a[(r, k)] = if p.sense == RowSense::Le { 1.0 } else { -1.0 };
        }
        b[r] = p.rhs;
        log.rows.push(p.origin);
        row_names.push(p.name);
    }
    log.general_rows = (0..general.rows.len()).collect();

    let mut lp = LinearProgram::with_names(a, b, DVector::from_vec(c_hat), row_names, col_names)?;
    lp.offset = offset;
    lp.shift = DVector::from_vec(shift);
    lp.conversion = log;
    Ok(lp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    /// `p(b, c) = +inf`.
    PrimalInfeasible,
    /// Primal feasible and `p(b, c) = -inf`.
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    /// `p(b, c)` including the objective offset; `+inf` / `-inf` for the
    /// infeasible / unbounded cases, NaN on failure.
    pub objective: f64,
    pub dual_objective: f64,
}

impl LpSolution {
    fn without_point(status: LpStatus, m: usize, n: usize) -> Self {
        let objective = match status {
            LpStatus::PrimalInfeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        Self {
            status,
            x: vec![0.0; n],
            y: vec![0.0; m],
            s: vec![0.0; n],
            objective,
            dual_objective: objective,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Computes `p(b, c)` and a dual solution for `d(b, c)`.
pub fn solve_perturbed(ctx: &SolveContext, lp: &LinearProgram, b: &DVector<f64>, c: &DVector<f64>) -> Result<LpSolution> {
    let (m, n) = (lp.m(), lp.n());
    if b.len() != m || c.len() != n {
        return Err(Error::Dimension(format!(
            "perturbation sizes ({}, {}) do not match LP ({m}, {n})",
            b.len(),
            c.len()
        )));
    }
    let program = lp.lp_program(b, c);
    let sol = ctx.solve(&program);
    let status = match sol.status {
        ConicStatus::Optimal | ConicStatus::Inaccurate => {
            let x = sol.primal.clone();
            let y = sol.dual.clone();
            let s = sol.dual_slack.clone();
            let res = lp.residuals(b, c, &x, &y, &s);
            if res.within(ctx.tol.feas, ctx.tol.gap) {
                let offset = lp.objective_offset(c);
                return Ok(LpSolution {
                    status: LpStatus::Optimal,
                    objective: sol.objective,
                    dual_objective: offset + (lp.b_hat() + b).dot(&DVector::from_column_slice(&y)),
                    x,
                    y,
                    s,
                });
            }
            log::warn!("LP solve returned {:?} with residuals {res:?}", sol.status);
            LpStatus::NumericalFailure
        }
        ConicStatus::Infeasible => LpStatus::PrimalInfeasible,
        ConicStatus::Unbounded => {
            // Dual infeasible; p is -inf only if the primal is feasible.
            if primal_feasible(ctx, lp, b)? {
                LpStatus::Unbounded
            } else {
                LpStatus::PrimalInfeasible
            }
        }
        ConicStatus::Failed(stage) => {
            log::warn!("LP solve failed at {stage:?}: {}", sol.backend_status);
            LpStatus::NumericalFailure
        }
    };
    Ok(LpSolution::without_point(status, m, n))
}

/// Whether `P(b)` is nonempty.
pub fn primal_feasible(ctx: &SolveContext, lp: &LinearProgram, b: &DVector<f64>) -> Result<bool> {
    let zero_c = -lp.c_hat();
    let mut program = lp.lp_program(b, &zero_c);
    program.set_offset(0.0);
    feasibility(ctx, &program)
}

/// Whether `D(c)` is nonempty.
pub fn dual_feasible(ctx: &SolveContext, lp: &LinearProgram, c: &DVector<f64>) -> Result<bool> {
    let (m, n) = (lp.m(), lp.n());
    let mut p = ConicProgram::new();
    let y = p.add_block("y", Cone::Free, m);
    let s = p.add_block("s", Cone::Nonnegative, n);
    for j in 0..n {
        let coefs = (0..m)
            .filter_map(|i| {
                let v = lp.a()[(i, j)];
                (v != 0.0).then_some((y.start + i, v))
            })
            .chain([(s.start + j, 1.0)]);
        p.add_row(lp.col_names[j].clone(), coefs, lp.c_hat()[j] + c[j]);
    }
    feasibility(ctx, &p)
}

fn feasibility(ctx: &SolveContext, program: &ConicProgram) -> Result<bool> {
    let sol = ctx.solve(program);
    match sol.status {
        ConicStatus::Optimal | ConicStatus::Inaccurate => {
            let scale = norm_inf(program.rhs()).max(1.0);
            let resid = program
                .apply(&sol.primal)
                .iter()
                .zip(program.rhs())
                .map(|(l, r)| (l - r).abs())
                .fold(0.0, f64::max);
            if resid <= ctx.tol.feas * scale && program.cone_violation(&sol.primal) <= ctx.tol.feas * scale {
                Ok(true)
            } else {
                Err(Error::Numerical(format!("feasibility solve returned residual {resid:.3e}")))
            }
        }
        ConicStatus::Infeasible => Ok(false),
        ConicStatus::Unbounded => Ok(true),
        ConicStatus::Failed(stage) => Err(Error::Numerical(format!(
            "feasibility solve failed at {stage:?}: {}",
            sol.backend_status
        ))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub primal_nonempty: bool,
    pub dual_nonempty: bool,
    pub primal_bounded: bool,
    pub dual_bounded: bool,
    /// `p(0, 0)` when both sides are nonempty.
    pub nominal_value: Option<f64>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.primal_nonempty && self.dual_nonempty && (self.primal_bounded || self.dual_bounded)
    }

    /// Human-readable description of the violated clause, if any.
    pub fn violation(&self) -> Option<String> {
        if !self.primal_nonempty {
            Some("the nominal primal feasible set P(0) is empty".into())
        } else if !self.dual_nonempty {
            Some("the nominal dual feasible set D(0) is empty".into())
        } else if !(self.primal_bounded || self.dual_bounded) {
            Some("neither P(0) nor D(0) is bounded".into())
        } else {
            None
        }
    }
}

/// Nonemptiness and boundedness of `P(0)` and `D(0)`.
pub fn check_assumptions(ctx: &SolveContext, lp: &LinearProgram) -> Result<AssumptionReport> {
    let (m, n) = (lp.m(), lp.n());
    let zero_b = DVector::zeros(m);
    let zero_c = DVector::zeros(n);
    let primal_nonempty = primal_feasible(ctx, lp, &zero_b)?;
    let dual_nonempty = dual_feasible(ctx, lp, &zero_c)?;

    // P(0) bounded iff max{1^T x : A x = 0, 0 <= x <= 1} = 0.
    let mut p = ConicProgram::new();
    let x = p.add_block("x", Cone::Nonnegative, n);
    let slack = p.add_block("slack", Cone::Nonnegative, n);
    for i in 0..m {
        let coefs = (0..n).filter_map(|j| {
            let v = lp.a()[(i, j)];
            (v != 0.0).then_some((x.start + j, v))
        });
        p.add_row(lp.row_names[i].clone(), coefs, 0.0);
    }
    for j in 0..n {
        p.add_row(format!("cap[{j}]"), [(x.start + j, 1.0), (slack.start + j, 1.0)], 1.0);
        p.set_objective(x.start + j, -1.0);
    }
    let primal_bounded = recession_is_trivial(ctx, &p)?;

    // D(0) bounded iff no (y, s) != 0 with A^T y + s = 0, s >= 0: first
    // max{1^T s} over the capped cone, then the rank of A for the s = 0 part.
    let mut p = ConicProgram::new();
    let y = p.add_block("y", Cone::Free, m);
    let s = p.add_block("s", Cone::Nonnegative, n);
    let s_cap = p.add_block("s_cap", Cone::Nonnegative, n);
    let y_cap = p.add_block("y_cap", Cone::Nonnegative, 2 * m);
    for j in 0..n {
        let coefs = (0..m)
            .filter_map(|i| {
                let v = lp.a()[(i, j)];
                (v != 0.0).then_some((y.start + i, v))
            })
            .chain([(s.start + j, 1.0)]);
        p.add_row(lp.col_names[j].clone(), coefs, 0.0);
        p.add_row(format!("scap[{j}]"), [(s.start + j, 1.0), (s_cap.start + j, 1.0)], 1.0);
        p.set_objective(s.start + j, -1.0);
    }
    for i in 0..m {
        p.add_row(format!("yhi[{i}]"), [(y.start + i, 1.0), (y_cap.start + 2 * i, 1.0)], 1.0);
        p.add_row(format!("ylo[{i}]"), [(y.start + i, -1.0), (y_cap.start + 2 * i + 1, 1.0)], 1.0);
    }
    let dual_bounded = recession_is_trivial(ctx, &p)? && rank(lp.a(), 1e-10) == m;

    let nominal_value = if primal_nonempty && dual_nonempty {
        let sol = solve_perturbed(ctx, lp, &zero_b, &zero_c)?;
        match sol.status {
            LpStatus::Optimal => Some(sol.objective),
            other => {
                return Err(Error::Numerical(format!("nominal LP solve returned {other:?}")));
            }
        }
    } else {
        None
    };
    Ok(AssumptionReport {
        primal_nonempty,
        dual_nonempty,
        primal_bounded,
        dual_bounded,
        nominal_value,
    })
}

fn recession_is_trivial(ctx: &SolveContext, program: &ConicProgram) -> Result<bool> {
    let sol = ctx.solve(program);
    if !sol.status.has_solution() {
        return Err(Error::Numerical(format!(
            "recession-cone solve returned {:?} ({})",
            sol.status, sol.backend_status
        )));
    }
    Ok(-sol.objective <= ctx.tol.feas)
}
