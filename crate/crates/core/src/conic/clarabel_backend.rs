use super::{verify, Cone, ConicProgram, ConicSolution, ConicSolver, ConicStatus, FailureStage, SolverSettings};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use std::time::Instant;

// Forces the system OpenBLAS to be linked for the PSD cone kernels.
use openblas_src as _;

/// Interior-point backend built on the Clarabel solver.
///
/// The variable-block form is mapped onto Clarabel's `A x + s = b, s in K`
/// form. A nonnegative or second-order block whose variables each occur in
/// exactly one row, all with the same coefficient and zero cost, is a slack
/// block: its rows become cone rows and the block disappears. Every other
/// constrained block gets a `-I` row block; remaining rows are equalities.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelSolver;

/// Block whose rows are turned into cone rows.
struct SlackBlock {
    block: usize,
    rows: Vec<usize>,
    coef: f64,
}

fn slack_blocks(program: &ConicProgram) -> Vec<SlackBlock> {
    let n = program.num_vars();
    let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for r in 0..program.num_rows() {
        for (c, v) in program.row(r) {
            col_rows[c].push((r, v));
        }
    }
    let mut claimed = vec![false; program.num_rows()];
    let mut out = Vec::new();
    for (b, block) in program.blocks().iter().enumerate() {
        if !matches!(block.cone, Cone::Nonnegative | Cone::SecondOrder) || block.len == 0 {
            continue;
        }
        let cols = block.start..block.start + block.len;
        let mut rows = Vec::with_capacity(block.len);
        let mut coef = None;
        let ok = cols.clone().all(|c| {
            let [(r, v)] = col_rows[c][..] else { return false };
            let same = *coef.get_or_insert(v) == v;
            let alone = program.row(r).filter(|(cc, _)| cols.contains(cc)).count() == 1;
            rows.push(r);
            same && alone && !claimed[r] && program.objective()[c] == 0.0
        });
        if ok {
            for &r in &rows {
                claimed[r] = true;
            }
            out.push(SlackBlock {
                block: b,
                rows,
                coef: coef.unwrap_or(1.0),
            });
        }
    }
    out
}

impl ConicSolver for ClarabelSolver {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn solve(&self, program: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
        let start = Instant::now();
        let n = program.num_vars();
        let m = program.num_rows();
        if let Err(msg) = program.validate() {
            return ConicSolution::failed(FailureStage::Presolve, msg, n, m);
        }

        let slacks = slack_blocks(program);
        let mut dropped = vec![false; n];
        let mut row_sign = vec![0.0; m];
        let mut slack_of_row = vec![None; m];
        for sb in &slacks {
            let block = &program.blocks()[sb.block];
            for (k, &r) in sb.rows.iter().enumerate() {
                dropped[block.start + k] = true;
                row_sign[r] = sb.coef.signum();
                slack_of_row[r] = Some((block.start + k, sb.coef));
            }
        }
        let mut col_map = vec![usize::MAX; n];
        let mut kept = 0;
        for c in 0..n {
            if !dropped[c] {
                col_map[c] = kept;
                kept += 1;
            }
        }

        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        // Clarabel row of each program row, with the factor applied to it.
        let mut placed = vec![(0usize, 1.0f64); m];
        let mut next_row = 0;
        let push_row = |r: usize, factor: f64, rows: &mut Vec<usize>, cols: &mut Vec<usize>, vals: &mut Vec<f64>, b: &mut Vec<f64>, at: usize| {
            for (c, v) in program.row(r) {
                if !dropped[c] {
                    rows.push(at);
                    cols.push(col_map[c]);
                    vals.push(factor * v);
                }
            }
            b.push(factor * program.rhs()[r]);
        };
        let mut cones = Vec::new();
        let eq_rows: Vec<usize> = (0..m).filter(|&r| row_sign[r] == 0.0).collect();
        for &r in &eq_rows {
            push_row(r, 1.0, &mut rows, &mut cols, &mut vals, &mut b, next_row);
            placed[r] = (next_row, 1.0);
            next_row += 1;
        }
        if !eq_rows.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(eq_rows.len()));
        }
        for sb in &slacks {
            let sign = sb.coef.signum();
            for &r in &sb.rows {
                push_row(r, sign, &mut rows, &mut cols, &mut vals, &mut b, next_row);
                placed[r] = (next_row, sign);
                next_row += 1;
            }
            let block = &program.blocks()[sb.block];
            cones.push(match block.cone {
                Cone::SecondOrder => SupportedConeT::SecondOrderConeT(block.len),
                _ => SupportedConeT::NonnegativeConeT(block.len),
            });
        }
        let is_slack: Vec<bool> = (0..program.blocks().len()).map(|i| slacks.iter().any(|sb| sb.block == i)).collect();
        for (i, block) in program.blocks().iter().enumerate() {
            if is_slack[i] || block.len == 0 {
                continue;
            }
            let cone = match block.cone {
                Cone::Free => continue,
                Cone::Zero => SupportedConeT::ZeroConeT(block.len),
                Cone::Nonnegative => SupportedConeT::NonnegativeConeT(block.len),
                Cone::SecondOrder => SupportedConeT::SecondOrderConeT(block.len),
                Cone::Psd { side } => SupportedConeT::PSDTriangleConeT(side),
            };
            for k in 0..block.len {
                rows.push(next_row + k);
                cols.push(col_map[block.start + k]);
                vals.push(-1.0);
            }
            b.extend(std::iter::repeat_n(0.0, block.len));
            next_row += block.len;
            cones.push(cone);
        }
        let total_rows = next_row;
        let a = CscMatrix::new_from_triplets(total_rows, kept, rows, cols, vals);
        let p = CscMatrix::<f64>::zeros((kept, kept));
        let objective: Vec<f64> = (0..n).filter(|&c| !dropped[c]).map(|c| program.objective()[c]).collect();

        let clarabel_settings = DefaultSettingsBuilder::default()
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .time_limit(settings.time_limit)
            .tol_feas(settings.tol_feas)
            .tol_gap_abs(settings.tol_gap)
            .tol_gap_rel(settings.tol_gap)
            .tol_infeas_abs(settings.tol_feas)
            .tol_infeas_rel(settings.tol_feas)
            .build();
        let clarabel_settings = match clarabel_settings {
            Ok(s) => s,
            Err(e) => return ConicSolution::failed(FailureStage::Presolve, format!("{e:?}"), n, m),
        };
        let mut solver = match DefaultSolver::new(&p, &objective, &a, &b, &cones, clarabel_settings) {
            Ok(s) => s,
            Err(e) => return ConicSolution::failed(FailureStage::Presolve, format!("{e:?}"), n, m),
        };
        solver.solve();
        let sol = &solver.solution;

        // Program-row multipliers in Clarabel's sign (y = -z for unscaled rows).
        let z_eq: Vec<f64> = (0..m).map(|r| placed[r].1 * sol.z[placed[r].0]).collect();
        let mut status = match sol.status {
            SolverStatus::Solved => ConicStatus::Optimal,
            SolverStatus::AlmostSolved => ConicStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConicStatus::Unbounded,
            SolverStatus::MaxIterations | SolverStatus::MaxTime => ConicStatus::Failed(FailureStage::IterationLimit),
            SolverStatus::NumericalError => ConicStatus::Failed(FailureStage::Factorization),
            SolverStatus::InsufficientProgress => ConicStatus::Failed(FailureStage::LineSearch),
            SolverStatus::Unsolved | SolverStatus::CallbackTerminated => {
                ConicStatus::Failed(FailureStage::IterationLimit)
            }
        };

        let (dual, dual_slack) = match status {
            ConicStatus::Infeasible => {
                let aty = program.apply_transpose(&z_eq);
                (z_eq, aty)
            }
            _ => {
                let y: Vec<f64> = z_eq.iter().map(|v| -v).collect();
                let aty = program.apply_transpose(&y);
                let s = program.objective().iter().zip(&aty).map(|(c, a)| c - a).collect();
                (y, s)
            }
        };
        let mut primal = vec![0.0; n];
        for c in 0..n {
            if !dropped[c] {
                primal[c] = sol.x[col_map[c]];
            }
        }
        for r in 0..m {
            if let Some((c, coef)) = slack_of_row[r] {
                let rest: f64 = program.row(r).filter(|&(cc, _)| cc != c).map(|(cc, v)| v * primal[cc]).sum();
                primal[c] = (program.rhs()[r] - rest) / coef;
            }
        }
        let residuals = verify(program, &primal, &dual, &dual_slack);
        if status == ConicStatus::Optimal {
            let loose = 100.0;
            let feas = settings.tol_feas * loose;
            if residuals.primal > feas
                || residuals.dual > feas
                || residuals.dual_cone > settings.tol_feas * 10.0
                || residuals.gap > settings.tol_gap * loose
                || residuals.cone > feas * (1.0 + crate::linalg::norm_inf(&primal))
            {
                log::debug!("clarabel reported Solved but residuals fail verification: {residuals:?}");
                status = ConicStatus::Inaccurate;
            }
        }
        let dual_objective = program.offset() + program.rhs().iter().zip(&dual).map(|(a, b)| a * b).sum::<f64>();
        ConicSolution {
            status,
            objective: program.objective_value(&primal),
            dual_objective,
            primal,
            dual,
            dual_slack,
            residuals,
            iterations: sol.iterations,
            wall_time: start.elapsed().as_secs_f64(),
            backend_status: format!("{:?}", sol.status),
        }
    }
}
