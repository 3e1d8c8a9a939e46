#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robsens_core::instance::{Block, Instance, InstanceOptions, Target};
use robsens_core::lp::{GeneralFormLp, GeneralRow, GeneralVar, RowSense};
use robsens_core::uncertainty::NormKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetKind {
    Box,
    Ball,
}

/// Random `min c'x, Ax = b, x >= 0` with a strictly feasible primal (`x0 > 0`),
/// a strictly feasible dual (`s0 > 0`) and a positive first row, so `P(0)`
/// is bounded. Uncertainty touches some rows and some costs.
pub fn random_instance(seed: u64, m: usize, n: usize, kind: SetKind) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(m, n, |i, _| if i == 0 { rng.random_range(0.5..1.5) } else { rng.random_range(-1.0..1.0) });
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rhs: Vec<f64> = (0..m).map(|i| (0..n).map(|j| a[(i, j)] * x0[j]).sum()).collect();
    let cost: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| a[(i, j)] * y0[i]).sum::<f64>() + rng.random_range(0.2..1.5))
        .collect();
    let vars = (0..n)
        .map(|j| GeneralVar {
            name: format!("x{j}"),
            lower: 0.0,
            upper: f64::INFINITY,
        })
        .collect();
    let rows = (0..m)
        .map(|i| GeneralRow {
            name: format!("r{i}"),
            coefs: (0..n).map(|j| (j, a[(i, j)])).collect(),
            sense: RowSense::Eq,
            rhs: rhs[i],
        })
        .collect();
    let mut targets: Vec<Target> = (0..m).filter(|_| rng.random_bool(0.5)).map(Target::Row).collect();
    targets.extend((0..n).filter(|_| rng.random_bool(0.4)).map(Target::Var));
    if targets.is_empty() {
        targets.push(Target::Row(0));
    }
    let blocks = match kind {
        SetKind::Box => vec![Block::Box(
            targets
                .iter()
                .map(|&t| {
                    let lo = -rng.random_range(0.0..0.4);
                    let hi = rng.random_range(0.0..0.4);
                    (t, lo, hi)
                })
                .collect(),
        )],
        SetKind::Ball => {
            let (rows, costs): (Vec<Target>, Vec<Target>) = targets.into_iter().partition(|t| matches!(t, Target::Row(_)));
            [rows, costs]
                .into_iter()
                .filter(|t| !t.is_empty())
                .map(|targets| Block::Ball {
                    kind: NormKind::Two,
                    radius: rng.random_range(0.05..0.4),
                    targets,
                    factor: None,
                })
                .collect()
        }
    };
    Instance {
        name: format!("random_{seed}"),
        note: None,
        general: GeneralFormLp {
            name: format!("random_{seed}"),
            vars,
            rows,
            objective: cost,
            constant: 0.0,
        },
        blocks,
        options: InstanceOptions {
            samples: Some(200),
            seed: Some(seed),
            ..InstanceOptions::default()
        },
        expect: Vec::new(),
    }
}

use nalgebra::DVector;
use robsens_core::bqp::GeneralQp;
use robsens_core::lp::{solve_perturbed, LinearProgram};
use robsens_core::uncertainty::Sample;
use robsens_core::SolveContext;

/// `sample.z` with `(x, y, s)` replaced by an optimal pair at its
/// perturbation: a point of the BQP feasible set, with `p(b, c)`.
pub fn bqp_point(ctx: &SolveContext, lp: &LinearProgram, qp: &GeneralQp, sample: &Sample) -> Option<(Vec<f64>, f64)> {
    let sol = solve_perturbed(ctx, lp, &sample.b, &sample.c).ok()?;
    if !sol.is_optimal() {
        return None;
    }
    let l = qp.layout;
    let mut z = sample.z.clone();
    z[l.x()].copy_from_slice(&sol.x);
    z[l.y()].copy_from_slice(&sol.y);
    z[l.s()].copy_from_slice(&sol.s);
    Some((z, sol.objective))
}

/// Exact BQP-feasible point at `shrink * theta` of a sample: the optimal
/// basis is read off the interior-point answer and `(x, y, s)` recomputed
/// from it. `None` when the answer is degenerate or the basis is not
/// primal and dual feasible.
pub fn exact_bqp_point(ctx: &SolveContext, lp: &LinearProgram, qp: &GeneralQp, sample: &Sample, shrink: f64) -> Option<Vec<f64>> {
    let l = qp.layout;
    let theta: Vec<f64> = sample.z[l.theta()].iter().map(|v| v * shrink).collect();
    let mut z = vec![0.0; l.len()];
    z[l.t()] = 1.0;
    z[l.theta()].copy_from_slice(&theta);
    if !l.w().is_empty() {
        return None;
    }
    let (b, c) = qp.system.perturbation(&z);
    let sol = solve_perturbed(ctx, lp, &b, &c).ok()?;
    if !sol.is_optimal() {
        return None;
    }
    let (m, n) = (lp.m(), lp.n());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sol.x[j].total_cmp(&sol.x[i]));
    let basis = &order[..m];
    if sol.x[basis[m - 1]] < 1e-6 || order[m..].iter().any(|&j| sol.s[j] < 1e-6) {
        return None;
    }
    let a_b = DMatrix::from_fn(m, m, |i, k| lp.a()[(i, basis[k])]);
    let rhs = lp.b_hat() + &b;
    let cost = lp.c_hat() + &c;
    let lu = a_b.clone().lu();
    let x_b = lu.solve(&rhs)?;
    let c_b = DVector::from_fn(m, |k, _| cost[basis[k]]);
    let y = a_b.transpose().lu().solve(&c_b)?;
    let s = &cost - lp.a().transpose() * &y;
    let mut x = vec![0.0; n];
    for (k, &j) in basis.iter().enumerate() {
        x[j] = x_b[k];
    }
    if x.iter().any(|&v| v < 0.0) {
        return None;
    }
    let mut s: Vec<f64> = s.iter().copied().collect();
    for &j in basis {
        s[j] = 0.0;
    }
    if s.iter().any(|&v| v < 0.0) {
        return None;
    }
    z[l.x()].copy_from_slice(&x);
    z[l.y()].copy_from_slice(y.as_slice());
    z[l.s()].copy_from_slice(&s);
    Some(z)
}
