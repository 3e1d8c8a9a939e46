//! Best-case and worst-case bilinear programs in the general form
//! `min z'Wz + 2w'z  s.t.  Ez = f, z in K` with
//! `K = homg(U) x R+^n x R^m x R+^n`.

use crate::linalg::SparseVec;
use crate::lp::LinearProgram;
use crate::uncertainty::{ConstraintSystem, HomogenizedCone, Layout, UncertaintySet};
use crate::{Error, Result, SolveContext};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    /// `q-`: minimize `(c_hat + c)'x`.
    BestCase,
    /// `q+`: maximize `(b_hat + b)'y`, stored as minimization of the negative.
    WorstCase,
}

impl Sense {
    /// Factor turning the internal (minimized) objective into the reported value.
    pub fn sign(self) -> f64 {
        match self {
            Sense::BestCase => 1.0,
            Sense::WorstCase => -1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Sense::BestCase => "best",
            Sense::WorstCase => "worst",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneralQp {
    pub sense: Sense,
    pub layout: Layout,
    /// Symmetric `N x N`.
    pub w_quad: DMatrix<f64>,
    /// Half the linear coefficient.
    pub w_lin: DVector<f64>,
    pub e: Vec<SparseVec>,
    pub e_labels: Vec<String>,
    pub f: DVector<f64>,
    pub cone: HomogenizedCone,
    /// `(x_i, s_i)` index pairs of the complementarity matrices `H_i`.
    pub h_pairs: Vec<(usize, usize)>,
    /// Feasible set at `t = 1`, for convex subproblems.
    pub system: ConstraintSystem,
}

/// Builds the general-form program for one sense.
pub fn build(lp: &LinearProgram, set: &UncertaintySet, sense: Sense) -> Result<GeneralQp> {
    let system = ConstraintSystem::new(set, lp)?;
    let layout = system.layout;
    let len = layout.len();
    let mut w_quad = DMatrix::zeros(len, len);
    let mut w_lin = DVector::zeros(len);
    let map_c_shift = set.map_c().transpose() * lp.shift();
    match sense {
        Sense::BestCase => {
            for (k, tc) in layout.theta_c().enumerate() {
                for (j, xj) in layout.x().enumerate() {
                    let v = set.map_c()[(j, k)] / 2.0;
                    w_quad[(tc, xj)] = v;
                    w_quad[(xj, tc)] = v;
                }
            }
            for (j, xj) in layout.x().enumerate() {
                w_lin[xj] = lp.c_hat()[j] / 2.0;
            }
            w_lin[layout.t()] = lp.offset() / 2.0;
        }
        Sense::WorstCase => {
            for (k, tb) in layout.theta_b().enumerate() {
                for (i, yi) in layout.y().enumerate() {
                    let v = -set.map_b()[(i, k)] / 2.0;
                    w_quad[(tb, yi)] = v;
                    w_quad[(yi, tb)] = v;
                }
            }
            for (i, yi) in layout.y().enumerate() {
                w_lin[yi] = -lp.b_hat()[i] / 2.0;
            }
            w_lin[layout.t()] = -lp.offset() / 2.0;
        }
    }
    for (k, tc) in layout.theta_c().enumerate() {
        w_lin[tc] += sense.sign() * map_c_shift[k] / 2.0;
    }
    let e: Vec<SparseVec> = system.system.eq.iter().map(|r| r.coefs.clone()).collect();
    let e_labels = system.system.eq.iter().map(|r| r.label.clone()).collect();
    let f = DVector::from_iterator(e.len(), system.system.eq.iter().map(|r| r.rhs));
    let h_pairs = layout.x().zip(layout.s()).collect();
    Ok(GeneralQp {
        sense,
        layout,
        w_quad,
        w_lin,
        e,
        e_labels,
        f,
        cone: set.homogenize(),
        h_pairs,
        system,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QpResiduals {
    /// `||Ez - f||_inf`
    pub equality: f64,
    /// Largest violation of `z in K`.
    pub cone: f64,
    /// `max_i |x_i s_i|`
    pub complementarity: f64,
}

impl GeneralQp {
    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Internal (minimized) objective `z'Wz + 2 w'z`.
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        z.dot(&(&self.w_quad * &z)) + 2.0 * self.w_lin.dot(&z)
    }

    /// Objective in the reported sense: `(c_hat + c)'x` or `(b_hat + b)'y`
    /// (plus any objective constant).
    pub fn value(&self, z: &[f64]) -> f64 {
        self.sense.sign() * self.evaluate(z)
    }

    pub fn residuals(&self, z: &[f64]) -> QpResiduals {
        let equality = self
            .e
            .iter()
            .zip(self.f.iter())
            .map(|(row, f)| (row.dot(z) - f).abs())
            .fold(0.0, f64::max);
        let u_block = &z[..self.layout.u().end];
        let mut cone: f64 = hom_violation(&self.cone, u_block);
        for i in self.layout.x().chain(self.layout.s()) {
            cone = cone.max(-z[i]);
        }
        let complementarity = self.h_pairs.iter().map(|&(x, s)| (z[x] * z[s]).abs()).fold(0.0, f64::max);
        QpResiduals {
            equality,
            cone,
            complementarity,
        }
    }

    /// Dense `H_i` with `1/2` at `(x_i, s_i)` and `(s_i, x_i)`.
    pub fn h_matrix(&self, i: usize) -> DMatrix<f64> {
        let (x, s) = self.h_pairs[i];
        let mut h = DMatrix::zeros(self.len(), self.len());
        h[(x, s)] = 0.5;
        h[(s, x)] = 0.5;
        h
    }

    pub fn e_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.e.len(), self.len());
        for (r, row) in self.e.iter().enumerate() {
            for &(c, v) in row.entries() {
                e[(r, c)] = v;
            }
        }
        e
    }

    /// Whether the bilinear term vanishes on the feasible set.
    pub fn is_convex_case(&self, set: &UncertaintySet) -> bool {
        match self.sense {
            Sense::BestCase => set.c_is_zero(),
            Sense::WorstCase => set.b_is_zero(),
        }
    }

    /// Optimizes the linear part alone over the feasible set. Equal to the
    /// program's optimum when [`Self::is_convex_case`] holds. Returns the
    /// reported value and the optimal `z`.
    pub fn solve_linear_part(&self, ctx: &SolveContext) -> Result<(f64, Vec<f64>)> {
        let objective: Vec<f64> = self.w_lin.iter().map(|v| 2.0 * v).collect();
        let out = self.system.system.minimize(ctx, &objective);
        if !out.status.has_solution() {
            return Err(Error::Numerical(format!(
                "convex {} solve returned {:?} ({})",
                self.sense.tag(),
                out.status,
                out.solution.backend_status
            )));
        }
        Ok((self.value(&out.point), out.point))
    }
}

fn hom_violation(cone: &HomogenizedCone, v: &[f64]) -> f64 {
    let mut worst: f64 = (-v[0]).max(0.0);
    for r in &cone.eq {
        worst = worst.max(r.coefs.dot(v).abs());
    }
    for r in &cone.ge {
        worst = worst.max(-r.coefs.dot(v));
    }
    for r in &cone.soc {
        let norm = r.norm.iter().map(|a| a.dot(v).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(norm - r.bound.dot(v));
    }
    worst
}

/// Exact value through one convex solve when the bilinear term vanishes
/// (`c = 0` on the set for the best case, `b = 0` for the worst case).
pub fn polynomial_case(ctx: &SolveContext, lp: &LinearProgram, set: &UncertaintySet, sense: Sense) -> Result<Option<f64>> {
    let qp = build(lp, set, sense)?;
    if !qp.is_convex_case(set) {
        return Ok(None);
    }
    qp.solve_linear_part(ctx).map(|(v, _)| Some(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> (LinearProgram, UncertaintySet) {
        let lp = LinearProgram::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let set = UncertaintySet::box_set(1, 2, &[(0, -1.0, 1.0)], &[(0, -0.5, 0.5), (1, 0.0, 0.0)]).unwrap();
        (lp, set)
    }

    fn wendell_1() -> (LinearProgram, UncertaintySet) {
        let a = DMatrix::from_row_slice(2, 6, &[4.0, 9.0, 7.0, 10.0, 1.0, 0.0, 1.0, 1.0, 3.0, 40.0, 0.0, 1.0]);
        let lp = LinearProgram::new(
            a,
            DVector::from_vec(vec![6000.0, 4000.0]),
            DVector::from_vec(vec![-12.0, -18.0, -18.0, -40.0, 0.0, 0.0]),
        )
        .unwrap();
        let set = UncertaintySet::box_set(2, 6, &[], &[(0, -4.0, 2.0)]).unwrap();
        (lp, set)
    }

    #[test]
    fn structure_of_best_case_program() {
        let (lp, set) = example();
        let qp = build(&lp, &set, Sense::BestCase).unwrap();
        let l = qp.layout;
        assert_eq!(l.len(), 1 + 3 + 2 + 1 + 2);
        assert_eq!(qp.e.len(), 1 + 2 + 1 + 1);
        assert_eq!(qp.f.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(qp.f[qp.f.len() - 1], 1.0);
        let nonzero = qp.w_quad.iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 4);
        assert_eq!(qp.w_quad[(l.theta_c().start, l.x().start)], 0.5);
        assert_eq!(qp.h_pairs.len(), 2);
        assert_eq!(qp.h_matrix(1).iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn evaluates_example_best_case_point() {
        let (lp, set) = example();
        let qp = build(&lp, &set, Sense::BestCase).unwrap();
        let l = qp.layout;
        let mut z = vec![0.0; l.len()];
        z[0] = 1.0;
        z[l.theta_b().start] = -1.0;
        z[l.theta_c().start] = -0.5;
        z[l.x().start] = 1.0;
        // dual: y = 0.5, s = (0, 0.5) for costs (0.5, 1)
        z[l.y().start] = 0.5;
        z[l.s().start + 1] = 0.5;
        assert!((qp.value(&z) - 0.5).abs() < 1e-12);
        let r = qp.residuals(&z);
        assert!(r.equality < 1e-12 && r.cone < 1e-12 && r.complementarity < 1e-12);
    }

    #[test]
    fn zero_point_has_unit_t_residual() {
        let (lp, set) = example();
        let qp = build(&lp, &set, Sense::WorstCase).unwrap();
        let z = vec![0.0; qp.len()];
        assert_eq!(qp.evaluate(&z), 0.0);
        assert_eq!(qp.residuals(&z).equality, 1.0);
    }

    #[test]
    fn wendell_worst_case_shortcut() {
        let (lp, mut set) = wendell_1();
        let ctx = SolveContext::default();
        set.check(&ctx).unwrap();
        let v = polynomial_case(&ctx, &lp, &set, Sense::WorstCase).unwrap().unwrap();
        assert!((v + 16000.0).abs() < 1e-2, "{v}");
        assert!(polynomial_case(&ctx, &lp, &set, Sense::BestCase).unwrap().is_none());
    }

    #[test]
    fn singleton_set_gives_nominal_value_both_ways() {
        let (lp, _) = example();
        let ctx = SolveContext::default();
        let mut set = UncertaintySet::singleton(1, 2);
        set.check(&ctx).unwrap();
        for sense in [Sense::BestCase, Sense::WorstCase] {
            let v = polynomial_case(&ctx, &lp, &set, sense).unwrap().unwrap();
            assert!((v - 2.0).abs() < 1e-6);
        }
    }
}
