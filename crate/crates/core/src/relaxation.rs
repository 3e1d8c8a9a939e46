//! SDP-based relaxation of a [`GeneralQp`].
//!
//! The lifted variable is the bordered moment matrix
//! `M = [[1, z'], [z, Z]]` of side `N + 1`, indexed so that `M[0][0] = 1`
//! and `M[i + 1][j + 1] = Z[i][j]`. Every constraint is kept in the registry
//! as a bilinear form `p' M q` (or a second-order cone of such forms), so it
//! can be evaluated on any candidate `M`.
//!
//! With `M` positive semidefinite, `Ez = f` together with
//! `diag(E Z E') = f o f` holds exactly when `K M = 0` for `K = [-f | E]`.
//! The program is therefore posed over `M = V R V'` with `V` an echelon
//! basis of the null space of `K` and `R` positive semidefinite; the two
//! equality families are implied and only checked afterwards.

use crate::bqp::{GeneralQp, Sense};
use crate::conic::{Cone, ConicProgram, ConicSolution, ConicStatus};
use crate::linalg::{echelon_null_space, min_eigenvalue, smat, svec_len, SparseVec};
use crate::{Error, Result, SolveContext};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashSet;
use std::f64::consts::SQRT_2;

/// Default cap on the number of lifted variables `N`.
pub const DEFAULT_SIZE_CAP: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelaxOptions {
    pub complementarity: bool,
    pub rlt: bool,
    pub soc_rlt: bool,
    pub size_cap: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            complementarity: true,
            rlt: true,
            soc_rlt: true,
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    BaseEquality,
    DiagEze,
    Rlt,
    SocRlt,
    Complementarity,
    ConeMembership,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::BaseEquality,
        Family::DiagEze,
        Family::Rlt,
        Family::SocRlt,
        Family::Complementarity,
        Family::ConeMembership,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::BaseEquality => "base-equality",
            Family::DiagEze => "diag-EZE",
            Family::Rlt => "rlt",
            Family::SocRlt => "soc_rlt",
            Family::Complementarity => "complementarity",
            Family::ConeMembership => "cone-membership",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Ge,
}

/// One constraint on `M`, indices over `(1, z)`.
#[derive(Clone, Debug, PartialEq)]
pub enum MomentConstraint {
    /// `p' M q (= | >=) rhs`
    Bilinear {
        family: Family,
        label: String,
        p: SparseVec,
        q: SparseVec,
        relation: Relation,
        rhs: f64,
    },
    /// `|| (n_k' M q)_k || <= a' M q`
    Soc {
        family: Family,
        label: String,
        norm: Vec<SparseVec>,
        bound: SparseVec,
        q: SparseVec,
    },
}

fn bilinear(p: &SparseVec, mat: &DMatrix<f64>, q: &SparseVec) -> f64 {
    let mut total = 0.0;
    for &(i, a) in p.entries() {
        for &(j, b) in q.entries() {
            total += a * b * mat[(i, j)];
        }
    }
    total
}

impl MomentConstraint {
    pub fn family(&self) -> Family {
        match self {
            MomentConstraint::Bilinear { family, .. } | MomentConstraint::Soc { family, .. } => *family,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            MomentConstraint::Bilinear { label, .. } | MomentConstraint::Soc { label, .. } => label,
        }
    }

    /// Violation at `M` (0 when satisfied).
    pub fn violation(&self, mat: &DMatrix<f64>) -> f64 {
        match self {
            MomentConstraint::Bilinear { p, q, relation, rhs, .. } => {
                let v = bilinear(p, mat, q) - rhs;
                match relation {
                    Relation::Eq => v.abs(),
                    Relation::Ge => (-v).max(0.0),
                }
            }
            MomentConstraint::Soc { norm, bound, q, .. } => {
                let n = norm.iter().map(|r| bilinear(r, mat, q).powi(2)).sum::<f64>().sqrt();
                (n - bilinear(bound, mat, q)).max(0.0)
            }
        }
    }

    /// `max(|rhs|, |p|_1 |q|_1 max_ij |M_ij|)` over the forms involved; the
    /// denominator of relative violations.
    pub fn scale(&self, mat: &DMatrix<f64>) -> f64 {
        let big = mat.amax();
        let l1 = |v: &SparseVec| v.entries().iter().map(|(_, a)| a.abs()).sum::<f64>();
        match self {
            MomentConstraint::Bilinear { p, q, rhs, .. } => (l1(p) * l1(q) * big).max(rhs.abs()),
            MomentConstraint::Soc { norm, bound, q, .. } => {
                norm.iter().map(l1).fold(l1(bound), f64::max) * l1(q) * big
            }
        }
    }
}

/// Homogeneous description of `R+ x K` over `z`: linear rows `a'z >= 0`
/// and second-order rows `||C z|| <= a'z`.
#[derive(Clone, Debug, Default)]
pub struct HomogeneousRows {
    pub linear: Vec<(String, SparseVec)>,
    pub soc: Vec<(String, Vec<SparseVec>, SparseVec)>,
}

/// `{t >= 0} u {x_i >= 0} u {s_i >= 0} u` homogenized inequality rows, plus
/// homogenized second-order rows. Equality rows are left to `E`.
pub fn collect_homogeneous_rows(qp: &GeneralQp) -> HomogeneousRows {
    let l = qp.layout;
    let mut linear = vec![("t >= 0".to_string(), SparseVec::unit(l.t()))];
    for (j, i) in l.x().enumerate() {
        linear.push((format!("x[{j}] >= 0"), SparseVec::unit(i)));
    }
    for (j, i) in l.s().enumerate() {
        linear.push((format!("s[{j}] >= 0"), SparseVec::unit(i)));
    }
    // Homogenized rows live over (t, u) = z[0..u.end], the same indices as z.
    for r in &qp.cone.ge {
        linear.push((r.label.clone(), r.coefs.clone()));
    }
    let soc = qp
        .cone
        .soc
        .iter()
        .map(|r| (r.label.clone(), r.norm.clone(), r.bound.clone()))
        .collect();
    HomogeneousRows { linear, soc }
}

/// Linear rows with duplicates (equal up to positive scaling) removed,
/// ordered by canonical key.
fn canonical_rows(rows: &[(String, SparseVec)]) -> Vec<(String, SparseVec)> {
    let mut seen = HashSet::new();
    let mut out: Vec<(Vec<(usize, u64)>, String, SparseVec)> = Vec::new();
    for (label, row) in rows {
        if row.is_empty() {
            continue;
        }
        let key = row.canonical_key();
        if seen.insert(key.clone()) {
            out.push((key, label.clone(), row.clone()));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().map(|(_, l, r)| (l, r)).collect()
}

fn lift(v: &SparseVec) -> SparseVec {
    v.shifted(1)
}

/// `a_i' Z a_j >= 0` for every unordered pair of rows, self-pairs included.
pub fn gen_rlt(rows: &[(String, SparseVec)]) -> Vec<MomentConstraint> {
    let rows = canonical_rows(rows);
    (0..rows.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i..rows.len()).map(move |j| MomentConstraint::Bilinear {
                family: Family::Rlt,
                label: format!("({}) * ({})", rows[i].0, rows[j].0),
                p: lift(&rows[i].1),
                q: lift(&rows[j].1),
                relation: Relation::Ge,
                rhs: 0.0,
            })
        })
        .collect()
}

/// `||C Z a_1|| <= a_2' Z a_1` for every linear row `a_1'z >= 0` and second-order
/// row `||C z|| <= a_2'z`.
pub fn gen_soc_rlt(linear: &[(String, SparseVec)], soc: &[(String, Vec<SparseVec>, SparseVec)]) -> Vec<MomentConstraint> {
    let linear = canonical_rows(linear);
    let mut out = Vec::with_capacity(linear.len() * soc.len());
    for (sl, norm, bound) in soc {
        for (ll, a1) in &linear {
            out.push(MomentConstraint::Soc {
                family: Family::SocRlt,
                label: format!("({sl}) * ({ll})"),
                norm: norm.iter().map(lift).collect(),
                bound: lift(bound),
                q: lift(a1),
            });
        }
    }
    out
}

/// Registry of all constraints on `M` plus the face basis `V`.
#[derive(Clone, Debug)]
pub struct MomentModel {
    /// Side of `M` (`N + 1`).
    pub side: usize,
    pub constraints: Vec<MomentConstraint>,
    /// Families passed to the solver (others are implied or disabled).
    pub emitted: Vec<Family>,
    /// Diagonal scaling `D` with `M = D M' D`.
    pub scaling: DVector<f64>,
    /// Basis of the face `{M' : K D M' = 0}`, `side x r`.
    pub basis: DMatrix<f64>,
    /// `[[0, w'], [w, W]]`, so the objective is `objective . M`.
    pub objective: DMatrix<f64>,
}

impl MomentModel {
    pub fn count(&self, family: Family) -> usize {
        self.constraints.iter().filter(|c| c.family() == family).count()
    }

    /// Largest relative violation per family at `M`.
    pub fn check(&self, mat: &DMatrix<f64>) -> ModelCheck {
        let mut worst = Vec::new();
        for family in Family::ALL {
            let v = self
                .constraints
                .iter()
                .filter(|c| c.family() == family)
                .map(|c| c.violation(mat) / c.scale(mat).max(1.0))
                .fold(0.0, f64::max);
            worst.push((family, v));
        }
        let scale = mat.amax().max(1.0);
        ModelCheck {
            worst,
            min_eigenvalue: min_eigenvalue(mat) / scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheck {
    pub worst: Vec<(Family, f64)>,
    /// Smallest eigenvalue of `M` divided by `max(1, max |M_ij|)`.
    pub min_eigenvalue: f64,
}

impl ModelCheck {
    pub fn family(&self, family: Family) -> f64 {
        self.worst.iter().find(|(f, _)| *f == family).map_or(0.0, |(_, v)| *v)
    }

    pub fn passes(&self, families: &[Family], feas_tol: f64, psd_tol: f64) -> bool {
        self.min_eigenvalue >= -psd_tol && families.iter().all(|&f| self.family(f) <= feas_tol)
    }
}

/// A built relaxation: registry plus the conic program over `R`.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub sense: Sense,
    pub options: RelaxOptions,
    pub model: MomentModel,
    pub program: ConicProgram,
    /// Side of the reduced PSD block `R`.
    pub reduced_side: usize,
}

fn border(qp: &GeneralQp) -> DMatrix<f64> {
    let n = qp.len();
    let mut obj = DMatrix::zeros(n + 1, n + 1);
    obj.view_mut((1, 1), (n, n)).copy_from(&qp.w_quad);
    for i in 0..n {
        obj[(0, i + 1)] = qp.w_lin[i];
        obj[(i + 1, 0)] = qp.w_lin[i];
    }
    obj
}

/// Pivot classes over the indices of `M`: `y` is eliminated first, then
/// `theta` and `w`, then `t`; the constant, `x` and `s` stay free where possible.
fn face_priority(qp: &GeneralQp) -> Vec<u8> {
    let l = qp.layout;
    let mut prio = vec![3u8; qp.len() + 1];
    prio[l.t() + 1] = 2;
    for i in l.u() {
        prio[i + 1] = 1;
    }
    for i in l.y() {
        prio[i + 1] = 0;
    }
    prio
}

/// Coefficients of `p' V R V' q` over `svec(R)`.
fn reduced_coefs(basis: &DMatrix<f64>, p: &SparseVec, q: &SparseVec) -> Vec<f64> {
    let pp = p.project(basis);
    let qq = q.project(basis);
    outer_coefs(&pp, &qq)
}

fn outer_coefs(pp: &DVector<f64>, qq: &DVector<f64>) -> Vec<f64> {
    let r = pp.len();
    let mut out = Vec::with_capacity(svec_len(r));
    for col in 0..r {
        for row in 0..=col {
            if row == col {
                out.push(pp[row] * qq[row]);
            } else {
                out.push((pp[row] * qq[col] + pp[col] * qq[row]) / SQRT_2);
            }
        }
    }
    out
}

fn sparsify(coefs: &[f64], offset: usize) -> (Vec<(usize, f64)>, f64) {
    let big = coefs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = big * 1e-13;
    let entries = coefs
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > cut)
        .map(|(i, &v)| (offset + i, v))
        .collect();
    (entries, big)
}

/// Builds the relaxation of `qp` with the selected constraint families.
pub fn build_relaxation(qp: &GeneralQp, options: RelaxOptions) -> Result<Relaxation> {
    build_relaxation_scaled(qp, options, &DVector::repeat(qp.len() + 1, 1.0))
}

/// As [`build_relaxation`], posed over `M' = D^-1 M D^-1` for a positive
/// diagonal `D` with `D[0] = 1`.
pub fn build_relaxation_scaled(qp: &GeneralQp, options: RelaxOptions, scaling: &DVector<f64>) -> Result<Relaxation> {
    let n = qp.len();
    if n > options.size_cap {
        return Err(Error::TooLarge {
            size: n,
            cap: options.size_cap,
        });
    }
    let side = n + 1;
    assert_eq!(scaling.len(), side);
    assert!(scaling[0] == 1.0 && scaling.iter().all(|&d| d > 0.0));
    let mut constraints = Vec::new();
    let e0 = SparseVec::unit(0);

    constraints.push(MomentConstraint::Bilinear {
        family: Family::BaseEquality,
        label: "M00 = 1".into(),
        p: e0.clone(),
        q: e0.clone(),
        relation: Relation::Eq,
        rhs: 1.0,
    });
    for ((row, label), &f) in qp.e.iter().zip(&qp.e_labels).zip(qp.f.iter()) {
        constraints.push(MomentConstraint::Bilinear {
            family: Family::BaseEquality,
            label: label.clone(),
            p: lift(row),
            q: e0.clone(),
            relation: Relation::Eq,
            rhs: f,
        });
        constraints.push(MomentConstraint::Bilinear {
            family: Family::DiagEze,
            label: format!("diag {label}"),
            p: lift(row),
            q: lift(row),
            relation: Relation::Eq,
            rhs: f * f,
        });
    }
    if options.complementarity {
        for (k, &(x, s)) in qp.h_pairs.iter().enumerate() {
            constraints.push(MomentConstraint::Bilinear {
                family: Family::Complementarity,
                label: format!("H[{k}]"),
                p: SparseVec::unit(x + 1),
                q: SparseVec::unit(s + 1),
                relation: Relation::Eq,
                rhs: 0.0,
            });
        }
    }
    let rows = collect_homogeneous_rows(qp);
    for (label, a) in &rows.linear {
        constraints.push(MomentConstraint::Bilinear {
            family: Family::ConeMembership,
            label: label.clone(),
            p: lift(a),
            q: e0.clone(),
            relation: Relation::Ge,
            rhs: 0.0,
        });
    }
    for (label, norm, bound) in &rows.soc {
        constraints.push(MomentConstraint::Soc {
            family: Family::ConeMembership,
            label: label.clone(),
            norm: norm.iter().map(lift).collect(),
            bound: lift(bound),
            q: e0.clone(),
        });
    }
    if options.rlt {
        constraints.extend(gen_rlt(&rows.linear));
    }
    if options.soc_rlt {
        constraints.extend(gen_soc_rlt(&rows.linear, &rows.soc));
    }

    // Face of {M : K M = 0}.
    let mut k = DMatrix::zeros(qp.e.len(), side);
    for (r, (row, &f)) in qp.e.iter().zip(qp.f.iter()).enumerate() {
        k[(r, 0)] = -f;
        for &(c, v) in row.entries() {
            k[(r, c + 1)] = v * scaling[c + 1];
        }
    }
    let basis = echelon_null_space(&k, &face_priority(qp), 1e-9);
    let r = basis.ncols();
    if r == 0 {
        return Err(Error::Numerical("equality rows leave no room for the moment matrix".into()));
    }

    let objective = border(qp);
    let dmat = DMatrix::from_diagonal(scaling);
    let mut program = ConicProgram::new();
    let rblock = program.add_psd_block("R", r);
    let reduced_obj = basis.transpose() * &dmat * &objective * &dmat * &basis;
    for (i, v) in crate::linalg::svec(&reduced_obj).into_iter().enumerate() {
        program.set_objective(rblock.start + i, v);
    }

    let emitted = vec![
        Family::BaseEquality,
        Family::Complementarity,
        Family::ConeMembership,
        Family::Rlt,
        Family::SocRlt,
    ];
    let coef_rows: Vec<Option<Emission>> = constraints
        .par_iter()
        .map(|c| emission(c, &basis, scaling, rblock.start))
        .collect();

    // Equality rows: drop those dependent on earlier ones (after checking
    // they are consistent).
    let mut ortho: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut ge_rows = Vec::new();
    let mut soc_rows = Vec::new();
    for (c, em) in constraints.iter().zip(coef_rows) {
        let Some(em) = em else { continue };
        match (c, em) {
            (MomentConstraint::Bilinear { family, .. }, _) if *family == Family::DiagEze => {}
            (MomentConstraint::Bilinear { family, label, rhs, .. }, Emission::Linear(entries))
                if c_relation(c) == Relation::Eq =>
            {
                if *family == Family::BaseEquality && label != "M00 = 1" {
                    continue;
                }
                let mut dense = DVector::zeros(svec_len(r));
                for &(i, v) in &entries {
                    dense[i - rblock.start] = v;
                }
                let norm0 = dense.norm();
                let mut b = *rhs;
                if norm0 == 0.0 {
                    if b.abs() > 1e-12 {
                        return Err(Error::Numerical(format!("constraint `{label}` is infeasible on the face")));
                    }
                    continue;
                }
                for (q, beta) in &ortho {
                    let proj = q.dot(&dense);
                    dense.axpy(-proj, q, 1.0);
                    b -= proj * beta;
                }
                let rest = dense.norm();
                if rest <= 1e-9 * norm0 {
                    if b.abs() > 1e-7 * rhs.abs().max(1.0) {
                        return Err(Error::Numerical(format!("constraint `{label}` contradicts earlier equalities")));
                    }
                    continue;
                }
                ortho.push((dense / rest, b / rest));
                program.add_row(label.clone(), entries, *rhs);
            }
            (MomentConstraint::Bilinear { label, .. }, Emission::Linear(entries)) => ge_rows.push((label.clone(), entries)),
            (MomentConstraint::Soc { label, .. }, Emission::Cone(blocks)) => soc_rows.push((label.clone(), blocks)),
            _ => unreachable!("emission kind matches constraint kind"),
        }
    }
    let slack = program.add_block("rlt-slack", Cone::Nonnegative, ge_rows.len());
    for (k, (label, entries)) in ge_rows.into_iter().enumerate() {
        let row = entries.into_iter().chain([(slack.start + k, -1.0)]);
        program.add_row(label, row, 0.0);
    }
    for (label, blocks) in soc_rows {
        let u = program.add_block(label.clone(), Cone::SecondOrder, blocks.len());
        for (k, entries) in blocks.into_iter().enumerate() {
            let row = entries.into_iter().chain([(u.start + k, -1.0)]);
            program.add_row(format!("{label}[{k}]"), row, 0.0);
        }
    }

    Ok(Relaxation {
        sense: qp.sense,
        options,
        model: MomentModel {
            side,
            constraints,
            emitted,
            scaling: scaling.clone(),
            basis,
            objective,
        },
        program,
        reduced_side: r,
    })
}

fn c_relation(c: &MomentConstraint) -> Relation {
    match c {
        MomentConstraint::Bilinear { relation, .. } => *relation,
        MomentConstraint::Soc { .. } => Relation::Ge,
    }
}

enum Emission {
    Linear(Vec<(usize, f64)>),
    Cone(Vec<Vec<(usize, f64)>>),
}

/// Reduced, scaled coefficient rows; `None` when the constraint vanishes on the face.
fn emission(c: &MomentConstraint, basis: &DMatrix<f64>, scaling: &DVector<f64>, offset: usize) -> Option<Emission> {
    let basis = &DMatrix::from_diagonal(scaling) * basis;
    let basis = &basis;
    match c {
        MomentConstraint::Bilinear { p, q, relation, .. } => {
            let (entries, big) = sparsify(&reduced_coefs(basis, p, q), offset);
            match relation {
                Relation::Eq => Some(Emission::Linear(entries)),
                Relation::Ge => {
                    if big <= 1e-12 {
                        return None;
                    }
                    Some(Emission::Linear(entries.into_iter().map(|(i, v)| (i, v / big)).collect()))
                }
            }
        }
        MomentConstraint::Soc { norm, bound, q, .. } => {
            let qq = q.project(basis);
            let mut parts: Vec<Vec<f64>> = Vec::with_capacity(norm.len() + 1);
            parts.push(outer_coefs(&bound.project(basis), &qq));
            for row in norm {
                parts.push(outer_coefs(&row.project(basis), &qq));
            }
            let big = parts.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            if big <= 1e-12 {
                return None;
            }
            Some(Emission::Cone(
                parts
                    .iter()
                    .map(|p| {
                        let (entries, _) = sparsify(p, offset);
                        entries.into_iter().map(|(i, v)| (i, v / big)).collect()
                    })
                    .collect(),
            ))
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelaxationSolution {
    pub sense: Sense,
    pub status: ConicStatus,
    /// Relaxation value in the reported sense (`q-_SDP` or `q+_SDP`).
    pub bound: f64,
    /// Recovered moment matrix `V R V'`.
    pub moment: DMatrix<f64>,
    pub check: ModelCheck,
    pub conic: ConicSolution,
}

impl Relaxation {
    /// Program point representing a moment matrix `M` that lies on the face:
    /// `R` is read off the free coordinates of the echelon basis, and every
    /// cone variable from the single row that defines it.
    pub fn lift(&self, moment: &DMatrix<f64>) -> Vec<f64> {
        let basis = &self.model.basis;
        let d = &self.model.scaling;
        let r = self.reduced_side;
        let free: Vec<usize> = (0..r)
            .map(|k| {
                (0..basis.nrows())
                    .find(|&i| basis[(i, k)] == 1.0 && (0..r).all(|j| j == k || basis[(i, j)] == 0.0))
                    .expect("echelon basis has a unit row per column")
            })
            .collect();
        let reduced = DMatrix::from_fn(r, r, |a, b| moment[(free[a], free[b])] / (d[free[a]] * d[free[b]]));
        let mut x = vec![f64::NAN; self.program.num_vars()];
        x[..svec_len(r)].copy_from_slice(&crate::linalg::svec(&reduced));
        for row in 0..self.program.num_rows() {
            let mut unknown = None;
            let mut known = 0.0;
            for (c, v) in self.program.row(row) {
                if x[c].is_nan() {
                    unknown = Some((c, v));
                } else {
                    known += v * x[c];
                }
            }
            if let Some((c, v)) = unknown {
                x[c] = (self.program.rhs()[row] - known) / v;
            }
        }
        x
    }

    pub fn solve(&self, ctx: &SolveContext) -> RelaxationSolution {
        let conic = ctx.solve(&self.program);
        let r = self.reduced_side;
        let packed = &conic.primal[..svec_len(r)];
        let reduced = smat(packed);
        let face = DMatrix::from_diagonal(&self.model.scaling) * &self.model.basis;
        let moment = &face * reduced * face.transpose();
        let check = self.model.check(&moment);
        RelaxationSolution {
            sense: self.sense,
            status: conic.status,
            bound: self.sense.sign() * conic.objective,
            moment,
            check,
            conic,
        }
    }
}

/// Builds and solves the relaxation. When the first solve is not clean,
/// the problem is rescaled by the square roots of the recovered diagonal of
/// `M` and solved again; the better of the two answers is kept.
pub fn solve_relaxation(ctx: &SolveContext, qp: &GeneralQp, options: RelaxOptions) -> Result<(Relaxation, RelaxationSolution)> {
    let relax = build_relaxation(qp, options)?;
    let first = relax.solve(ctx);
    if matches!(first.status, ConicStatus::Optimal | ConicStatus::Infeasible | ConicStatus::Unbounded) || first.moment.iter().any(|v| !v.is_finite()) {
        return Ok((relax, first));
    }
    let mut scaling = DVector::from_fn(qp.len() + 1, |i, _| first.moment[(i, i)].max(0.0).sqrt().max(1.0));
    scaling[0] = 1.0;
    let again = build_relaxation_scaled(qp, options, &scaling)?;
    let second = again.solve(ctx);
    log::debug!("relaxation rescaled: {:?} -> {:?}", first.status, second.status);
    if rank_status(second.status) >= rank_status(first.status) {
        Ok((again, second))
    } else {
        Ok((relax, first))
    }
}

fn rank_status(s: ConicStatus) -> u8 {
    match s {
        ConicStatus::Optimal => 2,
        _ if s.has_solution() => 1,
        _ => 0,
    }
}

/// Relaxation value in the reported sense.
pub fn extract_bound(solution: &RelaxationSolution) -> f64 {
    solution.bound
}

/// The `z` part of the recovered moment matrix.
pub fn extract_z(solution: &RelaxationSolution) -> Vec<f64> {
    let m = &solution.moment;
    (1..m.nrows()).map(|i| m[(i, 0)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bqp::build;
    use crate::lp::LinearProgram;
    use crate::uncertainty::{NormKind, Side, UncertaintySet};

    fn wendell_lp() -> LinearProgram {
        let a = DMatrix::from_row_slice(2, 6, &[4.0, 9.0, 7.0, 10.0, 1.0, 0.0, 1.0, 1.0, 3.0, 40.0, 0.0, 1.0]);
        LinearProgram::new(
            a,
            DVector::from_vec(vec![6000.0, 4000.0]),
            DVector::from_vec(vec![-12.0, -18.0, -18.0, -40.0, 0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn wendell_row_counts() {
        let set = UncertaintySet::box_set(2, 6, &[], &[(0, -4.0, 2.0)]).unwrap();
        let qp = build(&wendell_lp(), &set, Sense::BestCase).unwrap();
        let rows = collect_homogeneous_rows(&qp);
        assert_eq!(rows.linear.len(), 15);
        assert!(rows.soc.is_empty());
        assert_eq!(gen_rlt(&rows.linear).len(), 120);
        assert!(gen_soc_rlt(&rows.linear, &rows.soc).is_empty());
    }

    #[test]
    fn rlt_of_box_rows_bounds_square() {
        let t = ("t".to_string(), SparseVec::unit(0));
        let lo = ("t - th".to_string(), SparseVec::from_pairs([(0, 1.0), (1, -1.0)]));
        let hi = ("t + th".to_string(), SparseVec::from_pairs([(0, 1.0), (1, 1.0)]));
        let rlt = gen_rlt(&[t, lo, hi]);
        assert_eq!(rlt.len(), 6);
        // Z_tt = 1, Z_thth = 1.2 violates (t - th)(t + th) >= 0.
        let mut m = DMatrix::zeros(3, 3);
        m[(1, 1)] = 1.0;
        m[(2, 2)] = 1.2;
        let violated: Vec<&str> = rlt.iter().filter(|c| c.violation(&m) > 1e-12).map(|c| c.label()).collect();
        assert_eq!(violated.len(), 1);
        assert!(violated[0].contains("t - th") && violated[0].contains("t + th"));
    }

    #[test]
    fn soc_rlt_count_is_product() {
        let set = UncertaintySet::norm_ball(2, 6, NormKind::Two, 1.0, Side::B, None).unwrap();
        let qp = build(&wendell_lp(), &set, Sense::WorstCase).unwrap();
        let rows = collect_homogeneous_rows(&qp);
        assert_eq!(rows.soc.len(), 1);
        assert_eq!(gen_soc_rlt(&rows.linear, &rows.soc).len(), rows.linear.len());
    }

    #[test]
    fn size_cap_is_enforced() {
        let set = UncertaintySet::box_set(2, 6, &[], &[(0, -4.0, 2.0)]).unwrap();
        let qp = build(&wendell_lp(), &set, Sense::BestCase).unwrap();
        let opts = RelaxOptions {
            size_cap: 10,
            ..RelaxOptions::default()
        };
        assert!(matches!(build_relaxation(&qp, opts), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn wendell_best_case_relaxation_value() {
        let ctx = SolveContext::default();
        let mut set = UncertaintySet::box_set(2, 6, &[], &[(0, -4.0, 2.0)]).unwrap();
        set.check(&ctx).unwrap();
        let qp = build(&wendell_lp(), &set, Sense::BestCase).unwrap();
        let (_, sol) = solve_relaxation(&ctx, &qp, RelaxOptions::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.bound + 24000.0).abs() < 1.0, "{}", sol.bound);
        assert!(sol.check.passes(&Family::ALL, 1e-6, 1e-7), "{:?}", sol.check);
    }

    #[test]
    fn example_relaxation_is_tight() {
        let ctx = SolveContext::default();
        let lp = LinearProgram::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let mut set = UncertaintySet::box_set(1, 2, &[(0, -1.0, 1.0)], &[(0, -0.5, 0.5), (1, 0.0, 0.0)]).unwrap();
        set.check(&ctx).unwrap();
        for (sense, expect) in [(Sense::BestCase, 0.5), (Sense::WorstCase, 3.0)] {
            let qp = build(&lp, &set, sense).unwrap();
            let sol = build_relaxation(&qp, RelaxOptions::default()).unwrap().solve(&ctx);
            assert!((sol.bound - expect).abs() < 1e-6, "{sense:?}: {}", sol.bound);
            let z = extract_z(&sol);
            let r = qp.residuals(&z);
            assert!(r.equality < 1e-7, "{r:?}");
        }
    }
}
