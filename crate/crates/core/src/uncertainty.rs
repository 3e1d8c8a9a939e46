//! Uncertainty sets over perturbation parameters, their homogenization, the
//! restricted set of perturbations keeping both primal and dual feasible, and
//! extreme-point sampling.
//!
//! A set is described over `u = (theta_b, theta_c, w)`: parameters mapped
//! linearly into `(b, c) = (map_b theta_b, map_c theta_c)` and auxiliary
//! lifting variables `w`. Its rows are kept as a [`ConvexSystem`].

use crate::conic::ConicStatus;
use crate::linalg::{Affine, SparseVec};
use crate::lp::LinearProgram;
use crate::model::{ConvexSystem, SocRow};
use crate::{Error, Result, SolveContext};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::HashSet;
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    B,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    One,
    Two,
}

#[derive(Clone, Debug)]
pub struct UncertaintySet {
    map_b: DMatrix<f64>,
    map_c: DMatrix<f64>,
    aux: usize,
    system: ConvexSystem,
    labels: Vec<String>,
    ranges: Option<Vec<(f64, f64)>>,
}

impl UncertaintySet {
    /// Assembles a set from its parts. `system` lives over `(theta_b, theta_c, w)`.
    pub fn from_parts(
        map_b: DMatrix<f64>,
        map_c: DMatrix<f64>,
        aux: usize,
        system: ConvexSystem,
        labels: Vec<String>,
    ) -> Result<Self> {
        let k = map_b.ncols() + map_c.ncols() + aux;
        if system.dim != k || labels.len() != k {
            return Err(Error::Dimension(format!(
                "uncertainty rows over {} variables, labels {}, expected {k}",
                system.dim,
                labels.len()
            )));
        }
        if map_b.iter().chain(map_c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidUncertainty("non-finite map entry".into()));
        }
        Ok(Self {
            map_b,
            map_c,
            aux,
            system,
            labels,
            ranges: None,
        })
    }

    /// The set `{(0, 0)}`.
    pub fn singleton(m: usize, n: usize) -> Self {
        Self::from_parts(DMatrix::zeros(m, 0), DMatrix::zeros(n, 0), 0, ConvexSystem::new(0), Vec::new())
            .expect("empty parts are consistent")
    }

    /// Independent intervals on single coordinates of `b` and `c`.
    /// Zero-width intervals become parameters pinned by an equality row.
    pub fn box_set(m: usize, n: usize, b: &[(usize, f64, f64)], c: &[(usize, f64, f64)]) -> Result<Self> {
        let k = b.len() + c.len();
        let mut system = ConvexSystem::new(k);
        let mut labels = Vec::with_capacity(k);
        let mut map_b = DMatrix::zeros(m, b.len());
        let mut map_c = DMatrix::zeros(n, c.len());
        let entries = b.iter().map(|e| (Side::B, e)).chain(c.iter().map(|e| (Side::C, e)));
        for (p, (side, &(coord, lo, hi))) in entries.enumerate() {
            let (name, dim) = match side {
                Side::B => (format!("b[{coord}]"), m),
                Side::C => (format!("c[{coord}]"), n),
            };
            if coord >= dim {
                return Err(Error::Dimension(format!("{name} out of range")));
            }
            check_interval(&name, lo, hi)?;
            match side {
                Side::B => map_b[(coord, p)] = 1.0,
                Side::C => map_c[(coord, p - b.len())] = 1.0,
            }
            if lo == hi {
                system.add_eq(format!("{name} = {lo}"), SparseVec::unit(p), lo);
            } else {
                system.add_le(format!("{name} <= {hi}"), SparseVec::unit(p), hi);
                system.add_le(format!("{name} >= {lo}"), SparseVec::unit(p).scaled(-1.0), -lo);
            }
            labels.push(name);
        }
        Self::from_parts(map_b, map_c, 0, system, labels)
    }

    /// 100%-rule simplex: each listed coordinate moves one way from zero up
    /// to its nonzero endpoint, and the fractions of the allowed moves sum to
    /// at most one. Both interval ends are written even though the fraction
    /// row implies the far ones: they take part in RLT products.
    pub fn simplex_100pct(m: usize, n: usize, side: Side, coords: &[(usize, f64, f64)]) -> Result<Self> {
        let dim = side_dim(side, m, n);
        let k = coords.len();
        let mut system = ConvexSystem::new(k);
        let mut target = DMatrix::zeros(dim, k);
        let mut labels = Vec::with_capacity(k);
        let mut fractions = Vec::with_capacity(k);
        for (p, &(coord, lo, hi)) in coords.iter().enumerate() {
            let name = coord_name(side, coord);
            if coord >= dim {
                return Err(Error::Dimension(format!("{name} out of range")));
            }
            check_interval(&name, lo, hi)?;
            let reach = match (lo == 0.0, hi == 0.0) {
                (true, false) => hi,
                (false, true) => lo,
                _ => {
                    return Err(Error::InvalidUncertainty(format!(
                        "100% rule needs a one-sided nonzero interval on {name}, got [{lo}, {hi}]"
                    )))
                }
            };
            target[(coord, p)] = 1.0;
            system.add_le(format!("{name} <= {hi}"), SparseVec::unit(p), hi);
            system.add_le(format!("{name} >= {lo}"), SparseVec::unit(p).scaled(-1.0), -lo);
            fractions.push((p, 1.0 / reach));
            labels.push(name);
        }
        system.add_le("100% rule", SparseVec::from_pairs(fractions), 1.0);
        let (map_b, map_c) = split_map(side, target, m, n);
        Self::from_parts(map_b, map_c, 0, system, labels)
    }

    /// `||theta|| <= radius` on the listed coordinates of one side (all when
    /// `coords` is `None`). One-norm balls are lifted with `|theta_i| <= w_i`,
    /// `sum w <= radius`.
    pub fn norm_ball(m: usize, n: usize, kind: NormKind, radius: f64, side: Side, coords: Option<&[usize]>) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidUncertainty(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        let dim = side_dim(side, m, n);
        let coords: Vec<usize> = coords.map(<[usize]>::to_vec).unwrap_or_else(|| (0..dim).collect());
        if let Some(&bad) = coords.iter().find(|&&c| c >= dim) {
            return Err(Error::Dimension(format!("{} out of range", coord_name(side, bad))));
        }
        let k = coords.len();
        let mut target = DMatrix::zeros(dim, k);
        for (p, &coord) in coords.iter().enumerate() {
            target[(coord, p)] = 1.0;
        }
        let mut labels: Vec<String> = coords.iter().map(|&c| coord_name(side, c)).collect();
        let tag = if side == Side::B { "b" } else { "c" };
        let (aux, system) = match kind {
            NormKind::Two => {
                let mut system = ConvexSystem::new(k);
                system.add_soc(SocRow {
                    label: format!("||{tag}||_2 <= {radius}"),
                    norm_terms: (0..k).map(|p| Affine::new(SparseVec::unit(p), 0.0)).collect(),
                    bound: Affine::constant(radius),
                });
                (0, system)
            }
            NormKind::One => {
                let mut system = ConvexSystem::new(2 * k);
                for p in 0..k {
                    let w = k + p;
                    system.add_le(
                        format!("{} <= w", labels[p]),
                        SparseVec::from_pairs([(p, 1.0), (w, -1.0)]),
                        0.0,
                    );
                    system.add_le(
                        format!("-{} <= w", labels[p]),
                        SparseVec::from_pairs([(p, -1.0), (w, -1.0)]),
                        0.0,
                    );
                }
                system.add_le(
                    format!("||{tag}||_1 <= {radius}"),
                    SparseVec::from_pairs((k..2 * k).map(|w| (w, 1.0))),
                    radius,
                );
                labels.extend(coords.iter().map(|&c| format!("w|{}|", coord_name(side, c))));
                (k, system)
            }
        };
        let (map_b, map_c) = split_map(side, target, m, n);
        Self::from_parts(map_b, map_c, aux, system, labels)
    }

    /// Composes the parameter maps with `q_b` (`m x rows(map_b)`) and `q_c`,
    /// e.g. a ball `V` in a factor space mapped into `b` by `b = Q v`.
    pub fn affine_image(&self, q_b: Option<&DMatrix<f64>>, q_c: Option<&DMatrix<f64>>) -> Result<Self> {
        let compose = |q: Option<&DMatrix<f64>>, map: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            match q {
                None => Ok(map.clone()),
                Some(q) if q.ncols() == map.nrows() => Ok(q * map),
                Some(q) => Err(Error::Dimension(format!(
                    "affine map has {} columns, set lives in dimension {}",
                    q.ncols(),
                    map.nrows()
                ))),
            }
        };
        let mut out = self.clone();
        out.map_b = compose(q_b, &self.map_b)?;
        out.map_c = compose(q_c, &self.map_c)?;
        out.ranges = None;
        Ok(out)
    }

    /// Intersection with cylinder semantics: a coordinate of `(b, c)` left
    /// untouched by one set is constrained only by the other; coordinates
    /// touched by both are linked by equality rows.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if self.m() != other.m() || self.n() != other.n() {
            return Err(Error::Dimension("intersecting sets over different (b, c) spaces".into()));
        }
        let (kb1, kc1, a1) = (self.k_b(), self.k_c(), self.aux);
        let (kb2, kc2, a2) = (other.k_b(), other.k_c(), other.aux);
        let k_b = kb1 + kb2;
        let k_c = kc1 + kc2;
        let dim = k_b + k_c + a1 + a2;
        // Position of each coordinate of the two sets in the merged vector.
        let pos1: Vec<usize> = (0..kb1)
            .chain(k_b..k_b + kc1)
            .chain(k_b + k_c..k_b + k_c + a1)
            .collect();
        let pos2: Vec<usize> = (kb1..k_b)
            .chain(k_b + kc1..k_b + k_c)
            .chain(k_b + k_c + a1..dim)
            .collect();
        let mut system = ConvexSystem::new(dim);
        system.append(&remap(&self.system, &pos1, dim), 0);
        system.append(&remap(&other.system, &pos2, dim), 0);
        let mut labels = vec![String::new(); dim];
        for (p, l) in pos1.iter().zip(&self.labels) {
            labels[*p] = l.clone();
        }
        for (p, l) in pos2.iter().zip(&other.labels) {
            labels[*p] = l.clone();
        }

        let mut map_b = DMatrix::zeros(self.m(), k_b);
        let mut map_c = DMatrix::zeros(self.n(), k_c);
        let mut seen = HashSet::new();
        for (side, m1, m2, out, off1, off2) in [
            (Side::B, &self.map_b, &other.map_b, &mut map_b, 0, kb1),
            (Side::C, &self.map_c, &other.map_c, &mut map_c, k_b, k_b + kc1),
        ] {
            for i in 0..m1.nrows() {
                let claimed1 = m1.row(i).iter().any(|&v| v != 0.0);
                let claimed2 = m2.row(i).iter().any(|&v| v != 0.0);
                let row1 = m1.row(i);
                let row2 = m2.row(i);
                if claimed1 {
                    out.view_mut((i, 0), (1, row1.len())).copy_from(&row1);
                } else {
                    out.view_mut((i, row1.len()), (1, row2.len())).copy_from(&row2);
                }
                if claimed1 && claimed2 {
                    let link = SparseVec::from_pairs(
                        row1.iter()
                            .enumerate()
                            .map(|(j, &v)| (off1 + j, v))
                            .chain(row2.iter().enumerate().map(|(j, &v)| (off2 + j, -v))),
                    );
                    if link.is_empty() {
                        continue;
                    }
                    let key = link.canonical_key();
                    let neg = link.scaled(-1.0).canonical_key();
                    if seen.contains(&key) || seen.contains(&neg) {
                        continue;
                    }
                    seen.insert(key);
                    system.add_eq(format!("link {}", coord_name(side, i)), link, 0.0);
                }
            }
        }
        Self::from_parts(map_b, map_c, a1 + a2, system, labels)
    }

    pub fn m(&self) -> usize {
        self.map_b.nrows()
    }

    pub fn n(&self) -> usize {
        self.map_c.nrows()
    }

    pub fn k_b(&self) -> usize {
        self.map_b.ncols()
    }

    pub fn k_c(&self) -> usize {
        self.map_c.ncols()
    }

    /// Number of parameters `k_b + k_c`.
    pub fn k_theta(&self) -> usize {
        self.k_b() + self.k_c()
    }

    pub fn aux(&self) -> usize {
        self.aux
    }

    /// Dimension of `u = (theta, w)`.
    pub fn dim(&self) -> usize {
        self.system.dim
    }

    pub fn map_b(&self) -> &DMatrix<f64> {
        &self.map_b
    }

    pub fn map_c(&self) -> &DMatrix<f64> {
        &self.map_c
    }

    pub fn system(&self) -> &ConvexSystem {
        &self.system
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_polytope(&self) -> bool {
        self.system.soc.is_empty()
    }

    /// `(b, c)` for a parameter vector `theta = (theta_b, theta_c)`.
    pub fn perturbation(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let kb = self.k_b();
        let b = &self.map_b * DVector::from_column_slice(&theta[..kb]);
        let c = &self.map_c * DVector::from_column_slice(&theta[kb..kb + self.k_c()]);
        (b, c)
    }

    /// Verifies that the set contains the origin and is bounded, caching
    /// per-coordinate ranges.
    pub fn check(&mut self, ctx: &SolveContext) -> Result<()> {
        let k = self.k_theta();
        let fixed: Vec<(usize, f64)> = (0..k).map(|i| (i, 0.0)).collect();
        let (status, tau, point) = self.system.min_violation(ctx, &fixed);
        if !status.has_solution() {
            return Err(Error::Numerical(format!("origin check returned {status:?}")));
        }
        if tau > ctx.tol.feas {
            let mut at = point;
            for &(i, v) in &fixed {
                at[i] = v;
            }
            let (violation, row) = self.system.violation(&at);
            return Err(Error::OriginExcluded { row, violation });
        }
        let mut ranges = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let mut obj = vec![0.0; self.dim()];
            obj[i] = 1.0;
            let lo = self.system.minimize(ctx, &obj);
            obj[i] = -1.0;
            let hi = self.system.minimize(ctx, &obj);
            for out in [&lo, &hi] {
                match out.status {
                    ConicStatus::Unbounded => return Err(Error::UnboundedSet(self.labels[i].clone())),
                    s if !s.has_solution() => {
                        return Err(Error::Numerical(format!(
                            "range solve for `{}` returned {s:?}",
                            self.labels[i]
                        )))
                    }
                    _ => {}
                }
            }
            ranges.push((lo.value, -hi.value));
        }
        self.ranges = Some(ranges);
        Ok(())
    }

    pub fn is_checked(&self) -> bool {
        self.ranges.is_some()
    }

    /// Cached `[min, max]` of each coordinate of `u` (after [`Self::check`]).
    pub fn ranges(&self) -> Option<&[(f64, f64)]> {
        self.ranges.as_deref()
    }

    /// True when `b = 0` for every member.
    pub fn b_is_zero(&self) -> bool {
        self.side_is_zero(&self.map_b, 0)
    }

    /// True when `c = 0` for every member.
    pub fn c_is_zero(&self) -> bool {
        self.side_is_zero(&self.map_c, self.k_b())
    }

    fn side_is_zero(&self, map: &DMatrix<f64>, offset: usize) -> bool {
        (0..map.ncols()).all(|j| {
            let column_zero = map.column(j).iter().all(|&v| v == 0.0);
            let pinned = self
                .ranges
                .as_ref()
                .is_some_and(|r| r[offset + j].0.abs() <= 1e-9 && r[offset + j].1.abs() <= 1e-9);
            column_zero || pinned
        })
    }

    /// Whether some `w` makes `(theta, w)` satisfy every row within `tol`.
    pub fn membership(&self, ctx: &SolveContext, theta: &[f64], tol: f64) -> bool {
        assert_eq!(theta.len(), self.k_theta());
        if self.aux == 0 {
            return self.system.violation(theta).0 <= tol;
        }
        let fixed: Vec<(usize, f64)> = theta.iter().copied().enumerate().collect();
        let (status, tau, _) = self.system.min_violation(ctx, &fixed);
        if !status.has_solution() {
            log::warn!("membership solve returned {status:?}");
            return false;
        }
        tau <= tol
    }

    /// Homogenized rows over `(t, u)`, `t` at index 0.
    pub fn homogenize(&self) -> HomogenizedCone {
        let hom = |coefs: &SparseVec, constant: f64| {
            SparseVec::from_pairs(coefs.shifted(1).entries().iter().copied().chain([(0, constant)]))
        };
        let eq = self
            .system
            .eq
            .iter()
            .map(|r| HomRow {
                label: r.label.clone(),
                // a.u - r t = 0
                coefs: hom(&r.coefs, -r.rhs),
            })
            .collect();
        let ge = self
            .system
            .le
            .iter()
            .map(|r| HomRow {
                label: r.label.clone(),
                // r t - a.u >= 0
                coefs: hom(&r.coefs.scaled(-1.0), r.rhs),
            })
            .collect();
        let soc = self
            .system
            .soc
            .iter()
            .map(|r| HomSoc {
                label: r.label.clone(),
                norm: r.norm_terms.iter().map(|a| hom(&a.coefs, a.constant)).collect(),
                bound: hom(&r.bound.coefs, r.bound.constant),
            })
            .collect();
        HomogenizedCone {
            dim: 1 + self.dim(),
            eq,
            ge,
            soc,
        }
    }

    /// Joint primal-dual system describing the restricted set.
    pub fn build_restricted(&self, ctx: &SolveContext, lp: &LinearProgram) -> Result<ConstraintSystem> {
        let system = ConstraintSystem::new(self, lp)?;
        let (status, tau, _) = system.system.min_violation(ctx, &[]);
        if !status.has_solution() {
            return Err(Error::Numerical(format!("restricted-set feasibility returned {status:?}")));
        }
        if tau > ctx.tol.feas * system.scale() {
            let primal = system.part_feasible(ctx, true);
            let dual = system.part_feasible(ctx, false);
            let detail = match (primal, dual) {
                (false, _) => "no perturbation in the set keeps the primal feasible (the nominal primal is infeasible)",
                (_, false) => "no perturbation in the set keeps the dual feasible (the nominal dual is infeasible)",
                _ => "no single perturbation keeps both the primal and the dual feasible",
            };
            return Err(Error::EmptyRestricted(detail.into()));
        }
        Ok(system)
    }
}

fn check_interval(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidUncertainty(format!("interval [{lo}, {hi}] on {name} is not ordered and finite")));
    }
    if lo > 0.0 {
        return Err(Error::OriginExcluded {
            row: format!("{name} >= {lo}"),
            violation: lo,
        });
    }
    if hi < 0.0 {
        return Err(Error::OriginExcluded {
            row: format!("{name} <= {hi}"),
            violation: -hi,
        });
    }
    Ok(())
}

fn side_dim(side: Side, m: usize, n: usize) -> usize {
    match side {
        Side::B => m,
        Side::C => n,
    }
}

fn coord_name(side: Side, coord: usize) -> String {
    match side {
        Side::B => format!("b[{coord}]"),
        Side::C => format!("c[{coord}]"),
    }
}

fn split_map(side: Side, target: DMatrix<f64>, m: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    match side {
        Side::B => (target, DMatrix::zeros(n, 0)),
        Side::C => (DMatrix::zeros(m, 0), target),
    }
}

/// Renames variable `i` of `system` to `pos[i]` in a system of size `dim`.
fn remap(system: &ConvexSystem, pos: &[usize], dim: usize) -> ConvexSystem {
    let map = |v: &SparseVec| SparseVec::from_pairs(v.entries().iter().map(|&(i, a)| (pos[i], a)));
    let mut out = ConvexSystem::new(dim);
    for r in &system.eq {
        out.add_eq(r.label.clone(), map(&r.coefs), r.rhs);
    }
    for r in &system.le {
        out.add_le(r.label.clone(), map(&r.coefs), r.rhs);
    }
    for r in &system.soc {
        out.add_soc(SocRow {
            label: r.label.clone(),
            norm_terms: r.norm_terms.iter().map(|a| Affine::new(map(&a.coefs), a.constant)).collect(),
            bound: Affine::new(map(&r.bound.coefs), r.bound.constant),
        });
    }
    out
}

/// Homogeneous linear form `coefs . (t, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomRow {
    pub label: String,
    pub coefs: SparseVec,
}

/// `|| (norm_k . v)_k || <= bound . v` over `v = (t, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomSoc {
    pub label: String,
    pub norm: Vec<SparseVec>,
    pub bound: SparseVec,
}

/// `homg(U)`: `{(t, u): t >= 0, eq . v = 0, ge . v >= 0, soc rows}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedCone {
    pub dim: usize,
    pub eq: Vec<HomRow>,
    pub ge: Vec<HomRow>,
    pub soc: Vec<HomSoc>,
}

impl HomogenizedCone {
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v[0] >= -tol
            && self.eq.iter().all(|r| r.coefs.dot(v).abs() <= tol)
            && self.ge.iter().all(|r| r.coefs.dot(v) >= -tol)
            && self.soc.iter().all(|r| {
                let norm = r.norm.iter().map(|a| a.dot(v).powi(2)).sum::<f64>().sqrt();
                r.bound.dot(v) - norm >= -tol
            })
    }
}

/// Coordinates of `z = (t, theta_b, theta_c, w, x, y, s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub k_b: usize,
    pub k_c: usize,
    pub aux: usize,
    pub n: usize,
    pub m: usize,
}

impl Layout {
    pub fn t(&self) -> usize {
        0
    }

    pub fn theta_b(&self) -> Range<usize> {
        1..1 + self.k_b
    }

    pub fn theta_c(&self) -> Range<usize> {
        let s = 1 + self.k_b;
        s..s + self.k_c
    }

    pub fn theta(&self) -> Range<usize> {
        1..1 + self.k_b + self.k_c
    }

    pub fn w(&self) -> Range<usize> {
        let s = 1 + self.k_b + self.k_c;
        s..s + self.aux
    }

    /// `u = (theta, w)`.
    pub fn u(&self) -> Range<usize> {
        1..1 + self.k_b + self.k_c + self.aux
    }

    pub fn x(&self) -> Range<usize> {
        let s = self.u().end;
        s..s + self.n
    }

    pub fn y(&self) -> Range<usize> {
        let s = self.x().end;
        s..s + self.m
    }

    pub fn s(&self) -> Range<usize> {
        let s = self.y().end;
        s..s + self.n
    }

    pub fn len(&self) -> usize {
        self.s().end
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The restricted set as a system over `z`, including `t = 1`.
///
/// Equality rows come in the order: `m` primal rows, `n` dual rows, the
/// equality rows of the uncertainty set, then `t = 1`. All rows except the
/// last are homogeneous in `z`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub layout: Layout,
    pub system: ConvexSystem,
    pub map_b: DMatrix<f64>,
    pub map_c: DMatrix<f64>,
    pub b_hat: DVector<f64>,
    pub c_hat: DVector<f64>,
}

impl ConstraintSystem {
    pub fn new(set: &UncertaintySet, lp: &LinearProgram) -> Result<Self> {
        let (m, n) = (lp.m(), lp.n());
        if set.m() != m || set.n() != n {
            return Err(Error::Dimension(format!(
                "uncertainty set maps into ({}, {}), LP has (m, n) = ({m}, {n})",
                set.m(),
                set.n()
            )));
        }
        let layout = Layout {
            k_b: set.k_b(),
            k_c: set.k_c(),
            aux: set.aux(),
            n,
            m,
        };
        let mut system = ConvexSystem::new(layout.len());
        let (xr, yr, sr, tb, tc) = (layout.x(), layout.y(), layout.s(), layout.theta_b(), layout.theta_c());
        let a = lp.a();
        // A x - map_b theta_b - b_hat t = 0
        for i in 0..m {
            let coefs = SparseVec::from_pairs(
                (0..n)
                    .map(|j| (xr.start + j, a[(i, j)]))
                    .chain((0..layout.k_b).map(|j| (tb.start + j, -set.map_b()[(i, j)])))
                    .chain([(0, -lp.b_hat()[i])]),
            );
            system.add_eq(format!("primal {}", lp.row_names[i]), coefs, 0.0);
        }
        // A^T y + s - map_c theta_c - c_hat t = 0
        for j in 0..n {
            let coefs = SparseVec::from_pairs(
                (0..m)
                    .map(|i| (yr.start + i, a[(i, j)]))
                    .chain([(sr.start + j, 1.0)])
                    .chain((0..layout.k_c).map(|k| (tc.start + k, -set.map_c()[(j, k)])))
                    .chain([(0, -lp.c_hat()[j])]),
            );
            system.add_eq(format!("dual {}", lp.col_names[j]), coefs, 0.0);
        }
        let hom = set.homogenize();
        for r in &hom.eq {
            system.add_eq(r.label.clone(), r.coefs.clone(), 0.0);
        }
        system.add_eq("t = 1", SparseVec::unit(0), 1.0);
        for r in &hom.ge {
            system.add_le(r.label.clone(), r.coefs.scaled(-1.0), 0.0);
        }
        for j in 0..n {
            system.add_le(format!("x[{j}] >= 0"), SparseVec::unit(xr.start + j).scaled(-1.0), 0.0);
        }
        for j in 0..n {
            system.add_le(format!("s[{j}] >= 0"), SparseVec::unit(sr.start + j).scaled(-1.0), 0.0);
        }
        for r in &hom.soc {
            system.add_soc(SocRow {
                label: r.label.clone(),
                norm_terms: r.norm.iter().map(|a| Affine::new(a.clone(), 0.0)).collect(),
                bound: Affine::new(r.bound.clone(), 0.0),
            });
        }
        Ok(Self {
            layout,
            system,
            map_b: set.map_b().clone(),
            map_c: set.map_c().clone(),
            b_hat: lp.b_hat().clone(),
            c_hat: lp.c_hat().clone(),
        })
    }

    /// Data scale used for relative feasibility checks.
    pub fn scale(&self) -> f64 {
        self.b_hat.amax().max(self.c_hat.amax()).max(1.0)
    }

    /// `(b, c)` at a point `z`.
    pub fn perturbation(&self, z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let l = self.layout;
        let b = &self.map_b * DVector::from_column_slice(&z[l.theta_b()]);
        let c = &self.map_c * DVector::from_column_slice(&z[l.theta_c()]);
        (b, c)
    }

    /// Largest row violation at `z`, relative to the data scale.
    pub fn violation(&self, z: &[f64]) -> (f64, String) {
        let (v, label) = self.system.violation(z);
        (v / self.scale(), label)
    }

    /// Feasibility of the primal-only (or dual-only) half of the system.
    fn part_feasible(&self, ctx: &SolveContext, primal: bool) -> bool {
        let mut part = self.system.clone();
        let keep = |label: &str| {
            if primal {
                !label.starts_with("dual ") && !label.starts_with("s[")
            } else {
                !label.starts_with("primal ") && !label.starts_with("x[")
            }
        };
        part.eq.retain(|r| keep(&r.label));
        part.le.retain(|r| keep(&r.label));
        let (status, tau, _) = part.min_violation(ctx, &[]);
        status.has_solution() && tau <= ctx.tol.feas * self.scale()
    }

    /// Minimizer of a random linear functional of `(b, c)` over the restricted
    /// set: an extreme point with probability one. Deterministic in
    /// `(seed, stream)`.
    pub fn sample_extreme(&self, ctx: &SolveContext, seed: u64, stream: u64) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (m, n) = (self.layout.m, self.layout.n);
        let mut last = String::new();
        for _attempt in 0..=3 {
            let mut dir: Vec<f64> = (0..m + n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                dir.iter_mut().for_each(|v| *v /= norm);
            }
            let f = DVector::from_column_slice(&dir[..m]);
            let g = DVector::from_column_slice(&dir[m..]);
            let mut objective = vec![0.0; self.layout.len()];
            let ob = self.map_b.transpose() * &f;
            let oc = self.map_c.transpose() * &g;
            for (k, idx) in self.layout.theta_b().enumerate() {
                objective[idx] = ob[k];
            }
            for (k, idx) in self.layout.theta_c().enumerate() {
                objective[idx] = oc[k];
            }
            let out = self.system.minimize(ctx, &objective);
            if out.status.has_solution() && self.violation(&out.point).0 <= ctx.tol.feas {
                let z = out.point;
                let theta = z[self.layout.theta()].to_vec();
                let (b, c) = self.perturbation(&z);
                return Ok(Sample { theta, b, c, z });
            }
            last = format!("{:?} ({})", out.status, out.solution.backend_status);
            log::debug!("sample solve failed with {last}, redrawing");
        }
        Err(Error::Numerical(format!("extreme-point sampling failed four times: {last}")))
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub theta: Vec<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    /// Full point of the restricted system (with some feasible `x, y, s`).
    pub z: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_box_set() -> UncertaintySet {
        UncertaintySet::box_set(1, 2, &[(0, -1.0, 1.0)], &[(0, -0.5, 0.5), (1, 0.0, 0.0)]).unwrap()
    }

    fn example_lp() -> LinearProgram {
        LinearProgram::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn example_box_shape_and_membership() {
        let ctx = SolveContext::default();
        let mut u = example_box_set();
        u.check(&ctx).unwrap();
        assert_eq!((u.k_b(), u.k_c()), (1, 2));
        assert!(u.membership(&ctx, &[1.0, 0.5, 0.0], 1e-9));
        assert!(!u.membership(&ctx, &[1.01, 0.0, 0.0], 1e-9));
        let r = u.ranges().unwrap();
        assert!((r[0].0 + 1.0).abs() < 1e-7 && (r[0].1 - 1.0).abs() < 1e-7);
        assert!(!u.b_is_zero() && !u.c_is_zero());
    }

    #[test]
    fn zero_radius_ball_is_singleton() {
        let ctx = SolveContext::default();
        let mut u = UncertaintySet::norm_ball(2, 1, NormKind::Two, 0.0, Side::B, None).unwrap();
        u.check(&ctx).unwrap();
        assert!(u.membership(&ctx, &[0.0, 0.0], 1e-9));
        assert!(!u.membership(&ctx, &[1e-3, 0.0], 1e-9));
        assert!(u.b_is_zero());
    }

    #[test]
    fn one_norm_ball_membership() {
        let ctx = SolveContext::default();
        let mut u = UncertaintySet::norm_ball(2, 1, NormKind::One, 2.0, Side::B, None).unwrap();
        u.check(&ctx).unwrap();
        assert_eq!(u.aux(), 2);
        assert!(!u.membership(&ctx, &[1.5, 0.6], 1e-7));
        assert!(u.membership(&ctx, &[1.5, -0.5], 1e-7));
    }

    #[test]
    fn origin_outside_is_rejected_with_row() {
        match UncertaintySet::box_set(1, 1, &[(0, 0.5, 1.0)], &[]) {
            Err(Error::OriginExcluded { row, .. }) => assert!(row.contains("b[0]")),
            other => panic!("unexpected {other:?}"),
        }
        // An intersection whose rows exclude zero only jointly.
        let mut sys = ConvexSystem::new(1);
        sys.add_le("theta >= 1", SparseVec::unit(0).scaled(-1.0), -1.0);
        sys.add_le("theta <= 2", SparseVec::unit(0), 2.0);
        let mut u = UncertaintySet::from_parts(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 0),
            0,
            sys,
            vec!["b[0]".into()],
        )
        .unwrap();
        match u.check(&SolveContext::default()) {
            Err(Error::OriginExcluded { row, .. }) => assert_eq!(row, "theta >= 1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbounded_rows_are_rejected() {
        let mut sys = ConvexSystem::new(1);
        sys.add_le("theta >= -1", SparseVec::unit(0).scaled(-1.0), 1.0);
        let mut u = UncertaintySet::from_parts(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 0),
            0,
            sys,
            vec!["b[0]".into()],
        )
        .unwrap();
        assert!(matches!(u.check(&SolveContext::default()), Err(Error::UnboundedSet(_))));
    }

    #[test]
    fn homogenized_box_rows() {
        let u = UncertaintySet::box_set(1, 0, &[(0, -1.0, 1.0)], &[]).unwrap();
        let h = u.homogenize();
        assert_eq!(h.ge.len(), 2);
        assert!(h.contains(&[1.0, 1.0], 1e-12));
        assert!(h.contains(&[1.0, -1.0], 1e-12));
        assert!(!h.contains(&[1.0, 1.1], 1e-12));
        assert!(h.contains(&[0.0, 0.0], 0.0));
        assert!(h.contains(&[3.0, -2.9], 1e-12));
    }

    #[test]
    fn simplex_has_interval_and_fraction_rows() {
        let u = UncertaintySet::simplex_100pct(2, 6, Side::C, &[(0, -4.0, 0.0), (1, -80.0 / 3.0, 0.0)]).unwrap();
        let h = u.homogenize();
        assert_eq!(h.ge.len(), 5);
        for v in [[0.0, 0.0], [-4.0, 0.0], [0.0, -80.0 / 3.0]] {
            assert!(h.contains(&[1.0, v[0], v[1]], 1e-9));
        }
        assert!(!h.contains(&[1.0, -4.0, -1.0], 1e-9));
    }

    #[test]
    fn intersection_links_shared_coordinates() {
        let ctx = SolveContext::default();
        let a = UncertaintySet::box_set(2, 0, &[(0, -1.0, 1.0)], &[]).unwrap();
        let b = UncertaintySet::norm_ball(2, 0, NormKind::Two, 0.5, Side::B, None).unwrap();
        let mut both = a.intersect(&b).unwrap();
        both.check(&ctx).unwrap();
        let r = both.ranges().unwrap();
        // b[0] limited by the ball, b[1] claimed only by the ball.
        assert!((r[0].1 - 0.5).abs() < 1e-6);
        let (bvec, _) = both.perturbation(&[0.3, 0.3, 0.2]);
        assert_eq!(bvec.as_slice(), &[0.3, 0.2]);
    }

    #[test]
    fn restricted_set_clips_primal_infeasible_perturbations() {
        let ctx = SolveContext::default();
        let mut u = UncertaintySet::box_set(1, 2, &[(0, -3.0, 1.0)], &[(0, -0.5, 0.5), (1, 0.0, 0.0)]).unwrap();
        u.check(&ctx).unwrap();
        let sys = u.build_restricted(&ctx, &example_lp()).unwrap();
        let l = sys.layout;
        let mut obj = vec![0.0; l.len()];
        obj[l.theta_b().start] = 1.0;
        let out = sys.system.minimize(&ctx, &obj);
        assert!((out.value + 2.0).abs() < 1e-6, "{}", out.value);
    }

    #[test]
    fn samples_are_box_vertices_and_deterministic() {
        let ctx = SolveContext::default();
        let mut u = example_box_set();
        u.check(&ctx).unwrap();
        let sys = u.build_restricted(&ctx, &example_lp()).unwrap();
        for stream in 0..5 {
            let s = sys.sample_extreme(&ctx, 42, stream).unwrap();
            assert!((s.b[0].abs() - 1.0).abs() < 1e-6);
            assert!((s.c[0].abs() - 0.5).abs() < 1e-6);
            assert!(sys.violation(&s.z).0 <= 1e-7);
        }
        let a = sys.sample_extreme(&ctx, 42, 7).unwrap();
        let b = sys.sample_extreme(&ctx, 42, 7).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn singleton_samples_origin() {
        let ctx = SolveContext::default();
        let mut u = UncertaintySet::singleton(1, 2);
        u.check(&ctx).unwrap();
        let sys = u.build_restricted(&ctx, &example_lp()).unwrap();
        let s = sys.sample_extreme(&ctx, 1, 0).unwrap();
        assert!(s.theta.is_empty());
        assert_eq!(s.b[0], 0.0);
    }
}
