//! Bounds from feasible points: rounding the relaxation (`r-`, `r+`),
//! extreme-point sampling (`v-`, `v+`), alternating improvement of both,
//! and the exact vertex oracle for polytopal sets.

use crate::bqp::{GeneralQp, Sense};
use crate::linalg::{rank, Affine, SparseVec};
use crate::lp::{solve_perturbed, LinearProgram, LpStatus};
use crate::model::{ConvexSystem, SocRow};
use crate::relaxation::{extract_z, RelaxationSolution};
use crate::uncertainty::{ConstraintSystem, UncertaintySet};
use crate::{Error, Result, SolveContext};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

/// Where a witness came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Rounded,
    Sampled,
}

/// A feasible point of the restricted system with its objective value in
/// the reported sense.
#[derive(Clone, Debug)]
pub struct Witness {
    pub sense: Sense,
    pub origin: Origin,
    pub z: Vec<f64>,
    pub value: f64,
    pub improvement_rounds: usize,
}

impl Witness {
    pub fn new(qp: &GeneralQp, origin: Origin, z: Vec<f64>) -> Self {
        Self {
            sense: qp.sense,
            origin,
            value: qp.value(&z),
            z,
            improvement_rounds: 0,
        }
    }

    pub fn theta<'a>(&'a self, qp: &GeneralQp) -> &'a [f64] {
        &self.z[qp.layout.theta()]
    }

    pub fn perturbation(&self, qp: &GeneralQp) -> (DVector<f64>, DVector<f64>) {
        qp.system.perturbation(&self.z)
    }
}

/// Relative violation of the restricted system at `z`.
pub fn witness_violation(system: &ConstraintSystem, z: &[f64]) -> f64 {
    system.violation(z).0
}

/// `z` part of the relaxation solution, repaired by one nearest-point solve
/// when it misses the restricted system. `None` (with a warning) when the
/// repair fails too.
pub fn round_from_relaxation(ctx: &SolveContext, qp: &GeneralQp, sol: &RelaxationSolution) -> Option<Witness> {
    if !sol.status.has_solution() {
        return None;
    }
    let z = extract_z(sol);
    let tol = ctx.tol.feas;
    if witness_violation(&qp.system, &z) <= tol {
        return Some(Witness::new(qp, Origin::Rounded, z));
    }
    let repaired = project(ctx, &qp.system.system, &z)?;
    let violation = witness_violation(&qp.system, &repaired);
    if violation <= tol {
        Some(Witness::new(qp, Origin::Rounded, repaired))
    } else {
        log::warn!("rounded {} witness stays infeasible after projection ({violation:.2e}); bound omitted", qp.sense.tag());
        None
    }
}

/// Euclidean projection of `point` onto `system`.
fn project(ctx: &SolveContext, system: &ConvexSystem, point: &[f64]) -> Option<Vec<f64>> {
    let n = system.dim;
    let mut sys = system.clone();
    let tau = sys.extend(1);
    sys.add_soc(SocRow {
        label: "distance".into(),
        norm_terms: (0..n).map(|i| Affine::new(SparseVec::unit(i), -point[i])).collect(),
        bound: Affine::new(SparseVec::unit(tau), 0.0),
    });
    let mut objective = vec![0.0; n + 1];
    objective[tau] = 1.0;
    let out = sys.minimize(ctx, &objective);
    out.status.has_solution().then(|| out.point[..n].to_vec())
}

/// One draw of the sampling procedure.
#[derive(Clone, Debug)]
pub struct Trial {
    pub index: usize,
    pub theta: Vec<f64>,
    /// `p(b, c)`; `None` when the draw failed.
    pub value: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub v_minus: f64,
    pub v_plus: f64,
    pub trials: Vec<Trial>,
    pub failed: usize,
    /// Restricted-system points attaining `v-` and `v+`, with the LP's
    /// optimal primal-dual pair filled in.
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
}

impl SampleOutcome {
    /// Running `(min, max)` over the successful trials, in trial order.
    pub fn running_bounds(&self) -> Vec<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        self.trials
            .iter()
            .filter_map(|t| t.value)
            .map(|v| {
                lo = lo.min(v);
                hi = hi.max(v);
                (lo, hi)
            })
            .collect()
    }

    /// CSV with columns `trial, theta[0..], p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.trials.first().map_or(0, |t| t.theta.len());
        let mut header = vec!["trial".to_string()];
        header.extend((0..k).map(|i| format!("theta[{i}]")));
        header.push("p".into());
        w.write_record(&header)?;
        for t in &self.trials {
            let mut rec = vec![t.index.to_string()];
            rec.extend(t.theta.iter().map(|v| format!("{v:.12e}")));
            rec.push(t.value.map_or_else(|| "failed".into(), |v| format!("{v:.12e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sampling procedure: `trials` random extreme points of the restricted
/// set, each evaluated by an LP solve. Trial `k` uses RNG stream `k` of
/// `seed`, so results do not depend on scheduling.
pub fn sample_bounds(ctx: &SolveContext, lp: &LinearProgram, system: &ConstraintSystem, trials: usize, seed: u64) -> Result<SampleOutcome> {
    if trials == 0 {
        return Err(Error::InvalidUncertainty("sampling needs at least one trial".into()));
    }
    let l = system.layout;
    let results: Vec<(Trial, Option<Vec<f64>>, Option<String>)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let sample = match system.sample_extreme(ctx, seed, k as u64) {
                Ok(s) => s,
                Err(e) => {
                    return (Trial { index: k, theta: vec![f64::NAN; l.theta().len()], value: None }, None, Some(e.to_string()))
                }
            };
            let failure = |detail: String| {
                (Trial { index: k, theta: sample.theta.clone(), value: None }, None, Some(detail))
            };
            match solve_perturbed(ctx, lp, &sample.b, &sample.c) {
                Ok(sol) if sol.status == LpStatus::Optimal => {
                    let mut z = sample.z.clone();
                    z[l.x()].copy_from_slice(&sol.x);
                    z[l.y()].copy_from_slice(&sol.y);
                    z[l.s()].copy_from_slice(&sol.s);
                    (Trial { index: k, theta: sample.theta, value: Some(sol.objective) }, Some(z), None)
                }
                Ok(sol) => failure(format!("LP status {:?}", sol.status)),
                Err(e) => failure(e.to_string()),
            }
        })
        .collect();
    let failed = results.iter().filter(|r| r.0.value.is_none()).count();
    if failed * 100 > trials {
        let detail = results.iter().find_map(|r| r.2.clone()).unwrap_or_default();
        return Err(Error::SamplingAborted { failed, trials, detail });
    }
    let mut best: Option<(f64, usize)> = None;
    let mut worst: Option<(f64, usize)> = None;
    for (i, (t, _, _)) in results.iter().enumerate() {
        if let Some(v) = t.value {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, i));
            }
            if worst.is_none_or(|(w, _)| v > w) {
                worst = Some((v, i));
            }
        }
    }
    let ((v_minus, imin), (v_plus, imax)) = (best.expect("some trial succeeded"), worst.expect("some trial succeeded"));
    let argmin = results[imin].1.clone().expect("successful trial has a point");
    let argmax = results[imax].1.clone().expect("successful trial has a point");
    Ok(SampleOutcome {
        v_minus,
        v_plus,
        trials: results.into_iter().map(|r| r.0).collect(),
        failed,
        argmin,
        argmax,
    })
}

/// Blocks alternately frozen: `(theta_c, x)` for the best case,
/// `(theta_b, y)` for the worst case.
fn alternating_blocks(qp: &GeneralQp) -> [std::ops::Range<usize>; 2] {
    let l = qp.layout;
    match qp.sense {
        Sense::BestCase => [l.theta_c(), l.x()],
        Sense::WorstCase => [l.theta_b(), l.y()],
    }
}

/// Minimizes the internal objective over the restricted system with the
/// coordinates in `frozen` pinned at their values in `z`.
fn half_step(ctx: &SolveContext, qp: &GeneralQp, z: &[f64], frozen: std::ops::Range<usize>) -> Option<Vec<f64>> {
    let mut sys = qp.system.system.clone();
    let mut pinned = vec![0.0; z.len()];
    for i in frozen {
        sys.fix(i, z[i], format!("frozen[{i}]"));
        pinned[i] = z[i];
    }
    let pinned = DVector::from_vec(pinned);
    let grad = 2.0 * (&qp.w_quad * &pinned + &qp.w_lin);
    let out = sys.minimize(ctx, grad.as_slice());
    if !out.status.has_solution() {
        log::debug!("alternating step returned {:?}", out.status);
        return None;
    }
    let mut point = out.point;
    // Undo solver noise on the frozen block.
    for (i, v) in pinned.iter().enumerate() {
        if *v != 0.0 {
            point[i] = *v;
        }
    }
    Some(point)
}

/// Alternating improvement: freeze one side of the bilinear term, solve the
/// convex remainder, swap, until a round gains less than
/// `1e-9 max(1, |obj|)` or `max_rounds` is reached.
pub fn alternating_improve(ctx: &SolveContext, qp: &GeneralQp, witness: &Witness, max_rounds: usize) -> Witness {
    let blocks = alternating_blocks(qp);
    let tol = ctx.tol.feas;
    let mut best = witness.clone();
    let internal = |w: &Witness| qp.sense.sign() * w.value;
    for round in 1..=max_rounds {
        let start = internal(&best);
        let mut current = best.clone();
        for block in &blocks {
            let Some(z) = half_step(ctx, qp, &current.z, block.clone()) else {
                return best;
            };
            let candidate = Witness {
                value: qp.value(&z),
                z,
                ..current.clone()
            };
            if witness_violation(&qp.system, &candidate.z) > tol {
                log::debug!("alternating step left the feasible set; stopping");
                return best;
            }
            if internal(&candidate) <= internal(&current) {
                current = candidate;
            }
        }
        current.improvement_rounds = round;
        let gain = start - internal(&current);
        if gain > 0.0 {
            best = current;
        }
        best.improvement_rounds = round;
        if gain < 1e-9 * start.abs().max(1.0) {
            break;
        }
    }
    best
}

/// Replaces `(x, y, s)` of the witness by an optimal primal-dual pair at its
/// `theta`, which makes it complementary. The new value is `p(b, c)`, never
/// worse than the old one beyond solver tolerance; the witness is kept as is
/// when the solve fails or the new value is worse.
pub fn settle(ctx: &SolveContext, lp: &LinearProgram, qp: &GeneralQp, witness: &Witness) -> Witness {
    let (b, c) = witness.perturbation(qp);
    let Ok(sol) = solve_perturbed(ctx, lp, &b, &c) else {
        return witness.clone();
    };
    if !sol.is_optimal() {
        return witness.clone();
    }
    let l = qp.layout;
    let mut z = witness.z.clone();
    z[l.x()].copy_from_slice(&sol.x);
    z[l.y()].copy_from_slice(&sol.y);
    z[l.s()].copy_from_slice(&sol.s);
    let settled = Witness {
        value: qp.value(&z),
        z,
        ..witness.clone()
    };
    let sign = qp.sense.sign();
    let slack = 1e-9 * witness.value.abs().max(1.0);
    if witness_violation(&qp.system, &settled.z) <= ctx.tol.feas && sign * settled.value <= sign * witness.value + slack {
        settled
    } else {
        witness.clone()
    }
}

/// `(gap-, gap+)` in percent.
pub fn gaps(best_minus: f64, best_plus: f64, q_sdp_minus: f64, q_sdp_plus: f64) -> (f64, f64) {
    (
        (best_minus - q_sdp_minus) / best_minus.abs().max(1.0) * 100.0,
        (q_sdp_plus - best_plus) / best_plus.abs().max(1.0) * 100.0,
    )
}

/// All four bounds and their witnesses.
#[derive(Clone, Debug, Default)]
pub struct BoundBundle {
    pub r_minus: Option<f64>,
    pub r_plus: Option<f64>,
    pub v_minus: Option<f64>,
    pub v_plus: Option<f64>,
    pub witnesses: Vec<Witness>,
    pub trials: usize,
    pub failed_trials: usize,
}

impl BoundBundle {
    pub fn best_minus(&self) -> Option<f64> {
        [self.r_minus, self.v_minus].into_iter().flatten().reduce(f64::min)
    }

    pub fn best_plus(&self) -> Option<f64> {
        [self.r_plus, self.v_plus].into_iter().flatten().reduce(f64::max)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundOptions {
    pub trials: usize,
    pub seed: u64,
    pub improve: bool,
    pub max_rounds: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 0,
            improve: true,
            max_rounds: 50,
        }
    }
}

/// Computes `r-`, `r+` from the given start witnesses (rounded relaxation
/// points or exact convex solutions), `v-`, `v+` by sampling, and improves
/// every witness by alternation.
pub fn bound_bundle(
    ctx: &SolveContext,
    lp: &LinearProgram,
    best: (&GeneralQp, Option<Witness>),
    worst: (&GeneralQp, Option<Witness>),
    opts: BoundOptions,
) -> Result<BoundBundle> {
    let improve = |qp: &GeneralQp, w: Witness| {
        let w = if opts.improve {
            alternating_improve(ctx, qp, &w, opts.max_rounds)
        } else {
            w
        };
        settle(ctx, lp, qp, &w)
    };
    let mut bundle = BoundBundle::default();
    if let (qp, Some(w)) = best {
        let w = improve(qp, w);
        bundle.r_minus = Some(w.value);
        bundle.witnesses.push(w);
    }
    if let (qp, Some(w)) = worst {
        let w = improve(qp, w);
        bundle.r_plus = Some(w.value);
        bundle.witnesses.push(w);
    }
    if opts.trials > 0 {
        let samples = sample_bounds(ctx, lp, &best.0.system, opts.trials, opts.seed)?;
        bundle.trials = opts.trials;
        bundle.failed_trials = samples.failed;
        let lo = improve(best.0, Witness::new(best.0, Origin::Sampled, samples.argmin.clone()));
        let hi = improve(worst.0, Witness::new(worst.0, Origin::Sampled, samples.argmax.clone()));
        bundle.v_minus = Some(lo.value.min(samples.v_minus));
        bundle.v_plus = Some(hi.value.max(samples.v_plus));
        bundle.witnesses.push(lo);
        bundle.witnesses.push(hi);
    }
    Ok(bundle)
}

/// Result of exhaustive vertex evaluation.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub q_minus: f64,
    pub q_plus: f64,
    /// Distinct vertices of the set (in `theta`).
    pub vertices: usize,
    /// Vertices outside the restricted set (LP infeasible or unbounded).
    pub skipped: usize,
    /// `q_minus` is the exact best case: no vertex was skipped and `b` is
    /// pinned, so `p` is concave over the set. Otherwise it is an upper
    /// bound on the best case.
    pub exact_minus: bool,
    /// `q_plus` is the exact worst case: no vertex was skipped and `c` is
    /// pinned, so `p` is convex over the set. Otherwise a lower bound.
    pub exact_plus: bool,
}

/// Cap on active-set combinations tried by [`polytope_vertices`].
pub const VERTEX_COMBINATION_CAP: u64 = 1 << 20;

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Vertices of `{u : eq rows, le rows}` by active-set enumeration, as
/// `theta` parts (first `k_theta` coordinates), deduplicated.
pub fn polytope_vertices(set: &UncertaintySet) -> Result<Vec<Vec<f64>>> {
    if !set.is_polytope() {
        return Err(Error::OracleUndefined("uncertainty set has second-order rows".into()));
    }
    let sys = set.system();
    let d = sys.dim;
    if d == 0 {
        return Ok(vec![Vec::new()]);
    }
    let dense = |r: &SparseVec| r.to_dense(d);
    let eq: Vec<DVector<f64>> = sys.eq.iter().map(|r| dense(&r.coefs)).collect();
    let le: Vec<DVector<f64>> = sys.le.iter().map(|r| dense(&r.coefs)).collect();
    let eq_rank = if eq.is_empty() {
        0
    } else {
        rank(&DMatrix::from_rows(&eq.iter().map(|v| v.transpose()).collect::<Vec<_>>()), 1e-10)
    };
    let need = d - eq_rank;
    let combos = binomial(le.len(), need);
    if combos > VERTEX_COMBINATION_CAP {
        return Err(Error::OracleUndefined(format!(
            "{combos} active sets to enumerate exceeds the cap of {VERTEX_COMBINATION_CAP}"
        )));
    }
    let scale = sys.le.iter().map(|r| r.rhs.abs()).chain(sys.eq.iter().map(|r| r.rhs.abs())).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut found: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    let mut chosen = Vec::with_capacity(need);
    let k_theta = set.k_theta();
    let mut visit = |chosen: &[usize]| {
        let rows: Vec<_> = eq.iter().chain(chosen.iter().map(|&i| &le[i])).map(|v| v.transpose()).collect();
        let rhs: Vec<f64> = sys.eq.iter().map(|r| r.rhs).chain(chosen.iter().map(|&i| sys.le[i].rhs)).collect();
        let a = DMatrix::from_rows(&rows);
        let b = DVector::from_vec(rhs);
        if rank(&a, 1e-10) < d {
            return;
        }
        let Ok(u) = a.clone().svd(true, true).solve(&b, 1e-12) else { return };
        if (&a * &u - &b).amax() > tol {
            return;
        }
        let v = u.as_slice();
        if sys.le.iter().any(|r| r.coefs.dot(v) - r.rhs > tol) {
            return;
        }
        let theta = v[..k_theta].to_vec();
        let key = theta.iter().map(|x| (x / scale * 1e9).round() as i64).collect();
        found.entry(key).or_insert(theta);
    };
    fn recurse(start: usize, left: usize, total: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if left == 0 {
            visit(chosen);
            return;
        }
        for i in start..=total - left {
            chosen.push(i);
            recurse(i + 1, left - 1, total, chosen, visit);
            chosen.pop();
        }
    }
    if need <= le.len() {
        recurse(0, need, le.len(), &mut chosen, &mut visit);
    }
    Ok(found.into_values().collect())
}

/// Best and worst `p` over the vertices of a polytopal set. Exact on the
/// side where `p` is concave (best case) or convex (worst case).
pub fn oracle_vertices(ctx: &SolveContext, lp: &LinearProgram, set: &UncertaintySet) -> Result<OracleResult> {
    let vertices = polytope_vertices(set)?;
    let values: Vec<Result<Option<f64>>> = vertices
        .par_iter()
        .map(|theta| {
            let (b, c) = set.perturbation(theta);
            let sol = solve_perturbed(ctx, lp, &b, &c)?;
            Ok(match sol.status {
                LpStatus::Optimal => Some(sol.objective),
                LpStatus::PrimalInfeasible | LpStatus::Unbounded => None,
                LpStatus::NumericalFailure => {
                    return Err(Error::Numerical(format!("vertex LP failed at theta = {theta:?}")));
                }
            })
        })
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut skipped = 0;
    for v in values {
        match v? {
            Some(p) => {
                lo = lo.min(p);
                hi = hi.max(p);
            }
            None => skipped += 1,
        }
    }
    if skipped == vertices.len() {
        return Err(Error::OracleUndefined("no vertex lies in the restricted set".into()));
    }
    Ok(OracleResult {
        q_minus: lo,
        q_plus: hi,
        vertices: vertices.len(),
        skipped,
        exact_minus: skipped == 0 && set.b_is_zero(),
        exact_plus: skipped == 0 && set.c_is_zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bqp::build;

    fn example(set: UncertaintySet) -> (LinearProgram, UncertaintySet) {
        let lp = LinearProgram::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        (lp, set)
    }

    fn example_box() -> (LinearProgram, UncertaintySet) {
        example(UncertaintySet::box_set(1, 2, &[(0, -1.0, 1.0)], &[(0, -0.5, 0.5), (1, 0.0, 0.0)]).unwrap())
    }

    /// `p(b, c) = (2 + b) min(1 + c1, 1 + c2)` for the example LP.
    fn example_p(b: f64, c1: f64, c2: f64) -> f64 {
        (2.0 + b) * (1.0 + c1).min(1.0 + c2)
    }

    #[test]
    fn gap_formulas() {
        let (gm, gp) = gaps(-24000.0, -16000.0, -24000.0, -16000.0);
        assert_eq!((gm, gp), (0.0, 0.0));
        let (gm, _) = gaps(2504.3, 0.0, 2498.9, 0.0);
        assert!((gm - 0.2156).abs() < 1e-3);
        let (_, gp) = gaps(0.0, 0.5, 0.0, 1.0);
        assert!((gp - 50.0).abs() < 1e-12);
    }

    #[test]
    fn box_vertices_are_corners() {
        let (_, set) = example_box();
        let v = polytope_vertices(&set).unwrap();
        assert_eq!(v.len(), 4);
        for theta in &v {
            assert!((theta[0].abs() - 1.0).abs() < 1e-12);
            assert!((theta[1].abs() - 0.5).abs() < 1e-12);
            assert!(theta[2].abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_on_example() {
        let ctx = SolveContext::default();
        let (lp, set) = example_box();
        let r = oracle_vertices(&ctx, &lp, &set).unwrap();
        let brute: Vec<f64> = [(-1.0, -0.5), (-1.0, 0.5), (1.0, -0.5), (1.0, 0.5)]
            .iter()
            .map(|&(b, c)| example_p(b, c, 0.0))
            .collect();
        let lo = brute.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = brute.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((r.q_minus - lo).abs() < 1e-6 && (r.q_plus - hi).abs() < 1e-6, "{r:?}");
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
        assert!(!r.exact_minus && !r.exact_plus);
    }

    #[test]
    fn oracle_is_exact_on_the_pinned_side() {
        let ctx = SolveContext::default();
        let (lp, set) = example(UncertaintySet::box_set(1, 2, &[(0, -1.0, 1.0)], &[]).unwrap());
        let r = oracle_vertices(&ctx, &lp, &set).unwrap();
        assert!(r.exact_plus && !r.exact_minus);
        assert!((r.q_plus - 3.0).abs() < 1e-6 && (r.q_minus - 1.0).abs() < 1e-6);
        let (lp, set) = example(UncertaintySet::box_set(1, 2, &[], &[(0, -0.5, 0.5)]).unwrap());
        let r = oracle_vertices(&ctx, &lp, &set).unwrap();
        assert!(r.exact_minus && !r.exact_plus);
        assert!((r.q_minus - 1.0).abs() < 1e-6 && (r.q_plus - 2.0).abs() < 1e-6);
    }

    #[test]
    fn oracle_skips_vertices_outside_restricted_set() {
        let ctx = SolveContext::default();
        let (lp, set) = example(UncertaintySet::box_set(1, 2, &[(0, -3.0, 1.0)], &[(0, -0.5, 0.5), (1, 0.0, 0.0)]).unwrap());
        let r = oracle_vertices(&ctx, &lp, &set).unwrap();
        assert_eq!(r.skipped, 2);
        assert!(!r.exact_minus && !r.exact_plus);
        assert!((r.q_plus - 3.0).abs() < 1e-6);
    }

    #[test]
    fn sampling_hits_box_vertices() {
        let ctx = SolveContext::default();
        let (lp, mut set) = example_box();
        set.check(&ctx).unwrap();
        let qp = build(&lp, &set, Sense::BestCase).unwrap();
        let out = sample_bounds(&ctx, &lp, &qp.system, 100, 7).unwrap();
        assert!((out.v_minus - 0.5).abs() < 1e-6 && (out.v_plus - 3.0).abs() < 1e-6, "{} {}", out.v_minus, out.v_plus);
        assert_eq!(out.failed, 0);
        for t in &out.trials {
            let (b, c1) = (t.theta[0], t.theta[1]);
            assert!((t.value.unwrap() - example_p(b, c1, 0.0)).abs() < 1e-6);
        }
        let running = out.running_bounds();
        assert!(running.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 >= w[0].1));
        let mut csv = Vec::new();
        out.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 101);
    }

    #[test]
    fn alternating_reaches_vertex_optimum() {
        let ctx = SolveContext::default();
        let (lp, mut set) = example_box();
        set.check(&ctx).unwrap();
        let qp = build(&lp, &set, Sense::BestCase).unwrap();
        // Interior start: b = 0.3, c1 = 0.2, x = (1.15, 1.15).
        let l = qp.layout;
        let mut z = vec![0.0; l.len()];
        z[0] = 1.0;
        z[l.theta().start] = 0.3;
        z[l.theta().start + 1] = 0.2;
        z[l.x().start] = 1.15;
        z[l.x().start + 1] = 1.15;
        // y = 1 with s = (1.2 - 1, 0) keeps the dual rows satisfied.
        z[l.y().start] = 1.0;
        z[l.s().start] = 0.2;
        assert!(witness_violation(&qp.system, &z) < 1e-12);
        let start = Witness::new(&qp, Origin::Sampled, z);
        let end = alternating_improve(&ctx, &qp, &start, 50);
        assert!((end.value - 0.5).abs() < 1e-6, "{}", end.value);
        assert!(end.value <= start.value);
    }

    #[test]
    fn alternating_keeps_an_optimal_vertex() {
        let ctx = SolveContext::default();
        let (lp, mut set) = example_box();
        set.check(&ctx).unwrap();
        let qp = build(&lp, &set, Sense::BestCase).unwrap();
        let l = qp.layout;
        let mut z = vec![0.0; l.len()];
        z[0] = 1.0;
        z[l.theta().start] = -1.0;
        z[l.theta().start + 1] = -0.5;
        z[l.x().start] = 1.0;
        z[l.y().start] = 0.5;
        z[l.s().start + 1] = 0.5;
        let start = Witness::new(&qp, Origin::Sampled, z);
        assert!((start.value - 0.5).abs() < 1e-12);
        let end = alternating_improve(&ctx, &qp, &start, 50);
        assert!((end.value - 0.5).abs() < 1e-9);
        assert_eq!(end.improvement_rounds, 1);
    }
}
