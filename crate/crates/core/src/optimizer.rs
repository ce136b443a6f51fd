//! Activation-probability optimization: minimize
//! `G = w1 g1(EDE) + w2 g2(ERC)` subject to `g3(EUU) >= EUU_min`.
//!
//! [`solve_algorithm1`] keeps the two-level structure of the published
//! algorithm: an inner Gauss-Seidel sweep over the (attribute, ISA)
//! coordinates in query order and an outer loop over the weights. The
//! default coordinate update searches along rays from the origin for the
//! cheapest feasible point, so every iterate sits on the constraint
//! boundary; [`CoordinateRule::PrintedTarget`] instead drives each
//! coordinate to the error-probability target of the printed fixed point
//! and steps the multiplier up until the constraint holds.

use serde::{Deserialize, Serialize};

use crate::effectiveness::{FeatureReport, Weights};
use crate::error::{Error, Result};
use crate::instance::{Activation, Instance};

/// Which activation probabilities share one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Tying {
    /// One variable per queried (attribute, observer) pair.
    #[default]
    Full,
    /// One variable per queried attribute.
    PerAttribute,
    /// A single variable for every pair.
    Global,
}

/// How the outer loop moves the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    /// Keep the initial weights.
    Fixed,
    /// Least-squares stationarity residual over `w1`, multiplier solved in
    /// closed form.
    #[default]
    Stationarity,
    /// Maximize the optimal value over `w1` (concave), which equalizes
    /// `g1(EDE)` and `g2(ERC)` at an interior maximizer.
    Equalize,
}

/// How one coordinate is updated inside the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateRule {
    /// Cheapest feasible point along the ray through the trial direction.
    #[default]
    Boundary,
    /// Error-probability target from the multiplier, inverted for `alpha`.
    PrintedTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Sweep-to-sweep change in the variables below which the inner loop
    /// stops.
    pub eps_alpha: f64,
    /// Change in `w1` below which the outer loop stops.
    pub eps_weight: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub eta_initial: f64,
    pub eta_first_step: f64,
    pub eta_factor: f64,
    pub fd_step: f64,
    pub initial_w1: f64,
    /// Weights are kept inside `[floor, 1 - floor]`.
    pub weight_floor: f64,
    pub tying: Tying,
    pub weight_rule: WeightRule,
    pub coordinate_rule: CoordinateRule,
    pub kkt_tolerance: f64,
    pub gap_tolerance: f64,
    /// Scan resolution along a ray.
    pub ray_points: usize,
    /// Trial values per coordinate before refinement.
    pub line_points: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eps_alpha: 1e-4,
            eps_weight: 1e-3,
            max_inner: 50,
            max_outer: 30,
            eta_initial: 0.0,
            eta_first_step: 0.1,
            eta_factor: 1.5,
            fd_step: 1e-4,
            initial_w1: 0.5,
            weight_floor: 1e-3,
            tying: Tying::Full,
            weight_rule: WeightRule::Stationarity,
            coordinate_rule: CoordinateRule::Boundary,
            kkt_tolerance: 1e-2,
            gap_tolerance: 1e-3,
            ray_points: 32,
            line_points: 11,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("optimizer.eps_alpha", self.eps_alpha),
            ("optimizer.eps_weight", self.eps_weight),
            ("optimizer.eta_first_step", self.eta_first_step),
            ("optimizer.fd_step", self.fd_step),
            ("optimizer.kkt_tolerance", self.kkt_tolerance),
            ("optimizer.gap_tolerance", self.gap_tolerance),
        ];
        for (field, value) in positive {
            if !(value > 0.0) {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::invalid("optimizer.max_inner", "iteration limits must be at least 1"));
        }
        if !(self.eta_factor > 1.0) {
            return Err(Error::invalid("optimizer.eta_factor", "must exceed 1"));
        }
        if !(self.eta_initial >= 0.0) {
            return Err(Error::invalid("optimizer.eta_initial", "must be nonnegative"));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 0.5) {
            return Err(Error::invalid("optimizer.weight_floor", "must lie in (0, 0.5)"));
        }
        if !(self.initial_w1 >= self.weight_floor && self.initial_w1 <= 1.0 - self.weight_floor) {
            return Err(Error::invalid("optimizer.initial_w1", "must lie inside the weight bounds"));
        }
        if self.ray_points < 2 || self.line_points < 3 {
            return Err(Error::invalid("optimizer.ray_points", "need at least 2 ray points and 3 line points"));
        }
        Ok(())
    }
}

/// Maps optimization variables to entries of the activation matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    tying: Tying,
    /// `(k, n)` entries driven by each variable, in query order.
    vars: Vec<Vec<(usize, usize)>>,
}

impl Layout {
    pub fn new(instance: &Instance, tying: Tying) -> Self {
        let mut vars: Vec<Vec<(usize, usize)>> = Vec::new();
        for &n in instance.schedule.attributes() {
            let entries: Vec<(usize, usize)> = instance.topology.observers(n).iter().map(|&k| (k, n)).collect();
            match tying {
                Tying::Full => vars.extend(entries.into_iter().map(|e| vec![e])),
                Tying::PerAttribute => vars.push(entries),
                Tying::Global => {
                    if vars.is_empty() {
                        vars.push(Vec::new());
                    }
                    vars[0].extend(entries);
                }
            }
        }
        Self { tying, vars }
    }

    pub fn tying(&self) -> Tying {
        self.tying
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn entries(&self, i: usize) -> &[(usize, usize)] {
        &self.vars[i]
    }

    pub fn activation(&self, instance: &Instance, x: &[f64]) -> Activation {
        let mut alpha = Activation::constant(instance.num_isas(), instance.num_attributes(), 0.0);
        for (entries, &value) in self.vars.iter().zip(x) {
            for &(k, n) in entries {
                alpha.set(k, n, value);
            }
        }
        alpha
    }

    pub fn variables(&self, alpha: &Activation) -> Vec<f64> {
        self.vars.iter().map(|e| alpha.get(e[0].0, e[0].1)).collect()
    }
}

#[derive(Debug, Clone)]
struct Point {
    x: Vec<f64>,
    objective: f64,
    slack: f64,
}

impl Point {
    fn feasible(&self) -> bool {
        self.slack >= 0.0
    }
}

struct Problem<'a> {
    instance: &'a Instance,
    layout: Layout,
    weights: Weights,
    cfg: &'a OptimizerConfig,
}

impl<'a> Problem<'a> {
    fn report(&self, x: &[f64]) -> FeatureReport {
        self.instance.evaluate(&self.layout.activation(self.instance, x), self.weights)
    }

    fn point(&self, x: Vec<f64>) -> Point {
        let r = self.report(&x);
        let slack = self.instance.constraint_slack(&r);
        Point {
            x,
            objective: r.objective,
            slack,
        }
    }

    fn scaled(&self, dir: &[f64], s: f64) -> Point {
        self.point(dir.iter().map(|d| (d * s).clamp(0.0, 1.0)).collect())
    }

    /// Cheapest feasible point on `{s * dir : 0 < s <= 1 / max(dir)}`.
    fn ray_min(&self, dir: &[f64], points: usize) -> Option<Point> {
        let top = dir.iter().cloned().fold(0.0, f64::max);
        if !(top > 0.0) {
            return None;
        }
        let s_max = 1.0 / top;
        let scan: Vec<(f64, Point)> = (0..=points)
            .map(|i| {
                let s = s_max * i as f64 / points as f64;
                (s, self.scaled(dir, s))
            })
            .collect();
        let mut best: Option<Point> = None;
        let mut consider = |p: Point| {
            if p.feasible() && best.as_ref().is_none_or(|b| p.objective < b.objective) {
                best = Some(p);
            }
        };
        for w in scan.windows(2) {
            let (s0, p0) = (&w[0].0, &w[0].1);
            let (s1, p1) = (&w[1].0, &w[1].1);
            if !p0.feasible() && p1.feasible() {
                consider(self.boundary(dir, *s0, *s1, true));
            }
            if p0.feasible() && !p1.feasible() {
                consider(self.boundary(dir, *s0, *s1, false));
            }
        }
        for i in 0..scan.len() {
            let p = &scan[i].1;
            if !p.feasible() {
                continue;
            }
            consider(p.clone());
            let left = i.checked_sub(1).map(|l| &scan[l].1);
            let right = scan.get(i + 1).map(|r| &r.1);
            if let (Some(l), Some(r)) = (left, right) {
                if l.feasible() && r.feasible() && p.objective <= l.objective && p.objective <= r.objective {
                    let (a, b) = (scan[i - 1].0, scan[i + 1].0);
                    let s = golden_min(a, b, 1e-9, |s| self.scaled(dir, s).objective);
                    consider(self.scaled(dir, s));
                }
            }
        }
        best
    }

    /// Bisection for the constraint boundary between `s0` and `s1`;
    /// returns the feasible end.
    fn boundary(&self, dir: &[f64], mut s0: f64, mut s1: f64, rising: bool) -> Point {
        for _ in 0..80 {
            if (s1 - s0).abs() <= 1e-15 * s1.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (s0 + s1);
            let feasible = self.scaled(dir, mid).feasible();
            if feasible == rising {
                s1 = mid;
            } else {
                s0 = mid;
            }
        }
        self.scaled(dir, s1)
    }

    /// Gradients of `g1(EDE)`, `g2(ERC)` and the constraint slack by finite
    /// differences.
    fn gradients(&self, x: &[f64]) -> Gradients {
        let d = self.cfg.fd_step;
        let f = |x: &[f64]| {
            let r = self.report(x);
            let funcs = &self.instance.funcs;
            [funcs.g(1, r.ede), funcs.g(2, r.erc), self.instance.constraint_slack(&r)]
        };
        let mut out = Gradients::default();
        for i in 0..x.len() {
            let lo = (x[i] - d).max(0.0);
            let hi = (x[i] + d).min(1.0);
            let mut xl = x.to_vec();
            xl[i] = lo;
            let mut xh = x.to_vec();
            xh[i] = hi;
            let (fl, fh) = (f(&xl), f(&xh));
            let h = hi - lo;
            out.g1.push((fh[0] - fl[0]) / h);
            out.g2.push((fh[1] - fl[1]) / h);
            out.slack.push((fh[2] - fl[2]) / h);
        }
        out.at_lower = x.iter().map(|&v| v <= 0.0).collect();
        out.at_upper = x.iter().map(|&v| v >= 1.0).collect();
        out
    }
}

#[derive(Debug, Clone, Default)]
struct Gradients {
    g1: Vec<f64>,
    g2: Vec<f64>,
    slack: Vec<f64>,
    at_lower: Vec<bool>,
    at_upper: Vec<bool>,
}

impl Gradients {
    fn objective(&self, w1: f64) -> Vec<f64> {
        self.g1.iter().zip(&self.g2).map(|(a, b)| w1 * a + (1.0 - w1) * b).collect()
    }

    /// Least-squares multiplier over the free coordinates.
    fn multiplier(&self, w1: f64) -> f64 {
        let u = self.objective(w1);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..u.len() {
            if !self.at_lower[i] && !self.at_upper[i] {
                num += u[i] * self.slack[i];
                den += self.slack[i] * self.slack[i];
            }
        }
        if den > 0.0 {
            (num / den).max(0.0)
        } else {
            0.0
        }
    }

    /// Projected stationarity residual `grad G - eta grad slack` in max norm,
    /// relative to `max(1, |grad G|)`.
    fn residual(&self, w1: f64, eta: f64) -> f64 {
        let u = self.objective(w1);
        let mut worst: f64 = 0.0;
        for i in 0..u.len() {
            let mut r = u[i] - eta * self.slack[i];
            if self.at_lower[i] {
                r = r.min(0.0);
            }
            if self.at_upper[i] {
                r = r.max(0.0);
            }
            worst = worst.max(r.abs());
        }
        let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        worst / scale
    }
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Truth values of the convexity conditions over every queried
/// (ISA, attribute) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub h4: bool,
    pub h5: bool,
    pub h6: bool,
    /// Pairs violating each condition.
    pub violations: [usize; 3],
    pub checked: usize,
}

impl ConvexityReport {
    pub fn all(&self) -> bool {
        self.h4 && self.h5 && self.h6
    }
}

/// Finite-difference derivatives of the per-pair quantities entering the
/// convexity conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDerivatives {
    pub f1: f64,
    pub f2: f64,
    pub error: f64,
    pub success: f64,
    pub success_others: f64,
    pub df1: f64,
    pub df2: f64,
    pub d2f2: f64,
    pub derror: f64,
    pub d2error: f64,
    pub dsuccess: f64,
}

/// Derivatives with respect to the single entry `alpha[k][n]` (slot `j`
/// carries attribute `n`).
pub fn pair_derivatives(instance: &Instance, alpha: &Activation, k: usize, j: usize, delta: f64) -> PairDerivatives {
    let n = instance.schedule.attribute_at(j);
    let a = alpha.get(k, n).clamp(delta, 1.0 - delta);
    let at = |v: f64| {
        let mut al = alpha.clone();
        al.set(k, n, v);
        let r = instance.evaluate(&al, Weights::balanced());
        [r.f1, r.f2, r.error[j], r.success[j]]
    };
    let (m, c, p) = (at(a - delta), at(a), at(a + delta));
    let d1 = |i: usize| (p[i] - m[i]) / (2.0 * delta);
    let d2 = |i: usize| (p[i] - 2.0 * c[i] + m[i]) / (delta * delta);
    let base = instance.evaluate(alpha, Weights::balanced());
    PairDerivatives {
        f1: base.f1,
        f2: base.f2,
        error: base.error[j],
        success: base.success[j],
        success_others: base.success_others[j],
        df1: d1(0),
        df2: d1(1),
        d2f2: d2(1),
        derror: d1(2),
        d2error: d2(2),
        dsuccess: d1(3),
    }
}

/// Checks the three sufficient convexity conditions at `alpha`.
pub fn convexity_conditions(instance: &Instance, alpha: &Activation, weights: Weights, eta: f64, delta: f64) -> ConvexityReport {
    let funcs = &instance.funcs;
    let mut violations = [0usize; 3];
    let mut checked = 0;
    let tol = 1e-12;
    for j in 0..instance.slots() {
        let n = instance.schedule.attribute_at(j);
        for &k in instance.topology.observers(n) {
            let d = pair_derivatives(instance, alpha, k, j, delta);
            checked += 1;
            let h4 = d.df1 * d.derror + 0.5 * d.f1 * d.d2error;
            let h5 = d.dsuccess * d.df2 + 0.5 * d.success * d.d2f2;
            let euu = d.f1 * d.success * d.success_others;
            let erc = d.f2 * d.success * d.success_others;
            let lhs = eta * (d.f1 * d.dsuccess + d.success * d.df1) * funcs.g_second(3, euu);
            let rhs = weights.w2 * (d.f2 * d.dsuccess + d.success * d.df2) * funcs.g_second(2, erc);
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            if h4 < -tol {
                violations[0] += 1;
            }
            if h5 < -tol {
                violations[1] += 1;
            }
            if lhs > rhs + tol * scale {
                violations[2] += 1;
            }
        }
    }
    ConvexityReport {
        h4: violations[0] == 0,
        h5: violations[1] == 0,
        h6: violations[2] == 0,
        violations,
        checked,
    }
}

/// Relative mismatch of the weight-stationarity identity
/// `F2 = g2^{-1}(g1(EDE)) / prod S`, i.e. `g1(EDE) = g2(ERC)`.
pub fn weight_balance_residual(instance: &Instance, report: &FeatureReport) -> f64 {
    let funcs = &instance.funcs;
    let prod = report.success_product();
    if !(prod > 0.0) || !(report.f2 > 0.0) {
        return f64::INFINITY;
    }
    let predicted = funcs.g_inv(2, funcs.g(1, report.ede)) / prod;
    (predicted - report.f2).abs() / report.f2
}

/// Error-probability target of slot `j`'s attribute from the printed
/// fixed point, clamped to `[0, 1]`. The flag reports clamping.
pub fn target_error_probability(instance: &Instance, alpha: &Activation, j: usize, eta: f64, weights: Weights) -> Result<(f64, bool)> {
    let r = instance.evaluate(alpha, weights);
    let others: f64 = r.error.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, e)| e).sum();
    let denom = r.f1 * others;
    if !(denom > 0.0) {
        return Err(Error::InfeasibleTarget(format!("slot {j}: usefulness times other errors is {denom}")));
    }
    let y = eta * r.success_product() * instance.euu_min / (2.0 * weights.w1);
    let bracket = instance.funcs.g_inv(1, y) / denom;
    if !(bracket >= 0.0) {
        return Err(Error::InfeasibleTarget(format!("slot {j}: negative bracket {bracket}")));
    }
    let target = bracket.sqrt();
    Ok((target.min(1.0), target > 1.0))
}

/// Which end of `[0, 1]` an inversion was pinned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pinned {
    Lower,
    Upper,
}

/// Sets the entries in `entries` to a common value so that the mean steady
/// error of their attributes equals `target`; the error is nonincreasing in
/// the value, and the smallest value reaching the target is returned.
pub fn invert_error_for_entries(instance: &Instance, alpha: &Activation, entries: &[(usize, usize)], target: f64) -> (f64, Option<Pinned>) {
    let slots: Vec<usize> = {
        let mut s: Vec<usize> = entries
            .iter()
            .filter_map(|&(_, n)| instance.schedule.attributes().iter().position(|&a| a == n))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let error_at = |v: f64| {
        let mut al = alpha.clone();
        for &(k, n) in entries {
            al.set(k, n, v);
        }
        slots.iter().map(|&j| instance.slot_error(&al, j)).sum::<f64>() / slots.len().max(1) as f64
    };
    let (e0, e1) = (error_at(0.0), error_at(1.0));
    if target >= e0 {
        return (0.0, (target > e0).then_some(Pinned::Lower));
    }
    if target < e1 {
        return (1.0, Some(Pinned::Upper));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if error_at(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    (hi, None)
}

/// Single-entry form of [`invert_error_for_entries`].
pub fn invert_error_for_alpha(instance: &Instance, alpha: &Activation, k: usize, n: usize, target: f64) -> (f64, Option<Pinned>) {
    invert_error_for_entries(instance, alpha, &[(k, n)], target)
}

/// Closed-form activation for large state spaces, where the steady error
/// tends to one half: the value of `alpha[k][n]` at which
/// `eta S_n Sbar_n EUU_min = 2 w1 g1(F1 / 2^{|A|+1})`, using the split of the
/// failure probability on ISA `k` being active or not. Clamped to `[0, 1]`.
pub fn large_state_alpha(instance: &Instance, alpha: &Activation, k: usize, n: usize, eta: f64, weights: Weights) -> Result<f64> {
    let j = instance
        .schedule
        .attributes()
        .iter()
        .position(|&a| a == n)
        .ok_or_else(|| Error::invalid("n", format!("attribute {n} is not queried")))?;
    let model = instance.delivery(j);
    let i = model
        .observers()
        .iter()
        .position(|&o| o == k)
        .ok_or_else(|| Error::invalid("k", format!("ISA {k} does not observe attribute {n}")))?;
    let (active, inactive) = model.split_failure(&instance.slot_alpha(alpha, j), i);
    if (active - inactive).abs() <= 1e-12 {
        return Err(Error::DegenerateSplit { isa: k, attribute: n });
    }
    let r = instance.evaluate(alpha, weights);
    let others = r.success_others[j];
    let scale = eta * others * instance.euu_min;
    let size = instance.slots() as i32;
    let cost = 2.0 * weights.w1 * instance.funcs.g(1, r.f1 / 2f64.powi(size + 1));
    let value = (scale * (1.0 - inactive) - cost) / (scale * (active - inactive));
    Ok(if value.is_finite() { value.clamp(0.0, 1.0) } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterations {
    pub inner: usize,
    pub outer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub alpha_star: Activation,
    pub variables: Vec<f64>,
    pub tying: Tying,
    pub w_star: Weights,
    pub eta_star: f64,
    pub objective: f64,
    pub converged: bool,
    pub kkt_residual: f64,
    /// `|g3(EUU) - EUU_min|`.
    pub constraint_gap: f64,
    pub feasible: bool,
    pub iterations: Iterations,
    pub convexity: ConvexityReport,
    pub weight_balance_residual: f64,
    pub weights_interior: bool,
    pub report: FeatureReport,
}

impl Solution {
    /// Whether every row of the activation matrix that observes an attribute
    /// uses one common value.
    pub fn is_tied(&self, instance: &Instance) -> bool {
        let mut values = Vec::new();
        for j in 0..instance.slots() {
            let n = instance.schedule.attribute_at(j);
            for &k in instance.topology.observers(n) {
                values.push(self.alpha_star.get(k, n));
            }
        }
        values.windows(2).all(|w| w[0] == w[1])
    }
}

/// Boundary-following Gauss-Seidel sweeps for fixed weights.
fn boundary_sweeps(problem: &Problem, start: Option<Vec<f64>>) -> Result<(Point, usize)> {
    let cfg = problem.cfg;
    let dim = problem.layout.len();
    let mut current = start
        .and_then(|x| problem.ray_min(&x, cfg.ray_points))
        .or_else(|| problem.ray_min(&vec![1.0; dim], cfg.ray_points));
    let mut sweeps = 0;
    for _ in 0..cfg.max_inner {
        sweeps += 1;
        let before = current.as_ref().map(|p| p.x.clone());
        for i in 0..dim {
            let base = current.as_ref().map(|p| p.x.clone()).unwrap_or_else(|| vec![1.0; dim]);
            let trial = |v: f64| {
                let mut d = base.clone();
                d[i] = v;
                problem.ray_min(&d, cfg.ray_points)
            };
            let grid: Vec<f64> = (0..cfg.line_points).map(|g| g as f64 / (cfg.line_points - 1) as f64).collect();
            let evals: Vec<Option<Point>> = grid.iter().map(|&v| trial(v)).collect();
            let best_idx = evals
                .iter()
                .enumerate()
                .filter_map(|(g, p)| p.as_ref().map(|p| (g, p.objective)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(g, _)| g);
            let Some(b) = best_idx else { continue };
            let mut candidate = evals[b].clone();
            let lo = grid[b.saturating_sub(1)];
            let hi = grid[(b + 1).min(grid.len() - 1)];
            let v = golden_min(lo, hi, 1e-7, |v| trial(v).map_or(f64::INFINITY, |p| p.objective));
            if let Some(p) = trial(v) {
                if candidate.as_ref().is_none_or(|c| p.objective < c.objective) {
                    candidate = Some(p);
                }
            }
            if let Some(c) = candidate {
                if current.as_ref().is_none_or(|cur| c.objective < cur.objective) {
                    current = Some(c);
                }
            }
        }
        if let (Some(prev), Some(cur)) = (before, current.as_ref()) {
            let change = prev.iter().zip(&cur.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if change <= cfg.eps_alpha {
                break;
            }
        }
    }
    current.map(|p| (p, sweeps)).ok_or_else(|| Error::Infeasible("no activation satisfies the usefulness constraint".into()))
}

/// Printed fixed point for fixed weights and multiplier.
fn printed_sweeps(problem: &Problem, eta: f64, start: Vec<f64>) -> (Vec<f64>, usize) {
    let cfg = problem.cfg;
    let inst = problem.instance;
    let mut x = start;
    let mut sweeps = 0;
    for _ in 0..cfg.max_inner {
        sweeps += 1;
        let before = x.clone();
        for i in 0..x.len() {
            let alpha = problem.layout.activation(inst, &x);
            let entries = problem.layout.entries(i);
            let n = entries[0].1;
            let Some(j) = inst.schedule.attributes().iter().position(|&a| a == n) else { continue };
            let Ok((target, _)) = target_error_probability(inst, &alpha, j, eta, problem.weights) else {
                continue;
            };
            x[i] = invert_error_for_entries(inst, &alpha, entries, target).0;
        }
        let change = before.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if change <= cfg.eps_alpha {
            break;
        }
    }
    (x, sweeps)
}

/// Multiplier stepped up until the printed fixed point is feasible, then
/// refined by bisection.
fn printed_solve(problem: &Problem, start: Vec<f64>) -> Result<(Point, usize, usize)> {
    let cfg = problem.cfg;
    let mut eta = cfg.eta_initial;
    let mut x = start;
    let mut inner = 0;
    let mut outer = 0;
    let mut low: Option<f64> = None;
    let mut high: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.max_outer {
        outer += 1;
        let (nx, s) = printed_sweeps(problem, eta, x.clone());
        inner += s;
        x = nx;
        if problem.point(x.clone()).feasible() {
            high = Some((eta, x.clone()));
            break;
        }
        low = Some(eta);
        eta = if eta == 0.0 { cfg.eta_first_step } else { eta * cfg.eta_factor };
    }
    let Some((mut hi_eta, mut hi_x)) = high else {
        return Err(Error::Infeasible("multiplier schedule exhausted without a feasible fixed point".into()));
    };
    if let Some(mut lo_eta) = low {
        for _ in 0..cfg.max_outer {
            if hi_eta - lo_eta <= 1e-9 * hi_eta.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo_eta + hi_eta);
            let (nx, s) = printed_sweeps(problem, mid, hi_x.clone());
            inner += s;
            if problem.point(nx.clone()).feasible() {
                hi_eta = mid;
                hi_x = nx;
            } else {
                lo_eta = mid;
            }
        }
    }
    Ok((problem.point(hi_x), inner, outer))
}

fn inner_solve(problem: &Problem, start: Option<Vec<f64>>) -> Result<(Point, usize, usize)> {
    match problem.cfg.coordinate_rule {
        CoordinateRule::Boundary => boundary_sweeps(problem, start).map(|(p, s)| (p, s, 0)),
        CoordinateRule::PrintedTarget => {
            let x0 = start.unwrap_or_else(|| vec![0.0; problem.layout.len()]);
            printed_solve(problem, x0)
        }
    }
}

/// `w1` minimizing the projected stationarity residual at fixed gradients.
fn stationarity_weight(grads: &Gradients, current: f64, floor: f64) -> f64 {
    let res = |w: f64| grads.residual(w, grads.multiplier(w));
    let here = res(current);
    if here <= 1e-12 {
        return current;
    }
    let w = golden_min(floor, 1.0 - floor, 1e-9, res);
    if res(w) < here {
        w
    } else {
        current
    }
}

/// Solves the activation problem on `instance`.
pub fn solve_algorithm1(instance: &Instance, cfg: &OptimizerConfig) -> Result<Solution> {
    cfg.validate()?;
    let layout = Layout::new(instance, cfg.tying);
    if layout.is_empty() {
        return Err(Error::Infeasible("no queried attribute has an observer".into()));
    }
    let floor = cfg.weight_floor;
    let make = |w1: f64| Problem {
        instance,
        layout: layout.clone(),
        weights: Weights::new(w1),
        cfg,
    };
    let mut w1 = cfg.initial_w1;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut weights_converged = false;
    let mut point;
    match cfg.weight_rule {
        WeightRule::Fixed | WeightRule::Stationarity => {
            let (p, i, o) = inner_solve(&make(w1), None)?;
            inner_total += i;
            outer += o.max(1);
            point = p;
            if cfg.weight_rule == WeightRule::Fixed {
                weights_converged = true;
            } else {
                for _ in 0..cfg.max_outer {
                    let grads = make(w1).gradients(&point.x);
                    let next = stationarity_weight(&grads, w1, floor);
                    if (next - w1).abs() <= cfg.eps_weight {
                        weights_converged = true;
                        break;
                    }
                    w1 = next;
                    outer += 1;
                    let (p, i, _) = inner_solve(&make(w1), Some(point.x.clone()))?;
                    inner_total += i;
                    point = p;
                }
            }
        }
        WeightRule::Equalize => {
            // the optimal value is concave in w1; golden-section ascent
            let mut cache: Vec<(f64, Point)> = Vec::new();
            let mut warm: Option<Vec<f64>> = None;
            let mut value = |w: f64, cache: &mut Vec<(f64, Point)>, inner_total: &mut usize| -> Result<f64> {
                let (p, i, _) = inner_solve(&make(w), warm.clone())?;
                *inner_total += i;
                warm = Some(p.x.clone());
                let v = p.objective;
                cache.push((w, p));
                Ok(v)
            };
            let ratio = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (floor, 1.0 - floor);
            let mut c = b - ratio * (b - a);
            let mut d = a + ratio * (b - a);
            let mut fc = value(c, &mut cache, &mut inner_total)?;
            let mut fd = value(d, &mut cache, &mut inner_total)?;
            outer += 2;
            while b - a > cfg.eps_weight && outer < cfg.max_outer {
                outer += 1;
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - ratio * (b - a);
                    fc = value(c, &mut cache, &mut inner_total)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + ratio * (b - a);
                    fd = value(d, &mut cache, &mut inner_total)?;
                }
            }
            weights_converged = b - a <= cfg.eps_weight;
            let (bw, bp) = cache
                .into_iter()
                .max_by(|x, y| x.1.objective.total_cmp(&y.1.objective))
                .expect("at least two evaluations");
            w1 = bw;
            point = bp;
        }
    }

    let problem = make(w1);
    let grads = problem.gradients(&point.x);
    let eta = grads.multiplier(w1);
    let kkt_residual = grads.residual(w1, eta);
    let report = problem.report(&point.x);
    let slack = instance.constraint_slack(&report);
    let alpha_star = layout.activation(instance, &point.x);
    let weights = Weights::new(w1);
    let convexity = convexity_conditions(instance, &alpha_star, weights, eta, cfg.fd_step);
    let balance = weight_balance_residual(instance, &report);
    let gap = slack.abs();
    let weights_interior = w1 > floor + cfg.eps_weight && w1 < 1.0 - floor - cfg.eps_weight;
    Ok(Solution {
        variables: point.x.clone(),
        alpha_star,
        tying: cfg.tying,
        w_star: weights,
        eta_star: eta,
        objective: report.objective,
        converged: weights_converged && kkt_residual <= cfg.kkt_tolerance && (eta == 0.0 || gap <= cfg.gap_tolerance) && slack >= 0.0,
        kkt_residual,
        constraint_gap: gap,
        feasible: slack >= 0.0,
        iterations: Iterations { inner: inner_total, outer },
        convexity,
        weight_balance_residual: balance,
        weights_interior,
        report,
    })
}

/// Result of the exhaustive grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOracle {
    pub variables: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub feasible_points: u128,
    pub total_points: u128,
}

impl GridOracle {
    pub fn is_feasible(&self) -> bool {
        self.variables.is_some()
    }
}

/// Largest grid the oracle accepts.
pub const GRID_LIMIT: u128 = 10_000_000;

/// Exhaustive search over `{0, step, 2 step, ..., 1}^d` for the feasible
/// minimizer of the objective.
pub fn grid_search_oracle(instance: &Instance, tying: Tying, weights: Weights, step: f64) -> Result<GridOracle> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid("grid_step", "must lie in (0, 1]"));
    }
    let layout = Layout::new(instance, tying);
    let per_axis = (1.0 / step).round() as u128 + 1;
    let dim = layout.len() as u32;
    let total = per_axis.checked_pow(dim).unwrap_or(u128::MAX);
    if total > GRID_LIMIT {
        return Err(Error::GridTooLarge { points: total, limit: GRID_LIMIT });
    }
    let axis: Vec<f64> = (0..per_axis).map(|i| (i as f64 * step).min(1.0)).collect();
    let mut idx = vec![0usize; layout.len()];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut feasible = 0u128;
    for _ in 0..total {
        let x: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
        let r = instance.evaluate(&layout.activation(instance, &x), weights);
        if instance.constraint_slack(&r) >= 0.0 {
            feasible += 1;
            if best.as_ref().is_none_or(|b| r.objective < b.1) {
                best = Some((x, r.objective));
            }
        }
        for d in idx.iter_mut() {
            *d += 1;
            if *d < axis.len() {
                break;
            }
            *d = 0;
        }
    }
    Ok(GridOracle {
        objective: best.as_ref().map(|b| b.1),
        variables: best.map(|b| b.0),
        feasible_points: feasible,
        total_points: total,
    })
}

/// One point of the tied-activation profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub alpha: f64,
    pub objective: f64,
    pub euu: f64,
    pub slack: f64,
}

/// Objective and usefulness along a single tied activation value.
pub fn tied_profile(instance: &Instance, weights: Weights, step: f64) -> Vec<ProfilePoint> {
    let layout = Layout::new(instance, Tying::Global);
    let count = (1.0 / step).round() as usize;
    (0..=count)
        .map(|i| {
            let a = (i as f64 * step).min(1.0);
            let r = instance.evaluate(&layout.activation(instance, &[a]), weights);
            ProfilePoint {
                alpha: a,
                objective: r.objective,
                euu: r.euu,
                slack: instance.constraint_slack(&r),
            }
        })
        .collect()
}

/// Feasible minimizer over a single tied activation value: a scan at
/// `step` refined to the exact constraint boundary. `None` when infeasible.
pub fn tied_optimum(instance: &Instance, weights: Weights, step: f64) -> Option<(f64, f64)> {
    let cfg = OptimizerConfig::default();
    let problem = Problem {
        instance,
        layout: Layout::new(instance, Tying::Global),
        weights,
        cfg: &cfg,
    };
    if problem.layout.is_empty() {
        return None;
    }
    let points = ((1.0 / step).round() as usize).max(2);
    problem.ray_min(&[1.0], points).map(|p| (p.x[0], p.objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn small(seed: u64) -> Instance {
        let cfg = ExperimentConfig {
            seed,
            num_isas: 3,
            num_nmas: 2,
            num_attributes: 2,
            query_size: 2,
            quorum: Some(1),
            ..ExperimentConfig::default()
        };
        cfg.instance(0).unwrap()
    }

    #[test]
    fn layout_orders_and_ties() {
        let inst = small(3);
        let full = Layout::new(&inst, Tying::Full);
        let per = Layout::new(&inst, Tying::PerAttribute);
        let global = Layout::new(&inst, Tying::Global);
        let pairs: usize = (0..2).map(|n| inst.topology.observers(n).len()).sum();
        assert_eq!(full.len(), pairs);
        assert_eq!(per.len(), 2);
        assert_eq!(global.len(), 1);
        let alpha = per.activation(&inst, &[0.2, 0.7]);
        assert_eq!(per.variables(&alpha), vec![0.2, 0.7]);
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let x = golden_min(0.0, 1.0, 1e-10, |x| (x - 0.3) * (x - 0.3));
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn zero_eta_targets_zero_error() {
        let inst = small(1);
        let alpha = Activation::constant(3, 2, 0.5);
        let (t, clamped) = target_error_probability(&inst, &alpha, 0, 0.0, Weights::balanced()).unwrap();
        assert_eq!(t, 0.0);
        assert!(!clamped);
    }

    #[test]
    fn large_eta_clamps_target() {
        let inst = small(1);
        let alpha = Activation::constant(3, 2, 0.5);
        let (t, clamped) = target_error_probability(&inst, &alpha, 0, 1e12, Weights::balanced()).unwrap();
        assert_eq!(t, 1.0);
        assert!(clamped);
    }

    #[test]
    fn zero_activation_makes_target_infeasible() {
        let inst = small(1);
        let alpha = Activation::constant(3, 2, 0.0);
        assert!(matches!(
            target_error_probability(&inst, &alpha, 0, 1.0, Weights::balanced()),
            Err(Error::InfeasibleTarget(_))
        ));
    }

    #[test]
    fn inversion_round_trip_and_edges() {
        let inst = small(2);
        let n = inst.schedule.attribute_at(0);
        let k = inst.topology.observers(n)[0];
        let alpha = Activation::constant(3, 2, 0.4);
        let at = |v: f64| {
            let mut al = alpha.clone();
            al.set(k, n, v);
            inst.slot_error(&al, 0)
        };
        let (v, pin) = invert_error_for_alpha(&inst, &alpha, k, n, at(0.0));
        assert_eq!(v, 0.0);
        assert_eq!(pin, None);
        let (v, pin) = invert_error_for_alpha(&inst, &alpha, k, n, at(1.0) * 0.5);
        assert_eq!(v, 1.0);
        assert_eq!(pin, Some(Pinned::Upper));
        let target = at(0.37);
        let (v, pin) = invert_error_for_alpha(&inst, &alpha, k, n, target);
        assert!(pin.is_none());
        assert!((at(v) - target).abs() < 1e-6);
    }

    #[test]
    fn grid_rejects_large_grids() {
        let inst = small(1);
        let err = grid_search_oracle(&inst, Tying::Full, Weights::balanced(), 1e-4).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }));
    }

    #[test]
    fn huge_usefulness_floor_is_infeasible() {
        let mut inst = small(1);
        inst.euu_min = 1e6;
        let g = grid_search_oracle(&inst, Tying::Global, Weights::balanced(), 0.01).unwrap();
        assert!(!g.is_feasible());
        assert!(tied_optimum(&inst, Weights::balanced(), 0.01).is_none());
        let cfg = OptimizerConfig {
            tying: Tying::Global,
            ..OptimizerConfig::default()
        };
        assert!(matches!(solve_algorithm1(&inst, &cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn tiny_floor_drives_activation_to_zero() {
        let mut inst = small(4);
        inst.euu_min = 1e-9;
        let cfg = OptimizerConfig {
            tying: Tying::Global,
            ..OptimizerConfig::default()
        };
        let sol = solve_algorithm1(&inst, &cfg).unwrap();
        assert!(sol.variables[0] < 0.02, "{:?}", sol.variables);
    }

    #[test]
    fn tied_solution_matches_grid() {
        let inst = small(5);
        let cfg = OptimizerConfig {
            tying: Tying::Global,
            weight_rule: WeightRule::Fixed,
            ..OptimizerConfig::default()
        };
        let sol = solve_algorithm1(&inst, &cfg).unwrap();
        let grid = grid_search_oracle(&inst, Tying::Global, sol.w_star, 0.01).unwrap();
        assert!(sol.objective <= grid.objective.unwrap() + 1e-3);
        assert!((sol.variables[0] - grid.variables.unwrap()[0]).abs() <= 0.02);
        assert!(sol.feasible);
        assert!(sol.is_tied(&inst));
    }

    #[test]
    fn linear_third_map_satisfies_curvature_condition() {
        // g3'' vanishes as kappa3 -> 0, so the left side of H6 vanishes
        let mut inst = small(6);
        inst.funcs.kappa[2] = 1e-12;
        let alpha = Activation::constant(3, 2, 0.5);
        let r = convexity_conditions(&inst, &alpha, Weights::balanced(), 1.0, 1e-4);
        assert!(r.h6);
    }
}
