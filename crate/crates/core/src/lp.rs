//! Optimal attacks by exact rational linear programming.
//!
//! The feasible set is the space of admissible `z = 0` elements `Q` for a
//! fixed mixture weight `p`: every block of `Q` sums to 1, `Q` satisfies a
//! chosen non-signalling constraint family, and `0 ≤ Q ≤ min(1, P/p)`
//! cellwise so that the complement `(P − p·Q)/(1 − p)` is a valid system
//! (the complement inherits the family from `P` and `Q` by linearity).
//!
//! The adversary's advantage `d(b₀) = ½(p·|b₀| + |bias_P − p·b₀|)` is a
//! convex piecewise-linear function of the hash bias `b₀` of `Q` at the
//! attacked input, so its maximum over the polytope is attained at an
//! endpoint of the feasible bias interval: one LP maximizes `b₀`, one
//! minimizes it, and the better endpoint wins. Everything — pivots,
//! bounds, reduced costs — is exact rational arithmetic; the solver uses
//! Bland's rule, so runs are deterministic and finite.

use num_traits::{Signed, ToPrimitive, Zero};

use crate::attack::{hash_bias, AttackPartition, HashFn};
use crate::bits::BitString;
use crate::boxes::{self, BoxSystem};
use crate::constraints::{self, FamilyKind, LinearConstraint};
use crate::rational::{int, to_frac_string, Rational};
use crate::Error;

/// Largest `n` solved without an explicit override (256 variables).
pub const LP_CAP: usize = 2;

// ---------------------------------------------------------------------------
// Problem representation
// ---------------------------------------------------------------------------

/// One equality row `coeffs · x = rhs`.
#[derive(Clone, Debug)]
pub struct LpRow {
    pub label: String,
    pub coeffs: Vec<Rational>,
    pub rhs: Rational,
}

/// `maximize objective · x  s.t.  rows, 0 ≤ x ≤ upper` (all bounds finite).
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    pub rows: Vec<LpRow>,
    pub upper: Vec<Rational>,
    pub objective: Vec<Rational>,
}

impl LinearProgram {
    /// Exact feasibility check of an assignment (used by tests and
    /// acceptance to validate solver output independently).
    pub fn feasible(&self, x: &[Rational]) -> bool {
        if x.len() != self.upper.len() {
            return false;
        }
        if x.iter().zip(&self.upper).any(|(v, u)| v.is_negative() || v > u) {
            return false;
        }
        self.rows.iter().all(|row| {
            row.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<Rational>() == row.rhs
        })
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// A solved program with its exact optimality certificate: the assignment
/// is primal feasible, `reduced_costs` are dual feasible for the final
/// basis (`≤ 0` at lower bounds, `≥ 0` at upper bounds, `0` on the basis),
/// and complementary slackness holds by construction.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub value: Rational,
    pub assignment: Vec<Rational>,
    /// Basic variable per tableau row.
    pub basis: Vec<usize>,
    /// Nonbasic-at-upper flags per variable.
    pub at_upper: Vec<bool>,
    pub reduced_costs: Vec<Rational>,
}

pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
}

// ---------------------------------------------------------------------------
// Exact bounded-variable simplex
// ---------------------------------------------------------------------------

/// A feasible basis for a program's equality system, reusable across
/// objectives (the attack solves many objectives over one feasible set).
pub struct FeasibleLp {
    nv: usize,
    upper: Vec<Option<Rational>>,
    /// `rows × nv` tableau `B⁻¹A` over the kept columns.
    t: Vec<Vec<Rational>>,
    /// Current values of the basic variables.
    beta: Vec<Rational>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
}

/// Iteration guard: Bland's rule terminates, so hitting this signals a
/// solver bug rather than a hard instance.
const MAX_PIVOTS: usize = 1_000_000;

impl FeasibleLp {
    /// Runs phase 2 for one objective from the current feasible basis.
    /// The final basis is kept, warm-starting the next objective.
    pub fn maximize(&mut self, objective: &[Rational]) -> Result<LpSolution, Error> {
        if objective.len() != self.nv {
            return Err(Error::SizeMismatch { expected: self.nv, got: objective.len() });
        }
        self.pivot_until_optimal(objective)?;
        let assignment = self.assignment();
        let reduced = self.reduced_costs(objective);
        Ok(LpSolution {
            value: objective.iter().zip(&assignment).map(|(c, v)| c * v).sum(),
            assignment,
            basis: self.basis.clone(),
            at_upper: self.at_upper.clone(),
            reduced_costs: reduced,
        })
    }

    fn assignment(&self) -> Vec<Rational> {
        let mut x: Vec<Rational> = self
            .at_upper
            .iter()
            .zip(&self.upper)
            .map(|(hi, u)| {
                if *hi {
                    u.clone().expect("at-upper variable has a finite bound")
                } else {
                    int(0)
                }
            })
            .collect();
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.beta[i].clone();
        }
        x
    }

    fn basic_flags(&self) -> Vec<bool> {
        let mut is_basic = vec![false; self.nv];
        for &b in &self.basis {
            is_basic[b] = true;
        }
        is_basic
    }

    fn reduced_cost(&self, objective: &[Rational], j: usize) -> Rational {
        let mut r = objective[j].clone();
        for (i, &b) in self.basis.iter().enumerate() {
            if !objective[b].is_zero() && !self.t[i][j].is_zero() {
                r -= &objective[b] * &self.t[i][j];
            }
        }
        r
    }

    fn reduced_costs(&self, objective: &[Rational]) -> Vec<Rational> {
        let is_basic = self.basic_flags();
        (0..self.nv)
            .map(|j| if is_basic[j] { int(0) } else { self.reduced_cost(objective, j) })
            .collect()
    }

    fn pivot_until_optimal(&mut self, objective: &[Rational]) -> Result<(), Error> {
        for _ in 0..MAX_PIVOTS {
            // Bland: smallest eligible column index, computed lazily.
            let is_basic = self.basic_flags();
            let entering = (0..self.nv).filter(|&j| !is_basic[j]).find(|&j| {
                let r = self.reduced_cost(objective, j);
                if self.at_upper[j] {
                    r.is_negative()
                } else {
                    r.is_positive()
                }
            });
            let Some(j) = entering else { return Ok(()) };
            self.step(j)?;
        }
        Err(Error::LpInternal("pivot limit exceeded".into()))
    }

    /// One simplex step: moves the entering variable `j` off its bound as
    /// far as the first blocking constraint allows, then either swaps its
    /// bound or pivots it into the basis.
    fn step(&mut self, j: usize) -> Result<(), Error> {
        // σ = +1 when entering rises from its lower bound.
        let sigma: i64 = if self.at_upper[j] { -1 } else { 1 };
        // Blocking candidates: (t, tie-break variable index, row or swap).
        let mut best: Option<(Rational, usize, Option<usize>)> = None;
        let mut consider = |t: Rational, var: usize, row: Option<usize>| {
            let better = match &best {
                None => true,
                Some((bt, bvar, _)) => t < *bt || (t == *bt && var < *bvar),
            };
            if better {
                best = Some((t, var, row));
            }
        };
        if let Some(u) = &self.upper[j] {
            consider(u.clone(), j, None);
        }
        for i in 0..self.t.len() {
            let step = int(sigma) * &self.t[i][j];
            if step.is_positive() {
                // Basic variable falls toward 0.
                consider(&self.beta[i] / &step, self.basis[i], Some(i));
            } else if step.is_negative() {
                // Basic variable rises toward its upper bound.
                if let Some(u) = &self.upper[self.basis[i]] {
                    consider((u - &self.beta[i]) / -step, self.basis[i], Some(i));
                }
            }
        }
        let Some((t, _, blocking_row)) = best else {
            return Err(Error::LpInternal(
                "unbounded direction in a bounded program".into(),
            ));
        };
        // Apply the move to the basic values.
        for i in 0..self.t.len() {
            if !self.t[i][j].is_zero() {
                let delta = int(sigma) * &self.t[i][j] * &t;
                self.beta[i] -= delta;
            }
        }
        match blocking_row {
            None => {
                // Bound swap: the entering variable crosses to its other
                // bound; the basis is unchanged.
                self.at_upper[j] = !self.at_upper[j];
            }
            Some(row) => {
                let leaving = self.basis[row];
                // The leaving variable lands on the bound it hit.
                let step = int(sigma) * &self.t[row][j];
                self.at_upper[leaving] = step.is_negative();
                // Entering variable's new value.
                let from = if self.at_upper[j] {
                    self.upper[j].clone().expect("at-upper variable has a finite bound")
                } else {
                    int(0)
                };
                self.beta[row] = from + int(sigma) * &t;
                self.basis[row] = j;
                self.at_upper[j] = false;
                // Gauss-Jordan pivot on (row, j). `beta` already holds the
                // post-move values, so only the tableau needs updating.
                let pivot = self.t[row][j].clone();
                for entry in &mut self.t[row] {
                    *entry /= &pivot;
                }
                let pivot_row = self.t[row].clone();
                for i in 0..self.t.len() {
                    if i != row && !self.t[i][j].is_zero() {
                        let factor = self.t[i][j].clone();
                        for (entry, p) in self.t[i].iter_mut().zip(&pivot_row) {
                            if !p.is_zero() {
                                *entry -= &factor * p;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reduces the equality system to full row rank by exact Gauss-Jordan
/// elimination; returns `(reduced rows, rhs)` or `None` on inconsistency.
fn row_reduce(rows: &[LpRow], nv: usize) -> Option<(Vec<Vec<Rational>>, Vec<Rational>)> {
    let mut mat: Vec<Vec<Rational>> = Vec::new();
    let mut rhs: Vec<Rational> = Vec::new();
    let mut pivot_col: Vec<usize> = Vec::new();
    for row in rows {
        let mut r = row.coeffs.clone();
        let mut b = row.rhs.clone();
        // Eliminate against existing pivots.
        for (k, &pc) in pivot_col.iter().enumerate() {
            if !r[pc].is_zero() {
                let factor = r[pc].clone();
                for (entry, other) in r.iter_mut().zip(&mat[k]) {
                    if !other.is_zero() {
                        *entry -= &factor * other;
                    }
                }
                b -= &factor * &rhs[k];
            }
        }
        let Some(lead) = (0..nv).find(|&c| !r[c].is_zero()) else {
            if b.is_zero() {
                continue; // redundant row
            }
            return None; // 0 = nonzero
        };
        // Normalize and back-substitute into earlier rows.
        let scale = r[lead].clone();
        for entry in &mut r {
            *entry /= &scale;
        }
        b /= &scale;
        for (k, row_k) in mat.iter_mut().enumerate() {
            if !row_k[lead].is_zero() {
                let factor = row_k[lead].clone();
                for (entry, new) in row_k.iter_mut().zip(&r) {
                    if !new.is_zero() {
                        *entry -= &factor * new;
                    }
                }
                rhs[k] -= &factor * &b;
            }
        }
        mat.push(r);
        rhs.push(b);
        pivot_col.push(lead);
    }
    Some((mat, rhs))
}

impl LinearProgram {
    /// Phase 1: finds a feasible basis with artificial variables, or
    /// reports infeasibility. The returned tableau carries only the real
    /// variables and can be re-optimized for many objectives.
    pub fn phase1(&self) -> Result<Option<FeasibleLp>, Error> {
        let nv = self.upper.len();
        for row in &self.rows {
            if row.coeffs.len() != nv {
                return Err(Error::SizeMismatch { expected: nv, got: row.coeffs.len() });
            }
        }
        let Some((mut mat, mut rhs)) = row_reduce(&self.rows, nv) else {
            return Ok(None);
        };
        // Artificial start: one artificial per row, b ≥ 0.
        let r = mat.len();
        for i in 0..r {
            if rhs[i].is_negative() {
                for entry in &mut mat[i] {
                    *entry = -entry.clone();
                }
                rhs[i] = -rhs[i].clone();
            }
        }
        let mut upper: Vec<Option<Rational>> =
            self.upper.iter().map(|u| Some(u.clone())).collect();
        upper.extend(std::iter::repeat_with(|| None).take(r));
        let mut t = mat;
        for (i, row) in t.iter_mut().enumerate() {
            row.extend((0..r).map(|k| int((k == i) as i64)));
        }
        let mut lp = FeasibleLp {
            nv: nv + r,
            upper,
            beta: rhs,
            t,
            basis: (nv..nv + r).collect(),
            at_upper: vec![false; nv + r],
        };
        let mut phase1_obj = vec![int(0); nv + r];
        for c in phase1_obj.iter_mut().skip(nv) {
            *c = int(-1);
        }
        lp.pivot_until_optimal(&phase1_obj)?;
        let infeasibility: Rational = lp
            .basis
            .iter()
            .zip(&lp.beta)
            .filter(|(b, _)| **b >= nv)
            .map(|(_, v)| v.clone())
            .sum();
        if !infeasibility.is_zero() {
            return Ok(None);
        }
        // Drive zero-valued artificials out of the basis; a real pivot
        // always exists because the rows are independent over the real
        // columns after reduction.
        for row in 0..lp.basis.len() {
            if lp.basis[row] < nv {
                continue;
            }
            let j = (0..nv)
                .find(|&j| !lp.t[row][j].is_zero())
                .ok_or_else(|| Error::LpInternal("zero row after reduction".into()))?;
            // Degenerate pivot at t = 0.
            let pivot = lp.t[row][j].clone();
            for entry in &mut lp.t[row] {
                *entry /= &pivot;
            }
            // The entering variable keeps its bound value 0 = beta.
            let entering_value = if lp.at_upper[j] {
                lp.upper[j].clone().expect("real bounds are finite")
            } else {
                int(0)
            };
            debug_assert!(lp.beta[row].is_zero());
            let pivot_row = lp.t[row].clone();
            for i in 0..lp.t.len() {
                if i != row && !lp.t[i][j].is_zero() {
                    let factor = lp.t[i][j].clone();
                    for (entry, p) in lp.t[i].iter_mut().zip(&pivot_row) {
                        if !p.is_zero() {
                            *entry -= &factor * p;
                        }
                    }
                }
            }
            lp.beta[row] = entering_value;
            lp.basis[row] = j;
            lp.at_upper[j] = false;
        }
        // Drop the artificial columns.
        for row in &mut lp.t {
            row.truncate(nv);
        }
        lp.upper.truncate(nv);
        lp.at_upper.truncate(nv);
        lp.nv = nv;
        Ok(Some(lp))
    }

    /// One-shot solve: phase 1 followed by phase 2 on `self.objective`.
    pub fn solve(&self) -> Result<LpOutcome, Error> {
        match self.phase1()? {
            None => Ok(LpOutcome::Infeasible),
            Some(mut feasible) => Ok(LpOutcome::Optimal(feasible.maximize(&self.objective)?)),
        }
    }
}

// ---------------------------------------------------------------------------
// The attack LP
// ---------------------------------------------------------------------------

fn render_var(n: usize, idx: usize) -> String {
    let word_bits = 2 * n;
    let in_word = (idx >> word_bits) as u32;
    let out_word = (idx & ((1 << word_bits) - 1)) as u32;
    let half = |word: u32, hi: bool| {
        BitString::new(n, if hi { word >> n } else { word & ((1 << n) - 1) }).to_string()
    };
    format!(
        "q_u{}_v{}_x{}_y{}",
        half(in_word, true),
        half(in_word, false),
        half(out_word, true),
        half(out_word, false)
    )
}

/// Materializes the feasibility system (everything except the objective)
/// for a source system, a chosen family and mixture weight `p`: candidate
/// cells `q` must form a normalized system satisfying the family plus the
/// two-party conditions, with `0 ≤ q ≤ min(1, P/p)` cellwise so that the
/// complement element stays nonnegative.
pub fn attack_program(
    sys: &BoxSystem,
    family: FamilyKind,
    p: &Rational,
    force: bool,
) -> Result<LinearProgram, Error> {
    let n = sys.n();
    if n > LP_CAP && !force {
        return Err(Error::CapExceeded {
            n,
            cap: LP_CAP,
            hint: format!("{} variables; pass force to solve anyway", boxes::cell_count(n)),
        });
    }
    if !(&int(0) < p && p < &int(1)) {
        return Err(Error::Domain(format!(
            "mixture weight p = {} outside (0, 1)",
            to_frac_string(p)
        )));
    }
    let nv = boxes::cell_count(n);
    let mut list: Vec<LinearConstraint> = constraints::generate(family, n)?;
    list.extend(constraints::generate(FamilyKind::AliceBob, n)?);
    let list = constraints::dedupe(list);
    // The complement element inherits the family from the source only if
    // the source satisfies it; insisting on that up front keeps the LP's
    // meaning honest.
    let premise = constraints::check_fast(sys, &list)?;
    if let Some(v) = premise.violations.first() {
        return Err(Error::Domain(format!(
            "source system violates {} ({} ≠ {}); the attack LP is only \
             meaningful over a family the source satisfies",
            v.label,
            to_frac_string(&v.left),
            to_frac_string(&v.right)
        )));
    }
    let mut rows = Vec::new();
    for in_word in 0..(1u32 << (2 * n)) {
        let mut coeffs = vec![int(0); nv];
        for out in 0..(1u32 << (2 * n)) {
            coeffs[boxes::idx_words(n, in_word, out)] = int(1);
        }
        let u = BitString::new(n, in_word >> n);
        let v = BitString::new(n, in_word & ((1 << n) - 1));
        rows.push(LpRow { label: format!("norm_u{u}_v{v}"), coeffs, rhs: int(1) });
    }
    for c in &list {
        let mut coeffs = vec![int(0); nv];
        for (coef, idx) in c.terms() {
            coeffs[idx] = coef;
        }
        rows.push(LpRow { label: c.label().to_string(), coeffs, rhs: int(0) });
    }
    let upper: Vec<Rational> = sys
        .cells()
        .iter()
        .map(|cell| {
            let capped = cell / p;
            if capped > int(1) {
                int(1)
            } else {
                capped
            }
        })
        .collect();
    Ok(LinearProgram {
        var_names: (0..nv).map(|idx| render_var(n, idx)).collect(),
        rows,
        upper,
        objective: vec![int(0); nv],
    })
}

/// The bias objective at one attacked input: `+1` on `f(x) = 0` cells of
/// the block, `−1` on `f(x) = 1` cells, `0` elsewhere.
pub fn bias_objective(n: usize, f: &HashFn, u: BitString, v: BitString) -> Vec<Rational> {
    let nv = boxes::cell_count(n);
    let in_word = (u.value() << n) | v.value();
    let mut obj = vec![int(0); nv];
    for x in 0..1u32 << n {
        let sign = if f.eval(x) { -1 } else { 1 };
        for y in 0..1u32 << n {
            obj[boxes::idx_words(n, in_word, (x << n) | y)] = int(sign);
        }
    }
    obj
}

/// An optimal attack found by the LP.
#[derive(Clone, Debug)]
pub struct LpAttack {
    pub f: HashFn,
    pub u: BitString,
    pub v: BitString,
    /// Feasible bias interval endpoints at the attacked input.
    pub bias_low: Rational,
    pub bias_high: Rational,
    /// Optimal advantage `max(d(bias_low), d(bias_high))`.
    pub d: Rational,
    pub partition: AttackPartition,
}

/// A reusable attack-LP context: the feasible set depends only on the
/// source system, family and weight, so one phase-1 run serves every
/// hash function, direction and attacked input.
pub struct AttackLp {
    sys: BoxSystem,
    program: LinearProgram,
    feasible: FeasibleLp,
    p: Rational,
}

impl AttackLp {
    /// Builds the feasibility context with mixture weight `p` (the row-shift
    /// construction's choice is ½; other weights are for exploration).
    pub fn new(sys: &BoxSystem, family: FamilyKind, p: &Rational, force: bool) -> Result<Self, Error> {
        let program = attack_program(sys, family, p, force)?;
        let feasible = program
            .phase1()?
            .ok_or_else(|| Error::LpInternal("source system itself is feasible, yet phase 1 failed".into()))?;
        Ok(Self { sys: sys.clone(), program, feasible, p: p.clone() })
    }

    pub fn program(&self) -> &LinearProgram {
        &self.program
    }

    /// `d(b₀) = ½(p·|b₀| + |bias_P − p·b₀|)`.
    fn advantage(&self, bias_p: &Rational, b0: &Rational) -> Rational {
        (&self.p * b0.abs() + (bias_p - &self.p * b0).abs()) / int(2)
    }

    /// Solves both bias directions for one hash function at one attacked
    /// input and returns the better endpoint (ties prefer the high end).
    pub fn optimize(&mut self, f: &HashFn, u: BitString, v: BitString) -> Result<LpAttack, Error> {
        let n = self.sys.n();
        if f.n() != n || u.len() != n || v.len() != n {
            return Err(Error::SizeMismatch { expected: n, got: f.n() });
        }
        let obj = bias_objective(n, f, u, v);
        let hi = self.feasible.maximize(&obj)?;
        let neg: Vec<Rational> = obj.iter().map(|c| -c.clone()).collect();
        let lo = self.feasible.maximize(&neg)?;
        debug_assert!(self.program.feasible(&hi.assignment));
        debug_assert!(self.program.feasible(&lo.assignment));
        let (bias_high, bias_low) = (hi.value.clone(), -lo.value.clone());
        let bias_p = hash_bias(&self.sys, f, u, v);
        let d_hi = self.advantage(&bias_p, &bias_high);
        let d_lo = self.advantage(&bias_p, &bias_low);
        let (d, winner) = if d_hi >= d_lo { (d_hi, hi) } else { (d_lo, lo) };
        let pz0 = BoxSystem::from_cells(n, winner.assignment)?;
        let pz1 = crate::attack::complement_element(&self.sys, &self.p, &pz0)?;
        Ok(LpAttack {
            f: *f,
            u,
            v,
            bias_low,
            bias_high,
            d,
            partition: AttackPartition { p: self.p.clone(), pz0, pz1 },
        })
    }
}

/// One-shot wrapper: optimal attack for a single hash function at weight
/// `p` (pass ½ to match the hand construction).
pub fn optimal_attack(
    sys: &BoxSystem,
    f: &HashFn,
    u: BitString,
    v: BitString,
    family: FamilyKind,
    p: &Rational,
    force: bool,
) -> Result<LpAttack, Error> {
    AttackLp::new(sys, family, p, force)?.optimize(f, u, v)
}

// ---------------------------------------------------------------------------
// Text export
// ---------------------------------------------------------------------------

fn approx(r: &Rational) -> String {
    match r.to_f64() {
        Some(v) => format!("{v}"),
        None => "0".into(),
    }
}

/// Renders a program in LP text format. Numeric literals are decimal
/// approximations (the format has no fractions); every row and bound
/// carries its exact rational values in a trailing comment.
pub fn lp_text(lp: &LinearProgram, title: &str) -> String {
    let mut out = String::new();
    let push = |out: &mut String, s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    push(&mut out, format!("\\ {title}"));
    push(
        &mut out,
        "\\ coefficients are decimal approximations; exact values in comments".to_string(),
    );
    push(&mut out, "Maximize".into());
    let mut obj_terms = String::new();
    let mut obj_exact = String::new();
    for (j, c) in lp.objective.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let sign = if c.is_negative() { "-" } else { "+" };
        obj_terms.push_str(&format!(" {sign} {} {}", approx(&c.abs()), lp.var_names[j]));
        obj_exact.push_str(&format!(" {sign} {} {}", to_frac_string(&c.abs()), lp.var_names[j]));
    }
    if obj_terms.is_empty() {
        obj_terms = format!(" 0 {}", lp.var_names.first().map_or("x0", |s| s.as_str()));
        obj_exact = " 0".into();
    }
    push(&mut out, format!(" obj:{obj_terms}"));
    push(&mut out, format!("\\ exact:{obj_exact}"));
    push(&mut out, "Subject To".into());
    for (i, row) in lp.rows.iter().enumerate() {
        let mut terms = String::new();
        let mut exact = String::new();
        for (j, c) in row.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let sign = if c.is_negative() { "-" } else { "+" };
            terms.push_str(&format!(" {sign} {} {}", approx(&c.abs()), lp.var_names[j]));
            exact.push_str(&format!(" {sign} {} {}", to_frac_string(&c.abs()), lp.var_names[j]));
        }
        push(&mut out, format!(" r{i}:{terms} = {}", approx(&row.rhs)));
        push(
            &mut out,
            format!("\\ r{i} ({}) exact:{exact} = {}", row.label, to_frac_string(&row.rhs)),
        );
    }
    push(&mut out, "Bounds".into());
    for (j, u) in lp.upper.iter().enumerate() {
        push(&mut out, format!(" 0 <= {} <= {}", lp.var_names[j], approx(u)));
        push(&mut out, format!("\\ exact: 0 <= {} <= {}", lp.var_names[j], to_frac_string(u)));
    }
    push(&mut out, "End".into());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack;
    use crate::rational::rat;

    fn bs(len: usize, val: u32) -> BitString {
        BitString::new(len, val)
    }

    fn solution(lp: &LinearProgram) -> LpSolution {
        match lp.solve().unwrap() {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible => panic!("unexpectedly infeasible"),
        }
    }

    /// Exact optimality certificate: primal feasible + dual feasible.
    fn assert_certified(lp: &LinearProgram, sol: &LpSolution, objective: &[Rational]) {
        assert!(lp.feasible(&sol.assignment));
        assert_eq!(
            objective.iter().zip(&sol.assignment).map(|(c, v)| c * v).sum::<Rational>(),
            sol.value
        );
        let mut is_basic = vec![false; sol.at_upper.len()];
        for &b in &sol.basis {
            is_basic[b] = true;
        }
        for (j, r) in sol.reduced_costs.iter().enumerate() {
            if is_basic[j] {
                assert!(r.is_zero(), "basic reduced cost nonzero at {j}");
            } else if sol.at_upper[j] {
                assert!(!r.is_negative(), "upper-bound reduced cost negative at {j}");
            } else {
                assert!(!r.is_positive(), "lower-bound reduced cost positive at {j}");
            }
        }
    }

    #[test]
    fn textbook_program() {
        // max 3x + 2y  s.t.  x + y = 4, x ≤ 3, y ≤ 3  →  x = 3, y = 1.
        let lp = LinearProgram {
            var_names: vec!["x".into(), "y".into()],
            rows: vec![LpRow {
                label: "sum".into(),
                coeffs: vec![int(1), int(1)],
                rhs: int(4),
            }],
            upper: vec![int(3), int(3)],
            objective: vec![int(3), int(2)],
        };
        let sol = solution(&lp);
        assert_eq!(sol.value, int(11));
        assert_eq!(sol.assignment, vec![int(3), int(1)]);
        assert_certified(&lp, &sol, &lp.objective);
    }

    #[test]
    fn infeasible_program() {
        let lp = LinearProgram {
            var_names: vec!["x".into(), "y".into()],
            rows: vec![LpRow {
                label: "sum".into(),
                coeffs: vec![int(1), int(1)],
                rhs: int(10),
            }],
            upper: vec![int(3), int(3)],
            objective: vec![int(1), int(0)],
        };
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Infeasible));
    }

    #[test]
    fn redundant_and_fixed_variables() {
        // Duplicate rows are dropped; a zero upper bound pins x = 0.
        let lp = LinearProgram {
            var_names: vec!["x".into(), "y".into(), "z".into()],
            rows: vec![
                LpRow { label: "a".into(), coeffs: vec![int(1), int(1), int(1)], rhs: int(2) },
                LpRow { label: "b".into(), coeffs: vec![int(2), int(2), int(2)], rhs: int(4) },
            ],
            upper: vec![int(0), int(2), int(2)],
            objective: vec![int(5), int(1), int(0)],
        };
        let sol = solution(&lp);
        assert_eq!(sol.assignment[0], int(0));
        assert_eq!(sol.value, int(2));
        assert_certified(&lp, &sol, &lp.objective);
    }

    #[test]
    fn zero_objective_returns_any_feasible_point() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let lp = attack_program(&sys, FamilyKind::AliceBob, &rat(1, 2), false).unwrap();
        let sol = solution(&lp);
        assert!(sol.value.is_zero());
        assert!(lp.feasible(&sol.assignment));
    }

    #[test]
    fn source_system_is_always_feasible() {
        let sys = BoxSystem::product_system(&rat(1, 5), 2).unwrap();
        for family in [FamilyKind::Full, FamilyKind::PairwiseBox, FamilyKind::AliceBob] {
            let lp = attack_program(&sys, family, &rat(1, 2), false).unwrap();
            assert!(lp.feasible(sys.cells()), "{family:?}");
        }
    }

    #[test]
    fn single_cell_objective_hits_its_cap() {
        // Maximizing one cell subject only to normalization pushes it to
        // its upper bound min(1, P.cell/p), here with p = ½.
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let n = 1;
        let nv = boxes::cell_count(n);
        let rows: Vec<LpRow> = (0..4u32)
            .map(|in_word| {
                let mut coeffs = vec![int(0); nv];
                for out in 0..4u32 {
                    coeffs[boxes::idx_words(n, in_word, out)] = int(1);
                }
                LpRow { label: format!("norm{in_word}"), coeffs, rhs: int(1) }
            })
            .collect();
        let upper: Vec<Rational> = sys
            .cells()
            .iter()
            .map(|cell| std::cmp::min(int(1), int(2) * cell))
            .collect();
        let mut lp = LinearProgram {
            var_names: (0..nv).map(|i| format!("q{i}")).collect(),
            rows,
            upper,
            objective: vec![int(0); nv],
        };
        // Winning cell 9/20 → capped at 9/10; losing cell 1/20 → 1/10.
        for (idx, expect) in [
            (boxes::idx_words(n, 0b00, 0b00), rat(9, 10)),
            (boxes::idx_words(n, 0b00, 0b01), rat(1, 10)),
        ] {
            lp.objective = vec![int(0); nv];
            lp.objective[idx] = int(1);
            let sol = solution(&lp);
            assert_eq!(sol.value, expect);
            assert_certified(&lp, &sol, &lp.objective);
        }
        // A perfect-box cell (mass ½) is capped by 1, not by 2·cell.
        let pr = BoxSystem::pr_box();
        let lp2 = attack_program(&pr, FamilyKind::AliceBob, &rat(1, 2), false).unwrap();
        assert_eq!(lp2.upper[boxes::idx_words(n, 0b00, 0b00)], int(1));
    }

    #[test]
    fn premise_violation_is_rejected() {
        // The steering example breaks full non-signalling, so the LP over
        // the full family must refuse it.
        let sys = BoxSystem::example_not_full_ns();
        match attack_program(&sys, FamilyKind::Full, &rat(1, 2), false) {
            Err(Error::Domain(msg)) => assert!(msg.contains("full-ns")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn weight_domain_is_enforced() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        for p in [int(0), int(1), rat(3, 2), rat(-1, 2)] {
            assert!(
                matches!(
                    attack_program(&sys, FamilyKind::AliceBob, &p, false),
                    Err(Error::Domain(_))
                ),
                "p = {p}"
            );
        }
    }

    #[test]
    fn constant_function_reaches_one_half() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let mut ctx = AttackLp::new(&sys, FamilyKind::AliceBob, &rat(1, 2), false).unwrap();
        let f = HashFn::named("const0", 1).unwrap();
        let result = ctx.optimize(&f, bs(1, 0), bs(1, 0)).unwrap();
        // b₀ = 1 identically: d = ½(½·1 + |1 − ½|) = ½.
        assert_eq!(result.bias_high, int(1));
        assert_eq!(result.bias_low, int(1));
        assert_eq!(result.d, rat(1, 2));
    }

    #[test]
    fn lp_dominates_construction_and_trivial_at_n1() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let mut ctx = AttackLp::new(&sys, FamilyKind::PairwiseBox, &rat(1, 2), false).unwrap();
        for f in HashFn::all(1) {
            let best =
                attack::best_attack(&sys, &f, bs(1, 0), bs(1, 0), FamilyKind::PairwiseBox)
                    .unwrap();
            let optimal = ctx.optimize(&f, bs(1, 0), bs(1, 0)).unwrap();
            assert!(optimal.d >= best.d, "f = {f}: {} < {}", optimal.d, best.d);
            assert!(optimal.partition.reconstructs(&sys));
        }
    }

    #[test]
    fn family_monotonicity_at_n1() {
        // More constraints → smaller feasible set → no larger optimum.
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let half = rat(1, 2);
        let mut full = AttackLp::new(&sys, FamilyKind::Full, &half, false).unwrap();
        let mut pw_ab = AttackLp::new(&sys, FamilyKind::PairwiseBox, &half, false).unwrap();
        let mut ab = AttackLp::new(&sys, FamilyKind::AliceBob, &half, false).unwrap();
        for f in HashFn::all(1) {
            let d_full = full.optimize(&f, bs(1, 0), bs(1, 0)).unwrap().d;
            let d_pw = pw_ab.optimize(&f, bs(1, 0), bs(1, 0)).unwrap().d;
            let d_ab = ab.optimize(&f, bs(1, 0), bs(1, 0)).unwrap().d;
            assert!(d_full <= d_pw, "f = {f}");
            assert!(d_pw <= d_ab, "f = {f}");
        }
    }

    #[test]
    fn identity_worked_example_lower_bound() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let f = HashFn::named("identity", 1).unwrap();
        let result = optimal_attack(
            &sys,
            &f,
            bs(1, 0),
            bs(1, 0),
            FamilyKind::PairwiseBox,
            &rat(1, 2),
            false,
        )
        .unwrap();
        assert!(result.d >= rat(1, 10));
        assert!(result.d <= rat(1, 2));
    }

    #[test]
    fn other_weights_solve_too() {
        // The weight is exploratory: any p in (0, 1) must yield a valid
        // partition; p = ½ can only be matched or beaten in b₀-bias by
        // smaller p (looser cap), while d need not improve.
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let f = HashFn::named("identity", 1).unwrap();
        for p in [rat(1, 3), rat(2, 3), rat(9, 10)] {
            let result =
                optimal_attack(&sys, &f, bs(1, 0), bs(1, 0), FamilyKind::PairwiseBox, &p, false)
                    .unwrap();
            assert!(result.partition.reconstructs(&sys), "p = {p}");
            assert_eq!(result.partition.p, p);
            assert!(result.d <= rat(1, 2));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 5)).unwrap();
        let f = HashFn::named("identity", 1).unwrap();
        let run = || {
            let mut ctx = AttackLp::new(&sys, FamilyKind::AliceBob, &rat(1, 2), false).unwrap();
            let r = ctx.optimize(&f, bs(1, 0), bs(1, 0)).unwrap();
            (r.d, r.bias_low, r.bias_high, r.partition.pz0.cells().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cap_requires_force() {
        let sys = BoxSystem::product_system(&rat(1, 10), 3).unwrap();
        assert!(matches!(
            attack_program(&sys, FamilyKind::AliceBob, &rat(1, 2), false),
            Err(Error::CapExceeded { n: 3, cap: LP_CAP, .. })
        ));
    }

    #[test]
    fn lp_text_has_exact_comments() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let mut lp = attack_program(&sys, FamilyKind::AliceBob, &rat(1, 2), false).unwrap();
        let f = HashFn::named("identity", 1).unwrap();
        lp.objective = bias_objective(1, &f, bs(1, 0), bs(1, 0));
        let text = lp_text(&lp, "single-box attack");
        assert!(text.starts_with("\\ single-box attack"));
        assert!(text.contains("Maximize"));
        assert!(text.contains("Subject To"));
        assert!(text.contains("Bounds"));
        assert!(text.contains("q_u0_v0_x0_y0"));
        // Exact upper bound (9/20)/(1/2) = 9/10 appears in a comment.
        assert!(text.contains("<= 9/10"));
        assert!(text.ends_with("End\n"));
    }
}
