//! Non-signalling constraint families as exact linear equalities, plus an
//! exact implication decision between families.
//!
//! Every family member is a *marginal difference*: a sum of cells over some
//! output group, with the remaining outputs fixed, compared between two
//! input assignments. All coefficients are ±1, and the generators emit the
//! complete quantifier range of the defining condition (both orders of each
//! input pair, hence "signed equalities"); [`dedupe`] removes sign flips.
//!
//! Word/mask convention: inputs `u‖v` and outputs `x‖y` pack into `2n`-bit
//! words (Alice's box `i` at bit `2n-1-i`, Bob's at `n-1-i`, 0-based), so an
//! *interface* — one box's input or output slot — is a single bit position
//! shared by both words. The canonical cell index is `(in_word, out_word)`
//! in row-major order, matching [`crate::boxes::cell_index`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{Signed, Zero};

use crate::boxes::{self, BoxSystem, MAX_BOXES};
use crate::rational::{int, Rational};
use crate::Error;

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

/// The built-in constraint families, ordered from strongest to weakest-ish;
/// the true implication order is decided by [`implies`], not by this enum.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum FamilyKind {
    /// Full non-signalling among all `2n` interfaces: flipping any single
    /// interface's input leaves the joint distribution of all other
    /// outputs unchanged.
    Full,
    /// Two-party non-signalling: Alice's whole input block cannot signal
    /// to Bob and vice versa.
    AliceBob,
    /// Per-side suffix non-signalling: for each cut, later boxes of one
    /// side cannot signal to that side's earlier boxes (the other side's
    /// outputs all stay fixed).
    Backward,
    /// Joint suffix non-signalling: later box pairs (both sides' inputs
    /// flipped jointly) cannot signal to the earlier pairs.
    AlmostBackward,
    /// Per-pair non-signalling: each box pair's inputs cannot signal to
    /// the other pairs' outputs.
    PairwiseBox,
    /// Per-party sequential non-signalling, stated on one party's marginal
    /// and lifted to the joint table at the other party's all-zero input.
    PerPartySequential,
}

impl FamilyKind {
    /// Command-line name of the family.
    pub fn cli_name(&self) -> &'static str {
        match self {
            FamilyKind::Full => "full",
            FamilyKind::AliceBob => "ab",
            FamilyKind::Backward => "backward",
            FamilyKind::AlmostBackward => "almost-backward",
            FamilyKind::PairwiseBox => "pairwise-box",
            FamilyKind::PerPartySequential => "per-party",
        }
    }

    pub fn parse(name: &str) -> Result<Self, Error> {
        match name.trim() {
            "full" => Ok(FamilyKind::Full),
            "ab" => Ok(FamilyKind::AliceBob),
            "backward" => Ok(FamilyKind::Backward),
            "almost-backward" => Ok(FamilyKind::AlmostBackward),
            "pairwise-box" => Ok(FamilyKind::PairwiseBox),
            "per-party" => Ok(FamilyKind::PerPartySequential),
            other => Err(Error::Parse(format!(
                "unknown family `{other}` (expected full, ab, backward, \
                 almost-backward, pairwise-box or per-party)"
            ))),
        }
    }

    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::Full,
        FamilyKind::AliceBob,
        FamilyKind::Backward,
        FamilyKind::AlmostBackward,
        FamilyKind::PairwiseBox,
        FamilyKind::PerPartySequential,
    ];
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.cli_name())
    }
}

/// A family instantiated at a fixed system size.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ConstraintFamily {
    pub kind: FamilyKind,
    pub n: usize,
}

impl ConstraintFamily {
    pub fn new(kind: FamilyKind, n: usize) -> Self {
        Self { kind, n }
    }

    pub fn constraints(&self) -> Result<Vec<LinearConstraint>, Error> {
        generate(self.kind, self.n)
    }
}

// ---------------------------------------------------------------------------
// Linear constraints
// ---------------------------------------------------------------------------

/// A marginal-difference equality: the sum of `P(out | in)` over the output
/// group `sum_mask`, with the remaining outputs fixed to `fixed_out`, is
/// equal at the two input words `in1` and `in2`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct MarginalDiff {
    pub in1: u32,
    pub in2: u32,
    /// Output bits summed over (the group `F`).
    pub sum_mask: u32,
    /// Values of the remaining output bits (zero on `sum_mask` positions).
    pub fixed_out: u32,
}

#[derive(Clone, Debug)]
enum Body {
    Marginal(MarginalDiff),
    Explicit(Vec<(Rational, usize)>),
}

/// One exact linear equality over a system's cells (`Σ coeff·cell = 0`).
#[derive(Clone, Debug)]
pub struct LinearConstraint {
    n: usize,
    label: String,
    body: Body,
}

impl LinearConstraint {
    /// Builds a marginal-difference constraint with a provenance label.
    pub fn marginal_diff(n: usize, label: String, d: MarginalDiff) -> Result<Self, Error> {
        let w = 2 * n;
        let word_mask = word_mask(n);
        if n == 0 || n > MAX_BOXES {
            return Err(Error::Domain(format!("n = {n} outside 1..={MAX_BOXES}")));
        }
        if d.in1 > word_mask || d.in2 > word_mask || d.sum_mask > word_mask || d.fixed_out > word_mask
        {
            return Err(Error::Domain(format!(
                "constraint words exceed {w} bits for `{label}`"
            )));
        }
        if d.in1 == d.in2 {
            return Err(Error::Domain(format!("trivial constraint (in1 = in2) `{label}`")));
        }
        if d.fixed_out & d.sum_mask != 0 {
            return Err(Error::Domain(format!(
                "fixed outputs overlap the summed group in `{label}`"
            )));
        }
        Ok(Self { n, label, body: Body::Marginal(d) })
    }

    /// Builds an explicit constraint from a term list (custom constraints).
    pub fn explicit(n: usize, label: String, terms: Vec<(Rational, usize)>) -> Result<Self, Error> {
        if n == 0 || n > MAX_BOXES {
            return Err(Error::Domain(format!("n = {n} outside 1..={MAX_BOXES}")));
        }
        let cells = boxes::cell_count(n);
        for (_, idx) in &terms {
            if *idx >= cells {
                return Err(Error::Domain(format!(
                    "term index {idx} out of range for n = {n} in `{label}`"
                )));
            }
        }
        Ok(Self { n, label, body: Body::Explicit(terms) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The marginal-difference structure, when this constraint has one.
    pub fn marginal(&self) -> Option<&MarginalDiff> {
        match &self.body {
            Body::Marginal(d) => Some(d),
            Body::Explicit(_) => None,
        }
    }

    /// Input bits that differ between the two compared input words.
    pub fn flipped_inputs(&self) -> Option<u32> {
        self.marginal().map(|d| d.in1 ^ d.in2)
    }

    /// Output bits summed over.
    pub fn summed_outputs(&self) -> Option<u32> {
        self.marginal().map(|d| d.sum_mask)
    }

    /// Expands to the canonical term list (`Σ coeff·cell = 0`), sorted by
    /// cell index with like terms combined and zeros dropped.
    pub fn terms(&self) -> Vec<(Rational, usize)> {
        let mut map: BTreeMap<usize, Rational> = BTreeMap::new();
        match &self.body {
            Body::Marginal(d) => {
                for s in submasks(d.sum_mask) {
                    let out = d.fixed_out | s;
                    *map.entry(boxes::idx_words(self.n, d.in1, out)).or_insert_with(|| int(0)) +=
                        int(1);
                    *map.entry(boxes::idx_words(self.n, d.in2, out)).or_insert_with(|| int(0)) -=
                        int(1);
                }
            }
            Body::Explicit(terms) => {
                for (c, idx) in terms {
                    *map.entry(*idx).or_insert_with(|| int(0)) += c;
                }
            }
        }
        map.into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(idx, c)| (c, idx))
            .collect()
    }

    /// Evaluates both sides on a system: `(left, right)` with the equality
    /// holding iff the two are equal.
    pub fn evaluate(&self, sys: &BoxSystem) -> (Rational, Rational) {
        match &self.body {
            Body::Marginal(d) => {
                let side = |in_word: u32| -> Rational {
                    submasks(d.sum_mask)
                        .map(|s| sys.cell_words(in_word, d.fixed_out | s))
                        .sum()
                };
                (side(d.in1), side(d.in2))
            }
            Body::Explicit(terms) => {
                let mut left = int(0);
                let mut right = int(0);
                for (c, idx) in terms {
                    if c.is_negative() {
                        right -= c * &sys.cells()[*idx];
                    } else {
                        left += c * &sys.cells()[*idx];
                    }
                }
                (left, right)
            }
        }
    }
}

pub(crate) fn word_mask(n: usize) -> u32 {
    (1u32 << (2 * n)) - 1
}

/// Selects one box's bit inside a packed word, per side.
type BitOf = fn(usize, usize) -> u32;

/// Bit of Alice's box `i` (0-based) inside a packed `u‖v` or `x‖y` word.
pub(crate) fn alice_bit(n: usize, i: usize) -> u32 {
    1 << (2 * n - 1 - i)
}

/// Bit of Bob's box `i` (0-based).
pub(crate) fn bob_bit(n: usize, i: usize) -> u32 {
    1 << (n - 1 - i)
}

pub(crate) fn alice_mask(n: usize) -> u32 {
    ((1u32 << n) - 1) << n
}

pub(crate) fn bob_mask(n: usize) -> u32 {
    (1u32 << n) - 1
}

/// Enumerates all submasks of `mask`, descending, including `mask` and 0.
fn submasks(mask: u32) -> impl Iterator<Item = u32> {
    std::iter::successors(Some(mask), move |&s| {
        if s == 0 {
            None
        } else {
            Some((s - 1) & mask)
        }
    })
}

/// Enumerates all words whose bits on `mask` are zero (assignments of the
/// complement), ascending.
fn complement_assignments(n: usize, mask: u32) -> Vec<u32> {
    let full = word_mask(n);
    let complement = full & !mask;
    let mut out: Vec<u32> = submasks(complement).collect();
    out.sort_unstable();
    out
}

// ---------------------------------------------------------------------------
// Label rendering
// ---------------------------------------------------------------------------

fn render_outputs(n: usize, sum_mask: u32, fixed: u32) -> String {
    let mut x = String::new();
    let mut y = String::new();
    for i in 0..n {
        let (ab, bb) = (alice_bit(n, i), bob_bit(n, i));
        x.push(if sum_mask & ab != 0 {
            '*'
        } else if fixed & ab != 0 {
            '1'
        } else {
            '0'
        });
        y.push(if sum_mask & bb != 0 {
            '*'
        } else if fixed & bb != 0 {
            '1'
        } else {
            '0'
        });
    }
    format!("x={x} y={y}")
}

fn render_inputs(n: usize, in1: u32, in2: u32) -> String {
    let part = |word: u32, alice: bool| -> String {
        (0..n)
            .map(|i| {
                let bit = if alice { alice_bit(n, i) } else { bob_bit(n, i) };
                if word & bit != 0 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    };
    let (u1, u2) = (part(in1, true), part(in2, true));
    let (v1, v2) = (part(in1, false), part(in2, false));
    let u = if u1 == u2 { format!("u={u1}") } else { format!("u={u1}->{u2}") };
    let v = if v1 == v2 { format!("v={v1}") } else { format!("v={v1}->{v2}") };
    format!("{u} {v}")
}

fn label_for(n: usize, head: &str, d: &MarginalDiff) -> String {
    format!(
        "{head}: {} | {}",
        render_outputs(n, d.sum_mask, d.fixed_out),
        render_inputs(n, d.in1, d.in2)
    )
}

fn push_constraint(
    out: &mut Vec<LinearConstraint>,
    n: usize,
    head: &str,
    d: MarginalDiff,
) {
    let label = label_for(n, head, &d);
    out.push(LinearConstraint::marginal_diff(n, label, d).expect("generator emits valid words"));
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Generates the complete constraint list of a family at size `n`.
/// Deterministic order; input pairs appear in both orders (sign flips),
/// which [`dedupe`] removes.
pub fn generate(kind: FamilyKind, n: usize) -> Result<Vec<LinearConstraint>, Error> {
    if n == 0 || n > MAX_BOXES {
        return Err(Error::Domain(format!("n = {n} outside 1..={MAX_BOXES}")));
    }
    let mut out = Vec::new();
    match kind {
        FamilyKind::Full => {
            // One interface at a time: flip its input, fix every other
            // interface's output, sum that interface's own output.
            let sides: [(char, BitOf); 2] = [('A', alice_bit), ('B', bob_bit)];
            for (head_char, bit_of) in sides {
                for i in 0..n {
                    let bit = bit_of(n, i);
                    let head = format!("full-ns[{head_char}{}]", i + 1);
                    for fixed in complement_assignments(n, bit) {
                        for in1 in 0..=word_mask(n) {
                            push_constraint(
                                &mut out,
                                n,
                                &head,
                                MarginalDiff { in1, in2: in1 ^ bit, sum_mask: bit, fixed_out: fixed },
                            );
                        }
                    }
                }
            }
        }
        FamilyKind::AliceBob => {
            // Alice's input block cannot signal to Bob: fix y, sum all x,
            // compare any two whole-u assignments (and symmetrically).
            for (head, sum, flip_region) in [
                ("alice-bob[a->b]", alice_mask(n), alice_mask(n)),
                ("alice-bob[b->a]", bob_mask(n), bob_mask(n)),
            ] {
                for fixed in complement_assignments(n, sum) {
                    for in1 in 0..=word_mask(n) {
                        for delta in submasks(flip_region) {
                            if delta == 0 {
                                continue;
                            }
                            push_constraint(
                                &mut out,
                                n,
                                head,
                                MarginalDiff { in1, in2: in1 ^ delta, sum_mask: sum, fixed_out: fixed },
                            );
                        }
                    }
                }
            }
        }
        FamilyKind::Backward => {
            // Cut after `cut` boxes (1-based cut position i = cut+1, so
            // i ranges over 2..=n): on one side, the suffix inputs cannot
            // signal to that side's prefix outputs, with the entire other
            // side's outputs fixed.
            for cut in 1..n {
                for alice_side in [true, false] {
                    let suffix_out: u32 = (cut..n)
                        .map(|i| if alice_side { alice_bit(n, i) } else { bob_bit(n, i) })
                        .fold(0, |a, b| a | b);
                    let suffix_in = suffix_out;
                    let head = format!(
                        "backward[{},i={}]",
                        if alice_side { "alice" } else { "bob" },
                        cut + 1
                    );
                    for fixed in complement_assignments(n, suffix_out) {
                        for in1 in 0..=word_mask(n) {
                            for delta in submasks(suffix_in) {
                                if delta == 0 {
                                    continue;
                                }
                                push_constraint(
                                    &mut out,
                                    n,
                                    &head,
                                    MarginalDiff {
                                        in1,
                                        in2: in1 ^ delta,
                                        sum_mask: suffix_out,
                                        fixed_out: fixed,
                                    },
                                );
                            }
                        }
                    }
                }
            }
        }
        FamilyKind::AlmostBackward => {
            // Joint form: both sides' suffix inputs flip together, both
            // sides' suffix outputs are summed, prefix outputs fixed.
            for cut in 1..n {
                let suffix: u32 = (cut..n)
                    .map(|i| alice_bit(n, i) | bob_bit(n, i))
                    .fold(0, |a, b| a | b);
                let head = format!("almost-backward[i={}]", cut + 1);
                for fixed in complement_assignments(n, suffix) {
                    for in1 in 0..=word_mask(n) {
                        for delta in submasks(suffix) {
                            if delta == 0 {
                                continue;
                            }
                            push_constraint(
                                &mut out,
                                n,
                                &head,
                                MarginalDiff { in1, in2: in1 ^ delta, sum_mask: suffix, fixed_out: fixed },
                            );
                        }
                    }
                }
            }
        }
        FamilyKind::PairwiseBox => {
            // Box pair i's inputs cannot signal to the other pairs: sum
            // over (x_i, y_i), fix all other outputs, flip u_i or v_i.
            for i in 0..n {
                let pair_out = alice_bit(n, i) | bob_bit(n, i);
                for (head_side, flip) in [("u", alice_bit(n, i)), ("v", bob_bit(n, i))] {
                    let head = format!("pairwise-box[{head_side}{}]", i + 1);
                    for fixed in complement_assignments(n, pair_out) {
                        for in1 in 0..=word_mask(n) {
                            push_constraint(
                                &mut out,
                                n,
                                &head,
                                MarginalDiff { in1, in2: in1 ^ flip, sum_mask: pair_out, fixed_out: fixed },
                            );
                        }
                    }
                }
            }
        }
        FamilyKind::PerPartySequential => {
            // Stated on one party's marginal; lifted to the joint table by
            // fixing the other party's input to all zeros and summing all
            // of its outputs (sound whenever the two-party conditions are
            // also imposed, which `check_family` guarantees).
            for i in 0..n {
                // Alice's side: flip u_i, sum x_i and all of y, v = 0…0.
                let head = format!("per-party[alice,u{}]", i + 1);
                let sum = alice_bit(n, i) | bob_mask(n);
                for fixed in complement_assignments(n, sum) {
                    for u in 0..(1u32 << n) {
                        let in1 = u << n;
                        push_constraint(
                            &mut out,
                            n,
                            &head,
                            MarginalDiff {
                                in1,
                                in2: in1 ^ alice_bit(n, i),
                                sum_mask: sum,
                                fixed_out: fixed,
                            },
                        );
                    }
                }
                // Bob's side: flip v_i, sum y_i and all of x, u = 0…0.
                let head = format!("per-party[bob,v{}]", i + 1);
                let sum = bob_bit(n, i) | alice_mask(n);
                for fixed in complement_assignments(n, sum) {
                    for v in 0..(1u32 << n) {
                        let in1 = v;
                        push_constraint(
                            &mut out,
                            n,
                            &head,
                            MarginalDiff {
                                in1,
                                in2: in1 ^ bob_bit(n, i),
                                sum_mask: sum,
                                fixed_out: fixed,
                            },
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The joint-flip variant of the pairwise-box family: both inputs of box
/// pair `i` change together (to any other joint value). Equivalent in span
/// to [`FamilyKind::PairwiseBox`]; kept as a separate generator so the
/// equivalence is testable.
pub fn pairwise_joint_form(n: usize) -> Result<Vec<LinearConstraint>, Error> {
    if n == 0 || n > MAX_BOXES {
        return Err(Error::Domain(format!("n = {n} outside 1..={MAX_BOXES}")));
    }
    let mut out = Vec::new();
    for i in 0..n {
        let pair_out = alice_bit(n, i) | bob_bit(n, i);
        let pair_in = pair_out;
        let head = format!("pairwise-box-joint[{}]", i + 1);
        for fixed in complement_assignments(n, pair_out) {
            for in1 in 0..=word_mask(n) {
                for delta in submasks(pair_in) {
                    if delta == 0 {
                        continue;
                    }
                    push_constraint(
                        &mut out,
                        n,
                        &head,
                        MarginalDiff { in1, in2: in1 ^ delta, sum_mask: pair_out, fixed_out: fixed },
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Full non-signalling restricted to Bob's interfaces: flip one `v_i`,
/// sum `y_i` alone, fix everything else including all of Alice's outputs.
pub fn full_ns_bob_side(n: usize) -> Result<Vec<LinearConstraint>, Error> {
    Ok(generate(FamilyKind::Full, n)?
        .into_iter()
        .filter(|c| {
            c.flipped_inputs()
                .map(|f| f & bob_mask(n) != 0)
                .unwrap_or(false)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Checking
// ---------------------------------------------------------------------------

/// One violated equality, with both exactly evaluated sides.
#[derive(Clone, Debug)]
pub struct Violation {
    pub index: usize,
    pub label: String,
    pub left: Rational,
    pub right: Rational,
}

/// Outcome of checking a constraint list against a system.
#[derive(Clone, Debug)]
pub struct ViolationReport {
    /// Number of constraints evaluated.
    pub total: usize,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates every constraint exactly; any nonzero defect is a violation.
pub fn check(sys: &BoxSystem, constraints: &[LinearConstraint]) -> Result<ViolationReport, Error> {
    let mut violations = Vec::new();
    for (index, c) in constraints.iter().enumerate() {
        if c.n() != sys.n() {
            return Err(Error::SizeMismatch { expected: sys.n(), got: c.n() });
        }
        let (left, right) = c.evaluate(sys);
        if left != right {
            violations.push(Violation { index, label: c.label().to_string(), left, right });
        }
    }
    Ok(ViolationReport { total: constraints.len(), violations })
}

/// Evaluates a constraint list with marginal tables shared across
/// constraints that sum the same output group, instead of re-summing per
/// constraint. Produces exactly the same report as [`check`] (the two are
/// cross-tested); explicit-term constraints fall back to direct evaluation.
pub fn check_fast(
    sys: &BoxSystem,
    constraints: &[LinearConstraint],
) -> Result<ViolationReport, Error> {
    let n = sys.n();
    let full = word_mask(n);
    for c in constraints {
        if c.n() != n {
            return Err(Error::SizeMismatch { expected: n, got: c.n() });
        }
    }
    // Subset-sum (zeta) transform per summed group: after processing bit b
    // of the mask, table[in][out] with out·b = 0 holds the sum over that
    // bit; entries with mask bits set are scratch.
    let masks: std::collections::BTreeSet<u32> =
        constraints.iter().filter_map(|c| c.marginal().map(|d| d.sum_mask)).collect();
    let mut tables: HashMap<u32, Vec<Rational>> = HashMap::new();
    for mask in masks {
        let mut t = sys.cells().to_vec();
        for bit in (0..2 * n).map(|b| 1u32 << b).filter(|b| b & mask != 0) {
            for in_word in 0..=full {
                for out in 0..=full {
                    if out & bit == 0 {
                        let add = t[boxes::idx_words(n, in_word, out | bit)].clone();
                        t[boxes::idx_words(n, in_word, out)] += add;
                    }
                }
            }
        }
        tables.insert(mask, t);
    }
    let mut violations = Vec::new();
    for (index, c) in constraints.iter().enumerate() {
        let (left, right) = match c.marginal() {
            Some(d) => {
                let t = &tables[&d.sum_mask];
                (
                    t[boxes::idx_words(n, d.in1, d.fixed_out)].clone(),
                    t[boxes::idx_words(n, d.in2, d.fixed_out)].clone(),
                )
            }
            None => c.evaluate(sys),
        };
        if left != right {
            violations.push(Violation { index, label: c.label().to_string(), left, right });
        }
    }
    Ok(ViolationReport { total: constraints.len(), violations })
}

/// Checks a named family. The per-party sequential family is only
/// meaningful alongside the two-party conditions, so those are prepended
/// for that family (their labels mark them in the report).
pub fn check_family(sys: &BoxSystem, kind: FamilyKind) -> Result<ViolationReport, Error> {
    let mut list = Vec::new();
    if kind == FamilyKind::PerPartySequential {
        list.extend(generate(FamilyKind::AliceBob, sys.n())?);
    }
    list.extend(generate(kind, sys.n())?);
    check_fast(sys, &list)
}

/// Removes exact duplicates and sign-flipped duplicates, keeping the first
/// occurrence of each equality (stable order).
pub fn dedupe(constraints: Vec<LinearConstraint>) -> Vec<LinearConstraint> {
    let mut seen: std::collections::HashSet<Vec<(usize, Rational)>> =
        std::collections::HashSet::new();
    let mut out = Vec::new();
    for c in constraints {
        let mut key: Vec<(usize, Rational)> =
            c.terms().into_iter().map(|(coef, idx)| (idx, coef)).collect();
        // Canonical sign: first coefficient positive.
        if let Some((_, first)) = key.first() {
            if first.is_negative() {
                for (_, coef) in &mut key {
                    *coef = -coef.clone();
                }
            }
        }
        if key.is_empty() {
            // 0 = 0 carries no content.
            continue;
        }
        if seen.insert(key) {
            out.push(c);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Implication
// ---------------------------------------------------------------------------

/// Reference to a generating row of an implication certificate: either a
/// constraint of the antecedent list or a per-input-block normalization
/// equality (`Σ_out P(out | in_word) = 1`).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub enum RowRef {
    Constraint(usize),
    Normalization(u32),
}

/// Exact combination coefficients expressing one target constraint in the
/// span of the antecedent list and the normalization equalities.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub combo: Vec<(RowRef, Rational)>,
}

/// A target constraint outside the span, with a human-readable reason.
#[derive(Clone, Debug)]
pub struct NonImplication {
    pub witness_index: usize,
    pub witness_label: String,
    pub detail: String,
}

/// Result of an implication decision.
pub enum Implication {
    Holds(ImpliedSpan),
    Fails(NonImplication),
}

impl Implication {
    pub fn holds(&self) -> bool {
        matches!(self, Implication::Holds(_))
    }
}

/// Successful implication: every target constraint lies in the rational
/// span of the antecedents plus normalization. Certificates are computed
/// on demand (target lists can be very large).
pub struct ImpliedSpan {
    inner: SpanInner,
}

enum SpanInner {
    Sector(SectorSpan),
    Dense(Vec<Certificate>),
}

impl ImpliedSpan {
    /// Number of target constraints covered.
    pub fn targets(&self) -> usize {
        match &self.inner {
            SpanInner::Sector(s) => s.targets.len(),
            SpanInner::Dense(certs) => certs.len(),
        }
    }

    /// The combination certificate for target `idx`.
    pub fn certificate(&self, idx: usize) -> Certificate {
        match &self.inner {
            SpanInner::Sector(s) => s.certificate(idx),
            SpanInner::Dense(certs) => certs[idx].clone(),
        }
    }
}

/// Decides whether every constraint in `b` lies in the rational linear
/// span of `a` together with the per-input-block normalization equalities.
///
/// For the marginal-difference families generated by this module the
/// decision runs in a per-block parity basis, where each complete
/// quantifier group of `a` decomposes into independent difference edges
/// between input blocks, one per fixed-output parity set; span membership
/// is then graph connectivity per parity set, and certificates are the
/// telescoping chains along spanning-tree paths, Fourier-recombined. For
/// constraint lists without that structure an exact Gaussian elimination
/// over the rationals decides membership (fine at small sizes; the two
/// engines are cross-checked in tests).
pub fn implies(
    a: &[LinearConstraint],
    b: &[LinearConstraint],
    n: usize,
) -> Result<Implication, Error> {
    if n == 0 || n > MAX_BOXES {
        return Err(Error::Domain(format!("n = {n} outside 1..={MAX_BOXES}")));
    }
    for c in a.iter().chain(b.iter()) {
        if c.n() != n {
            return Err(Error::SizeMismatch { expected: n, got: c.n() });
        }
    }
    if let Some(result) = sector_implies(a, b, n) {
        return Ok(result);
    }
    Ok(dense_implies(a, b, n))
}

/// Verifies a certificate by exact recombination: the weighted sum of the
/// referenced rows (antecedent constraints and normalization equalities)
/// must reproduce the target constraint term-for-term, with the
/// normalization constants cancelling.
pub fn verify_certificate(
    a: &[LinearConstraint],
    target: &LinearConstraint,
    cert: &Certificate,
    n: usize,
) -> bool {
    let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
    let mut constant = int(0);
    for (row, coeff) in &cert.combo {
        match row {
            RowRef::Constraint(i) => {
                let Some(c) = a.get(*i) else { return false };
                for (term_coeff, idx) in c.terms() {
                    *acc.entry(idx).or_insert_with(|| int(0)) += coeff * &term_coeff;
                }
            }
            RowRef::Normalization(in_word) => {
                for out in 0..=word_mask(n) {
                    *acc.entry(boxes::idx_words(n, *in_word, out)).or_insert_with(|| int(0)) +=
                        coeff;
                }
                constant += coeff;
            }
        }
    }
    if !constant.is_zero() {
        return false;
    }
    let mut target_map: BTreeMap<usize, Rational> = BTreeMap::new();
    for (c, idx) in target.terms() {
        target_map.insert(idx, c);
    }
    acc.retain(|_, v| !v.is_zero());
    acc == target_map
}

// --- sector engine ---------------------------------------------------------

struct Group {
    in1: u32,
    in2: u32,
    sum_mask: u32,
    /// `(fixed_out, index into a)`, complete over the fixed-output range.
    rows: Vec<(u32, usize)>,
}

struct SectorSpan {
    n: usize,
    groups: Vec<Group>,
    /// Per parity set `S` (indexed by mask): spanning forest over input
    /// blocks. `parent[b] == b` marks a root.
    parent: Vec<Vec<u32>>,
    edge_group: Vec<Vec<usize>>,
    /// True when the tree child is the group's `in1`.
    edge_child_is_in1: Vec<Vec<bool>>,
    targets: Vec<MarginalDiff>,
}

/// Attempts the parity-basis engine. Returns `None` when the inputs lack
/// the required structure (explicit constraints, or incomplete quantifier
/// groups in `a`), in which case the caller falls back to elimination.
fn sector_implies(a: &[LinearConstraint], b: &[LinearConstraint], n: usize) -> Option<Implication> {
    let full = word_mask(n);

    // Group a's rows by (in1, in2, sum_mask); each group must enumerate
    // its fixed-output range completely for the parity decomposition of
    // its span to be exact.
    let mut group_index: HashMap<(u32, u32, u32), usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for (i, c) in a.iter().enumerate() {
        let d = c.marginal()?;
        let key = (d.in1, d.in2, d.sum_mask);
        let gi = *group_index.entry(key).or_insert_with(|| {
            groups.push(Group { in1: d.in1, in2: d.in2, sum_mask: d.sum_mask, rows: Vec::new() });
            groups.len() - 1
        });
        groups[gi].rows.push((d.fixed_out, i));
    }
    for g in &groups {
        let expected = 1usize << (2 * n - g.sum_mask.count_ones() as usize);
        if g.rows.len() != expected {
            return None;
        }
        let mut ws: Vec<u32> = g.rows.iter().map(|(w, _)| *w).collect();
        ws.sort_unstable();
        ws.dedup();
        if ws.len() != expected {
            return None;
        }
    }
    let targets: Vec<MarginalDiff> = b.iter().map(|c| c.marginal().copied()).collect::<Option<_>>()?;

    // Per-sector adjacency, then spanning forests by BFS.
    let sectors = (full as usize) + 1;
    let blocks = (full as usize) + 1;
    let mut sector_edges: Vec<Vec<usize>> = vec![Vec::new(); sectors];
    for (gi, g) in groups.iter().enumerate() {
        for s in submasks(full & !g.sum_mask) {
            sector_edges[s as usize].push(gi);
        }
    }
    let mut parent: Vec<Vec<u32>> = Vec::with_capacity(sectors);
    let mut edge_group: Vec<Vec<usize>> = Vec::with_capacity(sectors);
    let mut edge_child_is_in1: Vec<Vec<bool>> = Vec::with_capacity(sectors);
    for edges in &sector_edges {
        // adj[block] = (neighbor, group, neighbor_is_in1)
        let mut adj: Vec<Vec<(u32, usize, bool)>> = vec![Vec::new(); blocks];
        for &gi in edges {
            let g = &groups[gi];
            adj[g.in1 as usize].push((g.in2, gi, false));
            adj[g.in2 as usize].push((g.in1, gi, true));
        }
        let mut par = vec![u32::MAX; blocks];
        let mut eg = vec![usize::MAX; blocks];
        let mut ec = vec![false; blocks];
        for root in 0..blocks as u32 {
            if par[root as usize] != u32::MAX {
                continue;
            }
            par[root as usize] = root;
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(block) = queue.pop_front() {
                for &(next, gi, next_is_in1) in &adj[block as usize] {
                    if par[next as usize] != u32::MAX {
                        continue;
                    }
                    // Tree edge: child `next` → parent `block`.
                    par[next as usize] = block;
                    eg[next as usize] = gi;
                    ec[next as usize] = next_is_in1;
                    queue.push_back(next);
                }
            }
        }
        parent.push(par);
        edge_group.push(eg);
        edge_child_is_in1.push(ec);
    }

    let span = SectorSpan { n, groups, parent, edge_group, edge_child_is_in1, targets };

    // Decide connectivity for every target in every relevant sector.
    for (j, d) in span.targets.iter().enumerate() {
        for s in submasks(full & !d.sum_mask) {
            if s == 0 {
                continue; // normalization connects every block at parity ∅
            }
            if span.root(s, d.in1) != span.root(s, d.in2) {
                let detail = format!(
                    "no derivation equates the parity-set {} marginal between \
                     input blocks {} and {}",
                    render_sector(n, s),
                    render_inputs(n, d.in1, d.in1),
                    render_inputs(n, d.in2, d.in2)
                );
                return Some(Implication::Fails(NonImplication {
                    witness_index: j,
                    witness_label: b[j].label().to_string(),
                    detail,
                }));
            }
        }
    }
    Some(Implication::Holds(ImpliedSpan { inner: SpanInner::Sector(span) }))
}

fn render_sector(n: usize, s: u32) -> String {
    let mut parts = Vec::new();
    for i in 0..n {
        if s & alice_bit(n, i) != 0 {
            parts.push(format!("x{}", i + 1));
        }
    }
    for i in 0..n {
        if s & bob_bit(n, i) != 0 {
            parts.push(format!("y{}", i + 1));
        }
    }
    if parts.is_empty() {
        "{}".into()
    } else {
        format!("{{{}}}", parts.join(","))
    }
}

impl SectorSpan {
    fn root(&self, sector: u32, mut block: u32) -> u32 {
        let par = &self.parent[sector as usize];
        while par[block as usize] != block {
            block = par[block as usize];
        }
        block
    }

    /// Adds the telescoping decomposition of the parity-`sector` difference
    /// between `block` and its tree root into `combo`, scaled by `scale`.
    fn add_path(
        &self,
        sector: u32,
        mut block: u32,
        scale: &Rational,
        combo: &mut BTreeMap<RowRef, Rational>,
    ) {
        let s_idx = sector as usize;
        while self.parent[s_idx][block as usize] != block {
            let gi = self.edge_group[s_idx][block as usize];
            let g = &self.groups[gi];
            // d_sector(child, parent) = ±d_sector(in1, in2), positive when
            // the child sits on the in1 side.
            let orient = if self.edge_child_is_in1[s_idx][block as usize] { 1 } else { -1 };
            for &(w, row_idx) in &g.rows {
                let sign = if (sector & w).count_ones().is_multiple_of(2) { 1 } else { -1 };
                let delta = scale * int(orient * sign);
                *combo.entry(RowRef::Constraint(row_idx)).or_insert_with(|| int(0)) += delta;
            }
            block = self.parent[s_idx][block as usize];
        }
    }

    fn certificate(&self, idx: usize) -> Certificate {
        let d = &self.targets[idx];
        let full = word_mask(self.n);
        let free_bits = (full & !d.sum_mask).count_ones();
        let scale_base = Rational::new(1.into(), num_bigint::BigInt::from(1i64 << free_bits));
        let mut combo: BTreeMap<RowRef, Rational> = BTreeMap::new();
        for s in submasks(full & !d.sum_mask) {
            let sign = if (s & d.fixed_out).count_ones().is_multiple_of(2) { 1 } else { -1 };
            let scale = &scale_base * int(sign);
            if s == 0 {
                // Parity-∅ difference comes straight from normalization.
                *combo.entry(RowRef::Normalization(d.in1)).or_insert_with(|| int(0)) += &scale;
                *combo.entry(RowRef::Normalization(d.in2)).or_insert_with(|| int(0)) -= &scale;
            } else {
                self.add_path(s, d.in1, &scale, &mut combo);
                self.add_path(s, d.in2, &(-&scale), &mut combo);
            }
        }
        combo.retain(|_, v| !v.is_zero());
        Certificate { combo: combo.into_iter().collect() }
    }
}

// --- dense engine ----------------------------------------------------------

/// Column index for the affine constant (sorts after every cell column).
const CONST_COL: usize = usize::MAX;

#[derive(Clone)]
struct DenseRow {
    coeffs: BTreeMap<usize, Rational>,
    combo: BTreeMap<RowRef, Rational>,
}

impl DenseRow {
    fn lead(&self) -> Option<usize> {
        self.coeffs.keys().next().copied()
    }

    /// Target-row reduction step: subtracts `factor·other` from the
    /// coefficients while *adding* `factor·other.combo` to the combination,
    /// so `combo` accumulates the certificate `target = Σ combo·originals`
    /// as the coefficients shrink toward zero.
    fn sub_scaled(&mut self, other: &DenseRow, factor: &Rational) {
        for (col, val) in &other.coeffs {
            let entry = self.coeffs.entry(*col).or_insert_with(|| int(0));
            *entry -= factor * val;
            if entry.is_zero() {
                self.coeffs.remove(col);
            }
        }
        for (row, val) in &other.combo {
            let entry = self.combo.entry(*row).or_insert_with(|| int(0));
            *entry += factor * val;
            if entry.is_zero() {
                self.combo.remove(row);
            }
        }
    }
}

/// Exact Gaussian elimination over the rationals, tracking combinations.
/// `row.combo` always expresses the *eliminated part*: after reduction,
/// `original_row = reduced_row + Σ combo·generators`.
fn dense_implies(a: &[LinearConstraint], b: &[LinearConstraint], n: usize) -> Implication {
    let mut echelon: BTreeMap<usize, DenseRow> = BTreeMap::new();

    let reduce = |row: &mut DenseRow, echelon: &BTreeMap<usize, DenseRow>| {
        while let Some(lead) = row.lead() {
            let Some(er) = echelon.get(&lead) else { break };
            let factor = row.coeffs[&lead].clone() / er.coeffs[&lead].clone();
            row.sub_scaled(er, &factor);
            debug_assert!(!row.coeffs.contains_key(&lead));
        }
    };

    let insert = |mut row: DenseRow, origin: RowRef, echelon: &mut BTreeMap<usize, DenseRow>| {
        // Echelon rows carry their own representation in terms of the
        // originals, so reductions against them surface those origins.
        row.combo = BTreeMap::from([(origin, int(1))]);
        let mut work = row;
        while let Some(lead) = work.lead() {
            match echelon.get(&lead) {
                Some(er) => {
                    let factor = work.coeffs[&lead].clone() / er.coeffs[&lead].clone();
                    // generator bookkeeping: work := work − factor·er, and
                    // work's combo keeps expressing work in terms of
                    // originals: combo(work) −= factor·combo(er).
                    for (col, val) in er.coeffs.clone() {
                        let entry = work.coeffs.entry(col).or_insert_with(|| int(0));
                        *entry -= &factor * &val;
                        if entry.is_zero() {
                            work.coeffs.remove(&col);
                        }
                    }
                    for (row_ref, val) in er.combo.clone() {
                        let entry = work.combo.entry(row_ref).or_insert_with(|| int(0));
                        *entry -= &factor * &val;
                        if entry.is_zero() {
                            work.combo.remove(&row_ref);
                        }
                    }
                }
                None => {
                    echelon.insert(lead, work);
                    return;
                }
            }
        }
        // Row reduced to zero: redundant, drop it.
    };

    for (i, c) in a.iter().enumerate() {
        let coeffs: BTreeMap<usize, Rational> =
            c.terms().into_iter().map(|(coef, idx)| (idx, coef)).collect();
        insert(
            DenseRow { coeffs, combo: BTreeMap::new() },
            RowRef::Constraint(i),
            &mut echelon,
        );
    }
    for in_word in 0..=word_mask(n) {
        let mut coeffs: BTreeMap<usize, Rational> = (0..=word_mask(n))
            .map(|out| (boxes::idx_words(n, in_word, out), int(1)))
            .collect();
        coeffs.insert(CONST_COL, int(1));
        insert(
            DenseRow { coeffs, combo: BTreeMap::new() },
            RowRef::Normalization(in_word),
            &mut echelon,
        );
    }

    let mut certs = Vec::with_capacity(b.len());
    for (j, c) in b.iter().enumerate() {
        let coeffs: BTreeMap<usize, Rational> =
            c.terms().into_iter().map(|(coef, idx)| (idx, coef)).collect();
        let mut row = DenseRow { coeffs, combo: BTreeMap::new() };
        reduce(&mut row, &echelon);
        if row.coeffs.is_empty() {
            certs.push(Certificate { combo: row.combo.into_iter().collect() });
        } else {
            return Implication::Fails(NonImplication {
                witness_index: j,
                witness_label: c.label().to_string(),
                detail: format!(
                    "eliminated residual has {} nonzero entries, leading column {}",
                    row.coeffs.len(),
                    row.lead().map(|l| l.to_string()).unwrap_or_default()
                ),
            });
        }
    }
    Implication::Holds(ImpliedSpan { inner: SpanInner::Dense(certs) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::BoxSystem;
    use crate::rational::rat;

    #[test]
    fn family_counts_n1() {
        assert_eq!(generate(FamilyKind::Full, 1).unwrap().len(), 16);
        assert_eq!(generate(FamilyKind::AliceBob, 1).unwrap().len(), 16);
        assert_eq!(generate(FamilyKind::PairwiseBox, 1).unwrap().len(), 8);
        assert_eq!(generate(FamilyKind::PerPartySequential, 1).unwrap().len(), 4);
        // No cuts exist for a single pair.
        assert!(generate(FamilyKind::Backward, 1).unwrap().is_empty());
        assert!(generate(FamilyKind::AlmostBackward, 1).unwrap().is_empty());
    }

    #[test]
    fn dedupe_halves_signed_pairs() {
        let full = generate(FamilyKind::Full, 1).unwrap();
        assert_eq!(dedupe(full).len(), 8);
        let ab = generate(FamilyKind::AliceBob, 2).unwrap();
        let deduped = dedupe(ab.clone()).len();
        assert_eq!(deduped, ab.len() / 2);
        // Exact duplicates collapse too.
        let mut doubled = generate(FamilyKind::Full, 1).unwrap();
        doubled.extend(generate(FamilyKind::Full, 1).unwrap());
        assert_eq!(dedupe(doubled).len(), 8);
    }

    #[test]
    fn label_format_is_stable() {
        let full = generate(FamilyKind::Full, 2).unwrap();
        assert_eq!(full[0].label(), "full-ns[A1]: x=*0 y=00 | u=00->10 v=00");
        let ab = generate(FamilyKind::AliceBob, 1).unwrap();
        assert_eq!(ab[0].label(), "alice-bob[a->b]: x=* y=0 | u=0->1 v=0");
        let bwd = generate(FamilyKind::Backward, 2).unwrap();
        assert!(bwd[0].label().starts_with("backward[alice,i=2]:"));
    }

    #[test]
    fn structural_accessors() {
        let c = &generate(FamilyKind::Full, 2).unwrap()[0];
        assert_eq!(c.flipped_inputs(), Some(0b1000));
        assert_eq!(c.summed_outputs(), Some(0b1000));
        assert_eq!(c.marginal().unwrap().fixed_out, 0);
        let terms = c.terms();
        assert_eq!(terms.len(), 4);
        assert!(terms.iter().all(|(coef, _)| coef.abs() == int(1)));
    }

    #[test]
    fn pr_box_satisfies_everything() {
        let pr = BoxSystem::pr_box();
        for kind in FamilyKind::ALL {
            let report = check_family(&pr, kind).unwrap();
            assert!(report.passed(), "{kind} violated: {:?}", report.violations.first());
        }
    }

    #[test]
    fn product_system_satisfies_full_ns() {
        let sys = BoxSystem::product_system(&rat(1, 10), 2).unwrap();
        for kind in FamilyKind::ALL {
            assert!(check_family(&sys, kind).unwrap().passed(), "{kind}");
        }
    }

    #[test]
    fn tiny_perturbation_is_caught() {
        // Shift 10⁻⁹ of mass inside one block of the perfectly correlated
        // box: normalization survives, two-party non-signalling does not.
        let pr = BoxSystem::pr_box();
        let delta = rat(1, 1_000_000_000);
        let mut cells = pr.cells().to_vec();
        cells[boxes::idx_words(1, 0b00, 0b00)] += &delta;
        cells[boxes::idx_words(1, 0b00, 0b11)] -= &delta;
        let sys = BoxSystem::from_cells(1, cells).unwrap();
        let report = check_family(&sys, FamilyKind::AliceBob).unwrap();
        assert!(!report.passed());
        let v = &report.violations[0];
        assert_eq!((&v.left - &v.right).abs(), delta);
    }

    #[test]
    fn almost_backward_example_pass_fail_pattern() {
        let sys = BoxSystem::example_almost_backward();
        assert!(check_family(&sys, FamilyKind::AlmostBackward).unwrap().passed());
        assert!(check_family(&sys, FamilyKind::PairwiseBox).unwrap().passed());
        assert!(check_family(&sys, FamilyKind::AliceBob).unwrap().passed());

        // The second pair's input steers the first box's output, so the
        // suffix condition on Alice's side must fail...
        let bwd = generate(FamilyKind::Backward, 2).unwrap();
        let report = check(&sys, &bwd).unwrap();
        assert!(!report.passed());
        for v in &report.violations {
            let c = &bwd[v.index];
            // ...and every violation flips u₂ while x₁ and both y's stay
            // fixed (Bob's suffix condition holds for this table).
            assert_eq!(c.flipped_inputs().unwrap(), alice_bit(2, 1));
            assert_eq!(c.summed_outputs().unwrap(), alice_bit(2, 1));
            assert!(v.label.starts_with("backward[alice,i=2]"));
        }
    }

    #[test]
    fn not_full_ns_example_pass_fail_pattern() {
        let sys = BoxSystem::example_not_full_ns();
        assert!(check_family(&sys, FamilyKind::Backward).unwrap().passed());
        assert!(check_family(&sys, FamilyKind::AliceBob).unwrap().passed());

        // u₁ steers x₂, which full non-signalling forbids: every violated
        // member flips u₁ with x₂ among the fixed outputs.
        let full = generate(FamilyKind::Full, 2).unwrap();
        let report = check(&sys, &full).unwrap();
        assert!(!report.passed());
        for v in &report.violations {
            let c = &full[v.index];
            assert_eq!(c.flipped_inputs().unwrap(), alice_bit(2, 0));
            // Only x₁ is summed; x₂ (and everything else) stays fixed.
            assert_eq!(c.summed_outputs().unwrap(), alice_bit(2, 0));
        }
    }

    #[test]
    fn implication_full_covers_each_family() {
        let n = 2;
        let full = generate(FamilyKind::Full, n).unwrap();
        for kind in [
            FamilyKind::AliceBob,
            FamilyKind::Backward,
            FamilyKind::AlmostBackward,
            FamilyKind::PairwiseBox,
            FamilyKind::PerPartySequential,
        ] {
            let b = generate(kind, n).unwrap();
            let result = implies(&full, &b, n).unwrap();
            assert!(result.holds(), "full should cover {kind}");
        }
    }

    #[test]
    fn implication_pairwise_ab_covers_almost_backward_with_certificates() {
        let n = 2;
        let mut a = generate(FamilyKind::PairwiseBox, n).unwrap();
        a.extend(generate(FamilyKind::AliceBob, n).unwrap());
        let b = generate(FamilyKind::AlmostBackward, n).unwrap();
        let result = implies(&a, &b, n).unwrap();
        let Implication::Holds(span) = result else {
            panic!("pairwise ∪ ab should cover almost-backward")
        };
        assert_eq!(span.targets(), b.len());
        for (j, target) in b.iter().enumerate() {
            let cert = span.certificate(j);
            assert!(
                verify_certificate(&a, target, &cert, n),
                "certificate {j} fails recombination for {}",
                target.label()
            );
        }
    }

    #[test]
    fn implication_ab_does_not_cover_full() {
        let n = 2;
        let ab = generate(FamilyKind::AliceBob, n).unwrap();
        let full = generate(FamilyKind::Full, n).unwrap();
        let result = implies(&ab, &full, n).unwrap();
        let Implication::Fails(non) = result else {
            panic!("two-party conditions must not cover the full family")
        };
        assert_eq!(non.witness_label, full[non.witness_index].label());
        assert!(non.detail.contains("parity-set"));
    }

    #[test]
    fn normalization_alone_covers_pairwise_at_n1() {
        // With one pair, summing both outputs of the pair leaves nothing
        // fixed, so the condition is normalization itself.
        let b = generate(FamilyKind::PairwiseBox, 1).unwrap();
        let result = implies(&[], &b, 1).unwrap();
        let Implication::Holds(span) = result else { panic!("should hold") };
        for (j, target) in b.iter().enumerate() {
            let cert = span.certificate(j);
            assert!(cert.combo.iter().all(|(r, _)| matches!(r, RowRef::Normalization(_))));
            assert!(verify_certificate(&[], target, &cert, 1));
        }
    }

    #[test]
    fn normalization_alone_does_not_cover_ab() {
        let b = generate(FamilyKind::AliceBob, 1).unwrap();
        assert!(!implies(&[], &b, 1).unwrap().holds());
    }

    #[test]
    fn engines_agree_on_small_inputs() {
        // Run the elimination engine directly and compare its verdicts and
        // certificates with the parity engine on the same inputs.
        let cases: Vec<(Vec<LinearConstraint>, Vec<LinearConstraint>, usize)> = vec![
            (
                generate(FamilyKind::AliceBob, 1).unwrap(),
                generate(FamilyKind::Full, 1).unwrap(),
                1,
            ),
            (
                generate(FamilyKind::Full, 1).unwrap(),
                generate(FamilyKind::PerPartySequential, 1).unwrap(),
                1,
            ),
            (Vec::new(), generate(FamilyKind::PairwiseBox, 1).unwrap(), 1),
            (
                generate(FamilyKind::PairwiseBox, 2).unwrap(),
                pairwise_joint_form(2).unwrap(),
                2,
            ),
        ];
        for (a, b, n) in cases {
            let sector = implies(&a, &b, n).unwrap();
            let dense = dense_implies(&a, &b, n);
            assert_eq!(sector.holds(), dense.holds());
            if let (Implication::Holds(s), Implication::Holds(d)) = (&sector, &dense) {
                for (j, target) in b.iter().enumerate() {
                    assert!(verify_certificate(&a, target, &s.certificate(j), n));
                    assert!(verify_certificate(&a, target, &d.certificate(j), n));
                }
            }
        }
    }

    #[test]
    fn pairwise_forms_are_mutually_equivalent() {
        let n = 2;
        let single = generate(FamilyKind::PairwiseBox, n).unwrap();
        let joint = pairwise_joint_form(n).unwrap();
        assert!(implies(&single, &joint, n).unwrap().holds());
        assert!(implies(&joint, &single, n).unwrap().holds());
    }

    #[test]
    fn certificates_are_rejected_when_tampered() {
        let n = 1;
        let a = generate(FamilyKind::Full, n).unwrap();
        let b = generate(FamilyKind::AliceBob, n).unwrap();
        let Implication::Holds(span) = implies(&a, &b, n).unwrap() else { panic!() };
        let mut cert = span.certificate(0);
        assert!(verify_certificate(&a, &b[0], &cert, n));
        if let Some((_, coeff)) = cert.combo.first_mut() {
            *coeff += int(1);
        }
        assert!(!verify_certificate(&a, &b[0], &cert, n));
    }

    #[test]
    fn full_ns_bob_side_filters_by_flipped_interface() {
        let list = full_ns_bob_side(2).unwrap();
        assert_eq!(list.len(), generate(FamilyKind::Full, 2).unwrap().len() / 2);
        assert!(list
            .iter()
            .all(|c| c.flipped_inputs().unwrap() & bob_mask(2) != 0));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let a = generate(FamilyKind::Full, 1).unwrap();
        let b = generate(FamilyKind::AliceBob, 2).unwrap();
        assert!(matches!(implies(&a, &b, 1), Err(Error::SizeMismatch { .. })));
        let pr = BoxSystem::pr_box();
        assert!(check(&pr, &b).is_err());
    }

    #[test]
    fn fast_checker_matches_direct_evaluation() {
        let systems = [
            BoxSystem::example_almost_backward(),
            BoxSystem::example_not_full_ns(),
            BoxSystem::product_system(&rat(1, 5), 2).unwrap(),
        ];
        for sys in &systems {
            for kind in FamilyKind::ALL {
                let list = generate(kind, 2).unwrap();
                let direct = check(sys, &list).unwrap();
                let fast = check_fast(sys, &list).unwrap();
                assert_eq!(direct.total, fast.total);
                assert_eq!(direct.violations.len(), fast.violations.len());
                for (a, b) in direct.violations.iter().zip(&fast.violations) {
                    assert_eq!(a.index, b.index);
                    assert_eq!(a.left, b.left);
                    assert_eq!(a.right, b.right);
                }
            }
        }
    }

    #[test]
    fn family_names_roundtrip() {
        for kind in FamilyKind::ALL {
            assert_eq!(FamilyKind::parse(kind.cli_name()).unwrap(), kind);
        }
        assert!(FamilyKind::parse("nope").is_err());
    }
}
