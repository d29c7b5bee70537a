//! The row-shift partition attack on a hashed box output.
//!
//! The adversary prepares the shared system as a mixture
//! `P = p·P⁰ + (1−p)·P¹` of valid systems correlated with a hidden bit
//! `z`, so that after Alice hashes her outputs to a single bit `f(x)` at
//! the attacked input, knowing `z` biases the guess of `f(x)`. The
//! guessing advantage is
//!
//! `d = ½ · Σ_z p_z · |Σ_{x,y} (−1)^{f(x)} P^z(x, y | u, v)|`.
//!
//! The *row-shift* construction picks `p = ½` and reweights each block of
//! `P` row by row (a row is one Bob output `y`): with `s_b(y)` the row
//! mass on `{x : f(x) = b}`, cells are scaled by
//!
//! | row class     | f(x) = 0            | f(x) = 1            |
//! |---------------|---------------------|---------------------|
//! | `s₀ < s₁`     | 2                   | `(s₁ − s₀) / s₁`    |
//! | `s₀ > s₁`     | `(s₀ + s₁) / s₀`    | 0                   |
//! | `s₀ = s₁`     | 1                   | 1                   |
//!
//! Row masses are preserved, so `P⁰` is always a normalized system and the
//! complement `P¹ = 2P − P⁰` is too. What is *not* automatic is that the
//! parts stay non-signalling; [`best_attack`] verifies the per-pair and
//! two-party families exactly and falls back to the trivial partition
//! (`P⁰ = P¹ = P`) when the construction is invalid or no better.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{Signed, Zero};
use rayon::prelude::*;

use crate::bits::BitString;
use crate::boxes::{self, BoxSystem};
use crate::constraints::{self, FamilyKind, LinearConstraint};
use crate::rational::{int, rat, to_frac_string, Rational};
use crate::Error;

// ---------------------------------------------------------------------------
// Hash functions
// ---------------------------------------------------------------------------

/// A one-bit hash of Alice's `n` output bits, stored as a truth table.
/// Bit conventions match the rest of the crate: the table packs `f(x)` for
/// `x = 0, 1, 2, …` from the most significant bit down, so the hex form
/// reads off outputs in ascending `x` order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct HashFn {
    n: usize,
    table: u32,
}

impl HashFn {
    /// Number of hash functions on `n` bits (`2^(2ⁿ)`).
    pub fn count(n: usize) -> usize {
        1usize << (1usize << n)
    }

    pub fn from_table(n: usize, table: u32) -> Result<Self, Error> {
        if n == 0 || n > boxes::MAX_BOXES {
            return Err(Error::Domain(format!("n = {n} outside 1..={}", boxes::MAX_BOXES)));
        }
        if table as usize >= Self::count(n) {
            return Err(Error::Domain(format!(
                "truth table {table:#x} does not fit {} bits",
                1usize << n
            )));
        }
        Ok(Self { n, table })
    }

    /// Parses a hex truth table (optionally `0x`-prefixed).
    pub fn from_hex(n: usize, s: &str) -> Result<Self, Error> {
        let digits = s.trim().trim_start_matches("0x");
        if digits.is_empty() || digits.len() > 8 {
            return Err(Error::Parse(format!("bad hex truth table `{s}`")));
        }
        let table = u32::from_str_radix(digits, 16)
            .map_err(|_| Error::Parse(format!("bad hex truth table `{s}`")))?;
        Self::from_table(n, table).map_err(|_| {
            Error::Parse(format!(
                "truth table `{s}` does not fit a {}-bit output space",
                1usize << n
            ))
        })
    }

    /// Named functions: `identity` (n = 1 only), `xor`, `and`, `const0`,
    /// `const1`.
    pub fn named(name: &str, n: usize) -> Result<Self, Error> {
        let bits = 1usize << n;
        let all_x = 0..(1u32 << n);
        let build = |pred: &dyn Fn(u32) -> bool| -> Result<Self, Error> {
            let mut table = 0u32;
            for x in all_x.clone() {
                if pred(x) {
                    table |= 1 << (bits - 1 - x as usize);
                }
            }
            Self::from_table(n, table)
        };
        match name {
            "identity" => {
                if n != 1 {
                    return Err(Error::Domain(
                        "`identity` is a single-bit function; use a hex table for n > 1".into(),
                    ));
                }
                build(&|x| x == 1)
            }
            "xor" => build(&|x| x.count_ones() % 2 == 1),
            "and" => build(&|x| x == (1 << n) - 1),
            "const0" => build(&|_| false),
            "const1" => build(&|_| true),
            other => Err(Error::Parse(format!(
                "unknown function `{other}` (expected identity, xor, and, const0, const1 \
                 or a hex truth table)"
            ))),
        }
    }

    /// Parses either a named function or a hex truth table.
    pub fn parse(spec: &str, n: usize) -> Result<Self, Error> {
        match Self::named(spec, n) {
            Ok(f) => Ok(f),
            Err(Error::Domain(e)) => Err(Error::Domain(e)),
            Err(_) => Self::from_hex(n, spec),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn table(&self) -> u32 {
        self.table
    }

    pub fn eval(&self, x: u32) -> bool {
        let bits = 1usize << self.n;
        assert!((x as usize) < bits, "hash input {x} out of range");
        self.table >> (bits - 1 - x as usize) & 1 == 1
    }

    pub fn is_constant(&self) -> bool {
        let bits = 1usize << self.n;
        self.table == 0 || self.table == ((1u64 << bits) - 1) as u32
    }

    /// Canonical hex form, fixed width for a given `n`.
    pub fn to_hex(&self) -> String {
        let width = (1usize << self.n).div_ceil(4).max(1);
        format!("{:0width$x}", self.table)
    }

    /// Every hash function on `n` bits in ascending truth-table order.
    pub fn all(n: usize) -> impl Iterator<Item = HashFn> {
        (0..Self::count(n) as u32).map(move |table| HashFn { n, table })
    }
}

impl fmt::Display for HashFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

// ---------------------------------------------------------------------------
// Partition construction
// ---------------------------------------------------------------------------

/// Classification of a block row `y` by its masses on the two hash fibers.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RowClass {
    /// `s₀ < s₁`
    Less,
    /// `s₀ > s₁`
    Greater,
    /// `s₀ = s₁`
    Equal,
}

/// Classifies every row of one input block: returns `(s₀, s₁, class)` per
/// Bob output `y`.
pub fn classify_rows(
    sys: &BoxSystem,
    f: &HashFn,
    in_word: u32,
) -> Vec<(Rational, Rational, RowClass)> {
    let n = sys.n();
    (0..1u32 << n)
        .map(|y| {
            let mut s = [int(0), int(0)];
            for x in 0..1u32 << n {
                s[f.eval(x) as usize] += sys.cell_words(in_word, (x << n) | y);
            }
            let [s0, s1] = s;
            let class = match s0.cmp(&s1) {
                std::cmp::Ordering::Less => RowClass::Less,
                std::cmp::Ordering::Greater => RowClass::Greater,
                std::cmp::Ordering::Equal => RowClass::Equal,
            };
            (s0, s1, class)
        })
        .collect()
}

/// The row-shift scaling factor for a cell with hash value `fx` on a row
/// with masses `(s₀, s₁)`. Denominators cannot vanish: `Greater` forces
/// `s₀ > s₁ ≥ 0` and `Less` forces `s₁ > s₀ ≥ 0`.
pub fn c_factor(fx: bool, s0: &Rational, s1: &Rational, class: RowClass) -> Rational {
    match (fx, class) {
        (false, RowClass::Less) => int(2),
        (true, RowClass::Less) => (s1 - s0) / s1,
        (false, RowClass::Greater) => (s0 + s1) / s0,
        (true, RowClass::Greater) => int(0),
        (_, RowClass::Equal) => int(1),
    }
}

/// Builds the `z = 0` element: every block of `P` reweighted row by row.
/// The result is always a normalized system (row masses are preserved).
pub fn build_pz0(sys: &BoxSystem, f: &HashFn) -> Result<BoxSystem, Error> {
    let n = sys.n();
    if f.n() != n {
        return Err(Error::SizeMismatch { expected: n, got: f.n() });
    }
    let mut cells = Vec::with_capacity(boxes::cell_count(n));
    for in_word in 0..1u32 << (2 * n) {
        let rows = classify_rows(sys, f, in_word);
        for x in 0..1u32 << n {
            let fx = f.eval(x);
            for y in 0..1u32 << n {
                let (s0, s1, class) = &rows[y as usize];
                let cell = sys.cell_words(in_word, (x << n) | y);
                cells.push(if cell.is_zero() {
                    int(0)
                } else {
                    c_factor(fx, s0, s1, *class) * cell
                });
            }
        }
    }
    BoxSystem::from_cells(n, cells)
}

/// The complement element `(P − p·P⁰) / (1 − p)`; errors with the first
/// offending cell when `p·P⁰` exceeds `P` somewhere.
pub fn complement_element(
    sys: &BoxSystem,
    p: &Rational,
    pz0: &BoxSystem,
) -> Result<BoxSystem, Error> {
    if pz0.n() != sys.n() {
        return Err(Error::SizeMismatch { expected: sys.n(), got: pz0.n() });
    }
    if p < &int(0) || p >= &int(1) {
        return Err(Error::Domain(format!(
            "mixture weight p = {} outside [0, 1)",
            to_frac_string(p)
        )));
    }
    let n = sys.n();
    let rest = int(1) - p;
    let mut cells = Vec::with_capacity(boxes::cell_count(n));
    for (idx, (cell, cell0)) in sys.cells().iter().zip(pz0.cells()).enumerate() {
        let value = (cell - p * cell0) / &rest;
        if value.is_negative() {
            let in_word = (idx >> (2 * n)) as u32;
            let out_word = (idx & ((1 << (2 * n)) - 1)) as u32;
            let field = |word: u32, hi: bool| {
                BitString::new(n, if hi { word >> n } else { word & ((1 << n) - 1) })
                    .to_string()
            };
            return Err(Error::CellBound {
                u: field(in_word, true),
                v: field(in_word, false),
                x: field(out_word, true),
                y: field(out_word, false),
                detail: format!(
                    "p·P⁰ = {} exceeds P = {}",
                    to_frac_string(&(p * cell0)),
                    to_frac_string(cell)
                ),
            });
        }
        cells.push(value);
    }
    BoxSystem::from_cells(n, cells)
}

/// A two-element mixture `P = p·P⁰ + (1−p)·P¹`.
#[derive(Clone, Debug)]
pub struct AttackPartition {
    pub p: Rational,
    pub pz0: BoxSystem,
    pub pz1: BoxSystem,
}

impl AttackPartition {
    /// Exact reconstruction check against the source system.
    pub fn reconstructs(&self, sys: &BoxSystem) -> bool {
        if sys.n() != self.pz0.n() || sys.n() != self.pz1.n() {
            return false;
        }
        let rest = int(1) - &self.p;
        sys.cells()
            .iter()
            .zip(self.pz0.cells())
            .zip(self.pz1.cells())
            .all(|((cell, c0), c1)| &self.p * c0 + &rest * c1 == *cell)
    }

    /// The partition as a weighted element list, the form the distance
    /// formula consumes.
    pub fn elements(&self) -> Vec<PartitionElement> {
        vec![
            PartitionElement { weight: self.p.clone(), element: self.pz0.clone() },
            PartitionElement { weight: int(1) - &self.p, element: self.pz1.clone() },
        ]
    }
}

/// One weighted element of a convex decomposition of the source system.
#[derive(Clone, Debug)]
pub struct PartitionElement {
    pub weight: Rational,
    pub element: BoxSystem,
}

// ---------------------------------------------------------------------------
// Distance and strategies
// ---------------------------------------------------------------------------

/// `Σ_{x,y} (−1)^{f(x)} P(x, y | u, v)` — the hash-bit bias of one block.
pub fn hash_bias(sys: &BoxSystem, f: &HashFn, u: BitString, v: BitString) -> Rational {
    let n = sys.n();
    assert!(u.len() == n && v.len() == n && f.n() == n, "dimension mismatch");
    let in_word = (u.value() << n) | v.value();
    let mut bias = int(0);
    for x in 0..1u32 << n {
        let sign = if f.eval(x) { -1 } else { 1 };
        for y in 0..1u32 << n {
            bias += int(sign) * sys.cell_words(in_word, (x << n) | y);
        }
    }
    bias
}

/// The adversary's guessing advantage for `f(x)` at the attacked input:
/// `½ Σ_z p_z |bias_z|` over any finite partition of the source into
/// weighted elements.
pub fn distance_bit(
    partition: &[PartitionElement],
    f: &HashFn,
    u: BitString,
    v: BitString,
) -> Rational {
    partition
        .iter()
        .map(|part| &part.weight * hash_bias(&part.element, f, u, v).abs())
        .sum::<Rational>()
        / int(2)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Strategy {
    /// `P⁰ = P¹ = P`: the adversary ignores `z`.
    Trivial,
    /// The row-shift partition.
    Construction,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Trivial => write!(f, "trivial"),
            Strategy::Construction => write!(f, "construction"),
        }
    }
}

/// A concrete attack: the partition, the attacked input and the achieved
/// advantage.
#[derive(Clone, Debug)]
pub struct Attack {
    pub f: HashFn,
    pub u: BitString,
    pub v: BitString,
    pub strategy: Strategy,
    pub partition: AttackPartition,
    pub d: Rational,
    /// Present when the row-shift construction was rejected (invalid for
    /// this system) and the trivial strategy was used instead.
    pub note: Option<String>,
}

fn check_dims(sys: &BoxSystem, f: &HashFn, u: BitString, v: BitString) -> Result<(), Error> {
    if f.n() != sys.n() {
        return Err(Error::SizeMismatch { expected: sys.n(), got: f.n() });
    }
    if u.len() != sys.n() || v.len() != sys.n() {
        return Err(Error::SizeMismatch {
            expected: sys.n(),
            got: if u.len() != sys.n() { u.len() } else { v.len() },
        });
    }
    Ok(())
}

/// The trivial attack: both elements equal `P`, advantage `½|bias(P)|`.
pub fn trivial_attack(
    sys: &BoxSystem,
    f: &HashFn,
    u: BitString,
    v: BitString,
) -> Result<Attack, Error> {
    check_dims(sys, f, u, v)?;
    let partition =
        AttackPartition { p: rat(1, 2), pz0: sys.clone(), pz1: sys.clone() };
    let d = distance_bit(&partition.elements(), f, u, v);
    Ok(Attack { f: *f, u, v, strategy: Strategy::Trivial, partition, d, note: None })
}

/// The row-shift attack with `p = ½`. Construction only; validity against
/// the adversarial constraint families is [`best_attack`]'s job.
pub fn construction_attack(
    sys: &BoxSystem,
    f: &HashFn,
    u: BitString,
    v: BitString,
) -> Result<Attack, Error> {
    check_dims(sys, f, u, v)?;
    let p = rat(1, 2);
    let pz0 = build_pz0(sys, f)?;
    let pz1 = complement_element(sys, &p, &pz0)?;
    let partition = AttackPartition { p, pz0, pz1 };
    let d = distance_bit(&partition.elements(), f, u, v);
    Ok(Attack { f: *f, u, v, strategy: Strategy::Construction, partition, d, note: None })
}

/// The constraint list a partition element must satisfy to be admissible
/// under a chosen family: that family's list plus the two-party family
/// (which is always required). Cached per `(family, n)` — the lists are
/// pure functions of their key and are consulted for every scanned hash
/// function.
fn admissible_family(kind: FamilyKind, n: usize) -> Arc<Vec<LinearConstraint>> {
    type Cache = Mutex<HashMap<(FamilyKind, usize), Arc<Vec<LinearConstraint>>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("family cache poisoned");
    guard
        .entry((kind, n))
        .or_insert_with(|| {
            let mut list = constraints::generate(kind, n).expect("n validated by callers");
            list.extend(
                constraints::generate(FamilyKind::AliceBob, n).expect("n validated by callers"),
            );
            Arc::new(constraints::dedupe(list))
        })
        .clone()
}

/// Structured result of validating one candidate element.
#[derive(Clone, Debug)]
pub struct ElementValidity {
    pub valid: bool,
    pub reason: Option<String>,
}

/// Checks whether `pz` can serve as a partition element of weight `p` for
/// `sys`: `p·pz ≤ sys` cellwise, and `pz` satisfies the chosen family plus
/// the two-party family. Returns the first failure as a structured reason.
pub fn validate_element(
    sys: &BoxSystem,
    p: &Rational,
    pz: &BoxSystem,
    family: FamilyKind,
) -> Result<ElementValidity, Error> {
    let n = sys.n();
    if pz.n() != n {
        return Err(Error::SizeMismatch { expected: n, got: pz.n() });
    }
    if p.is_negative() || p > &int(1) {
        return Err(Error::Domain(format!(
            "element weight p = {} outside [0, 1]",
            to_frac_string(p)
        )));
    }
    for (idx, (cell, candidate)) in sys.cells().iter().zip(pz.cells()).enumerate() {
        let scaled = p * candidate;
        if &scaled > cell {
            let in_word = (idx >> (2 * n)) as u32;
            let out_word = (idx & ((1u32 << (2 * n)) - 1) as usize) as u32;
            let field = |word: u32, hi: bool| {
                BitString::new(n, if hi { word >> n } else { word & ((1 << n) - 1) }).to_string()
            };
            return Ok(ElementValidity {
                valid: false,
                reason: Some(format!(
                    "cell (u={}, v={}, x={}, y={}): p·element = {} exceeds P = {}",
                    field(in_word, true),
                    field(in_word, false),
                    field(out_word, true),
                    field(out_word, false),
                    to_frac_string(&scaled),
                    to_frac_string(cell)
                )),
            });
        }
    }
    let report = constraints::check_fast(pz, &admissible_family(family, n))?;
    if let Some(viol) = report.violations.first() {
        return Ok(ElementValidity {
            valid: false,
            reason: Some(format!(
                "element violates {} ({} ≠ {})",
                viol.label,
                to_frac_string(&viol.left),
                to_frac_string(&viol.right)
            )),
        });
    }
    Ok(ElementValidity { valid: true, reason: None })
}

/// Checks both partition elements against the admissible families; returns
/// the first violation as a human-readable reason. (The cellwise condition
/// needs no re-check here: a well-formed [`AttackPartition`] already has
/// nonnegative cells on both sides, which is exactly `p·P⁰ ≤ P`.)
pub fn validate_partition(
    partition: &AttackPartition,
    family: FamilyKind,
) -> Result<Option<String>, Error> {
    let list = admissible_family(family, partition.pz0.n());
    for (name, sys) in [("z=0 element", &partition.pz0), ("z=1 element", &partition.pz1)] {
        let report = constraints::check_fast(sys, &list)?;
        if let Some(v) = report.violations.first() {
            return Ok(Some(format!(
                "{name} violates {} ({} ≠ {})",
                v.label,
                to_frac_string(&v.left),
                to_frac_string(&v.right)
            )));
        }
    }
    Ok(None)
}

/// The better of the two strategies at the attacked input. The row-shift
/// construction wins only when it is admissible (both elements satisfy
/// the chosen family and the two-party family) *and* strictly better;
/// ties and every rejection go to the trivial partition, with the reason
/// recorded in `note`.
pub fn best_attack(
    sys: &BoxSystem,
    f: &HashFn,
    u: BitString,
    v: BitString,
    family: FamilyKind,
) -> Result<Attack, Error> {
    let trivial = trivial_attack(sys, f, u, v)?;
    let constructed = match construction_attack(sys, f, u, v) {
        Ok(a) => a,
        Err(Error::CellBound { u: cu, v: cv, x, y, detail }) => {
            return Ok(Attack {
                note: Some(format!(
                    "construction rejected at cell (u={cu}, v={cv}, x={x}, y={y}): {detail}"
                )),
                ..trivial
            });
        }
        Err(other) => return Err(other),
    };
    match validate_partition(&constructed.partition, family)? {
        Some(reason) => Ok(Attack { note: Some(format!("construction rejected: {reason}")), ..trivial }),
        None if constructed.d > trivial.d => Ok(constructed),
        None => Ok(trivial),
    }
}

// ---------------------------------------------------------------------------
// Distance bound
// ---------------------------------------------------------------------------

/// Decides `d ≥ (−1 + √(1 + 64ε²)) / (32ε)` exactly for `ε ∈ (0, ¼)`:
/// both sides are nonnegative, so the comparison squares to the rational
/// test `(32εd + 1)² ≥ 1 + 64ε²`.
pub fn bound_holds(d: &Rational, eps: &Rational) -> Result<bool, Error> {
    boxes::check_eps(eps, &int(0), &rat(1, 4), false)?;
    if d.is_negative() {
        return Err(Error::Domain(format!(
            "advantage d = {} is negative",
            to_frac_string(d)
        )));
    }
    let lhs = int(32) * eps * d + int(1);
    Ok(&lhs * &lhs >= int(1) + int(64) * eps * eps)
}

// ---------------------------------------------------------------------------
// Exhaustive scan
// ---------------------------------------------------------------------------

/// One scanned hash function.
#[derive(Clone, Debug)]
pub struct ScanRow {
    pub f: HashFn,
    pub strategy: Strategy,
    pub d: Rational,
    pub bound_holds: bool,
}

/// Largest `n` scanned without an explicit override (256 functions).
pub const SCAN_CAP: usize = 3;

/// Runs [`best_attack`] for every hash function on `n` bits at one
/// attacked input and reports each advantage against the `ε` bound.
/// Deterministic output order (ascending truth table) independent of the
/// worker count.
pub fn scan_all_f(
    sys: &BoxSystem,
    eps: &Rational,
    u: BitString,
    v: BitString,
    family: FamilyKind,
    force: bool,
) -> Result<Vec<ScanRow>, Error> {
    boxes::check_eps(eps, &int(0), &rat(1, 4), false)?;
    let n = sys.n();
    if n > SCAN_CAP && !force {
        return Err(Error::CapExceeded {
            n,
            cap: SCAN_CAP,
            hint: format!("{} functions; pass force to scan anyway", HashFn::count(n)),
        });
    }
    (0..HashFn::count(n) as u32)
        .into_par_iter()
        .map(|table| {
            let f = HashFn::from_table(n, table)?;
            let attack = best_attack(sys, &f, u, v, family)?;
            let holds = bound_holds(&attack.d, eps)?;
            Ok(ScanRow { f, strategy: attack.strategy, d: attack.d, bound_holds: holds })
        })
        .collect()
}

/// The scan row with the smallest advantage (ties broken by the first
/// truth table), i.e. the hash function the eavesdropper finds hardest to
/// attack — the headline of a scan report.
pub fn scan_summary(rows: &[ScanRow]) -> Option<&ScanRow> {
    rows.iter().min_by(|a, b| a.d.cmp(&b.d))
}

// ---------------------------------------------------------------------------
// Identity suite
// ---------------------------------------------------------------------------
//
// The row-shift construction stays admissible because the noisy product
// source and its reweighted element obey a family of exact symmetries.
// Each check below enumerates every instance of one identity and tallies
// failures, keeping the first counterexample as a witness.

/// Outcome of one identity checked over all of its instances.
#[derive(Clone, Debug)]
pub struct LemmaCheck {
    pub name: &'static str,
    /// Number of instances enumerated (after condition filters).
    pub checked: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
}

impl LemmaCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Running tally for one identity.
struct Tally {
    name: &'static str,
    checked: u64,
    failures: u64,
    first_failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, checked: 0, failures: 0, first_failure: None }
    }

    fn record(&mut self, ok: bool, witness: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(witness());
            }
        }
    }

    fn finish(self) -> LemmaCheck {
        LemmaCheck {
            name: self.name,
            checked: self.checked,
            failures: self.failures,
            first_failure: self.first_failure,
        }
    }
}

/// Renders one identity instance for failure witnesses: 1-based pair index
/// plus the four words.
fn instance_witness(n: usize, i: usize, in_word: u32, out_word: u32) -> String {
    format!(
        "pair {}, u={}, v={}, x={}, y={}",
        i + 1,
        BitString::new(n, in_word >> n),
        BitString::new(n, in_word & ((1 << n) - 1)),
        BitString::new(n, out_word >> n),
        BitString::new(n, out_word & ((1 << n) - 1)),
    )
}

/// Cell-level symmetries of the source system itself (no hash function
/// involved). On noisy products all three hold exactly:
///
/// * `alice-cell-symmetry` — when `v_i = 1`, flipping `y_i` equals
///   flipping `u_i`: `P(x, y^{i'} | u, v) = P(x, y | u^{i'}, v)`.
/// * `bob-cell-symmetry` — when `u_i = 1`, flipping `y_i` equals flipping
///   `v_i`: `P(x, y^{i'} | u, v) = P(x, y | u, v^{i'})`. (The condition
///   really is on `u_i`: with `u_i = 0` the pair's win parity ignores
///   `v_i`, so flipping `y_i` changes the cell while flipping `v_i` does
///   not — see the frozen counterexample test.)
/// * `pair-flip-invariance` — unconditionally, flipping `x_i` and `y_i`
///   together fixes every cell: `P(x, y | u, v) = P(x^{i'}, y^{i'} | u, v)`.
pub fn cell_symmetry_checks(sys: &BoxSystem) -> Vec<LemmaCheck> {
    let n = sys.n();
    let mut alice = Tally::new("alice-cell-symmetry");
    let mut bob = Tally::new("bob-cell-symmetry");
    let mut pair = Tally::new("pair-flip-invariance");
    for i in 0..n {
        let ua = 1u32 << (2 * n - 1 - i);
        let vb = 1u32 << (n - 1 - i);
        for in_word in 0..1u32 << (2 * n) {
            for out_word in 0..1u32 << (2 * n) {
                if in_word & vb != 0 {
                    alice.record(
                        sys.cell_words(in_word, out_word ^ vb)
                            == sys.cell_words(in_word ^ ua, out_word),
                        || instance_witness(n, i, in_word, out_word),
                    );
                }
                if in_word & ua != 0 {
                    bob.record(
                        sys.cell_words(in_word, out_word ^ vb)
                            == sys.cell_words(in_word ^ vb, out_word),
                        || instance_witness(n, i, in_word, out_word),
                    );
                }
                pair.record(
                    sys.cell_words(in_word, out_word)
                        == sys.cell_words(in_word, out_word ^ ua ^ vb),
                    || instance_witness(n, i, in_word, out_word),
                );
            }
        }
    }
    vec![alice.finish(), bob.finish(), pair.finish()]
}

/// The row-shift factor of every cell of one block, indexed by out word.
fn factor_table(sys: &BoxSystem, f: &HashFn, in_word: u32) -> Vec<Rational> {
    let n = sys.n();
    let rows = classify_rows(sys, f, in_word);
    let mut table = Vec::with_capacity(1 << (2 * n));
    for x in 0..1u32 << n {
        let fx = f.eval(x);
        for (s0, s1, class) in &rows {
            table.push(c_factor(fx, s0, s1, *class));
        }
    }
    table
}

/// Identities of the reweighted element `P⁰ = build_pz0(sys, f)` and of
/// the row-shift factors themselves:
///
/// * `alice-factor-symmetry` — when `v_i = 1` the shift factor obeys the
///   same exchange as the cells: `c(x, y^{i'} | u, v) = c(x, y | u^{i'}, v)`.
/// * `bob-factor-symmetry` — the Bob-side analogue, conditioned on
///   `u_i = 1` (same corrected condition as `bob-cell-symmetry`).
/// * `alice-row-shift-invariance` — for every full `x` and partial `y`:
///   `Σ_{y_i} P⁰(x, y | u, v) = Σ_{y_i} P⁰(x, y | u^{i'}, v)`.
/// * `alice-shift-invariance` — the same with `Σ_{x_i, y_i}`: flipping
///   `u_i` cannot signal through the pair's joint outputs.
/// * `bob-row-shift-invariance` / `bob-shift-invariance` — the analogues
///   flipping `v_i`.
/// * `weak-family-admissibility` — `P⁰` satisfies the per-pair family
///   plus the two-party family (each constraint is one instance).
/// * `bob-side-full-ns` — `P⁰` even satisfies every full-strength
///   non-signalling condition that only flips Bob inputs: the row-shift
///   acts per row, so Bob's side keeps its full symmetry.
pub fn construction_symmetry_checks(
    sys: &BoxSystem,
    f: &HashFn,
) -> Result<Vec<LemmaCheck>, Error> {
    let n = sys.n();
    if f.n() != n {
        return Err(Error::SizeMismatch { expected: n, got: f.n() });
    }
    let pz0 = build_pz0(sys, f)?;
    let factors: Vec<Vec<Rational>> =
        (0..1u32 << (2 * n)).map(|in_word| factor_table(sys, f, in_word)).collect();

    let mut alice_factor = Tally::new("alice-factor-symmetry");
    let mut bob_factor = Tally::new("bob-factor-symmetry");
    let mut alice_row = Tally::new("alice-row-shift-invariance");
    let mut alice_sum = Tally::new("alice-shift-invariance");
    let mut bob_row = Tally::new("bob-row-shift-invariance");
    let mut bob_sum = Tally::new("bob-shift-invariance");

    for i in 0..n {
        let ua = 1u32 << (2 * n - 1 - i);
        let vb = 1u32 << (n - 1 - i);
        for in_word in 0..1u32 << (2 * n) {
            for out_word in 0..1u32 << (2 * n) {
                if in_word & vb != 0 {
                    alice_factor.record(
                        factors[in_word as usize][(out_word ^ vb) as usize]
                            == factors[(in_word ^ ua) as usize][out_word as usize],
                        || instance_witness(n, i, in_word, out_word),
                    );
                }
                if in_word & ua != 0 {
                    bob_factor.record(
                        factors[in_word as usize][(out_word ^ vb) as usize]
                            == factors[(in_word ^ vb) as usize][out_word as usize],
                        || instance_witness(n, i, in_word, out_word),
                    );
                }
            }
            // Row sums: every full x with y_i summed out.
            for out_word in (0..1u32 << (2 * n)).filter(|w| w & vb == 0) {
                let row_sum = |word: u32| -> [Rational; 2] {
                    [
                        pz0.cell_words(word, out_word).clone()
                            + pz0.cell_words(word, out_word | vb),
                        pz0.cell_words(word ^ ua, out_word).clone()
                            + pz0.cell_words(word ^ ua, out_word | vb),
                    ]
                };
                let [here, alice_flipped] = row_sum(in_word);
                alice_row.record(here == alice_flipped, || {
                    instance_witness(n, i, in_word, out_word)
                });
                let bob_here = pz0.cell_words(in_word, out_word).clone()
                    + pz0.cell_words(in_word, out_word | vb);
                let bob_flipped = pz0.cell_words(in_word ^ vb, out_word).clone()
                    + pz0.cell_words(in_word ^ vb, out_word | vb);
                bob_row.record(bob_here == bob_flipped, || {
                    instance_witness(n, i, in_word, out_word)
                });
            }
            // Pair sums: x_i and y_i both summed out.
            for out_word in (0..1u32 << (2 * n)).filter(|w| w & (ua | vb) == 0) {
                let pair_sum = |word: u32| -> Rational {
                    [0, vb, ua, ua | vb]
                        .iter()
                        .map(|bits| pz0.cell_words(word, out_word | bits))
                        .sum()
                };
                alice_sum.record(pair_sum(in_word) == pair_sum(in_word ^ ua), || {
                    instance_witness(n, i, in_word, out_word)
                });
                bob_sum.record(pair_sum(in_word) == pair_sum(in_word ^ vb), || {
                    instance_witness(n, i, in_word, out_word)
                });
            }
        }
    }

    let mut family = Tally::new("weak-family-admissibility");
    let weak = admissible_family(FamilyKind::PairwiseBox, n);
    let report = constraints::check_fast(&pz0, &weak)?;
    let violated: HashMap<&str, &constraints::Violation> =
        report.violations.iter().map(|v| (v.label.as_str(), v)).collect();
    for c in weak.iter() {
        family.record(!violated.contains_key(c.label()), || {
            let v = violated[c.label()];
            format!("{} ({} ≠ {})", v.label, to_frac_string(&v.left), to_frac_string(&v.right))
        });
    }

    let mut bob_full = Tally::new("bob-side-full-ns");
    let bob_side = constraints::full_ns_bob_side(n)?;
    let report = constraints::check_fast(&pz0, &bob_side)?;
    let violated: HashMap<&str, &constraints::Violation> =
        report.violations.iter().map(|v| (v.label.as_str(), v)).collect();
    for c in &bob_side {
        bob_full.record(!violated.contains_key(c.label()), || {
            let v = violated[c.label()];
            format!("{} ({} ≠ {})", v.label, to_frac_string(&v.left), to_frac_string(&v.right))
        });
    }

    Ok(vec![
        alice_factor.finish(),
        bob_factor.finish(),
        alice_row.finish(),
        alice_sum.finish(),
        bob_row.finish(),
        bob_sum.finish(),
        family.finish(),
        bob_full.finish(),
    ])
}

/// The aggregated identity suite for one noisy product source.
#[derive(Clone, Debug)]
pub struct LemmaSuite {
    pub eps: Rational,
    pub n: usize,
    /// Number of hash functions the construction identities ran over.
    pub functions: u64,
    pub checks: Vec<LemmaCheck>,
}

impl LemmaSuite {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(LemmaCheck::passed)
    }
}

/// Runs every identity over the noisy product source with `n` box pairs:
/// the three cell symmetries once, and the construction identities for
/// every hash function on `n` bits, aggregated per identity. First
/// failures are prefixed with the offending truth table.
///
/// `eps` must lie strictly between 0 and ½: at the endpoints every row
/// degenerates (all-Equal or zero masses), so the row classes the
/// identities speak about are not populated.
pub fn lemma_suite(eps: &Rational, n: usize) -> Result<LemmaSuite, Error> {
    boxes::check_eps(eps, &int(0), &rat(1, 2), false)?;
    let sys = BoxSystem::product_system(eps, n)?;
    let mut checks = cell_symmetry_checks(&sys);
    let mut aggregated: Vec<LemmaCheck> = Vec::new();
    for f in HashFn::all(n) {
        let per_f = construction_symmetry_checks(&sys, &f)?;
        if aggregated.is_empty() {
            aggregated = per_f
                .into_iter()
                .map(|c| LemmaCheck {
                    first_failure: c.first_failure.map(|w| format!("f=0x{}: {w}", f.to_hex())),
                    ..c
                })
                .collect();
        } else {
            for (total, c) in aggregated.iter_mut().zip(per_f) {
                debug_assert_eq!(total.name, c.name);
                total.checked += c.checked;
                total.failures += c.failures;
                if total.first_failure.is_none() {
                    total.first_failure =
                        c.first_failure.map(|w| format!("f=0x{}: {w}", f.to_hex()));
                }
            }
        }
    }
    checks.extend(aggregated);
    Ok(LemmaSuite { eps: eps.clone(), n, functions: HashFn::count(n) as u64, checks })
}
