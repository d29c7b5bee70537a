//! Bipartite box systems over binary inputs and outputs, in exact arithmetic.
//!
//! A [`BoxSystem`] is a conditional distribution `P(x, y | u, v)` describing
//! `n` box pairs shared between Alice (inputs `u`, outputs `x`) and Bob
//! (inputs `v`, outputs `y`). Cells are exact rationals; per-input-pair
//! normalization is validated at construction, never assumed.
//!
//! Canonical cell order, shared by the constraint generators and the LP
//! column numbering: the linear index over `(u, v, x, y)` with `u` the most
//! significant group, i.e. `((u·2ⁿ + v)·2ⁿ + x)·2ⁿ + y` where each bit
//! string is read most-significant-box-first.

use std::fmt;

use num_traits::Signed;
use serde_json::Value;

use crate::bits::BitString;
use crate::rational::{int, parse_rational, rat, to_frac_string, Rational};
use crate::Error;

/// Largest supported row of box pairs (packed index words use `4n` bits).
pub const MAX_BOXES: usize = 4;

/// Which party a marginal keeps.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Alice,
    Bob,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Alice => write!(f, "alice"),
            Side::Bob => write!(f, "bob"),
        }
    }
}

/// Canonical linear index of a cell; `u` is the most significant group.
pub fn cell_index(n: usize, u: BitString, v: BitString, x: BitString, y: BitString) -> usize {
    debug_assert!(u.len() == n && v.len() == n && x.len() == n && y.len() == n);
    let side = 1usize << n;
    ((u.value() as usize * side + v.value() as usize) * side + x.value() as usize) * side
        + y.value() as usize
}

/// Number of cells of an `n`-pair system (`16ⁿ`).
pub fn cell_count(n: usize) -> usize {
    1usize << (4 * n)
}

/// Number of input pairs / output pairs per block (`4ⁿ`).
pub fn block_count(n: usize) -> usize {
    1usize << (2 * n)
}

pub(crate) fn idx_words(n: usize, in_word: u32, out_word: u32) -> usize {
    ((in_word as usize) << (2 * n)) | out_word as usize
}

/// A normalized bipartite box system `P(x, y | u, v)` on `n` box pairs.
#[derive(Clone, PartialEq, Eq)]
pub struct BoxSystem {
    n: usize,
    cells: Vec<Rational>,
}

impl BoxSystem {
    /// Builds a system from the canonical dense cell vector, validating
    /// cell bounds and per-`(u, v)` normalization.
    pub fn from_cells(n: usize, cells: Vec<Rational>) -> Result<Self, Error> {
        check_box_count(n)?;
        if cells.len() != cell_count(n) {
            return Err(Error::SizeMismatch {
                expected: cell_count(n),
                got: cells.len(),
            });
        }
        let sys = Self { n, cells };
        sys.validate()?;
        Ok(sys)
    }

    /// Builds a system by evaluating `f` on every `(u, v, x, y)` cell.
    pub fn from_fn(
        n: usize,
        mut f: impl FnMut(BitString, BitString, BitString, BitString) -> Rational,
    ) -> Result<Self, Error> {
        check_box_count(n)?;
        let mut cells = Vec::with_capacity(cell_count(n));
        for u in BitString::all(n) {
            for v in BitString::all(n) {
                for x in BitString::all(n) {
                    for y in BitString::all(n) {
                        cells.push(f(u, v, x, y));
                    }
                }
            }
        }
        Self::from_cells(n, cells)
    }

    fn validate(&self) -> Result<(), Error> {
        let one = int(1);
        for (i, c) in self.cells.iter().enumerate() {
            if c.is_negative() || *c > one {
                return Err(Error::InvalidSystem(format!(
                    "cell {} = {} outside [0, 1]",
                    self.describe_index(i),
                    to_frac_string(c)
                )));
            }
        }
        for u in BitString::all(self.n) {
            for v in BitString::all(self.n) {
                let sum = self.block_sum(u, v);
                if sum != one {
                    return Err(Error::InvalidSystem(format!(
                        "block (u={u}, v={v}) sums to {}, not 1",
                        to_frac_string(&sum)
                    )));
                }
            }
        }
        Ok(())
    }

    fn describe_index(&self, idx: usize) -> String {
        let n = self.n;
        let side = 1usize << n;
        let y = idx % side;
        let x = (idx / side) % side;
        let v = (idx / (side * side)) % side;
        let u = idx / (side * side * side);
        format!(
            "(u={}, v={}, x={}, y={})",
            BitString::new(n, u as u32),
            BitString::new(n, v as u32),
            BitString::new(n, x as u32),
            BitString::new(n, y as u32)
        )
    }

    /// Number of box pairs.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Cell `P(x, y | u, v)`.
    pub fn cell(&self, u: BitString, v: BitString, x: BitString, y: BitString) -> &Rational {
        &self.cells[cell_index(self.n, u, v, x, y)]
    }

    /// Cell by packed words: `in_word = u‖v`, `out_word = x‖y`.
    pub fn cell_words(&self, in_word: u32, out_word: u32) -> &Rational {
        &self.cells[idx_words(self.n, in_word, out_word)]
    }

    /// The dense cell vector in canonical order.
    pub fn cells(&self) -> &[Rational] {
        &self.cells
    }

    /// Sum of the `(u, v)` block (1 for every valid system).
    pub fn block_sum(&self, u: BitString, v: BitString) -> Rational {
        let block = block_count(self.n);
        let start = idx_words(self.n, (u.value() << self.n) | v.value(), 0);
        self.cells[start..start + block].iter().sum()
    }

    /// The perfect PR box: `x ⊕ y = u·v` with probability 1, uniform outputs.
    pub fn pr_box() -> Self {
        Self::noisy_pr_box(&int(0)).expect("eps 0 is in range")
    }

    /// Unbiased PR box with error `eps ∈ [0, 1/2]`: the winning cells
    /// (`x ⊕ y = u·v`) carry `(1-eps)/2`, the losing cells `eps/2`.
    pub fn noisy_pr_box(eps: &Rational) -> Result<Self, Error> {
        check_eps(eps, &int(0), &rat(1, 2), true)?;
        let win = (int(1) - eps) / int(2);
        let lose = eps / int(2);
        Self::from_fn(1, |u, v, x, y| {
            if x.value() ^ y.value() == u.value() & v.value() {
                win.clone()
            } else {
                lose.clone()
            }
        })
    }

    /// `n` independent noisy PR boxes: the cell is
    /// `((1-eps)/2)^a · (eps/2)^(n-a)` with `a` the number of winning pairs.
    pub fn product_system(eps: &Rational, n: usize) -> Result<Self, Error> {
        check_box_count(n)?;
        check_eps(eps, &int(0), &rat(1, 2), true)?;
        let win = (int(1) - eps) / int(2);
        let lose = eps / int(2);
        Self::from_fn(n, |u, v, x, y| {
            let mut p = int(1);
            for i in 0..n {
                if x.bit(i) ^ y.bit(i) == u.bit(i) & v.bit(i) {
                    p *= &win;
                } else {
                    p *= &lose;
                }
            }
            p
        })
    }

    /// Uniform noise: every output pair has probability `4⁻ⁿ` at every input.
    pub fn uniform(n: usize) -> Result<Self, Error> {
        check_box_count(n)?;
        let p = Rational::new(1.into(), (1i64 << (2 * n)).into());
        Self::from_fn(n, |_, _, _, _| p.clone())
    }

    /// Two box pairs where `X₂`, `Y₁`, `Y₂` are uniform and independent and
    /// `X₁ = Y₂ ⊕ U₂`. Satisfies the two-party and almost-backward
    /// conditions but signals backward in time on Alice's side (box 2's
    /// input is readable from box 1's output once `Y₂` is known).
    pub fn example_almost_backward() -> Self {
        Self::from_fn(2, |u, _v, x, y| {
            if x.bit(0) == y.bit(1) ^ u.bit(1) {
                rat(1, 8)
            } else {
                int(0)
            }
        })
        .expect("hard-coded table is normalized")
    }

    /// Two box pairs where `X₁`, `Y₁`, `Y₂` are uniform and independent and
    /// `X₂ = Y₁ ⊕ U₁`. Satisfies the two-party and pairwise-box conditions
    /// but not the full non-signalling conditions (box 1's input is readable
    /// from box 2's output once `Y₁` is known).
    pub fn example_not_full_ns() -> Self {
        Self::from_fn(2, |u, _v, x, y| {
            if x.bit(1) == y.bit(0) ^ u.bit(0) {
                rat(1, 8)
            } else {
                int(0)
            }
        })
        .expect("hard-coded table is normalized")
    }

    /// Tensor product: `self`'s boxes come first (most significant).
    pub fn tensor(&self, other: &BoxSystem) -> Result<Self, Error> {
        let n = self.n + other.n;
        check_box_count(n)?;
        Self::from_fn(n, |u, v, x, y| {
            let (ua, ub) = u.split(self.n);
            let (va, vb) = v.split(self.n);
            let (xa, xb) = x.split(self.n);
            let (ya, yb) = y.split(self.n);
            self.cell(ua, va, xa, ya) * other.cell(ub, vb, xb, yb)
        })
    }

    /// One party's marginal table, checked to be independent of the other
    /// party's input (errors with the two disagreeing inputs otherwise).
    pub fn marginal(&self, side: Side) -> Result<Marginal, Error> {
        let n = self.n;
        let m = 1u32 << n;
        let mut table = Vec::with_capacity((m as usize) * (m as usize));
        for kept_in in BitString::all(n) {
            // Candidate distribution at the first discarded input, then
            // compared against every other discarded input.
            let dist_at = |other_in: BitString| -> Vec<Rational> {
                BitString::all(n)
                    .map(|kept_out| {
                        let mut s = int(0);
                        for other_out in BitString::all(n) {
                            s += match side {
                                Side::Alice => self.cell(kept_in, other_in, kept_out, other_out),
                                Side::Bob => self.cell(other_in, kept_in, other_out, kept_out),
                            };
                        }
                        s
                    })
                    .collect()
            };
            let reference = dist_at(BitString::zeros(n));
            for other_in in BitString::all(n).skip(1) {
                let probe = dist_at(other_in);
                if probe != reference {
                    let out = BitString::all(n)
                        .zip(reference.iter().zip(probe.iter()))
                        .find(|(_, (a, b))| a != b)
                        .map(|(o, _)| o)
                        .expect("vectors differ");
                    return Err(Error::Signalling {
                        context: format!(
                            "{side} marginal at kept input {kept_in}, output {out}"
                        ),
                        input_a: BitString::zeros(n).to_string(),
                        input_b: other_in.to_string(),
                    });
                }
            }
            table.extend(reference);
        }
        Ok(Marginal { n, side, table })
    }

    /// Marginal onto a single box pair `i` (0-based), checked to be
    /// independent of every other pair's inputs.
    pub fn pair_marginal(&self, i: usize) -> Result<BoxSystem, Error> {
        let n = self.n;
        if i >= n {
            return Err(Error::Domain(format!(
                "box pair index {i} out of range for n = {n}"
            )));
        }
        let mut cells: Option<Vec<Rational>> = None;
        // Enumerate the kept pair's (u_i, v_i) against every assignment of
        // the other pairs' inputs; all assignments must agree.
        for other_u in BitString::all(n - 1) {
            for other_v in BitString::all(n - 1) {
                let mut probe = Vec::with_capacity(16);
                for ui in 0..2u32 {
                    for vi in 0..2u32 {
                        let u = insert_bit(other_u, i, ui as u8);
                        let v = insert_bit(other_v, i, vi as u8);
                        for xi in 0..2u32 {
                            for yi in 0..2u32 {
                                let mut s = int(0);
                                for other_x in BitString::all(n - 1) {
                                    for other_y in BitString::all(n - 1) {
                                        let x = insert_bit(other_x, i, xi as u8);
                                        let y = insert_bit(other_y, i, yi as u8);
                                        s += self.cell(u, v, x, y);
                                    }
                                }
                                probe.push(s);
                            }
                        }
                    }
                }
                match &cells {
                    None => cells = Some(probe),
                    Some(reference) => {
                        if *reference != probe {
                            return Err(Error::Signalling {
                                context: format!("marginal onto box pair {}", i + 1),
                                input_a: "all-zero other inputs".into(),
                                input_b: format!("u_other={other_u}, v_other={other_v}"),
                            });
                        }
                    }
                }
            }
        }
        BoxSystem::from_cells(1, cells.expect("at least one assignment"))
    }
}

impl fmt::Debug for BoxSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoxSystem(n={})", self.n)
    }
}

/// Inserts `bit` at box position `i` (0-based) into a string of length
/// `s.len()`, producing a string one box longer.
fn insert_bit(s: BitString, i: usize, bit: u8) -> BitString {
    let (left, right) = s.split(i);
    let mid = BitString::new(1, bit as u32);
    left.concat(&mid).concat(&right)
}

fn check_box_count(n: usize) -> Result<(), Error> {
    if n == 0 || n > MAX_BOXES {
        return Err(Error::Domain(format!(
            "box count n = {n} outside supported range 1..={MAX_BOXES}"
        )));
    }
    Ok(())
}

pub(crate) fn check_eps(
    eps: &Rational,
    lo: &Rational,
    hi: &Rational,
    closed: bool,
) -> Result<(), Error> {
    let ok = if closed {
        eps >= lo && eps <= hi
    } else {
        eps > lo && eps < hi
    };
    if !ok {
        let (l, r) = if closed { ("[", "]") } else { ("(", ")") };
        return Err(Error::Domain(format!(
            "eps = {} outside {}{}, {}{}",
            to_frac_string(eps),
            l,
            to_frac_string(lo),
            to_frac_string(hi),
            r
        )));
    }
    Ok(())
}

/// One party's marginal `P(out | in)` table.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Marginal {
    n: usize,
    side: Side,
    /// Dense `[input][output]` table.
    table: Vec<Rational>,
}

impl Marginal {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn prob(&self, input: BitString, output: BitString) -> &Rational {
        &self.table[(input.value() as usize) * (1 << self.n) + output.value() as usize]
    }

    /// True when every conditional distribution is uniform.
    pub fn is_uniform(&self) -> bool {
        let p = Rational::new(1.into(), (1i64 << self.n).into());
        self.table.iter().all(|c| *c == p)
    }
}

/// CHSH value of a single box pair:
/// `Σ_{u,v} (1/4) · Pr[X ⊕ Y = u·v]`. Local deterministic boxes reach at
/// most 3/4; the PR box reaches 1; error-`eps` boxes reach `1 - eps`.
pub fn chsh_value(sys: &BoxSystem) -> Result<Rational, Error> {
    if sys.n() != 1 {
        return Err(Error::Domain(format!(
            "CHSH value is defined for a single box pair, got n = {}",
            sys.n()
        )));
    }
    let mut total = int(0);
    for u in BitString::all(1) {
        for v in BitString::all(1) {
            for x in BitString::all(1) {
                for y in BitString::all(1) {
                    if x.value() ^ y.value() == u.value() & v.value() {
                        total += sys.cell(u, v, x, y);
                    }
                }
            }
        }
    }
    Ok(total / int(4))
}

/// A sub-normalized table: cells in `[0, 1]`, block sums at most 1.
/// Appears as the weighted element `p·Pᶻ` of a box-system partition.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SubNormalizedSystem {
    n: usize,
    cells: Vec<Rational>,
}

impl SubNormalizedSystem {
    pub fn from_cells(n: usize, cells: Vec<Rational>) -> Result<Self, Error> {
        check_box_count(n)?;
        if cells.len() != cell_count(n) {
            return Err(Error::SizeMismatch {
                expected: cell_count(n),
                got: cells.len(),
            });
        }
        let one = int(1);
        if let Some(c) = cells.iter().find(|c| c.is_negative() || **c > one) {
            return Err(Error::InvalidSystem(format!(
                "sub-normalized cell {} outside [0, 1]",
                to_frac_string(c)
            )));
        }
        let block = block_count(n);
        for (b, chunk) in cells.chunks(block).enumerate() {
            let sum: Rational = chunk.iter().sum();
            if sum > one {
                return Err(Error::InvalidSystem(format!(
                    "sub-normalized block {b} sums to {} > 1",
                    to_frac_string(&sum)
                )));
            }
        }
        Ok(Self { n, cells })
    }

    /// The box system scaled by a weight in `[0, 1]`.
    pub fn scaled(sys: &BoxSystem, weight: &Rational) -> Result<Self, Error> {
        if weight.is_negative() || *weight > int(1) {
            return Err(Error::Domain(format!(
                "weight {} outside [0, 1]",
                to_frac_string(weight)
            )));
        }
        Self::from_cells(sys.n(), sys.cells().iter().map(|c| c * weight).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[Rational] {
        &self.cells
    }
}

// ---------------------------------------------------------------------------
// JSON interchange format
// ---------------------------------------------------------------------------

/// Serializes a system to the JSON interchange format:
/// `{"n": 2, "cells": {"u,v": {"x,y": "num/den", ...}, ...}}`.
/// Bit strings are most-significant-box-first; every cell is present; keys
/// are sorted, so output bytes are deterministic.
pub fn to_json_string(sys: &BoxSystem) -> String {
    let n = sys.n();
    let mut blocks = serde_json::Map::new();
    for u in BitString::all(n) {
        for v in BitString::all(n) {
            let mut outs = serde_json::Map::new();
            for x in BitString::all(n) {
                for y in BitString::all(n) {
                    outs.insert(
                        format!("{x},{y}"),
                        Value::String(to_frac_string(sys.cell(u, v, x, y))),
                    );
                }
            }
            blocks.insert(format!("{u},{v}"), Value::Object(outs));
        }
    }
    let mut root = serde_json::Map::new();
    root.insert("n".into(), Value::from(n as u64));
    root.insert("cells".into(), Value::Object(blocks));
    serde_json::to_string_pretty(&Value::Object(root)).expect("valid JSON value")
}

/// Parses the JSON interchange format. Every cell must be present
/// (totality), every value must be a rational string, and the table must
/// validate as a box system.
pub fn from_json_str(text: &str) -> Result<BoxSystem, Error> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Format("top level must be an object".into()))?;
    for key in obj.keys() {
        if key != "n" && key != "cells" {
            return Err(Error::Format(format!("unknown top-level key `{key}`")));
        }
    }
    let n = obj
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("missing or non-integer `n`".into()))? as usize;
    check_box_count(n)?;
    let blocks = obj
        .get("cells")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Format("missing `cells` object".into()))?;

    let expected_blocks = block_count(n);
    if blocks.len() != expected_blocks {
        return Err(Error::Format(format!(
            "expected {expected_blocks} input blocks, found {}",
            blocks.len()
        )));
    }
    let mut cells = vec![int(0); cell_count(n)];
    for u in BitString::all(n) {
        for v in BitString::all(n) {
            let block_key = format!("{u},{v}");
            let outs = blocks
                .get(&block_key)
                .and_then(Value::as_object)
                .ok_or_else(|| Error::Format(format!("missing input block `{block_key}`")))?;
            if outs.len() != block_count(n) {
                return Err(Error::Format(format!(
                    "block `{block_key}` has {} entries, expected {}",
                    outs.len(),
                    block_count(n)
                )));
            }
            for x in BitString::all(n) {
                for y in BitString::all(n) {
                    let out_key = format!("{x},{y}");
                    let cell = outs.get(&out_key).ok_or_else(|| {
                        Error::Format(format!("missing cell `{out_key}` in block `{block_key}`"))
                    })?;
                    let text = cell.as_str().ok_or_else(|| {
                        Error::Format(format!(
                            "cell `{block_key}` / `{out_key}` must be a rational string"
                        ))
                    })?;
                    cells[cell_index(n, u, v, x, y)] = parse_rational(text)?;
                }
            }
        }
    }
    BoxSystem::from_cells(n, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pr_box_cells() {
        let pr = BoxSystem::pr_box();
        let b = |s: &str| BitString::parse(s).unwrap();
        assert_eq!(*pr.cell(b("0"), b("0"), b("0"), b("0")), rat(1, 2));
        assert_eq!(*pr.cell(b("1"), b("1"), b("0"), b("0")), int(0));
        assert_eq!(pr.block_sum(b("1"), b("0")), int(1));
    }

    #[test]
    fn noisy_pr_box_cells() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        let b = |s: &str| BitString::parse(s).unwrap();
        // Losing cell at u·v = 1: eps/2.
        assert_eq!(*sys.cell(b("1"), b("1"), b("0"), b("0")), rat(1, 20));
        // Winning cell at u·v = 1: (1-eps)/2.
        assert_eq!(*sys.cell(b("1"), b("1"), b("0"), b("1")), rat(9, 20));
        // Winning cell at u·v = 0.
        assert_eq!(*sys.cell(b("0"), b("0"), b("1"), b("1")), rat(9, 20));
        assert_eq!(BoxSystem::noisy_pr_box(&int(0)).unwrap(), BoxSystem::pr_box());
        assert!(BoxSystem::noisy_pr_box(&rat(3, 5)).is_err());
        assert!(BoxSystem::noisy_pr_box(&rat(-1, 10)).is_err());
    }

    #[test]
    fn product_system_cells() {
        let sys = BoxSystem::product_system(&rat(1, 10), 2).unwrap();
        let b = |s: &str| BitString::parse(s).unwrap();
        // Both boxes lose at u=v=11.
        assert_eq!(*sys.cell(b("11"), b("11"), b("00"), b("00")), rat(1, 400));
        // Both boxes win at u=10, v=11, x=10, y=00.
        assert_eq!(*sys.cell(b("10"), b("11"), b("10"), b("00")), rat(81, 400));
        // One box of each kind.
        assert_eq!(*sys.cell(b("11"), b("11"), b("01"), b("00")), rat(9, 400));
        // n = 1 product is the noisy box itself.
        assert_eq!(
            BoxSystem::product_system(&rat(1, 10), 1).unwrap(),
            BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap()
        );
    }

    #[test]
    fn tensor_matches_product() {
        let e = rat(1, 10);
        let one = BoxSystem::noisy_pr_box(&e).unwrap();
        let two = one.tensor(&one).unwrap();
        assert_eq!(two, BoxSystem::product_system(&e, 2).unwrap());
    }

    #[test]
    fn chsh_values() {
        assert_eq!(chsh_value(&BoxSystem::pr_box()).unwrap(), int(1));
        let noisy = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        assert_eq!(chsh_value(&noisy).unwrap(), rat(9, 10));
        assert_eq!(chsh_value(&BoxSystem::uniform(1).unwrap()).unwrap(), rat(1, 2));
        let two = BoxSystem::uniform(2).unwrap();
        assert!(chsh_value(&two).is_err());
    }

    #[test]
    fn chsh_local_deterministic_max_is_three_quarters() {
        // Brute-force oracle over the 16 deterministic local strategies
        // x = a(u), y = b(v); each of a, b ranges over the 4 unary boolean
        // functions.
        let funcs: [fn(u32) -> u32; 4] = [|_| 0, |_| 1, |u| u, |u| 1 ^ u];
        let mut best = int(0);
        for a in funcs {
            for bf in funcs {
                let sys = BoxSystem::from_fn(1, |u, v, x, y| {
                    if x.value() == a(u.value()) && y.value() == bf(v.value()) {
                        int(1)
                    } else {
                        int(0)
                    }
                })
                .unwrap();
                let val = chsh_value(&sys).unwrap();
                if val > best {
                    best = val;
                }
            }
        }
        assert_eq!(best, rat(3, 4));
    }

    #[test]
    fn example_tables_are_normalized_with_uniform_marginals() {
        for sys in [
            BoxSystem::example_almost_backward(),
            BoxSystem::example_not_full_ns(),
        ] {
            assert_eq!(sys.n(), 2);
            let alice = sys.marginal(Side::Alice).unwrap();
            let bob = sys.marginal(Side::Bob).unwrap();
            assert!(bob.is_uniform(), "Bob's outputs are uniform coins");
            // Alice's marginal is uniform too (X1 is a coin XORed with u2).
            assert!(alice.is_uniform());
        }
    }

    #[test]
    fn example_almost_backward_cell() {
        let sys = BoxSystem::example_almost_backward();
        let b = |s: &str| BitString::parse(s).unwrap();
        // x1 = 1 but y2 ⊕ u2 = 1 ⊕ 1 = 0 → forbidden cell.
        assert_eq!(*sys.cell(b("01"), b("00"), b("10"), b("01")), int(0));
        // x1 = 0 = y2 ⊕ u2 → allowed cell, weight 1/8.
        assert_eq!(*sys.cell(b("01"), b("00"), b("00"), b("01")), rat(1, 8));
    }

    #[test]
    fn marginal_detects_signalling() {
        // Bob outputs his copy of Alice's input: y = u, x uniform.
        let sys = BoxSystem::from_fn(1, |u, _v, _x, y| {
            if y.value() == u.value() {
                rat(1, 2)
            } else {
                int(0)
            }
        })
        .unwrap();
        let err = sys.marginal(Side::Bob).unwrap_err();
        match err {
            Error::Signalling { context, input_a, input_b } => {
                assert!(context.contains("bob"), "context names the kept side: {context}");
                assert_ne!(input_a, input_b, "witness names two disagreeing inputs");
            }
            other => panic!("expected signalling error, got {other}"),
        }
        // The one-sided table is fine the other way: Alice's marginal is
        // well defined (x uniform, independent of v).
        assert!(sys.marginal(Side::Alice).unwrap().is_uniform());
    }

    #[test]
    fn one_sided_deterministic_table_has_constant_marginal() {
        // Alice outputs her input, Bob outputs the constant 0. Discarding
        // Alice leaves a well-defined constant distribution for Bob.
        let sys = BoxSystem::from_fn(1, |u, _v, x, y| {
            if x.value() == u.value() && y.value() == 0 {
                int(1)
            } else {
                int(0)
            }
        })
        .unwrap();
        let bob = sys.marginal(Side::Bob).unwrap();
        for input in BitString::all(1) {
            assert_eq!(*bob.prob(input, BitString::zeros(1)), int(1));
        }
    }

    #[test]
    fn pair_marginal_of_tensor_recovers_factors() {
        let pr = BoxSystem::pr_box();
        let noise = BoxSystem::uniform(1).unwrap();
        let combined = pr.tensor(&noise).unwrap();
        let first = combined.pair_marginal(0).unwrap();
        assert_eq!(chsh_value(&first).unwrap(), int(1));
        let second = combined.pair_marginal(1).unwrap();
        assert_eq!(chsh_value(&second).unwrap(), rat(1, 2));
        assert!(combined.pair_marginal(2).is_err());
    }

    #[test]
    fn from_cells_rejects_bad_tables() {
        // Wrong length.
        assert!(BoxSystem::from_cells(1, vec![int(0); 5]).is_err());
        // Negative cell.
        let mut cells = vec![rat(1, 4); 16];
        cells[0] = rat(-1, 4);
        cells[1] = rat(3, 4);
        assert!(BoxSystem::from_cells(1, cells).is_err());
        // Bad normalization.
        assert!(BoxSystem::from_cells(1, vec![rat(1, 8); 16]).is_err());
    }

    #[test]
    fn subnormalized_accepts_scaled_systems_only() {
        let sys = BoxSystem::noisy_pr_box(&rat(1, 10)).unwrap();
        assert!(SubNormalizedSystem::scaled(&sys, &rat(1, 2)).is_ok());
        assert!(SubNormalizedSystem::scaled(&sys, &int(1)).is_ok());
        assert!(SubNormalizedSystem::scaled(&sys, &rat(3, 2)).is_err());
    }

    #[test]
    fn json_roundtrip_and_totality() {
        let sys = BoxSystem::product_system(&rat(1, 10), 2).unwrap();
        let text = to_json_string(&sys);
        let back = from_json_str(&text).unwrap();
        assert_eq!(back, sys);
        // Deterministic bytes.
        assert_eq!(text, to_json_string(&back));

        // Remove one cell: totality violation.
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["cells"]["00,00"]
            .as_object_mut()
            .unwrap()
            .remove("00,00");
        assert!(from_json_str(&v.to_string()).is_err());

        // Corrupt a value into a float: rejected (no binary floats).
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["cells"]["00,00"]["00,00"] = Value::from(0.25);
        assert!(from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn cell_index_is_u_major() {
        let b = |s: &str| BitString::parse(s).unwrap();
        // ((u·4 + v)·4 + x)·4 + y at n = 2 with packed values.
        assert_eq!(cell_index(2, b("00"), b("00"), b("00"), b("00")), 0);
        assert_eq!(cell_index(2, b("00"), b("00"), b("00"), b("01")), 1);
        assert_eq!(cell_index(2, b("00"), b("00"), b("01"), b("00")), 4);
        assert_eq!(cell_index(2, b("00"), b("01"), b("00"), b("00")), 16);
        assert_eq!(cell_index(2, b("01"), b("00"), b("00"), b("00")), 64);
        assert_eq!(cell_index(2, b("10"), b("00"), b("00"), b("00")), 128);
    }
}
