//! Occupation sequences, permanents and determinants, subsequence splits
//! and the truncated Fock basis with its ladder operators.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{c, det, CMat, C64};
use crate::model::Statistics;
use crate::{Error, Result};

/// Occupation counts `(i₁, …, i_d)`, standing for the sorted sequence
/// `(1^{i₁}, …, d^{i_d})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationSequence {
    counts: Vec<usize>,
}

impl OccupationSequence {
    pub fn new(counts: Vec<usize>) -> Self {
        OccupationSequence { counts }
    }

    pub fn vacuum(d: usize) -> Self {
        OccupationSequence { counts: vec![0; d] }
    }

    /// Validated against the statistics and a per-level cap.
    pub fn checked(counts: Vec<usize>, statistics: Statistics, n_max: usize) -> Result<Self> {
        let cap = if statistics == Statistics::Fermion { 1 } else { n_max };
        if counts.iter().any(|&k| k > cap) {
            return Err(Error::invalid("occupation exceeds the per-level cap"));
        }
        Ok(OccupationSequence { counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// The sorted sequence of level indices (0-based).
    pub fn sequence(&self) -> Vec<usize> {
        self.counts.iter().enumerate().flat_map(|(n, &k)| core::iter::repeat_n(n, k)).collect()
    }

    /// `i₁!⋯i_d!`.
    pub fn factorial_product(&self) -> f64 {
        self.counts.iter().map(|&k| factorial(k)).product()
    }

    fn minus(&self, other: &OccupationSequence) -> OccupationSequence {
        OccupationSequence { counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a - b).collect() }
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Largest matrix accepted by [`permanent`].
pub const PERMANENT_LIMIT: usize = 24;

/// Ryser's formula visited in Gray-code order, `O(2ⁿ n)`.
pub fn permanent(m: &CMat) -> Result<C64> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::invalid("permanent of a non-square matrix"));
    }
    if n > PERMANENT_LIMIT {
        return Err(Error::TooLarge { n, limit: PERMANENT_LIMIT });
    }
    if n == 0 {
        return Ok(c(1.0, 0.0));
    }
    let mut row_sums = vec![c(0.0, 0.0); n];
    let mut in_set = vec![false; n];
    let mut total = c(0.0, 0.0);
    for k in 1u64..(1u64 << n) {
        let j = k.trailing_zeros() as usize;
        let add = !in_set[j];
        in_set[j] = add;
        for (i, r) in row_sums.iter_mut().enumerate() {
            if add {
                *r += m[(i, j)];
            } else {
                *r -= m[(i, j)];
            }
        }
        let prod: C64 = row_sums.iter().product();
        // Gray code k ^ (k >> 1) has the parity of the set size.
        if (k ^ (k >> 1)).count_ones() % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
    }
    Ok(if n % 2 == 1 { -total } else { total })
}

/// Determinant by LU with partial pivoting; `det(0×0) = 1`.
pub fn determinant(m: &CMat) -> C64 {
    det(m)
}

/// `perm` for bosons, `det` for fermions.
pub fn statistics_form(m: &CMat, statistics: Statistics) -> Result<C64> {
    match statistics {
        Statistics::Boson => permanent(m),
        Statistics::Fermion => Ok(determinant(m)),
    }
}

/// Replicated submatrix: row `r` is row `rows.sequence()[r]` of `a` and
/// column `s` is column `cols.sequence()[s]`.
pub fn build_submatrix(a: &CMat, rows: &OccupationSequence, cols: &OccupationSequence) -> Result<CMat> {
    if rows.total() != cols.total() {
        return Err(Error::invalid("submatrix needs equal row and column totals"));
    }
    let r = rows.sequence();
    let s = cols.sequence();
    Ok(CMat::from_fn(r.len(), s.len(), |i, j| a[(r[i], s[j])]))
}

/// One way of splitting a sequence into a chosen subsequence and its
/// complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsequenceSplit {
    pub chosen: OccupationSequence,
    pub complement: OccupationSequence,
    /// Number of index choices giving these counts, `Π C(i_n, i'_n)`.
    pub multiplicity: u64,
    /// Parity of the chosen-then-complement reordering.
    pub sign: i8,
}

/// A pair of splits with equal chosen totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPair {
    pub i: SubsequenceSplit,
    pub j: SubsequenceSplit,
}

impl SplitPair {
    /// Statistics-dependent weight: multiplicity for bosons, sign for fermions.
    pub fn weight(&self, statistics: Statistics) -> f64 {
        match statistics {
            Statistics::Boson => (self.i.multiplicity * self.j.multiplicity) as f64,
            Statistics::Fermion => (self.i.sign * self.j.sign) as f64,
        }
    }
}

/// `(−1)^{#(x ∈ chosen, y ∈ complement, x > y)}`, the sign of moving the
/// chosen elements to the front of the sorted parent sequence.
fn split_sign(chosen: &[usize], complement: &[usize]) -> i8 {
    let mut inversions = 0usize;
    let mut below = 0usize;
    // Count pairs with chosen level strictly greater than complement level.
    for n in 0..chosen.len() {
        inversions += chosen[n] * below;
        below += complement[n];
    }
    if inversions.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// All splits of `parent`, grouped by chosen total.
fn splits_by_total(parent: &OccupationSequence) -> Vec<Vec<SubsequenceSplit>> {
    let mut groups: Vec<Vec<SubsequenceSplit>> = vec![Vec::new(); parent.total() + 1];
    let d = parent.levels();
    let mut chosen = vec![0usize; d];
    loop {
        let ch = OccupationSequence::new(chosen.clone());
        let comp = parent.minus(&ch);
        let multiplicity = parent.counts.iter().zip(&chosen).map(|(&n, &k)| binomial(n, k)).product();
        let sign = split_sign(&chosen, comp.counts());
        groups[ch.total()].push(SubsequenceSplit { chosen: ch, complement: comp, multiplicity, sign });
        // Odometer over 0..=parent[n].
        let mut n = 0;
        while n < d {
            if chosen[n] < parent.counts[n] {
                chosen[n] += 1;
                break;
            }
            chosen[n] = 0;
            n += 1;
        }
        if n == d {
            break;
        }
    }
    groups
}

/// Streams every pair of splits of `i` and `j` with equal chosen totals.
pub fn enumerate_splits(i: &OccupationSequence, j: &OccupationSequence, _statistics: Statistics) -> SplitIter {
    let gi = splits_by_total(i);
    let gj = splits_by_total(j);
    SplitIter { gi, gj, total: 0, a: 0, b: 0 }
}

pub struct SplitIter {
    gi: Vec<Vec<SubsequenceSplit>>,
    gj: Vec<Vec<SubsequenceSplit>>,
    total: usize,
    a: usize,
    b: usize,
}

impl Iterator for SplitIter {
    type Item = SplitPair;

    fn next(&mut self) -> Option<SplitPair> {
        let top = self.gi.len().min(self.gj.len());
        while self.total < top {
            let (li, lj) = (&self.gi[self.total], &self.gj[self.total]);
            if self.a < li.len() && self.b < lj.len() {
                let pair = SplitPair { i: li[self.a].clone(), j: lj[self.b].clone() };
                self.b += 1;
                if self.b == lj.len() {
                    self.b = 0;
                    self.a += 1;
                }
                return Some(pair);
            }
            self.total += 1;
            self.a = 0;
            self.b = 0;
        }
        None
    }
}

/// Fock states with total particle number `≤ n_cap` and at most `n_max`
/// particles per level, ordered by total and then lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    levels: usize,
    statistics: Statistics,
    n_cap: usize,
    n_max: usize,
    states: Vec<OccupationSequence>,
    index: BTreeMap<Vec<usize>, usize>,
}

impl FockBasis {
    pub fn new(levels: usize, statistics: Statistics, n_cap: usize, n_max: usize) -> Self {
        let n_max = if statistics == Statistics::Fermion { 1 } else { n_max };
        let n_cap = n_cap.min(levels * n_max);
        let mut states = Vec::new();
        for total in 0..=n_cap {
            let mut counts = vec![0usize; levels];
            collect_fixed_total(&mut counts, 0, total, n_max, &mut states);
        }
        let index = states.iter().enumerate().map(|(k, s)| (s.counts.clone(), k)).collect();
        FockBasis { levels, statistics, n_cap, n_max, states, index }
    }

    /// Full fermionic Fock space on `levels` levels.
    pub fn fermionic(levels: usize) -> Self {
        Self::new(levels, Statistics::Fermion, levels, 1)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn n_cap(&self) -> usize {
        self.n_cap
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn states(&self) -> &[OccupationSequence] {
        &self.states
    }

    pub fn index_of(&self, counts: &[usize]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// `a_i†` on the truncated basis; components leaving the basis are
    /// dropped. Fermions carry the sign `(−1)^{Σ_{j<i} n_j}`.
    pub fn creation(&self, level: usize) -> CMat {
        let n = self.len();
        let mut op = CMat::zeros(n, n);
        for (col, s) in self.states.iter().enumerate() {
            if let Some((row, amp)) = self.raise(s, level) {
                op[(row, col)] = c(amp, 0.0);
            }
        }
        op
    }

    pub fn annihilation(&self, level: usize) -> CMat {
        self.creation(level).adjoint()
    }

    /// Target index and amplitude of `a_level† |s⟩`.
    pub fn raise(&self, s: &OccupationSequence, level: usize) -> Option<(usize, f64)> {
        let mut counts = s.counts.clone();
        counts[level] += 1;
        let row = self.index_of(&counts)?;
        let amp = match self.statistics {
            Statistics::Boson => (counts[level] as f64).sqrt(),
            Statistics::Fermion => {
                if s.counts[..level].iter().sum::<usize>() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        Some((row, amp))
    }

    /// `a_i† a_j`, computed exactly from the occupations so truncation of the
    /// intermediate state never matters.
    pub fn hopping(&self, i: usize, j: usize) -> CMat {
        let n = self.len();
        let mut op = CMat::zeros(n, n);
        for (col, s) in self.states.iter().enumerate() {
            if s.counts[j] == 0 {
                continue;
            }
            let mut mid = s.counts.clone();
            mid[j] -= 1;
            let mut amp = (s.counts[j] as f64).sqrt();
            let parity = |cs: &[usize], upto: usize| cs[..upto].iter().sum::<usize>() % 2;
            if self.statistics == Statistics::Fermion && parity(&s.counts, j) == 1 {
                amp = -amp;
            }
            let mut fin = mid.clone();
            fin[i] += 1;
            if self.statistics == Statistics::Fermion {
                if fin[i] > 1 {
                    continue;
                }
                if parity(&mid, i) == 1 {
                    amp = -amp;
                }
            } else {
                amp *= (fin[i] as f64).sqrt();
            }
            if let Some(row) = self.index_of(&fin) {
                op[(row, col)] += c(amp, 0.0);
            }
        }
        op
    }

    /// `Σ_ij h_ij a_i† a_j`.
    pub fn quadratic(&self, h: &CMat) -> CMat {
        let n = self.len();
        let mut op = CMat::zeros(n, n);
        for i in 0..self.levels {
            for j in 0..self.levels {
                if h[(i, j)] != c(0.0, 0.0) {
                    op += self.hopping(i, j) * h[(i, j)];
                }
            }
        }
        op
    }

    /// Total number operator.
    pub fn number(&self) -> CMat {
        CMat::from_diagonal(&crate::CVec::from_iterator(self.len(), self.states.iter().map(|s| c(s.total() as f64, 0.0))))
    }
}

fn collect_fixed_total(counts: &mut Vec<usize>, level: usize, remaining: usize, n_max: usize, out: &mut Vec<OccupationSequence>) {
    let d = counts.len();
    if level + 1 == d {
        if remaining <= n_max {
            counts[level] = remaining;
            out.push(OccupationSequence::new(counts.clone()));
        }
        return;
    }
    for k in 0..=remaining.min(n_max) {
        counts[level] = k;
        collect_fixed_total(counts, level + 1, remaining - k, n_max, out);
    }
    counts[level] = 0;
}

#[cfg(test)]
pub(crate) fn permanent_leibniz(m: &CMat) -> C64 {
    fn rec(m: &CMat, row: usize, used: &mut Vec<bool>) -> C64 {
        let n = m.nrows();
        if row == n {
            return c(1.0, 0.0);
        }
        let mut acc = c(0.0, 0.0);
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                acc += m[(row, col)] * rec(m, row + 1, used);
                used[col] = false;
            }
        }
        acc
    }
    rec(m, 0, &mut vec![false; m.nrows()])
}
