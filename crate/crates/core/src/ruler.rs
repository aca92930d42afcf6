//! Coset pattern design.
//!
//! A coset pattern selects `M` of the `N` cosets of the Nyquist grid. The
//! uncorrelated-bins estimator needs a pattern whose modular difference set is
//! complete (a circular sparse ruler); the correlated-bins estimator needs a
//! family of patterns that jointly contains every pair of cosets.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest period for which the branch-and-bound search is attempted.
pub const MAX_SEARCH_PERIOD: usize = 64;

/// Default wall-clock budget for the branch-and-bound search.
pub const DEFAULT_SEARCH_BUDGET: Duration = Duration::from_secs(20);

/// A period `N` and the sorted set of active coset indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPattern")]
pub struct CosetPattern {
    period: usize,
    marks: Vec<usize>,
}

#[derive(Deserialize)]
struct RawPattern {
    period: usize,
    marks: Vec<usize>,
}

impl TryFrom<RawPattern> for CosetPattern {
    type Error = Error;
    fn try_from(raw: RawPattern) -> Result<Self> {
        CosetPattern::new(raw.period, raw.marks)
    }
}

impl CosetPattern {
    /// Builds a pattern; marks are sorted, and must be unique and below `period`.
    pub fn new(period: usize, mut marks: Vec<usize>) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidPattern("period must be positive".into()));
        }
        if marks.is_empty() {
            return Err(Error::InvalidPattern("at least one coset must be active".into()));
        }
        marks.sort_unstable();
        if let Some(&bad) = marks.iter().find(|&&m| m >= period) {
            return Err(Error::InvalidPattern(format!("mark {bad} is not below period {period}")));
        }
        if marks.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPattern("marks must be distinct".into()));
        }
        Ok(Self { period, marks })
    }

    /// All `N` cosets active (Nyquist-rate sampling).
    pub fn full(period: usize) -> Result<Self> {
        Self::new(period, (0..period).collect())
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    /// Number of active cosets `M`.
    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// Compression rate `M / N`.
    pub fn rate(&self) -> f64 {
        self.marks.len() as f64 / self.period as f64
    }

    pub fn contains(&self, coset: usize) -> bool {
        self.marks.binary_search(&coset).is_ok()
    }

    /// Position of `coset` among the active marks.
    pub fn position(&self, coset: usize) -> Option<usize> {
        self.marks.binary_search(&coset).ok()
    }

    /// Adds further cosets, in order, skipping ones already active.
    pub fn extended(&self, extra: &[usize]) -> Result<Self> {
        let mut marks = self.marks.clone();
        for &e in extra {
            if !marks.contains(&e) {
                marks.push(e);
            }
        }
        Self::new(self.period, marks)
    }

    /// The pattern with mark `coset` removed.
    pub fn without(&self, coset: usize) -> Result<Self> {
        Self::new(self.period, self.marks.iter().copied().filter(|&m| m != coset).collect())
    }

    /// The pattern shifted by `offset` cosets (mod `N`).
    pub fn rotated(&self, offset: usize) -> Self {
        let marks = self.marks.iter().map(|&m| (m + offset) % self.period).collect();
        Self::new(self.period, marks).expect("rotation preserves validity")
    }
}

impl std::fmt::Display for CosetPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let marks: Vec<String> = self.marks.iter().map(|m| m.to_string()).collect();
        f.write_str(&marks.join(","))
    }
}

/// Modular differences `(k - k') mod N` of a pattern with their pair counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModularDifferenceSet {
    period: usize,
    multiplicity: Vec<usize>,
}

impl ModularDifferenceSet {
    pub fn period(&self) -> usize {
        self.period
    }

    /// Number of ordered mark pairs realising each difference, indexed by difference.
    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    /// The realised differences, ascending.
    pub fn differences(&self) -> Vec<usize> {
        (0..self.period).filter(|&d| self.multiplicity[d] > 0).collect()
    }

    /// Differences not realised by any pair, ascending.
    pub fn missing(&self) -> Vec<usize> {
        (0..self.period).filter(|&d| self.multiplicity[d] == 0).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.multiplicity.iter().all(|&c| c > 0)
    }
}

pub fn modular_difference_set(pattern: &CosetPattern) -> ModularDifferenceSet {
    let n = pattern.period();
    let mut multiplicity = vec![0usize; n];
    for &a in pattern.marks() {
        for &b in pattern.marks() {
            multiplicity[(a + n - b) % n] += 1;
        }
    }
    ModularDifferenceSet { period: n, multiplicity }
}

/// True when every residue mod `N` is a difference of two marks.
pub fn is_circular_sparse_ruler(pattern: &CosetPattern) -> bool {
    modular_difference_set(pattern).is_complete()
}

/// Outcome of a ruler search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RulerDesign {
    pub pattern: CosetPattern,
    /// `false` when the search gave up (period too large or budget exhausted)
    /// and returned a verified but possibly non-minimal construction.
    pub minimal: bool,
}

/// Minimal circular sparse ruler with the default search budget.
///
/// Among minimum-cardinality rulers the lexicographically smallest mark set
/// is returned; it always contains 0.
pub fn minimal_circular_sparse_ruler(period: usize) -> Result<RulerDesign> {
    RulerSearch::new(period).run()
}

/// Branch-and-bound search for a minimal circular sparse ruler.
#[derive(Debug, Clone)]
pub struct RulerSearch {
    period: usize,
    budget: Duration,
}

impl RulerSearch {
    pub fn new(period: usize) -> Self {
        Self { period, budget: DEFAULT_SEARCH_BUDGET }
    }

    pub fn budget(mut self, budget: Duration) -> Self {
        self.budget = budget;
        self
    }

    pub fn run(&self) -> Result<RulerDesign> {
        let n = self.period;
        if n == 0 {
            return Err(Error::InvalidPattern("period must be positive".into()));
        }
        let fallback = construct_ruler(n)?;
        if n > MAX_SEARCH_PERIOD {
            return Ok(RulerDesign { pattern: fallback, minimal: false });
        }
        let deadline = Instant::now() + self.budget;
        let mut size = lower_bound_marks(n);
        while size < fallback.len() {
            let mut search = BranchAndBound::new(n, size, deadline);
            match search.solve() {
                Some(Some(marks)) => {
                    return Ok(RulerDesign { pattern: CosetPattern::new(n, marks)?, minimal: true });
                }
                Some(None) => size += 1,
                None => return Ok(RulerDesign { pattern: fallback, minimal: false }),
            }
        }
        // No ruler smaller than the construction exists; search at that size
        // for the lexicographically smallest one (the construction guarantees success).
        let mut search = BranchAndBound::new(n, size, deadline);
        match search.solve() {
            Some(Some(marks)) => Ok(RulerDesign { pattern: CosetPattern::new(n, marks)?, minimal: true }),
            _ => Ok(RulerDesign { pattern: fallback, minimal: false }),
        }
    }
}

/// Smallest `M` with `M (M - 1) >= N - 1`.
fn lower_bound_marks(n: usize) -> usize {
    let mut m = 1;
    while m * (m - 1) < n - 1 {
        m += 1;
    }
    m
}

struct BranchAndBound {
    n: usize,
    size: usize,
    deadline: Instant,
    marks: Vec<usize>,
    nodes: u64,
    timed_out: bool,
}

impl BranchAndBound {
    fn new(n: usize, size: usize, deadline: Instant) -> Self {
        Self { n, size, deadline, marks: Vec::with_capacity(size), nodes: 0, timed_out: false }
    }

    /// `Some(Some(marks))` on success, `Some(None)` when no ruler of this size
    /// exists, `None` on timeout.
    fn solve(&mut self) -> Option<Option<Vec<usize>>> {
        self.marks.clear();
        self.marks.push(0);
        let found = self.dfs(1u128, 1);
        if self.timed_out {
            None
        } else if found {
            Some(Some(self.marks.clone()))
        } else {
            Some(None)
        }
    }

    fn dfs(&mut self, covered: u128, start: usize) -> bool {
        let n = self.n;
        let full = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
        if covered == full {
            return true;
        }
        let placed = self.marks.len();
        let remaining = self.size - placed;
        if remaining == 0 {
            return false;
        }
        let uncovered = (full & !covered).count_ones() as usize;
        // r further marks add at most r(2s + r - 1) new ordered differences.
        if uncovered > remaining * (2 * placed + remaining - 1) {
            return false;
        }
        self.nodes += 1;
        if self.nodes & 0xFFF == 0 && Instant::now() > self.deadline {
            self.timed_out = true;
            return false;
        }
        for x in start..n {
            let mut next = covered;
            for &m in &self.marks {
                next |= 1u128 << ((x + n - m) % n);
                next |= 1u128 << ((m + n - x) % n);
            }
            if next == covered {
                continue;
            }
            self.marks.push(x);
            if self.dfs(next, x + 1) {
                return true;
            }
            self.marks.pop();
            if self.timed_out {
                return false;
            }
        }
        false
    }
}

/// Exhaustive search: combinations containing 0 in lexicographic order, by
/// increasing size. Exponential; intended for small periods.
pub fn exhaustive_minimal_ruler(period: usize) -> Result<CosetPattern> {
    if period == 0 {
        return Err(Error::InvalidPattern("period must be positive".into()));
    }
    for size in 1..=period {
        let mut rest: Vec<usize> = (1..size).collect();
        loop {
            let mut marks = Vec::with_capacity(size);
            marks.push(0);
            marks.extend_from_slice(&rest);
            let pattern = CosetPattern::new(period, marks)?;
            if is_circular_sparse_ruler(&pattern) {
                return Ok(pattern);
            }
            if !next_combination(&mut rest, period) {
                break;
            }
        }
    }
    unreachable!("the full pattern is always a circular sparse ruler")
}

/// Advances `comb` (a strictly increasing selection from `1..n`) to the next
/// combination in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - (k - i) {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// A verified ruler built from a linear sparse ruler covering lags up to
/// `ceil((N-1)/2)`: a dense run `0..a` plus multiples of `a`.
pub fn construct_ruler(period: usize) -> Result<CosetPattern> {
    if period == 0 {
        return Err(Error::InvalidPattern("period must be positive".into()));
    }
    let half = period / 2;
    let mut best: Option<Vec<usize>> = None;
    for a in 1..=period.max(1) {
        let b = half.div_ceil(a).max(1);
        let mut marks: Vec<usize> = (0..a.min(period)).collect();
        marks.extend((1..=b).map(|k| k * a).filter(|&m| m < period));
        marks.sort_unstable();
        marks.dedup();
        if best.as_ref().is_none_or(|best| marks.len() < best.len()) {
            best = Some(marks);
        }
    }
    let pattern = CosetPattern::new(period, best.expect("at least one candidate"))?;
    debug_assert!(is_circular_sparse_ruler(&pattern));
    Ok(pattern)
}

/// Patterns of a common period and cardinality, one per sensor group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFamily {
    period: usize,
    patterns: Vec<CosetPattern>,
}

impl PatternFamily {
    pub fn new(patterns: Vec<CosetPattern>) -> Result<Self> {
        let first = patterns
            .first()
            .ok_or_else(|| Error::InvalidPattern("a family needs at least one pattern".into()))?;
        let (period, size) = (first.period(), first.len());
        if patterns.iter().any(|p| p.period() != period || p.len() != size) {
            return Err(Error::InvalidPattern(
                "family patterns must share period and cardinality".into(),
            ));
        }
        Ok(Self { period, patterns })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Cosets per pattern `M`.
    pub fn marks_per_pattern(&self) -> usize {
        self.patterns[0].len()
    }

    pub fn patterns(&self) -> &[CosetPattern] {
        &self.patterns
    }

    /// Number of groups `Z`.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Unordered pairs `{f, g}`, `f < g`, not jointly contained in any pattern.
    pub fn uncovered_pairs(&self) -> Vec<(usize, usize)> {
        let covered = pair_matrix(self.period, &self.patterns);
        let n = self.period;
        let mut missing = Vec::new();
        for f in 0..n {
            for g in f..n {
                if !covered[f * n + g] {
                    missing.push((f, g));
                }
            }
        }
        missing
    }
}

fn pair_matrix(n: usize, patterns: &[CosetPattern]) -> Vec<bool> {
    let mut covered = vec![false; n * n];
    for p in patterns {
        for &a in p.marks() {
            for &b in p.marks() {
                covered[a * n + b] = true;
            }
        }
    }
    covered
}

/// True iff every unordered pair and every singleton appears in some pattern.
pub fn verify_pair_coverage(family: &PatternFamily) -> bool {
    family.uncovered_pairs().is_empty()
}

const FAMILY_RESTARTS: u64 = 8;
const FAMILY_SEED: u64 = 0x5EED_FA11;
const ANNEAL_MOVES: u64 = 400_000;

/// Pair-covering family of `M`-coset patterns over `N` cosets.
///
/// A greedy pass picks, at each step, the candidate covering the most
/// not-yet-covered pairs; candidates are the rotations of a base ruler padded
/// to `M` marks plus one pattern grown greedily pair by pair. The smallest
/// greedy family over a few shuffled restarts is then shrunk by a seeded
/// annealing search that drops one pattern at a time and repairs coverage by
/// swapping cosets. Fully deterministic; `Z` is not guaranteed minimal.
pub fn design_pair_cover_family(period: usize, marks: usize) -> Result<PatternFamily> {
    if marks < 2 {
        return Err(Error::InvalidPattern("pair covering needs at least 2 cosets per pattern".into()));
    }
    if marks > period {
        return Err(Error::InvalidPattern(format!("{marks} cosets exceed period {period}")));
    }
    if marks == period {
        return PatternFamily::new(vec![CosetPattern::full(period)?]);
    }
    let base = padded_base_ruler(period, marks)?;
    let rotations: Vec<CosetPattern> = (0..period).map(|r| base.rotated(r)).collect();

    let mut best: Option<Vec<CosetPattern>> = None;
    for restart in 0..FAMILY_RESTARTS {
        let mut order: Vec<usize> = (0..period).collect();
        if restart > 0 {
            order.shuffle(&mut rng::stream(FAMILY_SEED, &[period as u64, marks as u64, restart]));
        }
        let family = greedy_family(period, marks, &rotations, &order);
        if best.as_ref().is_none_or(|b| family.len() < b.len()) {
            best = Some(family);
        }
    }
    let mut family = best.expect("at least one restart");
    let lower = covering_lower_bound(period, marks);
    let mut attempt = 0u64;
    while family.len() > lower {
        match shrink_family(period, &family, attempt) {
            Some(smaller) => family = smaller,
            None => break,
        }
        attempt += 1;
    }
    PatternFamily::new(family)
}

/// Schönheim bound `⌈N/M ⌈(N-1)/(M-1)⌉⌉` on the number of patterns.
fn covering_lower_bound(n: usize, m: usize) -> usize {
    let inner = (n - 1).div_ceil(m - 1);
    (n * inner).div_ceil(m)
}

/// Tries to cover all pairs with one pattern fewer, starting from `family`
/// minus its least useful member.
fn shrink_family(n: usize, family: &[CosetPattern], attempt: u64) -> Option<Vec<CosetPattern>> {
    use rand::Rng;

    let mut rng = rng::stream(FAMILY_SEED, &[n as u64, family.len() as u64, attempt, 0xA11E]);
    let counts = pair_counts(n, family);
    // drop the pattern whose removal uncovers the fewest pairs
    let drop = (0..family.len())
        .min_by_key(|&z| {
            let m = family[z].marks();
            let mut lost = 0;
            for (i, &a) in m.iter().enumerate() {
                for &b in &m[i..] {
                    if counts[a * n + b] == 1 {
                        lost += 1;
                    }
                }
            }
            lost
        })
        .expect("non-empty family");
    let mut sets: Vec<Vec<usize>> = family
        .iter()
        .enumerate()
        .filter(|&(z, _)| z != drop)
        .map(|(_, p)| p.marks().to_vec())
        .collect();
    let mut member = vec![vec![false; n]; sets.len()];
    for (z, s) in sets.iter().enumerate() {
        for &c in s {
            member[z][c] = true;
        }
    }
    let mut counts = vec![0u32; n * n];
    for s in &sets {
        for &a in s {
            for &b in s {
                counts[a * n + b] += 1;
            }
        }
    }
    let uncovered = |counts: &[u32]| (0..n).map(|f| (f..n).filter(|&g| counts[f * n + g] == 0).count()).sum::<usize>();
    let mut cost = uncovered(&counts) as i64;
    let mut temperature = 0.6f64;
    let cooling = (0.02f64 / temperature).powf(1.0 / ANNEAL_MOVES as f64);
    for _ in 0..ANNEAL_MOVES {
        if cost == 0 {
            break;
        }
        let z = rng.random_range(0..sets.len());
        let slot = rng.random_range(0..sets[z].len());
        let out = sets[z][slot];
        let into = rng.random_range(0..n);
        if member[z][into] {
            continue;
        }
        let mut delta = 0i64;
        for &x in &sets[z] {
            if counts[out * n + x] == 1 {
                delta += 1;
            }
            if x != out && counts[into * n + x] == 0 {
                delta -= 1;
            }
        }
        if counts[into * n + into] == 0 {
            delta -= 1;
        }
        if delta <= 0 || rng.random::<f64>() < (-(delta as f64) / temperature).exp() {
            for &x in &sets[z] {
                counts[out * n + x] -= 1;
                if x != out {
                    counts[x * n + out] -= 1;
                }
            }
            sets[z][slot] = into;
            member[z][out] = false;
            member[z][into] = true;
            for &x in &sets[z] {
                counts[into * n + x] += 1;
                if x != into {
                    counts[x * n + into] += 1;
                }
            }
            cost += delta;
        }
        temperature *= cooling;
    }
    if cost != 0 {
        return None;
    }
    let out: Vec<CosetPattern> =
        sets.into_iter().map(|s| CosetPattern::new(n, s).expect("distinct cosets below period")).collect();
    debug_assert!(pair_matrix(n, &out).iter().enumerate().all(|(i, &c)| c || i / n > i % n));
    Some(out)
}

fn pair_counts(n: usize, patterns: &[CosetPattern]) -> Vec<u32> {
    let mut counts = vec![0u32; n * n];
    for p in patterns {
        for &a in p.marks() {
            for &b in p.marks() {
                counts[a * n + b] += 1;
            }
        }
    }
    counts
}

fn padded_base_ruler(period: usize, marks: usize) -> Result<CosetPattern> {
    let ruler = if period <= 40 {
        minimal_circular_sparse_ruler(period)?.pattern
    } else {
        construct_ruler(period)?
    };
    let mut base: Vec<usize> = ruler.marks().iter().copied().take(marks).collect();
    // Pad by repeatedly adding the coset that creates the most new differences.
    while base.len() < marks {
        let pattern = CosetPattern::new(period, base.clone())?;
        let diff = modular_difference_set(&pattern);
        let next = (0..period)
            .filter(|c| !base.contains(c))
            .max_by_key(|&c| {
                let fresh = base
                    .iter()
                    .filter(|&&b| diff.multiplicity()[(c + period - b) % period] == 0)
                    .count();
                (fresh, std::cmp::Reverse(c))
            })
            .expect("marks < period leaves a free coset");
        base.push(next);
    }
    CosetPattern::new(period, base)
}

fn new_pairs(covered: &[bool], n: usize, marks: &[usize]) -> usize {
    let mut count = 0;
    for (i, &a) in marks.iter().enumerate() {
        if !covered[a * n + a] {
            count += 1;
        }
        for &b in &marks[i + 1..] {
            if !covered[a * n + b] {
                count += 1;
            }
        }
    }
    count
}

fn greedy_family(n: usize, m: usize, rotations: &[CosetPattern], order: &[usize]) -> Vec<CosetPattern> {
    let mut covered = vec![false; n * n];
    let mut family: Vec<CosetPattern> = Vec::new();
    loop {
        let remaining = (0..n).flat_map(|f| (f..n).map(move |g| (f, g))).filter(|&(f, g)| !covered[f * n + g]).count();
        if remaining == 0 {
            break;
        }
        let grown = grow_pattern(&covered, n, m, order);
        let mut best = grown;
        let mut best_gain = new_pairs(&covered, n, best.marks());
        for &r in order {
            let candidate = &rotations[r];
            let gain = new_pairs(&covered, n, candidate.marks());
            if gain > best_gain {
                best_gain = gain;
                best = candidate.clone();
            }
        }
        for &a in best.marks() {
            for &b in best.marks() {
                covered[a * n + b] = true;
            }
        }
        family.push(best);
    }
    prune_redundant(n, family)
}

/// Grows an `m`-set by repeatedly adding the coset with most uncovered pairs
/// to the coset already chosen; ties follow `order`.
fn grow_pattern(covered: &[bool], n: usize, m: usize, order: &[usize]) -> CosetPattern {
    let degree = |c: usize| (0..n).filter(|&o| o != c && !covered[c.min(o) * n + c.max(o)]).count()
        + usize::from(!covered[c * n + c]);
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let first = *order.iter().max_by_key(|&&c| (degree(c), std::cmp::Reverse(position(order, c)))).unwrap();
    chosen.push(first);
    while chosen.len() < m {
        let next = *order
            .iter()
            .filter(|c| !chosen.contains(c))
            .max_by_key(|&&c| {
                let gain = chosen.iter().filter(|&&s| !covered[s.min(c) * n + s.max(c)]).count()
                    + usize::from(!covered[c * n + c]);
                (gain, degree(c), std::cmp::Reverse(position(order, c)))
            })
            .unwrap();
        chosen.push(next);
    }
    CosetPattern::new(n, chosen).expect("distinct cosets below period")
}

fn position(order: &[usize], c: usize) -> usize {
    order.iter().position(|&o| o == c).unwrap_or(usize::MAX)
}

fn prune_redundant(n: usize, mut family: Vec<CosetPattern>) -> Vec<CosetPattern> {
    let mut i = 0;
    while i < family.len() {
        let mut rest = family.clone();
        rest.remove(i);
        let covered = pair_matrix(n, &rest);
        let complete = (0..n).all(|f| (f..n).all(|g| covered[f * n + g]));
        if complete && !rest.is_empty() {
            family = rest;
        } else {
            i += 1;
        }
    }
    family
}
