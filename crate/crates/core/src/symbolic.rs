//! Construction of limit states: closed-form degenerate-conic cases, periodic
//! orbits of the unimodal branch, and symbol-driven fixed points of the
//! branch contraction `F_t(xi; s) = f_{s_t}(xi_{t-1})`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::{BranchLabel, RelationCoeffs, SlopeValue};

/// Upper bound on the period accepted by [`enumerate_periodic_states`].
pub const ENUMERATION_CAP: usize = 16;

/// Upper bound on the period accepted by [`closed_form_states`].
pub const CLOSED_FORM_CAP: usize = 20;

/// Lower end of the `cbar` range in which the unimodal branch has positive
/// entropy. Stored as a documented constant; it is not computed here.
pub const ENTROPY_THRESHOLD_CBAR: f64 = 0.791;

/// Default critical-point exclusion radius, as a multiple of `1 / cbar`.
pub const CRITICAL_RADIUS_FACTOR: f64 = 1e-3;

/// Slack used when testing membership of iterates in a trapping set.
const SET_SLACK: f64 = 1e-12;

/// A finite word over `{+, -}`; its periodic extension is the symbol sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolWord {
    letters: Vec<BranchLabel>,
}

impl SymbolWord {
    pub fn new(letters: Vec<BranchLabel>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidInput("empty symbol word".into()));
        }
        if letters.contains(&BranchLabel::Principal) {
            return Err(Error::InvalidInput(
                "symbol words use only '+' and '-'".into(),
            ));
        }
        Ok(SymbolWord { letters })
    }

    /// The constant word of length `period`.
    pub fn constant(letter: BranchLabel, period: usize) -> Result<Self> {
        SymbolWord::new(vec![letter; period])
    }

    pub fn letters(&self) -> &[BranchLabel] {
        &self.letters
    }

    pub fn period(&self) -> usize {
        self.letters.len()
    }

    pub fn letter(&self, t: usize) -> BranchLabel {
        self.letters[t % self.letters.len()]
    }

    /// Left shift by `k`: the result has letter `t` equal to letter `t + k` of `self`.
    pub fn rotate(&self, k: usize) -> SymbolWord {
        let mut letters = self.letters.clone();
        let n = letters.len();
        letters.rotate_left(k % n);
        SymbolWord { letters }
    }

    /// Exchanges `+` and `-`.
    pub fn flip(&self) -> SymbolWord {
        SymbolWord {
            letters: self
                .letters
                .iter()
                .map(|l| match l {
                    BranchLabel::Plus => BranchLabel::Minus,
                    _ => BranchLabel::Plus,
                })
                .collect(),
        }
    }

    /// All `2^period` words, ordered as binary numbers with `+` = 0 and the
    /// first letter most significant.
    pub fn all_words(period: usize) -> Result<Vec<SymbolWord>> {
        if period == 0 {
            return Err(Error::InvalidInput("period must be positive".into()));
        }
        if period >= usize::BITS as usize {
            return Err(Error::PeriodTooLarge {
                period,
                cap: usize::BITS as usize - 1,
            });
        }
        Ok((0..1usize << period)
            .map(|i| SymbolWord {
                letters: (0..period)
                    .map(|t| {
                        if (i >> (period - 1 - t)) & 1 == 1 {
                            BranchLabel::Minus
                        } else {
                            BranchLabel::Plus
                        }
                    })
                    .collect(),
            })
            .collect())
    }

    /// Reproducible pseudo-random word.
    pub fn pseudo_random(period: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SymbolWord::new(
            (0..period)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        BranchLabel::Plus
                    } else {
                        BranchLabel::Minus
                    }
                })
                .collect(),
        )
    }
}

impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", l.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for SymbolWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .trim()
            .chars()
            .map(|ch| match ch {
                '+' => Ok(BranchLabel::Plus),
                '-' => Ok(BranchLabel::Minus),
                other => Err(Error::InvalidInput(format!(
                    "invalid symbol {other:?}; words use '+' and '-'"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        SymbolWord::new(letters)
    }
}

impl Serialize for SymbolWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SymbolWord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Finite union of disjoint closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappingSet {
    intervals: Vec<(f64, f64)>,
}

impl TrappingSet {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidInput(
                "trapping set needs at least one interval".into(),
            ));
        }
        for &(lo, hi) in &intervals {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::InvalidInput(format!(
                    "invalid interval [{lo}, {hi}]"
                )));
            }
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in intervals.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::InvalidInput(format!(
                    "intervals [{}, {}] and [{}, {}] overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(TrappingSet { intervals })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        TrappingSet::new(vec![(lo, hi)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn hull(&self) -> (f64, f64) {
        (
            self.intervals[0].0,
            self.intervals[self.intervals.len() - 1].1,
        )
    }

    fn slack(&self) -> f64 {
        let (lo, hi) = self.hull();
        SET_SLACK * (1.0 + lo.abs().max(hi.abs()))
    }

    pub fn contains(&self, x: f64) -> bool {
        let s = self.slack();
        self.intervals
            .iter()
            .any(|&(lo, hi)| x >= lo - s && x <= hi + s)
    }

    /// True when `[lo, hi]` lies inside a single component.
    pub fn contains_interval(&self, lo: f64, hi: f64) -> bool {
        let s = self.slack();
        self.intervals
            .iter()
            .any(|&(a, b)| lo >= a - s && hi <= b + s)
    }

    /// `n` points per component, endpoints included (one point for degenerate components).
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for &(lo, hi) in &self.intervals {
            if hi == lo || n < 2 {
                out.push(lo);
                continue;
            }
            out.extend((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64));
        }
        out
    }
}

impl FromStr for TrappingSet {
    type Err = Error;

    /// Parses `lo:hi[,lo:hi...]`.
    fn from_str(s: &str) -> Result<Self> {
        let intervals = s
            .split(',')
            .map(|part| {
                let (lo, hi) = part.split_once(':').ok_or_else(|| {
                    Error::InvalidInput(format!("interval {part:?} is not lo:hi"))
                })?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad number {x:?}")))
                };
                Ok((parse(lo)?, parse(hi)?))
            })
            .collect::<Result<Vec<_>>>()?;
        TrappingSet::new(intervals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Construction {
    ClosedForm,
    ContractionFixedPoint,
    UnimodalNewton,
    /// Values given directly by the caller.
    Supplied,
}

/// A periodic solution of the limit equation (one period stored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AIState {
    pub coeffs: RelationCoeffs,
    pub values: Vec<f64>,
    pub word: Option<SymbolWord>,
    pub residual: f64,
    pub construction: Construction,
    /// Largest observed per-sweep contraction ratio (fixed-point construction only).
    #[serde(default)]
    pub contraction: Option<f64>,
    #[serde(default)]
    pub iterations: usize,
}

impl AIState {
    /// Wraps `values`, computing the residual and rejecting it above `tol`.
    pub fn from_values(
        coeffs: RelationCoeffs,
        values: Vec<f64>,
        word: Option<SymbolWord>,
        construction: Construction,
        tol: f64,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("state has no values".into()));
        }
        if let Some(w) = &word {
            if w.period() != values.len() {
                return Err(Error::InvalidInput(format!(
                    "word of length {} attached to a state of period {}",
                    w.period(),
                    values.len()
                )));
            }
        }
        let residual = limit_residual_norm(&coeffs, &values);
        if !(residual <= tol) {
            return Err(Error::NotOnRelation {
                residual,
                tolerance: tol,
            });
        }
        Ok(AIState {
            coeffs,
            values,
            word,
            residual,
            construction,
            contraction: None,
            iterations: 0,
        })
    }

    pub fn period(&self) -> usize {
        self.values.len()
    }

    /// Left rotation by `k`, the shift acting on periodic sequences.
    pub fn rotate(&self, k: usize) -> AIState {
        let mut out = self.clone();
        let n = out.values.len();
        out.values.rotate_left(k % n);
        out.word = self.word.as_ref().map(|w| w.rotate(k));
        out
    }

    pub fn sup_distance(&self, other: &AIState) -> f64 {
        sup_distance(&self.values, &other.values)
    }
}

pub fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn limit_residual_norm(coeffs: &RelationCoeffs, values: &[f64]) -> f64 {
    coeffs
        .limit_residual(values)
        .iter()
        .map(|r| r.abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedFormCase {
    /// `E(-1, 0, 1, 0)`: `v^2 = 1`, states over `{-1, 1}`.
    SquareOne,
    /// `E(0, -1, 0, 1)`: `u^2 + u = 0`, states over `{0, -1}`.
    ZeroMinusOne,
}

impl ClosedFormCase {
    pub fn coeffs(self) -> RelationCoeffs {
        match self {
            ClosedFormCase::SquareOne => RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0),
            ClosedFormCase::ZeroMinusOne => RelationCoeffs::new(0.0, -1.0, 0.0, 1.0),
        }
    }

    fn value(self, letter: BranchLabel) -> f64 {
        match (self, letter) {
            (ClosedFormCase::SquareOne, BranchLabel::Plus) => 1.0,
            (ClosedFormCase::SquareOne, _) => -1.0,
            (ClosedFormCase::ZeroMinusOne, BranchLabel::Plus) => 0.0,
            (ClosedFormCase::ZeroMinusOne, _) => -1.0,
        }
    }
}

/// All `2^period` exact states of a degenerate-conic relation. States of
/// [`ClosedFormCase::ZeroMinusOne`] carry no word, since that relation has no
/// forward branch.
pub fn closed_form_states(case: ClosedFormCase, period: usize) -> Result<Vec<AIState>> {
    if period > CLOSED_FORM_CAP {
        return Err(Error::PeriodTooLarge {
            period,
            cap: CLOSED_FORM_CAP,
        });
    }
    let coeffs = case.coeffs();
    SymbolWord::all_words(period)?
        .into_iter()
        .map(|w| {
            let values = w.letters().iter().map(|&l| case.value(l)).collect();
            let word = match case {
                ClosedFormCase::SquareOne => Some(w),
                ClosedFormCase::ZeroMinusOne => None,
            };
            AIState::from_values(coeffs, values, word, Construction::ClosedForm, 0.0)
        })
        .collect()
}

/// Fixed point of `xi_t <- f_{s_t}(xi_{t-1})` by repeated sweeps from the
/// constant profile at the midpoint of the hull of `b`.
pub fn ai_fixed_point(
    coeffs: &RelationCoeffs,
    word: &SymbolWord,
    b: &TrappingSet,
    max_iter: usize,
    tol: f64,
) -> Result<AIState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let n = word.period();
    let (lo, hi) = b.hull();
    let mut xi = vec![0.5 * (lo + hi); n];
    let mut next = vec![0.0; n];
    let mut prev_change = f64::INFINITY;
    let mut contraction: f64 = 0.0;
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iter {
        for t in 0..n {
            let v = coeffs.forward_branch(word.letter(t), xi[(t + n - 1) % n])?;
            if !b.contains(v) {
                return Err(Error::EscapedTrappingSet {
                    index: t,
                    value: v,
                    iteration,
                });
            }
            next[t] = v;
        }
        let change = sup_distance(&xi, &next);
        std::mem::swap(&mut xi, &mut next);
        let scale = 1.0 + xi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if prev_change.is_finite() && prev_change > 1e-10 * scale {
            contraction = contraction.max(change / prev_change);
        }
        prev_change = change;
        last_change = change;
        if change < tol {
            let residual = limit_residual_norm(coeffs, &xi);
            if residual <= tol {
                return Ok(AIState {
                    coeffs: *coeffs,
                    values: xi,
                    word: Some(word.clone()),
                    residual,
                    construction: Construction::ContractionFixedPoint,
                    contraction: Some(contraction),
                    iterations: iteration,
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change,
        contraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Compositions of forward branches `f_s`.
    Forward,
    /// Compositions of backward branches `g_s`.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionQuery {
    pub n: usize,
    pub lambda: f64,
    pub direction: Direction,
    pub grid_points: usize,
}

impl RegionQuery {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput(
                "composition depth n must be positive".into(),
            ));
        }
        if self.n > ENUMERATION_CAP {
            return Err(Error::PeriodTooLarge {
                period: self.n,
                cap: ENUMERATION_CAP,
            });
        }
        if !(self.lambda > 1.0) {
            return Err(Error::InvalidInput("lambda must exceed 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidInput("grid_points must be at least 2".into()));
        }
        Ok(())
    }
}

/// Outcome of a grid-based region membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionReport {
    pub member: bool,
    /// `1 / lambda - max |D(composition)|`.
    pub margin: f64,
    pub invariant: bool,
    pub max_derivative: f64,
    /// Always false: the derivative bound is sampled on a grid.
    pub rigorous: bool,
}

struct BranchPair<'a> {
    coeffs: &'a RelationCoeffs,
    direction: Direction,
}

impl BranchPair<'_> {
    fn eval(&self, s: BranchLabel, x: f64) -> Result<f64> {
        match self.direction {
            Direction::Forward => self.coeffs.forward_branch(s, x),
            Direction::Backward => self.coeffs.backward_branch(s, x),
        }
    }

    /// Derivative of the branch at `x`; infinite at tangencies.
    fn derivative(&self, s: BranchLabel, x: f64) -> Result<f64> {
        let y = self.eval(s, x)?;
        let (u, v) = match self.direction {
            Direction::Forward => (x, y),
            Direction::Backward => (y, x),
        };
        let m = match self.coeffs.slope_unchecked(u, v) {
            SlopeValue::Finite(m) => m,
            SlopeValue::PlusInfinity => f64::INFINITY,
            SlopeValue::Undefined => f64::NAN,
        };
        Ok(match self.direction {
            Direction::Forward => m,
            Direction::Backward => 1.0 / m,
        })
    }

    fn check_radicand(&self, lo: f64, hi: f64) -> Result<()> {
        let c = self.coeffs;
        let radicand = |x: f64| match self.direction {
            Direction::Forward => c.forward_radicand(x),
            Direction::Backward => c.backward_radicand(x),
        };
        // the radicand is quadratic in x: endpoints and vertex bound its minimum
        let (q2, q1) = match self.direction {
            Direction::Forward => (c.discriminant(), 4.0 * c.a() * c.sigma1()),
            Direction::Backward => (c.discriminant(), -2.0 * c.sigma1() * c.b()),
        };
        let mut candidates = vec![lo, hi];
        if q2 > 0.0 {
            let vertex = -q1 / (2.0 * q2);
            if vertex > lo && vertex < hi {
                candidates.push(vertex);
            }
        }
        for x in candidates {
            let r = radicand(x);
            let scale = 1.0 + (q2 * x * x).abs() + (q1 * x).abs() + (r - q2 * x * x - q1 * x).abs();
            if r < -1e-12 * scale {
                return Err(Error::NegativeRadicand { radicand: r, at: x });
            }
        }
        Ok(())
    }

    /// Range of the branch over `[lo, hi]` from endpoints and interior critical
    /// points (located by sign changes of the derivative on a grid, then bisection).
    fn image(&self, s: BranchLabel, lo: f64, hi: f64, grid: usize) -> Result<(f64, f64)> {
        let mut vals = vec![self.eval(s, lo)?, self.eval(s, hi)?];
        if hi > lo {
            let xs: Vec<f64> = (0..grid)
                .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
                .collect();
            let ds = xs
                .iter()
                .map(|&x| self.derivative(s, x))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..xs.len() - 1 {
                vals.push(self.eval(s, xs[i])?);
                if ds[i].is_finite() && ds[i + 1].is_finite() && ds[i] * ds[i + 1] < 0.0 {
                    let (mut a, mut b, da) = (xs[i], xs[i + 1], ds[i]);
                    for _ in 0..60 {
                        let m = 0.5 * (a + b);
                        if self.derivative(s, m)? * da > 0.0 {
                            a = m;
                        } else {
                            b = m;
                        }
                    }
                    vals.push(self.eval(s, 0.5 * (a + b))?);
                }
            }
        }
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((min, max))
    }
}

/// Grid test of `f_+-(B) ⊂ B` and `|D f_s^n| <= 1/lambda` over all `2^n` words
/// (or the mirrored test with backward branches).
pub fn region_membership(
    coeffs: &RelationCoeffs,
    b: &TrappingSet,
    q: &RegionQuery,
) -> Result<RegionReport> {
    q.validate()?;
    match q.direction {
        Direction::Forward if coeffs.a() == 0.0 => {
            return Err(Error::DegenerateBranch("forward branches f+- need a != 0"))
        }
        Direction::Backward if coeffs.c() == 0.0 => {
            return Err(Error::DegenerateBranch("backward branches g+- need c != 0"))
        }
        _ => {}
    }
    let pair = BranchPair {
        coeffs,
        direction: q.direction,
    };
    for &(lo, hi) in b.intervals() {
        pair.check_radicand(lo, hi)?;
    }
    let mut invariant = true;
    'outer: for &(lo, hi) in b.intervals() {
        for s in [BranchLabel::Plus, BranchLabel::Minus] {
            let (ilo, ihi) = pair.image(s, lo, hi, q.grid_points)?;
            if !b.contains_interval(ilo, ihi) {
                invariant = false;
                break 'outer;
            }
        }
    }
    let inv_lambda = 1.0 / q.lambda;
    if !invariant {
        return Ok(RegionReport {
            member: false,
            margin: f64::NEG_INFINITY,
            invariant,
            max_derivative: f64::NAN,
            rigorous: false,
        });
    }
    let words = SymbolWord::all_words(q.n)?;
    let mut max_derivative: f64 = 0.0;
    for x0 in b.grid(q.grid_points) {
        for w in &words {
            let (mut x, mut d) = (x0, 1.0f64);
            for &s in w.letters() {
                d *= pair.derivative(s, x)?;
                x = pair.eval(s, x)?;
            }
            let d = if d.is_nan() { f64::INFINITY } else { d.abs() };
            max_derivative = max_derivative.max(d);
        }
    }
    let margin = inv_lambda - max_derivative;
    Ok(RegionReport {
        member: margin >= 0.0,
        margin,
        invariant,
        max_derivative,
        rigorous: false,
    })
}

/// `min |f_+(u) - f_-(u)|` over a grid of `b`; a lower bound witness for the
/// separation of distinct symbol states.
pub fn branch_separation(
    coeffs: &RelationCoeffs,
    b: &TrappingSet,
    grid_points: usize,
) -> Result<f64> {
    b.grid(grid_points.max(2))
        .into_iter()
        .map(|u| {
            let p = coeffs.forward_branch(BranchLabel::Plus, u)?;
            let m = coeffs.forward_branch(BranchLabel::Minus, u)?;
            Ok((p - m).abs())
        })
        .try_fold(f64::INFINITY, |acc, d: Result<f64>| Ok(acc.min(d?)))
}

/// Coefficients `E(0, 1, 1 - cbar, cbar)` of the unimodal family, whose `+`
/// branch is `sqrt(u (1 - cbar u) / (1 - cbar))` on `[0, 1/cbar]`.
pub fn unimodal_coeffs(cbar: f64) -> RelationCoeffs {
    RelationCoeffs::new(0.0, 1.0, 1.0 - cbar, cbar)
}

/// Periodic orbit of the unimodal `+` branch from a damped Newton solve of
/// `f_+^period(u) = u` started at `seed`.
pub fn unimodal_periodic_orbit(cbar: f64, period: usize, seed: f64) -> Result<AIState> {
    unimodal_periodic_orbit_with(cbar, period, seed, 200, CRITICAL_RADIUS_FACTOR / cbar)
}

pub fn unimodal_periodic_orbit_with(
    cbar: f64,
    period: usize,
    seed: f64,
    max_iter: usize,
    critical_radius: f64,
) -> Result<AIState> {
    if !(cbar > 0.0 && cbar < 1.0) {
        return Err(Error::InvalidInput(format!(
            "cbar = {cbar} is outside (0, 1)"
        )));
    }
    if period == 0 {
        return Err(Error::InvalidInput("period must be positive".into()));
    }
    let top = 1.0 / cbar;
    if !(seed >= 0.0 && seed <= top) {
        return Err(Error::EscapedDomain {
            value: seed,
            lo: 0.0,
            hi: top,
        });
    }
    let coeffs = unimodal_coeffs(cbar);
    let slack = 1e-12 * top;
    let orbit = |u: f64| -> Result<(Vec<f64>, f64, f64)> {
        let mut pts = Vec::with_capacity(period);
        let (mut x, mut d) = (u, 1.0);
        for _ in 0..period {
            if !(x >= -slack && x <= top + slack) {
                return Err(Error::EscapedDomain {
                    value: x,
                    lo: 0.0,
                    hi: top,
                });
            }
            x = x.clamp(0.0, top);
            pts.push(x);
            let y = coeffs.forward_branch(BranchLabel::Plus, x)?;
            d *= (1.0 - 2.0 * cbar * x) / (2.0 * (1.0 - cbar) * y);
            x = y;
        }
        Ok((pts, x - u, d - 1.0))
    };

    let mut u = seed;
    let (mut pts, mut g, mut dg) = orbit(u)?;
    let mut iterations = 0;
    let mut converged = g.abs() <= 1e-14 * (1.0 + u);
    let mut last_change = f64::INFINITY;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut step = if dg.is_finite() && dg != 0.0 {
            -g / dg
        } else {
            -g
        };
        if !step.is_finite() {
            step = -u;
        }
        // halve until the trial point stays in the domain and maps back into it
        let mut accepted = None;
        for _ in 0..60 {
            let trial = u + step;
            if (0.0..=top).contains(&trial) {
                if let Ok(r) = orbit(trial) {
                    if r.1.abs() < g.abs() || step.abs() <= 1e-15 * (1.0 + u) {
                        accepted = Some((trial, r));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((trial, r)) = accepted else {
            return Err(Error::NoConvergence {
                iterations,
                last_change: g.abs(),
                contraction: f64::NAN,
            });
        };
        last_change = (trial - u).abs();
        u = trial;
        (pts, g, dg) = r;
        converged = g.abs() <= 1e-14 * (1.0 + u) || last_change <= 1e-16 * (1.0 + u);
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last_change,
            contraction: f64::NAN,
        });
    }
    let critical = 0.5 / cbar;
    for &x in &pts {
        if (x - critical).abs() < critical_radius {
            return Err(Error::CriticalPointProximity {
                value: x,
                distance: (x - critical).abs(),
            });
        }
    }
    let word = SymbolWord::constant(BranchLabel::Plus, period)?;
    let tol = 1e-12 * (1.0 + top * top);
    let mut state =
        AIState::from_values(coeffs, pts, Some(word), Construction::UnimodalNewton, tol)?;
    state.iterations = iterations;
    Ok(state)
}

/// Result of [`enumerate_periodic_states`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enumeration {
    pub states: Vec<AIState>,
    /// Smallest sup-distance between two states (infinite for a single state).
    pub min_pairwise_distance: f64,
}

/// Runs [`ai_fixed_point`] for every word of the given period, in word order.
pub fn enumerate_periodic_states(
    coeffs: &RelationCoeffs,
    period: usize,
    b: &TrappingSet,
    tol: f64,
    max_iter: usize,
) -> Result<Enumeration> {
    if period > ENUMERATION_CAP {
        return Err(Error::PeriodTooLarge {
            period,
            cap: ENUMERATION_CAP,
        });
    }
    let words = SymbolWord::all_words(period)?;
    let states = words
        .par_iter()
        .map(|w| {
            ai_fixed_point(coeffs, w, b, max_iter, tol).map_err(|e| Error::WordFailed {
                word: w.to_string(),
                source: Box::new(e),
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let min_pairwise_distance = min_pairwise_distance(&states);
    Ok(Enumeration {
        states,
        min_pairwise_distance,
    })
}

pub fn min_pairwise_distance(states: &[AIState]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            min = min.min(states[i].sup_distance(&states[j]));
        }
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hm() -> RelationCoeffs {
        RelationCoeffs::new(-1.0, 0.0, 0.9, 0.1)
    }

    #[test]
    fn word_parsing_and_display() {
        let w: SymbolWord = "+-+".parse().unwrap();
        assert_eq!(w.period(), 3);
        assert_eq!(w.to_string(), "+-+");
        assert_eq!(w.rotate(1).to_string(), "-++");
        assert_eq!(w.flip().to_string(), "-+-");
        assert!("".parse::<SymbolWord>().is_err());
        assert!("+x".parse::<SymbolWord>().is_err());
    }

    #[test]
    fn all_words_order() {
        let ws: Vec<String> = SymbolWord::all_words(2)
            .unwrap()
            .iter()
            .map(|w| w.to_string())
            .collect();
        assert_eq!(ws, ["++", "+-", "-+", "--"]);
    }

    #[test]
    fn pseudo_random_is_reproducible() {
        let a = SymbolWord::pseudo_random(250, 7).unwrap();
        assert_eq!(a, SymbolWord::pseudo_random(250, 7).unwrap());
        assert_ne!(a, SymbolWord::pseudo_random(250, 8).unwrap());
    }

    #[test]
    fn trapping_set_parsing() {
        let b: TrappingSet = "0.5:1, -2:-1".parse().unwrap();
        assert_eq!(b.intervals(), &[(-2.0, -1.0), (0.5, 1.0)]);
        assert!(b.contains(0.7) && !b.contains(0.0));
        assert!("0:1,0.5:2".parse::<TrappingSet>().is_err());
        assert!("1:0".parse::<TrappingSet>().is_err());
        assert!("abc".parse::<TrappingSet>().is_err());
    }

    #[test]
    fn closed_form_counts() {
        let s1 = closed_form_states(ClosedFormCase::SquareOne, 1).unwrap();
        assert_eq!(s1.len(), 2);
        assert_eq!(s1[0].values, vec![1.0]);
        assert_eq!(s1[1].values, vec![-1.0]);
        let z2 = closed_form_states(ClosedFormCase::ZeroMinusOne, 2).unwrap();
        assert_eq!(z2.len(), 4);
        assert!(z2
            .iter()
            .all(|s| s.values.iter().all(|&v| v == 0.0 || v == -1.0)));
        let s4 = closed_form_states(ClosedFormCase::SquareOne, 4).unwrap();
        assert_eq!(s4.len(), 16);
        assert!(s4.iter().all(|s| s.residual == 0.0));
    }

    #[test]
    fn constant_fixed_points() {
        let b = TrappingSet::interval(0.5, 1.5).unwrap();
        let w: SymbolWord = "+".parse().unwrap();
        let s = ai_fixed_point(&hm(), &w, &b, 1000, 1e-13).unwrap();
        assert!((s.values[0] - 1.0).abs() < 1e-12);
        let b = TrappingSet::interval(-1.5, 1.5).unwrap();
        let w: SymbolWord = "-".parse().unwrap();
        let s = ai_fixed_point(&hm(), &w, &b, 1000, 1e-13).unwrap();
        assert!((s.values[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn period_two_matches_bisection_oracle() {
        let b = TrappingSet::interval(-1.5, 1.5).unwrap();
        let w: SymbolWord = "+-".parse().unwrap();
        let s = ai_fixed_point(&hm(), &w, &b, 1000, 1e-13).unwrap();
        // xi_0 = f_+(xi_1), xi_1 = f_-(xi_0): root of h(x) = f_+(f_-(x)) - x on [0, 1.5]
        let c = hm();
        let h = |x: f64| {
            c.forward_branch(
                BranchLabel::Plus,
                c.forward_branch(BranchLabel::Minus, x).unwrap(),
            )
            .unwrap()
                - x
        };
        let (mut lo, mut hi) = (0.0, 1.5);
        assert!(h(lo) * h(hi) < 0.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if h(lo) * h(m) <= 0.0 {
                hi = m;
            } else {
                lo = m;
            }
        }
        let x0 = 0.5 * (lo + hi);
        assert!(s.values[0] > 0.0 && s.values[1] < 0.0);
        assert!((s.values[0] - x0).abs() < 1e-11);
        let x1 = c.forward_branch(BranchLabel::Minus, x0).unwrap();
        assert!((s.values[1] - x1).abs() < 1e-11);
    }

    #[test]
    fn escape_is_reported() {
        let b = TrappingSet::interval(0.0, 0.1).unwrap();
        let w: SymbolWord = "+".parse().unwrap();
        assert!(matches!(
            ai_fixed_point(&hm(), &w, &b, 100, 1e-12),
            Err(Error::EscapedTrappingSet { .. })
        ));
    }

    #[test]
    fn no_convergence_is_reported() {
        let b = TrappingSet::interval(-1.5, 1.5).unwrap();
        let w: SymbolWord = "+-".parse().unwrap();
        assert!(matches!(
            ai_fixed_point(&hm(), &w, &b, 2, 1e-13),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn region_examples() {
        let q = RegionQuery {
            n: 1,
            lambda: 1.05,
            direction: Direction::Forward,
            grid_points: 201,
        };
        let b = TrappingSet::interval(-1.3, 1.3).unwrap();
        let r = region_membership(&hm(), &b, &q).unwrap();
        assert!(r.member && r.invariant && r.margin > 0.0 && !r.rigorous);
        // grid maximization oracle of |f'| = 0.36 |u| / (1.8 sqrt(3.6 - 0.36 u^2))
        let oracle = (0..=2000)
            .map(|i| -1.3 + 2.6 * i as f64 / 2000.0)
            .map(|u: f64| 0.36 * u.abs() / (1.8 * (3.6 - 0.36 * u * u).sqrt()))
            .fold(0.0, f64::max);
        assert!((r.max_derivative - oracle).abs() < 1e-9);

        let full = RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0);
        let b = TrappingSet::interval(-1.1, 1.1).unwrap();
        let r = region_membership(&full, &b, &q).unwrap();
        assert!(r.member);
        assert_eq!(r.max_derivative, 0.0);

        let b = TrappingSet::interval(0.0, 0.1).unwrap();
        let r = region_membership(&hm(), &b, &q).unwrap();
        assert!(!r.member && !r.invariant);
    }

    #[test]
    fn region_errors() {
        let q = RegionQuery {
            n: 1,
            lambda: 1.05,
            direction: Direction::Forward,
            grid_points: 11,
        };
        let b = TrappingSet::interval(-5.0, 5.0).unwrap();
        assert!(matches!(
            region_membership(&hm(), &b, &q),
            Err(Error::NegativeRadicand { .. })
        ));
        let flat = RelationCoeffs::new(-1.0, 0.0, 0.0, 0.5);
        assert!(matches!(
            region_membership(&flat, &TrappingSet::interval(0.0, 1.0).unwrap(), &q),
            Err(Error::DegenerateBranch(_))
        ));
        let bad = RegionQuery { lambda: 0.9, ..q };
        assert!(region_membership(&hm(), &b, &bad).is_err());
    }

    #[test]
    fn backward_region() {
        // E(-1, 0, 0.1, 0.9): mirror image of the forward example
        let c = RelationCoeffs::new(-1.0, 0.0, 0.1, 0.9);
        let q = RegionQuery {
            n: 1,
            lambda: 1.05,
            direction: Direction::Backward,
            grid_points: 201,
        };
        let r = region_membership(&c, &TrappingSet::interval(-1.3, 1.3).unwrap(), &q).unwrap();
        assert!(r.member);
    }

    #[test]
    fn unimodal_examples() {
        let s = unimodal_periodic_orbit(0.9, 1, 0.9).unwrap();
        assert!((s.values[0] - 1.0).abs() < 1e-12);
        let s = unimodal_periodic_orbit(0.9, 1, 0.01).unwrap();
        assert!(s.values[0].abs() < 1e-12);
        let d = unimodal_coeffs(0.9)
            .slope(1.0, 1.0)
            .unwrap()
            .finite()
            .unwrap();
        assert!((d.abs() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unimodal_errors() {
        assert!(unimodal_periodic_orbit(1.2, 1, 0.5).is_err());
        assert!(matches!(
            unimodal_periodic_orbit(0.9, 1, 5.0),
            Err(Error::EscapedDomain { .. })
        ));
        // period-1 orbit at u = 1 with a huge exclusion radius
        assert!(matches!(
            unimodal_periodic_orbit_with(0.9, 1, 0.9, 100, 0.6),
            Err(Error::CriticalPointProximity { .. })
        ));
    }

    #[test]
    fn enumeration() {
        let full = RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0);
        let b = TrappingSet::interval(-1.1, 1.1).unwrap();
        let e = enumerate_periodic_states(&full, 3, &b, 1e-12, 100).unwrap();
        assert_eq!(e.states.len(), 8);
        assert!((e.min_pairwise_distance - 2.0).abs() < 1e-12);

        let b = TrappingSet::interval(-1.5, 1.5).unwrap();
        let e = enumerate_periodic_states(&hm(), 2, &b, 1e-12, 1000).unwrap();
        assert_eq!(e.states.len(), 4);
        assert!(e.min_pairwise_distance > 0.0);

        assert!(matches!(
            enumerate_periodic_states(&hm(), 17, &b, 1e-12, 10),
            Err(Error::PeriodTooLarge { .. })
        ));
        let tight = TrappingSet::interval(0.5, 1.5).unwrap();
        let err = enumerate_periodic_states(&hm(), 1, &tight, 1e-12, 100).unwrap_err();
        assert!(matches!(err, Error::WordFailed { ref word, .. } if word == "-"));
    }
}
