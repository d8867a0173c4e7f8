//! The limit quadratic relation
//!
//! `E(alpha1, sigma1, a, c) = {(u, v) : alpha1 - sigma1 u + a v^2 + b v u + c u^2 = 0}`
//! with `b = 1 - a - c`, viewed as a multivalued iteration rule `u -> v`.
//! Forward branches solve the quadratic for `v`, backward branches solve it
//! for `u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by [`RelationCoeffs::slope`] to decide that a
/// point lies on the relation: `1e-9 * (1 + u^2 + v^2)`.
pub const ON_RELATION_RTOL: f64 = 1e-9;

/// Relative threshold below which numerator and denominator of the slope are
/// treated as zero.
pub const SLOPE_ZERO_RTOL: f64 = 1e-12;

/// Relative window in which a slightly negative radicand is clamped to zero.
pub const RADICAND_GRAZE_RTOL: f64 = 1e-12;

/// Coefficients of the limit relation. `b` is derived from the normalization
/// `a + b + c = 1` and never stored independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "CoeffsRepr", from = "CoeffsRepr")]
pub struct RelationCoeffs {
    alpha1: f64,
    sigma1: f64,
    a: f64,
    c: f64,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct CoeffsRepr {
    alpha1: f64,
    sigma1: f64,
    a: f64,
    c: f64,
    #[serde(default, skip_deserializing)]
    b: f64,
    #[serde(default, skip_deserializing)]
    discriminant: f64,
}

impl From<RelationCoeffs> for CoeffsRepr {
    fn from(r: RelationCoeffs) -> Self {
        CoeffsRepr {
            alpha1: r.alpha1,
            sigma1: r.sigma1,
            a: r.a,
            c: r.c,
            b: r.b(),
            discriminant: r.discriminant(),
        }
    }
}

impl From<CoeffsRepr> for RelationCoeffs {
    fn from(r: CoeffsRepr) -> Self {
        RelationCoeffs::new(r.alpha1, r.sigma1, r.a, r.c)
    }
}

/// Branch selector. `Plus`/`Minus` pick the sign in front of the square root
/// of the explicit branch formulas; `Principal` is the single-valued branch
/// available when the leading coefficient vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchLabel {
    Plus,
    Minus,
    Principal,
}

impl BranchLabel {
    pub fn sign(self) -> f64 {
        match self {
            BranchLabel::Plus => 1.0,
            BranchLabel::Minus => -1.0,
            BranchLabel::Principal => 0.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BranchLabel::Plus => '+',
            BranchLabel::Minus => '-',
            BranchLabel::Principal => '0',
        }
    }

    fn name(self) -> &'static str {
        match self {
            BranchLabel::Plus => "Plus",
            BranchLabel::Minus => "Minus",
            BranchLabel::Principal => "Principal",
        }
    }
}

/// Slope of the tangent line to the relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeValue {
    Finite(f64),
    PlusInfinity,
    /// Numerator and denominator both vanish (singular point of the conic).
    Undefined,
}

impl SlopeValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            SlopeValue::Finite(m) => Some(m),
            _ => None,
        }
    }

    /// `|m|`, with `+inf` for [`SlopeValue::PlusInfinity`] and NaN when undefined.
    pub fn abs(self) -> f64 {
        match self {
            SlopeValue::Finite(m) => m.abs(),
            SlopeValue::PlusInfinity => f64::INFINITY,
            SlopeValue::Undefined => f64::NAN,
        }
    }
}

impl Serialize for SlopeValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SlopeValue::Finite(m) => s.serialize_f64(*m),
            SlopeValue::PlusInfinity => s.serialize_str("inf"),
            SlopeValue::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// Result of a branch evaluation; `marginal` is set when a slightly negative
/// radicand was clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchEval {
    pub value: f64,
    pub marginal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalCase {
    Case0,
    Case3Plus,
    Case3Minus,
    Case2Plus,
    Case2Minus,
}

/// A relation rescaled to one of the three canonical subspaces. Orbits of
/// `rescaled`, multiplied by `scale`, are orbits of the original relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalForm {
    pub case_label: CanonicalCase,
    pub r: f64,
    pub scale: f64,
    pub rescaled: RelationCoeffs,
}

impl RelationCoeffs {
    pub fn new(alpha1: f64, sigma1: f64, a: f64, c: f64) -> Self {
        RelationCoeffs {
            alpha1,
            sigma1,
            a,
            c,
        }
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        1.0 - self.a - self.c
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn discriminant(&self) -> f64 {
        let b = self.b();
        b * b - 4.0 * self.a * self.c
    }

    fn magnitude(&self) -> f64 {
        1.0_f64
            .max(self.alpha1.abs())
            .max(self.sigma1.abs())
            .max(self.a.abs())
            .max(self.b().abs())
            .max(self.c.abs())
    }

    /// Left-hand side `alpha1 - sigma1 u + a v^2 + b v u + c u^2`.
    pub fn eval_relation(&self, u: f64, v: f64) -> f64 {
        self.alpha1 - self.sigma1 * u + self.a * v * v + self.b() * v * u + self.c * u * u
    }

    /// Radicand of the forward branch formula at `u`.
    pub fn forward_radicand(&self, u: f64) -> f64 {
        self.discriminant() * u * u - 4.0 * self.a * (self.alpha1 - self.sigma1 * u)
    }

    /// Radicand of the backward branch formula at `v`.
    pub fn backward_radicand(&self, v: f64) -> f64 {
        self.discriminant() * v * v - 4.0 * self.c * self.alpha1 + self.sigma1 * self.sigma1
            - 2.0 * self.sigma1 * self.b() * v
    }

    fn clamp_radicand(radicand: f64, scale: f64, at: f64) -> Result<(f64, bool)> {
        if radicand >= 0.0 {
            Ok((radicand, false))
        } else if radicand >= -RADICAND_GRAZE_RTOL * scale {
            Ok((0.0, true))
        } else {
            Err(Error::NegativeRadicand { radicand, at })
        }
    }

    /// Forward iterate `v` of `u` on the selected branch.
    pub fn forward_branch(&self, s: BranchLabel, u: f64) -> Result<f64> {
        self.forward_branch_eval(s, u).map(|e| e.value)
    }

    pub fn forward_branch_eval(&self, s: BranchLabel, u: f64) -> Result<BranchEval> {
        let (a, b) = (self.a, self.b());
        if a == 0.0 && b == 0.0 {
            return Err(Error::DegenerateBranch(
                "a = b = 0 (vertical-line relation)",
            ));
        }
        match s {
            BranchLabel::Plus | BranchLabel::Minus => {
                if a == 0.0 {
                    return Err(Error::InvalidBranch {
                        label: s.name(),
                        reason: "a = 0; use the principal branch",
                    });
                }
                let disc = self.discriminant();
                let radicand = self.forward_radicand(u);
                let scale = 1.0
                    + (disc * u * u).abs()
                    + (4.0 * a * self.alpha1).abs()
                    + (4.0 * a * self.sigma1 * u).abs();
                let (radicand, marginal) = Self::clamp_radicand(radicand, scale, u)?;
                Ok(BranchEval {
                    value: (-b * u + s.sign() * radicand.sqrt()) / (2.0 * a),
                    marginal,
                })
            }
            BranchLabel::Principal => {
                if a != 0.0 {
                    return Err(Error::InvalidBranch {
                        label: s.name(),
                        reason: "principal forward branch requires a = 0",
                    });
                }
                if u == 0.0 {
                    return Err(Error::DivisionByZero("principal forward branch at u = 0"));
                }
                Ok(BranchEval {
                    value: (-self.alpha1 + self.sigma1 * u - self.c * u * u) / (b * u),
                    marginal: false,
                })
            }
        }
    }

    /// Backward iterate `u` of `v` on the selected branch.
    pub fn backward_branch(&self, s: BranchLabel, v: f64) -> Result<f64> {
        self.backward_branch_eval(s, v).map(|e| e.value)
    }

    pub fn backward_branch_eval(&self, s: BranchLabel, v: f64) -> Result<BranchEval> {
        let (b, c) = (self.b(), self.c);
        match s {
            BranchLabel::Plus | BranchLabel::Minus => {
                if c == 0.0 {
                    return Err(Error::InvalidBranch {
                        label: s.name(),
                        reason: "c = 0; use the principal branch",
                    });
                }
                let disc = self.discriminant();
                let radicand = self.backward_radicand(v);
                let scale = 1.0
                    + (disc * v * v).abs()
                    + (4.0 * c * self.alpha1).abs()
                    + self.sigma1 * self.sigma1
                    + (2.0 * self.sigma1 * b * v).abs();
                let (radicand, marginal) = Self::clamp_radicand(radicand, scale, v)?;
                Ok(BranchEval {
                    value: (self.sigma1 - b * v + s.sign() * radicand.sqrt()) / (2.0 * c),
                    marginal,
                })
            }
            BranchLabel::Principal => {
                if c != 0.0 {
                    return Err(Error::InvalidBranch {
                        label: s.name(),
                        reason: "principal backward branch requires c = 0",
                    });
                }
                if b == 0.0 && self.sigma1 == 0.0 {
                    return Err(Error::DegenerateBranch(
                        "c = b = sigma1 = 0 (horizontal-line relation)",
                    ));
                }
                let denom = self.sigma1 - b * v;
                let numer = self.alpha1 + self.a * v * v;
                let thr = SLOPE_ZERO_RTOL * self.magnitude() * (1.0 + v.abs());
                if denom.abs() <= thr {
                    // v = sigma1 / b; only the exceptional relation has a preimage there,
                    // given by the limit of the principal branch.
                    if numer.abs() <= thr * (1.0 + v.abs()) {
                        return Ok(BranchEval {
                            value: -2.0 * self.a * v / b,
                            marginal: true,
                        });
                    }
                    return Err(Error::NoPreimage { v });
                }
                Ok(BranchEval {
                    value: numer / denom,
                    marginal: false,
                })
            }
        }
    }

    /// Tolerance on `|eval_relation|` for a point to count as on the relation.
    pub fn on_relation_tolerance(u: f64, v: f64) -> f64 {
        ON_RELATION_RTOL * (1.0 + u * u + v * v)
    }

    /// Slope `m(u, v) = (sigma1 - b v - 2 c u) / (2 a v + b u)` of the tangent
    /// relation at an on-relation point.
    pub fn slope(&self, u: f64, v: f64) -> Result<SlopeValue> {
        self.slope_with_tolerance(u, v, Self::on_relation_tolerance(u, v))
    }

    pub fn slope_with_tolerance(&self, u: f64, v: f64, tolerance: f64) -> Result<SlopeValue> {
        let residual = self.eval_relation(u, v).abs();
        if !(residual <= tolerance) {
            return Err(Error::NotOnRelation {
                residual,
                tolerance,
            });
        }
        Ok(self.slope_unchecked(u, v))
    }

    /// Slope without the on-relation check.
    pub fn slope_unchecked(&self, u: f64, v: f64) -> SlopeValue {
        let numer = self.slope_numerator(u, v);
        let denom = self.slope_denominator(u, v);
        let thr = SLOPE_ZERO_RTOL * self.magnitude() * (1.0 + u.abs() + v.abs());
        match (numer.abs() < thr, denom.abs() < thr) {
            (true, true) => SlopeValue::Undefined,
            (false, true) => SlopeValue::PlusInfinity,
            _ => SlopeValue::Finite(numer / denom),
        }
    }

    /// `sigma1 - b v - 2 c u`
    pub fn slope_numerator(&self, u: f64, v: f64) -> f64 {
        self.sigma1 - self.b() * v - 2.0 * self.c * u
    }

    /// `2 a v + b u`
    pub fn slope_denominator(&self, u: f64, v: f64) -> f64 {
        2.0 * self.a * v + self.b() * u
    }

    /// Classify and rescale to the canonical subspaces
    /// `{alpha1 = sigma1 = 0}`, `{alpha1 = +-1, sigma1 = r}`, `{alpha1 = 0, sigma1 = +-1}`.
    pub fn rescale_canonical(&self) -> CanonicalForm {
        if self.alpha1 != 0.0 {
            let scale = self.alpha1.abs().sqrt();
            let r = self.sigma1 / scale;
            let case_label = if self.alpha1 > 0.0 {
                CanonicalCase::Case3Plus
            } else {
                CanonicalCase::Case3Minus
            };
            CanonicalForm {
                case_label,
                r,
                scale,
                rescaled: RelationCoeffs::new(self.alpha1.signum(), r, self.a, self.c),
            }
        } else if self.sigma1 != 0.0 {
            let scale = self.sigma1.abs();
            let case_label = if self.sigma1 > 0.0 {
                CanonicalCase::Case2Plus
            } else {
                CanonicalCase::Case2Minus
            };
            CanonicalForm {
                case_label,
                r: self.sigma1.signum(),
                scale,
                rescaled: RelationCoeffs::new(0.0, self.sigma1.signum(), self.a, self.c),
            }
        } else {
            CanonicalForm {
                case_label: CanonicalCase::Case0,
                r: 0.0,
                scale: 1.0,
                rescaled: *self,
            }
        }
    }

    /// One step of the 2D endomorphism
    /// `(u, v) -> (-(alpha1 - sigma1 u + a v^2 + b v u + c u^2) / delta1, u)`.
    pub fn endomorphism_step(&self, delta1: f64, u: f64, v: f64) -> Result<(f64, f64)> {
        if delta1 == 0.0 {
            return Err(Error::DivisionByZero("endomorphism with delta1 = 0"));
        }
        Ok((-self.eval_relation(u, v) / delta1, u))
    }

    /// `L(xi; e_dagger)_t = eval_relation(xi_{t-1}, xi_t)` on a periodic sequence.
    pub fn limit_residual(&self, xi: &[f64]) -> Vec<f64> {
        let n = xi.len();
        (0..n)
            .map(|t| self.eval_relation(xi[(t + n - 1) % n], xi[t]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_examples() {
        assert_eq!(
            RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0).eval_relation(0.3, 1.0),
            0.0
        );
        assert!(close(
            RelationCoeffs::new(-1.0, 0.0, 0.9, 0.1).eval_relation(1.0, 1.0),
            0.0,
            1e-15
        ));
        assert!(close(
            RelationCoeffs::new(0.0, 1.0, 0.1, 0.9).eval_relation(2.0, 0.0),
            1.6,
            1e-15
        ));
    }

    #[test]
    fn derived_b_and_discriminant() {
        let r = RelationCoeffs::new(0.0, 1.0, 0.1, 0.9);
        assert!(close(r.b(), 0.0, 1e-16));
        assert!(close(r.discriminant(), -0.36, 1e-15));
    }

    #[test]
    fn forward_examples() {
        let full = RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0);
        assert_eq!(full.forward_branch(BranchLabel::Plus, 0.7).unwrap(), 1.0);
        let hm = RelationCoeffs::new(-1.0, 0.0, 0.9, 0.1);
        assert!(close(
            hm.forward_branch(BranchLabel::Plus, 1.0).unwrap(),
            1.0,
            1e-14
        ));
        let ell = RelationCoeffs::new(0.0, 1.0, 0.1, 0.9);
        assert!(close(
            ell.forward_branch(BranchLabel::Plus, 1.0).unwrap(),
            1.0,
            1e-12
        ));
    }

    #[test]
    fn forward_errors() {
        let ell = RelationCoeffs::new(0.0, 1.0, 0.1, 0.9);
        assert!(matches!(
            ell.forward_branch(BranchLabel::Plus, -1.0),
            Err(Error::NegativeRadicand { .. })
        ));
        let vertical = RelationCoeffs::new(0.0, -1.0, 0.0, 1.0);
        assert!(matches!(
            vertical.forward_branch(BranchLabel::Plus, 0.0),
            Err(Error::DegenerateBranch(_))
        ));
        let hyper = RelationCoeffs::new(-1.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            hyper.forward_branch(BranchLabel::Principal, 0.0),
            Err(Error::DivisionByZero(_))
        ));
        assert_eq!(
            hyper.forward_branch(BranchLabel::Principal, 2.0).unwrap(),
            0.5
        );
        assert!(matches!(
            hyper.forward_branch(BranchLabel::Plus, 2.0),
            Err(Error::InvalidBranch { .. })
        ));
    }

    #[test]
    fn grazing_radicand_is_clamped() {
        // radicand -0.36 u^2 + 3.6 vanishes at u = sqrt(10)
        let hm = RelationCoeffs::new(-1.0, 0.0, 0.9, 0.1);
        let u = 10f64.sqrt() * (1.0 + 1e-15);
        let e = hm.forward_branch_eval(BranchLabel::Plus, u).unwrap();
        assert!(e.marginal);
        assert_eq!(e.value, hm.forward_branch(BranchLabel::Minus, u).unwrap());
    }

    #[test]
    fn backward_examples() {
        let r = RelationCoeffs::new(0.0, -1.0, 0.0, 1.0);
        assert!(close(
            r.backward_branch(BranchLabel::Plus, 0.4).unwrap(),
            0.0,
            1e-15
        ));
        assert!(close(
            r.backward_branch(BranchLabel::Minus, 0.4).unwrap(),
            -1.0,
            1e-15
        ));
        let hm = RelationCoeffs::new(-1.0, 0.0, 0.9, 0.1);
        assert!(close(
            hm.backward_branch(BranchLabel::Plus, 1.0).unwrap(),
            1.0,
            1e-14
        ));
    }

    #[test]
    fn backward_round_trip_picks_exactly_one_branch() {
        let r = RelationCoeffs::new(-1.0, 0.3, 0.7, 0.2);
        for &u in &[-0.9, -0.2, 0.4, 1.1] {
            for s in [BranchLabel::Plus, BranchLabel::Minus] {
                let Ok(v) = r.forward_branch(s, u) else {
                    continue;
                };
                let hits = [BranchLabel::Plus, BranchLabel::Minus]
                    .iter()
                    .filter(|&&b| {
                        r.backward_branch(b, v)
                            .map(|x| (x - u).abs() < 1e-9)
                            .unwrap_or(false)
                    })
                    .count();
                assert_eq!(hits, 1, "u = {u}, v = {v}");
            }
        }
    }

    #[test]
    fn backward_principal_and_no_preimage() {
        // c = 0, b = 1: u = (alpha1 + a v^2) / (sigma1 - v)
        let r = RelationCoeffs::new(-1.0, 0.5, 0.0, 0.0);
        let u = r.backward_branch(BranchLabel::Principal, 2.0).unwrap();
        assert!(close(r.eval_relation(u, 2.0), 0.0, 1e-14));
        assert!(matches!(
            r.backward_branch(BranchLabel::Principal, 0.5),
            Err(Error::NoPreimage { .. })
        ));
        // exceptional case alpha1 = -a sigma1^2 / b^2
        let ex = RelationCoeffs::new(-0.5, 0.5, 0.5, 0.0);
        let u = ex.backward_branch(BranchLabel::Principal, 1.0).unwrap();
        assert!(close(u, -2.0 * 0.5 * 1.0 / 0.5, 1e-12));
        assert!(close(ex.eval_relation(u, 1.0), 0.0, 1e-12));
        let flat = RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0);
        assert!(matches!(
            flat.backward_branch(BranchLabel::Principal, 1.0),
            Err(Error::DegenerateBranch(_))
        ));
    }

    #[test]
    fn slope_examples() {
        let full = RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0);
        assert_eq!(full.slope(1.0, 1.0).unwrap(), SlopeValue::Finite(0.0));
        let vert = RelationCoeffs::new(0.0, -1.0, 0.0, 1.0);
        assert_eq!(vert.slope(-1.0, 0.2).unwrap(), SlopeValue::PlusInfinity);
        let hyper = RelationCoeffs::new(-1.0, 0.0, 0.0, 0.0);
        assert_eq!(hyper.slope(2.0, 0.5).unwrap(), SlopeValue::Finite(-0.25));
        assert!(matches!(
            hyper.slope(2.0, 0.6),
            Err(Error::NotOnRelation { .. })
        ));
    }

    #[test]
    fn slope_undefined_at_singular_point() {
        // E(0,0,0,0): b = 1, relation u v = 0; origin is the crossing point.
        let cross = RelationCoeffs::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(cross.slope(0.0, 0.0).unwrap(), SlopeValue::Undefined);
    }

    #[test]
    fn canonical_examples() {
        let f = RelationCoeffs::new(-4.0, 2.0, 0.3, 0.2).rescale_canonical();
        assert_eq!(f.case_label, CanonicalCase::Case3Minus);
        assert_eq!(f.r, 1.0);
        assert_eq!(f.scale, 2.0);
        let f = RelationCoeffs::new(0.0, -3.0, 0.3, 0.2).rescale_canonical();
        assert_eq!(f.case_label, CanonicalCase::Case2Minus);
        assert_eq!(f.scale, 3.0);
        let f = RelationCoeffs::new(0.0, 0.0, 0.3, 0.2).rescale_canonical();
        assert_eq!(f.case_label, CanonicalCase::Case0);
        assert_eq!(f.scale, 1.0);
        let f = RelationCoeffs::new(2.0, 0.0, 0.3, 0.2).rescale_canonical();
        assert_eq!(f.case_label, CanonicalCase::Case3Plus);
        let f = RelationCoeffs::new(0.0, 0.5, 0.3, 0.2).rescale_canonical();
        assert_eq!(f.case_label, CanonicalCase::Case2Plus);
    }

    #[test]
    fn endomorphism_examples() {
        let full = RelationCoeffs::new(-1.0, 0.0, 1.0, 0.0);
        assert_eq!(full.endomorphism_step(1.0, 0.0, 1.0).unwrap(), (0.0, 0.0));
        let zero = RelationCoeffs::new(0.0, 0.0, 0.4, 0.1);
        assert_eq!(zero.endomorphism_step(3.0, 0.0, 0.0).unwrap(), (0.0, 0.0));
        let r = RelationCoeffs::new(-1.0, 0.2, 0.6, 0.3);
        let (x1, _) = r.endomorphism_step(1.0, 0.4, 0.9).unwrap();
        let (x2, y2) = r.endomorphism_step(2.0, 0.4, 0.9).unwrap();
        assert!(close(x2, 0.5 * x1, 1e-15));
        assert_eq!(y2, 0.4);
        assert!(matches!(
            r.endomorphism_step(0.0, 0.1, 0.1),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn coeffs_serialize_with_derived_b() {
        let r = RelationCoeffs::new(-1.0, 0.0, 0.9, 0.1);
        let json = serde_json::to_value(r).unwrap();
        assert!(json.get("b").is_some());
        let back: RelationCoeffs = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
