//! The 3D quadratic map
//! `L(x, y, z) = (alpha - sigma y + delta z + a x^2 + b x y + c y^2, x, y)`.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default half-width of the per-step unit-circle exclusion band.
pub const DEFAULT_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub alpha: f64,
    pub sigma: f64,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MapParams {
    /// Builds parameters, checking `a + b + c = 1` within `1e-12`.
    pub fn new(alpha: f64, sigma: f64, delta: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        let p = MapParams {
            alpha,
            sigma,
            delta,
            a,
            b,
            c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.a + self.b + self.c;
        if !((sum - 1.0).abs() <= 1e-12) {
            return Err(Error::InvalidInput(format!(
                "a + b + c = {sum}, expected 1"
            )));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    fn quad(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + self.b * x * y + self.c * y * y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        State3 { x, y, z }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn sup_dist(&self, other: &State3) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    pub fn sup_norm(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

pub fn step(p: &MapParams, s: State3) -> State3 {
    State3 {
        x: p.alpha - p.sigma * s.y + p.delta * s.z + p.quad(s.x, s.y),
        y: s.x,
        z: s.y,
    }
}

pub fn inverse_step(p: &MapParams, s: State3) -> Result<State3> {
    if p.delta == 0.0 {
        return Err(Error::ZeroDelta);
    }
    let (y, z) = (s.y, s.z);
    Ok(State3 {
        x: y,
        y: z,
        z: (s.x - p.alpha + p.sigma * z - p.quad(y, z)) / p.delta,
    })
}

pub fn jacobian_at(p: &MapParams, s: State3) -> Matrix3<f64> {
    Matrix3::new(
        2.0 * p.a * s.x + p.b * s.y,
        -p.sigma + p.b * s.x + 2.0 * p.c * s.y,
        p.delta,
        1.0,
        0.0,
        0.0,
        0.0,
        1.0,
        0.0,
    )
}

/// Sup-norm of `step(orbit[t]) - orbit[t + 1]`, wrapping around when `cyclic`.
pub fn orbit_residual(p: &MapParams, orbit: &[State3], cyclic: bool) -> f64 {
    let n = orbit.len();
    let links = if cyclic { n } else { n.saturating_sub(1) };
    (0..links)
        .map(|t| step(p, orbit[t]).sup_dist(&orbit[(t + 1) % n]))
        .fold(0.0, f64::max)
}

/// Monodromy eigenvalue stored in log-polar form so that products over long
/// orbits never overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    /// `ln |lambda|`; `-inf` for an exact zero.
    pub log_modulus: f64,
    pub arg: f64,
}

impl Eigenvalue {
    /// The complex value; components are infinite or zero when out of range.
    pub fn value(&self) -> Complex<f64> {
        Complex::from_polar(self.log_modulus.exp(), self.arg)
    }

    /// `|lambda|^(1/period)`.
    pub fn per_step_modulus(&self, period: usize) -> f64 {
        (self.log_modulus / period as f64).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonodromySpectrum {
    pub period: usize,
    /// Sorted by decreasing modulus.
    pub eigenvalues: [Eigenvalue; 3],
}

impl MonodromySpectrum {
    pub fn per_step_moduli(&self) -> [f64; 3] {
        self.eigenvalues.map(|e| e.per_step_modulus(self.period))
    }

    /// Smallest distance of a per-step modulus to 1.
    pub fn unit_circle_distance(&self) -> f64 {
        self.per_step_moduli()
            .iter()
            .map(|m| (m - 1.0).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// True when no per-step modulus lies in `[1 - band, 1 + band]`.
    pub fn outside_band(&self, band: f64) -> bool {
        self.per_step_moduli()
            .iter()
            .all(|&m| m < 1.0 - band || m > 1.0 + band)
    }

    /// `sum ln |lambda_i|`, to be compared with `period * ln |delta|`.
    pub fn log_determinant(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.log_modulus).sum()
    }
}

/// Tolerance on the cyclic orbit residual accepted by [`monodromy_spectrum`].
pub fn periodicity_tolerance(orbit: &[State3]) -> f64 {
    let scale = orbit.iter().map(|s| s.sup_norm()).fold(1.0, f64::max);
    1e-6 * scale * scale
}

/// Eigenvalues of the ordered Jacobian product over one period of a cyclic orbit.
///
/// The characteristic polynomial `l^3 - c1 l^2 + c2 l - c3` is assembled from
/// the trace of the product, the trace of its second compound, and
/// `det = delta^N`; each is accumulated with a separate log scale. Roots are
/// then isolated by the Newton polygon of the coefficient magnitudes.
pub fn monodromy_spectrum(p: &MapParams, orbit: &[State3]) -> Result<MonodromySpectrum> {
    if orbit.is_empty() {
        return Err(Error::InvalidInput("empty orbit".into()));
    }
    let residual = orbit_residual(p, orbit, true);
    let tolerance = periodicity_tolerance(orbit);
    if !(residual <= tolerance) {
        return Err(Error::NotPeriodic {
            residual,
            tolerance,
        });
    }
    let n = orbit.len();
    let mut prod = Matrix3::identity();
    let mut log_prod = 0.0;
    let mut comp = Matrix3::identity();
    let mut log_comp = 0.0;
    for s in orbit {
        let j = jacobian_at(p, *s);
        prod = j * prod;
        comp = second_compound(&j) * comp;
        log_prod += renormalize(&mut prod);
        log_comp += renormalize(&mut comp);
    }
    let c1 = LogReal::new(prod.trace(), log_prod);
    let c2 = LogReal::new(comp.trace(), log_comp);
    let c3 = if p.delta == 0.0 {
        LogReal::zero()
    } else {
        LogReal {
            sign: if p.delta < 0.0 && n % 2 == 1 {
                -1.0
            } else {
                1.0
            },
            log: n as f64 * p.delta.abs().ln(),
        }
    };
    // monic: l^3 + k2 l^2 + k1 l + k0
    let coeffs = [c3.neg(), c2, c1.neg(), LogReal::one()];
    let mut roots = log_cubic_roots(&coeffs);
    roots.sort_by(|x, y| y.log_modulus.total_cmp(&x.log_modulus));
    Ok(MonodromySpectrum {
        period: n,
        eigenvalues: [roots[0], roots[1], roots[2]],
    })
}

/// Second compound (2x2 minors, lexicographic index pairs) of a 3x3 matrix.
fn second_compound(m: &Matrix3<f64>) -> Matrix3<f64> {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    Matrix3::from_fn(|r, c| {
        let (i, j) = PAIRS[r];
        let (k, l) = PAIRS[c];
        m[(i, k)] * m[(j, l)] - m[(i, l)] * m[(j, k)]
    })
}

fn renormalize(m: &mut Matrix3<f64>) -> f64 {
    let s = m.amax();
    if s > 0.0 && s.is_finite() {
        *m /= s;
        s.ln()
    } else {
        0.0
    }
}

/// Real number stored as `sign * exp(log)`; `sign = 0` for zero.
#[derive(Debug, Clone, Copy)]
struct LogReal {
    sign: f64,
    log: f64,
}

impl LogReal {
    fn new(mantissa: f64, log_scale: f64) -> Self {
        if mantissa == 0.0 {
            LogReal::zero()
        } else {
            LogReal {
                sign: mantissa.signum(),
                log: mantissa.abs().ln() + log_scale,
            }
        }
    }

    fn zero() -> Self {
        LogReal {
            sign: 0.0,
            log: f64::NEG_INFINITY,
        }
    }

    fn one() -> Self {
        LogReal {
            sign: 1.0,
            log: 0.0,
        }
    }

    fn neg(self) -> Self {
        LogReal {
            sign: -self.sign,
            log: self.log,
        }
    }

    fn scaled(self, shift: f64) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * (self.log - shift).exp()
        }
    }
}

/// Hull edges whose log-slopes differ by less than this are merged.
const EDGE_MERGE_LOG: f64 = 4.0;

/// Roots of `sum_k coeffs[k] l^k` (degree 3, monic) with widely separated
/// magnitudes. Each edge of the upper Newton polygon of `(k, ln|coeffs[k]|)`
/// fixes a scale `s`; the polynomial is rescaled by `l = e^s mu` and the
/// roots with `|mu|` closest to one are attributed to that edge.
fn log_cubic_roots(coeffs: &[LogReal; 4]) -> Vec<Eigenvalue> {
    let mut out = Vec::with_capacity(3);
    let mut lowest = 0;
    while coeffs[lowest].sign == 0.0 {
        out.push(Eigenvalue {
            log_modulus: f64::NEG_INFINITY,
            arg: 0.0,
        });
        lowest += 1;
    }
    let pts: Vec<usize> = (lowest..4).filter(|&k| coeffs[k].sign != 0.0).collect();
    // upper hull from right (k = 3) to left
    let mut hull: Vec<usize> = Vec::new();
    for &k in pts.iter().rev() {
        while hull.len() >= 2 {
            let (i, j) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (coeffs[j].log - coeffs[i].log) * (k as f64 - i as f64)
                - (coeffs[k].log - coeffs[i].log) * (j as f64 - i as f64);
            // remove j if it lies on or below the chord i..k
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    // Edges with close slopes carry roots of comparable modulus (for example a
    // complex pair) and are solved together.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut prev_slope = f64::NAN;
    for w in hull.windows(2) {
        let (hi, lo) = (w[0], w[1]);
        let slope = (coeffs[lo].log - coeffs[hi].log) / (hi - lo) as f64;
        match groups.last_mut() {
            Some(g) if (slope - prev_slope).abs() < EDGE_MERGE_LOG => g.1 = lo,
            _ => groups.push((hi, lo)),
        }
        prev_slope = slope;
    }
    for (hi, lo) in groups {
        let count = hi - lo;
        let s = (coeffs[lo].log - coeffs[hi].log) / count as f64;
        // shift so that the group's end coefficients become O(1)
        let shift = coeffs[hi].log + hi as f64 * s;
        let scaled: Vec<f64> = (0..4)
            .map(|k| coeffs[k].scaled(shift - k as f64 * s))
            .collect();
        for mu in scaled_roots(&scaled[lo..=hi]).into_iter().take(count) {
            let mu = polish_root(&scaled, mu);
            out.push(Eigenvalue {
                log_modulus: s + mu.norm().ln(),
                arg: mu.arg(),
            });
        }
    }
    out
}

fn polish_root(c: &[f64], mut z: Complex<f64>) -> Complex<f64> {
    for _ in 0..8 {
        let (mut p, mut dp) = (Complex::new(0.0, 0.0), Complex::new(0.0, 0.0));
        for &ck in c.iter().rev() {
            dp = dp * z + p;
            p = p * z + ck;
        }
        if dp.norm() == 0.0 {
            break;
        }
        let dz = p / dp;
        if !dz.re.is_finite() || !dz.im.is_finite() {
            break;
        }
        z -= dz;
        if dz.norm() <= 1e-16 * z.norm() {
            break;
        }
    }
    z
}

/// Roots of a polynomial of degree 1..=3 with coefficients in increasing order.
fn scaled_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let Some(deg) = c.iter().rposition(|&x| x != 0.0) else {
        return Vec::new();
    };
    let lead = c[deg];
    match deg {
        0 => Vec::new(),
        1 => vec![Complex::new(-c[0] / lead, 0.0)],
        2 => {
            let m = Matrix2::new(-c[1] / lead, -c[0] / lead, 1.0, 0.0);
            m.complex_eigenvalues().iter().copied().collect()
        }
        3 => {
            let m = Matrix3::new(
                -c[2] / lead,
                -c[1] / lead,
                -c[0] / lead,
                1.0,
                0.0,
                0.0,
                0.0,
                1.0,
                0.0,
            );
            m.complex_eigenvalues().iter().copied().collect()
        }
        _ => Vec::new(),
    }
}

/// Solves the cyclic linearized orbit equation `zeta_{t+1} - J_t zeta_t = eta_t`
/// densely (size `3N`).
pub fn solve_linearized_orbit(
    p: &MapParams,
    orbit: &[State3],
    eta: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    let n = orbit.len();
    if eta.len() != n {
        return Err(Error::InvalidInput(
            "eta length differs from the orbit length".into(),
        ));
    }
    let mut m = DMatrix::<f64>::zeros(3 * n, 3 * n);
    let mut rhs = DVector::<f64>::zeros(3 * n);
    for t in 0..n {
        let j = jacobian_at(p, orbit[t]);
        let next = (t + 1) % n;
        for r in 0..3 {
            m[(3 * t + r, 3 * next + r)] += 1.0;
            for col in 0..3 {
                m[(3 * t + r, 3 * t + col)] -= j[(r, col)];
            }
            rhs[3 * t + r] = eta[t][r];
        }
    }
    let scale = m.amax();
    let lu = m.lu();
    let u = lu.u();
    let min_pivot = u
        .diagonal()
        .iter()
        .map(|d| d.abs())
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * scale) {
        return Err(Error::SingularMatrix {
            pivot_ratio: min_pivot / scale,
        });
    }
    let sol = lu
        .solve(&rhs)
        .ok_or(Error::SingularMatrix { pivot_ratio: 0.0 })?;
    Ok((0..n)
        .map(|t| [sol[3 * t], sol[3 * t + 1], sol[3 * t + 2]])
        .collect())
}
